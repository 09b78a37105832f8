use std::collections::BTreeMap;

use fsens_core::design::{build_plan, ContrastSet, InputFactor, RunLabel};
use fsens_core::fcsi::{compute_indices, full_decomposition, CornerTable, DiscreteProductMeasure};
use fsens_core::spline::TimeGrid;
use fsens_core::synthetic::{generate_ensemble, Polynomial, SyntheticModelSpec};
use proptest::prelude::*;

const G: usize = 3;

fn grid() -> TimeGrid {
    TimeGrid::new((0..G).map(|k| k as f64).collect()).unwrap()
}

fn names(p: usize) -> Vec<String> {
    (0..p).map(|i| format!("x{i}")).collect()
}

/// Run values read off a corner table; `flip` swaps reference and shifted levels.
fn runs_from_corners(corners: &CornerTable, p: usize, flip: bool) -> BTreeMap<RunLabel, Vec<f64>> {
    let at = |shifted: &dyn Fn(usize) -> bool| {
        let c: Vec<usize> = (0..p).map(|i| usize::from(shifted(i) != flip)).collect();
        corners.get(&c).to_vec()
    };
    let mut values = BTreeMap::new();
    values.insert(RunLabel::Base, at(&|_| false));
    values.insert(RunLabel::Full, at(&|_| true));
    for (i, f) in names(p).into_iter().enumerate() {
        values.insert(RunLabel::Only(f.clone()), at(&|j| j == i));
        values.insert(RunLabel::Except(f), at(&|j| j != i));
    }
    values
}

fn corner_strategy() -> impl Strategy<Value = (usize, Vec<f64>)> {
    (1usize..=5).prop_flat_map(|p| (Just(p), prop::collection::vec(-10.0f64..10.0, (1 << p) * G)))
}

fn table(p: usize, values: &[f64]) -> CornerTable {
    CornerTable::from_fn(vec![2; p], |c| {
        let idx: usize = c.iter().enumerate().map(|(i, &l)| l << i).sum();
        values[idx * G..(idx + 1) * G].to_vec()
    })
    .unwrap()
}

proptest! {
    #[test]
    fn label_count_law(p in 1usize..10) {
        let plan = build_plan(names(p).into_iter().map(|n| InputFactor::named(n).unwrap()).collect()).unwrap();
        prop_assert_eq!(plan.run_labels().len(), 2 * p + 2);
        let values: BTreeMap<RunLabel, Vec<f64>> =
            plan.run_labels().iter().map(|l| (l.clone(), vec![1.0; G])).collect();
        let set = ContrastSet::from_values("m", grid(), names(p), &values).unwrap();
        prop_assert_eq!(set.len(), 2 * p + 1);
    }

    #[test]
    fn swapping_levels_negates_contrasts((p, values) in corner_strategy()) {
        let corners = table(p, &values);
        let fwd = ContrastSet::from_values("m", grid(), names(p), &runs_from_corners(&corners, p, false)).unwrap();
        let rev = ContrastSet::from_values("m", grid(), names(p), &runs_from_corners(&corners, p, true)).unwrap();
        let neg = |v: &[f64]| v.iter().map(|x| -x).collect::<Vec<_>>();
        prop_assert_eq!(&rev.total_delta, &neg(&fwd.total_delta));
        for i in 0..p {
            // Shifting i alone from the swapped base undoes the all-but-i change.
            prop_assert_eq!(&rev.first_order[i], &neg(&fwd.total_order[i]));
            prop_assert_eq!(&rev.total_order[i], &neg(&fwd.first_order[i]));
        }
    }

    #[test]
    fn decomposition_reproduces_total_change((p, values) in corner_strategy()) {
        let corners = table(p, &values);
        let measure = DiscreteProductMeasure::dirac(p, 0.0, 1.0);
        let dec = full_decomposition(&corners, &measure).unwrap();
        let set = ContrastSet::from_values("m", grid(), names(p), &runs_from_corners(&corners, p, false)).unwrap();
        let idx = compute_indices(&set);
        let top = vec![1; p];
        for k in 0..G {
            let sum: f64 = (1..dec.n_terms()).map(|m| dec.term(m, &top)[k]).sum();
            prop_assert!((sum - idx.total_delta[k]).abs() < 1e-10);
        }
        prop_assert!(dec.max_zero_mean_violation(&measure) < 1e-10);
        prop_assert!(dec.max_inner_product(&measure) < 1e-10);
        for i in 0..p {
            let total = dec.total_effect(i, &top);
            for k in 0..G {
                prop_assert!((total[k] - idx.phi_t[i][k]).abs() < 1e-10);
                prop_assert!((dec.term(1 << i, &top)[k] - idx.phi1[i][k]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn orthogonality_under_uniform_measure((p, values) in corner_strategy()) {
        let measure = DiscreteProductMeasure::uniform_two_level(p, -1.0, 1.0);
        let dec = full_decomposition(&table(p, &values), &measure).unwrap();
        prop_assert!(dec.max_zero_mean_violation(&measure) < 1e-10);
        prop_assert!(dec.max_inner_product(&measure) < 1e-10);
    }

    #[test]
    fn single_input_collapse(v in prop::collection::vec(-5.0f64..5.0, 2 * G)) {
        let corners = table(1, &v);
        let set = ContrastSet::from_values("m", grid(), names(1), &runs_from_corners(&corners, 1, false)).unwrap();
        let idx = compute_indices(&set);
        prop_assert_eq!(&idx.phi1[0], &idx.phi_t[0]);
        prop_assert_eq!(&idx.phi1[0], &idx.total_delta);
    }

    #[test]
    fn synthetic_corners_match_effects(
        g in prop::collection::vec(prop::collection::vec(-2.0f64..2.0, 1..4), 3),
        h in prop::collection::vec(-2.0f64..2.0, 3),
    ) {
        let mut spec = SyntheticModelSpec::additive(g.into_iter().map(Polynomial::new).collect());
        for (k, (i, j)) in [(0, 1), (0, 2), (1, 2)].into_iter().enumerate() {
            spec = spec.with_interaction(i, j, Polynomial::new(vec![h[k], 0.5]));
        }
        let grid = TimeGrid::new(vec![0.0, 0.5, 1.0]).unwrap();
        let dec = full_decomposition(&spec.corner_table(&grid).unwrap(), &DiscreteProductMeasure::dirac(3, 0.0, 1.0)).unwrap();
        let ens = generate_ensemble(&spec, &grid, 0).unwrap();
        let top = [1; 3];
        for (k, &t) in grid.points().iter().enumerate() {
            for i in 0..3 {
                prop_assert!((dec.term(1 << i, &top)[k] - spec.main_effects[i].eval(t)).abs() < 1e-10);
                prop_assert!((ens.truth.phi1[i][k] - spec.main_effects[i].eval(t)).abs() < 1e-10);
            }
            for (&(i, j), hij) in &spec.interactions {
                prop_assert!((dec.term((1 << i) | (1 << j), &top)[k] - hij.eval(t)).abs() < 1e-10);
            }
            prop_assert!(dec.term(0b111, &top)[k].abs() < 1e-10);
        }
    }
}
