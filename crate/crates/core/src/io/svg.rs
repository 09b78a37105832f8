//! Static line plots with shaded significance bands.

use std::fmt::Write as _;

use crate::iwt::GridInterval;

const PANEL_W: f64 = 640.0;
const PANEL_H: f64 = 200.0;
const MARGIN_L: f64 = 64.0;
const MARGIN_R: f64 = 120.0;
const MARGIN_T: f64 = 28.0;
const MARGIN_B: f64 = 28.0;
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

#[derive(Debug, Clone)]
pub struct Series {
    pub name: String,
    pub values: Vec<f64>,
}

/// Grid intervals found significant at level `alpha`.
#[derive(Debug, Clone)]
pub struct Band {
    pub alpha: f64,
    pub intervals: Vec<GridInterval>,
}

#[derive(Debug, Clone, Default)]
pub struct Panel {
    pub title: String,
    pub series: Vec<Series>,
    pub bands: Vec<Band>,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn value_range(panel: &Panel) -> (f64, f64) {
    let finite = panel.series.iter().flat_map(|s| s.values.iter().copied()).filter(|v| v.is_finite());
    let (lo, hi) = finite.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        return (-1.0, 1.0);
    }
    let pad = if hi > lo { 0.05 * (hi - lo) } else { lo.abs().max(1.0) * 0.5 };
    (lo - pad, hi + pad)
}

/// Renders panels stacked vertically over a shared abscissa `t`.
pub fn render(title: &str, t: &[f64], panels: &[Panel]) -> String {
    let width = PANEL_W;
    let height = MARGIN_T + panels.len() as f64 * PANEL_H + 8.0;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<text x="{:.2}" y="18" text-anchor="middle" font-size="14">{}</text>"#, width / 2.0, escape(title));
    let (t0, t1) = match (t.first(), t.last()) {
        (Some(&a), Some(&b)) if b > a => (a, b),
        (Some(&a), _) => (a - 0.5, a + 0.5),
        _ => (0.0, 1.0),
    };
    let plot_w = width - MARGIN_L - MARGIN_R;
    let plot_h = PANEL_H - MARGIN_T - MARGIN_B;
    let half_step = if t.len() > 1 { (t1 - t0) / (t.len() - 1) as f64 / 2.0 } else { 0.5 };
    for (pi, panel) in panels.iter().enumerate() {
        let top = MARGIN_T + pi as f64 * PANEL_H + MARGIN_T;
        let x = |v: f64| MARGIN_L + (v - t0) / (t1 - t0) * plot_w;
        let (lo, hi) = value_range(panel);
        let y = |v: f64| top + (hi - v) / (hi - lo) * plot_h;
        let _ = writeln!(s, "<g>");
        let _ = writeln!(s, r#"<text x="{MARGIN_L:.2}" y="{:.2}">{}</text>"#, top - 6.0, escape(&panel.title));

        // Wider levels first so stricter ones draw darker on top.
        let mut bands: Vec<&Band> = panel.bands.iter().collect();
        bands.sort_by(|a, b| b.alpha.total_cmp(&a.alpha));
        let n_bands = bands.len();
        for (rank, band) in bands.iter().enumerate() {
            let opacity = if rank + 1 == n_bands { 0.45 } else { 0.18 };
            for iv in &band.intervals {
                let a = x((t[iv.start] - half_step).max(t0));
                let b = x((t[iv.end] + half_step).min(t1));
                let _ = writeln!(
                    s,
                    r##"<rect data-alpha="{}" x="{a:.2}" y="{top:.2}" width="{:.2}" height="{plot_h:.2}" fill="#808080" fill-opacity="{opacity}"/>"##,
                    band.alpha,
                    b - a
                );
            }
        }

        let _ = writeln!(
            s,
            r#"<rect x="{MARGIN_L:.2}" y="{top:.2}" width="{plot_w:.2}" height="{plot_h:.2}" fill="none" stroke="black"/>"#
        );
        if lo < 0.0 && hi > 0.0 {
            let _ = writeln!(
                s,
                r##"<line x1="{MARGIN_L:.2}" y1="{0:.2}" x2="{1:.2}" y2="{0:.2}" stroke="#999" stroke-dasharray="4 3"/>"##,
                y(0.0),
                MARGIN_L + plot_w
            );
        }
        for (v, anchor_y) in [(hi, top + 10.0), (lo, top + plot_h)] {
            let _ = writeln!(s, r#"<text x="{:.2}" y="{anchor_y:.2}" text-anchor="end">{v:.3e}</text>"#, MARGIN_L - 4.0);
        }
        for (v, anchor) in [(t0, "start"), (t1, "end")] {
            let _ = writeln!(
                s,
                r#"<text x="{:.2}" y="{:.2}" text-anchor="{anchor}">{v}</text>"#,
                x(v),
                top + plot_h + 14.0
            );
        }
        for (k, series) in panel.series.iter().enumerate() {
            let color = PALETTE[k % PALETTE.len()];
            // Non-finite values break the line.
            let mut segments: Vec<Vec<String>> = vec![Vec::new()];
            for (tv, v) in t.iter().zip(&series.values) {
                if v.is_finite() {
                    segments.last_mut().unwrap().push(format!("{:.2},{:.2}", x(*tv), y(*v)));
                } else if !segments.last().unwrap().is_empty() {
                    segments.push(Vec::new());
                }
            }
            for seg in segments.iter().filter(|s| !s.is_empty()) {
                let _ = writeln!(
                    s,
                    r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
                    seg.join(" ")
                );
            }
            let ly = top + 12.0 + 14.0 * k as f64;
            let lx = MARGIN_L + plot_w + 8.0;
            let _ = writeln!(
                s,
                r#"<line x1="{lx:.2}" y1="{0:.2}" x2="{1:.2}" y2="{0:.2}" stroke="{color}" stroke-width="2"/><text x="{2:.2}" y="{3:.2}">{4}</text>"#,
                ly - 4.0,
                lx + 16.0,
                lx + 20.0,
                ly,
                escape(&series.name)
            );
        }
        let _ = writeln!(s, "</g>");
    }
    s.push_str("</svg>\n");
    s
}
