use std::collections::HashMap;
use std::io::Read;
use std::path::Path;

use crate::design::RunLabel;

use super::IoError;

pub const RUN_TABLE_HEADER: [&str; 4] = ["model", "run_label", "t", "value"];

/// Observations of one `(model, run_label)` pair, in file order.
#[derive(Debug, Clone, PartialEq)]
pub struct RawSeries {
    pub model_id: String,
    pub run_label: RunLabel,
    pub t: Vec<f64>,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RawRunTable {
    /// In order of first appearance.
    pub series: Vec<RawSeries>,
}

impl RawRunTable {
    pub fn is_empty(&self) -> bool {
        self.series.is_empty()
    }

    /// Factor names referenced by `only:` / `except:` labels, first appearance first.
    pub fn factor_names(&self) -> Vec<String> {
        let mut names: Vec<String> = Vec::new();
        for s in &self.series {
            if let RunLabel::Only(f) | RunLabel::Except(f) = &s.run_label {
                if !names.contains(f) {
                    names.push(f.clone());
                }
            }
        }
        names
    }

    pub fn model_ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = Vec::new();
        for s in &self.series {
            if !ids.contains(&s.model_id) {
                ids.push(s.model_id.clone());
            }
        }
        ids
    }

    /// Smallest and largest observation time.
    pub fn time_range(&self) -> Option<(f64, f64)> {
        let mut it = self.series.iter().flat_map(|s| s.t.iter().copied());
        let first = it.next()?;
        Some(it.fold((first, first), |(lo, hi), t| (lo.min(t), hi.max(t))))
    }
}

pub fn read_run_table(path: &Path) -> Result<RawRunTable, IoError> {
    let file = std::fs::File::open(path)
        .map_err(|source| IoError::Io { path: path.to_path_buf(), source })?;
    read_run_table_from(file)
}

/// Parses a long-format table. Label membership in a concrete design is
/// checked later, once the factor set is known.
pub fn read_run_table_from<R: Read>(reader: R) -> Result<RawRunTable, IoError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).flexible(true).trim(csv::Trim::All).from_reader(reader);
    let mut records = rdr.records();
    let header = match records.next() {
        None => return Err(IoError::Parse { row: 1, message: "missing header".into() }),
        Some(h) => h?,
    };
    if header.iter().collect::<Vec<_>>() != RUN_TABLE_HEADER {
        return Err(IoError::Parse {
            row: 1,
            message: format!(
                "header must be exactly `{}`, got `{}`",
                RUN_TABLE_HEADER.join(","),
                header.iter().collect::<Vec<_>>().join(",")
            ),
        });
    }
    let mut table = RawRunTable::default();
    let mut index: HashMap<(String, RunLabel), usize> = HashMap::new();
    for rec in records {
        let rec = rec?;
        let row = rec.position().map_or(0, |p| p.line());
        let parse_err = |message: String| IoError::Parse { row, message };
        if rec.len() != 4 {
            return Err(parse_err(format!("expected 4 fields, found {}", rec.len())));
        }
        let model = &rec[0];
        if model.is_empty() {
            return Err(parse_err("empty model id".into()));
        }
        let label: RunLabel = rec[1].parse().map_err(|_| IoError::Vocabulary {
            row,
            label: rec[1].to_string(),
            allowed: "base, full, only:<factor>, except:<factor>".into(),
        })?;
        let number = |i: usize, name: &str| -> Result<f64, IoError> {
            match rec[i].parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(parse_err(format!("`{name}` is not a finite number: `{}`", &rec[i]))),
            }
        };
        let t = number(2, "t")?;
        let value = number(3, "value")?;
        let key = (model.to_string(), label.clone());
        let slot = *index.entry(key).or_insert_with(|| {
            table.series.push(RawSeries {
                model_id: model.to_string(),
                run_label: label.clone(),
                t: Vec::new(),
                values: Vec::new(),
            });
            table.series.len() - 1
        });
        let series = &mut table.series[slot];
        if let Some(&prev) = series.t.last() {
            if t <= prev {
                return Err(parse_err(format!(
                    "t = {t} does not increase after {prev} for model `{model}`, run `{label}`"
                )));
            }
        }
        series.t.push(t);
        series.values.push(value);
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_only_is_empty() {
        let t = read_run_table_from("model,run_label,t,value\n".as_bytes()).unwrap();
        assert!(t.is_empty());
        assert_eq!(t.time_range(), None);
    }

    #[test]
    fn groups_rows_by_series() {
        let text = "model,run_label,t,value\nA,base,0,1\nA,only:x,0,2\nA,base,1,3\nB,except:y,0,4\n";
        let t = read_run_table_from(text.as_bytes()).unwrap();
        assert_eq!(t.series.len(), 3);
        assert_eq!(t.series[0].t, vec![0.0, 1.0]);
        assert_eq!(t.series[0].values, vec![1.0, 3.0]);
        assert_eq!(t.factor_names(), ["x", "y"]);
        assert_eq!(t.model_ids(), ["A", "B"]);
        assert_eq!(t.time_range(), Some((0.0, 1.0)));
    }

    #[test]
    fn unknown_label_cites_vocabulary() {
        let text = "model,run_label,t,value\nA,base,0,1\nA,shifted:FF,0,2\n";
        match read_run_table_from(text.as_bytes()).unwrap_err() {
            IoError::Vocabulary { row, label, allowed } => {
                assert_eq!(row, 3);
                assert_eq!(label, "shifted:FF");
                assert!(allowed.contains("only:<factor>"));
            }
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn schema_violations() {
        let bad = |s: &str| read_run_table_from(s.as_bytes()).unwrap_err();
        assert!(matches!(bad("model,label,t,value\n"), IoError::Parse { row: 1, .. }));
        assert!(matches!(bad(""), IoError::Parse { row: 1, .. }));
        assert!(matches!(bad("model,run_label,t,value\nA,base,x,1\n"), IoError::Parse { row: 2, .. }));
        assert!(matches!(
            bad("model,run_label,t,value\nA,base,1,1\nA,base,1,2\n"),
            IoError::Parse { row: 3, .. }
        ));
        assert!(matches!(bad("model,run_label,t,value\nA,base,0,nan\n"), IoError::Parse { row: 2, .. }));
    }
}
