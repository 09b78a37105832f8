use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Read};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::fcsi::{NormalizedIndexSet, SensitivityIndexSet};

use super::IoError;

/// 17 significant digits, enough to reproduce every `f64` exactly.
pub fn format_value(v: f64) -> String {
    format!("{v:.16e}")
}

pub(crate) struct CsvSink {
    path: PathBuf,
    writer: csv::Writer<BufWriter<File>>,
}

impl CsvSink {
    pub(crate) fn create(path: &Path, header: &[&str]) -> Result<Self, IoError> {
        let file =
            File::create(path).map_err(|source| IoError::Io { path: path.to_path_buf(), source })?;
        let mut writer = csv::Writer::from_writer(BufWriter::new(file));
        writer.write_record(header)?;
        Ok(Self { path: path.to_path_buf(), writer })
    }

    pub(crate) fn row<I, S>(&mut self, fields: I) -> Result<(), IoError>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        self.writer.write_record(fields)?;
        Ok(())
    }

    pub(crate) fn finish(mut self) -> Result<PathBuf, IoError> {
        self.writer.flush().map_err(|source| IoError::Io { path: self.path.clone(), source })?;
        Ok(self.path)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IndexKind {
    FirstOrder,
    TotalOrder,
    Interaction,
    TotalDelta,
}

impl fmt::Display for IndexKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            IndexKind::FirstOrder => "phi1",
            IndexKind::TotalOrder => "phiT",
            IndexKind::Interaction => "phiI",
            IndexKind::TotalDelta => "delta",
        })
    }
}

impl FromStr for IndexKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "phi1" => Ok(IndexKind::FirstOrder),
            "phiT" => Ok(IndexKind::TotalOrder),
            "phiI" => Ok(IndexKind::Interaction),
            "delta" => Ok(IndexKind::TotalDelta),
            _ => Err(format!("unknown index `{s}`")),
        }
    }
}

/// One row of an index table.
#[derive(Debug, Clone, PartialEq)]
pub struct IndexRecord {
    pub model_id: String,
    pub kind: IndexKind,
    pub input: Option<String>,
    pub t: f64,
    pub value: f64,
}

pub(crate) const INDEX_HEADER: [&str; 5] = ["model", "index", "input", "t", "value"];

fn index_rows<'a>(
    model: &'a str,
    grid: &'a [f64],
    factors: &'a [String],
    blocks: [(IndexKind, &'a [Vec<f64>]); 3],
) -> impl Iterator<Item = [String; 5]> + 'a {
    factors.iter().enumerate().flat_map(move |(i, f)| {
        blocks.into_iter().flat_map(move |(kind, values)| {
            grid.iter().zip(&values[i]).map(move |(t, v)| {
                [model.to_string(), kind.to_string(), f.clone(), format_value(*t), format_value(*v)]
            })
        })
    })
}

pub(crate) fn write_index_table(path: &Path, sets: &[SensitivityIndexSet]) -> Result<PathBuf, IoError> {
    let mut sink = CsvSink::create(path, &INDEX_HEADER)?;
    for s in sets {
        let blocks = [
            (IndexKind::FirstOrder, s.phi1.as_slice()),
            (IndexKind::TotalOrder, s.phi_t.as_slice()),
            (IndexKind::Interaction, s.phi_i.as_slice()),
        ];
        for row in index_rows(&s.model_id, s.grid.points(), &s.factors, blocks) {
            sink.row(&row)?;
        }
        for (t, v) in s.grid.points().iter().zip(&s.total_delta) {
            sink.row([s.model_id.as_str(), "delta", "", &format_value(*t), &format_value(*v)])?;
        }
    }
    sink.finish()
}

/// Masked points are written as `NaN`.
pub(crate) fn write_normalized_table(
    path: &Path,
    sets: &[NormalizedIndexSet],
) -> Result<PathBuf, IoError> {
    let mut sink = CsvSink::create(path, &INDEX_HEADER)?;
    for s in sets {
        let blocks = [
            (IndexKind::FirstOrder, s.phi1.as_slice()),
            (IndexKind::TotalOrder, s.phi_t.as_slice()),
            (IndexKind::Interaction, s.phi_i.as_slice()),
        ];
        for row in index_rows(&s.model_id, s.grid.points(), &s.factors, blocks) {
            sink.row(&row)?;
        }
    }
    sink.finish()
}

pub fn read_index_table<R: Read>(reader: R) -> Result<Vec<IndexRecord>, IoError> {
    let mut rdr = csv::Reader::from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(String::from).collect();
    if header != INDEX_HEADER {
        return Err(IoError::Parse { row: 1, message: format!("unexpected header {header:?}") });
    }
    rdr.records()
        .map(|rec| {
            let rec = rec?;
            let row = rec.position().map_or(0, |p| p.line());
            let err = |message: String| IoError::Parse { row, message };
            if rec.len() != 5 {
                return Err(err(format!("expected 5 fields, found {}", rec.len())));
            }
            let num = |i: usize| rec[i].parse::<f64>().map_err(|_| err(format!("bad number `{}`", &rec[i])));
            Ok(IndexRecord {
                model_id: rec[0].to_string(),
                kind: rec[1].parse().map_err(err)?,
                input: (!rec[2].is_empty()).then(|| rec[2].to_string()),
                t: num(3)?,
                value: num(4)?,
            })
        })
        .collect()
}
