//! CSV tables exchanged between stages. Floats are written in their
//! shortest round-trip form so re-reading is exact.

use std::path::Path;

use crate::error::{Error, Result};
use crate::metrics::DiceReport;
use crate::radiomics::FeatureRow;
use crate::survival::{bucketize, SurvivalBucket};

fn csv_err(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(source) => Error::io(path, source),
        other => Error::Format(format!("{}: {other:?}", path.display())),
    }
}

fn writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    csv::Writer::from_path(path).map_err(|e| csv_err(path, e))
}

fn reader(path: &Path) -> Result<csv::Reader<std::fs::File>> {
    csv::Reader::from_path(path).map_err(|e| csv_err(path, e))
}

fn parse_f64(path: &Path, field: &str, what: &str) -> Result<f64> {
    field
        .trim()
        .parse::<f64>()
        .map_err(|_| Error::Format(format!("{}: {what} value {field:?} is not a number", path.display())))
}

/// Patient ids with one numeric row each, plus the column names.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureTable {
    pub names: Vec<String>,
    pub patient_ids: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl FeatureTable {
    pub fn from_rows(names: Vec<String>, rows: &[FeatureRow]) -> Self {
        Self {
            names,
            patient_ids: rows.iter().map(|r| r.patient_id.clone()).collect(),
            rows: rows.iter().map(|r| r.values.clone()).collect(),
        }
    }

    pub fn row_of(&self, patient_id: &str) -> Option<&[f64]> {
        self.patient_ids
            .iter()
            .position(|p| p == patient_id)
            .map(|i| self.rows[i].as_slice())
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = writer(path)?;
        let header = std::iter::once("patient_id").chain(self.names.iter().map(String::as_str));
        w.write_record(header).map_err(|e| csv_err(path, e))?;
        for (id, row) in self.patient_ids.iter().zip(&self.rows) {
            let mut rec = Vec::with_capacity(row.len() + 1);
            rec.push(id.clone());
            rec.extend(row.iter().map(|v| v.to_string()));
            w.write_record(&rec).map_err(|e| csv_err(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut r = reader(path)?;
        let header = r.headers().map_err(|e| csv_err(path, e))?.clone();
        if header.get(0) != Some("patient_id") {
            return Err(Error::Format(format!("{}: first column must be patient_id", path.display())));
        }
        let names: Vec<String> = header.iter().skip(1).map(String::from).collect();
        let mut table = Self {
            names,
            patient_ids: Vec::new(),
            rows: Vec::new(),
        };
        for rec in r.records() {
            let rec = rec.map_err(|e| csv_err(path, e))?;
            table.patient_ids.push(rec[0].to_string());
            let row = rec
                .iter()
                .skip(1)
                .zip(&table.names)
                .map(|(f, name)| parse_f64(path, f, name))
                .collect::<Result<Vec<_>>>()?;
            table.rows.push(row);
        }
        Ok(table)
    }
}

/// `(patient_id, survival_days)` pairs.
pub fn write_targets(path: impl AsRef<Path>, targets: &[(String, f64)]) -> Result<()> {
    let path = path.as_ref();
    let mut w = writer(path)?;
    w.write_record(["patient_id", "survival_days"]).map_err(|e| csv_err(path, e))?;
    for (id, days) in targets {
        w.write_record([id.clone(), days.to_string()]).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_targets(path: impl AsRef<Path>) -> Result<Vec<(String, f64)>> {
    let path = path.as_ref();
    let mut r = reader(path)?;
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        if rec.len() < 2 {
            return Err(Error::Format(format!("{}: short targets row", path.display())));
        }
        out.push((rec[0].to_string(), parse_f64(path, &rec[1], "survival_days")?));
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub patient_id: String,
    pub days: f64,
    pub bucket: SurvivalBucket,
}

impl Prediction {
    pub fn new(patient_id: impl Into<String>, days: f64) -> Result<Self> {
        Ok(Self {
            patient_id: patient_id.into(),
            days,
            bucket: bucketize(days.max(0.0))?,
        })
    }
}

pub fn write_predictions(path: impl AsRef<Path>, preds: &[Prediction]) -> Result<()> {
    let path = path.as_ref();
    let mut w = writer(path)?;
    w.write_record(["patient_id", "predicted_days", "bucket"])
        .map_err(|e| csv_err(path, e))?;
    for p in preds {
        w.write_record([p.patient_id.clone(), p.days.to_string(), p.bucket.name().to_string()])
            .map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_predictions(path: impl AsRef<Path>) -> Result<Vec<Prediction>> {
    let path = path.as_ref();
    let mut r = reader(path)?;
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        out.push(Prediction::new(&rec[0], parse_f64(path, &rec[1], "predicted_days")?)?);
    }
    Ok(out)
}

/// One Dice row per study. Each entry of `columns` names one report group and
/// suffixes its region headers; an empty name leaves them bare.
pub fn write_dice_table(path: impl AsRef<Path>, columns: &[&str], rows: &[(String, Vec<DiceReport>)]) -> Result<()> {
    let path = path.as_ref();
    let mut w = writer(path)?;
    let mut header = vec!["patient_id".to_string()];
    for c in columns {
        for r in ["whole", "core", "active"] {
            header.push(if c.is_empty() { r.to_string() } else { format!("{r}_{c}") });
        }
    }
    w.write_record(&header).map_err(|e| csv_err(path, e))?;
    for (id, reports) in rows {
        let mut rec = vec![id.clone()];
        for d in reports {
            rec.extend([d.whole, d.core, d.active].iter().map(|v| v.to_string()));
        }
        w.write_record(&rec).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
