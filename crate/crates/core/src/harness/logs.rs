use std::fs::{self, File, OpenOptions};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use super::model::Model;
use crate::error::{Error, Result};

pub const CSV_HEADER: [&str; 7] = ["epoch", "batch", "cost", "accuracy", "r_str", "r_jac", "wall_ms"];

/// One CSV row. Batch rows carry the batch cost; evaluation rows (one per
/// epoch, `batch` empty) carry the test accuracy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub epoch: usize,
    pub batch: Option<usize>,
    pub cost: Option<f64>,
    pub accuracy: Option<f64>,
    pub r_str: Option<f64>,
    pub r_jac: Option<f64>,
    pub wall_ms: u128,
}

impl MetricsRecord {
    pub fn is_eval(&self) -> bool {
        self.batch.is_none()
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Append-only CSV sink with the fixed header.
pub struct MetricsWriter {
    writer: csv::Writer<File>,
}

impl MetricsWriter {
    /// Creates (or appends to) `path`; the header is written for new files.
    pub fn open(path: &Path) -> Result<Self> {
        let fresh = !path.exists() || fs::metadata(path).map_err(io_err(path))?.len() == 0;
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(io_err(path))?;
        let mut writer = csv::WriterBuilder::new().has_headers(false).from_writer(file);
        if fresh {
            writer.write_record(CSV_HEADER)?;
        }
        Ok(Self { writer })
    }

    pub fn write(&mut self, r: &MetricsRecord) -> Result<()> {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        self.writer.write_record([
            r.epoch.to_string(),
            r.batch.map(|b| b.to_string()).unwrap_or_default(),
            opt(r.cost),
            opt(r.accuracy),
            opt(r.r_str),
            opt(r.r_jac),
            r.wall_ms.to_string(),
        ])?;
        self.writer.flush().map_err(|e| Error::Csv(e.into()))
    }
}

pub fn read_metrics(path: &Path) -> Result<Vec<MetricsRecord>> {
    let mut reader = csv::Reader::from_path(path)?;
    let headers = reader.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != CSV_HEADER {
        return Err(Error::Config(format!("{}: unexpected CSV header", path.display())));
    }
    let num = |s: &str| -> Result<Option<f64>> {
        if s.is_empty() {
            Ok(None)
        } else {
            s.parse().map(Some).map_err(|_| Error::Config(format!("bad number {s:?}")))
        }
    };
    let mut out = Vec::new();
    for row in reader.records() {
        let row = row?;
        let int = |s: &str| s.parse::<u128>().map_err(|_| Error::Config(format!("bad integer {s:?}")));
        out.push(MetricsRecord {
            epoch: int(&row[0])? as usize,
            batch: if row[1].is_empty() { None } else { Some(int(&row[1])? as usize) },
            cost: num(&row[2])?,
            accuracy: num(&row[3])?,
            r_str: num(&row[4])?,
            r_jac: num(&row[5])?,
            wall_ms: int(&row[6])?,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamShape {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
}

/// Parameter dump with a shape header; floats round-trip exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: u32,
    pub shapes: Vec<ParamShape>,
    pub model: Model,
}

impl Checkpoint {
    pub fn new(model: Model) -> Self {
        let shapes = model
            .gradient_layout()
            .iter()
            .map(|(name, m)| ParamShape {
                name: name.to_owned(),
                rows: m.nrows(),
                cols: m.ncols(),
            })
            .collect();
        Self {
            format: 1,
            shapes,
            model,
        }
    }
}

pub fn save_checkpoint(path: &Path, model: &Model) -> Result<()> {
    let json = serde_json::to_vec(&Checkpoint::new(model.clone()))?;
    fs::write(path, json).map_err(io_err(path))
}

pub fn load_checkpoint(path: &Path) -> Result<Model> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    let ck: Checkpoint = serde_json::from_slice(&bytes)?;
    let expected = Checkpoint::new(ck.model.clone()).shapes;
    if expected != ck.shapes {
        return Err(Error::Config(format!(
            "{}: shape header does not match the parameters",
            path.display()
        )));
    }
    Ok(ck.model)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalMetrics {
    pub test_accuracy: f64,
    pub cumulative_loss: f64,
    pub r_str: Option<f64>,
    pub epochs_completed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config: RunConfig,
    pub seed: u64,
    pub version: String,
    pub metrics_file: PathBuf,
    pub checkpoint_file: PathBuf,
    pub final_metrics: FinalMetrics,
}

pub fn write_manifest(path: &Path, m: &Manifest) -> Result<()> {
    let json = serde_json::to_string_pretty(m)?;
    fs::write(path, json).map_err(io_err(path))
}

pub fn read_manifest(path: &Path) -> Result<Manifest> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    Ok(serde_json::from_slice(&bytes)?)
}
