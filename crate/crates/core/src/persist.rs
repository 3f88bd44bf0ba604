//! Model files.
//!
//! A model is stored as pretty-printed JSON holding the log-domain
//! hyperparameters, trade-off parameters, consistent set and a reference to
//! the training data (source paths, label column, any fitted PCA projection,
//! the training row indices and a content hash). The training matrices
//! themselves are reloaded from the sources on [`load_model`], and the hash
//! is checked so that a changed source file is reported instead of silently
//! producing a different model.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dataset::{add_pca_view, load_csv, LabelColumn, MultiViewDataset, Pca};
use crate::error::{Error, Result};
use crate::gp_view::ViewHyperparams;
use crate::objective::TradeoffParams;
use crate::trainer::{GridSearchResult, InputViews, Method, StopReason, TrainedModel, TrainingLog};

pub const MODEL_FORMAT_VERSION: u32 = 1;

/// Where a dataset came from and how it was turned into model inputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DataSource {
    pub paths: Vec<PathBuf>,
    pub label_column: String,
    /// Projection appended as an extra view after loading.
    pub pca: Option<Pca>,
}

impl DataSource {
    /// Load the files and append the PCA view if there is one.
    pub fn load(&self) -> Result<MultiViewDataset> {
        let label: LabelColumn = self.label_column.parse().expect("infallible");
        let ds = load_csv(&self.paths, &label)?;
        match &self.pca {
            Some(p) => add_pca_view(&ds, p),
            None => Ok(ds),
        }
    }

    /// Same as `self` but with canonical absolute paths.
    pub fn canonical(&self) -> Result<Self> {
        let paths = self
            .paths
            .iter()
            .map(|p| fs::canonicalize(p).map_err(|source| Error::Io { path: p.clone(), source }))
            .collect::<Result<Vec<_>>>()?;
        Ok(DataSource { paths, ..self.clone() })
    }
}

/// Training-log fields kept in the model file; the per-iteration records go
/// to a separate log file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingSummary {
    pub iterations: usize,
    pub initial_objective: f64,
    pub final_objective: f64,
    pub final_grad_norm: f64,
    pub stop_reason: StopReason,
    pub jitter_events: usize,
    pub warnings: Vec<String>,
}

impl From<&TrainingLog> for TrainingSummary {
    fn from(l: &TrainingLog) -> Self {
        TrainingSummary {
            iterations: l.iterations,
            initial_objective: l.initial_objective,
            final_objective: l.final_objective,
            final_grad_norm: l.final_grad_norm,
            stop_reason: l.stop_reason,
            jitter_events: l.jitter_events,
            warnings: l.warnings.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format_version: u32,
    pub method: Method,
    pub input: InputViews,
    pub view_hps: Vec<ViewHyperparams>,
    pub tradeoff: TradeoffParams,
    pub consistent_set: Option<Vec<usize>>,
    pub source: DataSource,
    /// Rows of the loaded source used for training.
    pub train_rows: Vec<usize>,
    /// Content hash of the model inputs after row selection and `input`.
    pub train_data_hash: String,
    pub training: TrainingSummary,
    pub grid: Option<GridSearchResult>,
}

impl ModelFile {
    pub fn new(model: &TrainedModel, source: DataSource, train_rows: Vec<usize>) -> Self {
        ModelFile {
            format_version: MODEL_FORMAT_VERSION,
            method: model.method,
            input: model.input,
            view_hps: model.view_hps.clone(),
            tradeoff: model.tradeoff.clone(),
            consistent_set: model.consistent_set.clone(),
            source,
            train_rows,
            train_data_hash: model.train_data.content_hash(),
            training: TrainingSummary::from(&model.training_log),
            grid: model.grid.clone(),
        }
    }

    /// Reload the training data and rebuild the model.
    pub fn into_model(self) -> Result<TrainedModel> {
        let full = self.source.load()?;
        let rows = full.subset(&self.train_rows)?;
        let train_data = self.input.apply(&rows)?;
        let hash = train_data.content_hash();
        if hash != self.train_data_hash {
            return Err(Error::ModelFormat(format!(
                "training data no longer matches the model (hash {hash}, expected {})",
                self.train_data_hash
            )));
        }
        if self.view_hps.len() != train_data.n_views() {
            return Err(Error::ModelFormat(format!(
                "{} hyperparameter sets for {} input views",
                self.view_hps.len(),
                train_data.n_views()
            )));
        }
        self.tradeoff.validate()?;
        let t = &self.training;
        Ok(TrainedModel {
            method: self.method,
            input: self.input,
            view_hps: self.view_hps,
            tradeoff: self.tradeoff,
            train_data,
            consistent_set: self.consistent_set,
            training_log: TrainingLog {
                records: Vec::new(),
                iterations: t.iterations,
                initial_objective: t.initial_objective,
                final_objective: t.final_objective,
                final_grad_norm: t.final_grad_norm,
                stop_reason: t.stop_reason,
                jitter_events: t.jitter_events,
                warnings: t.warnings.clone(),
            },
            grid: self.grid,
        })
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io { path: path.to_path_buf(), source }
}

/// Serialize `value` as pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("serializable");
    text.push('\n');
    fs::write(path, text).map_err(io_err(path))
}

pub fn save_model(path: &Path, file: &ModelFile) -> Result<()> {
    write_json(path, file)
}

/// Parse a model file, refusing versions newer than this build understands.
pub fn read_model_file(path: &Path) -> Result<ModelFile> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let value: serde_json::Value = serde_json::from_str(&text)
        .map_err(|e| Error::ModelFormat(format!("{}: {e}", path.display())))?;
    let version = value
        .get("format_version")
        .and_then(|v| v.as_u64())
        .ok_or_else(|| Error::ModelFormat(format!("{}: missing format_version", path.display())))?;
    if version > u64::from(MODEL_FORMAT_VERSION) {
        return Err(Error::ModelFormat(format!(
            "{}: format version {version} is newer than the supported version {MODEL_FORMAT_VERSION}",
            path.display()
        )));
    }
    serde_json::from_value(value).map_err(|e| Error::ModelFormat(format!("{}: {e}", path.display())))
}

pub fn load_model(path: &Path) -> Result<TrainedModel> {
    read_model_file(path)?.into_model()
}
