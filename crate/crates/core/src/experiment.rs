//! Repeated train/test benchmark: for each repeat draw a fresh stratified
//! split, train every requested method on the training part and measure test
//! accuracy. Results are summarized as mean ± standard deviation.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::dataset::{split_indices, MultiViewDataset, SplitSpec};
use crate::error::{Error, Result};
use crate::trainer::{
    derive_seed, train, train_mvgp1, train_mvgp2_from, Method, OptimizerConfig, SearchConfig, TrainedModel,
};

/// Protocol knobs of a benchmark run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Protocol {
    pub methods: Vec<Method>,
    pub train_fraction: f64,
    pub stratified: bool,
    pub repeats: usize,
    pub seed: u64,
    pub search: SearchConfig,
    pub optimizer: OptimizerConfig,
}

impl Default for Protocol {
    fn default() -> Self {
        Protocol {
            methods: Method::ALL.to_vec(),
            train_fraction: 0.6,
            stratified: true,
            repeats: 5,
            seed: 0,
            search: SearchConfig::default(),
            optimizer: OptimizerConfig::default(),
        }
    }
}

impl Protocol {
    pub fn validate(&self) -> Result<()> {
        if self.methods.is_empty() {
            return Err(Error::invalid("at least one method is required"));
        }
        if self.repeats < 1 {
            return Err(Error::invalid("repeat count must be at least 1"));
        }
        SplitSpec::new(self.train_fraction, self.seed, self.stratified)?;
        self.search.validate()?;
        self.optimizer.validate()
    }

    /// Seed of the train/test split in repeat `r`.
    pub fn split_seed(&self, r: usize) -> u64 {
        derive_seed(self.seed, 2 * r as u64)
    }

    /// Optimizer configuration used in repeat `r`.
    pub fn optimizer_for(&self, r: usize) -> OptimizerConfig {
        OptimizerConfig { seed: derive_seed(self.seed, 2 * r as u64 + 1), ..self.optimizer }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Selected {
    pub a: f64,
    pub b: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodResult {
    pub method: Method,
    /// Test accuracy of each repeat.
    pub accuracies: Vec<f64>,
    pub mean: f64,
    /// Sample standard deviation (0 for a single repeat).
    pub std: f64,
    /// Selected trade-off per repeat (multi-view methods only).
    pub selected: Vec<Option<Selected>>,
    /// Size of the consistent set per repeat (MvGP2 only).
    pub consistent_set_sizes: Vec<Option<usize>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub n_examples: usize,
    pub view_dims: Vec<usize>,
    pub n_positive: usize,
    pub n_negative: usize,
    pub content_hash: String,
}

impl DatasetSummary {
    pub fn of(data: &MultiViewDataset) -> Self {
        let (n_positive, n_negative) = data.class_counts();
        DatasetSummary {
            n_examples: data.n_examples(),
            view_dims: data.view_dims(),
            n_positive,
            n_negative,
            content_hash: data.content_hash(),
        }
    }
}

/// Deterministic benchmark results; wall-clock timings live in [`Timings`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub dataset: DatasetSummary,
    pub protocol: Protocol,
    pub results: Vec<MethodResult>,
}

impl ExperimentReport {
    pub fn result(&self, method: Method) -> Option<&MethodResult> {
        self.results.iter().find(|r| r.method == method)
    }
}

/// Seconds spent per repeat and stage.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub repeats: Vec<Vec<StageTime>>,
    pub total_seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageTime {
    pub stage: String,
    pub seconds: f64,
}

/// `(mean, sample standard deviation)`.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

/// Accuracy as `mean±std` in percent with two decimals.
pub fn format_accuracy(mean: f64, std: f64) -> String {
    format!("{:.2}±{:.2}", 100.0 * mean, 100.0 * std)
}

/// One row per method.
pub fn format_table(report: &ExperimentReport) -> String {
    let mut out = format!("{:<8} {}\n", "method", "accuracy (%)");
    for r in &report.results {
        out.push_str(&format!("{:<8} {}\n", r.method.as_str(), format_accuracy(r.mean, r.std)));
    }
    out
}

/// Run the protocol on `data`.
pub fn run_benchmark(data: &MultiViewDataset, protocol: &Protocol) -> Result<(ExperimentReport, Timings)> {
    protocol.validate()?;
    let needs_mv = protocol.methods.iter().any(|m| m.is_multi_view());
    if needs_mv && data.n_views() < 2 {
        return Err(Error::invalid("multi-view methods need at least two views"));
    }
    let start = Instant::now();
    let mut per_method: Vec<(Vec<f64>, Vec<Option<Selected>>, Vec<Option<usize>>)> =
        protocol.methods.iter().map(|_| Default::default()).collect();
    let mut timings = Timings::default();

    for r in 0..protocol.repeats {
        let spec = SplitSpec::new(protocol.train_fraction, protocol.split_seed(r), protocol.stratified)?;
        let (train_idx, test_idx) = split_indices(data.labels(), &spec)?;
        let (train_data, test_data) = (data.subset(&train_idx)?, data.subset(&test_idx)?);
        let config = protocol.optimizer_for(r);
        let mut stages = Vec::new();
        let mut mvgp1: Option<(TrainedModel, f64)> = None;

        for (mi, &method) in protocol.methods.iter().enumerate() {
            let t0 = Instant::now();
            let model = match method {
                Method::MvGp1 | Method::MvGp2 => {
                    if mvgp1.is_none() {
                        let t = Instant::now();
                        let m = train_mvgp1(&train_data, &protocol.search, &config)?;
                        mvgp1 = Some((m, t.elapsed().as_secs_f64()));
                    }
                    let (first, first_secs) = mvgp1.as_ref().expect("trained above");
                    if method == Method::MvGp1 {
                        stages.push(StageTime { stage: "mvgp1".into(), seconds: *first_secs });
                        first.clone()
                    } else {
                        let t = Instant::now();
                        let m = train_mvgp2_from(first, &train_data, &protocol.search, &config)?;
                        stages.push(StageTime {
                            stage: "mvgp2 (second stage)".into(),
                            seconds: t.elapsed().as_secs_f64(),
                        });
                        m
                    }
                }
                _ => {
                    let m = train(method, &train_data, &protocol.search, &config)?;
                    stages.push(StageTime { stage: method.as_str().into(), seconds: t0.elapsed().as_secs_f64() });
                    m
                }
            };
            let acc = model.predict(&test_data)?.accuracy(test_data.labels());
            log::info!("repeat {r}: {method} test accuracy {acc:.4}");
            let entry = &mut per_method[mi];
            entry.0.push(acc);
            entry.1.push(method.is_multi_view().then(|| Selected { a: model.tradeoff.a(), b: model.tradeoff.b() }));
            entry.2.push(model.consistent_set.as_ref().map(|t| t.len()));
        }
        timings.repeats.push(stages);
    }
    timings.total_seconds = start.elapsed().as_secs_f64();

    let results = protocol
        .methods
        .iter()
        .zip(per_method)
        .map(|(&method, (accuracies, selected, consistent_set_sizes))| {
            let (mean, std) = mean_std(&accuracies);
            MethodResult { method, accuracies, mean, std, selected, consistent_set_sizes }
        })
        .collect();
    let report = ExperimentReport { dataset: DatasetSummary::of(data), protocol: protocol.clone(), results };
    Ok((report, timings))
}
