//! Command-line front end.
//!
//! Every option can also be given in a TOML file passed with `--config`; the
//! keys are the flag names without the leading dashes. Flags win over the
//! file.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 data error,
//! 3 numerical failure (including a failed gradient check).

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use crate::dataset::{split_indices, write_csv, LabelColumn, MultiViewDataset, Pca, SplitSpec};
use crate::error::{Error, ErrorKind, Result};
use crate::experiment::{format_table, run_benchmark, Protocol};
use crate::gradcheck::{run_gradcheck, GradcheckConfig};
use crate::persist::{load_model, read_model_file, save_model, write_json, DataSource, ModelFile};
use crate::trainer::{train, Method, OptimizerConfig, SearchConfig};

#[derive(Parser, Debug)]
#[command(name = "mvgp", version, about = "Multi-view Gaussian process classifiers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train one model and write it to the output directory
    Train(Options),
    /// Evaluate a saved model on a labeled dataset
    Evaluate(EvaluateArgs),
    /// Repeated train/test benchmark of one or more methods
    Benchmark(Options),
    /// Compare analytic gradients with finite differences
    Gradcheck(GradcheckArgs),
    /// Write a two-view copy of a single-view dataset with a PCA second view
    PcaView(PcaViewArgs),
}

/// Options shared by `train` and `benchmark`.
#[derive(Args, Debug, Default, Clone)]
struct Options {
    /// One CSV file per view (rows aligned; labels in the first file)
    #[arg(long, num_args = 1.., value_name = "PATH")]
    views: Option<Vec<PathBuf>>,
    /// Label column name or 0-based index in the first file [default: label]
    #[arg(long, value_name = "COL")]
    label_col: Option<String>,
    /// Method(s): gp1, gp2, gp3, mvgp1, mvgp2 (comma separated for benchmark)
    #[arg(long, value_delimiter = ',', value_name = "NAME")]
    method: Option<Vec<String>>,
    /// Fraction of rows used for training [default: 0.6 for benchmark, 1 for train]
    #[arg(long, value_name = "F")]
    train_frac: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Candidate first-view weights, e.g. 0,0.5,1
    #[arg(long, value_delimiter = ',', value_name = "A", value_parser = parse_number)]
    a_grid: Option<Vec<f64>>,
    /// Candidate couplings, e.g. 2^-8,2,2^8
    #[arg(long, value_delimiter = ',', value_name = "B", value_parser = parse_number)]
    b_grid: Option<Vec<f64>>,
    /// Outer train/test repeats [default: 5]
    #[arg(long)]
    repeats: Option<usize>,
    /// Validation repeats per grid cell [default: 10]
    #[arg(long)]
    cv_repeats: Option<usize>,
    #[arg(long)]
    max_iters: Option<usize>,
    #[arg(long)]
    grad_tol: Option<f64>,
    #[arg(long)]
    objective_tol: Option<f64>,
    /// Append a PCA view with this many components to a single-view dataset
    #[arg(long, value_name = "N")]
    pca_view: Option<usize>,
    /// Coarse grids (a in steps of 0.25, b in {2^-8, 2, 2^8}) and 3 validation repeats
    #[arg(long)]
    fast: bool,
    /// Output directory [default: mvgp-out]
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// TOML file with defaults for any of the options above
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
}

/// The same options as read from a config file.
#[derive(Deserialize, Debug, Default)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
struct FileOptions {
    views: Option<Vec<PathBuf>>,
    label_col: Option<String>,
    method: Option<MethodList>,
    train_frac: Option<f64>,
    seed: Option<u64>,
    a_grid: Option<Vec<f64>>,
    b_grid: Option<Vec<f64>>,
    repeats: Option<usize>,
    cv_repeats: Option<usize>,
    max_iters: Option<usize>,
    grad_tol: Option<f64>,
    objective_tol: Option<f64>,
    pca_view: Option<usize>,
    fast: Option<bool>,
    out: Option<PathBuf>,
}

#[derive(Deserialize, Debug)]
#[serde(untagged)]
enum MethodList {
    One(String),
    Many(Vec<String>),
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    /// Model file written by `train`
    #[arg(long, value_name = "PATH")]
    model: PathBuf,
    /// Test data, one CSV file per view as for training
    #[arg(long, num_args = 1.., value_name = "PATH", required = true)]
    views: Vec<PathBuf>,
    /// Label column [default: the one used for training]
    #[arg(long, value_name = "COL")]
    label_col: Option<String>,
    /// Directory for predictions.csv [default: mvgp-out]
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct GradcheckArgs {
    /// Input dimension of each of the two views
    #[arg(long, value_delimiter = ',', default_value = "3,2")]
    dims: Vec<usize>,
    #[arg(long, default_value_t = 10)]
    n_points: usize,
    /// Number of random problems
    #[arg(long, default_value_t = 20)]
    seeds: u64,
    /// First seed
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write the full report as JSON to this file
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
    #[arg(long, hide = true)]
    corrupt_gradient: Option<f64>,
}

#[derive(Args, Debug)]
struct PcaViewArgs {
    /// Single-view CSV file
    #[arg(long, value_name = "PATH")]
    views: PathBuf,
    #[arg(long, value_name = "COL")]
    label_col: Option<String>,
    /// Number of principal components in the new view
    #[arg(long, value_name = "N")]
    components: usize,
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

/// Parse a real number, also accepting powers of two written `2^k`.
fn parse_number(s: &str) -> std::result::Result<f64, String> {
    let s = s.trim();
    if let Some(e) = s.strip_prefix("2^") {
        return e.parse::<i32>().map(|k| 2f64.powi(k)).map_err(|e| format!("bad exponent in {s:?}: {e}"));
    }
    s.parse::<f64>().map_err(|e| format!("{s:?} is not a number: {e}"))
}

/// Options after merging flags over the config file.
#[derive(Debug)]
struct Resolved {
    views: Vec<PathBuf>,
    label_col: String,
    methods: Vec<Method>,
    train_frac: Option<f64>,
    seed: u64,
    search: SearchConfig,
    repeats: usize,
    optimizer: OptimizerConfig,
    pca_view: Option<usize>,
    out: PathBuf,
}

fn resolve(o: Options) -> Result<Resolved> {
    let file = match &o.config {
        Some(p) => {
            let text = fs::read_to_string(p)
                .map_err(|e| Error::invalid(format!("cannot read config file {}: {e}", p.display())))?;
            toml::from_str::<FileOptions>(&text)
                .map_err(|e| Error::invalid(format!("config file {}: {e}", p.display())))?
        }
        None => FileOptions::default(),
    };
    let views = o.views.or(file.views).ok_or_else(|| Error::invalid("--views is required"))?;
    let method_names = o.method.or(file.method.map(|m| match m {
        MethodList::One(s) => vec![s],
        MethodList::Many(v) => v,
    }));
    let methods = method_names
        .map(|names| names.iter().map(|n| n.parse()).collect::<Result<Vec<Method>>>())
        .transpose()?
        .unwrap_or_default();
    let fast = o.fast || file.fast.unwrap_or(false);
    let default_search = if fast {
        SearchConfig {
            a_values: vec![0.0, 0.25, 0.5, 0.75, 1.0],
            b_values: vec![2f64.powi(-8), 2.0, 256.0],
            cv_repeats: 3,
        }
    } else {
        SearchConfig::default()
    };
    let search = SearchConfig {
        a_values: o.a_grid.or(file.a_grid).unwrap_or(default_search.a_values),
        b_values: o.b_grid.or(file.b_grid).unwrap_or(default_search.b_values),
        cv_repeats: o.cv_repeats.or(file.cv_repeats).unwrap_or(default_search.cv_repeats),
    };
    search.validate()?;
    let seed = o.seed.or(file.seed).unwrap_or(0);
    let d = OptimizerConfig::default();
    let optimizer = OptimizerConfig {
        max_iters: o.max_iters.or(file.max_iters).unwrap_or(d.max_iters),
        grad_tol: o.grad_tol.or(file.grad_tol).unwrap_or(d.grad_tol),
        objective_tol: o.objective_tol.or(file.objective_tol).unwrap_or(d.objective_tol),
        seed,
    };
    optimizer.validate()?;
    Ok(Resolved {
        views,
        label_col: o.label_col.or(file.label_col).unwrap_or_else(|| LabelColumn::default().to_string()),
        methods,
        train_frac: o.train_frac.or(file.train_frac),
        seed,
        search,
        repeats: o.repeats.or(file.repeats).unwrap_or(5),
        optimizer,
        pca_view: o.pca_view.or(file.pca_view),
        out: o.out.or(file.out).unwrap_or_else(|| PathBuf::from("mvgp-out")),
    })
}

/// Load the dataset described by `r`, fitting the PCA view if requested.
fn load_source(r: &Resolved) -> Result<(DataSource, MultiViewDataset)> {
    let plain = DataSource { paths: r.views.clone(), label_column: r.label_col.clone(), pca: None }.canonical()?;
    let source = match r.pca_view {
        Some(n) => {
            let ds = plain.load()?;
            if ds.n_views() != 1 {
                return Err(Error::invalid("--pca-view needs a single-view dataset"));
            }
            DataSource { pca: Some(Pca::fit(ds.view(0), n)?), ..plain }
        }
        None => plain,
    };
    let data = source.load()?;
    Ok((source, data))
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|source| Error::Io { path: dir.to_path_buf(), source })
}

fn cmd_train(o: Options, out: &mut dyn Write) -> Result<()> {
    let r = resolve(o)?;
    let method = match r.methods.as_slice() {
        [] => Method::MvGp2,
        [m] => *m,
        _ => return Err(Error::invalid("train takes a single --method")),
    };
    let (source, data) = load_source(&r)?;
    let rows: Vec<usize> = match r.train_frac {
        Some(f) if f < 1.0 => split_indices(data.labels(), &SplitSpec::new(f, r.seed, true)?)?.0,
        Some(f) if f > 1.0 || !(f > 0.0) => return Err(Error::invalid(format!("--train-frac {f} outside (0, 1]"))),
        _ => (0..data.n_examples()).collect(),
    };
    let train_data = data.subset(&rows)?;
    let model = train(method, &train_data, &r.search, &r.optimizer)?;
    create_dir(&r.out)?;
    let model_path = r.out.join("model.json");
    save_model(&model_path, &ModelFile::new(&model, source, rows))?;
    write_json(&r.out.join("training_log.json"), &model.training_log)?;
    let log = &model.training_log;
    writeln!(out, "method: {method}").ok();
    if method.is_multi_view() {
        writeln!(out, "selected a = {}, b = {}", model.tradeoff.a(), model.tradeoff.b()).ok();
    }
    if let Some(t) = &model.consistent_set {
        writeln!(out, "consistent set: {} of {} training rows", t.len(), train_data.n_examples()).ok();
    }
    writeln!(
        out,
        "final objective {:.6} after {} iterations ({:?})",
        log.final_objective, log.iterations, log.stop_reason
    )
    .ok();
    for w in &log.warnings {
        writeln!(out, "warning: {w}").ok();
    }
    writeln!(out, "model written to {}", model_path.display()).ok();
    Ok(())
}

fn cmd_evaluate(a: EvaluateArgs, out: &mut dyn Write) -> Result<()> {
    let file = read_model_file(&a.model)?;
    let source = DataSource {
        paths: a.views.clone(),
        label_column: a.label_col.clone().unwrap_or_else(|| file.source.label_column.clone()),
        pca: file.source.pca.clone(),
    };
    let model = file.into_model()?;
    let test = source.load()?;
    let pred = model.predict(&test)?;
    let truth = test.labels();
    let correct = pred.labels.iter().zip(truth.iter()).filter(|(p, y)| p == y).count();
    let accuracy = correct as f64 / truth.len() as f64;

    let dir = a.out.unwrap_or_else(|| PathBuf::from("mvgp-out"));
    create_dir(&dir)?;
    let path = dir.join("predictions.csv");
    let csv_err = |source| Error::Csv { path: path.clone(), source };
    let mut w = csv::Writer::from_path(&path).map_err(csv_err)?;
    let mut header = vec!["index".to_string()];
    header.extend((0..pred.view_means.len()).map(|k| format!("mean_{k}")));
    header.extend(["score", "predicted", "true"].map(String::from));
    w.write_record(&header).map_err(csv_err)?;
    for i in 0..truth.len() {
        let mut rec = vec![i.to_string()];
        rec.extend(pred.view_means.iter().map(|m| format!("{:?}", m[i])));
        rec.push(format!("{:?}", pred.scores[i]));
        rec.push(format!("{}", pred.labels[i]));
        rec.push(format!("{}", truth[i]));
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush().map_err(|source| Error::Io { path: path.clone(), source })?;
    writeln!(out, "accuracy: {accuracy:.4} ({correct}/{})", truth.len()).ok();
    writeln!(out, "predictions written to {}", path.display()).ok();
    Ok(())
}

fn cmd_benchmark(o: Options, out: &mut dyn Write) -> Result<()> {
    let r = resolve(o)?;
    let (_, data) = load_source(&r)?;
    let methods = if r.methods.is_empty() {
        if data.n_views() >= 2 {
            Method::ALL.to_vec()
        } else {
            vec![Method::Gp1]
        }
    } else {
        r.methods.clone()
    };
    let protocol = Protocol {
        methods,
        train_fraction: r.train_frac.unwrap_or(0.6),
        stratified: true,
        repeats: r.repeats,
        seed: r.seed,
        search: r.search.clone(),
        optimizer: r.optimizer,
    };
    let (report, timings) = run_benchmark(&data, &protocol)?;
    create_dir(&r.out)?;
    write_json(&r.out.join("report.json"), &report)?;
    write_json(&r.out.join("timings.json"), &timings)?;
    let table = format_table(&report);
    fs::write(r.out.join("table.txt"), &table).map_err(|source| Error::Io { path: r.out.join("table.txt"), source })?;
    write!(out, "{table}").ok();
    writeln!(out, "total time {:.1} s; report written to {}", timings.total_seconds, r.out.join("report.json").display())
        .ok();
    Ok(())
}

/// Returns whether every case passed.
fn cmd_gradcheck(a: GradcheckArgs, out: &mut dyn Write) -> Result<bool> {
    let cfg = GradcheckConfig {
        dims: a.dims,
        n_points: a.n_points,
        seeds: (a.seed..a.seed + a.seeds).collect(),
        corrupt: a.corrupt_gradient,
        ..Default::default()
    };
    let report = run_gradcheck(&cfg)?;
    writeln!(out, "{:>6} {:>4} {:>10} {:>12} {:>12} {:>10}", "seed", "a", "b", "fd_err", "closed_err", "ratio").ok();
    for c in &report.cases {
        let ratio = c.literal_coupling_ratio.map_or("-".to_string(), |r| format!("{r:.6}"));
        writeln!(
            out,
            "{:>6} {:>4} {:>10.3e} {:>12.3e} {:>12.3e} {:>10}{}",
            c.seed,
            c.a,
            c.b,
            c.fd_error,
            c.closed_form_error,
            ratio,
            if c.passed { "" } else { "  FAIL" }
        )
        .ok();
    }
    writeln!(out, "max relative error vs finite differences: {:.3e}", report.max_fd_error).ok();
    writeln!(out, "max relative error vs closed form (coupling halved): {:.3e}", report.max_closed_form_error).ok();
    writeln!(out, "ratio = closed-form coupling groups as printed / analytic coupling gradient").ok();
    writeln!(out, "{} (tolerance {:e})", if report.passed { "PASS" } else { "FAIL" }, report.tolerance).ok();
    if let Some(p) = &a.out {
        write_json(p, &report)?;
    }
    Ok(report.passed)
}

fn cmd_pca_view(a: PcaViewArgs, out: &mut dyn Write) -> Result<()> {
    let label = a.label_col.unwrap_or_else(|| LabelColumn::default().to_string());
    let source = DataSource { paths: vec![a.views.clone()], label_column: label, pca: None };
    let data = source.load()?;
    if data.n_views() != 1 {
        return Err(Error::invalid("pca-view needs a single-view dataset"));
    }
    let two = crate::dataset::pca_second_view(&data, a.components)?;
    let dir = a.out.unwrap_or_else(|| PathBuf::from("mvgp-out"));
    create_dir(&dir)?;
    let paths: Vec<PathBuf> = two.view_names().iter().map(|n| dir.join(format!("{n}.csv"))).collect();
    write_csv(&two, &paths)?;
    for p in &paths {
        writeln!(out, "wrote {}", p.display()).ok();
    }
    Ok(())
}

pub fn exit_code(kind: ErrorKind) -> i32 {
    match kind {
        ErrorKind::Usage => 1,
        ErrorKind::Data => 2,
        ErrorKind::Numerical => 3,
    }
}

/// Run the CLI with explicit arguments and output streams; returns the exit
/// code.
pub fn run_with<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let text = e.render().to_string();
            if code == 0 {
                write!(out, "{text}").ok();
            } else {
                write!(err, "{text}").ok();
            }
            return code;
        }
    };
    let result = match cli.command {
        Command::Train(o) => cmd_train(o, out),
        Command::Evaluate(a) => cmd_evaluate(a, out),
        Command::Benchmark(o) => cmd_benchmark(o, out),
        Command::PcaView(a) => cmd_pca_view(a, out),
        Command::Gradcheck(a) => match cmd_gradcheck(a, out) {
            Ok(true) => Ok(()),
            Ok(false) => return 3,
            Err(e) => Err(e),
        },
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            writeln!(err, "error: {e}").ok();
            exit_code(e.kind())
        }
    }
}

/// Entry point used by the `mvgp` binary.
pub fn main() -> i32 {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    run_with(std::env::args_os(), &mut stdout.lock(), &mut stderr.lock())
}

/// Load a model file (for callers that only need prediction).
pub fn open_model(path: &Path) -> Result<crate::trainer::TrainedModel> {
    load_model(path)
}
