//! Multi-view classification data: CSV ingestion, validation, PCA view
//! synthesis, and seeded train/test and train/validation splitting.
//!
//! A dataset is stored as one CSV file per view. All files share the same row
//! order; the label column lives only in the first file. Labels may be encoded
//! as `{+1, -1}`, `{1, 0}` or `{1, 2}`; the latter two are normalized with
//! `0 -> -1` and `2 -> -1`.

use std::collections::BTreeSet;
use std::fs::File;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::linalg::{select_entries, select_rows};

/// Aligned per-view feature matrices sharing one `±1` label vector.
///
/// Immutable after construction; every constructor validates the invariants
/// (at least one view, `N >= 1` rows in every view, finite features, labels
/// exactly `+1` or `-1`).
#[derive(Clone, Debug, PartialEq)]
pub struct MultiViewDataset {
    views: Vec<DMatrix<f64>>,
    labels: DVector<f64>,
    view_names: Vec<String>,
}

impl MultiViewDataset {
    pub fn new(
        views: Vec<DMatrix<f64>>,
        labels: DVector<f64>,
        view_names: Vec<String>,
    ) -> Result<Self> {
        if views.is_empty() {
            return Err(Error::Data("dataset needs at least one view".into()));
        }
        if view_names.len() != views.len() {
            return Err(Error::dims(format!(
                "{} view names for {} views",
                view_names.len(),
                views.len()
            )));
        }
        let n = labels.len();
        if n == 0 {
            return Err(Error::Data("dataset needs at least one example".into()));
        }
        for (k, v) in views.iter().enumerate() {
            if v.nrows() != n {
                return Err(Error::dims(format!(
                    "view {k} has {} rows but there are {n} labels",
                    v.nrows()
                )));
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::Data(format!("view {k} contains non-finite features")));
            }
        }
        if let Some(i) = labels.iter().position(|&y| y != 1.0 && y != -1.0) {
            return Err(Error::Data(format!(
                "label {} at row {i} is not +1 or -1",
                labels[i]
            )));
        }
        Ok(MultiViewDataset { views, labels, view_names })
    }

    /// Convenience constructor naming views `view1`, `view2`, ...
    pub fn from_views(views: Vec<DMatrix<f64>>, labels: DVector<f64>) -> Result<Self> {
        let names = (1..=views.len()).map(|k| format!("view{k}")).collect();
        Self::new(views, labels, names)
    }

    pub fn n_examples(&self) -> usize {
        self.labels.len()
    }

    pub fn n_views(&self) -> usize {
        self.views.len()
    }

    pub fn view(&self, k: usize) -> &DMatrix<f64> {
        &self.views[k]
    }

    pub fn views(&self) -> &[DMatrix<f64>] {
        &self.views
    }

    pub fn labels(&self) -> &DVector<f64> {
        &self.labels
    }

    pub fn view_names(&self) -> &[String] {
        &self.view_names
    }

    pub fn view_dims(&self) -> Vec<usize> {
        self.views.iter().map(|v| v.ncols()).collect()
    }

    /// Number of `+1` and `-1` labels.
    pub fn class_counts(&self) -> (usize, usize) {
        let pos = self.labels.iter().filter(|&&y| y > 0.0).count();
        (pos, self.n_examples() - pos)
    }

    /// Rows `idx` of every view, in the given order.
    pub fn subset(&self, idx: &[usize]) -> Result<Self> {
        if let Some(&bad) = idx.iter().find(|&&i| i >= self.n_examples()) {
            return Err(Error::invalid(format!(
                "row index {bad} out of range for {} examples",
                self.n_examples()
            )));
        }
        Self::new(
            self.views.iter().map(|v| select_rows(v, idx)).collect(),
            select_entries(&self.labels, idx),
            self.view_names.clone(),
        )
    }

    /// A one-view dataset holding view `k` only.
    pub fn single_view(&self, k: usize) -> Result<Self> {
        if k >= self.n_views() {
            return Err(Error::invalid(format!(
                "view {k} requested but the dataset has {} views",
                self.n_views()
            )));
        }
        Self::new(
            vec![self.views[k].clone()],
            self.labels.clone(),
            vec![self.view_names[k].clone()],
        )
    }

    /// A one-view dataset whose features are the column-concatenation of all
    /// views.
    pub fn concatenated(&self) -> Result<Self> {
        if self.n_views() < 2 {
            return Err(Error::invalid(
                "concatenation requires at least 2 views".to_string(),
            ));
        }
        let n = self.n_examples();
        let total: usize = self.view_dims().iter().sum();
        let mut m = DMatrix::zeros(n, total);
        let mut offset = 0;
        for v in &self.views {
            m.view_mut((0, offset), (n, v.ncols())).copy_from(v);
            offset += v.ncols();
        }
        Self::new(vec![m], self.labels.clone(), vec![self.view_names.join("+")])
    }

    /// SHA-256 over the shape, little-endian feature bits and labels.
    pub fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.n_examples() as u64).to_le_bytes());
        h.update((self.n_views() as u64).to_le_bytes());
        for v in &self.views {
            h.update((v.ncols() as u64).to_le_bytes());
            for r in 0..v.nrows() {
                for c in 0..v.ncols() {
                    h.update(v[(r, c)].to_bits().to_le_bytes());
                }
            }
        }
        for y in self.labels.iter() {
            h.update(y.to_bits().to_le_bytes());
        }
        hex::encode(h.finalize())
    }
}

/// Where the label lives in the first view file.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum LabelColumn {
    Name(String),
    Index(usize),
}

impl Default for LabelColumn {
    fn default() -> Self {
        LabelColumn::Name("label".into())
    }
}

impl std::str::FromStr for LabelColumn {
    type Err = std::convert::Infallible;

    /// A bare non-negative integer selects a column by position; anything else
    /// is a header name.
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Ok(match s.parse::<usize>() {
            Ok(i) => LabelColumn::Index(i),
            Err(_) => LabelColumn::Name(s.to_string()),
        })
    }
}

impl std::fmt::Display for LabelColumn {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            LabelColumn::Name(n) => write!(f, "{n}"),
            LabelColumn::Index(i) => write!(f, "{i}"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum LabelEncoding {
    PlusMinus,
    OneZero,
    OneTwo,
}

impl LabelEncoding {
    const ALL: [LabelEncoding; 3] =
        [LabelEncoding::PlusMinus, LabelEncoding::OneZero, LabelEncoding::OneTwo];

    fn map(self, raw: i64) -> Option<f64> {
        match (self, raw) {
            (_, 1) => Some(1.0),
            (LabelEncoding::PlusMinus, -1) => Some(-1.0),
            (LabelEncoding::OneZero, 0) => Some(-1.0),
            (LabelEncoding::OneTwo, 2) => Some(-1.0),
            _ => None,
        }
    }
}

struct RawTable {
    path: PathBuf,
    header: Option<Vec<String>>,
    /// (1-based line number, cells)
    rows: Vec<(u64, Vec<String>)>,
}

fn read_table(path: &Path) -> Result<RawTable> {
    let file = File::open(path).map_err(|source| Error::Io { path: path.to_path_buf(), source })?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(file);
    let mut header = None;
    let mut rows = Vec::new();
    let mut width = None;
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|source| Error::Csv { path: path.to_path_buf(), source })?;
        let line = rec.position().map(|p| p.line()).unwrap_or(i as u64 + 1);
        let cells: Vec<String> = rec.iter().map(str::to_string).collect();
        if cells.len() == 1 && cells[0].is_empty() {
            continue;
        }
        match width {
            None => width = Some(cells.len()),
            Some(w) if w != cells.len() => {
                return Err(Error::DataAt {
                    path: path.to_path_buf(),
                    line,
                    message: format!("expected {w} columns, found {}", cells.len()),
                })
            }
            _ => {}
        }
        // The first record is a header when any of its cells is non-numeric.
        if i == 0 && cells.iter().any(|c| c.parse::<f64>().is_err()) {
            header = Some(cells);
            continue;
        }
        rows.push((line, cells));
    }
    Ok(RawTable { path: path.to_path_buf(), header, rows })
}

fn parse_feature(table: &RawTable, line: u64, cell: &str) -> Result<f64> {
    let at = |message: String| Error::DataAt { path: table.path.clone(), line, message };
    let v: f64 = cell
        .parse()
        .map_err(|_| at(format!("non-numeric feature cell {cell:?}")))?;
    if !v.is_finite() {
        return Err(at(format!("non-finite feature cell {cell:?}")));
    }
    Ok(v)
}

fn features_matrix(table: &RawTable, skip_col: Option<usize>) -> Result<DMatrix<f64>> {
    let ncols = table.rows.first().map(|r| r.1.len()).unwrap_or(0) - skip_col.map_or(0, |_| 1);
    let mut m = DMatrix::zeros(table.rows.len(), ncols);
    for (r, (line, cells)) in table.rows.iter().enumerate() {
        let mut c = 0;
        for (j, cell) in cells.iter().enumerate() {
            if Some(j) == skip_col {
                continue;
            }
            m[(r, c)] = parse_feature(table, *line, cell)?;
            c += 1;
        }
    }
    Ok(m)
}

fn parse_labels(table: &RawTable, col: usize) -> Result<DVector<f64>> {
    let mut candidates: Vec<LabelEncoding> = LabelEncoding::ALL.to_vec();
    let mut raw = Vec::with_capacity(table.rows.len());
    for (line, cells) in &table.rows {
        let cell = &cells[col];
        let unknown = || Error::DataAt {
            path: table.path.clone(),
            line: *line,
            message: format!(
                "unknown label encoding: {cell:?} (accepted: {{+1,-1}}, {{1,0}}, {{1,2}})"
            ),
        };
        let v: f64 = cell.parse().map_err(|_| unknown())?;
        if v.fract() != 0.0 || !v.is_finite() {
            return Err(unknown());
        }
        let v = v as i64;
        candidates.retain(|e| e.map(v).is_some());
        if candidates.is_empty() {
            return Err(unknown());
        }
        raw.push(v);
    }
    let enc = candidates[0];
    Ok(DVector::from_iterator(raw.len(), raw.into_iter().map(|v| enc.map(v).unwrap())))
}

/// Load a multi-view dataset from one CSV file per view.
///
/// Each file may start with a header row (detected when any cell of the first
/// row is non-numeric). The label column is looked up in the first file only.
pub fn load_csv<P: AsRef<Path>>(paths: &[P], label: &LabelColumn) -> Result<MultiViewDataset> {
    if paths.is_empty() {
        return Err(Error::invalid("at least one view file is required"));
    }
    let tables = paths
        .iter()
        .map(|p| read_table(p.as_ref()))
        .collect::<Result<Vec<_>>>()?;

    let first = &tables[0];
    if first.rows.is_empty() {
        return Err(Error::Data(format!("{}: no data rows", first.path.display())));
    }
    let width = first.rows[0].1.len();
    let label_col = match label {
        LabelColumn::Index(i) if *i < width => *i,
        LabelColumn::Index(i) => {
            return Err(Error::Data(format!(
                "{}: label column {i} out of range ({width} columns)",
                first.path.display()
            )))
        }
        LabelColumn::Name(name) => match &first.header {
            Some(h) => h.iter().position(|c| c == name).ok_or_else(|| {
                Error::Data(format!("{}: no column named {name:?}", first.path.display()))
            })?,
            None => {
                return Err(Error::Data(format!(
                    "{}: label column {name:?} requested but the file has no header",
                    first.path.display()
                )))
            }
        },
    };
    let labels = parse_labels(first, label_col)?;
    let n = labels.len();

    let mut views = Vec::with_capacity(tables.len());
    let mut names = Vec::with_capacity(tables.len());
    for (k, t) in tables.iter().enumerate() {
        if t.rows.len() != n {
            let line = t
                .rows
                .get(n)
                .or(t.rows.last())
                .map(|r| r.0)
                .unwrap_or(0);
            return Err(Error::DataAt {
                path: t.path.clone(),
                line,
                message: format!(
                    "row-count mismatch: {} data rows but {} has {n}",
                    t.rows.len(),
                    first.path.display()
                ),
            });
        }
        let skip = if k == 0 { Some(label_col) } else { None };
        let m = features_matrix(t, skip)?;
        if m.ncols() == 0 {
            return Err(Error::Data(format!("{}: no feature columns", t.path.display())));
        }
        views.push(m);
        names.push(
            t.path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| format!("view{}", k + 1)),
        );
    }
    MultiViewDataset::new(views, labels, names)
}

/// Write one CSV per view. The first file gets a trailing `label` column.
/// Values use Rust's shortest round-trip formatting, so reloading reproduces
/// the matrices bit for bit.
pub fn write_csv<P: AsRef<Path>>(dataset: &MultiViewDataset, paths: &[P]) -> Result<()> {
    if paths.len() != dataset.n_views() {
        return Err(Error::invalid(format!(
            "{} output paths for {} views",
            paths.len(),
            dataset.n_views()
        )));
    }
    for (k, p) in paths.iter().enumerate() {
        let path = p.as_ref();
        let csv_err = |source| Error::Csv { path: path.to_path_buf(), source };
        let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
        let v = dataset.view(k);
        let mut header: Vec<String> = (0..v.ncols()).map(|c| format!("f{c}")).collect();
        if k == 0 {
            header.push("label".into());
        }
        w.write_record(&header).map_err(csv_err)?;
        for r in 0..v.nrows() {
            let mut rec: Vec<String> = v.row(r).iter().map(|x| format!("{x:?}")).collect();
            if k == 0 {
                rec.push(if dataset.labels()[r] > 0.0 { "1" } else { "-1" }.into());
            }
            w.write_record(&rec).map_err(csv_err)?;
        }
        w.flush().map_err(|source| Error::Io { path: path.to_path_buf(), source })?;
    }
    Ok(())
}

/// Principal component projection fitted on one matrix.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Pca {
    pub mean: DVector<f64>,
    /// `M × n_components`, columns ordered by descending eigenvalue.
    pub components: DMatrix<f64>,
    pub eigenvalues: DVector<f64>,
}

impl Pca {
    /// Eigendecomposition of the sample covariance. Each direction's sign is
    /// fixed so that its largest-magnitude entry is positive.
    pub fn fit(x: &DMatrix<f64>, n_components: usize) -> Result<Self> {
        let (n, m) = x.shape();
        if n_components == 0 || n_components > n.min(m) {
            return Err(Error::invalid(format!(
                "n_components must be in 1..={} (got {n_components})",
                n.min(m)
            )));
        }
        let mean = x.row_mean().transpose();
        let centered = center(x, &mean);
        let denom = if n > 1 { (n - 1) as f64 } else { 1.0 };
        let cov = crate::linalg::symmetrize(centered.transpose() * &centered / denom);
        let eig = SymmetricEigen::new(cov);

        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));

        let mut components = DMatrix::zeros(m, n_components);
        let mut eigenvalues = DVector::zeros(n_components);
        for (j, &src) in order.iter().take(n_components).enumerate() {
            let mut col = eig.eigenvectors.column(src).into_owned();
            let pivot = col
                .iter()
                .enumerate()
                .fold((0, 0.0f64), |best, (i, v)| if v.abs() > best.1.abs() { (i, *v) } else { best })
                .0;
            if col[pivot] < 0.0 {
                col.neg_mut();
            }
            components.set_column(j, &col);
            eigenvalues[j] = eig.eigenvalues[src];
        }
        Ok(Pca { mean, components, eigenvalues })
    }

    pub fn transform(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if x.ncols() != self.mean.len() {
            return Err(Error::dims(format!(
                "PCA fitted on {} features, got {}",
                self.mean.len(),
                x.ncols()
            )));
        }
        Ok(center(x, &self.mean) * &self.components)
    }
}

fn center(x: &DMatrix<f64>, mean: &DVector<f64>) -> DMatrix<f64> {
    let mut c = x.clone();
    for mut row in c.row_iter_mut() {
        row -= mean.transpose();
    }
    c
}

/// Turn a single-view dataset into a two-view one whose second view is the
/// centered data projected onto its top `n_components` principal directions.
pub fn pca_second_view(dataset: &MultiViewDataset, n_components: usize) -> Result<MultiViewDataset> {
    if dataset.n_views() != 1 {
        return Err(Error::invalid(format!(
            "PCA view synthesis needs a single-view dataset (got {} views)",
            dataset.n_views()
        )));
    }
    let pca = Pca::fit(dataset.view(0), n_components)?;
    add_pca_view(dataset, &pca)
}

/// Append `pca` applied to the first view as a new last view.
pub fn add_pca_view(dataset: &MultiViewDataset, pca: &Pca) -> Result<MultiViewDataset> {
    let z = pca.transform(dataset.view(0))?;
    let mut views = dataset.views().to_vec();
    views.push(z);
    let mut names = dataset.view_names().to_vec();
    names.push(format!("{}_pca{}", names[0], pca.components.ncols()));
    MultiViewDataset::new(views, dataset.labels().clone(), names)
}

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub seed: u64,
    pub stratified: bool,
}

impl SplitSpec {
    pub fn new(train_fraction: f64, seed: u64, stratified: bool) -> Result<Self> {
        let s = SplitSpec { train_fraction, seed, stratified };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::invalid(format!(
                "train fraction must lie in (0, 1), got {}",
                self.train_fraction
            )));
        }
        Ok(())
    }
}

/// Sorted (train, test) row indices for `spec`.
///
/// Without stratification the train part has `round(f·N)` rows. With it,
/// each class contributes `round(f·N_c)` rows, so per-class counts are within
/// one of the ideal ratio.
pub fn split_indices(labels: &DVector<f64>, spec: &SplitSpec) -> Result<(Vec<usize>, Vec<usize>)> {
    spec.validate()?;
    let n = labels.len();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    if spec.stratified {
        for class in [1.0, -1.0] {
            let mut idx: Vec<usize> = (0..n).filter(|&i| labels[i] == class).collect();
            if idx.is_empty() {
                continue;
            }
            let t = (spec.train_fraction * idx.len() as f64).round() as usize;
            if t == 0 || t == idx.len() {
                return Err(Error::Data(format!(
                    "stratified split leaves class {class:+} empty in one part ({} examples, train fraction {})",
                    idx.len(),
                    spec.train_fraction
                )));
            }
            idx.shuffle(&mut rng);
            train.extend_from_slice(&idx[..t]);
            test.extend_from_slice(&idx[t..]);
        }
    } else {
        let t = (spec.train_fraction * n as f64).round() as usize;
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(&mut rng);
        train.extend_from_slice(&idx[..t.min(n)]);
        test.extend_from_slice(&idx[t.min(n)..]);
    }
    if train.is_empty() || test.is_empty() {
        return Err(Error::Data(format!(
            "split of {n} examples at fraction {} leaves an empty part",
            spec.train_fraction
        )));
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

pub fn split(
    dataset: &MultiViewDataset,
    spec: &SplitSpec,
) -> Result<(MultiViewDataset, MultiViewDataset)> {
    let (train, test) = split_indices(dataset.labels(), spec)?;
    Ok((dataset.subset(&train)?, dataset.subset(&test)?))
}

/// Fraction of the training data held out for validation in each repeat.
pub const VALIDATION_FRACTION: f64 = 0.2;

/// `k` repeated random train/validation partitions, each holding out 20% of
/// the `n` indices for validation.
///
/// These are not disjoint folds: every repeat draws a fresh random 80/20
/// partition.
pub fn kfold_indices(n: usize, k: usize, seed: u64) -> Result<Vec<(Vec<usize>, Vec<usize>)>> {
    repeated_holdout_indices(n, k, VALIDATION_FRACTION, seed)
}

pub fn repeated_holdout_indices(
    n: usize,
    k: usize,
    validation_fraction: f64,
    seed: u64,
) -> Result<Vec<(Vec<usize>, Vec<usize>)>> {
    if k < 2 {
        return Err(Error::invalid(format!("fold count must be at least 2 (got {k})")));
    }
    if n < k {
        return Err(Error::invalid(format!("{n} examples cannot fill {k} folds")));
    }
    if !(validation_fraction > 0.0 && validation_fraction < 1.0) {
        return Err(Error::invalid("validation fraction must lie in (0, 1)"));
    }
    let v = ((validation_fraction * n as f64).round() as usize).clamp(1, n - 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(k);
    for _ in 0..k {
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(&mut rng);
        let mut val = idx[..v].to_vec();
        let mut train = idx[v..].to_vec();
        val.sort_unstable();
        train.sort_unstable();
        out.push((train, val));
    }
    Ok(out)
}

/// Sorted, duplicate-free and within `[0, n)`.
pub fn is_valid_index_set(idx: &[usize], n: usize) -> bool {
    idx.windows(2).all(|w| w[0] < w[1]) && idx.last().map_or(true, |&l| l < n)
}

/// Map indices of a parent dataset onto positions within `part` (itself a
/// sorted list of parent indices), keeping only those present.
pub fn restrict_index_set(set: &[usize], part: &[usize]) -> Vec<usize> {
    let members: BTreeSet<usize> = set.iter().copied().collect();
    part.iter()
        .enumerate()
        .filter(|(_, i)| members.contains(i))
        .map(|(pos, _)| pos)
        .collect()
}
