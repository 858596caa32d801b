//! Iterative nullspace projection.
//!
//! Each round trains a linear classifier for the protected attribute on the
//! currently projected data, then removes the classifier's rowspace. Two
//! ways of accumulating the rounds are offered:
//!
//! * [`ProjectionMode::OrthogonalBasis`] keeps one orthonormal basis `B` of
//!   every removed direction and uses `P = I − BBᵀ` (symmetric, idempotent).
//! * [`ProjectionMode::Product`] composes the per-round projections, newest
//!   applied last: `P ← P_{N(W_i)} · P`.
//!
//! Vectors are rows; applying `P` maps every row `x` to `P·x`.

use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::align::write_rows;
use crate::error::{Error, Result};
use crate::labeled::LabeledVectorSet;
use crate::linalg::{dot, norm, to_matrix, to_row_major, transform_rows};
use crate::space::EmbeddingSpace;

/// Residual norm under which a new direction is treated as already spanned.
pub const SPAN_TOL: f64 = 1e-8;
const SVD_REL_TOL: f64 = 1e-12;

pub const WORD_LEVEL_MAX_CLASSIFIERS: usize = 35;
pub const SENTENCE_LEVEL_MAX_CLASSIFIERS: usize = 45;

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub l2: f64,
    pub seed: u64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        ClassifierConfig {
            epochs: 7,
            learning_rate: 0.1,
            l2: 1e-4,
            seed: 23,
        }
    }
}

impl ClassifierConfig {
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.epochs == 0 {
            out.push("classifier epochs must be >= 1".to_string());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            out.push("classifier learning rate must be > 0".to_string());
        }
        if !(self.l2 >= 0.0 && self.l2.is_finite()) {
            out.push("l2 penalty must be >= 0".to_string());
        }
        out
    }
}

/// A linear model `scores = W·x + b`; binary models have a single row.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearClassifier {
    pub weights: DMatrix<f64>,
    pub bias: DVector<f64>,
    pub trained_accuracy: f64,
}

impl LinearClassifier {
    pub fn dim(&self) -> usize {
        self.weights.ncols()
    }

    fn scores(&self, x: &[f64]) -> impl Iterator<Item = f64> + '_ {
        let x = x.to_vec();
        (0..self.weights.nrows()).map(move |r| {
            let row = self.weights.row(r);
            row.iter().zip(&x).map(|(w, v)| w * v).sum::<f64>() + self.bias[r]
        })
    }

    pub fn predict(&self, x: &[f64]) -> usize {
        if self.weights.nrows() == 1 {
            return usize::from(self.scores(x).next().unwrap_or(0.0) >= 0.0);
        }
        let mut best = (f64::NEG_INFINITY, 0);
        for (k, s) in self.scores(x).enumerate() {
            if s > best.0 {
                best = (s, k);
            }
        }
        best.1
    }

    pub fn accuracy(&self, data: &LabeledVectorSet) -> Result<f64> {
        if data.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                actual: data.dim(),
            });
        }
        if data.is_empty() {
            return Ok(0.0);
        }
        let correct = (0..data.len())
            .filter(|&i| self.predict(data.row(i)) == data.labels()[i])
            .count();
        Ok(correct as f64 / data.len() as f64)
    }
}

/// Running mean of the parameter vector over the final epoch's updates.
struct Average {
    sum: Vec<f64>,
    n: usize,
}

impl Average {
    fn new(len: usize) -> Self {
        Average {
            sum: vec![0.0; len],
            n: 0,
        }
    }

    fn add(&mut self, params: impl Iterator<Item = f64>) {
        self.sum.iter_mut().zip(params).for_each(|(s, p)| *s += p);
        self.n += 1;
    }

    fn mean(&self) -> Vec<f64> {
        let n = self.n.max(1) as f64;
        self.sum.iter().map(|s| s / n).collect()
    }
}

#[inline]
fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn check_binary(data: &LabeledVectorSet) -> Result<()> {
    if data.num_classes() != 2 {
        return Err(Error::InvalidArgument(format!(
            "binary classifier needs 2 classes, data declares {}",
            data.num_classes()
        )));
    }
    let counts = data.class_counts();
    if counts.iter().any(|&c| c < 2) {
        return Err(Error::Degenerate(format!(
            "each class needs at least 2 examples (counts {counts:?})"
        )));
    }
    Ok(())
}

/// Binary logistic regression by seeded SGD with an L2 penalty. The
/// returned weights are the average of the iterates over the final epoch.
pub fn train_logistic(data: &LabeledVectorSet, config: &ClassifierConfig) -> Result<LinearClassifier> {
    train_logistic_from(data, config, None)
}

/// As [`train_logistic`], optionally starting from an earlier model.
pub fn train_logistic_from(
    data: &LabeledVectorSet,
    config: &ClassifierConfig,
    init: Option<&LinearClassifier>,
) -> Result<LinearClassifier> {
    check_binary(data)?;
    let d = data.dim();
    let (mut w, mut b) = match init {
        Some(clf) if clf.dim() == d && clf.weights.nrows() == 1 => {
            (clf.weights.row(0).iter().copied().collect::<Vec<_>>(), clf.bias[0])
        }
        _ => (vec![0.0; d], 0.0),
    };
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut avg = Average::new(d + 1);
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let lr = config.learning_rate / (1.0 + epoch as f64);
        let last = epoch + 1 == config.epochs;
        for &i in &order {
            let x = data.row(i);
            let y = data.labels()[i] as f64;
            let g = sigmoid(dot(&w, x) + b) - y;
            for (wj, xj) in w.iter_mut().zip(x) {
                *wj -= lr * (g * xj + config.l2 * *wj);
            }
            b -= lr * g;
            if last {
                avg.add(w.iter().copied().chain([b]));
            }
        }
    }
    let mean = avg.mean();
    let mut clf = LinearClassifier {
        weights: DMatrix::from_row_slice(1, d, &mean[..d]),
        bias: DVector::from_element(1, mean[d]),
        trained_accuracy: 0.0,
    };
    clf.trained_accuracy = clf.accuracy(data)?;
    Ok(clf)
}

/// Multiclass softmax regression by seeded SGD with an L2 penalty.
pub fn train_softmax(data: &LabeledVectorSet, config: &ClassifierConfig) -> Result<LinearClassifier> {
    let c = data.num_classes();
    let d = data.dim();
    if c < 2 {
        return Err(Error::InvalidArgument("softmax needs at least 2 classes".into()));
    }
    if data.is_empty() {
        return Err(Error::Degenerate("no training examples".into()));
    }
    let mut w = vec![0.0; c * d];
    let mut b = vec![0.0; c];
    let mut probs = vec![0.0; c];
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut avg = Average::new(c * d + c);
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let lr = config.learning_rate / (1.0 + epoch as f64);
        let last = epoch + 1 == config.epochs;
        for &i in &order {
            let x = data.row(i);
            let y = data.labels()[i];
            for k in 0..c {
                probs[k] = dot(&w[k * d..(k + 1) * d], x) + b[k];
            }
            let max = probs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut total = 0.0;
            for p in probs.iter_mut() {
                *p = (*p - max).exp();
                total += *p;
            }
            for k in 0..c {
                let g = probs[k] / total - f64::from(u8::from(k == y));
                for (wj, xj) in w[k * d..(k + 1) * d].iter_mut().zip(x) {
                    *wj -= lr * (g * xj + config.l2 * *wj);
                }
                b[k] -= lr * g;
            }
            if last {
                avg.add(w.iter().chain(&b).copied());
            }
        }
    }
    let mean = avg.mean();
    let mut clf = LinearClassifier {
        weights: DMatrix::from_row_slice(c, d, &mean[..c * d]),
        bias: DVector::from_row_slice(&mean[c * d..]),
        trained_accuracy: 0.0,
    };
    clf.trained_accuracy = clf.accuracy(data)?;
    Ok(clf)
}

/// Orthonormal basis of the rowspace of `w`, via SVD.
pub fn rowspace_basis(w: &DMatrix<f64>) -> Result<Vec<Vec<f64>>> {
    let svd = w.clone().svd(false, true);
    let v_t = svd
        .v_t
        .ok_or_else(|| Error::Degenerate("SVD did not converge".into()))?;
    let max = svd.singular_values.max();
    if max == 0.0 || !max.is_finite() {
        return Err(Error::Degenerate("classifier weights are all zero".into()));
    }
    let tol = max * SVD_REL_TOL * w.nrows().max(w.ncols()) as f64;
    Ok(svd
        .singular_values
        .iter()
        .enumerate()
        .filter(|&(_, &s)| s > tol)
        .map(|(k, _)| v_t.row(k).iter().copied().collect())
        .collect())
}

/// `I − BBᵀ` for an orthonormal basis `B` given as rows.
pub fn complement_projector(d: usize, basis: &[Vec<f64>]) -> DMatrix<f64> {
    let mut p = DMatrix::identity(d, d);
    for b in basis {
        for i in 0..d {
            for j in 0..d {
                p[(i, j)] -= b[i] * b[j];
            }
        }
    }
    p
}

/// Projection onto the nullspace of `W`: `P = I − BBᵀ` with `B` an
/// orthonormal basis of rowspace(W).
pub fn nullspace_projection(weights: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let basis = rowspace_basis(weights)?;
    Ok(complement_projector(weights.ncols(), &basis))
}

/// Gram–Schmidt `v` against `basis` (twice, for stability); returns the
/// normalized residual unless it is within [`SPAN_TOL`] of the span.
fn orthonormal_residual(basis: &[Vec<f64>], v: &[f64]) -> Option<Vec<f64>> {
    let scale = norm(v);
    if scale == 0.0 {
        return None;
    }
    let mut r: Vec<f64> = v.iter().map(|x| x / scale).collect();
    for _ in 0..2 {
        for b in basis {
            let c = dot(&r, b);
            r.iter_mut().zip(b).for_each(|(x, y)| *x -= c * y);
        }
    }
    let n = norm(&r);
    (n >= SPAN_TOL).then(|| r.into_iter().map(|x| x / n).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ProjectionMode {
    Product,
    #[default]
    OrthogonalBasis,
}

impl fmt::Display for ProjectionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ProjectionMode::Product => "product",
            ProjectionMode::OrthogonalBasis => "orthogonal-basis",
        })
    }
}

impl FromStr for ProjectionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "product" => Ok(ProjectionMode::Product),
            "orthogonal-basis" => Ok(ProjectionMode::OrthogonalBasis),
            other => Err(Error::InvalidArgument(format!(
                "unknown projection mode `{other}` (expected product or orthogonal-basis)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InlpConfig {
    pub max_classifiers: usize,
    pub stop_epsilon: f64,
    pub mode: ProjectionMode,
    pub classifier: ClassifierConfig,
    pub warm_start: bool,
}

impl Default for InlpConfig {
    fn default() -> Self {
        InlpConfig {
            max_classifiers: WORD_LEVEL_MAX_CLASSIFIERS,
            stop_epsilon: 0.01,
            mode: ProjectionMode::OrthogonalBasis,
            classifier: ClassifierConfig::default(),
            warm_start: false,
        }
    }
}

impl InlpConfig {
    pub fn sentence_level() -> Self {
        InlpConfig {
            max_classifiers: SENTENCE_LEVEL_MAX_CLASSIFIERS,
            ..Self::default()
        }
    }

    pub fn problems(&self) -> Vec<String> {
        let mut out = self.classifier.problems();
        if self.max_classifiers == 0 {
            out.push("max classifiers must be >= 1".to_string());
        }
        if !(0.0..1.0).contains(&self.stop_epsilon) {
            out.push("stop epsilon must lie in [0, 1)".to_string());
        }
        out
    }
}

/// A linear guard learned by [`run_inlp`] (or built directly).
#[derive(Debug, Clone)]
pub struct Projection {
    pub matrix: DMatrix<f64>,
    /// Orthonormal directions removed so far.
    pub basis: Vec<Vec<f64>>,
    pub mode: ProjectionMode,
    /// Classifiers trained, including the final one that failed to beat the
    /// majority baseline.
    pub iterations: usize,
    /// Dev accuracy of each trained classifier.
    pub accuracy_trace: Vec<f64>,
    pub converged: bool,
    /// Classifiers whose rowspaces were removed, in order. Not serialized.
    pub classifiers: Vec<LinearClassifier>,
}

impl Projection {
    pub fn identity(d: usize) -> Self {
        Self::from_basis(d, &[]).expect("empty basis is valid")
    }

    /// Orthogonal-basis projection removing the span of `directions`.
    pub fn from_basis(d: usize, directions: &[Vec<f64>]) -> Result<Self> {
        let mut basis: Vec<Vec<f64>> = Vec::new();
        for v in directions {
            if v.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    actual: v.len(),
                });
            }
            if let Some(r) = orthonormal_residual(&basis, v) {
                basis.push(r);
            }
        }
        Ok(Projection {
            matrix: complement_projector(d, &basis),
            basis,
            mode: ProjectionMode::OrthogonalBasis,
            iterations: 0,
            accuracy_trace: Vec::new(),
            converged: true,
            classifiers: Vec::new(),
        })
    }

    /// Projection removing every direction.
    pub fn zero(d: usize) -> Self {
        let axes: Vec<Vec<f64>> = (0..d)
            .map(|i| (0..d).map(|j| f64::from(u8::from(i == j))).collect())
            .collect();
        Self::from_basis(d, &axes).expect("axes are valid")
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// Maps every row `x` of a row-major `m × d` buffer to `P·x`.
    pub fn apply_rows(&self, rows: &[f64], d: usize) -> Result<Vec<f64>> {
        if d != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                actual: d,
            });
        }
        if !rows.len().is_multiple_of(d) {
            return Err(Error::DimensionMismatch {
                expected: d,
                actual: rows.len() % d,
            });
        }
        Ok(transform_rows(rows, d, &self.matrix))
    }

    pub fn apply_matrix(&self, vectors: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if vectors.ncols() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                actual: vectors.ncols(),
            });
        }
        Ok(vectors * self.matrix.transpose())
    }

    pub fn apply_set(&self, data: &LabeledVectorSet) -> Result<LabeledVectorSet> {
        let out = self.apply_rows(data.data(), data.dim())?;
        data.with_data(out, data.dim())
    }

    pub fn apply_space(&self, space: &EmbeddingSpace) -> Result<EmbeddingSpace> {
        let out = self.apply_rows(space.data(), space.dim())?;
        space.with_data(out, space.dim())
    }

    pub fn rank(&self) -> usize {
        let sv = self.matrix.singular_values();
        let max = sv.max();
        sv.iter().filter(|&&s| s > 1e-8 * max.max(1.0)).count()
    }
}

/// Runs INLP on `train`, using `dev` for the stopping rule.
pub fn run_inlp(train: &LabeledVectorSet, dev: &LabeledVectorSet, config: &InlpConfig) -> Result<Projection> {
    let problems = config.problems();
    if !problems.is_empty() {
        return Err(Error::InvalidArgument(problems.join("; ")));
    }
    let d = train.dim();
    if dev.dim() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            actual: dev.dim(),
        });
    }
    if dev.label_names() != train.label_names() {
        return Err(Error::InvalidArgument("train and dev label sets differ".into()));
    }
    check_binary(train)?;
    if dev.is_empty() {
        return Err(Error::Degenerate("dev set is empty".into()));
    }
    let majority = dev.majority_fraction();

    let mut proj = Projection::identity(d);
    proj.mode = config.mode;
    proj.converged = false;
    let mut previous: Option<LinearClassifier> = None;

    for round in 0..config.max_classifiers {
        let train_p = proj.apply_set(train)?;
        let dev_p = proj.apply_set(dev)?;
        let clf_config = ClassifierConfig {
            seed: config.classifier.seed.wrapping_add(round as u64),
            ..config.classifier.clone()
        };
        let init = if config.warm_start {
            previous.as_ref().map(|c| project_classifier(c, &proj))
        } else {
            None
        };
        let clf = train_logistic_from(&train_p, &clf_config, init.as_ref())?;
        let acc = clf.accuracy(&dev_p)?;
        proj.accuracy_trace.push(acc);
        proj.iterations += 1;
        if acc <= majority + config.stop_epsilon {
            proj.converged = true;
            break;
        }

        let directions = match rowspace_basis(&clf.weights) {
            Ok(b) => b,
            // A classifier with no weights cannot be projected out; it only
            // beat the baseline through its bias.
            Err(_) => {
                proj.converged = true;
                break;
            }
        };
        for v in &directions {
            if let Some(r) = orthonormal_residual(&proj.basis, v) {
                proj.basis.push(r);
            }
        }
        proj.matrix = match config.mode {
            ProjectionMode::OrthogonalBasis => complement_projector(d, &proj.basis),
            ProjectionMode::Product => complement_projector(d, &directions) * &proj.matrix,
        };
        previous = Some(clf.clone());
        proj.classifiers.push(clf);
    }
    Ok(proj)
}

fn project_classifier(clf: &LinearClassifier, proj: &Projection) -> LinearClassifier {
    // W·P keeps the warm start inside the projected data's span.
    LinearClassifier {
        weights: &clf.weights * &proj.matrix,
        ..clf.clone()
    }
}

pub fn save_projection(proj: &Projection, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_projection(proj, &mut w).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_projection<W: Write>(proj: &Projection, w: &mut W) -> std::io::Result<()> {
    let d = proj.dim();
    writeln!(
        w,
        "{d} mode={} iters={} converged={}",
        proj.mode, proj.iterations, proj.converged
    )?;
    write_rows(w, &to_row_major(&proj.matrix), d)?;
    for b in &proj.basis {
        write_rows(w, b, d)?;
    }
    let trace: Vec<String> = proj.accuracy_trace.iter().map(|a| format!("{a:?}")).collect();
    writeln!(w, "#acc={}", trace.join(","))
}

pub fn load_projection(path: impl AsRef<Path>) -> Result<Projection> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_projection(BufReader::new(file), &path.display().to_string())
}

pub fn read_projection<R: BufRead>(reader: R, name: &str) -> Result<Projection> {
    let mut header: Option<(usize, ProjectionMode, usize, bool)> = None;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut trace = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| Error::io(name, e))?;
        if line.trim().is_empty() {
            continue;
        }
        if let Some(acc) = line.strip_prefix("#acc=") {
            trace = acc
                .split(',')
                .filter(|s| !s.is_empty())
                .map(|s| s.parse().map_err(|_| Error::parse(name, line_no, "bad accuracy")))
                .collect::<Result<_>>()?;
            continue;
        }
        if line.starts_with('#') {
            continue;
        }
        let Some((d, ..)) = header else {
            header = Some(parse_projection_header(&line, name, line_no)?);
            continue;
        };
        let row: Vec<f64> = line
            .split_whitespace()
            .map(|x| {
                x.parse()
                    .map_err(|_| Error::parse(name, line_no, format!("invalid number `{x}`")))
            })
            .collect::<Result<_>>()?;
        if row.len() != d {
            return Err(Error::parse(name, line_no, format!("expected {d} values")));
        }
        rows.push(row);
    }
    let (d, mode, iterations, converged) = header.ok_or_else(|| Error::parse(name, 1, "missing projection header"))?;
    if rows.len() < d {
        return Err(Error::parse(name, rows.len() + 2, format!("expected {d} matrix rows")));
    }
    let basis = rows.split_off(d);
    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    Ok(Projection {
        matrix: to_matrix(d, d, &flat),
        basis,
        mode,
        iterations,
        accuracy_trace: trace,
        converged,
        classifiers: Vec::new(),
    })
}

fn parse_projection_header(line: &str, name: &str, line_no: usize) -> Result<(usize, ProjectionMode, usize, bool)> {
    let bad = || Error::parse(name, line_no, "expected `<d> mode=<mode> iters=<i> converged=<bool>`");
    let mut parts = line.split_whitespace();
    let d: usize = parts.next().and_then(|s| s.parse().ok()).ok_or_else(bad)?;
    let (mut mode, mut iters, mut converged) = (None, None, None);
    for kv in parts {
        match kv.split_once('=').ok_or_else(bad)? {
            ("mode", v) => mode = Some(v.parse::<ProjectionMode>()?),
            ("iters", v) => iters = v.parse().ok(),
            ("converged", v) => converged = v.parse().ok(),
            _ => return Err(bad()),
        }
    }
    match (mode, iters, converged) {
        (Some(m), Some(i), Some(c)) if d > 0 => Ok((d, m, i, c)),
        _ => Err(bad()),
    }
}
