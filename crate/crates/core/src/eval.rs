//! Evaluation protocols: before/after classification, word-similarity
//! preservation, Sym/Asym transfer, and a 2D PCA export.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::inlp::{run_inlp, train_logistic, train_softmax, ClassifierConfig, InlpConfig, Projection};
use crate::labeled::LabeledVectorSet;
use crate::linalg::{cosine, to_matrix};
use crate::space::EmbeddingSpace;

#[derive(Debug, Clone, PartialEq)]
pub struct SplitSpec {
    pub train_frac: f64,
    pub dev_frac: f64,
    pub test_frac: f64,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            train_frac: 0.70,
            dev_frac: 0.15,
            test_frac: 0.15,
            seed: 1,
        }
    }
}

impl SplitSpec {
    pub fn problems(&self) -> Vec<String> {
        let fracs = [self.train_frac, self.dev_frac, self.test_frac];
        let mut out = Vec::new();
        if fracs.iter().any(|f| !(f.is_finite() && *f > 0.0)) {
            out.push("split fractions must all be > 0".to_string());
        }
        if (fracs.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            out.push(format!(
                "split fractions must sum to 1 (got {})",
                fracs.iter().sum::<f64>()
            ));
        }
        out
    }

    fn fractions(&self) -> [f64; 3] {
        [self.train_frac, self.dev_frac, self.test_frac]
    }
}

#[derive(Debug, Clone)]
pub struct Split {
    pub train: LabeledVectorSet,
    pub dev: LabeledVectorSet,
    pub test: LabeledVectorSet,
}

/// Largest-remainder rounding of `total · fracs` to integers summing to `total`.
fn apportion(total: usize, fracs: &[f64; 3]) -> [usize; 3] {
    let exact: Vec<f64> = fracs.iter().map(|f| f * total as f64).collect();
    let mut out = [0usize; 3];
    for (o, e) in out.iter_mut().zip(&exact) {
        *o = e.floor() as usize;
    }
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| {
        let ra = exact[a] - exact[a].floor();
        let rb = exact[b] - exact[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    let mut left = total - out.iter().sum::<usize>();
    for &p in order.iter().cycle() {
        if left == 0 {
            break;
        }
        out[p] += 1;
        left -= 1;
    }
    out
}

/// Stratified, seeded three-way split.
///
/// Every class gets the floor of its exact share per partition; the leftover
/// items are then handed out so that the partition totals match the rounded
/// global targets and no class exceeds its exact share by a full item.
pub fn split(data: &LabeledVectorSet, spec: &SplitSpec) -> Result<Split> {
    let problems = spec.problems();
    if !problems.is_empty() {
        return Err(Error::InvalidArgument(problems.join("; ")));
    }
    if data.len() < 10 {
        return Err(Error::Degenerate(format!(
            "need at least 10 examples to split, got {}",
            data.len()
        )));
    }
    let fracs = spec.fractions();
    let counts = data.class_counts();
    if let Some((c, n)) = counts.iter().enumerate().find(|&(_, &n)| n > 0 && n < 3) {
        return Err(Error::Degenerate(format!(
            "class `{}` has only {n} examples (need at least 3)",
            data.label_names()[c]
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); counts.len()];
    for (i, &l) in data.labels().iter().enumerate() {
        by_class[l].push(i);
    }
    for members in by_class.iter_mut() {
        members.shuffle(&mut rng);
    }

    let mut alloc: Vec<[usize; 3]> = counts
        .iter()
        .map(|&n| {
            let mut a = [0; 3];
            for p in 0..3 {
                a[p] = (fracs[p] * n as f64).floor() as usize;
            }
            a
        })
        .collect();
    let targets = apportion(data.len(), &fracs);
    let mut need: [usize; 3] =
        std::array::from_fn(|p| targets[p].saturating_sub(alloc.iter().map(|a| a[p]).sum::<usize>()));
    // Greedy 0/1 allocation: classes with the most leftovers first, each
    // leftover going to the partition still needing the most.
    let mut classes: Vec<usize> = (0..counts.len()).collect();
    let leftover = |c: usize, alloc: &[[usize; 3]]| counts[c] - alloc[c].iter().sum::<usize>();
    classes.sort_by_key(|&c| (std::cmp::Reverse(leftover(c, &alloc)), c));
    for c in classes {
        let mut used = [false; 3];
        for _ in 0..leftover(c, &alloc) {
            let pick = (0..3)
                .filter(|&p| !used[p])
                .max_by(|&a, &b| need[a].cmp(&need[b]).then(b.cmp(&a)))
                .unwrap_or(0);
            used[pick] = true;
            alloc[c][pick] += 1;
            need[pick] = need[pick].saturating_sub(1);
        }
    }

    let mut parts: [Vec<usize>; 3] = Default::default();
    for (members, a) in by_class.iter().zip(&alloc) {
        let mut rest = members.as_slice();
        for p in 0..3 {
            let (take, tail) = rest.split_at(a[p]);
            parts[p].extend_from_slice(take);
            rest = tail;
        }
    }
    for p in parts.iter_mut() {
        p.sort_unstable();
    }
    Ok(Split {
        train: data.select(&parts[0]),
        dev: data.select(&parts[1]),
        test: data.select(&parts[2]),
    })
}

/// Seeded downsampling of every present class to the size of the smallest
/// one. Kept rows stay in their original order.
pub fn balance_classes(data: &LabeledVectorSet, seed: u64) -> Result<LabeledVectorSet> {
    let counts = data.class_counts();
    let smallest = counts.iter().copied().filter(|&n| n > 0).min().unwrap_or(0);
    if counts.iter().filter(|&&n| n > 0).count() < 2 {
        return Err(Error::Degenerate(
            "balancing needs at least two populated classes".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut keep = Vec::with_capacity(smallest * counts.len());
    for c in 0..counts.len() {
        let mut members: Vec<usize> = (0..data.len()).filter(|&i| data.labels()[i] == c).collect();
        members.shuffle(&mut rng);
        keep.extend_from_slice(&members[..smallest.min(members.len())]);
    }
    keep.sort_unstable();
    Ok(data.select(&keep))
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub task: String,
    pub accuracy_before: f64,
    pub accuracy_after: f64,
    pub majority_baseline: f64,
    pub n_train: usize,
    pub n_dev: usize,
    pub n_test: usize,
    pub iterations_used: usize,
    pub converged: bool,
    pub seed: u64,
}

impl EvalReport {
    fn fields(&self) -> Vec<(&'static str, String)> {
        vec![
            ("task", self.task.clone()),
            ("accuracy_before", format!("{:.6}", self.accuracy_before)),
            ("accuracy_after", format!("{:.6}", self.accuracy_after)),
            ("majority_baseline", format!("{:.6}", self.majority_baseline)),
            ("n_train", self.n_train.to_string()),
            ("n_dev", self.n_dev.to_string()),
            ("n_test", self.n_test.to_string()),
            ("iterations_used", self.iterations_used.to_string()),
            ("converged", self.converged.to_string()),
            ("seed", self.seed.to_string()),
        ]
    }

    pub fn to_tsv(&self) -> String {
        metrics_tsv(&self.fields())
    }

    pub fn to_key_values(&self) -> String {
        key_values(&self.fields())
    }
}

fn metrics_tsv(fields: &[(&str, String)]) -> String {
    let mut out = String::from("metric\tvalue\n");
    for (k, v) in fields {
        out.push_str(&format!("{k}\t{v}\n"));
    }
    out
}

fn key_values(fields: &[(&str, String)]) -> String {
    let mut sorted: Vec<&(&str, String)> = fields.iter().collect();
    sorted.sort_by_key(|(k, _)| *k);
    sorted.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
}

/// Splits `data`, measures how well a linear classifier recovers the label,
/// runs INLP on train/dev, and measures again on the projected data.
pub fn classify_before_after(
    task: &str,
    data: &LabeledVectorSet,
    spec: &SplitSpec,
    config: &InlpConfig,
) -> Result<(EvalReport, Projection)> {
    if data.num_classes() != 2 {
        return Err(Error::InvalidArgument(format!(
            "classification needs binary labels, data declares {}",
            data.num_classes()
        )));
    }
    let Split { train, dev, test } = split(data, spec)?;
    let before = train_logistic(&train, &config.classifier)?.accuracy(&test)?;
    let proj = run_inlp(&train, &dev, config)?;
    let train_p = proj.apply_set(&train)?;
    let test_p = proj.apply_set(&test)?;
    let after = train_logistic(&train_p, &config.classifier)?.accuracy(&test_p)?;
    let report = EvalReport {
        task: task.to_string(),
        accuracy_before: before,
        accuracy_after: after,
        majority_baseline: test.majority_fraction(),
        n_train: train.len(),
        n_dev: dev.len(),
        n_test: test.len(),
        iterations_used: proj.iterations,
        converged: proj.converged,
        seed: spec.seed,
    };
    Ok((report, proj))
}

/// Reports of [`classify_before_after`] over several split seeds.
#[derive(Debug, Clone, PartialEq)]
pub struct RepeatedEval {
    pub runs: Vec<EvalReport>,
}

impl RepeatedEval {
    fn mean(&self, f: impl Fn(&EvalReport) -> f64) -> f64 {
        self.runs.iter().map(f).sum::<f64>() / self.runs.len().max(1) as f64
    }

    pub fn mean_before(&self) -> f64 {
        self.mean(|r| r.accuracy_before)
    }

    pub fn mean_after(&self) -> f64 {
        self.mean(|r| r.accuracy_after)
    }

    pub fn mean_majority(&self) -> f64 {
        self.mean(|r| r.majority_baseline)
    }

    /// The single-run metric block, or a per-seed table with a mean row.
    pub fn to_tsv(&self) -> String {
        if let [only] = self.runs.as_slice() {
            return only.to_tsv();
        }
        let mut out =
            String::from("seed\taccuracy_before\taccuracy_after\tmajority_baseline\titerations_used\tconverged\n");
        for r in &self.runs {
            out.push_str(&format!(
                "{}\t{:.6}\t{:.6}\t{:.6}\t{}\t{}\n",
                r.seed, r.accuracy_before, r.accuracy_after, r.majority_baseline, r.iterations_used, r.converged
            ));
        }
        out.push_str(&format!(
            "mean\t{:.6}\t{:.6}\t{:.6}\t\t\n",
            self.mean_before(),
            self.mean_after(),
            self.mean_majority()
        ));
        out
    }

    pub fn to_key_values(&self) -> String {
        if let [only] = self.runs.as_slice() {
            return only.to_key_values();
        }
        let mut fields: Vec<(String, String)> = vec![
            ("task".into(), self.runs[0].task.clone()),
            ("runs".into(), self.runs.len().to_string()),
            ("mean_accuracy_before".into(), format!("{:.6}", self.mean_before())),
            ("mean_accuracy_after".into(), format!("{:.6}", self.mean_after())),
            ("mean_majority_baseline".into(), format!("{:.6}", self.mean_majority())),
        ];
        for (i, r) in self.runs.iter().enumerate() {
            for (k, v) in r.fields() {
                if k != "task" {
                    fields.push((format!("run{i}.{k}"), v));
                }
            }
        }
        fields.sort();
        fields.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }
}

/// Runs [`classify_before_after`] with split seeds `spec.seed`,
/// `spec.seed + 1`, ... and returns every report plus the first projection.
pub fn classify_repeated(
    task: &str,
    data: &LabeledVectorSet,
    spec: &SplitSpec,
    config: &InlpConfig,
    runs: usize,
) -> Result<(RepeatedEval, Projection)> {
    if runs == 0 {
        return Err(Error::InvalidArgument("runs must be >= 1".into()));
    }
    let mut reports = Vec::with_capacity(runs);
    let mut first = None;
    for i in 0..runs {
        let seeded = SplitSpec {
            seed: spec.seed.wrapping_add(i as u64),
            ..spec.clone()
        };
        let (report, proj) = classify_before_after(task, data, &seeded, config)?;
        reports.push(report);
        first.get_or_insert(proj);
    }
    Ok((RepeatedEval { runs: reports }, first.expect("runs >= 1")))
}

#[derive(Debug, Clone, PartialEq)]
pub struct GoldPair {
    pub first: String,
    pub second: String,
    pub score: f64,
}

pub fn load_gold(path: impl AsRef<Path>) -> Result<Vec<GoldPair>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_gold(BufReader::new(file), &path.display().to_string())
}

pub fn read_gold<R: BufRead>(reader: R, name: &str) -> Result<Vec<GoldPair>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(name, e))?;
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        let [first, second, score] = cols[..] else {
            return Err(Error::parse(name, i + 1, "expected `w1<TAB>w2<TAB>score`"));
        };
        let score: f64 = score
            .trim()
            .parse()
            .map_err(|_| Error::parse(name, i + 1, format!("invalid score `{score}`")))?;
        out.push(GoldPair {
            first: first.to_string(),
            second: second.to_string(),
            score,
        });
    }
    Ok(out)
}

pub fn save_gold(pairs: &[GoldPair], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut text = String::new();
    for p in pairs {
        text.push_str(&format!("{}\t{}\t{}\n", p.first, p.second, p.score));
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityResult {
    pub rho: f64,
    pub covered: usize,
    pub total: usize,
}

/// Ranks starting at 1, ties sharing their average rank.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut cov, mut va, mut vb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        cov += (x - ma) * (y - mb);
        va += (x - ma).powi(2);
        vb += (y - mb).powi(2);
    }
    (va > 0.0 && vb > 0.0).then(|| (cov / (va.sqrt() * vb.sqrt())).clamp(-1.0, 1.0))
}

/// Spearman correlation between gold scores and cosine similarities, over
/// the pairs whose words are both in the space.
pub fn spearman_similarity(space: &EmbeddingSpace, gold: &[GoldPair]) -> Result<SimilarityResult> {
    let mut gold_scores = Vec::new();
    let mut cosines = Vec::new();
    for p in gold {
        if let (Some(a), Some(b)) = (space.vector(&p.first), space.vector(&p.second)) {
            gold_scores.push(p.score);
            cosines.push(cosine(a, b));
        }
    }
    if gold_scores.len() < 5 {
        return Err(Error::Degenerate(format!(
            "only {} gold pairs are covered by the vocabulary (need at least 5)",
            gold_scores.len()
        )));
    }
    let rho = pearson(&average_ranks(&gold_scores), &average_ranks(&cosines))
        .ok_or_else(|| Error::Degenerate("gold scores or similarities are constant".into()))?;
    Ok(SimilarityResult {
        rho,
        covered: gold_scores.len(),
        total: gold.len(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SymAsymReport {
    pub original_sym: f64,
    pub shifted_sym: f64,
    pub debiased_sym: f64,
    pub original_asym: f64,
    pub shifted_asym: f64,
    pub debiased_asym: f64,
    pub majority_baseline: f64,
    pub seed: u64,
}

impl SymAsymReport {
    fn fields(&self) -> Vec<(&'static str, String)> {
        vec![
            ("original_sym", format!("{:.6}", self.original_sym)),
            ("shifted_sym", format!("{:.6}", self.shifted_sym)),
            ("debiased_sym", format!("{:.6}", self.debiased_sym)),
            ("original_asym", format!("{:.6}", self.original_asym)),
            ("shifted_asym", format!("{:.6}", self.shifted_asym)),
            ("debiased_asym", format!("{:.6}", self.debiased_asym)),
            ("majority_baseline", format!("{:.6}", self.majority_baseline)),
            ("seed", self.seed.to_string()),
        ]
    }

    /// Table layout: one row per model, Sym and Asym columns.
    pub fn to_tsv(&self) -> String {
        format!(
            "model\tsym\tasym\nOriginal\t{:.6}\t{:.6}\nShifted\t{:.6}\t{:.6}\nDebiased\t{:.6}\t{:.6}\n",
            self.original_sym,
            self.original_asym,
            self.shifted_sym,
            self.shifted_asym,
            self.debiased_sym,
            self.debiased_asym
        )
    }

    pub fn to_key_values(&self) -> String {
        key_values(&self.fields())
    }
}

/// Trains Original, Shifted, and Debiased softmax models and tests each on
/// matching (Sym) and original (Asym) test data. The Debiased model sees
/// every input through `proj`.
pub fn sym_asym_eval(
    orig_train: &LabeledVectorSet,
    orig_test: &LabeledVectorSet,
    shifted_train: &LabeledVectorSet,
    shifted_test: &LabeledVectorSet,
    proj: &Projection,
    config: &ClassifierConfig,
) -> Result<SymAsymReport> {
    let sets = [orig_train, orig_test, shifted_train, shifted_test];
    for s in &sets[1..] {
        if s.dim() != orig_train.dim() {
            return Err(Error::DimensionMismatch {
                expected: orig_train.dim(),
                actual: s.dim(),
            });
        }
        if s.label_names() != orig_train.label_names() {
            return Err(Error::InvalidArgument("all four sets must share one label set".into()));
        }
    }
    if proj.dim() != orig_train.dim() {
        return Err(Error::DimensionMismatch {
            expected: orig_train.dim(),
            actual: proj.dim(),
        });
    }
    let original = train_softmax(orig_train, config)?;
    let shifted = train_softmax(shifted_train, config)?;
    let debiased = train_softmax(&proj.apply_set(shifted_train)?, config)?;
    let original_sym = original.accuracy(orig_test)?;
    Ok(SymAsymReport {
        original_sym,
        shifted_sym: shifted.accuracy(shifted_test)?,
        debiased_sym: debiased.accuracy(&proj.apply_set(shifted_test)?)?,
        original_asym: original_sym,
        shifted_asym: shifted.accuracy(orig_test)?,
        debiased_asym: debiased.accuracy(&proj.apply_set(orig_test)?)?,
        majority_baseline: orig_test.majority_fraction(),
        seed: config.seed,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Point2d {
    pub id: String,
    pub label: String,
    pub x: f64,
    pub y: f64,
}

/// Projects the mean-centered set onto its top two principal components.
/// Each component's largest-magnitude loading is made positive.
pub fn pca_2d(set: &LabeledVectorSet) -> Result<Vec<Point2d>> {
    let (n, d) = (set.len(), set.dim());
    if n < 3 {
        return Err(Error::Degenerate(format!("need at least 3 vectors, got {n}")));
    }
    if d < 2 {
        return Err(Error::Degenerate("need at least 2 dimensions".into()));
    }
    let mut x = to_matrix(n, d, set.data());
    let mean = x.row_mean();
    for mut row in x.row_iter_mut() {
        row -= &mean;
    }
    let cov: DMatrix<f64> = x.transpose() * &x / (n as f64 - 1.0);
    let eig = cov.symmetric_eigen();
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let top = eig.eigenvalues[order[0]];
    let second = eig.eigenvalues[order[1]];
    if top.is_nan() || top <= 0.0 || second <= top * 1e-12 {
        return Err(Error::Degenerate("data has rank < 2".into()));
    }
    let mut components = DMatrix::zeros(d, 2);
    for (c, &k) in order[..2].iter().enumerate() {
        let mut v = eig.eigenvectors.column(k).into_owned();
        let pivot = v.iter().enumerate().fold(
            (0, 0.0f64),
            |best, (i, &a)| if a.abs() > best.1.abs() + 1e-12 { (i, a) } else { best },
        );
        if pivot.1 < 0.0 {
            v = -v;
        }
        components.set_column(c, &v);
    }
    let coords = x * components;
    Ok((0..n)
        .map(|i| Point2d {
            id: set.ids()[i].clone(),
            label: set.label_names()[set.labels()[i]].clone(),
            x: coords[(i, 0)],
            y: coords[(i, 1)],
        })
        .collect())
}

pub fn export_2d(set: &LabeledVectorSet, path: impl AsRef<Path>) -> Result<()> {
    let points = pca_2d(set)?;
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    for p in &points {
        writeln!(w, "{}\t{}\t{:.6}\t{:.6}", p.id, p.label, p.x, p.y).map_err(io)?;
    }
    w.flush().map_err(io)
}
