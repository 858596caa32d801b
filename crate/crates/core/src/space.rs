//! Dense embedding spaces: text-vec IO, normalization, cosine k-NN and
//! mean-pooled sentence vectors.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::labeled::LabeledVectorSet;
use crate::linalg::{dot, norm};

/// Tolerance for the unit-norm invariant of normalized spaces.
pub const UNIT_NORM_TOL: f64 = 1e-6;

/// A vocabulary paired with one dense row per token.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSpace {
    vocab: Vec<String>,
    index: HashMap<String, usize>,
    data: Vec<f64>,
    dim: usize,
    counts: Option<Vec<u64>>,
    normalized: bool,
}

impl EmbeddingSpace {
    /// Builds a space from a vocabulary and a row-major `n × dim` buffer.
    pub fn new(vocab: Vec<String>, data: Vec<f64>, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidArgument("dimension must be positive".into()));
        }
        if data.len() != vocab.len() * dim {
            return Err(Error::DimensionMismatch {
                expected: vocab.len() * dim,
                actual: data.len(),
            });
        }
        let mut index = HashMap::with_capacity(vocab.len());
        for (i, token) in vocab.iter().enumerate() {
            if index.insert(token.clone(), i).is_some() {
                return Err(Error::DuplicateToken(token.clone()));
            }
        }
        Ok(EmbeddingSpace {
            vocab,
            index,
            data,
            dim,
            counts: None,
            normalized: false,
        })
    }

    /// Builds a space from `(token, vector)` pairs.
    pub fn from_rows<S, I>(rows: I) -> Result<Self>
    where
        S: Into<String>,
        I: IntoIterator<Item = (S, Vec<f64>)>,
    {
        let mut vocab = Vec::new();
        let mut data = Vec::new();
        let mut dim = None;
        for (token, v) in rows {
            match dim {
                None => dim = Some(v.len()),
                Some(d) if d != v.len() => {
                    return Err(Error::DimensionMismatch {
                        expected: d,
                        actual: v.len(),
                    })
                }
                _ => {}
            }
            vocab.push(token.into());
            data.extend(v);
        }
        let dim = dim.ok_or_else(|| Error::Degenerate("no rows given".into()))?;
        Self::new(vocab, data, dim)
    }

    /// An empty space of the given dimension.
    pub fn empty(dim: usize) -> Result<Self> {
        Self::new(Vec::new(), Vec::new(), dim)
    }

    /// Attaches per-token corpus frequencies.
    pub fn with_counts(mut self, counts: Vec<u64>) -> Result<Self> {
        if counts.len() != self.vocab.len() {
            return Err(Error::DimensionMismatch {
                expected: self.vocab.len(),
                actual: counts.len(),
            });
        }
        self.counts = Some(counts);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.vocab.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vocab.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn vocab(&self) -> &[String] {
        &self.vocab
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn counts(&self) -> Option<&[u64]> {
        self.counts.as_deref()
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn index_of(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token)
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn vector(&self, token: &str) -> Option<&[f64]> {
        self.index_of(token).map(|i| self.row(i))
    }

    pub fn count(&self, token: &str) -> Option<u64> {
        let i = self.index_of(token)?;
        self.counts.as_ref().map(|c| c[i])
    }

    pub fn rows(&self) -> impl Iterator<Item = (&str, &[f64])> {
        self.vocab
            .iter()
            .map(String::as_str)
            .zip(self.data.chunks_exact(self.dim))
    }

    /// Replaces the matrix while keeping vocabulary and counts.
    pub fn with_data(&self, data: Vec<f64>, dim: usize) -> Result<Self> {
        let mut out = Self::new(self.vocab.clone(), data, dim)?;
        out.counts = self.counts.clone();
        Ok(out)
    }

    /// Keeps the given tokens, in the order given.
    pub fn subset<S: AsRef<str>>(&self, tokens: &[S]) -> Result<Self> {
        let mut vocab = Vec::with_capacity(tokens.len());
        let mut data = Vec::with_capacity(tokens.len() * self.dim);
        let mut counts = self.counts.as_ref().map(|_| Vec::with_capacity(tokens.len()));
        for t in tokens {
            let t = t.as_ref();
            let i = self.index_of(t).ok_or_else(|| Error::UnknownToken(t.to_string()))?;
            vocab.push(t.to_string());
            data.extend_from_slice(self.row(i));
            if let (Some(out), Some(src)) = (counts.as_mut(), self.counts.as_ref()) {
                out.push(src[i]);
            }
        }
        let mut out = Self::new(vocab, data, self.dim)?;
        out.counts = counts;
        out.normalized = self.normalized;
        Ok(out)
    }

    /// Tokens whose count is at least `min_count`, in vocabulary order.
    pub fn frequent_tokens(&self, min_count: u64) -> Result<Vec<String>> {
        let counts = self
            .counts
            .as_ref()
            .ok_or_else(|| Error::InvalidArgument("space has no token counts".into()))?;
        Ok(self
            .vocab
            .iter()
            .zip(counts)
            .filter(|&(_, &c)| c >= min_count)
            .map(|(t, _)| t.clone())
            .collect())
    }

    /// Returns a copy with every row scaled to unit L2 norm.
    pub fn normalize(&self) -> Result<Self> {
        let mut data = self.data.clone();
        for (token, row) in self.vocab.iter().zip(data.chunks_exact_mut(self.dim)) {
            let n = norm(row);
            if n == 0.0 || !n.is_finite() {
                return Err(Error::ZeroVector(token.clone()));
            }
            row.iter_mut().for_each(|x| *x /= n);
        }
        let mut out = self.clone();
        out.data = data;
        out.normalized = true;
        Ok(out)
    }

    /// Checks the unit-norm invariant of a normalized space.
    pub fn check_unit_rows(&self) -> Result<()> {
        for (token, row) in self.rows() {
            if (norm(row) - 1.0).abs() > UNIT_NORM_TOL {
                return Err(Error::Degenerate(format!("row `{token}` is not unit length")));
            }
        }
        Ok(())
    }

    /// The `k` tokens most cosine-similar to `word`, excluding `word`.
    ///
    /// Ties are broken by ascending vocabulary index.
    pub fn knn(&self, word: &str, k: usize) -> Result<Vec<String>> {
        let i = self
            .index_of(word)
            .ok_or_else(|| Error::UnknownToken(word.to_string()))?;
        let index = NeighborIndex::new(self)?;
        Ok(index
            .neighbors(i, k)?
            .into_iter()
            .map(|j| self.vocab[j].clone())
            .collect())
    }
}

/// Unit-normalized copy of a space, reusable across many k-NN queries.
pub struct NeighborIndex {
    unit: Vec<f64>,
    dim: usize,
    len: usize,
}

impl NeighborIndex {
    pub fn new(space: &EmbeddingSpace) -> Result<Self> {
        let unit = if space.is_normalized() {
            space.data.clone()
        } else {
            space.normalize()?.data
        };
        Ok(NeighborIndex {
            unit,
            dim: space.dim,
            len: space.len(),
        })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.unit[i * self.dim..(i + 1) * self.dim]
    }

    /// Indices of the `k` rows nearest to row `i`, most similar first.
    pub fn neighbors(&self, i: usize, k: usize) -> Result<Vec<usize>> {
        if k == 0 {
            return Err(Error::InvalidArgument("k must be positive".into()));
        }
        if k >= self.len {
            return Err(Error::InvalidArgument(format!(
                "k={k} must be smaller than the vocabulary size {}",
                self.len
            )));
        }
        let query = self.row(i);
        let mut scored: Vec<(f64, usize)> = (0..self.len)
            .filter(|&j| j != i)
            .map(|j| (dot(query, self.row(j)), j))
            .collect();
        let by_rank = |a: &(f64, usize), b: &(f64, usize)| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(&b.1));
        if k < scored.len() {
            scored.select_nth_unstable_by(k - 1, by_rank);
            scored.truncate(k);
        }
        scored.sort_unstable_by(by_rank);
        Ok(scored.into_iter().map(|(_, j)| j).collect())
    }
}

/// Reads a space in text-vec format: `n d` header, then `token v1 .. vd`.
pub fn load_space(path: impl AsRef<Path>) -> Result<EmbeddingSpace> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_space(BufReader::new(file), &path.display().to_string())
}

/// Parses text-vec content from any reader. `source_name` labels errors.
pub fn read_space<R: BufRead>(reader: R, source_name: &str) -> Result<EmbeddingSpace> {
    let mut lines = reader.lines();
    let header = match lines.next() {
        Some(line) => line.map_err(|e| Error::io(source_name, e))?,
        None => return Err(Error::parse(source_name, 1, "missing `n d` header")),
    };
    let mut fields = header.split_whitespace();
    let parse_usize = |s: Option<&str>, what: &str| -> Result<usize> {
        s.and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::parse(source_name, 1, format!("bad {what} in header")))
    };
    let n = parse_usize(fields.next(), "row count")?;
    let d = parse_usize(fields.next(), "dimension")?;
    if fields.next().is_some() {
        return Err(Error::parse(source_name, 1, "header must be `n d`"));
    }
    if d == 0 {
        return Err(Error::parse(source_name, 1, "dimension must be positive"));
    }

    let mut vocab = Vec::with_capacity(n);
    let mut data = Vec::with_capacity(n * d);
    let mut seen = HashMap::with_capacity(n);
    for (offset, line) in lines.enumerate() {
        let line_no = offset + 2;
        let line = line.map_err(|e| Error::io(source_name, e))?;
        if line.is_empty() {
            continue;
        }
        if vocab.len() == n {
            return Err(Error::parse(
                source_name,
                line_no,
                format!("more rows than the declared {n}"),
            ));
        }
        let mut parts = line.split(' ');
        let token = parts.next().unwrap_or_default();
        if token.is_empty() {
            return Err(Error::parse(source_name, line_no, "empty token"));
        }
        let before = data.len();
        for field in parts.filter(|f| !f.is_empty()) {
            let x: f64 = field
                .parse()
                .map_err(|_| Error::parse(source_name, line_no, format!("invalid number `{field}`")))?;
            data.push(x);
        }
        let got = data.len() - before;
        if got != d {
            return Err(Error::parse(
                source_name,
                line_no,
                format!("expected {d} values, found {got}"),
            ));
        }
        if seen.insert(token.to_string(), vocab.len()).is_some() {
            return Err(Error::DuplicateToken(token.to_string()));
        }
        vocab.push(token.to_string());
    }
    if vocab.len() != n {
        return Err(Error::parse(
            source_name,
            vocab.len() + 2,
            format!("expected {n} rows, found {}", vocab.len()),
        ));
    }
    EmbeddingSpace::new(vocab, data, d)
}

/// Writes a space in text-vec format with six decimal places.
pub fn save_space(space: &EmbeddingSpace, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_space(space, &mut w).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_space<W: Write>(space: &EmbeddingSpace, w: &mut W) -> std::io::Result<()> {
    writeln!(w, "{} {}", space.len(), space.dim())?;
    for (token, row) in space.rows() {
        w.write_all(token.as_bytes())?;
        for x in row {
            write!(w, " {x:.6}")?;
        }
        w.write_all(b"\n")?;
    }
    Ok(())
}

/// Writes token frequencies as `token count` lines, in vocabulary order.
pub fn save_counts(space: &EmbeddingSpace, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let counts = space
        .counts()
        .ok_or_else(|| Error::InvalidArgument("space carries no counts".into()))?;
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    for (token, c) in space.vocab().iter().zip(counts) {
        writeln!(w, "{token} {c}").map_err(io)?;
    }
    w.flush().map_err(io)
}

/// Reads a `token count` file and attaches the counts to `space`.
///
/// Tokens absent from the file get a count of zero.
pub fn attach_counts(space: EmbeddingSpace, path: impl AsRef<Path>) -> Result<EmbeddingSpace> {
    let path = path.as_ref();
    let name = path.display().to_string();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut counts = vec![0u64; space.len()];
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let (Some(token), Some(count), None) = (parts.next(), parts.next(), parts.next()) else {
            return Err(Error::parse(&name, i + 1, "expected `token count`"));
        };
        let count: u64 = count
            .parse()
            .map_err(|_| Error::parse(&name, i + 1, format!("invalid count `{count}`")))?;
        if let Some(j) = space.index_of(token) {
            counts[j] = count;
        }
    }
    space.with_counts(counts)
}

/// Outcome of pooling a labeled sentence file.
#[derive(Debug, Clone, PartialEq)]
pub struct SentencePooling {
    pub vectors: LabeledVectorSet,
    /// Sentences dropped because none of their tokens is in the vocabulary.
    pub dropped: usize,
}

/// Mean-pools in-vocabulary token vectors for every `label<TAB>sentence` line.
pub fn sentence_vectors(space: &EmbeddingSpace, path: impl AsRef<Path>) -> Result<SentencePooling> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    pool_sentences(space, BufReader::new(file), &path.display().to_string())
}

pub fn pool_sentences<R: BufRead>(space: &EmbeddingSpace, reader: R, source_name: &str) -> Result<SentencePooling> {
    let d = space.dim();
    let mut ids = Vec::new();
    let mut labels = Vec::new();
    let mut data = Vec::new();
    let mut dropped = 0;
    let mut mean = vec![0.0; d];
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| Error::io(source_name, e))?;
        if line.is_empty() {
            continue;
        }
        let (label, sentence) = line
            .split_once('\t')
            .ok_or_else(|| Error::parse(source_name, line_no, "expected `label<TAB>sentence`"))?;
        let label: usize = label
            .trim()
            .parse()
            .map_err(|_| Error::parse(source_name, line_no, format!("invalid label `{label}`")))?;
        mean.iter_mut().for_each(|x| *x = 0.0);
        let mut n = 0usize;
        for token in sentence.split_whitespace() {
            if let Some(v) = space.vector(token) {
                mean.iter_mut().zip(v).for_each(|(m, x)| *m += x);
                n += 1;
            }
        }
        if n == 0 {
            dropped += 1;
            continue;
        }
        if n > 1 {
            let inv = n as f64;
            mean.iter_mut().for_each(|m| *m /= inv);
        }
        ids.push(format!("s{line_no}"));
        labels.push(label);
        data.extend_from_slice(&mean);
    }
    let n_classes = labels.iter().max().map_or(2, |m| (m + 1).max(2));
    let vectors = LabeledVectorSet::new(ids, data, d, labels, default_label_names(n_classes))?;
    Ok(SentencePooling { vectors, dropped })
}

/// Names for the protected attribute when binary, `class<i>` otherwise.
pub fn default_label_names(n_classes: usize) -> Vec<String> {
    if n_classes == 2 {
        vec!["original".to_string(), "translationese".to_string()]
    } else {
        (0..n_classes).map(|i| format!("class{i}")).collect()
    }
}
