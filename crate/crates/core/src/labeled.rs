//! Vectors paired with integer class labels, plus the TSV interchange format
//! `id<TAB>label<TAB>v1 ... vd` under a `#d=<d>` header.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::linalg::fmt_exact;

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledVectorSet {
    ids: Vec<String>,
    data: Vec<f64>,
    dim: usize,
    labels: Vec<usize>,
    label_names: Vec<String>,
}

impl LabeledVectorSet {
    pub fn new(
        ids: Vec<String>,
        data: Vec<f64>,
        dim: usize,
        labels: Vec<usize>,
        label_names: Vec<String>,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidArgument("dimension must be positive".into()));
        }
        if data.len() != labels.len() * dim {
            return Err(Error::DimensionMismatch {
                expected: labels.len() * dim,
                actual: data.len(),
            });
        }
        if ids.len() != labels.len() {
            return Err(Error::DimensionMismatch {
                expected: labels.len(),
                actual: ids.len(),
            });
        }
        if label_names.is_empty() {
            return Err(Error::InvalidArgument("at least one label name required".into()));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= label_names.len()) {
            return Err(Error::InvalidArgument(format!(
                "label {bad} out of range for {} classes",
                label_names.len()
            )));
        }
        Ok(LabeledVectorSet {
            ids,
            data,
            dim,
            labels,
            label_names,
        })
    }

    /// Binary protected-attribute set with `original`/`translationese` names.
    pub fn binary(ids: Vec<String>, data: Vec<f64>, dim: usize, labels: Vec<usize>) -> Result<Self> {
        Self::new(ids, data, dim, labels, vec!["original".into(), "translationese".into()])
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn label_names(&self) -> &[String] {
        &self.label_names
    }

    pub fn num_classes(&self) -> usize {
        self.label_names.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes()];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    /// Accuracy of always predicting the most frequent label.
    pub fn majority_fraction(&self) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        let max = self.class_counts().into_iter().max().unwrap_or(0);
        max as f64 / self.len() as f64
    }

    /// Rows at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> Self {
        let mut data = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        LabeledVectorSet {
            ids: indices.iter().map(|&i| self.ids[i].clone()).collect(),
            data,
            dim: self.dim,
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            label_names: self.label_names.clone(),
        }
    }

    /// Same ids and labels over a new vector buffer.
    pub fn with_data(&self, data: Vec<f64>, dim: usize) -> Result<Self> {
        Self::new(
            self.ids.clone(),
            data,
            dim,
            self.labels.clone(),
            self.label_names.clone(),
        )
    }

    /// Same vectors with different labels.
    pub fn relabel(&self, labels: Vec<usize>, label_names: Vec<String>) -> Result<Self> {
        Self::new(self.ids.clone(), self.data.clone(), self.dim, labels, label_names)
    }

    /// Concatenates two sets with matching dimension and label names.
    pub fn concat(&self, other: &Self) -> Result<Self> {
        if self.dim != other.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: other.dim,
            });
        }
        if self.label_names != other.label_names {
            return Err(Error::InvalidArgument("label sets differ".into()));
        }
        let mut out = self.clone();
        out.ids.extend_from_slice(&other.ids);
        out.data.extend_from_slice(&other.data);
        out.labels.extend_from_slice(&other.labels);
        Ok(out)
    }
}

pub fn save_labeled(set: &LabeledVectorSet, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_labeled(set, &mut w).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_labeled<W: Write>(set: &LabeledVectorSet, w: &mut W) -> std::io::Result<()> {
    writeln!(w, "#d={}", set.dim())?;
    writeln!(w, "#labels={}", set.label_names().join(","))?;
    for i in 0..set.len() {
        write!(w, "{}\t{}\t", set.ids[i], set.labels[i])?;
        for (j, x) in set.row(i).iter().enumerate() {
            if j > 0 {
                w.write_all(b" ")?;
            }
            w.write_all(fmt_exact(*x).as_bytes())?;
        }
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn load_labeled(path: impl AsRef<Path>) -> Result<LabeledVectorSet> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_labeled(BufReader::new(file), &path.display().to_string())
}

pub fn read_labeled<R: BufRead>(reader: R, source_name: &str) -> Result<LabeledVectorSet> {
    let mut dim: Option<usize> = None;
    let mut names: Option<Vec<String>> = None;
    let mut ids = Vec::new();
    let mut labels = Vec::new();
    let mut data = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| Error::io(source_name, e))?;
        if line.is_empty() {
            continue;
        }
        if let Some(meta) = line.strip_prefix('#') {
            if let Some(d) = meta.strip_prefix("d=") {
                let d: usize = d
                    .trim()
                    .parse()
                    .map_err(|_| Error::parse(source_name, line_no, "bad `#d=` header"))?;
                dim = Some(d);
            } else if let Some(n) = meta.strip_prefix("labels=") {
                names = Some(n.trim().split(',').map(str::to_string).collect());
            }
            continue;
        }
        let d = dim.ok_or_else(|| Error::parse(source_name, line_no, "missing `#d=` header"))?;
        let mut cols = line.splitn(3, '\t');
        let (Some(id), Some(label), Some(values)) = (cols.next(), cols.next(), cols.next()) else {
            return Err(Error::parse(source_name, line_no, "expected `id<TAB>label<TAB>vector`"));
        };
        let label: usize = label
            .parse()
            .map_err(|_| Error::parse(source_name, line_no, format!("invalid label `{label}`")))?;
        let before = data.len();
        for field in values.split_whitespace() {
            let x: f64 = field
                .parse()
                .map_err(|_| Error::parse(source_name, line_no, format!("invalid number `{field}`")))?;
            data.push(x);
        }
        if data.len() - before != d {
            return Err(Error::parse(
                source_name,
                line_no,
                format!("expected {d} values, found {}", data.len() - before),
            ));
        }
        ids.push(id.to_string());
        labels.push(label);
    }
    let dim = dim.ok_or_else(|| Error::parse(source_name, 1, "missing `#d=` header"))?;
    let names = names.unwrap_or_else(|| {
        let c = labels.iter().max().map_or(2, |m| (m + 1).max(2));
        crate::space::default_label_names(c)
    });
    LabeledVectorSet::new(ids, data, dim, labels, names)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn rejects_out_of_range_label() {
        let r = LabeledVectorSet::binary(vec!["a".into()], vec![1.0], 1, vec![2]);
        assert!(r.is_err());
    }

    #[test]
    fn majority_fraction_counts() {
        let s = LabeledVectorSet::binary(
            (0..4).map(|i| i.to_string()).collect(),
            vec![0.0; 4],
            1,
            vec![0, 1, 1, 1],
        )
        .unwrap();
        assert_eq!(s.majority_fraction(), 0.75);
        assert_eq!(s.class_counts(), [1, 3]);
    }

    #[test]
    fn missing_header_is_parse_error() {
        assert!(read_labeled("a\t0\t1 2\n".as_bytes(), "mem").is_err());
    }

    proptest! {
        #[test]
        fn tsv_round_trip_is_exact(
            rows in prop::collection::vec((prop::collection::vec(-1e6f64..1e6, 3), 0usize..2), 1..20)
        ) {
            let ids = (0..rows.len()).map(|i| format!("id{i}")).collect();
            let data = rows.iter().flat_map(|(v, _)| v.clone()).collect();
            let labels = rows.iter().map(|(_, l)| *l).collect();
            let set = LabeledVectorSet::binary(ids, data, 3, labels).unwrap();
            let mut buf = Vec::new();
            write_labeled(&set, &mut buf).unwrap();
            let back = read_labeled(buf.as_slice(), "mem").unwrap();
            prop_assert_eq!(back, set);
        }
    }
}
