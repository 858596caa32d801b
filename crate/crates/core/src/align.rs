//! Stepwise aligned-space machinery: orthogonal Procrustes alignment onto the
//! joint space, translationese direction vectors, and direction-seeded labels.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::labeled::LabeledVectorSet;
use crate::linalg::{cosine, fmt_exact, norm, to_matrix, to_row_major, transform_rows};
use crate::space::EmbeddingSpace;

/// Relative singular-value floor below which a dictionary matrix counts as
/// rank deficient.
const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PreprocessStep {
    Unit,
    Center,
}

impl PreprocessStep {
    fn name(self) -> &'static str {
        match self {
            PreprocessStep::Unit => "unit",
            PreprocessStep::Center => "center",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "unit" => Some(PreprocessStep::Unit),
            "center" => Some(PreprocessStep::Center),
            _ => None,
        }
    }
}

/// Unit-normalize, mean-center, unit-normalize.
pub const STANDARD_CHAIN: [PreprocessStep; 3] = [PreprocessStep::Unit, PreprocessStep::Center, PreprocessStep::Unit];

/// Applies a preprocessing chain to a whole space.
pub fn preprocess_with(space: &EmbeddingSpace, chain: &[PreprocessStep]) -> Result<EmbeddingSpace> {
    let mut out = space.clone();
    for step in chain {
        out = match step {
            PreprocessStep::Unit => out.normalize()?,
            PreprocessStep::Center => center(&out)?,
        };
    }
    Ok(out)
}

pub fn preprocess(space: &EmbeddingSpace) -> Result<EmbeddingSpace> {
    preprocess_with(space, &STANDARD_CHAIN)
}

fn center(space: &EmbeddingSpace) -> Result<EmbeddingSpace> {
    let d = space.dim();
    if space.is_empty() {
        return Ok(space.clone());
    }
    let mut mean = vec![0.0; d];
    for (_, row) in space.rows() {
        mean.iter_mut().zip(row).for_each(|(m, x)| *m += x);
    }
    let n = space.len() as f64;
    mean.iter_mut().for_each(|m| *m /= n);
    let data = space
        .data()
        .chunks_exact(d)
        .flat_map(|row| row.iter().zip(&mean).map(|(x, m)| x - m))
        .collect();
    space.with_data(data, d)
}

/// An orthogonal `d × d` map, applied to row vectors as `x·W`.
#[derive(Debug, Clone, PartialEq)]
pub struct OrthogonalMap {
    pub matrix: DMatrix<f64>,
    pub preprocessing: Vec<PreprocessStep>,
    pub dictionary_size: usize,
}

impl OrthogonalMap {
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// `‖WᵀW − I‖_max`.
    pub fn orthogonality_error(&self) -> f64 {
        let d = self.dim();
        let gram = self.matrix.transpose() * &self.matrix;
        crate::linalg::max_abs(&(gram - DMatrix::identity(d, d)))
    }

    /// Preprocesses `source` with the recorded chain and maps every row.
    pub fn apply(&self, source: &EmbeddingSpace) -> Result<EmbeddingSpace> {
        if source.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                actual: source.dim(),
            });
        }
        let prepared = preprocess_with(source, &self.preprocessing)?;
        let wt = self.matrix.transpose();
        let data = transform_rows(prepared.data(), self.dim(), &wt);
        prepared.with_data(data, self.dim())
    }
}

/// Identical-word dictionary: every token shared by both vocabularies, in
/// source order.
pub fn identity_dictionary(source: &EmbeddingSpace, target: &EmbeddingSpace) -> Vec<(String, String)> {
    source
        .vocab()
        .iter()
        .filter(|t| target.contains(t))
        .map(|t| (t.clone(), t.clone()))
        .collect()
}

/// Solves `min ‖X_src·W − X_tgt‖_F` over orthogonal `W` for the dictionary
/// rows of the preprocessed spaces.
pub fn procrustes_align(
    source: &EmbeddingSpace,
    target: &EmbeddingSpace,
    dictionary: &[(String, String)],
) -> Result<OrthogonalMap> {
    procrustes_align_with(source, target, dictionary, &STANDARD_CHAIN)
}

pub fn procrustes_align_with(
    source: &EmbeddingSpace,
    target: &EmbeddingSpace,
    dictionary: &[(String, String)],
    chain: &[PreprocessStep],
) -> Result<OrthogonalMap> {
    let d = source.dim();
    if target.dim() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            actual: target.dim(),
        });
    }
    let pairs: Vec<_> = dictionary
        .iter()
        .filter(|(s, t)| source.contains(s) && target.contains(t))
        .collect();
    if pairs.len() < d {
        return Err(Error::InvalidArgument(format!(
            "{} dictionary pairs present in both spaces; at least {d} required",
            pairs.len()
        )));
    }
    let src = preprocess_with(source, chain)?;
    let tgt = preprocess_with(target, chain)?;
    let mut xs = Vec::with_capacity(pairs.len() * d);
    let mut xt = Vec::with_capacity(pairs.len() * d);
    for (s, t) in &pairs {
        xs.extend_from_slice(src.vector(s).expect("filtered"));
        xt.extend_from_slice(tgt.vector(t).expect("filtered"));
    }
    let xs = to_matrix(pairs.len(), d, &xs);
    let xt = to_matrix(pairs.len(), d, &xt);

    for (which, m) in [("source", &xs), ("target", &xt)] {
        let sv = m.singular_values();
        let max = sv.max();
        let min = sv.min();
        if max == 0.0 || min <= RANK_TOL * max {
            let rank = sv.iter().filter(|&&s| s > RANK_TOL * max).count();
            return Err(Error::RankDeficient(format!(
                "{which} dictionary matrix has rank {rank} < {d}"
            )));
        }
    }

    let cross = xs.transpose() * &xt;
    let svd = cross.svd(true, true);
    let (Some(u), Some(v_t)) = (svd.u, svd.v_t) else {
        return Err(Error::Degenerate("SVD did not converge".into()));
    };
    Ok(OrthogonalMap {
        matrix: u * v_t,
        preprocessing: chain.to_vec(),
        dictionary_size: pairs.len(),
    })
}

pub fn save_map(map: &OrthogonalMap, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    let d = map.dim();
    writeln!(w, "{d} {d}").map_err(io)?;
    let chain: Vec<&str> = map.preprocessing.iter().map(|s| s.name()).collect();
    writeln!(w, "#preprocess={}", chain.join(",")).map_err(io)?;
    writeln!(w, "#dictionary_size={}", map.dictionary_size).map_err(io)?;
    write_rows(&mut w, &to_row_major(&map.matrix), d).map_err(io)?;
    w.flush().map_err(io)
}

pub(crate) fn write_rows<W: Write>(w: &mut W, data: &[f64], d: usize) -> std::io::Result<()> {
    for row in data.chunks_exact(d) {
        let line: Vec<String> = row.iter().map(|x| fmt_exact(*x)).collect();
        writeln!(w, "{}", line.join(" "))?;
    }
    Ok(())
}

pub fn load_map(path: impl AsRef<Path>) -> Result<OrthogonalMap> {
    let path = path.as_ref();
    let name = path.display().to_string();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut dim = None;
    let mut chain = Vec::new();
    let mut dictionary_size = 0;
    let mut data = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        if let Some(meta) = line.strip_prefix('#') {
            if let Some(c) = meta.strip_prefix("preprocess=") {
                chain = c
                    .split(',')
                    .filter(|s| !s.is_empty())
                    .map(|s| {
                        PreprocessStep::parse(s)
                            .ok_or_else(|| Error::parse(&name, line_no, format!("unknown preprocessing step `{s}`")))
                    })
                    .collect::<Result<_>>()?;
            } else if let Some(n) = meta.strip_prefix("dictionary_size=") {
                dictionary_size = n
                    .trim()
                    .parse()
                    .map_err(|_| Error::parse(&name, line_no, "bad dictionary size"))?;
            }
            continue;
        }
        let values: Vec<&str> = line.split_whitespace().collect();
        match dim {
            None => {
                let [a, b] = values[..] else {
                    return Err(Error::parse(&name, line_no, "expected `<d> <d>` header"));
                };
                let (Ok(a), Ok(b)) = (a.parse::<usize>(), b.parse::<usize>()) else {
                    return Err(Error::parse(&name, line_no, "expected `<d> <d>` header"));
                };
                if a != b || a == 0 {
                    return Err(Error::parse(&name, line_no, "map must be square"));
                }
                dim = Some(a);
            }
            Some(d) => {
                if values.len() != d {
                    return Err(Error::parse(
                        &name,
                        line_no,
                        format!("expected {d} values, found {}", values.len()),
                    ));
                }
                for v in values {
                    data.push(
                        v.parse::<f64>()
                            .map_err(|_| Error::parse(&name, line_no, format!("invalid number `{v}`")))?,
                    );
                }
            }
        }
    }
    let d = dim.ok_or_else(|| Error::parse(&name, 1, "missing `<d> <d>` header"))?;
    if data.len() != d * d {
        return Err(Error::parse(&name, d + 1, format!("expected {d} rows")));
    }
    Ok(OrthogonalMap {
        matrix: to_matrix(d, d, &data),
        preprocessing: chain,
        dictionary_size,
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Provenance {
    Single(String),
    Average(usize),
}

/// A unit translationese direction in the joint space.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectionVector {
    pub v: Vec<f64>,
    pub provenance: Provenance,
}

fn unit(v: Vec<f64>, what: &str) -> Result<Vec<f64>> {
    let n = norm(&v);
    if n == 0.0 || !n.is_finite() {
        return Err(Error::Degenerate(format!("{what} is the zero vector")));
    }
    Ok(v.into_iter().map(|x| x / n).collect())
}

fn difference(aligned_t: &EmbeddingSpace, aligned_o: &EmbeddingSpace, word: &str) -> Option<Vec<f64>> {
    let t = aligned_t.vector(word)?;
    let o = aligned_o.vector(word)?;
    Some(t.iter().zip(o).map(|(a, b)| a - b).collect())
}

/// `normalize(T̃[w] − Õ[w])`.
pub fn direction_from_word(
    aligned_t: &EmbeddingSpace,
    aligned_o: &EmbeddingSpace,
    word: &str,
) -> Result<DirectionVector> {
    if aligned_t.dim() != aligned_o.dim() {
        return Err(Error::DimensionMismatch {
            expected: aligned_t.dim(),
            actual: aligned_o.dim(),
        });
    }
    let diff = difference(aligned_t, aligned_o, word).ok_or_else(|| Error::UnknownToken(word.to_string()))?;
    Ok(DirectionVector {
        v: unit(diff, &format!("direction for `{word}`"))?,
        provenance: Provenance::Single(word.to_string()),
    })
}

/// The list-averaged direction plus the tokens skipped for being absent
/// from either space.
#[derive(Debug, Clone, PartialEq)]
pub struct AveragedDirection {
    pub direction: DirectionVector,
    pub skipped: Vec<String>,
}

/// `normalize(mean_w (T̃[w] − Õ[w]))` over the tokens of `g` present in both.
pub fn direction_from_list<S: AsRef<str>>(
    aligned_t: &EmbeddingSpace,
    aligned_o: &EmbeddingSpace,
    g: &[S],
) -> Result<AveragedDirection> {
    let d = aligned_t.dim();
    if aligned_o.dim() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            actual: aligned_o.dim(),
        });
    }
    // Sum in a fixed (sorted) order so the result does not depend on list order.
    let mut words: Vec<&str> = g.iter().map(AsRef::as_ref).collect();
    words.sort_unstable();
    words.dedup();
    let mut sum = vec![0.0; d];
    let mut used = 0;
    let mut skipped = Vec::new();
    for w in words {
        match difference(aligned_t, aligned_o, w) {
            Some(diff) => {
                sum.iter_mut().zip(diff).for_each(|(s, x)| *s += x);
                used += 1;
            }
            None => skipped.push(w.to_string()),
        }
    }
    if used == 0 {
        return Err(Error::Degenerate(
            "no list token is present in both aligned spaces".into(),
        ));
    }
    let mean: Vec<f64> = sum.into_iter().map(|s| s / used as f64).collect();
    Ok(AveragedDirection {
        direction: DirectionVector {
            v: unit(mean, "mean difference")?,
            provenance: Provenance::Average(used),
        },
        skipped,
    })
}

/// Labels every word of the joint space: 1 (translationese) when
/// `cos(u, v) ≥ 0`, else 0.
pub fn split_by_direction(joint: &EmbeddingSpace, direction: &DirectionVector) -> Result<LabeledVectorSet> {
    if joint.dim() != direction.v.len() {
        return Err(Error::DimensionMismatch {
            expected: joint.dim(),
            actual: direction.v.len(),
        });
    }
    let labels = joint
        .rows()
        .map(|(_, u)| usize::from(cosine(u, &direction.v) >= 0.0))
        .collect();
    LabeledVectorSet::binary(joint.vocab().to_vec(), joint.data().to_vec(), joint.dim(), labels)
}

pub fn save_direction(direction: &DirectionVector, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    let provenance = match &direction.provenance {
        Provenance::Single(word) => format!("single:{word}"),
        Provenance::Average(n) => format!("avg:{n}"),
    };
    writeln!(w, "#provenance={provenance}").map_err(io)?;
    writeln!(w, "{}", direction.v.len()).map_err(io)?;
    write_rows(&mut w, &direction.v, direction.v.len()).map_err(io)?;
    w.flush().map_err(io)
}

pub fn load_direction(path: impl AsRef<Path>) -> Result<DirectionVector> {
    let path = path.as_ref();
    let name = path.display().to_string();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut provenance = None;
    let mut body = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if let Some(p) = line.strip_prefix("#provenance=") {
            provenance = match p.split_once(':') {
                Some(("single", w)) => Some(Provenance::Single(w.to_string())),
                Some(("avg", n)) => n.parse().ok().map(Provenance::Average),
                _ => None,
            };
            if provenance.is_none() {
                return Err(Error::parse(&name, i + 1, "bad provenance"));
            }
        } else if !line.trim().is_empty() && !line.starts_with('#') {
            body.push((i + 1, line));
        }
    }
    let [(dl, d), (vl, values)] = body[..] else {
        return Err(Error::parse(&name, 1, "expected a dimension line and one vector line"));
    };
    let d: usize = d.trim().parse().map_err(|_| Error::parse(&name, dl, "bad dimension"))?;
    let v: Vec<f64> = values
        .split_whitespace()
        .map(|x| {
            x.parse()
                .map_err(|_| Error::parse(&name, vl, format!("invalid number `{x}`")))
        })
        .collect::<Result<_>>()?;
    if v.len() != d {
        return Err(Error::parse(&name, vl, format!("expected {d} values")));
    }
    Ok(DirectionVector {
        v,
        provenance: provenance.ok_or_else(|| Error::parse(&name, 1, "missing provenance"))?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rows(vs: &[(&str, Vec<f64>)]) -> EmbeddingSpace {
        EmbeddingSpace::from_rows(vs.iter().cloned()).unwrap()
    }

    #[test]
    fn quarter_turn_is_recovered() {
        let src = rows(&[
            ("a", vec![1.0, 0.2]),
            ("b", vec![0.1, 1.0]),
            ("c", vec![-0.7, 0.4]),
            ("d", vec![0.3, -0.9]),
        ]);
        let r = DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]);
        let tgt = src.with_data(transform_rows(src.data(), 2, &r.transpose()), 2).unwrap();
        let map = procrustes_align(&src, &tgt, &identity_dictionary(&src, &tgt)).unwrap();
        assert!((&map.matrix - &r).norm() < 1e-9, "{}", map.matrix);
    }

    #[test]
    fn identical_spaces_give_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let s = EmbeddingSpace::from_rows(
            (0..30).map(|i| (format!("w{i}"), (0..6).map(|_| rng.random_range(-1.0..1.0)).collect())),
        )
        .unwrap();
        let map = procrustes_align(&s, &s, &identity_dictionary(&s, &s)).unwrap();
        assert!((&map.matrix - DMatrix::<f64>::identity(6, 6)).norm() < 1e-6);
    }

    #[test]
    fn too_few_pairs() {
        let s = rows(&[("a", vec![1.0, 0.0, 0.0]), ("b", vec![0.0, 1.0, 0.0])]);
        assert!(matches!(
            procrustes_align(&s, &s, &identity_dictionary(&s, &s)),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn rank_deficient_dictionary() {
        // Every row lies in the x-y plane of a 3D space.
        let s = rows(&[
            ("a", vec![1.0, 0.0, 0.0]),
            ("b", vec![0.0, 1.0, 0.0]),
            ("c", vec![1.0, 1.0, 0.0]),
            ("d", vec![-1.0, 2.0, 0.0]),
        ]);
        let err = procrustes_align_with(&s, &s, &identity_dictionary(&s, &s), &[PreprocessStep::Unit]).unwrap_err();
        assert!(matches!(err, Error::RankDeficient(_)), "{err}");
    }

    #[test]
    fn direction_examples() {
        let t = rows(&[("w", vec![1.0, 0.0]), ("u", vec![3.0, 2.0])]);
        let o = rows(&[("w", vec![0.0, 0.0]), ("u", vec![3.0, 0.0])]);
        assert_eq!(direction_from_word(&t, &o, "w").unwrap().v, [1.0, 0.0]);
        assert_eq!(direction_from_word(&t, &o, "u").unwrap().v, [0.0, 1.0]);
        assert!(matches!(direction_from_word(&t, &t, "w"), Err(Error::Degenerate(_))));
        assert!(matches!(direction_from_word(&t, &o, "zz"), Err(Error::UnknownToken(_))));
    }

    #[test]
    fn list_direction_examples() {
        let t = rows(&[("a", vec![1.0, 0.0]), ("b", vec![0.0, 1.0]), ("c", vec![-1.0, 0.0])]);
        let o = rows(&[("a", vec![0.0, 0.0]), ("b", vec![0.0, 0.0]), ("c", vec![0.0, 0.0])]);
        let single = direction_from_list(&t, &o, &["a"]).unwrap();
        assert_eq!(single.direction.v, direction_from_word(&t, &o, "a").unwrap().v);
        let avg = direction_from_list(&t, &o, &["a", "b", "missing"]).unwrap();
        let h = 1.0 / 2f64.sqrt();
        assert!((avg.direction.v[0] - h).abs() < 1e-12 && (avg.direction.v[1] - h).abs() < 1e-12);
        assert_eq!(avg.direction.provenance, Provenance::Average(2));
        assert_eq!(avg.skipped, ["missing"]);
        assert!(direction_from_list(&t, &o, &["a", "c"]).is_err());
        assert!(direction_from_list(&t, &o, &["nope"]).is_err());
    }

    #[test]
    fn split_examples() {
        let v = DirectionVector {
            v: vec![1.0, 0.0],
            provenance: Provenance::Average(1),
        };
        let j = rows(&[
            ("same", vec![1.0, 0.0]),
            ("anti", vec![-1.0, 0.0]),
            ("perp", vec![0.0, 1.0]),
        ]);
        assert_eq!(split_by_direction(&j, &v).unwrap().labels(), [1, 0, 1]);
    }

    #[test]
    fn map_and_direction_files_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let s = EmbeddingSpace::from_rows(
            (0..12).map(|i| (format!("w{i}"), (0..4).map(|_| rng.random_range(-1.0..1.0)).collect())),
        )
        .unwrap();
        let map = procrustes_align(&s, &s, &identity_dictionary(&s, &s)).unwrap();
        save_map(&map, dir.path().join("m")).unwrap();
        assert_eq!(load_map(dir.path().join("m")).unwrap(), map);
        let v = DirectionVector {
            v: vec![0.6, -0.8],
            provenance: Provenance::Single("hand".into()),
        };
        save_direction(&v, dir.path().join("v")).unwrap();
        assert_eq!(load_direction(dir.path().join("v")).unwrap(), v);
    }

    proptest! {
        #[test]
        fn list_order_does_not_matter(perm in Just((0..6usize).collect::<Vec<_>>()).prop_shuffle()) {
            let t = rows(&(0..6).map(|i| (["a","b","c","d","e","f"][i], vec![i as f64 * 0.3 + 0.1, 1.0 - i as f64 * 0.17])).collect::<Vec<_>>());
            let o = rows(&(0..6).map(|i| (["a","b","c","d","e","f"][i], vec![0.05 * i as f64, -0.2])).collect::<Vec<_>>());
            let names = ["a","b","c","d","e","f"];
            let sorted = direction_from_list(&t, &o, &names).unwrap();
            let shuffled: Vec<&str> = perm.iter().map(|&i| names[i]).collect();
            let other = direction_from_list(&t, &o, &shuffled).unwrap();
            prop_assert_eq!(sorted.direction.v, other.direction.v);
        }

        #[test]
        fn split_ignores_positive_rescaling(scale in 1e-3f64..1e3, x in -1.0f64..1.0, y in -1.0f64..1.0) {
            let v = DirectionVector { v: vec![0.6, 0.8], provenance: Provenance::Average(1) };
            let a = rows(&[("w", vec![x, y])]);
            let b = rows(&[("w", vec![x * scale, y * scale])]);
            let sa = split_by_direction(&a, &v).unwrap();
            let sb = split_by_direction(&b, &v).unwrap();
            prop_assert_eq!(sa.labels(), sb.labels());
        }
    }
}
