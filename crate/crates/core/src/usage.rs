//! Usage-change scoring between an original and a translated embedding space.
//!
//! A word's score is the negated size of the overlap between its k-nearest
//! neighbor sets in the two spaces. Neighbors are drawn from the shared,
//! frequency-filtered vocabulary only.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::space::{EmbeddingSpace, NeighborIndex};

pub const DEFAULT_K: usize = 1000;
pub const DEFAULT_MIN_COUNT: u64 = 200;
pub const DEFAULT_G_SIZE: usize = 500;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LexiconEntry {
    pub token: String,
    pub intersection: usize,
    pub score: i64,
}

/// Words ranked from most to least changed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TranslationeseLexicon {
    pub entries: Vec<LexiconEntry>,
    pub k: usize,
    pub min_count: u64,
}

impl TranslationeseLexicon {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn score_of(&self, token: &str) -> Option<i64> {
        self.entries.iter().find(|e| e.token == token).map(|e| e.score)
    }
}

/// Tokens present in both spaces and attested `min_count` times in each,
/// in the original space's vocabulary order.
pub fn eligible_vocabulary(space_o: &EmbeddingSpace, space_t: &EmbeddingSpace, min_count: u64) -> Result<Vec<String>> {
    let (Some(counts_o), Some(counts_t)) = (space_o.counts(), space_t.counts()) else {
        return Err(Error::InvalidArgument(
            "usage-change scoring needs token counts for both spaces".into(),
        ));
    };
    Ok(space_o
        .vocab()
        .iter()
        .zip(counts_o)
        .filter(|&(_, &c)| c >= min_count)
        .filter_map(|(token, _)| {
            let j = space_t.index_of(token)?;
            (counts_t[j] >= min_count).then(|| token.clone())
        })
        .collect())
}

pub fn score_usage_change(
    space_o: &EmbeddingSpace,
    space_t: &EmbeddingSpace,
    k: usize,
    min_count: u64,
) -> Result<TranslationeseLexicon> {
    let shared = eligible_vocabulary(space_o, space_t, min_count)?;
    if shared.is_empty() {
        return Err(Error::Degenerate(format!(
            "no token is shared by both spaces with count >= {min_count}"
        )));
    }
    if k == 0 || k >= shared.len() {
        return Err(Error::InvalidArgument(format!(
            "k={k} must be in 1..{} (eligible vocabulary size)",
            shared.len()
        )));
    }
    let index_o = NeighborIndex::new(&space_o.subset(&shared)?)?;
    let index_t = NeighborIndex::new(&space_t.subset(&shared)?)?;

    let intersections: Vec<usize> = (0..shared.len())
        .into_par_iter()
        .map(|i| -> Result<usize> {
            let near_o: HashSet<usize> = index_o.neighbors(i, k)?.into_iter().collect();
            Ok(index_t
                .neighbors(i, k)?
                .into_iter()
                .filter(|j| near_o.contains(j))
                .count())
        })
        .collect::<Result<_>>()?;

    let mut entries: Vec<LexiconEntry> = shared
        .into_iter()
        .zip(intersections)
        .map(|(token, intersection)| LexiconEntry {
            token,
            intersection,
            score: -(intersection as i64),
        })
        .collect();
    entries.sort_by(|a, b| a.intersection.cmp(&b.intersection).then_with(|| a.token.cmp(&b.token)));
    Ok(TranslationeseLexicon { entries, k, min_count })
}

/// The first `size` tokens of the ranking.
pub fn top_g(lexicon: &TranslationeseLexicon, size: usize) -> Vec<String> {
    lexicon.entries.iter().take(size).map(|e| e.token.clone()).collect()
}

/// Fraction of the top-`size` words two rankings share, for comparing lists
/// built from spaces trained with different seeds.
pub fn top_g_overlap(a: &TranslationeseLexicon, b: &TranslationeseLexicon, size: usize) -> f64 {
    let ga = top_g(a, size);
    let gb: HashSet<String> = top_g(b, size).into_iter().collect();
    let denom = ga.len().max(gb.len());
    if denom == 0 {
        return 0.0;
    }
    ga.iter().filter(|w| gb.contains(*w)).count() as f64 / denom as f64
}

pub fn save_lexicon(lexicon: &TranslationeseLexicon, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    writeln!(w, "#k={} min_count={}", lexicon.k, lexicon.min_count).map_err(io)?;
    for e in &lexicon.entries {
        writeln!(w, "{}\t{}\t{}", e.token, e.intersection, e.score).map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn load_lexicon(path: impl AsRef<Path>) -> Result<TranslationeseLexicon> {
    let path = path.as_ref();
    let name = path.display().to_string();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut k = None;
    let mut min_count = None;
    let mut entries = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.is_empty() {
            continue;
        }
        if let Some(meta) = line.strip_prefix('#') {
            for kv in meta.split_whitespace() {
                match kv.split_once('=') {
                    Some(("k", v)) => k = v.parse().ok(),
                    Some(("min_count", v)) => min_count = v.parse().ok(),
                    _ => {}
                }
            }
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        let [token, inter, score] = cols[..] else {
            return Err(Error::parse(
                &name,
                i + 1,
                "expected `token<TAB>intersection<TAB>score`",
            ));
        };
        let intersection = inter
            .parse()
            .map_err(|_| Error::parse(&name, i + 1, "invalid intersection size"))?;
        let score = score.parse().map_err(|_| Error::parse(&name, i + 1, "invalid score"))?;
        entries.push(LexiconEntry {
            token: token.to_string(),
            intersection,
            score,
        });
    }
    let (Some(k), Some(min_count)) = (k, min_count) else {
        return Err(Error::parse(&name, 1, "missing `#k=<k> min_count=<m>` header"));
    };
    Ok(TranslationeseLexicon { entries, k, min_count })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn space(rows: &[(&str, [f64; 2])], counts: &[u64]) -> EmbeddingSpace {
        EmbeddingSpace::from_rows(rows.iter().map(|(t, v)| (*t, v.to_vec())))
            .unwrap()
            .with_counts(counts.to_vec())
            .unwrap()
    }

    fn lexicon(tokens: &[&str]) -> TranslationeseLexicon {
        TranslationeseLexicon {
            entries: tokens
                .iter()
                .map(|t| LexiconEntry {
                    token: t.to_string(),
                    intersection: 0,
                    score: 0,
                })
                .collect(),
            k: 1,
            min_count: 1,
        }
    }

    #[test]
    fn overlap_of_top_lists() {
        let a = lexicon(&["a", "b", "c", "d"]);
        let b = lexicon(&["b", "x", "a", "y"]);
        assert_eq!(top_g_overlap(&a, &a, 3), 1.0);
        assert_eq!(top_g_overlap(&a, &b, 2), 0.5);
        assert_eq!(top_g_overlap(&a, &b, 3), 2.0 / 3.0);
        assert_eq!(top_g_overlap(&lexicon(&[]), &lexicon(&[]), 3), 0.0);
    }

    #[test]
    fn identical_spaces_give_full_overlap() {
        let rows = [
            ("a", [1.0, 0.0]),
            ("b", [0.9, 0.1]),
            ("c", [0.0, 1.0]),
            ("d", [-1.0, 0.2]),
        ];
        let o = space(&rows, &[5; 4]);
        let lex = score_usage_change(&o, &o, 2, 1).unwrap();
        assert!(lex.entries.iter().all(|e| e.score == -2 && e.intersection == 2));
        // Ties fall back to token order.
        assert_eq!(top_g(&lex, 10), ["a", "b", "c", "d"]);
    }

    #[test]
    fn missing_counts_error() {
        let s = EmbeddingSpace::from_rows([("a", vec![1.0, 0.0]), ("b", vec![0.0, 1.0])]).unwrap();
        assert!(matches!(
            score_usage_change(&s, &s, 1, 1),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn empty_eligible_vocabulary_errors() {
        let o = space(&[("a", [1.0, 0.0]), ("b", [0.0, 1.0])], &[1, 1]);
        assert!(matches!(score_usage_change(&o, &o, 1, 10), Err(Error::Degenerate(_))));
    }

    #[test]
    fn count_filter_is_per_corpus() {
        let rows = [("a", [1.0, 0.0]), ("b", [0.0, 1.0]), ("c", [1.0, 1.0])];
        let o = space(&rows, &[5, 5, 5]);
        let t = space(&rows, &[5, 5, 1]);
        assert_eq!(eligible_vocabulary(&o, &t, 2).unwrap(), ["a", "b"]);
    }

    #[test]
    fn top_g_clamps() {
        let lex = TranslationeseLexicon {
            entries: vec![
                LexiconEntry {
                    token: "x".into(),
                    intersection: 0,
                    score: 0,
                },
                LexiconEntry {
                    token: "y".into(),
                    intersection: 1,
                    score: -1,
                },
            ],
            k: 2,
            min_count: 1,
        };
        assert_eq!(top_g(&lex, 1), ["x"]);
        assert_eq!(top_g(&lex, 99), ["x", "y"]);
    }

    #[test]
    fn lexicon_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.tsv");
        let rows = [("a", [1.0, 0.0]), ("b", [0.7, 0.3]), ("c", [0.0, 1.0])];
        let lex = score_usage_change(&space(&rows, &[3; 3]), &space(&rows, &[3; 3]), 1, 1).unwrap();
        save_lexicon(&lex, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("#k=1 min_count=1\n"));
        assert_eq!(load_lexicon(&path).unwrap(), lex);
    }
}
