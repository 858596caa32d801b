//! Skip-gram with negative sampling.
//!
//! Single-threaded and fully determined by the seed: fixed symmetric window,
//! no frequent-word subsampling, negatives drawn from the unigram
//! distribution raised to 0.75, learning rate decaying linearly to
//! `1e-4 × learning_rate`.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::space::EmbeddingSpace;

const UNIGRAM_POWER: f64 = 0.75;
const MIN_LR_FRACTION: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub dim: usize,
    pub window: usize,
    pub negatives: usize,
    pub epochs: usize,
    pub min_count: u64,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            dim: 100,
            window: 5,
            negatives: 5,
            epochs: 5,
            min_count: 5,
            learning_rate: 0.025,
            seed: 1,
        }
    }
}

impl TrainConfig {
    /// Every violated constraint, so callers can report them together.
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.dim < 2 {
            out.push(format!("dim must be >= 2 (got {})", self.dim));
        }
        if self.window < 1 {
            out.push("window must be >= 1".to_string());
        }
        if self.negatives < 1 {
            out.push("negatives must be >= 1".to_string());
        }
        if self.epochs < 1 {
            out.push("epochs must be >= 1".to_string());
        }
        if self.min_count < 1 {
            out.push("min_count must be >= 1".to_string());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            out.push(format!("learning_rate must be > 0 (got {})", self.learning_rate));
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let problems = self.problems();
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidArgument(problems.join("; ")))
        }
    }
}

/// Tokens surviving the frequency floor, most frequent first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    counts: Vec<u64>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn get(&self, token: &str) -> Option<u64> {
        self.index.get(token).map(|&i| self.counts[i])
    }

    pub fn index_of(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }
}

/// Counts tokens and keeps those occurring at least `min_count` times.
///
/// Ties in frequency are ordered lexicographically.
pub fn build_vocab(corpus: &Corpus, min_count: u64) -> Result<Vocabulary> {
    if corpus.num_tokens() == 0 {
        return Err(Error::Degenerate("corpus is empty".into()));
    }
    let mut raw: HashMap<&str, u64> = HashMap::new();
    for t in corpus.tokens() {
        *raw.entry(t).or_default() += 1;
    }
    let mut kept: Vec<(&str, u64)> = raw.into_iter().filter(|&(_, c)| c >= min_count).collect();
    kept.sort_unstable_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    let tokens: Vec<String> = kept.iter().map(|(t, _)| t.to_string()).collect();
    let counts = kept.iter().map(|&(_, c)| c).collect();
    let index = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
    Ok(Vocabulary { tokens, counts, index })
}

#[derive(Debug, Clone)]
pub struct TrainOutput {
    /// Input vectors, one row per vocabulary token, with counts attached.
    pub space: EmbeddingSpace,
    /// Mean loss per positive pair, per epoch.
    pub epoch_losses: Vec<f64>,
}

/// Cumulative unigram^0.75 table for negative draws.
struct NegativeTable {
    cumulative: Vec<f64>,
}

impl NegativeTable {
    fn new(counts: &[u64]) -> Self {
        let mut acc = 0.0;
        let cumulative = counts
            .iter()
            .map(|&c| {
                acc += (c as f64).powf(UNIGRAM_POWER);
                acc
            })
            .collect();
        NegativeTable { cumulative }
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> usize {
        let total = *self.cumulative.last().expect("non-empty vocabulary");
        let u = rng.random::<f64>() * total;
        self.cumulative
            .partition_point(|&c| c <= u)
            .min(self.cumulative.len() - 1)
    }
}

#[inline]
fn sigmoid(x: f32) -> f32 {
    1.0 / (1.0 + (-x).exp())
}

#[inline]
fn log_sigmoid(x: f32) -> f64 {
    // log σ(x) = -log(1 + e^{-x}), computed stably on both tails.
    let x = x as f64;
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

/// Trains skip-gram vectors on `corpus`.
pub fn train(corpus: &Corpus, config: &TrainConfig) -> Result<TrainOutput> {
    config.validate()?;
    let vocab = build_vocab(corpus, config.min_count)?;
    if vocab.is_empty() {
        return Err(Error::Degenerate(format!(
            "no token occurs at least {} times",
            config.min_count
        )));
    }
    let sentences: Vec<Vec<usize>> = corpus
        .sentences
        .iter()
        .map(|s| s.iter().filter_map(|t| vocab.index_of(t)).collect::<Vec<_>>())
        .filter(|s: &Vec<usize>| !s.is_empty())
        .collect();
    let total_tokens: usize = sentences.iter().map(Vec::len).sum();
    if total_tokens <= config.window {
        return Err(Error::Degenerate(format!(
            "corpus has {total_tokens} in-vocabulary tokens, shorter than one window of {}",
            config.window
        )));
    }

    let n = vocab.len();
    let d = config.dim;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let scale = 0.5 / d as f32;
    let mut input: Vec<f32> = (0..n * d).map(|_| (rng.random::<f32>() - 0.5) * 2.0 * scale).collect();
    let mut output = vec![0.0f32; n * d];
    let table = NegativeTable::new(vocab.counts());

    let total_steps = (config.epochs * total_tokens) as f64;
    let mut processed = 0usize;
    let mut grad = vec![0.0f32; d];
    let mut epoch_losses = Vec::with_capacity(config.epochs);

    for _ in 0..config.epochs {
        let mut loss_sum = 0.0f64;
        let mut pairs = 0usize;
        for sentence in &sentences {
            for (pos, &center) in sentence.iter().enumerate() {
                let progress = processed as f64 / total_steps;
                let lr = (config.learning_rate * (1.0 - progress)).max(config.learning_rate * MIN_LR_FRACTION) as f32;
                processed += 1;

                let lo = pos.saturating_sub(config.window);
                let hi = (pos + config.window).min(sentence.len() - 1);
                for (ctx_pos, &context) in sentence.iter().enumerate().take(hi + 1).skip(lo) {
                    if ctx_pos == pos {
                        continue;
                    }
                    grad.iter_mut().for_each(|g| *g = 0.0);
                    let center_row = center * d;
                    for draw in 0..=config.negatives {
                        let (target, label) = if draw == 0 {
                            (context, 1.0f32)
                        } else {
                            let t = table.sample(&mut rng);
                            if t == context {
                                continue;
                            }
                            (t, 0.0f32)
                        };
                        let target_row = target * d;
                        let inp = &input[center_row..center_row + d];
                        let out = &mut output[target_row..target_row + d];
                        let score: f32 = inp.iter().zip(out.iter()).map(|(a, b)| a * b).sum();
                        loss_sum -= if label == 1.0 {
                            log_sigmoid(score)
                        } else {
                            log_sigmoid(-score)
                        };
                        let g = (label - sigmoid(score)) * lr;
                        for k in 0..d {
                            grad[k] += g * out[k];
                            out[k] += g * inp[k];
                        }
                    }
                    pairs += 1;
                    for (x, g) in input[center_row..center_row + d].iter_mut().zip(&grad) {
                        *x += g;
                    }
                }
            }
        }
        epoch_losses.push(if pairs == 0 { 0.0 } else { loss_sum / pairs as f64 });
    }

    let data = input.into_iter().map(f64::from).collect();
    let space = EmbeddingSpace::new(vocab.tokens().to_vec(), data, d)?.with_counts(vocab.counts().to_vec())?;
    Ok(TrainOutput { space, epoch_losses })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::cosine;

    #[test]
    fn vocab_threshold() {
        let c = Corpus::from_text("a a b");
        let v = build_vocab(&c, 2).unwrap();
        assert_eq!(v.tokens(), ["a"]);
        assert_eq!(v.get("a"), Some(2));
        let v = build_vocab(&c, 1).unwrap();
        assert_eq!(v.tokens(), ["a", "b"]);
        assert_eq!(v.counts(), [2, 1]);
    }

    #[test]
    fn vocab_counts_match_line_scan() {
        let text = "the cat sat\nthe dog sat on the mat\n\nmat cat the\n";
        let v = build_vocab(&Corpus::from_text(text), 1).unwrap();
        let mut oracle = std::collections::BTreeMap::new();
        for line in text.split('\n') {
            for w in line.split(' ').filter(|w| !w.is_empty()) {
                *oracle.entry(w).or_insert(0u64) += 1;
            }
        }
        assert_eq!(v.len(), oracle.len());
        for (w, c) in oracle {
            assert_eq!(v.get(w), Some(c), "{w}");
        }
    }

    #[test]
    fn empty_corpus_errors() {
        assert!(build_vocab(&Corpus::from_text("\n\n"), 1).is_err());
    }

    #[test]
    fn short_corpus_errors() {
        let cfg = TrainConfig {
            min_count: 1,
            window: 5,
            ..TrainConfig::default()
        };
        assert!(train(&Corpus::from_text("a b c"), &cfg).is_err());
    }

    #[test]
    fn invalid_config_lists_every_problem() {
        let cfg = TrainConfig {
            dim: 1,
            window: 0,
            learning_rate: 0.0,
            ..TrainConfig::default()
        };
        assert_eq!(cfg.problems().len(), 3);
    }

    fn toy_corpus() -> Corpus {
        // "x" and "y" only ever co-occur with each other; the rest mix freely.
        let mut lines = Vec::new();
        let fillers = ["p", "q", "r", "s", "t", "u"];
        for i in 0..10_000 {
            if i % 4 == 0 {
                lines.push("x y x y".to_string());
            } else {
                let a = fillers[i % 6];
                let b = fillers[(i * 7 + 1) % 6];
                let c = fillers[(i * 5 + 2) % 6];
                lines.push(format!("{a} {b} {c} {a}"));
            }
        }
        Corpus::from_lines(lines.iter().map(String::as_str))
    }

    #[test]
    fn co_occurring_pair_ends_up_closest() {
        let cfg = TrainConfig {
            dim: 20,
            window: 2,
            epochs: 3,
            min_count: 1,
            seed: 3,
            ..TrainConfig::default()
        };
        let out = train(&toy_corpus(), &cfg).unwrap();
        let s = &out.space;
        let xy = cosine(s.vector("x").unwrap(), s.vector("y").unwrap());
        for other in ["p", "q", "r", "s", "t", "u"] {
            let v = s.vector(other).unwrap();
            assert!(xy > cosine(s.vector("x").unwrap(), v), "x~{other}");
            assert!(xy > cosine(s.vector("y").unwrap(), v), "y~{other}");
        }
        assert!(out.epoch_losses.last().unwrap() < out.epoch_losses.first().unwrap());
    }

    #[test]
    fn deterministic_and_shaped() {
        let cfg = TrainConfig {
            dim: 50,
            epochs: 1,
            min_count: 1,
            ..TrainConfig::default()
        };
        let c = toy_corpus();
        let a = train(&c, &cfg).unwrap();
        let b = train(&c, &cfg).unwrap();
        assert_eq!(a.space.data(), b.space.data());
        assert_eq!(a.space.dim(), 50);
        assert!(a.space.data().len() == a.space.len() * 50);
        let vocab = build_vocab(&c, 1).unwrap();
        assert_eq!(a.space.vocab(), vocab.tokens());
        assert_eq!(a.space.counts().unwrap(), vocab.counts());
    }
}
