//! Seeded synthetic data: a two-style corpus pair with a gold similarity
//! list, and planted vector datasets with known answers.
//!
//! The corpora share one vocabulary. Each sentence is about a topic on a
//! circle; content words come from that topic or its neighbors. The two
//! styles differ in how often and which function words they use, and in the
//! translated style a set of content words swap topics, so their usage
//! changes between the corpora.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::corpus::Corpus;
use crate::eval::GoldPair;
use crate::labeled::LabeledVectorSet;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub sentences_per_style: usize,
    pub topics: usize,
    pub words_per_topic: usize,
    pub function_words: usize,
    pub min_len: usize,
    pub max_len: usize,
    /// Number of topic swaps in the translated style; each moves two words.
    pub swaps: usize,
    pub gold_pairs: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            sentences_per_style: 5000,
            topics: 20,
            words_per_topic: 120,
            function_words: 30,
            min_len: 10,
            max_len: 20,
            swaps: 20,
            gold_pairs: 50,
            seed: 7,
        }
    }
}

impl SynthConfig {
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.sentences_per_style == 0 {
            out.push("sentences per style must be >= 1".to_string());
        }
        if self.topics < 4 {
            out.push("need at least 4 topics".to_string());
        }
        if self.words_per_topic < 40 {
            out.push("need at least 40 words per topic".to_string());
        }
        if self.function_words < 2 {
            out.push("need at least 2 function words".to_string());
        }
        if self.min_len == 0 || self.min_len > self.max_len {
            out.push("sentence lengths must satisfy 1 <= min_len <= max_len".to_string());
        }
        if self.swaps > self.topics * 10 {
            out.push("too many swaps for the topic count".to_string());
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct SynthCorpora {
    pub original: Corpus,
    pub translated: Corpus,
    pub gold: Vec<GoldPair>,
    /// Content words whose topic differs in the translated style.
    pub shifted: Vec<String>,
}

fn content_word(topic: usize, j: usize) -> String {
    format!("k{topic:02}w{j:03}")
}

fn function_word(j: usize) -> String {
    format!("f{j:02}")
}

fn circular_distance(a: usize, b: usize, n: usize) -> usize {
    let d = a.abs_diff(b);
    d.min(n - d)
}

struct Style {
    lengths: (usize, usize),
    function_rate: f64,
    function_dist: WeightedIndex<f64>,
    topics: Vec<Vec<String>>,
}

impl Style {
    fn sentence(&self, rng: &mut ChaCha8Rng, word_dist: &WeightedIndex<f64>, functions: &[String]) -> Vec<String> {
        let n = self.topics.len();
        let topic = rng.random_range(0..n);
        let len = rng.random_range(self.lengths.0..=self.lengths.1);
        (0..len)
            .map(|_| {
                if rng.random::<f64>() < self.function_rate {
                    return functions[self.function_dist.sample(rng)].clone();
                }
                let r: f64 = rng.random();
                let t = if r < 0.7 {
                    topic
                } else if r < 0.85 {
                    (topic + 1) % n
                } else {
                    (topic + n - 1) % n
                };
                self.topics[t][word_dist.sample(rng)].clone()
            })
            .collect()
    }
}

/// Generates the corpus pair. Identical configs give identical output.
pub fn generate(config: &SynthConfig) -> SynthCorpora {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let (nt, nw, nf) = (config.topics, config.words_per_topic, config.function_words);

    let base: Vec<Vec<String>> = (0..nt).map(|t| (0..nw).map(|j| content_word(t, j)).collect()).collect();
    let functions: Vec<String> = (0..nf).map(function_word).collect();

    // Swap frequent words between opposite topics for the translated style.
    let mut translated_topics = base.clone();
    let mut slots: Vec<(usize, usize)> = (0..nt).flat_map(|t| (0..nw / 4).map(move |j| (t, j))).collect();
    slots.shuffle(&mut rng);
    let mut shifted = Vec::new();
    let mut taken = std::collections::HashSet::new();
    for (t, j) in slots {
        if shifted.len() >= 2 * config.swaps {
            break;
        }
        let partner = ((t + nt / 2) % nt, j);
        if taken.contains(&(t, j)) || taken.contains(&partner) {
            continue;
        }
        taken.insert((t, j));
        taken.insert(partner);
        let a = translated_topics[t][j].clone();
        let b = translated_topics[partner.0][partner.1].clone();
        translated_topics[t][j] = b.clone();
        translated_topics[partner.0][partner.1] = a.clone();
        shifted.push(a);
        shifted.push(b);
    }
    shifted.sort();

    let word_dist = WeightedIndex::new((0..nw).map(|j| 1.0 / (j as f64 + 10.0))).expect("positive weights");
    let original_style = Style {
        lengths: (config.min_len, config.max_len),
        function_rate: 0.30,
        function_dist: WeightedIndex::new((0..nf).map(|j| 1.0 / (j as f64 + 1.0))).expect("positive weights"),
        topics: base,
    };
    let translated_style = Style {
        lengths: (config.min_len, config.max_len),
        function_rate: 0.40,
        function_dist: WeightedIndex::new((0..nf).map(|j| 1.0 / ((nf - j) as f64))).expect("positive weights"),
        topics: translated_topics,
    };

    let mut corpus_rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(1));
    let original = Corpus::new(
        (0..config.sentences_per_style)
            .map(|_| original_style.sentence(&mut corpus_rng, &word_dist, &functions))
            .collect(),
    );
    let translated = Corpus::new(
        (0..config.sentences_per_style)
            .map(|_| translated_style.sentence(&mut corpus_rng, &word_dist, &functions))
            .collect(),
    );

    let gold = gold_pairs(config, &shifted, &mut rng);
    SynthCorpora {
        original,
        translated,
        gold,
        shifted,
    }
}

/// Pairs of frequent, unshifted content words scored by topic proximity.
fn gold_pairs(config: &SynthConfig, shifted: &[String], rng: &mut ChaCha8Rng) -> Vec<GoldPair> {
    let (nt, half) = (config.topics, config.topics / 2);
    let mut seen = std::collections::HashSet::new();
    let mut out = Vec::new();
    while out.len() < config.gold_pairs {
        let t1 = rng.random_range(0..nt);
        let offset = rng.random_range(0..=half);
        let t2 = if rng.random::<bool>() {
            (t1 + offset) % nt
        } else {
            (t1 + nt - offset) % nt
        };
        let a = content_word(t1, rng.random_range(0..30));
        let b = content_word(t2, rng.random_range(0..30));
        if a == b || shifted.contains(&a) || shifted.contains(&b) {
            continue;
        }
        let key = if a < b {
            (a.clone(), b.clone())
        } else {
            (b.clone(), a.clone())
        };
        if !seen.insert(key) {
            continue;
        }
        let dist = circular_distance(t1, t2, nt);
        let score = 10.0 * (1.0 - dist as f64 / half as f64);
        out.push(GoldPair {
            first: a,
            second: b,
            score: (score * 100.0).round() / 100.0,
        });
    }
    out
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn ids(prefix: &str, n: usize) -> Vec<String> {
    (0..n).map(|i| format!("{prefix}{i}")).collect()
}

/// Standard normal vectors labeled by the sign of coordinate 0 plus
/// `noise`-scaled Gaussian noise.
pub fn planted_direction(n: usize, d: usize, noise: f64, seed: u64) -> LabeledVectorSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data = Vec::with_capacity(n * d);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let x: Vec<f64> = (0..d).map(|_| normal(&mut rng)).collect();
        labels.push(usize::from(x[0] + noise * normal(&mut rng) > 0.0));
        data.extend(x);
    }
    LabeledVectorSet::binary(ids("x", n), data, d, labels).expect("consistent shapes")
}

/// Vectors whose label is the sign of a sum over a `rank`-dimensional
/// subspace with unequal per-axis scales, so no single direction carries
/// all of the label information. The subspace is randomly rotated.
pub fn planted_subspace(n: usize, d: usize, rank: usize, seed: u64) -> LabeledVectorSet {
    assert!(rank >= 1 && rank <= d, "rank must lie in 1..=d");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rotation = nalgebra::DMatrix::from_fn(d, d, |_, _| normal(&mut rng)).qr().q();
    let scales: Vec<f64> = (0..rank)
        .map(|i| 3f64.powf(i as f64 - (rank as f64 - 1.0) / 2.0))
        .collect();
    let mut data = Vec::with_capacity(n * d);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let z: Vec<f64> = (0..d)
            .map(|i| normal(&mut rng) * if i < rank { scales[i] } else { 1.0 })
            .collect();
        let signal: f64 = z[..rank].iter().sum::<f64>() + 0.05 * normal(&mut rng);
        labels.push(usize::from(signal > 0.0));
        let x = &rotation * nalgebra::DVector::from_vec(z);
        data.extend(x.iter());
    }
    LabeledVectorSet::binary(ids("x", n), data, d, labels).expect("consistent shapes")
}

#[derive(Debug, Clone, PartialEq)]
pub struct NuisanceConfig {
    pub n_train: usize,
    pub n_test: usize,
    pub dim: usize,
    pub classes: usize,
    pub seed: u64,
}

impl Default for NuisanceConfig {
    fn default() -> Self {
        NuisanceConfig {
            n_train: 3000,
            n_test: 1500,
            dim: 10,
            classes: 3,
            seed: 11,
        }
    }
}

/// A downstream task whose shifted training data leaks the class through a
/// nuisance direction that carries no class information in original data.
#[derive(Debug, Clone)]
pub struct NuisanceInstance {
    pub orig_train: LabeledVectorSet,
    pub orig_test: LabeledVectorSet,
    pub shifted_train: LabeledVectorSet,
    pub shifted_test: LabeledVectorSet,
    pub nuisance: Vec<f64>,
}

/// Task signal lives in coordinates 0 and 1 (class centers on a circle);
/// the nuisance direction is the last coordinate. Shifted data has weaker,
/// skewed task signal and a class-dependent nuisance offset.
pub fn planted_nuisance(config: &NuisanceConfig) -> NuisanceInstance {
    let (d, c) = (config.dim, config.classes);
    assert!(d >= 3 && c >= 2, "need dim >= 3 and at least 2 classes");
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let centers: Vec<[f64; 2]> = (0..c)
        .map(|k| {
            let a = std::f64::consts::TAU * k as f64 / c as f64;
            [1.5 * a.cos(), 1.5 * a.sin()]
        })
        .collect();
    let label_names: Vec<String> = (0..c).map(|k| format!("c{k}")).collect();

    let mut make = |n: usize, shifted: bool, prefix: &str| {
        let mut data = Vec::with_capacity(n * d);
        let mut labels = Vec::with_capacity(n);
        for i in 0..n {
            let k = i % c;
            let mut center = centers[k];
            if shifted {
                // Weaker signal, and the last class drifts toward the first.
                center = [0.6 * center[0], 0.6 * center[1]];
                if k == c - 1 {
                    center[0] = 0.3 * center[0] + 0.7 * 0.6 * centers[0][0];
                    center[1] = 0.3 * center[1] + 0.7 * 0.6 * centers[0][1];
                }
            }
            let mut x: Vec<f64> = (0..d).map(|_| normal(&mut rng)).collect();
            x[0] += center[0];
            x[1] += center[1];
            x[d - 1] = if shifted {
                2.0 * (k as f64 - (c as f64 - 1.0) / 2.0) + 0.3 * x[d - 1]
            } else {
                2.0 * x[d - 1]
            };
            labels.push(k);
            data.extend(x);
        }
        LabeledVectorSet::new(ids(prefix, n), data, d, labels, label_names.clone()).expect("consistent shapes")
    };
    let orig_train = make(config.n_train, false, "otr");
    let orig_test = make(config.n_test, false, "ote");
    let shifted_train = make(config.n_train, true, "str");
    let shifted_test = make(config.n_test, true, "ste");
    let mut nuisance = vec![0.0; d];
    nuisance[d - 1] = 1.0;
    NuisanceInstance {
        orig_train,
        orig_test,
        shifted_train,
        shifted_test,
        nuisance,
    }
}
