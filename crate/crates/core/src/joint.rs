//! Direct joint-space tagging: every token is suffixed with its origin before
//! a single space is trained over both corpora.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::labeled::LabeledVectorSet;
use crate::space::EmbeddingSpace;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Origin {
    Original,
    Translated,
}

/// Tag suffixes and the shuffle seed used to build a tagged corpus.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TagSpec {
    pub tag_o: String,
    pub tag_t: String,
    pub seed: u64,
}

impl Default for TagSpec {
    fn default() -> Self {
        TagSpec {
            tag_o: "_o".into(),
            tag_t: "_t".into(),
            seed: 1,
        }
    }
}

impl TagSpec {
    pub fn validate(&self) -> Result<()> {
        if self.tag_o.is_empty() || self.tag_t.is_empty() {
            return Err(Error::InvalidArgument("tags must be non-empty".into()));
        }
        if self.tag_o == self.tag_t {
            return Err(Error::InvalidArgument("tags must differ".into()));
        }
        Ok(())
    }

    /// Origin and untagged base form of a tagged token.
    ///
    /// When one tag is a suffix of the other, the longer match wins.
    pub fn origin_of<'a>(&self, token: &'a str) -> Option<(Origin, &'a str)> {
        let o = token.strip_suffix(self.tag_o.as_str());
        let t = token.strip_suffix(self.tag_t.as_str());
        match (o, t) {
            (Some(bo), Some(bt)) => Some(if bo.len() <= bt.len() {
                (Origin::Original, bo)
            } else {
                (Origin::Translated, bt)
            }),
            (Some(b), None) => Some((Origin::Original, b)),
            (None, Some(b)) => Some((Origin::Translated, b)),
            (None, None) => None,
        }
    }

    fn tag(&self, origin: Origin) -> &str {
        match origin {
            Origin::Original => &self.tag_o,
            Origin::Translated => &self.tag_t,
        }
    }

    /// The sidecar line `#tag_o=<o> tag_t=<t> seed=<s>`.
    pub fn header(&self) -> String {
        format!("#tag_o={} tag_t={} seed={}", self.tag_o, self.tag_t, self.seed)
    }

    pub fn parse_header(line: &str) -> Option<Self> {
        let body = line.trim().strip_prefix('#')?;
        let mut spec = TagSpec {
            tag_o: String::new(),
            tag_t: String::new(),
            seed: 0,
        };
        let mut seen = 0;
        for kv in body.split_whitespace() {
            match kv.split_once('=')? {
                ("tag_o", v) => spec.tag_o = v.to_string(),
                ("tag_t", v) => spec.tag_t = v.to_string(),
                ("seed", v) => spec.seed = v.parse().ok()?,
                _ => continue,
            }
            seen += 1;
        }
        (seen == 3).then_some(spec)
    }
}

/// Per-origin totals of the raw corpora.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TagStats {
    pub sentences_o: usize,
    pub sentences_t: usize,
    pub tokens_o: usize,
    pub tokens_t: usize,
    pub types_o: usize,
    pub types_t: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaggedCorpus {
    pub spec: TagSpec,
    pub corpus: Corpus,
    pub stats: TagStats,
}

fn check_and_tag(corpus: &Corpus, spec: &TagSpec, origin: Origin, out: &mut Vec<Vec<String>>) -> Result<usize> {
    let tag = spec.tag(origin);
    let mut types = HashSet::new();
    for (line, sentence) in corpus.sentences.iter().enumerate() {
        let mut tagged = Vec::with_capacity(sentence.len());
        for token in sentence {
            if token.ends_with(spec.tag_o.as_str()) || token.ends_with(spec.tag_t.as_str()) {
                let which = match origin {
                    Origin::Original => "original",
                    Origin::Translated => "translated",
                };
                return Err(Error::InvalidArgument(format!(
                    "token `{token}` on sentence {} of the {which} corpus already ends with a tag",
                    line + 1
                )));
            }
            types.insert(token.as_str());
            tagged.push(format!("{token}{tag}"));
        }
        out.push(tagged);
    }
    Ok(types.len())
}

/// Tags both corpora and returns their seeded, sentence-shuffled concatenation.
pub fn tag_corpora(corpus_o: &Corpus, corpus_t: &Corpus, spec: &TagSpec) -> Result<TaggedCorpus> {
    spec.validate()?;
    let mut sentences = Vec::with_capacity(corpus_o.len() + corpus_t.len());
    let types_o = check_and_tag(corpus_o, spec, Origin::Original, &mut sentences)?;
    let types_t = check_and_tag(corpus_t, spec, Origin::Translated, &mut sentences)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    sentences.shuffle(&mut rng);
    Ok(TaggedCorpus {
        spec: spec.clone(),
        corpus: Corpus::new(sentences),
        stats: TagStats {
            sentences_o: corpus_o.len(),
            sentences_t: corpus_t.len(),
            tokens_o: corpus_o.num_tokens(),
            tokens_t: corpus_t.num_tokens(),
            types_o,
            types_t,
        },
    })
}

/// Writes the sidecar: tag header followed by a stats line.
pub fn save_tag_sidecar(tagged: &TaggedCorpus, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let s = &tagged.stats;
    let text = format!(
        "{}\n#sentences_o={} sentences_t={} tokens_o={} tokens_t={} types_o={} types_t={}\n",
        tagged.spec.header(),
        s.sentences_o,
        s.sentences_t,
        s.tokens_o,
        s.tokens_t,
        s.types_o,
        s.types_t
    );
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn load_tag_spec(path: impl AsRef<Path>) -> Result<TagSpec> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let first = text.lines().next().unwrap_or_default();
    let spec = TagSpec::parse_header(first)
        .ok_or_else(|| Error::parse(path.display().to_string(), 1, "expected `#tag_o=.. tag_t=.. seed=..`"))?;
    spec.validate()?;
    Ok(spec)
}

/// Labels every tagged vocabulary token: original-tagged → 0, translated → 1.
pub fn extract_labeled(joint: &EmbeddingSpace, spec: &TagSpec) -> Result<LabeledVectorSet> {
    let mut labels = Vec::with_capacity(joint.len());
    for token in joint.vocab() {
        match spec.origin_of(token) {
            Some((Origin::Original, _)) => labels.push(0),
            Some((Origin::Translated, _)) => labels.push(1),
            None => {
                return Err(Error::InvalidArgument(format!(
                    "token `{token}` carries neither `{}` nor `{}`",
                    spec.tag_o, spec.tag_t
                )))
            }
        }
    }
    LabeledVectorSet::binary(joint.vocab().to_vec(), joint.data().to_vec(), joint.dim(), labels)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StripPolicy {
    KeepOrigin(Origin),
    Average,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StrippedSpace {
    pub space: EmbeddingSpace,
    /// Words whose preferred origin was missing and fell back to the other.
    pub fallbacks: Vec<String>,
}

/// Merges `w_o`/`w_t` rows back into a single untagged row per word.
///
/// Tokens carrying neither tag are passed through unchanged.
pub fn strip_tags(joint: &EmbeddingSpace, spec: &TagSpec, policy: StripPolicy) -> Result<StrippedSpace> {
    let d = joint.dim();
    let mut order: Vec<String> = Vec::new();
    let mut slots: HashMap<String, [Option<usize>; 2]> = HashMap::new();
    for (i, token) in joint.vocab().iter().enumerate() {
        let (side, base) = match spec.origin_of(token) {
            Some((Origin::Original, b)) => (0, b),
            Some((Origin::Translated, b)) => (1, b),
            None => (0, token.as_str()),
        };
        let entry = slots.entry(base.to_string()).or_insert_with(|| {
            order.push(base.to_string());
            [None, None]
        });
        entry[side] = Some(i);
    }
    let mut data = Vec::with_capacity(order.len() * d);
    let mut counts = joint.counts().map(|_| Vec::with_capacity(order.len()));
    let mut fallbacks = Vec::new();
    for word in &order {
        let [o, t] = slots[word];
        let rows: Vec<usize> = match (policy, o, t) {
            (StripPolicy::Average, Some(a), Some(b)) => vec![a, b],
            (StripPolicy::KeepOrigin(Origin::Original), Some(a), _) => vec![a],
            (StripPolicy::KeepOrigin(Origin::Translated), _, Some(b)) => vec![b],
            (StripPolicy::Average, Some(a), None) | (StripPolicy::Average, None, Some(a)) => vec![a],
            (StripPolicy::KeepOrigin(_), Some(a), None) | (StripPolicy::KeepOrigin(_), None, Some(a)) => {
                fallbacks.push(word.clone());
                vec![a]
            }
            (_, None, None) => unreachable!("every base word has at least one row"),
        };
        let scale = 1.0 / rows.len() as f64;
        let start = data.len();
        data.resize(start + d, 0.0);
        for &r in &rows {
            for (acc, x) in data[start..].iter_mut().zip(joint.row(r)) {
                *acc += x * scale;
            }
        }
        if let (Some(out), Some(src)) = (counts.as_mut(), joint.counts()) {
            out.push(o.map_or(0, |i| src[i]) + t.map_or(0, |i| src[i]));
        }
    }
    let mut space = EmbeddingSpace::new(order, data, d)?;
    if let Some(c) = counts {
        space = space.with_counts(c)?;
    }
    Ok(StrippedSpace { space, fallbacks })
}
