//! Command-line front end. Every subcommand reads and writes files, and
//! writes a `<primary output>.manifest` next to its main output.
//!
//! Exit codes: 0 success, 1 invalid arguments (nothing written), 2 runtime
//! failure (outputs of the failed run removed).

use std::ffi::OsString;
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::align::{
    direction_from_list, direction_from_word, identity_dictionary, load_direction, preprocess, procrustes_align,
    save_direction, save_map, split_by_direction, AveragedDirection,
};
use crate::corpus::{load_corpus, save_corpus, Corpus};
use crate::error::{Error, Result};
use crate::eval::{
    balance_classes, classify_repeated, export_2d, load_gold, save_gold, spearman_similarity, sym_asym_eval, SplitSpec,
};
use crate::inlp::{load_projection, save_projection, ClassifierConfig, InlpConfig, Projection, ProjectionMode};
use crate::joint::{
    extract_labeled, load_tag_spec, save_tag_sidecar, strip_tags, tag_corpora, Origin, StripPolicy, TagSpec,
};
use crate::labeled::{load_labeled, save_labeled};
use crate::manifest::Manifest;
use crate::sgns::{train, TrainConfig};
use crate::space::{attach_counts, load_space, save_counts, save_space, sentence_vectors, EmbeddingSpace};
use crate::synth;
use crate::usage::{load_lexicon, save_lexicon, score_usage_change, top_g};

#[derive(Debug, Parser)]
#[command(
    name = "debias",
    version,
    about = "Remove translationese signal from embeddings with iterative nullspace projection"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train skip-gram embeddings on a tokenized corpus.
    TrainEmbeddings(TrainEmbeddingsArgs),
    /// Rank shared words by how much their neighborhoods differ.
    UsageChange(UsageChangeArgs),
    /// Fit an orthogonal map from a source space onto a target space.
    Align(AlignArgs),
    /// Compute the translationese direction from aligned spaces.
    Direction(DirectionArgs),
    /// Label joint-space words by the sign of their cosine with a direction.
    SplitByDirection(SplitByDirectionArgs),
    /// Tag and merge an original and a translated corpus.
    TagCorpora(TagCorporaArgs),
    /// Label tagged joint-space words by origin.
    ExtractLabeled(ExtractLabeledArgs),
    /// Merge tagged word pairs back into one untagged space.
    StripTags(StripTagsArgs),
    /// Learn a projection that removes the label from vectors.
    Inlp(InlpArgs),
    /// Apply a projection to a space or a labeled set.
    Apply(ApplyArgs),
    /// Mean-pool token vectors into labeled sentence vectors.
    Sentvec(SentvecArgs),
    /// Measure label recoverability before and after debiasing.
    ClassifyEval(ClassifyEvalArgs),
    /// Spearman correlation against a gold word-similarity list.
    Simeval(SimevalArgs),
    /// Symmetric/asymmetric transfer evaluation.
    Symasym(SymasymArgs),
    /// Export the top two principal components of a labeled set.
    Export2d(Export2dArgs),
    /// Write a seeded synthetic dataset.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
struct TrainEmbeddingsArgs {
    /// One or more corpora, concatenated in the order given.
    #[arg(long, required = true, num_args = 1..)]
    corpus: Vec<PathBuf>,
    /// Shuffle the concatenated sentences with this seed before training.
    #[arg(long)]
    shuffle_seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 100)]
    dim: usize,
    #[arg(long, default_value_t = 5)]
    window: usize,
    #[arg(long, default_value_t = 5)]
    negatives: usize,
    #[arg(long, default_value_t = 5)]
    epochs: usize,
    #[arg(long, default_value_t = 5)]
    min_count: u64,
    #[arg(long, default_value_t = 0.025)]
    lr: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

#[derive(Debug, Args)]
struct UsageChangeArgs {
    #[arg(long)]
    space_o: PathBuf,
    #[arg(long)]
    space_t: PathBuf,
    #[arg(long, default_value_t = crate::usage::DEFAULT_K)]
    k: usize,
    #[arg(long, default_value_t = crate::usage::DEFAULT_MIN_COUNT)]
    min_count: u64,
    #[arg(long)]
    out: PathBuf,
    /// Worker threads; 0 uses every core.
    #[arg(long, default_value_t = 0)]
    threads: usize,
}

#[derive(Debug, Args)]
struct AlignArgs {
    #[arg(long)]
    source: PathBuf,
    #[arg(long)]
    target: PathBuf,
    /// Word pairs `src<TAB>tgt`; defaults to every shared word.
    #[arg(long)]
    dictionary: Option<PathBuf>,
    /// Map file.
    #[arg(long)]
    out: PathBuf,
    /// Also write the preprocessed, mapped source space here.
    #[arg(long)]
    aligned: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct DirectionArgs {
    #[arg(long)]
    aligned_t: PathBuf,
    #[arg(long)]
    aligned_o: PathBuf,
    /// Use a single word.
    #[arg(long)]
    word: Option<String>,
    /// Use the top `--g-size` words of a usage-change lexicon.
    #[arg(long)]
    lexicon: Option<PathBuf>,
    /// Use the words listed one per line.
    #[arg(long)]
    words: Option<PathBuf>,
    #[arg(long, default_value_t = crate::usage::DEFAULT_G_SIZE)]
    g_size: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct SplitByDirectionArgs {
    #[arg(long)]
    joint: PathBuf,
    #[arg(long)]
    direction: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Use the joint vectors as stored instead of unit-center-unit preprocessed.
    #[arg(long)]
    raw: bool,
    /// Downsample the larger class to the size of the smaller.
    #[arg(long)]
    balance: bool,
    /// Keep only words seen this often (needs `<joint>.counts`).
    #[arg(long)]
    min_count: Option<u64>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

#[derive(Debug, Args)]
struct TagCorporaArgs {
    #[arg(long)]
    corpus_o: PathBuf,
    #[arg(long)]
    corpus_t: PathBuf,
    /// Tagged corpus; the tag sidecar goes to `<out>.tags`.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "_o")]
    tag_o: String,
    #[arg(long, default_value = "_t")]
    tag_t: String,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

#[derive(Debug, Args)]
struct ExtractLabeledArgs {
    #[arg(long)]
    joint: PathBuf,
    /// Tag sidecar written by tag-corpora.
    #[arg(long)]
    tags: PathBuf,
    /// Keep only tagged words seen this often (needs `<joint>.counts`).
    #[arg(long)]
    min_count: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum PolicyArg {
    KeepO,
    KeepT,
    Average,
}

#[derive(Debug, Args)]
struct StripTagsArgs {
    #[arg(long)]
    joint: PathBuf,
    #[arg(long)]
    tags: PathBuf,
    #[arg(long, value_enum, default_value = "keep-o")]
    policy: PolicyArg,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModeArg {
    Product,
    OrthogonalBasis,
}

#[derive(Debug, Args)]
struct ClassifierOpts {
    /// SGD epochs per classifier.
    #[arg(long, default_value_t = 7)]
    epochs: usize,
    #[arg(long, default_value_t = 0.1)]
    lr: f64,
    #[arg(long, default_value_t = 1e-4)]
    l2: f64,
    #[arg(long, default_value_t = 23)]
    seed: u64,
}

impl ClassifierOpts {
    fn config(&self) -> ClassifierConfig {
        ClassifierConfig {
            epochs: self.epochs,
            learning_rate: self.lr,
            l2: self.l2,
            seed: self.seed,
        }
    }

    fn record(&self, m: &mut Manifest) {
        m.set("epochs", self.epochs);
        m.set("lr", self.lr);
        m.set("l2", self.l2);
        m.set("seed", self.seed);
    }
}

#[derive(Debug, Args)]
struct InlpOpts {
    #[arg(long, value_enum, default_value = "orthogonal-basis")]
    mode: ModeArg,
    #[arg(long, default_value_t = crate::inlp::WORD_LEVEL_MAX_CLASSIFIERS)]
    max_classifiers: usize,
    #[arg(long, default_value_t = 0.01)]
    stop_epsilon: f64,
    #[arg(long)]
    warm_start: bool,
    #[command(flatten)]
    classifier: ClassifierOpts,
}

impl InlpOpts {
    fn config(&self) -> InlpConfig {
        InlpConfig {
            max_classifiers: self.max_classifiers,
            stop_epsilon: self.stop_epsilon,
            mode: match self.mode {
                ModeArg::Product => ProjectionMode::Product,
                ModeArg::OrthogonalBasis => ProjectionMode::OrthogonalBasis,
            },
            classifier: self.classifier.config(),
            warm_start: self.warm_start,
        }
    }

    fn record(&self, m: &mut Manifest) {
        let c = self.config();
        m.set("mode", c.mode);
        m.set("max_classifiers", c.max_classifiers);
        m.set("stop_epsilon", c.stop_epsilon);
        m.set("warm_start", c.warm_start);
        self.classifier.record(m);
    }
}

#[derive(Debug, Args)]
struct InlpArgs {
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    dev: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    opts: InlpOpts,
}

#[derive(Debug, Args)]
struct ApplyArgs {
    #[arg(long)]
    projection: PathBuf,
    #[arg(long)]
    space: Option<PathBuf>,
    #[arg(long)]
    labeled: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct SentvecArgs {
    #[arg(long)]
    space: PathBuf,
    /// Lines of `label<TAB>sentence`.
    #[arg(long)]
    sentences: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct ClassifyEvalArgs {
    #[arg(long)]
    data: PathBuf,
    /// Report TSV; key=value copy at `<out>.kv`.
    #[arg(long)]
    out: PathBuf,
    /// Save the projection learned on the first split.
    #[arg(long)]
    projection_out: Option<PathBuf>,
    #[arg(long, default_value = "classification")]
    task: String,
    #[arg(long, default_value_t = 0.70)]
    train_frac: f64,
    #[arg(long, default_value_t = 0.15)]
    dev_frac: f64,
    #[arg(long, default_value_t = 0.15)]
    test_frac: f64,
    #[arg(long, default_value_t = 1)]
    split_seed: u64,
    /// Repeat with split seeds split-seed, split-seed+1, ...
    #[arg(long, default_value_t = 1)]
    runs: usize,
    #[command(flatten)]
    opts: InlpOpts,
}

#[derive(Debug, Args)]
struct SimevalArgs {
    #[arg(long)]
    space: PathBuf,
    /// Lines of `w1<TAB>w2<TAB>score`.
    #[arg(long)]
    gold: PathBuf,
    /// Also score the space after applying this projection.
    #[arg(long)]
    projection: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct SymasymArgs {
    #[arg(long)]
    orig_train: PathBuf,
    #[arg(long)]
    orig_test: PathBuf,
    #[arg(long)]
    shifted_train: PathBuf,
    #[arg(long)]
    shifted_test: PathBuf,
    #[arg(long)]
    projection: PathBuf,
    /// Report TSV; key=value copy at `<out>.kv`.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    classifier: ClassifierOpts,
}

#[derive(Debug, Args)]
struct Export2dArgs {
    #[arg(long)]
    data: PathBuf,
    /// Apply this projection before the PCA.
    #[arg(long)]
    projection: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SynthKind {
    /// original.txt, translated.txt, sentences.tsv (label 0 original, 1 translated), gold.tsv, shifted.txt
    Corpus,
    /// orig_train/orig_test/shifted_train/shifted_test .tsv and nuisance.proj
    Nuisance,
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, value_enum, default_value = "corpus")]
    kind: SynthKind,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Sentences per style (corpus kind).
    #[arg(long, default_value_t = 5000)]
    sentences: usize,
}

fn sidecar(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

/// Files a subcommand reads and writes.
struct Plan {
    inputs: Vec<(String, PathBuf)>,
    outputs: Vec<PathBuf>,
    /// Output directory created before writing; also holds the manifest.
    create_dir: Option<PathBuf>,
    problems: Vec<String>,
}

impl Plan {
    fn new() -> Self {
        Plan {
            inputs: Vec::new(),
            outputs: Vec::new(),
            create_dir: None,
            problems: Vec::new(),
        }
    }

    fn input(&mut self, name: impl Into<String>, path: &Path) -> &mut Self {
        self.inputs.push((name.into(), path.to_path_buf()));
        self
    }

    fn output(&mut self, path: &Path) -> &mut Self {
        self.outputs.push(path.to_path_buf());
        self
    }

    fn check(&mut self, ok: bool, message: impl Into<String>) -> &mut Self {
        if !ok {
            self.problems.push(message.into());
        }
        self
    }

    fn manifest_path(&self) -> PathBuf {
        match &self.create_dir {
            Some(dir) => dir.join("synth.manifest"),
            None => sidecar(&self.outputs[0], ".manifest"),
        }
    }
}

/// Best-effort absolute form of a path that may not exist yet.
fn normalized(path: &Path) -> PathBuf {
    if let Ok(p) = path.canonicalize() {
        return p;
    }
    let parent = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    match (parent.canonicalize(), path.file_name()) {
        (Ok(dir), Some(name)) => dir.join(name),
        _ => path.to_path_buf(),
    }
}

fn validate(plan: &Plan) -> Vec<String> {
    let mut problems = plan.problems.clone();
    for (name, path) in &plan.inputs {
        if !path.is_file() {
            problems.push(format!(
                "input {name} `{}` does not exist or is not a file",
                path.display()
            ));
        }
    }
    let inputs: Vec<PathBuf> = plan.inputs.iter().map(|(_, p)| normalized(p)).collect();
    let mut outputs = plan.outputs.clone();
    outputs.push(plan.manifest_path());
    let mut seen = Vec::new();
    for out in &outputs {
        let norm = normalized(out);
        if inputs.contains(&norm) {
            problems.push(format!("output `{}` would overwrite an input", out.display()));
        }
        if seen.contains(&norm) {
            problems.push(format!("output `{}` is named twice", out.display()));
        }
        seen.push(norm);
        if out.is_dir() {
            problems.push(format!("output `{}` is a directory", out.display()));
        }
        let parent = match out.parent() {
            Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
            _ => PathBuf::from("."),
        };
        let parent_ok = parent.is_dir() || plan.create_dir.as_deref() == Some(parent.as_path());
        if !parent_ok {
            problems.push(format!("output directory `{}` does not exist", parent.display()));
        }
    }
    if let Some(dir) = &plan.create_dir {
        let grand = dir
            .parent()
            .filter(|p| !p.as_os_str().is_empty())
            .unwrap_or(Path::new("."));
        if !dir.is_dir() && !grand.is_dir() {
            problems.push(format!("cannot create `{}`: parent does not exist", dir.display()));
        }
    }
    problems.dedup();
    problems
}

/// Parses `argv` (program name first) and runs the subcommand.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let mut manifest = Manifest::new(cli.command.name());
    let plan = cli.command.plan();
    let problems = validate(&plan);
    if !problems.is_empty() {
        eprintln!("error: invalid arguments:");
        for p in &problems {
            eprintln!("  - {p}");
        }
        return 1;
    }
    let result = (|| -> Result<()> {
        if let Some(dir) = &plan.create_dir {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        for (name, path) in &plan.inputs {
            manifest.input(name, path)?;
        }
        cli.command.record(&mut manifest);
        cli.command.execute()?;
        manifest.write(&plan.manifest_path())
    })();
    match result {
        Ok(()) => 0,
        Err(e) => {
            for out in plan.outputs.iter().chain([&plan.manifest_path()]) {
                let _ = fs::remove_file(out);
            }
            eprintln!("error: {e}");
            2
        }
    }
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::TrainEmbeddings(_) => "train-embeddings",
            Command::UsageChange(_) => "usage-change",
            Command::Align(_) => "align",
            Command::Direction(_) => "direction",
            Command::SplitByDirection(_) => "split-by-direction",
            Command::TagCorpora(_) => "tag-corpora",
            Command::ExtractLabeled(_) => "extract-labeled",
            Command::StripTags(_) => "strip-tags",
            Command::Inlp(_) => "inlp",
            Command::Apply(_) => "apply",
            Command::Sentvec(_) => "sentvec",
            Command::ClassifyEval(_) => "classify-eval",
            Command::Simeval(_) => "simeval",
            Command::Symasym(_) => "symasym",
            Command::Export2d(_) => "export2d",
            Command::Synth(_) => "synth",
        }
    }

    fn plan(&self) -> Plan {
        let mut p = Plan::new();
        match self {
            Command::TrainEmbeddings(a) => {
                for (i, c) in a.corpus.iter().enumerate() {
                    p.input(
                        if i == 0 {
                            "corpus".to_string()
                        } else {
                            format!("corpus{}", i + 1)
                        },
                        c,
                    );
                }
                p.output(&a.out).output(&sidecar(&a.out, ".counts"));
                p.problems.extend(a.config().problems());
            }
            Command::UsageChange(a) => {
                p.input("space_o", &a.space_o)
                    .input("space_o_counts", &sidecar(&a.space_o, ".counts"))
                    .input("space_t", &a.space_t)
                    .input("space_t_counts", &sidecar(&a.space_t, ".counts"))
                    .output(&a.out)
                    .check(a.k >= 1, "--k must be >= 1")
                    .check(a.min_count >= 1, "--min-count must be >= 1");
            }
            Command::Align(a) => {
                p.input("source", &a.source).input("target", &a.target).output(&a.out);
                if let Some(d) = &a.dictionary {
                    p.input("dictionary", d);
                }
                if let Some(o) = &a.aligned {
                    p.output(o);
                }
            }
            Command::Direction(a) => {
                p.input("aligned_t", &a.aligned_t)
                    .input("aligned_o", &a.aligned_o)
                    .output(&a.out);
                let sources = [a.word.is_some(), a.lexicon.is_some(), a.words.is_some()];
                p.check(
                    sources.iter().filter(|&&s| s).count() == 1,
                    "give exactly one of --word, --lexicon, --words",
                );
                if let Some(l) = &a.lexicon {
                    p.input("lexicon", l).check(a.g_size >= 1, "--g-size must be >= 1");
                }
                if let Some(w) = &a.words {
                    p.input("words", w);
                }
            }
            Command::SplitByDirection(a) => {
                p.input("joint", &a.joint)
                    .input("direction", &a.direction)
                    .output(&a.out);
                if a.min_count.is_some() {
                    p.input("joint_counts", &sidecar(&a.joint, ".counts"));
                }
            }
            Command::TagCorpora(a) => {
                p.input("corpus_o", &a.corpus_o)
                    .input("corpus_t", &a.corpus_t)
                    .output(&a.out)
                    .output(&sidecar(&a.out, ".tags"));
                if let Err(e) = a.spec().validate() {
                    p.problems.push(e.to_string());
                }
            }
            Command::ExtractLabeled(a) => {
                p.input("joint", &a.joint).input("tags", &a.tags).output(&a.out);
                if a.min_count.is_some() {
                    p.input("joint_counts", &sidecar(&a.joint, ".counts"));
                }
            }
            Command::StripTags(a) => {
                p.input("joint", &a.joint).input("tags", &a.tags).output(&a.out);
            }
            Command::Inlp(a) => {
                p.input("train", &a.train).input("dev", &a.dev).output(&a.out);
                p.problems.extend(a.opts.config().problems());
            }
            Command::Apply(a) => {
                p.input("projection", &a.projection).output(&a.out).check(
                    a.space.is_some() != a.labeled.is_some(),
                    "give exactly one of --space, --labeled",
                );
                if let Some(s) = &a.space {
                    p.input("space", s);
                }
                if let Some(l) = &a.labeled {
                    p.input("labeled", l);
                }
            }
            Command::Sentvec(a) => {
                p.input("space", &a.space)
                    .input("sentences", &a.sentences)
                    .output(&a.out);
            }
            Command::ClassifyEval(a) => {
                p.input("data", &a.data)
                    .output(&a.out)
                    .output(&sidecar(&a.out, ".kv"))
                    .check(a.runs >= 1, "--runs must be >= 1");
                if let Some(po) = &a.projection_out {
                    p.output(po);
                }
                p.problems.extend(a.split_spec().problems());
                p.problems.extend(a.opts.config().problems());
            }
            Command::Simeval(a) => {
                p.input("space", &a.space).input("gold", &a.gold).output(&a.out);
                if let Some(pr) = &a.projection {
                    p.input("projection", pr);
                }
            }
            Command::Symasym(a) => {
                p.input("orig_train", &a.orig_train)
                    .input("orig_test", &a.orig_test)
                    .input("shifted_train", &a.shifted_train)
                    .input("shifted_test", &a.shifted_test)
                    .input("projection", &a.projection)
                    .output(&a.out)
                    .output(&sidecar(&a.out, ".kv"));
                p.problems.extend(a.classifier.config().problems());
            }
            Command::Export2d(a) => {
                p.input("data", &a.data).output(&a.out);
                if let Some(pr) = &a.projection {
                    p.input("projection", pr);
                }
            }
            Command::Synth(a) => {
                p.create_dir = Some(a.out_dir.clone());
                let names: &[&str] = match a.kind {
                    SynthKind::Corpus => &[
                        "original.txt",
                        "translated.txt",
                        "sentences.tsv",
                        "gold.tsv",
                        "shifted.txt",
                    ],
                    SynthKind::Nuisance => &[
                        "orig_train.tsv",
                        "orig_test.tsv",
                        "shifted_train.tsv",
                        "shifted_test.tsv",
                        "nuisance.proj",
                    ],
                };
                for n in names {
                    p.output(&a.out_dir.join(n));
                }
                if let SynthKind::Corpus = a.kind {
                    p.problems.extend(a.corpus_config().problems());
                }
            }
        }
        p
    }

    fn record(&self, m: &mut Manifest) {
        let path = |p: &Path| p.display().to_string();
        match self {
            Command::TrainEmbeddings(a) => {
                m.set("out", path(&a.out));
                let c = a.config();
                m.set("dim", c.dim);
                m.set("window", c.window);
                m.set("negatives", c.negatives);
                m.set("epochs", c.epochs);
                m.set("min_count", c.min_count);
                m.set("lr", c.learning_rate);
                m.set("seed", c.seed);
                m.set(
                    "shuffle_seed",
                    a.shuffle_seed.map(|s| s.to_string()).unwrap_or_default(),
                );
            }
            Command::UsageChange(a) => {
                m.set("out", path(&a.out));
                m.set("k", a.k);
                m.set("min_count", a.min_count);
                m.set("threads", a.threads);
            }
            Command::Align(a) => {
                m.set("out", path(&a.out));
                m.set("aligned", a.aligned.as_deref().map(path).unwrap_or_default());
                m.set("dictionary", if a.dictionary.is_some() { "file" } else { "identity" });
                m.set("preprocess", "unit,center,unit");
            }
            Command::Direction(a) => {
                m.set("out", path(&a.out));
                m.set("word", a.word.clone().unwrap_or_default());
                m.set("g_size", a.g_size);
            }
            Command::SplitByDirection(a) => {
                m.set("out", path(&a.out));
                m.set("raw", a.raw);
                m.set("balance", a.balance);
                m.set("min_count", a.min_count.map(|c| c.to_string()).unwrap_or_default());
                m.set("seed", a.seed);
            }
            Command::TagCorpora(a) => {
                m.set("out", path(&a.out));
                m.set("tag_o", &a.tag_o);
                m.set("tag_t", &a.tag_t);
                m.set("seed", a.seed);
            }
            Command::ExtractLabeled(a) => {
                m.set("out", path(&a.out));
                m.set("min_count", a.min_count.map(|c| c.to_string()).unwrap_or_default());
            }
            Command::StripTags(a) => {
                m.set("out", path(&a.out));
                m.set("policy", format!("{:?}", a.policy).to_lowercase());
            }
            Command::Inlp(a) => {
                m.set("out", path(&a.out));
                a.opts.record(m);
            }
            Command::Apply(a) => m.set("out", path(&a.out)),
            Command::Sentvec(a) => m.set("out", path(&a.out)),
            Command::ClassifyEval(a) => {
                m.set("out", path(&a.out));
                m.set(
                    "projection_out",
                    a.projection_out.as_deref().map(path).unwrap_or_default(),
                );
                m.set("task", &a.task);
                m.set("train_frac", a.train_frac);
                m.set("dev_frac", a.dev_frac);
                m.set("test_frac", a.test_frac);
                m.set("split_seed", a.split_seed);
                m.set("runs", a.runs);
                a.opts.record(m);
            }
            Command::Simeval(a) => m.set("out", path(&a.out)),
            Command::Symasym(a) => {
                m.set("out", path(&a.out));
                a.classifier.record(m);
            }
            Command::Export2d(a) => m.set("out", path(&a.out)),
            Command::Synth(a) => {
                m.set("out_dir", path(&a.out_dir));
                m.set("kind", format!("{:?}", a.kind).to_lowercase());
                m.set("seed", a.seed);
                m.set("sentences", a.sentences);
            }
        }
    }

    fn execute(&self) -> Result<()> {
        match self {
            Command::TrainEmbeddings(a) => a.execute(),
            Command::UsageChange(a) => a.execute(),
            Command::Align(a) => a.execute(),
            Command::Direction(a) => a.execute(),
            Command::SplitByDirection(a) => a.execute(),
            Command::TagCorpora(a) => a.execute(),
            Command::ExtractLabeled(a) => {
                let spec = load_tag_spec(&a.tags)?;
                let joint = load_space(&a.joint)?;
                let joint = match a.min_count {
                    Some(min) => joint.subset(&frequent(&joint, &a.joint, min)?)?,
                    None => joint,
                };
                save_labeled(&extract_labeled(&joint, &spec)?, &a.out)
            }
            Command::StripTags(a) => a.execute(),
            Command::Inlp(a) => {
                let proj = crate::inlp::run_inlp(&load_labeled(&a.train)?, &load_labeled(&a.dev)?, &a.opts.config())?;
                eprintln!(
                    "{} classifiers, {} directions removed, converged={}",
                    proj.iterations,
                    proj.basis.len(),
                    proj.converged
                );
                save_projection(&proj, &a.out)
            }
            Command::Apply(a) => {
                let proj = load_projection(&a.projection)?;
                match (&a.space, &a.labeled) {
                    (Some(s), _) => save_space(&proj.apply_space(&load_space(s)?)?, &a.out),
                    (_, Some(l)) => save_labeled(&proj.apply_set(&load_labeled(l)?)?, &a.out),
                    _ => unreachable!("validated"),
                }
            }
            Command::Sentvec(a) => {
                let pooled = sentence_vectors(&load_space(&a.space)?, &a.sentences)?;
                if pooled.dropped > 0 {
                    eprintln!(
                        "{} sentences had no in-vocabulary token and were dropped",
                        pooled.dropped
                    );
                }
                save_labeled(&pooled.vectors, &a.out)
            }
            Command::ClassifyEval(a) => a.execute(),
            Command::Simeval(a) => a.execute(),
            Command::Symasym(a) => a.execute(),
            Command::Export2d(a) => {
                let mut data = load_labeled(&a.data)?;
                if let Some(p) = &a.projection {
                    data = load_projection(p)?.apply_set(&data)?;
                }
                export_2d(&data, &a.out)
            }
            Command::Synth(a) => a.execute(),
        }
    }
}

/// Tokens of `space` counted at least `min` times in `<path>.counts`.
fn frequent(space: &EmbeddingSpace, path: &Path, min: u64) -> Result<Vec<String>> {
    attach_counts(space.clone(), sidecar(path, ".counts"))?.frequent_tokens(min)
}

impl TrainEmbeddingsArgs {
    fn config(&self) -> TrainConfig {
        TrainConfig {
            dim: self.dim,
            window: self.window,
            negatives: self.negatives,
            epochs: self.epochs,
            min_count: self.min_count,
            learning_rate: self.lr,
            seed: self.seed,
        }
    }

    fn execute(&self) -> Result<()> {
        let parts = self.corpus.iter().map(load_corpus).collect::<Result<Vec<_>>>()?;
        let mut corpus = Corpus::concat(&parts);
        if let Some(seed) = self.shuffle_seed {
            corpus = corpus.shuffled(seed);
        }
        let out = train(&corpus, &self.config())?;
        let losses: Vec<String> = out.epoch_losses.iter().map(|l| format!("{l:.4}")).collect();
        eprintln!(
            "vocabulary {} words; epoch losses {}",
            out.space.len(),
            losses.join(" ")
        );
        save_space(&out.space, &self.out)?;
        save_counts(&out.space, sidecar(&self.out, ".counts"))
    }
}

impl UsageChangeArgs {
    fn execute(&self) -> Result<()> {
        let space_o = attach_counts(load_space(&self.space_o)?, sidecar(&self.space_o, ".counts"))?;
        let space_t = attach_counts(load_space(&self.space_t)?, sidecar(&self.space_t, ".counts"))?;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(self.threads)
            .build()
            .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
        let lexicon = pool.install(|| score_usage_change(&space_o, &space_t, self.k, self.min_count))?;
        eprintln!("{} eligible words ranked", lexicon.len());
        save_lexicon(&lexicon, &self.out)
    }
}

fn read_dictionary(path: &Path) -> Result<Vec<(String, String)>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let mut parts = line.split_whitespace();
        match (parts.next(), parts.next(), parts.next()) {
            (Some(s), Some(t), None) => out.push((s.to_string(), t.to_string())),
            _ => {
                return Err(Error::parse(
                    path.display().to_string(),
                    i + 1,
                    "expected `source<TAB>target`",
                ))
            }
        }
    }
    Ok(out)
}

fn read_word_list(path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text.split_whitespace().map(str::to_string).collect())
}

impl AlignArgs {
    fn execute(&self) -> Result<()> {
        let source = load_space(&self.source)?;
        let target = load_space(&self.target)?;
        let dictionary = match &self.dictionary {
            Some(d) => read_dictionary(d)?,
            None => identity_dictionary(&source, &target),
        };
        let map = procrustes_align(&source, &target, &dictionary)?;
        eprintln!("{} dictionary pairs used", map.dictionary_size);
        save_map(&map, &self.out)?;
        if let Some(out) = &self.aligned {
            save_space(&map.apply(&source)?, out)?;
        }
        Ok(())
    }
}

impl DirectionArgs {
    fn execute(&self) -> Result<()> {
        let aligned_t = load_space(&self.aligned_t)?;
        let aligned_o = load_space(&self.aligned_o)?;
        let direction = if let Some(w) = &self.word {
            direction_from_word(&aligned_t, &aligned_o, w)?
        } else {
            let words = match (&self.lexicon, &self.words) {
                (Some(l), _) => top_g(&load_lexicon(l)?, self.g_size),
                (_, Some(w)) => read_word_list(w)?,
                _ => unreachable!("validated"),
            };
            let AveragedDirection { direction, skipped } = direction_from_list(&aligned_t, &aligned_o, &words)?;
            if !skipped.is_empty() {
                eprintln!(
                    "{} list words missing from an aligned space were skipped",
                    skipped.len()
                );
            }
            direction
        };
        save_direction(&direction, &self.out)
    }
}

impl SplitByDirectionArgs {
    fn execute(&self) -> Result<()> {
        let mut joint = load_space(&self.joint)?;
        let keep = match self.min_count {
            Some(min) => Some(frequent(&joint, &self.joint, min)?),
            None => None,
        };
        if !self.raw {
            joint = preprocess(&joint)?;
        }
        if let Some(keep) = keep {
            joint = joint.subset(&keep)?;
        }
        let mut set = split_by_direction(&joint, &load_direction(&self.direction)?)?;
        let counts = set.class_counts();
        eprintln!("split: {} original-side, {} translationese-side", counts[0], counts[1]);
        if self.balance {
            set = balance_classes(&set, self.seed)?;
        }
        save_labeled(&set, &self.out)
    }
}

impl TagCorporaArgs {
    fn spec(&self) -> TagSpec {
        TagSpec {
            tag_o: self.tag_o.clone(),
            tag_t: self.tag_t.clone(),
            seed: self.seed,
        }
    }

    fn execute(&self) -> Result<()> {
        let tagged = tag_corpora(
            &load_corpus(&self.corpus_o)?,
            &load_corpus(&self.corpus_t)?,
            &self.spec(),
        )?;
        save_corpus(&tagged.corpus, &self.out)?;
        save_tag_sidecar(&tagged, sidecar(&self.out, ".tags"))
    }
}

impl StripTagsArgs {
    fn execute(&self) -> Result<()> {
        let spec = load_tag_spec(&self.tags)?;
        let policy = match self.policy {
            PolicyArg::KeepO => StripPolicy::KeepOrigin(Origin::Original),
            PolicyArg::KeepT => StripPolicy::KeepOrigin(Origin::Translated),
            PolicyArg::Average => StripPolicy::Average,
        };
        let stripped = strip_tags(&load_space(&self.joint)?, &spec, policy)?;
        if !stripped.fallbacks.is_empty() {
            eprintln!("{} words fell back to the other origin", stripped.fallbacks.len());
        }
        save_space(&stripped.space, &self.out)
    }
}

impl ClassifyEvalArgs {
    fn split_spec(&self) -> SplitSpec {
        SplitSpec {
            train_frac: self.train_frac,
            dev_frac: self.dev_frac,
            test_frac: self.test_frac,
            seed: self.split_seed,
        }
    }

    fn execute(&self) -> Result<()> {
        let data = load_labeled(&self.data)?;
        let (report, proj) = classify_repeated(&self.task, &data, &self.split_spec(), &self.opts.config(), self.runs)?;
        let tsv = report.to_tsv();
        print!("{tsv}");
        fs::write(&self.out, tsv).map_err(|e| Error::io(&self.out, e))?;
        let kv_path = sidecar(&self.out, ".kv");
        fs::write(&kv_path, report.to_key_values()).map_err(|e| Error::io(&kv_path, e))?;
        if let Some(p) = &self.projection_out {
            save_projection(&proj, p)?;
        }
        Ok(())
    }
}

impl SimevalArgs {
    fn execute(&self) -> Result<()> {
        let space = load_space(&self.space)?;
        let gold = load_gold(&self.gold)?;
        let before = spearman_similarity(&space, &gold)?;
        let mut fields = vec![
            ("rho".to_string(), format!("{:.6}", before.rho)),
            ("covered".to_string(), before.covered.to_string()),
            ("total".to_string(), before.total.to_string()),
        ];
        if let Some(p) = &self.projection {
            let after = spearman_similarity(&load_projection(p)?.apply_space(&space)?, &gold)?;
            fields.push(("rho_after".to_string(), format!("{:.6}", after.rho)));
            fields.push(("rho_change".to_string(), format!("{:.6}", after.rho - before.rho)));
        }
        fields.sort();
        let text: String = fields.iter().map(|(k, v)| format!("{k}={v}\n")).collect();
        print!("{text}");
        fs::write(&self.out, text).map_err(|e| Error::io(&self.out, e))
    }
}

impl SymasymArgs {
    fn execute(&self) -> Result<()> {
        let report = sym_asym_eval(
            &load_labeled(&self.orig_train)?,
            &load_labeled(&self.orig_test)?,
            &load_labeled(&self.shifted_train)?,
            &load_labeled(&self.shifted_test)?,
            &load_projection(&self.projection)?,
            &self.classifier.config(),
        )?;
        let tsv = report.to_tsv();
        print!("{tsv}");
        fs::write(&self.out, tsv).map_err(|e| Error::io(&self.out, e))?;
        let kv_path = sidecar(&self.out, ".kv");
        fs::write(&kv_path, report.to_key_values()).map_err(|e| Error::io(&kv_path, e))
    }
}

impl SynthArgs {
    fn corpus_config(&self) -> synth::SynthConfig {
        synth::SynthConfig {
            sentences_per_style: self.sentences,
            seed: self.seed,
            ..synth::SynthConfig::default()
        }
    }

    fn execute(&self) -> Result<()> {
        let dir = &self.out_dir;
        match self.kind {
            SynthKind::Corpus => {
                let data = synth::generate(&self.corpus_config());
                save_corpus(&data.original, dir.join("original.txt"))?;
                save_corpus(&data.translated, dir.join("translated.txt"))?;
                let mut sentences = String::new();
                for (label, corpus) in [(0, &data.original), (1, &data.translated)] {
                    for s in &corpus.sentences {
                        sentences.push_str(&format!("{label}\t{}\n", s.join(" ")));
                    }
                }
                let path = dir.join("sentences.tsv");
                fs::write(&path, sentences).map_err(|e| Error::io(&path, e))?;
                save_gold(&data.gold, dir.join("gold.tsv"))?;
                save_corpus(
                    &Corpus::new(data.shifted.iter().map(|w| vec![w.clone()]).collect()),
                    dir.join("shifted.txt"),
                )
            }
            SynthKind::Nuisance => {
                let inst = synth::planted_nuisance(&synth::NuisanceConfig {
                    seed: self.seed,
                    ..synth::NuisanceConfig::default()
                });
                save_labeled(&inst.orig_train, dir.join("orig_train.tsv"))?;
                save_labeled(&inst.orig_test, dir.join("orig_test.tsv"))?;
                save_labeled(&inst.shifted_train, dir.join("shifted_train.tsv"))?;
                save_labeled(&inst.shifted_test, dir.join("shifted_test.tsv"))?;
                let proj = Projection::from_basis(inst.nuisance.len(), &[inst.nuisance])?;
                save_projection(&proj, dir.join("nuisance.proj"))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn argv(args: &[&str]) -> Vec<String> {
        std::iter::once("debias")
            .chain(args.iter().copied())
            .map(String::from)
            .collect()
    }

    #[test]
    fn help_and_version_exit_zero() {
        assert_eq!(run(argv(&["--help"])), 0);
        assert_eq!(run(argv(&["--version"])), 0);
    }

    #[test]
    fn unknown_flag_and_missing_subcommand_exit_one() {
        assert_eq!(run(argv(&["inlp", "--bogus"])), 1);
        assert_eq!(run(argv(&[])), 1);
    }

    #[test]
    fn sidecar_appends_suffix() {
        assert_eq!(
            sidecar(Path::new("a/b.vec"), ".counts"),
            PathBuf::from("a/b.vec.counts")
        );
    }

    #[test]
    fn validation_aggregates_problems() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("p.proj");
        let code = run(argv(&[
            "inlp",
            "--train",
            "/nonexistent/train.tsv",
            "--dev",
            "/nonexistent/dev.tsv",
            "--out",
            out.to_str().unwrap(),
            "--max-classifiers",
            "0",
        ]));
        assert_eq!(code, 1);
        assert!(!out.exists());
        assert!(!sidecar(&out, ".manifest").exists());
        let cmd = Cli::try_parse_from(argv(&[
            "inlp",
            "--train",
            "/x/a",
            "--dev",
            "/x/b",
            "--out",
            "/x/c",
            "--max-classifiers",
            "0",
            "--lr=-1",
        ]))
        .unwrap()
        .command;
        let problems = validate(&cmd.plan());
        assert!(problems.len() >= 4, "{problems:?}");
    }

    #[test]
    fn output_may_not_overwrite_input() {
        let dir = tempfile::tempdir().unwrap();
        let corpus = dir.path().join("c.txt");
        fs::write(&corpus, "a b c\n").unwrap();
        let c = corpus.to_str().unwrap();
        assert_eq!(run(argv(&["train-embeddings", "--corpus", c, "--out", c])), 1);
        assert_eq!(fs::read_to_string(&corpus).unwrap(), "a b c\n");
    }
}
