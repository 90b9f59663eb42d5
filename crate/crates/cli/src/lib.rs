//! File-driven command surface for DuFFin.
//!
//! Every command reads its inputs from files, writes its outputs to files,
//! and embeds the parsed command line in each output so runs can be
//! replayed. Exit codes: 0 success, 2 usage or validation, 3 transport,
//! 4 incompatible fingerprints, 5 training divergence.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::Value;

use duffin_core::client::{BackendSpec, DecodeConfig, HandleSpec, ModelHandle, StubSpec};
use duffin_core::codec::{self, Artifact};
use duffin_core::knowledge::{assemble_key, extract_knowledge_fingerprint, filter_questions, QuestionPool};
use duffin_core::sim::{
    build_trigger_corpus, paraphrase_key, run_separation_experiment, sample_pool, sample_triggers,
    FamilyWorld, SeparationExperimentConfig, SimulatedModelSpec, SimulatedRewriter, TriggerCorpusConfig,
};
use duffin_core::trigger::{
    extract_trigger_fingerprint, train_extractor, Extractor, TrainConfig, TrainingCorpus, TriggerSet,
};
use duffin_core::verify::{evaluate, verdict_report, FingerprintSet, LabelFile, Population, VerifyConfig};
use duffin_core::{Error, KnowledgeFingerprint, Level, Result, SecretKey, TriggerFingerprint};

#[derive(Debug, Parser, Serialize)]
#[command(name = "duffin", version, about = "Fingerprint language models and verify ownership")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// Maximum concurrent model requests.
    #[arg(long, global = true, default_value_t = 4)]
    pub max_parallel: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LevelArg {
    Trigger,
    Knowledge,
    Merged,
}

impl From<LevelArg> for Level {
    fn from(l: LevelArg) -> Level {
        match l {
            LevelArg::Trigger => Level::Trigger,
            LevelArg::Knowledge => Level::Knowledge,
            LevelArg::Merged => Level::Merged,
        }
    }
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case", tag = "command")]
pub enum Command {
    /// Filter a question pool with protected models and build a secret key.
    KeyBuild(KeyBuildArgs),
    /// Query a model with a key and write its fingerprints.
    Extract(ExtractArgs),
    /// Train a trigger extractor on a trajectory corpus.
    Train(TrainArgs),
    /// Compare suspect fingerprints with a protected model.
    Verify(VerifyArgs),
    /// Compute IP-ROC and Rank over a labelled fingerprint population.
    Evaluate(EvaluateArgs),
    /// Run a separation experiment on simulated model families.
    Simulate(SimulateArgs),
    /// Rewrite a key's question stems with a rewriter model.
    Attack(AttackArgs),
    /// Write a synthetic pool, triggers, corpus and model handles.
    SampleData(SampleDataArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct KeyBuildArgs {
    #[arg(long)]
    pub pool: PathBuf,
    #[arg(long)]
    pub triggers: PathBuf,
    /// Handle file of a protected model; repeat for several.
    #[arg(long = "model", required = true)]
    pub models: Vec<PathBuf>,
    /// Questions sampled per domain.
    #[arg(short = 'q', long, default_value_t = 20)]
    pub questions_per_domain: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct ExtractArgs {
    #[arg(long)]
    pub key: PathBuf,
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, value_enum, default_value_t = LevelArg::Knowledge)]
    pub level: LevelArg,
    #[arg(long)]
    pub extractor: Option<PathBuf>,
    /// Leave the mean-entropy field out of trigger trajectories.
    #[arg(long)]
    pub no_entropy: bool,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct TrainArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    /// Training configuration file; defaults apply when absent.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct VerifyArgs {
    /// Fingerprint files of the protected model.
    #[arg(long, required = true)]
    pub protected: Vec<PathBuf>,
    /// Fingerprint files of the suspect.
    #[arg(long, required = true)]
    pub suspect: Vec<PathBuf>,
    /// Fingerprint files of independent models, for the logit vectors.
    #[arg(long)]
    pub negative: Vec<PathBuf>,
    #[arg(long, value_enum, default_value_t = LevelArg::Merged)]
    pub level: LevelArg,
    #[arg(long, default_value_t = 1.0)]
    pub alpha: f64,
    #[arg(long, default_value_t = 1.0)]
    pub beta: f64,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub threshold: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub labels: PathBuf,
    /// Directory of fingerprint files.
    #[arg(long)]
    pub fingerprints: PathBuf,
    #[arg(long, value_enum, default_value_t = LevelArg::Knowledge)]
    pub level: LevelArg,
    #[arg(long, default_value_t = 1.0)]
    pub alpha: f64,
    #[arg(long, default_value_t = 1.0)]
    pub beta: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct SimulateArgs {
    /// Experiment configuration file; defaults apply when absent.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct AttackArgs {
    #[arg(long)]
    pub key: PathBuf,
    /// Handle file of the rewriter model.
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct SampleDataArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

/// Process exit code for an error.
pub fn exit_code(err: &Error) -> i32 {
    match err.root() {
        Error::Transport { .. } | Error::Timeout(_) | Error::AllFailed { .. } | Error::Protocol(_) => 3,
        Error::Incompatible(_) | Error::Alignment(_) => 4,
        Error::Divergence { .. } => 5,
        _ => 2,
    }
}

pub fn run(cli: &Cli) -> Result<()> {
    let run_config = serde_json::to_value(cli).expect("arguments serialize");
    let ctx = Ctx {
        run_config,
        max_parallel: cli.max_parallel.max(1),
    };
    match &cli.command {
        Command::KeyBuild(a) => key_build(&ctx, a),
        Command::Extract(a) => extract(&ctx, a),
        Command::Train(a) => train(&ctx, a),
        Command::Verify(a) => verify_cmd(&ctx, a),
        Command::Evaluate(a) => evaluate_cmd(&ctx, a),
        Command::Simulate(a) => simulate(&ctx, a),
        Command::Attack(a) => attack(&ctx, a),
        Command::SampleData(a) => sample_data(&ctx, a),
    }
}

struct Ctx {
    run_config: Value,
    max_parallel: usize,
}

impl Ctx {
    fn write<T: Artifact>(&self, path: &Path, value: &T) -> Result<()> {
        codec::write_file(path, value, Some(&self.run_config))?;
        println!("wrote {}", path.display());
        Ok(())
    }
}

fn handle(path: &Path, questions: &[duffin_core::KnowledgeQuestion]) -> Result<ModelHandle> {
    codec::read_file::<HandleSpec>(path)?
        .build(questions)
        .map_err(|e| e.context(path.display().to_string()))
}

fn key_build(ctx: &Ctx, a: &KeyBuildArgs) -> Result<()> {
    let pool: QuestionPool = codec::read_file(&a.pool)?;
    let triggers: TriggerSet = codec::read_file(&a.triggers)?;
    let questions: Vec<_> = pool.questions().cloned().collect();
    let models = a
        .models
        .iter()
        .map(|p| handle(p, &questions))
        .collect::<Result<Vec<_>>>()?;
    let filtered = filter_questions(&pool, &models, ctx.max_parallel)?;
    for (before, after) in pool.domains.iter().zip(&filtered.domains) {
        log::info!(
            "domain {}: {} of {} questions kept",
            after.domain,
            after.questions.len(),
            before.questions.len()
        );
    }
    let key = assemble_key(triggers.triggers, &filtered, a.questions_per_domain, a.seed)?;
    ctx.write(&a.out, &key)
}

/// Keeps model ids usable as file names.
fn file_stem(model_id: &str) -> String {
    model_id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || "-_.".contains(c) { c } else { '_' })
        .collect()
}

fn extract(ctx: &Ctx, a: &ExtractArgs) -> Result<()> {
    let level = Level::from(a.level);
    let key: SecretKey = codec::read_file(&a.key)?;
    let extractor = match (&a.extractor, level.uses_trigger()) {
        (Some(path), true) => Some(codec::read_file::<Extractor>(path)?),
        (None, true) => {
            return Err(Error::Input(format!(
                "--extractor is required at the {level} level"
            )))
        }
        (_, false) => None,
    };
    let model = handle(&a.model, &key.knowledge)?;
    let stem = file_stem(model.id());
    if let Some(extractor) = extractor {
        let fp = extract_trigger_fingerprint(&model, &key, &extractor.params, !a.no_entropy, ctx.max_parallel)?;
        ctx.write(&a.out.join(format!("{stem}.trigger.json")), &fp)?;
    }
    if level.uses_knowledge() {
        let fp = extract_knowledge_fingerprint(&model, &key, ctx.max_parallel)?;
        ctx.write(&a.out.join(format!("{stem}.knowledge.json")), &fp)?;
    }
    Ok(())
}

fn train(ctx: &Ctx, a: &TrainArgs) -> Result<()> {
    let corpus: TrainingCorpus = codec::read_file(&a.corpus)?;
    let mut config = match &a.config {
        Some(path) => codec::read_file::<TrainConfig>(path)?,
        None => TrainConfig::default(),
    };
    if let Some(e) = a.epochs {
        config.epochs = e;
    }
    if let Some(lr) = a.lr {
        config.peak_lr = lr;
    }
    if let Some(seed) = a.seed {
        config.seed = seed;
    }
    let trained = train_extractor(&corpus, &config)?;
    for (epoch, loss) in trained.loss_trace.iter().enumerate() {
        log::info!("epoch {epoch}: mean loss {loss:.6}");
    }
    if let (Some(first), Some(last)) = (trained.loss_trace.first(), trained.loss_trace.last()) {
        println!("loss {first:.6} -> {last:.6} over {} epochs", trained.loss_trace.len());
    }
    let extractor = trained.into_extractor(&corpus, &config)?;
    ctx.write(&a.out, &extractor)
}

/// Reads fingerprint files and groups them by model id.
fn load_sets(paths: &[PathBuf]) -> Result<Vec<FingerprintSet>> {
    let mut sets: BTreeMap<String, FingerprintSet> = BTreeMap::new();
    for path in paths {
        let bytes = std::fs::read(path).map_err(|e| Error::from(e).context(path.display().to_string()))?;
        let kind = codec::peek_kind(&bytes).map_err(|e| e.context(path.display().to_string()))?;
        let at = |e: Error| e.context(path.display().to_string());
        if kind == TriggerFingerprint::KIND {
            let fp: TriggerFingerprint = codec::deserialize(&bytes).map_err(at)?;
            let set = sets
                .entry(fp.model_id.clone())
                .or_insert_with(|| FingerprintSet::new(fp.model_id.clone()));
            if set.trigger.replace(fp).is_some() {
                return Err(Error::Input(format!("{}: second trigger fingerprint for {}", path.display(), set.model_id)));
            }
        } else if kind == KnowledgeFingerprint::KIND {
            let fp: KnowledgeFingerprint = codec::deserialize(&bytes).map_err(at)?;
            let set = sets
                .entry(fp.model_id.clone())
                .or_insert_with(|| FingerprintSet::new(fp.model_id.clone()));
            if set.knowledge.replace(fp).is_some() {
                return Err(Error::Input(format!("{}: second knowledge fingerprint for {}", path.display(), set.model_id)));
            }
        } else {
            return Err(Error::Kind {
                found: kind,
                expected: "trigger_fingerprint or knowledge_fingerprint".into(),
            }
            .context(path.display().to_string()));
        }
    }
    Ok(sets.into_values().collect())
}

fn single_set(paths: &[PathBuf], role: &str) -> Result<FingerprintSet> {
    let mut sets = load_sets(paths)?;
    if sets.len() != 1 {
        return Err(Error::Input(format!(
            "{role} files describe {} models, expected one",
            sets.len()
        )));
    }
    Ok(sets.remove(0))
}

fn verify_cmd(ctx: &Ctx, a: &VerifyArgs) -> Result<()> {
    let protected = single_set(&a.protected, "protected")?;
    let suspect = single_set(&a.suspect, "suspect")?;
    let negatives = load_sets(&a.negative)?;
    let config = VerifyConfig {
        alpha: a.alpha,
        beta: a.beta,
        threshold: a.threshold,
        level: a.level.into(),
    };
    let report = verdict_report(&suspect, &protected, &negatives, &config)?;
    let v = &report.verdict;
    println!(
        "{} vs {}: d_merged = {:.6}, threshold = {}, pirated = {}",
        v.provenance.suspect_model, v.provenance.protected_model, v.d_merged, v.threshold, v.is_pirated
    );
    ctx.write(&a.out, &report)
}

fn fingerprint_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| Error::from(e).context(dir.display().to_string()))? {
        let path = entry?.path();
        if path.extension().is_some_and(|e| e == "json") {
            let bytes = std::fs::read(&path)?;
            let kind = codec::peek_kind(&bytes).map_err(|e| e.context(path.display().to_string()))?;
            if kind == TriggerFingerprint::KIND || kind == KnowledgeFingerprint::KIND {
                files.push(path);
            }
        }
    }
    files.sort();
    Ok(files)
}

fn evaluate_cmd(ctx: &Ctx, a: &EvaluateArgs) -> Result<()> {
    let labels: LabelFile = codec::read_file(&a.labels)?;
    let sets = load_sets(&fingerprint_files(&a.fingerprints)?)?;
    let population = Population::from_labels(&labels, sets)?;
    let summary = evaluate(&population, a.level.into(), a.alpha, a.beta)?;
    for f in &summary.families {
        println!(
            "{} ({}): IP-ROC {:.4}, Rank-1 {:.2}",
            f.family, f.protected_model, f.ip_roc, f.rank1_fraction
        );
    }
    ctx.write(&a.out, &summary)
}

fn simulate(ctx: &Ctx, a: &SimulateArgs) -> Result<()> {
    let mut config = match &a.config {
        Some(path) => codec::read_file::<SeparationExperimentConfig>(path)?,
        None => SeparationExperimentConfig::default(),
    };
    if let Some(seed) = a.seed {
        config.seed = seed;
    }
    let report = run_separation_experiment(&config)?;
    for level in &report.levels {
        println!(
            "{}: mean IP-ROC {:.4}, Rank-1 {:.2}",
            level.level, level.mean_ip_roc, level.rank1_fraction
        );
    }
    ctx.write(&a.out, &report)
}

fn attack(ctx: &Ctx, a: &AttackArgs) -> Result<()> {
    let key: SecretKey = codec::read_file(&a.key)?;
    let rewriter = handle(&a.model, &key.knowledge)?;
    let outcome = paraphrase_key(&key, &rewriter, ctx.max_parallel)?;
    for w in &outcome.warnings {
        log::warn!("{w}");
    }
    ctx.write(&a.out, &outcome.key)
}

const SAMPLE_FAMILIES: usize = 4;
const SAMPLE_VARIANTS: [f64; 2] = [0.05, 0.12];

fn sample_data(ctx: &Ctx, a: &SampleDataArgs) -> Result<()> {
    let out = &a.out;
    ctx.write(&out.join("pool.json"), &sample_pool(30, a.seed))?;
    ctx.write(
        &out.join("triggers.json"),
        &TriggerSet {
            provenance: "synthetic sample triggers".into(),
            triggers: sample_triggers(),
        },
    )?;
    let corpus_config = TriggerCorpusConfig {
        seed: a.seed,
        ..TriggerCorpusConfig::default()
    };
    ctx.write(&out.join("trigger_corpus.json"), &build_trigger_corpus(&corpus_config)?)?;
    ctx.write(&out.join("train.json"), &TrainConfig::default())?;
    ctx.write(
        &out.join("experiment.json"),
        &SeparationExperimentConfig {
            seed: a.seed,
            ..SeparationExperimentConfig::default()
        },
    )?;

    let world = FamilyWorld::new(a.seed);
    let mut labels = LabelFile::default();
    for f in 0..SAMPLE_FAMILIES {
        let family = format!("fam{f}");
        let mut models = vec![(format!("{family}-base"), 0.0, 0)];
        for (v, eps) in SAMPLE_VARIANTS.iter().enumerate() {
            models.push((format!("{family}-v{v}"), *eps, world.variant_seed(f, v)));
        }
        labels.protected.insert(family.clone(), models[0].0.clone());
        for (id, epsilon, variant_seed) in models {
            labels.families.insert(id.clone(), family.clone());
            let spec = HandleSpec {
                id: id.clone(),
                backend: BackendSpec::Simulated(SimulatedModelSpec {
                    family_id: family.clone(),
                    style_seed: world.style_seed(f),
                    epsilon,
                    variant_seed,
                }),
                decode: DecodeConfig::default(),
            };
            ctx.write(&out.join("models").join(format!("{id}.json")), &spec)?;
        }
    }
    ctx.write(&out.join("labels.json"), &labels)?;
    ctx.write(
        &out.join("rewriter.json"),
        &HandleSpec {
            id: "simulated-rewriter".into(),
            backend: BackendSpec::SimulatedRewriter(SimulatedRewriter::default()),
            decode: DecodeConfig {
                top_logprobs: None,
                ..DecodeConfig::default()
            },
        },
    )?;
    ctx.write(
        &out.join("echo.json"),
        &HandleSpec {
            id: "echo".into(),
            backend: BackendSpec::Stub(StubSpec::Echo),
            decode: DecodeConfig::default(),
        },
    )
}
