//! End-to-end separation experiments over simulated families.
//!
//! Each family contributes a base model (the protected model) and
//! perturbed variants. Every base and variant is fingerprinted with one
//! key, and the population is evaluated per family: variants of the family
//! are positives, every model of every other family is a negative.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::family::{spawn_variant, FamilyWorld, SimulatedModel};
use super::paraphrase::{paraphrase_key, SimulatedRewriter};
use super::sample::{sample_pool, sample_triggers};
use super::SeedHash;
use crate::client::ModelHandle;
use crate::codec::Artifact;
use crate::error::{Error, Result};
use crate::knowledge::{assemble_key, extract_knowledge_fingerprint, filter_questions, PoolDomain, QuestionPool};
use crate::trigger::{
    extract_trigger_fingerprint, render_trajectory, train_extractor, EmbedderParams, ProtectedSet,
    TrainConfig, TrainingCorpus, TrajectoryRecord,
};
use crate::types::{KnowledgeQuestion, Level, PromptTrigger};
use crate::verify::{evaluate, EvaluationSummary, FingerprintSet, Member, Population};

fn world_for(seed: u64, purpose: &str) -> FamilyWorld {
    FamilyWorld::new(SeedHash::new(seed).str(purpose).value())
}

fn check_schedule(field: &str, schedule: &[f64]) -> Result<()> {
    if schedule.is_empty() {
        return Err(Error::validation(field, "must list at least one epsilon"));
    }
    if let Some(e) = schedule.iter().find(|e| !(0.0..=1.0).contains(*e)) {
        return Err(Error::Domain(format!("{field}: epsilon {e} outside [0, 1]")));
    }
    Ok(())
}

/// Simulated trajectories for training the trigger extractor. The families
/// come from a world disjoint from the one experiments evaluate on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TriggerCorpusConfig {
    pub families: usize,
    pub variants_per_family: usize,
    pub epsilon_schedule: Vec<f64>,
    pub triggers: usize,
    pub include_entropy: bool,
    pub seed: u64,
}

impl Default for TriggerCorpusConfig {
    fn default() -> Self {
        TriggerCorpusConfig {
            families: 6,
            variants_per_family: 4,
            epsilon_schedule: vec![0.3, 0.4, 0.5, 0.6],
            triggers: 20,
            include_entropy: true,
            seed: 0,
        }
    }
}

impl Artifact for TriggerCorpusConfig {
    const KIND: &'static str = "trigger_corpus_config";

    fn validate(&self) -> Result<()> {
        if self.families < 2 {
            return Err(Error::validation("families", "need at least 2"));
        }
        if self.variants_per_family == 0 {
            return Err(Error::validation("variants_per_family", "need at least 1"));
        }
        if self.triggers == 0 || self.triggers > sample_triggers().len() {
            return Err(Error::validation(
                "triggers",
                format!("must lie in 1..={}", sample_triggers().len()),
            ));
        }
        check_schedule("epsilon_schedule", &self.epsilon_schedule)
    }
}

fn model_id(family: usize, variant: Option<usize>) -> String {
    match variant {
        None => format!("fam{family}-base"),
        Some(v) => format!("fam{family}-v{v}"),
    }
}

struct SimModel {
    id: String,
    family: String,
    epsilon: f64,
    is_base: bool,
    model: SimulatedModel,
}

impl SimModel {
    fn handle(&self) -> ModelHandle {
        ModelHandle::new(self.id.clone(), Arc::new(self.model.clone()))
    }
}

fn population(
    world: FamilyWorld,
    families: usize,
    variants: usize,
    schedule: &[f64],
    questions: &[KnowledgeQuestion],
) -> Result<Vec<SimModel>> {
    let mut out = Vec::new();
    for f in 0..families {
        let profile = world.family(f, questions);
        out.push(SimModel {
            id: model_id(f, None),
            family: profile.family_id.clone(),
            epsilon: 0.0,
            is_base: true,
            model: SimulatedModel::base(&profile),
        });
        for v in 0..variants {
            let epsilon = schedule[v % schedule.len()];
            out.push(SimModel {
                id: model_id(f, Some(v)),
                family: profile.family_id.clone(),
                epsilon,
                is_base: false,
                model: spawn_variant(&profile, epsilon, world.variant_seed(f, v))?,
            });
        }
    }
    Ok(out)
}

/// Queries every simulated model of the training world with the first
/// `triggers` sample triggers. Each base is a protected model with its
/// variants as positives and the other families' bases as negatives.
pub fn build_trigger_corpus(config: &TriggerCorpusConfig) -> Result<TrainingCorpus> {
    Artifact::validate(config)?;
    let triggers: Vec<PromptTrigger> = sample_triggers().into_iter().take(config.triggers).collect();
    let models = population(
        world_for(config.seed, "train"),
        config.families,
        config.variants_per_family,
        &config.epsilon_schedule,
        &[],
    )?;
    let mut records = Vec::new();
    for m in &models {
        let handle = m.handle();
        for t in &triggers {
            let response = handle.complete(&t.text)?;
            records.push(TrajectoryRecord {
                model_id: m.id.clone(),
                trigger_id: t.id.clone(),
                trajectory: render_trajectory(&response, config.include_entropy)?,
            });
        }
    }
    let bases: Vec<&SimModel> = models.iter().filter(|m| m.is_base).collect();
    let protected = bases
        .iter()
        .map(|b| ProtectedSet {
            model_id: b.id.clone(),
            positives: models
                .iter()
                .filter(|m| !m.is_base && m.family == b.family)
                .map(|m| m.id.clone())
                .collect(),
            negatives: bases
                .iter()
                .filter(|o| o.family != b.family)
                .map(|o| o.id.clone())
                .collect(),
        })
        .collect();
    let corpus = TrainingCorpus { protected, records };
    corpus.validate()?;
    Ok(corpus)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode", deny_unknown_fields)]
pub enum ExtractorSetup {
    /// Seeded random projection, no training.
    Untrained {
        seed: u64,
        #[serde(default)]
        train: TrainConfig,
    },
    /// Trained on a simulated trigger corpus before the experiment.
    Trained {
        corpus: TriggerCorpusConfig,
        train: TrainConfig,
    },
}

impl Default for ExtractorSetup {
    fn default() -> Self {
        ExtractorSetup::Trained {
            corpus: TriggerCorpusConfig::default(),
            train: TrainConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeparationExperimentConfig {
    pub families: usize,
    pub variants_per_family: usize,
    /// Variant `v` of every family gets `epsilon_schedule[v % len]`.
    pub epsilon_schedule: Vec<f64>,
    pub triggers: usize,
    pub questions_per_domain: usize,
    pub domains: usize,
    /// Candidate questions per domain before filtering.
    pub pool_per_domain: usize,
    pub levels: Vec<Level>,
    pub alpha: f64,
    pub beta: f64,
    pub include_entropy: bool,
    pub extractor: ExtractorSetup,
    /// Rewrites the suspects' key before their knowledge fingerprints are
    /// taken; protected models keep the original key.
    #[serde(default)]
    pub paraphrase: Option<SimulatedRewriter>,
    pub seed: u64,
    pub max_parallel: usize,
}

impl Default for SeparationExperimentConfig {
    fn default() -> Self {
        SeparationExperimentConfig {
            families: 4,
            variants_per_family: 6,
            epsilon_schedule: vec![0.02, 0.04, 0.06, 0.09, 0.12, 0.15],
            triggers: 20,
            questions_per_domain: 20,
            domains: 7,
            pool_per_domain: 40,
            levels: vec![Level::Knowledge, Level::Trigger, Level::Merged],
            alpha: 1.0,
            beta: 1.0,
            include_entropy: true,
            extractor: ExtractorSetup::default(),
            paraphrase: None,
            seed: 0,
            max_parallel: 4,
        }
    }
}

impl Artifact for SeparationExperimentConfig {
    const KIND: &'static str = "experiment_config";

    fn validate(&self) -> Result<()> {
        if self.families < 2 {
            return Err(Error::validation("families", "need at least 2"));
        }
        if self.variants_per_family == 0 {
            return Err(Error::validation("variants_per_family", "need at least 1"));
        }
        check_schedule("epsilon_schedule", &self.epsilon_schedule)?;
        if self.levels.is_empty() {
            return Err(Error::validation("levels", "must list at least one level"));
        }
        if self.domains == 0 || self.domains > super::sample::SAMPLE_DOMAINS.len() {
            return Err(Error::validation(
                "domains",
                format!("must lie in 1..={}", super::sample::SAMPLE_DOMAINS.len()),
            ));
        }
        if self.questions_per_domain == 0 || self.pool_per_domain < self.questions_per_domain {
            return Err(Error::validation(
                "pool_per_domain",
                "must be at least questions_per_domain, which must be positive",
            ));
        }
        if self.triggers > sample_triggers().len() {
            return Err(Error::validation(
                "triggers",
                format!("at most {} available", sample_triggers().len()),
            ));
        }
        if self.levels.iter().any(|l| l.uses_trigger()) && self.triggers == 0 {
            return Err(Error::validation("triggers", "trigger levels need at least one trigger"));
        }
        if let Some(r) = &self.paraphrase {
            if !(0.0..=1.0).contains(&r.strength) {
                return Err(Error::Domain(format!("rewriter strength {} outside [0, 1]", r.strength)));
            }
        }
        if self.max_parallel == 0 {
            return Err(Error::validation("max_parallel", "must be positive"));
        }
        if let ExtractorSetup::Trained { corpus, .. } = &self.extractor {
            Artifact::validate(corpus)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VariantResult {
    pub model_id: String,
    pub family: String,
    pub epsilon: f64,
    pub similarity: f64,
    pub rank: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpsilonRow {
    pub epsilon: f64,
    pub variants: usize,
    pub mean_similarity: f64,
    pub mean_rank: f64,
    pub rank1_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LevelResult {
    pub level: Level,
    pub mean_ip_roc: f64,
    pub rank1_fraction: f64,
    pub ip_roc: BTreeMap<String, f64>,
    pub variants: Vec<VariantResult>,
    pub epsilon_table: Vec<EpsilonRow>,
    pub summary: EvaluationSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentReport {
    pub config: SeparationExperimentConfig,
    pub key_version: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedder_id: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub training_loss: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
    pub levels: Vec<LevelResult>,
}

impl Artifact for ExperimentReport {
    const KIND: &'static str = "experiment_report";

    fn validate(&self) -> Result<()> {
        Artifact::validate(&self.config)
    }
}

impl ExperimentReport {
    pub fn level(&self, level: Level) -> Option<&LevelResult> {
        self.levels.iter().find(|l| l.level == level)
    }
}

fn experiment_pool(config: &SeparationExperimentConfig) -> QuestionPool {
    let mut pool = sample_pool(config.pool_per_domain, config.seed);
    pool.domains.truncate(config.domains);
    pool
}

fn extractor_params(setup: &ExtractorSetup) -> Result<(EmbedderParams, Vec<f64>)> {
    match setup {
        ExtractorSetup::Untrained { seed, train } => Ok((
            EmbedderParams::random_init(train.featurizer.clone(), train.dim, train.tau, *seed)?,
            Vec::new(),
        )),
        ExtractorSetup::Trained { corpus, train } => {
            let corpus = build_trigger_corpus(corpus)?;
            let trained = train_extractor(&corpus, train)?;
            Ok((trained.params, trained.loss_trace))
        }
    }
}

fn level_result(level: Level, summary: EvaluationSummary, models: &[SimModel]) -> LevelResult {
    let epsilon_of: BTreeMap<&str, f64> = models.iter().map(|m| (m.id.as_str(), m.epsilon)).collect();
    let variants: Vec<VariantResult> = summary
        .families
        .iter()
        .flat_map(|f| f.suspects.iter())
        .filter_map(|s| {
            Some(VariantResult {
                model_id: s.model_id.clone(),
                family: s.family.clone(),
                epsilon: epsilon_of[s.model_id.as_str()],
                similarity: s.similarity,
                rank: s.rank?,
            })
        })
        .collect();
    let mut epsilons: Vec<f64> = variants.iter().map(|v| v.epsilon).collect();
    epsilons.sort_by(f64::total_cmp);
    epsilons.dedup();
    let epsilon_table = epsilons
        .into_iter()
        .map(|epsilon| {
            let rows: Vec<&VariantResult> = variants.iter().filter(|v| v.epsilon == epsilon).collect();
            let n = rows.len() as f64;
            EpsilonRow {
                epsilon,
                variants: rows.len(),
                mean_similarity: rows.iter().map(|v| v.similarity).sum::<f64>() / n,
                mean_rank: rows.iter().map(|v| v.rank as f64).sum::<f64>() / n,
                rank1_fraction: rows.iter().filter(|v| v.rank == 1).count() as f64 / n,
            }
        })
        .collect();
    LevelResult {
        level,
        mean_ip_roc: summary.mean_ip_roc,
        rank1_fraction: summary.rank1_fraction,
        ip_roc: summary.families.iter().map(|f| (f.family.clone(), f.ip_roc)).collect(),
        variants,
        epsilon_table,
        summary,
    }
}

pub fn run_separation_experiment(config: &SeparationExperimentConfig) -> Result<ExperimentReport> {
    Artifact::validate(config)?;
    let uses_trigger = config.levels.iter().any(|l| l.uses_trigger());
    let uses_knowledge = config.levels.iter().any(|l| l.uses_knowledge());
    let world = world_for(config.seed, "eval");

    let pool = experiment_pool(config);
    let questions: Vec<KnowledgeQuestion> = pool.questions().cloned().collect();
    let models = population(
        world,
        config.families,
        config.variants_per_family,
        &config.epsilon_schedule,
        &questions,
    )?;
    let bases: Vec<ModelHandle> = models.iter().filter(|m| m.is_base).map(SimModel::handle).collect();

    let triggers: Vec<PromptTrigger> = sample_triggers().into_iter().take(config.triggers).collect();
    let key = if uses_knowledge {
        let filtered = filter_questions(&pool, &bases, config.max_parallel)?;
        assemble_key(triggers, &filtered, config.questions_per_domain, config.seed)?
    } else {
        // trigger-only runs still need a well-formed key
        let stub = QuestionPool {
            provenance: pool.provenance.clone(),
            domains: pool
                .domains
                .iter()
                .map(|d| PoolDomain {
                    domain: d.domain.clone(),
                    questions: d.questions[..1].to_vec(),
                })
                .collect(),
        };
        assemble_key(triggers, &stub, 1, config.seed)?
    };

    let mut warnings = Vec::new();
    let suspect_key = match &config.paraphrase {
        Some(rewriter) if uses_knowledge => {
            let handle = ModelHandle::new("simulated-rewriter", Arc::new(rewriter.clone()));
            let outcome = paraphrase_key(&key, &handle, config.max_parallel)?;
            warnings.extend(outcome.warnings);
            outcome.key
        }
        _ => key.clone(),
    };

    let (params, training_loss) = if uses_trigger {
        let (p, loss) = extractor_params(&config.extractor)?;
        (Some(p), loss)
    } else {
        (None, Vec::new())
    };

    let mut members = Vec::with_capacity(models.len());
    let mut references = BTreeMap::new();
    for m in &models {
        let handle = m.handle();
        let mut set = FingerprintSet::new(m.id.clone());
        if let Some(params) = &params {
            set.trigger = Some(extract_trigger_fingerprint(
                &handle,
                &key,
                params,
                config.include_entropy,
                config.max_parallel,
            )?);
        }
        if uses_knowledge {
            set.knowledge = Some(extract_knowledge_fingerprint(&handle, &suspect_key, config.max_parallel)?);
            if m.is_base && config.paraphrase.is_some() {
                let mut reference = set.clone();
                reference.knowledge = Some(extract_knowledge_fingerprint(&handle, &key, config.max_parallel)?);
                references.insert(m.id.clone(), reference);
            }
        }
        members.push(Member {
            family: m.family.clone(),
            fingerprints: set,
        });
    }
    let population = Population {
        members,
        protected: models.iter().filter(|m| m.is_base).map(|m| m.id.clone()).collect(),
        references,
    };

    let levels = config
        .levels
        .iter()
        .map(|&level| {
            let summary = evaluate(&population, level, config.alpha, config.beta)?;
            Ok(level_result(level, summary, &models))
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(ExperimentReport {
        config: config.clone(),
        key_version: key.version.clone(),
        embedder_id: params.as_ref().map(EmbedderParams::embedder_id),
        training_loss,
        warnings,
        levels,
    })
}
