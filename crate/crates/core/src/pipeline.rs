//! Staged pipeline: ingest → stance → homophily → lda → graph → report.
//!
//! Every stage writes its artifacts under `<workspace>/<stage>/` together
//! with a `manifest.json` recording input hashes, the stage's slice of the
//! configuration, output hashes and timing. A stage whose inputs, config and
//! outputs all match its manifest is skipped as up to date.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use chrono::{DateTime, Utc};
use log::{info, warn};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{
    build_user_documents, filter_by_location, load_gazetteer, load_tweets, select_regular_users, write_tweets,
    IssueKnowledgeBase, UserDocument,
};
use crate::error::{Error, Result};
use crate::homophily::{
    extract_two_way_interactions, homophily_test, population_proportions, write_results_csv, HomophilyResult,
};
use crate::stance::{build_stance_vectors, find_seed_users, profile_users, read_profiles_csv, write_profiles_csv};
use crate::stats::{mann_whitney_u, mean, median, spearman_rho, TestResult};
use crate::textproc::{build_vocabulary, keyword_indices, Vocabulary};
use crate::topicgraph::{
    build_topic_graph, information_centrality, partition_intermediary, topic_user_stats, write_graphml, TopicGraph,
    TopicMetrics,
};
use crate::topicmodel::{fit_corpus, has_in_vocab_tokens, LdaConfig, LdaCorpus, TopicModel};

// ---------------------------------------------------------------------------
// configuration

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputConfig {
    pub tweets: PathBuf,
    pub knowledge_base: PathBuf,
    #[serde(default)]
    pub gazetteer: Option<PathBuf>,
    pub issue: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IngestConfig {
    pub min_doc_freq: usize,
    /// Users following or followed by this many accounts or more are dropped.
    pub max_degree: u64,
    pub include_replies: bool,
}

impl Default for IngestConfig {
    fn default() -> Self {
        IngestConfig {
            min_doc_freq: 5,
            max_degree: 2000,
            include_replies: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StanceConfig {
    /// Stance whose similarity counts positively in the tendency; defaults
    /// to the issue's first stance.
    pub choice: Option<String>,
    /// Defaults to the issue's second stance.
    pub life: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LdaSection {
    pub topics: usize,
    /// Defaults to 50 / topics.
    pub alpha: Option<f64>,
    pub beta: f64,
    pub iterations: usize,
    /// Defaults to four fifths of `iterations`.
    pub burn_in: Option<usize>,
    pub seed: u64,
}

impl Default for LdaSection {
    fn default() -> Self {
        LdaSection {
            topics: 200,
            alpha: None,
            beta: 0.01,
            iterations: 1000,
            burn_in: None,
            seed: 0,
        }
    }
}

impl LdaSection {
    pub fn to_lda_config(&self) -> LdaConfig {
        LdaConfig {
            k: self.topics,
            alpha: self.alpha.unwrap_or(50.0 / self.topics.max(1) as f64),
            beta: self.beta,
            iterations: self.iterations,
            burn_in: self.burn_in.unwrap_or(self.iterations * 4 / 5),
            seed: self.seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GraphConfig {
    pub epsilon: f64,
}

impl Default for GraphConfig {
    fn default() -> Self {
        GraphConfig { epsilon: 0.05 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub input: InputConfig,
    #[serde(default)]
    pub ingest: IngestConfig,
    #[serde(default)]
    pub stance: StanceConfig,
    #[serde(default)]
    pub lda: LdaSection,
    #[serde(default)]
    pub graph: GraphConfig,
}

/// Command-line overrides; `None` keeps the file value.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub epsilon: Option<f64>,
    pub topics: Option<usize>,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub iterations: Option<usize>,
    pub burn_in: Option<usize>,
    pub seed: Option<u64>,
    pub min_doc_freq: Option<usize>,
    pub max_degree: Option<u64>,
}

impl PipelineConfig {
    /// Parses TOML; relative input paths resolve against `base_dir`.
    pub fn from_toml(text: &str, base_dir: &Path) -> Result<Self> {
        let mut cfg: PipelineConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base_dir.join(&*p);
            }
        };
        resolve(&mut cfg.input.tweets);
        resolve(&mut cfg.input.knowledge_base);
        if let Some(g) = cfg.input.gazetteer.as_mut() {
            resolve(g);
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_toml(&text, base)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("pipeline config serializes")
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(v) = o.epsilon {
            self.graph.epsilon = v;
        }
        if let Some(v) = o.topics {
            self.lda.topics = v;
        }
        if let Some(v) = o.alpha {
            self.lda.alpha = Some(v);
        }
        if let Some(v) = o.beta {
            self.lda.beta = v;
        }
        if let Some(v) = o.iterations {
            self.lda.iterations = v;
        }
        if let Some(v) = o.burn_in {
            self.lda.burn_in = Some(v);
        }
        if let Some(v) = o.seed {
            self.lda.seed = v;
        }
        if let Some(v) = o.min_doc_freq {
            self.ingest.min_doc_freq = v;
        }
        if let Some(v) = o.max_degree {
            self.ingest.max_degree = v;
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.lda
            .to_lda_config()
            .validate()
            .map_err(|e| Error::Config(e.to_string()))?;
        let eps = self.graph.epsilon;
        if !(eps > 0.0 && eps < 1.0) {
            return Err(Error::Config(format!("epsilon must lie in (0, 1), got {eps}")));
        }
        if self.ingest.min_doc_freq == 0 {
            return Err(Error::Config("min_doc_freq must be at least 1".into()));
        }
        if self.input.issue.trim().is_empty() {
            return Err(Error::Config("input.issue is empty".into()));
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// stages and manifests

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Stage {
    Ingest,
    Stance,
    Homophily,
    Lda,
    Graph,
    Report,
}

impl Stage {
    pub const ALL: [Stage; 6] = [
        Stage::Ingest,
        Stage::Stance,
        Stage::Homophily,
        Stage::Lda,
        Stage::Graph,
        Stage::Report,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Stance => "stance",
            Stage::Homophily => "homophily",
            Stage::Lda => "lda",
            Stage::Graph => "graph",
            Stage::Report => "report",
        }
    }

    pub fn dependencies(self) -> &'static [Stage] {
        match self {
            Stage::Ingest => &[],
            Stage::Stance => &[Stage::Ingest],
            Stage::Homophily => &[Stage::Stance, Stage::Ingest],
            Stage::Lda => &[Stage::Ingest],
            Stage::Graph => &[Stage::Lda, Stage::Stance, Stage::Ingest],
            Stage::Report => &[Stage::Graph, Stage::Homophily, Stage::Stance],
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Stage::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown stage {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub stage: String,
    pub tool_version: String,
    pub config: serde_json::Value,
    /// Input path → SHA-256. Workspace artifacts use workspace-relative paths.
    pub inputs: BTreeMap<String, String>,
    /// Workspace-relative output path → SHA-256.
    pub outputs: BTreeMap<String, String>,
    pub started_at: DateTime<Utc>,
    pub elapsed_ms: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StageOutcome {
    Ran { elapsed_secs: f64 },
    UpToDate,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let mut file = BufReader::new(File::open(path).map_err(|e| Error::io(path, e))?);
    let mut hasher = Sha256::new();
    loop {
        let buf = file.fill_buf().map_err(|e| Error::io(path, e))?;
        if buf.is_empty() {
            break;
        }
        hasher.update(buf);
        let n = buf.len();
        file.consume(n);
    }
    Ok(hex::encode(hasher.finalize()))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("artifact serializes");
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?))
}

pub struct Pipeline {
    config: PipelineConfig,
    workspace: PathBuf,
}

/// Everything the graph stage computes, as persisted in `graph/metrics.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphArtifacts {
    pub stances: Vec<String>,
    pub median_centrality: f64,
    pub max_centrality: f64,
    pub metrics: Vec<TopicMetrics>,
    /// Related users per stance, aligned with `metrics`.
    pub stance_counts: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupComparison {
    pub intermediary_mean: Option<f64>,
    pub intermediary_median: Option<f64>,
    pub other_mean: Option<f64>,
    pub other_median: Option<f64>,
    /// Mann–Whitney of intermediary against non-intermediary values.
    pub test: Option<TestResult>,
}

impl GroupComparison {
    fn new(intermediary: &[f64], other: &[f64]) -> Self {
        GroupComparison {
            intermediary_mean: mean(intermediary),
            intermediary_median: median(intermediary),
            other_mean: mean(other),
            other_median: median(other),
            test: mann_whitney_u(intermediary, other).ok(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportSummary {
    pub labeled_users: BTreeMap<String, usize>,
    pub homophily: Vec<HomophilyResult>,
    pub epsilon: f64,
    pub topics_retained: usize,
    pub topics_junk: usize,
    pub median_centrality: f64,
    pub intermediary_topics: Vec<usize>,
    pub diversity: GroupComparison,
    pub keyword_prob: GroupComparison,
    /// Spearman correlation of users_fraction with centrality.
    pub users_fraction_vs_centrality: Option<TestResult>,
}

impl Pipeline {
    pub fn new(config: PipelineConfig, workspace: impl Into<PathBuf>) -> Result<Self> {
        config.validate()?;
        Ok(Pipeline {
            config,
            workspace: workspace.into(),
        })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn workspace(&self) -> &Path {
        &self.workspace
    }

    fn path(&self, rel: &str) -> PathBuf {
        self.workspace.join(rel)
    }

    fn manifest_path(&self, stage: Stage) -> PathBuf {
        self.workspace.join(stage.name()).join("manifest.json")
    }

    pub fn manifest(&self, stage: Stage) -> Option<Manifest> {
        read_json(&self.manifest_path(stage)).ok()
    }

    fn stage_config(&self, stage: Stage) -> serde_json::Value {
        let c = &self.config;
        let v = match stage {
            Stage::Ingest => serde_json::json!({ "issue": c.input.issue, "ingest": c.ingest }),
            Stage::Stance => serde_json::json!({ "issue": c.input.issue, "stance": c.stance }),
            Stage::Homophily => serde_json::json!({}),
            Stage::Lda => serde_json::to_value(c.lda.to_lda_config()).expect("serializable"),
            Stage::Graph | Stage::Report => serde_json::json!({ "issue": c.input.issue, "graph": c.graph }),
        };
        v
    }

    fn stage_inputs(&self, stage: Stage) -> Result<BTreeMap<String, String>> {
        let mut inputs = BTreeMap::new();
        if stage == Stage::Ingest {
            let c = &self.config.input;
            for p in [Some(&c.tweets), Some(&c.knowledge_base), c.gazetteer.as_ref()]
                .into_iter()
                .flatten()
            {
                inputs.insert(p.display().to_string(), sha256_file(p)?);
            }
        }
        for &dep in stage.dependencies() {
            let manifest = self.manifest(dep).ok_or_else(|| Error::MissingStage {
                stage: stage.name().into(),
                requires: dep.name().into(),
            })?;
            for rel in manifest.outputs.keys() {
                let p = self.path(rel);
                if !p.is_file() {
                    return Err(Error::MissingStage {
                        stage: stage.name().into(),
                        requires: dep.name().into(),
                    });
                }
                inputs.insert(rel.clone(), sha256_file(&p)?);
            }
        }
        Ok(inputs)
    }

    fn is_up_to_date(&self, stage: Stage, inputs: &BTreeMap<String, String>, config: &serde_json::Value) -> bool {
        let Some(m) = self.manifest(stage) else {
            return false;
        };
        m.tool_version == env!("CARGO_PKG_VERSION")
            && &m.inputs == inputs
            && &m.config == config
            && m.outputs.iter().all(|(rel, hash)| {
                let p = self.path(rel);
                p.is_file() && sha256_file(&p).map(|h| &h == hash).unwrap_or(false)
            })
    }

    /// Runs one stage unless its manifest shows it is up to date.
    pub fn run(&self, stage: Stage) -> Result<StageOutcome> {
        let inputs = self.stage_inputs(stage)?;
        let config = self.stage_config(stage);
        if self.is_up_to_date(stage, &inputs, &config) {
            info!("{stage}: up to date");
            return Ok(StageOutcome::UpToDate);
        }
        let dir = self.workspace.join(stage.name());
        // drop the manifest first so an interrupted run never looks complete
        let _ = fs::remove_file(self.manifest_path(stage));
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let started_at = Utc::now();
        let clock = Instant::now();
        let outputs = match stage {
            Stage::Ingest => self.run_ingest()?,
            Stage::Stance => self.run_stance()?,
            Stage::Homophily => self.run_homophily()?,
            Stage::Lda => self.run_lda()?,
            Stage::Graph => self.run_graph()?,
            Stage::Report => self.run_report()?,
        };
        let elapsed = clock.elapsed();
        let mut hashes = BTreeMap::new();
        for rel in outputs {
            let h = sha256_file(&self.path(&rel))?;
            hashes.insert(rel, h);
        }
        let manifest = Manifest {
            stage: stage.name().into(),
            tool_version: env!("CARGO_PKG_VERSION").into(),
            config,
            inputs,
            outputs: hashes,
            started_at,
            elapsed_ms: elapsed.as_millis() as u64,
        };
        write_json(&self.manifest_path(stage), &manifest)?;
        info!("{stage}: done in {:.2}s", elapsed.as_secs_f64());
        Ok(StageOutcome::Ran {
            elapsed_secs: elapsed.as_secs_f64(),
        })
    }

    /// Runs every stage in order.
    pub fn run_all(&self) -> Result<Vec<(Stage, StageOutcome)>> {
        Stage::ALL.iter().map(|&s| self.run(s).map(|o| (s, o))).collect()
    }

    // -- artifact readers ---------------------------------------------------

    pub fn load_documents(&self) -> Result<Vec<UserDocument>> {
        let path = self.path("ingest/documents.jsonl");
        let file = BufReader::new(File::open(&path).map_err(|e| Error::io(&path, e))?);
        let mut docs = Vec::new();
        for (i, line) in file.lines().enumerate() {
            let line = line.map_err(|e| Error::io(&path, e))?;
            docs.push(serde_json::from_str(&line).map_err(|e| Error::Parse {
                path: path.clone(),
                message: format!("line {}: {e}", i + 1),
            })?);
        }
        Ok(docs)
    }

    pub fn load_vocabulary(&self) -> Result<Vocabulary> {
        let path = self.path("ingest/vocabulary.txt");
        Vocabulary::read_from(BufReader::new(File::open(&path).map_err(|e| Error::io(&path, e))?))
    }

    pub fn load_knowledge_base(&self) -> Result<IssueKnowledgeBase> {
        IssueKnowledgeBase::load(&self.path("ingest/kb.toml"))
    }

    /// Stance names in profile-column order and user → label.
    pub fn load_labels(&self) -> Result<(Vec<String>, BTreeMap<String, String>)> {
        let path = self.path("stance/profiles.csv");
        let (names, profiles) = read_profiles_csv(File::open(&path).map_err(|e| Error::io(&path, e))?)?;
        Ok((names, profiles.into_iter().map(|p| (p.user_id, p.label)).collect()))
    }

    pub fn load_model(&self) -> Result<TopicModel> {
        let path = self.path("lda/model.txt");
        TopicModel::read_from(BufReader::new(File::open(&path).map_err(|e| Error::io(&path, e))?))
    }

    pub fn load_topic_graph(&self) -> Result<TopicGraph> {
        read_json(&self.path("graph/topic_graph.json"))
    }

    pub fn load_graph_artifacts(&self) -> Result<GraphArtifacts> {
        read_json(&self.path("graph/metrics.json"))
    }

    pub fn load_homophily(&self) -> Result<Vec<HomophilyResult>> {
        read_json(&self.path("homophily/results.json"))
    }

    // -- stages -------------------------------------------------------------

    fn run_ingest(&self) -> Result<Vec<String>> {
        let c = &self.config;
        let kb = IssueKnowledgeBase::load(&c.input.knowledge_base)?;
        kb.issue(&c.input.issue)?;
        let loaded = load_tweets(&c.input.tweets)?;
        let total = loaded.tweets.len();
        let tweets = match &c.input.gazetteer {
            Some(g) => filter_by_location(&loaded.tweets, &load_gazetteer(g)?),
            None => loaded.tweets,
        };
        let docs = build_user_documents(&tweets, &kb, c.ingest.include_replies);
        let regular = select_regular_users(&docs, &tweets, c.ingest.max_degree);
        let all_users = docs.len();
        let docs: Vec<UserDocument> = docs.into_iter().filter(|d| regular.kept.contains(&d.user_id)).collect();
        let vocab = build_vocabulary(&docs, c.ingest.min_doc_freq)?;

        let mut out = create(&self.path("ingest/tweets.jsonl"))?;
        write_tweets(&mut out, &tweets).map_err(|e| Error::io("ingest/tweets.jsonl", e))?;
        out.flush().map_err(|e| Error::io("ingest/tweets.jsonl", e))?;
        let mut out = create(&self.path("ingest/documents.jsonl"))?;
        for d in &docs {
            let line = serde_json::to_string(d).expect("document serializes");
            writeln!(out, "{line}").map_err(|e| Error::io("ingest/documents.jsonl", e))?;
        }
        out.flush().map_err(|e| Error::io("ingest/documents.jsonl", e))?;
        let mut out = create(&self.path("ingest/vocabulary.txt"))?;
        vocab.write_to(&mut out).map_err(|e| Error::io("ingest/vocabulary.txt", e))?;
        out.flush().map_err(|e| Error::io("ingest/vocabulary.txt", e))?;
        let kb_path = self.path("ingest/kb.toml");
        fs::write(&kb_path, kb.to_toml()).map_err(|e| Error::io(&kb_path, e))?;
        write_json(
            &self.path("ingest/summary.json"),
            &serde_json::json!({
                "tweets_loaded": total,
                "lines_skipped": loaded.skipped,
                "duplicates": loaded.duplicates,
                "tweets_after_location_filter": tweets.len(),
                "users": all_users,
                "regular_users": docs.len(),
                "users_over_degree_threshold": regular.over_threshold,
                "users_missing_counts": regular.missing_counts,
                "vocabulary_size": vocab.len(),
            }),
        )?;
        info!(
            "ingest: {} tweets, {} regular users of {all_users}, vocabulary {}",
            tweets.len(),
            docs.len(),
            vocab.len()
        );
        Ok(vec![
            "ingest/tweets.jsonl".into(),
            "ingest/documents.jsonl".into(),
            "ingest/vocabulary.txt".into(),
            "ingest/kb.toml".into(),
            "ingest/summary.json".into(),
        ])
    }

    fn stance_pair(&self, kb: &IssueKnowledgeBase) -> Result<(Vec<String>, String, String)> {
        let issue = kb.issue(&self.config.input.issue)?;
        let names: Vec<String> = issue.stance_names().iter().map(|s| s.to_string()).collect();
        let choice = self.config.stance.choice.clone().unwrap_or_else(|| names[0].clone());
        let life = self.config.stance.life.clone().unwrap_or_else(|| names[1].clone());
        for s in [&choice, &life] {
            if !names.contains(s) {
                return Err(Error::Config(format!("stance {s:?} is not defined for the issue")));
            }
        }
        if choice == life {
            return Err(Error::Config("choice and life stances must differ".into()));
        }
        Ok((names, choice, life))
    }

    fn run_stance(&self) -> Result<Vec<String>> {
        let kb = self.load_knowledge_base()?;
        let docs = self.load_documents()?;
        let vocab = self.load_vocabulary()?;
        let (names, choice, life) = self.stance_pair(&kb)?;
        let order: Vec<&str> = names.iter().map(String::as_str).collect();
        let seeds = find_seed_users(&docs, &kb, &self.config.input.issue)?;
        let vectors = build_stance_vectors(&docs, &seeds, &order, &vocab)?;
        // users with nothing in the vocabulary have no stance signal
        let usable: Vec<UserDocument> = docs.into_iter().filter(|d| has_in_vocab_tokens(d, &vocab)).collect();
        let profiles = profile_users(&usable, &vocab, &vectors, &choice, &life)?;
        let mut out = create(&self.path("stance/profiles.csv"))?;
        write_profiles_csv(&mut out, &order, &profiles)?;
        out.flush().map_err(|e| Error::io("stance/profiles.csv", e))?;
        write_json(&self.path("stance/stance_vectors.json"), &vectors)?;
        for name in &names {
            let n = profiles.iter().filter(|p| &p.label == name).count();
            info!("stance: {n} users labeled {name}");
        }
        Ok(vec!["stance/profiles.csv".into(), "stance/stance_vectors.json".into()])
    }

    fn run_homophily(&self) -> Result<Vec<String>> {
        let (names, labels) = self.load_labels()?;
        let tweets = load_tweets(&self.path("ingest/tweets.jsonl"))?.tweets;
        let graph = extract_two_way_interactions(&tweets, &labels);
        let order: Vec<&str> = names.iter().map(String::as_str).collect();
        let population = population_proportions(&labels, &order);
        let results = if graph.is_empty() {
            warn!("homophily: no two-way interactions between labeled users");
            Vec::new()
        } else {
            homophily_test(&graph, &population)?
        };
        let mut out = create(&self.path("homophily/homophily.csv"))?;
        write_results_csv(&mut out, &results)?;
        out.flush().map_err(|e| Error::io("homophily/homophily.csv", e))?;
        write_json(&self.path("homophily/results.json"), &results)?;
        let mut out = create(&self.path("homophily/interactions.graphml"))?;
        graph
            .write_graphml(&mut out)
            .and_then(|_| out.flush())
            .map_err(|e| Error::io("homophily/interactions.graphml", e))?;
        info!(
            "homophily: {} two-way edges ({} dropped for unlabeled endpoints)",
            graph.edge_count(),
            graph.unlabeled_dropped
        );
        Ok(vec![
            "homophily/homophily.csv".into(),
            "homophily/results.json".into(),
            "homophily/interactions.graphml".into(),
        ])
    }

    fn run_lda(&self) -> Result<Vec<String>> {
        let docs = self.load_documents()?;
        let vocab = self.load_vocabulary()?;
        let usable: Vec<UserDocument> = docs.into_iter().filter(|d| has_in_vocab_tokens(d, &vocab)).collect();
        let corpus = LdaCorpus::from_documents(&usable, &vocab)?;
        let config = self.config.lda.to_lda_config();
        info!(
            "lda: {} documents, {} tokens, k = {}, {} sweeps",
            usable.len(),
            corpus.num_tokens(),
            config.k,
            config.iterations
        );
        let model = fit_corpus(&corpus, &config, |sweep, _| {
            if sweep % 100 == 0 {
                log::debug!("lda: sweep {sweep}");
            }
        })?;
        let mut out = create(&self.path("lda/model.txt"))?;
        model
            .write_to(&mut out)
            .and_then(|_| out.flush())
            .map_err(|e| Error::io("lda/model.txt", e))?;
        let mut out = create(&self.path("lda/top_words.csv"))?;
        let io = |e| Error::io("lda/top_words.csv", e);
        writeln!(out, "topic,rank,word,probability").map_err(io)?;
        for t in 0..model.num_topics() {
            for (rank, w) in model.top_words(t, 10).into_iter().enumerate() {
                writeln!(out, "{t},{},{},{}", rank + 1, vocab.token(w), model.phi[t][w]).map_err(io)?;
            }
        }
        out.flush().map_err(io)?;
        let mut out = create(&self.path("lda/loglik.csv"))?;
        let io = |e| Error::io("lda/loglik.csv", e);
        writeln!(out, "sweep,log_likelihood").map_err(io)?;
        for (i, ll) in model.log_likelihood.iter().enumerate() {
            writeln!(out, "{},{ll}", i + 1).map_err(io)?;
        }
        out.flush().map_err(io)?;
        Ok(vec!["lda/model.txt".into(), "lda/top_words.csv".into(), "lda/loglik.csv".into()])
    }

    fn run_graph(&self) -> Result<Vec<String>> {
        let model = self.load_model()?;
        let vocab = self.load_vocabulary()?;
        let kb = self.load_knowledge_base()?;
        let (names, labels) = self.load_labels()?;
        let eps = self.config.graph.epsilon;
        let graph = build_topic_graph(&model, eps)?;
        let scores = information_centrality(&graph)?;
        let report = partition_intermediary(&scores)?;
        let order: Vec<&str> = names.iter().map(String::as_str).collect();
        let user_stats = topic_user_stats(&graph, &model, eps, &labels, &order)?;
        let issue_terms = kb.issue(&self.config.input.issue)?.issue_terms();
        let keywords = keyword_indices(&vocab, issue_terms.iter().map(String::as_str));
        if keywords.is_empty() {
            warn!("graph: no issue keyword survived the vocabulary filter; P(A|t) is 0 everywhere");
        }
        let metrics: Vec<TopicMetrics> = report
            .nodes
            .iter()
            .zip(&user_stats)
            .map(|(n, s)| {
                debug_assert_eq!(n.topic, s.topic);
                TopicMetrics {
                    topic: n.topic,
                    centrality: n.centrality,
                    component: n.component,
                    users_count: s.users_count,
                    users_fraction: s.users_fraction,
                    diversity: s.diversity,
                    keyword_prob: model.keyword_topic_prob(&keywords, n.topic),
                    intermediary: n.intermediary,
                }
            })
            .collect();
        let artifacts = GraphArtifacts {
            stances: names.clone(),
            median_centrality: report.median,
            max_centrality: report.max,
            metrics,
            stance_counts: user_stats.iter().map(|s| s.stance_counts.clone()).collect(),
        };
        write_json(&self.path("graph/topic_graph.json"), &graph)?;
        write_json(&self.path("graph/metrics.json"), &artifacts)?;
        let mut out = create(&self.path("graph/topic_graph.graphml"))?;
        write_graphml(&mut out, &graph, &artifacts.metrics)
            .and_then(|_| out.flush())
            .map_err(|e| Error::io("graph/topic_graph.graphml", e))?;
        info!(
            "graph: {} topics retained ({} junk), {} edges, {} intermediary",
            graph.nodes.len(),
            graph.junk.len(),
            graph.edges.len(),
            report.intermediary_topics().len()
        );
        Ok(vec![
            "graph/topic_graph.json".into(),
            "graph/metrics.json".into(),
            "graph/topic_graph.graphml".into(),
        ])
    }

    /// Recomputes the report statistics from the stage artifacts.
    pub fn report_summary(&self) -> Result<ReportSummary> {
        let graph = self.load_topic_graph()?;
        let art = self.load_graph_artifacts()?;
        let (names, labels) = self.load_labels()?;
        let homophily = self.load_homophily()?;
        let split = |f: fn(&TopicMetrics) -> f64| -> (Vec<f64>, Vec<f64>) {
            let a = art.metrics.iter().filter(|m| m.intermediary).map(f).collect();
            let b = art.metrics.iter().filter(|m| !m.intermediary).map(f).collect();
            (a, b)
        };
        let (div_i, div_o) = split(|m| m.diversity);
        let (kw_i, kw_o) = split(|m| m.keyword_prob);
        let fractions: Vec<f64> = art.metrics.iter().map(|m| m.users_fraction).collect();
        let centrality: Vec<f64> = art.metrics.iter().map(|m| m.centrality).collect();
        Ok(ReportSummary {
            labeled_users: names
                .iter()
                .map(|n| (n.clone(), labels.values().filter(|l| *l == n).count()))
                .collect(),
            homophily,
            epsilon: graph.epsilon,
            topics_retained: graph.nodes.len(),
            topics_junk: graph.junk.len(),
            median_centrality: art.median_centrality,
            intermediary_topics: art.metrics.iter().filter(|m| m.intermediary).map(|m| m.topic).collect(),
            diversity: GroupComparison::new(&div_i, &div_o),
            keyword_prob: GroupComparison::new(&kw_i, &kw_o),
            users_fraction_vs_centrality: spearman_rho(&fractions, &centrality).ok(),
        })
    }

    fn run_report(&self) -> Result<Vec<String>> {
        let art = self.load_graph_artifacts()?;
        let summary = self.report_summary()?;

        let path = self.path("report/topics.csv");
        let mut w = csv::Writer::from_writer(create(&path)?);
        let err = |e: csv::Error| Error::InvalidInput(format!("csv: {e}"));
        let mut header: Vec<String> = [
            "topic",
            "centrality",
            "component",
            "users_count",
            "users_fraction",
            "diversity",
            "keyword_prob",
            "intermediary",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        header.extend(art.stances.iter().map(|s| format!("users_{s}")));
        w.write_record(&header).map_err(err)?;
        for (m, counts) in art.metrics.iter().zip(&art.stance_counts) {
            let mut row = vec![
                m.topic.to_string(),
                m.centrality.to_string(),
                m.component.to_string(),
                m.users_count.to_string(),
                m.users_fraction.to_string(),
                m.diversity.to_string(),
                m.keyword_prob.to_string(),
                m.intermediary.to_string(),
            ];
            row.extend(counts.iter().map(|c| c.to_string()));
            w.write_record(&row).map_err(err)?;
        }
        w.flush().map_err(|e| Error::io(&path, e))?;

        for (from, to) in [
            ("stance/profiles.csv", "report/users.csv"),
            ("homophily/homophily.csv", "report/homophily.csv"),
            ("graph/topic_graph.graphml", "report/topic_graph.graphml"),
            ("homophily/interactions.graphml", "report/interactions.graphml"),
        ] {
            fs::copy(self.path(from), self.path(to)).map_err(|e| Error::io(self.path(to), e))?;
        }

        let path = self.path("report/ccdf_keyword_prob.csv");
        let mut out = create(&path)?;
        let io = |e| Error::io("report/ccdf_keyword_prob.csv", e);
        writeln!(out, "group,keyword_prob,ccdf").map_err(io)?;
        for (group, flag) in [("intermediary", true), ("non_intermediary", false)] {
            let values: Vec<f64> = art
                .metrics
                .iter()
                .filter(|m| m.intermediary == flag)
                .map(|m| m.keyword_prob)
                .collect();
            for (v, p) in ccdf(&values) {
                writeln!(out, "{group},{v},{p}").map_err(io)?;
            }
        }
        out.flush().map_err(io)?;

        let path = self.path("report/summary.txt");
        fs::write(&path, render_summary(&summary)).map_err(|e| Error::io(&path, e))?;
        write_json(&self.path("report/summary.json"), &summary)?;
        Ok(vec![
            "report/topics.csv".into(),
            "report/users.csv".into(),
            "report/homophily.csv".into(),
            "report/topic_graph.graphml".into(),
            "report/interactions.graphml".into(),
            "report/ccdf_keyword_prob.csv".into(),
            "report/summary.txt".into(),
            "report/summary.json".into(),
        ])
    }
}

/// Empirical complementary CDF: each distinct value with the fraction of
/// values greater than or equal to it.
pub fn ccdf(values: &[f64]) -> Vec<(f64, f64)> {
    let mut v: Vec<f64> = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len() as f64;
    let mut out = Vec::new();
    let mut i = 0;
    while i < v.len() {
        out.push((v[i], (v.len() - i) as f64 / n));
        let x = v[i];
        while i < v.len() && v[i] == x {
            i += 1;
        }
    }
    out
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_string(), |x| format!("{x:.6}"))
}

fn render_test(t: &Option<TestResult>) -> String {
    match t {
        None => "not computable (a group is empty or too small)".into(),
        Some(t) => {
            let z = t.z.map_or_else(|| "n/a".into(), |z| format!("{z:.4}"));
            format!(
                "U = {:.1}, z = {z}, p = {:.6}{}{}",
                t.statistic,
                t.p_value,
                if t.exact { " (exact)" } else { "" },
                if t.degenerate { " (degenerate)" } else { "" }
            )
        }
    }
}

pub fn render_summary(s: &ReportSummary) -> String {
    let mut o = String::new();
    let mut line = |l: String| {
        o.push_str(&l);
        o.push('\n');
    };
    line("# users".into());
    for (stance, n) in &s.labeled_users {
        line(format!("labeled {stance}: {n}"));
    }
    line(String::new());
    line("# homophily (two-way interactions)".into());
    if s.homophily.is_empty() {
        line("no two-way interactions between labeled users".into());
    }
    for h in &s.homophily {
        line(format!(
            "{}: same-stance partner fraction = {:.4} (population share {:.4}), same edges = {}, cross edges = {}, chi2 = {:.4}, df = {}, p = {:.6e}, w = {:.4}{}",
            h.stance,
            h.same_fraction(),
            h.population_share,
            h.same,
            h.cross,
            h.chi_square,
            h.df,
            h.p_value,
            h.cohens_w,
            if h.low_power { " [low power]" } else { "" }
        ));
    }
    line(String::new());
    line("# topic graph".into());
    line(format!("epsilon: {}", s.epsilon));
    line(format!("topics retained: {} (junk: {})", s.topics_retained, s.topics_junk));
    line(format!("median centrality: {:.6}", s.median_centrality));
    line(format!(
        "intermediary topics ({}): {:?}",
        s.intermediary_topics.len(),
        s.intermediary_topics
    ));
    line(String::new());
    for (title, g) in [("stance diversity", &s.diversity), ("keyword probability P(A|t)", &s.keyword_prob)] {
        line(format!("# {title}"));
        line(format!(
            "intermediary: mean = {}, median = {}",
            fmt_opt(g.intermediary_mean),
            fmt_opt(g.intermediary_median)
        ));
        line(format!(
            "non-intermediary: mean = {}, median = {}",
            fmt_opt(g.other_mean),
            fmt_opt(g.other_median)
        ));
        line(format!("mann-whitney: {}", render_test(&g.test)));
        line(String::new());
    }
    line("# users_fraction vs centrality".into());
    match &s.users_fraction_vs_centrality {
        None => line("spearman: not computable".into()),
        Some(t) if t.degenerate => line("spearman: undefined (constant input)".into()),
        Some(t) => line(format!("spearman: rho = {:.6}, p = {:.6e}", t.statistic, t.p_value)),
    }
    o
}
