//! Synthetic corpora with planted stances, topics and interactions.
//!
//! Users are split between two stances. Each user mixes topics drawn from
//! their own stance's partisan topics plus the shared bridge topics, and
//! tweets are sampled from planted topic-word distributions. Interactions
//! pick same-stance partners with probability `homophily_strength`.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use chrono::{Duration, TimeZone, Utc};
use rand::distr::weighted::WeightedIndex;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::corpus::{write_tweets, Issue, IssueKnowledgeBase, Stance, TweetKind, TweetRecord};
use crate::error::{Error, Result};
use crate::homophily::InteractionGraph;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum KeywordPlacement {
    /// General issue keywords never appear.
    Absent,
    /// Every planted topic gives `mass` to its own issue terms (a general
    /// keyword stem plus the topic index), so P(A|t) is identifiable.
    Uniform { mass: f64 },
    /// Every planted topic gives `mass` to the same general keywords. Topic
    /// models tend to pull such shared words into a few topics.
    Shared { mass: f64 },
    /// Only bridge topics carry issue terms (their own, as in `Uniform`).
    BridgeOnly { mass: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TextMode {
    /// Per-token topic draws (the LDA generative process).
    Lda,
    /// One topic per tweet (mixture of unigrams).
    MixtureOfUnigrams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub num_users: usize,
    /// Fraction of users in the first stance.
    pub stance_split: f64,
    pub stance_names: Vec<String>,
    /// Probability of picking a same-stance interaction partner; `None`
    /// picks partners uniformly from the whole population.
    pub homophily_strength: Option<f64>,
    pub k_true: usize,
    pub bridge_topics: Vec<usize>,
    /// One list per stance.
    pub partisan_topics: Vec<Vec<usize>>,
    pub tweets_per_user: (usize, usize),
    pub tokens_per_tweet: (usize, usize),
    pub vocab_size: usize,
    /// One list per stance.
    pub stance_keywords: Vec<Vec<String>>,
    pub general_keywords: Vec<String>,
    pub keyword_placement: KeywordPlacement,
    /// Probability that a user emits an own-stance keyword.
    pub keyword_user_prob: f64,
    /// Dirichlet concentration of each user's topic mixture.
    pub user_topic_concentration: f64,
    /// Dirichlet concentration of planted topic-word distributions.
    pub topic_word_concentration: f64,
    pub interactions_per_user: usize,
    /// Probability that the interaction target replies.
    pub reply_prob: f64,
    pub text_mode: TextMode,
    /// Fraction of users located outside the gazetteer.
    pub foreign_fraction: f64,
    /// Fraction of users following or followed by 2,000+ accounts.
    pub popular_fraction: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            num_users: 1000,
            stance_split: 0.55,
            stance_names: vec!["pro-choice".into(), "pro-life".into()],
            homophily_strength: Some(0.75),
            k_true: 15,
            bridge_topics: (0..5).collect(),
            partisan_topics: vec![(5..10).collect(), (10..15).collect()],
            tweets_per_user: (10, 20),
            tokens_per_tweet: (8, 14),
            vocab_size: 600,
            stance_keywords: vec![
                vec!["#abortolibre".into(), "#abortolegal".into(), "#yoabortoel25".into()],
                vec!["#provida".into(), "#noalaborto".into(), "#sialavida".into()],
            ],
            general_keywords: vec!["aborto".into(), "embarazo".into(), "feto".into()],
            keyword_placement: KeywordPlacement::Uniform { mass: 0.02 },
            keyword_user_prob: 0.3,
            user_topic_concentration: 1.0,
            topic_word_concentration: 1.0,
            interactions_per_user: 3,
            reply_prob: 0.8,
            text_mode: TextMode::Lda,
            foreign_fraction: 0.0,
            popular_fraction: 0.0,
            seed: 42,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidInput(format!("synth config: {m}")));
        if self.num_users < 2 {
            return bad("need at least two users".into());
        }
        if self.stance_names.len() != 2
            || self.partisan_topics.len() != 2
            || self.stance_keywords.len() != 2
        {
            return bad("exactly two stances are supported".into());
        }
        for (name, v) in [
            ("stance_split", self.stance_split),
            ("keyword_user_prob", self.keyword_user_prob),
            ("reply_prob", self.reply_prob),
            ("foreign_fraction", self.foreign_fraction),
            ("popular_fraction", self.popular_fraction),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return bad(format!("{name} = {v} is outside [0, 1]"));
            }
        }
        if let Some(h) = self.homophily_strength {
            if !(0.0..=1.0).contains(&h) {
                return bad(format!("homophily_strength = {h} is outside [0, 1]"));
            }
        }
        let mut seen = BTreeSet::new();
        for &t in self.bridge_topics.iter().chain(self.partisan_topics.iter().flatten()) {
            if t >= self.k_true || !seen.insert(t) {
                return bad(format!("topic {t} is out of range or assigned twice"));
            }
        }
        if seen.len() != self.k_true {
            return bad("bridge and partisan topics must cover every planted topic".into());
        }
        if self.vocab_size < self.k_true {
            return bad("vocab_size must be at least k_true".into());
        }
        if self.tweets_per_user.0 == 0
            || self.tweets_per_user.0 > self.tweets_per_user.1
            || self.tokens_per_tweet.0 == 0
            || self.tokens_per_tweet.0 > self.tokens_per_tweet.1
        {
            return bad("tweet and token ranges must be non-empty and positive".into());
        }
        if self.user_topic_concentration <= 0.0 || self.topic_word_concentration <= 0.0 {
            return bad("concentrations must be positive".into());
        }
        match self.keyword_placement {
            KeywordPlacement::Uniform { mass }
            | KeywordPlacement::Shared { mass }
            | KeywordPlacement::BridgeOnly { mass }
                if !(0.0..1.0).contains(&mass) || self.general_keywords.is_empty() =>
            {
                return bad("keyword mass must be in [0, 1) with general keywords present".into());
            }
            _ => {}
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "role", content = "stance")]
pub enum TopicRole {
    Bridge,
    Partisan(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedTopic {
    pub topic: usize,
    pub role: TopicRole,
    /// Planted word distribution over [`GroundTruth::vocabulary`].
    pub word_probs: Vec<f64>,
    /// Block of vocabulary indices the topic owns.
    pub block: Vec<usize>,
    /// Users per stance whose mixture includes the topic.
    pub supporters: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub user_stances: BTreeMap<String, String>,
    pub vocabulary: Vec<String>,
    pub topics: Vec<PlantedTopic>,
}

impl GroundTruth {
    pub fn bridge_topics(&self) -> Vec<usize> {
        self.topics
            .iter()
            .filter(|t| t.role == TopicRole::Bridge)
            .map(|t| t.topic)
            .collect()
    }

    /// Checks that bridge topics have supporters in both stances and
    /// partisan topics only in their own.
    pub fn check_roles(&self) -> std::result::Result<(), String> {
        for t in &self.topics {
            match &t.role {
                TopicRole::Bridge => {
                    if t.supporters.values().any(|&c| c == 0) {
                        return Err(format!("bridge topic {} lacks a stance", t.topic));
                    }
                }
                TopicRole::Partisan(own) => {
                    for (s, &c) in &t.supporters {
                        if (s == own) != (c > 0) {
                            return Err(format!("partisan topic {} has support {s}={c}", t.topic));
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SynthCorpus {
    pub tweets: Vec<TweetRecord>,
    pub knowledge_base: IssueKnowledgeBase,
    pub gazetteer: Vec<String>,
    pub truth: GroundTruth,
}

pub const ISSUE_NAME: &str = "abortion";
const HOME_PLACES: [&str; 4] = ["Santiago, Chile", "Valparaíso", "Concepción, Chile", "chile"];
const FOREIGN_PLACES: [&str; 3] = ["Lima, Perú", "Buenos Aires", "Madrid"];

impl SynthCorpus {
    /// Writes `tweets.jsonl`, `kb.toml`, `gazetteer.txt` and
    /// `ground_truth.json` into `dir`.
    pub fn write_to_dir(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let tweets_path = dir.join("tweets.jsonl");
        let mut buf = Vec::new();
        write_tweets(&mut buf, &self.tweets).map_err(|e| Error::io(&tweets_path, e))?;
        fs::write(&tweets_path, buf).map_err(|e| Error::io(&tweets_path, e))?;
        let kb_path = dir.join("kb.toml");
        fs::write(&kb_path, self.knowledge_base.to_toml()).map_err(|e| Error::io(&kb_path, e))?;
        let gaz_path = dir.join("gazetteer.txt");
        fs::write(&gaz_path, self.gazetteer.join("\n") + "\n").map_err(|e| Error::io(&gaz_path, e))?;
        let truth_path = dir.join("ground_truth.json");
        let json = serde_json::to_string_pretty(&self.truth).expect("ground truth serializes");
        fs::write(&truth_path, json).map_err(|e| Error::io(&truth_path, e))?;
        Ok(())
    }
}

fn word_token(i: usize) -> String {
    format!("w{i:04}")
}

fn dirichlet(rng: &mut ChaCha8Rng, concentration: f64, n: usize) -> Vec<f64> {
    let gamma = Gamma::new(concentration, 1.0).expect("positive concentration");
    loop {
        let draws: Vec<f64> = (0..n).map(|_| gamma.sample(rng)).collect();
        let s: f64 = draws.iter().sum();
        if s > 0.0 {
            return draws.into_iter().map(|x| x / s).collect();
        }
    }
}

fn user_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

struct PlantedUser {
    id: String,
    stance: usize,
    topics: Vec<usize>,
    mixture: WeightedIndex<f64>,
    location: String,
    following: u64,
    followers: u64,
}

/// Appends the emitted issue terms to `vocabulary` and returns, per topic,
/// the vocabulary indices that topic spreads its keyword mass over.
fn issue_terms_per_topic(config: &SynthConfig, vocabulary: &mut Vec<String>) -> Vec<Vec<usize>> {
    let k = config.k_true;
    let own_terms = |vocabulary: &mut Vec<String>, t: usize| -> Vec<usize> {
        config
            .general_keywords
            .iter()
            .map(|g| {
                vocabulary.push(format!("{g}{t:02}"));
                vocabulary.len() - 1
            })
            .collect()
    };
    match config.keyword_placement {
        KeywordPlacement::Absent => vec![Vec::new(); k],
        KeywordPlacement::Shared { .. } => {
            let start = vocabulary.len();
            vocabulary.extend(config.general_keywords.iter().cloned());
            vec![(start..vocabulary.len()).collect(); k]
        }
        KeywordPlacement::Uniform { .. } => (0..k).map(|t| own_terms(vocabulary, t)).collect(),
        KeywordPlacement::BridgeOnly { .. } => (0..k)
            .map(|t| {
                if config.bridge_topics.contains(&t) {
                    own_terms(vocabulary, t)
                } else {
                    Vec::new()
                }
            })
            .collect(),
    }
}

pub fn generate_corpus(config: &SynthConfig) -> Result<SynthCorpus> {
    config.validate()?;
    let mut master = ChaCha8Rng::seed_from_u64(config.seed);

    // vocabulary: topic blocks, then the issue terms
    let mut vocabulary: Vec<String> = (0..config.vocab_size).map(word_token).collect();
    let issue_terms = issue_terms_per_topic(config, &mut vocabulary);

    let block_size = config.vocab_size / config.k_true;
    let mut topics = Vec::with_capacity(config.k_true);
    let mut samplers = Vec::with_capacity(config.k_true);
    for t in 0..config.k_true {
        let start = t * block_size;
        let end = if t + 1 == config.k_true { config.vocab_size } else { start + block_size };
        let block: Vec<usize> = (start..end).collect();
        let weights = dirichlet(&mut master, config.topic_word_concentration, block.len());
        let is_bridge = config.bridge_topics.contains(&t);
        let terms = &issue_terms[t];
        let mass = match config.keyword_placement {
            KeywordPlacement::Absent => 0.0,
            KeywordPlacement::Uniform { mass }
            | KeywordPlacement::Shared { mass }
            | KeywordPlacement::BridgeOnly { mass } => {
                if terms.is_empty() {
                    0.0
                } else {
                    mass
                }
            }
        };
        let mut probs = vec![0.0; vocabulary.len()];
        for (&w, p) in block.iter().zip(&weights) {
            probs[w] = p * (1.0 - mass);
        }
        for &w in terms {
            probs[w] = mass / terms.len() as f64;
        }
        let role = if is_bridge {
            TopicRole::Bridge
        } else {
            let s = config.partisan_topics.iter().position(|p| p.contains(&t)).unwrap();
            TopicRole::Partisan(config.stance_names[s].clone())
        };
        samplers.push(WeightedIndex::new(&probs).expect("valid topic distribution"));
        topics.push(PlantedTopic {
            topic: t,
            role,
            word_probs: probs,
            block,
            supporters: config.stance_names.iter().map(|s| (s.clone(), 0)).collect(),
        });
    }

    // stances: exact split, randomly placed
    let first = (config.stance_split * config.num_users as f64).round() as usize;
    let mut stance_of: Vec<usize> = (0..config.num_users).map(|i| usize::from(i >= first)).collect();
    stance_of.shuffle(&mut master);

    let mut users = Vec::with_capacity(config.num_users);
    for (i, &stance) in stance_of.iter().enumerate() {
        let mut rng = user_rng(config.seed, 2 * i as u64);
        let mut allowed: Vec<usize> = config.partisan_topics[stance].clone();
        allowed.extend(&config.bridge_topics);
        allowed.sort_unstable();
        let weights = dirichlet(&mut rng, config.user_topic_concentration, allowed.len());
        for &t in &allowed {
            *topics[t].supporters.get_mut(&config.stance_names[stance]).unwrap() += 1;
        }
        let location = if rng.random::<f64>() < config.foreign_fraction {
            FOREIGN_PLACES[rng.random_range(0..FOREIGN_PLACES.len())]
        } else {
            HOME_PLACES[rng.random_range(0..HOME_PLACES.len())]
        };
        let (following, followers) = if rng.random::<f64>() < config.popular_fraction {
            (rng.random_range(100..5000), rng.random_range(2000..50_000))
        } else {
            (rng.random_range(10..2000), rng.random_range(5..2000))
        };
        users.push(PlantedUser {
            id: format!("u{i:05}"),
            stance,
            topics: allowed,
            mixture: WeightedIndex::new(&weights).expect("valid mixture"),
            location: location.to_string(),
            following,
            followers,
        });
    }
    let by_stance: [Vec<usize>; 2] = [
        (0..users.len()).filter(|&i| users[i].stance == 0).collect(),
        (0..users.len()).filter(|&i| users[i].stance == 1).collect(),
    ];

    let base_time = Utc.with_ymd_and_hms(2013, 12, 6, 0, 0, 0).unwrap();
    let sample_text = |rng: &mut ChaCha8Rng, user: &PlantedUser| -> String {
        let len = rng.random_range(config.tokens_per_tweet.0..=config.tokens_per_tweet.1);
        let mut words = Vec::with_capacity(len);
        let tweet_topic = user.topics[user.mixture.sample(rng)];
        for _ in 0..len {
            let t = match config.text_mode {
                TextMode::Lda => user.topics[user.mixture.sample(rng)],
                TextMode::MixtureOfUnigrams => tweet_topic,
            };
            words.push(vocabulary[samplers[t].sample(rng)].as_str());
        }
        words.join(" ")
    };

    let mut tweets = Vec::new();
    for (i, user) in users.iter().enumerate() {
        let mut rng = user_rng(config.seed, 2 * i as u64 + 1);
        let n_tweets = rng.random_range(config.tweets_per_user.0..=config.tweets_per_user.1);
        let keyword_tweet = (rng.random::<f64>() < config.keyword_user_prob && !config.stance_keywords[user.stance].is_empty())
            .then(|| rng.random_range(0..n_tweets));
        let mut own = Vec::with_capacity(n_tweets);
        let mut replies = Vec::new();
        for j in 0..n_tweets {
            let mut text = sample_text(&mut rng, user);
            if keyword_tweet == Some(j) {
                let kws = &config.stance_keywords[user.stance];
                text.push(' ');
                text.push_str(&kws[rng.random_range(0..kws.len())]);
            }
            let created_at = base_time + Duration::minutes((i * 97 + j * 13) as i64);
            let mut mentions = Vec::new();
            if j < config.interactions_per_user {
                let partner = pick_partner(&mut rng, config, i, user.stance, &by_stance);
                if let Some(p) = partner {
                    let partner_user = &users[p];
                    text = format!("@{} {text}", partner_user.id);
                    mentions.push(partner_user.id.clone());
                    if rng.random::<f64>() < config.reply_prob {
                        let reply_text = format!("@{} {}", user.id, sample_text(&mut rng, partner_user));
                        replies.push(TweetRecord {
                            tweet_id: format!("{}-r{j}", user.id),
                            user_id: partner_user.id.clone(),
                            text: reply_text,
                            created_at: created_at + Duration::minutes(5),
                            kind: TweetKind::Reply,
                            reply_to_user: Some(user.id.clone()),
                            retweet_of_user: None,
                            mentions: vec![user.id.clone()],
                            user_location: Some(partner_user.location.clone()),
                            following_count: Some(partner_user.following),
                            followers_count: Some(partner_user.followers),
                        });
                    }
                }
            }
            own.push(TweetRecord {
                tweet_id: format!("{}-t{j}", user.id),
                user_id: user.id.clone(),
                text,
                created_at,
                kind: TweetKind::Original,
                reply_to_user: None,
                retweet_of_user: None,
                mentions,
                user_location: Some(user.location.clone()),
                following_count: Some(user.following),
                followers_count: Some(user.followers),
            });
        }
        tweets.extend(own);
        tweets.extend(replies);
    }

    let mut issue_vocabulary: Vec<String> = config.general_keywords.clone();
    let emitted: BTreeSet<usize> = issue_terms.iter().flatten().copied().collect();
    for &w in &emitted {
        if !issue_vocabulary.contains(&vocabulary[w]) {
            issue_vocabulary.push(vocabulary[w].clone());
        }
    }
    let knowledge_base = IssueKnowledgeBase {
        issues: vec![Issue {
            name: ISSUE_NAME.to_string(),
            stances: config
                .stance_names
                .iter()
                .zip(&config.stance_keywords)
                .map(|(name, kws)| Stance {
                    name: name.clone(),
                    keywords: kws.clone(),
                })
                .collect(),
            general_keywords: issue_vocabulary,
            related_hashtags: vec![],
            relevant_accounts: vec![],
            contingency_words: vec![],
        }],
    };
    knowledge_base.validate()?;

    let truth = GroundTruth {
        user_stances: users
            .iter()
            .map(|u| (u.id.clone(), config.stance_names[u.stance].clone()))
            .collect(),
        vocabulary,
        topics,
    };
    Ok(SynthCorpus {
        tweets,
        knowledge_base,
        gazetteer: vec!["chile".into(), "santiago".into(), "valparaíso".into(), "concepción".into()],
        truth,
    })
}

fn pick_partner(
    rng: &mut ChaCha8Rng,
    config: &SynthConfig,
    me: usize,
    stance: usize,
    by_stance: &[Vec<usize>; 2],
) -> Option<usize> {
    let pool: &[usize] = match config.homophily_strength {
        Some(h) => {
            let same = rng.random::<f64>() < h;
            &by_stance[if same { stance } else { 1 - stance }]
        }
        None => {
            // uniform over everyone else
            let n = by_stance[0].len() + by_stance[1].len();
            if n < 2 {
                return None;
            }
            let mut p = rng.random_range(0..n - 1);
            if p >= me {
                p += 1;
            }
            return Some(p);
        }
    };
    let candidates = pool.len() - usize::from(pool.contains(&me));
    if candidates == 0 {
        return None;
    }
    loop {
        let p = pool[rng.random_range(0..pool.len())];
        if p != me {
            return Some(p);
        }
    }
}

/// Interaction graph under random mixing: an exact `split` of `num_users`
/// labeled users and `num_edges` draws of uniformly random distinct pairs
/// (duplicates collapse). Returns the graph and the population proportions.
pub fn random_mixing_graph(
    num_users: usize,
    split: f64,
    num_edges: usize,
    stance_names: [&str; 2],
    seed: u64,
) -> (InteractionGraph, Vec<(String, f64)>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let first = (split * num_users as f64).round() as usize;
    let labels: BTreeMap<String, String> = (0..num_users)
        .map(|i| {
            let s = if i < first { stance_names[0] } else { stance_names[1] };
            (format!("n{i:06}"), s.to_string())
        })
        .collect();
    let ids: Vec<&String> = labels.keys().collect();
    let mut pairs = Vec::with_capacity(num_edges);
    for _ in 0..num_edges {
        let a = rng.random_range(0..num_users);
        let mut b = rng.random_range(0..num_users - 1);
        if b >= a {
            b += 1;
        }
        pairs.push((ids[a].as_str(), ids[b].as_str()));
    }
    let graph = InteractionGraph::from_pairs(pairs, &labels);
    let p0 = first as f64 / num_users as f64;
    let population = vec![
        (stance_names[0].to_string(), p0),
        (stance_names[1].to_string(), 1.0 - p0),
    ];
    (graph, population)
}
