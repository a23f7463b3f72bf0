//! Latent Dirichlet allocation by collapsed Gibbs sampling.
//!
//! Parameter estimates are averaged over every sweep after burn-in:
//!
//! ```text
//! phi[t][w]   = (n_tw + beta)  / (n_t + |V| beta)
//! theta[u][t] = (n_ut + alpha) / (n_u + k alpha)
//! ```

use std::collections::{BTreeSet, HashMap};
use std::io::{BufRead, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::UserDocument;
use crate::error::{Error, Result};
use crate::stats::ln_gamma;
use crate::textproc::Vocabulary;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LdaConfig {
    pub k: usize,
    pub alpha: f64,
    pub beta: f64,
    pub iterations: usize,
    pub burn_in: usize,
    pub seed: u64,
}

impl LdaConfig {
    /// Defaults for `k` topics: alpha = 50/k, beta = 0.01, 1000 sweeps with
    /// 800 burn-in.
    pub fn with_topics(k: usize) -> Self {
        LdaConfig {
            k,
            alpha: 50.0 / k.max(1) as f64,
            beta: 0.01,
            iterations: 1000,
            burn_in: 800,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k < 2 {
            return Err(Error::LdaConfig(format!("k must be at least 2, got {}", self.k)));
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) || !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(Error::LdaConfig(format!(
                "priors must be positive (alpha = {}, beta = {})",
                self.alpha, self.beta
            )));
        }
        if self.burn_in >= self.iterations {
            return Err(Error::LdaConfig(format!(
                "burn_in ({}) must be smaller than iterations ({})",
                self.burn_in, self.iterations
            )));
        }
        Ok(())
    }
}

impl Default for LdaConfig {
    fn default() -> Self {
        LdaConfig::with_topics(200)
    }
}

/// Documents as sequences of vocabulary indices.
#[derive(Debug, Clone, PartialEq)]
pub struct LdaCorpus {
    pub user_ids: Vec<String>,
    pub docs: Vec<Vec<u32>>,
    pub vocab_size: usize,
}

impl LdaCorpus {
    /// Expands token counts in token order. Every document needs at least
    /// one in-vocabulary token.
    pub fn from_documents(docs: &[UserDocument], vocab: &Vocabulary) -> Result<Self> {
        if docs.is_empty() {
            return Err(Error::InvalidInput("LDA corpus is empty".into()));
        }
        let mut corpus = LdaCorpus {
            user_ids: Vec::with_capacity(docs.len()),
            docs: Vec::with_capacity(docs.len()),
            vocab_size: vocab.len(),
        };
        for doc in docs {
            let mut words = Vec::new();
            for (tok, &count) in &doc.token_counts {
                if let Some(idx) = vocab.index_of(tok) {
                    words.extend(std::iter::repeat_n(idx as u32, count as usize));
                }
            }
            if words.is_empty() {
                return Err(Error::InvalidInput(format!(
                    "document of user {:?} has no in-vocabulary tokens",
                    doc.user_id
                )));
            }
            corpus.user_ids.push(doc.user_id.clone());
            corpus.docs.push(words);
        }
        Ok(corpus)
    }

    pub fn num_tokens(&self) -> usize {
        self.docs.iter().map(Vec::len).sum()
    }
}

/// True when the document has at least one token in `vocab`.
pub fn has_in_vocab_tokens(doc: &UserDocument, vocab: &Vocabulary) -> bool {
    doc.token_counts.keys().any(|t| vocab.index_of(t).is_some())
}

/// Collapsed Gibbs sampler state.
pub struct GibbsSampler<'a> {
    corpus: &'a LdaCorpus,
    config: LdaConfig,
    assignments: Vec<Vec<u32>>,
    /// doc-major: n_dt[d * k + t]
    n_dt: Vec<u32>,
    /// word-major: n_wt[w * k + t]
    n_wt: Vec<u32>,
    n_t: Vec<u32>,
    rng: ChaCha8Rng,
    weights: Vec<f64>,
    sweeps: usize,
}

impl<'a> GibbsSampler<'a> {
    /// Random initial assignment drawn from the seeded RNG.
    pub fn new(corpus: &'a LdaCorpus, config: &LdaConfig) -> Result<Self> {
        config.validate()?;
        if corpus.docs.is_empty() || corpus.num_tokens() == 0 {
            return Err(Error::InvalidInput("LDA corpus is empty".into()));
        }
        let k = config.k;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut s = GibbsSampler {
            corpus,
            config: config.clone(),
            assignments: Vec::with_capacity(corpus.docs.len()),
            n_dt: vec![0; corpus.docs.len() * k],
            n_wt: vec![0; corpus.vocab_size * k],
            n_t: vec![0; k],
            rng: ChaCha8Rng::seed_from_u64(0),
            weights: vec![0.0; k],
            sweeps: 0,
        };
        for (d, doc) in corpus.docs.iter().enumerate() {
            let mut z = Vec::with_capacity(doc.len());
            for &w in doc {
                let t = rng.random_range(0..k);
                s.n_dt[d * k + t] += 1;
                s.n_wt[w as usize * k + t] += 1;
                s.n_t[t] += 1;
                z.push(t as u32);
            }
            s.assignments.push(z);
        }
        s.rng = rng;
        Ok(s)
    }

    pub fn sweeps_done(&self) -> usize {
        self.sweeps
    }

    /// One pass resampling every token's topic.
    pub fn sweep(&mut self) {
        let k = self.config.k;
        let alpha = self.config.alpha;
        let beta = self.config.beta;
        let vbeta = self.corpus.vocab_size as f64 * beta;
        for (d, doc) in self.corpus.docs.iter().enumerate() {
            let dt = &mut self.n_dt[d * k..(d + 1) * k];
            for (i, &w) in doc.iter().enumerate() {
                let w = w as usize;
                let old = self.assignments[d][i] as usize;
                let wt = &mut self.n_wt[w * k..(w + 1) * k];
                dt[old] -= 1;
                wt[old] -= 1;
                self.n_t[old] -= 1;

                let mut total = 0.0;
                for t in 0..k {
                    total += (dt[t] as f64 + alpha) * (wt[t] as f64 + beta)
                        / (self.n_t[t] as f64 + vbeta);
                    self.weights[t] = total;
                }
                let u = self.rng.random::<f64>() * total;
                let new = self.weights.partition_point(|&c| c <= u).min(k - 1);

                dt[new] += 1;
                wt[new] += 1;
                self.n_t[new] += 1;
                self.assignments[d][i] = new as u32;
            }
        }
        self.sweeps += 1;
        debug_assert!(self.check_conservation().is_ok());
    }

    /// Checks that per-document topic counts add up to document lengths and
    /// per-topic word counts agree with per-topic document counts.
    pub fn check_conservation(&self) -> std::result::Result<(), String> {
        let k = self.config.k;
        for (d, doc) in self.corpus.docs.iter().enumerate() {
            let s: u64 = self.n_dt[d * k..(d + 1) * k].iter().map(|&c| c as u64).sum();
            if s != doc.len() as u64 {
                return Err(format!("document {d}: topic counts sum to {s}, length {}", doc.len()));
            }
        }
        for t in 0..k {
            let from_words: u64 = (0..self.corpus.vocab_size)
                .map(|w| self.n_wt[w * k + t] as u64)
                .sum();
            let from_docs: u64 = (0..self.corpus.docs.len())
                .map(|d| self.n_dt[d * k + t] as u64)
                .sum();
            if from_words != from_docs || from_words != self.n_t[t] as u64 {
                return Err(format!(
                    "topic {t}: word counts {from_words}, document counts {from_docs}, total {}",
                    self.n_t[t]
                ));
            }
        }
        Ok(())
    }

    /// Joint log probability log p(w, z) under the collapsed model.
    pub fn log_likelihood(&self) -> f64 {
        let k = self.config.k;
        let v = self.corpus.vocab_size;
        let (alpha, beta) = (self.config.alpha, self.config.beta);
        let lg_beta = ln_gamma(beta);
        let lg_alpha = ln_gamma(alpha);
        let mut ll = k as f64 * (ln_gamma(v as f64 * beta) - v as f64 * lg_beta);
        let mut word_terms = vec![0.0; k];
        let mut nonzero = vec![0usize; k];
        for w in 0..v {
            for t in 0..k {
                let c = self.n_wt[w * k + t];
                if c > 0 {
                    word_terms[t] += ln_gamma(c as f64 + beta);
                    nonzero[t] += 1;
                }
            }
        }
        for t in 0..k {
            ll += word_terms[t] + (v - nonzero[t]) as f64 * lg_beta
                - ln_gamma(self.n_t[t] as f64 + v as f64 * beta);
        }
        let d_count = self.corpus.docs.len();
        ll += d_count as f64 * (ln_gamma(k as f64 * alpha) - k as f64 * lg_alpha);
        for (d, doc) in self.corpus.docs.iter().enumerate() {
            for t in 0..k {
                let c = self.n_dt[d * k + t];
                ll += if c > 0 { ln_gamma(c as f64 + alpha) } else { lg_alpha };
            }
            ll -= ln_gamma(doc.len() as f64 + k as f64 * alpha);
        }
        ll
    }

    fn accumulate(&self, phi: &mut [f64], theta: &mut [f64]) {
        let k = self.config.k;
        let v = self.corpus.vocab_size;
        let (alpha, beta) = (self.config.alpha, self.config.beta);
        for t in 0..k {
            let denom = self.n_t[t] as f64 + v as f64 * beta;
            for w in 0..v {
                phi[t * v + w] += (self.n_wt[w * k + t] as f64 + beta) / denom;
            }
        }
        for (d, doc) in self.corpus.docs.iter().enumerate() {
            let denom = doc.len() as f64 + k as f64 * alpha;
            for t in 0..k {
                theta[d * k + t] += (self.n_dt[d * k + t] as f64 + alpha) / denom;
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TopicModel {
    pub config: LdaConfig,
    pub user_ids: Vec<String>,
    /// k × |V|, rows sum to 1.
    pub phi: Vec<Vec<f64>>,
    /// |U| × k, rows sum to 1.
    pub theta: Vec<Vec<f64>>,
    pub log_likelihood: Vec<f64>,
    user_index: HashMap<String, usize>,
}

impl TopicModel {
    pub fn new(
        config: LdaConfig,
        user_ids: Vec<String>,
        phi: Vec<Vec<f64>>,
        theta: Vec<Vec<f64>>,
        log_likelihood: Vec<f64>,
    ) -> Self {
        let user_index = user_ids.iter().enumerate().map(|(i, u)| (u.clone(), i)).collect();
        TopicModel {
            config,
            user_ids,
            phi,
            theta,
            log_likelihood,
            user_index,
        }
    }

    pub fn num_topics(&self) -> usize {
        self.phi.len()
    }

    pub fn num_users(&self) -> usize {
        self.theta.len()
    }

    pub fn vocab_size(&self) -> usize {
        self.phi.first().map_or(0, Vec::len)
    }

    /// P(t | u) for every topic.
    pub fn doc_topic_dist(&self, user_id: &str) -> Result<&[f64]> {
        self.user_index
            .get(user_id)
            .map(|&i| self.theta[i].as_slice())
            .ok_or_else(|| Error::Unknown {
                kind: "user",
                name: user_id.to_string(),
            })
    }

    /// P(A | t) = Σ P(w | t) over the distinct in-vocabulary keywords.
    pub fn keyword_topic_prob(&self, keywords: &BTreeSet<usize>, topic: usize) -> f64 {
        let row = &self.phi[topic];
        keywords
            .iter()
            .filter_map(|&w| row.get(w))
            .sum::<f64>()
            .min(1.0)
    }

    /// Indices of the `n` most probable words of `topic`.
    pub fn top_words(&self, topic: usize, n: usize) -> Vec<usize> {
        let row = &self.phi[topic];
        let mut idx: Vec<usize> = (0..row.len()).collect();
        idx.sort_by(|&a, &b| row[b].total_cmp(&row[a]).then(a.cmp(&b)));
        idx.truncate(n);
        idx
    }

    /// Plain-text format: header lines, then one `phi` row per topic and one
    /// `theta` row per user (`user_id\tvalues`).
    pub fn write_to<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let join = |row: &[f64]| row.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(" ");
        writeln!(out, "#intertopic-lda v1")?;
        writeln!(out, "config\t{}", serde_json::to_string(&self.config).map_err(std::io::Error::other)?)?;
        writeln!(out, "topics\t{}", self.num_topics())?;
        writeln!(out, "vocab_size\t{}", self.vocab_size())?;
        writeln!(out, "users\t{}", self.num_users())?;
        writeln!(out, "loglik\t{}", join(&self.log_likelihood))?;
        writeln!(out, "phi")?;
        for row in &self.phi {
            writeln!(out, "{}", join(row))?;
        }
        writeln!(out, "theta")?;
        for (u, row) in self.user_ids.iter().zip(&self.theta) {
            writeln!(out, "{u}\t{}", join(row))?;
        }
        Ok(())
    }

    pub fn read_from<R: BufRead>(input: R) -> Result<Self> {
        let bad = |what: &str| Error::InvalidInput(format!("topic model file: {what}"));
        let mut lines = input.lines();
        let mut next = || -> Result<String> {
            lines
                .next()
                .ok_or_else(|| bad("unexpected end of file"))?
                .map_err(|e| Error::io("<model>", e))
        };
        if next()? != "#intertopic-lda v1" {
            return Err(bad("missing header"));
        }
        let field = |line: String, name: &str| -> Result<String> {
            line.strip_prefix(&format!("{name}\t"))
                .map(str::to_string)
                .ok_or_else(|| bad(&format!("expected {name}")))
        };
        let parse_row = |s: &str| -> Result<Vec<f64>> {
            s.split_whitespace()
                .map(|v| v.parse::<f64>().map_err(|_| bad("bad number")))
                .collect()
        };
        let config: LdaConfig = serde_json::from_str(&field(next()?, "config")?)
            .map_err(|e| bad(&e.to_string()))?;
        let k: usize = field(next()?, "topics")?.parse().map_err(|_| bad("topics"))?;
        let v: usize = field(next()?, "vocab_size")?.parse().map_err(|_| bad("vocab_size"))?;
        let users: usize = field(next()?, "users")?.parse().map_err(|_| bad("users"))?;
        let loglik = parse_row(&field(next()?, "loglik")?)?;
        if next()? != "phi" {
            return Err(bad("expected phi"));
        }
        let mut phi = Vec::with_capacity(k);
        for _ in 0..k {
            let row = parse_row(&next()?)?;
            if row.len() != v {
                return Err(bad("phi row length"));
            }
            phi.push(row);
        }
        if next()? != "theta" {
            return Err(bad("expected theta"));
        }
        let mut ids = Vec::with_capacity(users);
        let mut theta = Vec::with_capacity(users);
        for _ in 0..users {
            let line = next()?;
            let (id, rest) = line.split_once('\t').ok_or_else(|| bad("theta row"))?;
            let row = parse_row(rest)?;
            if row.len() != k {
                return Err(bad("theta row length"));
            }
            ids.push(id.to_string());
            theta.push(row);
        }
        Ok(TopicModel::new(config, ids, phi, theta, loglik))
    }
}

pub fn fit_lda(docs: &[UserDocument], vocab: &Vocabulary, config: &LdaConfig) -> Result<TopicModel> {
    let corpus = LdaCorpus::from_documents(docs, vocab)?;
    fit_corpus(&corpus, config, |_, _| {})
}

/// Runs the sampler, calling `observer` after every sweep (1-based index).
pub fn fit_corpus<F>(corpus: &LdaCorpus, config: &LdaConfig, mut observer: F) -> Result<TopicModel>
where
    F: FnMut(usize, &GibbsSampler<'_>),
{
    let mut sampler = GibbsSampler::new(corpus, config)?;
    let k = config.k;
    let v = corpus.vocab_size;
    let d = corpus.docs.len();
    let mut phi_acc = vec![0.0; k * v];
    let mut theta_acc = vec![0.0; d * k];
    let mut loglik = Vec::with_capacity(config.iterations);
    for sweep in 1..=config.iterations {
        sampler.sweep();
        loglik.push(sampler.log_likelihood());
        if sweep > config.burn_in {
            sampler.accumulate(&mut phi_acc, &mut theta_acc);
        }
        observer(sweep, &sampler);
    }
    let normalize = |chunk: &[f64]| {
        let s: f64 = chunk.iter().sum();
        chunk.iter().map(|x| x / s).collect::<Vec<f64>>()
    };
    let phi = phi_acc.chunks(v).map(normalize).collect();
    let theta = theta_acc.chunks(k).map(normalize).collect();
    Ok(TopicModel::new(
        config.clone(),
        corpus.user_ids.clone(),
        phi,
        theta,
        loglik,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, Uniform};

    fn cfg(k: usize, iterations: usize, burn_in: usize, seed: u64) -> LdaConfig {
        LdaConfig {
            k,
            alpha: 0.5,
            beta: 0.01,
            iterations,
            burn_in,
            seed,
        }
    }

    /// Two planted topics on disjoint halves of the vocabulary.
    fn block_corpus(docs: usize, len: usize, vocab: usize, seed: u64) -> LdaCorpus {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let half = vocab / 2;
        let mut out = LdaCorpus {
            user_ids: vec![],
            docs: vec![],
            vocab_size: vocab,
        };
        for d in 0..docs {
            let block = d % 2;
            let mix: f64 = if d % 5 == 4 { 0.5 } else { 1.0 };
            let words = (0..len)
                .map(|_| {
                    let b = if rng.random::<f64>() < mix { block } else { 1 - block };
                    (b * half + rng.random_range(0..half)) as u32
                })
                .collect();
            out.user_ids.push(format!("u{d}"));
            out.docs.push(words);
        }
        out
    }

    #[test]
    fn config_validation() {
        assert!(LdaConfig::with_topics(1).validate().is_err());
        assert!(cfg(2, 10, 10, 0).validate().is_err());
        let mut c = cfg(2, 10, 5, 0);
        c.beta = 0.0;
        assert!(c.validate().is_err());
        let d = LdaConfig::default();
        assert_eq!((d.k, d.iterations, d.burn_in), (200, 1000, 800));
        assert!((d.alpha - 0.25).abs() < 1e-15);
    }

    #[test]
    fn single_word_vocabulary() {
        let corpus = LdaCorpus {
            user_ids: vec!["a".into(), "b".into()],
            docs: vec![vec![0, 0, 0], vec![0]],
            vocab_size: 1,
        };
        let m = fit_corpus(&corpus, &cfg(3, 20, 10, 1), |_, _| {}).unwrap();
        for row in &m.phi {
            assert_eq!(row, &vec![1.0]);
        }
    }

    #[test]
    fn same_seed_is_bitwise_identical() {
        let corpus = block_corpus(40, 30, 20, 3);
        let a = fit_corpus(&corpus, &cfg(2, 30, 20, 9), |_, _| {}).unwrap();
        let b = fit_corpus(&corpus, &cfg(2, 30, 20, 9), |_, _| {}).unwrap();
        assert_eq!(a, b);
        let c = fit_corpus(&corpus, &cfg(2, 30, 20, 10), |_, _| {}).unwrap();
        assert_ne!(a.theta, c.theta);
    }

    #[test]
    fn recovers_disjoint_blocks_and_keeps_invariants() {
        let corpus = block_corpus(200, 50, 40, 11);
        let mut violations = Vec::new();
        let m = fit_corpus(&corpus, &cfg(2, 200, 150, 5), |sweep, s| {
            if let Err(e) = s.check_conservation() {
                violations.push((sweep, e));
            }
        })
        .unwrap();
        assert!(violations.is_empty(), "{violations:?}");

        for t in 0..2 {
            let top = m.top_words(t, 10);
            let first_half = top.iter().filter(|&&w| w < 20).count();
            let purity = first_half.max(10 - first_half) as f64 / 10.0;
            assert!(purity >= 0.9, "topic {t} purity {purity}");
        }
        for row in m.phi.iter().chain(&m.theta) {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            assert!(row.iter().all(|&x| x > 0.0));
        }
        // pure block-0 document: dominant topic above 0.8
        let t0 = m.doc_topic_dist("u0").unwrap();
        assert!(t0.iter().cloned().fold(0.0, f64::max) > 0.8, "{t0:?}");

        let ll = &m.log_likelihood;
        let head: f64 = ll[..20].iter().sum::<f64>() / 20.0;
        let tail: f64 = ll[ll.len() - 20..].iter().sum::<f64>() / 20.0;
        assert!(tail >= head);
    }

    #[test]
    fn uniform_document_is_spread() {
        // one long uniform document among block documents
        let mut corpus = block_corpus(100, 40, 40, 17);
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let uni = Uniform::new(0u32, 40).unwrap();
        corpus.docs.push((0..2000).map(|_| uni.sample(&mut rng)).collect());
        corpus.user_ids.push("uniform".into());
        let k = 2;
        let m = fit_corpus(&corpus, &cfg(k, 150, 100, 2), |_, _| {}).unwrap();
        let dist = m.doc_topic_dist("uniform").unwrap();
        assert!(dist.iter().all(|&p| p < 3.0 / k as f64));
        assert!(dist.iter().all(|&p| p > 0.3), "{dist:?}");
    }

    #[test]
    fn keyword_probabilities() {
        let m = TopicModel::new(
            cfg(2, 2, 1, 0),
            vec!["a".into()],
            vec![vec![0.5, 0.5], vec![0.9, 0.1]],
            vec![vec![0.5, 0.5]],
            vec![],
        );
        assert_eq!(m.keyword_topic_prob(&BTreeSet::new(), 0), 0.0);
        assert!((m.keyword_topic_prob(&[0, 1].into(), 1) - 1.0).abs() < 1e-12);
        assert!((m.keyword_topic_prob(&[0].into(), 0) - 0.5).abs() < 1e-12);
        assert_eq!(m.keyword_topic_prob(&[7].into(), 0), 0.0);
        assert!(m.doc_topic_dist("zzz").is_err());
    }

    #[test]
    fn model_text_round_trip() {
        let corpus = block_corpus(10, 10, 6, 1);
        let m = fit_corpus(&corpus, &cfg(3, 6, 3, 4), |_, _| {}).unwrap();
        let mut buf = Vec::new();
        m.write_to(&mut buf).unwrap();
        let back = TopicModel::read_from(buf.as_slice()).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn empty_documents_rejected() {
        let vocab = Vocabulary::from_entries(vec![("a".into(), 1)], 1);
        let mut doc = UserDocument::new("x");
        doc.token_counts.insert("b".into(), 2);
        assert!(LdaCorpus::from_documents(&[doc], &vocab).is_err());
        assert!(LdaCorpus::from_documents(&[], &vocab).is_err());
    }
}
