//! Two-way interaction graphs and the homophily chi-square test.
//!
//! For a stance `s`, every edge incident to an `s` user is one observation,
//! categorized by the stance at its other end. Under random mixing with
//! population proportions `p`, an edge touching `s` is a same-stance edge
//! with probability `p_s / (2 − p_s)` and goes to stance `r` with probability
//! `2 p_r / (2 − p_s)`; those are the expected cell proportions.
//!
//! Counting endpoints instead (a same-stance edge seen twice) makes the
//! observations pairwise dependent and roughly doubles the false-positive
//! rate of the chi-square test under the null.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::io::Write;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::corpus::{TweetKind, TweetRecord};
use crate::error::{Error, Result};
use crate::graphml::{AttrType, AttrValue, GraphMlDocument};
use crate::stats::{chi_square_gof, cohens_w};

/// Undirected, deduplicated, labeled interaction graph.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct InteractionGraph {
    /// Unordered pairs stored with the lexicographically smaller id first.
    edges: BTreeSet<(String, String)>,
    labels: BTreeMap<String, String>,
    /// Two-way pairs dropped because an endpoint had no stance label.
    pub unlabeled_dropped: usize,
}

impl InteractionGraph {
    /// Builds from unordered pairs; self-loops and pairs with an unlabeled
    /// endpoint are dropped.
    pub fn from_pairs<'a>(
        pairs: impl IntoIterator<Item = (&'a str, &'a str)>,
        labels: &BTreeMap<String, String>,
    ) -> Self {
        let mut g = InteractionGraph::default();
        for (a, b) in pairs {
            if a == b {
                continue;
            }
            let (a, b) = if a < b { (a, b) } else { (b, a) };
            let (Some(la), Some(lb)) = (labels.get(a), labels.get(b)) else {
                g.unlabeled_dropped += 1;
                continue;
            };
            if g.edges.insert((a.to_string(), b.to_string())) {
                g.labels.insert(a.to_string(), la.clone());
                g.labels.insert(b.to_string(), lb.clone());
            }
        }
        g
    }

    pub fn edges(&self) -> impl Iterator<Item = (&str, &str)> {
        self.edges.iter().map(|(a, b)| (a.as_str(), b.as_str()))
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    pub fn label(&self, user: &str) -> Option<&str> {
        self.labels.get(user).map(String::as_str)
    }

    pub fn nodes(&self) -> impl Iterator<Item = (&str, &str)> {
        self.labels.iter().map(|(u, l)| (u.as_str(), l.as_str()))
    }

    pub fn write_graphml<W: Write>(&self, out: W) -> std::io::Result<()> {
        let mut doc = GraphMlDocument::new(&[("stance", AttrType::String)], &[]);
        for (user, label) in self.nodes() {
            doc.add_node(user, vec![AttrValue::String(label.to_string())]);
        }
        for (a, b) in self.edges() {
            doc.add_edge(a, b, vec![]);
        }
        doc.write_to(out)
    }
}

/// Pairs of users with a two-way interaction: one of them mentioned or
/// retweeted the other, and the target replied back.
pub fn two_way_pairs(tweets: &[TweetRecord]) -> BTreeSet<(String, String)> {
    let mut initiated: HashSet<(&str, &str)> = HashSet::new();
    let mut replied: HashSet<(&str, &str)> = HashSet::new();
    for t in tweets {
        let author = t.user_id.as_str();
        match t.kind {
            TweetKind::Reply => {
                if let Some(target) = t.reply_to_user.as_deref() {
                    replied.insert((author, target));
                }
            }
            TweetKind::Original | TweetKind::Retweet => {
                for m in &t.mentions {
                    initiated.insert((author, m.as_str()));
                }
                if let Some(target) = t.retweet_of_user.as_deref() {
                    initiated.insert((author, target));
                }
            }
        }
    }
    initiated
        .into_iter()
        .filter(|&(a, b)| a != b && replied.contains(&(b, a)))
        .map(|(a, b)| if a < b { (a.to_string(), b.to_string()) } else { (b.to_string(), a.to_string()) })
        .collect()
}

pub fn extract_two_way_interactions(
    tweets: &[TweetRecord],
    labels: &BTreeMap<String, String>,
) -> InteractionGraph {
    let pairs = two_way_pairs(tweets);
    InteractionGraph::from_pairs(pairs.iter().map(|(a, b)| (a.as_str(), b.as_str())), labels)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HomophilyResult {
    pub stance: String,
    /// Same-stance edges.
    pub same: u64,
    /// Edges from this stance to any other.
    pub cross: u64,
    /// Incident edges by partner stance, in population order.
    pub observed: Vec<u64>,
    /// Expected partner-stance proportions of incident edges under random mixing.
    pub expected: Vec<f64>,
    /// Share of this stance in the population.
    pub population_share: f64,
    pub chi_square: f64,
    pub df: usize,
    pub p_value: f64,
    pub cohens_w: f64,
    /// Incident edges (χ² sample size).
    pub n: u64,
    pub low_power: bool,
    pub degenerate: bool,
}

impl HomophilyResult {
    /// Fraction of this stance's interaction partners sharing the stance,
    /// counted per user endpoint; comparable with `population_share`.
    pub fn same_fraction(&self) -> f64 {
        let endpoints = 2 * self.same + self.cross;
        if endpoints == 0 {
            0.0
        } else {
            2.0 * self.same as f64 / endpoints as f64
        }
    }
}

/// Expected partner-stance proportions of edges incident to stance `s`.
pub fn random_mixing_expectation(population: &[f64], s: usize) -> Vec<f64> {
    let ps = population[s];
    let denom = 2.0 - ps;
    population
        .iter()
        .enumerate()
        .map(|(r, &pr)| if r == s { ps / denom } else { 2.0 * pr / denom })
        .collect()
}

/// Per-stance goodness-of-fit of incident-edge partner stances against
/// random mixing at the population proportions. Results follow the order
/// of `population`.
pub fn homophily_test(
    graph: &InteractionGraph,
    population: &[(String, f64)],
) -> Result<Vec<HomophilyResult>> {
    if graph.is_empty() {
        return Err(Error::InvalidInput("interaction graph has no edges".into()));
    }
    let total: f64 = population.iter().map(|p| p.1).sum();
    if (total - 1.0).abs() > 1e-9 || population.iter().any(|p| p.1 < 0.0) {
        return Err(Error::Stats(format!("population proportions sum to {total}")));
    }
    let pos: BTreeMap<&str, usize> = population
        .iter()
        .enumerate()
        .map(|(i, (s, _))| (s.as_str(), i))
        .collect();
    let k = population.len();
    // counts[s][r]: edges between stance s and r (symmetric; diagonal once)
    let mut counts = vec![vec![0u64; k]; k];
    for (a, b) in graph.edges() {
        let stance_of = |u: &str| -> Result<usize> {
            let label = graph.label(u).unwrap_or_default();
            pos.get(label).copied().ok_or_else(|| Error::Unknown {
                kind: "stance",
                name: label.to_string(),
            })
        };
        let (sa, sb) = (stance_of(a)?, stance_of(b)?);
        counts[sa][sb] += 1;
        if sa != sb {
            counts[sb][sa] += 1;
        }
    }
    let present = (0..k)
        .filter(|&s| counts.iter().enumerate().any(|(r, row)| row[s] > 0 || counts[s][r] > 0))
        .count();
    let shares: Vec<f64> = population.iter().map(|p| p.1).collect();

    let mut results = Vec::with_capacity(k);
    for (i, (stance, share)) in population.iter().enumerate() {
        let observed = counts[i].clone();
        let n: u64 = observed.iter().sum();
        let same = observed[i];
        let expected = random_mixing_expectation(&shares, i);
        let mut r = HomophilyResult {
            stance: stance.clone(),
            same,
            cross: n - same,
            observed: observed.clone(),
            expected: expected.clone(),
            population_share: *share,
            chi_square: 0.0,
            df: k.saturating_sub(1),
            p_value: 1.0,
            cohens_w: 0.0,
            n,
            low_power: false,
            degenerate: present < 2,
        };
        if n == 0 {
            r.degenerate = true;
            results.push(r);
            continue;
        }
        if expected.iter().any(|&p| p * (n as f64) < 1.0) {
            warn!("homophily test for {stance:?}: an expected cell is below 1");
            r.low_power = true;
        }
        if expected.iter().all(|&p| p > 0.0) {
            let obs: Vec<f64> = observed.iter().map(|&c| c as f64).collect();
            let t = chi_square_gof(&obs, &expected)?;
            r.chi_square = t.statistic;
            r.p_value = t.p_value;
            r.cohens_w = cohens_w(t.statistic, n as usize);
        } else {
            r.degenerate = true;
        }
        results.push(r);
    }
    Ok(results)
}

/// Stance proportions of `labels` in the given stance order.
pub fn population_proportions(labels: &BTreeMap<String, String>, stances: &[&str]) -> Vec<(String, f64)> {
    let n = labels.len().max(1) as f64;
    stances
        .iter()
        .map(|s| {
            let c = labels.values().filter(|l| l.as_str() == *s).count();
            (s.to_string(), c as f64 / n)
        })
        .collect()
}

pub fn write_results_csv<W: Write>(out: W, results: &[HomophilyResult]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let err = |e: csv::Error| Error::InvalidInput(format!("csv: {e}"));
    w.write_record([
        "stance", "same_edges", "cross_edges", "n", "expected_same", "same_partner_fraction",
        "population_share", "chi_square", "df", "p_value", "cohens_w", "low_power", "degenerate",
    ])
    .map_err(err)?;
    for (i, r) in results.iter().enumerate() {
        w.write_record([
            r.stance.clone(),
            r.same.to_string(),
            r.cross.to_string(),
            r.n.to_string(),
            r.expected.get(i).copied().unwrap_or(f64::NAN).to_string(),
            r.same_fraction().to_string(),
            r.population_share.to_string(),
            r.chi_square.to_string(),
            r.df.to_string(),
            r.p_value.to_string(),
            r.cohens_w.to_string(),
            r.low_power.to_string(),
            r.degenerate.to_string(),
        ])
        .map_err(err)?;
    }
    w.flush().map_err(|e| Error::io("<homophily>", e))
}
