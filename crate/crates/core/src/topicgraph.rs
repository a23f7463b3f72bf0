//! Topic co-occurrence graph and information centrality.
//!
//! Two topics are linked when both reach probability ε in the same user
//! document; the edge weight is the fraction of users supporting the pair.
//! Centrality is current-flow closeness (information centrality) with edge
//! weights acting as conductances:
//!
//! ```text
//! r(i, j) = L⁺_ii + L⁺_jj − 2 L⁺_ij
//! c(i)    = (n − 1) / Σ_{j≠i} r(i, j)        per connected component
//! ```

use std::collections::{BTreeMap, VecDeque};
use std::io::Write;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graphml::{AttrType, AttrValue, GraphMlDocument};
use crate::stats::{median, shannon_entropy_normalized};
use crate::topicmodel::TopicModel;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicEdge {
    pub a: usize,
    pub b: usize,
    pub support: usize,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicGraph {
    pub epsilon: f64,
    pub num_users: usize,
    /// Retained (non-junk) topic ids, ascending.
    pub nodes: Vec<usize>,
    /// Users with P(t|u) ≥ ε, aligned with `nodes`.
    pub users_count: Vec<usize>,
    /// Edges with `a < b`, sorted.
    pub edges: Vec<TopicEdge>,
    /// Topics dropped because no user reaches ε on them.
    pub junk: Vec<usize>,
}

impl TopicGraph {
    pub fn users_fraction(&self, node_pos: usize) -> f64 {
        self.users_count[node_pos] as f64 / self.num_users as f64
    }

    pub fn position(&self, topic: usize) -> Option<usize> {
        self.nodes.binary_search(&topic).ok()
    }
}

/// Builds the graph from P(t|u) of every user in the model.
pub fn build_topic_graph(model: &TopicModel, epsilon: f64) -> Result<TopicGraph> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::InvalidInput(format!("epsilon must lie in (0, 1), got {epsilon}")));
    }
    let k = model.num_topics();
    let num_users = model.num_users();
    if num_users == 0 {
        return Err(Error::InvalidInput("topic model has no users".into()));
    }
    let mut members = vec![0usize; k];
    let mut support = vec![0usize; k * k];
    let mut active = Vec::with_capacity(k);
    for row in &model.theta {
        active.clear();
        active.extend((0..k).filter(|&t| row[t] >= epsilon));
        for (i, &a) in active.iter().enumerate() {
            members[a] += 1;
            for &b in &active[i + 1..] {
                support[a * k + b] += 1;
            }
        }
    }
    let nodes: Vec<usize> = (0..k).filter(|&t| members[t] > 0).collect();
    if nodes.is_empty() {
        return Err(Error::AllTopicsJunk { epsilon });
    }
    let mut edges = Vec::new();
    for a in 0..k {
        for b in a + 1..k {
            let s = support[a * k + b];
            if s > 0 {
                edges.push(TopicEdge {
                    a,
                    b,
                    support: s,
                    weight: s as f64 / num_users as f64,
                });
            }
        }
    }
    Ok(TopicGraph {
        epsilon,
        num_users,
        users_count: nodes.iter().map(|&t| members[t]).collect(),
        junk: (0..k).filter(|&t| members[t] == 0).collect(),
        nodes,
        edges,
    })
}

/// Connected component id of every node (0-based, in order of first node).
pub fn connected_components(n: usize, edges: &[(usize, usize, f64)]) -> Vec<usize> {
    let mut adj = vec![Vec::new(); n];
    for &(a, b, _) in edges {
        adj[a].push(b);
        adj[b].push(a);
    }
    let mut comp = vec![usize::MAX; n];
    let mut next = 0;
    for start in 0..n {
        if comp[start] != usize::MAX {
            continue;
        }
        comp[start] = next;
        let mut queue = VecDeque::from([start]);
        while let Some(v) = queue.pop_front() {
            for &u in &adj[v] {
                if comp[u] == usize::MAX {
                    comp[u] = next;
                    queue.push_back(u);
                }
            }
        }
        next += 1;
    }
    comp
}

/// Information centrality of an undirected weighted graph on nodes `0..n`.
/// Parallel edges add their conductances; isolated nodes score 0.
pub fn information_centrality_weighted(n: usize, edges: &[(usize, usize, f64)]) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::InvalidInput("graph has no nodes".into()));
    }
    for &(a, b, w) in edges {
        if a >= n || b >= n || a == b || !(w > 0.0 && w.is_finite()) {
            return Err(Error::InvalidInput(format!("bad edge ({a}, {b}, {w})")));
        }
    }
    let comp = connected_components(n, edges);
    let num_comp = comp.iter().copied().max().map_or(0, |m| m + 1);
    let mut centrality = vec![0.0; n];
    for c in 0..num_comp {
        let members: Vec<usize> = (0..n).filter(|&v| comp[v] == c).collect();
        let size = members.len();
        if size < 2 {
            continue;
        }
        let mut local = vec![usize::MAX; n];
        for (i, &v) in members.iter().enumerate() {
            local[v] = i;
        }
        let mut lap = DMatrix::<f64>::zeros(size, size);
        for &(a, b, w) in edges {
            if comp[a] != c {
                continue;
            }
            let (i, j) = (local[a], local[b]);
            lap[(i, j)] -= w;
            lap[(j, i)] -= w;
            lap[(i, i)] += w;
            lap[(j, j)] += w;
        }
        let pinv = laplacian_pinv(&lap)?;
        let trace = pinv.trace();
        for (i, &v) in members.iter().enumerate() {
            let total_resistance = size as f64 * pinv[(i, i)] + trace;
            centrality[v] = (size - 1) as f64 / total_resistance;
        }
    }
    Ok(centrality)
}

/// L⁺ of a connected Laplacian through (L + J/n)⁻¹ − J/n.
fn laplacian_pinv(lap: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = lap.nrows();
    let shift = 1.0 / n as f64;
    let shifted = lap.add_scalar(shift);
    let diagnose = |m: &DMatrix<f64>| {
        let eig = m.clone().symmetric_eigen();
        let max = eig.eigenvalues.iter().cloned().fold(f64::MIN, f64::max);
        let min = eig.eigenvalues.iter().cloned().fold(f64::MAX, f64::min);
        if min <= 0.0 { f64::INFINITY } else { max / min }
    };
    let chol = shifted.clone().cholesky().ok_or_else(|| Error::Singular {
        nodes: n,
        condition: diagnose(&shifted),
    })?;
    let inv = chol.inverse();
    if inv.iter().any(|x| !x.is_finite()) {
        return Err(Error::Singular {
            nodes: n,
            condition: diagnose(&shifted),
        });
    }
    Ok(inv.add_scalar(-shift))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CentralityScores {
    /// topic id → centrality
    pub centrality: BTreeMap<usize, f64>,
    /// topic id → connected component
    pub component: BTreeMap<usize, usize>,
}

pub fn information_centrality(graph: &TopicGraph) -> Result<CentralityScores> {
    let pos = |t: usize| graph.position(t).expect("edge endpoints are retained nodes");
    let edges: Vec<(usize, usize, f64)> = graph
        .edges
        .iter()
        .map(|e| (pos(e.a), pos(e.b), e.weight))
        .collect();
    let values = information_centrality_weighted(graph.nodes.len(), &edges)?;
    let comp = connected_components(graph.nodes.len(), &edges);
    Ok(CentralityScores {
        centrality: graph.nodes.iter().copied().zip(values).collect(),
        component: graph.nodes.iter().copied().zip(comp).collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeCentrality {
    pub topic: usize,
    pub centrality: f64,
    pub component: usize,
    pub intermediary: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CentralityReport {
    pub nodes: Vec<NodeCentrality>,
    pub median: f64,
    pub max: f64,
}

impl CentralityReport {
    pub fn intermediary_topics(&self) -> Vec<usize> {
        self.nodes.iter().filter(|n| n.intermediary).map(|n| n.topic).collect()
    }
}

/// Intermediary topics are those strictly above the median centrality of
/// all retained nodes, across components.
pub fn partition_intermediary(scores: &CentralityScores) -> Result<CentralityReport> {
    let values: Vec<f64> = scores.centrality.values().copied().collect();
    let med = median(&values).ok_or_else(|| Error::InvalidInput("no nodes to partition".into()))?;
    let max = values.iter().cloned().fold(f64::MIN, f64::max);
    let nodes = scores
        .centrality
        .iter()
        .map(|(&topic, &c)| NodeCentrality {
            topic,
            centrality: c,
            component: scores.component.get(&topic).copied().unwrap_or(0),
            intermediary: c > med,
        })
        .collect();
    Ok(CentralityReport {
        nodes,
        median: med,
        max,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicUserStats {
    pub topic: usize,
    pub users_count: usize,
    pub users_fraction: f64,
    /// Related users per stance, in the order given to [`topic_user_stats`].
    pub stance_counts: Vec<usize>,
    pub diversity: f64,
}

/// Related users (P(t|u) ≥ ε) and the normalized stance entropy among them
/// for every retained topic. Users without a label are counted as related
/// but do not enter the entropy.
pub fn topic_user_stats(
    graph: &TopicGraph,
    model: &TopicModel,
    epsilon: f64,
    labels: &BTreeMap<String, String>,
    stances: &[&str],
) -> Result<Vec<TopicUserStats>> {
    let mut out = Vec::with_capacity(graph.nodes.len());
    let stance_pos: BTreeMap<&str, usize> = stances.iter().enumerate().map(|(i, s)| (*s, i)).collect();
    let user_stance: Vec<Option<usize>> = model
        .user_ids
        .iter()
        .map(|u| labels.get(u).and_then(|l| stance_pos.get(l.as_str()).copied()))
        .collect();
    for &topic in &graph.nodes {
        let mut users = 0;
        let mut counts = vec![0usize; stances.len()];
        for (row, s) in model.theta.iter().zip(&user_stance) {
            if row[topic] >= epsilon {
                users += 1;
                if let Some(s) = s {
                    counts[*s] += 1;
                }
            }
        }
        let labeled: usize = counts.iter().sum();
        let diversity = if labeled <= 1 || stances.len() < 2 {
            0.0
        } else {
            let p: Vec<f64> = counts.iter().map(|&c| c as f64 / labeled as f64).collect();
            shannon_entropy_normalized(&p)?
        };
        out.push(TopicUserStats {
            topic,
            users_count: users,
            users_fraction: users as f64 / model.num_users() as f64,
            stance_counts: counts,
            diversity,
        });
    }
    Ok(out)
}

/// Everything reported per retained topic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicMetrics {
    pub topic: usize,
    pub centrality: f64,
    pub component: usize,
    pub users_count: usize,
    pub users_fraction: f64,
    pub diversity: f64,
    pub keyword_prob: f64,
    pub intermediary: bool,
}

pub fn write_graphml<W: Write>(out: W, graph: &TopicGraph, metrics: &[TopicMetrics]) -> std::io::Result<()> {
    let mut doc = GraphMlDocument::new(
        &[
            ("centrality", AttrType::Double),
            ("users_fraction", AttrType::Double),
            ("diversity", AttrType::Double),
            ("keyword_prob", AttrType::Double),
            ("intermediary", AttrType::Boolean),
            ("component", AttrType::Int),
        ],
        &[("weight", AttrType::Double), ("support", AttrType::Int)],
    );
    for m in metrics {
        doc.add_node(
            format!("t{}", m.topic),
            vec![
                AttrValue::Double(m.centrality),
                AttrValue::Double(m.users_fraction),
                AttrValue::Double(m.diversity),
                AttrValue::Double(m.keyword_prob),
                AttrValue::Boolean(m.intermediary),
                AttrValue::Int(m.component as i64),
            ],
        );
    }
    for e in &graph.edges {
        doc.add_edge(
            format!("t{}", e.a),
            format!("t{}", e.b),
            vec![AttrValue::Double(e.weight), AttrValue::Int(e.support as i64)],
        );
    }
    doc.write_to(out)
}
