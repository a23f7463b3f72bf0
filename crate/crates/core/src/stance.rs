//! Stance vectors from seed users, per-user stance profiles and view gaps.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::corpus::{IssueKnowledgeBase, UserDocument};
use crate::error::{Error, Result};
use crate::textproc::{cosine_similarity, tfidf_vectorize, SparseVector, Vocabulary};

/// Seed users per stance name.
pub type SeedSets = BTreeMap<String, BTreeSet<String>>;

/// A user is a seed for stance `s` when their document hits at least one
/// keyword of `s` and none of the other stances of the issue.
pub fn find_seed_users(docs: &[UserDocument], kb: &IssueKnowledgeBase, issue: &str) -> Result<SeedSets> {
    let issue = kb.issue(issue)?;
    let names = issue.stance_names();
    let mut seeds: SeedSets = names.iter().map(|n| (n.to_string(), BTreeSet::new())).collect();
    for doc in docs {
        let hit: Vec<&str> = names.iter().copied().filter(|n| doc.hits(n) > 0).collect();
        if let [only] = hit.as_slice() {
            seeds.get_mut(*only).unwrap().insert(doc.user_id.clone());
        }
    }
    for name in names {
        if seeds[name].is_empty() {
            return Err(Error::NoSeeds {
                issue: issue.name.clone(),
                stance: name.to_string(),
            });
        }
    }
    Ok(seeds)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StanceVector {
    pub name: String,
    pub vector: SparseVector,
    pub seeds: Vec<String>,
    pub seed_tweets: usize,
}

/// Stance vectors in issue order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StanceVectorSet {
    pub stances: Vec<StanceVector>,
}

impl StanceVectorSet {
    pub fn names(&self) -> Vec<&str> {
        self.stances.iter().map(|s| s.name.as_str()).collect()
    }

    pub fn position(&self, name: &str) -> Result<usize> {
        self.stances
            .iter()
            .position(|s| s.name == name)
            .ok_or_else(|| Error::Unknown {
                kind: "stance",
                name: name.to_string(),
            })
    }
}

/// Sums the token counts of each stance's seed documents and vectorizes the
/// result against the corpus vocabulary. `order` fixes the stance order.
pub fn build_stance_vectors(
    docs: &[UserDocument],
    seeds: &SeedSets,
    order: &[&str],
    vocab: &Vocabulary,
) -> Result<StanceVectorSet> {
    let by_user: BTreeMap<&str, &UserDocument> =
        docs.iter().map(|d| (d.user_id.as_str(), d)).collect();
    let mut stances = Vec::with_capacity(order.len());
    for &name in order {
        let members = seeds.get(name).ok_or_else(|| Error::Unknown {
            kind: "stance",
            name: name.to_string(),
        })?;
        if members.is_empty() {
            return Err(Error::NoSeeds {
                issue: String::new(),
                stance: name.to_string(),
            });
        }
        let mut counts: BTreeMap<String, u32> = BTreeMap::new();
        let mut seed_tweets = 0;
        for user in members {
            let Some(doc) = by_user.get(user.as_str()) else {
                continue;
            };
            seed_tweets += doc.num_tweets;
            for (tok, &c) in &doc.token_counts {
                *counts.entry(tok.clone()).or_default() += c;
            }
        }
        let vector = tfidf_vectorize(&counts, vocab, vocab.num_docs())?;
        if vector.is_empty() {
            return Err(Error::EmptyStanceVector(name.to_string()));
        }
        stances.push(StanceVector {
            name: name.to_string(),
            vector,
            seeds: members.iter().cloned().collect(),
            seed_tweets,
        });
    }
    Ok(StanceVectorSet { stances })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserStanceProfile {
    pub user_id: String,
    /// Cosine similarity to each stance vector, in stance-set order.
    pub features: Vec<f64>,
    pub tendency: f64,
    pub label: String,
}

/// tendency = sim(choice) − sim(life); ties (tendency = 0) go to `choice`.
pub fn user_stance_profile(
    user_id: &str,
    user_vec: &SparseVector,
    stances: &StanceVectorSet,
    choice: &str,
    life: &str,
) -> Result<UserStanceProfile> {
    let ci = stances.position(choice)?;
    let li = stances.position(life)?;
    let features: Vec<f64> = stances
        .stances
        .iter()
        .map(|s| cosine_similarity(user_vec, &s.vector))
        .collect();
    let tendency = features[ci] - features[li];
    let label = if tendency >= 0.0 { choice } else { life };
    Ok(UserStanceProfile {
        user_id: user_id.to_string(),
        features,
        tendency,
        label: label.to_string(),
    })
}

/// Profiles every document against frozen stance vectors.
pub fn profile_users(
    docs: &[UserDocument],
    vocab: &Vocabulary,
    stances: &StanceVectorSet,
    choice: &str,
    life: &str,
) -> Result<Vec<UserStanceProfile>> {
    docs.iter()
        .map(|doc| {
            let v = tfidf_vectorize(&doc.token_counts, vocab, vocab.num_docs())?;
            user_stance_profile(&doc.user_id, &v, stances, choice, life)
        })
        .collect()
}

/// Euclidean distance between the stance features of two users.
pub fn view_gap(a: &UserStanceProfile, b: &UserStanceProfile) -> Result<f64> {
    view_gap_by(a, b, |x, y| {
        x.iter().zip(y).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt()
    })
}

/// View gap under a caller-supplied distance on the feature vectors.
pub fn view_gap_by<F>(a: &UserStanceProfile, b: &UserStanceProfile, distance: F) -> Result<f64>
where
    F: Fn(&[f64], &[f64]) -> f64,
{
    if a.features.len() != b.features.len() {
        return Err(Error::DimensionMismatch {
            left: a.features.len(),
            right: b.features.len(),
        });
    }
    Ok(distance(&a.features, &b.features))
}

/// CSV with header `user_id,f_<stance>...,tendency,label`.
pub fn write_profiles_csv<W: Write>(
    out: W,
    stance_names: &[&str],
    profiles: &[UserStanceProfile],
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["user_id".to_string()];
    header.extend(stance_names.iter().map(|n| format!("f_{n}")));
    header.push("tendency".into());
    header.push("label".into());
    w.write_record(&header).map_err(csv_err)?;
    for p in profiles {
        let mut row = vec![p.user_id.clone()];
        row.extend(p.features.iter().map(|f| f.to_string()));
        row.push(p.tendency.to_string());
        row.push(p.label.clone());
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io("<profiles>", e))?;
    Ok(())
}

pub fn read_profiles_csv<R: Read>(input: R) -> Result<(Vec<String>, Vec<UserStanceProfile>)> {
    let mut r = csv::Reader::from_reader(input);
    let header = r.headers().map_err(csv_err)?.clone();
    let n = header.len();
    if n < 3 || &header[0] != "user_id" || &header[n - 1] != "label" {
        return Err(Error::InvalidInput("unexpected profile CSV header".into()));
    }
    let names: Vec<String> = header
        .iter()
        .skip(1)
        .take(n - 3)
        .map(|h| h.trim_start_matches("f_").to_string())
        .collect();
    let mut profiles = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(csv_err)?;
        let num = |s: &str| {
            s.parse::<f64>()
                .map_err(|_| Error::InvalidInput(format!("bad number {s:?} in profile CSV")))
        };
        let features = (1..n - 2).map(|i| num(&rec[i])).collect::<Result<Vec<_>>>()?;
        profiles.push(UserStanceProfile {
            user_id: rec[0].to_string(),
            features,
            tendency: num(&rec[n - 2])?,
            label: rec[n - 1].to_string(),
        });
    }
    Ok((names, profiles))
}

fn csv_err(e: csv::Error) -> Error {
    Error::InvalidInput(format!("csv: {e}"))
}
