//! Tokenization, vocabulary and TF-IDF vectors.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::corpus::UserDocument;
use crate::error::{Error, Result};

/// Lowercase tokens. Hashtags survive as one token with their leading `#`;
/// URLs and `@mentions` are dropped; everything else splits on characters
/// that are neither letters nor digits.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    for chunk in text.split_whitespace() {
        let lower = chunk.to_lowercase();
        if lower.starts_with("http://") || lower.starts_with("https://") || lower.starts_with("www.")
        {
            continue;
        }
        let chars: Vec<char> = lower.chars().collect();
        let mut i = 0;
        while i < chars.len() {
            let c = chars[i];
            if c == '#' || c == '@' {
                let start = i + 1;
                let mut j = start;
                while j < chars.len() && (chars[j].is_alphanumeric() || chars[j] == '_') {
                    j += 1;
                }
                if c == '#' && j > start {
                    let mut tag = String::from("#");
                    tag.extend(&chars[start..j]);
                    tokens.push(tag);
                }
                i = j.max(i + 1);
            } else if c.is_alphanumeric() {
                let start = i;
                while i < chars.len() && chars[i].is_alphanumeric() {
                    i += 1;
                }
                tokens.push(chars[start..i].iter().collect());
            } else {
                i += 1;
            }
        }
    }
    tokens
}

/// Dense token index with per-token document frequency. Tokens are indexed
/// in lexicographic order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    doc_freq: Vec<usize>,
    index: HashMap<String, usize>,
    num_docs: usize,
}

impl Vocabulary {
    /// Builds from `(token, df)` pairs; sorts and indexes them.
    pub fn from_entries(
        entries: impl IntoIterator<Item = (String, usize)>,
        num_docs: usize,
    ) -> Self {
        let sorted: BTreeMap<String, usize> = entries.into_iter().collect();
        let (tokens, doc_freq): (Vec<_>, Vec<_>) = sorted.into_iter().unzip();
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Vocabulary {
            tokens,
            doc_freq,
            index,
            num_docs,
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Number of user documents the frequencies were counted over (|U|).
    pub fn num_docs(&self) -> usize {
        self.num_docs
    }

    pub fn index_of(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn token(&self, index: usize) -> &str {
        &self.tokens[index]
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn doc_freq(&self, index: usize) -> usize {
        self.doc_freq[index]
    }

    /// Line format: a `#num_docs\t<n>` header, then `token\tindex\tdf` per line.
    pub fn write_to<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "#num_docs\t{}", self.num_docs)?;
        for (i, (tok, df)) in self.tokens.iter().zip(&self.doc_freq).enumerate() {
            writeln!(out, "{tok}\t{i}\t{df}")?;
        }
        Ok(())
    }

    pub fn read_from<R: BufRead>(input: R) -> Result<Self> {
        let mut num_docs = None;
        let mut entries = Vec::new();
        for (lineno, line) in input.lines().enumerate() {
            let line = line.map_err(|e| Error::io("<vocabulary>", e))?;
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            let bad = || Error::InvalidInput(format!("vocabulary line {}: {line:?}", lineno + 1));
            if fields[0] == "#num_docs" && lineno == 0 {
                num_docs = Some(fields.get(1).and_then(|v| v.parse().ok()).ok_or_else(bad)?);
                continue;
            }
            if fields.len() != 3 {
                return Err(bad());
            }
            let index: usize = fields[1].parse().map_err(|_| bad())?;
            let df: usize = fields[2].parse().map_err(|_| bad())?;
            if index != entries.len() {
                return Err(bad());
            }
            entries.push((fields[0].to_string(), df));
        }
        let num_docs = num_docs
            .ok_or_else(|| Error::InvalidInput("vocabulary is missing the #num_docs header".into()))?;
        let vocab = Vocabulary::from_entries(entries.iter().cloned(), num_docs);
        if vocab.tokens.len() != entries.len()
            || vocab.tokens.iter().zip(&entries).any(|(a, (b, _))| a != b)
        {
            return Err(Error::InvalidInput(
                "vocabulary tokens are not unique and sorted".into(),
            ));
        }
        Ok(vocab)
    }
}

/// Keeps tokens occurring in at least `min_doc_freq` user documents.
pub fn build_vocabulary(docs: &[UserDocument], min_doc_freq: usize) -> Result<Vocabulary> {
    if docs.is_empty() {
        return Err(Error::InvalidInput("no documents to build a vocabulary from".into()));
    }
    let mut df: HashMap<&str, usize> = HashMap::new();
    for doc in docs {
        for token in doc.token_counts.keys() {
            *df.entry(token.as_str()).or_default() += 1;
        }
    }
    let vocab = Vocabulary::from_entries(
        df.into_iter()
            .filter(|&(_, n)| n >= min_doc_freq.max(1))
            .map(|(t, n)| (t.to_string(), n)),
        docs.len(),
    );
    if vocab.is_empty() {
        return Err(Error::EmptyVocabulary {
            documents: docs.len(),
            min_doc_freq,
        });
    }
    Ok(vocab)
}

/// Sparse nonnegative vector with strictly increasing indices.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SparseVector {
    entries: Vec<(usize, f64)>,
}

impl SparseVector {
    /// Sorts, merges duplicate indices and drops non-positive weights.
    pub fn from_pairs(pairs: impl IntoIterator<Item = (usize, f64)>) -> Self {
        let mut merged: BTreeMap<usize, f64> = BTreeMap::new();
        for (i, w) in pairs {
            *merged.entry(i).or_default() += w;
        }
        SparseVector {
            entries: merged.into_iter().filter(|&(_, w)| w > 0.0).collect(),
        }
    }

    pub fn entries(&self) -> &[(usize, f64)] {
        &self.entries
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn get(&self, index: usize) -> f64 {
        self.entries
            .binary_search_by_key(&index, |&(i, _)| i)
            .map(|pos| self.entries[pos].1)
            .unwrap_or(0.0)
    }

    pub fn norm(&self) -> f64 {
        self.entries.iter().map(|(_, w)| w * w).sum::<f64>().sqrt()
    }

    pub fn scale(&self, factor: f64) -> Self {
        SparseVector::from_pairs(self.entries.iter().map(|&(i, w)| (i, w * factor)))
    }

    pub fn dot(&self, other: &SparseVector) -> f64 {
        let (mut i, mut j, mut acc) = (0, 0, 0.0);
        let (a, b) = (&self.entries, &other.entries);
        while i < a.len() && j < b.len() {
            match a[i].0.cmp(&b[j].0) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    acc += a[i].1 * b[j].1;
                    i += 1;
                    j += 1;
                }
            }
        }
        acc
    }

    /// `idx:weight` pairs separated by spaces.
    pub fn to_line(&self) -> String {
        let mut s = String::new();
        for (n, (i, w)) in self.entries.iter().enumerate() {
            if n > 0 {
                s.push(' ');
            }
            let _ = write!(s, "{i}:{w}");
        }
        s
    }

    pub fn parse_line(line: &str) -> Result<Self> {
        let mut pairs = Vec::new();
        for item in line.split_whitespace() {
            let (i, w) = item
                .split_once(':')
                .ok_or_else(|| Error::InvalidInput(format!("bad vector entry {item:?}")))?;
            let i: usize = i
                .parse()
                .map_err(|_| Error::InvalidInput(format!("bad vector index {i:?}")))?;
            let w: f64 = w
                .parse()
                .map_err(|_| Error::InvalidInput(format!("bad vector weight {w:?}")))?;
            pairs.push((i, w));
        }
        Ok(SparseVector::from_pairs(pairs))
    }
}

/// TF-IDF with raw term frequency and log2 inverse document frequency.
/// Tokens missing from the vocabulary are ignored.
pub fn tfidf_vectorize(
    token_counts: &BTreeMap<String, u32>,
    vocab: &Vocabulary,
    num_docs: usize,
) -> Result<SparseVector> {
    let mut pairs = Vec::with_capacity(token_counts.len());
    for (token, &count) in token_counts {
        let Some(idx) = vocab.index_of(token) else {
            continue;
        };
        let df = vocab.doc_freq(idx);
        if df == 0 || df > num_docs {
            return Err(Error::CorruptVocabulary {
                token: token.clone(),
                df,
                num_docs,
            });
        }
        let weight = count as f64 * (num_docs as f64 / df as f64).log2();
        pairs.push((idx, weight));
    }
    Ok(SparseVector::from_pairs(pairs))
}

/// Cosine similarity; zero when either vector has zero norm.
pub fn cosine_similarity(a: &SparseVector, b: &SparseVector) -> f64 {
    let (na, nb) = (a.norm(), b.norm());
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    (a.dot(b) / (na * nb)).clamp(0.0, 1.0)
}

/// Distinct vocabulary indices of `keywords` (unknown words skipped).
pub fn keyword_indices<'a>(
    vocab: &Vocabulary,
    keywords: impl IntoIterator<Item = &'a str>,
) -> BTreeSet<usize> {
    keywords
        .into_iter()
        .filter_map(|k| vocab.index_of(k))
        .collect()
}
