//! Tweet ingestion, the issue knowledge base and per-user documents.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use chrono::{DateTime, Utc};
use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::textproc::tokenize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TweetKind {
    Original,
    Retweet,
    Reply,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TweetRecord {
    pub tweet_id: String,
    pub user_id: String,
    pub text: String,
    pub created_at: DateTime<Utc>,
    pub kind: TweetKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reply_to_user: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub retweet_of_user: Option<String>,
    #[serde(default)]
    pub mentions: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub user_location: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub following_count: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub followers_count: Option<u64>,
}

impl TweetRecord {
    fn check(&self) -> std::result::Result<(), &'static str> {
        match self.kind {
            TweetKind::Reply if self.reply_to_user.is_none() => Err("reply without reply_to_user"),
            TweetKind::Retweet if self.retweet_of_user.is_none() => {
                Err("retweet without retweet_of_user")
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Default)]
pub struct LoadedTweets {
    pub tweets: Vec<TweetRecord>,
    /// Lines that failed to parse or violated a record invariant.
    pub skipped: usize,
    /// Lines dropped because their tweet_id was already seen.
    pub duplicates: usize,
}

/// Reads a JSON Lines dump. Malformed lines are skipped with a warning and
/// repeated tweet ids keep their first occurrence.
pub fn load_tweets(path: &Path) -> Result<LoadedTweets> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_tweets(BufReader::new(file), path)
}

pub fn parse_tweets<R: BufRead>(reader: R, origin: &Path) -> Result<LoadedTweets> {
    let mut out = LoadedTweets::default();
    let mut seen = HashSet::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(origin, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str::<TweetRecord>(&line)
            .map_err(|e| e.to_string())
            .and_then(|r| r.check().map(|_| r).map_err(str::to_string));
        match record {
            Ok(r) => {
                if seen.insert(r.tweet_id.clone()) {
                    out.tweets.push(r);
                } else {
                    out.duplicates += 1;
                }
            }
            Err(e) => {
                warn!("{}:{}: skipping malformed line: {e}", origin.display(), lineno + 1);
                out.skipped += 1;
            }
        }
    }
    Ok(out)
}

pub fn write_tweets<W: Write>(mut out: W, tweets: &[TweetRecord]) -> std::io::Result<()> {
    for t in tweets {
        serde_json::to_writer(&mut out, t)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// One place name per line, lowercased; blank lines and `#` comments ignored.
pub fn load_gazetteer(path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text
        .lines()
        .map(|l| l.trim().to_lowercase())
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .collect())
}

/// Keeps tweets whose self-reported location contains a gazetteer entry.
pub fn filter_by_location(tweets: &[TweetRecord], gazetteer: &[String]) -> Vec<TweetRecord> {
    tweets
        .iter()
        .filter(|t| {
            t.user_location.as_deref().is_some_and(|loc| {
                let loc = loc.to_lowercase();
                gazetteer.iter().any(|place| !place.is_empty() && loc.contains(place.as_str()))
            })
        })
        .cloned()
        .collect()
}

// ---------------------------------------------------------------------------
// knowledge base

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stance {
    pub name: String,
    pub keywords: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Issue {
    pub name: String,
    pub stances: Vec<Stance>,
    #[serde(default)]
    pub general_keywords: Vec<String>,
    #[serde(default)]
    pub related_hashtags: Vec<String>,
    #[serde(default)]
    pub relevant_accounts: Vec<String>,
    #[serde(default)]
    pub contingency_words: Vec<String>,
}

impl Issue {
    pub fn stance(&self, name: &str) -> Option<&Stance> {
        self.stances.iter().find(|s| s.name == name)
    }

    pub fn stance_names(&self) -> Vec<&str> {
        self.stances.iter().map(|s| s.name.as_str()).collect()
    }

    /// Every term tied to the issue: stance keywords, general keywords,
    /// related hashtags and contingency words.
    pub fn issue_terms(&self) -> BTreeSet<String> {
        self.stances
            .iter()
            .flat_map(|s| s.keywords.iter())
            .chain(&self.general_keywords)
            .chain(&self.related_hashtags)
            .chain(&self.contingency_words)
            .cloned()
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IssueKnowledgeBase {
    pub issues: Vec<Issue>,
}

impl IssueKnowledgeBase {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let kb: IssueKnowledgeBase = toml::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        kb.validate()?;
        Ok(kb)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("knowledge base serializes")
    }

    pub fn issue(&self, name: &str) -> Result<&Issue> {
        self.issues
            .iter()
            .find(|i| i.name == name)
            .ok_or_else(|| Error::Unknown {
                kind: "issue",
                name: name.to_string(),
            })
    }

    pub fn validate(&self) -> Result<()> {
        let mut stance_names = HashSet::new();
        for issue in &self.issues {
            if issue.stances.len() < 2 {
                return Err(Error::KnowledgeBase(format!(
                    "issue {:?} needs at least two stances",
                    issue.name
                )));
            }
            let mut owner: HashMap<&str, &str> = HashMap::new();
            for stance in &issue.stances {
                if !stance_names.insert(stance.name.as_str()) {
                    return Err(Error::KnowledgeBase(format!(
                        "stance name {:?} is used twice",
                        stance.name
                    )));
                }
                for kw in &stance.keywords {
                    if kw.to_lowercase() != *kw {
                        return Err(Error::KnowledgeBase(format!("keyword {kw:?} is not lowercase")));
                    }
                    if let Some(prev) = owner.insert(kw, &stance.name) {
                        if prev != stance.name {
                            return Err(Error::KnowledgeBase(format!(
                                "keyword {kw:?} belongs to both {prev:?} and {:?}",
                                stance.name
                            )));
                        }
                    }
                }
            }
            for kw in issue
                .general_keywords
                .iter()
                .chain(&issue.related_hashtags)
                .chain(&issue.contingency_words)
            {
                if kw.to_lowercase() != *kw {
                    return Err(Error::KnowledgeBase(format!("keyword {kw:?} is not lowercase")));
                }
            }
        }
        Ok(())
    }

    /// keyword → stance name, across all issues.
    fn keyword_owners(&self) -> HashMap<&str, &str> {
        self.issues
            .iter()
            .flat_map(|i| &i.stances)
            .flat_map(|s| s.keywords.iter().map(move |k| (k.as_str(), s.name.as_str())))
            .collect()
    }
}

// ---------------------------------------------------------------------------
// user documents

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserDocument {
    pub user_id: String,
    pub token_counts: BTreeMap<String, u32>,
    pub num_tweets: usize,
    pub stance_keyword_hits: BTreeMap<String, u32>,
}

impl UserDocument {
    pub fn new(user_id: impl Into<String>) -> Self {
        UserDocument {
            user_id: user_id.into(),
            token_counts: BTreeMap::new(),
            num_tweets: 0,
            stance_keyword_hits: BTreeMap::new(),
        }
    }

    pub fn hits(&self, stance: &str) -> u32 {
        self.stance_keyword_hits.get(stance).copied().unwrap_or(0)
    }

    pub fn len(&self) -> u64 {
        self.token_counts.values().map(|&c| c as u64).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.token_counts.is_empty()
    }
}

/// Concatenates each user's originals and retweets (and replies when
/// `include_replies`) into one bag of tokens. Tweets that tokenize to
/// nothing do not count. Output is sorted by user id.
pub fn build_user_documents(
    tweets: &[TweetRecord],
    kb: &IssueKnowledgeBase,
    include_replies: bool,
) -> Vec<UserDocument> {
    let owners = kb.keyword_owners();
    let mut docs: BTreeMap<&str, UserDocument> = BTreeMap::new();
    for tweet in tweets {
        if tweet.kind == TweetKind::Reply && !include_replies {
            continue;
        }
        let tokens = tokenize(&tweet.text);
        if tokens.is_empty() {
            continue;
        }
        let doc = docs
            .entry(tweet.user_id.as_str())
            .or_insert_with(|| UserDocument::new(tweet.user_id.clone()));
        doc.num_tweets += 1;
        for token in tokens {
            if let Some(stance) = owners.get(token.as_str()) {
                *doc.stance_keyword_hits.entry(stance.to_string()).or_default() += 1;
            }
            *doc.token_counts.entry(token).or_default() += 1;
        }
    }
    docs.into_values().collect()
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RegularUsers {
    pub kept: BTreeSet<String>,
    pub over_threshold: usize,
    pub missing_counts: usize,
}

/// Users following fewer than `max_degree` accounts and followed by fewer
/// than `max_degree`. Counts come from the user's latest tweet that carries
/// both; users without such a tweet are excluded and counted.
pub fn select_regular_users(
    docs: &[UserDocument],
    tweets: &[TweetRecord],
    max_degree: u64,
) -> RegularUsers {
    let mut latest: HashMap<&str, (DateTime<Utc>, u64, u64)> = HashMap::new();
    for t in tweets {
        let (Some(following), Some(followers)) = (t.following_count, t.followers_count) else {
            continue;
        };
        let entry = latest
            .entry(t.user_id.as_str())
            .or_insert((t.created_at, following, followers));
        if t.created_at > entry.0 {
            *entry = (t.created_at, following, followers);
        }
    }
    let mut out = RegularUsers::default();
    for doc in docs {
        match latest.get(doc.user_id.as_str()) {
            None => out.missing_counts += 1,
            Some(&(_, following, followers)) => {
                if following < max_degree && followers < max_degree {
                    out.kept.insert(doc.user_id.clone());
                } else {
                    out.over_threshold += 1;
                }
            }
        }
    }
    out
}
