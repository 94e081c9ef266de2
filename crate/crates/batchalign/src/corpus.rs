//! Language-parallel topic corpora: loading, validation, synthesis, and the
//! translation-noise ablation.
//!
//! A corpus holds a set of topics, each with one gold document and two queries
//! per language, plus per-(language, domain) distractor pools. Corpora are
//! immutable after construction and safe to share across threads.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::Deserialize;
use thiserror::Error;

use crate::rng::{mix_seed, rng_from};

/// Lowercase ASCII language tag, e.g. `"en"` or a synthetic `"p1"`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, serde::Serialize, Deserialize)]
#[serde(transparent)]
pub struct LanguageId(String);

impl LanguageId {
    pub fn new(code: &str) -> Result<Self, CorpusError> {
        if code.is_empty()
            || !code
                .bytes()
                .all(|b| b.is_ascii_lowercase() || b.is_ascii_digit())
        {
            return Err(CorpusError::InvalidConfig(format!(
                "language code {code:?} must be non-empty lowercase ASCII"
            )));
        }
        Ok(LanguageId(code.to_string()))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for LanguageId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// One document in one language.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, Deserialize)]
pub struct Document {
    pub doc_id: String,
    pub title: String,
    pub body: String,
    pub domain: String,
}

/// One topic's gold documents and queries in every language.
#[derive(Debug, Clone)]
pub struct ParallelTopic {
    pub topic_id: String,
    pub domain: String,
    pub gold_docs: BTreeMap<LanguageId, Document>,
    /// Query text per language, for query indices 0 and 1.
    pub queries: [BTreeMap<LanguageId, String>; 2],
}

/// A full language-parallel corpus.
#[derive(Debug, Clone)]
pub struct ParallelCorpus {
    pub languages: Vec<LanguageId>,
    pub anchor: LanguageId,
    pub topics: Vec<ParallelTopic>,
    /// Distractor pools keyed by (language, domain); doc_id membership and
    /// order are identical across languages.
    pub distractors: BTreeMap<LanguageId, BTreeMap<String, Vec<Document>>>,
}

pub const MIN_POOL_SIZE: usize = 9;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("line {line}: malformed record: {detail}")]
    MalformedRecord { line: usize, detail: String },
    #[error("topic {topic_id}: missing language {language}")]
    MissingLanguage { topic_id: String, language: String },
    #[error("duplicate id {id}")]
    DuplicateId { id: String },
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("corpus invariant violated: {0}")]
    InvariantViolation(Violation),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// One parallelism violation found by [`validate_parallelism`].
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, Deserialize)]
pub struct Violation {
    pub topic_id: Option<String>,
    pub language: Option<LanguageId>,
    pub rule: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "topic={} language={} rule={}",
            self.topic_id.as_deref().unwrap_or("-"),
            self.language.as_ref().map(|l| l.as_str()).unwrap_or("-"),
            self.rule
        )
    }
}

// ---------------------------------------------------------------------------
// File format: UTF-8 lines, one flat JSON record each, "kind" discriminator.
// ---------------------------------------------------------------------------

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRecord {
    kind: String,
    code: Option<String>,
    topic_id: Option<String>,
    domain: Option<String>,
    query_index: Option<u8>,
    language: Option<String>,
    doc_id: Option<String>,
    title: Option<String>,
    body: Option<String>,
}

fn require(field: Option<String>, name: &str, line: usize) -> Result<String, CorpusError> {
    field.ok_or_else(|| CorpusError::MalformedRecord {
        line,
        detail: format!("missing field {name:?}"),
    })
}

/// Loads a corpus from a line-delimited record file, enforcing all corpus
/// invariants. The first `language` record is the anchor.
pub fn load_corpus(path: &Path) -> Result<ParallelCorpus, CorpusError> {
    let file = std::fs::File::open(path)?;
    let reader = BufReader::new(file);

    let mut languages: Vec<LanguageId> = Vec::new();
    let mut topic_order: Vec<String> = Vec::new();
    let mut topic_domain: BTreeMap<String, String> = BTreeMap::new();
    let mut gold: BTreeMap<String, BTreeMap<LanguageId, Document>> = BTreeMap::new();
    let mut queries: BTreeMap<String, [BTreeMap<LanguageId, String>; 2]> = BTreeMap::new();
    let mut distractors: BTreeMap<LanguageId, BTreeMap<String, Vec<Document>>> = BTreeMap::new();
    // doc_id uniqueness is per language
    let mut seen_docs: BTreeSet<(LanguageId, String)> = BTreeSet::new();

    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: RawRecord =
            serde_json::from_str(&line).map_err(|e| CorpusError::MalformedRecord {
                line: lineno,
                detail: e.to_string(),
            })?;
        match rec.kind.as_str() {
            "language" => {
                let code = require(rec.code, "code", lineno)?;
                let lang = LanguageId::new(&code).map_err(|_| CorpusError::MalformedRecord {
                    line: lineno,
                    detail: format!("bad language code {code:?}"),
                })?;
                if languages.contains(&lang) {
                    return Err(CorpusError::DuplicateId { id: code });
                }
                languages.push(lang);
            }
            "topic" => {
                let topic_id = require(rec.topic_id, "topic_id", lineno)?;
                let domain = require(rec.domain, "domain", lineno)?;
                if topic_domain.contains_key(&topic_id) {
                    return Err(CorpusError::DuplicateId { id: topic_id });
                }
                topic_order.push(topic_id.clone());
                topic_domain.insert(topic_id, domain);
            }
            "query" => {
                let topic_id = require(rec.topic_id, "topic_id", lineno)?;
                let qi = rec.query_index.ok_or_else(|| CorpusError::MalformedRecord {
                    line: lineno,
                    detail: "missing field \"query_index\"".into(),
                })?;
                if qi > 1 {
                    return Err(CorpusError::MalformedRecord {
                        line: lineno,
                        detail: format!("query_index {qi} out of range (0..=1)"),
                    });
                }
                let language = require(rec.language, "language", lineno)?;
                let body = require(rec.body, "body", lineno)?;
                let lang = LanguageId::new(&language).map_err(|_| CorpusError::MalformedRecord {
                    line: lineno,
                    detail: format!("bad language code {language:?}"),
                })?;
                let slot = queries.entry(topic_id).or_default();
                slot[qi as usize].insert(lang, body);
            }
            "gold_doc" | "distractor_doc" => {
                let language = require(rec.language, "language", lineno)?;
                let lang = LanguageId::new(&language).map_err(|_| CorpusError::MalformedRecord {
                    line: lineno,
                    detail: format!("bad language code {language:?}"),
                })?;
                let doc_id = require(rec.doc_id, "doc_id", lineno)?;
                let title = require(rec.title, "title", lineno)?;
                let body = require(rec.body, "body", lineno)?;
                if title.is_empty() || body.is_empty() {
                    return Err(CorpusError::MalformedRecord {
                        line: lineno,
                        detail: "title and body must be non-empty".into(),
                    });
                }
                if !seen_docs.insert((lang.clone(), doc_id.clone())) {
                    return Err(CorpusError::DuplicateId { id: doc_id });
                }
                if rec.kind == "gold_doc" {
                    let topic_id = require(rec.topic_id, "topic_id", lineno)?;
                    let domain = topic_domain.get(&topic_id).cloned().ok_or_else(|| {
                        CorpusError::MalformedRecord {
                            line: lineno,
                            detail: format!("gold_doc references unknown topic {topic_id:?}"),
                        }
                    })?;
                    gold.entry(topic_id).or_default().insert(
                        lang,
                        Document {
                            doc_id,
                            title,
                            body,
                            domain,
                        },
                    );
                } else {
                    let domain = require(rec.domain, "domain", lineno)?;
                    distractors
                        .entry(lang)
                        .or_default()
                        .entry(domain.clone())
                        .or_default()
                        .push(Document {
                            doc_id,
                            title,
                            body,
                            domain,
                        });
                }
            }
            other => {
                return Err(CorpusError::MalformedRecord {
                    line: lineno,
                    detail: format!("unknown kind {other:?}"),
                });
            }
        }
    }

    if languages.is_empty() {
        return Err(CorpusError::InvalidConfig("no language records".into()));
    }
    let anchor = languages[0].clone();

    // Assemble topics; missing coverage is a typed load error.
    let mut topics = Vec::with_capacity(topic_order.len());
    for topic_id in &topic_order {
        let domain = topic_domain[topic_id].clone();
        let gold_docs = gold.remove(topic_id).unwrap_or_default();
        let query_maps = queries.remove(topic_id).unwrap_or_default();
        for lang in &languages {
            if !gold_docs.contains_key(lang) {
                return Err(CorpusError::MissingLanguage {
                    topic_id: topic_id.clone(),
                    language: lang.as_str().to_string(),
                });
            }
            for qmap in &query_maps {
                if !qmap.contains_key(lang) {
                    return Err(CorpusError::MissingLanguage {
                        topic_id: topic_id.clone(),
                        language: lang.as_str().to_string(),
                    });
                }
            }
        }
        topics.push(ParallelTopic {
            topic_id: topic_id.clone(),
            domain,
            gold_docs,
            queries: query_maps,
        });
    }

    let corpus = ParallelCorpus {
        languages,
        anchor,
        topics,
        distractors,
    };
    if let Some(v) = validate_parallelism(&corpus).into_iter().next() {
        // Coverage errors were caught above; anything left (pool sizes,
        // domain mismatches) still rejects the load.
        return Err(CorpusError::InvariantViolation(v));
    }
    Ok(corpus)
}

/// Writes the corpus in canonical line order: languages, then topics (each
/// followed by its gold docs and queries), then distractor pools.
pub fn write_corpus(corpus: &ParallelCorpus, path: &Path) -> Result<(), CorpusError> {
    let mut out = Vec::new();
    for lang in &corpus.languages {
        writeln!(
            out,
            "{}",
            serde_json::json!({"kind": "language", "code": lang.as_str()})
        )?;
    }
    for topic in &corpus.topics {
        writeln!(
            out,
            "{}",
            serde_json::json!({"kind": "topic", "topic_id": topic.topic_id, "domain": topic.domain})
        )?;
        for lang in &corpus.languages {
            let doc = &topic.gold_docs[lang];
            writeln!(
                out,
                "{}",
                serde_json::json!({
                    "kind": "gold_doc",
                    "topic_id": topic.topic_id,
                    "language": lang.as_str(),
                    "doc_id": doc.doc_id,
                    "title": doc.title,
                    "body": doc.body,
                })
            )?;
        }
        for (qi, qmap) in topic.queries.iter().enumerate() {
            for lang in &corpus.languages {
                writeln!(
                    out,
                    "{}",
                    serde_json::json!({
                        "kind": "query",
                        "topic_id": topic.topic_id,
                        "query_index": qi,
                        "language": lang.as_str(),
                        "body": qmap[lang],
                    })
                )?;
            }
        }
    }
    for (lang, by_domain) in &corpus.distractors {
        for docs in by_domain.values() {
            for doc in docs {
                writeln!(
                    out,
                    "{}",
                    serde_json::json!({
                        "kind": "distractor_doc",
                        "language": lang.as_str(),
                        "domain": doc.domain,
                        "doc_id": doc.doc_id,
                        "title": doc.title,
                        "body": doc.body,
                    })
                )?;
            }
        }
    }
    crate::manifest::write_atomic(path, &out)?;
    Ok(())
}

/// Checks every parallelism invariant and reports all violations. Never
/// aborts; an empty list means the corpus is structurally sound.
pub fn validate_parallelism(corpus: &ParallelCorpus) -> Vec<Violation> {
    let mut violations = Vec::new();
    let mut push = |topic: Option<&str>, lang: Option<&LanguageId>, rule: String| {
        violations.push(Violation {
            topic_id: topic.map(str::to_string),
            language: lang.cloned(),
            rule,
        });
    };

    if !corpus.languages.contains(&corpus.anchor) {
        push(None, Some(&corpus.anchor), "anchor not in language list".into());
    }

    let mut domains = BTreeSet::new();
    for topic in &corpus.topics {
        domains.insert(topic.domain.clone());
        for lang in &corpus.languages {
            match topic.gold_docs.get(lang) {
                None => push(
                    Some(&topic.topic_id),
                    Some(lang),
                    "missing gold document".into(),
                ),
                Some(doc) => {
                    if doc.domain != topic.domain {
                        push(
                            Some(&topic.topic_id),
                            Some(lang),
                            format!(
                                "gold doc domain {:?} differs from topic domain {:?}",
                                doc.domain, topic.domain
                            ),
                        );
                    }
                    if doc.title.is_empty() || doc.body.is_empty() {
                        push(
                            Some(&topic.topic_id),
                            Some(lang),
                            "gold doc title/body empty".into(),
                        );
                    }
                }
            }
            for (qi, qmap) in topic.queries.iter().enumerate() {
                if !qmap.contains_key(lang) {
                    push(
                        Some(&topic.topic_id),
                        Some(lang),
                        format!("missing query {qi} translation"),
                    );
                }
            }
        }
    }

    // Pool checks: every (language, domain) pool needs at least MIN_POOL_SIZE
    // docs, identical doc_id membership and order across languages.
    let mut reference_ids: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    if let Some(by_domain) = corpus.distractors.get(&corpus.anchor) {
        for (domain, docs) in by_domain {
            reference_ids.insert(domain, docs.iter().map(|d| d.doc_id.as_str()).collect());
        }
    }
    for domain in &domains {
        for lang in &corpus.languages {
            let docs = corpus
                .distractors
                .get(lang)
                .and_then(|m| m.get(domain.as_str()));
            match docs {
                None => push(None, Some(lang), format!("no distractor pool for domain {domain:?}")),
                Some(docs) => {
                    if docs.len() < MIN_POOL_SIZE {
                        push(
                            None,
                            Some(lang),
                            format!(
                                "distractor pool for domain {domain:?} has {} docs, need >= {MIN_POOL_SIZE}",
                                docs.len()
                            ),
                        );
                    }
                    if let Some(expected) = reference_ids.get(domain.as_str()) {
                        let ids: Vec<&str> = docs.iter().map(|d| d.doc_id.as_str()).collect();
                        if &ids != expected {
                            push(
                                None,
                                Some(lang),
                                format!("distractor pool membership differs from anchor in domain {domain:?}"),
                            );
                        }
                    }
                }
            }
        }
    }
    violations
}

// ---------------------------------------------------------------------------
// Synthetic corpora
// ---------------------------------------------------------------------------

const DOMAINS: [&str; 4] = ["advertising", "marketing", "science", "technology"];
const QUERY_MARKERS: [&str; 2] = ["qa", "qb"];
/// Gold documents carry this answer-bearing token (per language, via the
/// bijective mapping); distractors never do. Relevance is decidable from
/// text alone, which the probe task needs.
const ANSWER_CUE: &str = "ans";
/// Shared connective text. Documents keep a fixed skeleton so that the
/// informative tokens (topic words, markers, the answer cue) carry the
/// content variance.
const FILLERS: [&str; 4] = ["w00", "w01", "w02", "w03"];

/// Maps anchor-language text into pseudo-language `index` by prefixing every
/// token; index 0 is the identity.
fn map_text(base: &str, index: usize) -> String {
    if index == 0 {
        return base.to_string();
    }
    base.split_whitespace()
        .map(|t| format!("L{index}:{t}"))
        .collect::<Vec<_>>()
        .join(" ")
}

/// Generates a corpus of pseudo-languages "p0".."pN" where every non-anchor
/// language is a bijective token relabeling of the anchor text, so semantic
/// equivalence holds by construction. Deterministic in `seed`.
pub fn generate_synthetic_corpus(
    seed: u64,
    n_topics: usize,
    n_languages: usize,
    pool_per_domain: usize,
) -> Result<ParallelCorpus, CorpusError> {
    if n_topics < 1 {
        return Err(CorpusError::InvalidConfig("n_topics must be >= 1".into()));
    }
    if n_languages < 2 {
        return Err(CorpusError::InvalidConfig("n_languages must be >= 2".into()));
    }
    if pool_per_domain < MIN_POOL_SIZE {
        return Err(CorpusError::InvalidConfig(format!(
            "pool_per_domain must be >= {MIN_POOL_SIZE}"
        )));
    }

    let languages: Vec<LanguageId> = (0..n_languages)
        .map(|i| LanguageId::new(&format!("p{i}")).expect("synthetic codes are valid"))
        .collect();

    let mut topics = Vec::with_capacity(n_topics);
    for t in 0..n_topics {
        let mut rng = rng_from(mix_seed(seed, &format!("topic/{t}")));
        let topic_id = format!("t{t:03}");
        let domain = DOMAINS[t % DOMAINS.len()].to_string();
        let topic_word = format!("k{t:03}");

        // The gold document states the answer: topic word plus the answer
        // cue, padded with the fixed connective skeleton. The cue slot moves
        // per topic so position alone is uninformative.
        let title = format!("{topic_word} {ANSWER_CUE}");
        let mut body_tokens: Vec<&str> = vec![FILLERS[0], FILLERS[1], FILLERS[2]];
        body_tokens.insert(rng.gen_range(0..=body_tokens.len()), ANSWER_CUE);
        body_tokens.insert(rng.gen_range(0..=body_tokens.len()), &topic_word);
        let body = body_tokens.join(" ");

        let mut gold_docs = BTreeMap::new();
        for (i, lang) in languages.iter().enumerate() {
            gold_docs.insert(
                lang.clone(),
                Document {
                    doc_id: format!("g{t:03}"),
                    title: map_text(&title, i),
                    body: map_text(&body, i),
                    domain: domain.clone(),
                },
            );
        }

        let mut queries: [BTreeMap<LanguageId, String>; 2] = Default::default();
        for (qi, marker) in QUERY_MARKERS.iter().enumerate() {
            let base = format!("{marker} {topic_word}");
            for (i, lang) in languages.iter().enumerate() {
                queries[qi].insert(lang.clone(), map_text(&base, i));
            }
        }

        topics.push(ParallelTopic {
            topic_id,
            domain,
            gold_docs,
            queries,
        });
    }

    let mut distractors: BTreeMap<LanguageId, BTreeMap<String, Vec<Document>>> = BTreeMap::new();
    for (d, domain) in DOMAINS.iter().enumerate() {
        for j in 0..pool_per_domain {
            let mut rng = rng_from(mix_seed(seed, &format!("pool/{domain}/{j}")));
            let marker = format!("x{d}{j:02}");
            let title = format!("{marker} {}", FILLERS[3]);
            let mut body_tokens: Vec<&str> = vec![FILLERS[0], FILLERS[1], FILLERS[2]];
            body_tokens.insert(rng.gen_range(0..=body_tokens.len()), &marker);
            body_tokens.insert(rng.gen_range(0..=body_tokens.len()), &marker);
            let body = body_tokens.join(" ");
            for (i, lang) in languages.iter().enumerate() {
                distractors
                    .entry(lang.clone())
                    .or_default()
                    .entry(domain.to_string())
                    .or_default()
                    .push(Document {
                        doc_id: format!("x{d}{j:02}"),
                        title: map_text(&title, i),
                        body: map_text(&body, i),
                        domain: domain.to_string(),
                    });
            }
        }
    }

    Ok(ParallelCorpus {
        anchor: languages[0].clone(),
        languages,
        topics,
        distractors,
    })
}

// ---------------------------------------------------------------------------
// Translation noise (machine-translation ablation)
// ---------------------------------------------------------------------------

/// Replaces each non-anchor token with a different in-language token with
/// probability `rate`. Anchor text, ids, and domains are untouched.
/// Deterministic in `seed`.
pub fn apply_translation_noise(
    corpus: &ParallelCorpus,
    rate: f64,
    seed: u64,
) -> Result<ParallelCorpus, CorpusError> {
    if !(0.0..=1.0).contains(&rate) {
        return Err(CorpusError::InvalidConfig(format!(
            "noise rate {rate} outside [0, 1]"
        )));
    }
    let mut noised = corpus.clone();
    if rate == 0.0 {
        return Ok(noised);
    }

    // Per-language token inventory, collected over all of that language's text.
    let mut inventory: BTreeMap<LanguageId, Vec<String>> = BTreeMap::new();
    for lang in &corpus.languages {
        if *lang == corpus.anchor {
            continue;
        }
        let mut tokens = BTreeSet::new();
        for topic in &corpus.topics {
            let doc = &topic.gold_docs[lang];
            tokens.extend(doc.title.split_whitespace().map(str::to_string));
            tokens.extend(doc.body.split_whitespace().map(str::to_string));
            for qmap in &topic.queries {
                tokens.extend(qmap[lang].split_whitespace().map(str::to_string));
            }
        }
        if let Some(by_domain) = corpus.distractors.get(lang) {
            for docs in by_domain.values() {
                for doc in docs {
                    tokens.extend(doc.title.split_whitespace().map(str::to_string));
                    tokens.extend(doc.body.split_whitespace().map(str::to_string));
                }
            }
        }
        inventory.insert(lang.clone(), tokens.into_iter().collect());
    }

    let corrupt = |text: &str, rng: &mut rand_chacha::ChaCha8Rng, pool: &[String]| -> String {
        text.split_whitespace()
            .map(|tok| {
                if rng.gen::<f64>() < rate {
                    // Resample until the token actually changes, so rate=1
                    // means every token differs from the original.
                    loop {
                        let pick = pool.choose(rng).expect("inventory non-empty");
                        if pick != tok || pool.len() == 1 {
                            return pick.clone();
                        }
                    }
                } else {
                    tok.to_string()
                }
            })
            .collect::<Vec<_>>()
            .join(" ")
    };

    for lang in &corpus.languages {
        if *lang == corpus.anchor {
            continue;
        }
        let pool = &inventory[lang];
        let mut rng = rng_from(mix_seed(seed, &format!("noise/{}", lang.as_str())));
        for topic in &mut noised.topics {
            let doc = topic.gold_docs.get_mut(lang).expect("validated corpus");
            doc.title = corrupt(&doc.title, &mut rng, pool);
            doc.body = corrupt(&doc.body, &mut rng, pool);
            for qmap in &mut topic.queries {
                let q = qmap.get_mut(lang).expect("validated corpus");
                *q = corrupt(q, &mut rng, pool);
            }
        }
        if let Some(by_domain) = noised.distractors.get_mut(lang) {
            for docs in by_domain.values_mut() {
                for doc in docs {
                    doc.title = corrupt(&doc.title, &mut rng, pool);
                    doc.body = corrupt(&doc.body, &mut rng, pool);
                }
            }
        }
    }
    Ok(noised)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_corpus() -> ParallelCorpus {
        generate_synthetic_corpus(7, 8, 3, 10).unwrap()
    }

    #[test]
    fn synthetic_corpus_validates() {
        let corpus = tiny_corpus();
        assert_eq!(corpus.languages.len(), 3);
        assert_eq!(corpus.topics.len(), 8);
        assert_eq!(corpus.anchor.as_str(), "p0");
        assert!(validate_parallelism(&corpus).is_empty());
    }

    #[test]
    fn synthetic_corpus_is_deterministic() {
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a.jsonl");
        let b = dir.path().join("b.jsonl");
        write_corpus(&tiny_corpus(), &a).unwrap();
        write_corpus(&tiny_corpus(), &b).unwrap();
        assert_eq!(std::fs::read(a).unwrap(), std::fs::read(b).unwrap());
    }

    #[test]
    fn pseudo_language_mapping_is_bijective() {
        let corpus = tiny_corpus();
        let lang = LanguageId::new("p2").unwrap();
        for topic in &corpus.topics {
            let mapped = &topic.gold_docs[&lang].body;
            let recovered: Vec<&str> = mapped
                .split_whitespace()
                .map(|t| t.strip_prefix("L2:").expect("every token is prefixed"))
                .collect();
            assert_eq!(recovered.join(" "), topic.gold_docs[&corpus.anchor].body);
        }
    }

    #[test]
    fn roundtrip_is_identity_on_canonical_form() {
        let dir = tempfile::tempdir().unwrap();
        let first = dir.path().join("first.jsonl");
        let second = dir.path().join("second.jsonl");
        let corpus = tiny_corpus();
        write_corpus(&corpus, &first).unwrap();
        let loaded = load_corpus(&first).unwrap();
        write_corpus(&loaded, &second).unwrap();
        assert_eq!(
            std::fs::read(&first).unwrap(),
            std::fs::read(&second).unwrap()
        );
        assert_eq!(loaded.languages, corpus.languages);
        assert_eq!(loaded.topics.len(), corpus.topics.len());
    }

    #[test]
    fn load_rejects_missing_gold_language() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("corpus.jsonl");
        let mut corpus = tiny_corpus();
        let lang = LanguageId::new("p1").unwrap();
        corpus.topics[1].gold_docs.remove(&lang);
        // Writing requires full coverage, so emit records by hand.
        let mut out = String::new();
        for l in &corpus.languages {
            out.push_str(&format!("{}\n", serde_json::json!({"kind":"language","code":l.as_str()})));
        }
        let t = &corpus.topics[1];
        out.push_str(&format!(
            "{}\n",
            serde_json::json!({"kind":"topic","topic_id":t.topic_id,"domain":t.domain})
        ));
        for (l, d) in &t.gold_docs {
            out.push_str(&format!(
                "{}\n",
                serde_json::json!({"kind":"gold_doc","topic_id":t.topic_id,"language":l.as_str(),
                                   "doc_id":d.doc_id,"title":d.title,"body":d.body})
            ));
        }
        for (qi, qmap) in t.queries.iter().enumerate() {
            for (l, q) in qmap {
                out.push_str(&format!(
                    "{}\n",
                    serde_json::json!({"kind":"query","topic_id":t.topic_id,"query_index":qi,
                                       "language":l.as_str(),"body":q})
                ));
            }
        }
        std::fs::write(&path, out).unwrap();
        match load_corpus(&path) {
            Err(CorpusError::MissingLanguage { topic_id, language }) => {
                assert_eq!(topic_id, "t001");
                assert_eq!(language, "p1");
            }
            other => panic!("expected MissingLanguage, got {other:?}"),
        }
    }

    #[test]
    fn load_rejects_duplicate_doc_id() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("corpus.jsonl");
        let line = serde_json::json!({"kind":"language","code":"en"});
        let doc = serde_json::json!({"kind":"distractor_doc","language":"en","domain":"science",
                                     "doc_id":"d1","title":"a","body":"b"});
        std::fs::write(&path, format!("{line}\n{doc}\n{doc}\n")).unwrap();
        assert!(matches!(
            load_corpus(&path),
            Err(CorpusError::DuplicateId { .. })
        ));
    }

    #[test]
    fn load_rejects_unknown_keys() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("corpus.jsonl");
        std::fs::write(&path, "{\"kind\":\"language\",\"code\":\"en\",\"extra\":1}\n").unwrap();
        assert!(matches!(
            load_corpus(&path),
            Err(CorpusError::MalformedRecord { line: 1, .. })
        ));
    }

    #[test]
    fn validate_reports_small_pool() {
        let mut corpus = tiny_corpus();
        let lang = LanguageId::new("p1").unwrap();
        corpus
            .distractors
            .get_mut(&lang)
            .unwrap()
            .get_mut("science")
            .unwrap()
            .truncate(5);
        let violations = validate_parallelism(&corpus);
        assert!(violations
            .iter()
            .any(|v| v.language.as_ref() == Some(&lang) && v.rule.contains("need >= 9")));
    }

    #[test]
    fn validate_reports_missing_query_translation() {
        let mut corpus = tiny_corpus();
        let lang = LanguageId::new("p2").unwrap();
        corpus.topics[0].queries[1].remove(&lang);
        let violations = validate_parallelism(&corpus);
        assert_eq!(violations.len(), 1);
        assert_eq!(violations[0].topic_id.as_deref(), Some("t000"));
        assert!(violations[0].rule.contains("query 1"));
    }

    #[test]
    fn noise_rate_zero_is_identity() {
        let corpus = tiny_corpus();
        let noised = apply_translation_noise(&corpus, 0.0, 99).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a.jsonl");
        let b = dir.path().join("b.jsonl");
        write_corpus(&corpus, &a).unwrap();
        write_corpus(&noised, &b).unwrap();
        assert_eq!(std::fs::read(a).unwrap(), std::fs::read(b).unwrap());
    }

    #[test]
    fn noise_rate_one_replaces_every_non_anchor_token() {
        let corpus = tiny_corpus();
        let noised = apply_translation_noise(&corpus, 1.0, 99).unwrap();
        let lang = LanguageId::new("p1").unwrap();
        for (orig, new) in corpus.topics.iter().zip(&noised.topics) {
            // Anchor untouched, byte for byte.
            assert_eq!(
                orig.gold_docs[&corpus.anchor], new.gold_docs[&corpus.anchor]
            );
            let o = orig.gold_docs[&lang].body.split_whitespace();
            let n = new.gold_docs[&lang].body.split_whitespace();
            for (a, b) in o.zip(n) {
                assert_ne!(a, b, "rate=1 must replace every token");
            }
            assert_eq!(orig.topic_id, new.topic_id);
            assert_eq!(orig.domain, new.domain);
        }
    }

    #[test]
    fn noise_rate_concentrates_near_rate() {
        // Binomial concentration over a large synthetic corpus.
        let corpus = generate_synthetic_corpus(3, 200, 2, 12).unwrap();
        let noised = apply_translation_noise(&corpus, 0.1, 5).unwrap();
        let lang = LanguageId::new("p1").unwrap();
        let mut total = 0usize;
        let mut changed = 0usize;
        let mut count = |a: &str, b: &str| {
            for (x, y) in a.split_whitespace().zip(b.split_whitespace()) {
                total += 1;
                if x != y {
                    changed += 1;
                }
            }
        };
        for (orig, new) in corpus.topics.iter().zip(&noised.topics) {
            count(&orig.gold_docs[&lang].title, &new.gold_docs[&lang].title);
            count(&orig.gold_docs[&lang].body, &new.gold_docs[&lang].body);
            for (qo, qn) in orig.queries.iter().zip(&new.queries) {
                count(&qo[&lang], &qn[&lang]);
            }
        }
        assert!(total > 2000, "need enough tokens for concentration");
        let fraction = changed as f64 / total as f64;
        assert!(
            (fraction - 0.1).abs() < 0.01,
            "replaced fraction {fraction} outside 0.1 +/- 0.01"
        );
    }

    #[test]
    fn noise_is_deterministic_in_seed() {
        let corpus = tiny_corpus();
        let a = apply_translation_noise(&corpus, 0.4, 11).unwrap();
        let b = apply_translation_noise(&corpus, 0.4, 11).unwrap();
        let lang = LanguageId::new("p1").unwrap();
        for (x, y) in a.topics.iter().zip(&b.topics) {
            assert_eq!(x.gold_docs[&lang].body, y.gold_docs[&lang].body);
        }
    }

    #[test]
    fn generator_rejects_bad_config() {
        assert!(matches!(
            generate_synthetic_corpus(1, 0, 4, 12),
            Err(CorpusError::InvalidConfig(_))
        ));
        assert!(matches!(
            generate_synthetic_corpus(1, 5, 1, 12),
            Err(CorpusError::InvalidConfig(_))
        ));
        assert!(matches!(
            generate_synthetic_corpus(1, 5, 4, 5),
            Err(CorpusError::InvalidConfig(_))
        ));
    }
}
