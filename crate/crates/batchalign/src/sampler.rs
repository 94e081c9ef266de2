//! Training batch composition: language-coupled batches (one semantic
//! problem in k distinct languages per batch) and the shuffled uncoupled
//! baseline, plus the anchor ablation and the batch-size ladder.

use rand::seq::index::sample as index_sample;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::LanguageId;
use crate::dataset::{GroupKey, SampleGroup};
use crate::rng::{mix_seed_idx, rng_from};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BatchMode {
    Coupled,
    Uncoupled,
}

impl std::fmt::Display for BatchMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            BatchMode::Coupled => f.write_str("coupled"),
            BatchMode::Uncoupled => f.write_str("uncoupled"),
        }
    }
}

/// Batch composition parameters. `k` is the number of samples per batch.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BatchSpec {
    pub mode: BatchMode,
    pub k: usize,
    pub include_anchor: bool,
    pub anchor: LanguageId,
    /// Languages eligible for training batches (held-out languages removed
    /// upstream).
    pub languages: Vec<LanguageId>,
    pub seed: u64,
}

#[derive(Debug, Error)]
pub enum SamplerError {
    #[error("not enough languages: k={k}, available={available}")]
    NotEnoughLanguages { k: usize, available: usize },
    #[error("invalid batch spec: {0}")]
    InvalidSpec(String),
}

/// One training batch: member samples identified by (group index, language).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Batch {
    pub members: Vec<(usize, LanguageId)>,
    /// Shared semantic key for coupled batches, `None` for uncoupled.
    pub group_key: Option<GroupKey>,
}

impl BatchSpec {
    fn validate(&self) -> Result<(), SamplerError> {
        if self.k == 0 {
            return Err(SamplerError::InvalidSpec("k must be >= 1".into()));
        }
        // For coupled batches k counts distinct languages; for uncoupled it
        // is a plain chunk size over items.
        if self.mode == BatchMode::Coupled && self.k > self.languages.len() {
            return Err(SamplerError::InvalidSpec(format!(
                "k={} outside 1..={}",
                self.k,
                self.languages.len()
            )));
        }
        if self.include_anchor && !self.languages.contains(&self.anchor) {
            return Err(SamplerError::InvalidSpec(format!(
                "anchor {} not in eligible languages",
                self.anchor
            )));
        }
        Ok(())
    }

    fn non_anchor(&self) -> Vec<LanguageId> {
        self.languages
            .iter()
            .filter(|l| **l != self.anchor)
            .cloned()
            .collect()
    }
}

/// One epoch of coupled batches: one batch per group, in seeded shuffle
/// order; each batch holds the same problem in k pairwise-distinct languages
/// (the anchor plus k-1 random others when `include_anchor` is set, k random
/// non-anchor languages otherwise).
pub fn coupled_batches(
    groups: &[SampleGroup],
    spec: &BatchSpec,
    epoch: u64,
) -> Result<Vec<Batch>, SamplerError> {
    spec.validate()?;
    if spec.mode != BatchMode::Coupled {
        return Err(SamplerError::InvalidSpec("mode is not coupled".into()));
    }
    let others = spec.non_anchor();
    let (needed_from_others, available) = if spec.include_anchor {
        (spec.k - 1, others.len() + 1)
    } else {
        (spec.k, others.len())
    };
    if needed_from_others > others.len() {
        return Err(SamplerError::NotEnoughLanguages {
            k: spec.k,
            available,
        });
    }

    let mut rng = rng_from(mix_seed_idx(spec.seed, "coupled", epoch));
    let mut order: Vec<usize> = (0..groups.len()).collect();
    order.shuffle(&mut rng);

    let mut batches = Vec::with_capacity(groups.len());
    for group_index in order {
        let picked = index_sample(&mut rng, others.len(), needed_from_others);
        let mut members = Vec::with_capacity(spec.k);
        if spec.include_anchor {
            members.push((group_index, spec.anchor.clone()));
        }
        members.extend(picked.iter().map(|i| (group_index, others[i].clone())));
        batches.push(Batch {
            members,
            group_key: Some(groups[group_index].key.clone()),
        });
    }
    Ok(batches)
}

/// One epoch of uncoupled batches: every (group, language) item, shuffled,
/// emitted in consecutive chunks of k with the partial tail dropped.
pub fn uncoupled_batches(
    groups: &[SampleGroup],
    spec: &BatchSpec,
    epoch: u64,
) -> Result<Vec<Batch>, SamplerError> {
    spec.validate()?;
    if spec.mode != BatchMode::Uncoupled {
        return Err(SamplerError::InvalidSpec("mode is not uncoupled".into()));
    }
    let mut items: Vec<(usize, LanguageId)> = Vec::with_capacity(groups.len() * spec.languages.len());
    for group_index in 0..groups.len() {
        for lang in &spec.languages {
            items.push((group_index, lang.clone()));
        }
    }
    let mut rng = rng_from(mix_seed_idx(spec.seed, "uncoupled", epoch));
    items.shuffle(&mut rng);

    Ok(items
        .chunks_exact(spec.k)
        .map(|chunk| Batch {
            members: chunk.to_vec(),
            group_key: None,
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::generate_synthetic_corpus;
    use crate::dataset::build_samples;
    use std::collections::{BTreeMap, BTreeSet};

    fn setup(n_topics: usize, n_langs: usize) -> (Vec<SampleGroup>, Vec<LanguageId>) {
        let corpus = generate_synthetic_corpus(7, n_topics, n_langs, 12).unwrap();
        let groups = build_samples(&corpus, 11).unwrap();
        (groups, corpus.languages)
    }

    fn spec(mode: BatchMode, k: usize, include_anchor: bool, langs: &[LanguageId]) -> BatchSpec {
        BatchSpec {
            mode,
            k,
            include_anchor,
            anchor: langs[0].clone(),
            languages: langs.to_vec(),
            seed: 17,
        }
    }

    #[test]
    fn coupled_epoch_covers_every_group_once() {
        let (groups, langs) = setup(5, 4);
        let s = spec(BatchMode::Coupled, 4, true, &langs);
        let batches = coupled_batches(&groups, &s, 0).unwrap();
        assert_eq!(batches.len(), groups.len());
        let keys: BTreeSet<String> = batches
            .iter()
            .map(|b| b.group_key.as_ref().unwrap().to_string())
            .collect();
        assert_eq!(keys.len(), groups.len());
        for b in &batches {
            let langs_in: BTreeSet<&LanguageId> = b.members.iter().map(|(_, l)| l).collect();
            assert_eq!(langs_in.len(), s.k, "languages must be pairwise distinct");
            let idxs: BTreeSet<usize> = b.members.iter().map(|(g, _)| *g).collect();
            assert_eq!(idxs.len(), 1, "coupled batch spans one group");
        }
    }

    #[test]
    fn anchor_presence_follows_include_anchor() {
        let (groups, langs) = setup(4, 4);
        let anchor = langs[0].clone();
        for epoch in 0..20 {
            let with = coupled_batches(&groups, &spec(BatchMode::Coupled, 3, true, &langs), epoch)
                .unwrap();
            assert!(with
                .iter()
                .all(|b| b.members.iter().any(|(_, l)| *l == anchor)));
            let without =
                coupled_batches(&groups, &spec(BatchMode::Coupled, 3, false, &langs), epoch)
                    .unwrap();
            assert!(without
                .iter()
                .all(|b| b.members.iter().all(|(_, l)| *l != anchor)));
        }
    }

    #[test]
    fn ladder_k2_is_anchor_plus_one_random() {
        let (groups, langs) = setup(4, 4);
        let s = spec(BatchMode::Coupled, 2, true, &langs);
        for epoch in 0..50 {
            for b in coupled_batches(&groups, &s, epoch).unwrap() {
                assert_eq!(b.members.len(), 2);
                assert_eq!(b.members[0].1, langs[0]);
                assert_ne!(b.members[1].1, langs[0]);
            }
        }
    }

    #[test]
    fn ladder_k1_is_anchor_alone() {
        let (groups, langs) = setup(4, 4);
        let s = spec(BatchMode::Coupled, 1, true, &langs);
        for b in coupled_batches(&groups, &s, 0).unwrap() {
            assert_eq!(b.members.len(), 1);
            assert_eq!(b.members[0].1, langs[0]);
        }
    }

    #[test]
    fn coupled_without_anchor_needs_enough_languages() {
        let (groups, langs) = setup(2, 4);
        let s = spec(BatchMode::Coupled, 4, false, &langs);
        match coupled_batches(&groups, &s, 0) {
            Err(SamplerError::NotEnoughLanguages { k: 4, available: 3 }) => {}
            other => panic!("expected NotEnoughLanguages, got {other:?}"),
        }
    }

    #[test]
    fn non_anchor_inclusion_frequency_matches_binomial() {
        // With include_anchor and k < |languages|, each non-anchor language
        // appears with probability (k-1)/(|languages|-1) per batch.
        let (groups, langs) = setup(2, 4); // 8 groups per epoch
        let s = spec(BatchMode::Coupled, 2, true, &langs);
        let epochs = 300u64;
        let mut counts: BTreeMap<LanguageId, usize> = BTreeMap::new();
        let mut total_batches = 0usize;
        for epoch in 0..epochs {
            for b in coupled_batches(&groups, &s, epoch).unwrap() {
                total_batches += 1;
                for (_, l) in &b.members[1..] {
                    *counts.entry(l.clone()).or_default() += 1;
                }
            }
        }
        let p = (s.k - 1) as f64 / (langs.len() - 1) as f64;
        let sigma = (total_batches as f64 * p * (1.0 - p)).sqrt();
        for lang in &langs[1..] {
            let n = counts[lang] as f64;
            let expected = total_batches as f64 * p;
            assert!(
                (n - expected).abs() < 3.0 * sigma,
                "language {lang}: {n} outside {expected} +/- {:.1}",
                3.0 * sigma
            );
        }
    }

    #[test]
    fn uncoupled_drops_partial_tail() {
        let (groups, langs) = setup(5, 2); // 20 groups x 2 languages = 40 items
        let mut s = spec(BatchMode::Uncoupled, 3, false, &langs);
        s.languages = langs.clone();
        let batches = uncoupled_batches(&groups, &s, 0).unwrap();
        assert_eq!(batches.len(), 40 / 3);
        assert!(batches.iter().all(|b| b.members.len() == 3));
        assert!(batches.iter().all(|b| b.group_key.is_none()));
    }

    #[test]
    fn uncoupled_preserves_item_multiset_minus_tail() {
        let (groups, langs) = setup(3, 3); // 12 groups x 3 = 36 items
        let s = spec(BatchMode::Uncoupled, 4, false, &langs);
        let batches = uncoupled_batches(&groups, &s, 0).unwrap();
        let emitted: BTreeSet<(usize, String)> = batches
            .iter()
            .flat_map(|b| b.members.iter().map(|(g, l)| (*g, l.as_str().to_string())))
            .collect();
        assert_eq!(emitted.len(), 36, "36 items divide evenly into 9 batches");
    }

    #[test]
    fn uncoupled_single_batch_when_k_is_total() {
        let (groups, langs) = setup(1, 2); // 4 groups x 2 = 8 items
        let s = spec(BatchMode::Uncoupled, 8, false, &langs);
        let batches = uncoupled_batches(&groups, &s, 0).unwrap();
        assert_eq!(batches.len(), 1);
        assert_eq!(batches[0].members.len(), 8);
    }

    #[test]
    fn streams_are_deterministic_in_seed_and_epoch() {
        let (groups, langs) = setup(4, 3);
        let s = spec(BatchMode::Coupled, 2, true, &langs);
        assert_eq!(
            coupled_batches(&groups, &s, 5).unwrap(),
            coupled_batches(&groups, &s, 5).unwrap()
        );
        assert_ne!(
            coupled_batches(&groups, &s, 5).unwrap(),
            coupled_batches(&groups, &s, 6).unwrap()
        );
        let u = spec(BatchMode::Uncoupled, 3, false, &langs);
        assert_eq!(
            uncoupled_batches(&groups, &u, 2).unwrap(),
            uncoupled_batches(&groups, &u, 2).unwrap()
        );
    }
}
