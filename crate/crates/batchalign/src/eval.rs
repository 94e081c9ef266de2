//! Evaluation and statistics: exact-match accuracy, Rest (avg.), percentile
//! bootstrap confidence intervals, exact-binomial McNemar tests, perplexity
//! with paired deltas, and cross-language error co-occurrence.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::LanguageId;
use crate::dataset::{GroupKey, Label};
use crate::prompting::ResponseLabel;
use crate::rng::{mix_seed_idx, rng_from};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("empty input")]
    EmptyInput,
    #[error("no non-anchor languages")]
    NoNonAnchorLanguages,
    #[error("mismatched items: {0}")]
    MismatchedItems(String),
    #[error("non-finite value in {0}")]
    NonFinite(String),
}

/// One evaluated test item.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub sample_id: String,
    pub language: LanguageId,
    /// Semantic problem key; pairs records of different languages.
    pub group_key: GroupKey,
    pub truth: Label,
    pub predicted: ResponseLabel,
    pub correct: bool,
}

impl PredictionRecord {
    pub fn new(
        sample_id: String,
        language: LanguageId,
        group_key: GroupKey,
        truth: Label,
        predicted: ResponseLabel,
    ) -> Self {
        let correct = matches!(
            (truth, predicted),
            (Label::Positive, ResponseLabel::Yes) | (Label::Negative, ResponseLabel::Idk)
        );
        PredictionRecord {
            sample_id,
            language,
            group_key,
            truth,
            predicted,
            correct,
        }
    }
}

/// Mean of the correctness flags. INVALID predictions count as incorrect.
pub fn exact_match_accuracy(records: &[PredictionRecord]) -> Result<f64, EvalError> {
    if records.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    Ok(records.iter().filter(|r| r.correct).count() as f64 / records.len() as f64)
}

/// Unweighted mean over non-anchor language accuracies.
pub fn rest_average(
    per_language: &BTreeMap<LanguageId, f64>,
    anchor: &LanguageId,
) -> Result<f64, EvalError> {
    let rest: Vec<f64> = per_language
        .iter()
        .filter(|(l, _)| *l != anchor)
        .map(|(_, a)| *a)
        .collect();
    if rest.is_empty() {
        return Err(EvalError::NoNonAnchorLanguages);
    }
    Ok(rest.iter().sum::<f64>() / rest.len() as f64)
}

fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    if lo == hi {
        sorted[lo]
    } else {
        let frac = pos - lo as f64;
        sorted[lo] * (1.0 - frac) + sorted[hi] * frac
    }
}

/// Seeded percentile bootstrap interval for the accuracy of `records`.
/// Resample b draws from the RNG stream derived from (seed, b), so results
/// are independent of execution order.
pub fn bootstrap_ci(
    records: &[PredictionRecord],
    b: usize,
    alpha: f64,
    seed: u64,
) -> Result<(f64, f64), EvalError> {
    let flags: Vec<bool> = records.iter().map(|r| r.correct).collect();
    bootstrap_ci_flags(&flags, b, alpha, seed)
}

pub fn bootstrap_ci_flags(
    flags: &[bool],
    b: usize,
    alpha: f64,
    seed: u64,
) -> Result<(f64, f64), EvalError> {
    if flags.is_empty() || b == 0 {
        return Err(EvalError::EmptyInput);
    }
    let n = flags.len();
    let mut stats = Vec::with_capacity(b);
    for rep in 0..b {
        let mut rng = rng_from(mix_seed_idx(seed, "bootstrap", rep as u64));
        let mut hits = 0usize;
        for _ in 0..n {
            if flags[rng.gen_range(0..n)] {
                hits += 1;
            }
        }
        stats.push(hits as f64 / n as f64);
    }
    stats.sort_by(|a, b| a.partial_cmp(b).expect("accuracies are finite"));
    Ok((
        percentile(&stats, alpha / 2.0),
        percentile(&stats, 1.0 - alpha / 2.0),
    ))
}

// ---------------------------------------------------------------------------
// McNemar
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McnemarResult {
    /// Items system A got wrong and B got right.
    pub b: usize,
    /// Items system B got wrong and A got right.
    pub c: usize,
    pub p_value: f64,
}

/// P(Bin(n, 1/2) >= m), exact for n <= 62, log-space otherwise.
fn binomial_tail_half(n: u64, m: u64) -> f64 {
    if m > n {
        return 0.0;
    }
    if n <= 62 {
        let mut sum: u128 = 0;
        let mut coeff: u128 = 1; // C(n, 0)
        for k in 0..=n {
            if k >= m {
                sum += coeff;
            }
            if k < n {
                coeff = coeff * (n - k) as u128 / (k + 1) as u128;
            }
        }
        return sum as f64 / 2f64.powi(n as i32);
    }
    // ln C(n, k) via a cumulative ln-factorial; adequate for p-values.
    let ln_fact = {
        let mut table = vec![0.0f64; (n + 1) as usize];
        for i in 1..=n as usize {
            table[i] = table[i - 1] + (i as f64).ln();
        }
        table
    };
    let ln2 = std::f64::consts::LN_2;
    let mut total = 0.0f64;
    for k in m..=n {
        let ln_term = ln_fact[n as usize]
            - ln_fact[k as usize]
            - ln_fact[(n - k) as usize]
            - n as f64 * ln2;
        total += ln_term.exp();
    }
    total.min(1.0)
}

/// Exact two-sided McNemar test on paired records (matched by sample_id):
/// p = min(1, 2 * P(Bin(b+c, 1/2) >= max(b, c))).
pub fn mcnemar_test(
    system_a: &[PredictionRecord],
    system_b: &[PredictionRecord],
) -> Result<McnemarResult, EvalError> {
    let map_a: BTreeMap<&str, bool> = system_a
        .iter()
        .map(|r| (r.sample_id.as_str(), r.correct))
        .collect();
    let map_b: BTreeMap<&str, bool> = system_b
        .iter()
        .map(|r| (r.sample_id.as_str(), r.correct))
        .collect();
    if map_a.len() != map_b.len() || map_a.keys().ne(map_b.keys()) {
        return Err(EvalError::MismatchedItems(
            "systems were evaluated on different sample_id sets".into(),
        ));
    }
    let mut b = 0usize;
    let mut c = 0usize;
    for (id, &a_ok) in &map_a {
        let b_ok = map_b[id];
        match (a_ok, b_ok) {
            (false, true) => b += 1,
            (true, false) => c += 1,
            _ => {}
        }
    }
    Ok(McnemarResult {
        b,
        c,
        p_value: mcnemar_p(b, c),
    })
}

/// The p-value from discordant counts alone.
pub fn mcnemar_p(b: usize, c: usize) -> f64 {
    let n = (b + c) as u64;
    if n == 0 {
        return 1.0;
    }
    let m = b.max(c) as u64;
    (2.0 * binomial_tail_half(n, m)).min(1.0)
}

// ---------------------------------------------------------------------------
// Perplexity
// ---------------------------------------------------------------------------

/// exp(mean negative log-likelihood); >= 1 for proper NLLs.
pub fn perplexity(per_token_nlls: &[f64]) -> Result<f64, EvalError> {
    if per_token_nlls.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    if per_token_nlls.iter().any(|x| !x.is_finite()) {
        return Err(EvalError::NonFinite("per-token NLL".into()));
    }
    Ok((per_token_nlls.iter().sum::<f64>() / per_token_nlls.len() as f64).exp())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairedDelta {
    pub delta: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

/// Paired bootstrap CI for a perplexity difference: item indices are
/// resampled jointly, delta = ppl_A - ppl_B per resample, percentile CI.
pub fn paired_bootstrap_delta(
    item_nlls_a: &[f64],
    item_nlls_b: &[f64],
    b: usize,
    seed: u64,
) -> Result<PairedDelta, EvalError> {
    if item_nlls_a.len() != item_nlls_b.len() {
        return Err(EvalError::MismatchedItems(format!(
            "{} vs {} items",
            item_nlls_a.len(),
            item_nlls_b.len()
        )));
    }
    if item_nlls_a.is_empty() || b == 0 {
        return Err(EvalError::EmptyInput);
    }
    let n = item_nlls_a.len();
    let point = perplexity(item_nlls_a)? - perplexity(item_nlls_b)?;
    let mut deltas = Vec::with_capacity(b);
    for rep in 0..b {
        let mut rng = rng_from(mix_seed_idx(seed, "paired-bootstrap", rep as u64));
        let mut sum_a = 0.0;
        let mut sum_b = 0.0;
        for _ in 0..n {
            let i = rng.gen_range(0..n);
            sum_a += item_nlls_a[i];
            sum_b += item_nlls_b[i];
        }
        deltas.push((sum_a / n as f64).exp() - (sum_b / n as f64).exp());
    }
    deltas.sort_by(|a, b| a.partial_cmp(b).expect("deltas are finite"));
    Ok(PairedDelta {
        delta: point,
        ci_low: percentile(&deltas, 0.025),
        ci_high: percentile(&deltas, 0.975),
    })
}

// ---------------------------------------------------------------------------
// Error co-occurrence
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cooccurrence {
    pub both_wrong: usize,
    pub anchor_only_wrong: usize,
    pub other_only_wrong: usize,
    pub both_right: usize,
}

/// 2x2 contingency of errors between the anchor language and another
/// language, matched by group key (the same semantic problem).
pub fn error_cooccurrence(
    anchor_records: &[PredictionRecord],
    other_records: &[PredictionRecord],
) -> Result<Cooccurrence, EvalError> {
    let map_a: BTreeMap<&GroupKey, bool> = anchor_records
        .iter()
        .map(|r| (&r.group_key, r.correct))
        .collect();
    let map_o: BTreeMap<&GroupKey, bool> = other_records
        .iter()
        .map(|r| (&r.group_key, r.correct))
        .collect();
    if map_a.len() != map_o.len() || map_a.keys().ne(map_o.keys()) {
        return Err(EvalError::MismatchedItems(
            "languages cover different group keys".into(),
        ));
    }
    let mut counts = Cooccurrence {
        both_wrong: 0,
        anchor_only_wrong: 0,
        other_only_wrong: 0,
        both_right: 0,
    };
    for (key, &a_ok) in &map_a {
        match (a_ok, map_o[*key]) {
            (false, false) => counts.both_wrong += 1,
            (false, true) => counts.anchor_only_wrong += 1,
            (true, false) => counts.other_only_wrong += 1,
            (true, true) => counts.both_right += 1,
        }
    }
    Ok(counts)
}

// ---------------------------------------------------------------------------
// Report
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LanguageRow {
    pub accuracy: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignificanceRow {
    pub comparison: String,
    pub b: usize,
    pub c: usize,
    pub p_value: f64,
    pub significant: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerplexityRow {
    pub perplexity: f64,
    /// Paired delta versus the anchor language; absent on the anchor row.
    pub delta_vs_anchor: Option<PairedDelta>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CooccurrenceRow {
    pub language: String,
    #[serde(flatten)]
    pub counts: Cooccurrence,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfigEcho {
    pub bootstrap_b: usize,
    pub seed: u64,
    pub alpha: f64,
    pub mcnemar_alpha: f64,
}

/// Full evaluation output; serializes losslessly and renders as an aligned
/// text table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub anchor: String,
    pub per_language: BTreeMap<String, LanguageRow>,
    pub rest_avg: f64,
    pub tests: Vec<SignificanceRow>,
    pub perplexity: BTreeMap<String, PerplexityRow>,
    pub cooccurrence: Vec<CooccurrenceRow>,
    pub config: EvalConfigEcho,
}

impl EvalReport {
    /// Plain-text table in the paper's layout: one column per language plus
    /// Rest (avg.).
    pub fn render_table(&self) -> String {
        let mut langs: Vec<&String> = self.per_language.keys().collect();
        langs.sort_by_key(|l| (*l != &self.anchor, l.as_str()));
        let mut header = String::from("| ");
        let mut accs = String::from("| ");
        for lang in &langs {
            let row = &self.per_language[*lang];
            header.push_str(&format!("{:>24} | ", lang));
            accs.push_str(&format!(
                "{:>7.1} [{:>4.1}-{:>5.1}] | ",
                row.accuracy * 100.0,
                row.ci_low * 100.0,
                row.ci_high * 100.0
            ));
        }
        header.push_str(&format!("{:>11} |", "Rest (avg.)"));
        accs.push_str(&format!("{:>11.1} |", self.rest_avg * 100.0));
        let mut out = format!("{header}\n{accs}\n");
        if !self.tests.is_empty() {
            out.push_str("significance (McNemar exact):\n");
            for t in &self.tests {
                out.push_str(&format!(
                    "  {:<32} b={:<4} c={:<4} p={:.6}{}\n",
                    t.comparison,
                    t.b,
                    t.c,
                    t.p_value,
                    if t.significant { " *" } else { "" }
                ));
            }
        }
        if !self.perplexity.is_empty() {
            out.push_str("perplexity:\n");
            for (lang, row) in &self.perplexity {
                match &row.delta_vs_anchor {
                    Some(d) => out.push_str(&format!(
                        "  {:<8} {:>9.4}  delta vs anchor {:>8.4} [{:.4}, {:.4}]\n",
                        lang, row.perplexity, d.delta, d.ci_low, d.ci_high
                    )),
                    None => out.push_str(&format!("  {:<8} {:>9.4}\n", lang, row.perplexity)),
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(id: &str, lang: &str, topic: &str, correct: bool) -> PredictionRecord {
        let truth = Label::Positive;
        let predicted = if correct { ResponseLabel::Yes } else { ResponseLabel::Idk };
        PredictionRecord::new(
            id.to_string(),
            LanguageId::new(lang).unwrap(),
            GroupKey {
                topic_id: topic.to_string(),
                query_index: 0,
                label: truth,
            },
            truth,
            predicted,
        )
    }

    fn records(lang: &str, flags: &[bool]) -> Vec<PredictionRecord> {
        flags
            .iter()
            .enumerate()
            .map(|(i, &ok)| record(&format!("s{i}"), lang, &format!("t{i}"), ok))
            .collect()
    }

    #[test]
    fn accuracy_is_mean_of_correct_flags() {
        assert_eq!(
            exact_match_accuracy(&records("p0", &[true, true, true])).unwrap(),
            1.0
        );
        assert_eq!(
            exact_match_accuracy(&records("p0", &[true, true, true, false])).unwrap(),
            0.75
        );
        assert!(matches!(
            exact_match_accuracy(&[]),
            Err(EvalError::EmptyInput)
        ));
    }

    #[test]
    fn invalid_predictions_count_as_incorrect() {
        let r = PredictionRecord::new(
            "s0".into(),
            LanguageId::new("p0").unwrap(),
            GroupKey { topic_id: "t0".into(), query_index: 0, label: Label::Positive },
            Label::Positive,
            ResponseLabel::Invalid,
        );
        assert!(!r.correct);
        assert_eq!(exact_match_accuracy(&[r]).unwrap(), 0.0);
    }

    #[test]
    fn rest_average_excludes_anchor() {
        let anchor = LanguageId::new("en").unwrap();
        let mut accs = BTreeMap::new();
        accs.insert(anchor.clone(), 0.9);
        accs.insert(LanguageId::new("ar").unwrap(), 0.4);
        accs.insert(LanguageId::new("es").unwrap(), 0.6);
        assert!((rest_average(&accs, &anchor).unwrap() - 0.5).abs() < 1e-12);
        // Anchor accuracy change leaves the average untouched.
        accs.insert(anchor.clone(), 0.1);
        assert!((rest_average(&accs, &anchor).unwrap() - 0.5).abs() < 1e-12);
        // Single non-anchor language: its accuracy verbatim.
        accs.remove(&LanguageId::new("es").unwrap());
        assert!((rest_average(&accs, &anchor).unwrap() - 0.4).abs() < 1e-12);
        let only_anchor: BTreeMap<LanguageId, f64> =
            [(anchor.clone(), 0.9)].into_iter().collect();
        assert!(matches!(
            rest_average(&only_anchor, &anchor),
            Err(EvalError::NoNonAnchorLanguages)
        ));
    }

    #[test]
    fn bootstrap_of_all_correct_is_degenerate() {
        let recs = records("p0", &[true; 25]);
        let (lo, hi) = bootstrap_ci(&recs, 200, 0.05, 3).unwrap();
        assert_eq!((lo, hi), (1.0, 1.0));
    }

    #[test]
    fn bootstrap_is_deterministic_in_seed() {
        let recs = records("p0", &[true, false, true, true, false, true, true, true]);
        let a = bootstrap_ci(&recs, 500, 0.05, 9).unwrap();
        let b = bootstrap_ci(&recs, 500, 0.05, 9).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn bootstrap_interval_contains_point_estimate() {
        // Percentile interval of resample means straddles the full-sample
        // mean; checked over 100 random record sets.
        let mut rng = rng_from(77);
        for _ in 0..100 {
            let n = rng.gen_range(10..60);
            let p: f64 = rng.gen_range(0.05..0.95);
            let flags: Vec<bool> = (0..n).map(|_| rng.gen::<f64>() < p).collect();
            let acc = flags.iter().filter(|&&x| x).count() as f64 / n as f64;
            let (lo, hi) = bootstrap_ci_flags(&flags, 400, 0.05, rng.gen()).unwrap();
            assert!(lo <= acc + 1e-12 && acc <= hi + 1e-12, "({lo}, {hi}) vs {acc}");
        }
    }

    #[test]
    fn mcnemar_matches_hand_computed_tails() {
        // b=2, c=8: p = 2 * (45 + 10 + 1) / 1024.
        let p = mcnemar_p(2, 8);
        assert!((p - 112.0 / 1024.0).abs() < 1e-12);
        // b=0, c=15: 2 * (1/2)^15.
        let p = mcnemar_p(0, 15);
        assert!((p - 2.0 * 0.5f64.powi(15)).abs() < 1e-15);
        assert!(p < 0.01, "significant at the paper's threshold");
        // b = c clamps at 1.
        assert_eq!(mcnemar_p(6, 6), 1.0);
        assert_eq!(mcnemar_p(0, 0), 1.0);
    }

    #[test]
    fn mcnemar_is_symmetric() {
        let a = records("p0", &[true, false, true, true, false, true]);
        let b = records("p0", &[false, true, true, false, true, true]);
        let fwd = mcnemar_test(&a, &b).unwrap();
        let rev = mcnemar_test(&b, &a).unwrap();
        assert_eq!(fwd.b, rev.c);
        assert_eq!(fwd.c, rev.b);
        assert_eq!(fwd.p_value, rev.p_value);
    }

    #[test]
    fn mcnemar_rejects_mismatched_items() {
        let a = records("p0", &[true, false]);
        let mut b = records("p0", &[true, false]);
        b[1].sample_id = "other".into();
        assert!(matches!(
            mcnemar_test(&a, &b),
            Err(EvalError::MismatchedItems(_))
        ));
    }

    #[test]
    fn large_n_tail_stays_probability() {
        let p = binomial_tail_half(200, 120);
        assert!(p > 0.0 && p < 1.0);
        // Against the normal approximation: P(Bin(200,.5) >= 120) ~ 0.0028.
        assert!((p - 0.0028).abs() < 0.001);
    }

    #[test]
    fn perplexity_matches_hand_recomputation() {
        // Uniform model over |V| = 8.
        let nll = (8.0f64).ln();
        assert!((perplexity(&[nll, nll, nll]).unwrap() - 8.0).abs() < 1e-12);
        assert_eq!(perplexity(&[0.0, 0.0]).unwrap(), 1.0);
        let mixed = [0.4, 1.3, 2.2, 0.9];
        let second_path = (mixed.iter().sum::<f64>() / 4.0).exp();
        assert!((perplexity(&mixed).unwrap() - second_path).abs() < 1e-12);
        assert!(matches!(perplexity(&[]), Err(EvalError::EmptyInput)));
        assert!(matches!(
            perplexity(&[f64::INFINITY]),
            Err(EvalError::NonFinite(_))
        ));
    }

    #[test]
    fn paired_delta_zero_for_identical_systems() {
        let nlls = [0.5, 1.5, 0.7, 2.0];
        let d = paired_bootstrap_delta(&nlls, &nlls, 200, 3).unwrap();
        assert_eq!(d.delta, 0.0);
        assert_eq!((d.ci_low, d.ci_high), (0.0, 0.0));
    }

    #[test]
    fn paired_delta_detects_constant_offset() {
        let mut rng = rng_from(4);
        let a: Vec<f64> = (0..400).map(|_| rng.gen_range(0.5..1.5)).collect();
        let b: Vec<f64> = a.iter().map(|x| x - 0.3).collect();
        let d = paired_bootstrap_delta(&a, &b, 500, 8).unwrap();
        assert!(d.delta > 0.0);
        assert!(d.ci_low > 0.0, "CI {:?} should exclude zero", d);
        // Determinism.
        let d2 = paired_bootstrap_delta(&a, &b, 500, 8).unwrap();
        assert_eq!(d, d2);
    }

    #[test]
    fn cooccurrence_counts_sum_to_n() {
        let anchor = records("p0", &[false, false, false, true, true, true, true, true]);
        let mut other = records("p1", &[true, true, true, false, false, true, true, true]);
        for (i, r) in other.iter_mut().enumerate() {
            r.group_key.topic_id = format!("t{i}");
        }
        let co = error_cooccurrence(&anchor, &other).unwrap();
        assert_eq!(co.both_wrong, 0);
        assert_eq!(co.anchor_only_wrong, 3);
        assert_eq!(co.other_only_wrong, 2);
        assert_eq!(co.both_right, 3);
        let total = co.both_wrong + co.anchor_only_wrong + co.other_only_wrong + co.both_right;
        assert_eq!(total, 8);
        // Consistency with McNemar on (anchor_only, other_only).
        assert_eq!(
            mcnemar_p(co.anchor_only_wrong, co.other_only_wrong),
            mcnemar_p(3, 2)
        );
    }

    #[test]
    fn cooccurrence_identical_error_sets_have_no_exclusives() {
        let anchor = records("p0", &[false, true, false, true]);
        let other = records("p1", &[false, true, false, true]);
        let co = error_cooccurrence(&anchor, &other).unwrap();
        assert_eq!(co.anchor_only_wrong, 0);
        assert_eq!(co.other_only_wrong, 0);
        assert_eq!(co.both_wrong, 2);
    }

    #[test]
    fn report_roundtrips_via_json() {
        let mut per_language = BTreeMap::new();
        per_language.insert(
            "p0".to_string(),
            LanguageRow { accuracy: 0.9, ci_low: 0.85, ci_high: 0.95, n: 80 },
        );
        per_language.insert(
            "p1".to_string(),
            LanguageRow { accuracy: 0.7, ci_low: 0.6, ci_high: 0.8, n: 80 },
        );
        let report = EvalReport {
            anchor: "p0".into(),
            per_language,
            rest_avg: 0.7,
            tests: vec![SignificanceRow {
                comparison: "p0-vs-p1".into(),
                b: 2,
                c: 8,
                p_value: 112.0 / 1024.0,
                significant: false,
            }],
            perplexity: BTreeMap::new(),
            cooccurrence: vec![],
            config: EvalConfigEcho {
                bootstrap_b: 1000,
                seed: 7,
                alpha: 0.05,
                mcnemar_alpha: 0.01,
            },
        };
        let json = serde_json::to_string(&report).unwrap();
        let back: EvalReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back, report);
        let table = report.render_table();
        assert!(table.contains("Rest (avg.)"));
        assert!(table.contains("p0-vs-p1"));
    }
}
