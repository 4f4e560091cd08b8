//! Evaluation metrics for anomaly scores against binary labels: AUC-ROC,
//! AUC-PR (average precision), their volume-under-the-surface extensions
//! over label-tolerance buffers, and standard / point-adjusted F1.
//!
//! AUC-PR and AUC-ROC are the `max_buffer = 0` cases of the weighted VUS
//! computation, so the two routes agree exactly by construction; their
//! correctness is pinned by brute-force oracles in the tests instead.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Scores paired with ground-truth labels; entries where `valid` is false
/// (the unscored context prefix) are excluded from every metric.
#[derive(Debug, Clone)]
pub struct ScoredLabels {
    scores: Vec<f64>,
    labels: Vec<bool>,
    valid: Vec<bool>,
}

impl ScoredLabels {
    pub fn new(scores: Vec<f64>, labels: Vec<bool>, skip_prefix: usize) -> Result<Self> {
        if scores.len() != labels.len() {
            return Err(Error::invalid("scores and labels must have equal length"));
        }
        if skip_prefix >= scores.len() {
            return Err(Error::invalid("mask excludes every timestep"));
        }
        if scores.iter().any(|s| !s.is_finite()) {
            return Err(Error::invalid("scores contain non-finite values"));
        }
        let valid = (0..scores.len()).map(|i| i >= skip_prefix).collect();
        Ok(Self { scores, labels, valid })
    }

    fn masked(&self) -> (Vec<f64>, Vec<bool>) {
        let mut s = Vec::new();
        let mut l = Vec::new();
        for i in 0..self.scores.len() {
            if self.valid[i] {
                s.push(self.scores[i]);
                l.push(self.labels[i]);
            }
        }
        (s, l)
    }
}

/// All reported metrics for one (score source, window) combination.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricReport {
    pub auc_roc: f64,
    pub auc_pr: f64,
    pub vus_roc: f64,
    pub vus_pr: f64,
    pub f1_standard: f64,
    pub f1_point_adjusted: f64,
    pub threshold: f64,
    pub max_buffer: usize,
}

/// Weighted Mann-Whitney AUC: each sample carries positive mass `w` and
/// negative mass `1 - w`; ties get half credit.
fn weighted_auc_roc(scores: &[f64], weights: &[f64]) -> Result<f64> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).unwrap());
    let total_pos: f64 = weights.iter().sum();
    let total_neg: f64 = weights.iter().map(|w| 1.0 - w).sum();
    if total_pos <= 0.0 || total_neg <= 0.0 {
        return Err(Error::invalid("auc needs mass in both classes"));
    }
    // ascending sweep: every positive gains credit for negatives strictly
    // below it and half credit for ties
    let mut neg_below = 0.0;
    let mut credit = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        let mut tie_pos = 0.0;
        let mut tie_neg = 0.0;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            tie_pos += weights[order[j]];
            tie_neg += 1.0 - weights[order[j]];
            j += 1;
        }
        credit += tie_pos * (neg_below + 0.5 * tie_neg);
        neg_below += tie_neg;
        i = j;
    }
    Ok(credit / (total_pos * total_neg))
}

/// Weighted average precision over the descending-threshold step curve.
fn weighted_auc_pr(scores: &[f64], weights: &[f64]) -> Result<f64> {
    let total_pos: f64 = weights.iter().sum();
    if total_pos <= 0.0 {
        return Err(Error::invalid("auc-pr needs positive mass"));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap());
    let mut tp = 0.0;
    let mut fp = 0.0;
    let mut prev_recall = 0.0;
    let mut area = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            tp += weights[order[j]];
            fp += 1.0 - weights[order[j]];
            j += 1;
        }
        let recall = tp / total_pos;
        let precision = tp / (tp + fp);
        area += (recall - prev_recall) * precision;
        prev_recall = recall;
        i = j;
    }
    Ok(area)
}

/// Contiguous `[start, end)` runs of true labels.
fn segments(labels: &[bool]) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut i = 0;
    while i < labels.len() {
        if labels[i] {
            let start = i;
            while i < labels.len() && labels[i] {
                i += 1;
            }
            out.push((start, i));
        } else {
            i += 1;
        }
    }
    out
}

/// Soft labels for buffer level `ell`: 1 inside every segment, linearly
/// decaying from `1 - 1/(ell+1)` at distance one outside a segment edge down
/// to zero at distance `ell + 1`; overlaps take the maximum.
fn soft_labels(labels: &[bool], ell: usize) -> Vec<f64> {
    let mut soft: Vec<f64> = labels.iter().map(|&l| if l { 1.0 } else { 0.0 }).collect();
    if ell == 0 {
        return soft;
    }
    let n = labels.len();
    for (start, end) in segments(labels) {
        for q in 1..=ell {
            let value = 1.0 - q as f64 / (ell + 1) as f64;
            if start >= q {
                let idx = start - q;
                soft[idx] = soft[idx].max(value);
            }
            let idx = end + q - 1;
            if idx < n {
                soft[idx] = soft[idx].max(value);
            }
        }
    }
    soft
}

pub fn auc_roc(sl: &ScoredLabels) -> Result<f64> {
    let (scores, labels) = sl.masked();
    let weights: Vec<f64> = labels.iter().map(|&l| if l { 1.0 } else { 0.0 }).collect();
    weighted_auc_roc(&scores, &weights)
}

pub fn auc_pr(sl: &ScoredLabels) -> Result<f64> {
    let (scores, labels) = sl.masked();
    let weights: Vec<f64> = labels.iter().map(|&l| if l { 1.0 } else { 0.0 }).collect();
    weighted_auc_pr(&scores, &weights)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VusMetric {
    Pr,
    Roc,
}

/// Volume under the surface: mean weighted AUC over buffer levels
/// `0..=max_buffer`, each level relaxing the labels with a linear decay.
pub fn vus(sl: &ScoredLabels, metric: VusMetric, max_buffer: usize) -> Result<f64> {
    let (scores, labels) = sl.masked();
    let mut acc = 0.0;
    for ell in 0..=max_buffer {
        let weights = soft_labels(&labels, ell);
        acc += match metric {
            VusMetric::Pr => weighted_auc_pr(&scores, &weights)?,
            VusMetric::Roc => weighted_auc_roc(&scores, &weights)?,
        };
    }
    Ok(acc / (max_buffer + 1) as f64)
}

/// How the binarization threshold is chosen for the F1 metrics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ThresholdPolicy {
    /// a fixed operating point, e.g. the MV-KS critical value
    Given(f64),
    /// oracle convention: evaluate every distinct score and keep the best
    BestF1Sweep,
}

fn f1_from_flags(flags: &[bool], labels: &[bool]) -> f64 {
    let mut tp = 0.0;
    let mut fp = 0.0;
    let mut fneg = 0.0;
    for (&f, &l) in flags.iter().zip(labels.iter()) {
        match (f, l) {
            (true, true) => tp += 1.0,
            (true, false) => fp += 1.0,
            (false, true) => fneg += 1.0,
            _ => {}
        }
    }
    if tp == 0.0 {
        return 0.0;
    }
    2.0 * tp / (2.0 * tp + fp + fneg)
}

/// Marks every timestep of a ground-truth segment detected when any flag
/// inside the segment fires; flags outside segments are untouched.
fn point_adjust(flags: &[bool], labels: &[bool]) -> Vec<bool> {
    let mut adjusted = flags.to_vec();
    for (start, end) in segments(labels) {
        if flags[start..end].iter().any(|&f| f) {
            for slot in adjusted[start..end].iter_mut() {
                *slot = true;
            }
        }
    }
    adjusted
}

/// Standard and point-adjusted F1. With `BestF1Sweep` each variant is
/// maximized independently over all distinct score thresholds (flags are
/// `score >= threshold`). Returns `(f1_standard, f1_point_adjusted,
/// threshold_used_for_standard)`.
pub fn f1_scores(sl: &ScoredLabels, policy: ThresholdPolicy) -> Result<(f64, f64, f64)> {
    let (scores, labels) = sl.masked();
    match policy {
        ThresholdPolicy::Given(theta) => {
            let flags: Vec<bool> = scores.iter().map(|&s| s >= theta).collect();
            let standard = f1_from_flags(&flags, &labels);
            let adjusted = f1_from_flags(&point_adjust(&flags, &labels), &labels);
            Ok((standard, adjusted, theta))
        }
        ThresholdPolicy::BestF1Sweep => {
            let mut thresholds: Vec<f64> = scores.clone();
            thresholds.sort_by(|a, b| a.partial_cmp(b).unwrap());
            thresholds.dedup();
            let mut best_std = 0.0_f64;
            let mut best_adj = 0.0_f64;
            let mut best_theta = thresholds[0];
            for &theta in &thresholds {
                let flags: Vec<bool> = scores.iter().map(|&s| s >= theta).collect();
                let standard = f1_from_flags(&flags, &labels);
                let adjusted = f1_from_flags(&point_adjust(&flags, &labels), &labels);
                if standard > best_std {
                    best_std = standard;
                    best_theta = theta;
                }
                best_adj = best_adj.max(adjusted);
            }
            Ok((best_std, best_adj, best_theta))
        }
    }
}

/// Convenience wrapper producing the full report for one score vector.
pub fn report(
    sl: &ScoredLabels,
    max_buffer: usize,
    policy: ThresholdPolicy,
) -> Result<MetricReport> {
    let (f1_standard, f1_point_adjusted, threshold) = f1_scores(sl, policy)?;
    Ok(MetricReport {
        auc_roc: auc_roc(sl)?,
        auc_pr: auc_pr(sl)?,
        vus_roc: vus(sl, VusMetric::Roc, max_buffer)?,
        vus_pr: vus(sl, VusMetric::Pr, max_buffer)?,
        f1_standard,
        f1_point_adjusted,
        threshold,
        max_buffer,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn sl(scores: Vec<f64>, labels: Vec<bool>) -> ScoredLabels {
        ScoredLabels::new(scores, labels, 0).unwrap()
    }

    fn random_instance(n: usize, seed: u64) -> ScoredLabels {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let labels: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.3)).collect();
        // quantized scores force plenty of ties
        let scores: Vec<f64> =
            (0..n).map(|_| (rng.gen_range(0.0_f64..1.0) * 8.0).round() / 8.0).collect();
        if labels.iter().all(|&l| l) || labels.iter().all(|&l| !l) {
            return random_instance(n, seed + 1000);
        }
        sl(scores, labels)
    }

    /// O(n^2) pairwise oracle for AUC-ROC.
    fn auc_roc_pairwise(sl_: &ScoredLabels) -> f64 {
        let (scores, labels) = sl_.masked();
        let mut wins = 0.0;
        let mut pairs = 0.0;
        for i in 0..scores.len() {
            if !labels[i] {
                continue;
            }
            for j in 0..scores.len() {
                if labels[j] {
                    continue;
                }
                pairs += 1.0;
                if scores[i] > scores[j] {
                    wins += 1.0;
                } else if scores[i] == scores[j] {
                    wins += 0.5;
                }
            }
        }
        wins / pairs
    }

    /// Exhaustive threshold-sweep oracle for average precision.
    fn auc_pr_sweep(sl_: &ScoredLabels) -> f64 {
        let (scores, labels) = sl_.masked();
        let mut thresholds = scores.clone();
        thresholds.sort_by(|a, b| b.partial_cmp(a).unwrap());
        thresholds.dedup();
        let total_pos = labels.iter().filter(|&&l| l).count() as f64;
        let mut area = 0.0;
        let mut prev_recall = 0.0;
        for &theta in &thresholds {
            let mut tp = 0.0;
            let mut fp = 0.0;
            for (&s, &l) in scores.iter().zip(labels.iter()) {
                if s >= theta {
                    if l {
                        tp += 1.0;
                    } else {
                        fp += 1.0;
                    }
                }
            }
            let recall = tp / total_pos;
            let precision = tp / (tp + fp);
            area += (recall - prev_recall) * precision;
            prev_recall = recall;
        }
        area
    }

    /// Brute-force VUS: materialize soft labels per level and average the
    /// weighted AUCs computed with direct double loops.
    fn vus_brute(sl_: &ScoredLabels, metric: VusMetric, max_buffer: usize) -> f64 {
        let (scores, labels) = sl_.masked();
        let mut acc = 0.0;
        for ell in 0..=max_buffer {
            let w = soft_labels(&labels, ell);
            acc += match metric {
                VusMetric::Roc => {
                    let p: f64 = w.iter().sum();
                    let q: f64 = w.iter().map(|v| 1.0 - v).sum();
                    let mut credit = 0.0;
                    for i in 0..scores.len() {
                        for j in 0..scores.len() {
                            let c = if scores[i] > scores[j] {
                                1.0
                            } else if scores[i] == scores[j] {
                                0.5
                            } else {
                                0.0
                            };
                            credit += w[i] * (1.0 - w[j]) * c;
                        }
                    }
                    credit / (p * q)
                }
                VusMetric::Pr => {
                    let mut thresholds = scores.clone();
                    thresholds.sort_by(|a, b| b.partial_cmp(a).unwrap());
                    thresholds.dedup();
                    let total: f64 = w.iter().sum();
                    let mut area = 0.0;
                    let mut prev = 0.0;
                    for &theta in &thresholds {
                        let mut tp = 0.0;
                        let mut fp = 0.0;
                        for (&s, &wi) in scores.iter().zip(w.iter()) {
                            if s >= theta {
                                tp += wi;
                                fp += 1.0 - wi;
                            }
                        }
                        let recall = tp / total;
                        area += (recall - prev) * (tp / (tp + fp));
                        prev = recall;
                    }
                    area
                }
            };
        }
        acc / (max_buffer + 1) as f64
    }

    #[test]
    fn perfect_scores_hit_one() {
        let labels = vec![false, true, true, false, false, true];
        let scores: Vec<f64> = labels.iter().map(|&l| if l { 1.0 } else { 0.0 }).collect();
        let s = sl(scores.clone(), labels.clone());
        assert_eq!(auc_roc(&s).unwrap(), 1.0);
        assert_eq!(auc_pr(&s).unwrap(), 1.0);
        // buffered levels dilute the label mass, so exact 1.0 only holds at
        // buffer 0; graded scores that follow the soft labels stay maximal
        assert_eq!(vus(&s, VusMetric::Pr, 0).unwrap(), 1.0);
        let graded = ScoredLabels::new(soft_labels(&labels, 2), labels, 0).unwrap();
        for buffer in 1..=3 {
            let v = vus(&graded, VusMetric::Pr, buffer).unwrap();
            assert!(v > 0.85 && v <= 1.0, "buffer {buffer}: {v}");
        }
    }

    #[test]
    fn inverted_scores_hit_zero_roc() {
        let labels = vec![false, true, true, false];
        let scores: Vec<f64> = labels.iter().map(|&l| if l { 0.0 } else { 1.0 }).collect();
        assert_eq!(auc_roc(&sl(scores, labels)).unwrap(), 0.0);
    }

    #[test]
    fn constant_scores_give_prevalence_pr_and_half_roc() {
        let labels = vec![true, false, false, true, false, false, false, true, false, false];
        let scores = vec![0.7; 10];
        let s = sl(scores, labels);
        assert!((auc_pr(&s).unwrap() - 0.3).abs() < 1e-12);
        assert!((auc_roc(&s).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn auc_roc_matches_pairwise_oracle() {
        for seed in 0..100 {
            let inst = random_instance(50, seed);
            let fast = auc_roc(&inst).unwrap();
            let slow = auc_roc_pairwise(&inst);
            assert!((fast - slow).abs() < 1e-12, "seed {seed}: {fast} vs {slow}");
        }
    }

    #[test]
    fn auc_pr_matches_sweep_oracle() {
        for seed in 0..100 {
            let inst = random_instance(50, seed);
            let fast = auc_pr(&inst).unwrap();
            let slow = auc_pr_sweep(&inst);
            assert!((fast - slow).abs() < 1e-12, "seed {seed}: {fast} vs {slow}");
        }
    }

    #[test]
    fn vus_zero_buffer_equals_auc() {
        for seed in 0..30 {
            let inst = random_instance(40, seed);
            assert!((vus(&inst, VusMetric::Pr, 0).unwrap() - auc_pr(&inst).unwrap()).abs() < 1e-12);
            assert!(
                (vus(&inst, VusMetric::Roc, 0).unwrap() - auc_roc(&inst).unwrap()).abs() < 1e-12
            );
        }
    }

    #[test]
    fn vus_matches_brute_force() {
        for seed in 0..20 {
            let inst = random_instance(40, seed);
            for metric in [VusMetric::Pr, VusMetric::Roc] {
                let fast = vus(&inst, metric, 2).unwrap();
                let slow = vus_brute(&inst, metric, 2);
                assert!((fast - slow).abs() < 1e-12, "seed {seed}: {fast} vs {slow}");
            }
        }
    }

    #[test]
    fn soft_labels_decay_linearly() {
        let labels = vec![false, false, false, true, true, false, false, false];
        let soft = soft_labels(&labels, 2);
        // distance 1 -> 2/3, distance 2 -> 1/3, then zero
        assert!((soft[2] - 2.0 / 3.0).abs() < 1e-15);
        assert!((soft[1] - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(soft[0], 0.0);
        assert!((soft[5] - 2.0 / 3.0).abs() < 1e-15);
        assert!((soft[6] - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(soft[7], 0.0);
        assert_eq!(&soft[3..5], &[1.0, 1.0]);
    }

    #[test]
    fn metrics_invariant_under_monotone_transform() {
        for seed in 0..10 {
            let inst = random_instance(60, seed);
            let transformed = ScoredLabels::new(
                inst.scores.iter().map(|&s| (3.0 * s).exp()).collect(),
                inst.labels.clone(),
                0,
            )
            .unwrap();
            assert!((auc_roc(&inst).unwrap() - auc_roc(&transformed).unwrap()).abs() < 1e-12);
            assert!((auc_pr(&inst).unwrap() - auc_pr(&transformed).unwrap()).abs() < 1e-12);
            assert!(
                (vus(&inst, VusMetric::Pr, 3).unwrap() - vus(&transformed, VusMetric::Pr, 3).unwrap())
                    .abs()
                    < 1e-12
            );
        }
    }

    #[test]
    fn f1_perfect_flags() {
        let labels = vec![false, true, true, false, true];
        let scores: Vec<f64> = labels.iter().map(|&l| if l { 1.0 } else { 0.0 }).collect();
        let (std, adj, _) = f1_scores(&sl(scores, labels), ThresholdPolicy::Given(0.5)).unwrap();
        assert_eq!(std, 1.0);
        assert_eq!(adj, 1.0);
    }

    #[test]
    fn point_adjustment_rewards_single_hit() {
        // one flagged point inside a 100-point segment, nothing else
        let mut labels = vec![false; 120];
        for slot in labels[10..110].iter_mut() {
            *slot = true;
        }
        let mut scores = vec![0.0; 120];
        scores[50] = 1.0;
        let s = sl(scores, labels);
        let (std, adj, _) = f1_scores(&s, ThresholdPolicy::Given(0.5)).unwrap();
        // standard recall 1/100 -> F1 = 2/101; adjusted recall 1 -> F1 = 1
        assert!((std - 2.0 / 101.0).abs() < 1e-12);
        assert_eq!(adj, 1.0);
    }

    #[test]
    fn best_sweep_dominates_fixed_thresholds() {
        for seed in 0..10 {
            let inst = random_instance(50, seed);
            let (best, best_adj, _) = f1_scores(&inst, ThresholdPolicy::BestF1Sweep).unwrap();
            for theta in [0.1, 0.25, 0.5, 0.75, 0.9] {
                let (std, adj, _) = f1_scores(&inst, ThresholdPolicy::Given(theta)).unwrap();
                assert!(best >= std - 1e-12);
                assert!(best_adj >= adj - 1e-12);
            }
        }
    }

    #[test]
    fn masked_prefix_is_ignored() {
        // a perfect classifier on the valid range, garbage on the prefix
        let labels = vec![true, false, false, true, false, true];
        let scores = vec![9.0, 0.0, 0.0, 1.0, 0.0, 1.0];
        let masked = ScoredLabels::new(scores, labels, 2).unwrap();
        assert_eq!(auc_roc(&masked).unwrap(), 1.0);
    }

    #[test]
    fn single_class_is_an_error() {
        let s = sl(vec![0.1, 0.2, 0.3], vec![false, false, false]);
        assert!(auc_roc(&s).is_err());
        assert!(auc_pr(&s).is_err());
    }
}
