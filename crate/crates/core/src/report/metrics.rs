use serde::{Deserialize, Serialize};

use crate::error::{PasaError, Result};

fn is_positive(label: f64) -> bool {
    label > 0.5
}

/// Area under the ROC curve as the Mann-Whitney statistic with midranks:
/// `P(s+ > s-) + P(s+ = s-) / 2`.
pub fn auc(scores: &[f64], labels: &[f64]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(PasaError::Dimension(format!(
            "{} scores but {} labels",
            scores.len(),
            labels.len()
        )));
    }
    let n_pos = labels.iter().filter(|&&l| is_positive(l)).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(PasaError::UndefinedAuc);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_unstable_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    let mut pos_rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        // Ranks i+1..=j share their average.
        let midrank = (i + 1 + j) as f64 / 2.0;
        let pos_in_tie = order[i..j].iter().filter(|&&r| is_positive(labels[r])).count();
        pos_rank_sum += midrank * pos_in_tie as f64;
        i = j;
    }
    let n_pos = n_pos as f64;
    Ok((pos_rank_sum - n_pos * (n_pos + 1.0) / 2.0) / (n_pos * n_neg as f64))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    /// Positives predicted negative.
    pub false_negatives: usize,
    /// Negatives predicted positive.
    pub false_positives: usize,
    /// All wrong predictions.
    pub false_total: usize,
}

fn predicted(score: f64, cutoff: f64) -> bool {
    score > cutoff
}

pub fn confusion_counts(scores: &[f64], labels: &[f64], cutoff: f64) -> ConfusionCounts {
    let mut fneg = 0;
    let mut fpos = 0;
    for (&s, &l) in scores.iter().zip(labels) {
        match (is_positive(l), predicted(s, cutoff)) {
            (true, false) => fneg += 1,
            (false, true) => fpos += 1,
            _ => {}
        }
    }
    ConfusionCounts { false_negatives: fneg, false_positives: fpos, false_total: fneg + fpos }
}

/// Rows misclassified by model `a` that model `b` gets right.
pub fn corrected_count(scores_a: &[f64], scores_b: &[f64], labels: &[f64], cutoff: f64) -> usize {
    scores_a
        .iter()
        .zip(scores_b)
        .zip(labels)
        .filter(|((&a, &b), &l)| {
            let truth = is_positive(l);
            predicted(a, cutoff) != truth && predicted(b, cutoff) == truth
        })
        .count()
}
