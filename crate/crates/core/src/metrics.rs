//! ROC and precision-recall curves from LOO predictive probabilities.
//! Tied scores form a single vertex.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub x: f64,
    pub y: f64,
    /// Score at or above which observations are called positive; `+∞` for
    /// the empty-prediction endpoint.
    #[serde(with = "crate::serde_f64")]
    pub threshold: f64,
}

/// `(score, positives, negatives)` for one distinct score.
type Group = (f64, usize, usize);

/// Counts per distinct score, descending, with total positives and negatives.
fn grouped(scores: &[f64], labels: &[u8]) -> Result<(Vec<Group>, usize, usize)> {
    if scores.len() != labels.len() {
        return Err(Error::Dimension {
            what: "scores",
            expected: labels.len(),
            actual: scores.len(),
        });
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::Domain("NaN score".into()));
    }
    let pos = labels.iter().filter(|&&y| y == 1).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::CurveUndefined);
    }
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut groups: Vec<(f64, usize, usize)> = Vec::new();
    for k in idx {
        let (tp, fp) = if labels[k] == 1 { (1, 0) } else { (0, 1) };
        match groups.last_mut() {
            Some(g) if g.0 == scores[k] => {
                g.1 += tp;
                g.2 += fp;
            }
            _ => groups.push((scores[k], tp, fp)),
        }
    }
    Ok((groups, pos, neg))
}

/// `(FPR, TPR)` vertices from `(0,0)` to `(1,1)`, by descending threshold.
pub fn roc_curve(scores: &[f64], labels: &[u8]) -> Result<Vec<CurvePoint>> {
    let (groups, pos, neg) = grouped(scores, labels)?;
    let mut pts = vec![CurvePoint {
        x: 0.0,
        y: 0.0,
        threshold: f64::INFINITY,
    }];
    let (mut tp, mut fp) = (0, 0);
    for (s, gp, gn) in groups {
        tp += gp;
        fp += gn;
        pts.push(CurvePoint {
            x: fp as f64 / neg as f64,
            y: tp as f64 / pos as f64,
            threshold: s,
        });
    }
    Ok(pts)
}

/// Trapezoidal area under an ROC curve.
pub fn auroc(curve: &[CurvePoint]) -> f64 {
    curve
        .windows(2)
        .map(|w| (w[1].x - w[0].x) * (w[1].y + w[0].y) * 0.5)
        .sum()
}

/// `(recall, precision)` vertices by descending threshold, starting at
/// recall 0 with precision 1.
pub fn pr_curve(scores: &[f64], labels: &[u8]) -> Result<Vec<CurvePoint>> {
    let (groups, pos, _) = grouped(scores, labels)?;
    let mut pts = vec![CurvePoint {
        x: 0.0,
        y: 1.0,
        threshold: f64::INFINITY,
    }];
    let (mut tp, mut called) = (0, 0);
    for (s, gp, gn) in groups {
        tp += gp;
        called += gp + gn;
        pts.push(CurvePoint {
            x: tp as f64 / pos as f64,
            y: tp as f64 / called as f64,
            threshold: s,
        });
    }
    Ok(pts)
}

/// Step-wise area `Σ (R_k − R_{k−1}) P_k` without interpolation.
pub fn auprc(curve: &[CurvePoint]) -> f64 {
    curve.windows(2).map(|w| (w[1].x - w[0].x) * w[1].y).sum()
}

/// Probability that a random positive outscores a random negative, ties
/// counted one half, by exhaustive pair counting.
pub fn pair_count_auroc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    grouped(scores, labels)?;
    let (mut wins, mut pairs) = (0.0, 0.0);
    for (sp, _) in scores.iter().zip(labels).filter(|(_, &y)| y == 1) {
        for (sn, _) in scores.iter().zip(labels).filter(|(_, &y)| y == 0) {
            pairs += 1.0;
            if sp > sn {
                wins += 1.0;
            } else if sp == sn {
                wins += 0.5;
            }
        }
    }
    Ok(wins / pairs)
}
