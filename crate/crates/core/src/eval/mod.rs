//! Rank statistics and the three evaluation protocols: LDS, greedy data
//! selection, and top-1 data classification.

mod planted;

pub use planted::{synth_planted_dataset, PlantedConfig};

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Average (fractional) ranks, 1-based; ties share the mean of their positions.
pub fn average_ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut ranks = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman correlation plus a flag set when either input is constant
/// (the correlation is then reported as 0).
pub fn spearman_flagged(a: &[f64], b: &[f64]) -> Result<(f64, bool)> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch { expected: a.len(), got: b.len() });
    }
    if a.len() < 2 {
        return Err(Error::InvalidSize("spearman needs at least two points".into()));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("spearman input".into()));
    }
    let (ra, rb) = (average_ranks(a), average_ranks(b));
    let mean = (a.len() as f64 + 1.0) / 2.0;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in ra.iter().zip(&rb) {
        let (dx, dy) = (x - mean, y - mean);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return Ok((0.0, true));
    }
    Ok(((sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0), false))
}

pub fn spearman(a: &[f64], b: &[f64]) -> Result<f64> {
    spearman_flagged(a, b).map(|(r, _)| r)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LdsReport {
    /// Correlations of the non-degenerate targets, in column order.
    pub per_target: Vec<f64>,
    pub mean: f64,
    pub num_subsets: usize,
    pub degenerate_count: usize,
    /// Column indices excluded from `per_target`.
    pub degenerate_targets: Vec<usize>,
}

/// Per-target Spearman over subsets (rows) between estimates and oracle labels.
pub fn lds(scores: &Matrix, labels: &Matrix) -> Result<LdsReport> {
    if scores.shape() != labels.shape() {
        return Err(Error::Format(format!(
            "score matrix is {:?} but labels are {:?}",
            scores.shape(),
            labels.shape()
        )));
    }
    if scores.rows() < 2 {
        return Err(Error::InvalidSize("lds needs at least two subsets".into()));
    }
    let mut per_target = Vec::new();
    let mut degenerate_targets = Vec::new();
    for j in 0..scores.cols() {
        let (r, degenerate) = spearman_flagged(&scores.column(j), &labels.column(j))?;
        if degenerate {
            degenerate_targets.push(j);
        } else {
            per_target.push(r);
        }
    }
    let mean = if per_target.is_empty() {
        0.0
    } else {
        per_target.iter().sum::<f64>() / per_target.len() as f64
    };
    Ok(LdsReport {
        per_target,
        mean,
        num_subsets: scores.rows(),
        degenerate_count: degenerate_targets.len(),
        degenerate_targets,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    pub selected_ids: Vec<usize>,
    /// Best (smallest, 1-based) rank of each selected id across test rows.
    pub scores: Vec<usize>,
}

fn by_score_desc(row: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..row.len()).collect();
    idx.sort_by(|&a, &b| row[b].total_cmp(&row[a]).then(a.cmp(&b)));
    idx
}

/// Greedy selection: each training column's score is its best rank over the
/// test rows (descending score, ties to the lower id); keep the `k` best.
pub fn select_topk(scores: &Matrix, k: usize) -> Result<SelectionResult> {
    let n = scores.cols();
    if k == 0 || k > n {
        return Err(Error::InvalidSize(format!("k must be in 1..={n}, got {k}")));
    }
    if scores.rows() == 0 {
        return Err(Error::InvalidSize("selection needs at least one test row".into()));
    }
    let mut best = vec![usize::MAX; n];
    for r in 0..scores.rows() {
        for (rank, &i) in by_score_desc(scores.row(r)).iter().enumerate() {
            best[i] = best[i].min(rank + 1);
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| best[a].cmp(&best[b]).then(a.cmp(&b)));
    order.truncate(k);
    Ok(SelectionResult {
        scores: order.iter().map(|&i| best[i]).collect(),
        selected_ids: order,
    })
}

/// Index of the highest score in `row` (lowest index among ties).
pub fn argmax(row: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, v) in row.iter().enumerate() {
        match best {
            Some(b) if row[b].total_cmp(v) != Ordering::Less => {}
            _ => best = Some(i),
        }
    }
    best
}

/// Fraction of test rows whose top-scoring training column shares their tag.
pub fn classify_by_top1(scores: &Matrix, train_tags: &[Option<String>], test_tags: &[Option<String>]) -> Result<f64> {
    if scores.rows() != test_tags.len() {
        return Err(Error::DimensionMismatch { expected: scores.rows(), got: test_tags.len() });
    }
    if scores.cols() != train_tags.len() {
        return Err(Error::DimensionMismatch { expected: scores.cols(), got: train_tags.len() });
    }
    if scores.rows() == 0 || scores.cols() == 0 {
        return Err(Error::InvalidSize("classification needs a non-empty score matrix".into()));
    }
    if let Some(i) = train_tags.iter().position(Option::is_none) {
        return Err(Error::MissingTag(i));
    }
    let mut hits = 0usize;
    for (r, tag) in test_tags.iter().enumerate() {
        let tag = tag.as_ref().ok_or(Error::MissingTag(r))?;
        let top = argmax(scores.row(r)).expect("non-empty row");
        if train_tags[top].as_ref() == Some(tag) {
            hits += 1;
        }
    }
    Ok(hits as f64 / scores.rows() as f64)
}
