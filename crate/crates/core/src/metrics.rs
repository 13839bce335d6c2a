//! Evaluation statistics and grouped summaries.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gbi::SweepResult;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RocResult {
    pub auc: f64,
    /// Descending; the first entry is `+∞` (nothing classified positive).
    pub thresholds: Vec<f64>,
    pub tpr: Vec<f64>,
    pub fpr: Vec<f64>,
}

fn sorted(v: &[f64]) -> Vec<f64> {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    s
}

/// Area under the ROC curve by the Mann–Whitney statistic, ties counted half.
/// Positive scores are expected to be higher.
pub fn aucroc(scores_pos: &[f64], scores_neg: &[f64]) -> Result<RocResult> {
    if scores_pos.is_empty() || scores_neg.is_empty() {
        return Err(Error::invalid("aucroc needs non-empty positive and negative scores"));
    }
    if scores_pos.iter().chain(scores_neg).any(|s| s.is_nan()) {
        return Err(Error::invalid("aucroc scores contain NaN"));
    }
    let neg = sorted(scores_neg);
    let pos = sorted(scores_pos);
    // Twice the Mann–Whitney U, kept integral so the result is exact.
    let mut twice_u: u128 = 0;
    for &p in &pos {
        let below = neg.partition_point(|&n| n < p);
        let not_above = neg.partition_point(|&n| n <= p);
        twice_u += 2 * below as u128 + (not_above - below) as u128;
    }
    let d = 2 * pos.len() as u128 * neg.len() as u128;
    // Evaluating the smaller side directly makes auc(a, b) + auc(b, a) == 1 exactly.
    let auc = if 2 * twice_u <= d {
        twice_u as f64 / d as f64
    } else {
        1.0 - (d - twice_u) as f64 / d as f64
    };

    let mut thresholds = vec![f64::INFINITY];
    let mut all: Vec<f64> = pos.iter().chain(&neg).copied().collect();
    all.sort_by(|a, b| b.total_cmp(a));
    all.dedup();
    thresholds.extend(all);
    let frac_at_least = |s: &[f64], t: f64| (s.len() - s.partition_point(|&x| x < t)) as f64 / s.len() as f64;
    let tpr = thresholds.iter().map(|&t| frac_at_least(&pos, t)).collect();
    let fpr = thresholds.iter().map(|&t| frac_at_least(&neg, t)).collect();
    Ok(RocResult { auc, thresholds, tpr, fpr })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceBin {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
    /// NaN for empty bins.
    pub accuracy: f64,
}

/// Bins predictions by their maximum belief into `n_bins` equal-width bins over
/// `[0, 1]`; the prediction is the arg-max class.
pub fn confidence_bins(beliefs: &[Vec<f32>], labels: &[usize], n_bins: usize) -> Result<Vec<ConfidenceBin>> {
    if beliefs.len() != labels.len() {
        return Err(Error::invalid(format!("{} beliefs vs {} labels", beliefs.len(), labels.len())));
    }
    if n_bins == 0 {
        return Err(Error::invalid("n_bins must be positive"));
    }
    let mut count = vec![0usize; n_bins];
    let mut correct = vec![0usize; n_bins];
    for (b, &l) in beliefs.iter().zip(labels) {
        let pred = crate::gbi::argmax(b);
        let conf = b[pred] as f64;
        // The small offset keeps exact bin edges such as 1/10 in the upper bin
        // despite single-precision rounding.
        let bin = ((conf * n_bins as f64 + 1e-6).floor() as usize).min(n_bins - 1);
        count[bin] += 1;
        correct[bin] += usize::from(pred == l);
    }
    Ok((0..n_bins)
        .map(|i| ConfidenceBin {
            lo: i as f64 / n_bins as f64,
            hi: (i + 1) as f64 / n_bins as f64,
            count: count[i],
            accuracy: if count[i] == 0 { f64::NAN } else { correct[i] as f64 / count[i] as f64 },
        })
        .collect())
}

/// Number of adjacent non-empty bin pairs whose accuracy decreases.
pub fn accuracy_inversions(bins: &[ConfidenceBin]) -> usize {
    let acc: Vec<f64> = bins.iter().filter(|b| b.count > 0).map(|b| b.accuracy).collect();
    acc.windows(2).filter(|w| w[1] < w[0]).count()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum MseGroup {
    LastTrainingMean,
    OtherTrainingMean,
    InsideRange,
    OutsideRange,
}

impl MseGroup {
    pub const ALL: [MseGroup; 4] = [
        MseGroup::LastTrainingMean,
        MseGroup::OtherTrainingMean,
        MseGroup::InsideRange,
        MseGroup::OutsideRange,
    ];

    pub fn label(self) -> &'static str {
        match self {
            MseGroup::LastTrainingMean => "Mean of the last training block",
            MseGroup::OtherTrainingMean => "The other training mean",
            MseGroup::InsideRange => "Inside training range",
            MseGroup::OutsideRange => "Outside training range",
        }
    }

    pub fn key(self) -> &'static str {
        match self {
            MseGroup::LastTrainingMean => "last_mean",
            MseGroup::OtherTrainingMean => "other_mean",
            MseGroup::InsideRange => "inside",
            MseGroup::OutsideRange => "outside",
        }
    }
}

const EPS: f64 = 1e-9;

/// Group of a sweep mean, given the two training means and the one active in
/// the last training block. Means strictly between the training means are
/// inside, the rest outside.
pub fn mse_group(mean: f64, training_means: [f64; 2], last_block_mean: f64) -> MseGroup {
    let (lo, hi) = (training_means[0].min(training_means[1]), training_means[0].max(training_means[1]));
    if (mean - last_block_mean).abs() < EPS {
        MseGroup::LastTrainingMean
    } else if training_means.iter().any(|m| (mean - m).abs() < EPS) {
        MseGroup::OtherTrainingMean
    } else if mean > lo && mean < hi {
        MseGroup::InsideRange
    } else {
        MseGroup::OutsideRange
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedSweep {
    pub seed: u64,
    pub last_block_mean: f64,
    pub results: Vec<SweepResult>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupRow {
    pub group: MseGroup,
    pub mean: f64,
    /// Standard error over seeds.
    pub sem: f64,
    pub n_seeds: usize,
}

/// Four-row grouped MSE table: each seed's row value is the unweighted mean of
/// its member MSEs; rows report mean ± SEM over seeds.
pub fn mse_group_table(seeds: &[SeedSweep], training_means: [f64; 2], required_means: &[f64]) -> Result<Vec<GroupRow>> {
    if seeds.is_empty() {
        return Err(Error::invalid("mse_group_table needs at least one seed"));
    }
    let mut per_group: Vec<Vec<f64>> = vec![Vec::new(); 4];
    for s in seeds {
        for &m in required_means {
            if !s.results.iter().any(|r| (r.mean - m).abs() < EPS) {
                return Err(Error::invalid(format!("seed {}: sweep is missing mean {m}", s.seed)));
            }
        }
        if !training_means.iter().any(|m| (m - s.last_block_mean).abs() < EPS) {
            return Err(Error::invalid(format!("seed {}: last block mean {} is not a training mean", s.seed, s.last_block_mean)));
        }
        let mut acc = [(0.0f64, 0usize); 4];
        for r in &s.results {
            let g = mse_group(r.mean, training_means, s.last_block_mean) as usize;
            acc[g].0 += r.mse;
            acc[g].1 += 1;
        }
        for (g, &(sum, n)) in acc.iter().enumerate() {
            if n > 0 {
                per_group[g].push(sum / n as f64);
            }
        }
    }
    Ok(MseGroup::ALL
        .iter()
        .map(|&g| {
            let v = &per_group[g as usize];
            let (mean, sd) = mean_sd(v);
            GroupRow {
                group: g,
                mean,
                sem: if v.len() > 1 { sd / (v.len() as f64).sqrt() } else { 0.0 },
                n_seeds: v.len(),
            }
        })
        .collect())
}

/// Mean and sample standard deviation (0 for fewer than two values; NaN mean when empty).
pub fn mean_sd(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (m, 0.0);
    }
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, var.sqrt())
}

pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

/// Average ranks (1-based), ties sharing their mean rank.
pub fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut r = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            r[k] = avg;
        }
        i = j + 1;
    }
    r
}

pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    pearson(&ranks(a), &ranks(b))
}

pub fn median(v: &[f64]) -> f64 {
    let s = sorted(v);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}
