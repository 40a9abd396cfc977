//! Evaluation metrics over predicted class probabilities.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::bnn::VariationalMlp;
use crate::error::{Error, Result};
use crate::par::Exec;
use crate::tensor::Tensor;

/// Number of equal-width confidence bins used by [`ece`].
pub const ECE_BINS: usize = 10;

/// Metrics of one evaluation run.
///
/// JSON keys and CSV columns: `nll, accuracy, ece, auroc, f1_macro,
/// mean_entropy, n, mc_samples`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub nll: f64,
    pub accuracy: f64,
    pub ece: f64,
    pub auroc: f64,
    pub f1_macro: f64,
    pub mean_entropy: f64,
    pub n: usize,
    pub mc_samples: usize,
}

impl MetricsRecord {
    pub const CSV_HEADER: &'static str =
        "nll,accuracy,ece,auroc,f1_macro,mean_entropy,n,mc_samples";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            self.nll,
            self.accuracy,
            self.ece,
            self.auroc,
            self.f1_macro,
            self.mean_entropy,
            self.n,
            self.mc_samples
        )
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }
}

fn check(probs: &Tensor, labels: &[usize]) -> Result<(usize, usize)> {
    let (n, k) = probs.as_matrix_dims("metrics")?;
    if n == 0 {
        return Err(Error::Empty("metrics"));
    }
    if labels.len() != n {
        return Err(Error::dim(
            "metrics",
            format!("{n} rows but {} labels", labels.len()),
        ));
    }
    if let Some(&y) = labels.iter().find(|&&y| y >= k) {
        return Err(Error::InvalidArgument(format!(
            "label {y} is not below {k}"
        )));
    }
    Ok((n, k))
}

/// Index and value of the row maximum; ties go to the lowest index.
pub fn argmax(row: &[f64]) -> (usize, f64) {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    (best, row[best])
}

/// `−mean ln p(y_i)`, with probabilities floored at the smallest normal f64.
pub fn nll(probs: &Tensor, labels: &[usize]) -> Result<f64> {
    let (n, _) = check(probs, labels)?;
    let total: f64 = labels
        .iter()
        .enumerate()
        .map(|(i, &y)| -probs.row(i)[y].max(f64::MIN_POSITIVE).ln())
        .sum();
    Ok(total / n as f64)
}

pub fn accuracy(probs: &Tensor, labels: &[usize]) -> Result<f64> {
    let (n, _) = check(probs, labels)?;
    let hits = labels
        .iter()
        .enumerate()
        .filter(|(i, &y)| argmax(probs.row(*i)).0 == y)
        .count();
    Ok(hits as f64 / n as f64)
}

/// One confidence bin `(lower, upper]` of the reliability table.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ReliabilityBin {
    pub lower: f64,
    pub upper: f64,
    pub count: usize,
    pub confidence: f64,
    pub accuracy: f64,
}

/// Reliability table over [`ECE_BINS`] equal-width bins of the max probability.
pub fn reliability(probs: &Tensor, labels: &[usize]) -> Result<Vec<ReliabilityBin>> {
    check(probs, labels)?;
    let mut count = [0usize; ECE_BINS];
    let mut conf = [0.0; ECE_BINS];
    let mut hits = [0.0; ECE_BINS];
    for (i, &y) in labels.iter().enumerate() {
        let (k, c) = argmax(probs.row(i));
        let b = ((c * ECE_BINS as f64).ceil() as usize).clamp(1, ECE_BINS) - 1;
        count[b] += 1;
        conf[b] += c;
        if k == y {
            hits[b] += 1.0;
        }
    }
    Ok((0..ECE_BINS)
        .map(|b| {
            let n = count[b].max(1) as f64;
            ReliabilityBin {
                lower: b as f64 / ECE_BINS as f64,
                upper: (b + 1) as f64 / ECE_BINS as f64,
                count: count[b],
                confidence: conf[b] / n,
                accuracy: hits[b] / n,
            }
        })
        .collect())
}

/// `Σ_b (n_b / n) |acc_b − conf_b|`.
pub fn ece(probs: &Tensor, labels: &[usize]) -> Result<f64> {
    let n = labels.len() as f64;
    Ok(reliability(probs, labels)?
        .iter()
        .map(|b| b.count as f64 / n * (b.accuracy - b.confidence).abs())
        .sum())
}

/// Mann–Whitney AUROC of `scores` for `positive` labels, midranks for ties.
/// `None` when either class is absent.
pub fn auroc_binary(scores: &[f64], positive: &[bool]) -> Option<f64> {
    let n_pos = positive.iter().filter(|&&p| p).count();
    let n_neg = positive.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // Ranks i+1 ..= j+1 share their average.
        let mid = 0.5 * ((i + 1) + (j + 1)) as f64;
        rank_sum += mid * order[i..=j].iter().filter(|&&k| positive[k]).count() as f64;
        i = j + 1;
    }
    let u = rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Some(u / (n_pos * n_neg) as f64)
}

/// Binary: AUROC of the class-1 probability. Multiclass: macro average of
/// one-vs-rest AUROCs over classes present with both outcomes. 0.5 when no
/// class qualifies.
pub fn auroc(probs: &Tensor, labels: &[usize]) -> Result<f64> {
    let (n, k) = check(probs, labels)?;
    let class_auc = |c: usize| {
        let scores: Vec<f64> = (0..n).map(|i| probs.row(i)[c]).collect();
        let pos: Vec<bool> = labels.iter().map(|&y| y == c).collect();
        auroc_binary(&scores, &pos)
    };
    if k == 2 {
        return Ok(class_auc(1).unwrap_or(0.5));
    }
    let aucs: Vec<f64> = (0..k).filter_map(class_auc).collect();
    if aucs.is_empty() {
        return Ok(0.5);
    }
    Ok(aucs.iter().sum::<f64>() / aucs.len() as f64)
}

/// Macro-averaged F1 of argmax predictions. A class with no predictions and
/// no positives scores 0.
pub fn f1_macro(probs: &Tensor, labels: &[usize]) -> Result<f64> {
    let (_, k) = check(probs, labels)?;
    let mut tp = vec![0usize; k];
    let mut fp = vec![0usize; k];
    let mut fn_ = vec![0usize; k];
    for (i, &y) in labels.iter().enumerate() {
        let p = argmax(probs.row(i)).0;
        if p == y {
            tp[y] += 1;
        } else {
            fp[p] += 1;
            fn_[y] += 1;
        }
    }
    let total: f64 = (0..k)
        .map(|c| {
            let denom = 2 * tp[c] + fp[c] + fn_[c];
            if denom == 0 {
                0.0
            } else {
                2.0 * tp[c] as f64 / denom as f64
            }
        })
        .sum();
    Ok(total / k as f64)
}

/// Entropy `−Σ p ln p` of each row.
pub fn entropies(probs: &Tensor) -> Vec<f64> {
    (0..probs.rows())
        .map(|i| {
            -probs
                .row(i)
                .iter()
                .filter(|&&p| p > 0.0)
                .map(|&p| p * p.ln())
                .sum::<f64>()
        })
        .collect()
}

pub fn mean_entropy(probs: &Tensor) -> Result<f64> {
    let e = entropies(probs);
    if e.is_empty() {
        return Err(Error::Empty("mean_entropy"));
    }
    Ok(e.iter().sum::<f64>() / e.len() as f64)
}

/// All metrics of a probability matrix `[n × K]`.
pub fn metrics_from_probs(
    probs: &Tensor,
    labels: &[usize],
    mc_samples: usize,
) -> Result<MetricsRecord> {
    let (n, _) = check(probs, labels)?;
    Ok(MetricsRecord {
        nll: nll(probs, labels)?,
        accuracy: accuracy(probs, labels)?,
        ece: ece(probs, labels)?,
        auroc: auroc(probs, labels)?,
        f1_macro: f1_macro(probs, labels)?,
        mean_entropy: mean_entropy(probs)?,
        n,
        mc_samples,
    })
}

/// Metrics of the `M`-draw Monte Carlo predictive (the means when `point`).
pub fn evaluate<R: Rng + ?Sized>(
    model: &VariationalMlp,
    x: &Tensor,
    labels: &[usize],
    m: usize,
    point: bool,
    rng: &mut R,
    exec: Exec,
) -> Result<MetricsRecord> {
    if labels.is_empty() {
        return Err(Error::Empty("evaluate"));
    }
    let probs = model.predictive(x, m, point, rng, exec)?;
    metrics_from_probs(&probs, labels, if point { 1 } else { m })
}

/// Mean predictive entropies in-domain and out-of-distribution, and their
/// difference `ood − in`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OodReport {
    pub in_entropy: f64,
    pub ood_entropy: f64,
    pub delta: f64,
}

/// `Δ_OOD` with one shared set of weight draws for both inputs.
pub fn delta_ood<R: Rng + ?Sized>(
    model: &VariationalMlp,
    in_x: &Tensor,
    ood_x: &Tensor,
    m: usize,
    point: bool,
    rng: &mut R,
    exec: Exec,
) -> Result<OodReport> {
    if in_x.cols() != ood_x.cols() || in_x.rank() != 2 || ood_x.rank() != 2 {
        return Err(Error::dim(
            "delta_ood",
            format!("in-domain {:?} vs ood {:?}", in_x.shape(), ood_x.shape()),
        ));
    }
    if in_x.rows() == 0 || ood_x.rows() == 0 {
        return Err(Error::Empty("delta_ood"));
    }
    let noises = if point {
        Vec::new()
    } else {
        model.sample_noise_set(m, rng)
    };
    let p_in = model.predictive_with(in_x, &noises, point, exec)?;
    let p_ood = model.predictive_with(ood_x, &noises, point, exec)?;
    Ok(ood_report(&p_in, &p_ood)?)
}

pub fn ood_report(p_in: &Tensor, p_ood: &Tensor) -> Result<OodReport> {
    let in_entropy = mean_entropy(p_in)?;
    let ood_entropy = mean_entropy(p_ood)?;
    Ok(OodReport {
        in_entropy,
        ood_entropy,
        delta: ood_entropy - in_entropy,
    })
}

/// Sample mean and standard error `s / √n`.
pub fn mean_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn probs(rows: &[[f64; 2]]) -> Tensor {
        Tensor::matrix(rows.len(), 2, rows.iter().flatten().copied().collect()).unwrap()
    }

    #[test]
    fn perfect_predictions() {
        let p = probs(&[[1.0, 0.0], [0.0, 1.0], [1.0, 0.0]]);
        let m = metrics_from_probs(&p, &[0, 1, 0], 1).unwrap();
        assert_eq!(
            (m.nll, m.accuracy, m.ece, m.mean_entropy),
            (0.0, 1.0, 0.0, 0.0)
        );
        assert_eq!((m.auroc, m.f1_macro), (1.0, 1.0));
    }

    #[test]
    fn constant_half_predictor() {
        let p = probs(&[[0.5, 0.5]; 4]);
        let y = [0, 1, 0, 1];
        assert!(ece(&p, &y).unwrap().abs() < 1e-12);
        assert!((nll(&p, &y).unwrap() - 2f64.ln()).abs() < 1e-12);
        assert_eq!(accuracy(&p, &y).unwrap(), 0.5);
        assert_eq!(auroc(&p, &y).unwrap(), 0.5);
    }

    #[test]
    fn overconfident_predictor() {
        let p = probs(&[[1.0, 0.0]; 4]);
        assert!((ece(&p, &[0, 1, 0, 1]).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn calibrated_bins_have_zero_ece() {
        // Bin (0.7, 0.8]: confidence 0.75 and 3 of 4 correct. Bin (0.9, 1]:
        // confidence 1.0, all correct.
        let p = probs(&[
            [0.75, 0.25],
            [0.75, 0.25],
            [0.75, 0.25],
            [0.75, 0.25],
            [0.0, 1.0],
            [1.0, 0.0],
        ]);
        assert!(ece(&p, &[0, 0, 0, 1, 1, 0]).unwrap().abs() < 1e-12);
    }

    #[test]
    fn auroc_monotone_invariance_and_ties() {
        let scores = [0.1, 0.4, 0.35, 0.8, 0.65, 0.2, 0.9, 0.5];
        let pos = [false, true, false, true, false, false, true, true];
        let a = auroc_binary(&scores, &pos).unwrap();
        let cubed: Vec<f64> = scores.iter().map(|s| s * s * s).collect();
        assert_eq!(a, auroc_binary(&cubed, &pos).unwrap());
        // Pairwise count: 14 of 16 positive/negative pairs ordered correctly.
        assert!((a - 14.0 / 16.0).abs() < 1e-12);
        assert_eq!(
            auroc_binary(&[0.5; 4], &[true, false, true, false]),
            Some(0.5)
        );
        assert_eq!(auroc_binary(&[0.1, 0.2], &[true, true]), None);
    }

    #[test]
    fn f1_counts_empty_class_as_zero() {
        let p = Tensor::matrix(2, 3, vec![0.8, 0.1, 0.1, 0.1, 0.8, 0.1]).unwrap();
        let f = f1_macro(&p, &[0, 1]).unwrap();
        assert!((f - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn nll_decreases_with_true_class_probability() {
        let y = [0, 1];
        let lo = nll(&probs(&[[0.6, 0.4], [0.3, 0.7]]), &y).unwrap();
        let hi = nll(&probs(&[[0.7, 0.3], [0.2, 0.8]]), &y).unwrap();
        assert!(hi < lo);
    }

    #[test]
    fn ood_of_self_is_zero() {
        let p = probs(&[[0.9, 0.1], [0.4, 0.6]]);
        assert_eq!(ood_report(&p, &p).unwrap().delta, 0.0);
        let u = probs(&[[0.5, 0.5]; 3]);
        let r = ood_report(&u, &u).unwrap();
        assert!((r.in_entropy - 2f64.ln()).abs() < 1e-15 && r.delta == 0.0);
    }

    #[test]
    fn csv_and_json_keys() {
        let m = metrics_from_probs(&probs(&[[0.5, 0.5], [0.2, 0.8]]), &[0, 1], 32).unwrap();
        assert_eq!(
            m.csv_row().split(',').count(),
            MetricsRecord::CSV_HEADER.split(',').count()
        );
        let j: serde_json::Value = serde_json::from_str(&m.to_json().unwrap()).unwrap();
        for key in MetricsRecord::CSV_HEADER.split(',') {
            assert!(j.get(key).is_some(), "{key}");
        }
    }
}
