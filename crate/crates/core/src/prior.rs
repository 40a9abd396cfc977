//! Beta parameters for the binary summary base from prior knowledge.
//!
//! A binary classifier's class-1 scores are modelled as `Beta(a, b)`. Two
//! numbers pin the pair down: the fraction of the majority class `γ0`, which
//! must equal `F(1/2)`, and the expected accuracy of thresholding at 1/2,
//!
//! ```text
//! E_a = ∫_0^½ (1 − x) f(x) dx + ∫_½^1 x f(x) dx = F(½) − 2 L + μ,
//! ```
//!
//! where `L = ∫_0^½ x f(x) dx` and `μ = a / (a + b)`.

use serde::{Deserialize, Serialize};

use crate::distributions::{BetaParams, DirichletParams};
use crate::error::{Error, Result};
use crate::summary::{discretize_base, BaseMeasure, Partition, PartitionKind};

/// Multi-start points `(a, b)` for the simplex search.
pub const STARTS: [(f64, f64); 5] = [(1.0, 1.0), (0.5, 0.5), (5.0, 5.0), (2.0, 8.0), (8.0, 2.0)];

/// Residual below which a solution counts as exact.
pub const CONVERGED_MSE: f64 = 1e-8;
/// Residual at or above which the target is reported as unreachable.
pub const INFEASIBLE_MSE: f64 = 1e-4;

/// Expected accuracy assumed by [`auto_mass`] for binary tasks.
pub const AUTO_EXPECTED_ACCURACY: f64 = 0.97;

const LOG_BOUND: f64 = 7.0;
const MAX_ITERS: usize = 4000;

/// Minority-class fraction `γ1 ∈ (0, 1/2]` and expected accuracy `E_a ∈ (1/2, 1)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PriorKnowledge {
    pub minority_fraction: f64,
    pub expected_accuracy: f64,
}

impl PriorKnowledge {
    pub fn new(minority_fraction: f64, expected_accuracy: f64) -> Result<Self> {
        if !(minority_fraction > 0.0 && minority_fraction <= 0.5) {
            return Err(Error::InvalidArgument(format!(
                "minority fraction must lie in (0, 0.5], got {minority_fraction}"
            )));
        }
        if !(expected_accuracy > 0.5 && expected_accuracy < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "expected accuracy must lie in (0.5, 1), got {expected_accuracy}"
            )));
        }
        Ok(PriorKnowledge {
            minority_fraction,
            expected_accuracy,
        })
    }

    /// Majority fraction `γ0 = 1 − γ1`.
    pub fn majority_fraction(&self) -> f64 {
        1.0 - self.minority_fraction
    }
}

/// `(γ0, E_a)` implied by `Beta(a, b)`.
pub fn forward_map(p: &BetaParams) -> (f64, f64) {
    let gamma0 = p.cdf(0.5);
    let lower_mean = p.partial_mean(0.5);
    (gamma0, gamma0 - 2.0 * lower_mean + p.mean())
}

/// Result of the parameter search.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PriorSolution {
    pub params: BetaParams,
    /// Mean squared error between achieved and target `(γ0, E_a)`.
    pub residual: f64,
    pub achieved: (f64, f64),
    /// `residual < CONVERGED_MSE`.
    pub converged: bool,
}

pub fn solve_prior(k: &PriorKnowledge) -> Result<PriorSolution> {
    solve_targets(k.majority_fraction(), k.expected_accuracy)
}

/// Finds `Beta(a, b)` whose forward map is closest to `(gamma0, accuracy)`.
///
/// Nelder–Mead over `(ln a, ln b)` from each point of [`STARTS`]; the best
/// result wins. A best residual of at least [`INFEASIBLE_MSE`] is an error
/// carrying the best candidate.
pub fn solve_targets(gamma0: f64, accuracy: f64) -> Result<PriorSolution> {
    if !(gamma0 > 0.0 && gamma0 < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "γ0 must lie in (0, 1), got {gamma0}"
        )));
    }
    if !(accuracy > 0.0 && accuracy < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "expected accuracy must lie in (0, 1), got {accuracy}"
        )));
    }
    let loss = |z: [f64; 2]| {
        let p = BetaParams {
            a: z[0].exp(),
            b: z[1].exp(),
        };
        let (g, e) = forward_map(&p);
        0.5 * ((g - gamma0).powi(2) + (e - accuracy).powi(2))
    };
    let mut best: Option<([f64; 2], f64)> = None;
    for &(a, b) in &STARTS {
        let (z, f) = nelder_mead(&loss, [a.ln(), b.ln()]);
        if best.is_none_or(|(_, bf)| f < bf) {
            best = Some((z, f));
        }
    }
    let (z, residual) = best.expect("at least one start");
    let params = BetaParams {
        a: z[0].exp(),
        b: z[1].exp(),
    };
    if !(residual < INFEASIBLE_MSE) {
        return Err(Error::Infeasible {
            a: params.a,
            b: params.b,
            residual,
        });
    }
    Ok(PriorSolution {
        params,
        residual,
        achieved: forward_map(&params),
        converged: residual < CONVERGED_MSE,
    })
}

/// Observed summary chosen from the training class counts alone.
///
/// Interval bins get the Beta whose `F(½)` is the class-0 fraction and whose
/// expected accuracy is [`AUTO_EXPECTED_ACCURACY`]; argmax regions get the
/// class fractions; confidence shells get a Dirichlet with concentrations
/// `n_k / min_k n_k`.
pub fn auto_mass(partition: &Partition, class_counts: &[usize], floor: f64) -> Result<Vec<f64>> {
    if class_counts.len() != partition.num_classes() {
        return Err(Error::dim(
            "auto_mass",
            format!(
                "{} class counts for a {}-class partition",
                class_counts.len(),
                partition.num_classes()
            ),
        ));
    }
    if class_counts.iter().any(|&c| c == 0) {
        return Err(Error::InvalidArgument(
            "automatic summary needs every class present in the train split".into(),
        ));
    }
    let total: usize = class_counts.iter().sum();
    let base = match partition.kind() {
        PartitionKind::IntervalBins => {
            let gamma0 = class_counts[0] as f64 / total as f64;
            BaseMeasure::Beta(solve_targets(gamma0, AUTO_EXPECTED_ACCURACY)?.params)
        }
        PartitionKind::ArgmaxRegions => {
            BaseMeasure::ClassFractions(class_counts.iter().map(|&c| c as f64).collect())
        }
        PartitionKind::ArgmaxShells => {
            let min = *class_counts.iter().min().expect("nonempty") as f64;
            let conc: Vec<f64> = class_counts.iter().map(|&c| c as f64 / min).collect();
            BaseMeasure::Dirichlet(DirichletParams::new(conc)?)
        }
    };
    discretize_base(&base, partition, floor)
}

fn clamp(z: [f64; 2]) -> [f64; 2] {
    [
        z[0].clamp(-LOG_BOUND, LOG_BOUND),
        z[1].clamp(-LOG_BOUND, LOG_BOUND),
    ]
}

/// Two-dimensional Nelder–Mead with standard coefficients, kept inside the
/// box `[-LOG_BOUND, LOG_BOUND]²`.
fn nelder_mead(f: &impl Fn([f64; 2]) -> f64, start: [f64; 2]) -> ([f64; 2], f64) {
    let mut pts = [
        start,
        [start[0] + 0.5, start[1]],
        [start[0], start[1] + 0.5],
    ]
    .map(clamp);
    let mut vals = pts.map(|p| f(p));
    for _ in 0..MAX_ITERS {
        let mut order = [0, 1, 2];
        order.sort_by(|&i, &j| vals[i].total_cmp(&vals[j]));
        pts = order.map(|i| pts[i]);
        vals = order.map(|i| vals[i]);

        let size = (1..3)
            .map(|i| {
                (pts[i][0] - pts[0][0])
                    .abs()
                    .max((pts[i][1] - pts[0][1]).abs())
            })
            .fold(0.0, f64::max);
        if vals[2] - vals[0] <= 1e-20 && size < 1e-9 || vals[0] < 1e-24 {
            break;
        }

        let c = [0.5 * (pts[0][0] + pts[1][0]), 0.5 * (pts[0][1] + pts[1][1])];
        let along = |t: f64| clamp([c[0] + t * (pts[2][0] - c[0]), c[1] + t * (pts[2][1] - c[1])]);

        let r = along(-1.0);
        let fr = f(r);
        if fr < vals[0] {
            let e = along(-2.0);
            let fe = f(e);
            if fe < fr {
                (pts[2], vals[2]) = (e, fe);
            } else {
                (pts[2], vals[2]) = (r, fr);
            }
            continue;
        }
        if fr < vals[1] {
            (pts[2], vals[2]) = (r, fr);
            continue;
        }
        let (k, fk) = if fr < vals[2] {
            let k = along(-0.5);
            (k, f(k))
        } else {
            let k = along(0.5);
            (k, f(k))
        };
        if fk < vals[2].min(fr) {
            (pts[2], vals[2]) = (k, fk);
            continue;
        }
        for i in 1..3 {
            pts[i] = [0.5 * (pts[0][0] + pts[i][0]), 0.5 * (pts[0][1] + pts[i][1])];
            vals[i] = f(pts[i]);
        }
    }
    let i = (0..3).min_by(|&i, &j| vals[i].total_cmp(&vals[j])).unwrap();
    (pts[i], vals[i])
}
