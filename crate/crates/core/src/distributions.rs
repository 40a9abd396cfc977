//! Gaussian, Beta and Dirichlet primitives.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::quadrature;
use crate::special::{ln_beta, ln_gamma, softplus};
use crate::tensor::Tensor;

/// Fully factorized Gaussian with scale `softplus(rho)`.
#[derive(Clone, Debug, PartialEq)]
pub struct DiagGaussian {
    pub mu: Tensor,
    pub rho: Tensor,
}

impl DiagGaussian {
    pub fn new(mu: Tensor, rho: Tensor) -> Result<Self> {
        if mu.shape() != rho.shape() {
            return Err(Error::dim(
                "diag_gaussian",
                format!("mu {:?} vs rho {:?}", mu.shape(), rho.shape()),
            ));
        }
        Ok(DiagGaussian { mu, rho })
    }

    pub fn sigma(&self) -> Tensor {
        self.rho.map(softplus)
    }

    /// `mu + sigma ⊙ noise` for externally drawn standard-normal noise.
    pub fn rsample(&self, noise: &Tensor) -> Result<Tensor> {
        if noise.shape() != self.mu.shape() {
            return Err(Error::dim(
                "rsample",
                format!("noise {:?} vs mu {:?}", noise.shape(), self.mu.shape()),
            ));
        }
        let mut out = self.mu.clone();
        for ((o, &r), &e) in out
            .data_mut()
            .iter_mut()
            .zip(self.rho.data())
            .zip(noise.data())
        {
            *o += softplus(r) * e;
        }
        Ok(out)
    }

    /// `KL[q || N(0, prior_std² I)]` summed over entries.
    pub fn kl(&self, prior_std: f64) -> f64 {
        let var0 = prior_std * prior_std;
        self.mu
            .data()
            .iter()
            .zip(self.rho.data())
            .map(|(&m, &r)| {
                let s = softplus(r);
                (prior_std / s).ln() + (s * s + m * m) / (2.0 * var0) - 0.5
            })
            .sum()
    }

    /// Records `mu` and `rho` as parameters on `tape`.
    pub fn on_tape<'t>(&self, tape: &'t Tape) -> TapedGaussian<'t> {
        let rho = tape.param(self.rho.clone());
        TapedGaussian {
            mu: tape.param(self.mu.clone()),
            rho,
            sigma: rho.softplus().expect("softplus is total"),
        }
    }
}

/// A [`DiagGaussian`] whose parameters live on a tape, with
/// `sigma = softplus(rho)` recorded once.
#[derive(Clone, Copy, Debug)]
pub struct TapedGaussian<'t> {
    pub mu: Var<'t>,
    pub rho: Var<'t>,
    pub sigma: Var<'t>,
}

impl<'t> TapedGaussian<'t> {
    /// Reparameterized sample, differentiable in `mu` and `rho`.
    pub fn rsample(&self, noise: &Tensor) -> Result<Var<'t>> {
        self.mu.affine_noise(self.sigma, noise)
    }

    /// Closed-form KL to `N(0, prior_std² I)`, differentiable.
    pub fn kl(&self, prior_std: f64) -> Result<Var<'t>> {
        self.mu.gaussian_kl(self.sigma, prior_std)
    }
}

/// Parameters of a Beta distribution.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BetaParams {
    pub a: f64,
    pub b: f64,
}

/// Absolute tolerance for the incomplete-Beta quadratures.
const BETA_QUAD_TOL: f64 = 1e-13;

impl BetaParams {
    pub fn new(a: f64, b: f64) -> Result<Self> {
        if !(a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "Beta parameters must be positive and finite, got ({a}, {b})"
            )));
        }
        Ok(BetaParams { a, b })
    }

    pub fn mean(&self) -> f64 {
        self.a / (self.a + self.b)
    }

    pub fn ln_pdf(&self, x: f64) -> f64 {
        (self.a - 1.0) * x.ln() + (self.b - 1.0) * (1.0 - x).ln() - ln_beta(self.a, self.b)
    }

    pub fn pdf(&self, x: f64) -> f64 {
        self.ln_pdf(x).exp()
    }

    /// Density and cumulative distribution at `x ∈ (0, 1)`.
    pub fn pdf_cdf(&self, x: f64) -> Result<(f64, f64)> {
        if !(x > 0.0 && x < 1.0) {
            return Err(Error::Domain {
                op: "beta_cdf",
                index: 0,
                value: x,
            });
        }
        Ok((self.pdf(x), self.cdf(x)))
    }

    /// Regularized incomplete Beta function `I_x(a, b)`, clamped to `[0, 1]`
    /// outside the open interval.
    pub fn cdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        if x >= 1.0 {
            return 1.0;
        }
        let lb = ln_beta(self.a, self.b);
        let v = if x <= 0.5 {
            lower_tail(self.a, self.b, lb, x)
        } else {
            1.0 - lower_tail(self.b, self.a, lb, 1.0 - x)
        };
        v.clamp(0.0, 1.0)
    }

    /// `∫_0^x t f(t) dt` for the Beta density `f`.
    pub fn partial_mean(&self, x: f64) -> f64 {
        // t · t^(a−1) (1−t)^(b−1) / B(a,b) = f_{a+1,b}(t) · B(a+1,b)/B(a,b)
        let shifted = BetaParams {
            a: self.a + 1.0,
            b: self.b,
        };
        shifted.cdf(x) * self.mean()
    }
}

/// `∫_0^x f(t) dt` of the normalized Beta(a, b) density, `x <= 1/2`.
///
/// For `a < 1` the substitution `t = u^(1/a)` removes the singularity at 0:
/// the integrand becomes `exp((b−1) ln(1 − u^(1/a)) − ln B − ln a)` on
/// `[0, x^a]`. Working with the normalized density keeps large `a, b` finite.
fn lower_tail(a: f64, b: f64, ln_b: f64, x: f64) -> f64 {
    if a < 1.0 {
        let inv_a = 1.0 / a;
        let offset = ln_b + a.ln();
        let g = |u: f64| ((b - 1.0) * (-u.powf(inv_a)).ln_1p() - offset).exp();
        quadrature::integrate(g, 0.0, x.powf(a), BETA_QUAD_TOL)
    } else {
        let g = |t: f64| ((a - 1.0) * t.ln() + (b - 1.0) * (-t).ln_1p() - ln_b).exp();
        quadrature::integrate(g, 0.0, x, BETA_QUAD_TOL)
    }
}

/// Concentration vector of a Dirichlet distribution.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DirichletParams {
    pub alpha: Vec<f64>,
}

impl DirichletParams {
    pub fn new(alpha: Vec<f64>) -> Result<Self> {
        if alpha.len() < 2 {
            return Err(Error::InvalidArgument(
                "Dirichlet needs at least two components".into(),
            ));
        }
        if let Some((i, &v)) = alpha
            .iter()
            .enumerate()
            .find(|(_, v)| !(**v > 0.0) || !v.is_finite())
        {
            return Err(Error::Domain {
                op: "dirichlet",
                index: i,
                value: v,
            });
        }
        Ok(DirichletParams { alpha })
    }

    pub fn len(&self) -> usize {
        self.alpha.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alpha.is_empty()
    }

    pub fn mean(&self) -> Vec<f64> {
        let total: f64 = self.alpha.iter().sum();
        self.alpha.iter().map(|a| a / total).collect()
    }

    /// Log-density at a point of the open simplex.
    pub fn ln_pdf(&self, s: &[f64]) -> Result<f64> {
        check_simplex_point(s, self.alpha.len())?;
        let total: f64 = self.alpha.iter().sum();
        let mut v = ln_gamma(total);
        for (&a, &x) in self.alpha.iter().zip(s) {
            v += (a - 1.0) * x.ln() - ln_gamma(a);
        }
        Ok(v)
    }

    /// Draws a probability vector by normalizing independent Gamma draws.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        loop {
            let mut draws: Vec<f64> = self.alpha.iter().map(|&a| sample_gamma(a, rng)).collect();
            let total: f64 = draws.iter().sum();
            if total > 0.0 && total.is_finite() && draws.iter().all(|&d| d > 0.0) {
                for d in &mut draws {
                    *d /= total;
                }
                return draws;
            }
            // Underflow for very small shapes; redraw.
        }
    }
}

fn check_simplex_point(s: &[f64], len: usize) -> Result<()> {
    if s.len() != len {
        return Err(Error::dim(
            "dirichlet_logpdf",
            format!("point has {} entries, concentration has {}", s.len(), len),
        ));
    }
    if let Some((i, &v)) = s.iter().enumerate().find(|(_, v)| !(**v > 0.0)) {
        return Err(Error::Domain {
            op: "dirichlet_logpdf",
            index: i,
            value: v,
        });
    }
    let total: f64 = s.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidArgument(format!(
            "point must sum to 1, sums to {total}"
        )));
    }
    Ok(())
}

/// Dirichlet log-density on a tape, differentiable in both the concentration
/// vector and the point.
///
/// `ln Γ(Σα) − Σ ln Γ(α_i) + Σ (α_i − 1) ln s_i`
pub fn dirichlet_logpdf<'t>(concentration: Var<'t>, point: Var<'t>) -> Result<Var<'t>> {
    {
        let (c, s) = (concentration.value(), point.value());
        check_simplex_point(s.data(), c.len())?;
        if c.shape() != s.shape() {
            return Err(Error::dim(
                "dirichlet_logpdf",
                format!("{:?} vs {:?}", c.shape(), s.shape()),
            ));
        }
    }
    let norm = concentration.sum()?.lgamma()?;
    let log_terms = concentration.lgamma()?.sum()?;
    let kernel = concentration.shift(-1.0).mul(point.log()?)?.sum()?;
    norm.sub(log_terms)?.add(kernel)
}

/// Gamma(shape, 1) draw: Marsaglia–Tsang for shape ≥ 1, boosted from
/// shape + 1 otherwise.
pub fn sample_gamma<R: Rng + ?Sized>(shape: f64, rng: &mut R) -> f64 {
    if shape < 1.0 {
        let u: f64 = rng.random();
        return sample_gamma(shape + 1.0, rng) * u.powf(1.0 / shape);
    }
    let d = shape - 1.0 / 3.0;
    let c = 1.0 / (9.0 * d).sqrt();
    loop {
        let x: f64 = rng.sample(StandardNormal);
        let v = 1.0 + c * x;
        if v <= 0.0 {
            continue;
        }
        let v = v * v * v;
        let u: f64 = rng.random();
        let x2 = x * x;
        if u < 1.0 - 0.0331 * x2 * x2 {
            return d * v;
        }
        if u.ln() < 0.5 * x2 + d * (1.0 - v + v.ln()) {
            return d * v;
        }
    }
}

/// Tensor of independent standard normals.
pub fn standard_normal<R: Rng + ?Sized>(shape: &[usize], rng: &mut R) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    Tensor::new(shape.to_vec(), data).expect("shape product matches length")
}
