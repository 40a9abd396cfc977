//! Mean-field variational MLP and its training objectives.
//!
//! Every weight and bias carries an independent Gaussian `N(μ, softplus(ρ)²)`.
//! The output layer is a `K`-way softmax; for binary tasks the class-1
//! probability is the score that summaries are built from.

use std::io::{Read, Write};
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::distributions::{standard_normal, DiagGaussian, TapedGaussian};
use crate::error::{Error, Result};
use crate::par::{self, Exec};
use crate::special::softplus_inv;
use crate::summary::{soft_histogram, summary_loglik, SoftHistogramConfig, SummaryPrior};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Relu,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Relu => x.max(0.0),
        }
    }

    fn apply_var(self, v: Var<'_>) -> Result<Var<'_>> {
        match self {
            Activation::Tanh => v.tanh(),
            Activation::Relu => v.relu(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// Standard ELBO.
    Elbo,
    /// ELBO plus the summary likelihood.
    Selbo,
    /// ELBO with label-smoothed targets.
    Ls,
    /// Point estimate of the means, no KL.
    Map,
    /// Point estimate plus the summary likelihood.
    MapSl,
}

impl Method {
    pub fn is_point(self) -> bool {
        matches!(self, Method::Map | Method::MapSl)
    }

    pub fn uses_summary(self) -> bool {
        matches!(self, Method::Selbo | Method::MapSl)
    }

    pub fn name(self) -> &'static str {
        match self {
            Method::Elbo => "elbo",
            Method::Selbo => "selbo",
            Method::Ls => "ls",
            Method::Map => "map",
            Method::MapSl => "map-sl",
        }
    }
}

/// Variational weights `[in × out]` and biases `[out]` of one dense layer.
#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    pub weight: DiagGaussian,
    pub bias: DiagGaussian,
}

/// Standard-normal draws for every weight and bias: `[w0, b0, w1, b1, ...]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Noise(pub Vec<Tensor>);

#[derive(Clone, Debug, PartialEq)]
pub struct VariationalMlp {
    sizes: Vec<usize>,
    activation: Activation,
    layers: Vec<Layer>,
}

fn check_sizes(sizes: &[usize]) -> Result<()> {
    if sizes.len() < 2 {
        return Err(Error::Config("need at least input and output sizes".into()));
    }
    if sizes.contains(&0) {
        return Err(Error::Config(format!(
            "layer sizes must be positive: {sizes:?}"
        )));
    }
    if *sizes.last().unwrap() < 2 {
        return Err(Error::Config(
            "the output layer needs at least two classes".into(),
        ));
    }
    Ok(())
}

impl VariationalMlp {
    /// Means drawn from `N(0, 1/fan_in)` for weights and zero for biases;
    /// every scale starts at `0.05 · prior_std`.
    pub fn new<R: Rng + ?Sized>(
        sizes: &[usize],
        activation: Activation,
        prior_std: f64,
        rng: &mut R,
    ) -> Result<Self> {
        check_sizes(sizes)?;
        if !(prior_std > 0.0) {
            return Err(Error::Config(format!(
                "prior std must be positive, got {prior_std}"
            )));
        }
        let rho = softplus_inv(0.05 * prior_std);
        let layers = sizes
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let normal = Normal::new(0.0, (1.0 / fan_in as f64).sqrt()).expect("finite std");
                let mu: Vec<f64> = (0..fan_in * fan_out).map(|_| normal.sample(rng)).collect();
                Layer {
                    weight: DiagGaussian {
                        mu: Tensor::new(vec![fan_in, fan_out], mu).expect("sized"),
                        rho: Tensor::full(vec![fan_in, fan_out], rho),
                    },
                    bias: DiagGaussian {
                        mu: Tensor::zeros(vec![fan_out]),
                        rho: Tensor::full(vec![fan_out], rho),
                    },
                }
            })
            .collect();
        Ok(VariationalMlp {
            sizes: sizes.to_vec(),
            activation,
            layers,
        })
    }

    /// Every mean set to `mu` and every scale to `sigma`.
    pub fn constant(sizes: &[usize], activation: Activation, mu: f64, sigma: f64) -> Result<Self> {
        check_sizes(sizes)?;
        if !(sigma > 0.0) {
            return Err(Error::Config(format!(
                "sigma must be positive, got {sigma}"
            )));
        }
        let rho = softplus_inv(sigma);
        let layers = sizes
            .windows(2)
            .map(|w| Layer {
                weight: DiagGaussian {
                    mu: Tensor::full(vec![w[0], w[1]], mu),
                    rho: Tensor::full(vec![w[0], w[1]], rho),
                },
                bias: DiagGaussian {
                    mu: Tensor::full(vec![w[1]], mu),
                    rho: Tensor::full(vec![w[1]], rho),
                },
            })
            .collect();
        Ok(VariationalMlp {
            sizes: sizes.to_vec(),
            activation,
            layers,
        })
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn num_classes(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    /// Number of variational parameters (a mean and a scale per weight).
    pub fn param_count(&self) -> usize {
        2 * self
            .layers
            .iter()
            .map(|l| l.weight.mu.len() + l.bias.mu.len())
            .sum::<usize>()
    }

    /// Parameter tensors in the order `[w_mu, w_rho, b_mu, b_rho]` per layer.
    pub fn params(&self) -> Vec<&Tensor> {
        self.layers
            .iter()
            .flat_map(|l| [&l.weight.mu, &l.weight.rho, &l.bias.mu, &l.bias.rho])
            .collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        self.layers
            .iter_mut()
            .flat_map(|l| {
                [
                    &mut l.weight.mu,
                    &mut l.weight.rho,
                    &mut l.bias.mu,
                    &mut l.bias.rho,
                ]
            })
            .collect()
    }

    pub fn sample_noise<R: Rng + ?Sized>(&self, rng: &mut R) -> Noise {
        Noise(
            self.layers
                .iter()
                .flat_map(|l| {
                    let w = standard_normal(l.weight.mu.shape(), rng);
                    let b = standard_normal(l.bias.mu.shape(), rng);
                    [w, b]
                })
                .collect(),
        )
    }

    pub fn sample_noise_set<R: Rng + ?Sized>(&self, m: usize, rng: &mut R) -> Vec<Noise> {
        (0..m).map(|_| self.sample_noise(rng)).collect()
    }

    fn check_input(&self, x: &Tensor) -> Result<usize> {
        let (n, d) = x.as_matrix_dims("predict")?;
        if d != self.input_dim() {
            return Err(Error::dim(
                "predict",
                format!(
                    "inputs have {d} features, model expects {}",
                    self.input_dim()
                ),
            ));
        }
        Ok(n)
    }

    fn check_noise(&self, noise: &Noise) -> Result<()> {
        let ok = noise.0.len() == 2 * self.layers.len()
            && self.layers.iter().enumerate().all(|(i, l)| {
                noise.0[2 * i].shape() == l.weight.mu.shape()
                    && noise.0[2 * i + 1].shape() == l.bias.mu.shape()
            });
        if ok {
            Ok(())
        } else {
            Err(Error::dim(
                "predict",
                "noise does not match the architecture",
            ))
        }
    }

    /// Class probabilities `[n × K]` for one weight draw (`None` = the means).
    pub fn probs(&self, x: &Tensor, noise: Option<&Noise>) -> Result<Tensor> {
        let n = self.check_input(x)?;
        if let Some(noise) = noise {
            self.check_noise(noise)?;
        }
        let last = self.layers.len() - 1;
        let mut h = x.clone();
        for (i, l) in self.layers.iter().enumerate() {
            let (w, b) = match noise {
                Some(e) => (
                    l.weight.rsample(&e.0[2 * i])?,
                    l.bias.rsample(&e.0[2 * i + 1])?,
                ),
                None => (l.weight.mu.clone(), l.bias.mu.clone()),
            };
            h = h.matmul(&w)?;
            let cols = h.cols();
            for r in 0..n {
                for (v, bv) in h.data_mut()[r * cols..(r + 1) * cols]
                    .iter_mut()
                    .zip(b.data())
                {
                    *v += bv;
                }
            }
            if i < last {
                h = h.map(|v| self.activation.apply(v));
            }
        }
        softmax_rows(&mut h);
        Ok(h)
    }

    /// Per-draw probabilities `[M × n × K]`; point mode uses the means once.
    pub fn predict_probs(&self, x: &Tensor, noises: &[Noise], point: bool) -> Result<Tensor> {
        let n = self.check_input(x)?;
        let k = self.num_classes();
        let slices: Vec<Tensor> = if point {
            vec![self.probs(x, None)?]
        } else {
            if noises.is_empty() {
                return Err(Error::InvalidArgument(
                    "need at least one noise draw".into(),
                ));
            }
            noises
                .iter()
                .map(|e| self.probs(x, Some(e)))
                .collect::<Result<_>>()?
        };
        let m = slices.len();
        let data = slices.into_iter().flat_map(Tensor::into_data).collect();
        Tensor::new(vec![m, n, k], data)
    }

    /// Monte Carlo predictive `(1/M) Σ p(y | x, θ_l)`, `[n × K]`.
    ///
    /// Noise is drawn from `rng` up front, so the result does not depend on
    /// the execution mode.
    pub fn predictive<R: Rng + ?Sized>(
        &self,
        x: &Tensor,
        m: usize,
        point: bool,
        rng: &mut R,
        exec: Exec,
    ) -> Result<Tensor> {
        self.check_input(x)?;
        if point {
            return self.probs(x, None);
        }
        if m == 0 {
            return Err(Error::InvalidArgument(
                "need at least one Monte Carlo sample".into(),
            ));
        }
        let noises = self.sample_noise_set(m, rng);
        self.predictive_with(x, &noises, false, exec)
    }

    /// Predictive averaged over the given weight draws (the means when `point`).
    pub fn predictive_with(
        &self,
        x: &Tensor,
        noises: &[Noise],
        point: bool,
        exec: Exec,
    ) -> Result<Tensor> {
        if point {
            return self.probs(x, None);
        }
        if noises.is_empty() {
            return Err(Error::InvalidArgument(
                "need at least one noise draw".into(),
            ));
        }
        let draws = par::map(exec, noises.len(), |j| self.probs(x, Some(&noises[j])));
        let mut acc: Option<Tensor> = None;
        for d in draws {
            let d = d?;
            match acc.as_mut() {
                None => acc = Some(d),
                Some(a) => a.add_assign_scaled(&d, 1.0),
            }
        }
        let mut acc = acc.expect("at least one draw");
        let inv = 1.0 / noises.len() as f64;
        acc.data_mut().iter_mut().for_each(|v| *v *= inv);
        Ok(acc)
    }

    /// `Σ KL[q || N(0, prior_std² I)]` over all weights and biases.
    pub fn kl(&self, prior_std: f64) -> f64 {
        self.layers
            .iter()
            .map(|l| l.weight.kl(prior_std) + l.bias.kl(prior_std))
            .sum()
    }
}

fn softmax_rows(h: &mut Tensor) {
    let cols = h.cols();
    for row in h.data_mut().chunks_mut(cols) {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            total += *v;
        }
        for v in row.iter_mut() {
            *v /= total;
        }
    }
}

/// Settings of the training objective.
#[derive(Clone, Debug, PartialEq)]
pub struct ObjectiveConfig {
    pub method: Method,
    pub mc_samples: usize,
    pub prior_std: f64,
    /// Label-smoothing factor, used by [`Method::Ls`].
    pub smoothing: f64,
    pub summary: Option<SummaryPrior>,
    pub soft: SoftHistogramConfig,
    /// Training-set size `N`; the categorical term is scaled by `N / |B|`.
    pub dataset_size: usize,
}

impl ObjectiveConfig {
    pub fn new(method: Method, dataset_size: usize) -> Self {
        ObjectiveConfig {
            method,
            mc_samples: 4,
            prior_std: 1.0,
            smoothing: 0.0,
            summary: None,
            soft: SoftHistogramConfig::default(),
            dataset_size,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.mc_samples == 0 {
            return Err(Error::Config("mc_samples must be at least 1".into()));
        }
        if !(self.prior_std > 0.0 && self.prior_std.is_finite()) {
            return Err(Error::Config(format!(
                "prior_std must be positive, got {}",
                self.prior_std
            )));
        }
        if !(0.0..1.0).contains(&self.smoothing) {
            return Err(Error::Config(format!(
                "smoothing must lie in [0, 1), got {}",
                self.smoothing
            )));
        }
        if self.method.uses_summary() && self.summary.is_none() {
            return Err(Error::Config(format!(
                "method {} needs a summary prior",
                self.method.name()
            )));
        }
        if self.dataset_size == 0 {
            return Err(Error::Config("dataset size must be positive".into()));
        }
        Ok(())
    }

    /// Number of weight draws per step (1 for point methods).
    pub fn draws(&self) -> usize {
        if self.method.is_point() {
            1
        } else {
            self.mc_samples
        }
    }
}

/// Objective components for one minibatch.
///
/// `total = −((categorical + summary) − kl)`, evaluated in that order.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LossBreakdown {
    pub total: f64,
    /// `(N/|B|)(1/M) Σ log Cat`, already rescaled.
    pub categorical: f64,
    /// `(1/M) Σ_j log Dir(s0 | α ŝ_j)`, zero when unused.
    pub summary: f64,
    /// KL to the prior, zero for point methods.
    pub kl: f64,
}

impl LossBreakdown {
    pub fn reconstruct(&self) -> f64 {
        -((self.categorical + self.summary) - self.kl)
    }
}

enum TapedLayer<'t> {
    Variational {
        w: TapedGaussian<'t>,
        b: TapedGaussian<'t>,
    },
    Point {
        w: Var<'t>,
        b: Var<'t>,
    },
}

fn targets(labels: &[usize], k: usize, smoothing: f64) -> Result<Tensor> {
    let mut t = vec![smoothing / k as f64; labels.len() * k];
    for (i, &y) in labels.iter().enumerate() {
        if y >= k {
            return Err(Error::InvalidArgument(format!(
                "label {y} at row {i} is not below {k}"
            )));
        }
        t[i * k + y] += 1.0 - smoothing;
    }
    Tensor::matrix(labels.len(), k, t)
}

/// Loss (to minimize) and its gradient for one minibatch.
///
/// `noises` must hold `cfg.draws()` entries for variational methods and is
/// ignored by point methods. Gradients follow [`VariationalMlp::params`].
pub fn loss_and_grad(
    model: &VariationalMlp,
    x: &Tensor,
    labels: &[usize],
    cfg: &ObjectiveConfig,
    noises: &[Noise],
) -> Result<(LossBreakdown, Vec<Tensor>)> {
    let tape = Tape::new();
    let (parts, loss) = build_loss(&tape, model, x, labels, cfg, noises)?;
    let ids: Vec<_> = parts.1.clone();
    let mut grads = tape.backward(loss)?;
    let out = model
        .params()
        .iter()
        .zip(ids)
        .map(|(p, id)| match id {
            Some(id) => grads.take_or_zeros(id, p.shape()),
            None => Tensor::zeros_like(p),
        })
        .collect();
    Ok((parts.0, out))
}

/// Loss value only.
pub fn loss(
    model: &VariationalMlp,
    x: &Tensor,
    labels: &[usize],
    cfg: &ObjectiveConfig,
    noises: &[Noise],
) -> Result<LossBreakdown> {
    let tape = Tape::new();
    Ok(build_loss(&tape, model, x, labels, cfg, noises)?.0 .0)
}

type ParamIds = Vec<Option<crate::autodiff::NodeId>>;

fn build_loss<'t>(
    tape: &'t Tape,
    model: &VariationalMlp,
    x: &Tensor,
    labels: &[usize],
    cfg: &ObjectiveConfig,
    noises: &[Noise],
) -> Result<((LossBreakdown, ParamIds), crate::autodiff::NodeId)> {
    cfg.validate()?;
    let n = model.check_input(x)?;
    if n == 0 {
        return Err(Error::Empty("objective"));
    }
    if labels.len() != n {
        return Err(Error::dim(
            "objective",
            format!("{n} rows but {} labels", labels.len()),
        ));
    }
    let point = cfg.method.is_point();
    let draws = cfg.draws();
    if !point {
        if noises.len() != draws {
            return Err(Error::InvalidArgument(format!(
                "expected {draws} noise draws, got {}",
                noises.len()
            )));
        }
        for e in noises {
            model.check_noise(e)?;
        }
    }
    let k = model.num_classes();
    let smoothing = if cfg.method == Method::Ls {
        cfg.smoothing
    } else {
        0.0
    };
    let target = tape.constant(targets(labels, k, smoothing)?);
    let xv = tape.constant(x.clone());

    let mut ids: ParamIds = Vec::new();
    let taped: Vec<TapedLayer<'t>> = model
        .layers
        .iter()
        .map(|l| {
            if point {
                let w = tape.param(l.weight.mu.clone());
                let b = tape.param(l.bias.mu.clone());
                ids.extend([Some(w.id()), None, Some(b.id()), None]);
                TapedLayer::Point { w, b }
            } else {
                let w = l.weight.on_tape(tape);
                let b = l.bias.on_tape(tape);
                ids.extend([
                    Some(w.mu.id()),
                    Some(w.rho.id()),
                    Some(b.mu.id()),
                    Some(b.rho.id()),
                ]);
                TapedLayer::Variational { w, b }
            }
        })
        .collect();

    let last = taped.len() - 1;
    let mut cat_terms = Vec::with_capacity(draws);
    let mut summary_terms = Vec::with_capacity(draws);
    for j in 0..draws {
        let mut h = xv;
        for (i, layer) in taped.iter().enumerate() {
            let (w, b) = match layer {
                TapedLayer::Point { w, b } => (*w, *b),
                TapedLayer::Variational { w, b } => {
                    let e = &noises[j].0;
                    (w.rsample(&e[2 * i])?, b.rsample(&e[2 * i + 1])?)
                }
            };
            h = h.matmul(w)?.add_row(b)?;
            if i < last {
                h = model.activation.apply_var(h)?;
            }
        }
        cat_terms.push(h.log_softmax()?.mul(target)?.sum()?);
        if cfg.method.uses_summary() {
            let prior = cfg.summary.as_ref().expect("validated");
            let s_hat = soft_histogram(h.softmax()?, prior.partition(), &cfg.soft)?;
            summary_terms.push(summary_loglik(s_hat, prior)?);
        }
    }

    let inv_m = 1.0 / draws as f64;
    let sum_all = |terms: Vec<Var<'t>>| -> Result<Var<'t>> {
        let mut it = terms.into_iter();
        let mut acc = it.next().expect("at least one draw");
        for t in it {
            acc = acc.add(t)?;
        }
        Ok(acc)
    };
    let cat = sum_all(cat_terms)?.scale(cfg.dataset_size as f64 / n as f64 * inv_m);
    let summ = if summary_terms.is_empty() {
        tape.scalar(0.0)
    } else {
        sum_all(summary_terms)?.scale(inv_m)
    };
    let kl = if point {
        tape.scalar(0.0)
    } else {
        let mut acc = tape.scalar(0.0);
        for layer in &taped {
            if let TapedLayer::Variational { w, b } = layer {
                acc = acc.add(w.kl(cfg.prior_std)?)?.add(b.kl(cfg.prior_std)?)?;
            }
        }
        acc
    };
    let total = cat.add(summ)?.sub(kl)?.neg()?;
    let breakdown = LossBreakdown {
        total: total.item()?,
        categorical: cat.item()?,
        summary: summ.item()?,
        kl: kl.item()?,
    };
    Ok(((breakdown, ids), total.id()))
}

const MAGIC: &[u8; 8] = b"SBNNCKPT";
/// Checkpoint format version written by this build.
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    layers: Vec<usize>,
    activation: Activation,
    method: Method,
}

/// Serializes a model.
///
/// Layout (all integers little-endian):
///
/// ```text
/// 8 bytes   magic "SBNNCKPT"
/// u32       format version
/// u32       header length h
/// h bytes   JSON header {"layers": [...], "activation": ..., "method": ...}
/// u64       parameter count P
/// P × f64   per layer: w_mu, w_rho (row-major in × out), b_mu, b_rho
/// ```
pub fn checkpoint_bytes(model: &VariationalMlp, method: Method) -> Result<Vec<u8>> {
    let header = serde_json::to_vec(&Header {
        layers: model.sizes.clone(),
        activation: model.activation,
        method,
    })?;
    let mut out = Vec::with_capacity(24 + header.len() + 8 * model.param_count());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(header.len() as u32).to_le_bytes());
    out.extend_from_slice(&header);
    out.extend_from_slice(&(model.param_count() as u64).to_le_bytes());
    for p in model.params() {
        for v in p.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

fn take<'a>(bytes: &mut &'a [u8], n: usize) -> Result<&'a [u8]> {
    if bytes.len() < n {
        return Err(Error::Format("checkpoint is truncated".into()));
    }
    let (head, tail) = bytes.split_at(n);
    *bytes = tail;
    Ok(head)
}

pub fn checkpoint_from_bytes(mut bytes: &[u8]) -> Result<(VariationalMlp, Method)> {
    let b = &mut bytes;
    if take(b, 8)? != MAGIC {
        return Err(Error::Format("not a checkpoint (bad magic)".into()));
    }
    let version = u32::from_le_bytes(take(b, 4)?.try_into().unwrap());
    if version != CHECKPOINT_VERSION {
        return Err(Error::Version {
            found: version,
            expected: CHECKPOINT_VERSION,
        });
    }
    let hlen = u32::from_le_bytes(take(b, 4)?.try_into().unwrap()) as usize;
    let header: Header = serde_json::from_slice(take(b, hlen)?)
        .map_err(|e| Error::Format(format!("bad checkpoint header: {e}")))?;
    check_sizes(&header.layers).map_err(|e| Error::Format(e.to_string()))?;
    let count = u64::from_le_bytes(take(b, 8)?.try_into().unwrap()) as usize;
    let mut model = VariationalMlp::constant(&header.layers, header.activation, 0.0, 1.0)?;
    if count != model.param_count() {
        return Err(Error::Format(format!(
            "header describes {} parameters, payload declares {count}",
            model.param_count()
        )));
    }
    if b.len() != 8 * count {
        return Err(Error::Format(format!(
            "payload holds {} bytes, expected {}",
            b.len(),
            8 * count
        )));
    }
    for p in model.params_mut() {
        for v in p.data_mut() {
            *v = f64::from_le_bytes(take(b, 8)?.try_into().unwrap());
        }
    }
    Ok((model, header.method))
}

pub fn save_checkpoint(path: &Path, model: &VariationalMlp, method: Method) -> Result<()> {
    let bytes = checkpoint_bytes(model, method)?;
    let mut f = std::fs::File::create(path)?;
    f.write_all(&bytes)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<(VariationalMlp, Method)> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    checkpoint_from_bytes(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::summary::Partition;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn toy_batch() -> (Tensor, Vec<usize>) {
        let x = Tensor::matrix(
            4,
            3,
            vec![
                0.1, -0.3, 0.8, 1.2, 0.4, -0.5, -0.7, 0.9, 0.2, 0.3, 0.3, 0.3,
            ],
        )
        .unwrap();
        (x, vec![0, 1, 1, 0])
    }

    #[test]
    fn zero_network_is_uniform() {
        let m = VariationalMlp::constant(&[3, 5, 4], Activation::Tanh, 0.0, 1.0).unwrap();
        let (x, _) = toy_batch();
        let p = m.probs(&x, None).unwrap();
        assert!(p.data().iter().all(|&v| (v - 0.25).abs() < 1e-15));
    }

    #[test]
    fn identical_noise_gives_identical_slices() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = VariationalMlp::new(&[3, 6, 2], Activation::Relu, 1.0, &mut rng).unwrap();
        let e = m.sample_noise(&mut rng);
        let (x, _) = toy_batch();
        let p = m.predict_probs(&x, &[e.clone(), e], false).unwrap();
        assert_eq!(p.shape(), &[2, 4, 2]);
        let d = p.data();
        assert_eq!(&d[..8], &d[8..]);
        for row in d.chunks(2) {
            assert!((row[0] + row[1] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn param_count_is_twice_weights_and_biases() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let m = VariationalMlp::new(&[784, 128, 64, 2], Activation::Relu, 1.0, &mut rng).unwrap();
        assert_eq!(
            m.param_count(),
            2 * (784 * 128 + 128 + 128 * 64 + 64 + 64 * 2 + 2)
        );
        let sigma = crate::special::softplus(m.layers()[0].weight.rho.data()[0]);
        assert!((sigma - 0.05).abs() < 1e-12);
    }

    #[test]
    fn elbo_at_zero_kl_init_is_n_log_k() {
        let n_total = 1000;
        let m = VariationalMlp::constant(&[3, 4, 2], Activation::Tanh, 0.0, 1.0).unwrap();
        let (x, y) = toy_batch();
        let cfg = ObjectiveConfig {
            mc_samples: 1,
            ..ObjectiveConfig::new(Method::Elbo, n_total)
        };
        // Zero noise leaves the weights at μ = 0, so the output is uniform.
        let zero = Noise(
            m.params()
                .iter()
                .step_by(2)
                .map(|p| Tensor::zeros_like(p))
                .collect(),
        );
        let l = loss(&m, &x, &y, &cfg, &[zero]).unwrap();
        assert!(l.kl.abs() < 1e-12);
        assert!((l.total - n_total as f64 * 2f64.ln()).abs() < 1e-9, "{l:?}");
    }

    #[test]
    fn selbo_minus_elbo_isolates_summary_term() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let m = VariationalMlp::new(&[3, 5, 2], Activation::Tanh, 1.0, &mut rng).unwrap();
        let noises = m.sample_noise_set(3, &mut rng);
        let (x, y) = toy_batch();
        let prior = SummaryPrior::new(
            Partition::equal_intervals(4).unwrap(),
            &[0.4, 0.1, 0.1, 0.4],
            100.0,
        )
        .unwrap();
        let base = ObjectiveConfig {
            mc_samples: 3,
            ..ObjectiveConfig::new(Method::Elbo, 50)
        };
        let elbo = loss(&m, &x, &y, &base, &noises).unwrap();
        let selbo_cfg = ObjectiveConfig {
            method: Method::Selbo,
            summary: Some(prior),
            ..base
        };
        let selbo = loss(&m, &x, &y, &selbo_cfg, &noises).unwrap();
        assert_eq!(elbo.categorical, selbo.categorical);
        assert_eq!(elbo.kl, selbo.kl);
        assert!((selbo.total - elbo.total + selbo.summary).abs() < 1e-9);
        assert_eq!(selbo.total, selbo.reconstruct());
    }

    #[test]
    fn ls_with_zero_smoothing_equals_elbo() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let m = VariationalMlp::new(&[3, 4, 3], Activation::Relu, 1.0, &mut rng).unwrap();
        let noises = m.sample_noise_set(2, &mut rng);
        let (x, _) = toy_batch();
        let y = vec![0, 2, 1, 2];
        let base = ObjectiveConfig {
            mc_samples: 2,
            ..ObjectiveConfig::new(Method::Elbo, 20)
        };
        let ls = ObjectiveConfig {
            method: Method::Ls,
            smoothing: 0.0,
            ..base.clone()
        };
        assert_eq!(
            loss(&m, &x, &y, &base, &noises).unwrap(),
            loss(&m, &x, &y, &ls, &noises).unwrap()
        );
    }

    #[test]
    fn map_is_categorical_at_means() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let m = VariationalMlp::new(&[3, 4, 2], Activation::Tanh, 1.0, &mut rng).unwrap();
        let (x, y) = toy_batch();
        let cfg = ObjectiveConfig::new(Method::Map, 4);
        let l = loss(&m, &x, &y, &cfg, &[]).unwrap();
        let p = m.probs(&x, None).unwrap();
        let ll: f64 = y.iter().enumerate().map(|(i, &c)| p.row(i)[c].ln()).sum();
        assert_eq!(l.kl, 0.0);
        assert!((l.total + ll).abs() < 1e-12);
    }

    #[test]
    fn selbo_without_summary_is_a_config_error() {
        let m = VariationalMlp::constant(&[3, 2], Activation::Tanh, 0.0, 1.0).unwrap();
        let (x, y) = toy_batch();
        let cfg = ObjectiveConfig::new(Method::Selbo, 4);
        assert!(matches!(loss(&m, &x, &y, &cfg, &[]), Err(Error::Config(_))));
    }

    #[test]
    fn checkpoint_round_trip_is_byte_identical() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let m = VariationalMlp::new(&[3, 4, 2], Activation::Relu, 0.5, &mut rng).unwrap();
        let bytes = checkpoint_bytes(&m, Method::Selbo).unwrap();
        let (back, method) = checkpoint_from_bytes(&bytes).unwrap();
        assert_eq!(method, Method::Selbo);
        assert_eq!(back, m);
        assert_eq!(checkpoint_bytes(&back, method).unwrap(), bytes);
    }

    #[test]
    fn checkpoint_rejects_bad_input() {
        let m = VariationalMlp::constant(&[3, 4, 2], Activation::Tanh, 0.1, 1.0).unwrap();
        let bytes = checkpoint_bytes(&m, Method::Elbo).unwrap();
        let mut wrong_version = bytes.clone();
        wrong_version[8] = 9;
        assert!(matches!(
            checkpoint_from_bytes(&wrong_version),
            Err(Error::Version { found: 9, .. })
        ));
        let text = String::from_utf8_lossy(&bytes).replace("[3,4,2]", "[3,5,2]");
        assert!(matches!(
            checkpoint_from_bytes(text.as_bytes()),
            Err(Error::Format(_))
        ));
        assert!(checkpoint_from_bytes(&bytes[..bytes.len() - 3]).is_err());
        assert!(checkpoint_from_bytes(b"garbage").is_err());
    }
}
