//! Adam training loop, step logs and grid cross-validation.

use std::hash::{Hash, Hasher};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bnn::{
    loss_and_grad, Activation, LossBreakdown, Method, ObjectiveConfig, VariationalMlp,
};
use crate::data::{Dataset, Split};
use crate::error::{Error, Result};
use crate::metrics;
use crate::par::{self, Exec};
use crate::summary::SummaryPrior;
use crate::tensor::Tensor;

/// Independent random streams derived from one seed.
#[derive(Clone, Copy, Debug)]
pub enum Stream {
    Init = 0,
    Shuffle = 1,
    Noise = 2,
    Eval = 3,
}

pub fn rng_for(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    /// Adam steps; 0 selects the task default (see [`TrainConfig::default_steps`]).
    #[serde(default)]
    pub steps: usize,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_lr")]
    pub learning_rate: f64,
    #[serde(default = "default_beta1")]
    pub beta1: f64,
    #[serde(default = "default_beta2")]
    pub beta2: f64,
    #[serde(default = "default_adam_eps")]
    pub adam_eps: f64,
    #[serde(default)]
    pub seed: u64,
    /// Steps between logged records (with validation NLL); 0 logs only the
    /// final step.
    #[serde(default = "default_eval_every")]
    pub eval_every: usize,
    /// Monte Carlo draws for validation NLL.
    #[serde(default = "default_eval_mc")]
    pub eval_mc_samples: usize,
    /// Record wall-clock milliseconds in the step log (otherwise 0, which
    /// keeps logs byte-identical across runs).
    #[serde(default)]
    pub log_wall_time: bool,
}

fn default_batch() -> usize {
    256
}
fn default_lr() -> f64 {
    1e-3
}
fn default_beta1() -> f64 {
    0.9
}
fn default_beta2() -> f64 {
    0.999
}
fn default_adam_eps() -> f64 {
    1e-8
}
fn default_eval_every() -> usize {
    100
}
fn default_eval_mc() -> usize {
    32
}

impl TrainConfig {
    /// Defaults with 3000 steps for binary and 5000 for multiclass tasks.
    pub fn for_classes(num_classes: usize, seed: u64) -> Self {
        TrainConfig {
            steps: Self::default_steps(num_classes),
            batch_size: default_batch(),
            learning_rate: default_lr(),
            beta1: default_beta1(),
            beta2: default_beta2(),
            adam_eps: default_adam_eps(),
            seed,
            eval_every: default_eval_every(),
            eval_mc_samples: default_eval_mc(),
            log_wall_time: false,
        }
    }

    /// 3000 steps for binary and 5000 for multiclass tasks.
    pub fn default_steps(num_classes: usize) -> usize {
        if num_classes <= 2 {
            3000
        } else {
            5000
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning rate must be non-negative, got {}",
                self.learning_rate
            )));
        }
        if !((0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.adam_eps > 0.0)
        {
            return Err(Error::Config(
                "Adam needs beta1, beta2 in [0, 1) and eps > 0".into(),
            ));
        }
        if self.eval_mc_samples == 0 {
            return Err(Error::Config("eval_mc_samples must be at least 1".into()));
        }
        Ok(())
    }
}

/// Adam with bias correction.
#[derive(Clone, Debug)]
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    t: i32,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl Adam {
    pub fn new(cfg: &TrainConfig) -> Self {
        Adam {
            lr: cfg.learning_rate,
            beta1: cfg.beta1,
            beta2: cfg.beta2,
            eps: cfg.adam_eps,
            t: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn step(&mut self, params: Vec<&mut Tensor>, grads: &[Tensor]) {
        assert_eq!(params.len(), grads.len(), "one gradient per parameter");
        if self.m.is_empty() {
            self.m = grads.iter().map(Tensor::zeros_like).collect();
            self.v = grads.iter().map(Tensor::zeros_like).collect();
        }
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for (((p, g), m), v) in params
            .into_iter()
            .zip(grads)
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            for (((p, &g), m), v) in p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.data_mut())
                .zip(v.data_mut())
            {
                *m = self.beta1 * *m + (1.0 - self.beta1) * g;
                *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
                let m_hat = *m / c1;
                let v_hat = *v / c2;
                *p -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
    }
}

/// One row of the step log.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct StepRecord {
    pub step: usize,
    pub loss: f64,
    pub cat_term: f64,
    pub summary_term: f64,
    pub kl_term: f64,
    pub val_nll: Option<f64>,
    pub wall_ms: u64,
}

impl StepRecord {
    pub const CSV_HEADER: &'static str = "step,loss,cat_term,summary_term,kl_term,val_nll,wall_ms";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.step,
            self.loss,
            self.cat_term,
            self.summary_term,
            self.kl_term,
            self.val_nll.map(|v| v.to_string()).unwrap_or_default(),
            self.wall_ms
        )
    }
}

pub fn step_log_csv(log: &[StepRecord]) -> String {
    let mut out = String::from(StepRecord::CSV_HEADER);
    out.push('\n');
    for r in log {
        out.push_str(&r.csv_row());
        out.push('\n');
    }
    out
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub model: VariationalMlp,
    pub log: Vec<StepRecord>,
}

/// Validation NLL of the Monte Carlo predictive (means for point methods).
pub fn validation_nll(
    model: &VariationalMlp,
    ds: &Dataset,
    method: Method,
    cfg: &TrainConfig,
    exec: Exec,
) -> Result<Option<f64>> {
    if ds.indices(Split::Val).is_empty() {
        return Ok(None);
    }
    let (x, y) = ds.split(Split::Val);
    let mut rng = rng_for(cfg.seed, Stream::Eval);
    let probs = model.predictive(&x, cfg.eval_mc_samples, method.is_point(), &mut rng, exec)?;
    Ok(Some(metrics::nll(&probs, &y)?))
}

/// Runs `cfg.steps` Adam steps on epoch-shuffled minibatches of the train
/// split. Randomness comes only from `cfg.seed`.
pub fn train(
    mut model: VariationalMlp,
    ds: &Dataset,
    obj: &ObjectiveConfig,
    cfg: &TrainConfig,
    exec: Exec,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    obj.validate()?;
    let train_idx = ds.indices(Split::Train).to_vec();
    if train_idx.is_empty() {
        return Err(Error::Empty("train split"));
    }
    if ds.dim() != model.input_dim() || ds.num_classes() != model.num_classes() {
        return Err(Error::dim(
            "train",
            format!(
                "data has {} features and {} classes, model is {:?}",
                ds.dim(),
                ds.num_classes(),
                model.sizes()
            ),
        ));
    }
    let mut shuffle_rng = rng_for(cfg.seed, Stream::Shuffle);
    let mut noise_rng = rng_for(cfg.seed, Stream::Noise);
    let mut adam = Adam::new(cfg);
    let mut order = train_idx.clone();
    let mut cursor = order.len();
    let mut log = Vec::new();
    let start = Instant::now();
    let steps = if cfg.steps == 0 {
        TrainConfig::default_steps(ds.num_classes())
    } else {
        cfg.steps
    };

    for step in 1..=steps {
        if cursor >= order.len() {
            order.shuffle(&mut shuffle_rng);
            cursor = 0;
        }
        let end = (cursor + cfg.batch_size).min(order.len());
        let batch = &order[cursor..end];
        cursor = end;
        let x = ds.features().select_rows(batch);
        let y: Vec<usize> = batch.iter().map(|&i| ds.labels()[i]).collect();
        let noises = if obj.method.is_point() {
            Vec::new()
        } else {
            model.sample_noise_set(obj.draws(), &mut noise_rng)
        };
        let (parts, grads) = loss_and_grad(&model, &x, &y, obj, &noises)?;
        check_finite(step, &parts)?;
        adam.step(model.params_mut(), &grads);

        let last = step == steps;
        if last || (cfg.eval_every > 0 && step % cfg.eval_every == 0) {
            log.push(StepRecord {
                step,
                loss: parts.total,
                cat_term: parts.categorical,
                summary_term: parts.summary,
                kl_term: parts.kl,
                val_nll: validation_nll(&model, ds, obj.method, cfg, exec)?,
                wall_ms: if cfg.log_wall_time {
                    start.elapsed().as_millis() as u64
                } else {
                    0
                },
            });
        }
    }
    Ok(TrainOutcome { model, log })
}

fn check_finite(step: usize, p: &LossBreakdown) -> Result<()> {
    if p.total.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite {
            step,
            categorical: p.categorical,
            summary: p.summary,
            kl: p.kl,
        })
    }
}

/// Architecture of the models built by [`cross_validate`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub layers: Vec<usize>,
    pub activation: Activation,
}

impl ModelSpec {
    pub fn build(&self, prior_std: f64, seed: u64) -> Result<VariationalMlp> {
        VariationalMlp::new(
            &self.layers,
            self.activation,
            prior_std,
            &mut rng_for(seed, Stream::Init),
        )
    }
}

/// Candidate observed summaries.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum S0Choice {
    Uniform,
    Auto,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CvGrid {
    #[serde(default = "default_alphas")]
    pub alphas: Vec<f64>,
    #[serde(default = "default_prior_stds")]
    pub prior_stds: Vec<f64>,
    #[serde(default = "default_smoothings")]
    pub smoothings: Vec<f64>,
    #[serde(default = "default_s0")]
    pub s0: Vec<S0Choice>,
}

fn default_alphas() -> Vec<f64> {
    vec![10.0, 50.0, 100.0, 500.0, 1000.0, 2500.0, 5000.0, 10000.0]
}
fn default_prior_stds() -> Vec<f64> {
    vec![0.10, 0.25, 0.50, 1.00, 2.00]
}
fn default_smoothings() -> Vec<f64> {
    vec![0.01, 0.05, 0.10]
}
fn default_s0() -> Vec<S0Choice> {
    vec![S0Choice::Uniform, S0Choice::Auto]
}

impl Default for CvGrid {
    fn default() -> Self {
        CvGrid {
            alphas: default_alphas(),
            prior_stds: default_prior_stds(),
            smoothings: default_smoothings(),
            s0: default_s0(),
        }
    }
}

/// One hyperparameter combination; fields a method does not use are `None`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvCell {
    pub alpha: Option<f64>,
    pub prior_std: Option<f64>,
    pub smoothing: Option<f64>,
    pub s0: Option<S0Choice>,
}

impl CvCell {
    /// Seed derived from the base seed and the cell contents, so equal
    /// cells train identically.
    pub fn sub_seed(&self, base: u64) -> u64 {
        let mut h = std::collections::hash_map::DefaultHasher::new();
        base.hash(&mut h);
        self.alpha.map(f64::to_bits).hash(&mut h);
        self.prior_std.map(f64::to_bits).hash(&mut h);
        self.smoothing.map(f64::to_bits).hash(&mut h);
        self.s0.hash(&mut h);
        h.finish()
    }
}

impl CvGrid {
    pub fn cells(&self, method: Method) -> Result<Vec<CvCell>> {
        let nonempty = |len: usize, what: &str| {
            if len == 0 {
                Err(Error::Config(format!(
                    "cross-validation grid has no {what} values"
                )))
            } else {
                Ok(())
            }
        };
        let stds: Vec<Option<f64>> = if method.is_point() {
            vec![None]
        } else {
            nonempty(self.prior_stds.len(), "prior_stds")?;
            self.prior_stds.iter().map(|&s| Some(s)).collect()
        };
        let mut cells = Vec::new();
        for &prior_std in &stds {
            match method {
                Method::Selbo | Method::MapSl => {
                    nonempty(self.alphas.len(), "alphas")?;
                    nonempty(self.s0.len(), "s0")?;
                    for &a in &self.alphas {
                        for &s in &self.s0 {
                            cells.push(CvCell {
                                alpha: Some(a),
                                prior_std,
                                smoothing: None,
                                s0: Some(s),
                            });
                        }
                    }
                }
                Method::Ls => {
                    nonempty(self.smoothings.len(), "smoothings")?;
                    for &e in &self.smoothings {
                        cells.push(CvCell {
                            alpha: None,
                            prior_std,
                            smoothing: Some(e),
                            s0: None,
                        });
                    }
                }
                Method::Elbo | Method::Map => cells.push(CvCell {
                    alpha: None,
                    prior_std,
                    smoothing: None,
                    s0: None,
                }),
            }
        }
        Ok(cells)
    }
}

/// Outcome of one grid cell: validation NLL or the error that stopped it.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CvRow {
    pub cell: CvCell,
    pub val_nll: Option<f64>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CvResult {
    pub best: CvCell,
    pub best_val_nll: f64,
    pub table: Vec<CvRow>,
}

impl CvResult {
    pub const CSV_HEADER: &'static str = "alpha,prior_std,smoothing,s0,val_nll,error";

    pub fn table_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for r in &self.table {
            let s0 = match r.cell.s0 {
                Some(S0Choice::Uniform) => "uniform",
                Some(S0Choice::Auto) => "auto",
                None => "",
            };
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                opt(r.cell.alpha),
                opt(r.cell.prior_std),
                opt(r.cell.smoothing),
                s0,
                opt(r.val_nll),
                r.error.as_deref().unwrap_or("").replace([',', '\n'], ";")
            ));
        }
        out
    }
}

/// Trains one model per grid cell and keeps the lowest validation NLL
/// (ties: smaller α, then smaller ε, then grid order). Failed cells are
/// recorded in the table and skipped.
///
/// `prior_for` builds the summary prior for a cell's `(s0, α)`.
pub fn cross_validate(
    ds: &Dataset,
    spec: &ModelSpec,
    base: &ObjectiveConfig,
    grid: &CvGrid,
    cfg: &TrainConfig,
    prior_for: &(dyn Fn(S0Choice, f64) -> Result<SummaryPrior> + Sync),
    exec: Exec,
) -> Result<CvResult> {
    if ds.indices(Split::Val).is_empty() {
        return Err(Error::Empty("validation split"));
    }
    let cells = grid.cells(base.method)?;
    let run = |cell: &CvCell| -> Result<f64> {
        let seed = cell.sub_seed(cfg.seed);
        let mut obj = base.clone();
        if let Some(s) = cell.prior_std {
            obj.prior_std = s;
        }
        if let Some(e) = cell.smoothing {
            obj.smoothing = e;
        }
        if let (Some(s0), Some(a)) = (cell.s0, cell.alpha) {
            obj.summary = Some(prior_for(s0, a)?);
        }
        let cell_cfg = TrainConfig {
            seed,
            ..cfg.clone()
        };
        let model = spec.build(obj.prior_std, seed)?;
        // Grid cells may already run in parallel; keep each cell sequential.
        let out = train(model, ds, &obj, &cell_cfg, Exec::Sequential)?;
        validation_nll(&out.model, ds, obj.method, &cell_cfg, Exec::Sequential)?
            .ok_or(Error::Empty("validation split"))
    };
    let results = par::map(exec, cells.len(), |i| run(&cells[i]));
    let table: Vec<CvRow> = cells
        .iter()
        .zip(results)
        .map(|(cell, r)| match r {
            Ok(v) => CvRow {
                cell: *cell,
                val_nll: Some(v),
                error: None,
            },
            Err(e) => CvRow {
                cell: *cell,
                val_nll: None,
                error: Some(e.to_string()),
            },
        })
        .collect();
    let key = |r: &CvRow| {
        (
            r.val_nll.unwrap_or(f64::INFINITY),
            r.cell.alpha.unwrap_or(0.0),
            r.cell.smoothing.unwrap_or(0.0),
        )
    };
    let best = table
        .iter()
        .filter(|r| r.val_nll.is_some_and(f64::is_finite))
        .min_by(|a, b| {
            let (ka, kb) = (key(a), key(b));
            ka.0.total_cmp(&kb.0)
                .then(ka.1.total_cmp(&kb.1))
                .then(ka.2.total_cmp(&kb.2))
        })
        .ok_or_else(|| Error::Contract("every cross-validation cell failed".into()))?;
    Ok(CvResult {
        best: best.cell,
        best_val_nll: best.val_nll.unwrap(),
        table,
    })
}
