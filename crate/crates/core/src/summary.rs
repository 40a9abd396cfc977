//! Summary statistics over the prediction space.
//!
//! A [`Partition`] divides the space of predicted scores (the unit interval
//! for binary heads, the probability simplex otherwise) into regions. The
//! model's predictions over a minibatch are binned with a differentiable
//! [`soft_histogram`], and [`summary_loglik`] scores an observed summary
//! `s0` under the finite-partition Dirichlet-process marginal whose base
//! measure is that predicted histogram.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::Var;
use crate::distributions::{dirichlet_logpdf, BetaParams, DirichletParams};
use crate::error::{Error, Result};
use crate::par::{self, Exec};
use crate::tensor::Tensor;

/// Default lower bound applied to every histogram entry.
pub const DEFAULT_FLOOR: f64 = 1e-6;

/// Outer edges of the first and last region sit this far outside the score
/// domain, so scores at exactly 0 or 1 are fully inside their region.
const OPEN_LOW: f64 = -1.0;
const OPEN_HIGH: f64 = 2.0;

const ROW_SUM_TOL: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PartitionKind {
    /// Contiguous bins of the positive-class score on `[0, 1]`.
    IntervalBins,
    /// One region per predicted class.
    ArgmaxRegions,
    /// A central low-confidence region plus confidence shells per class.
    ArgmaxShells,
}

/// A finite partition of the prediction space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PartitionSpec", into = "PartitionSpec")]
pub struct Partition {
    kind: PartitionKind,
    boundaries: Vec<f64>,
    num_classes: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PartitionSpec {
    kind: PartitionKind,
    #[serde(default)]
    boundaries: Vec<f64>,
    #[serde(default = "two")]
    num_classes: usize,
}

fn two() -> usize {
    2
}

impl TryFrom<PartitionSpec> for Partition {
    type Error = Error;

    fn try_from(spec: PartitionSpec) -> Result<Self> {
        match spec.kind {
            PartitionKind::IntervalBins => {
                if spec.num_classes != 2 {
                    return Err(Error::InvalidArgument(
                        "interval bins partition binary scores (num_classes = 2)".into(),
                    ));
                }
                Partition::intervals(&spec.boundaries)
            }
            PartitionKind::ArgmaxRegions => {
                if !spec.boundaries.is_empty() {
                    return Err(Error::InvalidArgument(
                        "argmax regions take no boundaries".into(),
                    ));
                }
                Partition::argmax(spec.num_classes)
            }
            PartitionKind::ArgmaxShells => Partition::shells(spec.num_classes, &spec.boundaries),
        }
    }
}

impl From<Partition> for PartitionSpec {
    fn from(p: Partition) -> Self {
        PartitionSpec {
            kind: p.kind,
            boundaries: p.boundaries,
            num_classes: p.num_classes,
        }
    }
}

/// One interval of an interval-bins partition.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Bin {
    pub lower: f64,
    pub upper: f64,
}

impl Bin {
    pub fn center(&self) -> f64 {
        0.5 * (self.lower + self.upper)
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }
}

fn check_increasing(values: &[f64], low: f64, high: f64, what: &str) -> Result<()> {
    for (i, &v) in values.iter().enumerate() {
        if !(v > low && v < high) {
            return Err(Error::InvalidArgument(format!(
                "{what} {v} at position {i} is outside ({low}, {high})"
            )));
        }
        if i > 0 && v <= values[i - 1] {
            return Err(Error::InvalidArgument(format!(
                "{what} must be strictly increasing ({} then {v})",
                values[i - 1]
            )));
        }
    }
    Ok(())
}

impl Partition {
    /// Contiguous bins on `[0, 1]` split at `boundaries`.
    pub fn intervals(boundaries: &[f64]) -> Result<Self> {
        if boundaries.is_empty() {
            return Err(Error::InvalidArgument("need at least one boundary".into()));
        }
        check_increasing(boundaries, 0.0, 1.0, "boundary")?;
        Ok(Partition {
            kind: PartitionKind::IntervalBins,
            boundaries: boundaries.to_vec(),
            num_classes: 2,
        })
    }

    /// `bins` bins of equal width on `[0, 1]`.
    pub fn equal_intervals(bins: usize) -> Result<Self> {
        if bins < 2 {
            return Err(Error::InvalidArgument("need at least two bins".into()));
        }
        let b: Vec<f64> = (1..bins).map(|i| i as f64 / bins as f64).collect();
        Partition::intervals(&b)
    }

    /// One region per class, assigned by argmax.
    pub fn argmax(num_classes: usize) -> Result<Self> {
        if num_classes < 2 {
            return Err(Error::InvalidArgument("need at least two classes".into()));
        }
        Ok(Partition {
            kind: PartitionKind::ArgmaxRegions,
            boundaries: Vec::new(),
            num_classes,
        })
    }

    /// A central region `{max_k y_k < t_1}` and, per class, shells
    /// `t_j <= max y < t_{j+1}` (the last shell closed at 1).
    pub fn shells(num_classes: usize, thresholds: &[f64]) -> Result<Self> {
        if num_classes < 2 {
            return Err(Error::InvalidArgument("need at least two classes".into()));
        }
        if thresholds.is_empty() {
            return Err(Error::InvalidArgument(
                "need at least one shell threshold".into(),
            ));
        }
        check_increasing(thresholds, 1.0 / num_classes as f64, 1.0, "shell threshold")?;
        Ok(Partition {
            kind: PartitionKind::ArgmaxShells,
            boundaries: thresholds.to_vec(),
            num_classes,
        })
    }

    pub fn kind(&self) -> PartitionKind {
        self.kind
    }

    pub fn boundaries(&self) -> &[f64] {
        &self.boundaries
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn region_count(&self) -> usize {
        match self.kind {
            PartitionKind::IntervalBins => self.boundaries.len() + 1,
            PartitionKind::ArgmaxRegions => self.num_classes,
            PartitionKind::ArgmaxShells => self.num_classes * self.boundaries.len() + 1,
        }
    }

    fn is_simplex(&self) -> bool {
        self.kind != PartitionKind::IntervalBins
    }

    /// Bins of an interval partition; empty for simplex partitions.
    pub fn bins(&self) -> Vec<Bin> {
        if self.is_simplex() {
            return Vec::new();
        }
        let mut edges = Vec::with_capacity(self.boundaries.len() + 2);
        edges.push(0.0);
        edges.extend_from_slice(&self.boundaries);
        edges.push(1.0);
        edges
            .windows(2)
            .map(|w| Bin {
                lower: w[0],
                upper: w[1],
            })
            .collect()
    }

    /// Region index of one prediction.
    ///
    /// Interval partitions accept a single score or a two-class probability
    /// row (the class-1 entry is the score). Simplex partitions take a
    /// probability row; argmax ties go to the lowest class index.
    pub fn region_of(&self, prediction: &[f64]) -> Result<usize> {
        match self.kind {
            PartitionKind::IntervalBins => {
                let score = match prediction {
                    [s] => *s,
                    [_, s] => *s,
                    _ => {
                        return Err(Error::dim(
                            "region_of",
                            format!(
                                "interval bins need 1 or 2 entries, got {}",
                                prediction.len()
                            ),
                        ))
                    }
                };
                Ok(self.boundaries.iter().filter(|&&b| b <= score).count())
            }
            _ => {
                if prediction.len() != self.num_classes {
                    return Err(Error::dim(
                        "region_of",
                        format!(
                            "expected {} classes, got {}",
                            self.num_classes,
                            prediction.len()
                        ),
                    ));
                }
                let (k, m) = argmax(prediction);
                if self.kind == PartitionKind::ArgmaxRegions {
                    return Ok(k);
                }
                let s = self.boundaries.len();
                let above = self.boundaries.iter().filter(|&&t| t <= m).count();
                if above == 0 {
                    Ok(0)
                } else {
                    Ok(1 + k * s + (above - 1))
                }
            }
        }
    }

    /// Human-readable descriptor of a region, used in CSV output.
    pub fn region_label(&self, region: usize) -> String {
        match self.kind {
            PartitionKind::IntervalBins => {
                let b = self.bins()[region];
                format!("[{},{})", b.lower, b.upper)
            }
            PartitionKind::ArgmaxRegions => format!("class{region}"),
            PartitionKind::ArgmaxShells => {
                if region == 0 {
                    return format!("central[max<{}]", self.boundaries[0]);
                }
                let s = self.boundaries.len();
                let (k, j) = ((region - 1) / s, (region - 1) % s);
                let hi = self.boundaries.get(j + 1).copied().unwrap_or(1.0);
                format!("class{k}[{},{})", self.boundaries[j], hi)
            }
        }
    }
}

fn argmax(row: &[f64]) -> (usize, f64) {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    (best, row[best])
}

/// Slope and floor of the soft histogram.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SoftHistogramConfig {
    #[serde(default = "default_slope")]
    pub slope: f64,
    #[serde(default = "default_floor")]
    pub floor: f64,
}

fn default_slope() -> f64 {
    500.0
}

fn default_floor() -> f64 {
    DEFAULT_FLOOR
}

impl Default for SoftHistogramConfig {
    fn default() -> Self {
        SoftHistogramConfig {
            slope: default_slope(),
            floor: default_floor(),
        }
    }
}

impl SoftHistogramConfig {
    pub fn validate(&self, regions: usize) -> Result<()> {
        if !(self.slope > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "slope must be positive, got {}",
                self.slope
            )));
        }
        if !(self.floor > 0.0 && self.floor < 1.0 / regions as f64) {
            return Err(Error::InvalidArgument(format!(
                "floor must lie in (0, 1/{regions}), got {}",
                self.floor
            )));
        }
        Ok(())
    }
}

fn check_predictions(p: &Tensor, partition: &Partition) -> Result<()> {
    let (n, cols) = p.as_matrix_dims("soft_histogram")?;
    if n == 0 {
        return Err(Error::Empty("soft_histogram"));
    }
    let k = partition.num_classes();
    match partition.kind() {
        PartitionKind::IntervalBins if cols == 1 => {
            if let Some((i, &v)) = p
                .data()
                .iter()
                .enumerate()
                .find(|(_, v)| !(0.0..=1.0).contains(*v))
            {
                return Err(Error::Domain {
                    op: "soft_histogram",
                    index: i,
                    value: v,
                });
            }
            return Ok(());
        }
        PartitionKind::IntervalBins if cols == 2 => {}
        _ if cols == k && partition.is_simplex() => {}
        _ => {
            return Err(Error::dim(
                "soft_histogram",
                format!(
                    "{:?} predictions for a {:?} partition over {k} classes",
                    p.shape(),
                    partition.kind()
                ),
            ))
        }
    }
    for i in 0..n {
        let s: f64 = p.row(i).iter().sum();
        if (s - 1.0).abs() > ROW_SUM_TOL {
            return Err(Error::InvalidArgument(format!(
                "prediction row {i} sums to {s}, not 1"
            )));
        }
    }
    Ok(())
}

/// `sigmoid(σ(x − lo)) − sigmoid(σ(x − hi))` for each column pair of edges.
/// `x` is `n × 1`; the result is `n × edges.len()`.
fn sigmoid_pairs<'t>(x: Var<'t>, edges: &[(f64, f64)], slope: f64) -> Result<Var<'t>> {
    let tape = x.tape();
    let b = edges.len();
    let spread = x.matmul(tape.constant(Tensor::ones(vec![1, b])))?;
    let neg_lo = Tensor::vector(edges.iter().map(|e| -e.0).collect());
    let neg_hi = Tensor::vector(edges.iter().map(|e| -e.1).collect());
    let upper = spread
        .add_row(tape.constant(neg_lo))?
        .scale(slope)
        .sigmoid()?;
    let lower = spread
        .add_row(tape.constant(neg_hi))?
        .scale(slope)
        .sigmoid()?;
    upper.sub(lower)
}

/// Per-region soft weights `w_i`, summed over the batch (not normalized).
///
/// Interval bins use the sigmoid pair on the positive-class score with each
/// bin's lower and upper edge. Simplex partitions weight class regions by
/// `softmax(σ·y)` and confidence shells by the sigmoid pair on `max_k y_k`.
pub fn soft_histogram_weights<'t>(
    predictions: Var<'t>,
    partition: &Partition,
    cfg: &SoftHistogramConfig,
) -> Result<Var<'t>> {
    cfg.validate(partition.region_count())?;
    check_predictions(&predictions.value(), partition)?;
    let tape = predictions.tape();
    let n = predictions.value().rows();
    let cols = predictions.value().cols();
    let slope = cfg.slope;

    let per_row = match partition.kind() {
        PartitionKind::IntervalBins => {
            let score = if cols == 2 {
                predictions.matmul(tape.constant(Tensor::matrix(2, 1, vec![0.0, 1.0])?))?
            } else {
                predictions
            };
            let bins = partition.bins();
            let last = bins.len() - 1;
            let edges: Vec<(f64, f64)> = bins
                .iter()
                .enumerate()
                .map(|(i, b)| {
                    let lo = if i == 0 { OPEN_LOW } else { b.lower };
                    let hi = if i == last { OPEN_HIGH } else { b.upper };
                    (lo, hi)
                })
                .collect();
            sigmoid_pairs(score, &edges, slope)?
        }
        PartitionKind::ArgmaxRegions => predictions.scale(slope).softmax()?,
        PartitionKind::ArgmaxShells => {
            let k = partition.num_classes();
            let thresholds = partition.boundaries();
            let s = thresholds.len();
            let b = partition.region_count();
            let class_weight = predictions.scale(slope).softmax()?;
            let confidence = predictions.max_axis(1)?.reshape(vec![n, 1])?;
            let mut edges = vec![(OPEN_LOW, thresholds[0])];
            for j in 0..s {
                let hi = if j + 1 < s {
                    thresholds[j + 1]
                } else {
                    OPEN_HIGH
                };
                edges.push((thresholds[j], hi));
            }
            let shell_weight = sigmoid_pairs(confidence, &edges, slope)?;

            // Region 0 is central; region 1 + k·s + j is shell j of class k.
            let mut class_to_region = vec![0.0; k * b];
            let mut shell_to_region = vec![0.0; (s + 1) * b];
            shell_to_region[0] = 1.0;
            for c in 0..k {
                for j in 0..s {
                    let r = 1 + c * s + j;
                    class_to_region[c * b + r] = 1.0;
                    shell_to_region[(j + 1) * b + r] = 1.0;
                }
            }
            let mut central = vec![0.0; b];
            central[0] = 1.0;
            let class_part = class_weight
                .matmul(tape.constant(Tensor::matrix(k, b, class_to_region)?))?
                .add_row(tape.constant(Tensor::vector(central)))?;
            let shell_part =
                shell_weight.matmul(tape.constant(Tensor::matrix(s + 1, b, shell_to_region)?))?;
            class_part.mul(shell_part)?
        }
    };
    per_row.sum_axis(0)
}

/// Normalized soft histogram `ŝ = (w + ε) / Σ(w + ε)`.
pub fn soft_histogram<'t>(
    predictions: Var<'t>,
    partition: &Partition,
    cfg: &SoftHistogramConfig,
) -> Result<Var<'t>> {
    let w = soft_histogram_weights(predictions, partition, cfg)?.shift(cfg.floor);
    let total = w.sum()?;
    w.div(total)
}

/// Hard region counts of a batch of predictions.
pub fn hard_histogram(predictions: &Tensor, partition: &Partition) -> Result<Vec<f64>> {
    let mut counts = vec![0.0; partition.region_count()];
    let n = predictions.rows();
    if n == 0 || predictions.is_empty() {
        return Err(Error::Empty("hard_histogram"));
    }
    for i in 0..n {
        counts[partition.region_of(predictions.row(i))?] += 1.0;
    }
    Ok(counts)
}

/// Raises every entry to at least `floor` and rescales the rest so the vector
/// sums to one. Idempotent and order-preserving.
pub fn floor_renormalize(mass: &[f64], floor: f64) -> Result<Vec<f64>> {
    if mass.is_empty() {
        return Err(Error::Empty("floor_renormalize"));
    }
    if let Some((i, &v)) = mass
        .iter()
        .enumerate()
        .find(|(_, v)| !(**v >= 0.0) || !v.is_finite())
    {
        return Err(Error::Domain {
            op: "floor_renormalize",
            index: i,
            value: v,
        });
    }
    if !(floor >= 0.0 && floor * (mass.len() as f64) < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "floor {floor} is too large for {} entries",
            mass.len()
        )));
    }
    let total: f64 = mass.iter().sum();
    if total <= 0.0 {
        return Err(Error::InvalidArgument("mass vector sums to zero".into()));
    }
    let p: Vec<f64> = mass.iter().map(|m| m / total).collect();
    let mut floored = vec![false; p.len()];
    loop {
        let fixed = floored.iter().filter(|&&f| f).count() as f64 * floor;
        let free: f64 = p
            .iter()
            .zip(&floored)
            .filter(|(_, &f)| !f)
            .map(|(v, _)| v)
            .sum();
        let scale = (1.0 - fixed) / free;
        let mut changed = false;
        for (v, f) in p.iter().zip(floored.iter_mut()) {
            if !*f && v * scale < floor {
                *f = true;
                changed = true;
            }
        }
        if !changed {
            return Ok(p
                .iter()
                .zip(&floored)
                .map(|(v, &f)| if f { floor } else { v * scale })
                .collect());
        }
    }
}

/// Observed summary `s0` over a partition together with the concentration α.
#[derive(Clone, Debug, PartialEq)]
pub struct SummaryPrior {
    partition: Partition,
    mass: Vec<f64>,
    alpha: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SummaryPriorFile {
    partition: Partition,
    mass: Vec<f64>,
    alpha: f64,
}

impl SummaryPrior {
    /// Floors and renormalizes `mass` with [`DEFAULT_FLOOR`].
    pub fn new(partition: Partition, mass: &[f64], alpha: f64) -> Result<Self> {
        SummaryPrior::with_floor(partition, mass, alpha, DEFAULT_FLOOR)
    }

    pub fn with_floor(partition: Partition, mass: &[f64], alpha: f64, floor: f64) -> Result<Self> {
        if mass.len() != partition.region_count() {
            return Err(Error::dim(
                "summary_prior",
                format!(
                    "{} masses for {} regions",
                    mass.len(),
                    partition.region_count()
                ),
            ));
        }
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "alpha must be positive, got {alpha}"
            )));
        }
        let mass = floor_renormalize(mass, floor)?;
        Ok(SummaryPrior {
            partition,
            mass,
            alpha,
        })
    }

    pub fn partition(&self) -> &Partition {
        &self.partition
    }

    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn with_alpha(&self, alpha: f64) -> Result<Self> {
        SummaryPrior::new(self.partition.clone(), &self.mass, alpha)
    }

    /// JSON document with masses written to 17 significant digits.
    pub fn to_json(&self) -> Result<String> {
        let partition = serde_json::to_string(&self.partition)?;
        let mass: Vec<String> = self.mass.iter().map(|m| format!("{m:.16e}")).collect();
        Ok(format!(
            "{{\n  \"partition\": {partition},\n  \"mass\": [{}],\n  \"alpha\": {}\n}}\n",
            mass.join(", "),
            serde_json::to_string(&self.alpha)?
        ))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let f: SummaryPriorFile = serde_json::from_str(text)?;
        SummaryPrior::new(f.partition, &f.mass, f.alpha)
    }
}

/// `log Dir(s0 | α ŝ)`: the finite-partition DP likelihood of the observed
/// summary given the predicted histogram `ŝ` as base measure.
pub fn summary_loglik<'t>(predicted: Var<'t>, prior: &SummaryPrior) -> Result<Var<'t>> {
    {
        let p = predicted.value();
        if p.len() != prior.mass.len() {
            return Err(Error::dim(
                "summary_loglik",
                format!(
                    "{} predicted regions, prior has {}",
                    p.len(),
                    prior.mass.len()
                ),
            ));
        }
        if let Some((i, &v)) = p.data().iter().enumerate().find(|(_, v)| !(**v > 0.0)) {
            return Err(Error::Domain {
                op: "summary_loglik",
                index: i,
                value: v,
            });
        }
        let s = p.sum();
        if (s - 1.0).abs() > ROW_SUM_TOL {
            return Err(Error::InvalidArgument(format!(
                "predicted histogram sums to {s}, not 1"
            )));
        }
    }
    let tape = predicted.tape();
    let shape = predicted.shape();
    let observed = tape.constant(Tensor::new(shape, prior.mass.clone())?);
    dirichlet_logpdf(predicted.scale(prior.alpha), observed)
}

/// Distribution used to build an observed summary `s0`.
#[derive(Clone, Debug, PartialEq)]
pub enum BaseMeasure {
    Uniform,
    Beta(BetaParams),
    Dirichlet(DirichletParams),
    /// Per-class weights (counts or fractions) for an argmax partition.
    ClassFractions(Vec<f64>),
}

/// Monte Carlo settings for discretizing a Dirichlet base.
#[derive(Clone, Copy, Debug)]
pub struct MonteCarlo {
    pub samples: usize,
    pub seed: u64,
    pub exec: Exec,
}

impl Default for MonteCarlo {
    fn default() -> Self {
        MonteCarlo {
            samples: 1_000_000,
            seed: 12345,
            exec: Exec::Parallel,
        }
    }
}

const MC_CHUNKS: usize = 100;

/// Region masses of `base` over `partition`, floored and renormalized.
pub fn discretize_base(base: &BaseMeasure, partition: &Partition, floor: f64) -> Result<Vec<f64>> {
    discretize_base_with(base, partition, floor, MonteCarlo::default())
}

pub fn discretize_base_with(
    base: &BaseMeasure,
    partition: &Partition,
    floor: f64,
    mc: MonteCarlo,
) -> Result<Vec<f64>> {
    let b = partition.region_count();
    let raw = match base {
        BaseMeasure::Uniform => vec![1.0 / b as f64; b],
        BaseMeasure::Beta(p) => {
            if partition.is_simplex() {
                return Err(Error::KindMismatch(
                    "a Beta base needs an interval-bins partition".into(),
                ));
            }
            partition
                .bins()
                .iter()
                .map(|bin| p.cdf(bin.upper) - p.cdf(bin.lower))
                .collect()
        }
        BaseMeasure::Dirichlet(d) => {
            if !partition.is_simplex() {
                return Err(Error::KindMismatch(
                    "a Dirichlet base needs a simplex partition".into(),
                ));
            }
            if d.len() != partition.num_classes() {
                return Err(Error::dim(
                    "discretize_base",
                    format!(
                        "Dirichlet over {} classes, partition has {}",
                        d.len(),
                        partition.num_classes()
                    ),
                ));
            }
            region_frequencies(d, partition, mc)?
        }
        BaseMeasure::ClassFractions(f) => {
            if partition.kind() != PartitionKind::ArgmaxRegions {
                return Err(Error::KindMismatch(
                    "class fractions need an argmax-regions partition".into(),
                ));
            }
            if f.len() != partition.num_classes() {
                return Err(Error::dim(
                    "discretize_base",
                    format!(
                        "{} class fractions for {} classes",
                        f.len(),
                        partition.num_classes()
                    ),
                ));
            }
            f.clone()
        }
    };
    floor_renormalize(&raw, floor)
}

fn region_frequencies(
    d: &DirichletParams,
    partition: &Partition,
    mc: MonteCarlo,
) -> Result<Vec<f64>> {
    if mc.samples == 0 {
        return Err(Error::Empty("discretize_base"));
    }
    let b = partition.region_count();
    let chunks = MC_CHUNKS.min(mc.samples);
    let per_chunk = mc.samples / chunks;
    let extra = mc.samples % chunks;
    let counts = par::map(mc.exec, chunks, |c| {
        let mut rng = ChaCha8Rng::seed_from_u64(mc.seed);
        rng.set_stream(c as u64);
        let mut counts = vec![0u64; b];
        let n = per_chunk + usize::from(c < extra);
        for _ in 0..n {
            let s = d.sample(&mut rng);
            let r = partition
                .region_of(&s)
                .expect("sample length matches partition");
            counts[r] += 1;
        }
        counts
    });
    let mut total = vec![0.0; b];
    for chunk in counts {
        for (t, c) in total.iter_mut().zip(chunk) {
            *t += c as f64;
        }
    }
    Ok(total.iter().map(|c| c / mc.samples as f64).collect())
}
