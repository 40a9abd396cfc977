//! Datasets: IDX and embedding files, class subsets, corruption and
//! synthetic generators.

use std::f64::consts::PI;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

const IDX_IMAGES: u32 = 0x0000_0803;
const IDX_LABELS: u32 = 0x0000_0801;
const EMB_MAGIC: &[u8; 4] = b"EMB1";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

/// Features, labels and disjoint train/val/test index lists.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    features: Tensor,
    labels: Vec<usize>,
    num_classes: usize,
    train: Vec<usize>,
    val: Vec<usize>,
    test: Vec<usize>,
    source: String,
}

impl Dataset {
    pub fn new(
        features: Tensor,
        labels: Vec<usize>,
        num_classes: usize,
        splits: [Vec<usize>; 3],
        source: impl Into<String>,
    ) -> Result<Self> {
        let (n, _) = features.as_matrix_dims("dataset")?;
        if labels.len() != n {
            return Err(Error::dim(
                "dataset",
                format!("{n} rows but {} labels", labels.len()),
            ));
        }
        if let Some((i, &y)) = labels.iter().enumerate().find(|(_, &y)| y >= num_classes) {
            return Err(Error::InvalidArgument(format!(
                "label {y} at row {i} is not below {num_classes}"
            )));
        }
        if let Some((i, &v)) = features
            .data()
            .iter()
            .enumerate()
            .find(|(_, v)| !v.is_finite())
        {
            return Err(Error::Domain {
                op: "dataset",
                index: i,
                value: v,
            });
        }
        let mut seen = vec![false; n];
        for &i in splits.iter().flatten() {
            if i >= n {
                return Err(Error::InvalidArgument(format!(
                    "split index {i} out of range {n}"
                )));
            }
            if seen[i] {
                return Err(Error::InvalidArgument(format!(
                    "row {i} appears in two splits"
                )));
            }
            seen[i] = true;
        }
        let [train, val, test] = splits;
        Ok(Dataset {
            features,
            labels,
            num_classes,
            train,
            val,
            test,
            source: source.into(),
        })
    }

    /// All rows in the train split.
    pub fn unsplit(
        features: Tensor,
        labels: Vec<usize>,
        num_classes: usize,
        source: impl Into<String>,
    ) -> Result<Self> {
        let n = labels.len();
        Dataset::new(
            features,
            labels,
            num_classes,
            [(0..n).collect(), Vec::new(), Vec::new()],
            source,
        )
    }

    pub fn features(&self) -> &Tensor {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn indices(&self, split: Split) -> &[usize] {
        match split {
            Split::Train => &self.train,
            Split::Val => &self.val,
            Split::Test => &self.test,
        }
    }

    /// Feature rows and labels of one split.
    pub fn split(&self, split: Split) -> (Tensor, Vec<usize>) {
        let idx = self.indices(split);
        (
            self.features.select_rows(idx),
            idx.iter().map(|&i| self.labels[i]).collect(),
        )
    }

    /// Per-class counts within a split.
    pub fn class_counts(&self, split: Split) -> Vec<usize> {
        let mut c = vec![0; self.num_classes];
        for &i in self.indices(split) {
            c[self.labels[i]] += 1;
        }
        c
    }

    /// Same dataset with every feature shifted by `offset`.
    pub fn shifted(&self, offset: f64) -> Dataset {
        Dataset {
            features: self.features.map(|v| v + offset),
            source: format!("{}+shift({offset})", self.source),
            ..self.clone()
        }
    }

    /// Same dataset with the features replaced (same shape).
    pub fn with_features(&self, features: Tensor) -> Result<Dataset> {
        if features.shape() != self.features.shape() {
            return Err(Error::dim(
                "with_features",
                format!("{:?} vs {:?}", features.shape(), self.features.shape()),
            ));
        }
        Ok(Dataset {
            features,
            ..self.clone()
        })
    }
}

fn read_u32(bytes: &[u8], at: usize, what: &str) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes(b.try_into().unwrap()))
        .ok_or_else(|| Error::Format(format!("{what}: truncated header")))
}

/// Parses an IDX image file: `[count × rows·cols]` pixels scaled to `[0, 1]`,
/// plus `(rows, cols)`.
pub fn parse_idx_images(bytes: &[u8]) -> Result<(Tensor, usize, usize)> {
    let magic = read_u32(bytes, 0, "images")?;
    if magic != IDX_IMAGES {
        return Err(Error::Format(format!("images: bad magic {magic:#010x}")));
    }
    let n = read_u32(bytes, 4, "images")? as usize;
    let rows = read_u32(bytes, 8, "images")? as usize;
    let cols = read_u32(bytes, 12, "images")? as usize;
    let payload = &bytes[16..];
    let want = n * rows * cols;
    if payload.len() < want {
        return Err(Error::Format(format!(
            "images: truncated payload ({} of {want} bytes)",
            payload.len()
        )));
    }
    let data = payload[..want].iter().map(|&b| b as f64 / 255.0).collect();
    Ok((Tensor::new(vec![n, rows * cols], data)?, rows, cols))
}

pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<usize>> {
    let magic = read_u32(bytes, 0, "labels")?;
    if magic != IDX_LABELS {
        return Err(Error::Format(format!("labels: bad magic {magic:#010x}")));
    }
    let n = read_u32(bytes, 4, "labels")? as usize;
    let payload = &bytes[8..];
    if payload.len() < n {
        return Err(Error::Format(format!(
            "labels: truncated payload ({} of {n} bytes)",
            payload.len()
        )));
    }
    Ok(payload[..n].iter().map(|&b| b as usize).collect())
}

/// Loads an IDX image/label pair; every row lands in the train split and the
/// class count is `max label + 1`.
pub fn load_mnist_idx(images: &Path, labels: &Path) -> Result<Dataset> {
    let (x, _, _) = parse_idx_images(&std::fs::read(images)?)?;
    let y = parse_idx_labels(&std::fs::read(labels)?)?;
    if x.rows() != y.len() {
        return Err(Error::Format(format!(
            "{} images but {} labels",
            x.rows(),
            y.len()
        )));
    }
    let k = y.iter().max().map_or(0, |m| m + 1);
    Dataset::unsplit(x, y, k, format!("idx:{}", images.display()))
}

/// IDX bytes for `[n × rows·cols]` features in `[0, 1]` (rounded to bytes).
pub fn idx_image_bytes(features: &Tensor, rows: usize, cols: usize) -> Result<Vec<u8>> {
    let (n, d) = features.as_matrix_dims("idx")?;
    if d != rows * cols {
        return Err(Error::dim(
            "idx",
            format!("{d} features for {rows}x{cols} images"),
        ));
    }
    let mut out = Vec::with_capacity(16 + n * d);
    for v in [IDX_IMAGES, n as u32, rows as u32, cols as u32] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    out.extend(
        features
            .data()
            .iter()
            .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8),
    );
    Ok(out)
}

pub fn idx_label_bytes(labels: &[usize]) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&IDX_LABELS.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    for &y in labels {
        out.push(
            u8::try_from(y)
                .map_err(|_| Error::InvalidArgument(format!("label {y} does not fit a byte")))?,
        );
    }
    Ok(out)
}

/// Parses an embedding file.
///
/// ```text
/// 4 bytes    magic "EMB1"
/// u32 LE     n (rows)
/// u32 LE     d (features per row)
/// u32 LE     K (classes)
/// n·d × f32  features, row-major, little-endian
/// n × u32    labels, little-endian
/// ```
pub fn parse_embeddings(bytes: &[u8]) -> Result<(Tensor, Vec<usize>, usize)> {
    if bytes.len() < 16 || &bytes[..4] != EMB_MAGIC {
        return Err(Error::Format(
            "embeddings: bad magic or truncated header".into(),
        ));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap()) as usize;
    let (n, d, k) = (word(4), word(8), word(12));
    let need = 16 + 4 * n * d + 4 * n;
    if bytes.len() != need {
        return Err(Error::Format(format!(
            "embeddings: expected {need} bytes, found {}",
            bytes.len()
        )));
    }
    let feats = bytes[16..16 + 4 * n * d]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    let labels: Vec<usize> = bytes[16 + 4 * n * d..]
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes(c.try_into().unwrap()) as usize)
        .collect();
    Ok((Tensor::new(vec![n, d], feats)?, labels, k))
}

pub fn embedding_bytes(features: &Tensor, labels: &[usize], num_classes: usize) -> Result<Vec<u8>> {
    let (n, d) = features.as_matrix_dims("embeddings")?;
    if labels.len() != n {
        return Err(Error::dim(
            "embeddings",
            format!("{n} rows but {} labels", labels.len()),
        ));
    }
    let mut out = Vec::with_capacity(16 + 4 * n * d + 4 * n);
    out.extend_from_slice(EMB_MAGIC);
    for v in [n, d, num_classes] {
        out.extend_from_slice(&(v as u32).to_le_bytes());
    }
    for &v in features.data() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    for &y in labels {
        out.extend_from_slice(&(y as u32).to_le_bytes());
    }
    Ok(out)
}

/// Loads embeddings. Without a test file the rows are split 60/20/20; with
/// one, 20% of the train file becomes the validation split.
pub fn load_embeddings(train: &Path, test: Option<&Path>, seed: u64) -> Result<Dataset> {
    let (x, y, k) = parse_embeddings(&std::fs::read(train)?)?;
    let source = format!("embeddings:{}", train.display());
    match test {
        None => {
            let n = y.len();
            Dataset::new(x, y, k, shuffled_split(n, seed), source)
        }
        Some(path) => {
            let train_ds = Dataset::unsplit(x, y, k, source)?;
            let (xt, yt, kt) = parse_embeddings(&std::fs::read(path)?)?;
            if kt != k {
                return Err(Error::dim("embeddings", "train and test files disagree on K"));
            }
            train_test(&train_ds, &Dataset::unsplit(xt, yt, kt, path.display().to_string())?, seed)
        }
    }
}

/// Joins a training source and a separate test source: a seeded 20% of the
/// training rows become the validation split, the rest train; every test row
/// goes to the test split.
pub fn train_test(train: &Dataset, test: &Dataset, seed: u64) -> Result<Dataset> {
    if train.dim() != test.dim() {
        return Err(Error::dim(
            "train_test",
            format!("train has {} features, test has {}", train.dim(), test.dim()),
        ));
    }
    let k = train.num_classes.max(test.num_classes);
    let n = train.len();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_val = n / 5;
    let val = idx[..n_val].to_vec();
    let mut train_idx = idx[n_val..].to_vec();
    train_idx.sort_unstable();
    let test_idx = (n..n + test.len()).collect();
    let mut data = train.features.data().to_vec();
    data.extend_from_slice(test.features.data());
    let mut labels = train.labels.clone();
    labels.extend_from_slice(&test.labels);
    let feats = Tensor::new(vec![labels.len(), train.dim()], data)?;
    let source = format!("{}+{}", train.source, test.source);
    Dataset::new(feats, labels, k, [train_idx, val, test_idx], source)
}

/// Seeded 60/20/20 split of `0..n`.
pub fn shuffled_split(n: usize, seed: u64) -> [Vec<usize>; 3] {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = n * 3 / 5;
    let n_val = n / 5;
    [
        idx[..n_train].to_vec(),
        idx[n_train..n_train + n_val].to_vec(),
        idx[n_train + n_val..].to_vec(),
    ]
}

/// Two-class subset relabelled `class_a → 0`, `class_b → 1`.
///
/// The train split takes `size / 2` rows per class (class a gets the extra row
/// when `size` is odd) from `train_source`. From `test_source` each class
/// contributes `eval_per_class` rows (default: the smaller class count),
/// halved between the validation and test splits.
pub fn binary_subset(
    train_source: &Dataset,
    test_source: &Dataset,
    class_a: usize,
    class_b: usize,
    size: usize,
    eval_per_class: Option<usize>,
    seed: u64,
) -> Result<Dataset> {
    if class_a == class_b {
        return Err(Error::InvalidArgument("the two classes must differ".into()));
    }
    if size < 2 {
        return Err(Error::InvalidArgument(
            "subset size must be at least 2".into(),
        ));
    }
    if train_source.dim() != test_source.dim() {
        return Err(Error::dim(
            "binary_subset",
            "train and test sources differ in dimension",
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pick =
        |src: &Dataset, class: usize, count: usize, rng: &mut ChaCha8Rng| -> Result<Vec<usize>> {
            let mut rows: Vec<usize> = (0..src.len()).filter(|&i| src.labels[i] == class).collect();
            if rows.len() < count {
                return Err(Error::InvalidArgument(format!(
                    "class {class} has {} samples, {count} requested",
                    rows.len()
                )));
            }
            rows.shuffle(rng);
            rows.truncate(count);
            Ok(rows)
        };
    let half_a = size - size / 2;
    let half_b = size / 2;
    let tr_a = pick(train_source, class_a, half_a, &mut rng)?;
    let tr_b = pick(train_source, class_b, half_b, &mut rng)?;

    let avail = |c: usize| test_source.labels.iter().filter(|&&y| y == c).count();
    let per_class = eval_per_class.unwrap_or_else(|| avail(class_a).min(avail(class_b)));
    if per_class < 2 {
        return Err(Error::InvalidArgument(
            "test source needs at least 2 rows per class".into(),
        ));
    }
    let ev_a = pick(test_source, class_a, per_class, &mut rng)?;
    let ev_b = pick(test_source, class_b, per_class, &mut rng)?;

    let d = train_source.dim();
    let mut data = Vec::new();
    let mut labels = Vec::new();
    let mut push = |src: &Dataset, rows: &[usize], label: usize| -> Vec<usize> {
        let start = labels.len();
        for &r in rows {
            data.extend_from_slice(src.features.row(r));
            labels.push(label);
        }
        (start..labels.len()).collect()
    };
    let mut train = push(train_source, &tr_a, 0);
    train.extend(push(train_source, &tr_b, 1));
    let val_half = per_class / 2;
    let mut val = push(test_source, &ev_a[..val_half], 0);
    val.extend(push(test_source, &ev_b[..val_half], 1));
    let mut test = push(test_source, &ev_a[val_half..], 0);
    test.extend(push(test_source, &ev_b[val_half..], 1));
    let n = labels.len();
    Dataset::new(
        Tensor::new(vec![n, d], data)?,
        labels,
        2,
        [train, val, test],
        format!(
            "{}[{class_a} vs {class_b}, n={size}, seed={seed}]",
            train_source.source
        ),
    )
}

/// Keeps `floor(ratio_k / max ratio · available_k)` train rows of class `k`
/// (seeded); validation and test are untouched. Returns the dataset and the
/// realized train class fractions.
pub fn imbalance_subsample(ds: &Dataset, ratios: &[f64], seed: u64) -> Result<(Dataset, Vec<f64>)> {
    let k = ds.num_classes;
    if ratios.len() != k {
        return Err(Error::dim(
            "imbalance",
            format!("{} ratios for {k} classes", ratios.len()),
        ));
    }
    if let Some((i, &r)) = ratios
        .iter()
        .enumerate()
        .find(|(_, r)| !(**r > 0.0 && r.is_finite()))
    {
        return Err(Error::InvalidArgument(format!(
            "imbalance ratio {i} must be positive and finite, got {r}"
        )));
    }
    let max = ratios.iter().cloned().fold(0.0, f64::max);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::new();
    let mut counts = Vec::with_capacity(k);
    for (c, &r) in ratios.iter().enumerate() {
        let mut rows: Vec<usize> = ds
            .train
            .iter()
            .copied()
            .filter(|&i| ds.labels[i] == c)
            .collect();
        let keep = (r / max * rows.len() as f64).floor() as usize;
        if keep == 0 {
            return Err(Error::InvalidArgument(format!(
                "class {c} would be left without samples"
            )));
        }
        rows.shuffle(&mut rng);
        rows.truncate(keep);
        counts.push(keep);
        train.extend(rows);
    }
    train.sort_unstable();
    let total: usize = counts.iter().sum();
    let fractions = counts.iter().map(|&c| c as f64 / total as f64).collect();
    let out = Dataset {
        train,
        source: format!("{}+imbalance({ratios:?})", ds.source),
        ..ds.clone()
    };
    Ok((out, fractions))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CorruptionKind {
    /// `(1 − γ) e + γ η` with `η ~ N(0, I)`.
    MixNoise,
    /// `e + N(0, std²)`, clamped to `[0, 1]`.
    GaussianAdditive,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorruptionSpec {
    pub kind: CorruptionKind,
    /// `γ` for mix-noise, the noise std for gaussian-additive.
    pub strength: f64,
    #[serde(default)]
    pub seed: u64,
}

impl CorruptionSpec {
    pub fn mix(gamma: f64, seed: u64) -> Self {
        CorruptionSpec {
            kind: CorruptionKind::MixNoise,
            strength: gamma,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match self.kind {
            CorruptionKind::MixNoise => (0.0..=1.0).contains(&self.strength),
            CorruptionKind::GaussianAdditive => self.strength >= 0.0 && self.strength.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!(
                "corruption strength {} is out of range for {:?}",
                self.strength, self.kind
            )))
        }
    }
}

pub fn corrupt(features: &Tensor, spec: &CorruptionSpec) -> Result<Tensor> {
    spec.validate()?;
    if spec.strength == 0.0 {
        return Ok(features.clone());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let g = spec.strength;
    let mut out = features.clone();
    for e in out.data_mut() {
        let eta: f64 = rng.sample(StandardNormal);
        *e = match spec.kind {
            CorruptionKind::MixNoise => (1.0 - g) * *e + g * eta,
            CorruptionKind::GaussianAdditive => (*e + g * eta).clamp(0.0, 1.0),
        };
    }
    Ok(out)
}

/// `k` isotropic 2-D Gaussian blobs with standard deviation `std`, centers
/// on a circle with adjacent centers `separation` apart. Classes are
/// balanced (the first `n mod k` classes get one extra row); split 60/20/20.
pub fn synth_blobs(n: usize, k: usize, separation: f64, std: f64, seed: u64) -> Result<Dataset> {
    if k < 2 {
        return Err(Error::InvalidArgument("need at least two blobs".into()));
    }
    if n < 10 * k {
        return Err(Error::InvalidArgument(format!(
            "need at least {} points for {k} blobs",
            10 * k
        )));
    }
    if !(std > 0.0 && separation > 0.0) {
        return Err(Error::InvalidArgument(
            "separation and std must be positive".into(),
        ));
    }
    let centers = blob_centers(k, separation);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, std).expect("positive std");
    let mut data = Vec::with_capacity(2 * n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let c = i % k;
        data.push(centers[c].0 + normal.sample(&mut rng));
        data.push(centers[c].1 + normal.sample(&mut rng));
        labels.push(c);
    }
    let splits = shuffled_split(n, seed ^ 0x5eed);
    Dataset::new(
        Tensor::new(vec![n, 2], data)?,
        labels,
        k,
        splits,
        format!("blobs(n={n},k={k},sep={separation},std={std},seed={seed})"),
    )
}

/// Blob centers used by [`synth_blobs`].
pub fn blob_centers(k: usize, separation: f64) -> Vec<(f64, f64)> {
    let radius = separation / (2.0 * (PI / k as f64).sin());
    (0..k)
        .map(|c| {
            let t = 2.0 * PI * c as f64 / k as f64;
            (radius * t.cos(), radius * t.sin())
        })
        .collect()
}

/// Two interleaved half circles of radius 1 with Gaussian jitter `noise`:
/// class 0 on `(cos t, sin t)`, class 1 on `(1 − cos t, 0.5 − sin t)`,
/// `t ∈ [0, π]`. Split 60/20/20.
pub fn synth_moons(n: usize, noise: f64, seed: u64) -> Result<Dataset> {
    if n < 20 {
        return Err(Error::InvalidArgument("need at least 20 points".into()));
    }
    if !(noise >= 0.0) {
        return Err(Error::InvalidArgument("noise must be non-negative".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n0 = n - n / 2;
    let n1 = n / 2;
    let mut data = Vec::with_capacity(2 * n);
    let mut labels = Vec::with_capacity(n);
    for (class, count) in [(0, n0), (1, n1)] {
        for i in 0..count {
            let t = PI * i as f64 / (count - 1).max(1) as f64;
            let (x, y) = if class == 0 {
                (t.cos(), t.sin())
            } else {
                (1.0 - t.cos(), 0.5 - t.sin())
            };
            let (jx, jy) = if noise > 0.0 {
                let a: f64 = rng.sample(StandardNormal);
                let b: f64 = rng.sample(StandardNormal);
                (noise * a, noise * b)
            } else {
                (0.0, 0.0)
            };
            data.push(x + jx);
            data.push(y + jy);
            labels.push(class);
        }
    }
    Dataset::new(
        Tensor::new(vec![n, 2], data)?,
        labels,
        2,
        shuffled_split(n, seed ^ 0x5eed),
        format!("moons(n={n},noise={noise},seed={seed})"),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixture() -> (Vec<u8>, Vec<u8>) {
        let mut img = vec![0, 0, 8, 3, 0, 0, 0, 2, 0, 0, 0, 3, 0, 0, 0, 3];
        img.extend([0, 51, 102, 153, 204, 255, 1, 2, 3]);
        img.extend([255, 0, 255, 0, 255, 0, 255, 0, 255]);
        let lab = vec![0, 0, 8, 1, 0, 0, 0, 2, 3, 5];
        (img, lab)
    }

    #[test]
    fn idx_fixture_parses_exactly() {
        let (img, lab) = fixture();
        let (x, r, c) = parse_idx_images(&img).unwrap();
        assert_eq!((r, c), (3, 3));
        assert_eq!(x.shape(), &[2, 9]);
        assert_eq!(x.row(0)[..6], [0.0, 0.2, 0.4, 0.6, 0.8, 1.0]);
        assert_eq!(x.row(0)[6], 1.0 / 255.0);
        assert_eq!(x.row(1)[1], 0.0);
        assert_eq!(parse_idx_labels(&lab).unwrap(), vec![3, 5]);
    }

    #[test]
    fn idx_errors() {
        let (img, _) = fixture();
        assert!(matches!(parse_idx_labels(&img), Err(Error::Format(_))));
        assert!(matches!(parse_idx_images(&[]), Err(Error::Format(_))));
        assert!(matches!(
            parse_idx_images(&img[..20]),
            Err(Error::Format(_))
        ));
    }

    #[test]
    fn idx_round_trip() {
        let (img, lab) = fixture();
        let (x, r, c) = parse_idx_images(&img).unwrap();
        assert_eq!(idx_image_bytes(&x, r, c).unwrap(), img);
        assert_eq!(
            idx_label_bytes(&parse_idx_labels(&lab).unwrap()).unwrap(),
            lab
        );
    }

    #[test]
    fn embedding_round_trip() {
        let x = Tensor::matrix(2, 3, vec![0.5, -1.25, 3.0, 0.0, 2.5, -0.75]).unwrap();
        let bytes = embedding_bytes(&x, &[1, 0], 2).unwrap();
        let (x2, y2, k) = parse_embeddings(&bytes).unwrap();
        assert_eq!((x2, y2, k), (x, vec![1, 0], 2));
        assert!(parse_embeddings(&bytes[..bytes.len() - 1]).is_err());
    }

    fn source(per_class: usize, classes: &[usize]) -> Dataset {
        let mut data = Vec::new();
        let mut labels = Vec::new();
        for &c in classes {
            for i in 0..per_class {
                data.extend([c as f64, i as f64]);
                labels.push(c);
            }
        }
        let n = labels.len();
        Dataset::unsplit(
            Tensor::new(vec![n, 2], data).unwrap(),
            labels,
            10,
            "fixture",
        )
        .unwrap()
    }

    #[test]
    fn binary_subset_is_balanced_and_seeded() {
        let src = source(600, &[1, 3, 5]);
        let test = source(100, &[3, 5]);
        let d = binary_subset(&src, &test, 3, 5, 1000, None, 7).unwrap();
        assert_eq!(d.class_counts(Split::Train), vec![500, 500]);
        assert_eq!(d.class_counts(Split::Val), vec![50, 50]);
        assert_eq!(d.class_counts(Split::Test), vec![50, 50]);
        assert_eq!(d, binary_subset(&src, &test, 3, 5, 1000, None, 7).unwrap());
        assert_ne!(d, binary_subset(&src, &test, 3, 5, 1000, None, 8).unwrap());
        assert!(binary_subset(&src, &test, 3, 5, 1400, None, 7).is_err());
    }

    #[test]
    fn imbalance_keeps_expected_counts() {
        let mut data = Vec::new();
        let mut labels = Vec::new();
        for c in 0..3 {
            for _ in 0..400 {
                data.push(c as f64);
                labels.push(c);
            }
        }
        let ds =
            Dataset::unsplit(Tensor::new(vec![1200, 1], data).unwrap(), labels, 3, "t").unwrap();
        let (out, f) = imbalance_subsample(&ds, &[1.0, 0.5, 0.25], 1).unwrap();
        assert_eq!(out.class_counts(Split::Train), vec![400, 200, 100]);
        for (a, b) in f.iter().zip([4.0 / 7.0, 2.0 / 7.0, 1.0 / 7.0]) {
            assert!((a - b).abs() < 1e-15);
        }
        let (same, _) = imbalance_subsample(&ds, &[1.0; 3], 1).unwrap();
        assert_eq!(same.indices(Split::Train), ds.indices(Split::Train));
        assert!(imbalance_subsample(&ds, &[1.0, 1.0, 1e-4], 1).is_err());
    }

    #[test]
    fn ten_class_power_of_two_scheme() {
        let mut data = Vec::new();
        let mut labels = Vec::new();
        for c in 0..10 {
            for _ in 0..512 {
                data.push(0.0);
                labels.push(c);
            }
        }
        let ds =
            Dataset::unsplit(Tensor::new(vec![5120, 1], data).unwrap(), labels, 10, "t").unwrap();
        let mut ratios: Vec<f64> = (0..9).map(|i| 0.5f64.powi(i)).collect();
        ratios.push(0.5f64.powi(8));
        let (out, _) = imbalance_subsample(&ds, &ratios, 3).unwrap();
        let c = out.class_counts(Split::Train);
        assert_eq!(c[0], 512);
        assert_eq!(c[8], c[9]);
        assert_eq!(c[9], 2);
    }

    #[test]
    fn corruption_properties() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = crate::distributions::standard_normal(&[10_000, 1], &mut rng);
        assert_eq!(corrupt(&x, &CorruptionSpec::mix(0.0, 1)).unwrap(), x);

        let y = corrupt(&x, &CorruptionSpec::mix(1.0, 1)).unwrap();
        let corr = correlation(x.data(), y.data());
        assert!(corr.abs() < 0.05, "{corr}");

        let h = corrupt(&x, &CorruptionSpec::mix(0.5, 1)).unwrap();
        let var = variance(h.data());
        assert!((var - 0.5).abs() < 0.03, "{var}");

        let other = corrupt(&x, &CorruptionSpec::mix(0.5, 2)).unwrap();
        assert_ne!(h, other);
        assert!(CorruptionSpec::mix(1.5, 0).validate().is_err());
    }

    fn variance(v: &[f64]) -> f64 {
        let m = v.iter().sum::<f64>() / v.len() as f64;
        v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / v.len() as f64
    }

    fn correlation(a: &[f64], b: &[f64]) -> f64 {
        let n = a.len() as f64;
        let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
        let cov: f64 = a
            .iter()
            .zip(b)
            .map(|(x, y)| (x - ma) * (y - mb))
            .sum::<f64>()
            / n;
        cov / (variance(a) * variance(b)).sqrt()
    }

    #[test]
    fn blobs_are_separable_and_seeded() {
        let d = synth_blobs(300, 3, 10.0, 1.0, 5).unwrap();
        let centers = blob_centers(3, 10.0);
        for i in 0..d.len() {
            let r = d.features().row(i);
            let nearest = (0..3)
                .min_by(|&a, &b| {
                    let da = (r[0] - centers[a].0).powi(2) + (r[1] - centers[a].1).powi(2);
                    let db = (r[0] - centers[b].0).powi(2) + (r[1] - centers[b].1).powi(2);
                    da.total_cmp(&db)
                })
                .unwrap();
            assert_eq!(nearest, d.labels()[i]);
        }
        assert_eq!(d, synth_blobs(300, 3, 10.0, 1.0, 5).unwrap());
        let sizes: Vec<usize> = [Split::Train, Split::Val, Split::Test]
            .iter()
            .map(|&s| d.indices(s).len())
            .collect();
        assert_eq!(sizes, vec![180, 60, 60]);
        assert!(synth_blobs(20, 3, 4.0, 1.0, 0).is_err());
    }

    #[test]
    fn noiseless_moons_lie_on_circles() {
        let d = synth_moons(200, 0.0, 1).unwrap();
        for i in 0..d.len() {
            let r = d.features().row(i);
            let (cx, cy) = if d.labels()[i] == 0 {
                (0.0, 0.0)
            } else {
                (1.0, 0.5)
            };
            let radius = ((r[0] - cx).powi(2) + (r[1] - cy).powi(2)).sqrt();
            assert!((radius - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn dataset_rejects_overlapping_splits() {
        let x = Tensor::zeros(vec![3, 1]);
        assert!(Dataset::new(x, vec![0, 1, 0], 2, [vec![0, 1], vec![1], vec![2]], "t").is_err());
    }
}
