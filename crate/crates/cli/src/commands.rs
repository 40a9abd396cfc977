use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::json;

use selbo::bnn::{
    load_checkpoint, save_checkpoint, Method, ObjectiveConfig, VariationalMlp,
};
use selbo::data::{
    binary_subset, corrupt, imbalance_subsample, load_embeddings, load_mnist_idx, synth_blobs,
    synth_moons, train_test, CorruptionSpec, Dataset, Split,
};
use selbo::distributions::{BetaParams, DirichletParams};
use selbo::metrics::{self, MetricsRecord};
use selbo::par::{self, Exec};
use selbo::prior::{auto_mass, solve_prior, PriorKnowledge};
use selbo::summary::{
    discretize_base, hard_histogram, soft_histogram_weights, BaseMeasure, Partition,
    SoftHistogramConfig, SummaryPrior,
};
use selbo::train::{
    cross_validate, rng_for, step_log_csv, train, CvResult, S0Choice, Stream, TrainConfig,
};
use selbo::{Tape, Tensor};

use crate::config::{
    base_dir, read_json, resolve, BaseSpec, DataConfig, ObjectiveSection, RunConfig, Source,
    SummarySection,
};
use crate::error::CliError;

/// Everything but `cv` runs on the calling thread.
const EXEC: Exec = Exec::Sequential;

/// Creates `dir`, refusing a nonempty existing directory unless `force`.
pub fn prepare_output(dir: &Path, force: bool) -> Result<(), CliError> {
    if dir.exists() {
        let mut entries =
            fs::read_dir(dir).map_err(|e| CliError::io(format!("read {}", dir.display()), e))?;
        if entries.next().is_some() && !force {
            return Err(CliError::OutputNotEmpty(dir.to_path_buf()));
        }
    } else {
        fs::create_dir_all(dir).map_err(|e| CliError::io(format!("create {}", dir.display()), e))?;
    }
    Ok(())
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| CliError::io(format!("write {}", path.display()), e))
}

fn to_pretty<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("plain data serializes") + "\n"
}

pub fn load_data(cfg: &DataConfig, base: &Path) -> Result<Dataset, CliError> {
    let ds = match &cfg.source {
        Source::MnistIdx {
            train_images,
            train_labels,
            test_images,
            test_labels,
            binary,
            seed,
        } => {
            let tr = load_mnist_idx(&resolve(base, train_images), &resolve(base, train_labels))?;
            let te = load_mnist_idx(&resolve(base, test_images), &resolve(base, test_labels))?;
            match binary {
                Some(b) => binary_subset(
                    &tr,
                    &te,
                    b.classes[0],
                    b.classes[1],
                    b.size,
                    b.eval_per_class,
                    *seed,
                )?,
                None => train_test(&tr, &te, *seed)?,
            }
        }
        Source::Embeddings { train, test, seed } => load_embeddings(
            &resolve(base, train),
            test.as_ref().map(|t| resolve(base, t)).as_deref(),
            *seed,
        )?,
        Source::Blobs {
            n,
            classes,
            separation,
            std,
            seed,
        } => synth_blobs(*n, *classes, *separation, *std, *seed)?,
        Source::Moons { n, noise, seed } => synth_moons(*n, *noise, *seed)?,
    };
    let ds = match &cfg.imbalance {
        Some(spec) => imbalance_subsample(&ds, &spec.ratios, spec.seed)?.0,
        None => ds,
    };
    match &cfg.corruption {
        Some(spec) => Ok(corrupt_split(&ds, Split::Test, spec)?),
        None => Ok(ds),
    }
}

/// Copy of `ds` with the rows of one split corrupted.
fn corrupt_split(ds: &Dataset, split: Split, spec: &CorruptionSpec) -> Result<Dataset, CliError> {
    let rows = ds.indices(split);
    let noisy = corrupt(&ds.features().select_rows(rows), spec)?;
    let mut features = ds.features().clone();
    let d = ds.dim();
    for (k, &r) in rows.iter().enumerate() {
        features.data_mut()[r * d..(r + 1) * d].copy_from_slice(noisy.row(k));
    }
    Ok(ds.with_features(features)?)
}

fn summary_prior(
    s: &SummarySection,
    ds: &Dataset,
    base: &Path,
) -> Result<SummaryPrior, CliError> {
    if let Some(path) = &s.prior_file {
        if s.partition.is_some() || s.base.is_some() {
            return Err(CliError::Config(
                "summary: give either prior_file or partition and base, not both".into(),
            ));
        }
        let path = resolve(base, path);
        let text = fs::read_to_string(&path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let prior = SummaryPrior::from_json(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        return Ok(match s.alpha {
            Some(a) => prior.with_alpha(a)?,
            None => prior,
        });
    }
    let (Some(partition), Some(spec), Some(alpha)) = (&s.partition, &s.base, s.alpha) else {
        return Err(CliError::Config(
            "summary needs prior_file, or partition, base and alpha".into(),
        ));
    };
    let counts = ds.class_counts(Split::Train);
    let mass = match spec {
        BaseSpec::Auto => auto_mass(partition, &counts, s.floor)?,
        BaseSpec::Mass { mass } => mass.clone(),
        other => {
            let measure = match other {
                BaseSpec::Uniform => BaseMeasure::Uniform,
                BaseSpec::Beta { a, b } => BaseMeasure::Beta(BetaParams::new(*a, *b)?),
                BaseSpec::Dirichlet { concentration } => {
                    BaseMeasure::Dirichlet(DirichletParams::new(concentration.clone())?)
                }
                BaseSpec::ClassFractions { fractions } => BaseMeasure::ClassFractions(
                    fractions
                        .clone()
                        .unwrap_or_else(|| counts.iter().map(|&c| c as f64).collect()),
                ),
                BaseSpec::Derived {
                    minority_fraction,
                    expected_accuracy,
                } => {
                    let k = PriorKnowledge::new(*minority_fraction, *expected_accuracy)?;
                    BaseMeasure::Beta(solve_prior(&k)?.params)
                }
                BaseSpec::Auto | BaseSpec::Mass { .. } => unreachable!("handled above"),
            };
            discretize_base(&measure, partition, s.floor)?
        }
    };
    Ok(SummaryPrior::with_floor(partition.clone(), &mass, alpha, s.floor)?)
}

pub fn objective(
    sec: &ObjectiveSection,
    ds: &Dataset,
    base: &Path,
) -> Result<ObjectiveConfig, CliError> {
    let mut obj = ObjectiveConfig::new(sec.method, ds.indices(Split::Train).len());
    obj.mc_samples = sec.mc_samples;
    obj.prior_std = sec.prior_std;
    obj.smoothing = sec.smoothing;
    obj.soft = sec.soft;
    match (&sec.summary, sec.method.uses_summary()) {
        (Some(s), true) => obj.summary = Some(summary_prior(s, ds, base)?),
        (Some(_), false) => {
            return Err(CliError::Config(format!(
                "method {} does not use a summary; remove objective.summary",
                sec.method.name()
            )))
        }
        (None, _) => {}
    }
    obj.validate()?;
    Ok(obj)
}

fn test_metrics(
    model: &VariationalMlp,
    ds: &Dataset,
    method: Method,
    cfg: &TrainConfig,
) -> Result<MetricsRecord, CliError> {
    let (x, y) = ds.split(Split::Test);
    let mut rng = rng_for(cfg.seed, Stream::Eval);
    Ok(metrics::evaluate(
        model,
        &x,
        &y,
        cfg.eval_mc_samples,
        method.is_point(),
        &mut rng,
        EXEC,
    )?)
}

struct Loaded {
    cfg: RunConfig,
    data: Dataset,
    objective: ObjectiveConfig,
    output: PathBuf,
}

fn load_run(config: &Path) -> Result<Loaded, CliError> {
    let cfg: RunConfig = read_json(config)?;
    cfg.train.validate()?;
    let base = base_dir(config);
    let data = load_data(&cfg.data, &base)?;
    let objective = objective(&cfg.objective, &data, &base)?;
    let output = resolve(&base, &cfg.output.directory);
    Ok(Loaded {
        cfg,
        data,
        objective,
        output,
    })
}

pub fn cmd_train(config: &Path, force: bool) -> Result<serde_json::Value, CliError> {
    let run = load_run(config)?;
    if run.cfg.seeds.as_ref().is_some_and(Vec::is_empty) {
        return Err(CliError::Config("seeds must not be empty".into()));
    }
    prepare_output(&run.output, force)?;
    let seeds = run.cfg.seeds.clone().unwrap_or_else(|| vec![run.cfg.train.seed]);
    let multi = run.cfg.seeds.is_some();
    let mut records = Vec::new();
    for &seed in &seeds {
        let cfg = TrainConfig {
            seed,
            ..run.cfg.train.clone()
        };
        let dir = if multi {
            let d = run.output.join(format!("seed-{seed}"));
            fs::create_dir_all(&d).map_err(|e| CliError::io(format!("create {}", d.display()), e))?;
            d
        } else {
            run.output.clone()
        };
        let model = run.cfg.model.build(run.objective.prior_std, seed)?;
        let out = train(model, &run.data, &run.objective, &cfg, EXEC)?;
        let record = test_metrics(&out.model, &run.data, run.objective.method, &cfg)?;
        save_checkpoint(&dir.join("checkpoint.bin"), &out.model, run.objective.method)?;
        write(&dir.join("train-log.csv"), step_log_csv(&out.log))?;
        write(&dir.join("metrics.json"), record.to_json()?)?;
        records.push(record);
    }
    if multi {
        write(&run.output.join("summary.csv"), seed_summary_csv(&records))?;
    }
    Ok(json!({
        "command": "train",
        "output": run.output,
        "method": run.objective.method.name(),
        "seeds": seeds,
        "metrics": records,
    }))
}

/// `metric,mean,stderr` over seeds.
fn seed_summary_csv(records: &[MetricsRecord]) -> String {
    let cols: [(&str, fn(&MetricsRecord) -> f64); 6] = [
        ("nll", |r| r.nll),
        ("accuracy", |r| r.accuracy),
        ("ece", |r| r.ece),
        ("auroc", |r| r.auroc),
        ("f1_macro", |r| r.f1_macro),
        ("mean_entropy", |r| r.mean_entropy),
    ];
    let mut out = String::from("metric,mean,stderr\n");
    for (name, get) in cols {
        let values: Vec<f64> = records.iter().map(get).collect();
        let (mean, se) = metrics::mean_stderr(&values);
        out.push_str(&format!("{name},{mean},{se}\n"));
    }
    out
}

pub struct EvalArgs<'a> {
    pub checkpoint: &'a Path,
    pub data: &'a Path,
    pub output: &'a Path,
    pub force: bool,
    pub corrupt: &'a [f64],
    pub corrupt_seed: u64,
    pub ood: Option<&'a Path>,
    pub mc_samples: usize,
    pub seed: u64,
    pub split: Split,
}

fn load_data_file(path: &Path) -> Result<Dataset, CliError> {
    let cfg: DataConfig = read_json(path)?;
    load_data(&cfg, &base_dir(path))
}

pub fn cmd_eval(args: &EvalArgs<'_>) -> Result<serde_json::Value, CliError> {
    if args.mc_samples == 0 {
        return Err(CliError::Config("--mc-samples must be at least 1".into()));
    }
    let (model, method) = load_checkpoint(args.checkpoint)?;
    let ds = load_data_file(args.data)?;
    let ood = args.ood.map(load_data_file).transpose()?;
    if ds.dim() != model.input_dim() {
        return Err(selbo::Error::Dimension {
            op: "eval",
            detail: format!("data has {} features, model expects {}", ds.dim(), model.input_dim()),
        }
        .into());
    }
    if let Some(o) = &ood {
        if o.dim() != ds.dim() {
            return Err(selbo::Error::Dimension {
                op: "eval",
                detail: format!("OOD data has {} features, in-domain has {}", o.dim(), ds.dim()),
            }
            .into());
        }
    }
    let gammas: Vec<f64> = if args.corrupt.is_empty() {
        vec![0.0]
    } else {
        args.corrupt.to_vec()
    };
    let specs: Vec<CorruptionSpec> = gammas
        .iter()
        .map(|&g| CorruptionSpec::mix(g, args.corrupt_seed))
        .collect();
    for s in &specs {
        s.validate()?;
    }
    prepare_output(args.output, args.force)?;

    let point = method.is_point();
    let (x, y) = ds.split(args.split);
    if y.is_empty() {
        return Err(CliError::Config(format!("the {} split is empty", args.split.name())));
    }
    let mut csv = format!("gamma,{}\n", MetricsRecord::CSV_HEADER);
    let mut reliability = String::from("gamma,bin,lower,upper,count,confidence,accuracy\n");
    let mut rows = Vec::new();
    for (g, spec) in gammas.iter().zip(&specs) {
        let xc = corrupt(&x, spec)?;
        let mut rng = rng_for(args.seed, Stream::Eval);
        let probs = model.predictive(&xc, args.mc_samples, point, &mut rng, EXEC)?;
        let rec = metrics::metrics_from_probs(&probs, &y, if point { 1 } else { args.mc_samples })?;
        csv.push_str(&format!("{g},{}\n", rec.csv_row()));
        for (i, b) in metrics::reliability(&probs, &y)?.iter().enumerate() {
            reliability.push_str(&format!(
                "{g},{i},{},{},{},{},{}\n",
                b.lower, b.upper, b.count, b.confidence, b.accuracy
            ));
        }
        rows.push(json!({"gamma": g, "metrics": rec}));
    }
    write(&args.output.join("metrics.csv"), csv)?;
    write(&args.output.join("reliability.csv"), reliability)?;
    write(&args.output.join("metrics.json"), to_pretty(&rows))?;

    let mut summary = json!({
        "command": "eval",
        "output": args.output,
        "method": method.name(),
        "results": rows,
    });
    if let Some(o) = ood {
        let (xo, _) = o.split(args.split);
        let mut rng = rng_for(args.seed, Stream::Eval);
        let report = metrics::delta_ood(&model, &x, &xo, args.mc_samples, point, &mut rng, EXEC)?;
        write(&args.output.join("ood.json"), to_pretty(&report))?;
        summary["ood"] = json!(report);
    }
    Ok(summary)
}

pub struct HistogramArgs<'a> {
    pub checkpoint: &'a Path,
    pub data: &'a Path,
    pub partition: Partition,
    pub output: &'a Path,
    pub force: bool,
    pub split: Split,
    pub mc_samples: usize,
    pub seed: u64,
    pub slope: f64,
}

/// Hard and soft region counts of the predictive scores; columns
/// `region,label,hard,soft`.
pub fn histogram_csv(
    model: &VariationalMlp,
    method: Method,
    x: &Tensor,
    partition: &Partition,
    soft: &SoftHistogramConfig,
    mc_samples: usize,
    seed: u64,
) -> Result<String, CliError> {
    let mut rng = rng_for(seed, Stream::Eval);
    let probs = model.predictive(x, mc_samples, method.is_point(), &mut rng, EXEC)?;
    let hard = hard_histogram(&probs, partition)?;
    let tape = Tape::new();
    let soft_counts = soft_histogram_weights(tape.constant(probs), partition, soft)?
        .value()
        .data()
        .to_vec();
    let mut out = String::from("region,label,hard,soft\n");
    for (i, (h, s)) in hard.iter().zip(&soft_counts).enumerate() {
        // Interval labels contain commas.
        let label = partition.region_label(i).replace('"', "\"\"");
        out.push_str(&format!("{i},\"{label}\",{h},{s}\n"));
    }
    Ok(out)
}

pub fn cmd_histogram(args: &HistogramArgs<'_>) -> Result<serde_json::Value, CliError> {
    if args.mc_samples == 0 {
        return Err(CliError::Config("--mc-samples must be at least 1".into()));
    }
    let (model, method) = load_checkpoint(args.checkpoint)?;
    let ds = load_data_file(args.data)?;
    if args.partition.num_classes() != model.num_classes() {
        return Err(CliError::Config(format!(
            "partition is over {} classes, model predicts {}",
            args.partition.num_classes(),
            model.num_classes()
        )));
    }
    let soft = SoftHistogramConfig {
        slope: args.slope,
        ..SoftHistogramConfig::default()
    };
    soft.validate(args.partition.region_count())?;
    prepare_output(args.output, args.force)?;
    let (x, _) = ds.split(args.split);
    let csv = histogram_csv(&model, method, &x, &args.partition, &soft, args.mc_samples, args.seed)?;
    write(&args.output.join("histogram.csv"), &csv)?;
    Ok(json!({
        "command": "histogram",
        "output": args.output,
        "rows": x.rows(),
        "regions": args.partition.region_count(),
    }))
}

pub struct DerivePriorArgs<'a> {
    pub minority_fraction: f64,
    pub expected_accuracy: f64,
    pub partition: Option<Partition>,
    pub alpha: f64,
    pub out: Option<&'a Path>,
    pub force: bool,
}

pub fn cmd_derive_prior(args: &DerivePriorArgs<'_>) -> Result<serde_json::Value, CliError> {
    let k = PriorKnowledge::new(args.minority_fraction, args.expected_accuracy)?;
    if args.partition.is_some() && args.out.is_none() {
        return Err(CliError::Config("--partition needs --out".into()));
    }
    if let Some(out) = args.out {
        if args.partition.is_none() {
            return Err(CliError::Config("--out needs --partition".into()));
        }
        if out.exists() && !args.force {
            return Err(CliError::Config(format!(
                "{} exists; pass --force to overwrite",
                out.display()
            )));
        }
    }
    let sol = solve_prior(&k)?;
    let mut summary = json!({
        "command": "derive-prior",
        "a": sol.params.a,
        "b": sol.params.b,
        "target": {"gamma0": k.majority_fraction(), "expected_accuracy": k.expected_accuracy},
        "achieved": {"gamma0": sol.achieved.0, "expected_accuracy": sol.achieved.1},
        "residual": sol.residual,
        "converged": sol.converged,
    });
    if let (Some(partition), Some(out)) = (&args.partition, args.out) {
        let mass = discretize_base(&BaseMeasure::Beta(sol.params), partition, selbo::summary::DEFAULT_FLOOR)?;
        let prior = SummaryPrior::new(partition.clone(), &mass, args.alpha)?;
        write(out, prior.to_json()?)?;
        summary["prior_file"] = json!(out);
    }
    Ok(summary)
}

pub fn cmd_cv(config: &Path, jobs: usize, force: bool) -> Result<serde_json::Value, CliError> {
    if jobs == 0 {
        return Err(CliError::Config("--jobs must be at least 1".into()));
    }
    let cfg: RunConfig = read_json(config)?;
    cfg.train.validate()?;
    let base = base_dir(config);
    let data = load_data(&cfg.data, &base)?;
    let grid = cfg.grid.clone().unwrap_or_default();
    let method = cfg.objective.method;
    // The grid supplies α and s0; the configured summary only contributes
    // its partition.
    let partition = match (&cfg.objective.summary, method.uses_summary()) {
        (Some(s), true) => Some(match (&s.prior_file, &s.partition) {
            (_, Some(p)) => p.clone(),
            (Some(_), None) => summary_prior(s, &data, &base)?.partition().clone(),
            (None, None) => {
                return Err(CliError::Config("cv: summary needs a partition".into()))
            }
        }),
        (None, true) => {
            return Err(CliError::Config(format!(
                "cv with method {} needs objective.summary with a partition",
                method.name()
            )))
        }
        _ => None,
    };
    let section = ObjectiveSection {
        summary: None,
        ..cfg.objective.clone()
    };
    let mut base_obj = ObjectiveConfig::new(method, data.indices(Split::Train).len());
    base_obj.mc_samples = section.mc_samples;
    base_obj.prior_std = section.prior_std;
    base_obj.smoothing = section.smoothing;
    base_obj.soft = section.soft;
    let output = resolve(&base, &cfg.output.directory);
    prepare_output(&output, force)?;

    let counts = data.class_counts(Split::Train);
    let floor = cfg
        .objective
        .summary
        .as_ref()
        .map(|s| s.floor)
        .unwrap_or(selbo::summary::DEFAULT_FLOOR);
    let prior_for = |s0: S0Choice, alpha: f64| -> selbo::Result<SummaryPrior> {
        let p = partition
            .as_ref()
            .ok_or_else(|| selbo::Error::Config("no partition for the summary".into()))?;
        let mass = match s0 {
            S0Choice::Uniform => vec![1.0 / p.region_count() as f64; p.region_count()],
            S0Choice::Auto => auto_mass(p, &counts, floor)?,
        };
        SummaryPrior::with_floor(p.clone(), &mass, alpha, floor)
    };
    let result: CvResult = par::with_jobs(jobs, || {
        cross_validate(
            &data,
            &cfg.model,
            &base_obj,
            &grid,
            &cfg.train,
            &prior_for,
            Exec::Parallel,
        )
    })?;
    write(&output.join("cv-table.csv"), result.table_csv())?;
    let best = json!({
        "method": method.name(),
        "cell": result.best,
        "val_nll": result.best_val_nll,
    });
    write(&output.join("best.json"), to_pretty(&best))?;
    Ok(json!({
        "command": "cv",
        "output": output,
        "best": best,
        "cells": result.table.len(),
        "failed": result.table.iter().filter(|r| r.error.is_some()).count(),
    }))
}
