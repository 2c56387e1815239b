//! Training loop, schedules, repeated-run evaluation, window sweep, scenario
//! table, and report emission.
//!
//! Everything is deterministic given (config, data): run r derives its seed
//! from the config seed, each epoch derives its shuffle seed from the run
//! seed, and report aggregation is a fixed-order reduction, so re-running a
//! subcommand reproduces its outputs byte for byte.

use std::io::Write;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use rand::seq::SliceRandom;

use crate::datamodel::{RunConfig, Sequence3D};
use crate::error::{Error, Result};
use crate::models::{
    build_linear, build_temporal, window_to_widths, LinearModelSpec, Model, TemporalModelSpec,
};
use crate::nncore::{
    adam_step, grad_check, mpjpe, mpjpe_backward, mpjpe_sum, derive_seed, rng_from_seed, Mode,
    Tensor,
};
use crate::preprocess::{
    chunk_split_shuffle, fit_standardizer, frame_split_shuffle, make_scenario, DatasetSplit,
    Rotation, Scenario, Standardizer,
};
use crate::preprocess::{align_sequence, Axis};

/// Keypoint names used for egocentric alignment when enabled.
pub const NOSE: &str = "nose";
pub const TAILBASE: &str = "tailbase";

// ── schedules ───────────────────────────────────────────────────────────────

/// `lr0 * lr_decay^epoch`
pub fn lr_schedule(epoch: usize, config: &RunConfig) -> f64 {
    config.lr0 * config.lr_decay.powi(epoch as i32)
}

/// Exponential interpolation from `bn_momentum_start` at epoch 0 to
/// `bn_momentum_end` at the final epoch.
pub fn bn_momentum_schedule(epoch: usize, config: &RunConfig) -> f64 {
    if config.epochs <= 1 {
        return config.bn_momentum_start;
    }
    let frac = epoch as f64 / (config.epochs - 1) as f64;
    config.bn_momentum_start * (config.bn_momentum_end / config.bn_momentum_start).powf(frac)
}

// ── data plumbing ───────────────────────────────────────────────────────────

/// Which architecture to train.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ModelKind {
    Linear,
    Temporal { window: usize },
}

impl ModelKind {
    pub fn label(&self) -> String {
        match self {
            ModelKind::Linear => "linear".into(),
            ModelKind::Temporal { window } => format!("temporal_w{window}"),
        }
    }
}

/// Scenario-selected raw (unstandardized) per-frame arrays.
#[derive(Debug, Clone)]
pub struct ScenarioData {
    pub inputs: Tensor,
    pub targets: Tensor,
    pub keypoints: Vec<String>,
    pub scenario: Scenario,
}

/// Align (optional), rotate per the scenario, and select axes.
pub fn build_scenario_data(seq: &Sequence3D, scenario: &Scenario, align: bool) -> Result<ScenarioData> {
    let aligned;
    let seq = if align {
        aligned = align_sequence(seq, NOSE, TAILBASE)?;
        &aligned
    } else {
        seq
    };
    let (inputs, targets) = make_scenario(seq, scenario)?;
    Ok(ScenarioData {
        inputs,
        targets,
        keypoints: seq.keypoint_names.clone(),
        scenario: scenario.clone(),
    })
}

/// Split (frame-shuffled for the linear model, chunk-shuffled for the
/// temporal one) and standardize with training-partition statistics.
pub fn prepare_split(
    data: &ScenarioData,
    kind: &ModelKind,
    test_fraction: f64,
    seed: u64,
) -> Result<(DatasetSplit, Standardizer)> {
    let split = match kind {
        ModelKind::Linear => frame_split_shuffle(&data.inputs, &data.targets, test_fraction, seed)?,
        ModelKind::Temporal { window } => {
            window_to_widths(*window)?;
            chunk_split_shuffle(&data.inputs, &data.targets, *window, test_fraction, seed)?
        }
    };
    let standardizer = fit_standardizer(
        &split.train_inputs,
        &split.train_targets,
        &data.keypoints,
        &data.scenario,
    )?;
    Ok((
        DatasetSplit {
            train_inputs: standardizer.apply_inputs(&split.train_inputs),
            train_targets: standardizer.apply_targets(&split.train_targets),
            test_inputs: standardizer.apply_inputs(&split.test_inputs),
            test_targets: standardizer.apply_targets(&split.test_targets),
            seed: split.seed,
        },
        standardizer,
    ))
}

/// Gather samples into a model-ready batch: `(batch, 2K)` for per-frame
/// inputs, `(batch, 2K, window)` channels-first for windowed inputs; targets
/// come out `(batch, K, 1)`.
fn assemble_batch(inputs: &Tensor, targets: &Tensor, indices: &[usize]) -> (Tensor, Tensor) {
    let k = targets.dims()[1];
    let mut y = Tensor::zeros(&[indices.len(), k, 1]);
    for (row, &i) in indices.iter().enumerate() {
        y.data_mut()[row * k..(row + 1) * k]
            .copy_from_slice(&targets.data()[i * k..(i + 1) * k]);
    }
    let x = match inputs.dims() {
        [_, w] => {
            let w = *w;
            let mut x = Tensor::zeros(&[indices.len(), w]);
            for (row, &i) in indices.iter().enumerate() {
                x.data_mut()[row * w..(row + 1) * w]
                    .copy_from_slice(&inputs.data()[i * w..(i + 1) * w]);
            }
            x
        }
        [_, window, width] => {
            let (window, width) = (*window, *width);
            let mut x = Tensor::zeros(&[indices.len(), width, window]);
            let xs = inputs.data();
            let xd = x.data_mut();
            for (row, &i) in indices.iter().enumerate() {
                let src = &xs[i * window * width..(i + 1) * window * width];
                let dst = &mut xd[row * width * window..(row + 1) * width * window];
                // (window, width) -> (width, window)
                for t in 0..window {
                    for c in 0..width {
                        dst[c * window + t] = src[t * width + c];
                    }
                }
            }
            x
        }
        other => unreachable!("dataset inputs must be rank 2 or 3, got {other:?}"),
    };
    (x, y)
}

fn as_nk1(t: Tensor) -> Result<Tensor> {
    match t.dims().len() {
        2 => {
            let dims = [t.dims()[0], t.dims()[1], 1];
            t.reshape(&dims)
        }
        _ => Ok(t),
    }
}

/// Eval-mode dataset loss, accumulated per sample so the result is invariant
/// to the evaluation batch size.
pub fn eval_loss(
    model: &mut Model,
    inputs: &Tensor,
    targets: &Tensor,
    batch_size: usize,
) -> Result<f64> {
    let n = targets.dims()[0];
    let k = targets.dims()[1];
    let mut total = 0.0;
    let mut start = 0;
    while start < n {
        let end = (start + batch_size).min(n);
        let indices: Vec<usize> = (start..end).collect();
        let (x, y) = assemble_batch(inputs, targets, &indices);
        let pred = as_nk1(model.forward(&x, Mode::Eval)?)?;
        total += mpjpe_sum(&pred, &y)?;
        start = end;
    }
    Ok(total / (n as f64 * k as f64))
}

// ── training ────────────────────────────────────────────────────────────────

/// Per-epoch loss curves of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainHistory {
    pub train_loss: Vec<f64>,
    pub test_loss: Vec<f64>,
    pub final_train: f64,
    pub final_test: f64,
    pub seed: u64,
    pub wall_seconds: f64,
}

/// Train one model on one split: per epoch, set the learning-rate and BN
/// momentum schedules, sweep reshuffled minibatches (forward, MPJPE,
/// backward, Adam), then record eval-mode losses on the full train and test
/// sets.
pub fn train(
    model: &mut Model,
    split: &DatasetSplit,
    config: &RunConfig,
    run_seed: u64,
) -> Result<TrainHistory> {
    let started = std::time::Instant::now();
    let n_train = split.train_targets.dims()[0];
    if n_train < 2 {
        return Err(Error::validation(
            "training split has fewer than 2 samples".to_string(),
        ));
    }
    let batch_size = match split.train_inputs.dims().len() {
        3 => config.batch_size_temporal,
        _ => config.batch_size_linear,
    };
    let mut train_loss = Vec::with_capacity(config.epochs);
    let mut test_loss = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let lr = lr_schedule(epoch, config);
        model.set_bn_momentum(bn_momentum_schedule(epoch, config));
        let mut order: Vec<usize> = (0..n_train).collect();
        order.shuffle(&mut rng_from_seed(derive_seed(run_seed, 50_000 + epoch as u64)));
        let mut batches: Vec<&[usize]> = order.chunks(batch_size).collect();
        // batchnorm needs >= 2 rows: fold a trailing singleton into its neighbour
        if batches.len() >= 2 && batches.last().is_some_and(|b| b.len() == 1) {
            batches.pop();
            batches.pop();
            let tail_start = batches.len() * batch_size;
            batches.push(&order[tail_start..]);
        }
        for (batch_index, indices) in batches.iter().enumerate() {
            let (x, y) = assemble_batch(&split.train_inputs, &split.train_targets, indices);
            let pred = as_nk1(model.forward(&x, Mode::Train)?)?;
            let loss = mpjpe(&pred, &y)?;
            if !loss.is_finite() {
                return Err(Error::NonFinite(format!(
                    "training loss at epoch {epoch}, batch {batch_index}"
                )));
            }
            let grad = mpjpe_backward(&pred, &y)?;
            let out_dims = if split.train_inputs.dims().len() == 3 {
                vec![indices.len(), y.dims()[1], 1]
            } else {
                vec![indices.len(), y.dims()[1]]
            };
            model.backward(&grad.reshape(&out_dims)?)?;
            let mut params = model.params_mut();
            adam_step(&mut params, lr)?;
        }
        train_loss.push(eval_loss(
            model,
            &split.train_inputs,
            &split.train_targets,
            batch_size,
        )?);
        test_loss.push(eval_loss(
            model,
            &split.test_inputs,
            &split.test_targets,
            batch_size,
        )?);
    }
    Ok(TrainHistory {
        final_train: *train_loss.last().unwrap(),
        final_test: *test_loss.last().unwrap(),
        train_loss,
        test_loss,
        seed: run_seed,
        wall_seconds: started.elapsed().as_secs_f64(),
    })
}

/// Build the model for a kind and train it on freshly split data.
pub fn run_once(
    kind: &ModelKind,
    data: &ScenarioData,
    config: &RunConfig,
    run_seed: u64,
) -> Result<(Model, TrainHistory, Standardizer)> {
    let (split, standardizer) = prepare_split(data, kind, config.test_fraction, derive_seed(run_seed, 1))?;
    let keypoints = data.keypoints.len();
    let mut model = match kind {
        ModelKind::Linear => build_linear(
            &LinearModelSpec::new(keypoints, config.channels, config.dropout),
            derive_seed(run_seed, 2),
        )?,
        ModelKind::Temporal { window } => build_temporal(
            &TemporalModelSpec::new(
                keypoints,
                config.channels,
                window_to_widths(*window)?,
                config.dropout,
            ),
            derive_seed(run_seed, 2),
        )?,
    };
    let history = train(&mut model, &split, config, derive_seed(run_seed, 3))?;
    Ok((model, history, standardizer))
}

// ── repeated runs and aggregation ───────────────────────────────────────────

/// Mean and sample standard deviation (n-1); std is 0 for a single value.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let ss = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>();
    (mean, (ss / (n as f64 - 1.0)).sqrt())
}

/// Aggregated result of `runs` repetitions.
#[derive(Debug, Clone)]
pub struct RunReport {
    pub label: String,
    pub histories: Vec<TrainHistory>,
    pub train_mean: f64,
    pub train_std: f64,
    pub test_mean: f64,
    pub test_std: f64,
}

impl RunReport {
    pub fn from_histories(label: String, histories: Vec<TrainHistory>) -> RunReport {
        let finals_train: Vec<f64> = histories.iter().map(|h| h.final_train).collect();
        let finals_test: Vec<f64> = histories.iter().map(|h| h.final_test).collect();
        let (train_mean, train_std) = mean_std(&finals_train);
        let (test_mean, test_std) = mean_std(&finals_test);
        RunReport {
            label,
            histories,
            train_mean,
            train_std,
            test_mean,
            test_std,
        }
    }
}

/// Deterministic order-preserving parallel map over 0..n with a worker cap.
fn parallel_map<T: Send>(
    jobs: usize,
    n: usize,
    f: impl Fn(usize) -> Result<T> + Sync,
) -> Result<Vec<T>> {
    let jobs = jobs.max(1).min(n.max(1));
    if jobs == 1 {
        return (0..n).map(&f).collect();
    }
    let next = AtomicUsize::new(0);
    let results: Vec<Mutex<Option<Result<T>>>> = (0..n).map(|_| Mutex::new(None)).collect();
    std::thread::scope(|scope| {
        for _ in 0..jobs {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= n {
                    break;
                }
                let out = f(i);
                *results[i].lock().unwrap() = Some(out);
            });
        }
    });
    results
        .into_iter()
        .map(|cell| cell.into_inner().unwrap().expect("worker filled every slot"))
        .collect()
}

/// Repeat `config.runs` training runs, each with a derived seed for both the
/// split and the weight init, and aggregate final losses into mean +/- std.
pub fn repeat_runs(
    label: &str,
    kind: &ModelKind,
    data: &ScenarioData,
    config: &RunConfig,
    jobs: usize,
) -> Result<RunReport> {
    let histories = parallel_map(jobs, config.runs, |r| {
        let run_seed = derive_seed(config.seed, 40_000 + r as u64);
        run_once(kind, data, config, run_seed).map(|(_, h, _)| h)
    })?;
    Ok(RunReport::from_histories(label.to_string(), histories))
}

/// One report per window, ascending; every window is validated before any
/// training starts.
pub fn window_sweep(
    windows: &[usize],
    data: &ScenarioData,
    config: &RunConfig,
    jobs: usize,
) -> Result<Vec<(usize, RunReport)>> {
    let mut windows = windows.to_vec();
    windows.sort_unstable();
    windows.dedup();
    for w in &windows {
        window_to_widths(*w)?;
    }
    let mut out = Vec::with_capacity(windows.len());
    for window in windows {
        let kind = ModelKind::Temporal { window };
        let label = format!("{}_{}", kind.label(), data.scenario.label());
        out.push((window, repeat_runs(&label, &kind, data, config, jobs)?));
    }
    Ok(out)
}

/// Default sweep grid: the cited 15/135/243 plus {27, 45, 81} in between
/// (all products of 3s and 5s).
pub fn default_sweep_windows() -> Vec<usize> {
    vec![15, 27, 45, 81, 135, 243]
}

/// Table rows: the four standard prediction scenarios.
pub fn default_scenarios() -> Vec<Scenario> {
    vec![
        Scenario::new([Axis::X, Axis::Y], Axis::Z, None).unwrap(),
        Scenario::new([Axis::X, Axis::Z], Axis::Y, None).unwrap(),
        Scenario::new(
            [Axis::X, Axis::Z],
            Axis::Y,
            Some(Rotation { axis: Axis::X, degrees: 45.0 }),
        )
        .unwrap(),
        Scenario::new([Axis::Z, Axis::Y], Axis::X, None).unwrap(),
    ]
}

/// Scenario-by-model grid of run reports.
#[derive(Debug, Clone)]
pub struct TableReport {
    pub window: usize,
    pub rows: Vec<(Scenario, RunReport, RunReport)>,
}

fn scenario_row_name(s: &Scenario) -> String {
    let base = format!(
        "({},{}) -> {}",
        s.input_axes[0].name(),
        s.input_axes[1].name(),
        s.output_axis.name()
    );
    match &s.pre_rotation {
        None => base,
        Some(r) => format!("{base}, {} deg {}-rotation", r.degrees, r.axis.name()),
    }
}

fn format_cell(report: &RunReport) -> String {
    format!(
        "Train: {:.2} ± {:.3} / Test: {:.2} ± {:.3}",
        report.train_mean, report.train_std, report.test_mean, report.test_std
    )
}

impl TableReport {
    /// All run reports in row order (linear then temporal per scenario).
    pub fn all_reports(&self) -> Vec<&RunReport> {
        self.rows
            .iter()
            .flat_map(|(_, lin, tmp)| [lin, tmp])
            .collect()
    }

    pub fn render(&self) -> String {
        let mut rows: Vec<[String; 3]> = vec![[
            "Scenario".to_string(),
            "Linear".to_string(),
            format!("Temporal Convolutions (w={})", self.window),
        ]];
        for (scenario, lin, tmp) in &self.rows {
            rows.push([scenario_row_name(scenario), format_cell(lin), format_cell(tmp)]);
        }
        let width = |col: usize| {
            rows.iter()
                .map(|r| r[col].chars().count())
                .max()
                .unwrap_or(0)
        };
        let widths = [width(0), width(1), width(2)];
        let mut out = String::new();
        for (i, row) in rows.iter().enumerate() {
            let line: Vec<String> = row
                .iter()
                .enumerate()
                .map(|(c, cell)| format!("{:<w$}", cell, w = widths[c]))
                .collect();
            out.push_str(line.join(" | ").trim_end());
            out.push('\n');
            if i == 0 {
                let sep: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
                out.push_str(&sep.join("-+-"));
                out.push('\n');
            }
        }
        out
    }
}

/// Train both architectures on every scenario and collect the grid.
pub fn scenario_table(
    seq: &Sequence3D,
    scenarios: &[Scenario],
    window: usize,
    config: &RunConfig,
    align: bool,
    jobs: usize,
) -> Result<TableReport> {
    window_to_widths(window)?;
    let mut rows = Vec::with_capacity(scenarios.len());
    for scenario in scenarios {
        let data = build_scenario_data(seq, scenario, align)?;
        let lin = repeat_runs(
            &format!("linear_{}", scenario.label()),
            &ModelKind::Linear,
            &data,
            config,
            jobs,
        )?;
        let tmp = repeat_runs(
            &format!("temporal_w{window}_{}", scenario.label()),
            &ModelKind::Temporal { window },
            &data,
            config,
            jobs,
        )?;
        rows.push((scenario.clone(), lin, tmp));
    }
    Ok(TableReport { window, rows })
}

// ── report emission ─────────────────────────────────────────────────────────

pub fn write_report_csv(path: impl AsRef<Path>, reports: &[&RunReport]) -> Result<()> {
    let mut out = String::from("label,run_index,final_train,final_test\n");
    for report in reports {
        for (r, h) in report.histories.iter().enumerate() {
            out.push_str(&format!(
                "{},{},{},{}\n",
                report.label, r, h.final_train, h.final_test
            ));
        }
    }
    write_atomic(path, out.as_bytes())
}

pub fn write_summary_csv(path: impl AsRef<Path>, reports: &[&RunReport]) -> Result<()> {
    let mut out = String::from("label,train_mean,train_std,test_mean,test_std\n");
    for report in reports {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            report.label, report.train_mean, report.train_std, report.test_mean, report.test_std
        ));
    }
    write_atomic(path, out.as_bytes())
}

pub fn write_history_csv(path: impl AsRef<Path>, history: &TrainHistory) -> Result<()> {
    let mut out = String::from("epoch,train_loss,test_loss\n");
    for (e, (tr, te)) in history.train_loss.iter().zip(history.test_loss.iter()).enumerate() {
        out.push_str(&format!("{e},{tr},{te}\n"));
    }
    write_atomic(path, out.as_bytes())
}

/// Fig.-6-shaped emission: one row per window, ascending.
pub fn write_sweep_csv(path: impl AsRef<Path>, sweep: &[(usize, RunReport)]) -> Result<()> {
    let mut out = String::from("window,test_mean,test_std\n");
    for (window, report) in sweep {
        out.push_str(&format!("{window},{},{}\n", report.test_mean, report.test_std));
    }
    write_atomic(path, out.as_bytes())
}

fn write_atomic(path: impl AsRef<Path>, bytes: &[u8]) -> Result<()> {
    let mut file = std::fs::File::create(path)?;
    file.write_all(bytes)?;
    Ok(())
}

/// Evaluate a trained model on a full sequence (dilated execution for the
/// temporal model, per-frame for the linear one); returns MPJPE in
/// standardized units.
pub fn eval_on_sequence(
    model: &mut Model,
    scenario: &Scenario,
    standardizer: &Standardizer,
    seq: &Sequence3D,
) -> Result<f64> {
    let data = build_scenario_data(seq, scenario, false)?;
    let inputs = standardizer.apply_inputs(&data.inputs);
    let targets = standardizer.apply_targets(&data.targets);
    let n = inputs.dims()[0];
    let width = inputs.dims()[1];
    let k = targets.dims()[1];
    match model {
        Model::Linear(_) => {
            let reshaped = DatasetSplit {
                train_inputs: Tensor::zeros(&[0, 0]),
                train_targets: Tensor::zeros(&[0, 0]),
                test_inputs: inputs,
                test_targets: targets,
                seed: 0,
            };
            eval_loss(model, &reshaped.test_inputs, &reshaped.test_targets, 1024)
        }
        Model::Temporal(temporal) => {
            let r = temporal.receptive_field();
            if n < r {
                return Err(Error::shape(format!(
                    "sequence of {n} frames is shorter than the receptive field {r}"
                )));
            }
            // (n, 2K) -> (1, 2K, n)
            let mut x = Tensor::zeros(&[1, width, n]);
            for t in 0..n {
                for c in 0..width {
                    x.data_mut()[c * n + t] = inputs.data()[t * width + c];
                }
            }
            let pred = temporal.forward_dilated(&x)?; // (1, K, n - r + 1)
            let m = n - r + 1;
            let offset = (r - 1) / 2;
            let mut pred_nk1 = Tensor::zeros(&[m, k, 1]);
            for t in 0..m {
                for c in 0..k {
                    pred_nk1.data_mut()[t * k + c] = pred.data()[c * m + t];
                }
            }
            let mut tgt = Tensor::zeros(&[m, k, 1]);
            for t in 0..m {
                let row = t + offset;
                tgt.data_mut()[t * k..(t + 1) * k]
                    .copy_from_slice(&targets.data()[row * k..(row + 1) * k]);
            }
            mpjpe(&pred_nk1, &tgt)
        }
    }
}

/// Finite-difference sweep over both architectures at small widths; returns
/// the worst relative error and where it occurred.
pub fn gradcheck_suite(n_seeds: usize) -> Result<(f64, String)> {
    let mut worst = 0.0f64;
    let mut worst_at = String::new();
    for seed in 0..n_seeds as u64 {
        let mut rng = rng_from_seed(derive_seed(seed, 900));
        let mut sample = |n: usize| -> Vec<f64> {
            use rand::Rng;
            (0..n).map(|_| rng.gen_range(-1.5..1.5)).collect()
        };
        let k = 2 + (seed as usize % 2);
        let channels = 8 + 8 * (seed as usize % 3);

        let mut linear = build_linear(&LinearModelSpec::new(k, channels, 0.25), seed)?;
        let x = Tensor::from_vec(&[3, 2 * k], sample(6 * k))?;
        let y = Tensor::from_vec(&[3, k, 1], sample(3 * k))?;
        let report = grad_check(&mut linear, &x, &y, 1e-5)?;
        if report.max_rel_err > worst {
            worst = report.max_rel_err;
            worst_at = format!("linear seed {seed}: {}", report.worst_param);
        }

        let widths = if seed % 2 == 0 { vec![3, 3] } else { vec![3, 5] };
        let spec = TemporalModelSpec::new(k, channels.min(16), widths, 0.25);
        let r = spec.receptive_field();
        let mut temporal = build_temporal(&spec, seed)?;
        let x = Tensor::from_vec(&[2, 2 * k, r], sample(4 * k * r))?;
        let y = Tensor::from_vec(&[2, k, 1], sample(2 * k))?;
        let report = grad_check(&mut temporal, &x, &y, 1e-5)?;
        if report.max_rel_err > worst {
            worst = report.max_rel_err;
            worst_at = format!("temporal seed {seed}: {}", report.worst_param);
        }
    }
    Ok((worst, worst_at))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick_config(epochs: usize, runs: usize, channels: usize) -> RunConfig {
        RunConfig {
            epochs,
            runs,
            channels,
            batch_size_linear: 32,
            batch_size_temporal: 8,
            ..RunConfig::default()
        }
    }

    #[test]
    fn lr_schedule_matches_closed_form() {
        let config = RunConfig::default();
        assert_eq!(lr_schedule(0, &config), 0.001);
        assert!((lr_schedule(1, &config) - 0.00095).abs() < 1e-18);
        let e149 = lr_schedule(149, &config);
        assert!((e149 - 0.001 * 0.95f64.powi(149)).abs() < 1e-20);
        assert!((e149 - 4.80e-7).abs() < 1e-8, "{e149}");
    }

    #[test]
    fn lr_schedule_strictly_decreasing() {
        let config = RunConfig::default();
        for e in 0..149 {
            assert!(lr_schedule(e + 1, &config) < lr_schedule(e, &config));
        }
    }

    #[test]
    fn bn_momentum_endpoints_and_midpoint() {
        let config = RunConfig::default();
        assert_eq!(bn_momentum_schedule(0, &config), 0.1);
        let last = bn_momentum_schedule(149, &config);
        assert!((last - 0.001).abs() < 1e-15, "{last}");
        let mid = bn_momentum_schedule(74, &config);
        assert!((mid - 1.016e-2).abs() < 1e-5, "{mid}");
        for e in 0..149 {
            assert!(bn_momentum_schedule(e + 1, &config) < bn_momentum_schedule(e, &config));
        }
    }

    #[test]
    fn bn_momentum_single_epoch_guard() {
        let config = RunConfig {
            epochs: 1,
            ..RunConfig::default()
        };
        assert_eq!(bn_momentum_schedule(0, &config), 0.1);
    }

    fn linear_task_data(n: usize, k: usize, seed: u64) -> ScenarioData {
        // z = 0.5 x + 0.25 y per keypoint
        use rand::Rng;
        let mut rng = rng_from_seed(seed);
        let mut inputs = Vec::with_capacity(n * 2 * k);
        let mut targets = Vec::with_capacity(n * k);
        for _ in 0..n {
            for _ in 0..k {
                let x = rng.gen_range(-10.0..10.0);
                let y = rng.gen_range(-10.0..10.0);
                inputs.push(x);
                inputs.push(y);
                targets.push(0.5 * x + 0.25 * y);
            }
        }
        ScenarioData {
            inputs: Tensor::from_vec(&[n, 2 * k], inputs).unwrap(),
            targets: Tensor::from_vec(&[n, k], targets).unwrap(),
            keypoints: (0..k).map(|i| format!("kp{i}")).collect(),
            scenario: Scenario::parse("xy-z").unwrap(),
        }
    }

    #[test]
    fn linear_model_learns_closed_form_target() {
        let data = linear_task_data(1500, 4, 99);
        let config = quick_config(30, 1, 128);
        let (_, history, _) = run_once(&ModelKind::Linear, &data, &config, 7).unwrap();
        assert!(
            history.final_test < 0.05,
            "final test loss {}",
            history.final_test
        );
    }

    #[test]
    fn single_epoch_runs_one_optimization_and_eval() {
        let data = linear_task_data(64, 2, 1);
        let config = quick_config(1, 1, 16);
        let (_, history, _) = run_once(&ModelKind::Linear, &data, &config, 3).unwrap();
        assert_eq!(history.train_loss.len(), 1);
        assert_eq!(history.test_loss.len(), 1);
        assert_eq!(history.final_test, history.test_loss[0]);
    }

    #[test]
    fn identical_seed_gives_bit_identical_history() {
        let data = linear_task_data(80, 2, 5);
        let config = quick_config(3, 1, 16);
        let (_, a, _) = run_once(&ModelKind::Linear, &data, &config, 11).unwrap();
        let (_, b, _) = run_once(&ModelKind::Linear, &data, &config, 11).unwrap();
        assert_eq!(a.train_loss, b.train_loss);
        assert_eq!(a.test_loss, b.test_loss);
    }

    #[test]
    fn temporal_training_runs_on_windows() {
        let data = linear_task_data(200, 2, 8);
        let config = quick_config(2, 1, 8);
        let (_, history, _) =
            run_once(&ModelKind::Temporal { window: 9 }, &data, &config, 21).unwrap();
        assert_eq!(history.train_loss.len(), 2);
        assert!(history.final_test.is_finite());
    }

    #[test]
    fn eval_loss_invariant_to_batch_size() {
        let data = linear_task_data(100, 2, 13);
        let config = quick_config(2, 1, 16);
        let (mut model, _, _) = run_once(&ModelKind::Linear, &data, &config, 2).unwrap();
        let (split, _) = prepare_split(&data, &ModelKind::Linear, 0.2, 77).unwrap();
        let full = eval_loss(&mut model, &split.test_inputs, &split.test_targets, 1000).unwrap();
        for batch in [1, 3, 7, 19] {
            let part = eval_loss(&mut model, &split.test_inputs, &split.test_targets, batch).unwrap();
            assert_eq!(full, part, "batch {batch}");
        }
    }

    #[test]
    fn repeat_runs_aggregates_with_sample_std() {
        let data = linear_task_data(80, 2, 3);
        let config = quick_config(2, 3, 8);
        let report = repeat_runs("demo", &ModelKind::Linear, &data, &config, 1).unwrap();
        assert_eq!(report.histories.len(), 3);
        let finals: Vec<f64> = report.histories.iter().map(|h| h.final_test).collect();
        let (mean, std) = mean_std(&finals);
        assert_eq!(report.test_mean, mean);
        assert_eq!(report.test_std, std);
        // independent oracle
        let om = finals.iter().sum::<f64>() / 3.0;
        let os = (finals.iter().map(|v| (v - om) * (v - om)).sum::<f64>() / 2.0).sqrt();
        assert!((mean - om).abs() < 1e-15 && (std - os).abs() < 1e-15);
    }

    #[test]
    fn runs_of_one_have_zero_std() {
        let data = linear_task_data(60, 2, 3);
        let config = quick_config(1, 1, 8);
        let report = repeat_runs("one", &ModelKind::Linear, &data, &config, 1).unwrap();
        assert_eq!(report.test_std, 0.0);
        assert_eq!(report.test_mean, report.histories[0].final_test);
    }

    #[test]
    fn parallel_runs_match_sequential() {
        let data = linear_task_data(80, 2, 3);
        let config = quick_config(2, 4, 8);
        let seq = repeat_runs("p", &ModelKind::Linear, &data, &config, 1).unwrap();
        let par = repeat_runs("p", &ModelKind::Linear, &data, &config, 4).unwrap();
        for (a, b) in seq.histories.iter().zip(par.histories.iter()) {
            assert_eq!(a.train_loss, b.train_loss);
        }
    }

    #[test]
    fn sweep_validates_windows_before_training() {
        let data = linear_task_data(60, 2, 3);
        let config = quick_config(1, 1, 8);
        let err = window_sweep(&[9, 10], &data, &config, 1).unwrap_err();
        assert!(matches!(err, Error::UnsupportedWindow { .. }), "{err}");
    }

    #[test]
    fn sweep_emits_sorted_rows() {
        let data = linear_task_data(220, 2, 3);
        let config = quick_config(1, 1, 8);
        let sweep = window_sweep(&[9, 3], &data, &config, 1).unwrap();
        assert_eq!(sweep.len(), 2);
        assert_eq!(sweep[0].0, 3);
        assert_eq!(sweep[1].0, 9);
        let dir = std::env::temp_dir().join("poselift_sweep_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("sweep.csv");
        write_sweep_csv(&path, &sweep).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 3);
        assert!(text.starts_with("window,test_mean,test_std\n3,"));
        std::fs::remove_file(&path).ok();
    }

    #[test]
    fn table_cell_format_matches_rounding() {
        let report = RunReport {
            label: "x".into(),
            histories: vec![],
            train_mean: 4.17,
            train_std: 1.519,
            test_mean: 0.4567,
            test_std: 0.0061,
        };
        assert_eq!(
            format_cell(&report),
            "Train: 4.17 ± 1.519 / Test: 0.46 ± 0.006"
        );
    }

    #[test]
    fn default_scenario_rows_match_expectations() {
        let scenarios = default_scenarios();
        assert_eq!(scenarios.len(), 4);
        assert_eq!(scenario_row_name(&scenarios[0]), "(x,y) -> z");
        assert_eq!(scenario_row_name(&scenarios[1]), "(x,z) -> y");
        assert_eq!(
            scenario_row_name(&scenarios[2]),
            "(x,z) -> y, 45 deg x-rotation"
        );
        assert_eq!(scenario_row_name(&scenarios[3]), "(z,y) -> x");
    }

    #[test]
    fn gradcheck_suite_is_tight() {
        let (worst, at) = gradcheck_suite(3).unwrap();
        assert!(worst < 1e-5, "worst {worst} at {at}");
    }
}
