//! The signal-fitting benchmark over the six model families.

use std::path::Path;
use std::time::Instant;

use grkan_core::denoise::median;
use grkan_core::methods::{dataset_tensors, train_method, MethodName, MethodSpec};
use grkan_core::module::{predict, Module};
use grkan_core::signal::{default_dataset, SignalConfig, SignalDataset};
use grkan_core::train::{RunTrace, TrainConfig};
use grkan_core::ParamEntry;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::ConfigEcho;
use crate::io::{csv, opt_field, write_atomic, write_json};
use crate::report::{all_passed, Clock, PropertyCheck, RunTiming, Timing, ARTIFACT_VERSION, SCHEMA_VERSION};
use crate::Result;

/// Largest median GR-KAN MSE accepted.
pub const GRKAN_MSE_CEILING: f64 = 0.12;
/// Required gap between the ReLU and GR-KAN medians.
pub const RELU_MARGIN: f64 = 0.02;
/// Slack allowed for GR-KAN over GELU.
pub const GELU_SLACK: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodRun {
    pub method: MethodName,
    pub seed: u64,
    /// `None` when the run diverged.
    pub final_mse: Option<f64>,
    pub params: usize,
    pub param_table: Vec<ParamEntry>,
    pub trace: RunTrace,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: MethodName,
    pub params: usize,
    pub median_mse: Option<f64>,
    pub diverged_runs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table1Report {
    pub schema_version: u32,
    pub artifact_version: String,
    pub config: ConfigEcho,
    pub seeds: Vec<u64>,
    pub runs: Vec<MethodRun>,
    pub summary: Vec<MethodSummary>,
    pub checks: Vec<PropertyCheck>,
    pub timing: Timing,
}

impl Table1Report {
    pub fn passed(&self) -> bool {
        all_passed(&self.checks)
    }

    pub fn median(&self, method: MethodName) -> Option<f64> {
        self.summary.iter().find(|s| s.method == method).and_then(|s| s.median_mse)
    }
}

/// A finished run together with its trained model.
pub struct TrainedRun {
    pub run: MethodRun,
    pub model: grkan_core::layers::Sequential,
    pub seconds: f64,
}

/// Trains every family for every seed on `data`. Runs may execute on
/// several threads; results come back in (seed, family) order.
pub fn train_all(seeds: &[u64], train: &TrainConfig, data: &SignalDataset) -> Result<Vec<TrainedRun>> {
    let jobs: Vec<(u64, MethodSpec)> = seeds
        .iter()
        .flat_map(|&seed| MethodSpec::all().into_iter().map(move |s| (seed, s)))
        .collect();
    jobs.par_iter()
        .map(|(seed, spec)| {
            let t = Instant::now();
            let cfg = TrainConfig {
                seed: *seed,
                ..train.clone()
            };
            let (model, trace) = train_method(spec, data, &cfg)?;
            let run = MethodRun {
                method: spec.name,
                seed: *seed,
                final_mse: trace.final_loss,
                params: model.param_count(),
                param_table: model.param_table(),
                trace,
            };
            Ok(TrainedRun {
                run,
                model,
                seconds: t.elapsed().as_secs_f64(),
            })
        })
        .collect()
}

pub fn summarize(runs: &[MethodRun]) -> Vec<MethodSummary> {
    MethodName::ALL
        .into_iter()
        .filter_map(|m| {
            let mine: Vec<&MethodRun> = runs.iter().filter(|r| r.method == m).collect();
            let first = mine.first()?;
            Some(MethodSummary {
                method: m,
                params: first.params,
                median_mse: median(&mine.iter().map(|r| r.final_mse).collect::<Vec<_>>()),
                diverged_runs: mine.iter().filter(|r| r.trace.diverged()).count(),
            })
        })
        .collect()
}

fn fmt(v: Option<f64>) -> String {
    v.map(|v| format!("{v:.5}")).unwrap_or_else(|| "n/a".into())
}

/// Ordering and magnitude properties of the family medians.
pub fn ordering_checks(summary: &[MethodSummary]) -> Vec<PropertyCheck> {
    let get = |m| summary.iter().find(|s| s.method == m).and_then(|s| s.median_mse);
    let (relu, gelu, grkan, kan) = (
        get(MethodName::Relu),
        get(MethodName::Gelu),
        get(MethodName::Grkan),
        get(MethodName::Kan),
    );
    let cmp = |name: &str, a: Option<f64>, b: Option<f64>, op: &str, ok: fn(f64, f64) -> bool| {
        let passed = matches!((a, b), (Some(a), Some(b)) if ok(a, b));
        PropertyCheck::new(name, passed, format!("{} {op} {}", fmt(a), fmt(b)))
    };
    vec![
        cmp("grkan_below_relu", grkan, relu, "<", |a, b| a < b),
        cmp("kan_below_relu", kan, relu, "<", |a, b| a < b),
        cmp("grkan_within_gelu", grkan, gelu.map(|g| g + GELU_SLACK), "<=", |a, b| a <= b),
        cmp("grkan_ceiling", grkan, Some(GRKAN_MSE_CEILING), "<=", |a, b| a <= b),
        cmp("relu_margin", relu, grkan.map(|g| g + RELU_MARGIN), ">=", |a, b| a >= b),
    ]
}

/// Exact parameter counts of every family.
pub fn param_checks(summary: &[MethodSummary]) -> Vec<PropertyCheck> {
    summary
        .iter()
        .map(|s| {
            let spec = MethodSpec::new(s.method);
            let want = match s.method {
                MethodName::Relu | MethodName::Gelu => Some(193),
                MethodName::Pau => Some(213),
                MethodName::Apl => Some(257),
                MethodName::Grkan => Some(97 + 2 * spec.groups * 10),
                MethodName::Kan => Some(80),
            };
            PropertyCheck::new(
                format!("params_{}", s.method),
                want == Some(s.params),
                format!("{} (expected {})", s.params, want.unwrap_or(0)),
            )
        })
        .collect()
}

/// Trains all families on the default signal and assembles the report.
pub fn compute_table1(seeds: &[u64], train: &TrainConfig) -> Result<(Table1Report, Vec<TrainedRun>)> {
    if seeds.is_empty() {
        return Err(crate::BenchError::Invalid("need at least one seed".into()));
    }
    let clock = Clock::start();
    let data = default_dataset(&SignalConfig::default())?;
    let trained = train_all(seeds, train, &data)?;
    let runs: Vec<MethodRun> = trained.iter().map(|t| t.run.clone()).collect();
    let summary = summarize(&runs);
    let mut checks = param_checks(&summary);
    checks.extend(ordering_checks(&summary));
    let timings = trained
        .iter()
        .map(|t| RunTiming {
            label: format!("{}/{}", t.run.method, t.run.seed),
            seconds: t.seconds,
        })
        .collect();
    let report = Table1Report {
        schema_version: SCHEMA_VERSION,
        artifact_version: ARTIFACT_VERSION.into(),
        config: ConfigEcho::new(train),
        seeds: seeds.to_vec(),
        runs,
        summary,
        checks,
        timing: clock.finish(timings),
    };
    Ok((report, trained))
}

/// CSV of `(time_s, target, prediction)` over the dataset's sample grid.
pub fn fit_curve_csv<M: Module + ?Sized>(model: &M, data: &SignalDataset) -> Result<String> {
    let (x, _) = dataset_tensors(data)?;
    let pred = predict(model, x)?;
    let rows = data
        .raw_time
        .iter()
        .zip(&data.targets)
        .zip(pred.data())
        .map(|((t, y), p)| [*t, *y, *p]);
    Ok(csv(&["time_s", "target", "prediction"], rows))
}

pub fn export_fit_curve<M: Module + ?Sized>(model: &M, data: &SignalDataset, out: &Path) -> Result<()> {
    write_atomic(out, fit_curve_csv(model, data)?.as_bytes())
}

pub fn summary_csv(report: &Table1Report) -> String {
    let rows = report
        .runs
        .iter()
        .map(|r| [r.method.to_string(), r.seed.to_string(), opt_field(r.final_mse), r.params.to_string()]);
    csv(&["method", "seed", "mse", "params"], rows)
}

/// Runs the benchmark and writes `report.json`, `summary.csv` and one fit
/// curve per run under `out_dir`.
pub fn run_table1(seeds: &[u64], train: &TrainConfig, out_dir: &Path) -> Result<Table1Report> {
    let (report, trained) = compute_table1(seeds, train)?;
    let data = default_dataset(&SignalConfig::default())?;
    for t in &trained {
        let name = format!("fit_{}_seed{}.csv", t.run.method, t.run.seed);
        export_fit_curve(&t.model, &data, &out_dir.join("curves").join(name))?;
    }
    write_atomic(&out_dir.join("summary.csv"), summary_csv(&report).as_bytes())?;
    write_json(&out_dir.join("report.json"), &report)?;
    Ok(report)
}
