//! Comparison of ReLU and rational-activated denoisers.

use std::path::Path;
use std::time::Instant;

use grkan_core::denoise::{
    build_denoiser, make_noisy_pairs, run_denoise_variant, summarize, ActivationSite, DenoiseDataConfig, DenoiseRun,
    DenoiseVariantReport, DenoiserSpec,
};
use grkan_core::train::TrainConfig;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::ConfigEcho;
use crate::io::{csv, opt_field, write_atomic, write_json};
use crate::report::{all_passed, Clock, PropertyCheck, RunTiming, Timing, ARTIFACT_VERSION, SCHEMA_VERSION};
use crate::{BenchError, Result};

/// Training steps per denoiser run unless overridden.
pub const DENOISE_STEPS: usize = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenoiseOptions {
    pub depths: Vec<usize>,
    pub seeds: Vec<u64>,
    pub data: DenoiseDataConfig,
    pub train: TrainConfig,
}

impl Default for DenoiseOptions {
    fn default() -> Self {
        Self {
            depths: vec![2],
            seeds: vec![0, 1, 2],
            data: DenoiseDataConfig::default(),
            train: TrainConfig {
                steps: DENOISE_STEPS,
                ..TrainConfig::default()
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DepthReport {
    pub depth: usize,
    pub variants: Vec<DenoiseVariantReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenoiseReport {
    pub schema_version: u32,
    pub artifact_version: String,
    pub config: ConfigEcho,
    pub options: DenoiseOptions,
    /// Mean held-out L1 of the unprocessed noisy inputs.
    pub noisy_baseline_l1: f64,
    pub depths: Vec<DepthReport>,
    pub checks: Vec<PropertyCheck>,
    pub timing: Timing,
}

impl DenoiseReport {
    pub fn passed(&self) -> bool {
        all_passed(&self.checks)
    }
}

/// ReLU followed by the three adapted placements.
pub fn variants(depth: usize) -> Vec<DenoiserSpec> {
    vec![
        DenoiserSpec::relu(depth),
        DenoiserSpec::grkan(depth, ActivationSite::Enc),
        DenoiserSpec::grkan(depth, ActivationSite::Dec),
        DenoiserSpec::grkan(depth, ActivationSite::Both),
    ]
}

/// Every adapted variant must match or beat ReLU on median held-out L1.
pub fn direction_checks(depth: &DepthReport) -> Vec<PropertyCheck> {
    let relu = &depth.variants[0];
    depth.variants[1..]
        .iter()
        .map(|v| {
            let passed = matches!((v.median_held_out_l1, relu.median_held_out_l1), (Some(a), Some(b)) if a <= b);
            PropertyCheck::new(
                format!("{}_vs_{}", v.label, relu.label),
                passed,
                format!("{} <= {}", opt_field(v.median_held_out_l1), opt_field(relu.median_held_out_l1)),
            )
        })
        .collect()
}

pub fn compute_denoise(opts: &DenoiseOptions) -> Result<DenoiseReport> {
    if opts.seeds.is_empty() || opts.depths.is_empty() {
        return Err(BenchError::Invalid("need at least one seed and one depth".into()));
    }
    let clock = Clock::start();
    let split = make_noisy_pairs(opts.data.pairs, opts.data.snr_db, opts.data.seed)?;
    let baseline = split
        .held_out
        .iter()
        .map(|p| grkan_core::train::l1_loss(&p.noisy, &p.clean))
        .sum::<grkan_core::Result<f64>>()?
        / split.held_out.len().max(1) as f64;
    let specs: Vec<DenoiserSpec> = opts.depths.iter().flat_map(|&d| variants(d)).collect();
    let jobs: Vec<(usize, u64)> = (0..specs.len())
        .flat_map(|i| opts.seeds.iter().map(move |&s| (i, s)))
        .collect();
    let runs: Vec<(DenoiseRun, f64)> = jobs
        .par_iter()
        .map(|&(i, seed)| {
            let t = Instant::now();
            let cfg = TrainConfig {
                seed,
                ..opts.train.clone()
            };
            let run = run_denoise_variant(&specs[i], &split, &cfg)?;
            Ok((run, t.elapsed().as_secs_f64()))
        })
        .collect::<Result<_>>()?;
    let mut timings = Vec::new();
    let mut runs = runs.into_iter();
    let mut per_spec = Vec::new();
    for spec in &specs {
        let mut mine = Vec::new();
        for _ in &opts.seeds {
            let (run, secs) = runs.next().expect("one run per job");
            timings.push(RunTiming {
                label: format!("{}/{}", spec.label(), run.seed),
                seconds: secs,
            });
            mine.push(run);
        }
        per_spec.push(summarize(spec, &build_denoiser(spec, 0)?, mine));
    }
    let mut depths = Vec::new();
    let mut per_spec = per_spec.into_iter();
    for &depth in &opts.depths {
        depths.push(DepthReport {
            depth,
            variants: per_spec.by_ref().take(4).collect(),
        });
    }
    let checks = depths.iter().flat_map(direction_checks).collect();
    Ok(DenoiseReport {
        schema_version: SCHEMA_VERSION,
        artifact_version: ARTIFACT_VERSION.into(),
        config: ConfigEcho::new(&opts.train),
        options: opts.clone(),
        noisy_baseline_l1: baseline,
        depths,
        checks,
        timing: clock.finish(timings),
    })
}

pub fn summary_csv(report: &DenoiseReport) -> String {
    let rows = report.depths.iter().flat_map(|d| {
        d.variants.iter().flat_map(move |v| {
            v.runs.iter().map(move |r| {
                [
                    d.depth.to_string(),
                    v.label.clone(),
                    r.seed.to_string(),
                    opt_field(r.held_out_l1),
                    v.params.to_string(),
                ]
            })
        })
    });
    csv(&["depth", "variant", "seed", "held_out_l1", "params"], rows)
}

/// Runs the comparison and writes `report.json` and `summary.csv` under
/// `out_dir`.
pub fn run_denoise(opts: &DenoiseOptions, out_dir: &Path) -> Result<DenoiseReport> {
    let report = compute_denoise(opts)?;
    write_atomic(&out_dir.join("summary.csv"), summary_csv(&report).as_bytes())?;
    write_json(&out_dir.join("report.json"), &report)?;
    Ok(report)
}
