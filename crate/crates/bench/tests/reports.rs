use grkan_bench::denoise::{compute_denoise, summary_csv as denoise_csv, DenoiseOptions};
use grkan_bench::io::{read_json, to_json, write_atomic};
use grkan_bench::report::{deterministic_json, strip_timing};
use grkan_bench::table1::{compute_table1, export_fit_curve, fit_curve_csv, ordering_checks, run_table1, summarize, MethodSummary, Table1Report};
use grkan_core::denoise::DenoiseDataConfig;
use grkan_core::layers::{Layer, LinearParams, Sequential};
use grkan_core::methods::MethodName;
use grkan_core::signal::{default_dataset, SignalConfig};
use grkan_core::train::TrainConfig;
use grkan_core::Tensor;
use proptest::prelude::*;

fn short(steps: usize) -> TrainConfig {
    TrainConfig {
        steps,
        ..TrainConfig::default()
    }
}

fn zero_model() -> Sequential {
    Sequential::new(vec![Layer::Linear(
        LinearParams::new(Tensor::zeros(&[1, 1]), Tensor::zeros(&[1])).unwrap(),
    )])
}

#[test]
fn fit_curve_of_zero_model() {
    let data = default_dataset(&SignalConfig::default()).unwrap();
    let text = fit_curve_csv(&zero_model(), &data).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("time_s,target,prediction"));
    let rows: Vec<Vec<f64>> = lines.map(|l| l.split(',').map(|f| f.parse().unwrap()).collect()).collect();
    assert_eq!(rows.len(), 500);
    for (i, r) in rows.iter().enumerate() {
        assert_eq!(r[0].to_bits(), data.raw_time[i].to_bits());
        assert_eq!(r[1].to_bits(), data.targets[i].to_bits());
        assert_eq!(r[2], 0.0);
    }
}

#[test]
fn export_creates_directories() {
    let dir = tempfile::tempdir().unwrap();
    let data = default_dataset(&SignalConfig::default()).unwrap();
    let path = dir.path().join("a/b/fit.csv");
    export_fit_curve(&zero_model(), &data, &path).unwrap();
    assert_eq!(std::fs::read_to_string(&path).unwrap().lines().count(), 501);
}

#[test]
fn atomic_write_leaves_no_temporaries() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("x.txt");
    write_atomic(&path, b"one").unwrap();
    write_atomic(&path, b"two").unwrap();
    assert_eq!(std::fs::read(&path).unwrap(), b"two");
    let names: Vec<_> = std::fs::read_dir(dir.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
    assert_eq!(names, vec![std::ffi::OsString::from("x.txt")]);
}

#[test]
fn table1_report_shape_and_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let report = run_table1(&[0, 1, 2], &short(20), dir.path()).unwrap();
    assert_eq!(report.runs.len(), 18);
    assert_eq!(report.summary.len(), 6);
    for r in &report.runs {
        assert_eq!(r.params, r.param_table.iter().map(|e| e.count).sum::<usize>());
        assert!(r.trace.checkpoints.len() >= 20);
    }
    let params: Vec<usize> = report.summary.iter().map(|s| s.params).collect();
    assert_eq!(params, vec![193, 193, 213, 257, 177, 80]);
    assert!(report.checks.iter().filter(|c| c.name.starts_with("params_")).all(|c| c.passed));

    let text = std::fs::read_to_string(dir.path().join("report.json")).unwrap();
    let parsed: Table1Report = serde_json::from_str(&text).unwrap();
    assert_eq!(parsed, report);
    assert_eq!(to_json(&parsed).unwrap(), text);
    assert_eq!(read_json::<Table1Report>(&dir.path().join("report.json")).unwrap(), report);

    let csv = std::fs::read_to_string(dir.path().join("summary.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("method,seed,mse,params"));
    assert_eq!(csv.lines().count(), 19);
    assert_eq!(std::fs::read_dir(dir.path().join("curves")).unwrap().count(), 18);
}

#[test]
fn table1_is_deterministic() {
    let (a, _) = compute_table1(&[3], &short(50)).unwrap();
    let (b, _) = compute_table1(&[3], &short(50)).unwrap();
    assert_eq!(deterministic_json(&a).unwrap(), deterministic_json(&b).unwrap());
    assert!(!deterministic_json(&a).unwrap().contains("\"timing\""));
}

#[test]
fn echo_carries_design_constants() {
    let (report, _) = compute_table1(&[0], &short(1)).unwrap();
    let v = serde_json::to_value(&report.config).unwrap();
    for key in ["rational", "apl_penalty", "apl_hinges", "leaky_slope", "methods", "signal", "denoise", "train"] {
        assert!(v.get(key).is_some(), "{key}");
    }
    assert_eq!(v["rational"]["numerator_degree"], 5);
    assert_eq!(v["rational"]["denominator_degree"], 4);
    assert_eq!(v["denoise"]["groups"], 4);
    assert_eq!(v["signal"]["formant_mod"], 40.0);
    let grkan = v["methods"].as_array().unwrap().iter().find(|m| m["name"] == "grkan").unwrap();
    assert_eq!(grkan["rational_target"], "swish");
    assert_eq!(grkan["groups"], 4);
}

fn summary(relu: f64, gelu: f64, grkan: f64, kan: f64) -> Vec<MethodSummary> {
    [(MethodName::Relu, relu), (MethodName::Gelu, gelu), (MethodName::Grkan, grkan), (MethodName::Kan, kan)]
        .into_iter()
        .map(|(method, m)| MethodSummary {
            method,
            params: 0,
            median_mse: Some(m),
            diverged_runs: 0,
        })
        .collect()
}

#[test]
fn ordering_rules() {
    assert!(ordering_checks(&summary(0.154, 0.117, 0.085, 0.081)).iter().all(|c| c.passed));
    let failed = |s: Vec<MethodSummary>| {
        ordering_checks(&s)
            .into_iter()
            .filter(|c| !c.passed)
            .map(|c| c.name)
            .collect::<Vec<_>>()
    };
    assert_eq!(failed(summary(0.10, 0.117, 0.085, 0.081)), vec!["relu_margin"]);
    assert_eq!(failed(summary(0.30, 0.117, 0.13, 0.081)), vec!["grkan_within_gelu", "grkan_ceiling"]);
    assert_eq!(failed(summary(0.154, 0.117, 0.085, 0.2)), vec!["kan_below_relu"]);
    let mut missing = summary(0.154, 0.117, 0.085, 0.081);
    missing[2].median_mse = None;
    assert_eq!(failed(missing).len(), 4);
}

#[test]
fn medians_skip_nothing_silently() {
    let (report, _) = compute_table1(&[0, 1], &short(5)).unwrap();
    let s = summarize(&report.runs);
    assert_eq!(s, report.summary);
    assert!(s.iter().all(|m| m.diverged_runs == 0 && m.median_mse.is_some()));
}

#[test]
fn denoise_report_shape() {
    let opts = DenoiseOptions {
        depths: vec![1, 2],
        seeds: vec![0, 1],
        data: DenoiseDataConfig {
            pairs: 5,
            ..DenoiseDataConfig::default()
        },
        train: short(3),
    };
    let report = compute_denoise(&opts).unwrap();
    assert_eq!(report.depths.len(), 2);
    assert_eq!(report.checks.len(), 6);
    for d in &report.depths {
        let labels: Vec<&str> = d.variants.iter().map(|v| v.label.as_str()).collect();
        let n = d.depth;
        assert_eq!(labels, vec![format!("relu-d{n}"), format!("grkan4-enc-d{n}"), format!("grkan4-dec-d{n}"), format!("grkan4-both-d{n}")]);
        let sites = [0, n, n - 1, 2 * n - 1];
        for (v, s) in d.variants.iter().zip(sites) {
            assert_eq!(v.params - d.variants[0].params, s * 40);
            assert_eq!(v.runs.len(), 2);
        }
    }
    let csv = denoise_csv(&report);
    assert_eq!(csv.lines().next(), Some("depth,variant,seed,held_out_l1,params"));
    assert_eq!(csv.lines().count(), 1 + 2 * 4 * 2);
    let text = to_json(&report).unwrap();
    let back: grkan_bench::denoise::DenoiseReport = serde_json::from_str(&text).unwrap();
    assert_eq!(to_json(&back).unwrap(), text);
    assert_eq!(deterministic_json(&back).unwrap(), deterministic_json(&compute_denoise(&opts).unwrap()).unwrap());
}

fn one_step_report() -> &'static Table1Report {
    static REPORT: std::sync::OnceLock<Table1Report> = std::sync::OnceLock::new();
    REPORT.get_or_init(|| compute_table1(&[0], &short(1)).unwrap().0)
}

proptest! {
    #[test]
    fn timing_never_affects_the_deterministic_form(elapsed in 0.0f64..1e6, started in any::<u64>()) {
        let mut report = one_step_report().clone();
        let before = deterministic_json(&report).unwrap();
        report.timing.elapsed_s = elapsed;
        report.timing.started_unix_s = started;
        prop_assert_eq!(&deterministic_json(&report).unwrap(), &before);
        prop_assert_eq!(strip_timing(&to_json(&report).unwrap()).unwrap(), before);
    }
}
