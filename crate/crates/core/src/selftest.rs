//! Runtime invariant checks, runnable from a release binary.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::activation::{rational_fit_init, ActivationKind, AplOp, GroupRationalOp, PReluOp, RationalCoeffs};
use crate::autodiff::{check_graph_gradients, Graph, NodeId};
use crate::denoise::{build_denoiser, make_noisy_pairs, measured_snr_db, ActivationSite, Conv1dOp, ConvGeometry, ConvTranspose1dOp, DenoiserSpec};
use crate::layers::{grkan_forward, grkan_init_with_fit, kan_layer_forward, GrKanLayerParams, KanLayerParams, LinearParams, FIT_DOMAIN, FIT_SAMPLES};
use crate::methods::{param_counts, MethodName};
use crate::module::Module;
use crate::rng::{normal, seeded, Rng};
use crate::signal::{generate_signal, SegmentKind, SignalConfig};
use crate::spline::make_knot_grid;
use crate::train::{adam_step, AdamState, Loss, Optimizer};
use crate::{Result, Tensor};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    /// The measured quantity the check thresholds, when it has one.
    pub value: Option<f64>,
    pub detail: String,
}

fn check(name: &str, passed: bool, detail: String) -> Check {
    Check {
        name: name.into(),
        passed,
        value: None,
        detail,
    }
}

fn measured(name: &str, value: f64, limit: f64, detail: String) -> Check {
    Check {
        name: name.into(),
        passed: value < limit,
        value: Some(value),
        detail,
    }
}

fn from_result(name: &str, r: Result<(bool, String)>) -> Check {
    match r {
        Ok((passed, detail)) => check(name, passed, detail),
        Err(e) => check(name, false, format!("error: {e}")),
    }
}

fn rand_tensor(rng: &mut Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(lo..hi)).collect()).expect("shape")
}

/// Parameter count of every benchmark family.
pub fn check_param_counts() -> Check {
    let want = [
        (MethodName::Relu, 193),
        (MethodName::Gelu, 193),
        (MethodName::Pau, 213),
        (MethodName::Apl, 257),
        (MethodName::Grkan, 177),
        (MethodName::Kan, 80),
    ];
    from_result(
        "param_counts",
        param_counts().map(|got| {
            let ok = got.iter().zip(want).all(|(g, w)| *g == w);
            (ok, format!("{got:?}"))
        }),
    )
}

/// Gradient checks of every learnable operation at `points` random inputs.
pub fn check_gradients(points: usize, seed: u64) -> Vec<Check> {
    let mut rng = seeded(seed);
    let mut out = Vec::new();
    let geo = ConvGeometry {
        kernel: 8,
        stride: 4,
        padding: 2,
    };
    let grid = make_knot_grid(-1.0, 1.0, 5, 3).expect("grid");
    let cases: [(&str, fn(&mut Rng) -> Vec<Tensor>); 10] = [
        ("linear", |r| vec![rand_tensor(r, &[4, 3], -1.0, 1.0), rand_tensor(r, &[2, 3], -1.0, 1.0), rand_tensor(r, &[2], -1.0, 1.0)]),
        ("kan_edge", |r| vec![rand_tensor(r, &[4, 2], -1.2, 1.2), rand_tensor(r, &[3, 2], -1.0, 1.0), rand_tensor(r, &[3, 2, 8], -1.0, 1.0), rand_tensor(r, &[3, 2], -1.0, 1.0)]),
        ("grkan_layer", |r| vec![rand_tensor(r, &[3, 4], -2.0, 2.0), rand_tensor(r, &[2, 6], -1.0, 1.0), rand_tensor(r, &[2, 4], -1.0, 1.0), rand_tensor(r, &[3, 4], -1.0, 1.0), rand_tensor(r, &[3], -1.0, 1.0)]),
        ("prelu", |r| vec![rand_tensor(r, &[3, 4], -2.0, 2.0), rand_tensor(r, &[], -1.0, 1.0)]),
        ("pau", |r| vec![rand_tensor(r, &[3, 4], -2.0, 2.0), rand_tensor(r, &[1, 6], -1.0, 1.0), rand_tensor(r, &[1, 4], -1.0, 1.0)]),
        ("apl", |r| vec![rand_tensor(r, &[3, 4], -2.0, 2.0), rand_tensor(r, &[4, 5], -1.0, 1.0), rand_tensor(r, &[4, 5], -2.0, 2.0)]),
        ("conv1d", |r| vec![rand_tensor(r, &[2, 2, 16], -1.0, 1.0), rand_tensor(r, &[3, 2, 8], -1.0, 1.0), rand_tensor(r, &[3], -1.0, 1.0)]),
        ("conv_transpose1d", |r| vec![rand_tensor(r, &[2, 3, 4], -1.0, 1.0), rand_tensor(r, &[3, 2, 8], -1.0, 1.0), rand_tensor(r, &[2], -1.0, 1.0)]),
        ("mse_loss", |r| vec![rand_tensor(r, &[6], -1.0, 1.0), rand_tensor(r, &[6], -1.0, 1.0)]),
        ("l1_loss", |r| vec![rand_tensor(r, &[6], -1.0, 1.0), rand_tensor(r, &[6], -1.0, 1.0)]),
    ];
    for (name, make) in cases {
        let mut worst = 0.0_f64;
        let mut err = None;
        for _ in 0..points {
            let inputs = make(&mut rng);
            let proj_seed = rng.random::<u64>();
            let kan_grid = grid.clone();
            let build = move |g: &mut Graph, ids: &[NodeId]| -> Result<NodeId> {
                let y = match name {
                    "linear" => LinearParams::forward_graph(g, ids[1], ids[2], ids[0])?,
                    "kan_edge" => {
                        let p = KanLayerParams::new(kan_grid.clone(), g.value(ids[1]).clone(), g.value(ids[2]).clone(), g.value(ids[3]).clone())?;
                        p.forward_graph(g, &ids[1..], ids[0])?
                    }
                    "grkan_layer" => GrKanLayerParams::forward_graph(g, &ids[1..], ids[0])?,
                    "prelu" => g.apply(PReluOp, ids)?,
                    "pau" => g.apply(GroupRationalOp { channel_axis: 1 }, ids)?,
                    "apl" => g.apply(AplOp, ids)?,
                    "conv1d" => g.apply(Conv1dOp(geo), ids)?,
                    "conv_transpose1d" => g.apply(ConvTranspose1dOp(geo), ids)?,
                    "mse_loss" => return Loss::Mse.graph(g, ids[0], ids[1]),
                    _ => return Loss::L1.graph(g, ids[0], ids[1]),
                };
                let mut r = seeded(proj_seed);
                let shape = g.value(y).shape().to_vec();
                let w = g.constant(rand_tensor(&mut r, &shape, -1.0, 1.0));
                let m = g.mul(y, w)?;
                Ok(g.sum(m))
            };
            match check_graph_gradients(&inputs, 1e-6, build) {
                Ok(e) => worst = if e.is_nan() { f64::INFINITY } else { worst.max(e) },
                Err(e) => err = Some(e),
            }
        }
        out.push(match err {
            Some(e) => check(&format!("gradient/{name}"), false, format!("error: {e}")),
            None => measured(&format!("gradient/{name}"), worst, 1e-4, format!("max relative error {worst:.2e} over {points} points")),
        });
    }
    out
}

/// Textbook Cox–de Boor recursion; the right end of the domain belongs to
/// the last interval.
pub fn cox_de_boor(knots: &[f64], i: usize, degree: usize, x: f64, hi: f64) -> f64 {
    if degree == 0 {
        let (a, b) = (knots[i], knots[i + 1]);
        return if (a <= x && x < b) || (x == hi && b == hi) { 1.0 } else { 0.0 };
    }
    let mut v = 0.0;
    if knots[i + degree] > knots[i] {
        v += (x - knots[i]) / (knots[i + degree] - knots[i]) * cox_de_boor(knots, i, degree - 1, x, hi);
    }
    if knots[i + degree + 1] > knots[i + 1] {
        v += (knots[i + degree + 1] - x) / (knots[i + degree + 1] - knots[i + 1]) * cox_de_boor(knots, i + 1, degree - 1, x, hi);
    }
    v
}

/// Partition of unity, per-edge KAN brute force and the GR-KAN double sum.
pub fn check_spline_oracles(seed: u64) -> Vec<Check> {
    let mut rng = seeded(seed);
    let grid = make_knot_grid(-1.0, 1.0, 5, 3).expect("grid");
    let mut worst = 0.0_f64;
    for i in 1..=1000 {
        let x = -1.0 + 2.0 * i as f64 / 1001.0;
        worst = worst.max((grid.basis(x).iter().sum::<f64>() - 1.0).abs());
    }
    let mut out = vec![measured("spline/partition_of_unity", worst, 1e-9, format!("max |Σ B − 1| = {worst:.2e}"))];

    let mut kan_worst = 0.0_f64;
    for _ in 0..20 {
        let (i_dim, j_dim) = (rng.random_range(1..5), rng.random_range(1..5));
        let nb = grid.num_basis();
        let p = KanLayerParams::new(
            grid.clone(),
            rand_tensor(&mut rng, &[j_dim, i_dim], -1.0, 1.0),
            rand_tensor(&mut rng, &[j_dim, i_dim, nb], -1.0, 1.0),
            rand_tensor(&mut rng, &[j_dim, i_dim], -1.0, 1.0),
        )
        .expect("params");
        for _ in 0..20 {
            let x: Vec<f64> = (0..i_dim).map(|_| rng.random_range(-1.0..1.0)).collect();
            let y = kan_layer_forward(&p, &x).expect("forward");
            for (j, yj) in y.iter().enumerate() {
                let mut want = 0.0;
                for (i, &xi) in x.iter().enumerate() {
                    let e = j * i_dim + i;
                    let spline: f64 = (0..nb).map(|b| p.spline_coef.data()[e * nb + b] * cox_de_boor(grid.knots(), b, 3, xi, grid.hi())).sum();
                    want += p.base_weight.data()[e] * xi / (1.0 + (-xi).exp()) + p.spline_scale.data()[e] * spline;
                }
                kan_worst = kan_worst.max((yj - want).abs());
            }
        }
    }
    out.push(measured("spline/kan_brute_force", kan_worst, 1e-10, format!("max deviation {kan_worst:.2e}")));

    let mut gr_worst = 0.0_f64;
    for &(i_dim, k) in &[(8usize, 4usize), (16, 8), (16, 1), (12, 3)] {
        let j_dim = 5;
        let rationals: Vec<RationalCoeffs> = (0..k)
            .map(|_| RationalCoeffs {
                numerator: (0..6).map(|_| rng.random_range(-1.0..1.0)).collect(),
                denominator: (0..4).map(|_| rng.random_range(-1.0..1.0)).collect(),
            })
            .collect();
        let lin = LinearParams::new(rand_tensor(&mut rng, &[j_dim, i_dim], -1.0, 1.0), rand_tensor(&mut rng, &[j_dim], -1.0, 1.0)).expect("linear");
        let p = GrKanLayerParams::new(&rationals, lin).expect("params");
        for _ in 0..20 {
            let x: Vec<f64> = (0..i_dim).map(|_| rng.random_range(-3.0..3.0)).collect();
            let y = grkan_forward(&p, &x).expect("forward");
            for (j, yj) in y.iter().enumerate() {
                let mut want = p.linear.bias.data()[j];
                for (i, &xi) in x.iter().enumerate() {
                    let r = &rationals[i / (i_dim / k)];
                    let num: f64 = (0..6).map(|q| r.numerator[q] * xi.powi(q as i32)).sum();
                    let den: f64 = (0..4).map(|q| r.denominator[q] * xi.powi(q as i32 + 1)).sum();
                    want += p.linear.weight.data()[j * i_dim + i] * num / (1.0 + den.abs());
                }
                gr_worst = gr_worst.max((yj - want).abs());
            }
        }
    }
    out.push(measured("spline/grkan_double_sum", gr_worst, 1e-12, format!("max deviation {gr_worst:.2e}")));
    out
}

/// Output standard deviation of one and of five stacked GR-KAN layers
/// (I = J = 64, k = 8, swish target) under unit-normal input.
pub fn grkan_stack_stds(samples: usize, seed: u64) -> Result<Vec<f64>> {
    let fit = rational_fit_init(ActivationKind::Swish, FIT_DOMAIN.0, FIT_DOMAIN.1, FIT_SAMPLES)?;
    let layers = (0..5)
        .map(|l| grkan_init_with_fit(64, 64, 8, &fit, crate::rng::derive(seed, l)))
        .collect::<Result<Vec<_>>>()?;
    let mut rng = seeded(seed);
    let mut x = Tensor::new(vec![samples, 64], (0..samples * 64).map(|_| normal(&mut rng)).collect())?;
    let mut stds = Vec::new();
    for p in &layers {
        let mut g = Graph::new();
        let ids = [
            g.constant(p.numerators.clone()),
            g.constant(p.denominators.clone()),
            g.constant(p.linear.weight.clone()),
            g.constant(p.linear.bias.clone()),
        ];
        let xn = g.constant(x);
        let y = GrKanLayerParams::forward_graph(&mut g, &ids, xn)?;
        x = g.value(y).clone();
        let v = x.data();
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        stds.push((v.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / v.len() as f64).sqrt());
    }
    Ok(stds)
}

pub fn check_variance_preserving() -> Check {
    from_result(
        "variance_preserving_init",
        grkan_stack_stds(10_000, 17).map(|s| {
            let ok = (0.8..=1.25).contains(&s[0]) && s.iter().all(|v| (0.5..=2.0).contains(v));
            (ok, format!("layer stds {s:.3?}"))
        }),
    )
}

pub fn check_signal() -> Check {
    let run = || -> Result<(bool, String)> {
        let cfg = SignalConfig {
            noise_std: 0.0,
            ..SignalConfig::with_seed(7)
        };
        let a = generate_signal(&cfg)?;
        let b = generate_signal(&cfg)?;
        let silent = a
            .time
            .iter()
            .zip(&a.values)
            .all(|(t, v)| !matches!(a.segment_at(*t).map(|s| &s.kind), Some(SegmentKind::Pause)) || *v == 0.0);
        let tiled = a.segments.windows(2).all(|w| w[0].end == w[1].start);
        let ok = a.len() == 500 && a == b && silent && tiled;
        Ok((ok, format!("{} samples, {} segments", a.len(), a.segments.len())))
    };
    from_result("signal", run())
}

pub fn check_adam() -> Check {
    let mut p = Tensor::vector(vec![0.0]);
    let mut st = AdamState::new([1]);
    let r = adam_step(&mut st, &mut [&mut p], &[&[1.0]], &Optimizer::default(), 1e-3, 1e-8);
    let v = p.data()[0];
    check("adam_step", r.is_ok() && (v + 1e-3 / (1.0 + 1e-8)).abs() < 1e-8, format!("θ after one step = {v}"))
}

pub fn check_denoiser() -> Check {
    let run = || -> Result<(bool, String)> {
        let relu = build_denoiser(&DenoiserSpec::relu(2), 0)?;
        let spec = DenoiserSpec::grkan(2, ActivationSite::Both);
        let gr = build_denoiser(&spec, 0)?;
        let diff = gr.param_count() - relu.param_count();
        let out = gr.denoise(&vec![0.1; 512])?;
        let pairs = make_noisy_pairs(5, 5.0, 0)?;
        let snr_ok = pairs.train.iter().chain(&pairs.held_out).all(|p| (measured_snr_db(p) - 5.0).abs() < 0.1);
        let ok = diff == spec.adapted_sites() * 4 * 10 && out.len() == 512 && snr_ok;
        Ok((ok, format!("param difference {diff}, output length {}", out.len())))
    };
    from_result("denoiser", run())
}

/// Every check, in a fixed order.
pub fn run_all() -> Vec<Check> {
    let mut out = vec![check_param_counts()];
    out.extend(check_gradients(100, 1));
    out.extend(check_spline_oracles(2));
    out.push(check_variance_preserving());
    out.push(check_signal());
    out.push(check_adam());
    out.push(check_denoiser());
    out
}
