use alloc::vec;
use alloc::vec::Vec;
use rand::Rng;

use super::*;
use crate::activation::{fixed_eval, rational_eval, rational_fit_init, APL_HINGES, APL_PENALTY};
use crate::autodiff::check_graph_gradients;
use crate::module::{bind_params, predict};
use crate::rng::{normal, seeded};
use crate::spline::make_knot_grid;

fn rand_tensor(rng: &mut crate::rng::Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(lo..hi)).collect()).unwrap()
}

fn random_kan(rng: &mut crate::rng::Rng, i: usize, j: usize) -> KanLayerParams {
    let grid = make_knot_grid(-1.0, 1.0, 5, 3).unwrap();
    let nb = grid.num_basis();
    KanLayerParams::new(
        grid,
        rand_tensor(rng, &[j, i], -1.0, 1.0),
        rand_tensor(rng, &[j, i, nb], -1.0, 1.0),
        rand_tensor(rng, &[j, i], -1.0, 1.0),
    )
    .unwrap()
}

fn random_rational(rng: &mut crate::rng::Rng) -> RationalCoeffs {
    RationalCoeffs::new(
        (0..6).map(|_| rng.random_range(-1.0..1.0)).collect(),
        (0..4).map(|_| rng.random_range(-1.0..1.0)).collect(),
    )
    .unwrap()
}

#[test]
fn linear_examples() {
    let p = LinearParams::new(Tensor::matrix(&[&[1.0, 2.0], &[0.0, -1.0]]), Tensor::vector(vec![0.5, 0.0])).unwrap();
    assert_eq!(linear_forward(&p, &[1.0, 1.0]).unwrap(), vec![3.5, -1.0]);
    assert!(linear_forward(&p, &[1.0]).is_err());
    assert!(LinearParams::new(Tensor::zeros(&[2, 2]), Tensor::zeros(&[3])).is_err());
}

#[test]
fn kan_single_edge() {
    let mut rng = seeded(10);
    let p = random_kan(&mut rng, 1, 1);
    for x in [-0.9, -0.1, 0.0, 0.37, 1.0] {
        let y = kan_layer_forward(&p, &[x]).unwrap();
        assert!((y[0] - kan_edge_eval(&p, 0, 0, x)).abs() < 1e-14);
    }
}

#[test]
fn kan_zero_edges_give_zero() {
    let grid = make_knot_grid(-1.0, 1.0, 5, 3).unwrap();
    let p = KanLayerParams::new(grid, Tensor::zeros(&[3, 2]), Tensor::zeros(&[3, 2, 8]), Tensor::zeros(&[3, 2])).unwrap();
    assert_eq!(kan_layer_forward(&p, &[0.3, -0.4]).unwrap(), vec![0.0; 3]);
    assert!(kan_layer_forward(&p, &[0.3]).is_err());
}

/// Per-edge evaluation written out by hand: swish and the naive recursive
/// basis, summed over inputs.
fn kan_brute_force(p: &KanLayerParams, x: &[f64]) -> Vec<f64> {
    fn cox(knots: &[f64], i: usize, d: usize, x: f64, hi: f64) -> f64 {
        if d == 0 {
            let (a, b) = (knots[i], knots[i + 1]);
            return if (a <= x && x < b) || (x == hi && b == hi) { 1.0 } else { 0.0 };
        }
        let l = if knots[i + d] > knots[i] {
            (x - knots[i]) / (knots[i + d] - knots[i]) * cox(knots, i, d - 1, x, hi)
        } else {
            0.0
        };
        let r = if knots[i + d + 1] > knots[i + 1] {
            (knots[i + d + 1] - x) / (knots[i + d + 1] - knots[i + 1]) * cox(knots, i + 1, d - 1, x, hi)
        } else {
            0.0
        };
        l + r
    }
    let (i_dim, j_dim, nb) = (p.in_dim(), p.out_dim(), p.grid.num_basis());
    let mut y = vec![0.0; j_dim];
    for (j, yj) in y.iter_mut().enumerate() {
        for (i, &xi) in x.iter().enumerate().take(i_dim) {
            let e = j * i_dim + i;
            let swish = xi / (1.0 + (-xi).exp());
            let mut s = 0.0;
            for b in 0..nb {
                s += p.spline_coef.data()[e * nb + b] * cox(p.grid.knots(), b, p.grid.order(), xi, p.grid.hi());
            }
            *yj += p.base_weight.data()[e] * swish + p.spline_scale.data()[e] * s;
        }
    }
    y
}

#[test]
fn kan_matches_edge_brute_force() {
    let mut rng = seeded(11);
    for &(i, j) in &[(2, 2), (1, 4), (4, 1), (3, 5)] {
        let p = random_kan(&mut rng, i, j);
        for _ in 0..50 {
            let x: Vec<f64> = (0..i).map(|_| rng.random_range(-1.0..1.0)).collect();
            let y = kan_layer_forward(&p, &x).unwrap();
            let want = kan_brute_force(&p, &x);
            let per_edge: Vec<f64> = (0..j).map(|o| (0..i).map(|k| kan_edge_eval(&p, k, o, x[k])).sum()).collect();
            for ((a, b), c) in y.iter().zip(&want).zip(&per_edge) {
                assert!((a - b).abs() < 1e-10, "{a} vs {b}");
                assert!((a - c).abs() < 1e-10);
            }
        }
    }
}

#[test]
fn kan_init_deterministic_and_scaled() {
    let grid = make_knot_grid(-1.0, 1.0, 5, 3).unwrap();
    let a = kan_layer_init(64, 64, &grid, 3);
    assert_eq!(a, kan_layer_init(64, 64, &grid, 3));
    assert_ne!(a, kan_layer_init(64, 64, &grid, 4));

    let mut rng = seeded(12);
    let (mut all, mut base, mut spline) = (Vec::new(), Vec::new(), Vec::new());
    let mut only_spline = a.clone();
    only_spline.base_weight = Tensor::zeros(&[64, 64]);
    let mut only_base = a.clone();
    only_base.spline_coef = Tensor::zeros(only_base.spline_coef.shape());
    let samples = 10_000;
    let n = 200;
    for _ in 0..samples / n {
        let x = Tensor::new(vec![n, 64], (0..n * 64).map(|_| normal(&mut rng)).collect()).unwrap();
        for (out, p) in [(&mut all, &a), (&mut base, &only_base), (&mut spline, &only_spline)] {
            let mut g = Graph::new();
            let ids = [
                g.constant(p.base_weight.clone()),
                g.constant(p.spline_coef.clone()),
                g.constant(p.spline_scale.clone()),
            ];
            let xn = g.constant(x.clone());
            let y = p.forward_graph(&mut g, &ids, xn).unwrap();
            out.extend_from_slice(g.value(y).data());
        }
    }
    let std = |v: &[f64]| {
        let m = v.iter().sum::<f64>() / v.len() as f64;
        (v.iter().map(|a| (a - m).powi(2)).sum::<f64>() / v.len() as f64).sqrt()
    };
    let s = std(&all);
    assert!((0.3..=3.0).contains(&s), "{s}");
    assert!(std(&spline) < std(&base));
}

#[test]
fn swish_moment_quadrature() {
    let mut rng = seeded(13);
    let n = 400_000;
    let mc = (0..n).map(|_| fixed_eval(ActivationKind::Swish, normal(&mut rng)).powi(2)).sum::<f64>() / n as f64;
    assert!((kan::swish_second_moment() - mc).abs() < 5e-3);
}

/// Entrywise `y_j = Σ_i w_ij F_{group(i)}(x_i) + b_j`.
fn grkan_double_sum(p: &GrKanLayerParams, x: &[f64]) -> Vec<f64> {
    let (i_dim, j_dim) = (p.in_dim(), p.out_dim());
    let width = i_dim / p.groups();
    let w = p.linear.weight.data();
    (0..j_dim)
        .map(|j| {
            let mut s = p.linear.bias.data()[j];
            for i in 0..i_dim {
                let c = p.rational(i / width);
                let num: f64 = c.numerator.iter().enumerate().map(|(k, a)| a * x[i].powi(k as i32)).sum();
                let den: f64 = c.denominator.iter().enumerate().map(|(k, b)| b * x[i].powi(k as i32 + 1)).sum();
                s += w[j * i_dim + i] * (num / (1.0 + den.abs()));
            }
            s
        })
        .collect()
}

#[test]
fn grkan_identity_passthrough() {
    let lin = LinearParams::new(Tensor::identity(4), Tensor::zeros(&[4])).unwrap();
    let p = GrKanLayerParams::new(&vec![RationalCoeffs::identity(); 2], lin).unwrap();
    let x = [0.3, -2.0, 5.0, 0.0];
    assert_eq!(grkan_forward(&p, &x).unwrap(), x.to_vec());
}

#[test]
fn grkan_rejects_indivisible_groups() {
    let lin = LinearParams::new(Tensor::zeros(&[2, 6]), Tensor::zeros(&[2])).unwrap();
    assert!(GrKanLayerParams::new(&vec![RationalCoeffs::identity(); 4], lin.clone()).is_err());
    assert!(GrKanLayerParams::new(&[], lin).is_err());
    let fit = rational_fit_init(ActivationKind::Swish, -3.0, 3.0, 1000).unwrap();
    assert!(grkan_init_with_fit(6, 2, 4, &fit, 0).is_err());
}

#[test]
fn grkan_matches_double_sum() {
    let mut rng = seeded(14);
    for &(i, j, k) in &[(8, 3, 4), (16, 5, 8), (4, 4, 1), (6, 2, 3)] {
        let rationals: Vec<RationalCoeffs> = (0..k).map(|_| random_rational(&mut rng)).collect();
        let lin = LinearParams::new(rand_tensor(&mut rng, &[j, i], -1.0, 1.0), rand_tensor(&mut rng, &[j], -1.0, 1.0)).unwrap();
        let p = GrKanLayerParams::new(&rationals, lin).unwrap();
        for _ in 0..50 {
            let x: Vec<f64> = (0..i).map(|_| rng.random_range(-3.0..3.0)).collect();
            let y = grkan_forward(&p, &x).unwrap();
            for (a, b) in y.iter().zip(grkan_double_sum(&p, &x)) {
                assert!((a - b).abs() < 1e-12, "{a} vs {b}");
            }
        }
    }
}

#[test]
fn grkan_regrouping_invariance() {
    let mut rng = seeded(15);
    let c = random_rational(&mut rng);
    let lin = LinearParams::new(rand_tensor(&mut rng, &[3, 8], -1.0, 1.0), rand_tensor(&mut rng, &[3], -1.0, 1.0)).unwrap();
    let layers: Vec<GrKanLayerParams> = [1, 2, 8]
        .iter()
        .map(|&k| GrKanLayerParams::new(&vec![c.clone(); k], lin.clone()).unwrap())
        .collect();
    for _ in 0..50 {
        let x: Vec<f64> = (0..8).map(|_| rng.random_range(-3.0..3.0)).collect();
        let base = grkan_forward(&layers[0], &x).unwrap();
        for l in &layers[1..] {
            for (a, b) in grkan_forward(l, &x).unwrap().iter().zip(&base) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn grkan_identity_target_gain() {
    let p = grkan_init_variance_preserving(16, 4, 4, ActivationKind::Identity, 1).unwrap();
    let a2 = rational_second_moment(&p.rational(0));
    assert!((a2 - 1.0).abs() < 0.02, "{a2}");
    assert_eq!(p.linear.bias.data(), &[0.0; 4]);
    assert_eq!(p, grkan_init_variance_preserving(16, 4, 4, ActivationKind::Identity, 1).unwrap());
}

#[test]
fn grkan_degenerate_fit_rejected() {
    let fit = crate::activation::RationalFit {
        coeffs: RationalCoeffs::zero(),
        max_abs_error: 0.0,
        refine_steps: 0,
    };
    assert!(grkan_init_with_fit(4, 4, 2, &fit, 0).is_err());
}

fn output_std(layers: &[GrKanLayerParams], rng: &mut crate::rng::Rng) -> Vec<f64> {
    let n = 4000;
    let mut x = Tensor::new(vec![n, 64], (0..n * 64).map(|_| normal(rng)).collect()).unwrap();
    let mut stds = Vec::new();
    for p in layers {
        let mut g = Graph::new();
        let ids = [
            g.constant(p.numerators.clone()),
            g.constant(p.denominators.clone()),
            g.constant(p.linear.weight.clone()),
            g.constant(p.linear.bias.clone()),
        ];
        let xn = g.constant(x);
        let y = GrKanLayerParams::forward_graph(&mut g, &ids, xn).unwrap();
        x = g.value(y).clone();
        let v = x.data();
        let m = v.iter().sum::<f64>() / v.len() as f64;
        stds.push((v.iter().map(|a| (a - m).powi(2)).sum::<f64>() / v.len() as f64).sqrt());
    }
    stds
}

#[test]
fn grkan_variance_preserving() {
    let fit = rational_fit_init(ActivationKind::Swish, FIT_DOMAIN.0, FIT_DOMAIN.1, FIT_SAMPLES).unwrap();
    let layers: Vec<GrKanLayerParams> = (0..5).map(|s| grkan_init_with_fit(64, 64, 8, &fit, 100 + s).unwrap()).collect();
    let mut rng = seeded(16);
    let stds = output_std(&layers, &mut rng);
    assert!((0.8..=1.25).contains(&stds[0]), "{stds:?}");
    assert!(stds.iter().all(|s| (0.5..=2.0).contains(s)), "{stds:?}");
}

fn toy_stack(rng: &mut crate::rng::Rng) -> Sequential {
    let fit = rational_fit_init(ActivationKind::Swish, -3.0, 3.0, 1000).unwrap();
    let grid = make_knot_grid(-1.0, 1.0, 5, 3).unwrap();
    Sequential::new(vec![
        Layer::Linear(LinearParams::init_uniform(2, 4, rng)),
        Layer::Activation(Activation::prelu()),
        Layer::Kan(kan_layer_init(4, 4, &grid, 5)),
        Layer::Activation(Activation::rational(&fit.coeffs, 1)),
        Layer::GrKan(grkan_init_with_fit(4, 4, 2, &fit, 6).unwrap()),
        Layer::Activation(Activation::apl(4, APL_HINGES, APL_PENALTY, rng)),
        Layer::Activation(Activation::Fixed(ActivationKind::Gelu)),
        Layer::Linear(LinearParams::init_uniform(4, 1, rng)),
    ])
}

#[test]
fn sequential_param_table_sums() {
    let mut rng = seeded(17);
    let m = toy_stack(&mut rng);
    let table = m.param_table();
    assert_eq!(table.iter().map(|r| r.count).sum::<usize>(), m.param_count());
    assert_eq!(table.len(), m.parameters().len());
    assert_eq!(table[0].layer, "0:linear");
    assert_eq!(m.param_count(), 12 + 1 + (16 + 16 * 8 + 16) + 10 + (12 + 8 + 16 + 4) + 40 + 5);
}

#[test]
fn no_dead_parameters_at_init() {
    let mut rng = seeded(18);
    let m = toy_stack(&mut rng);
    let x = rand_tensor(&mut rng, &[64, 2], -1.0, 1.0);
    let t = rand_tensor(&mut rng, &[64, 1], -1.0, 1.0);
    let mut g = Graph::new();
    let ids = bind_params(&mut g, &m);
    let xn = g.constant(x);
    let y = m.forward(&mut g, &ids, xn).unwrap();
    let tn = g.constant(t);
    let d = g.sub(y, tn).unwrap();
    let sq = g.mul(d, d).unwrap();
    let mut loss = g.mean(sq);
    if let Some(p) = m.penalty(&mut g, &ids).unwrap() {
        loss = g.add(loss, p).unwrap();
    }
    g.backward(loss).unwrap();
    for (row, id) in m.param_table().iter().zip(&ids) {
        assert!(g.grad(*id).data().iter().any(|v| *v != 0.0), "{row:?}");
    }
}

#[test]
fn apl_penalty_node_matches_plain() {
    let mut rng = seeded(19);
    let m = Sequential::new(vec![Layer::Activation(Activation::apl(3, 5, 0.001, &mut rng))]);
    let mut g = Graph::new();
    let ids = bind_params(&mut g, &m);
    let p = m.penalty(&mut g, &ids).unwrap().unwrap();
    let want = 0.001 * m.parameters().iter().flat_map(|t| t.data()).map(|v| v * v).sum::<f64>();
    assert!((g.value(p).item().unwrap() - want).abs() < 1e-15);
}

#[test]
fn predict_matches_pointwise() {
    let mut rng = seeded(20);
    let m = toy_stack(&mut rng);
    let x = rand_tensor(&mut rng, &[5, 2], -1.0, 1.0);
    let batch = predict(&m, x.clone()).unwrap();
    for r in 0..5 {
        let row = Tensor::new(vec![1, 2], x.data()[2 * r..2 * r + 2].to_vec()).unwrap();
        assert_eq!(predict(&m, row).unwrap().data(), &batch.data()[r..r + 1]);
    }
}

#[test]
fn layer_gradients() {
    let mut rng = seeded(21);
    let mut worst = [0.0_f64; 3];
    for _ in 0..100 {
        let x = rand_tensor(&mut rng, &[3, 2], -1.2, 1.2);
        let w = rand_tensor(&mut rng, &[3, 3], -1.0, 1.0);
        let lin = LinearParams::init_uniform(2, 3, &mut rng);
        let e = check_graph_gradients(&[x.clone(), lin.weight, lin.bias], 1e-6, |g, ids| {
            let y = LinearParams::forward_graph(g, ids[1], ids[2], ids[0])?;
            let wn = g.constant(w.clone());
            let p = g.mul(y, wn)?;
            Ok(g.sum(p))
        })
        .unwrap();
        worst[0] = worst[0].max(e);

        let k = random_kan(&mut rng, 2, 3);
        let inputs = [x.clone(), k.base_weight.clone(), k.spline_coef.clone(), k.spline_scale.clone()];
        let e = check_graph_gradients(&inputs, 1e-6, |g, ids| {
            let y = k.forward_graph(g, &ids[1..], ids[0])?;
            let wn = g.constant(w.clone());
            let p = g.mul(y, wn)?;
            Ok(g.sum(p))
        })
        .unwrap();
        worst[1] = worst[1].max(e);

        let r = [random_rational(&mut rng), random_rational(&mut rng)];
        let gr = GrKanLayerParams::new(&r, LinearParams::init_uniform(2, 3, &mut rng)).unwrap();
        let inputs = [
            x.clone(),
            gr.numerators.clone(),
            gr.denominators.clone(),
            gr.linear.weight.clone(),
            gr.linear.bias.clone(),
        ];
        let e = check_graph_gradients(&inputs, 1e-6, |g, ids| {
            let y = GrKanLayerParams::forward_graph(g, &ids[1..], ids[0])?;
            let wn = g.constant(w.clone());
            let p = g.mul(y, wn)?;
            Ok(g.sum(p))
        })
        .unwrap();
        worst[2] = worst[2].max(e);
    }
    for (name, e) in ["linear", "kan", "grkan"].iter().zip(worst) {
        assert!(e < 1e-4, "{name}: {e}");
    }
}

#[test]
fn rational_eval_agrees_with_layer() {
    let mut rng = seeded(22);
    let c = random_rational(&mut rng);
    let m = Sequential::new(vec![Layer::Activation(Activation::rational(&c, 1))]);
    let x = rand_tensor(&mut rng, &[10, 3], -3.0, 3.0);
    let y = predict(&m, x.clone()).unwrap();
    for (a, b) in x.data().iter().zip(y.data()) {
        assert_eq!(rational_eval(&c, *a), *b);
    }
}
