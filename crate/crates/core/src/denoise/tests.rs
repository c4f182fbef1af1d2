use alloc::vec;
use alloc::vec::Vec;
use rand::Rng;

use super::*;
use crate::activation::rational_eval;
use crate::autodiff::check_graph_gradients;
use crate::module::bind_params;
use crate::rng::seeded;

fn rand_tensor(rng: &mut crate::rng::Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

fn run_op<F: crate::autodiff::Function + 'static>(f: F, inputs: &[Tensor]) -> Result<Tensor> {
    let mut g = Graph::new();
    let ids: Vec<NodeId> = inputs.iter().map(|t| g.constant(t.clone())).collect();
    let y = g.apply(f, &ids)?;
    Ok(g.value(y).clone())
}

const GEO: ConvGeometry = ConvGeometry {
    kernel: 8,
    stride: 4,
    padding: 2,
};

/// Direct strided correlation over an explicitly zero-padded copy.
fn conv_naive(x: &Tensor, w: &Tensor, b: &Tensor, geo: ConvGeometry) -> Vec<f64> {
    let (bn, cin, len) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let cout = w.shape()[0];
    let padded_len = len + 2 * geo.padding;
    let lout = (padded_len - geo.kernel) / geo.stride + 1;
    let mut out = Vec::new();
    for n in 0..bn {
        for co in 0..cout {
            for o in 0..lout {
                let mut s = b.data()[co];
                for ci in 0..cin {
                    let mut padded = vec![0.0; padded_len];
                    padded[geo.padding..geo.padding + len].copy_from_slice(&x.data()[(n * cin + ci) * len..][..len]);
                    for k in 0..geo.kernel {
                        s += w.data()[(co * cin + ci) * geo.kernel + k] * padded[o * geo.stride + k];
                    }
                }
                out.push(s);
            }
        }
    }
    out
}

#[test]
fn conv_identity_kernel() {
    let geo = ConvGeometry {
        kernel: 1,
        stride: 1,
        padding: 0,
    };
    let x = Tensor::new(vec![1, 1, 5], vec![1.0, -2.0, 3.0, 0.5, 4.0]).unwrap();
    let w = Tensor::new(vec![1, 1, 1], vec![1.0]).unwrap();
    let y = run_op(Conv1dOp(geo), &[x.clone(), w.clone(), Tensor::zeros(&[1])]).unwrap();
    assert_eq!(y, x);
    let y = run_op(ConvTranspose1dOp(geo), &[x.clone(), w, Tensor::zeros(&[1])]).unwrap();
    assert_eq!(y, x);
}

#[test]
fn averaging_kernel_keeps_constants() {
    let geo = ConvGeometry {
        kernel: 4,
        stride: 2,
        padding: 0,
    };
    let x = Tensor::full(&[2, 1, 16], 0.75);
    let w = Tensor::full(&[1, 1, 4], 0.25);
    let y = run_op(Conv1dOp(geo), &[x, w, Tensor::zeros(&[1])]).unwrap();
    assert_eq!(y.shape(), &[2, 1, 7]);
    assert!(y.data().iter().all(|v| (v - 0.75).abs() < 1e-15));
}

#[test]
fn conv_rejects_short_input() {
    let x = Tensor::zeros(&[1, 1, 7]);
    let w = Tensor::zeros(&[1, 1, 8]);
    assert!(run_op(Conv1dOp(GEO), &[x, w, Tensor::zeros(&[1])]).is_err());
    let x = Tensor::zeros(&[1, 2, 16]);
    let w = Tensor::zeros(&[1, 3, 8]);
    assert!(run_op(Conv1dOp(GEO), &[x, w, Tensor::zeros(&[1])]).is_err());
}

#[test]
fn conv_matches_naive() {
    let mut rng = seeded(40);
    for geo in [
        GEO,
        ConvGeometry {
            kernel: 3,
            stride: 1,
            padding: 1,
        },
        ConvGeometry {
            kernel: 5,
            stride: 2,
            padding: 0,
        },
    ] {
        let x = rand_tensor(&mut rng, &[2, 3, 24]);
        let w = rand_tensor(&mut rng, &[4, 3, geo.kernel]);
        let b = rand_tensor(&mut rng, &[4]);
        let y = run_op(Conv1dOp(geo), &[x.clone(), w.clone(), b.clone()]).unwrap();
        for (a, e) in y.data().iter().zip(conv_naive(&x, &w, &b, geo)) {
            assert!((a - e).abs() < 1e-12);
        }
    }
}

#[test]
fn transpose_is_adjoint_of_conv() {
    // <conv(x), y> = <x, convT(y)> for equal weights and zero bias.
    let mut rng = seeded(41);
    for _ in 0..20 {
        let x = rand_tensor(&mut rng, &[2, 3, 32]);
        let w = rand_tensor(&mut rng, &[5, 3, 8]);
        let cx = run_op(Conv1dOp(GEO), &[x.clone(), w.clone(), Tensor::zeros(&[5])]).unwrap();
        let y = rand_tensor(&mut rng, cx.shape());
        let ty = run_op(ConvTranspose1dOp(GEO), &[y.clone(), w, Tensor::zeros(&[3])]).unwrap();
        assert_eq!(ty.shape(), x.shape());
        let lhs: f64 = cx.data().iter().zip(y.data()).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.data().iter().zip(ty.data()).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-10);
    }
}

#[test]
fn conv_lengths_round_trip() {
    for len in [8, 16, 64, 512] {
        let down = GEO.conv_len(len).unwrap();
        assert_eq!(down, len / 4);
        assert_eq!(GEO.transpose_len(down).unwrap(), len);
    }
}

#[test]
fn conv_gradients() {
    let mut rng = seeded(42);
    let mut worst = [0.0_f64; 2];
    for _ in 0..100 {
        let x = rand_tensor(&mut rng, &[2, 2, 16]);
        let w = rand_tensor(&mut rng, &[3, 2, 8]);
        let b = rand_tensor(&mut rng, &[3]);
        let proj = rand_tensor(&mut rng, &[2, 3, 4]);
        let e = check_graph_gradients(&[x, w, b], 1e-6, |g, ids| {
            let y = g.apply(Conv1dOp(GEO), ids)?;
            let p = g.constant(proj.clone());
            let m = g.mul(y, p)?;
            Ok(g.sum(m))
        })
        .unwrap();
        worst[0] = worst[0].max(e);

        let x = rand_tensor(&mut rng, &[2, 3, 4]);
        let w = rand_tensor(&mut rng, &[3, 2, 8]);
        let b = rand_tensor(&mut rng, &[2]);
        let proj = rand_tensor(&mut rng, &[2, 2, 16]);
        let e = check_graph_gradients(&[x, w, b], 1e-6, |g, ids| {
            let y = g.apply(ConvTranspose1dOp(GEO), ids)?;
            let p = g.constant(proj.clone());
            let m = g.mul(y, p)?;
            Ok(g.sum(m))
        })
        .unwrap();
        worst[1] = worst[1].max(e);
    }
    assert!(worst[0] < 1e-4 && worst[1] < 1e-4, "{worst:?}");
}

fn all_specs(depth: usize) -> Vec<DenoiserSpec> {
    vec![
        DenoiserSpec::relu(depth),
        DenoiserSpec::grkan(depth, ActivationSite::Enc),
        DenoiserSpec::grkan(depth, ActivationSite::Dec),
        DenoiserSpec::grkan(depth, ActivationSite::Both),
        DenoiserSpec::new(depth, ActivationSite::None, DenoiseActivation::Relu),
    ]
}

#[test]
fn shapes_round_trip() {
    let mut rng = seeded(43);
    for depth in 1..=3 {
        for spec in all_specs(depth) {
            let m = build_denoiser(&spec, 1).unwrap();
            let len = 4usize.pow(depth as u32) * 2;
            let x = rand_tensor(&mut rng, &[2, 1, len]);
            assert_eq!(predict(&m, x).unwrap().shape(), &[2, 1, len], "{}", spec.label());
        }
    }
    let m = build_denoiser(&DenoiserSpec::grkan(2, ActivationSite::Both), 0).unwrap();
    let x: Vec<f64> = (0..512).map(|i| (i as f64 * 0.1).sin()).collect();
    assert_eq!(m.denoise(&x).unwrap().len(), 512);
    assert!(m.denoise(&x[..500]).is_err());
}

#[test]
fn param_difference_per_site() {
    for depth in 1..=3 {
        let relu = build_denoiser(&DenoiserSpec::relu(depth), 0).unwrap().param_count();
        for site in [ActivationSite::Enc, ActivationSite::Dec, ActivationSite::Both] {
            let spec = DenoiserSpec::grkan(depth, site);
            let gr = build_denoiser(&spec, 0).unwrap().param_count();
            assert_eq!(gr - relu, spec.adapted_sites() * DENOISE_GROUPS * 10, "{}", spec.label());
        }
    }
    assert_eq!(DenoiserSpec::grkan(2, ActivationSite::Both).adapted_sites(), 3);
    assert_eq!(build_denoiser(&DenoiserSpec::relu(2), 0).unwrap().param_count(), 8513);
}

#[test]
fn rejects_bad_specs() {
    let mut s = DenoiserSpec::grkan(2, ActivationSite::Both);
    s.activation = DenoiseActivation::Grkan { groups: 5 };
    assert!(build_denoiser(&s, 0).is_err());
    let mut s = DenoiserSpec::relu(2);
    s.geometry.kernel = 4;
    assert!(build_denoiser(&s, 0).is_err());
    let mut s = DenoiserSpec::relu(2);
    s.depth = 0;
    assert!(build_denoiser(&s, 0).is_err());
}

#[test]
fn no_activation_is_affine() {
    let m = build_denoiser(&DenoiserSpec::new(2, ActivationSite::None, DenoiseActivation::Relu), 3).unwrap();
    let mut rng = seeded(44);
    let x1: Vec<f64> = (0..64).map(|_| rng.random_range(-1.0..1.0)).collect();
    let x2: Vec<f64> = (0..64).map(|_| rng.random_range(-1.0..1.0)).collect();
    let (a, b) = (0.7, -1.9);
    let f = |x: &[f64]| m.denoise(x).unwrap();
    let mix: Vec<f64> = x1.iter().zip(&x2).map(|(p, q)| a * p + b * q).collect();
    let f0 = f(&[0.0; 64]);
    let (f1, f2, fm) = (f(&x1), f(&x2), f(&mix));
    for i in 0..64 {
        let lin = a * (f1[i] - f0[i]) + b * (f2[i] - f0[i]) + f0[i];
        assert!((fm[i] - lin).abs() < 1e-12);
    }
}

#[test]
fn every_parameter_gets_gradient() {
    let mut rng = seeded(45);
    for depth in 1..=3 {
        for spec in all_specs(depth) {
            let m = build_denoiser(&spec, 2).unwrap();
            let len = 4usize.pow(depth as u32) * 4;
            let x = rand_tensor(&mut rng, &[3, 1, len]);
            let t = rand_tensor(&mut rng, &[3, 1, len]);
            let mut g = Graph::new();
            let ids = bind_params(&mut g, &m);
            let xn = g.constant(x);
            let tn = g.constant(t);
            let y = m.forward(&mut g, &ids, xn).unwrap();
            let l = Loss::L1.graph(&mut g, y, tn).unwrap();
            g.backward(l).unwrap();
            for (row, id) in m.param_table().iter().zip(&ids) {
                assert!(g.grad(*id).data().iter().any(|v| *v != 0.0), "{} {row:?}", spec.label());
            }
        }
    }
}

/// Depth-2 forward evaluated block by block with the conv kernels only.
fn hand_built(m: &Denoiser, x: &Tensor) -> Tensor {
    let geo = m.spec.geometry;
    let act = |b: &Block, t: Tensor| -> Tensor {
        match &b.activation {
            None => t,
            Some(Activation::Fixed(_)) => t.map(|v| v.max(0.0)),
            Some(Activation::Rational { numerators, denominators }) => {
                let (c, len) = (t.shape()[1], t.shape()[2]);
                let groups = numerators.shape()[0];
                let mut out = t.clone();
                for (i, v) in out.data_mut().iter_mut().enumerate() {
                    let ch = (i / len) % c;
                    let gi = ch / (c / groups);
                    let r = RationalCoeffs {
                        numerator: numerators.data()[gi * 6..gi * 6 + 6].to_vec(),
                        denominator: denominators.data()[gi * 4..gi * 4 + 4].to_vec(),
                    };
                    *v = rational_eval(&r, *v);
                }
                out
            }
            Some(_) => unreachable!(),
        }
    };
    let conv = |b: &Block, t: &Tensor| -> Tensor {
        let inputs = [t.clone(), b.conv.weight.clone(), b.conv.bias.clone()];
        if b.conv.transposed {
            run_op(ConvTranspose1dOp(geo), &inputs).unwrap()
        } else {
            run_op(Conv1dOp(geo), &inputs).unwrap()
        }
    };
    let add = |a: &Tensor, b: &Tensor| Tensor::new(a.shape().to_vec(), a.data().iter().zip(b.data()).map(|(p, q)| p + q).collect()).unwrap();
    let e0 = act(&m.encoder[0], conv(&m.encoder[0], x));
    let e1 = act(&m.encoder[1], conv(&m.encoder[1], &e0));
    let d0 = act(&m.decoder[0], conv(&m.decoder[0], &add(&e1, &e1)));
    conv(&m.decoder[1], &add(&d0, &e0))
}

#[test]
fn skip_connections_match_hand_built() {
    let mut rng = seeded(46);
    let x = rand_tensor(&mut rng, &[2, 1, 64]);
    for spec in [DenoiserSpec::relu(2), DenoiserSpec::grkan(2, ActivationSite::Both), DenoiserSpec::grkan(2, ActivationSite::Dec)] {
        let m = build_denoiser(&spec, 5).unwrap();
        let y = predict(&m, x.clone()).unwrap();
        for (a, b) in y.data().iter().zip(hand_built(&m, &x).data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }
    // With the inner decoder silenced only the outer skip path remains.
    let mut m = build_denoiser(&DenoiserSpec::relu(2), 5).unwrap();
    m.decoder[0].conv.weight = Tensor::zeros(m.decoder[0].conv.weight.shape());
    m.decoder[0].conv.bias = Tensor::zeros(m.decoder[0].conv.bias.shape());
    let y = predict(&m, x.clone()).unwrap();
    let geo = m.spec.geometry;
    let e0 = run_op(Conv1dOp(geo), &[x.clone(), m.encoder[0].conv.weight.clone(), m.encoder[0].conv.bias.clone()])
        .unwrap()
        .map(|v| v.max(0.0));
    let want = run_op(ConvTranspose1dOp(geo), &[e0, m.decoder[1].conv.weight.clone(), m.decoder[1].conv.bias.clone()]).unwrap();
    for (a, b) in y.data().iter().zip(want.data()) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn noisy_pairs_contract() {
    let clean = make_noisy_pairs(5, f64::INFINITY, 1).unwrap();
    for p in clean.train.iter().chain(&clean.held_out) {
        assert_eq!(p.clean, p.noisy);
        assert_eq!(p.clean.len(), 512);
    }
    for snr in [-5.0, 0.0, 5.0, 20.0] {
        let split = make_noisy_pairs(10, snr, 2).unwrap();
        assert_eq!((split.train.len(), split.held_out.len()), (8, 2));
        for p in split.train.iter().chain(&split.held_out) {
            assert!((measured_snr_db(p) - snr).abs() < 0.1);
        }
        let train: Vec<u64> = split.train.iter().map(|p| p.signal_seed).collect();
        assert!(split.held_out.iter().all(|p| !train.contains(&p.signal_seed)));
    }
    assert!(make_noisy_pairs(0, 5.0, 0).is_err());
    assert_eq!(make_noisy_pairs(4, 5.0, 9).unwrap(), make_noisy_pairs(4, 5.0, 9).unwrap());
}

#[test]
fn median_examples() {
    assert_eq!(median(&[Some(3.0), Some(1.0), Some(2.0)]), Some(2.0));
    assert_eq!(median(&[Some(3.0), None, Some(1.0)]), Some(2.0));
    assert_eq!(median(&[None]), None);
}

#[test]
fn experiment_is_deterministic() {
    let spec = DenoiserSpec::grkan(1, ActivationSite::Both);
    let data = DenoiseDataConfig {
        pairs: 5,
        snr_db: 5.0,
        seed: 3,
    };
    let train = TrainConfig {
        steps: 20,
        ..TrainConfig::default()
    };
    let rep = run_denoise_experiment(&[spec.clone(), spec], &data, &train, &[0, 1, 2]).unwrap();
    assert_eq!(rep[0].median_held_out_l1, rep[1].median_held_out_l1);
    assert!(rep[0].median_held_out_l1.is_some());
    assert_eq!(rep[0].runs.len(), 3);
    assert!(run_denoise_experiment(&[DenoiserSpec::relu(1)], &data, &train, &[0]).is_err());
}
