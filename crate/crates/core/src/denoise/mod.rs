//! Small waveform denoiser: a strided convolutional encoder/decoder with
//! additive skip connections, whose activations are either ReLU or grouped
//! rationals.

mod conv;

use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;
use serde::{Deserialize, Serialize};

pub use conv::{Conv1dOp, ConvGeometry, ConvParams, ConvTranspose1dOp};

use crate::activation::{rational_fit_init, ActivationKind, FixedOp, GroupRationalOp, RationalCoeffs};
use crate::autodiff::{Graph, NodeId};
use crate::error::invalid;
use crate::layers::{Activation, FIT_DOMAIN, FIT_SAMPLES};
use crate::module::{predict, Module, ParamEntry};
use crate::rng::{derive, normal, seeded};
use crate::signal::{generate_signal, SignalConfig};
use crate::train::{l1_loss, train_run, Loss, RunTrace, TrainConfig};
use crate::{Result, Tensor};

/// Which blocks carry the adapted activation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActivationSite {
    Enc,
    Dec,
    Both,
    /// No activation anywhere: the model is linear.
    None,
}

impl ActivationSite {
    pub fn as_str(self) -> &'static str {
        match self {
            ActivationSite::Enc => "enc",
            ActivationSite::Dec => "dec",
            ActivationSite::Both => "both",
            ActivationSite::None => "none",
        }
    }

    fn covers(self, encoder: bool) -> bool {
        match self {
            ActivationSite::Enc => encoder,
            ActivationSite::Dec => !encoder,
            ActivationSite::Both => true,
            ActivationSite::None => false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum DenoiseActivation {
    Relu,
    Grkan { groups: usize },
}

/// Encoder/decoder shape and activation placement. Blocks outside
/// `site` use ReLU; with [`ActivationSite::None`] no block has one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenoiserSpec {
    pub depth: usize,
    pub hidden: usize,
    pub geometry: ConvGeometry,
    pub site: ActivationSite,
    pub activation: DenoiseActivation,
}

/// Rational groups used by the adapted activations.
pub const DENOISE_GROUPS: usize = 4;
/// Activation the adapted rationals are fitted to at initialization.
pub const DENOISE_RATIONAL_TARGET: ActivationKind = ActivationKind::Swish;

impl DenoiserSpec {
    pub fn new(depth: usize, site: ActivationSite, activation: DenoiseActivation) -> Self {
        Self {
            depth,
            hidden: 16,
            geometry: ConvGeometry {
                kernel: 8,
                stride: 4,
                padding: 2,
            },
            site,
            activation,
        }
    }

    pub fn relu(depth: usize) -> Self {
        Self::new(depth, ActivationSite::Both, DenoiseActivation::Relu)
    }

    pub fn grkan(depth: usize, site: ActivationSite) -> Self {
        Self::new(depth, site, DenoiseActivation::Grkan { groups: DENOISE_GROUPS })
    }

    pub fn label(&self) -> String {
        match self.activation {
            DenoiseActivation::Relu if self.site == ActivationSite::None => alloc::format!("linear-d{}", self.depth),
            DenoiseActivation::Relu => alloc::format!("relu-d{}", self.depth),
            DenoiseActivation::Grkan { groups } => {
                alloc::format!("grkan{groups}-{}-d{}", self.site.as_str(), self.depth)
            }
        }
    }

    /// Channels after encoder block `i`; level 0 is the input.
    pub fn channels(&self, level: usize) -> usize {
        if level == 0 {
            1
        } else {
            self.hidden << (level - 1)
        }
    }

    /// Number of blocks whose activation is the adapted one.
    pub fn adapted_sites(&self) -> usize {
        if matches!(self.activation, DenoiseActivation::Relu) {
            return 0;
        }
        let mut n = 0;
        if self.site.covers(true) {
            n += self.depth;
        }
        if self.site.covers(false) {
            n += self.depth - 1;
        }
        n
    }

    /// Input lengths must be a multiple of this.
    pub fn length_multiple(&self) -> usize {
        self.geometry.stride.pow(self.depth as u32)
    }

    pub fn validate(&self) -> Result<()> {
        let g = self.geometry;
        if self.depth == 0 || self.hidden == 0 {
            return Err(invalid!("depth and hidden must be positive"));
        }
        if g.kernel <= g.stride || g.stride == 0 {
            return Err(invalid!("kernel {} must exceed stride {}", g.kernel, g.stride));
        }
        if g.kernel != g.stride + 2 * g.padding {
            return Err(invalid!(
                "kernel {} must equal stride {} + 2·padding {} for length-preserving round trips",
                g.kernel,
                g.stride,
                g.padding
            ));
        }
        if let DenoiseActivation::Grkan { groups } = self.activation {
            for level in 1..=self.depth {
                let c = self.channels(level);
                if groups == 0 || !c.is_multiple_of(groups) {
                    return Err(invalid!("{groups} rational groups do not divide {c} channels"));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub conv: ConvParams,
    pub activation: Option<Activation>,
}

impl Block {
    fn named_parameters(&self) -> Vec<(&'static str, &Tensor)> {
        let mut v = vec![("weight", &self.conv.weight), ("bias", &self.conv.bias)];
        if let Some(Activation::Rational {
            numerators,
            denominators,
        }) = &self.activation
        {
            v.push(("numerators", numerators));
            v.push(("denominators", denominators));
        }
        v
    }

    fn parameters_mut(&mut self) -> Vec<&mut Tensor> {
        let mut v = vec![&mut self.conv.weight, &mut self.conv.bias];
        if let Some(Activation::Rational {
            numerators,
            denominators,
        }) = &mut self.activation
        {
            v.push(numerators);
            v.push(denominators);
        }
        v
    }

    fn forward(&self, g: &mut Graph, params: &[NodeId], x: NodeId, geo: ConvGeometry) -> Result<NodeId> {
        let y = if self.conv.transposed {
            g.apply(ConvTranspose1dOp(geo), &[x, params[0], params[1]])?
        } else {
            g.apply(Conv1dOp(geo), &[x, params[0], params[1]])?
        };
        match &self.activation {
            None => Ok(y),
            Some(Activation::Fixed(kind)) => g.apply(FixedOp(*kind), &[y]),
            Some(Activation::Rational { .. }) => g.apply(GroupRationalOp { channel_axis: 1 }, &[y, params[2], params[3]]),
            Some(other) => Err(invalid!("unsupported denoiser activation {other:?}")),
        }
    }
}

/// Encoder/decoder denoiser operating on `[batch, 1, length]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Denoiser {
    pub spec: DenoiserSpec,
    pub encoder: Vec<Block>,
    pub decoder: Vec<Block>,
}

fn block_activation(spec: &DenoiserSpec, encoder: bool, last: bool, rational: Option<&RationalCoeffs>) -> Option<Activation> {
    if last || spec.site == ActivationSite::None {
        return None;
    }
    match (spec.activation, rational) {
        (DenoiseActivation::Grkan { groups }, Some(r)) if spec.site.covers(encoder) => Some(Activation::rational(r, groups)),
        _ => Some(Activation::Fixed(ActivationKind::Relu)),
    }
}

pub fn build_denoiser(spec: &DenoiserSpec, seed: u64) -> Result<Denoiser> {
    spec.validate()?;
    let fit = match spec.activation {
        DenoiseActivation::Grkan { .. } if spec.adapted_sites() > 0 => {
            Some(rational_fit_init(DENOISE_RATIONAL_TARGET, FIT_DOMAIN.0, FIT_DOMAIN.1, FIT_SAMPLES)?.coeffs)
        }
        _ => None,
    };
    let mut rng = seeded(derive(seed, 20));
    let k = spec.geometry.kernel;
    let n = spec.depth;
    let encoder = (0..n)
        .map(|i| Block {
            conv: ConvParams::init(spec.channels(i), spec.channels(i + 1), k, false, &mut rng),
            activation: block_activation(spec, true, false, fit.as_ref()),
        })
        .collect();
    let decoder = (0..n)
        .map(|j| Block {
            conv: ConvParams::init(spec.channels(n - j), spec.channels(n - j - 1), k, true, &mut rng),
            activation: block_activation(spec, false, j + 1 == n, fit.as_ref()),
        })
        .collect();
    Ok(Denoiser {
        spec: spec.clone(),
        encoder,
        decoder,
    })
}

impl Denoiser {
    fn blocks(&self) -> impl Iterator<Item = &Block> {
        self.encoder.iter().chain(&self.decoder)
    }

    /// Runs the model on one waveform.
    pub fn denoise(&self, x: &[f64]) -> Result<Vec<f64>> {
        let t = Tensor::new(vec![1, 1, x.len()], x.to_vec())?;
        Ok(predict(self, t)?.into_data())
    }
}

impl Module for Denoiser {
    fn parameters(&self) -> Vec<&Tensor> {
        self.blocks().flat_map(|b| b.named_parameters().into_iter().map(|(_, t)| t)).collect()
    }

    fn parameters_mut(&mut self) -> Vec<&mut Tensor> {
        self.encoder
            .iter_mut()
            .chain(self.decoder.iter_mut())
            .flat_map(|b| b.parameters_mut())
            .collect()
    }

    fn forward(&self, g: &mut Graph, params: &[NodeId], x: NodeId) -> Result<NodeId> {
        let len = g.value(x).shape().last().copied().unwrap_or(0);
        let m = self.spec.length_multiple();
        if len == 0 || len % m != 0 {
            return Err(invalid!("input length {len} is not a multiple of {m}"));
        }
        let geo = self.spec.geometry;
        let mut at = 0;
        let mut take = |b: &Block| {
            let n = b.named_parameters().len();
            let p = &params[at..at + n];
            at += n;
            p
        };
        let mut skips = Vec::with_capacity(self.encoder.len());
        let mut h = x;
        for b in &self.encoder {
            h = b.forward(g, take(b), h, geo)?;
            skips.push(h);
        }
        for b in &self.decoder {
            let skip = skips.pop().expect("one skip per level");
            let input = g.add(h, skip)?;
            h = b.forward(g, take(b), input, geo)?;
        }
        Ok(h)
    }

    fn param_table(&self) -> Vec<ParamEntry> {
        let mut rows = Vec::new();
        for (side, blocks) in [("enc", &self.encoder), ("dec", &self.decoder)] {
            for (i, b) in blocks.iter().enumerate() {
                for (name, t) in b.named_parameters() {
                    rows.push(ParamEntry {
                        layer: alloc::format!("{side}{i}"),
                        name: name.to_string(),
                        count: t.numel(),
                    });
                }
            }
        }
        rows
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoisyPair {
    pub clean: Vec<f64>,
    pub noisy: Vec<f64>,
    pub snr_db: f64,
    pub signal_seed: u64,
}

/// `10·log10(P_clean / P_noise)`.
pub fn measured_snr_db(p: &NoisyPair) -> f64 {
    let ps: f64 = p.clean.iter().map(|v| v * v).sum();
    let pn: f64 = p.clean.iter().zip(&p.noisy).map(|(c, n)| (n - c) * (n - c)).sum();
    10.0 * (ps / pn).log10()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoisySplit {
    pub train: Vec<NoisyPair>,
    pub held_out: Vec<NoisyPair>,
}

/// Clean signal duration: 512 samples at 100 Hz, divisible by `4^depth` up
/// to depth 4.
pub const DENOISE_DURATION: f64 = 5.12;
/// Fraction of pairs used for training.
pub const TRAIN_FRACTION: f64 = 0.8;

/// Clean signals of distinct seeds with white Gaussian noise scaled to
/// exactly `snr_db`, split 80/20 into train and held-out pairs.
pub fn make_noisy_pairs(count: usize, snr_db: f64, seed: u64) -> Result<NoisySplit> {
    if count == 0 {
        return Err(invalid!("need at least one pair"));
    }
    if snr_db.is_nan() {
        return Err(invalid!("snr_db is NaN"));
    }
    let n_train = ((count as f64 * TRAIN_FRACTION).round() as usize).clamp(1, count);
    let mut pairs = Vec::with_capacity(count);
    for i in 0..count {
        let signal_seed = derive(seed, 100 + i as u64);
        let cfg = SignalConfig {
            duration: DENOISE_DURATION,
            noise_std: 0.0,
            ..SignalConfig::with_seed(signal_seed)
        };
        let clean = generate_signal(&cfg)?.values;
        let noisy = if snr_db == f64::INFINITY {
            clean.clone()
        } else {
            let mut rng = seeded(derive(signal_seed, 7));
            let noise: Vec<f64> = clean.iter().map(|_| normal(&mut rng)).collect();
            let ps: f64 = clean.iter().map(|v| v * v).sum();
            let pn: f64 = noise.iter().map(|v| v * v).sum();
            let scale = (ps / (pn * 10f64.powf(snr_db / 10.0))).sqrt();
            clean.iter().zip(&noise).map(|(c, n)| c + scale * n).collect()
        };
        pairs.push(NoisyPair {
            clean,
            noisy,
            snr_db,
            signal_seed,
        });
    }
    let held_out = pairs.split_off(n_train);
    Ok(NoisySplit { train: pairs, held_out })
}

fn stack(pairs: &[NoisyPair], noisy: bool) -> Result<Tensor> {
    let len = pairs.first().map_or(0, |p| p.clean.len());
    let data: Vec<f64> = pairs
        .iter()
        .flat_map(|p| if noisy { &p.noisy } else { &p.clean }.iter().copied())
        .collect();
    Tensor::new(vec![pairs.len(), 1, len], data)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenoiseDataConfig {
    pub pairs: usize,
    pub snr_db: f64,
    pub seed: u64,
}

impl Default for DenoiseDataConfig {
    fn default() -> Self {
        Self {
            pairs: 100,
            snr_db: 5.0,
            seed: 0,
        }
    }
}

/// One trained variant for one seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenoiseRun {
    pub seed: u64,
    /// Mean L1 over held-out pairs; `None` when training diverged.
    pub held_out_l1: Option<f64>,
    pub trace: RunTrace,
}

/// Trains one variant with L1 on the train split and scores the held-out
/// split. `cfg.seed` seeds the model.
pub fn run_denoise_variant(spec: &DenoiserSpec, data: &NoisySplit, cfg: &TrainConfig) -> Result<DenoiseRun> {
    let mut model = build_denoiser(spec, cfg.seed)?;
    let x = stack(&data.train, true)?;
    let y = stack(&data.train, false)?;
    let cfg = TrainConfig {
        loss: Loss::L1,
        ..cfg.clone()
    };
    let trace = train_run(&mut model, &x, &y, &cfg)?;
    let held_out_l1 = if trace.diverged() || data.held_out.is_empty() {
        None
    } else {
        let mut total = 0.0;
        for p in &data.held_out {
            total += l1_loss(&model.denoise(&p.noisy)?, &p.clean)?;
        }
        Some(total / data.held_out.len() as f64)
    };
    Ok(DenoiseRun {
        seed: cfg.seed,
        held_out_l1,
        trace,
    })
}

/// Median of the finite values, or `None` if there are none.
pub fn median(values: &[Option<f64>]) -> Option<f64> {
    let mut v: Vec<f64> = values.iter().flatten().copied().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenoiseVariantReport {
    pub label: String,
    pub spec: DenoiserSpec,
    pub params: usize,
    pub param_table: Vec<ParamEntry>,
    pub runs: Vec<DenoiseRun>,
    pub median_held_out_l1: Option<f64>,
}

/// Trains every variant for every seed, sequentially.
pub fn run_denoise_experiment(
    variants: &[DenoiserSpec],
    data: &DenoiseDataConfig,
    train: &TrainConfig,
    seeds: &[u64],
) -> Result<Vec<DenoiseVariantReport>> {
    if variants.len() < 2 {
        return Err(invalid!("need at least two variants to compare"));
    }
    if seeds.is_empty() {
        return Err(invalid!("need at least one seed"));
    }
    let split = make_noisy_pairs(data.pairs, data.snr_db, data.seed)?;
    variants
        .iter()
        .map(|spec| {
            let model = build_denoiser(spec, 0)?;
            let runs = seeds
                .iter()
                .map(|&seed| {
                    run_denoise_variant(
                        spec,
                        &split,
                        &TrainConfig {
                            seed,
                            ..train.clone()
                        },
                    )
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(summarize(spec, &model, runs))
        })
        .collect()
}

/// Assembles a variant row from finished runs.
pub fn summarize(spec: &DenoiserSpec, model: &Denoiser, runs: Vec<DenoiseRun>) -> DenoiseVariantReport {
    let scores: Vec<Option<f64>> = runs.iter().map(|r| r.held_out_l1).collect();
    DenoiseVariantReport {
        label: spec.label(),
        spec: spec.clone(),
        params: model.param_count(),
        param_table: model.param_table(),
        median_held_out_l1: median(&scores),
        runs,
    }
}

#[cfg(test)]
mod tests;
