//! The six model families of the signal-fitting benchmark. Every
//! architectural choice follows from the family name.

use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::activation::{rational_fit_init, ActivationKind, APL_HINGES, APL_PENALTY};
use crate::layers::{
    grkan_init_with_fit, kan_layer_init, Activation, Layer, LinearParams, Sequential, FIT_DOMAIN, FIT_SAMPLES,
};
use crate::module::Module;
use crate::rng::{derive, seeded};
use crate::signal::SignalDataset;
use crate::spline::make_knot_grid;
use crate::train::{train_run, RunTrace, TrainConfig};
use crate::{Result, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodName {
    Relu,
    Gelu,
    Pau,
    Apl,
    Grkan,
    Kan,
}

impl MethodName {
    pub const ALL: [MethodName; 6] = [
        MethodName::Relu,
        MethodName::Gelu,
        MethodName::Pau,
        MethodName::Apl,
        MethodName::Grkan,
        MethodName::Kan,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            MethodName::Relu => "relu",
            MethodName::Gelu => "gelu",
            MethodName::Pau => "pau",
            MethodName::Apl => "apl",
            MethodName::Grkan => "grkan",
            MethodName::Kan => "kan",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.as_str() == s)
    }
}

impl core::fmt::Display for MethodName {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Fully resolved architecture of one family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSpec {
    pub name: MethodName,
    /// Hidden width of the three-layer MLP families.
    pub hidden: usize,
    /// KAN widths, input to output.
    pub kan_widths: Vec<usize>,
    pub grid_size: usize,
    pub spline_order: usize,
    /// Spline domain of every KAN layer.
    pub spline_domain: (f64, f64),
    /// Rational groups per GR-KAN site.
    pub groups: usize,
    /// Activation a learnable rational is fitted to at initialization.
    pub rational_target: Option<ActivationKind>,
    pub apl_hinges: usize,
    pub apl_penalty: f64,
}

impl MethodSpec {
    pub fn new(name: MethodName) -> Self {
        let hidden = match name {
            MethodName::Apl | MethodName::Grkan => 8,
            _ => 12,
        };
        let rational_target = match name {
            MethodName::Pau => Some(ActivationKind::LeakyRelu),
            MethodName::Grkan => Some(ActivationKind::Swish),
            _ => None,
        };
        Self {
            name,
            hidden,
            kan_widths: vec![1, 4, 1],
            grid_size: 5,
            spline_order: 3,
            spline_domain: (-1.0, 1.0),
            groups: hidden.min(4),
            rational_target,
            apl_hinges: APL_HINGES,
            apl_penalty: APL_PENALTY,
        }
    }

    pub fn all() -> Vec<MethodSpec> {
        MethodName::ALL.into_iter().map(Self::new).collect()
    }

    /// Builds the model with parameters drawn from `seed`.
    pub fn build(&self, seed: u64) -> Result<Sequential> {
        let h = self.hidden;
        let mut rng = seeded(derive(seed, 1));
        let mut lin = |i, o| Layer::Linear(LinearParams::init_uniform(i, o, &mut rng));
        let mlp = |act: &mut dyn FnMut() -> Activation, lin: &mut dyn FnMut(usize, usize) -> Layer| {
            Sequential::new(vec![
                lin(1, h),
                Layer::Activation(act()),
                lin(h, h),
                Layer::Activation(act()),
                lin(h, 1),
            ])
        };
        let model = match self.name {
            MethodName::Relu => mlp(&mut || Activation::Fixed(ActivationKind::Relu), &mut lin),
            MethodName::Gelu => mlp(&mut || Activation::Fixed(ActivationKind::Gelu), &mut lin),
            MethodName::Pau => {
                let target = self.rational_target.unwrap_or(ActivationKind::LeakyRelu);
                let fit = rational_fit_init(target, FIT_DOMAIN.0, FIT_DOMAIN.1, FIT_SAMPLES)?;
                mlp(&mut || Activation::rational(&fit.coeffs, 1), &mut lin)
            }
            MethodName::Apl => {
                let mut act_rng = seeded(derive(seed, 2));
                let (s, lam) = (self.apl_hinges, self.apl_penalty);
                mlp(&mut || Activation::apl(h, s, lam, &mut act_rng), &mut lin)
            }
            MethodName::Grkan => {
                let target = self.rational_target.unwrap_or(ActivationKind::Swish);
                let fit = rational_fit_init(target, FIT_DOMAIN.0, FIT_DOMAIN.1, FIT_SAMPLES)?;
                Sequential::new(vec![
                    lin(1, h),
                    Layer::GrKan(grkan_init_with_fit(h, h, self.groups, &fit, derive(seed, 3))?),
                    Layer::GrKan(grkan_init_with_fit(h, 1, self.groups, &fit, derive(seed, 4))?),
                ])
            }
            MethodName::Kan => {
                let grid = make_knot_grid(self.spline_domain.0, self.spline_domain.1, self.grid_size, self.spline_order)?;
                let layers = self
                    .kan_widths
                    .windows(2)
                    .enumerate()
                    .map(|(l, w)| Layer::Kan(kan_layer_init(w[0], w[1], &grid, derive(seed, 10 + l as u64))))
                    .collect();
                Sequential::new(layers)
            }
        };
        Ok(model)
    }
}

/// Column tensors `[N, 1]` of a dataset's inputs and targets.
pub fn dataset_tensors(data: &SignalDataset) -> Result<(Tensor, Tensor)> {
    let n = data.len();
    Ok((
        Tensor::new(vec![n, 1], data.inputs.clone())?,
        Tensor::new(vec![n, 1], data.targets.clone())?,
    ))
}

/// Builds `spec` from `cfg.seed` and trains it on `data`.
pub fn train_method(spec: &MethodSpec, data: &SignalDataset, cfg: &TrainConfig) -> Result<(Sequential, RunTrace)> {
    let mut model = spec.build(cfg.seed)?;
    let (x, y) = dataset_tensors(data)?;
    let trace = train_run(&mut model, &x, &y, cfg)?;
    Ok((model, trace))
}

/// Parameter count of each family, in [`MethodName::ALL`] order.
pub fn param_counts() -> Result<Vec<(MethodName, usize)>> {
    MethodSpec::all()
        .iter()
        .map(|s| Ok((s.name, s.build(0)?.param_count())))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::module::predict;

    #[test]
    fn table_param_counts() {
        let counts = param_counts().unwrap();
        let want = [193, 193, 213, 257, 177, 80];
        for ((name, got), want) in counts.iter().zip(want) {
            assert_eq!(*got, want, "{name}");
        }
    }

    #[test]
    fn grkan_count_formula() {
        let spec = MethodSpec::new(MethodName::Grkan);
        let m = spec.build(0).unwrap();
        assert_eq!(m.param_count(), 97 + 2 * spec.groups * 10);
        let kan = MethodSpec::new(MethodName::Kan).build(0).unwrap();
        let table = kan.param_table();
        assert_eq!(table.iter().filter(|r| r.name == "spline_coef").map(|r| r.count).sum::<usize>(), 64);
    }

    #[test]
    fn names_round_trip() {
        for m in MethodName::ALL {
            assert_eq!(MethodName::parse(m.as_str()), Some(m));
        }
        assert_eq!(MethodName::parse("mlp"), None);
    }

    #[test]
    fn builds_are_seeded() {
        for spec in MethodSpec::all() {
            let a = spec.build(7).unwrap();
            assert_eq!(a, spec.build(7).unwrap());
            assert_ne!(a, spec.build(8).unwrap(), "{}", spec.name);
            let x = Tensor::new(vec![3, 1], vec![-1.0, 0.0, 0.99]).unwrap();
            let y = predict(&a, x).unwrap();
            assert_eq!(y.shape(), &[3, 1]);
            assert!(y.all_finite());
        }
    }
}
