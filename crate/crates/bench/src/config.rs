//! Echo of every constant that shapes a run.

use grkan_core::activation::{ActivationKind, APL_HINGES, APL_PENALTY, DEN_DEGREE, LEAKY_SLOPE, NUM_DEGREE, PRELU_INIT};
use grkan_core::denoise::{DENOISE_DURATION, DENOISE_GROUPS, DENOISE_RATIONAL_TARGET, TRAIN_FRACTION};
use grkan_core::layers::{FIT_DOMAIN, FIT_SAMPLES, GAIN_SAMPLES, GAIN_SEED, SPLINE_INIT_SCALE};
use grkan_core::methods::MethodSpec;
use grkan_core::signal::SignalConfig;
use grkan_core::train::{TrainConfig, CHECKPOINTS, DIVERGENCE_LOSS};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RationalEcho {
    pub numerator_degree: usize,
    pub denominator_degree: usize,
    pub fit_domain: (f64, f64),
    pub fit_samples: usize,
    pub gain_samples: usize,
    pub gain_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenoiseEcho {
    pub groups: usize,
    pub rational_target: ActivationKind,
    pub signal_duration_s: f64,
    pub train_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigEcho {
    pub rational: RationalEcho,
    pub leaky_slope: f64,
    pub prelu_init: f64,
    pub apl_hinges: usize,
    pub apl_penalty: f64,
    pub spline_init_scale: f64,
    pub methods: Vec<MethodSpec>,
    pub signal: SignalConfig,
    pub denoise: DenoiseEcho,
    /// Training template; each run substitutes its own seed.
    pub train: TrainConfig,
    pub checkpoints: usize,
    pub divergence_loss: f64,
}

impl ConfigEcho {
    pub fn new(train: &TrainConfig) -> Self {
        Self {
            rational: RationalEcho {
                numerator_degree: NUM_DEGREE,
                denominator_degree: DEN_DEGREE,
                fit_domain: FIT_DOMAIN,
                fit_samples: FIT_SAMPLES,
                gain_samples: GAIN_SAMPLES,
                gain_seed: GAIN_SEED,
            },
            leaky_slope: LEAKY_SLOPE,
            prelu_init: PRELU_INIT,
            apl_hinges: APL_HINGES,
            apl_penalty: APL_PENALTY,
            spline_init_scale: SPLINE_INIT_SCALE,
            methods: MethodSpec::all(),
            signal: SignalConfig::default(),
            denoise: DenoiseEcho {
                groups: DENOISE_GROUPS,
                rational_target: DENOISE_RATIONAL_TARGET,
                signal_duration_s: DENOISE_DURATION,
                train_fraction: TRAIN_FRACTION,
            },
            train: train.clone(),
            checkpoints: CHECKPOINTS,
            divergence_loss: DIVERGENCE_LOSS,
        }
    }
}
