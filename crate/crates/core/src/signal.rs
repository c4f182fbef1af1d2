//! Synthetic speech-like test signal: decaying syllables with a wobbling
//! pitch and three formant tones, separated by silent pauses, plus noise.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;
#[allow(unused_imports)]
use num_traits::Float;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::invalid;
use crate::rng::{normal, seeded, Rng};
use crate::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalConfig {
    /// Seconds.
    pub duration: f64,
    /// Hz.
    pub sample_rate: f64,
    /// Uniform range of syllable lengths in seconds.
    pub syllable_dur: (f64, f64),
    /// Uniform range of pause lengths in seconds.
    pub pause_dur: (f64, f64),
    /// Nominal pitch in Hz.
    pub base_freq: f64,
    /// Pitch is `base·(1 + d1·sin(2π r1 τ) + d2·cos(2π r2 τ))`.
    pub pitch_depths: (f64, f64),
    pub pitch_rates: (f64, f64),
    pub formants: Vec<f64>,
    /// Formant `f` sweeps as `f + δ·sin(2π r τ)`; this is `δ` in Hz.
    pub formant_mod: f64,
    pub formant_mod_rate: f64,
    /// Formant amplitude relative to the carrier.
    pub formant_amp: f64,
    /// Uniform range of the per-syllable envelope scale.
    pub envelope_scale: (f64, f64),
    /// Envelope is `scale·exp(−c·τ/len)`; this is `c`.
    pub envelope_decay: f64,
    pub noise_std: f64,
    pub seed: u64,
}

impl Default for SignalConfig {
    fn default() -> Self {
        Self {
            duration: 5.0,
            sample_rate: 100.0,
            syllable_dur: (0.150, 0.250),
            pause_dur: (0.020, 0.100),
            base_freq: 5.0,
            pitch_depths: (0.3, 0.2),
            pitch_rates: (0.8, 1.3),
            formants: vec![500.0, 1500.0, 3000.0],
            formant_mod: 40.0,
            formant_mod_rate: 2.0,
            formant_amp: 0.25,
            envelope_scale: (0.5, 1.5),
            envelope_decay: 3.0,
            noise_std: 0.05,
            seed: 0,
        }
    }
}

impl SignalConfig {
    pub fn with_seed(seed: u64) -> Self {
        Self {
            seed,
            ..Self::default()
        }
    }

    pub fn num_samples(&self) -> usize {
        (self.duration * self.sample_rate).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        let range_ok = |(lo, hi): (f64, f64)| lo > 0.0 && hi >= lo && hi.is_finite();
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return Err(invalid!("duration must be positive, got {}", self.duration));
        }
        if !(self.sample_rate > 0.0 && self.sample_rate.is_finite()) {
            return Err(invalid!("sample_rate must be positive, got {}", self.sample_rate));
        }
        if !range_ok(self.syllable_dur) || !range_ok(self.pause_dur) {
            return Err(invalid!("syllable and pause durations must be positive ranges"));
        }
        let (lo, hi) = self.envelope_scale;
        if !(lo <= hi && lo.is_finite() && hi.is_finite()) {
            return Err(invalid!("envelope_scale must be an ordered range"));
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return Err(invalid!("noise_std must be non-negative, got {}", self.noise_std));
        }
        Ok(())
    }

    /// Carrier phase at syllable-local time `tau`: the integral of `2π`
    /// times the instantaneous pitch.
    pub fn carrier_phase(&self, tau: f64) -> f64 {
        let (d1, d2) = self.pitch_depths;
        let (r1, r2) = self.pitch_rates;
        let mut cycles = tau;
        if r1 != 0.0 {
            cycles += d1 / (2.0 * PI * r1) * (1.0 - (2.0 * PI * r1 * tau).cos());
        }
        if r2 != 0.0 {
            cycles += d2 / (2.0 * PI * r2) * (2.0 * PI * r2 * tau).sin();
        } else {
            cycles += d2 * tau;
        }
        2.0 * PI * self.base_freq * cycles
    }

    /// Instantaneous pitch in Hz at syllable-local time `tau`.
    pub fn pitch(&self, tau: f64) -> f64 {
        let (d1, d2) = self.pitch_depths;
        let (r1, r2) = self.pitch_rates;
        self.base_freq * (1.0 + d1 * (2.0 * PI * r1 * tau).sin() + d2 * (2.0 * PI * r2 * tau).cos())
    }

    /// Phase of a formant centred at `f` before its random offset.
    pub fn formant_phase(&self, f: f64, tau: f64) -> f64 {
        let r = self.formant_mod_rate;
        let sweep = if r != 0.0 {
            self.formant_mod / (2.0 * PI * r) * (1.0 - (2.0 * PI * r * tau).cos())
        } else {
            0.0
        };
        2.0 * PI * (f * tau + sweep)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum SegmentKind {
    Syllable { scale: f64, phases: Vec<f64> },
    Pause,
}

/// Half-open time interval `[start, end)` in seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub start: f64,
    pub end: f64,
    #[serde(flatten)]
    pub kind: SegmentKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Signal {
    pub time: Vec<f64>,
    pub values: Vec<f64>,
    pub segments: Vec<Segment>,
}

impl Signal {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Index of the segment containing time `t`.
    pub fn segment_at(&self, t: f64) -> Option<&Segment> {
        self.segments.iter().find(|s| s.start <= t && t < s.end)
    }
}

fn uniform(rng: &mut Rng, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.random_range(lo..hi)
    } else {
        lo
    }
}

fn segments(cfg: &SignalConfig, rng: &mut Rng) -> Vec<Segment> {
    let mut out = Vec::new();
    let mut t = 0.0;
    let mut syllable = true;
    while t < cfg.duration {
        let (len, kind) = if syllable {
            let len = uniform(rng, cfg.syllable_dur);
            let scale = uniform(rng, cfg.envelope_scale);
            let phases = cfg.formants.iter().map(|_| rng.random_range(0.0..2.0 * PI)).collect();
            (len, SegmentKind::Syllable { scale, phases })
        } else {
            (uniform(rng, cfg.pause_dur), SegmentKind::Pause)
        };
        let end = (t + len).min(cfg.duration);
        out.push(Segment { start: t, end, kind });
        t = end;
        syllable = !syllable;
    }
    out
}

fn syllable_value(cfg: &SignalConfig, seg: &Segment, t: f64) -> f64 {
    let SegmentKind::Syllable { scale, phases } = &seg.kind else {
        return 0.0;
    };
    let tau = t - seg.start;
    let len = seg.end - seg.start;
    let env = scale * (-cfg.envelope_decay * tau / len.max(f64::MIN_POSITIVE)).exp();
    let formants: f64 = cfg
        .formants
        .iter()
        .zip(phases)
        .map(|(&f, &psi)| (cfg.formant_phase(f, tau) + psi).sin())
        .sum();
    env * (cfg.carrier_phase(tau).sin() + cfg.formant_amp * formants)
}

/// Samples the signal on `n / sample_rate`, `n = 0..round(duration·rate)`.
pub fn generate_signal(cfg: &SignalConfig) -> Result<Signal> {
    cfg.validate()?;
    let mut rng = seeded(cfg.seed);
    let segs = segments(cfg, &mut rng);
    let n = cfg.num_samples();
    let time: Vec<f64> = (0..n).map(|i| i as f64 / cfg.sample_rate).collect();
    let mut at = 0;
    let mut values: Vec<f64> = time
        .iter()
        .map(|&t| {
            while at + 1 < segs.len() && t >= segs[at].end {
                at += 1;
            }
            syllable_value(cfg, &segs[at], t)
        })
        .collect();
    if cfg.noise_std > 0.0 {
        for v in &mut values {
            *v += cfg.noise_std * normal(&mut rng);
        }
    }
    Ok(Signal {
        time,
        values,
        segments: segs,
    })
}

/// `x ↦ scale·x + offset`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AffineMap {
    pub scale: f64,
    pub offset: f64,
}

impl AffineMap {
    /// Sends `lo` to −1 and `hi` to 1.
    pub fn to_unit(lo: f64, hi: f64) -> Result<Self> {
        if !(hi > lo) {
            return Err(invalid!("empty range [{lo}, {hi}]"));
        }
        let scale = 2.0 / (hi - lo);
        Ok(Self {
            scale,
            offset: -1.0 - scale * lo,
        })
    }

    pub fn apply(&self, x: f64) -> f64 {
        self.scale * x + self.offset
    }

    pub fn invert(&self, y: f64) -> f64 {
        (y - self.offset) / self.scale
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalDataset {
    pub inputs: Vec<f64>,
    pub targets: Vec<f64>,
    pub raw_time: Vec<f64>,
    pub map: AffineMap,
}

impl SignalDataset {
    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }
}

pub fn to_dataset(signal: &Signal, map: AffineMap) -> Result<SignalDataset> {
    if signal.is_empty() {
        return Err(invalid!("empty signal"));
    }
    Ok(SignalDataset {
        inputs: signal.time.iter().map(|&t| map.apply(t)).collect(),
        targets: signal.values.clone(),
        raw_time: signal.time.clone(),
        map,
    })
}

/// Generates the signal and maps `[0, duration]` onto `[-1, 1]`.
pub fn default_dataset(cfg: &SignalConfig) -> Result<SignalDataset> {
    let s = generate_signal(cfg)?;
    to_dataset(&s, AffineMap::to_unit(0.0, cfg.duration)?)
}
