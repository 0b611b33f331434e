//! Synthetic arc-voltage corpus with injected instability bursts.
//!
//! Every trial is a pure function of its seed. Randomness comes from
//! `ChaCha8Rng` (rand_chacha) seeded with `seed_from_u64`, Gaussian noise
//! from `rand_distr::StandardNormal`; per-trial seeds are derived from the
//! welder seed with a SplitMix64 step. Samples are quantized to 0.1 mV so
//! that the text series format round-trips exactly.

use std::thread;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result, WeldError};
use crate::signal::{preprocess_series, FeatureVector, PreprocessConfig, RawSeries, SourceId};

pub const DEFAULT_SAMPLE_RATE_HZ: f64 = 100_000.0;
const QUANTUM_PER_VOLT: f64 = 1e4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BurstKind {
    /// Short circuit: the voltage collapses toward a few volts.
    Dip,
    /// Arc break: a sustained rise above the working voltage.
    Spike,
    /// Low-frequency sinusoidal instability.
    Oscillation,
}

/// Shape parameters for injected bursts. Fractions are relative to the
/// segment length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BurstParams {
    /// Relative frequency of dip, spike and oscillation bursts.
    pub kind_weights: [f64; 3],
    pub duration_fraction: (f64, f64),
    /// Inclusive range for the number of same-kind bursts in an unsteady
    /// segment; bursts may overlap.
    pub bursts_per_segment: (usize, usize),
    pub dip_level_v: f64,
    pub spike_rise_v: (f64, f64),
    /// Oscillation amplitude in multiples of the background noise sd.
    pub oscillation_amplitude_sd: (f64, f64),
    pub oscillation_period_fraction: (f64, f64),
}

impl Default for BurstParams {
    fn default() -> Self {
        Self {
            kind_weights: [0.45, 0.45, 0.10],
            duration_fraction: (0.10, 0.20),
            bursts_per_segment: (2, 4),
            dip_level_v: 2.0,
            spike_rise_v: (20.0, 25.0),
            oscillation_amplitude_sd: (6.0, 10.0),
            oscillation_period_fraction: (0.10, 0.25),
        }
    }
}

impl BurstParams {
    fn validate(&self) -> Result<()> {
        let w = self.kind_weights;
        if w.iter().any(|x| !(x.is_finite() && *x >= 0.0)) || w.iter().sum::<f64>() <= 0.0 {
            return Err(invalid("burst kind weights must be non-negative and not all zero"));
        }
        let ranges = [
            self.duration_fraction,
            self.spike_rise_v,
            self.oscillation_amplitude_sd,
            self.oscillation_period_fraction,
        ];
        if ranges.iter().any(|(lo, hi)| !(lo.is_finite() && hi.is_finite() && lo <= hi)) {
            return Err(invalid("burst parameter ranges must be finite with lo <= hi"));
        }
        let (blo, bhi) = self.bursts_per_segment;
        if blo == 0 || blo > bhi {
            return Err(invalid("bursts per segment must be a range starting at 1 or more"));
        }
        let (lo, hi) = self.duration_fraction;
        if lo <= 0.0 || hi > 1.0 {
            return Err(invalid("burst duration fraction must lie in (0, 1]"));
        }
        if self.oscillation_period_fraction.0 <= 0.0 {
            return Err(invalid("oscillation period must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WelderProfile {
    pub welder_id: String,
    /// Probability that a segment contains an error burst.
    pub error_rate: f64,
    pub base_voltage_v: f64,
    pub noise_sd_v: f64,
    pub seed: u64,
    #[serde(default)]
    pub bursts: BurstParams,
}

impl WelderProfile {
    pub fn new(welder_id: impl Into<String>, error_rate: f64, seed: u64) -> Self {
        Self {
            welder_id: welder_id.into(),
            error_rate,
            base_voltage_v: 25.0,
            noise_sd_v: 1.5,
            seed,
            bursts: BurstParams::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.error_rate) {
            return Err(invalid(format!("error rate {} outside [0, 1]", self.error_rate)));
        }
        if !(self.noise_sd_v.is_finite() && self.noise_sd_v >= 0.0) {
            return Err(invalid("noise sd must be non-negative"));
        }
        if !(self.base_voltage_v.is_finite() && self.base_voltage_v > 0.0) {
            return Err(invalid("base voltage must be positive"));
        }
        if self.welder_id.is_empty() || self.welder_id.contains(|c: char| c.is_whitespace() || c == ',' || c == ':') {
            return Err(invalid(format!("welder id {:?} is not a plain token", self.welder_id)));
        }
        self.bursts.validate()
    }
}

/// Per-segment truth: `true` for a steady (burst-free) segment.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub labels: Vec<bool>,
    pub bursts: Vec<Option<BurstKind>>,
}

impl GroundTruth {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// SplitMix64 finalizer used to derive independent per-trial seeds.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn quantize(v: f64) -> f64 {
    (v * QUANTUM_PER_VOLT).round() / QUANTUM_PER_VOLT
}

fn uniform(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..hi)
    }
}

fn pick_kind(rng: &mut ChaCha8Rng, weights: [f64; 3]) -> BurstKind {
    let total: f64 = weights.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (w, kind) in weights.iter().zip([BurstKind::Dip, BurstKind::Spike, BurstKind::Oscillation]) {
        if u < *w {
            return kind;
        }
        u -= w;
    }
    BurstKind::Oscillation
}

fn inject_burst(rng: &mut ChaCha8Rng, seg: &mut [f64], kind: BurstKind, profile: &WelderProfile) {
    let p = &profile.bursts;
    let n = seg.len();
    let len = ((uniform(rng, p.duration_fraction) * n as f64).round() as usize).clamp(1, n);
    let start = rng.random_range(0..=n - len);
    let burst = &mut seg[start..start + len];
    match kind {
        BurstKind::Dip => {
            // the collapsed arc keeps a fraction of the background fluctuation
            for v in burst.iter_mut() {
                *v = p.dip_level_v + 0.2 * (*v - profile.base_voltage_v);
            }
        }
        BurstKind::Spike => {
            let rise = uniform(rng, p.spike_rise_v);
            burst.iter_mut().for_each(|v| *v += rise);
        }
        BurstKind::Oscillation => {
            let amp = uniform(rng, p.oscillation_amplitude_sd) * profile.noise_sd_v;
            let period = (uniform(rng, p.oscillation_period_fraction) * n as f64).max(2.0);
            let phase = rng.random::<f64>() * std::f64::consts::TAU;
            for (t, v) in burst.iter_mut().enumerate() {
                *v += amp * (std::f64::consts::TAU * t as f64 / period + phase).sin();
            }
        }
    }
}

/// Generates one trial of `n_segments` segments, each independently
/// containing a burst with probability `profile.error_rate`.
pub fn generate_trial(
    profile: &WelderProfile,
    n_segments: usize,
    segment_len: usize,
) -> Result<(RawSeries, GroundTruth)> {
    generate_trial_with_id(profile, SourceId::new(profile.welder_id.clone(), None), n_segments, segment_len)
}

fn generate_trial_with_id(
    profile: &WelderProfile,
    source: SourceId,
    n_segments: usize,
    segment_len: usize,
) -> Result<(RawSeries, GroundTruth)> {
    profile.validate()?;
    if n_segments == 0 || segment_len == 0 {
        return Err(invalid("a trial needs at least one non-empty segment"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(profile.seed);
    let mut samples = Vec::with_capacity(n_segments * segment_len);
    let mut labels = Vec::with_capacity(n_segments);
    let mut bursts = Vec::with_capacity(n_segments);
    for _ in 0..n_segments {
        let burst = (rng.random::<f64>() < profile.error_rate)
            .then(|| pick_kind(&mut rng, profile.bursts.kind_weights));
        let start = samples.len();
        if profile.noise_sd_v == 0.0 {
            samples.resize(start + segment_len, profile.base_voltage_v);
        } else {
            samples.extend((0..segment_len).map(|_| {
                let z: f64 = rng.sample(StandardNormal);
                profile.base_voltage_v + profile.noise_sd_v * z
            }));
        }
        if let Some(kind) = burst {
            let (lo, hi) = profile.bursts.bursts_per_segment;
            let count = if lo == hi { lo } else { rng.random_range(lo..=hi) };
            for _ in 0..count {
                inject_burst(&mut rng, &mut samples[start..], kind, profile);
            }
        }
        labels.push(burst.is_none());
        bursts.push(burst);
    }
    samples.iter_mut().for_each(|v| *v = quantize(*v));
    let series = RawSeries::new(samples, DEFAULT_SAMPLE_RATE_HZ, source)?;
    Ok((series, GroundTruth { labels, bursts }))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusTrial {
    pub welder_id: String,
    pub trial: u32,
    pub series: RawSeries,
    pub truth: GroundTruth,
}

/// Shape of a corpus: how many trials per welder and how each trial is cut.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusShape {
    pub trials_per_welder: u32,
    pub n_segments: usize,
    pub segment_len: usize,
}

impl Default for CorpusShape {
    fn default() -> Self {
        Self {
            trials_per_welder: 3,
            n_segments: 17,
            segment_len: 100_000,
        }
    }
}

/// Generates a single corpus trial; the trial seed is derived from the
/// welder seed and the trial index.
pub fn generate_corpus_trial(profile: &WelderProfile, trial: u32, shape: &CorpusShape) -> Result<CorpusTrial> {
    let mut p = profile.clone();
    p.seed = derive_seed(profile.seed, u64::from(trial));
    let source = SourceId::new(profile.welder_id.clone(), Some(trial));
    let (series, truth) = generate_trial_with_id(&p, source, shape.n_segments, shape.segment_len)?;
    Ok(CorpusTrial {
        welder_id: profile.welder_id.clone(),
        trial,
        series,
        truth,
    })
}

/// One trial per (profile, trial index), in profile-major order.
pub fn generate_corpus(profiles: &[WelderProfile], shape: &CorpusShape) -> Result<Vec<CorpusTrial>> {
    if profiles.is_empty() {
        return Err(WeldError::EmptyInput("no welder profiles".into()));
    }
    if shape.trials_per_welder == 0 {
        return Err(invalid("trials per welder must be positive"));
    }
    let mut out = Vec::with_capacity(profiles.len() * shape.trials_per_welder as usize);
    for p in profiles {
        for t in 0..shape.trials_per_welder {
            out.push(generate_corpus_trial(p, t, shape)?);
        }
    }
    Ok(out)
}

/// Arc voltages of the two machine settings in the default roster.
pub const DEFAULT_OPERATING_VOLTAGES: [f64; 2] = [22.0, 28.0];

/// Default roster: welder ids `W01..`, error rates drawn uniformly from
/// [0.05, 0.45), each welder at one of [`DEFAULT_OPERATING_VOLTAGES`] with
/// equal odds, seeds derived from `seed`.
pub fn default_profiles(n_welders: usize, seed: u64) -> Vec<WelderProfile> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n_welders)
        .map(|i| {
            let rate = rng.random_range(0.05..0.45);
            let mut p = WelderProfile::new(format!("W{:02}", i + 1), rate, derive_seed(seed, 1000 + i as u64));
            p.base_voltage_v = DEFAULT_OPERATING_VOLTAGES[usize::from(rng.random_bool(0.5))];
            p
        })
        .collect()
}

/// Generates and preprocesses a corpus without holding every raw series in
/// memory at once. Trials are spread over the available cores; the output
/// order (and content) does not depend on the thread count.
pub fn corpus_features(
    profiles: &[WelderProfile],
    shape: &CorpusShape,
    config: &PreprocessConfig,
) -> Result<(Vec<FeatureVector>, Vec<bool>)> {
    if profiles.is_empty() {
        return Err(WeldError::EmptyInput("no welder profiles".into()));
    }
    config.validate()?;
    let jobs: Vec<(&WelderProfile, u32)> = profiles
        .iter()
        .flat_map(|p| (0..shape.trials_per_welder).map(move |t| (p, t)))
        .collect();
    let workers = thread::available_parallelism().map_or(1, |n| n.get()).min(jobs.len().max(1));
    let chunk = jobs.len().div_ceil(workers).max(1);
    let results: Vec<Result<Vec<(Vec<FeatureVector>, Vec<bool>)>>> = thread::scope(|s| {
        let handles: Vec<_> = jobs
            .chunks(chunk)
            .map(|batch| {
                s.spawn(move || {
                    batch
                        .iter()
                        .map(|(p, t)| {
                            let trial = generate_corpus_trial(p, *t, shape)?;
                            let fv = preprocess_series(&trial.series, config)?;
                            let n = fv.len();
                            Ok((fv, trial.truth.labels[..n].to_vec()))
                        })
                        .collect()
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("corpus worker panicked")).collect()
    });
    let mut features = Vec::new();
    let mut truth = Vec::new();
    for batch in results {
        for (fv, labels) in batch? {
            features.extend(fv);
            truth.extend(labels);
        }
    }
    Ok((features, truth))
}
