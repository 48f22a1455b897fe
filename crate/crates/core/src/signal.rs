//! Signal containers, Hanning windows and their scaled versions, and
//! deterministic synthetic test signals.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, Result};

/// A finite, mono, real-valued sample sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct Signal {
    samples: Vec<f64>,
    sample_rate: f64,
}

impl Signal {
    pub fn new(samples: Vec<f64>, sample_rate: f64) -> Result<Self> {
        if samples.is_empty() {
            return Err(invalid("signal must contain at least one sample"));
        }
        if !(sample_rate.is_finite() && sample_rate > 0.0) {
            return Err(invalid(format!(
                "sample rate must be positive, got {sample_rate}"
            )));
        }
        if let Some(k) = samples.iter().position(|x| !x.is_finite()) {
            return Err(invalid(format!("sample {k} is not finite")));
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn sample_rate(&self) -> f64 {
        self.sample_rate
    }

    pub fn num_samples(&self) -> usize {
        self.samples.len()
    }

    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate
    }

    /// Returns a copy with every sample multiplied by `gain`.
    pub fn scaled(&self, gain: f64) -> Result<Self> {
        Self::new(
            self.samples.iter().map(|x| x * gain).collect(),
            self.sample_rate,
        )
    }

    pub fn energy(&self) -> f64 {
        self.samples.iter().map(|x| x * x).sum()
    }
}

/// A sampled Hanning window, possibly scaled from a base length.
///
/// `scale` is the factor applied to `origin_length`; the tap count is
/// `round(scale * origin_length)` and every tap carries the `1/sqrt(scale)`
/// amplitude normalization.
#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    taps: Vec<f64>,
    scale: f64,
    origin_length: usize,
}

impl Window {
    pub fn taps(&self) -> &[f64] {
        &self.taps
    }

    pub fn len(&self) -> usize {
        self.taps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.taps.is_empty()
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn origin_length(&self) -> usize {
        self.origin_length
    }

    /// Sum of squared taps.
    pub fn energy(&self) -> f64 {
        self.taps.iter().map(|t| t * t).sum()
    }
}

/// Periodic Hanning profile `0.5 (1 - cos(2 pi k / n))`, mirrored so that
/// `taps[k] == taps[n - k]` holds bit-for-bit.
fn hanning_taps(n: usize, gain: f64) -> Vec<f64> {
    let mut taps = vec![0.0; n];
    for (k, t) in taps.iter_mut().enumerate().take(n / 2 + 1) {
        *t = 0.5 * (1.0 - (2.0 * PI * k as f64 / n as f64).cos()) * gain;
    }
    for k in n / 2 + 1..n {
        taps[k] = taps[n - k];
    }
    taps
}

/// Periodic (DFT-even) Hanning window of `length` taps.
pub fn make_hanning(length: usize) -> Result<Window> {
    if length == 0 {
        return Err(invalid("window length must be at least 1"));
    }
    Ok(Window {
        taps: hanning_taps(length, 1.0),
        scale: 1.0,
        origin_length: length,
    })
}

/// Dilates a Hanning window by `l`: the continuous profile is re-sampled on
/// `round(l * N)` taps and multiplied by `1/sqrt(l)`.
pub fn scale_window(base: &Window, l: f64) -> Result<Window> {
    if !(l.is_finite() && l > 0.0) {
        return Err(invalid(format!("scale factor must be positive, got {l}")));
    }
    let scale = base.scale * l;
    let length = (scale * base.origin_length as f64).round() as usize;
    if length == 0 {
        return Err(invalid(format!(
            "scale {scale} of a {}-tap window leaves no taps",
            base.origin_length
        )));
    }
    if l == 1.0 {
        return Ok(base.clone());
    }
    let gain = 1.0 / scale.sqrt();
    Ok(Window {
        taps: hanning_taps(length, gain),
        scale,
        origin_length: base.origin_length,
    })
}

/// Strictly increasing set of positive scale factors.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaleSet {
    scales: Vec<f64>,
}

impl ScaleSet {
    pub fn new(scales: Vec<f64>) -> Result<Self> {
        if scales.is_empty() {
            return Err(invalid("scale set must not be empty"));
        }
        if scales.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(invalid("scales must be positive and finite"));
        }
        if scales.windows(2).any(|w| w[0] >= w[1]) {
            return Err(invalid("scales must be strictly increasing"));
        }
        Ok(Self { scales })
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.scales
    }

    pub fn len(&self) -> usize {
        self.scales.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scales.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SignalKind {
    Sine,
    FmSine,
    Impulse,
    PercussiveHarmonic,
}

impl SignalKind {
    pub const ALL: [SignalKind; 4] = [
        SignalKind::Sine,
        SignalKind::FmSine,
        SignalKind::Impulse,
        SignalKind::PercussiveHarmonic,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SignalKind::Sine => "sine",
            SignalKind::FmSine => "fm_sine",
            SignalKind::Impulse => "impulse",
            SignalKind::PercussiveHarmonic => "percussive_harmonic",
        }
    }

    /// Parameters used by the CLI demo when none are given.
    pub fn default_params(self) -> SynthParams {
        let p = SynthParams::new();
        match self {
            SignalKind::Sine => p.with("freq", 1000.0),
            SignalKind::FmSine => p
                .with("carrier", 4000.0)
                .with("mod_rate", 2.0)
                .with("mod_depth", 2000.0),
            SignalKind::Impulse => p.with("position", 22050.0),
            SignalKind::PercussiveHarmonic => p
                .with("fundamental", 493.88)
                .with("decay_rate", 6.0)
                .with("noise_burst_len", 256.0),
        }
    }
}

impl fmt::Display for SignalKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SignalKind {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        SignalKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| invalid(format!("unknown signal kind '{s}'")))
    }
}

/// Named real parameters for [`synth_test_signal`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SynthParams(BTreeMap<String, f64>);

impl SynthParams {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, name: &str, value: f64) -> Self {
        self.0.insert(name.to_owned(), value);
        self
    }

    pub fn set(&mut self, name: &str, value: f64) {
        self.0.insert(name.to_owned(), value);
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.0.get(name).copied()
    }

    fn require(&self, kind: SignalKind, name: &str) -> Result<f64> {
        let v = self
            .get(name)
            .ok_or_else(|| invalid(format!("{kind} signal requires parameter '{name}'")))?;
        if !v.is_finite() {
            return Err(invalid(format!("parameter '{name}' must be finite")));
        }
        Ok(v)
    }

    fn optional(&self, name: &str, default: f64) -> Result<f64> {
        match self.get(name) {
            Some(v) if !v.is_finite() => Err(invalid(format!("parameter '{name}' must be finite"))),
            Some(v) => Ok(v),
            None => Ok(default),
        }
    }
}

/// Number of decaying partials in the percussive stand-in signal.
pub const PERCUSSIVE_PARTIALS: usize = 4;

/// Synthesizes a named test signal.
///
/// | kind | required | optional |
/// |---|---|---|
/// | `sine` | `freq` | `amplitude` (1) |
/// | `fm_sine` | `carrier`, `mod_rate`, `mod_depth` | `amplitude` (1) |
/// | `impulse` | `position` (sample index) | `amplitude` (1) |
/// | `percussive_harmonic` | `fundamental`, `decay_rate`, `noise_burst_len` | `onset` (s), `noise_gain` (4) |
///
/// The FM signal has instantaneous frequency
/// `carrier + mod_depth * sin(2 pi mod_rate t)`. The percussive signal is
/// silent until `onset`, then holds four partials `k * fundamental` with
/// amplitude `1/k` decaying as `exp(-k * decay_rate * t)`, plus a uniform
/// noise burst of `noise_burst_len` samples drawn from `seed`.
pub fn synth_test_signal(
    kind: SignalKind,
    params: &SynthParams,
    duration: f64,
    sample_rate: f64,
    seed: u64,
) -> Result<Signal> {
    if !(duration.is_finite() && duration > 0.0) {
        return Err(invalid(format!(
            "duration must be positive, got {duration}"
        )));
    }
    if !(sample_rate.is_finite() && sample_rate > 0.0) {
        return Err(invalid(format!(
            "sample rate must be positive, got {sample_rate}"
        )));
    }
    let len = (duration * sample_rate).round() as usize;
    if len == 0 {
        return Err(invalid("duration is shorter than one sample"));
    }
    let nyquist = sample_rate / 2.0;
    let samples = match kind {
        SignalKind::Sine => {
            let freq = params.require(kind, "freq")?;
            let amp = params.optional("amplitude", 1.0)?;
            if !(0.0..nyquist).contains(&freq) {
                return Err(invalid(format!("freq {freq} outside [0, {nyquist})")));
            }
            (0..len)
                .map(|k| amp * (2.0 * PI * freq * k as f64 / sample_rate).sin())
                .collect()
        }
        SignalKind::FmSine => {
            let carrier = params.require(kind, "carrier")?;
            let rate = params.require(kind, "mod_rate")?;
            let depth = params.require(kind, "mod_depth")?;
            let amp = params.optional("amplitude", 1.0)?;
            if rate <= 0.0 || depth < 0.0 || carrier - depth < 0.0 || carrier + depth >= nyquist {
                return Err(invalid(format!(
                    "FM sweep {}..{} Hz (rate {rate}) must lie in [0, {nyquist})",
                    carrier - depth,
                    carrier + depth
                )));
            }
            (0..len)
                .map(|k| {
                    let t = k as f64 / sample_rate;
                    let phase =
                        2.0 * PI * carrier * t + depth / rate * (1.0 - (2.0 * PI * rate * t).cos());
                    amp * phase.sin()
                })
                .collect()
        }
        SignalKind::Impulse => {
            let pos = params.require(kind, "position")?;
            let amp = params.optional("amplitude", 1.0)?;
            if pos < 0.0 || pos.fract() != 0.0 || pos as usize >= len {
                return Err(invalid(format!(
                    "impulse position {pos} is not a sample index below {len}"
                )));
            }
            let mut s = vec![0.0; len];
            s[pos as usize] = amp;
            s
        }
        SignalKind::PercussiveHarmonic => {
            let f0 = params.require(kind, "fundamental")?;
            let decay = params.require(kind, "decay_rate")?;
            let burst = params.require(kind, "noise_burst_len")?;
            let onset = params.optional("onset", (duration / 8.0).min(0.25))?;
            let gain = params.optional("noise_gain", 4.0)?;
            if f0 <= 0.0 || PERCUSSIVE_PARTIALS as f64 * f0 >= nyquist {
                return Err(invalid(format!(
                    "fundamental {f0} Hz puts partials above Nyquist"
                )));
            }
            if decay < 0.0 || burst < 0.0 || burst.fract() != 0.0 || gain < 0.0 {
                return Err(invalid(
                    "decay_rate, noise_gain must be >= 0 and noise_burst_len a sample count",
                ));
            }
            let onset_idx = (onset * sample_rate).round();
            if onset < 0.0 || onset_idx as usize >= len {
                return Err(invalid(format!("onset {onset} s lies outside the signal")));
            }
            let onset_idx = onset_idx as usize;
            let mut s = vec![0.0; len];
            for (i, x) in s.iter_mut().enumerate().skip(onset_idx) {
                let t = (i - onset_idx) as f64 / sample_rate;
                *x = (1..=PERCUSSIVE_PARTIALS)
                    .map(|k| {
                        let k = k as f64;
                        (-k * decay * t).exp() * (2.0 * PI * k * f0 * t).sin() / k
                    })
                    .sum();
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let end = (onset_idx + burst as usize).min(len);
            for x in &mut s[onset_idx..end] {
                *x += gain * rng.random_range(-1.0..1.0);
            }
            s
        }
    };
    Signal::new(samples, sample_rate)
}
