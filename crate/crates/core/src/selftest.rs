//! Built-in acceptance checks, shared by the `selftest` subcommand and the
//! acceptance test target.

use std::f64::consts::PI;
use std::fmt;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::adaptive::{adapt, plan, MultiFrameConfig};
use crate::entropy::{
    dm_family, normalize_region, renyi_entropy, ProbabilityDensity, Region, RenyiOrder,
};
use crate::error::{Error, Result};
use crate::resynth::{interior_error, reconstruct};
use crate::signal::{make_hanning, scale_window, synth_test_signal, Signal, SignalKind, Window};
use crate::stft::{frame_bounds_diag, spectrogram, stft, Lattice};

pub const SAMPLE_RATE: f64 = 44100.0;
pub const NUM_CRITERIA: u8 = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct CriterionResult {
    pub id: u8,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl fmt::Display for CriterionResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "criterion {:>2} [{}] {}: {}",
            self.id,
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.detail
        )
    }
}

pub fn criterion_name(id: u8) -> &'static str {
    match id {
        1 => "perfect reconstruction",
        2 => "entropy scaling law",
        3 => "alpha monotonicity",
        4 => "shannon limit",
        5 => "D_M flatness study",
        6 => "hop invariance",
        7 => "fft-size invariance",
        8 => "percussive adaptation",
        9 => "fm adaptation",
        10 => "frame diagnostics",
        _ => "unknown",
    }
}

/// Runs one criterion; internal errors count as failures.
pub fn run_criterion(id: u8) -> CriterionResult {
    let outcome = match id {
        1 => perfect_reconstruction(),
        2 => scaling_law(),
        3 => alpha_monotonicity(),
        4 => shannon_limit(),
        5 => dm_study(),
        6 => hop_invariance(),
        7 => fft_invariance(),
        8 => percussive_adaptation(),
        9 => fm_adaptation(),
        10 => frame_diagnostics(),
        _ => Err(crate::error::invalid(format!("no criterion {id}"))),
    };
    let (passed, detail) = outcome.unwrap_or_else(|e| (false, format!("error: {e}")));
    CriterionResult {
        id,
        name: criterion_name(id),
        passed,
        detail,
    }
}

pub fn run_all() -> Vec<CriterionResult> {
    (1..=NUM_CRITERIA).map(run_criterion).collect()
}

type Outcome = Result<(bool, String)>;

fn entropy_of(
    signal: &Signal,
    window: &Window,
    lattice: Lattice,
    frames: Option<usize>,
    alpha: f64,
) -> Result<f64> {
    let tile = spectrogram(&stft(signal, window, lattice)?);
    let mut region = Region::whole(&tile);
    if let Some(n) = frames {
        if n > tile.num_frames() {
            return Err(crate::error::invalid(format!(
                "signal too short for {n} frames"
            )));
        }
        region.frames = 0..n;
    }
    let d = normalize_region(&tile, &region)?;
    Ok(renyi_entropy(&d, RenyiOrder::new(alpha)?, true))
}

fn fm_signal(duration: f64) -> Result<Signal> {
    synth_test_signal(
        SignalKind::FmSine,
        &SignalKind::FmSine.default_params(),
        duration,
        SAMPLE_RATE,
        0,
    )
}

fn perfect_reconstruction() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let samples: Vec<f64> = (0..2 * SAMPLE_RATE as usize)
        .map(|_| rng.random_range(-1.0..1.0))
        .collect();
    let x = Signal::new(samples, SAMPLE_RATE)?;
    let started = Instant::now();
    let analysis = adapt(&x, &MultiFrameConfig::default())?;
    let y = reconstruct(&analysis)?;
    let elapsed = started.elapsed();
    let err = interior_error(&x, &y, &analysis);
    Ok((
        err < 1e-10 && elapsed < Duration::from_secs(10),
        format!("interior relative L2 error {err:.3e} (< 1e-10), analysis + resynthesis {:.2} s (< 10 s)", elapsed.as_secs_f64()),
    ))
}

fn scaling_law() -> Outcome {
    // bin-centered near 1 kHz for a 1024-point grid; equal frame counts per
    // scale and a transform twice the largest window
    let freq = 23.0 * SAMPLE_RATE / 1024.0;
    let x = synth_test_signal(
        SignalKind::Sine,
        &crate::signal::SynthParams::new().with("freq", freq),
        1.0,
        SAMPLE_RATE,
        0,
    )?;
    let base = make_hanning(1024)?;
    let lattice = Lattice::new(256, 8192)?;
    let mut worst: f64 = 0.0;
    for alpha in [0.5, 0.7, 2.0, 5.0] {
        let h1 = entropy_of(&x, &base, lattice, Some(32), alpha)?;
        for l in [2.0, 4.0] {
            let hl = entropy_of(&x, &scale_window(&base, l)?, lattice, Some(32), alpha)?;
            worst = worst.max((hl - h1 + f64::log2(l)).abs());
        }
    }
    Ok((
        worst <= 0.1,
        format!("max |H(l) - H(1) + log2 l| = {worst:.4} bit (<= 0.1)"),
    ))
}

const ALPHA_GRID: [f64; 9] = [0.1, 0.3, 0.7, 1.0, 2.0, 3.0, 5.0, 10.0, 30.0];

/// 100 seeded densities for each length 10, 100 and 4096, with a mix of
/// flat, peaky and sparse shapes.
pub fn random_densities() -> Vec<ProbabilityDensity> {
    let mut out = Vec::new();
    for len in [10usize, 100, 4096] {
        for seed in 0..100u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed * 7919 + len as u64);
            let power = [1.0, 3.0, 8.0][seed as usize % 3];
            let mut w: Vec<f64> = (0..len)
                .map(|_| {
                    let u: f64 = rng.random();
                    if rng.random::<f64>() < 0.1 {
                        0.0
                    } else {
                        u.powf(power)
                    }
                })
                .collect();
            w[0] += 1e-3;
            out.push(ProbabilityDensity::from_weights(w, 1.0).expect("positive mass"));
        }
    }
    out
}

fn alpha_monotonicity() -> Outcome {
    let orders: Vec<RenyiOrder> = ALPHA_GRID
        .iter()
        .map(|&a| RenyiOrder::new(a))
        .collect::<Result<_>>()?;
    let mut worst = f64::NEG_INFINITY;
    let densities = random_densities();
    for d in &densities {
        let h: Vec<f64> = orders.iter().map(|&o| renyi_entropy(d, o, false)).collect();
        for pair in h.windows(2) {
            worst = worst.max(pair[1] - pair[0]);
        }
    }
    Ok((
        worst <= 1e-9,
        format!(
            "largest increase along the alpha grid {worst:.3e} (<= 1e-9) over {} densities",
            densities.len()
        ),
    ))
}

fn shannon_limit() -> Outcome {
    let mut worst: f64 = 0.0;
    for d in &random_densities() {
        let h1 = renyi_entropy(d, RenyiOrder::new(1.0)?, false);
        for a in [1.0 - 1e-4, 1.0 + 1e-4] {
            worst = worst.max((renyi_entropy(d, RenyiOrder::new(a)?, false) - h1).abs());
        }
    }
    Ok((
        worst < 1e-3,
        format!("max |H(1 +- 1e-4) - H(1)| = {worst:.3e} (< 1e-3)"),
    ))
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut r = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            r[k] = avg;
        }
        i = j + 1;
    }
    r
}

/// Spearman rank correlation, with average ranks for ties.
pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let (ra, rb) = (ranks(a), ranks(b));
    let n = ra.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let cov: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = ra.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = rb.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

fn dm_study() -> Outcome {
    let n = 100;
    let family: Vec<ProbabilityDensity> = (1..=n)
        .map(|m| dm_family(n, m, 2024))
        .collect::<Result<_>>()?;
    let h0_exact = family
        .iter()
        .all(|d| renyi_entropy(d, RenyiOrder::new(0.0).unwrap(), false) == (n as f64).log2());
    let ms: Vec<f64> = (1..=n).map(|m| m as f64).collect();
    let mut rhos = Vec::new();
    for alpha in [2.0, 5.0] {
        let h: Vec<f64> = family
            .iter()
            .map(|d| renyi_entropy(d, RenyiOrder::new(alpha).unwrap(), false))
            .collect();
        rhos.push(spearman(&ms, &h));
    }
    let passed = h0_exact && rhos.iter().all(|r| *r >= 0.95);
    Ok((
        passed,
        format!(
            "H0 == log2 100 for every M: {h0_exact}; Spearman(M, H) = {:.4} (alpha 2), {:.4} (alpha 5) (>= 0.95)",
            rhos[0], rhos[1]
        ),
    ))
}

fn spread(v: &[f64]) -> f64 {
    v.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
        - v.iter().cloned().fold(f64::INFINITY, f64::min)
}

fn hop_invariance() -> Outcome {
    let x = fm_signal(1.0)?;
    let w = make_hanning(1024)?;
    let h = [128, 256, 512]
        .iter()
        .map(|&hop| entropy_of(&x, &w, Lattice::new(hop, 1024)?, None, 0.7))
        .collect::<Result<Vec<f64>>>()?;
    let s = spread(&h);
    Ok((
        s < 0.05,
        format!(
            "H0.7 at hops 128/256/512 = {:.4}/{:.4}/{:.4}, spread {s:.4} (< 0.05)",
            h[0], h[1], h[2]
        ),
    ))
}

fn fft_invariance() -> Outcome {
    let x = fm_signal(1.0)?;
    let w = make_hanning(1024)?;
    let h = [1024, 2048, 4096]
        .iter()
        .map(|&fft| entropy_of(&x, &w, Lattice::new(256, fft)?, None, 0.7))
        .collect::<Result<Vec<f64>>>()?;
    let s = spread(&h);
    Ok((
        s < 0.1,
        format!(
            "H0.7 at fft 1024/2048/4096 = {:.4}/{:.4}/{:.4}, spread {s:.4} (< 0.1)",
            h[0], h[1], h[2]
        ),
    ))
}

fn percussive_adaptation() -> Outcome {
    let params = SignalKind::PercussiveHarmonic.default_params();
    let x = synth_test_signal(SignalKind::PercussiveHarmonic, &params, 2.0, SAMPLE_RATE, 1)?;
    let onset = (0.25 * SAMPLE_RATE).round() as usize;
    let burst = params.get("noise_burst_len").unwrap_or(0.0) as usize;
    let analysis = adapt(&x, &MultiFrameConfig::default())?;
    let track = &analysis.selection;
    let largest = track.window_lens.len() - 1;
    let onset_choice = track.segments[track.owner(onset)].choice;
    let decay: Vec<usize> = track
        .segments
        .iter()
        .filter(|s| s.range.start >= onset + burst)
        .map(|s| s.choice)
        .collect();
    let frac = decay.iter().filter(|&&c| c == largest).count() as f64 / decay.len().max(1) as f64;
    Ok((
        onset_choice == 0 && !decay.is_empty() && frac >= 0.8,
        format!(
            "onset segment picks {} samples (want {}); {:.0}% of {} decay segments pick {} (>= 80%)",
            track.window_lens[onset_choice],
            track.window_lens[0],
            100.0 * frac,
            decay.len(),
            track.window_lens[largest]
        ),
    ))
}

/// Lag of the first autocorrelation peak after the first zero crossing.
fn fundamental_lag(v: &[f64]) -> Option<usize> {
    let n = v.len();
    let mean = v.iter().sum::<f64>() / n as f64;
    let c: Vec<f64> = v.iter().map(|x| x - mean).collect();
    let r: Vec<f64> = (0..n / 2)
        .map(|k| {
            c[..n - k]
                .iter()
                .zip(&c[k..])
                .map(|(a, b)| a * b)
                .sum::<f64>()
                / n as f64
        })
        .collect();
    let zero = r.iter().position(|&x| x < 0.0)?;
    (zero..r.len().saturating_sub(1)).find(|&k| r[k] > 0.0 && r[k] >= r[k - 1] && r[k] >= r[k + 1])
}

fn fm_adaptation() -> Outcome {
    let params = SignalKind::FmSine.default_params();
    let rate = params.get("mod_rate").unwrap_or(2.0);
    let depth = params.get("mod_depth").unwrap_or(0.0);
    let x = fm_signal(2.0)?;
    let config = MultiFrameConfig {
        segment_overlap_frames: 3,
        ..MultiFrameConfig::default()
    };
    let analysis = adapt(&x, &config)?;
    let track = &analysis.selection;
    let segs = &track.segments;
    let step = segs[1].range.start - segs[0].range.start;
    let seg_len = segs[0].range.len();
    // regular grid only; the end-aligned segment breaks the spacing
    let grid: Vec<_> = segs.iter().filter(|s| s.range.start % step == 0).collect();
    let lens: Vec<f64> = grid
        .iter()
        .map(|s| track.window_lens[s.choice] as f64)
        .collect();
    let slope: Vec<f64> = grid
        .iter()
        .map(|s| {
            let t = (s.range.start + s.range.end) as f64 / 2.0 / SAMPLE_RATE;
            (2.0 * PI * rate * depth * (2.0 * PI * rate * t).cos()).abs()
        })
        .collect();
    let rho = spearman(&lens, &slope);
    // |df/dt| repeats twice per modulator cycle
    let expected = 0.5 / rate;
    let tolerance = seg_len as f64 / SAMPLE_RATE;
    let period = fundamental_lag(&lens).map(|k| (k * step) as f64 / SAMPLE_RATE);
    let period_ok = period.is_some_and(|p| (p - expected).abs() <= tolerance);
    Ok((
        period_ok && rho <= -0.5,
        format!(
            "selection period {} s vs |df/dt| period {expected} s (tolerance {tolerance:.4} s); Spearman(window, |df/dt|) = {rho:.3} (<= -0.5)",
            period.map_or_else(|| "none".to_string(), |p| format!("{p:.4}"))
        ),
    ))
}

fn frame_diagnostics() -> Outcome {
    let w = make_hanning(8)?;
    let tight = frame_bounds_diag(&w, 2)?;
    let half = frame_bounds_diag(&w, 4)?;
    let gap = frame_bounds_diag(&w, 8)?;
    let tight_ok = tight.lower == 1.5 && tight.upper == 1.5;
    let half_ok = (half.lower - 0.5).abs() <= 1e-12 && (half.upper - 1.0).abs() <= 1e-12;
    let config = MultiFrameConfig {
        min_len: 8,
        max_len: 8,
        num_windows: 1,
        overlap_ratio: 0.01,
        ..MultiFrameConfig::default()
    };
    let rejected = matches!(
        plan(&config, 64, SAMPLE_RATE),
        Err(Error::InfeasiblePlan { hop: 8, .. })
    );
    Ok((
        tight_ok && half_ok && gap.lower == 0.0 && rejected,
        format!(
            "hop 2 -> ({}, {}); hop 4 -> ({}, {}); hop 8 -> A = {}, plan rejected: {rejected}",
            tight.lower, tight.upper, half.lower, half.upper, gap.lower
        ),
    ))
}
