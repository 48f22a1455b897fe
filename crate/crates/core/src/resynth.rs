//! Weighted overlap-add inversion of an adapted analysis.
//!
//! Every frame is inverse transformed, multiplied by its own window and
//! accumulated; the sum is divided by the pointwise sum of squared windows
//! over all atoms, whichever window produced them. For unmodified
//! coefficients this is exact. For modified ones it returns the real signal
//! whose analysis is closest in the least-squares sense.

use std::ops::Range;

use rayon::prelude::*;

use crate::adaptive::AdaptiveSpectrogram;
use crate::error::{invalid, Error, Result};
use crate::fft::{Complex64, Dft};
use crate::signal::{Signal, Window};

/// Denominator values at or below this are treated as uncovered.
pub const DENOMINATOR_FLOOR: f64 = 1e-8;

/// One analysis atom: a window placed at `start`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Atom {
    pub start: usize,
    pub window_index: usize,
    pub hop: usize,
}

/// The time-sorted atoms left after selection, with their windows.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedFrame {
    atoms: Vec<Atom>,
    windows: Vec<Window>,
    signal_len: usize,
}

impl ReducedFrame {
    pub fn new(atoms: Vec<Atom>, windows: Vec<Window>, signal_len: usize) -> Result<Self> {
        if atoms.windows(2).any(|w| w[0].start > w[1].start) {
            return Err(invalid("atoms must be sorted by start"));
        }
        for a in &atoms {
            let w = windows.get(a.window_index).ok_or_else(|| {
                invalid(format!("atom refers to missing window {}", a.window_index))
            })?;
            if a.start + w.len() > signal_len {
                return Err(invalid(format!(
                    "atom at {} with {} taps overruns {signal_len} samples",
                    a.start,
                    w.len()
                )));
            }
        }
        Ok(Self {
            atoms,
            windows,
            signal_len,
        })
    }

    pub fn from_analysis(analysis: &AdaptiveSpectrogram) -> Self {
        let mut atoms: Vec<Atom> = analysis
            .slices
            .iter()
            .flat_map(|s| {
                s.frame_starts.iter().map(|&start| Atom {
                    start,
                    window_index: s.window_index,
                    hop: s.lattice.hop,
                })
            })
            .collect();
        // frames of adjacent slices may interleave
        atoms.sort_by_key(|a| a.start);
        Self {
            atoms,
            windows: analysis.bank.iter().map(|e| e.window.clone()).collect(),
            signal_len: analysis.signal_len,
        }
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn signal_len(&self) -> usize {
        self.signal_len
    }
}

/// Pointwise sum of squared windows of every atom, over `span`.
pub fn denominator_profile(reduced: &ReducedFrame, span: Range<usize>) -> Vec<f64> {
    let mut den = vec![0.0; span.len()];
    for a in &reduced.atoms {
        let taps = reduced.windows[a.window_index].taps();
        let lo = a.start.max(span.start);
        let hi = (a.start + taps.len()).min(span.end);
        for t in lo..hi {
            let h = taps[t - a.start];
            den[t - span.start] += h * h;
        }
    }
    den
}

/// Per-slice real gains, laid out like the slice coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralMask {
    gains: Vec<Vec<f64>>,
}

impl SpectralMask {
    pub fn ones(analysis: &AdaptiveSpectrogram) -> Self {
        Self {
            gains: analysis
                .slices
                .iter()
                .map(|s| vec![1.0; s.coeffs.len()])
                .collect(),
        }
    }

    /// Gain from `f(frame_start, frequency_hz)`; bins above Nyquist mirror
    /// the positive frequencies so a symmetric mask keeps signals real.
    pub fn from_fn(analysis: &AdaptiveSpectrogram, f: impl Fn(usize, f64) -> f64) -> Self {
        let fft = analysis.fft_size();
        let bin_hz = analysis.sample_rate / fft as f64;
        let gains = analysis
            .slices
            .iter()
            .map(|s| {
                s.frame_starts
                    .iter()
                    .flat_map(|&start| {
                        let f = &f;
                        (0..fft).map(move |k| f(start, k.min(fft - k) as f64 * bin_hz))
                    })
                    .collect()
            })
            .collect();
        Self { gains }
    }

    pub fn new(gains: Vec<Vec<f64>>) -> Result<Self> {
        if gains.iter().flatten().any(|g| !g.is_finite()) {
            return Err(invalid("mask gains must be finite"));
        }
        Ok(Self { gains })
    }
}

pub fn apply_mask(
    analysis: &AdaptiveSpectrogram,
    mask: &SpectralMask,
) -> Result<AdaptiveSpectrogram> {
    if mask.gains.len() != analysis.slices.len()
        || mask
            .gains
            .iter()
            .zip(&analysis.slices)
            .any(|(g, s)| g.len() != s.coeffs.len())
    {
        return Err(invalid("mask shape does not match the analysis"));
    }
    let mut out = analysis.clone();
    for (slice, gains) in out.slices.iter_mut().zip(&mask.gains) {
        for (c, g) in slice.coeffs.iter_mut().zip(gains) {
            *c *= *g;
        }
    }
    Ok(out)
}

/// Samples within this distance of either end are not required to be
/// covered by the frame.
pub fn edge_margin(analysis: &AdaptiveSpectrogram) -> usize {
    analysis
        .bank
        .iter()
        .map(|e| e.window.len())
        .max()
        .unwrap_or(0)
}

pub fn reconstruct(analysis: &AdaptiveSpectrogram) -> Result<Signal> {
    let len = analysis.signal_len;
    let fft = analysis.fft_size();
    let dft = Dft::new(fft)?;
    let reduced = ReducedFrame::from_analysis(analysis);
    let den = denominator_profile(&reduced, 0..len);

    // (start, windowed segment) for every frame, in parallel
    let frames: Vec<(usize, Vec<f64>)> = analysis
        .slices
        .par_iter()
        .flat_map_iter(|s| {
            let dft = &dft;
            let taps = analysis.window(s.window_index).taps();
            s.frame_starts.iter().enumerate().map(move |(n, &start)| {
                let mut buf: Vec<Complex64> = s.frame(n).to_vec();
                dft.inverse_in_place(&mut buf);
                let seg = buf.iter().zip(taps).map(|(y, h)| h * y.re).collect();
                (start, seg)
            })
        })
        .collect();

    // sequential fold in slice/frame order
    let mut num = vec![0.0; len];
    for (start, seg) in &frames {
        for (acc, v) in num[*start..*start + seg.len()].iter_mut().zip(seg) {
            *acc += v;
        }
    }

    let margin = edge_margin(analysis);
    let interior = margin..len.saturating_sub(margin);
    let mut out = vec![0.0; len];
    for (t, (o, (n, d))) in out.iter_mut().zip(num.iter().zip(&den)).enumerate() {
        if *d > DENOMINATOR_FLOOR {
            *o = n / d;
        } else if interior.contains(&t) {
            return Err(Error::NotAFrame {
                sample: t,
                value: *d,
            });
        }
    }
    Signal::new(out, analysis.sample_rate)
}

/// Relative L2 error between `a` and `b` over `range`.
pub fn relative_l2_error(a: &[f64], b: &[f64], range: Range<usize>) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for t in range {
        num += (a[t] - b[t]).powi(2);
        den += a[t] * a[t];
    }
    if den == 0.0 {
        if num == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        (num / den).sqrt()
    }
}

/// Relative L2 error of `reconstructed` against `original`, ignoring
/// [`edge_margin`] samples at each end.
pub fn interior_error(
    original: &Signal,
    reconstructed: &Signal,
    analysis: &AdaptiveSpectrogram,
) -> f64 {
    let len = original.num_samples();
    let lo = edge_margin(analysis).min(len);
    let hi = len.saturating_sub(lo).max(lo);
    relative_l2_error(original.samples(), reconstructed.samples(), lo..hi)
}
