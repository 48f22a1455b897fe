//! Regular-lattice STFT, spectrograms and painless-case frame diagnostics.
//!
//! Frame `n` covers samples `[start + n*hop, start + n*hop + len)`, zero
//! padded to `fft_size`. Only full frames are analysed; nothing is padded
//! at the signal edges.

use std::ops::Range;

use rayon::prelude::*;

use crate::error::{invalid, Result};
use crate::fft::{Complex64, Dft};
use crate::signal::{Signal, Window};

/// Time step (`hop`, samples) and frequency step (`fft_size` bins) of a
/// Gabor lattice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Lattice {
    pub hop: usize,
    pub fft_size: usize,
}

impl Lattice {
    pub fn new(hop: usize, fft_size: usize) -> Result<Self> {
        if hop == 0 {
            return Err(invalid("hop must be at least 1"));
        }
        if fft_size == 0 {
            return Err(invalid("fft_size must be at least 1"));
        }
        Ok(Self { hop, fft_size })
    }

    /// Time-frequency area `a * b` of one lattice cell, in seconds times Hz.
    pub fn area_element(&self) -> f64 {
        self.hop as f64 / self.fft_size as f64
    }

    /// Frequency step in Hz.
    pub fn bin_width(&self, sample_rate: f64) -> f64 {
        sample_rate / self.fft_size as f64
    }
}

/// Complex STFT coefficients, frames × `fft_size` bins.
#[derive(Debug, Clone, PartialEq)]
pub struct StftMatrix {
    coeffs: Vec<Complex64>,
    num_frames: usize,
    lattice: Lattice,
    window_len: usize,
    start_sample: usize,
}

impl StftMatrix {
    pub fn num_frames(&self) -> usize {
        self.num_frames
    }

    pub fn lattice(&self) -> Lattice {
        self.lattice
    }

    pub fn window_len(&self) -> usize {
        self.window_len
    }

    pub fn start_sample(&self) -> usize {
        self.start_sample
    }

    /// First sample covered by frame `n`.
    pub fn frame_start(&self, n: usize) -> usize {
        self.start_sample + n * self.lattice.hop
    }

    pub fn frame(&self, n: usize) -> &[Complex64] {
        let f = self.lattice.fft_size;
        &self.coeffs[n * f..(n + 1) * f]
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }
}

/// DFTs of the windowed frames starting at each of `starts`, flattened
/// frame-major. Frames are independent, so they run in parallel.
pub(crate) fn frames_at(
    samples: &[f64],
    taps: &[f64],
    dft: &Dft,
    starts: &[usize],
) -> Vec<Complex64> {
    let fft_size = dft.len();
    let mut out = vec![Complex64::new(0.0, 0.0); starts.len() * fft_size];
    out.par_chunks_mut(fft_size)
        .zip(starts.par_iter())
        .for_each(|(buf, &start)| {
            let seg = &samples[start..start + taps.len()];
            for ((b, x), w) in buf.iter_mut().zip(seg).zip(taps) {
                *b = Complex64::new(x * w, 0.0);
            }
            dft.forward_in_place(buf);
        });
    out
}

pub(crate) fn check_window_fits(window_len: usize, lattice: Lattice) -> Result<()> {
    if lattice.fft_size < window_len {
        return Err(invalid(format!(
            "fft_size {} is shorter than the {window_len}-tap window",
            lattice.fft_size
        )));
    }
    Ok(())
}

pub fn stft(signal: &Signal, window: &Window, lattice: Lattice) -> Result<StftMatrix> {
    check_window_fits(window.len(), lattice)?;
    let len = signal.num_samples();
    if len < window.len() {
        return Err(invalid(format!(
            "signal of {len} samples is shorter than the {}-tap window",
            window.len()
        )));
    }
    let num_frames = (len - window.len()) / lattice.hop + 1;
    let starts: Vec<usize> = (0..num_frames).map(|n| n * lattice.hop).collect();
    let dft = Dft::new(lattice.fft_size)?;
    Ok(StftMatrix {
        coeffs: frames_at(signal.samples(), window.taps(), &dft, &starts),
        num_frames,
        lattice,
        window_len: window.len(),
        start_sample: 0,
    })
}

/// Power values on a lattice, frames × bins.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrogramTile {
    values: Vec<f64>,
    num_frames: usize,
    num_bins: usize,
    lattice: Lattice,
}

impl SpectrogramTile {
    /// Builds a tile from frame-major power values; `values.len()` must be a
    /// multiple of `lattice.fft_size`.
    pub fn new(values: Vec<f64>, lattice: Lattice) -> Result<Self> {
        let num_bins = lattice.fft_size;
        if values.is_empty() || !values.len().is_multiple_of(num_bins) {
            return Err(invalid(format!(
                "{} values do not form whole frames of {num_bins} bins",
                values.len()
            )));
        }
        if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(invalid(
                "spectrogram values must be finite and non-negative",
            ));
        }
        Ok(Self {
            num_frames: values.len() / num_bins,
            values,
            num_bins,
            lattice,
        })
    }

    pub(crate) fn from_coeffs(coeffs: &[Complex64], lattice: Lattice) -> Self {
        Self {
            values: coeffs.iter().map(|c| c.norm_sqr()).collect(),
            num_frames: coeffs.len() / lattice.fft_size,
            num_bins: lattice.fft_size,
            lattice,
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn num_frames(&self) -> usize {
        self.num_frames
    }

    pub fn num_bins(&self) -> usize {
        self.num_bins
    }

    pub fn lattice(&self) -> Lattice {
        self.lattice
    }

    pub fn area_element(&self) -> f64 {
        self.lattice.area_element()
    }

    pub fn get(&self, frame: usize, bin: usize) -> f64 {
        self.values[frame * self.num_bins + bin]
    }

    pub fn frame(&self, n: usize) -> &[f64] {
        &self.values[n * self.num_bins..(n + 1) * self.num_bins]
    }
}

pub fn spectrogram(stft: &StftMatrix) -> SpectrogramTile {
    SpectrogramTile::from_coeffs(&stft.coeffs, stft.lattice)
}

/// `s(t) = sum_n |g(t - n*hop)|^2` over the infinite lattice, for each `t`
/// in `span`. The `1/b` factor of the frame condition is omitted.
pub fn overlap_sum(window: &Window, hop: usize, span: Range<i64>) -> Result<Vec<f64>> {
    if hop == 0 {
        return Err(invalid("hop must be at least 1"));
    }
    let sq: Vec<f64> = window.taps().iter().map(|t| t * t).collect();
    let hop_i = hop as i64;
    Ok(span
        .map(|t| {
            let r = t.rem_euclid(hop_i) as usize;
            sq.iter().skip(r).step_by(hop).sum()
        })
        .collect())
}

/// Lower and upper bounds of the diagonal frame operator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameBounds {
    pub lower: f64,
    pub upper: f64,
}

impl FrameBounds {
    pub fn is_frame(&self) -> bool {
        self.lower > 0.0
    }

    pub fn is_tight(&self) -> bool {
        self.lower == self.upper
    }
}

/// Min and max of [`overlap_sum`] over one period. `lower > 0` certifies the
/// painless frame condition for this window and hop.
pub fn frame_bounds_diag(window: &Window, hop: usize) -> Result<FrameBounds> {
    let s = overlap_sum(window, hop, 0..hop as i64)?;
    let lower = s.iter().cloned().fold(f64::INFINITY, f64::min);
    let upper = s.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    Ok(FrameBounds { lower, upper })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::make_hanning;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn sig(x: Vec<f64>) -> Signal {
        Signal::new(x, 44100.0).unwrap()
    }

    #[test]
    fn impulse_is_flat_across_frequency() {
        let (n, hop, p) = (64usize, 16usize, 100usize);
        let w = make_hanning(n).unwrap();
        let mut x = vec![0.0; 300];
        x[p] = 1.0;
        let m = stft(&sig(x), &w, Lattice::new(hop, 128).unwrap()).unwrap();
        let tile = spectrogram(&m);
        for fr in 0..m.num_frames() {
            let start = m.frame_start(fr);
            let h = if (start..start + n).contains(&p) {
                w.taps()[p - start]
            } else {
                0.0
            };
            for c in m.frame(fr) {
                assert!((c.norm() - h).abs() < 1e-12);
            }
            for k in 0..tile.num_bins() {
                assert!((tile.get(fr, k) - h * h).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn bin_centered_sinusoid_has_three_bins() {
        let n = 256usize;
        let k0 = 20usize;
        let x: Vec<f64> = (0..n)
            .map(|t| (2.0 * std::f64::consts::PI * (k0 * t) as f64 / n as f64).sin())
            .collect();
        let w = make_hanning(n).unwrap();
        let m = stft(&sig(x), &w, Lattice::new(n, n).unwrap()).unwrap();
        assert_eq!(m.num_frames(), 1);
        let mag: Vec<f64> = m.frame(0).iter().map(|c| c.norm()).collect();
        // N/4 : N/2 : N/4 for a unit sine split across +/- frequencies
        let q = n as f64 / 8.0;
        for (k, want) in [(k0 - 1, q), (k0, 2.0 * q), (k0 + 1, q)] {
            assert!((mag[k] - want).abs() < 1e-9, "bin {k}");
            assert!((mag[n - k] - want).abs() < 1e-9, "conjugate bin {k}");
        }
        let others: f64 = mag
            .iter()
            .enumerate()
            .filter(|(k, _)| {
                ![k0 - 1, k0, k0 + 1].contains(k) && ![n - k0 - 1, n - k0, n - k0 + 1].contains(k)
            })
            .map(|(_, m)| *m)
            .fold(0.0, f64::max);
        assert!(others < 1e-9);
        let tile = spectrogram(&m);
        assert!((tile.get(0, k0) / tile.get(0, k0 - 1) - 4.0).abs() < 1e-9);
        assert!((tile.get(0, k0) / tile.get(0, k0 + 1) - 4.0).abs() < 1e-9);
    }

    #[test]
    fn zero_signal_gives_zero_tile() {
        let w = make_hanning(32).unwrap();
        let m = stft(&sig(vec![0.0; 100]), &w, Lattice::new(8, 64).unwrap()).unwrap();
        assert_eq!(m.num_frames(), (100 - 32) / 8 + 1);
        assert!(spectrogram(&m).values().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn stft_errors() {
        let w = make_hanning(32).unwrap();
        assert!(stft(&sig(vec![0.0; 100]), &w, Lattice::new(8, 16).unwrap()).is_err());
        assert!(stft(&sig(vec![0.0; 10]), &w, Lattice::new(8, 32).unwrap()).is_err());
        assert!(Lattice::new(0, 32).is_err());
        assert!(SpectrogramTile::new(vec![-1.0; 4], Lattice::new(1, 4).unwrap()).is_err());
        assert!(SpectrogramTile::new(vec![1.0; 5], Lattice::new(1, 4).unwrap()).is_err());
    }

    #[test]
    fn overlap_sum_examples() {
        let w = make_hanning(8).unwrap();
        let s2 = overlap_sum(&w, 2, -5..20).unwrap();
        assert!(s2.iter().all(|v| (v - 1.5).abs() < 1e-12));
        let s4 = overlap_sum(&w, 4, 0..8).unwrap();
        for (v, want) in s4.iter().zip([1.0, 0.75, 0.5, 0.75, 1.0, 0.75, 0.5, 0.75]) {
            assert!((v - want).abs() < 1e-12);
        }
        let s8 = overlap_sum(&w, 8, 0..8).unwrap();
        assert!(s8.contains(&0.0));
        assert!(overlap_sum(&w, 0, 0..8).is_err());
    }

    #[test]
    fn frame_bounds_examples() {
        let w = make_hanning(8).unwrap();
        let b = frame_bounds_diag(&w, 2).unwrap();
        assert_eq!((b.lower, b.upper), (1.5, 1.5));
        assert!(b.is_tight());
        let b = frame_bounds_diag(&w, 4).unwrap();
        assert!((b.lower - 0.5).abs() < 1e-12 && (b.upper - 1.0).abs() < 1e-12);
        let b = frame_bounds_diag(&w, 8).unwrap();
        assert_eq!(b.lower, 0.0);
        assert!(!b.is_frame());
        let b = frame_bounds_diag(&w, 12).unwrap();
        assert_eq!(b.lower, 0.0);
    }

    #[test]
    fn frame_bounds_independent_of_span() {
        let w = make_hanning(100).unwrap();
        let hop = 30;
        let b = frame_bounds_diag(&w, hop).unwrap();
        for offset in [-1000i64, -7, 0, 13, 999] {
            let s = overlap_sum(&w, hop, offset..offset + 3 * hop as i64).unwrap();
            let lo = s.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = s.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            assert_eq!((lo, hi), (b.lower, b.upper));
            for t in 0..2 * hop {
                assert_eq!(s[t], s[t + hop]);
            }
        }
    }

    #[test]
    fn tight_frame_preserves_energy() {
        let (n, hop, fft) = (64usize, 16usize, 128usize);
        let w = make_hanning(n).unwrap();
        let a = frame_bounds_diag(&w, hop).unwrap();
        assert!((a.lower - a.upper).abs() < 1e-12);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let len = 64 * 20;
        // zero margins so every nonzero sample sees the full overlap sum
        let x: Vec<f64> = (0..len)
            .map(|t| {
                if (n..len - n).contains(&t) {
                    rng.random_range(-1.0..1.0)
                } else {
                    0.0
                }
            })
            .collect();
        let energy: f64 = x.iter().map(|v| v * v).sum();
        let tile = spectrogram(&stft(&sig(x), &w, Lattice::new(hop, fft).unwrap()).unwrap());
        let total: f64 = tile.values().iter().sum();
        let recovered = total / (fft as f64 * a.lower);
        assert!(((recovered - energy) / energy).abs() < 1e-6);
    }

    #[test]
    fn shift_by_one_hop_shifts_frames() {
        let hop = 24;
        let w = make_hanning(96).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x: Vec<f64> = (0..1000).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut shifted = vec![0.0; hop];
        shifted.extend_from_slice(&x[..x.len() - hop]);
        let lat = Lattice::new(hop, 128).unwrap();
        let a = stft(&sig(x), &w, lat).unwrap();
        let b = stft(&sig(shifted), &w, lat).unwrap();
        for n in 0..a.num_frames() - 1 {
            assert_eq!(a.frame(n), b.frame(n + 1));
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn stft_is_linear(
            seed in any::<u64>(),
            alpha in -3.0f64..3.0,
            beta in -3.0f64..3.0,
            hop in 1usize..40,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let len = 400;
            let f: Vec<f64> = (0..len).map(|_| rng.random_range(-1.0..1.0)).collect();
            let g: Vec<f64> = (0..len).map(|_| rng.random_range(-1.0..1.0)).collect();
            let h: Vec<f64> = f.iter().zip(&g).map(|(a, b)| alpha * a + beta * b).collect();
            let w = make_hanning(64).unwrap();
            let lat = Lattice::new(hop, 64).unwrap();
            let sf = stft(&sig(f), &w, lat).unwrap();
            let sg = stft(&sig(g), &w, lat).unwrap();
            let sh = stft(&sig(h), &w, lat).unwrap();
            let mut num = 0.0;
            let mut den = 0.0;
            for ((a, b), c) in sf.coeffs().iter().zip(sg.coeffs()).zip(sh.coeffs()) {
                num += (alpha * a + beta * b - c).norm_sqr();
                den += c.norm_sqr();
            }
            prop_assert!(num.sqrt() <= 1e-12 * den.sqrt().max(1e-300) + 1e-300);
        }
    }
}
