//! Entropy-driven window selection and assembly of the adapted analysis.
//!
//! The signal is cut into overlapping segments. Every segment is tapered
//! with the halves of the largest window, analysed with each window of the
//! bank, and scored by the Rényi entropy of each spectrogram (cell term
//! included so that lattices with different hops compare fairly). The
//! lowest entropy wins the segment.
//!
//! Each sample is then owned by the segment whose center is nearest (ties
//! go to the earlier segment). Runs of samples sharing a winner become
//! slices, analysed on the unweighted signal by the winning window on its
//! own lattice: a slice holds every frame whose center `n*hop + len/2`
//! falls inside its sample range.
//!
//! Two multi-frame layouts are supported. [`Version::V1`] puts every
//! window on the hop of the smallest one; [`Version::V2`] gives each window
//! its own hop so all share the same overlap ratio. Both zero-pad to the
//! largest window length.

use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use rayon::prelude::*;

use crate::entropy::{normalize_region, renyi_entropy, Region, RenyiOrder};
use crate::error::{invalid, Error, Result};
use crate::fft::{Complex64, Dft};
use crate::signal::{make_hanning, scale_window, ScaleSet, Signal, Window};
use crate::stft::{frame_bounds_diag, frames_at, FrameBounds, Lattice, SpectrogramTile};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Version {
    /// Shared hop and FFT size for every window.
    V1,
    /// Shared FFT size, per-window hop at a common overlap ratio.
    V2,
}

impl fmt::Display for Version {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Version::V1 => "v1",
            Version::V2 => "v2",
        })
    }
}

impl FromStr for Version {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "v1" => Ok(Version::V1),
            "v2" => Ok(Version::V2),
            _ => Err(invalid(format!("unknown version '{s}', expected v1 or v2"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultiFrameConfig {
    pub version: Version,
    pub min_len: usize,
    pub max_len: usize,
    pub num_windows: usize,
    pub alpha: RenyiOrder,
    /// Segment length, counted in frames of the largest window's lattice.
    pub segment_frames: usize,
    /// Frames shared by consecutive segments.
    pub segment_overlap_frames: usize,
    /// Fraction of a window shared by consecutive frames. Under V1 it fixes
    /// the hop of the smallest window, which every window then uses.
    pub overlap_ratio: f64,
}

impl Default for MultiFrameConfig {
    /// Eight windows from 512 to 4096 samples, four-frame segments
    /// overlapping by two, alpha 0.7.
    fn default() -> Self {
        Self {
            version: Version::V2,
            min_len: 512,
            max_len: 4096,
            num_windows: 8,
            alpha: RenyiOrder::default(),
            segment_frames: 4,
            segment_overlap_frames: 2,
            overlap_ratio: 0.75,
        }
    }
}

impl MultiFrameConfig {
    /// Four windows (512 to 4096) on a common hop of 256 samples,
    /// 24-frame segments overlapping by 16.
    pub fn shared_hop() -> Self {
        Self {
            version: Version::V1,
            num_windows: 4,
            segment_frames: 24,
            segment_overlap_frames: 16,
            overlap_ratio: 0.5,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.min_len < 2 || self.min_len > self.max_len {
            return Err(invalid(format!(
                "window lengths must satisfy 2 <= min ({}) <= max ({})",
                self.min_len, self.max_len
            )));
        }
        if self.num_windows == 0 {
            return Err(invalid("at least one window is required"));
        }
        if self.segment_frames == 0 || self.segment_overlap_frames >= self.segment_frames {
            return Err(invalid(format!(
                "segment overlap ({}) must be below segment length ({}) in frames",
                self.segment_overlap_frames, self.segment_frames
            )));
        }
        if !(self.overlap_ratio > 0.0 && self.overlap_ratio < 1.0) {
            return Err(invalid(format!(
                "overlap ratio must lie in (0, 1), got {}",
                self.overlap_ratio
            )));
        }
        if self.version == Version::V1 && 2 * self.hop_for(self.min_len) > self.min_len {
            return Err(invalid(format!(
                "v1 needs a common hop <= min_len / 2; overlap ratio {} gives {}",
                self.overlap_ratio,
                self.hop_for(self.min_len)
            )));
        }
        Ok(())
    }

    fn hop_for(&self, len: usize) -> usize {
        (((1.0 - self.overlap_ratio) * len as f64).round() as usize).max(1)
    }

    /// Window lengths of the bank, ascending. Geometric between `min_len`
    /// and `max_len`, interior lengths rounded to even sample counts.
    pub fn window_lengths(&self) -> Vec<usize> {
        let n = self.num_windows;
        if n == 1 {
            return vec![self.max_len];
        }
        let ratio = self.max_len as f64 / self.min_len as f64;
        (0..n)
            .map(|k| match k {
                0 => self.min_len,
                k if k == n - 1 => self.max_len,
                k => {
                    let x = self.min_len as f64 * ratio.powf(k as f64 / (n - 1) as f64);
                    2 * (x / 2.0).round() as usize
                }
            })
            .collect()
    }
}

/// One window of the bank with its lattice and frame bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct BankEntry {
    pub window: Window,
    pub lattice: Lattice,
    pub bounds: FrameBounds,
}

#[derive(Debug, Clone)]
pub struct AnalysisPlan {
    pub version: Version,
    pub alpha: RenyiOrder,
    pub scales: ScaleSet,
    pub bank: Vec<BankEntry>,
    pub segments: Vec<Range<usize>>,
    pub signal_len: usize,
    pub sample_rate: f64,
    /// Unit-peak Hanning of the largest length, used for pre-weighting.
    taper: Window,
    dft: Dft,
}

impl AnalysisPlan {
    pub fn fft_size(&self) -> usize {
        self.dft.len()
    }

    pub fn max_len(&self) -> usize {
        self.taper.len()
    }

    pub fn window_lengths(&self) -> Vec<usize> {
        self.bank.iter().map(|e| e.window.len()).collect()
    }

    pub(crate) fn dft(&self) -> &Dft {
        &self.dft
    }
}

pub fn plan(
    config: &MultiFrameConfig,
    signal_len: usize,
    sample_rate: f64,
) -> Result<AnalysisPlan> {
    config.validate()?;
    if !(sample_rate.is_finite() && sample_rate > 0.0) {
        return Err(invalid(format!(
            "sample rate must be positive, got {sample_rate}"
        )));
    }
    if signal_len < config.max_len {
        return Err(invalid(format!(
            "signal of {signal_len} samples is shorter than the largest window ({})",
            config.max_len
        )));
    }
    let lengths = config.window_lengths();
    if lengths.windows(2).any(|w| w[0] >= w[1]) {
        return Err(invalid(format!(
            "{} windows between {} and {} samples do not have distinct even lengths",
            config.num_windows, config.min_len, config.max_len
        )));
    }
    let base_len = lengths[0];
    let scales = ScaleSet::new(
        lengths
            .iter()
            .map(|&l| l as f64 / base_len as f64)
            .collect(),
    )?;
    let base = make_hanning(base_len)?;
    let fft_size = config.max_len;
    let shared_hop = config.hop_for(config.min_len);

    let mut bank = Vec::with_capacity(lengths.len());
    for (&len, &l) in lengths.iter().zip(scales.as_slice()) {
        let window = scale_window(&base, l)?;
        debug_assert_eq!(window.len(), len);
        let hop = match config.version {
            Version::V1 => shared_hop,
            Version::V2 => config.hop_for(len),
        };
        let bounds = frame_bounds_diag(&window, hop)?;
        if !bounds.is_frame() {
            return Err(Error::InfeasiblePlan {
                window_len: len,
                hop,
                lower_bound: bounds.lower,
            });
        }
        bank.push(BankEntry {
            window,
            lattice: Lattice::new(hop, fft_size)?,
            bounds,
        });
    }

    let ref_hop = bank.last().expect("non-empty bank").lattice.hop;
    let seg_len = config.max_len + (config.segment_frames - 1) * ref_hop;
    let step = (config.segment_frames - config.segment_overlap_frames) * ref_hop;
    let segments = segment_ranges(signal_len, seg_len, step);

    Ok(AnalysisPlan {
        version: config.version,
        alpha: config.alpha,
        scales,
        bank,
        segments,
        signal_len,
        sample_rate,
        taper: make_hanning(config.max_len)?,
        dft: Dft::new(fft_size)?,
    })
}

/// Segments of `seg_len` every `step` samples; a final segment is aligned
/// to the signal end when the grid leaves a remainder.
fn segment_ranges(signal_len: usize, seg_len: usize, step: usize) -> Vec<Range<usize>> {
    if signal_len <= seg_len {
        return std::iter::once(0..signal_len).collect();
    }
    let mut out: Vec<Range<usize>> = (0..)
        .map(|i| i * step)
        .take_while(|s| s + seg_len <= signal_len)
        .map(|s| s..s + seg_len)
        .collect();
    if out.last().is_some_and(|r| r.end < signal_len) {
        out.push(signal_len - seg_len..signal_len);
    }
    out
}

/// Tapers the segment head with the rising half of the largest window and
/// its tail with the falling half. Used only for entropy evaluation.
pub fn preweight_segment(segment: &[f64], plan: &AnalysisPlan) -> Result<Vec<f64>> {
    let taps = plan.taper.taps();
    let max_len = taps.len();
    if segment.len() < max_len {
        return Err(Error::InvalidSegment {
            len: segment.len(),
            required: max_len,
        });
    }
    let half = max_len / 2;
    let tail = max_len - half;
    let mut out = segment.to_vec();
    for (x, w) in out[..half].iter_mut().zip(&taps[..half]) {
        *x *= w;
    }
    let n = out.len();
    for (x, w) in out[n - tail..].iter_mut().zip(&taps[half..]) {
        *x *= w;
    }
    Ok(out)
}

/// Entropy (bits, cell term included) of each window's spectrogram over the
/// weighted segment; `None` marks a silent segment.
pub fn evaluate_segment(weighted: &[f64], plan: &AnalysisPlan) -> Result<Vec<Option<f64>>> {
    if weighted.len() < plan.max_len() {
        return Err(Error::InvalidSegment {
            len: weighted.len(),
            required: plan.max_len(),
        });
    }
    plan.bank
        .iter()
        .map(|entry| {
            let len = entry.window.len();
            let hop = entry.lattice.hop;
            let starts: Vec<usize> = (0..=(weighted.len() - len) / hop)
                .map(|n| n * hop)
                .collect();
            let coeffs = frames_at(weighted, entry.window.taps(), plan.dft(), &starts);
            let tile = SpectrogramTile::from_coeffs(&coeffs, entry.lattice);
            match normalize_region(&tile, &Region::whole(&tile)) {
                Ok(d) => Ok(Some(renyi_entropy(&d, plan.alpha, true))),
                Err(Error::ZeroEnergyRegion) => Ok(None),
                Err(e) => Err(e),
            }
        })
        .collect()
}

/// Index of the lowest entropy among non-silent entries, ties going to the
/// larger window. All-silent vectors keep `previous`, or the largest window
/// when there is none.
pub fn select_best(entropies: &[Option<f64>], previous: Option<usize>) -> usize {
    let mut best: Option<(usize, f64)> = None;
    for (i, h) in entropies.iter().enumerate() {
        if let Some(h) = *h {
            if best.is_none_or(|(_, b)| h <= b) {
                best = Some((i, h));
            }
        }
    }
    match best {
        Some((i, _)) => i,
        None => previous.unwrap_or(entropies.len().saturating_sub(1)),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SegmentRecord {
    pub range: Range<usize>,
    pub entropies: Vec<Option<f64>>,
    pub choice: usize,
}

impl SegmentRecord {
    /// Twice the segment center, in samples.
    fn doubled_center(&self) -> usize {
        self.range.start + self.range.end
    }
}

/// Per-segment winners with the entropy vectors that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectionTrack {
    pub segments: Vec<SegmentRecord>,
    /// Length of each window of the bank, indexed like the entropies.
    pub window_lens: Vec<usize>,
    pub sample_rate: f64,
}

impl SelectionTrack {
    /// Index of the segment owning `sample`: nearest center, earlier
    /// segment on ties.
    pub fn owner(&self, sample: usize) -> usize {
        let t2 = 2 * sample;
        let mut best = 0;
        for (j, seg) in self.segments.iter().enumerate() {
            if seg.doubled_center().abs_diff(t2) < self.segments[best].doubled_center().abs_diff(t2)
            {
                best = j;
            }
        }
        best
    }

    /// Maximal sample runs sharing a chosen window, covering
    /// `0..signal_len`, as `(range, window index)`.
    pub fn runs(&self, signal_len: usize) -> Vec<(Range<usize>, usize)> {
        let mut runs: Vec<(Range<usize>, usize)> = Vec::new();
        let mut start = 0;
        for (j, seg) in self.segments.iter().enumerate() {
            let end = match self.segments.get(j + 1) {
                // first sample strictly closer to the next center
                Some(next) => {
                    ((seg.doubled_center() + next.doubled_center()) / 4 + 1).min(signal_len)
                }
                None => signal_len,
            };
            if end <= start {
                continue;
            }
            match runs.last_mut() {
                Some((r, c)) if *c == seg.choice && r.end == start => r.end = end,
                _ => runs.push((start..end, seg.choice)),
            }
            start = end;
        }
        runs
    }
}

/// Frames of one window over a contiguous run of samples.
#[derive(Debug, Clone, PartialEq)]
pub struct Slice {
    pub window_index: usize,
    pub lattice: Lattice,
    pub range: Range<usize>,
    pub frame_starts: Vec<usize>,
    /// Frame-major complex coefficients, `fft_size` per frame.
    pub coeffs: Vec<Complex64>,
}

impl Slice {
    pub fn num_frames(&self) -> usize {
        self.frame_starts.len()
    }

    pub fn frame(&self, n: usize) -> &[Complex64] {
        let f = self.lattice.fft_size;
        &self.coeffs[n * f..(n + 1) * f]
    }

    pub fn frame_mut(&mut self, n: usize) -> &mut [Complex64] {
        let f = self.lattice.fft_size;
        &mut self.coeffs[n * f..(n + 1) * f]
    }
}

/// Time-ordered slices with heterogeneous windows and hops, plus the bank
/// needed to invert them.
#[derive(Debug, Clone, PartialEq)]
pub struct AdaptiveSpectrogram {
    pub slices: Vec<Slice>,
    pub selection: SelectionTrack,
    pub bank: Vec<BankEntry>,
    pub sample_rate: f64,
    pub signal_len: usize,
}

impl AdaptiveSpectrogram {
    pub fn fft_size(&self) -> usize {
        self.bank[0].lattice.fft_size
    }

    pub fn window(&self, index: usize) -> &Window {
        &self.bank[index].window
    }

    /// Length of the window chosen at `sample`.
    pub fn window_len_at(&self, sample: usize) -> usize {
        let s = self
            .slices
            .iter()
            .find(|s| s.range.contains(&sample))
            .expect("slices cover the signal");
        self.bank[s.window_index].window.len()
    }

    pub fn num_frames(&self) -> usize {
        self.slices.iter().map(Slice::num_frames).sum()
    }

    /// Analyses `signal` on exactly this frame layout (same slices, windows
    /// and frame positions), keeping the selection track.
    pub fn reanalyze(&self, signal: &Signal) -> Result<Self> {
        if signal.num_samples() != self.signal_len {
            return Err(invalid(format!(
                "signal has {} samples, layout expects {}",
                signal.num_samples(),
                self.signal_len
            )));
        }
        let dft = Dft::new(self.fft_size())?;
        let slices = self
            .slices
            .iter()
            .map(|s| Slice {
                coeffs: frames_at(
                    signal.samples(),
                    self.window(s.window_index).taps(),
                    &dft,
                    &s.frame_starts,
                ),
                ..s.clone()
            })
            .collect();
        Ok(Self {
            slices,
            sample_rate: signal.sample_rate(),
            ..self.clone()
        })
    }
}

/// Frame starts on `lattice` whose centers fall in `range`, keeping frames
/// inside `0..signal_len`.
fn frame_starts_in(range: &Range<usize>, len: usize, hop: usize, signal_len: usize) -> Vec<usize> {
    let half = len / 2;
    let first = range.start.saturating_sub(half).div_ceil(hop);
    (first..)
        .map(|n| n * hop)
        .take_while(|s| s + half < range.end && s + len <= signal_len)
        .filter(|s| s + half >= range.start)
        .collect()
}

/// Scores every segment and picks its window.
pub fn select(signal: &Signal, plan: &AnalysisPlan) -> Result<SelectionTrack> {
    let x = signal.samples();
    let entropies = plan
        .segments
        .par_iter()
        .map(|r| evaluate_segment(&preweight_segment(&x[r.clone()], plan)?, plan))
        .collect::<Result<Vec<_>>>()?;
    let mut previous = None;
    let segments = plan
        .segments
        .iter()
        .zip(entropies)
        .map(|(range, entropies)| {
            let choice = select_best(&entropies, previous);
            previous = Some(choice);
            SegmentRecord {
                range: range.clone(),
                entropies,
                choice,
            }
        })
        .collect();
    Ok(SelectionTrack {
        segments,
        window_lens: plan.window_lengths(),
        sample_rate: plan.sample_rate,
    })
}

/// Re-analyses the unweighted signal with the windows in `selection`.
pub fn assemble(
    signal: &Signal,
    plan: &AnalysisPlan,
    selection: SelectionTrack,
) -> AdaptiveSpectrogram {
    let len = signal.num_samples();
    let slices = selection
        .runs(len)
        .into_iter()
        .map(|(range, k)| {
            let entry = &plan.bank[k];
            let starts = frame_starts_in(&range, entry.window.len(), entry.lattice.hop, len);
            let coeffs = frames_at(signal.samples(), entry.window.taps(), plan.dft(), &starts);
            Slice {
                window_index: k,
                lattice: entry.lattice,
                range,
                frame_starts: starts,
                coeffs,
            }
        })
        .collect();
    AdaptiveSpectrogram {
        slices,
        selection,
        bank: plan.bank.clone(),
        sample_rate: signal.sample_rate(),
        signal_len: len,
    }
}

pub fn adapt(signal: &Signal, config: &MultiFrameConfig) -> Result<AdaptiveSpectrogram> {
    let plan = plan(config, signal.num_samples(), signal.sample_rate())?;
    let selection = select(signal, &plan)?;
    Ok(assemble(signal, &plan, selection))
}
