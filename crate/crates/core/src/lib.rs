//! Time-adaptive spectrograms driven by Rényi entropy minimization.
//!
//! A signal is cut into overlapping segments. Each segment is analysed with
//! a bank of scaled Hanning windows, and the window whose (pre-weighted)
//! spectrogram has the lowest Rényi entropy wins the segment. The winning
//! windows are stitched into a nonstationary Gabor analysis that
//! [`resynth::reconstruct`] inverts exactly by weighted overlap-add.
//!
//! ```no_run
//! use adaptive_spectrogram::{adaptive, resynth, signal};
//!
//! # fn main() -> adaptive_spectrogram::Result<()> {
//! let params = signal::SynthParams::new()
//!     .with("carrier", 4000.0)
//!     .with("mod_rate", 2.0)
//!     .with("mod_depth", 2000.0);
//! let x = signal::synth_test_signal(signal::SignalKind::FmSine, &params, 2.0, 44100.0, 0)?;
//! let analysis = adaptive::adapt(&x, &adaptive::MultiFrameConfig::default())?;
//! let y = resynth::reconstruct(&analysis)?;
//! assert_eq!(y.num_samples(), x.num_samples());
//! # Ok(())
//! # }
//! ```

pub mod adaptive;
pub mod entropy;
pub mod error;
pub mod export;
pub mod fft;
pub mod resynth;
pub mod selftest;
pub mod signal;
pub mod stft;
pub mod wav;

pub use error::{Error, Result};
