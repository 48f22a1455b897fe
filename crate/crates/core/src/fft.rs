//! DFT backend.
//!
//! Forward transform is unnormalized; the inverse carries the `1/N` factor,
//! so `inverse(forward(x)) == x` up to rounding.

use std::sync::Arc;

use rustfft::{Fft, FftPlanner};

pub use rustfft::num_complex::Complex64;

use crate::error::{invalid, Result};

/// Planned forward/inverse transforms of one length. Cheap to share across
/// threads.
#[derive(Clone)]
pub struct Dft {
    len: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Dft {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Dft").field("len", &self.len).finish()
    }
}

impl Dft {
    pub fn new(len: usize) -> Result<Self> {
        if len == 0 {
            return Err(invalid("DFT length must be at least 1"));
        }
        let mut planner = FftPlanner::new();
        Ok(Self {
            len,
            forward: planner.plan_fft_forward(len),
            inverse: planner.plan_fft_inverse(len),
        })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn forward_in_place(&self, buf: &mut [Complex64]) {
        assert_eq!(buf.len(), self.len, "buffer length does not match plan");
        self.forward.process(buf);
    }

    pub fn inverse_in_place(&self, buf: &mut [Complex64]) {
        assert_eq!(buf.len(), self.len, "buffer length does not match plan");
        self.inverse.process(buf);
        let norm = 1.0 / self.len as f64;
        for c in buf.iter_mut() {
            *c *= norm;
        }
    }
}

pub fn dft_forward(buffer: &[Complex64]) -> Result<Vec<Complex64>> {
    let dft = Dft::new(buffer.len())?;
    let mut out = buffer.to_vec();
    dft.forward_in_place(&mut out);
    Ok(out)
}

pub fn dft_inverse(buffer: &[Complex64]) -> Result<Vec<Complex64>> {
    let dft = Dft::new(buffer.len())?;
    let mut out = buffer.to_vec();
    dft.inverse_in_place(&mut out);
    Ok(out)
}
