//! Rényi entropies of normalized spectrogram regions.
//!
//! All entropies are in bits. Sums are accumulated in 128-bit fixed point,
//! which makes every entropy independent of element order (and therefore
//! of permutation and of thread scheduling).

use std::ops::Range;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{invalid, Error, Result};
use crate::stft::SpectrogramTile;

/// Entropy order used when none is given.
pub const DEFAULT_ALPHA: f64 = 0.7;

/// Order-independent accumulator for values in `[0, 1]`.
///
/// Each term is truncated to a multiple of 2^-100, so the sum is exact in
/// integer arithmetic. Up to 2^27 terms fit without overflow.
#[derive(Default)]
struct FixedSum(u128);

impl FixedSum {
    const SCALE: f64 = 1_267_650_600_228_229_401_496_703_205_376.0; // 2^100

    fn add(&mut self, v: f64) {
        debug_assert!((0.0..=1.0).contains(&v));
        self.0 += (v * Self::SCALE) as u128;
    }

    fn value(&self) -> f64 {
        self.0 as f64 / Self::SCALE
    }
}

/// Non-negative weights summing to one, tagged with the time-frequency
/// cell area they were sampled on (1 for abstract densities).
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityDensity {
    p: Vec<f64>,
    area_element: f64,
}

impl ProbabilityDensity {
    /// Accepts an already-normalized vector; the sum must be within 1e-12
    /// of one.
    pub fn new(p: Vec<f64>, area_element: f64) -> Result<Self> {
        check_weights(&p, area_element)?;
        let sum: f64 = p.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(invalid(format!("density sums to {sum}, not 1")));
        }
        Ok(Self { p, area_element })
    }

    /// Divides `weights` by their sum. All-zero weights are a
    /// [`Error::ZeroEnergyRegion`].
    pub fn from_weights(mut weights: Vec<f64>, area_element: f64) -> Result<Self> {
        check_weights(&weights, area_element)?;
        let max = weights.iter().cloned().fold(0.0, f64::max);
        if max == 0.0 {
            return Err(Error::ZeroEnergyRegion);
        }
        let mut mass = FixedSum::default();
        for w in &weights {
            mass.add(w / max);
        }
        let mass = mass.value();
        for w in &mut weights {
            *w = *w / max / mass;
        }
        Ok(Self {
            p: weights,
            area_element,
        })
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.p
    }

    pub fn len(&self) -> usize {
        self.p.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p.is_empty()
    }

    pub fn area_element(&self) -> f64 {
        self.area_element
    }
}

fn check_weights(w: &[f64], area_element: f64) -> Result<()> {
    if w.is_empty() {
        return Err(invalid("density must have at least one entry"));
    }
    if w.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(invalid("density entries must be finite and non-negative"));
    }
    if !(area_element.is_finite() && area_element > 0.0) {
        return Err(invalid(format!(
            "area element must be positive, got {area_element}"
        )));
    }
    Ok(())
}

/// Rényi order `alpha >= 0`. Order 1 is the Shannon limit, order 0 the
/// log of the support size.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct RenyiOrder(f64);

impl RenyiOrder {
    pub fn new(alpha: f64) -> Result<Self> {
        if !(alpha.is_finite() && alpha >= 0.0) {
            return Err(invalid(format!(
                "Rényi order must be finite and >= 0, got {alpha}"
            )));
        }
        Ok(Self(alpha))
    }

    pub fn alpha(self) -> f64 {
        self.0
    }
}

impl Default for RenyiOrder {
    fn default() -> Self {
        Self(DEFAULT_ALPHA)
    }
}

/// Rectangle of frames × bins within a tile.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Region {
    pub frames: Range<usize>,
    pub bins: Range<usize>,
}

impl Region {
    pub fn whole(tile: &SpectrogramTile) -> Self {
        Self {
            frames: 0..tile.num_frames(),
            bins: 0..tile.num_bins(),
        }
    }
}

pub fn normalize_region(tile: &SpectrogramTile, region: &Region) -> Result<ProbabilityDensity> {
    if region.frames.is_empty() || region.bins.is_empty() {
        return Err(invalid("region is empty"));
    }
    if region.frames.end > tile.num_frames() || region.bins.end > tile.num_bins() {
        return Err(invalid(format!(
            "region {region:?} exceeds tile of {} frames x {} bins",
            tile.num_frames(),
            tile.num_bins()
        )));
    }
    let mut w = Vec::with_capacity(region.frames.len() * region.bins.len());
    for n in region.frames.clone() {
        w.extend_from_slice(&tile.frame(n)[region.bins.clone()]);
    }
    ProbabilityDensity::from_weights(w, tile.area_element())
}

/// Rényi entropy in bits, optionally plus `log2(area_element)`.
pub fn renyi_entropy(d: &ProbabilityDensity, order: RenyiOrder, include_cell_term: bool) -> f64 {
    let h = renyi_of_weights(&d.p, order.alpha());
    if include_cell_term {
        h + d.area_element.log2()
    } else {
        h
    }
}

/// Entropy of the density proportional to `w`; `w` must have a positive
/// entry.
pub(crate) fn renyi_of_weights(w: &[f64], alpha: f64) -> f64 {
    if alpha == 0.0 {
        return (w.iter().filter(|v| **v > 0.0).count() as f64).log2();
    }
    let max = w.iter().cloned().fold(0.0, f64::max);
    debug_assert!(max > 0.0);
    // Everything is computed on w / max, which lies in [0, 1].
    let mut mass = FixedSum::default();
    for v in w {
        mass.add(v / max);
    }
    let mass = mass.value();
    if alpha == 1.0 {
        // -sum p log2 p with p = r / mass, r = w / max:
        // = log2(mass) - (1/mass) sum r log2 r
        let mut acc = FixedSum::default();
        for v in w {
            let r = v / max;
            if r > 0.0 {
                // -r log2 r lies in [0, 1/(e ln 2)] < 1
                acc.add(-r * r.log2());
            }
        }
        return mass.log2() + acc.value() / mass;
    }
    let mut acc = FixedSum::default();
    for v in w {
        let r = v / max;
        if r > 0.0 {
            // underflow flushes to zero
            acc.add((alpha * r.ln()).exp());
        }
    }
    // sum p^a = sum r^a / mass^a
    (acc.value().log2() - alpha * mass.log2()) / (1.0 - alpha)
}

fn dm_base(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.5, 0.25).expect("valid normal parameters");
    let mut d = Vec::with_capacity(n);
    while d.len() < n {
        let v: f64 = normal.sample(&mut rng);
        if v > 0.0 && v <= 1.0 {
            d.push(v);
        }
    }
    d
}

/// The `D_M` family: `N` seeded draws from a normal distribution (mean 0.5,
/// sd 0.25), redrawn until they fall in `(0, 1]`. Entries past index `M` are
/// divided by 20 and the result is normalized.
pub fn dm_family(n: usize, m: usize, seed: u64) -> Result<ProbabilityDensity> {
    if n == 0 || m == 0 || m > n {
        return Err(invalid(format!("need 1 <= M <= N, got M={m}, N={n}")));
    }
    let mut d = dm_base(n, seed);
    for v in &mut d[m..] {
        *v /= 20.0;
    }
    ProbabilityDensity::from_weights(d, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stft::Lattice;
    use proptest::prelude::*;

    fn h(p: &[f64], alpha: f64) -> f64 {
        let d = ProbabilityDensity::from_weights(p.to_vec(), 1.0).unwrap();
        renyi_entropy(&d, RenyiOrder::new(alpha).unwrap(), false)
    }

    #[test]
    fn normalize_examples() {
        let lat = Lattice::new(1, 2).unwrap();
        let tile = SpectrogramTile::new(vec![3.0, 0.0, 1.0, 1.0, 1.0, 1.0], lat).unwrap();
        let one = normalize_region(
            &tile,
            &Region {
                frames: 0..1,
                bins: 0..1,
            },
        )
        .unwrap();
        assert_eq!(one.as_slice(), &[1.0]);
        let four = normalize_region(
            &tile,
            &Region {
                frames: 1..3,
                bins: 0..2,
            },
        )
        .unwrap();
        assert_eq!(four.as_slice(), &[0.25; 4]);
        assert_eq!(four.area_element(), 0.5);
        let zero = normalize_region(
            &tile,
            &Region {
                frames: 0..1,
                bins: 1..2,
            },
        );
        assert!(matches!(zero, Err(Error::ZeroEnergyRegion)));
        assert!(normalize_region(
            &tile,
            &Region {
                frames: 0..4,
                bins: 0..1
            }
        )
        .is_err());
        assert!(normalize_region(
            &tile,
            &Region {
                frames: 1..1,
                bins: 0..1
            }
        )
        .is_err());
    }

    #[test]
    fn uniform_and_delta() {
        let u = vec![1.0; 16];
        for a in [0.0, 0.5, 2.0, 5.0, 1.0] {
            assert!((h(&u, a) - 4.0).abs() < 1e-12, "alpha {a}");
        }
        let mut delta = vec![0.0; 10];
        delta[0] = 1.0;
        for a in [0.3, 1.0, 2.0, 30.0] {
            assert_eq!(h(&delta, a), 0.0);
        }
    }

    #[test]
    fn closed_forms() {
        let p = [0.5, 0.25, 0.25];
        // sum p^2 = 3/8
        assert!((h(&p, 2.0) - 1.415_037_499_278_843_8).abs() < 1e-12);
        assert!((h(&p, 1.0) - 1.5).abs() < 1e-12);
        assert!((h(&p, 0.0) - 3f64.log2()).abs() < 1e-15);
        assert!((h(&[0.5, 0.0, 0.5], 0.0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn cell_term_is_additive() {
        let d = ProbabilityDensity::from_weights(vec![1.0, 2.0, 3.0], 0.125).unwrap();
        let o = RenyiOrder::new(0.7).unwrap();
        assert_eq!(
            renyi_entropy(&d, o, true) - renyi_entropy(&d, o, false),
            -3.0
        );
    }

    #[test]
    fn order_validation() {
        assert!(RenyiOrder::new(-0.1).is_err());
        assert!(RenyiOrder::new(f64::INFINITY).is_err());
        assert_eq!(RenyiOrder::default().alpha(), 0.7);
        assert!(ProbabilityDensity::new(vec![0.5, 0.4], 1.0).is_err());
        assert!(ProbabilityDensity::new(vec![0.5, 0.5], 1.0).is_ok());
        assert!(ProbabilityDensity::from_weights(vec![], 1.0).is_err());
    }

    #[test]
    fn dm_family_properties() {
        let full = dm_family(100, 100, 3).unwrap();
        let base = dm_base(100, 3);
        let s: f64 = base.iter().sum();
        for (p, b) in full.as_slice().iter().zip(&base) {
            assert!((p - b / s).abs() < 1e-15);
        }
        for m in [1, 10, 50, 100] {
            let d = dm_family(100, m, 3).unwrap();
            let h0 = renyi_entropy(&d, RenyiOrder::new(0.0).unwrap(), false);
            assert_eq!(h0, 100f64.log2());
        }
        let two = RenyiOrder::new(2.0).unwrap();
        let h10 = renyi_entropy(&dm_family(100, 10, 3).unwrap(), two, false);
        let h90 = renyi_entropy(&dm_family(100, 90, 3).unwrap(), two, false);
        assert!(h10 < h90);
        assert!(dm_family(100, 0, 0).is_err());
        assert!(dm_family(100, 101, 0).is_err());
        assert_eq!(dm_family(100, 5, 9).unwrap(), dm_family(100, 5, 9).unwrap());
    }

    fn weights() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(prop_oneof![Just(0.0), 1e-12f64..1.0, 0.0f64..1e3], 1..300)
            .prop_filter("positive mass", |w| w.iter().any(|v| *v > 0.0))
    }

    proptest! {
        #[test]
        fn non_increasing_in_alpha(w in weights(), a in 0.0f64..20.0, da in 1e-3f64..10.0) {
            prop_assert!(h(&w, a) >= h(&w, a + da) - 1e-9);
        }

        #[test]
        fn bounded_by_log_len(w in weights(), a in 0.0f64..40.0) {
            let v = h(&w, a);
            prop_assert!(v >= -1e-9);
            prop_assert!(v <= (w.len() as f64).log2() + 1e-9);
            prop_assert!(h(&w, 0.0) >= v - 1e-9);
        }

        #[test]
        fn shannon_limit(w in weights()) {
            let h1 = h(&w, 1.0);
            prop_assert!((h(&w, 1.0 + 1e-4) - h1).abs() < 1e-3);
            prop_assert!((h(&w, 1.0 - 1e-4) - h1).abs() < 1e-3);
        }

        #[test]
        fn permutation_invariant(w in weights(), a in 0.0f64..10.0, seed in any::<u64>()) {
            use rand::seq::SliceRandom;
            let mut shuffled = w.clone();
            shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            prop_assert_eq!(h(&w, a), h(&shuffled, a));
        }
    }
}
