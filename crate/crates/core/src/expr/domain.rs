//! Sampling domains: an axis-aligned box with an exclusion list.
//!
//! Identity tests and validation checks run at deterministic
//! low-discrepancy points of the box, rejecting points where any exclusion
//! expression comes closer to zero than the margin. The point stream is
//! seeded from a stable hash of the domain itself, so every consumer of the
//! same domain sees the same points across runs.

use super::Expression;
use crate::rng::{splitmix64, unit_open};

/// Default exclusion margin as a fraction of the box diagonal.
pub const DEFAULT_MARGIN_FRACTION: f64 = 1e-3;

#[derive(Clone, Debug, thiserror::Error)]
pub enum DomainError {
    #[error("box axis {axis} has non-positive width")]
    DegenerateAxis { axis: usize },
    #[error("domain must have at least one axis")]
    Empty,
    #[error("exclusion margin must be positive, got {0}")]
    NonPositiveMargin(f64),
    #[error("exclusion expression has dimension {got}, domain has {want}")]
    ExclusionDimension { got: usize, want: usize },
    #[error("could not find {want} sample points ({found} found); domain too thin")]
    TooFewPoints { want: usize, found: usize },
}

/// Axis-aligned sampling box with exclusion expressions that must stay at
/// least `margin` away from zero.
#[derive(Clone, Debug)]
pub struct Domain {
    bounds: Vec<(f64, f64)>,
    exclusions: Vec<Expression>,
    margin: f64,
}

impl Domain {
    /// Builds a domain with the default margin
    /// [`DEFAULT_MARGIN_FRACTION`] of the box diagonal.
    pub fn new(bounds: Vec<(f64, f64)>, exclusions: Vec<Expression>) -> Result<Domain, DomainError> {
        let diagonal = {
            let mut sq = 0.0;
            for &(lo, hi) in &bounds {
                sq += (hi - lo) * (hi - lo);
            }
            sq.sqrt()
        };
        Self::with_margin(bounds, exclusions, DEFAULT_MARGIN_FRACTION * diagonal)
    }

    pub fn with_margin(
        bounds: Vec<(f64, f64)>,
        exclusions: Vec<Expression>,
        margin: f64,
    ) -> Result<Domain, DomainError> {
        if bounds.is_empty() {
            return Err(DomainError::Empty);
        }
        for (axis, &(lo, hi)) in bounds.iter().enumerate() {
            if !(hi - lo > 0.0) || !lo.is_finite() || !hi.is_finite() {
                return Err(DomainError::DegenerateAxis { axis });
            }
        }
        if !(margin > 0.0) {
            return Err(DomainError::NonPositiveMargin(margin));
        }
        let dim = bounds.len();
        for e in &exclusions {
            if e.dim() != dim {
                return Err(DomainError::ExclusionDimension { got: e.dim(), want: dim });
            }
        }
        Ok(Domain { bounds, exclusions, margin })
    }

    pub fn dim(&self) -> usize {
        self.bounds.len()
    }

    pub fn bounds(&self) -> &[(f64, f64)] {
        &self.bounds
    }

    pub fn exclusions(&self) -> &[Expression] {
        &self.exclusions
    }

    pub fn margin(&self) -> f64 {
        self.margin
    }

    pub fn diagonal(&self) -> f64 {
        self.bounds.iter().map(|&(lo, hi)| (hi - lo) * (hi - lo)).sum::<f64>().sqrt()
    }

    /// Membership test: inside the box and at least `margin` away from the
    /// zero set of every exclusion. Points where an exclusion is undefined
    /// do not belong to the domain.
    pub fn contains(&self, point: &[f64]) -> bool {
        if point.len() != self.dim() {
            return false;
        }
        for (x, &(lo, hi)) in point.iter().zip(&self.bounds) {
            if !(*x >= lo && *x <= hi) {
                return false;
            }
        }
        self.clears_exclusions(point)
    }

    /// Exclusion check alone, without the box test.
    pub fn clears_exclusions(&self, point: &[f64]) -> bool {
        self.exclusions.iter().all(|e| match e.evaluate(point) {
            Ok(v) => v.abs() >= self.margin,
            Err(_) => false,
        })
    }

    /// Stable content hash; seeds the sample stream.
    pub fn hash_seed(&self) -> u64 {
        let mut h = 0xcbf2_9ce4_8422_2325u64; // FNV-1a offset basis
        let mut feed = |word: u64| {
            for byte in word.to_le_bytes() {
                h ^= byte as u64;
                h = h.wrapping_mul(0x0000_0100_0000_01b3);
            }
        };
        feed(self.bounds.len() as u64);
        for &(lo, hi) in &self.bounds {
            feed(lo.to_bits());
            feed(hi.to_bits());
        }
        feed(self.margin.to_bits());
        for e in &self.exclusions {
            for b in e.to_string().into_bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(0x0000_0100_0000_01b3);
            }
        }
        h
    }

    /// `count` deterministic low-discrepancy points inside the domain.
    ///
    /// Uses the additive Kronecker sequence built on the generalized golden
    /// ratio, offset per axis by the domain hash; candidates violating an
    /// exclusion margin are rejected and the sequence continues.
    pub fn sample_points(&self, count: usize) -> Result<Vec<Vec<f64>>, DomainError> {
        let dim = self.dim();
        let alphas = kronecker_alphas(dim);
        let seed = self.hash_seed();
        let offsets: Vec<f64> =
            (0..dim).map(|j| unit_open(splitmix64(seed ^ (j as u64).wrapping_mul(0xa076_1d64_78bd_642f)))).collect();

        let mut out = Vec::with_capacity(count);
        let max_tries = 64 * count + 4096;
        let mut k = 0usize;
        while out.len() < count && k < max_tries {
            k += 1;
            let point: Vec<f64> = (0..dim)
                .map(|j| {
                    let u = (offsets[j] + k as f64 * alphas[j]).fract();
                    let (lo, hi) = self.bounds[j];
                    lo + u * (hi - lo)
                })
                .collect();
            if self.clears_exclusions(&point) {
                out.push(point);
            }
        }
        if out.len() < count {
            return Err(DomainError::TooFewPoints { want: count, found: out.len() });
        }
        Ok(out)
    }
}

/// Irrational increments 1/phi_d^(j+1) where phi_d is the positive root of
/// x^(d+1) = x + 1.
fn kronecker_alphas(dim: usize) -> Vec<f64> {
    let mut phi = 1.5f64;
    for _ in 0..64 {
        phi = (1.0 + phi).powf(1.0 / (dim as f64 + 1.0));
    }
    (0..dim).map(|j| (1.0 / phi).powi(j as i32 + 1)).collect()
}
