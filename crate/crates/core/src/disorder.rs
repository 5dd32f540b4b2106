//! Compactly supported coupling laws and counter-based disorder sampling.
//!
//! Every coupling `omega_i` is drawn from its own ChaCha8 stream keyed by
//! `(seed, i)`, so any subset of indices regenerates bit-identically no matter
//! the order (or thread) in which it is requested.

use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution};

use crate::error::{precondition, Result};

/// Law of a single coupling `omega_n`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", rename_all = "kebab-case"))]
pub enum CompactDistribution {
    Uniform { a: f64, b: f64 },
    /// `a + (b - a) X` with `X ~ Beta(shape_a, shape_b)`.
    ScaledBeta {
        a: f64,
        b: f64,
        shape_a: f64,
        shape_b: f64,
    },
    /// `a` or `b` with probability one half each.
    TwoPoint { a: f64, b: f64 },
}

impl CompactDistribution {
    pub fn uniform(a: f64, b: f64) -> Result<Self> {
        let d = CompactDistribution::Uniform { a, b };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        let (a, b) = self.support();
        if !(a.is_finite() && b.is_finite()) || a > b {
            return Err(precondition!("support [{a}, {b}] must be finite with a <= b"));
        }
        if let CompactDistribution::ScaledBeta {
            shape_a, shape_b, ..
        } = *self
        {
            if !(shape_a > 0.0 && shape_b > 0.0 && shape_a.is_finite() && shape_b.is_finite()) {
                return Err(precondition!(
                    "beta shape parameters must be positive, got ({shape_a}, {shape_b})"
                ));
            }
        }
        Ok(())
    }

    pub fn support(&self) -> (f64, f64) {
        match *self {
            CompactDistribution::Uniform { a, b }
            | CompactDistribution::ScaledBeta { a, b, .. }
            | CompactDistribution::TwoPoint { a, b } => (a, b),
        }
    }

    /// Sup-norm bound `M = max(|a|, |b|)`.
    pub fn sup_bound(&self) -> f64 {
        let (a, b) = self.support();
        a.abs().max(b.abs())
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let (a, b) = self.support();
        let x = match *self {
            CompactDistribution::Uniform { .. } => {
                let u: f64 = rng.random();
                a + (b - a) * u
            }
            CompactDistribution::ScaledBeta {
                shape_a, shape_b, ..
            } => {
                // Parameters were validated; Beta::new only fails on non-positive shapes.
                let beta = Beta::new(shape_a, shape_b).expect("validated beta shapes");
                a + (b - a) * beta.sample(rng)
            }
            CompactDistribution::TwoPoint { .. } => {
                if rng.random::<bool>() {
                    b
                } else {
                    a
                }
            }
        };
        x.clamp(a, b)
    }
}

/// RNG stream dedicated to one `(seed, index)` pair.
pub fn index_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// One sample of the coupling family, bound to an index set by position.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DisorderRealization {
    pub couplings: Vec<f64>,
    pub seed: u64,
    pub distribution: CompactDistribution,
}

impl DisorderRealization {
    /// Couplings all equal to `value`; used for unit-coupling envelopes and controls.
    pub fn constant(value: f64, count: usize) -> Self {
        DisorderRealization {
            couplings: alloc::vec![value; count],
            seed: 0,
            distribution: CompactDistribution::Uniform { a: value, b: value },
        }
    }

    pub fn len(&self) -> usize {
        self.couplings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.couplings.is_empty()
    }

    pub fn sup_bound(&self) -> f64 {
        self.distribution.sup_bound()
    }

    /// Coupling for a single index, regenerated from the seed.
    pub fn regenerate(&self, index: usize) -> f64 {
        self.distribution
            .sample(&mut index_rng(self.seed, index as u64))
    }
}

/// Draws `index_count` i.i.d. couplings, one counter-keyed stream per index.
pub fn sample_disorder(
    dist: CompactDistribution,
    index_count: usize,
    seed: u64,
) -> Result<DisorderRealization> {
    dist.validate()?;
    if index_count == 0 {
        return Err(precondition!("index_count must be at least 1"));
    }
    let couplings = (0..index_count)
        .map(|i| dist.sample(&mut index_rng(seed, i as u64)))
        .collect();
    Ok(DisorderRealization {
        couplings,
        seed,
        distribution: dist,
    })
}
