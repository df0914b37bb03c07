//! Atomic i.i.d. bias laws and bias fields.
//!
//! A law is a finite list of `(bias, probability)` atoms. The two rate
//! constants are `ν₁ = -log Σ pᵢ/(1+bᵢ)` and `ν₂ = -log P(β = 0)`; the
//! per-site Laplace transform `u ↦ Σ pᵢ e^{-bᵢ u}` integrates the disorder
//! out of any weight of the form `exp(-Σ_x β(x) l(x))`.

use rand::Rng;
use thiserror::Error;

use crate::rng::{self, Domain};
use crate::site::{Site, Torus};

const PROB_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DisorderError {
    #[error("invalid disorder law: {0}")]
    InvalidLaw(String),
    #[error("Laplace transform needs u >= 0, got {0}")]
    NegativeArgument(f64),
    #[error("bias field has {field} sites, torus has {torus}")]
    SiteMismatch { field: usize, torus: usize },
}

#[derive(Clone, Debug, PartialEq)]
pub struct DisorderLaw {
    atoms: Vec<(f64, f64)>,
}

impl DisorderLaw {
    pub fn new(atoms: Vec<(f64, f64)>) -> Result<DisorderLaw, DisorderError> {
        if atoms.is_empty() {
            return Err(DisorderError::InvalidLaw("no atoms".into()));
        }
        let mut total = 0.0;
        for &(b, p) in &atoms {
            if !(b >= 0.0 && b.is_finite()) {
                return Err(DisorderError::InvalidLaw(format!("bias value {b} not in [0, ∞)")));
            }
            if !(0.0..=1.0).contains(&p) {
                return Err(DisorderError::InvalidLaw(format!("probability {p} not in [0, 1]")));
            }
            total += p;
        }
        if (total - 1.0).abs() > PROB_TOL {
            return Err(DisorderError::InvalidLaw(format!("probabilities sum to {total}")));
        }
        // Merge duplicate bias values and drop null atoms.
        let mut merged: Vec<(f64, f64)> = Vec::new();
        for (b, p) in atoms {
            if p == 0.0 {
                continue;
            }
            match merged.iter_mut().find(|(c, _)| *c == b) {
                Some(a) => a.1 += p,
                None => merged.push((b, p)),
            }
        }
        merged.sort_by(|a, b| a.0.total_cmp(&b.0));
        Ok(DisorderLaw { atoms: merged })
    }

    /// `β = 0` with probability `q`, `β = b` otherwise.
    pub fn bernoulli(q: f64, b: f64) -> Result<DisorderLaw, DisorderError> {
        Self::new(vec![(0.0, q), (b, 1.0 - q)])
    }

    pub fn deterministic(b: f64) -> Result<DisorderLaw, DisorderError> {
        Self::new(vec![(b, 1.0)])
    }

    pub fn atoms(&self) -> &[(f64, f64)] {
        &self.atoms
    }

    /// The single bias value when the law is a point mass.
    pub fn point_mass(&self) -> Option<f64> {
        (self.atoms.len() == 1).then(|| self.atoms[0].0)
    }

    pub fn mass_at_zero(&self) -> f64 {
        self.atoms.iter().filter(|(b, _)| *b == 0.0).map(|(_, p)| p).sum()
    }

    pub fn mean(&self) -> f64 {
        self.atoms.iter().map(|(b, p)| b * p).sum()
    }

    /// `m₁ = ∫ 1/(1+β) 𝔹(dβ) = e^{-ν₁}`.
    pub fn m1(&self) -> f64 {
        self.atoms.iter().map(|(b, p)| p / (1.0 + b)).sum()
    }

    pub fn nu1(&self) -> f64 {
        let v = -self.m1().ln();
        // m1 can round a hair above 1 for the all-zero law.
        v.max(0.0)
    }

    /// `-log P(β = 0)`; `None` stands for `+∞` (no mass at zero).
    pub fn nu2(&self) -> Option<f64> {
        let q = self.mass_at_zero();
        (q > 0.0).then(|| (-q.ln()).max(0.0))
    }

    /// Hypothesis of the upper bound: the law charges some `β ≠ 0`.
    pub fn has_biased_mass(&self) -> bool {
        self.atoms.iter().any(|(b, p)| *b > 0.0 && *p > 0.0)
    }

    /// Hypothesis of the lower bound: the law charges `β = 0`.
    pub fn has_unbiased_mass(&self) -> bool {
        self.mass_at_zero() > 0.0
    }

    pub fn laplace(&self, u: f64) -> Result<f64, DisorderError> {
        if !(u >= 0.0) {
            return Err(DisorderError::NegativeArgument(u));
        }
        Ok(self.laplace_at(u))
    }

    #[inline]
    pub(crate) fn laplace_at(&self, u: f64) -> f64 {
        self.atoms
            .iter()
            .map(|&(b, p)| if b == 0.0 { p } else { p * (-b * u).exp() })
            .sum()
    }

    /// Annealed Feynman–Kac weight `Π_x laplace(l(x))` for a family of local
    /// times whose total is `occupation`.
    ///
    /// For a point mass the product collapses to `exp(-b · occupation)`,
    /// which is evaluated directly.
    pub fn annealed_weight<I>(&self, local_times: I, occupation: f64) -> f64
    where
        I: IntoIterator<Item = f64>,
    {
        if let Some(b) = self.point_mass() {
            return (-b * occupation).exp();
        }
        local_times.into_iter().map(|l| self.laplace_at(l)).product()
    }

    /// Inverse-CDF draw from a uniform `u ∈ [0,1)`.
    #[inline]
    pub fn quantile(&self, u: f64) -> f64 {
        let mut acc = 0.0;
        for &(b, p) in &self.atoms {
            acc += p;
            if u < acc {
                return b;
            }
        }
        self.atoms[self.atoms.len() - 1].0
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.quantile(rng.random::<f64>())
    }
}

/// Read access to a bias environment.
pub trait BiasSource: Sync {
    fn bias_at(&self, site: Site) -> f64;
}

/// Spatially constant bias.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConstantBias(pub f64);

impl BiasSource for ConstantBias {
    fn bias_at(&self, _site: Site) -> f64 {
        self.0
    }
}

/// Explicit bias values on every site of a torus, indexed row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct BiasField {
    torus: Torus,
    values: Vec<f64>,
    /// `(seed, field index)` when the field was sampled.
    pub seed_info: Option<(u64, u64)>,
}

impl BiasField {
    pub fn from_values(torus: Torus, values: Vec<f64>) -> Result<BiasField, DisorderError> {
        if values.len() != torus.len() {
            return Err(DisorderError::SiteMismatch {
                field: values.len(),
                torus: torus.len(),
            });
        }
        if values.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
            return Err(DisorderError::InvalidLaw("bias values must be finite and >= 0".into()));
        }
        Ok(BiasField {
            torus,
            values,
            seed_info: None,
        })
    }

    pub fn constant(torus: Torus, b: f64) -> Result<BiasField, DisorderError> {
        Self::from_values(torus, vec![b; torus.len()])
    }

    /// I.i.d. draws from `law`, one per torus site, from the stream
    /// `(seed, Disorder, index)`.
    pub fn sample(law: &DisorderLaw, torus: Torus, seed: u64, index: u64) -> BiasField {
        let mut rng = rng::stream(seed, Domain::Disorder, index);
        let values = (0..torus.len()).map(|_| law.sample(&mut rng)).collect();
        BiasField {
            torus,
            values,
            seed_info: Some((seed, index)),
        }
    }

    pub fn torus(&self) -> Torus {
        self.torus
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn check_torus(&self, torus: Torus) -> Result<(), DisorderError> {
        if torus != self.torus {
            return Err(DisorderError::SiteMismatch {
                field: self.values.len(),
                torus: torus.len(),
            });
        }
        Ok(())
    }
}

impl BiasSource for BiasField {
    #[inline]
    fn bias_at(&self, site: Site) -> f64 {
        self.values[self.torus.index(site)]
    }
}

/// A bias field on all of `Z^d`, generated on demand from a hash of
/// `(seed, site)`. Two lookups of the same site always agree.
#[derive(Clone, Debug)]
pub struct LazyBias {
    law: DisorderLaw,
    seed: u64,
}

impl LazyBias {
    pub fn new(law: DisorderLaw, seed: u64) -> LazyBias {
        LazyBias { law, seed }
    }
}

impl BiasSource for LazyBias {
    #[inline]
    fn bias_at(&self, site: Site) -> f64 {
        let mut h = rng::splitmix64(self.seed ^ 0x5EED_B1A5);
        for c in site.0 {
            h = rng::splitmix64(h ^ (c as u32 as u64));
        }
        self.law.quantile(rng::unit_from_hash(h))
    }
}
