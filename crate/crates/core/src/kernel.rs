//! Jump kernels `p(x)` on `Z^d`.
//!
//! A kernel is a finitely supported, symmetric probability distribution on
//! nonzero displacements. It carries its stability data: the index `alpha`
//! and either the diffusion matrix `D` (`alpha = 2`, so `1 - p̂(k) ≈ ⟨k, D k⟩`)
//! or a scalar tail constant `c` (`alpha < 2`, one dimension only, so
//! `1 - p̂(k) ≈ c |k|^alpha`).

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use thiserror::Error;

use crate::site::{Site, Torus, MAX_DIM};

const SUM_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KernelError {
    #[error("dimension {0} outside the supported range 1..=3")]
    Dimension(usize),
    #[error("alpha = {0} outside (0, 2)")]
    Alpha(f64),
    #[error("cutoff must be at least 1")]
    Cutoff,
    #[error("torus side {0} < 2")]
    Side(usize),
    #[error("invalid kernel: {0}")]
    Invalid(String),
}

#[derive(Clone, Debug)]
pub struct Kernel {
    dim: usize,
    support: Vec<(Site, f64)>,
    alpha: f64,
    dmatrix: [[f64; MAX_DIM]; MAX_DIM],
    tail_constant: f64,
    sampler: WeightedIndex<f64>,
}

/// Result of [`Kernel::verify_assumption`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AssumptionReport {
    /// `max |p̂(k) - 1 + D(k)| / |k|^alpha` over the grid.
    pub max_residual: f64,
    /// `p̂(k) < 1` at every grid point that is not a multiple of `2π`.
    pub aperiodic_ok: bool,
}

impl Kernel {
    /// Uniform jumps to the `2d` nearest neighbours.
    pub fn nearest_neighbor(dim: usize) -> Result<Kernel, KernelError> {
        if !(1..=MAX_DIM).contains(&dim) {
            return Err(KernelError::Dimension(dim));
        }
        let w = 1.0 / (2 * dim) as f64;
        let support = (0..dim)
            .flat_map(|i| [(Site::on_axis(i, 1), w), (Site::on_axis(i, -1), w)])
            .collect();
        let mut dmatrix = [[0.0; MAX_DIM]; MAX_DIM];
        for (i, row) in dmatrix.iter_mut().enumerate().take(dim) {
            row[i] = w;
        }
        Self::build(dim, support, 2.0, dmatrix, 0.0)
    }

    /// One-dimensional kernel with `p(x) ∝ |x|^{-(1+alpha)}` on `1 ≤ |x| ≤ cutoff`.
    ///
    /// The tail constant is the least-squares coefficient `c` of
    /// `1 - p̂(k) ≈ c |k|^alpha` on the grid [`TAIL_FIT_GRID`].
    pub fn power_law(alpha: f64, cutoff: u32) -> Result<Kernel, KernelError> {
        if !(alpha > 0.0 && alpha < 2.0) {
            return Err(KernelError::Alpha(alpha));
        }
        if cutoff == 0 {
            return Err(KernelError::Cutoff);
        }
        let raw: Vec<f64> = (1..=cutoff as i32)
            .map(|x| (x as f64).powf(-(1.0 + alpha)))
            .collect();
        let norm = 2.0 * raw.iter().sum::<f64>();
        let mut support = Vec::with_capacity(2 * raw.len());
        for (i, w) in raw.iter().enumerate() {
            let x = i as i32 + 1;
            support.push((Site::new(&[x]), w / norm));
            support.push((Site::new(&[-x]), w / norm));
        }
        let mut k = Self::build(1, support, alpha, [[0.0; MAX_DIM]; MAX_DIM], 0.0)?;
        k.tail_constant = k.fit_tail_constant();
        Ok(k)
    }

    /// Arbitrary symmetric finite-range kernel. Finite second moments put it
    /// in the Gaussian class: `alpha = 2`, `D = ½ Σ p(x) x xᵀ`.
    pub fn from_weights(dim: usize, weights: Vec<(Site, f64)>) -> Result<Kernel, KernelError> {
        if !(1..=MAX_DIM).contains(&dim) {
            return Err(KernelError::Dimension(dim));
        }
        let mut dmatrix = [[0.0; MAX_DIM]; MAX_DIM];
        for (x, w) in &weights {
            for i in 0..dim {
                for j in 0..dim {
                    dmatrix[i][j] += 0.5 * w * x.0[i] as f64 * x.0[j] as f64;
                }
            }
        }
        Self::build(dim, weights, 2.0, dmatrix, 0.0)
    }

    fn build(
        dim: usize,
        support: Vec<(Site, f64)>,
        alpha: f64,
        dmatrix: [[f64; MAX_DIM]; MAX_DIM],
        tail_constant: f64,
    ) -> Result<Kernel, KernelError> {
        if support.is_empty() {
            return Err(KernelError::Invalid("empty support".into()));
        }
        let mut total = 0.0;
        for (x, w) in &support {
            if x.0[dim..].iter().any(|&c| c != 0) {
                return Err(KernelError::Invalid(format!("{x:?} has coordinates beyond d={dim}")));
            }
            if *x == Site::ORIGIN {
                return Err(KernelError::Invalid("p(0) must be 0".into()));
            }
            if !(*w >= 0.0 && w.is_finite()) {
                return Err(KernelError::Invalid(format!("negative weight at {x:?}")));
            }
            total += w;
        }
        if (total - 1.0).abs() > SUM_TOL {
            return Err(KernelError::Invalid(format!("weights sum to {total}")));
        }
        for (x, w) in &support {
            let mirror: f64 = support
                .iter()
                .filter(|(y, _)| *y == x.neg())
                .map(|(_, v)| v)
                .sum();
            if (mirror - w).abs() > SUM_TOL {
                return Err(KernelError::Invalid(format!("asymmetric at {x:?}")));
            }
        }
        if alpha == 2.0 && !positive_definite(&dmatrix, dim) {
            return Err(KernelError::Invalid("D is not positive definite".into()));
        }
        let sampler = WeightedIndex::new(support.iter().map(|(_, w)| *w))
            .map_err(|e| KernelError::Invalid(e.to_string()))?;
        Ok(Kernel {
            dim,
            support,
            alpha,
            dmatrix,
            tail_constant,
            sampler,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn support(&self) -> &[(Site, f64)] {
        &self.support
    }

    pub fn dmatrix(&self) -> [[f64; MAX_DIM]; MAX_DIM] {
        self.dmatrix
    }

    pub fn tail_constant(&self) -> f64 {
        self.tail_constant
    }

    pub fn weight(&self, x: Site) -> f64 {
        self.support.iter().filter(|(y, _)| *y == x).map(|(_, w)| w).sum()
    }

    /// Draws one displacement.
    #[inline]
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Site {
        self.support[self.sampler.sample(rng)].0
    }

    /// `p̂(k) = Σ p(x) cos⟨k, x⟩` (real by symmetry).
    pub fn char_fn(&self, k: &[f64]) -> f64 {
        self.support.iter().map(|(x, w)| w * x.dot(k).cos()).sum()
    }

    /// Leading small-`k` behaviour `D(k)` of `1 - p̂(k)`.
    pub fn d_of_k(&self, k: &[f64]) -> f64 {
        if self.alpha == 2.0 {
            let mut s = 0.0;
            for i in 0..self.dim {
                for j in 0..self.dim {
                    s += self.dmatrix[i][j] * k[i] * k[j];
                }
            }
            s
        } else {
            self.tail_constant * norm(k).powf(self.alpha)
        }
    }

    /// Checks the small-`k` expansion and aperiodicity on `kgrid`.
    ///
    /// `tol` is the margin below 1 that `p̂(k)` must keep away from the
    /// reciprocal lattice `2πZ^d`.
    pub fn verify_assumption(&self, kgrid: &[Vec<f64>], tol: f64) -> AssumptionReport {
        let mut max_residual: f64 = 0.0;
        let mut aperiodic_ok = true;
        for k in kgrid {
            let kn = norm(k);
            if kn == 0.0 {
                continue;
            }
            let phat = self.char_fn(k);
            let r = (phat - 1.0 + self.d_of_k(k)).abs() / kn.powf(self.alpha);
            max_residual = max_residual.max(r);
            let on_lattice = k
                .iter()
                .all(|ki| (ki / (2.0 * std::f64::consts::PI)).fract().abs() < 1e-15);
            if !on_lattice && phat >= 1.0 - tol {
                aperiodic_ok = false;
            }
        }
        AssumptionReport {
            max_residual,
            aperiodic_ok,
        }
    }

    fn fit_tail_constant(&self) -> f64 {
        let (mut num, mut den) = (0.0, 0.0);
        for k in tail_fit_grid() {
            let y = 1.0 - self.char_fn(&[k]);
            let ka = k.powf(self.alpha);
            num += y * ka;
            den += ka * ka;
        }
        num / den
    }

    /// Folds the kernel onto a side-`side` torus.
    pub fn fold(&self, side: usize) -> Result<TorusKernel, KernelError> {
        if side < 2 {
            return Err(KernelError::Side(side));
        }
        let torus = Torus::new(self.dim, side).map_err(|e| KernelError::Invalid(e.to_string()))?;
        let mut folded = vec![0.0; torus.len()];
        for (x, w) in &self.support {
            folded[torus.index(*x)] += w;
        }
        let sampler =
            WeightedIndex::new(folded.iter().copied()).map_err(|e| KernelError::Invalid(e.to_string()))?;
        Ok(TorusKernel {
            base: self.clone(),
            torus,
            folded,
            sampler,
        })
    }
}

/// The `k` grid used for the tail-constant fit: 46 equally spaced points on
/// `[0.01, 0.1]`.
pub const TAIL_FIT_GRID: (f64, f64, usize) = (0.01, 0.1, 46);

pub fn tail_fit_grid() -> impl Iterator<Item = f64> {
    let (a, b, n) = TAIL_FIT_GRID;
    (0..n).map(move |i| a + (b - a) * i as f64 / (n - 1) as f64)
}

fn norm(k: &[f64]) -> f64 {
    k.iter().map(|x| x * x).sum::<f64>().sqrt()
}

// Sylvester's criterion on the leading d×d block.
fn positive_definite(m: &[[f64; MAX_DIM]; MAX_DIM], dim: usize) -> bool {
    for i in 0..dim {
        for j in 0..dim {
            if (m[i][j] - m[j][i]).abs() > 1e-12 {
                return false;
            }
        }
    }
    let d1 = m[0][0];
    let d2 = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    let d3 = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
        - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
    [d1, d2, d3][..dim].iter().all(|&x| x > 0.0)
}

/// A kernel folded onto a finite torus. `folded[i]` is the probability of a
/// displacement congruent to torus site `i`; index 0 (staying put) can carry
/// mass when the kernel range reaches the torus side.
#[derive(Clone, Debug)]
pub struct TorusKernel {
    base: Kernel,
    torus: Torus,
    folded: Vec<f64>,
    sampler: WeightedIndex<f64>,
}

impl TorusKernel {
    pub fn base(&self) -> &Kernel {
        &self.base
    }

    pub fn torus(&self) -> Torus {
        self.torus
    }

    pub fn side(&self) -> usize {
        self.torus.side
    }

    pub fn folded(&self) -> &[f64] {
        &self.folded
    }

    pub fn folded_at(&self, x: Site) -> f64 {
        self.folded[self.torus.index(x)]
    }

    /// Nonzero folded entries as `(displacement index, probability)`.
    pub fn entries(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.folded
            .iter()
            .enumerate()
            .filter(|(_, w)| **w > 0.0)
            .map(|(i, w)| (i, *w))
    }

    /// Torus index of `from + displacement`.
    #[inline]
    pub fn shift(&self, from: usize, disp: usize) -> usize {
        let a = self.torus.site(from);
        let b = self.torus.site(disp);
        self.torus.index(a.offset(b))
    }

    /// Draws a partner site for `from`.
    #[inline]
    pub fn sample_partner<R: Rng + ?Sized>(&self, from: usize, rng: &mut R) -> usize {
        let disp = self.sampler.sample(rng);
        self.shift(from, disp)
    }
}
