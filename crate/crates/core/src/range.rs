//! Range statistics of a single walk and the Donsker–Varadhan constant.
//!
//! `C_{d,α}(ν) = (d+α) [(λ/d)^d (ν/α)^α]^{1/(d+α)}` is the asymptotic rate
//! of `-t^{-d/(d+α)} log E⁰ exp(-ν|R_t|)`. For nearest-neighbour kernels
//! the generator is `Δ/(2d)` in the scaling limit, and `λ` is the principal
//! Dirichlet eigenvalue of `-Δ/(2d)` on the unit-volume ball.

use rand::Rng;
use rand_distr::Exp1;
use rustc_hash::FxHashSet;

use crate::error::SimError;
use crate::forward::check_grid;
use crate::kernel::Kernel;
use crate::rng::{self, Domain};
use crate::site::Site;
use crate::stats::{reduce_replicas, Estimate};

/// First positive zero of the Bessel function `J₀`.
pub const BESSEL_J0_FIRST_ZERO: f64 = 2.404_825_557_695_773;

/// `λ` for the nearest-neighbour kernel in dimension `d`.
pub fn lambda_nn(d: usize) -> Result<f64, SimError> {
    use std::f64::consts::PI;
    let ball = match d {
        // Interval of length 1.
        1 => PI * PI,
        // Disc of radius 1/√π.
        2 => BESSEL_J0_FIRST_ZERO * BESSEL_J0_FIRST_ZERO * PI,
        // Ball of radius (3/4π)^{1/3}; the first zero of j₀ is π.
        3 => PI * PI * (4.0 * PI / 3.0).powf(2.0 / 3.0),
        _ => return Err(SimError::InvalidArgument(format!("no λ for dimension {d}"))),
    };
    Ok(ball / (2 * d) as f64)
}

/// `λ` for `kernel` when it is the nearest-neighbour kernel.
pub fn lambda_for(kernel: &Kernel) -> Result<f64, SimError> {
    let d = kernel.dim();
    let nn = Kernel::nearest_neighbor(d).map_err(|e| SimError::InvalidArgument(e.to_string()))?;
    if kernel.support() != nn.support() {
        return Err(SimError::InvalidArgument(
            "λ is only available for nearest-neighbour kernels; supply it explicitly".into(),
        ));
    }
    lambda_nn(d)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DvConstant {
    pub d: usize,
    pub alpha: f64,
    pub lambda: f64,
}

impl DvConstant {
    pub fn new(d: usize, alpha: f64, lambda: f64) -> Result<DvConstant, SimError> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(SimError::InvalidArgument(format!("λ must be positive, got {lambda}")));
        }
        if d == 0 || !(alpha > 0.0 && alpha <= 2.0) {
            return Err(SimError::InvalidArgument(format!("bad (d, α) = ({d}, {alpha})")));
        }
        Ok(DvConstant { d, alpha, lambda })
    }

    pub fn nearest_neighbor(d: usize) -> Result<DvConstant, SimError> {
        DvConstant::new(d, 2.0, lambda_nn(d)?)
    }

    /// `d/(d+α)`.
    pub fn exponent(&self) -> f64 {
        self.d as f64 / (self.d as f64 + self.alpha)
    }

    pub fn at(&self, nu: f64) -> Result<f64, SimError> {
        if !(nu >= 0.0 && nu.is_finite()) {
            return Err(SimError::InvalidArgument(format!("ν must be >= 0, got {nu}")));
        }
        let d = self.d as f64;
        let a = self.alpha;
        let inner = (self.lambda / d).powf(d) * (nu / a).powf(a);
        Ok((d + a) * inner.powf(1.0 / (d + a)))
    }
}

pub fn dv_constant(d: usize, alpha: f64, lambda: f64, nu: f64) -> Result<f64, SimError> {
    DvConstant::new(d, alpha, lambda)?.at(nu)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RangePoint {
    pub t: f64,
    /// Estimate of `E⁰ exp(-ν|R_t|)`.
    pub estimate: Estimate,
    pub mean_range: f64,
}

/// Tracks `|R_t|` of one walk. In one dimension with unit jumps the range is
/// an interval and two integers suffice.
enum Tracker {
    Interval { pos: i32, lo: i32, hi: i32 },
    Set { pos: Site, visited: FxHashSet<Site> },
}

impl Tracker {
    fn new(kernel: &Kernel) -> Tracker {
        let unit_1d = kernel.dim() == 1 && kernel.support().iter().all(|(s, _)| s.0[0].abs() == 1);
        if unit_1d {
            Tracker::Interval { pos: 0, lo: 0, hi: 0 }
        } else {
            let mut visited = FxHashSet::default();
            visited.insert(Site::ORIGIN);
            Tracker::Set {
                pos: Site::ORIGIN,
                visited,
            }
        }
    }

    #[inline]
    fn step(&mut self, z: Site) {
        match self {
            Tracker::Interval { pos, lo, hi } => {
                *pos += z.0[0];
                *lo = (*lo).min(*pos);
                *hi = (*hi).max(*pos);
            }
            Tracker::Set { pos, visited } => {
                *pos = pos.offset(z);
                visited.insert(*pos);
            }
        }
    }

    fn count(&self) -> usize {
        match self {
            Tracker::Interval { lo, hi, .. } => (hi - lo + 1) as usize,
            Tracker::Set { visited, .. } => visited.len(),
        }
    }
}

/// Plain Monte Carlo of `E⁰ exp(-ν|R_t|)` and `E|R_t|` along single walks
/// on `Z^d`; replica `r` uses the stream `(seed, Range, r)`.
pub fn mc_range_functional(
    kernel: &Kernel,
    nu: f64,
    t_grid: &[f64],
    replicas: u64,
    seed: u64,
) -> Result<Vec<RangePoint>, SimError> {
    if replicas < 2 {
        return Err(SimError::InvalidArgument("need at least 2 replicas".into()));
    }
    if !(nu >= 0.0 && nu.is_finite()) {
        return Err(SimError::InvalidArgument(format!("ν must be >= 0, got {nu}")));
    }
    check_grid(t_grid)?;
    let k = t_grid.len();
    let ceiling = (-nu).exp();
    let accs = reduce_replicas(replicas, 2 * k, |r, out| {
        let mut rng = rng::stream(seed, Domain::Range, r);
        let mut tr = Tracker::new(kernel);
        let mut jumps = 0u64;
        let mut clock = rng.sample::<f64, _>(Exp1);
        for (j, &t) in t_grid.iter().enumerate() {
            while clock <= t {
                tr.step(kernel.sample(&mut rng));
                jumps += 1;
                clock += rng.sample::<f64, _>(Exp1);
            }
            let n = tr.count();
            let w = (-nu * n as f64).exp();
            // w can only reach 0 by underflow.
            if n as u64 > jumps + 1 || w > ceiling || (w <= 0.0 && nu * (n as f64) < 700.0) {
                return Err(SimError::InvariantViolation(format!(
                    "range {n} after {jumps} jumps, weight {w}"
                )));
            }
            out[j] = w;
            out[k + j] = n as f64;
        }
        Ok(())
    })?;
    Ok(t_grid
        .iter()
        .enumerate()
        .map(|(j, &t)| RangePoint {
            t,
            estimate: (&accs[j]).into(),
            mean_range: accs[k + j].mean(),
        })
        .collect())
}

/// Local slopes of `log(-log F)` against `log t`: centred differences inside
/// the series, one-sided at the two ends.
pub fn effective_exponent(series: &[(f64, f64)]) -> Result<Vec<(f64, f64)>, SimError> {
    if series.len() < 2 {
        return Err(SimError::InvalidArgument("need at least two points".into()));
    }
    let mut pts = Vec::with_capacity(series.len());
    for &(t, f) in series {
        if !(f > 0.0 && f < 1.0) {
            return Err(SimError::InvalidArgument(format!("F({t}) = {f} is outside (0, 1)")));
        }
        if !(t > 0.0) {
            return Err(SimError::InvalidArgument(format!("time {t} must be positive")));
        }
        pts.push((t.ln(), (-f.ln()).ln()));
    }
    if pts.windows(2).any(|w| w[1].0 <= w[0].0) {
        return Err(SimError::InvalidArgument("times must be strictly increasing".into()));
    }
    let n = pts.len();
    Ok((0..n)
        .map(|i| {
            let (a, b) = (i.saturating_sub(1), (i + 1).min(n - 1));
            (series[i].0, (pts[b].1 - pts[a].1) / (pts[b].0 - pts[a].0))
        })
        .collect())
}
