//! Experiment orchestration.
//!
//! [`run`] turns an [`ExperimentConfig`] into one [`CurveRecord`] per grid
//! time. In `dual-annealed` mode every replica simulates one reference walk
//! from the origin; its local times give the weight of every singleton term
//! of the Möbius expansion (the annealed weight is translation invariant in
//! law) and its range feeds both bounds
//!
//! ```text
//! upper(t) = Σ(f) |Λ(f)| E[m₁^{|R_t|}]
//! lower(t) = (f(1) - f(0)) (E[e^{-ν₂ |R_t|}])^{|Λ(f)|}
//! ```
//!
//! Terms with `|A| ≥ 2` run their own coalescing dual on the same replica
//! stream.

mod config;
mod fit;
mod output;
mod sandwich;

pub use config::{parse_grid, parse_window, ConfigError, ExperimentConfig, KernelSpec, Mode};
pub use fit::{fit_stretch_exponent, StretchFit, MIN_FIT_POINTS};
pub use output::{config_hash, write_curve_csv, write_sandwich_csv};
pub use sandwich::{sandwich_report, SandwichReport};

use rand::Rng;

use crate::disorder::{BiasField, BiasSource, DisorderLaw, LazyBias};
use crate::dual::{annealed_path_weight, DualProcess};
use crate::error::{Error, Result, SimError};
use crate::exact::{exact_dual_values, exact_forward_products, exact_forward_relaxation};
use crate::forward::forward_relaxation;
use crate::kernel::Kernel;
use crate::localfn::LocalFunction;
use crate::range::{effective_exponent, mc_range_functional};
use crate::rng::{self, Domain};
use crate::site::{Lattice, Site, Torus};
use crate::stats::{reduce_replicas, MeanAcc};

/// Standard errors separating an estimate from a bound before the audit
/// flags it.
pub const AUDIT_SIGMAS: f64 = 4.0;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CurveRecord {
    pub t: f64,
    pub estimate: f64,
    pub stderr: f64,
    pub lower: Option<f64>,
    pub lower_stderr: Option<f64>,
    pub upper: Option<f64>,
    pub upper_stderr: Option<f64>,
    pub mean_range: Option<f64>,
    /// Whether `lower ≤ estimate ≤ upper` holds within [`AUDIT_SIGMAS`].
    pub audit: Option<bool>,
    pub local_exponent: Option<f64>,
}

impl CurveRecord {
    fn plain(t: f64, estimate: f64, stderr: f64) -> CurveRecord {
        CurveRecord {
            t,
            estimate,
            stderr,
            lower: None,
            lower_stderr: None,
            upper: None,
            upper_stderr: None,
            mean_range: None,
            audit: None,
            local_exponent: None,
        }
    }
}

/// Nonzero Möbius terms `(f̂(A), A)` with `A ≠ ∅`.
fn expansion(f: &LocalFunction) -> Vec<(f64, Vec<Site>)> {
    let f = f.minimized();
    f.hat_coeffs()
        .iter()
        .enumerate()
        .skip(1)
        .filter(|(_, c)| **c != 0.0)
        .map(|(mask, &c)| {
            let sites = f
                .support()
                .iter()
                .enumerate()
                .filter(|(i, _)| mask >> i & 1 == 1)
                .map(|(_, s)| *s)
                .collect();
            (c, sites)
        })
        .collect()
}

/// The bias field used by torus runs: drawn from the law with the stream
/// `(seed, Disorder, 0)`.
pub fn sampled_field(law: &DisorderLaw, torus: Torus, seed: u64) -> BiasField {
    BiasField::sample(law, torus, seed, 0)
}

pub fn run(config: &ExperimentConfig) -> Result<Vec<CurveRecord>> {
    config.validate()?;
    match config.mode()? {
        Mode::Forward => run_forward(config),
        Mode::Exact => run_exact(config),
        Mode::DualQuenched => run_quenched(config),
        Mode::DualAnnealed => run_annealed(config),
        Mode::Range => run_range(config),
    }
}

fn torus_setup(config: &ExperimentConfig) -> Result<(Torus, crate::kernel::TorusKernel, BiasField)> {
    let side = config.side.ok_or_else(|| Error::Sim(SimError::InvalidArgument("no torus side".into())))?;
    let kernel = config.build_kernel()?;
    let tk = kernel.fold(side)?;
    let torus = tk.torus();
    let field = sampled_field(config.law()?, torus, config.seed);
    Ok((torus, tk, field))
}

fn run_forward(config: &ExperimentConfig) -> Result<Vec<CurveRecord>> {
    let (_, tk, field) = torus_setup(config)?;
    let pts = forward_relaxation(&config.observable, &field, &tk, &config.t_grid, config.replicas, config.seed)?;
    Ok(pts
        .iter()
        .map(|p| CurveRecord::plain(p.t, p.estimate.mean, p.estimate.stderr))
        .collect())
}

fn run_exact(config: &ExperimentConfig) -> Result<Vec<CurveRecord>> {
    let (_, tk, field) = torus_setup(config)?;
    config
        .t_grid
        .iter()
        .map(|&t| {
            let v = exact_forward_relaxation(&config.observable, &field, &tk, t)?;
            Ok(CurveRecord::plain(t, v, 0.0))
        })
        .collect()
}

fn run_quenched(config: &ExperimentConfig) -> Result<Vec<CurveRecord>> {
    let kernel = config.build_kernel()?;
    let law = config.law()?;
    let terms = expansion(&config.observable);
    let (lattice, field): (Lattice, Box<dyn BiasSource>) = match config.torus() {
        Some(torus) => (Lattice::Torus(torus), Box::new(sampled_field(law, torus, config.seed))),
        None => (
            Lattice::Free { dim: config.dim },
            Box::new(LazyBias::new(law.clone(), config.seed)),
        ),
    };
    let grid = &config.t_grid;
    let k = grid.len();
    let accs = reduce_replicas(config.replicas, k, |r, out| {
        let mut rng = rng::stream(config.seed, Domain::Dual, r);
        out.iter_mut().for_each(|x| *x = 0.0);
        for (c, a) in &terms {
            let mut p = DualProcess::new(a, &kernel, lattice, Some(field.as_ref()), &mut rng)?;
            for (j, &t) in grid.iter().enumerate() {
                p.advance_to(t, &mut rng)?;
                out[j] += c * (-p.state().fk_integral).exp();
            }
        }
        Ok(())
    })?;
    Ok(grid
        .iter()
        .zip(&accs)
        .map(|(&t, a)| CurveRecord::plain(t, a.mean(), a.stderr()))
        .collect())
}

/// Per-replica slots of the annealed run, each `k` wide.
const EST: usize = 0;
const UPPER: usize = 1;
const LOWER: usize = 2;
const RANGE: usize = 3;
const UPPER_GAP: usize = 4;
const LOWER_GAP: usize = 5;
const SLOTS: usize = 6;

fn run_annealed(config: &ExperimentConfig) -> Result<Vec<CurveRecord>> {
    let kernel = config.build_kernel()?;
    let law = config.law()?;
    annealed_curve(&kernel, law, &config.observable, &config.t_grid, config.replicas, config.seed)
}

/// Annealed relaxation `m(t) = E^{η≡1}[f(η_t)] - f(0)` averaged over the
/// disorder, with both bounds on shared range samples.
pub fn annealed_curve(
    kernel: &Kernel,
    law: &DisorderLaw,
    f: &LocalFunction,
    grid: &[f64],
    replicas: u64,
    seed: u64,
) -> Result<Vec<CurveRecord>> {
    let lattice = Lattice::Free { dim: kernel.dim() };
    let terms = expansion(f);
    let singleton_coeff: f64 = terms.iter().filter(|(_, a)| a.len() == 1).map(|(c, _)| c).sum();
    let multi: Vec<&(f64, Vec<Site>)> = terms.iter().filter(|(_, a)| a.len() > 1).collect();
    let (sigma, support) = f.sigma_and_support();
    let size = support.len();
    let upper_scale = sigma * size as f64;
    let m1 = law.m1();
    let nu2 = law.nu2();
    let gap = f.gap();
    let lower_ok = nu2.is_some() && f.is_monotone() && size > 0;
    let k = grid.len();

    let accs = reduce_replicas(replicas, SLOTS * k, |r, out| {
        let mut rng = rng::stream(seed, Domain::Dual, r);
        let mut walk = DualProcess::new(&[Site::ORIGIN], kernel, lattice, None, &mut rng)?;
        let mut est = vec![0.0; k];
        let mut ranges = vec![0usize; k];
        for (j, &t) in grid.iter().enumerate() {
            walk.advance_to(t, &mut rng)?;
            let st = walk.state();
            ranges[j] = st.range_count();
            if singleton_coeff != 0.0 {
                est[j] += singleton_coeff * annealed_path_weight(law, st)?;
            }
        }
        for (c, a) in &multi {
            let mut p = DualProcess::new(a, kernel, lattice, None, &mut rng)?;
            for (j, &t) in grid.iter().enumerate() {
                p.advance_to(t, &mut rng)?;
                est[j] += c * annealed_path_weight(law, p.state())?;
            }
        }
        for j in 0..k {
            let n = ranges[j] as f64;
            let u = m1.powf(n);
            let v = nu2.map_or(0.0, |nu| (-nu * n).exp());
            out[EST * k + j] = est[j];
            out[UPPER * k + j] = u;
            out[LOWER * k + j] = v;
            out[RANGE * k + j] = n;
            out[UPPER_GAP * k + j] = upper_scale * u - est[j];
            out[LOWER_GAP * k + j] = est[j] - gap * v;
        }
        Ok(())
    })?;

    let slot = |s: usize, j: usize| -> &MeanAcc { &accs[s * k + j] };
    Ok(grid
        .iter()
        .enumerate()
        .map(|(j, &t)| {
            let e = slot(EST, j);
            let upper = upper_scale * slot(UPPER, j).mean();
            let upper_se = upper_scale * slot(UPPER, j).stderr();
            let up_ok = slot(UPPER_GAP, j).mean() >= -AUDIT_SIGMAS * slot(UPPER_GAP, j).stderr();
            let (lower, lower_se, low_ok) = if lower_ok {
                let mv = slot(LOWER, j).mean();
                let lower = gap * mv.powi(size as i32);
                let lower_se = gap * size as f64 * mv.powi(size as i32 - 1) * slot(LOWER, j).stderr();
                // The paired difference is exact for one site; otherwise
                // combine the two errors.
                let sigma = if size == 1 {
                    slot(LOWER_GAP, j).stderr()
                } else {
                    e.stderr().hypot(lower_se)
                };
                (Some(lower), Some(lower_se), lower <= e.mean() + AUDIT_SIGMAS * sigma)
            } else {
                (None, None, true)
            };
            CurveRecord {
                t,
                estimate: e.mean(),
                stderr: e.stderr(),
                lower,
                lower_stderr: lower_se,
                upper: Some(upper),
                upper_stderr: Some(upper_se),
                mean_range: Some(slot(RANGE, j).mean()),
                audit: Some(up_ok && low_ok),
                local_exponent: None,
            }
        })
        .collect())
}

fn run_range(config: &ExperimentConfig) -> Result<Vec<CurveRecord>> {
    let kernel = config.build_kernel()?;
    let pts = mc_range_functional(&kernel, config.nu, &config.t_grid, config.replicas, config.seed)?;
    let series: Vec<(f64, f64)> = pts.iter().map(|p| (p.t, p.estimate.mean)).collect();
    let slopes = effective_exponent(&series).ok();
    Ok(pts
        .iter()
        .enumerate()
        .map(|(j, p)| CurveRecord {
            mean_range: Some(p.mean_range),
            local_exponent: slopes.as_ref().map(|s| s[j].1),
            ..CurveRecord::plain(p.t, p.estimate.mean, p.estimate.stderr)
        })
        .collect())
}

/// Per-site bias drawn uniformly from `[0, scale)` with the stream
/// `(seed, Quenched, index)`.
pub fn uniform_field(torus: Torus, scale: f64, seed: u64, index: u64) -> BiasField {
    let mut rng = rng::stream(seed, Domain::Quenched, index);
    let values = (0..torus.len()).map(|_| scale * rng.random::<f64>()).collect();
    BiasField::from_values(torus, values).expect("uniform draws are valid biases")
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DualityRow {
    pub field: u64,
    pub t: f64,
    /// Subset of torus sites, bit `i` for torus index `i`.
    pub subset: usize,
    pub forward: f64,
    pub dual: f64,
}

impl DualityRow {
    pub fn gap(&self) -> f64 {
        (self.forward - self.dual).abs()
    }
}

/// Compares `E^{η≡1} Π_{x∈A} η_t(x)` from the forward generator with the
/// dual Feynman–Kac value for every nonempty `A`, over `fields` random bias
/// fields (uniform on `[0, 2)`) and the given times.
pub fn duality_audit(tk: &crate::kernel::TorusKernel, fields: u64, times: &[f64], seed: u64) -> Result<Vec<DualityRow>> {
    let mut rows = Vec::new();
    for i in 0..fields {
        let field = uniform_field(tk.torus(), 2.0, seed, i);
        for &t in times {
            let fwd = exact_forward_products(&field, tk, t)?;
            let dual = exact_dual_values(&field, tk, t)?;
            for a in 1..fwd.len() {
                rows.push(DualityRow {
                    field: i,
                    t,
                    subset: a,
                    forward: fwd[a],
                    dual: dual[a],
                });
            }
        }
    }
    Ok(rows)
}
