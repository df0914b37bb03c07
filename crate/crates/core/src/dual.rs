//! Coalescing dual process with Feynman–Kac weights.
//!
//! Each particle jumps at rate 1 by a displacement drawn from the kernel; a
//! particle landing on an occupied site merges with it. Along the way the
//! engine records per-site local times `l_t(x)`, the occupation integral
//! `∫|A_s| ds` and, when a bias is attached, `∫ V_β(A_s) ds` with
//! `V_β(A) = Σ_{x∈A} β(x)`.
//!
//! Time integrals of piecewise-constant quantities are accumulated per
//! constant stretch, so a potential that never changes integrates to exactly
//! `V · t`.

use rand::Rng;
use rand_distr::Exp1;
use rustc_hash::{FxHashMap, FxHashSet};

use crate::disorder::{BiasSource, DisorderLaw};
use crate::error::SimError;
use crate::forward::check_grid;
use crate::kernel::Kernel;
use crate::rng::{self, Domain};
use crate::site::{Lattice, Site};
use crate::stats::{reduce_replicas, Estimate};

#[derive(Clone, Debug, Default)]
pub struct DualState {
    pub particles: Vec<Site>,
    /// `∫₀ᵗ V_β(A_s) ds`; zero when no bias is attached.
    pub fk_integral: f64,
    /// `l_t(x)` for every site ever occupied.
    pub local_times: FxHashMap<Site, f64>,
    /// `∫₀ᵗ |A_s| ds`.
    pub occupation: f64,
    pub clock: f64,
}

impl DualState {
    /// `|R̄_t|`, the number of distinct sites ever occupied.
    pub fn range_count(&self) -> usize {
        self.local_times.len()
    }

    pub fn range(&self) -> RangeTracker {
        RangeTracker {
            visited: self.local_times.keys().copied().collect(),
        }
    }

    /// Checks `Σ_x l_t(x) = ∫|A_s| ds ≤ t · |A_0|`.
    pub fn check_invariants(&self, initial: usize) -> Result<(), SimError> {
        let total: f64 = self.local_times.values().sum();
        let tol = 1e-9 * self.occupation.max(1.0);
        if (total - self.occupation).abs() > tol {
            return Err(SimError::InvariantViolation(format!(
                "local times sum to {total}, occupation is {}",
                self.occupation
            )));
        }
        if self.occupation > self.clock * initial as f64 + tol {
            return Err(SimError::InvariantViolation("occupation exceeds t·|A_0|".into()));
        }
        Ok(())
    }
}

/// Distinct sites visited.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RangeTracker {
    visited: FxHashSet<Site>,
}

impl RangeTracker {
    pub fn visit(&mut self, s: Site) {
        self.visited.insert(s);
    }

    pub fn count(&self) -> usize {
        self.visited.len()
    }

    pub fn contains(&self, s: &Site) -> bool {
        self.visited.contains(s)
    }

    pub fn is_subset(&self, other: &RangeTracker) -> bool {
        self.visited.is_subset(&other.visited)
    }
}

/// Integral of a piecewise-constant rate, split only where the rate changes.
#[derive(Clone, Copy, Debug, Default)]
struct Segments {
    acc: f64,
    start: f64,
    rate: f64,
}

impl Segments {
    fn update(&mut self, now: f64, rate: f64) {
        if rate != self.rate {
            self.acc += self.rate * (now - self.start);
            self.start = now;
            self.rate = rate;
        }
    }

    fn value(&self, now: f64) -> f64 {
        self.acc + self.rate * (now - self.start)
    }
}

/// Event-driven simulator of the coalescing dual.
pub struct DualProcess<'a> {
    kernel: &'a Kernel,
    lattice: Lattice,
    bias: Option<&'a dyn BiasSource>,
    state: DualState,
    occupied: FxHashSet<Site>,
    next_event: f64,
    fk: Segments,
    occ: Segments,
    initial: usize,
}

impl<'a> DualProcess<'a> {
    pub fn new<R: Rng>(
        start: &[Site],
        kernel: &'a Kernel,
        lattice: Lattice,
        bias: Option<&'a dyn BiasSource>,
        rng: &mut R,
    ) -> Result<DualProcess<'a>, SimError> {
        if start.is_empty() {
            return Err(SimError::InvalidArgument("dual needs a nonempty start set".into()));
        }
        if kernel.dim() != lattice.dim() {
            return Err(SimError::InvalidArgument("kernel and lattice dimensions differ".into()));
        }
        let mut particles = Vec::with_capacity(start.len());
        let mut occupied = FxHashSet::default();
        for &s in start {
            let s = lattice.wrap(s);
            if occupied.insert(s) {
                particles.push(s);
            }
        }
        let local_times = particles.iter().map(|&s| (s, 0.0)).collect();
        let mut p = DualProcess {
            kernel,
            lattice,
            bias,
            state: DualState {
                particles,
                local_times,
                ..DualState::default()
            },
            occupied,
            next_event: 0.0,
            fk: Segments::default(),
            occ: Segments::default(),
            initial: 0,
        };
        p.initial = p.state.particles.len();
        p.fk.rate = p.potential();
        p.occ.rate = p.initial as f64;
        p.next_event = p.draw_wait(rng);
        Ok(p)
    }

    fn potential(&self) -> f64 {
        match self.bias {
            Some(b) => self.state.particles.iter().map(|&s| b.bias_at(s)).sum(),
            None => 0.0,
        }
    }

    fn draw_wait<R: Rng>(&self, rng: &mut R) -> f64 {
        self.state.clock + rng.sample::<f64, _>(Exp1) / self.state.particles.len() as f64
    }

    fn accrue(&mut self, until: f64) {
        let dt = until - self.state.clock;
        if dt > 0.0 {
            for s in &self.state.particles {
                *self.state.local_times.get_mut(s).expect("occupied site has a local time") += dt;
            }
        }
        self.state.clock = until;
    }

    /// Runs the process up to time `t` (which must not precede the clock).
    pub fn advance_to<R: Rng>(&mut self, t: f64, rng: &mut R) -> Result<(), SimError> {
        if t < self.state.clock {
            return Err(SimError::InvalidArgument("cannot run the dual backwards".into()));
        }
        while self.next_event <= t {
            let now = self.next_event;
            self.accrue(now);
            self.jump(rng)?;
            self.fk.update(now, self.potential());
            self.occ.update(now, self.state.particles.len() as f64);
            self.next_event = self.draw_wait(rng);
        }
        self.accrue(t);
        self.state.fk_integral = self.fk.value(t);
        self.state.occupation = self.occ.value(t);
        Ok(())
    }

    fn jump<R: Rng>(&mut self, rng: &mut R) -> Result<(), SimError> {
        let n = self.state.particles.len();
        let i = if n == 1 { 0 } else { rng.random_range(0..n) };
        let from = self.state.particles[i];
        let to = self.lattice.wrap(from.offset(self.kernel.sample(rng)));
        if to == from {
            return Ok(());
        }
        if n > 1 {
            self.occupied.remove(&from);
            if !self.occupied.insert(to) {
                self.state.particles.swap_remove(i);
                if self.state.particles.len() >= n {
                    return Err(SimError::InvariantViolation("particle count increased".into()));
                }
                return Ok(());
            }
        }
        self.state.particles[i] = to;
        self.state.local_times.entry(to).or_insert(0.0);
        Ok(())
    }

    pub fn state(&self) -> &DualState {
        &self.state
    }

    pub fn into_state(self) -> DualState {
        self.state
    }

    pub fn initial_count(&self) -> usize {
        self.initial
    }
}

/// Simulates the dual from `start` up to time `t`.
pub fn dual_evolve<R: Rng>(
    start: &[Site],
    kernel: &Kernel,
    lattice: Lattice,
    t: f64,
    rng: &mut R,
    bias: Option<&dyn BiasSource>,
) -> Result<DualState, SimError> {
    let mut p = DualProcess::new(start, kernel, lattice, bias, rng)?;
    p.advance_to(t, rng)?;
    p.state().check_invariants(p.initial_count())?;
    Ok(p.into_state())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DualPoint {
    pub t: f64,
    pub estimate: Estimate,
    pub mean_range: f64,
    pub mean_particles: f64,
}

fn run_dual_estimator<W>(
    start: &[Site],
    kernel: &Kernel,
    lattice: Lattice,
    bias: Option<&dyn BiasSource>,
    t_grid: &[f64],
    replicas: u64,
    seed: u64,
    weight: W,
) -> Result<Vec<DualPoint>, SimError>
where
    W: Fn(&DualState) -> Result<f64, SimError> + Sync,
{
    if replicas < 2 {
        return Err(SimError::InvalidArgument("need at least 2 replicas".into()));
    }
    check_grid(t_grid)?;
    let k = t_grid.len();
    let accs = reduce_replicas(replicas, 3 * k, |r, out| {
        let mut rng = rng::stream(seed, Domain::Dual, r);
        let mut p = DualProcess::new(start, kernel, lattice, bias, &mut rng)?;
        for (j, &t) in t_grid.iter().enumerate() {
            p.advance_to(t, &mut rng)?;
            let st = p.state();
            out[j] = weight(st)?;
            out[k + j] = st.range_count() as f64;
            out[2 * k + j] = st.particles.len() as f64;
        }
        Ok(())
    })?;
    Ok(t_grid
        .iter()
        .enumerate()
        .map(|(j, &t)| DualPoint {
            t,
            estimate: (&accs[j]).into(),
            mean_range: accs[k + j].mean(),
            mean_particles: accs[2 * k + j].mean(),
        })
        .collect())
}

/// Monte Carlo of `E^A exp(-∫₀ᵗ V_β(A_s) ds)` for one fixed bias
/// environment, which by duality equals `E^{η≡1}_β H(η_t, A)`.
pub fn quenched_dual_expectation(
    start: &[Site],
    bias: &dyn BiasSource,
    kernel: &Kernel,
    lattice: Lattice,
    t_grid: &[f64],
    replicas: u64,
    seed: u64,
) -> Result<Vec<DualPoint>, SimError> {
    run_dual_estimator(start, kernel, lattice, Some(bias), t_grid, replicas, seed, |st| {
        Ok((-st.fk_integral).exp())
    })
}

/// Annealed weight of one dual path, with the pathwise floor
/// `Π_x laplace(l(x)) ≥ e^{-ν₂ |R̄_t|}` checked when `ν₂` is finite.
pub fn annealed_path_weight(law: &DisorderLaw, st: &DualState) -> Result<f64, SimError> {
    let w = law.annealed_weight(st.local_times.values().copied(), st.occupation);
    if let Some(nu2) = law.nu2() {
        let floor = (-nu2 * st.range_count() as f64).exp();
        if w < floor * (1.0 - 1e-12) {
            return Err(SimError::InvariantViolation(format!(
                "annealed weight {w} below e^(-ν₂|R|) = {floor}"
            )));
        }
    }
    Ok(w)
}

/// Monte Carlo of the disorder-averaged dual expectation
/// `∫ E^A exp(-Σ_x β(x) l_t(x)) 𝔹(dβ) = E^A Π_x laplace(l_t(x))`.
/// The disorder is never sampled.
pub fn annealed_dual_expectation(
    start: &[Site],
    law: &DisorderLaw,
    kernel: &Kernel,
    lattice: Lattice,
    t_grid: &[f64],
    replicas: u64,
    seed: u64,
) -> Result<Vec<DualPoint>, SimError> {
    run_dual_estimator(start, kernel, lattice, None, t_grid, replicas, seed, |st| {
        annealed_path_weight(law, st)
    })
}

fn check_distinct(starts: &[Site], lattice: Lattice) -> Result<Vec<Site>, SimError> {
    let wrapped: Vec<Site> = starts.iter().map(|&s| lattice.wrap(s)).collect();
    for (i, s) in wrapped.iter().enumerate() {
        if wrapped[..i].contains(s) {
            return Err(SimError::InvalidArgument(format!("duplicate start site {s:?}")));
        }
    }
    if wrapped.is_empty() {
        return Err(SimError::InvalidArgument("no walkers".into()));
    }
    Ok(wrapped)
}

/// Union of the ranges of independent walks from distinct `starts`.
pub fn independent_walkers_range<R: Rng>(
    starts: &[Site],
    kernel: &Kernel,
    lattice: Lattice,
    t: f64,
    rng: &mut R,
) -> Result<RangeTracker, SimError> {
    let starts = check_distinct(starts, lattice)?;
    let mut range = RangeTracker::default();
    for &s in &starts {
        let mut pos = s;
        range.visit(pos);
        let mut clock = rng.sample::<f64, _>(Exp1);
        while clock <= t {
            pos = lattice.wrap(pos.offset(kernel.sample(rng)));
            range.visit(pos);
            clock += rng.sample::<f64, _>(Exp1);
        }
    }
    Ok(range)
}

#[derive(Clone, Debug)]
pub struct CoupledRanges {
    pub dual: RangeTracker,
    pub walkers: RangeTracker,
    pub dual_particles: usize,
}

/// Runs `n` independent walkers and a coalescing dual on the same clocks:
/// dual particle `i` rides walker `i` until it lands on another live dual
/// particle, after which only the walker continues. The dual set is checked
/// to stay inside the walker positions after every event.
pub fn coupled_dual_and_walkers<R: Rng>(
    starts: &[Site],
    kernel: &Kernel,
    lattice: Lattice,
    t: f64,
    rng: &mut R,
) -> Result<CoupledRanges, SimError> {
    let mut walkers = check_distinct(starts, lattice)?;
    let n = walkers.len();
    let mut alive = vec![true; n];
    let mut dual = RangeTracker::default();
    let mut all = RangeTracker::default();
    for &w in &walkers {
        dual.visit(w);
        all.visit(w);
    }
    let mut clock = rng.sample::<f64, _>(Exp1) / n as f64;
    while clock <= t {
        let i = rng.random_range(0..n);
        let to = lattice.wrap(walkers[i].offset(kernel.sample(rng)));
        if alive[i] && to != walkers[i] {
            let hit = (0..n).any(|j| j != i && alive[j] && walkers[j] == to);
            if hit {
                alive[i] = false;
            } else {
                dual.visit(to);
            }
        }
        walkers[i] = to;
        all.visit(to);
        for j in (0..n).filter(|&j| alive[j]) {
            if !all.contains(&walkers[j]) {
                return Err(SimError::InvariantViolation("dual particle off the walkers".into()));
            }
        }
        clock += rng.sample::<f64, _>(Exp1) / n as f64;
    }
    if !dual.is_subset(&all) {
        return Err(SimError::InvariantViolation("dual range exceeds walker range".into()));
    }
    Ok(CoupledRanges {
        dual,
        walkers: all,
        dual_particles: alive.iter().filter(|&&a| a).count(),
    })
}
