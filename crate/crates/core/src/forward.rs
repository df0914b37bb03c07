//! Forward spin dynamics on a finite torus.
//!
//! The process is realized by its graphical construction: every site carries
//! a rate-1 resampling clock (copy the opinion of a partner drawn from the
//! folded kernel) and a rate-`β(x)` kill clock (set the opinion to 0). The
//! superposition of all clocks is a Poisson stream of rate `N + Σ β`, so one
//! exponential draw plus one site choice realizes each event. Flip rates
//! induced by these events are exactly
//! `c_β(x, η) = β(x) η(x) + Σ_y p(y - x) 1{η(x) ≠ η(y)}`.
//!
//! Two configurations driven by the same event stream stay ordered: copy
//! and kill events are both monotone maps.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rand_distr::Exp1;

use crate::disorder::BiasField;
use crate::error::SimError;
use crate::kernel::TorusKernel;
use crate::localfn::LocalFunction;
use crate::rng::{self, Domain};
use crate::site::Torus;
use crate::stats::{reduce_replicas, Estimate};

/// Opinions on a torus, one bit per site in row-major order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Configuration {
    torus: Torus,
    bits: Vec<u64>,
}

impl Configuration {
    pub fn all_zeros(torus: Torus) -> Configuration {
        Configuration {
            torus,
            bits: vec![0; torus.len().div_ceil(64)],
        }
    }

    pub fn all_ones(torus: Torus) -> Configuration {
        Self::from_fn(torus, |_| true)
    }

    pub fn from_fn<F: Fn(usize) -> bool>(torus: Torus, f: F) -> Configuration {
        let mut c = Self::all_zeros(torus);
        for i in 0..torus.len() {
            c.set(i, f(i));
        }
        c
    }

    /// Configuration from the low `N` bits of `mask` (site `i` ↔ bit `i`).
    pub fn from_mask(torus: Torus, mask: u64) -> Configuration {
        Self::from_fn(torus, |i| mask >> i & 1 == 1)
    }

    pub fn torus(&self) -> Torus {
        self.torus
    }

    #[inline]
    pub fn get(&self, i: usize) -> bool {
        self.bits[i / 64] >> (i % 64) & 1 == 1
    }

    #[inline]
    pub fn set(&mut self, i: usize, v: bool) {
        let w = &mut self.bits[i / 64];
        if v {
            *w |= 1 << (i % 64);
        } else {
            *w &= !(1 << (i % 64));
        }
    }

    pub fn count_ones(&self) -> usize {
        self.bits.iter().map(|w| w.count_ones() as usize).sum()
    }

    /// Sitewise `self ≤ other`.
    pub fn le(&self, other: &Configuration) -> bool {
        self.bits.iter().zip(&other.bits).all(|(a, b)| a & !b == 0)
    }

    pub fn to_mask(&self) -> u64 {
        assert!(self.torus.len() <= 64);
        self.bits[0]
    }

    /// Applies one graphical event; returns whether the opinion changed.
    #[inline]
    pub fn apply(&mut self, ev: &Event) -> bool {
        let before = self.get(ev.site);
        let after = match ev.kind {
            EventKind::Resample { partner } => self.get(partner),
            EventKind::Kill => false,
        };
        self.set(ev.site, after);
        before != after
    }

    pub fn apply_log(&mut self, log: &EventLog) {
        for ev in &log.0 {
            self.apply(ev);
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EventKind {
    Resample { partner: usize },
    Kill,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Event {
    pub time: f64,
    pub site: usize,
    pub kind: EventKind,
}

/// A recorded stretch of the graphical construction. Times strictly increase.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct EventLog(pub Vec<Event>);

/// Precomputed event rates for one `(bias, kernel)` pair.
pub struct Graphical<'a> {
    tk: &'a TorusKernel,
    sites: usize,
    kill_total: f64,
    kill_sampler: Option<WeightedIndex<f64>>,
}

impl<'a> Graphical<'a> {
    pub fn new(bias: &BiasField, tk: &'a TorusKernel) -> Result<Graphical<'a>, SimError> {
        bias.check_torus(tk.torus())
            .map_err(|e| SimError::InvalidArgument(e.to_string()))?;
        let kill_total = bias.total();
        let kill_sampler = if kill_total > 0.0 {
            Some(
                WeightedIndex::new(bias.values().iter().copied())
                    .map_err(|e| SimError::InvalidArgument(e.to_string()))?,
            )
        } else {
            None
        };
        Ok(Graphical {
            tk,
            sites: tk.torus().len(),
            kill_total,
            kill_sampler,
        })
    }

    pub fn total_rate(&self) -> f64 {
        self.sites as f64 + self.kill_total
    }

    /// Events in `(0, horizon]`.
    pub fn events<'r, R: Rng>(&'r self, horizon: f64, rng: &'r mut R) -> EventStream<'r, 'a, R> {
        EventStream {
            g: self,
            rng,
            time: 0.0,
            horizon,
        }
    }

    pub fn sample_log<R: Rng>(&self, horizon: f64, rng: &mut R) -> EventLog {
        EventLog(self.events(horizon, rng).collect())
    }
}

pub struct EventStream<'r, 'a, R: Rng> {
    g: &'r Graphical<'a>,
    rng: &'r mut R,
    time: f64,
    horizon: f64,
}

impl<R: Rng> Iterator for EventStream<'_, '_, R> {
    type Item = Event;

    fn next(&mut self) -> Option<Event> {
        let total = self.g.total_rate();
        let dt: f64 = self.rng.sample::<f64, _>(Exp1) / total;
        self.time += dt;
        if self.time > self.horizon {
            self.time = self.horizon;
            return None;
        }
        let u = self.rng.random::<f64>() * total;
        let ev = if u < self.g.sites as f64 {
            let site = (u as usize).min(self.g.sites - 1);
            Event {
                time: self.time,
                site,
                kind: EventKind::Resample {
                    partner: self.g.tk.sample_partner(site, self.rng),
                },
            }
        } else {
            let sampler = self.g.kill_sampler.as_ref().expect("kill events need positive bias");
            Event {
                time: self.time,
                site: sampler.sample(self.rng),
                kind: EventKind::Kill,
            }
        };
        Some(ev)
    }
}

fn absorption_guard(before_ones: usize, after_ones: usize, time: f64) -> Result<(), SimError> {
    if before_ones == 0 && after_ones != 0 {
        return Err(SimError::InvariantViolation(format!(
            "left the absorbing state η ≡ 0 at t = {time}"
        )));
    }
    Ok(())
}

/// Runs the dynamics from `config` for time `t`.
pub fn evolve<R: Rng>(
    config: &Configuration,
    bias: &BiasField,
    tk: &TorusKernel,
    t: f64,
    rng: &mut R,
) -> Result<Configuration, SimError> {
    let g = Graphical::new(bias, tk)?;
    check_config(config, tk)?;
    let mut eta = config.clone();
    let mut ones = eta.count_ones();
    for ev in g.events(t, rng) {
        let was = eta.get(ev.site);
        if eta.apply(&ev) {
            let now = ones + usize::from(!was) - usize::from(was);
            absorption_guard(ones, now, ev.time)?;
            ones = now;
        }
    }
    Ok(eta)
}

/// Drives `low ≤ high` with one shared event stream and returns both
/// states at time `t`. The order is checked after every event.
pub fn coupled_evolve<R: Rng>(
    low: &Configuration,
    high: &Configuration,
    bias: &BiasField,
    tk: &TorusKernel,
    t: f64,
    rng: &mut R,
) -> Result<(Configuration, Configuration), SimError> {
    let g = Graphical::new(bias, tk)?;
    check_config(low, tk)?;
    check_config(high, tk)?;
    if !low.le(high) {
        return Err(SimError::InvalidArgument("coupled_evolve needs low ≤ high".into()));
    }
    let (mut a, mut b) = (low.clone(), high.clone());
    for ev in g.events(t, rng) {
        a.apply(&ev);
        b.apply(&ev);
        if a.get(ev.site) && !b.get(ev.site) {
            return Err(SimError::InvariantViolation(format!(
                "order broken at site {} at t = {}",
                ev.site, ev.time
            )));
        }
    }
    Ok((a, b))
}

fn check_config(c: &Configuration, tk: &TorusKernel) -> Result<(), SimError> {
    if c.torus() != tk.torus() {
        return Err(SimError::InvalidArgument("configuration and kernel tori differ".into()));
    }
    Ok(())
}

/// Torus indices of the support of `f`, failing when two support sites
/// wrap onto the same torus site.
pub fn support_on_torus(f: &LocalFunction, torus: Torus) -> Result<Vec<usize>, SimError> {
    let idx: Vec<usize> = f.support().iter().map(|&s| torus.index(s)).collect();
    for (i, a) in idx.iter().enumerate() {
        if idx[..i].contains(a) {
            return Err(SimError::InvalidArgument(format!(
                "support of f does not fit in a torus of side {}",
                torus.side
            )));
        }
    }
    Ok(idx)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CurvePoint {
    pub t: f64,
    pub estimate: Estimate,
}

/// Monte Carlo estimate of `E^{η≡1}[f(η_t)] - f(0)` at each grid time, one
/// trajectory per replica observed at all grid times. Replica `r` uses the
/// stream `(seed, Forward, r)`.
pub fn forward_relaxation(
    f: &LocalFunction,
    bias: &BiasField,
    tk: &TorusKernel,
    t_grid: &[f64],
    replicas: u64,
    seed: u64,
) -> Result<Vec<CurvePoint>, SimError> {
    if replicas < 2 {
        return Err(SimError::InvalidArgument("need at least 2 replicas".into()));
    }
    check_grid(t_grid)?;
    let torus = tk.torus();
    let support = support_on_torus(f, torus)?;
    let g = Graphical::new(bias, tk)?;
    let f0 = f.all_zeros_value();
    let horizon = t_grid.last().copied().unwrap_or(0.0);
    let observe = |eta: &Configuration| {
        let mask = support
            .iter()
            .enumerate()
            .filter(|(_, &x)| eta.get(x))
            .fold(0u32, |m, (i, _)| m | 1 << i);
        f.eval(mask) - f0
    };
    let accs = reduce_replicas(replicas, t_grid.len(), |r, out| {
        let mut rng = rng::stream(seed, Domain::Forward, r);
        let mut eta = Configuration::all_ones(torus);
        let mut ones = eta.count_ones();
        let mut k = 0;
        for ev in g.events(horizon, &mut rng) {
            while k < t_grid.len() && t_grid[k] < ev.time {
                out[k] = observe(&eta);
                k += 1;
            }
            let was = eta.get(ev.site);
            if eta.apply(&ev) {
                let now = ones + usize::from(!was) - usize::from(was);
                absorption_guard(ones, now, ev.time)?;
                ones = now;
            }
        }
        while k < t_grid.len() {
            out[k] = observe(&eta);
            k += 1;
        }
        Ok(())
    })?;
    Ok(t_grid
        .iter()
        .zip(&accs)
        .map(|(&t, a)| CurvePoint { t, estimate: a.into() })
        .collect())
}

pub(crate) fn check_grid(t_grid: &[f64]) -> Result<(), SimError> {
    if t_grid.is_empty() {
        return Err(SimError::InvalidArgument("empty time grid".into()));
    }
    if t_grid[0] < 0.0 || !t_grid.iter().all(|t| t.is_finite()) {
        return Err(SimError::InvalidArgument("times must be finite and nonnegative".into()));
    }
    if t_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(SimError::InvalidArgument("time grid must be strictly increasing".into()));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::disorder::DisorderLaw;
    use crate::kernel::Kernel;
    use crate::site::Site;

    fn ring(side: usize) -> TorusKernel {
        Kernel::nearest_neighbor(1).unwrap().fold(side).unwrap()
    }

    #[test]
    fn absorbing_states() {
        let tk = ring(6);
        let t = tk.torus();
        let zero = BiasField::constant(t, 0.0).unwrap();
        let mut rng = rng::stream(1, Domain::Forward, 0);
        let ones = Configuration::all_ones(t);
        assert_eq!(evolve(&ones, &zero, &tk, 50.0, &mut rng).unwrap(), ones);
        let biased = BiasField::sample(&DisorderLaw::bernoulli(0.3, 2.0).unwrap(), t, 4, 0);
        let zeros = Configuration::all_zeros(t);
        assert_eq!(evolve(&zeros, &biased, &tk, 50.0, &mut rng).unwrap(), zeros);
    }

    #[test]
    fn two_site_ring_matches_master_equation() {
        // From (1,0) both sites flip at rate 1 into absorbing states:
        // E η_t(0) = e^{-2t} + (1 - e^{-2t})/2.
        let tk = ring(2);
        let t = tk.torus();
        let zero = BiasField::constant(t, 0.0).unwrap();
        let start = Configuration::from_mask(t, 0b01);
        let time = 0.4;
        let n = 100_000;
        let mut acc = crate::stats::MeanAcc::default();
        for r in 0..n {
            let mut rng = rng::stream(77, Domain::Forward, r);
            let end = evolve(&start, &zero, &tk, time, &mut rng).unwrap();
            acc.push(end.get(0) as u8 as f64);
        }
        let exact = 0.5 * (1.0 + (-2.0f64 * time).exp());
        let est = Estimate::from(&acc);
        assert!(est.agrees_with(exact, 4.0), "{est:?} vs {exact}");
    }

    #[test]
    fn coupling_basics() {
        let tk = ring(8);
        let t = tk.torus();
        let bias = BiasField::sample(&DisorderLaw::bernoulli(0.5, 1.0).unwrap(), t, 3, 0);
        let x = Configuration::from_mask(t, 0b1011_0110);
        let mut rng = rng::stream(5, Domain::Forward, 0);
        let (a, b) = coupled_evolve(&x, &x, &bias, &tk, 3.0, &mut rng).unwrap();
        assert_eq!(a, b);
        let mut rng2 = rng::stream(5, Domain::Forward, 0);
        assert_eq!(evolve(&x, &bias, &tk, 3.0, &mut rng2).unwrap(), a);
        let zero = Configuration::all_zeros(t);
        let (a, b) = coupled_evolve(&zero, &x, &bias, &tk, 3.0, &mut rng).unwrap();
        assert_eq!(a, zero);
        assert!(a.le(&b));
        assert!(matches!(
            coupled_evolve(&x, &zero, &bias, &tk, 1.0, &mut rng),
            Err(SimError::InvalidArgument(_))
        ));
    }

    #[test]
    fn bias_mismatch_rejected() {
        let tk = ring(4);
        let other = BiasField::constant(Torus::new(1, 5).unwrap(), 0.0).unwrap();
        let mut rng = rng::stream(0, Domain::Forward, 0);
        let c = Configuration::all_ones(tk.torus());
        assert!(evolve(&c, &other, &tk, 1.0, &mut rng).is_err());
    }

    #[test]
    fn event_log_is_ordered_and_replayable() {
        let tk = ring(5);
        let t = tk.torus();
        let bias = BiasField::sample(&DisorderLaw::bernoulli(0.5, 1.0).unwrap(), t, 8, 0);
        let g = Graphical::new(&bias, &tk).unwrap();
        let log = g.sample_log(4.0, &mut rng::stream(9, Domain::Forward, 0));
        assert!(log.0.windows(2).all(|w| w[0].time < w[1].time));
        assert!(log.0.iter().all(|e| e.time <= 4.0));
        let mut c = Configuration::all_ones(t);
        c.apply_log(&log);
        let direct = evolve(&Configuration::all_ones(t), &bias, &tk, 4.0, &mut rng::stream(9, Domain::Forward, 0)).unwrap();
        assert_eq!(c, direct);
    }

    #[test]
    fn first_flip_distribution_matches_rates() {
        // Frozen configuration on L=4: the first effective flip lands on x
        // with probability c_β(x, η) / Σ_y c_β(y, η).
        let tk = ring(4);
        let t = tk.torus();
        let bias = BiasField::from_values(t, vec![0.5, 0.0, 1.5, 0.25]).unwrap();
        let eta = Configuration::from_mask(t, 0b0111);
        let rate = |x: usize| -> f64 {
            let own = eta.get(x);
            let kill = if own { bias.values()[x] } else { 0.0 };
            kill + tk
                .entries()
                .filter(|&(d, _)| eta.get(tk.shift(x, d)) != own)
                .map(|(_, w)| w)
                .sum::<f64>()
        };
        let rates: Vec<f64> = (0..4).map(rate).collect();
        let total: f64 = rates.iter().sum();
        let g = Graphical::new(&bias, &tk).unwrap();
        let trials = 100_000u64;
        let mut counts = [0u64; 4];
        for r in 0..trials {
            let mut rng = rng::stream(31, Domain::Forward, r);
            let mut probe = eta.clone();
            for ev in g.events(f64::INFINITY, &mut rng) {
                if probe.apply(&ev) {
                    counts[ev.site] += 1;
                    break;
                }
            }
        }
        for x in 0..4 {
            let p = rates[x] / total;
            let mean = trials as f64 * p;
            let sd = (trials as f64 * p * (1.0 - p)).sqrt();
            if p == 0.0 {
                assert_eq!(counts[x], 0);
            } else {
                assert!((counts[x] as f64 - mean).abs() <= 4.0 * sd, "site {x}: {} vs {mean}", counts[x]);
            }
        }
    }

    #[test]
    fn relaxation_edge_cases() {
        let tk = ring(6);
        let t = tk.torus();
        let bias = BiasField::sample(&DisorderLaw::bernoulli(0.5, 1.0).unwrap(), t, 2, 0);
        let f = LocalFunction::single_site(Site::ORIGIN);
        let curve = forward_relaxation(&f, &bias, &tk, &[0.0, 1.0], 100, 1).unwrap();
        assert_eq!(curve[0].estimate, Estimate { mean: 1.0, stderr: 0.0 });
        let c = LocalFunction::constant(3.0);
        let curve = forward_relaxation(&c, &bias, &tk, &[0.0, 1.0, 2.0], 100, 1).unwrap();
        assert!(curve.iter().all(|p| p.estimate.mean == 0.0 && p.estimate.stderr == 0.0));
        let wide = LocalFunction::product(vec![Site::new(&[0]), Site::new(&[6])]).unwrap();
        assert!(forward_relaxation(&wide, &bias, &tk, &[1.0], 10, 1).is_err());
        assert!(forward_relaxation(&f, &bias, &tk, &[1.0], 1, 1).is_err());
        assert!(forward_relaxation(&f, &bias, &tk, &[2.0, 1.0], 10, 1).is_err());
    }

    #[test]
    fn constant_bias_decay() {
        // With β ≡ b the single-site relaxation from η ≡ 1 is exactly e^{-bt}.
        let tk = ring(8);
        let b = 0.7;
        let bias = BiasField::constant(tk.torus(), b).unwrap();
        let f = LocalFunction::single_site(Site::ORIGIN);
        let grid = [0.5, 1.0, 2.0];
        let curve = forward_relaxation(&f, &bias, &tk, &grid, 20_000, 12).unwrap();
        for p in curve {
            assert!(p.estimate.agrees_with((-b * p.t).exp(), 4.0), "{p:?}");
        }
    }

    #[test]
    fn monotone_observable_decays() {
        let tk = ring(10);
        let bias = BiasField::sample(&DisorderLaw::new(vec![(0.5, 0.5), (1.5, 0.5)]).unwrap(), tk.torus(), 5, 0);
        let f = LocalFunction::from_fn(vec![Site::new(&[0]), Site::new(&[1])], |m| (m != 0) as u8 as f64).unwrap();
        let grid: Vec<f64> = (1..=10).map(|i| i as f64 * 0.4).collect();
        let curve = forward_relaxation(&f, &bias, &tk, &grid, 5_000, 3).unwrap();
        // Least-squares slope and its standard error.
        let n = grid.len() as f64;
        let tm = grid.iter().sum::<f64>() / n;
        let ym = curve.iter().map(|p| p.estimate.mean).sum::<f64>() / n;
        let sxx: f64 = grid.iter().map(|t| (t - tm).powi(2)).sum();
        let slope: f64 = curve.iter().map(|p| (p.t - tm) * (p.estimate.mean - ym)).sum::<f64>() / sxx;
        let se = curve.iter().map(|p| p.estimate.stderr).fold(0.0, f64::max) / sxx.sqrt();
        assert!(slope <= 4.0 * se, "slope {slope}");
        assert!(slope < 0.0);
    }
}
