//! Exact oracles.
//!
//! * The full rate matrix of the forward spin system on a torus with at most
//!   [`MAX_EXACT_SITES`] sites, and the coalescing dual generator with
//!   Feynman–Kac killing on the same torus.
//! * `e^{tQ} g` by uniformization: with `Λ ≥ max_i |Q_ii|`,
//!   `P = I + Q/Λ` is (sub)stochastic and
//!   `e^{tQ} g = Σ_n Pois(Λt; n) Pⁿ g`. Since `‖Pⁿ g‖_∞ ≤ ‖g‖_∞`, cutting the
//!   series after `n` terms errs by at most `‖g‖_∞ · P(Pois(Λt) > n)`, and
//!   for `n + 2 > Λt` that tail is at most
//!   `w_{n+1} (n+2) / (n+2-Λt)` (geometric domination of the ratios).
//! * `E⁰ exp(-ν|R_t|)` for the 1-d nearest-neighbour walk. The range of
//!   that walk is an interval, so the pair (position inside the visited
//!   interval, interval width) is itself a Markov chain; each width
//!   increment carries a factor `e^{-ν}`.

use thiserror::Error;

use crate::disorder::BiasField;
use crate::kernel::TorusKernel;
use crate::localfn::LocalFunction;
use crate::site::{Site, Torus};

pub const MAX_EXACT_SITES: usize = 12;

/// Truncation tolerance of each uniformization series, relative to `‖g‖_∞`.
pub const SERIES_TOL: f64 = 1e-13;

/// Bound on the range-chain error from capping the interval width.
pub const WIDTH_CAP_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExactError {
    #[error("exact computation needs 2..={max} sites, got {0}", max = MAX_EXACT_SITES)]
    Sites(usize),
    #[error("width cap {cap} too small: truncation bound {bound:e} exceeds {tol:e}", tol = WIDTH_CAP_TOL)]
    WidthCap { cap: usize, bound: f64 },
    #[error("{0}")]
    Invalid(String),
}

/// Sparse generator: off-diagonal rates in compressed rows plus a diagonal.
/// The diagonal may be more negative than minus the row's exit rate, which
/// encodes killing.
#[derive(Clone, Debug)]
pub struct GeneratorMatrix {
    diag: Vec<f64>,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    rates: Vec<f64>,
}

impl GeneratorMatrix {
    /// `rows[i]` lists `(j, rate)` with `j ≠ i`; duplicates are summed.
    /// `kill[i] ≥ 0` is added to the exit rate of state `i`.
    fn from_rows(rows: Vec<Vec<(usize, f64)>>, kill: &[f64]) -> GeneratorMatrix {
        let mut diag = Vec::with_capacity(rows.len());
        let mut row_ptr = vec![0];
        let mut cols = Vec::new();
        let mut rates = Vec::new();
        for (i, mut row) in rows.into_iter().enumerate() {
            row.sort_by_key(|e| e.0);
            let mut out = 0.0;
            for (j, r) in row {
                debug_assert!(j != i && r >= 0.0);
                out += r;
                if cols.len() > row_ptr[i] && cols[cols.len() - 1] == j {
                    *rates.last_mut().expect("nonempty") += r;
                } else {
                    cols.push(j);
                    rates.push(r);
                }
            }
            row_ptr.push(cols.len());
            diag.push(-(out + kill[i]));
        }
        GeneratorMatrix {
            diag,
            row_ptr,
            cols,
            rates,
        }
    }

    pub fn states(&self) -> usize {
        self.diag.len()
    }

    pub fn diagonal(&self, i: usize) -> f64 {
        self.diag[i]
    }

    /// `Q(i, j)`.
    pub fn rate(&self, i: usize, j: usize) -> f64 {
        if i == j {
            return self.diag[i];
        }
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[r.clone()]
            .iter()
            .zip(&self.rates[r])
            .find(|(c, _)| **c == j)
            .map_or(0.0, |(_, v)| *v)
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[r.clone()].iter().copied().zip(self.rates[r].iter().copied())
    }

    pub fn row_sum(&self, i: usize) -> f64 {
        self.diag[i] + self.row(i).map(|(_, r)| r).sum::<f64>()
    }

    pub fn max_exit_rate(&self) -> f64 {
        self.diag.iter().fold(0.0, |m, d| m.max(-d))
    }

    /// `out = (I + Q/Λ) v`.
    fn step(&self, lambda: f64, v: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            let mut acc = v[i] * (1.0 + self.diag[i] / lambda);
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                acc += self.rates[k] / lambda * v[self.cols[k]];
            }
            *o = acc;
        }
    }
}

fn check_sites(torus: Torus) -> Result<usize, ExactError> {
    let n = torus.len();
    if !(2..=MAX_EXACT_SITES).contains(&n) {
        return Err(ExactError::Sites(n));
    }
    Ok(n)
}

fn check_field(bias: &BiasField, tk: &TorusKernel) -> Result<usize, ExactError> {
    let n = check_sites(tk.torus())?;
    bias.check_torus(tk.torus())
        .map_err(|e| ExactError::Invalid(e.to_string()))?;
    Ok(n)
}

/// Spin-flip generator on `{0,1}^N`, state `η` encoded as the mask with bit
/// `i` set when torus site `i` holds a 1. Site `x` flips at rate
/// `β(x) η(x) + Σ_y p(y - x) 1{η(x) ≠ η(y)}`.
pub fn build_forward_generator(bias: &BiasField, tk: &TorusKernel) -> Result<GeneratorMatrix, ExactError> {
    let n = check_field(bias, tk)?;
    let beta = bias.values();
    let partners: Vec<Vec<(usize, f64)>> = (0..n)
        .map(|x| tk.entries().map(|(d, w)| (tk.shift(x, d), w)).collect())
        .collect();
    let rows = (0..1usize << n)
        .map(|eta| {
            (0..n)
                .filter_map(|x| {
                    let ex = eta >> x & 1;
                    let mut rate = beta[x] * ex as f64;
                    for &(y, w) in &partners[x] {
                        if eta >> y & 1 != ex {
                            rate += w;
                        }
                    }
                    (rate > 0.0).then_some((eta ^ 1 << x, rate))
                })
                .collect()
        })
        .collect();
    Ok(GeneratorMatrix::from_rows(rows, &vec![0.0; 1 << n]))
}

/// Coalescing dual generator on subsets of the torus with killing at rate
/// `V_β(A) = Σ_{x∈A} β(x)`. A particle at `x` jumps to `x + z` at rate
/// `p(z)` and merges with a particle already there.
pub fn build_dual_generator(bias: &BiasField, tk: &TorusKernel) -> Result<GeneratorMatrix, ExactError> {
    let n = check_field(bias, tk)?;
    let beta = bias.values();
    let mut kill = Vec::with_capacity(1 << n);
    let rows = (0..1usize << n)
        .map(|a| {
            kill.push((0..n).filter(|x| a >> x & 1 == 1).map(|x| beta[x]).sum());
            let mut row = Vec::new();
            for x in (0..n).filter(|x| a >> x & 1 == 1) {
                for (d, w) in tk.entries() {
                    let y = tk.shift(x, d);
                    if y != x {
                        row.push(((a & !(1 << x)) | 1 << y, w));
                    }
                }
            }
            row
        })
        .collect();
    Ok(GeneratorMatrix::from_rows(rows, &kill))
}

/// Poisson weights `P(Pois(μ) = n)` for `n = 0, 1, …` until the remaining
/// tail is below `tol`.
fn poisson_weights(mu: f64, tol: f64) -> Vec<f64> {
    let mut out = Vec::new();
    let mut log_w = -mu;
    let ln_mu = mu.ln();
    let mut n = 0usize;
    loop {
        out.push(log_w.exp());
        let next_log = log_w + ln_mu - ((n + 1) as f64).ln();
        let m = (n + 2) as f64;
        if m > mu {
            let tail = next_log.exp() * m / (m - mu);
            if tail < tol {
                return out;
            }
        }
        log_w = next_log;
        n += 1;
    }
}

/// `e^{tQ} g` by uniformization; the truncation error is below
/// `SERIES_TOL · ‖g‖_∞`.
pub fn semigroup_apply(q: &GeneratorMatrix, g: &[f64], t: f64) -> Result<Vec<f64>, ExactError> {
    if g.len() != q.states() {
        return Err(ExactError::Invalid(format!(
            "vector of length {} for {} states",
            g.len(),
            q.states()
        )));
    }
    semigroup_apply_unchecked(q, g, t, q.max_exit_rate())
}

fn subset_mask(a: &[Site], torus: Torus) -> Result<usize, ExactError> {
    let mut mask = 0usize;
    for &s in a {
        let bit = 1usize << torus.index(s);
        if mask & bit != 0 {
            return Err(ExactError::Invalid(format!("site {s:?} repeated on the torus")));
        }
        mask |= bit;
    }
    Ok(mask)
}

/// `E^A exp(-∫₀ᵗ V_β(A_s) ds)` for every subset `A` of the torus, indexed by
/// mask.
pub fn exact_dual_values(bias: &BiasField, tk: &TorusKernel, t: f64) -> Result<Vec<f64>, ExactError> {
    let q = build_dual_generator(bias, tk)?;
    semigroup_apply(&q, &vec![1.0; q.states()], t)
}

pub fn exact_dual_value(a: &[Site], bias: &BiasField, tk: &TorusKernel, t: f64) -> Result<f64, ExactError> {
    let mask = subset_mask(a, tk.torus())?;
    Ok(exact_dual_values(bias, tk, t)?[mask])
}

/// `E^{η≡1} Π_{x∈A} η_t(x)` for every subset `A`, indexed by mask, from the
/// forward generator.
pub fn exact_forward_products(bias: &BiasField, tk: &TorusKernel, t: f64) -> Result<Vec<f64>, ExactError> {
    let q = build_forward_generator(bias, tk)?;
    let n = q.states();
    // Row `η≡1` of e^{tQ}: the distribution of η_t.
    let dist = transient_distribution(&q, n - 1, t)?;
    let mut out = vec![0.0; n];
    for (a, o) in out.iter_mut().enumerate() {
        *o = dist
            .iter()
            .enumerate()
            .filter(|(eta, _)| eta & a == a)
            .map(|(_, p)| p)
            .sum();
    }
    Ok(out)
}

/// Law of the forward state at time `t` started from mask `start`, i.e. row
/// `start` of `e^{tQ}`, computed column by column through the transpose.
pub fn transient_distribution(q: &GeneratorMatrix, start: usize, t: f64) -> Result<Vec<f64>, ExactError> {
    let n = q.states();
    let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    for i in 0..n {
        for (j, r) in q.row(i) {
            rows[j].push((i, r));
        }
    }
    // For a conservative Q, I + Qᵀ/Λ has nonnegative entries and unit
    // column sums, so the series tail bound holds in ℓ¹.
    let mut qt = GeneratorMatrix::from_rows(rows, &vec![0.0; n]);
    qt.diag.clone_from(&q.diag);
    let mut e = vec![0.0; n];
    e[start] = 1.0;
    semigroup_apply_unchecked(&qt, &e, t, q.max_exit_rate())
}

fn semigroup_apply_unchecked(q: &GeneratorMatrix, g: &[f64], t: f64, lambda: f64) -> Result<Vec<f64>, ExactError> {
    if !(t >= 0.0 && t.is_finite()) {
        return Err(ExactError::Invalid(format!("time must be finite and >= 0, got {t}")));
    }
    if t == 0.0 || lambda == 0.0 {
        return Ok(g.to_vec());
    }
    let weights = poisson_weights(lambda * t, SERIES_TOL);
    let mut v = g.to_vec();
    let mut next = vec![0.0; v.len()];
    let mut out: Vec<f64> = v.iter().map(|x| weights[0] * x).collect();
    for &w in &weights[1..] {
        q.step(lambda, &v, &mut next);
        std::mem::swap(&mut v, &mut next);
        for (o, x) in out.iter_mut().zip(&v) {
            *o += w * x;
        }
    }
    Ok(out)
}

/// Exact `E^{η≡1}[f(η_t)] - f(0)` for a local function on a small torus.
pub fn exact_forward_relaxation(
    f: &LocalFunction,
    bias: &BiasField,
    tk: &TorusKernel,
    t: f64,
) -> Result<f64, ExactError> {
    let torus = tk.torus();
    let q = build_forward_generator(bias, tk)?;
    let idx: Vec<usize> = f.support().iter().map(|&s| torus.index(s)).collect();
    for (i, a) in idx.iter().enumerate() {
        if idx[..i].contains(a) {
            return Err(ExactError::Invalid("support of f does not fit in the torus".into()));
        }
    }
    let dist = transient_distribution(&q, q.states() - 1, t)?;
    let value: f64 = dist
        .iter()
        .enumerate()
        .map(|(eta, p)| {
            let mask = idx
                .iter()
                .enumerate()
                .filter(|(_, &x)| eta >> x & 1 == 1)
                .fold(0u32, |m, (i, _)| m | 1 << i);
            p * f.eval(mask)
        })
        .sum();
    Ok(value - f.all_zeros_value())
}

/// `P(max_{s≤t} |X_s| ≥ a)` bound for the rate-1 nearest-neighbour walk,
/// from Doob's inequality on `e^{θ X_s}` optimized at `θ = asinh(a/t)` and a
/// union over both signs.
pub fn walk_excursion_bound(a: f64, t: f64) -> f64 {
    if t <= 0.0 {
        return if a > 0.0 { 0.0 } else { 1.0 };
    }
    let r = a / t;
    let expo = t * ((1.0 + r * r).sqrt() - 1.0) - a * r.asinh();
    (2.0 * expo.exp()).min(1.0)
}

/// Upper bound on the error in `E exp(-ν|R_t|)` from discarding paths whose
/// visited interval grows beyond `cap` sites: such a path contributes at
/// most `e^{-ν(cap+1)}`, and it needs an excursion of length `cap/2` on one
/// side.
pub fn range_truncation_bound(nu: f64, t: f64, cap: usize) -> f64 {
    (-nu * (cap as f64 + 1.0)).exp() * walk_excursion_bound(cap as f64 / 2.0, t)
}

/// The (offset, width) chain with a factor `e^{-ν}` per width increment.
/// `mass(n) = e^{-ν} ‖πₙ‖₁` after `n` jumps; it is nonincreasing in `n`
/// because the penalized step is substochastic.
struct RangeChain {
    penalty: f64,
    cap: usize,
    pi: Vec<f64>,
    next: Vec<f64>,
    masses: Vec<f64>,
}

impl RangeChain {
    fn new(nu: f64, cap: usize) -> RangeChain {
        let states = cap * (cap + 1) / 2;
        let mut pi = vec![0.0; states];
        pi[0] = 1.0;
        let penalty = (-nu).exp();
        RangeChain {
            penalty,
            cap,
            pi,
            next: vec![0.0; states],
            masses: vec![penalty],
        }
    }

    fn mass(&mut self, n: usize) -> f64 {
        while self.masses.len() <= n {
            self.step();
        }
        self.masses[n]
    }

    fn step(&mut self) {
        let idx = |o: usize, w: usize| w * (w - 1) / 2 + o;
        let (cap, penalty) = (self.cap, self.penalty);
        let n = self.masses.len() - 1;
        let active = (n + 1).min(cap);
        let grow = (n + 2).min(cap);
        self.next[..grow * (grow + 1) / 2].iter_mut().for_each(|x| *x = 0.0);
        for w in 1..=active {
            for o in 0..w {
                let half = 0.5 * self.pi[idx(o, w)];
                if half == 0.0 {
                    continue;
                }
                if o > 0 {
                    self.next[idx(o - 1, w)] += half;
                } else if w < cap {
                    self.next[idx(0, w + 1)] += half * penalty;
                }
                if o + 1 < w {
                    self.next[idx(o + 1, w)] += half;
                } else if w < cap {
                    self.next[idx(w, w + 1)] += half * penalty;
                }
            }
        }
        std::mem::swap(&mut self.pi, &mut self.next);
        let mass: f64 = self.pi[..grow * (grow + 1) / 2].iter().sum();
        self.masses.push(penalty * mass);
    }

    /// `Σ_n Pois(t; n) mass(n)` with truncation error below
    /// `SERIES_TOL` times the value: the dropped tail is at most
    /// `P(Pois(t) ≥ len) · mass(len - 1)`.
    fn value(&mut self, t: f64) -> f64 {
        if t == 0.0 {
            return self.mass(0);
        }
        let mut tol = SERIES_TOL;
        loop {
            let w = poisson_weights(t, tol);
            let sum: f64 = w.iter().enumerate().map(|(n, p)| p * self.mass(n)).sum();
            let last = self.mass(w.len() - 1);
            if tol * last <= SERIES_TOL * sum || last == 0.0 {
                return sum;
            }
            tol = 0.5 * SERIES_TOL * sum / last;
        }
    }
}

/// `E⁰ exp(-ν|R_t|)` for the rate-1 nearest-neighbour walk on `Z` at each
/// grid time. Fails when the width cap cannot guarantee a truncation error
/// below [`WIDTH_CAP_TOL`], both absolutely and relative to each value.
pub fn exact_range_series_1d(nu: f64, t_grid: &[f64], width_cap: usize) -> Result<Vec<f64>, ExactError> {
    if !(nu > 0.0 && nu.is_finite()) {
        return Err(ExactError::Invalid(format!("ν must be positive, got {nu}")));
    }
    if width_cap == 0 {
        return Err(ExactError::WidthCap { cap: 0, bound: 1.0 });
    }
    if t_grid.iter().any(|t| !(*t >= 0.0 && t.is_finite())) {
        return Err(ExactError::Invalid("times must be finite and >= 0".into()));
    }
    let mut chain = RangeChain::new(nu, width_cap);
    t_grid
        .iter()
        .map(|&t| {
            let v = chain.value(t);
            // Truncated paths only remove mass, so `v` underestimates.
            let bound = range_truncation_bound(nu, t, width_cap);
            if bound > WIDTH_CAP_TOL * v.min(1.0) {
                return Err(ExactError::WidthCap { cap: width_cap, bound });
            }
            Ok(v)
        })
        .collect()
}

pub fn exact_range_functional_1d(nu: f64, t: f64, width_cap: usize) -> Result<f64, ExactError> {
    Ok(exact_range_series_1d(nu, &[t], width_cap)?[0])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::Kernel;

    fn ring(side: usize) -> TorusKernel {
        Kernel::nearest_neighbor(1).unwrap().fold(side).unwrap()
    }

    #[test]
    fn two_site_rates() {
        let tk = ring(2);
        let field = BiasField::constant(tk.torus(), 0.0).unwrap();
        let q = build_forward_generator(&field, &tk).unwrap();
        // (1,0) is mask 0b01.
        assert_eq!(q.rate(0b01, 0b00), 1.0);
        assert_eq!(q.rate(0b01, 0b11), 1.0);
        assert_eq!(q.rate(0b01, 0b10), 0.0);
        for i in 0..4 {
            assert!(q.row_sum(i).abs() < 1e-12);
        }
    }

    #[test]
    fn rows_sum_to_zero_with_bias() {
        let tk = Kernel::nearest_neighbor(2).unwrap().fold(3).unwrap();
        let field = BiasField::from_values(tk.torus(), (0..9).map(|i| i as f64 * 0.1).collect()).unwrap();
        let q = build_forward_generator(&field, &tk).unwrap();
        assert_eq!(q.states(), 512);
        for i in 0..q.states() {
            assert!(q.row_sum(i).abs() < 1e-12);
        }
    }

    #[test]
    fn site_count_limits() {
        let k = Kernel::nearest_neighbor(1).unwrap();
        let tk = k.fold(13).unwrap();
        let field = BiasField::constant(tk.torus(), 0.0).unwrap();
        assert_eq!(build_forward_generator(&field, &tk).unwrap_err(), ExactError::Sites(13));
    }

    #[test]
    fn zero_time_is_identity() {
        let tk = ring(3);
        let field = BiasField::constant(tk.torus(), 0.5).unwrap();
        let q = build_forward_generator(&field, &tk).unwrap();
        let g: Vec<f64> = (0..8).map(|i| i as f64).collect();
        assert_eq!(semigroup_apply(&q, &g, 0.0).unwrap(), g);
    }

    #[test]
    fn two_site_master_equation() {
        let tk = ring(2);
        let field = BiasField::constant(tk.torus(), 0.0).unwrap();
        let q = build_forward_generator(&field, &tk).unwrap();
        let g: Vec<f64> = (0..4).map(|m| (m & 1) as f64).collect();
        for t in [0.1, 0.7, 3.0] {
            let v = semigroup_apply(&q, &g, t).unwrap();
            assert!((v[0b01] - 0.5 * (1.0 + (-2.0 * t).exp())).abs() < 1e-12);
        }
    }

    #[test]
    fn conservation() {
        let tk = ring(4);
        let law = crate::disorder::DisorderLaw::bernoulli(0.5, 2.0).unwrap();
        let field = BiasField::sample(&law, tk.torus(), 3, 0);
        let q = build_forward_generator(&field, &tk).unwrap();
        for t in [0.5, 5.0, 50.0] {
            let v = semigroup_apply(&q, &vec![1.0; 16], t).unwrap();
            assert!(v.iter().all(|x| (x - 1.0).abs() < 1e-10));
            let d = transient_distribution(&q, 15, t).unwrap();
            assert!((d.iter().sum::<f64>() - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn constant_bias_forward_decay() {
        let tk = ring(3);
        let b = 0.7;
        let field = BiasField::constant(tk.torus(), b).unwrap();
        let f = LocalFunction::single_site(Site::ORIGIN);
        for t in [0.3, 2.0] {
            let v = exact_forward_relaxation(&f, &field, &tk, t).unwrap();
            assert!((v - (-b * t).exp()).abs() < 1e-10);
        }
    }

    #[test]
    fn dual_trivial_values() {
        let tk = ring(3);
        let field = BiasField::constant(tk.torus(), 0.0).unwrap();
        let v = exact_dual_values(&field, &tk, 4.0).unwrap();
        assert!(v.iter().all(|x| (x - 1.0).abs() < 1e-12));
        let field = BiasField::constant(tk.torus(), 0.9).unwrap();
        let v = exact_dual_values(&field, &tk, 4.0).unwrap();
        assert!((v[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn range_at_zero_and_small_time() {
        for nu in [0.5, 1.0, 2.0] {
            let f0 = exact_range_functional_1d(nu, 0.0, 50).unwrap();
            assert!((f0 - (-nu).exp()).abs() < 1e-15);
            let e = (-nu).exp();
            let t = 0.01;
            let f = exact_range_functional_1d(nu, t, 50).unwrap();
            assert!((f - (e - t * e * (1.0 - e))).abs() < 1e-4);
        }
    }

    #[test]
    fn range_series_is_decreasing() {
        let grid: Vec<f64> = (0..=40).map(|i| i as f64 * 2.5).collect();
        for nu in [0.5, 1.0] {
            let s = exact_range_series_1d(nu, &grid, 200).unwrap();
            assert!(s.windows(2).all(|w| w[1] < w[0]));
        }
        let lo = exact_range_series_1d(0.5, &grid, 200).unwrap();
        let hi = exact_range_series_1d(1.0, &grid, 200).unwrap();
        assert!(lo.iter().zip(&hi).all(|(a, b)| b < a));
    }

    #[test]
    fn width_cap_is_checked() {
        assert!(matches!(
            exact_range_functional_1d(0.01, 2000.0, 50),
            Err(ExactError::WidthCap { .. })
        ));
        assert!(exact_range_functional_1d(1.0, 2000.0, 400).is_ok());
    }

    #[test]
    fn excursion_bound_is_a_probability() {
        assert_eq!(walk_excursion_bound(0.0, 5.0), 1.0);
        assert!(walk_excursion_bound(200.0, 2000.0) < 1e-3);
        assert!(walk_excursion_bound(10.0, 1.0) < 1e-8);
    }
}
