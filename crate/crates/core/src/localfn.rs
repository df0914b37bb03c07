//! Local functions and their expansion over duality functions.
//!
//! A [`LocalFunction`] is a truth table over its support: bit `i` of a mask
//! is the opinion at `support[i]`. Every local function expands uniquely as
//! `f(η) = Σ_{A ⊂ Λ(f)} f̂(A) H(η, A)` with `H(η, A) = Π_{x∈A} η(x)`; the
//! coefficients come from Möbius inversion over the subset lattice.

use std::path::Path;

use thiserror::Error;

use crate::site::{parse_sites, Site};

/// Largest support the truth-table representation accepts.
pub const MAX_SUPPORT: usize = 20;
/// Largest support for the double-subset Lemma 1 enumeration.
pub const MAX_LEMMA1_SUPPORT: usize = 12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LocalFnError {
    #[error("support of {0} sites exceeds the limit of {1}")]
    SupportTooLarge(usize, usize),
    #[error("table has {got} entries, expected {expected}")]
    TableSize { got: usize, expected: usize },
    #[error("duplicate support site {0:?}")]
    DuplicateSite(Site),
    #[error("invalid instance: {0}")]
    InvalidInstance(String),
    #[error("parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

#[derive(Clone, Debug, PartialEq)]
pub struct LocalFunction {
    support: Vec<Site>,
    table: Vec<f64>,
}

impl LocalFunction {
    /// Builds `f` from a (possibly padded) support and its truth table, then
    /// drops every site `f` does not depend on.
    pub fn new(support: Vec<Site>, table: Vec<f64>) -> Result<LocalFunction, LocalFnError> {
        if support.len() > MAX_SUPPORT {
            return Err(LocalFnError::SupportTooLarge(support.len(), MAX_SUPPORT));
        }
        let expected = 1usize << support.len();
        if table.len() != expected {
            return Err(LocalFnError::TableSize {
                got: table.len(),
                expected,
            });
        }
        for (i, s) in support.iter().enumerate() {
            if support[..i].contains(s) {
                return Err(LocalFnError::DuplicateSite(*s));
            }
        }
        Ok(LocalFunction { support, table }.minimized())
    }

    pub fn from_fn<F: Fn(u32) -> f64>(support: Vec<Site>, f: F) -> Result<LocalFunction, LocalFnError> {
        let n = support.len();
        if n > MAX_SUPPORT {
            return Err(LocalFnError::SupportTooLarge(n, MAX_SUPPORT));
        }
        let table = (0..1u32 << n).map(f).collect();
        Self::new(support, table)
    }

    pub fn constant(value: f64) -> LocalFunction {
        LocalFunction {
            support: Vec::new(),
            table: vec![value],
        }
    }

    /// `f(η) = η(x)`.
    pub fn single_site(x: Site) -> LocalFunction {
        LocalFunction {
            support: vec![x],
            table: vec![0.0, 1.0],
        }
    }

    /// `f(η) = H(η, A)`.
    pub fn product(sites: Vec<Site>) -> Result<LocalFunction, LocalFnError> {
        let full = (1u32 << sites.len()) - 1;
        Self::from_fn(sites, |m| if m == full { 1.0 } else { 0.0 })
    }

    pub fn support(&self) -> &[Site] {
        &self.support
    }

    pub fn table(&self) -> &[f64] {
        &self.table
    }

    pub fn len(&self) -> usize {
        self.support.len()
    }

    pub fn is_empty(&self) -> bool {
        self.support.is_empty()
    }

    /// Value on the configuration whose restriction to the support is `mask`.
    #[inline]
    pub fn eval(&self, mask: u32) -> f64 {
        self.table[mask as usize]
    }

    /// Evaluates `f` on any configuration given as a site predicate.
    pub fn eval_with<F: Fn(Site) -> bool>(&self, eta: F) -> f64 {
        let mask = self
            .support
            .iter()
            .enumerate()
            .filter(|(_, s)| eta(**s))
            .fold(0u32, |m, (i, _)| m | (1 << i));
        self.eval(mask)
    }

    pub fn all_ones_value(&self) -> f64 {
        self.table[self.table.len() - 1]
    }

    pub fn all_zeros_value(&self) -> f64 {
        self.table[0]
    }

    fn depends_on(&self, bit: usize) -> bool {
        let b = 1usize << bit;
        (0..self.table.len())
            .filter(|m| m & b == 0)
            .any(|m| self.table[m] != self.table[m | b])
    }

    /// Restricts `f` to its minimal support `Λ(f)`.
    pub fn minimized(&self) -> LocalFunction {
        let keep: Vec<usize> = (0..self.support.len()).filter(|&i| self.depends_on(i)).collect();
        if keep.len() == self.support.len() {
            return self.clone();
        }
        let support = keep.iter().map(|&i| self.support[i]).collect();
        let table = (0..1usize << keep.len())
            .map(|m| {
                let full = keep
                    .iter()
                    .enumerate()
                    .filter(|(j, _)| m >> j & 1 == 1)
                    .fold(0usize, |acc, (_, &i)| acc | (1 << i));
                self.table[full]
            })
            .collect();
        LocalFunction { support, table }
    }

    /// Möbius coefficients `f̂(A)`, indexed by subset mask of the support.
    pub fn hat_coeffs(&self) -> Vec<f64> {
        let n = self.support.len();
        let mut a = self.table.clone();
        for i in 0..n {
            let b = 1usize << i;
            for m in 0..a.len() {
                if m & b != 0 {
                    a[m] -= a[m ^ b];
                }
            }
        }
        a
    }

    /// `Σ(f) = Σ_{A≠∅} |f̂(A)|` and the minimal support `Λ(f)`, recomputed.
    pub fn sigma_and_support(&self) -> (f64, Vec<Site>) {
        let min = self.minimized();
        let sigma = min.hat_coeffs().iter().skip(1).map(|c| c.abs()).sum();
        (sigma, min.support)
    }

    pub fn is_monotone(&self) -> bool {
        let n = self.support.len();
        (0..self.table.len()).all(|m| {
            (0..n)
                .filter(|i| m >> i & 1 == 0)
                .all(|i| self.table[m] <= self.table[m | 1 << i])
        })
    }

    /// Monotonicity through the coefficient criterion: for every
    /// `B₁ ⊂ B₂ ⊂ Λ(f)`, `Σ_{A ⊂ B₂, A ∩ (B₂∖B₁) ≠ ∅} f̂(A) ≥ 0`.
    pub fn lemma1_check(&self) -> Result<bool, LocalFnError> {
        if self.support.len() > MAX_LEMMA1_SUPPORT {
            return Err(LocalFnError::SupportTooLarge(self.support.len(), MAX_LEMMA1_SUPPORT));
        }
        let hat = self.hat_coeffs();
        for b2 in 0..hat.len() {
            // Enumerate B₁ ⊂ B₂.
            let mut b1 = b2;
            loop {
                let diff = b2 & !b1;
                let mut s = 0.0;
                let mut a = b2;
                loop {
                    if a & diff != 0 {
                        s += hat[a];
                    }
                    if a == 0 {
                        break;
                    }
                    a = (a - 1) & b2;
                }
                if s < 0.0 {
                    return Ok(false);
                }
                if b1 == 0 {
                    break;
                }
                b1 = (b1 - 1) & b2;
            }
        }
        Ok(true)
    }

    /// `Σ_{A≠∅} f̂(A)`, i.e. `f(1) - f(0)`.
    pub fn gap(&self) -> f64 {
        self.hat_coeffs().iter().skip(1).sum()
    }

    /// Parses the text format:
    ///
    /// ```text
    /// # f(η) = max(η(0), η(1))
    /// sites = 0;1
    /// 0 0
    /// 1 1
    /// 2 1
    /// 3 1
    /// ```
    ///
    /// Each data line is `bitmask value`; masks may be decimal or `0b…`.
    /// Bit `i` refers to the `i`-th listed site. Every mask must appear once.
    pub fn parse(text: &str, dim: usize) -> Result<LocalFunction, LocalFnError> {
        let mut sites: Option<Vec<Site>> = None;
        let mut entries: Vec<(usize, u32, f64)> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |msg: String| LocalFnError::Parse { line: line_no, msg };
            if let Some(rest) = line.strip_prefix("sites") {
                let rest = rest.trim_start().strip_prefix('=').ok_or_else(|| err("expected 'sites = ...'".into()))?;
                let parsed = parse_sites(rest, dim).map_err(|e| err(e.to_string()))?;
                sites = Some(parsed);
                continue;
            }
            let mut parts = line.split_whitespace();
            let (m, v) = match (parts.next(), parts.next(), parts.next()) {
                (Some(m), Some(v), None) => (m, v),
                _ => return Err(err(format!("expected 'bitmask value', got '{line}'"))),
            };
            let mask = match m.strip_prefix("0b") {
                Some(bits) => u32::from_str_radix(bits, 2),
                None => m.parse::<u32>(),
            }
            .map_err(|e| err(format!("bad bitmask '{m}': {e}")))?;
            let value = v.parse::<f64>().map_err(|e| err(format!("bad value '{v}': {e}")))?;
            entries.push((line_no, mask, value));
        }
        let sites = sites.ok_or(LocalFnError::Parse {
            line: 0,
            msg: "missing 'sites = ...' line".into(),
        })?;
        if sites.len() > MAX_SUPPORT {
            return Err(LocalFnError::SupportTooLarge(sites.len(), MAX_SUPPORT));
        }
        let size = 1usize << sites.len();
        let mut table = vec![None; size];
        for (line, mask, value) in entries {
            let slot = table.get_mut(mask as usize).ok_or(LocalFnError::Parse {
                line,
                msg: format!("bitmask {mask} out of range for {} sites", sites.len()),
            })?;
            if slot.replace(value).is_some() {
                return Err(LocalFnError::Parse {
                    line,
                    msg: format!("bitmask {mask} listed twice"),
                });
            }
        }
        let table = table
            .into_iter()
            .enumerate()
            .map(|(m, v)| {
                v.ok_or(LocalFnError::Parse {
                    line: 0,
                    msg: format!("bitmask {m} missing"),
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(sites, table)
    }

    pub fn read(path: &Path, dim: usize) -> Result<LocalFunction, LocalFnError> {
        let text = std::fs::read_to_string(path).map_err(|e| LocalFnError::Parse {
            line: 0,
            msg: format!("{}: {e}", path.display()),
        })?;
        Self::parse(&text, dim)
    }
}

/// `H(η, A) = Π_{x∈A} η(x)` with `η` given as a site predicate.
pub fn eval_h<F: Fn(Site) -> bool>(eta: F, a: &[Site]) -> u8 {
    a.iter().all(|&x| eta(x)) as u8
}

/// `H` on bitmask-encoded configurations and sets.
#[inline]
pub fn eval_h_mask(eta: u32, a: u32) -> u8 {
    (eta & a == a) as u8
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Lemma2Report {
    /// `None` when `|Λ| < 2`, where the first chain does not apply.
    pub ineq1_ok: Option<bool>,
    pub ineq2_ok: bool,
}

/// Checks the two product inequalities for `x_A` (indexed by mask, with
/// `x_∅ = 0` and nonnegative partial sums `Σ_{B⊂A} x_B`) and singleton
/// weights `y_a ∈ [0,1]`, with `y_A = Π_{a∈A} y_a`.
pub fn lemma2_verify(x: &[f64], y: &[f64]) -> Result<Lemma2Report, LocalFnError> {
    let n = y.len();
    if n > MAX_SUPPORT || x.len() != 1 << n {
        return Err(LocalFnError::InvalidInstance(format!(
            "{} coefficients for {} singleton weights",
            x.len(),
            n
        )));
    }
    let scale = x.iter().map(|v| v.abs()).fold(1.0, f64::max);
    let tol = 1e-12 * scale * (1 << n) as f64;
    if x[0].abs() > tol {
        return Err(LocalFnError::InvalidInstance("x_∅ must be 0".into()));
    }
    if let Some(bad) = y.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(LocalFnError::InvalidInstance(format!("y = {bad} outside [0, 1]")));
    }
    // z_A = Σ_{B⊂A} x_B via the zeta transform.
    let mut z = x.to_vec();
    for i in 0..n {
        for m in 0..z.len() {
            if m >> i & 1 == 1 {
                z[m] += z[m ^ (1 << i)];
            }
        }
    }
    if let Some(m) = (0..z.len()).find(|&m| z[m] < -tol) {
        return Err(LocalFnError::InvalidInstance(format!("partial sum z[{m:#b}] = {} < 0", z[m])));
    }
    let full = (1usize << n) - 1;
    let y_of = |m: usize| -> f64 { (0..n).filter(|i| m >> i & 1 == 1).map(|i| y[i]).product() };
    let ys: Vec<f64> = (0..=full).map(y_of).collect();

    let lhs2: f64 = (0..=full).map(|m| x[m] * ys[m]).sum();
    let rhs2 = x.iter().sum::<f64>() * ys[full];
    let ineq2_ok = lhs2 >= rhs2 - tol;

    let ineq1_ok = (n >= 2).then(|| {
        let lhs: f64 = (0..=full).map(|m| x[m] * ys[m] * (1.0 - ys[full & !m])).sum();
        let mid: f64 = (0..n)
            .map(|a| {
                let others: f64 = (0..n).filter(|&b| b != a).map(|b| 1.0 - y[b]).product();
                x[1 << a] * y[a] * others
            })
            .sum();
        lhs >= mid - tol && mid >= -tol
    });
    Ok(Lemma2Report { ineq1_ok, ineq2_ok })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(x: i32) -> Site {
        Site::new(&[x])
    }

    fn max01() -> LocalFunction {
        LocalFunction::from_fn(vec![s(0), s(1)], |m| if m != 0 { 1.0 } else { 0.0 }).unwrap()
    }

    #[test]
    fn duality_function() {
        assert_eq!(eval_h(|_| false, &[]), 1);
        assert_eq!(eval_h(|_| true, &[s(0), s(4)]), 1);
        assert_eq!(eval_h(|x| x == s(0), &[s(0), s(1)]), 0);
        assert_eq!(eval_h_mask(0b01, 0b11), 0);
        assert_eq!(eval_h_mask(0b111, 0b101), 1);
    }

    #[test]
    fn hat_coeff_examples() {
        let f = LocalFunction::single_site(s(0));
        assert_eq!(f.hat_coeffs(), vec![0.0, 1.0]);
        let g = LocalFunction::product(vec![s(0), s(1)]).unwrap();
        assert_eq!(g.hat_coeffs(), vec![0.0, 0.0, 0.0, 1.0]);
        assert_eq!(max01().hat_coeffs(), vec![0.0, 1.0, 1.0, -1.0]);
    }

    #[test]
    fn sigma_support_and_gap() {
        let (sig, sup) = LocalFunction::single_site(s(0)).sigma_and_support();
        assert_eq!((sig, sup), (1.0, vec![s(0)]));
        let (sig, sup) = LocalFunction::constant(2.0).sigma_and_support();
        assert_eq!((sig, sup.len()), (0.0, 0));
        assert_eq!(max01().sigma_and_support().0, 3.0);
        assert_eq!(LocalFunction::single_site(s(0)).gap(), 1.0);
        assert_eq!(LocalFunction::constant(3.0).gap(), 0.0);
        assert_eq!(max01().gap(), 1.0);
    }

    #[test]
    fn padded_support_is_trimmed() {
        let f = LocalFunction::new(vec![s(0), s(5)], vec![0.0, 1.0, 0.0, 1.0]).unwrap();
        assert_eq!(f.support(), &[s(0)]);
        assert_eq!(f.table(), &[0.0, 1.0]);
        let c = LocalFunction::new(vec![s(0), s(1)], vec![2.0; 4]).unwrap();
        assert!(c.is_empty());
    }

    #[test]
    fn monotonicity() {
        assert!(LocalFunction::single_site(s(0)).is_monotone());
        let flip = LocalFunction::new(vec![s(0)], vec![1.0, 0.0]).unwrap();
        assert!(!flip.is_monotone());
        assert!(max01().is_monotone());
        assert!(LocalFunction::single_site(s(0)).lemma1_check().unwrap());
        // η(0)(1 - η(1))
        let g = LocalFunction::from_fn(vec![s(0), s(1)], |m| if m == 0b01 { 1.0 } else { 0.0 }).unwrap();
        assert!(!g.is_monotone());
        assert!(!g.lemma1_check().unwrap());
        assert!(!flip.lemma1_check().unwrap());
    }

    #[test]
    fn lemma2_examples() {
        let rep = lemma2_verify(&[0.0; 8], &[0.3, 0.6, 0.9]).unwrap();
        assert_eq!(rep, Lemma2Report { ineq1_ok: Some(true), ineq2_ok: true });
        let rep = lemma2_verify(&[0.0, 0.7], &[0.4]).unwrap();
        assert_eq!(rep, Lemma2Report { ineq1_ok: None, ineq2_ok: true });
        assert!(matches!(
            lemma2_verify(&[0.0, -1.0], &[0.5]),
            Err(LocalFnError::InvalidInstance(_))
        ));
        assert!(matches!(
            lemma2_verify(&[1.0, 1.0], &[0.5]),
            Err(LocalFnError::InvalidInstance(_))
        ));
        assert!(matches!(
            lemma2_verify(&[0.0, 1.0], &[1.5]),
            Err(LocalFnError::InvalidInstance(_))
        ));
    }

    #[test]
    fn parse_text_format() {
        let text = "# max\nsites = 0;1\n0 0\n0b01 1\n2 1\n3 1   # top\n";
        let f = LocalFunction::parse(text, 1).unwrap();
        assert_eq!(f, max01());
        let missing = "sites = 0;1\n0 0\n1 1\n2 1\n";
        assert!(matches!(LocalFunction::parse(missing, 1), Err(LocalFnError::Parse { .. })));
        let dup = "sites = 0\n0 0\n0 1\n";
        assert!(matches!(LocalFunction::parse(dup, 1), Err(LocalFnError::Parse { line: 3, .. })));
        let bad = "sites = 0\n0 zero\n";
        assert!(matches!(LocalFunction::parse(bad, 1), Err(LocalFnError::Parse { line: 2, .. })));
    }

    #[test]
    fn rejects_oversized_or_malformed() {
        assert!(matches!(
            LocalFunction::new(vec![s(0)], vec![0.0; 3]),
            Err(LocalFnError::TableSize { .. })
        ));
        assert!(matches!(
            LocalFunction::new(vec![s(0), s(0)], vec![0.0; 4]),
            Err(LocalFnError::DuplicateSite(_))
        ));
        let big: Vec<Site> = (0..13).map(s).collect();
        let f = LocalFunction::from_fn(big, |m| m.count_ones() as f64).unwrap();
        assert!(f.lemma1_check().is_err());
    }
}
