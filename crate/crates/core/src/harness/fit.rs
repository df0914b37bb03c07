//! Stretched-exponent fits: for `m(t) ≈ exp(-c t^γ)`, `log(-log m)` is
//! linear in `log t` with slope `γ`.

use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::SimError;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StretchFit {
    pub gamma: f64,
    /// Half-width of the 95% confidence interval for `gamma`.
    pub ci_halfwidth: f64,
    /// Fitted `log c`.
    pub intercept: f64,
    pub points: usize,
}

impl StretchFit {
    pub fn covers(&self, value: f64) -> bool {
        (self.gamma - value).abs() <= self.ci_halfwidth
    }

    pub fn interval(&self) -> (f64, f64) {
        (self.gamma - self.ci_halfwidth, self.gamma + self.ci_halfwidth)
    }
}

pub const MIN_FIT_POINTS: usize = 5;

/// Least-squares slope of `log(-log m)` on `log t` over the points with
/// `t` in `window` (inclusive). The interval is the Student-t 97.5% quantile
/// times the slope's standard error from the residual variance.
///
/// Points are weighted by `(log m)²`: relative noise `ε` on `m` moves
/// `log(-log m)` by about `ε / |log m|`, so early points are noisier.
pub fn fit_stretch_exponent(curve: &[(f64, f64)], window: (f64, f64)) -> Result<StretchFit, SimError> {
    let (lo, hi) = window;
    if !(lo > 0.0 && hi > lo) {
        return Err(SimError::InvalidArgument(format!("degenerate window [{lo}, {hi}]")));
    }
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut ws = Vec::new();
    for &(t, m) in curve.iter().filter(|(t, _)| *t >= lo && *t <= hi) {
        if !(m > 0.0 && m < 1.0) {
            return Err(SimError::InvalidArgument(format!("m({t}) = {m} is outside (0, 1)")));
        }
        let l = -m.ln();
        xs.push(t.ln());
        ys.push(l.ln());
        ws.push(l * l);
    }
    let n = xs.len();
    if n < MIN_FIT_POINTS {
        return Err(SimError::InvalidArgument(format!(
            "window [{lo}, {hi}] holds {n} points, need {MIN_FIT_POINTS}"
        )));
    }
    let sw: f64 = ws.iter().sum();
    let mean = |v: &[f64]| v.iter().zip(&ws).map(|(a, w)| a * w).sum::<f64>() / sw;
    let (mx, my) = (mean(&xs), mean(&ys));
    let sxx: f64 = xs.iter().zip(&ws).map(|(x, w)| w * (x - mx).powi(2)).sum();
    if sxx <= 0.0 {
        return Err(SimError::InvalidArgument("window holds a single time".into()));
    }
    let sxy: f64 = (0..n).map(|i| ws[i] * (xs[i] - mx) * (ys[i] - my)).sum();
    let gamma = sxy / sxx;
    let intercept = my - gamma * mx;
    let rss: f64 = (0..n).map(|i| ws[i] * (ys[i] - intercept - gamma * xs[i]).powi(2)).sum();
    let dof = (n - 2) as f64;
    let se = (rss / dof / sxx).sqrt();
    let q = StudentsT::new(0.0, 1.0, dof)
        .map_err(|e| SimError::InvalidArgument(e.to_string()))?
        .inverse_cdf(0.975);
    Ok(StretchFit {
        gamma,
        ci_halfwidth: q * se,
        intercept,
        points: n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn synthetic(gamma: f64) -> Vec<(f64, f64)> {
        (0..20)
            .map(|i| {
                let t = 10f64.powf(1.0 + 2.0 * i as f64 / 19.0);
                (t, (-0.3 * t.powf(gamma)).exp())
            })
            .collect()
    }

    #[test]
    fn recovers_exact_exponent() {
        let f = fit_stretch_exponent(&synthetic(0.4), (10.0, 1000.0)).unwrap();
        assert!((f.gamma - 0.4).abs() < 1e-6);
        assert!((f.intercept - 0.3f64.ln()).abs() < 1e-6);
        assert_eq!(f.points, 20);
    }

    #[test]
    fn rejects_bad_inputs() {
        let c = synthetic(0.4);
        assert!(fit_stretch_exponent(&c, (500.0, 1000.0)).is_err());
        assert!(fit_stretch_exponent(&c, (10.0, 5.0)).is_err());
        let mut bad = c.clone();
        bad[3].1 = 1.0;
        assert!(fit_stretch_exponent(&bad, (10.0, 1000.0)).is_err());
    }

    #[test]
    fn t_quantile() {
        let q = StudentsT::new(0.0, 1.0, 10.0).unwrap().inverse_cdf(0.975);
        assert!((q - 2.228_138_85).abs() < 1e-6);
    }
}
