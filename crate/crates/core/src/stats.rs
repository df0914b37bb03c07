//! Replica statistics and the deterministic parallel reduction.

use rayon::prelude::*;

use crate::error::SimError;

/// Running mean and variance (Welford), mergeable with Chan's update.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct MeanAcc {
    count: u64,
    mean: f64,
    m2: f64,
}

impl MeanAcc {
    #[inline]
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn merge(&mut self, other: &MeanAcc) {
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = *other;
            return;
        }
        let n = self.count + other.count;
        let delta = other.mean - self.mean;
        self.mean += delta * (other.count as f64 / n as f64);
        self.m2 += other.m2 + delta * delta * (self.count as f64 * other.count as f64 / n as f64);
        self.count = n;
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Unbiased sample variance; zero for fewer than two samples.
    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            (self.m2 / (self.count - 1) as f64).max(0.0)
        }
    }

    pub fn stderr(&self) -> f64 {
        if self.count == 0 {
            return 0.0;
        }
        (self.variance() / self.count as f64).sqrt()
    }
}

/// Mean and standard error of one Monte Carlo estimate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Estimate {
    pub mean: f64,
    pub stderr: f64,
}

impl From<&MeanAcc> for Estimate {
    fn from(a: &MeanAcc) -> Estimate {
        Estimate {
            mean: a.mean(),
            stderr: a.stderr(),
        }
    }
}

impl Estimate {
    /// `|self - value| <= k · stderr`.
    pub fn agrees_with(&self, value: f64, k: f64) -> bool {
        (self.mean - value).abs() <= k * self.stderr
    }
}

/// Replicas per work unit. Fixed so the reduction tree never depends on
/// the number of worker threads.
pub const BLOCK: u64 = 512;

/// Runs `replicas` independent replicas, each writing `width` observations,
/// and returns one accumulator per observation slot.
///
/// Blocks of [`BLOCK`] replicas are accumulated sequentially, block results
/// are collected in index order and merged left to right, which makes the
/// output bitwise identical for any thread count.
pub fn reduce_replicas<F>(replicas: u64, width: usize, run: F) -> Result<Vec<MeanAcc>, SimError>
where
    F: Fn(u64, &mut [f64]) -> Result<(), SimError> + Sync,
{
    let blocks = replicas.div_ceil(BLOCK);
    let partials: Vec<Vec<MeanAcc>> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut acc = vec![MeanAcc::default(); width];
            let mut buf = vec![0.0; width];
            let end = ((b + 1) * BLOCK).min(replicas);
            for r in b * BLOCK..end {
                run(r, &mut buf)?;
                for (a, &x) in acc.iter_mut().zip(&buf) {
                    a.push(x);
                }
            }
            Ok(acc)
        })
        .collect::<Result<_, SimError>>()?;
    let mut total = vec![MeanAcc::default(); width];
    for p in &partials {
        for (t, a) in total.iter_mut().zip(p) {
            t.merge(a);
        }
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn welford_matches_two_pass() {
        let xs: Vec<f64> = (0..1000).map(|i| ((i * 37) % 101) as f64 * 0.1).collect();
        let mut acc = MeanAcc::default();
        xs.iter().for_each(|&x| acc.push(x));
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (xs.len() - 1) as f64;
        assert!((acc.mean() - mean).abs() < 1e-12);
        assert!((acc.variance() - var).abs() < 1e-9);
    }

    #[test]
    fn merge_equals_sequential() {
        let mut a = MeanAcc::default();
        let mut b = MeanAcc::default();
        let mut all = MeanAcc::default();
        for i in 0..500 {
            let x = (i as f64).sin();
            all.push(x);
            if i < 123 {
                a.push(x)
            } else {
                b.push(x)
            }
        }
        a.merge(&b);
        assert_eq!(a.count(), all.count());
        assert!((a.mean() - all.mean()).abs() < 1e-13);
        assert!((a.variance() - all.variance()).abs() < 1e-12);
    }

    #[test]
    fn constant_samples_have_exactly_zero_variance() {
        let accs = reduce_replicas(2000, 1, |_, out| {
            out[0] = (-0.3f64).exp();
            Ok(())
        })
        .unwrap();
        assert_eq!(accs[0].mean(), (-0.3f64).exp());
        assert_eq!(accs[0].stderr(), 0.0);
    }

    #[test]
    fn reduction_is_thread_count_independent() {
        let run = |r: u64, out: &mut [f64]| {
            out[0] = ((r * 2654435761) % 1000) as f64 / 997.0;
            Ok(())
        };
        let one = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap()
            .install(|| reduce_replicas(10_000, 1, run).unwrap());
        let four = rayon::ThreadPoolBuilder::new()
            .num_threads(4)
            .build()
            .unwrap()
            .install(|| reduce_replicas(10_000, 1, run).unwrap());
        assert_eq!(one[0].mean().to_bits(), four[0].mean().to_bits());
        assert_eq!(one[0].variance().to_bits(), four[0].variance().to_bits());
    }
}
