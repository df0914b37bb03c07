use bvm_core::disorder::{BiasField, DisorderLaw};
use bvm_core::dual::{annealed_path_weight, coupled_dual_and_walkers, dual_evolve};
use bvm_core::exact::{build_forward_generator, semigroup_apply};
use bvm_core::forward::{coupled_evolve, Configuration};
use bvm_core::kernel::Kernel;
use bvm_core::localfn::{eval_h_mask, lemma2_verify, LocalFunction};
use bvm_core::range::dv_constant;
use bvm_core::rng::{self, Domain};
use bvm_core::site::{Lattice, Site};
use proptest::prelude::*;

fn law_strategy() -> impl Strategy<Value = DisorderLaw> {
    prop::collection::vec((0.0f64..5.0, 0.01f64..1.0), 1..5).prop_map(|atoms| {
        let total: f64 = atoms.iter().map(|a| a.1).sum();
        DisorderLaw::new(atoms.into_iter().map(|(b, p)| (b, p / total)).collect()).unwrap()
    })
}

fn two_sided_law() -> impl Strategy<Value = DisorderLaw> {
    (0.01f64..0.99, prop::collection::vec((0.01f64..5.0, 0.01f64..1.0), 1..4)).prop_map(|(q, rest)| {
        let total: f64 = rest.iter().map(|a| a.1).sum();
        let mut atoms = vec![(0.0, q)];
        atoms.extend(rest.into_iter().map(|(b, p)| (b, (1.0 - q) * p / total)));
        DisorderLaw::new(atoms).unwrap()
    })
}

fn sites(n: usize) -> Vec<Site> {
    (0..n as i32).map(|i| Site::new(&[i])).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn jensen_bound_on_nu1(law in law_strategy()) {
        prop_assert!(law.nu1() <= (1.0 + law.mean()).ln() + 1e-12);
        prop_assert!(law.nu1() >= 0.0);
    }

    #[test]
    fn nu1_below_nu2(law in two_sided_law()) {
        let nu2 = law.nu2().unwrap();
        prop_assert!(law.nu1() < nu2);
        let c = |nu| dv_constant(1, 2.0, std::f64::consts::PI.powi(2) / 2.0, nu).unwrap();
        prop_assert!(c(law.nu1()) < c(nu2));
    }

    // (-1)^n Δ_h^n L(u) >= 0 for n <= 3.
    #[test]
    fn laplace_is_completely_monotone(law in law_strategy(), u in 0.0f64..10.0, h in 0.01f64..1.0) {
        let l = |k: f64| law.laplace(u + k * h).unwrap();
        let d1 = l(1.0) - l(0.0);
        let d2 = l(2.0) - 2.0 * l(1.0) + l(0.0);
        let d3 = l(3.0) - 3.0 * l(2.0) + 3.0 * l(1.0) - l(0.0);
        prop_assert!(l(0.0) > 0.0 && l(0.0) <= 1.0 + 1e-15);
        prop_assert!(d1 <= 1e-15);
        prop_assert!(d2 >= -1e-15);
        prop_assert!(d3 <= 1e-15);
        prop_assert!((law.laplace(0.0).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn annealed_weight_dominates_range_floor(law in two_sided_law(), seed in 0u64..1000, t in 0.0f64..30.0, n in 1usize..4) {
        let k = Kernel::nearest_neighbor(1).unwrap();
        let mut rng = rng::stream(seed, Domain::Dual, 0);
        let st = dual_evolve(&sites(n), &k, Lattice::Free { dim: 1 }, t, &mut rng, None).unwrap();
        let w = annealed_path_weight(&law, &st).unwrap();
        let floor = (-law.nu2().unwrap() * st.range_count() as f64).exp();
        prop_assert!(w >= floor * (1.0 - 1e-12));
        prop_assert!(w > 0.0 && w <= 1.0);
    }

    #[test]
    fn moebius_roundtrip(n in 0usize..=6, seed in any::<u64>()) {
        // Multiples of 1/8 keep every sum exact.
        let f = LocalFunction::from_fn(sites(n), |m| {
            ((rng::splitmix64(seed ^ m as u64) % 2001) as f64 - 1000.0) / 8.0
        }).unwrap();
        let hat = f.hat_coeffs();
        let n_eff = f.support().len();
        for eta in 0..1u32 << n_eff {
            let v: f64 = (0..1u32 << n_eff).map(|a| hat[a as usize] * eval_h_mask(eta, a) as f64).sum();
            prop_assert_eq!(v, f.eval(eta));
        }
        prop_assert_eq!(f.gap(), f.all_ones_value() - f.all_zeros_value());
    }

    #[test]
    fn coefficient_criterion_is_monotonicity(n in 0usize..=4, seed in any::<u64>()) {
        // Small integer tables so ties and monotone cases both occur.
        let f = LocalFunction::from_fn(sites(n), |m| {
            let base = m.count_ones() as f64;
            base + (rng::splitmix64(seed ^ m as u64) % 3) as f64 - 1.0
        }).unwrap();
        prop_assert_eq!(f.lemma1_check().unwrap(), f.is_monotone());
    }

    #[test]
    fn lemma2_on_valid_instances(n in 1usize..=5, seed in any::<u64>()) {
        let mut r = rng::stream(seed, Domain::Harness, 0);
        let (x, y) = lemma2_instance(n, &mut r);
        let rep = lemma2_verify(&x, &y).unwrap();
        prop_assert!(rep.ineq2_ok);
        prop_assert_ne!(rep.ineq1_ok, Some(false));
    }

    #[test]
    fn duality_function_monotonicity(eta in 0u32..64, a in 0u32..64, bit in 0u32..6) {
        let b = 1u32 << bit;
        prop_assert!(eval_h_mask(eta, a) <= eval_h_mask(eta | b, a));
        prop_assert!(eval_h_mask(eta, a | b) <= eval_h_mask(eta, a));
    }

    #[test]
    fn coupling_preserves_order(seed in 0u64..10_000, low in any::<u8>(), extra in any::<u8>()) {
        let tk = Kernel::nearest_neighbor(1).unwrap().fold(8).unwrap();
        let field = BiasField::sample(&DisorderLaw::bernoulli(0.5, 1.0).unwrap(), tk.torus(), seed, 0);
        let lo = Configuration::from_mask(tk.torus(), low as u64);
        let hi = Configuration::from_mask(tk.torus(), (low | extra) as u64);
        let mut rng = rng::stream(seed, Domain::Forward, 1);
        let (a, b) = coupled_evolve(&lo, &hi, &field, &tk, 5.0, &mut rng).unwrap();
        prop_assert!(a.le(&b));
    }

    #[test]
    fn dual_range_dominated_by_walkers(seed in any::<u64>(), gaps in prop::collection::vec(1i32..4, 1..4)) {
        let k = Kernel::nearest_neighbor(1).unwrap();
        let mut pos = 0;
        let mut starts = vec![Site::new(&[0])];
        for g in gaps {
            pos += g;
            starts.push(Site::new(&[pos]));
        }
        let mut rng = rng::stream(seed, Domain::Walkers, 0);
        let c = coupled_dual_and_walkers(&starts, &k, Lattice::Free { dim: 1 }, 10.0, &mut rng).unwrap();
        prop_assert!(c.dual.count() <= c.walkers.count());
        prop_assert!(c.dual.is_subset(&c.walkers));
    }

    #[test]
    fn semigroup_conserves_probability(seed in 0u64..1000, t in 0.0f64..20.0) {
        let tk = Kernel::nearest_neighbor(1).unwrap().fold(4).unwrap();
        let field = BiasField::sample(&DisorderLaw::bernoulli(0.3, 2.0).unwrap(), tk.torus(), seed, 0);
        let q = build_forward_generator(&field, &tk).unwrap();
        let v = semigroup_apply(&q, &vec![1.0; 16], t).unwrap();
        prop_assert!(v.iter().all(|x| (x - 1.0).abs() < 1e-10));
    }
}

/// Coefficients `x_A` whose partial sums `z_A = Σ_{B⊂A} x_B` are
/// nonnegative with `z_∅ = 0` (some of them exactly zero), and weights
/// `y ∈ [0,1]` including the endpoints.
pub fn lemma2_instance<R: rand::Rng>(n: usize, r: &mut R) -> (Vec<f64>, Vec<f64>) {
    let mut x: Vec<f64> = (0..1usize << n)
        .map(|_| if r.random::<f64>() < 0.2 { 0.0 } else { r.random::<f64>() })
        .collect();
    x[0] = 0.0;
    for i in 0..n {
        for m in 0..x.len() {
            if m >> i & 1 == 1 {
                x[m] -= x[m ^ (1 << i)];
            }
        }
    }
    let y = (0..n)
        .map(|_| match r.random_range(0..10) {
            0 => 0.0,
            1 => 1.0,
            _ => r.random::<f64>(),
        })
        .collect();
    (x, y)
}
