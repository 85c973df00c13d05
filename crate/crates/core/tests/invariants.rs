use proptest::prelude::*;
use rare_reach::cumulant::Cumulant;
use rare_reach::oracle::exact_walk_passage;
use rare_reach::parallel::min_passage_probability;
use rare_reach::{CumulantProfile, IncrementLaw, LevyModel};

fn levy() -> impl Strategy<Value = LevyModel> {
    (0.5f64..3.0, 0.3f64..2.0, 0.0f64..2.0, 1.0f64..5.0, 0.0f64..3.0, 0.5f64..3.0).prop_map(
        |(mu, sigma, r, alpha, s, beta)| LevyModel::new(mu, sigma, r, alpha, s, beta).unwrap(),
    )
}

fn interior(m: &impl Cumulant, u: f64) -> f64 {
    let (lo, hi) = m.domain();
    let (lo, hi) = (lo.max(-8.0), hi.min(8.0));
    lo + (hi - lo) * (0.02 + 0.96 * u)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn levy_exponent_is_convex(m in levy(), u in 0.0f64..1.0, v in 0.0f64..1.0) {
        let (a, b) = (interior(&m, u), interior(&m, v));
        let mid = m.psi(0.5 * (a + b)).unwrap();
        let chord = 0.5 * (m.psi(a).unwrap() + m.psi(b).unwrap());
        prop_assert!(mid <= chord + 1e-9 * (1.0 + chord.abs()));
        prop_assert!(m.psi_second(a).unwrap() > 0.0);
    }

    #[test]
    fn tilting_shifts_the_exponent(m in levy(), u in 0.0f64..1.0, w in 0.0f64..1.0) {
        let l = interior(&m, u);
        let t = m.tilt(l).unwrap();
        let th = interior(&t, w);
        let lhs = t.psi(th).unwrap();
        let rhs = m.psi(l + th).unwrap() - m.psi(l).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-8 * (1.0 + rhs.abs()), "{} vs {}", lhs, rhs);
    }

    #[test]
    fn walk_tilt_shifts_the_exponent(p in 0.05f64..0.95, l in -3.0f64..3.0, th in -3.0f64..3.0) {
        let law = IncrementLaw::two_point(p).unwrap();
        let t = law.tilt(l).unwrap();
        let rhs = law.psi(l + th).unwrap() - law.psi(l).unwrap();
        prop_assert!((t.psi(th).unwrap() - rhs).abs() <= 1e-10 * (1.0 + rhs.abs()));
    }

    #[test]
    fn legendre_is_dual_to_the_exponent(p in 0.05f64..0.49, l in -2.5f64..2.5) {
        let prof = CumulantProfile::new(IncrementLaw::two_point(p).unwrap()).unwrap();
        let s = prof.psi_prime(l).unwrap();
        let expect = l * s - prof.psi(l).unwrap();
        let got = prof.legendre(s).unwrap();
        prop_assert!((got - expect).abs() <= 1e-9 * (1.0 + expect.abs()), "{} vs {}", got, expect);
    }

    #[test]
    fn cramer_root_zeroes_the_exponent(m in levy()) {
        prop_assume!(m.mean() < 0.0);
        let prof = CumulantProfile::new(m).unwrap();
        let l = prof.lambda_star();
        prop_assert!(l > 0.0);
        prop_assert!(prof.psi(l).unwrap().abs() < 1e-9);
        prop_assert!(prof.psi_prime_star() > 0.0);
    }

    #[test]
    fn optimal_particles_grow_with_budget(p in 0.05f64..0.49, c in 1.0f64..500.0, extra in 0.0f64..500.0) {
        let prof = CumulantProfile::new(IncrementLaw::two_point(p).unwrap()).unwrap();
        let a = prof.optimal_particles(c).unwrap();
        let b = prof.optimal_particles(c + extra).unwrap();
        prop_assert!(a >= 1 && a <= b);
        prop_assert!((a as f64) < prof.threshold_particles(c).max(1.0) + 1e-9 || a == 1);
    }

    #[test]
    fn min_passage_is_monotone(p in 0.0f64..1.0, q in 0.0f64..1.0, n in 1u64..200) {
        let (lo, hi) = if p <= q { (p, q) } else { (q, p) };
        prop_assert!(min_passage_probability(lo, n) <= min_passage_probability(hi, n));
        prop_assert!(min_passage_probability(p, n) <= min_passage_probability(p, n + 1));
        prop_assert!(min_passage_probability(p, n) <= (n as f64 * p).min(1.0) + 1e-15);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn passage_curve_is_monotone(p in 0.1f64..0.6, x in 1u32..15, t in 1u32..80) {
        let near = exact_walk_passage(p, x, t).unwrap();
        let far = exact_walk_passage(p, x + 1, t).unwrap();
        for s in 1..=t {
            prop_assert!(near.at(s) >= near.at(s - 1));
            prop_assert!(far.at(s) <= near.at(s) + 1e-15);
        }
    }
}
