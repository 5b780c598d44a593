//! Property tests for the contracts that cross module boundaries.

use ial_core::augmented::{al_value, dual_slack, dual_value_and_grad, gap_certificate, DualState};
use ial_core::io::{instance_from_json, instance_to_json, read_trace, to_canonical_json, write_trace, TraceSidecar};
use ial_core::outer::{check_schedule_conditions, run_ial, OuterConfig, ToleranceSchedule};
use ial_core::problem::{generate, CompositeTerm, Family, ProblemInstance};
use ial_core::rng::Sampler;
use ial_core::theory::{check_lemma4_recursion, find_k0, BoundReport, TheoryConstants};
use ndarray::Array1;
use proptest::prelude::*;

const FAMILIES: [Family; 3] = [Family::SimplexLs, Family::BoxQp, Family::L1BasisPursuit];

fn instance(family: usize, n: usize, m: usize, seed: u64) -> ProblemInstance {
    generate(FAMILIES[family % 3], n, m.min(n), seed).unwrap().instance
}

fn domain_point(g: &CompositeTerm, n: usize, rng: &mut Sampler) -> Array1<f64> {
    match g {
        CompositeTerm::Simplex { radius } => {
            let e = Array1::from_iter((0..n).map(|_| rng.exponential()));
            let s = e.sum();
            e * (*radius / s)
        }
        CompositeTerm::Box { lo, hi } => Array1::from_iter((0..n).map(|i| rng.uniform_in(lo[i], hi[i]))),
        CompositeTerm::L1Box { radius, .. } => Array1::from_iter((0..n).map(|_| rng.uniform_in(-radius, *radius))),
    }
}

fn normal(n: usize, scale: f64, rng: &mut Sampler) -> Array1<f64> {
    Array1::from_iter((0..n).map(|_| scale * rng.normal()))
}

fn norm(v: &Array1<f64>) -> f64 {
    v.dot(v).sqrt()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn op_norm_bounds_every_rayleigh_quotient(family in 0usize..3, n in 1usize..12, m in 1usize..6, seed in any::<u64>()) {
        let p = instance(family, n, m, seed);
        let mut rng = Sampler::new(seed ^ 1);
        for _ in 0..20 {
            let v = normal(p.n(), 1.0, &mut rng);
            let av = p.constraint.a.dot(&v);
            prop_assert!(av.dot(&av) <= p.constraint.op_norm_sq * v.dot(&v) * (1.0 + 1e-12));
        }
    }

    #[test]
    fn lmo_beats_random_domain_points(family in 0usize..3, n in 1usize..10, seed in any::<u64>()) {
        let p = instance(family, n, 1, seed);
        let g = &p.composite;
        let mut rng = Sampler::new(seed ^ 2);
        let c = normal(p.n(), 2.0, &mut rng);
        let w = g.lmo(c.view());
        prop_assert!(g.contains(w.view()));
        let best = c.dot(&w) + g.eval(w.view());
        for _ in 0..200 {
            let x = domain_point(g, p.n(), &mut rng);
            prop_assert!(best <= c.dot(&x) + g.eval(x.view()) + 1e-12);
        }
    }

    #[test]
    fn gap_is_nonnegative_and_bounds_suboptimality(
        family in 0usize..3, n in 2usize..8, m in 1usize..4, seed in any::<u64>(), beta in 0.1f64..10.0,
    ) {
        let p = instance(family, n, m, seed);
        let mut rng = Sampler::new(seed ^ 3);
        let s = DualState::new(normal(p.m(), 1.0, &mut rng), beta).unwrap();
        let d = dual_value_and_grad(&p, &s, 1e-10).unwrap();
        for _ in 0..10 {
            let x = domain_point(&p.composite, p.n(), &mut rng);
            let gap = gap_certificate(&p, x.view(), &s).unwrap().gap;
            prop_assert!(gap >= -1e-12);
            prop_assert!(al_value(&p, x.view(), &s).unwrap() - d.value <= gap + dual_slack(1e-10));
        }
    }

    #[test]
    fn dual_function_is_concave_on_sampled_pairs(family in 0usize..3, n in 2usize..8, m in 1usize..4, seed in any::<u64>()) {
        let p = instance(family, n, m, seed);
        let mut rng = Sampler::new(seed ^ 4);
        let (l, mu) = (normal(p.m(), 1.0, &mut rng), normal(p.m(), 1.0, &mut rng));
        let dl = dual_value_and_grad(&p, &DualState::new(l.clone(), 1.0).unwrap(), 1e-10).unwrap();
        let dm = dual_value_and_grad(&p, &DualState::new(mu.clone(), 1.0).unwrap(), 1e-10).unwrap();
        prop_assert!(dl.value <= dm.value + dm.grad.dot(&(&l - &mu)) + dual_slack(1e-10));
        prop_assert!(norm(&(&dl.grad - &dm.grad)) <= norm(&(&l - &mu)) + 2e-5);
    }

    #[test]
    fn power_law_schedule_meets_its_conditions(sigma in 1e-3f64..1e3, alpha in 0.501f64..=1.0) {
        let sch = ToleranceSchedule::power_law(sigma, alpha).unwrap();
        let mut prev = f64::INFINITY;
        for k in 1..=200 {
            let eta = sch.eta_at(k).unwrap();
            prop_assert!((eta - sigma / (k as f64).powf(2.0 * alpha)).abs() <= 1e-15 * sigma);
            prop_assert!(eta > 0.0 && eta <= prev);
            prev = eta;
        }
        prop_assert!(check_schedule_conditions(&sch, 4, 200).unwrap().passed());
        prop_assert!(sch.sum_upper_bound() >= (1..=200).map(|k| sch.eta_at(k).unwrap()).sum::<f64>());
    }

    #[test]
    fn k0_constants_satisfy_their_lower_bounds(
        beta in 0.1f64..10.0, dist in 0.0f64..5.0, sigma in 0.01f64..2.0, alpha in 0.6f64..=1.0, scale in 1e-4f64..1.0,
    ) {
        let sch = ToleranceSchedule::power_law(sigma, alpha).unwrap();
        let deltas: Vec<f64> = (1..=300).map(|k| scale / k as f64).collect();
        let mut tc = TheoryConstants::new(beta, dist, sch.sum_upper_bound(), deltas[0], Some((sigma, alpha))).unwrap();
        prop_assert!(tc.b >= dist);
        if let Some((k0, eta)) = find_k0(&deltas, &sch, tc.theta, 300).unwrap() {
            prop_assert!(k0 >= 4);
            prop_assert!(deltas[k0 - 1..].iter().all(|&d| d <= 1.0 / (2.0 * tc.theta)));
            prop_assert!(eta <= 1.0 / (24.0 * tc.theta));
            tc.set_k0(k0, eta);
            let (t1, t2) = (tc.tau1.unwrap(), tc.tau2.unwrap());
            prop_assert!(t1 * tc.theta >= 1.0 - 1e-12);
            prop_assert!(tc.theta * t2 * t2 >= 1.5 * (1.0 - 1e-12));
            prop_assert!(t1 >= 1.0 / tc.theta * (1.0 - 1e-12));
            prop_assert!(t2 >= (1.5 / tc.theta).sqrt() * (1.0 - 1e-12));
        }
    }

    #[test]
    fn lemma4_envelope_holds(e in 1e-2f64..1e2, delta1 in 0.0f64..1e2) {
        prop_assert!(check_lemma4_recursion(delta1, e, 2000).unwrap().passed);
    }

    #[test]
    fn report_passes_iff_no_margin_below_slack(margins in proptest::collection::vec(-1.0f64..1.0, 1..40), slack in 0.0f64..0.5) {
        let pairs: Vec<(usize, f64)> = margins.iter().copied().enumerate().map(|(i, m)| (i + 1, m)).collect();
        let r = BoundReport::from_margins("p", pairs, slack);
        let bad: Vec<usize> = margins.iter().enumerate().filter(|(_, &m)| m < -slack).map(|(i, _)| i + 1).collect();
        prop_assert_eq!(r.passed, bad.is_empty());
        prop_assert_eq!(r.violations, bad.len());
        prop_assert_eq!(r.first_violation_k, bad.first().copied());
    }

    #[test]
    fn floats_survive_canonical_json(v in proptest::collection::vec(any::<f64>().prop_filter("finite", |x| x.is_finite()), 1..20)) {
        let text = to_canonical_json(&v).unwrap();
        let back: Vec<f64> = serde_json::from_str(&text).unwrap();
        prop_assert_eq!(back.iter().map(|x| x.to_bits()).collect::<Vec<_>>(), v.iter().map(|x| x.to_bits()).collect::<Vec<_>>());
    }

    #[test]
    fn instance_json_round_trip_is_byte_identical(family in 0usize..3, n in 1usize..10, m in 1usize..5, seed in any::<u64>()) {
        let p = instance(family, n, m, seed);
        let text = instance_to_json(&p).unwrap();
        let q = instance_from_json(&text).unwrap();
        prop_assert_eq!(&q, &p);
        prop_assert_eq!(instance_to_json(&q).unwrap(), text);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn short_runs_keep_their_certificates_and_reload_exactly(
        family in 0usize..3, n in 3usize..10, m in 1usize..4, seed in any::<u64>(),
        beta in 0.2f64..5.0, alpha in 0.6f64..=1.0, warm in any::<bool>(),
    ) {
        let p = instance(family, n, m, seed);
        let mut cfg = OuterConfig::new(beta, 25, ToleranceSchedule::power_law(1.0, alpha).unwrap());
        cfg.warm_start = warm;
        let t = run_ial(&p, &cfg).unwrap();
        prop_assert_eq!(t.len(), 25);
        for (i, row) in t.rows.iter().enumerate() {
            prop_assert!(row.gap <= row.eta);
            prop_assert!(p.composite.contains(t.iterates[i + 1].view()));
            let r = p.constraint.residual(t.iterates[i + 1].view());
            let expected = &t.lambdas[i] + &(r * beta);
            let scale = norm(&t.lambdas[i]) + norm(&t.lambdas[i + 1]);
            prop_assert!(norm(&(&t.lambdas[i + 1] - &expected)) <= 1e-14 * scale);
        }
        let dir = tempfile::tempdir().unwrap();
        write_trace(dir.path(), &t, &TraceSidecar::new(&t, &cfg, "hash", None)).unwrap();
        let (back, sidecar) = read_trace(dir.path()).unwrap();
        prop_assert_eq!(back.rows, t.rows);
        prop_assert_eq!(back.lambdas, t.lambdas);
        prop_assert_eq!(sidecar.instance_hash, "hash");
    }
}
