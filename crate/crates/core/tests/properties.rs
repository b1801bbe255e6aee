use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use hybrid_reduce::balance::{balance, balance_with_factor, error_bound, truncate, ReductionOrders};
use hybrid_reduce::experiment::{
    at_rest, random_aligned_input, random_model, random_schedule, RandomModelConfig,
};
use hybrid_reduce::gramian::{
    check_gramians, gramians_from_stability, observability_quadratic_forms, reachability_quadratic_forms,
    solve_gramians, GramianKind, SolveOptions,
};
use hybrid_reduce::linalg::{cholesky, sym_sqrt};
use hybrid_reduce::simulate::{simulate, simulate_exact, InputSignal, SimConfig};
use hybrid_reduce::{LinearHybridSystem, ModeId};

fn cfg() -> SimConfig {
    SimConfig {
        max_step: 5e-3,
        ..SimConfig::default()
    }
}

fn solved(seed: u64) -> Option<(LinearHybridSystem, hybrid_reduce::GramianFamily, hybrid_reduce::GramianFamily)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let model = random_model(&mut rng, &RandomModelConfig::default());
    let opts = SolveOptions::default();
    let obs = solve_gramians(&model, GramianKind::Observability, 1e-4, &opts).ok()?;
    let reach = solve_gramians(&model, GramianKind::Reachability, 1e-4, &opts).ok()?;
    Some((model, obs, reach))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    // The input-output map is linear in (x0, u).
    #[test]
    fn simulation_is_linear(seed in any::<u64>(), alpha in -3.0f64..3.0, beta in -3.0f64..3.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let model = random_model(&mut rng, &RandomModelConfig::default());
        let w = random_schedule(&mut rng, &model, 1.5, 0.6);
        let u1 = random_aligned_input(&mut rng, model.input_dim(), &w, 1.0);
        let u2 = random_aligned_input(&mut rng, model.input_dim(), &w, 1.0);
        let n0 = model.state_dim(model.initial.mode);
        let x1 = DVector::from_fn(n0, |_, _| rng.gen_range(-1.0..1.0));
        let x2 = DVector::from_fn(n0, |_, _| rng.gen_range(-1.0..1.0));

        let run = |x0: &DVector<f64>, u: &InputSignal| {
            let mut m = model.clone();
            m.initial.x0 = x0.clone();
            simulate_exact(&m, u, &w, &cfg()).unwrap()
        };
        let (InputSignal::PiecewiseConstant { breaks, values: v1 }, InputSignal::PiecewiseConstant { values: v2, .. }) = (&u1, &u2) else {
            unreachable!()
        };
        let mixed = InputSignal::piecewise_constant(
            breaks.clone(),
            v1.iter().zip(v2).map(|(a, b)| a * alpha + b * beta).collect(),
        ).unwrap();
        let a = run(&x1, &u1);
        let b = run(&x2, &u2);
        let c = run(&(&x1 * alpha + &x2 * beta), &mixed);
        for ((sa, sb), sc) in a.segments.iter().zip(&b.segments).zip(&c.segments) {
            for ((ya, yb), yc) in sa.outputs.iter().zip(&sb.outputs).zip(&sc.outputs) {
                let expect = ya * alpha + yb * beta;
                prop_assert!((yc - &expect).norm() <= 1e-9 * (1.0 + expect.norm()));
            }
        }
    }

    // Balancing is a change of coordinates: outputs are unchanged.
    #[test]
    fn balancing_preserves_input_output_map(seed in any::<u64>()) {
        let Some((model, obs, reach)) = solved(seed) else { return Ok(()) };
        let Ok(bal) = balance(&model, &reach, &obs) else { return Ok(()) };
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        let w = random_schedule(&mut rng, &model, 2.0, 0.8);
        let u = random_aligned_input(&mut rng, model.input_dim(), &w, 1.0);
        let a = simulate(&at_rest(&model), &u, &w, &cfg()).unwrap();
        let b = simulate(&at_rest(&bal.model), &u, &w, &cfg()).unwrap();
        prop_assert!(a.same_discrete_outputs(&b));
        prop_assert!(a.max_output_deviation(&b) <= 1e-6);
    }

    // Λ does not depend on which square factor of 𝒫 is used.
    #[test]
    fn sigma_is_factor_independent(seed in any::<u64>()) {
        let Some((model, obs, reach)) = solved(seed) else { return Ok(()) };
        let (Ok(a), Ok(b)) = (
            balance_with_factor(&model, &reach, &obs, cholesky),
            balance_with_factor(&model, &reach, &obs, sym_sqrt),
        ) else { return Ok(()) };
        for (sa, sb) in a.sigma.iter().zip(&b.sigma) {
            prop_assert!((sa - sb).amax() <= 1e-8 * sa.amax());
        }
    }

    // Keeping more states never increases the bound.
    #[test]
    fn bound_is_monotone(seed in any::<u64>()) {
        let Some((model, obs, reach)) = solved(seed) else { return Ok(()) };
        let Ok(bal) = balance(&model, &reach, &obs) else { return Ok(()) };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut r: Vec<usize> = model.modes().map(|_| 1).collect();
        let mut last = error_bound(&bal, &ReductionOrders::new(&model, r.clone()).unwrap());
        loop {
            let growable: Vec<usize> = model.modes().filter(|q| r[q.0] < model.state_dim(*q)).map(|q| q.0).collect();
            if growable.is_empty() {
                break;
            }
            r[growable[rng.gen_range(0..growable.len())]] += 1;
            let b = error_bound(&bal, &ReductionOrders::new(&model, r.clone()).unwrap());
            prop_assert!(b <= last + 1e-12);
            last = b;
        }
        prop_assert_eq!(last, 0.0);
    }

    // The pointwise quadratic forms behind the Gramian inequalities are
    // non-positive for every state and input.
    #[test]
    fn quadratic_forms_are_nonpositive(seed in any::<u64>()) {
        let Some((model, obs, reach)) = solved(seed) else { return Ok(()) };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for r in model.transitions() {
            let sys = model.subsystem(r.source);
            let n = sys.state_dim();
            for _ in 0..5 {
                let x = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
                let u = DVector::from_fn(sys.input_dim(), |_, _| rng.gen_range(-1.0..1.0));
                let (flow, jump) = observability_quadratic_forms(
                    &sys.a, &sys.c, obs.get(r.source), &r.matrix, obs.get(r.target), &x,
                );
                prop_assert!(flow <= 0.0 && jump <= 1e-12);
                let (flow, jump) = reachability_quadratic_forms(
                    &sys.a, &sys.b, reach.get(r.source), &r.matrix, reach.get(r.target), &x, &u,
                ).unwrap();
                prop_assert!(flow <= 1e-12 && jump <= 1e-9);
            }
        }
    }

    // A stability certificate converts into valid Gramians of both kinds.
    #[test]
    fn stability_certificate_yields_gramians(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let model = random_model(&mut rng, &RandomModelConfig::default());
        let Ok(stab) = solve_gramians(&model, GramianKind::Stability, 1e-4, &SolveOptions::default()) else {
            return Ok(());
        };
        let (obs, reach) = gramians_from_stability(&model, &stab, 0.05).unwrap();
        prop_assert!(check_gramians(&model, &obs).unwrap().is_ok());
        prop_assert!(check_gramians(&model, &reach).unwrap().is_ok());
    }
}

#[test]
fn full_order_truncation_is_the_balanced_model() {
    let (model, obs, reach) = (0..50).find_map(solved).expect("some seed solves");
    let bal = balance(&model, &reach, &obs).unwrap();
    let red = truncate(&bal, &ReductionOrders::full(&model)).unwrap();
    assert_eq!(red.model.subsystems, bal.model.subsystems);
    assert_eq!(red.model.resets, bal.model.resets);
    assert_eq!(red.bound, 0.0);
    assert!(red.is_verified());
    for q in model.modes() {
        assert_eq!(red.lambda_hat(q), bal.lambda(q));
    }
}

#[test]
fn balanced_gramians_are_diagonal_sigma() {
    let (model, obs, reach) = (0..50).find_map(solved).expect("some seed solves");
    let bal = balance(&model, &reach, &obs).unwrap();
    for q in model.modes() {
        let t = &bal.transforms[q.0];
        let lam = bal.lambda(q);
        let back_q = t.s.transpose() * &lam * &t.s;
        let back_p = &t.s_inv * &lam * t.s_inv.transpose();
        assert!((back_q - obs.get(q)).norm() <= 1e-7 * obs.get(q).norm());
        assert!((back_p - reach.get(q)).norm() <= 1e-7 * reach.get(q).norm());
        assert!((&t.s * &t.s_inv - DMatrix::identity(t.s.nrows(), t.s.nrows())).amax() < 1e-8);
    }
    let s = bal.sigma(ModeId(0));
    assert!(s.iter().zip(s.iter().skip(1)).all(|(a, b)| a >= b));
}
