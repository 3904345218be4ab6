mod common;

use proptest::prelude::*;
use rand::Rng;
use rem_core::inference::{
    aicc, fit_map, fit_map_with, gradient, hessian, log_likelihood, Order, DEFAULT_CACHE_BYTES,
};
use rem_core::{ActorTable, Event, EventSequence, FitOptions, ModelSpec, PriorSpec, RemData, TermId};

fn fixture(seed: u64, n: usize, m: usize) -> (ActorTable, EventSequence) {
    let mut rng = common::rng(seed);
    let actors = common::random_actors(&mut rng, "g", n);
    let events = common::random_events(&mut rng, n, m);
    let events = EventSequence::new(&actors, events).unwrap();
    (actors, events)
}

#[test]
fn log_likelihood_matches_direct_softmax() {
    let (actors, events) = fixture(1, 6, 25);
    let spec = ModelSpec::new(TermId::ALL.to_vec()).unwrap();
    let mut rng = common::rng(2);
    for _ in 0..5 {
        let theta: Vec<f64> = (0..14).map(|_| rng.random_range(-2.0..2.0)).collect();
        let fast = log_likelihood(&theta, &spec, &events, &actors).unwrap();
        let slow = common::naive_log_lik(&actors, events.events(), &TermId::ALL, &theta);
        assert!((fast - slow).abs() <= 1e-10 * slow.abs(), "{fast} vs {slow}");
    }
}

#[test]
fn hessian_matches_differenced_gradient() {
    let (actors, events) = fixture(3, 5, 20);
    let spec = ModelSpec::new(TermId::ALL.to_vec()).unwrap();
    let mut rng = common::rng(4);
    let theta: Vec<f64> = (0..14).map(|_| rng.random_range(-1.0..1.0)).collect();
    let h = hessian(&theta, &spec, &events, &actors).unwrap();
    let step = 1e-5;
    for a in 0..14 {
        let mut up = theta.clone();
        let mut down = theta.clone();
        up[a] += step;
        down[a] -= step;
        let gu = gradient(&up, &spec, &events, &actors).unwrap();
        let gd = gradient(&down, &spec, &events, &actors).unwrap();
        for b in 0..14 {
            let fd = (gu[b] - gd[b]) / (2.0 * step);
            assert!((fd - h[(b, a)]).abs() <= 1e-5 * (1.0 + h[(b, a)].abs()), "({a},{b}) {fd} vs {}", h[(b, a)]);
        }
    }
    assert!((&h - h.transpose()).abs().max() < 1e-9);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn step_probabilities_sum_to_one(seed in any::<u64>(), scale in 0.1f64..20.0) {
        let (actors, events) = fixture(seed, 6, 12);
        let spec = ModelSpec::new(TermId::ALL.to_vec()).unwrap();
        let mut rng = common::rng(seed ^ 7);
        let theta: Vec<f64> = (0..14).map(|_| scale * rng.random_range(-1.0..1.0)).collect();
        let data = RemData::new(&actors, &events);
        for t in 0..events.len() {
            let p = data.step_probabilities(&theta, &spec, t).unwrap();
            let total: f64 = p.iter().sum();
            prop_assert!((total - 1.0).abs() <= 1e-12, "{}", total);
            prop_assert!(p.iter().all(|v| *v >= 0.0));
        }
    }

    #[test]
    fn gradient_matches_central_differences(seed in any::<u64>()) {
        let (actors, events) = fixture(seed, 5, 20);
        let spec = ModelSpec::new(TermId::ALL.to_vec()).unwrap();
        let mut rng = common::rng(seed ^ 11);
        let theta: Vec<f64> = (0..14).map(|_| rng.random_range(-1.0..1.0)).collect();
        let g = gradient(&theta, &spec, &events, &actors).unwrap();
        for k in 0..14 {
            let h = 1e-6;
            let mut up = theta.clone();
            let mut down = theta.clone();
            up[k] += h;
            down[k] -= h;
            let fd = (log_likelihood(&up, &spec, &events, &actors).unwrap()
                - log_likelihood(&down, &spec, &events, &actors).unwrap()) / (2.0 * h);
            prop_assert!((fd - g[k]).abs() <= 1e-5 * g[k].abs().max(1.0), "{} {} vs {}", k, fd, g[k]);
        }
    }
}

#[test]
fn null_model_aicc_is_closed_form() {
    let (actors, events) = fixture(9, 7, 40);
    let fit = fit_map(&ModelSpec::null(), &events, &actors, &PriorSpec::default(), &FitOptions::default()).unwrap();
    let m = events.len() as f64;
    let nd = (actors.len() * (actors.len() - 1)) as f64;
    assert_eq!(fit.log_lik, -m * nd.ln());
    assert_eq!(fit.aicc.unwrap(), 2.0 * m * nd.ln());
    assert_eq!(aicc(fit.log_lik, 0, events.len()).unwrap(), fit.aicc.unwrap());
}

#[test]
fn single_event_fit_is_prior_dominated() {
    let actors = ActorTable::synthetic("one", &[true, false, false]).unwrap();
    let events = EventSequence::new(&actors, vec![Event::new(0, 1)]).unwrap();
    let spec = ModelSpec::new(vec![TermId::ICR]).unwrap();
    let prior = PriorSpec::default();
    let fit = fit_map(&spec, &events, &actors, &prior, &FitOptions::default()).unwrap();
    assert!(fit.converged);

    // Dyads (0,1),(0,2),(1,0),(2,0) have one ICR endpoint; (1,2),(2,1) none.
    let objective = |b: f64| {
        let z = 4.0 * b.exp() + 2.0;
        b - z.ln() + prior.log_density(b)
    };
    let (mut lo, mut hi) = (-50.0f64, 50.0f64);
    let r = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..300 {
        let a = hi - r * (hi - lo);
        let b = lo + r * (hi - lo);
        if objective(a) < objective(b) {
            lo = a;
        } else {
            hi = b;
        }
    }
    let oracle = 0.5 * (lo + hi);
    assert!((fit.mode[0] - oracle).abs() < 1e-6, "{} vs {oracle}", fit.mode[0]);
    assert!(fit.mode[0] > 0.0);
    assert!(fit.std_dev[0] > 1.0);
}

#[test]
fn fitted_mode_is_a_local_maximum() {
    let actors = ActorTable::synthetic("lm", &[true, false, false, true, false, false, false, false]).unwrap();
    let spec = common::spec(&[TermId::NTDegRec, TermId::RRecSnd, TermId::PSABBA, TermId::ICR]);
    let events = common::simulate(&actors, &spec, &[1.0, 1.5, 2.5, 0.5], 500, 21);
    let fit = fit_map(&spec, &events, &actors, &PriorSpec::default(), &FitOptions::default()).unwrap();
    assert!(fit.converged);
    assert!(fit.gradient_max_norm <= 1e-6);
    let base = log_likelihood(&fit.mode, &spec, &events, &actors).unwrap();
    for k in 0..spec.len() {
        for delta in [-0.05, 0.05] {
            let mut theta = fit.mode.clone();
            theta[k] += delta;
            assert!(log_likelihood(&theta, &spec, &events, &actors).unwrap() < base);
        }
    }
}

#[test]
fn cached_and_streaming_fits_agree() {
    let actors = ActorTable::synthetic("c", &[true, false, false, false, true, false]).unwrap();
    let spec = common::spec(&[TermId::FrPSndSnd, TermId::PSABBA, TermId::OTPSnd]);
    let events = common::simulate(&actors, &spec, &[1.0, 2.0, 0.3], 200, 8);
    let prior = PriorSpec::default();
    let opts = FitOptions::default();
    let cached = RemData::with_cache(&actors, &events, spec.terms(), DEFAULT_CACHE_BYTES).unwrap();
    assert!(cached.is_cached());
    let a = fit_map_with(&cached, &spec, &prior, &opts).unwrap();
    let b = fit_map_with(&RemData::new(&actors, &events), &spec, &prior, &opts).unwrap();
    for (x, y) in a.mode.iter().zip(&b.mode) {
        assert!((x - y).abs() < 1e-8);
    }
    let ea = cached.evaluate(&a.mode, &spec, Order::Value).unwrap().log_lik;
    assert!((ea - a.log_lik).abs() < 1e-9);
}

#[test]
fn fit_result_round_trips_through_json() {
    let (actors, events) = fixture(12, 5, 30);
    let spec = common::spec(&[TermId::PSABBA, TermId::ICR]);
    let fit = fit_map(&spec, &events, &actors, &PriorSpec::default(), &FitOptions::default()).unwrap();
    let json = fit.to_json().unwrap();
    assert!(json.contains("\"PSAB-BA\""));
    let back: rem_core::FitResult = serde_json::from_str(&json).unwrap();
    assert_eq!(back, fit);
}

#[test]
fn too_many_terms_have_no_aicc() {
    let (actors, events) = fixture(13, 4, 3);
    let spec = common::spec(&[TermId::PSABBA, TermId::ICR]);
    let fit = fit_map(&spec, &events, &actors, &PriorSpec::default(), &FitOptions::default()).unwrap();
    assert!(fit.aicc.is_none());
    assert!(aicc(fit.log_lik, 2, 3).is_err());
}
