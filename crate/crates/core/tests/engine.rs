use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use subsample_mcmc::control_variates::{
    ControlVariates, PerfectVariates, PreparedVariates, TaylorVariates, ZeroVariates,
};
use subsample_mcmc::engine::{
    find_mode_and_curvature, run_chain, ChainSetup, EngineConfig, EstimatorKind, ProposalKind, Trace,
};
use subsample_mcmc::models::{LogisticModel, Model, NormalModel, Population};
use subsample_mcmc::Error;

fn logistic(n: usize, seed: u64) -> LogisticModel {
    LogisticModel::generate(&[0.5, -1.0, 0.8], n, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
}

fn setup<'a>(model: &'a dyn Model, variates: &'a dyn ControlVariates) -> ChainSetup<'a> {
    let (mode, sigma) = find_mode_and_curvature(model, &vec![0.0; model.dim()]).unwrap();
    ChainSetup {
        model,
        variates,
        weights: None,
        theta_start: mode.clone(),
        theta_star: mode,
        sigma_star: sigma,
    }
}

fn csv_bytes(trace: &Trace) -> Vec<u8> {
    let mut out = Vec::new();
    trace.write_csv(&mut out).unwrap();
    out
}

#[test]
fn perfect_variates_reproduce_exact_chain() {
    let model = logistic(400, 1);
    let perfect = PerfectVariates::new(Population::of(&model));
    let base = EngineConfig {
        iterations: 1500,
        subsample_size: 20,
        seed: 17,
        ..EngineConfig::default()
    };
    let exact = run_chain(
        setup(&model, &perfect),
        EngineConfig {
            estimator: EstimatorKind::Exact,
            ..base.clone()
        },
    )
    .unwrap();
    let pm = run_chain(setup(&model, &perfect), base).unwrap();
    assert_eq!(exact.draws, pm.draws);
    let flags = |t: &Trace| t.records.iter().map(|r| r.accepted).collect::<Vec<_>>();
    assert_eq!(flags(&exact), flags(&pm));
    assert!(pm.acceptance_rate() > 0.05);
}

#[test]
fn current_estimate_is_never_recomputed() {
    let model = logistic(300, 2);
    let taylor = TaylorVariates::build(&model, &Population::of(&model), 0.5).unwrap();
    let config = EngineConfig {
        iterations: 800,
        subsample_size: 30,
        omega: 0.1,
        seed: 3,
        ..EngineConfig::default()
    };
    let trace = run_chain(setup(&model, &taylor), config).unwrap();
    assert_eq!(trace.max_state_evaluations, 1);
    // one estimate at the start plus one per proposal inside the prior support
    let proposals = trace.records.iter().filter(|r| r.evaluations > 0).count() as u64;
    assert_eq!(trace.estimator_calls, proposals + 1);
}

#[test]
fn traces_are_byte_deterministic() {
    let model = logistic(300, 4);
    let taylor = TaylorVariates::build(&model, &Population::of(&model), 0.5).unwrap();
    let config = EngineConfig {
        iterations: 400,
        subsample_size: 25,
        seed: 99,
        ..EngineConfig::default()
    };
    let a = run_chain(setup(&model, &taylor), config.clone()).unwrap();
    let b = run_chain(setup(&model, &taylor), config.clone()).unwrap();
    assert_eq!(csv_bytes(&a), csv_bytes(&b));
    let c = run_chain(setup(&model, &taylor), EngineConfig { seed: 100, ..config }).unwrap();
    assert_ne!(csv_bytes(&a), csv_bytes(&c));
}

#[test]
fn infrequent_refresh_freezes_subsample_between_refreshes() {
    let model = logistic(300, 5);
    let taylor = TaylorVariates::build(&model, &Population::of(&model), 0.5).unwrap();
    let config = EngineConfig {
        iterations: 3000,
        burn_in_fraction: 0.0,
        subsample_size: 25,
        omega: 0.05,
        seed: 8,
        ..EngineConfig::default()
    };
    let trace = run_chain(setup(&model, &taylor), config).unwrap();
    let estimated: Vec<_> = trace.records.iter().filter(|r| r.evaluations > 0).collect();
    let rate = estimated.iter().filter(|r| r.refreshed).count() as f64 / estimated.len() as f64;
    assert!((rate - 0.05).abs() < 0.02, "refresh rate {rate}");
}

#[test]
fn normal_mean_posterior_is_recovered() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let model = NormalModel::generate(1.5, 4.0, 2000, true, &mut rng).unwrap();
    let y = model.observations();
    let n = y.len() as f64;
    let prec = n / 4.0 + 1.0 / model.prior_variance();
    let post_mean = y.iter().sum::<f64>() / 4.0 / prec;
    let post_sd = prec.recip().sqrt();
    // Taylor variates are exact for a quadratic log-likelihood
    let taylor = TaylorVariates::build(&model, &Population::of(&model), 0.3).unwrap();
    for proposal in [ProposalKind::Rwm, ProposalKind::Imh] {
        let config = EngineConfig {
            iterations: 20_000,
            subsample_size: 10,
            proposal,
            seed: 12,
            ..EngineConfig::default()
        };
        let trace = run_chain(setup(&model, &taylor), config).unwrap();
        let draws = trace.column(0);
        let mean = draws.iter().sum::<f64>() / draws.len() as f64;
        let sd = (draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / draws.len() as f64).sqrt();
        assert!((mean - post_mean).abs() < 0.1 * post_sd, "{proposal:?}: mean {mean} vs {post_mean}");
        assert!((sd / post_sd - 1.0).abs() < 0.1, "{proposal:?}: sd {sd} vs {post_sd}");
    }
}

#[test]
fn adaptive_size_respects_variance_cap() {
    let model = logistic(2000, 7);
    let zero = ZeroVariates;
    let config = EngineConfig {
        iterations: 300,
        subsample_size: 10,
        v_max: Some(1.0),
        seed: 5,
        ..EngineConfig::default()
    };
    let trace = run_chain(setup(&model, &zero), config).unwrap();
    for r in trace.records.iter().filter(|r| r.evaluations > 0) {
        assert!(r.sigma2 <= 1.0 || r.flagged, "{r:?}");
        assert!(r.subsample_size >= 10);
    }
    assert!(trace.records.iter().any(|r| r.adaptation_rounds > 0));
}

#[test]
fn rejects_bad_configurations() {
    let model = logistic(100, 8);
    let zero = ZeroVariates;
    let bad = [
        EngineConfig { omega: 0.0, ..EngineConfig::default() },
        EngineConfig { burn_in_fraction: 1.0, ..EngineConfig::default() },
        EngineConfig { subsample_size: 1, ..EngineConfig::default() },
        EngineConfig {
            proposal: ProposalKind::Imh,
            estimator: EstimatorKind::HhPps,
            ..EngineConfig::default()
        },
        // PPS needs a weight proxy
        EngineConfig { estimator: EstimatorKind::HhPps, ..EngineConfig::default() },
    ];
    for config in bad {
        let abort = run_chain(setup(&model, &zero), config).unwrap_err();
        assert!(abort.trace.is_empty());
        assert!(matches!(abort.error, Error::InvalidConfig(_)), "{:?}", abort.error);
    }
    let abort = run_chain(
        setup(&model, &zero),
        EngineConfig { v_max: Some(-1.0), ..EngineConfig::default() },
    )
    .unwrap_err();
    assert!(matches!(abort.error, Error::InvalidTolerance(_)));
}

/// Fails once the first parameter leaves a window around its start.
struct Tripwire<'a> {
    inner: &'a dyn ControlVariates,
    limit: f64,
}

impl ControlVariates for Tripwire<'_> {
    fn name(&self) -> &str {
        "tripwire"
    }

    fn prepare<'a>(&'a self, model: &dyn Model, theta: &[f64]) -> subsample_mcmc::Result<Box<dyn PreparedVariates + 'a>> {
        if theta[0].abs() > self.limit {
            return Err(Error::NumericDomain(format!("theta {}", theta[0])));
        }
        self.inner.prepare(model, theta)
    }
}

#[test]
fn abort_keeps_completed_iterations() {
    let model = logistic(200, 9);
    let zero = ZeroVariates;
    let trip = Tripwire { inner: &zero, limit: 0.0 };
    let mut s = setup(&model, &zero);
    s.variates = &trip;
    s.theta_start = vec![0.0; 3];
    s.sigma_star = DMatrix::identity(3, 3);
    let abort = run_chain(s, EngineConfig { iterations: 100, seed: 1, ..EngineConfig::default() }).unwrap_err();
    assert!(matches!(abort.error, Error::NumericDomain(_)));
    assert!(abort.trace.len() < 100);
    assert_eq!(abort.trace.draws.len(), abort.trace.records.len());
}
