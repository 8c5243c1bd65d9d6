//! Sampler correctness checks: the joint-distribution test, prior recovery
//! and reproducibility.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use statrs::distribution::{ContinuousCDF, Normal};
use vasicek_core::affine::derive_params;
use vasicek_core::diagnostics::batch_means_nse;
use vasicek_core::gibbs::{run_chain, run_chains, GibbsConfig, InitialState, Priors, Sampler, State};
use vasicek_core::{Cov2, DecompositionKind, MaturityPair, VarParams};

const H: f64 = 1.0 / 12.0;
const Z0: [f64; 2] = [0.03, 0.035];

fn pair() -> MaturityPair {
    MaturityPair::new(5.0, 20.0).unwrap()
}

/// Normal(μ, σ²) restricted to x > 0 by inversion on the upper tail.
fn tn_positive(rng: &mut ChaCha8Rng, mu: f64, sd: f64) -> f64 {
    let n = Normal::new(0.0, 1.0).unwrap();
    let tail = n.cdf(mu / sd);
    let u: f64 = rng.random_range(0.0..1.0);
    (mu - sd * n.inverse_cdf(u * tail)).max(f64::MIN_POSITIVE)
}

/// Σ with Σ⁻¹ a sum of ν outer products of N(0, Ψ⁻¹) vectors.
fn inverse_wishart(rng: &mut ChaCha8Rng, psi: &Cov2, nu: usize) -> Cov2 {
    let l = psi.inverse().unwrap().cholesky_psd().unwrap();
    let mut p = [0.0; 3];
    for _ in 0..nu {
        let e: [f64; 2] = [rng.sample(StandardNormal), rng.sample(StandardNormal)];
        let x = [l[(0, 0)] * e[0], l[(1, 0)] * e[0] + l[(1, 1)] * e[1]];
        p[0] += x[0] * x[0];
        p[1] += x[1] * x[0];
        p[2] += x[1] * x[1];
    }
    Cov2::new(p[0], p[1], p[2]).inverse().unwrap()
}

fn admissible(s: &State) -> bool {
    let v = VarParams { a: s.a, m: s.m, sigma: s.sigma };
    s.m.iter().all(|&x| x >= 0.0)
        && s.a > 0.0
        && s.a * H < 1.0
        && matches!(derive_params(&v, pair(), DecompositionKind::Noise, H), Ok(d) if d.mu > 0.0 && d.mu_q > 0.0)
}

/// Draws from the prior restricted to the admissible set by rejection.
fn prior_draw(rng: &mut ChaCha8Rng, p: &Priors) -> State {
    loop {
        let s = State {
            a: tn_positive(rng, p.mu_a, p.tau_a),
            m: [tn_positive(rng, p.mu_m[0], p.omega_m[0].sqrt()), tn_positive(rng, p.mu_m[1], p.omega_m[1].sqrt())],
            sigma: inverse_wishart(rng, &p.psi, p.nu as usize),
        };
        if admissible(&s) {
            return s;
        }
    }
}

fn simulate(rng: &mut ChaCha8Rng, s: &State, n: usize) -> Vec<[f64; 2]> {
    let l = s.sigma.scale(H).cholesky_psd().unwrap();
    let mut z = Z0;
    let mut rows = vec![z];
    for _ in 0..n {
        let e: [f64; 2] = [rng.sample(StandardNormal), rng.sample(StandardNormal)];
        z = [
            z[0] - s.a * H * (z[0] - s.m[0]) + l[(0, 0)] * e[0],
            z[1] - s.a * H * (z[1] - s.m[1]) + l[(1, 0)] * e[0] + l[(1, 1)] * e[1],
        ];
        rows.push(z);
    }
    rows
}

/// Bounded or light-tailed functions of the state.
fn stats(s: &State) -> [f64; 6] {
    [s.a, s.m[0], s.m[1], s.sigma.s11.ln(), s.sigma.s22.ln(), s.sigma.s21 / (s.sigma.s11 * s.sigma.s22).sqrt()]
}

/// Marginal-conditional draws of the prior are compared with the
/// successive-conditional chain that alternates sweeps with fresh data.
#[test]
fn joint_distribution_test_at_small_n() {
    let priors = Priors::default();
    let n_obs = 8;
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let m = 20_000;
    let mc: Vec<[f64; 6]> = (0..m).map(|_| stats(&prior_draw(&mut rng, &priors))).collect();

    let start = prior_draw(&mut rng, &priors);
    let mut cfg = GibbsConfig::new(pair(), DecompositionKind::Noise, 7);
    cfg.initial = InitialState { a: start.a, sigma: start.sigma, m: Some(start.m) };
    let rows = simulate(&mut rng, &start, n_obs);
    let mut sampler = Sampler::new(&rows, H, priors, cfg).unwrap();
    assert!(sampler.derived().is_some());
    let sweeps = 200_000;
    let mut sc = Vec::with_capacity(sweeps);
    for it in 1..=sweeps as u64 {
        sampler.sweep(it).unwrap();
        let s = sampler.state();
        sc.push(stats(&s));
        let rows = simulate(&mut rng, &s, n_obs);
        sampler.set_data(&rows);
    }

    for k in 0..6 {
        let a: Vec<f64> = mc.iter().map(|s| s[k]).collect();
        let b: Vec<f64> = sc.iter().map(|s| s[k]).collect();
        let ma = a.iter().sum::<f64>() / a.len() as f64;
        let mb = b.iter().sum::<f64>() / b.len() as f64;
        let va = a.iter().map(|x| (x - ma).powi(2)).sum::<f64>() / (a.len() - 1) as f64;
        let se = (va / a.len() as f64 + batch_means_nse(&b).powi(2)).sqrt();
        let z = (ma - mb) / se;
        assert!(z.abs() < 4.0, "statistic {k}: prior {ma} vs chain {mb}, z = {z}");
    }
}

#[test]
fn empty_data_recovers_truncated_prior_on_a() {
    let mut cfg = GibbsConfig::new(pair(), DecompositionKind::Noise, 3);
    cfg.iterations = 100_000;
    cfg.burn_in = 1_000;
    cfg.thin = 1;
    let chain = run_chain(&[], H, &Priors::default(), &cfg).unwrap();
    let a: Vec<f64> = chain.draws.iter().map(|d| d.var.a).collect();
    let n = a.len() as f64;
    let mean = a.iter().sum::<f64>() / n;
    let sd = (a.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
    // half-normal with scale 0.2
    let pi = std::f64::consts::PI;
    let (m0, s0) = (0.2 * (2.0 / pi).sqrt(), 0.2 * (1.0 - 2.0 / pi).sqrt());
    let se = batch_means_nse(&a);
    assert!((mean - m0).abs() < 4.0 * se, "mean {mean} vs {m0} (se {se})");
    assert!((sd - s0).abs() < 0.005, "sd {sd} vs {s0}");
}

fn small_panel() -> Vec<[f64; 2]> {
    let truth = State { a: 0.2, m: [0.03, 0.035], sigma: Cov2::new(4e-5, 3.4e-5, 3.2e-5) };
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    simulate(&mut rng, &truth, 139)
}

#[test]
fn chains_are_byte_identical_under_a_fixed_seed() {
    let rows = small_panel();
    let mut cfg = GibbsConfig::new(pair(), DecompositionKind::Noise, 11);
    cfg.iterations = 6_000;
    cfg.burn_in = 1_000;
    cfg.thin = 10;
    let write = |cfg: &GibbsConfig| {
        let chain = run_chain(&rows, H, &Priors::default(), cfg).unwrap();
        let mut buf = Vec::new();
        chain.write_csv(&mut buf).unwrap();
        buf
    };
    let first = write(&cfg);
    assert_eq!(first, write(&cfg));
    assert_ne!(first, write(&GibbsConfig { seed: 12, ..cfg }));

    let parallel = run_chains(&rows, H, &Priors::default(), &cfg, &[11, 12]);
    let mut buf = Vec::new();
    parallel[0].as_ref().unwrap().write_csv(&mut buf).unwrap();
    assert_eq!(first, buf);
}

#[test]
fn stored_draws_follow_burn_in_and_thinning() {
    let rows = small_panel();
    let mut cfg = GibbsConfig::new(pair(), DecompositionKind::Correlation, 5);
    cfg.iterations = 2_500;
    cfg.burn_in = 500;
    cfg.thin = 20;
    let chain = run_chain(&rows, H, &Priors::default(), &cfg).unwrap();
    assert_eq!(chain.len() as u64, cfg.stored_draws());
    assert_eq!(chain.draws[0].iter, 520);
    assert_eq!(chain.draws.last().unwrap().iter, 2_500);
    for d in &chain.draws {
        let s = State { a: d.var.a, m: d.var.m, sigma: d.var.sigma };
        let v = VarParams { a: s.a, m: s.m, sigma: s.sigma };
        let again = derive_params(&v, pair(), DecompositionKind::Correlation, H).unwrap();
        assert!(again.mu > 0.0 && again.mu_q > 0.0 && s.m.iter().all(|&x| x >= 0.0));
        assert_eq!(again, d.derived);
    }
    assert!(chain.counters.sigma.accepted as usize >= chain.len());
}

#[test]
fn impossible_constraints_stall_with_diagnostics() {
    // data pinned far below zero drive m against its bound, and a σ block
    // that cannot be made feasible never accepts
    let rows: Vec<[f64; 2]> = (0..60).map(|i| [-0.5 - 1e-3 * i as f64, -0.2 + 1e-3 * i as f64]).collect();
    let mut cfg = GibbsConfig::new(pair(), DecompositionKind::Noise, 1);
    cfg.iterations = 50;
    cfg.burn_in = 10;
    cfg.stall_window = 1_000;
    cfg.stall_rate = 1e-4;
    let err = run_chain(&rows, H, &Priors::default(), &cfg).unwrap_err().to_string();
    assert!(err.contains("consecutive") || err.contains("inadmissible"), "{err}");
}
