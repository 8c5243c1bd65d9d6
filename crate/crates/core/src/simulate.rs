//! Synthetic panels and a Monte Carlo bond-pricing oracle.

use chrono::{Duration, Months, NaiveDate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::affine::{discretization_factor, var_params_from, DerivedParams, VarParams};
use crate::curves::{MaturityPair, PairView, ZeroCurvePanel};
use crate::{Error, Result};

/// Parameters to simulate from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SimParams {
    /// VAR parameters used as given. `Σ` may be positive semi-definite.
    Var(VarParams),
    /// Structural parameters, mapped to VAR form for the chosen pair.
    Derived(DerivedParams),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimSpec {
    pub params: SimParams,
    /// Number of transitions; the panel has `steps + 1` rows.
    pub steps: usize,
    pub h: f64,
    pub seed: u64,
    /// Starting rates; defaults to the long-run means.
    pub initial: Option<[f64; 2]>,
}

impl SimSpec {
    pub fn var_params(&self, pair: MaturityPair) -> Result<VarParams> {
        match self.params {
            SimParams::Var(v) => Ok(v),
            SimParams::Derived(d) => var_params_from(&d, pair, self.h),
        }
    }
}

/// Simulates the two-maturity VAR(1) path as rows `[z(τ₁), z(τ₂)]`.
pub fn simulate_pair(spec: &SimSpec, pair: MaturityPair) -> Result<PairView> {
    if spec.steps < 1 {
        return Err(Error::invalid("simulation needs at least one step"));
    }
    if !(spec.h > 0.0) || !spec.h.is_finite() {
        return Err(Error::invalid(format!("step must be positive, got {}", spec.h)));
    }
    let v = spec.var_params(pair)?;
    let ah = v.a * spec.h;
    if !(v.a >= 0.0) || !(ah < 1.0) {
        return Err(Error::domain(format!("a·h = {ah} must lie in [0, 1)")));
    }
    let chol = v.sigma.scale(spec.h).cholesky_psd()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut z = spec.initial.unwrap_or(v.m);
    let mut rows = Vec::with_capacity(spec.steps + 1);
    rows.push(z);
    for _ in 0..spec.steps {
        let e0: f64 = rng.sample(StandardNormal);
        let e1: f64 = rng.sample(StandardNormal);
        let n0 = chol[(0, 0)] * e0;
        let n1 = chol[(1, 0)] * e0 + chol[(1, 1)] * e1;
        z = [z[0] - ah * (z[0] - v.m[0]) + n0, z[1] - ah * (z[1] - v.m[1]) + n1];
        rows.push(z);
    }
    Ok(PairView::from_rows(pair, spec.h, rows))
}

/// Simulates a dated two-column panel. Monthly steps start on 2002-01-01;
/// other steps are laid out in whole days.
pub fn simulate_panel(spec: &SimSpec, pair: MaturityPair) -> Result<ZeroCurvePanel> {
    let view = simulate_pair(spec, pair)?;
    let start = NaiveDate::from_ymd_opt(2002, 1, 1).expect("valid date");
    let months = spec.h * 12.0;
    let dates: Vec<NaiveDate> = if (months - months.round()).abs() < 1e-9 && months.round() >= 1.0 {
        let k = months.round() as u32;
        (0..view.rows.len())
            .map(|i| start.checked_add_months(Months::new(k * i as u32)))
            .collect::<Option<_>>()
            .ok_or_else(|| Error::invalid("simulated dates exceed the calendar range"))?
    } else {
        (0..view.rows.len()).map(|i| start + Duration::days((i as f64 * spec.h * 365.25).round() as i64)).collect()
    };
    let rates = view.rows.iter().map(|r| r.to_vec()).collect();
    ZeroCurvePanel::new(dates, pair.as_array().to_vec(), rates)
}

/// Monte Carlo estimate of a zero rate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McYield {
    pub value: f64,
    /// Delta-method standard error of `value`.
    pub se: f64,
    pub paths: usize,
}

pub const MIN_PATHS: usize = 10_000;
pub const MIN_STEPS_PER_YEAR: usize = 12;

/// Prices `E_Q[exp(−∫₀^τ r ds)]` by simulating the risk-neutral short rate
/// with exact OU transitions and a trapezoidal integral, then reports
/// `−ln(price)/τ`.
///
/// Path `i` draws from its own ChaCha stream, so results for the first `n`
/// paths do not depend on the total path count.
#[allow(clippy::too_many_arguments)]
pub fn mc_bond_yield(
    r0: f64,
    tau: f64,
    kappa_q: f64,
    mu_q: f64,
    sigma2: f64,
    paths: usize,
    steps_per_year: usize,
    seed: u64,
) -> Result<McYield> {
    if !(tau > 0.0) || !(kappa_q >= 0.0) || !(sigma2 >= 0.0) {
        return Err(Error::domain("need τ > 0, κ̃ ≥ 0, σ² ≥ 0"));
    }
    if paths < MIN_PATHS || steps_per_year < MIN_STEPS_PER_YEAR {
        return Err(Error::invalid(format!(
            "need at least {MIN_PATHS} paths and {MIN_STEPS_PER_YEAR} steps per year, got {paths} and {steps_per_year}"
        )));
    }
    let n_steps = ((tau * steps_per_year as f64).ceil() as usize).max(1);
    let dt = tau / n_steps as f64;
    let decay = (-kappa_q * dt).exp();
    let step_sd = (sigma2 * dt * discretization_factor(kappa_q, dt)).sqrt();

    let discounts: Vec<f64> = (0..paths)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let mut r = r0;
            let mut integral = 0.5 * r0;
            for k in 0..n_steps {
                let e: f64 = rng.sample(StandardNormal);
                r = mu_q + (r - mu_q) * decay + step_sd * e;
                integral += if k + 1 == n_steps { 0.5 * r } else { r };
            }
            (-integral * dt).exp()
        })
        .collect();

    let n = discounts.len() as f64;
    let mean = discounts.iter().sum::<f64>() / n;
    let var = discounts.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok(McYield { value: -mean.ln() / tau, se: var.sqrt() / (n.sqrt() * mean * tau), paths })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::affine::zero_rate_from_short;
    use crate::linalg::Cov2;

    fn pair() -> MaturityPair {
        MaturityPair::new(5.0, 20.0).unwrap()
    }

    #[test]
    fn noiseless_path_follows_conditional_mean() {
        let v = VarParams { a: 0.3, m: [0.02, 0.03], sigma: Cov2::new(0.0, 0.0, 0.0) };
        let h = 1.0 / 12.0;
        let spec = SimSpec { params: SimParams::Var(v), steps: 120, h, seed: 1, initial: Some([0.05, 0.01]) };
        let path = simulate_pair(&spec, pair()).unwrap();
        for (t, row) in path.rows.iter().enumerate() {
            let w = (1.0 - v.a * h).powi(t as i32);
            assert!((row[0] - (0.02 + (0.05 - 0.02) * w)).abs() < 1e-12);
            assert!((row[1] - (0.03 + (0.01 - 0.03) * w)).abs() < 1e-12);
        }
    }

    #[test]
    fn monthly_panel_dates() {
        let v = VarParams::new(0.2, [0.02, 0.03], Cov2::new(4e-5, 3e-5, 3.5e-5)).unwrap();
        let spec = SimSpec { params: SimParams::Var(v), steps: 140, h: 1.0 / 12.0, seed: 7, initial: None };
        let p = simulate_panel(&spec, pair()).unwrap();
        assert_eq!(p.len(), 141);
        assert_eq!(p.dates()[140], NaiveDate::from_ymd_opt(2013, 9, 1).unwrap());
        assert_eq!(p.step(), 1.0 / 12.0);
        let again = simulate_panel(&spec, pair()).unwrap();
        assert_eq!(p, again);
    }

    #[test]
    fn deterministic_pricing_matches_closed_form() {
        let y = mc_bond_yield(0.03, 10.0, 0.05, 0.04, 0.0, MIN_PATHS, 52, 3).unwrap();
        let z = zero_rate_from_short(0.03, 10.0, 0.05, 0.04, 0.0).unwrap();
        assert!((y.value - z).abs() < 1e-8, "{} vs {z}", y.value);
        assert!(y.se < 1e-15);
    }

    #[test]
    fn path_streams_do_not_depend_on_count() {
        let a = mc_bond_yield(0.03, 2.0, 0.1, 0.04, 1e-4, MIN_PATHS, 12, 11).unwrap();
        let b = mc_bond_yield(0.03, 2.0, 0.1, 0.04, 1e-4, MIN_PATHS, 12, 11).unwrap();
        assert_eq!(a, b);
        assert!(mc_bond_yield(0.03, 2.0, 0.1, 0.04, 1e-4, 100, 12, 11).is_err());
    }
}
