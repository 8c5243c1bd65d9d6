//! Conditional maximum likelihood for the two-maturity VAR(1).
//!
//! The first observation is treated as given. For fixed `Σ` the `(a, m)`
//! problem is a scalar-slope regression with a free intercept vector, and
//! for fixed `(a, m)` the optimal `Σ` is the residual covariance, so the
//! joint optimum is found by alternating the two closed forms.

use nalgebra::Matrix2;

use crate::affine::{derive_params, DecompositionKind, DerivedParams, VarParams};
use crate::curves::{MaturityPair, PairView};
use crate::linalg::{cross_product, trace_sym_mat, vech_kron_cov, Cov2};
use crate::{Error, Result};

const MAX_ITER: usize = 500;
const A_TOL: f64 = 1e-12;
pub const MIN_TRANSITIONS: usize = 10;

/// Block-diagonal asymptotic covariance of `(a, m, vech Σ)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AsymptoticCov {
    pub var_a: f64,
    pub cov_m: Cov2,
    pub cov_vech: [[f64; 3]; 3],
}

impl AsymptoticCov {
    /// Full 6×6 matrix ordered as [`VarParams::to_vec`]; cross blocks are zero.
    pub fn full(&self) -> [[f64; 6]; 6] {
        let mut t = [[0.0; 6]; 6];
        t[0][0] = self.var_a;
        t[1][1] = self.cov_m.s11;
        t[1][2] = self.cov_m.s21;
        t[2][1] = self.cov_m.s21;
        t[2][2] = self.cov_m.s22;
        for i in 0..3 {
            for j in 0..3 {
                t[3 + i][3 + j] = self.cov_vech[i][j];
            }
        }
        t
    }

    /// Standard errors of `(a, m₁, m₂, σ₁₁, σ₂₁, σ₂₂)`.
    pub fn std_errors(&self) -> [f64; 6] {
        let t = self.full();
        std::array::from_fn(|i| t[i][i].sqrt())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MleFit {
    /// `Σ` may be singular when `degenerate` is set.
    pub estimate: VarParams,
    pub h: f64,
    pub transitions: usize,
    pub iterations: usize,
    /// Residuals vanish, so `Σ` is zero and no likelihood exists.
    pub degenerate: bool,
    /// `|a − a(m, Σ)|` at the returned estimate.
    pub fixed_point_residual: f64,
    pub log_likelihood: Option<f64>,
    pub cov: Option<AsymptoticCov>,
    pub derived: Option<DerivedParams>,
    /// Delta-method standard errors in [`DerivedParams::report_values`] order.
    pub derived_se: Option<[f64; 9]>,
    /// Why `derived` or `derived_se` is missing.
    pub derived_note: Option<String>,
}

/// Demeaned sufficient statistics of the regression `ΔZ_t = β Z_{t−1} + c`.
struct Moments {
    n: usize,
    mean_lag: [f64; 2],
    mean_diff: [f64; 2],
    /// Σ D D′ with D the demeaned lagged levels.
    s_ll: Matrix2<f64>,
    /// Σ ΔD D′.
    s_dl: Matrix2<f64>,
    /// Σ ΔD ΔD′.
    s_dd: Matrix2<f64>,
}

impl Moments {
    fn new(rows: &[[f64; 2]]) -> Self {
        let n = rows.len() - 1;
        let nf = n as f64;
        let mut mean_lag = [0.0; 2];
        let mut mean_diff = [0.0; 2];
        for w in rows.windows(2) {
            for k in 0..2 {
                mean_lag[k] += w[0][k] / nf;
                mean_diff[k] += (w[1][k] - w[0][k]) / nf;
            }
        }
        let centred = rows.windows(2).map(|w| {
            let d = [w[0][0] - mean_lag[0], w[0][1] - mean_lag[1]];
            let dd = [w[1][0] - w[0][0] - mean_diff[0], w[1][1] - w[0][1] - mean_diff[1]];
            (d, dd)
        });
        let s_ll = cross_product(centred.clone().map(|(d, _)| (d, d)));
        let s_dl = cross_product(centred.clone().map(|(d, dd)| (dd, d)));
        let s_dd = cross_product(centred.map(|(_, dd)| (dd, dd)));
        Self { n, mean_lag, mean_diff, s_ll, s_dl, s_dd }
    }

    /// GLS slope for weight `W` (the inverse innovation covariance).
    fn beta(&self, w: &Cov2) -> Result<f64> {
        let den = trace_sym_mat(w, &self.s_ll);
        let scale = self.s_ll.trace().abs();
        if !(den > 0.0) || scale <= f64::MIN_POSITIVE || den.abs() <= 1e-14 * scale * w.s11.abs().max(w.s22.abs()) {
            return Err(Error::Singular("lagged rates have no variation; a is not identified".into()));
        }
        Ok(trace_sym_mat(w, &self.s_dl) / den)
    }

    fn a_m(&self, beta: f64, h: f64) -> Result<(f64, [f64; 2])> {
        let a = -beta / h;
        if a == 0.0 {
            return Err(Error::Singular("zero mean reversion leaves m unidentified".into()));
        }
        let m = [self.mean_lag[0] + self.mean_diff[0] / (a * h), self.mean_lag[1] + self.mean_diff[1] / (a * h)];
        Ok((a, m))
    }

    /// Residual covariance `R′R/(hN)` at the profiled intercept.
    fn sigma(&self, beta: f64, h: f64) -> Cov2 {
        let rr = self.s_dd - (self.s_dl + self.s_dl.transpose()) * beta + self.s_ll * (beta * beta);
        Cov2::from_matrix(&(rr / (h * self.n as f64)))
    }
}

/// Columns `X_t = m − Z_{t−1}` and differences `ΔZ_t` over all transitions.
fn lag_and_diff(rows: &[[f64; 2]], m: [f64; 2]) -> impl Iterator<Item = ([f64; 2], [f64; 2])> + '_ {
    rows.windows(2).map(move |w| ([m[0] - w[0][0], m[1] - w[0][1]], [w[1][0] - w[0][0], w[1][1] - w[0][1]]))
}

/// Likelihood-maximizing `a` given `m` and `Σ`:
/// `tr(Σ⁻¹ ΔZ′X) / (h tr(Σ⁻¹ X′X))` with `X = ιm′ − Z₋`.
pub fn a_given(rows: &[[f64; 2]], h: f64, m: [f64; 2], sigma: &Cov2) -> Result<f64> {
    let w = sigma.inverse()?;
    let xx = cross_product(lag_and_diff(rows, m).map(|(x, _)| (x, x)));
    let dx = cross_product(lag_and_diff(rows, m).map(|(x, d)| (d, x)));
    let den = h * trace_sym_mat(&w, &xx);
    if !(den > 0.0) {
        return Err(Error::Singular("X′X vanishes; a is not identified".into()));
    }
    Ok(trace_sym_mat(&w, &dx) / den)
}

/// Conditional Gaussian log-likelihood of the transitions.
pub fn log_likelihood(rows: &[[f64; 2]], h: f64, v: &VarParams) -> Result<f64> {
    let hs = v.sigma.scale(h);
    let w = hs.inverse()?;
    let det = hs.det();
    if !(det > 0.0) {
        return Err(Error::Singular("hΣ is not positive definite".into()));
    }
    let n = (rows.len() - 1) as f64;
    let ah = v.a * h;
    let mut quad = 0.0;
    for win in rows.windows(2) {
        let r = [win[1][0] - win[0][0] + ah * (win[0][0] - v.m[0]), win[1][1] - win[0][1] + ah * (win[0][1] - v.m[1])];
        let wr = w.mul_vec(r);
        quad += r[0] * wr[0] + r[1] * wr[1];
    }
    Ok(-n * (2.0 * std::f64::consts::PI).ln() - 0.5 * n * det.ln() - 0.5 * quad)
}

/// Block asymptotic covariances at an estimate.
pub fn asymptotic_cov(rows: &[[f64; 2]], h: f64, v: &VarParams) -> Result<AsymptoticCov> {
    let w = v.sigma.inverse()?;
    let n = (rows.len() - 1) as f64;
    let xx = cross_product(lag_and_diff(rows, v.m).map(|(x, _)| (x, x)));
    let info_a = h * trace_sym_mat(&w, &xx);
    if !(info_a > 0.0) {
        return Err(Error::Singular("zero information about a".into()));
    }
    let k = vech_kron_cov(&v.sigma);
    Ok(AsymptoticCov {
        var_a: 1.0 / info_a,
        cov_m: v.sigma.scale(1.0 / (n * v.a * v.a * h)),
        cov_vech: k.map(|row| row.map(|x| x / n)),
    })
}

/// Central finite-difference Jacobian of `f` at `x`.
pub fn jacobian<const N: usize, const M: usize>(
    f: impl Fn(&[f64; N]) -> Result<[f64; M]>,
    x: &[f64; N],
    rel_step: f64,
) -> Result<[[f64; N]; M]> {
    let mut jac = [[0.0; N]; M];
    for i in 0..N {
        let step = if x[i] == 0.0 { 1e-9 } else { rel_step * x[i].abs() };
        let mut up = *x;
        let mut dn = *x;
        up[i] += step;
        dn[i] -= step;
        let (fu, fd) = (f(&up)?, f(&dn)?);
        for k in 0..M {
            jac[k][i] = (fu[k] - fd[k]) / (2.0 * step);
        }
    }
    Ok(jac)
}

/// `√(J T J′)` on the diagonal.
pub fn delta_se<const N: usize, const M: usize>(jac: &[[f64; N]; M], cov: &[[f64; N]; N]) -> [f64; M] {
    std::array::from_fn(|k| {
        let mut acc = 0.0;
        for i in 0..N {
            for j in 0..N {
                acc += jac[k][i] * cov[i][j] * jac[k][j];
            }
        }
        acc.max(0.0).sqrt()
    })
}

/// Relative step of the delta-method differences. Entries of `Σ` are of
/// order 1e-5, so the step is taken relative to each coordinate.
pub const DELTA_REL_STEP: f64 = 1e-6;

/// Delta-method standard errors of the derived parameters.
pub fn delta_method(
    v: &VarParams,
    cov: &AsymptoticCov,
    pair: MaturityPair,
    kind: DecompositionKind,
    h: f64,
) -> Result<[f64; 9]> {
    let centre = derive_params(v, pair, kind, h)?;
    if !(centre.kappa_q > 0.0) {
        return Err(Error::Boundary("κ̃ at its lower bound; delta method unavailable".into()));
    }
    let f = |x: &[f64; 6]| derive_params(&VarParams::from_vec(*x), pair, kind, h).map(|d| d.report_values());
    let jac = jacobian(f, &v.to_vec(), DELTA_REL_STEP)?;
    Ok(delta_se(&jac, &cov.full()))
}

/// Fits `(a, m, Σ)` by conditional maximum likelihood.
pub fn fit_cmle(view: &PairView, kind: DecompositionKind) -> Result<MleFit> {
    let rows = &view.rows;
    let h = view.step;
    if rows.len() < MIN_TRANSITIONS + 1 {
        return Err(Error::invalid(format!(
            "need at least {MIN_TRANSITIONS} transitions, got {}",
            rows.len().saturating_sub(1)
        )));
    }
    if rows.iter().flatten().any(|x| !x.is_finite()) {
        return Err(Error::invalid("rates must be finite"));
    }
    if !(h > 0.0) {
        return Err(Error::invalid("step must be positive"));
    }
    let mom = Moments::new(rows);
    let mut beta = mom.beta(&Cov2::new(1.0, 0.0, 1.0))?;
    let mut sigma = mom.sigma(beta, h);
    let scale = mom.s_dd.trace() / (h * mom.n as f64);
    let mut iterations = 0;
    let mut degenerate = !(sigma.det() > 1e-20 * scale * scale) || !(scale > 0.0);
    if !degenerate {
        loop {
            iterations += 1;
            let w = match sigma.inverse() {
                Ok(w) => w,
                Err(_) => {
                    degenerate = true;
                    break;
                }
            };
            let next = mom.beta(&w)?;
            let delta_a = ((next - beta) / h).abs();
            beta = next;
            sigma = mom.sigma(beta, h);
            if delta_a < A_TOL {
                break;
            }
            if iterations >= MAX_ITER {
                return Err(Error::NoConvergence(format!(
                    "cMLE fixed point not reached after {MAX_ITER} iterations (last Δa = {delta_a:e})"
                )));
            }
        }
    }
    let (a, m) = mom.a_m(beta, h)?;
    let estimate = VarParams { a, m, sigma };

    let mut fit = MleFit {
        estimate,
        h,
        transitions: mom.n,
        iterations,
        degenerate,
        fixed_point_residual: 0.0,
        log_likelihood: None,
        cov: None,
        derived: None,
        derived_se: None,
        derived_note: None,
    };
    if degenerate {
        fit.derived_note = Some("residual covariance is zero".into());
        return Ok(fit);
    }
    fit.fixed_point_residual = (a_given(rows, h, m, &sigma)? - a).abs();
    fit.log_likelihood = Some(log_likelihood(rows, h, &estimate)?);
    let cov = asymptotic_cov(rows, h, &estimate)?;
    fit.cov = Some(cov);
    match derive_params(&estimate, view.pair, kind, h) {
        Ok(d) => {
            fit.derived = Some(d);
            match delta_method(&estimate, &cov, view.pair, kind, h) {
                Ok(se) => fit.derived_se = Some(se),
                Err(e) => fit.derived_note = Some(format!("standard errors unavailable: {e}")),
            }
        }
        Err(e) => fit.derived_note = Some(e.to_string()),
    }
    Ok(fit)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulate::{simulate_pair, SimParams, SimSpec};

    fn truth() -> VarParams {
        VarParams::new(0.25, [0.02, 0.03], Cov2::new(5.5e-5, 4.0e-5, 4.2e-5)).unwrap()
    }

    fn pair() -> MaturityPair {
        MaturityPair::new(5.0, 20.0).unwrap()
    }

    fn sim(steps: usize, seed: u64) -> PairView {
        let spec = SimSpec { params: SimParams::Var(truth()), steps, h: 1.0 / 12.0, seed, initial: None };
        simulate_pair(&spec, pair()).unwrap()
    }

    #[test]
    fn noiseless_data_is_flagged_degenerate() {
        let v = VarParams { sigma: Cov2::new(0.0, 0.0, 0.0), ..truth() };
        let spec =
            SimSpec { params: SimParams::Var(v), steps: 60, h: 1.0 / 12.0, seed: 1, initial: Some([0.05, 0.01]) };
        let view = simulate_pair(&spec, pair()).unwrap();
        let fit = fit_cmle(&view, DecompositionKind::Noise).unwrap();
        assert!(fit.degenerate);
        assert!(fit.estimate.sigma.s11.abs() < 1e-20);
        assert!((fit.estimate.a - 0.25).abs() < 1e-8);
    }

    #[test]
    fn constant_columns_are_singular() {
        let view = PairView::from_rows(pair(), 1.0 / 12.0, vec![[0.02, 0.03]; 30]);
        assert!(matches!(fit_cmle(&view, DecompositionKind::Noise), Err(Error::Singular(_))));
    }

    #[test]
    fn fixed_point_and_first_order_conditions() {
        let view = sim(2000, 5);
        let fit = fit_cmle(&view, DecompositionKind::Noise).unwrap();
        assert!(fit.fixed_point_residual < 1e-10, "{}", fit.fixed_point_residual);
        let v = fit.estimate;
        // m condition: mean residual is zero
        let n = view.transitions() as f64;
        let ah = v.a * view.step;
        let mut mean_r = [0.0; 2];
        let mut rr = Matrix2::zeros();
        for w in view.rows.windows(2) {
            let r = [w[1][0] - w[0][0] + ah * (w[0][0] - v.m[0]), w[1][1] - w[0][1] + ah * (w[0][1] - v.m[1])];
            mean_r[0] += r[0] / n;
            mean_r[1] += r[1] / n;
            rr += nalgebra::Vector2::new(r[0], r[1]) * nalgebra::RowVector2::new(r[0], r[1]);
        }
        assert!(mean_r[0].abs() < 1e-14 && mean_r[1].abs() < 1e-14);
        let s = rr / (view.step * n);
        assert!((s[(0, 0)] - v.sigma.s11).abs() < 1e-10 * v.sigma.s11);
        assert!((s[(1, 0)] - v.sigma.s21).abs() < 1e-10 * v.sigma.s11);
    }

    #[test]
    fn a_variance_is_shift_invariant() {
        let view = sim(500, 9);
        let v = fit_cmle(&view, DecompositionKind::Noise).unwrap().estimate;
        let base = asymptotic_cov(&view.rows, view.step, &v).unwrap().var_a;
        let shift = 0.013;
        let rows: Vec<[f64; 2]> = view.rows.iter().map(|r| [r[0] + shift, r[1] + shift]).collect();
        let moved = VarParams { m: [v.m[0] + shift, v.m[1] + shift], ..v };
        let shifted = asymptotic_cov(&rows, view.step, &moved).unwrap().var_a;
        assert!((base - shifted).abs() < 1e-9 * base);
    }

    #[test]
    fn delta_method_is_exact_for_linear_maps() {
        let cov = [[2.0, 0.3, 0.0], [0.3, 1.0, 0.1], [0.0, 0.1, 0.5]];
        let c = [1.5, -2.0, 0.25];
        let f = |x: &[f64; 3]| Ok([c[0] * x[0] + c[1] * x[1] + c[2] * x[2]]);
        let jac = jacobian(f, &[0.3, 1.2, -0.7], 1e-6).unwrap();
        let se = delta_se(&jac, &cov)[0];
        let mut exact = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                exact += c[i] * cov[i][j] * c[j];
            }
        }
        assert!((se - exact.sqrt()).abs() < 1e-8 * exact.sqrt());
    }
}
