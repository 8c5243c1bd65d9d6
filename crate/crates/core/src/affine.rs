//! Closed-form affine Vasicek relations.
//!
//! The short rate follows `dr = κ̃(μ̃ − r)dt + σ dW` under the pricing
//! measure and `dr = κ(μ − r)dt + σ dW` under the physical one. Zero rates
//! are affine in `r` with loading `b(τ) = (1 − e^{−κ̃τ})/(κ̃τ)`, so two
//! observed maturities follow a bivariate VAR(1) whose parameters
//! ([`VarParams`]) map to the structural set ([`DerivedParams`]).

use crate::curves::MaturityPair;
use crate::linalg::Cov2;
use crate::{Error, Result};

/// Below this value of `κ̃τ` the loading is evaluated by its Taylor series.
const SERIES_CUTOFF: f64 = 1e-4;
const KAPPA_Q_LO: f64 = 1e-14;
const KAPPA_Q_HI_START: f64 = 1.0;
const KAPPA_Q_HI_MAX: f64 = 1024.0;
const KAPPA_Q_TOL: f64 = 1e-12;

/// How the VAR innovation covariance is split between the one-factor model
/// and the remainder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DecompositionKind {
    /// `Σ = σ² b b′ + η I`.
    Noise,
    /// `Σ = σ² [b₁², ρ b₁ b₂; ρ b₁ b₂, b₂²]`.
    Correlation,
}

impl DecompositionKind {
    pub fn name(self) -> &'static str {
        match self {
            DecompositionKind::Noise => "noise",
            DecompositionKind::Correlation => "corr",
        }
    }

    pub fn extra_name(self) -> &'static str {
        match self {
            DecompositionKind::Noise => "eta",
            DecompositionKind::Correlation => "rho",
        }
    }
}

impl std::str::FromStr for DecompositionKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "noise" | "eta" => Ok(DecompositionKind::Noise),
            "corr" | "correlation" | "rho" => Ok(DecompositionKind::Correlation),
            other => Err(Error::invalid(format!("unknown decomposition '{other}' (expected noise or corr)"))),
        }
    }
}

/// Physical-measure VAR(1) for two zero rates:
/// `Z_t = Z_{t−h} − a h (Z_{t−h} − m) + √h σ e_t`, `Σ = σσ′`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VarParams {
    pub a: f64,
    pub m: [f64; 2],
    pub sigma: Cov2,
}

impl VarParams {
    pub fn new(a: f64, m: [f64; 2], sigma: Cov2) -> Result<Self> {
        let v = Self { a, m, sigma };
        v.validate()?;
        Ok(v)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.a > 0.0) || !self.a.is_finite() {
            return Err(Error::domain(format!("a must be positive, got {}", self.a)));
        }
        if self.m.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) {
            return Err(Error::domain(format!("m must be non-negative, got {:?}", self.m)));
        }
        if !self.sigma.is_finite() || !self.sigma.is_positive_definite() {
            return Err(Error::domain(format!("Σ must be positive definite, got {:?}", self.sigma.vech())));
        }
        Ok(())
    }

    /// Flattened parameter vector `(a, m₁, m₂, σ₁₁, σ₂₁, σ₂₂)`.
    pub fn to_vec(&self) -> [f64; 6] {
        [self.a, self.m[0], self.m[1], self.sigma.s11, self.sigma.s21, self.sigma.s22]
    }

    /// Inverse of [`VarParams::to_vec`] without validation.
    pub fn from_vec(v: [f64; 6]) -> Self {
        Self { a: v[0], m: [v[1], v[2]], sigma: Cov2::new(v[3], v[4], v[5]) }
    }
}

/// Decomposition-specific parameter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Extra {
    Eta(f64),
    Rho(f64),
}

impl Extra {
    pub fn value(self) -> f64 {
        match self {
            Extra::Eta(x) | Extra::Rho(x) => x,
        }
    }

    pub fn kind(self) -> DecompositionKind {
        match self {
            Extra::Eta(_) => DecompositionKind::Noise,
            Extra::Rho(_) => DecompositionKind::Correlation,
        }
    }
}

/// Structural parameters implied by one [`VarParams`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DerivedParams {
    pub kappa: f64,
    pub kappa_q: f64,
    pub mu: f64,
    pub mu_q: f64,
    pub theta: f64,
    pub omega2: f64,
    pub sigma2: f64,
    pub lambda0: f64,
    pub lambda1: f64,
    pub extra: Extra,
}

impl DerivedParams {
    /// Assembles the full set from the free structural parameters
    /// `(κ, κ̃, μ, θ, σ²)` and the decomposition parameter.
    pub fn from_structural(kappa: f64, kappa_q: f64, mu: f64, theta: f64, sigma2: f64, extra: Extra) -> Result<Self> {
        if !(kappa_q > 0.0) {
            return Err(Error::Boundary(format!("κ̃ = {kappa_q} leaves θ undefined")));
        }
        if !(sigma2 > 0.0) {
            return Err(Error::domain(format!("σ² must be positive, got {sigma2}")));
        }
        let mu_q = theta + sigma2 / (2.0 * kappa_q * kappa_q);
        let sigma = sigma2.sqrt();
        let (lambda0, lambda1) = measure_change(kappa, mu, kappa_q, mu_q, sigma)?;
        Ok(Self { kappa, kappa_q, mu, mu_q, theta, omega2: sigma2 / (2.0 * kappa_q), sigma2, lambda0, lambda1, extra })
    }

    /// Values in the order `κ, κ̃, μ, μ̃, θ, Λ₀, Λ₁, σ², η|ρ` used in reports.
    pub fn report_values(&self) -> [f64; 9] {
        [
            self.kappa,
            self.kappa_q,
            self.mu,
            self.mu_q,
            self.theta,
            self.lambda0,
            self.lambda1,
            self.sigma2,
            self.extra.value(),
        ]
    }

    pub fn report_names(kind: DecompositionKind) -> [&'static str; 9] {
        ["kappa", "kappa_q", "mu", "mu_q", "theta", "lambda0", "lambda1", "sigma2", kind.extra_name()]
    }
}

/// `b(τ)` without argument checks. Continuous at `κ̃ = 0`.
pub(crate) fn b_unchecked(kappa_q: f64, tau: f64) -> f64 {
    let x = kappa_q * tau;
    if x.abs() < SERIES_CUTOFF {
        1.0 - x / 2.0 + x * x / 6.0 - x * x * x / 24.0
    } else {
        -(-x).exp_m1() / x
    }
}

/// Factor loading `b(τ) = (1 − e^{−κ̃τ})/(κ̃τ)`.
pub fn loading_b(kappa_q: f64, tau: f64) -> Result<f64> {
    if !(tau > 0.0) {
        return Err(Error::domain(format!("maturity must be positive, got {tau}")));
    }
    if !(kappa_q >= 0.0) || !kappa_q.is_finite() {
        return Err(Error::domain(format!("κ̃ must be non-negative, got {kappa_q}")));
    }
    Ok(b_unchecked(kappa_q, tau))
}

/// Ultimate zero rate `θ = μ̃ − σ²/(2κ̃²)`.
pub fn ultimate_rate(kappa_q: f64, mu_q: f64, sigma2: f64) -> Result<f64> {
    if !(kappa_q > 0.0) {
        return Err(Error::domain(format!("θ is undefined for κ̃ = {kappa_q}")));
    }
    Ok(mu_q - sigma2 / (2.0 * kappa_q * kappa_q))
}

/// Zero rate of maturity `τ` given the short rate `r`:
/// `z = b(r − θ) + θ + ½τω²b²`.
pub fn zero_rate_from_short(r: f64, tau: f64, kappa_q: f64, mu_q: f64, sigma2: f64) -> Result<f64> {
    if !(sigma2 >= 0.0) {
        return Err(Error::domain(format!("σ² must be non-negative, got {sigma2}")));
    }
    let theta = ultimate_rate(kappa_q, mu_q, sigma2)?;
    let b = loading_b(kappa_q, tau)?;
    let omega2 = sigma2 / (2.0 * kappa_q);
    Ok(b * (r - theta) + theta + 0.5 * tau * omega2 * b * b)
}

/// Short rate implied by an observed zero rate at `τ`.
pub fn short_from_zero(z_tau: f64, tau: f64, kappa_q: f64, theta: f64, omega2: f64) -> Result<f64> {
    let b = loading_b(kappa_q, tau)?;
    Ok((z_tau - theta) / b + theta - 0.5 * tau * omega2 * b)
}

/// Extrapolates an observed zero rate at `τ` to maturity `s ≥ τ`.
pub fn extrapolate_zero(z_tau: f64, tau: f64, s: f64, kappa_q: f64, theta: f64, omega2: f64) -> Result<f64> {
    if !(tau > 0.0) {
        return Err(Error::domain(format!("maturity must be positive, got {tau}")));
    }
    if !(s >= tau) {
        return Err(Error::domain(format!("extrapolation target {s} is below anchor {tau}")));
    }
    if !(kappa_q > 0.0) {
        return Err(Error::domain(format!("extrapolation needs κ̃ > 0, got {kappa_q}")));
    }
    if s == tau {
        return Ok(z_tau);
    }
    let bt = b_unchecked(kappa_q, tau);
    let bs = b_unchecked(kappa_q, s);
    Ok(bs / bt * (z_tau - theta) + theta + 0.5 * omega2 * bs * (s * bs - tau * bt))
}

/// Convergence speed `b(s)/b(τ)`.
pub fn convergence_ratio(kappa_q: f64, tau: f64, s: f64) -> Result<f64> {
    if !(s >= tau) {
        return Err(Error::domain(format!("s = {s} must be at least τ = {tau}")));
    }
    Ok(loading_b(kappa_q, s)? / loading_b(kappa_q, tau)?)
}

/// Weight of the `τ`-year zero rate in the one-year forward rate starting
/// `N` years ahead: `τ e^{−κ̃N}(1 − e^{−κ̃})/(1 − e^{−κ̃τ})`.
pub fn forward_loading(kappa_q: f64, tau: f64, n: f64) -> Result<f64> {
    if !(n >= 0.0) {
        return Err(Error::domain(format!("forward start must be non-negative, got {n}")));
    }
    let b_tau = loading_b(kappa_q, tau)?;
    if n.is_infinite() {
        return Ok(if kappa_q > 0.0 { 0.0 } else { 1.0 });
    }
    // τ(1 − e^{−κ̃})/(1 − e^{−κ̃τ}) = b(1)/b(τ), bounded at κ̃ = 0.
    Ok((-kappa_q * n).exp() * b_unchecked(kappa_q, 1.0) / b_tau)
}

/// Market-price-of-risk coefficients `(Λ₀, Λ₁)` linking the two measures.
pub fn measure_change(kappa: f64, mu: f64, kappa_q: f64, mu_q: f64, sigma: f64) -> Result<(f64, f64)> {
    if !(sigma > 0.0) {
        return Err(Error::domain(format!("σ must be positive, got {sigma}")));
    }
    Ok(((mu * kappa - mu_q * kappa_q) / sigma, (kappa_q - kappa) / sigma))
}

/// Target value of `b(τ₁)/b(τ₂)` implied by `Σ`, after feasibility checks.
fn loading_ratio_target(sigma: &Cov2, kind: DecompositionKind) -> Result<f64> {
    let Cov2 { s11, s21, s22 } = *sigma;
    if !sigma.is_finite() || !(s11 > 0.0) || !(s22 > 0.0) {
        return Err(Error::Infeasible(format!("Σ diagonal must be positive: {:?}", sigma.vech())));
    }
    if !(s21 > 0.0) {
        return Err(Error::Infeasible(format!("σ21 = {s21:e} must be positive")));
    }
    if s11 < s22 {
        return Err(Error::Infeasible(format!("σ11 = {s11:e} below σ22 = {s22:e} implies negative κ̃")));
    }
    Ok(match kind {
        // g − 1/g = q has the unique positive root below.
        DecompositionKind::Noise => {
            let q = (s11 - s22) / s21;
            0.5 * (q + (q * q + 4.0).sqrt())
        }
        DecompositionKind::Correlation => (s11 / s22).sqrt(),
    })
}

/// Risk-neutral mean reversion `κ̃ ≥ 0` implied by the VAR covariance.
///
/// Both decompositions pin down `g(κ̃) = b(τ₁)/b(τ₂)`, which rises
/// monotonically from 1 at `κ̃ = 0` towards `τ₂/τ₁`. The root is
/// bracketed, bisected and polished by secant steps.
pub fn solve_kappa_q(sigma: &Cov2, pair: MaturityPair, kind: DecompositionKind) -> Result<f64> {
    let target = loading_ratio_target(sigma, kind)?;
    let (t1, t2) = (pair.short(), pair.long());
    let upper = t2 / t1;
    if target >= upper {
        return Err(Error::Infeasible(format!("loading ratio {target} reaches its supremum τ2/τ1 = {upper}")));
    }
    let g = |k: f64| b_unchecked(k, t1) / b_unchecked(k, t2) - target;
    if target - 1.0 <= f64::EPSILON {
        return Ok(0.0);
    }

    let mut hi = KAPPA_Q_HI_START;
    while g(hi) < 0.0 {
        if hi >= KAPPA_Q_HI_MAX {
            return Err(Error::NoConvergence(format!(
                "no sign change for κ̃ up to {KAPPA_Q_HI_MAX} (target ratio {target})"
            )));
        }
        hi *= 2.0;
    }
    let mut lo = KAPPA_Q_LO;
    if g(lo) > 0.0 {
        // ratio so close to 1 that κ̃ lies below the bracket floor
        return Ok(0.0);
    }
    check_monotone(&g, lo, hi)?;

    let (mut glo, mut ghi) = (g(lo), g(hi));
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let gm = g(mid);
        if gm == 0.0 {
            return Ok(mid);
        }
        if gm < 0.0 {
            lo = mid;
            glo = gm;
        } else {
            hi = mid;
            ghi = gm;
        }
        if hi - lo <= 1e-6 * hi {
            break;
        }
    }
    // secant polish on the bracketed root
    let (mut x0, mut x1) = (lo, hi);
    let (mut f0, mut f1) = (glo, ghi);
    let mut best = if f0.abs() < f1.abs() { (x0, f0) } else { (x1, f1) };
    for _ in 0..60 {
        if f1 == f0 {
            break;
        }
        let x2 = (x1 - f1 * (x1 - x0) / (f1 - f0)).clamp(lo.min(hi), lo.max(hi));
        let f2 = g(x2);
        if f2.abs() < best.1.abs() {
            best = (x2, f2);
        }
        if f2.abs() < KAPPA_Q_TOL * 1e-3 || x2 == x1 {
            break;
        }
        x0 = x1;
        f0 = f1;
        x1 = x2;
        f1 = f2;
    }
    if best.1.abs() >= KAPPA_Q_TOL {
        return Err(Error::NoConvergence(format!("κ̃ residual {:e} at κ̃ = {}", best.1, best.0)));
    }
    Ok(best.0)
}

/// Checks that `g` is non-decreasing over a log-spaced grid on `[lo, hi]`.
fn check_monotone(g: &impl Fn(f64) -> f64, lo: f64, hi: f64) -> Result<()> {
    const POINTS: usize = 64;
    let (llo, lhi) = (lo.ln(), hi.ln());
    let mut prev = g(lo);
    for i in 1..=POINTS {
        let x = (llo + (lhi - llo) * i as f64 / POINTS as f64).exp();
        let v = g(x);
        if v < prev - 1e-14 {
            return Err(Error::NoConvergence(format!("bracketing function not monotone near κ̃ = {x}")));
        }
        prev = v;
    }
    Ok(())
}

/// Covariance generated by the one-factor model plus its decomposition
/// parameter.
pub fn model_covariance(kappa_q: f64, sigma2: f64, pair: MaturityPair, extra: Extra) -> Result<Cov2> {
    if !(sigma2 > 0.0) {
        return Err(Error::domain(format!("σ² must be positive, got {sigma2}")));
    }
    let b1 = loading_b(kappa_q, pair.short())?;
    let b2 = loading_b(kappa_q, pair.long())?;
    match extra {
        Extra::Eta(eta) => {
            if !(eta >= 0.0) {
                return Err(Error::domain(format!("η must be non-negative, got {eta}")));
            }
            Ok(Cov2::new(sigma2 * b1 * b1 + eta, sigma2 * b1 * b2, sigma2 * b2 * b2 + eta))
        }
        Extra::Rho(rho) => {
            if !(rho > 0.0 && rho <= 1.0) {
                return Err(Error::domain(format!("ρ must lie in (0, 1], got {rho}")));
            }
            Ok(Cov2::new(sigma2 * b1 * b1, rho * sigma2 * b1 * b2, sigma2 * b2 * b2))
        }
    }
}

/// Physical mean reversion of the short rate from the VAR coefficient.
pub fn kappa_from_a(a: f64, h: f64) -> Result<f64> {
    if !(h > 0.0) {
        return Err(Error::domain(format!("step must be positive, got {h}")));
    }
    let x = a * h;
    if !(x < 1.0) {
        return Err(Error::domain(format!("a·h = {x} must be below 1")));
    }
    Ok(-(-x).ln_1p() / h)
}

/// VAR coefficient `a = (1 − e^{−κh})/h`.
pub fn a_from_kappa(kappa: f64, h: f64) -> f64 {
    -(-kappa * h).exp_m1() / h
}

/// Ratio of the per-step innovation variance (divided by `h`) to the
/// instantaneous variance for an exact OU step: `(1 − e^{−2κh})/(2κh)`.
pub fn discretization_factor(kappa: f64, h: f64) -> f64 {
    b_unchecked(2.0 * kappa, h)
}

/// Long-run zero-rate means `m(τ) = θ(1 − b) + μ b + ½τω²b²` at both
/// maturities.
pub fn zero_rate_means(mu: f64, theta: f64, omega2: f64, kappa_q: f64, pair: MaturityPair) -> [f64; 2] {
    pair.as_array().map(|t| {
        let b = b_unchecked(kappa_q, t);
        theta * (1.0 - b) + mu * b + 0.5 * t * omega2 * b * b
    })
}

/// Solves the two-maturity linear system for `(θ, μ)` given the zero-rate
/// means.
pub fn theta_mu_from_means(m: [f64; 2], kappa_q: f64, omega2: f64, pair: MaturityPair) -> Result<(f64, f64)> {
    let [t1, t2] = pair.as_array();
    let b1 = b_unchecked(kappa_q, t1);
    let b2 = b_unchecked(kappa_q, t2);
    let det = b1 - b2;
    if !(det.abs() > 1e-15) {
        return Err(Error::Singular(format!("θ and μ are not identified when b(τ1) = b(τ2) (κ̃ = {kappa_q})")));
    }
    let y1 = m[0] - 0.5 * omega2 * t1 * b1 * b1;
    let y2 = m[1] - 0.5 * omega2 * t2 * b2 * b2;
    // [b1, 1−b1; b2, 1−b2] (μ, θ)′ = (y1, y2)′
    let mu = ((1.0 - b2) * y1 - (1.0 - b1) * y2) / det;
    let theta = (b1 * y2 - b2 * y1) / det;
    Ok((theta, mu))
}

/// Maps VAR parameters to the structural parameter set.
///
/// The VAR innovation covariance is first rescaled to the instantaneous
/// covariance of the exact OU transition and then decomposed.
pub fn derive_params(v: &VarParams, pair: MaturityPair, kind: DecompositionKind, h: f64) -> Result<DerivedParams> {
    let kappa = kappa_from_a(v.a, h)?;
    let sigma_c = v.sigma.scale(1.0 / discretization_factor(kappa, h));
    let kappa_q = solve_kappa_q(&sigma_c, pair, kind)?;
    if kappa_q == 0.0 {
        return Err(Error::Boundary("κ̃ = 0: θ and μ̃ are undefined".into()));
    }
    let b1 = b_unchecked(kappa_q, pair.short());
    let b2 = b_unchecked(kappa_q, pair.long());
    let (sigma2, extra) = match kind {
        DecompositionKind::Noise => {
            let s2 = sigma_c.s21 / (b1 * b2);
            (s2, Extra::Eta(sigma_c.s11 - s2 * b1 * b1))
        }
        DecompositionKind::Correlation => {
            (sigma_c.s11 / (b1 * b1), Extra::Rho(sigma_c.s21 / (sigma_c.s11 * sigma_c.s22).sqrt()))
        }
    };
    let omega2 = sigma2 / (2.0 * kappa_q);
    let (theta, mu) = theta_mu_from_means(v.m, kappa_q, omega2, pair)?;
    DerivedParams::from_structural(kappa, kappa_q, mu, theta, sigma2, extra)
}

/// Inverse of [`derive_params`]: the VAR parameters generated by a
/// structural parameter set.
pub fn var_params_from(d: &DerivedParams, pair: MaturityPair, h: f64) -> Result<VarParams> {
    if !(d.kappa > 0.0) {
        return Err(Error::domain(format!("κ must be positive, got {}", d.kappa)));
    }
    let a = a_from_kappa(d.kappa, h);
    let sigma_c = model_covariance(d.kappa_q, d.sigma2, pair, d.extra)?;
    let sigma = sigma_c.scale(discretization_factor(d.kappa, h));
    let m = zero_rate_means(d.mu, d.theta, d.omega2, d.kappa_q, pair);
    Ok(VarParams { a, m, sigma })
}

/// Vasicek parameters of a single zero rate at tenor `τ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZeroRateDynamics {
    pub a: f64,
    pub m: f64,
    pub sigma_z: f64,
}

/// Short-rate to zero-rate parameter mapping: the `τ`-year zero rate is
/// itself a Vasicek process with the same mean reversion.
pub fn short_zero_map(
    kappa: f64,
    mu: f64,
    kappa_q: f64,
    mu_q: f64,
    sigma_r: f64,
    tau: f64,
) -> Result<ZeroRateDynamics> {
    let sigma2 = sigma_r * sigma_r;
    let theta = ultimate_rate(kappa_q, mu_q, sigma2)?;
    let b = loading_b(kappa_q, tau)?;
    let omega2 = sigma2 / (2.0 * kappa_q);
    Ok(ZeroRateDynamics { a: kappa, m: theta + 0.5 * tau * omega2 * b * b - theta * b + mu * b, sigma_z: b * sigma_r })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pair(a: f64, b: f64) -> MaturityPair {
        MaturityPair::new(a, b).unwrap()
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(1e-300)
    }

    #[test]
    fn loading_limits_and_series() {
        assert_eq!(loading_b(0.0, 20.0).unwrap(), 1.0);
        let k = 1e-12;
        let x: f64 = k * 20.0;
        let series = 1.0 - x / 2.0 + x * x / 6.0;
        assert!((loading_b(k, 20.0).unwrap() - series).abs() < 1e-9);
        assert!(loading_b(0.1, 0.0).is_err());
        assert!(loading_b(0.1, -1.0).is_err());
        // continuity across the series cutoff
        let t = 1.0;
        let below = loading_b(0.999_999e-4, t).unwrap();
        let above = loading_b(1.000_001e-4, t).unwrap();
        assert!((below - above).abs() < 1e-9);
    }

    #[test]
    fn convergence_ratio_at_paper_values() {
        let r = convergence_ratio(0.02, 20.0, 60.0).unwrap();
        assert!((r - 0.706).abs() < 0.005, "{r}");
        assert_eq!(convergence_ratio(0.02, 20.0, 20.0).unwrap(), 1.0);
        assert_eq!(convergence_ratio(0.0, 20.0, 80.0).unwrap(), 1.0);
    }

    #[test]
    fn forward_loading_values() {
        let w = forward_loading(0.02, 20.0, 60.0).unwrap();
        assert!((w - 0.36).abs() < 0.01, "{w}");
        // direct formula as an independent check
        let k: f64 = 0.02;
        let direct = 20.0 * (-k * 60.0).exp() * (1.0 - (-k).exp()) / (1.0 - (-k * 20.0).exp());
        assert!(rel(w, direct) < 1e-12);
        assert!((forward_loading(0.0, 20.0, 60.0).unwrap() - 1.0).abs() < 1e-15);
        assert!(forward_loading(1e-16, 5.0, 30.0).unwrap() > 0.999_999);
        assert_eq!(forward_loading(0.02, 20.0, f64::INFINITY).unwrap(), 0.0);
        assert!(forward_loading(0.02, 20.0, 5000.0).unwrap() < 1e-40);
    }

    #[test]
    fn table1_theta_and_lambdas() {
        let (kappa, kq, mu, muq, s2) = (0.2056, 0.0201, 0.0103, 0.1338, 4.710e-5);
        let theta = ultimate_rate(kq, muq, s2).unwrap();
        assert!((theta - 0.0755).abs() < 0.0005, "{theta}");
        let (l0, l1) = measure_change(kappa, mu, kq, muq, s2.sqrt()).unwrap();
        assert!((l1 + 27.0).abs() < 0.2, "{l1}");
        assert!((l0 + 0.083).abs() < 0.003, "{l0}");
    }

    #[test]
    fn risk_neutral_world_has_zero_prices_of_risk() {
        let (l0, l1) = measure_change(0.1, 0.04, 0.1, 0.04, 0.01).unwrap();
        assert_eq!((l0, l1), (0.0, 0.0));
        assert!(measure_change(0.1, 0.04, 0.1, 0.04, 0.0).is_err());
    }

    #[test]
    fn zero_rate_without_volatility_is_flat() {
        for tau in [0.5, 5.0, 50.0] {
            let z = zero_rate_from_short(0.04, tau, 0.1, 0.04, 0.0).unwrap();
            assert!((z - 0.04).abs() < 1e-15);
        }
        assert!(zero_rate_from_short(0.04, 5.0, 0.0, 0.04, 1e-4).is_err());
        let far = zero_rate_from_short(0.01, 1e5, 0.1, 0.04, 1e-4).unwrap();
        assert!((far - ultimate_rate(0.1, 0.04, 1e-4).unwrap()).abs() < 1e-5);
    }

    #[test]
    fn extrapolation_matches_pricing_chain() {
        let (kq, muq, s2, r) = (0.0205, 0.09, 4.86e-5, 0.017);
        let theta = ultimate_rate(kq, muq, s2).unwrap();
        let omega2 = s2 / (2.0 * kq);
        let z20 = zero_rate_from_short(r, 20.0, kq, muq, s2).unwrap();
        // oracle: recover r from z(20) by inverting the pricing formula,
        // then price the 60-year bond directly
        let b20 = (1.0 - (-kq * 20.0_f64).exp()) / (kq * 20.0);
        let r_back = (z20 - theta - 0.5 * 20.0 * omega2 * b20 * b20) / b20 + theta;
        let z60 = zero_rate_from_short(r_back, 60.0, kq, muq, s2).unwrap();
        let ext = extrapolate_zero(z20, 20.0, 60.0, kq, theta, omega2).unwrap();
        assert!((ext - z60).abs() < 1e-12, "{ext} vs {z60}");
        assert_eq!(extrapolate_zero(z20, 20.0, 20.0, kq, theta, omega2).unwrap(), z20);
        assert!(extrapolate_zero(z20, 20.0, 10.0, kq, theta, omega2).is_err());
        assert!((extrapolate_zero(theta, 20.0, 90.0, kq, theta, 0.0).unwrap() - theta).abs() < 1e-15);
        let back = short_from_zero(z20, 20.0, kq, theta, omega2).unwrap();
        assert!((back - r).abs() < 1e-13);
    }

    #[test]
    fn kappa_q_zero_when_variances_equal() {
        let s = Cov2::new(4e-5, 3e-5, 4e-5);
        assert_eq!(solve_kappa_q(&s, pair(5.0, 20.0), DecompositionKind::Noise).unwrap(), 0.0);
        assert_eq!(solve_kappa_q(&s, pair(5.0, 20.0), DecompositionKind::Correlation).unwrap(), 0.0);
    }

    #[test]
    fn kappa_q_round_trips() {
        let p = pair(5.0, 20.0);
        let s = model_covariance(0.0205, 4.86e-5, p, Extra::Eta(1.09e-5)).unwrap();
        let k = solve_kappa_q(&s, p, DecompositionKind::Noise).unwrap();
        assert!((k - 0.0205).abs() < 1e-8, "{k}");
        let s = model_covariance(0.0205, 4.86e-5, p, Extra::Rho(1.0)).unwrap();
        let k = solve_kappa_q(&s, p, DecompositionKind::Correlation).unwrap();
        assert!((k - 0.0205).abs() < 1e-8, "{k}");
    }

    #[test]
    fn kappa_q_infeasible_is_distinct_error() {
        let p = pair(5.0, 20.0);
        let negative_cov = Cov2::new(5e-5, -1e-5, 4e-5);
        assert!(matches!(solve_kappa_q(&negative_cov, p, DecompositionKind::Noise), Err(Error::Infeasible(_))));
        let wrong_order = Cov2::new(3e-5, 2e-5, 4e-5);
        assert!(matches!(solve_kappa_q(&wrong_order, p, DecompositionKind::Correlation), Err(Error::Infeasible(_))));
        // ratio beyond τ2/τ1 = 4 cannot be produced by any κ̃
        let too_steep = Cov2::new(17.0, 0.5, 1.0);
        assert!(matches!(solve_kappa_q(&too_steep, p, DecompositionKind::Correlation), Err(Error::Infeasible(_))));
    }

    #[test]
    fn rank_one_covariances() {
        let p = pair(5.0, 20.0);
        let s = model_covariance(0.03, 5e-5, p, Extra::Eta(0.0)).unwrap();
        assert!(s.det().abs() < 1e-24);
        let s = model_covariance(0.03, 5e-5, p, Extra::Rho(1.0)).unwrap();
        assert!(s.det().abs() < 1e-24);
    }

    #[test]
    fn table2_means_are_jointly_consistent() {
        let p = pair(5.0, 20.0);
        let (kq, s2, eta) = (0.0205, 4.8574e-5, 1.0854e-5);
        let s = model_covariance(kq, s2, p, Extra::Eta(eta)).unwrap();
        assert!((s.s11 - s.s22) / s.s21 > 0.0);
        let b1 = loading_b(kq, 5.0).unwrap();
        let eta_back = s.s11 - s2 * b1 * b1;
        assert!(rel(eta_back, eta) < 0.1);
    }

    #[test]
    fn kappa_tends_to_a_for_small_steps() {
        let k = kappa_from_a(0.2, 1e-8).unwrap();
        assert!((k - 0.2).abs() < 1e-8);
        assert!(kappa_from_a(12.0, 1.0 / 12.0).is_err());
        assert!(kappa_from_a(13.0, 1.0 / 12.0).is_err());
    }

    #[test]
    fn derive_round_trip_and_identities() {
        let p = pair(5.0, 20.0);
        let h = 1.0 / 12.0;
        for extra in [Extra::Eta(1.09e-5), Extra::Rho(0.93)] {
            let d = DerivedParams::from_structural(0.17, 0.0205, 0.012, 0.03, 4.86e-5, extra).unwrap();
            let v = var_params_from(&d, p, h).unwrap();
            let back = derive_params(&v, p, extra.kind(), h).unwrap();
            for (x, y) in back.report_values().iter().zip(d.report_values()) {
                assert!(rel(*x, y) < 1e-9, "{x} vs {y}");
            }
            assert!(rel(back.theta, back.mu_q - back.sigma2 / (2.0 * back.kappa_q.powi(2))) < 1e-12);
            assert!(rel(back.omega2, back.sigma2 / (2.0 * back.kappa_q)) < 1e-12);
        }
    }

    #[test]
    fn short_zero_map_relations() {
        let (kappa, mu, kq, muq, sr) = (0.17, 0.012, 0.0205, 0.09, 0.007);
        let z = short_zero_map(kappa, mu, kq, muq, sr, 1e-9).unwrap();
        assert!((z.m - mu).abs() < 1e-9);
        assert_eq!(short_zero_map(kappa, mu, kq, muq, sr, 7.0).unwrap().a, kappa);
        // agrees with the two-maturity mean system
        let p = pair(5.0, 20.0);
        let theta = ultimate_rate(kq, muq, sr * sr).unwrap();
        let omega2 = sr * sr / (2.0 * kq);
        let m = zero_rate_means(mu, theta, omega2, kq, p);
        let (th, mu_back) = theta_mu_from_means(m, kq, omega2, p).unwrap();
        assert!((th - theta).abs() < 1e-10 && (mu_back - mu).abs() < 1e-10);
        let z5 = short_zero_map(kappa, mu, kq, muq, sr, 5.0).unwrap();
        let z20 = short_zero_map(kappa, mu, kq, muq, sr, 20.0).unwrap();
        assert!((z5.m - m[0]).abs() < 1e-10 && (z20.m - m[1]).abs() < 1e-10);
    }

    #[test]
    fn boundary_kappa_q_reported() {
        let p = pair(5.0, 20.0);
        let v = VarParams::new(0.2, [0.02, 0.03], Cov2::new(4e-5, 3e-5, 4e-5)).unwrap();
        assert!(matches!(derive_params(&v, p, DecompositionKind::Noise, 1.0 / 12.0), Err(Error::Boundary(_))));
    }
}
