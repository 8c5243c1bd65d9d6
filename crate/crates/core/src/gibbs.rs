//! Constrained Gibbs sampler over `(a, m, Σ)`.
//!
//! Each sweep draws `m`, then `a`, then `Σ` from their full conditionals.
//! A proposal is kept only if the whole state implies admissible
//! structural parameters (non-negative zero-rate means, positive short-rate
//! means under both measures, `0 < a h < 1` and a positive risk-neutral
//! mean reversion); otherwise the same block is drawn again.
//!
//! The `m` block is drawn by coordinate-wise Gibbs steps, which are not
//! independent draws, so re-drawing it until the state is admissible would
//! bias the chain. Instead its steps sample the conditional restricted to the
//! admissible set, which given `a` and `Σ` is a polygon in `m`.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{ChiSquared, Distribution, Exp1, StandardNormal};
use rayon::prelude::*;

use crate::affine::{derive_params, solve_kappa_q, theta_mu_from_means, DecompositionKind, DerivedParams, VarParams};
use crate::curves::MaturityPair;
use crate::linalg::Cov2;
use crate::{Error, Result};

/// Standardized truncation point above which the exponential proposal
/// replaces naive rejection.
pub const DEFAULT_EXP_THRESHOLD: f64 = 0.5;
pub const DEFAULT_STALL_WINDOW: u64 = 10_000;
pub const DEFAULT_STALL_RATE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TnBranch {
    Naive,
    Exponential,
}

/// Draws from `N(μ, σ²)` truncated to `[lb, ∞)` and reports which sampler
/// produced the value.
pub fn sample_trunc_normal_with<R: Rng + ?Sized>(
    rng: &mut R,
    mu: f64,
    sigma: f64,
    lb: f64,
    threshold: f64,
) -> (f64, TnBranch) {
    let alpha = (lb - mu) / sigma;
    if alpha <= threshold {
        loop {
            let z: f64 = rng.sample(StandardNormal);
            if z >= alpha {
                return ((mu + sigma * z).max(lb), TnBranch::Naive);
            }
        }
    }
    // translated exponential proposal with the acceptance-optimal rate
    let lambda = 0.5 * (alpha + (alpha * alpha + 4.0).sqrt());
    loop {
        let e: f64 = rng.sample(Exp1);
        let z = alpha + e / lambda;
        let u: f64 = rng.random();
        if u <= (-0.5 * (z - lambda) * (z - lambda)).exp() {
            return ((mu + sigma * z).max(lb), TnBranch::Exponential);
        }
    }
}

pub fn sample_trunc_normal<R: Rng + ?Sized>(rng: &mut R, mu: f64, sigma: f64, lb: f64) -> f64 {
    sample_trunc_normal_with(rng, mu, sigma, lb, DEFAULT_EXP_THRESHOLD).0
}

/// Draws from `N(μ, σ²)` truncated to `[lo, hi]`. One-sided cases use
/// [`sample_trunc_normal_with`].
pub fn sample_trunc_normal_interval<R: Rng + ?Sized>(
    rng: &mut R,
    mu: f64,
    sigma: f64,
    lo: f64,
    hi: f64,
    threshold: f64,
) -> f64 {
    if hi == f64::INFINITY {
        if lo == f64::NEG_INFINITY {
            let z: f64 = rng.sample(StandardNormal);
            return mu + sigma * z;
        }
        return sample_trunc_normal_with(rng, mu, sigma, lo, threshold).0;
    }
    if lo == f64::NEG_INFINITY {
        return -sample_trunc_normal_with(rng, -mu, sigma, -hi, threshold).0;
    }
    let (mut alpha, mut beta) = ((lo - mu) / sigma, (hi - mu) / sigma);
    let flip = beta <= 0.0;
    if flip {
        (alpha, beta) = (-beta, -alpha);
    }
    let z = if alpha >= 0.0 {
        // exponential proposal truncated to the interval
        let lambda = 0.5 * (alpha + (alpha * alpha + 4.0).sqrt());
        let top = lambda.clamp(alpha, beta);
        let peak = lambda * top - 0.5 * top * top;
        let span = -(-lambda * (beta - alpha)).exp_m1();
        loop {
            let u: f64 = rng.random();
            let z = (alpha - (-u * span).ln_1p() / lambda).min(beta);
            let v: f64 = rng.random();
            if v <= (lambda * z - 0.5 * z * z - peak).exp() {
                break z;
            }
        }
    } else if beta - alpha < 2.5 {
        loop {
            let z = rng.random_range(alpha..=beta);
            let v: f64 = rng.random();
            if v <= (-0.5 * z * z).exp() {
                break z;
            }
        }
    } else {
        loop {
            let z: f64 = rng.sample(StandardNormal);
            if z >= alpha && z <= beta {
                break z;
            }
        }
    };
    let z = if flip { -z } else { z };
    (mu + sigma * z).clamp(lo, hi)
}

/// Half-plane `c·x + d ≥ 0`.
pub type LinearConstraint = ([f64; 2], f64);

const ORTHANT: [LinearConstraint; 2] = [([1.0, 0.0], 0.0), ([0.0, 1.0], 0.0)];

/// Bivariate normal truncated to the positive orthant, by coordinate-wise
/// Gibbs steps started from `start`.
pub fn sample_trunc_normal_2d<R: Rng + ?Sized>(
    rng: &mut R,
    mu: [f64; 2],
    omega: &Cov2,
    start: [f64; 2],
    sweeps: usize,
    threshold: f64,
) -> [f64; 2] {
    sample_trunc_normal_2d_in(rng, mu, omega, start.map(|v| v.max(0.0)), sweeps, threshold, &ORTHANT)
}

/// Bivariate normal truncated to an intersection of half-planes, by
/// coordinate-wise Gibbs steps. `start` must satisfy every constraint.
pub fn sample_trunc_normal_2d_in<R: Rng + ?Sized>(
    rng: &mut R,
    mu: [f64; 2],
    omega: &Cov2,
    start: [f64; 2],
    sweeps: usize,
    threshold: f64,
    region: &[LinearConstraint],
) -> [f64; 2] {
    let mut x = start;
    let slope = [omega.s21 / omega.s22, omega.s21 / omega.s11];
    let sd = [(omega.s11 - omega.s21 * slope[0]).max(0.0).sqrt(), (omega.s22 - omega.s21 * slope[1]).max(0.0).sqrt()];
    for _ in 0..sweeps {
        for j in 0..2 {
            let k = 1 - j;
            let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
            for (c, d) in region {
                let rest = c[k] * x[k] + d;
                if c[j] > 0.0 {
                    lo = lo.max(-rest / c[j]);
                } else if c[j] < 0.0 {
                    hi = hi.min(-rest / c[j]);
                }
            }
            if !(lo <= hi) {
                // numerically empty slice; leave the coordinate unchanged
                continue;
            }
            let mean = mu[j] + slope[j] * (x[k] - mu[k]);
            x[j] = sample_trunc_normal_interval(rng, mean, sd[j], lo, hi, threshold);
        }
    }
    x
}

/// Wishart draw with scale `Ψ` and `ν` degrees of freedom (`E = νΨ`), by the
/// Bartlett decomposition.
pub fn sample_wishart<R: Rng + ?Sized>(rng: &mut R, scale: &Cov2, nu: f64) -> Result<Cov2> {
    if !(nu > 1.0) {
        return Err(Error::domain(format!("Wishart needs ν > 1, got {nu}")));
    }
    let l = scale.cholesky_psd()?;
    let c1: f64 = ChiSquared::new(nu).expect("ν > 1").sample(rng);
    let c2: f64 = ChiSquared::new(nu - 1.0).expect("ν > 1").sample(rng);
    let n21: f64 = rng.sample(StandardNormal);
    let a = nalgebra::Matrix2::new(c1.sqrt(), 0.0, n21, c2.sqrt());
    let la = l * a;
    Ok(Cov2::from_matrix(&(la * la.transpose())))
}

/// Prior hyperparameters. `Ψ_Σ` is the inverse scale of the Wishart prior
/// on `Σ⁻¹`, i.e. `Σ⁻¹ ~ W(Ψ_Σ⁻¹, ν_Σ)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Priors {
    pub mu_a: f64,
    pub tau_a: f64,
    pub mu_m: [f64; 2],
    /// Diagonal of `Ω_m`.
    pub omega_m: [f64; 2],
    pub psi: Cov2,
    pub nu: f64,
}

impl Default for Priors {
    fn default() -> Self {
        Self {
            mu_a: 0.0,
            tau_a: 0.2,
            mu_m: [-0.923, -0.923],
            omega_m: [0.04, 0.04],
            psi: Cov2::from_sd_corr(0.01, 0.01, 0.95),
            nu: 3.0,
        }
    }
}

impl Priors {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau_a > 0.0) {
            return Err(Error::invalid("tau_a must be positive"));
        }
        if !(self.omega_m[0] > 0.0 && self.omega_m[1] > 0.0) {
            return Err(Error::invalid("omega_m must be positive"));
        }
        if !self.psi.is_positive_definite() {
            return Err(Error::invalid("psi must be positive definite"));
        }
        if !(self.nu >= 3.0) {
            return Err(Error::invalid("nu must be at least 3"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InitialState {
    pub a: f64,
    pub sigma: Cov2,
    /// `None` uses the column means of the data floored at
    /// [`InitialState::M_FLOOR`].
    pub m: Option<[f64; 2]>,
}

impl InitialState {
    pub const M_FLOOR: f64 = 1e-4;
}

impl Default for InitialState {
    fn default() -> Self {
        Self { a: 1e-5, sigma: Cov2::from_sd_corr(0.001, 0.001, 0.95), m: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GibbsConfig {
    pub iterations: u64,
    pub burn_in: u64,
    pub thin: u64,
    pub seed: u64,
    pub kind: DecompositionKind,
    pub pair: MaturityPair,
    pub exp_threshold: f64,
    /// Acceptance is monitored over windows of this many proposals.
    pub stall_window: u64,
    /// A block update aborts once zero acceptances over its consecutive
    /// windows bound the acceptance rate below this value.
    pub stall_rate: f64,
    /// Coordinate sweeps per bivariate truncated-normal draw.
    pub m_sweeps: usize,
    pub initial: InitialState,
}

impl GibbsConfig {
    pub fn new(pair: MaturityPair, kind: DecompositionKind, seed: u64) -> Self {
        Self {
            iterations: 1_000_000,
            burn_in: 1_000,
            thin: 100,
            seed,
            kind,
            pair,
            exp_threshold: DEFAULT_EXP_THRESHOLD,
            stall_window: DEFAULT_STALL_WINDOW,
            stall_rate: DEFAULT_STALL_RATE,
            m_sweeps: 2,
            initial: InitialState::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.iterations <= self.burn_in {
            return Err(Error::invalid("iterations must exceed burn-in"));
        }
        if self.thin < 1 {
            return Err(Error::invalid("thinning must be at least 1"));
        }
        if self.stall_window < 1 || self.m_sweeps < 1 {
            return Err(Error::invalid("stall window and m sweeps must be positive"));
        }
        if !(self.stall_rate > 0.0 && self.stall_rate < 1.0) {
            return Err(Error::invalid("stall rate must lie in (0, 1)"));
        }
        Ok(())
    }

    /// Consecutive rejections after which a block update aborts: the first
    /// whole number of windows whose empty count implies a rate below
    /// `stall_rate`.
    pub fn stall_limit(&self) -> u64 {
        let needed = (1.0 / self.stall_rate).ceil() as u64;
        needed.div_ceil(self.stall_window).max(1) * self.stall_window
    }

    pub fn stored_draws(&self) -> u64 {
        (self.iterations - self.burn_in) / self.thin
    }
}

/// Sufficient statistics of the transitions, centred at the mean lagged
/// level `z̄`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SuffStats {
    pub n: usize,
    pub h: f64,
    mean_lag: [f64; 2],
    sum_diff: [f64; 2],
    /// Σ D Dᵀ, D = Z₋ − z̄.
    s_ll: [[f64; 2]; 2],
    /// Σ ΔZ Dᵀ.
    s_dl: [[f64; 2]; 2],
    /// Σ ΔZ ΔZᵀ.
    s_dd: [[f64; 2]; 2],
}

impl SuffStats {
    pub fn new(rows: &[[f64; 2]], h: f64) -> Self {
        let n = rows.len().saturating_sub(1);
        let mut mean_lag = [0.0; 2];
        let mut sum_diff = [0.0; 2];
        for w in rows.windows(2) {
            for k in 0..2 {
                mean_lag[k] += w[0][k] / n as f64;
                sum_diff[k] += w[1][k] - w[0][k];
            }
        }
        let mut s_ll = [[0.0; 2]; 2];
        let mut s_dl = [[0.0; 2]; 2];
        let mut s_dd = [[0.0; 2]; 2];
        for w in rows.windows(2) {
            let d = [w[0][0] - mean_lag[0], w[0][1] - mean_lag[1]];
            let dz = [w[1][0] - w[0][0], w[1][1] - w[0][1]];
            for i in 0..2 {
                for j in 0..2 {
                    s_ll[i][j] += d[i] * d[j];
                    s_dl[i][j] += dz[i] * d[j];
                    s_dd[i][j] += dz[i] * dz[j];
                }
            }
        }
        Self { n, h, mean_lag, sum_diff, s_ll, s_dl, s_dd }
    }

    /// `X′X` for `X_t = m − Z_{t−1}`.
    fn xx(&self, m: [f64; 2]) -> [[f64; 2]; 2] {
        let d = [m[0] - self.mean_lag[0], m[1] - self.mean_lag[1]];
        let n = self.n as f64;
        std::array::from_fn(|i| std::array::from_fn(|j| n * d[i] * d[j] + self.s_ll[i][j]))
    }

    /// `ΔZ′X`.
    fn dx(&self, m: [f64; 2]) -> [[f64; 2]; 2] {
        let d = [m[0] - self.mean_lag[0], m[1] - self.mean_lag[1]];
        std::array::from_fn(|i| std::array::from_fn(|j| self.sum_diff[i] * d[j] - self.s_dl[i][j]))
    }

    /// `R′R` for residuals `R_t = ΔZ_t − a h X_t`.
    fn rr(&self, a: f64, m: [f64; 2]) -> Cov2 {
        let ah = a * self.h;
        let xx = self.xx(m);
        let dx = self.dx(m);
        let e = |i: usize, j: usize| self.s_dd[i][j] - ah * (dx[i][j] + dx[j][i]) + ah * ah * xx[i][j];
        Cov2::new(e(0, 0), 0.5 * (e(1, 0) + e(0, 1)), e(1, 1))
    }
}

fn trace_w(w: &Cov2, m: &[[f64; 2]; 2]) -> f64 {
    w.s11 * m[0][0] + w.s21 * (m[1][0] + m[0][1]) + w.s22 * m[1][1]
}

fn hyper_a(stats: &SuffStats, m: [f64; 2], sigma: &Cov2, priors: &Priors) -> Result<(f64, f64)> {
    let w = sigma.inverse()?;
    let prior_prec = 1.0 / (priors.tau_a * priors.tau_a);
    let prec = stats.h * trace_w(&w, &stats.xx(m)) + prior_prec;
    let mean = (trace_w(&w, &stats.dx(m)) + priors.mu_a * prior_prec) / prec;
    Ok((mean, prec.sqrt().recip()))
}

fn hyper_m(stats: &SuffStats, a: f64, sigma: &Cov2, priors: &Priors) -> Result<([f64; 2], Cov2)> {
    let w = sigma.inverse()?;
    let t = stats.n as f64 * stats.h;
    let prior_prec = Cov2::new(1.0 / priors.omega_m[0], 0.0, 1.0 / priors.omega_m[1]);
    let prec = prior_prec.add(&w.scale(a * a * t));
    let omega = prec.inverse()?;
    let ah = a * stats.h;
    let n = stats.n as f64;
    let sum_y = [stats.sum_diff[0] + ah * n * stats.mean_lag[0], stats.sum_diff[1] + ah * n * stats.mean_lag[1]];
    let wy = w.mul_vec(sum_y);
    let pm = prior_prec.mul_vec(priors.mu_m);
    let mean = omega.mul_vec([pm[0] + a * wy[0], pm[1] + a * wy[1]]);
    Ok((mean, omega))
}

fn hyper_sigma(stats: &SuffStats, a: f64, m: [f64; 2], priors: &Priors) -> (Cov2, f64) {
    let rr = if stats.n == 0 { Cov2::new(0.0, 0.0, 0.0) } else { stats.rr(a, m).scale(1.0 / stats.h) };
    (priors.psi.add(&rr), priors.nu + stats.n as f64)
}

/// Conditional posterior `(μ_ca, τ_ca)` of `a`, before truncation at zero.
pub fn posterior_hyper_a(rows: &[[f64; 2]], m: [f64; 2], sigma: &Cov2, priors: &Priors, h: f64) -> Result<(f64, f64)> {
    hyper_a(&SuffStats::new(rows, h), m, sigma, priors)
}

/// Conditional posterior `(μ_cm, Ω_cm)` of `m`, before truncation.
pub fn posterior_hyper_m(rows: &[[f64; 2]], a: f64, sigma: &Cov2, priors: &Priors, h: f64) -> Result<([f64; 2], Cov2)> {
    hyper_m(&SuffStats::new(rows, h), a, sigma, priors)
}

/// Conditional posterior `(Ψ_cΣ, ν_cΣ)`: `Σ⁻¹ ~ W(Ψ_cΣ⁻¹, ν_cΣ)`.
pub fn posterior_hyper_sigma(rows: &[[f64; 2]], a: f64, m: [f64; 2], priors: &Priors, h: f64) -> (Cov2, f64) {
    hyper_sigma(&SuffStats::new(rows, h), a, m, priors)
}

/// Proposal bookkeeping for one block. `proposals = accepted + Σ rejections`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BlockCounter {
    pub proposals: u64,
    pub accepted: u64,
    /// Zero-rate mean negative.
    pub rejected_m: u64,
    /// Short-rate mean under either measure not positive.
    pub rejected_mu: u64,
    /// `a h` outside `(0, 1)`.
    pub rejected_a: u64,
    /// Covariance admits no positive risk-neutral mean reversion.
    pub rejected_sigma: u64,
    /// Longest run of consecutive rejections within one update.
    pub longest_streak: u64,
}

impl BlockCounter {
    fn record(&mut self, verdict: Verdict) {
        self.proposals += 1;
        match verdict {
            Verdict::Accept => self.accepted += 1,
            Verdict::RejectM => self.rejected_m += 1,
            Verdict::RejectMu => self.rejected_mu += 1,
            Verdict::RejectA => self.rejected_a += 1,
            Verdict::RejectSigma => self.rejected_sigma += 1,
        }
    }

    pub fn rejections(&self) -> u64 {
        self.rejected_m + self.rejected_mu + self.rejected_a + self.rejected_sigma
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Counters {
    pub m: BlockCounter,
    pub a: BlockCounter,
    pub sigma: BlockCounter,
}

impl Counters {
    pub fn total_proposals(&self) -> u64 {
        self.m.proposals + self.a.proposals + self.sigma.proposals
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Verdict {
    Accept,
    RejectM,
    RejectMu,
    RejectA,
    RejectSigma,
}

impl Verdict {
    fn label(self) -> &'static str {
        match self {
            Verdict::Accept => "accepted",
            Verdict::RejectM => "zero-rate mean m >= 0",
            Verdict::RejectMu => "short-rate means mu > 0 and mu_q > 0",
            Verdict::RejectA => "mean reversion 0 < a*h < 1",
            Verdict::RejectSigma => "covariance feasibility (kappa_q > 0)",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Draw {
    pub iter: u64,
    pub var: VarParams,
    pub derived: DerivedParams,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Chain {
    pub draws: Vec<Draw>,
    pub iterations: u64,
    pub burn_in: u64,
    pub thin: u64,
    pub seed: u64,
    pub kind: DecompositionKind,
    pub pair: MaturityPair,
    pub h: f64,
    pub counters: Counters,
}

pub const CHAIN_HEADER: [&str; 16] = [
    "iter",
    "a",
    "m1",
    "m2",
    "s11",
    "s21",
    "s22",
    "kappa",
    "kappa_q",
    "mu",
    "mu_q",
    "theta",
    "lambda0",
    "lambda1",
    "sigma2",
    "eta_or_rho",
];

impl Chain {
    pub fn len(&self) -> usize {
        self.draws.len()
    }

    pub fn is_empty(&self) -> bool {
        self.draws.is_empty()
    }

    /// Column-oriented copy with the chain CSV's column names.
    pub fn table(&self) -> ChainTable {
        let rows = self.draws.iter().map(|d| {
            let v = d.var;
            let p = d.derived;
            vec![
                d.iter as f64,
                v.a,
                v.m[0],
                v.m[1],
                v.sigma.s11,
                v.sigma.s21,
                v.sigma.s22,
                p.kappa,
                p.kappa_q,
                p.mu,
                p.mu_q,
                p.theta,
                p.lambda0,
                p.lambda1,
                p.sigma2,
                p.extra.value(),
            ]
        });
        ChainTable::from_rows(CHAIN_HEADER.iter().map(|s| s.to_string()).collect(), rows)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(CHAIN_HEADER)?;
        for d in &self.draws {
            let v = d.var;
            let p = d.derived;
            let fields = [
                v.a,
                v.m[0],
                v.m[1],
                v.sigma.s11,
                v.sigma.s21,
                v.sigma.s22,
                p.kappa,
                p.kappa_q,
                p.mu,
                p.mu_q,
                p.theta,
                p.lambda0,
                p.lambda1,
                p.sigma2,
                p.extra.value(),
            ];
            let mut rec = Vec::with_capacity(16);
            rec.push(d.iter.to_string());
            rec.extend(fields.iter().map(|x| format!("{x}")));
            wtr.write_record(&rec)?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Named numeric columns, as read back from a chain CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainTable {
    names: Vec<String>,
    columns: Vec<Vec<f64>>,
}

impl ChainTable {
    pub fn from_rows(names: Vec<String>, rows: impl IntoIterator<Item = Vec<f64>>) -> Self {
        let mut columns = vec![Vec::new(); names.len()];
        for row in rows {
            for (c, x) in columns.iter_mut().zip(row) {
                c.push(x);
            }
        }
        Self { names, columns }
    }

    pub fn from_columns(names: Vec<String>, columns: Vec<Vec<f64>>) -> Result<Self> {
        if names.len() != columns.len() {
            return Err(Error::invalid("column count does not match names"));
        }
        if columns.windows(2).any(|w| w[0].len() != w[1].len()) {
            return Err(Error::invalid("columns have different lengths"));
        }
        Ok(Self { names, columns })
    }

    pub fn read_csv<R: std::io::Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let names: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
        if names.is_empty() {
            return Err(Error::invalid("chain file has no header"));
        }
        let mut rows = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            if rec.len() != names.len() {
                return Err(Error::invalid(format!("line {}: {} fields, expected {}", i + 2, rec.len(), names.len())));
            }
            let row: Vec<f64> = rec
                .iter()
                .map(|f| f.parse::<f64>().map_err(|_| Error::invalid(format!("line {}: '{f}' is not a number", i + 2))))
                .collect::<Result<_>>()?;
            rows.push(row);
        }
        Ok(Self::from_rows(names, rows))
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn len(&self) -> usize {
        self.columns.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn column(&self, name: &str) -> Result<&[f64]> {
        self.names.iter().position(|n| n == name).map(|i| self.columns[i].as_slice()).ok_or_else(|| {
            Error::invalid(format!("unknown parameter '{name}'; valid names: {}", self.names.join(", ")))
        })
    }
}

/// Current sampler state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct State {
    pub a: f64,
    pub m: [f64; 2],
    pub sigma: Cov2,
}

/// Single-chain Gibbs sampler.
pub struct Sampler {
    stats: SuffStats,
    priors: Priors,
    cfg: GibbsConfig,
    rng: ChaCha8Rng,
    state: State,
    derived: Option<DerivedParams>,
    counters: Counters,
}

impl Sampler {
    pub fn new(rows: &[[f64; 2]], h: f64, priors: Priors, cfg: GibbsConfig) -> Result<Self> {
        priors.validate()?;
        cfg.validate()?;
        if !(h > 0.0) {
            return Err(Error::invalid("step must be positive"));
        }
        if rows.iter().flatten().any(|x| !x.is_finite()) {
            return Err(Error::invalid("rates must be finite"));
        }
        let m = cfg.initial.m.unwrap_or_else(|| {
            let n = rows.len().max(1) as f64;
            let mut s = [0.0; 2];
            for r in rows {
                s[0] += r[0] / n;
                s[1] += r[1] / n;
            }
            s.map(|x| x.max(InitialState::M_FLOOR))
        });
        let state = State { a: cfg.initial.a, m, sigma: cfg.initial.sigma };
        let mut s = Self {
            stats: SuffStats::new(rows, h),
            priors,
            cfg,
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            state,
            derived: None,
            counters: Counters::default(),
        };
        s.derived = match s.check(&state) {
            (Verdict::Accept, d) => d,
            _ => None,
        };
        Ok(s)
    }

    pub fn state(&self) -> State {
        self.state
    }

    pub fn derived(&self) -> Option<DerivedParams> {
        self.derived
    }

    pub fn counters(&self) -> Counters {
        self.counters
    }

    /// Replaces the data while keeping the parameter state.
    pub fn set_data(&mut self, rows: &[[f64; 2]]) {
        self.stats = SuffStats::new(rows, self.stats.h);
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }

    fn check(&self, s: &State) -> (Verdict, Option<DerivedParams>) {
        if s.m[0] < 0.0 || s.m[1] < 0.0 {
            return (Verdict::RejectM, None);
        }
        if !(s.a > 0.0) || !(s.a * self.stats.h < 1.0) {
            return (Verdict::RejectA, None);
        }
        let v = VarParams { a: s.a, m: s.m, sigma: s.sigma };
        match derive_params(&v, self.cfg.pair, self.cfg.kind, self.stats.h) {
            Ok(d) if d.mu > 0.0 && d.mu_q > 0.0 => (Verdict::Accept, Some(d)),
            Ok(_) => (Verdict::RejectMu, None),
            Err(_) => (Verdict::RejectSigma, None),
        }
    }

    /// Blocks drawn while the state is still inadmissible (warm-up from the
    /// initial values) only enforce their own constraint.
    fn own_check(&self, s: &State, block: Block) -> Verdict {
        match block {
            Block::M if s.m[0] < 0.0 || s.m[1] < 0.0 => Verdict::RejectM,
            Block::A if !(s.a > 0.0) || !(s.a * self.stats.h < 1.0) => Verdict::RejectA,
            Block::Sigma => match solve_kappa_q(&s.sigma, self.cfg.pair, self.cfg.kind) {
                Ok(k) if k > 0.0 => Verdict::Accept,
                _ => Verdict::RejectSigma,
            },
            _ => Verdict::Accept,
        }
    }

    fn propose(&mut self, block: Block) -> Result<State> {
        let mut s = self.state;
        match block {
            Block::M => {
                let (mu, omega) = hyper_m(&self.stats, s.a, &s.sigma, &self.priors)?;
                let region = match &self.derived {
                    Some(d) => m_region(d, self.cfg.pair)?,
                    None => ORTHANT.to_vec(),
                };
                let x0 = if self.derived.is_some() { s.m } else { s.m.map(|v| v.max(0.0)) };
                s.m = sample_trunc_normal_2d_in(
                    &mut self.rng,
                    mu,
                    &omega,
                    x0,
                    self.cfg.m_sweeps,
                    self.cfg.exp_threshold,
                    &region,
                );
            }
            Block::A => {
                let (mu, tau) = hyper_a(&self.stats, s.m, &s.sigma, &self.priors)?;
                s.a = sample_trunc_normal_with(&mut self.rng, mu, tau, 0.0, self.cfg.exp_threshold).0;
            }
            Block::Sigma => {
                let (psi, nu) = hyper_sigma(&self.stats, s.a, s.m, &self.priors);
                let precision = sample_wishart(&mut self.rng, &psi.inverse()?, nu)?;
                s.sigma = precision.inverse()?;
            }
        }
        Ok(s)
    }

    fn update(&mut self, block: Block, iter: u64) -> Result<()> {
        let full = self.derived.is_some();
        let mut streak = 0u64;
        loop {
            let proposal = match self.propose(block) {
                Ok(p) => p,
                // numerically singular draw: count as an infeasible proposal
                Err(Error::Singular(_)) => {
                    self.counter(block).record(Verdict::RejectSigma);
                    streak += 1;
                    self.stall_guard(block, streak, iter, Verdict::RejectSigma)?;
                    continue;
                }
                Err(e) => return Err(e),
            };
            let (verdict, derived) =
                if full { self.check(&proposal) } else { (self.own_check(&proposal, block), None) };
            self.counter(block).record(verdict);
            if verdict == Verdict::Accept {
                self.state = proposal;
                self.derived = if full {
                    derived
                } else {
                    match self.check(&proposal) {
                        (Verdict::Accept, d) => d,
                        _ => None,
                    }
                };
                return Ok(());
            }
            streak += 1;
            let c = self.counter(block);
            c.longest_streak = c.longest_streak.max(streak);
            self.stall_guard(block, streak, iter, verdict)?;
        }
    }

    fn stall_guard(&self, block: Block, streak: u64, iter: u64, last: Verdict) -> Result<()> {
        if streak < self.cfg.stall_limit() {
            return Ok(());
        }
        let c = match block {
            Block::M => self.counters.m,
            Block::A => self.counters.a,
            Block::Sigma => self.counters.sigma,
        };
        Err(Error::Stall(format!(
            "{} block rejected {streak} consecutive proposals ({} windows of {}, acceptance rate below {:e}) \
             at iteration {iter}; last failed constraint: {}; \
             block totals: proposals {}, accepted {}, m<0 {}, mu<=0 {}, a out of range {}, sigma infeasible {}; \
             state a = {:e}, m = {:?}, sigma = {:?}",
            block.name(),
            streak / self.cfg.stall_window,
            self.cfg.stall_window,
            self.cfg.stall_rate,
            last.label(),
            c.proposals,
            c.accepted,
            c.rejected_m,
            c.rejected_mu,
            c.rejected_a,
            c.rejected_sigma,
            self.state.a,
            self.state.m,
            self.state.sigma.vech(),
        )))
    }

    fn counter(&mut self, block: Block) -> &mut BlockCounter {
        match block {
            Block::M => &mut self.counters.m,
            Block::A => &mut self.counters.a,
            Block::Sigma => &mut self.counters.sigma,
        }
    }

    /// One full sweep `m → a → Σ`.
    pub fn sweep(&mut self, iter: u64) -> Result<()> {
        self.update(Block::M, iter)?;
        self.update(Block::A, iter)?;
        self.update(Block::Sigma, iter)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Block {
    M,
    A,
    Sigma,
}

impl Block {
    fn name(self) -> &'static str {
        match self {
            Block::M => "m",
            Block::A => "a",
            Block::Sigma => "sigma",
        }
    }
}

/// Admissible set for `m` given the current `a` and `Σ`: both `μ` and `μ̃`
/// are affine in `m`, so it is the positive orthant cut by two half-planes.
fn m_region(d: &DerivedParams, pair: MaturityPair) -> Result<Vec<LinearConstraint>> {
    let f = |m: [f64; 2]| theta_mu_from_means(m, d.kappa_q, d.omega2, pair);
    let (t0, u0) = f([0.0, 0.0])?;
    let (t1, u1) = f([1.0, 0.0])?;
    let (t2, u2) = f([0.0, 1.0])?;
    let shift = d.sigma2 / (2.0 * d.kappa_q * d.kappa_q);
    let mut region = ORTHANT.to_vec();
    region.push(([u1 - u0, u2 - u0], u0));
    region.push(([t1 - t0, t2 - t0], t0 + shift));
    Ok(region)
}

/// Runs one chain.
pub fn run_chain(rows: &[[f64; 2]], h: f64, priors: &Priors, cfg: &GibbsConfig) -> Result<Chain> {
    let mut sampler = Sampler::new(rows, h, *priors, *cfg)?;
    let mut draws = Vec::with_capacity(cfg.stored_draws() as usize);
    for iter in 1..=cfg.iterations {
        sampler.sweep(iter)?;
        if iter > cfg.burn_in && (iter - cfg.burn_in).is_multiple_of(cfg.thin) {
            let derived = sampler.derived.ok_or_else(|| {
                Error::Stall(format!(
                    "state still inadmissible at iteration {iter}, the first stored draw; \
                     increase burn-in or change the initial values (a = {:e}, m = {:?}, sigma = {:?})",
                    sampler.state.a,
                    sampler.state.m,
                    sampler.state.sigma.vech()
                ))
            })?;
            let s = sampler.state;
            draws.push(Draw { iter, var: VarParams { a: s.a, m: s.m, sigma: s.sigma }, derived });
        }
    }
    Ok(Chain {
        draws,
        iterations: cfg.iterations,
        burn_in: cfg.burn_in,
        thin: cfg.thin,
        seed: cfg.seed,
        kind: cfg.kind,
        pair: cfg.pair,
        h,
        counters: sampler.counters,
    })
}

/// Runs independent chains for several seeds in parallel, in seed order.
pub fn run_chains(rows: &[[f64; 2]], h: f64, priors: &Priors, cfg: &GibbsConfig, seeds: &[u64]) -> Vec<Result<Chain>> {
    seeds.par_iter().map(|&seed| run_chain(rows, h, priors, &GibbsConfig { seed, ..*cfg })).collect()
}
