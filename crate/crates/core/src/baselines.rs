//! Nelson–Siegel and Smith–Wilson point curves for comparison with the
//! Bayesian fan. Both are deterministic.

use nalgebra::{DMatrix, DVector};

use crate::affine::b_unchecked;
use crate::curves::CurveSnapshot;
use crate::{Error, Result};

pub const NS_GRID_POINTS: usize = 200;
pub const NS_TAU_RANGE: (f64, f64) = (0.1, 30.0);

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NsParams {
    pub beta0: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub tau: f64,
    /// Residual sum of squares at the optimum.
    pub rss: f64,
    /// False when the profile over `τ` is flat, in which case `tau` is just
    /// the first grid node attaining the minimum.
    pub tau_identified: bool,
}

impl NsParams {
    pub fn zero(&self, s: f64) -> f64 {
        let (l1, l2) = ns_loadings(s, self.tau);
        self.beta0 + self.beta1 * l1 + self.beta2 * l2
    }
}

/// Slope and curvature loadings at maturity `t`.
pub fn ns_loadings(t: f64, tau: f64) -> (f64, f64) {
    let l1 = b_unchecked(1.0 / tau, t);
    (l1, l1 - (-t / tau).exp())
}

/// Exact inner least squares for the betas at fixed `τ`.
fn ns_inner(points: &[(f64, f64)], tau: f64) -> ([f64; 3], f64) {
    let n = points.len();
    let x = DMatrix::from_fn(n, 3, |i, j| {
        let (l1, l2) = ns_loadings(points[i].0, tau);
        [1.0, l1, l2][j]
    });
    let y = DVector::from_iterator(n, points.iter().map(|p| p.1));
    let beta = x.clone().svd(true, true).solve(&y, 1e-13).unwrap_or_else(|_| DVector::zeros(3));
    let rss = (&x * &beta - &y).norm_squared();
    ([beta[0], beta[1], beta[2]], rss)
}

/// Profile least-squares fit of the four-parameter curve to the points at or
/// below `max_maturity`.
pub fn ns_fit(curve: &CurveSnapshot, max_maturity: f64) -> Result<NsParams> {
    let points = curve.up_to(max_maturity);
    if points.len() < 4 {
        return Err(Error::invalid(format!(
            "Nelson–Siegel needs at least 4 points at or below {max_maturity}y, got {}",
            points.len()
        )));
    }
    let (lo, hi) = (NS_TAU_RANGE.0.ln(), NS_TAU_RANGE.1.ln());
    let grid: Vec<f64> = (0..NS_GRID_POINTS).map(|i| lo + (hi - lo) * i as f64 / (NS_GRID_POINTS - 1) as f64).collect();
    let profile: Vec<f64> = grid.iter().map(|&g| ns_inner(&points, g.exp()).1).collect();
    let (best, &rss_best) = profile.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1)).expect("non-empty grid");
    let rss_max = profile.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let scale: f64 = points.iter().map(|p| p.1 * p.1).sum::<f64>().max(1e-300);
    let identified = rss_max - rss_best > 1e-14 * scale;

    let mut log_tau = grid[best];
    if identified {
        // golden section on log τ between the neighbouring nodes
        let f = |g: f64| ns_inner(&points, g.exp()).1;
        let mut a = grid[best.saturating_sub(1)];
        let mut b = grid[(best + 1).min(NS_GRID_POINTS - 1)];
        let r = 0.5 * (5f64.sqrt() - 1.0);
        let mut c = b - r * (b - a);
        let mut d = a + r * (b - a);
        let (mut fc, mut fd) = (f(c), f(d));
        while b - a > 1e-12 {
            if fc < fd {
                b = d;
                d = c;
                fd = fc;
                c = b - r * (b - a);
                fc = f(c);
            } else {
                a = c;
                c = d;
                fc = fd;
                d = a + r * (b - a);
                fd = f(d);
            }
        }
        let g = 0.5 * (a + b);
        if f(g) <= rss_best {
            log_tau = g;
        }
    }
    let tau = log_tau.exp();
    let (beta, rss) = ns_inner(&points, tau);
    Ok(NsParams { beta0: beta[0], beta1: beta[1], beta2: beta[2], tau, rss, tau_identified: identified })
}

pub fn ns_extrapolate(p: &NsParams, grid: &[f64]) -> Result<Vec<f64>> {
    if let Some(&s) = grid.iter().find(|&&s| !(s > 0.0)) {
        return Err(Error::domain(format!("maturity must be positive, got {s}")));
    }
    Ok(grid.iter().map(|&s| p.zero(s)).collect())
}

/// Which forward rate must reach the UFR at the convergence maturity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ForwardKind {
    #[default]
    OneYear,
    Instantaneous,
}

/// Smith–Wilson settings. Rates are continuously compounded.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SwConfig {
    pub ufr: f64,
    pub llp: f64,
    pub convergence: f64,
    pub tolerance: f64,
    pub forward: ForwardKind,
}

impl Default for SwConfig {
    fn default() -> Self {
        Self { ufr: 0.042, llp: 20.0, convergence: 60.0, tolerance: 3e-4, forward: ForwardKind::OneYear }
    }
}

impl SwConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.convergence > self.llp) || !(self.llp > 0.0) {
            return Err(Error::invalid(format!(
                "convergence maturity {} must exceed the last liquid point {}",
                self.convergence, self.llp
            )));
        }
        if !(self.tolerance > 0.0) || !self.ufr.is_finite() {
            return Err(Error::invalid("tolerance must be positive and the UFR finite"));
        }
        Ok(())
    }
}

pub const SW_ALPHA_RANGE: (f64, f64) = (1e-4, 1.0);

/// Fitted Smith–Wilson discount function.
#[derive(Debug, Clone, PartialEq)]
pub struct SwCurve {
    pub cfg: SwConfig,
    pub alpha: f64,
    pub maturities: Vec<f64>,
    pub zeta: Vec<f64>,
    /// Largest absolute repricing error over the inputs.
    pub max_pricing_error: f64,
    /// `|forward(convergence) − ufr|` at the chosen `α`.
    pub forward_gap: f64,
}

/// Wilson kernel and its derivative in `t`.
fn wilson(t: f64, u: f64, alpha: f64, omega: f64) -> (f64, f64) {
    let lo = t.min(u);
    let hi = t.max(u);
    let e = (-omega * (t + u)).exp();
    let w = e * (alpha * lo - (-alpha * hi).exp() * (alpha * lo).sinh());
    let inner = if t >= u {
        alpha * (-alpha * t).exp() * (alpha * u).sinh()
    } else {
        alpha - alpha * (-alpha * u).exp() * (alpha * t).cosh()
    };
    (w, -omega * w + e * inner)
}

impl SwCurve {
    pub fn discount(&self, t: f64) -> f64 {
        self.discount_and_slope(t).0
    }

    fn discount_and_slope(&self, t: f64) -> (f64, f64) {
        let w = self.cfg.ufr;
        let base = (-w * t).exp();
        let mut p = base;
        let mut dp = -w * base;
        for (&u, &z) in self.maturities.iter().zip(&self.zeta) {
            let (k, dk) = wilson(t, u, self.alpha, w);
            p += z * k;
            dp += z * dk;
        }
        (p, dp)
    }

    /// Convergence-criterion forward at `t`.
    pub fn forward(&self, t: f64) -> f64 {
        match self.cfg.forward {
            ForwardKind::OneYear => (self.discount(t) / self.discount(t + 1.0)).ln(),
            ForwardKind::Instantaneous => {
                let (p, dp) = self.discount_and_slope(t);
                -dp / p
            }
        }
    }
}

fn sw_solve(points: &[(f64, f64)], cfg: SwConfig, alpha: f64) -> Result<SwCurve> {
    let n = points.len();
    let w = cfg.ufr;
    let kernel = DMatrix::from_fn(n, n, |i, j| wilson(points[i].0, points[j].0, alpha, w).0);
    let rhs = DVector::from_iterator(n, points.iter().map(|&(u, z)| (-z * u).exp() - (-w * u).exp()));
    let zeta = kernel
        .clone()
        .lu()
        .solve(&rhs)
        .filter(|z| z.iter().all(|v| v.is_finite()))
        .ok_or_else(|| Error::Singular(format!("Smith–Wilson kernel is singular at α = {alpha}")))?;
    let mut curve = SwCurve {
        cfg,
        alpha,
        maturities: points.iter().map(|p| p.0).collect(),
        zeta: zeta.iter().copied().collect(),
        max_pricing_error: 0.0,
        forward_gap: 0.0,
    };
    curve.max_pricing_error =
        points.iter().map(|&(u, z)| (curve.discount(u) - (-z * u).exp()).abs()).fold(0.0, f64::max);
    curve.forward_gap = (curve.forward(cfg.convergence) - w).abs();
    Ok(curve)
}

/// Fits the discount function to the points at or below the last liquid
/// point, taking the smallest `α` that brings the forward at the convergence
/// maturity within tolerance of the UFR.
pub fn sw_fit(curve: &CurveSnapshot, cfg: SwConfig) -> Result<SwCurve> {
    cfg.validate()?;
    let points = curve.up_to(cfg.llp);
    if points.is_empty() {
        return Err(Error::invalid(format!("no liquid points at or below {}y", cfg.llp)));
    }
    let (mut lo, mut hi) = SW_ALPHA_RANGE;
    let fit_lo = sw_solve(&points, cfg, lo)?;
    if fit_lo.forward_gap <= cfg.tolerance {
        return Ok(fit_lo);
    }
    let mut best = sw_solve(&points, cfg, hi)?;
    if best.forward_gap > cfg.tolerance {
        return Err(Error::NoConvergence(format!(
            "no α in [{lo}, {hi}] meets the {} tolerance; forward gap {} at α = {lo}, {} at α = {hi}",
            cfg.tolerance, fit_lo.forward_gap, best.forward_gap
        )));
    }
    while hi - lo > 1e-10 {
        let mid = 0.5 * (lo + hi);
        let fit = sw_solve(&points, cfg, mid)?;
        if fit.forward_gap <= cfg.tolerance {
            hi = mid;
            best = fit;
        } else {
            lo = mid;
        }
    }
    Ok(best)
}

/// Continuously compounded zero rate of the fitted curve.
pub fn sw_zero(curve: &SwCurve, s: f64) -> Result<f64> {
    if !(s > 0.0) {
        return Err(Error::domain(format!("maturity must be positive, got {s}")));
    }
    let p = curve.discount(s);
    if !(p > 0.0) {
        return Err(Error::domain(format!("extrapolation breakdown: discount factor {p} at {s}y is not positive")));
    }
    Ok(-p.ln() / s)
}
