//! Oracles shared by the property suite and the acceptance harness.
#![allow(dead_code)]

use vasicek_core::{Cov2, Extra, MaturityPair, VarParams};

/// VAR parameters generated by a structural set, written out from the model
/// equations without going through the library's inverse.
#[allow(clippy::too_many_arguments)]
pub fn forward_map(
    kappa: f64,
    kappa_q: f64,
    mu: f64,
    theta: f64,
    sigma2: f64,
    extra: Extra,
    pair: MaturityPair,
    h: f64,
) -> VarParams {
    let b = |t: f64| (1.0 - (-kappa_q * t).exp()) / (kappa_q * t);
    let (t1, t2) = (pair.short(), pair.long());
    let (b1, b2) = (b(t1), b(t2));
    let omega2 = sigma2 / (2.0 * kappa_q);
    let m = [
        theta + (mu - theta) * b1 + 0.5 * t1 * omega2 * b1 * b1,
        theta + (mu - theta) * b2 + 0.5 * t2 * omega2 * b2 * b2,
    ];
    let cont = match extra {
        Extra::Eta(eta) => [sigma2 * b1 * b1 + eta, sigma2 * b1 * b2, sigma2 * b2 * b2 + eta],
        Extra::Rho(rho) => [sigma2 * b1 * b1, rho * sigma2 * b1 * b2, sigma2 * b2 * b2],
    };
    // variance of an exact OU step per unit time, relative to the instantaneous rate
    let f = (1.0 - (-2.0 * kappa * h).exp()) / (2.0 * kappa * h);
    VarParams { a: (1.0 - (-kappa * h).exp()) / h, m, sigma: Cov2::new(cont[0] * f, cont[1] * f, cont[2] * f) }
}

pub fn brute_force_hpd_width(x: &[f64], mass: f64) -> f64 {
    let k = (mass * x.len() as f64).ceil() as usize;
    let mut best = f64::INFINITY;
    for &lo in x {
        for &hi in x {
            if hi >= lo && hi - lo < best && x.iter().filter(|&&v| v >= lo && v <= hi).count() >= k {
                best = hi - lo;
            }
        }
    }
    best
}
