//! MCMC convergence checks: CUSUM paths, Geweke's Z and autocorrelations.

use std::io::Write;

use crate::gibbs::ChainTable;
use crate::{Error, Result};

pub const GEWEKE_CRITICAL: f64 = 1.96;
pub const MIN_SEGMENT: usize = 50;

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Standardized running mean `CS_t = (mean(x₁..x_t) − m)/s` with the
/// population standard deviation `s`.
pub fn cusum(samples: &[f64]) -> Result<Vec<f64>> {
    if samples.len() < 2 {
        return Err(Error::invalid("CUSUM needs at least two samples"));
    }
    let m = mean(samples);
    let s = (samples.iter().map(|x| (x - m).powi(2)).sum::<f64>() / samples.len() as f64).sqrt();
    if !(s > 0.0) {
        return Err(Error::invalid("CUSUM undefined for a constant sample"));
    }
    let mut acc = 0.0;
    Ok(samples
        .iter()
        .enumerate()
        .map(|(t, x)| {
            // summing deviations keeps CS_n at zero up to round-off
            acc += x - m;
            acc / ((t + 1) as f64 * s)
        })
        .collect())
}

/// Numerical standard error of the mean by non-overlapping batch means with
/// `⌊√n⌋` batches.
pub fn batch_means_nse(samples: &[f64]) -> f64 {
    let n = samples.len();
    let b = ((n as f64).sqrt().floor() as usize).max(2);
    let k = n / b;
    let means: Vec<f64> = (0..b).map(|i| mean(&samples[i * k..(i + 1) * k])).collect();
    let mb = mean(&means);
    let var = means.iter().map(|x| (x - mb).powi(2)).sum::<f64>() / (b - 1) as f64;
    (var / b as f64).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Geweke {
    pub z: f64,
    pub reject: bool,
}

/// Compares the mean of the first `frac_a` of the draws with the mean of
/// the last `frac_b`.
pub fn geweke_z(samples: &[f64], frac_a: f64, frac_b: f64) -> Result<Geweke> {
    if !(frac_a > 0.0 && frac_b > 0.0 && frac_a + frac_b <= 1.0) {
        return Err(Error::invalid(format!(
            "Geweke fractions ({frac_a}, {frac_b}) must be positive with sum at most 1"
        )));
    }
    let n = samples.len();
    let na = (frac_a * n as f64).floor() as usize;
    let nb = (frac_b * n as f64).floor() as usize;
    if na < MIN_SEGMENT || nb < MIN_SEGMENT {
        return Err(Error::invalid(format!(
            "Geweke segments of {na} and {nb} draws are below the minimum of {MIN_SEGMENT}"
        )));
    }
    let a = &samples[..na];
    let b = &samples[n - nb..];
    let se2 = batch_means_nse(a).powi(2) + batch_means_nse(b).powi(2);
    let diff = mean(a) - mean(b);
    let z = if se2 > 0.0 {
        diff / se2.sqrt()
    } else if diff == 0.0 {
        0.0
    } else {
        diff.signum() * f64::INFINITY
    };
    Ok(Geweke { z, reject: z.abs() > GEWEKE_CRITICAL })
}

/// Biased sample autocorrelations at lags `1..=max_lag`.
pub fn acf(samples: &[f64], max_lag: usize) -> Result<Vec<f64>> {
    let n = samples.len();
    if max_lag < 1 || n <= max_lag {
        return Err(Error::invalid(format!("ACF needs n > L >= 1 (n = {n}, L = {max_lag})")));
    }
    let m = mean(samples);
    let c0: f64 = samples.iter().map(|x| (x - m).powi(2)).sum();
    if !(c0 > 0.0) {
        return Err(Error::invalid("ACF undefined for a constant sample"));
    }
    Ok((1..=max_lag)
        .map(|k| samples[..n - k].iter().zip(&samples[k..]).map(|(x, y)| (x - m) * (y - m)).sum::<f64>() / c0)
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticsOptions {
    pub frac_a: f64,
    pub frac_b: f64,
    pub max_lag: usize,
    /// Keep every k-th CUSUM value in the report.
    pub cusum_stride: usize,
}

impl Default for DiagnosticsOptions {
    fn default() -> Self {
        Self { frac_a: 0.1, frac_b: 0.5, max_lag: 100, cusum_stride: 1 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamDiagnostics {
    pub name: String,
    pub geweke: Geweke,
    /// Mean and variance of `|CS_t|` over t.
    pub cusum_abs_mean: f64,
    pub cusum_abs_var: f64,
    pub cusum: Vec<f64>,
    pub acf: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticsReport {
    pub params: Vec<ParamDiagnostics>,
    pub max_lag: usize,
    pub cusum_stride: usize,
}

impl DiagnosticsReport {
    pub fn any_reject(&self) -> bool {
        self.params.iter().any(|p| p.geweke.reject)
    }

    pub fn verdict(&self) -> String {
        let rejected: Vec<&str> = self.params.iter().filter(|p| p.geweke.reject).map(|p| p.name.as_str()).collect();
        if rejected.is_empty() {
            format!("converged: no Geweke rejection at 5% across {} parameters", self.params.len())
        } else {
            format!("not converged: Geweke rejects at 5% for {}", rejected.join(", "))
        }
    }

    pub fn write_summary_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(["parameter", "geweke_z", "geweke_reject", "cusum_abs_mean", "cusum_abs_var"])?;
        for p in &self.params {
            wtr.write_record([
                p.name.clone(),
                format!("{}", p.geweke.z),
                (p.geweke.reject as u8).to_string(),
                format!("{}", p.cusum_abs_mean),
                format!("{}", p.cusum_abs_var),
            ])?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn write_acf_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        let mut header = vec!["lag".to_string()];
        header.extend(self.params.iter().map(|p| p.name.clone()));
        wtr.write_record(&header)?;
        for k in 0..self.max_lag {
            let mut rec = vec![(k + 1).to_string()];
            rec.extend(self.params.iter().map(|p| format!("{}", p.acf[k])));
            wtr.write_record(&rec)?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn write_cusum_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        let mut header = vec!["t".to_string()];
        header.extend(self.params.iter().map(|p| p.name.clone()));
        wtr.write_record(&header)?;
        let len = self.params.first().map_or(0, |p| p.cusum.len());
        for i in 0..len {
            let mut rec = vec![(i * self.cusum_stride + 1).to_string()];
            rec.extend(self.params.iter().map(|p| format!("{}", p.cusum[i])));
            wtr.write_record(&rec)?;
        }
        wtr.flush()?;
        Ok(())
    }
}

pub fn diagnose_samples(name: &str, samples: &[f64], opts: &DiagnosticsOptions) -> Result<ParamDiagnostics> {
    let geweke = geweke_z(samples, opts.frac_a, opts.frac_b)?;
    let cs = cusum(samples)?;
    let abs: Vec<f64> = cs.iter().map(|x| x.abs()).collect();
    let m = mean(&abs);
    let v = abs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / abs.len() as f64;
    let stride = opts.cusum_stride.max(1);
    Ok(ParamDiagnostics {
        name: name.to_string(),
        geweke,
        cusum_abs_mean: m,
        cusum_abs_var: v,
        cusum: cs.into_iter().step_by(stride).collect(),
        acf: acf(samples, opts.max_lag)?,
    })
}

/// Runs all checks on the named chain columns.
pub fn diagnose(table: &ChainTable, names: &[&str], opts: &DiagnosticsOptions) -> Result<DiagnosticsReport> {
    let params = names
        .iter()
        .map(|&n| {
            diagnose_samples(n, table.column(n)?, opts).map_err(|e| Error::invalid(format!("parameter {n}: {e}")))
        })
        .collect::<Result<_>>()?;
    Ok(DiagnosticsReport { params, max_lag: opts.max_lag, cusum_stride: opts.cusum_stride.max(1) })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cusum_hand_example() {
        let cs = cusum(&[-1.0, 1.0]).unwrap();
        assert_eq!(cs, vec![-1.0, 0.0]);
        assert!(cusum(&[2.0; 10]).is_err());
    }

    #[test]
    fn cusum_is_affine_invariant() {
        let x: Vec<f64> = (0..500).map(|i| ((i * 37 % 101) as f64).sin()).collect();
        let y: Vec<f64> = x.iter().map(|v| 3.0 * v + 7.0).collect();
        let (a, b) = (cusum(&x).unwrap(), cusum(&y).unwrap());
        for (p, q) in a.iter().zip(&b) {
            assert!((p - q).abs() < 1e-12);
        }
        assert!(a.last().unwrap().abs() < 1e-12);
    }

    #[test]
    fn alternating_sequence_has_negative_acf() {
        let x: Vec<f64> = (0..1000).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let r = acf(&x, 3).unwrap();
        assert!((r[0] + 1.0).abs() < 0.01);
        assert!(acf(&x, 1000).is_err());
    }

    #[test]
    fn drifting_chain_rejects() {
        let x: Vec<f64> =
            (0..10_000).map(|i| if i < 5000 { 0.0 } else { 1.0 } + 0.01 * ((i as f64) * 0.7).sin()).collect();
        let g = geweke_z(&x, 0.1, 0.5).unwrap();
        assert!(g.z.abs() > 10.0 && g.reject);
        assert!(geweke_z(&x[..400], 0.1, 0.5).is_err());
        assert!(geweke_z(&x, 0.6, 0.5).is_err());
    }

    #[test]
    fn reversal_flips_numerator() {
        // segments of 45² draws split into whole batches either way round
        let x: Vec<f64> = (0..4050).map(|i| ((i * 7919 % 1000) as f64) / 1000.0 + i as f64 * 1e-4).collect();
        let rev: Vec<f64> = x.iter().rev().copied().collect();
        let g = geweke_z(&x, 0.5, 0.5).unwrap();
        let h = geweke_z(&rev, 0.5, 0.5).unwrap();
        assert!(g.z * h.z < 0.0);
        assert!((g.z + h.z).abs() < 1e-9 * g.z.abs());
    }
}
