//! Posterior summaries, densities and the extrapolation fan.

use std::io::Write;

use chrono::NaiveDate;
use rayon::prelude::*;

use crate::affine::extrapolate_zero;
use crate::curves::CurveSnapshot;
use crate::gibbs::ChainTable;
use crate::{Error, Result};

pub const MIN_SUMMARY_SAMPLES: usize = 100;
pub const MIN_DENSITY_SAMPLES: usize = 1000;
pub const SUMMARY_HEADER: [&str; 7] = ["parameter", "mean", "hpd_lo", "hpd_hi", "ci_lo", "ci_hi", "sd"];
pub const FAN_HEADER: [&str; 6] = ["s", "mean", "hpd_lo", "hpd_hi", "ci_lo", "ci_hi"];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntervalSummary {
    pub mean: f64,
    pub sd: f64,
    pub hpd95: (f64, f64),
    pub ci95: (f64, f64),
    pub n: usize,
}

impl IntervalSummary {
    /// Degenerate summary of a known value.
    pub fn point(x: f64) -> Self {
        Self { mean: x, sd: 0.0, hpd95: (x, x), ci95: (x, x), n: 1 }
    }
}

/// Type-7 (linear interpolation) quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    let pos = p.clamp(0.0, 1.0) * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    let frac = pos - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

/// Shortest window containing `⌈mass·n⌉` sorted samples.
pub fn hpd_sorted(sorted: &[f64], mass: f64) -> (f64, f64) {
    let n = sorted.len();
    let k = ((mass * n as f64).ceil() as usize).clamp(1, n);
    let mut best = 0;
    let mut width = f64::INFINITY;
    for i in 0..=n - k {
        let w = sorted[i + k - 1] - sorted[i];
        if w < width {
            width = w;
            best = i;
        }
    }
    (sorted[best], sorted[best + k - 1])
}

pub fn summarize(samples: &[f64]) -> Result<IntervalSummary> {
    if samples.len() < MIN_SUMMARY_SAMPLES {
        return Err(Error::invalid(format!("need at least {MIN_SUMMARY_SAMPLES} samples, got {}", samples.len())));
    }
    if samples.iter().any(|x| !x.is_finite()) {
        return Err(Error::invalid("samples must be finite"));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    // shifting by the first draw keeps constant samples exact
    let x0 = samples[0];
    let mean = x0 + samples.iter().map(|x| x - x0).sum::<f64>() / n;
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok(IntervalSummary {
        mean,
        sd: var.sqrt(),
        hpd95: hpd_sorted(&sorted, 0.95),
        ci95: (quantile_sorted(&sorted, 0.025), quantile_sorted(&sorted, 0.975)),
        n: samples.len(),
    })
}

/// Samples with the `k` smallest values removed, for display of heavy
/// left tails.
pub fn trim_lowest(samples: &[f64], k: usize) -> Vec<f64> {
    if k == 0 {
        return samples.to_vec();
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let cut = sorted[k.min(sorted.len() - 1)];
    // keep original order; ties at the cut are broken by position
    let mut below = sorted[..k.min(sorted.len())].iter().filter(|&&x| x == cut).count();
    samples
        .iter()
        .copied()
        .filter(|&x| {
            if x < cut {
                false
            } else if x == cut && below > 0 {
                below -= 1;
                false
            } else {
                true
            }
        })
        .collect()
}

pub fn write_summary_csv<W: Write>(writer: W, rows: &[(String, IntervalSummary)]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(SUMMARY_HEADER)?;
    for (name, s) in rows {
        wtr.write_record([
            name.clone(),
            format!("{}", s.mean),
            format!("{}", s.hpd95.0),
            format!("{}", s.hpd95.1),
            format!("{}", s.ci95.0),
            format!("{}", s.ci95.1),
            format!("{}", s.sd),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

/// Extrapolated zero-rate bands anchored at one observed rate.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveFan {
    pub anchor_date: NaiveDate,
    pub tau: f64,
    pub z_tau: f64,
    pub points: Vec<(f64, IntervalSummary)>,
    /// Draws dropped because `κ̃ = 0` leaves `θ` undefined.
    pub excluded: usize,
}

/// Integer maturities from `tau` up to `max`.
pub fn maturity_grid(tau: f64, max: f64) -> Vec<f64> {
    let mut out = vec![tau];
    let mut s = tau.floor() + 1.0;
    while s <= max + 1e-9 {
        out.push(s);
        s += 1.0;
    }
    out
}

/// Maps every stored draw through the extrapolation formula and summarizes
/// per maturity.
pub fn fan(table: &ChainTable, anchor: &CurveSnapshot, tau: f64, grid: &[f64]) -> Result<CurveFan> {
    if table.is_empty() {
        return Err(Error::invalid("chain is empty"));
    }
    let z_tau = anchor.rate_at(tau)?;
    if let Some(&s) = grid.iter().find(|&&s| s < tau) {
        return Err(Error::domain(format!("fan grid point {s} lies below the anchor {tau}")));
    }
    let kq = table.column("kappa_q")?;
    let theta = table.column("theta")?;
    let sigma2 = table.column("sigma2")?;
    let draws: Vec<(f64, f64, f64)> = kq
        .iter()
        .zip(theta)
        .zip(sigma2)
        .filter(|((k, _), _)| **k > 0.0)
        .map(|((&k, &t), &s2)| (k, t, s2 / (2.0 * k)))
        .collect();
    let excluded = table.len() - draws.len();
    let points = grid
        .par_iter()
        .map(|&s| {
            if s == tau {
                return Ok((s, IntervalSummary { n: draws.len(), ..IntervalSummary::point(z_tau) }));
            }
            let z: Vec<f64> =
                draws.iter().map(|&(k, t, w)| extrapolate_zero(z_tau, tau, s, k, t, w)).collect::<Result<_>>()?;
            Ok((s, summarize(&z)?))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CurveFan { anchor_date: anchor.date, tau, z_tau, points, excluded })
}

pub fn write_fan_csv<W: Write>(writer: W, points: &[(f64, IntervalSummary)]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(FAN_HEADER)?;
    for (s, p) in points {
        wtr.write_record([
            format!("{s}"),
            format!("{}", p.mean),
            format!("{}", p.hpd95.0),
            format!("{}", p.hpd95.1),
            format!("{}", p.ci95.0),
            format!("{}", p.ci95.1),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

/// Histogram density on explicit bin edges.
#[derive(Debug, Clone, PartialEq)]
pub struct Density {
    pub edges: Vec<f64>,
    /// Density per bin; `Σ values·width = 1` over the in-range samples.
    pub values: Vec<f64>,
    /// Samples outside the edges.
    pub outside: usize,
    /// Range of all samples, before any trimming.
    pub full_range: (f64, f64),
    pub trimmed: usize,
}

impl Density {
    pub fn centers(&self) -> Vec<f64> {
        self.edges.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(["bin_lo", "bin_hi", "density"])?;
        for (w, v) in self.edges.windows(2).zip(&self.values) {
            wtr.write_record([format!("{}", w[0]), format!("{}", w[1]), format!("{v}")])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Density on the given bin edges (strictly increasing, last bin closed).
pub fn density(samples: &[f64], edges: &[f64]) -> Result<Density> {
    if samples.len() < MIN_DENSITY_SAMPLES {
        return Err(Error::invalid(format!(
            "need at least {MIN_DENSITY_SAMPLES} samples for a density, got {}",
            samples.len()
        )));
    }
    if edges.len() < 2 || edges.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::invalid("density edges must be strictly increasing"));
    }
    let nb = edges.len() - 1;
    let mut counts = vec![0usize; nb];
    let mut outside = 0;
    let (lo, hi) = (edges[0], edges[nb]);
    for &x in samples {
        if !(x >= lo && x <= hi) {
            outside += 1;
            continue;
        }
        let i = edges.partition_point(|&e| e <= x).saturating_sub(1).min(nb - 1);
        counts[i] += 1;
    }
    let inside = (samples.len() - outside) as f64;
    let values = counts
        .iter()
        .zip(edges.windows(2))
        .map(|(&c, w)| if inside > 0.0 { c as f64 / (inside * (w[1] - w[0])) } else { 0.0 })
        .collect();
    let full_range = samples.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
    Ok(Density { edges: edges.to_vec(), values, outside, full_range, trimmed: 0 })
}

/// Density on `bins` equal bins spanning the samples left after dropping
/// the `trim` smallest.
pub fn density_auto(samples: &[f64], bins: usize, trim: usize) -> Result<Density> {
    if bins < 1 {
        return Err(Error::invalid("need at least one bin"));
    }
    if trim >= samples.len() {
        return Err(Error::invalid("trimming removes every sample"));
    }
    let kept = trim_lowest(samples, trim);
    let (lo, hi) = kept.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
    let (lo, hi) = if hi > lo { (lo, hi) } else { (lo - 0.5, hi + 0.5) };
    let edges: Vec<f64> = (0..=bins).map(|i| lo + (hi - lo) * i as f64 / bins as f64).collect();
    let mut d = density(&kept, &edges)?;
    d.full_range = samples.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
    d.trimmed = trim;
    Ok(d)
}

/// `(x, y)` pairs of two chain columns split into `x < split` and
/// `x ≥ split`.
pub type ScatterSets = (Vec<(f64, f64)>, Vec<(f64, f64)>);

pub fn scatter_export(table: &ChainTable, x: &str, y: &str, split: f64) -> Result<ScatterSets> {
    let xs = table.column(x)?;
    let ys = table.column(y)?;
    if xs.is_empty() {
        return Err(Error::invalid("chain is empty"));
    }
    Ok(xs.iter().copied().zip(ys.iter().copied()).partition(|p| p.0 < split))
}

pub fn write_scatter_csv<W: Write>(writer: W, x: &str, y: &str, sets: &ScatterSets) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(["set", x, y])?;
    for (label, set) in [("low", &sets.0), ("high", &sets.1)] {
        for (a, b) in set {
            wtr.write_record([label.to_string(), format!("{a}"), format!("{b}")])?;
        }
    }
    wtr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_sample_has_zero_width() {
        let s = summarize(&[0.3; 200]).unwrap();
        assert_eq!(s.sd, 0.0);
        assert_eq!(s.hpd95, (0.3, 0.3));
        assert_eq!(s.ci95, (0.3, 0.3));
        assert!(summarize(&[1.0; 99]).is_err());
    }

    #[test]
    fn quantiles_follow_linear_interpolation() {
        let v: Vec<f64> = (0..=100).map(f64::from).collect();
        assert_eq!(quantile_sorted(&v, 0.025), 2.5);
        assert_eq!(quantile_sorted(&v, 0.975), 97.5);
    }

    #[test]
    fn two_point_density_occupies_two_bins() {
        let mut s = vec![0.0; 600];
        s.extend(vec![1.0; 600]);
        let d = density_auto(&s, 10, 0).unwrap();
        assert_eq!(d.values.iter().filter(|&&v| v > 0.0).count(), 2);
        let mass: f64 = d.values.iter().zip(d.edges.windows(2)).map(|(v, w)| v * (w[1] - w[0])).sum();
        assert!((mass - 1.0).abs() < 1e-12);
    }

    #[test]
    fn trimming_drops_the_smallest() {
        let s = [5.0, -100.0, 3.0, -50.0, 4.0];
        assert_eq!(trim_lowest(&s, 2), vec![5.0, 3.0, 4.0]);
        assert_eq!(trim_lowest(&[1.0, 1.0, 1.0, 2.0], 2), vec![1.0, 2.0]);
    }

    #[test]
    fn scatter_partitions_and_validates_names() {
        let names = vec!["kappa_q".to_string(), "theta".to_string()];
        let t = ChainTable::from_rows(names.clone(), (0..10).map(|i| vec![i as f64, -(i as f64)]));
        let (lo, hi) = scatter_export(&t, "kappa_q", "theta", 4.5).unwrap();
        assert_eq!((lo.len(), hi.len()), (5, 5));
        let err = scatter_export(&t, "kappa", "theta", 0.0).unwrap_err();
        assert!(err.to_string().contains("kappa_q, theta"));
        let empty = ChainTable::from_rows(names, Vec::<Vec<f64>>::new());
        assert!(scatter_export(&empty, "kappa_q", "theta", 0.0).is_err());
    }

    #[test]
    fn grid_starts_at_anchor() {
        let g = maturity_grid(20.0, 100.0);
        assert_eq!(g.len(), 81);
        assert_eq!((g[0], g[1], g[80]), (20.0, 21.0, 100.0));
    }
}
