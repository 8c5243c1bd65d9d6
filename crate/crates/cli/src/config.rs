//! Run configuration: a TOML file whose every key has a default, overridden
//! in turn by command-line flags.

use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use clap::ValueEnum;
use serde::{Deserialize, Serialize};
use vasicek_core::baselines::{ForwardKind, SwConfig};
use vasicek_core::diagnostics::DiagnosticsOptions;
use vasicek_core::gibbs::{GibbsConfig, InitialState, Priors};
use vasicek_core::{Cov2, DecompositionKind, DerivedParams, Extra, MaturityPair};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Decomposition {
    Noise,
    Corr,
}

impl Decomposition {
    pub fn kind(self) -> DecompositionKind {
        match self {
            Decomposition::Noise => DecompositionKind::Noise,
            Decomposition::Corr => DecompositionKind::Correlation,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Forward {
    OneYear,
    Instantaneous,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Zero-rate panel CSV with a `date` column and one column per maturity.
    pub data: Option<PathBuf>,
    /// Short and long maturity in years.
    pub pair: [f64; 2],
    pub decomposition: Decomposition,
    pub rates_in_percent: bool,
    pub seed: u64,
    pub out: PathBuf,
    pub priors: PriorsSection,
    pub gibbs: GibbsSection,
    pub summary: SummarySection,
    pub extrapolation: ExtrapolationSection,
    pub baselines: BaselinesSection,
    pub diagnostics: DiagnosticsSection,
    pub simulate: SimulateSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            data: None,
            pair: [5.0, 20.0],
            decomposition: Decomposition::Noise,
            rates_in_percent: true,
            seed: 20131001,
            out: PathBuf::from("out"),
            priors: PriorsSection::default(),
            gibbs: GibbsSection::default(),
            summary: SummarySection::default(),
            extrapolation: ExtrapolationSection::default(),
            baselines: BaselinesSection::default(),
            diagnostics: DiagnosticsSection::default(),
            simulate: SimulateSection::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PriorsSection {
    pub mu_a: f64,
    pub tau_a: f64,
    pub mu_m: [f64; 2],
    /// Prior variances of m (diagonal of the prior covariance).
    pub omega_m: [f64; 2],
    /// Standard deviations and correlation of the Wishart inverse scale.
    pub psi_sd: [f64; 2],
    pub psi_corr: f64,
    pub nu: f64,
}

impl Default for PriorsSection {
    fn default() -> Self {
        let p = Priors::default();
        Self {
            mu_a: p.mu_a,
            tau_a: p.tau_a,
            mu_m: p.mu_m,
            omega_m: p.omega_m,
            psi_sd: [0.01, 0.01],
            psi_corr: 0.95,
            nu: p.nu,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GibbsSection {
    pub iterations: u64,
    pub burn_in: u64,
    pub thin: u64,
    /// Lower truncation point above which `a` is drawn by exponential rejection.
    pub exp_threshold: f64,
    pub stall_window: u64,
    pub stall_rate: f64,
    pub m_sweeps: usize,
    pub initial_a: f64,
    pub initial_sd: [f64; 2],
    pub initial_corr: f64,
}

impl Default for GibbsSection {
    fn default() -> Self {
        let pair = MaturityPair::new(5.0, 20.0).expect("valid pair");
        let g = GibbsConfig::new(pair, DecompositionKind::Noise, 0);
        Self {
            iterations: g.iterations,
            burn_in: g.burn_in,
            thin: g.thin,
            exp_threshold: g.exp_threshold,
            stall_window: g.stall_window,
            stall_rate: g.stall_rate,
            m_sweeps: g.m_sweeps,
            initial_a: InitialState::default().a,
            initial_sd: [0.001, 0.001],
            initial_corr: 0.95,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SummarySection {
    pub density_bins: usize,
    /// Share of the smallest θ and μ̃ draws left out of their density
    /// files and of the labelled trimmed mean.
    pub trim_fraction: f64,
    /// κ̃ value separating the two scatter sets; the median when absent.
    pub scatter_split: Option<f64>,
}

impl Default for SummarySection {
    fn default() -> Self {
        Self { density_bins: 50, trim_fraction: 0.01, scatter_split: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExtrapolationSection {
    /// `YYYY-MM-DD`; the last panel date when absent.
    pub anchor_date: Option<String>,
    /// Anchor maturity of the fan.
    pub llp: f64,
    pub max_maturity: f64,
}

impl Default for ExtrapolationSection {
    fn default() -> Self {
        Self { anchor_date: None, llp: 20.0, max_maturity: 100.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselinesSection {
    pub ns_max_maturity: f64,
    pub ufr: f64,
    pub llp: f64,
    pub convergence: f64,
    pub tolerance_bp: f64,
    pub forward: Forward,
}

impl Default for BaselinesSection {
    fn default() -> Self {
        let sw = SwConfig::default();
        Self {
            ns_max_maturity: 20.0,
            ufr: sw.ufr,
            llp: sw.llp,
            convergence: sw.convergence,
            tolerance_bp: sw.tolerance * 1e4,
            forward: Forward::OneYear,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiagnosticsSection {
    pub frac_a: f64,
    pub frac_b: f64,
    pub max_lag: usize,
    pub cusum_stride: usize,
}

impl Default for DiagnosticsSection {
    fn default() -> Self {
        let d = DiagnosticsOptions::default();
        Self { frac_a: d.frac_a, frac_b: d.frac_b, max_lag: d.max_lag, cusum_stride: d.cusum_stride }
    }
}

/// Structural parameters of a synthetic panel. `extra` is η or ρ according
/// to the decomposition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateSection {
    pub kappa: f64,
    pub kappa_q: f64,
    pub mu: f64,
    pub theta: f64,
    pub sigma2: f64,
    pub extra: f64,
    pub steps: usize,
    pub steps_per_year: f64,
    pub initial: Option<[f64; 2]>,
}

impl Default for SimulateSection {
    fn default() -> Self {
        Self {
            kappa: 0.2,
            kappa_q: 0.02,
            mu: 0.03,
            theta: 0.03,
            sigma2: 5e-5,
            extra: 1e-5,
            steps: 139,
            steps_per_year: 12.0,
            initial: None,
        }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else { return Ok(Self::default()) };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::input(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::input(format!("config {}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn maturity_pair(&self) -> Result<MaturityPair, CliError> {
        MaturityPair::new(self.pair[0], self.pair[1]).map_err(CliError::from)
    }

    pub fn data_path(&self) -> Result<&Path, CliError> {
        self.data.as_deref().ok_or_else(|| CliError::input("no data file given (use --data or the `data` key)"))
    }

    pub fn priors(&self) -> Result<Priors, CliError> {
        let p = &self.priors;
        let priors = Priors {
            mu_a: p.mu_a,
            tau_a: p.tau_a,
            mu_m: p.mu_m,
            omega_m: p.omega_m,
            psi: Cov2::from_sd_corr(p.psi_sd[0], p.psi_sd[1], p.psi_corr),
            nu: p.nu,
        };
        priors.validate()?;
        Ok(priors)
    }

    pub fn gibbs_config(&self) -> Result<GibbsConfig, CliError> {
        let g = &self.gibbs;
        let mut cfg = GibbsConfig::new(self.maturity_pair()?, self.decomposition.kind(), self.seed);
        cfg.iterations = g.iterations;
        cfg.burn_in = g.burn_in;
        cfg.thin = g.thin;
        cfg.exp_threshold = g.exp_threshold;
        cfg.stall_window = g.stall_window;
        cfg.stall_rate = g.stall_rate;
        cfg.m_sweeps = g.m_sweeps;
        cfg.initial = InitialState {
            a: g.initial_a,
            sigma: Cov2::from_sd_corr(g.initial_sd[0], g.initial_sd[1], g.initial_corr),
            m: None,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn anchor_date(&self) -> Result<Option<NaiveDate>, CliError> {
        self.extrapolation
            .anchor_date
            .as_deref()
            .map(|s| {
                NaiveDate::parse_from_str(s, "%Y-%m-%d").map_err(|e| CliError::input(format!("anchor_date {s:?}: {e}")))
            })
            .transpose()
    }

    pub fn sw_config(&self) -> SwConfig {
        let b = &self.baselines;
        SwConfig {
            ufr: b.ufr,
            llp: b.llp,
            convergence: b.convergence,
            tolerance: b.tolerance_bp * 1e-4,
            forward: match b.forward {
                Forward::OneYear => ForwardKind::OneYear,
                Forward::Instantaneous => ForwardKind::Instantaneous,
            },
        }
    }

    pub fn diagnostics_options(&self) -> DiagnosticsOptions {
        let d = &self.diagnostics;
        DiagnosticsOptions { frac_a: d.frac_a, frac_b: d.frac_b, max_lag: d.max_lag, cusum_stride: d.cusum_stride }
    }

    pub fn sim_params(&self) -> Result<DerivedParams, CliError> {
        let s = &self.simulate;
        let extra = match self.decomposition {
            Decomposition::Noise => Extra::Eta(s.extra),
            Decomposition::Corr => Extra::Rho(s.extra),
        };
        Ok(DerivedParams::from_structural(s.kappa, s.kappa_q, s.mu, s.theta, s.sigma2, extra)?)
    }
}

pub fn parse_pair(s: &str) -> Result<[f64; 2], String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    if parts.len() != 2 {
        return Err(format!("expected two maturities as `t1,t2`, got {s:?}"));
    }
    let num = |p: &str| p.parse::<f64>().map_err(|e| format!("{p:?}: {e}"));
    Ok([num(parts[0])?, num(parts[1])?])
}
