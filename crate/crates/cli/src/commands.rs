use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde_json::json;
use vasicek_core::baselines::{ns_extrapolate, ns_fit, sw_fit, sw_zero};
use vasicek_core::curves::IngestOptions;
use vasicek_core::diagnostics::diagnose;
use vasicek_core::gibbs::{run_chain, Chain, ChainTable};
use vasicek_core::mle::fit_cmle;
use vasicek_core::simulate::{simulate_panel, SimParams, SimSpec};
use vasicek_core::summary::{
    density_auto, fan, maturity_grid, quantile_sorted, scatter_export, summarize, trim_lowest, write_fan_csv,
    write_scatter_csv, write_summary_csv, IntervalSummary, MIN_DENSITY_SAMPLES,
};
use vasicek_core::{DerivedParams, ZeroCurvePanel};

use crate::config::RunConfig;
use crate::manifest::{file_entry, Manifest};
use crate::CliError;

/// Chain columns holding the reported structural parameters, in table order.
pub const REPORT_COLUMNS: [&str; 9] =
    ["kappa", "kappa_q", "mu", "mu_q", "theta", "lambda0", "lambda1", "sigma2", "eta_or_rho"];

/// Parameters with heavy left tails whose densities drop the smallest draws.
const TRIMMED: [&str; 2] = ["theta", "mu_q"];

/// Collects output files and writes the manifest at the end of a command.
pub struct Run<'a> {
    pub config: &'a RunConfig,
    pub manifest: Manifest,
}

impl<'a> Run<'a> {
    pub fn new(command: &str, config: &'a RunConfig) -> Result<Self, CliError> {
        std::fs::create_dir_all(&config.out)
            .map_err(|e| CliError::input(format!("cannot create output directory {}: {e}", config.out.display())))?;
        Ok(Self { config, manifest: Manifest::new(command, config) })
    }

    fn input(&mut self, path: &Path) -> Result<(), CliError> {
        self.manifest.inputs.push(file_entry(path)?);
        Ok(())
    }

    fn output(
        &mut self,
        name: &str,
        f: impl FnOnce(&mut dyn Write) -> vasicek_core::Result<()>,
    ) -> Result<PathBuf, CliError> {
        let path = self.config.out.join(name);
        let file = File::create(&path).map_err(|e| CliError::input(format!("cannot write {}: {e}", path.display())))?;
        let mut w = BufWriter::new(file);
        f(&mut w)?;
        w.flush().map_err(|e| CliError::input(format!("cannot write {}: {e}", path.display())))?;
        drop(w);
        self.manifest.outputs.push(file_entry(&path)?);
        Ok(path)
    }

    fn finish(self) -> Result<(), CliError> {
        self.manifest.write(&self.config.out)?;
        Ok(())
    }
}

fn read_panel(config: &RunConfig, path: &Path) -> Result<ZeroCurvePanel, CliError> {
    if !path.exists() {
        return Err(CliError::input(format!("data file not found: {}", path.display())));
    }
    let opts = IngestOptions { rates_in_percent: config.rates_in_percent, ..Default::default() };
    Ok(ZeroCurvePanel::read_csv_path(path, &opts)?)
}

fn read_chain(path: &Path) -> Result<ChainTable, CliError> {
    let file = File::open(path).map_err(|e| CliError::input(format!("chain file {}: {e}", path.display())))?;
    ChainTable::read_csv(file).map_err(|e| CliError::input(format!("chain file {}: {e}", path.display())))
}

fn fmt(x: f64) -> String {
    format!("{x}")
}

pub fn ingest(config: &RunConfig) -> Result<(), CliError> {
    let data = config.data_path()?.to_path_buf();
    let panel = read_panel(config, &data)?;
    panel.select_pair(config.maturity_pair()?)?;
    let mut run = Run::new("ingest", config)?;
    run.input(&data)?;
    run.output("panel.csv", |w| panel.write_csv(w, config.rates_in_percent))?;
    run.manifest.details = json!({
        "rows": panel.len(),
        "first_date": panel.dates()[0].to_string(),
        "last_date": panel.dates()[panel.len() - 1].to_string(),
        "maturities": panel.maturities(),
        "step_years": panel.step(),
    });
    eprintln!("{} rows, step {:.6} years", panel.len(), panel.step());
    run.finish()
}

pub fn mle(config: &RunConfig) -> Result<(), CliError> {
    let data = config.data_path()?.to_path_buf();
    let panel = read_panel(config, &data)?;
    let view = panel.select_pair(config.maturity_pair()?)?;
    let kind = config.decomposition.kind();
    let fit = fit_cmle(&view, kind)?;
    let mut run = Run::new("mle", config)?;
    run.input(&data)?;

    let var_se = fit.cov.map(|c| c.std_errors());
    let var_names = ["a", "m1", "m2", "s11", "s21", "s22"];
    let v = fit.estimate;
    let var_values = [v.a, v.m[0], v.m[1], v.sigma.s11, v.sigma.s21, v.sigma.s22];
    run.output("mle_var.csv", |w| {
        let rows = (0..6).map(|i| (var_names[i], var_values[i], var_se.map(|s| s[i])));
        write_estimates(w, rows)
    })?;

    let Some(derived) = fit.derived else {
        let note = fit.derived_note.clone().unwrap_or_default();
        run.finish()?;
        return Err(CliError::numeric(format!("estimate has no structural form: {note}")));
    };
    if let Some(note) = &fit.derived_note {
        eprintln!("note: {note}");
    }
    let names = DerivedParams::report_names(kind);
    let values = derived.report_values();
    run.output("mle_summary.csv", |w| {
        let rows = (0..9).map(|i| (names[i], values[i], fit.derived_se.map(|s| s[i])));
        write_estimates(w, rows)
    })?;
    run.manifest.details = json!({
        "transitions": fit.transitions,
        "iterations": fit.iterations,
        "fixed_point_residual": fit.fixed_point_residual,
        "log_likelihood": fit.log_likelihood,
        "degenerate": fit.degenerate,
        "note": fit.derived_note,
    });
    run.finish()
}

/// Rows of `parameter, estimate, se`; a missing standard error is written as NaN.
fn write_estimates<'n>(
    w: &mut dyn Write,
    rows: impl Iterator<Item = (&'n str, f64, Option<f64>)>,
) -> vasicek_core::Result<()> {
    let mut wtr = csv_writer(w);
    wtr.write_record(["parameter", "estimate", "se"])?;
    for (name, est, se) in rows {
        wtr.write_record([name.to_string(), fmt(est), fmt(se.unwrap_or(f64::NAN))])?;
    }
    wtr.flush()?;
    Ok(())
}

fn csv_writer(w: &mut dyn Write) -> csv::Writer<&mut dyn Write> {
    csv::Writer::from_writer(w)
}

pub fn gibbs(config: &RunConfig) -> Result<(), CliError> {
    let data = config.data_path()?.to_path_buf();
    let panel = read_panel(config, &data)?;
    let view = panel.select_pair(config.maturity_pair()?)?;
    let priors = config.priors()?;
    let cfg = config.gibbs_config()?;
    let chain = run_chain(&view.rows, view.step, &priors, &cfg)?;

    let mut run = Run::new("gibbs", config)?;
    run.input(&data)?;
    run.output("chain.csv", |w| chain.write_csv(w))?;
    let table = chain.table();
    let summaries = write_posterior(&mut run, &table)?;
    run.manifest.details = json!({
        "stored_draws": chain.len(),
        "step_years": chain.h,
        "acceptance": counters_json(&chain),
        "posterior_means": summaries,
    });
    eprintln!(
        "{} draws stored; acceptance m {}/{}, a {}/{}, sigma {}/{}",
        chain.len(),
        chain.counters.m.accepted,
        chain.counters.m.proposals,
        chain.counters.a.accepted,
        chain.counters.a.proposals,
        chain.counters.sigma.accepted,
        chain.counters.sigma.proposals
    );
    run.finish()
}

fn counters_json(chain: &Chain) -> serde_json::Value {
    let block = |b: &vasicek_core::gibbs::BlockCounter| {
        json!({
            "proposals": b.proposals,
            "accepted": b.accepted,
            "rejected_m": b.rejected_m,
            "rejected_mu": b.rejected_mu,
            "rejected_a": b.rejected_a,
            "rejected_sigma": b.rejected_sigma,
            "longest_streak": b.longest_streak,
        })
    };
    json!({
        "m": block(&chain.counters.m),
        "a": block(&chain.counters.a),
        "sigma": block(&chain.counters.sigma),
    })
}

pub fn summarize_chain(config: &RunConfig, chain_path: &Path) -> Result<(), CliError> {
    let table = read_chain(chain_path)?;
    let mut run = Run::new("summarize", config)?;
    run.input(chain_path)?;
    let summaries = write_posterior(&mut run, &table)?;
    run.manifest.details = json!({ "stored_draws": table.len(), "posterior_means": summaries });
    run.finish()
}

/// Writes the posterior summary, density and scatter files; returns the
/// means by parameter for the manifest.
fn write_posterior(run: &mut Run, table: &ChainTable) -> Result<serde_json::Value, CliError> {
    let kind = run.config.decomposition.kind();
    let labels = DerivedParams::report_names(kind);
    let s = &run.config.summary;
    if !(0.0..1.0).contains(&s.trim_fraction) {
        return Err(CliError::input("trim_fraction must lie in [0, 1)"));
    }
    let trim = (s.trim_fraction * table.len() as f64).floor() as usize;

    let mut rows = Vec::with_capacity(10);
    for (label, col) in labels.iter().zip(REPORT_COLUMNS) {
        rows.push((label.to_string(), summarize(table.column(col)?)?));
    }
    let theta_trimmed = summarize(&trim_lowest(table.column("theta")?, trim))?;
    rows.push(("theta_trimmed".to_string(), theta_trimmed));
    run.output("posterior_summary.csv", |w| write_summary_csv(w, &rows))?;

    if table.len() >= MIN_DENSITY_SAMPLES {
        for (label, col) in labels.iter().zip(REPORT_COLUMNS) {
            let k = if TRIMMED.contains(&col) { trim } else { 0 };
            let d = density_auto(table.column(col)?, s.density_bins, k)?;
            run.output(&format!("density_{label}.csv"), |w| d.write_csv(w))?;
        }
    } else {
        eprintln!("skipping densities: {} draws, need {MIN_DENSITY_SAMPLES}", table.len());
    }

    let split = match s.scatter_split {
        Some(x) => x,
        None => {
            let mut k = table.column("kappa_q")?.to_vec();
            k.sort_by(f64::total_cmp);
            quantile_sorted(&k, 0.5)
        }
    };
    let sets = scatter_export(table, "kappa_q", "theta", split)?;
    run.output("scatter_kappa_q_theta.csv", |w| write_scatter_csv(w, "kappa_q", "theta", &sets))?;

    Ok(rows.iter().map(|(n, r)| (n.clone(), json!(r.mean))).collect::<serde_json::Map<_, _>>().into())
}

pub fn extrapolate(config: &RunConfig, chain_path: &Path) -> Result<(), CliError> {
    let data = config.data_path()?.to_path_buf();
    let panel = read_panel(config, &data)?;
    let table = read_chain(chain_path)?;
    let anchor = match config.anchor_date()? {
        Some(d) => panel.snapshot(d)?,
        None => panel.last_snapshot(),
    };
    let e = &config.extrapolation;
    let grid = maturity_grid(e.llp, e.max_maturity);
    let bayes = fan(&table, &anchor, e.llp, &grid)?;
    let ns = ns_fit(&anchor, config.baselines.ns_max_maturity)?;
    let ns_curve = ns_extrapolate(&ns, &grid)?;
    let sw = sw_fit(&anchor, config.sw_config())?;
    let sw_curve = grid.iter().map(|&s| sw_zero(&sw, s)).collect::<vasicek_core::Result<Vec<_>>>()?;
    let points = |v: &[f64]| -> Vec<(f64, IntervalSummary)> {
        grid.iter().zip(v).map(|(&s, &z)| (s, IntervalSummary::point(z))).collect()
    };

    let mut run = Run::new("extrapolate", config)?;
    run.input(&data)?;
    run.input(chain_path)?;
    run.output("fan.csv", |w| write_fan_csv(w, &bayes.points))?;
    run.output("ns.csv", |w| write_fan_csv(w, &points(&ns_curve)))?;
    run.output("sw.csv", |w| write_fan_csv(w, &points(&sw_curve)))?;
    if bayes.excluded > 0 {
        eprintln!("{} draws with kappa_q = 0 excluded from the fan", bayes.excluded);
    }
    run.manifest.details = json!({
        "anchor_date": anchor.date.to_string(),
        "anchor_maturity": e.llp,
        "anchor_rate": bayes.z_tau,
        "excluded_draws": bayes.excluded,
        "nelson_siegel": {
            "beta0": ns.beta0, "beta1": ns.beta1, "beta2": ns.beta2, "tau": ns.tau,
            "rss": ns.rss, "tau_identified": ns.tau_identified,
        },
        "smith_wilson": {
            "alpha": sw.alpha,
            "max_pricing_error": sw.max_pricing_error,
            "forward_gap": sw.forward_gap,
        },
    });
    run.finish()
}

/// Returns whether any parameter failed the Geweke test.
pub fn diagnose_chain(config: &RunConfig, chain_path: &Path) -> Result<bool, CliError> {
    let table = read_chain(chain_path)?;
    let report = diagnose(&table, &REPORT_COLUMNS, &config.diagnostics_options())?;
    let mut run = Run::new("diagnose", config)?;
    run.input(chain_path)?;
    run.output("diagnostics_summary.csv", |w| report.write_summary_csv(w))?;
    run.output("acf.csv", |w| report.write_acf_csv(w))?;
    run.output("cusum.csv", |w| report.write_cusum_csv(w))?;
    let verdict = report.verdict();
    eprintln!("{verdict}");
    run.manifest.details = json!({ "reject": report.any_reject(), "verdict": verdict });
    run.finish()?;
    Ok(report.any_reject())
}

pub fn simulate(config: &RunConfig) -> Result<(), CliError> {
    let s = &config.simulate;
    if !(s.steps_per_year > 0.0) {
        return Err(CliError::input("steps_per_year must be positive"));
    }
    let spec = SimSpec {
        params: SimParams::Derived(config.sim_params()?),
        steps: s.steps,
        h: 1.0 / s.steps_per_year,
        seed: config.seed,
        initial: s.initial,
    };
    let panel = simulate_panel(&spec, config.maturity_pair()?)?;
    let mut run = Run::new("simulate", config)?;
    run.output("panel.csv", |w| panel.write_csv(w, config.rates_in_percent))?;
    let v = spec.var_params(config.maturity_pair()?)?;
    run.manifest.details = json!({
        "rows": panel.len(),
        "var_params": { "a": v.a, "m": v.m, "sigma": [v.sigma.s11, v.sigma.s21, v.sigma.s22] },
    });
    run.finish()
}
