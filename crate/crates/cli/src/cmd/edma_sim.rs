use std::path::PathBuf;

use clap::Args;
use lrdecay::edma::{asymptotic_variance_factor, simulate_variance};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::config::{emit, manifest_path, merge, write_file, Manifest};
use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EdmaSimArgs {
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub beta: Option<f64>,
    /// Observation noise variance
    #[arg(long)]
    pub sigma2: Option<f64>,
    /// Number of observations per trial
    #[arg(long)]
    pub horizon: Option<u64>,
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// CSV of t, predicted and empirical variance (default: stdout)
    #[arg(short, long)]
    pub out: Option<PathBuf>,
}

#[derive(Serialize)]
struct Row {
    t: u64,
    predicted: f64,
    empirical: f64,
    rel_err: f64,
}

pub fn run(args: &EdmaSimArgs) -> CliResult<()> {
    let mut r: EdmaSimArgs = merge(args, args.config.as_deref())?;
    let beta = *r.beta.get_or_insert(0.9);
    let sigma2 = *r.sigma2.get_or_insert(1.0);
    let horizon = *r.horizon.get_or_insert(100);
    let trials = *r.trials.get_or_insert(100_000);
    let seed = *r.seed.get_or_insert(0);
    let rows = simulate_variance(beta, sigma2, horizon, trials, seed)?;

    let mut w = csv::Writer::from_writer(Vec::new());
    let mut worst: f64 = 0.0;
    for s in &rows {
        let rel_err = (s.empirical - s.predicted).abs() / s.predicted;
        worst = worst.max(rel_err);
        w.serialize(Row {
            t: s.t,
            predicted: s.predicted,
            empirical: s.empirical,
            rel_err,
        })?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::usage(e.to_string()))?;
    let limit = asymptotic_variance_factor(beta)? * sigma2;
    let summary = json!({
        "max_rel_err": worst,
        "asymptote_predicted": limit,
        "final_empirical": rows.last().map(|s| s.empirical),
    });
    match &r.out {
        Some(out) => {
            write_file(out, &bytes)?;
            let mut manifest = Manifest::new(&r, Some(seed))?;
            manifest.hash(out)?;
            manifest.outcome = Some(summary.clone());
            manifest.write(&manifest_path(out))?;
            emit(&format!("{}\n", serde_json::to_string(&summary)?));
        }
        None => emit(&String::from_utf8_lossy(&bytes)),
    }
    Ok(())
}
