use std::path::PathBuf;

use clap::Args;
use lrdecay::ndgrad::{HvpOperator, MlpConfig, ParamVector, Tensor};
use lrdecay::ps10::Ps10Dataset;
use lrdecay::spectrum::{simulate_quadratic_gd, top_k_eigs};
use lrdecay::QuadraticSpec;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::config::{
    emit, manifest_path, merge, open, required, sha256_bytes, write_file, write_json, Manifest,
};
use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpectrumArgs {
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// Model architecture JSON (model.json of a training run)
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Parameter file (a snapshot or final.params)
    #[arg(long)]
    pub params: Option<PathBuf>,
    /// PS10 dataset the Hessian is evaluated on
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Use only the first N examples (default: all)
    #[arg(long)]
    pub batch: Option<usize>,
    /// Number of eigenvalues
    #[arg(short, long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub max_iters: Option<usize>,
    /// Relative residual tolerance ||Hv - lambda v|| <= tol |lambda|
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// JSON report
    #[arg(short, long)]
    pub out: Option<PathBuf>,
    /// Optional CSV of the Rayleigh quotient after every iteration
    #[arg(long)]
    pub rayleigh_csv: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
struct Row {
    index: usize,
    iteration: usize,
    rayleigh: f64,
}

pub fn run(args: &SpectrumArgs) -> CliResult<()> {
    let mut r: SpectrumArgs = merge(args, args.config.as_deref())?;
    let model_path = required(&r.model, "model")?;
    let params_path = required(&r.params, "params")?;
    let data_path = required(&r.data, "data")?;
    let out = required(&r.out, "out")?;
    let k = *r.k.get_or_insert(10);
    let max_iters = *r.max_iters.get_or_insert(1000);
    let tol = *r.tol.get_or_insert(1e-4);
    let seed = *r.seed.get_or_insert(0);

    let model: MlpConfig = serde_json::from_reader(open(&model_path)?)
        .map_err(|e| CliError::usage(format!("{}: {e}", model_path.display())))?;
    let params = ParamVector::read_from(open(&params_path)?)?;
    let data = Ps10Dataset::read_from(open(&data_path)?)?;
    let n = r.batch.unwrap_or(data.len()).min(data.len());
    if n == 0 {
        return Err(CliError::usage("--batch must be >= 1"));
    }
    let features = data.features();
    let rows: Vec<&[f64]> = (0..n).map(|i| features.row(i)).collect();
    let inputs = Tensor::from_rows(&rows)?;
    let labels: Vec<usize> = data.labels()[..n].to_vec();

    let mut model_bytes = serde_json::to_vec(&model)?;
    params.write_to(&mut model_bytes)?;
    let mut batch_bytes = Vec::with_capacity(inputs.len() * 8 + n * 8);
    for v in inputs.data() {
        batch_bytes.extend_from_slice(&v.to_le_bytes());
    }
    for &y in &labels {
        batch_bytes.extend_from_slice(&(y as u64).to_le_bytes());
    }

    let op = HvpOperator::new(model, params, inputs, labels)?;
    let report = top_k_eigs(&op, k, max_iters, tol, seed)?;
    let intervals: Vec<Option<[f64; 2]>> = report
        .intervals()
        .into_iter()
        .map(|i| i.map(|(a, b)| [a, b]))
        .collect();
    let converged: Vec<bool> = report.pairs.iter().map(|p| p.converged).collect();
    let iterations: Vec<usize> = report.pairs.iter().map(|p| p.iterations).collect();
    let doc = json!({
        "eigenvalues": report.eigenvalues(),
        "intervals": intervals,
        "residuals": report.residuals(),
        "converged": converged,
        "iterations": iterations,
        "model_hash": sha256_bytes(&model_bytes),
        "batch_hash": sha256_bytes(&batch_bytes),
    });
    write_json(&out, &doc)?;

    let mut manifest = Manifest::new(&r, Some(seed))?;
    manifest.hash(&model_path)?;
    manifest.hash(&params_path)?;
    manifest.hash(&data_path)?;
    manifest.hash(&out)?;
    if let Some(path) = &r.rayleigh_csv {
        let mut w = csv::Writer::from_writer(Vec::new());
        for (index, pair) in report.pairs.iter().enumerate() {
            for (i, &rayleigh) in pair.history.iter().enumerate() {
                w.serialize(Row {
                    index: index + 1,
                    iteration: i + 1,
                    rayleigh,
                })?;
            }
        }
        let bytes = w.into_inner().map_err(|e| CliError::usage(e.to_string()))?;
        write_file(path, &bytes)?;
        manifest.hash(path)?;
    }
    manifest.write(&manifest_path(&out))?;

    for (i, pair) in report.pairs.iter().enumerate() {
        emit(&format!(
            "lambda_{} = {:.6} (residual {:.2e}, {} iterations{})\n",
            i + 1,
            pair.value,
            pair.residual,
            pair.iterations,
            if pair.converged {
                ""
            } else {
                ", not converged"
            }
        ));
    }
    Ok(())
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuadraticArgs {
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// Hessian eigenvalues, e.g. 1,200
    #[arg(long, value_delimiter = ',')]
    pub eigs: Option<Vec<f64>>,
    /// Initial coefficient per direction (default: all ones)
    #[arg(long, value_delimiter = ',')]
    pub init: Option<Vec<f64>>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub steps: Option<usize>,
    /// JSON report (default: stdout)
    #[arg(short, long)]
    pub out: Option<PathBuf>,
    /// Optional CSV of every coefficient, one column per direction
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

pub fn run_quadratic(args: &QuadraticArgs) -> CliResult<()> {
    let mut r: QuadraticArgs = merge(args, args.config.as_deref())?;
    let eigs = required(&r.eigs, "eigs")?;
    let lr = required(&r.lr, "lr")?;
    let steps = *r.steps.get_or_insert(100);
    let init = r.init.get_or_insert_with(|| vec![1.0; eigs.len()]).clone();
    let spec = QuadraticSpec::new(eigs, init)?;
    let report = simulate_quadratic_gd(&spec, lr, steps)?;

    let directions: Vec<_> = report
        .directions
        .iter()
        .map(|d| {
            json!({
                "lambda": d.lambda,
                "factor": d.factor,
                "regime": d.regime,
                "interval": lrdecay::spectrum::convergence_interval(d.lambda).map(|(a, b)| [a, b]),
                "final": d.coefficients.last(),
            })
        })
        .collect();
    let doc = json!({
        "lr": lr,
        "steps": steps,
        "overall": report.overall(),
        "directions": directions,
    });
    match &r.out {
        Some(out) => {
            write_json(out, &doc)?;
            let mut manifest = Manifest::new(&r, None)?;
            manifest.hash(out)?;
            if let Some(path) = &r.csv {
                write_coefficients(path, &report)?;
                manifest.hash(path)?;
            }
            manifest.write(&manifest_path(out))?;
        }
        None => {
            emit(&format!("{}\n", serde_json::to_string_pretty(&doc)?));
            if let Some(path) = &r.csv {
                write_coefficients(path, &report)?;
            }
        }
    }
    Ok(())
}

fn write_coefficients(
    path: &std::path::Path,
    report: &lrdecay::spectrum::TrajectoryReport<f64>,
) -> CliResult<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["step".to_string()];
    header.extend((1..=report.directions.len()).map(|i| format!("c{i}")));
    w.write_record(&header)?;
    for k in 0..=report.steps {
        let mut row = vec![k.to_string()];
        row.extend(
            report
                .directions
                .iter()
                .map(|d| d.coefficients[k].to_string()),
        );
        w.write_record(&row)?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::usage(e.to_string()))?;
    write_file(path, &bytes)
}
