use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};

use crate::config::{open, write_file};
use crate::error::{CliError, CliResult};
use crate::svg::{Chart, Panel, Series};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Layout {
    /// One panel with every --y column of every input
    Lines,
    /// Total, simple, complex and noise-fit accuracy panels from metrics CSVs
    FourPanel,
}

#[derive(Debug, Clone, Args)]
pub struct PlotArgs {
    /// Input CSV; repeat to overlay runs
    #[arg(short, long = "input", required = true)]
    pub inputs: Vec<PathBuf>,
    /// Legend label per input (default: file name)
    #[arg(long, value_delimiter = ',')]
    pub labels: Vec<String>,
    #[arg(short, long, default_value = "epoch")]
    pub x: String,
    /// Columns to plot in the lines layout, e.g. train_loss,lr
    #[arg(short, long, value_delimiter = ',')]
    pub y: Vec<String>,
    #[arg(long, value_enum, default_value = "lines")]
    pub layout: Layout,
    #[arg(long, default_value = "")]
    pub title: String,
    /// Output SVG
    #[arg(short, long)]
    pub out: PathBuf,
}

const PANELS: [(&str, &str); 4] = [
    ("total_acc", "total accuracy"),
    ("simple_acc", "simple patterns"),
    ("complex_acc", "complex patterns"),
    ("noise_fit_acc", "noise fit"),
];

/// A CSV file kept as text; columns are parsed on demand.
struct Table {
    headers: Vec<String>,
    raw: Vec<csv::StringRecord>,
    path: PathBuf,
}

impl Table {
    fn read(path: &Path) -> CliResult<Self> {
        let bad = |e: csv::Error| CliError::usage(format!("{}: {e}", path.display()));
        let mut rdr = csv::Reader::from_reader(open(path)?);
        let headers: Vec<String> = rdr
            .headers()
            .map_err(bad)?
            .iter()
            .map(str::to_string)
            .collect();
        let raw: Vec<csv::StringRecord> = rdr.records().collect::<Result<_, _>>().map_err(bad)?;
        if headers.iter().all(String::is_empty) || raw.is_empty() {
            return Err(CliError::usage(format!(
                "{}: CSV has no data rows",
                path.display()
            )));
        }
        Ok(Self {
            headers,
            raw,
            path: path.to_path_buf(),
        })
    }

    /// Numeric values of `name`; any non-empty cell that is not a number is a usage error.
    fn column(&self, name: &str) -> CliResult<Vec<Option<f64>>> {
        let idx = self.headers.iter().position(|h| h == name).ok_or_else(|| {
            CliError::usage(format!(
                "{}: no column `{name}` (have {})",
                self.path.display(),
                self.headers.join(", ")
            ))
        })?;
        self.raw
            .iter()
            .enumerate()
            .map(|(i, rec)| {
                let cell = rec.get(idx).unwrap_or("").trim();
                if cell.is_empty() {
                    return Ok(None);
                }
                cell.parse::<f64>().map(Some).map_err(|_| {
                    CliError::usage(format!(
                        "{}: column `{name}` is not numeric (row {}: `{cell}`)",
                        self.path.display(),
                        i + 2
                    ))
                })
            })
            .collect()
    }

    fn series(&self, x: &str, y: &str, label: String) -> CliResult<Series> {
        let xs = self.column(x)?;
        let ys = self.column(y)?;
        let points = xs
            .into_iter()
            .zip(ys)
            .filter_map(|(x, y)| x.map(|x| (x, y)))
            .collect();
        Ok(Series { label, points })
    }
}

pub fn run(args: &PlotArgs) -> CliResult<()> {
    if !args.labels.is_empty() && args.labels.len() != args.inputs.len() {
        return Err(CliError::usage("--labels needs one label per input"));
    }
    let tables: Vec<Table> = args
        .inputs
        .iter()
        .map(|p| Table::read(p))
        .collect::<CliResult<_>>()?;
    let label = |i: usize| -> String {
        args.labels.get(i).cloned().unwrap_or_else(|| {
            args.inputs[i].file_name().map_or_else(
                || args.inputs[i].display().to_string(),
                |n| n.to_string_lossy().into_owned(),
            )
        })
    };
    let overlay = tables.len() > 1;

    let chart = match args.layout {
        Layout::FourPanel => {
            let panels = PANELS
                .iter()
                .map(|(col, title)| {
                    let series = tables
                        .iter()
                        .enumerate()
                        .map(|(i, t)| t.series(&args.x, col, label(i)))
                        .collect::<CliResult<_>>()?;
                    Ok(Panel {
                        title: title.to_string(),
                        x_label: args.x.clone(),
                        y_label: "accuracy".into(),
                        y_range: Some((0.0, 1.0)),
                        series,
                    })
                })
                .collect::<CliResult<_>>()?;
            Chart {
                title: args.title.clone(),
                columns: 2,
                panels,
                legend: overlay,
            }
        }
        Layout::Lines => {
            if args.y.is_empty() {
                return Err(CliError::usage("the lines layout needs --y"));
            }
            let mut series = Vec::new();
            for (i, t) in tables.iter().enumerate() {
                for col in &args.y {
                    let name = match (overlay, args.y.len() > 1) {
                        (true, true) => format!("{} {col}", label(i)),
                        (true, false) => label(i),
                        (false, _) => col.clone(),
                    };
                    series.push(t.series(&args.x, col, name)?);
                }
            }
            Chart {
                title: args.title.clone(),
                columns: 1,
                legend: series.len() > 1,
                panels: vec![Panel {
                    title: String::new(),
                    x_label: args.x.clone(),
                    y_label: args.y.join(", "),
                    y_range: None,
                    series,
                }],
            }
        }
    };
    write_file(&args.out, chart.render().as_bytes())
}
