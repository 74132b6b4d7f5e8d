use std::path::PathBuf;

use clap::Args;
use lrdecay::ps10::{generate, Ps10Spec};
use serde::{Deserialize, Serialize};

use crate::config::{emit, manifest_path, merge, required, write_file, write_json, Manifest};
use crate::error::CliResult;

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenArgs {
    /// JSON config file; flags override its values
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// Number of training examples
    #[arg(long)]
    pub total: Option<usize>,
    /// Fraction of examples whose label is corrupted, in [0, 1)
    #[arg(long)]
    pub noise: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub classes: Option<usize>,
    #[arg(long)]
    pub simple_per_class: Option<usize>,
    #[arg(long)]
    pub complex_per_class: Option<usize>,
    #[arg(long)]
    pub height: Option<usize>,
    #[arg(long)]
    pub width: Option<usize>,
    /// Minimum distance between patterns of different classes
    #[arg(long)]
    pub margin: Option<f64>,
    /// Also write a held-out test split of this many examples
    #[arg(long, requires = "test_out")]
    pub test_total: Option<usize>,
    #[arg(long)]
    pub test_out: Option<PathBuf>,
    /// Output dataset file; a JSON sidecar is written to `<out>.json`
    #[arg(short, long)]
    pub out: Option<PathBuf>,
}

impl GenArgs {
    fn resolve(&self) -> CliResult<Self> {
        let mut r: Self = merge(self, self.config.as_deref())?;
        let d = Ps10Spec::default();
        r.total.get_or_insert(d.examples_total);
        r.noise.get_or_insert(d.noise_fraction);
        r.seed.get_or_insert(d.seed);
        r.classes.get_or_insert(d.num_classes);
        r.simple_per_class.get_or_insert(d.simple_per_class);
        r.complex_per_class.get_or_insert(d.complex_per_class);
        r.height.get_or_insert(d.height);
        r.width.get_or_insert(d.width);
        r.margin.get_or_insert(d.margin);
        r.out = Some(required(&r.out, "out")?);
        Ok(r)
    }

    fn spec(&self) -> Ps10Spec {
        Ps10Spec {
            num_classes: self.classes.unwrap_or_default(),
            simple_per_class: self.simple_per_class.unwrap_or_default(),
            complex_per_class: self.complex_per_class.unwrap_or_default(),
            examples_total: self.total.unwrap_or_default(),
            noise_fraction: self.noise.unwrap_or_default(),
            height: self.height.unwrap_or_default(),
            width: self.width.unwrap_or_default(),
            seed: self.seed.unwrap_or_default(),
            margin: self.margin.unwrap_or_default(),
        }
    }
}

pub fn run(args: &GenArgs) -> CliResult<()> {
    let r = args.resolve()?;
    let spec = r.spec();
    spec.validate()?;
    let out = r.out.clone().expect("resolved");
    let ds = generate(&spec)?;

    let mut manifest = Manifest::new(&r, Some(spec.seed))?;
    let mut bytes = Vec::new();
    ds.write_to(&mut bytes)?;
    write_file(&out, &bytes)?;
    let sidecar = sidecar_path(&out);
    write_json(&sidecar, &ds.sidecar())?;
    manifest.hash(&out)?;
    manifest.hash(&sidecar)?;

    if let (Some(n), Some(test_out)) = (r.test_total, &r.test_out) {
        let test = ds.test_split(n, spec.seed.wrapping_add(1))?;
        let mut bytes = Vec::new();
        test.write_to(&mut bytes)?;
        write_file(test_out, &bytes)?;
        write_json(&sidecar_path(test_out), &test.sidecar())?;
        manifest.hash(test_out)?;
    }
    manifest.write(&manifest_path(&out))?;
    let c = ds.composition();
    emit(&format!(
        "wrote {} ({} examples: {} simple, {} complex, {} noise)\n",
        out.display(),
        ds.len(),
        c.simple,
        c.complex,
        c.noise
    ));
    Ok(())
}

pub fn sidecar_path(out: &std::path::Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}
