//! Command-line surface. Every flag maps to a config key of the same name;
//! flags override values from `--config`.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::config::Config;

#[derive(Debug, Parser)]
#[command(name = "overtensor", version, about = "Over-parameterized tensor decomposition experiments")]
pub struct Cli {
    /// Flat `key = value` file; command-line flags take precedence over it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Re-initializing gradient descent on random (or loaded) targets.
    Run(RunArgs),
    /// Build and certify a spurious local minimum and its global counterpart.
    Localmin(LocalminArgs),
    /// Lazy-training lower-bound curve as CSV.
    Lazybound(LazyboundArgs),
    /// Plain gradient descent on the vanilla parameterization.
    Baseline(BaselineArgs),
}

#[derive(Debug, Default, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub d: Option<usize>,
    #[arg(long)]
    pub r: Option<usize>,
    #[arg(long)]
    pub l: Option<usize>,
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Number of epochs K.
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Gradient steps per epoch H.
    #[arg(long)]
    pub iters: Option<usize>,
    #[arg(long)]
    pub eta: Option<f64>,
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long)]
    pub lambda: Option<f64>,
    /// `a..b` (inclusive), `a,b,c` or a single seed.
    #[arg(long)]
    pub seeds: Option<String>,
    /// JSON ground truth `{"order", "weights", "components"}`.
    #[arg(long)]
    pub gt: Option<PathBuf>,
    /// csv or jsonl.
    #[arg(long)]
    pub format: Option<String>,
    /// Output directory (default: $OVERTENSOR_OUT_DIR, else ./overtensor-out).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads for seed sweeps.
    #[arg(long)]
    pub jobs: Option<usize>,
}

#[derive(Debug, Default, Args)]
pub struct LocalminArgs {
    /// vanilla or 2homo.
    #[arg(long)]
    pub kind: Option<String>,
    #[arg(long)]
    pub d: Option<usize>,
    #[arg(long)]
    pub r: Option<usize>,
    #[arg(long)]
    pub l: Option<usize>,
    /// Width; defaults to the smallest width the construction allows.
    #[arg(long)]
    pub m: Option<usize>,
    /// Random second-order probe directions.
    #[arg(long)]
    pub probes: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Default, Args)]
pub struct LazyboundArgs {
    #[arg(long)]
    pub l: Option<usize>,
    /// Comma-separated dimensions.
    #[arg(long)]
    pub d: Option<String>,
    /// `start:stop:step` grid of log_d(m).
    #[arg(long)]
    pub xgrid: Option<String>,
    /// Add Monte-Carlo columns where the tensors are small enough.
    #[arg(long)]
    pub mc: bool,
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output file (default: stdout).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Default, Args)]
pub struct BaselineArgs {
    /// random or localmin.
    #[arg(long)]
    pub start: Option<String>,
    #[arg(long)]
    pub d: Option<usize>,
    #[arg(long)]
    pub r: Option<usize>,
    #[arg(long)]
    pub l: Option<usize>,
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long)]
    pub eta: Option<f64>,
    #[arg(long)]
    pub steps: Option<usize>,
    /// Norm of the random starting columns.
    #[arg(long)]
    pub scale: Option<f64>,
    /// Gaussian perturbation added to the local-minimum start.
    #[arg(long)]
    pub perturb: Option<f64>,
    #[arg(long)]
    pub seeds: Option<String>,
    #[arg(long)]
    pub format: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub jobs: Option<usize>,
}

fn put<T: ToString>(c: &mut Config, key: &str, v: &Option<T>) {
    if let Some(v) = v {
        c.set(key, v.to_string());
    }
}

fn put_path(c: &mut Config, key: &str, v: &Option<PathBuf>) {
    if let Some(v) = v {
        c.set(key, v.to_string_lossy());
    }
}

impl RunArgs {
    pub const KEYS: &'static [&'static str] =
        &["d", "r", "l", "m", "epsilon", "epochs", "iters", "eta", "delta", "lambda", "seeds", "gt", "format", "out", "jobs"];

    pub fn to_config(&self) -> Config {
        let mut c = Config::default();
        put(&mut c, "d", &self.d);
        put(&mut c, "r", &self.r);
        put(&mut c, "l", &self.l);
        put(&mut c, "m", &self.m);
        put(&mut c, "epsilon", &self.epsilon);
        put(&mut c, "epochs", &self.epochs);
        put(&mut c, "iters", &self.iters);
        put(&mut c, "eta", &self.eta);
        put(&mut c, "delta", &self.delta);
        put(&mut c, "lambda", &self.lambda);
        put(&mut c, "seeds", &self.seeds);
        put_path(&mut c, "gt", &self.gt);
        put(&mut c, "format", &self.format);
        put_path(&mut c, "out", &self.out);
        put(&mut c, "jobs", &self.jobs);
        c
    }
}

impl LocalminArgs {
    pub const KEYS: &'static [&'static str] = &["kind", "d", "r", "l", "m", "probes", "seed"];

    pub fn to_config(&self) -> Config {
        let mut c = Config::default();
        put(&mut c, "kind", &self.kind);
        put(&mut c, "d", &self.d);
        put(&mut c, "r", &self.r);
        put(&mut c, "l", &self.l);
        put(&mut c, "m", &self.m);
        put(&mut c, "probes", &self.probes);
        put(&mut c, "seed", &self.seed);
        c
    }
}

impl LazyboundArgs {
    pub const KEYS: &'static [&'static str] = &["l", "d", "xgrid", "mc", "samples", "seed", "out"];

    pub fn to_config(&self) -> Config {
        let mut c = Config::default();
        put(&mut c, "l", &self.l);
        put(&mut c, "d", &self.d);
        put(&mut c, "xgrid", &self.xgrid);
        if self.mc {
            c.set("mc", "true");
        }
        put(&mut c, "samples", &self.samples);
        put(&mut c, "seed", &self.seed);
        put_path(&mut c, "out", &self.out);
        c
    }
}

impl BaselineArgs {
    pub const KEYS: &'static [&'static str] =
        &["start", "d", "r", "l", "m", "eta", "steps", "scale", "perturb", "seeds", "format", "out", "jobs"];

    pub fn to_config(&self) -> Config {
        let mut c = Config::default();
        put(&mut c, "start", &self.start);
        put(&mut c, "d", &self.d);
        put(&mut c, "r", &self.r);
        put(&mut c, "l", &self.l);
        put(&mut c, "m", &self.m);
        put(&mut c, "eta", &self.eta);
        put(&mut c, "steps", &self.steps);
        put(&mut c, "scale", &self.scale);
        put(&mut c, "perturb", &self.perturb);
        put(&mut c, "seeds", &self.seeds);
        put(&mut c, "format", &self.format);
        put_path(&mut c, "out", &self.out);
        put(&mut c, "jobs", &self.jobs);
        c
    }
}
