use std::fs::File;
use std::io::{self, LineWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use overtensor::constructions::{
    assemble_terms, bad_local_min_2homo, bad_local_min_vanilla, certify_stationary, global_min_decomposition,
    global_min_decomposition_2homo, two_homo_flatten, two_homo_free_grad, two_homo_free_loss, two_homo_min_width,
    vanilla_min_width,
};
use overtensor::lazy_bound::{
    exponent_grid, figure_curve, mc_orthogonal_projection, CSV_HEADER, CSV_HEADER_MC, MAX_ENTRIES,
};
use overtensor::model::{GroundTruth, GroundTruthSpec, Hyperparams};
use overtensor::optimizer::{init, run_from, vanilla_random_start, vanilla_run, IterationRecord};
use overtensor::rng::{standard_normal_vec, Purpose, SeedStream};

use crate::config::{parse_grid, parse_list, parse_seeds, Config};
use crate::error::CliError;

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "OVERTENSOR_OUT_DIR";
const DEFAULT_OUT_DIR: &str = "overtensor-out";

/// Final loss above which a baseline run counts as stuck.
pub const STUCK_LOSS: f64 = 0.01;

fn usage(e: overtensor::Error) -> CliError {
    CliError::Usage(e.to_string())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Csv,
    Jsonl,
}

impl Format {
    fn parse(s: &str) -> Result<Self, CliError> {
        match s {
            "csv" => Ok(Format::Csv),
            "jsonl" => Ok(Format::Jsonl),
            other => Err(CliError::Usage(format!("format must be csv or jsonl, got {other:?}"))),
        }
    }

    fn ext(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Jsonl => "jsonl",
        }
    }
}

/// Writes rows of one record type in either format; CSV columns follow field order.
struct RowWriter<W: Write> {
    out: W,
    format: Format,
}

impl<W: Write> RowWriter<W> {
    fn new(mut out: W, format: Format, header: &str) -> io::Result<Self> {
        if format == Format::Csv {
            writeln!(out, "{header}")?;
        }
        Ok(Self { out, format })
    }

    fn row<T: Serialize + CsvRow>(&mut self, row: &T) -> io::Result<()> {
        match self.format {
            Format::Csv => writeln!(self.out, "{}", row.csv()),
            Format::Jsonl => {
                serde_json::to_writer(&mut self.out, row)?;
                writeln!(self.out)
            }
        }
    }

    fn finish(mut self) -> io::Result<()> {
        self.out.flush()
    }
}

trait CsvRow {
    fn csv(&self) -> String;
}

#[derive(Serialize)]
struct IterRow {
    iter: usize,
    epoch: usize,
    loss: f64,
    residual: f64,
    pbu_sq: f64,
    path_len: f64,
}

const ITER_HEADER: &str = "iter,epoch,loss,residual,pbu_sq,path_len";

impl CsvRow for IterRow {
    fn csv(&self) -> String {
        format!("{},{},{},{},{},{}", self.iter, self.epoch, self.loss, self.residual, self.pbu_sq, self.path_len)
    }
}

impl From<&IterationRecord> for IterRow {
    fn from(r: &IterationRecord) -> Self {
        Self { iter: r.iter, epoch: r.epoch, loss: r.loss, residual: r.residual, pbu_sq: r.pbu_sq, path_len: r.path_len }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct RunSummary {
    pub seed: u64,
    pub final_residual: f64,
    pub epochs_used: usize,
    pub iterations: usize,
    pub success: bool,
}

const RUN_SUMMARY_HEADER: &str = "seed,final_residual,epochs_used,iterations,success";

impl CsvRow for RunSummary {
    fn csv(&self) -> String {
        format!("{},{},{},{},{}", self.seed, self.final_residual, self.epochs_used, self.iterations, self.success)
    }
}

#[derive(Serialize)]
struct StepRow {
    step: usize,
    loss: f64,
}

const STEP_HEADER: &str = "step,loss";

impl CsvRow for StepRow {
    fn csv(&self) -> String {
        format!("{},{}", self.step, self.loss)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct BaselineSummary {
    pub seed: u64,
    pub initial_loss: f64,
    pub final_loss: f64,
    pub stuck: bool,
}

const BASELINE_SUMMARY_HEADER: &str = "seed,initial_loss,final_loss,stuck";

impl CsvRow for BaselineSummary {
    fn csv(&self) -> String {
        format!("{},{},{},{}", self.seed, self.initial_loss, self.final_loss, self.stuck)
    }
}

fn output_dir(cfg: &Config) -> PathBuf {
    cfg.raw("out")
        .map(PathBuf::from)
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR))
}

fn jobs(cfg: &Config) -> Result<usize, CliError> {
    let default = std::thread::available_parallelism().map_or(1, |n| n.get());
    let jobs = cfg.get_or("jobs", default)?;
    if jobs == 0 {
        return Err(CliError::Usage("jobs must be at least 1".into()));
    }
    Ok(jobs)
}

/// Runs `work` for every seed on a pool of `jobs` threads, then writes the merged
/// summary in seed order. Fails if any seed failed, after all seeds finished.
fn sweep<S, F>(seeds: &[u64], jobs: usize, dir: &Path, format: Format, header: &str, work: F) -> Result<(), CliError>
where
    S: Serialize + CsvRow + Send,
    F: Fn(u64) -> Result<S, CliError> + Sync,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| CliError::Runtime(format!("thread pool: {e}")))?;
    let results: Vec<(u64, Result<S, CliError>)> = pool.install(|| seeds.par_iter().map(|&s| (s, work(s))).collect());

    let path = dir.join(format!("summary.{}", format.ext()));
    let mut file = RowWriter::new(LineWriter::new(File::create(&path)?), format, header)?;
    let stdout = io::stdout();
    let mut console = RowWriter::new(stdout.lock(), format, header)?;
    let mut failures = Vec::new();
    for (seed, result) in results {
        match result {
            Ok(summary) => {
                file.row(&summary)?;
                console.row(&summary)?;
            }
            Err(e) => failures.push(format!("seed {seed}: {e}")),
        }
    }
    file.finish()?;
    console.finish()?;
    if failures.is_empty() {
        Ok(())
    } else {
        Err(CliError::Runtime(failures.join("; ")))
    }
}

struct RunSettings {
    hyper: Hyperparams,
    gt: Option<GroundTruth>,
    seeds: Vec<u64>,
    format: Format,
    dir: PathBuf,
    jobs: usize,
}

fn load_gt(path: &str, order: usize, dim: usize) -> Result<GroundTruth, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("cannot read {path}: {e}")))?;
    let spec: GroundTruthSpec =
        serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("bad ground truth {path}: {e}")))?;
    let gt = spec.build().map_err(usage)?;
    if gt.order() != order || gt.dim() != dim {
        return Err(CliError::Usage(format!(
            "ground truth has l={}, d={} but the run uses l={order}, d={dim}",
            gt.order(),
            gt.dim()
        )));
    }
    Ok(gt)
}

fn run_settings(cfg: &Config) -> Result<RunSettings, CliError> {
    let d = cfg.get_or("d", 8usize)?;
    let l = cfg.get_or("l", 3usize)?;
    let m = cfg.get_or("m", 24usize)?;
    let epsilon = cfg.get_or("epsilon", 0.05)?;
    let epochs = cfg.get_or("epochs", 20usize)?;
    let gt = cfg.raw("gt").map(|p| load_gt(p, l, d)).transpose()?;
    let r = match (&gt, cfg.get::<usize>("r")?) {
        (Some(g), Some(r)) if r != g.rank() => {
            return Err(CliError::Usage(format!("r = {r} but the ground truth has rank {}", g.rank())))
        }
        (Some(g), _) => g.rank(),
        (None, r) => r.unwrap_or(2),
    };
    if gt.is_none() && r > d {
        return Err(CliError::Usage(format!("r = {r} exceeds d = {d}")));
    }
    let mut hyper = Hyperparams::desk(d, l, r, m, epsilon, epochs, 0);
    hyper.iters_per_epoch = cfg.get_or("iters", hyper.iters_per_epoch)?;
    hyper.eta = cfg.get_or("eta", hyper.eta)?;
    hyper.delta = cfg.get_or("delta", hyper.delta)?;
    hyper.lambda = cfg.get_or("lambda", hyper.lambda)?;
    hyper.validate().map_err(usage)?;
    Ok(RunSettings {
        hyper,
        gt,
        seeds: parse_seeds(cfg.raw("seeds").unwrap_or("1"))?,
        format: Format::parse(cfg.raw("format").unwrap_or("csv"))?,
        dir: output_dir(cfg),
        jobs: jobs(cfg)?,
    })
}

fn run_seed(s: &RunSettings, seed: u64) -> Result<RunSummary, CliError> {
    let h = Hyperparams { seed, ..s.hyper.clone() };
    let seeds = SeedStream::new(seed);
    let gt = match &s.gt {
        Some(gt) => gt.clone(),
        None => GroundTruth::random(h.dim, h.rank, h.order, &mut seeds.substream(Purpose::GroundTruth, 0, 0))?,
    };
    let path = s.dir.join(format!("run_seed{seed}.{}", s.format.ext()));
    let mut out = RowWriter::new(LineWriter::new(File::create(&path)?), s.format, ITER_HEADER)?;
    let mut write_err = None;
    let result = run_from(init(&h, &seeds)?, &gt, &h, &seeds, |rec| {
        if write_err.is_none() {
            write_err = out.row(&IterRow::from(rec)).err();
        }
    });
    if let Some(e) = write_err {
        return Err(e.into());
    }
    out.finish()?;
    let res = result?;
    Ok(RunSummary {
        seed,
        final_residual: res.final_residual(),
        epochs_used: res.epochs_used(),
        iterations: res.metrics.iterations.len() - 1,
        success: res.outcome.is_success(),
    })
}

pub fn cmd_run(cfg: &Config) -> Result<(), CliError> {
    let s = run_settings(cfg)?;
    std::fs::create_dir_all(&s.dir)?;
    eprintln!(
        "run: d={} r={} l={} m={} K={} H={} eta={} delta={} lambda={} eps={}, {} seed(s) -> {}",
        s.hyper.dim,
        s.hyper.rank,
        s.hyper.order,
        s.hyper.width,
        s.hyper.epochs,
        s.hyper.iters_per_epoch,
        s.hyper.eta,
        s.hyper.delta,
        s.hyper.lambda,
        s.hyper.epsilon,
        s.seeds.len(),
        s.dir.display()
    );
    sweep(&s.seeds, s.jobs, &s.dir, s.format, RUN_SUMMARY_HEADER, |seed| run_seed(&s, seed))
}

/// Result of certifying one construction.
#[derive(Clone, Debug)]
pub struct LocalminReport {
    pub loss: f64,
    pub expected: f64,
    pub grad_norm: f64,
    pub min_quotient: f64,
    pub terms: usize,
    pub decomposition_residual: f64,
}

impl LocalminReport {
    pub fn passes(&self) -> bool {
        self.grad_norm <= 1e-10 && (self.loss - self.expected).abs() <= 1e-9 && self.decomposition_residual <= 1e-8
    }
}

pub fn localmin_report(kind: &str, d: usize, r: usize, l: usize, m: Option<usize>, probes: usize, seed: u64) -> Result<LocalminReport, CliError> {
    let mut rng = SeedStream::new(seed).substream(Purpose::Probe, 0, 0);
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    match kind {
        "vanilla" => {
            let p = bad_local_min_vanilla(d, r, l, m.unwrap_or_else(|| vanilla_min_width(r, l))).map_err(usage)?;
            let g = p.flat_gradient()?;
            let rep = certify_stationary(|x| p.loss_at(x), &p.flatten(), Some(&g), probes, 1e-4, &mut rng).map_err(usage)?;
            let terms = global_min_decomposition(d, r, l)?;
            let mut diff = assemble_terms(l, &terms)?;
            diff.axpy(-1.0, &p.gt.tensor)?;
            Ok(LocalminReport {
                loss: rep.loss,
                expected: (l * (l - 1) * r) as f64 / 4.0,
                grad_norm: norm(&g),
                min_quotient: rep.min_quotient,
                terms: terms.len(),
                decomposition_residual: diff.frobenius_norm(),
            })
        }
        "2homo" => {
            let (p, gt) = bad_local_min_2homo(d, r, l, m.unwrap_or_else(|| two_homo_min_width(r, l))).map_err(usage)?;
            let g = two_homo_free_grad(&p, &gt)?;
            let rep = certify_stationary(|x| two_homo_free_loss(&p, &gt, x), &two_homo_flatten(&p), Some(&g), probes, 1e-4, &mut rng)
                .map_err(usage)?;
            let terms = global_min_decomposition_2homo(d, r, l)?;
            let mut diff = assemble_terms(l, &terms)?;
            diff.axpy(-1.0, &gt.tensor)?;
            Ok(LocalminReport {
                loss: rep.loss,
                expected: (l * (l - 1) * r) as f64 / 2.0,
                grad_norm: norm(&g),
                min_quotient: rep.min_quotient,
                terms: terms.len(),
                decomposition_residual: diff.frobenius_norm(),
            })
        }
        other => Err(CliError::Usage(format!("kind must be vanilla or 2homo, got {other:?}"))),
    }
}

pub fn cmd_localmin(cfg: &Config) -> Result<(), CliError> {
    let kind = cfg.raw("kind").unwrap_or("vanilla").to_string();
    let d = cfg.get_or("d", 4usize)?;
    let r = cfg.get_or("r", 2usize)?;
    let l = cfg.get_or("l", 3usize)?;
    let m = cfg.get("m")?;
    let probes = cfg.get_or("probes", 200usize)?;
    let seed = cfg.get_or("seed", 0u64)?;
    let rep = localmin_report(&kind, d, r, l, m, probes, seed)?;
    println!("kind: {kind}");
    println!("d: {d}\nr: {r}\nl: {l}");
    println!("loss: {}", rep.loss);
    println!("expected_loss: {}", rep.expected);
    println!("grad_norm: {:e}", rep.grad_norm);
    println!("min_probe_quotient: {:e}", rep.min_quotient);
    println!("decomposition_terms: {}", rep.terms);
    println!("decomposition_residual: {:e}", rep.decomposition_residual);
    println!("certified: {}", rep.passes());
    if rep.passes() {
        Ok(())
    } else {
        Err(CliError::Runtime("construction failed certification".into()))
    }
}

/// Largest `d^l · (dm)²` for which Monte-Carlo columns are computed.
const MC_COST_CAP: f64 = 5e9;

pub fn cmd_lazybound(cfg: &Config) -> Result<(), CliError> {
    let l = cfg.get_or("l", 4usize)?;
    let ds: Vec<usize> = parse_list("d", cfg.raw("d").unwrap_or("20,40,80"))?;
    let default_grid = format!("0:{l}:0.1");
    let (a, b, step) = parse_grid(cfg.raw("xgrid").unwrap_or(&default_grid))?;
    let xs = exponent_grid(a, b, step).map_err(usage)?;
    let mc = cfg.get_or("mc", false)?;
    let samples = cfg.get_or("samples", 20_000usize)?;
    let seeds = SeedStream::new(cfg.get_or("seed", 0u64)?);
    let points = figure_curve(&ds, l, &xs).map_err(usage)?;

    let sink: Box<dyn Write> = match cfg.raw("out") {
        Some(p) => Box::new(File::create(p)?),
        None => Box::new(io::stdout().lock()),
    };
    let mut out = LineWriter::new(sink);
    writeln!(out, "{}", if mc { CSV_HEADER_MC } else { CSV_HEADER })?;
    for mut p in points {
        let entries = (p.d as f64).powi(l as i32);
        let rank = (p.d * p.m) as f64;
        if mc && entries <= MAX_ENTRIES as f64 && entries * rank * rank <= MC_COST_CAP {
            p.mc = Some(mc_orthogonal_projection(p.d, l, p.m, samples, &seeds)?);
        }
        let row = p.csv_row();
        if mc && p.mc.is_none() {
            writeln!(out, "{row},,,")?;
        } else {
            writeln!(out, "{row}")?;
        }
    }
    out.flush()?;
    Ok(())
}

struct BaselineSettings {
    start: String,
    d: usize,
    r: usize,
    l: usize,
    m: usize,
    eta: f64,
    steps: usize,
    scale: f64,
    perturb: f64,
}

fn baseline_seed(s: &BaselineSettings, dir: &Path, format: Format, seed: u64) -> Result<BaselineSummary, CliError> {
    let seeds = SeedStream::new(seed);
    let (u, c, gt) = if s.start == "localmin" {
        let p = bad_local_min_vanilla(s.d, s.r, s.l, s.m)?;
        let mut rng = seeds.substream(Purpose::Perturb, 0, 0);
        let u = p
            .u
            .iter()
            .map(|col| col.iter().zip(standard_normal_vec(&mut rng, s.d)).map(|(x, z)| x + s.perturb * z).collect())
            .collect();
        let c = p.c.iter().map(|c| c + s.perturb * standard_normal_vec(&mut rng, 1)[0]).collect();
        (u, c, p.gt)
    } else {
        let gt = GroundTruth::random(s.d, s.r, s.l, &mut seeds.substream(Purpose::GroundTruth, 0, 0))?;
        let (u, c) = vanilla_random_start(s.d, s.m, s.scale, &mut seeds.substream(Purpose::Baseline, 0, 0));
        (u, c, gt)
    };
    let res = vanilla_run(&u, &c, &gt, s.eta, s.steps)?;
    let path = dir.join(format!("baseline_seed{seed}.{}", format.ext()));
    let mut out = RowWriter::new(LineWriter::new(File::create(&path)?), format, STEP_HEADER)?;
    for (step, &loss) in res.losses.iter().enumerate() {
        out.row(&StepRow { step, loss })?;
    }
    out.finish()?;
    let final_loss = *res.losses.last().expect("steps + 1 losses");
    Ok(BaselineSummary { seed, initial_loss: res.losses[0], final_loss, stuck: final_loss > STUCK_LOSS })
}

pub fn cmd_baseline(cfg: &Config) -> Result<(), CliError> {
    let start = cfg.raw("start").unwrap_or("random").to_string();
    let d = cfg.get_or("d", 5usize)?;
    let r = cfg.get_or("r", 2usize)?;
    let l = cfg.get_or("l", 3usize)?;
    let s = match start.as_str() {
        "random" => BaselineSettings {
            m: cfg.get_or("m", r)?,
            eta: cfg.get_or("eta", 0.02)?,
            steps: cfg.get_or("steps", 3000usize)?,
            scale: cfg.get_or("scale", 0.3)?,
            perturb: 0.0,
            start,
            d,
            r,
            l,
        },
        "localmin" => BaselineSettings {
            m: cfg.get_or("m", vanilla_min_width(r, l))?,
            eta: cfg.get_or("eta", 0.01)?,
            steps: cfg.get_or("steps", 10_000usize)?,
            scale: 0.0,
            perturb: cfg.get_or("perturb", 0.0)?,
            start,
            d,
            r,
            l,
        },
        other => return Err(CliError::Usage(format!("start must be random or localmin, got {other:?}"))),
    };
    if s.d == 0 || s.r == 0 || s.l == 0 || s.m == 0 || s.r > s.d {
        return Err(CliError::Usage("need d, r, l, m ≥ 1 and r ≤ d".into()));
    }
    if !(s.eta > 0.0) || !(s.scale >= 0.0) || !(s.perturb >= 0.0) {
        return Err(CliError::Usage("eta must be positive; scale and perturb non-negative".into()));
    }
    if s.start == "localmin" {
        bad_local_min_vanilla(s.d, s.r, s.l, s.m).map_err(usage)?;
    }
    let seeds = parse_seeds(cfg.raw("seeds").unwrap_or("1"))?;
    let format = Format::parse(cfg.raw("format").unwrap_or("csv"))?;
    let dir = output_dir(cfg);
    let jobs = jobs(cfg)?;
    std::fs::create_dir_all(&dir)?;
    sweep(&seeds, jobs, &dir, format, BASELINE_SUMMARY_HEADER, |seed| baseline_seed(&s, &dir, format, seed))
}
