//! The `riq` command line.
//!
//! Exit codes: 0 success, 1 error (one line on stderr), 2 when the search
//! could not meet its target. In that last case the best-effort archive and
//! its report are still written.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::analysis::{
    compare_uniform, fit_csv, fit_inverse_square, high_rate_half, layers_csv, log_spaced_grid,
    sweep, sweep_csv, uniform_csv, DEFAULT_GRID_POINTS,
};
use crate::archive::{compress, compression_ratio, read_archive, write_archive};
use crate::error::{Error, Result};
use crate::forward::{cosine_deviation, load_calibration, CalibrationSet, CalibrationSource};
use crate::model::{load_model, save_model, LayerKind, Model};
use crate::quant::{empirical_entropy, layer_rate, DEFAULT_EPS0};
use crate::search::{
    k_bounds, rate_targeted_search, riq_search, SearchBounds, SearchOutcome, SearchParams,
};

pub const EXIT_OK: u8 = 0;
pub const EXIT_ERROR: u8 = 1;
pub const EXIT_UNSATISFIABLE: u8 = 2;

pub const DEFAULT_GAUSS_SAMPLES: usize = 4;
pub const DEFAULT_UNIFORM_BITS: &[u32] = &[2, 3, 4, 5, 6];

#[derive(Debug, Parser)]
#[command(
    name = "riq",
    version,
    about = "Rotation-invariant quantization and entropy coding of network weights"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Search for the smallest k meeting a deviation budget (or a ratio target) and write a .rqz archive.
    Compress(CompressArgs),
    /// Rebuild a model directory from a .rqz archive.
    Decompress(DecompressArgs),
    /// Quantize over a log-spaced k grid and write sweep.csv.
    Sweep(SweepArgs),
    /// Sweep, fit the inverse-square law and compare against range-based quantization.
    Analyze(AnalyzeArgs),
}

#[derive(Debug, Args)]
pub struct CalibArgs {
    /// Calibration blob (f32 little-endian, with a JSON sidecar).
    #[arg(long, conflicts_with = "gauss_calib")]
    pub calib: Option<PathBuf>,
    /// Gaussian calibration as COUNT,SEED.
    #[arg(long, value_name = "N,SEED")]
    pub gauss_calib: Option<String>,
}

#[derive(Debug, Args)]
#[command(group(clap::ArgGroup::new("target").required(true).args(["deviation", "target_ratio"])))]
pub struct CompressArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub calib: CalibArgs,
    /// Mean output deviation budget D in (0, 2].
    #[arg(long)]
    pub deviation: Option<f64>,
    /// Minimum estimated compression ratio.
    #[arg(long)]
    pub target_ratio: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_EPS0)]
    pub eps0: f64,
    #[arg(long, default_value_t = crate::search::DEFAULT_STOP_THRESHOLD)]
    pub stop_threshold: f64,
    /// Report path; defaults to the archive path with a .json extension.
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Also write the search trace as CSV.
    #[arg(long)]
    pub trace: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DecompressArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Decode only this layer.
    #[arg(long)]
    pub layer: Option<String>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// LO:HI:N, N log-spaced values of k.
    #[arg(long)]
    pub grid: String,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub calib: CalibArgs,
    /// ε₀ floor used when quantizing.
    #[arg(long, default_value_t = DEFAULT_EPS0)]
    pub eps0: f64,
    /// ε₀ used for the admissible k interval.
    #[arg(long, default_value_t = DEFAULT_EPS0)]
    pub bounds_eps0: f64,
    /// Also write per-layer rows.
    #[arg(long)]
    pub layers: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub calib: CalibArgs,
    /// ε₀ floor used in the sweep; 0 isolates the 1/k term.
    #[arg(long, default_value_t = 0.0)]
    pub eps0: f64,
    #[arg(long, default_value_t = DEFAULT_EPS0)]
    pub bounds_eps0: f64,
    #[arg(long, default_value_t = DEFAULT_GRID_POINTS)]
    pub points: usize,
    /// Comma-separated bit widths for the range-based baseline.
    #[arg(long, value_delimiter = ',')]
    pub bits: Option<Vec<u32>>,
    #[arg(long, default_value_t = crate::search::DEFAULT_STOP_THRESHOLD)]
    pub stop_threshold: f64,
}

/// Parse `args` (including the program name) and run. Returns the exit code.
pub fn run<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_ERROR } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_ERROR
        }
    }
}

pub fn execute(command: &Command) -> Result<u8> {
    match command {
        Command::Compress(a) => cmd_compress(a),
        Command::Decompress(a) => cmd_decompress(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Analyze(a) => cmd_analyze(a),
    }
}

fn parse_gauss(spec: &str) -> Result<(usize, u64)> {
    let bad = || Error::InvalidCalibration(format!("expected COUNT,SEED, got {spec:?}"));
    let (n, seed) = spec.split_once(',').ok_or_else(bad)?;
    let n: usize = n.trim().parse().map_err(|_| bad())?;
    let seed: u64 = seed.trim().parse().map_err(|_| bad())?;
    Ok((n, seed))
}

/// Input shape of a model whose first layer is dense.
fn dense_input_shape(model: &Model) -> Result<Vec<usize>> {
    let first = model.layers.first().ok_or(Error::EmptyArch)?;
    match first.kind {
        LayerKind::Dense => Ok(vec![first.fan_in()]),
        LayerKind::Conv2d => Err(Error::InvalidCalibration(
            "a convolutional first layer needs an explicit --calib file".into(),
        )),
    }
}

fn calibration(args: &CalibArgs, model: &Model) -> Result<CalibrationSet> {
    if let Some(path) = &args.calib {
        return load_calibration(path);
    }
    let (count, seed) = match &args.gauss_calib {
        Some(spec) => parse_gauss(spec)?,
        None => (DEFAULT_GAUSS_SAMPLES, 0),
    };
    CalibrationSet::gaussian(seed, count, &dense_input_shape(model)?)
}

fn check_distinct(paths: &[&Path]) -> Result<()> {
    for (i, a) in paths.iter().enumerate() {
        if paths[i + 1..].contains(a) {
            return Err(Error::InvalidConfig(format!(
                "path {} used twice",
                a.display()
            )));
        }
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct CalibrationInfo {
    source: CalibrationSource,
    count: usize,
    shape: Vec<usize>,
}

#[derive(Debug, Serialize)]
struct LayerReport {
    name: String,
    n: usize,
    delta: f64,
    eps: f64,
    rate: Option<f64>,
    entropy: f64,
    stream_bytes: usize,
    bits_per_symbol: f64,
    zero_norm: bool,
}

#[derive(Debug, Serialize)]
struct CompressReport {
    archive: PathBuf,
    mode: &'static str,
    deviation_budget: Option<f64>,
    target_ratio: Option<f64>,
    satisfied: bool,
    chosen_k: f64,
    deviation: f64,
    max_deviation: f64,
    est_ratio: f64,
    actual_ratio: f64,
    archive_bytes: usize,
    payload_bytes: usize,
    evaluations: usize,
    iterations: usize,
    eps0: f64,
    stop_threshold: f64,
    bounds: SearchBounds,
    calibration: CalibrationInfo,
    layers: Vec<LayerReport>,
}

fn cmd_compress(a: &CompressArgs) -> Result<u8> {
    let report_path = a
        .report
        .clone()
        .unwrap_or_else(|| a.out.with_extension("json"));
    let mut paths = vec![a.model.as_path(), a.out.as_path(), report_path.as_path()];
    paths.extend(a.trace.as_deref());
    paths.extend(a.calib.calib.as_deref());
    check_distinct(&paths)?;

    let model = load_model(&a.model)?;
    let calib = calibration(&a.calib, &model)?;
    let params = SearchParams {
        eps0: a.eps0,
        stop_threshold: a.stop_threshold,
    };
    let (mode, result) = match (a.deviation, a.target_ratio) {
        (Some(d), None) => ("deviation", riq_search(&model, &calib, d, &params)),
        (None, Some(r)) => (
            "target_ratio",
            rate_targeted_search(&model, &calib, r, &params),
        ),
        _ => {
            return Err(Error::InvalidConfig(
                "give exactly one of --deviation and --target-ratio".into(),
            ))
        }
    };
    let outcome: SearchOutcome = match result {
        Ok(o) => o,
        Err(Error::Unsatisfiable(best)) => *best,
        Err(e) => return Err(e),
    };

    let archive = compress(&outcome.qmodel)?;
    write_archive(&archive, &a.out)?;
    if let Some(trace) = &a.trace {
        fs::write(trace, outcome.trace.to_csv())?;
    }

    // measured on the archive's own reconstruction, as a reader would see it
    let restored = archive.to_model()?;
    let measured = cosine_deviation(&model, &restored, &calib)?;
    let ratio = compression_ratio(&outcome.qmodel, &archive)?;
    let mut layers = Vec::with_capacity(model.len());
    for (i, (q, rec)) in outcome
        .qmodel
        .layers
        .iter()
        .zip(&archive.records)
        .enumerate()
    {
        layers.push(LayerReport {
            name: rec.name.clone(),
            n: q.len(),
            delta: q.delta,
            eps: measured.per_layer_distortion[i],
            rate: layer_rate(&model.weights[i], q.delta).ok(),
            entropy: empirical_entropy(&q.symbols)?,
            stream_bytes: rec.stream.len(),
            bits_per_symbol: 8.0 * rec.stream.len() as f64 / q.len() as f64,
            zero_norm: q.zero_norm,
        });
    }
    let report = CompressReport {
        archive: a.out.clone(),
        mode,
        deviation_budget: a.deviation,
        target_ratio: a.target_ratio,
        satisfied: outcome.satisfied,
        chosen_k: outcome.trace.chosen_k,
        deviation: measured.mean_deviation,
        max_deviation: measured.max_deviation,
        est_ratio: ratio.estimated,
        actual_ratio: ratio.actual,
        archive_bytes: ratio.archive_bytes,
        payload_bytes: ratio.payload_bytes,
        evaluations: outcome.trace.evaluations.len(),
        iterations: outcome.trace.iterations,
        eps0: a.eps0,
        stop_threshold: a.stop_threshold,
        bounds: outcome.bounds,
        calibration: CalibrationInfo {
            source: calib.source,
            count: calib.len(),
            shape: calib.samples[0].shape.clone(),
        },
        layers,
    };
    fs::write(&report_path, serde_json::to_string_pretty(&report)? + "\n")?;

    println!(
        "k = {:.4}, deviation = {:.6e}, ratio = {:.2} ({} bytes){}",
        report.chosen_k,
        report.deviation,
        report.actual_ratio,
        report.archive_bytes,
        if outcome.satisfied {
            ""
        } else {
            ", target not met"
        }
    );
    if outcome.satisfied {
        Ok(EXIT_OK)
    } else {
        eprintln!(
            "error: Unsatisfiable: best effort written at k = {}",
            report.chosen_k
        );
        Ok(EXIT_UNSATISFIABLE)
    }
}

fn cmd_decompress(a: &DecompressArgs) -> Result<u8> {
    check_distinct(&[a.input.as_path(), a.out.as_path()])?;
    let archive = read_archive(&a.input)?;
    let model = match &a.layer {
        Some(name) => archive.decode_layer(name)?,
        None => archive.to_model()?,
    };
    save_model(&model, &a.out)?;
    Ok(EXIT_OK)
}

/// Parse `LO:HI:N` into a log-spaced grid.
pub fn parse_grid(spec: &str) -> Result<Vec<f64>> {
    let bad = || Error::InvalidGrid(format!("expected LO:HI:N, got {spec:?}"));
    let parts: Vec<&str> = spec.split(':').collect();
    let [lo, hi, n] = parts.as_slice() else {
        return Err(bad());
    };
    let lo: f64 = lo.trim().parse().map_err(|_| bad())?;
    let hi: f64 = hi.trim().parse().map_err(|_| bad())?;
    let n: usize = n.trim().parse().map_err(|_| bad())?;
    log_spaced_grid(lo, hi, n)
}

fn cmd_sweep(a: &SweepArgs) -> Result<u8> {
    let mut paths = vec![a.model.as_path(), a.out.as_path()];
    paths.extend(a.layers.as_deref());
    check_distinct(&paths)?;
    let grid = parse_grid(&a.grid)?;
    let model = load_model(&a.model)?;
    let calib = calibration(&a.calib, &model)?;
    let bounds = k_bounds(&model, a.bounds_eps0)?;
    let points = sweep(&model, &calib, &grid, a.eps0, &bounds)?;
    fs::write(&a.out, sweep_csv(&points))?;
    if let Some(path) = &a.layers {
        fs::write(path, layers_csv(&points))?;
    }
    Ok(EXIT_OK)
}

fn cmd_analyze(a: &AnalyzeArgs) -> Result<u8> {
    check_distinct(&[a.model.as_path(), a.out.as_path()])?;
    let model = load_model(&a.model)?;
    let calib = calibration(&a.calib, &model)?;
    let bounds = k_bounds(&model, a.bounds_eps0)?;
    let grid = log_spaced_grid(bounds.k_min, bounds.k_max, a.points)?;
    let points = sweep(&model, &calib, &grid, a.eps0, &bounds)?;

    let (lo, _) = high_rate_half(&bounds);
    let upper: Vec<(f64, f64)> = points
        .iter()
        .filter(|p| p.k >= lo)
        .map(|p| (p.k, p.mean_deviation))
        .collect();
    let fit = fit_inverse_square(&upper)?;

    let params = SearchParams {
        eps0: a.bounds_eps0,
        stop_threshold: a.stop_threshold,
    };
    let bits = a
        .bits
        .clone()
        .unwrap_or_else(|| DEFAULT_UNIFORM_BITS.to_vec());
    let uniform = compare_uniform(&model, &calib, &bits, &params)?;

    fs::create_dir_all(&a.out)?;
    fs::write(a.out.join("sweep.csv"), sweep_csv(&points))?;
    fs::write(a.out.join("layers.csv"), layers_csv(&points))?;
    fs::write(a.out.join("fit.csv"), fit_csv(&fit))?;
    fs::write(a.out.join("uniform.csv"), uniform_csv(&uniform))?;

    println!(
        "k in [{:.4}, {:.4}], {} sweep points",
        bounds.k_min,
        bounds.k_max,
        points.len()
    );
    println!(
        "fit over k >= {:.4}: a = {:.6e}, r2 = {:.6}",
        lo, fit.a, fit.r_squared
    );
    for u in &uniform {
        let fmt = |r: Option<f64>| r.map(|r| format!("{r:.2}")).unwrap_or_else(|| "-".into());
        match &u.riq {
            Some(r) => println!(
                "{:>2} bits: deviation {:.3e}, ratio {} | riq k {:.2}, deviation {:.3e}, ratio {}",
                u.bits,
                u.deviation,
                fmt(u.actual_ratio),
                r.k,
                r.deviation,
                fmt(r.actual_ratio)
            ),
            None => println!(
                "{:>2} bits: deviation {:.3e}, ratio {}",
                u.bits,
                u.deviation,
                fmt(u.actual_ratio)
            ),
        }
    }
    Ok(EXIT_OK)
}
