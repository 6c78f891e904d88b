//! Command-line front end.
//!
//! Every command prints one JSON document on stdout; diagnostics go to
//! stderr. Exit codes: 0 success, 1 I/O failure, 2 validation failure,
//! 3 solver non-convergence.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::annotate::{read_trimap, trimap_from_masks, write_trimap};
use crate::error::{MatteError, Result};
use crate::io::{read_mask, read_matte, read_volume, write_matte};
use crate::metrics;
use crate::phantom::{self, PhantomSpec};
use crate::solver::{method_constraints, method_laplacian, solve_constrained, Method, MethodConfig};
use crate::volume::Volume3;

#[derive(Parser, Debug)]
#[command(name = "volmatte", version, about = "Volumetric alpha matting for CT lesions")]
pub struct Cli {
    /// Worker threads for assembly and solves (results do not depend on it).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Build a trimap from annotator masks.
    Trimap {
        #[arg(required = true)]
        masks: Vec<PathBuf>,
        #[arg(long, default_value_t = 2)]
        dilate: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compute an alpha matte for one volume.
    Mat(MatArgs),
    /// Matte every case directory under `--cases` in parallel.
    Batch(BatchArgs),
    /// Compare a predicted matte with ground truth.
    Eval {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        /// MSE × 1e3; SAD, Grad. and Conn. × 1e-2.
        #[arg(long)]
        paper_scaling: bool,
    },
    /// Generate a synthetic phantom case from a JSON spec.
    Phantom {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        outdir: PathBuf,
    },
    /// Export one slice of a volume as an 8-bit grayscale PNG.
    Slices {
        #[arg(long)]
        volume: PathBuf,
        #[arg(long, value_enum, default_value_t = Axis::Z)]
        axis: Axis,
        /// Slice index; defaults to the middle slice.
        #[arg(long)]
        index: Option<usize>,
        /// Display window `low,high`; defaults to the volume's value range.
        #[arg(long, value_parser = parse_window, allow_hyphen_values = true)]
        window: Option<(f64, f64)>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Axis {
    X,
    Y,
    Z,
}

#[derive(Args, Debug, Clone, Default)]
pub struct SolverOverrides {
    /// JSON file mirroring the typed configs (window, knn, calibration, solver).
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub max_iters: Option<usize>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long = "window-size")]
    pub window_size: Option<usize>,
    #[arg(long)]
    pub k_neighbors: Option<usize>,
    #[arg(long)]
    pub spatial_weight: Option<f64>,
}

impl SolverOverrides {
    pub fn resolve(&self) -> Result<MethodConfig> {
        let mut cfg = match &self.config {
            Some(p) => {
                let text = fs::read_to_string(p).map_err(|e| MatteError::io(p, e))?;
                serde_json::from_str(&text)
                    .map_err(|e| MatteError::Parse(format!("{}: {e}", p.display())))?
            }
            None => MethodConfig::default(),
        };
        if let Some(v) = self.lambda {
            cfg.solver.lambda = v;
        }
        if let Some(v) = self.tol {
            cfg.solver.tol = v;
        }
        if let Some(v) = self.max_iters {
            cfg.solver.max_iters = v;
        }
        if let Some(v) = self.epsilon {
            cfg.window.epsilon = v;
        }
        if let Some(v) = self.window_size {
            cfg.window.k = v;
        }
        if let Some(v) = self.k_neighbors {
            cfg.knn.k_neighbors = v;
        }
        if let Some(v) = self.spatial_weight {
            cfg.knn.spatial_weight = v;
        }
        Ok(cfg)
    }
}

#[derive(Args, Debug)]
pub struct MatArgs {
    /// CF, CF_PLUS, KNN or KNN_PLUS.
    #[arg(long)]
    pub method: String,
    #[arg(long)]
    pub volume: PathBuf,
    #[arg(long)]
    pub trimap: PathBuf,
    #[command(flatten)]
    pub overrides: SolverOverrides,
    #[arg(long)]
    pub out: PathBuf,
    /// Where to write the solve report; it is always printed on stdout.
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Write the assembled Laplacian as `p q value` triplets.
    #[arg(long)]
    pub dump_laplacian: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct BatchArgs {
    #[arg(long)]
    pub method: String,
    /// Directory whose subdirectories each hold `volume.json` and a trimap
    /// (`trimap.json` or `gt_trimap.json`).
    #[arg(long)]
    pub cases: PathBuf,
    #[command(flatten)]
    pub overrides: SolverOverrides,
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
}

fn parse_window(s: &str) -> std::result::Result<(f64, f64), String> {
    let (a, b) = s.split_once(',').ok_or("expected `low,high`")?;
    let lo: f64 = a.trim().parse().map_err(|e| format!("{e}"))?;
    let hi: f64 = b.trim().parse().map_err(|e| format!("{e}"))?;
    Ok((lo, hi))
}

#[derive(Serialize)]
struct JobReport {
    method: &'static str,
    converged: bool,
    iterations: usize,
    final_relative_residual: f64,
    clamped_fraction: Option<f64>,
}

/// A failed command: the error plus any partial result worth reporting.
#[derive(Debug)]
pub struct Failure {
    pub error: MatteError,
    pub detail: Option<Value>,
}

impl From<MatteError> for Failure {
    fn from(error: MatteError) -> Self {
        Failure { error, detail: None }
    }
}

type CmdResult = std::result::Result<Value, Failure>;

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| MatteError::Format(format!("json serialization: {e}")))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| MatteError::io(path, e))
}

type CaseOutcome = std::result::Result<JobReport, (MatteError, Option<JobReport>)>;

/// Solves one case and writes its matte. Convergence failures still
/// produce a report, returned alongside the error.
fn solve_case(
    method: Method,
    volume: &Volume3,
    trimap_path: &Path,
    cfg: &MethodConfig,
    out: &Path,
    dump: Option<&Path>,
) -> CaseOutcome {
    let run = || -> Result<_> {
        let t = read_trimap(trimap_path)?;
        let l = method_laplacian(method, volume, cfg)?;
        if let Some(p) = dump {
            let f = fs::File::create(p).map_err(|e| MatteError::io(p, e))?;
            l.write_triplets(std::io::BufWriter::new(f))
                .map_err(|e| MatteError::io(p, e))?;
        }
        let c = method_constraints(method, volume, &t, cfg)?;
        solve_constrained(&l, &c, &cfg.solver, volume)
    };
    match run() {
        Ok((alpha, r)) => {
            write_matte(&alpha, out).map_err(|e| (e, None))?;
            Ok(JobReport {
                method: method.name(),
                converged: true,
                iterations: r.iterations,
                final_relative_residual: r.final_relative_residual,
                clamped_fraction: Some(r.clamped_fraction),
            })
        }
        Err(MatteError::Convergence { iterations, residual }) => {
            let report = JobReport {
                method: method.name(),
                converged: false,
                iterations,
                final_relative_residual: residual,
                clamped_fraction: None,
            };
            Err((MatteError::Convergence { iterations, residual }, Some(report)))
        }
        Err(e) => Err((e, None)),
    }
}

fn cmd_mat(args: &MatArgs) -> CmdResult {
    let method: Method = args.method.parse()?;
    let cfg = args.overrides.resolve()?;
    let volume = read_volume(&args.volume)?;
    let outcome = solve_case(
        method,
        &volume,
        &args.trimap,
        &cfg,
        &args.out,
        args.dump_laplacian.as_deref(),
    );
    let (report, err) = match outcome {
        Ok(r) => (Some(r), None),
        Err((e, r)) => (r, Some(e)),
    };
    if let (Some(p), Some(r)) = (&args.report, &report) {
        write_json(p, r)?;
    }
    let report = serde_json::to_value(&report).unwrap_or(Value::Null);
    match err {
        None => Ok(report),
        Some(error) => Err(Failure { error, detail: Some(report) }),
    }
}

fn case_dirs(root: &Path) -> Result<Vec<PathBuf>> {
    let mut dirs: Vec<PathBuf> = fs::read_dir(root)
        .map_err(|e| MatteError::io(root, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join("volume.json").is_file())
        .collect();
    dirs.sort();
    Ok(dirs)
}

fn cmd_batch(args: &BatchArgs) -> CmdResult {
    let method: Method = args.method.parse()?;
    let cfg = args.overrides.resolve()?;
    if args.jobs == 0 {
        return Err(MatteError::Argument("--jobs must be at least 1".into()).into());
    }
    let dirs = case_dirs(&args.cases)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(args.jobs)
        .build()
        .map_err(|e| MatteError::Argument(format!("thread pool: {e}")))?;
    let results: Vec<(PathBuf, CaseOutcome)> =
        pool.install(|| {
            dirs.par_iter()
                .map(|dir| {
                    let trimap = ["trimap.json", "gt_trimap.json"]
                        .iter()
                        .map(|n| dir.join(n))
                        .find(|p| p.is_file())
                        .unwrap_or_else(|| dir.join("trimap.json"));
                    let res = read_volume(dir.join("volume.json")).map_err(|e| (e, None)).and_then(|v| {
                        solve_case(method, &v, &trimap, &cfg, &dir.join("alpha.json"), None)
                    });
                    if let Ok(r) | Err((_, Some(r))) = &res {
                        if let Err(e) = write_json(&dir.join("report.json"), r) {
                            return (dir.clone(), Err((e, None)));
                        }
                    }
                    (dir.clone(), res)
                })
                .collect()
        });
    let mut first_err = None;
    let mut entries = Vec::new();
    for (dir, res) in results {
        let name = dir.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        match res {
            Ok(r) => entries.push(json!({"case": name, "ok": true, "report": r})),
            Err((e, r)) => {
                eprintln!("case {name}: {e}");
                entries.push(json!({"case": name, "ok": false, "error": e.to_string(), "report": r}));
                first_err.get_or_insert(e);
            }
        }
    }
    match first_err {
        None => Ok(json!({"method": method.name(), "cases": entries})),
        Some(error) => Err(Failure {
            error,
            detail: Some(json!({"method": method.name(), "cases": entries})),
        }),
    }
}

fn cmd_trimap(masks: &[PathBuf], dilate: usize, out: &Path) -> Result<Value> {
    let masks = masks.iter().map(read_mask).collect::<Result<Vec<_>>>()?;
    let t = trimap_from_masks(&masks, dilate)?;
    write_trimap(&t, out)?;
    let c = t.counts();
    Ok(json!({
        "out": out,
        "dims": t.dims(),
        "foreground": c.foreground,
        "background": c.background,
        "unknown": c.unknown,
    }))
}

fn cmd_eval(pred: &Path, gt: &Path, paper_scaling: bool) -> Result<Value> {
    let pred = read_matte(pred)?;
    let gt = read_matte(gt)?;
    let raw = metrics::report(&pred, &gt, false)?;
    let shown = if paper_scaling { raw.paper_scaled() } else { raw };
    Ok(json!({
        "sad": shown.sad,
        "mse": shown.mse,
        "grad": shown.grad,
        "conn": shown.conn,
        "scaled": shown.scaled,
        "raw": {"sad": raw.sad, "mse": raw.mse, "grad": raw.grad, "conn": raw.conn},
    }))
}

fn cmd_phantom(spec: &Path, outdir: &Path) -> Result<Value> {
    let text = fs::read_to_string(spec).map_err(|e| MatteError::io(spec, e))?;
    let spec: PhantomSpec =
        serde_json::from_str(&text).map_err(|e| MatteError::Parse(format!("{}: {e}", spec.display())))?;
    let case = phantom::generate(&spec)?;
    let files = phantom::write_case(&case, outdir)?;
    let c = case.gt_trimap.counts();
    Ok(json!({
        "files": files,
        "dims": spec.dims,
        "trimap": {"foreground": c.foreground, "background": c.background, "unknown": c.unknown},
    }))
}

/// Pixels of one slice in row-major order plus `(width, height)`.
pub fn extract_slice(v: &Volume3, axis: Axis, index: usize) -> Result<(Vec<f64>, usize, usize)> {
    let d = v.dims();
    let (w, h, depth) = match axis {
        Axis::X => (d.ny, d.nz, d.nx),
        Axis::Y => (d.nx, d.nz, d.ny),
        Axis::Z => (d.nx, d.ny, d.nz),
    };
    if index >= depth {
        return Err(MatteError::Argument(format!(
            "slice {index} out of range for {depth} slices along {axis:?}"
        )));
    }
    let mut px = Vec::with_capacity(w * h);
    for r in 0..h {
        for c in 0..w {
            px.push(match axis {
                Axis::X => v.get(index, c, r),
                Axis::Y => v.get(c, index, r),
                Axis::Z => v.get(c, r, index),
            });
        }
    }
    Ok((px, w, h))
}

fn cmd_slices(volume: &Path, axis: Axis, index: Option<usize>, window: Option<(f64, f64)>, out: &Path) -> Result<Value> {
    let v = read_volume(volume)?;
    let d = v.dims();
    let depth = match axis {
        Axis::X => d.nx,
        Axis::Y => d.ny,
        Axis::Z => d.nz,
    };
    let index = index.unwrap_or(depth / 2);
    let (px, w, h) = extract_slice(&v, axis, index)?;
    let (lo, hi) = window.unwrap_or_else(|| {
        v.data()
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)))
    });
    let bytes: Vec<u8> = px
        .iter()
        .map(|&x| {
            if hi > lo {
                (255.0 * ((x - lo) / (hi - lo)).clamp(0.0, 1.0)).round() as u8
            } else {
                0
            }
        })
        .collect();
    let file = fs::File::create(out).map_err(|e| MatteError::io(out, e))?;
    let mut enc = png::Encoder::new(std::io::BufWriter::new(file), w as u32, h as u32);
    enc.set_color(png::ColorType::Grayscale);
    enc.set_depth(png::BitDepth::Eight);
    let png_err = |e: png::EncodingError| match e {
        png::EncodingError::IoError(io) => MatteError::io(out, io),
        other => MatteError::Format(format!("png encoding: {other}")),
    };
    let mut writer = enc.write_header().map_err(png_err)?;
    writer.write_image_data(&bytes).map_err(png_err)?;
    writer.finish().map_err(png_err)?;
    Ok(json!({
        "out": out,
        "axis": format!("{axis:?}").to_lowercase(),
        "index": index,
        "width": w,
        "height": h,
        "window": [lo, hi],
    }))
}

pub fn run(cli: &Cli) -> CmdResult {
    match &cli.command {
        Command::Trimap { masks, dilate, out } => Ok(cmd_trimap(masks, *dilate, out)?),
        Command::Mat(args) => cmd_mat(args),
        Command::Batch(args) => cmd_batch(args),
        Command::Eval { pred, gt, paper_scaling } => Ok(cmd_eval(pred, gt, *paper_scaling)?),
        Command::Phantom { spec, outdir } => Ok(cmd_phantom(spec, outdir)?),
        Command::Slices { volume, axis, index, window, out } => {
            Ok(cmd_slices(volume, *axis, *index, *window, out)?)
        }
    }
}

fn error_kind(e: &MatteError) -> &'static str {
    match e {
        MatteError::Io { .. } => "io",
        MatteError::Parse(_) => "parse",
        MatteError::Format(_) => "format",
        MatteError::Validation(_) => "validation",
        MatteError::Shape(_) => "shape",
        MatteError::Argument(_) => "argument",
        MatteError::Range { .. } => "range",
        MatteError::Singular(_) => "singular",
        MatteError::Convergence { .. } => "convergence",
        MatteError::UnsupportedMethod(_) => "unsupported_method",
    }
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let result = match cli.threads {
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build() {
            Ok(pool) => pool.install(|| run(&cli)),
            Err(e) => Err(MatteError::Argument(format!("thread pool: {e}")).into()),
        },
        None => run(&cli),
    };
    match result {
        Ok(value) => {
            println!("{}", serde_json::to_string_pretty(&value).unwrap_or_default());
            0
        }
        Err(Failure { error, detail }) => {
            eprintln!("error: {error}");
            let doc = json!({
                "error": error_kind(&error),
                "message": error.to_string(),
                "exit_code": error.exit_code(),
                "detail": detail,
            });
            println!("{}", serde_json::to_string_pretty(&doc).unwrap_or_default());
            error.exit_code()
        }
    }
}
