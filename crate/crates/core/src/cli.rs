//! Command-line front end: argument parsing, dispatch and run reports.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use crate::beam::{BeamGeometry, DEFAULT_TRUNCATION};
use crate::cube::HyperCube;
use crate::deblur::{
    deblur_bands, DeblurMethod, DEFAULT_HL_ALPHA, DEFAULT_HL_LAMBDA, DEFAULT_HL_OUTER_ITERATIONS,
    DEFAULT_RL_ITERATIONS,
};
use crate::denoise::{PatchDenoiseParams, DEFAULT_PATCH_SIZE, DEFAULT_SEARCH_WINDOW};
use crate::error::{config, validation, Error, Result};
use crate::forward::{simulate, Contrast, NoiseModel, PhantomKind, PhantomSpec};
use crate::io::{export_band, fnv1a64, read_cube, write_csv_file, write_cube, write_image_png, write_rgb_png};
use crate::metrics::{
    false_color, feature_sharpness, flat_region_std, mse_psnr, psnr_for_csv, CrossSection, FalseColorRanges,
    Orientation, RegionOfInterest, DEFAULT_SHARPNESS_TOLERANCE,
};
use crate::pipeline::{
    analyze, restore, ComponentRecord, NoiseType, PsfScaleMode, RestorationConfig, RestorationMethod, StageTiming,
    DEFAULT_NOISE_PROBE_SEED,
};
use crate::subspace::{estimate_noise, SubspaceDim};

/// Environment variable holding the default worker count.
pub const WORKERS_ENV: &str = "THZ_WORKERS";

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 1;
pub const EXIT_IO: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "thz-restore", version, about = "Simulate and restore THz hyperspectral amplitude cubes")]
pub struct Cli {
    /// Worker threads; defaults to the available parallelism.
    #[arg(long, global = true, env = WORKERS_ENV)]
    pub workers: Option<usize>,

    /// Run-report path; defaults to `<primary output>.report.json`.
    #[arg(long, global = true)]
    pub report: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a phantom and its blurred, noisy observation.
    Simulate(SimulateArgs),
    /// Component report (CSV) and eigen-image PNGs of a cube.
    Analyze(AnalyzeArgs),
    /// Band-by-band deconvolution with the beam PSF of every band.
    Deblur(DeblurArgs),
    /// Subspace denoising (FastHyDe).
    Denoise(RestoreArgs),
    /// Subspace denoising, optionally with per-component deconvolution.
    Restore(RestoreArgs),
    /// Per-band flat-region std, feature sharpness and error metrics (CSV).
    Metrics(MetricsArgs),
    /// False-colour composite of three integrated frequency ranges.
    Falsecolor(FalseColorArgs),
    /// Export bands as grayscale PNGs.
    Export(ExportArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PhantomArg {
    Disk,
    Rings,
    Bars,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseArg {
    Iid,
    Noniid,
    Poisson,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodArg {
    Fasthyde,
    Joint,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DeblurArg {
    Rl,
    Wiener,
    Hyplap,
}

#[derive(Debug, Args)]
pub struct OpticsArgs {
    /// Focal length over aperture diameter of the focusing optics.
    #[arg(long, default_value_t = 4.0)]
    pub f_number: f64,
    /// Defocus distance in mm.
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub z: f64,
    /// PSF truncation radius in beam radii.
    #[arg(long, default_value_t = DEFAULT_TRUNCATION)]
    pub truncation: f64,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, value_enum, default_value_t = PhantomArg::Disk)]
    pub phantom: PhantomArg,
    /// Image height and width in pixels.
    #[arg(long, default_value_t = 64)]
    pub size: usize,
    /// Disk radius in pixels (disk phantom).
    #[arg(long, default_value_t = 16.0)]
    pub radius: f64,
    /// Ring width and outer radius in pixels (rings phantom).
    #[arg(long, default_value_t = 3.0)]
    pub ring_width: f64,
    #[arg(long, default_value_t = 28.0)]
    pub outer_radius: f64,
    /// Bar width in pixels (bars phantom).
    #[arg(long, default_value_t = 4)]
    pub bar_width: usize,
    /// Pixel pitch in mm.
    #[arg(long, default_value_t = 0.2)]
    pub step: f64,
    #[arg(long, default_value_t = 0.97)]
    pub freq_min: f64,
    #[arg(long, default_value_t = 3.11)]
    pub freq_max: f64,
    #[arg(long, default_value_t = 30)]
    pub bands: usize,
    #[arg(long, default_value_t = 1.0)]
    pub background: f64,
    /// Foreground amplitude at the first and last band (linear ramp).
    #[arg(long, default_value_t = 0.1)]
    pub fg_start: f64,
    #[arg(long, default_value_t = 0.4)]
    pub fg_end: f64,
    #[arg(long, value_enum, default_value_t = NoiseArg::Iid)]
    pub noise: NoiseArg,
    /// Noise level; for `noniid` the level of the first band.
    #[arg(long, default_value_t = 0.05)]
    pub sigma: f64,
    /// Noise level of the last band for `noniid` (linear ramp).
    #[arg(long)]
    pub sigma_max: Option<f64>,
    /// Poisson gain.
    #[arg(long, default_value_t = 0.01)]
    pub gain: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub optics: OpticsArgs,
    /// Clean phantom output.
    #[arg(long)]
    pub clean: PathBuf,
    /// Degraded observation output.
    #[arg(long)]
    pub degraded: PathBuf,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    pub input: PathBuf,
    /// Directory for `components.csv` and the eigen-image PNGs.
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Subspace dimension or `auto`.
    #[arg(long, default_value = "auto")]
    pub p: String,
    #[arg(long, value_enum, default_value_t = NoiseArg::Iid)]
    pub noise: NoiseArg,
    #[arg(long, default_value_t = 0.01)]
    pub gain: f64,
}

#[derive(Debug, Args)]
pub struct DeblurParamArgs {
    #[arg(long, value_enum, default_value_t = DeblurArg::Wiener)]
    pub deblur: DeblurArg,
    /// Richardson–Lucy iterations.
    #[arg(long, default_value_t = DEFAULT_RL_ITERATIONS)]
    pub iterations: usize,
    /// Wiener noise-to-signal ratio; estimated from the noise level when omitted.
    #[arg(long)]
    pub nsr: Option<f64>,
    /// Hyper-Laplacian regularisation weight, exponent and outer iterations.
    #[arg(long, default_value_t = DEFAULT_HL_LAMBDA)]
    pub lambda_reg: f64,
    #[arg(long, default_value_t = DEFAULT_HL_ALPHA)]
    pub alpha: f64,
    #[arg(long, default_value_t = DEFAULT_HL_OUTER_ITERATIONS)]
    pub outer_iterations: usize,
}

impl DeblurParamArgs {
    fn method(&self) -> DeblurMethod {
        match self.deblur {
            DeblurArg::Rl => DeblurMethod::RichardsonLucy { iterations: self.iterations },
            DeblurArg::Wiener => DeblurMethod::Wiener { nsr: self.nsr },
            DeblurArg::Hyplap => DeblurMethod::HyperLaplacian {
                lambda_reg: self.lambda_reg,
                alpha: self.alpha,
                outer_iterations: self.outer_iterations,
            },
        }
    }
}

#[derive(Debug, Args)]
pub struct DeblurArgs {
    pub input: PathBuf,
    pub output: PathBuf,
    #[command(flatten)]
    pub params: DeblurParamArgs,
    #[command(flatten)]
    pub optics: OpticsArgs,
    /// Directory for per-band PNGs of the result.
    #[arg(long)]
    pub png_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RestoreArgs {
    pub input: PathBuf,
    pub output: PathBuf,
    #[arg(long, value_enum, default_value_t = MethodArg::Fasthyde)]
    pub method: MethodArg,
    /// Subspace dimension or `auto`.
    #[arg(long, default_value = "auto")]
    pub p: String,
    #[arg(long, value_enum, default_value_t = NoiseArg::Iid)]
    pub noise: NoiseArg,
    /// Poisson gain.
    #[arg(long, default_value_t = 0.01)]
    pub gain: f64,
    #[command(flatten)]
    pub deblur: DeblurParamArgs,
    #[command(flatten)]
    pub optics: OpticsArgs,
    /// `auto` (effective frequency) or `manual:w0,w1,...` beam radii in mm.
    #[arg(long, default_value = "auto")]
    pub psf_scale: String,
    /// Component indices to zero before reconstruction, e.g. `9,10,11`.
    #[arg(long, value_delimiter = ',')]
    pub discard: Vec<usize>,
    #[arg(long, default_value_t = DEFAULT_PATCH_SIZE)]
    pub patch_size: usize,
    #[arg(long, default_value_t = DEFAULT_SEARCH_WINDOW)]
    pub search_window: usize,
    /// Denoising strength `h / sigma`.
    #[arg(long)]
    pub strength: Option<f64>,
    /// Seed of the noise probe used by the joint method.
    #[arg(long, default_value_t = DEFAULT_NOISE_PROBE_SEED)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct MetricsArgs {
    pub input: PathBuf,
    /// Clean reference for MSE/PSNR columns.
    #[arg(long)]
    pub reference: Option<PathBuf>,
    /// Flat region `x0,y0,width,height` in mm.
    #[arg(long, value_parser = parse_roi)]
    pub roi: Option<RegionOfInterest>,
    /// Cross-section `row:INDEX` or `col:INDEX`; the middle row by default.
    #[arg(long)]
    pub section: Option<String>,
    #[arg(long, default_value_t = DEFAULT_SHARPNESS_TOLERANCE)]
    pub tolerance: f64,
    /// Output CSV.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct FalseColorArgs {
    pub input: PathBuf,
    pub output: PathBuf,
    /// Frequency ranges `lo,hi` in THz.
    #[arg(long, value_parser = parse_range)]
    pub red: Option<(f64, f64)>,
    #[arg(long, value_parser = parse_range)]
    pub green: Option<(f64, f64)>,
    #[arg(long, value_parser = parse_range)]
    pub blue: Option<(f64, f64)>,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    pub input: PathBuf,
    /// Output PNG for one band, or a directory with `--all`.
    pub output: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub band: usize,
    #[arg(long)]
    pub all: bool,
}

#[derive(Debug, Serialize)]
pub struct FileDigest {
    pub path: String,
    pub fnv1a64: String,
}

/// JSON sidecar written after every successful run.
#[derive(Debug, Serialize)]
pub struct RunReport {
    pub subcommand: String,
    pub config: Value,
    pub p: Option<usize>,
    pub components: Vec<ComponentRecord>,
    pub timings: Vec<StageTiming>,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
}

impl RunReport {
    fn new(subcommand: &str, config: Value) -> Self {
        Self {
            subcommand: subcommand.into(),
            config,
            p: None,
            components: Vec::new(),
            timings: Vec::new(),
            inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }
}

/// Parses `argv`, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return EXIT_OK;
            }
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("").trim_start_matches("error: ");
            eprintln!("error[E_USAGE]: {first}");
            return EXIT_VALIDATION;
        }
    };
    match run(&cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error[{}]: {}", e.code(), single_line(&e.to_string()));
            if e.is_io() {
                EXIT_IO
            } else {
                EXIT_VALIDATION
            }
        }
    }
}

fn single_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Runs a parsed command inside a worker pool of the requested size.
pub fn run(cli: &Cli) -> Result<()> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.workers {
        if n == 0 {
            return Err(validation("worker count must be at least 1"));
        }
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|e| config(format!("cannot start worker pool: {e}")))?;
    pool.install(|| dispatch(cli))
}

fn dispatch(cli: &Cli) -> Result<()> {
    let (report, primary) = match &cli.command {
        Command::Simulate(a) => (cmd_simulate(a)?, a.degraded.clone()),
        Command::Analyze(a) => (cmd_analyze(a)?, a.out_dir.join("components.csv")),
        Command::Deblur(a) => (cmd_deblur(a)?, a.output.clone()),
        Command::Denoise(a) => (cmd_restore(a, "denoise", Some(RestorationMethod::Fasthyde))?, a.output.clone()),
        Command::Restore(a) => (cmd_restore(a, "restore", None)?, a.output.clone()),
        Command::Metrics(a) => (cmd_metrics(a)?, a.out.clone()),
        Command::Falsecolor(a) => (cmd_falsecolor(a)?, a.output.clone()),
        Command::Export(a) => (cmd_export(a)?, a.output.clone()),
    };
    let path = cli.report.clone().unwrap_or_else(|| sidecar_path(&primary, "report.json"));
    fs::write(&path, serde_json::to_vec_pretty(&report)?)?;
    Ok(())
}

fn sidecar_path(primary: &Path, suffix: &str) -> PathBuf {
    let mut name = primary.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".");
    name.push(suffix);
    primary.with_file_name(name)
}

fn digest(path: &Path) -> Result<FileDigest> {
    let bytes = fs::read(path)?;
    Ok(FileDigest { path: path.display().to_string(), fnv1a64: format!("{:016x}", fnv1a64(&bytes)) })
}

fn parse_dim(s: &str) -> Result<SubspaceDim> {
    if s.eq_ignore_ascii_case("auto") {
        return Ok(SubspaceDim::Auto);
    }
    s.parse::<usize>()
        .map(SubspaceDim::Fixed)
        .map_err(|_| validation(format!("--p must be `auto` or a positive integer, got `{s}`")))
}

fn parse_psf_scale(s: &str) -> Result<PsfScaleMode> {
    if s.eq_ignore_ascii_case("auto") {
        return Ok(PsfScaleMode::EffectiveFrequency);
    }
    let list = s
        .strip_prefix("manual:")
        .ok_or_else(|| validation(format!("--psf-scale must be `auto` or `manual:w0,w1,...`, got `{s}`")))?;
    let waists = list
        .split(',')
        .map(|v| v.trim().parse::<f64>().map_err(|_| validation(format!("bad beam radius `{v}`"))))
        .collect::<Result<Vec<_>>>()?;
    Ok(PsfScaleMode::Manual { waists })
}

fn noise_type(arg: NoiseArg, gain: f64) -> NoiseType {
    match arg {
        NoiseArg::Iid => NoiseType::Iid,
        NoiseArg::Noniid => NoiseType::Noniid,
        NoiseArg::Poisson => NoiseType::Poisson { gain },
    }
}

fn geometry(optics: &OpticsArgs) -> Result<BeamGeometry> {
    BeamGeometry::from_f_number(optics.f_number)
}

fn parse_floats(s: &str, n: usize) -> std::result::Result<Vec<f64>, String> {
    let v = s
        .split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|_| format!("`{t}` is not a number")))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    if v.len() != n {
        return Err(format!("expected {n} comma-separated values, got {}", v.len()));
    }
    Ok(v)
}

fn parse_range(s: &str) -> std::result::Result<(f64, f64), String> {
    parse_floats(s, 2).map(|v| (v[0], v[1]))
}

fn parse_roi(s: &str) -> std::result::Result<RegionOfInterest, String> {
    parse_floats(s, 4).map(|v| RegionOfInterest { x0: v[0], y0: v[1], width: v[2], height: v[3] })
}

fn cmd_simulate(a: &SimulateArgs) -> Result<RunReport> {
    if a.bands == 0 {
        return Err(validation("--bands must be at least 1"));
    }
    let frequencies: Vec<f64> = if a.bands == 1 {
        vec![a.freq_min]
    } else {
        (0..a.bands).map(|i| a.freq_min + (a.freq_max - a.freq_min) * i as f64 / (a.bands - 1) as f64).collect()
    };
    let kind = match a.phantom {
        PhantomArg::Disk => PhantomKind::DiskHole { radius_px: a.radius },
        PhantomArg::Rings => PhantomKind::Rings { ring_width_px: a.ring_width, outer_radius_px: a.outer_radius },
        PhantomArg::Bars => PhantomKind::Bars { bar_width_px: a.bar_width },
    };
    let spec = PhantomSpec {
        kind,
        height: a.size,
        width: a.size,
        step: a.step,
        frequencies,
        background: Contrast::Constant { value: a.background },
        foreground: Contrast::Ramp { start: a.fg_start, end: a.fg_end },
    };
    let noise = match a.noise {
        NoiseArg::Iid => NoiseModel::gaussian_iid(a.sigma, a.seed),
        NoiseArg::Noniid => {
            let hi = a.sigma_max.unwrap_or(a.sigma);
            let n = a.bands;
            let sigmas = (0..n).map(|i| a.sigma + (hi - a.sigma) * i as f64 / (n.max(2) - 1) as f64).collect();
            NoiseModel::gaussian_noniid(sigmas, a.seed)
        }
        NoiseArg::Poisson => NoiseModel::poisson(a.gain, a.seed),
    };
    let geom = geometry(&a.optics)?;
    let start = Instant::now();
    let (clean, degraded) = simulate(&spec, &geom, &noise, a.optics.z)?;
    let elapsed = start.elapsed().as_secs_f64();
    write_cube(&clean, &a.clean)?;
    write_cube(&degraded, &a.degraded)?;

    let mut report = RunReport::new(
        "simulate",
        json!({ "spec": spec, "geometry": geom, "noise": noise, "seed": a.seed, "z": a.optics.z }),
    );
    report.timings.push(StageTiming { stage: "simulation".into(), seconds: elapsed });
    report.outputs = vec![digest(&a.clean)?, digest(&a.degraded)?];
    Ok(report)
}

fn cmd_analyze(a: &AnalyzeArgs) -> Result<RunReport> {
    let cube = read_cube(&a.input)?;
    let dim = parse_dim(&a.p)?;
    let noise = noise_type(a.noise, a.gain);
    let d = analyze(&cube, &noise, dim)?;
    let (info, eigen) = (d.components, d.eigen);

    fs::create_dir_all(&a.out_dir)?;
    let csv_path = a.out_dir.join("components.csv");
    let rows: Vec<Vec<String>> = info
        .iter()
        .map(|c| {
            vec![
                c.index.to_string(),
                format!("{:.9}", c.energy_fraction),
                format!("{:.6}", c.effective_frequency),
                format!("{:.6}", c.edge_energy),
            ]
        })
        .collect();
    write_csv_file(&csv_path, &["index", "energy_fraction", "effective_frequency_thz", "edge_energy"], &rows)?;
    let mut outputs = vec![digest(&csv_path)?];
    for i in 0..eigen.len() {
        let path = a.out_dir.join(format!("eigen_{i:02}.png"));
        write_image_png(eigen.image(i), &path)?;
        outputs.push(digest(&path)?);
    }

    let mut report = RunReport::new(
        "analyze",
        json!({ "p": dim, "noise_type": noise, "noise_sigma": d.scales }),
    );
    report.p = Some(d.basis.dim());
    report.components =
        info.into_iter().map(|info| ComponentRecord { info, w0: None, discarded: false }).collect();
    report.timings = d.timings;
    report.inputs.push(digest(&a.input)?);
    report.outputs = outputs;
    Ok(report)
}

fn cmd_deblur(a: &DeblurArgs) -> Result<RunReport> {
    let cube = read_cube(&a.input)?;
    let method = a.params.method();
    let geom = geometry(&a.optics)?;
    let start = Instant::now();
    let noise = match method {
        DeblurMethod::Wiener { nsr: None } => Some(estimate_noise(&cube)?),
        _ => None,
    };
    let out = deblur_bands(&cube, &geom, a.optics.z, &method, noise.as_ref())?;
    let elapsed = start.elapsed().as_secs_f64();
    write_cube(&out, &a.output)?;
    let mut outputs = vec![digest(&a.output)?];
    if let Some(dir) = &a.png_dir {
        fs::create_dir_all(dir)?;
        for i in 0..out.bands() {
            let path = dir.join(format!("band_{i:03}.png"));
            export_band(&out, i, &path)?;
            outputs.push(digest(&path)?);
        }
    }
    let mut report = RunReport::new(
        "deblur",
        json!({
            "method": method,
            "geometry": geom,
            "z": a.optics.z,
            "noise_sigma": noise.map(|n| n.sigma_per_band),
        }),
    );
    report.timings.push(StageTiming { stage: "deblurring".into(), seconds: elapsed });
    report.inputs.push(digest(&a.input)?);
    report.outputs = outputs;
    Ok(report)
}

fn restoration_config(a: &RestoreArgs) -> Result<RestorationConfig> {
    Ok(RestorationConfig {
        p: parse_dim(&a.p)?,
        noise_type: noise_type(a.noise, a.gain),
        deblur: a.deblur.method(),
        psf_geometry: geometry(&a.optics)?,
        psf_scale_mode: parse_psf_scale(&a.psf_scale)?,
        components_to_discard: a.discard.clone(),
        denoise_params: PatchDenoiseParams {
            patch_size: a.patch_size,
            search_window: a.search_window,
            strength: a.strength,
            sigma: 0.0,
        },
        z: a.optics.z,
        truncation: a.optics.truncation,
        seed: a.seed,
    })
}

fn cmd_restore(a: &RestoreArgs, name: &str, forced: Option<RestorationMethod>) -> Result<RunReport> {
    let cube = read_cube(&a.input)?;
    let config = restoration_config(a)?;
    let method = forced.unwrap_or(match a.method {
        MethodArg::Fasthyde => RestorationMethod::Fasthyde,
        MethodArg::Joint => RestorationMethod::Joint,
    });
    let result = restore(&cube, &config, method)?;
    write_cube(&result.cube, &a.output)?;
    let mut report = RunReport::new(name, json!({ "method": method, "restoration": config }));
    report.p = Some(result.report.p);
    report.components = result.report.components;
    report.timings = result.report.timings;
    report.inputs.push(digest(&a.input)?);
    report.outputs.push(digest(&a.output)?);
    Ok(report)
}

fn parse_section(s: &str, cube: &HyperCube) -> Result<CrossSection> {
    let (kind, idx) =
        s.split_once(':').ok_or_else(|| validation(format!("--section must be `row:N` or `col:N`, got `{s}`")))?;
    let index: usize = idx.parse().map_err(|_| validation(format!("bad cross-section index `{idx}`")))?;
    let (orientation, len) = match kind {
        "row" => (Orientation::Row, cube.width()),
        "col" | "column" => (Orientation::Column, cube.height()),
        _ => return Err(validation(format!("unknown cross-section orientation `{kind}`"))),
    };
    Ok(CrossSection { orientation, index, start: 0, end: len })
}

fn cmd_metrics(a: &MetricsArgs) -> Result<RunReport> {
    let cube = read_cube(&a.input)?;
    let start = Instant::now();
    let roi = match a.roi {
        Some(roi) => roi,
        None => {
            // Top-left corner patch of a tenth of the image.
            let s = cube.step_x();
            let w = (cube.width().min(cube.height()) / 10).max(1) as f64 * s;
            RegionOfInterest { x0: 0.0, y0: 0.0, width: w, height: w }
        }
    };
    let section = match &a.section {
        Some(s) => parse_section(s, &cube)?,
        None => CrossSection::middle_row(&cube),
    };
    let stds = flat_region_std(&cube, &roi)?;
    let sharp = feature_sharpness(&cube, &section, a.tolerance)?;
    let errors = match &a.reference {
        Some(path) => Some(mse_psnr(&cube, &read_cube(path)?)?),
        None => None,
    };
    let opt = |v: Option<f64>| v.map_or_else(String::new, |x| format!("{x:.6}"));
    let rows: Vec<Vec<String>> = (0..cube.bands())
        .map(|i| {
            let mut row = vec![
                i.to_string(),
                format!("{:.6}", cube.frequencies()[i]),
                format!("{:.9}", stds[i].std),
                format!("{:.6}", stds[i].log10_std),
                opt(sharp[i].distance_mm),
                sharp[i].flagged.to_string(),
            ];
            if let Some(e) = &errors {
                row.push(format!("{:.9e}", e.mse_per_band[i]));
                row.push(format!("{:.6}", psnr_for_csv(e.psnr_per_band[i])));
            }
            row
        })
        .collect();
    let mut header = vec!["band", "frequency_thz", "flat_std", "log10_flat_std", "sharpness_mm", "sharpness_flagged"];
    if errors.is_some() {
        header.extend(["mse", "psnr_db"]);
    }
    write_csv_file(&a.out, &header, &rows)?;
    let elapsed = start.elapsed().as_secs_f64();

    let mut report = RunReport::new(
        "metrics",
        json!({
            "roi": roi,
            "section": section,
            "tolerance": a.tolerance,
            "mse": errors.as_ref().map(|e| e.mse),
            "mean_psnr": errors.as_ref().map(|e| psnr_for_csv(e.mean_psnr)),
        }),
    );
    report.timings.push(StageTiming { stage: "metrics".into(), seconds: elapsed });
    report.inputs.push(digest(&a.input)?);
    if let Some(path) = &a.reference {
        report.inputs.push(digest(path)?);
    }
    report.outputs.push(digest(&a.out)?);
    Ok(report)
}

fn cmd_falsecolor(a: &FalseColorArgs) -> Result<RunReport> {
    let cube = read_cube(&a.input)?;
    let d = FalseColorRanges::default();
    let ranges = FalseColorRanges { red: a.red.unwrap_or(d.red), green: a.green.unwrap_or(d.green), blue: a.blue.unwrap_or(d.blue) };
    let start = Instant::now();
    let rgb = false_color(&cube, &ranges)?;
    write_rgb_png(&a.output, cube.width(), cube.height(), &rgb)?;
    let ranges_path = sidecar_path(&a.output, "ranges.json");
    fs::write(&ranges_path, serde_json::to_vec_pretty(&ranges)?)?;
    let elapsed = start.elapsed().as_secs_f64();
    let mut report = RunReport::new("falsecolor", json!({ "ranges": ranges }));
    report.timings.push(StageTiming { stage: "false_color".into(), seconds: elapsed });
    report.inputs.push(digest(&a.input)?);
    report.outputs = vec![digest(&a.output)?, digest(&ranges_path)?];
    Ok(report)
}

fn cmd_export(a: &ExportArgs) -> Result<RunReport> {
    let cube = read_cube(&a.input)?;
    let mut report = RunReport::new("export", json!({ "band": a.band, "all": a.all }));
    if a.all {
        fs::create_dir_all(&a.output)?;
        for i in 0..cube.bands() {
            let path = a.output.join(format!("band_{i:03}.png"));
            export_band(&cube, i, &path)?;
            report.outputs.push(digest(&path)?);
        }
    } else {
        if a.band >= cube.bands() {
            return Err(Error::OutOfRange { index: a.band, len: cube.bands() });
        }
        export_band(&cube, a.band, &a.output)?;
        report.outputs.push(digest(&a.output)?);
    }
    report.inputs.push(digest(&a.input)?);
    Ok(report)
}
