use std::path::PathBuf;

use clap::{ArgAction, Args, Parser, Subcommand, ValueEnum};

use crate::config::{MethodName, RunConfig, SourceShape, OUT_DIR_ENV};
use crate::error::{CliError, Result, EXIT_CODES_HELP};

#[derive(Debug, Parser)]
#[command(
    name = "qdpc",
    version,
    about = "Quantitative differential phase contrast: simulation, reconstruction and pupil learning",
    after_help = EXIT_CODES_HELP
)]
pub struct Cli {
    /// TOML run configuration; flags override its values.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Base output directory; each command writes to <DIR>/<command>.
    #[arg(long, global = true, value_name = "DIR", env = OUT_DIR_ENV)]
    pub out_dir: Option<PathBuf>,

    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Export phase transfer functions (complex NPY) with magnitude,
    /// imaginary-part and PSF previews.
    Ptf(PtfArgs),
    /// Simulate a noisy DPC stack from a phase target.
    Simulate(SimulateArgs),
    /// Reconstruct phase from a stack written by `simulate` (or any directory
    /// with a matching metadata.toml).
    Reconstruct(ReconstructArgs),
    /// Estimate the noise level of a stack and the penalty weights it implies.
    Sensor(SensorArgs),
    /// Score a reconstruction against ground truth.
    Metrics(MetricsArgs),
    /// Learn an illumination pupil that maximizes edge response.
    LearnPupil(LearnArgs),
    /// Regenerate a benchmark table.
    Reproduce(ReproduceArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Ptf(_) => "ptf",
            Command::Simulate(_) => "simulate",
            Command::Reconstruct(_) => "reconstruct",
            Command::Sensor(_) => "sensor",
            Command::Metrics(_) => "metrics",
            Command::LearnPupil(_) => "learn-pupil",
            Command::Reproduce(r) => match r.table {
                Table::Table2 => "reproduce-table2",
            },
        }
    }
}

#[derive(Debug, Default, Args)]
pub struct OpticsArgs {
    /// Square grid side in pixels.
    #[arg(long)]
    pub size: Option<usize>,
    /// Objective numerical aperture.
    #[arg(long)]
    pub na: Option<f64>,
    /// Illumination numerical aperture.
    #[arg(long)]
    pub na_illum: Option<f64>,
    #[arg(long)]
    pub lambda_um: Option<f64>,
    /// Camera pixel pitch in micrometers.
    #[arg(long)]
    pub pixel_size_um: Option<f64>,
    #[arg(long)]
    pub magnification: Option<f64>,
    #[arg(long, value_enum)]
    pub source: Option<SourceShape>,
    /// Inner NA of the annular source.
    #[arg(long)]
    pub inner_na: Option<f64>,
    /// Illumination axes in degrees, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub axes_deg: Option<Vec<f64>>,
}

impl OpticsArgs {
    fn apply(&self, cfg: &mut RunConfig) {
        set(&mut cfg.grid.size, self.size);
        set(&mut cfg.optics.na, self.na);
        set(&mut cfg.optics.na_illum, self.na_illum);
        set(&mut cfg.optics.lambda_um, self.lambda_um);
        set(&mut cfg.optics.pixel_size_um, self.pixel_size_um);
        set(&mut cfg.optics.magnification, self.magnification);
        set(&mut cfg.source.shape, self.source);
        set(&mut cfg.source.inner_na, self.inner_na);
        set(&mut cfg.source.axes_deg, self.axes_deg.clone());
    }
}

#[derive(Debug, Args)]
pub struct PtfArgs {
    #[command(flatten)]
    pub optics: OpticsArgs,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub optics: OpticsArgs,
    /// wedding-cake, focal-star or custom:<file.npy>.
    #[arg(long)]
    pub target: Option<String>,
    /// Per-image SNR in dB; `inf` for a noiseless stack.
    #[arg(long)]
    pub snr_db: Option<f64>,
    /// Noise seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Leave out the defocused background layer.
    #[arg(long)]
    pub no_background: bool,
    /// Defocus distance of the background layer in micrometers.
    #[arg(long, allow_hyphen_values = true)]
    pub z_um: Option<f64>,
    /// Left/right intensity imbalance of the background, in [0, 0.2].
    #[arg(long)]
    pub mismatch: Option<f64>,
    #[arg(long)]
    pub layer_seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct ReconstructArgs {
    /// Directory holding metadata.toml and the DPC images.
    #[arg(long, value_name = "DIR")]
    pub input: PathBuf,
    #[arg(long, value_enum)]
    pub method: Option<MethodName>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    /// Shape parameter of the reweighted soft threshold (pd).
    #[arg(long)]
    pub omega: Option<f64>,
    #[arg(long)]
    pub iters: Option<usize>,
    /// Shrink gradient and edge maps jointly across components (pd).
    #[arg(long)]
    pub isotropic: bool,
    /// Take alpha and beta from the noise sensor.
    #[arg(long)]
    pub auto_params: bool,
    /// Write the pd edge maps as NPY and PNG.
    #[arg(long)]
    pub emit_edges: bool,
    /// Write the per-iteration pd cost to trace.csv.
    #[arg(long)]
    pub trace: bool,
    /// Ground-truth phase NPY; scores are printed and written to metrics.csv.
    #[arg(long, value_name = "FILE")]
    pub gt: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SensorArgs {
    /// Directory holding metadata.toml and the DPC images.
    #[arg(long, value_name = "DIR")]
    pub input: PathBuf,
}

#[derive(Debug, Args)]
pub struct MetricsArgs {
    /// Reconstructed phase NPY.
    #[arg(long, value_name = "FILE")]
    pub rec: PathBuf,
    /// Ground-truth phase NPY.
    #[arg(long, value_name = "FILE")]
    pub gt: PathBuf,
    /// Append a row (scenario, method, snr_db, rpsnr, psnr, ssim) to this CSV.
    #[arg(long, value_name = "FILE")]
    pub csv: Option<PathBuf>,
    #[arg(long, default_value = "custom")]
    pub scenario: String,
    #[arg(long, default_value = "unknown")]
    pub method: String,
    #[arg(long)]
    pub snr_db: Option<f64>,
}

#[derive(Debug, Args)]
pub struct LearnArgs {
    #[command(flatten)]
    pub optics: OpticsArgs,
    #[arg(long)]
    pub iters: Option<usize>,
    /// Initial ascent step, relative to max|Q|.
    #[arg(long)]
    pub step: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Edge normal and weight as DEG:WEIGHT; repeatable.
    #[arg(long = "edge", value_name = "DEG:WEIGHT", allow_hyphen_values = true)]
    pub edges: Vec<String>,
    /// Phase image whose gradient orientations define the edges.
    #[arg(long, value_name = "FILE")]
    pub guide: Option<PathBuf>,
    /// Iterations at which Q is saved, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub snapshots: Option<Vec<usize>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Table {
    /// Method comparison on the defocus-background wedding cake.
    Table2,
}

#[derive(Debug, Args)]
pub struct ReproduceArgs {
    #[arg(value_enum)]
    pub table: Table,
    /// Per-image SNR in dB.
    #[arg(long)]
    pub snr: Option<f64>,
    /// First noise seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Number of consecutive noise seeds.
    #[arg(long)]
    pub seeds: Option<usize>,
    /// Also run the single-term ablations of pd.
    #[arg(long)]
    pub ablation: bool,
    #[arg(long)]
    pub iters: Option<usize>,
    /// Square grid side in pixels.
    #[arg(long)]
    pub size: Option<usize>,
    /// Run methods one after another instead of on a thread pool.
    #[arg(long)]
    pub serial: bool,
}

fn set<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

fn parse_edge(s: &str) -> Result<[f64; 2]> {
    let bad = || CliError::Usage(format!("--edge expects DEG:WEIGHT, got {s:?}"));
    let (a, w) = s.split_once(':').ok_or_else(bad)?;
    Ok([a.trim().parse().map_err(|_| bad())?, w.trim().parse().map_err(|_| bad())?])
}

impl Command {
    /// Folds this command's flags into `cfg`.
    pub fn apply(&self, cfg: &mut RunConfig) -> Result<()> {
        match self {
            Command::Ptf(a) => a.optics.apply(cfg),
            Command::Simulate(a) => {
                a.optics.apply(cfg);
                set(&mut cfg.target.kind, a.target.clone());
                set(&mut cfg.noise.snr_db, a.snr_db);
                set(&mut cfg.noise.seed, a.seed);
                if a.no_background {
                    cfg.background.enabled = false;
                }
                set(&mut cfg.background.z_um, a.z_um);
                set(&mut cfg.background.mismatch, a.mismatch);
                set(&mut cfg.background.layer_seed, a.layer_seed);
            }
            Command::Reconstruct(a) => {
                set(&mut cfg.solver.method, a.method);
                if a.alpha.is_some() {
                    cfg.solver.alpha = a.alpha;
                }
                if a.beta.is_some() {
                    cfg.solver.beta = a.beta;
                }
                set(&mut cfg.solver.omega, a.omega);
                set(&mut cfg.solver.iters, a.iters);
                cfg.solver.isotropic |= a.isotropic;
                cfg.solver.auto_params |= a.auto_params;
            }
            Command::Sensor(_) | Command::Metrics(_) => {}
            Command::LearnPupil(a) => {
                a.optics.apply(cfg);
                set(&mut cfg.learn.iters, a.iters);
                set(&mut cfg.learn.step, a.step);
                set(&mut cfg.learn.seed, a.seed);
                if !a.edges.is_empty() {
                    cfg.learn.edges = a.edges.iter().map(|s| parse_edge(s)).collect::<Result<_>>()?;
                }
                if a.guide.is_some() {
                    cfg.learn.guide = a.guide.clone();
                }
                set(&mut cfg.learn.snapshots, a.snapshots.clone());
            }
            Command::Reproduce(a) => {
                set(&mut cfg.noise.snr_db, a.snr);
                set(&mut cfg.noise.seed, a.seed);
                set(&mut cfg.reproduce.seeds, a.seeds);
                cfg.reproduce.ablation |= a.ablation;
                set(&mut cfg.reproduce.iters, a.iters);
                set(&mut cfg.grid.size, a.size);
                if a.serial {
                    cfg.reproduce.parallel = false;
                }
            }
        }
        Ok(())
    }
}
