use std::path::Path;

use qdpc::forward::{
    observable_phase, phase_target, random_layer, simulate_stack, BackgroundSpec, DpcStack, PhaseImage, TargetKind,
    TargetParams,
};
use qdpc::learn::{edge_angles_from_image, learn_pupil, LearnConfig};
use qdpc::metrics::{score_all, Scores};
use qdpc::npy::{self, NpyData};
use qdpc::pupils::objective_pupil;
use qdpc::scenario::{ablation_methods, comparison_methods, Method, ScenarioConfig};
use qdpc::sensor::{auto_params, auto_params_for, noise_sigma};
use qdpc::solvers::{solve_pd, PdParams, TvParams};
use qdpc::transfer::psf;
use qdpc::{FrequencyGrid, RealImage};
use rayon::prelude::*;
use serde::Serialize;

use crate::args::{MetricsArgs, ReconstructArgs, SensorArgs};
use crate::config::{MethodName, RunConfig, SolverConfig};
use crate::error::{CliError, Result};
use crate::output::{print_toml, OutDir};
use crate::stack::{build_tfs, load_stack, StackMetadata, METADATA_FILE};

pub fn ptf(cfg: &RunConfig, out: &OutDir) -> Result<()> {
    let grid = cfg.grid()?;
    let tfs = build_tfs(grid, &cfg.optics, &cfg.source, &cfg.source.axes_rad())?;
    out.write_manifest(cfg)?;
    #[derive(Serialize)]
    struct Row {
        axis: usize,
        theta0_deg: f64,
        norm_a: f64,
        band_limit: f64,
        max_abs: f64,
    }
    let mut rows = Vec::new();
    for (n, tf) in tfs.iter().enumerate() {
        tf.check_invariants()?;
        out.save_complex(&format!("ptf_{n}.npy"), tf.data())?;
        out.preview_centered(&format!("ptf_{n}_mag.png"), &tf.data().magnitude())?;
        out.preview_centered(&format!("ptf_{n}_imag.png"), &tf.data().imag_part())?;
        let kernel = psf(tf)?;
        out.save_real(&format!("psf_{n}.npy"), kernel.data())?;
        out.preview_centered(&format!("psf_{n}.png"), kernel.data())?;
        rows.push(Row {
            axis: n,
            theta0_deg: tf.theta0().to_degrees(),
            norm_a: tf.norm_a(),
            band_limit: tf.band_limit(),
            max_abs: tf.data().max_abs(),
        });
    }
    out.write_csv("ptf.csv", &rows)?;
    for r in &rows {
        println!(
            "axis {}: theta0 {:.1} deg, A = {:.6e}, band limit {:.4} cycles/um",
            r.axis, r.theta0_deg, r.norm_a, r.band_limit
        );
    }
    Ok(())
}

pub fn simulate(cfg: &RunConfig, out: &OutDir) -> Result<()> {
    let grid = cfg.grid()?;
    let axes = cfg.source.axes_rad();
    let tfs = build_tfs(grid, &cfg.optics, &cfg.source, &axes)?;
    let kind: TargetKind = cfg.target.kind.parse()?;
    let gt = phase_target(&kind, grid, &TargetParams::for_grid(&grid))?;
    let bg = &cfg.background;
    let background = bg.enabled.then(|| BackgroundSpec {
        layer_phase: random_layer(grid, bg.layer_seed, bg.layer_bumps, bg.layer_phase),
        z_um: bg.z_um,
        mismatch: bg.mismatch,
    });
    let stack = simulate_stack(&gt, &tfs, cfg.optics.meta(), background.as_ref(), cfg.noise.snr(), cfg.noise.seed)?;
    out.write_manifest(cfg)?;

    out.save_real("ground_truth.npy", gt.image())?;
    out.preview("ground_truth.png", gt.image())?;
    out.save_real("ground_truth_observable.npy", observable_phase(&gt, &tfs)?.image())?;
    if let Some(b) = &background {
        out.save_real("background_layer.npy", b.layer_phase.image())?;
    }
    let mut images = Vec::new();
    for (n, img) in stack.images.iter().enumerate() {
        let name = format!("dpc_{n}.npy");
        out.save_real(&name, img)?;
        out.preview(&format!("dpc_{n}.png"), img)?;
        images.push(name);
    }
    let meta = StackMetadata {
        size: cfg.grid.size,
        na: cfg.optics.na,
        na_illum: cfg.optics.na_illum,
        lambda_um: cfg.optics.lambda_um,
        pixel_size_um: cfg.optics.pixel_size_um,
        magnification: cfg.optics.magnification,
        source: cfg.source.shape,
        inner_na: cfg.source.inner_na,
        theta0: axes,
        images,
        target: Some(cfg.target.kind.clone()),
        seed: Some(cfg.noise.seed),
        snr_db: Some(cfg.noise.snr_db),
        background: Some(cfg.background.clone()),
    };
    out.write_text(METADATA_FILE, &toml::to_string(&meta).expect("metadata serializes"))?;
    println!("wrote {} DPC images to {}", stack.len(), out.path().display());
    Ok(())
}

/// Penalty weights: explicit values unless missing or `auto_params` is set.
fn resolve_weights(solver: &SolverConfig, stack: &DpcStack) -> Result<(f64, f64)> {
    match (solver.alpha, solver.beta) {
        (Some(a), Some(b)) if !solver.auto_params => Ok((a, b)),
        (a, b) => {
            let (sa, sb) = auto_params_for(stack)?;
            if solver.auto_params {
                Ok((sa, sb))
            } else {
                Ok((a.unwrap_or(sa), b.unwrap_or(sb)))
            }
        }
    }
}

fn method_for(solver: &SolverConfig, alpha: f64, beta: f64) -> Method {
    let tv = TvParams {
        tol: solver.tol,
        ..TvParams::new(alpha, solver.iters)
    };
    match solver.method {
        MethodName::L2 => Method::L2 { alpha },
        MethodName::Iso => Method::Iso {
            alpha,
            beta,
            sigma_px: solver.iso_sigma_px,
        },
        MethodName::Tv => Method::Tv(tv),
        MethodName::RetinexTv => Method::RetinexTv(tv),
        MethodName::Pd => Method::Pd(PdParams {
            omega: solver.omega,
            max_iters: solver.iters,
            tol: solver.tol,
            isotropic: solver.isotropic,
            ..PdParams::with_weights(alpha, beta)
        }),
    }
}

/// Non-finite solver output is reported as divergence.
fn diverged(method: &str) -> impl Fn(qdpc::Error) -> CliError + '_ {
    move |e| match e {
        qdpc::Error::NonFinite { .. } => CliError::Diverged {
            method: method.to_string(),
            msg: e.to_string(),
        },
        other => other.into(),
    }
}

#[derive(Serialize)]
struct TraceRow {
    iteration: usize,
    cost: f64,
}

fn trace_rows(initial: Option<f64>, costs: &[f64]) -> Vec<TraceRow> {
    initial
        .into_iter()
        .chain(costs.iter().copied())
        .enumerate()
        .map(|(k, cost)| TraceRow {
            iteration: if initial.is_some() { k } else { k + 1 },
            cost,
        })
        .collect()
}

#[derive(Serialize)]
pub struct MetricsRow {
    pub scenario: String,
    pub method: String,
    pub snr_db: Option<f64>,
    pub rpsnr: f64,
    pub psnr: f64,
    pub ssim: f64,
}

pub fn reconstruct(a: &ReconstructArgs, cfg: &mut RunConfig, out: &OutDir) -> Result<()> {
    let method_name = cfg.solver.method;
    if (a.trace || a.emit_edges) && method_name != MethodName::Pd {
        return Err(CliError::Usage("--trace and --emit-edges need --method pd".into()));
    }
    let (meta, stack) = load_stack(&a.input)?;
    meta.fill(cfg);
    let (alpha, beta) = resolve_weights(&cfg.solver, &stack)?;
    cfg.solver.alpha = Some(alpha);
    cfg.solver.beta = Some(beta);
    out.write_manifest(cfg)?;
    let method = method_for(&cfg.solver, alpha, beta);
    log::info!("reconstructing with {} (alpha {alpha:.3e}, beta {beta:.3e})", method.name());

    let phase = match &method {
        Method::Pd(params) => {
            let res = match solve_pd(&stack, params) {
                Ok(r) => r,
                Err(qdpc::Error::Divergence { iteration, trace }) => {
                    if a.trace {
                        out.write_csv("trace.csv", &trace_rows(None, &trace))?;
                    }
                    return Err(qdpc::Error::Divergence { iteration, trace }.into());
                }
                Err(e) => return Err(diverged("pd")(e)),
            };
            if a.trace {
                out.write_csv("trace.csv", &trace_rows(Some(res.initial_cost), &res.cost_trace))?;
            }
            if a.emit_edges {
                for (n, psi) in res.edge_maps.iter().enumerate() {
                    out.save_real(&format!("edges_{n}.npy"), psi)?;
                    out.preview(&format!("edges_{n}.png"), psi)?;
                }
            }
            println!("iterations = {}", res.iterations_run);
            res.phase
        }
        m => m.run(&stack).map_err(diverged(m.name()))?,
    };
    out.save_real("phase.npy", phase.image())?;
    out.preview("phase.png", phase.image())?;
    println!("method = {:?}\nalpha = {alpha:e}\nbeta = {beta:e}", method.name());
    if let Some(gt_path) = &a.gt {
        let gt = npy::load_real(gt_path, *phase.grid())?;
        let s = score_all(phase.image(), &gt)?;
        let row = MetricsRow {
            scenario: meta.target.clone().unwrap_or_else(|| "custom".into()),
            method: method.name().into(),
            snr_db: meta.snr_db.filter(|v| v.is_finite()),
            rpsnr: s.rpsnr,
            psnr: s.psnr,
            ssim: s.ssim,
        };
        out.write_csv("metrics.csv", &[&row])?;
        println!("rpsnr = {:.4}\npsnr = {:.4}\nssim = {:.4}", s.rpsnr, s.psnr, s.ssim);
    }
    Ok(())
}

pub fn sensor(a: &SensorArgs, cfg: &mut RunConfig, out: &OutDir) -> Result<()> {
    let (meta, stack) = load_stack(&a.input)?;
    meta.fill(cfg);
    out.write_manifest(cfg)?;
    let est = noise_sigma(&stack)?;
    let (alpha, beta) = auto_params_for(&stack)?;
    #[derive(Serialize)]
    struct Report {
        sigma: f64,
        alpha: f64,
        beta: f64,
        alpha_floored: bool,
        per_image_sigma: Vec<f64>,
    }
    let report = Report {
        sigma: est.sigma,
        alpha,
        beta,
        alpha_floored: alpha != auto_params(&est).0,
        per_image_sigma: est.per_image_sigmas.clone(),
    };
    out.write_text("sensor.toml", &toml::to_string(&report).expect("report serializes"))?;
    println!("sigma = {:.6e}\nalpha = {:.6e}\nbeta = {:.6e}", report.sigma, report.alpha, report.beta);
    println!("alpha_floored = {}", report.alpha_floored);
    Ok(())
}

/// Reads a 2D real NPY without physical grid information.
fn read_plain(path: &Path) -> Result<RealImage> {
    let arr = npy::read(path)?;
    let bad = |msg: String| CliError::BadInput {
        path: path.to_path_buf(),
        msg,
    };
    let [h, w] = arr.shape[..] else {
        return Err(bad(format!("expected a 2D array, got shape {:?}", arr.shape)));
    };
    let NpyData::F64(data) = arr.data else {
        return Err(bad("expected real <f8 data".into()));
    };
    let grid = FrequencyGrid::new(w, h, 1.0, 1.0)?;
    Ok(RealImage::new(grid, data)?)
}

pub fn metrics(a: &MetricsArgs, cfg: &RunConfig, out: &OutDir) -> Result<()> {
    let rec = read_plain(&a.rec)?;
    let gt = read_plain(&a.gt)?;
    out.write_manifest(cfg)?;
    let s = score_all(&rec, &gt)?;
    let row = MetricsRow {
        scenario: a.scenario.clone(),
        method: a.method.clone(),
        snr_db: a.snr_db,
        rpsnr: s.rpsnr,
        psnr: s.psnr,
        ssim: s.ssim,
    };
    out.write_csv("metrics.csv", &[&row])?;
    if let Some(path) = &a.csv {
        let fresh = !path.exists();
        let file = std::fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(crate::error::io_err(path))?;
        let mut w = csv::WriterBuilder::new().has_headers(fresh).from_writer(file);
        w.serialize(&row)?;
        w.flush().map_err(crate::error::io_err(path))?;
    }
    print_toml(&row);
    Ok(())
}

pub fn learn(cfg: &RunConfig, out: &OutDir) -> Result<()> {
    let grid = cfg.grid()?;
    let pupil = objective_pupil(grid, cfg.optics.na, cfg.optics.lambda_um)?;
    let l = &cfg.learn;
    let edges = match &l.guide {
        Some(path) => edge_angles_from_image(&npy::load_real(path, grid)?)?,
        None => {
            let total: f64 = l.edges.iter().map(|e| e[1]).sum();
            if !(total > 0.0) || l.edges.iter().any(|e| e[1] < 0.0) {
                return Err(CliError::Usage("edge weights must be nonnegative with a positive sum".into()));
            }
            l.edges.iter().map(|e| (e[0].to_radians(), e[1] / total)).collect()
        }
    };
    let lc = LearnConfig {
        iters: l.iters,
        step: l.step,
        seed: l.seed,
        fx_floor: l.fx_floor,
        snapshots: l.snapshots.clone(),
        ..LearnConfig::new(pupil, edges)
    };
    out.write_manifest(cfg)?;
    let (source, trace) = learn_pupil(&lc)?;
    for (it, q) in &trace.snapshots {
        out.save_real(&format!("q_iter{it:03}.npy"), q)?;
        out.preview_centered(&format!("q_iter{it:03}.png"), q)?;
    }
    out.save_real("q_final.npy", &trace.final_q)?;
    out.preview_centered("q_final.png", &trace.final_q)?;
    let src = RealImage::new(grid, source.data().to_vec())?;
    out.save_real("source.npy", &src)?;
    out.preview_centered("source.png", &src)?;
    out.write_csv("trace.csv", &trace_rows(Some(trace.costs[0]), &trace.costs[1..]))?;
    #[derive(Serialize)]
    struct Report {
        final_cost: f64,
        annulus_energy: f64,
        theta0_deg: f64,
        reseeded: bool,
    }
    print_toml(&Report {
        final_cost: *trace.costs.last().expect("trace holds the initial cost"),
        annulus_energy: trace.annulus_energy,
        theta0_deg: source.theta0().to_degrees(),
        reseeded: trace.reseeded,
    });
    Ok(())
}

#[derive(Clone, Debug, Serialize)]
pub struct RunRow {
    pub seed: u64,
    pub method: String,
    pub rpsnr: f64,
    pub psnr: f64,
    pub ssim: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct SummaryRow {
    pub scenario: String,
    pub method: String,
    pub snr_db: Option<f64>,
    pub n: usize,
    pub rpsnr_mean: f64,
    pub rpsnr_std: f64,
    pub psnr_mean: f64,
    pub psnr_std: f64,
    pub ssim_mean: f64,
    pub ssim_std: f64,
}

/// File-system friendly label: `l2(alpha=1e-1)` becomes `l2_alpha_1e-1`.
pub fn dir_label(label: &str) -> String {
    label.replace(['(', '='], "_").replace(')', "")
}

fn run_roster(
    roster: &[(String, Method)],
    stack: &DpcStack,
    gt: &PhaseImage,
    dir: &OutDir,
    parallel: bool,
) -> Result<Vec<(String, Scores)>> {
    let one = |(label, method): &(String, Method)| -> Result<(String, Scores)> {
        let phase = method.run(stack).map_err(diverged(label))?;
        let sub = dir.sub(&dir_label(label))?;
        sub.save_real("phase.npy", phase.image())?;
        sub.preview("phase.png", phase.image())?;
        Ok((label.clone(), score_all(phase.image(), gt.image())?))
    };
    if parallel {
        roster.par_iter().map(one).collect()
    } else {
        roster.iter().map(one).collect()
    }
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = if v.len() > 1 {
        v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (m, var.sqrt())
}

fn summarize(rows: &[RunRow], scenario: &str, snr_db: Option<f64>) -> Vec<SummaryRow> {
    let mut order: Vec<&str> = Vec::new();
    for r in rows {
        if !order.contains(&r.method.as_str()) {
            order.push(&r.method);
        }
    }
    order
        .into_iter()
        .map(|m| {
            let sel: Vec<&RunRow> = rows.iter().filter(|r| r.method == m).collect();
            let col = |f: fn(&RunRow) -> f64| mean_std(&sel.iter().map(|r| f(r)).collect::<Vec<_>>());
            let (rpsnr_mean, rpsnr_std) = col(|r| r.rpsnr);
            let (psnr_mean, psnr_std) = col(|r| r.psnr);
            let (ssim_mean, ssim_std) = col(|r| r.ssim);
            SummaryRow {
                scenario: scenario.into(),
                method: m.into(),
                snr_db,
                n: sel.len(),
                rpsnr_mean,
                rpsnr_std,
                psnr_mean,
                psnr_std,
                ssim_mean,
                ssim_std,
            }
        })
        .collect()
}

pub fn reproduce_table2(cfg: &RunConfig, out: &OutDir) -> Result<()> {
    let bg = &cfg.background;
    let sc = ScenarioConfig {
        size: cfg.grid.size,
        meta: cfg.optics.meta(),
        target: cfg.target.kind.parse()?,
        z_um: bg.z_um,
        mismatch: bg.mismatch,
        layer_bumps: bg.layer_bumps,
        layer_phase: bg.layer_phase,
        layer_seed: bg.layer_seed,
        snr_db: cfg.noise.snr(),
        background: bg.enabled,
    };
    let r = &cfg.reproduce;
    if r.seeds == 0 {
        return Err(CliError::Usage("reproduce needs at least one seed".into()));
    }
    out.write_manifest(cfg)?;
    let scenario_name = if bg.enabled {
        format!("{}-defocus", cfg.target.kind)
    } else {
        cfg.target.kind.clone()
    };
    let mut runs = Vec::new();
    let mut ablation_runs = Vec::new();
    for seed in cfg.noise.seed..cfg.noise.seed + r.seeds as u64 {
        log::info!("seed {seed}");
        let s = sc.build(seed)?;
        if seed == cfg.noise.seed {
            out.save_real("ground_truth.npy", s.ground_truth.image())?;
            out.preview("ground_truth.png", s.ground_truth.image())?;
        }
        let dir = out.sub(&format!("seed{seed}"))?;
        for (n, img) in s.stack.images.iter().enumerate() {
            dir.save_real(&format!("dpc_{n}.npy"), img)?;
        }
        let roster = comparison_methods(&s.stack, r.iters)?;
        for (method, sc) in run_roster(&roster, &s.stack, &s.ground_truth, &dir, r.parallel)? {
            runs.push(RunRow {
                seed,
                method,
                rpsnr: sc.rpsnr,
                psnr: sc.psnr,
                ssim: sc.ssim,
            });
        }
        if r.ablation {
            let roster = ablation_methods(&s.stack, r.iters)?;
            let adir = dir.sub("ablation")?;
            for (method, sc) in run_roster(&roster, &s.stack, &s.ground_truth, &adir, r.parallel)? {
                ablation_runs.push(RunRow {
                    seed,
                    method,
                    rpsnr: sc.rpsnr,
                    psnr: sc.psnr,
                    ssim: sc.ssim,
                });
            }
        }
    }
    out.write_csv("runs.csv", &runs)?;
    let table = summarize(&runs, &scenario_name, cfg.noise.snr());
    out.write_csv("table2.csv", &table)?;
    println!("{:<20} {:>16} {:>16} {:>14}", "method", "rpSNR (dB)", "PSNR (dB)", "SSIM");
    for t in &table {
        println!(
            "{:<20} {:>8.3} ± {:<6.3} {:>8.3} ± {:<6.3} {:>6.3} ± {:<5.3}",
            t.method, t.rpsnr_mean, t.rpsnr_std, t.psnr_mean, t.psnr_std, t.ssim_mean, t.ssim_std
        );
    }
    if r.ablation {
        out.write_csv("ablation_runs.csv", &ablation_runs)?;
        let table = summarize(&ablation_runs, &scenario_name, cfg.noise.snr());
        out.write_csv("table3.csv", &table)?;
        for t in &table {
            println!("ablation {:<20} {:>8.3} ± {:.3}", t.method, t.rpsnr_mean, t.rpsnr_std);
        }
    }
    Ok(())
}
