//! Implementations of the five subcommands. Shared conventions:
//! every command writes its fully-resolved config and a provenance
//! sidecar (SHA-256 of each artifact) into the output directory, and all
//! CSV output is bit-deterministic for a fixed (config, seed) pair —
//! wall-clock times go to `metrics.toml`, never into a CSV.

use crate::config::RunConfig;
use crate::plot::{Plot, Series};
use anyhow::{bail, Context, Result};
use pinnbeam::datagen::{synth_fiber_scans, synth_temporal, FiberScan, SensorSample, SensorSeries};
use pinnbeam::optim::{AdamConfig, LbfgsConfig, TrainConfig};
use pinnbeam::oracle::harmonic_strain;
use pinnbeam::spatial::{
    interior_cloud, mean_sq_second_diff, predict_field, train_spatial, Scenario, SpatialProblem,
};
use pinnbeam::temporal::{
    identify_omega, predict_strain, train_temporal, train_temporal_staged, OmegaMode,
    StagedSchedule, TemporalProblem,
};
use pinnbeam::{median, rel_l2};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

/// Marker error carrying the intended process exit code; inspected in
/// `main` after the anyhow chain unwinds.
#[derive(Debug)]
pub struct ExitHint(pub u8);

impl std::fmt::Display for ExitHint {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.0 {
            2 => write!(f, "configuration error"),
            3 => write!(f, "data error"),
            4 => write!(f, "training divergence"),
            _ => write!(f, "error"),
        }
    }
}

impl std::error::Error for ExitHint {}

// ── Artifact bookkeeping ────────────────────────────────────────────────

/// Collects written files and emits `provenance.toml` with their hashes.
struct Artifacts {
    dir: PathBuf,
    hashes: Vec<(String, String)>,
}

impl Artifacts {
    fn new(dir: &Path) -> Result<Artifacts> {
        std::fs::create_dir_all(dir)
            .with_context(|| format!("cannot create output directory {}", dir.display()))?;
        Ok(Artifacts {
            dir: dir.to_path_buf(),
            hashes: Vec::new(),
        })
    }

    fn write(&mut self, name: &str, content: &str) -> Result<PathBuf> {
        let path = self.dir.join(name);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        std::fs::write(&path, content)
            .with_context(|| format!("cannot write {}", path.display()))?;
        let mut h = Sha256::new();
        h.update(content.as_bytes());
        self.hashes.push((name.to_string(), format!("{:x}", h.finalize())));
        Ok(path)
    }

    fn finish(mut self) -> Result<()> {
        self.hashes.sort();
        let mut out = String::new();
        for (name, hash) in &self.hashes {
            let _ = writeln!(out, "\"{name}\" = \"{hash}\"");
        }
        std::fs::write(self.dir.join("provenance.toml"), out)?;
        Ok(())
    }
}

fn metrics_toml(entries: &BTreeMap<String, f64>) -> String {
    let mut out = String::new();
    for (k, v) in entries {
        let _ = writeln!(out, "{k} = {v:?}");
    }
    out
}

fn read_metrics(path: &Path) -> Option<BTreeMap<String, f64>> {
    let text = std::fs::read_to_string(path).ok()?;
    let table: toml::Table = text.parse().ok()?;
    let mut out = BTreeMap::new();
    for (k, v) in table {
        if let Some(f) = v.as_float().or_else(|| v.as_integer().map(|i| i as f64)) {
            out.insert(k, f);
        }
    }
    Some(out)
}

// ── Shared context ──────────────────────────────────────────────────────

pub struct Ctx {
    pub cfg: RunConfig,
    pub out: PathBuf,
}

pub fn prepare(
    config: Option<&Path>,
    out: &Path,
    seed: Option<u64>,
    noise_sigma: Option<f64>,
) -> Result<Ctx> {
    let mut cfg = match config {
        Some(path) => RunConfig::load(path).context(ExitHint(2))?,
        None => RunConfig::default(),
    };
    if let Some(s) = seed {
        cfg.temporal_data.seed = s;
        cfg.fiber_data.seed = s;
        cfg.temporal_train.seed = s;
        cfg.identify.seed = s;
        cfg.spatial_train.seed = s;
    }
    if let Some(sigma) = noise_sigma {
        if !(sigma >= 0.0) {
            return Err(anyhow::anyhow!("--noise-sigma must be non-negative").context(ExitHint(2)));
        }
        cfg.temporal_data.noise_sigma_microstrain = sigma;
        cfg.fiber_data.noise_sigma_microstrain = sigma;
    }
    cfg.validate().context(ExitHint(2))?;
    Ok(Ctx {
        cfg,
        out: out.to_path_buf(),
    })
}

fn echo_config(arts: &mut Artifacts, cfg: &RunConfig) -> Result<()> {
    arts.write("config.resolved.toml", &cfg.to_toml()?)?;
    Ok(())
}

fn require_file(path: &Path, hint: &str) -> Result<String> {
    if !path.exists() {
        return Err(anyhow::anyhow!(
            "expected dataset at {}; {hint}",
            path.display()
        )
        .context(ExitHint(3)));
    }
    std::fs::read_to_string(path)
        .with_context(|| format!("cannot read {}", path.display()))
}

fn load_temporal(data_dir: &Path) -> Result<SensorSeries> {
    let path = data_dir.join("temporal.csv");
    let text = require_file(&path, "run `pinnbeam synth` into this directory first")?;
    SensorSeries::from_csv(&text).context(ExitHint(3))
}

fn load_fiber(data_dir: &Path, name: &str) -> Result<FiberScan> {
    let path = data_dir.join(name);
    let text = require_file(&path, "run `pinnbeam synth` into this directory first")?;
    FiberScan::from_csv(&text).context(ExitHint(3))
}

fn seed_list(cfg_seed: u64, seeds: Option<u64>) -> Vec<u64> {
    match seeds {
        Some(n) => (0..n.max(1)).collect(),
        None => vec![cfg_seed],
    }
}

/// Write per-seed metric tables plus the medians of every shared key.
fn write_aggregate(
    arts: &mut Artifacts,
    per_seed: &[(u64, BTreeMap<String, f64>)],
) -> Result<()> {
    let mut out = String::new();
    let mut keys: Vec<String> = Vec::new();
    for (_, m) in per_seed {
        for k in m.keys() {
            if !keys.contains(k) {
                keys.push(k.clone());
            }
        }
    }
    keys.sort();
    let _ = writeln!(out, "[median]");
    for k in &keys {
        let vals: Vec<f64> = per_seed.iter().filter_map(|(_, m)| m.get(k).copied()).collect();
        if !vals.is_empty() {
            let _ = writeln!(out, "{k} = {:?}", median(&vals));
        }
    }
    for (seed, m) in per_seed {
        let _ = writeln!(out, "\n[seed_{seed}]");
        for (k, v) in m {
            let _ = writeln!(out, "{k} = {v:?}");
        }
    }
    arts.write("aggregate.toml", &out)?;
    Ok(())
}

// ── synth ───────────────────────────────────────────────────────────────

pub fn cmd_synth(ctx: &Ctx) -> Result<()> {
    let mut arts = Artifacts::new(&ctx.out)?;
    echo_config(&mut arts, &ctx.cfg)?;
    let series = synth_temporal(&ctx.cfg.temporal_data.spec())?;
    arts.write("temporal.csv", &series.to_csv())?;
    let fibers = synth_fiber_scans(&ctx.cfg.fiber_data.spec(&ctx.cfg.beam))?;
    arts.write("fiber_compression.csv", &fibers.compression.to_csv())?;
    arts.write("fiber_tension.csv", &fibers.tension.to_csv())?;
    arts.finish()?;
    println!(
        "synth: wrote temporal ({} samples) and fiber scans ({} + {} points) to {}",
        series.samples.len(),
        fibers.compression.points.len(),
        fibers.tension.points.len(),
        ctx.out.display()
    );
    Ok(())
}

// ── train-temporal ──────────────────────────────────────────────────────

fn temporal_history_csv(histories: &[(usize, &pinnbeam::optim::TrainHistory)]) -> String {
    let mut out = String::from("window,phase,iter,loss");
    if let Some((_, h)) = histories.first() {
        for name in &h.component_names {
            out.push(',');
            out.push_str(name);
        }
        for name in &h.extra_names {
            out.push(',');
            out.push_str(name);
        }
    }
    out.push('\n');
    for (w, h) in histories {
        for row in &h.rows {
            let _ = write!(out, "{w},{},{},{}", row.phase, row.iter, row.loss);
            for v in row.components.iter().chain(row.extras.iter()) {
                let _ = write!(out, ",{v}");
            }
            out.push('\n');
        }
    }
    out
}

fn prediction_grid(duration_s: f64) -> Vec<f64> {
    let n = (duration_s * 100.0).round() as usize;
    (0..=n).map(|i| duration_s * i as f64 / n as f64).collect()
}

fn temporal_error_grids(train_end_s: f64, duration_s: f64) -> (Vec<f64>, Vec<f64>) {
    let train: Vec<f64> = (0..=300)
        .map(|i| train_end_s * i as f64 / 300.0)
        .collect();
    let extrap: Vec<f64> = (0..=500)
        .map(|i| train_end_s + (duration_s - train_end_s) * i as f64 / 500.0)
        .collect();
    (train, extrap)
}

pub fn cmd_train_temporal(ctx: &Ctx, baseline: bool, seeds: Option<u64>) -> Result<()> {
    let cfg = &ctx.cfg;
    let series = load_temporal(&ctx.out)?;
    let (train, _) = series.split_at(cfg.temporal_data.train_end_s);
    if train.samples.is_empty() {
        bail!(anyhow::anyhow!("no samples at or before train_end_s").context(ExitHint(3)));
    }
    let sub = if baseline { "temporal-baseline" } else { "temporal-pinn" };
    let root = ctx.out.join(sub);
    let mut root_arts = Artifacts::new(&root)?;
    echo_config(&mut root_arts, cfg)?;
    let list = seed_list(cfg.temporal_train.seed, seeds);
    let multi = list.len() > 1;
    let mut per_seed = Vec::new();
    for &seed in &list {
        let dir = if multi { root.join(format!("seed_{seed}")) } else { root.clone() };
        let metrics = run_temporal_once(cfg, &train.samples, baseline, seed, &dir)?;
        println!(
            "{sub} seed {seed}: rel_l2_train {:.4}, rel_l2_extrap {:.4} ({:.0} s)",
            metrics["rel_l2_train"], metrics["rel_l2_extrap"], metrics["wall_s"]
        );
        per_seed.push((seed, metrics));
    }
    if multi {
        write_aggregate(&mut root_arts, &per_seed)?;
    }
    root_arts.finish()?;
    Ok(())
}

fn run_temporal_once(
    cfg: &RunConfig,
    train: &[SensorSample],
    baseline: bool,
    seed: u64,
    dir: &Path,
) -> Result<BTreeMap<String, f64>> {
    let t0 = Instant::now();
    let mut arts = Artifacts::new(dir)?;
    let tt = &cfg.temporal_train;
    let td = &cfg.temporal_data;
    let grid = prediction_grid(td.duration_s);
    let (train_grid, extrap_grid) = temporal_error_grids(td.train_end_s, td.duration_s);

    let (pred, train_pred, extrap_pred, final_loss) = if baseline {
        let mut problem = TemporalProblem::data_only_baseline(train.to_vec(), seed);
        problem.scaling.t_ref = tt.t_ref_s;
        problem.scaling.strain_scale = tt.strain_scale_microstrain;
        let store = problem.init_store()?;
        let train_cfg = TrainConfig {
            adam: AdamConfig {
                lr: tt.adam_lr,
                epochs: tt.adam_epochs,
                ..AdamConfig::default()
            },
            lbfgs: LbfgsConfig {
                memory: tt.lbfgs_memory,
                max_iters: tt.lbfgs_iters,
                ..LbfgsConfig::default()
            },
        };
        let r = train_temporal(&problem, &store, &train_cfg)?;
        arts.write("history.csv", &temporal_history_csv(&[(0, &r.history)]))?;
        arts.write("params.txt", &r.store.to_text())?;
        (
            predict_strain(&problem.net, &problem.scaling, &r.store, &grid),
            predict_strain(&problem.net, &problem.scaling, &r.store, &train_grid),
            predict_strain(&problem.net, &problem.scaling, &r.store, &extrap_grid),
            r.history.final_loss().unwrap_or(f64::NAN),
        )
    } else {
        let mut problem = TemporalProblem::pinn(
            train.to_vec(),
            (0.0, td.duration_s),
            2,
            OmegaMode::Fixed(td.omega_sq),
            seed,
        );
        problem.scaling.t_ref = tt.t_ref_s;
        problem.scaling.strain_scale = tt.strain_scale_microstrain;
        problem.w_ode = tt.w_ode;
        problem.w_data = tt.w_data;
        let period = 2.0 * std::f64::consts::PI / td.omega_sq.sqrt();
        let mut schedule = StagedSchedule::from_geometry(
            0.0,
            td.train_end_s,
            td.duration_s,
            period,
        )?;
        schedule.label_rate_hz = tt.label_rate_hz;
        schedule.ode_residual_scale = tt.ode_residual_scale;
        schedule.adam.lr = tt.adam_lr;
        schedule.adam.epochs = tt.adam_epochs;
        schedule.lbfgs.memory = tt.lbfgs_memory;
        schedule.lbfgs.max_iters = tt.lbfgs_iters;
        let r = train_temporal_staged(&problem, &schedule)?;
        let hist: Vec<(usize, &pinnbeam::optim::TrainHistory)> =
            r.histories.iter().enumerate().collect();
        arts.write("history.csv", &temporal_history_csv(&hist))?;
        for (k, w) in r.windows.iter().enumerate() {
            arts.write(&format!("params_w{k}.txt"), &w.store.to_text())?;
        }
        (
            r.predict_strain(&grid),
            r.predict_strain(&train_grid),
            r.predict_strain(&extrap_grid),
            r.final_loss(),
        )
    };

    let mut csv = String::from("t_s,strain_pred_microstrain\n");
    for (t, v) in grid.iter().zip(&pred) {
        let _ = writeln!(csv, "{t},{v}");
    }
    arts.write("predictions.csv", &csv)?;

    let oracle = |ts: &[f64]| -> Vec<f64> {
        ts.iter()
            .map(|&t| harmonic_strain(td.amplitude_microstrain, td.omega_sq, t))
            .collect()
    };
    let mut metrics = BTreeMap::new();
    metrics.insert(
        "rel_l2_train".to_string(),
        rel_l2(&train_pred, &oracle(&train_grid)),
    );
    metrics.insert(
        "rel_l2_extrap".to_string(),
        rel_l2(&extrap_pred, &oracle(&extrap_grid)),
    );
    metrics.insert("final_loss".to_string(), final_loss);
    metrics.insert("seed".to_string(), seed as f64);
    metrics.insert("wall_s".to_string(), t0.elapsed().as_secs_f64());
    arts.write("metrics.toml", &metrics_toml(&metrics))?;
    arts.finish()?;
    Ok(metrics)
}

// ── identify-omega ──────────────────────────────────────────────────────

pub fn cmd_identify(ctx: &Ctx) -> Result<()> {
    let cfg = &ctx.cfg;
    let series = load_temporal(&ctx.out)?;
    let (train, _) = series.split_at(cfg.temporal_data.train_end_s);
    let dir = ctx.out.join("identify");
    let mut arts = Artifacts::new(&dir)?;
    echo_config(&mut arts, cfg)?;
    let t0 = Instant::now();
    let problem = TemporalProblem::identification(
        train.samples,
        cfg.identify.omega_sq_init,
        cfg.identify.seed,
    )?;
    let train_cfg = TrainConfig {
        adam: AdamConfig {
            epochs: cfg.identify.adam_epochs,
            ..AdamConfig::default()
        },
        lbfgs: LbfgsConfig {
            memory: cfg.identify.lbfgs_memory,
            max_iters: cfg.identify.lbfgs_iters,
            ..LbfgsConfig::default()
        },
    };
    let id = identify_omega(&problem, &train_cfg)?;
    let mut csv = String::from("iter,omega_sq\n");
    let _ = writeln!(csv, "0,{}", cfg.identify.omega_sq_init);
    for (i, w) in id.trajectory.iter().enumerate() {
        let _ = writeln!(csv, "{},{w}", i + 1);
    }
    arts.write("trajectory.csv", &csv)?;
    arts.write("params.txt", &id.result.store.to_text())?;
    let truth = cfg.temporal_data.omega_sq;
    let mut metrics = BTreeMap::new();
    metrics.insert("omega_sq_init".to_string(), cfg.identify.omega_sq_init);
    metrics.insert("omega_sq_final".to_string(), id.omega_sq_final);
    metrics.insert(
        "rel_error_vs_config_omega_sq".to_string(),
        (id.omega_sq_final - truth).abs() / truth.abs().max(f64::MIN_POSITIVE),
    );
    metrics.insert(
        "final_loss".to_string(),
        id.result.history.final_loss().unwrap_or(f64::NAN),
    );
    metrics.insert("wall_s".to_string(), t0.elapsed().as_secs_f64());
    arts.write("metrics.toml", &metrics_toml(&metrics))?;
    arts.finish()?;
    println!(
        "identify: omega_sq {} -> {:.4} (config truth {truth}, {:.1} s)",
        cfg.identify.omega_sq_init,
        id.omega_sq_final,
        t0.elapsed().as_secs_f64()
    );
    Ok(())
}

// ── train-spatial ───────────────────────────────────────────────────────

pub fn cmd_train_spatial(
    ctx: &Ctx,
    scenario_idx: u8,
    no_pinning: bool,
    seeds: Option<u64>,
) -> Result<()> {
    let cfg = &ctx.cfg;
    let scenario = Scenario::from_index(scenario_idx)
        .map_err(anyhow::Error::from)
        .context(ExitHint(2))?;
    let compression = load_fiber(&ctx.out, "fiber_compression.csv")?;
    let tension = if scenario == Scenario::CompressionOnly {
        load_fiber(&ctx.out, "fiber_tension.csv").unwrap_or(FiberScan { points: Vec::new() })
    } else {
        let scan = load_fiber(&ctx.out, "fiber_tension.csv")?;
        if scan.points.is_empty() {
            bail!(anyhow::anyhow!(
                "scenario {scenario_idx} needs tension-fiber data, but fiber_tension.csv is empty"
            )
            .context(ExitHint(3)));
        }
        scan
    };

    // The resolved config surfaces the scenario-derived tension weight
    // (and omits the term entirely when the scenario has no tension data).
    let mut resolved = cfg.clone();
    resolved.spatial_train.scenario = Some(scenario_idx);
    resolved.spatial_train.w_exp_tension = match scenario {
        Scenario::CompressionOnly => None,
        s => Some(
            cfg.spatial_train
                .w_exp_tension
                .unwrap_or_else(|| s.tension_weight()),
        ),
    };
    resolved.spatial_train.null_space_pinning = !no_pinning;

    let root = ctx.out.join(format!("scenario-{scenario_idx}"));
    let mut root_arts = Artifacts::new(&root)?;
    echo_config(&mut root_arts, &resolved)?;
    let list = seed_list(cfg.spatial_train.seed, seeds);
    let multi = list.len() > 1;
    let mut per_seed = Vec::new();
    for &seed in &list {
        let dir = if multi { root.join(format!("seed_{seed}")) } else { root.clone() };
        let metrics =
            run_spatial_once(&resolved, &compression, &tension, scenario, seed, &dir)?;
        println!(
            "scenario {scenario_idx} seed {seed}: loss {:.3e}, fiber_c {:.4} ({:.0} s)",
            metrics["final_loss"], metrics["rel_l2_fiber_compression_vs_data"], metrics["wall_s"]
        );
        per_seed.push((seed, metrics));
    }
    if multi {
        write_aggregate(&mut root_arts, &per_seed)?;
    }
    root_arts.finish()?;
    Ok(())
}

fn run_spatial_once(
    cfg: &RunConfig,
    compression: &FiberScan,
    tension: &FiberScan,
    scenario: Scenario,
    seed: u64,
    dir: &Path,
) -> Result<BTreeMap<String, f64>> {
    let t0 = Instant::now();
    let mut arts = Artifacts::new(dir)?;
    let st = &cfg.spatial_train;
    let geom = cfg.beam.geometry();
    let mat = cfg.beam.material();
    let load = cfg.beam.load();
    let mut problem =
        SpatialProblem::four_point(&geom, &mat, &load, compression, tension, scenario, seed)?;
    problem.interior = interior_cloud(st.interior_points);
    problem.w_pde = st.w_pde;
    problem.w_bc = st.w_bc;
    problem.w_exp_c = st.w_exp_compression;
    if let Some(w) = st.w_exp_tension {
        problem.w_exp_t = w;
    }
    problem.w_rot = st.w_rotation;
    if !st.null_space_pinning {
        problem = problem.without_null_space_pinning();
    }
    let store = problem.init_store()?;
    let train_cfg = TrainConfig {
        adam: AdamConfig {
            lr: st.adam_lr,
            epochs: st.adam_epochs,
            ..AdamConfig::default()
        },
        lbfgs: LbfgsConfig {
            memory: st.lbfgs_memory,
            max_iters: st.lbfgs_iters,
            ..LbfgsConfig::default()
        },
    };
    let r = train_spatial(&problem, &store, &train_cfg)?;
    arts.write("params.txt", &r.store.to_text())?;
    arts.write(
        "history.csv",
        &temporal_history_csv(&[(0, &r.history)]),
    )?;

    // Full-field grid.
    let (nx, ny) = (st.field_grid_nx, st.field_grid_ny);
    let mut grid = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let x = -0.5 * geom.length + geom.length * i as f64 / (nx - 1) as f64;
            let y = -0.5 * geom.height + geom.height * j as f64 / (ny - 1) as f64;
            grid.push((x, y));
        }
    }
    let field = predict_field(&problem.net, &problem.transform, &problem.scaling, &r.store, &grid);
    let mut csv =
        String::from("x_m,y_m,ux_m,uy_m,sxx_pa,syy_pa,sxy_pa,exx_microstrain\n");
    for f in &field {
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{},{}",
            f.x_m, f.y_m, f.ux_m, f.uy_m, f.sxx_pa, f.syy_pa, f.sxy_pa, f.exx_microstrain
        );
    }
    arts.write("field.csv", &csv)?;

    // Fiber-line predictions at the measurement x-locations.
    let fiber_pred = |scan: &FiberScan, name: &str, arts: &mut Artifacts| -> Result<Vec<f64>> {
        let pts: Vec<(f64, f64)> = scan.points.iter().map(|p| (p.x_m, p.y_m)).collect();
        let pred = predict_field(&problem.net, &problem.transform, &problem.scaling, &r.store, &pts);
        let mut csv = String::from("x_m,y_m,exx_pred_microstrain\n");
        for f in &pred {
            let _ = writeln!(csv, "{},{},{}", f.x_m, f.y_m, f.exx_microstrain);
        }
        arts.write(name, &csv)?;
        Ok(pred.iter().map(|f| f.exx_microstrain).collect())
    };
    let comp_pred = fiber_pred(compression, "fiber_compression_pred.csv", &mut arts)?;
    let comp_data: Vec<f64> = compression.points.iter().map(|p| p.strain).collect();
    let mut metrics = BTreeMap::new();
    metrics.insert(
        "rel_l2_fiber_compression_vs_data".to_string(),
        rel_l2(&comp_pred, &comp_data),
    );
    if !tension.points.is_empty() {
        let tens_pred = fiber_pred(tension, "fiber_tension_pred.csv", &mut arts)?;
        let tens_data: Vec<f64> = tension.points.iter().map(|p| p.strain).collect();
        metrics.insert(
            "rel_l2_fiber_tension_vs_data".to_string(),
            rel_l2(&tens_pred, &tens_data),
        );
        let undamaged: Vec<usize> = tension
            .points
            .iter()
            .enumerate()
            .filter(|(_, p)| !p.damaged)
            .map(|(i, _)| i)
            .collect();
        metrics.insert(
            "rel_l2_fiber_tension_vs_undamaged".to_string(),
            rel_l2(
                &undamaged.iter().map(|&i| tens_pred[i]).collect::<Vec<_>>(),
                &undamaged.iter().map(|&i| tens_data[i]).collect::<Vec<_>>(),
            ),
        );
        metrics.insert(
            "roughness_fiber_tension".to_string(),
            mean_sq_second_diff(&tens_pred),
        );
        metrics.insert(
            "peak_fiber_tension_pred_microstrain".to_string(),
            tens_pred.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        );
    }
    metrics.insert("final_loss".to_string(), r.history.final_loss().unwrap_or(f64::NAN));
    metrics.insert("seed".to_string(), seed as f64);
    metrics.insert("wall_s".to_string(), t0.elapsed().as_secs_f64());
    arts.write("metrics.toml", &metrics_toml(&metrics))?;
    arts.finish()?;
    Ok(metrics)
}

// ── report ──────────────────────────────────────────────────────────────

fn read_csv_columns(path: &Path) -> Option<(Vec<String>, Vec<Vec<f64>>)> {
    let text = std::fs::read_to_string(path).ok()?;
    let mut lines = text.lines();
    let header: Vec<String> = lines.next()?.split(',').map(|s| s.to_string()).collect();
    let mut cols = vec![Vec::new(); header.len()];
    for line in lines {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != header.len() {
            return None;
        }
        for (c, f) in cols.iter_mut().zip(fields) {
            c.push(f.parse().ok()?);
        }
    }
    Some((header, cols))
}

/// Search the run dir and its parent for a dataset file written by synth.
fn find_dataset(run_dir: &Path, name: &str) -> Option<PathBuf> {
    let own = run_dir.join(name);
    if own.exists() {
        return Some(own);
    }
    let parent = run_dir.parent()?.join(name);
    parent.exists().then_some(parent)
}

pub fn cmd_report(out: &Path, run_dirs: &[PathBuf]) -> Result<()> {
    let mut arts = Artifacts::new(out)?;
    let mut table = String::from("run\tkind\tmetrics\n");
    let mut temporal_series: Vec<Series> = Vec::new();
    let mut temporal_marker: Option<f64> = None;
    let mut temporal_data_file: Option<PathBuf> = None;
    let mut omega_series: Vec<Series> = Vec::new();
    let mut tension_series: Vec<Series> = Vec::new();
    let mut compression_series: Vec<Series> = Vec::new();
    let mut fiber_data_dir: Option<PathBuf> = None;

    for dir in run_dirs {
        let name = dir
            .file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| dir.display().to_string());
        let metrics = match read_metrics(&dir.join("metrics.toml")) {
            Some(m) => m,
            None => {
                eprintln!(
                    "warning: {} has no readable metrics.toml; skipping",
                    dir.display()
                );
                continue;
            }
        };
        let kind; // classified by artifact shape
        if dir.join("trajectory.csv").exists() {
            kind = "identify";
            if let Some((_, cols)) = read_csv_columns(&dir.join("trajectory.csv")) {
                omega_series.push(Series {
                    label: name.clone(),
                    points: cols[0].iter().zip(&cols[1]).map(|(&x, &y)| (x, y)).collect(),
                    color: String::new(),
                    scatter: false,
                });
            }
        } else if dir.join("field.csv").exists() {
            kind = "spatial";
            for (file, bucket) in [
                ("fiber_tension_pred.csv", &mut tension_series),
                ("fiber_compression_pred.csv", &mut compression_series),
            ] {
                if let Some((_, cols)) = read_csv_columns(&dir.join(file)) {
                    bucket.push(Series {
                        label: name.clone(),
                        points: cols[0].iter().zip(&cols[2]).map(|(&x, &y)| (x, y)).collect(),
                        color: String::new(),
                        scatter: false,
                    });
                }
            }
            if fiber_data_dir.is_none() {
                if let Some(p) = find_dataset(dir, "fiber_tension.csv") {
                    fiber_data_dir = p.parent().map(|p| p.to_path_buf());
                }
            }
        } else if dir.join("predictions.csv").exists() {
            kind = "temporal";
            if let Some((_, cols)) = read_csv_columns(&dir.join("predictions.csv")) {
                temporal_series.push(Series {
                    label: name.clone(),
                    points: cols[0].iter().zip(&cols[1]).map(|(&x, &y)| (x, y)).collect(),
                    color: String::new(),
                    scatter: false,
                });
            }
            if temporal_data_file.is_none() {
                temporal_data_file = find_dataset(dir, "temporal.csv");
            }
            if temporal_marker.is_none() {
                // The training window end lives in the echoed config.
                if let Ok(text) = std::fs::read_to_string(dir.join("config.resolved.toml")) {
                    if let Ok(cfg) = toml::from_str::<RunConfig>(&text) {
                        temporal_marker = Some(cfg.temporal_data.train_end_s);
                    }
                }
            }
        } else {
            kind = "unknown";
        }
        let mut summary: Vec<String> = metrics
            .iter()
            .filter(|(k, _)| *k != "seed")
            .map(|(k, v)| format!("{k}={v:.6}"))
            .collect();
        summary.sort();
        let _ = writeln!(table, "{name}\t{kind}\t{}", summary.join(" "));
    }

    if !temporal_series.is_empty() {
        if let Some(path) = &temporal_data_file {
            if let Some((_, cols)) = read_csv_columns(path) {
                temporal_series.push(Series {
                    label: "measured".into(),
                    points: cols[0].iter().zip(&cols[1]).map(|(&x, &y)| (x, y)).collect(),
                    color: "#555555".into(),
                    scatter: true,
                });
            }
        }
        let plot = Plot {
            title: "strain prediction overlay".into(),
            x_label: "t [s]".into(),
            y_label: "strain [microstrain]".into(),
            series: temporal_series,
            x_markers: temporal_marker
                .map(|t| vec![(t, "train end".to_string())])
                .unwrap_or_default(),
        };
        arts.write("temporal_overlay.svg", &plot.render())?;
    }
    if !omega_series.is_empty() {
        let plot = Plot {
            title: "identified frequency trajectory".into(),
            x_label: "iteration".into(),
            y_label: "omega_sq [1/s^2]".into(),
            series: omega_series,
            x_markers: vec![],
        };
        arts.write("identify_trajectory.svg", &plot.render())?;
    }
    for (mut series, data_name, out_name, title) in [
        (
            std::mem::take(&mut tension_series),
            "fiber_tension.csv",
            "fiber_tension_overlay.svg",
            "tension fiber strain",
        ),
        (
            std::mem::take(&mut compression_series),
            "fiber_compression.csv",
            "fiber_compression_overlay.svg",
            "compression fiber strain",
        ),
    ] {
        if series.is_empty() {
            continue;
        }
        if let Some(dir) = &fiber_data_dir {
            if let Some((_, cols)) = read_csv_columns(&dir.join(data_name)) {
                series.push(Series {
                    label: "measured".into(),
                    points: cols[0].iter().zip(&cols[2]).map(|(&x, &y)| (x, y)).collect(),
                    color: "#555555".into(),
                    scatter: true,
                });
            }
        }
        let plot = Plot {
            title: title.into(),
            x_label: "x [m]".into(),
            y_label: "strain [microstrain]".into(),
            series,
            x_markers: vec![],
        };
        arts.write(out_name, &plot.render())?;
    }
    arts.write("summary.txt", &table)?;
    print!("{table}");
    arts.finish()?;
    Ok(())
}
