//! Subcommand implementations. Each writes its files under
//! `<out_dir>/<command>/` and returns a short text summary.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;

use crate::costsched::{cmos_cost, schedule_table};
use crate::crossbar::map_weights;
use crate::error::{Error, Result};
use crate::harness::checkpoint::{load_checkpoint, save_checkpoint};
use crate::harness::config::RunConfig;
use crate::harness::image::write_grid;
use crate::harness::mnist::load_mnist;
use crate::harness::records::{write_table, MetricsLog, MetricsRecord};
use crate::harness::sweep::{self, PointRun, SweepContext, SweepPoint};
use crate::metric::ReferenceStats;
use crate::network::TopologyPair;
use crate::rng;
use crate::tensor::Tensor;
use crate::train::TrainState;

pub const CHECKPOINT_FILE: &str = "checkpoint.mgck";
const GRID_COLS: usize = 10;

#[derive(Debug, Clone, Default)]
pub struct Outcome {
    pub files: Vec<PathBuf>,
    pub summary: String,
}

impl Outcome {
    fn file(&mut self, p: PathBuf) {
        self.files.push(p);
    }
}

fn command_dir(cfg: &RunConfig, name: &str) -> Result<PathBuf> {
    let dir = cfg.out_dir.join(name);
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    Ok(dir)
}

/// Training images in `[−1, 1]`, truncated to `data.limit`.
pub fn load_dataset(cfg: &RunConfig) -> Result<Vec<Tensor>> {
    let mut images = load_mnist(&cfg.dataset_path()?)?;
    if let Some(n) = cfg.data.limit {
        images.truncate(n);
    }
    if images.is_empty() {
        return Err(Error::EmptySet);
    }
    Ok(images)
}

fn check_image_shape(pair: &TopologyPair, data: &[Tensor]) -> Result<()> {
    if data[0].shape() != pair.image_shape() {
        return Err(Error::Shape(format!(
            "dataset images {:?}, topology expects {:?}",
            data[0].shape(),
            pair.image_shape()
        )));
    }
    Ok(())
}

fn grid_cols(n: usize) -> usize {
    n.clamp(1, GRID_COLS)
}

pub fn train(cfg: &RunConfig) -> Result<Outcome> {
    cfg.validate()?;
    let pair = cfg.topology_pair()?;
    let data = load_dataset(cfg)?;
    check_image_shape(&pair, &data)?;
    let stats = ReferenceStats::new(&data)?;
    let dir = command_dir(cfg, "train")?;
    let mut state = TrainState::new(pair, cfg.device, cfg.train_config())?;
    let vs = state.v_scale();
    let run_id = format!("train-s{}", cfg.seed);
    let mut log = MetricsLog::default();
    let mut out = Outcome::default();
    let start = std::time::Instant::now();
    let ckpt = dir.join(CHECKPOINT_FILE);
    let metrics = dir.join("metrics.csv");
    for _ in 0..cfg.train.epochs {
        let l = state.train_epoch(&data);
        let l = match l {
            Ok(l) => l,
            Err(e) => {
                log.write_csv(&metrics, cfg.record_wall_clock)?;
                return Err(e);
            }
        };
        let (metric, samples) = sweep::evaluate(&state, &stats, cfg.sweep.samples, cfg.sweep.eval_seed)?;
        log.push(MetricsRecord {
            run_id: run_id.clone(),
            epoch: l.epoch,
            d_loss: l.d_loss,
            g_loss: l.g_loss,
            quality_metric: metric,
            variability: cfg.train.analog.sigma_pct,
            n_levels: cfg.device.n_levels,
            wall_seconds: start.elapsed().as_secs_f64(),
        })?;
        let grid: Vec<Tensor> = samples.into_iter().take(cfg.sweep.grid).collect();
        let path = dir.join(format!("grid-epoch-{:03}.pgm", l.epoch));
        write_grid(&path, &grid, grid_cols(grid.len()), vs)?;
        out.file(path);
        save_checkpoint(&state, &ckpt)?;
        let _ = writeln!(
            out.summary,
            "epoch {}: d_loss {:.4} g_loss {:.4} quality {:.2}",
            l.epoch, l.d_loss, l.g_loss, metric
        );
    }
    log.write_csv(&metrics, cfg.record_wall_clock)?;
    out.file(metrics);
    out.file(ckpt);
    let _ = writeln!(out.summary, "update events: {}", state.events);
    Ok(out)
}

pub fn generate(cfg: &RunConfig) -> Result<Outcome> {
    cfg.validate()?;
    let ckpt = cfg
        .generate
        .checkpoint
        .clone()
        .unwrap_or_else(|| cfg.out_dir.join("train").join(CHECKPOINT_FILE));
    let state = load_checkpoint(&ckpt, Some(&cfg.device))?;
    let dir = command_dir(cfg, "generate")?;
    let seed = rng::stream_seed(cfg.seed, rng::NOISE, 0);
    let images = state.generate_samples(cfg.generate.count, seed)?;
    let mut out = Outcome::default();
    if images.is_empty() {
        out.summary = "no samples requested\n".into();
        return Ok(out);
    }
    let path = dir.join("samples.pgm");
    write_grid(&path, &images, grid_cols(images.len()), state.v_scale())?;
    out.summary = format!(
        "{} samples from {} (epoch {}, {} update events)\n",
        images.len(),
        ckpt.display(),
        state.epoch,
        state.events
    );
    out.file(path);
    Ok(out)
}

fn sweep_setup(cfg: &RunConfig) -> Result<(TopologyPair, Vec<Tensor>, ReferenceStats)> {
    cfg.validate()?;
    let pair = cfg.topology_pair()?;
    let data = load_dataset(cfg)?;
    check_image_shape(&pair, &data)?;
    let stats = ReferenceStats::new(&data)?;
    Ok((pair, data, stats))
}

fn context<'a>(
    cfg: &RunConfig,
    pair: &'a TopologyPair,
    data: &'a [Tensor],
    stats: &'a ReferenceStats,
) -> SweepContext<'a> {
    SweepContext {
        pair,
        device: cfg.device,
        train: cfg.train_config(),
        data,
        stats,
        samples: cfg.sweep.samples,
        eval_seed: cfg.sweep.eval_seed,
        grid: cfg.sweep.grid,
    }
}

/// Writes each point's grid and metrics into its own directory, then the
/// aggregated metrics and summary. Returns the first training error.
fn write_sweep(
    cfg: &RunConfig,
    dir: &Path,
    runs: &[PointRun],
    label: impl Fn(&SweepPoint) -> String,
    baseline: Option<u32>,
) -> Result<Outcome> {
    let mut out = Outcome::default();
    let mut all = MetricsLog::default();
    let mut rows = Vec::new();
    for run in runs {
        let name = label(&run.point);
        let pdir = dir.join(&name);
        fs::create_dir_all(&pdir).map_err(|e| Error::io(&pdir, e))?;
        let mut log = MetricsLog::default();
        log.extend(run.records.iter().cloned())?;
        log.write_csv(&pdir.join("metrics.csv"), cfg.record_wall_clock)?;
        all.extend(run.records.iter().cloned())?;
        if let Some(s) = run.snapshots.last() {
            let path = pdir.join("grid.pgm");
            write_grid(&path, &s.grid, grid_cols(s.grid.len()), run.state.v_scale())?;
            out.file(path);
            if baseline == Some(run.point.n_levels) {
                let path = dir.join("baseline.pgm");
                write_grid(&path, &s.grid, grid_cols(s.grid.len()), run.state.v_scale())?;
                out.file(path);
            }
        }
        if let Some(m) = run.final_metric().filter(|_| run.diverged.is_none()) {
            rows.push(vec![
                run.run_id.clone(),
                run.point.sigma_pct.to_string(),
                run.point.n_levels.to_string(),
                m.to_string(),
            ]);
            let _ = writeln!(out.summary, "{name}: quality {m:.2}");
        } else {
            let _ = writeln!(out.summary, "{name}: diverged");
        }
    }
    let metrics = dir.join("metrics.csv");
    all.write_csv(&metrics, cfg.record_wall_clock)?;
    let summary = dir.join("summary.csv");
    write_table(&summary, &["run_id", "variability", "n_levels", "quality_metric"], &rows)?;
    out.file(metrics);
    out.file(summary);
    if let Some(event) = runs.iter().find_map(|r| r.diverged) {
        return Err(Error::TrainingDiverged { event });
    }
    Ok(out)
}

pub fn sweep_variability(cfg: &RunConfig) -> Result<Outcome> {
    if cfg.sweep.variability.is_empty() {
        return Err(Error::Config("sweep.variability is empty".into()));
    }
    let (pair, data, stats) = sweep_setup(cfg)?;
    let ctx = context(cfg, &pair, &data, &stats);
    let points = sweep::variability_points(&cfg.sweep.variability, cfg.sweep.variability_levels);
    let runs = sweep::run_points(&ctx, &points, cfg.train.epochs as u64, cfg.record_wall_clock)?;
    let dir = command_dir(cfg, "sweep-variability")?;
    write_sweep(
        cfg,
        &dir,
        &runs,
        |p| format!("var{:02}", (p.sigma_pct * 100.0).round() as i64),
        None,
    )
}

pub fn sweep_levels(cfg: &RunConfig) -> Result<Outcome> {
    if cfg.sweep.levels.is_empty() {
        return Err(Error::Config("sweep.levels is empty".into()));
    }
    let (pair, data, stats) = sweep_setup(cfg)?;
    let ctx = context(cfg, &pair, &data, &stats);
    let points = sweep::level_points(&cfg.sweep.levels);
    let runs = sweep::run_points(&ctx, &points, cfg.train.epochs as u64, cfg.record_wall_clock)?;
    let dir = command_dir(cfg, "sweep-levels")?;
    let baseline = cfg.sweep.levels.iter().max().copied();
    write_sweep(cfg, &dir, &runs, |p| format!("levels{:03}", p.n_levels), baseline)
}

pub fn snapshot_epochs(cfg: &RunConfig) -> Result<Outcome> {
    let Some(&last) = cfg.sweep.snapshots.iter().max() else {
        return Err(Error::Config("sweep.snapshots is empty".into()));
    };
    if cfg.sweep.snapshots.contains(&0) {
        return Err(Error::Config("snapshot epochs start at 1".into()));
    }
    let (pair, data, stats) = sweep_setup(cfg)?;
    let ctx = context(cfg, &pair, &data, &stats);
    let point = SweepPoint {
        sigma_pct: cfg.train.analog.sigma_pct,
        n_levels: cfg.device.n_levels,
    };
    let run = sweep::run_point(&ctx, point, last, &cfg.sweep.snapshots, cfg.record_wall_clock)?;
    let dir = command_dir(cfg, "snapshot-epochs")?;
    let mut out = Outcome::default();
    let mut rows = Vec::new();
    for s in &run.snapshots {
        let path = dir.join(format!("grid-epoch-{:03}.pgm", s.epoch));
        write_grid(&path, &s.grid, grid_cols(s.grid.len()), run.state.v_scale())?;
        out.file(path);
        if let Some(m) = s.quality_metric {
            rows.push(vec![s.epoch.to_string(), s.events.to_string(), m.to_string()]);
            let _ = writeln!(out.summary, "epoch {}: {} update events, quality {m:.2}", s.epoch, s.events);
        }
    }
    let mut log = MetricsLog::default();
    log.extend(run.records.iter().cloned())?;
    let metrics = dir.join("metrics.csv");
    log.write_csv(&metrics, cfg.record_wall_clock)?;
    let summary = dir.join("summary.csv");
    write_table(&summary, &["epoch", "update_events", "quality_metric"], &rows)?;
    out.file(metrics);
    out.file(summary);
    match run.diverged {
        Some(event) => Err(Error::TrainingDiverged { event }),
        None => Ok(out),
    }
}

pub fn cost(cfg: &RunConfig) -> Result<Outcome> {
    cfg.validate()?;
    let counts = cfg.topology_counts()?;
    let reports = schedule_table(&cfg.device, counts, cfg.cost.epochs, cfg.cost.images)?;
    let dir = command_dir(cfg, "cost")?;
    let mut rows = Vec::new();
    let mut text = format!(
        "weights {}  crossbar layers {}  max columns {}  update events {}\n\n",
        counts.weights,
        counts.layers,
        counts.max_columns,
        cfg.cost.epochs * cfg.cost.images
    );
    let _ = writeln!(
        text,
        "{:<32} {:>10} {:>10} {:>14} {:>12} {:>12}",
        "scheme", "t_write", "steps", "time (s)", "P_max (W)", "P_min (W)"
    );
    for r in &reports {
        let published = r.scheme.published();
        for (k, &(t, secs)) in r.time_variants.iter().enumerate() {
            rows.push(vec![
                r.scheme.name().to_string(),
                t.to_string(),
                r.steps_per_event.to_string(),
                r.parallel_writes_per_step.to_string(),
                secs.to_string(),
                r.power_max.to_string(),
                r.power_min.to_string(),
                published.times[k].to_string(),
                published.power_max.to_string(),
                published.power_min.to_string(),
            ]);
            let _ = writeln!(
                text,
                "{:<32} {:>8}ns {:>10} {:>14.6} {:>12.4} {:>12.4}   (published {} s, {} W, {} W)",
                r.scheme.name(),
                (t * 1e9).round(),
                r.steps_per_event,
                secs,
                r.power_max,
                r.power_min,
                published.times[k],
                published.power_max,
                published.power_min
            );
        }
        if let Some(note) = r.note {
            let _ = writeln!(text, "  {note}");
        }
    }
    let schedule = dir.join("schedule.csv");
    write_table(
        &schedule,
        &[
            "scheme",
            "t_write_s",
            "steps_per_event",
            "parallel_writes",
            "training_time_s",
            "power_max_w",
            "power_min_w",
            "published_time_s",
            "published_power_max_w",
            "published_power_min_w",
        ],
        &rows,
    )?;
    let c = cmos_cost(&cfg.cost.components, &cfg.cost.table);
    let counts_row = cfg.cost.components;
    let cmos = dir.join("cmos.csv");
    write_table(
        &cmos,
        &["dropout_switch", "opamp", "thresholding", "relu", "crossbar_switch", "power_mw", "area_um2"],
        &[vec![
            counts_row.dropout_switch.to_string(),
            counts_row.opamp.to_string(),
            counts_row.thresholding.to_string(),
            counts_row.relu.to_string(),
            counts_row.crossbar_switch.to_string(),
            c.power_mw.to_string(),
            c.area_um2.to_string(),
        ]],
    )?;
    let _ = writeln!(
        text,
        "\nCMOS peripherals: {} mW, {} µm² ({} W, {} mm²)",
        c.power_mw,
        c.area_um2,
        c.power_w(),
        c.area_mm2()
    );
    let txt = dir.join("cost.txt");
    fs::write(&txt, &text).map_err(|e| Error::io(&txt, e))?;
    Ok(Outcome {
        files: vec![schedule, cmos, txt],
        summary: text,
    })
}

pub fn leakage(cfg: &RunConfig) -> Result<Outcome> {
    cfg.validate()?;
    if cfg.leakage.noise_levels.is_empty() {
        return Err(Error::Config("leakage.noise_levels is empty".into()));
    }
    let (rows, cols) = (cfg.leakage.rows, cfg.leakage.cols);
    let mut r = rng::substream(cfg.seed, rng::WEIGHTS, 0);
    let w: Vec<f64> = (0..rows * cols).map(|_| r.random::<f64>() * 2.0 - 1.0).collect();
    let xbar = map_weights(
        &Tensor::new(vec![rows, cols], w)?,
        &cfg.device,
        true,
        Some(1.0),
    )?;
    let dir = command_dir(cfg, "leakage")?;
    let mut table = Vec::new();
    let mut out = Outcome::default();
    for &noise in &cfg.leakage.noise_levels {
        let mean = xbar.mean_leakage(noise, cfg.leakage.trials, cfg.seed);
        table.push(vec![noise.to_string(), mean.to_string()]);
        let _ = writeln!(out.summary, "noise {noise}: mean leakage {mean:.6e} A");
    }
    let path = dir.join("leakage.csv");
    write_table(&path, &["noise_level", "mean_leakage_a"], &table)?;
    out.file(path);
    Ok(out)
}
