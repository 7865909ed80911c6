//! Training runs that vary one device axis, with per-epoch quality records
//! and sample-grid snapshots.

use rayon::prelude::*;

use crate::device::DeviceSpec;
use crate::error::{Error, Result};
use crate::harness::records::MetricsRecord;
use crate::metric::ReferenceStats;
use crate::network::TopologyPair;
use crate::tensor::Tensor;
use crate::train::{TrainConfig, TrainState};

/// Everything shared by the points of one sweep.
#[derive(Debug, Clone, Copy)]
pub struct SweepContext<'a> {
    pub pair: &'a TopologyPair,
    pub device: DeviceSpec,
    pub train: TrainConfig,
    /// Training images in `[−1, 1]`.
    pub data: &'a [Tensor],
    pub stats: &'a ReferenceStats,
    pub samples: usize,
    pub eval_seed: u64,
    pub grid: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepPoint {
    pub sigma_pct: f64,
    pub n_levels: u32,
}

impl SweepPoint {
    pub fn run_id(&self, seed: u64) -> String {
        format!("var{:02}-lv{}-s{seed}", (self.sigma_pct * 100.0).round() as i64, self.n_levels)
    }
}

#[derive(Debug, Clone)]
pub struct Snapshot {
    pub epoch: u64,
    pub events: u64,
    /// `None` when the run diverged before reaching this epoch.
    pub quality_metric: Option<f64>,
    /// Sample images in volts.
    pub grid: Vec<Tensor>,
}

#[derive(Debug)]
pub struct PointRun {
    pub point: SweepPoint,
    pub run_id: String,
    pub records: Vec<MetricsRecord>,
    pub snapshots: Vec<Snapshot>,
    pub state: TrainState,
    /// Update event at which training diverged.
    pub diverged: Option<u64>,
}

impl PointRun {
    pub fn final_metric(&self) -> Option<f64> {
        self.records.last().map(|r| r.quality_metric)
    }
}

/// Quality metric of `n` generated images against `stats`, plus the images
/// (volts). Images are rescaled to the dataset range before comparison.
pub fn evaluate(state: &TrainState, stats: &ReferenceStats, n: usize, seed: u64) -> Result<(f64, Vec<Tensor>)> {
    let samples = state.generate_samples(n, seed)?;
    let vs = state.v_scale();
    let unit: Vec<Tensor> = samples.iter().map(|t| t.map(|v| v / vs)).collect();
    Ok((stats.distance(&unit)?, samples))
}

/// Trains one point for `epochs` epochs, recording the metric after every
/// epoch and a grid at each epoch in `snapshots`. On divergence the run
/// stops; if no snapshot was taken yet, the first one is emitted from the
/// diverged state so a grid always exists.
pub fn run_point(
    ctx: &SweepContext,
    point: SweepPoint,
    epochs: u64,
    snapshots: &[u64],
    wall_clock: bool,
) -> Result<PointRun> {
    let mut train = ctx.train;
    train.analog.sigma_pct = point.sigma_pct;
    let device = ctx.device.with_levels(point.n_levels);
    let mut state = TrainState::new(ctx.pair.clone(), device, train)?;
    let run_id = point.run_id(train.seed);
    let start = std::time::Instant::now();
    let mut records = Vec::new();
    let mut shots = Vec::new();
    let mut diverged = None;
    for _ in 0..epochs {
        let losses = match state.train_epoch(ctx.data) {
            Ok(l) => l,
            Err(Error::TrainingDiverged { event }) => {
                diverged = Some(event);
                break;
            }
            Err(e) => return Err(e),
        };
        let (metric, samples) = evaluate(&state, ctx.stats, ctx.samples, ctx.eval_seed)?;
        records.push(MetricsRecord {
            run_id: run_id.clone(),
            epoch: losses.epoch,
            d_loss: losses.d_loss,
            g_loss: losses.g_loss,
            quality_metric: metric,
            variability: point.sigma_pct,
            n_levels: point.n_levels,
            wall_seconds: if wall_clock { start.elapsed().as_secs_f64() } else { 0.0 },
        });
        if snapshots.contains(&losses.epoch) {
            shots.push(Snapshot {
                epoch: losses.epoch,
                events: state.events,
                quality_metric: Some(metric),
                grid: samples.into_iter().take(ctx.grid).collect(),
            });
        }
    }
    if diverged.is_some() && shots.is_empty() {
        if let Some(&first) = snapshots.iter().min() {
            shots.push(Snapshot {
                epoch: first,
                events: state.events,
                quality_metric: None,
                grid: state.generate_samples(ctx.grid, ctx.eval_seed)?,
            });
        }
    }
    Ok(PointRun {
        point,
        run_id,
        records,
        snapshots: shots,
        state,
        diverged,
    })
}

/// Runs independent points in parallel; results keep the order of `points`.
pub fn run_points(
    ctx: &SweepContext,
    points: &[SweepPoint],
    epochs: u64,
    wall_clock: bool,
) -> Result<Vec<PointRun>> {
    points
        .par_iter()
        .map(|&p| run_point(ctx, p, epochs, &[epochs], wall_clock))
        .collect()
}

pub fn variability_points(sigmas: &[f64], n_levels: u32) -> Vec<SweepPoint> {
    sigmas
        .iter()
        .map(|&sigma_pct| SweepPoint { sigma_pct, n_levels })
        .collect()
}

pub fn level_points(levels: &[u32]) -> Vec<SweepPoint> {
    levels
        .iter()
        .map(|&n_levels| SweepPoint {
            sigma_pct: 0.0,
            n_levels,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use rand::Rng;

    fn tiny_data() -> Vec<Tensor> {
        let mut r = rng::substream(1, "sweep-test", 0);
        (0..6)
            .map(|_| {
                let d = (0..784).map(|_| r.random::<f64>() * 2.0 - 1.0).collect();
                Tensor::new(vec![28, 28, 1], d).unwrap()
            })
            .collect()
    }

    #[test]
    fn records_and_snapshots() {
        let data = tiny_data();
        let stats = ReferenceStats::new(&data).unwrap();
        let pair = TopologyPair::reference_small(16).unwrap();
        let ctx = SweepContext {
            pair: &pair,
            device: DeviceSpec::wo2(),
            train: TrainConfig::default(),
            data: &data,
            stats: &stats,
            samples: 8,
            eval_seed: 1,
            grid: 3,
        };
        let p = SweepPoint {
            sigma_pct: 0.1,
            n_levels: 64,
        };
        let run = run_point(&ctx, p, 3, &[1, 3], false).unwrap();
        assert_eq!(run.run_id, "var10-lv64-s0");
        assert_eq!(run.records.len(), 3);
        assert_eq!(run.snapshots.iter().map(|s| s.epoch).collect::<Vec<_>>(), vec![1, 3]);
        assert_eq!(run.snapshots[1].events, 18);
        assert_eq!(run.snapshots[0].grid.len(), 3);
        assert_eq!(run.state.device.n_levels, 64);
        assert!(run.diverged.is_none());
        let again = run_points(&ctx, &[p, p], 3, false).unwrap();
        assert_eq!(again[0].records, run.records);
        assert_eq!(again[1].records, run.records);
    }

    #[test]
    fn point_lists() {
        assert_eq!(variability_points(&[0.0, 0.5], 128)[1].n_levels, 128);
        assert_eq!(level_points(&[2, 256])[0].sigma_pct, 0.0);
    }
}
