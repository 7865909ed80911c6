//! Run configuration: one TOML file plus a root seed fully specifies an
//! experiment.
//!
//! ```toml
//! seed = 0
//! out_dir = "out"
//! topology = "reference-small"   # or "reference-full", or a topology file
//!
//! [data]
//! images = "data/train-images-idx3-ubyte"
//! limit = 1000
//!
//! [device]
//! n_levels = 128
//!
//! [train]
//! epochs = 5
//! sigma_pct = 0.0
//!
//! [sweep]
//! variability = [0.0, 0.1, 0.2, 0.3, 0.4, 0.5]
//! ```
//!
//! Every table and key is optional. Without `data.images` the dataset is
//! looked up as `train-images-idx3-ubyte` under [`DATA_DIR_ENV`].

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::costsched::{CmosCostTable, ComponentCounts, TopologyCounts};
use crate::device::DeviceSpec;
use crate::error::{Error, Result};
use crate::layers::LayerKind;
use crate::network::{Role, TopologyBuilder, TopologyPair};
use crate::train::TrainConfig;

pub const DATA_DIR_ENV: &str = "MEMGAN_DATA_DIR";
pub const DEFAULT_IMAGES: &str = "train-images-idx3-ubyte";
pub const DESK_IMAGES: usize = 1000;
pub const FULL_EPOCHS: usize = 50;
pub const FULL_LATENT: usize = 100;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "String", into = "String")]
pub enum TopologyChoice {
    ReferenceSmall,
    ReferenceFull,
    File(PathBuf),
}

impl From<String> for TopologyChoice {
    fn from(s: String) -> Self {
        match s.as_str() {
            "reference-small" => TopologyChoice::ReferenceSmall,
            "reference-full" => TopologyChoice::ReferenceFull,
            _ => TopologyChoice::File(PathBuf::from(s)),
        }
    }
}

impl From<TopologyChoice> for String {
    fn from(t: TopologyChoice) -> Self {
        match t {
            TopologyChoice::ReferenceSmall => "reference-small".into(),
            TopologyChoice::ReferenceFull => "reference-full".into(),
            TopologyChoice::File(p) => p.display().to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub images: Option<PathBuf>,
    /// Use only the first `limit` images.
    pub limit: Option<usize>,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            images: None,
            limit: Some(DESK_IMAGES),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    /// Programming variability points, as fractions.
    pub variability: Vec<f64>,
    /// Device levels used by the variability sweep.
    pub variability_levels: u32,
    pub levels: Vec<u32>,
    pub snapshots: Vec<u64>,
    /// Generated images per quality evaluation.
    pub samples: usize,
    /// Latent seed of the evaluation samples.
    pub eval_seed: u64,
    /// Images per saved grid.
    pub grid: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            variability: vec![0.0, 0.1, 0.2, 0.3, 0.4, 0.5],
            variability_levels: 128,
            levels: vec![2, 4, 8, 16, 32, 64, 128, 256],
            snapshots: vec![1, 20, 50, 70],
            samples: 1000,
            eval_seed: 99,
            grid: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerateConfig {
    pub count: usize,
    /// Defaults to `checkpoint.mgck` in the output directory.
    pub checkpoint: Option<PathBuf>,
}

impl Default for GenerateConfig {
    fn default() -> Self {
        Self {
            count: 10,
            checkpoint: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LeakageConfig {
    pub rows: usize,
    pub cols: usize,
    pub noise_levels: Vec<f64>,
    pub trials: usize,
}

impl Default for LeakageConfig {
    fn default() -> Self {
        Self {
            rows: 16,
            cols: 16,
            noise_levels: vec![0.0, 0.1, 0.2, 0.4],
            trials: 10_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CountSource {
    /// 1.7 million weights, 6 layers, 784 columns.
    #[default]
    Published,
    /// Counted from the selected topology.
    Topology,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CostConfig {
    pub counts: CountSource,
    pub epochs: u64,
    pub images: u64,
    pub components: ComponentCounts,
    pub table: CmosCostTable,
}

impl Default for CostConfig {
    fn default() -> Self {
        Self {
            counts: CountSource::Published,
            epochs: 50,
            images: 60_000,
            components: ComponentCounts::all(1),
            table: CmosCostTable::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub out_dir: PathBuf,
    pub topology: TopologyChoice,
    /// Whole dataset, the full-size topology and at least 50 epochs.
    pub full_scale: bool,
    /// Adds wall-clock seconds to metrics CSVs (breaks byte reproducibility).
    pub record_wall_clock: bool,
    pub data: DataConfig,
    pub device: DeviceSpec,
    pub train: TrainConfig,
    pub sweep: SweepConfig,
    pub generate: GenerateConfig,
    pub leakage: LeakageConfig,
    pub cost: CostConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            out_dir: PathBuf::from("out"),
            topology: TopologyChoice::ReferenceSmall,
            full_scale: false,
            record_wall_clock: false,
            data: DataConfig::default(),
            device: DeviceSpec::wo2(),
            train: TrainConfig::default(),
            sweep: SweepConfig::default(),
            generate: GenerateConfig::default(),
            leakage: LeakageConfig::default(),
            cost: CostConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Switches to full scale: no dataset limit, the full topology in place
    /// of the small one, and at least [`FULL_EPOCHS`] epochs.
    pub fn apply_full_scale(&mut self) {
        self.full_scale = true;
        self.data.limit = None;
        if self.topology == TopologyChoice::ReferenceSmall {
            self.topology = TopologyChoice::ReferenceFull;
            self.train.latent_dim = FULL_LATENT;
        }
        self.train.epochs = self.train.epochs.max(FULL_EPOCHS);
    }

    /// Training config with the run seed applied.
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            seed: self.seed,
            ..self.train
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.device.validate()?;
        self.train_config().validate()?;
        self.cost.table.validate()?;
        if self.sweep.samples < 2 {
            return Err(Error::Config("sweep.samples must be at least 2".into()));
        }
        if self.data.limit == Some(0) {
            return Err(Error::Config("data.limit must be positive".into()));
        }
        if self.leakage.rows == 0 || self.leakage.cols == 0 {
            return Err(Error::Config("leakage crossbar must be nonempty".into()));
        }
        Ok(())
    }

    /// IDX image file: `data.images`, else the default name under the
    /// dataset directory from the environment.
    pub fn dataset_path(&self) -> Result<PathBuf> {
        let path = match &self.data.images {
            Some(p) => p.clone(),
            None => match std::env::var_os(DATA_DIR_ENV) {
                Some(dir) => PathBuf::from(dir).join(DEFAULT_IMAGES),
                None => {
                    return Err(Error::Config(format!(
                        "no dataset: set data.images or {DATA_DIR_ENV}"
                    )))
                }
            },
        };
        if !path.is_file() {
            return Err(Error::Config(format!("dataset {} not found", path.display())));
        }
        Ok(path)
    }

    pub fn topology_pair(&self) -> Result<TopologyPair> {
        match &self.topology {
            TopologyChoice::ReferenceSmall => TopologyPair::reference_small(self.train.latent_dim),
            TopologyChoice::ReferenceFull => TopologyPair::reference_full(self.train.latent_dim),
            TopologyChoice::File(p) => load_topology(p),
        }
    }

    pub fn topology_counts(&self) -> Result<TopologyCounts> {
        Ok(match self.cost.counts {
            CountSource::Published => TopologyCounts::published(),
            CountSource::Topology => TopologyCounts::from_pair(&self.topology_pair()?),
        })
    }
}

/// One layer of a topology file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LayerSpec {
    Conv {
        kernel: usize,
        filters: usize,
        #[serde(default = "one")]
        stride: usize,
        #[serde(default)]
        padding: usize,
    },
    Deconv {
        kernel: usize,
        filters: usize,
        #[serde(default = "one")]
        stride: usize,
        #[serde(default)]
        padding: usize,
        #[serde(default)]
        output_padding: usize,
    },
    Dense {
        shape: Vec<usize>,
    },
    MeanPool {
        window: usize,
    },
    Relu,
    Tanh,
    BatchNorm,
    Dropout {
        rate: f64,
    },
}

fn one() -> usize {
    1
}

fn yes() -> bool {
    true
}

/// Custom generator/discriminator pair.
///
/// ```toml
/// latent_dim = 16
/// image_shape = [28, 28, 1]
/// generator = [
///   { kind = "dense", shape = [7, 7, 2] },
///   { kind = "relu" },
///   { kind = "deconv", kernel = 3, filters = 1, stride = 4, padding = 0, output_padding = 1 },
///   { kind = "tanh" },
/// ]
/// discriminator = [ { kind = "conv", kernel = 3, filters = 2, padding = 1 }, ... ]
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologyFile {
    pub latent_dim: usize,
    pub image_shape: Vec<usize>,
    #[serde(default = "yes")]
    pub bias: bool,
    pub generator: Vec<LayerSpec>,
    pub discriminator: Vec<LayerSpec>,
}

impl TopologyFile {
    pub fn build(&self) -> Result<TopologyPair> {
        let g = build_side(
            TopologyBuilder::new(Role::Generator, &[self.latent_dim]).bias(self.bias),
            &self.generator,
        )?;
        let d = build_side(
            TopologyBuilder::new(Role::Discriminator, &self.image_shape).bias(self.bias),
            &self.discriminator,
        )?;
        TopologyPair::new(g, d)
    }
}

fn build_side(mut b: TopologyBuilder, specs: &[LayerSpec]) -> Result<crate::network::NetworkTopology> {
    for s in specs {
        b = match *s {
            LayerSpec::Conv {
                kernel,
                filters,
                stride,
                padding,
            } => b.conv(kernel, filters, stride, padding)?,
            LayerSpec::Deconv {
                kernel,
                filters,
                stride,
                padding,
                output_padding,
            } => b.deconv(kernel, filters, stride, padding, output_padding)?,
            LayerSpec::Dense { ref shape } => b.dense(shape)?,
            LayerSpec::MeanPool { window } => b.mean_pool(window)?,
            LayerSpec::Relu => b.stage(LayerKind::Relu)?,
            LayerSpec::Tanh => b.stage(LayerKind::Tanh)?,
            LayerSpec::BatchNorm => b.stage(LayerKind::BatchNorm)?,
            LayerSpec::Dropout { rate } => b.dropout(rate)?,
        };
    }
    b.build()
}

pub fn load_topology(path: &Path) -> Result<TopologyPair> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let file: TopologyFile =
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    file.build()
}
