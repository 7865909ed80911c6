//! Behavioral simulator of an analog memristive DCGAN accelerator.
//!
//! The generator (transposed convolutions) and discriminator (convolutions,
//! mean pooling, dense readout) run their forward passes through modeled
//! memristive crossbars: quantized conductance levels, programming
//! variability, load-memristor readout and sneak-path leakage. Backprop is
//! exact; every weight update is written back through the device model.
//!
//! Alongside the trainer, [`costsched`] computes training time and write
//! power of the accelerator under its update-scheduling schemes and the CMOS
//! power/area budget of the peripheral circuits.

pub mod costsched;
pub mod crossbar;
pub mod device;
pub mod error;
pub mod harness;
pub mod layers;
pub mod metric;
pub mod network;
pub mod rng;
pub mod tensor;
pub mod train;

pub use crossbar::{CrossbarArray, LeakageReport, ReadoutMode};
pub use device::{DeviceSpec, NoiseLaw, VariabilityModel};
pub use error::{Error, ErrorCategory, Result};
pub use layers::{LayerDesc, LayerKind};
pub use network::{NetworkTopology, Role, TopologyPair};
pub use tensor::Tensor;
pub use train::{AnalogEffects, TrainConfig, TrainState};
