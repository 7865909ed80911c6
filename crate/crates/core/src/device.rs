//! Single-memristor model: conductance level grid, quantization,
//! programming variability and write power.
//!
//! Levels are spaced uniformly in conductance between `1/r_off` and
//! `1/r_on`. A write is an instantaneous transition to a target level;
//! switching dynamics are not modeled.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Electrical parameters of one memristor type.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DeviceSpec {
    #[serde(rename = "r_on_ohms")]
    pub r_on: f64,
    #[serde(rename = "r_off_ohms")]
    pub r_off: f64,
    #[serde(rename = "v_threshold_volts")]
    pub v_threshold: f64,
    #[serde(rename = "v_write_volts")]
    pub v_write: f64,
    #[serde(rename = "t_write_seconds")]
    pub t_write: f64,
    pub n_levels: u32,
}

impl Default for DeviceSpec {
    fn default() -> Self {
        Self::wo2()
    }
}

impl DeviceSpec {
    pub fn new(
        r_on: f64,
        r_off: f64,
        v_threshold: f64,
        v_write: f64,
        t_write: f64,
        n_levels: u32,
    ) -> Result<Self> {
        let spec = Self {
            r_on,
            r_off,
            v_threshold,
            v_write,
            t_write,
            n_levels,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// WO₂ device: 4 kΩ / 25 kΩ, 0.8 V threshold, 1 V writes of 10 ns,
    /// 128 stable levels.
    pub fn wo2() -> Self {
        Self {
            r_on: 4.0e3,
            r_off: 25.0e3,
            v_threshold: 0.8,
            v_write: 1.0,
            t_write: 10e-9,
            n_levels: 128,
        }
    }

    pub fn with_levels(mut self, n_levels: u32) -> Self {
        self.n_levels = n_levels;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [self.r_on, self.r_off, self.v_threshold, self.v_write, self.t_write];
        if fields.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidDevice("non-finite parameter".into()));
        }
        if !(self.r_on > 0.0 && self.r_on < self.r_off) {
            return Err(Error::InvalidDevice(format!(
                "need 0 < r_on < r_off, got r_on={} r_off={}",
                self.r_on, self.r_off
            )));
        }
        if self.v_write <= self.v_threshold {
            return Err(Error::InvalidDevice(format!(
                "write voltage {} V does not exceed threshold {} V",
                self.v_write, self.v_threshold
            )));
        }
        if self.t_write <= 0.0 {
            return Err(Error::InvalidDevice("t_write must be positive".into()));
        }
        if self.n_levels < 2 {
            return Err(Error::InvalidDevice(format!(
                "n_levels must be at least 2, got {}",
                self.n_levels
            )));
        }
        Ok(())
    }

    /// Conductance of the low-resistance state.
    pub fn g_on(&self) -> f64 {
        1.0 / self.r_on
    }

    /// Conductance of the high-resistance state.
    pub fn g_off(&self) -> f64 {
        1.0 / self.r_off
    }

    pub fn g_range(&self) -> f64 {
        self.g_on() - self.g_off()
    }

    /// Spacing between adjacent conductance levels.
    pub fn level_gap(&self) -> f64 {
        self.g_range() / f64::from(self.n_levels - 1)
    }

    /// Conductance of level `k`; the top level is exactly `g_on`.
    pub fn level(&self, k: u32) -> f64 {
        if k + 1 >= self.n_levels {
            self.g_on()
        } else {
            self.g_off() + f64::from(k) * self.level_gap()
        }
    }

    pub fn conductance_levels(&self) -> Vec<f64> {
        (0..self.n_levels).map(|k| self.level(k)).collect()
    }

    pub fn clip(&self, g: f64) -> f64 {
        g.clamp(self.g_off(), self.g_on())
    }

    /// Index of the grid level nearest to `g`; ties go to the higher level.
    pub fn level_index(&self, g: f64) -> u32 {
        let top = self.n_levels - 1;
        if g <= self.g_off() {
            return 0;
        }
        if g >= self.g_on() {
            return top;
        }
        // The estimate can be off by one step from rounding; check neighbours.
        let est = (((g - self.g_off()) / self.level_gap()).floor() as u32).min(top);
        let mut best = est.saturating_sub(1);
        let mut best_dist = f64::INFINITY;
        for k in est.saturating_sub(1)..=(est + 1).min(top) {
            let d = (g - self.level(k)).abs();
            if d <= best_dist {
                best = k;
                best_dist = d;
            }
        }
        best
    }

    /// Nearest level, clamping out-of-range values to the end points.
    pub fn quantize(&self, g: f64) -> f64 {
        self.level(self.level_index(g))
    }

    /// Power drawn by one write at conductance `g`: `v_write² · g`.
    pub fn write_power(&self, g: f64) -> f64 {
        self.v_write * self.v_write * g
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseLaw {
    #[default]
    MultiplicativeGaussian,
}

/// Device-to-device programming variability.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VariabilityModel {
    /// Fractional standard deviation; `0.3` is 30 % variability.
    pub sigma_pct: f64,
    #[serde(default)]
    pub distribution: NoiseLaw,
    #[serde(default)]
    pub seed: u64,
}

impl VariabilityModel {
    pub fn new(sigma_pct: f64, seed: u64) -> Result<Self> {
        if !(sigma_pct >= 0.0 && sigma_pct.is_finite()) {
            return Err(Error::InvalidDevice(format!(
                "variability must be a finite non-negative fraction, got {sigma_pct}"
            )));
        }
        Ok(Self {
            sigma_pct,
            distribution: NoiseLaw::MultiplicativeGaussian,
            seed,
        })
    }

    pub fn ideal() -> Self {
        Self {
            sigma_pct: 0.0,
            distribution: NoiseLaw::MultiplicativeGaussian,
            seed: 0,
        }
    }

    pub fn is_ideal(&self) -> bool {
        self.sigma_pct == 0.0
    }

    /// Programmed conductance for target `g`: `g · (1 + ε)`, clipped to the
    /// device range.
    ///
    /// Always consumes exactly one normal draw so streams stay aligned across
    /// sweep points with different `sigma_pct`.
    pub fn sample<R: Rng + ?Sized>(&self, spec: &DeviceSpec, g: f64, rng: &mut R) -> f64 {
        let z: f64 = StandardNormal.sample(rng);
        if self.is_ideal() {
            return g;
        }
        match self.distribution {
            NoiseLaw::MultiplicativeGaussian => spec.clip(g * (1.0 + self.sigma_pct * z)),
        }
    }
}
