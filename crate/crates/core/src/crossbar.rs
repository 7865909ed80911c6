//! Crossbar dot-product engine.
//!
//! A signed weight matrix is stored as a conductance-magnitude matrix plus a
//! sign matrix. The sign is realized by inverting the row input when reading
//! that cell, so a column current is `Σ_i sign_ij · g_ij · v_i`.
//!
//! Two readouts are modeled. `Ideal` returns the exact signed product of the
//! inverse-mapped weights with the input. `Loaded` reads the column through a
//! load memristor forming a voltage divider,
//! `out_j = Σ_i sign_ij g_ij v_i / (g_load_j + Σ_i g_ij)`, which can never
//! exceed the largest input magnitude.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::device::{DeviceSpec, VariabilityModel};
use crate::error::{Error, Result};
use crate::rng;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReadoutMode {
    #[default]
    Ideal,
    Loaded,
}

/// Conductances and signs holding one layer's weights.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossbarArray {
    rows: usize,
    cols: usize,
    /// Row-major, `rows × cols`.
    g_mag: Vec<f64>,
    sign: Vec<i8>,
    g_load: Vec<f64>,
    w_max: f64,
    quantized: bool,
    spec: DeviceSpec,
}

/// Sneak-path current of one leakage draw.
#[derive(Debug, Clone, PartialEq)]
pub struct LeakageReport {
    pub per_column: Vec<f64>,
    pub total: f64,
}

/// Maps a signed weight matrix (`rows × cols`) onto a crossbar.
///
/// `|w| / w_max` is interpolated linearly between `G_off` and `G_on`; zero
/// weights get sign `+1`. Magnitudes above `w_max` saturate at `G_on`. When
/// `w_max` is `None` it is taken as `max |w|`.
pub fn map_weights(
    w: &Tensor,
    spec: &DeviceSpec,
    quantized: bool,
    w_max: Option<f64>,
) -> Result<CrossbarArray> {
    let (rows, cols) = match *w.shape() {
        [r, c] => (r, c),
        _ => {
            return Err(Error::Shape(format!(
                "weight matrix must be 2-D, got shape {:?}",
                w.shape()
            )))
        }
    };
    spec.validate()?;
    let w_max = match w_max {
        Some(m) if m > 0.0 && m.is_finite() => m,
        Some(m) => return Err(Error::Shape(format!("w_max must be positive, got {m}"))),
        None => {
            let m = w.max_abs();
            if m == 0.0 {
                return Err(Error::DegenerateWeightScale);
            }
            m
        }
    };
    let mut xbar = CrossbarArray {
        rows,
        cols,
        g_mag: vec![spec.g_off(); rows * cols],
        sign: vec![1; rows * cols],
        g_load: vec![spec.g_on(); cols],
        w_max,
        quantized,
        spec: *spec,
    };
    xbar.program(w.data(), |g| g);
    Ok(xbar)
}

impl CrossbarArray {
    /// Rebuilds an array from stored matrices, validating every invariant.
    #[allow(clippy::too_many_arguments)]
    pub fn from_raw(
        rows: usize,
        cols: usize,
        g_mag: Vec<f64>,
        sign: Vec<i8>,
        g_load: Vec<f64>,
        w_max: f64,
        quantized: bool,
        spec: DeviceSpec,
    ) -> Result<Self> {
        spec.validate()?;
        if g_mag.len() != rows * cols || sign.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                expected: rows * cols,
                got: g_mag.len().min(sign.len()),
            });
        }
        if g_load.len() != cols {
            return Err(Error::DimensionMismatch {
                expected: cols,
                got: g_load.len(),
            });
        }
        if g_mag
            .iter()
            .any(|&g| !(g >= spec.g_off() && g <= spec.g_on()))
        {
            return Err(Error::Shape("conductance outside device range".into()));
        }
        if sign.iter().any(|&s| s != 1 && s != -1) {
            return Err(Error::Shape("sign entries must be +1 or -1".into()));
        }
        if g_load.iter().any(|&g| !(g > 0.0 && g.is_finite())) {
            return Err(Error::Shape("load conductance must be positive".into()));
        }
        if !(w_max > 0.0 && w_max.is_finite()) {
            return Err(Error::Shape("w_max must be positive".into()));
        }
        Ok(Self {
            rows,
            cols,
            g_mag,
            sign,
            g_load,
            w_max,
            quantized,
            spec,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn cell_count(&self) -> usize {
        self.rows * self.cols
    }

    pub fn g_mag(&self) -> &[f64] {
        &self.g_mag
    }

    pub fn sign(&self) -> &[i8] {
        &self.sign
    }

    pub fn g_load(&self) -> &[f64] {
        &self.g_load
    }

    pub fn w_max(&self) -> f64 {
        self.w_max
    }

    pub fn quantized(&self) -> bool {
        self.quantized
    }

    pub fn spec(&self) -> &DeviceSpec {
        &self.spec
    }

    pub fn with_load(mut self, g_load: f64) -> Result<Self> {
        if !(g_load > 0.0 && g_load.is_finite()) {
            return Err(Error::Shape(format!(
                "load conductance must be positive, got {g_load}"
            )));
        }
        self.g_load.fill(g_load);
        Ok(self)
    }

    fn target_conductance(&self, w: f64) -> f64 {
        let frac = (w.abs() / self.w_max).min(1.0);
        let g = self.spec.g_off() + frac * self.spec.g_range();
        if self.quantized {
            self.spec.quantize(g)
        } else {
            g
        }
    }

    fn program(&mut self, w: &[f64], mut perturb: impl FnMut(f64) -> f64) {
        debug_assert_eq!(w.len(), self.g_mag.len());
        for (k, &wk) in w.iter().enumerate() {
            self.sign[k] = if wk < 0.0 { -1 } else { 1 };
            self.g_mag[k] = perturb(self.target_conductance(wk));
        }
    }

    /// Writes new weights with the stored scale, drawing one variability
    /// sample per cell (row-major order).
    pub fn write<R: Rng + ?Sized>(
        &mut self,
        w: &[f64],
        variability: &VariabilityModel,
        rng: &mut R,
    ) -> Result<()> {
        if w.len() != self.cell_count() {
            return Err(Error::DimensionMismatch {
                expected: self.cell_count(),
                got: w.len(),
            });
        }
        let spec = self.spec;
        self.program(w, |g| variability.sample(&spec, g, rng));
        Ok(())
    }

    /// Copy with every conductance perturbed by `model`.
    pub fn with_variability<R: Rng + ?Sized>(&self, model: &VariabilityModel, rng: &mut R) -> Self {
        let mut out = self.clone();
        for g in &mut out.g_mag {
            *g = model.sample(&self.spec, *g, rng);
        }
        out
    }

    /// Signed weight stored at `(row, col)`, inverting the mapping.
    pub fn weight(&self, row: usize, col: usize) -> f64 {
        let k = row * self.cols + col;
        self.weight_at(k)
    }

    fn weight_at(&self, k: usize) -> f64 {
        let mag = (self.g_mag[k] - self.spec.g_off()) / self.spec.g_range() * self.w_max;
        f64::from(self.sign[k]) * mag
    }

    /// Inverse-mapped signed weights, row-major.
    pub fn effective_weights(&self) -> Vec<f64> {
        (0..self.cell_count()).map(|k| self.weight_at(k)).collect()
    }

    /// Per-column `g_load + Σ_i g_ij`.
    fn column_conductance(&self) -> Vec<f64> {
        let mut total = self.g_load.clone();
        for row in self.g_mag.chunks_exact(self.cols) {
            for (t, g) in total.iter_mut().zip(row) {
                *t += g;
            }
        }
        total
    }

    /// Matrix `T` (row-major, `rows × cols`) with `read(v)_j = Σ_i T_ij v_i`.
    pub fn transfer_matrix(&self, mode: ReadoutMode) -> Vec<f64> {
        match mode {
            ReadoutMode::Ideal => self.effective_weights(),
            ReadoutMode::Loaded => {
                let denom = self.column_conductance();
                let mut t = Vec::with_capacity(self.cell_count());
                for i in 0..self.rows {
                    for (j, d) in denom.iter().enumerate() {
                        let k = i * self.cols + j;
                        t.push(f64::from(self.sign[k]) * self.g_mag[k] / d);
                    }
                }
                t
            }
        }
    }

    /// Output contribution per ampere-volt of sneak current: `g_ij` scaled
    /// the same way the readout scales a column current.
    pub fn leakage_matrix(&self, mode: ReadoutMode) -> Vec<f64> {
        let scale: Vec<f64> = match mode {
            ReadoutMode::Ideal => vec![self.w_max / self.spec.g_range(); self.cols],
            ReadoutMode::Loaded => self.column_conductance().iter().map(|d| 1.0 / d).collect(),
        };
        self.g_mag
            .chunks_exact(self.cols)
            .flat_map(|row| row.iter().zip(&scale).map(|(g, s)| g * s))
            .collect()
    }

    /// Column outputs for row voltages `v_in`. Columns are independent, so
    /// the order they are processed in does not change the result.
    pub fn read(&self, v_in: &[f64], mode: ReadoutMode) -> Result<Vec<f64>> {
        if v_in.len() != self.rows {
            return Err(Error::DimensionMismatch {
                expected: self.rows,
                got: v_in.len(),
            });
        }
        let mut out = vec![0.0; self.cols];
        match mode {
            ReadoutMode::Ideal => {
                for (i, &v) in v_in.iter().enumerate() {
                    for (j, o) in out.iter_mut().enumerate() {
                        *o += self.weight_at(i * self.cols + j) * v;
                    }
                }
            }
            ReadoutMode::Loaded => {
                let denom = self.column_conductance();
                for (i, &v) in v_in.iter().enumerate() {
                    for (j, o) in out.iter_mut().enumerate() {
                        let k = i * self.cols + j;
                        *o += f64::from(self.sign[k]) * self.g_mag[k] * v;
                    }
                }
                for (o, d) in out.iter_mut().zip(&denom) {
                    *o /= d;
                }
            }
        }
        Ok(out)
    }

    /// Sneak current for fixed idle-row noise voltages `eps` (one per row):
    /// column `j` leaks `Σ_i g_ij ε_i`.
    pub fn leakage_for(&self, eps: &[f64]) -> Result<LeakageReport> {
        if eps.len() != self.rows {
            return Err(Error::DimensionMismatch {
                expected: self.rows,
                got: eps.len(),
            });
        }
        let mut per_column = vec![0.0; self.cols];
        for (row, e) in self.g_mag.chunks_exact(self.cols).zip(eps) {
            for (c, g) in per_column.iter_mut().zip(row) {
                *c += g * e;
            }
        }
        let total = per_column.iter().sum();
        Ok(LeakageReport { per_column, total })
    }

    /// One draw of sneak-path current with every idle row carrying a noise
    /// voltage `ε_i ~ U(0, noise_level · v_write)`.
    pub fn leakage_current<R: Rng + ?Sized>(&self, noise_level: f64, rng: &mut R) -> LeakageReport {
        let amplitude = noise_level.max(0.0) * self.spec.v_write;
        let eps: Vec<f64> = (0..self.rows).map(|_| amplitude * rng.random::<f64>()).collect();
        self.leakage_for(&eps).expect("one noise voltage per row")
    }

    /// Monte-Carlo mean of total leakage over `trials` independent draws.
    pub fn mean_leakage(&self, noise_level: f64, trials: usize, seed: u64) -> f64 {
        if trials == 0 {
            return 0.0;
        }
        let mut r = rng::substream(seed, rng::LEAKAGE, 0);
        let sum: f64 = (0..trials)
            .map(|_| self.leakage_current(noise_level, &mut r).total)
            .sum();
        sum / trials as f64
    }
}
