//! Network topologies and their crossbar realization.
//!
//! A [`Network`] pairs a [`NetworkTopology`] with one [`CrossbarArray`] per
//! crossbar layer. Each crossbar layer also keeps a full-precision master
//! copy of its weights: gradients are accumulated there and every update
//! event writes the master weights back through the device model
//! (quantization, variability), so sub-level updates are not lost.
//!
//! The forward pass runs in the requested readout mode and records a tape;
//! the backward pass is exact backprop through the ideal signed weights of
//! the crossbars, evaluated at the recorded activations.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::crossbar::{map_weights, CrossbarArray, ReadoutMode};
use crate::device::{DeviceSpec, VariabilityModel};
use crate::error::{Error, Result};
use crate::layers::{self, LayerDesc, LayerKind, PatchMap};
use crate::rng::StreamRng;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Generator,
    Discriminator,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkTopology {
    pub role: Role,
    pub input_shape: Vec<usize>,
    pub layers: Vec<LayerDesc>,
}

impl NetworkTopology {
    pub fn new(role: Role, input_shape: Vec<usize>, layers: Vec<LayerDesc>) -> Result<Self> {
        let t = Self {
            role,
            input_shape,
            layers,
        };
        t.validate()?;
        Ok(t)
    }

    /// Every layer is self-consistent and adjacent shapes chain.
    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::EmptyTopology);
        }
        let mut shape = self.input_shape.clone();
        for (i, l) in self.layers.iter().enumerate() {
            l.validate()?;
            let chained = if l.kind == LayerKind::Dense {
                l.in_shape.iter().product::<usize>() == shape.iter().product::<usize>()
            } else {
                l.in_shape == shape
            };
            if !chained {
                return Err(Error::Topology(format!(
                    "layer {i} ({:?}) expects {:?} but receives {:?}",
                    l.kind, l.in_shape, shape
                )));
            }
            shape = l.out_shape.clone();
        }
        Ok(())
    }

    pub fn output_shape(&self) -> &[usize] {
        &self.layers.last().expect("validated topology").out_shape
    }

    /// Total crossbar cells, i.e. memristive weights.
    pub fn weight_count(&self) -> usize {
        self.layers.iter().map(LayerDesc::weight_count).sum()
    }

    pub fn crossbar_layers(&self) -> usize {
        self.layers.iter().filter(|l| l.kind.uses_crossbar()).count()
    }

    pub fn max_columns(&self) -> usize {
        self.layers
            .iter()
            .filter_map(LayerDesc::crossbar_shape)
            .map(|(_, c)| c)
            .max()
            .unwrap_or(0)
    }
}

/// Chains layer shapes while a topology is being described.
#[derive(Debug, Clone)]
pub struct TopologyBuilder {
    role: Role,
    input_shape: Vec<usize>,
    shape: Vec<usize>,
    layers: Vec<LayerDesc>,
    bias: bool,
}

impl TopologyBuilder {
    pub fn new(role: Role, input_shape: &[usize]) -> Self {
        Self {
            role,
            input_shape: input_shape.to_vec(),
            shape: input_shape.to_vec(),
            layers: Vec::new(),
            bias: false,
        }
    }

    /// Gives every crossbar layer added afterwards a bias row.
    pub fn bias(mut self, on: bool) -> Self {
        self.bias = on;
        self
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn push(mut self, mut layer: LayerDesc) -> Self {
        if self.bias {
            layer = layer.with_bias();
        }
        self.shape = layer.out_shape.clone();
        self.layers.push(layer);
        self
    }

    pub fn conv(self, kernel: usize, filters: usize, stride: usize, padding: usize) -> Result<Self> {
        let l = LayerDesc::conv(&self.shape, (kernel, kernel), filters, stride, padding)?;
        Ok(self.push(l))
    }

    pub fn deconv(
        self,
        kernel: usize,
        filters: usize,
        stride: usize,
        padding: usize,
        output_padding: usize,
    ) -> Result<Self> {
        let l = LayerDesc::deconv(&self.shape, (kernel, kernel), filters, stride, padding, output_padding)?;
        Ok(self.push(l))
    }

    pub fn dense(self, out_shape: &[usize]) -> Result<Self> {
        let l = LayerDesc::dense(&self.shape, out_shape)?;
        Ok(self.push(l))
    }

    pub fn mean_pool(self, window: usize) -> Result<Self> {
        let l = LayerDesc::mean_pool(&self.shape, (window, window))?;
        Ok(self.push(l))
    }

    pub fn stage(self, kind: LayerKind) -> Result<Self> {
        let l = LayerDesc::elementwise(kind, &self.shape)?;
        Ok(self.push(l))
    }

    pub fn dropout(self, rate: f64) -> Result<Self> {
        let l = LayerDesc::dropout(&self.shape, rate)?;
        Ok(self.push(l))
    }

    pub fn build(self) -> Result<NetworkTopology> {
        NetworkTopology::new(self.role, self.input_shape, self.layers)
    }
}

/// Generator and discriminator of one GAN.
#[derive(Debug, Clone, PartialEq)]
pub struct TopologyPair {
    pub generator: NetworkTopology,
    pub discriminator: NetworkTopology,
}

impl TopologyPair {
    pub fn new(generator: NetworkTopology, discriminator: NetworkTopology) -> Result<Self> {
        if generator.role != Role::Generator || discriminator.role != Role::Discriminator {
            return Err(Error::Topology("generator/discriminator roles swapped".into()));
        }
        if generator.input_shape.len() != 1 {
            return Err(Error::Topology("generator input must be a latent vector".into()));
        }
        if generator.output_shape() != discriminator.input_shape.as_slice() {
            return Err(Error::Topology(format!(
                "generator emits {:?} but discriminator expects {:?}",
                generator.output_shape(),
                discriminator.input_shape
            )));
        }
        if discriminator.output_shape().iter().product::<usize>() != 1 {
            return Err(Error::Topology("discriminator must produce a single output".into()));
        }
        Ok(Self {
            generator,
            discriminator,
        })
    }

    /// Desk-scale network: two 3×3 layers with two filters and a dense
    /// layer on each side, for 28×28 images.
    ///
    /// Generator: dense → 7×7×2, ReLU, 3×3 deconv stride 2 → 14×14×2, ReLU,
    /// 3×3 deconv stride 2 → 28×28×1, tanh. Transposed convolutions use
    /// padding 1 and output padding 1 so each exactly doubles the size.
    /// Discriminator: 3×3 conv stride 1 padding 1 → ReLU → 2×2 mean pool,
    /// twice (the second conv followed by batch norm), then dense → 1.
    /// Every crossbar carries a bias row.
    pub fn reference_small(latent_dim: usize) -> Result<Self> {
        Self::mirrored(latent_dim, [28, 28, 1], 3, [2, 2])
    }

    /// Full-size network: 5×5 layers with 128 and 64 filters.
    ///
    /// Generator: dense → 14×14×64, ReLU, 5×5 deconv stride 1 padding 2 →
    /// 14×14×128, ReLU, 5×5 deconv stride 2 padding 2 output padding 1 →
    /// 28×28×1, tanh. Discriminator: 5×5 conv (128 filters, padding 2) →
    /// ReLU → 2×2 pool → 5×5 conv (64 filters) → batch norm → ReLU → 2×2
    /// pool → dense → 1.
    /// With a 100-dimensional latent this holds 1 686 402 weights.
    pub fn reference_full(latent_dim: usize) -> Result<Self> {
        let generator = TopologyBuilder::new(Role::Generator, &[latent_dim])
            .bias(true)
            .dense(&[14, 14, 64])?
            .stage(LayerKind::Relu)?
            .deconv(5, 128, 1, 2, 0)?
            .stage(LayerKind::Relu)?
            .deconv(5, 1, 2, 2, 1)?
            .stage(LayerKind::Tanh)?
            .build()?;
        let discriminator = TopologyBuilder::new(Role::Discriminator, &[28, 28, 1])
            .bias(true)
            .conv(5, 128, 1, 2)?
            .stage(LayerKind::Relu)?
            .mean_pool(2)?
            .conv(5, 64, 1, 2)?
            .stage(LayerKind::BatchNorm)?
            .stage(LayerKind::Relu)?
            .mean_pool(2)?
            .dense(&[1])?
            .build()?;
        Self::new(generator, discriminator)
    }

    /// Mirrored generator/discriminator with two spatial layers each; the
    /// image side must be divisible by 4.
    pub fn mirrored(
        latent_dim: usize,
        image_shape: [usize; 3],
        kernel: usize,
        filters: [usize; 2],
    ) -> Result<Self> {
        let [h, w, c] = image_shape;
        if h % 4 != 0 || w % 4 != 0 {
            return Err(Error::Topology(format!("image {h}x{w} not divisible by 4")));
        }
        let pad = kernel / 2;
        let generator = TopologyBuilder::new(Role::Generator, &[latent_dim])
            .bias(true)
            .dense(&[h / 4, w / 4, filters[1]])?
            .stage(LayerKind::Relu)?
            .deconv(kernel, filters[0], 2, pad, 1)?
            .stage(LayerKind::Relu)?
            .deconv(kernel, c, 2, pad, 1)?
            .stage(LayerKind::Tanh)?
            .build()?;
        let discriminator = TopologyBuilder::new(Role::Discriminator, &image_shape)
            .bias(true)
            .conv(kernel, filters[0], 1, pad)?
            .stage(LayerKind::Relu)?
            .mean_pool(2)?
            .conv(kernel, filters[1], 1, pad)?
            .stage(LayerKind::BatchNorm)?
            .stage(LayerKind::Relu)?
            .mean_pool(2)?
            .dense(&[1])?
            .build()?;
        Self::new(generator, discriminator)
    }

    pub fn latent_dim(&self) -> usize {
        self.generator.input_shape[0]
    }

    pub fn image_shape(&self) -> &[usize] {
        &self.discriminator.input_shape
    }

    pub fn weight_count(&self) -> usize {
        self.generator.weight_count() + self.discriminator.weight_count()
    }

    pub fn crossbar_layers(&self) -> usize {
        self.generator.crossbar_layers() + self.discriminator.crossbar_layers()
    }

    pub fn max_columns(&self) -> usize {
        self.generator.max_columns().max(self.discriminator.max_columns())
    }
}

/// Options for one forward evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForwardOptions {
    pub mode: ReadoutMode,
    pub v_dd: f64,
    pub v_scale: f64,
    /// Leakage noise level on idle rows (fraction of `v_write`); 0 disables.
    pub leakage: f64,
    /// Enables dropout masks.
    pub training: bool,
    pub bn_eps: f64,
}

impl Default for ForwardOptions {
    fn default() -> Self {
        Self {
            mode: ReadoutMode::Ideal,
            v_dd: 1.8,
            v_scale: 0.9,
            leakage: 0.0,
            training: false,
            bn_eps: 1e-5,
        }
    }
}

/// One crossbar layer at run time.
#[derive(Debug, Clone)]
pub struct CrossbarLayer {
    xbar: CrossbarArray,
    master: Vec<f64>,
    map: PatchMap,
    ideal: Vec<f64>,
    loaded: Vec<f64>,
    leak_ideal: Vec<f64>,
    leak_loaded: Vec<f64>,
}

impl CrossbarLayer {
    fn new(desc: &LayerDesc, xbar: CrossbarArray, master: Vec<f64>) -> Result<Self> {
        let map = PatchMap::for_layer(desc)?;
        let (rows, cols) = desc.crossbar_shape().expect("crossbar layer");
        if xbar.rows() != rows || xbar.cols() != cols || master.len() != rows * cols {
            return Err(Error::Shape(format!(
                "crossbar {}x{} does not fit layer {rows}x{cols}",
                xbar.rows(),
                xbar.cols()
            )));
        }
        let mut l = Self {
            xbar,
            master,
            map,
            ideal: Vec::new(),
            loaded: Vec::new(),
            leak_ideal: Vec::new(),
            leak_loaded: Vec::new(),
        };
        l.refresh();
        Ok(l)
    }

    fn refresh(&mut self) {
        self.ideal = self.xbar.transfer_matrix(ReadoutMode::Ideal);
        self.loaded = self.xbar.transfer_matrix(ReadoutMode::Loaded);
        self.leak_ideal = self.xbar.leakage_matrix(ReadoutMode::Ideal);
        self.leak_loaded = self.xbar.leakage_matrix(ReadoutMode::Loaded);
    }

    pub fn crossbar(&self) -> &CrossbarArray {
        &self.xbar
    }

    pub fn master(&self) -> &[f64] {
        &self.master
    }

    /// Inverse-mapped weights currently stored in the crossbar.
    pub fn effective_weights(&self) -> &[f64] {
        &self.ideal
    }

    fn transfer(&self, mode: ReadoutMode) -> (&[f64], &[f64]) {
        match mode {
            ReadoutMode::Ideal => (&self.ideal, &self.leak_ideal),
            ReadoutMode::Loaded => (&self.loaded, &self.leak_loaded),
        }
    }

    fn forward(&self, x: &[f64], opts: &ForwardOptions, rng: Option<&mut StreamRng>) -> Vec<f64> {
        let cols = self.xbar.cols();
        let (t, leak) = self.transfer(opts.mode);
        match rng {
            Some(rng) if opts.leakage > 0.0 => {
                let amplitude = opts.leakage * self.xbar.spec().v_write;
                let mut out = vec![0.0; self.map.positions() * cols];
                let mut patch = vec![0.0; self.map.rows()];
                let mut eps = vec![0.0; self.map.rows()];
                for (p, o) in out.chunks_exact_mut(cols).enumerate() {
                    self.map.gather(x, p, &mut patch);
                    layers::accumulate_row_product(&patch, t, o);
                    for (e, &v) in eps.iter_mut().zip(&patch) {
                        *e = if v == 0.0 { amplitude * rng.random::<f64>() } else { 0.0 };
                    }
                    layers::accumulate_row_product(&eps, leak, o);
                }
                out
            }
            _ => self.map.apply(x, t, cols),
        }
    }
}

#[derive(Debug, Clone)]
enum Aux {
    None,
    Mask(Vec<f64>),
    Norm { var: f64 },
}

/// Activations recorded by a forward pass.
#[derive(Debug, Clone)]
pub struct Tape {
    /// `acts[i]` is the input of layer `i`; the last entry is the output.
    acts: Vec<Tensor>,
    aux: Vec<Aux>,
    opts: ForwardOptions,
}

impl Tape {
    pub fn output(&self) -> &Tensor {
        self.acts.last().expect("tape has output")
    }

    pub fn activations(&self) -> &[Tensor] {
        &self.acts
    }
}

/// Gradients of every crossbar layer, aligned with the topology layers
/// (non-crossbar layers hold empty vectors).
pub type LayerGrads = Vec<Vec<f64>>;

#[derive(Debug, Clone)]
pub struct Network {
    topology: NetworkTopology,
    layers: Vec<Option<CrossbarLayer>>,
}

impl Network {
    /// Random initial weights `N(0, 1/fan_in)`; each layer's scale `w_max`
    /// is `w_max_sigmas` standard deviations and weights are clipped to it.
    /// Bias rows start at zero.
    pub fn init(
        topology: NetworkTopology,
        device: &DeviceSpec,
        quantized: bool,
        w_max_sigmas: f64,
        rng: &mut StreamRng,
    ) -> Result<Self> {
        topology.validate()?;
        let mut layers = Vec::with_capacity(topology.layers.len());
        for desc in &topology.layers {
            let Some((rows, cols)) = desc.crossbar_shape() else {
                layers.push(None);
                continue;
            };
            let std = (1.0 / desc.fan_in() as f64).sqrt();
            let w_max = w_max_sigmas * std;
            let normal = Normal::new(0.0, std).expect("positive std");
            let mut master: Vec<f64> = (0..rows * cols)
                .map(|_| normal.sample(rng).clamp(-w_max, w_max))
                .collect();
            if desc.bias {
                master[(rows - 1) * cols..].fill(0.0);
            }
            let w = Tensor::from_parts(vec![rows, cols], master.clone());
            let xbar = map_weights(&w, device, quantized, Some(w_max))?;
            layers.push(Some(CrossbarLayer::new(desc, xbar, master)?));
        }
        Ok(Self { topology, layers })
    }

    /// Rebuilds a network from stored crossbars and master weights, in
    /// crossbar-layer order.
    pub fn from_parts(
        topology: NetworkTopology,
        parts: Vec<(CrossbarArray, Vec<f64>)>,
    ) -> Result<Self> {
        topology.validate()?;
        let mut parts = parts.into_iter();
        let mut layers = Vec::with_capacity(topology.layers.len());
        for desc in &topology.layers {
            if desc.kind.uses_crossbar() {
                let (xbar, master) = parts
                    .next()
                    .ok_or_else(|| Error::Topology("too few crossbars for topology".into()))?;
                layers.push(Some(CrossbarLayer::new(desc, xbar, master)?));
            } else {
                layers.push(None);
            }
        }
        if parts.next().is_some() {
            return Err(Error::Topology("more crossbars than topology layers".into()));
        }
        Ok(Self { topology, layers })
    }

    pub fn topology(&self) -> &NetworkTopology {
        &self.topology
    }

    pub fn crossbar_layers(&self) -> impl Iterator<Item = &CrossbarLayer> {
        self.layers.iter().flatten()
    }

    /// Crossbar of topology layer `index`, if it has one.
    pub fn layer(&self, index: usize) -> Option<&CrossbarLayer> {
        self.layers.get(index).and_then(Option::as_ref)
    }

    pub fn weight_count(&self) -> usize {
        self.topology.weight_count()
    }

    /// Sets the master weights of topology layer `index` and writes them.
    pub fn set_weights(
        &mut self,
        index: usize,
        w: &[f64],
        variability: &VariabilityModel,
        rng: &mut StreamRng,
    ) -> Result<()> {
        let layer = self
            .layers
            .get_mut(index)
            .and_then(Option::as_mut)
            .ok_or_else(|| Error::Topology(format!("layer {index} has no crossbar")))?;
        if w.len() != layer.master.len() {
            return Err(Error::DimensionMismatch {
                expected: layer.master.len(),
                got: w.len(),
            });
        }
        let w_max = layer.xbar.w_max();
        layer.master = w.iter().map(|v| v.clamp(-w_max, w_max)).collect();
        layer.xbar.write(&layer.master, variability, rng)?;
        layer.refresh();
        Ok(())
    }

    /// One update event: `master -= lr · grad`, clip to `±w_max`, and write
    /// every crossbar layer in order.
    pub fn apply_update(
        &mut self,
        grads: &LayerGrads,
        learning_rate: f64,
        variability: &VariabilityModel,
        rng: &mut StreamRng,
    ) -> Result<()> {
        for (layer, g) in self.layers.iter_mut().zip(grads) {
            let Some(layer) = layer else { continue };
            let w_max = layer.xbar.w_max();
            for (m, gi) in layer.master.iter_mut().zip(g) {
                *m = (*m - learning_rate * gi).clamp(-w_max, w_max);
            }
            layer.xbar.write(&layer.master, variability, rng)?;
            layer.refresh();
        }
        Ok(())
    }

    pub fn forward(
        &self,
        input: &Tensor,
        opts: &ForwardOptions,
        mut rng: Option<&mut StreamRng>,
    ) -> Result<Tape> {
        let expected: usize = self.topology.input_shape.iter().product();
        if input.len() != expected {
            return Err(Error::Shape(format!(
                "input of {} values, topology expects {:?}",
                input.len(),
                self.topology.input_shape
            )));
        }
        let mut acts = Vec::with_capacity(self.topology.layers.len() + 1);
        let mut aux = Vec::with_capacity(self.topology.layers.len());
        acts.push(Tensor::from_parts(
            self.topology.input_shape.clone(),
            input.data().to_vec(),
        ));
        for (desc, layer) in self.topology.layers.iter().zip(&self.layers) {
            let x = acts.last().expect("input pushed");
            let (y, a) = match desc.kind {
                LayerKind::Conv | LayerKind::Deconv | LayerKind::Dense => {
                    let layer = layer.as_ref().expect("crossbar layer");
                    let out = layer.forward(x.data(), opts, rng.as_deref_mut());
                    (Tensor::from_parts(desc.out_shape.clone(), out), Aux::None)
                }
                LayerKind::MeanPool => (layers::mean_pool(x, desc.kernel)?, Aux::None),
                LayerKind::Relu => (layers::relu_clip(x, opts.v_dd), Aux::None),
                LayerKind::Tanh => (layers::tanh_act(x, opts.v_scale), Aux::None),
                LayerKind::BatchNorm => {
                    let (mean, var) = layers::moments(x.data());
                    (layers::batch_norm(x, mean, var, opts.bn_eps), Aux::Norm { var })
                }
                LayerKind::Dropout => match rng.as_deref_mut() {
                    Some(r) if opts.training && desc.rate > 0.0 => {
                        let keep = 1.0 / (1.0 - desc.rate);
                        let mask: Vec<f64> = layers::dropout_mask(x.shape(), desc.rate, r)
                            .into_data()
                            .into_iter()
                            .map(|m| m * keep)
                            .collect();
                        let y = x.data().iter().zip(&mask).map(|(a, b)| a * b).collect();
                        (Tensor::from_parts(x.shape().to_vec(), y), Aux::Mask(mask))
                    }
                    _ => (x.clone(), Aux::None),
                },
            };
            acts.push(y);
            aux.push(a);
        }
        Ok(Tape {
            acts,
            aux,
            opts: *opts,
        })
    }

    /// Backprop of `grad_out` (gradient w.r.t. the network output) through
    /// the tape. Returns the input gradient and per-layer weight gradients.
    pub fn backward(&self, tape: &Tape, grad_out: &[f64]) -> Result<(Vec<f64>, LayerGrads)> {
        if grad_out.len() != tape.output().len() {
            return Err(Error::DimensionMismatch {
                expected: tape.output().len(),
                got: grad_out.len(),
            });
        }
        let n = self.topology.layers.len();
        let mut grads: LayerGrads = vec![Vec::new(); n];
        let mut g = grad_out.to_vec();
        for i in (0..n).rev() {
            let desc = &self.topology.layers[i];
            let x = &tape.acts[i];
            let y = &tape.acts[i + 1];
            g = match desc.kind {
                LayerKind::Conv | LayerKind::Deconv | LayerKind::Dense => {
                    let layer = self.layers[i].as_ref().expect("crossbar layer");
                    let (gx, gw) = layer
                        .map
                        .backward(x.data(), &layer.ideal, layer.xbar.cols(), &g);
                    grads[i] = gw;
                    gx
                }
                LayerKind::MeanPool => layers::mean_pool_backward(&g, &desc.in_shape, desc.kernel),
                LayerKind::Relu => layers::relu_clip_backward(x.data(), &g, tape.opts.v_dd),
                LayerKind::Tanh => layers::tanh_backward(y.data(), &g, tape.opts.v_scale),
                LayerKind::BatchNorm => match tape.aux[i] {
                    Aux::Norm { var } => {
                        layers::batch_norm_backward(y.data(), &g, var, tape.opts.bn_eps)
                    }
                    _ => unreachable!("normalization records its variance"),
                },
                LayerKind::Dropout => match &tape.aux[i] {
                    Aux::Mask(m) => g.iter().zip(m).map(|(a, b)| a * b).collect(),
                    _ => g,
                },
            };
        }
        Ok((g, grads))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    #[test]
    fn reference_small_shapes() {
        let p = TopologyPair::reference_small(16).unwrap();
        assert_eq!(p.generator.output_shape(), &[28, 28, 1]);
        assert_eq!(p.discriminator.output_shape(), &[1]);
        assert_eq!(p.generator.weight_count(), 17 * 98 + 19 * 2 + 19);
        assert_eq!(p.discriminator.weight_count(), 20 + 38 + 99);
        assert_eq!(p.crossbar_layers(), 6);
    }

    #[test]
    fn reference_full_weight_count() {
        let p = TopologyPair::reference_full(100).unwrap();
        assert_eq!(p.weight_count(), 1_686_402);
        assert_eq!(p.crossbar_layers(), 6);
        let rel = (p.weight_count() as f64 - 1.7e6).abs() / 1.7e6;
        assert!(rel < 0.10);
    }

    #[test]
    fn chain_mismatch_rejected() {
        let a = LayerDesc::conv(&[8, 8, 1], (3, 3), 2, 1, 1).unwrap();
        let b = LayerDesc::conv(&[8, 8, 3], (3, 3), 2, 1, 1).unwrap();
        assert!(NetworkTopology::new(Role::Discriminator, vec![8, 8, 1], vec![a, b]).is_err());
        assert!(matches!(
            NetworkTopology::new(Role::Discriminator, vec![8, 8, 1], vec![]),
            Err(Error::EmptyTopology)
        ));
    }

    #[test]
    fn update_clips_to_scale() {
        let p = TopologyPair::reference_small(4).unwrap();
        let mut r = rng::substream(0, rng::WEIGHTS, 0);
        let mut net = Network::init(p.discriminator, &DeviceSpec::wo2(), false, 3.0, &mut r).unwrap();
        let grads: LayerGrads = net
            .topology()
            .layers
            .iter()
            .map(|l| vec![-1e6; l.weight_count()])
            .collect();
        net.apply_update(&grads, 1.0, &VariabilityModel::ideal(), &mut r).unwrap();
        for l in net.crossbar_layers() {
            let w_max = l.crossbar().w_max();
            assert!(l.master().iter().all(|&m| m == w_max));
        }
    }
}
