//! Binary checkpoints of a training state.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic "MEMGANCK" | version u32 | section count u32
//! per section: tag [u8; 4] | payload length u64 | payload | CRC-32 of payload u32
//! ```
//!
//! Sections, in order: `DEVC` device spec, `CONF` training config, `TOPO`
//! both topologies, `GNET` and `DNET` crossbars with master weights, `CNTR`
//! counters and loss history. Floats are stored as raw IEEE bits, so a
//! round trip is bit-exact.

use std::fs;
use std::path::Path;

use crate::crossbar::CrossbarArray;
use crate::device::DeviceSpec;
use crate::error::{Error, Result};
use crate::layers::{LayerDesc, LayerKind};
use crate::network::{Network, NetworkTopology, Role, TopologyPair};
use crate::train::{AnalogEffects, EpochLosses, TrainConfig, TrainState};

pub const MAGIC: &[u8; 8] = b"MEMGANCK";
pub const VERSION: u32 = 1;

const SECTIONS: [&[u8; 4]; 6] = [b"DEVC", b"CONF", b"TOPO", b"GNET", b"DNET", b"CNTR"];

#[derive(Default)]
struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u32(&mut self, v: u32) {
        self.0.extend(v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend(v.to_le_bytes());
    }
    fn usize(&mut self, v: usize) {
        self.u64(v as u64);
    }
    fn f64(&mut self, v: f64) {
        self.u64(v.to_bits());
    }
    fn bool(&mut self, v: bool) {
        self.u8(u8::from(v));
    }
    fn shape(&mut self, s: &[usize]) {
        self.u32(s.len() as u32);
        s.iter().for_each(|&d| self.usize(d));
    }
    fn f64s(&mut self, v: &[f64]) {
        self.usize(v.len());
        v.iter().for_each(|&x| self.f64(x));
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
    section: &'static str,
}

impl<'a> Reader<'a> {
    fn new(buf: &'a [u8], section: &'static str) -> Self {
        Self { buf, pos: 0, section }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| {
            Error::BadCheckpoint(format!("section {} ends early", self.section))
        })?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
    fn usize(&mut self) -> Result<usize> {
        usize::try_from(self.u64()?).map_err(|_| self.bad("length overflows usize"))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_bits(self.u64()?))
    }
    fn bool(&mut self) -> Result<bool> {
        match self.u8()? {
            0 => Ok(false),
            1 => Ok(true),
            b => Err(self.bad(&format!("invalid flag byte {b}"))),
        }
    }
    fn len(&mut self, elem: usize) -> Result<usize> {
        let n = self.usize()?;
        if n.saturating_mul(elem) > self.buf.len() - self.pos {
            return Err(self.bad("array longer than section"));
        }
        Ok(n)
    }
    fn shape(&mut self) -> Result<Vec<usize>> {
        let n = self.u32()? as usize;
        if n > 8 {
            return Err(self.bad("shape rank too large"));
        }
        (0..n).map(|_| self.usize()).collect()
    }
    fn f64s(&mut self) -> Result<Vec<f64>> {
        let n = self.len(8)?;
        (0..n).map(|_| self.f64()).collect()
    }
    fn finish(&self) -> Result<()> {
        if self.pos != self.buf.len() {
            return Err(self.bad("trailing bytes"));
        }
        Ok(())
    }
    fn bad(&self, what: &str) -> Error {
        Error::BadCheckpoint(format!("section {}: {what}", self.section))
    }
}

fn put_device(w: &mut Writer, d: &DeviceSpec) {
    for v in [d.r_on, d.r_off, d.v_threshold, d.v_write, d.t_write] {
        w.f64(v);
    }
    w.u32(d.n_levels);
}

fn get_device(r: &mut Reader) -> Result<DeviceSpec> {
    let d = DeviceSpec {
        r_on: r.f64()?,
        r_off: r.f64()?,
        v_threshold: r.f64()?,
        v_write: r.f64()?,
        t_write: r.f64()?,
        n_levels: r.u32()?,
    };
    d.validate()?;
    Ok(d)
}

fn put_config(w: &mut Writer, c: &TrainConfig) {
    w.usize(c.epochs);
    w.usize(c.batch_size);
    w.f64(c.learning_rate);
    w.f64(c.generator_lr_scale);
    w.usize(c.latent_dim);
    w.bool(c.analog.quantize);
    w.f64(c.analog.sigma_pct);
    w.bool(c.analog.loaded_readout);
    w.f64(c.analog.leakage);
    w.u64(c.seed);
    w.f64(c.w_max_sigmas);
    w.f64(c.v_dd);
}

fn get_config(r: &mut Reader) -> Result<TrainConfig> {
    Ok(TrainConfig {
        epochs: r.usize()?,
        batch_size: r.usize()?,
        learning_rate: r.f64()?,
        generator_lr_scale: r.f64()?,
        latent_dim: r.usize()?,
        analog: AnalogEffects {
            quantize: r.bool()?,
            sigma_pct: r.f64()?,
            loaded_readout: r.bool()?,
            leakage: r.f64()?,
        },
        seed: r.u64()?,
        w_max_sigmas: r.f64()?,
        v_dd: r.f64()?,
    })
}

fn put_topology(w: &mut Writer, t: &NetworkTopology) {
    w.u8(match t.role {
        Role::Generator => 0,
        Role::Discriminator => 1,
    });
    w.shape(&t.input_shape);
    w.u32(t.layers.len() as u32);
    for l in &t.layers {
        w.u8(l.kind.code());
        w.usize(l.kernel.0);
        w.usize(l.kernel.1);
        w.usize(l.filters);
        w.usize(l.stride);
        w.usize(l.padding);
        w.usize(l.output_padding);
        w.f64(l.rate);
        w.bool(l.bias);
        w.shape(&l.in_shape);
        w.shape(&l.out_shape);
    }
}

fn get_topology(r: &mut Reader) -> Result<NetworkTopology> {
    let role = match r.u8()? {
        0 => Role::Generator,
        1 => Role::Discriminator,
        b => return Err(r.bad(&format!("unknown role {b}"))),
    };
    let input_shape = r.shape()?;
    let n = r.u32()? as usize;
    let mut layers = Vec::with_capacity(n.min(64));
    for _ in 0..n {
        let code = r.u8()?;
        let kind = LayerKind::from_code(code).ok_or_else(|| r.bad(&format!("unknown layer kind {code}")))?;
        layers.push(LayerDesc {
            kind,
            kernel: (r.usize()?, r.usize()?),
            filters: r.usize()?,
            stride: r.usize()?,
            padding: r.usize()?,
            output_padding: r.usize()?,
            rate: r.f64()?,
            bias: r.bool()?,
            in_shape: r.shape()?,
            out_shape: r.shape()?,
        });
    }
    NetworkTopology::new(role, input_shape, layers)
}

fn put_network(w: &mut Writer, net: &Network) {
    let layers: Vec<_> = net.crossbar_layers().collect();
    w.u32(layers.len() as u32);
    for l in layers {
        let x = l.crossbar();
        w.usize(x.rows());
        w.usize(x.cols());
        w.f64(x.w_max());
        w.bool(x.quantized());
        w.f64s(x.g_mag());
        w.usize(x.sign().len());
        w.0.extend(x.sign().iter().map(|&s| s as u8));
        w.f64s(x.g_load());
        w.f64s(l.master());
    }
}

fn get_network(r: &mut Reader, topology: NetworkTopology, device: &DeviceSpec) -> Result<Network> {
    let n = r.u32()? as usize;
    let mut parts = Vec::with_capacity(n.min(64));
    for _ in 0..n {
        let rows = r.usize()?;
        let cols = r.usize()?;
        let w_max = r.f64()?;
        let quantized = r.bool()?;
        let g_mag = r.f64s()?;
        let ns = r.len(1)?;
        let sign = r.take(ns)?.iter().map(|&b| b as i8).collect();
        let g_load = r.f64s()?;
        let master = r.f64s()?;
        let xbar = CrossbarArray::from_raw(rows, cols, g_mag, sign, g_load, w_max, quantized, *device)?;
        parts.push((xbar, master));
    }
    Network::from_parts(topology, parts)
}

fn put_counters(w: &mut Writer, s: &TrainState) {
    w.u64(s.epoch);
    w.u64(s.events);
    w.u64(s.steps);
    w.usize(s.history.len());
    for h in &s.history {
        w.u64(h.epoch);
        w.f64(h.d_loss);
        w.f64(h.g_loss);
    }
}

/// Serializes `state` to checkpoint bytes.
pub fn encode(state: &TrainState) -> Vec<u8> {
    let mut payloads: Vec<Writer> = (0..SECTIONS.len()).map(|_| Writer::default()).collect();
    put_device(&mut payloads[0], &state.device);
    put_config(&mut payloads[1], &state.config);
    put_topology(&mut payloads[2], &state.pair.generator);
    put_topology(&mut payloads[2], &state.pair.discriminator);
    put_network(&mut payloads[3], &state.generator);
    put_network(&mut payloads[4], &state.discriminator);
    put_counters(&mut payloads[5], state);

    let mut out = Writer::default();
    out.0.extend_from_slice(MAGIC);
    out.u32(VERSION);
    out.u32(SECTIONS.len() as u32);
    for (tag, p) in SECTIONS.iter().zip(payloads) {
        out.0.extend_from_slice(*tag);
        out.usize(p.0.len());
        let crc = crc32fast::hash(&p.0);
        out.0.extend(p.0);
        out.u32(crc);
    }
    out.0
}

fn device_summary(d: &DeviceSpec) -> String {
    format!(
        "(r_on {} Ω, r_off {} Ω, v_threshold {} V, v_write {} V, t_write {} s, n_levels {})",
        d.r_on, d.r_off, d.v_threshold, d.v_write, d.t_write, d.n_levels
    )
}

/// Parses checkpoint bytes. With `expected` set, the stored device must
/// equal it exactly.
pub fn decode(bytes: &[u8], expected: Option<&DeviceSpec>) -> Result<TrainState> {
    let mut head = Reader::new(bytes, "header");
    if head.take(MAGIC.len()).ok() != Some(MAGIC.as_slice()) {
        return Err(Error::BadCheckpoint("missing magic header".into()));
    }
    let version = head.u32()?;
    if version != VERSION {
        return Err(Error::VersionMismatch {
            found: version,
            supported: VERSION,
        });
    }
    if head.u32()? as usize != SECTIONS.len() {
        return Err(Error::BadCheckpoint("unexpected section count".into()));
    }
    let mut payloads = Vec::with_capacity(SECTIONS.len());
    for tag in SECTIONS {
        let name = std::str::from_utf8(tag).expect("ascii tag");
        let found = head.take(4)?;
        if found != tag.as_slice() {
            return Err(Error::BadCheckpoint(format!(
                "expected section {name}, found {:?}",
                String::from_utf8_lossy(found)
            )));
        }
        let len = head.usize()?;
        let payload = head.take(len)?;
        let crc = head.u32()?;
        if crc32fast::hash(payload) != crc {
            return Err(Error::Checksum { section: name.into() });
        }
        payloads.push(payload);
    }
    head.finish()?;

    let mut r = Reader::new(payloads[0], "DEVC");
    let device = get_device(&mut r)?;
    r.finish()?;
    if let Some(want) = expected {
        if *want != device {
            return Err(Error::SpecMismatch {
                expected: device_summary(want),
                found: device_summary(&device),
            });
        }
    }
    let mut r = Reader::new(payloads[1], "CONF");
    let config = get_config(&mut r)?;
    r.finish()?;
    config.validate()?;
    let mut r = Reader::new(payloads[2], "TOPO");
    let pair = TopologyPair::new(get_topology(&mut r)?, get_topology(&mut r)?)?;
    r.finish()?;
    let mut r = Reader::new(payloads[3], "GNET");
    let generator = get_network(&mut r, pair.generator.clone(), &device)?;
    r.finish()?;
    let mut r = Reader::new(payloads[4], "DNET");
    let discriminator = get_network(&mut r, pair.discriminator.clone(), &device)?;
    r.finish()?;
    let mut r = Reader::new(payloads[5], "CNTR");
    let epoch = r.u64()?;
    let events = r.u64()?;
    let steps = r.u64()?;
    let n = r.len(24)?;
    let history = (0..n)
        .map(|_| {
            Ok(EpochLosses {
                epoch: r.u64()?,
                d_loss: r.f64()?,
                g_loss: r.f64()?,
            })
        })
        .collect::<Result<_>>()?;
    r.finish()?;
    Ok(TrainState {
        pair,
        device,
        config,
        generator,
        discriminator,
        epoch,
        events,
        steps,
        history,
    })
}

pub fn save_checkpoint(state: &TrainState, path: &Path) -> Result<()> {
    fs::write(path, encode(state)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path, expected: Option<&DeviceSpec>) -> Result<TrainState> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes, expected)
}
