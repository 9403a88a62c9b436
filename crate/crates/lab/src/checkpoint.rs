//! Versioned binary checkpoint container.
//!
//! Layout (little-endian): magic `BOWLNETC`, u32 version, variant tag,
//! architecture JSON, u32 parameter count, shape table (name, rank, dims),
//! f64 parameter blobs in table order, optimizer block, u64 epoch, training
//! log reference. Strings are u32-length-prefixed UTF-8.

use bowlnet_core::baselines::StateMlpConfig;
use bowlnet_core::model::{ModelConfig, Variant};
use bowlnet_core::numerics::{OptimizerState, ParameterSet, RmsProp, Tensor};
use serde::{Deserialize, Serialize};

use crate::config::InitSetting;
use crate::error::{LabError, LabResult};

pub const CHECKPOINT_MAGIC: [u8; 8] = *b"BOWLNETC";
pub const CHECKPOINT_VERSION: u32 = 1;

/// What the parameters belong to.
#[derive(Debug, Clone, PartialEq)]
pub enum ModelKind {
    Network(ModelConfig),
    StateMlp(StateMlpConfig),
}

impl ModelKind {
    pub fn tag(&self) -> &'static str {
        match self {
            ModelKind::Network(c) => c.variant.name(),
            ModelKind::StateMlp(c) if c.plus => "state-mlp++",
            ModelKind::StateMlp(_) => "state-mlp",
        }
    }

    pub fn parameter_shapes(&self) -> Vec<(String, Vec<usize>)> {
        match self {
            ModelKind::Network(c) => c.parameter_shapes(),
            ModelKind::StateMlp(c) => c.parameter_shapes().into_iter().map(|(n, s)| (n.to_string(), s)).collect(),
        }
    }

    fn arch_json(&self) -> String {
        let arch = match self {
            ModelKind::Network(c) => Arch::Network {
                t0: c.t0,
                resolution: c.resolution,
                encoder_channels: c.encoder_channels.clone(),
                transition_hidden: c.transition_hidden,
                eigen_scale: c.eigen_scale,
                eigen_offset: c.eigen_offset,
                det_weight: c.det_weight,
                init: c.init.into(),
            },
            ModelKind::StateMlp(c) => Arch::StateMlp {
                hidden: c.hidden,
                resolution: c.resolution,
                half_extent: c.half_extent,
                frame_dt: c.frame_dt,
            },
        };
        serde_json::to_string(&arch).expect("arch serializes")
    }

    fn from_parts(tag: &str, arch: Arch) -> Result<Self, String> {
        match arch {
            Arch::Network {
                t0,
                resolution,
                encoder_channels,
                transition_hidden,
                eigen_scale,
                eigen_offset,
                det_weight,
                init,
            } => {
                let variant = Variant::from_name(tag).ok_or_else(|| format!("unknown variant tag {tag:?}"))?;
                Ok(ModelKind::Network(ModelConfig {
                    variant,
                    t0,
                    resolution,
                    encoder_channels,
                    transition_hidden,
                    eigen_scale,
                    eigen_offset,
                    det_weight,
                    init: init.into(),
                }))
            }
            Arch::StateMlp { hidden, resolution, half_extent, frame_dt } => {
                let plus = match tag {
                    "state-mlp" => false,
                    "state-mlp++" => true,
                    _ => return Err(format!("tag {tag:?} does not match a state-MLP descriptor")),
                };
                let mut c = StateMlpConfig::new(plus, resolution, half_extent);
                c.hidden = hidden;
                c.frame_dt = frame_dt;
                Ok(ModelKind::StateMlp(c))
            }
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
enum Arch {
    Network {
        t0: usize,
        resolution: usize,
        encoder_channels: Vec<usize>,
        transition_hidden: usize,
        eigen_scale: f64,
        eigen_offset: f64,
        det_weight: f64,
        init: InitSetting,
    },
    StateMlp {
        hidden: [usize; 2],
        resolution: usize,
        half_extent: f64,
        frame_dt: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub kind: ModelKind,
    pub params: ParameterSet,
    pub optimizer: Option<OptimizerState>,
    /// Epoch whose parameters are stored.
    pub epoch: u64,
    /// Path of the training log this checkpoint came from.
    pub training_log: String,
}

struct Writer(Vec<u8>);

impl Writer {
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn str(&mut self, s: &str) {
        self.u32(s.len() as u32);
        self.0.extend_from_slice(s.as_bytes());
    }
    fn tensor_data(&mut self, t: &Tensor) {
        for &v in t.data() {
            self.f64(v);
        }
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn fail(&self, what: &str) -> LabError {
        LabError::Mismatch(format!("checkpoint rejected at byte {}: {what}", self.pos))
    }
    fn take(&mut self, n: usize, what: &str) -> LabResult<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(self.fail(&format!("truncated while reading {what}")));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u32(&mut self, what: &str) -> LabResult<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }
    fn u64(&mut self, what: &str) -> LabResult<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().expect("8 bytes")))
    }
    fn f64(&mut self, what: &str) -> LabResult<f64> {
        Ok(f64::from_le_bytes(self.take(8, what)?.try_into().expect("8 bytes")))
    }
    fn str(&mut self, what: &str) -> LabResult<String> {
        let n = self.u32(what)? as usize;
        let start = self.pos;
        let raw = self.take(n, what)?;
        String::from_utf8(raw.to_vec()).map_err(|_| {
            LabError::Mismatch(format!("checkpoint rejected at byte {start}: {what} is not UTF-8"))
        })
    }
    fn tensor(&mut self, shape: &[usize], what: &str) -> LabResult<Tensor> {
        let n: usize = shape.iter().product();
        let raw = self.take(n.checked_mul(8).ok_or_else(|| self.fail("size overflow"))?, what)?;
        let data = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
        Ok(Tensor::new(shape.to_vec(), data)?)
    }
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer(Vec::new());
        w.0.extend_from_slice(&CHECKPOINT_MAGIC);
        w.u32(CHECKPOINT_VERSION);
        w.str(self.kind.tag());
        w.str(&self.kind.arch_json());
        w.u32(self.params.len() as u32);
        for (name, t) in self.params.iter() {
            w.str(name);
            w.u32(t.shape().len() as u32);
            for &d in t.shape() {
                w.u64(d as u64);
            }
        }
        for t in self.params.tensors() {
            w.tensor_data(t);
        }
        match &self.optimizer {
            None => w.0.push(0),
            Some(opt) => {
                w.0.push(1);
                w.f64(opt.config.learning_rate);
                w.f64(opt.config.decay);
                w.f64(opt.config.epsilon);
                for t in opt.accumulators() {
                    w.tensor_data(t);
                }
            }
        }
        w.u64(self.epoch);
        w.str(&self.training_log);
        w.0
    }

    pub fn from_bytes(bytes: &[u8]) -> LabResult<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8, "magic")? != CHECKPOINT_MAGIC {
            r.pos = 0;
            return Err(r.fail("bad magic"));
        }
        let version = r.u32("version")?;
        if version != CHECKPOINT_VERSION {
            r.pos -= 4;
            return Err(r.fail(&format!("unsupported version {version}")));
        }
        let tag = r.str("variant tag")?;
        let arch_pos = r.pos;
        let arch_text = r.str("architecture descriptor")?;
        let arch: Arch = serde_json::from_str(&arch_text)
            .map_err(|e| LabError::Mismatch(format!("checkpoint rejected at byte {arch_pos}: descriptor: {e}")))?;
        let kind = ModelKind::from_parts(&tag, arch)
            .map_err(|e| LabError::Mismatch(format!("checkpoint rejected at byte {arch_pos}: {e}")))?;
        let expected = kind.parameter_shapes();
        let count = r.u32("parameter count")? as usize;
        if count != expected.len() {
            return Err(r.fail(&format!("{count} parameters, descriptor implies {}", expected.len())));
        }
        let mut table = Vec::with_capacity(count);
        for (want_name, want_shape) in &expected {
            let entry_pos = r.pos;
            let name = r.str("parameter name")?;
            let rank = r.u32("parameter rank")? as usize;
            let shape = (0..rank).map(|_| r.u64("parameter dim").map(|d| d as usize)).collect::<LabResult<Vec<_>>>()?;
            if &name != want_name || &shape != want_shape {
                return Err(LabError::Mismatch(format!(
                    "checkpoint rejected at byte {entry_pos}: entry {name} {shape:?} disagrees with descriptor {want_name} {want_shape:?}"
                )));
            }
            table.push((name, shape));
        }
        let mut params = ParameterSet::new();
        for (name, shape) in &table {
            let t = r.tensor(shape, name)?;
            params.insert(name.clone(), t)?;
        }
        let optimizer = match r.take(1, "optimizer flag")?[0] {
            0 => None,
            1 => {
                let config = RmsProp {
                    learning_rate: r.f64("learning rate")?,
                    decay: r.f64("decay")?,
                    epsilon: r.f64("epsilon")?,
                };
                let acc = table.iter().map(|(n, s)| r.tensor(s, n)).collect::<LabResult<Vec<_>>>()?;
                Some(OptimizerState::from_parts(config, acc)?)
            }
            f => {
                r.pos -= 1;
                return Err(r.fail(&format!("bad optimizer flag {f}")));
            }
        };
        let epoch = r.u64("epoch")?;
        let training_log = r.str("training log reference")?;
        if r.pos != bytes.len() {
            return Err(r.fail("trailing bytes"));
        }
        Ok(Self { kind, params, optimizer, epoch, training_log })
    }

    pub fn save(&self, path: &std::path::Path) -> LabResult<()> {
        std::fs::write(path, self.to_bytes()).map_err(crate::error::io_err(path))
    }

    pub fn load(path: &std::path::Path) -> LabResult<Self> {
        let bytes = std::fs::read(path).map_err(crate::error::io_err(path))?;
        Self::from_bytes(&bytes).map_err(|e| LabError::Mismatch(format!("{}: {e}", path.display())))
    }

    /// The network config, rejecting other model kinds or a different variant.
    pub fn expect_network(&self, variant: Option<Variant>) -> LabResult<&ModelConfig> {
        match &self.kind {
            ModelKind::Network(c) if variant.is_none_or(|v| v == c.variant) => Ok(c),
            other => Err(LabError::Mismatch(format!(
                "checkpoint holds {}, expected {}",
                other.tag(),
                variant.map_or("an image model", |v| v.name())
            ))),
        }
    }
}
