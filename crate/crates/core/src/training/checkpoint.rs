//! Versioned binary checkpoint.
//!
//! Layout (little-endian): magic `GPCK`, `u32` version, `u64` seed, `u64`
//! epoch, network config, optional Adam header, then every named tensor as
//! `(name, kind, dims, f32 payload)`. Parameters are followed by their Adam
//! moments when the Adam header is present.

use std::fs;
use std::path::Path;

use super::{Network, NetworkConfig};
use crate::error::{Error, Result};
use crate::nn::{AdamConfig, AdamState};

const MAGIC: &[u8; 4] = b"GPCK";
pub const CHECKPOINT_VERSION: u32 = 1;
const KIND_PARAM: u8 = 0;
const KIND_BUFFER: u8 = 1;

#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub seed: u64,
    pub epoch: u64,
    pub network: Network<f32>,
    pub adam: Option<AdamState<f32>>,
}

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f32s(&mut self, v: &[f32]) {
        for x in v {
            self.0.extend_from_slice(&x.to_le_bytes());
        }
    }
    fn str(&mut self, s: &str) {
        self.u32(s.len() as u32);
        self.0.extend_from_slice(s.as_bytes());
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| Error::CorruptFile("checkpoint truncated".into()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f32s(&mut self, n: usize) -> Result<Vec<f32>> {
        Ok(self
            .take(n.checked_mul(4).ok_or_else(|| Error::CorruptFile("size overflow".into()))?)?
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
    fn str(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec())
            .map_err(|_| Error::CorruptFile("tensor name is not utf-8".into()))
    }
}

impl Checkpoint {
    pub fn to_bytes(&mut self) -> Vec<u8> {
        let mut w = Writer(Vec::new());
        w.0.extend_from_slice(MAGIC);
        w.u32(CHECKPOINT_VERSION);
        w.u64(self.seed);
        w.u64(self.epoch);
        let cfg = self.network.config().clone();
        w.u32(cfg.levels as u32);
        for &f in &cfg.encoder_filters {
            w.u32(f as u32);
        }
        w.u32(cfg.n_classes as u32);
        w.u32(cfg.input_channels as u32);
        match &self.adam {
            Some(a) => {
                w.u8(1);
                w.f64(a.config.lr);
                w.f64(a.config.beta1);
                w.f64(a.config.beta2);
                w.f64(a.config.eps);
                w.u64(a.t);
            }
            None => w.u8(0),
        }
        let adam = self.adam.as_ref().filter(|a| !a.first.is_empty());
        let params = self.network.named_params();
        w.u32(params.len() as u32);
        for (i, (name, p)) in params.iter().enumerate() {
            w.str(name);
            w.u8(KIND_PARAM);
            w.u32(p.shape.len() as u32);
            for &d in &p.shape {
                w.u32(d as u32);
            }
            w.f32s(&p.value);
            if let Some(a) = adam {
                w.f32s(&a.first[i]);
                w.f32s(&a.second[i]);
            }
        }
        let buffers = self.network.named_buffers();
        w.u32(buffers.len() as u32);
        for (name, b) in &buffers {
            w.str(name);
            w.u8(KIND_BUFFER);
            w.u32(1);
            w.u32(b.len() as u32);
            w.f32s(b);
        }
        w.0
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { buf: bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(Error::Format("not a checkpoint (bad magic)".into()));
        }
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::Format(format!("unsupported checkpoint version {version}")));
        }
        let seed = r.u64()?;
        let epoch = r.u64()?;
        let levels = r.u32()? as usize;
        if levels > 16 {
            return Err(Error::CorruptFile(format!("implausible level count {levels}")));
        }
        let encoder_filters = (0..levels)
            .map(|_| r.u32().map(|v| v as usize))
            .collect::<Result<Vec<_>>>()?;
        let n_classes = r.u32()? as usize;
        let input_channels = r.u32()? as usize;
        let config = NetworkConfig {
            encoder_filters,
            levels,
            n_classes,
            input_channels,
        };
        let mut network = Network::<f32>::new(config)?;
        let adam_cfg = match r.u8()? {
            0 => None,
            _ => Some((
                AdamConfig {
                    lr: r.f64()?,
                    beta1: r.f64()?,
                    beta2: r.f64()?,
                    eps: r.f64()?,
                },
                r.u64()?,
            )),
        };
        // Moments are only stored once Adam has taken a step.
        let moments_stored = adam_cfg.as_ref().is_some_and(|(_, t)| *t > 0);
        let mut first = Vec::new();
        let mut second = Vec::new();
        {
            let mut params = network.named_params();
            let n = r.u32()? as usize;
            if n != params.len() {
                return Err(Error::CorruptFile(format!(
                    "checkpoint has {n} parameters, network has {}",
                    params.len()
                )));
            }
            for (name, p) in params.iter_mut() {
                let got = r.str()?;
                if &got != name || r.u8()? != KIND_PARAM {
                    return Err(Error::CorruptFile(format!("expected parameter {name}, found {got}")));
                }
                let nd = r.u32()? as usize;
                let dims = (0..nd).map(|_| r.u32().map(|v| v as usize)).collect::<Result<Vec<_>>>()?;
                if dims != p.shape {
                    return Err(Error::CorruptFile(format!(
                        "{name}: stored shape {dims:?}, expected {:?}",
                        p.shape
                    )));
                }
                p.value = r.f32s(p.len())?;
                if moments_stored {
                    first.push(r.f32s(p.len())?);
                    second.push(r.f32s(p.len())?);
                }
            }
        }
        {
            let mut buffers = network.named_buffers();
            let n = r.u32()? as usize;
            if n != buffers.len() {
                return Err(Error::CorruptFile("buffer count mismatch".into()));
            }
            for (name, b) in buffers.iter_mut() {
                let got = r.str()?;
                if &got != name || r.u8()? != KIND_BUFFER || r.u32()? != 1 {
                    return Err(Error::CorruptFile(format!("expected buffer {name}, found {got}")));
                }
                let len = r.u32()? as usize;
                if len != b.len() {
                    return Err(Error::CorruptFile(format!("{name}: length {len}")));
                }
                **b = r.f32s(len)?;
            }
        }
        if r.pos != bytes.len() {
            return Err(Error::CorruptFile("trailing bytes after checkpoint".into()));
        }
        let adam = adam_cfg.map(|(config, t)| AdamState {
            config,
            t,
            first,
            second,
        });
        Ok(Self {
            seed,
            epoch,
            network,
            adam,
        })
    }

    pub fn save(&mut self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_bytes(&fs::read(path).map_err(|e| Error::io(path, e))?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Mode;
    use crate::tensor::Tensor4;

    fn small() -> NetworkConfig {
        NetworkConfig {
            encoder_filters: vec![2, 4],
            levels: 2,
            n_classes: 4,
            input_channels: 4,
        }
    }

    #[test]
    fn round_trip_preserves_outputs_and_bytes() {
        let mut net = Network::<f32>::new(small()).unwrap();
        net.init(3);
        let x = Tensor4::from_fn([2, 4, 8, 8], |[n, c, h, w]| ((n + c * h + w) as f32 * 0.1).cos());
        net.forward(&x, Mode::Train).unwrap();
        let mut adam = AdamState::new(AdamConfig::default());
        let grads = net.forward(&x, Mode::Train).unwrap();
        net.zero_grad();
        net.backward(&grads).unwrap();
        adam.step(&mut net.params_mut());
        let mut ck = Checkpoint {
            seed: 9,
            epoch: 2,
            network: net,
            adam: Some(adam),
        };
        let bytes = ck.to_bytes();
        let mut back = Checkpoint::from_bytes(&bytes).unwrap();
        assert_eq!(back.seed, 9);
        assert_eq!(back.epoch, 2);
        assert_eq!(back.adam, ck.adam);
        assert_eq!(back.to_bytes(), bytes);
        let a = ck.network.forward(&x, Mode::Infer).unwrap();
        let b = back.network.forward(&x, Mode::Infer).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn corrupt_inputs_rejected() {
        let mut ck = Checkpoint {
            seed: 0,
            epoch: 0,
            network: Network::new(small()).unwrap(),
            adam: None,
        };
        let bytes = ck.to_bytes();
        assert!(Checkpoint::from_bytes(&bytes).is_ok());
        assert!(matches!(
            Checkpoint::from_bytes(&bytes[..bytes.len() - 3]),
            Err(Error::CorruptFile(_))
        ));
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(Checkpoint::from_bytes(&bad), Err(Error::Format(_))));
    }
}
