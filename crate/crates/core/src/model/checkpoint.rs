//! Binary checkpoint format, little-endian throughout:
//!
//! ```text
//! magic     8 bytes  "DGZSLCK\0"
//! version   u32
//! seed      u64
//! arch      u8       0 = decoupled, 1 = not decoupled
//! dims      5 x u64  noise, prior, hidden, feature, embed
//! count     u32      number of networks
//! network*  name_len u16, name utf-8, slope f64, layers u32,
//!           layer* { activation u8, rows u64, cols u64,
//!                    weight rows*cols f64, bias cols f64 }
//! ```
//!
//! Networks `g1 g2 gc d0 dc` are mandatory, `a` (the regressor) optional.
//! Floats are stored as raw bits, so save/load is bitwise exact.

use std::path::Path;

use super::{Activation, Architecture, DecGan, Layer, ModelDims, Network};
use crate::error::{Error, Result};
use crate::numcore::Matrix;

pub const CHECKPOINT_VERSION: u32 = 1;
const MAGIC: &[u8; 8] = b"DGZSLCK\0";

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub seed: u64,
    pub models: DecGan,
    pub regressor: Option<Network>,
}

pub fn encode_checkpoint(ckpt: &Checkpoint) -> Vec<u8> {
    let m = &ckpt.models;
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&ckpt.seed.to_le_bytes());
    out.push(match m.architecture {
        Architecture::Decoupled => 0,
        Architecture::NotDecoupled => 1,
    });
    for d in [m.dims.noise_dim, m.dims.prior_dim, m.dims.hidden_dim, m.dims.feature_dim, m.dims.embed_dim] {
        out.extend_from_slice(&(d as u64).to_le_bytes());
    }
    let mut nets: Vec<(&str, &Network)> = vec![("g1", &m.g1), ("g2", &m.g2), ("gc", &m.gc), ("d0", &m.d0), ("dc", &m.dc)];
    if let Some(a) = &ckpt.regressor {
        nets.push(("a", a));
    }
    out.extend_from_slice(&(nets.len() as u32).to_le_bytes());
    for (name, net) in nets {
        out.extend_from_slice(&(name.len() as u16).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&net.slope().to_bits().to_le_bytes());
        out.extend_from_slice(&(net.layers().len() as u32).to_le_bytes());
        for layer in net.layers() {
            out.push(match layer.activation {
                Activation::LeakyRelu => 0,
                Activation::Relu => 1,
                Activation::None => 2,
            });
            out.extend_from_slice(&(layer.weight.rows() as u64).to_le_bytes());
            out.extend_from_slice(&(layer.weight.cols() as u64).to_le_bytes());
            for v in layer.weight.data().iter().chain(layer.bias.data()) {
                out.extend_from_slice(&v.to_bits().to_le_bytes());
            }
        }
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() < n {
            return Err(Error::Format("checkpoint truncated".into()));
        }
        let (head, tail) = self.buf.split_at(n);
        self.buf = tail;
        Ok(head)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn usize(&mut self) -> Result<usize> {
        usize::try_from(self.u64()?).map_err(|_| Error::Format("size does not fit in usize".into()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_bits(self.u64()?))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let bytes = n
            .checked_mul(8)
            .ok_or_else(|| Error::Format("matrix size overflows".into()))?;
        let raw = self.take(bytes)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_bits(u64::from_le_bytes(c.try_into().unwrap())))
            .collect())
    }
}

fn read_network(r: &mut Reader<'_>) -> Result<(String, Network)> {
    let name_len = r.u16()? as usize;
    let name = std::str::from_utf8(r.take(name_len)?)
        .map_err(|_| Error::Format("network name is not utf-8".into()))?
        .to_owned();
    let slope = r.f64()?;
    let n_layers = r.u32()? as usize;
    let mut layers = Vec::new();
    for _ in 0..n_layers {
        let activation = match r.u8()? {
            0 => Activation::LeakyRelu,
            1 => Activation::Relu,
            2 => Activation::None,
            t => return Err(Error::Format(format!("unknown activation tag {t}"))),
        };
        let rows = r.usize()?;
        let cols = r.usize()?;
        let len = rows
            .checked_mul(cols)
            .ok_or_else(|| Error::Format("matrix size overflows".into()))?;
        let weight = Matrix::new(rows, cols, r.f64s(len)?)?;
        let bias = Matrix::new(1, cols, r.f64s(cols)?)?;
        layers.push(Layer {
            weight,
            bias,
            activation,
        });
    }
    let net = Network::new(layers, slope)?;
    Ok((name, net))
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Checkpoint> {
    let mut r = Reader { buf: bytes };
    if r.take(MAGIC.len())? != MAGIC {
        return Err(Error::Format("not a checkpoint (bad magic)".into()));
    }
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Format(format!("unsupported checkpoint version {version}")));
    }
    let seed = r.u64()?;
    let architecture = match r.u8()? {
        0 => Architecture::Decoupled,
        1 => Architecture::NotDecoupled,
        t => return Err(Error::Format(format!("unknown architecture tag {t}"))),
    };
    let dims = ModelDims {
        noise_dim: r.usize()?,
        prior_dim: r.usize()?,
        hidden_dim: r.usize()?,
        feature_dim: r.usize()?,
        embed_dim: r.usize()?,
    };
    let count = r.u32()?;
    let mut slots: [Option<Network>; 6] = Default::default();
    for _ in 0..count {
        let (name, net) = read_network(&mut r)?;
        let slot = match name.as_str() {
            "g1" => 0,
            "g2" => 1,
            "gc" => 2,
            "d0" => 3,
            "dc" => 4,
            "a" => 5,
            other => return Err(Error::Format(format!("unknown network {other:?}"))),
        };
        if slots[slot].replace(net).is_some() {
            return Err(Error::Format(format!("network {name:?} appears twice")));
        }
    }
    if !r.buf.is_empty() {
        return Err(Error::Format("trailing bytes after checkpoint".into()));
    }
    let [g1, g2, gc, d0, dc, regressor] = slots;
    let missing = |n: &str| Error::Format(format!("checkpoint lacks network {n:?}"));
    let models = DecGan {
        dims,
        architecture,
        g1: g1.ok_or_else(|| missing("g1"))?,
        g2: g2.ok_or_else(|| missing("g2"))?,
        gc: gc.ok_or_else(|| missing("gc"))?,
        d0: d0.ok_or_else(|| missing("d0"))?,
        dc: dc.ok_or_else(|| missing("dc"))?,
    };
    models.validate()?;
    if let Some(a) = &regressor {
        if a.layers().len() != 1 || a.input_dim() != dims.feature_dim || a.output_dim() != dims.embed_dim {
            return Err(Error::Validation("regressor does not map features to embeddings".into()));
        }
    }
    Ok(Checkpoint {
        seed,
        models,
        regressor,
    })
}

pub fn save_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    std::fs::write(path, encode_checkpoint(ckpt)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{init_decgan, regressor_network};
    use crate::numcore::Rng;

    fn sample() -> Checkpoint {
        let dims = ModelDims {
            noise_dim: 3,
            prior_dim: 4,
            hidden_dim: 5,
            feature_dim: 6,
            embed_dim: 2,
        };
        let mut rng = Rng::new(1);
        let models = init_decgan(&dims, &mut rng, 0.3).unwrap();
        let a = regressor_network(rng.normal_matrix(6, 2, 1.0), rng.normal_matrix(1, 2, 1.0)).unwrap();
        Checkpoint {
            seed: 77,
            models,
            regressor: Some(a),
        }
    }

    #[test]
    fn round_trip_is_bitwise() {
        let ckpt = sample();
        let bytes = encode_checkpoint(&ckpt);
        let back = decode_checkpoint(&bytes).unwrap();
        assert_eq!(back.seed, 77);
        assert!(back.models.g1.bitwise_eq(&ckpt.models.g1));
        assert!(back.models.dc.bitwise_eq(&ckpt.models.dc));
        assert!(back.regressor.as_ref().unwrap().bitwise_eq(ckpt.regressor.as_ref().unwrap()));
        assert_eq!(encode_checkpoint(&back), bytes);
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let ckpt = sample();
        save_checkpoint(&path, &ckpt).unwrap();
        assert_eq!(load_checkpoint(&path).unwrap(), ckpt);
        assert!(matches!(load_checkpoint(&dir.path().join("nope")), Err(Error::Io { .. })));
    }

    #[test]
    fn rejects_corruption() {
        let bytes = encode_checkpoint(&sample());
        assert!(decode_checkpoint(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(decode_checkpoint(&bad).is_err());
        let mut bad = bytes.clone();
        bad[8] = 9;
        assert!(decode_checkpoint(&bad).is_err());
        let mut long = bytes;
        long.push(0);
        assert!(decode_checkpoint(&long).is_err());
    }

    #[test]
    fn rejects_dims_that_disagree_with_networks() {
        let mut ckpt = sample();
        ckpt.models.dims.hidden_dim = 7;
        assert!(decode_checkpoint(&encode_checkpoint(&ckpt)).is_err());
    }
}
