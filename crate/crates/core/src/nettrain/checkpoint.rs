//! Versioned binary checkpoints: magic "LFN1", a config block with its hash,
//! then every parameter tensor in declaration order as little-endian f32 with
//! explicit shapes.

use std::io::Read;
use std::path::Path;

use super::net::{LiftNet, LiftNetConfig};
use super::scalar::{Precision, Scalar};
use crate::error::{Error, Result};

const CHECKPOINT_MAGIC: &[u8; 4] = b"LFN1";
const CHECKPOINT_VERSION: u32 = 1;

fn config_bytes(cfg: &LiftNetConfig) -> Vec<u8> {
    let mut buf = Vec::new();
    buf.extend_from_slice(&(cfg.input_channels as u32).to_le_bytes());
    buf.extend_from_slice(&(cfg.stage_channels.len() as u32).to_le_bytes());
    for &c in &cfg.stage_channels {
        buf.extend_from_slice(&(c as u32).to_le_bytes());
    }
    buf.extend_from_slice(&(cfg.blocks_per_stage as u32).to_le_bytes());
    buf.extend_from_slice(&(cfg.mlp_hidden as u32).to_le_bytes());
    buf.extend_from_slice(&(cfg.num_classes as u32).to_le_bytes());
    buf.extend_from_slice(&(cfg.bins as u32).to_le_bytes());
    buf.push(cfg.precision.tag());
    buf
}

/// FNV-1a over the serialized config block; stable across platforms.
pub fn config_hash(cfg: &LiftNetConfig) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for b in config_bytes(cfg) {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

/// Save the network parameters to `path`.
pub fn save_checkpoint<T: Scalar>(net: &LiftNet<T>, path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    buf.extend_from_slice(CHECKPOINT_MAGIC);
    buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    let cfg_bytes = config_bytes(&net.config);
    buf.extend_from_slice(&cfg_bytes);
    buf.extend_from_slice(&config_hash(&net.config).to_le_bytes());
    let params = net.params();
    buf.extend_from_slice(&(params.len() as u32).to_le_bytes());
    for p in &params {
        buf.extend_from_slice(&(p.shape.len() as u32).to_le_bytes());
        for &d in &p.shape {
            buf.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &v in p.data {
            buf.extend_from_slice(&(v.as_f64() as f32).to_le_bytes());
        }
    }
    crate::atomic_write(path, &buf)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Checkpoint("truncated checkpoint".into()));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

/// Read just the config block of a checkpoint.
pub fn read_checkpoint_config(path: &Path) -> Result<LiftNetConfig> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    let mut cur = Cursor {
        bytes: &bytes,
        pos: 0,
    };
    parse_header(&mut cur)
}

fn parse_header(cur: &mut Cursor) -> Result<LiftNetConfig> {
    if cur.take(4)? != CHECKPOINT_MAGIC {
        return Err(Error::Checkpoint("bad magic, not an LFN1 checkpoint".into()));
    }
    let version = cur.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported checkpoint version {version}"
        )));
    }
    let input_channels = cur.u32()? as usize;
    let n_stages = cur.u32()? as usize;
    if n_stages > 64 {
        return Err(Error::Checkpoint(format!("implausible stage count {n_stages}")));
    }
    let mut stage_channels = Vec::with_capacity(n_stages);
    for _ in 0..n_stages {
        stage_channels.push(cur.u32()? as usize);
    }
    let blocks_per_stage = cur.u32()? as usize;
    let mlp_hidden = cur.u32()? as usize;
    let num_classes = cur.u32()? as usize;
    let bins = cur.u32()? as usize;
    let precision = Precision::from_tag(cur.u8()?)
        .ok_or_else(|| Error::Checkpoint("bad precision tag".into()))?;
    let cfg = LiftNetConfig {
        input_channels,
        stage_channels,
        blocks_per_stage,
        mlp_hidden,
        num_classes,
        bins,
        precision,
    };
    let stored_hash = cur.u64()?;
    if stored_hash != config_hash(&cfg) {
        return Err(Error::Checkpoint("config hash mismatch".into()));
    }
    Ok(cfg)
}

/// Load a checkpoint into a freshly built network of matching precision.
pub fn load_checkpoint<T: Scalar>(path: &Path) -> Result<LiftNet<T>> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    let mut cur = Cursor {
        bytes: &bytes,
        pos: 0,
    };
    let cfg = parse_header(&mut cur)?;
    if cfg.precision != T::PRECISION {
        return Err(Error::Checkpoint(format!(
            "checkpoint precision {} does not match requested {}",
            cfg.precision,
            T::PRECISION
        )));
    }
    let mut net = LiftNet::<T>::new(&cfg, 0)?;
    let tensor_count = cur.u32()? as usize;
    let expected = net.params().len();
    if tensor_count != expected {
        return Err(Error::Checkpoint(format!(
            "checkpoint holds {tensor_count} tensors, net has {expected}"
        )));
    }
    let shapes: Vec<Vec<usize>> = net.params().iter().map(|p| p.shape.clone()).collect();
    let mut tensors: Vec<Vec<T>> = Vec::with_capacity(tensor_count);
    for shape in &shapes {
        let ndim = cur.u32()? as usize;
        if ndim != shape.len() {
            return Err(Error::Checkpoint(format!(
                "tensor rank {ndim} vs expected {}",
                shape.len()
            )));
        }
        let mut dims = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            dims.push(cur.u32()? as usize);
        }
        if &dims != shape {
            return Err(Error::Checkpoint(format!(
                "tensor shape {dims:?} vs expected {shape:?}"
            )));
        }
        let len: usize = dims.iter().product();
        let mut data = Vec::with_capacity(len);
        for _ in 0..len {
            data.push(T::from_f64(cur.f32()? as f64));
        }
        tensors.push(data);
    }
    if cur.pos != bytes.len() {
        return Err(Error::Checkpoint("trailing bytes after tensors".into()));
    }
    for (p, data) in net.params_mut().into_iter().zip(tensors) {
        p.data.copy_from_slice(&data);
    }
    Ok(net)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nettrain::net::BatchInputs;
    use crate::roipipe::ROI_SIZE;
    use ndarray::{Array2, Array4};

    fn small_config() -> LiftNetConfig {
        LiftNetConfig {
            input_channels: 5,
            stage_channels: vec![4, 6],
            blocks_per_stage: 1,
            mlp_hidden: 8,
            num_classes: 2,
            bins: 2,
            precision: Precision::F32,
        }
    }

    #[test]
    fn checkpoint_roundtrip_preserves_forward() {
        let cfg = small_config();
        let net = LiftNet::<f32>::new(&cfg, 5).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.lfn");
        save_checkpoint(&net, &path).unwrap();
        let restored = load_checkpoint::<f32>(&path).unwrap();
        assert_eq!(restored.config, cfg);

        let batch = BatchInputs {
            roi: Array4::from_shape_fn((2, 5, ROI_SIZE, ROI_SIZE), |(i, c, r, col)| {
                ((i + c + r + col) % 7) as f32 * 0.3
            }),
            p_m: Array2::from_elem((2, 3), 4.0f32),
            d_prior: Array2::from_elem((2, 3), 1.5f32),
            class_onehot: Array2::from_shape_fn((2, 2), |(i, j)| if i == j { 1.0 } else { 0.0 }),
        };
        let (a, _) = net.forward(&batch).unwrap();
        let (b, _) = restored.forward(&batch).unwrap();
        // f32 params serialize losslessly, so outputs are bit-identical
        assert_eq!(a.delta_p, b.delta_p);
        assert_eq!(a.bin_logits, b.bin_logits);
    }

    #[test]
    fn checkpoint_rejects_mismatches() {
        let cfg = small_config();
        let net = LiftNet::<f32>::new(&cfg, 5).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.lfn");
        save_checkpoint(&net, &path).unwrap();
        assert!(load_checkpoint::<f64>(&path).is_err());

        // corrupt the magic
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[0] = b'X';
        let bad = dir.path().join("bad.lfn");
        std::fs::write(&bad, &bytes).unwrap();
        assert!(load_checkpoint::<f32>(&bad).is_err());

        // truncate
        let trunc = dir.path().join("trunc.lfn");
        let orig = std::fs::read(&path).unwrap();
        std::fs::write(&trunc, &orig[..orig.len() / 2]).unwrap();
        assert!(load_checkpoint::<f32>(&trunc).is_err());
    }

    #[test]
    fn config_hash_distinguishes_configs() {
        let a = small_config();
        let mut b = small_config();
        b.mlp_hidden = 16;
        assert_ne!(config_hash(&a), config_hash(&b));
        assert_eq!(config_hash(&a), config_hash(&small_config()));
    }
}
