//! `SCNC1` model checkpoints.
//!
//! Layout: magic, u32 LE line count and length-prefixed descriptor lines,
//! the same for free-form `key=value` metadata lines, then u32 LE parameter
//! count and per parameter: name, u32 LE rank, dims, f32 LE values.

use std::fs;
use std::io::Write;
use std::path::Path;

use super::network::Network;
use super::spec::NetworkSpec;
use crate::error::{Error, Result};
use crate::tensor::{Float, Tensor};

pub const CHECKPOINT_MAGIC: &[u8; 5] = b"SCNC1";

fn put_u32(buf: &mut Vec<u8>, v: usize) {
    buf.extend_from_slice(&(v as u32).to_le_bytes());
}

fn put_str(buf: &mut Vec<u8>, s: &str) {
    put_u32(buf, s.len());
    buf.extend_from_slice(s.as_bytes());
}

pub fn encode_checkpoint(net: &Network, meta: &[(String, String)]) -> Vec<u8> {
    let mut buf = CHECKPOINT_MAGIC.to_vec();
    let desc = net.spec.to_descriptor();
    put_u32(&mut buf, desc.len());
    desc.iter().for_each(|l| put_str(&mut buf, l));
    put_u32(&mut buf, meta.len());
    meta.iter().for_each(|(k, v)| put_str(&mut buf, &format!("{k}={v}")));
    put_u32(&mut buf, net.store.len());
    for p in net.store.iter() {
        put_str(&mut buf, p.name());
        put_u32(&mut buf, p.value().rank());
        p.value().shape().iter().for_each(|&d| put_u32(&mut buf, d));
        for &v in p.value().data() {
            buf.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    buf
}

/// Atomic write through a sibling temp file.
pub fn save_checkpoint(net: &Network, meta: &[(String, String)], path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let tmp = path.with_extension(format!("tmp{}", std::process::id()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(&encode_checkpoint(net, meta))?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

struct Reader<'a> {
    b: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> std::result::Result<&[u8], String> {
        let s = self.b.get(self.pos..self.pos.checked_add(n).ok_or("length overflow")?).ok_or("truncated")?;
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> std::result::Result<usize, String> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()) as usize)
    }

    fn string(&mut self) -> std::result::Result<String, String> {
        let n = self.u32()?;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|e| e.to_string())
    }
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<(Network, Vec<(String, String)>)> {
    let corrupt = |r: String| Error::corrupt("<checkpoint>", r);
    if bytes.len() < 5 || &bytes[..5] != CHECKPOINT_MAGIC {
        return Err(corrupt("bad magic".into()));
    }
    let mut r = Reader { b: bytes, pos: 5 };
    let n = r.u32().map_err(corrupt)?;
    let desc = (0..n).map(|_| r.string()).collect::<std::result::Result<Vec<_>, _>>().map_err(corrupt)?;
    let spec = NetworkSpec::from_descriptor(&desc)?;
    let n = r.u32().map_err(corrupt)?;
    let mut meta = Vec::with_capacity(n);
    for _ in 0..n {
        let line = r.string().map_err(corrupt)?;
        let (k, v) = line.split_once('=').ok_or_else(|| corrupt(format!("bad meta line {line:?}")))?;
        meta.push((k.to_string(), v.to_string()));
    }
    let mut net = Network::build(spec, 0)?;
    let n = r.u32().map_err(corrupt)?;
    if n != net.store.len() {
        return Err(corrupt(format!("{n} parameters, architecture has {}", net.store.len())));
    }
    for _ in 0..n {
        let name = r.string().map_err(corrupt)?;
        let rank = r.u32().map_err(corrupt)?;
        let shape = (0..rank).map(|_| r.u32()).collect::<std::result::Result<Vec<_>, _>>().map_err(corrupt)?;
        let count: usize = shape.iter().product();
        let raw = r.take(count.checked_mul(4).ok_or_else(|| corrupt("size overflow".into()))?).map_err(corrupt)?;
        let data = raw.chunks_exact(4).map(|s| f32::from_le_bytes(s.try_into().unwrap()) as Float).collect();
        let idx = net.store.find(&name).ok_or_else(|| corrupt(format!("unknown parameter {name:?}")))?;
        net.store.set_value(idx, Tensor::new(&shape, data)?).map_err(|e| corrupt(e.to_string()))?;
    }
    if r.pos != bytes.len() {
        return Err(corrupt("trailing bytes".into()));
    }
    Ok((net, meta))
}

pub fn load_checkpoint(path: &Path) -> Result<(Network, Vec<(String, String)>)> {
    let bytes = fs::read(path)?;
    decode_checkpoint(&bytes).map_err(|e| match e {
        Error::Corruption { reason, .. } => Error::corrupt(path.display().to_string(), reason),
        other => other,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{attach_city_adversary, build_hybrid, DcnnConfig, HybridVariant};
    use crate::tensor::gradcheck::random_tensor;

    fn net() -> Network {
        let mut cfg = DcnnConfig::desk(2, 3, 32);
        cfg.conv_pad = 1;
        let spec = build_hybrid(HybridVariant::IncepGruV3, &cfg, 6).unwrap();
        Network::build(attach_city_adversary(spec, 2, 4, 0.3).unwrap(), 11).unwrap()
    }

    #[test]
    fn round_trip_preserves_predictions() {
        let n = net();
        let meta = vec![("feature".to_string(), "scalogram".to_string())];
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.scnc");
        save_checkpoint(&n, &meta, &p).unwrap();
        let (m, meta2) = load_checkpoint(&p).unwrap();
        assert_eq!(meta, meta2);
        assert_eq!(m.spec, n.spec);
        let x = random_tensor(&[2, 2, 3, 32], 1.0, 3);
        assert_eq!(n.predict(&x).unwrap(), m.predict(&x).unwrap());
    }

    #[test]
    fn corruption_is_reported() {
        let bytes = encode_checkpoint(&net(), &[]);
        for cut in [3, 40, bytes.len() - 1] {
            assert!(matches!(decode_checkpoint(&bytes[..cut]), Err(Error::Corruption { .. })), "cut {cut}");
        }
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(matches!(decode_checkpoint(&extra), Err(Error::Corruption { .. })));
    }
}
