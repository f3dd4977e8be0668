//! `SCNF1` feature cache files.
//!
//! Layout: magic, u32 LE `(L, c, n)`, `L·c·n` f32 LE values, then the
//! metadata trailer as a u32 LE byte length followed by `key=value` lines.

use std::fs;
use std::io::Write;
use std::path::Path;

use super::channel::ChannelMode;
use super::map::{FeatureKind, FeatureMap};
use crate::error::{Error, Result};

pub const CACHE_MAGIC: &[u8; 5] = b"SCNF1";

fn encode(fm: &FeatureMap) -> Vec<u8> {
    let mut buf = Vec::with_capacity(17 + 4 * fm.data.len());
    buf.extend_from_slice(CACHE_MAGIC);
    for d in fm.shape() {
        buf.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for v in &fm.data {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    let mut trailer = String::new();
    for (k, v) in [
        ("kind", fm.kind.name().to_string()),
        ("channel_mode", fm.channel_mode.name().to_string()),
        ("win_ms", fm.win_ms.to_string()),
        ("hop_ms", fm.hop_ms.to_string()),
    ] {
        trailer.push_str(&format!("{k}={v}\n"));
    }
    for (k, v) in &fm.meta {
        trailer.push_str(&format!("{k}={v}\n"));
    }
    buf.extend_from_slice(&(trailer.len() as u32).to_le_bytes());
    buf.extend_from_slice(trailer.as_bytes());
    buf
}

/// Writes atomically: a sibling temp file is renamed over the target.
pub fn write_cache(fm: &FeatureMap, path: &Path) -> Result<()> {
    if fm.meta.iter().any(|(k, v)| k.contains(['=', '\n']) || v.contains('\n')) {
        return Err(Error::input("metadata keys may not contain '=' or newlines"));
    }
    let tmp = path.with_extension(format!("tmp{}", std::process::id()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(&encode(fm))?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn read_cache(path: &Path) -> Result<FeatureMap> {
    let bytes = fs::read(path)?;
    decode(&bytes).map_err(|reason| Error::corrupt(path.display().to_string(), reason))
}

fn decode(b: &[u8]) -> std::result::Result<FeatureMap, String> {
    if b.len() < 5 || &b[..5] != CACHE_MAGIC {
        return Err("bad magic".into());
    }
    let u32_at = |off: usize| -> std::result::Result<u32, String> {
        b.get(off..off + 4)
            .map(|s| u32::from_le_bytes(s.try_into().unwrap()))
            .ok_or_else(|| "truncated header".to_string())
    };
    let (l, c, n) = (u32_at(5)? as usize, u32_at(9)? as usize, u32_at(13)? as usize);
    let count = l.checked_mul(c).and_then(|x| x.checked_mul(n)).ok_or("shape overflow")?;
    let data_end = 17 + 4 * count;
    if b.len() < data_end + 4 {
        return Err(format!("truncated: {} bytes, data needs {}", b.len(), data_end + 4));
    }
    let data = b[17..data_end]
        .chunks_exact(4)
        .map(|s| f32::from_le_bytes(s.try_into().unwrap()))
        .collect();
    let tlen = u32_at(data_end)? as usize;
    let trailer = b.get(data_end + 4..data_end + 4 + tlen).ok_or("truncated trailer")?;
    if b.len() != data_end + 4 + tlen {
        return Err("trailing bytes after metadata".into());
    }
    let trailer = std::str::from_utf8(trailer).map_err(|e| format!("trailer not UTF-8: {e}"))?;
    let mut fm = FeatureMap::new(l, c, n, data, FeatureKind::Fbank).map_err(|e| e.to_string())?;
    for line in trailer.lines() {
        let (k, v) = line.split_once('=').ok_or_else(|| format!("bad trailer line {line:?}"))?;
        match k {
            "kind" => fm.kind = FeatureKind::parse(v).map_err(|e| e.to_string())?,
            "channel_mode" => fm.channel_mode = ChannelMode::parse(v).map_err(|e| e.to_string())?,
            "win_ms" => fm.win_ms = v.parse().map_err(|_| format!("bad win_ms {v:?}"))?,
            "hop_ms" => fm.hop_ms = v.parse().map_err(|_| format!("bad hop_ms {v:?}"))?,
            _ => fm.meta.push((k.to_string(), v.to_string())),
        }
    }
    Ok(fm)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> FeatureMap {
        let mut fm = FeatureMap::new(4, 2, 3, (0..24).map(|i| i as f32 * -0.37).collect(), FeatureKind::Scalogram).unwrap();
        fm.hop_ms = 175.0;
        fm.set_meta("provenance", "generated");
        fm.set_meta("epoch", "30");
        fm
    }

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.scnf");
        write_cache(&sample(), &p).unwrap();
        assert_eq!(read_cache(&p).unwrap(), sample());
    }

    #[test]
    fn truncation_detected() {
        let bytes = encode(&sample());
        for cut in [3, 10, 40, bytes.len() - 1] {
            assert!(decode(&bytes[..cut]).is_err(), "cut at {cut}");
        }
    }
}
