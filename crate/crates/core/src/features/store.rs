//! Binary cache envelope for feature volumes.
//!
//! ```text
//! magic    8 bytes  "VXSELFEA"
//! version  u32      1
//! W, H, D  u32 × 3
//! widths   u32 × 3  mvs, ibr, positional
//! key_len  u32, key bytes (UTF-8 cache key)
//! payload  f32 × W·H·D·C
//! ```

use super::{FeatureError, FeatureLayout, FeatureVolume};
use crate::grid::Dims3;
use crate::volume::format::Reader;

pub const FEATURE_MAGIC: &[u8; 8] = b"VXSELFEA";
const VERSION: u32 = 1;

pub fn feature_volume_to_bytes(fv: &FeatureVolume, key: &str) -> Vec<u8> {
    let mut out = Vec::with_capacity(64 + key.len() + fv.data.len() * 4);
    out.extend_from_slice(FEATURE_MAGIC);
    let l = fv.layout;
    let header = [
        VERSION,
        fv.dims.width as u32,
        fv.dims.height as u32,
        fv.dims.depth as u32,
        l.mvs as u32,
        l.ibr as u32,
        l.pos as u32,
        key.len() as u32,
    ];
    for v in header {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.extend_from_slice(key.as_bytes());
    for v in &fv.data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// Parses a cached feature volume and returns it with its cache key.
pub fn feature_volume_from_bytes(buf: &[u8]) -> Result<(FeatureVolume, String), FeatureError> {
    let mut r = Reader::new(buf);
    if r.take(8)? != FEATURE_MAGIC {
        return Err(FeatureError::Format("bad magic".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(FeatureError::Format(format!("unsupported version {version}")));
    }
    let dims = Dims3::new(r.u32()? as usize, r.u32()? as usize, r.u32()? as usize);
    let layout = FeatureLayout {
        mvs: r.u32()? as usize,
        ibr: r.u32()? as usize,
        pos: r.u32()? as usize,
    };
    let key_len = r.u32()? as usize;
    let key = String::from_utf8(r.take(key_len)?.to_vec())
        .map_err(|_| FeatureError::Format("cache key is not UTF-8".into()))?;
    let data = r.f32_vec(dims.len() * layout.channels())?;
    r.finish()?;
    Ok((FeatureVolume { dims, layout, data }, key))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let dims = Dims3::new(3, 2, 2);
        let layout = FeatureLayout { mvs: 8, ibr: 4, pos: 56 };
        let fv = FeatureVolume {
            dims,
            layout,
            data: (0..dims.len() * 68).map(|i| i as f32 * 0.25 - 3.0).collect(),
        };
        let bytes = feature_volume_to_bytes(&fv, "abc123");
        let (back, key) = feature_volume_from_bytes(&bytes).unwrap();
        assert_eq!(back, fv);
        assert_eq!(key, "abc123");
        assert!(feature_volume_from_bytes(&bytes[..bytes.len() - 2]).is_err());
    }
}
