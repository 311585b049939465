//! `WFC1` feature cache: little-endian header `magic, T, R, kind, N` (u32)
//! followed by the base, delta and double-delta blocks as row-major f64.

use std::fs;
use std::path::Path;

use ndarray::Array2;

use super::{CepstralFeatures, FeatureKind};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"WFC1";
const HEADER_LEN: usize = 20;

pub fn encode_feature_cache(feats: &CepstralFeatures) -> Vec<u8> {
    let (t, r) = feats.base.dim();
    let mut out = Vec::with_capacity(HEADER_LEN + 3 * t * r * 8);
    out.extend_from_slice(MAGIC);
    for v in [
        t as u32,
        r as u32,
        feats.kind.tag(),
        feats.delta_window as u32,
    ] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for block in [&feats.base, &feats.delta, &feats.delta2] {
        for v in block.iter() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn decode_feature_cache(bytes: &[u8]) -> Result<CepstralFeatures> {
    if bytes.len() < HEADER_LEN || &bytes[..4] != MAGIC {
        return Err(Error::Format("not a WFC1 feature cache".into()));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().unwrap());
    let (t, r, tag, n) = (
        word(0) as usize,
        word(1) as usize,
        word(2),
        word(3) as usize,
    );
    let kind = FeatureKind::from_tag(tag)
        .ok_or_else(|| Error::Format(format!("unknown feature kind tag {tag}")))?;
    let block = t * r;
    let expected = HEADER_LEN + 3 * block * 8;
    if bytes.len() != expected {
        return Err(Error::Format(format!(
            "cache holds {} bytes, header implies {expected}",
            bytes.len()
        )));
    }
    let read_block = |i: usize| {
        let start = HEADER_LEN + i * block * 8;
        let vals: Vec<f64> = bytes[start..start + block * 8]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Array2::from_shape_vec((t, r), vals).expect("length checked above")
    };
    Ok(CepstralFeatures {
        base: read_block(0),
        delta: read_block(1),
        delta2: read_block(2),
        delta_window: n,
        kind,
        fingerprint: None,
    })
}

pub fn write_feature_cache(feats: &CepstralFeatures, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_feature_cache(feats)).map_err(|e| Error::io(path, e))
}

pub fn read_feature_cache(path: impl AsRef<Path>) -> Result<CepstralFeatures> {
    let path = path.as_ref();
    decode_feature_cache(&fs::read(path).map_err(|e| Error::io(path, e))?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn header_layout() {
        let base = Array2::from_shape_vec((1, 2), vec![1.0, -2.0]).unwrap();
        let f = CepstralFeatures::from_base(base, 2, FeatureKind::Lfcc).unwrap();
        let bytes = encode_feature_cache(&f);
        assert_eq!(&bytes[..4], b"WFC1");
        assert_eq!(
            &bytes[4..20],
            &[1, 0, 0, 0, 2, 0, 0, 0, 1, 0, 0, 0, 2, 0, 0, 0]
        );
        assert_eq!(&bytes[20..28], &1.0f64.to_le_bytes());
        assert_eq!(&bytes[28..36], &(-2.0f64).to_le_bytes());
        assert_eq!(bytes.len(), 20 + 3 * 2 * 8);
    }

    #[test]
    fn rejects_bad_images() {
        assert!(decode_feature_cache(b"WFC0").is_err());
        let base = Array2::ones((2, 2));
        let f = CepstralFeatures::from_base(base, 1, FeatureKind::Mfcc).unwrap();
        let mut bytes = encode_feature_cache(&f);
        bytes.pop();
        assert!(decode_feature_cache(&bytes).is_err());
        let mut bytes = encode_feature_cache(&f);
        bytes[12] = 9;
        assert!(decode_feature_cache(&bytes).is_err());
    }

    proptest! {
        #[test]
        fn bit_exact_round_trip(t in 0usize..6, r in 1usize..5, seed in any::<u64>(), lfcc in any::<bool>()) {
            let vals: Vec<f64> = (0..t * r).map(|i| f64::from_bits(seed.rotate_left(i as u32) >> 2)).collect();
            let base = Array2::from_shape_vec((t, r), vals).unwrap();
            let kind = if lfcc { FeatureKind::Lfcc } else { FeatureKind::Mfcc };
            let mut f = CepstralFeatures::from_base(base, 3, kind).unwrap();
            // arbitrary bit patterns (incl. NaN payloads) must survive unchanged
            f.delta = f.base.clone();
            f.delta2 = f.base.clone();
            let back = decode_feature_cache(&encode_feature_cache(&f)).unwrap();
            prop_assert_eq!(encode_feature_cache(&back), encode_feature_cache(&f));
        }
    }
}
