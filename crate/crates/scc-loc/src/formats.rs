//! Little-endian binary containers: SCCD elevation rasters, SCCF feature
//! maps and SCCM match lists.
//!
//! Decoding errors carry the byte offset at which the input went wrong.

use std::path::Path;

use scc_loc_core::csatsf::Correspondence;
use scc_loc_core::geo::DsmRaster;
use scc_loc_core::retrieval::FeatureMap;

pub const VERSION: u16 = 1;
const FLAG_CLS: u16 = 1;

#[derive(Debug, thiserror::Error)]
pub enum FormatError {
    #[error("truncated {what}: need {needed} bytes at offset {offset}, {available} available")]
    Truncated {
        what: &'static str,
        offset: usize,
        needed: usize,
        available: usize,
    },
    #[error("bad magic {found:?}, expected {expected:?}")]
    BadMagic {
        expected: &'static str,
        found: [u8; 4],
    },
    #[error("unsupported version {0}")]
    UnsupportedVersion(u16),
    #[error("invalid content at offset {offset}: {reason}")]
    Invalid { offset: usize, reason: String },
    #[error("{count} trailing bytes at offset {offset}")]
    TrailingBytes { offset: usize, count: usize },
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    fn take(&mut self, n: usize, what: &'static str) -> Result<&'a [u8], FormatError> {
        let available = self.buf.len() - self.pos;
        if n > available {
            return Err(FormatError::Truncated {
                what,
                offset: self.pos,
                needed: n,
                available,
            });
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn magic(&mut self, expected: &'static str) -> Result<(), FormatError> {
        let m = self.take(4, "magic")?;
        if m != expected.as_bytes() {
            return Err(FormatError::BadMagic {
                expected,
                found: m.try_into().unwrap(),
            });
        }
        Ok(())
    }

    fn u16(&mut self, what: &'static str) -> Result<u16, FormatError> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    fn u32(&mut self, what: &'static str) -> Result<u32, FormatError> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn f32(&mut self, what: &'static str) -> Result<f32, FormatError> {
        Ok(f32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn f64(&mut self, what: &'static str) -> Result<f64, FormatError> {
        Ok(f64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    /// `count` floats; the length check happens before any allocation.
    fn f32s(&mut self, count: usize, what: &'static str) -> Result<Vec<f32>, FormatError> {
        let bytes = count.checked_mul(4).ok_or(FormatError::Invalid {
            offset: self.pos,
            reason: format!("{what} element count overflows"),
        })?;
        let raw = self.take(bytes, what)?;
        Ok(raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    fn version(&mut self) -> Result<(), FormatError> {
        match self.u16("version")? {
            VERSION => Ok(()),
            v => Err(FormatError::UnsupportedVersion(v)),
        }
    }

    fn finish(self) -> Result<(), FormatError> {
        match self.buf.len() - self.pos {
            0 => Ok(()),
            count => Err(FormatError::TrailingBytes {
                offset: self.pos,
                count,
            }),
        }
    }
}

fn put_f32s(out: &mut Vec<u8>, v: &[f32]) {
    for x in v {
        out.extend_from_slice(&x.to_le_bytes());
    }
}

pub fn encode_dsm(dsm: &DsmRaster) -> Vec<u8> {
    let mut out = Vec::with_capacity(42 + 4 * dsm.data.len());
    out.extend_from_slice(b"SCCD");
    out.extend_from_slice(&VERSION.to_le_bytes());
    for v in [dsm.origin_x, dsm.origin_y, dsm.cell_size] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.extend_from_slice(&dsm.rows.to_le_bytes());
    out.extend_from_slice(&dsm.cols.to_le_bytes());
    out.extend_from_slice(&dsm.nodata.to_le_bytes());
    put_f32s(&mut out, &dsm.data);
    out
}

pub fn decode_dsm(buf: &[u8]) -> Result<DsmRaster, FormatError> {
    let mut r = Reader::new(buf);
    r.magic("SCCD")?;
    r.version()?;
    let ox = r.f64("origin_x")?;
    let oy = r.f64("origin_y")?;
    let cell = r.f64("cell_size")?;
    let rows = r.u32("rows")?;
    let cols = r.u32("cols")?;
    let nodata = r.f32("nodata")?;
    let start = r.pos;
    let data = r.f32s(rows as usize * cols as usize, "elevation payload")?;
    r.finish()?;
    DsmRaster::new(ox, oy, cell, rows, cols, data, nodata).map_err(|e| FormatError::Invalid {
        offset: start,
        reason: e.to_string(),
    })
}

pub fn encode_features(map: &FeatureMap) -> Vec<u8> {
    let mut out = Vec::with_capacity(20 + 4 * (map.tokens().len() + map.d()));
    out.extend_from_slice(b"SCCF");
    out.extend_from_slice(&VERSION.to_le_bytes());
    let flags = if map.cls().is_some() { FLAG_CLS } else { 0 };
    out.extend_from_slice(&flags.to_le_bytes());
    for v in [map.h(), map.w(), map.d()] {
        out.extend_from_slice(&(v as u32).to_le_bytes());
    }
    put_f32s(&mut out, map.tokens());
    if let Some(cls) = map.cls() {
        put_f32s(&mut out, cls);
    }
    out
}

pub fn decode_features(buf: &[u8]) -> Result<FeatureMap, FormatError> {
    let mut r = Reader::new(buf);
    r.magic("SCCF")?;
    r.version()?;
    let flags_at = r.pos;
    let flags = r.u16("flags")?;
    if flags & !FLAG_CLS != 0 {
        return Err(FormatError::Invalid {
            offset: flags_at,
            reason: format!("unknown flag bits {flags:#06x}"),
        });
    }
    let dims_at = r.pos;
    let h = r.u32("h")? as usize;
    let w = r.u32("w")? as usize;
    let d = r.u32("d")? as usize;
    let count = h
        .checked_mul(w)
        .and_then(|hw| hw.checked_mul(d))
        .ok_or(FormatError::Invalid {
            offset: dims_at,
            reason: "h * w * d overflows".into(),
        })?;
    let start = r.pos;
    let tokens = r.f32s(count, "token payload")?;
    let cls = if flags & FLAG_CLS != 0 {
        Some(r.f32s(d, "CLS token")?)
    } else {
        None
    };
    r.finish()?;
    FeatureMap::new(h, w, d, tokens, cls).map_err(|e| FormatError::Invalid {
        offset: start,
        reason: e.to_string(),
    })
}

pub fn encode_matches(matches: &[Correspondence]) -> Vec<u8> {
    let mut out = Vec::with_capacity(10 + 20 * matches.len());
    out.extend_from_slice(b"SCCM");
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(matches.len() as u32).to_le_bytes());
    for m in matches {
        let rec = [m.pq.x, m.pq.y, m.pdb.x, m.pdb.y, m.conf].map(|v| v as f32);
        put_f32s(&mut out, &rec);
    }
    out
}

pub fn decode_matches(buf: &[u8]) -> Result<Vec<Correspondence>, FormatError> {
    let mut r = Reader::new(buf);
    r.magic("SCCM")?;
    r.version()?;
    let count = r.u32("count")? as usize;
    let start = r.pos;
    let flat = r.f32s(count * 5, "match records")?;
    r.finish()?;
    let mut out = Vec::with_capacity(count);
    for (k, rec) in flat.chunks_exact(5).enumerate() {
        if rec.iter().any(|v| !v.is_finite()) {
            return Err(FormatError::Invalid {
                offset: start + 20 * k,
                reason: format!("record {k} is not finite"),
            });
        }
        let [xq, yq, xdb, ydb, conf] = [0, 1, 2, 3, 4].map(|i| rec[i] as f64);
        out.push(Correspondence::new(xq, yq, xdb, ydb, conf));
    }
    Ok(out)
}

fn read(path: &Path) -> Result<Vec<u8>, FormatError> {
    std::fs::read(path).map_err(|source| FormatError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn write(path: &Path, bytes: &[u8]) -> Result<(), FormatError> {
    std::fs::write(path, bytes).map_err(|source| FormatError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn read_dsm(path: &Path) -> Result<DsmRaster, FormatError> {
    decode_dsm(&read(path)?)
}

pub fn read_features(path: &Path) -> Result<FeatureMap, FormatError> {
    decode_features(&read(path)?)
}

pub fn read_matches(path: &Path) -> Result<Vec<Correspondence>, FormatError> {
    decode_matches(&read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample_map(cls: bool) -> FeatureMap {
        let tokens = (0..2 * 3 * 4).map(|k| k as f32 * 0.25 - 1.0).collect();
        FeatureMap::new(2, 3, 4, tokens, cls.then(|| vec![0.5, 1.5, -2.0, 3.0])).unwrap()
    }

    #[test]
    fn feature_round_trip_and_layout() {
        for cls in [false, true] {
            let m = sample_map(cls);
            let bytes = encode_features(&m);
            assert_eq!(&bytes[..4], b"SCCF");
            assert_eq!(u16::from_le_bytes([bytes[6], bytes[7]]), u16::from(cls));
            // header h * w * d equals payload length / 4
            let payload = bytes.len() - 20 - if cls { 16 } else { 0 };
            assert_eq!(payload / 4, 24);
            assert_eq!(decode_features(&bytes).unwrap(), m);
        }
    }

    #[test]
    fn dsm_round_trip() {
        let dsm = DsmRaster::new(
            10.0,
            20.0,
            2.5,
            2,
            3,
            vec![1.0, 2.0, 3.0, -9999.0, 5.0, 6.0],
            -9999.0,
        )
        .unwrap();
        let bytes = encode_dsm(&dsm);
        assert_eq!(bytes.len(), 4 + 2 + 24 + 8 + 4 + 24);
        assert_eq!(decode_dsm(&bytes).unwrap(), dsm);
    }

    #[test]
    fn matches_round_trip() {
        let m = vec![
            Correspondence::new(1.0, 2.0, 3.0, 4.0, 0.5),
            Correspondence::new(-1.5, 0.0, 8.0, 9.25, 1.0),
        ];
        let bytes = encode_matches(&m);
        assert_eq!(u32::from_le_bytes(bytes[6..10].try_into().unwrap()), 2);
        assert_eq!(decode_matches(&bytes).unwrap(), m);
    }

    #[test]
    fn truncation_reports_offset() {
        let bytes = encode_matches(&[Correspondence::new(1.0, 2.0, 3.0, 4.0, 0.5)]);
        match decode_matches(&bytes[..25]) {
            Err(FormatError::Truncated {
                offset: 10,
                needed: 20,
                available: 15,
                ..
            }) => {}
            other => panic!("{other:?}"),
        }
        match decode_features(&encode_features(&sample_map(true))[..7]) {
            Err(FormatError::Truncated {
                what: "flags",
                offset: 6,
                needed: 2,
                available: 1,
            }) => {}
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn header_errors() {
        let mut bytes = encode_features(&sample_map(false));
        bytes[4] = 9;
        assert!(matches!(
            decode_features(&bytes),
            Err(FormatError::UnsupportedVersion(9))
        ));
        assert!(matches!(
            decode_dsm(b"SCCFxx"),
            Err(FormatError::BadMagic { .. })
        ));
        let mut bytes = encode_matches(&[]);
        bytes.push(0);
        assert!(matches!(
            decode_matches(&bytes),
            Err(FormatError::TrailingBytes {
                offset: 10,
                count: 1
            })
        ));
        // a huge count is rejected by the length check, not by allocation
        let mut bytes = encode_matches(&[]);
        bytes[6..10].copy_from_slice(&u32::MAX.to_le_bytes());
        assert!(matches!(
            decode_matches(&bytes),
            Err(FormatError::Truncated { offset: 10, .. })
        ));
    }

    proptest! {
        #[test]
        fn every_prefix_is_rejected(cut in 0usize..124, cls in any::<bool>()) {
            let bytes = encode_features(&sample_map(cls));
            let cut = cut.min(bytes.len() - 1);
            match decode_features(&bytes[..cut]) {
                Err(FormatError::Truncated { offset, needed, available, .. }) => {
                    prop_assert!(offset <= cut);
                    prop_assert_eq!(available, cut - offset);
                    prop_assert!(needed > available);
                }
                other => prop_assert!(false, "{:?}", other),
            }
        }
    }
}
