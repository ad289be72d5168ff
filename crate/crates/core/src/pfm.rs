//! Portable FloatMap storage for score maps.
//!
//! Grayscale `Pf` files with a negative scale (little-endian samples). Rows
//! are stored bottom-to-top as the format prescribes, so files open
//! correctly in other PFM readers.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::ScoreMap;

/// JSON sidecar written next to a PFM file.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PfmSidecar {
    pub height: usize,
    pub width: usize,
    pub source_image: String,
    pub kind: String,
}

pub fn encode_pfm(map: &ScoreMap) -> Vec<u8> {
    let (h, w) = (map.height(), map.width());
    let mut out = format!("Pf\n{w} {h}\n-1.0\n").into_bytes();
    out.reserve(h * w * 4);
    for y in (0..h).rev() {
        for v in &map.data()[y * w..(y + 1) * w] {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn write_pfm(map: &ScoreMap, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if let Some(v) = map.data().iter().find(|v| !v.is_finite()) {
        return Err(Error::Validation(format!(
            "refusing to write non-finite value {v} to {}",
            path.display()
        )));
    }
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&encode_pfm(map))
        .map_err(|e| Error::io(path, e))
}

/// Path of the sidecar that belongs to a PFM file.
pub fn sidecar_path(pfm_path: &Path) -> PathBuf {
    pfm_path.with_extension("json")
}

pub fn write_pfm_with_sidecar(
    map: &ScoreMap,
    path: impl AsRef<Path>,
    source_image: &str,
    kind: &str,
) -> Result<()> {
    let path = path.as_ref();
    write_pfm(map, path)?;
    let sidecar = PfmSidecar {
        height: map.height(),
        width: map.width(),
        source_image: source_image.to_string(),
        kind: kind.to_string(),
    };
    let side = sidecar_path(path);
    let text = serde_json::to_string_pretty(&sidecar).map_err(|e| Error::json(&side, e))?;
    fs::write(&side, text).map_err(|e| Error::io(&side, e))
}

/// Reads the next whitespace-delimited header token, returning it and the
/// position just past the single whitespace byte that terminates it.
fn header_token<'a>(bytes: &'a [u8], pos: &mut usize, path: &Path) -> Result<&'a str> {
    while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    if start == *pos || *pos >= bytes.len() {
        return Err(Error::MalformedPfm {
            path: path.to_path_buf(),
            reason: "header ended early".into(),
        });
    }
    let tok = std::str::from_utf8(&bytes[start..*pos]).map_err(|_| Error::MalformedPfm {
        path: path.to_path_buf(),
        reason: "header is not ASCII".into(),
    })?;
    *pos += 1;
    Ok(tok)
}

pub fn decode_pfm(bytes: &[u8], path: &Path) -> Result<ScoreMap> {
    let malformed = |reason: String| Error::MalformedPfm {
        path: path.to_path_buf(),
        reason,
    };
    let mut pos = 0;
    let magic = header_token(bytes, &mut pos, path)?;
    if magic != "Pf" {
        return Err(malformed(format!(
            "expected grayscale magic 'Pf', found '{magic}'"
        )));
    }
    let width: usize = header_token(bytes, &mut pos, path)?
        .parse()
        .map_err(|_| malformed("bad width".into()))?;
    let height: usize = header_token(bytes, &mut pos, path)?
        .parse()
        .map_err(|_| malformed("bad height".into()))?;
    let scale: f32 = header_token(bytes, &mut pos, path)?
        .parse()
        .map_err(|_| malformed("bad scale".into()))?;
    if width == 0 || height == 0 {
        return Err(malformed(format!("empty raster {width}x{height}")));
    }
    if scale == 0.0 || !scale.is_finite() {
        return Err(malformed(format!("invalid scale {scale}")));
    }
    let little_endian = scale < 0.0;
    let payload = &bytes[pos..];
    let expected = (width * height * 4) as u64;
    if (payload.len() as u64) < expected {
        return Err(Error::TruncatedPfm {
            path: path.to_path_buf(),
            offset: bytes.len() as u64,
            expected: pos as u64 + expected,
        });
    }
    let mut data = vec![0.0f32; width * height];
    for (i, chunk) in payload.chunks_exact(4).take(width * height).enumerate() {
        let raw = [chunk[0], chunk[1], chunk[2], chunk[3]];
        let v = if little_endian {
            f32::from_le_bytes(raw)
        } else {
            f32::from_be_bytes(raw)
        };
        let (file_row, x) = (i / width, i % width);
        data[(height - 1 - file_row) * width + x] = v;
    }
    ScoreMap::new(height, width, data)
}

pub fn read_pfm(path: impl AsRef<Path>) -> Result<ScoreMap> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_pfm(&bytes, path)
}

pub fn read_sidecar(pfm_path: impl AsRef<Path>) -> Result<PfmSidecar> {
    let side = sidecar_path(pfm_path.as_ref());
    let text = fs::read_to_string(&side).map_err(|e| Error::io(&side, e))?;
    serde_json::from_str(&text).map_err(|e| Error::json(&side, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn header_defines_width_then_height() {
        let mut bytes = b"Pf\n5 7\n-1.0\n".to_vec();
        for i in 0..35u32 {
            bytes.extend_from_slice(&(i as f32).to_le_bytes());
        }
        let map = decode_pfm(&bytes, Path::new("mem")).unwrap();
        assert_eq!((map.width(), map.height()), (5, 7));
        // first stored row is the bottom row
        assert_eq!(map.get(6, 0), 0.0);
        assert_eq!(map.get(0, 0), 30.0);
    }

    #[test]
    fn big_endian_files_are_accepted() {
        let mut bytes = b"Pf\n2 1\n1.0\n".to_vec();
        bytes.extend_from_slice(&0.25f32.to_be_bytes());
        bytes.extend_from_slice(&0.75f32.to_be_bytes());
        let map = decode_pfm(&bytes, Path::new("mem")).unwrap();
        assert_eq!(map.data(), &[0.25, 0.75]);
    }

    #[test]
    fn truncated_payload_reports_offset() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.pfm");
        let map = ScoreMap::filled(7, 5, 0.5);
        let mut bytes = encode_pfm(&map);
        bytes.truncate(bytes.len() - 10);
        fs::write(&path, &bytes).unwrap();
        match read_pfm(&path) {
            Err(Error::TruncatedPfm {
                offset, expected, ..
            }) => {
                assert_eq!(offset, bytes.len() as u64);
                assert_eq!(expected, bytes.len() as u64 + 10);
            }
            other => panic!("expected truncation error, got {other:?}"),
        }
    }

    #[test]
    fn malformed_headers_are_rejected() {
        for bad in [&b"PF\n1 1\n-1.0\n0000"[..], b"Pf\nx 1\n-1.0\n0000", b"Pf\n1"] {
            assert!(matches!(
                decode_pfm(bad, Path::new("mem")),
                Err(Error::MalformedPfm { .. })
            ));
        }
    }

    #[test]
    fn sidecar_is_written_alongside() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r000.pfm");
        let map = ScoreMap::filled(3, 4, 0.25);
        write_pfm_with_sidecar(&map, &path, "queries/r000.png", "ssim_target").unwrap();
        let side = read_sidecar(&path).unwrap();
        assert_eq!((side.height, side.width), (3, 4));
        assert_eq!(side.kind, "ssim_target");
        assert_eq!(read_pfm(&path).unwrap(), map);
    }

    proptest! {
        #[test]
        fn round_trip_is_bit_exact(values in prop::collection::vec(any::<f32>().prop_filter("finite", |v| v.is_finite()), 35)) {
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("m.pfm");
            let map = ScoreMap::new(7, 5, values).unwrap();
            write_pfm(&map, &path).unwrap();
            let back = read_pfm(&path).unwrap();
            let a: Vec<u32> = map.data().iter().map(|v| v.to_bits()).collect();
            let b: Vec<u32> = back.data().iter().map(|v| v.to_bits()).collect();
            prop_assert_eq!(a, b);
        }
    }
}
