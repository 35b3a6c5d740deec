//! Raw echo files (SARE), float image files (SARF), and 16-bit PGM export.
//!
//! SARE: `b"SARE" | u32 version | u32 rows | u32 cols | u32 json_len | radar
//! config JSON | f64 LE (re, im) pairs row-major | u32 crc32 of all prior bytes`.
//!
//! SARF: `b"SARF" | u32 version | u32 rows | u32 cols | f64 LE pixels
//! row-major | u32 crc32 of all prior bytes`.

use std::fs;
use std::path::Path;

use thiserror::Error;

use crate::numerics::{Complex64, ComplexMatrix, RealMatrix};
use crate::sim::{RadarConfig, RawEcho};

const ECHO_MAGIC: &[u8; 4] = b"SARE";
const IMAGE_MAGIC: &[u8; 4] = b"SARF";
const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("{path}: {reason}")]
    Invalid { path: String, reason: String },
}

fn invalid(path: &Path, reason: impl Into<String>) -> FormatError {
    FormatError::Invalid {
        path: path.display().to_string(),
        reason: reason.into(),
    }
}

fn push_u32(buf: &mut Vec<u8>, v: u32) {
    buf.extend_from_slice(&v.to_le_bytes());
}

fn seal(mut buf: Vec<u8>) -> Vec<u8> {
    let crc = crc32fast::hash(&buf);
    push_u32(&mut buf, crc);
    buf
}

/// Strips and verifies the trailing CRC, then checks magic and version.
fn unseal<'a>(bytes: &'a [u8], magic: &[u8; 4], path: &Path) -> Result<&'a [u8], FormatError> {
    if bytes.len() < 12 {
        return Err(invalid(path, "file truncated"));
    }
    if &bytes[..4] != magic {
        return Err(invalid(path, format!("expected {} magic", String::from_utf8_lossy(magic))));
    }
    let (body, crc) = bytes.split_at(bytes.len() - 4);
    if crc32fast::hash(body) != u32::from_le_bytes(crc.try_into().unwrap()) {
        return Err(invalid(path, "checksum mismatch"));
    }
    let version = u32::from_le_bytes(body[4..8].try_into().unwrap());
    if version != VERSION {
        return Err(invalid(path, format!("unsupported version {version}")));
    }
    Ok(&body[8..])
}

fn read_u32(body: &[u8], at: &mut usize, path: &Path) -> Result<u32, FormatError> {
    let s = body.get(*at..*at + 4).ok_or_else(|| invalid(path, "file truncated"))?;
    *at += 4;
    Ok(u32::from_le_bytes(s.try_into().unwrap()))
}

fn read_f64s(body: &[u8], at: usize, n: usize, path: &Path) -> Result<Vec<f64>, FormatError> {
    let s = &body[at..];
    if s.len() != n * 8 {
        return Err(invalid(path, format!("expected {} payload bytes, found {}", n * 8, s.len())));
    }
    Ok(s.chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

pub fn write_echo(path: &Path, echo: &RawEcho) -> Result<(), FormatError> {
    let json = serde_json::to_vec(&echo.config).expect("radar config serializes");
    let (rows, cols) = echo.samples.dims();
    let mut buf = Vec::with_capacity(20 + json.len() + rows * cols * 16 + 4);
    buf.extend_from_slice(ECHO_MAGIC);
    push_u32(&mut buf, VERSION);
    push_u32(&mut buf, rows as u32);
    push_u32(&mut buf, cols as u32);
    push_u32(&mut buf, json.len() as u32);
    buf.extend_from_slice(&json);
    for z in echo.samples.data() {
        buf.extend_from_slice(&z.re.to_le_bytes());
        buf.extend_from_slice(&z.im.to_le_bytes());
    }
    fs::write(path, seal(buf))?;
    Ok(())
}

pub fn read_echo(path: &Path) -> Result<RawEcho, FormatError> {
    let bytes = fs::read(path)?;
    let body = unseal(&bytes, ECHO_MAGIC, path)?;
    let mut at = 0;
    let rows = read_u32(body, &mut at, path)? as usize;
    let cols = read_u32(body, &mut at, path)? as usize;
    let json_len = read_u32(body, &mut at, path)? as usize;
    let json = body
        .get(at..at + json_len)
        .ok_or_else(|| invalid(path, "file truncated"))?;
    let config: RadarConfig =
        serde_json::from_slice(json).map_err(|e| invalid(path, format!("radar config: {e}")))?;
    at += json_len;
    let v = read_f64s(body, at, rows * cols * 2, path)?;
    if (rows, cols) != (config.n_azimuth, config.n_range) {
        return Err(invalid(path, "sample dimensions disagree with radar config"));
    }
    let data = v.chunks_exact(2).map(|c| Complex64::new(c[0], c[1])).collect();
    Ok(RawEcho {
        samples: ComplexMatrix::from_vec(rows, cols, data).expect("sized from header"),
        config,
    })
}

pub fn write_image(path: &Path, img: &RealMatrix) -> Result<(), FormatError> {
    let (rows, cols) = img.dims();
    let mut buf = Vec::with_capacity(16 + rows * cols * 8 + 4);
    buf.extend_from_slice(IMAGE_MAGIC);
    push_u32(&mut buf, VERSION);
    push_u32(&mut buf, rows as u32);
    push_u32(&mut buf, cols as u32);
    for v in img.data() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, seal(buf))?;
    Ok(())
}

pub fn read_image(path: &Path) -> Result<RealMatrix, FormatError> {
    let bytes = fs::read(path)?;
    let body = unseal(&bytes, IMAGE_MAGIC, path)?;
    let mut at = 0;
    let rows = read_u32(body, &mut at, path)? as usize;
    let cols = read_u32(body, &mut at, path)? as usize;
    let v = read_f64s(body, at, rows * cols, path)?;
    Ok(RealMatrix::from_vec(rows, cols, v).expect("sized from header"))
}

/// Pixels mapped to 16 bits: `lo` to 0 and `hi` to 65535, clamped.
pub fn quantize_u16(img: &RealMatrix, lo: f64, hi: f64) -> Vec<u16> {
    let span = if hi > lo { hi - lo } else { 1.0 };
    img.data()
        .iter()
        .map(|&v| (((v - lo) / span).clamp(0.0, 1.0) * 65535.0).round() as u16)
        .collect()
}

/// Binary 16-bit PGM (big-endian samples), stretched over the image's own range.
pub fn write_pgm16(path: &Path, img: &RealMatrix) -> Result<(), FormatError> {
    let (rows, cols) = img.dims();
    let mut buf = format!("P5\n{cols} {rows}\n65535\n").into_bytes();
    for q in quantize_u16(img, img.min(), img.max()) {
        buf.extend_from_slice(&q.to_be_bytes());
    }
    fs::write(path, buf)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Prng;

    #[test]
    fn echo_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let config = RadarConfig {
            n_azimuth: 8,
            n_range: 16,
            ..RadarConfig::default()
        };
        let mut p = Prng::new(1);
        let samples = ComplexMatrix::from_fn(8, 16, |_, _| Complex64::new(p.normal(), p.normal()));
        let echo = RawEcho { samples, config };
        let path = dir.path().join("e.sare");
        write_echo(&path, &echo).unwrap();
        assert_eq!(read_echo(&path).unwrap(), echo);

        let mut bytes = fs::read(&path).unwrap();
        bytes[40] ^= 1;
        fs::write(&path, &bytes).unwrap();
        assert!(matches!(read_echo(&path), Err(FormatError::Invalid { .. })));
        fs::write(&path, &bytes[..7]).unwrap();
        assert!(matches!(read_echo(&path), Err(FormatError::Invalid { .. })));
    }

    #[test]
    fn image_round_trip_and_wrong_magic() {
        let dir = tempfile::tempdir().unwrap();
        let img = RealMatrix::from_fn(3, 5, |i, j| (i * 5 + j) as f64 * 0.1);
        let path = dir.path().join("i.sarf");
        write_image(&path, &img).unwrap();
        assert_eq!(read_image(&path).unwrap(), img);
        assert!(read_echo(&path).is_err());
    }

    #[test]
    fn pgm_header_and_samples() {
        let dir = tempfile::tempdir().unwrap();
        let img = RealMatrix::from_vec(1, 3, vec![2.0, 3.0, 4.0]).unwrap();
        let path = dir.path().join("i.pgm");
        write_pgm16(&path, &img).unwrap();
        let bytes = fs::read(&path).unwrap();
        let header = b"P5\n3 1\n65535\n";
        assert_eq!(&bytes[..header.len()], header);
        assert_eq!(&bytes[header.len()..], &[0, 0, 0x80, 0, 0xff, 0xff]);
    }
}
