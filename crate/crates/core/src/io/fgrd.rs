//! FGRD: `"FGRD"`, u32 version, u32 width, u32 height, u8 dtype
//! (0 real, 1 complex), f64 pitch, then row-major f32 samples (complex
//! interleaved re, im). Little-endian throughout.

use std::path::Path;

use num_complex::Complex64;

use super::{read_bytes, write_atomic};
use crate::error::{Error, Result};
use crate::numerics::{ComplexGrid, RealGrid};

pub const FGRD_MAGIC: &[u8; 4] = b"FGRD";
pub const FGRD_VERSION: u32 = 1;
pub const FGRD_HEADER_LEN: usize = 25;

const DTYPE_REAL: u8 = 0;
const DTYPE_COMPLEX: u8 = 1;

#[derive(Debug, Clone, PartialEq)]
pub enum StoredGrid {
    Real(RealGrid),
    Complex(ComplexGrid),
}

fn header(width: usize, height: usize, dtype: u8, pitch: f64, payload: usize) -> Result<Vec<u8>> {
    let dim = |v: usize, name: &str| {
        u32::try_from(v).map_err(|_| Error::Parameter(format!("grid {name} {v} does not fit in FGRD")))
    };
    let mut out = Vec::with_capacity(FGRD_HEADER_LEN + payload);
    out.extend_from_slice(FGRD_MAGIC);
    out.extend_from_slice(&FGRD_VERSION.to_le_bytes());
    out.extend_from_slice(&dim(width, "width")?.to_le_bytes());
    out.extend_from_slice(&dim(height, "height")?.to_le_bytes());
    out.push(dtype);
    out.extend_from_slice(&pitch.to_le_bytes());
    Ok(out)
}

pub fn encode_real(g: &RealGrid) -> Result<Vec<u8>> {
    let mut out = header(g.width(), g.height(), DTYPE_REAL, g.pitch(), g.len() * 4)?;
    for &v in g.data() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    Ok(out)
}

pub fn encode_complex(g: &ComplexGrid) -> Result<Vec<u8>> {
    let mut out = header(g.width(), g.height(), DTYPE_COMPLEX, g.pitch(), g.len() * 8)?;
    for v in g.data() {
        out.extend_from_slice(&(v.re as f32).to_le_bytes());
        out.extend_from_slice(&(v.im as f32).to_le_bytes());
    }
    Ok(out)
}

fn format_err(offset: usize, message: impl Into<String>) -> Error {
    Error::Format {
        offset: offset as u64,
        message: message.into(),
    }
}

fn u32_at(b: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(b[at..at + 4].try_into().unwrap())
}

pub fn decode_grid(b: &[u8]) -> Result<StoredGrid> {
    if b.len() < FGRD_HEADER_LEN {
        return Err(format_err(
            b.len(),
            format!("truncated header: {} of {FGRD_HEADER_LEN} bytes", b.len()),
        ));
    }
    if &b[0..4] != FGRD_MAGIC {
        return Err(format_err(0, "bad magic, not an FGRD file"));
    }
    let version = u32_at(b, 4);
    if version != FGRD_VERSION {
        return Err(format_err(4, format!("unsupported version {version}")));
    }
    let width = u32_at(b, 8) as usize;
    if width == 0 {
        return Err(format_err(8, "width is 0"));
    }
    let height = u32_at(b, 12) as usize;
    if height == 0 {
        return Err(format_err(12, "height is 0"));
    }
    let dtype = b[16];
    let sample = match dtype {
        DTYPE_REAL => 4,
        DTYPE_COMPLEX => 8,
        other => return Err(format_err(16, format!("unknown dtype {other}"))),
    };
    let pitch = f64::from_le_bytes(b[17..25].try_into().unwrap());
    if !(pitch > 0.0 && pitch.is_finite()) {
        return Err(format_err(17, format!("pitch must be > 0, got {pitch}")));
    }
    let expected = width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(sample))
        .ok_or_else(|| format_err(8, "payload size overflows"))?;
    let payload = &b[FGRD_HEADER_LEN..];
    if payload.len() < expected {
        return Err(format_err(
            b.len(),
            format!("truncated payload: expected {expected} bytes, found {}", payload.len()),
        ));
    }
    if payload.len() > expected {
        return Err(format_err(
            FGRD_HEADER_LEN + expected,
            format!("{} trailing bytes after payload", payload.len() - expected),
        ));
    }
    let f = |c: &[u8]| f32::from_le_bytes(c.try_into().unwrap()) as f64;
    Ok(match dtype {
        DTYPE_REAL => StoredGrid::Real(RealGrid::new(width, height, pitch, payload.chunks_exact(4).map(f).collect())?),
        _ => StoredGrid::Complex(ComplexGrid::new(
            width,
            height,
            pitch,
            payload
                .chunks_exact(8)
                .map(|c| Complex64::new(f(&c[..4]), f(&c[4..])))
                .collect(),
        )?),
    })
}

pub fn save_real_grid(g: &RealGrid, path: &Path) -> Result<()> {
    write_atomic(path, &encode_real(g)?)
}

pub fn save_complex_grid(g: &ComplexGrid, path: &Path) -> Result<()> {
    write_atomic(path, &encode_complex(g)?)
}

pub fn load_grid(path: &Path) -> Result<StoredGrid> {
    decode_grid(&read_bytes(path)?).map_err(|e| match e {
        Error::Format { offset, message } => Error::Format {
            offset,
            message: format!("{}: {message}", path.display()),
        },
        other => other,
    })
}

pub fn load_real_grid(path: &Path) -> Result<RealGrid> {
    match load_grid(path)? {
        StoredGrid::Real(g) => Ok(g),
        StoredGrid::Complex(_) => Err(format_err(16, format!("{}: expected a real grid", path.display()))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_real(w: usize, h: usize) -> RealGrid {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        RealGrid::from_fn(w, h, 3.45e-6, |_, _| rng.random::<f64>() * 200.0 - 100.0).unwrap()
    }

    #[test]
    fn real_round_trip_within_f32() {
        let g = random_real(16, 8);
        let StoredGrid::Real(back) = decode_grid(&encode_real(&g).unwrap()).unwrap() else {
            panic!("dtype changed");
        };
        assert_eq!((back.width(), back.height(), back.pitch()), (16, 8, 3.45e-6));
        for (a, b) in g.data().iter().zip(back.data()) {
            assert_eq!(*b, *a as f32 as f64);
        }
    }

    #[test]
    fn complex_header_layout() {
        let g = ComplexGrid::from_fn(3, 2, 0.5, |x, y| Complex64::new(x as f64, -(y as f64))).unwrap();
        let b = encode_complex(&g).unwrap();
        assert_eq!(&b[0..4], b"FGRD");
        assert_eq!(b[4..8], [1, 0, 0, 0]);
        assert_eq!(b[8..12], [3, 0, 0, 0]);
        assert_eq!(b[12..16], [2, 0, 0, 0]);
        assert_eq!(b[16], 1);
        assert_eq!(b[17..25], 0.5f64.to_le_bytes());
        assert_eq!(b.len(), 25 + 3 * 2 * 8);
        // Sample (1, 1) = 1 − 1j sits at payload index 4.
        let at = 25 + 4 * 8;
        assert_eq!(b[at..at + 4], 1.0f32.to_le_bytes());
        assert_eq!(b[at + 4..at + 8], (-1.0f32).to_le_bytes());
        assert_eq!(decode_grid(&b).unwrap(), StoredGrid::Complex(g));
    }

    fn offset_of(r: Result<StoredGrid>) -> u64 {
        match r {
            Err(Error::Format { offset, .. }) => offset,
            other => panic!("expected a format error, got {other:?}"),
        }
    }

    #[test]
    fn corruption_is_reported_with_offsets() {
        let good = encode_real(&random_real(4, 4)).unwrap();
        assert_eq!(offset_of(decode_grid(&good[..10])), 10);
        assert_eq!(offset_of(decode_grid(&good[..good.len() - 3])), (good.len() - 3) as u64);
        let mut long = good.clone();
        long.push(0);
        assert_eq!(offset_of(decode_grid(&long)), good.len() as u64);
        let mut bad = good.clone();
        bad[0] = b'X';
        assert_eq!(offset_of(decode_grid(&bad)), 0);
        let mut bad = good.clone();
        bad[4] = 2;
        assert_eq!(offset_of(decode_grid(&bad)), 4);
        let mut bad = good.clone();
        bad[16] = 7;
        assert_eq!(offset_of(decode_grid(&bad)), 16);
        let mut bad = good;
        bad[17..25].copy_from_slice(&(-1.0f64).to_le_bytes());
        assert_eq!(offset_of(decode_grid(&bad)), 17);
    }

    #[test]
    fn file_round_trip_and_dtype_check() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("sub/g.fgrd");
        let g = random_real(8, 8);
        save_real_grid(&g, &p).unwrap();
        assert_eq!(load_real_grid(&p).unwrap().width(), 8);
        let c = ComplexGrid::from_real(&g);
        save_complex_grid(&c, &p).unwrap();
        assert!(matches!(load_real_grid(&p), Err(Error::Format { offset: 16, .. })));
        assert!(matches!(load_grid(&dir.path().join("none")), Err(Error::Io { .. })));
    }
}
