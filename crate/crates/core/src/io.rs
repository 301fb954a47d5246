//! Binary matrix files.
//!
//! `SYMF/1` holds a dense symmetric matrix:
//!
//! ```text
//! b"SYMF" | u32 version = 1 | u64 n | n*n f64, column-major
//! ```
//!
//! `TRID/1` holds a tridiagonal matrix:
//!
//! ```text
//! b"TRID" | u32 version = 1 | u64 n | n f64 diagonal | n-1 f64 subdiagonal
//! ```
//!
//! All integers and floats are little-endian.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::matrix::{SymmetricMatrix, TridiagonalMatrix};

pub const SYMF_MAGIC: &[u8; 4] = b"SYMF";
pub const TRID_MAGIC: &[u8; 4] = b"TRID";
pub const FORMAT_VERSION: u32 = 1;

// Refuse headers that would need more than this many f64 values (2 GiB payload).
const MAX_VALUES: u64 = 1 << 28;

fn format_err<T>(kind: &'static str, reason: impl Into<String>) -> Result<T> {
    Err(Error::Format { kind, reason: reason.into() })
}

fn write_header<W: Write>(w: &mut W, magic: &[u8; 4], n: usize) -> Result<()> {
    w.write_all(magic)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes())?;
    w.write_all(&(n as u64).to_le_bytes())?;
    Ok(())
}

fn read_exact_or<R: Read>(r: &mut R, buf: &mut [u8], kind: &'static str, what: &str) -> Result<()> {
    match r.read_exact(buf) {
        Ok(()) => Ok(()),
        Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => format_err(kind, format!("truncated {what}")),
        Err(e) => Err(e.into()),
    }
}

fn read_header<R: Read>(r: &mut R, magic: &[u8; 4], kind: &'static str) -> Result<u64> {
    let mut m = [0u8; 4];
    read_exact_or(r, &mut m, kind, "magic")?;
    if &m != magic {
        return format_err(kind, format!("bad magic {m:?}"));
    }
    let mut v = [0u8; 4];
    read_exact_or(r, &mut v, kind, "version")?;
    let version = u32::from_le_bytes(v);
    if version != FORMAT_VERSION {
        return format_err(kind, format!("unsupported version {version}"));
    }
    let mut nb = [0u8; 8];
    read_exact_or(r, &mut nb, kind, "dimension")?;
    let n = u64::from_le_bytes(nb);
    if n == 0 {
        return format_err(kind, "dimension is zero");
    }
    Ok(n)
}

fn read_f64s<R: Read>(r: &mut R, count: usize, kind: &'static str, what: &str) -> Result<Vec<f64>> {
    let mut bytes = vec![0u8; count * 8];
    read_exact_or(r, &mut bytes, kind, what)?;
    let vals: Vec<f64> = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    if let Some(pos) = vals.iter().position(|x| !x.is_finite()) {
        return format_err(kind, format!("non-finite value in {what} at index {pos}"));
    }
    Ok(vals)
}

fn expect_eof<R: Read>(r: &mut R, kind: &'static str) -> Result<()> {
    let mut probe = [0u8; 1];
    match r.read(&mut probe)? {
        0 => Ok(()),
        _ => format_err(kind, "trailing bytes after payload"),
    }
}

pub fn write_symf<W: Write>(mut w: W, a: &SymmetricMatrix) -> Result<()> {
    write_header(&mut w, SYMF_MAGIC, a.n())?;
    for x in a.data() {
        w.write_all(&x.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a `SYMF/1` stream. The payload must be exactly symmetric and finite.
pub fn read_symf<R: Read>(mut r: R) -> Result<SymmetricMatrix> {
    const KIND: &str = "SYMF";
    let n = read_header(&mut r, SYMF_MAGIC, KIND)?;
    let count = n.checked_mul(n).filter(|&c| c <= MAX_VALUES);
    let Some(count) = count else {
        return format_err(KIND, format!("dimension {n} is too large"));
    };
    let data = read_f64s(&mut r, count as usize, KIND, "matrix payload")?;
    expect_eof(&mut r, KIND)?;
    let n = n as usize;
    for j in 0..n {
        for i in j + 1..n {
            if data[i + j * n] != data[j + i * n] {
                return format_err(KIND, format!("matrix is not symmetric at ({i}, {j})"));
            }
        }
    }
    SymmetricMatrix::from_col_major(n, data)
}

pub fn write_trid<W: Write>(mut w: W, t: &TridiagonalMatrix) -> Result<()> {
    write_header(&mut w, TRID_MAGIC, t.n())?;
    for x in t.diagonal().iter().chain(t.subdiagonal()) {
        w.write_all(&x.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_trid<R: Read>(mut r: R) -> Result<TridiagonalMatrix> {
    const KIND: &str = "TRID";
    let n = read_header(&mut r, TRID_MAGIC, KIND)?;
    if n > MAX_VALUES / 2 {
        return format_err(KIND, format!("dimension {n} is too large"));
    }
    let n = n as usize;
    let d = read_f64s(&mut r, n, KIND, "diagonal")?;
    let e = read_f64s(&mut r, n - 1, KIND, "subdiagonal")?;
    expect_eof(&mut r, KIND)?;
    TridiagonalMatrix::new(d, e)
}

pub fn save_symf(path: impl AsRef<Path>, a: &SymmetricMatrix) -> Result<()> {
    write_symf(BufWriter::new(File::create(path)?), a)
}

pub fn load_symf(path: impl AsRef<Path>) -> Result<SymmetricMatrix> {
    read_symf(BufReader::new(File::open(path)?))
}

pub fn save_trid(path: impl AsRef<Path>, t: &TridiagonalMatrix) -> Result<()> {
    write_trid(BufWriter::new(File::create(path)?), t)
}

pub fn load_trid(path: impl AsRef<Path>) -> Result<TridiagonalMatrix> {
    read_trid(BufReader::new(File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::{make_symmetric, Distribution};
    use proptest::prelude::*;

    #[test]
    fn symf_layout_is_bit_exact() {
        let a = SymmetricMatrix::from_lower_fn(2, |i, j| (i * 10 + j) as f64).unwrap();
        let mut buf = Vec::new();
        write_symf(&mut buf, &a).unwrap();
        assert_eq!(&buf[0..4], b"SYMF");
        assert_eq!(&buf[4..8], &1u32.to_le_bytes());
        assert_eq!(&buf[8..16], &2u64.to_le_bytes());
        assert_eq!(buf.len(), 16 + 4 * 8);
        // column-major: (0,0), (1,0), (0,1), (1,1)
        let vals: Vec<f64> = buf[16..].chunks(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        assert_eq!(vals, vec![0.0, 10.0, 10.0, 11.0]);
    }

    #[test]
    fn trid_layout_is_bit_exact() {
        let t = TridiagonalMatrix::new(vec![1.0, 2.0, 3.0], vec![-4.0, 5.0]).unwrap();
        let mut buf = Vec::new();
        write_trid(&mut buf, &t).unwrap();
        assert_eq!(&buf[0..4], b"TRID");
        assert_eq!(&buf[8..16], &3u64.to_le_bytes());
        assert_eq!(buf.len(), 16 + 5 * 8);
        assert_eq!(read_trid(&buf[..]).unwrap(), t);
    }

    #[test]
    fn corrupted_inputs_are_rejected() {
        let a = make_symmetric(3, 1, Distribution::Uniform).unwrap();
        let mut good = Vec::new();
        write_symf(&mut good, &a).unwrap();

        let mut bad_magic = good.clone();
        bad_magic[0] = b'X';
        assert!(matches!(read_symf(&bad_magic[..]), Err(Error::Format { .. })));

        let mut bad_version = good.clone();
        bad_version[4] = 2;
        assert!(matches!(read_symf(&bad_version[..]), Err(Error::Format { .. })));

        let truncated = &good[..good.len() - 3];
        assert!(matches!(read_symf(truncated), Err(Error::Format { .. })));

        let mut trailing = good.clone();
        trailing.push(0);
        assert!(matches!(read_symf(&trailing[..]), Err(Error::Format { .. })));

        let mut asym = good.clone();
        // perturb entry (1, 0)
        asym[16 + 8] ^= 1;
        assert!(matches!(read_symf(&asym[..]), Err(Error::Format { .. })));

        let mut huge = good.clone();
        huge[8..16].copy_from_slice(&u64::MAX.to_le_bytes());
        assert!(matches!(read_symf(&huge[..]), Err(Error::Format { .. })));

        assert!(matches!(read_symf(&b"SY"[..]), Err(Error::Format { .. })));
    }

    proptest! {
        #[test]
        fn symf_round_trip(n in 1usize..12, seed in any::<u64>()) {
            let a = make_symmetric(n, seed, Distribution::Gaussian).unwrap();
            let mut buf = Vec::new();
            write_symf(&mut buf, &a).unwrap();
            prop_assert_eq!(read_symf(&buf[..]).unwrap(), a);
        }
    }
}
