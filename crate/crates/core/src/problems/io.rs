//! Binary matrix container used to store generated instances.
//!
//! Layout: the 8-byte magic `SOLMAT01`, the row and column counts as
//! little-endian `u64`, then `rows * cols` little-endian `f64` in row-major
//! order.

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::linalg::Mat;

pub const MAGIC: &[u8; 8] = b"SOLMAT01";

pub fn write_matrix<W: Write>(mut out: W, m: &Mat) -> Result<()> {
    out.write_all(MAGIC)?;
    out.write_all(&(m.nrows() as u64).to_le_bytes())?;
    out.write_all(&(m.ncols() as u64).to_le_bytes())?;
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            out.write_all(&m[(i, j)].to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_matrix<R: Read>(mut input: R) -> Result<Mat> {
    let mut magic = [0u8; 8];
    input.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format("bad magic".into()));
    }
    let mut word = [0u8; 8];
    input.read_exact(&mut word)?;
    let rows = usize::try_from(u64::from_le_bytes(word)).map_err(|_| Error::Format("row count overflows".into()))?;
    input.read_exact(&mut word)?;
    let cols = usize::try_from(u64::from_le_bytes(word)).map_err(|_| Error::Format("column count overflows".into()))?;
    let len = rows
        .checked_mul(cols)
        .ok_or_else(|| Error::Format("matrix size overflows".into()))?;
    let mut values = Vec::with_capacity(len.min(1 << 24));
    for _ in 0..len {
        input.read_exact(&mut word).map_err(|e| match e.kind() {
            std::io::ErrorKind::UnexpectedEof => Error::Format("truncated payload".into()),
            _ => Error::Io(e),
        })?;
        values.push(f64::from_le_bytes(word));
    }
    Ok(Mat::from_row_slice(rows, cols, &values))
}

/// Serialized bytes of `m`, used for instance hashing.
pub fn to_bytes(m: &Mat) -> Vec<u8> {
    let mut buf = Vec::with_capacity(24 + 8 * m.len());
    write_matrix(&mut buf, m).expect("writing to a Vec cannot fail");
    buf
}
