//! `FMAT` binary matrix files.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! 0   8  magic "MLCDMAT1"
//! 8   4  rows (u32)
//! 12  4  cols (u32)
//! 16  1  normalized flag (0 or 1)
//! 17  3  reserved, zero
//! 20  .. rows*cols f32
//! ```

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::FeatureMatrix;

pub const MAGIC: &[u8; 8] = b"MLCDMAT1";
pub const HEADER_LEN: usize = 20;

pub fn write_fmat<W: Write>(mut w: W, m: &FeatureMatrix) -> io::Result<()> {
    let rows = u32::try_from(m.rows()).map_err(|_| io::Error::other("row count exceeds u32"))?;
    let cols = u32::try_from(m.cols()).map_err(|_| io::Error::other("col count exceeds u32"))?;
    w.write_all(MAGIC)?;
    w.write_all(&rows.to_le_bytes())?;
    w.write_all(&cols.to_le_bytes())?;
    w.write_all(&[m.is_normalized() as u8, 0, 0, 0])?;
    for v in m.as_slice() {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()
}

/// Reads an FMAT stream. Errors carry a plain reason string; the path-aware
/// wrappers attach the file name.
pub fn read_fmat<R: Read>(mut r: R) -> std::result::Result<FeatureMatrix, String> {
    let mut header = [0u8; HEADER_LEN];
    r.read_exact(&mut header)
        .map_err(|_| "truncated header".to_string())?;
    if &header[..8] != MAGIC {
        return Err("bad magic bytes (expected MLCDMAT1)".into());
    }
    let rows = u32::from_le_bytes(header[8..12].try_into().unwrap()) as usize;
    let cols = u32::from_le_bytes(header[12..16].try_into().unwrap()) as usize;
    let normalized = match header[16] {
        0 => false,
        1 => true,
        f => return Err(format!("invalid normalized flag {f}")),
    };
    if header[17..20] != [0, 0, 0] {
        return Err("reserved header bytes are not zero".into());
    }
    let count = rows
        .checked_mul(cols)
        .ok_or_else(|| "matrix size overflows".to_string())?;
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes).map_err(|e| e.to_string())?;
    if bytes.len() != count * 4 {
        return Err(format!(
            "payload has {} bytes, expected {} for {rows}x{cols}",
            bytes.len(),
            count * 4
        ));
    }
    let data: Vec<f32> = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let m = if normalized {
        FeatureMatrix::new_normalized(rows, cols, data)
    } else {
        FeatureMatrix::new(rows, cols, data)
    };
    m.map_err(|e| e.to_string())
}

pub fn save_fmat(path: &Path, m: &FeatureMatrix) -> Result<()> {
    let f = File::create(path)?;
    write_fmat(BufWriter::new(f), m)?;
    Ok(())
}

pub fn load_fmat(path: &Path) -> Result<FeatureMatrix> {
    let f = File::open(path).map_err(|e| Error::Format {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    read_fmat(BufReader::new(f)).map_err(|reason| Error::Format {
        path: path.to_path_buf(),
        reason,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_layout_is_exact() {
        let m = FeatureMatrix::new_normalized(1, 2, vec![0.6, 0.8]).unwrap();
        let mut buf = Vec::new();
        write_fmat(&mut buf, &m).unwrap();
        assert_eq!(&buf[..8], b"MLCDMAT1");
        assert_eq!(&buf[8..12], &1u32.to_le_bytes());
        assert_eq!(&buf[12..16], &2u32.to_le_bytes());
        assert_eq!(&buf[16..20], &[1, 0, 0, 0]);
        assert_eq!(&buf[20..24], &0.6f32.to_le_bytes());
        assert_eq!(buf.len(), HEADER_LEN + 8);
        assert_eq!(read_fmat(&buf[..]).unwrap(), m);
    }

    #[test]
    fn rejects_bad_magic_and_truncation() {
        let m = FeatureMatrix::new(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let mut buf = Vec::new();
        write_fmat(&mut buf, &m).unwrap();
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(read_fmat(&bad[..]).unwrap_err().contains("magic"));
        assert!(read_fmat(&buf[..buf.len() - 1]).is_err());
        assert!(read_fmat(&buf[..10]).is_err());
    }

    #[test]
    fn normalized_flag_is_verified_on_read() {
        let m = FeatureMatrix::new(1, 2, vec![1.0, 1.0]).unwrap();
        let mut buf = Vec::new();
        write_fmat(&mut buf, &m).unwrap();
        buf[16] = 1;
        assert!(read_fmat(&buf[..]).is_err());
    }
}
