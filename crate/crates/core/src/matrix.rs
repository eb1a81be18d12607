//! Dense row-major matrices and the `SPLM` binary matrix file format.
//!
//! A matrix file is a 16-byte header followed by `rows * cols` little-endian
//! `f32` values in row-major order:
//!
//! ```text
//! offset  0: b"SPLM"
//! offset  4: version (u32, currently 1)
//! offset  8: rows    (u32)
//! offset 12: cols    (u32)
//! offset 16: data
//! ```
//!
//! Values are widened to `f64` in memory.

use std::io::{Read, Write};
use std::ops::{Deref, Range};
use std::path::Path;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"SPLM";
pub const VERSION: u32 = 1;
pub const HEADER_LEN: usize = 16;

#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape(format!(
                "{} values cannot fill a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, row) in rows.iter().enumerate() {
            let row = row.as_ref();
            if row.len() != cols {
                return Err(Error::Shape(format!(
                    "row {i} has {} columns, expected {cols}",
                    row.len()
                )));
            }
            data.extend_from_slice(row);
        }
        Ok(Matrix {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        self.data[i * self.cols + j] = value;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn slice_rows(&self, range: Range<usize>) -> Result<Matrix> {
        if range.start > range.end || range.end > self.rows {
            return Err(Error::Shape(format!(
                "row range {range:?} out of bounds for {} rows",
                self.rows
            )));
        }
        Ok(Matrix {
            rows: range.len(),
            cols: self.cols,
            data: self.data[range.start * self.cols..range.end * self.cols].to_vec(),
        })
    }

    pub fn select_columns(&self, columns: &[usize]) -> Result<Matrix> {
        if let Some(&bad) = columns.iter().find(|&&c| c >= self.cols) {
            return Err(Error::Shape(format!(
                "column {bad} out of bounds for {} columns",
                self.cols
            )));
        }
        let mut data = Vec::with_capacity(self.rows * columns.len());
        for i in 0..self.rows {
            let row = self.row(i);
            data.extend(columns.iter().map(|&c| row[c]));
        }
        Ok(Matrix {
            rows: self.rows,
            cols: columns.len(),
            data,
        })
    }

    pub fn write_to<W: Write>(&self, mut writer: W) -> std::io::Result<()> {
        let mut header = [0u8; HEADER_LEN];
        header[..4].copy_from_slice(MAGIC);
        header[4..8].copy_from_slice(&VERSION.to_le_bytes());
        header[8..12].copy_from_slice(&(self.rows as u32).to_le_bytes());
        header[12..16].copy_from_slice(&(self.cols as u32).to_le_bytes());
        writer.write_all(&header)?;
        let mut buf = Vec::with_capacity(self.data.len() * 4);
        for v in &self.data {
            buf.extend_from_slice(&(*v as f32).to_le_bytes());
        }
        writer.write_all(&buf)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut writer = std::io::BufWriter::new(file);
        self.write_to(&mut writer)
            .and_then(|_| writer.flush())
            .map_err(|e| Error::io(path, e))
    }

    /// Decodes a complete matrix file image. `path` is only used for error
    /// messages.
    pub fn decode(bytes: &[u8], path: &Path) -> Result<Matrix> {
        let fail = |message: String| Error::MatrixFormat {
            path: path.to_path_buf(),
            message,
        };
        if bytes.len() < HEADER_LEN {
            return Err(fail(format!(
                "{} bytes is shorter than the header",
                bytes.len()
            )));
        }
        if &bytes[..4] != MAGIC {
            return Err(fail("bad magic".to_string()));
        }
        let word = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap());
        let version = word(4);
        if version != VERSION {
            return Err(fail(format!("unsupported version {version}")));
        }
        let rows = word(8) as usize;
        let cols = word(12) as usize;
        let body = &bytes[HEADER_LEN..];
        let expected = rows
            .checked_mul(cols)
            .and_then(|n| n.checked_mul(4))
            .ok_or_else(|| fail(format!("{rows}x{cols} overflows")))?;
        if body.len() != expected {
            return Err(fail(format!(
                "{rows}x{cols} needs {expected} data bytes, found {}",
                body.len()
            )));
        }
        let data: Vec<f64> = body
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect();
        if data.iter().any(|v| !v.is_finite()) {
            return Err(fail("non-finite value".to_string()));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Matrix> {
        let path = path.as_ref();
        let mut bytes = Vec::new();
        std::fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| Error::io(path, e))?;
        Self::decode(&bytes, path)
    }
}

macro_rules! matrix_newtype {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Debug, Clone, PartialEq)]
        pub struct $name(Matrix);

        impl $name {
            /// Wraps `matrix`, rejecting non-finite values.
            pub fn new(matrix: Matrix) -> Result<Self> {
                if !matrix.is_finite() {
                    return Err(Error::Shape(format!(
                        "{} contains non-finite values",
                        stringify!($name)
                    )));
                }
                Ok($name(matrix))
            }

            pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
                Self::new(Matrix::from_rows(rows)?)
            }

            pub fn matrix(&self) -> &Matrix {
                &self.0
            }

            pub fn into_matrix(self) -> Matrix {
                self.0
            }

            pub fn load(path: impl AsRef<Path>) -> Result<Self> {
                Matrix::load(path).map($name)
            }
        }

        impl Deref for $name {
            type Target = Matrix;

            fn deref(&self) -> &Matrix {
                &self.0
            }
        }
    };
}

matrix_newtype!(
    /// Encoder output `H`: one `d`-dimensional row per subword.
    FeatureMatrix
);
matrix_newtype!(
    /// Head weights `W` with shape `d x KB`; column order follows the
    /// entity vocabulary.
    HeadWeights
);
matrix_newtype!(
    /// Unnormalized per-subword scores, shape `n x KB`.
    LogitMatrix
);

impl HeadWeights {
    pub fn dim(&self) -> usize {
        self.rows()
    }

    pub fn vocab_size(&self) -> usize {
        self.cols()
    }

    pub(crate) fn matrix_mut(&mut self) -> &mut Matrix {
        &mut self.0
    }
}

impl LogitMatrix {
    pub fn vocab_size(&self) -> usize {
        self.cols()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn header_layout() {
        let m = Matrix::from_rows(&[[1.0, 2.0, 3.0]]).unwrap();
        let mut bytes = Vec::new();
        m.write_to(&mut bytes).unwrap();
        assert_eq!(&bytes[..4], b"SPLM");
        assert_eq!(&bytes[4..16], &[1, 0, 0, 0, 1, 0, 0, 0, 3, 0, 0, 0]);
        assert_eq!(&bytes[16..20], &1.0f32.to_le_bytes());
        assert_eq!(bytes.len(), 16 + 12);
    }

    #[test]
    fn decode_rejects_bad_files() {
        let p = Path::new("m.splm");
        assert!(Matrix::decode(b"SPL", p).is_err());
        assert!(Matrix::decode(b"XXXX\x01\0\0\0\0\0\0\0\0\0\0\0", p).is_err());
        assert!(Matrix::decode(b"SPLM\x02\0\0\0\0\0\0\0\0\0\0\0", p).is_err());
        // 1x1 declared, no data
        assert!(Matrix::decode(b"SPLM\x01\0\0\0\x01\0\0\0\x01\0\0\0", p).is_err());
        let empty = Matrix::decode(b"SPLM\x01\0\0\0\0\0\0\0\x05\0\0\0", p).unwrap();
        assert_eq!((empty.rows(), empty.cols()), (0, 5));
    }

    #[test]
    fn column_selection_and_row_slicing() {
        let m = Matrix::from_rows(&[[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]]).unwrap();
        assert_eq!(
            m.select_columns(&[2, 0]).unwrap().as_slice(),
            &[3.0, 1.0, 6.0, 4.0]
        );
        assert_eq!(m.slice_rows(1..2).unwrap().as_slice(), &[4.0, 5.0, 6.0]);
        assert!(m.select_columns(&[3]).is_err());
        assert!(m.slice_rows(1..3).is_err());
    }

    #[test]
    fn newtypes_reject_non_finite() {
        assert!(LogitMatrix::from_rows(&[[f64::NAN]]).is_err());
        assert!(HeadWeights::from_rows(&[[f64::INFINITY]]).is_err());
    }

    proptest! {
        #[test]
        fn file_round_trip(rows in 0usize..6, cols in 1usize..6, seed in prop::collection::vec(-1e6f32..1e6, 36)) {
            let data: Vec<f64> = seed.iter().take(rows * cols).map(|&v| v as f64).collect();
            let m = Matrix::from_vec(rows, cols, data).unwrap();
            let mut bytes = Vec::new();
            m.write_to(&mut bytes).unwrap();
            prop_assert_eq!(Matrix::decode(&bytes, Path::new("m")).unwrap(), m);
        }
    }
}
