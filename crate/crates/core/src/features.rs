//! Dense node-feature matrices and their on-disk formats.
//!
//! Binary layout (little-endian): 4-byte magic `FSDX`, `n` and `F` as `u32`,
//! 4 bytes of zero padding, then `n * F` `f64` values in row-major order.
//! The text layout is headerless CSV with one node per row.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::graph::NodeMapping;

pub const FEATURE_MAGIC: [u8; 4] = *b"FSDX";

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    n: usize,
    f: usize,
    values: Vec<f64>,
}

impl FeatureMatrix {
    pub fn zeros(n: usize, f: usize) -> Self {
        Self {
            n,
            f,
            values: vec![0.0; n * f],
        }
    }

    /// Row-major values; all entries must be finite.
    pub fn from_vec(n: usize, f: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != n * f {
            return Err(Error::shape(format!("{} values", n * f), values.len()));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!(
                "non-finite feature at row {}, column {}",
                pos / f.max(1),
                pos % f.max(1)
            )));
        }
        Ok(Self { n, f, values })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let f = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().position(|r| r.len() != f) {
            return Err(Error::shape(format!("{f} columns"), format!("row {bad} with {}", rows[bad].len())));
        }
        Self::from_vec(rows.len(), f, rows.concat())
    }

    pub fn rows(&self) -> usize {
        self.n
    }

    pub fn cols(&self) -> usize {
        self.f
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.n, self.f)
    }

    #[inline]
    pub fn get(&self, i: usize, l: usize) -> f64 {
        self.values[i * self.f + l]
    }

    #[inline]
    pub fn set(&mut self, i: usize, l: usize, v: f64) {
        self.values[i * self.f + l] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.f..(i + 1) * self.f]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.values[i * self.f..(i + 1) * self.f]
    }

    pub fn column(&self, l: usize) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, l)).collect()
    }

    pub fn set_column(&mut self, l: usize, col: &[f64]) {
        for (i, &v) in col.iter().enumerate() {
            self.set(i, l, v);
        }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    /// Keeps the rows listed in `mapping.new_to_old`, in that order.
    pub fn select_rows(&self, mapping: &NodeMapping) -> FeatureMatrix {
        let mut values = Vec::with_capacity(mapping.new_to_old.len() * self.f);
        for &old in &mapping.new_to_old {
            values.extend_from_slice(self.row(old));
        }
        FeatureMatrix {
            n: mapping.new_to_old.len(),
            f: self.f,
            values,
        }
    }

    pub fn read(path: &Path) -> Result<Self> {
        let mut file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut magic = [0u8; 4];
        let is_binary = matches!(file.read_exact(&mut magic), Ok(()) if magic == FEATURE_MAGIC);
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        if is_binary {
            Self::read_binary(BufReader::new(file), &path.display().to_string())
        } else {
            Self::read_csv(BufReader::new(file), &path.display().to_string())
        }
    }

    pub fn read_csv<R: BufRead>(reader: R, source: &str) -> Result<Self> {
        let mut values = Vec::new();
        let mut f: Option<usize> = None;
        let mut n = 0;
        for (lineno, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| Error::io(source, e))?;
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let parse_err = |message: String| Error::Parse {
                path: source.to_string(),
                line: lineno + 1,
                message,
            };
            let before = values.len();
            for field in trimmed.split(',') {
                let field = field.trim();
                let v: f64 = field
                    .parse()
                    .map_err(|_| parse_err(format!("not a number: {field:?}")))?;
                if !v.is_finite() {
                    return Err(parse_err(format!("non-finite value {field:?}")));
                }
                values.push(v);
            }
            let width = values.len() - before;
            match f {
                None => f = Some(width),
                Some(w) if w != width => {
                    return Err(parse_err(format!("expected {w} columns, found {width}")))
                }
                _ => {}
            }
            n += 1;
        }
        Ok(Self {
            n,
            f: f.unwrap_or(0),
            values,
        })
    }

    pub fn read_binary<R: Read>(mut reader: R, source: &str) -> Result<Self> {
        let mut header = [0u8; 16];
        reader
            .read_exact(&mut header)
            .map_err(|e| Error::io(source, e))?;
        if header[..4] != FEATURE_MAGIC {
            return Err(Error::Parse {
                path: source.into(),
                line: 0,
                message: "bad feature file magic".into(),
            });
        }
        let n = u32::from_le_bytes(header[4..8].try_into().unwrap()) as usize;
        let f = u32::from_le_bytes(header[8..12].try_into().unwrap()) as usize;
        let mut bytes = Vec::with_capacity(n * f * 8);
        reader
            .read_to_end(&mut bytes)
            .map_err(|e| Error::io(source, e))?;
        if bytes.len() != n * f * 8 {
            return Err(Error::Parse {
                path: source.into(),
                line: 0,
                message: format!("payload has {} bytes, header implies {}", bytes.len(), n * f * 8),
            });
        }
        let values = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Self::from_vec(n, f, values)
    }

    pub fn write_binary<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let mut header = [0u8; 16];
        header[..4].copy_from_slice(&FEATURE_MAGIC);
        header[4..8].copy_from_slice(&(self.n as u32).to_le_bytes());
        header[8..12].copy_from_slice(&(self.f as u32).to_le_bytes());
        out.write_all(&header)?;
        for v in &self.values {
            out.write_all(&v.to_le_bytes())?;
        }
        out.flush()
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for i in 0..self.n {
            let row: Vec<String> = self.row(i).iter().map(|v| v.to_string()).collect();
            writeln!(out, "{}", row.join(","))?;
        }
        out.flush()
    }

    pub fn save_binary(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_binary(std::io::BufWriter::new(file))
            .map_err(|e| Error::io(path, e))
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(file))
            .map_err(|e| Error::io(path, e))
    }
}
