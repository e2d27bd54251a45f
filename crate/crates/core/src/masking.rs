//! Observation masks and the structural / uniform missingness protocols.
//!
//! Sampling draws from [`ChaCha8Rng`] seeded with `seed_from_u64(seed)` and
//! selects positions with `rand::seq::index::sample`, so a given
//! `(n, F, mr, seed)` produces the same mask on every platform.
//!
//! Binary layout (little-endian): 4-byte magic `FMSK`, `n` and `F` as `u32`,
//! then `n` rows of `ceil(F / 8)` bytes each. Bit `l % 8` of byte `l / 8` in a
//! row is set when channel `l` is observed.

use std::io::{Read, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureMatrix;
use crate::graph::NodeMapping;

pub const MASK_MAGIC: [u8; 4] = *b"FMSK";

/// Recorded in run reports next to every seed.
pub const PRNG_NAME: &str = "ChaCha8Rng (rand_chacha 0.9, seed_from_u64) + rand 0.9 seq::index::sample";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MissingMode {
    /// Whole rows are hidden.
    Structural,
    /// Individual entries are hidden.
    Uniform,
}

impl std::str::FromStr for MissingMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "structural" => Ok(MissingMode::Structural),
            "uniform" => Ok(MissingMode::Uniform),
            other => Err(Error::Param(format!("unknown missing mode {other:?}"))),
        }
    }
}

impl std::fmt::Display for MissingMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            MissingMode::Structural => "structural",
            MissingMode::Uniform => "uniform",
        })
    }
}

/// Binary observation matrix; `true` means observed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    n: usize,
    f: usize,
    bits: Vec<bool>,
}

fn round_half_up(x: f64) -> usize {
    (x + 0.5).floor() as usize
}

fn check_rate(mr: f64) -> Result<()> {
    if !(0.0..1.0).contains(&mr) {
        return Err(Error::Param(format!("missing rate must lie in [0, 1), got {mr}")));
    }
    Ok(())
}

/// Masks exactly `round(mr * n)` whole rows, chosen uniformly without
/// replacement.
pub fn generate_structural_mask(n: usize, f: usize, mr: f64, seed: u64) -> Result<Mask> {
    check_rate(mr)?;
    let k = round_half_up(mr * n as f64).min(n);
    if k == n {
        return Err(Error::Param(format!(
            "missing rate {mr} masks all {n} rows, leaving nothing observed"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut mask = Mask::all_observed(n, f);
    for row in rand::seq::index::sample(&mut rng, n, k) {
        mask.bits[row * f..(row + 1) * f].fill(false);
    }
    Ok(mask)
}

/// Masks exactly `round(mr * n * F)` entries, chosen uniformly without
/// replacement. Columns may end up fully masked.
pub fn generate_uniform_mask(n: usize, f: usize, mr: f64, seed: u64) -> Result<Mask> {
    check_rate(mr)?;
    let total = n * f;
    let k = round_half_up(mr * total as f64).min(total);
    if k == total {
        return Err(Error::Param(format!(
            "missing rate {mr} masks all {total} entries, leaving nothing observed"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut mask = Mask::all_observed(n, f);
    for pos in rand::seq::index::sample(&mut rng, total, k) {
        mask.bits[pos] = false;
    }
    Ok(mask)
}

pub fn generate_mask(mode: MissingMode, n: usize, f: usize, mr: f64, seed: u64) -> Result<Mask> {
    match mode {
        MissingMode::Structural => generate_structural_mask(n, f, mr, seed),
        MissingMode::Uniform => generate_uniform_mask(n, f, mr, seed),
    }
}

/// Elementwise `X ⊙ M`.
pub fn apply_mask(x: &FeatureMatrix, mask: &Mask) -> Result<FeatureMatrix> {
    mask.check_shape(x)?;
    let mut out = x.clone();
    for i in 0..mask.n {
        for l in 0..mask.f {
            if !mask.observed(i, l) {
                out.set(i, l, 0.0);
            }
        }
    }
    Ok(out)
}

impl Mask {
    pub fn all_observed(n: usize, f: usize) -> Self {
        Self {
            n,
            f,
            bits: vec![true; n * f],
        }
    }

    pub fn from_bits(n: usize, f: usize, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != n * f {
            return Err(Error::shape(format!("{} mask bits", n * f), bits.len()));
        }
        Ok(Self { n, f, bits })
    }

    pub fn rows(&self) -> usize {
        self.n
    }

    pub fn cols(&self) -> usize {
        self.f
    }

    #[inline]
    pub fn observed(&self, i: usize, l: usize) -> bool {
        self.bits[i * self.f + l]
    }

    pub fn check_shape(&self, x: &FeatureMatrix) -> Result<()> {
        if x.shape() != (self.n, self.f) {
            return Err(Error::shape(
                format!("{}x{} (mask)", self.n, self.f),
                format!("{}x{} (features)", x.rows(), x.cols()),
            ));
        }
        Ok(())
    }

    /// Observed flags of one channel, by node.
    pub fn column(&self, l: usize) -> Vec<bool> {
        (0..self.n).map(|i| self.observed(i, l)).collect()
    }

    /// Nodes whose channel `l` is observed, ascending.
    pub fn observed_nodes(&self, l: usize) -> Vec<usize> {
        (0..self.n).filter(|&i| self.observed(i, l)).collect()
    }

    pub fn row_fully_observed(&self, i: usize) -> bool {
        self.bits[i * self.f..(i + 1) * self.f].iter().all(|&b| b)
    }

    pub fn row_has_observed(&self, i: usize) -> bool {
        self.bits[i * self.f..(i + 1) * self.f].iter().any(|&b| b)
    }

    pub fn observed_count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn masked_count(&self) -> usize {
        self.bits.len() - self.observed_count()
    }

    pub fn row_counts(&self) -> Vec<usize> {
        (0..self.n)
            .map(|i| self.bits[i * self.f..(i + 1) * self.f].iter().filter(|&&b| b).count())
            .collect()
    }

    pub fn col_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.f];
        for i in 0..self.n {
            for (l, c) in counts.iter_mut().enumerate() {
                *c += usize::from(self.observed(i, l));
            }
        }
        counts
    }

    /// True when every row is either fully observed or fully masked.
    pub fn is_row_constant(&self) -> bool {
        (0..self.n).all(|i| {
            let row = &self.bits[i * self.f..(i + 1) * self.f];
            row.iter().all(|&b| b == row.first().copied().unwrap_or(true))
        })
    }

    pub fn select_rows(&self, mapping: &NodeMapping) -> Mask {
        let mut bits = Vec::with_capacity(mapping.new_to_old.len() * self.f);
        for &old in &mapping.new_to_old {
            bits.extend_from_slice(&self.bits[old * self.f..(old + 1) * self.f]);
        }
        Mask {
            n: mapping.new_to_old.len(),
            f: self.f,
            bits,
        }
    }

    fn row_bytes(&self) -> usize {
        self.f.div_ceil(8)
    }

    pub fn write_binary<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        out.write_all(&MASK_MAGIC)?;
        out.write_all(&(self.n as u32).to_le_bytes())?;
        out.write_all(&(self.f as u32).to_le_bytes())?;
        let mut row = vec![0u8; self.row_bytes()];
        for i in 0..self.n {
            row.fill(0);
            for l in 0..self.f {
                if self.observed(i, l) {
                    row[l / 8] |= 1 << (l % 8);
                }
            }
            out.write_all(&row)?;
        }
        out.flush()
    }

    pub fn read_binary<R: Read>(mut reader: R, source: &str) -> Result<Self> {
        let bad = |message: String| Error::Parse {
            path: source.into(),
            line: 0,
            message,
        };
        let mut header = [0u8; 12];
        reader
            .read_exact(&mut header)
            .map_err(|e| Error::io(source, e))?;
        if header[..4] != MASK_MAGIC {
            return Err(bad("bad mask file magic".into()));
        }
        let n = u32::from_le_bytes(header[4..8].try_into().unwrap()) as usize;
        let f = u32::from_le_bytes(header[8..12].try_into().unwrap()) as usize;
        let mut payload = Vec::new();
        reader
            .read_to_end(&mut payload)
            .map_err(|e| Error::io(source, e))?;
        let stride = f.div_ceil(8);
        if payload.len() != n * stride {
            return Err(bad(format!(
                "payload has {} bytes, header implies {}",
                payload.len(),
                n * stride
            )));
        }
        let mut bits = Vec::with_capacity(n * f);
        for row in payload.chunks_exact(stride.max(1)).take(n) {
            bits.extend((0..f).map(|l| row[l / 8] & (1 << (l % 8)) != 0));
        }
        Mask::from_bits(n, f, bits)
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for i in 0..self.n {
            let row: Vec<&str> = (0..self.f)
                .map(|l| if self.observed(i, l) { "1" } else { "0" })
                .collect();
            writeln!(out, "{}", row.join(","))?;
        }
        out.flush()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_binary(std::io::BufWriter::new(file))
            .map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_binary(std::io::BufReader::new(file), &path.display().to_string())
    }
}
