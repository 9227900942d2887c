//! Shot tables and their two on-disk encodings.
//!
//! * **b8** packs each shot into `ceil(n_bits / 8)` bytes, least-significant
//!   bit first, with the unused high bits of the last byte zeroed.
//! * **01** writes one shot per line as ASCII `'0'`/`'1'` characters.

use crate::error::{Error, Result};

/// A shot-major bit matrix: `n_shots` rows of `n_bits` bits.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct ShotTable {
    n_bits: usize,
    bits: Vec<u8>,
}

impl ShotTable {
    /// An empty table whose shots will have `n_bits` bits each.
    pub fn new(n_bits: usize) -> Self {
        ShotTable {
            n_bits,
            bits: Vec::new(),
        }
    }

    /// Builds a table from a flat shot-major bit vector.
    pub fn from_bits(n_bits: usize, bits: Vec<u8>) -> Result<Self> {
        if n_bits == 0 && !bits.is_empty() {
            return Err(Error::Format("zero-width shots cannot hold bits".into()));
        }
        if n_bits > 0 && !bits.len().is_multiple_of(n_bits) {
            return Err(Error::Format(format!(
                "{} bits do not divide into shots of {} bits",
                bits.len(),
                n_bits
            )));
        }
        if let Some(pos) = bits.iter().position(|&b| b > 1) {
            return Err(Error::Format(format!("entry {pos} is not a bit")));
        }
        Ok(ShotTable { n_bits, bits })
    }

    pub fn from_rows<R: AsRef<[u8]>>(n_bits: usize, rows: &[R]) -> Result<Self> {
        let mut table = ShotTable::new(n_bits);
        for row in rows {
            table.push_row(row.as_ref())?;
        }
        Ok(table)
    }

    pub fn push_row(&mut self, row: &[u8]) -> Result<()> {
        if row.len() != self.n_bits {
            return Err(Error::Dimension(format!(
                "shot has {} bits, table expects {}",
                row.len(),
                self.n_bits
            )));
        }
        if row.iter().any(|&b| b > 1) {
            return Err(Error::Format("shot contains a value other than 0/1".into()));
        }
        self.bits.extend_from_slice(row);
        Ok(())
    }

    pub fn n_shots(&self) -> usize {
        self.bits.len().checked_div(self.n_bits).unwrap_or(0)
    }

    pub fn n_bits(&self) -> usize {
        self.n_bits
    }

    pub fn row(&self, shot: usize) -> &[u8] {
        &self.bits[shot * self.n_bits..(shot + 1) * self.n_bits]
    }

    pub fn get(&self, shot: usize, bit: usize) -> u8 {
        self.bits[shot * self.n_bits + bit]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[u8]> + '_ {
        // chunks_exact panics on a zero chunk size; a zero-width table has no rows.
        self.bits.chunks_exact(self.n_bits.max(1)).take(self.n_shots())
    }

    /// The flat shot-major bit vector.
    pub fn bits(&self) -> &[u8] {
        &self.bits
    }

    /// Column `bit` across all shots, e.g. one observable's labels.
    pub fn column(&self, bit: usize) -> Vec<u8> {
        self.rows().map(|r| r[bit]).collect()
    }
}

fn stride(n_bits: usize) -> usize {
    n_bits.div_ceil(8)
}

/// Decodes b8 bytes into a table of `n_bits`-bit shots.
pub fn parse_b8(bytes: &[u8], n_bits: usize) -> Result<ShotTable> {
    if bytes.is_empty() {
        return Ok(ShotTable::new(n_bits));
    }
    let stride = stride(n_bits);
    if stride == 0 {
        return Err(Error::Format(format!(
            "{} bytes supplied for zero-width shots",
            bytes.len()
        )));
    }
    if !bytes.len().is_multiple_of(stride) {
        let shots = bytes.len() / stride;
        return Err(Error::Format(format!(
            "b8 length {} is not a multiple of the {}-byte shot stride for {} bits \
             (expected {} or {} bytes)",
            bytes.len(),
            stride,
            n_bits,
            shots * stride,
            (shots + 1) * stride
        )));
    }
    let n_shots = bytes.len() / stride;
    let mut bits = Vec::with_capacity(n_shots * n_bits);
    for shot in bytes.chunks_exact(stride) {
        bits.extend((0..n_bits).map(|k| (shot[k / 8] >> (k % 8)) & 1));
    }
    Ok(ShotTable { n_bits, bits })
}

/// Encodes a table as b8 bytes; padding bits are zero.
pub fn write_b8(table: &ShotTable) -> Vec<u8> {
    let stride = stride(table.n_bits);
    let mut out = vec![0u8; table.n_shots() * stride];
    for (shot, row) in table.rows().enumerate() {
        let dst = &mut out[shot * stride..(shot + 1) * stride];
        for (k, &bit) in row.iter().enumerate() {
            dst[k / 8] |= bit << (k % 8);
        }
    }
    out
}

/// Parses 01 text. Blank lines are skipped and a trailing `'\r'` is tolerated.
pub fn parse_01(text: &str) -> Result<ShotTable> {
    let mut table: Option<ShotTable> = None;
    for (idx, raw) in text.split('\n').enumerate() {
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        if line.is_empty() {
            continue;
        }
        let lineno = idx + 1;
        let mut row = Vec::with_capacity(line.len());
        for (col, c) in line.chars().enumerate() {
            match c {
                '0' => row.push(0),
                '1' => row.push(1),
                other => {
                    return Err(Error::Parse {
                        line: lineno,
                        message: format!("unexpected character {other:?} at column {}", col + 1),
                    })
                }
            }
        }
        let table = table.get_or_insert_with(|| ShotTable::new(row.len()));
        if row.len() != table.n_bits {
            return Err(Error::Parse {
                line: lineno,
                message: format!(
                    "ragged shot: {} bits where previous lines have {}",
                    row.len(),
                    table.n_bits
                ),
            });
        }
        table.bits.extend_from_slice(&row);
    }
    Ok(table.unwrap_or_default())
}

pub fn write_01(table: &ShotTable) -> String {
    let mut out = String::with_capacity(table.n_shots() * (table.n_bits + 1));
    for row in table.rows() {
        out.extend(row.iter().map(|&b| if b == 1 { '1' } else { '0' }));
        out.push('\n');
    }
    out
}
