//! External file formats: b8 and 01 shot tables, and detector error models.

mod dem;
mod shots;

use std::path::Path;

pub use dem::{parse_dem, Detector, DetectorModel, Mechanism};
pub use shots::{parse_01, parse_b8, write_01, write_b8, ShotTable};

use crate::error::{Error, Result};

pub fn read_dem_file(path: impl AsRef<Path>) -> Result<DetectorModel> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_dem(&text)
}

pub fn read_b8_file(path: impl AsRef<Path>, n_bits: usize) -> Result<ShotTable> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_b8(&bytes, n_bits)
}

pub fn read_01_file(path: impl AsRef<Path>) -> Result<ShotTable> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_01(&text)
}

pub fn write_b8_file(path: impl AsRef<Path>, table: &ShotTable) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, write_b8(table)).map_err(|e| Error::io(path, e))
}

pub fn write_01_file(path: impl AsRef<Path>, table: &ShotTable) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, write_01(table)).map_err(|e| Error::io(path, e))
}
