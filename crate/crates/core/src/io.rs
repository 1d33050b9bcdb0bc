//! Cube files, CSV output and TOML configuration.
//!
//! Binary cube layout, all little-endian:
//!
//! | bytes | field |
//! |-------|-------|
//! | 4 | magic `STGP` |
//! | 2 | version `u16 = 1` |
//! | 4+4+4 | `n1`, `n2`, `n_frames` as `u32` |
//! | 8+8 | `dt`, `t0` as `f64` |
//! | 8·n_frames·n1·n2 | values, frame-major then row-major |
//!
//! The grid extent is not stored; cubes are read onto the unit square.
//! CSV output always uses 17 significant digits.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Result, StgpError};
use crate::params::{GridSpec, SpaceTimeCube};

pub const MAGIC: &[u8; 4] = b"STGP";
pub const VERSION: u16 = 1;
pub const HEADER_LEN: usize = 4 + 2 + 3 * 4 + 2 * 8;

/// Byte size of a cube file.
pub fn cube_file_len(n1: usize, n2: usize, n_frames: usize) -> usize {
    HEADER_LEN + 8 * n1 * n2 * n_frames
}

pub fn encode_cube(cube: &SpaceTimeCube) -> Result<Vec<u8>> {
    cube.validate()?;
    let to_u32 = |v: usize, what: &str| {
        u32::try_from(v).map_err(|_| StgpError::Format(format!("{what} = {v} does not fit the header")))
    };
    let mut out = Vec::with_capacity(cube_file_len(cube.grid.n1, cube.grid.n2, cube.n_frames()));
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&to_u32(cube.grid.n1, "n1")?.to_le_bytes());
    out.extend_from_slice(&to_u32(cube.grid.n2, "n2")?.to_le_bytes());
    out.extend_from_slice(&to_u32(cube.n_frames(), "n_frames")?.to_le_bytes());
    out.extend_from_slice(&cube.dt.to_le_bytes());
    out.extend_from_slice(&cube.t0.to_le_bytes());
    for v in cube.frames.iter().flatten() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

pub fn decode_cube(bytes: &[u8]) -> Result<SpaceTimeCube> {
    if bytes.len() < HEADER_LEN {
        return Err(StgpError::Truncated { expected: HEADER_LEN, found: bytes.len() });
    }
    if &bytes[..4] != MAGIC {
        return Err(StgpError::Format(format!("bad magic {:?}", &bytes[..4])));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != VERSION {
        return Err(StgpError::Format(format!("unsupported version {version}")));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().expect("4 bytes")) as usize;
    let f64_at = |o: usize| f64::from_le_bytes(bytes[o..o + 8].try_into().expect("8 bytes"));
    let (n1, n2, nf) = (u32_at(6), u32_at(10), u32_at(14));
    let (dt, t0) = (f64_at(18), f64_at(26));
    let expected = n1
        .checked_mul(n2)
        .and_then(|c| c.checked_mul(nf))
        .and_then(|c| c.checked_mul(8))
        .and_then(|c| c.checked_add(HEADER_LEN))
        .ok_or_else(|| StgpError::Format("header sizes overflow".into()))?;
    if bytes.len() < expected {
        return Err(StgpError::Truncated { expected, found: bytes.len() });
    }
    if bytes.len() > expected {
        return Err(StgpError::Format(format!("{} trailing bytes after payload", bytes.len() - expected)));
    }
    let grid = GridSpec::new(n1, n2, [1.0, 1.0]).map_err(|e| StgpError::Format(e.to_string()))?;
    let cells = n1 * n2;
    let frames: Vec<Vec<f64>> =
        (0..nf).map(|k| (0..cells).map(|i| f64_at(HEADER_LEN + 8 * (k * cells + i))).collect()).collect();
    if frames.iter().flatten().any(|v| v.is_nan()) {
        return Err(StgpError::Format("payload contains NaN".into()));
    }
    SpaceTimeCube::new(grid, dt, t0, frames).map_err(|e| match e {
        StgpError::Param(m) | StgpError::Dimension(m) => StgpError::Format(m),
        other => other,
    })
}

pub fn write_cube(path: impl AsRef<Path>, cube: &SpaceTimeCube) -> Result<()> {
    let bytes = encode_cube(cube)?;
    let mut f = fs::File::create(path)?;
    f.write_all(&bytes)?;
    Ok(())
}

pub fn read_cube(path: impl AsRef<Path>) -> Result<SpaceTimeCube> {
    decode_cube(&fs::read(path)?)
}

/// 17 significant digits, enough to round-trip any `f64`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Writes a CSV table with a header line.
pub fn write_csv<I, R>(path: impl AsRef<Path>, header: &[&str], rows: I) -> Result<()>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = String>,
{
    let mut s = header.join(",");
    s.push('\n');
    for row in rows {
        let cells: Vec<String> = row.into_iter().collect();
        s.push_str(&cells.join(","));
        s.push('\n');
    }
    fs::write(path, s)?;
    Ok(())
}

/// Writes one grid field as `n1` lines of `n2` values.
pub fn write_field_csv(path: impl AsRef<Path>, grid: &GridSpec, field: &[f64]) -> Result<()> {
    if field.len() != grid.len() {
        return Err(StgpError::Dimension(format!("field has {} values, grid has {}", field.len(), grid.len())));
    }
    let mut s = String::with_capacity(field.len() * 24);
    for row in field.chunks(grid.n2) {
        let line: Vec<String> = row.iter().map(|&v| fmt_f64(v)).collect();
        let _ = writeln!(s, "{}", line.join(","));
    }
    fs::write(path, s)?;
    Ok(())
}

pub fn read_field_csv(path: impl AsRef<Path>, grid: &GridSpec) -> Result<Vec<f64>> {
    let text = fs::read_to_string(path.as_ref())?;
    let mut out = Vec::with_capacity(grid.len());
    for (r, line) in text.lines().filter(|l| !l.trim().is_empty()).enumerate() {
        let vals = line
            .split(',')
            .map(|c| c.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| StgpError::Format(format!("{}: row {r}: {e}", path.as_ref().display())))?;
        if vals.len() != grid.n2 {
            return Err(StgpError::Format(format!("{}: row {r} has {} values", path.as_ref().display(), vals.len())));
        }
        out.extend(vals);
    }
    if out.len() != grid.len() {
        return Err(StgpError::Format(format!("{}: expected {} rows", path.as_ref().display(), grid.n1)));
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
struct CsvMeta {
    n1: usize,
    n2: usize,
    n_frames: usize,
    dt: f64,
    t0: f64,
}

/// Frame file name inside a CSV cube directory.
pub fn frame_file_name(k: usize) -> String {
    format!("frame_{k:05}.csv")
}

/// Writes `meta.toml` and one `frame_NNNNN.csv` per frame into `dir`.
pub fn write_cube_csv(dir: impl AsRef<Path>, cube: &SpaceTimeCube) -> Result<()> {
    cube.validate()?;
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let meta = CsvMeta { n1: cube.grid.n1, n2: cube.grid.n2, n_frames: cube.n_frames(), dt: cube.dt, t0: cube.t0 };
    save_toml(dir.join("meta.toml"), &meta)?;
    for (k, f) in cube.frames.iter().enumerate() {
        write_field_csv(dir.join(frame_file_name(k)), &cube.grid, f)?;
    }
    Ok(())
}

pub fn read_cube_csv(dir: impl AsRef<Path>) -> Result<SpaceTimeCube> {
    let dir = dir.as_ref();
    let meta: CsvMeta = load_toml(dir.join("meta.toml"))?;
    let grid = GridSpec::new(meta.n1, meta.n2, [1.0, 1.0]).map_err(|e| StgpError::Format(e.to_string()))?;
    let frames = (0..meta.n_frames)
        .map(|k| read_field_csv(dir.join(frame_file_name(k)), &grid))
        .collect::<Result<Vec<_>>>()?;
    if frames.iter().flatten().any(|v| v.is_nan()) {
        return Err(StgpError::Format("CSV frames contain NaN".into()));
    }
    SpaceTimeCube::new(grid, meta.dt, meta.t0, frames)
}

/// Reads a cube from a binary file or a CSV directory.
pub fn read_cube_any(path: impl AsRef<Path>) -> Result<SpaceTimeCube> {
    let p = path.as_ref();
    if p.is_dir() {
        read_cube_csv(p)
    } else {
        read_cube(p)
    }
}

pub fn load_toml<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    let text = fs::read_to_string(path.as_ref())?;
    parse_toml(&text).map_err(|e| match e {
        StgpError::Config(m) => StgpError::Config(format!("{}: {m}", path.as_ref().display())),
        other => other,
    })
}

pub fn parse_toml<T: DeserializeOwned>(text: &str) -> Result<T> {
    toml::from_str(text).map_err(|e| StgpError::Config(e.to_string()))
}

pub fn to_toml<T: Serialize>(value: &T) -> Result<String> {
    toml::to_string_pretty(value).map_err(|e| StgpError::Config(e.to_string()))
}

pub fn save_toml<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    fs::write(path, to_toml(value)?)?;
    Ok(())
}
