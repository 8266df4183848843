//! Binary field dumps.
//!
//! Layout (64-byte header, then payload):
//!
//! | offset | size | content                                  |
//! |--------|------|------------------------------------------|
//! | 0      | 4    | magic `WKBF`                             |
//! | 4      | 4    | format version (u32)                     |
//! | 8      | 4    | dimension (u32)                          |
//! | 12     | 8    | points per axis, x then y (u32 each; y = 1 in 1-D) |
//! | 20     | 4    | endianness tag `LE\0\0` or `BE\0\0`      |
//! | 24     | 8    | half length `L` (f64)                    |
//! | 32     | 4    | kind: 1 = complex field, 2 = WKB state   |
//! | 36     | 4    | reserved, zero                           |
//! | 40     | 8    | time (f64)                               |
//! | 48     | 16   | zero padding                             |
//!
//! The payload is `(re, im)` f64 pairs in row-major order, written in the byte
//! order named by the tag (little-endian by default). A WKB state stores the
//! phase (imaginary parts zero) followed by the amplitude.

use std::path::Path;
use std::sync::Arc;

use num_complex::Complex64;
use wkbsplit::{ComplexField, Grid, RealField, WkbState};

use crate::HarnessError;

pub const MAGIC: &[u8; 4] = b"WKBF";
pub const VERSION: u32 = 1;
pub const HEADER_LEN: usize = 64;

const TAG_LE: &[u8; 4] = b"LE\0\0";
const TAG_BE: &[u8; 4] = b"BE\0\0";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Endian {
    Little,
    Big,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Field = 1,
    Wkb = 2,
}

#[derive(Debug, Clone)]
pub enum Dump {
    Field { field: ComplexField, time: f64 },
    Wkb(WkbState),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Header {
    pub dim: usize,
    pub points: [usize; 2],
    pub half_length: f64,
    pub kind: Kind,
    pub time: f64,
    pub endian: Endian,
}

fn malformed(m: impl Into<String>) -> HarnessError {
    HarnessError::Dump(m.into())
}

struct Writer {
    buf: Vec<u8>,
    endian: Endian,
}

impl Writer {
    fn u32(&mut self, v: u32) {
        let b = match self.endian {
            Endian::Little => v.to_le_bytes(),
            Endian::Big => v.to_be_bytes(),
        };
        self.buf.extend_from_slice(&b);
    }

    fn f64(&mut self, v: f64) {
        let b = match self.endian {
            Endian::Little => v.to_le_bytes(),
            Endian::Big => v.to_be_bytes(),
        };
        self.buf.extend_from_slice(&b);
    }
}

fn header_bytes(grid: &Grid, kind: Kind, time: f64, endian: Endian) -> Writer {
    let mut w = Writer { buf: Vec::with_capacity(HEADER_LEN), endian };
    w.buf.extend_from_slice(MAGIC);
    w.u32(VERSION);
    w.u32(grid.dim() as u32);
    let n = grid.points_per_axis() as u32;
    w.u32(n);
    w.u32(if grid.dim() == 2 { n } else { 1 });
    w.buf.extend_from_slice(match endian {
        Endian::Little => TAG_LE,
        Endian::Big => TAG_BE,
    });
    w.f64(grid.half_length());
    w.u32(kind as u32);
    w.u32(0);
    w.f64(time);
    w.buf.resize(HEADER_LEN, 0);
    w
}

pub fn encode(dump: &Dump, endian: Endian) -> Vec<u8> {
    let (grid, kind, time, parts): (&Grid, Kind, f64, Vec<Vec<Complex64>>) = match dump {
        Dump::Field { field, time } => (&field.grid, Kind::Field, *time, vec![field.values.clone()]),
        Dump::Wkb(s) => (
            s.grid(),
            Kind::Wkb,
            s.time,
            vec![s.phase.to_complex().values, s.amplitude.values.clone()],
        ),
    };
    let mut w = header_bytes(grid, kind, time, endian);
    for z in parts.iter().flatten() {
        w.f64(z.re);
        w.f64(z.im);
    }
    w.buf
}

pub fn decode_header(bytes: &[u8]) -> Result<Header, HarnessError> {
    if bytes.len() < HEADER_LEN {
        return Err(malformed(format!("{} bytes is shorter than the header", bytes.len())));
    }
    if &bytes[0..4] != MAGIC {
        return Err(malformed("bad magic"));
    }
    let endian = match &bytes[20..24] {
        t if t == TAG_LE => Endian::Little,
        t if t == TAG_BE => Endian::Big,
        _ => return Err(malformed("unknown endianness tag")),
    };
    let u32_at = |o: usize| {
        let b: [u8; 4] = bytes[o..o + 4].try_into().unwrap();
        match endian {
            Endian::Little => u32::from_le_bytes(b),
            Endian::Big => u32::from_be_bytes(b),
        }
    };
    let f64_at = |o: usize| {
        let b: [u8; 8] = bytes[o..o + 8].try_into().unwrap();
        match endian {
            Endian::Little => f64::from_le_bytes(b),
            Endian::Big => f64::from_be_bytes(b),
        }
    };
    let version = u32_at(4);
    if version != VERSION {
        return Err(HarnessError::DumpVersion { found: version, expected: VERSION });
    }
    let dim = u32_at(8) as usize;
    let points = [u32_at(12) as usize, u32_at(16) as usize];
    let kind = match u32_at(32) {
        1 => Kind::Field,
        2 => Kind::Wkb,
        k => return Err(malformed(format!("unknown field kind {k}"))),
    };
    if !(dim == 1 && points[1] == 1 || dim == 2 && points[0] == points[1]) {
        return Err(malformed(format!("inconsistent shape: dim {dim}, points {points:?}")));
    }
    Ok(Header { dim, points, half_length: f64_at(24), kind, time: f64_at(40), endian })
}

pub fn decode(bytes: &[u8]) -> Result<Dump, HarnessError> {
    let h = decode_header(bytes)?;
    let grid = Grid::new(h.dim, h.points[0], h.half_length)?;
    decode_onto(bytes, &grid)
}

/// Decodes onto an existing grid; a header describing a different grid is an error.
pub fn decode_onto(bytes: &[u8], grid: &Arc<Grid>) -> Result<Dump, HarnessError> {
    let h = decode_header(bytes)?;
    if h.dim != grid.dim() || h.points[0] != grid.points_per_axis() || h.half_length != grid.half_length() {
        return Err(HarnessError::GridMismatch(format!(
            "dump has dim {} N {} L {}, grid has dim {} N {} L {}",
            h.dim,
            h.points[0],
            h.half_length,
            grid.dim(),
            grid.points_per_axis(),
            grid.half_length()
        )));
    }
    let blocks = match h.kind {
        Kind::Field => 1,
        Kind::Wkb => 2,
    };
    let expected = HEADER_LEN + blocks * grid.len() * 16;
    if bytes.len() != expected {
        return Err(HarnessError::DumpSize { found: bytes.len(), expected });
    }
    let f = |o: usize| {
        let b: [u8; 8] = bytes[o..o + 8].try_into().unwrap();
        match h.endian {
            Endian::Little => f64::from_le_bytes(b),
            Endian::Big => f64::from_be_bytes(b),
        }
    };
    let block = |k: usize| -> Vec<Complex64> {
        let base = HEADER_LEN + k * grid.len() * 16;
        (0..grid.len()).map(|i| Complex64::new(f(base + 16 * i), f(base + 16 * i + 8))).collect()
    };
    match h.kind {
        Kind::Field => Ok(Dump::Field { field: ComplexField::new(grid.clone(), block(0))?, time: h.time }),
        Kind::Wkb => {
            let phase = block(0);
            if phase.iter().any(|z| z.im != 0.0) {
                return Err(malformed("phase block has nonzero imaginary parts"));
            }
            let phase = RealField::new(grid.clone(), phase.iter().map(|z| z.re).collect())?;
            let amp = ComplexField::new(grid.clone(), block(1))?;
            Ok(Dump::Wkb(WkbState::new(phase, amp, h.time)?))
        }
    }
}

pub fn dump_field(field: &ComplexField, time: f64, path: &Path) -> Result<(), HarnessError> {
    write(path, &encode(&Dump::Field { field: field.clone(), time }, Endian::Little))
}

pub fn dump_state(state: &WkbState, path: &Path) -> Result<(), HarnessError> {
    write(path, &encode(&Dump::Wkb(state.clone()), Endian::Little))
}

pub fn load_field(path: &Path) -> Result<Dump, HarnessError> {
    decode(&read(path)?)
}

pub fn load_field_onto(path: &Path, grid: &Arc<Grid>) -> Result<Dump, HarnessError> {
    decode_onto(&read(path)?, grid)
}

fn write(path: &Path, bytes: &[u8]) -> Result<(), HarnessError> {
    std::fs::write(path, bytes).map_err(|e| HarnessError::Io(path.to_path_buf(), e))
}

fn read(path: &Path) -> Result<Vec<u8>, HarnessError> {
    std::fs::read(path).map_err(|e| HarnessError::Io(path.to_path_buf(), e))
}
