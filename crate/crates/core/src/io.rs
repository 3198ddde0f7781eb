//! Binary containers for CIR snapshots and eigen-gain grids.
//!
//! CIR layout (little-endian):
//!
//! | offset | size | field                          |
//! |--------|------|--------------------------------|
//! | 0      | 8    | magic `HMDCIR01`               |
//! | 8      | 4    | `n_rx` (u32)                   |
//! | 12     | 4    | `n_tx` (u32)                   |
//! | 16     | 4    | `n_tap` (u32)                  |
//! | 20     | 8    | tap spacing in seconds (f64)   |
//! | 28     | 4    | position `u` (u32)             |
//! | 32     | 1    | scenario (0 = LOS, 1 = NLOS)   |
//! | 33     | 4    | snapshot `i` (u32)             |
//! | 37     | …    | (re, im) f32 pairs, rx, tx, tap |
//!
//! Grid layout: magic `HMDGRD01`, u32 measurement count, u32 snapshots,
//! u32 subcarriers, u8 label length + UTF-8 configuration label, then per
//! measurement a u32 position and u8 scenario, then f64 values in grid
//! order.

use std::fs;
use std::io::Write;
use std::path::Path;

use num_complex::Complex64;

use crate::eigengain::EigenGainGrid;
use crate::error::{Error, Result};
use crate::geometry::PanelConfig;
use crate::tensor::{CirSnapshot, ComplexTensor3, Dims3, MeasurementKey, Scenario};

pub const CIR_MAGIC: &[u8; 8] = b"HMDCIR01";
pub const GRID_MAGIC: &[u8; 8] = b"HMDGRD01";
pub const CIR_HEADER_LEN: usize = 37;

/// Serializes a snapshot; values are rounded to 32-bit floats.
pub fn encode_cir(cir: &CirSnapshot) -> Result<Vec<u8>> {
    let d = cir.dims();
    let dim = |v: usize, name: &str| {
        u32::try_from(v).map_err(|_| Error::invalid(format!("{name} = {v} does not fit the container")))
    };
    let mut out = Vec::with_capacity(CIR_HEADER_LEN + 8 * d.len());
    out.extend_from_slice(CIR_MAGIC);
    out.extend_from_slice(&dim(d.n_rx, "n_rx")?.to_le_bytes());
    out.extend_from_slice(&dim(d.n_tx, "n_tx")?.to_le_bytes());
    out.extend_from_slice(&dim(d.n_tap, "n_tap")?.to_le_bytes());
    out.extend_from_slice(&cir.tap_spacing.to_le_bytes());
    out.extend_from_slice(&cir.key.position.to_le_bytes());
    out.push(cir.key.scenario.code());
    out.extend_from_slice(&cir.key.snapshot.to_le_bytes());
    for z in cir.tensor.as_slice() {
        out.extend_from_slice(&(z.re as f32).to_le_bytes());
        out.extend_from_slice(&(z.im as f32).to_le_bytes());
    }
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::format(
                self.bytes.len() as u64,
                format!("truncated {what}: need {n} bytes at offset {}, file ends", self.pos),
            ));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }
}

fn check_magic(bytes: &[u8], magic: &[u8; 8]) -> Result<()> {
    let family = &magic[..6];
    if bytes.len() < 8 {
        return Err(Error::format(bytes.len() as u64, "file shorter than the 8-byte magic"));
    }
    if &bytes[..8] == magic {
        return Ok(());
    }
    if &bytes[..6] == family {
        return Err(Error::format(
            6,
            format!(
                "unsupported version {:?}, expected {:?}",
                String::from_utf8_lossy(&bytes[6..8]),
                String::from_utf8_lossy(&magic[6..])
            ),
        ));
    }
    Err(Error::format(
        0,
        format!(
            "bad magic {:?}, expected {:?}",
            String::from_utf8_lossy(&bytes[..8]),
            String::from_utf8_lossy(magic)
        ),
    ))
}

/// Parses a snapshot, checking every header field and the exact payload
/// length.
pub fn decode_cir(bytes: &[u8]) -> Result<CirSnapshot> {
    check_magic(bytes, CIR_MAGIC)?;
    let mut r = Reader { bytes, pos: 8 };
    let n_rx = r.u32("header")? as usize;
    let n_tx = r.u32("header")? as usize;
    let n_tap = r.u32("header")? as usize;
    let tap_spacing = r.f64("header")?;
    let position = r.u32("header")?;
    let scenario_code = r.u8("header")?;
    let snapshot = r.u32("header")?;
    if n_rx == 0 || n_tx == 0 || n_tap == 0 {
        return Err(Error::format(8, format!("zero dimension {n_rx}×{n_tx}×{n_tap}")));
    }
    let payload_len = n_rx
        .checked_mul(n_tx)
        .and_then(|v| v.checked_mul(n_tap))
        .and_then(|v| v.checked_mul(8))
        .filter(|&v| v <= isize::MAX as usize - CIR_HEADER_LEN)
        .ok_or_else(|| Error::format(8, format!("dimensions {n_rx}×{n_tx}×{n_tap} overflow the payload size")))?;
    if !(tap_spacing.is_finite() && tap_spacing > 0.0) {
        return Err(Error::format(20, format!("tap spacing {tap_spacing} is not positive")));
    }
    let scenario = Scenario::from_code(scenario_code)
        .ok_or_else(|| Error::format(32, format!("unknown scenario code {scenario_code}")))?;
    let actual = bytes.len() - CIR_HEADER_LEN;
    if actual < payload_len {
        return Err(Error::format(
            bytes.len() as u64,
            format!("truncated payload: expected {payload_len} bytes, found {actual}"),
        ));
    }
    if actual > payload_len {
        return Err(Error::format(
            (CIR_HEADER_LEN + payload_len) as u64,
            format!("{} trailing bytes after the payload", actual - payload_len),
        ));
    }
    let payload = &bytes[CIR_HEADER_LEN..];
    let mut data = Vec::with_capacity(payload_len / 8);
    for (j, pair) in payload.chunks_exact(8).enumerate() {
        let re = f32::from_le_bytes(pair[..4].try_into().unwrap());
        let im = f32::from_le_bytes(pair[4..].try_into().unwrap());
        if !(re.is_finite() && im.is_finite()) {
            return Err(Error::format((CIR_HEADER_LEN + 8 * j) as u64, "non-finite sample"));
        }
        data.push(Complex64::new(f64::from(re), f64::from(im)));
    }
    let tensor = ComplexTensor3::from_vec(Dims3::new(n_rx, n_tx, n_tap), data)?;
    CirSnapshot::new(tensor, tap_spacing, MeasurementKey::new(position, scenario, snapshot))
}

pub fn write_cir(path: &Path, cir: &CirSnapshot) -> Result<()> {
    write_bytes(path, &encode_cir(cir)?)
}

pub fn read_cir(path: &Path) -> Result<CirSnapshot> {
    decode_cir(&fs::read(path).map_err(|e| Error::io(path, e))?)
}

pub fn encode_grid(grid: &EigenGainGrid) -> Result<Vec<u8>> {
    let label = grid.config.label();
    let as_u32 = |v: usize| u32::try_from(v).map_err(|_| Error::invalid("grid axis too long for the container"));
    let mut out = Vec::with_capacity(32 + label.len() + 5 * grid.measurements().len() + 8 * grid.values().len());
    out.extend_from_slice(GRID_MAGIC);
    out.extend_from_slice(&as_u32(grid.measurements().len())?.to_le_bytes());
    out.extend_from_slice(&as_u32(grid.n_snapshots())?.to_le_bytes());
    out.extend_from_slice(&as_u32(grid.n_subcarriers())?.to_le_bytes());
    out.push(label.len() as u8);
    out.extend_from_slice(label.as_bytes());
    for &(u, s) in grid.measurements() {
        out.extend_from_slice(&u.to_le_bytes());
        out.push(s.code());
    }
    for v in grid.values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

pub fn decode_grid(bytes: &[u8]) -> Result<EigenGainGrid> {
    check_magic(bytes, GRID_MAGIC)?;
    let mut r = Reader { bytes, pos: 8 };
    let n_meas = r.u32("header")? as usize;
    let n_snap = r.u32("header")? as usize;
    let n_k = r.u32("header")? as usize;
    let label_len = r.u8("header")? as usize;
    let label_at = r.pos;
    let label = std::str::from_utf8(r.take(label_len, "label")?)
        .map_err(|_| Error::format(label_at as u64, "label is not UTF-8"))?;
    let config: PanelConfig = label
        .parse()
        .map_err(|e| Error::format(label_at as u64, format!("bad configuration label: {e}")))?;
    let mut measurements = Vec::with_capacity(n_meas.min(1 << 16));
    for _ in 0..n_meas {
        let u = r.u32("measurement table")?;
        let at = r.pos;
        let code = r.u8("measurement table")?;
        let s = Scenario::from_code(code)
            .ok_or_else(|| Error::format(at as u64, format!("unknown scenario code {code}")))?;
        measurements.push((u, s));
    }
    let n_values = n_meas
        .checked_mul(n_snap)
        .and_then(|v| v.checked_mul(n_k))
        .filter(|v| v.checked_mul(8).is_some())
        .ok_or_else(|| Error::format(8, "grid dimensions overflow"))?;
    let expected = n_values * 8;
    let actual = bytes.len() - r.pos;
    if actual != expected {
        return Err(Error::format(
            bytes.len().min(r.pos + expected) as u64,
            format!("value block: expected {expected} bytes, found {actual}"),
        ));
    }
    let values = bytes[r.pos..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    EigenGainGrid::new(config, measurements, n_snap, n_k, values)
}

pub fn write_grid(path: &Path, grid: &EigenGainGrid) -> Result<()> {
    write_bytes(path, &encode_grid(grid)?)
}

pub fn read_grid(path: &Path) -> Result<EigenGainGrid> {
    decode_grid(&fs::read(path).map_err(|e| Error::io(path, e))?)
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(bytes).map_err(|e| Error::io(path, e))
}
