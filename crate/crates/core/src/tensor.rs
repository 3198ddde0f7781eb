//! Complex channel tensors and the delay-to-frequency transform.
//!
//! A [`ComplexTensor3`] stores one MIMO channel snapshot as a dense
//! receive-element × transmit-element × tap cube in row-major order, so the
//! taps of a single antenna pair are contiguous. The same container holds the
//! delay-domain impulse response ([`CirSnapshot`]) and, after
//! [`fft_delay_axis`], the per-subcarrier transfer function ([`CtfSnapshot`]).

use std::fmt;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Nominal delay resolution of the sounder (768 MHz bandwidth).
pub const DEFAULT_TAP_SPACING: f64 = 1.3e-9;

/// Line-of-sight condition of a measurement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Scenario {
    Los,
    Nlos,
}

impl Scenario {
    /// Container byte code (0 = LOS, 1 = NLOS).
    pub fn code(self) -> u8 {
        match self {
            Scenario::Los => 0,
            Scenario::Nlos => 1,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Scenario::Los),
            1 => Some(Scenario::Nlos),
            _ => None,
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scenario::Los => "LOS",
            Scenario::Nlos => "NLOS",
        })
    }
}

impl std::str::FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "LOS" => Ok(Scenario::Los),
            "NLOS" => Ok(Scenario::Nlos),
            other => Err(Error::invalid(format!("unknown scenario {other:?}"))),
        }
    }
}

/// Identifies one snapshot: position `u`, scenario `s` and snapshot index `i`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct MeasurementKey {
    pub position: u32,
    pub scenario: Scenario,
    pub snapshot: u32,
}

impl MeasurementKey {
    pub fn new(position: u32, scenario: Scenario, snapshot: u32) -> Self {
        Self {
            position,
            scenario,
            snapshot,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Dims3 {
    pub n_rx: usize,
    pub n_tx: usize,
    pub n_tap: usize,
}

impl Dims3 {
    pub fn new(n_rx: usize, n_tx: usize, n_tap: usize) -> Self {
        Self { n_rx, n_tx, n_tap }
    }

    /// Element count, or `None` on overflow.
    pub fn checked_len(&self) -> Option<usize> {
        self.n_rx.checked_mul(self.n_tx)?.checked_mul(self.n_tap)
    }

    pub fn len(&self) -> usize {
        self.n_rx * self.n_tx * self.n_tap
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl fmt::Display for Dims3 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}x{}", self.n_rx, self.n_tx, self.n_tap)
    }
}

/// Dense complex cube, row-major over (rx, tx, tap).
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexTensor3 {
    dims: Dims3,
    data: Vec<Complex64>,
}

impl ComplexTensor3 {
    pub fn zeros(dims: Dims3) -> Self {
        Self {
            dims,
            data: vec![Complex64::new(0.0, 0.0); dims.len()],
        }
    }

    /// Wraps `data`, checking the length and that every value is finite.
    pub fn from_vec(dims: Dims3, data: Vec<Complex64>) -> Result<Self> {
        let expected = dims
            .checked_len()
            .ok_or_else(|| Error::invalid(format!("tensor dimensions {dims} overflow")))?;
        if data.len() != expected {
            return Err(Error::invalid(format!(
                "tensor data has {} values, dimensions {dims} need {expected}",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|z| !z.is_finite()) {
            return Err(Error::invalid(format!("non-finite tensor value at flat index {pos}")));
        }
        Ok(Self { dims, data })
    }

    pub fn dims(&self) -> Dims3 {
        self.dims
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<Complex64> {
        self.data
    }

    #[inline]
    pub fn offset(&self, rx: usize, tx: usize, tap: usize) -> usize {
        (rx * self.dims.n_tx + tx) * self.dims.n_tap + tap
    }

    #[inline]
    pub fn get(&self, rx: usize, tx: usize, tap: usize) -> Complex64 {
        self.data[self.offset(rx, tx, tap)]
    }

    #[inline]
    pub fn set(&mut self, rx: usize, tx: usize, tap: usize, value: Complex64) {
        let o = self.offset(rx, tx, tap);
        self.data[o] = value;
    }

    /// Taps of one antenna pair.
    pub fn pair(&self, rx: usize, tx: usize) -> &[Complex64] {
        let o = self.offset(rx, tx, 0);
        &self.data[o..o + self.dims.n_tap]
    }

    pub fn pair_mut(&mut self, rx: usize, tx: usize) -> &mut [Complex64] {
        let o = self.offset(rx, tx, 0);
        let n = self.dims.n_tap;
        &mut self.data[o..o + n]
    }

    /// The n_rx × n_tx MIMO matrix at one tap.
    pub fn matrix_at(&self, tap: usize) -> CMatrix {
        let Dims3 { n_rx, n_tx, .. } = self.dims;
        CMatrix::from_fn(n_rx, n_tx, |r, c| self.get(r, c, tap))
    }

    /// Sets every entry of one tap slice to zero.
    pub fn zero_tap(&mut self, tap: usize) {
        let n_tap = self.dims.n_tap;
        for chunk in self.data.chunks_exact_mut(n_tap) {
            chunk[tap] = Complex64::new(0.0, 0.0);
        }
    }

    pub fn scale(&mut self, c: Complex64) {
        self.data.iter_mut().for_each(|z| *z *= c);
    }

    /// Σ |h|² over the taps of one pair.
    pub fn pair_energy(&self, rx: usize, tx: usize) -> f64 {
        self.pair(rx, tx).iter().map(|z| z.norm_sqr()).sum()
    }

    /// True if any entry of the tap slice is nonzero.
    pub fn tap_is_nonzero(&self, tap: usize) -> bool {
        self.data
            .chunks_exact(self.dims.n_tap)
            .any(|c| c[tap] != Complex64::new(0.0, 0.0))
    }
}

/// Delay-domain MIMO channel snapshot H(τ).
#[derive(Debug, Clone, PartialEq)]
pub struct CirSnapshot {
    pub tensor: ComplexTensor3,
    /// Seconds between taps.
    pub tap_spacing: f64,
    pub key: MeasurementKey,
}

impl CirSnapshot {
    pub fn new(tensor: ComplexTensor3, tap_spacing: f64, key: MeasurementKey) -> Result<Self> {
        if !(tap_spacing > 0.0 && tap_spacing.is_finite()) {
            return Err(Error::invalid(format!(
                "tap spacing must be positive, got {tap_spacing}"
            )));
        }
        Ok(Self {
            tensor,
            tap_spacing,
            key,
        })
    }

    pub fn dims(&self) -> Dims3 {
        self.tensor.dims()
    }

    /// n_tap × tap_spacing.
    pub fn max_delay(&self) -> f64 {
        self.tensor.dims().n_tap as f64 * self.tap_spacing
    }

    /// Consuming form of [`fft_delay_axis`]; reuses the buffer when no
    /// zero-padding is needed.
    pub fn into_ctf(self, n_points: usize) -> Result<CtfSnapshot> {
        let dims = self.tensor.dims();
        if n_points < dims.n_tap {
            return Err(Error::invalid(format!(
                "FFT length {n_points} is shorter than the {} delay taps",
                dims.n_tap
            )));
        }
        if n_points == 0 {
            return Err(Error::invalid("FFT length must be positive"));
        }
        let out_dims = Dims3::new(dims.n_rx, dims.n_tx, n_points);
        let mut data = if n_points == dims.n_tap {
            self.tensor.into_vec()
        } else {
            let mut padded = vec![Complex64::new(0.0, 0.0); out_dims.len()];
            for (dst, src) in padded
                .chunks_exact_mut(n_points)
                .zip(self.tensor.as_slice().chunks_exact(dims.n_tap))
            {
                dst[..dims.n_tap].copy_from_slice(src);
            }
            padded
        };
        let fft = FftPlanner::<f64>::new().plan_fft_forward(n_points);
        // a few hundred pairs per task keeps scratch allocation negligible
        data.par_chunks_mut(n_points * 256).for_each(|block| {
            let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
            for row in block.chunks_exact_mut(n_points) {
                fft.process_with_scratch(row, &mut scratch);
            }
        });
        Ok(CtfSnapshot {
            tensor: ComplexTensor3 { dims: out_dims, data },
            key: self.key,
        })
    }
}

/// Frequency-domain snapshot H[k], one MIMO matrix per subcarrier.
#[derive(Debug, Clone, PartialEq)]
pub struct CtfSnapshot {
    pub tensor: ComplexTensor3,
    pub key: MeasurementKey,
}

impl CtfSnapshot {
    pub fn n_subcarriers(&self) -> usize {
        self.tensor.dims().n_tap
    }
}

/// Unnormalized forward DFT of every antenna pair along the delay axis.
///
/// Bin `k` of the result is `Σ_τ h(τ)·exp(-j·2π·k·τ/n_points)`; with
/// `n_points > n_tap` the taps are zero-padded.
pub fn fft_delay_axis(cir: &CirSnapshot, n_points: usize) -> Result<CtfSnapshot> {
    cir.clone().into_ctf(n_points)
}

/// Small dense complex matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct CMatrix {
    rows: usize,
    cols: usize,
    data: Vec<Complex64>,
}

impl CMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![Complex64::new(0.0, 0.0); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_fn(n, n, |r, c| {
            if r == c {
                Complex64::new(1.0, 0.0)
            } else {
                Complex64::new(0.0, 0.0)
            }
        })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> Complex64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    pub fn from_rows(rows: usize, cols: usize, data: Vec<Complex64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::invalid(format!(
                "matrix data has {} values, {rows}x{cols} needs {}",
                data.len(),
                rows * cols
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> Complex64 {
        self.data[r * self.cols + c]
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }

    /// Keeps only the listed rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> CMatrix {
        CMatrix::from_fn(rows.len(), self.cols, |r, c| self.get(rows[r], c))
    }

    pub fn scaled(&self, s: Complex64) -> CMatrix {
        CMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|z| z * s).collect(),
        }
    }
}
