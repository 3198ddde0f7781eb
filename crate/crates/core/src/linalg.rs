//! Dominant squared singular value λ₁ = largest eigenvalue of H·Hᴴ.
//!
//! The matrix is reduced to its smaller Gram matrix (HᴴH when there are at
//! least as many rows as columns, HHᴴ otherwise), which is then fed to a
//! power iteration on the Rayleigh quotient. If the iteration cap is reached
//! the Gram matrix is handed to a dense Hermitian eigensolver instead.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::tensor::{CMatrix, ComplexTensor3};

/// Slices per Gram batch in [`dominant_per_slice`].
const SLICE_BATCH: usize = 32;

/// Power-iteration settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerIteration {
    /// Stop when successive Rayleigh quotients differ by at most this
    /// fraction of the current value.
    pub rel_tol: f64,
    /// Iterations before falling back to a dense eigendecomposition.
    pub max_iter: usize,
}

impl Default for PowerIteration {
    fn default() -> Self {
        Self {
            rel_tol: 1e-12,
            max_iter: 1000,
        }
    }
}

/// Which route produced an eigenvalue.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Route {
    PowerIteration { iterations: usize },
    DenseFallback,
}

/// Largest eigenvalue of `h·hᴴ` with the default solver settings.
pub fn dominant_sq_singular_value(h: &CMatrix) -> Result<f64> {
    dominant_sq_singular_value_with(h, PowerIteration::default()).map(|(v, _)| v)
}

pub fn dominant_sq_singular_value_with(h: &CMatrix, solver: PowerIteration) -> Result<(f64, Route)> {
    if h.rows() == 0 || h.cols() == 0 {
        return Err(Error::invalid("matrix must be non-empty"));
    }
    if let Some(pos) = h.as_slice().iter().position(|z| !z.is_finite()) {
        return Err(Error::invalid(format!(
            "non-finite matrix entry at ({}, {})",
            pos / h.cols(),
            pos % h.cols()
        )));
    }
    let gram = Gram::of_fn(h.rows(), h.cols(), |r, c| h.get(r, c));
    Ok(gram.dominant_eigenvalue(solver))
}

/// λ₁ of the `rows.len() × n_tx` matrix `tensor[rows, :, s]` for every `s`
/// in `slices`, in order. Entries are assumed finite.
///
/// Slices are processed in batches so that each (rx, tx) run along the last
/// axis is read contiguously.
pub fn dominant_per_slice(
    tensor: &ComplexTensor3,
    rows: &[usize],
    slices: &[usize],
    solver: PowerIteration,
) -> Result<Vec<f64>> {
    let dims = tensor.dims();
    if rows.is_empty() || dims.n_tx == 0 {
        return Err(Error::invalid("matrix must be non-empty"));
    }
    if let Some(r) = rows.iter().find(|&&r| r >= dims.n_rx) {
        return Err(Error::invalid(format!("row {r} out of range for {} rows", dims.n_rx)));
    }
    if let Some(s) = slices.iter().find(|&&s| s >= dims.n_tap) {
        return Err(Error::invalid(format!("slice {s} out of range for {}", dims.n_tap)));
    }
    let tall = rows.len() >= dims.n_tx;
    let (t_rows, n) = if tall {
        (rows.len(), dims.n_tx)
    } else {
        (dims.n_tx, rows.len())
    };
    let out: Vec<Vec<f64>> = slices
        .par_chunks(SLICE_BATCH)
        .map(|batch| {
            let mut accs: Vec<GramAccumulator> = batch.iter().map(|_| GramAccumulator::new(n)).collect();
            let mut xr = vec![0.0; batch.len() * n];
            let mut xi = vec![0.0; batch.len() * n];
            for t in 0..t_rows {
                for j in 0..n {
                    let (run, conj) = if tall {
                        (tensor.pair(rows[t], j), false)
                    } else {
                        (tensor.pair(rows[j], t), true)
                    };
                    for (b, &s) in batch.iter().enumerate() {
                        let z = run[s];
                        xr[b * n + j] = z.re;
                        xi[b * n + j] = if conj { -z.im } else { z.im };
                    }
                }
                for (b, acc) in accs.iter_mut().enumerate() {
                    acc.add_row(&xr[b * n..(b + 1) * n], &xi[b * n..(b + 1) * n]);
                }
            }
            accs.into_iter()
                .map(|acc| acc.finish().dominant_eigenvalue(solver).0)
                .collect()
        })
        .collect();
    Ok(out.into_iter().flatten().collect())
}

/// Hermitian Gram matrix, stored full in split real/imaginary planes so the
/// inner loops vectorise.
#[derive(Debug, Clone)]
pub(crate) struct Gram {
    n: usize,
    re: Vec<f64>,
    im: Vec<f64>,
}

impl Gram {
    /// Smaller Gram matrix of the `rows × cols` matrix whose entries are
    /// produced by `entry(r, c)`. Entries are assumed finite.
    pub(crate) fn of_fn(rows: usize, cols: usize, mut entry: impl FnMut(usize, usize) -> Complex64) -> Self {
        // T is the tall orientation: T = H if rows >= cols, else T = Hᴴ.
        // Either way the Gram matrix is TᴴT.
        let tall = rows >= cols;
        let (t_rows, n) = if tall { (rows, cols) } else { (cols, rows) };
        let mut acc = GramAccumulator::new(n);
        let mut xr = vec![0.0; n];
        let mut xi = vec![0.0; n];
        for t in 0..t_rows {
            for j in 0..n {
                let z = if tall { entry(t, j) } else { entry(j, t).conj() };
                xr[j] = z.re;
                xi[j] = z.im;
            }
            acc.add_row(&xr, &xi);
        }
        acc.finish()
    }

    fn matvec(&self, vr: &[f64], vi: &[f64], wr: &mut [f64], wi: &mut [f64]) {
        // w = Σ_b G[:, b]·v_b, and column b of a Hermitian G is conj(row b):
        // axpy form with no floating-point reduction, so it vectorises
        let n = self.n;
        wr.fill(0.0);
        wi.fill(0.0);
        for b in 0..n {
            let (xr, xi) = (vr[b], vi[b]);
            let gr = &self.re[b * n..(b + 1) * n];
            let gi = &self.im[b * n..(b + 1) * n];
            for (((wr, wi), &gr), &gi) in wr.iter_mut().zip(wi.iter_mut()).zip(gr).zip(gi) {
                *wr += gr * xr + gi * xi;
                *wi += gr * xi - gi * xr;
            }
        }
    }

    /// λ₁ of the Gram matrix: power iteration, dense fallback at the cap.
    pub(crate) fn dominant_eigenvalue(&self, solver: PowerIteration) -> (f64, Route) {
        match self.power_iteration(solver) {
            Some((value, iterations)) => (value, Route::PowerIteration { iterations }),
            None => (self.dense_dominant_eigenvalue(), Route::DenseFallback),
        }
    }

    fn power_iteration(&self, solver: PowerIteration) -> Option<(f64, usize)> {
        let n = self.n;
        // Deterministic start vector. Plain all-ones is an exact eigenvector
        // of many structured Gram matrices (e.g. [[2,-1],[-1,2]]) and can
        // lock onto a non-dominant mode, so the entries are spread with the
        // golden-ratio sequence.
        let mut vr: Vec<f64> = (0..n)
            .map(|j| 1.0 + 0.5 * ((j as f64 + 1.0) * 0.618_033_988_749_894_9).fract())
            .collect();
        let mut vi = vec![0.0; n];
        let norm = vr.iter().map(|x| x * x).sum::<f64>().sqrt();
        vr.iter_mut().for_each(|x| *x /= norm);

        let mut wr = vec![0.0; n];
        let mut wi = vec![0.0; n];
        let mut prev = f64::NAN;
        for it in 1..=solver.max_iter {
            self.matvec(&vr, &vi, &mut wr, &mut wi);
            let rho: f64 = vr
                .iter()
                .zip(&vi)
                .zip(wr.iter().zip(&wi))
                .map(|((vr, vi), (wr, wi))| vr * wr + vi * wi)
                .sum();
            let norm = wr.iter().zip(&wi).map(|(r, i)| r * r + i * i).sum::<f64>().sqrt();
            if norm == 0.0 {
                return Some((0.0, it));
            }
            let inv = 1.0 / norm;
            for (v, w) in vr.iter_mut().zip(&wr) {
                *v = w * inv;
            }
            for (v, w) in vi.iter_mut().zip(&wi) {
                *v = w * inv;
            }
            if (rho - prev).abs() <= solver.rel_tol * rho.abs() {
                return Some((rho.max(0.0), it));
            }
            prev = rho;
        }
        None
    }

    fn dense_dominant_eigenvalue(&self) -> f64 {
        let n = self.n;
        let m = DMatrix::<Complex64>::from_fn(n, n, |a, b| Complex64::new(self.re[a * n + b], self.im[a * n + b]));
        m.symmetric_eigenvalues().iter().cloned().fold(0.0_f64, f64::max)
    }
}

/// Accumulates TᴴT one row of T at a time (upper triangle only).
pub(crate) struct GramAccumulator {
    n: usize,
    re: Vec<f64>,
    im: Vec<f64>,
}

impl GramAccumulator {
    pub(crate) fn new(n: usize) -> Self {
        Self {
            n,
            re: vec![0.0; n * n],
            im: vec![0.0; n * n],
        }
    }

    /// Adds conj(x)·xᵀ.
    pub(crate) fn add_row(&mut self, xr: &[f64], xi: &[f64]) {
        let n = self.n;
        for a in 0..n {
            let (ar, ai) = (xr[a], xi[a]);
            if ar == 0.0 && ai == 0.0 {
                continue;
            }
            let gr = &mut self.re[a * n + a..(a + 1) * n];
            let gi = &mut self.im[a * n + a..(a + 1) * n];
            for (((gr, gi), &br), &bi) in gr.iter_mut().zip(gi.iter_mut()).zip(&xr[a..]).zip(&xi[a..]) {
                *gr += ar * br + ai * bi;
                *gi += ar * bi - ai * br;
            }
        }
    }

    pub(crate) fn finish(mut self) -> Gram {
        let n = self.n;
        for a in 0..n {
            self.im[a * n + a] = 0.0;
            for b in 0..a {
                self.re[a * n + b] = self.re[b * n + a];
                self.im[a * n + b] = -self.im[b * n + a];
            }
        }
        Gram {
            n,
            re: self.re,
            im: self.im,
        }
    }
}
