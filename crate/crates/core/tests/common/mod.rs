//! Independent oracles shared by the integration tests.
#![allow(dead_code, clippy::needless_range_loop)]

use hmd_channel::tensor::CMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

pub fn cgauss<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

pub fn random_cmatrix<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> CMatrix {
    CMatrix::from_fn(rows, cols, |_, _| cgauss(rng))
}

/// Largest eigenvalue of a real symmetric matrix by cyclic Jacobi rotations.
pub fn jacobi_max_eigenvalue(mut a: Vec<Vec<f64>>) -> f64 {
    let n = a.len();
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|p| (0..n).filter(move |&q| q != p).map(move |q| (p, q)))
            .map(|(p, q)| a[p][q] * a[p][q])
            .sum();
        let diag: f64 = (0..n).map(|p| a[p][p] * a[p][p]).sum();
        if off <= 1e-30 * diag.max(f64::MIN_POSITIVE) {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q] == 0.0 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[k][p], a[k][q]);
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p][k], a[q][k]);
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
            }
        }
    }
    (0..n).map(|p| a[p][p]).fold(f64::NEG_INFINITY, f64::max)
}

/// λ₁ of H·Hᴴ: the Gram matrix HᴴH is formed by direct summation and its
/// Hermitian spectrum read from the real embedding [[Re, −Im], [Im, Re]]
/// (each eigenvalue appears twice).
pub fn dense_lambda1(h: &CMatrix) -> f64 {
    let (r, c) = (h.rows(), h.cols());
    let mut g = vec![vec![Complex64::new(0.0, 0.0); c]; c];
    for a in 0..c {
        for b in 0..c {
            for t in 0..r {
                g[a][b] += h.get(t, a).conj() * h.get(t, b);
            }
        }
    }
    let mut emb = vec![vec![0.0; 2 * c]; 2 * c];
    for a in 0..c {
        for b in 0..c {
            emb[a][b] = g[a][b].re;
            emb[a + c][b + c] = g[a][b].re;
            emb[a][b + c] = -g[a][b].im;
            emb[a + c][b] = g[a][b].im;
        }
    }
    jacobi_max_eigenvalue(emb)
}

/// Nearest-rank percentile by full sort.
pub fn sorted_percentile(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut rank = 1;
    while (rank as f64) < q / 100.0 * v.len() as f64 - 1e-9 {
        rank += 1;
    }
    v[rank - 1]
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / a.abs().max(b.abs())
    }
}
