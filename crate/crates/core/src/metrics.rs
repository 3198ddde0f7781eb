//! Panel-configuration metrics over eigen-gain grids: gain trade-off,
//! volatility, minimal-service and mean capacity trade-offs, and the
//! rear-headband gain ratio.

use serde::Serialize;

use crate::eigengain::{grid_mean_over_subcarriers, EigenGainGrid, Measurement, SnapshotField};
use crate::error::{CellIndex, Error, Result};
use crate::stats::percentile;

/// Percentile used for the 97 % reliability rule.
pub const RELIABILITY_PERCENTILE: f64 = 3.0;

fn check_axes(a: &EigenGainGrid, b: &EigenGainGrid) -> Result<()> {
    if a.same_axes(b) {
        Ok(())
    } else {
        Err(Error::invalid(format!(
            "grids for {} and {} do not share measurements, snapshots and subcarriers",
            a.config.label(),
            b.config.label()
        )))
    }
}

fn zero_cells(grids: &[&EigenGainGrid]) -> Vec<CellIndex> {
    let g0 = grids[0];
    let mut cells = Vec::new();
    for m in 0..g0.measurements().len() {
        for i in 0..g0.n_snapshots() {
            for k in 0..g0.n_subcarriers() {
                if grids.iter().any(|g| g.get(m, i, k) <= 0.0) {
                    cells.push(g0.cell(m, i, k));
                }
            }
        }
    }
    cells
}

/// Per (u, s, i): mean over k of `f(a, b)`.
fn per_snapshot_mean(a: &EigenGainGrid, b: &EigenGainGrid, f: impl Fn(f64, f64) -> f64) -> SnapshotField {
    let k = a.n_subcarriers() as f64;
    let mut values = Vec::with_capacity(a.measurements().len() * a.n_snapshots());
    for m in 0..a.measurements().len() {
        for i in 0..a.n_snapshots() {
            let s: f64 = a
                .spectrum(m, i)
                .iter()
                .zip(b.spectrum(m, i))
                .map(|(&x, &y)| f(x, y))
                .sum();
            values.push(s / k);
        }
    }
    SnapshotField {
        measurements: a.measurements().to_vec(),
        n_snapshots: a.n_snapshots(),
        values,
    }
}

/// Δλ̄_p[u,s,i] = (1/K) Σ_k λ_p / λ_8.
pub fn gain_tradeoff(grid_p: &EigenGainGrid, grid_8: &EigenGainGrid) -> Result<SnapshotField> {
    check_axes(grid_p, grid_8)?;
    let bad = zero_cells(&[grid_8]);
    if !bad.is_empty() {
        return Err(Error::DegenerateCells { cells: bad });
    }
    Ok(per_snapshot_mean(grid_p, grid_8, |p, r| p / r))
}

/// ΔC̄_p[u,s,i] = |(1/K) Σ_k log₂(λ_p / λ_8)|.
pub fn capacity_tradeoff(grid_p: &EigenGainGrid, grid_8: &EigenGainGrid) -> Result<SnapshotField> {
    check_axes(grid_p, grid_8)?;
    let bad = zero_cells(&[grid_p, grid_8]);
    if !bad.is_empty() {
        return Err(Error::DegenerateCells { cells: bad });
    }
    let mut field = per_snapshot_mean(grid_p, grid_8, |p, r| (p / r).log2());
    field.values.iter_mut().for_each(|v| *v = v.abs());
    Ok(field)
}

/// Δλ̄_p^rh[u,s,i] = (1/K) Σ_k λ_back / λ_front.
pub fn rear_headband_profit(grid_back: &EigenGainGrid, grid_front: &EigenGainGrid) -> Result<SnapshotField> {
    check_axes(grid_back, grid_front)?;
    if grid_back.config.p() != grid_front.config.p() {
        return Err(Error::invalid(format!(
            "rear-headband ratio needs equal panel counts, got {} and {}",
            grid_back.config.p(),
            grid_front.config.p()
        )));
    }
    let bad = zero_cells(&[grid_front]);
    if !bad.is_empty() {
        return Err(Error::DegenerateCells { cells: bad });
    }
    Ok(per_snapshot_mean(grid_back, grid_front, |b, f| b / f))
}

/// ΔC_{p,97} = |log₂(P₃(λ̄_p) / P₃(λ̄_8))| with nearest-rank percentiles over
/// all pooled cells.
pub fn minimal_service_tradeoff(mean_p: &[f64], mean_8: &[f64]) -> Result<f64> {
    let qp = percentile(mean_p, RELIABILITY_PERCENTILE)?;
    let q8 = percentile(mean_8, RELIABILITY_PERCENTILE)?;
    if !(qp > 0.0 && q8 > 0.0) {
        return Err(Error::DegenerateInput(format!(
            "3rd-percentile gains must be positive, got {qp} and {q8}"
        )));
    }
    Ok((qp / q8).log2().abs())
}

/// Lag-1 autocorrelation, or the reason it does not exist.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Autocorrelation {
    Defined(f64),
    /// The centred series has zero energy.
    Undefined,
}

impl Autocorrelation {
    pub fn value(self) -> Option<f64> {
        match self {
            Autocorrelation::Defined(r) => Some(r),
            Autocorrelation::Undefined => None,
        }
    }
}

impl std::fmt::Display for Autocorrelation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Autocorrelation::Defined(r) => write!(f, "{r}"),
            Autocorrelation::Undefined => f.write_str("undef"),
        }
    }
}

/// Divisor for the standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub enum StdConvention {
    /// Divide by I.
    #[default]
    Population,
    /// Divide by I − 1.
    Sample,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Volatility {
    pub measurement: Measurement,
    pub mean: f64,
    pub std_dev: f64,
    pub autocorrelation: Autocorrelation,
}

/// Mean, standard deviation and lag-1 autocorrelation of one series:
/// r = Σ_{i=0}^{I−2} (x_i − x̄)(x_{i+1} − x̄) / Σ_{i=0}^{I−1} (x_i − x̄)².
pub fn series_volatility(series: &[f64], convention: StdConvention) -> Result<(f64, f64, Autocorrelation)> {
    let n = series.len();
    if n < 2 {
        return Err(Error::invalid(format!(
            "volatility needs at least 2 snapshots, got {n}"
        )));
    }
    if series.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("volatility input must be finite"));
    }
    let mean = series.iter().sum::<f64>() / n as f64;
    let dev: Vec<f64> = series.iter().map(|x| x - mean).collect();
    let ss: f64 = dev.iter().map(|d| d * d).sum();
    let divisor = match convention {
        StdConvention::Population => n as f64,
        StdConvention::Sample => (n - 1) as f64,
    };
    let std_dev = (ss / divisor).sqrt();
    // rounding in the mean leaves a residue of a few ulps on constant input
    let scale = series.iter().fold(0.0f64, |a, x| a.max(x.abs()));
    let floor = n as f64 * (1e-12 * scale).powi(2);
    let autocorrelation = if ss <= floor || ss == 0.0 {
        Autocorrelation::Undefined
    } else {
        let num: f64 = dev.windows(2).map(|w| w[0] * w[1]).sum();
        Autocorrelation::Defined(num / ss)
    };
    Ok((mean, std_dev, autocorrelation))
}

/// Volatility of λ̄ per (u, s) over snapshots.
pub fn volatility(mean_gains: &SnapshotField, convention: StdConvention) -> Result<Vec<Volatility>> {
    (0..mean_gains.measurements.len())
        .map(|m| {
            let (mean, std_dev, autocorrelation) = series_volatility(mean_gains.series(m), convention)?;
            Ok(Volatility {
                measurement: mean_gains.measurements[m],
                mean,
                std_dev,
                autocorrelation,
            })
        })
        .collect()
}

/// Convenience: volatility straight from a grid.
pub fn grid_volatility(grid: &EigenGainGrid, convention: StdConvention) -> Result<Vec<Volatility>> {
    volatility(&grid_mean_over_subcarriers(grid), convention)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::PanelConfig;
    use crate::tensor::Scenario;

    fn grid(config: PanelConfig, values: Vec<f64>, k: usize) -> EigenGainGrid {
        let i = values.len() / k;
        EigenGainGrid::new(config, vec![(0, Scenario::Los)], i, k, values).unwrap()
    }

    #[test]
    fn identity_and_half() {
        let g8 = grid(PanelConfig::full(), vec![2.0, 4.0, 6.0, 8.0], 2);
        let g4 = grid(PanelConfig::forward(4).unwrap(), vec![1.0, 2.0, 3.0, 4.0], 2);
        assert_eq!(gain_tradeoff(&g8, &g8).unwrap().values, vec![1.0, 1.0]);
        assert_eq!(gain_tradeoff(&g4, &g8).unwrap().values, vec![0.5, 0.5]);
        assert_eq!(capacity_tradeoff(&g4, &g8).unwrap().values, vec![1.0, 1.0]);
        assert_eq!(capacity_tradeoff(&g8, &g8).unwrap().values, vec![0.0, 0.0]);
    }

    #[test]
    fn zero_reference_cells_are_listed() {
        let g8 = grid(PanelConfig::full(), vec![1.0, 0.0, 1.0, 0.0], 2);
        let g1 = grid(PanelConfig::forward(1).unwrap(), vec![1.0; 4], 2);
        match gain_tradeoff(&g1, &g8) {
            Err(Error::DegenerateCells { cells }) => {
                assert_eq!(cells.len(), 2);
                assert_eq!((cells[1].snapshot, cells[1].subcarrier), (1, 1));
            }
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            capacity_tradeoff(&g8, &g1),
            Err(Error::DegenerateCells { .. })
        ));
    }

    #[test]
    fn rear_needs_equal_p() {
        let a = grid(PanelConfig::backward(2).unwrap(), vec![1.0; 2], 2);
        let b = grid(PanelConfig::forward(3).unwrap(), vec![1.0; 2], 2);
        assert!(rear_headband_profit(&a, &b).is_err());
        let c = grid(PanelConfig::forward(2).unwrap(), vec![1.0; 2], 2);
        assert_eq!(rear_headband_profit(&a, &c).unwrap().values, vec![1.0]);
    }

    #[test]
    fn minimal_service_examples() {
        let v: Vec<f64> = (1..=50).map(f64::from).collect();
        let q: Vec<f64> = v.iter().map(|x| x / 4.0).collect();
        assert_eq!(minimal_service_tradeoff(&v, &v).unwrap(), 0.0);
        assert_eq!(minimal_service_tradeoff(&q, &v).unwrap(), 2.0);
        assert!(matches!(
            minimal_service_tradeoff(&[0.0, 1.0], &v),
            Err(Error::DegenerateInput(_))
        ));
    }

    #[test]
    fn constant_series_is_undefined() {
        for c in [0.0, 1.0, 0.1, 3.3e7] {
            let (m, d, r) = series_volatility(&[c; 33], StdConvention::Population).unwrap();
            assert!((m - c).abs() <= 1e-15 * c.abs());
            assert!(d <= 1e-12 * c.abs().max(1.0));
            assert_eq!(r, Autocorrelation::Undefined);
            assert_eq!(r.to_string(), "undef");
        }
    }

    #[test]
    fn ramp_series_matches_two_pass_oracle() {
        let x: Vec<f64> = (1..=33).map(f64::from).collect();
        // mean 17, Σ(x−17)² = 2·Σ_{j=1}^{16} j² = 2992
        // Σ_{i=1}^{32} (i−17)(i−16) = Σ_{a=−16}^{15} a(a+1) = 2992 − 272 = 2720
        let (m, d, r) = series_volatility(&x, StdConvention::Population).unwrap();
        assert_eq!(m, 17.0);
        assert!((d - (2992.0f64 / 33.0).sqrt()).abs() < 1e-12);
        assert!((r.value().unwrap() - 2720.0 / 2992.0).abs() < 1e-12);
        let (_, ds, _) = series_volatility(&x, StdConvention::Sample).unwrap();
        assert!((ds - (2992.0f64 / 32.0).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn short_series_rejected() {
        assert!(series_volatility(&[1.0], StdConvention::Population).is_err());
    }
}
