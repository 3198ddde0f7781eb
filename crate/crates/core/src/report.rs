//! CSV tables for metrics, de-noising reports and plot-ready figure data.
//!
//! Every table has a header row and a fixed column order. File names carry
//! a `_vN` schema version; a column change bumps it.

use std::path::Path;

use crate::denoise::DenoiseReport;
use crate::eigengain::{grid_mean_over_subcarriers, EigenGainGrid};
use crate::error::{Error, Result};
use crate::geometry::{Facing, PanelConfig};
use crate::metrics::{
    capacity_tradeoff, gain_tradeoff, minimal_service_tradeoff, rear_headband_profit, volatility, StdConvention,
    RELIABILITY_PERCENTILE,
};
use crate::stats::percentile;

/// Bins in the rear-headband histogram.
pub const HISTOGRAM_BINS: usize = 40;

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    /// File name, e.g. `gain_tradeoff_v1.csv`.
    pub name: &'static str,
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    fn new(name: &'static str, header: &[&'static str]) -> Self {
        Self {
            name,
            header: header.to_vec(),
            rows: Vec::new(),
        }
    }

    fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        w.into_inner()
            .map_err(|e| Error::invalid(format!("csv buffer: {}", e.error())))
    }

    pub fn write_to(&self, dir: &Path) -> Result<()> {
        let path = dir.join(self.name);
        std::fs::write(&path, self.to_csv()?).map_err(|e| Error::io(path, e))
    }
}

fn f(v: f64) -> String {
    format!("{v}")
}

/// Which grids feed which metric.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct MetricOptions {
    pub std_convention: StdConvention,
}

fn reference(grids: &[EigenGainGrid]) -> Result<&EigenGainGrid> {
    grids
        .iter()
        .find(|g| g.config.p() == 8)
        .ok_or_else(|| Error::invalid("metrics need the 8-panel grid as reference"))
}

/// Grids compared against the 8-panel reference: forward and custom
/// configurations, in input order.
fn compared(grids: &[EigenGainGrid]) -> impl Iterator<Item = &EigenGainGrid> {
    grids.iter().filter(|g| g.config.facing != Facing::Backward)
}

/// (back, front) grid pairs with equal panel count.
fn headband_pairs(grids: &[EigenGainGrid]) -> Vec<(&EigenGainGrid, &EigenGainGrid)> {
    grids
        .iter()
        .filter(|g| g.config.facing == Facing::Backward && g.config.p() < 8)
        .filter_map(|b| {
            let front = PanelConfig::forward(b.config.p()).ok()?;
            grids.iter().find(|g| g.config == front).map(|f| (b, f))
        })
        .collect()
}

fn key_cols(u: u32, s: crate::tensor::Scenario) -> [String; 2] {
    [u.to_string(), s.to_string()]
}

/// Metric tables: mean gain, gain trade-off, volatility, minimal-service
/// trade-off, capacity trade-off and rear-headband ratio.
pub fn metric_tables(grids: &[EigenGainGrid], opts: MetricOptions) -> Result<Vec<Table>> {
    let g8 = reference(grids)?;
    let mean8 = grid_mean_over_subcarriers(g8);

    let mut mean_gain = Table::new(
        "mean_gain_v1.csv",
        &["config", "p", "position", "scenario", "snapshot", "mean_gain"],
    );
    let mut vol = Table::new(
        "volatility_v1.csv",
        &[
            "config",
            "p",
            "position",
            "scenario",
            "mean_gain",
            "std_dev",
            "autocorrelation",
        ],
    );
    for g in grids {
        let label = g.config.label();
        let p = g.config.p().to_string();
        let mean = grid_mean_over_subcarriers(g);
        for (u, s, i, v) in mean.iter() {
            let [u, s] = key_cols(u, s);
            mean_gain.push(vec![label.clone(), p.clone(), u, s, i.to_string(), f(v)]);
        }
        for v in volatility(&mean, opts.std_convention)? {
            let [u, s] = key_cols(v.measurement.0, v.measurement.1);
            vol.push(vec![
                label.clone(),
                p.clone(),
                u,
                s,
                f(v.mean),
                f(v.std_dev),
                v.autocorrelation.to_string(),
            ]);
        }
    }

    let mut gain = Table::new(
        "gain_tradeoff_v1.csv",
        &["config", "p", "position", "scenario", "snapshot", "gain_ratio"],
    );
    let mut cap = Table::new(
        "capacity_tradeoff_v1.csv",
        &["config", "p", "position", "scenario", "snapshot", "delta_c_bits"],
    );
    let mut service = Table::new(
        "minimal_service_v1.csv",
        &[
            "config",
            "p",
            "percentile",
            "p3_mean_gain",
            "p3_mean_gain_8",
            "delta_c97_bits",
        ],
    );
    for g in compared(grids) {
        let label = g.config.label();
        let p = g.config.p().to_string();
        for (u, s, i, v) in gain_tradeoff(g, g8)?.iter() {
            let [u, s] = key_cols(u, s);
            gain.push(vec![label.clone(), p.clone(), u, s, i.to_string(), f(v)]);
        }
        for (u, s, i, v) in capacity_tradeoff(g, g8)?.iter() {
            let [u, s] = key_cols(u, s);
            cap.push(vec![label.clone(), p.clone(), u, s, i.to_string(), f(v)]);
        }
        let mean = grid_mean_over_subcarriers(g);
        let dc = minimal_service_tradeoff(&mean.values, &mean8.values)?;
        service.push(vec![
            label.clone(),
            p.clone(),
            f(RELIABILITY_PERCENTILE),
            f(percentile(&mean.values, RELIABILITY_PERCENTILE)?),
            f(percentile(&mean8.values, RELIABILITY_PERCENTILE)?),
            f(dc),
        ]);
    }

    let mut rear = Table::new(
        "rear_headband_v1.csv",
        &[
            "p",
            "back_config",
            "front_config",
            "position",
            "scenario",
            "snapshot",
            "gain_ratio",
        ],
    );
    for (b, fr) in headband_pairs(grids) {
        for (u, s, i, v) in rear_headband_profit(b, fr)?.iter() {
            let [u, s] = key_cols(u, s);
            rear.push(vec![
                b.config.p().to_string(),
                b.config.label(),
                fr.config.label(),
                u,
                s,
                i.to_string(),
                f(v),
            ]);
        }
    }
    Ok(vec![mean_gain, gain, vol, service, cap, rear])
}

/// Empirical CDF rows (value, cdf) of `values`, sorted ascending.
fn ecdf(values: &[f64]) -> Vec<(f64, f64)> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    v.into_iter()
        .enumerate()
        .map(|(j, x)| (x, (j + 1) as f64 / n))
        .collect()
}

/// Plot-ready tables: gain-ratio distribution per panel count, volatility
/// scatter, capacity trade-off CDF and rear-headband ratio histogram.
pub fn figure_tables(grids: &[EigenGainGrid], opts: MetricOptions) -> Result<Vec<Table>> {
    let g8 = reference(grids)?;

    let mut ratio_cdf = Table::new("gain_ratio_cdf_v1.csv", &["config", "p", "gain_ratio_db", "cdf"]);
    let mut capacity_cdf = Table::new("capacity_tradeoff_cdf_v1.csv", &["config", "p", "delta_c_bits", "cdf"]);
    for g in compared(grids) {
        let label = g.config.label();
        let p = g.config.p().to_string();
        let ratio = gain_tradeoff(g, g8)?;
        let db: Vec<f64> = ratio.values.iter().map(|r| 10.0 * r.log10()).collect();
        for (x, c) in ecdf(&db) {
            ratio_cdf.push(vec![label.clone(), p.clone(), f(x), f(c)]);
        }
        for (x, c) in ecdf(&capacity_tradeoff(g, g8)?.values) {
            capacity_cdf.push(vec![label.clone(), p.clone(), f(x), f(c)]);
        }
    }

    let mut scatter = Table::new(
        "volatility_scatter_v1.csv",
        &[
            "config",
            "p",
            "position",
            "scenario",
            "std_dev_db",
            "autocorrelation",
            "mean_gain_db",
        ],
    );
    for g in grids {
        let label = g.config.label();
        let p = g.config.p().to_string();
        for v in volatility(&grid_mean_over_subcarriers(g), opts.std_convention)? {
            // δ relative to the mean, in dB
            let rel = if v.mean > 0.0 {
                10.0 * (1.0 + v.std_dev / v.mean).log10()
            } else {
                f64::NAN
            };
            let [u, s] = key_cols(v.measurement.0, v.measurement.1);
            scatter.push(vec![
                label.clone(),
                p.clone(),
                u,
                s,
                f(rel),
                v.autocorrelation.to_string(),
                f(10.0 * v.mean.log10()),
            ]);
        }
    }

    let mut headband_hist = Table::new(
        "rear_headband_hist_v1.csv",
        &["p", "bin_low_db", "bin_high_db", "count", "density"],
    );
    for (b, fr) in headband_pairs(grids) {
        let db: Vec<f64> = rear_headband_profit(b, fr)?
            .values
            .iter()
            .map(|r| 10.0 * r.log10())
            .collect();
        let lo = db.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = db.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let (lo, hi) = if hi > lo { (lo, hi) } else { (lo - 0.5, lo + 0.5) };
        let width = (hi - lo) / HISTOGRAM_BINS as f64;
        let mut counts = [0usize; HISTOGRAM_BINS];
        for x in &db {
            let j = (((x - lo) / width) as usize).min(HISTOGRAM_BINS - 1);
            counts[j] += 1;
        }
        for (j, c) in counts.iter().enumerate() {
            let density = *c as f64 / (db.len() as f64 * width);
            headband_hist.push(vec![
                b.config.p().to_string(),
                f(lo + j as f64 * width),
                f(lo + (j + 1) as f64 * width),
                c.to_string(),
                f(density),
            ]);
        }
    }
    Ok(vec![ratio_cdf, scatter, capacity_cdf, headband_hist])
}

pub fn denoise_table(reports: &[DenoiseReport]) -> Table {
    let mut t = Table::new(
        "denoise_report_v1.csv",
        &[
            "position",
            "scenario",
            "snapshot",
            "noise_taps",
            "threshold",
            "taps_kept",
            "taps_zeroed_by_threshold",
            "taps_zeroed_by_window",
        ],
    );
    for r in reports {
        t.push(vec![
            r.key.position.to_string(),
            r.key.scenario.to_string(),
            r.key.snapshot.to_string(),
            r.lambda_noise.len().to_string(),
            f(r.threshold),
            r.taps_kept.to_string(),
            r.taps_zeroed_by_threshold.to_string(),
            r.taps_zeroed_by_window.to_string(),
        ]);
    }
    t
}
