//! Per-subcarrier dominant-eigenmode gains λ[u, s, i, k].
//!
//! Each snapshot is de-noised once on all rows, transformed to the frequency
//! domain, and only then restricted to the rows of each panel configuration.

use std::collections::BTreeMap;

use crate::denoise::{denoise, DenoiseParams, DenoiseReport};
use crate::error::{CellIndex, Error, Result};
use crate::geometry::{PanelConfig, N_PANELS};
use crate::linalg::{dominant_per_slice, PowerIteration};
use crate::tensor::{CirSnapshot, Dims3, MeasurementKey, Scenario};

/// One measured (position, scenario) pair.
pub type Measurement = (u32, Scenario);

/// Dominant eigenmode gains for one panel configuration.
///
/// The (u, s) axis is the sorted list of measured (position, scenario)
/// pairs; values are stored measurement-major, then snapshot, then
/// subcarrier.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenGainGrid {
    pub config: PanelConfig,
    measurements: Vec<Measurement>,
    n_snapshots: usize,
    n_subcarriers: usize,
    values: Vec<f64>,
}

impl EigenGainGrid {
    pub fn new(
        config: PanelConfig,
        measurements: Vec<Measurement>,
        n_snapshots: usize,
        n_subcarriers: usize,
        values: Vec<f64>,
    ) -> Result<Self> {
        let expected = measurements.len() * n_snapshots * n_subcarriers;
        if values.len() != expected {
            return Err(Error::invalid(format!(
                "grid needs {expected} values, got {}",
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::invalid(format!(
                "grid values must be finite and >= 0, found {v}"
            )));
        }
        Ok(Self {
            config,
            measurements,
            n_snapshots,
            n_subcarriers,
            values,
        })
    }

    pub fn measurements(&self) -> &[Measurement] {
        &self.measurements
    }

    pub fn n_snapshots(&self) -> usize {
        self.n_snapshots
    }

    pub fn n_subcarriers(&self) -> usize {
        self.n_subcarriers
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, m: usize, i: usize, k: usize) -> f64 {
        self.values[(m * self.n_snapshots + i) * self.n_subcarriers + k]
    }

    /// λ over all subcarriers of one snapshot.
    pub fn spectrum(&self, m: usize, i: usize) -> &[f64] {
        let start = (m * self.n_snapshots + i) * self.n_subcarriers;
        &self.values[start..start + self.n_subcarriers]
    }

    pub fn cell(&self, m: usize, i: usize, k: usize) -> CellIndex {
        let (position, scenario) = self.measurements[m];
        CellIndex {
            position,
            scenario,
            snapshot: i,
            subcarrier: k,
        }
    }

    /// Whether the two grids share measurements, snapshot count and K.
    pub fn same_axes(&self, other: &EigenGainGrid) -> bool {
        self.measurements == other.measurements
            && self.n_snapshots == other.n_snapshots
            && self.n_subcarriers == other.n_subcarriers
    }

    /// Copy with every value multiplied by `f(m, i, k)`.
    pub fn map_cells(&self, mut f: impl FnMut(usize, usize, usize, f64) -> f64) -> Result<Self> {
        let mut values = Vec::with_capacity(self.values.len());
        for m in 0..self.measurements.len() {
            for i in 0..self.n_snapshots {
                for (k, &v) in self.spectrum(m, i).iter().enumerate() {
                    values.push(f(m, i, k, v));
                }
            }
        }
        Self::new(
            self.config,
            self.measurements.clone(),
            self.n_snapshots,
            self.n_subcarriers,
            values,
        )
    }
}

/// Per-snapshot scalar (u, s, i) field, e.g. λ̄ or a metric value.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotField {
    pub measurements: Vec<Measurement>,
    pub n_snapshots: usize,
    pub values: Vec<f64>,
}

impl SnapshotField {
    pub fn get(&self, m: usize, i: usize) -> f64 {
        self.values[m * self.n_snapshots + i]
    }

    /// Values of measurement `m` over snapshots.
    pub fn series(&self, m: usize) -> &[f64] {
        &self.values[m * self.n_snapshots..(m + 1) * self.n_snapshots]
    }

    /// Iterates (position, scenario, snapshot, value).
    pub fn iter(&self) -> impl Iterator<Item = (u32, Scenario, usize, f64)> + '_ {
        self.values.iter().enumerate().map(|(j, &v)| {
            let (u, s) = self.measurements[j / self.n_snapshots];
            (u, s, j % self.n_snapshots, v)
        })
    }
}

/// λ̄[u, s, i]: arithmetic mean over subcarriers.
pub fn grid_mean_over_subcarriers(grid: &EigenGainGrid) -> SnapshotField {
    let k = grid.n_subcarriers as f64;
    SnapshotField {
        measurements: grid.measurements.clone(),
        n_snapshots: grid.n_snapshots,
        values: grid
            .values
            .chunks_exact(grid.n_subcarriers.max(1))
            .map(|c| c.iter().sum::<f64>() / k)
            .collect(),
    }
}

/// Rows of an `n_rx`-row CIR that belong to `config`, with rows laid out
/// panel-major in equal blocks.
pub fn panel_rows(config: &PanelConfig, n_rx: usize) -> Result<Vec<usize>> {
    if n_rx == 0 || !n_rx.is_multiple_of(N_PANELS) {
        return Err(Error::invalid(format!(
            "{n_rx} rows do not split into {N_PANELS} panels"
        )));
    }
    let per = n_rx / N_PANELS;
    Ok(config
        .panels
        .iter()
        .flat_map(|p| p.index() * per..(p.index() + 1) * per)
        .collect())
}

/// Gains of one snapshot for several configurations.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotGains {
    pub key: MeasurementKey,
    pub report: DenoiseReport,
    /// Per configuration, λ over subcarriers.
    pub per_config: Vec<Vec<f64>>,
}

/// De-noises `cir`, transforms it to `n_subcarriers` tones and evaluates
/// every configuration on the result.
pub fn snapshot_gains(
    cir: &CirSnapshot,
    configs: &[PanelConfig],
    params: &DenoiseParams,
    n_subcarriers: usize,
) -> Result<SnapshotGains> {
    let rows = configs
        .iter()
        .map(|c| panel_rows(c, cir.dims().n_rx))
        .collect::<Result<Vec<_>>>()?;
    let (clean, report) = denoise(cir, params)?;
    let ctf = clean.into_ctf(n_subcarriers)?;
    let tones: Vec<usize> = (0..n_subcarriers).collect();
    let per_config = rows
        .iter()
        .map(|r| dominant_per_slice(&ctf.tensor, r, &tones, PowerIteration::default()))
        .collect::<Result<Vec<_>>>()?;
    Ok(SnapshotGains {
        key: cir.key,
        report,
        per_config,
    })
}

/// Assembles grids for several configurations from streamed snapshots.
#[derive(Debug)]
pub struct GridBuilder {
    configs: Vec<PanelConfig>,
    n_snapshots: usize,
    n_subcarriers: usize,
    dims: Option<(Dims3, f64)>,
    cells: BTreeMap<Measurement, Vec<Option<Vec<Vec<f64>>>>>,
}

impl GridBuilder {
    pub fn new(configs: Vec<PanelConfig>, n_snapshots: usize, n_subcarriers: usize) -> Result<Self> {
        if configs.is_empty() || n_snapshots == 0 || n_subcarriers == 0 {
            return Err(Error::invalid("grid needs configurations, snapshots and subcarriers"));
        }
        Ok(Self {
            configs,
            n_snapshots,
            n_subcarriers,
            dims: None,
            cells: BTreeMap::new(),
        })
    }

    /// Checks that `cir` is compatible with every earlier snapshot.
    pub fn check(&mut self, cir: &CirSnapshot) -> Result<()> {
        let this = (cir.dims(), cir.tap_spacing);
        match self.dims {
            None => self.dims = Some(this),
            Some(first) if first != this => {
                return Err(Error::invalid(format!(
                    "snapshot {} is {} at {:e} s, expected {} at {:e} s",
                    cir.key.snapshot, this.0, this.1, first.0, first.1
                )))
            }
            Some(_) => {}
        }
        if cir.key.snapshot as usize >= self.n_snapshots {
            return Err(Error::invalid(format!(
                "snapshot index {} out of range for {} snapshots",
                cir.key.snapshot, self.n_snapshots
            )));
        }
        Ok(())
    }

    pub fn insert(&mut self, gains: SnapshotGains) -> Result<()> {
        let key = gains.key;
        if gains.per_config.len() != self.configs.len()
            || gains.per_config.iter().any(|v| v.len() != self.n_subcarriers)
        {
            return Err(Error::invalid("snapshot gains do not match the builder's axes"));
        }
        let i = key.snapshot as usize;
        if i >= self.n_snapshots {
            return Err(Error::invalid(format!("snapshot index {i} out of range")));
        }
        let slots = self
            .cells
            .entry((key.position, key.scenario))
            .or_insert_with(|| vec![None; self.n_snapshots]);
        if slots[i].is_some() {
            return Err(Error::invalid(format!(
                "duplicate snapshot (u={}, s={}, i={i})",
                key.position, key.scenario
            )));
        }
        slots[i] = Some(gains.per_config);
        Ok(())
    }

    /// Processes one CIR and stores its gains.
    pub fn push(&mut self, cir: &CirSnapshot, params: &DenoiseParams) -> Result<DenoiseReport> {
        self.check(cir)?;
        let gains = snapshot_gains(cir, &self.configs, params, self.n_subcarriers)?;
        let report = gains.report.clone();
        self.insert(gains)?;
        Ok(report)
    }

    pub fn finish(self) -> Result<Vec<EigenGainGrid>> {
        let measurements: Vec<Measurement> = self.cells.keys().copied().collect();
        let mut values: Vec<Vec<f64>> = vec![Vec::new(); self.configs.len()];
        for ((u, s), slots) in self.cells {
            for (i, slot) in slots.into_iter().enumerate() {
                let per_config =
                    slot.ok_or_else(|| Error::invalid(format!("missing snapshot (u={u}, s={s}, i={i})")))?;
                for (dst, src) in values.iter_mut().zip(per_config) {
                    dst.extend(src);
                }
            }
        }
        self.configs
            .into_iter()
            .zip(values)
            .map(|(c, v)| EigenGainGrid::new(c, measurements.clone(), self.n_snapshots, self.n_subcarriers, v))
            .collect()
    }
}

/// Grids for several configurations; the (u, s) axis and snapshot count are
/// taken from the snapshot keys, K equals the tap count.
pub fn compute_grids(
    snapshots: &[CirSnapshot],
    configs: &[PanelConfig],
    params: &DenoiseParams,
) -> Result<(Vec<EigenGainGrid>, Vec<DenoiseReport>)> {
    let first = snapshots.first().ok_or_else(|| Error::invalid("no snapshots"))?;
    let n_snapshots = snapshots.iter().map(|c| c.key.snapshot as usize + 1).max().unwrap_or(0);
    let mut builder = GridBuilder::new(configs.to_vec(), n_snapshots, first.dims().n_tap)?;
    let mut reports = Vec::with_capacity(snapshots.len());
    for cir in snapshots {
        reports.push(builder.push(cir, params)?);
    }
    Ok((builder.finish()?, reports))
}

pub fn compute_grid(snapshots: &[CirSnapshot], config: &PanelConfig, params: &DenoiseParams) -> Result<EigenGainGrid> {
    let (mut grids, _) = compute_grids(snapshots, std::slice::from_ref(config), params)?;
    Ok(grids.remove(0))
}
