//! End-to-end run: synthesize → de-noise → eigen-gains → metrics → CSV.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::denoise::{DenoiseParams, DenoiseReport};
use crate::eigengain::{EigenGainGrid, GridBuilder};
use crate::error::{Error, Result};
use crate::geometry::{MobilityPattern, PanelConfig};
use crate::io::{write_cir, write_grid};
use crate::metrics::StdConvention;
use crate::report::{denoise_table, figure_tables, metric_tables, MetricOptions, Table};
use crate::synth::{synthesize_snapshot, RenderSettings, Scene, SceneGenerator};

/// Everything a pipeline run needs. Missing JSON fields take the defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Scene JSON files; relative paths resolve against the config file.
    pub scenes: Vec<PathBuf>,
    /// Extra randomly generated scenes, positions numbered after the files.
    pub random_scenes: usize,
    pub mobility: MobilityPattern,
    /// De-noising parameters; the scale's default when absent.
    pub denoise: Option<DenoiseParams>,
    /// Forward-facing panel counts compared against the 8-panel reference.
    pub panel_counts: Vec<usize>,
    /// Panel counts whose backward-facing variant is evaluated too.
    pub rear_headband: Vec<usize>,
    /// Additional configurations, e.g. `custom-01000100`.
    pub extra_configs: Vec<PanelConfig>,
    pub seed: u64,
    /// Per-sample complex noise variance.
    pub noise_power: f64,
    pub output_dir: PathBuf,
    /// 64 × 32 × 256 instead of 256 × 128 × 2048.
    pub desk_scale: bool,
    /// Also write every synthesized CIR.
    pub write_cirs: bool,
    pub sample_std: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            scenes: Vec::new(),
            random_scenes: 0,
            mobility: MobilityPattern::default(),
            denoise: None,
            panel_counts: (1..=8).collect(),
            rear_headband: vec![1, 2, 3, 4],
            extra_configs: Vec::new(),
            seed: 0,
            noise_power: 1e-4,
            output_dir: PathBuf::from("out"),
            desk_scale: false,
            write_cirs: false,
            sample_std: false,
        }
    }
}

impl RunConfig {
    /// Reads a config file; relative scene paths become relative to it.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: RunConfig = serde_json::from_str(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        for s in &mut cfg.scenes {
            if s.is_relative() {
                *s = base.join(&*s);
            }
        }
        Ok(cfg)
    }

    pub fn render_settings(&self) -> RenderSettings {
        if self.desk_scale {
            RenderSettings::desk()
        } else {
            RenderSettings::default()
        }
    }

    pub fn denoise_params(&self) -> DenoiseParams {
        self.denoise.unwrap_or_else(|| {
            if self.desk_scale {
                DenoiseParams::desk()
            } else {
                DenoiseParams::default()
            }
        })
    }

    /// Configurations to evaluate: the 8-panel reference first, then the
    /// forward counts, backward counts and extras, without duplicates.
    pub fn configs(&self) -> Result<Vec<PanelConfig>> {
        let mut out = vec![PanelConfig::full()];
        for &p in &self.panel_counts {
            out.push(PanelConfig::forward(p)?);
        }
        for &p in &self.rear_headband {
            out.push(PanelConfig::backward(p)?);
            out.push(PanelConfig::forward(p)?);
        }
        out.extend(self.extra_configs.iter().cloned());
        let mut seen = BTreeSet::new();
        out.retain(|c| seen.insert(c.label()));
        Ok(out)
    }

    pub fn validate(&self) -> Result<()> {
        if self.scenes.is_empty() && self.random_scenes == 0 {
            return Err(Error::invalid("no scenes: give scene files or random_scenes > 0"));
        }
        if !(self.noise_power >= 0.0 && self.noise_power.is_finite()) {
            return Err(Error::invalid("noise_power must be finite and >= 0"));
        }
        self.mobility.validate()?;
        self.denoise_params().validate()?;
        self.configs()?;
        Ok(())
    }

    /// Scene files in order, then generated scenes.
    pub fn load_scenes(&self) -> Result<Vec<Scene>> {
        let mut scenes = Vec::with_capacity(self.scenes.len() + self.random_scenes);
        for path in &self.scenes {
            let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            let scene = Scene::from_json(&text).map_err(|e| match e {
                Error::Json(j) => Error::invalid(format!("{}: {j}", path.display())),
                other => other,
            })?;
            scenes.push(scene);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ 0x5CE7_E5CE_7E5C_E7E5);
        let first = scenes.iter().map(|s| s.position + 1).max().unwrap_or(0);
        let generator = SceneGenerator::default();
        for j in 0..self.random_scenes {
            scenes.push(generator.generate(&mut rng, first + j as u32));
        }
        let mut keys = BTreeSet::new();
        for s in &scenes {
            if !keys.insert((s.position, s.scenario)) {
                return Err(Error::invalid(format!(
                    "two scenes share position {} and scenario {}",
                    s.position, s.scenario
                )));
            }
        }
        Ok(scenes)
    }
}

/// Noise seed of scene `j`.
pub fn scene_seed(seed: u64, j: usize) -> u64 {
    seed.wrapping_add((j as u64 + 1).wrapping_mul(0xA076_1D64_78BD_642F))
}

/// Grids and de-noising reports for `scenes`, one snapshot in memory at a
/// time.
#[allow(clippy::too_many_arguments)]
pub fn compute_scene_grids(
    scenes: &[Scene],
    configs: &[PanelConfig],
    mobility: &MobilityPattern,
    settings: &RenderSettings,
    params: &DenoiseParams,
    noise_power: f64,
    seed: u64,
    mut on_cir: impl FnMut(&crate::tensor::CirSnapshot) -> Result<()>,
) -> Result<(Vec<EigenGainGrid>, Vec<DenoiseReport>)> {
    let n_snap = mobility.snapshot_count();
    let mut builder = GridBuilder::new(configs.to_vec(), n_snap, settings.n_tap).map_err(|e| e.in_stage("gains"))?;
    let mut reports = Vec::with_capacity(scenes.len() * n_snap);
    for (j, scene) in scenes.iter().enumerate() {
        for i in 0..n_snap {
            let cir = synthesize_snapshot(scene, mobility, settings, noise_power, scene_seed(seed, j), i)
                .map_err(|e| e.in_stage("synth"))?;
            on_cir(&cir).map_err(|e| e.in_stage("synth"))?;
            reports.push(builder.push(&cir, params).map_err(|e| e.in_stage("gains"))?);
        }
    }
    Ok((builder.finish().map_err(|e| e.in_stage("gains"))?, reports))
}

/// What a run produced.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineSummary {
    pub files: Vec<PathBuf>,
    pub n_scenes: usize,
    pub n_snapshots: usize,
    pub configs: Vec<PanelConfig>,
}

/// Removes the files it tracks unless disarmed.
struct Cleanup {
    files: Vec<PathBuf>,
    dirs: Vec<PathBuf>,
    armed: bool,
}

impl Drop for Cleanup {
    fn drop(&mut self) {
        if self.armed {
            for f in &self.files {
                let _ = fs::remove_file(f);
            }
            for d in self.dirs.iter().rev() {
                let _ = fs::remove_dir(d);
            }
        }
    }
}

impl Cleanup {
    fn create_dir(&mut self, dir: &Path) -> Result<()> {
        let mut missing = Vec::new();
        let mut d = Some(dir);
        while let Some(p) = d {
            if p.as_os_str().is_empty() || p.exists() {
                break;
            }
            missing.push(p.to_path_buf());
            d = p.parent();
        }
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        self.dirs.extend(missing.into_iter().rev());
        Ok(())
    }

    fn write_table(&mut self, dir: &Path, t: &Table) -> Result<()> {
        self.files.push(dir.join(t.name));
        t.write_to(dir)
    }
}

/// Runs the whole pipeline. On any error every file written so far is
/// removed and the error is tagged with its stage.
pub fn run_pipeline(config: &RunConfig) -> Result<PipelineSummary> {
    config.validate().map_err(|e| e.in_stage("config"))?;
    let scenes = config.load_scenes().map_err(|e| e.in_stage("config"))?;
    let configs = config.configs().map_err(|e| e.in_stage("config"))?;
    let settings = config.render_settings();
    let params = config.denoise_params();

    let out = &config.output_dir;
    let mut cleanup = Cleanup {
        files: Vec::new(),
        dirs: Vec::new(),
        armed: true,
    };
    cleanup.create_dir(out).map_err(|e| e.in_stage("output"))?;
    let cir_dir = out.join("cir");
    if config.write_cirs {
        cleanup.create_dir(&cir_dir).map_err(|e| e.in_stage("output"))?;
    }

    let (grids, reports) = {
        let cleanup = &mut cleanup;
        compute_scene_grids(
            &scenes,
            &configs,
            &config.mobility,
            &settings,
            &params,
            config.noise_power,
            config.seed,
            |cir| {
                if config.write_cirs {
                    let path = cir_dir.join(cir_file_name(&cir.key));
                    cleanup.files.push(path.clone());
                    write_cir(&path, cir)?;
                }
                Ok(())
            },
        )?
    };

    let opts = MetricOptions {
        std_convention: if config.sample_std {
            StdConvention::Sample
        } else {
            StdConvention::Population
        },
    };
    let metrics = metric_tables(&grids, opts).map_err(|e| e.in_stage("metrics"))?;
    let figures = figure_tables(&grids, opts).map_err(|e| e.in_stage("report"))?;

    let grid_dir = out.join("grids");
    cleanup.create_dir(&grid_dir).map_err(|e| e.in_stage("output"))?;
    for g in &grids {
        let path = grid_dir.join(grid_file_name(&g.config));
        cleanup.files.push(path.clone());
        write_grid(&path, g).map_err(|e| e.in_stage("output"))?;
    }
    for t in metrics
        .iter()
        .chain(&figures)
        .chain(std::iter::once(&denoise_table(&reports)))
    {
        cleanup.write_table(out, t).map_err(|e| e.in_stage("output"))?;
    }

    cleanup.armed = false;
    Ok(PipelineSummary {
        files: std::mem::take(&mut cleanup.files),
        n_scenes: scenes.len(),
        n_snapshots: config.mobility.snapshot_count(),
        configs,
    })
}

pub fn cir_file_name(key: &crate::tensor::MeasurementKey) -> String {
    format!("u{:03}_{}_i{:03}.cir", key.position, key.scenario, key.snapshot)
}

pub fn grid_file_name(config: &PanelConfig) -> String {
    format!("{}.grd", config.label())
}
