//! Geometric multipath synthesizer.
//!
//! A [`Scene`] is an authored list of plane-wave multipath components (no
//! ray tracing). Each snapshot places the UE at the mobility-pattern pose,
//! attenuates components whose last leg crosses the blocker, and renders
//! every component into every antenna pair as a band-limited pulse weighted
//! by the patch patterns and array phases at both ends. Circularly-symmetric
//! Gaussian noise is added from a per-(snapshot, rx) sub-seed so that
//! parallel and serial renders are bit-identical.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{
    carrier_wavelength, element_body_frame, ue_pose_at, ArrayLayout, MobilityPattern, Panel, Pose, Vec3,
};
use crate::tensor::{CirSnapshot, ComplexTensor3, Dims3, MeasurementKey, Scenario, DEFAULT_TAP_SPACING};

/// Default patch pattern exponent: amplitude cos²θ.
pub const DEFAULT_PATTERN_EXPONENT: f64 = 2.0;
/// One-sided pulse support in taps.
pub const PULSE_HALF_WIDTH: usize = 8;

/// Direction in degrees: azimuth counterclockwise from room `x`, elevation
/// up from the horizontal plane.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Angles {
    pub azimuth_deg: f64,
    pub elevation_deg: f64,
}

impl Angles {
    pub fn new(azimuth_deg: f64, elevation_deg: f64) -> Self {
        Self {
            azimuth_deg,
            elevation_deg,
        }
    }

    pub fn unit_vector(&self) -> Vec3 {
        let (az, el) = (self.azimuth_deg.to_radians(), self.elevation_deg.to_radians());
        Vec3::new(el.cos() * az.cos(), el.cos() * az.sin(), el.sin())
    }

    pub fn from_vector(v: &Vec3) -> Self {
        let n = v.norm();
        Self {
            azimuth_deg: v.y.atan2(v.x).to_degrees(),
            elevation_deg: (v.z / n).clamp(-1.0, 1.0).asin().to_degrees(),
        }
    }
}

fn default_pol_weights() -> [f64; 2] {
    [1.0, 0.3]
}

/// One propagation path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mpc {
    /// Complex amplitude, serialized as `[re, im]`.
    pub gain: Complex64,
    /// Seconds after the reference delay.
    pub excess_delay: f64,
    /// Direction from the UE towards where the path arrives from.
    pub aoa: Angles,
    /// Direction in which the path leaves the AP.
    pub aod: Angles,
    #[serde(default)]
    pub is_los: bool,
    /// Reflection order, 0 for the direct path.
    #[serde(default)]
    pub order: u8,
    /// Co- and cross-polarization coupling.
    #[serde(default = "default_pol_weights")]
    pub pol_weights: [f64; 2],
}

fn default_loss_db() -> f64 {
    20.0
}

/// Vertical cylinder standing in for a human body.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Blocker {
    /// Axis midpoint, metres.
    pub center: [f64; 3],
    pub radius: f64,
    pub height: f64,
    #[serde(default = "default_loss_db")]
    pub loss_db: f64,
}

impl Blocker {
    /// Whether the segment `a → b` passes through the cylinder.
    pub fn intersects_segment(&self, a: &Vec3, b: &Vec3) -> bool {
        let c = Vec3::from(self.center);
        let d = b - a;
        let (fx, fy) = (a.x - c.x, a.y - c.y);
        // |(f + s·d)_xy|² ≤ r²  →  qa s² + qb s + qc ≤ 0
        let qa = d.x * d.x + d.y * d.y;
        let qb = 2.0 * (fx * d.x + fy * d.y);
        let qc = fx * fx + fy * fy - self.radius * self.radius;
        let (s0, s1) = if qa == 0.0 {
            if qc > 0.0 {
                return false;
            }
            (0.0, 1.0)
        } else {
            let disc = qb * qb - 4.0 * qa * qc;
            if disc < 0.0 {
                return false;
            }
            let sq = disc.sqrt();
            ((-qb - sq) / (2.0 * qa), (-qb + sq) / (2.0 * qa))
        };
        let (s0, s1) = (s0.max(0.0), s1.min(1.0));
        if s0 > s1 {
            return false;
        }
        // z is linear in s, so the overlap check reduces to an interval test
        let (za, zb) = (a.z + s0 * d.z, a.z + s1 * d.z);
        let (lo, hi) = (c.z - self.height / 2.0, c.z + self.height / 2.0);
        za.min(zb) <= hi && za.max(zb) >= lo
    }

    pub fn amplitude_factor(&self) -> f64 {
        10f64.powf(-self.loss_db / 20.0)
    }
}

/// Planar AP array facing `boresight`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ApArray {
    pub n_horizontal: usize,
    pub n_vertical: usize,
    pub polarizations: usize,
    pub element_pitch: f64,
    pub boresight: Angles,
}

impl Default for ApArray {
    fn default() -> Self {
        Self {
            n_horizontal: 16,
            n_vertical: 4,
            polarizations: 2,
            element_pitch: 5.357e-3,
            boresight: Angles::default(),
        }
    }
}

impl ApArray {
    pub fn n_tx(&self) -> usize {
        self.n_horizontal * self.n_vertical * self.polarizations
    }

    /// Element offsets from the array centre, in tx-element order.
    fn element_offsets(&self) -> Vec<Vec3> {
        let b = self.boresight.unit_vector();
        let mut h = Vec3::z().cross(&b);
        if h.norm() < 1e-9 {
            h = Vec3::x();
        }
        let h = h.normalize();
        let v = b.cross(&h);
        let hc = (self.n_horizontal as f64 - 1.0) / 2.0;
        let vc = (self.n_vertical as f64 - 1.0) / 2.0;
        let mut out = Vec::with_capacity(self.n_horizontal * self.n_vertical);
        for row in 0..self.n_vertical {
            for col in 0..self.n_horizontal {
                out.push(h * ((col as f64 - hc) * self.element_pitch) + v * ((vc - row as f64) * self.element_pitch));
            }
        }
        out
    }
}

/// Authored single-bounce propagation scene for one measurement position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    /// Position index `u`.
    #[serde(default)]
    pub position: u32,
    #[serde(default = "default_scenario")]
    pub scenario: Scenario,
    pub ap_position: [f64; 3],
    #[serde(default)]
    pub ap_array: ApArray,
    /// UE centre of mass at t = 0.
    pub ue_base_position: [f64; 3],
    /// Body-frame heading at t = 0; the looking direction points at
    /// azimuth 270° + this value.
    #[serde(default)]
    pub ue_initial_yaw_deg: f64,
    /// Room extent along x and y, metres.
    #[serde(default = "default_room")]
    pub room_bounds: [f64; 2],
    #[serde(default)]
    pub mpcs: Vec<Mpc>,
    #[serde(default)]
    pub blocker: Option<Blocker>,
}

fn default_scenario() -> Scenario {
    Scenario::Los
}

fn default_room() -> [f64; 2] {
    [9.15, 6.0]
}

impl Scene {
    pub fn from_json(text: &str) -> Result<Self> {
        let scene: Scene = serde_json::from_str(text)?;
        scene.validate()?;
        Ok(scene)
    }

    pub fn validate(&self) -> Result<()> {
        let inside = |p: &[f64; 3]| {
            p.iter().all(|v| v.is_finite())
                && (0.0..=self.room_bounds[0]).contains(&p[0])
                && (0.0..=self.room_bounds[1]).contains(&p[1])
        };
        if !inside(&self.ap_position) {
            return Err(Error::invalid("AP position outside the room"));
        }
        if !inside(&self.ue_base_position) {
            return Err(Error::invalid("UE position outside the room"));
        }
        if self.mpcs.iter().filter(|m| m.is_los).count() > 1 {
            return Err(Error::invalid("scene has more than one LOS component"));
        }
        for (i, m) in self.mpcs.iter().enumerate() {
            if !(m.gain.norm() > 0.0 && m.gain.is_finite()) {
                return Err(Error::invalid(format!("MPC {i}: gain must be finite and nonzero")));
            }
            if !(m.excess_delay >= 0.0 && m.excess_delay.is_finite()) {
                return Err(Error::invalid(format!("MPC {i}: excess delay must be >= 0")));
            }
        }
        if let Some(b) = &self.blocker {
            if !(b.radius > 0.0 && b.height > 0.0 && b.loss_db >= 0.0) {
                return Err(Error::invalid("blocker needs radius > 0, height > 0 and loss >= 0 dB"));
            }
        }
        if self.ap_array.n_tx() == 0 {
            return Err(Error::invalid("AP array has no elements"));
        }
        Ok(())
    }

    pub fn ap(&self) -> Vec3 {
        Vec3::from(self.ap_position)
    }

    pub fn ue_base(&self) -> Vec3 {
        Vec3::from(self.ue_base_position)
    }
}

/// Tensor dimensions and antenna models used for rendering.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderSettings {
    pub layout: ArrayLayout,
    /// Overrides the scene's AP grid as (horizontal, vertical) when set.
    pub ap_grid: Option<(usize, usize)>,
    pub n_tap: usize,
    pub tap_spacing: f64,
    pub pattern_exponent: f64,
}

impl Default for RenderSettings {
    /// 256 × 128 × 2048 at 1.3 ns.
    fn default() -> Self {
        Self {
            layout: ArrayLayout::default(),
            ap_grid: None,
            n_tap: 2048,
            tap_spacing: DEFAULT_TAP_SPACING,
            pattern_exponent: DEFAULT_PATTERN_EXPONENT,
        }
    }
}

impl RenderSettings {
    /// 64 × 32 × 256: 2×2-element panels, 4×4 dual-pol AP, 256 taps.
    pub fn desk() -> Self {
        Self {
            layout: ArrayLayout::desk(),
            ap_grid: Some((4, 4)),
            n_tap: 256,
            ..Self::default()
        }
    }

    pub fn ap_array(&self, scene: &Scene) -> ApArray {
        let mut ap = scene.ap_array.clone();
        if let Some((h, v)) = self.ap_grid {
            ap.n_horizontal = h;
            ap.n_vertical = v;
        }
        ap
    }

    pub fn max_delay(&self) -> f64 {
        self.n_tap as f64 * self.tap_spacing
    }

    pub fn dims(&self, scene: &Scene) -> Dims3 {
        Dims3::new(self.layout.n_rx(), self.ap_array(scene).n_tx(), self.n_tap)
    }
}

/// Patch element response: amplitude cosᵠθ inside the front hemisphere,
/// zero behind; plane-wave phase `exp(j·2π/λ·⟨toward, position⟩)` where
/// `toward` points from the element to the far end of the path.
pub fn patch_response(toward: &Vec3, position: &Vec3, boresight: &Vec3, exponent: f64) -> Complex64 {
    let cos_theta = toward.dot(boresight);
    if cos_theta <= 0.0 {
        return Complex64::new(0.0, 0.0);
    }
    let k = 2.0 * std::f64::consts::PI / carrier_wavelength();
    Complex64::from_polar(cos_theta.powf(exponent), k * toward.dot(position))
}

/// Receive-element response to `mpc` with the default pattern exponent.
///
/// The arrival (propagation) direction is `-aoa`, so the phase term is
/// `exp(-j·2π/λ·⟨arrival, position⟩)`.
pub fn element_response(mpc: &Mpc, position: &Vec3, boresight: &Vec3) -> Complex64 {
    patch_response(&mpc.aoa.unit_vector(), position, boresight, DEFAULT_PATTERN_EXPONENT)
}

/// Effective components for one pose: any component whose last leg crosses
/// the blocker is attenuated by `loss_db`. The LOS leg runs from the AP to
/// the UE centre of mass; a reflected leg runs from the centre of mass along
/// its angle of arrival to the room boundary.
pub fn apply_blockage(scene: &Scene, pose: &Pose) -> Vec<Mpc> {
    let Some(blocker) = &scene.blocker else {
        return scene.mpcs.clone();
    };
    let com = pose.center_of_mass;
    scene
        .mpcs
        .iter()
        .map(|m| {
            let far = if m.is_los {
                scene.ap()
            } else {
                let u = m.aoa.unit_vector();
                com + u * exit_distance(&com, &u, scene.room_bounds)
            };
            let mut m = m.clone();
            if blocker.intersects_segment(&com, &far) {
                m.gain *= blocker.amplitude_factor();
            }
            m
        })
        .collect()
}

/// Distance from `p` along `u` to the room's vertical walls (3 m if `u` is
/// vertical).
fn exit_distance(p: &Vec3, u: &Vec3, room: [f64; 2]) -> f64 {
    let mut best = f64::INFINITY;
    for (pos, dir, size) in [(p.x, u.x, room[0]), (p.y, u.y, room[1])] {
        if dir > 1e-12 {
            best = best.min((size - pos) / dir);
        } else if dir < -1e-12 {
            best = best.min(-pos / dir);
        }
    }
    if best.is_finite() {
        best.max(0.0)
    } else {
        3.0
    }
}

/// Sampled pulse starting at tap `first_tap`.
#[derive(Debug, Clone, PartialEq)]
pub struct Pulse {
    pub first_tap: usize,
    pub coeffs: Vec<f64>,
}

/// Unit-energy Hann-windowed sinc centred at `delay / tap_spacing`, support
/// ±8 taps, cut to `[0, n_tap)` and renormalized after the cut.
pub fn band_limited_pulse(delay: f64, tap_spacing: f64, n_tap: usize) -> Pulse {
    let centre = delay / tap_spacing;
    let hw = PULSE_HALF_WIDTH as f64;
    let lo = (centre - hw).ceil().max(0.0) as usize;
    let hi = ((centre + hw).floor() as usize).min(n_tap.saturating_sub(1));
    if lo > hi || n_tap == 0 {
        return Pulse {
            first_tap: lo.min(n_tap),
            coeffs: Vec::new(),
        };
    }
    let mut coeffs: Vec<f64> = (lo..=hi)
        .map(|n| {
            let x = n as f64 - centre;
            let window = 0.5 * (1.0 + (std::f64::consts::PI * x / (hw + 1.0)).cos());
            sinc(x) * window
        })
        .collect();
    let energy: f64 = coeffs.iter().map(|c| c * c).sum();
    if energy > 0.0 {
        let s = energy.sqrt().recip();
        coeffs.iter_mut().for_each(|c| *c *= s);
    }
    Pulse { first_tap: lo, coeffs }
}

fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        let px = std::f64::consts::PI * x;
        px.sin() / px
    }
}

struct SnapshotPlan {
    /// Per MPC, per rx element (panel-major).
    rx: Vec<Vec<Complex64>>,
    /// Per MPC, per tx element.
    tx: Vec<Vec<Complex64>>,
    pulses: Vec<Pulse>,
    mpcs: Vec<Mpc>,
}

fn plan_snapshot(scene: &Scene, pose: &Pose, settings: &RenderSettings) -> SnapshotPlan {
    let layout = &settings.layout;
    let ap = settings.ap_array(scene);
    let mpcs = apply_blockage(scene, pose);
    let rot = pose.rotation();
    let base = scene.ue_base();
    // element positions relative to the t = 0 centre of mass
    let rx_elems: Vec<(Vec3, Vec3)> = (0..crate::geometry::N_PANELS)
        .flat_map(|p| (0..layout.elements_per_panel).map(move |e| (p, e)))
        .map(|(p, e)| {
            let (pos, n) = element_body_frame(Panel::new(p).unwrap(), e, layout);
            (pose.center_of_mass - base + rot * pos, rot * n)
        })
        .collect();
    let ap_b = ap.boresight.unit_vector();
    let tx_offsets = ap.element_offsets();
    let q = settings.pattern_exponent;
    SnapshotPlan {
        rx: mpcs
            .iter()
            .map(|m| {
                let u = m.aoa.unit_vector();
                rx_elems.iter().map(|(p, n)| patch_response(&u, p, n, q)).collect()
            })
            .collect(),
        tx: mpcs
            .iter()
            .map(|m| {
                let u = m.aod.unit_vector();
                tx_offsets.iter().map(|p| patch_response(&u, p, &ap_b, q)).collect()
            })
            .collect(),
        pulses: mpcs
            .iter()
            .map(|m| band_limited_pulse(m.excess_delay, settings.tap_spacing, settings.n_tap))
            .collect(),
        mpcs,
    }
}

/// Sub-seed for one (snapshot, rx row) noise stream.
fn noise_seed(seed: u64, snapshot: u64, rx: u64) -> u64 {
    // splitmix64 over the packed inputs
    let mut z = seed
        .wrapping_add(snapshot.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(rx.wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Renders snapshot `i` of a measurement.
pub fn synthesize_snapshot(
    scene: &Scene,
    pattern: &MobilityPattern,
    settings: &RenderSettings,
    noise_power: f64,
    seed: u64,
    i: usize,
) -> Result<CirSnapshot> {
    if !(noise_power >= 0.0 && noise_power.is_finite()) {
        return Err(Error::invalid(format!("noise power must be >= 0, got {noise_power}")));
    }
    settings.layout.validate()?;
    let max_delay = settings.max_delay();
    if let Some(m) = scene.mpcs.iter().find(|m| m.excess_delay >= max_delay) {
        return Err(Error::invalid(format!(
            "MPC delay {:.3e} s is beyond the {:.3e} s observable window",
            m.excess_delay, max_delay
        )));
    }
    let pose = ue_pose_at(
        pattern.snapshot_time(i),
        pattern,
        scene.ue_base(),
        scene.ue_initial_yaw_deg,
    )?;
    let plan = plan_snapshot(scene, &pose, settings);
    let dims = settings.dims(scene);
    let rx_pols = settings.layout.polarizations;
    let tx_pols = settings.ap_array(scene).polarizations;
    let n_tap = dims.n_tap;
    let sigma = (noise_power / 2.0).sqrt();

    let mut tensor = ComplexTensor3::zeros(dims);
    tensor
        .as_mut_slice()
        .par_chunks_mut(dims.n_tx * n_tap)
        .enumerate()
        .for_each(|(rx, block)| {
            let (rx_el, rx_pol) = (rx / rx_pols, rx % rx_pols);
            for (tx, out) in block.chunks_exact_mut(n_tap).enumerate() {
                let (tx_el, tx_pol) = (tx / tx_pols, tx % tx_pols);
                for (m, mpc) in plan.mpcs.iter().enumerate() {
                    let w = mpc.pol_weights[usize::from(rx_pol != tx_pol)];
                    let coef = mpc.gain * plan.rx[m][rx_el] * plan.tx[m][tx_el] * w;
                    if coef == Complex64::new(0.0, 0.0) {
                        continue;
                    }
                    let pulse = &plan.pulses[m];
                    for (z, c) in out[pulse.first_tap..].iter_mut().zip(&pulse.coeffs) {
                        *z += coef * c;
                    }
                }
            }
            if sigma > 0.0 {
                let mut rng = ChaCha8Rng::seed_from_u64(noise_seed(seed, i as u64, rx as u64));
                for z in block.iter_mut() {
                    let re: f64 = rng.sample(StandardNormal);
                    let im: f64 = rng.sample(StandardNormal);
                    *z += Complex64::new(sigma * re, sigma * im);
                }
            }
        });
    let key = MeasurementKey::new(scene.position, scene.scenario, i as u32);
    CirSnapshot::new(tensor, settings.tap_spacing, key)
}

/// All snapshots of one measurement (33 at the default pattern).
pub fn synthesize_measurement(
    scene: &Scene,
    pattern: &MobilityPattern,
    settings: &RenderSettings,
    noise_power: f64,
    seed: u64,
) -> Result<Vec<CirSnapshot>> {
    scene.validate()?;
    pattern.validate()?;
    (0..pattern.snapshot_count())
        .map(|i| synthesize_snapshot(scene, pattern, settings, noise_power, seed, i))
        .collect()
}

/// Random scene family for ensemble runs: one direct path from a corner AP
/// plus a handful of weaker single-bounce paths with random arrival
/// directions, optionally with a body blocker in front of the UE.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneGenerator {
    pub room: [f64; 2],
    pub ap_position: [f64; 3],
    pub ap_boresight: Angles,
    pub ue_height: f64,
    /// Inclusive range of reflected paths per scene.
    pub reflections: (usize, usize),
    /// Reflected path power below the direct path, dB (uniform range).
    pub reflection_loss_db: (f64, f64),
    /// Reflected path excess delay, seconds (uniform range).
    pub reflection_delay: (f64, f64),
    /// Fraction of scenes that get a blocker on the direct path.
    pub nlos_fraction: f64,
    pub blocker_loss_db: f64,
}

impl Default for SceneGenerator {
    fn default() -> Self {
        Self {
            room: [9.15, 6.0],
            ap_position: [0.4, 5.6, 1.6],
            ap_boresight: Angles::new(-45.0, 0.0),
            ue_height: 1.3,
            reflections: (3, 8),
            reflection_loss_db: (6.0, 18.0),
            reflection_delay: (3e-9, 100e-9),
            nlos_fraction: 0.5,
            blocker_loss_db: 20.0,
        }
    }
}

impl SceneGenerator {
    pub fn generate<R: Rng + ?Sized>(&self, rng: &mut R, position: u32) -> Scene {
        let ap = Vec3::from(self.ap_position);
        // keep the UE inside the AP's front half-space and away from walls
        let ue = loop {
            let p = Vec3::new(
                rng.random_range(0.8..self.room[0] - 0.8),
                rng.random_range(0.8..self.room[1] - 0.8),
                self.ue_height,
            );
            if (p - ap).dot(&self.ap_boresight.unit_vector()) > 1.0 {
                break p;
            }
        };
        let to_ap = ap - ue;
        let mut mpcs = vec![Mpc {
            gain: Complex64::from_polar(1.0, rng.random_range(0.0..std::f64::consts::TAU)),
            excess_delay: 0.0,
            aoa: Angles::from_vector(&to_ap),
            aod: Angles::from_vector(&-to_ap),
            is_los: true,
            order: 0,
            pol_weights: default_pol_weights(),
        }];
        let n_refl = rng.random_range(self.reflections.0..=self.reflections.1);
        let ap_az = self.ap_boresight.azimuth_deg;
        for _ in 0..n_refl {
            let loss = rng.random_range(self.reflection_loss_db.0..=self.reflection_loss_db.1);
            mpcs.push(Mpc {
                gain: Complex64::from_polar(10f64.powf(-loss / 20.0), rng.random_range(0.0..std::f64::consts::TAU)),
                excess_delay: rng.random_range(self.reflection_delay.0..self.reflection_delay.1),
                aoa: Angles::new(rng.random_range(-180.0..180.0), rng.random_range(-25.0..35.0)),
                aod: Angles::new(ap_az + rng.random_range(-70.0..70.0), rng.random_range(-20.0..20.0)),
                is_los: false,
                order: 1,
                pol_weights: default_pol_weights(),
            });
        }
        let nlos = rng.random::<f64>() < self.nlos_fraction;
        let blocker = nlos.then(|| {
            let dir = to_ap.normalize();
            let c = ue + dir * 0.6;
            Blocker {
                center: [c.x, c.y, 0.9],
                radius: 0.18,
                height: 1.8,
                loss_db: self.blocker_loss_db,
            }
        });
        Scene {
            position,
            scenario: if nlos { Scenario::Nlos } else { Scenario::Los },
            ap_position: self.ap_position,
            ap_array: ApArray {
                boresight: self.ap_boresight,
                ..ApArray::default()
            },
            ue_base_position: [ue.x, ue.y, ue.z],
            ue_initial_yaw_deg: rng.random_range(0.0..360.0),
            room_bounds: self.room,
            mpcs,
            blocker,
        }
    }
}
