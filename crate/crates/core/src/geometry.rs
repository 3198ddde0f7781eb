//! Receiver geometry: the octagonal eight-panel layout, panel configurations,
//! receive-row indexing and the yaw/pitch mobility pattern.
//!
//! Frames: the UE body frame has `z` up and measures panel azimuths
//! counterclockwise (seen from above) from the body `x` axis. Panel I sits at
//! 0°, panel II at 45° and so on, which puts the looking direction (panel VII)
//! at 270°, i.e. along body `-y`. A pose rotates the body frame into the room
//! frame as `Rz(initial_yaw + yaw) · Rx(pitch)`: extrinsic x-then-z, so
//! positive yaw turns left and positive pitch tips the looking direction
//! towards the floor.

use std::fmt;
use std::str::FromStr;

use nalgebra::{Rotation3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;

pub const CARRIER_HZ: f64 = 28e9;
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;
pub const N_PANELS: usize = 8;

pub fn carrier_wavelength() -> f64 {
    SPEED_OF_LIGHT / CARRIER_HZ
}

const ROMAN: [&str; N_PANELS] = ["I", "II", "III", "IV", "V", "VI", "VII", "VIII"];

/// One of the eight panels, `0` = I … `7` = VIII.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Panel(u8);

impl Panel {
    /// Panel facing the looking direction.
    pub const VII: Panel = Panel(6);
    /// Rear panel, only used by backward-facing configurations.
    pub const III: Panel = Panel(2);

    pub fn new(index: usize) -> Result<Self> {
        if index < N_PANELS {
            Ok(Panel(index as u8))
        } else {
            Err(Error::invalid(format!("panel index {index} out of range 0..8")))
        }
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn roman(self) -> &'static str {
        ROMAN[self.index()]
    }

    /// Mirror image about the looking axis (left/right swap).
    pub fn mirrored_left_right(self) -> Panel {
        Panel(((12 - self.index()) % N_PANELS) as u8)
    }
}

impl fmt::Display for Panel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.roman())
    }
}

impl FromStr for Panel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim();
        if let Some(i) = ROMAN.iter().position(|r| r.eq_ignore_ascii_case(t)) {
            return Ok(Panel(i as u8));
        }
        Err(Error::invalid(format!("unknown panel {t:?} (expected I..VIII)")))
    }
}

/// Subset of the eight panels as a bit mask (bit `i` = panel `i`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct PanelSet(u8);

impl PanelSet {
    pub const ALL: PanelSet = PanelSet(0xff);

    pub fn from_mask(mask: u8) -> Self {
        PanelSet(mask)
    }

    pub fn from_indices(indices: &[usize]) -> Result<Self> {
        let mut mask = 0u8;
        for &i in indices {
            mask |= 1 << Panel::new(i)?.0;
        }
        Ok(PanelSet(mask))
    }

    pub fn mask(self) -> u8 {
        self.0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn contains(self, panel: Panel) -> bool {
        self.0 & (1 << panel.0) != 0
    }

    pub fn is_subset_of(self, other: PanelSet) -> bool {
        self.0 & !other.0 == 0
    }

    pub fn iter(self) -> impl Iterator<Item = Panel> {
        (0..N_PANELS as u8).filter(move |i| self.0 & (1 << i) != 0).map(Panel)
    }

    pub fn mirrored_left_right(self) -> PanelSet {
        PanelSet(self.iter().fold(0, |m, p| m | 1 << p.mirrored_left_right().0))
    }

    /// Membership string, character `i` for panel `i` (e.g. `"00000010"` is {VII}).
    pub fn bits(self) -> String {
        (0..N_PANELS)
            .map(|i| if self.0 & (1 << i) != 0 { '1' } else { '0' })
            .collect()
    }
}

impl fmt::Display for PanelSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<&str> = self.iter().map(Panel::roman).collect();
        write!(f, "{{{}}}", names.join(","))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Facing {
    Forward,
    Backward,
    /// Any other subset, e.g. a nested chain for interlacing checks.
    Custom,
}

// Panel sets of the forward- and backward-facing 1..8 panel head-mounted
// configurations, indexed by p - 1. Bit i = panel i (I = bit 0).
// Forward sets never use the rear panel III below p = 8; backward sets
// always do. Every set is symmetric about the looking axis.
const FORWARD_SETS: [u8; N_PANELS] = [
    0b0100_0000, // {VII}
    0b0001_0001, // {I,V}
    0b0100_1010, // {II,IV,VII}
    0b1010_1010, // {II,IV,VI,VIII}
    0b1110_1010, // {II,IV,VI,VII,VIII}
    0b1011_1011, // {I,II,IV,V,VI,VIII}
    0b1111_1011, // all but III
    0b1111_1111,
];
const BACKWARD_SETS: [u8; N_PANELS] = [
    0b0000_0100, // {III}
    0b0100_0100, // {III,VII}
    0b1010_0100, // {III,VI,VIII}
    0b0101_0101, // {I,III,V,VII}
    0b1010_1110, // {II,III,IV,VI,VIII}
    0b1110_1110, // {II,III,IV,VI,VII,VIII}
    0b1011_1111, // all but VII
    0b1111_1111,
];

/// A panel subset with its facing label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PanelConfig {
    pub panels: PanelSet,
    pub facing: Facing,
}

impl PanelConfig {
    pub fn forward(p: usize) -> Result<Self> {
        Self::from_table(&FORWARD_SETS, p, Facing::Forward)
    }

    pub fn backward(p: usize) -> Result<Self> {
        Self::from_table(&BACKWARD_SETS, p, Facing::Backward)
    }

    pub fn full() -> Self {
        Self {
            panels: PanelSet::ALL,
            facing: Facing::Forward,
        }
    }

    pub fn custom(panels: PanelSet) -> Result<Self> {
        if panels.is_empty() {
            return Err(Error::invalid("panel configuration must contain at least one panel"));
        }
        Ok(Self {
            panels,
            facing: Facing::Custom,
        })
    }

    fn from_table(table: &[u8; N_PANELS], p: usize, facing: Facing) -> Result<Self> {
        if !(1..=N_PANELS).contains(&p) {
            return Err(Error::invalid(format!("panel count must be 1..=8, got {p}")));
        }
        Ok(Self {
            panels: PanelSet(table[p - 1]),
            facing,
        })
    }

    /// Number of panels.
    pub fn p(&self) -> usize {
        self.panels.len()
    }

    /// Short stable label, e.g. `fwd4`, `bwd1`, `custom-01000100`.
    pub fn label(&self) -> String {
        match self.facing {
            Facing::Forward => format!("fwd{}", self.p()),
            Facing::Backward => format!("bwd{}", self.p()),
            Facing::Custom => format!("custom-{}", self.panels.bits()),
        }
    }
}

impl Serialize for PanelConfig {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.label())
    }
}

impl<'de> Deserialize<'de> for PanelConfig {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

impl fmt::Display for PanelConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}", self.label(), self.panels)
    }
}

impl FromStr for PanelConfig {
    type Err = Error;

    /// Accepts `forward:P`, `backward:P`, `fwdP`, `bwdP`, a membership string
    /// such as `01010101`, or a roman list such as `I,III,VII`.
    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim();
        let lower = t.to_ascii_lowercase();
        let count = |rest: &str| {
            rest.parse::<usize>()
                .map_err(|_| Error::invalid(format!("bad panel count in {t:?}")))
        };
        if let Some(rest) = lower.strip_prefix("forward:").or_else(|| lower.strip_prefix("fwd")) {
            return PanelConfig::forward(count(rest)?);
        }
        if let Some(rest) = lower.strip_prefix("backward:").or_else(|| lower.strip_prefix("bwd")) {
            return PanelConfig::backward(count(rest)?);
        }
        let body = lower.strip_prefix("custom-").unwrap_or(&lower);
        if body.len() == N_PANELS && body.chars().all(|c| c == '0' || c == '1') {
            let mask = body
                .chars()
                .enumerate()
                .fold(0u8, |m, (i, c)| if c == '1' { m | 1 << i } else { m });
            return PanelConfig::custom(PanelSet(mask));
        }
        let mut mask = 0u8;
        for part in t.split(',') {
            mask |= 1 << part.parse::<Panel>()?.0;
        }
        PanelConfig::custom(PanelSet(mask))
    }
}

/// Octagonal UE antenna layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArrayLayout {
    /// Outward azimuth of each panel in the body frame, degrees.
    pub panel_azimuths_deg: [f64; N_PANELS],
    /// Square grid per panel (16 = 4×4).
    pub elements_per_panel: usize,
    pub polarizations: usize,
    /// Element spacing in metres.
    pub element_pitch: f64,
    /// Distance from the UE centre to each panel centre, metres.
    pub panel_radius: f64,
}

impl Default for ArrayLayout {
    fn default() -> Self {
        Self {
            panel_azimuths_deg: std::array::from_fn(|k| k as f64 * 45.0),
            elements_per_panel: 16,
            polarizations: 2,
            element_pitch: 5.357e-3,
            panel_radius: 0.05,
        }
    }
}

impl ArrayLayout {
    /// Reduced 2×2-element panels for fast runs.
    pub fn desk() -> Self {
        Self {
            elements_per_panel: 4,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let side = self.grid_side();
        if self.elements_per_panel == 0 || side * side != self.elements_per_panel {
            return Err(Error::invalid(format!(
                "elements_per_panel must be a positive square, got {}",
                self.elements_per_panel
            )));
        }
        if self.polarizations == 0 {
            return Err(Error::invalid("polarizations must be positive"));
        }
        if !(self.element_pitch > 0.0 && self.panel_radius >= 0.0) {
            return Err(Error::invalid(
                "element pitch must be positive and panel radius non-negative",
            ));
        }
        Ok(())
    }

    pub fn rows_per_panel(&self) -> usize {
        self.elements_per_panel * self.polarizations
    }

    pub fn n_rx(&self) -> usize {
        N_PANELS * self.rows_per_panel()
    }

    fn grid_side(&self) -> usize {
        (self.elements_per_panel as f64).sqrt().round() as usize
    }

    /// (panel, element, polarization) of a receive row.
    pub fn decompose_row(&self, row: usize) -> Result<(Panel, usize, usize)> {
        if row >= self.n_rx() {
            return Err(Error::invalid(format!("row {row} out of range 0..{}", self.n_rx())));
        }
        let per_panel = self.rows_per_panel();
        Ok((
            Panel((row / per_panel) as u8),
            (row % per_panel) / self.polarizations,
            row % self.polarizations,
        ))
    }

    /// Panel azimuth relative to the looking direction, degrees.
    pub fn relative_azimuth_deg(&self, panel: Panel) -> f64 {
        self.panel_azimuths_deg[panel.index()] - self.panel_azimuths_deg[Panel::VII.index()]
    }
}

/// Receive-row indices of a configuration: `panel·R + element·P + pol`,
/// ascending, where R = rows per panel and P = polarizations.
pub fn rows_for_config(config: &PanelConfig, layout: &ArrayLayout) -> Result<Vec<usize>> {
    if config.panels.is_empty() {
        return Err(Error::invalid("panel configuration must contain at least one panel"));
    }
    let per_panel = layout.rows_per_panel();
    Ok(config
        .panels
        .iter()
        .flat_map(|p| p.index() * per_panel..(p.index() + 1) * per_panel)
        .collect())
}

/// Yaw and pitch of the mobility pattern, degrees.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Orientation {
    pub yaw_deg: f64,
    pub pitch_deg: f64,
}

impl Orientation {
    pub fn new(yaw_deg: f64, pitch_deg: f64) -> Self {
        Self { yaw_deg, pitch_deg }
    }

    /// `Rz(initial_yaw + yaw) · Rx(pitch)`.
    pub fn rotation(&self, initial_yaw_deg: f64) -> Rotation3<f64> {
        let yaw = Rotation3::from_axis_angle(&Vec3::z_axis(), (initial_yaw_deg + self.yaw_deg).to_radians());
        let pitch = Rotation3::from_axis_angle(&Vec3::x_axis(), self.pitch_deg.to_radians());
        yaw * pitch
    }
}

/// One constant-rate rotation segment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MotionSegment {
    pub duration_s: f64,
    pub delta_yaw_deg: f64,
    pub delta_pitch_deg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MobilityPattern {
    pub segments: Vec<MotionSegment>,
    /// Distance between the rotation centre and the UE centre of mass, metres.
    pub rotation_center_offset: f64,
    pub snapshot_rate_hz: f64,
}

impl Default for MobilityPattern {
    /// Yaw +30° in 3 s, pitch +30° in 15 s, yaw +30° in 15 s; 25 cm offset; 1 Hz.
    fn default() -> Self {
        let seg = |duration_s, delta_yaw_deg, delta_pitch_deg| MotionSegment {
            duration_s,
            delta_yaw_deg,
            delta_pitch_deg,
        };
        Self {
            segments: vec![seg(3.0, 30.0, 0.0), seg(15.0, 0.0, 30.0), seg(15.0, 30.0, 0.0)],
            rotation_center_offset: 0.25,
            snapshot_rate_hz: 1.0,
        }
    }
}

impl MobilityPattern {
    pub fn total_duration(&self) -> f64 {
        self.segments.iter().map(|s| s.duration_s).sum()
    }

    /// Snapshots per measurement: duration × rate (33 by default).
    pub fn snapshot_count(&self) -> usize {
        (self.total_duration() * self.snapshot_rate_hz).round() as usize
    }

    pub fn snapshot_time(&self, i: usize) -> f64 {
        i as f64 / self.snapshot_rate_hz
    }

    /// Index of the segment active at `t` (segment boundaries belong to the
    /// later segment).
    pub fn segment_at(&self, t: f64) -> usize {
        let mut end = 0.0;
        for (idx, s) in self.segments.iter().enumerate() {
            end += s.duration_s;
            if t < end {
                return idx;
            }
        }
        self.segments.len().saturating_sub(1)
    }

    #[allow(clippy::neg_cmp_op_on_partial_ord)] // also rejects NaN
    pub fn validate(&self) -> Result<()> {
        if self.segments.is_empty() {
            return Err(Error::invalid("mobility pattern needs at least one segment"));
        }
        if self.segments.iter().any(|s| !(s.duration_s > 0.0)) {
            return Err(Error::invalid("segment durations must be positive"));
        }
        if !(self.snapshot_rate_hz > 0.0) || !(self.rotation_center_offset >= 0.0) {
            return Err(Error::invalid("snapshot rate must be positive and offset non-negative"));
        }
        Ok(())
    }
}

/// Piecewise-linear yaw/pitch at time `t` seconds.
pub fn orientation_at(t: f64, pattern: &MobilityPattern) -> Result<Orientation> {
    let total = pattern.total_duration();
    if !(0.0..=total).contains(&t) {
        return Err(Error::invalid(format!("time {t} s outside [0, {total}] s")));
    }
    let mut o = Orientation::default();
    let mut start = 0.0;
    for s in &pattern.segments {
        let frac = ((t - start) / s.duration_s).clamp(0.0, 1.0);
        o.yaw_deg += frac * s.delta_yaw_deg;
        o.pitch_deg += frac * s.delta_pitch_deg;
        start += s.duration_s;
    }
    Ok(o)
}

/// UE centre of mass and orientation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub center_of_mass: Vec3,
    pub orientation: Orientation,
    /// Heading offset of the body frame at t = 0, degrees.
    pub initial_yaw_deg: f64,
}

impl Pose {
    pub fn identity() -> Self {
        Self {
            center_of_mass: Vec3::zeros(),
            orientation: Orientation::default(),
            initial_yaw_deg: 0.0,
        }
    }

    pub fn rotation(&self) -> Rotation3<f64> {
        self.orientation.rotation(self.initial_yaw_deg)
    }
}

/// Pose at time `t`: the centre of mass sits `rotation_center_offset` above
/// the rotation centre and swings with the head rotation. `base` is the
/// centre of mass at t = 0.
pub fn ue_pose_at(t: f64, pattern: &MobilityPattern, base: Vec3, initial_yaw_deg: f64) -> Result<Pose> {
    let orientation = orientation_at(t, pattern)?;
    let arm = Vec3::new(0.0, 0.0, pattern.rotation_center_offset);
    let center = base - arm;
    let r = orientation.rotation(initial_yaw_deg);
    Ok(Pose {
        center_of_mass: center + r * arm,
        orientation,
        initial_yaw_deg,
    })
}

/// Position of a receive element and the outward boresight of its panel in
/// the room frame.
pub fn element_position_and_boresight(row: usize, layout: &ArrayLayout, pose: &Pose) -> Result<(Vec3, Vec3)> {
    let (panel, element, _pol) = layout.decompose_row(row)?;
    let (body_pos, body_normal) = element_body_frame(panel, element, layout);
    let r = pose.rotation();
    Ok((pose.center_of_mass + r * body_pos, r * body_normal))
}

/// Body-frame element position and panel normal.
pub(crate) fn element_body_frame(panel: Panel, element: usize, layout: &ArrayLayout) -> (Vec3, Vec3) {
    let az = layout.panel_azimuths_deg[panel.index()].to_radians();
    let normal = Vec3::new(az.cos(), az.sin(), 0.0);
    let tangent = Vec3::new(-az.sin(), az.cos(), 0.0);
    let side = layout.grid_side();
    let half = (side as f64 - 1.0) / 2.0;
    let col = (element % side) as f64;
    let row = (element / side) as f64;
    let pos = normal * layout.panel_radius
        + tangent * ((col - half) * layout.element_pitch)
        + Vec3::z() * ((half - row) * layout.element_pitch);
    (pos, normal)
}
