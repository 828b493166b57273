//! Oracle sensors: per-category detections, a column depth map and the ego-grid.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{AgentPose, HeightLevel, Pitch, RoomLayout, SimConfig};

/// Shrink applied to blocking cells in the line-of-sight test, so a sight line
/// that only grazes an edge or corner is not occluded.
const GRAZE: f64 = 1e-9;

/// One category slot of the detector output.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub category: usize,
    pub visible: bool,
    pub confidence: f64,
    /// `[h1, y1, h2, y2]` in normalized image coordinates.
    pub bbox: [f64; 4],
    /// Unclamped horizontal and vertical box centres.
    pub h_center: f64,
    pub v_center: f64,
    /// Metric distance to the detected instance; 0 when invisible.
    pub distance: f64,
}

impl Detection {
    pub fn invisible(category: usize) -> Detection {
        Detection {
            category,
            visible: false,
            confidence: 0.0,
            bbox: [0.0; 4],
            h_center: 0.0,
            v_center: 0.0,
            distance: 0.0,
        }
    }
}

/// Geometric relation between the agent and one object instance.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Sighting {
    pub object: usize,
    /// Metres between cell centres.
    pub distance: f64,
    /// Degrees, positive to the agent's right, in (−180, 180].
    pub bearing: f64,
    pub visible: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DepthMap {
    pub res: usize,
    /// Row-major `res × res` metric depths.
    pub values: Vec<f64>,
}

impl DepthMap {
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.res + col]
    }

    /// Column index whose bin contains the normalized horizontal coordinate `h`.
    pub fn column_of(&self, h: f64) -> usize {
        ((h * self.res as f64).floor().max(0.0) as usize).min(self.res - 1)
    }

    /// Mean depth over the pixels covered by a normalized box `[h1, y1, h2, y2]`.
    /// Degenerate boxes fall back to the pixel containing their corner.
    pub fn bbox_mean(&self, bbox: [f64; 4]) -> f64 {
        let span = |lo: f64, hi: f64| {
            let r = self.res as f64;
            let a = self.column_of(lo);
            let b = ((hi * r).ceil() as usize).clamp(a + 1, self.res);
            a..b
        };
        let (cols, rows) = (span(bbox[0], bbox[2]), span(bbox[1], bbox[3]));
        let mut sum = 0.0;
        let mut n = 0usize;
        for r in rows {
            for c in cols.clone() {
                sum += self.get(r, c);
                n += 1;
            }
        }
        sum / n as f64
    }
}

/// `k × k × channels` egocentric occupancy, indexed `[row][col][channel]`.
/// The agent sits in the centre cell facing row 0.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EgoGrid {
    pub k: usize,
    pub channels: usize,
    pub data: Vec<f64>,
}

impl EgoGrid {
    pub fn get(&self, row: usize, col: usize, channel: usize) -> f64 {
        self.data[(row * self.k + col) * self.channels + channel]
    }

    /// Channel vector of one cell, in row-major token order.
    pub fn token(&self, index: usize) -> &[f64] {
        &self.data[index * self.channels..(index + 1) * self.channels]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObservationBundle {
    pub detections: Vec<Detection>,
    pub depth: DepthMap,
    pub ego: EgoGrid,
    /// Camera tilt the frame was taken at.
    pub pitch: Pitch,
}

fn wrap_degrees(a: f64) -> f64 {
    let mut a = a % 360.0;
    if a > 180.0 {
        a -= 360.0;
    } else if a <= -180.0 {
        a += 360.0;
    }
    a
}

fn pitch_matches(level: HeightLevel, pitch: Pitch) -> bool {
    match level {
        HeightLevel::Low => pitch == Pitch::Down,
        HeightLevel::Mid => true,
        HeightLevel::High => pitch == Pitch::Up,
    }
}

fn level_degrees(level: HeightLevel) -> f64 {
    match level {
        HeightLevel::Low => -30.0,
        HeightLevel::Mid => 0.0,
        HeightLevel::High => 30.0,
    }
}

/// Whether the segment between the centres of `from` and `to` avoids every
/// blocking cell other than the two endpoints.
pub fn line_of_sight(blocked: impl Fn(i32, i32) -> bool, from: (i32, i32), to: (i32, i32)) -> bool {
    let p = (from.0 as f64 + 0.5, from.1 as f64 + 0.5);
    let d = ((to.0 - from.0) as f64, (to.1 - from.1) as f64);
    for y in from.1.min(to.1)..=from.1.max(to.1) {
        for x in from.0.min(to.0)..=from.0.max(to.0) {
            if (x, y) == from || (x, y) == to || !blocked(x, y) {
                continue;
            }
            if segment_hits_box(
                p,
                d,
                (x as f64 + GRAZE, y as f64 + GRAZE),
                (x as f64 + 1.0 - GRAZE, y as f64 + 1.0 - GRAZE),
            ) {
                return false;
            }
        }
    }
    true
}

/// Slab test of `p + t·d, t ∈ [0, 1]` against an axis-aligned box.
fn segment_hits_box(p: (f64, f64), d: (f64, f64), lo: (f64, f64), hi: (f64, f64)) -> bool {
    let mut t0 = 0.0f64;
    let mut t1 = 1.0f64;
    for (p, d, lo, hi) in [(p.0, d.0, lo.0, hi.0), (p.1, d.1, lo.1, hi.1)] {
        if d == 0.0 {
            if p < lo || p > hi {
                return false;
            }
        } else {
            let (a, b) = ((lo - p) / d, (hi - p) / d);
            t0 = t0.max(a.min(b));
            t1 = t1.min(a.max(b));
            if t0 > t1 {
                return false;
            }
        }
    }
    true
}

/// Geometry and visibility of object `index` from `pose`.
pub fn sight(layout: &RoomLayout, cfg: &SimConfig, pose: &AgentPose, index: usize) -> Sighting {
    let o = layout.objects()[index];
    let (dx, dy) = ((o.x - pose.x) as f64, (o.y - pose.y) as f64);
    let distance = dx.hypot(dy) * cfg.cell_size;
    let bearing = wrap_degrees(dy.atan2(dx).to_degrees() - pose.heading.degrees());
    let visible = distance < cfg.max_range
        && bearing.abs() <= cfg.fov / 2.0 + 1e-9
        && pitch_matches(o.level, pose.pitch)
        && line_of_sight(|x, y| layout.is_blocked(x, y), (pose.x, pose.y), (o.x, o.y));
    Sighting { object: index, distance, bearing, visible }
}

fn detection_from(layout: &RoomLayout, cfg: &SimConfig, pose: &AgentPose, s: &Sighting, confidence: f64) -> Detection {
    let o = layout.objects()[s.object];
    let h_center = 0.5 + s.bearing / cfg.fov;
    // narrower than the cell's angular extent from any viewpoint
    let w = (0.5 * cfg.cell_size / s.distance * 90.0 / cfg.fov).clamp(0.02, 0.5);
    let tall = match o.level {
        HeightLevel::Mid => 2.0,
        _ => 1.0,
    };
    let h = (tall * w).clamp(0.02, 0.5);
    let v_center = 0.5 + (pose.pitch.degrees() - level_degrees(o.level)) / 120.0;
    let c01 = |v: f64| v.clamp(0.0, 1.0);
    Detection {
        category: o.category,
        visible: true,
        confidence,
        bbox: [c01(h_center - w / 2.0), c01(v_center - h / 2.0), c01(h_center + w / 2.0), c01(v_center + h / 2.0)],
        h_center,
        v_center,
        distance: s.distance,
    }
}

/// One slot per category holding its highest-confidence visible instance.
/// `rng` is drawn from only when `cfg.conf_noise > 0`.
pub fn render_detections<R: Rng + ?Sized>(
    layout: &RoomLayout,
    cfg: &SimConfig,
    pose: &AgentPose,
    rng: &mut R,
) -> Vec<Detection> {
    let mut slots: Vec<Detection> = (0..layout.categories()).map(Detection::invisible).collect();
    let noise = (cfg.conf_noise > 0.0).then(|| Normal::new(0.0, cfg.conf_noise).expect("validated noise"));
    for i in 0..layout.objects().len() {
        let s = sight(layout, cfg, pose, i);
        if !s.visible {
            continue;
        }
        let mut conf = 1.0 - s.distance / cfg.max_range;
        if let Some(n) = &noise {
            conf = (conf + n.sample(rng)).clamp(0.0, 1.0);
        }
        let slot = &mut slots[layout.objects()[i].category];
        if !slot.visible || conf > slot.confidence {
            *slot = detection_from(layout, cfg, pose, &s, conf);
        }
    }
    slots
}

/// Bearing interval in degrees covered by the square of cell `(x, y)`, or
/// `None` when it straddles the direction straight behind the agent.
fn cell_interval(pose: &AgentPose, x: i32, y: i32) -> Option<(f64, f64)> {
    let (ox, oy) = (pose.x as f64 + 0.5, pose.y as f64 + 0.5);
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for (cx, cy) in [(x, y), (x + 1, y), (x, y + 1), (x + 1, y + 1)] {
        let b = wrap_degrees((cy as f64 - oy).atan2(cx as f64 - ox).to_degrees() - pose.heading.degrees());
        lo = lo.min(b);
        hi = hi.max(b);
    }
    (hi - lo <= 180.0).then_some((lo, hi))
}

/// Each column is the cone of bearings `fov / depth_res` wide; its depth is the
/// metric distance from the agent's cell centre to the centre of the nearest
/// blocking cell (wall, object or out-of-bounds) overlapping the cone, clamped to
/// the range. Every row repeats its column.
pub fn render_depth(layout: &RoomLayout, cfg: &SimConfig, pose: &AgentPose) -> DepthMap {
    let r = cfg.depth_res;
    let bin = cfg.fov / r as f64;
    let left = -cfg.fov / 2.0;
    let mut cols = vec![cfg.max_range; r];
    let reach = (cfg.max_range / cfg.cell_size).ceil() as i32 + 1;
    let (w, h) = (layout.width() as i32, layout.height() as i32);
    let ys = (pose.y - reach).max(-1)..=(pose.y + reach).min(h);
    for y in ys {
        for x in (pose.x - reach).max(-1)..=(pose.x + reach).min(w) {
            if !layout.is_blocked(x, y) {
                continue;
            }
            let d = ((x - pose.x) as f64).hypot((y - pose.y) as f64) * cfg.cell_size;
            if d >= cfg.max_range {
                continue;
            }
            let Some((lo, hi)) = cell_interval(pose, x, y) else { continue };
            for (j, col) in cols.iter_mut().enumerate() {
                let (blo, bhi) = (left + bin * j as f64, left + bin * (j + 1) as f64);
                if lo < bhi && hi > blo && d < *col {
                    *col = d;
                }
            }
        }
    }
    let mut values = Vec::with_capacity(r * r);
    for _ in 0..r {
        values.extend_from_slice(&cols);
    }
    DepthMap { res: r, values }
}

/// Agent-centred occupancy: one channel per category plus a final wall channel
/// (walls and out-of-bounds). Objects appear whether or not they are visible.
pub fn render_ego_grid(layout: &RoomLayout, cfg: &SimConfig, pose: &AgentPose) -> EgoGrid {
    let k = cfg.ego_k;
    let channels = layout.categories() + 1;
    let half = (k / 2) as f64;
    let theta = pose.heading.degrees().to_radians();
    let fwd = (theta.cos(), theta.sin());
    let right = (-theta.sin(), theta.cos());
    let mut data = vec![0.0; k * k * channels];
    for row in 0..k {
        for col in 0..k {
            let (f, s) = (half - row as f64, col as f64 - half);
            let x = pose.x + (f * fwd.0 + s * right.0).round() as i32;
            let y = pose.y + (f * fwd.1 + s * right.1).round() as i32;
            let base = (row * k + col) * channels;
            if layout.is_wall(x, y) {
                data[base + channels - 1] = 1.0;
            } else if let Some(i) = layout.object_at(x, y) {
                data[base + layout.objects()[i].category] = 1.0;
            }
        }
    }
    EgoGrid { k, channels, data }
}

pub fn observe<R: Rng + ?Sized>(
    layout: &RoomLayout,
    cfg: &SimConfig,
    pose: &AgentPose,
    rng: &mut R,
) -> ObservationBundle {
    ObservationBundle {
        detections: render_detections(layout, cfg, pose, rng),
        depth: render_depth(layout, cfg, pose),
        ego: render_ego_grid(layout, cfg, pose),
        pitch: pose.pitch,
    }
}
