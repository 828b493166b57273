//! Node matrices and other fixed inputs built from one observation.

use crate::autodiff::Tensor;
use crate::sim::{Detection, ObservationBundle, Pitch};

/// The part of a detection the horizontal graph may see. Having no depth or
/// vertical field, it makes the horizontal builder depth-free by construction.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HorizontalCue {
    pub h_center: f64,
    pub confidence: f64,
}

impl HorizontalCue {
    pub fn of(d: &Detection) -> HorizontalCue {
        if d.visible {
            HorizontalCue { h_center: d.h_center, confidence: d.confidence }
        } else {
            HorizontalCue { h_center: 0.0, confidence: 0.0 }
        }
    }
}

/// `X_h`: one row per category, `[h, onehot(C), c]`, with the box's vertical
/// centre appended when `vertical` is given.
pub fn ohrg_nodes(cues: &[HorizontalCue], vertical: Option<&[f64]>) -> Tensor {
    let c = cues.len();
    let width = c + 2 + vertical.is_some() as usize;
    let mut x = Tensor::zeros(c, width);
    for (i, cue) in cues.iter().enumerate() {
        x.set(i, 0, cue.h_center);
        x.set(i, 1 + i, 1.0);
        x.set(i, c + 1, cue.confidence);
        if let Some(v) = vertical {
            x.set(i, c + 2, v[i]);
        }
    }
    x
}

/// Vertical box centres per slot, zero for invisible categories.
pub fn vertical_centres(obs: &ObservationBundle) -> Vec<f64> {
    obs.detections.iter().map(|d| if d.visible { d.v_center } else { 0.0 }).collect()
}

pub fn horizontal_cues(obs: &ObservationBundle) -> Vec<HorizontalCue> {
    obs.detections.iter().map(HorizontalCue::of).collect()
}

/// `X_d`: one row per category, `[depth, onehot(C), c]`. Only the target row
/// carries its mean box depth unless `all_depths` is set, in which case every
/// visible row carries its own.
pub fn atdrg_nodes(obs: &ObservationBundle, target: usize, all_depths: bool) -> Tensor {
    let c = obs.detections.len();
    let mut x = Tensor::zeros(c, c + 2);
    for (i, d) in obs.detections.iter().enumerate() {
        if d.visible && (all_depths || i == target) {
            x.set(i, 0, obs.depth.bbox_mean(d.bbox));
        }
        x.set(i, 1 + i, 1.0);
        x.set(i, c + 1, d.confidence);
    }
    x
}

/// Inputs of the detection embedding: `[onehot(C), h1, y1, h2, y2, c]` per slot.
pub fn detection_inputs(obs: &ObservationBundle) -> Tensor {
    let c = obs.detections.len();
    let mut x = Tensor::zeros(c, c + 5);
    for (i, d) in obs.detections.iter().enumerate() {
        x.set(i, i, 1.0);
        for (j, v) in d.bbox.iter().enumerate() {
            x.set(i, c + j, *v);
        }
        x.set(i, c + 4, d.confidence);
    }
    x
}

/// Ego-grid cells as an `m × channels` token matrix, row-major over the grid.
pub fn grid_tokens(obs: &ObservationBundle) -> Tensor {
    let g = &obs.ego;
    Tensor::from_vec(g.k * g.k, g.channels, g.data.clone()).expect("ego grid shape")
}

/// 2-D sinusoidal encoding of a `k × k` grid in `d` dims: interleaved sin/cos of
/// the row index in the first half of the frequency bands, of the column in the second.
pub fn positional_encoding(k: usize, d: usize) -> Tensor {
    let mut pe = Tensor::zeros(k * k, d);
    let quarter = d.div_ceil(4);
    for r in 0..k {
        for c in 0..k {
            let row = r * k + c;
            for j in 0..d {
                let band = (j / 4) as f64;
                let freq = 1.0 / 10000f64.powf(band / quarter as f64);
                let pos = if j % 4 < 2 { r } else { c } as f64;
                let v = if j % 2 == 0 { (pos * freq).sin() } else { (pos * freq).cos() };
                pe.set(row, j, v);
            }
        }
    }
    pe
}

pub fn pitch_one_hot(p: Pitch) -> Tensor {
    Tensor::one_hot(Pitch::COUNT, p.index())
}
