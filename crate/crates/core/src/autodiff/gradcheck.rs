//! Central finite-difference checks of analytic gradients.
//!
//! Everything here evaluates the loss as a black box on perturbed parameter
//! values; nothing reads the tape, so the comparison is independent of the
//! backward rules it checks.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{ParamSet, Tensor};

#[derive(Clone, Copy, Debug)]
pub struct GradCheckConfig {
    pub eps: f64,
    /// Maximum accepted relative error.
    pub tol: f64,
    /// Denominator floor of the relative error, so coordinates whose true
    /// gradient is ~0 are compared on an absolute scale.
    pub floor: f64,
    pub coords_per_block: usize,
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig { eps: 1e-5, tol: 1e-4, floor: 1e-6, coords_per_block: 20, seed: 7 }
    }
}

pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

#[derive(Clone, Debug)]
pub struct BlockReport {
    pub name: String,
    /// Entries in the block.
    pub entries: usize,
    pub checked: usize,
    /// Coordinates redrawn because the loss has a kink within ±eps there.
    pub skipped_kinks: usize,
    pub max_rel_err: f64,
    /// (flat index, analytic, numeric) of the worst coordinate.
    pub worst: Option<(usize, f64, f64)>,
}

#[derive(Clone, Debug, Default)]
pub struct GradCheckReport {
    pub blocks: Vec<BlockReport>,
    pub tol: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.blocks.iter().all(|b| b.max_rel_err < self.tol && b.checked > 0)
    }

    pub fn max_rel_err(&self) -> f64 {
        self.blocks.iter().map(|b| b.max_rel_err).fold(0.0, f64::max)
    }

    pub fn failures(&self) -> Vec<&BlockReport> {
        self.blocks.iter().filter(|b| b.max_rel_err >= self.tol || b.checked == 0).collect()
    }
}

/// Probe of a scalar function around the current value of one coordinate, at
/// steps `eps` and `eps / 2`.
struct Probe {
    minus: f64,
    center: f64,
    plus: f64,
    half_minus: f64,
    half_plus: f64,
}

impl Probe {
    fn central(&self, eps: f64) -> f64 {
        (self.plus - self.minus) / (2.0 * eps)
    }

    /// Gap between the one-sided slopes. Smooth curvature makes it shrink in
    /// proportion to the step; a kink inside the step keeps it from shrinking.
    fn crosses_kink(&self, cfg: &GradCheckConfig) -> bool {
        let gap = (self.plus - 2.0 * self.center + self.minus) / cfg.eps;
        let half_gap = (self.half_plus - 2.0 * self.center + self.half_minus) / (0.5 * cfg.eps);
        let scale = self.central(cfg.eps).abs().max(cfg.floor);
        // rounding in the loss alone moves `gap` by about this much
        let noise = 64.0 * f64::EPSILON * self.center.abs().max(1.0) / cfg.eps;
        gap.abs() > (cfg.tol * scale).max(noise) && (half_gap - 0.5 * gap).abs() > 0.25 * gap.abs()
    }
}

/// Compares `analytic` gradients against central differences of `loss` at
/// `coords_per_block` random coordinates of every parameter block.
pub fn check_params(
    params: &ParamSet,
    analytic: &[Tensor],
    mut loss: impl FnMut(&ParamSet) -> f64,
    cfg: &GradCheckConfig,
) -> GradCheckReport {
    assert_eq!(analytic.len(), params.len());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut work = params.clone();
    let mut report = GradCheckReport { blocks: Vec::new(), tol: cfg.tol };
    for id in params.ids() {
        let n = params.get(id).len();
        // Draw extra candidates so kink skips can be replaced.
        let want = cfg.coords_per_block.min(n);
        let pool = sample(&mut rng, n, (want * 3).min(n)).into_vec();
        let mut block = BlockReport {
            name: params.name(id).to_string(),
            entries: n,
            checked: 0,
            skipped_kinks: 0,
            max_rel_err: 0.0,
            worst: None,
        };
        for idx in pool {
            if block.checked == want {
                break;
            }
            let orig = work.get(id).data()[idx];
            let mut eval_at = |v: f64| {
                work.get_mut(id).data_mut()[idx] = v;
                loss(&work)
            };
            let probe = Probe {
                minus: eval_at(orig - cfg.eps),
                center: eval_at(orig),
                plus: eval_at(orig + cfg.eps),
                half_minus: eval_at(orig - 0.5 * cfg.eps),
                half_plus: eval_at(orig + 0.5 * cfg.eps),
            };
            work.get_mut(id).data_mut()[idx] = orig;
            if probe.crosses_kink(cfg) {
                block.skipped_kinks += 1;
                continue;
            }
            let numeric = probe.central(cfg.eps);
            let a = analytic[id.index()].data()[idx];
            let err = relative_error(a, numeric, cfg.floor);
            block.checked += 1;
            if err >= block.max_rel_err {
                block.max_rel_err = err;
                block.worst = Some((idx, a, numeric));
            }
        }
        report.blocks.push(block);
    }
    report
}

/// Full central-difference gradient of `f` at `x`. Meant for small tensors.
pub fn numeric_gradient(x: &Tensor, eps: f64, mut f: impl FnMut(&Tensor) -> f64) -> Tensor {
    let mut work = x.clone();
    let mut out = Tensor::zeros(x.rows(), x.cols());
    for i in 0..x.len() {
        let orig = work.data()[i];
        work.data_mut()[i] = orig + eps;
        let plus = f(&work);
        work.data_mut()[i] = orig - eps;
        let minus = f(&work);
        work.data_mut()[i] = orig;
        out.data_mut()[i] = (plus - minus) / (2.0 * eps);
    }
    out
}

/// Largest relative error between two gradient tensors, using `floor` as in [`relative_error`].
pub fn max_relative_error(analytic: &Tensor, numeric: &Tensor, floor: f64) -> f64 {
    analytic.data().iter().zip(numeric.data()).map(|(&a, &n)| relative_error(a, n, floor)).fold(0.0, f64::max)
}
