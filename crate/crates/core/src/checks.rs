//! The finite-difference gradient suite: every tape operation, every
//! representation layer, and the composed agent unrolled over two steps.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::gradcheck::{check_params, GradCheckConfig, GradCheckReport};
use crate::autodiff::init::uniform;
use crate::autodiff::{AutodiffError, ParamSet, Tape, Tensor, Var};
use crate::policy::{AgentModel, PolicyConfig};
use crate::repr::ops::{apply_map, attention_map, dynamic_adjacency, fuse, graph_conv, transformer_fuse};
use crate::repr::{AdjacencyMode, ReprConfig, Variant};
use crate::sim::{generate_suite, Action, Episode, GeneratorConfig, SimConfig};

#[derive(Clone, Debug)]
pub struct NamedCheck {
    pub name: String,
    pub report: GradCheckReport,
}

impl NamedCheck {
    pub fn passed(&self) -> bool {
        self.report.passed()
    }
}

type Build = fn(&mut Tape<'_>, &[Var]) -> Result<Var, AutodiffError>;

/// Random parameters of the given shapes. Every block has at least 20 entries
/// so each one contributes 20 checked coordinates.
fn blocks(shapes: &[(usize, usize)], rng: &mut ChaCha8Rng) -> ParamSet {
    let mut p = ParamSet::new();
    for (i, &(r, c)) in shapes.iter().enumerate() {
        p.add(format!("x{i}"), uniform(r, c, 1.0, rng));
    }
    p
}

/// `Σ w ⊙ f(params)` with fixed random weights, so every output entry matters.
fn weighted_loss(tape: &mut Tape<'_>, y: Var, seed: u64) -> Result<Var, AutodiffError> {
    let (r, c) = tape.shape(y);
    let w = uniform(r, c, 1.0, &mut ChaCha8Rng::seed_from_u64(seed));
    let w = tape.constant(w);
    let prod = tape.mul(y, w)?;
    Ok(tape.sum(prod))
}

fn check_build(
    name: &str,
    params: &ParamSet,
    build: Build,
    cfg: &GradCheckConfig,
) -> Result<NamedCheck, AutodiffError> {
    let eval = |p: &ParamSet, grads: bool| -> Result<(f64, Option<Vec<Tensor>>), AutodiffError> {
        let mut tape = Tape::with_params(p);
        let vars: Vec<Var> = p.ids().map(|id| tape.param(id)).collect();
        let y = build(&mut tape, &vars)?;
        let loss = if tape.shape(y) == (1, 1) { y } else { weighted_loss(&mut tape, y, 99)? };
        let value = tape.value(loss).item();
        let g = if grads { Some(tape.backward(loss)?.into_param_grads(p)) } else { None };
        Ok((value, g))
    };
    let (_, grads) = eval(params, true)?;
    let grads = grads.expect("requested");
    let report = check_params(params, &grads, |p| eval(p, false).map(|v| v.0).unwrap_or(f64::NAN), cfg);
    Ok(NamedCheck { name: name.to_string(), report })
}

type OpCase = (&'static str, Vec<(usize, usize)>, Build);

fn op_cases() -> Vec<OpCase> {
    vec![
        ("matmul", vec![(4, 5), (5, 6)], |t, v| t.matmul(v[0], v[1])),
        ("matmul_nt", vec![(4, 5), (6, 5)], |t, v| t.matmul_nt(v[0], v[1])),
        ("add", vec![(4, 5), (4, 5)], |t, v| t.add(v[0], v[1])),
        ("add_row_broadcast", vec![(4, 6), (1, 24)], |t, v| {
            let b = t.slice_cols(v[1], 3, 6)?;
            t.add(v[0], b)
        }),
        ("sub", vec![(4, 5), (4, 5)], |t, v| t.sub(v[0], v[1])),
        ("mul", vec![(4, 5), (4, 5)], |t, v| t.mul(v[0], v[1])),
        ("scale", vec![(4, 5)], |t, v| Ok(t.scale(v[0], -1.7))),
        ("relu", vec![(4, 6)], |t, v| Ok(t.relu(v[0]))),
        ("sigmoid", vec![(4, 6)], |t, v| Ok(t.sigmoid(v[0]))),
        ("tanh", vec![(4, 6)], |t, v| Ok(t.tanh(v[0]))),
        ("softmax_rows", vec![(4, 6)], |t, v| Ok(t.softmax_rows(v[0]))),
        ("log_softmax_rows", vec![(4, 6)], |t, v| Ok(t.log_softmax_rows(v[0]))),
        ("concat_cols", vec![(4, 5), (4, 6)], |t, v| t.concat_cols(v[0], v[1])),
        ("slice_cols", vec![(4, 8)], |t, v| t.slice_cols(v[0], 2, 5)),
        ("mean_rows", vec![(5, 6)], |t, v| Ok(t.mean_rows(v[0]))),
        ("sum", vec![(5, 6)], |t, v| Ok(t.sum(v[0]))),
        ("cross_entropy", vec![(1, 24)], |t, v| {
            let z = t.slice_cols(v[0], 0, 6)?;
            t.cross_entropy(z, 4)
        }),
        ("dynamic_adjacency", vec![(5, 6), (6, 4), (6, 4)], |t, v| dynamic_adjacency(t, v[0], v[1], v[2])),
        ("graph_conv", vec![(5, 5), (5, 6), (6, 4)], |t, v| graph_conv(t, v[0], v[1], v[2])),
        ("fuse", vec![(5, 4), (5, 4), (8, 5), (1, 20)], |t, v| {
            let b = t.slice_cols(v[3], 0, 5)?;
            fuse(t, v[0], v[1], v[2], b)
        }),
        ("attention_map", vec![(5, 6), (6, 5)], |t, v| attention_map(t, v[0], v[1])),
        ("apply_map", vec![(5, 5), (5, 6)], |t, v| apply_map(t, v[0], v[1])),
        ("transformer_fuse", vec![(7, 4), (5, 4)], |t, v| {
            let (attention, fused) = transformer_fuse(t, v[0], v[1])?;
            let a = t.mean_rows(attention);
            let f = t.mean_rows(fused);
            t.concat_cols(a, f)
        }),
    ]
}

fn small_agent(repr: ReprConfig) -> (ReprConfig, PolicyConfig) {
    let repr = ReprConfig { d_graph: 10, d_adj: 5, d_model: 10, ..repr };
    let policy = PolicyConfig { hidden: 8, skip_hidden: 6, head_init: 0.5, ..PolicyConfig::default() };
    (repr, policy)
}

/// Two unrolled steps through graphs, fusion, LSTM and both heads.
fn check_agent(name: &str, repr: ReprConfig, cfg: &GradCheckConfig, seed: u64) -> Result<NamedCheck, AutodiffError> {
    let sim = SimConfig::default();
    let layouts = generate_suite(&GeneratorConfig::default(), &sim, 1, 0, seed);
    let target = layouts[0].targets()[0];
    let (mut ep, obs0) = Episode::reset(&layouts[0], &sim, target, seed).expect("generated layouts have starts");
    let obs1 = ep.step(Action::RotateLeft).map(|s| s.observation).unwrap_or_else(|_| obs0.clone());
    let (repr, policy) = small_agent(repr);
    let (model, mut params) = AgentModel::init(&repr, &policy, seed);
    // zero-initialised biases put ReLUs exactly on their kink; move off it
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let ids: Vec<_> = params.ids().collect();
    for id in ids {
        let p = params.get_mut(id);
        let jitter = uniform(p.rows(), p.cols(), 0.05, &mut rng);
        p.add_scaled(&jitter, 1.0);
    }
    let steps =
        [(model.repr.inputs(&obs0, target), None), (model.repr.inputs(&obs1, target), Some(Action::RotateLeft))];
    let eval = |p: &ParamSet, grads: bool| -> Result<(f64, Option<Vec<Tensor>>), AutodiffError> {
        let mut tape = Tape::with_params(p);
        let mut h = tape.constant(Tensor::zeros(1, model.hidden()));
        let mut c = tape.constant(Tensor::zeros(1, model.hidden()));
        let mut total: Option<Var> = None;
        for (i, (inputs, prev)) in steps.iter().enumerate() {
            let v = model.forward(&mut tape, inputs, *prev, h, c)?;
            let ce = tape.cross_entropy(v.policy.logits, (2 * i + 1) % 6)?;
            let vl = tape.mul(v.policy.value, v.policy.value)?;
            let step = tape.add(ce, vl)?;
            total = Some(match total {
                None => step,
                Some(t) => tape.add(t, step)?,
            });
            h = v.policy.h;
            c = v.policy.c;
        }
        let loss = total.expect("two steps");
        let value = tape.value(loss).item();
        let g = if grads { Some(tape.backward(loss)?.into_param_grads(p)) } else { None };
        Ok((value, g))
    };
    let (_, grads) = eval(&params, true)?;
    let grads = grads.expect("requested");
    let report = check_params(&params, &grads, |p| eval(p, false).map(|v| v.0).unwrap_or(f64::NAN), cfg);
    Ok(NamedCheck { name: name.to_string(), report })
}

/// Runs every check at `cfg` tolerances.
pub fn gradient_suite(cfg: &GradCheckConfig) -> Result<Vec<NamedCheck>, AutodiffError> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut out = Vec::new();
    for (name, shapes, build) in op_cases() {
        let params = blocks(&shapes, &mut rng);
        out.push(check_build(name, &params, build, cfg)?);
    }
    out.push(check_agent("agent/acrg", ReprConfig::default(), cfg, cfg.seed)?);
    let static_adj = ReprConfig { adjacency: AdjacencyMode::Static, ..ReprConfig::default() };
    out.push(check_agent("agent/acrg-static-adjacency", static_adj, cfg, cfg.seed + 1)?);
    for variant in [Variant::Ohrg, Variant::Atdrg, Variant::Multidepth, Variant::Vertical] {
        let mut repr = ReprConfig::default();
        variant.apply(&mut repr);
        out.push(check_agent(&format!("agent/{}", variant.name()), repr, cfg, cfg.seed + 2)?);
    }
    Ok(out)
}

/// Parameter blocks a check covered, for reporting.
pub fn covered_blocks(check: &NamedCheck) -> Vec<(String, usize)> {
    check.report.blocks.iter().map(|b| (b.name.clone(), b.checked)).collect()
}
