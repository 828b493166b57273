use rand::Rng;
use serde::{Deserialize, Serialize};

use super::nodes::{
    atdrg_nodes, detection_inputs, grid_tokens, horizontal_cues, ohrg_nodes, pitch_one_hot, positional_encoding,
    vertical_centres,
};
use super::ops::{apply_map, attention_map, dynamic_adjacency, fuse, graph_conv, transformer_fuse};
use super::{AdjacencyMode, ReprConfig};
use crate::autodiff::init::glorot_uniform;
use crate::autodiff::{AutodiffError, ParamId, ParamSet, Tape, Tensor, Var};
use crate::sim::{ObservationBundle, Pitch};

/// Per-graph parameters: feature weights and either adjacency projections or a static logit matrix.
#[derive(Clone, Debug)]
struct GraphIds {
    w: ParamId,
    pq: Option<ParamId>,
    pk: Option<ParamId>,
    logits: Option<ParamId>,
}

#[derive(Clone, Debug)]
pub struct Representation {
    cfg: ReprConfig,
    ohrg: Option<GraphIds>,
    atdrg: Option<GraphIds>,
    fuse_w: Option<ParamId>,
    fuse_b: Option<ParamId>,
    attn_w: ParamId,
    det_e: ParamId,
    proj: Option<ParamId>,
    glob_w: ParamId,
    glob_b: ParamId,
    target_w: Option<ParamId>,
    pitch_w: Option<ParamId>,
    pe: Tensor,
}

/// Everything the forward pass reads from one observation and target.
#[derive(Clone, Debug, PartialEq)]
pub struct ReprInputs {
    pub x_h: Tensor,
    pub x_d: Tensor,
    pub detections: Tensor,
    pub tokens: Tensor,
    pub target: Tensor,
    pub pitch: Tensor,
}

/// Overrides used by tests to pin intermediate maps.
#[derive(Clone, Debug, Default)]
pub struct Hooks {
    /// Used in place of both adjacency matrices.
    pub adjacency: Option<Tensor>,
    /// Used in place of the map-attention matrix `Â`.
    pub map_attention: Option<Tensor>,
    /// Record the observation inputs as gradient-taking leaves.
    pub input_grads: bool,
}

#[derive(Clone, Copy, Debug)]
pub struct ReprOutput {
    /// Node matrices and detection inputs as recorded on the tape.
    pub x_h: Option<Var>,
    pub x_d: Option<Var>,
    pub det: Var,
    /// `1 × d_model` pooled state.
    pub state: Var,
    pub a_h: Option<Var>,
    pub a_d: Option<Var>,
    pub z_h: Option<Var>,
    pub z_d: Option<Var>,
    pub z_t: Var,
    pub a_hat: Var,
    pub f_t: Var,
    /// `m × C` token-to-slot attention.
    pub attention: Var,
    /// `m × d_model` fused tokens before pooling.
    pub fused: Var,
}

/// Intermediate maps of one forward pass, for inspection.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReprDump {
    pub a_h: Option<Tensor>,
    pub a_d: Option<Tensor>,
    pub a_hat: Tensor,
    pub attention: Tensor,
    pub state: Tensor,
}

impl Representation {
    /// Registers fresh parameters under `prefix.` in `params`.
    pub fn init<R: Rng + ?Sized>(cfg: &ReprConfig, params: &mut ParamSet, prefix: &str, rng: &mut R) -> Self {
        let c = cfg.categories;
        let (dg, da, d) = (cfg.d_graph, cfg.d_adj, cfg.d_model);
        let mut add = |name: &str, t: Tensor| params.add(format!("{prefix}.{name}"), t);
        let mut graph = |tag: &str, width: usize, rng: &mut R| {
            let w = add(&format!("{tag}.w"), glorot_uniform(width, dg, rng));
            match cfg.adjacency {
                AdjacencyMode::Dynamic => GraphIds {
                    w,
                    pq: Some(add(&format!("{tag}.pq"), glorot_uniform(width, da, rng))),
                    pk: Some(add(&format!("{tag}.pk"), glorot_uniform(width, da, rng))),
                    logits: None,
                },
                AdjacencyMode::Static => {
                    GraphIds { w, pq: None, pk: None, logits: Some(add(&format!("{tag}.adj"), Tensor::zeros(c, c))) }
                }
            }
        };
        let ohrg = (!cfg.atdrg_only).then(|| graph("ohrg", cfg.ohrg_width(), rng));
        let atdrg = (!cfg.ohrg_only).then(|| graph("atdrg", cfg.atdrg_width(), rng));
        let fused = ohrg.is_some() && atdrg.is_some();
        let fuse_w = fused.then(|| add("fuse.w", glorot_uniform(2 * dg, dg, rng)));
        let fuse_b = fused.then(|| add("fuse.b", Tensor::zeros(1, dg)));
        let attn_w = add("attn.w", glorot_uniform(dg, c, rng));
        let det_e = add("det.e", glorot_uniform(c + 5, dg, rng));
        let proj = (dg != d).then(|| add("proj.w", glorot_uniform(dg, d, rng)));
        let glob_w = add("glob.w", glorot_uniform(c + 1, d, rng));
        let glob_b = add("glob.b", Tensor::zeros(1, d));
        let target_w = cfg.target_embedding.then(|| add("glob.target", glorot_uniform(c, d, rng)));
        let pitch_w = cfg.pitch_embedding.then(|| add("glob.pitch", glorot_uniform(Pitch::COUNT, d, rng)));
        Representation {
            cfg: cfg.clone(),
            ohrg,
            atdrg,
            fuse_w,
            fuse_b,
            attn_w,
            det_e,
            proj,
            glob_w,
            glob_b,
            target_w,
            pitch_w,
            pe: positional_encoding(cfg.ego_k, d),
        }
    }

    /// Re-attaches to parameters registered earlier by [`Representation::init`] with the same config.
    pub fn bind(cfg: &ReprConfig, params: &ParamSet, prefix: &str) -> Result<Self, AutodiffError> {
        let id = |name: &str| {
            params
                .id(&format!("{prefix}.{name}"))
                .ok_or_else(|| AutodiffError::Checkpoint(format!("missing {prefix}.{name}")))
        };
        let graph = |tag: &str| -> Result<GraphIds, AutodiffError> {
            let w = id(&format!("{tag}.w"))?;
            Ok(match cfg.adjacency {
                AdjacencyMode::Dynamic => GraphIds {
                    w,
                    pq: Some(id(&format!("{tag}.pq"))?),
                    pk: Some(id(&format!("{tag}.pk"))?),
                    logits: None,
                },
                AdjacencyMode::Static => GraphIds { w, pq: None, pk: None, logits: Some(id(&format!("{tag}.adj"))?) },
            })
        };
        let ohrg = if cfg.atdrg_only { None } else { Some(graph("ohrg")?) };
        let atdrg = if cfg.ohrg_only { None } else { Some(graph("atdrg")?) };
        let fused = ohrg.is_some() && atdrg.is_some();
        let opt = |on: bool, name: &str| if on { id(name).map(Some) } else { Ok(None) };
        Ok(Representation {
            cfg: cfg.clone(),
            ohrg,
            atdrg,
            fuse_w: opt(fused, "fuse.w")?,
            fuse_b: opt(fused, "fuse.b")?,
            attn_w: id("attn.w")?,
            det_e: id("det.e")?,
            proj: opt(cfg.d_graph != cfg.d_model, "proj.w")?,
            glob_w: id("glob.w")?,
            glob_b: id("glob.b")?,
            target_w: opt(cfg.target_embedding, "glob.target")?,
            pitch_w: opt(cfg.pitch_embedding, "glob.pitch")?,
            pe: positional_encoding(cfg.ego_k, cfg.d_model),
        })
    }

    pub fn config(&self) -> &ReprConfig {
        &self.cfg
    }

    /// Builds every fixed input of the forward pass from an observation.
    pub fn inputs(&self, obs: &ObservationBundle, target: usize) -> ReprInputs {
        let c = self.cfg.categories;
        assert_eq!(obs.detections.len(), c, "observation has {} slots, model expects {c}", obs.detections.len());
        let vertical = self.cfg.with_vertical.then(|| vertical_centres(obs));
        ReprInputs {
            x_h: ohrg_nodes(&horizontal_cues(obs), vertical.as_deref()),
            x_d: atdrg_nodes(obs, target, self.cfg.multi_depth_nodes),
            detections: detection_inputs(obs),
            tokens: grid_tokens(obs),
            target: Tensor::one_hot(c, target),
            pitch: pitch_one_hot(obs.pitch),
        }
    }

    fn input(tape: &mut Tape<'_>, x: Tensor, hooks: &Hooks) -> Var {
        if hooks.input_grads {
            tape.leaf(x)
        } else {
            tape.constant(x)
        }
    }

    fn adjacency(&self, tape: &mut Tape<'_>, x: Var, g: &GraphIds, hooks: &Hooks) -> Result<Var, AutodiffError> {
        if let Some(a) = &hooks.adjacency {
            return Ok(tape.constant(a.clone()));
        }
        if let Some(s) = g.logits {
            let s = tape.param(s);
            return Ok(tape.softmax_rows(s));
        }
        let (pq, pk) = (tape.param(g.pq.expect("dynamic")), tape.param(g.pk.expect("dynamic")));
        dynamic_adjacency(tape, x, pq, pk)
    }

    /// `relu(A · X · W)` for one graph; returns `(X, A, Z)`.
    fn graph_layer(
        &self,
        tape: &mut Tape<'_>,
        x: Tensor,
        g: &GraphIds,
        hooks: &Hooks,
    ) -> Result<(Var, Var, Var), AutodiffError> {
        let x = Self::input(tape, x, hooks);
        let a = self.adjacency(tape, x, g, hooks)?;
        let w = tape.param(g.w);
        Ok((x, a, graph_conv(tape, a, x, w)?))
    }

    pub fn forward(
        &self,
        tape: &mut Tape<'_>,
        inputs: &ReprInputs,
        hooks: &Hooks,
    ) -> Result<ReprOutput, AutodiffError> {
        let oh = match &self.ohrg {
            Some(g) => Some(self.graph_layer(tape, inputs.x_h.clone(), g, hooks)?),
            None => None,
        };
        let ad = match &self.atdrg {
            Some(g) => Some(self.graph_layer(tape, inputs.x_d.clone(), g, hooks)?),
            None => None,
        };
        let z_t = match (oh, ad) {
            (Some((_, _, zh)), Some((_, _, zd))) => {
                let wf = tape.param(self.fuse_w.expect("fused"));
                let bf = tape.param(self.fuse_b.expect("fused"));
                fuse(tape, zh, zd, wf, bf)?
            }
            (Some((_, _, zh)), None) => zh,
            (None, Some((_, _, zd))) => zd,
            (None, None) => unreachable!("validated config keeps at least one graph"),
        };

        let a_hat = match &hooks.map_attention {
            Some(a) => tape.constant(a.clone()),
            None => {
                let wa = tape.param(self.attn_w);
                attention_map(tape, z_t, wa)?
            }
        };
        let det = Self::input(tape, inputs.detections.clone(), hooks);
        let e = tape.param(self.det_e);
        let f = tape.matmul(det, e)?;
        let mut f_t = apply_map(tape, a_hat, f)?;
        if let Some(p) = self.proj {
            let p = tape.param(p);
            f_t = tape.matmul(f_t, p)?;
        }

        let tokens = tape.constant(inputs.tokens.clone());
        let wg = tape.param(self.glob_w);
        let mut g = tape.matmul(tokens, wg)?;
        let pe = tape.constant(self.pe.clone());
        g = tape.add(g, pe)?;
        let mut row = tape.param(self.glob_b);
        if let Some(wt) = self.target_w {
            let t = tape.constant(inputs.target.clone());
            let wt = tape.param(wt);
            let te = tape.matmul(t, wt)?;
            row = tape.add(row, te)?;
        }
        if let Some(wp) = self.pitch_w {
            let p = tape.constant(inputs.pitch.clone());
            let wp = tape.param(wp);
            let pe = tape.matmul(p, wp)?;
            row = tape.add(row, pe)?;
        }
        g = tape.add(g, row)?;

        let (attention, fused) = transformer_fuse(tape, g, f_t)?;
        let state = tape.mean_rows(fused);
        Ok(ReprOutput {
            x_h: oh.map(|(x, _, _)| x),
            x_d: ad.map(|(x, _, _)| x),
            det,
            state,
            a_h: oh.map(|(_, a, _)| a),
            a_d: ad.map(|(_, a, _)| a),
            z_h: oh.map(|(_, _, z)| z),
            z_d: ad.map(|(_, _, z)| z),
            z_t,
            a_hat,
            f_t,
            attention,
            fused,
        })
    }

    /// State vector for one observation, without keeping the tape.
    pub fn state(&self, params: &ParamSet, obs: &ObservationBundle, target: usize) -> Result<Tensor, AutodiffError> {
        let mut tape = Tape::with_params(params);
        let out = self.forward(&mut tape, &self.inputs(obs, target), &Hooks::default())?;
        Ok(tape.value(out.state).clone())
    }

    pub fn dump(&self, params: &ParamSet, obs: &ObservationBundle, target: usize) -> Result<ReprDump, AutodiffError> {
        let mut tape = Tape::with_params(params);
        let out = self.forward(&mut tape, &self.inputs(obs, target), &Hooks::default())?;
        Ok(ReprDump {
            a_h: out.a_h.map(|v| tape.value(v).clone()),
            a_d: out.a_d.map(|v| tape.value(v).clone()),
            a_hat: tape.value(out.a_hat).clone(),
            attention: tape.value(out.attention).clone(),
            state: tape.value(out.state).clone(),
        })
    }
}
