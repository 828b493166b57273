//! Recurrent actor-critic head and the full observation-to-action model.

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::init::{glorot_uniform, orthogonal, uniform};
use crate::autodiff::{softmax_rows, AutodiffError, ParamId, ParamSet, Tape, Tensor, Var};
use crate::repr::{Hooks, ReprConfig, ReprInputs, Representation};
use crate::sim::{Action, ObservationBundle};

pub const ACTIONS: usize = Action::COUNT;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PolicyConfig {
    pub hidden: usize,
    /// Half-width of the uniform initializer of the output heads.
    pub head_init: f64,
    /// Add a linear path from the state straight to the logits; this is the
    /// head trained during imitation.
    pub state_skip: bool,
    /// Width of the hidden ReLU layer of the state-skip head; 0 makes it linear.
    pub skip_hidden: usize,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        PolicyConfig { hidden: 128, head_init: 0.01, state_skip: true, skip_hidden: 128 }
    }
}

#[derive(Clone, Debug)]
pub struct Policy {
    input: usize,
    hidden: usize,
    w_ih: ParamId,
    w_hh: ParamId,
    b: ParamId,
    actor_w: ParamId,
    actor_b: ParamId,
    skip_w: Option<ParamId>,
    /// Hidden layer of the skip head: weights and bias.
    skip_hidden: Option<(ParamId, ParamId)>,
    value_w: ParamId,
    value_b: ParamId,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LstmState {
    pub h: Tensor,
    pub c: Tensor,
}

impl LstmState {
    pub fn zeros(hidden: usize) -> LstmState {
        LstmState { h: Tensor::zeros(1, hidden), c: Tensor::zeros(1, hidden) }
    }
}

/// Tape handles of one policy step.
#[derive(Clone, Copy, Debug)]
pub struct PolicyVars {
    pub logits: Var,
    pub value: Var,
    pub h: Var,
    pub c: Var,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PolicyOutput {
    pub logits: Tensor,
    pub value: f64,
}

impl Policy {
    pub fn init<R: Rng + ?Sized>(
        cfg: &PolicyConfig,
        input: usize,
        params: &mut ParamSet,
        prefix: &str,
        rng: &mut R,
    ) -> Self {
        let (dp, a) = (cfg.hidden, ACTIONS);
        let mut add = |name: &str, t: Tensor| params.add(format!("{prefix}.{name}"), t);
        let w_ih = add("lstm.w_ih", glorot_uniform(input + a, 4 * dp, rng));
        let mut hh = Tensor::zeros(dp, 4 * dp);
        for gate in 0..4 {
            let q = orthogonal(dp, dp, rng);
            for r in 0..dp {
                for c in 0..dp {
                    hh.set(r, gate * dp + c, q.get(r, c));
                }
            }
        }
        let w_hh = add("lstm.w_hh", hh);
        let b = add("lstm.b", Tensor::zeros(1, 4 * dp));
        let actor_w = add("actor.w", uniform(dp, a, cfg.head_init, rng));
        let actor_b = add("actor.b", Tensor::zeros(1, a));
        let skip_hidden = (cfg.state_skip && cfg.skip_hidden > 0).then(|| {
            (
                add("actor.skip_h", glorot_uniform(input, cfg.skip_hidden, rng)),
                add("actor.skip_hb", Tensor::zeros(1, cfg.skip_hidden)),
            )
        });
        let skip_in = if cfg.skip_hidden > 0 { cfg.skip_hidden } else { input };
        let skip_w = cfg.state_skip.then(|| add("actor.skip", uniform(skip_in, a, cfg.head_init, rng)));
        let value_w = add("critic.w", uniform(dp, 1, cfg.head_init, rng));
        let value_b = add("critic.b", Tensor::zeros(1, 1));
        Policy { input, hidden: dp, w_ih, w_hh, b, actor_w, actor_b, skip_w, skip_hidden, value_w, value_b }
    }

    pub fn bind(cfg: &PolicyConfig, input: usize, params: &ParamSet, prefix: &str) -> Result<Self, AutodiffError> {
        let id = |name: &str| {
            params
                .id(&format!("{prefix}.{name}"))
                .ok_or_else(|| AutodiffError::Checkpoint(format!("missing {prefix}.{name}")))
        };
        Ok(Policy {
            input,
            hidden: cfg.hidden,
            w_ih: id("lstm.w_ih")?,
            w_hh: id("lstm.w_hh")?,
            b: id("lstm.b")?,
            actor_w: id("actor.w")?,
            actor_b: id("actor.b")?,
            skip_w: if cfg.state_skip { Some(id("actor.skip")?) } else { None },
            skip_hidden: if cfg.state_skip && cfg.skip_hidden > 0 {
                Some((id("actor.skip_h")?, id("actor.skip_hb")?))
            } else {
                None
            },
            value_w: id("critic.w")?,
            value_b: id("critic.b")?,
        })
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn input(&self) -> usize {
        self.input
    }

    /// One LSTM step over `[state ⊕ prev_action]` followed by the actor and critic heads.
    pub fn forward(
        &self,
        tape: &mut Tape<'_>,
        state: Var,
        prev_action: Var,
        h: Var,
        c: Var,
    ) -> Result<PolicyVars, AutodiffError> {
        let dp = self.hidden;
        let x = tape.concat_cols(state, prev_action)?;
        let (w_ih, w_hh, b) = (tape.param(self.w_ih), tape.param(self.w_hh), tape.param(self.b));
        let zx = tape.matmul(x, w_ih)?;
        let zh = tape.matmul(h, w_hh)?;
        let z = tape.add(zx, zh)?;
        let z = tape.add(z, b)?;
        let gi = tape.slice_cols(z, 0, dp)?;
        let gf = tape.slice_cols(z, dp, dp)?;
        let gg = tape.slice_cols(z, 2 * dp, dp)?;
        let go = tape.slice_cols(z, 3 * dp, dp)?;
        let (i, f, g, o) = (tape.sigmoid(gi), tape.sigmoid(gf), tape.tanh(gg), tape.sigmoid(go));
        let keep = tape.mul(f, c)?;
        let write = tape.mul(i, g)?;
        let c_next = tape.add(keep, write)?;
        let tc = tape.tanh(c_next);
        let h_next = tape.mul(o, tc)?;

        let (aw, ab) = (tape.param(self.actor_w), tape.param(self.actor_b));
        let logits = tape.matmul(h_next, aw)?;
        let mut logits = tape.add(logits, ab)?;
        if let Some(sw) = self.skip_w {
            let skip = self.skip(tape, state, sw)?;
            logits = tape.add(logits, skip)?;
        }
        let (vw, vb) = (tape.param(self.value_w), tape.param(self.value_b));
        let value = tape.matmul(h_next, vw)?;
        let value = tape.add(value, vb)?;
        Ok(PolicyVars { logits, value, h: h_next, c: c_next })
    }

    /// The skip head without bias: `state · W_skip`, or `relu(state · W_h + b_h) · W_skip`.
    fn skip(&self, tape: &mut Tape<'_>, state: Var, sw: ParamId) -> Result<Var, AutodiffError> {
        let mut x = state;
        if let Some((wh, bh)) = self.skip_hidden {
            let (wh, bh) = (tape.param(wh), tape.param(bh));
            let z = tape.matmul(x, wh)?;
            let z = tape.add(z, bh)?;
            x = tape.relu(z);
        }
        let sw = tape.param(sw);
        tape.matmul(x, sw)
    }

    /// Logits of the imitation head, the skip head plus the actor bias, bypassing the LSTM.
    pub fn imitation_logits(&self, tape: &mut Tape<'_>, state: Var) -> Result<Var, AutodiffError> {
        let sw = self.skip_w.ok_or_else(|| AutodiffError::Checkpoint("imitation needs state_skip".into()))?;
        let l = self.skip(tape, state, sw)?;
        let ab = tape.param(self.actor_b);
        tape.add(l, ab)
    }
}

pub fn prev_action_one_hot(prev: Option<Action>) -> Tensor {
    match prev {
        Some(a) => Tensor::one_hot(ACTIONS, a.index()),
        None => Tensor::zeros(1, ACTIONS),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SelectMode {
    Greedy,
    Stochastic,
}

/// Greedy: argmax with the lowest index winning ties. Stochastic: a draw from
/// `softmax(logits)` using `rng`.
pub fn select_action<R: Rng + ?Sized>(logits: &Tensor, mode: SelectMode, rng: &mut R) -> usize {
    match mode {
        SelectMode::Greedy => logits.argmax_row(0),
        SelectMode::Stochastic => {
            let p = softmax_rows(logits);
            WeightedIndex::new(p.row(0)).expect("softmax weights are positive").sample(rng)
        }
    }
}

/// Representation plus policy over one shared parameter set.
#[derive(Clone, Debug)]
pub struct AgentModel {
    pub repr: Representation,
    pub policy: Policy,
}

/// Tape handles of one full agent step.
#[derive(Clone, Copy, Debug)]
pub struct AgentVars {
    pub state: Var,
    pub policy: PolicyVars,
}

impl AgentModel {
    pub fn init(repr_cfg: &ReprConfig, policy_cfg: &PolicyConfig, seed: u64) -> (AgentModel, ParamSet) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamSet::new();
        let repr = Representation::init(repr_cfg, &mut params, "repr", &mut rng);
        let policy = Policy::init(policy_cfg, repr_cfg.d_model, &mut params, "policy", &mut rng);
        (AgentModel { repr, policy }, params)
    }

    /// Binds to existing parameters, which must match the configured
    /// architecture block for block in name and shape.
    pub fn bind(
        repr_cfg: &ReprConfig,
        policy_cfg: &PolicyConfig,
        params: &ParamSet,
    ) -> Result<AgentModel, AutodiffError> {
        let (_, reference) = AgentModel::init(repr_cfg, policy_cfg, 0);
        if reference.len() != params.len() {
            return Err(AutodiffError::Checkpoint(format!(
                "expected {} parameter blocks, found {}",
                reference.len(),
                params.len()
            )));
        }
        for id in reference.ids() {
            let name = reference.name(id);
            let want = reference.get(id).shape();
            let found = params.id(name).map(|p| params.get(p).shape());
            if found != Some(want) {
                return Err(AutodiffError::Checkpoint(format!("{name}: expected shape {want:?}, found {found:?}")));
            }
        }
        Ok(AgentModel {
            repr: Representation::bind(repr_cfg, params, "repr")?,
            policy: Policy::bind(policy_cfg, repr_cfg.d_model, params, "policy")?,
        })
    }

    pub fn hidden(&self) -> usize {
        self.policy.hidden()
    }

    /// Records one full step on `tape`. `h` and `c` are the incoming LSTM state.
    pub fn forward(
        &self,
        tape: &mut Tape<'_>,
        inputs: &ReprInputs,
        prev_action: Option<Action>,
        h: Var,
        c: Var,
    ) -> Result<AgentVars, AutodiffError> {
        let r = self.repr.forward(tape, inputs, &Hooks::default())?;
        let a = tape.constant(prev_action_one_hot(prev_action));
        let policy = self.policy.forward(tape, r.state, a, h, c)?;
        Ok(AgentVars { state: r.state, policy })
    }

    /// Forward-only step: returns the outputs and the next LSTM state.
    pub fn act(
        &self,
        params: &ParamSet,
        obs: &ObservationBundle,
        target: usize,
        prev_action: Option<Action>,
        lstm: &LstmState,
    ) -> Result<(PolicyOutput, LstmState), AutodiffError> {
        let mut tape = Tape::with_params(params);
        let inputs = self.repr.inputs(obs, target);
        let h = tape.constant(lstm.h.clone());
        let c = tape.constant(lstm.c.clone());
        let v = self.forward(&mut tape, &inputs, prev_action, h, c)?;
        let out =
            PolicyOutput { logits: tape.value(v.policy.logits).clone(), value: tape.value(v.policy.value).item() };
        let next = LstmState { h: tape.value(v.policy.h).clone(), c: tape.value(v.policy.c).clone() };
        Ok((out, next))
    }
}
