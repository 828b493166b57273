use acrg_core::autodiff::gradcheck::{check_params, GradCheckConfig};
use acrg_core::autodiff::{softmax_rows, ParamSet, Tape, Tensor};
use acrg_core::policy::*;
use acrg_core::repr::ReprConfig;
use acrg_core::sim::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random(rows: usize, cols: usize, rng: &mut impl Rng) -> Tensor {
    let data = (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect();
    Tensor::from_vec(rows, cols, data).unwrap()
}

fn small_policy(hidden: usize, input: usize, seed: u64) -> (Policy, ParamSet) {
    let mut params = ParamSet::new();
    let cfg = PolicyConfig { hidden, head_init: 0.5, ..PolicyConfig::default() };
    let policy = Policy::init(&cfg, input, &mut params, "policy", &mut ChaCha8Rng::seed_from_u64(seed));
    (policy, params)
}

/// Unrolls `states.len()` steps from a zero LSTM state and returns the
/// per-step logits and values as tape handles plus a scalar probe loss.
fn unroll(
    policy: &Policy,
    tape: &mut Tape<'_>,
    states: &[Tensor],
    actions: &[Option<Action>],
    probe: &Tensor,
) -> acrg_core::autodiff::Var {
    let mut h = tape.constant(Tensor::zeros(1, policy.hidden()));
    let mut c = tape.constant(Tensor::zeros(1, policy.hidden()));
    let mut total = None;
    let w = tape.constant(probe.clone());
    for (s, a) in states.iter().zip(actions) {
        let sv = tape.constant(s.clone());
        let av = tape.constant(prev_action_one_hot(*a));
        let out = policy.forward(tape, sv, av, h, c).unwrap();
        let lw = tape.mul(out.logits, w).unwrap();
        let lw = tape.sum(lw);
        let step = tape.add(lw, out.value).unwrap();
        total = Some(match total {
            None => step,
            Some(t) => tape.add(t, step).unwrap(),
        });
        h = out.h;
        c = out.c;
    }
    total.unwrap()
}

#[test]
fn zero_weights_and_inputs_give_bias_outputs() {
    let (policy, mut params) = small_policy(16, 10, 1);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let ids: Vec<_> = params.ids().collect();
    for id in ids {
        let name = params.name(id).to_string();
        let (r, c) = params.get(id).shape();
        *params.get_mut(id) = if name.ends_with(".b") { random(r, c, &mut rng) } else { Tensor::zeros(r, c) };
    }
    let mut tape = Tape::with_params(&params);
    let s = tape.constant(Tensor::zeros(1, 10));
    let a = tape.constant(prev_action_one_hot(None));
    let h = tape.constant(Tensor::zeros(1, 16));
    let c = tape.constant(Tensor::zeros(1, 16));
    let out = policy.forward(&mut tape, s, a, h, c).unwrap();
    assert_eq!(tape.value(out.logits), params.get(params.id("policy.actor.b").unwrap()));
    assert_eq!(tape.value(out.value), params.get(params.id("policy.critic.b").unwrap()));
}

#[test]
fn five_step_bptt_matches_finite_differences() {
    let (policy, params) = small_policy(8, 5, 2);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let states: Vec<Tensor> = (0..5).map(|_| random(1, 5, &mut rng)).collect();
    let actions = [None, Some(Action::MoveAhead), Some(Action::RotateLeft), Some(Action::LookUp), Some(Action::Done)];
    let probe = random(1, ACTIONS, &mut rng);
    let mut tape = Tape::with_params(&params);
    let loss = unroll(&policy, &mut tape, &states, &actions, &probe);
    let grads = tape.backward(loss).unwrap().param_grads(&params);
    let report = check_params(
        &params,
        &grads,
        |p| {
            let mut tape = Tape::with_params(p);
            let l = unroll(&policy, &mut tape, &states, &actions, &probe);
            tape.value(l).item()
        },
        &GradCheckConfig { coords_per_block: 40, ..GradCheckConfig::default() },
    );
    assert!(report.passed(), "{:?}", report.failures());
    assert!(report.max_rel_err() < 1e-4);
}

#[test]
fn hidden_state_stays_bounded_over_fifty_steps() {
    let (policy, params) = small_policy(32, 12, 3);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut tape = Tape::with_params(&params);
    let mut h = tape.constant(Tensor::zeros(1, 32));
    let mut c = tape.constant(Tensor::zeros(1, 32));
    for _ in 0..50 {
        let s = tape.constant(random(1, 12, &mut rng).map(|v| 10.0 * v));
        let a = tape.constant(prev_action_one_hot(Action::from_index(rng.gen_range(0..ACTIONS))));
        let out = policy.forward(&mut tape, s, a, h, c).unwrap();
        assert!(tape.value(out.h).data().iter().all(|v| v.abs() <= 1.0));
        assert!(tape.value(out.c).is_finite() && tape.value(out.logits).is_finite());
        h = out.h;
        c = out.c;
    }
}

#[test]
fn greedy_picks_done_for_dominant_last_logit() {
    let logits = Tensor::row_vector(&[0.0, 0.0, 0.0, 0.0, 0.0, 10.0]);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let a = select_action(&logits, SelectMode::Greedy, &mut rng);
    assert_eq!(a, 5);
    assert_eq!(Action::from_index(a), Some(Action::Done));
}

#[test]
fn greedy_ties_go_to_the_lowest_index() {
    let logits = Tensor::row_vector(&[1.0, 3.0, 3.0, 0.0, 3.0, 2.0]);
    assert_eq!(select_action(&logits, SelectMode::Greedy, &mut ChaCha8Rng::seed_from_u64(0)), 1);
}

#[test]
fn seeded_stochastic_selection_is_reproducible() {
    let logits = Tensor::zeros(1, ACTIONS);
    let draw = |seed| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..100).map(|_| select_action(&logits, SelectMode::Stochastic, &mut rng)).collect::<Vec<_>>()
    };
    assert_eq!(draw(42), draw(42));
    assert_ne!(draw(42), draw(43));
}

#[test]
fn stochastic_frequencies_match_softmax() {
    let logits = Tensor::row_vector(&[1f64.ln(), 2f64.ln(), 3f64.ln(), 1f64.ln(), 1f64.ln(), 1f64.ln()]);
    let exact = [1.0 / 9.0, 2.0 / 9.0, 3.0 / 9.0, 1.0 / 9.0, 1.0 / 9.0, 1.0 / 9.0];
    assert!(softmax_rows(&logits).data().iter().zip(exact).all(|(p, q)| (p - q).abs() < 1e-12));
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let n = 60_000;
    let mut counts = [0usize; ACTIONS];
    for _ in 0..n {
        counts[select_action(&logits, SelectMode::Stochastic, &mut rng)] += 1;
    }
    for (k, p) in exact.iter().enumerate() {
        let freq = counts[k] as f64 / n as f64;
        assert!((freq - p).abs() <= 0.01, "action {k}: {freq} vs {p}");
    }
}

#[test]
fn initial_policy_is_near_uniform() {
    let (model, params) = AgentModel::init(&ReprConfig::default(), &PolicyConfig::default(), 5);
    let sim = SimConfig::default();
    let room = &generate_suite(&GeneratorConfig::default(), &sim, 1, 0, 5)[0];
    let target = room.targets()[0];
    let (_, obs) = Episode::reset(room, &sim, target, 0).unwrap();
    let (out, next) = model.act(&params, &obs, target, None, &LstmState::zeros(model.hidden())).unwrap();
    let p = softmax_rows(&out.logits);
    let entropy: f64 = -p.data().iter().map(|q| q * q.ln()).sum::<f64>();
    assert!((entropy - 6f64.ln()).abs() < 0.05, "entropy {entropy}");
    assert!(out.value.abs() < 0.5);
    assert!(next.h.is_finite() && next.c.is_finite());
}

#[test]
fn episode_start_ignores_earlier_hidden_state() {
    let (model, params) = AgentModel::init(&ReprConfig::default(), &PolicyConfig::default(), 6);
    let sim = SimConfig::default();
    let room = &generate_suite(&GeneratorConfig::default(), &sim, 1, 0, 6)[0];
    let target = room.targets()[1];
    let (mut ep, obs0) = Episode::reset(room, &sim, target, 3).unwrap();
    let zero = LstmState::zeros(model.hidden());
    let (first, _) = model.act(&params, &obs0, target, None, &zero).unwrap();
    // run a while so the recurrent state drifts, then start over
    let mut lstm = zero.clone();
    let mut obs = obs0.clone();
    let mut prev = None;
    for a in [Action::RotateLeft, Action::MoveAhead, Action::LookUp, Action::RotateRight] {
        let (_, next) = model.act(&params, &obs, target, prev, &lstm).unwrap();
        lstm = next;
        obs = ep.step(a).unwrap().observation;
        prev = Some(a);
    }
    assert_ne!(lstm, zero);
    let (again, _) = model.act(&params, &obs0, target, None, &LstmState::zeros(model.hidden())).unwrap();
    assert_eq!(first, again);
}

#[test]
fn act_matches_the_recorded_forward() {
    let (model, params) = AgentModel::init(&ReprConfig::default(), &PolicyConfig::default(), 8);
    let bound = AgentModel::bind(&ReprConfig::default(), &PolicyConfig::default(), &params).unwrap();
    let sim = SimConfig::default();
    let room = &generate_suite(&GeneratorConfig::default(), &sim, 1, 0, 8)[0];
    let target = room.targets()[0];
    let (_, obs) = Episode::reset(room, &sim, target, 1).unwrap();
    let lstm = LstmState { h: Tensor::filled(1, 128, 0.1), c: Tensor::filled(1, 128, -0.2) };
    let (out, next) = model.act(&params, &obs, target, Some(Action::LookDown), &lstm).unwrap();
    let mut tape = Tape::with_params(&params);
    let inputs = bound.repr.inputs(&obs, target);
    let (h, c) = (tape.constant(lstm.h.clone()), tape.constant(lstm.c.clone()));
    let v = bound.forward(&mut tape, &inputs, Some(Action::LookDown), h, c).unwrap();
    assert_eq!(&out.logits, tape.value(v.policy.logits));
    assert_eq!(out.value, tape.value(v.policy.value).item());
    assert_eq!(&next.h, tape.value(v.policy.h));
}

#[test]
fn imitation_head_skips_the_recurrence() {
    let (policy, params) = small_policy(8, 5, 9);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let s = random(1, 5, &mut rng);
    let mut tape = Tape::with_params(&params);
    let sv = tape.constant(s.clone());
    let logits = policy.imitation_logits(&mut tape, sv).unwrap();
    let get = |n: &str| params.get(params.id(n).unwrap());
    let mut hidden = acrg_core::autodiff::matmul_values(&s, get("policy.actor.skip_h")).unwrap();
    hidden.add_scaled(get("policy.actor.skip_hb"), 1.0);
    let hidden = hidden.map(|x| x.max(0.0));
    let mut expected = acrg_core::autodiff::matmul_values(&hidden, get("policy.actor.skip")).unwrap();
    expected.add_scaled(get("policy.actor.b"), 1.0);
    assert!(tape.value(logits).max_abs_diff(&expected) < 1e-15);

    let mut params = ParamSet::new();
    let cfg = PolicyConfig { state_skip: false, ..PolicyConfig::default() };
    let policy = Policy::init(&cfg, 5, &mut params, "policy", &mut rng);
    let mut tape = Tape::with_params(&params);
    let sv = tape.constant(s);
    assert!(policy.imitation_logits(&mut tape, sv).is_err());
}

proptest! {
    #[test]
    fn greedy_is_shift_invariant(values in prop::collection::vec(-20i32..20, ACTIONS), shift in -1000i32..1000) {
        let logits = Tensor::row_vector(&values.iter().map(|&v| v as f64).collect::<Vec<_>>());
        let shifted = logits.map(|v| v + shift as f64);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        prop_assert_eq!(
            select_action(&logits, SelectMode::Greedy, &mut rng),
            select_action(&shifted, SelectMode::Greedy, &mut rng)
        );
    }
}

#[test]
fn bind_rejects_parameters_of_another_architecture() {
    let small = ReprConfig { d_graph: 12, d_adj: 6, d_model: 12, ..ReprConfig::default() };
    let policy = PolicyConfig { hidden: 10, ..PolicyConfig::default() };
    let (_, params) = AgentModel::init(&small, &policy, 1);
    assert!(AgentModel::bind(&small, &policy, &params).is_ok());
    assert!(AgentModel::bind(&ReprConfig::default(), &policy, &params).is_err());
    let wider = PolicyConfig { hidden: 11, ..policy.clone() };
    assert!(AgentModel::bind(&small, &wider, &params).is_err());
    let no_skip = PolicyConfig { state_skip: false, ..policy };
    assert!(AgentModel::bind(&small, &no_skip, &params).is_err());
}
