use acrg_core::eval::*;
use acrg_core::policy::{AgentModel, PolicyConfig, SelectMode};
use acrg_core::repr::ReprConfig;
use acrg_core::sim::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn trace(success: bool, length: usize, l_opt: Option<usize>) -> EpisodeTrace {
    EpisodeTrace {
        layout_id: 0,
        target: 1,
        start: AgentPose::new(0, 0, 0, Pitch::Level),
        actions: vec![Action::MoveAhead; length],
        rewards: vec![Reward(-1); length],
        success,
        length,
        l_opt,
    }
}

fn random_traces(rng: &mut ChaCha8Rng) -> Vec<EpisodeTrace> {
    let n = rng.gen_range(1..60);
    (0..n)
        .map(|_| {
            let l_opt = rng.gen_range(1..30);
            let success = rng.gen_bool(0.5);
            let length = if success { rng.gen_range(l_opt..=50.max(l_opt)) } else { rng.gen_range(1..=50) };
            trace(success, length, Some(l_opt))
        })
        .collect()
}

#[test]
fn success_rate_examples() {
    let t: Vec<_> = [true, false, true, true].iter().map(|&s| trace(s, 5, Some(3))).collect();
    assert_eq!(success_rate(&t).unwrap(), 0.75);
    let fails: Vec<_> = (0..4).map(|_| trace(false, 50, Some(3))).collect();
    assert_eq!(success_rate(&fails).unwrap(), 0.0);
    assert!(matches!(success_rate(&[]), Err(EvalError::Empty)));
}

#[test]
fn spl_worked_example_is_exact() {
    assert_eq!(spl(&[trace(true, 8, Some(4))]).unwrap(), 0.5);
    assert_eq!(spl_term(&trace(false, 8, Some(4))).unwrap(), 0.0);
    assert!(matches!(spl(&[]), Err(EvalError::Empty)));
}

#[test]
fn spl_rejects_success_without_optimal_length() {
    assert!(matches!(spl(&[trace(true, 3, None)]), Err(EvalError::MissingOptimal { .. })));
    assert!(matches!(spl(&[trace(true, 3, Some(0))]), Err(EvalError::MissingOptimal { .. })));
    // failures need no optimal length
    assert_eq!(spl(&[trace(false, 3, None)]).unwrap(), 0.0);
}

#[test]
fn optimal_successes_give_spl_equal_to_success() {
    let t = vec![trace(true, 4, Some(4)), trace(false, 50, Some(7)), trace(true, 9, Some(9))];
    assert_eq!(spl(&t).unwrap(), success_rate(&t).unwrap());
}

#[test]
fn l5_filter_keeps_the_boundary() {
    let t: Vec<_> = [3, 5, 9].iter().map(|&l| trace(true, l, Some(l))).collect();
    let kept: Vec<_> = filter_l5(&t).iter().map(|t| t.l_opt.unwrap()).collect();
    assert_eq!(kept, vec![5, 9]);
    assert!(filter_l5(&[trace(true, 3, Some(3))]).is_empty());
}

#[test]
fn metrics_match_brute_force_on_random_trace_sets() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..100 {
        let t = random_traces(&mut rng);
        let mut s = 0.0;
        let mut p = 0.0;
        for x in &t {
            let si = if x.success { 1.0 } else { 0.0 };
            let l = x.l_opt.unwrap() as f64;
            let term = si * l / (x.length as f64).max(l);
            assert!(term <= si);
            s += si;
            p += term;
        }
        let n = t.len() as f64;
        assert!((success_rate(&t).unwrap() - s / n).abs() < 1e-12);
        assert!((spl(&t).unwrap() - p / n).abs() < 1e-12);
        let sub: Vec<_> = t.iter().filter(|x| x.l_opt.unwrap() >= 5).cloned().collect();
        assert_eq!(filter_l5(&t), sub);
    }
}

proptest! {
    #[test]
    fn spl_is_bounded_by_success(seed in 0u64..10_000) {
        let t = random_traces(&mut ChaCha8Rng::seed_from_u64(seed));
        let (s, p) = (success_rate(&t).unwrap(), spl(&t).unwrap());
        prop_assert!((0.0..=1.0).contains(&p) && p <= s && s <= 1.0);
        for x in &t {
            let s_n = if x.success { 1.0 } else { 0.0 };
            prop_assert!(spl_term(x).unwrap() <= s_n);
        }
    }
}

fn suite() -> (SimConfig, Vec<RoomLayout>) {
    let cfg = SimConfig::default();
    let layouts = generate_suite(&GeneratorConfig::default(), &cfg, 3, 0, 17);
    (cfg, layouts)
}

#[test]
fn expert_baseline_is_perfect() {
    let (cfg, layouts) = suite();
    let run = run_episodes(&mut ExpertNavigator::new(), &layouts, &cfg, 60, 3).unwrap();
    assert_eq!(run.traces.len(), 60);
    assert_eq!(run.excluded_unreachable, 0);
    assert_eq!(success_rate(&run.traces).unwrap(), 1.0);
    assert_eq!(spl(&run.traces).unwrap(), 1.0);
}

#[test]
fn random_baseline_is_reproducible_and_weak() {
    let (cfg, layouts) = suite();
    let a = run_episodes(&mut RandomNavigator::new(), &layouts, &cfg, 90, 8).unwrap();
    let b = run_episodes(&mut RandomNavigator::new(), &layouts, &cfg, 90, 8).unwrap();
    assert_eq!(a, b);
    assert!(success_rate(&a.traces).unwrap() < 0.2);
    let c = run_episodes(&mut RandomNavigator::new(), &layouts, &cfg, 90, 9).unwrap();
    assert_ne!(a, c);
}

#[test]
fn random_baseline_draws_actions_uniformly() {
    let mut nav = RandomNavigator::new();
    let (cfg, layouts) = suite();
    nav.begin(&layouts[0], &cfg, layouts[0].targets()[0], 1).unwrap();
    let (_, obs) = Episode::reset(&layouts[0], &cfg, layouts[0].targets()[0], 1).unwrap();
    let pose = AgentPose::new(1, 1, 0, Pitch::Level);
    let mut counts = [0usize; 6];
    let n = 60_000;
    for _ in 0..n {
        counts[nav.act(&obs, &pose).unwrap().index()] += 1;
    }
    for c in counts {
        assert!((c as f64 / n as f64 - 1.0 / 6.0).abs() < 0.01, "{counts:?}");
    }
}

#[test]
fn trained_navigator_is_deterministic_under_seed() {
    let (cfg, layouts) = suite();
    let repr = ReprConfig { d_graph: 12, d_adj: 6, d_model: 12, ..ReprConfig::default() };
    let (model, params) = AgentModel::init(&repr, &PolicyConfig { hidden: 12, ..PolicyConfig::default() }, 2);
    let mut a = TrainedNavigator::new(&model, &params, SelectMode::Greedy);
    let ra = run_episodes(&mut a, &layouts, &cfg, 12, 4).unwrap();
    let mut b = TrainedNavigator::new(&model, &params, SelectMode::Greedy);
    let rb = run_episodes(&mut b, &layouts, &cfg, 12, 4).unwrap();
    assert_eq!(ra, rb);
    for t in &ra.traces {
        assert!(t.l_opt.is_some_and(|l| l >= 1));
        assert_eq!(t.actions.len(), t.length);
    }
}

#[test]
fn unreachable_starts_are_excluded_and_counted() {
    // a full wall splits the room; the target sits on the right
    let mut text = String::from("acrg-layout 1\nid 0\nsize 8 8\ncategories 16\ntargets 1\nobject T 1 mid\ngrid\n");
    for y in 0..8 {
        text += if y == 3 { "....#.T.\n" } else { "....#...\n" };
    }
    let layout = RoomLayout::parse(&text).unwrap();
    let cfg = SimConfig::default();
    let run = run_episodes(&mut ExpertNavigator::new(), std::slice::from_ref(&layout), &cfg, 40, 1).unwrap();
    assert!(run.excluded_unreachable > 0);
    assert!(!run.traces.is_empty());
    assert_eq!(run.traces.len() + run.excluded_unreachable, 40);
    let report = EvalReport::new("expert", 1, "f".into(), run.clone()).unwrap();
    assert_eq!(report.excluded_unreachable, run.excluded_unreachable);
    assert_eq!(report.all.success, 1.0);
}

#[test]
fn report_aggregates_recompute_bit_exactly_after_serialization() {
    let (cfg, layouts) = suite();
    let run = run_episodes(&mut RandomNavigator::new(), &layouts, &cfg, 80, 2).unwrap();
    let report = EvalReport::new("random", 2, "abc".into(), run).unwrap();
    let json = serde_json::to_string(&report).unwrap();
    let back: EvalReport = serde_json::from_str(&json).unwrap();
    let (all, l5) = back.recompute().unwrap();
    assert_eq!(all.success.to_bits(), report.all.success.to_bits());
    assert_eq!(all.spl.to_bits(), report.all.spl.to_bits());
    assert_eq!(l5, report.l5);
    assert_eq!(back, report);
    let sub = report.l5.unwrap();
    assert!(sub.episodes <= report.all.episodes);
    assert_eq!(sub, Metrics::of(&filter_l5(&report.traces)).unwrap());
}

#[test]
fn report_flags_an_empty_l5_subset() {
    let run = EvalRun { traces: vec![trace(true, 2, Some(2))], excluded_unreachable: 0 };
    let report = EvalReport::new("x", 0, String::new(), run).unwrap();
    assert!(report.l5.is_none());
    assert!(report.table().contains('-'));
}

#[test]
fn table_has_one_row_per_policy() {
    let m = Metrics { episodes: 10, success: 0.5, spl: 0.25 };
    let t = format_table(&[("acrg".into(), m, Some(m)), ("ohrg".into(), m, None)]);
    let lines: Vec<_> = t.lines().collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("acrg") && lines[1].contains("0.500") && lines[1].contains("0.250"));
    assert!(lines[0].contains("Success") && lines[0].contains("SPL≥5"));
}
