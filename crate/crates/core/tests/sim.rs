use std::collections::{HashSet, VecDeque};

use acrg_core::sim::*;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn cfg() -> SimConfig {
    SimConfig::default()
}

/// Layout from grid rows plus `(char, category, level)` entries; target is the first entry's category.
fn room(rows: &[&str], objects: &[(char, usize, &str)]) -> RoomLayout {
    let mut text = format!("acrg-layout 1\nid 0\nsize {} {}\ncategories 16\n", rows[0].len(), rows.len());
    text += &format!("targets {}\n", objects[0].1);
    for (c, cat, level) in objects {
        text += &format!("object {c} {cat} {level}\n");
    }
    text += "grid\n";
    for r in rows {
        text += r;
        text += "\n";
    }
    RoomLayout::parse(&text).unwrap()
}

fn corridor() -> RoomLayout {
    // target T at x=9, agent placed at x=1 facing east
    room(
        &[
            "##########",
            "##########",
            "##########",
            "##########",
            ".........T",
            "##########",
            "##########",
            "##########",
        ],
        &[('T', 1, "mid")],
    )
}

fn open_room(target_at: (usize, usize), level: &str) -> RoomLayout {
    let mut rows = vec![vec!['.'; 10]; 10];
    rows[target_at.1][target_at.0] = 'T';
    let rows: Vec<String> = rows.into_iter().map(|r| r.into_iter().collect()).collect();
    let refs: Vec<&str> = rows.iter().map(|s| s.as_str()).collect();
    room(&refs, &[('T', 1, level)])
}

#[test]
fn rotate_left_then_right_restores_pose() {
    let l = open_room((9, 9), "mid");
    let c = cfg();
    let (mut ep, _) = Episode::reset(&l, &c, 1, 3).unwrap();
    let start = ep.pose();
    ep.step(Action::RotateLeft).unwrap();
    assert_ne!(ep.pose(), start);
    ep.step(Action::RotateRight).unwrap();
    assert_eq!(ep.pose(), start);
}

#[test]
fn wall_bump_keeps_pose_and_costs_one_hundredth() {
    let l = corridor();
    let c = cfg();
    let pose = AgentPose::new(1, 4, 6, Pitch::Level); // facing the wall row above
    let (mut ep, _) = Episode::reset_at(&l, &c, 1, pose, 0).unwrap();
    let r = ep.step(Action::MoveAhead).unwrap();
    assert_eq!(ep.pose(), pose);
    assert_eq!(r.reward, Reward(-1));
    assert_eq!(r.reward.value(), -0.01);
    assert!(!r.terminated);
}

#[test]
fn successful_episode_return_is_five_minus_step_costs() {
    let l = corridor();
    let c = cfg();
    let (mut ep, _) = Episode::reset_at(&l, &c, 1, AgentPose::new(1, 4, 0, Pitch::Level), 0).unwrap();
    for a in [Action::MoveAhead, Action::MoveAhead, Action::MoveAhead, Action::MoveAhead] {
        ep.step(a).unwrap();
    }
    let last = ep.step(Action::Done).unwrap();
    assert!(last.success && last.terminated);
    let t = ep.into_trace();
    assert_eq!(t.length, 5);
    assert_eq!(t.total_reward(), Reward(500 - 5));
    assert!((t.total_reward().value() - (5.0 - 0.01 * 5.0)).abs() < 1e-12);
}

#[test]
fn step_after_termination_is_rejected() {
    let l = corridor();
    let c = cfg();
    let (mut ep, _) = Episode::reset_at(&l, &c, 1, AgentPose::new(1, 4, 0, Pitch::Level), 0).unwrap();
    let r = ep.step(Action::Done).unwrap();
    assert!(r.terminated && !r.success);
    assert_eq!(ep.step(Action::MoveAhead).unwrap_err(), SimError::Terminated);
}

#[test]
fn episode_times_out_at_fifty_actions() {
    let l = corridor();
    let c = cfg();
    let (mut ep, _) = Episode::reset_at(&l, &c, 1, AgentPose::new(1, 4, 0, Pitch::Level), 0).unwrap();
    for i in 0..50 {
        let r = ep.step(Action::RotateLeft).unwrap();
        assert_eq!(r.terminated, i == 49);
    }
    let t = ep.into_trace();
    assert!(!t.success);
    assert_eq!(t.total_reward(), Reward(-50));
}

#[test]
fn success_distance_threshold_is_strict() {
    let l = corridor();
    let c = cfg();
    // 3 cells = 0.75 m
    assert!(success_predicate(&l, &c, &AgentPose::new(6, 4, 0, Pitch::Level), 1));
    // 5 cells = 1.25 m
    assert!(success_predicate(&l, &c, &AgentPose::new(4, 4, 0, Pitch::Level), 1));
    // 6 cells = exactly 1.5 m
    assert!(!success_predicate(&l, &c, &AgentPose::new(3, 4, 0, Pitch::Level), 1));
    // 1 cell away but behind
    assert!(!success_predicate(&l, &c, &AgentPose::new(8, 4, 4, Pitch::Level), 1));
}

#[test]
fn height_level_must_match_pitch() {
    for (level, ok) in [("low", Pitch::Down), ("high", Pitch::Up)] {
        let l = open_room((7, 5), level);
        let c = cfg();
        for p in Pitch::ALL {
            let pose = AgentPose::new(4, 5, 0, p);
            assert_eq!(success_predicate(&l, &c, &pose, 1), p == ok, "{level} {p:?}");
        }
    }
    let l = open_room((7, 5), "mid");
    for p in Pitch::ALL {
        assert!(success_predicate(&l, &cfg(), &AgentPose::new(4, 5, 0, p), 1));
    }
}

#[test]
fn horizontal_center_follows_bearing() {
    let c = cfg();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let l = open_room((7, 5), "mid");
    let d = render_detections(&l, &c, &AgentPose::new(2, 5, 0, Pitch::Level), &mut rng);
    assert!(d[1].visible);
    assert_eq!(d[1].h_center, 0.5);
    assert_eq!(d[1].bbox[0] + d[1].bbox[2], 1.0);
    assert!((d[1].confidence - (1.0 - 1.25 / 5.0)).abs() < 1e-12);
    assert!(d.iter().enumerate().all(|(i, x)| i == 1 || (!x.visible && x.confidence == 0.0 && x.bbox == [0.0; 4])));

    // bearing −45°: three cells ahead and three to the left while facing east
    let l = open_room((5, 2), "mid");
    let d = render_detections(&l, &c, &AgentPose::new(2, 5, 0, Pitch::Level), &mut rng);
    assert!(d[1].visible);
    assert!(d[1].h_center.abs() < 1e-12);
    assert_eq!(d[1].bbox[0], 0.0);
    // bearing +45°
    let l = open_room((5, 8), "mid");
    let d = render_detections(&l, &c, &AgentPose::new(2, 5, 0, Pitch::Level), &mut rng);
    assert!((d[1].h_center - 1.0).abs() < 1e-12);
    // just outside the field of view
    let l = open_room((4, 1), "mid");
    let d = render_detections(&l, &c, &AgentPose::new(2, 5, 0, Pitch::Level), &mut rng);
    assert!(!d[1].visible);
}

#[test]
fn detections_keep_the_best_instance() {
    let l = room(
        &[
            "..........",
            "..........",
            "..........",
            "..........",
            "....A...B.",
            "..........",
            "..........",
            "..........",
        ],
        &[('A', 1, "mid"), ('B', 1, "mid")],
    );
    let d = render_detections(&l, &cfg(), &AgentPose::new(1, 4, 0, Pitch::Level), &mut ChaCha8Rng::seed_from_u64(0));
    assert!((d[1].distance - 0.75).abs() < 1e-12);
}

#[test]
fn confidence_noise_is_seeded() {
    let l = open_room((7, 5), "mid");
    let c = SimConfig { conf_noise: 0.05, ..cfg() };
    let pose = AgentPose::new(2, 5, 0, Pitch::Level);
    let a = render_detections(&l, &c, &pose, &mut ChaCha8Rng::seed_from_u64(9));
    let b = render_detections(&l, &c, &pose, &mut ChaCha8Rng::seed_from_u64(9));
    assert_eq!(a, b);
    assert_ne!(a[1].confidence, 1.0 - 1.25 / 5.0);
    assert!((0.0..=1.0).contains(&a[1].confidence));
}

/// Walks the segment between cell centres in tiny steps and reports whether any
/// sample falls strictly inside a blocked cell other than the endpoints.
fn marched_los(map: &[&str], from: (i32, i32), to: (i32, i32)) -> bool {
    let n = 100_000;
    let (x0, y0) = (from.0 as f64 + 0.5, from.1 as f64 + 0.5);
    let (x1, y1) = (to.0 as f64 + 0.5, to.1 as f64 + 0.5);
    for i in 0..=n {
        let t = i as f64 / n as f64;
        let (x, y) = (x0 + t * (x1 - x0), y0 + t * (y1 - y0));
        let (cx, cy) = (x.floor() as i32, y.floor() as i32);
        let inside = x - cx as f64 > 1e-6
            && x - (cx as f64) < 1.0 - 1e-6
            && y - cy as f64 > 1e-6
            && y - (cy as f64) < 1.0 - 1e-6;
        if !inside || (cx, cy) == from || (cx, cy) == to {
            continue;
        }
        if map[cy as usize].as_bytes()[cx as usize] != b'.' {
            return false;
        }
    }
    true
}

#[test]
fn occlusion_matches_marched_rays_on_small_map() {
    let map = [".....", "..#..", ".#...", "...#.", "....."];
    let blocked = |x: i32, y: i32| map[y as usize].as_bytes()[x as usize] != b'.';
    let mut checked = 0;
    for fy in 0..5 {
        for fx in 0..5 {
            for ty in 0..5 {
                for tx in 0..5 {
                    if blocked(fx, fy) || (fx, fy) == (tx, ty) {
                        continue;
                    }
                    let got = line_of_sight(blocked, (fx, fy), (tx, ty));
                    assert_eq!(got, marched_los(&map, (fx, fy), (tx, ty)), "{:?} -> {:?}", (fx, fy), (tx, ty));
                    checked += 1;
                }
            }
        }
    }
    assert!(checked > 400);
    // a wall directly on the sight line hides the object
    assert!(!line_of_sight(blocked, (2, 4), (2, 0)));
    assert!(line_of_sight(blocked, (0, 4), (0, 0)));
}

#[test]
fn walls_and_objects_occlude_in_the_simulator() {
    let l = room(
        &[".....####", "..T..####", ".....####", "..#..####", ".....####", ".....####", "..B..####", ".....####"],
        &[('T', 1, "mid"), ('B', 2, "mid")],
    );
    let c = cfg();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    // facing north (heading 6) from (2,4): wall at (2,3) blocks the view of T
    let d = render_detections(&l, &c, &AgentPose::new(2, 4, 6, Pitch::Level), &mut rng);
    assert!(!d[1].visible);
    let d = render_detections(&l, &c, &AgentPose::new(1, 4, 6, Pitch::Level), &mut rng);
    assert!(d[1].visible);
    // the object B at (2,6) hides nothing behind it but is itself visible from (2,4) facing south
    let d = render_detections(&l, &c, &AgentPose::new(2, 4, 2, Pitch::Level), &mut rng);
    assert!(d[2].visible);
}

#[test]
fn depth_to_wall_and_range_clamp() {
    let c = cfg();
    let l = open_room((0, 0), "mid");
    // eight cells to the boundary beyond x = 9
    let depth = render_depth(&l, &c, &AgentPose::new(2, 5, 0, Pitch::Level));
    let mid = c.depth_res / 2;
    assert_eq!(depth.get(0, mid - 1), 2.0);
    assert_eq!(depth.get(c.depth_res - 1, mid), 2.0);
    assert!(depth.values.iter().all(|&v| v > 0.0 && v <= c.max_range));

    let row = ".".repeat(30);
    let first = format!("T{}", ".".repeat(29));
    let mut rows: Vec<&str> = vec![&row; 8];
    rows[0] = &first;
    let l = room(&rows, &[('T', 1, "mid")]);
    let depth = render_depth(&l, &c, &AgentPose::new(1, 4, 0, Pitch::Level));
    assert_eq!(depth.get(3, mid), 5.0);
    assert_eq!(depth.get(3, mid - 1), 5.0);
}

#[test]
fn depth_inside_target_box_matches_distance() {
    let c = cfg();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut seen = 0;
    for (tx, ty) in [(5, 5), (8, 2), (1, 7)] {
        let l = open_room((tx, ty), "mid");
        for pose in all_states(&l) {
            let d = render_detections(&l, &c, &pose, &mut rng)[1];
            if !d.visible {
                continue;
            }
            seen += 1;
            let depth = render_depth(&l, &c, &pose);
            let r = depth.res as f64;
            for col in 0..depth.res {
                let (lo, hi) = (col as f64 / r, (col + 1) as f64 / r);
                if lo < d.bbox[2] && hi > d.bbox[0] {
                    let v = depth.get(0, col);
                    assert!((v - d.distance).abs() <= 0.25, "pose {pose:?} col {col}: {v} vs {}", d.distance);
                }
            }
            assert!((depth.bbox_mean(d.bbox) - d.distance).abs() <= 0.25);
        }
    }
    assert!(seen > 500);
}

#[test]
fn ego_grid_is_agent_centred_and_rotated() {
    let l = open_room((5, 3), "mid");
    let c = cfg();
    let k = c.ego_k;
    let ch = 16;
    // facing east from (3,3): target two cells ahead → row k/2 - 2, centre column
    let g = render_ego_grid(&l, &c, &AgentPose::new(3, 3, 0, Pitch::Level));
    assert_eq!(g.get(k / 2 - 2, k / 2, 1), 1.0);
    // facing north: the target is two cells to the right
    let g = render_ego_grid(&l, &c, &AgentPose::new(3, 3, 6, Pitch::Level));
    assert_eq!(g.get(k / 2, k / 2 + 2, 1), 1.0);
    // out-of-bounds cells fill the wall channel
    let g = render_ego_grid(&l, &c, &AgentPose::new(0, 0, 0, Pitch::Level));
    assert_eq!(g.get(k / 2, 0, ch), 1.0);
    assert!(g.data.iter().all(|&v| v == 0.0 || v == 1.0));
    assert_eq!(g.data.len(), k * k * (ch + 1));
}

#[test]
fn corridor_optimal_count_is_four() {
    let l = corridor();
    let c = cfg();
    let start = AgentPose::new(1, 4, 0, Pitch::Level);
    assert_eq!(optimal_action_count(&l, &c, &start, 1).unwrap(), 4);
    let field = DistanceField::new(&l, &c, 1).unwrap();
    assert_eq!(field.expert_action(&l, &start), Some(Action::MoveAhead));
    assert_eq!(
        field.plan(&l, &start).unwrap(),
        vec![Action::MoveAhead, Action::MoveAhead, Action::MoveAhead, Action::Done]
    );
}

#[test]
fn already_successful_state_needs_only_done() {
    let l = corridor();
    let c = cfg();
    let pose = AgentPose::new(6, 4, 0, Pitch::Up);
    assert_eq!(optimal_action_count(&l, &c, &pose, 1).unwrap(), 1);
    let field = DistanceField::new(&l, &c, 1).unwrap();
    assert_eq!(field.expert_action(&l, &pose), Some(Action::Done));
}

#[test]
fn enclosed_target_is_unreachable() {
    let l = room(
        &["........", "........", "........", "........", "....###.", "....#T#.", "....###.", "........"],
        &[('T', 1, "mid")],
    );
    let c = cfg();
    let err = optimal_action_count(&l, &c, &AgentPose::new(0, 0, 0, Pitch::Level), 1).unwrap_err();
    assert_eq!(err, SimError::Unreachable(1));
}

/// Forward breadth-first enumeration with the simulator's transition and success rules.
fn bfs_optimal(l: &RoomLayout, c: &SimConfig, start: AgentPose, target: usize) -> Option<usize> {
    let mut seen = HashSet::from([start]);
    let mut queue = VecDeque::from([(start, 0usize)]);
    while let Some((pose, d)) = queue.pop_front() {
        if success_predicate(l, c, &pose, target) {
            return Some(d + 1);
        }
        for a in Action::ALL {
            if a == Action::Done {
                continue;
            }
            let next = l.apply(pose, a);
            if seen.insert(next) {
                queue.push_back((next, d + 1));
            }
        }
    }
    None
}

#[test]
fn search_matches_bfs_and_replay_on_random_layouts() {
    let c = cfg();
    let gen = GeneratorConfig::default();
    let layouts = generate_suite(&gen, &c, 50, 100, 2024);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for l in &layouts {
        for &t in l.targets() {
            let field = DistanceField::new(l, &c, t).unwrap();
            for _ in 0..2 {
                let seed = rand::Rng::gen::<u64>(&mut rng);
                let (mut ep, _) = Episode::reset(l, &c, t, seed).unwrap();
                let start = ep.pose();
                let l_opt = field.distance(&start).unwrap();
                assert_eq!(Some(l_opt), bfs_optimal(l, &c, start, t), "layout {} target {t}", l.id);
                for a in field.plan(l, &start).unwrap() {
                    ep.step(a).unwrap();
                }
                let trace = ep.into_trace();
                assert!(trace.success);
                assert_eq!(trace.length, l_opt);
            }
        }
    }
}

#[test]
fn every_expert_action_is_optimal() {
    let c = cfg();
    let l = &generate_suite(&GeneratorConfig::default(), &c, 1, 0, 77)[0];
    for &t in l.targets() {
        let field = DistanceField::new(l, &c, t).unwrap();
        for pose in all_states(l) {
            let a = field.expert_action(l, &pose).unwrap();
            assert!(field.optimal_actions(l, &pose).contains(&a));
        }
    }
}

#[test]
fn reset_is_deterministic_valid_and_spread() {
    let l = open_room((9, 9), "mid");
    let c = cfg();
    let a = Episode::reset(&l, &c, 1, 42).unwrap().0.pose();
    let b = Episode::reset(&l, &c, 1, 42).unwrap().0.pose();
    assert_eq!(a, b);
    let mut distinct = HashSet::new();
    for seed in 0..2000 {
        let p = Episode::reset(&l, &c, 1, seed).unwrap().0.pose();
        assert!(l.is_valid_pose(&p));
        assert!(!success_predicate(&l, &c, &p, 1));
        distinct.insert(p);
    }
    let valid = start_states(&l, &c, 1).len();
    assert!(valid > 2000);
    assert!(distinct.len() >= 50, "{} distinct of {valid}", distinct.len());
}

#[test]
fn reset_rejects_missing_target() {
    let l = open_room((9, 9), "mid");
    assert_eq!(Episode::reset(&l, &cfg(), 2, 0).unwrap_err(), SimError::MissingTarget(2));
}

#[test]
fn trajectory_log_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("steps.jsonl");
    let l = corridor();
    let c = cfg();
    let (mut ep, _) = Episode::reset_at(&l, &c, 1, AgentPose::new(1, 4, 0, Pitch::Level), 0).unwrap();
    let mut records = Vec::new();
    {
        let mut log = TrajectoryLog::open(&path).unwrap();
        for (i, a) in [Action::MoveAhead, Action::RotateLeft, Action::Done].into_iter().enumerate() {
            let r = ep.step(a).unwrap();
            let rec = StepRecord {
                layout_id: l.id,
                target: 1,
                episode: 0,
                step: i,
                pose: ep.pose(),
                action: a,
                reward: r.reward,
                terminated: r.terminated,
                success: r.success,
            };
            log.append(&rec).unwrap();
            records.push(rec);
        }
    }
    assert_eq!(TrajectoryLog::read(&path).unwrap(), records);
    // appending keeps earlier records
    TrajectoryLog::open(&path).unwrap().append(&records[0]).unwrap();
    assert_eq!(TrajectoryLog::read(&path).unwrap().len(), 4);
}

#[test]
fn generated_layouts_roundtrip_through_text() {
    let c = cfg();
    for l in generate_suite(&GeneratorConfig::default(), &c, 5, 0, 1) {
        let back = RoomLayout::parse(&l.to_text()).unwrap();
        assert_eq!(back, l);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn random_action_sequences_keep_invariants(seed in 0u64..1000, actions in prop::collection::vec(0usize..6, 1..70)) {
        let c = cfg();
        let l = &generate_suite(&GeneratorConfig::default(), &c, 1, 0, seed % 8)[0];
        let t = l.targets()[(seed % 4) as usize];
        let (mut ep, _) = Episode::reset(l, &c, t, seed).unwrap();
        let (mut ep2, _) = Episode::reset(l, &c, t, seed).unwrap();
        for &i in &actions {
            if ep.is_terminated() {
                break;
            }
            let a = Action::from_index(i).unwrap();
            let r1 = ep.step(a).unwrap();
            let r2 = ep2.step(a).unwrap();
            prop_assert_eq!(r1.reward, r2.reward);
            prop_assert_eq!(r1.observation, r2.observation);
            prop_assert!(l.is_valid_pose(&ep.pose()));
        }
        let tr = ep.into_trace();
        prop_assert!(tr.length <= 50);
        let s = tr.success as i32;
        prop_assert_eq!(tr.total_reward(), Reward(500 * s - tr.length as i32));
        if tr.success {
            prop_assert_eq!(*tr.actions.last().unwrap(), Action::Done);
        }
    }

    #[test]
    fn visibility_is_monotone_along_a_bearing(dx in -3i32..=3, dy in -3i32..=3, k in 2i32..=4, heading in 0u8..8) {
        prop_assume!((dx, dy) != (0, 0));
        let c = cfg();
        let (ax, ay) = (12, 12);
        let far = (ax + k * dx, ay + k * dy);
        let make = |p: (i32, i32)| {
            let mut rows = vec![vec!['.'; 25]; 25];
            rows[p.1 as usize][p.0 as usize] = 'T';
            let rows: Vec<String> = rows.into_iter().map(|r| r.into_iter().collect()).collect();
            let refs: Vec<&str> = rows.iter().map(|s| s.as_str()).collect();
            room(&refs, &[('T', 1, "mid")])
        };
        let pose = AgentPose::new(ax, ay, heading, Pitch::Level);
        let far_visible = sight(&make(far), &c, &pose, 0).visible;
        if far_visible {
            for j in 1..k {
                let near = (ax + j * dx, ay + j * dy);
                prop_assert!(sight(&make(near), &c, &pose, 0).visible);
            }
        }
    }
}
