use std::collections::{BTreeMap, BTreeSet};

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use viewplan_core::action::{execute, Action};
use viewplan_core::datagen::*;
use viewplan_core::planner::plan_actions;
use viewplan_core::render::CameraIntrinsics;
use viewplan_core::scene::{procedural_scene, ProceduralSpec, Scene};

fn small_scene(id: &str, seed: u64) -> Scene {
    let spec = ProceduralSpec {
        points: 40_000,
        ..ProceduralSpec::default()
    };
    procedural_scene(id, seed, &spec).unwrap()
}

fn small_render() -> RenderSetup {
    RenderSetup {
        intrinsics: CameraIntrinsics::new(96, 96, 60.0).unwrap(),
        ..RenderSetup::default()
    }
}

#[test]
fn default_config_validates() {
    PipelineConfig::default().validate().unwrap();
    let mut c = PipelineConfig::default();
    c.op_probs = [0.5, 0.5, 0.5];
    assert!(c.validate().is_err());
    let mut c = PipelineConfig::default();
    c.length_min = 11;
    assert!(c.validate().is_err());
}

#[test]
fn synthetic_pairs_execute_to_their_committed_target() {
    let scene = small_scene("s0", 1);
    let cfg = PipelineConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut ok = 0;
    for i in 0..200 {
        let Ok(pair) = sample_pair(&scene, SourceKind::Synthetic, &format!("p{i}"), &cfg, &mut rng) else {
            continue;
        };
        ok += 1;
        assert!(pair.actions.len() >= cfg.length_min && pair.actions.len() <= cfg.length_max);
        let reached = execute(&pair.init, &pair.actions, &cfg.steps, true);
        assert_eq!(reached, pair.target);
        let again = plan_actions(&pair.init, &pair.target, &cfg.steps, &cfg.plan_limits);
        assert!(again.final_error <= again.error_trace[0]);
        assert!(pair.distance >= 1.0 - 1e-9, "distance {}", pair.distance);
        assert_eq!(pair.difficulty == Difficulty::Long, pair.distance >= 3.0);
    }
    assert!(ok > 100, "only {ok} pairs sampled");
}

#[test]
fn trajectory_pairs_respect_frame_gap() {
    let scene = small_scene("s0", 2);
    let traj = procedural_trajectory(&scene, 600, 3);
    let cfg = PipelineConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut n = 0;
    for i in 0..100 {
        if let Ok(p) = sample_pair(&scene, SourceKind::Trajectory(&traj), &format!("t{i}"), &cfg, &mut rng) {
            let PairSource::Trajectory { f_init, f_tgt } = p.source else { panic!() };
            assert!(f_tgt > f_init && f_tgt < traj.len());
            assert_eq!(p.init, traj[f_init]);
            n += 1;
        }
    }
    assert!(n > 20, "only {n} trajectory pairs");
}

#[test]
fn short_trajectory_reports_skip() {
    let scene = small_scene("s0", 2);
    let traj = procedural_trajectory(&scene, 1, 3);
    let cfg = PipelineConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let err = sample_pair(&scene, SourceKind::Trajectory(&traj), "x", &cfg, &mut rng).unwrap_err();
    assert!(err.iter().all(|r| *r == SkipReason::TooFewFrames));
}

#[test]
fn delta_sampler_stays_inside_trajectory() {
    let cfg = PipelineConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut comp_hits = 0;
    for _ in 0..2000 {
        if let Some(d) = sample_delta(400, &cfg, &mut rng) {
            assert!((1..400).contains(&d));
            if !(50..=300).contains(&d) {
                comp_hits += 1;
            }
        }
    }
    assert!(comp_hits > 0);
    // Only the complement can fit a 20-frame trajectory.
    for _ in 0..200 {
        if let Some(d) = sample_delta(20, &cfg, &mut rng) {
            assert!((1..20).contains(&d));
        }
    }
}

#[test]
fn perturbation_edits_expected_number_of_positions() {
    let cfg = PipelineConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let seq = vec![Action::MoveForward; 7];
    for _ in 0..200 {
        let (out, ops) = perturb_sequence_traced(&seq, &cfg, &mut rng);
        assert_eq!(ops.len(), 3);
        let removes = ops.iter().filter(|o| **o == PerturbOp::Remove).count() as isize;
        let inserts = ops.iter().filter(|o| **o == PerturbOp::Insert).count() as isize;
        assert_eq!(out.len() as isize, 7 - removes + inserts);
    }
}

#[test]
fn perturbation_op_frequencies() {
    let cfg = PipelineConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let seq = vec![Action::TurnLeft; 10];
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    let mut same_cat = 0;
    let mut replaced = 0;
    for _ in 0..3000 {
        let (out, ops) = perturb_sequence_traced(&seq, &cfg, &mut rng);
        for o in &ops {
            *counts.entry(format!("{o:?}").leak()).or_default() += 1;
        }
        if ops.iter().all(|o| *o == PerturbOp::Replace) {
            for a in &out {
                if *a != Action::TurnLeft {
                    replaced += 1;
                    if a.category() == Action::TurnLeft.category() {
                        same_cat += 1;
                    }
                }
            }
        }
    }
    let total: usize = counts.values().sum();
    let frac = |k: &str| counts.get(k).copied().unwrap_or(0) as f64 / total as f64;
    assert!((frac("Replace") - 0.6).abs() < 0.03);
    assert!((frac("Remove") - 0.2).abs() < 0.03);
    assert!((frac("Insert") - 0.2).abs() < 0.03);
    assert!((same_cat as f64 / replaced as f64 - 0.7).abs() < 0.05);
}

#[test]
fn instances_share_shuffled_slot() {
    let scene = small_scene("s0", 1);
    let cfg = PipelineConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let pair = sample_pair(&scene, SourceKind::Synthetic, "p", &cfg, &mut rng).unwrap();
    let distractors = vec![vec![Action::MoveUp], vec![Action::MoveDown], vec![Action::TurnLeft]];
    let names = ImageNames::for_pair("s0", "p", 4);
    let mut correct_counts = [0usize; 4];
    for _ in 0..400 {
        let inst = build_instances(&pair, &distractors, &names, &cfg, 0, &mut rng);
        assert_eq!(inst.len(), 3);
        let TaskPayload::P2v { correct_index: c1, .. } = &inst[0].task else { panic!() };
        let TaskPayload::V2p { correct_index: c2, option_actions, .. } = &inst[1].task else { panic!() };
        assert_eq!(c1, c2);
        assert_eq!(option_actions[*c2], pair.actions);
        correct_counts[*c1] += 1;
        let TaskPayload::Ivp { budget, max_pos_m, max_rot_deg, .. } = &inst[2].task else { panic!() };
        assert_eq!((*budget, *max_pos_m, *max_rot_deg), (10, 0.5, 30.0));
    }
    assert!(correct_counts.iter().all(|&c| c > 60), "{correct_counts:?}");
}

#[test]
fn instance_json_roundtrip() {
    let scene = small_scene("s0", 1);
    let cfg = PipelineConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let pair = sample_pair(&scene, SourceKind::Synthetic, "p", &cfg, &mut rng).unwrap();
    let names = ImageNames::for_pair("s0", "p", 2);
    for inst in build_instances(&pair, &[vec![Action::MoveUp]], &names, &cfg, 0, &mut rng) {
        let s = serde_json::to_string(&inst).unwrap();
        let back: TaskInstance = serde_json::from_str(&s).unwrap();
        assert_eq!(back.kind(), inst.kind());
        match (&back.task, &inst.task) {
            (TaskPayload::Ivp { target_pose: a, .. }, TaskPayload::Ivp { target_pose: b, .. }) => {
                let d = viewplan_core::se3::view_distance(a, b, &cfg.steps);
                assert!(d.d_pos < 1e-9 && d.d_rot < 1e-6);
            }
            (a, b) => assert_eq!(a, b),
        }
    }
}

#[test]
fn printout_format() {
    let p = viewplan_core::Pose::from_euler(
        nalgebra::Vector3::new(1.0, -2.5, 1.234),
        viewplan_core::EulerAngles::new(-90.0, 30.0, 0.0),
    )
    .unwrap();
    assert_eq!(pose_printout(&p), "[tx=1.00, ty=-2.50, tz=1.23, rx=-90°, ry=30°, rz=0°]");
}

fn fake_pairs(n_scenes: usize, per: usize) -> BTreeMap<String, Vec<String>> {
    (0..n_scenes)
        .map(|s| (format!("scene{s:02}"), (0..per).map(|p| format!("scene{s:02}_{p:04}")).collect()))
        .collect()
}

#[test]
fn split_is_scene_disjoint_and_proportional() {
    let pairs = fake_pairs(20, 22);
    let a = split_dataset(&pairs, 42).unwrap();
    let count = |p: Partition| a.scene_partition.values().filter(|v| **v == p).count();
    assert_eq!((count(Partition::Train), count(Partition::Dev), count(Partition::Test)), (16, 2, 2));
    for (pid, (_, part)) in &a.by_pair {
        let scene = &pid[..7];
        assert_eq!(a.scene_partition[scene], *part);
    }
    for scene in pairs.keys() {
        let small = a
            .by_pair
            .iter()
            .filter(|(pid, (s, _))| pid.starts_with(scene.as_str()) && *s == Subset::Small)
            .count();
        assert_eq!(small, 2);
    }
    assert_eq!(a, split_dataset(&pairs, 42).unwrap());
    assert!(matches!(split_dataset(&fake_pairs(9, 3), 0), Err(DatagenError::TooFewScenes(9))));
}

#[test]
fn verdict_filter() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("verdicts.jsonl");
    std::fs::write(
        &path,
        "{\"scene_id\":\"a\",\"verdict\":\"good\"}\n{\"scene_id\":\"b\",\"verdict\":\"bad\"}\n",
    )
    .unwrap();
    let ids: Vec<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
    let f = filter_scenes(&ids, Some(&path)).unwrap();
    assert_eq!(f.accepted, vec!["a"]);
    assert_eq!(f.rejected_bad, vec!["b"]);
    assert_eq!(f.rejected_unknown, vec!["c"]);
    let all = filter_scenes(&ids, Some(&dir.path().join("missing.jsonl"))).unwrap();
    assert!(all.verdicts_missing);
    assert_eq!(all.accepted.len(), 3);
    std::fs::write(&path, "not json\n").unwrap();
    assert!(matches!(filter_scenes(&ids, Some(&path)), Err(DatagenError::Verdict { line: 1, .. })));
}

#[test]
fn generated_dataset_is_deterministic() {
    let scenes: Vec<Scene> = (0..2).map(|i| small_scene(&format!("room{i}"), i)).collect();
    let jobs: Vec<SceneJob> = scenes.iter().map(|s| SceneJob { scene: s, trajectory: None }).collect();
    let cfg = PipelineConfig {
        pairs_per_scene: 3,
        ..PipelineConfig::default()
    };
    let d1 = tempfile::tempdir().unwrap();
    let d2 = tempfile::tempdir().unwrap();
    let r1 = generate_dataset(&jobs, &small_render(), &cfg, 7, d1.path()).unwrap();
    let r2 = generate_dataset(&jobs, &small_render(), &cfg, 7, d2.path()).unwrap();
    assert_eq!(r1.instances, r2.instances);
    assert_eq!(r1.split, "unsplit");
    let m1 = std::fs::read(d1.path().join("manifest.jsonl")).unwrap();
    let m2 = std::fs::read(d2.path().join("manifest.jsonl")).unwrap();
    assert_eq!(m1, m2);
    let insts = read_manifest(&d1.path().join("manifest.jsonl")).unwrap();
    assert_eq!(insts.len(), r1.instances);
    let mut images = BTreeSet::new();
    for i in &insts {
        images.insert(i.init_image.clone());
        images.insert(i.topdown_image.clone());
        assert_eq!(i.partition, Some(Partition::Unsplit));
    }
    for rel in images {
        assert!(d1.path().join(rel).exists());
    }
}

#[test]
fn distractors_are_distinct_views() {
    let scene = small_scene("s0", 1);
    let cfg = PipelineConfig::default();
    let render = small_render();
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut checked = 0;
    for i in 0..30 {
        let Ok(pair) = sample_pair(&scene, SourceKind::Synthetic, &format!("p{i}"), &cfg, &mut rng) else {
            continue;
        };
        let tv = render.render(&scene, &pair.target);
        let Ok(ds) = gen_distractors(&pair, &tv, &scene, &render, &cfg, &mut rng) else {
            continue;
        };
        assert_eq!(ds.len(), 3);
        let mut views = vec![tv];
        views.extend(ds.iter().map(|d| d.view.clone()));
        for a in 0..views.len() {
            for b in a + 1..views.len() {
                let d = viewplan_core::render::pixel_diff(&views[a], &views[b]).unwrap();
                assert!(d > cfg.pixel_threshold);
            }
        }
        for d in &ds {
            assert!(!d.actions.is_empty());
            assert_ne!(d.actions, pair.actions);
        }
        checked += 1;
    }
    assert!(checked > 5);
}

proptest! {
    #[test]
    fn perturb_is_deterministic_under_seed(seed in any::<u64>(), len in 1usize..12) {
        let cfg = PipelineConfig::default();
        let seq: Vec<Action> = (0..len).map(|i| Action::ALL[i % 12]).collect();
        let a = perturb_sequence(&seq, &cfg, &mut ChaCha8Rng::seed_from_u64(seed));
        let b = perturb_sequence(&seq, &cfg, &mut ChaCha8Rng::seed_from_u64(seed));
        prop_assert_eq!(a, b);
    }
}
