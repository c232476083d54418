use std::collections::BTreeMap;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use viewplan_core::action::{execute, Action};
use viewplan_core::distill::*;
use viewplan_core::graph::{self, GraphConfig, GraphError, TrajState, Trajectory, ViewGraph};
use viewplan_core::render::RenderedView;
use viewplan_core::se3::{view_distance, EulerAngles, Pose, StepSizes};
use viewplan_core::seed::rng_for;

fn noise(rng: &mut ChaCha8Rng) -> RenderedView {
    let px = (0..16 * 16).map(|_| [rng.gen(), rng.gen(), rng.gen()]).collect();
    RenderedView::from_pixels(16, 16, px)
}

fn walk_traj(scene: &str, start: Pose, actions: &[Vec<Action>], rng: &mut ChaCha8Rng) -> Trajectory {
    let steps = StepSizes::default();
    let mut p = start;
    let mut states = vec![TrajState { pose: p, view: noise(rng) }];
    for a in actions {
        p = execute(&p, a, &steps, true);
        states.push(TrajState { pose: p, view: noise(rng) });
    }
    Trajectory {
        scene_id: scene.into(),
        states,
        transitions: actions.to_vec(),
    }
}

fn random_graph(scenes: &[&str], per_scene: usize, seed: u64) -> (ViewGraph, Vec<Trajectory>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut g = ViewGraph::new(GraphConfig::default());
    let mut trajs = Vec::new();
    for s in scenes {
        for _ in 0..per_scene {
            let start = Pose::from_euler(
                Vector3::new(rng.gen_range(0.0..3.0), rng.gen_range(0.0..3.0), 1.5),
                EulerAngles::new(-90.0, rng.gen_range(-5..=6) as f64 * 30.0, 0.0),
            )
            .unwrap();
            let acts: Vec<Vec<Action>> = (0..15).map(|_| vec![Action::ALL[rng.gen_range(0..12)]]).collect();
            let t = walk_traj(s, start, &acts, &mut rng);
            g.ingest(&t).unwrap();
            trajs.push(t);
        }
    }
    (g, trajs)
}

#[test]
fn chain_example_distills_to_one_planning_path() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let start = Pose::from_euler(Vector3::new(1.0, 1.0, 1.5), EulerAngles::new(-90.0, 0.0, 0.0)).unwrap();
    let acts = vec![vec![Action::MoveForward], vec![Action::TurnRight], vec![Action::MoveForward]];
    let mut g = ViewGraph::new(GraphConfig::default());
    g.ingest(&walk_traj("c", start, &acts, &mut rng)).unwrap();
    assert_eq!((g.node_count(), g.edge_count()), (4, 3));

    let shard = &g.shards["c"];
    let mut rng = rng_for(0, "chain");
    let paths = sample_paths(shard, [3, 3], 5, false, 200, &mut rng);
    assert!(!paths.is_empty());
    for p in &paths {
        assert_eq!(p.nodes, shard.nodes.iter().map(|n| n.id).collect::<Vec<_>>());
        assert_eq!(p.actions, acts);
    }
    let demos = reformulate_planning(&g, &paths[0], [3, 3], 2, 0, "c/p").unwrap();
    assert_eq!(demos.len(), 2);
    assert_eq!(demos[0].messages, demos[1].messages);
    assert_ne!(demos[0].seed, demos[1].seed);
    assert!(demos.iter().all(|d| d.path_len == 3));
}

#[test]
fn walk_starts_are_roughly_uniform() {
    // A directed cycle: every node has one outgoing edge, so only the start
    // varies between walks.
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let start = Pose::from_euler(Vector3::new(2.0, 2.0, 1.5), EulerAngles::new(-90.0, 0.0, 0.0)).unwrap();
    let acts: Vec<Vec<Action>> = (0..12).map(|_| vec![Action::TurnRight]).collect();
    let mut g = ViewGraph::new(GraphConfig::default());
    g.ingest(&walk_traj("cyc", start, &acts, &mut rng)).unwrap();
    assert_eq!(g.node_count(), 12);
    let shard = &g.shards["cyc"];
    let mut rng = rng_for(3, "walks");
    let paths = sample_paths(shard, [1, 1], 6000, false, 10, &mut rng);
    assert_eq!(paths.len(), 6000);
    let mut hist: BTreeMap<u64, usize> = BTreeMap::new();
    for p in &paths {
        *hist.entry(p.nodes[0]).or_default() += 1;
    }
    assert_eq!(hist.len(), 12);
    for (id, n) in hist {
        assert!((n as f64 - 500.0).abs() < 100.0, "node {id} started {n} walks");
    }
}

#[test]
fn infeasible_lengths_backfill_round_robin() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let start = Pose::from_euler(Vector3::new(1.0, 1.0, 1.5), EulerAngles::new(-90.0, 0.0, 0.0)).unwrap();
    let acts = vec![vec![Action::MoveForward]; 3];
    let mut g = ViewGraph::new(GraphConfig::default());
    g.ingest(&walk_traj("short", start, &acts, &mut rng)).unwrap();
    let mut rng = rng_for(0, "bf");
    let paths = sample_paths(&g.shards["short"], [2, 5], 8, true, 50, &mut rng);
    assert_eq!(paths.len(), 8);
    assert!(paths.iter().all(|p| p.len() <= 3));
    let mut hist: BTreeMap<usize, usize> = BTreeMap::new();
    for p in &paths {
        *hist.entry(p.len()).or_default() += 1;
    }
    assert_eq!(hist, BTreeMap::from([(2, 4), (3, 4)]));
}

#[test]
fn distilled_labels_and_determinism() {
    let (g, _) = random_graph(&["a", "b"], 20, 5);
    let cfg = DistillConfig {
        dynamics: true,
        oversample: 2,
        ..DistillConfig::default()
    };
    let (demos, counts) = distill_graph(&g, &cfg, 11).unwrap();
    let (again, _) = distill_graph(&g, &cfg, 11).unwrap();
    assert_eq!(demos, again);
    let steps = StepSizes::default();
    let mut kinds: BTreeMap<DemoKind, usize> = BTreeMap::new();
    for d in &demos {
        *kinds.entry(d.kind).or_default() += 1;
        let shard = &g.shards[&d.scene_id];
        match &d.answer {
            DemoAnswer::Viewdiff { distance } => {
                let (a, b) = (shard.node(d.node_ids[0]).unwrap(), shard.node(d.node_ids[1]).unwrap());
                assert_eq!(*distance, view_distance(&a.pose, &b.pose, &steps).d_unified);
            }
            DemoAnswer::ViewdiffMcq { options, correct_index } => {
                let (a, b) = (shard.node(d.node_ids[0]).unwrap(), shard.node(d.node_ids[1]).unwrap());
                assert_eq!(options.len(), cfg.mcq_options);
                assert_eq!(options[*correct_index], view_distance(&a.pose, &b.pose, &steps).d_unified);
                let mut sorted = options.clone();
                sorted.sort_by(f64::total_cmp);
                assert!(sorted.windows(2).all(|w| w[1] - w[0] >= cfg.mcq_separation - 1e-12));
            }
            DemoAnswer::InverseDynamics { actions } => {
                let e = shard.edges.iter().find(|e| e.src == d.node_ids[0] && e.dst == d.node_ids[1]).unwrap();
                assert_eq!(&e.actions, actions);
            }
            DemoAnswer::ForwardDynamics { candidates, correct_index } => {
                assert_eq!(candidates[*correct_index], d.node_ids[1]);
            }
            DemoAnswer::Planning { turns, .. } => assert_eq!(turns.len(), d.path_len),
        }
        for m in &d.messages {
            assert_eq!(m.content.matches("<image>").count(), m.images.len(), "{}", d.id);
        }
    }
    assert_eq!(kinds.len(), 5, "{kinds:?}");
    assert_eq!(counts.by_kind.values().sum::<usize>(), demos.len());

    let dir = tempfile::tempdir().unwrap();
    write_demos(&g, &demos, &counts, &cfg, 11, dir.path()).unwrap();
    let text = std::fs::read_to_string(dir.path().join("demos.jsonl")).unwrap();
    assert_eq!(text.lines().count(), demos.len());
    for d in &demos {
        for m in &d.messages {
            for img in &m.images {
                assert!(dir.path().join(img).exists(), "missing {img}");
            }
        }
    }
}

#[test]
fn graph_persist_round_trip_across_iterations() {
    let (mut g, _) = random_graph(&["a"], 5, 6);
    g.set_iteration(1);
    let (g2, trajs) = random_graph(&["b"], 5, 7);
    for t in &trajs {
        g.ingest(t).unwrap();
    }
    assert_eq!(g.shards.len(), 2);
    assert!(g.shards["b"].nodes.iter().all(|n| n.iteration == 1));
    assert_eq!(g.shards["b"].nodes.len(), g2.shards["b"].nodes.len());

    let dir = tempfile::tempdir().unwrap();
    graph::persist(&g, dir.path()).unwrap();
    let back = graph::load(dir.path()).unwrap();
    assert_eq!(back, g);
    assert_eq!(graph::graph_stats(&back), graph::graph_stats(&g));

    let empty = graph::load(&dir.path().join("missing")).unwrap();
    assert_eq!(empty.node_count(), 0);

    let nodes = dir.path().join("nodes.jsonl");
    let mut text = std::fs::read_to_string(&nodes).unwrap();
    text.push_str("{not json\n");
    std::fs::write(&nodes, text).unwrap();
    assert!(matches!(graph::load(dir.path()), Err(GraphError::Corrupt { file: "nodes", .. })));
}
