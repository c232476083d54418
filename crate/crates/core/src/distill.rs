//! Turns view-graph paths into supervised demonstrations: multi-turn
//! planning, view-distance regression, view-distance multiple choice and
//! (optionally) forward/inverse dynamics.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::{self, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::action::{execute, Action};
use crate::datagen::pose_printout;
use crate::episode::{format_actions, format_answer};
use crate::graph::{SceneShard, ViewGraph, ViewNode, FORMAT_VERSION};
use crate::se3::{view_distance, StepSizes};
use crate::seed::{derive_seed, rng_for};

#[derive(Debug, Error)]
pub enum DistillError {
    #[error("path length {len} outside [{lo}, {hi}]")]
    Length { len: usize, lo: usize, hi: usize },
    #[error("planning path does not replay onto its end node")]
    ReplayDrift,
    #[error("not enough separated distances for a multiple-choice item")]
    InsufficientDistractors,
    #[error("forward dynamics needs at least two candidate views")]
    TooFewCandidates,
    #[error("unknown node {0}")]
    UnknownNode(u64),
    #[error("invalid distill config: {0}")]
    Config(String),
    #[error("io: {0}")]
    Io(#[from] io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DistillConfig {
    pub planning_len: [usize; 2],
    pub planning_per_scene: usize,
    pub planning_balanced: bool,
    pub oversample: usize,
    pub viewdiff_len: [usize; 2],
    pub viewdiff_per_scene: usize,
    pub mcq_len: [usize; 2],
    pub mcq_per_scene: usize,
    pub diff_balanced: bool,
    pub mcq_options: usize,
    pub mcq_separation: f64,
    pub dynamics: bool,
    pub dynamics_per_scene: usize,
    pub walk_attempts: usize,
    /// Random node pairs considered as MCQ distractors per scene.
    pub max_distractor_pairs: usize,
}

impl Default for DistillConfig {
    fn default() -> Self {
        Self {
            planning_len: [3, 5],
            planning_per_scene: 20,
            planning_balanced: false,
            oversample: 10,
            viewdiff_len: [2, 5],
            viewdiff_per_scene: 15,
            mcq_len: [2, 5],
            mcq_per_scene: 15,
            diff_balanced: true,
            mcq_options: 4,
            mcq_separation: 0.5,
            dynamics: false,
            dynamics_per_scene: 15,
            walk_attempts: 100,
            max_distractor_pairs: 20_000,
        }
    }
}

impl DistillConfig {
    pub fn validate(&self) -> Result<(), DistillError> {
        for (name, r) in [
            ("planning_len", self.planning_len),
            ("viewdiff_len", self.viewdiff_len),
            ("mcq_len", self.mcq_len),
        ] {
            if r[0] < 1 || r[0] > r[1] {
                return Err(DistillError::Config(format!("{name} must satisfy 1 <= lo <= hi")));
            }
        }
        if self.mcq_options < 2 {
            return Err(DistillError::Config("mcq_options must be at least 2".into()));
        }
        Ok(())
    }
}

/// `nodes[i] --actions[i]--> nodes[i + 1]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphPath {
    pub scene_id: String,
    pub nodes: Vec<u64>,
    pub actions: Vec<Vec<Action>>,
}

impl GraphPath {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }
}

fn walk(
    shard: &SceneShard,
    adj: &BTreeMap<u64, Vec<&crate::graph::ViewEdge>>,
    len: usize,
    rng: &mut ChaCha8Rng,
) -> Option<GraphPath> {
    let start = shard.nodes.choose(rng)?.id;
    let mut nodes = vec![start];
    let mut seen = BTreeSet::from([start]);
    let mut actions = Vec::with_capacity(len);
    while actions.len() < len {
        let cur = *nodes.last().expect("non-empty");
        let options: Vec<_> = adj
            .get(&cur)
            .map(|es| es.iter().filter(|e| !seen.contains(&e.dst)).collect())
            .unwrap_or_default();
        let e = options.choose(rng)?;
        seen.insert(e.dst);
        nodes.push(e.dst);
        actions.push(e.actions.clone());
    }
    Some(GraphPath {
        scene_id: shard.scene_id.clone(),
        nodes,
        actions,
    })
}

/// Random walks without node repetition. In balanced mode the count is split
/// evenly over lengths; lengths with no path found are backfilled from the
/// others in round-robin order.
pub fn sample_paths(
    shard: &SceneShard,
    len_range: [usize; 2],
    count: usize,
    balanced: bool,
    attempts: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<GraphPath> {
    let adj = shard.adjacency();
    let lengths: Vec<usize> = (len_range[0]..=len_range[1]).collect();
    let try_len = |len: usize, rng: &mut ChaCha8Rng| (0..attempts).find_map(|_| walk(shard, &adj, len, rng));
    let mut out = Vec::with_capacity(count);
    if !balanced {
        for _ in 0..count {
            let len = *lengths.choose(rng).expect("non-empty range");
            if let Some(p) = try_len(len, rng) {
                out.push(p);
            }
        }
    } else {
        let k = lengths.len();
        let mut quota: Vec<usize> = (0..k).map(|i| count / k + usize::from(i < count % k)).collect();
        let mut feasible = vec![true; k];
        let mut shortfall = 0;
        for i in 0..k {
            for _ in 0..quota[i] {
                match try_len(lengths[i], rng) {
                    Some(p) => out.push(p),
                    None => {
                        feasible[i] = false;
                        break;
                    }
                }
            }
            if !feasible[i] {
                let got = out.iter().filter(|p| p.len() == lengths[i]).count();
                shortfall += quota[i] - got;
                quota[i] = got;
            }
        }
        let mut cursor = 0;
        while shortfall > 0 && feasible.iter().any(|f| *f) {
            let i = cursor % k;
            cursor += 1;
            if !feasible[i] {
                continue;
            }
            match try_len(lengths[i], rng) {
                Some(p) => {
                    out.push(p);
                    shortfall -= 1;
                }
                None => feasible[i] = false,
            }
        }
    }
    if out.len() < count {
        log::info!("scene {}: sampled {} of {count} paths", shard.scene_id, out.len());
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DemoKind {
    Planning,
    Viewdiff,
    ViewdiffMcq,
    InverseDynamics,
    ForwardDynamics,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: String,
    /// Image paths referenced by `<image>` placeholders, in order.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub images: Vec<String>,
}

fn msg(role: Role, content: impl Into<String>, images: Vec<String>) -> Message {
    Message {
        role,
        content: content.into(),
        images,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum DemoAnswer {
    Planning { turns: Vec<Vec<Action>>, target_pose: [f64; 6] },
    Viewdiff { distance: f64 },
    ViewdiffMcq { options: Vec<f64>, correct_index: usize },
    InverseDynamics { actions: Vec<Action> },
    ForwardDynamics { candidates: Vec<u64>, correct_index: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Demonstration {
    pub id: String,
    pub kind: DemoKind,
    pub scene_id: String,
    pub seed: u64,
    /// Graph path length the demo was drawn from (1 for single edges).
    pub path_len: usize,
    pub node_ids: Vec<u64>,
    pub messages: Vec<Message>,
    pub answer: DemoAnswer,
}

pub fn image_path(node: &ViewNode) -> String {
    format!("images/{}.png", node.image)
}

fn lookup(shard: &SceneShard, id: u64) -> Result<&ViewNode, DistillError> {
    shard.node(id).ok_or(DistillError::UnknownNode(id))
}

const PLANNING_SYSTEM: &str = "You control a camera in a 3D scene. Each turn, reply with \
<action>a|b|...</action> using the discrete camera actions, or submit \
<action>answer(tx, ty, tz, rx, ry, rz)</action> when the current view matches the target.";

/// One planning demo per oversample copy. Copies share supervision and
/// differ only in `seed`.
pub fn reformulate_planning(
    graph: &ViewGraph,
    path: &GraphPath,
    len_range: [usize; 2],
    oversample: usize,
    base_seed: u64,
    id_prefix: &str,
) -> Result<Vec<Demonstration>, DistillError> {
    let len = path.len();
    if len < len_range[0] || len > len_range[1] {
        return Err(DistillError::Length {
            len,
            lo: len_range[0],
            hi: len_range[1],
        });
    }
    let shard = &graph.shards[&path.scene_id];
    let nodes: Vec<&ViewNode> = path
        .nodes
        .iter()
        .map(|id| lookup(shard, *id))
        .collect::<Result<_, _>>()?;
    let (first, last) = (nodes[0], *nodes.last().expect("K >= 1"));
    let all: Vec<Action> = path.actions.iter().flatten().copied().collect();
    let reached = execute(&first.pose, &all, &graph.config.steps, graph.config.snap);
    if !graph.config.mergeable(&reached, &last.pose) {
        return Err(DistillError::ReplayDrift);
    }
    let mut messages = vec![
        msg(Role::System, PLANNING_SYSTEM, vec![]),
        msg(
            Role::User,
            format!(
                "Initial view: <image>\nTarget view: <image>\nCurrent pose: {}",
                pose_printout(&first.pose)
            ),
            vec![image_path(first), image_path(last)],
        ),
    ];
    for (acts, node) in path.actions.iter().zip(&nodes[1..]) {
        messages.push(msg(Role::Assistant, format_actions(acts), vec![]));
        messages.push(msg(
            Role::User,
            format!("Current view: <image>\nCurrent pose: {}", pose_printout(&node.pose)),
            vec![image_path(node)],
        ));
    }
    messages.push(msg(Role::Assistant, format_answer(&last.pose), vec![]));
    let answer = DemoAnswer::Planning {
        turns: path.actions.clone(),
        target_pose: last.pose.to_vec6(),
    };
    Ok((0..oversample.max(1))
        .map(|k| Demonstration {
            id: format!("{id_prefix}-o{k}"),
            kind: DemoKind::Planning,
            scene_id: path.scene_id.clone(),
            seed: derive_seed(base_seed, &format!("{id_prefix}/{k}")),
            path_len: len,
            node_ids: path.nodes.clone(),
            messages: messages.clone(),
            answer: answer.clone(),
        })
        .collect())
}

pub fn reformulate_viewdiff(
    graph: &ViewGraph,
    scene_id: &str,
    a: u64,
    b: u64,
    seed: u64,
    id: String,
) -> Result<Demonstration, DistillError> {
    let shard = &graph.shards[scene_id];
    let (na, nb) = (lookup(shard, a)?, lookup(shard, b)?);
    let d = view_distance(&na.pose, &nb.pose, &graph.config.steps).d_unified;
    Ok(Demonstration {
        id,
        kind: DemoKind::Viewdiff,
        scene_id: scene_id.to_string(),
        seed,
        path_len: 1,
        node_ids: vec![a, b],
        messages: vec![
            msg(
                Role::User,
                "View A: <image>\nView B: <image>\nEstimate the unified view distance between A and B.",
                vec![image_path(na), image_path(nb)],
            ),
            msg(Role::Assistant, format!("{d:.2}"), vec![]),
        ],
        answer: DemoAnswer::Viewdiff { distance: d },
    })
}

/// Picks `n - 1` distractors, each at least `sep` from the correct value and
/// from each other.
pub fn pick_distractors(correct: f64, pool: &[f64], n: usize, sep: f64, rng: &mut impl Rng) -> Option<Vec<f64>> {
    let mut cand: Vec<f64> = pool.to_vec();
    cand.shuffle(rng);
    let mut chosen = vec![correct];
    for c in cand {
        if chosen.len() == n {
            break;
        }
        if chosen.iter().all(|x| (x - c).abs() >= sep) {
            chosen.push(c);
        }
    }
    (chosen.len() == n).then(|| chosen.split_off(1))
}

fn pair_distances(graph: &ViewGraph, shard: &SceneShard, cap: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let n = shard.nodes.len();
    let steps: &StepSizes = &graph.config.steps;
    let d = |i: usize, j: usize| view_distance(&shard.nodes[i].pose, &shard.nodes[j].pose, steps).d_unified;
    if n * n.saturating_sub(1) / 2 <= cap {
        (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).map(|(i, j)| d(i, j)).collect()
    } else {
        (0..cap)
            .filter_map(|_| {
                let i = rng.gen_range(0..n);
                let j = rng.gen_range(0..n);
                (i != j).then(|| d(i, j))
            })
            .collect()
    }
}

#[allow(clippy::too_many_arguments)]
pub fn reformulate_mcq(
    graph: &ViewGraph,
    scene_id: &str,
    a: u64,
    b: u64,
    pool: &[f64],
    cfg: &DistillConfig,
    seed: u64,
    id: String,
) -> Result<Demonstration, DistillError> {
    let mut rng = rng_for(seed, "mcq");
    let shard = &graph.shards[scene_id];
    let (na, nb) = (lookup(shard, a)?, lookup(shard, b)?);
    let correct = view_distance(&na.pose, &nb.pose, &graph.config.steps).d_unified;
    let distractors = pick_distractors(correct, pool, cfg.mcq_options, cfg.mcq_separation, &mut rng)
        .ok_or(DistillError::InsufficientDistractors)?;
    let mut options = vec![correct];
    options.extend(distractors);
    let mut order: Vec<usize> = (0..options.len()).collect();
    order.shuffle(&mut rng);
    let options: Vec<f64> = order.iter().map(|&i| options[i]).collect();
    let correct_index = order.iter().position(|&i| i == 0).expect("present");
    let letters: Vec<String> = options
        .iter()
        .enumerate()
        .map(|(i, d)| format!("({}) {d:.2}", (b'A' + i as u8) as char))
        .collect();
    Ok(Demonstration {
        id,
        kind: DemoKind::ViewdiffMcq,
        scene_id: scene_id.to_string(),
        seed,
        path_len: 1,
        node_ids: vec![a, b],
        messages: vec![
            msg(
                Role::User,
                format!(
                    "View A: <image>\nView B: <image>\nWhich is the unified view distance between A and B? {}",
                    letters.join(" ")
                ),
                vec![image_path(na), image_path(nb)],
            ),
            msg(Role::Assistant, format!("({})", (b'A' + correct_index as u8) as char), vec![]),
        ],
        answer: DemoAnswer::ViewdiffMcq { options, correct_index },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DynamicsDirection {
    Inverse,
    Forward,
}

pub fn reformulate_dynamics(
    graph: &ViewGraph,
    scene_id: &str,
    edge: &crate::graph::ViewEdge,
    direction: DynamicsDirection,
    n_candidates: usize,
    seed: u64,
    id: String,
) -> Result<Demonstration, DistillError> {
    let shard = &graph.shards[scene_id];
    let (src, dst) = (lookup(shard, edge.src)?, lookup(shard, edge.dst)?);
    let mut rng = rng_for(seed, "dynamics");
    match direction {
        DynamicsDirection::Inverse => Ok(Demonstration {
            id,
            kind: DemoKind::InverseDynamics,
            scene_id: scene_id.to_string(),
            seed,
            path_len: 1,
            node_ids: vec![edge.src, edge.dst],
            messages: vec![
                msg(
                    Role::User,
                    "Before: <image>\nAfter: <image>\nWhich actions moved the camera?",
                    vec![image_path(src), image_path(dst)],
                ),
                msg(Role::Assistant, format_actions(&edge.actions), vec![]),
            ],
            answer: DemoAnswer::InverseDynamics {
                actions: edge.actions.clone(),
            },
        }),
        DynamicsDirection::Forward => {
            let mut others: Vec<u64> = shard
                .nodes
                .iter()
                .map(|n| n.id)
                .filter(|&i| i != edge.dst && i != edge.src)
                .collect();
            others.shuffle(&mut rng);
            others.truncate(n_candidates.saturating_sub(1));
            if others.is_empty() {
                return Err(DistillError::TooFewCandidates);
            }
            let mut cands = vec![edge.dst];
            cands.extend(others);
            cands.shuffle(&mut rng);
            let correct_index = cands.iter().position(|&c| c == edge.dst).expect("present");
            let images: Vec<String> = std::iter::once(image_path(src))
                .chain(cands.iter().map(|c| image_path(shard.node(*c).expect("sampled from shard"))))
                .collect();
            let slots: Vec<String> = (0..cands.len())
                .map(|i| format!("({}) <image>", (b'A' + i as u8) as char))
                .collect();
            Ok(Demonstration {
                id,
                kind: DemoKind::ForwardDynamics,
                scene_id: scene_id.to_string(),
                seed,
                path_len: 1,
                node_ids: vec![edge.src, edge.dst],
                messages: vec![
                    msg(
                        Role::User,
                        format!(
                            "Current view: <image>\nActions: {}\nWhich view results? {}",
                            format_actions(&edge.actions),
                            slots.join(" ")
                        ),
                        images,
                    ),
                    msg(Role::Assistant, format!("({})", (b'A' + correct_index as u8) as char), vec![]),
                ],
                answer: DemoAnswer::ForwardDynamics {
                    candidates: cands,
                    correct_index,
                },
            })
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DistillCounts {
    pub by_kind: BTreeMap<DemoKind, usize>,
    pub skipped: BTreeMap<String, usize>,
}

fn distill_scene(graph: &ViewGraph, shard: &SceneShard, cfg: &DistillConfig, seed: u64) -> (Vec<Demonstration>, DistillCounts) {
    let sid = &shard.scene_id;
    let mut demos = Vec::new();
    let mut counts = DistillCounts::default();
    let skip = |counts: &mut DistillCounts, e: &DistillError| {
        *counts.skipped.entry(e.to_string()).or_default() += 1;
    };

    let mut rng = rng_for(seed, &format!("distill/{sid}/planning"));
    let paths = sample_paths(shard, cfg.planning_len, cfg.planning_per_scene, cfg.planning_balanced, cfg.walk_attempts, &mut rng);
    for (i, p) in paths.iter().enumerate() {
        match reformulate_planning(graph, p, cfg.planning_len, cfg.oversample, seed, &format!("{sid}/plan{i:03}")) {
            Ok(ds) => demos.extend(ds),
            Err(e) => skip(&mut counts, &e),
        }
    }

    let mut rng = rng_for(seed, &format!("distill/{sid}/viewdiff"));
    let paths = sample_paths(shard, cfg.viewdiff_len, cfg.viewdiff_per_scene, cfg.diff_balanced, cfg.walk_attempts, &mut rng);
    for (i, p) in paths.iter().enumerate() {
        let id = format!("{sid}/diff{i:03}");
        let s = derive_seed(seed, &id);
        match reformulate_viewdiff(graph, sid, p.nodes[0], *p.nodes.last().expect("K >= 1"), s, id) {
            Ok(d) => demos.push(Demonstration { path_len: p.actions.len(), ..d }),
            Err(e) => skip(&mut counts, &e),
        }
    }

    let mut rng = rng_for(seed, &format!("distill/{sid}/mcq"));
    let pool = pair_distances(graph, shard, cfg.max_distractor_pairs, &mut rng);
    let paths = sample_paths(shard, cfg.mcq_len, cfg.mcq_per_scene, cfg.diff_balanced, cfg.walk_attempts, &mut rng);
    for (i, p) in paths.iter().enumerate() {
        let id = format!("{sid}/mcq{i:03}");
        let s = derive_seed(seed, &id);
        match reformulate_mcq(graph, sid, p.nodes[0], *p.nodes.last().expect("K >= 1"), &pool, cfg, s, id) {
            Ok(d) => demos.push(Demonstration { path_len: p.actions.len(), ..d }),
            Err(e) => skip(&mut counts, &e),
        }
    }

    if cfg.dynamics && !shard.edges.is_empty() {
        let mut rng = rng_for(seed, &format!("distill/{sid}/dynamics"));
        for i in 0..cfg.dynamics_per_scene {
            let e = shard.edges.choose(&mut rng).expect("non-empty");
            for (dir, tag) in [(DynamicsDirection::Inverse, "inv"), (DynamicsDirection::Forward, "fwd")] {
                let id = format!("{sid}/{tag}{i:03}");
                let s = derive_seed(seed, &id);
                match reformulate_dynamics(graph, sid, e, dir, cfg.mcq_options, s, id) {
                    Ok(d) => demos.push(d),
                    Err(err) => skip(&mut counts, &err),
                }
            }
        }
    }
    for d in &demos {
        *counts.by_kind.entry(d.kind).or_default() += 1;
    }
    (demos, counts)
}

/// Runs every scene (in parallel) and concatenates results in scene order.
pub fn distill_graph(graph: &ViewGraph, cfg: &DistillConfig, seed: u64) -> Result<(Vec<Demonstration>, DistillCounts), DistillError> {
    cfg.validate()?;
    let shards: Vec<&SceneShard> = graph.shards.values().collect();
    let results: Vec<(Vec<Demonstration>, DistillCounts)> = std::thread::scope(|s| {
        let handles: Vec<_> = shards
            .iter()
            .map(|sh| s.spawn(move || distill_scene(graph, sh, cfg, seed)))
            .collect();
        handles.into_iter().map(|h| h.join().expect("distill worker panicked")).collect()
    });
    let mut all = Vec::new();
    let mut counts = DistillCounts::default();
    for (d, c) in results {
        all.extend(d);
        for (k, v) in c.by_kind {
            *counts.by_kind.entry(k).or_default() += v;
        }
        for (k, v) in c.skipped {
            *counts.skipped.entry(k).or_default() += v;
        }
    }
    Ok((all, counts))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DistillManifest {
    pub seed: u64,
    pub graph_version: u32,
    pub config: DistillConfig,
    pub counts: DistillCounts,
}

/// Writes demos.jsonl, manifest.json and the referenced images.
pub fn write_demos(
    graph: &ViewGraph,
    demos: &[Demonstration],
    counts: &DistillCounts,
    cfg: &DistillConfig,
    seed: u64,
    out: &Path,
) -> Result<(), DistillError> {
    fs::create_dir_all(out.join("images"))?;
    let mut w = io::BufWriter::new(fs::File::create(out.join("demos.jsonl"))?);
    let mut used = BTreeSet::new();
    for d in demos {
        serde_json::to_writer(&mut w, d)?;
        w.write_all(b"\n")?;
        for m in &d.messages {
            used.extend(m.images.iter().cloned());
        }
    }
    w.flush()?;
    for rel in used {
        let hash = rel.trim_start_matches("images/").trim_end_matches(".png");
        if let Some(png) = graph.images.get(hash) {
            fs::write(out.join(&rel), png)?;
        }
    }
    let manifest = DistillManifest {
        seed,
        graph_version: FORMAT_VERSION,
        config: cfg.clone(),
        counts: counts.clone(),
    };
    fs::write(out.join("manifest.json"), serde_json::to_vec_pretty(&manifest)?)?;
    Ok(())
}
