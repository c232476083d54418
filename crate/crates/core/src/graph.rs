//! The view graph: visited viewpoints merged by pose similarity, linked by
//! the action lists that moved between them.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::io::{self, BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::action::{execute, Action};
use crate::render::{quality_check, Quality, QualityThresholds, RenderedView};
use crate::se3::{position_distance, rotation_distance, Pose, StepSizes};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("trajectory for scene {traj} ingested into shard {shard}")]
    SceneMismatch { shard: String, traj: String },
    #[error("trajectory has {states} states but {transitions} transitions")]
    Shape { states: usize, transitions: usize },
    #[error("transition {index} does not replay onto the next state (off by {d_pos:.3e} m, {d_rot:.3e}°)")]
    Inconsistent { index: usize, d_pos: f64, d_rot: f64 },
    #[error("unsupported graph format version {0} (expected {FORMAT_VERSION})")]
    Version(u32),
    #[error("corrupt {file} record on line {line}: {detail}")]
    Corrupt { file: &'static str, line: usize, detail: String },
    #[error("io: {0}")]
    Io(#[from] io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("render: {0}")]
    Render(#[from] crate::render::RenderError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GraphConfig {
    pub merge_pos_m: f64,
    pub merge_rot_deg: f64,
    pub steps: StepSizes,
    /// Whether trajectories were executed with snapping.
    pub snap: bool,
    pub quality: QualityThresholds,
    /// Tolerance for checking that a trajectory replays state to state.
    pub replay_tol: f64,
}

impl Default for GraphConfig {
    fn default() -> Self {
        Self {
            merge_pos_m: 0.25,
            merge_rot_deg: 15.0,
            steps: StepSizes::default(),
            snap: true,
            quality: QualityThresholds::default(),
            replay_tol: 1e-6,
        }
    }
}

impl GraphConfig {
    /// Strictly below both thresholds.
    pub fn mergeable(&self, a: &Pose, b: &Pose) -> bool {
        position_distance(a, b) < self.merge_pos_m && rotation_distance(a, b) < self.merge_rot_deg
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewNode {
    pub id: u64,
    pub scene_id: String,
    #[serde(with = "crate::se3::matrix_serde")]
    pub pose: Pose,
    pub image: String,
    pub iteration: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ViewEdge {
    pub src: u64,
    pub dst: u64,
    pub actions: Vec<Action>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajState {
    pub pose: Pose,
    pub view: RenderedView,
}

/// `transitions[i]` moves `states[i]` to `states[i + 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub scene_id: String,
    pub states: Vec<TrajState>,
    pub transitions: Vec<Vec<Action>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct MergeReport {
    pub states_dropped: usize,
    pub nodes_added: usize,
    pub nodes_merged: usize,
    pub edges_added: usize,
    pub edges_deduped: usize,
    pub self_loops: usize,
    /// Edges whose replay from the merged source misses the destination.
    pub edges_drifted: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SceneShard {
    pub scene_id: String,
    pub nodes: Vec<ViewNode>,
    pub edges: Vec<ViewEdge>,
    edge_set: HashSet<ViewEdge>,
}

impl SceneShard {
    pub fn new(scene_id: &str) -> Self {
        Self {
            scene_id: scene_id.to_string(),
            ..Self::default()
        }
    }

    pub fn node(&self, id: u64) -> Option<&ViewNode> {
        self.nodes
            .binary_search_by_key(&id, |n| n.id)
            .ok()
            .map(|i| &self.nodes[i])
    }

    /// Outgoing edges per node id, in edge insertion order.
    pub fn adjacency(&self) -> BTreeMap<u64, Vec<&ViewEdge>> {
        let mut adj: BTreeMap<u64, Vec<&ViewEdge>> = BTreeMap::new();
        for e in &self.edges {
            adj.entry(e.src).or_default().push(e);
        }
        adj
    }

    fn push_edge(&mut self, e: ViewEdge) -> bool {
        if self.edge_set.insert(e.clone()) {
            self.edges.push(e);
            true
        } else {
            false
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ViewGraph {
    pub config: GraphConfig,
    pub shards: BTreeMap<String, SceneShard>,
    /// PNG bytes by content hash.
    pub images: BTreeMap<String, Vec<u8>>,
    next_id: u64,
    iteration: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GraphStats {
    pub scenes: usize,
    pub nodes: usize,
    pub edges: usize,
    pub avg_nodes_per_scene: f64,
    pub avg_actions_per_edge: f64,
}

impl GraphStats {
    /// `scenes nodes edges avg_nodes avg_actions`, one decimal for means.
    pub fn row(&self, label: &str) -> String {
        format!(
            "{label}\t{}\t{}\t{}\t{:.1}\t{:.1}",
            self.scenes, self.nodes, self.edges, self.avg_nodes_per_scene, self.avg_actions_per_edge
        )
    }
}

impl ViewGraph {
    pub fn new(config: GraphConfig) -> Self {
        Self {
            config,
            ..Self::default()
        }
    }

    pub fn iteration(&self) -> u32 {
        self.iteration
    }

    /// Tags subsequently inserted nodes with `it`.
    pub fn set_iteration(&mut self, it: u32) {
        self.iteration = it;
    }

    pub fn ingest(&mut self, traj: &Trajectory) -> Result<MergeReport, GraphError> {
        let mut shard = self
            .shards
            .remove(&traj.scene_id)
            .unwrap_or_else(|| SceneShard::new(&traj.scene_id));
        let r = self.ingest_into(&mut shard, traj);
        if !shard.nodes.is_empty() {
            self.shards.insert(shard.scene_id.clone(), shard);
        }
        r
    }

    fn validate(&self, traj: &Trajectory) -> Result<(), GraphError> {
        if !traj.states.is_empty() && traj.transitions.len() + 1 != traj.states.len() {
            return Err(GraphError::Shape {
                states: traj.states.len(),
                transitions: traj.transitions.len(),
            });
        }
        for (i, acts) in traj.transitions.iter().enumerate() {
            let reached = execute(&traj.states[i].pose, acts, &self.config.steps, self.config.snap);
            let next = &traj.states[i + 1].pose;
            let d_pos = position_distance(&reached, next);
            let d_rot = rotation_distance(&reached, next);
            if d_pos > self.config.replay_tol || d_rot > self.config.replay_tol {
                return Err(GraphError::Inconsistent { index: i, d_pos, d_rot });
            }
        }
        Ok(())
    }

    /// Merges one trajectory into `shard`, bridging dropped states by
    /// concatenating their actions.
    pub fn ingest_into(&mut self, shard: &mut SceneShard, traj: &Trajectory) -> Result<MergeReport, GraphError> {
        if shard.scene_id != traj.scene_id {
            return Err(GraphError::SceneMismatch {
                shard: shard.scene_id.clone(),
                traj: traj.scene_id.clone(),
            });
        }
        self.validate(traj)?;
        // Encode before touching the shard so an encoder failure leaves it intact.
        let mut encoded = Vec::with_capacity(traj.states.len());
        for s in &traj.states {
            let keep = quality_check(&s.view, &self.config.quality) == Quality::Pass;
            encoded.push(if keep {
                Some((s.view.content_hash(), s.view.to_png()?))
            } else {
                None
            });
        }

        let mut rep = MergeReport::default();
        let mut prev: Option<u64> = None;
        let mut pending: Vec<Action> = Vec::new();
        for (i, state) in traj.states.iter().enumerate() {
            if i > 0 {
                pending.extend_from_slice(&traj.transitions[i - 1]);
            }
            let Some((hash, png)) = encoded[i].take() else {
                rep.states_dropped += 1;
                continue;
            };
            let existing = shard
                .nodes
                .iter()
                .find(|n| self.config.mergeable(&n.pose, &state.pose))
                .map(|n| n.id);
            let id = match existing {
                Some(id) => {
                    rep.nodes_merged += 1;
                    id
                }
                None => {
                    let id = self.next_id;
                    self.next_id += 1;
                    self.images.entry(hash.clone()).or_insert(png);
                    shard.nodes.push(ViewNode {
                        id,
                        scene_id: traj.scene_id.clone(),
                        pose: state.pose,
                        image: hash,
                        iteration: self.iteration,
                    });
                    rep.nodes_added += 1;
                    id
                }
            };
            if let Some(src) = prev {
                let actions = std::mem::take(&mut pending);
                if src == id {
                    rep.self_loops += 1;
                } else if actions.is_empty() {
                    // Distinct nodes with no actions between them cannot form an edge.
                } else if !self.edge_replays(shard, src, id, &actions) {
                    rep.edges_drifted += 1;
                } else if shard.push_edge(ViewEdge { src, dst: id, actions }) {
                    rep.edges_added += 1;
                } else {
                    rep.edges_deduped += 1;
                }
            }
            pending.clear();
            prev = Some(id);
        }
        Ok(rep)
    }

    fn edge_replays(&self, shard: &SceneShard, src: u64, dst: u64, actions: &[Action]) -> bool {
        let (Some(s), Some(d)) = (shard.node(src), shard.node(dst)) else {
            return false;
        };
        let reached = execute(&s.pose, actions, &self.config.steps, self.config.snap);
        self.config.mergeable(&reached, &d.pose)
    }

    pub fn stats(&self) -> GraphStats {
        graph_stats(self)
    }

    pub fn node_count(&self) -> usize {
        self.shards.values().map(|s| s.nodes.len()).sum()
    }

    pub fn edge_count(&self) -> usize {
        self.shards.values().map(|s| s.edges.len()).sum()
    }
}

pub fn graph_stats(g: &ViewGraph) -> GraphStats {
    let scenes = g.shards.len();
    let nodes = g.node_count();
    let edges = g.edge_count();
    let actions: usize = g
        .shards
        .values()
        .flat_map(|s| s.edges.iter())
        .map(|e| e.actions.len())
        .sum();
    GraphStats {
        scenes,
        nodes,
        edges,
        avg_nodes_per_scene: if scenes == 0 { 0.0 } else { nodes as f64 / scenes as f64 },
        avg_actions_per_edge: if edges == 0 { 0.0 } else { actions as f64 / edges as f64 },
    }
}

/// Relative frequency of each action over a set of action lists.
pub fn action_distribution<'a, I>(lists: I) -> BTreeMap<Action, f64>
where
    I: IntoIterator<Item = &'a [Action]>,
{
    let mut counts: BTreeMap<Action, usize> = BTreeMap::new();
    let mut total = 0usize;
    for l in lists {
        for a in l {
            *counts.entry(*a).or_default() += 1;
            total += 1;
        }
    }
    counts
        .into_iter()
        .map(|(a, c)| (a, c as f64 / total as f64))
        .collect()
}

pub fn graph_action_distribution(g: &ViewGraph) -> BTreeMap<Action, f64> {
    action_distribution(
        g.shards
            .values()
            .flat_map(|s| s.edges.iter())
            .map(|e| e.actions.as_slice()),
    )
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Meta {
    version: u32,
    config: GraphConfig,
    next_id: u64,
    iteration: u32,
    stats: GraphStats,
}

fn write_jsonl<T: Serialize, W: Write>(mut w: W, items: impl IntoIterator<Item = T>) -> Result<(), GraphError> {
    for it in items {
        serde_json::to_writer(&mut w, &it)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// Writes nodes.jsonl, edges.jsonl, images/<hash>.png and meta.json.
pub fn persist(g: &ViewGraph, dir: &Path) -> Result<(), GraphError> {
    fs::create_dir_all(dir.join("images"))?;
    let nodes = g.shards.values().flat_map(|s| s.nodes.iter());
    write_jsonl(io::BufWriter::new(fs::File::create(dir.join("nodes.jsonl"))?), nodes)?;
    #[derive(Serialize)]
    struct EdgeRec<'a> {
        scene_id: &'a str,
        #[serde(flatten)]
        edge: &'a ViewEdge,
    }
    let edges = g
        .shards
        .values()
        .flat_map(|s| s.edges.iter().map(move |e| EdgeRec { scene_id: &s.scene_id, edge: e }));
    write_jsonl(io::BufWriter::new(fs::File::create(dir.join("edges.jsonl"))?), edges)?;
    for (hash, png) in &g.images {
        let p = dir.join("images").join(format!("{hash}.png"));
        if !p.exists() {
            fs::write(p, png)?;
        }
    }
    let meta = Meta {
        version: FORMAT_VERSION,
        config: g.config,
        next_id: g.next_id,
        iteration: g.iteration,
        stats: g.stats(),
    };
    fs::write(dir.join("meta.json"), serde_json::to_vec_pretty(&meta)?)?;
    Ok(())
}

fn read_records<T: serde::de::DeserializeOwned>(path: &Path, file: &'static str) -> Result<Vec<T>, GraphError> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let mut out = Vec::new();
    for (i, line) in BufReader::new(fs::File::open(path)?).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| GraphError::Corrupt {
            file,
            line: i + 1,
            detail: e.to_string(),
        })?);
    }
    Ok(out)
}

/// Loads a store written by [`persist`]. A missing directory or meta file
/// loads as an empty graph with the default config.
pub fn load(dir: &Path) -> Result<ViewGraph, GraphError> {
    let meta_path = dir.join("meta.json");
    if !meta_path.exists() {
        return Ok(ViewGraph::default());
    }
    let raw: serde_json::Value = serde_json::from_slice(&fs::read(&meta_path)?)?;
    let version = raw.get("version").and_then(|v| v.as_u64()).unwrap_or(0) as u32;
    if version != FORMAT_VERSION {
        return Err(GraphError::Version(version));
    }
    let meta: Meta = serde_json::from_value(raw)?;
    let mut g = ViewGraph::new(meta.config);
    g.next_id = meta.next_id;
    g.iteration = meta.iteration;
    for n in read_records::<ViewNode>(&dir.join("nodes.jsonl"), "nodes")? {
        let img = dir.join("images").join(format!("{}.png", n.image));
        if !g.images.contains_key(&n.image) {
            g.images.insert(n.image.clone(), fs::read(&img)?);
        }
        g.shards
            .entry(n.scene_id.clone())
            .or_insert_with(|| SceneShard::new(&n.scene_id))
            .nodes
            .push(n);
    }
    #[derive(Deserialize)]
    struct EdgeRec {
        scene_id: String,
        #[serde(flatten)]
        edge: ViewEdge,
    }
    for (i, r) in read_records::<EdgeRec>(&dir.join("edges.jsonl"), "edges")?
        .into_iter()
        .enumerate()
    {
        let shard = g.shards.get_mut(&r.scene_id).ok_or_else(|| GraphError::Corrupt {
            file: "edges",
            line: i + 1,
            detail: format!("unknown scene {}", r.scene_id),
        })?;
        if shard.node(r.edge.src).is_none() || shard.node(r.edge.dst).is_none() {
            return Err(GraphError::Corrupt {
                file: "edges",
                line: i + 1,
                detail: "edge endpoint missing".into(),
            });
        }
        shard.push_edge(r.edge);
    }
    for s in g.shards.values_mut() {
        s.nodes.sort_by_key(|n| n.id);
    }
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::se3::EulerAngles;
    use nalgebra::Vector3;

    pub(crate) fn textured(seed: u8) -> RenderedView {
        let px: Vec<[u8; 3]> = (0..16 * 16)
            .map(|i| {
                let v = ((i * 37 + seed as usize * 11) % 251) as u8;
                [v, v.wrapping_mul(3), 255 - v]
            })
            .collect();
        RenderedView::from_pixels(16, 16, px)
    }

    fn chain(scene: &str, start: Vector3<f64>, actions: &[Action]) -> Trajectory {
        let steps = StepSizes::default();
        let mut pose = Pose::from_euler(start, EulerAngles::new(-90.0, 0.0, 0.0)).unwrap();
        let mut states = vec![TrajState { pose, view: textured(0) }];
        let mut transitions = Vec::new();
        for (i, a) in actions.iter().enumerate() {
            pose = execute(&pose, &[*a], &steps, true);
            states.push(TrajState { pose, view: textured(i as u8 + 1) });
            transitions.push(vec![*a]);
        }
        Trajectory {
            scene_id: scene.into(),
            states,
            transitions,
        }
    }

    #[test]
    fn three_states_two_edges_and_idempotent() {
        let mut g = ViewGraph::new(GraphConfig::default());
        let t = chain("s", Vector3::zeros(), &[Action::MoveForward, Action::TurnLeft]);
        let r = g.ingest(&t).unwrap();
        assert_eq!((r.nodes_added, r.edges_added), (3, 2));
        let r2 = g.ingest(&t).unwrap();
        assert_eq!((r2.nodes_added, r2.edges_added, r2.edges_deduped), (0, 0, 2));
        assert_eq!((g.node_count(), g.edge_count()), (3, 2));
    }

    #[test]
    fn near_states_merge() {
        let mut g = ViewGraph::new(GraphConfig::default());
        let a = Pose::from_euler(Vector3::zeros(), EulerAngles::new(0.0, 0.0, 0.0)).unwrap();
        let b = Pose::from_euler(Vector3::new(0.2, 0.0, 0.0), EulerAngles::new(0.0, 10.0, 0.0)).unwrap();
        let mut cfg = GraphConfig::default();
        cfg.replay_tol = f64::INFINITY;
        g.config = cfg;
        let t = Trajectory {
            scene_id: "s".into(),
            states: vec![TrajState { pose: a, view: textured(1) }, TrajState { pose: b, view: textured(2) }],
            transitions: vec![vec![Action::MoveRight]],
        };
        let r = g.ingest(&t).unwrap();
        assert_eq!((r.nodes_added, r.nodes_merged, r.self_loops), (1, 1, 1));
        assert_eq!(g.edge_count(), 0);
    }

    #[test]
    fn void_state_is_bridged() {
        let mut g = ViewGraph::new(GraphConfig::default());
        let mut t = chain("s", Vector3::zeros(), &[Action::MoveForward, Action::MoveForward]);
        t.states[1].view = RenderedView::void(16, 16);
        let r = g.ingest(&t).unwrap();
        assert_eq!(r.states_dropped, 1);
        let shard = &g.shards["s"];
        assert_eq!(shard.edges.len(), 1);
        assert_eq!(shard.edges[0].actions, vec![Action::MoveForward, Action::MoveForward]);
    }

    #[test]
    fn inconsistent_trajectory_rejected() {
        let mut g = ViewGraph::new(GraphConfig::default());
        let mut t = chain("s", Vector3::zeros(), &[Action::MoveForward]);
        t.transitions[0] = vec![Action::MoveUp];
        assert!(matches!(g.ingest(&t), Err(GraphError::Inconsistent { index: 0, .. })));
        assert_eq!(g.node_count(), 0);
        let mut shard = SceneShard::new("other");
        assert!(matches!(g.ingest_into(&mut shard, &t), Err(GraphError::SceneMismatch { .. })));
    }

    #[test]
    fn disjoint_pairs_count() {
        let mut g = ViewGraph::new(GraphConfig::default());
        for i in 0..6 {
            let t = chain("s", Vector3::new(3.0 * i as f64, 0.0, 0.0), &[Action::MoveForward]);
            g.ingest(&t).unwrap();
        }
        let st = g.stats();
        assert_eq!((st.nodes, st.edges), (12, 6));
        assert_eq!(st.avg_actions_per_edge, 1.0);
    }

    #[test]
    fn stats_empty_and_row() {
        let g = ViewGraph::default();
        let s = g.stats();
        assert_eq!((s.scenes, s.nodes, s.edges), (0, 0, 0));
        assert_eq!(s.avg_nodes_per_scene, 0.0);
        let paper = GraphStats {
            scenes: 186,
            nodes: 4067,
            edges: 2875,
            avg_nodes_per_scene: 21.866,
            avg_actions_per_edge: 1.6,
        };
        assert_eq!(paper.row("0"), "0\t186\t4067\t2875\t21.9\t1.6");
    }

    #[test]
    fn distribution_basics() {
        let one = [Action::MoveForward];
        let d = action_distribution([one.as_slice()]);
        assert_eq!(d.len(), 1);
        assert_eq!(d[&Action::MoveForward], 1.0);
        assert!(action_distribution(std::iter::empty::<&[Action]>()).is_empty());
    }

    #[test]
    fn persist_roundtrip() {
        let mut g = ViewGraph::new(GraphConfig::default());
        g.ingest(&chain("a", Vector3::zeros(), &[Action::MoveForward, Action::TurnLeft, Action::LookUp]))
            .unwrap();
        g.ingest(&chain("b", Vector3::zeros(), &[Action::MoveUp])).unwrap();
        let d1 = tempfile::tempdir().unwrap();
        persist(&g, d1.path()).unwrap();
        let back = load(d1.path()).unwrap();
        assert_eq!(back, g);
        let d2 = tempfile::tempdir().unwrap();
        persist(&back, d2.path()).unwrap();
        for f in ["nodes.jsonl", "edges.jsonl", "meta.json"] {
            assert_eq!(fs::read(d1.path().join(f)).unwrap(), fs::read(d2.path().join(f)).unwrap());
        }
    }

    #[test]
    fn load_empty_and_bad_version() {
        let d = tempfile::tempdir().unwrap();
        assert_eq!(load(d.path()).unwrap().node_count(), 0);
        fs::write(d.path().join("meta.json"), "{\"version\": 99}").unwrap();
        assert!(matches!(load(d.path()), Err(GraphError::Version(99))));
    }
}
