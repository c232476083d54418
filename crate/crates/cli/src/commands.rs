use std::collections::BTreeMap;
use std::fs;
use std::io::{self, BufRead, BufWriter, Write};
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use viewplan_core::action::{execute, format_sequence};
use viewplan_core::analysis::{
    coverage_csv, coverage_curves, factor_correlations, factors_csv, success_table, success_table_csv,
    turn_distribution, turn_distribution_csv, write_plot, BinEdges, PairInfo, PoseTrack, TaskSummary,
};
use viewplan_core::calibrate::{calibrate_thresholds, CalibrationRecord, DEFAULT_POSITION_GRID, DEFAULT_ROTATION_GRID};
use viewplan_core::datagen::{
    filter_scenes, generate_dataset, manifest_dir, procedural_trajectory, read_manifest, read_pairs, SceneJob,
};
use viewplan_core::distill::{distill_graph, sample_paths, write_demos};
use viewplan_core::episode::{
    run_episode, Agent, IvpTask, LogRecord, OracleAgent, ProtocolVariant, RandomAgent, RolloutLog,
};
use viewplan_core::graph::{self, graph_action_distribution, TrajState, Trajectory};
use viewplan_core::planner::{plan_actions, PlanLimits};
use viewplan_core::render::{topdown_pose, visible_vertices, CameraIntrinsics};
use viewplan_core::scene::{load_scene, procedural_scene, save_scene, ProceduralSpec, Scene};
use viewplan_core::se3::view_distance;
use viewplan_core::seed::{derive_seed, rng_for};

use crate::config::{load_scene_by_id, load_scenes, Config};
use crate::wire::{self, ServerMessage, Shared};

#[derive(Debug, Parser)]
#[command(name = "viewplan", version, about = "View-planning environment and benchmark toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Root seed; all randomness derives from it.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// JSON config file.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Variant {
    Default,
    NoSnap,
    NoSubmit,
}

impl From<Variant> for ProtocolVariant {
    fn from(v: Variant) -> Self {
        match v {
            Variant::Default => ProtocolVariant::Default,
            Variant::NoSnap => ProtocolVariant::NoSnap,
            Variant::NoSubmit => ProtocolVariant::NoSubmit,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AgentKind {
    Oracle,
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PairMode {
    Synthetic,
    Trajectory,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render a scene from a pose to PNG.
    Render {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        scene: PathBuf,
        /// "tx,ty,tz,rx,ry,rz" in meters and degrees.
        #[arg(long, allow_hyphen_values = true)]
        pose: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Render the top-down overview of a scene.
    Topdown {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        scene: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate P2V/V2P/IVP instances.
    GenData {
        #[command(flatten)]
        common: Common,
        /// Directory of PLY scenes.
        #[arg(long)]
        scenes: Option<PathBuf>,
        /// Generate this many procedural rooms instead (written to <out>/scenes).
        #[arg(long, conflicts_with = "scenes")]
        procedural: Option<usize>,
        /// Points per procedural room.
        #[arg(long, default_value_t = 200_000)]
        points: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = PairMode::Synthetic)]
        mode: PairMode,
        #[arg(long)]
        pairs_per_scene: Option<usize>,
        /// JSONL of per-scene verdicts; rejected scenes are skipped.
        #[arg(long)]
        verdicts: Option<PathBuf>,
    },
    /// Greedy ground-truth plan between two poses.
    Plan {
        #[command(flatten)]
        common: Common,
        #[arg(long, allow_hyphen_values = true)]
        init: String,
        #[arg(long, allow_hyphen_values = true)]
        target: String,
    },
    /// Run IVP episodes with a built-in agent.
    EpisodeRun {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, value_enum, default_value_t = AgentKind::Oracle)]
        agent: AgentKind,
        #[arg(long, value_enum, default_value_t = Variant::Default)]
        variant: Variant,
        /// Directory for rollout logs.
        #[arg(long)]
        logs: Option<PathBuf>,
        #[arg(long)]
        limit: Option<usize>,
    },
    /// Serve episodes over JSON lines (stdio, or TCP with --tcp).
    Serve {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        scenes: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Variant::Default)]
        variant: Variant,
        #[arg(long)]
        logs: Option<PathBuf>,
        /// Listen address, e.g. 127.0.0.1:7070.
        #[arg(long)]
        tcp: Option<String>,
        /// Exit after this many TCP connections have closed.
        #[arg(long)]
        max_connections: Option<u64>,
    },
    /// Merge rollout logs into a view graph.
    GraphBuild {
        #[command(flatten)]
        common: Common,
        /// Rollout log files or directories of them.
        #[arg(long, required = true, num_args = 1..)]
        logs: Vec<PathBuf>,
        #[arg(long)]
        scenes: Option<PathBuf>,
        #[arg(long)]
        graph: PathBuf,
        /// Iteration tag for nodes added by this run.
        #[arg(long, default_value_t = 0)]
        iteration: u32,
    },
    /// Print view-graph statistics.
    GraphStats {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        graph: PathBuf,
    },
    /// Sample random paths from a view graph as JSON lines.
    GraphSample {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        graph: PathBuf,
        #[arg(long, default_value_t = 2)]
        min_len: usize,
        #[arg(long, default_value_t = 5)]
        max_len: usize,
        #[arg(long, default_value_t = 10)]
        count: usize,
        #[arg(long)]
        balanced: bool,
    },
    /// Distill a view graph into demonstrations.
    Distill {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Sweep success thresholds against human labels.
    Calibrate {
        #[command(flatten)]
        common: Common,
        /// JSONL of {estimate, target, label} records.
        #[arg(long)]
        records: PathBuf,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Success tables, factors, turn distribution and coverage from logs.
    Analyze {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, required = true, num_args = 1..)]
        logs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Scene directory; enables visibility factors and coverage curves.
        #[arg(long)]
        scenes: Option<PathBuf>,
    },
}

impl Command {
    fn common(&self) -> &Common {
        match self {
            Command::Render { common, .. }
            | Command::Topdown { common, .. }
            | Command::GenData { common, .. }
            | Command::Plan { common, .. }
            | Command::EpisodeRun { common, .. }
            | Command::Serve { common, .. }
            | Command::GraphBuild { common, .. }
            | Command::GraphStats { common, .. }
            | Command::GraphSample { common, .. }
            | Command::Distill { common, .. }
            | Command::Calibrate { common, .. }
            | Command::Analyze { common, .. } => common,
        }
    }
}

pub fn run(cli: Cli) -> Result<()> {
    let common = cli.command.common().clone();
    let cfg = Config::load(common.config.as_deref())?;
    let seed = common.seed;
    match cli.command {
        Command::Render { scene, pose, out, .. } => {
            let scene = load_scene(&scene).with_context(|| format!("loading {}", scene.display()))?;
            let pose = wire::parse_pose(&pose).map_err(|e| anyhow!("--pose: {e}"))?;
            let view = cfg.render.render(&scene, &pose);
            view.write_png(&out)?;
            println!("{} {}", out.display(), view.content_hash());
        }
        Command::Topdown { scene, out, .. } => {
            let scene = load_scene(&scene).with_context(|| format!("loading {}", scene.display()))?;
            let pose = topdown_pose(&scene, &cfg.render.intrinsics);
            let view = cfg.render.render(&scene, &pose);
            view.write_png(&out)?;
            println!("{} {}", out.display(), view.content_hash());
        }
        Command::GenData {
            scenes,
            procedural,
            points,
            out,
            mode,
            pairs_per_scene,
            verdicts,
            ..
        } => gen_data(&cfg, seed, scenes, procedural, points, &out, mode, pairs_per_scene, verdicts)?,
        Command::Plan { init, target, .. } => {
            let init = wire::parse_pose(&init).map_err(|e| anyhow!("--init: {e}"))?;
            let target = wire::parse_pose(&target).map_err(|e| anyhow!("--target: {e}"))?;
            let limits: PlanLimits = cfg.pipeline.plan_limits;
            let plan = plan_actions(&init, &target, &cfg.pipeline.steps, &limits);
            println!("actions: {}", format_sequence(&plan.actions));
            println!("final_error: {:.6}", plan.final_error);
        }
        Command::EpisodeRun {
            manifest,
            agent,
            variant,
            logs,
            limit,
            ..
        } => episode_run(&cfg, seed, &manifest, agent, variant.into(), logs.as_deref(), limit)?,
        Command::Serve {
            manifest,
            scenes,
            variant,
            logs,
            tcp,
            max_connections,
            ..
        } => {
            let instances = read_manifest(&manifest)?;
            let root = cfg.scene_root(scenes.as_deref());
            let shared = Shared::new(instances, root, cfg.render, cfg.pipeline.steps, variant.into(), logs);
            match tcp {
                None => wire::serve_stdio(&shared)?,
                Some(addr) => {
                    let listener = TcpListener::bind(&addr).with_context(|| format!("binding {addr}"))?;
                    eprintln!("listening on {}", listener.local_addr()?);
                    wire::serve_tcp(Arc::new(shared), listener, max_connections)?;
                }
            }
        }
        Command::GraphBuild {
            logs,
            scenes,
            graph: dir,
            iteration,
            ..
        } => graph_build(&cfg, &logs, scenes.as_deref(), &dir, iteration)?,
        Command::GraphStats { graph: dir, .. } => {
            let g = graph::load(&dir)?;
            println!("iteration\tscenes\tnodes\tedges\tavg_nodes\tavg_actions");
            println!("{}", g.stats().row(&g.iteration().to_string()));
            for (a, f) in graph_action_distribution(&g) {
                println!("{}\t{:.4}", a.name(), f);
            }
        }
        Command::GraphSample {
            graph: dir,
            min_len,
            max_len,
            count,
            balanced,
            ..
        } => {
            if min_len < 1 || min_len > max_len {
                bail!("--min-len must be at least 1 and not above --max-len");
            }
            let g = graph::load(&dir)?;
            let stdout = io::stdout();
            let mut w = BufWriter::new(stdout.lock());
            for (sid, shard) in &g.shards {
                let mut rng = rng_for(seed, &format!("graph-sample/{sid}"));
                for p in sample_paths(shard, [min_len, max_len], count, balanced, cfg.distill.walk_attempts, &mut rng) {
                    serde_json::to_writer(&mut w, &p)?;
                    writeln!(w)?;
                }
            }
            w.flush()?;
        }
        Command::Distill { graph: dir, out, .. } => {
            let g = graph::load(&dir)?;
            let (demos, counts) = distill_graph(&g, &cfg.distill, seed)?;
            write_demos(&g, &demos, &counts, &cfg.distill, seed, &out)?;
            println!("{}", serde_json::to_string(&counts)?);
        }
        Command::Calibrate { records, csv, .. } => {
            let recs: Vec<CalibrationRecord> = read_jsonl(&records)?;
            let table = calibrate_thresholds(&recs, &DEFAULT_POSITION_GRID, &DEFAULT_ROTATION_GRID)?;
            if table.single_class_labels {
                log::warn!("all labels are one class; precision or recall is degenerate");
            }
            print!("{}", table.to_text());
            let b = table.best_row();
            println!("best: {:.2} m, {}°, F1 {:.3}", b.position_m, b.rotation_deg, b.f1);
            if let Some(path) = csv {
                fs::write(&path, table.to_csv())?;
            }
        }
        Command::Analyze {
            manifest,
            logs,
            out,
            scenes,
            ..
        } => analyze(&cfg, &manifest, &logs, &out, scenes.as_deref())?,
    }
    Ok(())
}

fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let f = fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut out = Vec::new();
    for (i, line) in io::BufReader::new(f).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).with_context(|| format!("{}:{}", path.display(), i + 1))?);
    }
    Ok(out)
}

#[allow(clippy::too_many_arguments)]
fn gen_data(
    cfg: &Config,
    seed: u64,
    scenes: Option<PathBuf>,
    procedural: Option<usize>,
    points: usize,
    out: &Path,
    mode: PairMode,
    pairs_per_scene: Option<usize>,
    verdicts: Option<PathBuf>,
) -> Result<()> {
    let mut pipeline = cfg.pipeline.clone();
    if let Some(n) = pairs_per_scene {
        pipeline.pairs_per_scene = n;
    }
    let loaded: Vec<Scene> = match procedural {
        Some(n) => {
            let dir = out.join("scenes");
            fs::create_dir_all(&dir)?;
            let spec = ProceduralSpec {
                points,
                ..ProceduralSpec::default()
            };
            (0..n)
                .map(|i| {
                    let id = format!("proc_{i:03}");
                    let s = procedural_scene(&id, derive_seed(seed, &format!("procedural/{id}")), &spec)?;
                    save_scene(&s, &dir.join(format!("{id}.ply")))?;
                    Ok(s)
                })
                .collect::<Result<_>>()?
        }
        None => load_scenes(&cfg.require_scene_root(scenes.as_deref())?)?,
    };
    if loaded.is_empty() {
        bail!("no scenes found");
    }
    let ids: Vec<String> = loaded.iter().map(|s| s.id().to_string()).collect();
    let filter = filter_scenes(&ids, verdicts.as_deref())?;
    let kept: Vec<&Scene> = loaded.iter().filter(|s| filter.accepted.contains(&s.id().to_string())).collect();
    let trajectories: Vec<Vec<_>> = match mode {
        PairMode::Synthetic => Vec::new(),
        PairMode::Trajectory => kept.iter().map(|s| procedural_trajectory(s, 600, seed)).collect(),
    };
    let jobs: Vec<SceneJob> = kept
        .iter()
        .enumerate()
        .map(|(i, s)| SceneJob {
            scene: s,
            trajectory: trajectories.get(i).map(|t| t.as_slice()),
        })
        .collect();
    let report = generate_dataset(&jobs, &cfg.render, &pipeline, seed, out)?;
    println!("{}", serde_json::to_string(&report)?);
    Ok(())
}

fn ivp_tasks(cfg: &Config, manifest: &Path) -> Result<Vec<IvpTask>> {
    Ok(read_manifest(manifest)?
        .iter()
        .filter_map(|i| IvpTask::from_instance(i, cfg.pipeline.steps))
        .collect())
}

fn episode_run(
    cfg: &Config,
    seed: u64,
    manifest: &Path,
    agent: AgentKind,
    variant: ProtocolVariant,
    logs: Option<&Path>,
    limit: Option<usize>,
) -> Result<()> {
    let mut tasks = ivp_tasks(cfg, manifest)?;
    if let Some(n) = limit {
        tasks.truncate(n);
    }
    if let Some(d) = logs {
        fs::create_dir_all(d)?;
    }
    let stdout = io::stdout();
    let mut w = BufWriter::new(stdout.lock());
    let (mut ok, mut n) = (0usize, 0usize);
    for task in tasks {
        let mut a: Box<dyn Agent> = match agent {
            AgentKind::Oracle => Box::new(OracleAgent::default()),
            AgentKind::Random => Box::new(RandomAgent::new(rng_for(seed, &format!("random/{}", task.episode_id)))),
        };
        let id = task.episode_id.clone();
        let (state, log) = run_episode(task, a.as_mut(), variant);
        let outcome = state.outcome().cloned().expect("episode ran to termination");
        ok += usize::from(outcome.success);
        n += 1;
        if let Some(d) = logs {
            let path = d.join(format!("{:05}.jsonl", n));
            log.write_jsonl(BufWriter::new(fs::File::create(&path)?))?;
        }
        let msg = ServerMessage::Result { episode_id: id, outcome };
        writeln!(w, "{}", msg.to_line())?;
    }
    w.flush()?;
    eprintln!("{ok}/{n} episodes succeeded");
    Ok(())
}

/// Rollout logs from files and directories of `.jsonl` files; records are
/// grouped by consecutive episode id.
pub fn read_rollouts(paths: &[PathBuf]) -> Result<Vec<RolloutLog>> {
    let mut files = Vec::new();
    for p in paths {
        if p.is_dir() {
            let mut fs_: Vec<PathBuf> = fs::read_dir(p)?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| f.extension().is_some_and(|x| x == "jsonl"))
                .collect();
            fs_.sort();
            files.extend(fs_);
        } else {
            files.push(p.clone());
        }
    }
    let mut logs: Vec<RolloutLog> = Vec::new();
    let mut current: Option<String> = None;
    for f in files {
        for rec in read_jsonl::<LogRecord>(&f)? {
            let id = match &rec {
                LogRecord::Turn { episode_id, .. } | LogRecord::Outcome { episode_id, .. } => episode_id.clone(),
            };
            if current.as_deref() != Some(id.as_str()) {
                logs.push(RolloutLog { records: Vec::new() });
                current = Some(id);
            }
            logs.last_mut().expect("pushed").records.push(rec);
        }
        current = None;
    }
    Ok(logs)
}

struct Episode<'a> {
    episode_id: &'a str,
    scene_id: &'a str,
    variant: ProtocolVariant,
    init: viewplan_core::se3::Pose,
    target: viewplan_core::se3::Pose,
    success: bool,
    turns: u32,
    /// Pose after each turn, starting with the initial pose.
    poses: Vec<viewplan_core::se3::Pose>,
    transitions: Vec<Vec<viewplan_core::action::Action>>,
}

fn episode_view(log: &RolloutLog) -> Option<Episode<'_>> {
    let (episode_id, scene_id, variant, init, target, outcome) = log.records.iter().find_map(|r| match r {
        LogRecord::Outcome {
            episode_id,
            scene_id,
            variant,
            init_pose,
            target_pose,
            outcome,
        } => Some((episode_id, scene_id, *variant, *init_pose, *target_pose, outcome)),
        _ => None,
    })?;
    let mut poses = vec![init];
    let mut transitions = Vec::new();
    for r in &log.records {
        if let LogRecord::Turn { pose, executed, .. } = r {
            poses.push(*pose);
            transitions.push(executed.clone());
        }
    }
    Some(Episode {
        episode_id,
        scene_id,
        variant,
        init,
        target,
        success: outcome.success,
        turns: outcome.turns,
        poses,
        transitions,
    })
}

fn graph_build(cfg: &Config, logs: &[PathBuf], scenes: Option<&Path>, dir: &Path, iteration: u32) -> Result<()> {
    let root = cfg.require_scene_root(scenes)?;
    let mut g = graph::load(dir)?;
    if g.node_count() == 0 {
        g.config = cfg.graph;
    }
    g.set_iteration(iteration);
    let rollouts = read_rollouts(logs)?;
    let mut scene_cache: BTreeMap<String, Scene> = BTreeMap::new();
    let (mut used, mut skipped) = (0usize, 0usize);
    for log in &rollouts {
        let Some(ep) = episode_view(log) else {
            skipped += 1;
            continue;
        };
        let snap = ep.variant != ProtocolVariant::NoSnap;
        if snap != g.config.snap {
            log::warn!("episode {}: variant {} does not match graph snapping", ep.episode_id, ep.variant);
            skipped += 1;
            continue;
        }
        if !scene_cache.contains_key(ep.scene_id) {
            scene_cache.insert(ep.scene_id.to_string(), load_scene_by_id(&root, ep.scene_id)?);
        }
        let scene = &scene_cache[ep.scene_id];
        // Replay from the initial pose so states are exactly consistent with
        // the recorded actions; turns that moved nothing are skipped.
        let mut pose = ep.init;
        let mut states = vec![TrajState {
            pose,
            view: cfg.render.render(scene, &pose),
        }];
        let mut transitions = Vec::new();
        for acts in ep.transitions.iter().filter(|a| !a.is_empty()) {
            pose = execute(&pose, acts, &g.config.steps, snap);
            states.push(TrajState {
                pose,
                view: cfg.render.render(scene, &pose),
            });
            transitions.push(acts.clone());
        }
        let traj = Trajectory {
            scene_id: ep.scene_id.to_string(),
            states,
            transitions,
        };
        let rep = g.ingest(&traj)?;
        log::debug!("episode {}: {rep:?}", ep.episode_id);
        used += 1;
    }
    graph::persist(&g, dir)?;
    eprintln!("ingested {used} episodes ({skipped} skipped)");
    println!("{}", g.stats().row(&iteration.to_string()));
    Ok(())
}

fn instance_of_episode(episode_id: &str) -> &str {
    episode_id.rsplit_once('#').map_or(episode_id, |(head, _)| head)
}

fn analyze(cfg: &Config, manifest: &Path, logs: &[PathBuf], out: &Path, scenes: Option<&Path>) -> Result<()> {
    let steps = cfg.pipeline.steps;
    let instances = read_manifest(manifest)?;
    let pair_of: BTreeMap<String, String> = instances
        .iter()
        .map(|i| (i.instance_id.clone(), i.pair_id.clone()))
        .collect();
    let pairs = read_pairs(&manifest_dir(manifest).join("pairs.jsonl"))?;
    let pair_by_id: BTreeMap<String, _> = pairs.iter().map(|p| (p.pair_id.clone(), p)).collect();
    let infos: BTreeMap<String, PairInfo> = pairs
        .iter()
        .map(|p| {
            let d = view_distance(&p.init, &p.target, &steps);
            (
                p.pair_id.clone(),
                PairInfo {
                    difficulty: p.difficulty,
                    d_pos: d.d_pos,
                    d_rot: d.d_rot,
                },
            )
        })
        .collect();
    let root = cfg.scene_root(scenes);
    let mut scene_map: BTreeMap<String, Scene> = BTreeMap::new();

    let rollouts = read_rollouts(logs)?;
    let mut outcomes = Vec::new();
    let mut turns = Vec::new();
    let mut factor_rows = Vec::new();
    let mut tracks = Vec::new();
    for log in &rollouts {
        let Some(ep) = episode_view(log) else { continue };
        let inst = instance_of_episode(ep.episode_id);
        let pair_id = pair_of
            .get(inst)
            .ok_or_else(|| anyhow!("episode {} does not match a manifest instance", ep.episode_id))?;
        let pair = pair_by_id.get(pair_id).ok_or_else(|| anyhow!("pair {pair_id} missing from pairs.jsonl"))?;
        outcomes.push((pair_id.clone(), ep.success));
        turns.push((ep.turns, ep.success));
        let vis = match &root {
            Some(r) => {
                if !scene_map.contains_key(ep.scene_id) {
                    scene_map.insert(ep.scene_id.to_string(), load_scene_by_id(r, ep.scene_id)?);
                }
                let s = &scene_map[ep.scene_id];
                let intr: &CameraIntrinsics = &cfg.render.intrinsics;
                Some((
                    visible_vertices(s, &pair.init, intr, &cfg.render.config),
                    visible_vertices(s, &pair.target, intr, &cfg.render.config),
                ))
            }
            None => None,
        };
        let f = viewplan_core::analysis::compute_factors(
            &ep.init,
            &ep.target,
            &steps,
            vis.as_ref().map(|(a, b)| (a.as_slice(), b.as_slice())),
        );
        factor_rows.push((ep.episode_id.to_string(), f, ep.success));
        tracks.push(PoseTrack {
            scene_id: ep.scene_id.to_string(),
            poses: ep.poses.clone(),
            target: ep.target,
        });
    }
    if outcomes.is_empty() {
        bail!("no completed episodes in the given logs");
    }
    fs::create_dir_all(out)?;
    let table = success_table(&outcomes, &infos, &BinEdges::default())?;
    fs::write(out.join("success_table.csv"), success_table_csv(&table))?;
    let summary = TaskSummary::from(&table);
    fs::write(out.join("summary.json"), serde_json::to_vec_pretty(&summary)?)?;
    fs::write(out.join("turns.csv"), turn_distribution_csv(&turn_distribution(&turns)))?;
    fs::write(out.join("factors.csv"), factors_csv(&factor_rows))?;
    let factors: Vec<_> = factor_rows.iter().map(|r| r.1).collect();
    let ys: Vec<f64> = factor_rows.iter().map(|r| f64::from(u8::from(r.2))).collect();
    let mut corr = String::from("factor,spearman,n\n");
    for (name, rho, n) in factor_correlations(&factors, &ys) {
        corr.push_str(&format!("{name},{},{n}\n", rho.map(|r| format!("{r:.6}")).unwrap_or_default()));
    }
    fs::write(out.join("correlations.csv"), corr)?;
    if !scene_map.is_empty() {
        let (scene_cov, target_cov) = coverage_curves(&tracks, &scene_map, &cfg.render.intrinsics, &cfg.render.config)?;
        fs::write(out.join("coverage.csv"), coverage_csv(&scene_cov, &target_cov))?;
        let series = |c: &[f64]| c.iter().enumerate().map(|(i, v)| (i as f64, *v)).collect::<Vec<_>>();
        write_plot(&out.join("coverage.png"), &[series(&scene_cov.mean), series(&target_cov.mean)])?;
    }
    println!("{}", serde_json::to_string(&summary)?);
    Ok(())
}
