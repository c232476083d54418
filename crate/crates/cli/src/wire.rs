//! JSON-lines episode protocol.
//!
//! Client → server: `reset`, `act`. Server → client: `observation`,
//! `result`, `error`. Every message is one JSON object on one line with a
//! `type` tag.

use std::collections::BTreeMap;
use std::fs;
use std::io::{self, BufRead, BufWriter, Write};
use std::net::{TcpListener, TcpStream};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use base64::Engine;
use serde::{Deserialize, Serialize};
use viewplan_core::datagen::{RenderSetup, TaskInstance};
use viewplan_core::episode::{EpisodeOutcome, EpisodeState, IvpTask, ProtocolVariant, RolloutLog, StepResult};
use viewplan_core::render::{topdown_pose, RenderedView};
use viewplan_core::scene::Scene;
use viewplan_core::se3::{Pose, StepSizes};

use crate::config::load_scene_by_id;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ClientMessage {
    /// Starts an episode from a manifest id or an inline IVP instance.
    Reset {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        instance_id: Option<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        instance: Option<Box<TaskInstance>>,
    },
    Act {
        episode_id: String,
        response: String,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImageRole {
    Current,
    Target,
    Topdown,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireImage {
    /// Content hash of the image; equal ids mean equal bytes.
    pub id: String,
    pub role: ImageRole,
    pub png_base64: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCode {
    BadJson,
    BadMessage,
    NoEpisode,
    EpisodeMismatch,
    UnknownInstance,
    UnknownScene,
    NotIvp,
    Internal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerMessage {
    Observation {
        episode_id: String,
        turn: u32,
        /// `[tx, ty, tz, rx, ry, rz]`, meters and degrees.
        pose: [f64; 6],
        budget_remaining: u32,
        images: Vec<WireImage>,
    },
    Result {
        episode_id: String,
        #[serde(flatten)]
        outcome: EpisodeOutcome,
    },
    Error {
        code: ErrorCode,
        detail: String,
    },
}

impl ServerMessage {
    fn error(code: ErrorCode, detail: impl Into<String>) -> Self {
        ServerMessage::Error {
            code,
            detail: detail.into(),
        }
    }

    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("server messages serialize")
    }
}

/// State shared read-only by all connections, plus the scene cache.
pub struct Shared {
    pub instances: BTreeMap<String, TaskInstance>,
    pub scene_root: Option<PathBuf>,
    pub render: RenderSetup,
    pub steps: StepSizes,
    pub variant: ProtocolVariant,
    pub log_dir: Option<PathBuf>,
    scenes: Mutex<BTreeMap<String, Arc<Scene>>>,
}

impl Shared {
    pub fn new(
        instances: impl IntoIterator<Item = TaskInstance>,
        scene_root: Option<PathBuf>,
        render: RenderSetup,
        steps: StepSizes,
        variant: ProtocolVariant,
        log_dir: Option<PathBuf>,
    ) -> Self {
        Self {
            instances: instances.into_iter().map(|i| (i.instance_id.clone(), i)).collect(),
            scene_root,
            render,
            steps,
            variant,
            log_dir,
            scenes: Mutex::new(BTreeMap::new()),
        }
    }

    /// Registers an in-memory scene (used instead of the scene root).
    pub fn insert_scene(&self, scene: Scene) {
        self.scenes
            .lock()
            .expect("scene cache poisoned")
            .insert(scene.id().to_string(), Arc::new(scene));
    }

    fn scene(&self, id: &str) -> Result<Arc<Scene>, String> {
        let mut cache = self.scenes.lock().map_err(|_| "scene cache poisoned".to_string())?;
        if let Some(s) = cache.get(id) {
            return Ok(Arc::clone(s));
        }
        let root = self.scene_root.as_ref().ok_or_else(|| format!("scene {id} not loaded and no scene root"))?;
        let s = Arc::new(load_scene_by_id(root, id).map_err(|e| format!("{e:#}"))?);
        cache.insert(id.to_string(), Arc::clone(&s));
        Ok(s)
    }
}

struct Live {
    state: EpisodeState,
    scene: Arc<Scene>,
    /// Image ids sent with each observation, by turn.
    sent: Vec<Vec<String>>,
    seq: u64,
}

/// One connection: at most one episode in flight.
pub struct Session<'a> {
    shared: &'a Shared,
    conn: u64,
    episodes: u64,
    live: Option<Live>,
}

impl<'a> Session<'a> {
    pub fn new(shared: &'a Shared, conn: u64) -> Self {
        Self {
            shared,
            conn,
            episodes: 0,
            live: None,
        }
    }

    /// Handles one input line and returns the reply. Panics inside a handler
    /// drop the current episode and answer with an internal error.
    pub fn handle_line(&mut self, line: &str) -> ServerMessage {
        let msg: ClientMessage = match serde_json::from_str::<serde_json::Value>(line) {
            Err(e) => return ServerMessage::error(ErrorCode::BadJson, e.to_string()),
            Ok(v) => match serde_json::from_value(v) {
                Ok(m) => m,
                Err(e) => return ServerMessage::error(ErrorCode::BadMessage, e.to_string()),
            },
        };
        match catch_unwind(AssertUnwindSafe(|| self.handle(msg))) {
            Ok(reply) => reply,
            Err(_) => {
                self.live = None;
                ServerMessage::error(ErrorCode::Internal, "episode handler panicked; episode dropped")
            }
        }
    }

    fn handle(&mut self, msg: ClientMessage) -> ServerMessage {
        match msg {
            ClientMessage::Reset { instance_id, instance } => self.reset(instance_id, instance),
            ClientMessage::Act { episode_id, response } => self.act(&episode_id, &response),
        }
    }

    fn reset(&mut self, id: Option<String>, inline: Option<Box<TaskInstance>>) -> ServerMessage {
        let inst = match (id, inline) {
            (Some(id), None) => match self.shared.instances.get(&id) {
                Some(i) => i.clone(),
                None => return ServerMessage::error(ErrorCode::UnknownInstance, format!("no instance '{id}'")),
            },
            (None, Some(i)) => *i,
            _ => {
                return ServerMessage::error(ErrorCode::BadMessage, "reset needs exactly one of instance_id, instance")
            }
        };
        let Some(mut task) = IvpTask::from_instance(&inst, self.shared.steps) else {
            return ServerMessage::error(ErrorCode::NotIvp, format!("instance '{}' is not an IVP task", inst.instance_id));
        };
        let scene = match self.shared.scene(&task.scene_id) {
            Ok(s) => s,
            Err(e) => return ServerMessage::error(ErrorCode::UnknownScene, e),
        };
        if let Some(old) = self.live.take() {
            log::info!("episode {} abandoned by reset", old.state.task().episode_id);
            self.finish(old, true);
        }
        self.episodes += 1;
        task.episode_id = format!("{}#{}", inst.instance_id, self.episodes);
        let mut live = Live {
            state: EpisodeState::new(task, self.shared.variant),
            scene,
            sent: Vec::new(),
            seq: self.episodes,
        };
        if live.state.is_terminal() {
            let reply = result_message(&live.state);
            self.finish(live, false);
            return reply;
        }
        let reply = self.observe(&mut live);
        self.live = Some(live);
        reply
    }

    fn act(&mut self, episode_id: &str, response: &str) -> ServerMessage {
        let Some(live) = self.live.as_mut() else {
            return ServerMessage::error(ErrorCode::NoEpisode, "act without an active episode; send reset first");
        };
        if live.state.task().episode_id != episode_id {
            return ServerMessage::error(
                ErrorCode::EpisodeMismatch,
                format!("active episode is '{}'", live.state.task().episode_id),
            );
        }
        match live.state.step(response) {
            Ok(StepResult::Continue(_)) => {
                let mut live = self.live.take().expect("checked above");
                let reply = self.observe(&mut live);
                self.live = Some(live);
                reply
            }
            Ok(StepResult::Done(_)) => {
                let live = self.live.take().expect("checked above");
                let reply = result_message(&live.state);
                self.finish(live, false);
                reply
            }
            Err(e) => ServerMessage::error(ErrorCode::NoEpisode, e.to_string()),
        }
    }

    fn observe(&self, live: &mut Live) -> ServerMessage {
        let obs = live.state.observation();
        let task = live.state.task();
        let mut images = vec![wire_image(&self.shared.render.render(&live.scene, &obs.pose), ImageRole::Current)];
        if obs.turn == 0 {
            images.push(wire_image(&self.shared.render.render(&live.scene, &task.target), ImageRole::Target));
            let top = topdown_pose(&live.scene, &self.shared.render.intrinsics);
            images.push(wire_image(&self.shared.render.render(&live.scene, &top), ImageRole::Topdown));
        }
        live.sent.push(images.iter().map(|i| i.id.clone()).collect());
        ServerMessage::Observation {
            episode_id: task.episode_id.clone(),
            turn: obs.turn,
            pose: obs.pose.to_vec6(),
            budget_remaining: obs.budget_remaining,
            images,
        }
    }

    fn finish(&self, mut live: Live, abandoned: bool) {
        if abandoned && !live.state.is_terminal() {
            live.state.abort();
        }
        let Some(dir) = &self.shared.log_dir else { return };
        let sent = live.sent.clone();
        let log = RolloutLog::from_state(&live.state, &|turn| sent.get(turn as usize).cloned().unwrap_or_default());
        let path = dir.join(format!("conn{:04}_ep{:04}.jsonl", self.conn, live.seq));
        let write = || -> io::Result<()> {
            fs::create_dir_all(dir)?;
            let mut w = BufWriter::new(fs::File::create(&path)?);
            log.write_jsonl(&mut w)?;
            w.flush()
        };
        if let Err(e) = write() {
            log::error!("writing rollout log {}: {e}", path.display());
        }
    }
}

impl Drop for Session<'_> {
    fn drop(&mut self) {
        if let Some(live) = self.live.take() {
            self.finish(live, true);
        }
    }
}

fn result_message(state: &EpisodeState) -> ServerMessage {
    ServerMessage::Result {
        episode_id: state.task().episode_id.clone(),
        outcome: state.outcome().cloned().expect("terminal episode has an outcome"),
    }
}

fn wire_image(view: &RenderedView, role: ImageRole) -> WireImage {
    let png = view.to_png().expect("rendered views encode");
    WireImage {
        id: view.content_hash(),
        role,
        png_base64: base64::engine::general_purpose::STANDARD.encode(png),
    }
}

/// Runs one session over a line-oriented reader/writer pair until EOF.
pub fn serve_stream<R: BufRead, W: Write>(shared: &Shared, conn: u64, reader: R, mut writer: W) -> io::Result<()> {
    let mut session = Session::new(shared, conn);
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let reply = session.handle_line(&line);
        writeln!(writer, "{}", reply.to_line())?;
        writer.flush()?;
    }
    Ok(())
}

pub fn serve_stdio(shared: &Shared) -> io::Result<()> {
    let stdin = io::stdin();
    let stdout = io::stdout();
    serve_stream(shared, 0, stdin.lock(), stdout.lock())
}

/// Accepts connections forever (or until `max_connections`), one thread per
/// connection.
pub fn serve_tcp(shared: Arc<Shared>, listener: TcpListener, max_connections: Option<u64>) -> io::Result<()> {
    let mut handles = Vec::new();
    for (conn, stream) in listener.incoming().enumerate() {
        let conn = conn as u64 + 1;
        let stream: TcpStream = stream?;
        let shared = Arc::clone(&shared);
        handles.push(std::thread::spawn(move || {
            let peer = stream.peer_addr().map(|a| a.to_string()).unwrap_or_default();
            let reader = match stream.try_clone() {
                Ok(s) => io::BufReader::new(s),
                Err(e) => {
                    log::error!("connection {conn}: {e}");
                    return;
                }
            };
            if let Err(e) = serve_stream(&shared, conn, reader, &stream) {
                log::warn!("connection {conn} ({peer}) closed: {e}");
            }
        }));
        if max_connections.is_some_and(|m| conn >= m) {
            break;
        }
    }
    for h in handles {
        let _ = h.join();
    }
    Ok(())
}

/// Parses a pose given as six comma- or space-separated numbers.
pub fn parse_pose(s: &str) -> Result<Pose, String> {
    let v: Vec<f64> = s
        .trim()
        .trim_start_matches('[')
        .trim_end_matches(']')
        .split(|c: char| c == ',' || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<f64>().map_err(|e| format!("'{t}': {e}")))
        .collect::<Result<_, _>>()?;
    Pose::from_vec6(&v).map_err(|e| e.to_string())
}
