//! Interactive view-planning episodes: the response grammar, turn stepping,
//! reward, protocol variants, rollout logs and two reference agents.

use std::fmt;
use std::io::{self, Write};
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::action::{apply_action, Action};
use crate::datagen::{pose_printout, TaskInstance, TaskPayload};
use crate::se3::{position_distance, rotation_distance, Pose, StepSizes, SUCCESS_SLACK};

/// Maximum actions accepted in one response.
pub const MAX_ACTIONS_PER_TURN: usize = 10;
pub const FORMAT_BONUS: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("expected exactly one <action> block, found {0}")]
    ActionBlockCount(usize),
    #[error("unknown action '{0}'")]
    UnknownAction(String),
    #[error("answer needs 6 numbers, got {0}")]
    AnswerArity(usize),
    #[error("answer component '{0}' is not a finite number")]
    BadNumber(String),
    #[error("empty action block")]
    Empty,
    #[error("too many actions in one turn: {0} (max {MAX_ACTIONS_PER_TURN})")]
    TooManyActions(usize),
    #[error("unexpected text outside the think/action blocks")]
    StrayText,
    #[error("unterminated or misplaced <think> block")]
    BadThink,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    Actions(Vec<Action>),
    Answer([f64; 6]),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentResponse {
    pub raw: String,
    pub think: Option<String>,
    pub command: Command,
}

fn strip_block<'a>(s: &'a str, tag: &str) -> Option<(&'a str, &'a str)> {
    let open = format!("<{tag}>");
    let close = format!("</{tag}>");
    let rest = s.strip_prefix(open.as_str())?;
    let end = rest.find(close.as_str())?;
    Some((&rest[..end], &rest[end + close.len()..]))
}

fn parse_answer(body: &str) -> Option<Result<[f64; 6], ParseError>> {
    let inner = body.strip_prefix("answer")?.trim_start();
    let inner = inner.strip_prefix('(')?.strip_suffix(')')?;
    let parts: Vec<&str> = inner.split(',').map(str::trim).collect();
    if parts.len() != 6 {
        return Some(Err(ParseError::AnswerArity(parts.len())));
    }
    let mut v = [0.0; 6];
    for (slot, p) in v.iter_mut().zip(&parts) {
        match f64::from_str(p) {
            Ok(x) if x.is_finite() => *slot = x,
            _ => return Some(Err(ParseError::BadNumber(p.to_string()))),
        }
    }
    Some(Ok(v))
}

/// Parses `[<think>…</think>] <action>a|b|…</action>` or
/// `<action>answer(tx, ty, tz, rx, ry, rz)</action>`.
pub fn parse_response(text: &str) -> Result<AgentResponse, ParseError> {
    let blocks = text.matches("<action>").count();
    if blocks != 1 || text.matches("</action>").count() != 1 {
        return Err(ParseError::ActionBlockCount(blocks));
    }
    let mut rest = text.trim();
    let mut think = None;
    if rest.starts_with("<think>") {
        let (t, r) = strip_block(rest, "think").ok_or(ParseError::BadThink)?;
        think = Some(t.to_string());
        rest = r.trim_start();
    } else if rest.contains("<think>") {
        return Err(ParseError::BadThink);
    }
    let (body, tail) = strip_block(rest, "action").ok_or(ParseError::StrayText)?;
    if !tail.trim().is_empty() {
        return Err(ParseError::StrayText);
    }
    let body = body.trim();
    let command = if let Some(ans) = parse_answer(body) {
        Command::Answer(ans?)
    } else {
        if body.is_empty() {
            return Err(ParseError::Empty);
        }
        let actions = body
            .split('|')
            .map(|tok| {
                let tok = tok.trim();
                tok.parse::<Action>()
                    .map_err(|_| ParseError::UnknownAction(tok.to_string()))
            })
            .collect::<Result<Vec<_>, _>>()?;
        if actions.len() > MAX_ACTIONS_PER_TURN {
            return Err(ParseError::TooManyActions(actions.len()));
        }
        Command::Actions(actions)
    };
    Ok(AgentResponse {
        raw: text.to_string(),
        think,
        command,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProtocolVariant {
    #[default]
    Default,
    NoSnap,
    NoSubmit,
}

impl fmt::Display for ProtocolVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ProtocolVariant::Default => "default",
            ProtocolVariant::NoSnap => "no_snap",
            ProtocolVariant::NoSubmit => "no_submit",
        })
    }
}

impl FromStr for ProtocolVariant {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "default" => Ok(Self::Default),
            "no_snap" | "nosnap" => Ok(Self::NoSnap),
            "no_submit" | "nosubmit" => Ok(Self::NoSubmit),
            other => Err(format!("unknown protocol variant '{other}'")),
        }
    }
}

/// What an episode needs from an IVP instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IvpTask {
    pub episode_id: String,
    pub scene_id: String,
    pub init: Pose,
    pub target: Pose,
    pub budget: u32,
    pub max_pos_m: f64,
    pub max_rot_deg: f64,
    pub steps: StepSizes,
    #[serde(default)]
    pub gt_actions: Vec<Action>,
}

impl IvpTask {
    /// `None` for non-IVP instances.
    pub fn from_instance(inst: &TaskInstance, steps: StepSizes) -> Option<Self> {
        match &inst.task {
            TaskPayload::Ivp {
                target_pose,
                gt_actions,
                budget,
                max_pos_m,
                max_rot_deg,
                ..
            } => Some(Self {
                episode_id: inst.instance_id.clone(),
                scene_id: inst.scene_id.clone(),
                init: inst.init_pose,
                target: *target_pose,
                budget: *budget,
                max_pos_m: *max_pos_m,
                max_rot_deg: *max_rot_deg,
                steps,
                gt_actions: gt_actions.clone(),
            }),
            _ => None,
        }
    }

    fn within(&self, p: &Pose) -> (bool, f64, f64) {
        let d_pos = position_distance(p, &self.target);
        let d_rot = rotation_distance(p, &self.target);
        let ok = d_pos <= self.max_pos_m + SUCCESS_SLACK && d_rot <= self.max_rot_deg + SUCCESS_SLACK;
        (ok, d_pos, d_rot)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Answered,
    ReachedTarget,
    BudgetExhausted,
    AgentFailure,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeOutcome {
    pub success: bool,
    pub d_pos: f64,
    pub d_rot: f64,
    pub reward: f64,
    pub format_ok: bool,
    pub turns: u32,
    pub termination: Termination,
}

fn reward(success: bool, format_ok: bool) -> f64 {
    let mut r = 0.0;
    if success {
        r += 1.0;
    }
    if format_ok {
        r += FORMAT_BONUS;
    }
    r
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TurnRecord {
    pub turn: u32,
    pub response: String,
    pub parsed: Result<Command, String>,
    /// Actions actually executed (a NoSubmit success can stop early).
    pub executed: Vec<Action>,
    pub pose: Pose,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EpisodeError {
    #[error("episode already terminated")]
    Terminal,
}

/// Observation after reset or a non-terminal turn.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub turn: u32,
    pub pose: Pose,
    pub budget_remaining: u32,
}

impl Observation {
    pub fn printout(&self) -> String {
        pose_printout(&self.pose)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum StepResult {
    Continue(Observation),
    Done(EpisodeOutcome),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeState {
    task: IvpTask,
    variant: ProtocolVariant,
    pose: Pose,
    turn: u32,
    history: Vec<TurnRecord>,
    outcome: Option<EpisodeOutcome>,
}

impl EpisodeState {
    /// A zero budget yields an already-terminal failed episode.
    pub fn new(task: IvpTask, variant: ProtocolVariant) -> Self {
        let mut s = Self {
            pose: task.init,
            task,
            variant,
            turn: 0,
            history: Vec::new(),
            outcome: None,
        };
        if s.task.budget == 0 {
            s.finish(false, &s.pose.clone(), false, Termination::BudgetExhausted);
        }
        s
    }

    pub fn task(&self) -> &IvpTask {
        &self.task
    }
    pub fn variant(&self) -> ProtocolVariant {
        self.variant
    }
    pub fn pose(&self) -> &Pose {
        &self.pose
    }
    pub fn turn(&self) -> u32 {
        self.turn
    }
    pub fn history(&self) -> &[TurnRecord] {
        &self.history
    }
    pub fn outcome(&self) -> Option<&EpisodeOutcome> {
        self.outcome.as_ref()
    }
    pub fn is_terminal(&self) -> bool {
        self.outcome.is_some()
    }

    pub fn observation(&self) -> Observation {
        Observation {
            turn: self.turn,
            pose: self.pose,
            budget_remaining: self.task.budget - self.turn,
        }
    }

    fn finish(&mut self, success: bool, scored: &Pose, format_ok: bool, termination: Termination) -> EpisodeOutcome {
        let (_, d_pos, d_rot) = self.task.within(scored);
        let out = EpisodeOutcome {
            success,
            d_pos,
            d_rot,
            reward: reward(success, format_ok),
            format_ok,
            turns: self.turn,
            termination,
        };
        self.outcome = Some(out.clone());
        out
    }

    /// Ends the episode as a failure without consuming a turn (agent crashed).
    pub fn abort(&mut self) -> EpisodeOutcome {
        if let Some(o) = &self.outcome {
            return o.clone();
        }
        let pose = self.pose;
        self.finish(false, &pose, false, Termination::AgentFailure)
    }

    pub fn step(&mut self, text: &str) -> Result<StepResult, EpisodeError> {
        if self.is_terminal() {
            return Err(EpisodeError::Terminal);
        }
        self.turn += 1;
        let parsed = parse_response(text);
        let format_ok = parsed.is_ok();
        let mut executed = Vec::new();
        let mut result = None;
        match &parsed {
            Ok(AgentResponse { command: Command::Actions(actions), .. }) => {
                let snap = self.variant != ProtocolVariant::NoSnap;
                for &a in actions {
                    self.pose = apply_action(&self.pose, a, &self.task.steps, snap);
                    executed.push(a);
                    if self.variant == ProtocolVariant::NoSubmit && self.task.within(&self.pose).0 {
                        let pose = self.pose;
                        result = Some(self.finish(true, &pose, format_ok, Termination::ReachedTarget));
                        break;
                    }
                }
            }
            Ok(AgentResponse { command: Command::Answer(v), .. }) => {
                let answer = Pose::from_vec6(v).expect("parser admits only finite numbers");
                let (ok, _, _) = self.task.within(&answer);
                result = Some(self.finish(ok, &answer, format_ok, Termination::Answered));
            }
            Err(_) => {}
        }
        self.history.push(TurnRecord {
            turn: self.turn,
            response: text.to_string(),
            parsed: parsed.map(|r| r.command).map_err(|e| e.to_string()),
            executed,
            pose: self.pose,
        });
        if result.is_none() && self.turn >= self.task.budget {
            let pose = self.pose;
            result = Some(self.finish(false, &pose, format_ok, Termination::BudgetExhausted));
        }
        Ok(match result {
            Some(o) => StepResult::Done(o),
            None => StepResult::Continue(self.observation()),
        })
    }

    /// Re-applies the logged actions from the initial pose.
    pub fn replay_pose(&self) -> Pose {
        let snap = self.variant != ProtocolVariant::NoSnap;
        self.history
            .iter()
            .flat_map(|t| t.executed.iter())
            .fold(self.task.init, |p, &a| apply_action(&p, a, &self.task.steps, snap))
    }
}

/// A policy: maps an observation to raw response text.
pub trait Agent {
    fn respond(&mut self, task: &IvpTask, obs: &Observation) -> Result<String, String>;
}

impl<F> Agent for F
where
    F: FnMut(&IvpTask, &Observation) -> Result<String, String>,
{
    fn respond(&mut self, task: &IvpTask, obs: &Observation) -> Result<String, String> {
        self(task, obs)
    }
}

/// One JSONL record of a rollout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LogRecord {
    Turn {
        episode_id: String,
        scene_id: String,
        variant: ProtocolVariant,
        turn: u32,
        request_images: Vec<String>,
        response: String,
        parsed: Option<Command>,
        parse_error: Option<String>,
        executed: Vec<Action>,
        pose: Pose,
    },
    Outcome {
        episode_id: String,
        scene_id: String,
        variant: ProtocolVariant,
        init_pose: Pose,
        target_pose: Pose,
        #[serde(flatten)]
        outcome: EpisodeOutcome,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolloutLog {
    pub records: Vec<LogRecord>,
}

impl RolloutLog {
    pub fn from_state(state: &EpisodeState, image_ids: &dyn Fn(u32) -> Vec<String>) -> Self {
        let t = state.task();
        let mut records: Vec<LogRecord> = state
            .history()
            .iter()
            .map(|r| LogRecord::Turn {
                episode_id: t.episode_id.clone(),
                scene_id: t.scene_id.clone(),
                variant: state.variant(),
                turn: r.turn,
                request_images: image_ids(r.turn - 1),
                response: r.response.clone(),
                parsed: r.parsed.as_ref().ok().cloned(),
                parse_error: r.parsed.as_ref().err().cloned(),
                executed: r.executed.clone(),
                pose: r.pose,
            })
            .collect();
        if let Some(o) = state.outcome() {
            records.push(LogRecord::Outcome {
                episode_id: t.episode_id.clone(),
                scene_id: t.scene_id.clone(),
                variant: state.variant(),
                init_pose: t.init,
                target_pose: t.target,
                outcome: o.clone(),
            });
        }
        Self { records }
    }

    pub fn outcome(&self) -> Option<&EpisodeOutcome> {
        self.records.iter().rev().find_map(|r| match r {
            LogRecord::Outcome { outcome, .. } => Some(outcome),
            _ => None,
        })
    }

    /// Raw responses in turn order, for replaying under another variant.
    pub fn responses(&self) -> Vec<String> {
        self.records
            .iter()
            .filter_map(|r| match r {
                LogRecord::Turn { response, .. } => Some(response.clone()),
                _ => None,
            })
            .collect()
    }

    pub fn write_jsonl<W: Write>(&self, mut w: W) -> io::Result<()> {
        for r in &self.records {
            serde_json::to_writer(&mut w, r)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }
}

fn default_image_ids(task: &IvpTask) -> impl Fn(u32) -> Vec<String> + '_ {
    move |turn| {
        let mut ids = vec![format!("{}/turn{turn}", task.episode_id)];
        if turn == 0 {
            ids.push(format!("{}/target", task.episode_id));
            ids.push(format!("{}/topdown", task.scene_id));
        }
        ids
    }
}

/// Drives an episode to termination.
pub fn run_episode<A: Agent + ?Sized>(task: IvpTask, agent: &mut A, variant: ProtocolVariant) -> (EpisodeState, RolloutLog) {
    let mut state = EpisodeState::new(task, variant);
    let mut obs = state.observation();
    while !state.is_terminal() {
        match agent.respond(state.task(), &obs) {
            Ok(text) => match state.step(&text).expect("non-terminal") {
                StepResult::Continue(o) => obs = o,
                StepResult::Done(_) => break,
            },
            Err(e) => {
                log::warn!("agent failed in episode {}: {e}", state.task().episode_id);
                state.abort();
            }
        }
    }
    let log = RolloutLog::from_state(&state, &default_image_ids(state.task()));
    (state, log)
}

/// Replays fixed responses; after they run out it repeats a malformed turn.
pub fn replay_responses(task: IvpTask, responses: &[String], variant: ProtocolVariant) -> (EpisodeState, RolloutLog) {
    let mut i = 0;
    let mut agent = |_: &IvpTask, _: &Observation| {
        let r = responses.get(i).cloned().unwrap_or_default();
        i += 1;
        Ok(r)
    };
    run_episode(task, &mut agent, variant)
}

pub fn format_actions(actions: &[Action]) -> String {
    let names: Vec<&str> = actions.iter().map(|a| a.name()).collect();
    format!("<action>{}</action>", names.join("|"))
}

/// Round-trip-exact answer text for a pose.
pub fn format_answer(p: &Pose) -> String {
    let v = p.to_vec6();
    format!(
        "<action>answer({}, {}, {}, {}, {}, {})</action>",
        v[0], v[1], v[2], v[3], v[4], v[5]
    )
}

/// Replays the ground-truth actions (in chunks of the per-turn cap), then
/// answers its own pose.
#[derive(Debug, Default)]
pub struct OracleAgent {
    cursor: usize,
}

impl Agent for OracleAgent {
    fn respond(&mut self, task: &IvpTask, obs: &Observation) -> Result<String, String> {
        if self.cursor < task.gt_actions.len() && obs.budget_remaining > 1 {
            let end = (self.cursor + MAX_ACTIONS_PER_TURN).min(task.gt_actions.len());
            let chunk = &task.gt_actions[self.cursor..end];
            self.cursor = end;
            return Ok(format!("<think>replay</think>{}", format_actions(chunk)));
        }
        Ok(format_answer(&obs.pose))
    }
}

/// Emits 1–3 uniformly random actions per turn and answers its current pose
/// on the last turn.
pub struct RandomAgent<R: Rng> {
    rng: R,
}

impl<R: Rng> RandomAgent<R> {
    pub fn new(rng: R) -> Self {
        Self { rng }
    }
}

impl<R: Rng> Agent for RandomAgent<R> {
    fn respond(&mut self, _task: &IvpTask, obs: &Observation) -> Result<String, String> {
        if obs.budget_remaining <= 1 {
            return Ok(format_answer(&obs.pose));
        }
        let n = self.rng.gen_range(1..=3);
        let acts: Vec<Action> = (0..n)
            .map(|_| Action::ALL[self.rng.gen_range(0..Action::ALL.len())])
            .collect();
        Ok(format_actions(&acts))
    }
}
