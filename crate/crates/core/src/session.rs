//! Interactive steering sessions and their JSON wire protocol.
//!
//! A session owns a dictionary, a posterior searcher and a simulated swarm.
//! It alternates between waiting for one binary input and letting the swarm
//! settle on the next guess:
//!
//! ```text
//! swarm_settling -> awaiting_input -> swarm_settling -> ... -> converged | timed_out
//! ```
//!
//! Inputs are accepted only while `awaiting_input`. Every accepted input is
//! exactly one posterior update and one entry in the session record.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::{corrupt, ErrorProfile};
use crate::codec::{
    ideal_input, Algorithm, Bit, CodecError, Outcome, PosteriorState, Searcher, Stop, StoppingRule,
};
use crate::dictionary::{ArenaSpec, DictionaryError, DictionarySpec, PolygonSpec};
use crate::harness::{DictionarySource, HarnessError, StopMode, ThresholdTable};
use crate::metrics::{InputStep, TrialRecord};
use crate::rng::{trial_stream, Stream, TrialRng};
use crate::swarm::broadcast::{BroadcastConfig, Broadcaster};
use crate::swarm::{DensityField, RobotPose, SwarmError, SwarmParams, SwarmState};

pub const PROTOCOL_VERSION: u32 = 1;
/// Posteriors over larger dictionaries are sent as a top-k summary.
pub const FULL_POSTERIOR_LIMIT: usize = 200;
pub const TOP_K: usize = 10;

#[derive(Debug, Error)]
pub enum SessionError {
    #[error("input not accepted while {0}")]
    WrongPhase(Phase),
    #[error("input must be 0 or 1, got {0}")]
    NonBinary(i64),
    #[error("session mode {0:?} has no scripted user")]
    NotScripted(SessionMode),
    #[error("invalid session config: {0}")]
    Config(String),
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Dictionary(#[from] DictionaryError),
    #[error(transparent)]
    Swarm(#[from] SwarmError),
    #[error(transparent)]
    Harness(#[from] HarnessError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SessionMode {
    /// Inputs come from a client.
    Human,
    /// A scripted user answers every guess correctly.
    ScriptedIdeal,
    /// A scripted user whose correct answers pass through the error profile.
    ScriptedWithChannel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    AwaitingInput,
    SwarmSettling,
    Converged,
    TimedOut,
}

impl Phase {
    pub fn is_terminal(self) -> bool {
        matches!(self, Phase::Converged | Phase::TimedOut)
    }

    pub fn label(self) -> &'static str {
        match self {
            Phase::AwaitingInput => "awaiting_input",
            Phase::SwarmSettling => "swarm_settling",
            Phase::Converged => "converged",
            Phase::TimedOut => "timed_out",
        }
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Server-side timing. None of it affects session state, only when the
/// server drives it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Pacing {
    /// Wall-clock interval between swarm ticks.
    pub tick_ms: u64,
    /// Control steps advanced per tick.
    pub steps_per_tick: usize,
    /// Delay before a scripted user answers an input request.
    pub input_delay_ms: u64,
}

impl Default for Pacing {
    fn default() -> Self {
        Self {
            tick_ms: 50,
            steps_per_tick: 20,
            input_delay_ms: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SessionConfig {
    pub dictionary: DictionarySource,
    pub algorithm: Algorithm,
    pub assumed_p: f64,
    pub stopping: StopMode,
    /// Needed when `stopping` is a table lookup.
    pub threshold_table: Option<PathBuf>,
    pub max_inputs: usize,
    pub mode: SessionMode,
    /// Practice target. Scripted sessions draw one from the seed if absent.
    pub target: Option<usize>,
    /// Error profile of the scripted-with-channel user.
    pub error: ErrorProfile,
    pub swarm: SwarmParams,
    /// Control steps after which a guess counts as settled regardless of speed.
    pub max_settle_steps: usize,
    pub seed: u64,
    /// Let the server play scripted sessions without client inputs.
    pub autoplay: bool,
    pub pacing: Pacing,
    pub broadcast: BroadcastConfig,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            dictionary: DictionarySource::Swarm,
            algorithm: Algorithm::PosteriorMatching,
            assumed_p: 0.218,
            stopping: StopMode::Threshold { tau: 0.95 },
            threshold_table: None,
            max_inputs: StoppingRule::DEFAULT_MAX_INPUTS,
            mode: SessionMode::Human,
            target: None,
            error: ErrorProfile::Fixed { p: 0.218 },
            swarm: SwarmParams::default(),
            max_settle_steps: 5000,
            seed: 1,
            autoplay: false,
            pacing: Pacing::default(),
            broadcast: BroadcastConfig::default(),
        }
    }
}

impl SessionConfig {
    pub fn from_json(text: &str) -> Result<Self, SessionError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, SessionError> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    fn tau(&self) -> Result<f64, SessionError> {
        match self.stopping {
            StopMode::Threshold { tau } => Ok(tau),
            StopMode::Disabled => Ok(1.0),
            StopMode::Table { budget } => {
                let path = self.threshold_table.as_ref().ok_or_else(|| {
                    SessionError::Config("table stopping needs threshold_table".into())
                })?;
                Ok(ThresholdTable::load(path)?.lookup(self.assumed_p, budget)?)
            }
        }
    }
}

/// One accepted input.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SessionStep {
    pub k: usize,
    pub guess: usize,
    pub y: Bit,
    /// Correct input, known when the session has a target.
    pub x: Option<Bit>,
    pub map: usize,
}

/// A polygon with its vertices spelled out for clients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolygonView {
    pub center: [f64; 2],
    pub n_sides: usize,
    pub radius: f64,
    pub vertices: Vec<[f64; 2]>,
}

impl From<PolygonSpec> for PolygonView {
    fn from(p: PolygonSpec) -> Self {
        Self {
            center: p.center,
            n_sides: p.n_sides,
            radius: p.radius,
            vertices: p.vertices(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PosteriorView {
    /// `alpha[j - 1]` is the mass on string `j`.
    Full { alpha: Vec<f64> },
    /// The `TOP_K` largest entries as `(j, mass)`, descending, and the mass
    /// on everything else.
    TopK {
        entries: Vec<(usize, f64)>,
        rest: f64,
    },
}

impl PosteriorView {
    pub fn of(alpha: &[f64]) -> Self {
        if alpha.len() <= FULL_POSTERIOR_LIMIT {
            return PosteriorView::Full {
                alpha: alpha.to_vec(),
            };
        }
        let mut idx: Vec<usize> = (0..alpha.len()).collect();
        idx.sort_by(|&a, &b| alpha[b].total_cmp(&alpha[a]).then(a.cmp(&b)));
        let entries: Vec<(usize, f64)> = idx[..TOP_K].iter().map(|&i| (i + 1, alpha[i])).collect();
        let top: f64 = entries.iter().map(|e| e.1).sum();
        PosteriorView::TopK {
            entries,
            rest: (1.0 - top).max(0.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub session: String,
    pub phase: Phase,
    pub mode: SessionMode,
    /// Inputs accepted so far.
    pub k: usize,
    pub max_inputs: usize,
    pub n_d: usize,
    /// Configuration the swarm is forming: the presented guess during the
    /// trial, the final estimate once it has stopped.
    pub guess: usize,
    pub guess_string: Vec<usize>,
    pub guess_polygon: PolygonView,
    pub map: usize,
    pub posterior: PosteriorView,
    pub robots: Vec<RobotPose>,
    pub arena: ArenaSpec,
    pub target: Option<usize>,
    pub target_polygon: Option<PolygonView>,
    /// Final estimate `j*` once stopped.
    pub estimate: Option<usize>,
}

/// Server to client.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerMessage {
    Snapshot(Box<Snapshot>),
    /// Input `k` was accepted; `guess` is the next configuration.
    Ack {
        k: usize,
        y: Bit,
        guess: usize,
    },
    /// The swarm has settled and input `k + 1` may be given.
    InputRequest {
        k: usize,
    },
    /// The trial stopped, by threshold (`converged`) or by the input cap
    /// (`timeout`).
    Converged {
        j_star: usize,
        k_star: usize,
        outcome: Outcome,
        correct: Option<bool>,
    },
    Error {
        reason: String,
    },
}

/// Client to server.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ClientMessage {
    /// `y = 1` for "at or after the guess" (right), `0` for "before" (left).
    Input { y: i64 },
    /// Ask for a fresh snapshot.
    Snapshot,
    /// Scripted sessions only: play to the end.
    Autoplay,
}

/// Every message on the wire carries the protocol version `v`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelope<T> {
    pub v: u32,
    #[serde(flatten)]
    pub msg: T,
}

impl<T> Envelope<T> {
    pub fn new(msg: T) -> Self {
        Self {
            v: PROTOCOL_VERSION,
            msg,
        }
    }
}

/// One line of a session's JSONL log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum LogLine {
    Start {
        session: String,
        config: Box<SessionConfig>,
        target: Option<usize>,
        tau: f64,
    },
    Input(SessionStep),
    End {
        j_star: usize,
        k_star: usize,
        outcome: Outcome,
    },
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TickReport {
    pub steps: usize,
    /// Locational cost before each step taken.
    pub costs: Vec<f64>,
    pub events: Vec<ServerMessage>,
}

#[derive(Debug)]
pub struct Session {
    id: String,
    config: SessionConfig,
    dict: DictionarySpec,
    search: Searcher,
    rule: StoppingRule,
    swarm: SwarmState,
    phase: Phase,
    target: Option<usize>,
    steps: Vec<SessionStep>,
    stop: Option<Stop>,
    displayed: usize,
    settle_steps: usize,
    channel_rng: TrialRng,
    broadcaster: Broadcaster,
}

impl Session {
    /// Uniform posterior, swarm at seeded random poses, first guess installed
    /// as the coverage density. Starts in `swarm_settling`.
    pub fn new(id: impl Into<String>, config: SessionConfig) -> Result<Self, SessionError> {
        let dict = config.dictionary.resolve()?;
        let n_d = dict.size();
        dict.index_polygon(1).map_err(|e| {
            SessionError::Config(format!("dictionary does not describe polygons: {e}"))
        })?;
        if config.max_inputs == 0 {
            return Err(SessionError::Config("max_inputs must be positive".into()));
        }
        if config.max_settle_steps == 0 {
            return Err(SessionError::Config(
                "max_settle_steps must be positive".into(),
            ));
        }
        if let Some(t) = config.target {
            if t == 0 || t > n_d {
                return Err(SessionError::Config(format!(
                    "target {t} outside 1..={n_d}"
                )));
            }
        }
        if let ErrorProfile::Fixed { p } = config.error {
            if !(0.0..=0.5).contains(&p) {
                return Err(SessionError::Config(format!(
                    "error crossover {p} outside [0, 0.5]"
                )));
            }
        }
        config.swarm.validate()?;
        let rule = StoppingRule::new(config.tau()?, config.max_inputs)?;

        let seed = config.seed;
        let target = match (config.target, config.mode) {
            (Some(t), _) => Some(t),
            (None, SessionMode::Human) => None,
            (None, _) => Some(trial_stream(seed, 0, Stream::Target).random_range(1..=n_d)),
        };
        let posterior =
            PosteriorState::new(n_d, config.assumed_p, trial_stream(seed, 0, Stream::Guess))?;
        let search = Searcher::new(posterior, config.algorithm);
        let first = search.guess();
        let density = Self::density_for(&dict, &config.swarm, first)?;
        let swarm = SwarmState::random(
            density,
            config.swarm,
            &mut trial_stream(seed, 0, Stream::Swarm),
        )?;
        let mut broadcaster = Broadcaster::new(&config.broadcast)?;
        broadcaster.send(&swarm.density.gmm)?;
        Ok(Self {
            id: id.into(),
            dict,
            search,
            rule,
            swarm,
            phase: Phase::SwarmSettling,
            target,
            steps: Vec::new(),
            stop: None,
            displayed: first,
            settle_steps: 0,
            channel_rng: trial_stream(seed, 0, Stream::Channel),
            broadcaster,
            config,
        })
    }

    fn density_for(
        dict: &DictionarySpec,
        params: &SwarmParams,
        j: usize,
    ) -> Result<DensityField, SessionError> {
        let poly = dict.index_polygon(j)?;
        Ok(DensityField::from_polygon(
            &poly,
            &dict.arena,
            params.grid_x,
            params.grid_y,
            params.density_floor,
        )?)
    }

    /// Show configuration `j`. Re-showing a settled configuration is a no-op.
    fn display(&mut self, j: usize) -> Result<(), SessionError> {
        self.settle_steps = 0;
        if j == self.displayed && self.swarm.settled() {
            return Ok(());
        }
        let density = Self::density_for(&self.dict, &self.config.swarm, j)?;
        self.broadcaster.send(&density.gmm)?;
        self.swarm.set_density(density);
        self.displayed = j;
        Ok(())
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn config(&self) -> &SessionConfig {
        &self.config
    }

    pub fn dictionary(&self) -> &DictionarySpec {
        &self.dict
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn mode(&self) -> SessionMode {
        self.config.mode
    }

    pub fn target(&self) -> Option<usize> {
        self.target
    }

    pub fn inputs(&self) -> usize {
        self.steps.len()
    }

    pub fn steps(&self) -> &[SessionStep] {
        &self.steps
    }

    pub fn posterior(&self) -> &[f64] {
        self.search.posterior().alpha()
    }

    pub fn guess(&self) -> usize {
        self.search.guess()
    }

    pub fn tau(&self) -> f64 {
        self.rule.tau
    }

    pub fn stop(&self) -> Option<Stop> {
        self.stop
    }

    pub fn swarm(&self) -> &SwarmState {
        &self.swarm
    }

    /// Accept a raw wire payload.
    pub fn submit_raw(&mut self, y: i64) -> Result<Vec<ServerMessage>, SessionError> {
        let bit = match y {
            0 => Bit::Zero,
            1 => Bit::One,
            other => return Err(SessionError::NonBinary(other)),
        };
        self.submit_input(bit)
    }

    /// Absorb `y` as the answer to the current guess. Rejected, with no state
    /// change, outside `awaiting_input`.
    pub fn submit_input(&mut self, y: Bit) -> Result<Vec<ServerMessage>, SessionError> {
        if self.phase != Phase::AwaitingInput {
            return Err(SessionError::WrongPhase(self.phase));
        }
        let guess = self.search.guess();
        let next = self.search.observe(y)?;
        let post = self.search.posterior();
        let k = post.inputs();
        self.steps.push(SessionStep {
            k,
            guess,
            y,
            x: self.target.map(|t| ideal_input(t, guess)),
            map: post.map_estimate(),
        });
        let mut events = vec![ServerMessage::Ack { k, y, guess: next }];
        match post.check_stopped(&self.rule) {
            Some(stop) => {
                self.stop = Some(stop);
                self.phase = match stop.outcome {
                    Outcome::Converged => Phase::Converged,
                    Outcome::Timeout => Phase::TimedOut,
                };
                self.display(stop.estimate)?;
                events.push(ServerMessage::Converged {
                    j_star: stop.estimate,
                    k_star: stop.inputs,
                    outcome: stop.outcome,
                    correct: self.target.map(|t| t == stop.estimate),
                });
            }
            None => {
                self.phase = Phase::SwarmSettling;
                self.display(next)?;
            }
        }
        Ok(events)
    }

    /// The scripted user's answer to the current guess, drawing channel noise
    /// when the mode has a channel. `None` for human sessions.
    pub fn scripted_input(&mut self) -> Option<Bit> {
        let target = self.target?;
        let x = ideal_input(target, self.search.guess());
        match self.config.mode {
            SessionMode::Human => None,
            SessionMode::ScriptedIdeal => Some(x),
            SessionMode::ScriptedWithChannel => Some(corrupt(
                x,
                self.steps.len() + 1,
                &self.config.error,
                &mut self.channel_rng,
            )),
        }
    }

    /// Advance the swarm by `dt` seconds of control time.
    pub fn tick(&mut self, dt: f64) -> Result<TickReport, SessionError> {
        let steps = (dt / self.config.swarm.dt).round().max(1.0) as usize;
        self.tick_steps(steps)
    }

    /// Run up to `n` control steps while the swarm is unsettled. Once it
    /// settles, or the settle budget runs out, a settling session flips to
    /// `awaiting_input` and requests the next input. A no-op while awaiting
    /// input; after the trial stops the swarm keeps moving to the estimate.
    pub fn tick_steps(&mut self, n: usize) -> Result<TickReport, SessionError> {
        let mut report = TickReport::default();
        if self.phase == Phase::AwaitingInput {
            return Ok(report);
        }
        let budget = self.config.max_settle_steps;
        while report.steps < n && !self.swarm.settled() && self.settle_steps < budget {
            report.costs.push(self.swarm.step()?.cost);
            report.steps += 1;
            self.settle_steps += 1;
        }
        if self.phase == Phase::SwarmSettling
            && (self.swarm.settled() || self.settle_steps >= budget)
        {
            self.phase = Phase::AwaitingInput;
            report.events.push(ServerMessage::InputRequest {
                k: self.steps.len(),
            });
        }
        Ok(report)
    }

    /// Scripted sessions: settle, answer, repeat until the trial stops.
    pub fn autoplay(&mut self) -> Result<Vec<ServerMessage>, SessionError> {
        if self.config.mode == SessionMode::Human {
            return Err(SessionError::NotScripted(self.config.mode));
        }
        let mut events = Vec::new();
        while !self.phase.is_terminal() {
            match self.phase {
                Phase::SwarmSettling => events.extend(self.tick_steps(usize::MAX)?.events),
                _ => {
                    let y = self
                        .scripted_input()
                        .ok_or(SessionError::NotScripted(self.config.mode))?;
                    events.extend(self.submit_input(y)?);
                }
            }
        }
        Ok(events)
    }

    pub fn snapshot(&self) -> Result<Snapshot, SessionError> {
        let shown = self.displayed;
        let alpha = self.posterior();
        Ok(Snapshot {
            session: self.id.clone(),
            phase: self.phase,
            mode: self.config.mode,
            k: self.steps.len(),
            max_inputs: self.rule.max_inputs,
            n_d: alpha.len(),
            guess: shown,
            guess_string: self.dict.decode_index(shown)?.0,
            guess_polygon: self.dict.index_polygon(shown)?.into(),
            map: self.search.posterior().map_estimate(),
            posterior: PosteriorView::of(alpha),
            robots: self.swarm.robots.clone(),
            arena: self.swarm.arena(),
            target: self.target,
            target_polygon: self
                .target
                .map(|t| self.dict.index_polygon(t).map(PolygonView::from))
                .transpose()?,
            estimate: self.stop.map(|s| s.estimate),
        })
    }

    /// The session as a harness trial record, once stopped with a known
    /// target. Human inputs are logged with the assumed crossover.
    pub fn trial_record(&self) -> Option<TrialRecord> {
        let stop = self.stop?;
        let target = self.target?;
        let steps = self
            .steps
            .iter()
            .map(|s| InputStep {
                guess: s.guess,
                x: s.x.unwrap_or(s.y),
                y: s.y,
                crossover: match self.config.mode {
                    SessionMode::ScriptedIdeal => 0.0,
                    SessionMode::ScriptedWithChannel => self.config.error.crossover(s.k),
                    SessionMode::Human => self.config.assumed_p,
                },
                map: s.map,
            })
            .collect();
        Some(TrialRecord {
            trial: 0,
            seed: self.config.seed,
            target,
            steps,
            estimate: stop.estimate,
            inputs: stop.inputs,
            outcome: stop.outcome,
        })
    }

    pub fn log_lines(&self) -> Vec<LogLine> {
        let mut lines = vec![LogLine::Start {
            session: self.id.clone(),
            config: Box::new(self.config.clone()),
            target: self.target,
            tau: self.rule.tau,
        }];
        lines.extend(self.steps.iter().copied().map(LogLine::Input));
        if let Some(s) = self.stop {
            lines.push(LogLine::End {
                j_star: s.estimate,
                k_star: s.inputs,
                outcome: s.outcome,
            });
        }
        lines
    }

    /// Write the log as JSON lines, replacing any earlier version.
    pub fn write_log(&self, path: impl AsRef<Path>) -> Result<(), SessionError> {
        let mut out = std::io::BufWriter::new(fs::File::create(path)?);
        for line in self.log_lines() {
            serde_json::to_writer(&mut out, &line)?;
            out.write_all(b"\n")?;
        }
        out.flush()?;
        Ok(())
    }
}

pub fn read_log(text: &str) -> Result<Vec<LogLine>, SessionError> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| Ok(serde_json::from_str(l)?))
        .collect()
}
