//! Transport-free session logic: roles, sequencing, the tick boundary and
//! snapshot cadence. The server feeds it text and forwards what it emits.

use std::collections::{BTreeMap, VecDeque};

use clonemator_core::{BodyFrame, Command, Engine, EngineEvent, Pose};
use clonemator_scenario::ScenarioScript;

use crate::error::SessionError;
use crate::protocol::{
    make_full, make_state_delta, ClientMessage, ClientOp, Payload, Role, ServerMessage, Snapshot, Transition,
};

pub type ConnId = u64;

pub const DEFAULT_SNAPSHOT_RATE: f64 = 20.0;
const HISTORY: usize = 64;

pub mod codes {
    pub const CONTROLLER_TAKEN: &str = "ControllerTaken";
    pub const NOT_CONTROLLER: &str = "NotController";
    pub const OUT_OF_ORDER_SEQ: &str = "OutOfOrderSeq";
    pub const MALFORMED_PAYLOAD: &str = "MalformedPayload";
    pub const INVALID_INPUT: &str = "InvalidInput";
}

#[derive(Debug, Clone)]
struct Conn {
    role: Role,
    last_seq: Option<u64>,
    last_sent: Option<Snapshot>,
    camera: Option<Pose>,
}

#[derive(Debug)]
pub struct Session {
    engine: Engine,
    input: BodyFrame,
    conns: BTreeMap<ConnId, Conn>,
    controller: Option<ConnId>,
    pending: Vec<(ConnId, u64, Command)>,
    outbox: Vec<(ConnId, ServerMessage)>,
    transitions: Vec<Transition>,
    snapshot_every: u64,
    history: VecDeque<Snapshot>,
}

impl Session {
    /// `snapshot_rate` is in Hz and is rounded to a whole number of ticks.
    pub fn new(engine: Engine, snapshot_rate: f64) -> Session {
        let tick_rate = engine.world().config().tick_rate;
        let snapshot_every = (tick_rate / snapshot_rate.max(1e-9)).round().max(1.0) as u64;
        let input = engine.world().avatar().input;
        Session {
            engine,
            input,
            conns: BTreeMap::new(),
            controller: None,
            pending: Vec::new(),
            outbox: Vec::new(),
            transitions: Vec::new(),
            snapshot_every,
            history: VecDeque::new(),
        }
    }

    /// Objects, avatar, rules and recordings of a scenario; its timeline is ignored.
    pub fn from_scene(scene: &ScenarioScript, snapshot_rate: f64) -> Result<Session, SessionError> {
        let (engine, _) = clonemator_scenario::run::setup(scene).map_err(SessionError::SceneLoad)?;
        Ok(Session::new(engine, snapshot_rate))
    }

    pub fn engine(&self) -> &Engine {
        &self.engine
    }

    pub fn tick(&self) -> u64 {
        self.engine.world().tick()
    }

    pub fn tick_rate(&self) -> f64 {
        self.engine.world().config().tick_rate
    }

    pub fn snapshot_every(&self) -> u64 {
        self.snapshot_every
    }

    /// The input applied on every tick until the controller sends another.
    pub fn held_input(&self) -> &BodyFrame {
        &self.input
    }

    pub fn controller(&self) -> Option<ConnId> {
        self.controller
    }

    pub fn role(&self, conn: ConnId) -> Option<Role> {
        self.conns.get(&conn).map(|c| c.role)
    }

    pub fn camera(&self, conn: ConnId) -> Option<Pose> {
        self.conns.get(&conn).and_then(|c| c.camera)
    }

    /// Snapshot broadcast at `tick`, if still in the recent history.
    pub fn snapshot_at(&self, tick: u64) -> Option<&Snapshot> {
        self.history.iter().find(|s| s.tick == tick)
    }

    pub fn snapshot(&self) -> Snapshot {
        Snapshot::capture(&self.engine, &self.transitions)
    }

    /// Registers a connection as an observer and sends it a full snapshot.
    pub fn connect(&mut self, conn: ConnId) {
        let snap = self.snapshot();
        self.outbox.push((conn, ServerMessage::State(make_full(&snap))));
        self.conns.insert(conn, Conn { role: Role::Observer, last_seq: None, last_sent: Some(snap), camera: None });
        log::info!("connection {conn} opened");
    }

    pub fn disconnect(&mut self, conn: ConnId) {
        self.conns.remove(&conn);
        self.pending.retain(|p| p.0 != conn);
        if self.controller == Some(conn) {
            self.controller = None;
        }
        log::info!("connection {conn} closed");
    }

    pub fn take_messages(&mut self) -> Vec<(ConnId, ServerMessage)> {
        std::mem::take(&mut self.outbox)
    }

    fn error(&mut self, conn: ConnId, code: &str, detail: String, seq: Option<u64>) {
        log::debug!("connection {conn}: {code}: {detail}");
        let tick = self.tick();
        self.outbox.push((conn, ServerMessage::Error { tick, code: code.into(), detail, seq }));
    }

    /// Reports a message that could not be read at all, such as a binary frame.
    pub fn reject(&mut self, conn: ConnId, detail: String) {
        self.error(conn, codes::MALFORMED_PAYLOAD, detail, None);
    }

    pub fn handle_text(&mut self, conn: ConnId, text: &str) {
        match ClientMessage::from_json(text) {
            Ok(m) => self.handle(conn, m),
            Err(e) => {
                // a malformed message still consumes a valid, in-order seq
                if let Some(seq) = e.seq {
                    if !self.accept_seq(conn, seq) {
                        return;
                    }
                }
                self.error(conn, codes::MALFORMED_PAYLOAD, e.detail, e.seq);
            }
        }
    }

    fn accept_seq(&mut self, conn: ConnId, seq: u64) -> bool {
        let Some(c) = self.conns.get_mut(&conn) else { return false };
        if c.last_seq.is_some_and(|last| seq <= last) {
            let detail = format!("seq {seq} after {}", c.last_seq.unwrap_or_default());
            self.error(conn, codes::OUT_OF_ORDER_SEQ, detail, Some(seq));
            return false;
        }
        c.last_seq = Some(seq);
        true
    }

    pub fn handle(&mut self, conn: ConnId, m: ClientMessage) {
        if !self.conns.contains_key(&conn) {
            log::warn!("message from unknown connection {conn}");
            return;
        }
        match m {
            ClientMessage::Hello { role } => self.hello(conn, role),
            ClientMessage::Command { seq, payload } => {
                if !self.accept_seq(conn, seq) {
                    return;
                }
                let is_controller = self.controller == Some(conn);
                match payload {
                    Payload::Client(ClientOp::CameraHint { pose }) => {
                        self.conns.get_mut(&conn).expect("checked").camera = Some(pose);
                        self.ack(conn, seq, "camera_hint", Default::default());
                    }
                    p if !is_controller => {
                        self.error(conn, codes::NOT_CONTROLLER, format!("{} needs the controller role", p.op()), Some(seq));
                    }
                    Payload::Client(ClientOp::Input { frame, .. }) => {
                        let reach = self.engine.world().config().max_reach;
                        match frame.validate_input(reach) {
                            Ok(()) => self.input = frame,
                            Err(e) => self.error(conn, codes::INVALID_INPUT, e.to_string(), Some(seq)),
                        }
                    }
                    Payload::Client(ClientOp::ListRecordings) => {
                        let recordings = self.engine.list_recordings();
                        self.outbox.push((conn, ServerMessage::Recordings { seq, recordings }));
                    }
                    Payload::Engine(cmd) => self.pending.push((conn, seq, cmd)),
                }
            }
        }
    }

    fn hello(&mut self, conn: ConnId, role: Role) {
        match role {
            Role::Controller => match self.controller {
                Some(other) if other != conn => {
                    self.error(conn, codes::CONTROLLER_TAKEN, format!("connection {other} is the controller"), None);
                    return;
                }
                _ => self.controller = Some(conn),
            },
            Role::Observer => {
                if self.controller == Some(conn) {
                    self.controller = None;
                }
            }
        }
        self.conns.get_mut(&conn).expect("checked").role = role;
        let (tick, tick_rate) = (self.tick(), self.tick_rate());
        self.outbox.push((conn, ServerMessage::Welcome { connection: conn, role, tick, tick_rate }));
    }

    fn ack(&mut self, conn: ConnId, seq: u64, op: &str, outcome: clonemator_core::CommandOutcome) {
        let tick = self.tick();
        self.outbox.push((conn, ServerMessage::Ack { seq, tick, op: op.into(), outcome }));
    }

    /// One tick boundary: queued commands in arrival order, one engine update
    /// with the held input, events, then state on the snapshot cadence.
    pub fn step(&mut self) {
        for (conn, seq, cmd) in std::mem::take(&mut self.pending) {
            let op = cmd.name();
            match self.engine.execute(cmd) {
                Ok(outcome) => self.ack(conn, seq, op, outcome),
                Err(e) => self.error(conn, e.code(), e.to_string(), Some(seq)),
            }
        }

        let dt = self.engine.world().config().dt();
        let events = match self.engine.tick_update(&self.input, dt) {
            Ok(events) => events,
            Err(e) => {
                log::error!("tick {} failed: {e}", self.tick());
                Vec::new()
            }
        };
        let tick = self.tick();
        for event in events {
            if let EngineEvent::SwitchTransition { tick: started, from, to, duration } = &event {
                self.transitions.push(Transition { started: *started, from: *from, to: *to, duration: *duration });
            }
            for conn in self.conns.keys() {
                self.outbox.push((*conn, ServerMessage::Event { tick, event: event.clone() }));
            }
        }
        let dt = self.engine.world().config().dt();
        self.transitions.retain(|t| ((tick - t.started) as f64) * dt < t.duration);

        if tick % self.snapshot_every == 0 {
            self.broadcast_state();
        }
    }

    fn broadcast_state(&mut self) {
        let snap = self.snapshot();
        for (id, c) in self.conns.iter_mut() {
            let msg = match &c.last_sent {
                Some(last) => make_state_delta(last, &snap),
                None => make_full(&snap),
            };
            self.outbox.push((*id, ServerMessage::State(msg)));
            c.last_sent = Some(snap.clone());
        }
        self.history.push_back(snap);
        if self.history.len() > HISTORY {
            self.history.pop_front();
        }
    }
}
