//! The live simulation behind a TCP endpoint.
//!
//! Threads: one acceptor, one session per client, one control loop and one
//! broadcaster. Sessions decode and validate client messages and post them into
//! latest-value mailboxes; the control loop drains those at the start of every
//! tick and publishes a state snapshot the same way. The control loop never
//! takes a lock or touches a socket.

use std::io::{self, BufRead, BufReader, Write};
use std::net::{Shutdown, SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};
use std::time::Duration;

use compliant_core::control::{Controller, ControllerParams, Target, TargetCommand};
use compliant_core::dynamics::Wrench;
use compliant_core::mailbox::Mailbox;
use compliant_core::sim::{step, SimConfig, SimError, SimState};
use compliant_core::{JointState, RobotModel};
use nalgebra::DVector;
use thiserror::Error;

use crate::clock::Clock;
use crate::protocol::{decode, encode, ErrorCode, Message, ParamResult, ParamStatus, StateMessage, WirePose};

pub const DEFAULT_BIND: &str = "127.0.0.1:7878";
pub const DEFAULT_STATE_RATE: f64 = 30.0;

/// Writes to a client that stop making progress for this long drop the client.
const WRITE_TIMEOUT: Duration = Duration::from_secs(2);

#[derive(Debug, Error)]
pub enum ServeError {
    #[error("could not bind {addr}: {source}")]
    Bind { addr: String, source: io::Error },
    #[error("state rate must be positive and finite, got {0}")]
    InvalidRate(f64),
    #[error(transparent)]
    Sim(#[from] SimError),
}

/// What the server simulates and controls.
#[derive(Debug, Clone)]
pub struct LiveSession {
    pub model: RobotModel,
    pub params: ControllerParams,
    pub sim: SimConfig,
    pub initial: JointState,
}

#[derive(Debug, Clone)]
pub struct ServeOptions {
    pub bind: String,
    /// State broadcasts per second.
    pub state_rate: f64,
}

impl Default for ServeOptions {
    fn default() -> Self {
        Self {
            bind: DEFAULT_BIND.to_owned(),
            state_rate: DEFAULT_STATE_RATE,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ServerStats {
    pub ticks: u64,
    pub broadcasts: u64,
    /// Valid commands handed to the control loop, parameter updates included.
    pub commands_accepted: u64,
    /// Pending commands replaced before the control loop consumed them.
    pub commands_overwritten: u64,
    pub messages_rejected: u64,
    pub clients: u64,
}

/// Returned by [`Server::shutdown`].
#[derive(Debug, Clone)]
pub struct ServerReport {
    pub stats: ServerStats,
    pub final_state: SimState,
    pub fault: Option<String>,
}

type Writer = Arc<Mutex<TcpStream>>;

struct Shared {
    model: RobotModel,
    clock: Arc<dyn Clock>,
    poses: Mailbox<TargetCommand>,
    joints: Mailbox<TargetCommand>,
    wrenches: Mailbox<TargetCommand>,
    params_update: Mailbox<ControllerParams>,
    snapshot: Mailbox<StateMessage>,
    /// The parameter set sessions edit; the control loop only sees posted copies.
    params: Mutex<ControllerParams>,
    clients: Mutex<Vec<(u64, Writer)>>,
    stop: AtomicBool,
    ticks: AtomicU64,
    broadcasts: AtomicU64,
    accepted: AtomicU64,
    rejected: AtomicU64,
    client_count: AtomicU64,
    fault: Mutex<Option<String>>,
    broadcast_intervals: Mutex<IntervalStats>,
}

/// Spread of the broadcaster's emission intervals on its clock.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntervalStats {
    pub count: u64,
    pub min: f64,
    pub max: f64,
    pub first: f64,
    pub last: f64,
}

impl Default for IntervalStats {
    fn default() -> Self {
        Self {
            count: 0,
            min: f64::INFINITY,
            max: 0.0,
            first: f64::NAN,
            last: f64::NAN,
        }
    }
}

impl IntervalStats {
    fn record(&mut self, at: f64) {
        if self.count == 0 {
            self.first = at;
        } else {
            let dt = at - self.last;
            self.min = self.min.min(dt);
            self.max = self.max.max(dt);
        }
        self.last = at;
        self.count += 1;
    }

    /// Emissions per second between the first and the last.
    pub fn mean_rate(&self) -> f64 {
        (self.count - 1) as f64 / (self.last - self.first)
    }
}

/// A running server. Dropping it without [`Server::shutdown`] leaves the threads running.
pub struct Server {
    addr: SocketAddr,
    shared: Arc<Shared>,
    control: Option<JoinHandle<SimState>>,
    others: Vec<JoinHandle<()>>,
}

/// Binds `options.bind` and starts the control loop, the broadcaster and the acceptor.
pub fn serve(session: LiveSession, options: &ServeOptions, clock: Arc<dyn Clock>) -> Result<Server, ServeError> {
    if !(options.state_rate > 0.0 && options.state_rate.is_finite()) {
        return Err(ServeError::InvalidRate(options.state_rate));
    }
    session.sim.validate(&session.model)?;
    session.initial.validate(&session.model).map_err(SimError::from)?;
    let listener = options
        .bind
        .to_socket_addrs()
        .and_then(|mut addrs| addrs.next().ok_or_else(|| io::Error::other("address resolved to nothing")))
        .and_then(TcpListener::bind)
        .map_err(|source| ServeError::Bind {
            addr: options.bind.clone(),
            source,
        })?;
    let addr = listener.local_addr().map_err(|source| ServeError::Bind {
        addr: options.bind.clone(),
        source,
    })?;

    let shared = Arc::new(Shared {
        model: session.model.clone(),
        clock: clock.clone(),
        poses: Mailbox::new(),
        joints: Mailbox::new(),
        wrenches: Mailbox::new(),
        params_update: Mailbox::new(),
        snapshot: Mailbox::new(),
        params: Mutex::new(session.params.clone()),
        clients: Mutex::new(Vec::new()),
        stop: AtomicBool::new(false),
        ticks: AtomicU64::new(0),
        broadcasts: AtomicU64::new(0),
        accepted: AtomicU64::new(0),
        rejected: AtomicU64::new(0),
        client_count: AtomicU64::new(0),
        fault: Mutex::new(None),
        broadcast_intervals: Mutex::new(IntervalStats::default()),
    });

    // attach before spawning so a virtual clock never runs ahead of a thread that has not started
    clock.attach();
    clock.attach();
    let control = {
        let shared = shared.clone();
        thread::Builder::new()
            .name("control".into())
            .spawn(move || control_loop(&shared, session))
            .expect("spawn control thread")
    };
    let broadcaster = {
        let shared = shared.clone();
        let period = 1.0 / options.state_rate;
        thread::Builder::new()
            .name("broadcast".into())
            .spawn(move || broadcast_loop(&shared, period))
            .expect("spawn broadcast thread")
    };
    let acceptor = {
        let shared = shared.clone();
        thread::Builder::new()
            .name("accept".into())
            .spawn(move || accept_loop(&shared, listener))
            .expect("spawn accept thread")
    };
    log::info!("teleop server listening on {addr}");
    Ok(Server {
        addr,
        shared,
        control: Some(control),
        others: vec![broadcaster, acceptor],
    })
}

impl Server {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn stats(&self) -> ServerStats {
        let s = &self.shared;
        let overwritten = [&s.poses, &s.joints, &s.wrenches].iter().map(|m| m.overwritten()).sum::<u64>()
            + s.params_update.overwritten();
        ServerStats {
            ticks: s.ticks.load(Ordering::Acquire),
            broadcasts: s.broadcasts.load(Ordering::Acquire),
            commands_accepted: s.accepted.load(Ordering::Acquire),
            commands_overwritten: overwritten,
            messages_rejected: s.rejected.load(Ordering::Acquire),
            clients: s.client_count.load(Ordering::Acquire),
        }
    }

    pub fn broadcast_intervals(&self) -> IntervalStats {
        *self.shared.broadcast_intervals.lock().unwrap()
    }

    pub fn fault(&self) -> Option<String> {
        self.shared.fault.lock().unwrap().clone()
    }

    /// Whether the control loop has stopped on a fault.
    pub fn is_faulted(&self) -> bool {
        self.shared.fault.lock().unwrap().is_some()
    }

    /// Stops every thread and returns the final simulation state.
    pub fn shutdown(mut self) -> ServerReport {
        let s = &self.shared;
        s.stop.store(true, Ordering::Release);
        s.clock.close();
        // unblock the acceptor
        let _ = TcpStream::connect(self.addr);
        for (_, w) in s.clients.lock().unwrap().iter() {
            let _ = w.lock().unwrap().shutdown(Shutdown::Both);
        }
        let final_state = self
            .control
            .take()
            .expect("control thread joined once")
            .join()
            .expect("control thread panicked");
        for h in self.others.drain(..) {
            let _ = h.join();
        }
        ServerReport {
            stats: self.stats(),
            final_state,
            fault: self.fault(),
        }
    }
}

fn control_loop(shared: &Shared, session: LiveSession) -> SimState {
    let LiveSession {
        model,
        params,
        sim,
        initial,
    } = session;
    let mut controller = Controller::new(model.clone(), params);
    let mut state = SimState::new(initial.q, initial.dq);
    let clock = &shared.clock;
    let t0 = clock.now();
    let mut tick: u64 = 0;
    while clock.sleep_until(t0 + tick as f64 * sim.dt) {
        if let Some(p) = shared.params_update.take() {
            controller.params = p;
        }
        for mailbox in [&shared.poses, &shared.joints, &shared.wrenches] {
            if let Some(cmd) = mailbox.take() {
                controller.inputs.apply(cmd);
            }
        }
        let result = controller
            .compute(&state.joint_state())
            .map_err(SimError::from)
            .and_then(|out| {
                let next = step(&model, &state, &out.tau, &sim)?;
                Ok((out, next))
            });
        match result {
            Ok((out, next)) => {
                shared.snapshot.post(StateMessage {
                    t: state.t,
                    q: state.q.as_slice().to_vec(),
                    dq: state.dq.as_slice().to_vec(),
                    ee_pose: WirePose::from(&out.pose),
                    e_pos: out.tracking_error.pos.into(),
                    e_rot: out.tracking_error.rot.into(),
                    tau: out.tau.as_slice().to_vec(),
                    wrench: state.ee_wrench_estimate.into(),
                });
                state = next;
            }
            Err(e) => {
                log::error!("control loop stopped: {e}");
                *shared.fault.lock().unwrap() = Some(e.to_string());
                break;
            }
        }
        tick += 1;
        shared.ticks.store(tick, Ordering::Release);
    }
    clock.detach();
    state
}

fn broadcast_loop(shared: &Shared, period: f64) {
    let clock = &shared.clock;
    let t0 = clock.now();
    let mut latest: Option<String> = None;
    let mut fault_sent = false;
    let mut k: u64 = 1;
    while clock.sleep_until(t0 + k as f64 * period) {
        k += 1;
        if let Some(state) = shared.snapshot.take() {
            latest = Some(encode(&Message::State(state)));
        }
        let fault = shared.fault.lock().unwrap().clone();
        let line = match (&fault, fault_sent) {
            (Some(reason), false) => {
                fault_sent = true;
                encode(&Message::error(ErrorCode::SimFault, reason.clone()))
            }
            (Some(_), true) => continue,
            (None, _) => match &latest {
                Some(line) => line.clone(),
                None => continue,
            },
        };
        shared.broadcast_intervals.lock().unwrap().record(clock.now());
        send_to_all(shared, &line);
        shared.broadcasts.fetch_add(1, Ordering::AcqRel);
    }
    clock.detach();
}

fn send_to_all(shared: &Shared, line: &str) {
    let clients: Vec<(u64, Writer)> = shared.clients.lock().unwrap().clone();
    let mut dead = Vec::new();
    for (id, w) in clients {
        if w.lock().unwrap().write_all(line.as_bytes()).is_err() {
            dead.push(id);
        }
    }
    if !dead.is_empty() {
        shared.clients.lock().unwrap().retain(|(id, _)| !dead.contains(id));
    }
}

fn accept_loop(shared: &Arc<Shared>, listener: TcpListener) {
    let mut next_id = 0;
    for stream in listener.incoming() {
        if shared.stop.load(Ordering::Acquire) {
            break;
        }
        let stream = match stream {
            Ok(s) => s,
            Err(e) => {
                log::warn!("accept failed: {e}");
                continue;
            }
        };
        let id = next_id;
        next_id += 1;
        let _ = stream.set_nodelay(true);
        let _ = stream.set_write_timeout(Some(WRITE_TIMEOUT));
        let writer = match stream.try_clone() {
            Ok(w) => Arc::new(Mutex::new(w)),
            Err(e) => {
                log::warn!("client {id}: {e}");
                continue;
            }
        };
        shared.clients.lock().unwrap().push((id, writer.clone()));
        shared.client_count.fetch_add(1, Ordering::AcqRel);
        let shared = shared.clone();
        // sessions end when their peer disconnects or the server shuts the socket down
        thread::Builder::new()
            .name(format!("session-{id}"))
            .spawn(move || {
                session_loop(&shared, stream, &writer);
                shared.clients.lock().unwrap().retain(|(c, _)| *c != id);
            })
            .expect("spawn session thread");
    }
}

fn session_loop(shared: &Shared, stream: TcpStream, writer: &Writer) {
    let mut reader = BufReader::new(stream);
    let mut line = String::new();
    loop {
        line.clear();
        match reader.read_line(&mut line) {
            Ok(0) | Err(_) => return,
            Ok(_) => {}
        }
        if line.trim().is_empty() {
            continue;
        }
        if let Some(reply) = handle_line(shared, &line) {
            if writer.lock().unwrap().write_all(encode(&reply).as_bytes()).is_err() {
                return;
            }
        }
    }
}

/// Decodes, validates and forwards one client line. Returns the reply, if any.
fn handle_line(shared: &Shared, line: &str) -> Option<Message> {
    let reject = |reply: Message| {
        shared.rejected.fetch_add(1, Ordering::AcqRel);
        Some(reply)
    };
    let msg = match decode(line) {
        Ok(m) => m,
        Err(e) => return reject(e.to_reply()),
    };
    let (mailbox, cmd) = match msg {
        Message::TargetPose { pose, stamp } => match pose.to_pose() {
            Ok(p) => (&shared.poses, TargetCommand::pose(stamp, p)),
            Err(e) => return reject(Message::error(ErrorCode::InvalidCommand, e.to_string())),
        },
        Message::TargetJoint { q, dq, stamp } => (
            &shared.joints,
            TargetCommand {
                stamp,
                target: Target::Joint {
                    q: DVector::from_vec(q),
                    dq: dq.map(DVector::from_vec),
                },
            },
        ),
        Message::TargetWrench { wrench, stamp } => (
            &shared.wrenches,
            TargetCommand {
                stamp,
                target: Target::Wrench(Wrench::from(wrench)),
            },
        ),
        Message::SetParams { params, .. } => return Some(apply_params(shared, &params)),
        other => {
            return reject(Message::error(
                ErrorCode::UnexpectedType,
                format!("`{}` is not accepted from clients", other.type_name()),
            ))
        }
    };
    if let Err(e) = cmd.validate(&shared.model) {
        return reject(Message::error(ErrorCode::InvalidCommand, e.to_string()));
    }
    mailbox.post(cmd);
    shared.accepted.fetch_add(1, Ordering::AcqRel);
    None
}

/// Applies each key on its own; rejected keys leave the parameters untouched.
fn apply_params(shared: &Shared, updates: &serde_json::Map<String, serde_json::Value>) -> Message {
    let mut params = shared.params.lock().unwrap();
    let results = updates
        .iter()
        .map(|(key, value)| match params.set(key, value, &shared.model) {
            Ok(()) => ParamResult {
                key: key.clone(),
                status: ParamStatus::Applied,
                reason: None,
            },
            Err(e) => ParamResult {
                key: key.clone(),
                status: ParamStatus::Rejected,
                reason: Some(e.to_string()),
            },
        })
        .collect::<Vec<_>>();
    if results.iter().any(|r| r.status == ParamStatus::Applied) {
        shared.params_update.post(params.clone());
        shared.accepted.fetch_add(1, Ordering::AcqRel);
    }
    Message::ParamsReply { results }
}
