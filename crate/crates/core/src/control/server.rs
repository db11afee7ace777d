//! WebSocket service at `ws://host:port/control`. Each client gets a thread
//! that moves text between its socket and the simulation thread; the
//! simulation thread is the only one touching the testbed.

use std::collections::BTreeMap;
use std::io::ErrorKind;
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::{self, Receiver, Sender, SyncSender, TryRecvError, TrySendError};
use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::Duration;

use thiserror::Error;
use tungstenite::handshake::server::{ErrorResponse, Request, Response};
use tungstenite::{http, Message, WebSocket};

use super::pace::{Pacer, SystemClock, WallClock};
use super::protocol::{parse_command, Action, CommandError, ErrorCode, Reply, ServerMessage};
use crate::testbed::{Testbed, TestbedError};

pub const DEFAULT_ENDPOINT: &str = "127.0.0.1:3090";
pub const CONTROL_PATH: &str = "/control";
pub const TELEMETRY_HZ: f64 = 10.0;

/// Wall-clock interval between simulation steps.
const STEP: Duration = Duration::from_millis(5);
/// How long a client thread waits for input before servicing its outbox.
const CLIENT_POLL: Duration = Duration::from_millis(10);
/// Messages buffered per client before telemetry is dropped for it.
const OUTBOX_DEPTH: usize = 256;

#[derive(Debug, Error)]
pub enum ServerError {
    #[error("cannot bind {endpoint}: {source}")]
    Bind {
        endpoint: String,
        source: std::io::Error,
    },
    #[error("bad time scale {0}")]
    BadScale(f64),
    #[error("simulation failed: {0}")]
    Simulation(#[from] TestbedError),
    #[error("simulation thread panicked")]
    Panicked,
}

#[derive(Debug, Clone)]
pub struct ServeOptions {
    pub endpoint: String,
    pub time_scale: f64,
    pub telemetry_hz: f64,
}

impl Default for ServeOptions {
    fn default() -> Self {
        Self {
            endpoint: DEFAULT_ENDPOINT.into(),
            time_scale: 1.0,
            telemetry_hz: TELEMETRY_HZ,
        }
    }
}

enum Inbound {
    Connected { client: u64, outbox: SyncSender<String> },
    Text { client: u64, text: String },
    Closed { client: u64 },
}

/// A running service. Dropping it without [`Server::shutdown`] leaves the
/// threads running until the process exits.
pub struct Server {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    sim: JoinHandle<Result<Testbed, ServerError>>,
    acceptor: JoinHandle<()>,
}

impl Server {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    /// Flag that stops the service when set, e.g. from a signal handler.
    pub fn stop_flag(&self) -> Arc<AtomicBool> {
        self.stop.clone()
    }

    /// Blocks until the stop flag is set, then returns the final testbed.
    pub fn wait(self) -> Result<Testbed, ServerError> {
        let result = self.sim.join().map_err(|_| ServerError::Panicked)?;
        let _ = self.acceptor.join();
        result
    }

    pub fn shutdown(self) -> Result<Testbed, ServerError> {
        self.stop.store(true, Ordering::SeqCst);
        self.wait()
    }
}

/// Binds the endpoint and starts serving `testbed` in the background.
pub fn spawn(testbed: Testbed, options: ServeOptions) -> Result<Server, ServerError> {
    spawn_with_clock(testbed, options, Arc::new(SystemClock::new()))
}

pub fn spawn_with_clock(mut testbed: Testbed, options: ServeOptions, clock: Arc<dyn WallClock>) -> Result<Server, ServerError> {
    testbed
        .apply(&Action::SetTimeScale { value: options.time_scale })
        .map_err(|_| ServerError::BadScale(options.time_scale))?;
    let pacer = Pacer::new(options.time_scale, clock.elapsed(), testbed.now()).map_err(|_| ServerError::BadScale(options.time_scale))?;
    let listener = TcpListener::bind(&options.endpoint).map_err(|source| ServerError::Bind {
        endpoint: options.endpoint.clone(),
        source,
    })?;
    let addr = listener.local_addr().map_err(|source| ServerError::Bind {
        endpoint: options.endpoint.clone(),
        source,
    })?;
    listener.set_nonblocking(true).map_err(|source| ServerError::Bind {
        endpoint: options.endpoint.clone(),
        source,
    })?;
    let stop = Arc::new(AtomicBool::new(false));
    let (inbox_tx, inbox_rx) = mpsc::channel();

    let acceptor = {
        let stop = stop.clone();
        thread::spawn(move || accept_loop(listener, inbox_tx, stop))
    };
    let sim = {
        let stop = stop.clone();
        let period = Duration::from_secs_f64(1.0 / options.telemetry_hz.max(0.1));
        thread::spawn(move || {
            let mut sim = Simulation {
                testbed,
                pacer,
                clock,
                clients: BTreeMap::new(),
            };
            sim.run(inbox_rx, stop, period)?;
            Ok(sim.testbed)
        })
    };
    log::info!("serving ws://{addr}{CONTROL_PATH}");
    Ok(Server { addr, stop, sim, acceptor })
}

fn accept_loop(listener: TcpListener, inbox: Sender<Inbound>, stop: Arc<AtomicBool>) {
    let mut next_id = 0u64;
    let mut workers = Vec::new();
    while !stop.load(Ordering::SeqCst) {
        match listener.accept() {
            Ok((stream, peer)) => {
                next_id += 1;
                let client = next_id;
                let inbox = inbox.clone();
                let stop = stop.clone();
                workers.push(thread::spawn(move || {
                    if let Err(e) = serve_client(stream, client, inbox, stop) {
                        log::debug!("client {client} ({peer}): {e}");
                    }
                }));
            }
            Err(e) if e.kind() == ErrorKind::WouldBlock => thread::sleep(Duration::from_millis(20)),
            Err(e) => {
                log::warn!("accept failed: {e}");
                thread::sleep(Duration::from_millis(20));
            }
        }
    }
    for w in workers {
        let _ = w.join();
    }
}

fn check_path(request: &Request, response: Response) -> Result<Response, ErrorResponse> {
    if request.uri().path() == CONTROL_PATH {
        return Ok(response);
    }
    let mut reject = ErrorResponse::new(Some(format!("no endpoint at {}", request.uri().path())));
    *reject.status_mut() = http::StatusCode::NOT_FOUND;
    Err(reject)
}

fn serve_client(stream: TcpStream, client: u64, inbox: Sender<Inbound>, stop: Arc<AtomicBool>) -> Result<(), String> {
    stream.set_nonblocking(false).map_err(|e| e.to_string())?;
    stream.set_read_timeout(Some(Duration::from_secs(5))).map_err(|e| e.to_string())?;
    let mut socket = tungstenite::accept_hdr(stream, check_path).map_err(|e| e.to_string())?;
    socket.get_ref().set_read_timeout(Some(CLIENT_POLL)).map_err(|e| e.to_string())?;

    let (out_tx, out_rx) = mpsc::sync_channel(OUTBOX_DEPTH);
    inbox
        .send(Inbound::Connected { client, outbox: out_tx })
        .map_err(|_| "simulation gone".to_string())?;
    let result = pump(&mut socket, client, &inbox, &out_rx, &stop);
    let _ = inbox.send(Inbound::Closed { client });
    if stop.load(Ordering::SeqCst) {
        let _ = socket.close(None);
        let _ = socket.flush();
    }
    result
}

fn pump(
    socket: &mut WebSocket<TcpStream>,
    client: u64,
    inbox: &Sender<Inbound>,
    outbox: &Receiver<String>,
    stop: &AtomicBool,
) -> Result<(), String> {
    loop {
        if stop.load(Ordering::SeqCst) {
            return Ok(());
        }
        loop {
            match outbox.try_recv() {
                Ok(text) => socket.send(Message::Text(text)).map_err(|e| e.to_string())?,
                Err(TryRecvError::Empty) => break,
                Err(TryRecvError::Disconnected) => return Ok(()),
            }
        }
        match socket.read() {
            Ok(Message::Text(text)) => {
                if inbox.send(Inbound::Text { client, text }).is_err() {
                    return Ok(());
                }
            }
            Ok(Message::Binary(_)) => {
                let reply = Reply::error(None, CommandError::new(ErrorCode::Malformed, "binary messages are not accepted"));
                socket.send(Message::Text(ServerMessage::Reply(reply).to_json())).map_err(|e| e.to_string())?;
            }
            Ok(Message::Close(_)) => return Ok(()),
            Ok(_) => {}
            Err(tungstenite::Error::Io(e)) if matches!(e.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut) => {}
            Err(tungstenite::Error::ConnectionClosed) => return Ok(()),
            Err(e) => return Err(e.to_string()),
        }
    }
}

struct ClientState {
    outbox: SyncSender<String>,
    last_seq: Option<u64>,
}

struct Simulation {
    testbed: Testbed,
    pacer: Pacer,
    clock: Arc<dyn WallClock>,
    clients: BTreeMap<u64, ClientState>,
}

impl Simulation {
    fn run(&mut self, inbox: Receiver<Inbound>, stop: Arc<AtomicBool>, period: Duration) -> Result<(), ServerError> {
        let mut next_telemetry = self.clock.elapsed();
        while !stop.load(Ordering::SeqCst) {
            while let Ok(msg) = inbox.try_recv() {
                self.receive(msg);
            }
            let wall = self.clock.elapsed();
            let target = self.pacer.target(wall);
            if target > self.testbed.now() {
                self.testbed.run_until(target)?;
            }
            let wall = self.clock.elapsed();
            if wall >= next_telemetry {
                let text = ServerMessage::Telemetry(Box::new(self.testbed.telemetry())).to_json();
                self.broadcast(&text);
                next_telemetry += period;
                if next_telemetry < wall {
                    next_telemetry = wall + period;
                }
            }
            thread::sleep(STEP);
        }
        Ok(())
    }

    fn receive(&mut self, msg: Inbound) {
        match msg {
            Inbound::Connected { client, outbox } => {
                self.clients.insert(client, ClientState { outbox, last_seq: None });
            }
            Inbound::Closed { client } => {
                self.clients.remove(&client);
            }
            Inbound::Text { client, text } => {
                let reply = self.handle(client, &text);
                if let Some(c) = self.clients.get(&client) {
                    let _ = c.outbox.try_send(ServerMessage::Reply(reply).to_json());
                }
            }
        }
    }

    fn handle(&mut self, client: u64, text: &str) -> Reply {
        let command = match parse_command(text) {
            Ok(c) => c,
            Err((seq, e)) => return Reply::error(seq, e),
        };
        let Some(state) = self.clients.get_mut(&client) else {
            return Reply::error(Some(command.seq), CommandError::new(ErrorCode::Unavailable, "client not registered"));
        };
        if state.last_seq.is_some_and(|last| command.seq <= last) {
            return Reply::error(
                Some(command.seq),
                CommandError::new(ErrorCode::StaleSeq, format!("seq {} not above {}", command.seq, state.last_seq.unwrap())),
            );
        }
        state.last_seq = Some(command.seq);
        match self.testbed.apply(&command.action) {
            Ok(()) => {
                self.sync_pacer(&command.action);
                Reply::ack(command.seq)
            }
            Err(e) => Reply::error(Some(command.seq), e),
        }
    }

    fn sync_pacer(&mut self, action: &Action) {
        let wall = self.clock.elapsed();
        match action {
            Action::SimPause | Action::SimResume => {
                self.pacer.catch_up(wall, self.testbed.now());
                self.pacer.set_paused(self.testbed.paused(), wall);
            }
            Action::SetTimeScale { .. } => {
                self.pacer.catch_up(wall, self.testbed.now());
                let _ = self.pacer.set_scale(self.testbed.time_scale(), wall);
            }
            _ => {}
        }
    }

    fn broadcast(&mut self, text: &str) {
        self.clients.retain(|id, c| match c.outbox.try_send(text.to_string()) {
            Ok(()) | Err(TrySendError::Full(_)) => true,
            Err(TrySendError::Disconnected(_)) => {
                log::debug!("client {id} gone");
                false
            }
        });
    }
}
