//! WebSocket transport. The engine runs on its own thread at a fixed rate;
//! connections run on a small tokio runtime and exchange text with it over
//! channels.

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::sync::mpsc;
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use futures_util::{SinkExt, StreamExt};
use tokio::sync::{mpsc as tmpsc, watch};
use tokio_tungstenite::tungstenite::Message;

use clonemator_scenario::ScenarioScript;

use crate::error::SessionError;
use crate::protocol::Snapshot;
use crate::session::{ConnId, Session, DEFAULT_SNAPSHOT_RATE};

#[derive(Debug, Clone)]
pub struct ServerConfig {
    pub host: String,
    /// 0 picks a free port.
    pub port: u16,
    /// Overrides the scene's rate when set.
    pub tick_rate: Option<f64>,
    pub snapshot_rate: f64,
    pub scene: Option<ScenarioScript>,
}

impl Default for ServerConfig {
    fn default() -> Self {
        ServerConfig {
            host: "127.0.0.1".into(),
            port: 0,
            tick_rate: None,
            snapshot_rate: DEFAULT_SNAPSHOT_RATE,
            scene: None,
        }
    }
}

impl ServerConfig {
    fn build_session(&self) -> Result<Session, SessionError> {
        let mut scene = self.scene.clone().unwrap_or_else(empty_scene);
        if let Some(rate) = self.tick_rate {
            scene.config.tick_rate = rate;
        }
        scene.config.validate().map_err(|e| SessionError::SceneLoad(e.to_string()))?;
        Session::from_scene(&scene, self.snapshot_rate)
    }
}

fn empty_scene() -> ScenarioScript {
    let text = format!(r#"{{"version":"{}","name":"empty","ticks":0}}"#, clonemator_scenario::SCHEMA_VERSION);
    clonemator_scenario::load_scenario(&text).expect("empty scene is valid")
}

enum Inbound {
    Open(ConnId, tmpsc::UnboundedSender<String>),
    Text(ConnId, String),
    Binary(ConnId),
    Close(ConnId),
    Inspect(u64, mpsc::Sender<Option<Snapshot>>),
    Stop,
}

pub struct ServerHandle {
    addr: SocketAddr,
    inbound: mpsc::Sender<Inbound>,
    stop_accept: watch::Sender<bool>,
    threads: Vec<JoinHandle<()>>,
}

impl ServerHandle {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn url(&self) -> String {
        format!("ws://{}", self.addr)
    }

    /// The state broadcast at `tick`, if it is among the most recent ones.
    pub fn snapshot_at(&self, tick: u64) -> Option<Snapshot> {
        let (tx, rx) = mpsc::channel();
        self.inbound.send(Inbound::Inspect(tick, tx)).ok()?;
        rx.recv_timeout(Duration::from_secs(5)).ok().flatten()
    }

    /// Blocks until the server stops.
    pub fn wait(mut self) {
        for t in self.threads.drain(..) {
            let _ = t.join();
        }
    }

    pub fn shutdown(mut self) {
        self.stop();
    }

    fn stop(&mut self) {
        let _ = self.inbound.send(Inbound::Stop);
        let _ = self.stop_accept.send(true);
        for t in self.threads.drain(..) {
            let _ = t.join();
        }
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        if !self.threads.is_empty() {
            self.stop();
        }
    }
}

/// Binds the listener, then starts the engine thread and the accept loop.
pub fn serve(config: ServerConfig) -> Result<ServerHandle, SessionError> {
    let session = config.build_session()?;
    let listener = std::net::TcpListener::bind((config.host.as_str(), config.port)).map_err(|e| {
        if e.kind() == std::io::ErrorKind::AddrInUse {
            SessionError::PortInUse(config.port)
        } else {
            SessionError::Io(e)
        }
    })?;
    listener.set_nonblocking(true)?;
    let addr = listener.local_addr()?;
    let (in_tx, in_rx) = mpsc::channel();
    let (stop_tx, stop_rx) = watch::channel(false);

    let engine = std::thread::Builder::new()
        .name("clonemator-engine".into())
        .spawn(move || engine_loop(session, in_rx))?;

    let rt = tokio::runtime::Builder::new_current_thread().enable_all().build()?;
    let accept_tx = in_tx.clone();
    let net = std::thread::Builder::new().name("clonemator-net".into()).spawn(move || {
        rt.block_on(async move {
            match tokio::net::TcpListener::from_std(listener) {
                Ok(l) => accept_loop(l, accept_tx, stop_rx).await,
                Err(e) => log::error!("listener: {e}"),
            }
        })
    })?;
    log::info!("listening on ws://{addr}");
    Ok(ServerHandle { addr, inbound: in_tx, stop_accept: stop_tx, threads: vec![engine, net] })
}

fn engine_loop(mut session: Session, inbound: mpsc::Receiver<Inbound>) {
    let period = Duration::from_secs_f64(1.0 / session.tick_rate());
    let mut outs: BTreeMap<ConnId, tmpsc::UnboundedSender<String>> = BTreeMap::new();
    let mut next = Instant::now() + period;
    loop {
        loop {
            let msg = match inbound.try_recv() {
                Ok(m) => m,
                Err(mpsc::TryRecvError::Empty) => break,
                Err(mpsc::TryRecvError::Disconnected) => return,
            };
            match msg {
                Inbound::Open(conn, tx) => {
                    outs.insert(conn, tx);
                    session.connect(conn);
                }
                Inbound::Text(conn, text) => session.handle_text(conn, &text),
                Inbound::Binary(conn) => session.reject(conn, "binary frames are not supported".into()),
                Inbound::Close(conn) => {
                    outs.remove(&conn);
                    session.disconnect(conn);
                }
                Inbound::Inspect(tick, reply) => {
                    let _ = reply.send(session.snapshot_at(tick).cloned());
                }
                Inbound::Stop => return,
            }
        }
        session.step();
        for (conn, m) in session.take_messages() {
            if let Some(tx) = outs.get(&conn) {
                let _ = tx.send(m.to_json());
            }
        }
        let now = Instant::now();
        if next > now {
            std::thread::sleep(next - now);
            next += period;
        } else {
            // fell behind; do not try to catch up in a burst
            next = now + period;
        }
    }
}

async fn accept_loop(listener: tokio::net::TcpListener, inbound: mpsc::Sender<Inbound>, mut stop: watch::Receiver<bool>) {
    let mut next_id: ConnId = 1;
    loop {
        tokio::select! {
            _ = stop.changed() => return,
            accepted = listener.accept() => {
                let (stream, peer) = match accepted {
                    Ok(x) => x,
                    Err(e) => {
                        log::warn!("accept: {e}");
                        continue;
                    }
                };
                let id = next_id;
                next_id += 1;
                log::debug!("connection {id} from {peer}");
                tokio::spawn(connection(id, stream, inbound.clone()));
            }
        }
    }
}

async fn connection(id: ConnId, stream: tokio::net::TcpStream, inbound: mpsc::Sender<Inbound>) {
    let ws = match tokio_tungstenite::accept_async(stream).await {
        Ok(ws) => ws,
        Err(e) => {
            log::warn!("handshake with connection {id}: {e}");
            return;
        }
    };
    let (mut sink, mut source) = ws.split();
    let (out_tx, mut out_rx) = tmpsc::unbounded_channel::<String>();
    if inbound.send(Inbound::Open(id, out_tx)).is_err() {
        return;
    }
    let writer = tokio::spawn(async move {
        while let Some(text) = out_rx.recv().await {
            if sink.send(Message::Text(text.into())).await.is_err() {
                break;
            }
        }
        let _ = sink.close().await;
    });
    while let Some(msg) = source.next().await {
        match msg {
            Ok(Message::Text(t)) => {
                if inbound.send(Inbound::Text(id, t.to_string())).is_err() {
                    break;
                }
            }
            Ok(Message::Binary(_)) => {
                let _ = inbound.send(Inbound::Binary(id));
            }
            Ok(Message::Close(_)) | Err(_) => break,
            Ok(_) => {}
        }
    }
    let _ = inbound.send(Inbound::Close(id));
    writer.abort();
}
