use std::future::Future;
use std::io;
use std::net::SocketAddr;
use std::sync::Arc;
use std::time::Duration;

use futures_util::{SinkExt, StreamExt};
use relicdig_core::{EarthMesher, Session, Stroke};
use tokio::net::{TcpListener, TcpStream};
use tokio::time::{interval, sleep_until, Instant, MissedTickBehavior};
use tokio_tungstenite::tungstenite::Message;

use crate::catalog::Catalog;
use crate::outbox::{Outbox, Outgoing};
use crate::protocol::{decode, ClientMessage, Frame, ServerMessage, WireChunk};

/// Session clock tick while a connection is idle.
pub const TICK_INTERVAL: Duration = Duration::from_millis(100);
/// Minimum spacing of STATE frames on one connection.
pub const STATE_MIN_INTERVAL: Duration = Duration::from_millis(100);

pub async fn bind(addr: SocketAddr) -> io::Result<TcpListener> {
    TcpListener::bind(addr).await
}

/// Accepts connections until `shutdown` resolves.
pub async fn serve(
    listener: TcpListener,
    catalog: Arc<Catalog>,
    shutdown: impl Future<Output = ()>,
) -> io::Result<()> {
    tokio::pin!(shutdown);
    let mut next_id = 0u64;
    loop {
        tokio::select! {
            _ = &mut shutdown => return Ok(()),
            accepted = listener.accept() => {
                // transient accept failures (e.g. fd exhaustion) must not stop the server
                let Ok((stream, _)) = accepted else { continue };
                next_id += 1;
                tokio::spawn(connection(stream, Arc::clone(&catalog), next_id));
            }
        }
    }
}

async fn connection(stream: TcpStream, catalog: Arc<Catalog>, id: u64) {
    let _ = stream.set_nodelay(true);
    let Ok(ws) = tokio_tungstenite::accept_async(stream).await else {
        return;
    };
    let (mut sink, mut source) = ws.split();
    let outbox = Arc::new(Outbox::default());

    let writer = {
        let outbox = Arc::clone(&outbox);
        tokio::spawn(async move {
            let mut next_state = Instant::now();
            loop {
                let sent = match outbox.next().await {
                    Outgoing::Text(text) => sink.send(Message::text(text)).await,
                    Outgoing::State(text) => {
                        sleep_until(next_state).await;
                        next_state = Instant::now() + STATE_MIN_INTERVAL;
                        sink.send(Message::text(text)).await
                    }
                    Outgoing::Close => {
                        let _ = sink.send(Message::Close(None)).await;
                        break;
                    }
                };
                if sent.is_err() {
                    break;
                }
            }
        })
    };

    let mut conn = Connection {
        catalog,
        id,
        outbox: Arc::clone(&outbox),
        live: None,
    };
    let mut ticker = interval(TICK_INTERVAL);
    ticker.set_missed_tick_behavior(MissedTickBehavior::Skip);
    loop {
        tokio::select! {
            incoming = source.next() => match incoming {
                Some(Ok(Message::Text(text))) => match decode::<ClientMessage>(text.as_str()) {
                    Ok(Frame { message, .. }) => conn.handle(message),
                    Err(e) => {
                        outbox.push(conn.session_time(), &ServerMessage::error("BAD_FRAME", e.to_string()));
                        break;
                    }
                },
                Some(Ok(Message::Binary(_))) => {
                    outbox.push(conn.session_time(), &ServerMessage::error("BAD_FRAME", "binary frames are not accepted"));
                    break;
                }
                Some(Ok(Message::Close(_))) | Some(Err(_)) | None => break,
                Some(Ok(_)) => {}
            },
            _ = ticker.tick() => conn.tick(),
        }
    }
    outbox.close();
    let _ = writer.await;
}

struct Live {
    session: Session,
    started: Instant,
    mesher: EarthMesher,
    subscribed: bool,
}

struct Connection {
    catalog: Arc<Catalog>,
    id: u64,
    outbox: Arc<Outbox>,
    live: Option<Live>,
}

impl Connection {
    fn session_time(&self) -> f64 {
        self.live.as_ref().map_or(0.0, |l| l.session.state().clock)
    }

    fn error(&self, code: &str, message: impl Into<String>) {
        self.outbox
            .push(self.session_time(), &ServerMessage::error(code, message));
    }

    fn handle(&mut self, msg: ClientMessage) {
        match msg {
            ClientMessage::Ping { t } => {
                self.outbox
                    .push(self.session_time(), &ServerMessage::Pong { t });
            }
            ClientMessage::CreateSession {
                relic_name,
                params,
                seed,
            } => self.create(&relic_name, params, seed.unwrap_or(0)),
            other => {
                if self.live.is_none() {
                    self.error("NO_SESSION", "send CREATE_SESSION first");
                    return;
                }
                match other {
                    ClientMessage::ApplyStroke { pose, .. } => self.stroke(pose),
                    ClientMessage::SelectTool { name } => self.select_tool(&name),
                    ClientMessage::SubscribeMesh => self.subscribe(),
                    ClientMessage::Ping { .. } | ClientMessage::CreateSession { .. } => {
                        unreachable!("handled above")
                    }
                }
            }
        }
    }

    fn create(
        &mut self,
        relic: &str,
        params: Option<relicdig_core::SessionParams>,
        seed: u64,
    ) {
        if self.live.is_some() {
            self.error("SESSION_EXISTS", "this connection already has a session");
            return;
        }
        let Some(spec) = self.catalog.get(relic) else {
            self.error("UNKNOWN_RELIC", format!("no relic named {relic:?}"));
            return;
        };
        let params = params.unwrap_or(spec.session);
        let session = match Session::start_with_params(spec, params, seed) {
            Ok(s) => s,
            Err(e) => {
                self.error(e.code(), e.to_string());
                return;
            }
        };
        let spec = session.spec();
        let msg = ServerMessage::SessionCreated {
            session_id: format!("s{}", self.id),
            relic_name: spec.name.clone(),
            artifact_mesh: session.artifact_mesh().iter().map(WireChunk::from).collect(),
            grid_params: *session.grid().params(),
            tools: spec.tools.clone(),
            session_params: *session.params(),
        };
        self.outbox.push(0.0, &msg);
        self.live = Some(Live {
            session,
            started: Instant::now(),
            mesher: EarthMesher::default(),
            subscribed: false,
        });
        self.push_state();
    }

    fn stroke(&mut self, pose: relicdig_core::Pose) {
        let live = self.live.as_mut().expect("checked by caller");
        let t = live.started.elapsed().as_secs_f64();
        match live.session.apply_stroke(&Stroke::new(t, pose)) {
            Ok(events) => {
                self.push_events(events);
                self.push_mesh();
                self.push_state();
            }
            Err(e) => self.error(e.code(), e.to_string()),
        }
    }

    fn select_tool(&mut self, name: &str) {
        let live = self.live.as_mut().expect("checked by caller");
        match live.session.select_tool(name) {
            Ok(()) => self.push_state(),
            Err(e) => self.error(e.code(), e.to_string()),
        }
    }

    fn subscribe(&mut self) {
        let live = self.live.as_mut().expect("checked by caller");
        if live.subscribed {
            return;
        }
        live.subscribed = true;
        live.mesher.remesh_dirty(live.session.grid_mut());
        let chunks: Vec<WireChunk> = live
            .mesher
            .chunks()
            .filter(|c| !c.is_empty())
            .map(WireChunk::from)
            .collect();
        self.outbox.push_mesh(live.session.state().clock, chunks);
    }

    fn tick(&mut self) {
        let Some(live) = self.live.as_mut() else {
            return;
        };
        if live.session.status().is_terminal() {
            return;
        }
        let now = live.started.elapsed().as_secs_f64();
        // the clock may already be ahead of `now` only if a stroke landed in between
        let Ok(events) = live.session.tick(now.max(live.session.state().clock)) else {
            return;
        };
        self.push_events(events);
        self.push_state();
    }

    fn push_events(&self, events: Vec<relicdig_core::Event>) {
        for event in events {
            let t = event.timestamp;
            self.outbox.push(t, &ServerMessage::Event { event });
        }
    }

    fn push_mesh(&mut self) {
        let live = self.live.as_mut().expect("session exists");
        if !live.subscribed {
            return;
        }
        let fresh = live.mesher.remesh_dirty(live.session.grid_mut());
        let clock = live.session.state().clock;
        self.outbox
            .push_mesh(clock, fresh.iter().map(WireChunk::from).collect());
    }

    fn push_state(&self) {
        let live = self.live.as_ref().expect("session exists");
        let s = live.session.state();
        let msg = ServerMessage::State {
            status: s.status,
            health: s.health,
            max_health: live.session.params().max_health,
            clock_remaining: live.session.time_remaining(),
            exposure: s.exposure,
            active_tool: s.active_tool.clone(),
        };
        self.outbox.push_state(s.clock, &msg);
    }
}
