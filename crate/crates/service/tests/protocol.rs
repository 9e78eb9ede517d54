use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::sync::Arc;
use std::time::{Duration, Instant};

use futures_util::{SinkExt, StreamExt};
use relicdig_core::sim::{run_bot, BotPolicy, RunOptions};
use relicdig_core::{
    builtin_relic, mesh_all, EarthMesher, Event, EventKind, MeshChunk, Pose, Session,
    SessionParams, Stroke,
};
use relicdig_core::session::InputRecord;
use relicdig_service::protocol::{decode, encode, ClientMessage, Frame, ServerMessage};
use relicdig_service::{bind, serve, Catalog};
use tokio::net::TcpStream;
use tokio::sync::oneshot;
use tokio::time::timeout;
use tokio_tungstenite::tungstenite::Message;
use tokio_tungstenite::{MaybeTlsStream, WebSocketStream};

const WAIT: Duration = Duration::from_secs(20);

struct Server {
    addr: SocketAddr,
    _stop: oneshot::Sender<()>,
}

async fn start() -> Server {
    let listener = bind("127.0.0.1:0".parse().unwrap()).await.unwrap();
    let addr = listener.local_addr().unwrap();
    let (stop, stopped) = oneshot::channel::<()>();
    tokio::spawn(serve(listener, Arc::new(Catalog::builtin()), async {
        let _ = stopped.await;
    }));
    Server { addr, _stop: stop }
}

struct Client {
    ws: WebSocketStream<MaybeTlsStream<TcpStream>>,
}

impl Client {
    async fn connect(server: &Server) -> Self {
        let (ws, _) = tokio_tungstenite::connect_async(format!("ws://{}", server.addr))
            .await
            .unwrap();
        Client { ws }
    }

    async fn send(&mut self, msg: &ClientMessage) {
        self.ws.send(Message::text(encode(0.0, msg))).await.unwrap();
    }

    async fn send_raw(&mut self, text: &str) {
        self.ws.send(Message::text(text.to_string())).await.unwrap();
    }

    /// Next server message, or `None` once the server closed the connection.
    async fn recv(&mut self) -> Option<ServerMessage> {
        loop {
            let msg = timeout(WAIT, self.ws.next()).await.expect("server went quiet");
            match msg {
                Some(Ok(Message::Text(text))) => {
                    let frame: Frame<ServerMessage> = decode(text.as_str()).unwrap();
                    assert!(frame.session_time.is_finite());
                    return Some(frame.message);
                }
                Some(Ok(Message::Close(_))) | None | Some(Err(_)) => return None,
                Some(Ok(_)) => {}
            }
        }
    }

    async fn expect(&mut self) -> ServerMessage {
        self.recv().await.expect("connection closed")
    }

    /// Skips STATE frames.
    async fn next_non_state(&mut self) -> ServerMessage {
        loop {
            match self.expect().await {
                ServerMessage::State { .. } => {}
                other => return other,
            }
        }
    }

    async fn create(&mut self, relic: &str, params: Option<SessionParams>) -> ServerMessage {
        self.send(&ClientMessage::CreateSession {
            relic_name: relic.into(),
            params,
            seed: Some(7),
        })
        .await;
        self.next_non_state().await
    }
}

fn error_code(msg: &ServerMessage) -> &str {
    match msg {
        ServerMessage::Error { code, .. } => code,
        other => panic!("expected ERROR, got {other:?}"),
    }
}

/// Stroke poses that actually carve the relic's clod.
fn bot_poses(relic: &str, n: u64) -> Vec<Pose> {
    let opts = RunOptions {
        max_strokes: Some(n),
        ..Default::default()
    };
    let run = run_bot(builtin_relic(relic).unwrap(), &BotPolicy::random_carver(10.0, 3), &opts)
        .unwrap();
    run.session
        .inputs()
        .iter()
        .filter_map(|r| match r {
            InputRecord::Stroke { payload, .. } => Some(*payload),
            _ => None,
        })
        .collect()
}

fn stroke(pose: Pose) -> ClientMessage {
    ClientMessage::ApplyStroke { t: None, pose }
}

fn decode_chunks(msg: &ServerMessage) -> Vec<MeshChunk> {
    let ServerMessage::MeshDelta { chunks } = msg else {
        panic!("expected MESH_DELTA, got {msg:?}")
    };
    chunks.iter().map(|c| MeshChunk::try_from(c).unwrap()).collect()
}

fn geometry(c: &MeshChunk) -> (Vec<u32>, Vec<u32>, Vec<u32>) {
    let bits = |v: &[[f32; 3]]| v.iter().flatten().map(|f| f.to_bits()).collect();
    (bits(&c.vertices), bits(&c.normals), c.indices.clone())
}

#[tokio::test]
async fn commands_need_a_session() {
    let server = start().await;
    let mut c = Client::connect(&server).await;
    c.send(&stroke(Pose::at([0.0; 3]))).await;
    assert_eq!(error_code(&c.expect().await), "NO_SESSION");
    c.send(&ClientMessage::SubscribeMesh).await;
    assert_eq!(error_code(&c.expect().await), "NO_SESSION");
    c.send(&ClientMessage::Ping { t: 5.0 }).await;
    assert_eq!(c.expect().await, ServerMessage::Pong { t: 5.0 });

    assert_eq!(error_code(&c.create("atlantis", None).await), "UNKNOWN_RELIC");
    assert!(matches!(
        c.create("arhat", None).await,
        ServerMessage::SessionCreated { .. }
    ));
    assert_eq!(error_code(&c.create("arhat", None).await), "SESSION_EXISTS");
    c.send(&ClientMessage::SelectTool { name: "spoon".into() }).await;
    assert_eq!(error_code(&c.next_non_state().await), "UNKNOWN_TOOL");
}

#[tokio::test]
async fn gold_mask_session_is_created_with_paper_rules() {
    let server = start().await;
    let mut c = Client::connect(&server).await;
    let ServerMessage::SessionCreated {
        relic_name,
        artifact_mesh,
        tools,
        session_params,
        grid_params,
        ..
    } = c.create("gold_mask", None).await
    else {
        panic!("no SESSION_CREATED")
    };
    assert_eq!(relic_name, "gold_mask");
    assert_eq!(tools.len(), 2);
    assert_eq!(session_params.time_limit_s, 420.0);
    assert_eq!(session_params.max_health, 40);
    assert_eq!(session_params.hit_penalty, 1);
    assert!(grid_params.cell_count() > 0);
    let triangles: usize = artifact_mesh
        .iter()
        .map(|w| MeshChunk::try_from(w).unwrap().triangle_count())
        .sum();
    assert!(triangles > 0);

    let ServerMessage::State {
        health,
        max_health,
        clock_remaining,
        exposure,
        ..
    } = c.expect().await
    else {
        panic!("no STATE after SESSION_CREATED")
    };
    assert_eq!((health, max_health), (40, 40));
    assert!(clock_remaining <= 420.0 && clock_remaining > 400.0);
    assert_eq!(exposure, 0.0);
}

#[tokio::test]
async fn malformed_frames_close_the_connection() {
    let server = start().await;
    for bad in [
        r#"{"type":"PING","session_time":0,"t":"#,
        r#"{"type":"PING","t":1}"#,
        r#"{"type":"FLY","session_time":0}"#,
    ] {
        let mut c = Client::connect(&server).await;
        c.send_raw(bad).await;
        assert_eq!(error_code(&c.expect().await), "BAD_FRAME");
        assert!(c.recv().await.is_none(), "connection stayed open after {bad}");
    }
    let mut c = Client::connect(&server).await;
    c.ws.send(Message::binary(vec![1u8, 2, 3])).await.unwrap();
    assert_eq!(error_code(&c.expect().await), "BAD_FRAME");
    assert!(c.recv().await.is_none());
}

#[tokio::test]
async fn short_sessions_time_out() {
    let server = start().await;
    let mut c = Client::connect(&server).await;
    let params = SessionParams {
        time_limit_s: 0.3,
        ..SessionParams::default()
    };
    assert!(matches!(
        c.create("arhat", Some(params)).await,
        ServerMessage::SessionCreated { .. }
    ));
    let event = loop {
        if let ServerMessage::Event { event } = c.next_non_state().await {
            break event;
        }
    };
    assert!(matches!(event.event, EventKind::TimeUp { .. }));
    assert_eq!(event.timestamp, 0.3);
    c.send(&stroke(Pose::at([0.0; 3]))).await;
    assert_eq!(error_code(&c.next_non_state().await), "NOT_RUNNING");
}

#[tokio::test]
async fn stroke_deltas_match_local_remesh() {
    let server = start().await;
    let mut c = Client::connect(&server).await;
    c.create("gold_mask", None).await;
    c.send(&ClientMessage::SubscribeMesh).await;

    let mut local = Session::start(builtin_relic("gold_mask").unwrap(), 7).unwrap();
    let mut mesher = EarthMesher::default();
    let initial: Vec<MeshChunk> = mesher
        .remesh_dirty(local.grid_mut())
        .into_iter()
        .filter(|m| !m.is_empty())
        .collect();
    let first = decode_chunks(&c.next_non_state().await);
    assert_eq!(first, initial);
    // re-subscribing does not resend
    c.send(&ClientMessage::SubscribeMesh).await;

    for pose in bot_poses("gold_mask", 8) {
        c.send(&stroke(pose)).await;
        let mut events = Vec::new();
        let mut delta = Vec::new();
        loop {
            match c.expect().await {
                ServerMessage::Event { event } => events.push(event),
                m @ ServerMessage::MeshDelta { .. } => {
                    assert!(!events.is_empty(), "mesh before the stroke's events");
                    delta = decode_chunks(&m);
                }
                ServerMessage::State { .. } if !events.is_empty() => break,
                ServerMessage::State { .. } => {}
                other => panic!("unexpected {other:?}"),
            }
        }
        let t = events[0].timestamp;
        let expected_events = local.apply_stroke(&Stroke::new(t, pose)).unwrap();
        assert_eq!(events, expected_events);
        let expected = mesher.remesh_dirty(local.grid_mut());
        assert!(!expected.is_empty());
        assert_eq!(delta, expected);
    }
}

#[tokio::test]
async fn scripted_client_sees_engine_order() {
    let server = start().await;
    let mut c = Client::connect(&server).await;
    c.create("gold_mask", None).await;

    // no mesh is pushed before subscribing
    let poses = bot_poses("gold_mask", 200);
    assert_eq!(poses.len(), 200);
    c.send(&stroke(poses[0])).await;
    c.send(&ClientMessage::Ping { t: 1.0 }).await;
    let mut events: Vec<Event> = Vec::new();
    loop {
        match c.expect().await {
            ServerMessage::Pong { .. } => break,
            ServerMessage::Event { event } => events.push(event),
            ServerMessage::State { .. } => {}
            other => panic!("unexpected {other:?} before subscribing"),
        }
    }

    c.send(&ClientMessage::SubscribeMesh).await;
    for &pose in &poses[1..] {
        c.send(&stroke(pose)).await;
    }
    c.send(&ClientMessage::Ping { t: 2.0 }).await;

    let mut latest: BTreeMap<[usize; 3], MeshChunk> = BTreeMap::new();
    let mut state_times = Vec::new();
    loop {
        match c.expect().await {
            ServerMessage::Pong { t } => {
                assert_eq!(t, 2.0);
                break;
            }
            ServerMessage::Event { event } => events.push(event),
            ServerMessage::State { .. } => state_times.push(Instant::now()),
            m @ ServerMessage::MeshDelta { .. } => {
                for chunk in decode_chunks(&m) {
                    if let Some(old) = latest.get(&chunk.chunk_coord) {
                        assert!(chunk.version > old.version, "version went backwards");
                    }
                    latest.insert(chunk.chunk_coord, chunk);
                }
            }
            other => panic!("unexpected {other:?}"),
        }
    }
    for pair in state_times.windows(2) {
        assert!(pair[1] - pair[0] >= Duration::from_millis(80), "STATE above 10 Hz");
    }

    // rebuild the engine log from the server's own stroke stamps
    let mut engine = Session::start(builtin_relic("gold_mask").unwrap(), 7).unwrap();
    let mut poses = poses.iter();
    for e in &events {
        if matches!(e.event, EventKind::StrokeApplied { .. }) {
            let pose = *poses.next().unwrap();
            engine.apply_stroke(&Stroke::new(e.timestamp, pose)).unwrap();
        }
    }
    assert_eq!(poses.len(), 0, "every stroke was applied");
    assert_eq!(events, engine.events());

    let full: BTreeMap<[usize; 3], _> = mesh_all(engine.grid(), 0.5)
        .into_iter()
        .map(|m| (m.chunk_coord, geometry(&m)))
        .filter(|(_, g)| !g.2.is_empty())
        .collect();
    let streamed: BTreeMap<[usize; 3], _> = latest
        .values()
        .map(|m| (m.chunk_coord, geometry(m)))
        .filter(|(_, g)| !g.2.is_empty())
        .collect();
    assert_eq!(streamed, full);
}
