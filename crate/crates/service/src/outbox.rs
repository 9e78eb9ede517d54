//! Per-connection send queue.
//!
//! Events and replies are queued in order. Mesh deltas and HUD state are
//! coalesced: a pending delta absorbs newer chunk versions and a pending
//! state is replaced, and either moves behind whatever was queued since.
//! A slow client therefore receives fewer, fresher frames instead of an
//! unbounded backlog.

use std::collections::{BTreeMap, VecDeque};
use std::sync::Mutex;

use tokio::sync::Notify;

use crate::protocol::{encode, ServerMessage, WireChunk};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Slot {
    Frame,
    Mesh,
    State,
    Close,
}

#[derive(Default)]
struct Inner {
    slots: VecDeque<Slot>,
    frames: VecDeque<String>,
    mesh: BTreeMap<[usize; 3], WireChunk>,
    mesh_time: f64,
    state: Option<String>,
    closed: bool,
}

/// What the writer should send next.
pub enum Outgoing {
    Text(String),
    /// State frames are rate limited by the writer.
    State(String),
    Close,
}

#[derive(Default)]
pub struct Outbox {
    inner: Mutex<Inner>,
    notify: Notify,
}

impl Outbox {
    fn with<R>(&self, f: impl FnOnce(&mut Inner) -> R) -> R {
        let r = f(&mut self.inner.lock().expect("outbox lock"));
        self.notify.notify_one();
        r
    }

    pub fn push(&self, session_time: f64, msg: &ServerMessage) {
        let text = encode(session_time, msg);
        self.with(|q| {
            q.frames.push_back(text);
            q.slots.push_back(Slot::Frame);
        });
    }

    pub fn push_mesh(&self, session_time: f64, chunks: Vec<WireChunk>) {
        if chunks.is_empty() {
            return;
        }
        self.with(|q| {
            for c in chunks {
                match q.mesh.get(&c.chunk_coord) {
                    Some(old) if old.version >= c.version => {}
                    _ => {
                        q.mesh.insert(c.chunk_coord, c);
                    }
                }
            }
            q.mesh_time = session_time;
            q.slots.retain(|s| *s != Slot::Mesh);
            q.slots.push_back(Slot::Mesh);
        });
    }

    pub fn push_state(&self, session_time: f64, msg: &ServerMessage) {
        let text = encode(session_time, msg);
        self.with(|q| {
            q.state = Some(text);
            q.slots.retain(|s| *s != Slot::State);
            q.slots.push_back(Slot::State);
        });
    }

    /// Queues a close after everything already pending.
    pub fn close(&self) {
        self.with(|q| {
            if !q.closed {
                q.closed = true;
                q.slots.push_back(Slot::Close);
            }
        });
    }

    /// Waits for the next frame to send.
    pub async fn next(&self) -> Outgoing {
        loop {
            if let Some(out) = self.pop() {
                return out;
            }
            self.notify.notified().await;
        }
    }

    fn pop(&self) -> Option<Outgoing> {
        let mut q = self.inner.lock().expect("outbox lock");
        while let Some(slot) = q.slots.pop_front() {
            match slot {
                Slot::Frame => {
                    let text = q.frames.pop_front().expect("frame slot has a frame");
                    return Some(Outgoing::Text(text));
                }
                Slot::Mesh => {
                    let chunks: Vec<WireChunk> = std::mem::take(&mut q.mesh).into_values().collect();
                    let msg = ServerMessage::MeshDelta { chunks };
                    return Some(Outgoing::Text(encode(q.mesh_time, &msg)));
                }
                Slot::State => {
                    if let Some(text) = q.state.take() {
                        return Some(Outgoing::State(text));
                    }
                }
                Slot::Close => return Some(Outgoing::Close),
            }
        }
        None
    }
}
