//! Replayable event trace: JSON lines on an optional sink plus a running
//! digest over every record, so runs can be compared without keeping the
//! trace in memory.

use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::hash::Hash256;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceKind {
    Send,
    Deliver,
    Corrupt,
    DropCrash,
    DropPartition,
    DropInbox,
}

impl TraceKind {
    fn tag(self) -> u8 {
        match self {
            TraceKind::Send => 0,
            TraceKind::Deliver => 1,
            TraceKind::Corrupt => 2,
            TraceKind::DropCrash => 3,
            TraceKind::DropPartition => 4,
            TraceKind::DropInbox => 5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub tick: u64,
    pub event_type: TraceKind,
    pub from: usize,
    pub to: usize,
    pub payload_digest: Hash256,
}

#[derive(Default)]
pub struct TraceRecorder {
    sink: Option<Box<dyn Write>>,
    hasher: Sha256,
    count: u64,
    write_error: bool,
}

impl fmt::Debug for TraceRecorder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TraceRecorder")
            .field("count", &self.count)
            .field("has_sink", &self.sink.is_some())
            .finish()
    }
}

impl TraceRecorder {
    pub fn with_sink(sink: Box<dyn Write>) -> Self {
        TraceRecorder {
            sink: Some(sink),
            ..TraceRecorder::default()
        }
    }

    pub fn record(&mut self, tick: u64, kind: TraceKind, from: usize, to: usize, digest: &Hash256) {
        self.count += 1;
        self.hasher.update(tick.to_be_bytes());
        self.hasher.update([kind.tag()]);
        self.hasher.update((from as u64).to_be_bytes());
        self.hasher.update((to as u64).to_be_bytes());
        self.hasher.update(digest.0);
        if let Some(sink) = self.sink.as_mut() {
            let rec = TraceRecord {
                tick,
                event_type: kind,
                from,
                to,
                payload_digest: *digest,
            };
            let ok =
                serde_json::to_writer(&mut *sink, &rec).is_ok() && sink.write_all(b"\n").is_ok();
            self.write_error |= !ok;
        }
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    /// Digest over all records so far.
    pub fn digest(&self) -> Hash256 {
        Hash256(self.hasher.clone().finalize().into())
    }

    /// Flush the sink; reports whether any write failed along the way.
    pub fn flush(&mut self) -> std::io::Result<()> {
        if self.write_error {
            return Err(std::io::Error::other("trace write failed"));
        }
        match self.sink.as_mut() {
            Some(s) => s.flush(),
            None => Ok(()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::{Arc, Mutex};

    #[derive(Clone, Default)]
    struct Shared(Arc<Mutex<Vec<u8>>>);

    impl Write for Shared {
        fn write(&mut self, buf: &[u8]) -> std::io::Result<usize> {
            self.0.lock().unwrap().extend_from_slice(buf);
            Ok(buf.len())
        }
        fn flush(&mut self) -> std::io::Result<()> {
            Ok(())
        }
    }

    #[test]
    fn writes_json_lines() {
        let buf = Shared::default();
        let mut t = TraceRecorder::with_sink(Box::new(buf.clone()));
        t.record(5, TraceKind::Deliver, 1, 2, &Hash256([3; 32]));
        t.flush().unwrap();
        let text = String::from_utf8(buf.0.lock().unwrap().clone()).unwrap();
        let rec: TraceRecord = serde_json::from_str(text.trim()).unwrap();
        assert_eq!(rec.tick, 5);
        assert_eq!(rec.event_type, TraceKind::Deliver);
        assert!(text.contains("\"event_type\":\"deliver\""));
    }
}
