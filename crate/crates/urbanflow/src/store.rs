//! Single-writer, many-reader publication of traffic snapshots.

use std::sync::{Arc, Mutex};

use arc_swap::ArcSwap;
use urbanflow_core::traffic::ApplySummary;
use urbanflow_core::{TrafficSnapshot, TrafficUpdate};

/// Readers load the current snapshot without locking; writers build the next
/// version off to the side and swap it in whole, so a reader sees either all
/// of a batch or none of it.
#[derive(Debug)]
pub struct SnapshotStore {
    current: ArcSwap<TrafficSnapshot>,
    writer: Mutex<()>,
}

impl SnapshotStore {
    pub fn new(initial: TrafficSnapshot) -> Self {
        Self {
            current: ArcSwap::from_pointee(initial),
            writer: Mutex::new(()),
        }
    }

    pub fn load(&self) -> Arc<TrafficSnapshot> {
        self.current.load_full()
    }

    pub fn apply(&self, updates: &[TrafficUpdate]) -> (Arc<TrafficSnapshot>, ApplySummary) {
        let _guard = self.writer.lock().unwrap_or_else(|p| p.into_inner());
        let (next, summary) = self.current.load().apply_updates(updates);
        let next = Arc::new(next);
        self.current.store(Arc::clone(&next));
        (next, summary)
    }

    /// Replaces the snapshot outright. Versions must not go backwards.
    pub fn publish(&self, snapshot: Arc<TrafficSnapshot>) -> bool {
        let _guard = self.writer.lock().unwrap_or_else(|p| p.into_inner());
        if snapshot.version < self.current.load().version {
            return false;
        }
        self.current.store(snapshot);
        true
    }
}

impl Default for SnapshotStore {
    fn default() -> Self {
        Self::new(TrafficSnapshot::free_flow())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::thread;
    use urbanflow_core::EdgeId;

    #[test]
    fn readers_never_see_partial_batches() {
        let store = Arc::new(SnapshotStore::default());
        let writer = {
            let store = Arc::clone(&store);
            thread::spawn(move || {
                for i in 1..=200u32 {
                    let f = 1.0 / f64::from(i + 1);
                    let batch: Vec<TrafficUpdate> = (0..50)
                        .map(|e| TrafficUpdate {
                            edge_id: EdgeId(e),
                            observed_speed_factor: f,
                            timestamp: f64::from(i),
                        })
                        .collect();
                    store.apply(&batch);
                }
            })
        };
        let readers: Vec<_> = (0..4)
            .map(|_| {
                let store = Arc::clone(&store);
                thread::spawn(move || {
                    let mut last = 0;
                    for _ in 0..2000 {
                        let s = store.load();
                        assert!(s.version >= last);
                        last = s.version;
                        let f0 = s.factor(EdgeId(0));
                        assert!((0..50).all(|e| s.factor(EdgeId(e)) == f0));
                    }
                })
            })
            .collect();
        writer.join().unwrap();
        for r in readers {
            r.join().unwrap();
        }
        assert_eq!(store.load().version, 200);
    }

    #[test]
    fn publish_refuses_older_versions() {
        let store = SnapshotStore::default();
        let (v1, _) = store.apply(&[]);
        assert!(!store.publish(Arc::new(TrafficSnapshot::free_flow())));
        assert_eq!(store.load().version, v1.version);
    }
}
