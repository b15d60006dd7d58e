use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use once_cell::sync::OnceCell;

use crate::error::{Error, Result};
use crate::simulators::Simulator;

type Slot = Arc<OnceCell<Arc<Vec<f64>>>>;

/// Memoizes simulator outputs keyed by the exact input point.
///
/// At most one evaluation runs per key; concurrent requesters of the same
/// key block on it and all observe the same output. Failed evaluations
/// are not cached.
#[derive(Default)]
pub struct SimCache {
    slots: Mutex<HashMap<Vec<u64>, Slot>>,
    misses: AtomicUsize,
    requests: AtomicUsize,
}

// -0.0 and 0.0 share a key; NaN inputs are rejected before reaching here.
fn key(point: &[f64]) -> Vec<u64> {
    point
        .iter()
        .map(|&x| if x == 0.0 { 0u64 } else { x.to_bits() })
        .collect()
}

impl SimCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn evaluate(&self, sim: &dyn Simulator, point: &[f64]) -> Result<Arc<Vec<f64>>> {
        if point.iter().any(|x| x.is_nan()) {
            return Err(Error::invalid("NaN in simulator input"));
        }
        self.requests.fetch_add(1, Ordering::Relaxed);
        let slot = {
            let mut slots = self.slots.lock().expect("sim cache poisoned");
            slots.entry(key(point)).or_default().clone()
        };
        slot.get_or_try_init(|| {
            let out = sim.evaluate(point).map_err(|e| match e {
                e @ Error::Simulator { .. } => e,
                other => Error::Simulator {
                    point: point.to_vec(),
                    message: other.to_string(),
                },
            })?;
            self.misses.fetch_add(1, Ordering::Relaxed);
            Ok(Arc::new(out))
        })
        .cloned()
    }

    /// Number of simulator runs actually performed.
    pub fn misses(&self) -> usize {
        self.misses.load(Ordering::Relaxed)
    }

    /// Number of lookups, hits and misses together.
    pub fn requests(&self) -> usize {
        self.requests.load(Ordering::Relaxed)
    }

    pub fn len(&self) -> usize {
        let slots = self.slots.lock().expect("sim cache poisoned");
        slots.values().filter(|s| s.get().is_some()).count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl std::fmt::Debug for SimCache {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SimCache")
            .field("entries", &self.len())
            .field("misses", &self.misses())
            .field("requests", &self.requests())
            .finish()
    }
}
