//! Synthetic event streams reproducing the event mix of an I/O-heavy
//! kernel-build workload, scaled down by a configurable divisor.

use crate::pipeline::{EventKind, EventRecord, FileMode};
use crate::rng::SplitMix64;

/// Observed occurrences per event type in the reference workload
/// (roughly 38 minutes of whole-system capture).
pub const EVENT_MIX_BASE: [(EventKind, u64); 5] = [
    (EventKind::Boot, 1),
    (EventKind::CredFork, 336_505),
    (EventKind::Exec, 47_475),
    (EventKind::FilePerm, 3_851_401),
    (EventKind::SetId, 47_691),
];

/// Per-type counts divided by `scale`, rounded half-up, floored at one so
/// every event type stays represented.
pub fn scaled_counts(scale: u64) -> [(EventKind, u64); 5] {
    assert!(scale > 0, "scale must be positive");
    EVENT_MIX_BASE.map(|(kind, base)| (kind, ((base + scale / 2) / scale).max(1)))
}

pub fn total_events(scale: u64) -> u64 {
    scaled_counts(scale).iter().map(|(_, n)| n).sum()
}

#[derive(Clone, Debug)]
pub struct EventMixConfig {
    /// Divisor applied to the base counts (1000 gives the desk-scale mix).
    pub scale: u64,
    pub seed: u64,
    /// Prepended to every generated node id, so streams from different
    /// sources use disjoint id spaces.
    pub id_prefix: String,
}

impl EventMixConfig {
    pub fn new(scale: u64, seed: u64) -> EventMixConfig {
        EventMixConfig {
            scale,
            seed,
            id_prefix: String::new(),
        }
    }

    pub fn with_id_prefix(mut self, prefix: impl Into<String>) -> EventMixConfig {
        self.id_prefix = prefix.into();
        self
    }
}

/// Deterministic iterator over a scaled event stream. The boot event comes
/// first (processes need an ancestor), then the remaining events interleave
/// by weighted draw over the remaining per-type counts.
pub struct EventMix {
    rng: SplitMix64,
    remaining: [u64; 5],
    prefix: String,
    next_id: u64,
    timestamp_us: u64,
    processes: Vec<String>,
    next_process: u64,
    file_pool: u64,
    image_pool: u64,
    agent_pool: u64,
}

impl EventMix {
    pub fn new(config: &EventMixConfig) -> EventMix {
        let counts = scaled_counts(config.scale);
        let remaining = counts.map(|(_, n)| n);
        let fperm = remaining[3];
        let exec = remaining[2];
        let setid = remaining[4];
        EventMix {
            rng: SplitMix64::new(config.seed),
            remaining,
            prefix: config.id_prefix.clone(),
            next_id: 0,
            timestamp_us: 1_700_000_000_000_000,
            processes: Vec::new(),
            next_process: 0,
            file_pool: (fperm / 8).max(8),
            image_pool: (exec / 4).max(4),
            agent_pool: (setid / 8).clamp(1, 32),
        }
    }

    fn fresh_process(&mut self) -> String {
        let id = format!("{}AC{}", self.prefix, self.next_process);
        self.next_process += 1;
        self.processes.push(id.clone());
        id
    }

    fn random_process(&mut self) -> String {
        self.rng
            .pick(&self.processes)
            .expect("boot created the first process")
            .clone()
    }

    fn draw_kind(&mut self) -> EventKind {
        let total: u64 = self.remaining.iter().sum();
        debug_assert!(total > 0);
        let mut roll = self.rng.below(total);
        for (idx, kind) in EventKind::ALL.into_iter().enumerate() {
            if roll < self.remaining[idx] {
                self.remaining[idx] -= 1;
                return kind;
            }
            roll -= self.remaining[idx];
        }
        unreachable!("roll bounded by the sum of remaining counts")
    }
}

impl Iterator for EventMix {
    type Item = EventRecord;

    fn next(&mut self) -> Option<EventRecord> {
        let total: u64 = self.remaining.iter().sum();
        if total == 0 {
            return None;
        }
        let kind = if self.processes.is_empty() {
            self.remaining[0] -= 1;
            EventKind::Boot
        } else {
            self.draw_kind()
        };
        let (subject, object, mode) = match kind {
            EventKind::Boot => (self.fresh_process(), String::new(), FileMode::None),
            EventKind::CredFork => {
                let parent = self.random_process();
                let child = self.fresh_process();
                (parent, child, FileMode::None)
            }
            EventKind::Exec => {
                let caller = self.random_process();
                let image = format!("{}AX{}", self.prefix, self.rng.below(self.image_pool));
                (caller, image, FileMode::None)
            }
            EventKind::FilePerm => {
                let process = self.random_process();
                let file = format!("{}EN{}", self.prefix, self.rng.below(self.file_pool));
                let mode = if self.rng.below(4) < 3 {
                    FileMode::Read
                } else {
                    FileMode::Write
                };
                (process, file, mode)
            }
            EventKind::SetId => {
                let process = self.random_process();
                let agent = format!("{}AG{}", self.prefix, self.rng.below(self.agent_pool));
                (process, agent, FileMode::None)
            }
        };
        let event_id = self.next_id;
        self.next_id += 1;
        self.timestamp_us += 500;
        Some(EventRecord {
            event_id,
            kind,
            subject,
            object,
            timestamp_us: self.timestamp_us,
            mode,
        })
    }
}

/// Convenience constructor for the iterator form.
pub fn event_mix(config: &EventMixConfig) -> EventMix {
    EventMix::new(config)
}
