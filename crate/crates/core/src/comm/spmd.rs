use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::mpsc;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use super::{Communicator, Reduction, SyncStats};

pub const DEADLOCK_BUDGET_ENV: &str = "BLOCKGS_DEADLOCK_BUDGET_MS";
pub const DEFAULT_DEADLOCK_BUDGET: Duration = Duration::from_millis(5000);

/// Parses a deadlock budget in milliseconds, falling back to the default for
/// missing or malformed values.
pub fn deadlock_budget_from(value: Option<&str>) -> Duration {
    value
        .and_then(|v| v.trim().parse::<u64>().ok())
        .filter(|&ms| ms > 0)
        .map(Duration::from_millis)
        .unwrap_or(DEFAULT_DEADLOCK_BUDGET)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SpmdConfig {
    pub reduction: Reduction,
    /// How long a rank waits on a single receive before reporting a deadlock.
    pub deadlock_budget: Duration,
}

impl Default for SpmdConfig {
    fn default() -> Self {
        Self {
            reduction: Reduction::default(),
            deadlock_budget: deadlock_budget_from(std::env::var(DEADLOCK_BUDGET_ENV).ok().as_deref()),
        }
    }
}

impl SpmdConfig {
    pub fn with_reduction(mut self, reduction: Reduction) -> Self {
        self.reduction = reduction;
        self
    }

    pub fn with_deadlock_budget(mut self, budget: Duration) -> Self {
        self.deadlock_budget = budget;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SpmdError {
    #[error("at least one process is required")]
    NoProcesses,
    #[error("rank {rank} panicked: {message}")]
    Panicked { rank: usize, message: String },
}

/// Per-rank results of an SPMD run, in rank order, and rank 0's counters.
#[derive(Debug)]
pub struct SpmdRun<T> {
    pub results: Vec<T>,
    pub stats: SyncStats,
}

fn panic_message(payload: &(dyn std::any::Any + Send)) -> String {
    if let Some(s) = payload.downcast_ref::<&str>() {
        (*s).to_owned()
    } else if let Some(s) = payload.downcast_ref::<String>() {
        s.clone()
    } else {
        "non-string panic payload".to_owned()
    }
}

/// Runs `body` once per rank. With one process the body runs inline on a
/// serial communicator; otherwise each rank is a scoped worker thread.
///
/// A panicking rank wakes its peers (their pending receives fail with
/// [`super::CommError::PeerPanicked`]) and the run reports the rank that
/// panicked first.
pub fn run_spmd<T, F>(procs: usize, config: &SpmdConfig, body: F) -> Result<SpmdRun<T>, SpmdError>
where
    T: Send,
    F: Fn(&Communicator) -> T + Sync,
{
    if procs == 0 {
        return Err(SpmdError::NoProcesses);
    }
    if procs == 1 {
        let comm = Communicator::serial_with(config.reduction);
        return match catch_unwind(AssertUnwindSafe(|| body(&comm))) {
            Ok(r) => Ok(SpmdRun {
                results: vec![r],
                stats: comm.stats(),
            }),
            Err(p) => Err(SpmdError::Panicked {
                rank: 0,
                message: panic_message(p.as_ref()),
            }),
        };
    }

    let (senders, receivers): (Vec<_>, Vec<_>) = (0..procs).map(|_| mpsc::channel()).unzip();
    let first_panic = Arc::new(Mutex::new(None));
    let outcomes: Vec<std::thread::Result<(T, SyncStats)>> = std::thread::scope(|scope| {
        let handles: Vec<_> = receivers
            .into_iter()
            .enumerate()
            .map(|(rank, inbox)| {
                let comm = Communicator::simulated(
                    rank,
                    procs,
                    config.reduction,
                    inbox,
                    senders.clone(),
                    config.deadlock_budget,
                    first_panic.clone(),
                );
                let body = &body;
                std::thread::Builder::new()
                    .name(format!("rank-{rank}"))
                    .spawn_scoped(scope, move || {
                        let r = body(&comm);
                        (r, comm.stats())
                    })
                    .expect("spawn rank thread")
            })
            .collect();
        handles.into_iter().map(|h| h.join()).collect()
    });
    drop(senders);

    let mut results = Vec::with_capacity(procs);
    let mut stats = None;
    let mut panics = Vec::new();
    for (rank, outcome) in outcomes.into_iter().enumerate() {
        match outcome {
            Ok((r, s)) => {
                if rank == 0 {
                    stats = Some(s);
                }
                results.push(r);
            }
            Err(p) => panics.push((rank, panic_message(p.as_ref()))),
        }
    }
    if !panics.is_empty() {
        let first = first_panic.lock().ok().and_then(|g| *g);
        let (rank, message) = first
            .and_then(|f| panics.iter().find(|(r, _)| *r == f).cloned())
            .unwrap_or_else(|| panics[0].clone());
        return Err(SpmdError::Panicked { rank, message });
    }
    Ok(SpmdRun {
        results,
        stats: stats.unwrap_or_default(),
    })
}
