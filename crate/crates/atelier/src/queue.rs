//! Per-backend admission control.
//!
//! A backend that declares `max_concurrency` gets at most that many
//! requests in flight. Up to `depth` further requests wait, each for at
//! most `timeout`; anything beyond that is turned away immediately.

use std::sync::{Condvar, Mutex};
use std::time::Duration;

use thiserror::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Error)]
pub enum QueueError {
    #[error("backend is busy and its queue is full")]
    Busy,
    #[error("timed out waiting for the backend")]
    Timeout,
}

#[derive(Default)]
struct State {
    running: usize,
    waiting: usize,
}

pub struct BackendQueue {
    limit: Option<usize>,
    depth: usize,
    timeout: Duration,
    state: Mutex<State>,
    freed: Condvar,
}

pub struct Permit<'a> {
    queue: &'a BackendQueue,
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        let mut s = self.queue.state.lock().unwrap_or_else(|e| e.into_inner());
        s.running -= 1;
        self.queue.freed.notify_one();
    }
}

impl BackendQueue {
    pub fn new(limit: Option<u32>, depth: usize, timeout: Duration) -> Self {
        BackendQueue { limit: limit.map(|l| l.max(1) as usize), depth, timeout, state: Mutex::default(), freed: Condvar::new() }
    }

    /// Suggested client back-off in whole seconds.
    pub fn retry_after_secs(&self) -> u64 {
        self.timeout.as_secs().max(1)
    }

    pub fn in_flight(&self) -> usize {
        self.state.lock().unwrap_or_else(|e| e.into_inner()).running
    }

    pub fn acquire(&self) -> Result<Permit<'_>, QueueError> {
        let mut s = self.state.lock().unwrap_or_else(|e| e.into_inner());
        let Some(limit) = self.limit else {
            s.running += 1;
            return Ok(Permit { queue: self });
        };
        if s.running < limit && s.waiting == 0 {
            s.running += 1;
            return Ok(Permit { queue: self });
        }
        if s.waiting >= self.depth {
            return Err(QueueError::Busy);
        }
        s.waiting += 1;
        let (mut s, result) = self.freed.wait_timeout_while(s, self.timeout, |s| s.running >= limit).unwrap_or_else(|e| e.into_inner());
        s.waiting -= 1;
        if result.timed_out() && s.running >= limit {
            return Err(QueueError::Timeout);
        }
        s.running += 1;
        Ok(Permit { queue: self })
    }
}
