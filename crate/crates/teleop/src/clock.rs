//! Time sources for the server's paced threads.
//!
//! The control loop and the broadcaster only ever wait for absolute deadlines,
//! so the same code runs against wall-clock time or a [`VirtualClock`] that a
//! test advances event by event.

use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Condvar, Mutex};
use std::thread;
use std::time::{Duration, Instant};

pub trait Clock: Send + Sync {
    /// Seconds since the clock's epoch.
    fn now(&self) -> f64;

    /// Blocks until `now() >= deadline`. Returns `false` once the clock is closed.
    fn sleep_until(&self, deadline: f64) -> bool;

    /// Wakes every sleeper; subsequent sleeps return `false` immediately.
    fn close(&self);

    /// Announces a thread that will pace itself with [`Clock::sleep_until`].
    fn attach(&self) {}

    fn detach(&self) {}
}

/// Monotonic wall-clock time.
#[derive(Debug)]
pub struct RealClock {
    epoch: Instant,
    closed: AtomicBool,
}

impl RealClock {
    /// Longest uninterrupted sleep, so that `close` is noticed promptly.
    const SLICE: Duration = Duration::from_millis(5);

    pub fn new() -> Self {
        Self {
            epoch: Instant::now(),
            closed: AtomicBool::new(false),
        }
    }
}

impl Default for RealClock {
    fn default() -> Self {
        Self::new()
    }
}

impl Clock for RealClock {
    fn now(&self) -> f64 {
        self.epoch.elapsed().as_secs_f64()
    }

    fn sleep_until(&self, deadline: f64) -> bool {
        loop {
            if self.closed.load(Ordering::Acquire) {
                return false;
            }
            let remaining = deadline - self.now();
            if remaining <= 0.0 {
                return true;
            }
            thread::sleep(Duration::from_secs_f64(remaining).min(Self::SLICE));
        }
    }

    fn close(&self) {
        self.closed.store(true, Ordering::Release);
    }
}

#[derive(Debug, Default)]
struct VirtualState {
    now: f64,
    attached: usize,
    /// Deadlines of the threads currently blocked, one entry per thread.
    sleepers: Vec<f64>,
    closed: bool,
}

impl VirtualState {
    /// Every attached thread is blocked on a deadline still in the future.
    fn quiescent(&self) -> bool {
        self.closed || (self.sleepers.len() >= self.attached && self.sleepers.iter().all(|d| *d > self.now))
    }
}

/// A clock that only moves when told to.
///
/// [`VirtualClock::run_until`] advances time from one pending deadline to the
/// next and waits for every attached thread to block again before moving on,
/// so a run is a deterministic sequence of events. Threads whose deadlines
/// coincide wake together.
#[derive(Debug, Default)]
pub struct VirtualClock {
    state: Mutex<VirtualState>,
    changed: Condvar,
}

impl VirtualClock {
    pub fn new() -> Self {
        Self::default()
    }

    /// Processes every deadline up to and including `t`, then leaves the clock at `t`.
    pub fn run_until(&self, t: f64) {
        let mut s = self.state.lock().unwrap();
        loop {
            s = self.changed.wait_while(s, |s| !s.quiescent()).unwrap();
            if s.closed {
                return;
            }
            let next = s.sleepers.iter().copied().fold(f64::INFINITY, f64::min);
            if next > t {
                if t > s.now {
                    s.now = t;
                }
                return;
            }
            s.now = next;
            self.changed.notify_all();
        }
    }

    /// Advances by `dt` from the current time.
    pub fn run_for(&self, dt: f64) {
        let target = self.now() + dt;
        self.run_until(target);
    }

    /// Blocks until every attached thread waits on a future deadline.
    pub fn settle(&self) {
        let s = self.state.lock().unwrap();
        drop(self.changed.wait_while(s, |s| !s.quiescent()).unwrap());
    }
}

impl Clock for VirtualClock {
    fn now(&self) -> f64 {
        self.state.lock().unwrap().now
    }

    fn sleep_until(&self, deadline: f64) -> bool {
        let mut s = self.state.lock().unwrap();
        if s.closed {
            return false;
        }
        if s.now >= deadline {
            return true;
        }
        s.sleepers.push(deadline);
        self.changed.notify_all();
        s = self.changed.wait_while(s, |s| s.now < deadline && !s.closed).unwrap();
        let i = s.sleepers.iter().position(|d| *d == deadline).expect("sleeper registered");
        s.sleepers.swap_remove(i);
        self.changed.notify_all();
        !s.closed
    }

    fn close(&self) {
        self.state.lock().unwrap().closed = true;
        self.changed.notify_all();
    }

    fn attach(&self) {
        self.state.lock().unwrap().attached += 1;
    }

    fn detach(&self) {
        let mut s = self.state.lock().unwrap();
        s.attached -= 1;
        self.changed.notify_all();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Arc;

    #[test]
    fn virtual_sleepers_wake_in_deadline_order() {
        let clock = Arc::new(VirtualClock::new());
        let log = Arc::new(Mutex::new(Vec::new()));
        let mut handles = Vec::new();
        for (name, period) in [("a", 0.3), ("b", 0.5)] {
            let (clock, log) = (clock.clone(), log.clone());
            clock.attach();
            handles.push(thread::spawn(move || {
                for k in 1..=3 {
                    if !clock.sleep_until(k as f64 * period) {
                        break;
                    }
                    log.lock().unwrap().push((name, clock.now()));
                }
                clock.detach();
            }));
        }
        clock.run_until(1.0);
        let seen = log.lock().unwrap().clone();
        assert_eq!(
            seen,
            vec![("a", 0.3), ("b", 0.5), ("a", 0.6), ("a", 0.8999999999999999), ("b", 1.0)]
        );
        assert_eq!(clock.now(), 1.0);
        clock.close();
        for h in handles {
            h.join().unwrap();
        }
    }

    #[test]
    fn real_clock_close_interrupts_sleep() {
        let clock = Arc::new(RealClock::new());
        let c = clock.clone();
        let h = thread::spawn(move || c.sleep_until(60.0));
        thread::sleep(Duration::from_millis(20));
        clock.close();
        assert!(!h.join().unwrap());
    }
}
