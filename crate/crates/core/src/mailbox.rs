//! A latest-value mailbox for handing commands to a real-time loop.
//!
//! Posting replaces whatever is pending; taking empties the slot. Both sides are
//! a single atomic swap, so neither can block the other. Memory is bounded by one
//! pending value regardless of how fast producers post.

use std::marker::PhantomData;
use std::ptr;
use std::sync::atomic::{AtomicPtr, AtomicU64, Ordering};

pub struct Mailbox<T> {
    slot: AtomicPtr<T>,
    posted: AtomicU64,
    overwritten: AtomicU64,
    _owns: PhantomData<Box<T>>,
}

// Every pointer leaves the slot through exactly one swap, so ownership of each
// boxed value passes to exactly one thread.
unsafe impl<T: Send> Send for Mailbox<T> {}
unsafe impl<T: Send> Sync for Mailbox<T> {}

impl<T> Default for Mailbox<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T> Mailbox<T> {
    pub fn new() -> Self {
        Self {
            slot: AtomicPtr::new(ptr::null_mut()),
            posted: AtomicU64::new(0),
            overwritten: AtomicU64::new(0),
            _owns: PhantomData,
        }
    }

    /// Replaces the pending value. Returns `true` if an unconsumed value was discarded.
    pub fn post(&self, value: T) -> bool {
        let new = Box::into_raw(Box::new(value));
        let old = self.slot.swap(new, Ordering::AcqRel);
        self.posted.fetch_add(1, Ordering::Relaxed);
        if old.is_null() {
            return false;
        }
        self.overwritten.fetch_add(1, Ordering::Relaxed);
        // SAFETY: `old` came from `Box::into_raw` and the swap removed it from the slot.
        drop(unsafe { Box::from_raw(old) });
        true
    }

    /// Takes the most recent value, if one was posted since the last take.
    pub fn take(&self) -> Option<T> {
        let p = self.slot.swap(ptr::null_mut(), Ordering::AcqRel);
        if p.is_null() {
            None
        } else {
            // SAFETY: as in `post`.
            Some(*unsafe { Box::from_raw(p) })
        }
    }

    pub fn has_pending(&self) -> bool {
        !self.slot.load(Ordering::Acquire).is_null()
    }

    /// Total values posted.
    pub fn posted(&self) -> u64 {
        self.posted.load(Ordering::Relaxed)
    }

    /// Values replaced before anyone took them.
    pub fn overwritten(&self) -> u64 {
        self.overwritten.load(Ordering::Relaxed)
    }
}

impl<T> Drop for Mailbox<T> {
    fn drop(&mut self) {
        drop(self.take());
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Arc;

    #[test]
    fn latest_wins() {
        let m = Mailbox::new();
        assert_eq!(m.take(), None::<u32>);
        assert!(!m.post(1));
        assert!(m.post(2));
        assert!(m.post(3));
        assert_eq!(m.take(), Some(3));
        assert_eq!(m.take(), None);
        assert_eq!((m.posted(), m.overwritten()), (3, 2));
    }

    #[test]
    fn pending_values_are_dropped_once() {
        let witness = Arc::new(());
        {
            let m = Mailbox::new();
            m.post(witness.clone());
            m.post(witness.clone());
            assert_eq!(Arc::strong_count(&witness), 2);
        }
        assert_eq!(Arc::strong_count(&witness), 1);
    }

    #[test]
    fn concurrent_producers_never_lose_the_final_value() {
        let m = Arc::new(Mailbox::new());
        let producers: Vec<_> = (0..4u64)
            .map(|id| {
                let m = m.clone();
                std::thread::spawn(move || {
                    for i in 0..10_000u64 {
                        m.post((id, i));
                    }
                })
            })
            .collect();
        let mut seen = [None::<u64>; 4];
        while producers.iter().any(|p| !p.is_finished()) {
            if let Some((id, i)) = m.take() {
                let last = &mut seen[id as usize];
                assert!(last.is_none_or(|l| i > l), "values from one producer arrive in order");
                *last = Some(i);
            }
        }
        for p in producers {
            p.join().unwrap();
        }
        if let Some((id, i)) = m.take() {
            seen[id as usize] = Some(i);
        }
        assert!(seen.contains(&Some(9_999)));
        assert_eq!(m.posted(), 40_000);
    }
}
