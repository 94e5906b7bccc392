//! Bounded FIFO standing in for a ready/valid handshake: a producer with data
//! ("valid") stalls until the consumer side has room ("ready").

use std::collections::VecDeque;
use std::sync::{Arc, Condvar, Mutex, MutexGuard};
use std::time::{Duration, Instant};

use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum FifoError {
    #[error("fifo capacity must be at least 1")]
    ZeroCapacity,
    #[error("fifo closed")]
    Closed,
    #[error("transfer of {0} items exceeds fifo capacity")]
    TooLarge(usize),
}

#[derive(Debug, PartialEq, Eq)]
pub enum TryPush<T> {
    Full(T),
    Closed(T),
}

#[derive(Debug, PartialEq, Eq)]
pub enum Pop<T> {
    Item(T),
    Timeout,
    Closed,
}

struct State<T> {
    buf: VecDeque<T>,
    closed: bool,
    pushed: u64,
    popped: u64,
}

struct Inner<T> {
    state: Mutex<State<T>>,
    readable: Condvar,
    writable: Condvar,
    capacity: usize,
}

/// Cloneable handle to a bounded single-producer/single-consumer queue.
pub struct Fifo<T> {
    inner: Arc<Inner<T>>,
}

impl<T> Clone for Fifo<T> {
    fn clone(&self) -> Self {
        Self {
            inner: Arc::clone(&self.inner),
        }
    }
}

impl<T> std::fmt::Debug for Fifo<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Fifo")
            .field("len", &self.len())
            .field("capacity", &self.inner.capacity)
            .finish()
    }
}

impl<T> Fifo<T> {
    pub fn new(capacity: usize) -> Result<Self, FifoError> {
        if capacity == 0 {
            return Err(FifoError::ZeroCapacity);
        }
        Ok(Self {
            inner: Arc::new(Inner {
                state: Mutex::new(State {
                    buf: VecDeque::with_capacity(capacity.min(1 << 16)),
                    closed: false,
                    pushed: 0,
                    popped: 0,
                }),
                readable: Condvar::new(),
                writable: Condvar::new(),
                capacity,
            }),
        })
    }

    fn lock(&self) -> MutexGuard<'_, State<T>> {
        self.inner.state.lock().unwrap_or_else(|e| e.into_inner())
    }

    pub fn capacity(&self) -> usize {
        self.inner.capacity
    }

    pub fn len(&self) -> usize {
        self.lock().buf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn free(&self) -> usize {
        self.inner.capacity - self.len()
    }

    pub fn is_closed(&self) -> bool {
        self.lock().closed
    }

    /// Closed and nothing left to read.
    pub fn is_finished(&self) -> bool {
        let st = self.lock();
        st.closed && st.buf.is_empty()
    }

    /// Total items ever pushed and popped.
    pub fn counters(&self) -> (u64, u64) {
        let st = self.lock();
        (st.pushed, st.popped)
    }

    pub fn same_as(&self, other: &Fifo<T>) -> bool {
        Arc::ptr_eq(&self.inner, &other.inner)
    }

    /// Marks the fifo closed. Buffered items stay readable; pushes fail.
    pub fn close(&self) {
        self.lock().closed = true;
        self.inner.readable.notify_all();
        self.inner.writable.notify_all();
    }

    pub fn try_push(&self, item: T) -> Result<(), TryPush<T>> {
        let mut st = self.lock();
        if st.closed {
            return Err(TryPush::Closed(item));
        }
        if st.buf.len() >= self.inner.capacity {
            return Err(TryPush::Full(item));
        }
        st.buf.push_back(item);
        st.pushed += 1;
        drop(st);
        self.inner.readable.notify_one();
        Ok(())
    }

    /// Blocks while full. Returns the item back if the fifo is closed.
    pub fn push(&self, item: T) -> Result<(), T> {
        let mut st = self.lock();
        loop {
            if st.closed {
                return Err(item);
            }
            if st.buf.len() < self.inner.capacity {
                break;
            }
            st = self.inner.writable.wait(st).unwrap_or_else(|e| e.into_inner());
        }
        st.buf.push_back(item);
        st.pushed += 1;
        drop(st);
        self.inner.readable.notify_one();
        Ok(())
    }

    /// Like [`push`](Self::push) but gives up after `timeout`.
    pub fn push_timeout(&self, item: T, timeout: Duration) -> Result<(), TryPush<T>> {
        let deadline = Instant::now() + timeout;
        let mut st = self.lock();
        loop {
            if st.closed {
                return Err(TryPush::Closed(item));
            }
            if st.buf.len() < self.inner.capacity {
                break;
            }
            let now = Instant::now();
            if now >= deadline {
                return Err(TryPush::Full(item));
            }
            st = self
                .inner
                .writable
                .wait_timeout(st, deadline - now)
                .unwrap_or_else(|e| e.into_inner())
                .0;
        }
        st.buf.push_back(item);
        st.pushed += 1;
        drop(st);
        self.inner.readable.notify_one();
        Ok(())
    }

    pub fn try_pop(&self) -> Option<T> {
        let mut st = self.lock();
        let item = st.buf.pop_front();
        if item.is_some() {
            st.popped += 1;
            drop(st);
            self.inner.writable.notify_one();
        }
        item
    }

    /// Blocks while empty; `None` once closed and drained.
    pub fn pop(&self) -> Option<T> {
        let mut st = self.lock();
        loop {
            if let Some(item) = st.buf.pop_front() {
                st.popped += 1;
                drop(st);
                self.inner.writable.notify_one();
                return Some(item);
            }
            if st.closed {
                return None;
            }
            st = self.inner.readable.wait(st).unwrap_or_else(|e| e.into_inner());
        }
    }

    pub fn pop_timeout(&self, timeout: Duration) -> Pop<T> {
        let deadline = Instant::now() + timeout;
        let mut st = self.lock();
        loop {
            if let Some(item) = st.buf.pop_front() {
                st.popped += 1;
                drop(st);
                self.inner.writable.notify_one();
                return Pop::Item(item);
            }
            if st.closed {
                return Pop::Closed;
            }
            let now = Instant::now();
            if now >= deadline {
                return Pop::Timeout;
            }
            st = self
                .inner
                .readable
                .wait_timeout(st, deadline - now)
                .unwrap_or_else(|e| e.into_inner())
                .0;
        }
    }

    /// Waits until at least `n` items are buffered, the fifo is closed, or the
    /// timeout passes. Returns whether `n` items are available.
    pub fn wait_readable(&self, n: usize, timeout: Duration) -> bool {
        let deadline = Instant::now() + timeout;
        let mut st = self.lock();
        loop {
            if st.buf.len() >= n {
                return true;
            }
            let now = Instant::now();
            if st.closed || now >= deadline {
                return false;
            }
            st = self
                .inner
                .readable
                .wait_timeout(st, deadline - now)
                .unwrap_or_else(|e| e.into_inner())
                .0;
        }
    }

    /// Waits until room for `n` items exists. Returns whether it does.
    pub fn wait_writable(&self, n: usize, timeout: Duration) -> bool {
        let deadline = Instant::now() + timeout;
        let mut st = self.lock();
        loop {
            if st.closed {
                return false;
            }
            if self.inner.capacity - st.buf.len() >= n {
                return true;
            }
            let now = Instant::now();
            if now >= deadline {
                return false;
            }
            st = self
                .inner
                .writable
                .wait_timeout(st, deadline - now)
                .unwrap_or_else(|e| e.into_inner())
                .0;
        }
    }
}

impl<T: Clone> Fifo<T> {
    /// All-or-nothing push of a window. `Ok(false)` when there is not enough room.
    pub fn try_push_slice(&self, items: &[T]) -> Result<bool, FifoError> {
        if items.len() > self.inner.capacity {
            return Err(FifoError::TooLarge(items.len()));
        }
        let mut st = self.lock();
        if st.closed {
            return Err(FifoError::Closed);
        }
        if self.inner.capacity - st.buf.len() < items.len() {
            return Ok(false);
        }
        st.buf.extend(items.iter().cloned());
        st.pushed += items.len() as u64;
        drop(st);
        self.inner.readable.notify_all();
        Ok(true)
    }

    /// Pushes every item, blocking for room as needed. Windows larger than
    /// the capacity are split.
    pub fn push_slice(&self, items: &[T]) -> Result<(), FifoError> {
        let mut rest = items;
        while !rest.is_empty() {
            let mut st = self.lock();
            loop {
                if st.closed {
                    return Err(FifoError::Closed);
                }
                if st.buf.len() < self.inner.capacity {
                    break;
                }
                st = self.inner.writable.wait(st).unwrap_or_else(|e| e.into_inner());
            }
            let room = (self.inner.capacity - st.buf.len()).min(rest.len());
            st.buf.extend(rest[..room].iter().cloned());
            st.pushed += room as u64;
            drop(st);
            self.inner.readable.notify_all();
            rest = &rest[room..];
        }
        Ok(())
    }

    /// Pops exactly `n` items into `out`, or nothing if fewer are buffered.
    pub fn try_pop_exact(&self, n: usize, out: &mut Vec<T>) -> bool {
        let mut st = self.lock();
        if st.buf.len() < n {
            return false;
        }
        out.extend(st.buf.drain(..n));
        st.popped += n as u64;
        drop(st);
        self.inner.writable.notify_all();
        true
    }

    /// Pops up to `max` items, waiting up to `timeout` for the first one.
    pub fn pop_up_to(&self, max: usize, out: &mut Vec<T>, timeout: Duration) -> usize {
        if !self.wait_readable(1, timeout) {
            return 0;
        }
        let mut st = self.lock();
        let n = st.buf.len().min(max);
        out.extend(st.buf.drain(..n));
        st.popped += n as u64;
        drop(st);
        self.inner.writable.notify_all();
        n
    }

    /// Blocks until exactly `n` items are read; `false` if the fifo closes first.
    pub fn pop_exact(&self, n: usize, out: &mut Vec<T>) -> bool {
        let mut need = n;
        while need > 0 {
            let mut st = self.lock();
            loop {
                if !st.buf.is_empty() {
                    break;
                }
                if st.closed {
                    return false;
                }
                st = self.inner.readable.wait(st).unwrap_or_else(|e| e.into_inner());
            }
            let take = st.buf.len().min(need);
            out.extend(st.buf.drain(..take));
            st.popped += take as u64;
            drop(st);
            self.inner.writable.notify_all();
            need -= take;
        }
        true
    }

    pub fn snapshot(&self) -> Vec<T> {
        self.lock().buf.iter().cloned().collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::thread;

    #[test]
    fn zero_capacity_rejected() {
        assert_eq!(Fifo::<u8>::new(0).unwrap_err(), FifoError::ZeroCapacity);
    }

    #[test]
    fn full_fifo_refuses_without_dropping() {
        let f = Fifo::new(64).unwrap();
        for i in 0..64 {
            f.try_push(i).unwrap();
        }
        assert_eq!(f.try_push(64), Err(TryPush::Full(64)));
        assert_eq!(f.push_timeout(64, Duration::from_millis(5)), Err(TryPush::Full(64)));
        let drained: Vec<i32> = std::iter::from_fn(|| f.try_pop()).collect();
        assert_eq!(drained, (0..64).collect::<Vec<_>>());
    }

    #[test]
    fn blocked_producer_resumes_when_consumer_reads() {
        let f = Fifo::new(4).unwrap();
        let p = f.clone();
        let producer = thread::spawn(move || {
            for i in 0..100u32 {
                p.push(i).unwrap();
            }
            p.close();
        });
        let mut got = vec![];
        while let Some(v) = f.pop() {
            got.push(v);
        }
        producer.join().unwrap();
        assert_eq!(got, (0..100).collect::<Vec<_>>());
    }

    #[test]
    fn slice_ops_are_all_or_nothing() {
        let f = Fifo::new(8).unwrap();
        assert!(f.try_push_slice(&[1, 2, 3, 4, 5]).unwrap());
        assert!(!f.try_push_slice(&[6, 7, 8, 9]).unwrap());
        assert_eq!(f.len(), 5);
        let mut out = vec![];
        assert!(!f.try_pop_exact(6, &mut out));
        assert!(out.is_empty());
        assert!(f.try_pop_exact(5, &mut out));
        assert_eq!(out, vec![1, 2, 3, 4, 5]);
        assert_eq!(f.try_push_slice(&[0; 9]), Err(FifoError::TooLarge(9)));
    }

    #[test]
    fn close_keeps_buffered_items() {
        let f = Fifo::new(2).unwrap();
        f.try_push(1).unwrap();
        f.close();
        assert!(matches!(f.try_push(2), Err(TryPush::Closed(2))));
        assert_eq!(f.pop(), Some(1));
        assert_eq!(f.pop(), None);
        assert!(f.is_finished());
    }
}
