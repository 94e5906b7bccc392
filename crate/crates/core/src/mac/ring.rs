//! Lock-free single-producer/single-consumer ring of packet slots.

use std::cell::UnsafeCell;
use std::mem::MaybeUninit;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

struct Shared<T> {
    slots: Box<[UnsafeCell<MaybeUninit<T>>]>,
    /// Next slot to read. Only the consumer stores it.
    head: AtomicUsize,
    /// Next slot to write. Only the producer stores it.
    tail: AtomicUsize,
}

// A slot between head and tail belongs to the consumer, every other slot to
// the producer, so no slot is touched from two sides at once.
unsafe impl<T: Send> Send for Shared<T> {}
unsafe impl<T: Send> Sync for Shared<T> {}

impl<T> Shared<T> {
    fn capacity(&self) -> usize {
        self.slots.len()
    }

    fn occupancy(&self) -> usize {
        let tail = self.tail.load(Ordering::Acquire);
        let head = self.head.load(Ordering::Acquire);
        tail.wrapping_sub(head)
    }
}

impl<T> Drop for Shared<T> {
    fn drop(&mut self) {
        let head = *self.head.get_mut();
        let tail = *self.tail.get_mut();
        let mut i = head;
        while i != tail {
            let slot = &mut self.slots[i % self.slots.len()];
            // SAFETY: slots in [head, tail) were written and not yet read.
            unsafe { slot.get_mut().assume_init_drop() };
            i = i.wrapping_add(1);
        }
    }
}

/// Creates a ring of `capacity` slots and returns its two ends.
pub fn dma_ring<T: Send>(capacity: usize) -> (RingProducer<T>, RingConsumer<T>) {
    assert!(capacity > 0, "ring capacity must be positive");
    let slots = (0..capacity)
        .map(|_| UnsafeCell::new(MaybeUninit::uninit()))
        .collect::<Vec<_>>()
        .into_boxed_slice();
    let shared = Arc::new(Shared {
        slots,
        head: AtomicUsize::new(0),
        tail: AtomicUsize::new(0),
    });
    (
        RingProducer {
            shared: Arc::clone(&shared),
        },
        RingConsumer { shared },
    )
}

pub struct RingProducer<T> {
    shared: Arc<Shared<T>>,
}

pub struct RingConsumer<T> {
    shared: Arc<Shared<T>>,
}

impl<T> RingProducer<T> {
    /// Hands `item` back when the ring is full.
    pub fn push(&mut self, item: T) -> Result<(), T> {
        let s = &*self.shared;
        let tail = s.tail.load(Ordering::Relaxed);
        let head = s.head.load(Ordering::Acquire);
        if tail.wrapping_sub(head) == s.capacity() {
            return Err(item);
        }
        // SAFETY: the slot at tail is outside [head, tail) so the consumer
        // does not read it until tail is published below.
        unsafe { (*s.slots[tail % s.capacity()].get()).write(item) };
        s.tail.store(tail.wrapping_add(1), Ordering::Release);
        Ok(())
    }

    pub fn is_full(&self) -> bool {
        self.shared.occupancy() == self.shared.capacity()
    }

    pub fn len(&self) -> usize {
        self.shared.occupancy()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn capacity(&self) -> usize {
        self.shared.capacity()
    }

    /// Write index modulo capacity.
    pub fn tail(&self) -> usize {
        self.shared.tail.load(Ordering::Acquire) % self.shared.capacity()
    }
}

impl<T> RingConsumer<T> {
    pub fn pop(&mut self) -> Option<T> {
        let s = &*self.shared;
        let head = s.head.load(Ordering::Relaxed);
        let tail = s.tail.load(Ordering::Acquire);
        if head == tail {
            return None;
        }
        // SAFETY: head < tail, so the producer finished writing this slot and
        // will not write it again until head moves past it.
        let item = unsafe { (*s.slots[head % s.capacity()].get()).assume_init_read() };
        s.head.store(head.wrapping_add(1), Ordering::Release);
        Some(item)
    }

    pub fn len(&self) -> usize {
        self.shared.occupancy()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn capacity(&self) -> usize {
        self.shared.capacity()
    }

    /// Read index modulo capacity.
    pub fn head(&self) -> usize {
        self.shared.head.load(Ordering::Acquire) % self.shared.capacity()
    }
}
