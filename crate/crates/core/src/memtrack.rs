//! Logical allocation accounting.
//!
//! Every matrix buffer in the crate is a [`TrackedVec`]. When a
//! [`MemTracker`] is installed on the current thread (see [`scoped`]), each
//! buffer registers its byte size on creation and releases it on drop, so
//! the tracker's peak is the exact high-water mark of live buffers. Nothing
//! is recorded when no tracker is installed.
//!
//! Worker threads do not inherit the tracker automatically; code that fans
//! out over rayon captures [`current`] and re-installs it in each task.

use std::cell::RefCell;
use std::ops::{Deref, DerefMut};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

/// What a buffer is used for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MemCategory {
    /// Attention score / probability blocks (dense or band).
    Attention,
    /// Every other intermediate: projections, feed-forward, gathers, masks.
    Activation,
    /// Model parameters.
    Weights,
}

impl MemCategory {
    const ALL: [MemCategory; 3] = [MemCategory::Attention, MemCategory::Activation, MemCategory::Weights];

    fn index(self) -> usize {
        match self {
            MemCategory::Attention => 0,
            MemCategory::Activation => 1,
            MemCategory::Weights => 2,
        }
    }
}

#[derive(Debug, Default)]
struct Counter {
    current: AtomicUsize,
    peak: AtomicUsize,
    allocations: AtomicUsize,
}

impl Counter {
    fn add(&self, bytes: usize) {
        let now = self.current.fetch_add(bytes, Ordering::SeqCst) + bytes;
        self.peak.fetch_max(now, Ordering::SeqCst);
        self.allocations.fetch_add(1, Ordering::SeqCst);
    }

    fn sub(&self, bytes: usize) {
        self.current.fetch_sub(bytes, Ordering::SeqCst);
    }
}

/// Byte counters per category plus a combined total.
#[derive(Debug)]
pub struct MemTracker {
    per_category: [Counter; 3],
    total: Counter,
    limit: usize,
}

impl Default for MemTracker {
    fn default() -> Self {
        Self { per_category: Default::default(), total: Counter::default(), limit: usize::MAX }
    }
}

/// Panic payload raised when a tracked allocation would exceed the
/// tracker's budget. Catch it with [`std::panic::catch_unwind`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BudgetExceeded {
    pub requested: usize,
    pub live: usize,
    pub limit: usize,
}

/// Point-in-time copy of a tracker's counters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct MemSnapshot {
    pub current: usize,
    pub peak: usize,
    pub allocations: usize,
}

impl MemTracker {
    pub fn new() -> Arc<Self> {
        Arc::new(Self::default())
    }

    /// A tracker whose live total may not exceed `limit` bytes. A tracked
    /// allocation past the limit panics with [`BudgetExceeded`] before any
    /// memory is reserved.
    pub fn with_limit(limit: usize) -> Arc<Self> {
        Arc::new(Self { limit, ..Self::default() })
    }

    pub fn limit(&self) -> Option<usize> {
        (self.limit != usize::MAX).then_some(self.limit)
    }

    fn check(&self, bytes: usize) {
        let live = self.total.current.load(Ordering::SeqCst);
        if live.saturating_add(bytes) > self.limit {
            std::panic::panic_any(BudgetExceeded { requested: bytes, live, limit: self.limit });
        }
    }

    fn record_alloc(&self, category: MemCategory, bytes: usize) {
        self.per_category[category.index()].add(bytes);
        self.total.add(bytes);
    }

    fn record_free(&self, category: MemCategory, bytes: usize) {
        self.per_category[category.index()].sub(bytes);
        self.total.sub(bytes);
    }

    pub fn category(&self, category: MemCategory) -> MemSnapshot {
        snapshot(&self.per_category[category.index()])
    }

    pub fn total(&self) -> MemSnapshot {
        snapshot(&self.total)
    }

    /// Resets peaks to the currently live byte counts.
    pub fn reset_peaks(&self) {
        for c in MemCategory::ALL {
            let counter = &self.per_category[c.index()];
            counter.peak.store(counter.current.load(Ordering::SeqCst), Ordering::SeqCst);
        }
        self.total.peak.store(self.total.current.load(Ordering::SeqCst), Ordering::SeqCst);
    }
}

fn snapshot(c: &Counter) -> MemSnapshot {
    MemSnapshot {
        current: c.current.load(Ordering::SeqCst),
        peak: c.peak.load(Ordering::SeqCst),
        allocations: c.allocations.load(Ordering::SeqCst),
    }
}

thread_local! {
    static ACTIVE: RefCell<Option<Arc<MemTracker>>> = const { RefCell::new(None) };
}

/// Tracker installed on this thread, if any.
pub fn current() -> Option<Arc<MemTracker>> {
    ACTIVE.with(|a| a.borrow().clone())
}

/// Runs `f` with `tracker` installed on the current thread, restoring the
/// previous tracker afterwards (also on unwind).
pub fn scoped<R>(tracker: Option<Arc<MemTracker>>, f: impl FnOnce() -> R) -> R {
    struct Restore(Option<Arc<MemTracker>>);
    impl Drop for Restore {
        fn drop(&mut self) {
            let prev = self.0.take();
            ACTIVE.with(|a| *a.borrow_mut() = prev);
        }
    }
    let prev = ACTIVE.with(|a| std::mem::replace(&mut *a.borrow_mut(), tracker));
    let _restore = Restore(prev);
    f()
}

/// A `Vec<T>` whose byte size is reported to the tracker that was active
/// when it was created.
#[derive(Debug)]
pub struct TrackedVec<T> {
    data: Vec<T>,
    owner: Option<(Arc<MemTracker>, MemCategory)>,
}

impl<T> TrackedVec<T> {
    pub fn from_vec(data: Vec<T>, category: MemCategory) -> Self {
        let owner = current().map(|t| {
            t.check(data.len() * std::mem::size_of::<T>());
            t.record_alloc(category, data.len() * std::mem::size_of::<T>());
            (t, category)
        });
        Self { data, owner }
    }

    pub fn category(&self) -> Option<MemCategory> {
        self.owner.as_ref().map(|(_, c)| *c)
    }

    /// Releases the accounting and returns the plain vector.
    pub fn into_vec(mut self) -> Vec<T> {
        self.release();
        std::mem::take(&mut self.data)
    }

    fn release(&mut self) {
        if let Some((t, c)) = self.owner.take() {
            t.record_free(c, self.data.len() * std::mem::size_of::<T>());
        }
    }
}

impl<T: Clone> TrackedVec<T> {
    pub fn filled(len: usize, value: T, category: MemCategory) -> Self {
        if let Some(t) = current() {
            t.check(len.saturating_mul(std::mem::size_of::<T>()));
        }
        Self::from_vec(vec![value; len], category)
    }
}

impl<T: Clone> Clone for TrackedVec<T> {
    fn clone(&self) -> Self {
        let category = self.category().unwrap_or(MemCategory::Activation);
        Self::from_vec(self.data.clone(), category)
    }
}

impl<T: PartialEq> PartialEq for TrackedVec<T> {
    fn eq(&self, other: &Self) -> bool {
        self.data == other.data
    }
}

impl<T> Drop for TrackedVec<T> {
    fn drop(&mut self) {
        self.release();
    }
}

impl<T> Deref for TrackedVec<T> {
    type Target = [T];

    fn deref(&self) -> &[T] {
        &self.data
    }
}

impl<T> DerefMut for TrackedVec<T> {
    fn deref_mut(&mut self) -> &mut [T] {
        &mut self.data
    }
}
