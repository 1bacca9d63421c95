//! Multiply-add counting for the naive kernel path.
//!
//! Only [`KernelPath::Naive`](crate::KernelPath::Naive) kernels increment the
//! counter; they run single-threaded, so a thread-local is sufficient.

use std::cell::Cell;

thread_local! {
    static MACS: Cell<u64> = const { Cell::new(0) };
}

#[inline]
pub(crate) fn add_macs(n: u64) {
    MACS.with(|c| c.set(c.get() + n));
}

/// Resets this thread's multiply-add counter.
pub fn reset_macs() {
    MACS.with(|c| c.set(0));
}

/// Multiply-adds executed by naive kernels on this thread since the last reset.
pub fn macs() -> u64 {
    MACS.with(|c| c.get())
}

/// Counts the multiply-adds executed by naive kernels inside `f`.
pub fn count_macs<R>(f: impl FnOnce() -> R) -> (R, u64) {
    let before = macs();
    let out = f();
    (out, macs() - before)
}
