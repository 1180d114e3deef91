//! Per-thread record of training-mode entries.
//!
//! Every optimisation entry point bumps the counter, so inference paths can
//! prove they never touched trainable state.

use std::cell::Cell;

thread_local! {
    static TRAINING_ENTRIES: Cell<u64> = const { Cell::new(0) };
}

pub(crate) fn enter_training() {
    TRAINING_ENTRIES.with(|c| c.set(c.get() + 1));
}

/// Number of training-mode entries recorded on the calling thread.
pub fn training_mode_entries() -> u64 {
    TRAINING_ENTRIES.with(|c| c.get())
}
