//! Per-thread operation counters used to check the cost profile of each party.

use std::cell::Cell;

thread_local! {
    static PUBLIC_KEY_OPS: Cell<u64> = const { Cell::new(0) };
    static SYMMETRIC_OPS: Cell<u64> = const { Cell::new(0) };
}

/// Snapshot of the counters on the current thread.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct OpCounts {
    /// Modular exponentiations.
    pub public_key: u64,
    /// Block-cipher and MAC invocations.
    pub symmetric: u64,
}

impl std::ops::Sub for OpCounts {
    type Output = OpCounts;

    fn sub(self, rhs: OpCounts) -> OpCounts {
        OpCounts {
            public_key: self.public_key - rhs.public_key,
            symmetric: self.symmetric - rhs.symmetric,
        }
    }
}

pub fn snapshot() -> OpCounts {
    OpCounts {
        public_key: PUBLIC_KEY_OPS.with(Cell::get),
        symmetric: SYMMETRIC_OPS.with(Cell::get),
    }
}

/// Runs `f` and returns its result with the operations it performed.
pub fn measure<R>(f: impl FnOnce() -> R) -> (R, OpCounts) {
    let before = snapshot();
    let out = f();
    (out, snapshot() - before)
}

pub(crate) fn record_public_key_op() {
    PUBLIC_KEY_OPS.with(|c| c.set(c.get() + 1));
}

pub(crate) fn record_symmetric_op() {
    SYMMETRIC_OPS.with(|c| c.set(c.get() + 1));
}
