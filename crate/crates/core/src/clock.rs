//! Time source used to report search and training wall time.

/// Monotonic seconds since an arbitrary origin.
pub trait Clock {
    fn now_secs(&self) -> f64;
}

/// Clock that never advances. Useful where timings are irrelevant.
#[derive(Debug, Default, Clone, Copy)]
pub struct FrozenClock;

impl Clock for FrozenClock {
    fn now_secs(&self) -> f64 {
        0.0
    }
}
