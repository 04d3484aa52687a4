//! Time source used to report stage timings without depending on `std`.

/// Monotonic seconds since an arbitrary origin.
pub trait Clock {
    fn now_s(&self) -> f64;
}

/// Clock that always reads zero; timings come out as 0 s.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoClock;

impl Clock for NoClock {
    fn now_s(&self) -> f64 {
        0.0
    }
}

/// Seconds elapsed while running `f`.
pub fn timed<C: Clock + ?Sized, T>(clock: &C, f: impl FnOnce() -> T) -> (T, f64) {
    let start = clock.now_s();
    let out = f();
    (out, (clock.now_s() - start).max(0.0))
}
