use std::sync::{Condvar, Mutex};
use std::time::{Duration, Instant};

/// Token bucket refilled at `per_minute / 60` tokens per second, holding at
/// most `burst` tokens. `acquire` blocks until a token is available.
pub(crate) struct TokenBucket {
    state: Mutex<BucketState>,
    interval: Duration,
    burst: f64,
}

struct BucketState {
    tokens: f64,
    refreshed: Instant,
}

impl TokenBucket {
    pub(crate) fn new(per_minute: u32, burst: usize) -> Self {
        let burst = burst.max(1) as f64;
        TokenBucket {
            state: Mutex::new(BucketState { tokens: burst, refreshed: Instant::now() }),
            interval: Duration::from_secs_f64(60.0 / f64::from(per_minute.max(1))),
            burst,
        }
    }

    pub(crate) fn acquire(&self) {
        loop {
            let wait = {
                let mut s = self.state.lock().expect("rate limiter lock");
                let now = Instant::now();
                let earned = now.duration_since(s.refreshed).as_secs_f64() / self.interval.as_secs_f64();
                s.tokens = (s.tokens + earned).min(self.burst);
                s.refreshed = now;
                if s.tokens >= 1.0 {
                    s.tokens -= 1.0;
                    return;
                }
                self.interval.mul_f64(1.0 - s.tokens)
            };
            std::thread::sleep(wait);
        }
    }
}

/// Counting semaphore bounding in-flight requests.
pub(crate) struct Semaphore {
    free: Mutex<usize>,
    cv: Condvar,
}

pub(crate) struct Permit<'a>(&'a Semaphore);

impl Semaphore {
    pub(crate) fn new(n: usize) -> Self {
        Semaphore { free: Mutex::new(n.max(1)), cv: Condvar::new() }
    }

    pub(crate) fn acquire(&self) -> Permit<'_> {
        let mut free = self.free.lock().expect("semaphore lock");
        while *free == 0 {
            free = self.cv.wait(free).expect("semaphore lock");
        }
        *free -= 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().expect("semaphore lock") += 1;
        self.0.cv.notify_one();
    }
}

#[cfg(test)]
mod tests {
    use std::sync::atomic::{AtomicUsize, Ordering};

    use super::*;

    #[test]
    fn bucket_paces_after_burst() {
        let bucket = TokenBucket::new(600, 2);
        let start = Instant::now();
        for _ in 0..4 {
            bucket.acquire();
        }
        // two free tokens, then two refills at 100 ms each
        let elapsed = start.elapsed();
        assert!(elapsed >= Duration::from_millis(190), "{elapsed:?}");
        assert!(elapsed < Duration::from_secs(2), "{elapsed:?}");
    }

    #[test]
    fn semaphore_bounds_concurrency() {
        let sem = Semaphore::new(2);
        let active = AtomicUsize::new(0);
        let peak = AtomicUsize::new(0);
        std::thread::scope(|s| {
            for _ in 0..8 {
                s.spawn(|| {
                    let _p = sem.acquire();
                    let now = active.fetch_add(1, Ordering::SeqCst) + 1;
                    peak.fetch_max(now, Ordering::SeqCst);
                    std::thread::sleep(Duration::from_millis(10));
                    active.fetch_sub(1, Ordering::SeqCst);
                });
            }
        });
        assert_eq!(peak.load(Ordering::SeqCst), 2);
    }
}
