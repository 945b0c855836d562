use std::collections::VecDeque;
use std::sync::Mutex;
use std::time::{Duration, Instant};

/// Sliding-window limiter: at most `limit` dispatches in any `window`.
#[derive(Debug)]
pub struct RateLimiter {
    limit: usize,
    window: Duration,
    sent: Mutex<VecDeque<Instant>>,
}

impl RateLimiter {
    pub fn per_minute(limit: u32) -> Self {
        Self::new(limit as usize, Duration::from_secs(60))
    }

    pub fn new(limit: usize, window: Duration) -> Self {
        assert!(limit > 0, "rate limit must be positive");
        Self {
            limit,
            window,
            sent: Mutex::new(VecDeque::new()),
        }
    }

    /// Records a dispatch at `now` if the window has room; otherwise returns
    /// how long to wait before trying again.
    pub fn try_acquire_at(&self, now: Instant) -> Result<(), Duration> {
        let mut sent = self.sent.lock().unwrap();
        while sent
            .front()
            .is_some_and(|&t| now.duration_since(t) >= self.window)
        {
            sent.pop_front();
        }
        if sent.len() < self.limit {
            sent.push_back(now);
            Ok(())
        } else {
            let oldest = *sent.front().expect("window is full");
            Err(self.window - now.duration_since(oldest))
        }
    }

    /// Blocks until a dispatch is allowed.
    pub fn acquire(&self) {
        while let Err(wait) = self.try_acquire_at(Instant::now()) {
            std::thread::sleep(wait);
        }
    }
}
