use std::time::Duration;

use tracing::warn;

use super::ProviderError;
use crate::clock::Clock;

const BASE_BACKOFF: Duration = Duration::from_millis(100);

/// Run `op`, retrying transient failures up to `retry_budget` extra times
/// with exponential backoff (100 ms, 200 ms, ...). The last error is returned
/// once the budget is spent.
pub fn with_retry<T>(
    retry_budget: u32,
    clock: &dyn Clock,
    mut op: impl FnMut() -> Result<T, ProviderError>,
) -> Result<T, ProviderError> {
    let mut attempt = 0;
    loop {
        match op() {
            Ok(value) => return Ok(value),
            Err(err) if err.is_transient() && attempt < retry_budget => {
                let backoff = BASE_BACKOFF * 2u32.pow(attempt);
                warn!(%err, attempt, ?backoff, "provider call failed, retrying");
                clock.sleep(backoff);
                attempt += 1;
            }
            Err(err) => return Err(err),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clock::ManualClock;

    #[test]
    fn retries_transient_until_budget() {
        let clock = ManualClock::new();
        let mut calls = 0;
        let res: Result<(), _> = with_retry(2, &clock, || {
            calls += 1;
            Err(ProviderError::unavailable("llm", "down"))
        });
        assert!(matches!(res, Err(ProviderError::Unavailable { .. })));
        assert_eq!(calls, 3);
        assert_eq!(clock.now(), Duration::from_millis(300));
    }

    #[test]
    fn malformed_is_not_retried() {
        let clock = ManualClock::new();
        let mut calls = 0;
        let res: Result<(), _> = with_retry(2, &clock, || {
            calls += 1;
            Err(ProviderError::malformed("vlm", "???"))
        });
        assert!(res.is_err());
        assert_eq!(calls, 1);
    }

    #[test]
    fn recovers_after_one_failure() {
        let clock = ManualClock::new();
        let mut calls = 0;
        let res = with_retry(2, &clock, || {
            calls += 1;
            if calls == 1 {
                Err(ProviderError::unavailable("embed", "blip"))
            } else {
                Ok(7)
            }
        });
        assert_eq!(res, Ok(7));
    }
}
