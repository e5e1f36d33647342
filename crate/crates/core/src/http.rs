//! Blocking JSON-over-HTTP transport and the retry policy shared by the
//! generator, parser and model clients.

use std::thread;
use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::Serialize;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TransportError {
    #[error("request timed out")]
    Timeout,
    #[error("service unavailable: {0}")]
    Unavailable(String),
    #[error("request rejected with status {status}: {body}")]
    Rejected { status: u16, body: String },
    #[error("malformed response body: {0}")]
    Decode(String),
}

impl TransportError {
    /// Timeouts, connection failures and 5xx answers may succeed on retry.
    pub fn is_transient(&self) -> bool {
        matches!(self, Self::Timeout | Self::Unavailable(_))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    pub retries: u32,
    pub base_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            retries: 2,
            base_delay: Duration::from_millis(200),
        }
    }
}

impl RetryPolicy {
    pub fn none() -> Self {
        Self {
            retries: 0,
            base_delay: Duration::ZERO,
        }
    }

    /// Delay before retry number `attempt` (1-based): `base · 2^(attempt-1)`.
    pub fn delay(&self, attempt: u32) -> Duration {
        self.base_delay.saturating_mul(
            1u32.checked_shl(attempt.saturating_sub(1))
                .unwrap_or(u32::MAX),
        )
    }

    /// Runs `op` until it succeeds, fails permanently, or retries run out.
    /// Returns the result and the number of attempts made.
    pub fn run<T, E>(
        &self,
        mut op: impl FnMut() -> Result<T, E>,
        transient: impl Fn(&E) -> bool,
    ) -> (Result<T, E>, u32) {
        let mut attempt = 0;
        loop {
            let result = op();
            attempt += 1;
            match result {
                Err(e) if transient(&e) && attempt <= self.retries => {
                    log::debug!("attempt {attempt} failed, retrying");
                    thread::sleep(self.delay(attempt));
                }
                other => return (other, attempt),
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct JsonClient {
    base_url: String,
    client: reqwest::blocking::Client,
}

impl JsonClient {
    pub fn new(base_url: &str, timeout: Duration) -> Result<Self, TransportError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| TransportError::Unavailable(e.to_string()))?;
        Ok(Self {
            base_url: base_url.trim_end_matches('/').to_string(),
            client,
        })
    }

    pub fn base_url(&self) -> &str {
        &self.base_url
    }

    fn url(&self, path: &str) -> String {
        format!("{}{path}", self.base_url)
    }

    pub fn post<B: Serialize, R: DeserializeOwned>(
        &self,
        path: &str,
        body: &B,
    ) -> Result<R, TransportError> {
        let resp = self
            .client
            .post(self.url(path))
            .json(body)
            .send()
            .map_err(classify)?;
        decode(resp)
    }

    pub fn get<R: DeserializeOwned>(&self, path: &str) -> Result<R, TransportError> {
        let resp = self.client.get(self.url(path)).send().map_err(classify)?;
        decode(resp)
    }
}

fn classify(e: reqwest::Error) -> TransportError {
    if e.is_timeout() {
        TransportError::Timeout
    } else {
        TransportError::Unavailable(e.to_string())
    }
}

fn decode<R: DeserializeOwned>(resp: reqwest::blocking::Response) -> Result<R, TransportError> {
    let status = resp.status();
    if status.is_server_error() {
        let body = resp.text().unwrap_or_default();
        return Err(TransportError::Unavailable(format!(
            "status {status}: {body}"
        )));
    }
    if !status.is_success() {
        return Err(TransportError::Rejected {
            status: status.as_u16(),
            body: resp.text().unwrap_or_default(),
        });
    }
    let text = resp.text().map_err(classify)?;
    serde_json::from_str(&text).map_err(|e| TransportError::Decode(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::cell::Cell;

    #[test]
    fn backoff_doubles() {
        let p = RetryPolicy {
            retries: 3,
            base_delay: Duration::from_millis(10),
        };
        assert_eq!(p.delay(1), Duration::from_millis(10));
        assert_eq!(p.delay(2), Duration::from_millis(20));
        assert_eq!(p.delay(3), Duration::from_millis(40));
    }

    #[test]
    fn retries_transient_errors_only() {
        let p = RetryPolicy {
            retries: 2,
            base_delay: Duration::ZERO,
        };
        let calls = Cell::new(0);
        let (r, n) = p.run(
            || {
                calls.set(calls.get() + 1);
                Err::<(), _>(TransportError::Timeout)
            },
            TransportError::is_transient,
        );
        assert!(r.is_err());
        assert_eq!(n, 3);

        let (r, n) = p.run(
            || {
                Err::<(), _>(TransportError::Rejected {
                    status: 400,
                    body: String::new(),
                })
            },
            TransportError::is_transient,
        );
        assert!(r.is_err());
        assert_eq!(n, 1);
    }

    #[test]
    fn unreachable_host_is_unavailable() {
        let c = JsonClient::new("http://127.0.0.1:9", Duration::from_millis(300)).unwrap();
        let err = c.get::<serde_json::Value>("/health").unwrap_err();
        assert!(err.is_transient());
    }
}
