//! A local HTTP server speaking the backend protocol, for tests and for
//! exposing an in-process [`Transport`] to out-of-process adapters.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;

use super::{BackendError, Route, Transport};

/// Maps a request to `(status, body)`. `None` for the route means the path
/// was not a protocol route.
pub type Handler = Arc<dyn Fn(Option<Route>, &[u8]) -> (u16, Vec<u8>) + Send + Sync>;

pub struct StubServer {
    server: Arc<tiny_http::Server>,
    url: String,
    hits: Arc<AtomicUsize>,
    worker: Option<JoinHandle<()>>,
}

fn status_of(e: &BackendError) -> u16 {
    match e {
        BackendError::Rejection { status, .. } => *status,
        BackendError::MalformedRequest(_) => 400,
        _ => 500,
    }
}

impl StubServer {
    /// Binds an ephemeral port on 127.0.0.1 and serves until dropped.
    pub fn start(handler: Handler) -> Result<Self, BackendError> {
        let server = tiny_http::Server::http("127.0.0.1:0").map_err(|e| BackendError::Io(e.to_string()))?;
        let server = Arc::new(server);
        let addr = server.server_addr().to_ip().ok_or_else(|| BackendError::Io("stub has no IP address".into()))?;
        let hits = Arc::new(AtomicUsize::new(0));
        let (srv, counter) = (Arc::clone(&server), Arc::clone(&hits));
        let worker = std::thread::spawn(move || {
            for mut request in srv.incoming_requests() {
                counter.fetch_add(1, Ordering::SeqCst);
                let mut body = Vec::new();
                let _ = request.as_reader().read_to_end(&mut body);
                let route = match request.method() {
                    tiny_http::Method::Post => Route::from_path(request.url()),
                    _ => None,
                };
                let (status, out) = handler(route, &body);
                let header = tiny_http::Header::from_bytes("Content-Type", "application/json").unwrap();
                let response = tiny_http::Response::from_data(out).with_status_code(status).with_header(header);
                let _ = request.respond(response);
            }
        });
        Ok(Self { server, url: format!("http://{addr}"), hits, worker: Some(worker) })
    }

    /// Serves a transport: protocol errors become 4xx/5xx JSON error bodies,
    /// unknown paths 404.
    pub fn serve(transport: Arc<dyn Transport>) -> Result<Self, BackendError> {
        Self::start(Arc::new(move |route, body| {
            let Some(route) = route else {
                return (404, br#"{"error":"not found"}"#.to_vec());
            };
            match transport.post(route, body) {
                Ok(out) => (200, out),
                Err(e) => (status_of(&e), serde_json::to_vec(&serde_json::json!({ "error": e.to_string() })).unwrap()),
            }
        }))
    }

    pub fn url(&self) -> &str {
        &self.url
    }

    /// Requests received so far, including rejected ones.
    pub fn hits(&self) -> usize {
        self.hits.load(Ordering::SeqCst)
    }
}

impl Drop for StubServer {
    fn drop(&mut self) {
        self.server.unblock();
        if let Some(w) = self.worker.take() {
            let _ = w.join();
        }
    }
}

#[cfg(test)]
mod tests {
    use std::time::Duration;

    use super::*;
    use crate::backends::{caption_sample, BackendEndpoint, EndpointKind, HttpTransport};

    fn transport(url: &str, retries: u32) -> HttpTransport {
        let mut ep = BackendEndpoint::new(url, EndpointKind::Caption);
        ep.max_retries = retries;
        ep.timeout = 5.0;
        HttpTransport::new(ep).unwrap().with_backoff_base(Duration::from_millis(1))
    }

    #[test]
    fn retries_server_errors() {
        let stub = StubServer::start(Arc::new(|_, _| (500, b"boom".to_vec()))).unwrap();
        let err = caption_sample(&transport(stub.url(), 2), "x").unwrap_err();
        assert!(matches!(err, BackendError::Transport { attempts: 3, .. }), "{err:?}");
        assert_eq!(stub.hits(), 3);
    }

    #[test]
    fn client_errors_are_not_retried() {
        let stub = StubServer::start(Arc::new(|_, _| (422, b"no".to_vec()))).unwrap();
        let err = caption_sample(&transport(stub.url(), 2), "x").unwrap_err();
        assert_eq!(err, BackendError::Rejection { status: 422, message: "no".into() });
        assert_eq!(stub.hits(), 1);
    }

    #[test]
    fn recovers_after_a_transient_failure() {
        let n = Arc::new(AtomicUsize::new(0));
        let seen = Arc::clone(&n);
        let stub = StubServer::start(Arc::new(move |route, _| {
            assert_eq!(route, Some(Route::Caption));
            if seen.fetch_add(1, Ordering::SeqCst) == 0 {
                (503, Vec::new())
            } else {
                (200, br#"{"caption":"  a dog  "}"#.to_vec())
            }
        }))
        .unwrap();
        assert_eq!(caption_sample(&transport(stub.url(), 2), "x").unwrap(), "a dog");
        assert_eq!(stub.hits(), 2);
    }

    #[test]
    fn endpoint_validation() {
        let mut ep = BackendEndpoint::new("http://127.0.0.1:1", EndpointKind::Rewrite);
        ep.auth_token_env = Some("CIP_TEST_TOKEN_UNSET".into());
        assert!(HttpTransport::new(ep).is_ok());
        assert!(HttpTransport::new(BackendEndpoint::new("ftp://x", EndpointKind::Rewrite)).is_err());
    }
}
