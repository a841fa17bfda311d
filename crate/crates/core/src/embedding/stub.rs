//! Deterministic hash-derived embedder and an HTTP server exposing it over
//! the remote-service contract.

use std::net::SocketAddr;
use std::sync::Arc;
use std::thread::JoinHandle;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use sha2::{Digest, Sha256};
use tiny_http::{Header, Method, Response, Server};

use super::remote::{EmbedRequest, EmbedResponse, Modality};
use super::{
    check_text_batch, EmbeddingError, EmbeddingProvider, EmbeddingVector, ProviderDescriptor,
    ProviderKind, Result, TextEmbedder,
};

/// Maps every `(modality, input)` pair to a fixed pseudo-random unit vector.
/// Components are rounded to `f32` so a dump to a store reproduces them bit-exactly.
#[derive(Debug, Clone)]
pub struct HashEmbedder {
    descriptor: ProviderDescriptor,
    seed: u64,
}

impl HashEmbedder {
    pub fn new(dim: usize, seed: u64) -> Self {
        assert!(dim > 0, "dimension must be positive");
        Self {
            descriptor: ProviderDescriptor {
                kind: ProviderKind::InProcess,
                dim,
                identity: format!("hash-stub/dim={dim}/seed={seed}"),
            },
            seed,
        }
    }

    pub fn vector(&self, modality: Modality, input: &str) -> EmbeddingVector {
        let mut hasher = Sha256::new();
        hasher.update(self.seed.to_le_bytes());
        hasher.update([modality as u8]);
        hasher.update(input.as_bytes());
        let digest: [u8; 32] = hasher.finalize().into();
        let mut rng = ChaCha8Rng::from_seed(digest);
        let raw: Vec<f64> = (0..self.descriptor.dim)
            .map(|_| StandardNormal.sample(&mut rng))
            .collect();
        let norm = raw.iter().map(|v| v * v).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
        let values = raw.iter().map(|v| (v / norm) as f32 as f64).collect();
        EmbeddingVector::new(values).expect("finite by construction")
    }

}

impl TextEmbedder for HashEmbedder {
    fn descriptor(&self) -> &ProviderDescriptor {
        &self.descriptor
    }

    fn embed_texts(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>> {
        check_text_batch(texts)?;
        Ok(texts.iter().map(|t| self.vector(Modality::Text, t)).collect())
    }
}

impl EmbeddingProvider for HashEmbedder {
    fn embed_image(&self, image_ref: &str) -> Result<EmbeddingVector> {
        if image_ref.is_empty() {
            return Err(EmbeddingError::UnknownImageRef(String::new()));
        }
        Ok(self.vector(Modality::Image, image_ref))
    }
}

/// Background HTTP server exposing an in-process provider over the
/// remote-service contract. Shuts down on drop.
pub struct StubServer {
    server: Arc<Server>,
    addr: SocketAddr,
    workers: Vec<JoinHandle<()>>,
}

impl StubServer {
    pub fn start<P: EmbeddingProvider + 'static>(bind: &str, provider: P, workers: usize) -> Result<Self> {
        Self::start_shared(bind, Arc::new(provider), workers)
    }

    pub fn start_shared(
        bind: &str,
        embedder: Arc<dyn EmbeddingProvider>,
        workers: usize,
    ) -> Result<Self> {
        let server = Server::http(bind)
            .map_err(|e| EmbeddingError::ProviderUnavailable(format!("bind {bind}: {e}")))?;
        let addr = server
            .server_addr()
            .to_ip()
            .ok_or_else(|| EmbeddingError::ProviderUnavailable("non-IP listener".into()))?;
        let server = Arc::new(server);
        let workers = (0..workers.max(1))
            .map(|_| {
                let server = Arc::clone(&server);
                let embedder = Arc::clone(&embedder);
                std::thread::spawn(move || {
                    while let Ok(request) = server.recv() {
                        handle(embedder.as_ref(), request);
                    }
                })
            })
            .collect();
        Ok(Self {
            server,
            addr,
            workers,
        })
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    /// Blocks until the worker threads exit.
    pub fn join(mut self) {
        for w in self.workers.drain(..) {
            let _ = w.join();
        }
    }
}

impl Drop for StubServer {
    fn drop(&mut self) {
        for _ in 0..self.workers.len() {
            self.server.unblock();
        }
        for w in self.workers.drain(..) {
            let _ = w.join();
        }
    }
}

fn json_response(status: u16, body: String) -> Response<std::io::Cursor<Vec<u8>>> {
    let header = Header::from_bytes("Content-Type", "application/json").expect("static header");
    Response::from_string(body)
        .with_status_code(status)
        .with_header(header)
}

fn error_body(msg: &str) -> String {
    serde_json::json!({ "error": msg }).to_string()
}

fn respond(embedder: &dyn EmbeddingProvider, req: &EmbedRequest) -> Result<EmbedResponse> {
    let vectors = match req.modality {
        Modality::Text => embedder.embed_texts(&req.inputs)?,
        Modality::Image => req
            .inputs
            .iter()
            .map(|i| embedder.embed_image(i))
            .collect::<Result<_>>()?,
    };
    Ok(EmbedResponse {
        dim: embedder.dim(),
        vectors: vectors.into_iter().map(EmbeddingVector::into_values).collect(),
    })
}

fn handle(embedder: &dyn EmbeddingProvider, mut request: tiny_http::Request) {
    let response = match (request.method(), request.url()) {
        (Method::Post, "/embed") => {
            let mut body = String::new();
            match request.as_reader().read_to_string(&mut body) {
                Err(e) => json_response(400, error_body(&e.to_string())),
                Ok(_) => match serde_json::from_str::<EmbedRequest>(&body) {
                    Err(e) => json_response(400, error_body(&e.to_string())),
                    Ok(req) if req.inputs.is_empty() => {
                        json_response(400, error_body("empty inputs"))
                    }
                    Ok(req) => match respond(embedder, &req) {
                        Ok(resp) => json_response(
                            200,
                            serde_json::to_string(&resp).expect("serializable"),
                        ),
                        Err(e @ EmbeddingError::UnknownImageRef(_)) => {
                            json_response(404, error_body(&e.to_string()))
                        }
                        Err(e @ (EmbeddingError::EmptyInput | EmbeddingError::UnknownText(_))) => {
                            json_response(400, error_body(&e.to_string()))
                        }
                        Err(e) => json_response(500, error_body(&e.to_string())),
                    },
                },
            }
        }
        (Method::Get, "/health") => json_response(
            200,
            serde_json::json!({ "dim": embedder.dim(), "identity": embedder.descriptor().identity })
                .to_string(),
        ),
        _ => json_response(404, error_body("not found")),
    };
    if let Err(e) = request.respond(response) {
        log::warn!("stub server failed to respond: {e}");
    }
}
