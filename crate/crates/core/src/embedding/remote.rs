//! HTTP client for a remote embedding service.
//!
//! `POST {base}/embed` with `{"inputs": [...], "modality": "text"|"image"}`,
//! answered by `{"dim": N, "vectors": [[...], ...]}`.

use std::time::Duration;

use serde::{Deserialize, Serialize};
use ureq::Agent;

use super::{
    check_dim, check_text_batch, EmbeddingError, EmbeddingProvider, EmbeddingVector,
    ProviderDescriptor, ProviderKind, Result, TextEmbedder,
};

const MAX_BATCH: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Text,
    Image,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct EmbedRequest {
    pub inputs: Vec<String>,
    pub modality: Modality,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct EmbedResponse {
    pub dim: usize,
    pub vectors: Vec<Vec<f64>>,
}

/// Blocking client; `ureq::Agent` is cheap to clone and safe to share, so
/// concurrent callers get independent in-flight requests.
#[derive(Debug, Clone)]
pub struct RemoteProvider {
    descriptor: ProviderDescriptor,
    endpoint: String,
    agent: Agent,
}

impl RemoteProvider {
    pub fn new(base_url: &str, dim: usize, timeout: Duration) -> Result<Self> {
        if dim == 0 {
            return Err(EmbeddingError::EmptyInput);
        }
        let agent: Agent = Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        let base = base_url.trim_end_matches('/');
        Ok(Self {
            descriptor: ProviderDescriptor {
                kind: ProviderKind::RemoteService,
                dim,
                identity: base.to_string(),
            },
            endpoint: format!("{base}/embed"),
            agent,
        })
    }

    fn request(&self, inputs: &[String], modality: Modality) -> Result<Vec<EmbeddingVector>> {
        let body = EmbedRequest {
            inputs: inputs.to_vec(),
            modality,
        };
        let mut resp = self
            .agent
            .post(&self.endpoint)
            .send_json(&body)
            .map_err(|e| EmbeddingError::ProviderUnavailable(e.to_string()))?;
        let status = resp.status().as_u16();
        if status == 404 && modality == Modality::Image {
            return Err(EmbeddingError::UnknownImageRef(inputs.join(",")));
        }
        if status != 200 {
            let text = resp.body_mut().read_to_string().unwrap_or_default();
            return Err(EmbeddingError::ProviderUnavailable(format!("HTTP {status}: {text}")));
        }
        let parsed: EmbedResponse = resp
            .body_mut()
            .read_json()
            .map_err(|e| EmbeddingError::MalformedResponse(e.to_string()))?;
        check_dim(self.descriptor.dim, parsed.dim)?;
        if parsed.vectors.len() != inputs.len() {
            return Err(EmbeddingError::MalformedResponse(format!(
                "{} vectors for {} inputs",
                parsed.vectors.len(),
                inputs.len()
            )));
        }
        parsed
            .vectors
            .into_iter()
            .map(|v| {
                check_dim(self.descriptor.dim, v.len())?;
                EmbeddingVector::new(v)
            })
            .collect()
    }
}

impl TextEmbedder for RemoteProvider {
    fn descriptor(&self) -> &ProviderDescriptor {
        &self.descriptor
    }

    fn embed_texts(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>> {
        check_text_batch(texts)?;
        let mut out = Vec::with_capacity(texts.len());
        for chunk in texts.chunks(MAX_BATCH) {
            out.extend(self.request(chunk, Modality::Text)?);
        }
        Ok(out)
    }
}

impl EmbeddingProvider for RemoteProvider {
    fn embed_image(&self, image_ref: &str) -> Result<EmbeddingVector> {
        let mut v = self.request(&[image_ref.to_string()], Modality::Image)?;
        Ok(v.remove(0))
    }
}
