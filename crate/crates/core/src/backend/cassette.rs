use std::collections::{BTreeMap, HashMap, VecDeque};
use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{Backend, BackendError, ModelRequest, ModelResponse, RoleTag};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CassetteEntry {
    pub digest: String,
    pub role_tag: RoleTag,
    pub response_text: String,
}

/// Recorded request/response pairs in request order. Serialized as a bare
/// JSON array.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Cassette {
    pub entries: Vec<CassetteEntry>,
}

impl Cassette {
    pub fn load(path: &Path) -> Result<Self, BackendError> {
        let text = std::fs::read_to_string(path).map_err(|e| BackendError::Io(e.to_string()))?;
        serde_json::from_str(&text).map_err(|e| BackendError::Io(format!("cassette {}: {e}", path.display())))
    }

    pub fn save(&self, path: &Path) -> Result<(), BackendError> {
        let json = serde_json::to_string_pretty(self).expect("cassette serializes");
        std::fs::write(path, json + "\n").map_err(|e| BackendError::Io(e.to_string()))
    }

    /// Responses grouped by digest, each group in recording order.
    pub fn digest_map(&self) -> BTreeMap<String, Vec<String>> {
        let mut map: BTreeMap<String, Vec<String>> = BTreeMap::new();
        for e in &self.entries {
            map.entry(e.digest.clone()).or_default().push(e.response_text.clone());
        }
        map
    }
}

/// Wraps another backend and captures every successful exchange.
pub struct RecordingBackend<B> {
    inner: B,
    cassette: Mutex<Cassette>,
}

impl<B: Backend> RecordingBackend<B> {
    pub fn new(inner: B) -> Self {
        Self { inner, cassette: Mutex::new(Cassette::default()) }
    }

    pub fn cassette(&self) -> Cassette {
        self.cassette.lock().unwrap().clone()
    }

    pub fn save(&self, path: &Path) -> Result<(), BackendError> {
        self.cassette().save(path)
    }
}

impl<B: Backend> Backend for RecordingBackend<B> {
    fn complete(&self, request: &ModelRequest) -> Result<ModelResponse, BackendError> {
        let response = self.inner.complete(request)?;
        self.cassette.lock().unwrap().entries.push(CassetteEntry {
            digest: request.digest(),
            role_tag: request.role,
            response_text: response.text.clone(),
        });
        Ok(response)
    }
}

/// Serves recorded responses by request digest. Repeated digests are served
/// in recording order; anything unrecorded is a [`BackendError::CassetteMiss`].
#[derive(Debug)]
pub struct ReplayBackend {
    queues: Mutex<HashMap<String, VecDeque<String>>>,
}

impl ReplayBackend {
    pub fn new(cassette: &Cassette) -> Self {
        let queues = cassette.digest_map().into_iter().map(|(d, v)| (d, VecDeque::from(v))).collect();
        Self { queues: Mutex::new(queues) }
    }

    pub fn load(path: &Path) -> Result<Self, BackendError> {
        Ok(Self::new(&Cassette::load(path)?))
    }

    pub fn remaining(&self) -> usize {
        self.queues.lock().unwrap().values().map(VecDeque::len).sum()
    }
}

impl Backend for ReplayBackend {
    fn complete(&self, request: &ModelRequest) -> Result<ModelResponse, BackendError> {
        let digest = request.digest();
        let mut queues = self.queues.lock().unwrap();
        match queues.get_mut(&digest).and_then(VecDeque::pop_front) {
            Some(text) => Ok(ModelResponse::text_only(text)),
            None => Err(BackendError::CassetteMiss { role: request.role, digest }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{Message, ScriptedBackend};

    fn req(role: RoleTag, text: &str) -> ModelRequest {
        ModelRequest::new(role, vec![Message::user(text)])
    }

    #[test]
    fn record_then_replay() {
        let scripted = ScriptedBackend::from_pairs([
            (RoleTag::Hypothesizer, "first"),
            (RoleTag::Hypothesizer, "second"),
            (RoleTag::Validator, "Verdict: sufficient"),
        ]);
        let recorder = RecordingBackend::new(scripted);
        let a = req(RoleTag::Hypothesizer, "same prompt");
        let v = req(RoleTag::Validator, "check");
        assert_eq!(recorder.complete(&a).unwrap().text, "first");
        assert_eq!(recorder.complete(&v).unwrap().text, "Verdict: sufficient");
        assert_eq!(recorder.complete(&a).unwrap().text, "second");

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.cassette");
        recorder.save(&path).unwrap();
        let loaded = Cassette::load(&path).unwrap();
        assert_eq!(loaded.digest_map(), recorder.cassette().digest_map());
        assert_eq!(loaded.entries.len(), 3);

        let replay = ReplayBackend::new(&loaded);
        assert_eq!(replay.complete(&a).unwrap().text, "first");
        assert_eq!(replay.complete(&a).unwrap().text, "second");
        assert_eq!(replay.complete(&v).unwrap().text, "Verdict: sufficient");
        assert!(matches!(replay.complete(&a), Err(BackendError::CassetteMiss { .. })));
        assert_eq!(replay.remaining(), 0);
    }

    #[test]
    fn differing_text_misses() {
        let cassette = Cassette {
            entries: vec![CassetteEntry {
                digest: req(RoleTag::Validator, "recorded").digest(),
                role_tag: RoleTag::Validator,
                response_text: "x".into(),
            }],
        };
        let replay = ReplayBackend::new(&cassette);
        assert!(matches!(
            replay.complete(&req(RoleTag::Validator, "recorded but edited")),
            Err(BackendError::CassetteMiss { role: RoleTag::Validator, .. })
        ));
    }

    #[test]
    fn file_is_plain_array() {
        let c = Cassette {
            entries: vec![CassetteEntry { digest: "d".into(), role_tag: RoleTag::Gatherer, response_text: "r".into() }],
        };
        let v = serde_json::to_value(&c).unwrap();
        assert_eq!(v, serde_json::json!([{"digest": "d", "role_tag": "gatherer", "response_text": "r"}]));
    }
}
