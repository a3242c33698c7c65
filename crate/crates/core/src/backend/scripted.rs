use std::collections::{BTreeMap, HashMap};
use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{Backend, BackendError, ModelRequest, ModelResponse, RoleTag};

/// On-disk fixture format for [`ScriptedBackend`].
///
/// ```json
/// { "cycle": false, "responses": { "hypothesizer": ["..."], "validator": ["..."] } }
/// ```
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptFile {
    #[serde(default)]
    pub cycle: bool,
    pub responses: BTreeMap<RoleTag, Vec<String>>,
}

/// Returns the next fixture for the request's role. With `cycle` set, each
/// role's list wraps around instead of running dry.
#[derive(Debug)]
pub struct ScriptedBackend {
    fixtures: HashMap<RoleTag, Vec<String>>,
    cursors: Mutex<HashMap<RoleTag, usize>>,
    cycle: bool,
}

impl ScriptedBackend {
    pub fn new(script: ScriptFile) -> Self {
        Self {
            fixtures: script.responses.into_iter().collect(),
            cursors: Mutex::new(HashMap::new()),
            cycle: script.cycle,
        }
    }

    pub fn from_pairs<I, S>(pairs: I) -> Self
    where
        I: IntoIterator<Item = (RoleTag, S)>,
        S: Into<String>,
    {
        let mut responses: BTreeMap<RoleTag, Vec<String>> = BTreeMap::new();
        for (role, text) in pairs {
            responses.entry(role).or_default().push(text.into());
        }
        Self::new(ScriptFile { cycle: false, responses })
    }

    pub fn cycling(mut self) -> Self {
        self.cycle = true;
        self
    }

    pub fn load(path: &Path) -> Result<Self, BackendError> {
        let text = std::fs::read_to_string(path).map_err(|e| BackendError::Io(e.to_string()))?;
        let script: ScriptFile = serde_json::from_str(&text)
            .map_err(|e| BackendError::Config(format!("fixture file {}: {e}", path.display())))?;
        Ok(Self::new(script))
    }

    /// Number of requests served so far for `role`.
    pub fn served(&self, role: RoleTag) -> usize {
        self.cursors.lock().unwrap().get(&role).copied().unwrap_or(0)
    }
}

impl Backend for ScriptedBackend {
    fn complete(&self, request: &ModelRequest) -> Result<ModelResponse, BackendError> {
        let exhausted = || BackendError::ScriptExhausted(request.role);
        let list = self.fixtures.get(&request.role).filter(|l| !l.is_empty()).ok_or_else(exhausted)?;
        let mut cursors = self.cursors.lock().unwrap();
        let cursor = cursors.entry(request.role).or_insert(0);
        let idx = if self.cycle { *cursor % list.len() } else { *cursor };
        let text = list.get(idx).ok_or_else(exhausted)?.clone();
        *cursor += 1;
        Ok(ModelResponse::text_only(text))
    }
}
