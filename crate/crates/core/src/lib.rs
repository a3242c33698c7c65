//! Grounded multi-frame visual reasoning with a self-evolving note store.
//!
//! Pipeline per item: [`canon`] assigns stable visual identifiers, [`select`]
//! picks the matching task node from [`notes`], [`agent`] runs the
//! hypothesis/evidence/validation loop against a [`backend`], and [`reflect`]
//! decides whether and how the notes change. [`harness`] drives whole runs.

pub mod agent;
pub mod backend;
pub mod canon;
pub mod harness;
pub mod notes;
pub mod prompts;
pub mod reflect;
pub mod select;

pub use agent::{run_episode, AgentConfig, AgentError, EpisodeContext, ReasoningTrace};
pub use backend::{Backend, BackendError, FnBackend, ModelRequest, ModelResponse, RoleTag};
pub use canon::{canonicalize, CanonError, CanonicalInput, RawAsset, TriadicObservation, VisualId};
pub use harness::{run_eval, run_train, BenchmarkItem, EngineConfig, HarnessError, RunReport};
pub use notes::{KnowledgeBase, NodeStats, NotesError, PruneConfig, TaskNode, Tip, TipOrigin};
pub use reflect::{EligibilityReport, KeywordFilter, ReflectError};
pub use select::{Embedder, HashingEmbedder, SelectError, SelectionResult};
