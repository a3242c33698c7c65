//! Prompt templates, one per backend role. Templates are plain text files
//! under `prompts/` with `=== system ===` and `=== user ===` sections and
//! `{{name}}` placeholders.

use crate::backend::{Message, ModelRequest, RoleTag};

/// Bumped whenever any template text changes; recorded cassettes and fixtures
/// are only valid for the version they were captured with.
pub const PROMPT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Template {
    Hypothesizer,
    Gatherer,
    GathererRetry,
    Validator,
    Degenerative,
    Discovery,
    Reflection,
    TipDiscovery,
}

impl Template {
    fn source(self) -> &'static str {
        match self {
            Template::Hypothesizer => include_str!("../prompts/hypothesizer.txt"),
            Template::Gatherer => include_str!("../prompts/gatherer.txt"),
            Template::GathererRetry => include_str!("../prompts/gatherer_retry.txt"),
            Template::Validator => include_str!("../prompts/validator.txt"),
            Template::Degenerative => include_str!("../prompts/degenerative.txt"),
            Template::Discovery => include_str!("../prompts/discovery.txt"),
            Template::Reflection => include_str!("../prompts/reflection.txt"),
            Template::TipDiscovery => include_str!("../prompts/tip_discovery.txt"),
        }
    }

    pub fn role(self) -> RoleTag {
        match self {
            Template::Hypothesizer => RoleTag::Hypothesizer,
            Template::Gatherer | Template::GathererRetry => RoleTag::Gatherer,
            Template::Validator => RoleTag::Validator,
            Template::Degenerative => RoleTag::Degenerative,
            Template::Discovery => RoleTag::Discovery,
            Template::Reflection | Template::TipDiscovery => RoleTag::Reflection,
        }
    }

    fn sections(self) -> (&'static str, &'static str) {
        let src = self.source();
        let rest = src.strip_prefix("=== system ===\n").expect("template starts with a system section");
        let (system, user) = rest.split_once("=== user ===\n").expect("template has a user section");
        (system.trim_end(), user.trim_end())
    }

    /// Builds the system + user messages with placeholders substituted.
    pub fn render(self, vars: &[(&str, &str)]) -> (Message, Message) {
        let (system, user) = self.sections();
        (Message::system(substitute(system, vars)), Message::user(substitute(user, vars)))
    }

    pub fn request(self, vars: &[(&str, &str)]) -> ModelRequest {
        let (system, user) = self.render(vars);
        ModelRequest::new(self.role(), vec![system, user])
    }
}

fn substitute(template: &str, vars: &[(&str, &str)]) -> String {
    let mut out = template.to_string();
    for (key, value) in vars {
        out = out.replace(&format!("{{{{{key}}}}}"), value);
    }
    out
}

/// `- item` lines, or `(none)` for an empty list.
pub fn bullet_list<I, S>(items: I) -> String
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    let lines: Vec<String> = items.into_iter().map(|s| format!("- {}", s.as_ref())).collect();
    if lines.is_empty() {
        "(none)".to_string()
    } else {
        lines.join("\n")
    }
}
