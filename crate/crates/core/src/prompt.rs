use serde::{Deserialize, Serialize};

use crate::program::program_sha;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PromptKind {
    Initial,
    Improve,
    Repair,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub system_text: String,
    pub user_text: String,
    pub kind: PromptKind,
}

impl PromptBundle {
    pub fn new(
        kind: PromptKind,
        system_text: impl Into<String>,
        user_text: impl Into<String>,
    ) -> Self {
        Self {
            system_text: system_text.into(),
            user_text: user_text.into(),
            kind,
        }
    }

    /// The text that identifies this prompt in cassettes.
    pub fn full_text(&self) -> String {
        format!("{}\n\n{}", self.system_text, self.user_text)
    }

    pub fn sha(&self) -> String {
        program_sha(&self.full_text())
    }
}

/// Generic repair prompt: the failing source plus the error it produced.
pub fn repair_prompt(
    system_text: &str,
    task_summary: &str,
    source: &str,
    error: &str,
) -> PromptBundle {
    let user = format!(
        "{task_summary}\n\nThe following program could not be executed.\n\n```\n{source}\n```\n\n\
         Error:\n```\n{error}\n```\n\nFix the program so that it runs without errors. \
         Reply with the complete corrected program in a single code block."
    );
    PromptBundle::new(PromptKind::Repair, system_text, user)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn repair_prompt_embeds_source_and_error() {
        let p = repair_prompt(
            "sys",
            "Task.",
            "def policy\nact const (",
            "SyntaxError: '(' was never closed",
        );
        assert_eq!(p.kind, PromptKind::Repair);
        assert!(p.user_text.contains("def policy\nact const ("));
        assert!(p.user_text.contains("SyntaxError: '(' was never closed"));
        assert_eq!(p.sha(), program_sha(&format!("sys\n\n{}", p.user_text)));
    }
}
