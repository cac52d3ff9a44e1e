//! Prompt templates. The bundled set lives in `prompts/v1/`; a directory with
//! the same file names can replace it at run time.

use std::fs;
use std::io;
use std::path::Path;

use crate::backend::LinkQuery;
use crate::dag::{NodeSummary, ProposalRequest};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptSet {
    pub version: String,
    pub system: String,
    pub propose: String,
    pub link: String,
    pub reformat: String,
    pub direction: String,
}

const FILES: [&str; 5] = ["system.txt", "propose.txt", "link.txt", "reformat.txt", "direction.txt"];

impl Default for PromptSet {
    fn default() -> Self {
        Self::bundled()
    }
}

impl PromptSet {
    pub fn bundled() -> Self {
        Self {
            version: include_str!("../../prompts/v1/VERSION").trim().to_string(),
            system: include_str!("../../prompts/v1/system.txt").to_string(),
            propose: include_str!("../../prompts/v1/propose.txt").to_string(),
            link: include_str!("../../prompts/v1/link.txt").to_string(),
            reformat: include_str!("../../prompts/v1/reformat.txt").to_string(),
            direction: include_str!("../../prompts/v1/direction.txt").to_string(),
        }
    }

    /// Reads all five templates from `dir`; `VERSION` is optional.
    pub fn from_dir(dir: impl AsRef<Path>) -> io::Result<Self> {
        let dir = dir.as_ref();
        let read = |name: &str| fs::read_to_string(dir.join(name));
        let [system, propose, link, reformat, direction] = FILES.map(read);
        let version = read("VERSION")
            .map(|v| v.trim().to_string())
            .unwrap_or_else(|_| dir.display().to_string());
        Ok(Self {
            version,
            system: system?,
            propose: propose?,
            link: link?,
            reformat: reformat?,
            direction: direction?,
        })
    }

    pub fn render_propose(&self, req: &ProposalRequest) -> String {
        let layer = req.frontier.first().map(|n| n.layer).unwrap_or(0);
        render(
            &self.propose,
            &[
                ("policy", req.policy.clone()),
                ("context", context_block(&req.context)),
                ("layer", layer.to_string()),
                ("remaining_depth", req.remaining_depth.to_string()),
                ("frontier", node_block(&req.frontier)),
                ("max_branch", req.max_branch.to_string()),
            ],
        )
    }

    pub fn render_link(&self, q: &LinkQuery) -> String {
        render(
            &self.link,
            &[
                ("policy", q.policy.clone()),
                ("context", context_block(&q.context)),
                ("nodes", node_block(&q.nodes)),
                ("indicator_id", q.indicator.id.clone()),
                ("indicator_name", q.indicator.name.clone()),
                ("indicator_definition", q.indicator.definition.clone()),
                ("max_links", q.max_links.to_string()),
            ],
        )
    }

    /// The original prompt followed by a request to fix the format.
    pub fn render_reformat(&self, original: &str, error: &str) -> String {
        format!(
            "{original}\n\n{}",
            render(&self.reformat, &[("error", error.to_string())])
        )
    }

    pub fn render_direction(&self, original: &str, token: &str) -> String {
        format!(
            "{original}\n\n{}",
            render(&self.direction, &[("token", format!("{token:?}"))])
        )
    }
}

/// Replaces every `{{key}}` with its value. Unknown placeholders are left as is.
pub fn render(template: &str, vars: &[(&str, String)]) -> String {
    let mut out = template.to_string();
    for (key, value) in vars {
        out = out.replace(&format!("{{{{{key}}}}}"), value);
    }
    out
}

fn context_block(context: &std::collections::BTreeMap<String, String>) -> String {
    if context.is_empty() {
        return "(none given)".to_string();
    }
    context
        .iter()
        .map(|(k, v)| format!("- {k}: {v}"))
        .collect::<Vec<_>>()
        .join("\n")
}

fn node_block(nodes: &[NodeSummary]) -> String {
    nodes
        .iter()
        .map(|n| format!("- [{}] (layer {}) {}", n.node_id, n.layer, n.text))
        .collect::<Vec<_>>()
        .join("\n")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn render_substitutes_known_keys_only() {
        let out = render("{{a}} and {{b}}", &[("a", "x".into())]);
        assert_eq!(out, "x and {{b}}");
    }

    #[test]
    fn propose_prompt_embeds_policy_frontier_and_limits() {
        let req = ProposalRequest {
            policy: "Introduce a carbon tax".into(),
            context: [("jurisdiction".to_string(), "Japan".to_string())].into(),
            frontier: vec![NodeSummary {
                node_id: "L0N0".into(),
                text: "Introduce a carbon tax".into(),
                layer: 0,
            }],
            max_branch: 3,
            remaining_depth: 2,
        };
        let p = PromptSet::bundled().render_propose(&req);
        assert!(p.contains("Introduce a carbon tax"));
        assert!(p.contains("- jurisdiction: Japan"));
        assert!(p.contains("[L0N0] (layer 0)"));
        assert!(p.contains("at most 3"));
        assert!(!p.contains("{{"));
    }

    #[test]
    fn bundled_set_is_versioned() {
        assert_eq!(PromptSet::bundled().version, "v1");
    }
}
