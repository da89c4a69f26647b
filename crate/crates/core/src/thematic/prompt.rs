//! The sociological insight prompt sent alongside the word-cloud image.

const TEMPLATE: &str = include_str!("../../assets/prompt_template.txt");

pub const PROMPT_VERSION: &str = "insight-prompt/1";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    pub text: String,
    pub version: String,
}

impl Default for PromptTemplate {
    fn default() -> Self {
        Self { text: TEMPLATE.to_string(), version: PROMPT_VERSION.to_string() }
    }
}

impl PromptTemplate {
    /// Substitutes the cluster count and the last cluster index.
    pub fn render(&self, k: usize) -> String {
        self.text
            .replace("{K_LAST}", &k.saturating_sub(1).to_string())
            .replace("{K}", &k.to_string())
    }
}

pub fn assemble_prompt(k: usize) -> String {
    PromptTemplate::default().render(k)
}

#[cfg(test)]
mod tests {
    use super::*;

    const GOLDEN: &str = include_str!("../../assets/prompt_k8.golden.txt");

    #[test]
    fn k8_matches_golden() {
        let p = assemble_prompt(8);
        assert_eq!(p, GOLDEN);
        assert!(p.contains("8 word clouds (Cluster 0-7)"));
        assert!(p.ends_with("structured table for academic reporting."));
        for section in ["# Role:", "# Context:", "# Task:", "Human Mimicry:", "Silicon-Centricity:"] {
            assert!(p.contains(section));
        }
    }

    #[test]
    fn k3_only_changes_placeholders() {
        let p = assemble_prompt(3);
        assert!(p.contains("3 word clouds (Cluster 0-2)"));
        assert_eq!(p.replace("3 word clouds (Cluster 0-2)", "8 word clouds (Cluster 0-7)"), GOLDEN);
    }
}
