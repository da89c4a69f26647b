//! Thematic discovery: prompt the multimodal model with the word-cloud
//! grid, parse its report, then fold in human review edits.

mod parse;
mod prompt;
mod vision;

use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::digest::sha256_hex;
use crate::error::{Error, Result};
use crate::wordcloud::VisualFeatureSet;

pub use parse::{parse_categories, parse_report};
pub use prompt::{assemble_prompt, PromptTemplate, PROMPT_VERSION};
pub use vision::{vision_registry, HttpVision, StubVision, VisionConfig, VisionProvider, VisionRequest};

pub const RAW_REPORT_SCHEMA: &str = "thematic-raw/1";
pub const FINAL_REPORT_SCHEMA: &str = "thematic-final/1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Category {
    HumanMimicry,
    SiliconCentricity,
    Noise,
}

impl Category {
    pub fn display_name(self) -> &'static str {
        match self {
            Category::HumanMimicry => "Human Mimicry",
            Category::SiliconCentricity => "Silicon-Centricity",
            Category::Noise => "Noise",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.display_name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterFinding {
    pub cluster_index: usize,
    /// Short cluster name, when the report gives one.
    #[serde(default)]
    pub label: String,
    pub thematic_summary: String,
    pub sociological_insight: String,
    pub categories: BTreeSet<Category>,
    /// Category text that matched no archetype, kept verbatim.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub unmapped: Vec<String>,
    /// Set when the category cell needs a reviewer's attention.
    #[serde(default)]
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawThematicReport {
    pub schema: String,
    pub k: usize,
    pub findings: Vec<ClusterFinding>,
    pub provider_tag: String,
    pub prompt_version: String,
    pub image_digest: String,
    pub image_media_type: String,
    pub response_text: String,
}

impl RawThematicReport {
    pub fn save(&self, path: &Path) -> Result<()> {
        crate::io::write_json(path, self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let r: Self = crate::io::read_json(path)?;
        if r.schema != RAW_REPORT_SCHEMA {
            return Err(Error::SchemaVersion { expected: RAW_REPORT_SCHEMA.into(), found: r.schema });
        }
        r.check_complete()?;
        Ok(r)
    }

    fn check_complete(&self) -> Result<()> {
        if self.findings.len() != self.k || self.findings.iter().enumerate().any(|(i, f)| f.cluster_index != i) {
            return Err(Error::InvalidInput(format!(
                "raw report must hold clusters 0..{} exactly once, in order",
                self.k
            )));
        }
        Ok(())
    }
}

/// Reads the image the provider should see: the PNG when one was rendered,
/// otherwise the SVG.
pub fn load_image(set: &VisualFeatureSet) -> Result<(Vec<u8>, &'static str)> {
    match &set.png_path {
        Some(p) => Ok((std::fs::read(p).map_err(|e| Error::io(p, e))?, "image/png")),
        None => Ok((std::fs::read(&set.svg_path).map_err(|e| Error::io(&set.svg_path, e))?, "image/svg+xml")),
    }
}

/// Sends image and prompt to the provider, keeps the reply verbatim in
/// `<out_dir>/response.txt` and parses it.
pub fn discover(
    set: &VisualFeatureSet,
    prompt: &str,
    provider: &dyn VisionProvider,
    top_phrases: &[Vec<String>],
    out_dir: &Path,
) -> Result<RawThematicReport> {
    let k = set.panels.len();
    let (image, media_type) = load_image(set)?;
    let request = VisionRequest { prompt, k, image: &image, media_type, top_phrases };
    let response = provider.analyze(&request)?;
    let retained: PathBuf = out_dir.join("response.txt");
    crate::io::write_bytes(&retained, response.as_bytes())?;
    let findings = parse_report(&response, k).map_err(|e| match e {
        Error::ReportParse { reason, .. } => Error::ReportParse { reason, retained: Some(retained.clone()) },
        other => other,
    })?;
    Ok(RawThematicReport {
        schema: RAW_REPORT_SCHEMA.into(),
        k,
        findings,
        provider_tag: provider.tag(),
        prompt_version: PROMPT_VERSION.into(),
        image_digest: sha256_hex(&image),
        image_media_type: media_type.into(),
        response_text: response,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EditField {
    ThematicSummary,
    SociologicalInsight,
    Categories,
    Label,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReviewEdit {
    pub cluster: usize,
    pub field: EditField,
    /// A string, or for categories a string or list of strings.
    pub value: Value,
    pub reviewer: String,
    pub rationale: String,
    pub ts: DateTime<Utc>,
}

pub fn read_edits(path: &Path) -> Result<Vec<ReviewEdit>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, l)| serde_json::from_str(l).map_err(|e| Error::json(format!("{}:{}", path.display(), n + 1), e)))
        .collect()
}

pub fn write_edits(path: &Path, edits: &[ReviewEdit]) -> Result<()> {
    let mut out = String::new();
    for e in edits {
        out.push_str(&serde_json::to_string(e).map_err(|err| Error::json("review edit", err))?);
        out.push('\n');
    }
    crate::io::write_bytes(path, out.as_bytes())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalThematicReport {
    pub schema: String,
    /// Digest of the serialized raw report the edits were applied to.
    pub base_digest: String,
    pub base_provider_tag: String,
    pub findings: Vec<ClusterFinding>,
    pub edits: Vec<ReviewEdit>,
    pub approved_by: String,
    pub approved_at: DateTime<Utc>,
}

impl FinalThematicReport {
    pub fn save(&self, path: &Path) -> Result<()> {
        crate::io::write_json(path, self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let r: Self = crate::io::read_json(path)?;
        if r.schema != FINAL_REPORT_SCHEMA {
            return Err(Error::SchemaVersion { expected: FINAL_REPORT_SCHEMA.into(), found: r.schema });
        }
        Ok(r)
    }

    /// Table with one row per cluster.
    pub fn to_markdown(&self) -> String {
        let cell = |s: &str| s.replace('|', "\\|").replace('\n', " ");
        let mut out = String::from("| No. | Cluster | Theme | Sociological Insight | Category |\n|---|---|---|---|---|\n");
        for f in &self.findings {
            let mut cats: Vec<String> = f.categories.iter().map(|c| c.display_name().to_string()).collect();
            cats.extend(f.unmapped.iter().map(|u| format!("{u} (unmapped)")));
            out.push_str(&format!(
                "| {} | {} | {} | {} | {} |\n",
                f.cluster_index,
                cell(&f.label),
                cell(&f.thematic_summary),
                cell(&f.sociological_insight),
                cell(&cats.join(" / "))
            ));
        }
        out
    }
}

fn edit_text(edit: &ReviewEdit) -> Result<String> {
    edit.value
        .as_str()
        .map(str::to_owned)
        .ok_or_else(|| Error::InvalidInput(format!("edit on cluster {} needs a string value", edit.cluster)))
}

fn edit_categories(edit: &ReviewEdit) -> Result<BTreeSet<Category>> {
    let parts: Vec<String> = match &edit.value {
        Value::String(s) => vec![s.clone()],
        Value::Array(items) => items
            .iter()
            .map(|v| v.as_str().map(str::to_owned))
            .collect::<Option<_>>()
            .ok_or_else(|| Error::InvalidInput("category list must hold strings".into()))?,
        _ => return Err(Error::InvalidInput("categories edit needs a string or list".into())),
    };
    let mut out = BTreeSet::new();
    for p in parts {
        let (found, unmapped) = parse_categories(&p);
        if !unmapped.is_empty() {
            return Err(Error::InvalidInput(format!("unknown category {:?}", unmapped.join(", "))));
        }
        out.extend(found);
    }
    if out.is_empty() {
        return Err(Error::InvalidInput(format!("edit on cluster {} leaves no category", edit.cluster)));
    }
    Ok(out)
}

/// Applies `edits` in order to the raw findings.
pub fn apply_edits(findings: &[ClusterFinding], edits: &[ReviewEdit]) -> Result<Vec<ClusterFinding>> {
    let mut out = findings.to_vec();
    for edit in edits {
        if edit.rationale.trim().is_empty() {
            return Err(Error::InvalidInput(format!("edit on cluster {} has no rationale", edit.cluster)));
        }
        let Some(target) = out.iter_mut().find(|f| f.cluster_index == edit.cluster) else {
            return Err(Error::InvalidInput(format!("edit targets unknown cluster {}", edit.cluster)));
        };
        match edit.field {
            EditField::ThematicSummary => target.thematic_summary = edit_text(edit)?,
            EditField::SociologicalInsight => target.sociological_insight = edit_text(edit)?,
            EditField::Label => target.label = edit_text(edit)?,
            EditField::Categories => {
                target.categories = edit_categories(edit)?;
                target.unmapped.clear();
                target.flagged = false;
            }
        }
    }
    Ok(out)
}

pub fn apply_review(
    raw: &RawThematicReport,
    edits: Vec<ReviewEdit>,
    approver: &str,
    approved_at: DateTime<Utc>,
) -> Result<FinalThematicReport> {
    if approver.trim().is_empty() {
        return Err(Error::InvalidInput("approval needs a reviewer id".into()));
    }
    raw.check_complete()?;
    let findings = apply_edits(&raw.findings, &edits)?;
    let base = serde_json::to_vec(raw).map_err(|e| Error::json("raw report", e))?;
    Ok(FinalThematicReport {
        schema: FINAL_REPORT_SCHEMA.into(),
        base_digest: sha256_hex(&base),
        base_provider_tag: raw.provider_tag.clone(),
        findings,
        edits,
        approved_by: approver.into(),
        approved_at,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn raw(k: usize) -> RawThematicReport {
        let text: String = std::iter::once("| No. | Cluster | Theme | Sociological Insight | Category |\n|---|---|---|---|---|\n".to_string())
            .chain((0..k).map(|i| format!("| {i} | L{i} | s{i} | i{i} | Human Mimicry |\n")))
            .collect();
        RawThematicReport {
            schema: RAW_REPORT_SCHEMA.into(),
            k,
            findings: parse_report(&text, k).unwrap(),
            provider_tag: "stub/canned".into(),
            prompt_version: PROMPT_VERSION.into(),
            image_digest: "00".into(),
            image_media_type: "image/png".into(),
            response_text: text,
        }
    }

    fn edit(cluster: usize, field: EditField, value: Value, rationale: &str) -> ReviewEdit {
        ReviewEdit {
            cluster,
            field,
            value,
            reviewer: "r1".into(),
            rationale: rationale.into(),
            ts: DateTime::parse_from_rfc3339("2026-01-31T00:00:00Z").unwrap().into(),
        }
    }

    #[test]
    fn no_edits_is_identity() {
        let r = raw(8);
        let f = apply_review(&r, vec![], "lead", Utc::now()).unwrap();
        assert_eq!(f.findings, r.findings);
    }

    #[test]
    fn category_edit_touches_one_cluster() {
        let r = raw(8);
        let e = edit(6, EditField::Categories, Value::from(vec!["Noise"]), "back-end traces");
        let f = apply_review(&r, vec![e], "lead", Utc::now()).unwrap();
        for (a, b) in f.findings.iter().zip(&r.findings) {
            if a.cluster_index == 6 {
                assert_eq!(a.categories, [Category::Noise].into_iter().collect());
            } else {
                assert_eq!(a, b);
            }
        }
    }

    #[test]
    fn last_writer_wins_and_both_recorded() {
        let r = raw(3);
        let edits = vec![
            edit(1, EditField::ThematicSummary, Value::from("first"), "x"),
            edit(1, EditField::ThematicSummary, Value::from("second"), "y"),
        ];
        let f = apply_review(&r, edits, "lead", Utc::now()).unwrap();
        assert_eq!(f.findings[1].thematic_summary, "second");
        assert_eq!(f.edits.len(), 2);
        // reproducible from raw + edits alone
        assert_eq!(apply_edits(&r.findings, &f.edits).unwrap(), f.findings);
    }

    #[test]
    fn invalid_edits_rejected() {
        let r = raw(3);
        assert!(apply_review(&r, vec![edit(3, EditField::Label, Value::from("x"), "why")], "lead", Utc::now()).is_err());
        assert!(apply_review(&r, vec![edit(0, EditField::Label, Value::from("x"), "  ")], "lead", Utc::now()).is_err());
        assert!(apply_review(&r, vec![edit(0, EditField::Categories, Value::from("Cyborgs"), "r")], "lead", Utc::now()).is_err());
        assert!(apply_review(&r, vec![], "", Utc::now()).is_err());
    }

    #[test]
    fn edits_file_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("edits.jsonl");
        let edits = vec![
            edit(0, EditField::Categories, Value::from("Human Mimicry, Silicon-Centricity"), "hybrid"),
            edit(2, EditField::SociologicalInsight, Value::from("new"), "clarity"),
        ];
        write_edits(&path, &edits).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.lines().next().unwrap().contains("\"field\":\"categories\""));
        assert_eq!(read_edits(&path).unwrap(), edits);
        let f = apply_review(&raw(3), edits, "lead", Utc::now()).unwrap();
        assert_eq!(f.findings[0].categories.len(), 2);
    }

    #[test]
    fn markdown_table_columns() {
        let f = apply_review(&raw(2), vec![], "lead", Utc::now()).unwrap();
        let md = f.to_markdown();
        assert!(md.starts_with("| No. | Cluster | Theme | Sociological Insight | Category |"));
        assert!(md.contains("| 1 | L1 | s1 | i1 | Human Mimicry |"));
    }

    #[test]
    fn stub_roundtrip_and_parse_failure_retains_response() {
        use crate::wordcloud::{layout_panel, write_visual_features, Canvas};
        let dir = tempfile::tempdir().unwrap();
        let panels = (0..8)
            .map(|c| {
                let prof = crate::ngram::profile_texts(c, vec!["mexican lager tasting"], 2, 5).unwrap();
                layout_panel(&prof, Canvas { width: 200.0, height: 200.0 }, 60, 1).unwrap()
            })
            .collect();
        let set = write_visual_features(dir.path(), panels, 8, Some(300)).unwrap();
        let phrases = vec![vec!["mexican lager".to_string()]; 8];
        let stub = StubVision { canned: None };
        let r = discover(&set, &assemble_prompt(8), &stub, &phrases, dir.path()).unwrap();
        assert_eq!(r.findings.len(), 8);
        assert!(r.findings.iter().all(|f| f.flagged && f.categories.is_empty()));
        assert_eq!(r.image_media_type, "image/png");

        let seven: String = (0..7).map(|i| format!("| {i} | a | b | c | Noise |\n")).collect();
        let canned = StubVision { canned: Some(seven.clone()) };
        match discover(&set, &assemble_prompt(8), &canned, &phrases, dir.path()) {
            Err(Error::ReportParse { reason, retained: Some(path) }) => {
                assert!(reason.contains("cluster 7"));
                assert_eq!(std::fs::read_to_string(path).unwrap(), seven);
            }
            other => panic!("expected parse failure, got {other:?}"),
        }
    }
}
