//! Tolerant parsing of the model's report: a markdown table or a labelled
//! list, one entry per cluster.

use std::collections::{BTreeMap, BTreeSet};

use super::{Category, ClusterFinding};
use crate::error::{Error, Result};

fn parse_err(reason: impl Into<String>) -> Error {
    Error::ReportParse { reason: reason.into(), retained: None }
}

/// Leading cluster index of a cell such as `5`, `Cluster 5`, `**C5**`.
fn cell_index(cell: &str) -> Option<usize> {
    let cleaned: String = cell.chars().filter(|c| !matches!(c, '*' | '_' | '`' | '#')).collect();
    let lower = cleaned.trim().to_lowercase();
    let rest = lower
        .strip_prefix("cluster")
        .or_else(|| lower.strip_prefix("c"))
        .unwrap_or(&lower)
        .trim_start_matches([' ', '-', '_', '#', ':']);
    let digits: String = rest.chars().take_while(char::is_ascii_digit).collect();
    if digits.is_empty() {
        return None;
    }
    let tail = rest[digits.len()..].trim();
    if !tail.is_empty() && tail.chars().next().is_some_and(char::is_alphanumeric) {
        return None;
    }
    digits.parse().ok()
}

fn strip_markup(text: &str) -> String {
    let t = text.replace("<br>", " ").replace("<br/>", " ").replace("<br />", " ");
    let t: String = t.chars().filter(|c| !matches!(c, '*' | '`')).collect();
    t.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn squash(text: &str) -> String {
    text.chars().filter(|c| c.is_alphanumeric()).flat_map(char::to_lowercase).collect()
}

/// Maps a category cell onto the vocabulary. Returns the recognised set and
/// any fragments that matched nothing.
pub fn parse_categories(cell: &str) -> (BTreeSet<Category>, Vec<String>) {
    let mut parts = vec![cell.replace("<br>", "\n").replace("<br/>", "\n").replace("<br />", "\n")];
    for sep in ["\n", ",", ";", "/", "&", "+", " and ", " AND ", " And "] {
        parts = parts.iter().flat_map(|p| p.split(sep).map(str::to_owned).collect::<Vec<_>>()).collect();
    }
    let mut found = BTreeSet::new();
    let mut unmapped = Vec::new();
    for part in parts {
        let clean = strip_markup(&part);
        let key = squash(&clean);
        if key.is_empty() {
            continue;
        }
        let mut hit = false;
        if key.contains("mimic") {
            found.insert(Category::HumanMimicry);
            hit = true;
        }
        if key.contains("siliconcentric") {
            found.insert(Category::SiliconCentricity);
            hit = true;
        }
        if key.contains("noise") {
            found.insert(Category::Noise);
            hit = true;
        }
        if !hit {
            unmapped.push(clean);
        }
    }
    (found, unmapped)
}

#[derive(Default)]
struct Draft {
    label: String,
    summary: String,
    insight: String,
    category: String,
}

fn finish(index: usize, d: Draft) -> ClusterFinding {
    let (categories, unmapped) = parse_categories(&d.category);
    let flagged = !unmapped.is_empty() || categories.is_empty();
    ClusterFinding {
        cluster_index: index,
        label: strip_markup(&d.label),
        thematic_summary: strip_markup(&d.summary),
        sociological_insight: strip_markup(&d.insight),
        categories,
        unmapped,
        flagged,
    }
}

fn split_row(line: &str) -> Vec<String> {
    let t = line.trim().trim_start_matches('|').trim_end_matches('|');
    t.split('|').map(|c| c.trim().to_string()).collect()
}

fn is_separator(cells: &[String]) -> bool {
    cells.iter().all(|c| !c.is_empty() && c.chars().all(|ch| matches!(ch, '-' | ':' | ' ')))
}

#[derive(Default)]
struct Columns {
    index: Option<usize>,
    label: Option<usize>,
    summary: Option<usize>,
    insight: Option<usize>,
    category: Option<usize>,
}

fn columns_from_header(header: &[String]) -> Columns {
    let mut cols = Columns::default();
    for (i, h) in header.iter().enumerate() {
        let k = squash(h);
        if k.contains("insight") {
            cols.insight.get_or_insert(i);
        } else if k.contains("categor") || k.contains("archetype") {
            cols.category.get_or_insert(i);
        } else if k.contains("summary") || k.contains("theme") || k.contains("topic") {
            cols.summary.get_or_insert(i);
        } else if matches!(k.as_str(), "no" | "index" | "id" | "" | "num" | "number") {
            cols.index.get_or_insert(i);
        } else if k.contains("cluster") || k.contains("label") || k.contains("name") {
            if cols.index.is_none() && cols.label.is_none() {
                // decided per row: numeric cells act as the index
                cols.index = Some(i);
            } else {
                cols.label.get_or_insert(i);
            }
        }
    }
    cols
}

fn positional(width: usize) -> Columns {
    let mut cols = Columns { index: Some(0), ..Default::default() };
    if width >= 2 {
        cols.category = Some(width - 1);
    }
    if width >= 3 {
        cols.insight = Some(width - 2);
    }
    if width >= 4 {
        cols.summary = Some(width - 3);
    }
    if width >= 5 {
        cols.label = Some(1);
    }
    cols
}

fn parse_table(text: &str) -> Vec<(usize, Draft)> {
    let rows: Vec<Vec<String>> = text
        .lines()
        .filter(|l| l.trim_start().starts_with('|'))
        .map(split_row)
        .collect();
    if rows.is_empty() {
        return Vec::new();
    }
    let has_header = rows.len() >= 2 && is_separator(&rows[1]);
    let (cols, body) = if has_header {
        (columns_from_header(&rows[0]), &rows[2..])
    } else {
        (positional(rows[0].len()), &rows[..])
    };
    let get = |row: &[String], c: Option<usize>| c.and_then(|c| row.get(c)).cloned().unwrap_or_default();
    let mut out = Vec::new();
    for row in body.iter().filter(|r| !is_separator(r)) {
        // the index may live in the designated column or in a "Cluster N" label
        let index = cols
            .index
            .and_then(|c| row.get(c))
            .and_then(|c| cell_index(c))
            .or_else(|| row.iter().find_map(|c| cell_index(c)));
        let Some(index) = index else { continue };
        let mut label = get(row, cols.label);
        if label.is_empty() {
            if let Some(c) = cols.index {
                if cell_index(&row[c.min(row.len() - 1)]).is_none() {
                    label = row[c].clone();
                }
            }
        }
        out.push((
            index,
            Draft {
                label,
                summary: get(row, cols.summary),
                insight: get(row, cols.insight),
                category: get(row, cols.category),
            },
        ));
    }
    out
}

/// Splits `key: value` (with markdown decorations around the key).
fn key_value(line: &str) -> Option<(String, String)> {
    let trimmed = line.trim().trim_start_matches(['-', '*', '+', ' ', '#']);
    let trimmed = trimmed.trim_start_matches(|c: char| c.is_ascii_digit() || c == '.' || c == ')').trim();
    let (k, v) = trimmed.split_once(':')?;
    Some((squash(k), v.trim().trim_start_matches(['*', ' ']).to_string()))
}

fn parse_list(text: &str) -> Vec<(usize, Draft)> {
    let mut out: Vec<(usize, Draft)> = Vec::new();
    for line in text.lines() {
        let stripped = line.trim().trim_start_matches(['#', '-', '*', ' ']);
        let lower = stripped.to_lowercase();
        if lower.starts_with("cluster") {
            let rest = &stripped["cluster".len()..];
            let digits: String = rest.trim_start().chars().take_while(char::is_ascii_digit).collect();
            if let Ok(index) = digits.parse::<usize>() {
                let after = rest.trim_start()[digits.len()..]
                    .trim_start_matches(['*', ':', '-', '–', '—', ' ', ')', '.']);
                let mut draft = Draft::default();
                draft.label = after.trim_end_matches(['*', ' ']).to_string();
                out.push((index, draft));
                continue;
            }
        }
        let Some((_, draft)) = out.last_mut() else { continue };
        let Some((key, value)) = key_value(line) else { continue };
        if key.contains("insight") {
            draft.insight = value;
        } else if key.contains("categor") || key.contains("archetype") {
            draft.category = value;
        } else if key.contains("summary") || key.contains("theme") || key.contains("topic") {
            draft.summary = value;
        } else if key.contains("label") || key.contains("name") {
            draft.label = value;
        }
    }
    out
}

/// Extracts exactly `k` findings, one per cluster index.
pub fn parse_report(text: &str, k: usize) -> Result<Vec<ClusterFinding>> {
    if text.trim().is_empty() {
        return Err(parse_err("empty response"));
    }
    let mut drafts = parse_table(text);
    if drafts.is_empty() {
        drafts = parse_list(text);
    }
    if drafts.is_empty() {
        return Err(parse_err("no markdown table or labelled cluster list found"));
    }
    let mut by_index: BTreeMap<usize, Draft> = BTreeMap::new();
    for (index, draft) in drafts {
        if index >= k {
            return Err(parse_err(format!("cluster index {index} out of range for k = {k}")));
        }
        if by_index.insert(index, draft).is_some() {
            return Err(parse_err(format!("cluster {index} reported more than once")));
        }
    }
    if let Some(missing) = (0..k).find(|i| !by_index.contains_key(i)) {
        return Err(parse_err(format!(
            "cluster {missing} missing from response ({} of {k} clusters found)",
            by_index.len()
        )));
    }
    Ok(by_index.into_iter().map(|(i, d)| finish(i, d)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(rows: &[&str]) -> String {
        let mut s = String::from("Here is the table.\n\n| No. | Cluster | Theme | Sociological Insight | Category |\n|---|---|---|---|---|\n");
        for r in rows {
            s.push_str(r);
            s.push('\n');
        }
        s
    }

    #[test]
    fn table_row_maps_category() {
        let t = table(&[
            "| 0 | A | s0 | i0 | Human Mimicry |",
            "| 1 | B | s1 | i1 | Human Mimicry |",
            "| 2 | Cyber-Philosophy | speculation | intellectual district | Silicon-Centricity |",
        ]);
        let f = parse_report(&t, 3).unwrap();
        assert_eq!(f[2].categories, [Category::SiliconCentricity].into_iter().collect());
        assert_eq!(f[2].label, "Cyber-Philosophy");
        assert_eq!(f[2].thematic_summary, "speculation");
        assert_eq!(f[2].sociological_insight, "intellectual district");
        assert!(!f[2].flagged);
    }

    #[test]
    fn dual_category_cell() {
        let t = table(&["| 0 | Finance | markets | economy | Human Mimicry<br>Silicon-Centricity |"]);
        let f = parse_report(&t, 1).unwrap();
        assert_eq!(f[0].categories.len(), 2);
        let t = table(&["| 0 | Finance | markets | economy | **Human Mimicry / Silicon-Centricity** |"]);
        assert_eq!(parse_report(&t, 1).unwrap()[0].categories.len(), 2);
    }

    #[test]
    fn unknown_category_is_flagged_and_kept() {
        let t = table(&["| 0 | X | s | i | Digital Nomadism, noise |"]);
        let f = parse_report(&t, 1).unwrap();
        assert!(f[0].flagged);
        assert_eq!(f[0].unmapped, vec!["Digital Nomadism".to_string()]);
        assert_eq!(f[0].categories, [Category::Noise].into_iter().collect());
    }

    #[test]
    fn empty_and_incomplete_inputs_fail() {
        assert!(matches!(parse_report("", 8), Err(Error::ReportParse { .. })));
        assert!(parse_report("   \n", 8).is_err());
        let rows: Vec<String> = (0..7).map(|i| format!("| {i} | L | s | i | Noise |")).collect();
        let refs: Vec<&str> = rows.iter().map(String::as_str).collect();
        let err = parse_report(&table(&refs), 8).unwrap_err().to_string();
        assert!(err.contains("cluster 7 missing"), "{err}");
    }

    #[test]
    fn duplicates_and_out_of_range_fail() {
        assert!(parse_report(&table(&["| 0 | a | s | i | Noise |", "| 0 | b | s | i | Noise |"]), 2).is_err());
        assert!(parse_report(&table(&["| 0 | a | s | i | Noise |", "| 5 | b | s | i | Noise |"]), 2).is_err());
    }

    #[test]
    fn cluster_label_column_carries_index() {
        let t = "| Cluster | Thematic Summary | Sociological Insight | Category |\n| --- | --- | --- | --- |\n| Cluster 0 | food | mimicry of dining | Human Mimicry |\n| Cluster 1 | agents | coordination | Silicon-Centricity |\n";
        let f = parse_report(t, 2).unwrap();
        assert_eq!(f[1].thematic_summary, "agents");
        assert_eq!(f[0].categories, [Category::HumanMimicry].into_iter().collect());
    }

    #[test]
    fn headerless_table_is_positional() {
        let t = "| 0 | Gastronomy | food talk | mimicry | Human Mimicry |\n| 1 | Infra | urls | traces | Noise |\n";
        let f = parse_report(t, 2).unwrap();
        assert_eq!(f[0].label, "Gastronomy");
        assert_eq!(f[1].categories, [Category::Noise].into_iter().collect());
    }

    #[test]
    fn labelled_list_format() {
        let t = "\
## Cluster 0: Gastronomy
- **Thematic Summary**: Food and drink.
- **Sociological Insight**: Agents copy human leisure.
- **Category**: Human Mimicry

## Cluster 1 - Agent Coordination
1. Thematic Summary: Agents helping agents.
2. Sociological Insight: Collective intelligence.
3. Category: Silicon-Centricity
";
        let f = parse_report(t, 2).unwrap();
        assert_eq!(f[0].label, "Gastronomy");
        assert_eq!(f[0].thematic_summary, "Food and drink.");
        assert_eq!(f[1].label, "Agent Coordination");
        assert_eq!(f[1].sociological_insight, "Collective intelligence.");
        assert_eq!(f[1].categories, [Category::SiliconCentricity].into_iter().collect());
    }
}
