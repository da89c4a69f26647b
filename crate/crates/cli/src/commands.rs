//! One function per pipeline stage. Each reads the previous stage's files
//! from the run directory and writes its own.

use std::path::{Path, PathBuf};

use chrono::Utc;
use serde_json::{json, Value};
use silico_core::clustering::{elbow_select, kmeans_best_of, ClusterModel, KMeansOptions};
use silico_core::corpus::{crawl_to_file, load_snapshot, save_snapshot, CorpusSnapshot, TOOL_VERSION};
use silico_core::embedding::{embed_corpus, embedder_registry, EmbeddingCache, EmbeddingMatrix};
use silico_core::ngram::{load_profiles, profile_all, save_profiles, top_phrases};
use silico_core::preprocess::{refine, RefinedCorpus};
use silico_core::projection::{tsne, write_scatter_svg};
use silico_core::thematic::{
    apply_review, assemble_prompt, discover, read_edits, vision_registry, write_edits, FinalThematicReport,
    RawThematicReport,
};
use silico_core::wordcloud::{layout_panel, write_visual_features, Canvas, VisualFeatureSet};
use silico_core::Result;

use crate::config::RunConfig;
use crate::stage::{Outcome, Stages};

pub const SNAPSHOT: (&str, &str) = ("crawl", "snapshot.jsonl");
pub const REFINED: (&str, &str) = ("preprocess", "refined.jsonl");
pub const AUDIT: (&str, &str) = ("preprocess", "audit.json");
pub const EMBEDDINGS: (&str, &str) = ("embed", "embeddings.bin");
pub const MODEL: (&str, &str) = ("cluster", "model.json");
pub const CENTROIDS: (&str, &str) = ("cluster", "centroids.bin");
pub const PROJECTION: (&str, &str) = ("project", "projection.bin");
pub const TOP_PHRASES: (&str, &str) = ("ngrams", "top_phrases.json");
pub const PANELS: (&str, &str) = ("render", "panels.json");
pub const RAW_REPORT: (&str, &str) = ("discover", "raw_report.json");
pub const FINAL_REPORT: (&str, &str) = ("review", "final_report.json");

pub struct Ctx<'a> {
    pub cfg: &'a RunConfig,
    pub stages: Stages,
}

fn to_value<T: serde::Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("parameters serialize")
}

impl Ctx<'_> {
    fn at(&self, (stage, file): (&str, &str)) -> PathBuf {
        self.stages.path(stage, file)
    }

    fn input(&self, loc: (&str, &str)) -> Result<PathBuf> {
        self.stages.require(&self.at(loc), loc.0)
    }

    pub fn crawl(&self) -> Result<Outcome> {
        let c = &self.cfg.crawl;
        let mut params = to_value(c);
        params["base_url"] = json!(c.client_config().base_url);
        let inputs: Vec<(&str, PathBuf)> = match &c.snapshot {
            Some(p) => vec![("replayed_snapshot", self.stages.require(p, "fixture-gen")?)],
            None => Vec::new(),
        };
        self.stages.run("crawl", params, &inputs, |dir, _| {
            let out = dir.join(SNAPSHOT.1);
            let snapshot = match &c.snapshot {
                Some(p) => {
                    let snapshot = load_snapshot(p)?;
                    save_snapshot(&snapshot, &out)?;
                    snapshot
                }
                None => crawl_to_file(&c.client_config(), &out)?,
            };
            log::info!(
                "crawl: {} records over {} pages ({} duplicate ids, {} malformed)",
                snapshot.records.len(),
                snapshot.pages_fetched,
                snapshot.collisions,
                snapshot.malformed
            );
            Ok(vec![SNAPSHOT.1.into()])
        })
    }

    /// `input` overrides the crawl stage's snapshot.
    pub fn preprocess(&self, input: Option<&Path>) -> Result<Outcome> {
        let source = match input {
            Some(p) => self.stages.require(p, "crawl")?,
            None => self.input(SNAPSHOT)?,
        };
        let threshold = self.cfg.preprocess.template_threshold;
        let master_seed = self.stages.master_seed;
        self.stages.run("preprocess", to_value(&self.cfg.preprocess), &[("snapshot", source.clone())], |dir, _| {
            let snapshot = load_snapshot(&source)?;
            let refined = refine(&snapshot, threshold)?;
            refined.save(&dir.join(REFINED.1))?;
            let audit = refined.audit();
            log::info!(
                "preprocess: {} in, {} sparse, {} template copies, {} kept",
                audit.input,
                audit.pruned_sparse,
                audit.pruned_template,
                audit.output
            );
            let mut doc = to_value(&audit);
            doc["source_snapshot_id"] = json!(snapshot.snapshot_id);
            doc["master_seed"] = json!(master_seed);
            doc["tool_version"] = json!(TOOL_VERSION);
            silico_core::io::write_json(&dir.join(AUDIT.1), &doc)?;
            Ok(vec![REFINED.1.into(), AUDIT.1.into()])
        })
    }

    pub fn embed(&self) -> Result<Outcome> {
        let refined_path = self.input(REFINED)?;
        let mut provider_cfg = self.cfg.embed.clone();
        let cache_dir = provider_cfg
            .cache_dir
            .clone()
            .unwrap_or_else(|| self.stages.outdir.join("cache").join("embeddings"));
        let mut params = to_value(&provider_cfg);
        // the cache location never changes the vectors
        params.as_object_mut().expect("object").remove("cache_dir");
        provider_cfg.cache_dir = Some(cache_dir.clone());
        self.stages.run("embed", params, &[("refined", refined_path.clone())], |dir, _| {
            let corpus = RefinedCorpus::load(&refined_path)?;
            let provider = embedder_registry().build(&provider_cfg.kind, &provider_cfg)?;
            let cache = EmbeddingCache::open(&cache_dir)?;
            let (matrix, stats) = embed_corpus(&corpus, provider.as_ref(), Some(&cache))?;
            matrix.save(&dir.join(EMBEDDINGS.1))?;
            log::info!(
                "embed: {} rows x {} ({} unique texts, {} cache hits)",
                matrix.len(),
                matrix.dim(),
                stats.unique_texts,
                stats.cache_hits
            );
            silico_core::io::write_json(&dir.join("stats.json"), &stats)?;
            Ok(vec![EMBEDDINGS.1.into(), format!("{}.ids.json", EMBEDDINGS.1), "stats.json".into()])
        })
    }

    pub fn cluster(&self) -> Result<Outcome> {
        let emb = self.input(EMBEDDINGS)?;
        let c = self.cfg.cluster.clone();
        let ids = PathBuf::from(format!("{}.ids.json", emb.display()));
        self.stages.run("cluster", to_value(&c), &[("embeddings", emb.clone()), ("ids", ids)], |dir, seed| {
            let matrix = EmbeddingMatrix::load(&emb)?;
            let matrix = if c.normalize { matrix.l2_normalized() } else { matrix };
            let opts = KMeansOptions { max_iter: c.max_iter, tol: c.tol };
            let mut written = vec![MODEL.1.to_string(), CENTROIDS.1.to_string()];
            let mut model = match c.k {
                Some(k) => kmeans_best_of(&matrix, k, c.restarts, seed, opts)?,
                None => {
                    let (curve, model) = elbow_select(&matrix, c.k_min, c.k_max.min(matrix.len()), c.restarts, seed, opts)?;
                    if curve.low_confidence {
                        log::warn!(
                            "elbow at k = {} is weak (chord distance {:.3}); consider fixing k",
                            curve.selected_k,
                            curve.chord_distance
                        );
                    }
                    silico_core::io::write_json(&dir.join("elbow.json"), &curve)?;
                    written.push("elbow.json".into());
                    model
                }
            };
            model.normalized_input = c.normalize;
            model.save(dir)?;
            log::info!("cluster: k = {}, sizes {:?}, wcss {:.4}", model.k, model.cluster_sizes(), model.wcss);
            Ok(written)
        })
    }

    pub fn project(&self) -> Result<Outcome> {
        let emb = self.input(EMBEDDINGS)?;
        let model_path = self.input(MODEL)?;
        let refined_path = self.input(REFINED)?;
        let opts = self.cfg.project.clone();
        let inputs = [("embeddings", emb.clone()), ("model", model_path.clone()), ("refined", refined_path.clone())];
        self.stages.run("project", to_value(&opts), &inputs, |dir, seed| {
            let matrix = EmbeddingMatrix::load(&emb)?;
            let model = ClusterModel::load(model_path.parent().expect("stage dir"))?;
            let snapshot_id = RefinedCorpus::load(&refined_path)?.source_snapshot_id;
            let proj = tsne(&matrix, seed, &opts)?;
            proj.save(dir)?;
            write_scatter_svg(&proj, &model, &snapshot_id, &dir.join("scatter.svg"))?;
            log::info!("project: {} points, method {}, final KL {:.4}", proj.points.len(), proj.method, proj.final_kl);
            Ok(vec![PROJECTION.1.into(), format!("{}.ids.json", PROJECTION.1), "projection.json".into(), "scatter.svg".into()])
        })
    }

    pub fn ngrams(&self) -> Result<Outcome> {
        let refined_path = self.input(REFINED)?;
        let model_path = self.input(MODEL)?;
        let n = self.cfg.ngrams.clone();
        let inputs = [("refined", refined_path.clone()), ("model", model_path.clone())];
        self.stages.run("ngrams", to_value(&n), &inputs, |dir, _| {
            let corpus = RefinedCorpus::load(&refined_path)?;
            let model = ClusterModel::load(model_path.parent().expect("stage dir"))?;
            let profiles = profile_all(&corpus, &model, n.n_min, n.n_max)?;
            save_profiles(dir, &profiles)?;
            let top: Vec<Value> = profiles
                .iter()
                .map(|p| {
                    json!({
                        "cluster": p.cluster_index,
                        "member_count": p.member_count,
                        "phrases": top_phrases(p, n.top),
                    })
                })
                .collect();
            silico_core::io::write_json(&dir.join(TOP_PHRASES.1), &top)?;
            let mut written: Vec<String> = (0..model.k).map(|c| format!("cluster_{c}.json")).collect();
            written.push(TOP_PHRASES.1.into());
            Ok(written)
        })
    }

    pub fn render(&self) -> Result<Outcome> {
        let model_path = self.input(MODEL)?;
        let top = self.input(TOP_PHRASES)?;
        let r = self.cfg.render.clone();
        let master = self.stages.master_seed;
        let model = ClusterModel::load(model_path.parent().expect("stage dir"))?;
        let mut inputs = vec![("model", model_path.clone())];
        let profile_dir = self.stages.dir("ngrams");
        let profile_paths: Vec<(String, PathBuf)> =
            (0..model.k).map(|c| (format!("profile_{c}"), profile_dir.join(format!("cluster_{c}.json")))).collect();
        for (name, path) in &profile_paths {
            self.stages.require(path, "ngrams")?;
            inputs.push((name.as_str(), path.clone()));
        }
        inputs.push(("top_phrases", top));
        self.stages.run("render", to_value(&r), &inputs, |dir, _| {
            let profiles = load_profiles(&profile_dir, model.k)?;
            let canvas = Canvas { width: r.canvas_width, height: r.canvas_height };
            let panels = profiles
                .iter()
                .map(|p| {
                    let seed = silico_core::digest::derive_seed(master, &format!("render/cluster{}", p.cluster_index));
                    layout_panel(p, canvas, r.max_phrases, seed)
                })
                .collect::<Result<Vec<_>>>()?;
            let dropped: usize = panels.iter().map(|p| p.dropped).sum();
            if dropped > 0 {
                log::warn!("render: {dropped} phrases did not fit their panels");
            }
            let set = write_visual_features(dir, panels, model.k, r.png_width)?;
            let mut written = vec![PANELS.1.to_string(), "wordclouds.svg".to_string()];
            if set.png_path.is_some() {
                written.push("wordclouds.png".into());
            }
            Ok(written)
        })
    }

    pub fn discover(&self) -> Result<Outcome> {
        let panels_path = self.input(PANELS)?;
        let top = self.input(TOP_PHRASES)?;
        let vcfg = self.cfg.discover.clone();
        let mut inputs = vec![("panels", panels_path.clone()), ("top_phrases", top.clone())];
        let set = VisualFeatureSet::load(&panels_path)?;
        let image = set.png_path.clone().unwrap_or_else(|| set.svg_path.clone());
        inputs.push(("image", image));
        if let Some(canned) = &vcfg.canned_response {
            inputs.push(("canned_response", canned.clone()));
        }
        self.stages.run("discover", to_value(&vcfg), &inputs, |dir, _| {
            let provider = vision_registry().build(&vcfg.kind, &vcfg)?;
            let k = set.panels.len();
            let prompt = assemble_prompt(k);
            silico_core::io::write_bytes(&dir.join("prompt.txt"), prompt.as_bytes())?;
            let top_doc: Vec<Value> = silico_core::io::read_json(&top)?;
            let phrases: Vec<Vec<String>> = top_doc
                .iter()
                .map(|c| {
                    c["phrases"]
                        .as_array()
                        .map(|a| a.iter().filter_map(|p| p[0].as_str().map(str::to_owned)).collect())
                        .unwrap_or_default()
                })
                .collect();
            let report = discover(&set, &prompt, provider.as_ref(), &phrases, dir)?;
            report.save(&dir.join(RAW_REPORT.1))?;
            let flagged = report.findings.iter().filter(|f| f.flagged).count();
            if flagged > 0 {
                log::warn!("discover: {flagged} findings carry unmapped categories and need review");
            }
            Ok(vec!["prompt.txt".into(), "response.txt".into(), RAW_REPORT.1.into()])
        })
    }

    pub fn review(&self) -> Result<Outcome> {
        let raw_path = self.input(RAW_REPORT)?;
        let rcfg = self.cfg.review.clone();
        let mut inputs = vec![("raw_report", raw_path.clone())];
        if let Some(e) = &rcfg.edits {
            inputs.push(("edits", self.stages.require(e, "review")?));
        }
        let params = json!({"approver": rcfg.approver});
        self.stages.run("review", params, &inputs, |dir, _| {
            let raw = RawThematicReport::load(&raw_path)?;
            let edits = match &rcfg.edits {
                Some(p) => read_edits(p)?,
                None => Vec::new(),
            };
            write_edits(&dir.join("edits.jsonl"), &edits)?;
            let report = apply_review(&raw, edits, &rcfg.approver, Utc::now())?;
            report.save(&dir.join(FINAL_REPORT.1))?;
            silico_core::io::write_bytes(&dir.join("final_report.md"), report.to_markdown().as_bytes())?;
            Ok(vec!["edits.jsonl".into(), FINAL_REPORT.1.into(), "final_report.md".into()])
        })
    }

    pub fn report(&self) -> Result<Outcome> {
        let final_path = self.input(FINAL_REPORT)?;
        let audit_path = self.input(AUDIT)?;
        let model_path = self.input(MODEL)?;
        let inputs = [("final_report", final_path.clone()), ("audit", audit_path.clone()), ("model", model_path.clone())];
        let outdir = self.stages.outdir.clone();
        let master = self.stages.master_seed;
        self.stages.run("report", json!({}), &inputs, |dir, _| {
            let report = FinalThematicReport::load(&final_path)?;
            let audit: Value = silico_core::io::read_json(&audit_path)?;
            let model = ClusterModel::load(model_path.parent().expect("stage dir"))?;
            let mut chain = serde_json::Map::new();
            for stage in ["crawl", "preprocess", "embed", "cluster", "project", "ngrams", "render", "discover", "review"] {
                let path = outdir.join(stage).join("stage.json");
                if let Ok(rec) = silico_core::io::read_json::<crate::stage::StageRecord>(&path) {
                    chain.insert(stage.into(), json!({"fingerprint": rec.fingerprint, "seed": rec.seed}));
                }
            }
            let doc = json!({
                "schema": "pipeline-report/1",
                "tool_version": TOOL_VERSION,
                "master_seed": master,
                "snapshot_id": audit["source_snapshot_id"],
                "refinement": audit,
                "k": model.k,
                "cluster_sizes": model.cluster_sizes(),
                "approved_by": report.approved_by,
                "findings": report.findings,
                "provenance": chain,
            });
            silico_core::io::write_json(&dir.join("report.json"), &doc)?;
            let md = format!(
                "# Thematic report\n\nSnapshot `{}`; {} records after refinement; K = {}; master seed {}; approved by {}.\n\n{}",
                audit["source_snapshot_id"].as_str().unwrap_or("?"),
                audit["output"],
                model.k,
                master,
                report.approved_by,
                report.to_markdown()
            );
            silico_core::io::write_bytes(&dir.join("report.md"), md.as_bytes())?;
            Ok(vec!["report.json".into(), "report.md".into()])
        })
    }

    pub fn pipeline(&self) -> Result<()> {
        self.crawl()?;
        self.preprocess(None)?;
        self.embed()?;
        self.cluster()?;
        self.project()?;
        self.ngrams()?;
        self.render()?;
        self.discover()?;
        self.review()?;
        self.report()?;
        Ok(())
    }
}

/// Snapshot header fields, for `fixture-serve` and diagnostics.
pub fn describe(snapshot: &CorpusSnapshot) -> String {
    format!("{} ({} records)", snapshot.snapshot_id, snapshot.records.len())
}
