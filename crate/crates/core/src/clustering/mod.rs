//! K-means (Lloyd iterations from k-means++ seeding) over an embedding
//! matrix, with elbow-based selection of K.
//!
//! Distances and sums are accumulated in f64 over f32 storage, always in
//! point-index order, so a fit is bit-reproducible for a given seed.

mod elbow;

use std::collections::HashMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::binfmt::{self, FloatMatrix};
use crate::digest::derive_seed;
use crate::embedding::EmbeddingMatrix;
use crate::error::{Error, Result};

pub use elbow::{elbow_select, select_elbow, ElbowCurve, ElbowPoint, LOW_CONFIDENCE_DISTANCE};

pub const MODEL_SCHEMA: &str = "cluster-model/1";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KMeansOptions {
    pub max_iter: usize,
    /// Relative WCSS improvement below which iteration stops.
    pub tol: f64,
}

impl Default for KMeansOptions {
    fn default() -> Self {
        Self {
            max_iter: 300,
            tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterModel {
    pub k: usize,
    pub dim: usize,
    /// Row-major `k * dim`.
    pub centroids: Vec<f64>,
    pub record_ids: Vec<String>,
    /// Cluster index per record, aligned with `record_ids`.
    pub assignments: Vec<usize>,
    pub wcss: f64,
    pub iterations_run: usize,
    /// True when the last assignment step changed nothing.
    pub converged: bool,
    pub seed: u64,
    pub normalized_input: bool,
    /// WCSS after every Lloyd iteration and every transfer round.
    pub wcss_trace: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    schema: String,
    k: usize,
    dim: usize,
    seed: u64,
    wcss: f64,
    iterations_run: usize,
    converged: bool,
    normalized_input: bool,
    record_ids: Vec<String>,
    assignments: Vec<usize>,
    wcss_trace: Vec<f64>,
}

impl ClusterModel {
    pub fn centroid(&self, c: usize) -> &[f64] {
        &self.centroids[c * self.dim..(c + 1) * self.dim]
    }

    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &a in &self.assignments {
            sizes[a] += 1;
        }
        sizes
    }

    /// Record ids of one cluster, in record order.
    pub fn members(&self, c: usize) -> impl Iterator<Item = &str> {
        self.record_ids
            .iter()
            .zip(&self.assignments)
            .filter(move |(_, &a)| a == c)
            .map(|(id, _)| id.as_str())
    }

    pub fn assignment_map(&self) -> HashMap<&str, usize> {
        self.record_ids
            .iter()
            .map(String::as_str)
            .zip(self.assignments.iter().copied())
            .collect()
    }

    /// Model whose centroids are the means of the given partition. Empty
    /// clusters keep a zero centroid.
    pub fn from_assignments(
        matrix: &EmbeddingMatrix,
        k: usize,
        assignments: Vec<usize>,
    ) -> Result<Self> {
        if assignments.len() != matrix.len() {
            return Err(Error::IdMismatch(format!(
                "{} assignments for {} rows",
                assignments.len(),
                matrix.len()
            )));
        }
        if let Some(&bad) = assignments.iter().find(|&&a| a >= k) {
            return Err(Error::InvalidInput(format!("cluster index {bad} >= k = {k}")));
        }
        let centroids = means(matrix, k, &assignments);
        let wcss = wcss_of(matrix, &centroids, &assignments);
        Ok(Self {
            k,
            dim: matrix.dim(),
            centroids,
            record_ids: matrix.record_ids().to_vec(),
            assignments,
            wcss,
            iterations_run: 0,
            converged: false,
            seed: 0,
            normalized_input: false,
            wcss_trace: Vec::new(),
        })
    }

    /// Writes `<dir>/model.json` and `<dir>/centroids.bin`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        let file = ModelFile {
            schema: MODEL_SCHEMA.into(),
            k: self.k,
            dim: self.dim,
            seed: self.seed,
            wcss: self.wcss,
            iterations_run: self.iterations_run,
            converged: self.converged,
            normalized_input: self.normalized_input,
            record_ids: self.record_ids.clone(),
            assignments: self.assignments.clone(),
            wcss_trace: self.wcss_trace.clone(),
        };
        crate::io::write_json(&dir.join("model.json"), &file)?;
        let centroids = FloatMatrix {
            dim: self.dim,
            tag: "centroids".into(),
            values: self.centroids.iter().map(|&v| v as f32).collect(),
        };
        let ids: Vec<String> = (0..self.k).map(|c| c.to_string()).collect();
        binfmt::write_with_ids(&dir.join("centroids.bin"), &centroids, &ids)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let file: ModelFile = crate::io::read_json(&dir.join("model.json"))?;
        if file.schema != MODEL_SCHEMA {
            return Err(Error::SchemaVersion {
                expected: MODEL_SCHEMA.into(),
                found: file.schema,
            });
        }
        let (centroids, _) = binfmt::read_with_ids(&dir.join("centroids.bin"))?;
        if centroids.dim != file.dim || centroids.count() != file.k {
            return Err(Error::InvalidInput("centroid file does not match model".into()));
        }
        if file.assignments.len() != file.record_ids.len()
            || file.assignments.iter().any(|&a| a >= file.k)
        {
            return Err(Error::InvalidInput("model assignments are inconsistent".into()));
        }
        Ok(Self {
            k: file.k,
            dim: file.dim,
            centroids: centroids.values.iter().map(|&v| f64::from(v)).collect(),
            record_ids: file.record_ids,
            assignments: file.assignments,
            wcss: file.wcss,
            iterations_run: file.iterations_run,
            converged: file.converged,
            seed: file.seed,
            normalized_input: file.normalized_input,
            wcss_trace: file.wcss_trace,
        })
    }
}

#[inline]
pub(crate) fn sq_dist(row: &[f32], centroid: &[f64]) -> f64 {
    row.iter()
        .zip(centroid)
        .map(|(&x, &c)| {
            let d = f64::from(x) - c;
            d * d
        })
        .sum()
}

fn means(matrix: &EmbeddingMatrix, k: usize, assignments: &[usize]) -> Vec<f64> {
    let dim = matrix.dim();
    let mut sums = vec![0.0f64; k * dim];
    let mut counts = vec![0usize; k];
    for (row, &a) in matrix.rows().zip(assignments) {
        counts[a] += 1;
        for (s, &x) in sums[a * dim..(a + 1) * dim].iter_mut().zip(row) {
            *s += f64::from(x);
        }
    }
    for (c, &n) in counts.iter().enumerate() {
        if n > 0 {
            sums[c * dim..(c + 1) * dim]
                .iter_mut()
                .for_each(|s| *s /= n as f64);
        }
    }
    sums
}

fn wcss_of(matrix: &EmbeddingMatrix, centroids: &[f64], assignments: &[usize]) -> f64 {
    let dim = matrix.dim();
    matrix
        .rows()
        .zip(assignments)
        .map(|(row, &a)| sq_dist(row, &centroids[a * dim..(a + 1) * dim]))
        .sum()
}

/// Nearest centroid per point; ties go to the lowest index.
fn assign(matrix: &EmbeddingMatrix, centroids: &[f64], k: usize) -> Vec<usize> {
    let dim = matrix.dim();
    (0..matrix.len())
        .into_par_iter()
        .map(|i| {
            let row = matrix.row(i);
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for c in 0..k {
                let d = sq_dist(row, &centroids[c * dim..(c + 1) * dim]);
                if d < best_d {
                    best_d = d;
                    best = c;
                }
            }
            best
        })
        .collect()
}

/// Moves, for each empty cluster, the point farthest from its own centroid
/// into it.
fn reseed_empty(matrix: &EmbeddingMatrix, centroids: &[f64], k: usize, assignments: &mut [usize]) {
    let dim = matrix.dim();
    let mut sizes = vec![0usize; k];
    for &a in assignments.iter() {
        sizes[a] += 1;
    }
    for empty in 0..k {
        if sizes[empty] > 0 {
            continue;
        }
        let mut far = None;
        let mut far_d = -1.0;
        for (i, &a) in assignments.iter().enumerate() {
            if sizes[a] < 2 {
                continue;
            }
            let d = sq_dist(matrix.row(i), &centroids[a * dim..(a + 1) * dim]);
            if d > far_d {
                far_d = d;
                far = Some(i);
            }
        }
        if let Some(i) = far {
            sizes[assignments[i]] -= 1;
            assignments[i] = empty;
            sizes[empty] = 1;
        }
    }
}

fn kmeans_plus_plus(matrix: &EmbeddingMatrix, k: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let n = matrix.len();
    let dim = matrix.dim();
    let mut centroids = Vec::with_capacity(k * dim);
    let first = rng.gen_range(0..n);
    centroids.extend(matrix.row(first).iter().map(|&v| f64::from(v)));
    let mut d2: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| sq_dist(matrix.row(i), &centroids[..dim]))
        .collect();
    for c in 1..k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.gen::<f64>() * total;
            let mut acc = 0.0;
            let mut chosen = n - 1;
            for (i, &d) in d2.iter().enumerate() {
                acc += d;
                if acc > target {
                    chosen = i;
                    break;
                }
            }
            // never land on a zero-weight point through rounding at the tail
            while d2[chosen] == 0.0 && chosen > 0 {
                chosen -= 1;
            }
            chosen
        } else {
            rng.gen_range(0..n)
        };
        centroids.extend(matrix.row(pick).iter().map(|&v| f64::from(v)));
        let new_c = &centroids[c * dim..(c + 1) * dim];
        let updated: Vec<f64> = (0..n)
            .into_par_iter()
            .map(|i| d2[i].min(sq_dist(matrix.row(i), new_c)))
            .collect();
        d2 = updated;
    }
    centroids
}

fn validate(matrix: &EmbeddingMatrix, k: usize) -> Result<()> {
    if k == 0 {
        return Err(Error::InvalidInput("k must be at least 1".into()));
    }
    if k > matrix.len() {
        return Err(Error::InvalidInput(format!(
            "k = {k} exceeds the number of rows ({})",
            matrix.len()
        )));
    }
    if matrix.as_slice().iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("non-finite value in embedding matrix".into()));
    }
    Ok(())
}

/// Lloyd iterations from explicit initial centroids.
pub fn kmeans_from(
    matrix: &EmbeddingMatrix,
    initial: Vec<f64>,
    seed: u64,
    options: KMeansOptions,
) -> Result<ClusterModel> {
    let dim = matrix.dim();
    if initial.is_empty() || initial.len() % dim != 0 {
        return Err(Error::Dimension {
            expected: dim,
            found: initial.len(),
        });
    }
    let k = initial.len() / dim;
    validate(matrix, k)?;
    let mut centroids = initial;
    let mut assignments: Option<Vec<usize>> = None;
    let mut trace = Vec::new();
    let mut converged;
    let mut rounds = 0;
    loop {
        converged = lloyd(matrix, k, options, &mut centroids, &mut assignments, &mut trace);
        rounds += 1;
        let current = assignments.as_mut().expect("at least one iteration runs");
        let before = *trace.last().expect("trace is non-empty");
        let mut refined = current.clone();
        if rounds > options.max_iter || !transfer_pass(matrix, k, &centroids, &mut refined) {
            break;
        }
        let moved_centroids = means(matrix, k, &refined);
        let wcss = wcss_of(matrix, &moved_centroids, &refined);
        if wcss >= before {
            break;
        }
        *current = refined;
        centroids = moved_centroids;
        trace.push(wcss);
    }
    let assignments = assignments.expect("at least one iteration runs");
    Ok(ClusterModel {
        k,
        dim,
        wcss: *trace.last().expect("trace is non-empty"),
        iterations_run: trace.len(),
        converged,
        centroids,
        record_ids: matrix.record_ids().to_vec(),
        assignments,
        seed,
        normalized_input: false,
        wcss_trace: trace,
    })
}

/// Lloyd iterations until the assignment is stable, the relative
/// improvement drops below `tol`, or `max_iter` is hit. Returns whether the
/// assignment became stable.
fn lloyd(
    matrix: &EmbeddingMatrix,
    k: usize,
    options: KMeansOptions,
    centroids: &mut Vec<f64>,
    assignments: &mut Option<Vec<usize>>,
    trace: &mut Vec<f64>,
) -> bool {
    for _ in 0..options.max_iter.max(1) {
        let mut next = assign(matrix, centroids, k);
        reseed_empty(matrix, centroids, k, &mut next);
        if assignments.as_ref() == Some(&next) {
            return true;
        }
        *centroids = means(matrix, k, &next);
        let wcss = wcss_of(matrix, centroids, &next);
        let previous = trace.last().copied();
        trace.push(wcss);
        *assignments = Some(next);
        if let Some(prev) = previous {
            if prev <= 0.0 || (prev - wcss) / prev < options.tol {
                return false;
            }
        } else if wcss == 0.0 {
            return false;
        }
    }
    false
}

/// Single-point transfers (Hartigan's rule) from a Lloyd fixed point. A
/// point moves from `a` to `b` when n_b/(n_b+1)·d(x,μ_b) < n_a/(n_a-1)·d(x,μ_a),
/// which lowers WCSS even when `x` is already nearest to μ_a. Returns
/// whether anything moved.
fn transfer_pass(matrix: &EmbeddingMatrix, k: usize, centroids: &[f64], assignments: &mut [usize]) -> bool {
    let dim = matrix.dim();
    let mut mu = centroids.to_vec();
    let mut sizes = vec![0usize; k];
    for &a in assignments.iter() {
        sizes[a] += 1;
    }
    let mut moved_any = false;
    loop {
        let mut moved = false;
        for (i, slot) in assignments.iter_mut().enumerate() {
            let a = *slot;
            if sizes[a] < 2 {
                continue;
            }
            let x = matrix.row(i);
            let na = sizes[a] as f64;
            let leave = na / (na - 1.0) * sq_dist(x, &mu[a * dim..(a + 1) * dim]);
            let mut best: Option<(usize, f64)> = None;
            for b in (0..k).filter(|&b| b != a) {
                let nb = sizes[b] as f64;
                let join = nb / (nb + 1.0) * sq_dist(x, &mu[b * dim..(b + 1) * dim]);
                let gain = leave - join;
                if gain > 1e-12 * (leave + join) && best.map_or(true, |(_, g)| gain > g) {
                    best = Some((b, gain));
                }
            }
            if let Some((b, _)) = best {
                let nb = sizes[b] as f64;
                for (d, &v) in x.iter().enumerate() {
                    let v = f64::from(v);
                    mu[a * dim + d] = (na * mu[a * dim + d] - v) / (na - 1.0);
                    mu[b * dim + d] = (nb * mu[b * dim + d] + v) / (nb + 1.0);
                }
                sizes[a] -= 1;
                sizes[b] += 1;
                *slot = b;
                moved = true;
            }
        }
        if !moved {
            return moved_any;
        }
        moved_any = true;
    }
}

/// K-means with k-means++ seeding, Lloyd iterations and single-point
/// transfer refinement; deterministic in `(matrix, k, seed)`.
pub fn kmeans(
    matrix: &EmbeddingMatrix,
    k: usize,
    seed: u64,
    options: KMeansOptions,
) -> Result<ClusterModel> {
    validate(matrix, k)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let initial = kmeans_plus_plus(matrix, k, &mut rng);
    kmeans_from(matrix, initial, seed, options)
}

/// Lowest-WCSS model over `restarts` independently seeded runs.
pub fn kmeans_best_of(
    matrix: &EmbeddingMatrix,
    k: usize,
    restarts: usize,
    seed: u64,
    options: KMeansOptions,
) -> Result<ClusterModel> {
    let mut best: Option<ClusterModel> = None;
    for r in 0..restarts.max(1) {
        let run_seed = derive_seed(seed, &format!("kmeans/k{k}/r{r}"));
        let model = kmeans(matrix, k, run_seed, options)?;
        if best.as_ref().map_or(true, |b| model.wcss < b.wcss) {
            best = Some(model);
        }
    }
    Ok(best.expect("at least one restart"))
}

/// Independent recomputation of the objective from the model's centroids.
pub fn recompute_wcss(matrix: &EmbeddingMatrix, model: &ClusterModel) -> Result<f64> {
    if matrix.dim() != model.dim {
        return Err(Error::Dimension {
            expected: model.dim,
            found: matrix.dim(),
        });
    }
    let index: HashMap<&str, usize> = model.assignment_map();
    if index.len() != matrix.len() {
        return Err(Error::IdMismatch(format!(
            "model covers {} records, matrix has {}",
            index.len(),
            matrix.len()
        )));
    }
    let mut total = 0.0;
    for (id, row) in matrix.record_ids().iter().zip(matrix.rows()) {
        let c = *index
            .get(id.as_str())
            .ok_or_else(|| Error::IdMismatch(format!("record `{id}` missing from model")))?;
        total += sq_dist(row, model.centroid(c));
    }
    Ok(total)
}
