//! t-SNE projection of the embedding matrix to two dimensions and the
//! cluster-coloured scatter plot drawn from it.

mod affinity;
mod barnes_hut;
mod exact;
mod pca;
mod scatter;

use std::path::Path;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::binfmt::{self, FloatMatrix};
use crate::embedding::EmbeddingMatrix;
use crate::error::{Error, Result};
use crate::registry::Registry;

pub use affinity::{conditional_row, SparseAffinity};
pub use barnes_hut::{BarnesHutKernel, QuadTree};
pub use exact::ExactKernel;
pub use pca::pca_reduce;
pub use scatter::{palette_color, scatter_svg, write_scatter_svg};

/// Gradient of the t-SNE objective for a fixed set of input affinities.
pub trait GradientKernel: Send + Sync {
    fn name(&self) -> &'static str;
    /// Writes dC/dy for every point into `grad`, with the input affinities
    /// multiplied by `exaggeration`.
    fn gradient(&self, y: &[[f64; 2]], exaggeration: f64, grad: &mut [[f64; 2]]);
    fn kl_divergence(&self, y: &[[f64; 2]]) -> f64;
}

/// Everything a kernel factory needs to build its affinities.
#[derive(Clone)]
pub struct KernelInput {
    pub data: Arc<Vec<f32>>,
    pub n: usize,
    pub dim: usize,
    pub perplexity: f64,
    pub theta: f64,
}

impl KernelInput {
    fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    fn dist2(&self, i: usize, j: usize) -> f64 {
        self.row(i)
            .iter()
            .zip(self.row(j))
            .map(|(&a, &b)| {
                let d = f64::from(a) - f64::from(b);
                d * d
            })
            .sum()
    }

    pub fn dense_dist2(&self) -> Vec<f64> {
        let n = self.n;
        let rows: Vec<Vec<f64>> = (0..n)
            .into_par_iter()
            .map(|i| (0..n).map(|j| if i == j { 0.0 } else { self.dist2(i, j) }).collect())
            .collect();
        rows.concat()
    }

    /// `k` nearest neighbours of each point, ties broken by index.
    pub fn neighbours(&self, k: usize) -> Vec<Vec<(usize, f64)>> {
        (0..self.n)
            .into_par_iter()
            .map(|i| {
                let mut d: Vec<(usize, f64)> = (0..self.n)
                    .filter(|&j| j != i)
                    .map(|j| (j, self.dist2(i, j)))
                    .collect();
                d.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
                d.truncate(k);
                d
            })
            .collect()
    }
}

pub fn kernel_registry() -> Registry<Box<dyn GradientKernel>, KernelInput> {
    let mut reg = Registry::new("t-SNE gradient kernel");
    reg.register("exact", |input: &KernelInput| {
        let dist2 = input.dense_dist2();
        let (cond, _) = affinity::dense_conditional(&dist2, input.n, input.perplexity);
        let joint = affinity::symmetrize_dense(&cond, input.n);
        Ok(Box::new(ExactKernel::new(joint, input.n)) as Box<dyn GradientKernel>)
    });
    reg.register("barnes-hut", |input: &KernelInput| {
        let k = ((3.0 * input.perplexity).floor() as usize).clamp(1, input.n - 1);
        let neighbours = input.neighbours(k);
        let (joint, _) = affinity::sparse_joint(&neighbours, input.perplexity);
        Ok(Box::new(BarnesHutKernel::new(joint, input.theta)) as Box<dyn GradientKernel>)
    });
    reg
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TsneOptions {
    pub perplexity: f64,
    pub iterations: usize,
    /// `None` selects `max(n / 12, 50)`.
    pub learning_rate: Option<f64>,
    pub early_exaggeration: f64,
    pub exaggeration_iters: usize,
    pub init_scale: f64,
    pub theta: f64,
    /// `auto`, or a registered kernel name.
    pub method: String,
    /// Row count above which `auto` switches to Barnes–Hut.
    pub exact_limit: usize,
    /// Optional PCA pre-reduction to this many dimensions.
    pub pca_dims: Option<usize>,
}

impl Default for TsneOptions {
    fn default() -> Self {
        Self {
            perplexity: 30.0,
            iterations: 1000,
            learning_rate: None,
            early_exaggeration: 12.0,
            exaggeration_iters: 250,
            init_scale: 1e-4,
            theta: 0.5,
            method: "auto".into(),
            exact_limit: 2000,
            pca_dims: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Projection2D {
    pub record_ids: Vec<String>,
    pub points: Vec<[f64; 2]>,
    pub perplexity: f64,
    pub iterations: usize,
    pub seed: u64,
    pub method: String,
    /// KL divergence at the first iteration after early exaggeration.
    pub kl_after_exaggeration: f64,
    pub final_kl: f64,
}

#[derive(Serialize, Deserialize)]
struct ProjectionMeta {
    schema: String,
    perplexity: f64,
    iterations: usize,
    seed: u64,
    method: String,
    kl_after_exaggeration: f64,
    final_kl: f64,
}

impl Projection2D {
    /// Writes `<dir>/projection.bin` (+ id sidecar) and `<dir>/projection.json`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        let m = FloatMatrix {
            dim: 2,
            tag: format!("tsne/{}", self.method),
            values: self.points.iter().flat_map(|p| [p[0] as f32, p[1] as f32]).collect(),
        };
        binfmt::write_with_ids(&dir.join("projection.bin"), &m, &self.record_ids)?;
        crate::io::write_json(
            &dir.join("projection.json"),
            &ProjectionMeta {
                schema: "projection/1".into(),
                perplexity: self.perplexity,
                iterations: self.iterations,
                seed: self.seed,
                method: self.method.clone(),
                kl_after_exaggeration: self.kl_after_exaggeration,
                final_kl: self.final_kl,
            },
        )
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let (m, ids) = binfmt::read_with_ids(&dir.join("projection.bin"))?;
        if m.dim != 2 {
            return Err(Error::Dimension { expected: 2, found: m.dim });
        }
        let meta: ProjectionMeta = crate::io::read_json(&dir.join("projection.json"))?;
        if meta.schema != "projection/1" {
            return Err(Error::SchemaVersion { expected: "projection/1".into(), found: meta.schema });
        }
        Ok(Self {
            record_ids: ids,
            points: m.values.chunks_exact(2).map(|c| [f64::from(c[0]), f64::from(c[1])]).collect(),
            perplexity: meta.perplexity,
            iterations: meta.iterations,
            seed: meta.seed,
            method: meta.method,
            kl_after_exaggeration: meta.kl_after_exaggeration,
            final_kl: meta.final_kl,
        })
    }
}

/// Dense conditional affinities `P(j|i)` and the achieved log-perplexity
/// of each row, as used by the exact kernel.
pub fn conditional_affinities(matrix: &EmbeddingMatrix, perplexity: f64) -> (Vec<f64>, Vec<f64>) {
    let input = KernelInput {
        data: Arc::new(matrix.as_slice().to_vec()),
        n: matrix.len(),
        dim: matrix.dim(),
        perplexity,
        theta: 0.0,
    };
    affinity::dense_conditional(&input.dense_dist2(), input.n, perplexity)
}

/// Joint affinities `P_ij` (dense, row-major).
pub fn joint_affinities(matrix: &EmbeddingMatrix, perplexity: f64) -> Vec<f64> {
    let (cond, _) = conditional_affinities(matrix, perplexity);
    affinity::symmetrize_dense(&cond, matrix.len())
}

fn resolve_method(options: &TsneOptions, n: usize) -> String {
    match options.method.as_str() {
        "auto" if n > options.exact_limit => "barnes-hut".into(),
        "auto" => "exact".into(),
        other => other.into(),
    }
}

pub fn tsne(matrix: &EmbeddingMatrix, seed: u64, options: &TsneOptions) -> Result<Projection2D> {
    let n = matrix.len();
    if n < 5 {
        return Err(Error::InvalidInput(format!("t-SNE needs at least 5 rows, got {n}")));
    }
    if !(options.perplexity > 0.0 && options.perplexity < (n as f64 - 1.0) / 3.0) {
        return Err(Error::InvalidInput(format!(
            "perplexity {} infeasible for {n} rows (must be below {:.3})",
            options.perplexity,
            (n as f64 - 1.0) / 3.0
        )));
    }
    if matrix.as_slice().iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("non-finite value in embedding matrix".into()));
    }
    let (data, dim) = match options.pca_dims {
        Some(target) if target < matrix.dim() => (
            pca_reduce(matrix.as_slice(), n, matrix.dim(), target, seed),
            target,
        ),
        _ => (matrix.as_slice().to_vec(), matrix.dim()),
    };
    let method = resolve_method(options, n);
    let input = KernelInput {
        data: Arc::new(data),
        n,
        dim,
        perplexity: options.perplexity,
        theta: options.theta,
    };
    let kernel = kernel_registry().build(&method, &input)?;
    let (points, kl_after_exaggeration, final_kl) = optimize(kernel.as_ref(), n, seed, options);
    Ok(Projection2D {
        record_ids: matrix.record_ids().to_vec(),
        points,
        perplexity: options.perplexity,
        iterations: options.iterations,
        seed,
        method,
        kl_after_exaggeration,
        final_kl,
    })
}

/// Momentum gradient descent with per-coordinate adaptive gains.
fn optimize(
    kernel: &dyn GradientKernel,
    n: usize,
    seed: u64,
    options: &TsneOptions,
) -> (Vec<[f64; 2]>, f64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let init = Normal::new(0.0, options.init_scale).expect("finite init scale");
    let mut y: Vec<[f64; 2]> = (0..n).map(|_| [init.sample(&mut rng), init.sample(&mut rng)]).collect();
    let mut update = vec![[0.0f64; 2]; n];
    let mut gains = vec![[1.0f64; 2]; n];
    let mut grad = vec![[0.0f64; 2]; n];
    let lr = options.learning_rate.unwrap_or((n as f64 / 12.0).max(50.0));
    let mut kl_after = None;

    for iter in 0..options.iterations {
        let exaggerating = iter < options.exaggeration_iters;
        if iter == options.exaggeration_iters {
            kl_after = Some(kernel.kl_divergence(&y));
        }
        let exaggeration = if exaggerating { options.early_exaggeration } else { 1.0 };
        let momentum = if exaggerating { 0.5 } else { 0.8 };
        kernel.gradient(&y, exaggeration, &mut grad);
        for i in 0..n {
            for d in 0..2 {
                let same_sign = (grad[i][d] > 0.0) == (update[i][d] > 0.0);
                gains[i][d] = if same_sign { gains[i][d] * 0.8 } else { gains[i][d] + 0.2 };
                gains[i][d] = gains[i][d].max(0.01);
                update[i][d] = momentum * update[i][d] - lr * gains[i][d] * grad[i][d];
                y[i][d] += update[i][d];
            }
        }
        let mean = y.iter().fold([0.0, 0.0], |m, p| [m[0] + p[0], m[1] + p[1]]);
        let mean = [mean[0] / n as f64, mean[1] / n as f64];
        y.iter_mut().for_each(|p| {
            p[0] -= mean[0];
            p[1] -= mean[1];
        });
    }
    let final_kl = kernel.kl_divergence(&y);
    (y, kl_after.unwrap_or(final_kl), final_kl)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixture::{gaussian_blobs, BlobSpec};
    use crate::metrics::silhouette_2d;

    fn blobs(per_blob: usize, seed: u64) -> (EmbeddingMatrix, Vec<usize>) {
        let (pts, labels) = gaussian_blobs(BlobSpec {
            blobs: 3,
            per_blob,
            dim: 16,
            sigma: 1.0,
            min_separation: 20.0,
            seed,
        });
        let ids = (0..pts.len()).map(|i| format!("b{i}")).collect();
        (EmbeddingMatrix::from_rows(ids, &pts, "blobs").unwrap(), labels)
    }

    #[test]
    fn joint_affinities_are_a_symmetric_distribution() {
        let (m, _) = blobs(20, 1);
        let n = m.len();
        let (cond, entropies) = conditional_affinities(&m, 10.0);
        for i in 0..n {
            let row: f64 = cond[i * n..(i + 1) * n].iter().sum();
            assert!((row - 1.0).abs() < 1e-6);
            assert!((entropies[i] - 10f64.ln()).abs() < 1e-3);
        }
        let p = joint_affinities(&m, 10.0);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-6);
        for i in 0..n {
            for j in 0..n {
                assert!(p[i * n + j] >= 0.0);
                assert!((p[i * n + j] - p[j * n + i]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn duplicate_rows_have_identical_conditionals() {
        let (m, _) = blobs(10, 2);
        let mut rows: Vec<Vec<f64>> = m.rows().map(|r| r.iter().map(|&v| f64::from(v)).collect()).collect();
        rows.push(rows[4].clone());
        let ids = (0..rows.len()).map(|i| format!("r{i}")).collect();
        let m = EmbeddingMatrix::from_rows(ids, &rows, "t").unwrap();
        let n = m.len();
        let (cond, _) = conditional_affinities(&m, 5.0);
        let dup = n - 1;
        for j in 0..n {
            if j != 4 && j != dup {
                assert!((cond[4 * n + j] - cond[dup * n + j]).abs() < 1e-12);
            }
        }
        assert!((cond[4 * n + dup] - cond[dup * n + 4]).abs() < 1e-12);
    }

    #[test]
    fn exact_separates_blobs_and_reduces_kl() {
        let (m, labels) = blobs(50, 3);
        let opts = TsneOptions { iterations: 500, ..Default::default() };
        let proj = tsne(&m, 11, &opts).unwrap();
        assert_eq!(proj.method, "exact");
        assert!(proj.points.iter().all(|p| p[0].is_finite() && p[1].is_finite()));
        assert!(proj.final_kl < proj.kl_after_exaggeration);
        assert!(silhouette_2d(&proj.points, &labels) > 0.5);
        let again = tsne(&m, 11, &opts).unwrap();
        assert_eq!(proj, again);
    }

    #[test]
    fn barnes_hut_separates_blobs_deterministically() {
        let (m, labels) = blobs(40, 4);
        let opts = TsneOptions { iterations: 400, method: "barnes-hut".into(), ..Default::default() };
        let proj = tsne(&m, 5, &opts).unwrap();
        assert_eq!(proj.method, "barnes-hut");
        assert!(proj.final_kl < proj.kl_after_exaggeration);
        assert!(silhouette_2d(&proj.points, &labels) > 0.5);
        assert_eq!(proj, tsne(&m, 5, &opts).unwrap());
    }

    #[test]
    fn barnes_hut_gradient_matches_exact_at_zero_theta() {
        // with every neighbour kept and theta = 0 both kernels see the same
        // affinities and sum repulsion exactly
        let (m, _) = blobs(8, 6);
        let n = m.len();
        let input = KernelInput {
            data: Arc::new(m.as_slice().to_vec()),
            n,
            dim: m.dim(),
            perplexity: 5.0,
            theta: 0.0,
        };
        let dist2 = input.dense_dist2();
        let (cond, _) = affinity::dense_conditional(&dist2, n, 5.0);
        let dense = affinity::symmetrize_dense(&cond, n);
        let (sparse, _) = affinity::sparse_joint(&input.neighbours(n - 1), 5.0);
        let exact = ExactKernel::new(dense, n);
        let bh = BarnesHutKernel::new(sparse, 0.0);
        let y: Vec<[f64; 2]> = (0..n).map(|i| [(i as f64 * 1.3).sin(), (i as f64 * 0.7).cos()]).collect();
        let mut g1 = vec![[0.0; 2]; n];
        let mut g2 = vec![[0.0; 2]; n];
        exact.gradient(&y, 1.0, &mut g1);
        bh.gradient(&y, 1.0, &mut g2);
        for i in 0..n {
            for d in 0..2 {
                assert!((g1[i][d] - g2[i][d]).abs() < 1e-9, "{i} {d}: {} vs {}", g1[i][d], g2[i][d]);
            }
        }
        assert!((exact.kl_divergence(&y) - bh.kl_divergence(&y)).abs() < 1e-9);
    }

    #[test]
    fn rejects_infeasible_inputs() {
        let (m, _) = blobs(2, 7);
        assert!(tsne(&m, 0, &TsneOptions { perplexity: 30.0, ..Default::default() }).is_err());
        let opts = TsneOptions { perplexity: 1.0, method: "umap".into(), ..Default::default() };
        assert!(matches!(tsne(&m, 0, &opts), Err(Error::UnknownStrategy { .. })));
    }

    #[test]
    fn save_load_roundtrip() {
        let (m, _) = blobs(5, 8);
        let opts = TsneOptions { perplexity: 4.0, iterations: 50, ..Default::default() };
        let proj = tsne(&m, 1, &opts).unwrap();
        let dir = tempfile::tempdir().unwrap();
        proj.save(dir.path()).unwrap();
        let back = Projection2D::load(dir.path()).unwrap();
        assert_eq!(back.record_ids, proj.record_ids);
        assert_eq!(back.final_kl, proj.final_kl);
        for (a, b) in back.points.iter().zip(&proj.points) {
            assert!((a[0] - b[0]).abs() <= 1e-6 * a[0].abs().max(1.0));
        }
    }
}
