//! Input-space affinities: per-point Gaussian bandwidths matched to a
//! target perplexity, then symmetrized joint probabilities.

use rayon::prelude::*;

const BANDWIDTH_TOL: f64 = 1e-5;
const BANDWIDTH_STEPS: usize = 200;

/// Conditional distribution of one point over candidate neighbours given
/// their squared distances. Returns the probabilities and the achieved
/// entropy (natural log, i.e. log-perplexity).
pub fn conditional_row(dist2: &[f64], perplexity: f64) -> (Vec<f64>, f64) {
    let target = perplexity.ln();
    let d_min = dist2.iter().copied().fold(f64::INFINITY, f64::min);
    let mut beta = 1.0f64;
    let (mut lo, mut hi) = (0.0f64, f64::INFINITY);
    let mut probs = vec![0.0; dist2.len()];
    let mut entropy = 0.0;
    for _ in 0..BANDWIDTH_STEPS {
        let mut sum = 0.0;
        let mut weighted = 0.0;
        for (p, &d) in probs.iter_mut().zip(dist2) {
            let shifted = d - d_min;
            *p = (-beta * shifted).exp();
            sum += *p;
            weighted += shifted * *p;
        }
        entropy = sum.ln() + beta * weighted / sum;
        let diff = entropy - target;
        if diff.abs() < BANDWIDTH_TOL {
            break;
        }
        if diff > 0.0 {
            lo = beta;
            beta = if hi.is_finite() { (beta + hi) / 2.0 } else { beta * 2.0 };
        } else {
            hi = beta;
            beta = (beta + lo) / 2.0;
        }
    }
    let sum: f64 = probs.iter().sum();
    probs.iter_mut().for_each(|p| *p /= sum);
    (probs, entropy)
}

/// Dense conditional matrix `P(j|i)` (row-major, zero diagonal) and the
/// achieved log-perplexity of each row.
pub fn dense_conditional(dist2: &[f64], n: usize, perplexity: f64) -> (Vec<f64>, Vec<f64>) {
    let rows: Vec<(Vec<f64>, f64)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let others: Vec<f64> = (0..n).filter(|&j| j != i).map(|j| dist2[i * n + j]).collect();
            conditional_row(&others, perplexity)
        })
        .collect();
    let mut cond = vec![0.0; n * n];
    let mut entropies = Vec::with_capacity(n);
    for (i, (probs, h)) in rows.into_iter().enumerate() {
        let mut it = probs.into_iter();
        for j in (0..n).filter(|&j| j != i) {
            cond[i * n + j] = it.next().expect("n - 1 probabilities");
        }
        entropies.push(h);
    }
    (cond, entropies)
}

/// `P_ij = (P(j|i) + P(i|j)) / 2n`.
pub fn symmetrize_dense(cond: &[f64], n: usize) -> Vec<f64> {
    let mut joint = vec![0.0; n * n];
    let denom = 2.0 * n as f64;
    for i in 0..n {
        for j in 0..n {
            joint[i * n + j] = (cond[i * n + j] + cond[j * n + i]) / denom;
        }
    }
    joint
}

/// Compressed sparse rows with sorted column indices.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseAffinity {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub cols: Vec<usize>,
    pub vals: Vec<f64>,
}

impl SparseAffinity {
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[range.clone()].iter().copied().zip(self.vals[range].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let range = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.cols[range.clone()].binary_search(&j) {
            Ok(pos) => self.vals[range.start + pos],
            Err(_) => 0.0,
        }
    }

    pub fn total(&self) -> f64 {
        self.vals.iter().sum()
    }
}

/// Conditional rows over each point's nearest neighbours, symmetrized into
/// a joint sparse matrix. `neighbours[i]` lists `(j, squared distance)`.
pub fn sparse_joint(neighbours: &[Vec<(usize, f64)>], perplexity: f64) -> (SparseAffinity, Vec<f64>) {
    let n = neighbours.len();
    let rows: Vec<(Vec<f64>, f64)> = neighbours
        .par_iter()
        .map(|nb| {
            let d: Vec<f64> = nb.iter().map(|&(_, d)| d).collect();
            conditional_row(&d, perplexity)
        })
        .collect();
    let mut entries: Vec<std::collections::BTreeMap<usize, f64>> = vec![Default::default(); n];
    let denom = 2.0 * n as f64;
    for (i, (probs, _)) in rows.iter().enumerate() {
        for (&(j, _), &p) in neighbours[i].iter().zip(probs) {
            *entries[i].entry(j).or_default() += p / denom;
            *entries[j].entry(i).or_default() += p / denom;
        }
    }
    let mut row_ptr = Vec::with_capacity(n + 1);
    let mut cols = Vec::new();
    let mut vals = Vec::new();
    row_ptr.push(0);
    for row in entries {
        for (j, v) in row {
            cols.push(j);
            vals.push(v);
        }
        row_ptr.push(cols.len());
    }
    let entropies = rows.into_iter().map(|(_, h)| h).collect();
    (SparseAffinity { n, row_ptr, cols, vals }, entropies)
}
