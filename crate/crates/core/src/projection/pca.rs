//! Randomized PCA used as an optional pre-reduction before t-SNE.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

const OVERSAMPLE: usize = 10;
const POWER_ITERS: usize = 4;

/// Projects row-major `data` (`n x dim`) onto its top `target` principal
/// components. Returns row-major `n x target` scores.
pub fn pca_reduce(data: &[f32], n: usize, dim: usize, target: usize, seed: u64) -> Vec<f32> {
    if target >= dim || n == 0 {
        return data.to_vec();
    }
    let mut x = DMatrix::<f64>::from_fn(n, dim, |i, j| f64::from(data[i * dim + j]));
    for j in 0..dim {
        let mean = x.column(j).sum() / n as f64;
        x.column_mut(j).add_scalar_mut(-mean);
    }
    let width = (target + OVERSAMPLE).min(dim).min(n);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let omega = DMatrix::<f64>::from_fn(dim, width, |_, _| StandardNormal.sample(&mut rng));
    let mut q = (&x * omega).qr().q();
    for _ in 0..POWER_ITERS {
        let z = (x.transpose() * &q).qr().q();
        q = (&x * z).qr().q();
    }
    let b = q.transpose() * &x;
    let svd = b.svd(false, true);
    let v_t = svd.v_t.expect("requested right singular vectors");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]).then(a.cmp(&b)));
    let keep = target.min(order.len());
    let mut out = vec![0f32; n * keep];
    for (c, &comp) in order.iter().take(keep).enumerate() {
        let axis = v_t.row(comp);
        // fix the sign so the largest-magnitude loading is positive
        let pivot = axis.iter().copied().fold(0.0f64, |m, v| if v.abs() > m.abs() { v } else { m });
        let sign = if pivot < 0.0 { -1.0 } else { 1.0 };
        for i in 0..n {
            let score: f64 = x.row(i).iter().zip(axis.iter()).map(|(a, b)| a * b).sum();
            out[i * keep + c] = (sign * score) as f32;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recovers_dominant_axis() {
        // points spread along (1, 1, 0) with tiny noise on the other axes
        let n = 50;
        let mut data = Vec::new();
        for i in 0..n {
            let t = i as f32 - 25.0;
            data.extend_from_slice(&[t, t, (i % 3) as f32 * 0.01]);
        }
        let out = pca_reduce(&data, n, 3, 1, 1);
        assert_eq!(out.len(), n);
        // scores along the first component are the centred t times sqrt(2), up to sign
        for i in 0..n {
            let t = i as f32 - 24.5;
            assert!((out[i].abs() - t.abs() * 2f32.sqrt()).abs() < 0.05, "{i}: {}", out[i]);
        }
    }
}
