use rayon::prelude::*;

use super::GradientKernel;

/// O(n²) gradient over a dense joint affinity matrix.
pub struct ExactKernel {
    n: usize,
    joint: Vec<f64>,
}

impl ExactKernel {
    pub fn new(joint: Vec<f64>, n: usize) -> Self {
        assert_eq!(joint.len(), n * n);
        Self { n, joint }
    }

    pub fn joint(&self) -> &[f64] {
        &self.joint
    }
}

fn kernel(a: [f64; 2], b: [f64; 2]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    1.0 / (1.0 + dx * dx + dy * dy)
}

fn normalizer(y: &[[f64; 2]]) -> f64 {
    let partial: Vec<f64> = (0..y.len())
        .into_par_iter()
        .map(|i| (0..y.len()).filter(|&j| j != i).map(|j| kernel(y[i], y[j])).sum())
        .collect();
    partial.iter().sum()
}

impl GradientKernel for ExactKernel {
    fn name(&self) -> &'static str {
        "exact"
    }

    fn gradient(&self, y: &[[f64; 2]], exaggeration: f64, grad: &mut [[f64; 2]]) {
        let n = self.n;
        let z = normalizer(y);
        grad.par_iter_mut().enumerate().for_each(|(i, g)| {
            let mut gx = 0.0;
            let mut gy = 0.0;
            for j in 0..n {
                if j == i {
                    continue;
                }
                let num = kernel(y[i], y[j]);
                let mult = (exaggeration * self.joint[i * n + j] - num / z) * num;
                gx += mult * (y[i][0] - y[j][0]);
                gy += mult * (y[i][1] - y[j][1]);
            }
            *g = [4.0 * gx, 4.0 * gy];
        });
    }

    fn kl_divergence(&self, y: &[[f64; 2]]) -> f64 {
        let n = self.n;
        let z = normalizer(y);
        let partial: Vec<f64> = (0..n)
            .into_par_iter()
            .map(|i| {
                let mut acc = 0.0;
                for j in 0..n {
                    let p = self.joint[i * n + j];
                    if j != i && p > 0.0 {
                        let q = (kernel(y[i], y[j]) / z).max(f64::MIN_POSITIVE);
                        acc += p * (p / q).ln();
                    }
                }
                acc
            })
            .collect();
        partial.iter().sum::<f64>().max(0.0)
    }
}
