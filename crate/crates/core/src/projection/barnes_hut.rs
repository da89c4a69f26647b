//! Barnes–Hut approximation: attractive forces over the sparse
//! nearest-neighbour affinities, repulsive forces summarized by a quadtree.

use rayon::prelude::*;

use super::affinity::SparseAffinity;
use super::GradientKernel;

const MAX_DEPTH: usize = 48;

#[derive(Debug, Clone)]
struct Node {
    cx: f64,
    cy: f64,
    half: f64,
    mass: f64,
    com: [f64; 2],
    children: Option<[usize; 4]>,
    /// Points held by a leaf; more than one only for coincident points.
    points: Vec<usize>,
}

/// Quadtree over 2-D points, built in point-index order.
#[derive(Debug)]
pub struct QuadTree {
    nodes: Vec<Node>,
}

impl QuadTree {
    pub fn build(y: &[[f64; 2]]) -> Self {
        let (mut min_x, mut min_y) = (f64::INFINITY, f64::INFINITY);
        let (mut max_x, mut max_y) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
        for p in y {
            min_x = min_x.min(p[0]);
            min_y = min_y.min(p[1]);
            max_x = max_x.max(p[0]);
            max_y = max_y.max(p[1]);
        }
        let half = ((max_x - min_x).max(max_y - min_y) / 2.0).max(1e-12) * (1.0 + 1e-9);
        let root = Node {
            cx: (min_x + max_x) / 2.0,
            cy: (min_y + max_y) / 2.0,
            half,
            mass: 0.0,
            com: [0.0; 2],
            children: None,
            points: Vec::new(),
        };
        let mut tree = QuadTree { nodes: vec![root] };
        for (i, p) in y.iter().enumerate() {
            tree.insert(0, i, *p, y, 0);
        }
        tree
    }

    fn quadrant(node: &Node, p: [f64; 2]) -> usize {
        usize::from(p[0] > node.cx) | (usize::from(p[1] > node.cy) << 1)
    }

    fn insert(&mut self, at: usize, index: usize, p: [f64; 2], y: &[[f64; 2]], depth: usize) {
        {
            let node = &mut self.nodes[at];
            let m = node.mass;
            node.com = [
                (node.com[0] * m + p[0]) / (m + 1.0),
                (node.com[1] * m + p[1]) / (m + 1.0),
            ];
            node.mass += 1.0;
        }
        if self.nodes[at].children.is_none() {
            if self.nodes[at].points.is_empty() || depth >= MAX_DEPTH {
                // depth cap only reached by coincident points
                self.nodes[at].points.push(index);
                return;
            }
            self.subdivide(at);
            for existing in std::mem::take(&mut self.nodes[at].points) {
                let q = y[existing];
                let child = self.nodes[at].children.unwrap()[Self::quadrant(&self.nodes[at], q)];
                self.insert(child, existing, q, y, depth + 1);
            }
        }
        let child = self.nodes[at].children.unwrap()[Self::quadrant(&self.nodes[at], p)];
        self.insert(child, index, p, y, depth + 1);
    }

    fn subdivide(&mut self, at: usize) {
        let (cx, cy, half) = (self.nodes[at].cx, self.nodes[at].cy, self.nodes[at].half / 2.0);
        let mut ids = [0; 4];
        for (q, id) in ids.iter_mut().enumerate() {
            let sx = if q & 1 == 1 { 1.0 } else { -1.0 };
            let sy = if q & 2 == 2 { 1.0 } else { -1.0 };
            *id = self.nodes.len();
            self.nodes.push(Node {
                cx: cx + sx * half,
                cy: cy + sy * half,
                half,
                mass: 0.0,
                com: [0.0; 2],
                children: None,
                points: Vec::new(),
            });
        }
        self.nodes[at].children = Some(ids);
    }

    /// Repulsive force numerator and normalizer contribution for point `i`.
    fn repulsion(&self, i: usize, p: [f64; 2], theta: f64) -> ([f64; 2], f64) {
        let mut force = [0.0; 2];
        let mut z = 0.0;
        let mut stack = vec![0usize];
        while let Some(at) = stack.pop() {
            let node = &self.nodes[at];
            if node.mass == 0.0 {
                continue;
            }
            let own = if node.children.is_none() && node.points.contains(&i) { 1.0 } else { 0.0 };
            if node.mass - own <= 0.0 {
                continue;
            }
            let dx = p[0] - node.com[0];
            let dy = p[1] - node.com[1];
            let d2 = dx * dx + dy * dy;
            let summarize = match node.children {
                None => true,
                Some(_) => (2.0 * node.half) / d2.sqrt() < theta,
            };
            if summarize {
                let mass = node.mass - own;
                let q = 1.0 / (1.0 + d2);
                z += mass * q;
                force[0] += mass * q * q * dx;
                force[1] += mass * q * q * dy;
            } else {
                // push in reverse so children are visited in quadrant order
                for &c in node.children.as_ref().unwrap().iter().rev() {
                    stack.push(c);
                }
            }
        }
        (force, z)
    }
}

pub struct BarnesHutKernel {
    joint: SparseAffinity,
    theta: f64,
}

impl BarnesHutKernel {
    pub fn new(joint: SparseAffinity, theta: f64) -> Self {
        Self { joint, theta }
    }

    pub fn joint(&self) -> &SparseAffinity {
        &self.joint
    }
}

impl GradientKernel for BarnesHutKernel {
    fn name(&self) -> &'static str {
        "barnes-hut"
    }

    fn gradient(&self, y: &[[f64; 2]], exaggeration: f64, grad: &mut [[f64; 2]]) {
        let tree = QuadTree::build(y);
        let rep: Vec<([f64; 2], f64)> = (0..y.len())
            .into_par_iter()
            .map(|i| tree.repulsion(i, y[i], self.theta))
            .collect();
        let z: f64 = rep.iter().map(|(_, z)| z).sum();
        grad.par_iter_mut().enumerate().for_each(|(i, g)| {
            let mut attr = [0.0; 2];
            for (j, p) in self.joint.row(i) {
                let dx = y[i][0] - y[j][0];
                let dy = y[i][1] - y[j][1];
                let q = 1.0 / (1.0 + dx * dx + dy * dy);
                attr[0] += exaggeration * p * q * dx;
                attr[1] += exaggeration * p * q * dy;
            }
            let (f, _) = rep[i];
            *g = [4.0 * (attr[0] - f[0] / z), 4.0 * (attr[1] - f[1] / z)];
        });
    }

    fn kl_divergence(&self, y: &[[f64; 2]]) -> f64 {
        let n = y.len();
        let partial: Vec<f64> = (0..n)
            .into_par_iter()
            .map(|i| {
                (0..n)
                    .filter(|&j| j != i)
                    .map(|j| {
                        let dx = y[i][0] - y[j][0];
                        let dy = y[i][1] - y[j][1];
                        1.0 / (1.0 + dx * dx + dy * dy)
                    })
                    .sum::<f64>()
            })
            .collect();
        let z: f64 = partial.iter().sum();
        let mut kl = 0.0;
        for i in 0..n {
            for (j, p) in self.joint.row(i) {
                if p > 0.0 {
                    let dx = y[i][0] - y[j][0];
                    let dy = y[i][1] - y[j][1];
                    let q = (1.0 / (1.0 + dx * dx + dy * dy) / z).max(f64::MIN_POSITIVE);
                    kl += p * (p / q).ln();
                }
            }
        }
        kl.max(0.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_theta_matches_direct_sum() {
        let y: Vec<[f64; 2]> = (0..40)
            .map(|i| {
                let t = i as f64 * 0.7;
                [t.sin() * (1.0 + i as f64 * 0.1), t.cos() * 2.0]
            })
            .collect();
        let tree = QuadTree::build(&y);
        for i in [0, 7, 39] {
            let (f, z) = tree.repulsion(i, y[i], 0.0);
            let mut df = [0.0; 2];
            let mut dz = 0.0;
            for j in 0..y.len() {
                if j != i {
                    let dx = y[i][0] - y[j][0];
                    let dy = y[i][1] - y[j][1];
                    let q = 1.0 / (1.0 + dx * dx + dy * dy);
                    dz += q;
                    df[0] += q * q * dx;
                    df[1] += q * q * dy;
                }
            }
            assert!((z - dz).abs() < 1e-10 * dz);
            assert!((f[0] - df[0]).abs() < 1e-10);
            assert!((f[1] - df[1]).abs() < 1e-10);
        }
    }

    #[test]
    fn coincident_points_do_not_recurse_forever() {
        let y = vec![[1.0, 1.0]; 10];
        let tree = QuadTree::build(&y);
        let (_, z) = tree.repulsion(0, y[0], 0.5);
        assert!((z - 9.0).abs() < 1e-12);
    }
}
