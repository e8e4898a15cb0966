//! Shared fixtures and independent oracles for the integration tests.
#![allow(dead_code, clippy::needless_range_loop)]

use fedgcn_core::gcn::{
    gcn_backward, gcn_forward, xent_loss, ForwardMode, GcnWeights, Propagation,
};
use fedgcn_core::graph::{Graph, Split};
use fedgcn_core::linalg::{CsrMatrix, Matrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Erdos-Renyi graph with uniform features in `[-1, 1]` (or small integers
/// when `integer_features`) and uniform labels.
pub fn random_graph(
    seed: u64,
    n: usize,
    d: usize,
    classes: usize,
    edge_prob: f64,
    integer_features: bool,
) -> Graph {
    let mut r = rng(seed);
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if r.random::<f64>() < edge_prob {
                edges.push((i, j));
            }
        }
    }
    let data: Vec<f64> = (0..n * d)
        .map(|_| {
            if integer_features {
                r.random_range(0..4) as f64
            } else {
                r.random_range(-1.0..1.0)
            }
        })
        .collect();
    let x = Matrix::from_vec(n, d, data).unwrap();
    let labels = (0..n).map(|_| r.random_range(0..classes)).collect();
    Graph::from_edges(n, &edges, x, labels, classes).unwrap()
}

/// Random weights with entries in `[-scale, scale]`.
pub fn random_weights(seed: u64, dims: &[usize], scale: f64) -> GcnWeights {
    let mut r = rng(seed);
    let layers = dims
        .windows(2)
        .map(|w| {
            let data = (0..w[0] * w[1])
                .map(|_| r.random_range(-scale..scale))
                .collect();
            Matrix::from_vec(w[0], w[1], data).unwrap()
        })
        .collect();
    GcnWeights::new(layers).unwrap()
}

/// `D^{-1}(A + I)` as nested vectors, by explicit loops over the edge list.
pub fn dense_normalized(g: &Graph) -> Vec<Vec<f64>> {
    let n = g.num_nodes();
    let mut a = vec![vec![0.0; n]; n];
    for i in 0..n {
        a[i][i] = 1.0;
    }
    for (i, j) in g.edges() {
        a[i][j] = 1.0;
        a[j][i] = 1.0;
    }
    for row in &mut a {
        let s: f64 = row.iter().sum();
        for v in row.iter_mut() {
            *v /= s;
        }
    }
    a
}

fn matmul(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let m = b[0].len();
    a.iter()
        .map(|row| {
            (0..m)
                .map(|c| row.iter().zip(b).map(|(x, br)| x * br[c]).sum())
                .collect()
        })
        .collect()
}

pub fn to_nested(m: &Matrix) -> Vec<Vec<f64>> {
    (0..m.rows()).map(|i| m.row(i).to_vec()).collect()
}

/// Eval-mode GCN by nested loops: ReLU on hidden layers, row softmax last.
pub fn oracle_forward(adj: &[Vec<f64>], x: &[Vec<f64>], w: &GcnWeights) -> Vec<Vec<f64>> {
    let mut h = x.to_vec();
    let last = w.num_layers() - 1;
    for (l, wl) in w.layers().iter().enumerate() {
        let z = matmul(adj, &matmul(&h, &to_nested(wl)));
        h = if l < last {
            z.into_iter()
                .map(|r| r.into_iter().map(|v| v.max(0.0)).collect())
                .collect()
        } else {
            z.into_iter()
                .map(|r| {
                    let m = r.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    let e: Vec<f64> = r.iter().map(|v| (v - m).exp()).collect();
                    let s: f64 = e.iter().sum();
                    e.into_iter().map(|v| v / s).collect()
                })
                .collect()
        };
    }
    h
}

/// Every node in train, nothing else.
pub fn all_train(n: usize) -> Split {
    Split {
        train: (0..n).collect(),
        val: (0..n).collect(),
        test: (0..n).collect(),
    }
}

/// Row-normalized adjacency with self-loops at every layer.
pub fn props_for(g: &Graph, layers: usize) -> Vec<Propagation> {
    let a = g
        .add_self_loops()
        .row_normalize()
        .unwrap()
        .adjacency()
        .clone();
    (0..layers)
        .map(|_| Propagation::Sparse(a.clone()))
        .collect()
}

pub fn loss_at(g: &Graph, props: &[Propagation], w: &GcnWeights, mask: &[usize], l2: f64) -> f64 {
    let x = CsrMatrix::from_dense(g.features());
    let cache = gcn_forward(props, &x, w, ForwardMode::Eval).unwrap();
    xent_loss(&cache, g.labels(), mask, w, l2).unwrap()
}

/// Max relative error between analytic and central-difference gradients.
pub fn finite_difference_error(seed: u64) -> Option<f64> {
    let g = random_graph(seed, 6, 3, 3, 0.4, false);
    let props = props_for(&g, 2);
    let w = random_weights(seed + 1000, &[3, 4, 3], 1.0);
    let x = CsrMatrix::from_dense(g.features());
    let cache = gcn_forward(&props, &x, &w, ForwardMode::Eval).unwrap();
    // Stay away from ReLU kinks, where the derivative is one-sided.
    if cache.pre_activations[0]
        .as_slice()
        .iter()
        .any(|z| z.abs() < 1e-3)
    {
        return None;
    }
    let mask = [0, 2, 3, 5];
    let l2 = 0.01;
    let grads = gcn_backward(&cache, &props, &x, g.labels(), &mask, &w, l2).unwrap();
    let flat = w.to_flat();
    let analytic = grads.to_flat();
    let shapes = w.shapes();
    let step = 1e-4;
    let mut worst = 0.0f64;
    for i in 0..flat.len() {
        let mut plus = flat.clone();
        plus[i] += step;
        let mut minus = flat.clone();
        minus[i] -= step;
        let fp = loss_at(
            &g,
            &props,
            &GcnWeights::from_flat(&shapes, &plus).unwrap(),
            &mask,
            l2,
        );
        let fm = loss_at(
            &g,
            &props,
            &GcnWeights::from_flat(&shapes, &minus).unwrap(),
            &mask,
            l2,
        );
        let numeric = (fp - fm) / (2.0 * step);
        let denom = analytic[i].abs().max(numeric.abs()).max(1e-6);
        worst = worst.max((analytic[i] - numeric).abs() / denom);
    }
    Some(worst)
}
