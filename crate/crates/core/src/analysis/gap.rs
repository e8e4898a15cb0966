use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::federation::{build_views, run_pretraining, PretrainOptions, Topology};
use crate::graph::{Partition, Split};
use crate::linalg::{CsrMatrix, Matrix};
use crate::secure::PlainChannel;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GapForm {
    /// `|K M_k^T M_k - M^T M|`
    #[default]
    Scaled,
    /// `|M_k^T M_k - M^T M|`, without the client-count factor.
    TableLiteral,
}

/// Linearized two-layer outputs `P_2 P_1 F` of every client for `hops`
/// (rows are the client's nodes), plus the global `A A X`.
pub fn hop_products(
    topo: &Topology,
    partition: &Partition,
    hops: usize,
) -> Result<(Vec<Matrix>, Matrix)> {
    let channel = PlainChannel;
    let pre = run_pretraining(
        topo,
        partition,
        hops,
        2,
        &channel,
        PretrainOptions::default(),
    )?;
    let labels = vec![0; topo.num_nodes()];
    let views = build_views(
        topo,
        partition,
        &labels,
        &Split::default(),
        hops,
        2,
        &pre.inboxes,
    )?;
    let locals = views
        .iter()
        .map(|v| {
            let first = v.props[0].apply(&v.features.to_dense())?;
            v.props[1].apply(&first)
        })
        .collect::<Result<Vec<_>>>()?;
    let degrees = topo.degrees();
    let factors: Vec<f64> = degrees.iter().map(|d| 1.0 / d).collect();
    let a: CsrMatrix = topo.looped().scale_rows(&factors)?;
    let global = a.spmm(&a.spmm(topo.features())?)?;
    Ok((locals, global))
}

/// Per-client Frobenius gap between the local and global quintic products
/// `M_k^T M_k` and `M^T M`, for a two-layer model.
pub fn gradient_gap_generic(
    topo: &Topology,
    partition: &Partition,
    hops: usize,
    form: GapForm,
) -> Result<Vec<f64>> {
    if hops > 2 {
        return Err(Error::Config(format!("{hops} hops exceed the two layers")));
    }
    let (locals, global) = hop_products(topo, partition, hops)?;
    let z_glob = global.t_matmul(&global)?;
    let k = match form {
        GapForm::Scaled => partition.num_clients() as f64,
        GapForm::TableLiteral => 1.0,
    };
    locals
        .iter()
        .map(|m| {
            let z = m.t_matmul(m)?.scale(k);
            Ok(z.sub(&z_glob)?.frobenius_norm())
        })
        .collect()
}

#[cfg(test)]
#[allow(clippy::needless_range_loop)]
mod tests {
    use super::*;
    use crate::graph::Graph;

    fn toy(assignment: Vec<usize>, k: usize) -> (Topology, Partition) {
        let edges = [(0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (1, 4)];
        let x = Matrix::from_rows(
            &(0..6)
                .map(|i| vec![i as f64, 1.0, (i * i) as f64])
                .collect::<Vec<_>>(),
        )
        .unwrap();
        let g = Graph::from_edges(6, &edges, x, vec![0, 0, 0, 1, 1, 1], 2).unwrap();
        let p = Partition::from_assignment(&g, assignment, k, 0.0).unwrap();
        (Topology::new(&g), p)
    }

    /// Two rounds of mean aggregation over closed neighborhoods restricted to
    /// `keep`, by explicit loops.
    fn loop_oracle(topo: &Topology, keep: &[usize]) -> Vec<Vec<f64>> {
        let n = topo.num_nodes();
        let d = topo.feature_dim();
        let inside = |j: usize| keep.contains(&j);
        let step = |h: &Vec<Vec<f64>>| -> Vec<Vec<f64>> {
            (0..n)
                .map(|i| {
                    let mut acc = vec![0.0; d];
                    let nbrs: Vec<usize> = topo
                        .closed_neighbors(i)
                        .0
                        .iter()
                        .copied()
                        .filter(|&j| inside(j))
                        .collect();
                    for &j in &nbrs {
                        for c in 0..d {
                            acc[c] += h[j][c] / nbrs.len() as f64;
                        }
                    }
                    acc
                })
                .collect()
        };
        let x: Vec<Vec<f64>> = (0..n).map(|i| topo.features().row(i).to_vec()).collect();
        step(&step(&x))
    }

    #[test]
    fn two_hops_reproduce_global_rows() {
        let (topo, part) = toy(vec![0, 0, 0, 1, 1, 1], 2);
        let (locals, global) = hop_products(&topo, &part, 2).unwrap();
        let oracle = loop_oracle(&topo, &[0, 1, 2, 3, 4, 5]);
        for i in 0..6 {
            for c in 0..3 {
                assert!((global.row(i)[c] - oracle[i][c]).abs() < 1e-12);
            }
        }
        for (k, m) in locals.iter().enumerate() {
            for (r, &i) in part.clients[k].nodes.iter().enumerate() {
                for c in 0..3 {
                    assert!((m.row(r)[c] - oracle[i][c]).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn zero_hops_use_only_local_edges() {
        let (topo, part) = toy(vec![0, 0, 0, 1, 1, 1], 2);
        let (locals, _) = hop_products(&topo, &part, 0).unwrap();
        for (k, m) in locals.iter().enumerate() {
            let nodes = &part.clients[k].nodes;
            let oracle = loop_oracle(&topo, nodes);
            for (r, &i) in nodes.iter().enumerate() {
                for c in 0..3 {
                    assert!((m.row(r)[c] - oracle[i][c]).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn single_client_has_no_gap() {
        let (topo, part) = toy(vec![0; 6], 1);
        for hops in 0..=2 {
            let gap = gradient_gap_generic(&topo, &part, hops, GapForm::Scaled).unwrap();
            assert!(gap[0] < 1e-9, "hops {hops}: {gap:?}");
        }
    }

    #[test]
    fn two_hop_client_products_sum_to_global() {
        let (topo, part) = toy(vec![0, 1, 0, 1, 0, 1], 2);
        let (locals, global) = hop_products(&topo, &part, 2).unwrap();
        let mut sum = Matrix::zeros(3, 3);
        for m in &locals {
            sum.add_scaled(1.0, &m.t_matmul(m).unwrap()).unwrap();
        }
        assert!(sum.max_abs_diff(&global.t_matmul(&global).unwrap()) < 1e-9);
        assert!(gradient_gap_generic(&topo, &part, 3, GapForm::Scaled).is_err());
    }
}
