//! Local outlier factor over exact k-nearest neighbors found by
//! brute-force distance scan. Benchmark subsets are small enough that a
//! spatial index would be complexity without payoff.

use ndarray::{Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use super::AnomalyScorer;
use crate::error::{Error, Result};

/// Guards the local-reachability-density denominator when a point has k
/// coincident neighbors.
const REACH_EPS: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lof {
    train: Array2<f64>,
    k: usize,
    k_distance: Vec<f64>,
    lrd: Vec<f64>,
}

fn squared_distance(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y) * (x - y))
        .sum()
}

/// Exact k nearest neighbors of `point` among the rows of `data`,
/// excluding `skip`; ties break on index for determinism.
fn k_nearest(
    data: &Array2<f64>,
    point: ArrayView1<f64>,
    k: usize,
    skip: Option<usize>,
) -> Vec<(usize, f64)> {
    let mut dists: Vec<(usize, f64)> = (0..data.nrows())
        .filter(|i| Some(*i) != skip)
        .map(|i| (i, squared_distance(data.row(i), point).sqrt()))
        .collect();
    dists.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    dists.truncate(k);
    dists
}

impl Lof {
    pub fn fit(x: ArrayView2<f64>, k: usize) -> Result<Self> {
        let n = x.nrows();
        if k == 0 {
            return Err(Error::InvalidConfig("lof needs k >= 1".into()));
        }
        if n <= k {
            return Err(Error::KTooLarge { k, n });
        }
        let train = x.to_owned();
        let neighbors: Vec<Vec<(usize, f64)>> = crate::parallel::map_range(n, |i| {
            k_nearest(&train, train.row(i), k, Some(i))
        });
        let k_distance: Vec<f64> = neighbors
            .iter()
            .map(|nn| nn.last().expect("k >= 1").1)
            .collect();
        let lrd: Vec<f64> = neighbors
            .iter()
            .map(|nn| local_reachability(nn, &k_distance))
            .collect();
        Ok(Lof {
            train,
            k,
            k_distance,
            lrd,
        })
    }
}

fn local_reachability(neighbors: &[(usize, f64)], k_distance: &[f64]) -> f64 {
    let reach_sum: f64 = neighbors
        .iter()
        .map(|(o, d)| d.max(k_distance[*o]))
        .sum();
    neighbors.len() as f64 / (reach_sum + REACH_EPS)
}

impl AnomalyScorer for Lof {
    /// LOF of a query point against the fitted set: the mean neighbor
    /// density over the query's own density. ~1 inside uniform regions,
    /// larger in sparse ones.
    fn score(&self, x: ArrayView1<f64>) -> f64 {
        let neighbors = k_nearest(&self.train, x, self.k, None);
        let lrd_x = local_reachability(&neighbors, &self.k_distance);
        let mean_neighbor_lrd: f64 =
            neighbors.iter().map(|(o, _)| self.lrd[*o]).sum::<f64>() / neighbors.len() as f64;
        mean_neighbor_lrd / lrd_x
    }
}
