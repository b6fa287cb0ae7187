use ndarray::{Array1, Array2, Axis};

use super::{Topology, TransitionInit};
use crate::error::{Error, Result};
use crate::features::ObservationSequence;
use crate::rng::Rng;

const KMEANS_MAX_ITER: usize = 300;

/// Start vector, transition matrix and mask for `k` states.
///
/// Uniform mode spreads each row's mass equally over the allowed entries;
/// randomized mode multiplies the uniform values by fresh `U[0,1)` draws and
/// renormalizes, which keeps every forbidden entry at zero.
pub fn init_transition(
    k: usize,
    topology: Topology,
    mode: TransitionInit,
    seed: u64,
) -> Result<(Array1<f64>, Array2<f64>, Array2<bool>)> {
    if k == 0 {
        return Err(Error::InvalidArgument("state count must be at least 1".into()));
    }
    topology.validate()?;
    let mask = topology.mask(k);
    let start = topology.start_mask(k);
    let mut rng = Rng::new(seed);
    let mut draw = |allowed: bool| -> f64 {
        match (allowed, mode) {
            (false, _) => 0.0,
            (true, TransitionInit::Uniform) => 1.0,
            (true, TransitionInit::Randomized) => rng.next_f64(),
        }
    };
    let mut a = Array2::zeros((k, k));
    for i in 0..k {
        for j in 0..k {
            a[[i, j]] = draw(mask[[i, j]]);
        }
    }
    let mut pi = Array1::from_shape_fn(k, |i| draw(start[i]));
    for mut row in a.rows_mut() {
        normalize(row.as_slice_mut().expect("standard layout"));
    }
    normalize(pi.as_slice_mut().expect("standard layout"));
    Ok((pi, a, mask))
}

fn normalize(v: &mut [f64]) {
    let total: f64 = v.iter().sum();
    if total > 0.0 {
        v.iter_mut().for_each(|x| *x /= total);
    } else {
        // every random draw was exactly zero; fall back to uniform over the support
        let n = v.len() as f64;
        v.iter_mut().for_each(|x| *x = 1.0 / n);
    }
}

/// Result of Lloyd's algorithm.
#[derive(Debug, Clone)]
pub struct KMeans {
    pub centers: Array2<f64>,
    pub assignments: Vec<usize>,
    pub iterations: usize,
}

fn sq_dist(a: ndarray::ArrayView1<'_, f64>, b: ndarray::ArrayView1<'_, f64>) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(centers: &Array2<f64>, p: ndarray::ArrayView1<'_, f64>) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (c, center) in centers.rows().into_iter().enumerate() {
        let d = sq_dist(center, p);
        if d < best_d {
            best_d = d;
            best = c;
        }
    }
    best
}

/// Lloyd's k-means seeded with `k` distinct points sampled without replacement.
/// Empty clusters take the point farthest from its own center.
pub fn kmeans(points: &Array2<f64>, k: usize, seed: u64) -> Result<KMeans> {
    if k == 0 {
        return Err(Error::InvalidArgument("cluster count must be at least 1".into()));
    }
    let n = points.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        points
            .row(a)
            .iter()
            .zip(points.row(b).iter())
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let mut distinct: Vec<usize> = Vec::new();
    for &i in &order {
        if distinct.last().is_none_or(|&j| points.row(i) != points.row(j)) {
            distinct.push(i);
        }
    }
    distinct.sort_unstable();
    if distinct.len() < k {
        return Err(Error::InvalidArgument(format!(
            "k-means needs {k} distinct frames, found {}",
            distinct.len()
        )));
    }
    let mut rng = Rng::new(seed);
    let picks = rng.sample_indices(distinct.len(), k);
    let mut centers = points.select(Axis(0), &picks.iter().map(|&i| distinct[i]).collect::<Vec<_>>());
    let mut assignments = vec![usize::MAX; n];
    let mut iterations = 0;
    while iterations < KMEANS_MAX_ITER {
        iterations += 1;
        let mut next: Vec<usize> = points.rows().into_iter().map(|p| nearest(&centers, p)).collect();
        let mut counts = vec![0usize; k];
        for &a in &next {
            counts[a] += 1;
        }
        for c in 0..k {
            if counts[c] > 0 {
                continue;
            }
            let far = (0..n)
                .filter(|&i| counts[next[i]] > 1)
                .max_by(|&i, &j| {
                    let di = sq_dist(points.row(i), centers.row(next[i]));
                    let dj = sq_dist(points.row(j), centers.row(next[j]));
                    di.total_cmp(&dj).then(j.cmp(&i))
                })
                .expect("k <= distinct points leaves a cluster with two members");
            counts[next[far]] -= 1;
            next[far] = c;
            counts[c] = 1;
        }
        let changed = next != assignments;
        assignments = next;
        centers.fill(0.0);
        for (i, &a) in assignments.iter().enumerate() {
            let mut row = centers.row_mut(a);
            row += &points.row(i);
        }
        for (c, mut row) in centers.rows_mut().into_iter().enumerate() {
            row /= counts[c] as f64;
        }
        if !changed {
            break;
        }
    }
    Ok(KMeans {
        centers,
        assignments,
        iterations,
    })
}

/// Means from k-means cluster centers and per-cluster diagonal variances
/// (floored) over the stacked frames of all sequences.
pub fn init_emission_kmeans(
    training: &[ObservationSequence],
    k: usize,
    seed: u64,
    floor: f64,
) -> Result<(Array2<f64>, Array2<f64>)> {
    let d = training
        .first()
        .map(ObservationSequence::dim)
        .ok_or_else(|| Error::InvalidArgument("no training sequences".into()))?;
    let views: Vec<_> = training
        .iter()
        .map(|s| {
            if s.dim() == d {
                Ok(s.data.view())
            } else {
                Err(Error::DimensionMismatch {
                    expected: d,
                    found: s.dim(),
                })
            }
        })
        .collect::<Result<_>>()?;
    let points = ndarray::concatenate(Axis(0), &views).expect("dims checked");
    if points.nrows() < k {
        return Err(Error::InvalidArgument(format!(
            "{} frames cannot seed {k} states",
            points.nrows()
        )));
    }
    let km = kmeans(&points, k, seed)?;
    let mut var = Array2::<f64>::zeros((k, d));
    let mut counts = vec![0usize; k];
    for (i, &a) in km.assignments.iter().enumerate() {
        counts[a] += 1;
        for j in 0..d {
            let diff = points[[i, j]] - km.centers[[a, j]];
            var[[a, j]] += diff * diff;
        }
    }
    for (c, mut row) in var.rows_mut().into_iter().enumerate() {
        let n = counts[c] as f64;
        row.mapv_inplace(|v| (v / n).max(floor));
    }
    Ok((km.centers, var))
}

/// Random means in `[-1, 1]` and covariances `R·Rᵀ` with `R ~ U[-1, 1]`.
#[derive(Debug, Clone)]
pub struct RandomEmission {
    pub means: Array2<f64>,
    pub covariances: Vec<Array2<f64>>,
}

impl RandomEmission {
    /// K×D diagonal entries of the covariance matrices.
    pub fn diagonals(&self) -> Array2<f64> {
        let k = self.covariances.len();
        let d = self.means.ncols();
        Array2::from_shape_fn((k, d), |(i, j)| self.covariances[i][[j, j]])
    }
}

pub fn init_emission_random(k: usize, d: usize, seed: u64, diagonal: bool) -> Result<RandomEmission> {
    if k == 0 || d == 0 {
        return Err(Error::InvalidArgument(
            "state count and dimension must be positive".into(),
        ));
    }
    let mut rng = Rng::new(seed);
    let means = Array2::from_shape_fn((k, d), |_| rng.uniform(-1.0, 1.0));
    let covariances = (0..k)
        .map(|_| {
            let r = Array2::from_shape_fn((d, d), |_| rng.uniform(-1.0, 1.0));
            let mut cov = r.dot(&r.t());
            if diagonal {
                for i in 0..d {
                    for j in 0..d {
                        if i != j {
                            cov[[i, j]] = 0.0;
                        }
                    }
                }
            }
            cov
        })
        .collect();
    Ok(RandomEmission { means, covariances })
}
