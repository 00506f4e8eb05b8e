//! Density-based clustering (DBSCAN).
//!
//! A point is a *core* point when at least `min_pts` points (itself
//! included) lie within Euclidean distance `eps`. Clusters are the sets of
//! points density-reachable from a core point; non-core points reachable from
//! no core point are noise. Points are visited in input order, clusters are
//! numbered in discovery order, and a border point reachable from several
//! clusters joins the first one discovered, so the output is fully
//! determined by the input order.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Radius and density threshold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DbscanParams {
    pub eps: f64,
    pub min_pts: usize,
}

impl DbscanParams {
    pub fn new(eps: f64, min_pts: usize) -> Result<Self> {
        if !(eps > 0.0 && eps.is_finite()) || min_pts == 0 {
            return Err(Error::Invalid(format!(
                "DBSCAN needs eps > 0 and min_pts >= 1 (got eps={eps}, min_pts={min_pts})"
            )));
        }
        Ok(DbscanParams { eps, min_pts })
    }
}

impl Default for DbscanParams {
    fn default() -> Self {
        DbscanParams {
            eps: 0.5,
            min_pts: 2,
        }
    }
}

/// Cluster membership of one point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Assignment {
    Cluster(usize),
    Noise,
}

impl Assignment {
    pub fn cluster(self) -> Option<usize> {
        match self {
            Assignment::Cluster(c) => Some(c),
            Assignment::Noise => None,
        }
    }
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn region_query<P: AsRef<[f64]>>(points: &[P], idx: usize, eps2: f64) -> Vec<usize> {
    let p = points[idx].as_ref();
    points
        .iter()
        .enumerate()
        .filter(|(_, q)| squared_distance(p, q.as_ref()) <= eps2)
        .map(|(j, _)| j)
        .collect()
}

/// Clusters `points` (all of the same dimension).
pub fn dbscan<P: AsRef<[f64]>>(points: &[P], params: &DbscanParams) -> Vec<Assignment> {
    #[derive(Clone, Copy, PartialEq)]
    enum State {
        Unvisited,
        Noise,
        Member(usize),
    }

    let eps2 = params.eps * params.eps;
    let mut state = vec![State::Unvisited; points.len()];
    let mut next_cluster = 0;

    for start in 0..points.len() {
        if state[start] != State::Unvisited {
            continue;
        }
        let neighbours = region_query(points, start, eps2);
        if neighbours.len() < params.min_pts {
            state[start] = State::Noise;
            continue;
        }
        let cluster = next_cluster;
        next_cluster += 1;
        state[start] = State::Member(cluster);

        let mut queue: VecDeque<usize> = neighbours.into_iter().collect();
        while let Some(q) = queue.pop_front() {
            match state[q] {
                State::Member(_) => continue,
                State::Noise => {
                    // border point, already known not to be core
                    state[q] = State::Member(cluster);
                    continue;
                }
                State::Unvisited => state[q] = State::Member(cluster),
            }
            let reach = region_query(points, q, eps2);
            if reach.len() >= params.min_pts {
                queue.extend(
                    reach
                        .into_iter()
                        .filter(|&r| matches!(state[r], State::Unvisited | State::Noise)),
                );
            }
        }
    }

    state
        .into_iter()
        .map(|s| match s {
            State::Member(c) => Assignment::Cluster(c),
            _ => Assignment::Noise,
        })
        .collect()
}

/// Z-scores each coordinate; coordinates with zero variance are dropped.
///
/// When every coordinate is constant the result holds empty vectors, which
/// DBSCAN treats as coincident points.
pub fn standardize(points: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let Some(dim) = points.first().map(Vec::len) else {
        return Vec::new();
    };
    let n = points.len() as f64;
    let mut keep = Vec::new();
    for d in 0..dim {
        let mean = points.iter().map(|p| p[d]).sum::<f64>() / n;
        let var = points.iter().map(|p| (p[d] - mean).powi(2)).sum::<f64>() / n;
        let std = var.sqrt();
        if std > 1e-12 {
            keep.push((d, mean, std));
        }
    }
    points
        .iter()
        .map(|p| keep.iter().map(|&(d, m, s)| (p[d] - m) / s).collect())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_pairs() {
        let pts = vec![
            vec![0.0, 0.0],
            vec![0.1, 0.0],
            vec![10.0, 10.0],
            vec![10.1, 10.0],
        ];
        let labels = dbscan(&pts, &DbscanParams::new(0.5, 2).unwrap());
        assert_eq!(
            labels,
            vec![
                Assignment::Cluster(0),
                Assignment::Cluster(0),
                Assignment::Cluster(1),
                Assignment::Cluster(1)
            ]
        );
    }

    #[test]
    fn lone_point_is_noise() {
        let labels = dbscan(&[vec![1.0]], &DbscanParams::default());
        assert_eq!(labels, vec![Assignment::Noise]);
    }

    #[test]
    fn identical_points_form_one_cluster() {
        let pts = vec![vec![3.0, 3.0]; 5];
        let labels = dbscan(&pts, &DbscanParams::default());
        assert!(labels.iter().all(|&l| l == Assignment::Cluster(0)));
    }

    #[test]
    fn min_pts_one_makes_every_point_core() {
        let pts = vec![vec![0.0], vec![5.0], vec![5.2]];
        let labels = dbscan(&pts, &DbscanParams::new(0.5, 1).unwrap());
        assert_eq!(
            labels,
            vec![
                Assignment::Cluster(0),
                Assignment::Cluster(1),
                Assignment::Cluster(1)
            ]
        );
    }

    #[test]
    fn border_point_joins_first_cluster() {
        // 0.65 is not core but lies within eps of a core point on each side
        let xs = [0.0, 0.1, 0.2, 0.3, 0.65, 1.0, 1.1, 1.2, 1.3];
        let params = DbscanParams::new(0.36, 4).unwrap();
        let pts: Vec<Vec<f64>> = xs.iter().map(|&x| vec![x]).collect();
        let labels = dbscan(&pts, &params);
        assert_eq!(labels[4], Assignment::Cluster(0));
        assert_eq!(labels[5], Assignment::Cluster(1));

        let rev: Vec<Vec<f64>> = xs.iter().rev().map(|&x| vec![x]).collect();
        let labels = dbscan(&rev, &params);
        assert_eq!(labels[4], Assignment::Cluster(0));
        assert_eq!(labels[5], Assignment::Cluster(1));
    }

    #[test]
    fn params_validation() {
        assert!(DbscanParams::new(0.0, 2).is_err());
        assert!(DbscanParams::new(f64::NAN, 2).is_err());
        assert!(DbscanParams::new(0.5, 0).is_err());
    }

    #[test]
    fn standardize_drops_constant_coordinates() {
        let pts = vec![vec![1.0, 5.0], vec![3.0, 5.0]];
        let z = standardize(&pts);
        assert_eq!(z, vec![vec![-1.0], vec![1.0]]);
        let flat = standardize(&[vec![2.0], vec![2.0]]);
        assert_eq!(flat, vec![Vec::<f64>::new(), Vec::new()]);
    }
}
