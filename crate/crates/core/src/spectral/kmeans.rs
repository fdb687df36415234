use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::tensor::Tensor;

use super::{GroupAssignment, SpectralError};

const MAX_ITERATIONS: usize = 300;

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(point: &[f64], centers: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, center) in centers.iter().enumerate() {
        let d = sq_dist(point, center);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

/// Lloyd's algorithm on the rows of `points` [N×D].
///
/// Seeding picks a random first row, then repeatedly the row farthest from
/// all chosen centers (lowest index on ties). Empty clusters take the point
/// farthest from its own center among clusters with more than one member.
pub fn kmeans(points: &Tensor, k: usize, seed: u64) -> Result<GroupAssignment, SpectralError> {
    let (n, d) = match points.shape() {
        [n, d] => (*n, *d),
        s => return Err(SpectralError::NotSquare(s.to_vec())),
    };
    if k == 0 || n < k {
        return Err(SpectralError::InvalidK { k, n });
    }
    let rows: Vec<&[f64]> = points.data().chunks(d).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centers: Vec<Vec<f64>> = vec![rows[rng.gen_range(0..n)].to_vec()];
    let mut min_d: Vec<f64> = rows.iter().map(|r| sq_dist(r, &centers[0])).collect();
    while centers.len() < k {
        let mut far = 0;
        for i in 1..n {
            if min_d[i] > min_d[far] {
                far = i;
            }
        }
        let newest = rows[far].to_vec();
        for (i, r) in rows.iter().enumerate() {
            min_d[i] = min_d[i].min(sq_dist(r, &newest));
        }
        centers.push(newest);
    }

    let mut labels = vec![usize::MAX; n];
    for _ in 0..MAX_ITERATIONS {
        let mut next: Vec<usize> = rows.iter().map(|r| nearest(r, &centers).0).collect();
        repair_empty(&rows, &mut next, &mut centers);
        if next == labels {
            break;
        }
        labels = next;
        centers = centroids(&rows, &labels, k, d);
    }
    GroupAssignment::complete(labels, k)
}

fn centroids(rows: &[&[f64]], labels: &[usize], k: usize, d: usize) -> Vec<Vec<f64>> {
    let mut sums = vec![vec![0.0; d]; k];
    let mut counts = vec![0usize; k];
    for (r, &l) in rows.iter().zip(labels) {
        counts[l] += 1;
        for (s, v) in sums[l].iter_mut().zip(r.iter()) {
            *s += v;
        }
    }
    for (s, &c) in sums.iter_mut().zip(&counts) {
        for v in s.iter_mut() {
            *v /= c as f64;
        }
    }
    sums
}

fn repair_empty(rows: &[&[f64]], labels: &mut [usize], centers: &mut [Vec<f64>]) {
    let k = centers.len();
    loop {
        let mut counts = vec![0usize; k];
        for &l in labels.iter() {
            counts[l] += 1;
        }
        let Some(empty) = counts.iter().position(|&c| c == 0) else {
            return;
        };
        let mut far: Option<(usize, f64)> = None;
        for (i, r) in rows.iter().enumerate() {
            if counts[labels[i]] < 2 {
                continue;
            }
            let dist = sq_dist(r, &centers[labels[i]]);
            if far.is_none_or(|(_, best)| dist > best) {
                far = Some((i, dist));
            }
        }
        // n ≥ k guarantees a donor cluster exists
        let (i, _) = far.expect("a cluster with two or more members");
        labels[i] = empty;
        centers[empty] = rows[i].to_vec();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pts(rows: &[[f64; 2]]) -> Tensor {
        Tensor::new(&[rows.len(), 2], rows.iter().flatten().copied().collect()).unwrap()
    }

    #[test]
    fn single_group() {
        let p = pts(&[[0.0, 0.0], [1.0, 5.0], [3.0, -2.0]]);
        let a = kmeans(&p, 1, 0).unwrap();
        assert_eq!(a.labels(), &[0, 0, 0]);
    }

    #[test]
    fn separated_blobs() {
        let mut rows = Vec::new();
        for i in 0..10 {
            let e = (i as f64) * 0.01;
            rows.push([e, -e]);
            rows.push([100.0 + e, 100.0 - e]);
        }
        let truth: Vec<usize> = (0..20).map(|i| i % 2).collect();
        for seed in 0..5 {
            let a = kmeans(&pts(&rows), 2, seed).unwrap();
            let t = GroupAssignment::new(truth.clone(), 2).unwrap();
            assert!(a.same_partition(&t));
        }
    }

    #[test]
    fn k_equals_n_and_duplicates() {
        let p = pts(&[[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [5.0, 5.0]]);
        let a = kmeans(&p, 4, 7).unwrap();
        assert_eq!(a.group_sizes(), vec![1; 4]);

        let dup = pts(&[[1.0, 1.0]; 3]);
        let a = kmeans(&dup, 3, 1).unwrap();
        assert_eq!(a.group_sizes(), vec![1; 3]);
    }

    #[test]
    fn too_many_groups() {
        let p = pts(&[[0.0, 0.0]]);
        assert!(matches!(kmeans(&p, 2, 0), Err(SpectralError::InvalidK { .. })));
    }

    #[test]
    fn deterministic() {
        let rows: Vec<[f64; 2]> = (0..30).map(|i| [(i * 37 % 11) as f64, (i * 13 % 7) as f64]).collect();
        let a = kmeans(&pts(&rows), 3, 42).unwrap();
        let b = kmeans(&pts(&rows), 3, 42).unwrap();
        assert_eq!(a, b);
    }
}
