use crate::tensor::Tensor;

use super::{kmeans, laplacians, ncut_value, sym_eig, GroupAssignment, SimilarityGraph, SpectralError};

/// Largest graph accepted by [`brute_force_min_ncut`].
pub const BRUTE_FORCE_LIMIT: usize = 10;

/// Coordinates of each vertex in the span of the `k` smallest random-walk
/// Laplacian eigenvectors.
#[derive(Debug, Clone)]
pub struct SpectralEmbedding {
    /// [N×K]; column `j` is the eigenvector for `eigenvalues[j]`,
    /// rescaled to unit norm.
    pub vectors: Tensor,
    pub eigenvalues: Vec<f64>,
}

/// Eigenvectors of `L_rw = D⁻¹L` for the `k` smallest eigenvalues, obtained
/// from `L_sym` via `u = D^{-1/2} v`.
pub fn spectral_embedding(g: &SimilarityGraph, k: usize) -> Result<SpectralEmbedding, SpectralError> {
    let n = g.n();
    if k == 0 || k > n {
        return Err(SpectralError::InvalidK { k, n });
    }
    let lap = laplacians(g)?;
    let eig = sym_eig(&lap.symmetric)?;
    let mut vectors = vec![0.0; n * k];
    for j in 0..k {
        let col: Vec<f64> = (0..n)
            .map(|i| eig.vectors.at2(i, j) * lap.inv_sqrt_degrees[i])
            .collect();
        let norm = col.iter().map(|v| v * v).sum::<f64>().sqrt();
        for i in 0..n {
            vectors[i * k + j] = col[i] / norm;
        }
    }
    Ok(SpectralEmbedding {
        vectors: Tensor::from_parts(vec![n, k], vectors),
        eigenvalues: eig.values[..k].to_vec(),
    })
}

/// Normalized-cut spectral clustering into `k ≥ 2` nonempty groups.
pub fn spectral_cluster(g: &SimilarityGraph, k: usize, seed: u64) -> Result<GroupAssignment, SpectralError> {
    if k < 2 || k > g.n() {
        return Err(SpectralError::InvalidK { k, n: g.n() });
    }
    let emb = spectral_embedding(g, k)?;
    kmeans(&emb.vectors, k, seed)
}

/// Exact minimum Ncut over all partitions into exactly `k` nonempty groups.
/// Each partition is visited once, as its first-appearance labeling.
pub fn brute_force_min_ncut(g: &SimilarityGraph, k: usize) -> Result<(GroupAssignment, f64), SpectralError> {
    let n = g.n();
    if n > BRUTE_FORCE_LIMIT {
        return Err(SpectralError::TooLarge {
            n,
            limit: BRUTE_FORCE_LIMIT,
        });
    }
    if k == 0 || k > n {
        return Err(SpectralError::InvalidK { k, n });
    }
    let mut labels = vec![0usize; n];
    let mut best: Option<(Vec<usize>, f64)> = None;
    enumerate(&mut labels, 1, 1, k, &mut |labels| {
        let a = GroupAssignment::new(labels.to_vec(), k).expect("labels below k");
        // partitions isolating zero-degree vertices have no defined Ncut
        if let Ok(v) = ncut_value(g, &a) {
            if best.as_ref().is_none_or(|(_, b)| v < *b) {
                best = Some((labels.to_vec(), v));
            }
        }
    });
    let (labels, value) = best.ok_or(SpectralError::ZeroVolume(0))?;
    Ok((GroupAssignment::new(labels, k)?, value))
}

/// Restricted-growth strings with exactly `k` distinct labels.
fn enumerate(labels: &mut [usize], pos: usize, used: usize, k: usize, visit: &mut impl FnMut(&[usize])) {
    let n = labels.len();
    if pos == n {
        if used == k {
            visit(labels);
        }
        return;
    }
    // not enough positions left to introduce the missing labels
    if k - used > n - pos {
        return;
    }
    for l in 0..(used + 1).min(k) {
        labels[pos] = l;
        enumerate(labels, pos + 1, used.max(l + 1), k, visit);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn block_graph(blocks: usize, size: usize, across: f64) -> SimilarityGraph {
        let n = blocks * size;
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| {
                        if i == j {
                            0.0
                        } else if i / size == j / size {
                            1.0
                        } else {
                            across
                        }
                    })
                    .collect()
            })
            .collect();
        SimilarityGraph::from_rows(&rows).unwrap()
    }

    #[test]
    fn recovers_blocks() {
        let g = block_graph(3, 4, 1e-3);
        let a = spectral_cluster(&g, 3, 0).unwrap();
        let truth = GroupAssignment::new((0..12).map(|i| i / 4).collect(), 3).unwrap();
        assert!(a.same_partition(&truth));
    }

    #[test]
    fn disconnected_components_reach_zero() {
        let g = block_graph(2, 3, 0.0);
        let a = spectral_cluster(&g, 2, 1).unwrap();
        assert_eq!(ncut_value(&g, &a).unwrap(), 0.0);
        let (_, v) = brute_force_min_ncut(&g, 2).unwrap();
        assert_eq!(v, 0.0);
    }

    #[test]
    fn brute_force_path_graph() {
        let g = SimilarityGraph::from_rows(&[
            vec![0.0, 1.0, 0.0],
            vec![1.0, 0.0, 1.0],
            vec![0.0, 1.0, 0.0],
        ])
        .unwrap();
        let (a, v) = brute_force_min_ncut(&g, 2).unwrap();
        assert!((v - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(ncut_value(&g, &a).unwrap(), v);
    }

    #[test]
    fn enumeration_counts_stirling_numbers() {
        // S(5, 2) = 15, S(5, 3) = 25, S(6, 3) = 90
        for (n, k, expect) in [(5, 2, 15), (5, 3, 25), (6, 3, 90)] {
            let mut count = 0;
            let mut labels = vec![0; n];
            enumerate(&mut labels, 1, 1, k, &mut |_| count += 1);
            assert_eq!(count, expect, "S({n},{k})");
        }
    }

    #[test]
    fn brute_force_limits() {
        let g = block_graph(1, 11, 0.0);
        assert!(matches!(brute_force_min_ncut(&g, 2), Err(SpectralError::TooLarge { .. })));
        let g = block_graph(1, 3, 0.0);
        assert!(brute_force_min_ncut(&g, 4).is_err());
    }

    #[test]
    fn rejects_single_group() {
        let g = block_graph(2, 2, 0.5);
        assert!(spectral_cluster(&g, 1, 0).is_err());
    }
}
