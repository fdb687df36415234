use gcnn_core::model::{build_model, Checkpoint, Family, Grouping, ModelSpec, StageSpec};
use gcnn_core::spectral::{ncut_value, sym_eig, GroupAssignment, SimilarityGraph};
use gcnn_core::tensor::{Padding, Tape, Tensor};
use gcnn_core::trainer::{fit_ridge, scores};
use gcnn_core::tsdata::{load_csv, read_csv, repair_gaps, standardize, write_csv, CsvSchema, TimeSeriesDataset};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn symmetric(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut a = vec![0.0; n * n];
    for i in 0..n {
        for j in i..n {
            let v = rng.gen_range(-1.0..1.0);
            a[i * n + j] = v;
            a[j * n + i] = v;
        }
    }
    a
}

fn weights(n: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut w = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            let v = rng.gen_range(0.1..1.0);
            w[i][j] = v;
            w[j][i] = v;
        }
    }
    w
}

#[test]
fn eigenvalues_match_nalgebra() {
    for (n, seed) in [(3, 1), (8, 2), (15, 3), (30, 4)] {
        let a = symmetric(n, seed);
        let ours = sym_eig(&Tensor::new(&[n, n], a.clone()).unwrap()).unwrap();
        let mut theirs: Vec<f64> = DMatrix::from_row_slice(n, n, &a).symmetric_eigen().eigenvalues.iter().copied().collect();
        theirs.sort_by(f64::total_cmp);
        for (x, y) in ours.values.iter().zip(&theirs) {
            assert!((x - y).abs() < 1e-10, "n={n}: {x} vs {y}");
        }
    }
}

/// Closed-form ridge with an unpenalized intercept via centered data.
fn oracle_ridge(x: &[Vec<f64>], y: &[f64], lambda: f64) -> (Vec<f64>, f64) {
    let (n, p) = (x.len(), x[0].len());
    let xm: Vec<f64> = (0..p).map(|j| x.iter().map(|r| r[j]).sum::<f64>() / n as f64).collect();
    let ym = y.iter().sum::<f64>() / n as f64;
    let xc = DMatrix::from_fn(n, p, |i, j| x[i][j] - xm[j]);
    let yc = DVector::from_fn(n, |i, _| y[i] - ym);
    let lhs = xc.transpose() * &xc + DMatrix::identity(p, p) * lambda;
    let w = lhs.lu().solve(&(xc.transpose() * yc)).unwrap();
    let b = ym - w.iter().zip(&xm).map(|(a, b)| a * b).sum::<f64>();
    (w.iter().copied().collect(), b)
}

#[test]
fn ridge_matches_nalgebra_normal_equations() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for (n, p, lambda) in [(30, 4, 0.0), (30, 4, 2.5), (12, 11, 0.1), (8, 20, 1.0)] {
        let x: Vec<Vec<f64>> = (0..n).map(|_| (0..p).map(|_| rng.gen_range(-2.0..2.0)).collect()).collect();
        let y: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let fit = fit_ridge(&x, &y, lambda).unwrap();
        let (w, b) = oracle_ridge(&x, &y, lambda);
        for (a, o) in fit.weights.iter().zip(&w) {
            assert!((a - o).abs() < 1e-8, "n={n} p={p}: {a} vs {o}");
        }
        assert!((fit.intercept - b).abs() < 1e-8);
    }
}

#[test]
fn csv_round_trips_through_a_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("series.csv");
    let text = "date,a,b\n2021-03-01,1.5,\n2021-03-02,2.25,7\n2021-03-03,,8\n";
    let data = read_csv(text.as_bytes(), &CsvSchema::default()).unwrap();
    write_csv(std::fs::File::create(&path).unwrap(), &data).unwrap();
    assert_eq!(load_csv(&path, &CsvSchema::default()).unwrap(), data);
}

#[test]
fn checkpoint_round_trips_through_a_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.json");
    let mut spec = ModelSpec::new(5, 16, Grouping::Coeff, 2, 3, vec![4]);
    spec.family = Family::Rcnn;
    spec.recurrent_stages = 1;
    spec.stages = vec![StageSpec { channels: 3, pool: 1 }, StageSpec { channels: 3, pool: 4 }];
    let model = build_model(&spec, None, 3).unwrap();
    Checkpoint::from_model(&model, "abc").write(std::fs::File::create(&path).unwrap()).unwrap();
    let back = Checkpoint::read(std::fs::File::open(&path).unwrap()).unwrap().to_model().unwrap();
    assert_eq!(back, model);
}

fn gappy(len: usize, seed: u64) -> TimeSeriesDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut text = String::from("t,a,b,c\n");
    for t in 0..len {
        text.push_str(&t.to_string());
        for _ in 0..3 {
            let interior = t > 0 && t + 1 < len;
            if interior && rng.gen_bool(0.3) {
                text.push(',');
            } else {
                text.push_str(&format!(",{}", rng.gen_range(-5.0..5.0)));
            }
        }
        text.push('\n');
    }
    read_csv(text.as_bytes(), &CsvSchema::default()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn ncut_is_scale_invariant(n in 3usize..8, seed in any::<u64>(), alpha in 0.01f64..100.0) {
        let g = SimilarityGraph::from_rows(&weights(n, seed)).unwrap();
        let labels: Vec<usize> = (0..n).map(|i| i % 2).collect();
        let a = GroupAssignment::new(labels, 2).unwrap();
        let base = ncut_value(&g, &a).unwrap();
        let scaled = ncut_value(&g.scaled(alpha).unwrap(), &a).unwrap();
        prop_assert!((base - scaled).abs() < 1e-12);
    }

    #[test]
    fn ncut_ignores_group_names(n in 3usize..8, seed in any::<u64>(), k in 2usize..4) {
        let g = SimilarityGraph::from_rows(&weights(n, seed)).unwrap();
        let k = k.min(n);
        let labels: Vec<usize> = (0..n).map(|i| i % k).collect();
        let renamed: Vec<usize> = labels.iter().map(|l| k - 1 - l).collect();
        let a = GroupAssignment::new(labels, k).unwrap();
        let b = GroupAssignment::new(renamed, k).unwrap();
        prop_assert!(a.same_partition(&b));
        prop_assert!((ncut_value(&g, &a).unwrap() - ncut_value(&g, &b).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn repair_is_idempotent(len in 5usize..60, seed in any::<u64>(), cap in 1usize..4) {
        let raw = gappy(len, seed);
        if let Ok((fixed, _)) = repair_gaps(&raw, cap) {
            let (again, report) = repair_gaps(&fixed, cap).unwrap();
            prop_assert_eq!(again, fixed);
            prop_assert!(report.fills.is_empty() && report.drops.is_empty());
        }
    }

    #[test]
    fn standardized_training_range_has_unit_spread(len in 6usize..50, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let values: Vec<Vec<f64>> = (0..3).map(|_| (0..len).map(|_| rng.gen_range(-3.0..3.0)).collect()).collect();
        let data = TimeSeriesDataset::from_series(vec!["a".into(), "b".into(), "c".into()], values).unwrap();
        let end = len * 2 / 3;
        let (out, _) = standardize(&data, 0..end).unwrap();
        for i in 0..out.n_series() {
            let s = &out.series(i)[..end];
            let mean = s.iter().sum::<f64>() / end as f64;
            let var = s.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / end as f64;
            prop_assert!(mean.abs() < 1e-12 && (var - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn srmse_is_scale_invariant(seed in any::<u64>(), c in 0.01f64..100.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let t: Vec<f64> = (0..20).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let y: Vec<f64> = (0..20).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let base = scores(&t, &y).unwrap().srmse.unwrap();
        let tc: Vec<f64> = t.iter().map(|v| v * c).collect();
        let yc: Vec<f64> = y.iter().map(|v| v * c).collect();
        prop_assert!((base - scores(&tc, &yc).unwrap().srmse.unwrap()).abs() < 1e-10);
    }

    #[test]
    fn conv_and_pool_widths(w in 1usize..40, kw in 1usize..6, pool in 1usize..5) {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::zeros(&[2, w]));
        let k = tape.constant(Tensor::zeros(&[3, 2, kw]));
        let same = tape.conv1d(x, k, None, Padding::Same).unwrap();
        prop_assert_eq!(tape.value(same).shape(), &[3, w]);
        if kw <= w {
            let valid = tape.conv1d(x, k, None, Padding::Valid).unwrap();
            prop_assert_eq!(tape.value(valid).shape(), &[3, w - kw + 1]);
        }
        if pool <= w {
            let p = tape.maxpool1d(x, pool, pool).unwrap();
            prop_assert_eq!(tape.value(p).shape(), &[2, (w - pool) / pool + 1]);
        }
    }
}
