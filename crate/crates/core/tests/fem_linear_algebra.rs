use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thermovar::fem::{factor_solve, LdltFactor, SymSparse};

fn random_symmetric(rng: &mut ChaCha8Rng, n: usize) -> Vec<Vec<f64>> {
    let mut a = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..=i {
            let v = rng.gen_range(-1.0..1.0);
            a[i][j] = v;
            a[j][i] = v;
        }
    }
    a
}

fn rel_residual(a: &[Vec<f64>], x: &[f64], b: &[f64]) -> f64 {
    let n = a.len();
    let mut r2 = 0.0;
    let mut b2 = 0.0;
    for i in 0..n {
        let ax: f64 = (0..n).map(|j| a[i][j] * x[j]).sum();
        r2 += (ax - b[i]).powi(2);
        b2 += b[i] * b[i];
    }
    (r2 / b2).sqrt()
}

#[test]
fn random_indefinite_200_matches_dense_reference() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for _ in 0..5 {
        let n = 200;
        let a = random_symmetric(&mut rng, n);
        let b: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let x = factor_solve(&SymSparse::from_dense(&a), &b).unwrap();
        assert!(rel_residual(&a, &x, &b) <= 1e-10);
        let oracle = DMatrix::from_fn(n, n, |i, j| a[i][j]).lu().solve(&DVector::from_vec(b.clone())).unwrap();
        let diff = (DVector::from_vec(x) - &oracle).norm() / oracle.norm();
        assert!(diff < 1e-8, "{diff}");
    }
}

#[test]
fn inertia_matches_dense_eigenvalues() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for n in [5, 17, 40] {
        let a = random_symmetric(&mut rng, n);
        let eig = DMatrix::from_fn(n, n, |i, j| a[i][j]).symmetric_eigenvalues();
        let neg = eig.iter().filter(|&&v| v < 0.0).count();
        let (pos, negf, zero) = LdltFactor::factor(&SymSparse::from_dense(&a)).unwrap().inertia();
        assert_eq!((pos, negf, zero), (n - neg, neg, 0));
    }
}

#[test]
fn banded_saddle_system_with_zero_diagonal_blocks() {
    // [K B; Bᵀ 0] interleaved per node, the layout used by the mixed fields
    let n_nodes = 60;
    let n = 2 * n_nodes;
    let mut a = vec![vec![0.0; n]; n];
    for p in 0..n_nodes {
        let (u, m) = (2 * p, 2 * p + 1);
        a[u][u] = 2.0;
        if p + 1 < n_nodes {
            a[u][u + 2] = -1.0;
            a[u + 2][u] = -1.0;
            a[m][u + 2] = 0.25;
            a[u + 2][m] = 0.25;
        }
        a[m][u] = 0.5;
        a[u][m] = 0.5;
    }
    let b: Vec<f64> = (0..n).map(|i| (i as f64 * 0.37).sin()).collect();
    let rows: Vec<Vec<usize>> = (0..n).map(|i| (0..=i).filter(|&j| a[i][j] != 0.0 || i == j).collect()).collect();
    let mut s = SymSparse::from_rows(n, rows);
    for i in 0..n {
        for j in 0..=i {
            if a[i][j] != 0.0 {
                s.add(i, j, a[i][j]);
            }
        }
    }
    let x = factor_solve(&s, &b).unwrap();
    assert!(rel_residual(&a, &x, &b) <= 1e-12);
    let (_, neg, _) = LdltFactor::factor(&s).unwrap().inertia();
    assert_eq!(neg, n_nodes);
}
