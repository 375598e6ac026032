//! Dense and brute-force reference implementations.

#![allow(dead_code)]

use std::collections::BTreeSet;

use bitype::embed::{cosine, EmbeddingTable};
use bitype::nn::Matrix;

/// `D̃^{-1/2} (A + I) D̃^{-1/2}` computed densely.
pub fn dense_normalize(a: &Matrix) -> Matrix {
    let n = a.nrows();
    let tilde = a + &Matrix::eye(n);
    let d: Vec<f64> = (0..n).map(|i| tilde.row(i).sum()).collect();
    Matrix::from_shape_fn((n, n), |(i, j)| tilde[[i, j]] / (d[i] * d[j]).sqrt())
}

/// Threshold refinement over all pairs without a cap.
pub fn refine_oracle(
    n: usize,
    edges: &BTreeSet<(usize, usize)>,
    table: &EmbeddingTable,
    t_high: f64,
    t_low: f64,
) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            let s = cosine(table.get(i).unwrap(), table.get(j).unwrap()).unwrap();
            let keep = if edges.contains(&(i, j)) {
                s >= t_low
            } else {
                s > t_high
            };
            if keep {
                out.push((i, j));
            }
        }
    }
    out
}

/// All eigenvalues of a symmetric matrix by cyclic Jacobi rotation,
/// descending.
pub fn jacobi_eigenvalues(m: &Matrix) -> Vec<f64> {
    let n = m.nrows();
    let mut a = m.clone();
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[[i, j]] * a[[i, j]])
            .sum();
        if off < 1e-22 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[[p, q]].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[[q, q]] - a[[p, p]]) / (2.0 * a[[p, q]]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[[k, p]], a[[k, q]]);
                    a[[k, p]] = c * akp - s * akq;
                    a[[k, q]] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[[p, k]], a[[q, k]]);
                    a[[p, k]] = c * apk - s * aqk;
                    a[[q, k]] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut ev: Vec<f64> = (0..n).map(|i| a[[i, i]]).collect();
    ev.sort_by(|x, y| y.partial_cmp(x).unwrap());
    ev
}
