//! Cyclic Jacobi eigensolver for small dense symmetric matrices.

/// Eigenpairs sorted by descending eigenvalue; `vectors[k]` pairs with `values[k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricEigen {
    pub values: Vec<f64>,
    pub vectors: Vec<Vec<f64>>,
    pub sweeps: usize,
}

const MAX_SWEEPS: usize = 100;
const TOLERANCE: f64 = 1e-12;

fn off_diagonal_norm(a: &[Vec<f64>]) -> f64 {
    let mut s = 0.0;
    for (i, row) in a.iter().enumerate() {
        for (j, &x) in row.iter().enumerate() {
            if i != j {
                s += x * x;
            }
        }
    }
    s.sqrt()
}

/// Rotates pairs `(p, q)` in row-major cyclic order until the off-diagonal
/// Frobenius norm falls below `1e-12` times the matrix norm.
pub fn jacobi_eigen(matrix: &[Vec<f64>]) -> SymmetricEigen {
    let n = matrix.len();
    let mut a: Vec<Vec<f64>> = matrix.to_vec();
    let mut v: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();
    let scale = a.iter().flatten().map(|x| x * x).sum::<f64>().sqrt();
    let target = TOLERANCE * scale.max(f64::MIN_POSITIVE);

    let mut sweeps = 0;
    while sweeps < MAX_SWEEPS && off_diagonal_norm(&a) > target {
        sweeps += 1;
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p][q];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for row in a.iter_mut() {
                    let (akp, akq) = (row[p], row[q]);
                    row[p] = c * akp - s * akq;
                    row[q] = s * akp + c * akq;
                }
                let (upper, lower) = a.split_at_mut(q);
                for (apk, aqk) in upper[p].iter_mut().zip(lower[0].iter_mut()) {
                    let (x, y) = (*apk, *aqk);
                    *apk = c * x - s * y;
                    *aqk = s * x + c * y;
                }
                for row in v.iter_mut() {
                    let vp = row[p];
                    let vq = row[q];
                    row[p] = c * vp - s * vq;
                    row[q] = s * vp + c * vq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[j][j].total_cmp(&a[i][i]).then(i.cmp(&j)));
    SymmetricEigen {
        values: order.iter().map(|&i| a[i][i]).collect(),
        vectors: order
            .iter()
            .map(|&i| v.iter().map(|row| row[i]).collect())
            .collect(),
        sweeps,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mat_vec(m: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
        m.iter()
            .map(|r| r.iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }

    #[test]
    fn diagonal_input() {
        let e = jacobi_eigen(&[vec![1.0, 0.0], vec![0.0, 3.0]]);
        assert_eq!(e.values, vec![3.0, 1.0]);
        assert_eq!(e.sweeps, 0);
    }

    #[test]
    fn two_by_two() {
        // eigenvalues of [[2,1],[1,2]] are 3 and 1
        let e = jacobi_eigen(&[vec![2.0, 1.0], vec![1.0, 2.0]]);
        assert!((e.values[0] - 3.0).abs() < 1e-14);
        assert!((e.values[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn residuals_and_orthonormality() {
        let n = 8;
        let m: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| ((i * 7 + j * 3) as f64).sin() + ((j * 7 + i * 3) as f64).sin())
                    .collect()
            })
            .collect();
        let e = jacobi_eigen(&m);
        for (lambda, vec) in e.values.iter().zip(&e.vectors) {
            let mv = mat_vec(&m, vec);
            for (a, b) in mv.iter().zip(vec) {
                assert!((a - lambda * b).abs() < 1e-10);
            }
        }
        for i in 0..n {
            for j in 0..n {
                let dot: f64 = e.vectors[i]
                    .iter()
                    .zip(&e.vectors[j])
                    .map(|(a, b)| a * b)
                    .sum();
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((dot - want).abs() < 1e-12);
            }
        }
        assert!(e.values.windows(2).all(|w| w[0] >= w[1]));
        let trace: f64 = (0..n).map(|i| m[i][i]).sum();
        assert!((trace - e.values.iter().sum::<f64>()).abs() < 1e-10);
    }
}
