//! Classical (Torgerson) scaling of the code vectors and the string-shape
//! diagnostics read off the embedding: crossings of the polyline joining
//! consecutive units, and monotonicity along the first axis.

mod jacobi;

use std::io::Write;

pub use jacobi::{jacobi_eigen, SymmetricEigen};

use crate::error::{Error, Result};

/// Symmetric matrix of non-negative distances with a zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    d: Vec<Vec<f64>>,
}

const SYMMETRY_TOL: f64 = 1e-12;

impl DistanceMatrix {
    pub fn new(d: Vec<Vec<f64>>) -> Result<Self> {
        let n = d.len();
        for (i, row) in d.iter().enumerate() {
            if row.len() != n {
                return Err(Error::Config(format!(
                    "distance row {i} has {} entries, expected {n}",
                    row.len()
                )));
            }
            if row[i] != 0.0 {
                return Err(Error::Config(format!(
                    "distance diagonal ({i},{i}) is {}",
                    row[i]
                )));
            }
            for (j, &x) in row.iter().enumerate() {
                if !x.is_finite() || x < 0.0 {
                    return Err(Error::Config(format!(
                        "distance ({i},{j}) = {x} is not a finite non-negative number"
                    )));
                }
                let y = d[j][i];
                if (x - y).abs() > SYMMETRY_TOL * x.abs().max(y.abs()).max(1.0) {
                    return Err(Error::Config(format!(
                        "distance matrix not symmetric at ({i},{j})"
                    )));
                }
            }
        }
        Ok(Self { d })
    }

    pub fn len(&self) -> usize {
        self.d.len()
    }

    pub fn is_empty(&self) -> bool {
        self.d.is_empty()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.d[i][j]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.d
    }
}

pub fn pairwise_distances(vectors: &[Vec<f64>]) -> DistanceMatrix {
    let n = vectors.len();
    let mut d = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            let dist = vectors[i]
                .iter()
                .zip(&vectors[j])
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            d[i][j] = dist;
            d[j][i] = dist;
        }
    }
    DistanceMatrix { d }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MdsEmbedding {
    /// `coordinates[i]` holds point `i` on each retained axis.
    pub coordinates: Vec<Vec<f64>>,
    /// Retained eigenvalues, descending.
    pub eigenvalues: Vec<f64>,
}

impl MdsEmbedding {
    pub fn dims(&self) -> usize {
        self.eigenvalues.len()
    }

    /// Planar position of point `i`; the second coordinate is 0 for a 1-D embedding.
    pub fn point(&self, i: usize) -> (f64, f64) {
        let c = &self.coordinates[i];
        (c[0], c.get(1).copied().unwrap_or(0.0))
    }

    /// Writes `unit,x,y`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["unit", "x", "y"])?;
        for i in 0..self.coordinates.len() {
            let (x, y) = self.point(i);
            w.write_record([i.to_string(), x.to_string(), y.to_string()])?;
        }
        w.flush().map_err(|e| Error::io("<mds csv>", e))?;
        Ok(())
    }
}

/// Double-centres the squared distances and keeps the top `dims` eigenpairs.
/// Each axis is oriented so that the first point does not exceed the last.
pub fn classical_mds(dist: &DistanceMatrix, dims: usize) -> Result<MdsEmbedding> {
    let n = dist.len();
    if !(1..=2).contains(&dims) {
        return Err(Error::Config(format!(
            "MDS supports 1 or 2 dimensions, got {dims}"
        )));
    }
    if n < dims + 1 {
        return Err(Error::Config(format!(
            "{n} points are too few for a {dims}-D embedding"
        )));
    }
    let sq: Vec<Vec<f64>> = dist
        .rows()
        .iter()
        .map(|r| r.iter().map(|x| x * x).collect())
        .collect();
    let row_mean: Vec<f64> = sq
        .iter()
        .map(|r| r.iter().sum::<f64>() / n as f64)
        .collect();
    let grand = row_mean.iter().sum::<f64>() / n as f64;
    let b: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| -0.5 * (sq[i][j] - row_mean[i] - row_mean[j] + grand))
                .collect()
        })
        .collect();

    let eig = jacobi_eigen(&b);
    let scale = eig.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if eig.values.iter().any(|&v| v < -1e-9 * scale.max(1e-300)) {
        log::warn!("distance matrix is not Euclidean; negative eigenvalues clamped to zero");
    }

    let mut coordinates = vec![Vec::with_capacity(dims); n];
    let mut eigenvalues = Vec::with_capacity(dims);
    for k in 0..dims {
        let lambda = eig.values[k];
        let root = lambda.max(0.0).sqrt();
        let mut axis: Vec<f64> = eig.vectors[k].iter().map(|v| v * root).collect();
        if axis[0] > axis[n - 1] {
            axis.iter_mut().for_each(|x| *x = -*x);
        }
        for (c, x) in coordinates.iter_mut().zip(axis) {
            c.push(x);
        }
        eigenvalues.push(lambda);
    }
    Ok(MdsEmbedding {
        coordinates,
        eigenvalues,
    })
}

fn orientation(a: (f64, f64), b: (f64, f64), c: (f64, f64)) -> f64 {
    (b.0 - a.0) * (c.1 - a.1) - (b.1 - a.1) * (c.0 - a.0)
}

fn properly_intersect(p1: (f64, f64), p2: (f64, f64), q1: (f64, f64), q2: (f64, f64)) -> bool {
    let d1 = orientation(q1, q2, p1);
    let d2 = orientation(q1, q2, p2);
    let d3 = orientation(p1, p2, q1);
    let d4 = orientation(p1, p2, q2);
    d1 * d2 < 0.0 && d3 * d4 < 0.0
}

/// Number of pairs of non-adjacent polyline segments that cross.
pub fn crossing_count(embedding: &MdsEmbedding, order: &[usize]) -> usize {
    let pts: Vec<(f64, f64)> = order.iter().map(|&i| embedding.point(i)).collect();
    let segs = pts.len().saturating_sub(1);
    let mut count = 0;
    for i in 0..segs {
        for j in i + 2..segs {
            if properly_intersect(pts[i], pts[i + 1], pts[j], pts[j + 1]) {
                count += 1;
            }
        }
    }
    count
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Monotonicity {
    /// First-axis coordinates strictly increase or strictly decrease along the order.
    pub monotone: bool,
    /// Spearman correlation between position in the order and first-axis rank.
    pub spearman: f64,
}

fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut ranks = vec![0.0; xs.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && xs[idx[j + 1]] == xs[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    if va == 0.0 || vb == 0.0 {
        return 0.0;
    }
    cov / (va * vb).sqrt()
}

pub fn ordering_monotone(embedding: &MdsEmbedding, order: &[usize]) -> Monotonicity {
    let xs: Vec<f64> = order.iter().map(|&i| embedding.point(i).0).collect();
    if xs.len() < 2 {
        return Monotonicity {
            monotone: true,
            spearman: 1.0,
        };
    }
    let increasing = xs.windows(2).all(|w| w[0] < w[1]);
    let decreasing = xs.windows(2).all(|w| w[0] > w[1]);
    let positions: Vec<f64> = (0..xs.len()).map(|i| i as f64).collect();
    Monotonicity {
        monotone: increasing || decreasing,
        spearman: pearson(&positions, &average_ranks(&xs)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn embedding_of(points: &[(f64, f64)]) -> MdsEmbedding {
        MdsEmbedding {
            coordinates: points.iter().map(|&(x, y)| vec![x, y]).collect(),
            eigenvalues: vec![1.0, 1.0],
        }
    }

    #[test]
    fn distances() {
        let same = pairwise_distances(&vec![vec![0.2, 0.4]; 3]);
        assert!(same.rows().iter().flatten().all(|&x| x == 0.0));
        let e = pairwise_distances(&[vec![1.0, 0.0], vec![0.0, 1.0]]);
        assert_eq!(e.get(0, 1), 2f64.sqrt());
        let v = [
            vec![0.1, 0.5, 0.9],
            vec![0.3, 0.2, 0.0],
            vec![1.0, 1.0, 0.25],
        ];
        let d = pairwise_distances(&v);
        for i in 0..3 {
            for j in 0..3 {
                let hand = ((v[i][0] - v[j][0]).powi(2)
                    + (v[i][1] - v[j][1]).powi(2)
                    + (v[i][2] - v[j][2]).powi(2))
                .sqrt();
                assert!((d.get(i, j) - hand).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn rejects_asymmetric() {
        assert!(DistanceMatrix::new(vec![vec![0.0, 1.0], vec![2.0, 0.0]]).is_err());
        assert!(DistanceMatrix::new(vec![vec![0.0, -1.0], vec![-1.0, 0.0]]).is_err());
        assert!(DistanceMatrix::new(vec![vec![1.0, 1.0], vec![1.0, 0.0]]).is_err());
    }

    #[test]
    fn collinear_triple() {
        let d = DistanceMatrix::new(vec![
            vec![0.0, 1.0, 2.0],
            vec![1.0, 0.0, 1.0],
            vec![2.0, 1.0, 0.0],
        ])
        .unwrap();
        let e = classical_mds(&d, 2).unwrap();
        // B = -1/2 J D² J has eigenvalue 2 on (-1, 0, 1)/√2, so x = (-1, 0, 1)
        for (c, want) in e.coordinates.iter().zip([-1.0, 0.0, 1.0]) {
            assert!((c[0] - want).abs() < 1e-9);
        }
        assert!((e.eigenvalues[0] - 2.0).abs() < 1e-12);
        assert!(e.eigenvalues[1].abs() < 1e-9);
    }

    #[test]
    fn zero_distances() {
        let d = DistanceMatrix::new(vec![vec![0.0; 4]; 4]).unwrap();
        let e = classical_mds(&d, 2).unwrap();
        assert!(e.coordinates.iter().flatten().all(|&x| x == 0.0));
    }

    #[test]
    fn unit_square() {
        let pts = [
            vec![0.0, 0.0],
            vec![1.0, 0.0],
            vec![1.0, 1.0],
            vec![0.0, 1.0],
        ];
        let d = pairwise_distances(&pts);
        let e = classical_mds(&d, 2).unwrap();
        assert!((e.eigenvalues[0] - e.eigenvalues[1]).abs() < 1e-12);
        let back = pairwise_distances(&e.coordinates);
        for i in 0..4 {
            for j in 0..4 {
                assert!((back.get(i, j) - d.get(i, j)).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn too_few_points() {
        let d = DistanceMatrix::new(vec![vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        assert!(classical_mds(&d, 2).is_err());
        assert!(classical_mds(&d, 1).is_ok());
        assert!(classical_mds(&d, 3).is_err());
    }

    #[test]
    fn crossings() {
        let square = embedding_of(&[(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)]);
        assert_eq!(crossing_count(&square, &[0, 1, 2, 3]), 0);
        // (0,0) → (1,1) → (1,0) → (0,1): first and last segments cross at the centre
        assert_eq!(crossing_count(&square, &[0, 2, 1, 3]), 1);
        assert_eq!(crossing_count(&square, &[0, 1]), 0);
    }

    #[test]
    fn monotone_orders() {
        let line = embedding_of(&[(0.0, 0.0), (1.0, 0.5), (2.0, 0.0), (3.0, 1.0)]);
        let m = ordering_monotone(&line, &[0, 1, 2, 3]);
        assert!(m.monotone);
        assert!((m.spearman - 1.0).abs() < 1e-15);
        let r = ordering_monotone(&line, &[3, 2, 1, 0]);
        assert!(r.monotone);
        assert!((r.spearman + 1.0).abs() < 1e-15);
        let zig = embedding_of(&[(0.0, 0.0), (2.0, 0.0), (1.0, 0.0), (3.0, 0.0)]);
        let z = ordering_monotone(&zig, &[0, 1, 2, 3]);
        assert!(!z.monotone);
        assert!(z.spearman.abs() < 1.0);
    }

    proptest::proptest! {
        #[test]
        fn planar_distances_reconstructed(pts in proptest::collection::vec((-10.0f64..10.0, -10.0f64..10.0), 3..12)) {
            let pts: Vec<Vec<f64>> = pts.into_iter().map(|(x, y)| vec![x, y]).collect();
            let d = pairwise_distances(&pts);
            let e = classical_mds(&d, 2).unwrap();
            let back = pairwise_distances(&e.coordinates);
            let scale = d.rows().iter().flatten().fold(0.0f64, |m, &x| m.max(x));
            for i in 0..pts.len() {
                for j in 0..pts.len() {
                    proptest::prop_assert!((back.get(i, j) - d.get(i, j)).abs() <= 1e-9 * scale.max(1.0));
                }
            }
        }

        #[test]
        fn crossings_invariant_under_similarity(
            pts in proptest::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 2..9),
            angle in 0.0f64..std::f64::consts::TAU, scale in 0.1f64..10.0, dx in -3.0f64..3.0, dy in -3.0f64..3.0,
        ) {
            let base = embedding_of(&pts);
            let (s, c) = angle.sin_cos();
            let moved: Vec<(f64, f64)> = pts.iter().map(|&(x, y)| (scale * (c * x - s * y) + dx, scale * (s * x + c * y) + dy)).collect();
            let order: Vec<usize> = (0..pts.len()).collect();
            proptest::prop_assert_eq!(crossing_count(&base, &order), crossing_count(&embedding_of(&moved), &order));
        }

        #[test]
        fn permutation_equivariance(pts in proptest::collection::vec((-10.0f64..10.0, -10.0f64..10.0), 4..8), rot in 1usize..7) {
            let pts: Vec<Vec<f64>> = pts.into_iter().map(|(x, y)| vec![x, y]).collect();
            let n = pts.len();
            let perm: Vec<usize> = (0..n).map(|i| (i + rot) % n).collect();
            let permuted: Vec<Vec<f64>> = perm.iter().map(|&i| pts[i].clone()).collect();
            let e = classical_mds(&pairwise_distances(&pts), 2).unwrap();
            let f = classical_mds(&pairwise_distances(&permuted), 2).unwrap();
            // skip near-degenerate spectra, where axes are not unique
            proptest::prop_assume!((e.eigenvalues[0] - e.eigenvalues[1]).abs() > 1e-6 * e.eigenvalues[0]);
            for axis in 0..2 {
                let err = |sign: f64| perm.iter().enumerate()
                    .map(|(k, &i)| (f.coordinates[k][axis] - sign * e.coordinates[i][axis]).abs())
                    .fold(0.0f64, f64::max);
                proptest::prop_assert!(err(1.0).min(err(-1.0)) < 1e-7);
            }
        }
    }
}
