use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Distance between two points of one marginal space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    /// |x − y| on scalars.
    Absolute,
    /// Euclidean norm on R^p; trajectories are points of R^length.
    Euclidean,
}

/// n paired observations with their metric choices. Points are dense real
/// vectors; scalars are vectors of dimension 1.
#[derive(Debug, Clone)]
pub struct PairedSample {
    pub xs: Vec<Vec<f64>>,
    pub ys: Vec<Vec<f64>>,
    pub metric_x: Metric,
    pub metric_y: Metric,
}

impl PairedSample {
    pub fn new(
        xs: Vec<Vec<f64>>,
        ys: Vec<Vec<f64>>,
        metric_x: Metric,
        metric_y: Metric,
    ) -> Result<Self> {
        if xs.len() != ys.len() {
            return Err(Error::SizeMismatch { x: xs.len(), y: ys.len() });
        }
        if xs.len() < 2 {
            return Err(Error::TooFewObservations { min: 2, got: xs.len() });
        }
        check_points(&xs)?;
        check_points(&ys)?;
        Ok(Self { xs, ys, metric_x, metric_y })
    }

    pub fn n(&self) -> usize {
        self.xs.len()
    }

    pub fn distance_matrices(&self) -> Result<(DistanceMatrix, DistanceMatrix)> {
        Ok((
            distance_matrix(&self.xs, self.metric_x)?,
            distance_matrix(&self.ys, self.metric_y)?,
        ))
    }
}

fn check_points(points: &[Vec<f64>]) -> Result<()> {
    let dim = points[0].len();
    for (index, p) in points.iter().enumerate() {
        if p.len() != dim {
            return Err(Error::DimensionMismatch { expected: dim, got: p.len() });
        }
        if p.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
    }
    if dim == 0 {
        return Err(Error::DimensionMismatch { expected: 1, got: 0 });
    }
    Ok(())
}

/// Symmetric nonnegative matrix with zero diagonal, stored row-major.
#[derive(Debug, Clone)]
pub struct DistanceMatrix {
    n: usize,
    d: Vec<f64>,
}

impl DistanceMatrix {
    /// Wraps a precomputed table, validating symmetry within `tol` and a zero
    /// diagonal. Entries must be finite and nonnegative.
    pub fn from_table(n: usize, d: Vec<f64>, tol: f64) -> Result<Self> {
        if d.len() != n * n {
            return Err(Error::BadDistanceTable {
                reason: format!("expected {} entries, got {}", n * n, d.len()),
            });
        }
        for i in 0..n {
            if d[i * n + i].abs() > tol {
                return Err(Error::BadDistanceTable {
                    reason: format!("nonzero diagonal at {i}"),
                });
            }
            for j in 0..n {
                let v = d[i * n + j];
                if !v.is_finite() || v < 0.0 {
                    return Err(Error::BadDistanceTable {
                        reason: format!("bad entry at ({i},{j})"),
                    });
                }
                if (v - d[j * n + i]).abs() > tol {
                    return Err(Error::BadDistanceTable {
                        reason: format!("asymmetry at ({i},{j})"),
                    });
                }
            }
        }
        Ok(Self { n, d })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.d[i * self.n + j]
    }
}

/// Pairwise distances for one marginal. Euclidean is the square root of the
/// coordinate-wise squared-difference sum; absolute requires dimension 1.
pub fn distance_matrix(points: &[Vec<f64>], metric: Metric) -> Result<DistanceMatrix> {
    if points.len() < 2 {
        return Err(Error::TooFewObservations { min: 2, got: points.len() });
    }
    check_points(points)?;
    let n = points.len();
    let dim = points[0].len();
    if metric == Metric::Absolute && dim != 1 {
        return Err(Error::DimensionMismatch { expected: 1, got: dim });
    }
    let mut d = vec![0.0; n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            let v = match metric {
                Metric::Absolute => (points[i][0] - points[j][0]).abs(),
                Metric::Euclidean => points[i]
                    .iter()
                    .zip(&points[j])
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt(),
            };
            d[i * n + j] = v;
            d[j * n + i] = v;
        }
    }
    Ok(DistanceMatrix { n, d })
}

/// The N = n(n−1) ordered-pair distances of both marginals under one shared
/// pair index, in row-major order over (i,j), i≠j. Everything downstream
/// consumes this layout; the order is stable and documented here.
#[derive(Debug, Clone)]
pub struct PairArrays {
    pub n: usize,
    pub pair_index: Vec<(u32, u32)>,
    pub z: Vec<f64>,
    pub t: Vec<f64>,
}

impl PairArrays {
    pub fn len(&self) -> usize {
        self.z.len()
    }

    pub fn is_empty(&self) -> bool {
        self.z.is_empty()
    }
}

/// Canonical pair enumeration: (0,1),(0,2),...,(1,0),(1,2),... Each unordered
/// pair appears twice, so every distance value occurs an even number of times.
pub fn pair_arrays(dx: &DistanceMatrix, dy: &DistanceMatrix) -> Result<PairArrays> {
    if dx.n != dy.n {
        return Err(Error::SizeMismatch { x: dx.n, y: dy.n });
    }
    let n = dx.n;
    let cap = n * (n - 1);
    let mut pair_index = Vec::with_capacity(cap);
    let mut z = Vec::with_capacity(cap);
    let mut t = Vec::with_capacity(cap);
    for i in 0..n {
        for j in 0..n {
            if i != j {
                pair_index.push((i as u32, j as u32));
                z.push(dx.get(i, j));
                t.push(dy.get(i, j));
            }
        }
    }
    Ok(PairArrays { n, pair_index, z, t })
}

/// Pair arrays for the resample (X_{σ(i)}, Y_i): the X side is re-indexed
/// through σ, the Y side keeps the identity pairing, nothing is recomputed.
pub fn repair_under_permutation(
    dx: &DistanceMatrix,
    dy: &DistanceMatrix,
    sigma: &[usize],
) -> Result<PairArrays> {
    if dx.n != dy.n {
        return Err(Error::SizeMismatch { x: dx.n, y: dy.n });
    }
    let n = dx.n;
    check_permutation(sigma, n)?;
    let cap = n * (n - 1);
    let mut pair_index = Vec::with_capacity(cap);
    let mut z = Vec::with_capacity(cap);
    let mut t = Vec::with_capacity(cap);
    for i in 0..n {
        for j in 0..n {
            if i != j {
                pair_index.push((i as u32, j as u32));
                z.push(dx.get(sigma[i], sigma[j]));
                t.push(dy.get(i, j));
            }
        }
    }
    Ok(PairArrays { n, pair_index, z, t })
}

/// Overwrites `out.z` in place for one permutation; the Y side and the pair
/// index are already correct. The permutation engine's hot path.
pub fn repair_z_into(dx: &DistanceMatrix, sigma: &[usize], out: &mut PairArrays) {
    debug_assert_eq!(sigma.len(), out.n);
    let mut k = 0;
    for i in 0..out.n {
        let si = sigma[i];
        for j in 0..out.n {
            if i != j {
                out.z[k] = dx.get(si, sigma[j]);
                k += 1;
            }
        }
    }
}

fn check_permutation(sigma: &[usize], n: usize) -> Result<()> {
    if sigma.len() != n {
        return Err(Error::InvalidPermutation { n });
    }
    let mut seen = vec![false; n];
    for &s in sigma {
        if s >= n || seen[s] {
            return Err(Error::InvalidPermutation { n });
        }
        seen[s] = true;
    }
    Ok(())
}
