use crate::data::{DistanceMatrix, PairArrays};
use crate::error::{Error, Result};

/// All indicators use the strict inequality d < r. Radii that collide with
/// distance values are legal; the count simply excludes the tied pairs.
#[inline]
fn count_below(values: &[f64], r: f64) -> usize {
    values.iter().filter(|&&v| v < r).count()
}

/// Recurrence rate of the X marginal: (1/N)·#{k : Z_k < r}.
pub fn rr_x(pairs: &PairArrays, r: f64) -> f64 {
    count_below(&pairs.z, r) as f64 / pairs.len() as f64
}

/// Recurrence rate of the Y marginal: (1/N)·#{k : T_k < s}.
pub fn rr_y(pairs: &PairArrays, s: f64) -> f64 {
    count_below(&pairs.t, s) as f64 / pairs.len() as f64
}

/// Joint recurrence rate: (1/N)·#{k : Z_k < r and T_k < s}.
pub fn rr_joint(pairs: &PairArrays, r: f64, s: f64) -> f64 {
    let hits = pairs
        .z
        .iter()
        .zip(&pairs.t)
        .filter(|&(&z, &t)| z < r && t < s)
        .count();
    hits as f64 / pairs.len() as f64
}

/// The centered process E_n(r,s) = √n·(RR^{X,Y}(r,s) − RR^X(r)·RR^Y(s)).
pub fn en(pairs: &PairArrays, r: f64, s: f64) -> f64 {
    let n = pairs.n as f64;
    n.sqrt() * (rr_joint(pairs, r, s) - rr_x(pairs, r) * rr_y(pairs, s))
}

/// E_n evaluated on a grid. Values are bounded by √n in magnitude since both
/// recurrence terms live in [0,1].
#[derive(Debug, Clone)]
pub struct EnGrid {
    pub r_grid: Vec<f64>,
    pub s_grid: Vec<f64>,
    /// Row-major |r_grid| × |s_grid|.
    pub values: Vec<f64>,
}

impl EnGrid {
    pub fn value(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.s_grid.len() + j]
    }
}

fn check_grid(grid: &[f64], name: &'static str) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::InvalidParam { name: name.into(), reason: "empty grid".into() });
    }
    for w in grid.windows(2) {
        if !(w[0] < w[1]) {
            return Err(Error::InvalidParam {
                name: name.into(),
                reason: "grid must be strictly increasing".into(),
            });
        }
    }
    if grid[0] <= 0.0 {
        return Err(Error::InvalidParam { name: name.into(), reason: "radii must be positive".into() });
    }
    Ok(())
}

/// Index of the first sorted value ≥ x, i.e. #{v : v < x}.
#[inline]
fn lower_bound(sorted: &[f64], x: f64) -> usize {
    sorted.partition_point(|&v| v < x)
}

/// One sort per marginal plus a rank-compressed 2D histogram; no per-node
/// rescans. Marginal counts come from binary search, joint counts from an
/// inclusive 2D prefix sum over (first grid node > Z, first grid node > T).
pub fn en_grid(pairs: &PairArrays, r_grid: &[f64], s_grid: &[f64]) -> Result<EnGrid> {
    check_grid(r_grid, "r_grid")?;
    check_grid(s_grid, "s_grid")?;
    let nn = pairs.len() as f64;
    let sqrt_n = (pairs.n as f64).sqrt();

    let mut zs = pairs.z.clone();
    let mut ts = pairs.t.clone();
    zs.sort_unstable_by(f64::total_cmp);
    ts.sort_unstable_by(f64::total_cmp);
    let rx: Vec<f64> = r_grid.iter().map(|&r| lower_bound(&zs, r) as f64 / nn).collect();
    let ry: Vec<f64> = s_grid.iter().map(|&s| lower_bound(&ts, s) as f64 / nn).collect();

    // hist[a][b] counts pairs whose smallest covering node indices are (a,b);
    // a == |r_grid| means the pair is beyond every node and never counted.
    let (gr, gs) = (r_grid.len(), s_grid.len());
    let mut hist = vec![0u32; (gr + 1) * (gs + 1)];
    for (&z, &t) in pairs.z.iter().zip(&pairs.t) {
        let a = r_grid.partition_point(|&r| r <= z);
        let b = s_grid.partition_point(|&s| s <= t);
        hist[a * (gs + 1) + b] += 1;
    }
    // acc[b] rolls the inclusive 2D prefix sum forward one grid row at a time.
    let mut values = vec![0.0; gr * gs];
    let mut acc = vec![0u32; gs];
    for a in 0..gr {
        let mut row_sum = 0;
        for b in 0..gs {
            row_sum += hist[a * (gs + 1) + b];
            acc[b] += row_sum;
            values[a * gs + b] = sqrt_n * (acc[b] as f64 / nn - rx[a] * ry[b]);
        }
    }
    Ok(EnGrid { r_grid: r_grid.to_vec(), s_grid: s_grid.to_vec(), values })
}

const EN_PRIME_MAX_N: usize = 12;

/// The order-4 U-process of the approximation argument, by its literal
/// quadruple loop. A validation oracle: cost O(n⁴), gated to n ≤ 12.
pub fn en_prime(dx: &DistanceMatrix, dy: &DistanceMatrix, r: f64, s: f64) -> Result<f64> {
    let n = dx.n();
    if dy.n() != n {
        return Err(Error::SizeMismatch { x: n, y: dy.n() });
    }
    if n < 4 {
        return Err(Error::TooFewObservations { min: 4, got: n });
    }
    if n > EN_PRIME_MAX_N {
        return Err(Error::InvalidParam {
            name: "n".into(),
            reason: format!("quadruple-loop oracle is gated to n ≤ {EN_PRIME_MAX_N}"),
        });
    }
    let mut acc: i64 = 0;
    for i in 0..n {
        for j in 0..n {
            if j == i {
                continue;
            }
            let x_close = dx.get(i, j) < r;
            if !x_close {
                // Both indicators contain the same X event; the term is 0.
                continue;
            }
            let y_close_ij = dy.get(i, j) < s;
            for k in 0..n {
                if k == i || k == j {
                    continue;
                }
                for h in 0..n {
                    if h == i || h == j || h == k {
                        continue;
                    }
                    acc += y_close_ij as i64 - (dy.get(h, k) < s) as i64;
                }
            }
        }
    }
    let count = (n * (n - 1) * (n - 2) * (n - 3)) as f64;
    Ok((n as f64).sqrt() * acc as f64 / count)
}

/// Discrepancy H_n = E′_n − E_n; ok reports the one-sided envelope
/// 0 ≤ hn ≤ 4/√n within 1e−12 slack.
///
/// The flag is a report, not an invariant: the discrepancy has mean zero
/// over independent samples, so legitimate samples fall on either side of
/// zero. What always holds is the magnitude bound |hn| ≤ (4n−6)/(√n(n−1)),
/// which is what the module tests assert.
pub fn hn_check(dx: &DistanceMatrix, dy: &DistanceMatrix, r: f64, s: f64) -> Result<(f64, bool)> {
    let pairs = crate::data::pair_arrays(dx, dy)?;
    let hn = en_prime(dx, dy, r, s)? - en(&pairs, r, s);
    let bound = 4.0 / (dx.n() as f64).sqrt();
    Ok((hn, hn >= -1e-12 && hn <= bound + 1e-12))
}
