use serde::{Deserialize, Serialize};

use crate::data::PairArrays;
use crate::error::{Error, Result};
use crate::fenwick::Fenwick;
use crate::recurrence::{en, rr_joint, rr_x, rr_y};
use crate::weights::WeightSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StatKind {
    Cvm,
    Sup,
}

/// A statistic evaluation. For the integral form the A/B/C decomposition is
/// kept so diagnostics can verify t = n(A + B − 2C).
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct StatValue {
    pub t: f64,
    pub kind: StatKind,
    pub abc: Option<(f64, f64, f64)>,
}

/// 1 − G(value) per pair, with G evaluated once per entry. Because G is
/// nondecreasing, 1 − G(max{a,b}) = min(w_a, w_b) bit-for-bit, which lets
/// every evaluator work from these survival weights.
fn survival_weights(values: &[f64], mu: f64, sigma: f64) -> Vec<f64> {
    values
        .iter()
        .map(|&v| 1.0 - crate::weights::gaussian_cdf(mu, sigma, v))
        .collect()
}

/// Compensated (Neumaier) accumulator. The statistic is a difference of
/// near-cancelling O(1) terms, so the oracle paths keep their sums at a few
/// ulps to stay comparable at tiny T_n values.
#[derive(Clone, Copy, Default)]
struct Kahan {
    sum: f64,
    c: f64,
}

impl Kahan {
    #[inline]
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.c += (self.sum - t) + x;
        } else {
            self.c += (x - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    fn value(self) -> f64 {
        self.sum + self.c
    }
}

/// The order-statistics marginal factor: 1 − (1/N²)·Σ (2i−1)·G(V*_i).
/// Tied values carry equal G, so any sort order gives the same sum.
fn b_factor(values: &[f64], mu: f64, sigma: f64) -> f64 {
    let n2 = (values.len() as f64) * (values.len() as f64);
    let mut g: Vec<f64> = values
        .iter()
        .map(|&v| crate::weights::gaussian_cdf(mu, sigma, v))
        .collect();
    g.sort_unstable_by(f64::total_cmp);
    let mut acc = Kahan::default();
    for (i, gi) in g.iter().enumerate() {
        acc.add((2 * i + 1) as f64 * gi);
    }
    1.0 - acc.value() / n2
}

fn check_pairs(pairs: &PairArrays) -> Result<()> {
    if pairs.len() < 2 {
        return Err(Error::TooFewObservations { min: 2, got: pairs.n });
    }
    Ok(())
}

/// Quadratic-cost evaluator: A by the double sum over ordered pair indices,
/// B by the order-statistics formula, C by the factorization
/// C = (1/N³)·Σ_i u_i·v_i with u_i = Σ_j min(w1_i, w1_j) and v_i likewise,
/// which equals the triple sum because its two inner indices are independent.
pub fn tn_reference(pairs: &PairArrays, w: &WeightSpec) -> Result<StatValue> {
    check_pairs(pairs)?;
    let nf = pairs.len() as f64;
    let w1 = survival_weights(&pairs.z, w.g1.mu, w.g1.sigma);
    let w2 = survival_weights(&pairs.t, w.g2.mu, w.g2.sigma);

    let mut a_sum = Kahan::default();
    let mut u = vec![0.0; pairs.len()];
    let mut v = vec![0.0; pairs.len()];
    for i in 0..pairs.len() {
        let (w1i, w2i) = (w1[i], w2[i]);
        let mut u_row = Kahan::default();
        let mut v_row = Kahan::default();
        for j in 0..pairs.len() {
            let m1 = w1i.min(w1[j]);
            let m2 = w2i.min(w2[j]);
            a_sum.add(m1 * m2);
            u_row.add(m1);
            v_row.add(m2);
        }
        u[i] = u_row.value();
        v[i] = v_row.value();
    }
    let a = a_sum.value() / (nf * nf);
    let b = b_factor(&pairs.z, w.g1.mu, w.g1.sigma) * b_factor(&pairs.t, w.g2.mu, w.g2.sigma);
    let mut c_sum = Kahan::default();
    for (ui, vi) in u.iter().zip(&v) {
        c_sum.add(ui * vi);
    }
    let c = c_sum.value() / (nf * nf * nf);
    Ok(finish_cvm(pairs.n, a, b, c))
}

fn finish_cvm(n: usize, a: f64, b: f64, c: f64) -> StatValue {
    let raw = n as f64 * (a + b - 2.0 * c);
    // The integral is nonnegative; cancellation can leave a tiny negative.
    StatValue { t: raw.max(0.0), kind: StatKind::Cvm, abc: Some((a, b, c)) }
}

const BRUTEFORCE_MAX_N: usize = 16;

/// Fully literal evaluator: every term recomputes the CDF of the pairwise
/// max and C runs its cubic triple sum. Exists to validate the others;
/// gated to n ≤ 16.
pub fn tn_bruteforce(pairs: &PairArrays, w: &WeightSpec) -> Result<StatValue> {
    check_pairs(pairs)?;
    if pairs.n > BRUTEFORCE_MAX_N {
        return Err(Error::InvalidParam {
            name: "n".into(),
            reason: format!("cubic brute force is gated to n ≤ {BRUTEFORCE_MAX_N}"),
        });
    }
    let nn = pairs.len();
    let nf = nn as f64;
    let g1 = |x: f64| crate::weights::gaussian_cdf(w.g1.mu, w.g1.sigma, x);
    let g2 = |x: f64| crate::weights::gaussian_cdf(w.g2.mu, w.g2.sigma, x);
    let (z, t) = (&pairs.z, &pairs.t);

    let mut a = Kahan::default();
    for i in 0..nn {
        for j in 0..nn {
            a.add((1.0 - g1(z[i].max(z[j]))) * (1.0 - g2(t[i].max(t[j]))));
        }
    }
    let a = a.value() / (nf * nf);

    let mut bx = Kahan::default();
    let mut by = Kahan::default();
    for i in 0..nn {
        for j in 0..nn {
            bx.add(1.0 - g1(z[i].max(z[j])));
            by.add(1.0 - g2(t[i].max(t[j])));
        }
    }
    let b = (bx.value() / (nf * nf)) * (by.value() / (nf * nf));

    let mut c = Kahan::default();
    for i in 0..nn {
        for j in 0..nn {
            let x_part = 1.0 - g1(z[i].max(z[j]));
            if x_part == 0.0 {
                continue;
            }
            let mut inner = Kahan::default();
            for k in 0..nn {
                inner.add(1.0 - g2(t[i].max(t[k])));
            }
            c.add(x_part * inner.value());
        }
    }
    let c = c.value() / (nf * nf * nf);
    Ok(finish_cvm(pairs.n, a, b, c))
}

/// O(N log N) evaluator, identical to `tn_reference` within 1e−9 relative.
///
/// B sorts once per side. u_i comes from the sorted survival weights: with
/// y descending and p the position of i, Σ_j min(w1_i, w1_j) = p·y_p + Σ_{q≥p} y_q
/// (ties give equal y, so any position inside a tie block yields the same
/// value). A sweeps pairs in increasing Z order; the earlier-inserted side
/// has the smaller Z, so each cross term factors as w1_current × the T-side
/// split, and a Fenwick tree over T ranks supplies both halves of the split:
/// the count with T_j ≤ T_current (contributing w2_current) and the weight
/// sum over T_j > T_current.
pub fn tn_fast(pairs: &PairArrays, w: &WeightSpec) -> Result<StatValue> {
    check_pairs(pairs)?;
    let nn = pairs.len();
    let nf = nn as f64;
    let w1 = survival_weights(&pairs.z, w.g1.mu, w.g1.sigma);
    let w2 = survival_weights(&pairs.t, w.g2.mu, w.g2.sigma);

    let b = b_factor(&pairs.z, w.g1.mu, w.g1.sigma) * b_factor(&pairs.t, w.g2.mu, w.g2.sigma);

    // Pair ids sorted by ascending Z; ties broken by id for a fixed order.
    let mut by_z: Vec<u32> = (0..nn as u32).collect();
    by_z.sort_unstable_by(|&a, &b| {
        f64::total_cmp(&pairs.z[a as usize], &pairs.z[b as usize]).then(a.cmp(&b))
    });

    let u = min_sums(&by_z, &w1);
    let by_t_order = {
        let mut ids: Vec<u32> = (0..nn as u32).collect();
        ids.sort_unstable_by(|&a, &b| {
            f64::total_cmp(&pairs.t[a as usize], &pairs.t[b as usize]).then(a.cmp(&b))
        });
        ids
    };
    let v = min_sums(&by_t_order, &w2);
    let c = u.iter().zip(&v).map(|(ui, vi)| ui * vi).sum::<f64>() / (nf * nf * nf);

    // Rank-compress T values; equal T shares a rank so the prefix query
    // counts ties on the ≤ side, matching the max semantics.
    let mut t_rank = vec![0u32; nn];
    {
        let mut rank = 0u32;
        let mut prev = f64::NAN;
        for &id in &by_t_order {
            let tv = pairs.t[id as usize];
            if prev.total_cmp(&tv) != std::cmp::Ordering::Equal {
                prev = tv;
                rank += 1;
            }
            t_rank[id as usize] = rank - 1;
        }
    }
    let n_ranks = t_rank.iter().max().map_or(0, |&r| r as usize + 1);

    let mut tree = Fenwick::new(n_ranks);
    let mut total_w2 = 0.0;
    let mut a_off = 0.0;
    let mut a_diag = 0.0;
    for &id in &by_z {
        let k = id as usize;
        let (cnt_le, sum_le) = tree.prefix(t_rank[k] as usize);
        a_off += w1[k] * (cnt_le as f64 * w2[k] + (total_w2 - sum_le));
        a_diag += w1[k] * w2[k];
        tree.add(t_rank[k] as usize, w2[k]);
        total_w2 += w2[k];
    }
    let a = (a_diag + 2.0 * a_off) / (nf * nf);
    Ok(finish_cvm(pairs.n, a, b, c))
}

/// Σ_j min(w_i, w_j) for every i, from one pass over ids sorted by the
/// underlying values ascending (weights descending).
fn min_sums(ids_by_value_asc: &[u32], weights: &[f64]) -> Vec<f64> {
    let nn = ids_by_value_asc.len();
    let mut suffix = vec![0.0; nn + 1];
    for p in (0..nn).rev() {
        suffix[p] = suffix[p + 1] + weights[ids_by_value_asc[p] as usize];
    }
    let mut out = vec![0.0; nn];
    for (p, &id) in ids_by_value_asc.iter().enumerate() {
        out[id as usize] = p as f64 * weights[id as usize] + suffix[p];
    }
    out
}

/// The sup statistic √n·sup_{r,s>0} |RR^{X,Y}(r,s) − RR^X(r)·RR^Y(s)|,
/// exact: the field is piecewise constant with jumps only at distance
/// values, so scanning the right-limits at unique Z × unique T values
/// (the cell beyond the maxima evaluates to 0) covers every level.
pub fn tsup(pairs: &PairArrays) -> Result<StatValue> {
    check_pairs(pairs)?;
    let nn = pairs.len();
    let nf = nn as f64;

    let (uz, z_idx) = compress(&pairs.z);
    let (ut, t_idx) = compress(&pairs.t);
    // Cumulative ordered-pair counts per unique value (≤ that value).
    let mut x_cum = vec![0u32; uz.len()];
    for &zi in &z_idx {
        x_cum[zi as usize] += 1;
    }
    for i in 1..x_cum.len() {
        x_cum[i] += x_cum[i - 1];
    }
    let mut y_cum = vec![0u32; ut.len()];
    for &ti in &t_idx {
        y_cum[ti as usize] += 1;
    }
    for i in 1..y_cum.len() {
        y_cum[i] += y_cum[i - 1];
    }

    // Pairs bucketed by Z level; cols accumulates the joint histogram rows
    // so row u holds counts with Z ≤ uz[u] per T level.
    let mut bucket_start = vec![0u32; uz.len() + 1];
    for &zi in &z_idx {
        bucket_start[zi as usize + 1] += 1;
    }
    for i in 1..bucket_start.len() {
        bucket_start[i] += bucket_start[i - 1];
    }
    let mut bucket_items = vec![0u32; nn];
    {
        let mut cursor = bucket_start.clone();
        for (k, &zi) in z_idx.iter().enumerate() {
            bucket_items[cursor[zi as usize] as usize] = t_idx[k];
            cursor[zi as usize] += 1;
        }
    }

    let mut cols = vec![0u32; ut.len()];
    let mut best = 0.0f64;
    for u in 0..uz.len() {
        for b in bucket_start[u]..bucket_start[u + 1] {
            cols[bucket_items[b as usize] as usize] += 1;
        }
        let x_part = x_cum[u] as f64 / nf;
        let mut joint = 0u32;
        for v in 0..ut.len() {
            joint += cols[v];
            let field = joint as f64 / nf - x_part * (y_cum[v] as f64 / nf);
            best = best.max(field.abs());
        }
    }
    Ok(StatValue { t: (pairs.n as f64).sqrt() * best, kind: StatKind::Sup, abc: None })
}

/// (sorted unique values, per-item index into them).
fn compress(values: &[f64]) -> (Vec<f64>, Vec<u32>) {
    let mut sorted: Vec<f64> = values.to_vec();
    sorted.sort_unstable_by(f64::total_cmp);
    sorted.dedup();
    let idx = values
        .iter()
        .map(|&v| sorted.partition_point(|&s| s < v) as u32)
        .collect();
    (sorted, idx)
}

/// Direct numerical integration of the squared centered process against
/// g1(r)g2(s) dr ds; the validation cross-check for the closed forms.
///
/// Each axis covers mu ± 6σ clipped to (0, ∞) and extended to the largest
/// distance, with `grid_resolution` uniform cells whose edges are snapped to
/// the distance values (the integrand is piecewise constant with jumps
/// exactly there, so midpoint evaluation is exact per cell and the remaining
/// error is the midpoint density approximation, second order in the step).
pub fn tn_quadrature(pairs: &PairArrays, w: &WeightSpec, grid_resolution: usize) -> Result<f64> {
    check_pairs(pairs)?;
    if grid_resolution < 50 {
        return Err(Error::InvalidParam {
            name: "grid_resolution".into(),
            reason: "need at least 50".into(),
        });
    }
    let nf = pairs.len() as f64;
    let n = pairs.n as f64;

    let r_edges = snapped_edges(&pairs.z, w.g1.mu, w.g1.sigma, grid_resolution);
    let s_edges = snapped_edges(&pairs.t, w.g2.mu, w.g2.sigma, grid_resolution);
    let r_mid: Vec<f64> = r_edges.windows(2).map(|e| 0.5 * (e[0] + e[1])).collect();
    let s_mid: Vec<f64> = s_edges.windows(2).map(|e| 0.5 * (e[0] + e[1])).collect();
    let r_mass: Vec<f64> = r_edges
        .windows(2)
        .map(|e| gaussian_pdf(w.g1.mu, w.g1.sigma, 0.5 * (e[0] + e[1])) * (e[1] - e[0]))
        .collect();
    let s_mass: Vec<f64> = s_edges
        .windows(2)
        .map(|e| gaussian_pdf(w.g2.mu, w.g2.sigma, 0.5 * (e[0] + e[1])) * (e[1] - e[0]))
        .collect();

    let mut zs = pairs.z.clone();
    zs.sort_unstable_by(f64::total_cmp);
    let mut ts = pairs.t.clone();
    ts.sort_unstable_by(f64::total_cmp);
    let rx: Vec<f64> = r_mid.iter().map(|&r| zs.partition_point(|&v| v < r) as f64 / nf).collect();
    let ry: Vec<f64> = s_mid.iter().map(|&s| ts.partition_point(|&v| v < s) as f64 / nf).collect();

    // Joint counts via a histogram over (first cell whose midpoint exceeds
    // the distance) and a rolling 2D prefix sum, as in the grid evaluator.
    let (gr, gs) = (r_mid.len(), s_mid.len());
    let mut hist = vec![0u32; (gr + 1) * (gs + 1)];
    for (&z, &t) in pairs.z.iter().zip(&pairs.t) {
        let a = r_mid.partition_point(|&r| r <= z);
        let b = s_mid.partition_point(|&s| s <= t);
        hist[a * (gs + 1) + b] += 1;
    }
    let mut acc = vec![0u32; gs];
    let mut total = 0.0;
    for a in 0..gr {
        let mut row_sum = 0;
        let mut row_total = 0.0;
        for b in 0..gs {
            row_sum += hist[a * (gs + 1) + b];
            acc[b] += row_sum;
            let field = acc[b] as f64 / nf - rx[a] * ry[b];
            row_total += field * field * s_mass[b];
        }
        total += row_total * r_mass[a];
    }
    Ok(n * total)
}

fn gaussian_pdf(mu: f64, sigma: f64, x: f64) -> f64 {
    let z = (x - mu) / sigma;
    (-0.5 * z * z).exp() / (sigma * (2.0 * std::f64::consts::PI).sqrt())
}

fn snapped_edges(values: &[f64], mu: f64, sigma: f64, resolution: usize) -> Vec<f64> {
    let max_v = values.iter().cloned().fold(0.0f64, f64::max);
    let lo = (mu - 6.0 * sigma).max(0.0);
    let hi = (mu + 6.0 * sigma).max(max_v * (1.0 + 1e-9) + 1e-12);
    let step = (hi - lo) / resolution as f64;
    let mut edges: Vec<f64> = (0..=resolution).map(|i| lo + step * i as f64).collect();
    edges.extend(values.iter().copied().filter(|&v| v > lo && v < hi));
    edges.sort_unstable_by(f64::total_cmp);
    edges.dedup();
    edges
}

/// Dense-scan oracle for `tsup`: evaluates |E_n|/√n on an explicit radius
/// product grid. Cost O(grid²·N); tests only.
pub fn tsup_dense_oracle(pairs: &PairArrays, per_axis: usize) -> f64 {
    let mut probes_r = probe_radii(&pairs.z, per_axis);
    let mut probes_s = probe_radii(&pairs.t, per_axis);
    probes_r.sort_unstable_by(f64::total_cmp);
    probes_s.sort_unstable_by(f64::total_cmp);
    let mut best = 0.0f64;
    for &r in &probes_r {
        for &s in &probes_s {
            let v = (rr_joint(pairs, r, s) - rr_x(pairs, r) * rr_y(pairs, s)).abs();
            best = best.max(v);
        }
    }
    (pairs.n as f64).sqrt() * best
}

fn probe_radii(values: &[f64], per_axis: usize) -> Vec<f64> {
    let max_v = values.iter().cloned().fold(0.0f64, f64::max);
    let hi = max_v * 1.05 + 1.0;
    (1..=per_axis).map(|i| hi * i as f64 / per_axis as f64).collect()
}

/// E_n at one radius pair, re-exported convenience for diagnostics.
pub fn en_value(pairs: &PairArrays, r: f64, s: f64) -> f64 {
    en(pairs, r, s)
}
