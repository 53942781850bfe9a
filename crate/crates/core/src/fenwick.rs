/// Binary indexed tree holding a pair (count, weight sum) per position.
/// Prefix queries return how many inserted items sit at positions ≤ i and
/// the sum of their weights; the A_n sweep needs both to split pair
/// contributions by which side attains the max.
pub struct Fenwick {
    count: Vec<u64>,
    wsum: Vec<f64>,
}

impl Fenwick {
    pub fn new(size: usize) -> Self {
        Self { count: vec![0; size + 1], wsum: vec![0.0; size + 1] }
    }

    /// Inserts weight w at 0-based position i.
    pub fn add(&mut self, i: usize, w: f64) {
        let mut idx = i + 1;
        while idx < self.count.len() {
            self.count[idx] += 1;
            self.wsum[idx] += w;
            idx += idx & idx.wrapping_neg();
        }
    }

    /// (count, weight sum) over positions ≤ i (0-based, inclusive).
    pub fn prefix(&self, i: usize) -> (u64, f64) {
        let mut idx = i + 1;
        let (mut c, mut s) = (0, 0.0);
        while idx > 0 {
            c += self.count[idx];
            s += self.wsum[idx];
            idx -= idx & idx.wrapping_neg();
        }
        (c, s)
    }
}
