//! Binary indexed tree over non-negative vertex weights.

pub(crate) struct Fenwick {
    tree: Vec<f64>,
    top: usize,
}

impl Fenwick {
    /// Positions 1..=n, all weights zero.
    pub fn new(n: usize) -> Self {
        let top = if n == 0 { 0 } else { 1 << (usize::BITS - 1 - n.leading_zeros()) };
        Self {
            tree: vec![0.0; n + 1],
            top,
        }
    }

    pub fn add(&mut self, mut i: usize, delta: f64) {
        while i < self.tree.len() {
            self.tree[i] += delta;
            i += i & i.wrapping_neg();
        }
    }

    #[cfg(test)]
    pub fn prefix(&self, mut i: usize) -> f64 {
        let mut s = 0.0;
        while i > 0 {
            s += self.tree[i];
            i -= i & i.wrapping_neg();
        }
        s
    }

    /// Smallest i with prefix(i) > u.
    pub fn find(&self, mut u: f64) -> usize {
        let mut pos = 0;
        let mut step = self.top;
        while step > 0 {
            let next = pos + step;
            if next < self.tree.len() && self.tree[next] <= u {
                pos = next;
                u -= self.tree[next];
            }
            step >>= 1;
        }
        pos + 1
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn find_inverts_prefix_sums() {
        let w = [0.5, 0.0, 2.0, 1.0, 0.25, 3.0, 0.0];
        let mut f = Fenwick::new(w.len());
        for (i, x) in w.iter().enumerate() {
            f.add(i + 1, *x);
        }
        assert!((f.prefix(7) - 6.75).abs() < 1e-15);
        assert_eq!(f.find(0.0), 1);
        assert_eq!(f.find(0.49), 1);
        assert_eq!(f.find(0.5), 3);
        assert_eq!(f.find(2.6), 4);
        assert_eq!(f.find(6.7), 6);
    }
}
