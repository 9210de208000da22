use std::ops::AddAssign;

/// Binary indexed tree of prefix sums.
#[derive(Debug, Clone)]
pub(crate) struct Fenwick<T = u32> {
    tree: Vec<T>,
}

impl<T: Copy + Default + AddAssign> Fenwick<T> {
    pub fn new(len: usize) -> Self {
        Fenwick { tree: vec![T::default(); len + 1] }
    }

    pub fn add(&mut self, index: usize, delta: T) {
        let mut i = index + 1;
        while i < self.tree.len() {
            self.tree[i] += delta;
            i += i & i.wrapping_neg();
        }
    }

    /// Sum over indices `0..end`.
    pub fn prefix(&self, end: usize) -> T {
        let mut i = end.min(self.tree.len() - 1);
        let mut s = T::default();
        while i > 0 {
            s += self.tree[i];
            i -= i & i.wrapping_neg();
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn prefix_sums_match_naive() {
        let mut f = Fenwick::<u32>::new(10);
        let adds = [3usize, 0, 9, 3, 5];
        for &a in &adds {
            f.add(a, 1);
        }
        for end in 0..=10 {
            let want = adds.iter().filter(|&&a| a < end).count() as u32;
            assert_eq!(f.prefix(end), want);
        }
        let mut g = Fenwick::<f64>::new(4);
        g.add(2, 0.5);
        g.add(0, 0.25);
        assert_eq!(g.prefix(3), 0.75);
        assert_eq!(g.prefix(1), 0.25);
    }
}
