//! Autoregressive connectivity masks.
//!
//! Every hidden unit gets a degree `d` in `1..=max(1, n - 1)`: it may see the
//! inputs ranked `<= d` in the generation ordering. Output `i` reads only
//! units with degree `< rank(i)`, so it depends on strictly earlier inputs.

use crate::error::{Error, Result};
use crate::numerics::{Rng, Tensor};

#[derive(Debug, Clone, PartialEq)]
pub struct Masks {
    /// Hidden-unit degrees per block.
    pub degrees: Vec<Vec<usize>>,
    /// Per block, `[width, fan_in]` 0/1 mask on the trunk weights.
    pub trunk: Vec<Tensor>,
    /// Per block, `[n, width]` 0/1 mask: may output `i` read unit `u`.
    pub head: Vec<Tensor>,
}

/// `ranks[j]` is the 1-based position of input `j` in `ordering`.
pub fn ranks_of(ordering: &[usize]) -> Result<Vec<usize>> {
    let n = ordering.len();
    let mut ranks = vec![0usize; n];
    for (pos, &dim) in ordering.iter().enumerate() {
        if dim >= n || ranks[dim] != 0 {
            return Err(Error::domain(format!("ordering {ordering:?} is not a permutation of 0..{n}")));
        }
        ranks[dim] = pos + 1;
    }
    Ok(ranks)
}

pub fn build_masks(n: usize, hidden: &[usize], ordering: &[usize], rng: &mut Rng) -> Result<Masks> {
    if n == 0 {
        return Err(Error::domain("data dimension must be >= 1"));
    }
    if hidden.is_empty() || hidden.contains(&0) {
        return Err(Error::domain(format!("hidden sizes must be nonempty and >= 1, got {hidden:?}")));
    }
    if ordering.len() != n {
        return Err(Error::domain(format!("ordering has {} entries, expected {n}", ordering.len())));
    }
    let max_degree = (n - 1).max(1);
    let degrees: Vec<Vec<usize>> =
        hidden.iter().map(|&width| (0..width).map(|_| 1 + rng.below(max_degree)).collect()).collect();
    Masks::from_degrees(n, ordering, degrees)
}

impl Masks {
    /// Rebuilds the masks implied by fixed hidden-unit degrees.
    pub fn from_degrees(n: usize, ordering: &[usize], degrees: Vec<Vec<usize>>) -> Result<Masks> {
        if ordering.len() != n {
            return Err(Error::domain(format!("ordering has {} entries, expected {n}", ordering.len())));
        }
        let ranks = ranks_of(ordering)?;
        let max_degree = (n - 1).max(1);
        if degrees.is_empty() {
            return Err(Error::domain("at least one hidden block is required"));
        }
        let mut trunk = Vec::with_capacity(degrees.len());
        let mut head = Vec::with_capacity(degrees.len());
        for (k, deg) in degrees.iter().enumerate() {
            let width = deg.len();
            if width == 0 || deg.iter().any(|&d| d == 0 || d > max_degree) {
                return Err(Error::domain(format!("block {k} has invalid degrees")));
            }
            let mask = if k == 0 {
                let mut m = Tensor::zeros(vec![width, n]);
                for (u, &d) in deg.iter().enumerate() {
                    for (j, &r) in ranks.iter().enumerate() {
                        // The last input never feeds anything; this also disconnects x when n = 1.
                        if d >= r && r < n {
                            m.set2(u, j, 1.0);
                        }
                    }
                }
                m
            } else {
                let prev = &degrees[k - 1];
                let mut m = Tensor::zeros(vec![width, prev.len()]);
                for (u, &d) in deg.iter().enumerate() {
                    for (v, &dp) in prev.iter().enumerate() {
                        if d >= dp {
                            m.set2(u, v, 1.0);
                        }
                    }
                }
                m
            };

            let mut h = Tensor::zeros(vec![n, width]);
            for (i, &r) in ranks.iter().enumerate() {
                for (u, &d) in deg.iter().enumerate() {
                    if d < r {
                        h.set2(i, u, 1.0);
                    }
                }
            }
            trunk.push(mask);
            head.push(h);
        }
        Ok(Masks { degrees, trunk, head })
    }

    /// Removes every path from `x` to the outputs.
    pub fn disconnect_inputs(&mut self) {
        for m in self.trunk.iter_mut().chain(self.head.iter_mut()) {
            m.data_mut().fill(0.0);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_dimension_has_no_input_paths() {
        let mut rng = Rng::new(0);
        let m = build_masks(1, &[4, 4], &[0], &mut rng).unwrap();
        assert!(m.trunk[0].data().iter().all(|&v| v == 0.0));
        assert!(m.head.iter().all(|h| h.data().iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn degree_rules() {
        let mut rng = Rng::new(1);
        let ordering = [2, 0, 3, 1];
        let m = build_masks(4, &[16, 8], &ordering, &mut rng).unwrap();
        let ranks = ranks_of(&ordering).unwrap();
        assert_eq!(ranks, vec![2, 4, 1, 3]);
        for d in m.degrees.iter().flatten() {
            assert!((1..=3).contains(d));
        }
        for u in 0..16 {
            for j in 0..4 {
                let allowed = m.degrees[0][u] >= ranks[j] && ranks[j] < 4;
                assert_eq!(m.trunk[0].get2(u, j) == 1.0, allowed);
            }
        }
        for u in 0..8 {
            for v in 0..16 {
                assert_eq!(m.trunk[1].get2(u, v) == 1.0, m.degrees[1][u] >= m.degrees[0][v]);
            }
        }
        // The first output in the ordering sees no hidden unit.
        assert!(m.head[1].row(2).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn rejects_bad_arguments() {
        let mut rng = Rng::new(0);
        assert!(build_masks(0, &[4], &[], &mut rng).is_err());
        assert!(build_masks(2, &[], &[0, 1], &mut rng).is_err());
        assert!(build_masks(2, &[0], &[0, 1], &mut rng).is_err());
        assert!(build_masks(2, &[3], &[0, 0], &mut rng).is_err());
        assert!(build_masks(2, &[3], &[0], &mut rng).is_err());
    }
}
