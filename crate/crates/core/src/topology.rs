//! RIS architecture masks.
//!
//! A mask entry `(i, j)` is true when ports `i` and `j` are connected through
//! a tunable admittance (the diagonal holds the admittances to ground).

use std::fmt;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TopologyKind {
    Single,
    Group(usize),
    Tridiagonal,
    Band(usize),
    Generalized { perm: Vec<usize>, q: usize },
    Fully,
}

impl TopologyKind {
    /// Parse `single`, `group:G`, `tridiagonal`, `tree`, `band:q` or `fully`.
    pub fn parse(s: &str) -> Result<Self> {
        let s = s.trim();
        let num = |v: &str| {
            v.trim()
                .parse::<usize>()
                .map_err(|_| Error::Config(format!("bad topology parameter in '{s}'")))
        };
        match s.split_once(':') {
            Some(("group", g)) => Ok(Self::Group(num(g)?)),
            Some(("band", q)) => Ok(Self::Band(num(q)?)),
            None if s == "single" => Ok(Self::Single),
            None if s == "tridiagonal" || s == "tree" => Ok(Self::Tridiagonal),
            None if s == "fully" => Ok(Self::Fully),
            _ => Err(Error::Config(format!("unknown topology '{s}'"))),
        }
    }
}

impl fmt::Display for TopologyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Single => write!(f, "single"),
            Self::Group(g) => write!(f, "group:{g}"),
            Self::Tridiagonal => write!(f, "tridiagonal"),
            Self::Band(q) => write!(f, "band:{q}"),
            Self::Generalized { q, .. } => write!(f, "generalized:{q}"),
            Self::Fully => write!(f, "fully"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Topology {
    pub n_i: usize,
    pub kind: TopologyKind,
    mask: Vec<bool>,
}

impl Topology {
    pub fn allowed(&self, i: usize, j: usize) -> bool {
        self.mask[i * self.n_i + j]
    }

    /// Free `(i, j)` pairs with `j ≥ i`, row by row.
    pub fn free_pairs(&self) -> Vec<(usize, usize)> {
        (0..self.n_i)
            .flat_map(|i| (i..self.n_i).map(move |j| (i, j)))
            .filter(|&(i, j)| self.allowed(i, j))
            .collect()
    }

    pub fn is_fully(&self) -> bool {
        self.mask.iter().all(|&b| b)
    }

    /// Largest `|i − j|` over connected pairs.
    pub fn bandwidth(&self) -> usize {
        self.free_pairs().iter().map(|&(i, j)| j - i).max().unwrap_or(0)
    }

    /// Whether every connection of `other` is also present here.
    pub fn contains(&self, other: &Topology) -> bool {
        self.n_i == other.n_i && self.mask.iter().zip(&other.mask).all(|(&a, &b)| a || !b)
    }
}

/// Build the mask for an architecture.
pub fn make_mask(kind: TopologyKind, n_i: usize) -> Result<Topology> {
    if n_i == 0 {
        return Err(Error::InvalidParameter("n_i must be positive".into()));
    }
    let band = |q: usize| move |i: usize, j: usize| i.abs_diff(j) <= q;
    let mask: Vec<bool> = match &kind {
        TopologyKind::Single => grid(n_i, band(0)),
        TopologyKind::Group(g) => {
            if *g == 0 || n_i % g != 0 {
                return Err(Error::InvalidParameter(format!("{g} groups do not divide {n_i} elements")));
            }
            let size = n_i / g;
            grid(n_i, |i, j| i / size == j / size)
        }
        TopologyKind::Tridiagonal => grid(n_i, band(1)),
        TopologyKind::Band(q) => {
            if *q >= n_i {
                return Err(Error::InvalidParameter(format!("bandwidth {q} exceeds n_i - 1 = {}", n_i - 1)));
            }
            grid(n_i, band(*q))
        }
        TopologyKind::Generalized { perm, q } => {
            let mut seen = vec![false; n_i];
            if perm.len() != n_i || perm.iter().any(|&p| p >= n_i || std::mem::replace(&mut seen[p], true)) {
                return Err(Error::InvalidParameter("generalized band needs a permutation of 0..n_i".into()));
            }
            if *q >= n_i {
                return Err(Error::InvalidParameter(format!("bandwidth {q} exceeds n_i - 1")));
            }
            // element perm[a] takes position a in the band ordering
            let mut pos = vec![0; n_i];
            for (a, &p) in perm.iter().enumerate() {
                pos[p] = a;
            }
            grid(n_i, |i, j| pos[i].abs_diff(pos[j]) <= *q)
        }
        TopologyKind::Fully => vec![true; n_i * n_i],
    };
    Ok(Topology { n_i, kind, mask })
}

fn grid(n: usize, f: impl Fn(usize, usize) -> bool) -> Vec<bool> {
    (0..n * n).map(|k| f(k / n, k % n)).collect()
}

/// Smallest band that reproduces every fully-connected channel:
/// `q = 2·min(min(n_t, n_r), n_i/2) − 1`, capped at `n_i − 1`.
pub fn optimal_bandwidth(n_t: usize, n_r: usize, n_i: usize) -> usize {
    let d = n_t.min(n_r) as f64;
    let q = (2.0 * d.min(n_i as f64 / 2.0) - 1.0).ceil().max(0.0) as usize;
    q.min(n_i.saturating_sub(1))
}

/// Number of tunable admittances (connected pairs on or above the diagonal).
pub fn admittance_count(t: &Topology) -> usize {
    t.free_pairs().len()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn single_is_identity() {
        let t = make_mask(TopologyKind::Single, 4).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                assert_eq!(t.allowed(i, j), i == j);
            }
        }
        assert_eq!(admittance_count(&t), 4);
    }

    #[test]
    fn band_one_is_tridiagonal() {
        for n in 1..10 {
            let a = make_mask(TopologyKind::Band(1.min(n - 1)), n).unwrap();
            let b = make_mask(TopologyKind::Tridiagonal, n).unwrap();
            assert_eq!(a.free_pairs(), b.free_pairs());
        }
    }

    #[test]
    fn fully_counts() {
        let t = make_mask(TopologyKind::Fully, 4).unwrap();
        assert_eq!(t.mask.iter().filter(|&&b| b).count(), 16);
        assert_eq!(admittance_count(&t), 10);
    }

    #[test]
    fn group_blocks() {
        let t = make_mask(TopologyKind::Group(2), 6).unwrap();
        assert!(t.allowed(0, 2) && !t.allowed(2, 3) && t.allowed(4, 5));
        assert_eq!(admittance_count(&t), 12);
        assert!(make_mask(TopologyKind::Group(4), 6).is_err());
    }

    #[test]
    fn generalized_is_permuted_band() {
        let perm = vec![2, 0, 3, 1];
        let t = make_mask(TopologyKind::Generalized { perm, q: 1 }, 4).unwrap();
        // band order 2-0-3-1
        assert!(t.allowed(2, 0) && t.allowed(0, 3) && t.allowed(3, 1));
        assert!(!t.allowed(2, 3) && !t.allowed(0, 1) && !t.allowed(2, 1));
        assert!(make_mask(TopologyKind::Generalized { perm: vec![0, 0, 1, 2], q: 1 }, 4).is_err());
    }

    #[test]
    fn optimal_bandwidth_examples() {
        assert_eq!(optimal_bandwidth(1, 1, 16), 1);
        assert_eq!(optimal_bandwidth(4, 4, 64), 7);
        assert_eq!(optimal_bandwidth(8, 8, 8), 7);
        assert_eq!(optimal_bandwidth(2, 2, 8), 3);
        assert_eq!(optimal_bandwidth(4, 1, 8), 1);
        assert_eq!(optimal_bandwidth(3, 3, 5), 4);
    }

    #[test]
    fn parse_round_trip() {
        for s in ["single", "group:4", "tridiagonal", "band:3", "fully"] {
            assert_eq!(TopologyKind::parse(s).unwrap().to_string(), s);
        }
        assert!(TopologyKind::parse("ring").is_err());
        assert!(TopologyKind::parse("band:x").is_err());
    }

    proptest! {
        #[test]
        fn band_count_matches_formula(n in 1usize..40, q in 0usize..1000) {
            let q = q % n;
            let t = make_mask(TopologyKind::Band(q), n).unwrap();
            prop_assert_eq!(admittance_count(&t), n + q * n - q * (q + 1) / 2);
            prop_assert_eq!(t.bandwidth(), q);
        }

        #[test]
        fn bands_are_nested(n in 2usize..30, x in 0usize..1000, y in 0usize..1000) {
            let (a, b) = ((x % n).min(y % n), (x % n).max(y % n));
            let small = make_mask(TopologyKind::Band(a), n).unwrap();
            let big = make_mask(TopologyKind::Band(b), n).unwrap();
            prop_assert!(big.contains(&small));
        }

        #[test]
        fn masks_symmetric_with_diagonal(n in 1usize..20, q in 0usize..1000, seed in 0u64..1000) {
            let q = q % n;
            let mut perm: Vec<usize> = (0..n).collect();
            let mut s = seed;
            for i in (1..n).rev() {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                perm.swap(i, (s >> 33) as usize % (i + 1));
            }
            let t = make_mask(TopologyKind::Generalized { perm, q }, n).unwrap();
            for i in 0..n {
                prop_assert!(t.allowed(i, i));
                for j in 0..n {
                    prop_assert_eq!(t.allowed(i, j), t.allowed(j, i));
                }
            }
            prop_assert_eq!(admittance_count(&t), n + q * n - q * (q + 1) / 2);
            let full = make_mask(TopologyKind::Fully, n).unwrap();
            prop_assert_eq!(admittance_count(&full), n * (n + 1) / 2);
        }
    }
}
