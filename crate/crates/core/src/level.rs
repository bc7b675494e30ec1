//! Level indices and subspace masks.
//!
//! Levels are 1-based at every public boundary. A [`SubspaceMask`] is the set
//! of excluded levels; ordered path indices collapse to it because the
//! recursive Green's function on a subspace only depends on which levels
//! were removed, not on the order of removal.

use std::fmt;

use crate::error::{Error, Result};

/// Largest level count the engine accepts. Work is exponential in `N`.
pub const MAX_LEVELS: usize = 25;

/// A 1-based unperturbed level index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Level(pub usize);

impl Level {
    /// Zero-based position.
    #[inline]
    pub fn idx(self) -> usize {
        self.0 - 1
    }

    #[inline]
    pub fn from_idx(idx: usize) -> Self {
        Level(idx + 1)
    }

    pub fn check(self, n: usize) -> Result<Self> {
        if self.0 == 0 || self.0 > n {
            Err(Error::IndexOutOfRange { index: self.0, dim: n })
        } else {
            Ok(self)
        }
    }
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Set of excluded levels defining the subspace `M_[p]` and submatrix `H_[p]`.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Default, PartialOrd, Ord)]
pub struct SubspaceMask {
    bits: u32,
}

impl SubspaceMask {
    pub const EMPTY: SubspaceMask = SubspaceMask { bits: 0 };

    pub fn from_levels<I: IntoIterator<Item = Level>>(levels: I) -> Self {
        levels
            .into_iter()
            .fold(Self::EMPTY, |mask, level| mask.with(level))
    }

    #[inline]
    pub fn from_bits(bits: u32) -> Self {
        SubspaceMask { bits }
    }

    #[inline]
    pub fn bits(self) -> u32 {
        self.bits
    }

    #[inline]
    pub fn with(self, level: Level) -> Self {
        SubspaceMask {
            bits: self.bits | (1 << level.idx()),
        }
    }

    #[inline]
    pub(crate) fn with_idx(self, idx: usize) -> Self {
        SubspaceMask {
            bits: self.bits | (1 << idx),
        }
    }

    #[inline]
    pub fn contains(self, level: Level) -> bool {
        self.contains_idx(level.idx())
    }

    #[inline]
    pub(crate) fn contains_idx(self, idx: usize) -> bool {
        idx < 32 && self.bits & (1 << idx) != 0
    }

    #[inline]
    pub fn len(self) -> usize {
        self.bits.count_ones() as usize
    }

    #[inline]
    pub fn is_empty(self) -> bool {
        self.bits == 0
    }

    pub fn levels(self) -> impl Iterator<Item = Level> {
        (0..32)
            .filter(move |&i| self.bits & (1 << i) != 0)
            .map(Level::from_idx)
    }

    /// Zero-based indices in `0..n` that are not excluded, ascending.
    pub(crate) fn retained(self, n: usize) -> impl Iterator<Item = usize> {
        (0..n).filter(move |&i| !self.contains_idx(i))
    }

    /// Checks every excluded level lies within `1..=n`.
    pub fn check(self, n: usize) -> Result<Self> {
        match self.levels().find(|l| l.0 > n) {
            Some(l) => Err(Error::IndexOutOfRange { index: l.0, dim: n }),
            None => Ok(self),
        }
    }
}

impl fmt::Debug for SubspaceMask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.levels().map(|l| l.0)).finish()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn insertion_order_is_irrelevant() {
        let a = SubspaceMask::from_levels([Level(3), Level(1), Level(5)]);
        let b = SubspaceMask::EMPTY.with(Level(5)).with(Level(3)).with(Level(1));
        assert_eq!(a, b);
        assert_eq!(a.len(), 3);
        assert_eq!(a.levels().map(|l| l.0).collect::<Vec<_>>(), vec![1, 3, 5]);
    }

    #[test]
    fn retained_skips_excluded() {
        let m = SubspaceMask::from_levels([Level(2)]);
        assert_eq!(m.retained(4).collect::<Vec<_>>(), vec![0, 2, 3]);
        assert!(m.check(1).is_err());
        assert!(m.check(2).is_ok());
    }

    #[test]
    fn level_range() {
        assert!(Level(0).check(3).is_err());
        assert!(Level(4).check(3).is_err());
        assert_eq!(Level(3).check(3).unwrap().idx(), 2);
    }
}
