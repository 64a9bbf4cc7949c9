//! Finite universes, fixed-width subset masks and set families.
//!
//! Elements are dense integers `0..N`. Masks are a single `u128`, so the
//! universe is capped at [`MAX_UNIVERSE`] elements; every constructor checks
//! the cap at runtime. Labeled inputs (graph edges, say) are mapped to dense
//! indices by the caller before they reach this module.

use std::collections::HashSet;
use std::fmt;

use serde::ser::{Serialize, SerializeSeq, Serializer};

use crate::error::{Error, Result};

/// Largest supported universe: one `u128` word.
pub const MAX_UNIVERSE: usize = 128;

/// Largest mask whose subsets [`SubsetMask::subsets`] will enumerate.
pub const MAX_ENUMERATED_BITS: usize = 30;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Universe {
    size: usize,
}

impl Universe {
    pub fn new(size: usize) -> Result<Self> {
        if size == 0 {
            return Err(Error::invalid("universe must have at least one element"));
        }
        if size > MAX_UNIVERSE {
            return Err(Error::UniverseTooLarge {
                requested: size,
                max: MAX_UNIVERSE,
            });
        }
        Ok(Universe { size })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn empty(&self) -> SubsetMask {
        SubsetMask {
            bits: 0,
            universe: self.size as u16,
        }
    }

    pub fn full(&self) -> SubsetMask {
        SubsetMask {
            bits: full_bits(self.size),
            universe: self.size as u16,
        }
    }

    pub fn singleton(&self, element: usize) -> Result<SubsetMask> {
        self.subset(&[element])
    }

    /// Builds a mask from element labels. Repeated labels are allowed.
    pub fn subset(&self, elements: &[usize]) -> Result<SubsetMask> {
        let mut bits = 0u128;
        for &e in elements {
            if e >= self.size {
                return Err(Error::ElementOutOfRange {
                    element: e,
                    size: self.size,
                });
            }
            bits |= 1u128 << e;
        }
        Ok(SubsetMask {
            bits,
            universe: self.size as u16,
        })
    }

    /// Wraps raw bits, rejecting any bit at position `>= N`.
    pub fn from_bits(&self, bits: u128) -> Result<SubsetMask> {
        if bits & !full_bits(self.size) != 0 {
            let element = 127 - (bits & !full_bits(self.size)).leading_zeros() as usize;
            return Err(Error::ElementOutOfRange {
                element,
                size: self.size,
            });
        }
        Ok(SubsetMask {
            bits,
            universe: self.size as u16,
        })
    }

    pub(crate) fn mask_unchecked(&self, bits: u128) -> SubsetMask {
        debug_assert_eq!(bits & !full_bits(self.size), 0);
        SubsetMask {
            bits,
            universe: self.size as u16,
        }
    }

    pub(crate) fn check(&self, mask: &SubsetMask) -> Result<()> {
        if mask.universe as usize != self.size {
            return Err(Error::UniverseMismatch {
                left: self.size,
                right: mask.universe as usize,
            });
        }
        Ok(())
    }
}

fn full_bits(size: usize) -> u128 {
    if size >= 128 {
        u128::MAX
    } else {
        (1u128 << size) - 1
    }
}

/// A subset of a universe stored as a bit mask. Bit `i` set means element
/// `i` is present.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SubsetMask {
    bits: u128,
    universe: u16,
}

impl SubsetMask {
    pub fn bits(&self) -> u128 {
        self.bits
    }

    pub fn universe(&self) -> Universe {
        Universe {
            size: self.universe as usize,
        }
    }

    pub fn len(&self) -> usize {
        self.bits.count_ones() as usize
    }

    pub fn is_empty(&self) -> bool {
        self.bits == 0
    }

    pub fn contains(&self, element: usize) -> bool {
        element < 128 && self.bits >> element & 1 == 1
    }

    /// Elements in increasing order.
    pub fn elements(&self) -> Elements {
        Elements { rest: self.bits }
    }

    fn same_universe(&self, other: &SubsetMask) -> Result<()> {
        if self.universe != other.universe {
            return Err(Error::UniverseMismatch {
                left: self.universe as usize,
                right: other.universe as usize,
            });
        }
        Ok(())
    }

    pub fn intersect(&self, other: &SubsetMask) -> Result<SubsetMask> {
        self.same_universe(other)?;
        Ok(self.with_bits(self.bits & other.bits))
    }

    pub fn union(&self, other: &SubsetMask) -> Result<SubsetMask> {
        self.same_universe(other)?;
        Ok(self.with_bits(self.bits | other.bits))
    }

    /// `self \ other`.
    pub fn difference(&self, other: &SubsetMask) -> Result<SubsetMask> {
        self.same_universe(other)?;
        Ok(self.with_bits(self.bits & !other.bits))
    }

    /// `self ⊆ other`.
    pub fn is_subset(&self, other: &SubsetMask) -> Result<bool> {
        self.same_universe(other)?;
        Ok(self.bits & other.bits == self.bits)
    }

    /// All `2^|self|` subsets, each once, in binary-counter order over the
    /// positions of the set bits (so `{0,1}` yields `∅, {0}, {1}, {0,1}`).
    pub fn subsets(&self) -> Result<Subsets> {
        let n = self.len();
        if n > MAX_ENUMERATED_BITS {
            return Err(Error::capacity(
                "subset enumeration",
                1u128 << n,
                1u128 << MAX_ENUMERATED_BITS,
            ));
        }
        Ok(Subsets {
            set: self.bits,
            next: Some(0),
            universe: self.universe,
        })
    }

    pub(crate) fn with_bits(&self, bits: u128) -> SubsetMask {
        SubsetMask {
            bits,
            universe: self.universe,
        }
    }
}

impl fmt::Debug for SubsetMask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

impl fmt::Display for SubsetMask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (i, e) in self.elements().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{e}")?;
        }
        f.write_str("}")
    }
}

impl Serialize for SubsetMask {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let mut seq = serializer.serialize_seq(Some(self.len()))?;
        for e in self.elements() {
            seq.serialize_element(&e)?;
        }
        seq.end()
    }
}

pub struct Elements {
    rest: u128,
}

impl Iterator for Elements {
    type Item = usize;

    fn next(&mut self) -> Option<usize> {
        if self.rest == 0 {
            return None;
        }
        let e = self.rest.trailing_zeros() as usize;
        self.rest &= self.rest - 1;
        Some(e)
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let n = self.rest.count_ones() as usize;
        (n, Some(n))
    }
}

impl ExactSizeIterator for Elements {}

/// Carry-rippler subset iterator: `next = (cur - set) & set` walks the
/// subsets of `set` in increasing numeric order.
pub struct Subsets {
    set: u128,
    next: Option<u128>,
    universe: u16,
}

impl Iterator for Subsets {
    type Item = SubsetMask;

    fn next(&mut self) -> Option<SubsetMask> {
        let cur = self.next?;
        let following = cur.wrapping_sub(self.set) & self.set;
        self.next = (following != 0).then_some(following);
        Some(SubsetMask {
            bits: cur,
            universe: self.universe,
        })
    }
}

/// Calls `f` on every subset of `set` (raw bits), carry-rippler order.
pub(crate) fn for_each_subset_bits(set: u128, mut f: impl FnMut(u128)) {
    let mut cur = 0u128;
    loop {
        f(cur);
        cur = cur.wrapping_sub(set) & set;
        if cur == 0 {
            break;
        }
    }
}

/// An ordered list of distinct subsets of one universe.
#[derive(Clone, Debug, PartialEq)]
pub struct SetFamily {
    universe: Universe,
    members: Vec<SubsetMask>,
    max_size: usize,
}

impl SetFamily {
    /// Keeps the first occurrence of each member, in input order.
    pub fn new(universe: Universe, members: Vec<SubsetMask>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(members.len());
        let mut kept = Vec::with_capacity(members.len());
        for m in members {
            universe.check(&m)?;
            if seen.insert(m.bits) {
                kept.push(m);
            }
        }
        let max_size = kept.iter().map(SubsetMask::len).max().unwrap_or(0);
        Ok(SetFamily {
            universe,
            members: kept,
            max_size,
        })
    }

    /// Members sorted by (size, bits).
    pub fn canonical(mut self) -> Self {
        self.members.sort_by_key(|m| (m.len(), m.bits));
        self
    }

    pub fn universe(&self) -> Universe {
        self.universe
    }

    pub fn members(&self) -> &[SubsetMask] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// `k`: the largest member cardinality.
    pub fn max_size(&self) -> usize {
        self.max_size
    }

    /// Whether every member has the same cardinality.
    pub fn uniform_size(&self) -> Option<usize> {
        let first = self.members.first()?.len();
        self.members
            .iter()
            .all(|m| m.len() == first)
            .then_some(first)
    }
}
