//! Fock bases for the four-mode system and the antisymmetric `k = 0` sector.
//!
//! Mode 1 is the monomer, modes 2..=4 form the trimer. The trimer sites are
//! permuted by the dihedral group D3; the sector kept here is odd under every
//! transposition of trimer sites and even under the cyclic rotations.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{contract, Result};

/// Number of modes of the monomer-trimer system.
pub const MODES: usize = 4;

/// Occupations `(n1, n2, n3, n4)` of the four modes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FockState(pub [u32; MODES]);

impl FockState {
    pub fn total(&self) -> u32 {
        self.0.iter().sum()
    }

    pub fn monomer(&self) -> u32 {
        self.0[0]
    }

    pub fn trimer(&self) -> u32 {
        self.0[1] + self.0[2] + self.0[3]
    }

    /// Cyclic trimer rotation `(n1, n2, n3, n4) -> (n1, n4, n2, n3)`.
    pub fn rotated(&self) -> FockState {
        let [n1, n2, n3, n4] = self.0;
        FockState([n1, n4, n2, n3])
    }

    /// Applies a permutation of the trimer slots: slot `k` of the result holds
    /// trimer occupation `perm[k]` of `self`.
    pub fn permute_trimer(&self, perm: [usize; 3]) -> FockState {
        let t = [self.0[1], self.0[2], self.0[3]];
        FockState([self.0[0], t[perm[0]], t[perm[1]], t[perm[2]]])
    }
}

impl fmt::Display for FockState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let [a, b, c, d] = self.0;
        write!(f, "|{a},{b},{c},{d}>")
    }
}

/// Relative trimer population `x = trimer / total`, kept as an exact fraction
/// on the `1/N` grid.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct XValue {
    pub trimer: u32,
    pub total: u32,
}

impl XValue {
    pub fn new(trimer: u32, total: u32) -> Self {
        debug_assert!(trimer <= total);
        XValue { trimer, total }
    }

    pub fn value(&self) -> f64 {
        if self.total == 0 {
            return 0.0;
        }
        self.trimer as f64 / self.total as f64
    }

    /// Grid point nearest to `x` on the `1/total` lattice.
    pub fn nearest(x: f64, total: u32) -> XValue {
        let k = (x * total as f64).round().clamp(0.0, total as f64) as u32;
        XValue::new(k, total)
    }
}

impl fmt::Display for XValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.trimer, self.total)
    }
}

/// Number of ways to place `total` bosons in `modes` modes.
pub fn stars_and_bars(modes: usize, total: u32) -> usize {
    if modes == 0 {
        return usize::from(total == 0);
    }
    let k = (modes - 1) as u128;
    let n = total as u128 + k;
    let mut c: u128 = 1;
    for i in 0..k {
        c = c * (n - i) / (i + 1);
    }
    c as usize
}

/// All number-conserving Fock states of `modes` modes, in lexicographically
/// descending order of the occupation tuple.
#[derive(Clone, Debug)]
pub struct FullBasis {
    modes: usize,
    total: u32,
    occupations: Vec<u32>,
    index: HashMap<Vec<u32>, usize>,
}

impl FullBasis {
    pub fn modes(&self) -> usize {
        self.modes
    }

    pub fn total(&self) -> u32 {
        self.total
    }

    pub fn len(&self) -> usize {
        self.occupations.len() / self.modes.max(1)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn state(&self, i: usize) -> &[u32] {
        &self.occupations[i * self.modes..(i + 1) * self.modes]
    }

    pub fn index_of(&self, occupations: &[u32]) -> Option<usize> {
        self.index.get(occupations).copied()
    }

    /// The `i`-th state as a four-mode [`FockState`].
    pub fn fock(&self, i: usize) -> Option<FockState> {
        if self.modes != MODES {
            return None;
        }
        let s = self.state(i);
        Some(FockState([s[0], s[1], s[2], s[3]]))
    }

    pub fn iter(&self) -> impl Iterator<Item = &[u32]> {
        self.occupations.chunks(self.modes.max(1))
    }
}

pub fn enumerate_full_basis(modes: usize, total: u32) -> FullBasis {
    assert!(modes >= 1, "at least one mode is required");
    let mut occupations = Vec::with_capacity(stars_and_bars(modes, total) * modes);
    let mut current = vec![0u32; modes];
    fill_descending(&mut current, 0, total, &mut occupations);
    let index = occupations
        .chunks(modes)
        .enumerate()
        .map(|(i, s)| (s.to_vec(), i))
        .collect();
    FullBasis {
        modes,
        total,
        occupations,
        index,
    }
}

fn fill_descending(current: &mut [u32], slot: usize, remaining: u32, out: &mut Vec<u32>) {
    if slot + 1 == current.len() {
        current[slot] = remaining;
        out.extend_from_slice(current);
        return;
    }
    for n in (0..=remaining).rev() {
        current[slot] = n;
        fill_descending(current, slot + 1, remaining - n, out);
    }
}

/// Trimer permutations in the order of the antisymmetric expansion, together
/// with their signs: identity and the two cyclic rotations carry `+`, the three
/// transpositions carry `-`. Applied with [`FockState::permute_trimer`], the
/// entries reproduce `|n1,n2,n3,n4>, |n1,n4,n2,n3>, |n1,n3,n4,n2>,
/// |n1,n3,n2,n4>, |n1,n4,n3,n2>, |n1,n2,n4,n3>`.
pub const D3_ELEMENTS: [([usize; 3], f64); 6] = [
    ([0, 1, 2], 1.0),
    ([2, 0, 1], 1.0),
    ([1, 2, 0], 1.0),
    ([1, 0, 2], -1.0),
    ([2, 1, 0], -1.0),
    ([0, 2, 1], -1.0),
];

/// Antisymmetric `k = 0` symmetry-adapted basis.
///
/// Each vector is labeled by a representative with strictly decreasing trimer
/// occupations `n2 > n3 > n4`; representatives are ordered like the full basis
/// (lexicographically descending).
#[derive(Clone, Debug)]
pub struct SectorBasis {
    total: u32,
    representatives: Vec<FockState>,
    index: HashMap<FockState, usize>,
}

impl SectorBasis {
    pub fn total(&self) -> u32 {
        self.total
    }

    pub fn dim(&self) -> usize {
        self.representatives.len()
    }

    pub fn is_empty(&self) -> bool {
        self.representatives.is_empty()
    }

    pub fn representatives(&self) -> &[FockState] {
        &self.representatives
    }

    pub fn representative(&self, i: usize) -> FockState {
        self.representatives[i]
    }

    pub fn index_of(&self, rep: &FockState) -> Option<usize> {
        self.index.get(rep).copied()
    }

    pub fn x_value(&self, i: usize) -> XValue {
        XValue::new(self.representatives[i].trimer(), self.total)
    }

    /// The six signed Fock components of symmetry-adapted vector `i`.
    pub fn expansion(&self, i: usize) -> [(FockState, f64); 6] {
        let rep = self.representatives[i];
        let norm = 1.0 / 6f64.sqrt();
        D3_ELEMENTS.map(|(perm, sign)| (rep.permute_trimer(perm), sign * norm))
    }

    /// Maps an arbitrary Fock state onto its sector representative.
    ///
    /// Returns the representative index and the sign `±1` of `<rep|state>`
    /// relative to `1/sqrt(6)`, or `None` when two trimer occupations coincide
    /// (the antisymmetrized state vanishes).
    pub fn canonicalize(&self, state: &FockState) -> Option<(usize, f64)> {
        let (rep, sign) = canonical_form(state)?;
        self.index.get(&rep).map(|&i| (i, sign))
    }

    /// Dense isometry whose columns are the sector vectors in full-basis
    /// coordinates (`full.len() x dim`). Intended for small-N cross-checks.
    pub fn isometry(&self, full: &FullBasis) -> Result<ndarray::Array2<f64>> {
        if full.modes() != MODES || full.total() != self.total {
            return Err(contract(format!(
                "full basis ({} modes, N = {}) does not match sector N = {}",
                full.modes(),
                full.total(),
                self.total
            )));
        }
        let mut p = ndarray::Array2::zeros((full.len(), self.dim()));
        for j in 0..self.dim() {
            for (state, amp) in self.expansion(j) {
                let row = full
                    .index_of(&state.0)
                    .expect("permuted state belongs to the full basis");
                p[[row, j]] += amp;
            }
        }
        Ok(p)
    }
}

/// Sorts the trimer occupations into descending order and returns the parity
/// of the sorting permutation; `None` if any two trimer occupations coincide.
pub fn canonical_form(state: &FockState) -> Option<(FockState, f64)> {
    let mut t = [state.0[1], state.0[2], state.0[3]];
    if t[0] == t[1] || t[1] == t[2] || t[0] == t[2] {
        return None;
    }
    let mut sign = 1.0;
    // three-element bubble sort, one sign flip per swap
    for (a, b) in [(0, 1), (1, 2), (0, 1)] {
        if t[a] < t[b] {
            t.swap(a, b);
            sign = -sign;
        }
    }
    Some((FockState([state.0[0], t[0], t[1], t[2]]), sign))
}

pub fn build_sector_basis(total: u32) -> SectorBasis {
    let mut representatives = Vec::new();
    for n1 in (0..=total).rev() {
        let m = total - n1;
        for n2 in (0..=m).rev() {
            for n3 in (0..n2).rev() {
                if n2 + n3 > m {
                    continue;
                }
                let n4 = m - n2 - n3;
                if n4 < n3 {
                    representatives.push(FockState([n1, n2, n3, n4]));
                }
            }
        }
    }
    let index = representatives
        .iter()
        .enumerate()
        .map(|(i, s)| (*s, i))
        .collect();
    SectorBasis {
        total,
        representatives,
        index,
    }
}

/// Number of strictly decreasing triples `a > b > c >= 0` with `a + b + c = m`.
pub fn strict_triple_count(m: u32) -> usize {
    let mut count = 0;
    for c in 0..=m {
        for b in (c + 1)..=m {
            let used = b + c;
            if used > m {
                break;
            }
            if m - used > b {
                count += 1;
            }
        }
    }
    count
}

/// Applies the cyclic trimer rotation to a vector in full-basis coordinates.
pub fn apply_trimer_rotation<T: Copy + Default>(full: &FullBasis, v: &[T]) -> Result<Vec<T>> {
    if full.modes() != MODES {
        return Err(contract("trimer rotation needs a four-mode basis"));
    }
    if v.len() != full.len() {
        return Err(contract(format!(
            "vector has length {}, basis has {} states",
            v.len(),
            full.len()
        )));
    }
    let mut out = vec![T::default(); v.len()];
    for (i, &amp) in v.iter().enumerate() {
        let target = full.fock(i).expect("four modes").rotated();
        let j = full.index_of(&target.0).expect("rotation preserves N");
        out[j] = amp;
    }
    Ok(out)
}
