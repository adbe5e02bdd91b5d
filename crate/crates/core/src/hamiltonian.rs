//! Monomer-trimer Bose-Hubbard Hamiltonian
//!
//! ```text
//! H = -(Ω/2)(a2†a3 + a3†a4 + a4†a2 + h.c.) + (U/2) Σ_i a_i†² a_i²
//!     -(ω/2)(a1†a2 + a1†a3 + a1†a4 + h.c.)
//! ```
//!
//! assembled directly in the antisymmetric sector, plus the full-basis operator
//! used as a small-N reference.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::basis::{FockState, FullBasis, SectorBasis, XValue, MODES};
use crate::error::{contract, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// Intra-trimer hopping Ω (the energy unit, 1 by convention).
    pub hopping: f64,
    /// On-site interaction U.
    pub interaction: f64,
    /// Monomer-trimer coupling ω.
    pub coupling: f64,
    /// Total boson number N.
    pub total: u32,
}

impl ModelParams {
    /// Parameters for a given `UN/Ω` with Ω = 1.
    pub fn from_un(total: u32, un_over_omega: f64, coupling: f64) -> Self {
        ModelParams {
            hopping: 1.0,
            interaction: un_over_omega / total.max(1) as f64,
            coupling,
            total,
        }
    }

    pub fn un_over_omega(&self) -> f64 {
        self.interaction * self.total as f64 / self.hopping
    }

    /// Same model with the monomer decoupled (ω = 0).
    pub fn uncoupled(&self) -> Self {
        ModelParams {
            coupling: 0.0,
            ..*self
        }
    }

    pub fn with_coupling(&self, coupling: f64) -> Self {
        ModelParams { coupling, ..*self }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.interaction.is_finite() && self.interaction > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "on-site interaction must be repulsive (U > 0), got {}",
                self.interaction
            )));
        }
        if !(self.coupling.is_finite() && self.coupling >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "coupling must be non-negative, got {}",
                self.coupling
            )));
        }
        if !(self.hopping.is_finite() && self.hopping >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "hopping must be non-negative, got {}",
                self.hopping
            )));
        }
        Ok(())
    }
}

/// Real symmetric matrix in compressed-row storage. Both triangles are stored
/// and `(i, j)` equals `(j, i)` bit for bit; columns are sorted in each row.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseSymMatrix {
    dim: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl SparseSymMatrix {
    /// Builds the matrix from upper-triangle entries `(i <= j)`, summing
    /// duplicates and mirroring the strict upper part.
    pub fn from_upper(dim: usize, upper: impl IntoIterator<Item = (usize, usize, f64)>) -> Self {
        let mut acc: BTreeMap<(usize, usize), f64> = BTreeMap::new();
        for (i, j, v) in upper {
            debug_assert!(i <= j && j < dim);
            *acc.entry((i, j)).or_insert(0.0) += v;
        }
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); dim];
        for (&(i, j), &v) in &acc {
            if v == 0.0 {
                continue;
            }
            rows[i].push((j, v));
            if i != j {
                rows[j].push((i, v));
            }
        }
        let mut row_ptr = Vec::with_capacity(dim + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        for mut row in rows {
            row.sort_by_key(|&(c, _)| c);
            for (c, v) in row {
                cols.push(c);
                vals.push(v);
            }
            row_ptr.push(cols.len());
        }
        SparseSymMatrix {
            dim,
            row_ptr,
            cols,
            vals,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[r.clone()].iter().copied().zip(self.vals[r].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.cols[r.clone()].binary_search(&j) {
            Ok(k) => self.vals[r.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.dim).map(|i| self.get(i, i)).collect()
    }

    pub fn trace(&self) -> f64 {
        self.diagonal().iter().sum()
    }

    /// Coordinate triples `(row, col, value)` in row-major order.
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.dim).flat_map(move |i| self.row(i).map(move |(j, v)| (i, j, v)))
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.dim, "matvec dimension mismatch");
        (0..self.dim)
            .map(|i| self.row(i).map(|(j, v)| v * x[j]).sum())
            .collect()
    }

    pub fn to_dense(&self) -> ndarray::Array2<f64> {
        let mut a = ndarray::Array2::zeros((self.dim, self.dim));
        for (i, j, v) in self.entries() {
            a[[i, j]] = v;
        }
        a
    }

    /// Principal submatrix on `indices` (in the given order).
    pub fn restrict(&self, indices: &[usize]) -> SparseSymMatrix {
        let pos: std::collections::HashMap<usize, usize> =
            indices.iter().enumerate().map(|(k, &i)| (i, k)).collect();
        let mut upper = Vec::new();
        for (a, &i) in indices.iter().enumerate() {
            for (j, v) in self.row(i) {
                if let Some(&b) = pos.get(&j) {
                    if a <= b {
                        upper.push((a, b, v));
                    }
                }
            }
        }
        SparseSymMatrix::from_upper(indices.len(), upper)
    }

    /// Writes the coordinate dump: a `dim nnz` header followed by one
    /// `row col value` line per stored entry.
    pub fn write_coo<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{} {}", self.dim, self.nnz())?;
        for (i, j, v) in self.entries() {
            writeln!(w, "{i} {j} {v:.16e}")?;
        }
        Ok(())
    }

    pub fn read_coo<R: BufRead>(r: R) -> Result<SparseSymMatrix> {
        let mut lines = r.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Parse("empty matrix dump".into()))??;
        let mut it = header.split_whitespace();
        let parse_usize = |s: Option<&str>, what: &str| -> Result<usize> {
            s.ok_or_else(|| Error::Parse(format!("missing {what}")))?
                .parse()
                .map_err(|e| Error::Parse(format!("bad {what}: {e}")))
        };
        let dim = parse_usize(it.next(), "dim")?;
        let nnz = parse_usize(it.next(), "nnz")?;
        let mut upper = Vec::with_capacity(nnz);
        let mut seen = 0;
        for (lineno, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let mut f = line.split_whitespace();
            let i = parse_usize(f.next(), "row")?;
            let j = parse_usize(f.next(), "col")?;
            let v: f64 = f
                .next()
                .ok_or_else(|| Error::Parse(format!("line {}: missing value", lineno + 2)))?
                .parse()
                .map_err(|e| Error::Parse(format!("line {}: {e}", lineno + 2)))?;
            if i >= dim || j >= dim {
                return Err(Error::Parse(format!("line {}: index out of range", lineno + 2)));
            }
            seen += 1;
            if i <= j {
                upper.push((i, j, v));
            }
        }
        if seen != nnz {
            return Err(Error::Parse(format!("header promises {nnz} entries, found {seen}")));
        }
        Ok(SparseSymMatrix::from_upper(dim, upper))
    }
}

#[derive(Clone, Debug)]
pub struct HamiltonianMatrix {
    pub params: ModelParams,
    pub matrix: SparseSymMatrix,
}

impl HamiltonianMatrix {
    pub fn dim(&self) -> usize {
        self.matrix.dim()
    }
}

const TRIMER_BONDS: [(usize, usize); 3] = [(1, 2), (2, 3), (3, 1)];

/// `H|state>` as a list of `(target, amplitude)` pairs, diagonal term first.
/// Works for any state of the four-mode system.
pub fn apply_to_fock(params: &ModelParams, state: &FockState) -> Vec<(FockState, f64)> {
    let n = state.0;
    let mut out = Vec::with_capacity(13);
    let diag: f64 = n
        .iter()
        .map(|&k| {
            let k = k as f64;
            k * (k - 1.0)
        })
        .sum::<f64>()
        * params.interaction
        / 2.0;
    out.push((*state, diag));

    let mut hop = |i: usize, j: usize, strength: f64| {
        if strength == 0.0 {
            return;
        }
        // a_i† a_j and its conjugate a_j† a_i
        for (to, from) in [(i, j), (j, i)] {
            if n[from] == 0 {
                continue;
            }
            let mut m = n;
            m[from] -= 1;
            m[to] += 1;
            let amp = -0.5 * strength * ((m[to] as f64) * (n[from] as f64)).sqrt();
            out.push((FockState(m), amp));
        }
    };
    for (i, j) in TRIMER_BONDS {
        hop(i, j, params.hopping);
    }
    for i in 1..MODES {
        hop(0, i, params.coupling);
    }
    out
}

/// Sector matrix element rule: `<r_i|H|r_j> = Σ_g <g|H|f_j> s_g`, where `f_j`
/// is representative `j` as a single Fock state and `g` runs over its images
/// that canonicalize onto representative `i` with sign `s_g`.
pub fn build_hamiltonian(params: &ModelParams, sector: &SectorBasis) -> Result<HamiltonianMatrix> {
    if params.total != sector.total() {
        return Err(contract(format!(
            "parameters for N = {} but sector built for N = {}",
            params.total,
            sector.total()
        )));
    }
    let mut upper = Vec::new();
    for j in 0..sector.dim() {
        let rep = sector.representative(j);
        for (target, amp) in apply_to_fock(params, &rep) {
            if let Some((i, sign)) = sector.canonicalize(&target) {
                if i <= j {
                    upper.push((i, j, sign * amp));
                }
            }
        }
    }
    Ok(HamiltonianMatrix {
        params: *params,
        matrix: SparseSymMatrix::from_upper(sector.dim(), upper),
    })
}

/// The Hamiltonian in the complete number-conserving Fock basis.
pub fn full_basis_hamiltonian(params: &ModelParams, full: &FullBasis) -> Result<SparseSymMatrix> {
    if full.modes() != MODES || full.total() != params.total {
        return Err(contract("full basis must have four modes and N matching the parameters"));
    }
    let mut upper = Vec::new();
    for j in 0..full.len() {
        let state = full.fock(j).expect("four modes");
        for (target, amp) in apply_to_fock(params, &state) {
            let i = full.index_of(&target.0).expect("number conserving");
            if i <= j {
                upper.push((i, j, amp));
            }
        }
    }
    Ok(SparseSymMatrix::from_upper(full.len(), upper))
}

/// Block of the uncoupled Hamiltonian `H0 = H(ω = 0)` at fixed `x`.
#[derive(Clone, Debug)]
pub struct UncoupledBlock {
    pub x: XValue,
    /// Sector indices spanned by the block, ascending.
    pub indices: Vec<usize>,
    pub matrix: SparseSymMatrix,
}

/// Partitions the sector by `x = (n2 + n3 + n4)/N` and restricts `H0` to each
/// part. Blocks are returned in ascending `x`.
pub fn uncoupled_blocks(params: &ModelParams, sector: &SectorBasis) -> Result<Vec<UncoupledBlock>> {
    let h0 = build_hamiltonian(&params.uncoupled(), sector)?;
    let mut groups: BTreeMap<XValue, Vec<usize>> = BTreeMap::new();
    for i in 0..sector.dim() {
        groups.entry(sector.x_value(i)).or_default().push(i);
    }
    Ok(groups
        .into_iter()
        .map(|(x, indices)| {
            let matrix = h0.matrix.restrict(&indices);
            UncoupledBlock { x, indices, matrix }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::build_sector_basis;

    #[test]
    fn three_bosons_single_entry() {
        for (u, w) in [(0.7, 0.0), (2.5, 0.3), (1.0, 1.0)] {
            let params = ModelParams {
                hopping: 1.0,
                interaction: u,
                coupling: w,
                total: 3,
            };
            let h = build_hamiltonian(&params, &build_sector_basis(3)).unwrap();
            assert_eq!(h.dim(), 1);
            assert!((h.matrix.get(0, 0) - (1.5 + u)).abs() < 1e-14);
        }
    }

    #[test]
    fn n_mismatch_is_rejected() {
        let params = ModelParams::from_un(5, 10.0, 0.1);
        assert!(build_hamiltonian(&params, &build_sector_basis(6)).is_err());
    }

    #[test]
    fn block_sizes_n6() {
        let params = ModelParams::from_un(6, 10.0, 0.0);
        let blocks = uncoupled_blocks(&params, &build_sector_basis(6)).unwrap();
        let sizes: Vec<(u32, usize)> = blocks.iter().map(|b| (b.x.trimer, b.indices.len())).collect();
        assert_eq!(sizes, vec![(3, 1), (4, 1), (5, 2), (6, 3)]);
    }

    #[test]
    fn three_bosons_single_block() {
        let params = ModelParams::from_un(3, 10.0, 0.2);
        let blocks = uncoupled_blocks(&params, &build_sector_basis(3)).unwrap();
        assert_eq!(blocks.len(), 1);
        assert_eq!(blocks[0].x, XValue::new(3, 3));
    }

    #[test]
    fn exact_symmetry() {
        let params = ModelParams::from_un(12, 10.0, 0.3);
        let h = build_hamiltonian(&params, &build_sector_basis(12)).unwrap();
        for (i, j, v) in h.matrix.entries() {
            assert_eq!(v.to_bits(), h.matrix.get(j, i).to_bits());
        }
    }

    #[test]
    fn coo_dump_round_trips() {
        let params = ModelParams::from_un(9, 10.0, 0.1);
        let h = build_hamiltonian(&params, &build_sector_basis(9)).unwrap();
        let mut buf = Vec::new();
        h.matrix.write_coo(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with(&format!("{} {}\n", h.dim(), h.matrix.nnz())));
        let back = SparseSymMatrix::read_coo(std::io::Cursor::new(buf)).unwrap();
        assert_eq!(back, h.matrix);
    }

    #[test]
    fn negative_interaction_rejected() {
        let mut p = ModelParams::from_un(10, 10.0, 0.1);
        p.interaction = -1.0;
        assert!(p.validate().is_err());
    }
}
