//! Diagonalization, uncoupled-level labeling and level statistics.

use std::collections::VecDeque;

use ndarray::{Array1, Array2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::{SectorBasis, XValue};
use crate::error::{Error, Result};
use crate::hamiltonian::{uncoupled_blocks, HamiltonianMatrix, ModelParams, SparseSymMatrix, UncoupledBlock};
use crate::linalg;

/// Degree of the polynomial fitted to the level staircase.
pub const DEFAULT_UNFOLD_DEGREE: usize = 10;
/// Unfolding below this many levels is refused.
pub const MIN_UNFOLD_LEVELS: usize = 50;
/// Fraction of levels dropped at each spectrum edge before statistics.
pub const EDGE_FRACTION: f64 = 0.02;
/// Consecutive levels per chaos-map window.
pub const DEFAULT_CHAOS_WINDOW: usize = 21;

/// Reference means of the spacing ratio.
pub const POISSON_MEAN_R: f64 = 0.386_294_361_119_890_6; // 2 ln 2 - 1
pub const GOE_MEAN_R: f64 = 0.5307;

#[derive(Clone, Debug)]
pub struct Spectrum {
    pub params: ModelParams,
    /// Ascending.
    pub eigenvalues: Vec<f64>,
    /// Orthonormal eigenvectors as columns, aligned with `eigenvalues`.
    pub eigenvectors: Array2<f64>,
}

impl Spectrum {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }
}

/// Flips each column so its largest-magnitude component is positive (the
/// first such component on ties).
fn fix_signs(v: &mut Array2<f64>) {
    for mut col in v.columns_mut() {
        let mut best = 0.0f64;
        let mut sign = 1.0;
        for &c in col.iter() {
            if c.abs() > best {
                best = c.abs();
                sign = c.signum();
            }
        }
        if sign < 0.0 {
            col.mapv_inplace(|c| -c);
        }
    }
}

pub(crate) fn eigen_sparse(m: &SparseSymMatrix) -> Result<(Vec<f64>, Array2<f64>)> {
    let (w, mut v) = linalg::symmetric_eigen(m.to_dense())?;
    fix_signs(&mut v);
    Ok((w, v))
}

pub fn diagonalize(h: &HamiltonianMatrix) -> Result<Spectrum> {
    if h.dim() == 0 {
        return Err(Error::Contract("cannot diagonalize an empty sector".into()));
    }
    let (eigenvalues, eigenvectors) = eigen_sparse(&h.matrix)?;
    Ok(Spectrum {
        params: h.params,
        eigenvalues,
        eigenvectors,
    })
}

/// Eigen-decomposition of one uncoupled block.
#[derive(Clone, Debug)]
pub struct BlockSpectrum {
    pub x: XValue,
    /// Sector indices spanned by the block.
    pub indices: Vec<usize>,
    pub energies: Vec<f64>,
    /// Block-local eigenvectors as columns.
    pub vectors: Array2<f64>,
}

pub fn diagonalize_blocks(blocks: &[UncoupledBlock]) -> Result<Vec<BlockSpectrum>> {
    blocks
        .par_iter()
        .map(|b| {
            let (energies, vectors) = eigen_sparse(&b.matrix)?;
            Ok(BlockSpectrum {
                x: b.x,
                indices: b.indices.clone(),
                energies,
                vectors,
            })
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct UncoupledLevel {
    pub x: XValue,
    /// Index within the x-block, ascending in energy.
    pub nu: usize,
    pub energy: f64,
    /// Scaled energy over the whole sector spectrum.
    pub eps: f64,
    /// Position of the owning block.
    pub block: usize,
}

/// Labels every block eigenstate by `(x, ν_x, E, ε)`, with ε normalized over
/// the union of all block spectra.
pub fn label_uncoupled_levels(blocks: &[BlockSpectrum]) -> Vec<UncoupledLevel> {
    let (lo, hi) = energy_range(blocks.iter().flat_map(|b| b.energies.iter().copied()));
    let width = hi - lo;
    let mut levels = Vec::new();
    for (bi, b) in blocks.iter().enumerate() {
        for (nu, &energy) in b.energies.iter().enumerate() {
            let eps = if width > 0.0 { (energy - lo) / width } else { 0.0 };
            levels.push(UncoupledLevel {
                x: b.x,
                nu,
                energy,
                eps: eps.clamp(0.0, 1.0),
                block: bi,
            });
        }
    }
    levels
}

fn energy_range(it: impl Iterator<Item = f64>) -> (f64, f64) {
    it.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), e| (lo.min(e), hi.max(e)))
}

/// All uncoupled eigenstates of a sector, labeled.
#[derive(Clone, Debug)]
pub struct UncoupledSystem {
    pub params: ModelParams,
    pub sector_dim: usize,
    pub blocks: Vec<BlockSpectrum>,
    pub levels: Vec<UncoupledLevel>,
    pub e_min: f64,
    pub e_max: f64,
}

impl UncoupledSystem {
    pub fn new(params: &ModelParams, sector: &SectorBasis) -> Result<Self> {
        let blocks = diagonalize_blocks(&uncoupled_blocks(params, sector)?)?;
        let levels = label_uncoupled_levels(&blocks);
        let (e_min, e_max) = energy_range(levels.iter().map(|l| l.energy));
        Ok(UncoupledSystem {
            params: params.uncoupled(),
            sector_dim: sector.dim(),
            blocks,
            levels,
            e_min,
            e_max,
        })
    }

    pub fn scaled_energy(&self, energy: f64) -> f64 {
        (energy - self.e_min) / (self.e_max - self.e_min)
    }

    pub fn energy_at(&self, eps: f64) -> f64 {
        self.e_min + eps * (self.e_max - self.e_min)
    }

    /// All uncoupled energies, ascending.
    pub fn sorted_energies(&self) -> Vec<f64> {
        let mut e: Vec<f64> = self.levels.iter().map(|l| l.energy).collect();
        e.sort_by(f64::total_cmp);
        e
    }

    pub fn x_values(&self) -> Vec<XValue> {
        self.blocks.iter().map(|b| b.x).collect()
    }

    pub fn block_at(&self, x: XValue) -> Option<usize> {
        self.blocks.iter().position(|b| b.x == x)
    }

    /// Level in block `x` whose ε is nearest `eps`; the lower-energy level wins
    /// ties.
    pub fn find_level(&self, x: XValue, eps: f64) -> Result<usize> {
        let bi = self.block_at(x).ok_or_else(|| Error::MissingBlock {
            requested: format!("{x} ({:.4})", x.value()),
            available: self
                .blocks
                .iter()
                .map(|b| format!("{:.4}", b.x.value()))
                .collect::<Vec<_>>()
                .join(", "),
        })?;
        let mut best: Option<(usize, f64)> = None;
        for (i, l) in self.levels.iter().enumerate().filter(|(_, l)| l.block == bi) {
            let d = (l.eps - eps).abs();
            if best.is_none_or(|(_, bd)| d < bd) {
                best = Some((i, d));
            }
        }
        best.map(|(i, _)| i).ok_or_else(|| Error::MissingBlock {
            requested: format!("{x}"),
            available: "block is empty".into(),
        })
    }

    /// Eigenvector of level `i` in sector coordinates.
    pub fn level_vector(&self, i: usize) -> Vec<f64> {
        let l = &self.levels[i];
        let b = &self.blocks[l.block];
        let mut v = vec![0.0; self.sector_dim];
        for (k, &row) in b.indices.iter().enumerate() {
            v[row] = b.vectors[[k, l.nu]];
        }
        v
    }
}

/// Drops `floor(fraction * n)` levels at each end.
pub fn trim_edges(levels: &[f64], fraction: f64) -> &[f64] {
    let cut = (fraction * levels.len() as f64).floor() as usize;
    if 2 * cut >= levels.len() {
        return &levels[0..0];
    }
    &levels[cut..levels.len() - cut]
}

fn chebyshev_row(z: f64, degree: usize) -> Vec<f64> {
    let mut t = Vec::with_capacity(degree + 1);
    t.push(1.0);
    if degree >= 1 {
        t.push(z);
    }
    for k in 2..=degree {
        let next = 2.0 * z * t[k - 1] - t[k - 2];
        t.push(next);
    }
    t
}

/// Unfolded nearest-neighbour spacings.
///
/// The cumulative level count is fitted by a polynomial of degree `fit_degree`
/// (Chebyshev basis on the rescaled energy axis); levels are mapped through the
/// fit, [`EDGE_FRACTION`] of them dropped at each end, and the remaining gaps
/// are normalized to unit mean.
pub fn unfold_spectrum(levels: &[f64], fit_degree: usize) -> Result<Vec<f64>> {
    let n = levels.len();
    if n < MIN_UNFOLD_LEVELS {
        return Err(Error::TooFewLevels(n, MIN_UNFOLD_LEVELS));
    }
    let mut sorted = levels.to_vec();
    sorted.sort_by(f64::total_cmp);
    let (lo, hi) = (sorted[0], sorted[n - 1]);
    if hi <= lo {
        return Err(Error::Contract("spectrum has zero width".into()));
    }
    let scale = |e: f64| 2.0 * (e - lo) / (hi - lo) - 1.0;
    let degree = fit_degree.min(n - 2);
    let mut a = Array2::zeros((n, degree + 1));
    for (i, &e) in sorted.iter().enumerate() {
        for (k, t) in chebyshev_row(scale(e), degree).into_iter().enumerate() {
            a[[i, k]] = t;
        }
    }
    let staircase: Vec<f64> = (0..n).map(|i| i as f64 + 0.5).collect();
    let coeffs = linalg::least_squares(&a, &staircase)?;
    let mapped: Vec<f64> = sorted
        .iter()
        .map(|&e| {
            chebyshev_row(scale(e), degree)
                .iter()
                .zip(coeffs.iter())
                .map(|(t, c)| t * c)
                .sum()
        })
        .collect();
    let interior = trim_edges(&mapped, EDGE_FRACTION);
    let spacings: Vec<f64> = interior.windows(2).map(|w| w[1] - w[0]).collect();
    let mean = spacings.iter().sum::<f64>() / spacings.len() as f64;
    Ok(spacings.into_iter().map(|s| s / mean).collect())
}

/// Kolmogorov-Smirnov distance between a sample and a reference CDF.
pub fn ks_distance(samples: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    s.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

/// CDF of the exponential spacing law `e^{-s}`.
pub fn poisson_cdf(s: f64) -> f64 {
    1.0 - (-s.max(0.0)).exp()
}

/// CDF of the Wigner surmise `(π/2) s e^{-π s²/4}`.
pub fn wigner_cdf(s: f64) -> f64 {
    1.0 - (-std::f64::consts::PI * s * s / 4.0).exp()
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RatioStats {
    pub ratios: Vec<f64>,
    /// Pairs of consecutive zero gaps that were skipped.
    pub degenerate_skipped: usize,
}

impl RatioStats {
    pub fn mean(&self) -> Option<f64> {
        if self.ratios.is_empty() {
            None
        } else {
            Some(self.ratios.iter().sum::<f64>() / self.ratios.len() as f64)
        }
    }
}

/// Adjacent-gap ratios `min(s_i, s_{i+1}) / max(s_i, s_{i+1})` on raw gaps.
pub fn spacing_ratio(levels: &[f64]) -> RatioStats {
    let mut stats = RatioStats::default();
    if levels.len() < 3 {
        return stats;
    }
    for w in levels.windows(3) {
        let a = w[1] - w[0];
        let b = w[2] - w[1];
        let hi = a.max(b);
        if hi == 0.0 {
            stats.degenerate_skipped += 1;
            continue;
        }
        stats.ratios.push(a.min(b) / hi);
    }
    stats
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChaosCell {
    pub x: f64,
    pub eps: f64,
    /// `None` marks an empty cell (block shorter than the window).
    pub mean_r: Option<f64>,
    pub n_levels: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ChaosMap {
    pub window: usize,
    pub cells: Vec<ChaosCell>,
}

/// Sliding-window mean of `r` inside each x-block; each window of `window`
/// consecutive levels contributes one cell at the ε of its central level.
pub fn chaos_map(system: &UncoupledSystem, window: usize) -> ChaosMap {
    let mut cells = Vec::new();
    for (bi, b) in system.blocks.iter().enumerate() {
        let x = b.x.value();
        let eps: Vec<f64> = system
            .levels
            .iter()
            .filter(|l| l.block == bi)
            .map(|l| l.eps)
            .collect();
        let n = b.energies.len();
        if window < 3 || n < window {
            let mean_eps = if n == 0 { f64::NAN } else { eps.iter().sum::<f64>() / n as f64 };
            cells.push(ChaosCell {
                x,
                eps: mean_eps,
                mean_r: None,
                n_levels: n,
            });
            continue;
        }
        for start in 0..=(n - window) {
            let stats = spacing_ratio(&b.energies[start..start + window]);
            cells.push(ChaosCell {
                x,
                eps: eps[start + window / 2],
                mean_r: stats.mean(),
                n_levels: window,
            });
        }
    }
    ChaosMap { window, cells }
}

/// Chaos-map cells averaged onto a regular ε grid, one row per x value.
#[derive(Clone, Debug)]
pub struct ChaosGrid {
    pub xs: Vec<f64>,
    pub eps_bin: f64,
    pub n_eps: usize,
    values: Vec<Option<f64>>,
}

impl ChaosMap {
    pub fn grid(&self, eps_bin: f64) -> ChaosGrid {
        let mut xs: Vec<f64> = self.cells.iter().map(|c| c.x).collect();
        xs.sort_by(f64::total_cmp);
        xs.dedup();
        let n_eps = (1.0 / eps_bin).ceil() as usize;
        let mut sum = vec![0.0; xs.len() * n_eps];
        let mut count = vec![0usize; xs.len() * n_eps];
        for c in &self.cells {
            let (Some(r), true) = (c.mean_r, c.eps.is_finite()) else {
                continue;
            };
            let ix = xs.iter().position(|&x| x == c.x).expect("x collected above");
            let ie = ((c.eps / eps_bin).floor() as usize).min(n_eps - 1);
            sum[ix * n_eps + ie] += r;
            count[ix * n_eps + ie] += 1;
        }
        let values = sum
            .iter()
            .zip(&count)
            .map(|(&s, &k)| if k > 0 { Some(s / k as f64) } else { None })
            .collect();
        ChaosGrid {
            xs,
            eps_bin,
            n_eps,
            values,
        }
    }
}

impl ChaosGrid {
    pub fn value(&self, ix: usize, ie: usize) -> Option<f64> {
        self.values[ix * self.n_eps + ie]
    }

    pub fn locate(&self, x: f64, eps: f64) -> (usize, usize) {
        let ix = self
            .xs
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - x).abs().total_cmp(&(b.1 - x).abs()))
            .map(|(i, _)| i)
            .unwrap_or(0);
        let ie = ((eps / self.eps_bin).floor().max(0.0) as usize).min(self.n_eps - 1);
        (ix, ie)
    }

    /// Populated cell in the row nearest `x` whose ε bin center is closest to
    /// `eps`, if one lies within `max_offset`.
    pub fn nearest_populated(&self, x: f64, eps: f64, max_offset: f64) -> Option<(usize, usize)> {
        let (ix, _) = self.locate(x, eps);
        (0..self.n_eps)
            .filter(|&ie| self.value(ix, ie).is_some())
            .map(|ie| (ie, ((ie as f64 + 0.5) * self.eps_bin - eps).abs()))
            .filter(|&(_, d)| d <= max_offset)
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .map(|(ie, _)| (ix, ie))
    }

    /// 4-connected component of cells satisfying `pred`, grown from `start`.
    /// Empty when the start cell is unpopulated or fails the predicate.
    pub fn connected_region(&self, start: (usize, usize), pred: impl Fn(f64) -> bool) -> Vec<(usize, usize)> {
        let ok = |c: (usize, usize)| self.value(c.0, c.1).is_some_and(&pred);
        if !ok(start) {
            return Vec::new();
        }
        let mut seen = vec![false; self.values.len()];
        let mut queue = VecDeque::from([start]);
        seen[start.0 * self.n_eps + start.1] = true;
        let mut region = Vec::new();
        while let Some((ix, ie)) = queue.pop_front() {
            region.push((ix, ie));
            let mut neighbours = Vec::with_capacity(4);
            if ix > 0 {
                neighbours.push((ix - 1, ie));
            }
            if ix + 1 < self.xs.len() {
                neighbours.push((ix + 1, ie));
            }
            if ie > 0 {
                neighbours.push((ix, ie - 1));
            }
            if ie + 1 < self.n_eps {
                neighbours.push((ix, ie + 1));
            }
            for c in neighbours {
                let k = c.0 * self.n_eps + c.1;
                if !seen[k] && ok(c) {
                    seen[k] = true;
                    queue.push_back(c);
                }
            }
        }
        region
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum SpacingMode {
    Global,
    /// Only levels with `eps_lo <= ε <= eps_hi` (ε over the given levels).
    Local { eps_lo: f64, eps_hi: f64 },
}

/// Mean level spacing of an ascending spectrum.
pub fn mean_level_spacing(levels: &[f64], mode: SpacingMode) -> Result<f64> {
    if levels.len() < 2 {
        return Err(Error::EmptyRange(format!("{} levels", levels.len())));
    }
    let (lo, hi) = (levels[0], levels[levels.len() - 1]);
    match mode {
        SpacingMode::Global => Ok((hi - lo) / (levels.len() - 1) as f64),
        SpacingMode::Local { eps_lo, eps_hi } => {
            let inside: Vec<f64> = levels
                .iter()
                .copied()
                .filter(|&e| {
                    let eps = (e - lo) / (hi - lo);
                    eps >= eps_lo && eps <= eps_hi
                })
                .collect();
            if inside.len() < 2 {
                return Err(Error::EmptyRange(format!(
                    "{} levels with {eps_lo} <= eps <= {eps_hi}",
                    inside.len()
                )));
            }
            let gaps: f64 = inside.windows(2).map(|w| w[1] - w[0]).sum();
            Ok(gaps / (inside.len() - 1) as f64)
        }
    }
}

/// Eigenvalue reconstruction error `max_i |(V diag(E) Vᵀ - H)_{ij}|` over the
/// requested rows, relative to the largest matrix entry.
pub fn reconstruction_error(spectrum: &Spectrum, h: &SparseSymMatrix, rows: &[usize]) -> f64 {
    let v = &spectrum.eigenvectors;
    let e = Array1::from(spectrum.eigenvalues.clone());
    let scale = h.entries().map(|(_, _, x)| x.abs()).fold(0.0, f64::max).max(1e-300);
    let mut worst = 0.0f64;
    for &i in rows {
        let vi = v.row(i).to_owned() * &e;
        let recon = v.dot(&vi);
        for j in 0..h.dim() {
            worst = worst.max((recon[j] - h.get(i, j)).abs());
        }
    }
    worst / scale
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::build_sector_basis;
    use crate::hamiltonian::build_hamiltonian;

    #[test]
    fn ladder_ratios_and_spacings() {
        let ladder = [0.0, 1.0, 2.0, 3.0];
        assert_eq!(spacing_ratio(&ladder).ratios, vec![1.0, 1.0]);
        let long: Vec<f64> = (0..200).map(|i| 0.5 * i as f64).collect();
        for s in unfold_spectrum(&long, DEFAULT_UNFOLD_DEGREE).unwrap() {
            assert!((s - 1.0).abs() < 1e-8);
        }
        assert!((mean_level_spacing(&long, SpacingMode::Global).unwrap() - 0.5).abs() < 1e-12);
        let local = mean_level_spacing(&long, SpacingMode::Local { eps_lo: 0.2, eps_hi: 0.3 }).unwrap();
        assert!((local - 0.5).abs() < 1e-12);
    }

    #[test]
    fn too_few_levels_for_unfolding() {
        let short: Vec<f64> = (0..20).map(f64::from).collect();
        assert!(matches!(unfold_spectrum(&short, 10), Err(Error::TooFewLevels(20, _))));
    }

    #[test]
    fn degenerate_gaps_are_counted() {
        let stats = spacing_ratio(&[0.0, 1.0, 1.0, 1.0, 3.0]);
        assert_eq!(stats.degenerate_skipped, 1);
        assert_eq!(stats.ratios, vec![0.0, 0.0]);
    }

    #[test]
    fn empty_local_range() {
        let levels = [0.0, 1.0, 10.0];
        assert!(mean_level_spacing(&levels, SpacingMode::Local { eps_lo: 0.2, eps_hi: 0.3 }).is_err());
        assert!(mean_level_spacing(&[1.0], SpacingMode::Global).is_err());
    }

    #[test]
    fn n3_eigenvalue() {
        let params = ModelParams::from_un(3, 3.0, 0.4);
        let h = build_hamiltonian(&params, &build_sector_basis(3)).unwrap();
        let s = diagonalize(&h).unwrap();
        assert!((s.eigenvalues[0] - (1.5 + params.interaction)).abs() < 1e-12);
    }

    #[test]
    fn labels_n6() {
        let params = ModelParams::from_un(6, 10.0, 0.0);
        let sys = UncoupledSystem::new(&params, &build_sector_basis(6)).unwrap();
        let top: Vec<usize> = sys
            .levels
            .iter()
            .filter(|l| l.x == XValue::new(6, 6))
            .map(|l| l.nu)
            .collect();
        assert_eq!(top, vec![0, 1, 2]);
        let eps: Vec<f64> = sys.levels.iter().map(|l| l.eps).collect();
        assert_eq!(eps.iter().copied().fold(f64::INFINITY, f64::min), 0.0);
        assert_eq!(eps.iter().copied().fold(f64::NEG_INFINITY, f64::max), 1.0);
    }

    #[test]
    fn nearest_level_prefers_lower_energy_on_ties() {
        let params = ModelParams::from_un(6, 10.0, 0.0);
        let sys = UncoupledSystem::new(&params, &build_sector_basis(6)).unwrap();
        let x = XValue::new(6, 6);
        let bi = sys.block_at(x).unwrap();
        let ids: Vec<usize> = (0..sys.levels.len()).filter(|&i| sys.levels[i].block == bi).collect();
        let mid = 0.5 * (sys.levels[ids[0]].eps + sys.levels[ids[1]].eps);
        assert_eq!(sys.find_level(x, mid).unwrap(), ids[0]);
        assert!(sys.find_level(XValue::new(1, 6), 0.5).is_err());
    }

    #[test]
    fn whole_block_window_matches_block_mean() {
        let params = ModelParams::from_un(20, 10.0, 0.0);
        let sys = UncoupledSystem::new(&params, &build_sector_basis(20)).unwrap();
        let b = sys.blocks.iter().max_by_key(|b| b.energies.len()).unwrap();
        let w = b.energies.len();
        let map = chaos_map(&sys, w);
        let cells: Vec<&ChaosCell> = map.cells.iter().filter(|c| c.x == b.x.value()).collect();
        assert_eq!(cells.len(), 1);
        let expect = spacing_ratio(&b.energies).mean().unwrap();
        assert!((cells[0].mean_r.unwrap() - expect).abs() < 1e-15);
        // blocks shorter than the window are flagged, not zeroed
        assert!(map.cells.iter().any(|c| c.mean_r.is_none()));
    }

    #[test]
    fn grid_flood_fill() {
        let map = ChaosMap {
            window: 3,
            cells: vec![
                ChaosCell { x: 0.5, eps: 0.11, mean_r: Some(0.6), n_levels: 3 },
                ChaosCell { x: 0.5, eps: 0.13, mean_r: Some(0.6), n_levels: 3 },
                ChaosCell { x: 0.6, eps: 0.11, mean_r: Some(0.55), n_levels: 3 },
                ChaosCell { x: 0.6, eps: 0.35, mean_r: Some(0.7), n_levels: 3 },
            ],
        };
        let g = map.grid(0.1);
        let start = g.locate(0.6, 0.15);
        let region = g.connected_region(start, |r| r > 0.5);
        assert_eq!(region.len(), 2);
        assert!(g.connected_region(g.locate(0.6, 0.25), |r| r > 0.5).is_empty());
        assert_eq!(g.nearest_populated(0.6, 0.31, 0.06), Some((1, 3)));
    }
}
