//! Quantum dynamics of an uncoupled eigenstate under the coupled Hamiltonian.

use ndarray::{s, Array2};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::basis::{SectorBasis, XValue};
use crate::error::{contract, Error, Result};
use crate::hamiltonian::HamiltonianMatrix;
use crate::spectral::{Spectrum, UncoupledSystem};

/// Default evolution horizon in units of 1/Ω.
pub const DEFAULT_HORIZON: f64 = 2000.0;
/// Default number of samples in the averaging window `[T/2, T]`.
pub const DEFAULT_SAMPLES: usize = 400;

/// Columns per dgemm call when propagating many sample times.
const BATCH: usize = 128;

/// State expanded in the coupled eigenbasis.
#[derive(Clone, Debug)]
pub struct QuantumState<'a> {
    pub spectrum: &'a Spectrum,
    pub coefficients: Vec<Complex64>,
    pub time: f64,
}

impl QuantumState<'_> {
    pub fn norm(&self) -> f64 {
        self.coefficients.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn energy(&self) -> f64 {
        self.coefficients
            .iter()
            .zip(&self.spectrum.eigenvalues)
            .map(|(c, e)| c.norm_sqr() * e)
            .sum()
    }

    /// Amplitudes in the sector Fock basis.
    pub fn sector_amplitudes(&self) -> Vec<Complex64> {
        let v = &self.spectrum.eigenvectors;
        let re = v.dot(&ndarray::Array1::from_iter(self.coefficients.iter().map(|c| c.re)));
        let im = v.dot(&ndarray::Array1::from_iter(self.coefficients.iter().map(|c| c.im)));
        re.iter().zip(im.iter()).map(|(&a, &b)| Complex64::new(a, b)).collect()
    }
}

/// Trimer occupation of every sector state, the index into a
/// [`MonomerDensity`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PopulationLabels {
    pub total: u32,
    pub trimer: Vec<u32>,
}

impl PopulationLabels {
    pub fn new(sector: &SectorBasis) -> Self {
        PopulationLabels {
            total: sector.total(),
            trimer: (0..sector.dim()).map(|i| sector.x_value(i).trimer).collect(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum DensityOrigin {
    Instant { t: f64 },
    Average { t_lo: f64, t_hi: f64, samples: usize },
    Thermal,
    Ensemble { t: f64, members: usize },
}

/// Diagonal of the reduced monomer density matrix, indexed by the trimer
/// occupation `k` (so `x = k / N`) on the full grid `k = 0..=N`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonomerDensity {
    pub total: u32,
    pub probabilities: Vec<f64>,
    pub origin: DensityOrigin,
}

impl MonomerDensity {
    pub fn zeros(total: u32, origin: DensityOrigin) -> Self {
        MonomerDensity {
            total,
            probabilities: vec![0.0; total as usize + 1],
            origin,
        }
    }

    pub fn x_values(&self) -> impl Iterator<Item = f64> + '_ {
        (0..=self.total).map(move |k| XValue::new(k, self.total).value())
    }

    pub fn at(&self, x: XValue) -> f64 {
        if x.total != self.total {
            return 0.0;
        }
        self.probabilities[x.trimer as usize]
    }

    pub fn sum(&self) -> f64 {
        self.probabilities.iter().sum()
    }

    pub fn mean_x(&self) -> f64 {
        self.x_values().zip(&self.probabilities).map(|(x, p)| x * p).sum()
    }
}

/// Picks the uncoupled level nearest `(x0, eps0)` and expands it in the
/// coupled eigenbasis.
pub fn prepare_initial<'a>(
    spectrum: &'a Spectrum,
    uncoupled: &UncoupledSystem,
    x0: XValue,
    eps0: f64,
) -> Result<(QuantumState<'a>, usize)> {
    if uncoupled.sector_dim != spectrum.dim() {
        return Err(contract(format!(
            "uncoupled levels span {} states but the spectrum has {}",
            uncoupled.sector_dim,
            spectrum.dim()
        )));
    }
    let level = uncoupled.find_level(x0, eps0)?;
    let phi = ndarray::Array1::from(uncoupled.level_vector(level));
    let c = spectrum.eigenvectors.t().dot(&phi);
    let state = QuantumState {
        spectrum,
        coefficients: c.iter().map(|&a| Complex64::new(a, 0.0)).collect(),
        time: 0.0,
    };
    Ok((state, level))
}

/// Advances the state by `dt`: each coefficient picks up `e^{-i E_m dt}`.
pub fn evolve<'a>(state: &QuantumState<'a>, dt: f64) -> QuantumState<'a> {
    let coefficients = state
        .coefficients
        .iter()
        .zip(&state.spectrum.eigenvalues)
        .map(|(c, &e)| c * Complex64::from_polar(1.0, -e * dt))
        .collect();
    QuantumState {
        spectrum: state.spectrum,
        coefficients,
        time: state.time + dt,
    }
}

fn bin_population(labels: &PopulationLabels, weight: impl Fn(usize) -> f64, origin: DensityOrigin) -> MonomerDensity {
    let mut d = MonomerDensity::zeros(labels.total, origin);
    for (i, &k) in labels.trimer.iter().enumerate() {
        d.probabilities[k as usize] += weight(i);
    }
    d
}

/// `P(x) = Σ_ν |<x,ν|ψ>|²`, summed directly over the sector states with
/// trimer occupation `xN` (the ν-sum over a complete block basis).
pub fn population_distribution(state: &QuantumState, labels: &PopulationLabels) -> Result<MonomerDensity> {
    if labels.trimer.len() != state.spectrum.dim() {
        return Err(contract("population labels do not match the spectrum dimension"));
    }
    let psi = state.sector_amplitudes();
    Ok(bin_population(labels, |i| psi[i].norm_sqr(), DensityOrigin::Instant { t: state.time }))
}

/// Populations at each of `times` (absolute), batched through dense matrix
/// products.
pub fn population_series(state: &QuantumState, labels: &PopulationLabels, times: &[f64]) -> Result<Vec<MonomerDensity>> {
    let dim = state.spectrum.dim();
    if labels.trimer.len() != dim {
        return Err(contract("population labels do not match the spectrum dimension"));
    }
    let v = &state.spectrum.eigenvectors;
    let e = &state.spectrum.eigenvalues;
    let mut out = Vec::with_capacity(times.len());
    for chunk in times.chunks(BATCH) {
        let m = chunk.len();
        // real parts in columns 0..m, imaginary parts in m..2m
        let mut coeffs = Array2::<f64>::zeros((dim, 2 * m));
        for (j, &t) in chunk.iter().enumerate() {
            let dt = t - state.time;
            for (k, (c, &ek)) in state.coefficients.iter().zip(e).enumerate() {
                let z = c * Complex64::from_polar(1.0, -ek * dt);
                coeffs[[k, j]] = z.re;
                coeffs[[k, m + j]] = z.im;
            }
        }
        let psi = v.dot(&coeffs);
        for (j, &t) in chunk.iter().enumerate() {
            let re = psi.slice(s![.., j]);
            let im = psi.slice(s![.., m + j]);
            out.push(bin_population(
                labels,
                |i| re[i] * re[i] + im[i] * im[i],
                DensityOrigin::Instant { t },
            ));
        }
    }
    Ok(out)
}

/// `-Σ p ln p` with `0 ln 0 = 0`.
pub fn entropy(density: &MonomerDensity) -> f64 {
    density
        .probabilities
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| -p * p.ln())
        .sum()
}

/// `samples` equally spaced times from `t_lo` to `t_hi` inclusive.
pub fn sample_times(t_lo: f64, t_hi: f64, samples: usize) -> Vec<f64> {
    let step = (t_hi - t_lo) / (samples - 1) as f64;
    (0..samples).map(|i| t_lo + step * i as f64).collect()
}

fn check_window(t_lo: f64, t_hi: f64, samples: usize) -> Result<()> {
    if !(t_lo >= 0.0 && t_hi > t_lo) {
        return Err(Error::InvalidParameter(format!(
            "averaging window needs 0 <= t_lo < t_hi, got [{t_lo}, {t_hi}]"
        )));
    }
    if samples < 2 {
        return Err(Error::InvalidParameter("averaging needs at least 2 samples".into()));
    }
    Ok(())
}

/// Arithmetic mean of densities sharing one grid.
pub fn mean_density(series: &[MonomerDensity], origin: DensityOrigin) -> Result<MonomerDensity> {
    let first = series.first().ok_or_else(|| contract("cannot average an empty series"))?;
    let mut avg = MonomerDensity::zeros(first.total, origin);
    for d in series {
        if d.total != first.total {
            return Err(contract("densities on different grids"));
        }
        for (a, p) in avg.probabilities.iter_mut().zip(&d.probabilities) {
            *a += p;
        }
    }
    let n = series.len() as f64;
    avg.probabilities.iter_mut().for_each(|a| *a /= n);
    Ok(avg)
}

pub fn time_average(
    state: &QuantumState,
    labels: &PopulationLabels,
    t_lo: f64,
    t_hi: f64,
    samples: usize,
) -> Result<MonomerDensity> {
    check_window(t_lo, t_hi, samples)?;
    let series = population_series(state, labels, &sample_times(t_lo, t_hi, samples))?;
    mean_density(&series, DensityOrigin::Average { t_lo, t_hi, samples })
}

/// Infinite-time average `Σ_m |c_m|² P_m(x)`, exact for a nondegenerate
/// spectrum.
pub fn diagonal_ensemble(state: &QuantumState, labels: &PopulationLabels) -> Result<MonomerDensity> {
    let v = &state.spectrum.eigenvectors;
    if labels.trimer.len() != v.nrows() {
        return Err(contract("population labels do not match the spectrum dimension"));
    }
    let weights: Vec<f64> = state.coefficients.iter().map(|c| c.norm_sqr()).collect();
    let origin = DensityOrigin::Average {
        t_lo: 0.0,
        t_hi: f64::INFINITY,
        samples: 0,
    };
    let mut d = MonomerDensity::zeros(labels.total, origin);
    for (i, row) in v.rows().into_iter().enumerate() {
        let p: f64 = row.iter().zip(&weights).map(|(a, w)| a * a * w).sum();
        d.probabilities[labels.trimer[i] as usize] += p;
    }
    Ok(d)
}

/// Mean and width of the coupled energy on a sector vector.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyWidth {
    pub mean: f64,
    pub width: f64,
}

/// `⟨H⟩` and `sqrt(⟨H²⟩ − ⟨H⟩²)` from the sparse quadratic form.
pub fn energy_width(h: &HamiltonianMatrix, phi: &[f64]) -> Result<EnergyWidth> {
    if phi.len() != h.dim() {
        return Err(contract("vector length differs from the Hamiltonian dimension"));
    }
    let hphi = h.matrix.matvec(phi);
    let mean: f64 = phi.iter().zip(&hphi).map(|(a, b)| a * b).sum();
    let second: f64 = hphi.iter().map(|a| a * a).sum();
    Ok(EnergyWidth {
        mean,
        width: (second - mean * mean).max(0.0).sqrt(),
    })
}

/// The same moments from the eigenbasis populations.
pub fn spectral_energy_width(state: &QuantumState) -> EnergyWidth {
    let (mut m1, mut m2) = (0.0, 0.0);
    for (c, &e) in state.coefficients.iter().zip(&state.spectrum.eigenvalues) {
        let w = c.norm_sqr();
        m1 += w * e;
        m2 += w * e * e;
    }
    EnergyWidth {
        mean: m1,
        width: (m2 - m1 * m1).max(0.0).sqrt(),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum WindowShape {
    #[default]
    Gaussian,
    /// Flat window with the same variance as the Gaussian (half-width √3 ΔE).
    Box,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThermalReference {
    pub e0: f64,
    pub delta_e: f64,
    pub shape: WindowShape,
    pub density: MonomerDensity,
}

/// Microcanonical monomer populations: every uncoupled level weighted by an
/// energy window centered at `e0`.
pub fn thermal_reference(
    uncoupled: &UncoupledSystem,
    e0: f64,
    delta_e: f64,
    shape: WindowShape,
) -> Result<ThermalReference> {
    if !(delta_e > 0.0) {
        return Err(Error::InvalidParameter(format!("energy width must be positive, got {delta_e}")));
    }
    let total = uncoupled.params.total;
    let mut density = MonomerDensity::zeros(total, DensityOrigin::Thermal);
    for l in &uncoupled.levels {
        let d = l.energy - e0;
        let w = match shape {
            WindowShape::Gaussian => (-d * d / (2.0 * delta_e * delta_e)).exp(),
            WindowShape::Box => f64::from(u8::from(d.abs() <= 3f64.sqrt() * delta_e)),
        };
        density.probabilities[l.x.trimer as usize] += w;
    }
    let weight = density.sum();
    if weight < 1e-12 {
        return Err(Error::EmptyWindow(weight));
    }
    density.probabilities.iter_mut().for_each(|p| *p /= weight);
    Ok(ThermalReference {
        e0,
        delta_e,
        shape,
        density,
    })
}

/// Two-norm distance between two monomer diagonals on the same grid.
pub fn delta_rho(avg: &MonomerDensity, thermal: &MonomerDensity) -> Result<f64> {
    if avg.total != thermal.total || avg.probabilities.len() != thermal.probabilities.len() {
        return Err(contract(format!(
            "density grids differ (N = {} vs {})",
            avg.total, thermal.total
        )));
    }
    Ok(avg
        .probabilities
        .iter()
        .zip(&thermal.probabilities)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt())
}

/// How the long-time monomer state is estimated.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Averaging {
    /// Sampled window `[horizon/2, horizon]`.
    Window { horizon: f64, samples: usize },
    /// Infinite-time limit.
    Diagonal,
}

impl Default for Averaging {
    fn default() -> Self {
        Averaging::Window {
            horizon: DEFAULT_HORIZON,
            samples: DEFAULT_SAMPLES,
        }
    }
}

/// Outcome of a single quench.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuenchSummary {
    pub x0: f64,
    pub eps0: f64,
    /// ε of the level actually selected.
    pub level_eps: f64,
    pub e0: f64,
    pub delta_e: f64,
    pub delta_rho: f64,
    /// Half-window minus full-window Δρ, the time-sampling error estimate.
    pub delta_rho_error: f64,
    pub entropy_average: f64,
    pub entropy_thermal: f64,
    pub average: MonomerDensity,
    pub thermal: ThermalReference,
}

/// Quench of the level nearest `(x0, eps0)`: long-time average against the
/// microcanonical reference.
pub fn quench(
    spectrum: &Spectrum,
    hamiltonian: &HamiltonianMatrix,
    uncoupled: &UncoupledSystem,
    labels: &PopulationLabels,
    x0: XValue,
    eps0: f64,
    averaging: Averaging,
    shape: WindowShape,
) -> Result<QuenchSummary> {
    let (state, level) = prepare_initial(spectrum, uncoupled, x0, eps0)?;
    let phi = uncoupled.level_vector(level);
    let width = energy_width(hamiltonian, &phi)?;
    let l = uncoupled.levels[level];
    let delta_e = if width.width > 0.0 {
        width.width
    } else {
        // uncoupled limit: the window collapses onto a single level
        f64::MIN_POSITIVE.sqrt()
    };
    let thermal = thermal_reference(uncoupled, l.energy, delta_e, shape)?;
    let (average, delta_rho_error) = match averaging {
        Averaging::Window { horizon, samples } => {
            check_window(horizon / 2.0, horizon, samples)?;
            let times = sample_times(horizon / 2.0, horizon, samples);
            let series = population_series(&state, labels, &times)?;
            let full = mean_density(&series, DensityOrigin::Average { t_lo: horizon / 2.0, t_hi: horizon, samples })?;
            let late = mean_density(&series[samples / 2..], DensityOrigin::Thermal)?;
            let err = (delta_rho(&late, &thermal.density)? - delta_rho(&full, &thermal.density)?).abs();
            (full, err)
        }
        Averaging::Diagonal => (diagonal_ensemble(&state, labels)?, 0.0),
    };
    Ok(QuenchSummary {
        x0: x0.value(),
        eps0,
        level_eps: l.eps,
        e0: l.energy,
        delta_e: width.width,
        delta_rho: delta_rho(&average, &thermal.density)?,
        delta_rho_error,
        entropy_average: entropy(&average),
        entropy_thermal: entropy(&thermal.density),
        average,
        thermal,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::build_sector_basis;
    use crate::hamiltonian::{build_hamiltonian, ModelParams};
    use crate::spectral::diagonalize;

    fn setup(n: u32, omega: f64) -> (SectorBasis, HamiltonianMatrix, Spectrum, UncoupledSystem) {
        let params = ModelParams::from_un(n, 10.0, omega);
        let sector = build_sector_basis(n);
        let h = build_hamiltonian(&params, &sector).unwrap();
        let spec = diagonalize(&h).unwrap();
        let unc = UncoupledSystem::new(&params, &sector).unwrap();
        (sector, h, spec, unc)
    }

    #[test]
    fn uncoupled_quench_is_stationary() {
        let (sector, _, spec, unc) = setup(12, 0.0);
        let labels = PopulationLabels::new(&sector);
        let x0 = XValue::new(8, 12);
        let (state, _) = prepare_initial(&spec, &unc, x0, 0.3).unwrap();
        // an exact eigenstate has a single unit coefficient (up to degeneracy)
        let big = state.coefficients.iter().filter(|c| c.norm() > 1e-8).count();
        assert!(big >= 1);
        let p0 = population_distribution(&state, &labels).unwrap();
        assert!((p0.at(x0) - 1.0).abs() < 1e-10);
        let late = population_distribution(&evolve(&state, 517.0), &labels).unwrap();
        assert!((late.at(x0) - 1.0).abs() < 1e-10);
        let avg = time_average(&state, &labels, 10.0, 20.0, 5).unwrap();
        assert!((avg.at(x0) - 1.0).abs() < 1e-10);
    }

    #[test]
    fn norm_energy_and_series_agree() {
        let (sector, h, spec, unc) = setup(14, 0.3);
        let labels = PopulationLabels::new(&sector);
        let (state, level) = prepare_initial(&spec, &unc, XValue::new(9, 14), 0.4).unwrap();
        let e_start = state.energy();
        let times = [0.0, 3.5, 41.0];
        let series = population_series(&state, &labels, &times).unwrap();
        for (t, batch) in times.iter().zip(&series) {
            let s = evolve(&state, *t);
            assert!((s.norm() - 1.0).abs() < 1e-10, "norm {} at {t}", s.norm());
            assert!(((s.energy() - e_start) / e_start).abs() < 1e-8);
            let single = population_distribution(&s, &labels).unwrap();
            assert!((single.sum() - 1.0).abs() < 1e-10);
            for (a, b) in single.probabilities.iter().zip(&batch.probabilities) {
                assert!((a - b).abs() < 1e-12);
            }
        }
        let w1 = energy_width(&h, &unc.level_vector(level)).unwrap();
        let w2 = spectral_energy_width(&state);
        assert!((w1.mean - w2.mean).abs() < 1e-8 && (w1.width - w2.width).abs() < 1e-8);
        assert!((w1.mean - unc.levels[level].energy).abs() < 1e-10);
    }

    #[test]
    fn entropy_limits() {
        let mut d = MonomerDensity::zeros(4, DensityOrigin::Thermal);
        d.probabilities[2] = 1.0;
        assert_eq!(entropy(&d), 0.0);
        d.probabilities = vec![0.2; 5];
        assert!((entropy(&d) - 5f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn delta_rho_limits() {
        let mut a = MonomerDensity::zeros(3, DensityOrigin::Thermal);
        let mut b = a.clone();
        a.probabilities[0] = 1.0;
        b.probabilities[3] = 1.0;
        assert!((delta_rho(&a, &b).unwrap() - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(delta_rho(&a, &a).unwrap(), 0.0);
        let c = MonomerDensity::zeros(4, DensityOrigin::Thermal);
        assert!(matches!(delta_rho(&a, &c), Err(Error::Contract(_))));
    }

    #[test]
    fn thermal_window_limits() {
        let (_, _, _, unc) = setup(12, 0.0);
        let l = unc.levels[unc.levels.len() / 2];
        let narrow = thermal_reference(&unc, l.energy, 1e-9, WindowShape::Gaussian).unwrap();
        assert!((narrow.density.at(l.x) - 1.0).abs() < 1e-9);
        let wide = thermal_reference(&unc, l.energy, 1e9, WindowShape::Gaussian).unwrap();
        let n = unc.levels.len() as f64;
        for b in &unc.blocks {
            let expect = b.energies.len() as f64 / n;
            assert!((wide.density.at(b.x) - expect).abs() < 1e-9);
        }
        assert!(matches!(
            thermal_reference(&unc, 1e6, 1.0, WindowShape::Gaussian),
            Err(Error::EmptyWindow(_))
        ));
        assert!(thermal_reference(&unc, l.energy, 0.0, WindowShape::Box).is_err());
    }

    #[test]
    fn missing_block_lists_alternatives() {
        let (_, _, spec, unc) = setup(12, 0.1);
        let err = prepare_initial(&spec, &unc, XValue::new(1, 12), 0.3).unwrap_err();
        assert!(err.to_string().contains("available"));
    }
}
