//! Threshold searches, parameter scans and scaling fits.

use std::collections::{HashMap, VecDeque};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use crate::basis::{build_sector_basis, SectorBasis, XValue};
use crate::error::{contract, Error, Result};
use crate::hamiltonian::{build_hamiltonian, HamiltonianMatrix, ModelParams};
use crate::meanfield::{
    bootstrap_delta_rho, sample_microcanonical, window_average, Ensemble, IntegrationOptions, SamplingOptions,
    BOOTSTRAP_RESAMPLES,
};
use crate::qdyn::{
    delta_rho, energy_width, entropy, quench, sample_times, thermal_reference, Averaging, MonomerDensity,
    PopulationLabels, QuenchSummary, WindowShape,
};
use crate::spectral::{diagonalize, mean_level_spacing, SpacingMode, Spectrum, UncoupledSystem};

/// Thermalization criterion `Δρ < c`.
pub const DEFAULT_CRITERION: f64 = 0.1;
/// Extra evaluations spent refining a bracketed crossing.
pub const DEFAULT_REFINEMENTS: usize = 3;

/// `points` values spaced evenly in `log ω` from `lo` to `hi`.
pub fn log_grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    if points == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    let mut g: Vec<f64> = (0..points)
        .map(|i| (a + (b - a) * i as f64 / (points - 1) as f64).exp())
        .collect();
    g[0] = lo;
    g[points - 1] = hi;
    g
}

/// The default coupling sweep: 13 points from 0.01 to 1.
pub fn default_sweep() -> Vec<f64> {
    log_grid(0.01, 1.0, 13)
}

/// Monotone piecewise-cubic Hermite interpolant (Fritsch-Carlson slopes).
#[derive(Clone, Debug)]
pub struct Pchip {
    x: Vec<f64>,
    y: Vec<f64>,
    d: Vec<f64>,
}

impl Pchip {
    /// `x` strictly ascending, at least two points.
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        let n = x.len();
        if n < 2 || y.len() != n || x.windows(2).any(|w| w[1] <= w[0]) {
            return Err(contract("interpolation needs two or more strictly ascending abscissae"));
        }
        let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
        let delta: Vec<f64> = (0..n - 1).map(|i| (y[i + 1] - y[i]) / h[i]).collect();
        let mut d = vec![0.0; n];
        if n == 2 {
            d[0] = delta[0];
            d[1] = delta[0];
        } else {
            for i in 1..n - 1 {
                if delta[i - 1] * delta[i] > 0.0 {
                    let w1 = 2.0 * h[i] + h[i - 1];
                    let w2 = h[i] + 2.0 * h[i - 1];
                    d[i] = (w1 + w2) / (w1 / delta[i - 1] + w2 / delta[i]);
                }
            }
            d[0] = Self::end_slope(h[0], h[1], delta[0], delta[1]);
            d[n - 1] = Self::end_slope(h[n - 2], h[n - 3], delta[n - 2], delta[n - 3]);
        }
        Ok(Pchip { x, y, d })
    }

    fn end_slope(h0: f64, h1: f64, m0: f64, m1: f64) -> f64 {
        let d = ((2.0 * h0 + h1) * m0 - h0 * m1) / (h0 + h1);
        if d.signum() != m0.signum() {
            0.0
        } else if m0.signum() != m1.signum() && d.abs() > 3.0 * m0.abs() {
            3.0 * m0
        } else {
            d
        }
    }

    pub fn eval(&self, t: f64) -> f64 {
        let n = self.x.len();
        let i = match self.x.partition_point(|&v| v <= t) {
            0 => 0,
            k if k >= n => n - 2,
            k => k - 1,
        };
        let h = self.x[i + 1] - self.x[i];
        let s = (t - self.x[i]) / h;
        let (h00, h10, h01, h11) = (
            (1.0 + 2.0 * s) * (1.0 - s) * (1.0 - s),
            s * (1.0 - s) * (1.0 - s),
            s * s * (3.0 - 2.0 * s),
            s * s * (s - 1.0),
        );
        h00 * self.y[i] + h10 * h * self.d[i] + h01 * self.y[i + 1] + h11 * h * self.d[i + 1]
    }

    /// Root of `f(t) = level` inside `[lo, hi]`, given a sign change there.
    pub fn solve(&self, level: f64, mut lo: f64, mut hi: f64) -> f64 {
        let mut f_lo = self.eval(lo) - level;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            let fm = self.eval(mid) - level;
            if fm == 0.0 {
                return mid;
            }
            if (fm < 0.0) == (f_lo < 0.0) {
                lo = mid;
                f_lo = fm;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Quantum,
    Classical,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdStatus {
    /// Bracketed crossing inside the sweep.
    Crossing,
    /// Already below `c` at the smallest coupling: `ω_T` is at most the floor.
    UpperBound,
    /// Never below `c` on the sweep: `ω_T` exceeds the largest coupling.
    AboveGrid,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdMethod {
    Interpolation,
    Fit,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThresholdResult {
    /// Crossing, or the bound implied by `status`.
    pub omega_t: f64,
    pub c: f64,
    pub status: ThresholdStatus,
    pub method: ThresholdMethod,
    /// Every evaluation, ascending in ω.
    pub sweep: Vec<(f64, f64)>,
    /// Evaluated couplings on either side of the crossing.
    pub bracket: Option<(f64, f64)>,
}

/// Minimal ω on the sweep with `Δρ(ω) < c`.
///
/// The grid is evaluated in full; the first point below `c` and its left
/// neighbour bracket the crossing. Up to `refinements` further evaluations
/// are placed at the current interpolated crossing (safeguarded towards the
/// bracket midpoint), and the final estimate is the root of a monotone cubic
/// interpolant in `log ω` through all evaluations.
pub fn find_threshold<F>(mut eval: F, grid: &[f64], c: f64, refinements: usize) -> Result<ThresholdResult>
where
    F: FnMut(f64) -> Result<f64>,
{
    if grid.is_empty() || grid.iter().any(|&w| !(w > 0.0)) {
        return Err(Error::InvalidParameter("sweep grid must hold positive couplings".into()));
    }
    let mut grid = grid.to_vec();
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    let mut sweep: Vec<(f64, f64)> = Vec::with_capacity(grid.len() + refinements);
    for &w in &grid {
        sweep.push((w, eval(w)?));
    }
    let first_below = sweep.iter().position(|&(_, d)| d < c);
    let result = |sweep: Vec<(f64, f64)>, omega_t, status, bracket| ThresholdResult {
        omega_t,
        c,
        status,
        method: ThresholdMethod::Interpolation,
        sweep,
        bracket,
    };
    let i = match first_below {
        None => {
            let top = grid[grid.len() - 1];
            return Ok(result(sweep, top, ThresholdStatus::AboveGrid, None));
        }
        Some(0) => return Ok(result(sweep, grid[0], ThresholdStatus::UpperBound, None)),
        Some(i) => i,
    };
    let (mut lo, mut hi) = (sweep[i - 1].0, sweep[i].0);
    let interpolant = |sweep: &[(f64, f64)]| {
        let mut pts = sweep.to_vec();
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        Pchip::new(pts.iter().map(|p| p.0.ln()).collect(), pts.iter().map(|p| p.1).collect())
    };
    for _ in 0..refinements {
        let p = interpolant(&sweep)?;
        let (a, b) = (lo.ln(), hi.ln());
        let mut t = p.solve(c, a, b);
        let margin = 0.01 * (b - a);
        if t - a < margin || b - t < margin {
            t = 0.5 * (a + b);
        }
        let w = t.exp();
        if w <= lo || w >= hi {
            break;
        }
        let d = eval(w)?;
        sweep.push((w, d));
        if d < c {
            hi = w;
        } else {
            lo = w;
        }
    }
    sweep.sort_by(|a, b| a.0.total_cmp(&b.0));
    let p = interpolant(&sweep)?;
    let omega_t = p.solve(c, lo.ln(), hi.ln()).exp();
    Ok(result(sweep, omega_t, ThresholdStatus::Crossing, Some((lo, hi))))
}

/// Threshold spread under alternative criteria, `max ω_T / min ω_T` over the
/// results that cross.
pub fn criterion_sensitivity(results: &[ThresholdResult]) -> Option<f64> {
    let w: Vec<f64> = results
        .iter()
        .filter(|r| r.status == ThresholdStatus::Crossing)
        .map(|r| r.omega_t)
        .collect();
    if w.len() < 2 {
        return None;
    }
    let max = w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = w.iter().copied().fold(f64::INFINITY, f64::min);
    Some(max / min)
}

/// Options of a quantum Δρ evaluation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuantumOptions {
    pub averaging: Averaging,
    pub window: WindowShape,
    /// Diagonalized couplings kept in memory.
    pub cache_capacity: usize,
}

impl Default for QuantumOptions {
    fn default() -> Self {
        QuantumOptions {
            averaging: Averaging::default(),
            window: WindowShape::Gaussian,
            cache_capacity: 2,
        }
    }
}

type CacheEntry = (u64, Arc<(HamiltonianMatrix, Spectrum)>);

/// A fixed `(N, U)` model whose coupled spectra are diagonalized on demand
/// and shared read-only.
pub struct QuantumModel {
    pub params: ModelParams,
    pub sector: Arc<SectorBasis>,
    pub uncoupled: Arc<UncoupledSystem>,
    pub labels: PopulationLabels,
    pub options: QuantumOptions,
    cache: Mutex<VecDeque<CacheEntry>>,
}

impl QuantumModel {
    pub fn new(params: &ModelParams, options: QuantumOptions) -> Result<Self> {
        params.validate()?;
        let sector = Arc::new(build_sector_basis(params.total));
        let uncoupled = Arc::new(UncoupledSystem::new(params, &sector)?);
        Ok(Self::from_parts(params, sector, uncoupled, options))
    }

    pub fn from_parts(
        params: &ModelParams,
        sector: Arc<SectorBasis>,
        uncoupled: Arc<UncoupledSystem>,
        options: QuantumOptions,
    ) -> Self {
        let labels = PopulationLabels::new(&sector);
        QuantumModel {
            params: params.uncoupled(),
            sector,
            uncoupled,
            labels,
            options,
            cache: Mutex::new(VecDeque::new()),
        }
    }

    pub fn hamiltonian(&self, omega: f64) -> Result<HamiltonianMatrix> {
        let p = self.params.with_coupling(omega);
        p.validate()?;
        build_hamiltonian(&p, &self.sector)
    }

    /// Coupled Hamiltonian and its spectrum at `omega`.
    pub fn spectrum(&self, omega: f64) -> Result<Arc<(HamiltonianMatrix, Spectrum)>> {
        let key = omega.to_bits();
        if let Some((_, s)) = self.cache.lock().expect("cache lock").iter().find(|(k, _)| *k == key) {
            return Ok(Arc::clone(s));
        }
        let h = self.hamiltonian(omega)?;
        let s = diagonalize(&h)?;
        let entry = Arc::new((h, s));
        if self.options.cache_capacity > 0 {
            let mut cache = self.cache.lock().expect("cache lock");
            if cache.len() >= self.options.cache_capacity {
                cache.pop_front();
            }
            cache.push_back((key, Arc::clone(&entry)));
        }
        Ok(entry)
    }

    pub fn quench(&self, omega: f64, x0: XValue, eps0: f64) -> Result<QuenchSummary> {
        let entry = self.spectrum(omega)?;
        quench(
            &entry.1,
            &entry.0,
            &self.uncoupled,
            &self.labels,
            x0,
            eps0,
            self.options.averaging,
            self.options.window,
        )
    }

    pub fn x_value(&self, x0: f64) -> XValue {
        XValue::nearest(x0, self.params.total)
    }
}

/// Options of a classical Δρ evaluation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassicalOptions {
    pub members: usize,
    pub seed: u64,
    pub horizon: f64,
    /// Samples in the averaging window `[horizon/2, horizon]`.
    pub samples: usize,
    pub integration: IntegrationOptions,
    pub sampling: SamplingOptions,
    pub bootstrap_resamples: usize,
}

impl Default for ClassicalOptions {
    fn default() -> Self {
        ClassicalOptions {
            members: 1000,
            seed: 1,
            horizon: 2000.0,
            samples: 100,
            integration: IntegrationOptions::default(),
            sampling: SamplingOptions::default(),
            bootstrap_resamples: BOOTSTRAP_RESAMPLES,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassicalSummary {
    pub omega: f64,
    pub delta_rho: f64,
    /// Bootstrap standard error over members.
    pub delta_rho_error: f64,
    pub entropy_average: f64,
    pub entropy_thermal: f64,
    pub acceptance_rate: f64,
    pub max_energy_drift: f64,
    pub max_number_drift: f64,
    /// Ensemble histogram pooled over the averaging window.
    pub average: MonomerDensity,
    pub thermal: MonomerDensity,
}

/// Classical ensemble started on the uncoupled shell of the level nearest
/// `(x0, eps0)`; the reference is the quantum microcanonical profile.
pub struct ClassicalModel<'a> {
    pub quantum: &'a QuantumModel,
    pub x0: XValue,
    pub level: usize,
    pub ensemble: Ensemble,
    pub options: ClassicalOptions,
}

impl<'a> ClassicalModel<'a> {
    pub fn new(quantum: &'a QuantumModel, x0: XValue, eps0: f64, options: ClassicalOptions) -> Result<Self> {
        let level = quantum.uncoupled.find_level(x0, eps0)?;
        let energy = quantum.uncoupled.levels[level].energy;
        let ensemble = sample_microcanonical(
            &quantum.params.uncoupled(),
            x0.value(),
            energy,
            options.members,
            options.seed,
            &options.sampling,
        )?;
        Ok(ClassicalModel {
            quantum,
            x0,
            level,
            ensemble,
            options,
        })
    }

    pub fn evaluate(&self, omega: f64) -> Result<ClassicalSummary> {
        let q = self.quantum;
        let params = q.params.with_coupling(omega);
        params.validate()?;
        let h = q.hamiltonian(omega)?;
        let phi = q.uncoupled.level_vector(self.level);
        let width = energy_width(&h, &phi)?;
        let e0 = q.uncoupled.levels[self.level].energy;
        let delta_e = if width.width > 0.0 { width.width } else { f64::MIN_POSITIVE.sqrt() };
        let thermal = thermal_reference(&q.uncoupled, e0, delta_e, q.options.window)?;
        let o = &self.options;
        let times = sample_times(o.horizon / 2.0, o.horizon, o.samples.max(2));
        let run = self.ensemble.evolve(&params, &times, &o.integration)?;
        let avg = window_average(&run, params.total, o.horizon / 2.0, o.horizon)?;
        let error = if o.bootstrap_resamples >= 2 && run.members() >= 2 {
            bootstrap_delta_rho(&run, &thermal.density, o.horizon / 2.0, o.horizon, o.bootstrap_resamples, o.seed)?
        } else {
            0.0
        };
        Ok(ClassicalSummary {
            omega,
            delta_rho: delta_rho(&avg, &thermal.density)?,
            delta_rho_error: error,
            entropy_average: entropy(&avg),
            entropy_thermal: entropy(&thermal.density),
            acceptance_rate: self.ensemble.acceptance_rate(),
            max_energy_drift: run.max_energy_drift,
            max_number_drift: run.max_number_drift,
            average: avg,
            thermal: thermal.density,
        })
    }
}

/// Quantum threshold at `(x0, eps0)`.
pub fn quantum_threshold(model: &QuantumModel, x0: XValue, eps0: f64, grid: &[f64], c: f64) -> Result<ThresholdResult> {
    find_threshold(|w| Ok(model.quench(w, x0, eps0)?.delta_rho), grid, c, DEFAULT_REFINEMENTS)
}

/// Classical threshold at the ensemble's level.
pub fn classical_threshold(model: &ClassicalModel, grid: &[f64], c: f64) -> Result<ThresholdResult> {
    find_threshold(|w| Ok(model.evaluate(w)?.delta_rho), grid, c, DEFAULT_REFINEMENTS)
}

/// One row of an ε or `UN/Ω` scan; failures are kept as messages.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanRow {
    /// The scanned value (ε or `UN/Ω`).
    pub value: f64,
    pub quantum: std::result::Result<ThresholdResult, String>,
    pub classical: Option<std::result::Result<ThresholdResult, String>>,
}

impl ScanRow {
    /// `ω_T^quantum >= ω_T^classical`, when both are available. A classical
    /// upper bound below the quantum value also counts.
    pub fn quantum_not_below_classical(&self) -> Option<bool> {
        let q = self.quantum.as_ref().ok()?;
        let c = self.classical.as_ref()?.as_ref().ok()?;
        Some(q.omega_t >= c.omega_t || q.status == ThresholdStatus::AboveGrid)
    }
}

/// Grid values of every scanned point, computed coupling-major so each
/// spectrum is diagonalized once.
fn quantum_grid_table(model: &QuantumModel, x0: XValue, eps: &[f64], grid: &[f64]) -> Vec<HashMap<u64, Result<f64, String>>> {
    let mut table = vec![HashMap::new(); eps.len()];
    for &w in grid {
        for (k, &e) in eps.iter().enumerate() {
            let v = model.quench(w, x0, e).map(|s| s.delta_rho).map_err(|e| e.to_string());
            table[k].insert(w.to_bits(), v);
        }
    }
    table
}

fn memo_eval<'a>(
    known: &'a HashMap<u64, Result<f64, String>>,
    fresh: impl Fn(f64) -> Result<f64> + 'a,
) -> impl FnMut(f64) -> Result<f64> + 'a {
    move |w| match known.get(&w.to_bits()) {
        Some(Ok(v)) => Ok(*v),
        Some(Err(e)) => Err(Error::InsufficientData(e.clone())),
        None => fresh(w),
    }
}

/// Quantum (and optionally classical) thresholds for each ε at fixed `x0`.
pub fn scan_epsilon(
    model: &QuantumModel,
    x0: XValue,
    eps: &[f64],
    grid: &[f64],
    c: f64,
    classical: Option<&ClassicalOptions>,
) -> Vec<ScanRow> {
    let table = quantum_grid_table(model, x0, eps, grid);
    eps.iter()
        .zip(&table)
        .map(|(&e, known)| {
            let quantum = find_threshold(
                memo_eval(known, |w| Ok(model.quench(w, x0, e)?.delta_rho)),
                grid,
                c,
                DEFAULT_REFINEMENTS,
            )
            .map_err(|err| err.to_string());
            let classical = classical.map(|o| {
                ClassicalModel::new(model, x0, e, *o)
                    .and_then(|cm| classical_threshold(&cm, grid, c))
                    .map_err(|err| err.to_string())
            });
            ScanRow {
                value: e,
                quantum,
                classical,
            }
        })
        .collect()
}

/// Thresholds against `UN/Ω` at fixed `N`, `x0`, `eps0`.
pub fn scan_interaction(
    total: u32,
    x0: f64,
    eps0: f64,
    un_values: &[f64],
    grid: &[f64],
    c: f64,
    quantum: QuantumOptions,
    classical: Option<&ClassicalOptions>,
) -> Vec<ScanRow> {
    un_values
        .iter()
        .map(|&un| {
            let params = ModelParams::from_un(total, un, 0.0);
            match QuantumModel::new(&params, quantum) {
                Err(e) => ScanRow {
                    value: un,
                    quantum: Err(e.to_string()),
                    classical: classical.map(|_| Err(e.to_string())),
                },
                Ok(model) => {
                    let x = model.x_value(x0);
                    let mut row = scan_epsilon(&model, x, &[eps0], grid, c, classical).remove(0);
                    row.value = un;
                    row
                }
            }
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitModel {
    /// `a / (X + b)`.
    InverseShift,
    /// `a / N + b / N²`.
    InversePowers,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingFit {
    pub model: FitModel,
    pub a: f64,
    pub b: f64,
    pub residual_rms: f64,
    /// `max_i |y_i - f(X_i)| / |y_i|`.
    pub max_relative_residual: f64,
    pub data: Vec<(f64, f64)>,
}

impl ScalingFit {
    pub fn predict(&self, x: f64) -> f64 {
        match self.model {
            FitModel::InverseShift => self.a / (x + self.b),
            FitModel::InversePowers => self.a / x + self.b / (x * x),
        }
    }

    fn finish(model: FitModel, a: f64, b: f64, data: &[(f64, f64)]) -> Self {
        let mut fit = ScalingFit {
            model,
            a,
            b,
            residual_rms: 0.0,
            max_relative_residual: 0.0,
            data: data.to_vec(),
        };
        let mut ss = 0.0;
        for &(x, y) in data {
            let r = y - fit.predict(x);
            ss += r * r;
            fit.max_relative_residual = fit.max_relative_residual.max((r / y).abs());
        }
        fit.residual_rms = (ss / data.len() as f64).sqrt();
        fit
    }
}

fn check_fit_data(data: &[(f64, f64)], min: usize) -> Result<()> {
    if data.len() < min {
        return Err(Error::InsufficientData(format!("{} points, need at least {min}", data.len())));
    }
    if data.iter().any(|&(x, y)| !x.is_finite() || !y.is_finite()) {
        return Err(Error::InvalidParameter("fit data must be finite".into()));
    }
    Ok(())
}

/// Least-squares `y = a / (X + b)`: `a` is linear given `b`, `b` is found by
/// a bracketed one-dimensional search and both are polished by Gauss-Newton.
pub fn fit_inverse_shift(data: &[(f64, f64)]) -> Result<ScalingFit> {
    check_fit_data(data, 3)?;
    let xmin = data.iter().map(|d| d.0).fold(f64::INFINITY, f64::min);
    let xmax = data.iter().map(|d| d.0).fold(f64::NEG_INFINITY, f64::max);
    let best_a = |b: f64| {
        let (mut num, mut den) = (0.0, 0.0);
        for &(x, y) in data {
            let g = 1.0 / (x + b);
            num += y * g;
            den += g * g;
        }
        num / den
    };
    let sse = |a: f64, b: f64| data.iter().map(|&(x, y)| (y - a / (x + b)).powi(2)).sum::<f64>();
    let profile = |b: f64| sse(best_a(b), b);

    // b on a log-spaced scan of b + xmin, then golden section
    let span = (xmax.abs() + 1.0) * 1e3;
    let offsets = log_grid(1e-6 * (xmin.abs() + 1.0), span, 400);
    let bs: Vec<f64> = offsets.iter().map(|o| o - xmin).collect();
    let k = (0..bs.len())
        .min_by(|&i, &j| profile(bs[i]).total_cmp(&profile(bs[j])))
        .expect("non-empty scan");
    let (mut lo, mut hi) = (bs[k.saturating_sub(1)], bs[(k + 1).min(bs.len() - 1)]);
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..200 {
        let m1 = hi - phi * (hi - lo);
        let m2 = lo + phi * (hi - lo);
        if profile(m1) < profile(m2) {
            hi = m2;
        } else {
            lo = m1;
        }
    }
    let mut b = 0.5 * (lo + hi);
    let mut a = best_a(b);
    for _ in 0..50 {
        // normal equations of the 2x2 Gauss-Newton step
        let (mut jaa, mut jab, mut jbb, mut ga, mut gb) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for &(x, y) in data {
            let g = 1.0 / (x + b);
            let r = y - a * g;
            let (da, db) = (g, -a * g * g);
            jaa += da * da;
            jab += da * db;
            jbb += db * db;
            ga += da * r;
            gb += db * r;
        }
        let det = jaa * jbb - jab * jab;
        if det.abs() < 1e-300 {
            break;
        }
        let step_a = (jbb * ga - jab * gb) / det;
        let step_b = (jaa * gb - jab * ga) / det;
        let (na, nb) = (a + step_a, b + step_b);
        if xmin + nb <= 0.0 || sse(na, nb) > sse(a, b) {
            break;
        }
        let done = step_a.abs() <= 1e-15 * a.abs().max(1.0) && step_b.abs() <= 1e-15 * b.abs().max(1.0);
        a = na;
        b = nb;
        if done {
            break;
        }
    }
    Ok(ScalingFit::finish(FitModel::InverseShift, a, b, data))
}

/// Linear least-squares `y = a / N + b / N²`.
pub fn fit_inverse_powers(data: &[(f64, f64)]) -> Result<ScalingFit> {
    check_fit_data(data, 3)?;
    let mut m = ndarray::Array2::zeros((data.len(), 2));
    for (i, &(n, _)) in data.iter().enumerate() {
        m[[i, 0]] = 1.0 / n;
        m[[i, 1]] = 1.0 / (n * n);
    }
    let y: Vec<f64> = data.iter().map(|d| d.1).collect();
    let c = crate::linalg::least_squares(&m, &y)?;
    Ok(ScalingFit::finish(FitModel::InversePowers, c[0], c[1], data))
}

/// Largest pairwise RMS distance between curves sampled on a common grid.
pub fn collapse_metric(curves: &[Vec<f64>]) -> Result<f64> {
    let len = curves.first().map(Vec::len).unwrap_or(0);
    if curves.len() < 2 || len == 0 || curves.iter().any(|c| c.len() != len) {
        return Err(Error::InsufficientData("collapse needs two curves on a shared grid".into()));
    }
    let mut worst = 0.0f64;
    for i in 0..curves.len() {
        for j in i + 1..curves.len() {
            let d = curves[i]
                .iter()
                .zip(&curves[j])
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                / len as f64;
            worst = worst.max(d.sqrt());
        }
    }
    Ok(worst)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingStudy {
    pub un_over_omega: f64,
    pub x0: f64,
    pub eps0: f64,
    /// Common grid of `ωN/Ω`.
    pub scaled_grid: Vec<f64>,
    /// `(N, Δρ per grid point)`.
    pub curves: Vec<(u32, Vec<f64>)>,
    pub fit: ScalingFit,
    pub collapse: f64,
    /// `a/c - b` from the fit.
    pub fitted_threshold: f64,
    /// Per-N `ω_T N` from each curve's own crossing, when it has one.
    pub threshold_per_n: Vec<(u32, Option<f64>)>,
    /// `(max - min) / mean` of the per-N values.
    pub threshold_spread: Option<f64>,
    pub c: f64,
}

/// `Δρ(ω, N)` on the common `ωN/Ω` grid, its collapse and the
/// `a/(ωN/Ω + b)` fit.
pub fn scaling_study(
    un_over_omega: f64,
    x0: f64,
    eps0: f64,
    totals: &[u32],
    scaled_grid: &[f64],
    c: f64,
    options: QuantumOptions,
) -> Result<ScalingStudy> {
    if totals.len() < 4 {
        return Err(Error::InsufficientData(format!(
            "{} particle numbers given; the collapse test needs at least 4",
            totals.len()
        )));
    }
    let mut curves = Vec::with_capacity(totals.len());
    for &n in totals {
        let model = QuantumModel::new(&ModelParams::from_un(n, un_over_omega, 0.0), options)?;
        let x = model.x_value(x0);
        let mut curve = Vec::with_capacity(scaled_grid.len());
        for &xs in scaled_grid {
            curve.push(model.quench(xs / f64::from(n), x, eps0)?.delta_rho);
        }
        curves.push((n, curve));
    }
    let data: Vec<(f64, f64)> = curves
        .iter()
        .flat_map(|(_, curve)| scaled_grid.iter().copied().zip(curve.iter().copied()))
        .collect();
    let fit = fit_inverse_shift(&data)?;
    let collapse = collapse_metric(&curves.iter().map(|c| c.1.clone()).collect::<Vec<_>>())?;
    let threshold_per_n: Vec<(u32, Option<f64>)> = curves
        .iter()
        .map(|(n, curve)| {
            let known: HashMap<u64, Result<f64, String>> = scaled_grid
                .iter()
                .zip(curve)
                .map(|(x, d)| (x.to_bits(), Ok(*d)))
                .collect();
            let r = find_threshold(
                memo_eval(&known, |_| Err(Error::InsufficientData("grid only".into()))),
                scaled_grid,
                c,
                0,
            )
            .ok();
            (*n, r.filter(|r| r.status == ThresholdStatus::Crossing).map(|r| r.omega_t))
        })
        .collect();
    let vals: Vec<f64> = threshold_per_n.iter().filter_map(|t| t.1).collect();
    let threshold_spread = (vals.len() == threshold_per_n.len() && !vals.is_empty()).then(|| {
        let max = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let min = vals.iter().copied().fold(f64::INFINITY, f64::min);
        (max - min) / (vals.iter().sum::<f64>() / vals.len() as f64)
    });
    Ok(ScalingStudy {
        un_over_omega,
        x0,
        eps0,
        scaled_grid: scaled_grid.to_vec(),
        fitted_threshold: fit.a / c - fit.b,
        fit,
        collapse,
        curves,
        threshold_per_n,
        threshold_spread,
        c,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpacingScaling {
    /// `(N, global, local)` mean spacings of the uncoupled sector spectrum.
    pub rows: Vec<(u32, f64, f64)>,
    pub global_fit: ScalingFit,
    pub local_fit: ScalingFit,
    pub window: (f64, f64),
}

/// Global and local mean level spacing of the uncoupled spectrum against
/// `N`, each fitted by `a/N + b/N²`.
pub fn spacing_scaling(un_over_omega: f64, totals: &[u32], window: (f64, f64)) -> Result<SpacingScaling> {
    if totals.len() < 4 {
        return Err(Error::InsufficientData(format!(
            "{} particle numbers given; need at least 4",
            totals.len()
        )));
    }
    let mut rows = Vec::with_capacity(totals.len());
    for &n in totals {
        let params = ModelParams::from_un(n, un_over_omega, 0.0);
        params.validate()?;
        let system = UncoupledSystem::new(&params, &build_sector_basis(n))?;
        let levels = system.sorted_energies();
        let global = mean_level_spacing(&levels, SpacingMode::Global)?;
        let local = mean_level_spacing(
            &levels,
            SpacingMode::Local {
                eps_lo: window.0,
                eps_hi: window.1,
            },
        )?;
        rows.push((n, global, local));
    }
    let global: Vec<(f64, f64)> = rows.iter().map(|r| (f64::from(r.0), r.1)).collect();
    let local: Vec<(f64, f64)> = rows.iter().map(|r| (f64::from(r.0), r.2)).collect();
    Ok(SpacingScaling {
        global_fit: fit_inverse_powers(&global)?,
        local_fit: fit_inverse_powers(&local)?,
        rows,
        window,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pchip_reproduces_linear_data_and_is_monotone() {
        let p = Pchip::new(vec![0.0, 1.0, 3.0, 4.0], vec![0.0, 2.0, 6.0, 8.0]).unwrap();
        assert!((p.eval(2.5) - 5.0).abs() < 1e-12);
        let q = Pchip::new(vec![0.0, 1.0, 2.0, 3.0], vec![1.0, 0.9, 0.2, 0.1]).unwrap();
        let mut prev = f64::INFINITY;
        for k in 0..=300 {
            let v = q.eval(k as f64 / 100.0);
            assert!(v <= prev + 1e-15);
            prev = v;
        }
    }

    #[test]
    fn threshold_bounds() {
        let grid = default_sweep();
        let below = find_threshold(|_| Ok(0.05), &grid, 0.1, 3).unwrap();
        assert_eq!(below.status, ThresholdStatus::UpperBound);
        assert_eq!(below.omega_t, 0.01);
        let above = find_threshold(|_| Ok(0.5), &grid, 0.1, 3).unwrap();
        assert_eq!(above.status, ThresholdStatus::AboveGrid);
        assert!(above.bracket.is_none());
    }

    #[test]
    fn bracketing_invariant_holds() {
        let f = |w: f64| 0.3 * (-3.0 * w).exp() + 0.02 / w.sqrt().max(1.0);
        let r = find_threshold(|w| Ok(f(w)), &default_sweep(), 0.1, 3).unwrap();
        let (lo, hi) = r.bracket.unwrap();
        assert!(lo <= r.omega_t && r.omega_t <= hi);
        assert!(f(lo) >= 0.1 && f(hi) < 0.1);
        assert!(r.sweep.len() <= 13 + 3);
    }

    #[test]
    fn inverse_powers_exact() {
        let data: Vec<(f64, f64)> = (2..7).map(|k| f64::from(10 * k)).map(|n| (n, 3.0 / n)).collect();
        let fit = fit_inverse_powers(&data).unwrap();
        assert!((fit.a - 3.0).abs() < 1e-10 && fit.b.abs() < 1e-8);
        assert!(fit_inverse_powers(&data[..2]).is_err());
    }

    #[test]
    fn collapse_of_identical_curves() {
        let c = vec![vec![0.3, 0.2, 0.1]; 3];
        assert_eq!(collapse_metric(&c).unwrap(), 0.0);
        assert!(collapse_metric(&c[..1]).is_err());
    }

    #[test]
    fn scaling_refuses_few_particle_numbers() {
        let err = scaling_study(10.0, 0.6, 0.25, &[20], &[2.0, 4.0], 0.1, QuantumOptions::default()).unwrap_err();
        assert!(matches!(err, Error::InsufficientData(_)));
    }
}
