//! Mean-field (classical) limit of the tetramer.
//!
//! Each mode is a classical amplitude `sqrt(n_i) e^{i φ_i}`, with the monomer
//! as mode 0 and the trimer as modes 1..=3. Trajectories are integrated in
//! the smooth variables `q = sqrt(2n) cos φ`, `p = sqrt(2n) sin φ`, which
//! remove the square-root singularity at empty modes.

mod dop853;
mod ensemble;
mod poincare;
mod sampling;
mod tableau;

pub use dop853::{DenseSegment, Dop853};
pub use ensemble::{
    bootstrap_delta_rho, classical_distribution, evolve_ensemble, window_average, EnsembleRun,
    BOOTSTRAP_RESAMPLES,
};
pub use poincare::{poincare_section, PoincareOptions, PoincareSection, SectionPlane};
pub use sampling::{sample_microcanonical, shell_range, Ensemble, SamplingOptions};

use serde::{Deserialize, Serialize};

use crate::error::{contract, Error, Result};
use crate::hamiltonian::ModelParams;

/// Phase-space dimension of the Cartesian form.
pub const PHASE_DIM: usize = 8;

/// Classical particle number `N + 2` for an `N`-boson quantum system.
pub fn classical_total(total: u32) -> f64 {
    f64::from(total) + 2.0
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassicalState {
    pub n: [f64; 4],
    pub phi: [f64; 4],
    pub time: f64,
}

impl ClassicalState {
    pub fn total(&self) -> f64 {
        self.n.iter().sum()
    }

    /// Trimer fraction of the population.
    pub fn x(&self) -> f64 {
        (self.n[1] + self.n[2] + self.n[3]) / self.total()
    }

    pub fn to_cartesian(&self) -> [f64; PHASE_DIM] {
        let mut y = [0.0; PHASE_DIM];
        for i in 0..4 {
            let r = (2.0 * self.n[i].max(0.0)).sqrt();
            y[i] = r * self.phi[i].cos();
            y[4 + i] = r * self.phi[i].sin();
        }
        y
    }

    pub fn from_cartesian(y: &[f64; PHASE_DIM], time: f64) -> Self {
        let mut n = [0.0; 4];
        let mut phi = [0.0; 4];
        for i in 0..4 {
            n[i] = 0.5 * (y[i] * y[i] + y[4 + i] * y[4 + i]);
            phi[i] = y[4 + i].atan2(y[i]);
        }
        ClassicalState { n, phi, time }
    }

    fn check(&self) -> Result<()> {
        if self.n.iter().any(|&v| !(v >= 0.0)) {
            return Err(contract(format!("mode populations must be non-negative, got {:?}", self.n)));
        }
        Ok(())
    }
}

/// Populations of a Cartesian point.
pub fn populations(y: &[f64; PHASE_DIM]) -> [f64; 4] {
    std::array::from_fn(|i| 0.5 * (y[i] * y[i] + y[4 + i] * y[4 + i]))
}

/// Trimer fraction of a Cartesian point.
pub fn trimer_fraction(y: &[f64; PHASE_DIM]) -> f64 {
    let n = populations(y);
    (n[1] + n[2] + n[3]) / n.iter().sum::<f64>()
}

/// Hopping amplitude between modes `i` and `j` (`i != j`).
fn hopping(params: &ModelParams, i: usize, j: usize) -> f64 {
    if i == 0 || j == 0 {
        params.coupling
    } else {
        params.hopping
    }
}

const PAIRS: [(usize, usize); 6] = [(1, 2), (2, 3), (1, 3), (0, 1), (0, 2), (0, 3)];

/// `H^mf = -Σ_{i<j} K_ij sqrt(n_i n_j) cos(φ_i - φ_j) + (U/2) Σ (n_i² - 2 n_i) + 3U/2`.
pub fn hmf_energy(state: &ClassicalState, params: &ModelParams) -> Result<f64> {
    state.check()?;
    let (n, phi) = (&state.n, &state.phi);
    let mut h = 0.0;
    for &(i, j) in &PAIRS {
        h -= hopping(params, i, j) * (n[i] * n[j]).sqrt() * (phi[i] - phi[j]).cos();
    }
    let u = params.interaction;
    h += 0.5 * u * n.iter().map(|&v| v * v - 2.0 * v).sum::<f64>() + 1.5 * u;
    Ok(h)
}

/// [`hmf_energy`] on a Cartesian point.
pub fn hmf_cartesian(y: &[f64; PHASE_DIM], params: &ModelParams) -> f64 {
    let (q, p) = y.split_at(4);
    let mut h = 0.0;
    for &(i, j) in &PAIRS {
        h -= 0.5 * hopping(params, i, j) * (q[i] * q[j] + p[i] * p[j]);
    }
    let u = params.interaction;
    for n in populations(y) {
        h += 0.5 * u * (n * n - 2.0 * n);
    }
    h + 1.5 * u
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Derivatives {
    pub n_dot: [f64; 4],
    pub phi_dot: [f64; 4],
}

/// `ṅ_i = -∂H/∂φ_i`, `φ̇_i = ∂H/∂n_i`. Requires every `n_i > 0`.
pub fn equations_of_motion(state: &ClassicalState, params: &ModelParams) -> Result<Derivatives> {
    state.check()?;
    if state.n.contains(&0.0) {
        return Err(contract("polar equations are singular at an empty mode; use the Cartesian form"));
    }
    let (n, phi) = (&state.n, &state.phi);
    let mut n_dot = [0.0; 4];
    let mut phi_dot: [f64; 4] = std::array::from_fn(|i| params.interaction * (n[i] - 1.0));
    for &(i, j) in &PAIRS {
        let k = hopping(params, i, j);
        let d = phi[i] - phi[j];
        let flow = k * (n[i] * n[j]).sqrt() * d.sin();
        n_dot[i] -= flow;
        n_dot[j] += flow;
        phi_dot[i] -= 0.5 * k * (n[j] / n[i]).sqrt() * d.cos();
        phi_dot[j] -= 0.5 * k * (n[i] / n[j]).sqrt() * d.cos();
    }
    Ok(Derivatives { n_dot, phi_dot })
}

/// Vector field in Cartesian variables: `q̇ = -∂H/∂p`, `ṗ = ∂H/∂q`.
pub fn cartesian_rhs(y: &[f64; PHASE_DIM], params: &ModelParams) -> [f64; PHASE_DIM] {
    let (q, p) = y.split_at(4);
    let n = populations(y);
    let u = params.interaction;
    let mut dq: [f64; 4] = std::array::from_fn(|i| u * (n[i] - 1.0) * q[i]);
    let mut dp: [f64; 4] = std::array::from_fn(|i| u * (n[i] - 1.0) * p[i]);
    for &(i, j) in &PAIRS {
        let k = 0.5 * hopping(params, i, j);
        dq[i] -= k * q[j];
        dq[j] -= k * q[i];
        dp[i] -= k * p[j];
        dp[j] -= k * p[i];
    }
    let mut out = [0.0; PHASE_DIM];
    for i in 0..4 {
        out[i] = -dp[i];
        out[4 + i] = dq[i];
    }
    out
}

/// Integration accuracy and the conservation contract checked on every
/// accepted step.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IntegrationOptions {
    pub rtol: f64,
    pub atol: f64,
    /// Allowed `|H(t) - H(0)| / |H(0)|`.
    pub energy_tolerance: f64,
    /// Allowed `|Σn(t) - Σn(0)|`.
    pub number_tolerance: f64,
    /// Rescale the amplitudes after each step so `Σn` stays exact.
    pub project_number: bool,
    pub max_steps: usize,
}

impl Default for IntegrationOptions {
    fn default() -> Self {
        IntegrationOptions {
            rtol: 1e-12,
            atol: 1e-12,
            energy_tolerance: 1e-8,
            number_tolerance: 1e-10,
            project_number: true,
            max_steps: 50_000_000,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<ClassicalState>,
    pub max_energy_drift: f64,
    pub max_number_drift: f64,
    pub steps: usize,
}

/// Scales `y` so that `Σn` equals `total`.
pub(crate) fn project_number(y: &mut [f64; PHASE_DIM], total: f64) {
    let s: f64 = populations(y).iter().sum();
    if s > 0.0 {
        let f = (total / s).sqrt();
        y.iter_mut().for_each(|v| *v *= f);
    }
}

/// Conservation bookkeeping shared by every integration loop.
pub(crate) struct Monitor {
    e0: f64,
    n0: f64,
    pub energy_drift: f64,
    pub number_drift: f64,
}

impl Monitor {
    pub fn new(y: &[f64; PHASE_DIM], params: &ModelParams) -> Self {
        Monitor {
            e0: hmf_cartesian(y, params),
            n0: populations(y).iter().sum(),
            energy_drift: 0.0,
            number_drift: 0.0,
        }
    }

    pub fn total(&self) -> f64 {
        self.n0
    }

    pub fn record(&mut self, y: &[f64; PHASE_DIM], params: &ModelParams, opts: &IntegrationOptions, t: f64) -> Result<()> {
        let e = hmf_cartesian(y, params);
        let de = if self.e0 != 0.0 { ((e - self.e0) / self.e0).abs() } else { (e - self.e0).abs() };
        let dn = (populations(y).iter().sum::<f64>() - self.n0).abs();
        self.energy_drift = self.energy_drift.max(de);
        self.number_drift = self.number_drift.max(dn);
        if de > opts.energy_tolerance || dn > opts.number_tolerance {
            return Err(Error::Drift(format!(
                "at t = {t}: relative energy drift {de:e}, number drift {dn:e}"
            )));
        }
        Ok(())
    }
}

/// Integrates from `state` and records the states at `sample_times`
/// (ascending, within `[state.time, t_end]`).
pub fn integrate(
    state: &ClassicalState,
    params: &ModelParams,
    t_end: f64,
    sample_times: &[f64],
    opts: &IntegrationOptions,
) -> Result<Trajectory> {
    state.check()?;
    if !(t_end > state.time) {
        return Err(Error::InvalidParameter(format!("end time {t_end} must exceed start {}", state.time)));
    }
    if sample_times.windows(2).any(|w| w[1] < w[0])
        || sample_times.iter().any(|&t| t < state.time || t > t_end)
    {
        return Err(contract("sample times must be ascending and inside the integration span"));
    }
    let y0 = state.to_cartesian();
    let mut monitor = Monitor::new(&y0, params);
    let mut solver = Dop853::new(|y: &[f64; PHASE_DIM]| cartesian_rhs(y, params), state.time, y0, opts.rtol, opts.atol);
    let mut times = Vec::with_capacity(sample_times.len());
    let mut states = Vec::with_capacity(sample_times.len());
    let mut next = 0;
    while next < sample_times.len() && sample_times[next] <= state.time {
        times.push(sample_times[next]);
        states.push(*state);
        next += 1;
    }
    while solver.t < t_end {
        if solver.accepted >= opts.max_steps {
            return Err(Error::Drift(format!("step budget {} exhausted at t = {}", opts.max_steps, solver.t)));
        }
        solver.step(t_end)?;
        if next < sample_times.len() && sample_times[next] <= solver.t {
            let seg = solver.dense();
            while next < sample_times.len() && sample_times[next] <= solver.t {
                let t = sample_times[next];
                let mut y = seg.eval(t);
                if opts.project_number {
                    project_number(&mut y, monitor.total());
                }
                times.push(t);
                states.push(ClassicalState::from_cartesian(&y, t));
                next += 1;
            }
        }
        if opts.project_number {
            let mut y = solver.y;
            project_number(&mut y, monitor.total());
            solver.reset_state(y);
        }
        monitor.record(&solver.y, params, opts, solver.t)?;
    }
    Ok(Trajectory {
        times,
        states,
        max_energy_drift: monitor.energy_drift,
        max_number_drift: monitor.number_drift,
        steps: solver.accepted,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_state(rng: &mut ChaCha8Rng, total: f64) -> ClassicalState {
        let w: [f64; 4] = std::array::from_fn(|_| rng.random_range(0.05..1.0));
        let s: f64 = w.iter().sum();
        ClassicalState {
            n: std::array::from_fn(|i| w[i] / s * total),
            phi: std::array::from_fn(|_| rng.random_range(0.0..std::f64::consts::TAU)),
            time: 0.0,
        }
    }

    #[test]
    fn closed_form_energies() {
        let p = ModelParams::from_un(40, 10.0, 0.3);
        let ncl = classical_total(40);
        let u = p.interaction;
        let s = ClassicalState { n: [ncl, 0.0, 0.0, 0.0], phi: [0.3, 1.0, 2.0, 3.0], time: 0.0 };
        let expect = 0.5 * u * (ncl * ncl - 2.0 * ncl) + 1.5 * u;
        assert!((hmf_energy(&s, &p).unwrap() - expect).abs() < 1e-12);

        let q = ncl / 4.0;
        let s = ClassicalState { n: [q; 4], phi: [0.7; 4], time: 0.0 };
        let p0 = p.uncoupled();
        let expect = -3.0 * q + 0.5 * u * 4.0 * (q * q - 2.0 * q) + 1.5 * u;
        assert!((hmf_energy(&s, &p0).unwrap() - expect).abs() < 1e-12);
        assert!((hmf_cartesian(&s.to_cartesian(), &p0) - expect).abs() < 1e-10);
    }

    #[test]
    fn negative_population_rejected() {
        let p = ModelParams::from_un(10, 10.0, 0.1);
        let s = ClassicalState { n: [1.0, -0.1, 5.0, 6.1], phi: [0.0; 4], time: 0.0 };
        assert!(matches!(hmf_energy(&s, &p), Err(Error::Contract(_))));
    }

    #[test]
    fn polar_and_cartesian_fields_agree() {
        let p = ModelParams::from_un(30, 7.0, 0.2);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let s = random_state(&mut rng, 32.0);
            let d = equations_of_motion(&s, &p).unwrap();
            let y = s.to_cartesian();
            let f = cartesian_rhs(&y, &p);
            for i in 0..4 {
                // ṅ = q q̇ + p ṗ
                let n_dot = y[i] * f[i] + y[4 + i] * f[4 + i];
                assert!((n_dot - d.n_dot[i]).abs() < 1e-10);
                // φ̇ = (q ṗ - p q̇) / 2n
                let phi_dot = (y[i] * f[4 + i] - y[4 + i] * f[i]) / (2.0 * s.n[i]);
                assert!((phi_dot - d.phi_dot[i]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn hopping_free_limits() {
        let mut p = ModelParams::from_un(20, 10.0, 0.0);
        let s = ClassicalState { n: [3.0, 4.0, 6.0, 9.0], phi: [0.1, 0.5, 2.0, 4.0], time: 0.0 };
        assert_eq!(equations_of_motion(&s, &p).unwrap().n_dot[0], 0.0);
        p.hopping = 0.0;
        let d = equations_of_motion(&s, &p).unwrap();
        for i in 0..4 {
            assert_eq!(d.n_dot[i], 0.0);
            assert!((d.phi_dot[i] - p.interaction * (s.n[i] - 1.0)).abs() < 1e-15);
        }
    }

    #[test]
    fn uncoupled_trajectory_keeps_x() {
        let p = ModelParams::from_un(20, 10.0, 0.0);
        let s = ClassicalState { n: [8.8, 6.0, 4.0, 3.2], phi: [0.0, 0.4, 1.3, 2.0], time: 0.0 };
        let times: Vec<f64> = (0..=10).map(|k| 10.0 * k as f64).collect();
        let traj = integrate(&s, &p, 100.0, &times, &IntegrationOptions::default()).unwrap();
        assert_eq!(traj.states.len(), times.len());
        for st in &traj.states {
            assert!((st.x() - s.x()).abs() < 1e-10);
        }
        assert!(traj.max_energy_drift < 1e-8);
        assert!(traj.max_number_drift < 1e-10);
    }
}
