use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;

use super::{integrate, ClassicalState, Ensemble, IntegrationOptions};
use crate::error::{contract, Error, Result};
use crate::hamiltonian::ModelParams;
use crate::qdyn::{delta_rho, DensityOrigin, MonomerDensity};

pub const BOOTSTRAP_RESAMPLES: usize = 200;

/// Trimer fraction of every member at common sample times.
#[derive(Clone, Debug, PartialEq)]
pub struct EnsembleRun {
    pub times: Vec<f64>,
    /// `x[member][sample]`.
    pub x: Vec<Vec<f64>>,
    pub max_energy_drift: f64,
    pub max_number_drift: f64,
    pub steps: usize,
}

impl EnsembleRun {
    pub fn members(&self) -> usize {
        self.x.len()
    }
}

/// Integrates every member under `params` (in parallel, merged in member
/// order).
pub fn evolve_ensemble(
    members: &[ClassicalState],
    params: &ModelParams,
    times: &[f64],
    opts: &IntegrationOptions,
) -> Result<EnsembleRun> {
    let t_end = times.last().copied().ok_or_else(|| contract("no sample times"))?;
    let runs: Vec<Result<(Vec<f64>, f64, f64, usize)>> = members
        .par_iter()
        .map(|m| {
            let traj = integrate(m, params, t_end, times, opts)?;
            let x = traj.states.iter().map(ClassicalState::x).collect();
            Ok((x, traj.max_energy_drift, traj.max_number_drift, traj.steps))
        })
        .collect();
    let mut run = EnsembleRun {
        times: times.to_vec(),
        x: Vec::with_capacity(members.len()),
        max_energy_drift: 0.0,
        max_number_drift: 0.0,
        steps: 0,
    };
    for r in runs {
        let (x, de, dn, steps) = r?;
        run.x.push(x);
        run.max_energy_drift = run.max_energy_drift.max(de);
        run.max_number_drift = run.max_number_drift.max(dn);
        run.steps += steps;
    }
    Ok(run)
}

impl Ensemble {
    pub fn evolve(&self, params: &ModelParams, times: &[f64], opts: &IntegrationOptions) -> Result<EnsembleRun> {
        evolve_ensemble(&self.members, params, times, opts)
    }
}

fn bin(x: f64, total: u32) -> Result<usize> {
    if !(-1e-9..=1.0 + 1e-9).contains(&x) {
        return Err(contract(format!("trimer fraction {x} outside [0, 1]")));
    }
    Ok(((x * f64::from(total)).round().max(0.0) as usize).min(total as usize))
}

fn histogram(run: &EnsembleRun, members: &[usize], samples: &[usize], total: u32, origin: DensityOrigin) -> Result<MonomerDensity> {
    let mut d = MonomerDensity::zeros(total, origin);
    for &m in members {
        for &s in samples {
            d.probabilities[bin(run.x[m][s], total)?] += 1.0;
        }
    }
    let norm = (members.len() * samples.len()) as f64;
    d.probabilities.iter_mut().for_each(|p| *p /= norm);
    Ok(d)
}

/// Histogram of `x` at sample `index` on the quantum grid `k/N`.
pub fn classical_distribution(run: &EnsembleRun, index: usize, total: u32) -> Result<MonomerDensity> {
    if index >= run.times.len() {
        return Err(contract(format!("sample {index} beyond the {} recorded", run.times.len())));
    }
    let members: Vec<usize> = (0..run.members()).collect();
    let origin = DensityOrigin::Ensemble {
        t: run.times[index],
        members: run.members(),
    };
    histogram(run, &members, &[index], total, origin)
}

fn window_indices(run: &EnsembleRun, t_lo: f64, t_hi: f64) -> Result<Vec<usize>> {
    let idx: Vec<usize> = (0..run.times.len())
        .filter(|&i| run.times[i] >= t_lo && run.times[i] <= t_hi)
        .collect();
    if idx.is_empty() {
        return Err(Error::InsufficientData(format!("no samples in [{t_lo}, {t_hi}]")));
    }
    Ok(idx)
}

/// Ensemble histogram pooled over the samples in `[t_lo, t_hi]`.
pub fn window_average(run: &EnsembleRun, total: u32, t_lo: f64, t_hi: f64) -> Result<MonomerDensity> {
    let samples = window_indices(run, t_lo, t_hi)?;
    let members: Vec<usize> = (0..run.members()).collect();
    let origin = DensityOrigin::Average {
        t_lo,
        t_hi,
        samples: samples.len(),
    };
    histogram(run, &members, &samples, total, origin)
}

/// Bootstrap standard error of the window-averaged Δρ over ensemble members.
pub fn bootstrap_delta_rho(
    run: &EnsembleRun,
    thermal: &MonomerDensity,
    t_lo: f64,
    t_hi: f64,
    resamples: usize,
    seed: u64,
) -> Result<f64> {
    let samples = window_indices(run, t_lo, t_hi)?;
    let m = run.members();
    if m < 2 || resamples < 2 {
        return Err(Error::InsufficientData("bootstrap needs two members and two resamples".into()));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut values = Vec::with_capacity(resamples);
    for _ in 0..resamples {
        let pick: Vec<usize> = (0..m).map(|_| rng.random_range(0..m)).collect();
        let d = histogram(run, &pick, &samples, thermal.total, DensityOrigin::Thermal)?;
        values.push(delta_rho(&d, thermal)?);
    }
    let mean = values.iter().sum::<f64>() / resamples as f64;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (resamples - 1) as f64;
    Ok(var.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run() -> EnsembleRun {
        EnsembleRun {
            times: vec![0.0, 1.0, 2.0],
            x: vec![vec![0.6, 0.55, 0.7], vec![0.6, 0.65, 0.5]],
            max_energy_drift: 0.0,
            max_number_drift: 0.0,
            steps: 0,
        }
    }

    #[test]
    fn initial_histogram_is_a_point_mass() {
        let d = classical_distribution(&run(), 0, 20).unwrap();
        assert_eq!(d.probabilities[12], 1.0);
        assert!((d.sum() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn pooled_window() {
        let d = window_average(&run(), 20, 1.0, 2.0).unwrap();
        assert!((d.sum() - 1.0).abs() < 1e-15);
        assert_eq!(d.probabilities[14], 0.25);
        assert!(window_average(&run(), 20, 5.0, 6.0).is_err());
    }

    #[test]
    fn out_of_range_fraction() {
        let mut r = run();
        r.x[0][1] = 1.2;
        assert!(matches!(classical_distribution(&r, 1, 20), Err(Error::Contract(_))));
    }
}
