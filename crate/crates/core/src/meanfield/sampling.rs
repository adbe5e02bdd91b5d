use std::f64::consts::TAU;

use num_complex::Complex64;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{classical_total, hmf_energy, hopping, ClassicalState};
use crate::error::{Error, Result};
use crate::hamiltonian::ModelParams;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplingOptions {
    /// Members satisfy `|H - E| <= energy_tolerance * |E|`.
    pub energy_tolerance: f64,
    /// Draws allowed per member before the shell is declared unreachable.
    pub max_attempts_per_member: usize,
    /// Overall acceptance below this rate is an error.
    pub min_acceptance: f64,
}

impl Default for SamplingOptions {
    fn default() -> Self {
        SamplingOptions {
            energy_tolerance: 1e-8,
            max_attempts_per_member: 10_000,
            min_acceptance: 1e-3,
        }
    }
}

/// Microcanonical ensemble on the slice of fixed trimer fraction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ensemble {
    pub members: Vec<ClassicalState>,
    pub seed: u64,
    pub x_target: f64,
    pub energy: f64,
    pub energy_tolerance: f64,
    /// Parameters that define the shell energy.
    pub shell_params: ModelParams,
    pub attempts: usize,
}

impl Ensemble {
    pub fn acceptance_rate(&self) -> f64 {
        self.members.len() as f64 / self.attempts.max(1) as f64
    }
}

/// Approximate range of `H` on the slice `n_0 = (1-x) N^cl` from a grid scan
/// over trimer populations and relative phases.
pub fn shell_range(params: &ModelParams, x: f64) -> (f64, f64) {
    const SIMPLEX: usize = 40;
    const PHASES: usize = 24;
    let ncl = classical_total(params.total);
    let n0 = (1.0 - x) * ncl;
    let m = x * ncl;
    let monomer_phases = if params.coupling == 0.0 || n0 == 0.0 { 1 } else { 8 };
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for a in 0..=SIMPLEX {
        for b in 0..=SIMPLEX - a {
            let n = [
                n0,
                m * a as f64 / SIMPLEX as f64,
                m * b as f64 / SIMPLEX as f64,
                m * (SIMPLEX - a - b) as f64 / SIMPLEX as f64,
            ];
            for i0 in 0..monomer_phases {
                for i2 in 0..PHASES {
                    for i3 in 0..PHASES {
                        let phi = [
                            TAU * i0 as f64 / monomer_phases as f64,
                            0.0,
                            TAU * i2 as f64 / PHASES as f64,
                            TAU * i3 as f64 / PHASES as f64,
                        ];
                        let e = hmf_energy(&ClassicalState { n, phi, time: 0.0 }, params).expect("non-negative grid");
                        lo = lo.min(e);
                        hi = hi.max(e);
                    }
                }
            }
        }
    }
    (lo, hi)
}

fn energy_scale(e: f64) -> f64 {
    if e == 0.0 {
        1.0
    } else {
        e.abs()
    }
}

fn member_rng(seed: u64, index: usize) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

/// One draw: uniform simplex point and phases, then shoot on the phase of
/// mode 1 (closed form), falling back to shifting population between modes 1
/// and 2.
fn draw(params: &ModelParams, x: f64, e: f64, tol: f64, rng: &mut ChaCha20Rng) -> Option<ClassicalState> {
    let ncl = classical_total(params.total);
    let m = x * ncl;
    let w: [f64; 3] = std::array::from_fn(|_| -(1.0 - rng.random::<f64>()).ln());
    let ws: f64 = w.iter().sum();
    let mut n = [(1.0 - x) * ncl, m * w[0] / ws, m * w[1] / ws, m * w[2] / ws];
    let mut phi: [f64; 4] = std::array::from_fn(|_| rng.random_range(0.0..TAU));
    let flip = rng.random::<bool>();
    let energy = |n: &[f64; 4], phi: &[f64; 4]| hmf_energy(&ClassicalState { n: *n, phi: *phi, time: 0.0 }, params).ok();

    // H = Re(A e^{i φ_1}) + C
    let mut a = Complex64::new(0.0, 0.0);
    for j in [0usize, 2, 3] {
        a -= hopping(params, 1, j) * (n[1] * n[j]).sqrt() * Complex64::from_polar(1.0, -phi[j]);
    }
    let mut probe = phi;
    probe[1] = 0.0;
    let c = energy(&n, &probe)? - a.re;
    let amp = a.norm();
    if amp > 0.0 {
        let v = (e - c) / amp;
        if v.abs() <= 1.0 {
            let s = if flip { -1.0 } else { 1.0 };
            phi[1] = (s * v.acos() - a.arg()).rem_euclid(TAU);
            let h = energy(&n, &phi)?;
            return ((h - e).abs() <= tol * energy_scale(e)).then_some(ClassicalState { n, phi, time: 0.0 });
        }
    }

    // fallback: move population between modes 1 and 2 at fixed phases
    let pair = n[1] + n[2];
    let f = |s: f64| {
        let mut nn = n;
        nn[1] = s;
        nn[2] = pair - s;
        energy(&nn, &phi).map(|h| h - e)
    };
    const SCAN: usize = 64;
    let grid: Vec<f64> = (0..=SCAN).map(|k| pair * k as f64 / SCAN as f64).collect();
    let vals: Vec<f64> = grid.iter().map(|&s| f(s)).collect::<Option<_>>()?;
    let brackets: Vec<usize> = (0..SCAN).filter(|&k| vals[k] * vals[k + 1] <= 0.0).collect();
    if brackets.is_empty() {
        return None;
    }
    let k = brackets[if flip { brackets.len() - 1 } else { 0 }];
    let (mut lo, mut hi) = (grid[k], grid[k + 1]);
    let mut flo = vals[k];
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let fm = f(mid)?;
        if fm.abs() <= tol * energy_scale(e) * 1e-2 || hi - lo < 1e-15 * pair {
            lo = mid;
            hi = mid;
            break;
        }
        if (fm < 0.0) == (flo < 0.0) {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    let s = 0.5 * (lo + hi);
    n[1] = s;
    n[2] = pair - s;
    let h = energy(&n, &phi)?;
    ((h - e).abs() <= tol * energy_scale(e)).then_some(ClassicalState { n, phi, time: 0.0 })
}

/// Draws `count` states with trimer fraction exactly `x_target` and
/// `H = e_target` under `shell_params`. Member `i` uses its own random stream
/// derived from `(seed, i)`, so results do not depend on scheduling.
pub fn sample_microcanonical(
    shell_params: &ModelParams,
    x_target: f64,
    e_target: f64,
    count: usize,
    seed: u64,
    opts: &SamplingOptions,
) -> Result<Ensemble> {
    if !(0.0..=1.0).contains(&x_target) {
        return Err(Error::InvalidParameter(format!("trimer fraction {x_target} outside [0, 1]")));
    }
    let (lo, hi) = shell_range(shell_params, x_target);
    let slack = 0.01 * (hi - lo).max(1e-12);
    if e_target < lo - slack || e_target > hi + slack {
        return Err(Error::UnreachableShell(format!(
            "E = {e_target} outside the scanned range [{lo}, {hi}] at x = {x_target}"
        )));
    }
    let draws: Vec<(Option<ClassicalState>, usize)> = (0..count)
        .into_par_iter()
        .map(|i| {
            let mut rng = member_rng(seed, i);
            for attempt in 1..=opts.max_attempts_per_member {
                if let Some(s) = draw(shell_params, x_target, e_target, opts.energy_tolerance, &mut rng) {
                    return (Some(s), attempt);
                }
            }
            (None, opts.max_attempts_per_member)
        })
        .collect();
    let attempts: usize = draws.iter().map(|d| d.1).sum();
    let members: Vec<ClassicalState> = draws.into_iter().filter_map(|d| d.0).collect();
    let rate = members.len() as f64 / attempts.max(1) as f64;
    if members.len() < count || rate < opts.min_acceptance {
        return Err(Error::UnreachableShell(format!(
            "acceptance rate {rate:.2e} ({} of {count} members after {attempts} draws) at x = {x_target}, E = {e_target}",
            members.len()
        )));
    }
    Ok(Ensemble {
        members,
        seed,
        x_target,
        energy: e_target,
        energy_tolerance: opts.energy_tolerance,
        shell_params: *shell_params,
        attempts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn members_sit_on_the_shell() {
        let p = ModelParams::from_un(40, 10.0, 0.0);
        let (lo, hi) = shell_range(&p, 0.6);
        let e = lo + 0.3 * (hi - lo);
        let ens = sample_microcanonical(&p, 0.6, e, 50, 7, &SamplingOptions::default()).unwrap();
        assert_eq!(ens.members.len(), 50);
        for m in &ens.members {
            assert!((m.x() - 0.6).abs() < 1e-12);
            assert!((hmf_energy(m, &p).unwrap() - e).abs() <= 1e-8 * e.abs());
        }
        let again = sample_microcanonical(&p, 0.6, e, 50, 7, &SamplingOptions::default()).unwrap();
        assert_eq!(ens, again);
        let other = sample_microcanonical(&p, 0.6, e, 50, 8, &SamplingOptions::default()).unwrap();
        assert_ne!(ens.members, other.members);
    }

    #[test]
    fn unreachable_energy_is_reported() {
        let p = ModelParams::from_un(40, 10.0, 0.0);
        let (_, hi) = shell_range(&p, 0.6);
        let err = sample_microcanonical(&p, 0.6, hi + 1e3, 10, 1, &SamplingOptions::default()).unwrap_err();
        assert!(matches!(err, Error::UnreachableShell(_)));
    }
}
