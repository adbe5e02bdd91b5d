//! Independent cross-checks of the core numerics against brute-force or
//! textbook reimplementations.

use ndarray::Array2;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tetramer::basis::{
    apply_trimer_rotation, build_sector_basis, enumerate_full_basis, FockState, XValue, D3_ELEMENTS,
};
use tetramer::hamiltonian::{build_hamiltonian, full_basis_hamiltonian, ModelParams};
use tetramer::meanfield::{cartesian_rhs, hmf_cartesian, hmf_energy, ClassicalState, PHASE_DIM};
use tetramer::qdyn::{
    diagonal_ensemble, energy_width, evolve, prepare_initial, spectral_energy_width, time_average,
    PopulationLabels,
};
use tetramer::spectral::{diagonalize, UncoupledSystem};

/// Dense `(1/6) Σ_g sign(g) R_g` acting on the full Fock basis.
fn brute_force_projector(total: u32) -> Array2<f64> {
    let full = enumerate_full_basis(4, total);
    let mut p = Array2::zeros((full.len(), full.len()));
    for j in 0..full.len() {
        let s = full.fock(j).unwrap();
        for (perm, sign) in D3_ELEMENTS {
            let i = full.index_of(&s.permute_trimer(perm).0).unwrap();
            p[[i, j]] += sign / 6.0;
        }
    }
    p
}

fn matrix_rank(m: &Array2<f64>) -> usize {
    // Gaussian elimination with partial pivoting
    let mut a = m.clone();
    let (rows, cols) = a.dim();
    let mut rank = 0;
    for c in 0..cols {
        let pivot = (rank..rows).max_by(|&x, &y| a[[x, c]].abs().total_cmp(&a[[y, c]].abs()));
        let Some(p) = pivot else { break };
        if a[[p, c]].abs() < 1e-9 {
            continue;
        }
        for k in 0..cols {
            a.swap([rank, k], [p, k]);
        }
        for r in rank + 1..rows {
            let f = a[[r, c]] / a[[rank, c]];
            for k in c..cols {
                a[[r, k]] -= f * a[[rank, k]];
            }
        }
        rank += 1;
    }
    rank
}

#[test]
fn sector_dimension_matches_projector_rank() {
    for n in 2..=10 {
        let p = brute_force_projector(n);
        let trace: f64 = p.diag().sum();
        let sector = build_sector_basis(n);
        assert_eq!(matrix_rank(&p), sector.dim(), "N = {n}");
        assert!((trace - sector.dim() as f64).abs() < 1e-12, "N = {n}");
        // P is idempotent and the isometry spans its range
        assert!((p.dot(&p) - &p).iter().all(|v| v.abs() < 1e-12));
        let iso = sector.isometry(&enumerate_full_basis(4, n)).unwrap();
        let back = p.dot(&iso);
        assert!((back - &iso).iter().all(|v| v.abs() < 1e-12), "N = {n}");
    }
}

#[test]
fn three_boson_sector_energy() {
    for un in [3.0, 7.5, 10.0] {
        let p = ModelParams::from_un(3, un, 0.0);
        let sector = build_sector_basis(3);
        assert_eq!(sector.dim(), 1);
        let h = build_hamiltonian(&p, &sector).unwrap();
        assert!((h.matrix.get(0, 0) - (1.5 + p.interaction)).abs() < 1e-10);
    }
}

#[test]
fn hamiltonian_commutes_with_trimer_rotation() {
    for n in 2..=8 {
        let full = enumerate_full_basis(4, n);
        for w in [0.0, 0.1, 0.4] {
            let h = full_basis_hamiltonian(&ModelParams::from_un(n, 10.0, w), &full).unwrap();
            for j in 0..full.len() {
                let mut e = vec![0.0; full.len()];
                e[j] = 1.0;
                let hr = h.matvec(&apply_trimer_rotation(&full, &e).unwrap());
                let rh = apply_trimer_rotation(&full, &h.matvec(&e)).unwrap();
                let worst = hr.iter().zip(&rh).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                assert!(worst < 1e-12, "N = {n}, ω = {w}: {worst:e}");
            }
        }
    }
}

#[test]
fn sector_hamiltonian_is_projected_full_hamiltonian() {
    for n in 3..=8 {
        let full = enumerate_full_basis(4, n);
        let sector = build_sector_basis(n);
        let iso = sector.isometry(&full).unwrap();
        for w in [0.0, 0.1, 0.4] {
            let params = ModelParams::from_un(n, 10.0, w);
            let hf = full_basis_hamiltonian(&params, &full).unwrap().to_dense();
            let projected = iso.t().dot(&hf).dot(&iso);
            let hs = build_hamiltonian(&params, &sector).unwrap().matrix.to_dense();
            let worst = (&projected - &hs).iter().fold(0.0f64, |m, v| m.max(v.abs()));
            assert!(worst < 1e-12, "N = {n}, ω = {w}: {worst:e}");
        }
    }
}

#[test]
fn full_basis_hamiltonian_is_hermitian_and_conserves_number() {
    // hopping amplitudes from first principles on a few hand-picked states
    let p = ModelParams::from_un(5, 10.0, 0.3);
    let full = enumerate_full_basis(4, 5);
    let h = full_basis_hamiltonian(&p, &full).unwrap();
    let idx = |s: [u32; 4]| full.index_of(&s).unwrap();
    let a = idx([2, 1, 2, 0]);
    let b = idx([1, 2, 2, 0]);
    // -ω/2 sqrt(2 * 2) from moving one boson monomer -> mode 1
    assert!((h.get(a, b) + 0.3 / 2.0 * 2.0).abs() < 1e-14);
    let c = idx([2, 0, 3, 0]);
    assert!((h.get(a, c) + 0.5 * 3f64.sqrt()).abs() < 1e-14);
    let diag = 0.5 * p.interaction * (2.0 + 0.0 + 2.0 + 0.0);
    assert!((h.get(a, a) - diag).abs() < 1e-14);
    assert_eq!(FockState([2, 1, 2, 0]).total(), 5);
}

/// Fixed-step RK4 on `i dψ/dt = H ψ` in the sector basis.
fn rk4_schrodinger(h: &tetramer::hamiltonian::SparseSymMatrix, psi0: &[Complex64], t: f64, steps: usize) -> Vec<Complex64> {
    let dt = t / steps as f64;
    let rhs = |psi: &[Complex64]| -> Vec<Complex64> {
        let re: Vec<f64> = psi.iter().map(|c| c.re).collect();
        let im: Vec<f64> = psi.iter().map(|c| c.im).collect();
        let (hr, hi) = (h.matvec(&re), h.matvec(&im));
        // -i H ψ
        hr.iter().zip(&hi).map(|(&a, &b)| Complex64::new(b, -a)).collect()
    };
    let axpy = |y: &[Complex64], k: &[Complex64], s: f64| -> Vec<Complex64> {
        y.iter().zip(k).map(|(a, b)| a + b * s).collect()
    };
    let mut psi = psi0.to_vec();
    for _ in 0..steps {
        let k1 = rhs(&psi);
        let k2 = rhs(&axpy(&psi, &k1, dt / 2.0));
        let k3 = rhs(&axpy(&psi, &k2, dt / 2.0));
        let k4 = rhs(&axpy(&psi, &k3, dt));
        for i in 0..psi.len() {
            psi[i] += (k1[i] + k2[i] * 2.0 + k3[i] * 2.0 + k4[i]) * (dt / 6.0);
        }
    }
    psi
}

#[test]
fn spectral_propagation_matches_direct_integration() {
    let n = 8;
    let params = ModelParams::from_un(n, 10.0, 0.1);
    let sector = build_sector_basis(n);
    let h = build_hamiltonian(&params, &sector).unwrap();
    let spectrum = diagonalize(&h).unwrap();
    let uncoupled = UncoupledSystem::new(&params, &sector).unwrap();
    let (state, level) = prepare_initial(&spectrum, &uncoupled, XValue::nearest(0.6, n), 0.3).unwrap();
    let psi0: Vec<Complex64> = uncoupled.level_vector(level).iter().map(|&a| Complex64::new(a, 0.0)).collect();
    let mut prev_t = 0.0;
    let mut prev = psi0;
    for t in [10.0, 50.0, 100.0] {
        let direct = rk4_schrodinger(&h.matrix, &prev, t - prev_t, ((t - prev_t) * 2000.0) as usize);
        let spectral = evolve(&state, t).sector_amplitudes();
        let worst = direct.iter().zip(&spectral).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        assert!(worst < 1e-6, "t = {t}: {worst:e}");
        prev = direct;
        prev_t = t;
    }
}

#[test]
fn evolution_is_reversible_and_norm_preserving() {
    let n = 12;
    let params = ModelParams::from_un(n, 10.0, 0.2);
    let sector = build_sector_basis(n);
    let spectrum = diagonalize(&build_hamiltonian(&params, &sector).unwrap()).unwrap();
    let uncoupled = UncoupledSystem::new(&params, &sector).unwrap();
    let (state, _) = prepare_initial(&spectrum, &uncoupled, XValue::nearest(0.5, n), 0.4).unwrap();
    let there = evolve(&state, 123.4);
    let back = evolve(&there, -123.4);
    assert!((there.norm() - 1.0).abs() < 1e-12);
    let worst = back
        .coefficients
        .iter()
        .zip(&state.coefficients)
        .map(|(a, b)| (a - b).norm())
        .fold(0.0, f64::max);
    assert!(worst < 1e-12);
}

#[test]
fn populations_are_gauge_invariant() {
    let n = 12;
    let params = ModelParams::from_un(n, 10.0, 0.2);
    let sector = build_sector_basis(n);
    let spectrum = diagonalize(&build_hamiltonian(&params, &sector).unwrap()).unwrap();
    let uncoupled = UncoupledSystem::new(&params, &sector).unwrap();
    let labels = PopulationLabels::new(&sector);
    let (state, _) = prepare_initial(&spectrum, &uncoupled, XValue::nearest(0.5, n), 0.4).unwrap();
    let later = evolve(&state, 7.0);
    let mut rotated = later.clone();
    let phase = Complex64::from_polar(1.0, 1.234);
    rotated.coefficients.iter_mut().for_each(|c| *c *= phase);
    let a = tetramer::qdyn::population_distribution(&later, &labels).unwrap();
    let b = tetramer::qdyn::population_distribution(&rotated, &labels).unwrap();
    for (x, y) in a.probabilities.iter().zip(&b.probabilities) {
        assert!((x - y).abs() < 1e-13);
    }
}

#[test]
fn long_window_average_approaches_diagonal_ensemble() {
    let n = 20;
    let params = ModelParams::from_un(n, 10.0, 0.1);
    let sector = build_sector_basis(n);
    let spectrum = diagonalize(&build_hamiltonian(&params, &sector).unwrap()).unwrap();
    let uncoupled = UncoupledSystem::new(&params, &sector).unwrap();
    let labels = PopulationLabels::new(&sector);
    let (state, _) = prepare_initial(&spectrum, &uncoupled, XValue::nearest(0.6, n), 0.3).unwrap();
    let diag = diagonal_ensemble(&state, &labels).unwrap();
    assert!((diag.sum() - 1.0).abs() < 1e-12);
    let distance = |t_hi: f64, samples: usize| {
        let avg = time_average(&state, &labels, 0.0, t_hi, samples).unwrap();
        diag.probabilities
            .iter()
            .zip(&avg.probabilities)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    };
    // 400 samples on [0, 1e4] leave ~2e-3 of sampling noise for this state
    let coarse = distance(1e4, 400);
    assert!(coarse < 5e-3, "{coarse:e}");
    let fine = distance(1e4, 4000);
    assert!(fine < 1e-3, "{fine:e}");
    let long = distance(1e6, 40_000);
    assert!(long < 1e-4, "{long:e}");
}

#[test]
fn energy_width_two_ways() {
    let n = 16;
    for w in [0.05, 0.1, 0.4] {
        let params = ModelParams::from_un(n, 10.0, w);
        let sector = build_sector_basis(n);
        let h = build_hamiltonian(&params, &sector).unwrap();
        let spectrum = diagonalize(&h).unwrap();
        let uncoupled = UncoupledSystem::new(&params, &sector).unwrap();
        let (state, level) = prepare_initial(&spectrum, &uncoupled, XValue::nearest(0.6, n), 0.3).unwrap();
        let a = energy_width(&h, &uncoupled.level_vector(level)).unwrap();
        let b = spectral_energy_width(&state);
        assert!((a.mean - b.mean).abs() < 1e-10);
        assert!((a.width - b.width).abs() < 1e-8 * a.width.max(1.0), "ω = {w}");
        // H0 eigenstate: the mean is the uncoupled energy
        assert!((a.mean - uncoupled.levels[level].energy).abs() < 1e-10);
    }
}

fn random_state(rng: &mut ChaCha8Rng) -> ClassicalState {
    let w: [f64; 4] = std::array::from_fn(|_| rng.random_range(0.05..1.0));
    let s: f64 = w.iter().sum();
    ClassicalState {
        n: w.map(|v| 42.0 * v / s),
        phi: std::array::from_fn(|_| rng.random_range(-3.2..3.2)),
        time: 0.0,
    }
}

#[test]
fn vector_field_matches_finite_difference_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let params = ModelParams::from_un(40, 10.0, 0.3);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let y = random_state(&mut rng).to_cartesian();
        let f = cartesian_rhs(&y, &params);
        for k in 0..PHASE_DIM {
            // central difference, fourth order
            let h = 1e-3;
            let at = |d: f64| {
                let mut z = y;
                z[k] += d;
                hmf_cartesian(&z, &params)
            };
            let g = (-at(2.0 * h) + 8.0 * at(h) - 8.0 * at(-h) + at(-2.0 * h)) / (12.0 * h);
            // q̇ = -∂H/∂p, ṗ = ∂H/∂q
            let expected = if k < 4 { f[4 + k] } else { -f[k - 4] };
            let scale = g.abs().max(1.0);
            worst = worst.max((g - expected).abs() / scale);
        }
    }
    assert!(worst < 1e-7, "{worst:e}");
}

#[test]
fn polar_and_cartesian_energies_agree_on_random_states() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let params = ModelParams::from_un(30, 7.0, 0.2);
    for _ in 0..100 {
        let s = random_state(&mut rng);
        let a = hmf_energy(&s, &params).unwrap();
        let b = hmf_cartesian(&s.to_cartesian(), &params);
        assert!((a - b).abs() < 1e-10 * a.abs().max(1.0));
    }
}
