//! Adaptive Dormand-Prince 8(5,3) stepper with 7th-order dense output, for
//! autonomous systems of fixed dimension.

use super::tableau::{A, B, C, D, E3, E5, INTERPOLATOR_POWER, STAGES, STAGES_EXTENDED};
use crate::error::{Error, Result};

const SAFETY: f64 = 0.9;
const MIN_FACTOR: f64 = 0.2;
const MAX_FACTOR: f64 = 10.0;
const ERROR_EXPONENT: f64 = -1.0 / 8.0;
const ERROR_ESTIMATOR_ORDER: i32 = 7;

fn rms<const N: usize>(v: &[f64; N]) -> f64 {
    (v.iter().map(|x| x * x).sum::<f64>() / N as f64).sqrt()
}

/// Interpolant over the last accepted step.
#[derive(Clone, Debug)]
pub struct DenseSegment<const N: usize> {
    pub t_old: f64,
    pub h: f64,
    y_old: [f64; N],
    f: [[f64; N]; INTERPOLATOR_POWER],
}

impl<const N: usize> DenseSegment<N> {
    pub fn t_new(&self) -> f64 {
        self.t_old + self.h
    }

    pub fn eval(&self, t: f64) -> [f64; N] {
        let x = (t - self.t_old) / self.h;
        let mut y = [0.0; N];
        for (i, fi) in self.f.iter().rev().enumerate() {
            for k in 0..N {
                y[k] += fi[k];
                y[k] *= if i % 2 == 0 { x } else { 1.0 - x };
            }
        }
        for k in 0..N {
            y[k] += self.y_old[k];
        }
        y
    }
}

pub struct Dop853<F, const N: usize>
where
    F: Fn(&[f64; N]) -> [f64; N],
{
    rhs: F,
    pub rtol: f64,
    pub atol: f64,
    pub t: f64,
    pub y: [f64; N],
    fy: [f64; N],
    h_abs: f64,
    // previous step, for dense output
    t_old: f64,
    y_old: [f64; N],
    h_prev: f64,
    k: [[f64; N]; STAGES_EXTENDED],
    pub accepted: usize,
    pub rejected: usize,
    pub evaluations: usize,
}

impl<F, const N: usize> Dop853<F, N>
where
    F: Fn(&[f64; N]) -> [f64; N],
{
    pub fn new(rhs: F, t0: f64, y0: [f64; N], rtol: f64, atol: f64) -> Self {
        let fy = rhs(&y0);
        let mut s = Dop853 {
            rhs,
            rtol,
            atol,
            t: t0,
            y: y0,
            fy,
            h_abs: 0.0,
            t_old: t0,
            y_old: y0,
            h_prev: 0.0,
            k: [[0.0; N]; STAGES_EXTENDED],
            accepted: 0,
            rejected: 0,
            evaluations: 1,
        };
        s.h_abs = s.initial_step();
        s
    }

    fn eval(&mut self, y: &[f64; N]) -> [f64; N] {
        self.evaluations += 1;
        (self.rhs)(y)
    }

    fn initial_step(&mut self) -> f64 {
        let y0 = self.y;
        let f0 = self.fy;
        let mut scaled = [0.0; N];
        let scale: [f64; N] = std::array::from_fn(|k| self.atol + y0[k].abs() * self.rtol);
        for k in 0..N {
            scaled[k] = y0[k] / scale[k];
        }
        let d0 = rms(&scaled);
        for k in 0..N {
            scaled[k] = f0[k] / scale[k];
        }
        let d1 = rms(&scaled);
        let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
        let y1: [f64; N] = std::array::from_fn(|k| y0[k] + h0 * f0[k]);
        let f1 = self.eval(&y1);
        for k in 0..N {
            scaled[k] = (f1[k] - f0[k]) / scale[k];
        }
        let d2 = rms(&scaled) / h0;
        let h1 = if d1 <= 1e-15 && d2 <= 1e-15 {
            (h0 * 1e-3).max(1e-6)
        } else {
            (0.01 / d1.max(d2)).powf(1.0 / f64::from(ERROR_ESTIMATOR_ORDER + 1))
        };
        (100.0 * h0).min(h1)
    }

    /// Attempts a step of size `h`; fills stages 0..=12 and returns the
    /// proposed state, its derivative and the error norm.
    fn trial(&mut self, h: f64) -> ([f64; N], [f64; N], f64) {
        self.k[0] = self.fy;
        for s in 1..STAGES {
            let mut yi = self.y;
            for (j, kj) in self.k[..s].iter().enumerate() {
                let a = A[s][j] * h;
                if a != 0.0 {
                    for c in 0..N {
                        yi[c] += a * kj[c];
                    }
                }
            }
            self.k[s] = self.eval(&yi);
        }
        let mut y_new = self.y;
        for (j, kj) in self.k[..STAGES].iter().enumerate() {
            if B[j] != 0.0 {
                for c in 0..N {
                    y_new[c] += h * B[j] * kj[c];
                }
            }
        }
        let f_new = self.eval(&y_new);
        self.k[STAGES] = f_new;

        let (mut e5, mut e3) = (0.0, 0.0);
        for c in 0..N {
            let scale = self.atol + self.y[c].abs().max(y_new[c].abs()) * self.rtol;
            let (mut s5, mut s3) = (0.0, 0.0);
            for j in 0..=STAGES {
                s5 += self.k[j][c] * E5[j];
                s3 += self.k[j][c] * E3[j];
            }
            e5 += (s5 / scale).powi(2);
            e3 += (s3 / scale).powi(2);
        }
        let norm = if e5 == 0.0 && e3 == 0.0 {
            0.0
        } else {
            h.abs() * e5 / ((e5 + 0.01 * e3) * N as f64).sqrt()
        };
        (y_new, f_new, norm)
    }

    /// Advances by one accepted step, never past `t_bound`.
    pub fn step(&mut self, t_bound: f64) -> Result<()> {
        let min_step = 10.0 * (self.t.next_up() - self.t).abs();
        let mut h_abs = self.h_abs.max(min_step);
        let mut rejected = false;
        loop {
            if h_abs < min_step {
                return Err(Error::StepSizeUnderflow { t: self.t, h: h_abs });
            }
            let mut h = h_abs;
            let mut t_new = self.t + h;
            if t_new > t_bound {
                t_new = t_bound;
                h = t_new - self.t;
                h_abs = h;
            }
            let (y_new, f_new, err) = self.trial(h);
            if !err.is_finite() {
                h_abs *= MIN_FACTOR;
                rejected = true;
                self.rejected += 1;
                continue;
            }
            if err < 1.0 {
                let mut factor = if err == 0.0 {
                    MAX_FACTOR
                } else {
                    MAX_FACTOR.min(SAFETY * err.powf(ERROR_EXPONENT))
                };
                if rejected {
                    factor = factor.min(1.0);
                }
                self.h_prev = h;
                self.t_old = self.t;
                self.y_old = self.y;
                self.t = t_new;
                self.y = y_new;
                self.fy = f_new;
                self.h_abs = h_abs * factor;
                self.accepted += 1;
                return Ok(());
            }
            h_abs *= MIN_FACTOR.max(SAFETY * err.powf(ERROR_EXPONENT));
            rejected = true;
            self.rejected += 1;
        }
    }

    /// Replaces the current state after an accepted step (e.g. a projection
    /// onto a conserved manifold) and refreshes the cached derivative. Take
    /// any dense output of the step first.
    pub fn reset_state(&mut self, y: [f64; N]) {
        self.y = y;
        self.fy = self.eval(&y);
    }

    /// Interpolant over the last accepted step (three extra stages).
    pub fn dense(&mut self) -> DenseSegment<N> {
        let h = self.h_prev;
        for s in STAGES + 1..STAGES_EXTENDED {
            let mut yi = self.y_old;
            for (j, kj) in self.k[..s].iter().enumerate() {
                let a = A[s][j] * h;
                if a != 0.0 {
                    for c in 0..N {
                        yi[c] += a * kj[c];
                    }
                }
            }
            debug_assert!(C[s] > 0.0);
            self.k[s] = self.eval(&yi);
        }
        let f_old = self.k[0];
        let mut f = [[0.0; N]; INTERPOLATOR_POWER];
        for c in 0..N {
            let dy = self.y[c] - self.y_old[c];
            f[0][c] = dy;
            f[1][c] = h * f_old[c] - dy;
            f[2][c] = 2.0 * dy - h * (self.fy[c] + f_old[c]);
        }
        for (r, drow) in D.iter().enumerate() {
            for c in 0..N {
                f[3 + r][c] = h * (0..STAGES_EXTENDED).map(|j| drow[j] * self.k[j][c]).sum::<f64>();
            }
        }
        DenseSegment {
            t_old: self.t_old,
            h,
            y_old: self.y_old,
            f,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn harmonic_oscillator() {
        let mut s = Dop853::new(|y: &[f64; 2]| [y[1], -y[0]], 0.0, [1.0, 0.0], 1e-12, 1e-12);
        let t_end = 20.0;
        let mut probes = Vec::new();
        while s.t < t_end {
            s.step(t_end).unwrap();
            let seg = s.dense();
            let mid = seg.t_old + 0.37 * seg.h;
            probes.push((mid, seg.eval(mid)[0]));
            let end = seg.eval(seg.t_new());
            assert!((end[0] - s.y[0]).abs() < 1e-13);
        }
        assert!((s.y[0] - t_end.cos()).abs() < 1e-9);
        assert!((s.y[1] + t_end.sin()).abs() < 1e-9);
        for (t, v) in probes {
            assert!((v - t.cos()).abs() < 1e-9, "dense output at {t}");
        }
    }

    #[test]
    fn exponential_growth_rate() {
        let mut s = Dop853::new(|y: &[f64; 1]| [0.5 * y[0]], 0.0, [1.0], 1e-10, 1e-12);
        while s.t < 4.0 {
            s.step(4.0).unwrap();
        }
        assert_eq!(s.t, 4.0);
        assert!((s.y[0] / 2f64.exp() - 1.0).abs() < 1e-9);
    }
}
