use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{cartesian_rhs, populations, project_number, ClassicalState, Dop853, IntegrationOptions, Monitor, PHASE_DIM};
use crate::error::{Error, Result};
use crate::hamiltonian::ModelParams;

/// Plane on which crossings are recorded.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SectionPlane {
    /// `φ_1 - φ_0 = 0` (monomer against the first trimer mode).
    MonomerTrimer,
    /// `φ_1 - φ_2 = 0`, for the decoupled trimer.
    Trimer,
}

impl SectionPlane {
    pub fn for_params(params: &ModelParams) -> Self {
        if params.coupling == 0.0 {
            SectionPlane::Trimer
        } else {
            SectionPlane::MonomerTrimer
        }
    }

    fn modes(self) -> (usize, usize) {
        match self {
            SectionPlane::MonomerTrimer => (0, 1),
            SectionPlane::Trimer => (2, 1),
        }
    }

    /// `2 sqrt(n_a n_b) sin(φ_b - φ_a)`; zero on the plane, increasing through
    /// it in the recorded direction.
    fn g(self, y: &[f64; PHASE_DIM]) -> f64 {
        let (a, b) = self.modes();
        y[a] * y[4 + b] - y[4 + a] * y[b]
    }

    /// `2 sqrt(n_a n_b) cos(φ_b - φ_a)`, positive on the `φ_b = φ_a` branch.
    fn aligned(self, y: &[f64; PHASE_DIM]) -> f64 {
        let (a, b) = self.modes();
        y[a] * y[b] + y[4 + a] * y[4 + b]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PoincareOptions {
    pub t_end: f64,
    /// Stop a trajectory after this many crossings.
    pub max_crossings: usize,
    pub integration: IntegrationOptions,
}

impl Default for PoincareOptions {
    fn default() -> Self {
        PoincareOptions {
            t_end: 2000.0,
            max_crossings: 400,
            integration: IntegrationOptions::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoincareSection {
    pub plane: SectionPlane,
    /// `(u, v)` with `u = (n_2 - n_3) / (n_1 + n_2 + n_3)`, `v = φ_2 - φ_3`
    /// wrapped to `(-π, π]` (trimer modes counted from 1).
    pub points: Vec<(f64, f64)>,
    /// Trajectory index of each point.
    pub origin: Vec<usize>,
    pub diagnostic: Option<String>,
}

fn wrap(a: f64) -> f64 {
    let w = (a + PI).rem_euclid(2.0 * PI) - PI;
    if w == -PI {
        PI
    } else {
        w
    }
}

fn reduced(y: &[f64; PHASE_DIM]) -> (f64, f64) {
    let s = ClassicalState::from_cartesian(y, 0.0);
    let trimer = s.n[1] + s.n[2] + s.n[3];
    ((s.n[2] - s.n[3]) / trimer, wrap(s.phi[2] - s.phi[3]))
}

fn refine_crossing(seg: &super::DenseSegment<PHASE_DIM>, plane: SectionPlane, mut lo: f64, mut hi: f64) -> [f64; PHASE_DIM] {
    let mut g_lo = plane.g(&seg.eval(lo));
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let gm = plane.g(&seg.eval(mid));
        if (gm < 0.0) == (g_lo < 0.0) {
            lo = mid;
            g_lo = gm;
        } else {
            hi = mid;
        }
    }
    seg.eval(0.5 * (lo + hi))
}

fn crossings(
    start: &ClassicalState,
    params: &ModelParams,
    plane: SectionPlane,
    opts: &PoincareOptions,
) -> Result<Vec<(f64, f64)>> {
    let io = &opts.integration;
    let y0 = start.to_cartesian();
    let mut monitor = Monitor::new(&y0, params);
    let mut solver = Dop853::new(|y: &[f64; PHASE_DIM]| cartesian_rhs(y, params), 0.0, y0, io.rtol, io.atol);
    let mut out = Vec::new();
    let mut g_prev = plane.g(&solver.y);
    while solver.t < opts.t_end && out.len() < opts.max_crossings {
        solver.step(opts.t_end)?;
        let g = plane.g(&solver.y);
        if g_prev < 0.0 && g >= 0.0 {
            let seg = solver.dense();
            let y = refine_crossing(&seg, plane, seg.t_old, seg.t_new());
            if plane.aligned(&y) > 0.0 {
                out.push(reduced(&y));
            }
        }
        if io.project_number {
            let mut y = solver.y;
            project_number(&mut y, monitor.total());
            solver.reset_state(y);
        }
        monitor.record(&solver.y, params, io, solver.t)?;
        g_prev = plane.g(&solver.y);
    }
    debug_assert!(populations(&solver.y).iter().all(|&n| n >= 0.0));
    Ok(out)
}

/// Upward crossings of the section plane by each trajectory, pooled in
/// trajectory order.
pub fn poincare_section(starts: &[ClassicalState], params: &ModelParams, opts: &PoincareOptions) -> Result<PoincareSection> {
    if !(opts.t_end > 0.0) {
        return Err(Error::InvalidParameter("section horizon must be positive".into()));
    }
    let plane = SectionPlane::for_params(params);
    let per: Vec<Result<Vec<(f64, f64)>>> = starts.par_iter().map(|s| crossings(s, params, plane, opts)).collect();
    let mut section = PoincareSection {
        plane,
        points: Vec::new(),
        origin: Vec::new(),
        diagnostic: None,
    };
    for (i, r) in per.into_iter().enumerate() {
        for p in r? {
            section.points.push(p);
            section.origin.push(i);
        }
    }
    if section.points.is_empty() {
        section.diagnostic = Some(format!(
            "no crossings of the {plane:?} plane within t = {} for {} trajectories",
            opts.t_end,
            starts.len()
        ));
    }
    Ok(section)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wrap_range() {
        assert!((wrap(3.0 * PI) - PI).abs() < 1e-12);
        assert!((wrap(-0.5) + 0.5).abs() < 1e-15);
    }

    #[test]
    fn symmetric_trimer_orbit_repeats() {
        // n_2 = n_3 keeps u = 0 and v = 0 forever: one repeating section point
        let p = ModelParams::from_un(20, 10.0, 0.0);
        let s = ClassicalState { n: [4.0, 10.0, 4.0, 4.0], phi: [0.0, 0.5, 0.0, 0.0], time: 0.0 };
        let sec = poincare_section(
            &[s],
            &p,
            &PoincareOptions {
                t_end: 200.0,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(!sec.points.is_empty());
        for &(u, v) in &sec.points {
            assert!(u.abs() < 1e-8 && v.abs() < 1e-8, "({u}, {v})");
        }
    }

    #[test]
    fn no_crossings_gives_diagnostic() {
        let p = ModelParams::from_un(20, 10.0, 0.1);
        let s = ClassicalState { n: [5.0, 6.0, 6.0, 5.0], phi: [0.0, 1.0, 2.0, 3.0], time: 0.0 };
        let sec = poincare_section(
            &[s],
            &p,
            &PoincareOptions {
                t_end: 1e-3,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(sec.points.is_empty() && sec.diagnostic.is_some());
    }
}
