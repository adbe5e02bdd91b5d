//! One function per subcommand. Each writes its tables through
//! [`RunOutput`]; recoverable failures become failed jobs.

use anyhow::{anyhow, Result};
use tetramer::analysis::{
    classical_threshold, quantum_threshold, scaling_study, scan_epsilon, scan_interaction, spacing_scaling,
    ClassicalModel, QuantumModel, ScalingFit, ScanRow, ThresholdResult,
};
use tetramer::basis::build_sector_basis;
use tetramer::hamiltonian::build_hamiltonian;
use tetramer::meanfield::{
    classical_distribution, poincare_section, sample_microcanonical, window_average, PoincareOptions,
};
use tetramer::qdyn::{
    delta_rho, energy_width, entropy, population_series, prepare_initial, sample_times, thermal_reference,
    MonomerDensity,
};
use tetramer::spectral::{chaos_map, diagonalize, UncoupledSystem};

use crate::config::RunConfig;
use crate::output::{num, opt_num, RunOutput, Summary};

fn quantum_model(config: &RunConfig) -> Result<QuantumModel> {
    Ok(QuantumModel::new(&config.params().uncoupled(), config.quantum)?)
}

fn density_rows(t: f64, d: &MonomerDensity) -> impl Iterator<Item = [String; 3]> + '_ {
    let n = f64::from(d.total);
    d.probabilities
        .iter()
        .enumerate()
        .map(move |(k, p)| [num(t), num(k as f64 / n), num(*p)])
}

pub fn basis(config: &RunConfig, out: &mut RunOutput) {
    out.job("basis", |out| {
        let sector = build_sector_basis(config.model.n);
        let mut t = out.table("basis.csv", &["index", "n1", "n2", "n3", "n4"])?;
        for (i, s) in sector.representatives().iter().enumerate() {
            let [a, b, c, d] = s.0;
            t.row([i.to_string(), a.to_string(), b.to_string(), c.to_string(), d.to_string()])?;
        }
        t.finish()
    });
}

pub fn spectrum(config: &RunConfig, out: &mut RunOutput) {
    let params = config.params();
    let sector = build_sector_basis(params.total);
    let system = match UncoupledSystem::new(&params.uncoupled(), &sector) {
        Ok(s) => s,
        Err(e) => return out.fail("spectrum", e.to_string()),
    };
    out.job("uncoupled spectrum", |out| {
        let mut levels = system.levels.clone();
        levels.sort_by(|a, b| a.energy.total_cmp(&b.energy));
        let mut t = out.table("spectrum.csv", &["index", "energy", "eps", "x", "nu"])?;
        for (i, l) in levels.iter().enumerate() {
            t.row([i.to_string(), num(l.energy), num(l.eps), num(l.x.value()), l.nu.to_string()])?;
        }
        t.finish()
    });
    if params.coupling > 0.0 {
        out.job("coupled spectrum", |out| {
            let h = build_hamiltonian(&params, &sector)?;
            let s = diagonalize(&h)?;
            let xs: Vec<f64> = (0..sector.dim()).map(|i| sector.x_value(i).value()).collect();
            let mut t = out.table("coupled_spectrum.csv", &["index", "energy", "eps", "mean_x"])?;
            for (j, &e) in s.eigenvalues.iter().enumerate() {
                let col = s.eigenvectors.column(j);
                let mean_x: f64 = col.iter().zip(&xs).map(|(a, x)| a * a * x).sum();
                t.row([j.to_string(), num(e), num(system.scaled_energy(e)), num(mean_x)])?;
            }
            t.finish()
        });
    }
}

pub fn chaos(config: &RunConfig, out: &mut RunOutput) {
    out.job("chaos map", |out| {
        let params = config.params().uncoupled();
        let system = UncoupledSystem::new(&params, &build_sector_basis(params.total))?;
        let map = chaos_map(&system, config.spectral.chaos_window);
        let mut t = out.table("chaos_map.csv", &["x", "eps", "mean_r", "n_levels"])?;
        for c in &map.cells {
            t.row([num(c.x), num(c.eps), opt_num(c.mean_r), c.n_levels.to_string()])?;
        }
        t.finish()
    });
}

fn write_series(out: &mut RunOutput, x_header: &str, series: &[(f64, MonomerDensity)]) -> Result<()> {
    let mut p = out.table("populations.csv", &["t", x_header, "P"])?;
    for (t, d) in series {
        for row in density_rows(*t, d) {
            p.row(row)?;
        }
    }
    p.finish()?;
    let mut s = out.table("entropy.csv", &["t", "entropy"])?;
    for (t, d) in series {
        s.row([num(*t), num(entropy(d))])?;
    }
    s.finish()
}

fn write_comparison(out: &mut RunOutput, average: &MonomerDensity, thermal: &MonomerDensity) -> Result<()> {
    let mut t = out.table("thermal.csv", &["x", "P_average", "P_thermal"])?;
    let n = f64::from(average.total);
    for (k, (a, b)) in average.probabilities.iter().zip(&thermal.probabilities).enumerate() {
        t.row([num(k as f64 / n), num(*a), num(*b)])?;
    }
    t.finish()
}

fn late_mean(values: &[(f64, f64)], t_from: f64) -> f64 {
    let late: Vec<f64> = values.iter().filter(|(t, _)| *t >= t_from).map(|v| v.1).collect();
    late.iter().sum::<f64>() / late.len().max(1) as f64
}

fn model_summary(s: &mut Summary, config: &RunConfig) {
    s.int("n", config.model.n)
        .num("un", config.model.un)
        .num("omega", config.model.omega)
        .num("x0", config.initial.x0)
        .num("eps0", config.initial.eps0);
}

pub fn evolve_quantum(config: &RunConfig, out: &mut RunOutput) {
    out.job("evolve-quantum", |out| {
        let model = quantum_model(config)?;
        let omega = config.model.omega;
        let x = model.x_value(config.initial.x0);
        let entry = model.spectrum(omega)?;
        let (state, _) = prepare_initial(&entry.1, &model.uncoupled, x, config.initial.eps0)?;
        let times = sample_times(0.0, config.evolution.t_end, config.evolution.samples);
        let series = population_series(&state, &model.labels, &times)?;
        let series: Vec<(f64, MonomerDensity)> = times.iter().copied().zip(series).collect();
        write_series(out, "x", &series)?;
        let q = model.quench(omega, x, config.initial.eps0)?;
        write_comparison(out, &q.average, &q.thermal.density)?;
        let s_t: Vec<(f64, f64)> = series.iter().map(|(t, d)| (*t, entropy(d))).collect();
        let mut s = Summary::default();
        model_summary(&mut s, config);
        s.num("level_eps", q.level_eps)
            .num("E0", q.e0)
            .num("DeltaE", q.delta_e)
            .num("delta_rho", q.delta_rho)
            .num("delta_rho_error", q.delta_rho_error)
            .num("S_final", s_t.last().map_or(f64::NAN, |v| v.1))
            .num("S_late", late_mean(&s_t, config.evolution.t_end / 2.0))
            .num("S_average", q.entropy_average)
            .num("S_thermal", q.entropy_thermal);
        out.text("summary.txt", &s.render())
    });
}

pub fn evolve_classical(config: &RunConfig, out: &mut RunOutput) {
    out.job("evolve-classical", |out| {
        let model = quantum_model(config)?;
        let omega = config.model.omega;
        let x = model.x_value(config.initial.x0);
        let o = &config.classical;
        let cm = ClassicalModel::new(&model, x, config.initial.eps0, *o)?;
        let params = model.params.with_coupling(omega);
        let t_end = config.evolution.t_end;
        let times = sample_times(0.0, t_end, config.evolution.samples);
        let run = cm.ensemble.evolve(&params, &times, &o.integration)?;
        let series = (0..times.len())
            .map(|i| Ok((times[i], classical_distribution(&run, i, params.total)?)))
            .collect::<Result<Vec<_>>>()?;
        write_series(out, "x_bin", &series)?;

        let h = model.hamiltonian(omega)?;
        let width = energy_width(&h, &model.uncoupled.level_vector(cm.level))?;
        let e0 = model.uncoupled.levels[cm.level].energy;
        let delta_e = if width.width > 0.0 { width.width } else { f64::MIN_POSITIVE.sqrt() };
        let thermal = thermal_reference(&model.uncoupled, e0, delta_e, model.options.window)?;
        let average = window_average(&run, params.total, t_end / 2.0, t_end)?;
        write_comparison(out, &average, &thermal.density)?;

        let s_t: Vec<(f64, f64)> = series.iter().map(|(t, d)| (*t, entropy(d))).collect();
        let mut s = Summary::default();
        model_summary(&mut s, config);
        s.num("level_eps", model.uncoupled.levels[cm.level].eps)
            .num("E0", e0)
            .num("DeltaE", delta_e)
            .num("delta_rho", delta_rho(&average, &thermal.density)?)
            .num("S_final", s_t.last().map_or(f64::NAN, |v| v.1))
            .num("S_late", late_mean(&s_t, t_end / 2.0))
            .num("S_average", entropy(&average))
            .num("S_thermal", entropy(&thermal.density))
            .int("members", cm.ensemble.members.len() as u64)
            .int("seed", cm.ensemble.seed)
            .num("acceptance_rate", cm.ensemble.acceptance_rate())
            .num("shell_energy", cm.ensemble.energy)
            .num("shell_tolerance", cm.ensemble.energy_tolerance)
            .num("rtol", o.integration.rtol)
            .num("atol", o.integration.atol)
            .num("max_energy_drift", run.max_energy_drift)
            .num("max_number_drift", run.max_number_drift)
            .int("steps", run.steps as u64);
        out.text("summary.txt", &s.render())
    });
}

pub fn poincare(config: &RunConfig, out: &mut RunOutput) {
    out.job("poincare", |out| {
        let params = config.params();
        let model = quantum_model(config)?;
        let x = model.x_value(config.initial.x0);
        let level = model.uncoupled.find_level(x, config.initial.eps0)?;
        let energy = model.uncoupled.levels[level].energy;
        let p = &config.poincare;
        let starts = sample_microcanonical(
            &params.uncoupled(),
            x.value(),
            energy,
            p.trajectories,
            p.seed,
            &config.classical.sampling,
        )?;
        let opts = PoincareOptions {
            t_end: p.t_end,
            max_crossings: p.max_crossings,
            integration: p.integration,
        };
        let section = poincare_section(&starts.members, &params, &opts)?;
        let mut t = out.table("poincare.csv", &["u", "v", "trajectory"])?;
        for ((u, v), k) in section.points.iter().zip(&section.origin) {
            t.row([num(*u), num(*v), k.to_string()])?;
        }
        t.finish()?;
        if let Some(d) = section.diagnostic {
            eprintln!("[poincare] {d}");
        }
        Ok(())
    });
}

fn threshold_table(out: &mut RunOutput, name: &str, r: &ThresholdResult) -> Result<()> {
    let mut t = out.table(name, &["omega", "delta_rho"])?;
    for (w, d) in &r.sweep {
        t.row([num(*w), num(*d)])?;
    }
    t.finish()
}

fn status_name<T: serde::Serialize>(v: &T) -> String {
    toml::Value::try_from(v)
        .ok()
        .and_then(|v| v.as_str().map(str::to_string))
        .unwrap_or_default()
}

fn threshold_summary(s: &mut Summary, prefix: &str, r: &ThresholdResult) {
    s.num(&format!("{prefix}omega_T"), r.omega_t)
        .text(&format!("{prefix}status"), &status_name(&r.status))
        .text(&format!("{prefix}method"), &status_name(&r.method));
    if let Some((lo, hi)) = r.bracket {
        s.num(&format!("{prefix}bracket_lo"), lo).num(&format!("{prefix}bracket_hi"), hi);
    }
}

pub fn threshold(config: &RunConfig, out: &mut RunOutput) {
    let model = match quantum_model(config) {
        Ok(m) => m,
        Err(e) => return out.fail("threshold", format!("{e:#}")),
    };
    let x = model.x_value(config.initial.x0);
    let sw = &config.sweep;
    let mut summary = Summary::default();
    model_summary(&mut summary, config);
    summary.num("c", sw.c);
    out.job("quantum threshold", |out| {
        let r = quantum_threshold(&model, x, config.initial.eps0, &sw.omega, sw.c)?;
        threshold_table(out, "threshold_quantum.csv", &r)?;
        threshold_summary(&mut summary, "quantum_", &r);
        Ok(())
    });
    if sw.classical {
        out.job("classical threshold", |out| {
            let cm = ClassicalModel::new(&model, x, config.initial.eps0, config.classical)?;
            let r = classical_threshold(&cm, &sw.omega, sw.c)?;
            threshold_table(out, "threshold_classical.csv", &r)?;
            threshold_summary(&mut summary, "classical_", &r);
            Ok(())
        });
    }
    out.job("threshold summary", |out| out.text("summary.txt", &summary.render()));
}

fn scan_table(out: &mut RunOutput, name: &str, key: &str, rows: &[ScanRow]) -> Result<Vec<String>> {
    let mut t = out.table(name, &[key, "omega_T_quantum", "omega_T_classical", "status"])?;
    let mut failures = Vec::new();
    for r in rows {
        let mut status = Vec::new();
        let q = match &r.quantum {
            Ok(q) => {
                status.push(format!("quantum={}", status_name(&q.status)));
                Some(q.omega_t)
            }
            Err(e) => {
                status.push("quantum=error".into());
                failures.push(format!("{key} = {}: quantum: {e}", r.value));
                None
            }
        };
        let c = match &r.classical {
            Some(Ok(c)) => {
                status.push(format!("classical={}", status_name(&c.status)));
                Some(c.omega_t)
            }
            Some(Err(e)) => {
                status.push("classical=error".into());
                failures.push(format!("{key} = {}: classical: {e}", r.value));
                None
            }
            None => None,
        };
        t.row([num(r.value), opt_num(q), opt_num(c), status.join(";")])?;
    }
    t.finish()?;
    Ok(failures)
}

pub fn scan_eps(config: &RunConfig, out: &mut RunOutput) {
    let rows = match quantum_model(config) {
        Ok(model) => {
            let x = model.x_value(config.initial.x0);
            let sw = &config.sweep;
            scan_epsilon(&model, x, &sw.eps, &sw.omega, sw.c, sw.classical.then_some(&config.classical))
        }
        Err(e) => return out.fail("scan-eps", format!("{e:#}")),
    };
    record_scan(out, "scan-eps", "scan_eps.csv", "eps", &rows);
}

pub fn scan_un(config: &RunConfig, out: &mut RunOutput) {
    let sw = &config.sweep;
    let rows = scan_interaction(
        config.model.n,
        config.initial.x0,
        config.initial.eps0,
        &sw.un,
        &sw.omega,
        sw.c,
        config.quantum,
        sw.classical.then_some(&config.classical),
    );
    record_scan(out, "scan-un", "scan_un.csv", "un", &rows);
}

fn record_scan(out: &mut RunOutput, job: &str, file: &str, key: &str, rows: &[ScanRow]) {
    let mut failures = Vec::new();
    out.job(job, |out| {
        failures = scan_table(out, file, key, rows)?;
        Ok(())
    });
    for f in failures {
        out.fail(job, f);
    }
}

fn fit_summary(s: &mut Summary, prefix: &str, fit: &ScalingFit) {
    s.text(&format!("{prefix}model"), &status_name(&fit.model))
        .num(&format!("{prefix}a"), fit.a)
        .num(&format!("{prefix}b"), fit.b)
        .num(&format!("{prefix}residual_rms"), fit.residual_rms)
        .num(&format!("{prefix}max_relative_residual"), fit.max_relative_residual);
}

pub fn scaling(config: &RunConfig, out: &mut RunOutput) {
    out.job("scaling", |out| {
        let sw = &config.sweep;
        let study = scaling_study(
            config.model.un,
            config.initial.x0,
            config.initial.eps0,
            &sw.n,
            &sw.scaled_omega,
            sw.c,
            config.quantum,
        )?;
        let mut t = out.table("scaling.csv", &["N", "omega", "delta_rho"])?;
        for (n, curve) in &study.curves {
            for (xs, d) in study.scaled_grid.iter().zip(curve) {
                t.row([n.to_string(), num(xs / f64::from(*n)), num(*d)])?;
            }
        }
        t.finish()?;
        let mut s = Summary::default();
        s.num("un", study.un_over_omega).num("x0", study.x0).num("eps0", study.eps0).num("c", study.c);
        fit_summary(&mut s, "fit_", &study.fit);
        s.num("collapse", study.collapse).num("fitted_omega_T_N", study.fitted_threshold);
        for (n, v) in &study.threshold_per_n {
            s.num(&format!("omega_T_N_{n}"), v.unwrap_or(f64::NAN));
        }
        s.num("threshold_spread", study.threshold_spread.unwrap_or(f64::NAN));
        out.text("fit.txt", &s.render())
    });
}

pub fn spacing(config: &RunConfig, out: &mut RunOutput) {
    out.job("spacing-scaling", |out| {
        let [lo, hi] = config.spectral.spacing_window;
        let sp = spacing_scaling(config.model.un, &config.spectral.spacing_n, (lo, hi))?;
        let mut t = out.table("spacing.csv", &["N", "global_spacing", "local_spacing"])?;
        for (n, g, l) in &sp.rows {
            t.row([n.to_string(), num(*g), num(*l)])?;
        }
        t.finish()?;
        let mut s = Summary::default();
        s.num("un", config.model.un).num("eps_lo", lo).num("eps_hi", hi);
        fit_summary(&mut s, "global_", &sp.global_fit);
        fit_summary(&mut s, "local_", &sp.local_fit);
        out.text("fit.txt", &s.render())
    });
}

/// Fails with the list of subcommands when `name` is not one.
pub fn dispatch(name: &str, config: &RunConfig, out: &mut RunOutput) -> Result<()> {
    let f: fn(&RunConfig, &mut RunOutput) = match name {
        "basis" => basis,
        "spectrum" => spectrum,
        "chaos-map" => chaos,
        "evolve-quantum" => evolve_quantum,
        "evolve-classical" => evolve_classical,
        "poincare" => poincare,
        "threshold" => threshold,
        "scan-eps" => scan_eps,
        "scan-un" => scan_un,
        "scaling" => scaling,
        "spacing-scaling" => spacing,
        other => return Err(anyhow!("unknown experiment `{other}`")),
    };
    f(config, out);
    Ok(())
}

