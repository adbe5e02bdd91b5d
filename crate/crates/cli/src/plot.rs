//! Static SVG figures rendered from the CSV tables of a finished run.
//!
//! Each figure needs specific tables; a figure whose inputs are missing or
//! empty is skipped with a warning.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use plotters::prelude::*;

use crate::output::read_summary;

const SIZE: (u32, u32) = (800, 600);

/// Columns of a CSV table by header name; empty fields read as NaN.
pub struct Columns {
    pub names: Vec<String>,
    pub data: Vec<Vec<f64>>,
}

impl Columns {
    pub fn read(path: &Path) -> Result<Self> {
        let mut r = csv::Reader::from_path(path).with_context(|| format!("cannot open {}", path.display()))?;
        let names: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
        let mut data = vec![Vec::new(); names.len()];
        for rec in r.records() {
            let rec = rec?;
            for (col, field) in data.iter_mut().zip(rec.iter()) {
                col.push(field.parse().unwrap_or(f64::NAN));
            }
        }
        Ok(Columns { names, data })
    }

    pub fn rows(&self) -> usize {
        self.data.first().map_or(0, Vec::len)
    }

    pub fn col(&self, name: &str) -> Result<&[f64]> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| self.data[i].as_slice())
            .ok_or_else(|| anyhow!("column `{name}` missing"))
    }
}

fn range(v: impl IntoIterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = v
        .into_iter()
        .filter(|x| x.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(x), b.max(x)));
    if !lo.is_finite() {
        (0.0, 1.0)
    } else if hi > lo {
        (lo, hi)
    } else {
        (lo - 0.5, hi + 0.5)
    }
}

fn pad((lo, hi): (f64, f64), f: f64) -> (f64, f64) {
    let d = (hi - lo) * f;
    (lo - d, hi + d)
}

/// Blue (low) to red (high) over `[lo, hi]`.
fn heat(v: f64, lo: f64, hi: f64) -> RGBColor {
    let t = ((v - lo) / (hi - lo)).clamp(0.0, 1.0);
    let c = HSLColor(0.66 * (1.0 - t), 0.85, 0.3 + 0.35 * t).to_rgba();
    RGBColor(c.0, c.1, c.2)
}

fn series_color(i: usize) -> RGBColor {
    let c = Palette99::pick(i).to_rgba();
    RGBColor(c.0, c.1, c.2)
}

fn summary_value(dir: &Path, file: &str, key: &str) -> Option<f64> {
    read_summary(&dir.join(file))?.get(key)?.as_float()
}

fn need(dir: &Path, file: &str) -> Result<Columns> {
    let path = dir.join(file);
    if !path.exists() {
        bail!("{file} not found");
    }
    let c = Columns::read(&path)?;
    if c.rows() == 0 {
        bail!("{file} has no rows");
    }
    Ok(c)
}

type Drawing<'a> = DrawingArea<SVGBackend<'a>, plotters::coord::Shift>;

fn evolution(dir: &Path, target: &mut String) -> Result<()> {
    let pop = need(dir, "populations.csv")?;
    let ent = need(dir, "entropy.csv")?;
    let t = pop.col("t")?;
    let x = pop.col("x").or_else(|_| pop.col("x_bin"))?;
    let p = pop.col("P")?;
    let mut times: Vec<f64> = t.to_vec();
    times.dedup();
    let dt = if times.len() > 1 { times[1] - times[0] } else { 1.0 };
    let mut xs: Vec<f64> = x.to_vec();
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    let dx = if xs.len() > 1 { xs[1] - xs[0] } else { 1.0 };
    let (p_lo, p_hi) = range(p.iter().copied());

    let root: Drawing = SVGBackend::with_string(target, (SIZE.0, SIZE.1 + 100)).into_drawing_area();
    root.fill(&WHITE)?;
    let (top, bottom) = root.split_vertically(SIZE.1 * 3 / 5);
    let (t_lo, t_hi) = range(times.iter().copied());
    let mut chart = ChartBuilder::on(&top)
        .margin(10)
        .x_label_area_size(30)
        .y_label_area_size(50)
        .caption("P(x, t)", ("sans-serif", 18))
        .build_cartesian_2d(t_lo..t_hi + dt, 0.0..1.0 + dx)?;
    chart.configure_mesh().x_desc("t").y_desc("x").disable_mesh().draw()?;
    chart.draw_series((0..t.len()).map(|i| {
        Rectangle::new([(t[i], x[i]), (t[i] + dt, x[i] + dx)], heat(p[i], 0.0, p_hi.max(p_lo + 1e-12)).filled())
    }))?;

    let te = ent.col("t")?;
    let s = ent.col("entropy")?;
    let s_th = summary_value(dir, "summary.txt", "S_thermal");
    let (s_lo, s_hi) = range(s.iter().copied().chain(s_th));
    let mut chart = ChartBuilder::on(&bottom)
        .margin(10)
        .x_label_area_size(35)
        .y_label_area_size(50)
        .build_cartesian_2d(t_lo..t_hi + dt, pad((s_lo.min(0.0), s_hi), 0.05).0..pad((s_lo, s_hi), 0.05).1)?;
    chart.configure_mesh().x_desc("t").y_desc("S").draw()?;
    chart.draw_series(LineSeries::new(te.iter().copied().zip(s.iter().copied()), &BLUE))?;
    if let Some(v) = s_th {
        chart.draw_series(LineSeries::new([(t_lo, v), (t_hi + dt, v)], RED.stroke_width(2)))?;
    }
    root.present()?;
    Ok(())
}

fn distribution(dir: &Path, target: &mut String) -> Result<()> {
    let c = need(dir, "thermal.csv")?;
    let x = c.col("x")?;
    let a = c.col("P_average")?;
    let th = c.col("P_thermal")?;
    let (_, hi) = range(a.iter().chain(th).copied());
    let root: Drawing = SVGBackend::with_string(target, SIZE).into_drawing_area();
    root.fill(&WHITE)?;
    let mut chart = ChartBuilder::on(&root)
        .margin(10)
        .x_label_area_size(35)
        .y_label_area_size(60)
        .caption("time-averaged vs microcanonical P(x)", ("sans-serif", 18))
        .build_cartesian_2d(0.0..1.0, 0.0..hi * 1.05)?;
    chart.configure_mesh().x_desc("x").y_desc("P").draw()?;
    chart
        .draw_series(LineSeries::new(x.iter().copied().zip(a.iter().copied()), BLUE.stroke_width(2)))?
        .label("average")
        .legend(|(x, y)| PathElement::new([(x, y), (x + 20, y)], BLUE));
    chart
        .draw_series(LineSeries::new(x.iter().copied().zip(th.iter().copied()), RED.stroke_width(2)))?
        .label("thermal")
        .legend(|(x, y)| PathElement::new([(x, y), (x + 20, y)], RED));
    chart.configure_series_labels().background_style(WHITE).border_style(BLACK).draw()?;
    root.present()?;
    Ok(())
}

fn chaos(dir: &Path, target: &mut String) -> Result<()> {
    let c = need(dir, "chaos_map.csv")?;
    let x = c.col("x")?;
    let e = c.col("eps")?;
    let r = c.col("mean_r")?;
    let root: Drawing = SVGBackend::with_string(target, SIZE).into_drawing_area();
    root.fill(&WHITE)?;
    let mut chart = ChartBuilder::on(&root)
        .margin(10)
        .x_label_area_size(35)
        .y_label_area_size(50)
        .caption("window-mean r (blue 0.39, red 0.53)", ("sans-serif", 18))
        .build_cartesian_2d(0.0..1.0, 0.0..1.0)?;
    chart.configure_mesh().x_desc("x").y_desc("ε").draw()?;
    chart.draw_series(
        (0..c.rows())
            .filter(|&i| r[i].is_finite())
            .map(|i| Circle::new((x[i], e[i]), 3, heat(r[i], 0.386, 0.5307).filled())),
    )?;
    root.present()?;
    Ok(())
}

fn threshold(dir: &Path, target: &mut String) -> Result<()> {
    let mut curves = Vec::new();
    for (file, label, color) in [("threshold_quantum.csv", "quantum", BLUE), ("threshold_classical.csv", "classical", RED)] {
        if let Ok(c) = need(dir, file) {
            curves.push((label, color, c.col("omega")?.to_vec(), c.col("delta_rho")?.to_vec()));
        }
    }
    if curves.is_empty() {
        bail!("no threshold tables");
    }
    let (w_lo, w_hi) = range(curves.iter().flat_map(|c| c.2.iter().copied()));
    let (_, d_hi) = range(curves.iter().flat_map(|c| c.3.iter().copied()));
    let root: Drawing = SVGBackend::with_string(target, SIZE).into_drawing_area();
    root.fill(&WHITE)?;
    let mut chart = ChartBuilder::on(&root)
        .margin(10)
        .x_label_area_size(35)
        .y_label_area_size(60)
        .caption("Δρ against coupling", ("sans-serif", 18))
        .build_cartesian_2d((w_lo * 0.9..w_hi * 1.1).log_scale(), 0.0..d_hi * 1.05)?;
    chart.configure_mesh().x_desc("ω/Ω").y_desc("Δρ").draw()?;
    for (label, color, w, d) in &curves {
        let pts: Vec<(f64, f64)> = w.iter().copied().zip(d.iter().copied()).collect();
        chart
            .draw_series(LineSeries::new(pts.clone(), color.stroke_width(2)))?
            .label(*label)
            .legend(move |(x, y)| PathElement::new([(x, y), (x + 20, y)], color));
        chart.draw_series(pts.into_iter().map(|p| Circle::new(p, 3, color.filled())))?;
    }
    if let Some(c) = summary_value(dir, "summary.txt", "c") {
        chart.draw_series(LineSeries::new([(w_lo * 0.9, c), (w_hi * 1.1, c)], BLACK.stroke_width(1)))?;
    }
    chart.configure_series_labels().background_style(WHITE).border_style(BLACK).draw()?;
    root.present()?;
    Ok(())
}

fn scan(dir: &Path, file: &str, key: &str, label: &str, target: &mut String) -> Result<()> {
    let c = need(dir, file)?;
    let v = c.col(key)?;
    let q = c.col("omega_T_quantum")?;
    let cl = c.col("omega_T_classical")?;
    let (v_lo, v_hi) = pad(range(v.iter().copied()), 0.05);
    let (_, w_hi) = range(q.iter().chain(cl).copied());
    let root: Drawing = SVGBackend::with_string(target, SIZE).into_drawing_area();
    root.fill(&WHITE)?;
    let mut chart = ChartBuilder::on(&root)
        .margin(10)
        .x_label_area_size(35)
        .y_label_area_size(60)
        .caption("thermalization threshold", ("sans-serif", 18))
        .build_cartesian_2d(v_lo..v_hi, 0.0..w_hi * 1.1)?;
    chart.configure_mesh().x_desc(label).y_desc("ω_T/Ω").draw()?;
    for (col, name, color) in [(q, "quantum", BLUE), (cl, "classical", RED)] {
        let pts: Vec<(f64, f64)> = v.iter().copied().zip(col.iter().copied()).filter(|p| p.1.is_finite()).collect();
        if pts.is_empty() {
            continue;
        }
        chart
            .draw_series(LineSeries::new(pts.clone(), color.stroke_width(2)))?
            .label(name)
            .legend(move |(x, y)| PathElement::new([(x, y), (x + 20, y)], color));
        chart.draw_series(pts.into_iter().map(|p| Circle::new(p, 4, color.filled())))?;
    }
    chart.configure_series_labels().background_style(WHITE).border_style(BLACK).draw()?;
    root.present()?;
    Ok(())
}

fn scaling(dir: &Path, target: &mut String) -> Result<()> {
    let c = need(dir, "scaling.csv")?;
    let n = c.col("N")?;
    let w = c.col("omega")?;
    let d = c.col("delta_rho")?;
    let mut curves: BTreeMap<u64, Vec<(f64, f64)>> = BTreeMap::new();
    for i in 0..c.rows() {
        curves.entry(n[i] as u64).or_default().push((w[i] * n[i], d[i]));
    }
    let (x_lo, x_hi) = range((0..c.rows()).map(|i| w[i] * n[i]));
    let (_, d_hi) = range(d.iter().copied());
    let root: Drawing = SVGBackend::with_string(target, SIZE).into_drawing_area();
    root.fill(&WHITE)?;
    let mut chart = ChartBuilder::on(&root)
        .margin(10)
        .x_label_area_size(35)
        .y_label_area_size(60)
        .caption("Δρ against ωN/Ω", ("sans-serif", 18))
        .build_cartesian_2d(0.0..x_hi * 1.05, 0.0..d_hi * 1.05)?;
    chart.configure_mesh().x_desc("ωN/Ω").y_desc("Δρ").draw()?;
    for (k, (nn, pts)) in curves.iter().enumerate() {
        let color = series_color(k);
        chart
            .draw_series(pts.iter().map(|&p| Circle::new(p, 4, color.filled())))?
            .label(format!("N = {nn}"))
            .legend(move |(x, y)| Circle::new((x + 10, y), 4, color.filled()));
    }
    let fit = (summary_value(dir, "fit.txt", "fit_a"), summary_value(dir, "fit.txt", "fit_b"));
    if let (Some(a), Some(b)) = fit {
        let lo = x_lo.min(x_hi * 0.02);
        let curve = (0..=200).map(|i| lo + (x_hi * 1.05 - lo) * f64::from(i) / 200.0).map(|x| (x, a / (x + b)));
        chart
            .draw_series(LineSeries::new(curve, BLACK.stroke_width(2)))?
            .label(format!("{a:.3}/(ωN/Ω + {b:.3})"))
            .legend(|(x, y)| PathElement::new([(x, y), (x + 20, y)], BLACK));
    }
    if let Some(cv) = summary_value(dir, "fit.txt", "c") {
        chart.draw_series(LineSeries::new([(0.0, cv), (x_hi * 1.05, cv)], RED.stroke_width(1)))?;
    }
    chart.configure_series_labels().background_style(WHITE).border_style(BLACK).draw()?;
    root.present()?;
    Ok(())
}

fn spacing(dir: &Path, target: &mut String) -> Result<()> {
    let c = need(dir, "spacing.csv")?;
    let n = c.col("N")?;
    let g = c.col("global_spacing")?;
    let l = c.col("local_spacing")?;
    let (n_lo, n_hi) = range(n.iter().copied());
    let (_, s_hi) = range(g.iter().chain(l).copied());
    let root: Drawing = SVGBackend::with_string(target, SIZE).into_drawing_area();
    root.fill(&WHITE)?;
    let mut chart = ChartBuilder::on(&root)
        .margin(10)
        .x_label_area_size(35)
        .y_label_area_size(60)
        .caption("mean level spacing", ("sans-serif", 18))
        .build_cartesian_2d(n_lo - 1.0..n_hi + 1.0, 0.0..s_hi * 1.05)?;
    chart.configure_mesh().x_desc("N").y_desc("spacing / Ω").draw()?;
    for (col, prefix, color) in [(g, "global_", BLUE), (l, "local_", RED)] {
        chart
            .draw_series(n.iter().zip(col).map(|(&x, &y)| Circle::new((x, y), 3, color.filled())))?
            .label(prefix.trim_end_matches('_'))
            .legend(move |(x, y)| Circle::new((x + 10, y), 3, color.filled()));
        let a = summary_value(dir, "fit.txt", &format!("{prefix}a"));
        let b = summary_value(dir, "fit.txt", &format!("{prefix}b"));
        if let (Some(a), Some(b)) = (a, b) {
            let curve = (0..=200).map(|i| n_lo + (n_hi - n_lo) * f64::from(i) / 200.0).map(|x| (x, a / x + b / (x * x)));
            chart.draw_series(LineSeries::new(curve, color.stroke_width(1)))?;
        }
    }
    chart.configure_series_labels().background_style(WHITE).border_style(BLACK).draw()?;
    root.present()?;
    Ok(())
}

fn poincare(dir: &Path, target: &mut String) -> Result<()> {
    let c = need(dir, "poincare.csv")?;
    let u = c.col("u")?;
    let v = c.col("v")?;
    let k = c.col("trajectory").ok();
    let root: Drawing = SVGBackend::with_string(target, SIZE).into_drawing_area();
    root.fill(&WHITE)?;
    let mut chart = ChartBuilder::on(&root)
        .margin(10)
        .x_label_area_size(35)
        .y_label_area_size(50)
        .caption("Poincaré section", ("sans-serif", 18))
        .build_cartesian_2d(-1.0..1.0, -std::f64::consts::PI..std::f64::consts::PI)?;
    chart.configure_mesh().x_desc("(n2 - n3)/(n1 + n2 + n3)").y_desc("φ2 - φ3").draw()?;
    chart.draw_series((0..c.rows()).map(|i| {
        let color = series_color(k.map_or(0, |k| k[i] as usize));
        Circle::new((u[i], v[i]), 1, color.filled())
    }))?;
    root.present()?;
    Ok(())
}

/// Renders every figure whose tables exist in `dir` into `out`; returns the
/// files written and a warning per skipped figure.
pub fn render(dir: &Path, out: &Path) -> Result<(Vec<PathBuf>, Vec<String>)> {
    std::fs::create_dir_all(out).with_context(|| format!("cannot create {}", out.display()))?;
    type Figure = Box<dyn Fn(&Path, &mut String) -> Result<()>>;
    let figures: Vec<(&str, Figure)> = vec![
        ("evolution.svg", Box::new(evolution)),
        ("distribution.svg", Box::new(distribution)),
        ("chaos_map.svg", Box::new(chaos)),
        ("threshold.svg", Box::new(threshold)),
        ("scan_eps.svg", Box::new(|d, t| scan(d, "scan_eps.csv", "eps", "ε", t))),
        ("scan_un.svg", Box::new(|d, t| scan(d, "scan_un.csv", "un", "UN/Ω", t))),
        ("scaling.svg", Box::new(scaling)),
        ("spacing.svg", Box::new(spacing)),
        ("poincare.svg", Box::new(poincare)),
    ];
    let mut written = Vec::new();
    let mut warnings = Vec::new();
    for (name, f) in figures {
        let mut svg = String::new();
        match f(dir, &mut svg) {
            Ok(()) => {
                let target = out.join(name);
                std::fs::write(&target, svg).with_context(|| format!("cannot write {}", target.display()))?;
                written.push(target);
            }
            Err(e) => warnings.push(format!("{name} skipped: {e:#}")),
        }
    }
    Ok((written, warnings))
}
