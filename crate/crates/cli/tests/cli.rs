use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use sha2::{Digest, Sha256};
use tempfile::TempDir;
use tetramer_cli::config::{load_config, parse_config};

fn tetramer(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tetramer"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn manifest(dir: &Path) -> toml::Table {
    toml::from_str(&fs::read_to_string(dir.join("manifest.toml")).unwrap()).unwrap()
}

fn checksums(dir: &Path) -> Vec<(String, String)> {
    manifest(dir)["outputs"]
        .as_array()
        .unwrap()
        .iter()
        .map(|o| (o["file"].as_str().unwrap().to_string(), o["sha256"].as_str().unwrap().to_string()))
        .collect()
}

#[test]
fn basis_table_and_manifest() {
    let tmp = TempDir::new().unwrap();
    let o = tetramer(tmp.path(), &["--set", "model.n=6", "-o", "run", "basis"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let run = tmp.path().join("run");
    let csv = fs::read_to_string(run.join("basis.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "index,n1,n2,n3,n4");
    assert_eq!(lines.len(), 1 + 7);
    for (file, sha) in checksums(&run) {
        let bytes = fs::read(run.join(&file)).unwrap();
        assert_eq!(hex::encode(Sha256::digest(&bytes)), sha, "{file}");
    }
    let m = manifest(&run);
    assert_eq!(m["status"].as_str(), Some("ok"));
    assert_eq!(m["config"]["model"]["n"].as_integer(), Some(6));
    assert!(!run.join(".manifest.toml.tmp").exists());
}

#[test]
fn reruns_are_byte_identical() {
    let tmp = TempDir::new().unwrap();
    let args = |out: &'static str| {
        vec![
            "--set", "model.n=12", "--set", "evolution.t_end=50", "--set", "evolution.samples=11",
            "--set", "classical.members=8", "-o", out,
        ]
    };
    for cmd in ["spectrum", "evolve-quantum", "evolve-classical"] {
        for out in ["a", "b"] {
            let mut a = args(out);
            a.push(cmd);
            let o = tetramer(tmp.path(), &a);
            assert!(o.status.success(), "{cmd}: {}", stderr(&o));
        }
        let (a, b) = (checksums(&tmp.path().join("a")), checksums(&tmp.path().join("b")));
        assert!(!a.is_empty());
        // only the output directory differs between the two snapshots
        let strip = |v: Vec<(String, String)>| v.into_iter().filter(|f| f.0 != "config.toml").collect::<Vec<_>>();
        assert_eq!(strip(a), strip(b), "{cmd}");
        fs::remove_dir_all(tmp.path().join("a")).unwrap();
        fs::remove_dir_all(tmp.path().join("b")).unwrap();
    }
}

#[test]
fn numbers_use_seventeen_digits() {
    let tmp = TempDir::new().unwrap();
    let o = tetramer(tmp.path(), &["--set", "model.n=8", "-o", "run", "spectrum"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = fs::read_to_string(tmp.path().join("run/spectrum.csv")).unwrap();
    let row: Vec<&str> = csv.lines().nth(1).unwrap().split(',').collect();
    let energy = row[1];
    let mantissa = energy.split('e').next().unwrap().trim_start_matches('-');
    assert_eq!(mantissa.len(), 18, "{energy}");
    assert_eq!(format!("{:.16e}", energy.parse::<f64>().unwrap()), energy);
}

#[test]
fn config_errors_exit_2_with_line_numbers() {
    let tmp = TempDir::new().unwrap();
    fs::write(tmp.path().join("bad.toml"), "[model]\nn = 20\nhopping = 2.0\n").unwrap();
    let o = tetramer(tmp.path(), &["-c", "bad.toml", "basis"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 3"), "{}", stderr(&o));

    fs::write(tmp.path().join("neg.toml"), "[model]\nun = -10.0\n").unwrap();
    let o = tetramer(tmp.path(), &["-c", "neg.toml", "basis"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("repulsive"), "{}", stderr(&o));

    let o = tetramer(tmp.path(), &["--set", "model.n=abc", "basis"]);
    assert_eq!(o.status.code(), Some(2));
    let o = tetramer(tmp.path(), &["-c", "missing.toml", "basis"]);
    assert_eq!(o.status.code(), Some(2));
    let o = tetramer(tmp.path(), &["no-such-command"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn worker_count_is_validated_and_recorded() {
    let tmp = TempDir::new().unwrap();
    let run = |w: &str| {
        Command::new(env!("CARGO_BIN_EXE_tetramer"))
            .current_dir(tmp.path())
            .env("TETRAMER_WORKERS", w)
            .args(["--set", "model.n=5", "-o", "run", "basis"])
            .output()
            .unwrap()
    };
    assert_eq!(run("0").status.code(), Some(2));
    assert_eq!(run("two").status.code(), Some(2));
    assert!(run("2").status.success());
    assert_eq!(manifest(&tmp.path().join("run"))["workers"].as_integer(), Some(2));
}

#[test]
fn failed_job_exits_1_and_is_recorded() {
    let tmp = TempDir::new().unwrap();
    // the collapse study needs at least four particle numbers
    let o = tetramer(tmp.path(), &["--set", "sweep.n=[8, 10]", "-o", "run", "scaling"]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    let m = manifest(&tmp.path().join("run"));
    assert_eq!(m["status"].as_str(), Some("partial"));
    let jobs = m["jobs"].as_array().unwrap();
    assert!(jobs.iter().any(|j| j["ok"].as_bool() == Some(false) && j["name"].as_str() == Some("scaling")));
}

#[test]
fn plot_renders_present_tables_and_skips_the_rest() {
    let tmp = TempDir::new().unwrap();
    let empty = tmp.path().join("empty");
    fs::create_dir(&empty).unwrap();
    let o = tetramer(tmp.path(), &["plot", "empty"]);
    assert!(o.status.success());
    assert!(stderr(&o).contains("no figures"));
    assert_eq!(fs::read_dir(&empty).unwrap().count(), 0);

    let o = tetramer(
        tmp.path(),
        &["--set", "model.n=10", "--set", "evolution.t_end=40", "--set", "evolution.samples=21", "-o", "run", "evolve-quantum"],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let o = tetramer(tmp.path(), &["plot", "run"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let svg = fs::read_to_string(tmp.path().join("run/evolution.svg")).unwrap();
    assert!(svg.starts_with("<svg") && svg.contains("</svg>"));
    assert!(tmp.path().join("run/distribution.svg").exists());
    assert!(!tmp.path().join("run/chaos_map.svg").exists());
}

#[test]
fn show_config_round_trips() {
    let tmp = TempDir::new().unwrap();
    let o = tetramer(tmp.path(), &["--set", "model.n=33", "show-config"]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    let c = parse_config(&text).unwrap();
    assert_eq!(c.model.n, 33);
    assert_eq!(c.to_toml(), text);
}

#[test]
fn shipped_configs_parse() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut seen = 0;
    for entry in fs::read_dir(&dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            load_config(&path, &[]).unwrap_or_else(|e| panic!("{e}"));
            seen += 1;
        }
    }
    assert!(seen >= 5);
    let c = load_config(&dir.join("fig2a.toml"), &[]).unwrap();
    assert_eq!((c.model.n, c.model.un, c.model.omega), (70, 10.0, 0.1));
    assert_eq!((c.initial.x0, c.initial.eps0), (0.6, 0.3));
}
