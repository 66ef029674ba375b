use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use mott::config::{BetaGrid, ExperimentConfig, ExperimentKind};
use mott::env::{palm_poisson, MarkedConfiguration, PalmSource};
use mott::experiments::{run_palm_check_with, Outcome};
use mott::geometry::BoxGeometry;
use mott::rng::SimRng;

fn mott(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mott")).args(args).output().expect("binary runs")
}

fn write_config(dir: &Path, cfg: &ExperimentConfig) -> String {
    let path = dir.join("config.toml");
    fs::write(&path, cfg.to_toml().unwrap()).unwrap();
    path.to_string_lossy().into_owned()
}

fn csv_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    out.sort();
    out
}

fn small_palm_check() -> ExperimentConfig {
    let mut c = ExperimentConfig::new(ExperimentKind::PalmCheck);
    c.sizes.l = 10.0;
    c.sizes.replicas = 400;
    c
}

#[test]
fn identical_seeds_give_identical_tables_across_worker_counts() {
    let tmp = tempfile::tempdir().unwrap();
    let mut dc = ExperimentConfig::new(ExperimentKind::DominationCheck);
    dc.sizes.replicas = 50;
    for (name, cfg) in [("palm", small_palm_check()), ("dom", dc)] {
        let conf_dir = tmp.path().join(name);
        fs::create_dir_all(&conf_dir).unwrap();
        let conf = write_config(&conf_dir, &cfg);
        let mut runs = Vec::new();
        for (i, workers) in ["1", "1", "3"].iter().enumerate() {
            let out = conf_dir.join(format!("run{i}"));
            let o = mott(&[
                cfg.experiment.name(),
                "--config",
                &conf,
                "--seed",
                "11",
                "--workers",
                workers,
                "--out",
                out.to_str().unwrap(),
            ]);
            // a statistical rejection still writes its tables
            assert!(matches!(o.status.code(), Some(0 | 1)), "{}", String::from_utf8_lossy(&o.stderr));
            runs.push(csv_files(&out));
        }
        assert!(!runs[0].is_empty());
        assert_eq!(runs[0], runs[1], "{name}: rerun differs");
        assert_eq!(runs[0], runs[2], "{name}: worker count changes output");
    }
}

#[test]
fn csv_headers_carry_schema_seed_and_parameters() {
    let tmp = tempfile::tempdir().unwrap();
    let conf = write_config(tmp.path(), &small_palm_check());
    let out = tmp.path().join("out");
    let o = mott(&["palm-check", "--config", &conf, "--seed", "4", "--out", out.to_str().unwrap()]);
    assert!(o.status.success());
    let text = fs::read_to_string(out.join("palm_check.csv")).unwrap();
    let first = text.lines().next().unwrap();
    assert!(first.starts_with("# schema=1 seed=4 params={"), "{first}");
    let json = first.split_once("params=").unwrap().1;
    let echoed: ExperimentConfig = serde_json::from_str(json).unwrap();
    assert_eq!(echoed.seed, 4);
    assert_eq!(echoed.sizes.replicas, 400);
    assert!(text.lines().nth(1).unwrap().starts_with("process,statistic,"));
}

#[test]
fn single_beta_scan_reports_no_fit() {
    let tmp = tempfile::tempdir().unwrap();
    let mut c = ExperimentConfig::new(ExperimentKind::MottScan);
    c.model.beta = BetaGrid::List(vec![15.0]);
    c.model.r_cut = 15.0;
    c.sizes.l = 40.0;
    c.sizes.replicas = 8;
    c.sizes.pilot_walkers = 20;
    c.sizes.msd_target = 50.0;
    let conf = write_config(tmp.path(), &c);
    let out = tmp.path().join("out");
    let o = mott(&["mott-scan", "--config", &conf, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert!(summary["results"]["exponent"]["fit"].is_null());
    let rows = fs::read_to_string(out.join("mott_scan.csv")).unwrap();
    assert_eq!(rows.lines().filter(|l| l.starts_with("15,")).count(), 2);
}

#[test]
fn bad_config_exits_with_line_number() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("bad.toml");
    fs::write(&path, "experiment = \"perc-rc\"\n\n[model]\nd = 2\nalpha = -3.0\n").unwrap();
    let o = mott(&["perc-rc", "--config", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("line 5"), "{err}");

    fs::write(&path, "experiment = \"perc-rc\"\n[sizes]\nbogus = 1\n").unwrap();
    let o = mott(&["perc-rc", "--config", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn print_config_round_trips() {
    for kind in ExperimentKind::ALL {
        let o = mott(&[kind.name(), "--print-config", "--seed", "9"]);
        assert!(o.status.success());
        let c = ExperimentConfig::parse(&String::from_utf8(o.stdout).unwrap()).unwrap();
        assert_eq!(c.experiment, kind);
        assert_eq!(c.seed, 9);
    }
}

#[test]
fn domination_with_zero_thinning_is_trivial() {
    let tmp = tempfile::tempdir().unwrap();
    let mut c = ExperimentConfig::new(ExperimentKind::DominationCheck);
    c.sizes.replicas = 30;
    c.domination.p = 0.0;
    let conf = write_config(tmp.path(), &c);
    let out = tmp.path().join("out");
    let o = mott(&["domination-check", "--config", &conf, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["results"]["replicas_holding"], 30);
}

#[test]
fn domination_on_poisson_is_a_config_error() {
    let mut c = ExperimentConfig::new(ExperimentKind::DominationCheck);
    c.process.kind = mott::config::ProcessKind::Poisson;
    let tmp = tempfile::tempdir().unwrap();
    let conf = write_config(tmp.path(), &c);
    let o = mott(&["domination-check", "--config", &conf, "--out", tmp.path().join("o").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
}

/// Palm sampler of a denser process: every local statistic is shifted.
struct DensePalm {
    geometry: BoxGeometry,
    nu: mott::env::NuLaw,
}

impl PalmSource for DensePalm {
    fn geometry(&self) -> &BoxGeometry {
        &self.geometry
    }

    fn sample_palm(&self, rng: &mut SimRng) -> mott::Result<MarkedConfiguration> {
        palm_poisson(1.3, &self.geometry, &self.nu, rng)
    }
}

#[test]
fn wrong_palm_sampler_is_rejected() {
    let mut c = small_palm_check();
    c.sizes.replicas = 2000;
    let faulty = DensePalm { geometry: c.geometry().unwrap(), nu: c.nu().unwrap() };
    let run = run_palm_check_with(&c, Some(&faulty)).unwrap();
    match &run.outcome {
        Outcome::Rejected(why) => assert!(why.iter().any(|w| w.starts_with("poisson")), "{why:?}"),
        other => panic!("faulty sampler not rejected: {other:?}"),
    }
    assert_eq!(run.outcome.exit_code(), 1);
}
