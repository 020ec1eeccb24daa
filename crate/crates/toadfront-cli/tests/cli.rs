use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use tempfile::TempDir;
use toadfront::model::{Field, ThetaDomain};
use toadfront_cli::error::CliError;
use toadfront_cli::output::{read_snapshot, sha256_hex, write_snapshot, Context, Manifest};
use toadfront_cli::plot::{emit_plotdata, ls_slope, Recipe};

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn toadfront(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_toadfront")).args(args).env_remove("TOADFRONT_OUT").output().expect("spawn")
}

fn run(args: &[&str]) -> i32 {
    let out = toadfront(args);
    out.status.code().expect("exit code")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// The scalar config with a shorter horizon and optional extra TOML.
fn small_config(dir: &Path, extra: &str) -> PathBuf {
    let text = fs::read_to_string(configs().join("scalar_kpp.toml"))
        .unwrap()
        .replace("t_end = 40.0", "t_end = 20.0")
        .replace("every = 1.0", "every = 0.5")
        .replace("window = [10.0, 40.0]", "window = [5.0, 20.0]");
    let path = dir.join("small.toml");
    fs::write(&path, format!("{text}\n{extra}")).unwrap();
    path
}

fn config_hash(path: &Path) -> String {
    sha256_hex(&fs::read(path).unwrap())
}

fn csv_files(dir: &Path) -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| matches!(p.extension().and_then(|e| e.to_str()), Some("csv" | "dat" | "txt")))
        .collect();
    v.sort();
    v
}

#[test]
fn minimal_scalar_run_writes_trace_fit_and_manifest() {
    let tmp = TempDir::new().unwrap();
    let cfg = small_config(tmp.path(), "");
    let out = tmp.path().join("out");
    assert_eq!(run(&["simulate", "--config", s(&cfg), "--out", s(&out)]), 0);
    for f in ["trace.csv", "fit.csv", "manifest.json", "delay_plot.dat", "log.csv"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let hash = config_hash(&cfg);
    for f in csv_files(&out) {
        let text = fs::read_to_string(&f).unwrap();
        assert!(text.contains(&format!("# config_hash: {hash}")), "{}", f.display());
    }
    let man: Manifest = serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(man.config_hash, hash);
    assert_eq!(man.status, "ok");
    assert_eq!(man.exit_code, 0);
    assert!(man.end_unix >= man.start_unix);
    assert_eq!(man.snapshots.len(), 3);
    for rec in &man.snapshots {
        assert_eq!(sha256_hex(&fs::read(out.join(&rec.file)).unwrap()), rec.sha256);
    }
    assert_eq!(man.files["fit.csv"], sha256_hex(&fs::read(out.join("fit.csv")).unwrap()));

    let trace = fs::read_to_string(out.join("trace.csv")).unwrap();
    assert!(trace.lines().any(|l| l == "t,x_m,quantity,m"));
    // 17 significant digits
    let row = trace.lines().last().unwrap();
    assert!(row.split(',').next().unwrap().contains("e1") && row.starts_with("2.0000000000000000e1"));
}

#[test]
fn identical_config_gives_identical_files() {
    let tmp = TempDir::new().unwrap();
    let cfg = small_config(tmp.path(), "");
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert_eq!(run(&["simulate", "--config", s(&cfg), "--out", s(&a)]), 0);
    assert_eq!(run(&["simulate", "--config", s(&cfg), "--out", s(&b), "--workers", "2"]), 0);
    let files = csv_files(&a);
    assert!(files.len() >= 3);
    for f in files {
        let name = f.file_name().unwrap();
        assert_eq!(fs::read(&f).unwrap(), fs::read(b.join(name)).unwrap(), "{name:?}");
    }
}

#[test]
fn resumed_run_matches_an_uninterrupted_one() {
    let tmp = TempDir::new().unwrap();
    let cfg = small_config(tmp.path(), "");
    let (full, cut) = (tmp.path().join("full"), tmp.path().join("cut"));
    assert_eq!(run(&["simulate", "--config", s(&cfg), "--out", s(&full)]), 0);
    assert_eq!(run(&["simulate", "--config", s(&cfg), "--out", s(&cut), "--stop-after", "2"]), 0);
    let man: Manifest = serde_json::from_str(&fs::read_to_string(cut.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(man.status, "interrupted");
    assert_eq!(man.snapshots.len(), 2);
    assert!(!cut.join("fit.csv").exists());

    assert_eq!(run(&["simulate", "--config", s(&cfg), "--out", s(&cut), "--resume"]), 0);
    let (a, b): (Manifest, Manifest) = (
        serde_json::from_str(&fs::read_to_string(full.join("manifest.json")).unwrap()).unwrap(),
        serde_json::from_str(&fs::read_to_string(cut.join("manifest.json")).unwrap()).unwrap(),
    );
    assert_eq!(a.snapshots, b.snapshots);
    assert_eq!(a.files, b.files);
    for f in ["trace.csv", "fit.csv", "log.csv", "delay_plot.dat"] {
        assert_eq!(fs::read(full.join(f)).unwrap(), fs::read(cut.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn resume_refuses_a_different_config() {
    let tmp = TempDir::new().unwrap();
    let cfg = small_config(tmp.path(), "");
    let out = tmp.path().join("out");
    assert_eq!(run(&["simulate", "--config", s(&cfg), "--out", s(&out), "--stop-after", "1"]), 0);
    let other = tmp.path().join("other.toml");
    fs::write(&other, fs::read_to_string(&cfg).unwrap().replace("seed = 1", "seed = 2")).unwrap();
    assert_eq!(run(&["simulate", "--config", s(&other), "--out", s(&out), "--resume"]), 1);
}

#[test]
fn config_errors_exit_with_one() {
    let tmp = TempDir::new().unwrap();
    let bad = tmp.path().join("bad.toml");
    fs::write(&bad, "name = \"x\"\nunknown_key = 3\n").unwrap();
    assert_eq!(run(&["simulate", "--config", s(&bad), "--out", s(tmp.path())]), 1);
    assert_eq!(run(&["simulate", "--config", s(&tmp.path().join("missing.toml"))]), 1);
    assert_eq!(run(&["simulate"]), 1);
    assert_eq!(run(&["no-such-command"]), 1);
    // a section the subcommand needs is absent
    let cfg = small_config(tmp.path(), "");
    assert_eq!(run(&["asym", "--config", s(&cfg), "--out", s(&tmp.path().join("o"))]), 1);
    assert_eq!(run(&["--help"]), 0);
}

#[test]
fn failed_assertions_exit_with_two() {
    let tmp = TempDir::new().unwrap();
    let text = fs::read_to_string(small_config(tmp.path(), "")).unwrap();
    let cfg = tmp.path().join("band.toml");
    fs::write(&cfg, text.replace("window = [5.0, 20.0]", "window = [5.0, 20.0]\nexpect = [10.0, 11.0]")).unwrap();
    let out = tmp.path().join("out");
    assert_eq!(run(&["simulate", "--config", s(&cfg), "--out", s(&out)]), 2);
    let man: Manifest = serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(man.status, "assertion_failed");
    assert_eq!(man.exit_code, 2);
    assert!(!man.assertions[0].pass);
    assert!(out.join("fit.csv").exists());

    let strict = tmp.path().join("strict");
    assert_eq!(run(&["simulate", "--config", s(&cfg), "--out", s(&strict), "--strict"]), 2);
    let man: Manifest = serde_json::from_str(&fs::read_to_string(strict.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(man.status, "failed");
}

#[test]
fn corrupted_snapshots_exit_with_three() {
    let tmp = TempDir::new().unwrap();
    let cfg = small_config(tmp.path(), "[[analysis]]\nkind = \"tail\"\n");
    let out = tmp.path().join("out");
    assert_eq!(run(&["simulate", "--config", s(&cfg), "--out", s(&out)]), 0);
    assert!(out.join("tail.csv").exists());
    let snap = fs::read_dir(out.join("snapshots")).unwrap().map(|e| e.unwrap().path()).max().unwrap();
    let mut bytes = fs::read(&snap).unwrap();
    let n = bytes.len();
    bytes[n - 1] ^= 1;
    fs::write(&snap, bytes).unwrap();
    assert_eq!(run(&["front", "--config", s(&cfg), "--out", s(&out)]), 3);
}

#[test]
fn output_directory_falls_back_to_the_environment() {
    let tmp = TempDir::new().unwrap();
    let cfg = small_config(tmp.path(), "");
    let status = Command::new(env!("CARGO_BIN_EXE_toadfront"))
        .args(["simulate", "--config", s(&cfg)])
        .env("TOADFRONT_OUT", tmp.path().join("root"))
        .status()
        .unwrap();
    assert!(status.success());
    assert!(tmp.path().join("root/scalar_kpp/trace.csv").exists());
}

#[test]
fn snapshot_dump_round_trip() {
    let tmp = TempDir::new().unwrap();
    let domain = ThetaDomain::new(1.0, 2.0, 5).unwrap();
    let mut f = Field::from_fn(37, 0.1, -1.3, domain, |x, th| (x * th).sin() + 1e-300);
    f.t = 12.5;
    f.step = 1000;
    let path = tmp.path().join("f.bin");
    write_snapshot(&path, &f, "local_toads", "abc").unwrap();
    let (g, tag, hash) = read_snapshot(&path).unwrap();
    assert_eq!((tag.as_str(), hash.as_str()), ("local_toads", "abc"));
    assert_eq!(g.values, f.values);
    assert_eq!((g.t, g.step, g.x_offset, g.dx, g.n_x), (f.t, f.step, f.x_offset, f.dx, f.n_x));
    assert_eq!(g.domain, f.domain);

    let mut bytes = fs::read(&path).unwrap();
    bytes.truncate(bytes.len() - 3);
    fs::write(&path, bytes).unwrap();
    assert!(read_snapshot(&path).is_err());
}

#[test]
fn plot_data_needs_its_columns() {
    let tmp = TempDir::new().unwrap();
    let ctx = Context { out_dir: tmp.path().to_path_buf(), name: "t".into(), hash: "h".into(), seed: 0 };
    ctx.write_csv("trace.csv", &[], &["t", "position"], &[vec!["1".into(), "2".into()]]).unwrap();
    ctx.write_csv("fit.csv", &[], &["quantity", "value"], &[vec!["c_hat".into(), "2".into()]]).unwrap();
    match emit_plotdata(&ctx, Recipe::Delay) {
        Err(CliError::MissingColumn { column, .. }) => assert_eq!(column, "x_m"),
        other => panic!("{other:?}"),
    }
    ctx.write_csv("trace.csv", &[], &["t", "x_m"], &[vec!["1".into(), "2".into()]]).unwrap();
    assert!(matches!(emit_plotdata(&ctx, Recipe::Delay), Err(CliError::MissingColumn { .. })));
    assert_eq!(CliError::MissingColumn { file: "f".into(), column: "c".into() }.exit_code(), 1);
}

#[test]
fn delay_plot_columns() {
    let tmp = TempDir::new().unwrap();
    let ctx = Context { out_dir: tmp.path().to_path_buf(), name: "t".into(), hash: "h".into(), seed: 0 };
    let (c, r, x0) = (2.0, 1.5, -0.7);
    let rows: Vec<Vec<String>> = (1..=5)
        .map(|k| {
            let t = k as f64 * 10.0;
            vec![t.to_string(), (c * t - r * t.ln() + x0).to_string(), "rho".into(), "0.5".into()]
        })
        .collect();
    ctx.write_csv("trace.csv", &[], &["t", "x_m", "quantity", "m"], &rows).unwrap();
    let fit = [("c_hat", c), ("r_hat", r), ("x_hat", x0)].map(|(k, v)| vec![k.to_string(), v.to_string()]);
    ctx.write_csv("fit.csv", &[], &["quantity", "value"], &fit).unwrap();
    emit_plotdata(&ctx, Recipe::Delay).unwrap();
    let text = fs::read_to_string(tmp.path().join("delay_plot.dat")).unwrap();
    let data: Vec<Vec<f64>> =
        text.lines().filter(|l| !l.starts_with('#')).map(|l| l.split(' ').map(|v| v.parse().unwrap()).collect()).collect();
    assert_eq!(data.len(), 5);
    for row in data {
        assert!((row[1] - row[2]).abs() < 1e-12);
    }
}

#[test]
fn least_squares_slope_of_a_line() {
    let x = [0.0, 1.0, 2.0, 5.0];
    let y: Vec<f64> = x.iter().map(|x| 3.0 - 2.5 * x).collect();
    assert!((ls_slope(&x, &y) + 2.5).abs() < 1e-14);
}

#[test]
fn dispersion_probe_asym_and_report() {
    let tmp = TempDir::new().unwrap();
    let cfg = tmp.path().join("mix.toml");
    fs::write(
        &cfg,
        r#"
name = "mix"
seed = 7

[profile]
theta = [1.0, 2.0]
n_theta = 8
d = "theta"

[dispersion]
lambda_min = 0.3
lambda_max = 2.0
n_lambda = 40

[probe.nash]
cases = [[1, 1]]
trials = 200

[asymptotics]
taus = [100.0, 200.0, 400.0]
dy = 0.05

[criticality]
r_over_lambda = [0.0]
t_big = [5.0]
t_end = 25.0
length = 40.0
dx = 0.2
dt = 0.1
"#,
    )
    .unwrap();
    let out = tmp.path().join("out");
    let c = s(&cfg);
    let o = s(&out);
    assert_eq!(run(&["dispersion", "--config", c, "--out", o]), 0);
    assert_eq!(run(&["probe", "nash", "--config", c, "--out", o]), 0);
    assert_eq!(run(&["asym", "--config", c, "--out", o]), 0);
    assert_eq!(run(&["criticality", "--config", c, "--out", o]), 0);
    assert_eq!(run(&["report", "--config", c, "--out", o]), 0);
    assert_eq!(run(&["probe", "harnack", "--config", c, "--out", o]), 1);
    for f in [
        "dispersion.csv",
        "spectral.csv",
        "dispersion_summary.csv",
        "c_lambda.dat",
        "probe_nash.csv",
        "probe_nash_witness.txt",
        "residual.csv",
        "residual.dat",
        "expansion_theta.csv",
        "expansion_z.csv",
        "criticality.csv",
        "report.txt",
        "manifest_dispersion.json",
        "manifest_asym.json",
        "manifest_report.json",
    ] {
        assert!(out.join(f).exists(), "{f}");
    }
    let residual = fs::read_to_string(out.join("residual.dat")).unwrap();
    assert!(residual.contains("# ls_slope full:"));
    let report = fs::read_to_string(out.join("report.txt")).unwrap();
    assert!(report.contains("asym: ok"));
    let nash = fs::read_to_string(out.join("probe_nash.csv")).unwrap();
    assert!(nash.lines().any(|l| l.starts_with("nash,1,1,200,7,")));
}
