use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use nngp::kernel::{kernel_value, KernelSpec};

fn nngp(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nngp")).args(args).current_dir(dir).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn value(out: &str, key: &str) -> f64 {
    out.lines()
        .find_map(|l| l.strip_prefix(&format!("{key} = ")))
        .unwrap_or_else(|| panic!("no {key} in {out}"))
        .split_whitespace()
        .next()
        .unwrap()
        .parse()
        .unwrap()
}

const RELU2: &str = "depth = 2\nd_in = 2\nactivation = relu\npi.var_b = 0.1\nlayer2.var_w = 2\nlayer2.var_b = 0.1\n";

#[test]
fn kernel_single_point_matches_library() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "s.cfg", RELU2);
    write(dir.path(), "p.csv", "x0,x1\n0.3,-1.2\n");
    let o = nngp(&["kernel", "--spec", "s.cfg", "--points", "p.csv", "--out", "k.csv"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = fs::read_to_string(dir.path().join("k.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("h,k0"));
    let row: Vec<f64> = lines.next().unwrap().split(',').map(|v| v.parse().unwrap()).collect();
    let spec = KernelSpec::from_config_str(RELU2).unwrap();
    let (h, _, k) = kernel_value(&spec, &[0.3, -1.2], &[0.3, -1.2]).unwrap();
    assert_eq!(row, vec![h, k]);
}

#[test]
fn kernel_reports_psd_spectrum() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "s.cfg", RELU2);
    write(dir.path(), "p.csv", "x0,x1\n0.1,0.2\n-1,0.5\n2,2\n0.3,-0.7\n1.5,-1\n0,1\n");
    let o = nngp(&["kernel", "--spec", "s.cfg", "--points", "p.csv", "--out", "k.csv"], dir.path());
    assert!(o.status.success());
    assert!(value(&stdout(&o), "min_eigenvalue") >= -1e-8);
}

#[test]
fn parse_errors_exit_2_with_location() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "s.cfg", RELU2);
    write(dir.path(), "bad.csv", "x0,x1\n1,2\n3,oops\n");
    let o = nngp(&["kernel", "--spec", "s.cfg", "--points", "bad.csv", "--out", "k.csv"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 3"), "{}", stderr(&o));
    assert!(!dir.path().join("k.csv").exists());

    write(dir.path(), "typo.cfg", &format!("{RELU2}layer2.var_q = 1\n"));
    write(dir.path(), "p.csv", "x0,x1\n1,2\n");
    let o = nngp(&["kernel", "--spec", "typo.cfg", "--points", "p.csv", "--out", "k.csv"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("layer2.var_q"));

    let o = nngp(&["kernel", "--spec", "missing.cfg", "--points", "p.csv", "--out", "k.csv"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    let o = nngp(&["kernel", "--bogus"], dir.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn fit_predict_interpolates_and_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "s.cfg", RELU2);
    let train = "x0,x1,y\n0.1,0.2,0.5\n-1,0.5,-0.2\n2,2,1.1\n0.3,-0.7,0.05\n";
    write(dir.path(), "t.csv", train);
    write(dir.path(), "p.csv", "x0,x1\n0.1,0.2\n-1,0.5\n2,2\n0.3,-0.7\n");
    let o = nngp(&["fit", "--spec", "s.cfg", "--train", "t.csv", "--noise", "0", "--out-model", "m.txt"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(value(&stdout(&o), "lml").is_finite());

    let run = |out: &str| {
        let o = nngp(&["predict", "--model", "m.txt", "--points", "p.csv", "--out", out], dir.path());
        assert!(o.status.success(), "{}", stderr(&o));
        fs::read(dir.path().join(out)).unwrap()
    };
    let (a, b) = (run("y1.csv"), run("y2.csv"));
    assert_eq!(a, b);
    let text = String::from_utf8(a).unwrap();
    let ys = [0.5, -0.2, 1.1, 0.05];
    for (line, y) in text.lines().skip(1).zip(ys) {
        let f: Vec<f64> = line.split(',').map(|v| v.parse().unwrap()).collect();
        assert!((f[2] - y).abs() < 1e-8);
        assert!(f[3] <= 1e-8);
    }
    assert_eq!(fs::read_to_string(dir.path().join("t.csv")).unwrap(), train);
}

#[test]
fn tampered_model_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "s.cfg", RELU2);
    write(dir.path(), "t.csv", "x0,x1,y\n0.1,0.2,0.5\n-1,0.5,-0.2\n2,2,1.1\n");
    write(dir.path(), "p.csv", "x0,x1\n0,0\n");
    let o = nngp(&["fit", "--spec", "s.cfg", "--train", "t.csv", "--noise", "0.01", "--out-model", "m.txt"], dir.path());
    assert!(o.status.success());
    let model = fs::read_to_string(dir.path().join("m.txt")).unwrap();
    let (head, beta) = model.split_once("[beta]\n").unwrap();
    let mut lines: Vec<String> = beta.lines().map(str::to_string).collect();
    let v: f64 = lines[0].parse().unwrap();
    lines[0] = format!("{:e}", v * 1.01 + 0.01);
    write(dir.path(), "bad.txt", &format!("{head}[beta]\n{}\n", lines.join("\n")));
    let o = nngp(&["predict", "--model", "bad.txt", "--points", "p.csv", "--out", "y.csv"], dir.path());
    assert_eq!(o.status.code(), Some(4), "{}", stderr(&o));
}

#[test]
fn optimize_never_lowers_the_likelihood() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "s.cfg", "depth = 1\nd_in = 1\nactivation = relu\n");
    let mut train = String::from("x0,y\n");
    for i in 0..12 {
        let x = -2.0 + 4.0 * i as f64 / 11.0;
        train.push_str(&format!("{x},{}\n", x.max(0.0) + 0.1 * ((i * 7 % 5) as f64 - 2.0)));
    }
    write(dir.path(), "t.csv", &train);
    let args = [
        "fit", "--spec", "s.cfg", "--train", "t.csv", "--noise", "0.5", "--optimize", "--max-evals", "60",
        "--seed", "3", "--out-model", "m.txt",
    ];
    let o = nngp(&args, dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(value(&out, "lml") >= value(&out, "initial_lml"));
    let trace = fs::read(dir.path().join("m.txt.trace.csv")).unwrap();
    let model = fs::read(dir.path().join("m.txt")).unwrap();
    let o2 = nngp(&args, dir.path());
    assert_eq!(stdout(&o2), out);
    assert_eq!(fs::read(dir.path().join("m.txt.trace.csv")).unwrap(), trace);
    assert_eq!(fs::read(dir.path().join("m.txt")).unwrap(), model);
}

#[test]
fn verify_width_identity_passes_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "s.cfg", "depth = 1\nd_in = 2\nactivation = identity\n");
    write(dir.path(), "p.csv", "x0,x1\n1,0\n0.6,0.8\n-0.5,1\n");
    let args = |out: &'static str, widths: &'static str| {
        ["verify-width", "--spec", "s.cfg", "--widths", widths, "--ensembles", "1000", "--probes", "p.csv", "--seed", "7", "--out", out]
    };
    let o = nngp(&args("r1.csv", "8,64"), dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert!(stdout(&o).ends_with("PASS\n"));
    nngp(&args("r2.csv", "8,64"), dir.path());
    assert_eq!(fs::read(dir.path().join("r1.csv")).unwrap(), fs::read(dir.path().join("r2.csv")).unwrap());

    let o = nngp(&args("r3.csv", "16"), dir.path());
    assert!(stdout(&o).contains("skip ordering"));
    let csv = fs::read_to_string(dir.path().join("r3.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("width,i,j,emp_cov,kernel,stderr,zscore"));
}

#[test]
fn barron_passes_and_handles_point_mass() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "b.cfg", "d_in = 1\nactivation = relu\na.const = 1\nhpi_samples = 1000\noracle_samples = 100000\n");
    write(dir.path(), "x.csv", "x0\n0.5\n");
    let args = |out: &'static str| ["barron", "--spec", "b.cfg", "--x", "x.csv", "--n-list", "256,512", "--reps", "2000", "--seed", "42", "--out", out];
    let o = nngp(&args("r1.csv"), dir.path());
    assert_eq!(o.status.code(), Some(0), "{}{}", stdout(&o), stderr(&o));
    assert!(value(&stdout(&o), "hpi_norm_sq") == 1.0);
    nngp(&args("r2.csv"), dir.path());
    assert_eq!(fs::read(dir.path().join("r1.csv")).unwrap(), fs::read(dir.path().join("r2.csv")).unwrap());

    write(dir.path(), "pm.cfg", "d_in = 1\nactivation = relu\npi.kind = empirical\npi.atom0 = 1, 0.5, -0.5\n");
    let o = nngp(&["barron", "--spec", "pm.cfg", "--x", "x.csv", "--n-list", "4,8", "--reps", "20", "--out", "pm.csv"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("ratio check skipped"));
}

#[test]
fn expect_prints_values() {
    let dir = tempfile::tempdir().unwrap();
    let o = nngp(&["expect", "--kind", "relu", "--moments", "0,0,1,1,0", "--method", "quad:64"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    assert!((value(&stdout(&o), "value") - 1.0 / (2.0 * std::f64::consts::PI)).abs() < 1e-10);
    let o = nngp(&["expect", "--kind", "erf", "--moments", "-0.5,2", "--method", "quad:32"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let o = nngp(&["expect", "--kind", "erf", "--moments", "-0.5,2"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("no closed form"));
    let o = nngp(&["expect", "--kind", "tanh", "--moments", "0,1", "--method", "mc:1000:1"], dir.path());
    assert!(value(&stdout(&o), "stderr") > 0.0);
    let o = nngp(&["expect", "--kind", "relu", "--moments", "0,0,1,1,2"], dir.path());
    assert_eq!(o.status.code(), Some(2));
}
