use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

const BIN: &str = env!("CARGO_BIN_EXE_hollingtanner");

struct Run {
    dir: TempDir,
}

impl Run {
    fn new() -> Self {
        Run {
            dir: tempfile::tempdir().unwrap(),
        }
    }

    fn config(&self, name: &str, text: &str) -> PathBuf {
        let p = self.dir.path().join(name);
        fs::write(&p, text).unwrap();
        p
    }

    fn out(&self) -> PathBuf {
        self.dir.path().join("out")
    }

    fn cmd(&self, sub: &str, config: &Path, extra: &[&str]) -> Output {
        Command::new(BIN)
            .arg(sub)
            .arg("--config")
            .arg(config)
            .arg("--out")
            .arg(self.out())
            .args(extra)
            .output()
            .unwrap()
    }

    fn json(&self, name: &str) -> Value {
        serde_json::from_str(&fs::read_to_string(self.out().join(name)).unwrap()).unwrap()
    }

    fn text(&self, name: &str) -> String {
        fs::read_to_string(self.out().join(name)).unwrap()
    }
}

fn ok(o: &Output) {
    assert!(
        o.status.success(),
        "exit {:?}\nstdout {}\nstderr {}",
        o.status.code(),
        String::from_utf8_lossy(&o.stdout),
        String::from_utf8_lossy(&o.stderr)
    );
}

fn num(v: &Value) -> f64 {
    v.as_f64().unwrap_or_else(|| panic!("not a number: {v}"))
}

fn csv_rows(text: &str) -> Vec<Vec<String>> {
    text.lines().skip(1).map(|l| l.split(',').map(str::to_string).collect()).collect()
}

const HOMOGENEOUS_R1: &str = "[model]\nb = 0.5\nr = 1\n[grid]\ncounts = 21\n";

const HETEROGENEOUS: &str = "\
[model]
b = 0.05
[a]
kind = cosine
base = 1.05
amplitude = 0.05
modes = 1
[grid]
counts = 21
[stepper]
t_end = 60
record_every = 200
[init]
kind = random
seed = 11
";

#[test]
fn bounds_homogeneous_saturated() {
    let r = Run::new();
    let c = r.config("h.ini", HOMOGENEOUS_R1);
    ok(&r.cmd("bounds", &c, &[]));
    let j = r.json("run_bounds.json");
    for key in ["u_lo", "u_hi", "v_lo", "v_hi"] {
        assert!((num(&j["quadruple"][key]) - 0.7807764064044151).abs() < 1e-10);
    }
    assert!(num(&j["monotone"]["distance"]) < 1e-8);
    assert_eq!(j["method"], "bisection");
}

#[test]
fn bounds_closed_form_case() {
    let r = Run::new();
    let c = r.config(
        "c.ini",
        "[model]\nb = 0.5\n[a]\nkind = cosine\nbase = 1.25\namplitude = 0.25\nmodes = 1\n[grid]\ncounts = 11\n",
    );
    let o = r.cmd("bounds", &c, &[]);
    ok(&o);
    let j = r.json("run_bounds.json");
    assert!((num(&j["quadruple"]["u_lo"]) - 1.0 / 3.0).abs() < 1e-14);
    assert!((num(&j["quadruple"]["u_hi"]) - 4.0 / 3.0).abs() < 1e-14);
    assert!(num(&j["closed_form_gap"]) < 1e-12);
    assert!(String::from_utf8_lossy(&o.stdout).contains("closed form vs bisection"));
}

#[test]
fn bounds_rejects_b_condition() {
    let r = Run::new();
    let c = r.config(
        "bad.ini",
        "[model]\nb = 0.9\n[a]\nkind = cosine\nbase = 1.25\namplitude = 0.25\nmodes = 1\n[grid]\ncounts = 11\n",
    );
    let o = r.cmd("bounds", &c, &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("condition_2_2"));
    assert_eq!(r.cmd("check", &c, &[]).status.code(), Some(2));
}

#[test]
fn check_verdicts() {
    let r = Run::new();
    let c = r.config(
        "ok.ini",
        "[model]\nb = 0.05\n[a]\nkind = cosine\nbase = 1.05\namplitude = 0.05\nmodes = 1\n[grid]\ncounts = 11\n",
    );
    ok(&r.cmd("check", &c, &[]));
    let j = r.json("run_check.json");
    assert_eq!(j["condition_2_2"], true);
    assert_eq!(j["condition_4_6"], true);
    assert!((num(&j["margins"]["condition_4_6"]) - 0.7184334714209162).abs() < 1e-9);

    let h = r.config("hom.ini", "[model]\nb = 0.3\n[grid]\ncounts = 11\n");
    ok(&r.cmd("check", &h, &[]));
    let j = r.json("run_check.json");
    assert!((num(&j["margins"]["condition_4_6"]) - 0.7).abs() < 1e-14);
    assert_eq!(j["condition_4_66"], true);

    let m = r.config("m.ini", "[model]\nb = 0.5\n[grid]\ncounts = 11\n[check]\nm = 1.1\n");
    ok(&r.cmd("check", &m, &[]));
    let j = r.json("run_check.json");
    assert!((num(&j["rhs"]["condition_4_66"]) - 0.7879856109467705).abs() < 1e-14);
}

#[test]
fn check_prints_full_precision_json() {
    let r = Run::new();
    let c = r.config("hom.ini", "[model]\nb = 0.3\n[grid]\ncounts = 11\n");
    let o = r.cmd("check", &c, &[]);
    ok(&o);
    let stdout = String::from_utf8_lossy(&o.stdout);
    let parsed: Value = serde_json::from_str(&stdout).unwrap();
    assert_eq!(parsed, r.json("run_check.json"));
    assert!(stdout.contains("6.9999999999999996e-1") || stdout.contains("7.0000000000000000e-1"), "{stdout}");
}

#[test]
fn simulate_homogeneous_converges() {
    let r = Run::new();
    let c = r.config(
        "s.ini",
        "[model]\nb = 0.5\nr = 1\n[grid]\ncounts = 11\n[init]\nkind = cosine\nu_base = 0.7\nu_amplitude = 0.2\nv_base = 0.9\n[stepper]\nt_end = 80\nrecord_every = 1000\n",
    );
    ok(&r.cmd("simulate", &c, &[]));
    let s = 0.7807764064044151;
    for name in ["run_final_u.csv", "run_final_v.csv"] {
        for x in r.text(name).trim().split(',') {
            assert!((x.parse::<f64>().unwrap() - s).abs() < 1e-6);
        }
    }
    let trace = r.text("run_trace.csv");
    assert!(trace.starts_with("t,u_min,u_max,v_min,v_max,rhs_sup\n"));
    let j = r.json("run_simulate.json");
    assert!(j["box_entry_time"].is_number());
}

#[test]
fn simulate_predator_free_and_snapshots() {
    let r = Run::new();
    let c = r.config(
        "z.ini",
        "[model]\nb = 0.5\n[grid]\ncounts = 11\n[init]\nkind = constant\nu = 0.4\nv = 0\n[stepper]\nt_end = 1\nrecord_every = 50\nsnapshots = true\n[output]\nprefix = zero\n",
    );
    ok(&r.cmd("simulate", &c, &[]));
    for row in csv_rows(&r.text("zero_trace.csv")) {
        assert_eq!(row[3].parse::<f64>().unwrap(), 0.0);
        assert_eq!(row[4].parse::<f64>().unwrap(), 0.0);
    }
    assert!(r.out().join("zero_u_0.csv").exists());
    assert!(r.out().join("zero_v_0.csv").exists());
    let records = csv_rows(&r.text("zero_trace.csv")).len();
    assert!(r.out().join(format!("zero_u_{}.csv", records - 1)).exists());
}

#[test]
fn simulate_cfl_override_rejected() {
    let r = Run::new();
    let c = r.config("cfl.ini", "[model]\nb = 0.5\n[grid]\ncounts = 41\n[stepper]\ndt = 0.01\n");
    let o = r.cmd("simulate", &c, &[]);
    assert_eq!(o.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&o.stderr).contains("CFL"));
}

#[test]
fn simulate_is_deterministic() {
    let r = Run::new();
    let c = r.config("d.ini", HETEROGENEOUS);
    ok(&r.cmd("simulate", &c, &[]));
    let first = r.text("run_trace.csv");
    ok(&r.cmd("simulate", &c, &[]));
    assert_eq!(first, r.text("run_trace.csv"));
}

#[test]
fn steady_homogeneous_and_heterogeneous() {
    let r = Run::new();
    let h = r.config("h.ini", "[model]\nb = 0.5\nr = 1\n[grid]\ncounts = 11\n[solver]\ntol = 1e-12\n");
    ok(&r.cmd("steady", &h, &[]));
    for x in r.text("run_steady_u.csv").trim().split(',') {
        assert!((x.parse::<f64>().unwrap() - 0.7807764064044151).abs() < 1e-12);
    }

    let c = r.config("het.ini", HETEROGENEOUS);
    ok(&r.cmd("steady", &c, &[]));
    let j = r.json("run_steady.json");
    assert_eq!(j["status"], "converged");
    assert_eq!(j["containment"]["holds"], true);
    assert!(num(&j["u_star"]["max"]) - num(&j["u_star"]["min"]) > 1e-3);
    assert_eq!(j["grid"]["counts"][0], 21);
}

#[test]
fn steady_not_converged_reports_status() {
    let r = Run::new();
    let c = r.config(
        "n.ini",
        "[model]\nb = 0.5\n[grid]\ncounts = 11\n[init]\nkind = constant\nu = 0.2\nv = 1.5\n[solver]\nmethod = relaxation\nt_max = 0.1\n",
    );
    let o = r.cmd("steady", &c, &[]);
    assert_eq!(o.status.code(), Some(3));
    let j = r.json("run_steady.json");
    assert_eq!(j["status"], "not-converged");
    assert!(num(&j["residual"]) > 0.0);
}

#[test]
fn lyapunov_monitor() {
    let r = Run::new();
    let c = r.config("l.ini", HETEROGENEOUS);
    ok(&r.cmd("lyapunov", &c, &[]));
    let j = r.json("run_lyapunov.json");
    assert_eq!(j["nonincreasing_after_entry"], true);
    assert!(num(&j["min_margin_after_entry"]) > 0.0);
    let csv = r.text("run_monitor.csv");
    assert!(csv.starts_with("t,G,dG,min_margin,min_margin_node\n"));
    let entry = num(&j["box_entry_time"]);
    let rows = csv_rows(&csv);
    let mut prev: Option<f64> = None;
    for row in &rows {
        let (t, g) = (row[0].parse::<f64>().unwrap(), row[1].parse::<f64>().unwrap());
        if let Some(p) = prev {
            assert!(g <= p + 1e-10, "G increased at t = {t}");
        }
        if t >= entry {
            prev = Some(g);
        }
    }

    let f = r.config("f.ini", &format!("{HETEROGENEOUS}[lyapunov]\nreference = final\n"));
    ok(&r.cmd("lyapunov", &f, &[]));
    assert!(num(&r.json("run_lyapunov.json")["final_g"]).abs() < 1e-20);

    let eta = num(&j["eta_default"]);
    let d = r.config("e.ini", &format!("{HETEROGENEOUS}[lyapunov]\neta = {:e}\n", 2.0 * eta));
    ok(&r.cmd("lyapunov", &d, &[]));
    let k = r.json("run_lyapunov.json");
    assert!((num(&k["eta"]) - 2.0 * eta).abs() < 1e-15);
    assert!(k["min_margin_after_entry"].is_number());
}

#[test]
fn scan_b_crossover_and_order() {
    let r = Run::new();
    let c = r.config(
        "s.ini",
        "[model]\nb = 0.1\n[a]\nkind = cosine\nbase = 1.05\namplitude = 0.05\nmodes = 1\n[grid]\ncounts = 11\n",
    );
    let values: Vec<String> = (1..=50).map(|k| format!("{}", k as f64 * 0.01)).chain(["0.95".into()]).collect();
    ok(&r.cmd("scan", &c, &["--axis", "b", "--values", &values.join(",")]));
    let rows = csv_rows(&r.text("run_scan.csv"));
    assert_eq!(rows.len(), 51);
    let mut crossed = false;
    for (row, v) in rows.iter().zip(&values) {
        assert_eq!(row[0].parse::<f64>().unwrap(), v.parse::<f64>().unwrap());
        let verdict = row[9] == "true";
        let margin: f64 = row[11].parse().unwrap();
        if row[3] == "true" {
            assert_eq!(verdict, margin > 0.0);
        }
        if !verdict {
            crossed = true;
        } else {
            assert!(!crossed, "verdict true again after crossover at b = {v}");
        }
    }
    assert!(crossed);
    let last = rows.last().unwrap();
    assert_eq!(last[3], "false");
    assert_eq!(last[9], "false");
}

#[test]
fn single_value_scan_matches_check() {
    let r = Run::new();
    let c = r.config(
        "s.ini",
        "[model]\nb = 0.05\nr = 0.5\n[a]\nkind = cosine\nbase = 1.05\namplitude = 0.05\nmodes = 1\n[grid]\ncounts = 11\n",
    );
    ok(&r.cmd("check", &c, &[]));
    let j = r.json("run_check.json");
    ok(&r.cmd("scan", &c, &["--axis", "b", "--values", "0.05"]));
    let row = &csv_rows(&r.text("run_scan.csv"))[0];
    assert_eq!(row[11].parse::<f64>().unwrap(), num(&j["margins"]["condition_4_6"]));
    assert_eq!(row[15].parse::<f64>().unwrap(), num(&j["margins"]["condition_4_66"]));
    assert_eq!(row[5].parse::<f64>().unwrap(), num(&j["quadruple"]["u_lo"]));
}

#[test]
fn scan_amplitude_limit() {
    let r = Run::new();
    let c = r.config(
        "a.ini",
        "[model]\nb = 0.1\nr = 0.5\n[a]\nkind = cosine\nbase = 1.0\namplitude = 0.1\nmodes = 1\n[grid]\ncounts = 11\n",
    );
    ok(&r.cmd("scan", &c, &["--axis", "amplitude", "--values", "0.1,0.01,0.0001"]));
    let rows = csv_rows(&r.text("run_scan.csv"));
    let ratio = |row: &Vec<String>| row[6].parse::<f64>().unwrap() / row[5].parse::<f64>().unwrap();
    assert!(ratio(&rows[0]) > ratio(&rows[1]) && ratio(&rows[1]) > ratio(&rows[2]));
    assert!(ratio(&rows[2]) - 1.0 < 1e-3);
    let a_min: f64 = rows[2][1].parse().unwrap();
    // the small-amplitude condition tends to (1 + r a_min) sqrt(d-ratio) - b
    let remark_limit = 1.0 + 0.5 * a_min - 0.1;
    let remark: f64 = rows[2][15].parse().unwrap();
    assert!((remark - remark_limit).abs() < 2e-3, "{remark} vs {remark_limit}");
    // the main condition tends to its homogeneous value 1 + 2 r s - r a - b
    let s = hollingtanner::bounds::homogeneous_steady(1.0, 0.1, 0.5);
    let main_limit = 1.0 + 2.0 * 0.5 * s - 0.5 - 0.1;
    let margin: f64 = rows[2][11].parse().unwrap();
    assert!((margin - main_limit).abs() < 2e-3, "{margin} vs {main_limit}");
}

#[test]
fn scan_rejects_bad_axis_and_values() {
    let r = Run::new();
    let c = r.config("s.ini", "[model]\nb = 0.1\n[grid]\ncounts = 11\n");
    assert_eq!(r.cmd("scan", &c, &["--axis", "mu", "--values", "1"]).status.code(), Some(4));
    assert_eq!(r.cmd("scan", &c, &["--axis", "b", "--values", "-1"]).status.code(), Some(4));
    ok(&r.cmd("scan", &c, &["--axis", "contrast", "--values", "1,3"]));
    let rows = csv_rows(&r.text("run_scan.csv"));
    let m1: f64 = rows[0][11].parse().unwrap();
    let m3: f64 = rows[1][11].parse().unwrap();
    // d-ratio factor 1 -> 1/3
    assert!(((m3 + 0.1) - (m1 + 0.1) / 3.0).abs() < 1e-12);
}

#[test]
fn tabulated_coefficient_round_trip() {
    use hollingtanner::io::{matrix_csv, read_field};
    use hollingtanner::model::{Grid, ScalarField};
    let r = Run::new();
    let g = Grid::rectangle(1.0, 2.0, 5, 4).unwrap();
    let field = ScalarField::from_fn(g, |x| 1.0 + 0.1 * (3.3 * x[0]).sin() * (x[1] + 0.1).ln().abs());
    let path = r.dir.path().join("a.csv");
    fs::write(&path, matrix_csv(&field)).unwrap();
    assert_eq!(read_field(&path, &g).unwrap().values(), field.values());

    let c = r.config(
        "t.ini",
        "[model]\nb = 0.05\n[a]\nkind = tabulated\nfile = a.csv\n[grid]\ndim = 2\nextents = 1, 2\ncounts = 5, 4\n",
    );
    ok(&r.cmd("check", &c, &[]));
    let j = r.json("run_check.json");
    assert_eq!(num(&j["a_min"]), field.min());
    assert_eq!(num(&j["a_max"]), field.max());
}

#[test]
fn invalid_config_exit_code() {
    let r = Run::new();
    let c = r.config("x.ini", "[model]\nb = 0.5\nfoo = 1\n");
    assert_eq!(r.cmd("bounds", &c, &[]).status.code(), Some(4));
    let missing = r.dir.path().join("nope.ini");
    assert_eq!(r.cmd("check", &missing, &[]).status.code(), Some(4));
    let o = Command::new(BIN).arg("frobnicate").output().unwrap();
    assert_eq!(o.status.code(), Some(4));
}
