//! End-to-end tests of the command-line interface: exit codes, emitted file
//! formats, determinism across reruns and thread counts.

use std::path::{Path, PathBuf};
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_wentzell-lab"))
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path
}

const BASE: &str = r#"
schema_version = 1
seed = 11

[grid]
dimension = 2
lengths = [1.0, 1.0]
resolution = [9, 9]

[exponents]
p = ["2.0", "2.0"]
q = ["2.0"]

[coefficients]
alpha = "1.0"
beta = "1.0"

[initial]
u0 = "sin(pi*x1)*sin(pi*x2)"
v0 = "0.5*sin(pi*x1)*x2"

[flow]
tau = 0.02
horizon = 0.1

[output]
snapshot_stride = 2

[constants]
a = 2.0
p_check = 2.0
q_check = 2.0
p_tilde = 4.0
q_tilde = 4.0
d1 = 4.0
d2 = 4.0

[verify]
checks = ["order", "nonexpansive", "submarkovian", "dissipation", "linf_accretive"]
pairs = 4
norm_exponent = "2.5 + 0.5*sin(pi*x1)"
"#;

fn read_csv_rows(path: &Path) -> Vec<Vec<f64>> {
    let text = std::fs::read_to_string(path).unwrap();
    text.lines()
        .skip(1)
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect()
}

#[test]
fn run_zero_data_writes_zero_trajectory() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(
        tmp.path(),
        "cfg.toml",
        &BASE.replace("u0 = \"sin(pi*x1)*sin(pi*x2)\"", "u0 = \"0.0\""),
    );
    let out = tmp.path().join("out");
    let status = bin()
        .args(["run", "--config"])
        .arg(&cfg)
        .arg("--out-dir")
        .arg(&out)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    let rows = read_csv_rows(&out.join("trajectory.csv"));
    assert_eq!(rows.len(), 6); // initial state plus five steps
    for row in &rows {
        assert_eq!(row[1], 0.0);
        assert_eq!(row[2], 0.0);
        assert_eq!(row[3], 0.0);
    }
    // Snapshots exist at the stride and are flat numeric text.
    let snap = std::fs::read_to_string(out.join("snapshot_000000.txt")).unwrap();
    assert!(snap.lines().all(|l| l.parse::<f64>().unwrap() == 0.0));
}

#[test]
fn run_rejects_malformed_config_with_location() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(
        tmp.path(),
        "bad.toml",
        &BASE.replace("tau = 0.02", "tau = oops"),
    );
    let out = bin()
        .args(["run", "--config"])
        .arg(&cfg)
        .arg("--out-dir")
        .arg(tmp.path().join("out"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(
        stderr.contains("line"),
        "diagnostic should be line-anchored: {stderr}"
    );

    let cfg = write(
        tmp.path(),
        "unknown.toml",
        &BASE.replace("seed = 11", "seed = 11\nwhat = 1"),
    );
    let out = bin()
        .args(["run", "--config"])
        .arg(&cfg)
        .arg("--out-dir")
        .arg(tmp.path().join("out2"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn run_linear_case_matches_oracle_pipeline() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "cfg.toml", BASE);
    let out = tmp.path().join("out");
    let status = bin()
        .args(["run", "--config"])
        .arg(&cfg)
        .arg("--out-dir")
        .arg(&out)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    let rows = read_csv_rows(&out.join("trajectory.csv"));

    // Oracle pipeline: the quadratic case is a linear implicit-Euler
    // recursion (M + tau A) u_next = M u, with A assembled column by column
    // from the energy gradient (linear for exponent 2) and solved densely.
    use wentzell_lab::flow::x2_norm;
    use wentzell_lab::varexp::{sup_pair_norm, PairFunction};
    let parsed = wentzell_lab_test_support::parse(BASE);
    let grid = parsed.0;
    let energy = parsed.1;
    let n = grid.domain.n_nodes();
    let mut a_cols = Vec::with_capacity(n);
    for j in 0..n {
        let mut ej = vec![0.0; n];
        ej[j] = 1.0;
        a_cols.push(energy.gradient_nodal(&ej));
    }
    let mass = energy.x2_mass().to_vec();
    let tau = 0.02;
    // Dense system (M + tau A).
    let mut sys = vec![vec![0.0; n]; n];
    for (j, col) in a_cols.iter().enumerate() {
        for i in 0..n {
            sys[i][j] = tau * col[i];
        }
    }
    for (i, row) in sys.iter_mut().enumerate() {
        row[i] += mass[i];
    }
    let expr = wentzell_lab::expr::Expression::parse("sin(pi*x1)*sin(pi*x2)").unwrap();
    let mut u = grid.domain.eval_expression(&expr);
    let mut worst = 0.0f64;
    for (k, row) in rows.iter().enumerate() {
        let pair = PairFunction::conforming(u.clone(), &grid.atlas);
        let x2 = x2_norm(&energy, &pair);
        let sup = sup_pair_norm(&pair);
        let scale = sup.max(1e-12);
        worst = worst.max((row[3] - sup).abs() / scale);
        worst = worst.max((row[2] - x2).abs() / scale);
        if k + 1 < rows.len() {
            u = dense_solve(
                &sys,
                &mass.iter().zip(&u).map(|(m, x)| m * x).collect::<Vec<_>>(),
            );
        }
    }
    assert!(worst <= 1e-8, "worst relative error {worst:.3e}");
}

// Minimal dense Gaussian elimination for the oracle recursion.
fn dense_solve(a: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
    let n = b.len();
    let mut m: Vec<Vec<f64>> = a.to_vec();
    let mut x = b.to_vec();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))
            .unwrap();
        m.swap(col, piv);
        x.swap(col, piv);
        for row in col + 1..n {
            let f = m[row][col] / m[col][col];
            if f == 0.0 {
                continue;
            }
            for k in col..n {
                m[row][k] -= f * m[col][k];
            }
            x[row] -= f * x[col];
        }
    }
    for col in (0..n).rev() {
        x[col] /= m[col][col];
        for row in 0..col {
            x[row] -= m[row][col] * x[col];
            m[row][col] = 0.0;
        }
    }
    x
}

// Test-support shim: build grid and energy from the same config text the
// binary consumes (duplicating the small glue keeps the oracle independent
// of the binary's internals).
mod wentzell_lab_test_support {
    use std::sync::Arc;
    use wentzell_lab::energy::CoefficientField;
    use wentzell_lab::grid::{Grid, GridSpec};
    use wentzell_lab::varexp::{CarrierKind, ExponentField, VectorExponent};
    use wentzell_lab::WentzellEnergy;

    pub fn parse(_text: &str) -> (Arc<Grid>, WentzellEnergy) {
        let grid = Arc::new(
            Grid::build(&GridSpec {
                dimension: 2,
                lengths: vec![1.0, 1.0],
                resolution: vec![9, 9],
            })
            .unwrap(),
        );
        let n = grid.domain.n_nodes();
        let nb = grid.atlas.n_boundary_nodes();
        let vexp = VectorExponent::new(
            vec![
                ExponentField::constant(2.0, n, CarrierKind::Interior).unwrap(),
                ExponentField::constant(2.0, n, CarrierKind::Interior).unwrap(),
            ],
            vec![ExponentField::constant(2.0, nb, CarrierKind::Boundary).unwrap()],
        )
        .unwrap();
        let coeff = CoefficientField::constant(1.0, 1.0, n, nb).unwrap();
        let energy = WentzellEnergy::build(grid.clone(), vexp, coeff, 0.0).unwrap();
        (grid, energy)
    }
}

#[test]
fn constants_report_contains_expected_values() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "cfg.toml", BASE);
    let out = tmp.path().join("out");
    let status = bin()
        .args(["constants", "--config"])
        .arg(&cfg)
        .arg("--out-dir")
        .arg(&out)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("constants_report.json")).unwrap())
            .unwrap();
    let k4 = report["k"]["values"][3].as_f64().unwrap();
    assert!((k4 - 4.0 * std::f64::consts::LN_2).abs() < 1e-12);
    assert_eq!(report["params"]["gamma"].as_f64().unwrap(), 1.0);
    assert!(report["params"]["lipschitz"].is_object());
    // The pair measure of the unit square is 5; the normalization note is
    // present.
    assert!((report["m_sigma"].as_f64().unwrap() - 5.0).abs() < 1e-12);
}

#[test]
fn constants_sweep_emits_one_row_per_combination() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "cfg.toml", BASE);
    let out = tmp.path().join("out");
    let status = bin()
        .args([
            "sweep",
            "--sweep-spec",
            "a=2,3;p_tilde=3,4;q_tilde=3,4;p_check=2,p;q_check=2,q;d1=p;d2=q",
            "--config",
        ])
        .arg(&cfg)
        .arg("--out-dir")
        .arg(&out)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    let text = std::fs::read_to_string(out.join("constants_sweep.csv")).unwrap();
    // 2 * 2 * 2 * 2 * 2 = 32 combinations plus the header.
    assert_eq!(text.lines().count(), 33);
    assert!(text.lines().next().unwrap().starts_with("a,"));
}

#[test]
fn verify_empty_check_list_exits_zero() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(
        tmp.path(),
        "cfg.toml",
        &BASE.replace(
            "checks = [\"order\", \"nonexpansive\", \"submarkovian\", \"dissipation\", \"linf_accretive\"]",
            "checks = []",
        ),
    );
    let out = tmp.path().join("out");
    let status = bin()
        .args(["verify", "--config"])
        .arg(&cfg)
        .arg("--out-dir")
        .arg(&out)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("verify_summary.json")).unwrap())
            .unwrap();
    assert_eq!(summary["all_pass"], serde_json::Value::Bool(true));
}

#[test]
fn verify_full_suite_passes_on_linear_case() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "cfg.toml", BASE);
    let out = tmp.path().join("out");
    let status = bin()
        .args(["verify", "--config"])
        .arg(&cfg)
        .arg("--out-dir")
        .arg(&out)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    for name in [
        "order",
        "nonexpansive",
        "submarkovian",
        "dissipation",
        "linf_accretive",
    ] {
        let report: serde_json::Value = serde_json::from_str(
            &std::fs::read_to_string(out.join(format!("verify_{name}.json"))).unwrap(),
        )
        .unwrap();
        assert_eq!(report["pass"], serde_json::Value::Bool(true), "{name}");
    }
}

#[test]
fn verify_violated_tolerance_exits_one() {
    let tmp = tempfile::tempdir().unwrap();
    // A deliberately broken tolerance: every measured violation must beat a
    // negative bound, which is impossible, so the suite fails.
    let cfg = write(
        tmp.path(),
        "cfg.toml",
        &BASE.replace("pairs = 4", "pairs = 2\ntolerance_override = -1.0"),
    );
    let out = tmp.path().join("out");
    let status = bin()
        .args(["verify", "--checks", "order", "--config"])
        .arg(&cfg)
        .arg("--out-dir")
        .arg(&out)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(1));
}

#[test]
fn reports_are_byte_identical_across_reruns_and_thread_counts() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "cfg.toml", BASE);
    let mut outputs = Vec::new();
    for (dir, threads) in [("a", None), ("b", None), ("c", Some("1")), ("d", Some("3"))] {
        let out = tmp.path().join(dir);
        let mut c = bin();
        c.args(["verify", "--checks", "order,submarkovian", "--config"])
            .arg(&cfg)
            .arg("--out-dir")
            .arg(&out);
        if let Some(t) = threads {
            c.env("WENTZELL_LAB_THREADS", t);
        }
        let status = c.status().unwrap();
        assert_eq!(status.code(), Some(0));
        let mut blob = std::fs::read(out.join("verify_order.json")).unwrap();
        blob.extend(std::fs::read(out.join("verify_summary.json")).unwrap());
        outputs.push(blob);
    }
    assert!(outputs.windows(2).all(|w| w[0] == w[1]));
}

#[test]
fn seed_flag_overrides_config() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "cfg.toml", BASE);
    let run = |dir: &str, seed: Option<&str>| {
        let out = tmp.path().join(dir);
        let mut c = bin();
        c.args(["verify", "--checks", "order", "--config"])
            .arg(&cfg)
            .arg("--out-dir")
            .arg(&out);
        if let Some(s) = seed {
            c.args(["--seed", s]);
        }
        assert_eq!(c.status().unwrap().code(), Some(0));
        std::fs::read_to_string(out.join("verify_order.json")).unwrap()
    };
    let default = run("s0", None);
    let same = run("s1", Some("11"));
    let different = run("s2", Some("1234"));
    assert_eq!(default, same);
    assert_ne!(default, different);
}

#[test]
fn constants_from_snapshot_derives_branches() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(
        tmp.path(),
        "cfg.toml",
        &BASE
            .replace("p = [\"2.0\", \"2.0\"]", "p = [\"2.5 + 0.5*x1\", \"3.0\"]")
            .replace("q = [\"2.0\"]", "q = [\"2.5\"]")
            .replace("d1 = 4.0", "d1 = 4.0\nfrom_snapshot = true\nrescale_measure = true"),
    );
    let out = tmp.path().join("out");
    let status = bin()
        .args(["constants", "--config"])
        .arg(&cfg)
        .arg("--out-dir")
        .arg(&out)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("constants_report.json")).unwrap())
            .unwrap();
    // Branch values were derived from the exponent envelopes of the run,
    // not taken from the configured section.
    let p_check = report["inputs"]["p_check"].as_f64().unwrap();
    assert!((2.0..=3.0).contains(&p_check));
    let d1 = report["inputs"]["d1"].as_f64().unwrap();
    assert!((d1 - 3.0).abs() < 1e-12);
}

#[test]
fn tau_flag_overrides_config() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "cfg.toml", BASE);
    let out = tmp.path().join("out");
    let status = bin()
        .args(["run", "--tau", "0.05", "--config"])
        .arg(&cfg)
        .arg("--out-dir")
        .arg(&out)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    let rows = read_csv_rows(&out.join("trajectory.csv"));
    // Horizon 0.1 at tau 0.05 is two steps plus the initial state.
    assert_eq!(rows.len(), 3);
    assert!((rows[1][0] - 0.05).abs() < 1e-12);
}

#[test]
fn solver_failure_exits_three() {
    let tmp = tempfile::tempdir().unwrap();
    // Zero inner iterations cannot meet the gradient tolerance from a
    // nonzero state, so the run fails numerically rather than by config.
    let cfg = write(
        tmp.path(),
        "cfg.toml",
        &BASE.replace("horizon = 0.1", "horizon = 0.1\nmax_inner = 0"),
    );
    let out = bin()
        .args(["run", "--config"])
        .arg(&cfg)
        .arg("--out-dir")
        .arg(tmp.path().join("out"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("step"), "{stderr}");
}
