use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use lassots_core::dgm::DgmSpec;
use lassots_core::experiment::{read_csv, ExperimentGrid, GridConfig, Study, CSV_HEADER};

fn repo_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lassots"))
        .args(args)
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Simulates 2000 rows of the committed Gaussian VAR spec.
fn gaussian_sample(dir: &Path) -> (PathBuf, PathBuf) {
    let spec = repo_root().join("configs/specs/gaussian_var.toml");
    let data = dir.join("sample.csv");
    let o = run(&[
        "simulate",
        "--spec",
        p(&spec),
        "--t",
        "2000",
        "--seed",
        "3",
        "--out",
        p(&data),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    (spec, data)
}

#[test]
fn committed_configs_parse() {
    for (file, study) in [
        ("heavy_tail.toml", Study::HeavyTail),
        ("dependence.toml", Study::Dependence),
        ("alignment.toml", Study::RescaledAlignment),
    ] {
        let path = repo_root().join("configs").join(file);
        let grid = ExperimentGrid::load(study, &path).unwrap();
        assert_eq!(grid, ExperimentGrid::defaults(study, false), "{file}");
        GridConfig::load(&path).unwrap();
    }
    for file in ["gaussian_var.toml", "weibull_var.toml", "arch.toml"] {
        let text = fs::read_to_string(repo_root().join("configs/specs").join(file)).unwrap();
        DgmSpec::from_toml(&text).unwrap().validate().unwrap();
    }
}

#[test]
fn simulate_then_fit_in_every_lambda_mode() {
    let dir = tempfile::tempdir().unwrap();
    let (spec, data) = gaussian_sample(dir.path());
    let theta = dir.path().join("theta.csv");
    let o = run(&[
        "simulate",
        "--spec",
        p(&spec),
        "--t",
        "10",
        "--out",
        p(&dir.path().join("s.csv")),
        "--theta-out",
        p(&theta),
    ]);
    assert!(o.status.success());
    assert_eq!(fs::read_to_string(&theta).unwrap().lines().count(), 3);

    let hat = dir.path().join("hat.csv");
    let o = run(&[
        "fit",
        "--input",
        p(&data),
        "--lambda",
        "0.05",
        "--theta-out",
        p(&hat),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("converged = true"));
    assert_eq!(fs::read_to_string(&hat).unwrap().lines().count(), 3);

    let o = run(&[
        "fit",
        "--input",
        p(&data),
        "--lambda-mode",
        "theory",
        "--c-lambda",
        "0.5",
    ]);
    assert!(o.status.success());

    let o = run(&[
        "fit",
        "--input",
        p(&data),
        "--lambda-mode",
        "oracle",
        "--theta-star",
        p(&theta),
    ]);
    assert!(o.status.success());
    let out = stdout(&o);
    assert!(out.contains("frobenius error"), "{out}");

    // missing inputs for the chosen mode are reported, not guessed
    assert_eq!(
        run(&["fit", "--input", p(&data), "--lambda-mode", "oracle"])
            .status
            .code(),
        Some(1)
    );
    assert_eq!(
        run(&["fit", "--input", p(&data), "--lambda-mode", "theory"])
            .status
            .code(),
        Some(1)
    );
}

#[test]
fn checks_exit_zero_on_pass_and_one_on_fail() {
    let dir = tempfile::tempdir().unwrap();
    let (spec, data) = gaussian_sample(dir.path());
    let out = dir.path().join("out.csv");

    let re = |alpha: &str| {
        run(&[
            "check-re",
            "--input",
            p(&data),
            "--alpha",
            alpha,
            "--tau",
            "0",
            "--spec",
            p(&spec),
            "--out",
            p(&out),
        ])
    };
    let o = re("0.1");
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).starts_with("PASS re"));
    assert!(fs::read_to_string(&out)
        .unwrap()
        .starts_with("alpha,tau,n_probes,min_margin,pass\n"));
    let o = re("100");
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).starts_with("FAIL re"));

    let db = |q: &str| {
        run(&[
            "check-db",
            "--input",
            p(&data),
            "--spec",
            p(&spec),
            "--q-mult",
            q,
            "--out",
            p(&out),
        ])
    };
    assert_eq!(db("10").status.code(), Some(0));
    assert_eq!(db("0").status.code(), Some(1));
    assert!(fs::read_to_string(&out)
        .unwrap()
        .contains(",subweibull,false"));

    let bounds = |tau: &str, l2: &str| {
        run(&[
            "bounds",
            "--s",
            "4",
            "--lambda",
            "0.1",
            "--alpha",
            "0.5",
            "--tau",
            tau,
            "--l2-error",
            l2,
            "--out",
            p(&out),
        ])
    };
    assert_eq!(bounds("0", "0.1").status.code(), Some(0));
    // 4 sqrt(4) 0.1 / 0.5 = 1.6
    assert_eq!(bounds("0", "2.0").status.code(), Some(1));
    assert_eq!(bounds("1", "0.1").status.code(), Some(1));
    assert!(fs::read_to_string(&out)
        .unwrap()
        .starts_with("l2_bound,pred_bound,premise_ok,lambda_ok,l2_holds,pred_holds\n1.6,"));
}

#[test]
fn concentration_validators_write_tables() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("hw.csv");
    let o = run(&[
        "validate-concentration",
        "hanson-wright",
        "--n",
        "50",
        "--n-mc",
        "5000",
        "--out",
        p(&out),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert_eq!(fs::read_to_string(&out).unwrap().lines().count(), 10);

    let out = dir.path().join("bern.csv");
    let o = run(&[
        "validate-concentration",
        "beta-bernstein",
        "--t",
        "500",
        "--n-mc",
        "300",
        "--out",
        p(&out),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert!(fs::read_to_string(&out)
        .unwrap()
        .starts_with("t,empirical,term1,term2,bound,slack\n"));
}

fn small_config(dir: &Path, body: &str) -> PathBuf {
    let path = dir.join("grid.toml");
    fs::write(
        &path,
        format!("p_list = [10]\nm_multiples = [2, 6]\nreps = 2\n{body}"),
    )
    .unwrap();
    path
}

#[test]
fn experiment_is_reproducible_across_job_counts() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_config(dir.path(), "");
    let mut tables = Vec::new();
    for jobs in ["1", "3"] {
        let csv = dir.path().join(format!("run{jobs}.csv"));
        let svg = dir.path().join(format!("run{jobs}.svg"));
        let o = run(&[
            "experiment",
            "alignment",
            "--config",
            p(&config),
            "--out-csv",
            p(&csv),
            "--out-svg",
            p(&svg),
            "--jobs",
            jobs,
            "--seed",
            "11",
        ]);
        assert_eq!(
            o.status.code(),
            Some(0),
            "{}",
            String::from_utf8_lossy(&o.stderr)
        );
        assert!(fs::read_to_string(&svg).unwrap().starts_with("<svg"));
        let text = fs::read_to_string(&csv).unwrap();
        assert_eq!(text.lines().next(), Some(CSV_HEADER));
        let rows = read_csv(text.as_bytes()).unwrap();
        assert_eq!(rows.len(), 4);
        tables.push(
            rows.into_iter()
                .map(|mut r| {
                    r.wall_ms = 0;
                    r
                })
                .collect::<Vec<_>>(),
        );
    }
    assert_eq!(tables[0], tables[1]);
}

#[test]
fn skipped_cells_give_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_config(dir.path(), "shape_list = [1.0, -0.5]\n");
    let csv = dir.path().join("out.csv");
    let o = run(&[
        "experiment",
        "heavy-tail",
        "--config",
        p(&config),
        "--out-csv",
        p(&csv),
    ]);
    assert_eq!(
        o.status.code(),
        Some(2),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    assert_eq!(read_csv(fs::File::open(&csv).unwrap()).unwrap().len(), 4);
}

#[test]
fn bad_input_is_a_failure() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("out.csv");
    let config = small_config(dir.path(), "no_such_key = 1\n");
    assert_eq!(
        run(&[
            "experiment",
            "dependence",
            "--config",
            p(&config),
            "--out-csv",
            p(&csv)
        ])
        .status
        .code(),
        Some(1)
    );
    assert_eq!(
        run(&["fit", "--input", "/nonexistent.csv", "--lambda", "1"])
            .status
            .code(),
        Some(1)
    );
    assert!(!run(&["experiment", "nonsense", "--out-csv", p(&csv)])
        .status
        .success());
}
