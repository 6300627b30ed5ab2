use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

const BASE: &str = r#"
[scenario]
K = 2
c = 1.0
lambda = 1.0
utility = { family = "scaled_power", a = 2.0, alpha = 0.5 }
"#;

const K1: &str = r#"
[scenario]
K = 1
c = 1.0
lambda = 0.5
utility = { family = "scaled_power", a = 2.0, alpha = 0.5 }
"#;

fn rcp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rcp"))
        .args(args)
        .env_remove("RCP_THREADS")
        .output()
        .expect("binary runs")
}

fn write_config(dir: &TempDir, name: &str, text: &str) -> String {
    let path = dir.path().join(name);
    std::fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

#[test]
fn solve_reports_closed_forms() {
    let dir = TempDir::new().unwrap();
    let o = rcp(&["solve", "--config", &write_config(&dir, "a.toml", BASE)]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("q_bar=0.5 t_bar=1 p=1 guarantee=0.5"));

    let o = rcp(&["solve", "--config", &write_config(&dir, "b.toml", K1)]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("q_bar=0.25 t_bar=0.5 p=1 guarantee=0.25"));
}

#[test]
fn lambda_outside_range_is_a_validation_error() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "bad.toml", &BASE.replace("lambda = 1.0", "lambda = 2.0"));
    let o = rcp(&["--config", &cfg, "solve"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("0 < lambda < K"), "{}", stderr(&o));
}

#[test]
fn unknown_key_is_named() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "typo.toml", &BASE.replace("c = 1.0", "cost = 1.0"));
    let o = rcp(&["--config", &cfg, "solve"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("cost"), "{}", stderr(&o));
}

#[test]
fn missing_config_file_fails() {
    let o = rcp(&["--config", "/nonexistent/rcp.toml", "solve"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn respond_examples() {
    let o = rcp(&["respond", "--theta", "1,1"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("allocation=(1,1) transfer=2.5 mu=1 floor_binding=false"));

    let o = rcp(&["respond", "--theta", "0,0"]);
    assert!(stdout(&o).contains("allocation=(0.25,0.25) transfer=1"));

    let o = rcp(&["respond", "--theta", "0.1,0.2,0.3"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("3 components"));

    let o = rcp(&["respond", "--theta", "1.5,0"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn compare_orders_by_guarantee() {
    let o = rcp(&["compare", "--format", "csv"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    let rows: Vec<Vec<&str>> = text.lines().skip(1).map(|l| l.split(',').collect()).collect();
    let g: Vec<&str> = rows.iter().map(|r| r[8]).collect();
    assert_eq!(g, ["0.5", "0.5", "0"]);
}

#[test]
fn sweep_lambda() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "k1.toml", K1);
    let o = rcp(&[
        "--config",
        &cfg,
        "sweep",
        "--param",
        "lambda",
        "--values",
        "0.25,0.5,0.75",
        "--format",
        "csv",
    ]);
    assert_eq!(o.status.code(), Some(0));
    let g: Vec<f64> = stdout(&o)
        .lines()
        .skip(1)
        .map(|l| l.rsplit(',').next().unwrap().parse().unwrap())
        .collect();
    assert_eq!(g.len(), 3);
    assert!(g.windows(2).all(|w| w[0] < w[1]));

    let o = rcp(&[
        "--config", &cfg, "sweep", "--param", "lambda", "--values", "0.5,1.5",
    ]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn worst_case_convex_tariff() {
    let dir = TempDir::new().unwrap();
    let text = format!("{K1}\n[[mechanism]]\nkind = \"linear\"\np = 2.0\n");
    let cfg = write_config(&dir, "tariff.toml", &text);
    let o = rcp(&["--config", &cfg, "--format", "csv", "worst-case"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "mechanism,K,c,lambda,a,alpha,method,grid,guarantee,refinement_delta,worst_support,worst_weights"
    );
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 6);
    for row in rows {
        let cells: Vec<&str> = row.split(',').collect();
        assert_eq!(cells[8], "0.0625", "{row}");
        assert_eq!(cells[10], "(0.5)", "{row}");
    }
}

#[test]
fn grid_errors_are_surfaced() {
    let dir = TempDir::new().unwrap();
    let text = format!("{BASE}\n[adversary]\nlevels = [201]\ncap = 100\n");
    let cfg = write_config(&dir, "capped.toml", &text);
    let o = rcp(&["--config", &cfg, "worst-case"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("exceeds cap 100"), "{}", stderr(&o));
}

#[test]
fn verify_default_config_passes() {
    let o = rcp(&["verify"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert!(stdout(&o).lines().all(|l| !l.starts_with("FAIL")));
}

#[test]
fn verify_detects_corrupted_commit_payment() {
    let dir = TempDir::new().unwrap();
    let text =
        format!("{BASE}\n[[mechanism]]\nkind = \"committed_spend\"\nq_bar = 0.5\nt_bar = 1.1\np = 1.0\n");
    let cfg = write_config(&dir, "bad.toml", &text);
    let o = rcp(&["--config", &cfg, "verify"]);
    assert_eq!(o.status.code(), Some(3));
    let out = stdout(&o);
    let line = out.lines().find(|l| l.contains("profit_identity")).unwrap();
    assert!(line.starts_with("FAIL") && line.contains("witness"), "{line}");
}

fn verdicts(text: &str) -> Vec<String> {
    text.lines()
        .filter_map(|l| {
            let mut w = l.split_whitespace();
            Some(format!("{} {}", w.next()?, w.next()?))
        })
        .collect()
}

#[test]
fn verify_verdicts_do_not_depend_on_seed() {
    let a = stdout(&rcp(&["verify", "--seed", "1"]));
    let b = stdout(&rcp(&["verify", "--seed", "987654321"]));
    assert_eq!(verdicts(&a), verdicts(&b));
}

#[test]
fn output_is_byte_identical_across_runs_and_thread_counts() {
    let a = rcp(&["worst-case", "--format", "csv"]);
    let b = Command::new(env!("CARGO_BIN_EXE_rcp"))
        .args(["worst-case", "--format", "csv"])
        .env("RCP_THREADS", "4")
        .output()
        .unwrap();
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn bad_thread_count_is_rejected() {
    let o = Command::new(env!("CARGO_BIN_EXE_rcp"))
        .arg("solve")
        .env("RCP_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn out_flag_writes_file() {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("report.csv");
    let o = rcp(&["solve", "--format", "csv", "--out", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert!(o.stdout.is_empty());
    let text = std::fs::read_to_string(Path::new(&path)).unwrap();
    assert!(text.starts_with("K,c,lambda,a,alpha,q_bar"));
}

#[test]
fn evaluate_uses_distribution_block() {
    let dir = TempDir::new().unwrap();
    let text = format!(
        "{K1}\n[[mechanism]]\nkind = \"linear\"\np = 2.0\n[distribution]\nfamily = \"two_point\"\ns_lo = 0.0\ns_hi = 1.0\n"
    );
    let cfg = write_config(&dir, "eval.toml", &text);
    let o = rcp(&["--config", &cfg, "--format", "csv", "evaluate"]);
    assert_eq!(o.status.code(), Some(0));
    let row = stdout(&o).lines().nth(1).unwrap().to_string();
    assert!(row.contains(",0.125,"), "{row}");
}

#[test]
fn bad_flag_exits_with_usage_error() {
    assert_eq!(rcp(&["solve", "--bogus"]).status.code(), Some(1));
    assert_eq!(rcp(&["--help"]).status.code(), Some(0));
}
