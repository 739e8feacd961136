//! End-to-end runs of the command-line binary.

use std::path::Path;
use std::process::{Command, Output};

const REFERENCE: &str = "\
L = 3
K = 10
N = 100
pathloss_exponent = 2.5
rho_tr_db = 6
rho_dl_db = 10
kappa = 5
lambda_rule = k_over_n_rho
los_model = ula
geometry = triangle_default
seed = 1
";

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_rician-mimo"))
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

fn sweep(config: &str, out: &str, extra: &[&str]) -> Output {
    bin()
        .args(["sweep", "--config", config, "--out", out])
        .args(extra)
        .output()
        .unwrap()
}

#[test]
fn validate_reference() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "ref.cfg", REFERENCE);
    let out = bin().args(["validate", "--config", &cfg]).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("K/N = 0.1"));
    assert!(text.contains("k_over_n_rho -> 0.01, 0.01, 0.01"));
    assert!(text.trim_end().ends_with("OK"));
}

#[test]
fn validate_flags_full_load() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "full.cfg", &REFERENCE.replace("N = 100", "N = 10"));
    let out = bin().args(["validate", "--config", &cfg]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("VIOLATED"));
}

#[test]
fn bad_inputs_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "ref.cfg", REFERENCE);
    let broken = write(dir.path(), "broken.cfg", &REFERENCE.replace("K = 10", "K = ten"));
    let out = dir.path().join("o.csv").to_string_lossy().into_owned();
    let base = ["--sweep", "N", "--values", "50,100", "--engine", "de"];
    let o = sweep(&cfg, &out, &[&base[..], &["--scheme", ""]].concat());
    assert_eq!(o.status.code(), Some(2));
    let o = sweep(&broken, &out, &[&base[..], &["--scheme", "mrt"]].concat());
    assert_eq!(o.status.code(), Some(2));
    let o = sweep(&cfg, &out, &["--sweep", "N", "--values", "100,50", "--engine", "de", "--scheme", "mrt"]);
    assert_eq!(o.status.code(), Some(2));
    let o = sweep(&cfg, &out, &["--sweep", "N", "--values", "100", "--engine", "mc", "--scheme", "mrt"]);
    assert_eq!(o.status.code(), Some(2), "mc without --trials");
    let o = bin().args(["validate", "--config", &broken]).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn sweep_csv_layout_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let small = REFERENCE.replace("K = 10", "K = 3").replace("N = 100", "N = 12");
    let cfg = write(dir.path(), "small.cfg", &small);
    let args = [
        "--sweep", "kappa", "--values", "0.5,4", "--scheme", "both", "--engine", "all", "--trials", "60", "--seed", "9",
    ];
    let a = dir.path().join("a.csv").to_string_lossy().into_owned();
    let b = dir.path().join("b.csv").to_string_lossy().into_owned();
    for out in [&a, &b] {
        let o = sweep(&cfg, out, &args);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let (ta, tb) = (std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    assert_eq!(ta, tb);

    let mut r = csv::Reader::from_path(&a).unwrap();
    let header: Vec<String> = r.headers().unwrap().iter().map(String::from).collect();
    assert_eq!(
        header,
        ["sweep_var", "sweep_value", "scheme", "engine", "cell", "ue", "sinr", "rate", "stderr", "trials", "seed"]
    );
    let rows: Vec<csv::StringRecord> = r.records().map(|x| x.unwrap()).collect();
    // 2 values x 2 schemes x 3 engines x (9 UEs + aggregate)
    assert_eq!(rows.len(), 2 * 2 * 3 * 10);
    for row in &rows {
        assert_eq!(&row[0], "kappa");
        assert_eq!(&row[10], "9");
        match &row[3] {
            "mc" => assert!(!row[8].is_empty() && &row[9] == "60"),
            _ => assert!(row[8].is_empty() && row[9].is_empty()),
        }
    }
    // every de row has an mc counterpart
    let key = |r: &csv::StringRecord| (r[1].to_string(), r[2].to_string(), r[4].to_string(), r[5].to_string());
    let mc: std::collections::HashSet<_> = rows.iter().filter(|r| &r[3] == "mc").map(key).collect();
    assert!(rows.iter().filter(|r| &r[3] == "de").all(|r| mc.contains(&key(r))));
}

#[test]
fn unbounded_limits_print_inf() {
    let dir = tempfile::tempdir().unwrap();
    let single = REFERENCE
        .replace("L = 3", "L = 1")
        .replace("K = 10", "K = 2")
        .replace("los_model = ula", "los_model = dft_orthogonal");
    let cfg = write(dir.path(), "single.cfg", &single);
    let out = dir.path().join("o.csv").to_string_lossy().into_owned();
    let o = sweep(&cfg, &out, &["--sweep", "N", "--values", "64", "--scheme", "mrt", "--engine", "limits"]);
    assert_eq!(o.status.code(), Some(0));
    let text = std::fs::read_to_string(&out).unwrap();
    assert!(text.lines().skip(1).all(|l| l.contains(",inf,")), "{text}");
}
