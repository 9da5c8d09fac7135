use std::path::Path;
use std::process::{Command, Output};

fn repairlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_repairlab")).args(args).output().unwrap()
}

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn column(csv: &str, name: &str) -> Vec<String> {
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let idx = header.iter().position(|h| *h == name).unwrap();
    lines.map(|l| l.split(',').nth(idx).unwrap().to_string()).collect()
}

#[test]
fn bounds_default_grid_is_monotone() {
    let o = repairlab(&["bounds"]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    assert!(out.starts_with("schema,beta,beta_prime,F,M,rrate_over_erate_lower,"));
    let lower: Vec<f64> = column(&out, "rrate_over_erate_lower").iter().map(|v| v.parse().unwrap()).collect();
    assert_eq!(lower.len(), 6);
    assert!(lower.windows(2).all(|w| w[0] < w[1]), "{lower:?}");
    let dc: Vec<f64> = column(&out, "log10_delta_c").iter().map(|v| v.parse().unwrap()).collect();
    // β = 0.1 row: F = 10⁴, M = 2·10⁴, εc = 0.1
    assert!((10f64.powf(dc[2]) - 3.0697e-7).abs() < 1e-10);
}

#[test]
fn bounds_empty_grid_is_header_only() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "b.conf", "[bounds]\nbetas =\n");
    let o = repairlab(&["bounds", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o).lines().count(), 1);
}

#[test]
fn simulate_is_deterministic_and_bracketed() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for p in [&a, &b] {
        let o = repairlab(&["simulate", "--seed", "7", "--out", p.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let (a, b) = (std::fs::read(a).unwrap(), std::fs::read(b).unwrap());
    assert_eq!(a, b);
    let text = String::from_utf8(a).unwrap();
    let ratio: f64 = column(&text, "rrate_over_erate")[0].parse().unwrap();
    assert!((4.0..=9.5).contains(&ratio), "{ratio}");
    assert_eq!(column(&text, "recoverable")[0], "true");
}

#[test]
fn triplication_under_heavy_load_sometimes_loses() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "t.conf",
        "[system]\nn_nodes = 99\nlambda = 1\n[strategy]\nkind = small_code_reactive\nn = 3\nk = 1\n\
         fragment_bits = 8\nrepair_delay = 0.002\n[run]\nwindow = all\nhorizon = 1000\n",
    );
    let mut lost = 0;
    for seed in 0..10 {
        let o = repairlab(&["simulate", "--config", &cfg, "--seed", &seed.to_string()]);
        assert_eq!(o.status.code(), Some(0));
        if !column(&stdout(&o), "first_loss_time")[0].is_empty() {
            lost += 1;
        }
    }
    assert!(lost > 0 && lost < 10, "{lost}");
}

#[test]
fn sweep_rows_are_sorted() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "s.conf",
        "[sweep]\nbetas = 0.2, 0.05, 0.1\nstrategies = starve, liquid_lazy\nseeds = 3\n",
    );
    let o = repairlab(&["sweep", "--config", &cfg, "--seed", "5"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let out = stdout(&o);
    let keys: Vec<(f64, String, u64)> = out
        .lines()
        .skip(1)
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[1].parse().unwrap(), f[2].to_string(), f[3].parse().unwrap())
        })
        .collect();
    assert_eq!(keys.len(), 18);
    let mut sorted = keys.clone();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    assert_eq!(keys, sorted);
    assert_eq!(keys[0], (0.05, "liquid_lazy".to_string(), 5));
}

#[test]
fn malformed_key_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "m.conf", "[system]\nnodes = 3\n");
    let o = repairlab(&["simulate", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("system.nodes"));
    let cfg = write_config(dir.path(), "v.conf", "[system]\nn_nodes = many\n");
    let o = repairlab(&["simulate", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("system.n_nodes"));
}

#[test]
fn precondition_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "e.conf", "[strategy]\nkind = equal_read\n");
    let o = repairlab(&["simulate", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("strategy.gamma"));
}

#[test]
fn unknown_suite_is_an_error() {
    let o = repairlab(&["verify", "nonsense"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("unknown suite"));
}

#[test]
fn verify_suite_reports() {
    let o = repairlab(&["verify", "supermartingale", "--trials", "2000"]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    assert_eq!(out.lines().count(), 7);
    assert!(column(&out, "verdict").iter().all(|v| v == "consistent" || v == "vacuous"));
    let o = repairlab(&["verify", "replay"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(column(&stdout(&o), "verdict"), vec!["consistent"]);
}

#[test]
fn exported_failures_replay_identically() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("f.csv");
    let export = write_config(
        dir.path(),
        "x.conf",
        &format!(
            "[system]\nn_nodes = 50\ndsize = 50176\n[strategy]\nkind = copy_ahead_oracle\n[failures]\nmodel = periodic\nids = fresh\nexport = {}\n[run]\nwindow = all\nhorizon = 501\n",
            trace.display()
        ),
    );
    let first = repairlab(&["simulate", "--config", &export, "--seed", "3"]);
    assert_eq!(first.status.code(), Some(0), "{}", String::from_utf8_lossy(&first.stderr));
    assert_eq!(column(&stdout(&first), "rrate_over_erate"), vec!["1"]);
    let import = write_config(
        dir.path(),
        "i.conf",
        &format!(
            "[system]\nn_nodes = 50\ndsize = 50176\n[strategy]\nkind = copy_ahead_oracle\n[failures]\nimport = {}\n[run]\nwindow = all\nhorizon = 501\n",
            trace.display()
        ),
    );
    let second = repairlab(&["simulate", "--config", &import, "--seed", "3"]);
    assert_eq!(second.status.code(), Some(0), "{}", String::from_utf8_lossy(&second.stderr));
    assert_eq!(stdout(&first), stdout(&second));
}
