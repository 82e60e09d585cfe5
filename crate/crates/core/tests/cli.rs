use std::process::{Command, Output};

fn macfb(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_macfb")).args(args).output().unwrap()
}

fn stdout(args: &[&str]) -> String {
    let out = macfb(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn json(args: &[&str]) -> serde_json::Value {
    serde_json::from_str(&stdout(args)).unwrap()
}

#[test]
fn gains_reference_point() {
    let v = json(&["gains", "--p1", "4.6875", "--p2", "4.6875", "--noise", "1"]);
    let get = |k: &str| v[k].as_f64().unwrap();
    assert!((get("a1") - 2.0).abs() < 1e-9);
    assert!((get("a2") + 2.0).abs() < 1e-9);
    assert!((get("rho") - 0.6).abs() < 1e-9);
    assert!((get("q11") - 4.6875).abs() < 1e-9);
    assert!((get("rsum") - 2.0).abs() < 1e-9);
}

#[test]
fn json_keys_keep_their_order() {
    let text = stdout(&["gains"]);
    let keys: Vec<&str> = text.split('"').skip(1).step_by(2).collect();
    assert_eq!(
        keys,
        ["p1", "p2", "noise", "a1", "a2", "rho", "l1", "l2", "big_l1", "big_l2", "q11", "q22", "q12", "r1", "r2", "rsum"]
    );
    let sim = stdout(&["simulate", "--n", "10", "--trials", "20"]);
    assert!(sim.starts_with("{\"err1\":"));
    assert!(sim.trim_end().ends_with(",\"seed\":1}"));
}

#[test]
fn region_endpoints() {
    let text = stdout(&["region", "--p1", "10", "--p2", "10", "--noise", "1", "--grid", "11"]);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("rho,r1,r2,rsum"));
    let rows: Vec<Vec<f64>> = lines.map(|l| l.split(',').map(|x| x.parse().unwrap()).collect()).collect();
    assert_eq!(rows.len(), 11);
    // rho = 0: individual bounds log2(11)/2, sum bound log2(21)/2.
    assert!((rows[0][1] - 0.5 * 11f64.log2()).abs() < 1e-12);
    assert!((rows[0][3] - 0.5 * 21f64.log2()).abs() < 1e-12);
    // rho = 1: individual bounds vanish, sum bound log2(41)/2.
    assert_eq!(rows[10][1], 0.0);
    assert!((rows[10][3] - 0.5 * 41f64.log2()).abs() < 1e-12);
}

#[test]
fn hybrid_single_alpha() {
    let text = stdout(&["hybrid", "--alpha", "1", "--p1", "3", "--p2", "3"]);
    let row: Vec<f64> = text.lines().nth(1).unwrap().split(',').map(|x| x.parse().unwrap()).collect();
    assert_eq!(row[1], 0.0);
    assert_eq!(row[2], 0.5 * 4f64.log2());
}

#[test]
fn dm_gamma_builtin_and_file() {
    assert_eq!(stdout(&["dm-gamma", "--channel", "adder"]).trim(), r#"{"class_gamma":true}"#);
    let dir = std::env::temp_dir().join(format!("macfb-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("ch.json");
    // Output ignores the inputs entirely: state is ambiguous given y.
    std::fs::write(
        &path,
        r#"{"x1":2,"x2":2,"s":2,"y":2,"p_s":[0.5,0.5],
            "w":[[[[0.5,0.5],[0.5,0.5]],[[0.5,0.5],[0.5,0.5]]],
                 [[[0.5,0.5],[0.5,0.5]],[[0.5,0.5],[0.5,0.5]]]]}"#,
    )
    .unwrap();
    let v = json(&["dm-gamma", "--channel", path.to_str().unwrap()]);
    assert_eq!(v["class_gamma"], false);
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn out_flag_writes_file() {
    let dir = std::env::temp_dir().join(format!("macfb-out-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("g.json");
    let out = macfb(&["gains", "--out", path.to_str().unwrap()]);
    assert!(out.status.success());
    assert!(out.stdout.is_empty());
    assert_eq!(std::fs::read_to_string(&path).unwrap(), stdout(&["gains"]));
    std::fs::remove_dir_all(&dir).unwrap();
}

fn expect_exit(args: &[&str], code: i32, needle: &str) {
    let out = macfb(args);
    let err = String::from_utf8_lossy(&out.stderr);
    assert_eq!(out.status.code(), Some(code), "{args:?}: {err}");
    assert!(err.contains(needle), "{args:?}: {err}");
}

#[test]
fn invalid_flags_exit_2_and_name_the_flag() {
    expect_exit(&["gains", "--noise", "-1"], 2, "--noise");
    expect_exit(&["gains", "--p1", "-3"], 2, "--p1");
    expect_exit(&["region", "--grid", "1"], 2, "--grid");
    expect_exit(&["hybrid", "--alpha", "1.5"], 2, "--alpha");
    expect_exit(&["hybrid", "--splitter", "3"], 2, "--splitter");
    expect_exit(&["simulate", "--n", "20", "--r1", "5"], 2, "--r1");
    expect_exit(&["simulate", "--trials", "0"], 2, "--trials");
    expect_exit(&["simulate", "--state-var", "-1"], 2, "--state-var");
    expect_exit(&["decay", "--n", "10"], 2, "--n");
    expect_exit(&["dm-inner", "--channel", "erasure", "--q", "2"], 2, "--q");
    expect_exit(&["dm-inner", "--card-v1", "0"], 2, "--card-v1");
    expect_exit(&["dm-inner", "--channel", "/no/such/file.json"], 2, "--channel");
    expect_exit(&["dm-outer", "--budget", "0"], 2, "--budget");
}

#[test]
fn non_convergence_exits_3() {
    expect_exit(&["gains", "--p1", "1e12", "--p2", "1e-12"], 3, "converge");
}
