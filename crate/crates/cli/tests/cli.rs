use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn ionxy(args: &[&str], config: Option<&str>, out: &Path) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_ionxy"));
    cmd.args(args).arg("--out").arg(out);
    if let Some(text) = config {
        let path = out.with_extension("cfg");
        fs::write(&path, text).unwrap();
        cmd.arg("--config").arg(path);
    }
    cmd.output().unwrap()
}

fn data_rows(path: &Path) -> Vec<Vec<String>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

#[test]
fn chain_three_ions() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("c3");
    assert_eq!(ionxy(&["chain"], None, &out).status.code(), Some(0));
    let rows = data_rows(&out.join("positions.csv"));
    let x: Vec<f64> = rows.iter().map(|r| r[1].parse().unwrap()).collect();
    assert_eq!(x.len(), 3);
    assert!((x[0] + 1.0772).abs() < 1e-4 && x[1].abs() < 1e-12 && (x[2] - 1.0772).abs() < 1e-4);
    let doc: serde_json::Value = serde_json::from_slice(&fs::read(out.join("chain.json")).unwrap()).unwrap();
    assert_eq!(doc["data"]["chain"]["n_ions"], 3);
    assert!(doc["header"]["config_hash"].as_str().unwrap().len() == 64);
}

#[test]
fn chain_single_ion() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("c1");
    assert_eq!(ionxy(&["chain"], Some("n_ions = 1\n"), &out).status.code(), Some(0));
    let rows = data_rows(&out.join("positions.csv"));
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0][1].parse::<f64>().unwrap(), 0.0);
}

#[test]
fn unknown_key_exits_with_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let out = ionxy(&["chain"], Some("n_ion = 3\n"), &tmp.path().join("bad"));
    assert_eq!(out.status.code(), Some(2));
    let msg = String::from_utf8_lossy(&out.stderr);
    assert!(msg.contains("n_ion") && msg.contains("valid keys") && msg.contains("n_ions"));
}

#[test]
fn empty_n_list_is_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    let out = ionxy(&["transfer"], Some("n_list =\n"), &tmp.path().join("empty"));
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_command_and_conflicting_preset_are_usage_errors() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(ionxy(&[], None, &tmp.path().join("a")).status.code(), Some(2));
    assert_eq!(ionxy(&["chain", "--paper-fig", "4"], None, &tmp.path().join("b")).status.code(), Some(2));
    assert_eq!(ionxy(&["chain", "--format", "xml"], None, &tmp.path().join("c")).status.code(), Some(2));
}

#[test]
fn unstable_chain_is_numerical_failure() {
    let tmp = tempfile::tempdir().unwrap();
    let out = ionxy(&["chain"], Some("n_ions = 20\nomega_z_mhz = 3\n"), &tmp.path().join("zz"));
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn alpha_scan_single_point_gives_one_row() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("scan");
    assert_eq!(ionxy(&["alpha-scan"], Some("mu_points = 1\n"), &out).status.code(), Some(0));
    assert_eq!(data_rows(&out.join("alpha_scan.csv")).len(), 1);
}

#[test]
fn alpha_scan_is_monotone_for_ten_ions() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("scan10");
    assert_eq!(ionxy(&["alpha-scan"], Some("mu_points = 25\nmu_max_mhz = 6.3\n"), &out).status.code(), Some(0));
    let alpha: Vec<f64> = data_rows(&out.join("alpha_scan.csv")).iter().map(|r| r[1].parse().unwrap()).collect();
    assert_eq!(alpha.len(), 25);
    assert!(alpha.windows(2).all(|w| w[1] > w[0]), "{alpha:?}");
}

#[test]
fn paper_fig_four_columns_and_csv_dialect() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("f4");
    let cfg = "n_list = 8, 12\nalpha_target = 0.2\n";
    assert_eq!(ionxy(&["--paper-fig", "4"], Some(cfg), &out).status.code(), Some(0));
    let text = fs::read_to_string(out.join("transfer.csv")).unwrap();
    assert!(!text.contains('\r'));
    let lines: Vec<&str> = text.lines().collect();
    assert!(lines[0].starts_with("# tool: ionxy") && lines[2].starts_with("# config_hash: ") && lines[3] == "# seed: 0");
    assert!(lines[4].starts_with("N,alpha_target,alpha_achieved,F_exp,F_ideal,T_tilde"));
    assert_eq!(lines.len(), 7);
}

#[test]
fn noise_columns() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("noise");
    let cfg = "n_list = 8\nn_samples = 20\n";
    assert_eq!(ionxy(&["noise", "--seed", "9"], Some(cfg), &out).status.code(), Some(0));
    let text = fs::read_to_string(out.join("noise.csv")).unwrap();
    assert!(text.contains("# seed: 9\nN,alpha_target,mean_F,std_F,n_samples,t2,"));
    let rows = data_rows(&out.join("noise.csv"));
    assert_eq!(rows[0][4], "20");
    assert_eq!(rows[0][5].parse::<f64>().unwrap(), 0.01);
}

#[test]
fn short_leakage_trace_columns() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("leak");
    let cfg = "n_ions = 4\nalpha_target = 0.4\nperiods = 2\nsamples = 41\nfidelity = true\n";
    assert_eq!(ionxy(&["leakage"], Some(cfg), &out).status.code(), Some(0));
    let text = fs::read_to_string(out.join("leakage.csv")).unwrap();
    assert!(text.contains("\nt,E_sim,E_norm,E_norm_shifted,n_bar\n"));
    assert_eq!(data_rows(&out.join("leakage.csv")).len(), 41);
    let f = data_rows(&out.join("fidelity.csv"));
    assert!(f.iter().any(|r| r[3] == "1"));
}
