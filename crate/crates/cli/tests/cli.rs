use std::path::Path;
use std::process::Command;

use twotemp_cli::commands;
use twotemp_cli::verify::{self, Status};
use twotemp_cli::RunConfig;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_twotemp"));
    c.env_remove("TWOTEMP_OUT");
    c
}

fn write_config(dir: &Path, text: &str) -> std::path::PathBuf {
    let p = dir.join("run.toml");
    std::fs::write(&p, text).unwrap();
    p
}

#[test]
fn corrupted_c_s_fails_the_frequency_check() {
    let cfg = RunConfig::from_toml("[gas]\nc_s = 2.0\n").unwrap();
    let r = verify::run(&cfg, &[3], |_| {}).unwrap();
    assert_eq!(r[0].status, Status::Fail, "{:?}", r[0]);
    let clean = verify::run(&RunConfig::default(), &[3], |_| {}).unwrap();
    assert_eq!(clean[0].status, Status::Pass, "{:?}", clean[0]);
}

#[test]
fn theta_zero_skips_inelastic_checks() {
    let cfg = RunConfig::from_toml("[gas]\ntheta = 0.0\n").unwrap();
    let r = verify::run(&cfg, &[1, 4, 5, 9, 10, 12], |_| {}).unwrap();
    assert_eq!(r[0].status, Status::Pass);
    for c in &r[1..] {
        assert_eq!(c.status, Status::Skip, "{}", c.id);
    }
}

#[test]
fn alpha_zero_reports_zero_cross_coefficients() {
    let cfg = RunConfig::from_toml("[gas]\nalpha = 0.0\nbeta = 1.0\n[numerics]\nn_c = 5\nn_i = 3\n[task.coeffs]\nwith_k = false\n").unwrap();
    let r = commands::coeffs(&cfg).unwrap();
    assert_eq!(r.coefficients[2].value, 0.0);
    assert_eq!(r.coefficients[3].value, 0.0);
    assert!(r.coefficients[2].uncertainty > 0.0);
}

#[test]
fn maxwell_molecules_match_closed_form() {
    let cfg = RunConfig::from_toml("[gas]\ndelta = 3.0\nalpha = 0.0\nbeta = 0.0\n").unwrap();
    let r = commands::coeffs(&cfg).unwrap();
    let st = cfg.macro_state().unwrap();
    let gas = cfg.gas_model().unwrap();
    let cf = twotemp::chapman_enskog::maxwell_coefficients(&st, &gas).unwrap();
    assert!((r.coefficients[4].value / cf.lambda_int_int - 1.0).abs() < 1e-10);
    assert!(r.coefficients.iter().find(|c| c.name == "k_relax").unwrap().value.abs() < 1e-8);
}

#[test]
fn same_seed_same_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[numerics]\nn_c = 2\nn_i = 2\ngram = \"monte-carlo\"\nmc_samples = 200000\nmc_budget = 0.5\n[task.coeffs]\nwith_k = false\n");
    let mut outputs = Vec::new();
    for run in ["a", "b"] {
        let out = dir.path().join(run);
        let st = bin().args(["coeffs", "--config"]).arg(&cfg).arg("--out").arg(&out).args(["--seed", "5"]).status().unwrap();
        assert!(st.success());
        outputs.push(["coeffs.json", "coeffs.csv", "coeffs.manifest.json"].map(|f| std::fs::read(out.join(f)).unwrap()));
    }
    assert_eq!(outputs[0], outputs[1]);
    let manifest: serde_json::Value = serde_json::from_slice(&outputs[0][2]).unwrap();
    assert_eq!(manifest["seed"], 5);
    assert_eq!(manifest["config"]["numerics"]["mc_samples"], 200000);
}

#[test]
fn relax_without_inelastic_collisions_is_flat() {
    let cfg = RunConfig::from_toml("[gas]\ntheta = 0.0\nalpha = 0.0\nbeta = 0.0\n[task.relax]\nt_end = 1.0\nsnapshots = 4\nparticles = 10000\nreplicas = 2\n").unwrap();
    let r = commands::relax(&cfg).unwrap();
    for row in &r.rows {
        assert_eq!((row.t_tr_ode, row.t_int_ode), (2.0, 1.0));
        assert!((row.t_int_dsmc.unwrap() - 1.0).abs() < 1e-12, "{row:?}");
        assert!((row.t_tr_fluid.unwrap() - 2.0).abs() < 1e-12);
    }
}

#[test]
fn relax_dsmc_and_fluid_follow_the_ode() {
    let cfg = RunConfig::from_toml("[gas]\ntheta = 0.2\nalpha = 0.0\nbeta = 0.0\n[task.relax]\nt_end = 2.0\nsnapshots = 5\nparticles = 20000\nreplicas = 4\n").unwrap();
    let r = commands::relax(&cfg).unwrap();
    assert!(r.dsmc_max_z.unwrap() < 4.0, "{:?}", r.dsmc_max_z);
    assert!(r.fluid_max_abs_error.unwrap() < 1e-10);
}

#[test]
fn shock_reports_rankine_hugoniot_row() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[gas]\nalpha = 0.0\nbeta = 0.0\ntheta = 1.0\n[state]\nt_tr = 1.0\nt_int = 1.0\n");
    let st = bin().arg("shock").arg("--config").arg(&cfg).arg("--out").arg(dir.path()).status().unwrap();
    assert!(st.success());
    let j: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.path().join("shock.json")).unwrap()).unwrap();
    assert!((j["expected_ratio"].as_f64().unwrap() - 8.0 / 3.0).abs() < 1e-12);
    assert!(j["relative_error"].as_f64().unwrap() < 1e-4);
    let csv = std::fs::read_to_string(dir.path().join("shock.csv")).unwrap();
    assert!(csv.starts_with("x,rho,u,t_tr,t_int,p,q_tr,q_int\n"), "{}", &csv[..60]);
}

#[test]
fn riemann_tracks_frozen_solution_without_exchange() {
    let cfg = RunConfig::from_toml("[gas]\nalpha = 0.0\nbeta = 0.0\n[numerics]\neps = 1e-8\nkappa = 0.0\nscaling_mode = \"eps2\"\nviscous = false\ncfl = 0.4\n").unwrap();
    let r = commands::riemann(&cfg).unwrap();
    assert!(r.l1_frozen < 0.02, "{}", r.l1_frozen);
    assert!(r.l1_frozen < r.l1_equilibrium);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write_config(dir.path(), "[gas]\nunknown = 1\n");
    assert_eq!(bin().arg("coeffs").arg("--config").arg(&bad).arg("--out").arg(dir.path()).status().unwrap().code(), Some(2));
    let wrong_task = write_config(dir.path(), "[task]\nkind = \"shock\"\n");
    assert_eq!(bin().arg("coeffs").arg("--config").arg(&wrong_task).arg("--out").arg(dir.path()).status().unwrap().code(), Some(2));
    let fault = write_config(dir.path(), "[gas]\nc_s = 2.0\n[task.verify]\nchecks = [3]\n");
    assert_eq!(bin().arg("verify").arg("--config").arg(&fault).arg("--out").arg(dir.path()).status().unwrap().code(), Some(4));
    let stalled = write_config(dir.path(), "[gas]\nalpha = 0.0\nbeta = 0.0\n[task.shock]\nt_max = 0.5\ntol = 1e-12\n");
    assert_eq!(bin().arg("shock").arg("--config").arg(&stalled).arg("--out").arg(dir.path()).status().unwrap().code(), Some(3));
}

#[test]
fn output_directory_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[numerics]\nn_c = 3\nn_i = 2\n[task.coeffs]\nwith_k = false\n[output]\nformats = [\"json\"]\n");
    let st = bin().arg("coeffs").arg("--config").arg(&cfg).env("TWOTEMP_OUT", dir.path().join("env")).status().unwrap();
    assert!(st.success());
    assert!(dir.path().join("env/coeffs.json").exists());
    assert!(!dir.path().join("env/coeffs.csv").exists());
}
