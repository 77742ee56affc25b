use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn nomamec(args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_nomamec"));
    cmd.args(args);
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

fn write_config(dir: &Path, text: &str) -> String {
    let p = dir.join("cfg.txt");
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

const SMALL: &str = "n_users = 2\nn_tasks = 3\nn_freq_slices = 2\nc_cache_slots = 1\nhorizon_slots = 20\n";

#[test]
fn simulate_writes_results_and_aggregates() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = dir.path().join("out");
    let o = nomamec(
        &[
            "simulate", "--config", &cfg, "--algorithm", "saq,full-local,conventional-mec", "--sweep",
            "c_cache_slots=0,1,2", "--seeds", "1,2", "--out", out.to_str().unwrap(), "--episodes", "20",
        ],
        &[],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let results = fs::read_to_string(out.join("results.csv")).unwrap();
    assert_eq!(results.lines().count(), 1 + 3 * 3 * 2);
    assert!(results.starts_with("scenario,algorithm,sweep_var,sweep_value,seed,mean_energy_j"));
    assert!(out.join("fig_energy_vs_cache.csv").exists());
    assert!(out.join("fig_convergence.csv").exists());
}

#[test]
fn reruns_without_timing_are_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let run = |name: &str| {
        let out = dir.path().join(name);
        let o = nomamec(
            &[
                "simulate", "--config", &cfg, "--algorithm", "saq,bla-maq", "--seeds", "3", "--out",
                out.to_str().unwrap(), "--episodes", "10", "--no-wall-time", "--formula-mode", "printed",
                "--table2-strict=false",
            ],
            &[],
        );
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        fs::read(out.join("results.csv")).unwrap()
    };
    assert_eq!(run("a"), run("b"));
}

#[test]
fn config_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let out = out.to_str().unwrap();
    let missing = dir.path().join("absent.txt");
    let o = nomamec(&["simulate", "--config", missing.to_str().unwrap(), "--out", out], &[]);
    assert_eq!(o.status.code(), Some(2));
    let bad = write_config(dir.path(), "n_users = 0\n");
    assert_eq!(nomamec(&["simulate", "--config", &bad, "--out", out], &[]).status.code(), Some(2));
    let cfg = write_config(dir.path(), SMALL);
    let o = nomamec(&["simulate", "--config", &cfg, "--out", out, "--sweep", "c_mec_hz=2e10,1e10"], &[]);
    assert_eq!(o.status.code(), Some(2));
    let o = nomamec(&["simulate", "--config", &cfg, "--out", out, "--seeds", "1,1"], &[]);
    assert_eq!(o.status.code(), Some(2));
    let o = nomamec(&["simulate", "--config", &cfg, "--out", out, "--algorithm", "greedy"], &[]);
    assert_eq!(o.status.code(), Some(2));
    let o = nomamec(&["simulate", "--config", &cfg, "--out", out], &[("NOMAMEC_N_TASKS", "many")]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn numeric_errors_exit_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let o = nomamec(&["convergence", "--r1", "0.5", "--r2", "0.5", "--out", dir.path().join("c.csv").to_str().unwrap()], &[]);
    assert_eq!(o.status.code(), Some(2));
    let o = nomamec(
        &["lstm", "--out", dir.path().to_str().unwrap(), "--length", "40", "--epochs", "5", "--lr", "1e9", "--optimizer", "sgd", "--no-clip"],
        &[("NOMAMEC_N_TASKS", "4")],
    );
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn environment_overrides_apply() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let o = nomamec(&["config", "--config", &cfg], &[("NOMAMEC_C_MEC_HZ", "4e10"), ("NOMAMEC_N_USERS", "3")]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("c_mec_hz = 4e10"), "{text}");
    assert!(text.contains("n_users = 3"));
    assert!(text.contains("n_tasks = 3"));
}

#[test]
fn lstm_maq_and_convergence_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let o = nomamec(&["lstm", "--out", d, "--length", "60", "--epochs", "4"], &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let loss = fs::read_to_string(dir.path().join("lstm_loss.csv")).unwrap();
    assert_eq!(loss.lines().count(), 5);
    assert!(dir.path().join("lstm_weights.bin").exists());

    let cfg = write_config(dir.path(), SMALL);
    let o = nomamec(&["maq", "--config", &cfg, "--out", d, "--episodes", "3"], &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let arms = fs::read_to_string(dir.path().join("arms.csv")).unwrap();
    assert!(arms.starts_with("agent,state_bin,a1,b1,a2,b2"));
    assert_eq!(arms.lines().count(), 1 + 2 * 8);

    let c = dir.path().join("conv.csv");
    let o = nomamec(&["convergence", "--r1", "0.9", "--r2", "0.6", "--steps", "50", "--out", c.to_str().unwrap()], &[]);
    assert!(o.status.success());
    let traj = fs::read_to_string(c).unwrap();
    assert!(traj.starts_with("step,p_local_closed_form,action_taken"));
    assert_eq!(traj.lines().count(), 51);
}
