use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn sim(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_xpass-sim"))
        .args(args)
        .arg("--out")
        .arg(out)
        .env_remove("XPASS_OUT")
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn first_line(path: &Path) -> String {
    fs::read_to_string(path).unwrap().lines().next().unwrap_or("").to_string()
}

const SHORT: [&str; 4] = ["--set", "run.duration=2ms", "--set", "run.warmup=500us"];

#[test]
fn presets_lists_every_name() {
    let o = Command::new(env!("CARGO_BIN_EXE_xpass-sim")).arg("presets").output().unwrap();
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    for name in xpass_core::presets::names() {
        assert!(text.contains(name), "{name} missing from\n{text}");
    }
}

#[test]
fn unknown_preset_exits_2_and_lists_presets() {
    let dir = tempfile::tempdir().unwrap();
    let o = sim(&["run", "--preset", "fig99"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("fig7-convergence") && err.contains("table1-macro"), "{err}");
}

#[test]
fn config_errors_point_at_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "seed = 4\n\n[net]\ncredit_queue_pkts = \"many\"\n").unwrap();
    let o = sim(&["run", "--config", cfg.to_str().unwrap()], &dir.path().join("out"));
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("line 4") && err.contains("bad.toml"), "{err}");

    fs::write(&cfg, "[dumbbell]\nflows = 2\nwidth = 3\n").unwrap();
    let o = sim(&["run", "--config", cfg.to_str().unwrap()], &dir.path().join("out"));
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("line 3") && err.contains("width"), "{err}");
}

#[test]
fn bad_set_and_bad_scale_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    for args in [
        vec!["run", "--set", "xpass.jiter=0.1"],
        vec!["run", "--set", "net.rate=fast"],
        vec!["run", "--scale", "huge"],
        vec!["run", "--preset", "fig7-convergence", "--n", "3"],
        vec!["run", "--repeats", "0"],
    ] {
        let o = sim(&args, dir.path());
        assert_eq!(o.status.code(), Some(2), "{args:?}: {}", stderr(&o));
    }
}

#[test]
fn empty_sweep_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = sim(&["sweep", "--param", "net.credit_queue_pkts", "--values", ""], dir.path());
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(stderr(&o).contains("no values"));
}

#[test]
fn run_writes_the_documented_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("conv");
    let o = sim(&["run", "--preset", "fig7-convergence", "--rate", "10G", "--seed", "1"], &out);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(first_line(&out.join("flows.csv")), "flow_id,src,dst,size,start_ps,fct_ps,wasted_credits,frag_bytes");
    assert_eq!(
        first_line(&out.join("ports.csv")),
        "time_ps,port_id,qdepth_data_B,qdepth_credit_pkts,credit_drops,data_drops"
    );
    assert_eq!(first_line(&out.join("rates.csv")), "time_ps,flow_id,rate_bps");
    assert!(first_line(&out.join("summary.csv")).starts_with("seed,fair_bps,convergence_s"));
    let rates = fs::read_to_string(out.join("rates.csv")).unwrap();
    assert!(rates.lines().count() > 40, "two flows sampled every 100us for 4ms");

    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["preset"], "fig7-convergence");
    assert_eq!(manifest["seeds"][0], 1);
    assert_eq!(manifest["config_sha256"].as_str().unwrap().len(), 64);
    assert!(manifest["files"]["rates.csv"].is_string());
    assert!(manifest["version"].is_string());
}

#[test]
fn config_file_sets_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("pl.toml");
    fs::write(&cfg, "scenario = \"parking-lot\"\n\n[parking_lot]\nbottlenecks = 3\n\n[run]\nduration = \"2ms\"\nwarmup = \"500us\"\n").unwrap();
    let out = dir.path().join("out");
    let o = sim(&["run", "--config", cfg.to_str().unwrap()], &out);
    assert!(o.status.success(), "{}", stderr(&o));
    let summary = fs::read_to_string(out.join("summary.csv")).unwrap();
    assert!(summary.lines().next().unwrap().contains("link3_util"), "{summary}");
}

#[test]
fn same_seed_gives_identical_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let args = ["run", "--preset", "fig3-parkinglot", "--seed", "5", SHORT[0], SHORT[1], SHORT[2], SHORT[3]];
    assert!(sim(&args, &a).status.success());
    assert!(sim(&args, &b).status.success());
    for f in ["flows.csv", "ports.csv", "rates.csv", "summary.csv", "manifest.json"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn repeats_use_consecutive_seeds() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("rep");
    let args = ["run", "--preset", "fig4-creditq", "--seed", "3", "--repeats", "2", SHORT[0], SHORT[1], SHORT[2], SHORT[3]];
    let o = sim(&args, &out);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(out.join("seed-3/rates.csv").is_file());
    assert!(out.join("seed-4/rates.csv").is_file());
    let summary = fs::read_to_string(out.join("summary.csv")).unwrap();
    let seeds: Vec<&str> = summary.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(seeds, ["3", "4"]);
}

#[test]
fn sweep_writes_one_directory_per_value() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sw");
    let args = ["sweep", "--param", "net.credit_queue_pkts", "--values", "1,4,16", "--preset", "fig4-creditq", SHORT[0], SHORT[1], SHORT[2], SHORT[3]];
    let o = sim(&args, &out);
    assert!(o.status.success(), "{}", stderr(&o));
    for v in ["1", "4", "16"] {
        let sub = out.join(format!("net.credit_queue_pkts={v}"));
        assert!(sub.join("flows.csv").is_file(), "{v}");
        let cfg = fs::read_to_string(sub.join("config.toml")).unwrap();
        assert!(cfg.contains(&format!("credit_queue_pkts = {v}")), "{cfg}");
    }
    let summary = fs::read_to_string(out.join("summary.csv")).unwrap();
    let lines: Vec<&str> = summary.lines().collect();
    assert!(lines[0].starts_with("param,value,seed,flows,goodput_bps,utilization"));
    assert_eq!(lines.len(), 4);
    let util = |l: &str| -> f64 { l.split(',').nth(5).unwrap().parse().unwrap() };
    assert!(util(lines[1]) < util(lines[3]), "{summary}");
}

#[test]
fn data_loss_under_credit_pacing_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let args = [
        "run", "--preset", "fig8-shuffle", "--n", "4",
        "--set", "shuffle.bytes=200000",
        "--set", "net.data_queue_bytes=1538",
    ];
    let o = sim(&args, dir.path());
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(stderr(&o).contains("invariant violated"), "{}", stderr(&o));
    assert!(dir.path().join("summary.csv").is_file(), "artifacts are still written");
}

#[test]
fn out_dir_defaults_from_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let target = dir.path().join("from-env");
    let o = Command::new(env!("CARGO_BIN_EXE_xpass-sim"))
        .args(["run", "--preset", "fig2-naive", SHORT[0], SHORT[1], SHORT[2], SHORT[3]])
        .env("XPASS_OUT", &target)
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(target.join("manifest.json").is_file());
}

#[test]
fn show_config_round_trips() {
    let o = Command::new(env!("CARGO_BIN_EXE_xpass-sim"))
        .args(["show-config", "--preset", "fig9-manyflows", "--scale", "4"])
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    let text = String::from_utf8(o.stdout).unwrap();
    let cfg = xpass_core::config::Config::from_toml(&text).unwrap();
    assert_eq!(cfg.dumbbell.flows, 256);
}
