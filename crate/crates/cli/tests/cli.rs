use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn equivcheck(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_equivcheck"))
        .args(args)
        .env_remove("EQUIVCHECK_JOBS")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

/// Write the demo inputs and shrink the sampler so runs take seconds.
fn demo(dir: &Path) -> PathBuf {
    let d = dir.to_str().unwrap();
    let o = equivcheck(&["demo", "--out", d, "--seed", "5"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let cfg = dir.join("config.toml");
    let text = fs::read_to_string(&cfg)
        .unwrap()
        .replace("chains = 4", "chains = 2")
        .replace("draws_per_chain = 2000", "draws_per_chain = 200")
        .replace("warmup = 1000", "warmup = 200");
    fs::write(&cfg, text).unwrap();
    cfg
}

/// Same config with every ROPE replaced by `[lo, hi]`.
fn with_ropes(cfg: &Path, name: &str, lo: f64, hi: f64) -> PathBuf {
    let text = fs::read_to_string(cfg).unwrap();
    let out: Vec<String> = text
        .lines()
        .map(|l| {
            if l.starts_with("rope = ") {
                format!("rope = [{lo:?}, {hi:?}]")
            } else {
                l.to_string()
            }
        })
        .collect();
    let path = cfg.with_file_name(name);
    fs::write(&path, out.join("\n")).unwrap();
    path
}

#[test]
fn exit_codes_follow_the_verdict() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = demo(tmp.path());
    let out = tmp.path().join("out");
    let (c, o) = (cfg.to_str().unwrap(), out.to_str().unwrap());

    let run = equivcheck(&["run", "--config", c, "--out", o, "--jobs", "1"]);
    let status = code(&run);
    assert!(status == 0 || status == 10, "run exited {status}: {}", String::from_utf8_lossy(&run.stderr));
    let md = String::from_utf8(run.stdout).unwrap();
    assert!(md.contains("| Metric | Model (reference) | Model (candidate) | Statistic | 95% HDI | ROPE | Equivalence |"));
    assert!(out.join("report.json").is_file());
    assert!(out.join("report.md").is_file());

    let wide = with_ropes(&cfg, "wide.toml", -100.0, 100.0);
    let r = equivcheck(&["decide", "--config", wide.to_str().unwrap(), "--out", o]);
    assert_eq!(code(&r), 0, "{}", String::from_utf8_lossy(&r.stderr));

    let narrow = with_ropes(&cfg, "narrow.toml", 0.4, 0.400001);
    let r = equivcheck(&["run", "--stage", "decide", "--config", narrow.to_str().unwrap(), "--out", o]);
    assert_eq!(code(&r), 10, "{}", String::from_utf8_lossy(&r.stderr));
    assert!(String::from_utf8_lossy(&r.stdout).contains("not practically equivalent"));
}

#[test]
fn configuration_errors_exit_11() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = demo(tmp.path());
    let c = cfg.to_str().unwrap();

    let broken = with_ropes(&cfg, "broken.toml", 1.0, -1.0);
    let r = equivcheck(&["extract", "--config", broken.to_str().unwrap()]);
    assert_eq!(code(&r), 11);
    assert!(String::from_utf8_lossy(&r.stderr).contains("ROPE"));

    let r = equivcheck(&["run", "--stage", "polish", "--config", c]);
    assert_eq!(code(&r), 11);

    let r = equivcheck(&["fit", "--config", c, "--metric", "speed"]);
    assert_eq!(code(&r), 11);

    let missing = tmp.path().join("nope.toml");
    let r = equivcheck(&["extract", "--config", missing.to_str().unwrap()]);
    assert_ne!(code(&r), 0);
}

#[test]
fn missing_artifacts_exit_12() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = demo(tmp.path());
    let empty = tmp.path().join("empty");
    let r = equivcheck(&["decide", "--config", cfg.to_str().unwrap(), "--out", empty.to_str().unwrap()]);
    assert_eq!(code(&r), 12);
    assert!(String::from_utf8_lossy(&r.stderr).contains("statistics"));

    let r = equivcheck(&["ks", "--config", cfg.to_str().unwrap(), "--out", empty.to_str().unwrap()]);
    assert_eq!(code(&r), 12);
    assert!(String::from_utf8_lossy(&r.stderr).contains("metrics"));
}
