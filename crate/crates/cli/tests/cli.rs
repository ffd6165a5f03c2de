use std::path::Path;
use std::process::{Command, Output};

fn adimpact(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_adimpact"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("run adimpact")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn synth(dir: &Path, seed: &str, out: &str) -> std::path::PathBuf {
    let o = adimpact(&["synth", "--seed", seed, "--days", "365", "-o", out], dir);
    assert!(o.status.success(), "{}", stderr(&o));
    dir.join(out).join("synth.csv")
}

#[test]
fn synth_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let a = std::fs::read(synth(dir.path(), "7", "a")).unwrap();
    let b = std::fs::read(synth(dir.path(), "7", "b")).unwrap();
    let c = std::fs::read(synth(dir.path(), "8", "c")).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn staged_run_matches_all() {
    let dir = tempfile::tempdir().unwrap();
    let input = synth(dir.path(), "3", "data");
    let input = input.to_str().unwrap();
    for stage in ["ingest-check", "design", "match", "balance", "impact"] {
        let o = adimpact(&[stage, "-i", input, "-o", "staged"], dir.path());
        assert!(o.status.success(), "{stage}: {}", stderr(&o));
    }
    let o = adimpact(&["all", "-i", input, "-o", "chained"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(String::from_utf8_lossy(&o.stdout).contains("All causes"));
    for f in [
        "matchmap.json",
        "balance.csv",
        "impact.csv",
        "sensitivity.txt",
    ] {
        let a = std::fs::read(dir.path().join("staged").join(f)).unwrap();
        let b = std::fs::read(dir.path().join("chained").join(f)).unwrap();
        assert_eq!(a, b, "{f}");
    }
}

#[test]
fn balance_requires_match_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let input = synth(dir.path(), "1", "data");
    let input = input.to_str().unwrap();
    assert!(adimpact(&["design", "-i", input, "-o", "out"], dir.path())
        .status
        .success());
    let o = adimpact(&["balance", "-i", input, "-o", "out"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("matchmap.json"), "{}", stderr(&o));
}

#[test]
fn threshold_above_max_exposure() {
    let dir = tempfile::tempdir().unwrap();
    let input = synth(dir.path(), "1", "data");
    let o = adimpact(
        &[
            "design",
            "-i",
            input.to_str().unwrap(),
            "-o",
            "out",
            "--threshold",
            "100000",
        ],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("no treated days"), "{}", stderr(&o));
}

#[test]
fn config_file_and_errors() {
    let dir = tempfile::tempdir().unwrap();
    let input = synth(dir.path(), "2", "data");
    std::fs::write(
        dir.path().join("run.toml"),
        format!(
            "input = {:?}\noutput_dir = \"cfg\"\nsensitivity = \"none\"\n",
            input
        ),
    )
    .unwrap();
    let o = adimpact(&["all", "-c", "run.toml"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(dir.path().join("cfg/impact.txt").exists());
    assert!(!dir.path().join("cfg/sensitivity.txt").exists());

    std::fs::write(dir.path().join("bad.toml"), "threshhold = 3\n").unwrap();
    assert_eq!(
        adimpact(&["all", "-c", "bad.toml"], dir.path())
            .status
            .code(),
        Some(2)
    );

    std::fs::write(dir.path().join("bad.csv"), "date,exposure\n2004-01-01,3\n").unwrap();
    let o = adimpact(&["ingest-check", "-i", "bad.csv"], dir.path());
    assert_eq!(o.status.code(), Some(2));
}
