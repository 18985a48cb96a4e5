use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn mbnsep(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mbnsep"))
        .args(args)
        .current_dir(cwd)
        .env("MBNSEP_THREADS", "2")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str], cwd: &Path) -> String {
    let out = mbnsep(args, cwd);
    assert!(
        out.status.success(),
        "mbnsep {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn fail(args: &[&str], cwd: &Path) -> String {
    let out = mbnsep(args, cwd);
    assert!(!out.status.success(), "mbnsep {args:?} unexpectedly succeeded");
    String::from_utf8(out.stderr).unwrap()
}

const MANIFEST: &str = "id,sources,delays,sir_db,t60,seed,duration
a,synth:1;synth:2,2;-2,0,0,5,0.5
b,synth:3;synth:4,1;-3,0,0,6,0.5
";

const CONFIG: &str = "seed = 3\n[mbn]\nclusterings = 60\n[separate]\nrestarts = 4\n";

fn setup(root: &Path) -> PathBuf {
    std::fs::write(root.join("manifest.csv"), MANIFEST).unwrap();
    std::fs::write(root.join("cfg.toml"), CONFIG).unwrap();
    let out = root.join("out");
    ok(&["mix", "--manifest", "manifest.csv", "--out-dir", "out", "--config", "cfg.toml"], root);
    ok(&["features", "--manifest", "manifest.csv", "--out-dir", "out", "--config", "cfg.toml"], root);
    out
}

fn chain(root: &Path, sigma: &str, extra: &[&str]) -> String {
    let base = ["--manifest", "manifest.csv", "--out-dir", "out", "--config", "cfg.toml"];
    let mut embed = vec!["embed", "--oracle", "--sigma", sigma];
    embed.extend(base);
    ok(&embed, root);
    let mut sep = vec!["separate"];
    sep.extend(base);
    sep.extend(extra);
    ok(&sep, root);
    let mut ev = vec!["eval"];
    ev.extend(base);
    ok(&ev, root);
    std::fs::read_to_string(root.join("out").join("report.csv")).unwrap()
}

#[test]
fn mixture_directory_layout() {
    let tmp = tempfile::tempdir().unwrap();
    let out = setup(tmp.path());
    for id in ["a", "b"] {
        for f in ["mixture.wav", "ref_0.wav", "ref_1.wav", "mix.toml", "features.mbnt"] {
            assert!(out.join(id).join(f).is_file(), "{id}/{f}");
        }
    }
}

#[test]
fn noiseless_oracle_gives_perfect_masks_and_reports_repeat() {
    let tmp = tempfile::tempdir().unwrap();
    setup(tmp.path());
    let first = chain(tmp.path(), "0", &[]);
    for line in first.lines().skip(1) {
        let cols: Vec<&str> = line.split(',').collect();
        assert_eq!(cols[6], "1.000000", "mask accuracy in {line}");
        assert!(cols[5].parse::<f64>().unwrap() > 0.0, "improvement in {line}");
    }
    let second = chain(tmp.path(), "0", &[]);
    assert_eq!(first, second);
}

#[test]
fn seeded_runs_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    setup(a.path());
    setup(b.path());
    let ra = chain(a.path(), "0.3", &[]);
    let rb = chain(b.path(), "0.3", &[]);
    assert_eq!(ra, rb);
    for f in ["est_0.wav", "est_1.wav", "labels.mbnt", "mvectors.mbnt", "embeddings.mbnt"] {
        assert_eq!(
            std::fs::read(a.path().join("out/a").join(f)).unwrap(),
            std::fs::read(b.path().join("out/a").join(f)).unwrap(),
            "{f}"
        );
    }
    // The ablation switches run and change the clustering input.
    let raw = chain(a.path(), "0.3", &["--no-mbn", "--no-vad"]);
    assert_eq!(raw.lines().count(), ra.lines().count());
}

#[test]
fn mbn_fit_reports_one_hidden_layer_at_defaults() {
    let tmp = tempfile::tempdir().unwrap();
    let out = setup(tmp.path());
    ok(&["embed", "--oracle", "--input", "out/a", "--sigma", "0.3"], tmp.path());
    let stdout = ok(
        &["mbn", "fit", "--input", "out/a/embeddings.mbnt", "--model", "m.mbnm", "--output", "fit.mbnt"],
        tmp.path(),
    );
    assert!(stdout.contains("1 hidden layer(s), k schedule [20]"), "{stdout}");
    ok(&["mbn", "transform", "--model", "m.mbnm", "--input", "out/a/embeddings.mbnt", "--output", "t.mbnt"], tmp.path());
    assert_eq!(
        std::fs::read(tmp.path().join("fit.mbnt")).unwrap(),
        std::fs::read(tmp.path().join("t.mbnt")).unwrap()
    );

    std::fs::write(tmp.path().join("deep.toml"), "mbn.k1 = 100\nmbn.delta = 0.5\n").unwrap();
    let deep = ok(
        &["mbn", "fit", "--input", "out/a/embeddings.mbnt", "--model", "d.mbnm", "--config", "deep.toml"],
        tmp.path(),
    );
    assert!(deep.contains("5 hidden layer(s), k schedule [100, 50, 25, 12, 6]"), "{deep}");
    assert!(out.join("a").is_dir());
}

#[test]
fn viz_writes_coordinates() {
    let tmp = tempfile::tempdir().unwrap();
    setup(tmp.path());
    chain(tmp.path(), "0.3", &[]);
    ok(&["viz", "--input", "out/a"], tmp.path());
    ok(&["viz", "--input", "out/a", "--what", "embeddings"], tmp.path());
    let csv = std::fs::read_to_string(tmp.path().join("out/a/viz_mvectors.csv")).unwrap();
    assert!(csv.starts_with("unit,frame,bin,x,y,label\n0,0,0,"));
    assert!(tmp.path().join("out/a/viz_embeddings.csv").is_file());
}

#[test]
fn errors_name_the_offender() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path();
    std::fs::write(root.join("bad.toml"), "mbn.feature_fraction = 2.0\n").unwrap();
    std::fs::write(root.join("m.csv"), MANIFEST).unwrap();
    let err = fail(&["mix", "--manifest", "m.csv", "--out-dir", "o", "--config", "bad.toml"], root);
    assert!(err.contains("mbn.feature_fraction") && err.contains("bad.toml"), "{err}");

    std::fs::write(root.join("typo.toml"), "[separate]\nrestart = 3\n").unwrap();
    let err = fail(&["features", "--input", "o/a", "--config", "typo.toml"], root);
    assert!(err.contains("restart"), "{err}");

    let err = fail(&["features", "--input", "missing"], root);
    assert!(err.contains("mixture.wav"), "{err}");

    ok(&["mix", "--manifest", "m.csv", "--out-dir", "o"], root);
    let err = fail(&["embed", "--input", "o/a"], root);
    assert!(err.contains("--oracle"), "{err}");

    std::fs::write(root.join("rate.toml"), "stft.sample_rate = 16000\n").unwrap();
    let err = fail(&["features", "--input", "o/a", "--config", "rate.toml"], root);
    assert!(err.contains("mixture.wav") && err.contains("16000"), "{err}");

    std::fs::write(root.join("bad.csv"), "id,sources,delays,sir_db,t60,seed\nx,synth:1;synth:2,0;12,0,0,1\n").unwrap();
    let err = fail(&["mix", "--manifest", "bad.csv", "--out-dir", "o2"], root);
    assert!(err.contains("mix.delays") && err.contains("\"x\""), "{err}");

    let err = fail(&["separate", "--input", "o/a"], root);
    assert!(err.contains("features.mbnt"), "{err}");

    let env_err = Command::new(env!("CARGO_BIN_EXE_mbnsep"))
        .args(["features", "--input", "o/a"])
        .current_dir(root)
        .env("MBNSEP_THREADS", "zero")
        .output()
        .unwrap();
    assert!(!env_err.status.success());
    assert!(String::from_utf8_lossy(&env_err.stderr).contains("MBNSEP_THREADS"));
}
