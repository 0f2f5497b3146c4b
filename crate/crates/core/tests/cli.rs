//! End-to-end runs of the `ailock` binary on small synthetic corpora.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

const SMALL: &str = "variant = \"slss\"\nseed = 5\n\n[params]\nlambda = 150\npc_lo = 2\npc_hi = 40\n\n\
                     [paths]\nmodel = \"model.json\"\nrecord = \"record.json\"\nout = \"reports\"\n\n\
                     [train]\nfolds = 3\n\n\
                     [synthetic]\ndim = 96\nn_objects = 30\ntest_objects = 10\nattack_images = 20\nnoise_sigma = 0.02\n";

fn ailock(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ailock"))
        .current_dir(dir)
        .args(args)
        .env_remove("AILOCK_SEED")
        .output()
        .expect("spawn ailock")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = ailock(dir, args);
    assert_eq!(out.status.code(), Some(0), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn setup(cfg: &str) -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("cfg.toml"), cfg).unwrap();
    dir
}

fn report(dir: &Path, name: &str) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("reports").join(name)).unwrap()).unwrap()
}

#[test]
fn enroll_and_authenticate_exit_codes() {
    let dir = setup(SMALL);
    let d = dir.path();
    ok(d, &["--config", "cfg.toml", "train"]);
    // trained thresholds leave too little room for a code; enroll with an explicit one
    ok(d, &["--config", "cfg.toml", "--param.tau", "0.85", "enroll", "--image", "25:0"]);
    assert_eq!(ailock(d, &["--config", "cfg.toml", "auth", "--image", "25:1"]).status.code(), Some(0));
    assert_eq!(ailock(d, &["--config", "cfg.toml", "auth", "--image", "26:0"]).status.code(), Some(1));

    let record = fs::read_to_string(d.join("record.json")).unwrap();
    fs::write(d.join("record.json"), &record[..record.len() / 2]).unwrap();
    let out = ailock(d, &["--config", "cfg.toml", "auth", "--image", "25:1"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("error"));
}

#[test]
fn trained_threshold_enrollment_reports_hint() {
    let dir = setup(SMALL);
    let d = dir.path();
    ok(d, &["--config", "cfg.toml", "--param.tau", "0.55", "train"]);
    let out = ailock(d, &["--config", "cfg.toml", "--param.tau", "0.55", "enroll", "--image", "25:0"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("hint: raise tau"));
}

#[test]
fn secondary_factor_is_required_once_bound() {
    let dir = setup(SMALL);
    let d = dir.path();
    fs::write(d.join("key.bin"), b"second factor").unwrap();
    fs::write(d.join("other.bin"), b"something else").unwrap();
    ok(d, &["--config", "cfg.toml", "train"]);
    ok(d, &["--config", "cfg.toml", "--param.tau", "0.85", "enroll", "--image", "22:0", "--secondary-file", "key.bin"]);
    let auth = |f: &str| ailock(d, &["--config", "cfg.toml", "auth", "--image", "22:2", "--secondary-file", f]).status.code();
    assert_eq!(auth("key.bin"), Some(0));
    assert_eq!(auth("other.bin"), Some(1));
}

#[test]
fn empty_corpus_is_an_error() {
    let dir = setup(SMALL);
    let d = dir.path();
    fs::write(d.join("empty.csv"), "id,object_id,split,kind\n").unwrap();
    let out = ailock(d, &["--config", "cfg.toml", "--manifest", "empty.csv", "train"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn vaccine_changes_thresholds() {
    let cfg = SMALL.replace("noise_sigma = 0.02", "noise_sigma = 0.3");
    let dir = setup(&cfg);
    let d = dir.path();
    ok(d, &["--config", "cfg.toml", "train"]);
    let plain = report(d, "train.json");
    ok(d, &["--config", "cfg.toml", "train", "--vaccine", "tau-only"]);
    let vacc = report(d, "train.json");
    assert_eq!(plain["vaccine"], Value::Null);
    assert_eq!(vacc["vaccine"], "tau-only");
    assert_ne!(plain["taus"], vacc["taus"]);
}

#[test]
fn separable_corpus_has_zero_eer() {
    let dir = setup(SMALL);
    let d = dir.path();
    ok(d, &["--config", "cfg.toml", "train"]);
    let text = ok(d, &["--config", "cfg.toml", "eval"]);
    assert!(text.contains("eer"));
    let r = report(d, "eval.json");
    assert_eq!(r["eer"].as_f64(), Some(0.0));
    // 10 objects, 4 captures each
    assert_eq!(r["pairs"].as_u64(), Some(40 * 39 / 2));
}

#[test]
fn attack_and_lsim_reports() {
    let dir = setup(SMALL);
    let d = dir.path();
    ok(d, &["--config", "cfg.toml", "train"]);
    ok(d, &["--config", "cfg.toml", "attack", "--samples", "200"]);
    let a = report(d, "attack.json");
    let stats = &a["attacks"][0]["stats"];
    assert_eq!(stats["attack"], "bernoulli");
    assert_eq!(stats["references"].as_u64(), Some(40));
    assert_eq!(stats["attempts_per_reference"].as_u64(), Some(200));
    assert!(a["attacks"][0]["entropy"]["bits"].as_f64().unwrap() > 0.0);

    ok(d, &["--config", "cfg.toml", "attack", "--kind", "guessing"]);
    assert_eq!(report(d, "attack.json")["attacks"].as_array().unwrap().len(), 2);

    ok(d, &["--config", "cfg.toml", "lsim"]);
    let l = report(d, "lsim.json");
    let p1 = l["per_bit"]["p1"].as_f64().unwrap();
    let p2 = l["per_bit"]["p2"].as_f64().unwrap();
    assert!(p1 > p2, "p1 {p1} p2 {p2}");
    assert!(l["whole_print"]["p_value"].is_number());
    assert!(l["angle"]["analytic_valid"].is_number());
}

#[test]
fn exported_embeddings_reproduce_synthetic_results() {
    let dir = setup(SMALL);
    let d = dir.path();
    ok(d, &["--config", "cfg.toml", "gen-corpus", "--dir", "corpus"]);
    for f in ["manifest.csv", "embeddings-s1.bin", "embeddings-s5.bin", "synthetic.toml"] {
        assert!(d.join("corpus").join(f).is_file(), "{f}");
    }
    ok(d, &["--config", "cfg.toml", "train"]);
    ok(d, &["--config", "cfg.toml", "eval"]);
    let direct = report(d, "eval.json");
    let file_args = ["--manifest", "corpus/manifest.csv", "--embeddings", "corpus/embeddings-s{s}.bin"];
    let with = |cmd: &'static str| [&["--config", "cfg.toml"][..], &file_args[..], &[cmd]].concat();
    ok(d, &with("train"));
    ok(d, &with("eval"));
    assert_eq!(report(d, "eval.json"), direct);

    // the model is single-segment; a five-segment file must be refused
    let wrong = ["--config", "cfg.toml", "--manifest", "corpus/manifest.csv", "--embeddings", "corpus/embeddings-s5.bin", "eval"];
    assert_eq!(ailock(d, &wrong).status.code(), Some(2));
}

#[test]
fn bad_configuration_exits_two() {
    let dir = setup("[params]\nlamda = 3\n");
    let d = dir.path();
    assert_eq!(ailock(d, &["--config", "cfg.toml", "lsim"]).status.code(), Some(2));
    assert_eq!(ailock(d, &["--threads", "0", "lsim"]).status.code(), Some(2));
    assert_eq!(ailock(d, &["--variant", "xyz", "lsim"]).status.code(), Some(2));
    assert_eq!(ailock(d, &["eval"]).status.code(), Some(2));
}
