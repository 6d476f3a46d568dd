use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dualq-seld"))
        .args(args)
        .output()
        .unwrap()
}

fn ok(args: &[&str]) -> Output {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn json_file(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn synth(out: &Path, n: &str, seed: &str) {
    ok(&[
        "synth",
        "--out",
        out.to_str().unwrap(),
        "--n-samples",
        n,
        "--seed",
        seed,
    ]);
}

#[test]
fn synth_layout_and_reproducibility() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    synth(&a, "4", "3");
    synth(&b, "4", "3");
    let samples: Vec<_> = std::fs::read_dir(a.join("samples")).unwrap().collect();
    assert_eq!(samples.len(), 4);
    for entry in samples {
        let name = entry.unwrap().file_name();
        let here = a.join("samples").join(&name);
        for file in ["audio_a.wav", "audio_b.wav", "labels.json"] {
            assert!(here.join(file).is_file(), "{here:?} lacks {file}");
        }
        let labels = std::fs::read(here.join("labels.json")).unwrap();
        assert_eq!(
            labels,
            std::fs::read(b.join("samples").join(&name).join("labels.json")).unwrap()
        );
    }
    assert_eq!(
        json_file(&a.join("dataset.json"))["samples"]
            .as_array()
            .unwrap()
            .len(),
        4
    );
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    assert_eq!(
        run(&["params", "--set", "model.bogus=1"]).status.code(),
        Some(1)
    );
    assert_eq!(
        run(&["synth", "--out", out, "--n-class", "99"])
            .status
            .code(),
        Some(1)
    );
    assert_eq!(run(&["no-such-command"]).status.code(), Some(1));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
    assert_eq!(run(&["gradcheck"]).status.code(), Some(0));
    assert_eq!(
        run(&["gradcheck", "--corrupt", "q_conv2d"]).status.code(),
        Some(2)
    );
    assert_eq!(
        run(&["gradcheck", "--corrupt", "nothing"]).status.code(),
        Some(1)
    );
}

#[test]
fn params_report() {
    let out = ok(&["params", "--kind", "dualq"]);
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    let d = &report["description"];
    assert_eq!(d["receptive_field"], 287);
    assert_eq!(
        d["dilations"],
        serde_json::json!([1, 1, 2, 3, 5, 8, 13, 21, 34, 55])
    );
    assert_eq!(report["config"]["model.kind"], "dualq");
    assert!(d["total_params"].as_u64().unwrap() > d["mixing_weights"].as_u64().unwrap());
}

#[test]
fn train_then_eval() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let run_dir = dir.path().join("run");
    synth(&data, "3", "5");
    let (data_s, run_s) = (data.to_str().unwrap(), run_dir.to_str().unwrap());
    ok(&[
        "train",
        "--data",
        data_s,
        "--out",
        run_s,
        "--preset",
        "desk",
        "--epochs",
        "2",
        "--quiet",
        "--set",
        "data.n_val=1",
        "--set",
        "train.min_epochs=0",
    ]);

    let csv = std::fs::read_to_string(run_dir.join("history.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(
        lines[0],
        "epoch,train_loss,sed_loss,doa_loss,val_LSD,val_CSL,val_GSELD"
    );
    assert_eq!(lines.len(), 3);
    assert!(lines.iter().all(|l| l.split(',').count() == 7));

    let report = json_file(&run_dir.join("train_report.json"));
    assert_eq!(report["epochs_run"], 2);
    assert_eq!(report["val_samples"].as_array().unwrap().len(), 1);
    assert_eq!(report["run"]["config"]["model.preset"], "desk");

    let ckpt = run_dir.join("checkpoint.dqck");
    let ckpt_s = ckpt.to_str().unwrap();
    let eval_out = dir.path().join("eval.json");
    ok(&[
        "eval",
        "--data",
        data_s,
        "--ckpt",
        ckpt_s,
        "--sed-threshold",
        "0.4",
        "--dist-threshold",
        "1.5",
        "--out",
        eval_out.to_str().unwrap(),
    ]);
    let eval = json_file(&eval_out);
    assert_eq!(eval["config"]["metric.sed_threshold"], 0.4);
    assert_eq!(eval["config"]["metric.dist_threshold"], 1.5);
    assert_eq!(eval["n_samples"], 3);

    let oracle: Value = serde_json::from_slice(
        &ok(&["eval", "--data", data_s, "--ckpt", ckpt_s, "--oracle"]).stdout,
    )
    .unwrap();
    assert_eq!(oracle["scores"]["gseld"], 0.0);
}
