use std::path::Path;
use std::process::{Command, Output};

fn motionhmm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_motionhmm"))
        .args(args)
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn synth(dir: &Path, classes: &str, per_class: usize) -> String {
    let spec = dir.join("spec.json");
    std::fs::write(
        &spec,
        format!(
            r#"{{"classes": {classes}, "sequences_per_class": {per_class}, "length": 40,
                "channels": [{{"name": "joint_pos", "width": 4}}]}}"#
        ),
    )
    .unwrap();
    let out = dir.join("data");
    let o = motionhmm(&[
        "synth",
        "--classes",
        spec.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    out.join("manifest.json").to_str().unwrap().to_string()
}

#[test]
fn synth_writes_one_file_per_sequence() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = synth(dir.path(), r#"[["a"], ["b"], ["c"]]"#, 20);
    assert_eq!(std::fs::read_dir(dir.path().join("data/motions")).unwrap().count(), 60);
    let o = motionhmm(&["dataset", "validate", &manifest]);
    assert_eq!(o.status.code(), Some(0));
    let o = motionhmm(&["dataset", "report", &manifest]);
    assert!(stdout(&o).contains("20\ta"), "{}", stdout(&o));
}

#[test]
fn missing_files_exit_1_and_name_the_path() {
    let o = motionhmm(&["dataset", "validate", "/no/such/manifest.json"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("/no/such/manifest.json"));
}

#[test]
fn invalid_datasets_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let motion = dir.path().join("m.csv");
    std::fs::write(&motion, "root_pos\n3\n1,2,3\n4,5,6\n").unwrap();
    let manifest = dir.path().join("manifest.json");
    std::fs::write(
        &manifest,
        r#"[{"id": "x", "file": "m.csv", "labels": ["a"]}, {"id": "x", "file": "m.csv", "labels": ["b"]}]"#,
    )
    .unwrap();
    let o = motionhmm(&["dataset", "validate", manifest.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(stderr(&o).contains("duplicate"));
}

#[test]
fn chains_without_fhmm_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = synth(dir.path(), r#"[["a"], ["b"]]"#, 4);
    let bundle = dir.path().join("bundle");
    let o = motionhmm(&[
        "train",
        "powerset",
        "--dataset",
        &manifest,
        "--features",
        "joint_pos",
        "--chains",
        "2",
        "--out",
        bundle.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!bundle.exists());
}

#[test]
fn train_classify_and_evaluate() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = synth(dir.path(), r#"[["a"], ["b"], ["a", "b"]]"#, 6);
    let bundle = dir.path().join("bundle");
    let b = bundle.to_str().unwrap();
    let o = motionhmm(&[
        "train",
        "multilabel",
        "--dataset",
        &manifest,
        "--features",
        "joint_pos",
        "--no-normalize",
        "--states",
        "3",
        "--model",
        "fhmm",
        "--chains",
        "2",
        "--iterations",
        "5",
        "--out",
        b,
    ]);
    assert!(o.status.success(), "{}", stderr(&o));

    let motion = dir.path().join("data/motions/c02_s000.csv");
    let o = motionhmm(&[
        "classify",
        "--bundle",
        b,
        "--motion",
        motion.to_str().unwrap(),
        "--json",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let doc: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(doc["models"].as_array().unwrap().len(), 2);
    assert_eq!(doc["labels"], serde_json::json!(["a", "b"]));

    let other = dir.path().join("other.csv");
    std::fs::write(&other, "root_pos\n3\n1,2,3\n4,5,6\n").unwrap();
    let o = motionhmm(&["classify", "--bundle", b, "--motion", other.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("joint_pos"));

    let csv = dir.path().join("kfold.csv");
    let o = motionhmm(&[
        "eval",
        "kfold",
        "--dataset",
        &manifest,
        "--system",
        "powerset",
        "--features",
        "joint_pos",
        "--states",
        "3",
        "--seed",
        "4",
        "--out",
        csv.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = std::fs::read_to_string(&csv).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "# motionhmm eval kfold");
    assert_eq!(lines[1], "# seed: 4");
    assert!(lines[2].starts_with("# config: {"));
    assert_eq!(
        lines[3],
        "feature_set,model,topology,states,decision_maker,f1,precision,recall,total_accuracy"
    );
    assert!(lines[4].starts_with("joint_pos,hmm,left-to-right,3,argmax,"));
}

#[test]
fn unknown_grid_axis_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = synth(dir.path(), r#"[["a"], ["b"]]"#, 4);
    let grid = dir.path().join("grid.json");
    std::fs::write(&grid, r#"{"axes": [{"name": "colour", "values": [1]}]}"#).unwrap();
    let o = motionhmm(&["grid-search", "--grid", grid.to_str().unwrap(), "--dataset", &manifest]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("colour"));
}
