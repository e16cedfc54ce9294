use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_supertraj"));
    c.env_remove("SUPERTRAJ_WORKERS");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn supertraj")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn ok(o: &Output) {
    assert!(
        o.status.success(),
        "exit {:?}\nstdout:\n{}\nstderr:\n{}",
        o.status.code(),
        stdout(o),
        stderr(o)
    );
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Small moving square, fast enough for a full pipeline run.
const SMALL_SCENE: &str = r#"{
  "width": 48, "height": 36, "frames": 6,
  "background": { "color": [70, 110, 150], "amplitude": 6, "seed": 1 },
  "objects": [{
    "shape": { "kind": "rectangle", "width": 12, "height": 12 },
    "position": [8, 10], "velocity": [2, 0],
    "texture": { "color": [210, 70, 50], "amplitude": 6, "seed": 2 }
  }]
}"#;

const FAST: &[&str] = &["--set", "k=16", "--set", "superpixels=60"];

fn small_sequence(tmp: &TempDir, spec: &str) -> PathBuf {
    let spec_path = tmp.path().join("scene.json");
    fs::write(&spec_path, spec).unwrap();
    let dir = tmp.path().join("seq");
    ok(&run(&["synth", "--spec", s(&spec_path), "--out", s(&dir)]));
    dir
}

fn numbered(dir: &Path, ext: &str) -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().and_then(|e| e.to_str()) == Some(ext))
        .collect();
    v.sort();
    v
}

fn stat_line(out: &str, key: &str) -> f64 {
    out.lines()
        .find_map(|l| l.strip_prefix(key))
        .and_then(|v| v.split_whitespace().next())
        .and_then(|v| v.parse().ok())
        .unwrap_or_else(|| panic!("no `{key}` line in:\n{out}"))
}

#[test]
fn synth_writes_the_dataset_layout() {
    let tmp = TempDir::new().unwrap();
    let dir = small_sequence(&tmp, SMALL_SCENE);
    assert_eq!(numbered(&dir.join("frames"), "png").len(), 6);
    assert_eq!(numbered(&dir.join("gt"), "png").len(), 6);
    assert_eq!(numbered(&dir.join("flow"), "flo").len(), 5);
    assert_eq!(numbered(&dir.join("flow"), "rflo").len(), 5);
    assert!(dir.join("mask.png").is_file());
}

#[test]
fn static_scene_tracks_every_grid_node_through_all_frames() {
    let tmp = TempDir::new().unwrap();
    let scene = SMALL_SCENE.replace("\"velocity\": [2, 0]", "\"velocity\": [0, 0]");
    let dir = small_sequence(&tmp, &scene);
    let out = tmp.path().join("t.txt");
    let o = run(&[
        "track",
        "--frames",
        s(&dir.join("frames")),
        "--flow",
        s(&dir.join("flow")),
        "--out",
        s(&out),
    ]);
    ok(&o);
    // stride-2 grid over 48x36 with nothing ever terminating
    assert_eq!(stat_line(&stdout(&o), "trajectories:"), (24 * 18) as f64);
    assert_eq!(stat_line(&stdout(&o), "mean length:"), 6.0);

    let again = tmp.path().join("t2.txt");
    ok(&run(&[
        "track",
        "--frames",
        s(&dir.join("frames")),
        "--flow",
        s(&dir.join("flow")),
        "--out",
        s(&again),
    ]));
    assert_eq!(fs::read(&out).unwrap(), fs::read(&again).unwrap());
}

#[test]
fn track_cluster_segment_chain() {
    let tmp = TempDir::new().unwrap();
    let dir = small_sequence(&tmp, SMALL_SCENE);
    let (frames, flow) = (dir.join("frames"), dir.join("flow"));
    let trajs = tmp.path().join("trajs.txt");
    ok(&run(&[
        "track",
        "--frames",
        s(&frames),
        "--flow",
        s(&flow),
        "--out",
        s(&trajs),
    ]));

    let sts = tmp.path().join("sts.txt");
    let viz = tmp.path().join("viz");
    let mut args = vec![
        "cluster",
        "--trajectories",
        s(&trajs),
        "--frames",
        s(&frames),
        "--out",
        s(&sts),
    ];
    args.extend(["--viz", s(&viz), "--viz-frames", "1,3,6"]);
    args.extend(FAST);
    let o = run(&args);
    ok(&o);
    assert!(stat_line(&stdout(&o), "super-trajectories:") >= 1.0);
    assert_eq!(numbered(&viz, "png").len(), 3);
    assert!(fs::metadata(&sts).unwrap().len() > 0);

    let mask = dir.join("mask.png");
    let out = tmp.path().join("seg");
    let mut args = vec!["segment", "--frames", s(&frames), "--flow", s(&flow)];
    args.extend(["--mask", s(&mask), "--out", s(&out), "--dump-stages"]);
    args.extend(FAST);
    ok(&run(&args));
    assert_eq!(numbered(&out, "png").len(), 6);
    let diag: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("diagnostics.json")).unwrap()).unwrap();
    assert!(diag["regions"].as_u64().unwrap() > 0);
    for stage in ["supertraj", "pixel", "region_initial", "region_final"] {
        assert_eq!(
            numbered(&out.join("stages").join(stage), "png").len(),
            6,
            "{stage}"
        );
    }

    // same inputs, different worker count, same bytes
    let out2 = tmp.path().join("seg2");
    let mut args = vec!["segment", "--frames", s(&frames), "--flow", s(&flow)];
    args.extend(["--mask", s(&mask), "--out", s(&out2)]);
    args.extend(FAST);
    ok(&bin()
        .args(&args)
        .env("SUPERTRAJ_WORKERS", "3")
        .output()
        .unwrap());
    for (a, b) in numbered(&out, "png").iter().zip(numbered(&out2, "png")) {
        assert_eq!(fs::read(a).unwrap(), fs::read(b).unwrap());
    }
    assert_eq!(
        fs::read(out.join("diagnostics.json")).unwrap(),
        fs::read(out2.join("diagnostics.json")).unwrap()
    );
}

#[test]
fn empty_first_mask_gives_empty_masks() {
    let tmp = TempDir::new().unwrap();
    let scene = SMALL_SCENE.replace("\"seed\": 2 }", "\"seed\": 2 }, \"foreground\": false");
    let dir = small_sequence(&tmp, &scene);
    let (frames, flow, mask) = (dir.join("frames"), dir.join("flow"), dir.join("mask.png"));
    let out = tmp.path().join("seg");
    let mut args = vec!["segment", "--frames", s(&frames), "--flow", s(&flow)];
    args.extend(["--mask", s(&mask), "--out", s(&out)]);
    args.extend(FAST);
    ok(&run(&args));
    let first = fs::read(out.join("00001.png")).unwrap();
    for p in numbered(&out, "png") {
        assert_eq!(fs::read(p).unwrap(), first);
    }
    let diag: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("diagnostics.json")).unwrap()).unwrap();
    assert_eq!(diag["categories"]["foreground"], 0);
}

#[test]
fn eval_reports_and_sweeps() {
    let tmp = TempDir::new().unwrap();
    let data = tmp.path().join("data");
    fs::create_dir_all(&data).unwrap();
    let spec_path = tmp.path().join("scene.json");
    fs::write(&spec_path, SMALL_SCENE).unwrap();
    ok(&run(&[
        "synth",
        "--spec",
        s(&spec_path),
        "--out",
        s(&data.join("square")),
    ]));

    let report = tmp.path().join("r/report.json");
    let mut args = vec!["eval", "--dataset", s(&data), "--report", s(&report)];
    args.extend(FAST);
    let o = run(&args);
    ok(&o);
    assert!(stdout(&o).contains("Avg."), "{}", stdout(&o));
    let r: serde_json::Value = serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(r["schema"], 1);
    assert_eq!(r["evaluated"], 1);
    assert_eq!(r["config"]["k"], "16");
    assert!(r["sequences"][0].get("timings").is_none());
    let m = r["mean_iou"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&m));

    let mut args = vec![
        "eval",
        "--dataset",
        s(&data),
        "--report",
        s(&report),
        "--sweep",
        "neighbors=4,8",
        "--timings",
    ];
    args.extend(FAST);
    let o = run(&args);
    ok(&o);
    for n in [4, 8] {
        let p = tmp.path().join(format!("r/report-neighbors-{n}.json"));
        let r: serde_json::Value = serde_json::from_str(&fs::read_to_string(&p).unwrap()).unwrap();
        assert_eq!(r["config"]["neighbors"], n.to_string());
        assert!(r["sequences"][0]["timings"].is_array());
    }
    assert!(stdout(&o).contains("== sweep"));
}

#[test]
fn empty_dataset_is_a_data_error() {
    let tmp = TempDir::new().unwrap();
    let o = run(&[
        "eval",
        "--dataset",
        s(tmp.path()),
        "--report",
        s(&tmp.path().join("r.json")),
    ]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    let r: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("r.json")).unwrap()).unwrap();
    assert_eq!(r["evaluated"], 0);
    assert_eq!(
        run(&["eval", "--dataset", s(&tmp.path().join("nope"))])
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(run(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(run(&["--set", "bogus=1", "config"]).status.code(), Some(1));
    assert_eq!(
        run(&["--set", "threshold=2", "config"]).status.code(),
        Some(1)
    );
    assert_eq!(
        run(&["synth", "--preset", "nope", "--out", "x"])
            .status
            .code(),
        Some(1)
    );
    assert_eq!(run(&["synth", "--out", "x"]).status.code(), Some(1));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
}

#[test]
fn config_file_then_overrides() {
    let tmp = TempDir::new().unwrap();
    let cfg = tmp.path().join("c.txt");
    fs::write(&cfg, "# desk run\nneighbors = 4\nk = 300\n").unwrap();
    let o = run(&["--config", s(&cfg), "--set", "k=64", "config"]);
    ok(&o);
    let out = stdout(&o);
    assert!(out.contains("neighbors = 4\n"), "{out}");
    assert!(out.contains("k = 64\n"), "{out}");
    assert!(out.contains("superpixels = 2000\n"), "{out}");
}

#[test]
fn data_errors_exit_two() {
    let tmp = TempDir::new().unwrap();
    let dir = small_sequence(&tmp, SMALL_SCENE);
    let (frames, flow) = (dir.join("frames"), dir.join("flow"));

    // missing flow file is named
    fs::remove_file(flow.join("00003.flo")).unwrap();
    let o = run(&[
        "track",
        "--frames",
        s(&frames),
        "--flow",
        s(&flow),
        "--out",
        s(&tmp.path().join("t")),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("00003.flo"), "{}", stderr(&o));

    // one frame is not a video
    let one = tmp.path().join("one");
    fs::create_dir_all(&one).unwrap();
    fs::copy(frames.join("00001.png"), one.join("00001.png")).unwrap();
    let o = run(&[
        "track",
        "--frames",
        s(&one),
        "--flow",
        s(&flow),
        "--out",
        s(&tmp.path().join("t")),
    ]);
    assert_eq!(o.status.code(), Some(2));

    // empty trajectory file
    let empty = tmp.path().join("empty.txt");
    fs::write(&empty, "").unwrap();
    let o = run(&[
        "cluster",
        "--trajectories",
        s(&empty),
        "--frames",
        s(&frames),
        "--out",
        s(&tmp.path().join("c")),
    ]);
    assert_eq!(o.status.code(), Some(2));

    // mask of the wrong size
    let spec_path = tmp.path().join("big.json");
    fs::write(
        &spec_path,
        SMALL_SCENE.replace("\"width\": 48", "\"width\": 50"),
    )
    .unwrap();
    let big = tmp.path().join("big");
    ok(&run(&["synth", "--spec", s(&spec_path), "--out", s(&big)]));
    let o = run(&[
        "segment",
        "--frames",
        s(&big.join("frames")),
        "--flow",
        s(&big.join("flow")),
        "--mask",
        s(&dir.join("mask.png")),
        "--out",
        s(&tmp.path().join("seg")),
    ]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}
