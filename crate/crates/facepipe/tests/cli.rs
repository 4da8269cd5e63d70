mod common;

use common::{facepipe, s, synth};
use facepipe::dataset::{frame_annotation_path, frame_image_path, load_dataset};
use facepipe::pipeline::RunSummary;
use facepipe_core::io::{load_image, load_mask};
use facepipe_core::Image;

fn summary(dir: &std::path::Path) -> RunSummary {
    serde_json::from_slice(&std::fs::read(dir.join("report.json")).unwrap()).unwrap()
}

#[test]
fn self_swap_with_identity_renderer_reproduces_target() {
    let tmp = tempfile::tempdir().unwrap();
    let src = synth(tmp.path(), 8, 128);
    let out = tmp.path().join("out");
    let o = facepipe(&[
        "swap",
        "--source",
        s(&src),
        "--target",
        s(&src),
        "--output",
        s(&out),
        "--renderer",
        "identity",
        "--crop-size",
        "128",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let run = summary(&out);
    assert_eq!(run.failures(), 0);
    assert!(run.report.summary["l1"].mean < 0.01, "{:?}", run.report.summary);

    // Only pixels near the face region may change.
    let data = load_dataset(&src).unwrap();
    for f in data.sequence.iter() {
        let a: Image = load_image(frame_image_path(&out, f.frame)).unwrap();
        let b: Image = f.load_image().unwrap();
        let mask = load_mask(src.join(format!("{:05}_mask.png", f.frame))).unwrap();
        let near_face = |x: usize, y: usize| {
            (x.saturating_sub(2)..(x + 3).min(mask.width()))
                .any(|i| (y.saturating_sub(2)..(y + 3).min(mask.height())).any(|j| mask.is_face(i, j)))
        };
        for y in 0..a.height() {
            for x in 0..a.width() {
                if (0..3).any(|c| a.get(x, y, c) != b.get(x, y, c)) {
                    assert!(
                        near_face(x, y),
                        "frame {} pixel ({x}, {y}) changed outside the face",
                        f.frame
                    );
                }
            }
        }
    }
}

#[test]
fn rerun_is_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let src = synth(tmp.path(), 6, 96);
    let run = |name: &str| {
        let out = tmp.path().join(name);
        let o = facepipe(&[
            "swap",
            "--source",
            s(&src),
            "--target",
            s(&src),
            "--output",
            s(&out),
            "--crop-size",
            "96",
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        let mut files: Vec<_> = std::fs::read_dir(&out).unwrap().map(|e| e.unwrap().path()).collect();
        files.sort();
        files
            .iter()
            .map(|p| (p.file_name().unwrap().to_owned(), std::fs::read(p).unwrap()))
            .collect::<Vec<_>>()
    };
    let a = run("a");
    assert_eq!(a.len(), 6 + 2);
    assert!(a == run("b"));
}

#[test]
fn broken_frame_is_reported_and_others_still_render() {
    let tmp = tempfile::tempdir().unwrap();
    let src = synth(tmp.path(), 6, 96);
    let target = tmp.path().join("target");
    facepipe::cli::synth_data(&target, 6, 96, None, 0).unwrap();
    std::fs::write(frame_annotation_path(&target, 2), b"{ not json").unwrap();
    let out = tmp.path().join("out");
    let o = facepipe(&[
        "swap",
        "--source",
        s(&src),
        "--target",
        s(&target),
        "--output",
        s(&out),
        "--crop-size",
        "96",
    ]);
    assert_eq!(o.status.code(), Some(1));
    let run = summary(&out);
    assert_eq!(run.failures(), 1);
    assert_eq!(run.frames.len(), 6);
    assert!(run.frames[2].error.is_some());
    assert!(!frame_image_path(&out, 2).exists());
    assert!(frame_image_path(&out, 3).exists());
}

#[test]
fn configuration_errors_exit_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = tmp.path().join("nope");
    let o = facepipe(&[
        "swap",
        "--source",
        s(&missing),
        "--target",
        s(&missing),
        "--output",
        s(&tmp.path().join("o")),
    ]);
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));

    let src = synth(tmp.path(), 3, 64);
    let o = facepipe(&["swap", "--source", s(&src), "--target", s(&src), "--output", s(&src)]);
    assert_eq!(o.status.code(), Some(2));
    let o = facepipe(&[
        "swap",
        "--source",
        s(&src),
        "--target",
        s(&src),
        "--output",
        "x",
        "--iterations",
        "3",
    ]);
    assert_eq!(o.status.code(), Some(2));
    let o = facepipe(&[
        "swap",
        "--source",
        s(&src),
        "--target",
        s(&src),
        "--output",
        "x",
        "--renderer",
        "gan",
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn config_file_is_read_and_unknown_keys_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let src = synth(tmp.path(), 4, 64);
    let out = tmp.path().join("out");
    let cfg = tmp.path().join("cfg.json");
    let json =
        serde_json::json!({ "source": src, "target": src, "output": out, "crop_size": 64, "renderer": "identity" });
    std::fs::write(&cfg, json.to_string()).unwrap();
    let o = facepipe(&["swap", "--config", s(&cfg)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(frame_image_path(&out, 3).exists());

    std::fs::write(&cfg, r#"{"source": "a", "colour": 1}"#).unwrap();
    assert_eq!(facepipe(&["swap", "--config", s(&cfg)]).status.code(), Some(2));
}

#[test]
fn pose_path_and_map_commands_write_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let src = synth(tmp.path(), 10, 96);
    let out = tmp.path().join("path");
    let o = facepipe(&[
        "reenact-path",
        "--source",
        s(&src),
        "--output",
        s(&out),
        "--crop-size",
        "64",
        "--poses",
        "0,0,0;-20,5,3;30,-10",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for i in 0..3 {
        let img: Image = load_image(frame_image_path(&out, i)).unwrap();
        assert_eq!((img.width(), img.height()), (64, 64));
    }
    let o = facepipe(&[
        "reenact-path",
        "--source",
        s(&src),
        "--output",
        s(&out),
        "--poses",
        "80,0,0",
    ]);
    assert_eq!(o.status.code(), Some(1));

    let map = tmp.path().join("map.json");
    let o = facepipe(&["build-map", "--source", s(&src), "--map", s(&map)]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_slice(&std::fs::read(&map).unwrap()).unwrap();
    assert_eq!(v["version"], 1);
    assert!(v["triangles"].as_array().unwrap().len() >= 4);
}

#[test]
fn expression_transfer_runs_on_paired_frames() {
    let tmp = tempfile::tempdir().unwrap();
    let src = synth(tmp.path(), 4, 96);
    let out = tmp.path().join("out");
    let o = facepipe(&[
        "reenact-expression",
        "--source",
        s(&src),
        "--target",
        s(&src),
        "--output",
        s(&out),
        "--crop-size",
        "96",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let run = summary(&out);
    assert_eq!(run.frames.len(), 4);
    // Same mouth on both sides, so the frames barely move.
    assert!(run.report.summary["l1"].mean < 0.01);
}

#[test]
fn curate_keeps_requested_count() {
    let tmp = tempfile::tempdir().unwrap();
    let src = synth(tmp.path(), 12, 64);
    let out = tmp.path().join("cur");
    let o = facepipe(&["curate", "--input", s(&src), "--output", s(&out), "--max-frames", "5"]);
    assert!(o.status.success());
    assert_eq!(load_dataset(&out).unwrap().sequence.len(), 5);
}

#[test]
fn metrics_command_reports_embeddings() {
    let tmp = tempfile::tempdir().unwrap();
    let src = synth(tmp.path(), 3, 64);
    let real = tmp.path().join("real.csv");
    let fake = tmp.path().join("fake.csv");
    std::fs::write(&real, "0,1\n1,0\n2,2\n").unwrap();
    std::fs::write(&fake, "0,1\n1,0\n2,2\n").unwrap();
    let rep = tmp.path().join("rep");
    let o = facepipe(&[
        "metrics",
        "--output",
        s(&src),
        "--reference",
        s(&src),
        "--real-embeddings",
        s(&real),
        "--fake-embeddings",
        s(&fake),
        "--id-output",
        s(&real),
        "--id-source",
        s(&fake),
        "--report",
        s(&rep),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_slice(&std::fs::read(rep.join("metrics.json")).unwrap()).unwrap();
    assert!(v["fid"].as_f64().unwrap().abs() < 1e-9);
    assert_eq!(v["summary"]["l1"]["mean"], 0.0);
    assert_eq!(v["summary"]["landmarks"]["mean"], 0.0);
    assert_eq!(v["summary"]["euler"]["mean"], 0.0);
    // The row (2, 2) against itself is 1 too; (0, 1) and (1, 0) likewise.
    assert_eq!(v["summary"]["id"]["mean"], 1.0);
    let csv = std::fs::read_to_string(rep.join("metrics.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("frame,l1,landmarks,euler,id,fec"));
    assert_eq!(csv.lines().count(), 4);
}

#[test]
fn transformer_training_writes_checkpoint_and_losses() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("model");
    let o = facepipe(&[
        "train-transformer",
        "--output",
        s(&out),
        "--synthetic",
        "64",
        "--iterations",
        "20",
        "--batch-size",
        "8",
        "--hidden",
        "16",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let losses = std::fs::read_to_string(out.join("loss.csv")).unwrap();
    assert!(losses.lines().count() >= 20);
    let model: facepipe_core::transformer::MlpTransformer<f64> =
        facepipe_core::transformer::load_checkpoint(&out.join("transformer.bin")).unwrap();
    assert_eq!(model.hidden_width(), 16);
}
