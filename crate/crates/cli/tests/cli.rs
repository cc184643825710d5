//! The `voxsel` binary end to end.

use std::path::Path;
use std::process::{Command, Output};

fn voxsel(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_voxsel")).args(args).output().unwrap()
}

fn text(o: &Output) -> (String, String) {
    (String::from_utf8_lossy(&o.stdout).into_owned(), String::from_utf8_lossy(&o.stderr).into_owned())
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn help_and_usage_errors() {
    let o = voxsel(&["--help"]);
    assert!(o.status.success());
    let (out, _) = text(&o);
    for cmd in ["synth", "segment", "render", "eval", "baseline", "serve"] {
        assert!(out.contains(cmd), "help lacks {cmd}");
    }
    let o = voxsel(&["segment", "--help"]);
    assert!(text(&o).0.contains("--config"));
    let o = voxsel(&["segment", "--bogus"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn missing_volume_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let cams = dir.path().join("cams.txt");
    let view = dir.path().join("v.png");
    std::fs::write(&cams, "").unwrap();
    std::fs::write(&view, "").unwrap();
    let cfg = dir.path().join("c.toml");
    std::fs::write(&cfg, "[input]\ncameras = \"cams.txt\"\nviews = [\"v.png\"]\nscribbles = \"s.txt\"\n").unwrap();
    let o = voxsel(&["segment", "--config", p(&cfg)]);
    assert!(!o.status.success());
    let (_, err) = text(&o);
    assert!(err.contains("[config]") && err.contains("input.volume"), "{err}");
}

#[test]
fn synth_segment_eval_render_baseline() {
    let dir = tempfile::tempdir().unwrap();
    let scene = dir.path().join("scene");
    let o = voxsel(&["synth", "--seed", "2", "--out", p(&scene)]);
    assert!(o.status.success(), "{:?}", text(&o));
    assert!(scene.join("volume.vxv").exists() && scene.join("view_04.png").exists());

    let cfg = dir.path().join("run.toml");
    std::fs::write(
        &cfg,
        "output_dir = \"run\"\n[input]\nscene_dir = \"scene\"\n[train]\nepochs = 40\n",
    )
    .unwrap();
    let o = voxsel(&["segment", "--config", p(&cfg), "--workers", "2"]);
    assert!(o.status.success(), "{:?}", text(&o));
    let (out, _) = text(&o);
    assert!(out.contains("iou") && out.contains("ssim"), "{out}");
    let run = dir.path().join("run");
    for f in ["manifest.txt", "metrics.tsv", "labels.bin", "segmentation.vxv", "validation/mask.png"] {
        assert!(run.join(f).exists(), "missing {f}");
    }

    let o = voxsel(&["eval", "--run", p(&run), "--check"]);
    assert!(o.status.success(), "{:?}", text(&o));
    assert!(text(&o).0.contains("metrics match"));

    let views = dir.path().join("views");
    let o = voxsel(&[
        "render",
        "--volume",
        p(&scene.join("volume.vxv")),
        "--labels",
        p(&run.join("labels.bin")),
        "--cameras",
        p(&scene.join("cameras.txt")),
        "--out",
        p(&views),
    ]);
    assert!(o.status.success(), "{:?}", text(&o));
    assert!(views.join("view_00.png").exists() && views.join("view_04.png").exists());

    let base = dir.path().join("gc2d");
    let o = voxsel(&["baseline", "--config", p(&cfg), "--kind", "graphcut2d", "--output", p(&base)]);
    assert!(o.status.success(), "{:?}", text(&o));
    assert!(text(&o).0.contains("gc2d_iou"));
    let o = voxsel(&["eval", "--run", p(&base), "--check"]);
    assert!(o.status.success(), "{:?}", text(&o));

    // Corrupting an artifact makes eval fail with a tagged message.
    std::fs::write(run.join("metrics.tsv"), "x\tiou\t0.5\n").unwrap();
    let o = voxsel(&["eval", "--run", p(&run)]);
    assert!(!o.status.success());
    assert!(text(&o).1.contains("[artifacts]"));
}
