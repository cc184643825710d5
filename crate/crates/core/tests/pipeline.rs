//! End-to-end runs of the batch pipeline and the interactive session on a
//! synthetic scene.

use std::sync::Arc;

use voxsel::pipeline::{
    evaluate_run, read_metrics, run_pipeline, verify_manifest, BaselineKind, FeatureCache, PipelineConfig,
    PipelineError, Scene, SegmentOptions, SegmentPlan, Session,
};
use voxsel::synth::{make_scene, SceneSpec};

fn quick_config(dir: &std::path::Path, workers: Option<usize>) -> PipelineConfig {
    let mut cfg = PipelineConfig::default();
    cfg.input.synthetic_seed = Some(1);
    cfg.output_dir = dir.to_path_buf();
    cfg.workers = workers;
    cfg.train.epochs = 40;
    cfg
}

#[test]
fn runs_are_bitwise_reproducible_across_worker_counts() {
    let tmp = tempfile::tempdir().unwrap();
    let mut a = quick_config(&tmp.path().join("a"), Some(1));
    a.stages.baselines = vec![BaselineKind::Graphcut3d, BaselineKind::Graphcut2d];
    let mut b = a.clone();
    b.output_dir = tmp.path().join("b");
    b.workers = Some(3);
    let ra = run_pipeline(&a).unwrap();
    let rb = run_pipeline(&b).unwrap();
    assert_eq!(ra.manifest, rb.manifest);
    for (name, _) in &ra.manifest {
        let fa = std::fs::read(a.output_dir.join(name)).unwrap();
        let fb = std::fs::read(b.output_dir.join(name)).unwrap();
        assert!(fa == fb, "{name} differs");
    }
    verify_manifest(&a.output_dir).unwrap();

    // Metrics recomputed from the saved images match the run exactly.
    let stored = read_metrics(&a.output_dir).unwrap();
    let recomputed = evaluate_run(&a.output_dir).unwrap();
    assert_eq!(stored, ra.records);
    assert_eq!(recomputed.len(), stored.len());
    for (x, y) in recomputed.iter().zip(&stored) {
        assert_eq!((&x.scene, &x.metric), (&y.scene, &y.metric));
        assert_eq!(x.value.to_bits(), y.value.to_bits(), "{}", x.metric);
    }
    for m in ["acc", "iou", "gc3d_iou", "gc2d_iou", "psnr", "ssim"] {
        assert!(stored.iter().any(|r| r.metric == m), "missing {m}");
    }

    // A tampered artifact is caught.
    std::fs::write(a.output_dir.join("scene.txt"), "other\n").unwrap();
    assert!(verify_manifest(&a.output_dir).is_err());
}

#[test]
fn session_matches_batch_segmentation() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = quick_config(tmp.path(), None);
    cfg.stages.postprocess = true;
    let batch = run_pipeline(&cfg).unwrap();

    let scene = Arc::new(Scene::from_synthetic("synthetic-1", make_scene(&SceneSpec::desk(1)).unwrap()));
    let cache = FeatureCache::default();
    let mut session = Session::new("s".into(), scene.clone(), SegmentOptions::from_config(&cfg), true, &cache).unwrap();
    assert!(session.segment_now().is_err(), "segmenting without scribbles must fail");
    let rev = session.add_strokes(batch.scribbles.strokes.clone(), false).unwrap();
    let r = session.segment_now().unwrap();
    assert_eq!(r.revision, rev);
    assert_eq!(r.segmentation.labels, batch.segmentation.labels);

    // A second session on the same scene reuses the cached features.
    let other = Session::new("t".into(), scene, SegmentOptions::from_config(&cfg), true, &cache).unwrap();
    assert_eq!(cache.len(), 1);
    assert!(Arc::ptr_eq(&other.features, &session.features));

    // Cached result for an unchanged revision, fresh one after new strokes.
    let again = session.segment_now().unwrap();
    assert!(Arc::ptr_eq(&again.segmentation, &r.segmentation));
    let fg = batch.scribbles.strokes.iter().find(|s| s.class.is_fg()).unwrap().clone();
    let rev2 = session.add_strokes(vec![fg], false).unwrap();
    assert_eq!(rev2, rev + 1);
    assert_eq!(session.segment_now().unwrap().revision, rev2);

    // Strokes arriving while a job is pending cancel it ...
    let one = vec![batch.scribbles.strokes[0].clone()];
    session.add_strokes(one.clone(), false).unwrap();
    let SegmentPlan::Run(job) = session.prepare_segment().unwrap() else {
        panic!("new strokes need a new segmentation")
    };
    session.add_strokes(one.clone(), false).unwrap();
    assert!(matches!(job.run(), Err(PipelineError::Cancelled)));
    // ... and a result finished for an older revision is not stored.
    let SegmentPlan::Run(job) = session.prepare_segment().unwrap() else {
        panic!("new strokes need a new segmentation")
    };
    let seg = job.run().unwrap();
    let latest = session.add_strokes(one, false).unwrap();
    assert!(session.commit(&job, seg).is_none());
    assert_eq!(session.result().unwrap().revision, rev2);
    assert_eq!(session.segment_now().unwrap().revision, latest);
}

#[test]
fn config_file_paths_resolve_against_the_file() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("run.toml");
    std::fs::write(&path, "output_dir = \"out\"\nseed = 4\n[input]\nsynthetic_seed = 2\n[graphcut]\nw2 = 5.0\n").unwrap();
    let cfg = PipelineConfig::load(&path).unwrap();
    assert_eq!(cfg.output_dir, tmp.path().join("out"));
    assert_eq!(cfg.graphcut.w2, 5.0);
    assert_eq!(cfg.graphcut.alpha, 0.1);
    cfg.validate().unwrap();
}
