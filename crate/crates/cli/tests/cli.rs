use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn hairpipe(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hairpipe")).args(args).current_dir(cwd).output().expect("spawn hairpipe")
}

fn hairdb(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hairdb")).args(args).current_dir(cwd).output().expect("spawn hairdb")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn small_scene(dir: &Path, extra: &str) {
    fs::write(
        dir.join("spec.txt"),
        format!("cameras = 12\nwidth = 160\nheight = 160\nfocal = 400\ndb_styles = 4\n{extra}"),
    )
    .unwrap();
    let o = hairpipe(&["synth", "spec.txt", "scene"], dir);
    assert!(o.status.success(), "{}", stderr(&o));
}

#[test]
fn synth_run_eval_morph_round() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    small_scene(d, "");
    for f in [
        "cameras.txt",
        "head.obj",
        "ground_truth.hstr",
        "mask_0.pgm",
        "depth_11.dpt",
        "color_3.ppm",
        "db/style_00.hstr",
    ] {
        assert!(d.join("scene").join(f).exists(), "missing {f}");
    }

    let o = hairdb(&["build", "scene/db"], d);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(stdout(&o).lines().count(), 4);
    assert!(d.join("scene/db/meta.txt").exists());

    fs::write(d.join("cfg.txt"), "field_resolution = 48\nhull_resolution = 96\n").unwrap();
    let o = hairpipe(&["run", "scene", "--db", "scene/db", "--config", "cfg.txt", "--out", "out"], d);
    assert!(o.status.success(), "{}", stderr(&o));
    let report = stdout(&o);
    for stage in ["reject_frames", "carve", "strands2d", "retrieval", "deformation", "regrow", "evaluate"] {
        assert_eq!(report.matches(&format!("stage {stage} ")).count(), 1, "{stage}");
    }
    assert!(report.contains("mean iou"));
    assert_eq!(fs::read_to_string(d.join("out/report.txt")).unwrap(), report);
    for f in ["head.obj", "hull.obj", "query.hstr", "strands.hstr", "corrected_rough.obj", "field.ornt"] {
        assert!(d.join("out").join(f).exists(), "missing {f}");
    }

    let o = hairdb(&["query", "out/query.hstr", "scene/db", "--k", "2"], d);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(stdout(&o).lines().count(), 2);

    let o = hairpipe(&["eval", "out/strands.hstr", "scene", "--gt", "scene"], d);
    assert!(o.status.success(), "{}", stderr(&o));
    let mean: f64 = stdout(&o).lines().find_map(|l| l.strip_prefix("mean iou ")).unwrap().parse().unwrap();
    assert!((0.5..=1.0).contains(&mean), "mean iou {mean}");

    let o = hairpipe(&["recolor", "out/strands.hstr", "--factor", "0.5", "--out", "dark.hstr"], d);
    assert!(o.status.success(), "{}", stderr(&o));
    let o = hairpipe(&["morph", "out/strands.hstr", "dark.hstr", "--t", "0", "--out", "m0.hstr"], d);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(fs::read(d.join("m0.hstr")).unwrap(), fs::read(d.join("out/strands.hstr")).unwrap());

    let o = hairpipe(&["morph", "out/strands.hstr", "scene/ground_truth.hstr"], d);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("correspondence"), "{}", stderr(&o));
}

#[test]
fn narrow_views_fail_registration() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    small_scene(d, "azimuth_min_deg = -30\nazimuth_max_deg = 30\n");
    let o = hairpipe(&["run", "scene", "--db", "scene/db", "--out", "out"], d);
    assert!(!o.status.success());
    let err = stderr(&o);
    assert!(err.contains("stage `coverage`") && err.contains("registration failed"), "{err}");
    assert!(d.join("out/head.obj").exists());
}

#[test]
fn empty_pruning_keeps_partial_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    small_scene(d, "");
    fs::write(d.join("cfg.txt"), "prune_extent_low = 1.5\nprune_extent_high = 1.6\nhull_resolution = 64\n").unwrap();
    let o = hairpipe(&["run", "scene", "--db", "scene/db", "--config", "cfg.txt", "--out", "out"], d);
    assert!(!o.status.success());
    let err = stderr(&o);
    assert!(err.contains("stage `retrieval`") && err.contains("relax the prune_* ratios"), "{err}");
    for f in ["head.obj", "hull.obj", "query.hstr"] {
        assert!(d.join("out").join(f).exists(), "missing {f}");
    }
    assert!(!d.join("out/strands.hstr").exists());
}

#[test]
fn bad_inputs_exit_nonzero() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    fs::write(d.join("cfg.txt"), "no_such_key = 1\n").unwrap();
    let o = hairpipe(&["run", "missing", "--db", "db", "--config", "cfg.txt"], d);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("unknown key `no_such_key`"), "{}", stderr(&o));

    let o = hairpipe(&["run", "missing", "--db", "db"], d);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("stage `load`"), "{}", stderr(&o));

    let o = hairdb(&["build", "missing"], d);
    assert!(!o.status.success());
}
