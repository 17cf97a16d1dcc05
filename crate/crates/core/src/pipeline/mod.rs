//! End-to-end reconstruction from a scene directory and a hairstyle
//! database, plus evaluation helpers and the synthetic scene generator.

pub mod eval;
pub mod synth;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::{info, warn};
use rayon::prelude::*;

use crate::database::{load_database, prune, retrieve, DbEntry, HairDatabase, PruneBounds, RoughMeshParams};
use crate::deform::{
    build_orientation_field, deform_hairstyle, final_select, register_mesh, regrow_strands, resample_set, view_correct,
    AnchorTransforms, BlendParams, FieldParams, OrientationField, RegistrationParams, RegrowParams,
};
use crate::error::{Error, Result};
use crate::geom::TriangleMesh;
use crate::hull::{carve, confidence_region, flag_confidence, hull_grid, label_hull_hair, reject_blurred_frames};
use crate::hull::{ConfidenceRegion, VisualHull};
use crate::scene::{self, io, CameraFrame, Raster, Scene, StrandSet};
use crate::strands2d::TraceParams;
use crate::strands2d::{grayscale, orient_strands, orientation_map, select_frames, trace_strands, FilterBank};
use crate::strands3d::{lift_strands, merge_strands, remove_peaks, QueryStrands};
use crate::{SceneConfig, Vec3};

pub use eval::{evaluate_iou, morph, recolor, strand_colors, strand_set_gap};
pub use synth::{generate_synthetic, generate_synthetic_scene, SynthScene, SynthSpec};

#[derive(Debug, Clone, PartialEq)]
pub struct StageTiming {
    pub stage: &'static str,
    pub seconds: f64,
}

/// Outcome of deforming one retrieved candidate.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateOutcome {
    pub id: String,
    pub retrieval_distance: f64,
    /// Registration residual, or the error message when deformation failed.
    pub registration: std::result::Result<f64, String>,
    /// Distance of the deformed candidate to the query strands.
    pub deformed_distance: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PipelineReport {
    pub stages: Vec<StageTiming>,
    pub frames_total: usize,
    pub frames_rejected: Vec<u32>,
    pub frames_selected: Vec<u32>,
    pub hull_vertices: usize,
    pub hair_vertices: usize,
    pub query_strands: usize,
    pub candidates_after_prune: usize,
    pub candidates: Vec<CandidateOutcome>,
    pub best: String,
    pub roots_attempted: usize,
    pub strands_out: usize,
    pub iou: Vec<(u32, f64)>,
    pub outputs: Vec<PathBuf>,
}

impl PipelineReport {
    pub fn mean_iou(&self) -> f64 {
        if self.iou.is_empty() {
            return 0.0;
        }
        self.iou.iter().map(|x| x.1).sum::<f64>() / self.iou.len() as f64
    }

    /// Plain-text report. Timings are optional so that two runs can be
    /// compared byte for byte.
    pub fn to_text(&self, timings: bool) -> String {
        let mut s = String::new();
        if timings {
            for t in &self.stages {
                let _ = writeln!(s, "stage {} {:.3}s", t.stage, t.seconds);
            }
        } else {
            for t in &self.stages {
                let _ = writeln!(s, "stage {}", t.stage);
            }
        }
        let _ = writeln!(s, "frames {} rejected {:?}", self.frames_total, self.frames_rejected);
        let _ = writeln!(s, "selected frames {:?}", self.frames_selected);
        let _ = writeln!(s, "hull vertices {} hair {}", self.hull_vertices, self.hair_vertices);
        let _ = writeln!(s, "query strands {}", self.query_strands);
        let _ = writeln!(s, "candidates after pruning {}", self.candidates_after_prune);
        for c in &self.candidates {
            let reg = match &c.registration {
                Ok(r) => format!("residual {r:.6}"),
                Err(e) => format!("failed: {e}"),
            };
            let d = c.deformed_distance.map_or("-".to_string(), |d| format!("{d:.6}"));
            let _ = writeln!(s, "candidate {} retrieval {:.6} {reg} deformed {d}", c.id, c.retrieval_distance);
        }
        let _ = writeln!(s, "best {}", self.best);
        let _ = writeln!(s, "roots {} strands {}", self.roots_attempted, self.strands_out);
        for (id, v) in &self.iou {
            let _ = writeln!(s, "iou frame {id} {v:.4}");
        }
        let _ = writeln!(s, "mean iou {:.4}", self.mean_iou());
        for p in &self.outputs {
            let _ = writeln!(s, "output {}", p.display());
        }
        s
    }
}

/// Everything the pipeline produces.
#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub report: PipelineReport,
    pub hull: VisualHull,
    pub region: ConfidenceRegion,
    pub query: QueryStrands,
    pub best_deformed: StrandSet,
    pub corrected_rough: TriangleMesh,
    pub field: OrientationField,
    /// Final resampled, colored strands.
    pub strands: StrandSet,
}

struct Stages<'a> {
    report: PipelineReport,
    out: Option<&'a Path>,
}

impl Stages<'_> {
    fn run<T>(&mut self, stage: &'static str, f: impl FnOnce() -> Result<T>) -> Result<T> {
        let t0 = Instant::now();
        let r = f().map_err(|e| e.in_stage(stage));
        self.report.stages.push(StageTiming { stage, seconds: t0.elapsed().as_secs_f64() });
        info!("{stage}: {:.2}s", t0.elapsed().as_secs_f64());
        r
    }

    fn emit(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        if let Some(dir) = self.out {
            let p = dir.join(name);
            io::write_file(&p, bytes)?;
            self.report.outputs.push(p);
        }
        Ok(())
    }
}

/// Loads the scene and database named by `cfg`, runs the pipeline and
/// writes every output into `cfg.out_dir`.
pub fn run_pipeline(cfg: &SceneConfig) -> Result<PipelineOutput> {
    cfg.validate()?;
    let scene = scene::load_scene(&cfg.scene_dir, cfg.head_width).map_err(|e| e.in_stage("load"))?;
    let db = load_database(&cfg.db_dir, &RoughMeshParams::from_config(cfg), cfg.db_resample_spacing)
        .map_err(|e| e.in_stage("database"))?;
    let out = run_on(&scene, &db, cfg, Some(&cfg.out_dir))?;
    io::write_file(&cfg.out_dir.join("report.txt"), out.report.to_text(true).as_bytes())?;
    Ok(out)
}

/// Orientation image of a frame: luma of the color layer, or the hair
/// probability when the frame has no color.
pub fn orientation_image(frame: &CameraFrame) -> Raster<f64> {
    match &frame.color {
        Some(c) => grayscale(c),
        None => frame.hair_prob.map(|&p| p as f64),
    }
}

/// Traces, orients, lifts and splits the 2D strands of one frame.
pub fn frame_strands(frame: &CameraFrame, bank: &FilterBank, cfg: &SceneConfig) -> Vec<(scene::Strand, u32)> {
    let hair = Raster::from_fn(frame.width(), frame.height(), |x, y| {
        *frame.mask.get(x, y) && *frame.hair_prob.get(x, y) as f64 > cfg.hair_threshold
    });
    let map = orientation_map(&orientation_image(frame), &hair, bank);
    let traced = trace_strands(&map, &hair, &TraceParams::from_config(cfg));
    let oriented: Vec<_> = orient_strands(&traced, &frame.dir_labels).into_iter().map(|o| o.strand).collect();
    let (lifted, _) = lift_strands(&oriented, frame);
    lifted.iter().flat_map(|s| remove_peaks(s, cfg.peak_threshold)).map(|s| (s, frame.frame_id)).collect()
}

/// Registers, corrects and deforms one database entry onto the hair part of
/// the hull.
pub fn deform_candidate(
    entry: &DbEntry,
    x_h: &TriangleMesh,
    region: &ConfidenceRegion,
    cfg: &SceneConfig,
) -> Result<(StrandSet, AnchorTransforms, f64)> {
    let reg = register_mesh(&entry.rough.mesh, x_h, &RegistrationParams::from_config(cfg))?;
    let anchors = view_correct(
        &entry.rough.mesh,
        &reg.targets,
        region,
        &Vec3::zeros(),
        cfg.correction_lambda,
        cfg.confidence_sigma,
    )?;
    let deformed = deform_hairstyle(&entry.style.strands, &anchors, BlendParams::from_config(cfg));
    Ok((deformed, anchors, reg.residual))
}

/// Runs every stage on in-memory inputs. With `out`, intermediate and final
/// artifacts are written as soon as they exist.
pub fn run_on(scene: &Scene, db: &HairDatabase, cfg: &SceneConfig, out: Option<&Path>) -> Result<PipelineOutput> {
    let mut st =
        Stages { report: PipelineReport { frames_total: scene.frames.len(), ..PipelineReport::default() }, out };
    st.emit("head.obj", io::encode_obj(&scene.head).as_bytes())?;

    let kept = st.run("reject_frames", || reject_blurred_frames(&scene.frames, cfg.blur_area_ratio))?;
    let frames: Vec<CameraFrame> = scene.frames.iter().filter(|f| kept.contains(&f.frame_id)).cloned().collect();
    st.report.frames_rejected = scene.frames.iter().map(|f| f.frame_id).filter(|id| !kept.contains(id)).collect();

    st.run("coverage", || {
        let span = confidence_region(&frames)?.span().to_degrees();
        if span + 1e-9 < cfg.min_view_span_deg {
            return Err(Error::Registration(format!(
                "cameras span {span:.1} degrees of azimuth, at least {} are needed",
                cfg.min_view_span_deg
            )));
        }
        Ok(())
    })?;
    let mut hull =
        st.run("carve", || carve(&frames, hull_grid(&scene.head, cfg.hull_bbox_scale, cfg.hull_resolution)))?;
    let region = st.run("label_hull", || {
        label_hull_hair(&mut hull, &frames, cfg.hair_threshold)?;
        let region = confidence_region(&frames)?;
        flag_confidence(&mut hull.surface, &region, &Vec3::zeros());
        Ok(region)
    })?;
    let x_h = hull.hair_mesh();
    st.report.hull_vertices = hull.surface.vertices.len();
    st.report.hair_vertices = x_h.vertices.len();
    st.emit("hull.obj", io::encode_obj(&hull.surface).as_bytes())?;

    let pieces = st.run("strands2d", || {
        let az: Vec<(u32, f64)> = frames.iter().map(|f| (f.frame_id, f.azimuth)).collect();
        let selected = select_frames(&az, cfg.frame_bin_width);
        let bank = FilterBank::new(cfg.n_filters, cfg.kernel_size, cfg.wavelength, cfg.sigma_across, cfg.sigma_along)?;
        let pieces: Vec<(scene::Strand, u32)> = selected
            .par_iter()
            .map(|id| {
                let f = frames.iter().find(|f| f.frame_id == *id).expect("selected from frames");
                frame_strands(f, &bank, cfg)
            })
            .flatten()
            .collect();
        Ok((selected, pieces))
    })?;
    st.report.frames_selected = pieces.0;
    let query = st.run("strands3d", || {
        if pieces.1.is_empty() {
            return Err(Error::EmptyResult("no 3D strand survived lifting".into()));
        }
        Ok(merge_strands(pieces.1, cfg.merge_distance, cfg.merge_target))
    })?;
    st.report.query_strands = query.len();
    st.emit("query.hstr", io::encode_hstr(&query.set).as_bytes())?;

    let ranking = st.run("retrieval", || {
        let candidates = prune(&x_h, &db.entries, &PruneBounds::from_config(cfg))?;
        Ok((candidates.len(), retrieve(&query.set, db, &candidates, cfg.retrieve_k)?))
    })?;
    st.report.candidates_after_prune = ranking.0;

    let (best_idx, deformed, outcomes) = st.run("deformation", || {
        let mut outcomes = Vec::new();
        let results: Vec<Result<(StrandSet, AnchorTransforms, f64)>> = ranking
            .1
            .par_iter()
            .map(|(id, _)| deform_candidate(db.get(id).expect("ranked ids exist"), &x_h, &region, cfg))
            .collect();
        let mut ok = Vec::new();
        let mut first_err = None;
        for ((id, dist), r) in ranking.1.iter().zip(results) {
            match r {
                Ok((set, anchors, residual)) => {
                    outcomes.push(CandidateOutcome {
                        id: id.clone(),
                        retrieval_distance: *dist,
                        registration: Ok(residual),
                        deformed_distance: None,
                    });
                    ok.push((id.clone(), set, anchors));
                }
                Err(e) => {
                    warn!("candidate {id}: {e}");
                    outcomes.push(CandidateOutcome {
                        id: id.clone(),
                        retrieval_distance: *dist,
                        registration: Err(e.to_string()),
                        deformed_distance: None,
                    });
                    first_err.get_or_insert(e);
                }
            }
        }
        if ok.is_empty() {
            return Err(first_err.unwrap_or_else(|| Error::EmptyResult("no candidate to deform".into())));
        }
        let named: Vec<(String, StrandSet)> = ok.iter().map(|(id, s, _)| (id.clone(), s.clone())).collect();
        let (best, _) = final_select(&named, &query.set).expect("at least one candidate");
        for (id, set) in &named {
            let d = crate::database::StrandIndex::new(set).distance(&query.set);
            if let Some(c) = outcomes.iter_mut().find(|c| &c.id == id) {
                c.deformed_distance = Some(d);
            }
        }
        Ok((best, ok, outcomes))
    })?;
    st.report.candidates = outcomes;
    let (best_id, best_deformed, anchors) = deformed.into_iter().nth(best_idx).expect("valid index");
    st.report.best = best_id.clone();
    let rough = &db.get(&best_id).expect("best exists").rough.mesh;
    let mut corrected = rough.clone();
    corrected.vertices = anchors.deformed.clone();
    st.emit("corrected_rough.obj", io::encode_obj(&corrected).as_bytes())?;
    st.emit("best_deformed.hstr", io::encode_hstr(&best_deformed).as_bytes())?;

    let field = st.run("orientation_field", || {
        build_orientation_field(&best_deformed, &query.set, &scene.head.bbox(), &FieldParams::from_config(cfg))
    })?;
    st.emit("field.ornt", &io::encode_field(field.dims(), &field.directions))?;

    let strands = st.run("regrow", || {
        let grown = regrow_strands(&field, &scene.head, &RegrowParams::from_config(cfg))?;
        let resampled = resample_set(&grown.strands, cfg.resample_count)?;
        Ok((grown.attempted, resampled))
    })?;
    st.report.roots_attempted = strands.0;
    let strands = st.run("texture", || Ok(strand_colors(&strands.1, &frames, cfg.color_depth_tolerance)))?;
    st.report.strands_out = strands.len();
    st.emit("strands.hstr", io::encode_hstr(&strands).as_bytes())?;

    let iou = st.run("evaluate", || {
        frames
            .par_iter()
            .map(|f| {
                let gt = f.hair_prob.map(|&p| p as f64 > cfg.hair_threshold);
                Ok((f.frame_id, evaluate_iou(&strands, f, &gt, cfg.iou_line_width, Some(cfg.color_depth_tolerance))?))
            })
            .collect::<Result<Vec<_>>>()
    })?;
    st.report.iou = iou;

    Ok(PipelineOutput {
        report: st.report,
        hull,
        region,
        query,
        best_deformed,
        corrected_rough: corrected,
        field,
        strands,
    })
}
