//! Scene model: camera frames, strands, meshes and their on-disk formats.
//!
//! A scene directory holds `cameras.txt`, `head.obj` (with a `scalp_root`
//! flag channel) and per frame `mask_<id>.pgm`, `hair_prob_<id>.pgm`,
//! `dir_labels_<id>.pgm`, `depth_<id>.dpt` and optionally `color_<id>.ppm`.

pub mod camera;
pub mod io;
pub mod raster;
pub mod strand;

use std::path::{Path, PathBuf};

pub use camera::{azimuth_of, wrap_angle, Camera, CameraFrame, Intrinsics};
pub use raster::{direction_bin, DirLabel, Raster};
pub use strand::{tangents_of, Strand, StrandSet};

use crate::error::{Error, Result};
use crate::geom::TriangleMesh;

pub const SCALP_ROOT: &str = "scalp_root";
pub const FACE: &str = "face";

/// Frames sorted by id, the head mesh, and the similarity scale that was
/// applied on ingest to bring the head width to the reference width.
#[derive(Debug, Clone)]
pub struct Scene {
    pub frames: Vec<CameraFrame>,
    pub head: TriangleMesh,
    pub scale: f64,
}

pub fn layer_path(root: &Path, layer: &str, frame_id: u32, ext: &str) -> PathBuf {
    root.join(format!("{layer}_{frame_id}.{ext}"))
}

/// Loads a scene directory and rescales it so the head mesh's x-extent equals
/// `head_width`. Poses, depths and the head mesh share that scale.
pub fn load_scene(root: &Path, head_width: f64) -> Result<Scene> {
    let cam_path = root.join("cameras.txt");
    let mut cams = io::parse_cameras(&io::read_text(&cam_path)?, &cam_path)?;
    cams.sort_by_key(|(id, _)| *id);
    if let Some(w) = cams.windows(2).find(|w| w[0].0 == w[1].0) {
        return Err(Error::ingest(&cam_path, format!("frame id {} listed twice", w[0].0)));
    }
    let head_path = root.join("head.obj");
    let mut head = io::parse_obj(&io::read_text(&head_path)?, &head_path)?;
    if head.flag(SCALP_ROOT).is_none() {
        return Err(Error::ingest(&head_path, "head mesh has no `scalp_root` flag channel"));
    }
    let xext = head.bbox().extent().x;
    if !(xext > 0.0) {
        return Err(Error::ingest(&head_path, "head mesh has zero width"));
    }
    let mut scale = head_width / xext;
    if (scale - 1.0).abs() < 1e-9 {
        scale = 1.0;
    }

    let mut frames = Vec::with_capacity(cams.len());
    for (id, mut cam) in cams {
        let pgm = |layer: &str| -> Result<Raster<u8>> {
            let p = layer_path(root, layer, id, "pgm");
            io::parse_pgm(&io::read_bytes(&p)?, &p)
        };
        let mask = io::mask_from_pgm(&pgm("mask")?);
        let hair_prob = io::prob_from_pgm(&pgm("hair_prob")?);
        let dir_labels = pgm("dir_labels")?;
        let dpath = layer_path(root, "depth", id, "dpt");
        let mut depth = io::parse_depth(&io::read_bytes(&dpath)?, &dpath)?;
        let cpath = layer_path(root, "color", id, "ppm");
        let color = if cpath.exists() { Some(io::parse_ppm(&io::read_bytes(&cpath)?, &cpath)?) } else { None };
        if scale != 1.0 {
            cam.translation *= scale;
            depth.data.iter_mut().for_each(|d| *d = (*d as f64 * scale) as f32);
        }
        frames.push(CameraFrame::new(id, cam, mask, hair_prob, dir_labels, depth, color)?);
    }
    if scale != 1.0 {
        head.transform_points(|v| v * scale);
    }
    Ok(Scene { frames, head, scale })
}

/// Writes a scene in the layout read by [`load_scene`].
pub fn save_scene(scene: &Scene, root: &Path) -> Result<()> {
    let cams: Vec<(u32, Camera)> = scene.frames.iter().map(|f| (f.frame_id, f.camera.clone())).collect();
    io::write_file(&root.join("cameras.txt"), io::encode_cameras(&cams).as_bytes())?;
    io::write_file(&root.join("head.obj"), io::encode_obj(&scene.head).as_bytes())?;
    for f in &scene.frames {
        let id = f.frame_id;
        io::write_file(&layer_path(root, "mask", id, "pgm"), &io::encode_pgm(&io::mask_to_pgm(&f.mask)))?;
        io::write_file(&layer_path(root, "hair_prob", id, "pgm"), &io::encode_pgm(&io::prob_to_pgm(&f.hair_prob)))?;
        io::write_file(&layer_path(root, "dir_labels", id, "pgm"), &io::encode_pgm(&f.dir_labels))?;
        io::write_file(&layer_path(root, "depth", id, "dpt"), &io::encode_depth(&f.depth))?;
        if let Some(c) = &f.color {
            io::write_file(&layer_path(root, "color", id, "ppm"), &io::encode_ppm(c))?;
        }
    }
    Ok(())
}

pub fn load_strands(path: &Path, tag: &str) -> Result<StrandSet> {
    io::parse_hstr(&io::read_text(path)?, path, tag)
}

pub fn save_strands(set: &StrandSet, path: &Path) -> Result<()> {
    io::write_file(path, io::encode_hstr(set).as_bytes())
}

pub fn load_mesh(path: &Path) -> Result<TriangleMesh> {
    io::parse_obj(&io::read_text(path)?, path)
}

pub fn save_mesh(mesh: &TriangleMesh, path: &Path) -> Result<()> {
    io::write_file(path, io::encode_obj(mesh).as_bytes())
}
