//! Template and distance-volume cache files.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use regiontrack_core::viewspace::{build_view, sample_sphere, TemplateConfig};
use regiontrack_core::{DistanceVolume, PinholeCamera, TemplateSet, TriangleMesh};

use crate::error::{Error, Result};

/// Parallel counterpart of `viewspace::build_templates`; the result is
/// identical to the sequential build.
pub fn build_templates(mesh: &TriangleMesh, cam: &PinholeCamera, cfg: &TemplateConfig, model_id: &str) -> Result<TemplateSet> {
    if cfg.n_contour == 0 || cfg.n_interior == 0 {
        return Err(regiontrack_core::Error::InvalidParameter("sample counts must be positive".into()).into());
    }
    let diameter = mesh.diameter()?;
    let dirs = sample_sphere();
    let templates = dirs
        .par_iter()
        .enumerate()
        .map(|(i, v)| build_view(mesh, cam, cfg, diameter, i, v))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    Ok(TemplateSet {
        model_id: model_id.into(),
        config: *cfg,
        camera: *cam,
        bbox: mesh.bounding_box(),
        diameter,
        templates,
    })
}

/// The volume cache sits next to the template file with a `.vol` extension.
pub fn volume_path(template_path: &Path) -> PathBuf {
    template_path.with_extension("vol")
}

pub fn save_templates(path: &Path, set: &TemplateSet) -> Result<()> {
    fs::write(path, set.to_bytes()).map_err(|e| Error::io(path, e))
}

pub fn load_templates(path: &Path) -> Result<TemplateSet> {
    let data = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(TemplateSet::from_bytes(&data)?)
}

pub fn save_volume(path: &Path, vol: &DistanceVolume) -> Result<()> {
    fs::write(path, vol.to_bytes()).map_err(|e| Error::io(path, e))
}

pub fn load_volume(path: &Path) -> Result<DistanceVolume> {
    let data = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(DistanceVolume::from_bytes(&data)?)
}
