use regiontrack_core::image::RgbImage;
use regiontrack_core::{PinholeCamera, RigidPose, TemplateSet};

/// Draws the closest view's contour samples at `pose` as small crosses.
pub fn draw_contour(img: &mut RgbImage, cam: &PinholeCamera, templates: &TemplateSet, pose: &RigidPose, color: [u8; 3]) {
    let Ok(view) = templates.closest_view(pose) else {
        return;
    };
    for s in &templates.templates[view].contour {
        let Ok(uv) = cam.project(&pose.transform_point(&s.point)) else {
            continue;
        };
        let (x, y) = (uv.x.round() as i64, uv.y.round() as i64);
        for d in -2..=2i64 {
            for (px, py) in [(x + d, y), (x, y + d)] {
                if img.in_bounds(px, py) {
                    img.set(px as usize, py as usize, color);
                }
            }
        }
    }
}
