use std::path::Path;

use image::{Rgb, RgbImage};

use super::EvalGrid;
use crate::model::{Group, ModelType};

const CELL: u32 = 24;
const ABSENT: Rgb<u8> = Rgb([200, 200, 200]);

/// Red (0) through yellow (0.5) to green (1).
fn color(f1: f64) -> Rgb<u8> {
    let t = f1.clamp(0.0, 1.0);
    let r = if t < 0.5 { 255.0 } else { 255.0 * (1.0 - t) * 2.0 };
    let g = if t < 0.5 { 255.0 * t * 2.0 } else { 255.0 };
    Rgb([r.round() as u8, g.round() as u8, 40])
}

/// Heatmap of one (model type, group): rows are window lengths `w` (top is
/// 1), columns prediction days `p`; absent cells are grey.
pub fn render_heatmap(grid: &EvalGrid, model_type: ModelType, group: Group) -> RgbImage {
    let mut img = RgbImage::new(grid.p_max * CELL, grid.w_max * CELL);
    for w in 1..=grid.w_max {
        for p in 1..=grid.p_max {
            let c = grid.get(model_type, group, w, p).map_or(ABSENT, color);
            for dy in 1..CELL {
                for dx in 1..CELL {
                    img.put_pixel((p - 1) * CELL + dx, (w - 1) * CELL + dy, c);
                }
            }
        }
    }
    img
}

/// Writes one PNG per evaluated combination into `dir`, named
/// `<model_type>_<group>.png`, and returns the paths.
pub fn write_heatmaps(grid: &EvalGrid, dir: &Path) -> Result<Vec<std::path::PathBuf>, image::ImageError> {
    std::fs::create_dir_all(dir)?;
    let mut out = Vec::new();
    for (m, g) in grid.combos() {
        let path = dir.join(format!("{}_{}.png", m.name().to_lowercase(), g.name()));
        render_heatmap(grid, m, g).save_with_format(&path, image::ImageFormat::Png)?;
        out.push(path);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn color_ramp_ends() {
        assert_eq!(color(0.0), Rgb([255, 0, 40]));
        assert_eq!(color(1.0), Rgb([0, 255, 40]));
        assert_eq!(color(0.5), Rgb([255, 255, 40]));
    }
}
