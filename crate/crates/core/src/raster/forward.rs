use nalgebra::Vector3;
use rayon::prelude::*;

use super::project::{project_gaussian, ProjectedGaussian};
use super::RenderSettings;
use crate::error::{Error, Result};
use crate::scene::{Camera, DepthMap, GaussianCloud, ImageBuffer};

#[derive(Debug, Clone, PartialEq)]
pub struct RenderOutput {
    pub color: ImageBuffer,
    pub depth: DepthMap,
    /// Accumulated opacity `Σ σ_i T_i`, row-major.
    pub alpha: Vec<f64>,
    /// Set when every primitive was culled and the output is pure background.
    pub all_culled: bool,
    pub visible: usize,
}

/// Projected primitives sorted front to back, plus per-tile index lists.
pub(crate) struct Binning {
    pub projected: Vec<ProjectedGaussian>,
    pub tiles: Vec<Tile>,
}

pub(crate) struct Tile {
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
    /// Indices into `Binning::projected`, in depth order.
    pub list: Vec<usize>,
}

pub(crate) fn bin(cloud: &GaussianCloud, camera: &Camera, settings: &RenderSettings) -> Binning {
    let mut projected: Vec<ProjectedGaussian> = cloud
        .primitives
        .par_iter()
        .enumerate()
        .map(|(i, p)| project_gaussian(i, p, camera, settings))
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect();
    // Stable: equal depths keep primitive index order.
    projected.sort_by(|a, b| a.view_depth.total_cmp(&b.view_depth));

    let ts = settings.tile_size.max(1);
    let tiles_x = camera.width.div_ceil(ts);
    let tiles_y = camera.height.div_ceil(ts);
    let mut tiles: Vec<Tile> = (0..tiles_y)
        .flat_map(|ty| {
            (0..tiles_x).map(move |tx| Tile {
                x0: tx * ts,
                y0: ty * ts,
                x1: ((tx + 1) * ts).min(camera.width),
                y1: ((ty + 1) * ts).min(camera.height),
                list: Vec::new(),
            })
        })
        .collect();

    let (w, h) = (camera.width as f64, camera.height as f64);
    for (k, g) in projected.iter().enumerate() {
        // Axis-aligned extents of the cutoff ellipse, plus one pixel of slack
        // so rounding in the per-pixel test can never accept a pixel outside.
        let rx = settings.cutoff_sigma * g.cov2d[(0, 0)].sqrt() + 1.0;
        let ry = settings.cutoff_sigma * g.cov2d[(1, 1)].sqrt() + 1.0;
        let (xmin, xmax) = (g.mean2d.x - rx, g.mean2d.x + rx);
        let (ymin, ymax) = (g.mean2d.y - ry, g.mean2d.y + ry);
        if !(xmax >= 0.0 && ymax >= 0.0 && xmin <= w - 1.0 && ymin <= h - 1.0) {
            continue;
        }
        let px0 = xmin.ceil().max(0.0) as usize;
        let py0 = ymin.ceil().max(0.0) as usize;
        let px1 = (xmax.floor().min(w - 1.0)) as usize;
        let py1 = (ymax.floor().min(h - 1.0)) as usize;
        if px0 > px1 || py0 > py1 {
            continue;
        }
        for ty in py0 / ts..=py1 / ts {
            for tx in px0 / ts..=px1 / ts {
                tiles[ty * tiles_x + tx].list.push(k);
            }
        }
    }
    Binning { projected, tiles }
}

/// Per-pixel compositing result before clamping.
pub(crate) struct PixelAccum {
    pub color: Vector3<f64>,
    pub depth: f64,
    pub alpha: f64,
}

/// Front-to-back compositing of one pixel over a depth-ordered list. Calls
/// `visit(position_in_list, sigma, transmittance_before, gaussian_value)` for
/// every contribution.
#[inline]
pub(crate) fn composite_pixel(
    px: f64,
    py: f64,
    list: &[usize],
    projected: &[ProjectedGaussian],
    settings: &RenderSettings,
    mut visit: impl FnMut(usize, f64, f64, f64, f64),
) -> PixelAccum {
    let cutoff_sq = settings.cutoff_sigma * settings.cutoff_sigma;
    // Footprint is shifted down so it reaches exactly zero at the cutoff.
    let floor = (-0.5 * cutoff_sq).exp();
    let mut t = 1.0;
    let mut acc = PixelAccum {
        color: Vector3::zeros(),
        depth: 0.0,
        alpha: 0.0,
    };
    for (pos, &k) in list.iter().enumerate() {
        let g = &projected[k];
        let q = g.mahalanobis_sq(px, py);
        if q > cutoff_sq {
            continue;
        }
        let e = (-0.5 * q).exp();
        let gv = e - floor;
        let sigma = g.opacity * gv;
        let w = sigma * t;
        acc.color += g.rgb * w;
        acc.depth += g.view_depth * w;
        acc.alpha += w;
        visit(pos, sigma, t, gv, e);
        t *= 1.0 - sigma;
        if t < settings.min_transmittance {
            break;
        }
    }
    acc
}

/// Renders color, depth and accumulated alpha of `cloud` seen from `camera`.
pub fn render(cloud: &GaussianCloud, camera: &Camera, settings: &RenderSettings) -> Result<RenderOutput> {
    if cloud.is_empty() {
        return Err(Error::EmptyCloud("cannot render an empty cloud".into()));
    }
    cloud.validate()?;
    camera.validate()?;
    settings.validate()?;
    let binning = bin(cloud, camera, settings);
    let (w, h) = (camera.width, camera.height);

    let tile_pixels: Vec<Vec<PixelAccum>> = binning
        .tiles
        .par_iter()
        .map(|tile| {
            let mut out = Vec::with_capacity((tile.x1 - tile.x0) * (tile.y1 - tile.y0));
            for y in tile.y0..tile.y1 {
                for x in tile.x0..tile.x1 {
                    out.push(composite_pixel(
                        x as f64,
                        y as f64,
                        &tile.list,
                        &binning.projected,
                        settings,
                        |_, _, _, _, _| {},
                    ));
                }
            }
            out
        })
        .collect();

    let mut color = ImageBuffer::zeros(w, h);
    let mut depth = DepthMap::zeros(w, h);
    let mut alpha = vec![0.0; w * h];
    for (tile, pixels) in binning.tiles.iter().zip(tile_pixels) {
        let mut it = pixels.into_iter();
        for y in tile.y0..tile.y1 {
            for x in tile.x0..tile.x1 {
                let p = it.next().expect("tile pixel count");
                let i = y * w + x;
                color.set_pixel(x, y, &p.color.map(|c| c.clamp(0.0, 1.0)));
                depth.data[i] = p.depth;
                alpha[i] = p.alpha;
            }
        }
    }
    Ok(RenderOutput {
        color,
        depth,
        alpha,
        all_culled: binning.projected.is_empty(),
        visible: binning.projected.len(),
    })
}
