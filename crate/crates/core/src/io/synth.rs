//! Synthetic scenes with exact ground truth.
//!
//! A random Gaussian cloud sits inside a box around the center of a camera
//! ring. Camera 0 is at the world origin looking down `+z`, so the world
//! frame is camera 0's frame. References come from the crate's own renderer;
//! point maps unproject the alpha-normalized rendered depth through the exact
//! pinhole model, and pairwise maps re-express them in the edge's first view
//! with a random per-edge scale.

use std::f64::consts::PI;

use nalgebra::{Vector3, Vector4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::bundle::{SceneBundle, ViewSet};
use super::png::quantized;
use crate::align::EdgeObservation;
use crate::error::{Error, Result};
use crate::raster::{render, RenderSettings};
use crate::scene::{logit, sh, Camera, ConnectivityGraph, DepthMap, GaussianCloud, GaussianPrimitive, PointMap};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSpec {
    pub primitives: usize,
    /// Half-width of the cube, centered on the ring center, holding the cloud.
    pub scene_extent: f64,
    pub cameras: usize,
    /// Extra cameras placed halfway between training cameras.
    pub holdout: usize,
    pub ring_radius: f64,
    pub focal: f64,
    pub width: usize,
    pub height: usize,
    pub sh_degree: usize,
    pub scale_range: [f64; 2],
    pub opacity_range: [f64; 2],
    /// Standard deviation of Gaussian noise added to point-map coordinates.
    pub point_noise: f64,
    /// Fraction of point-map pixels given zero confidence and a corrupted point.
    pub dropout: f64,
    pub pair_scale_range: [f64; 2],
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            primitives: 120,
            scene_extent: 0.7,
            cameras: 8,
            holdout: 1,
            ring_radius: 3.0,
            focal: 60.0,
            width: 64,
            height: 48,
            sh_degree: 0,
            scale_range: [0.08, 0.25],
            opacity_range: [0.5, 0.95],
            point_noise: 0.0,
            dropout: 0.0,
            pair_scale_range: [0.5, 2.0],
        }
    }
}

fn range_ok(r: [f64; 2], lo: f64, hi: f64) -> bool {
    r[0].is_finite() && r[1].is_finite() && lo <= r[0] && r[0] <= r[1] && r[1] <= hi
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let ok = self.primitives > 0
            && self.cameras >= 2
            && self.width >= 4
            && self.height >= 4
            && self.focal > 0.0
            && self.scene_extent > 0.0
            && self.ring_radius > 2.0 * self.scene_extent
            && self.sh_degree <= crate::scene::MAX_SH_DEGREE
            && range_ok(self.scale_range, f64::MIN_POSITIVE, f64::INFINITY)
            && range_ok(self.opacity_range, 1e-6, 1.0 - 1e-6)
            && range_ok(self.pair_scale_range, f64::MIN_POSITIVE, f64::INFINITY)
            && self.point_noise >= 0.0
            && (0.0..1.0).contains(&self.dropout);
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid synthetic scene spec: {self:?}")))
        }
    }

    pub fn ring_center(&self) -> Vector3<f64> {
        Vector3::new(0.0, 0.0, self.ring_radius)
    }

    /// Camera at ring angle `theta`; angle 0 is the world origin.
    pub fn ring_camera(&self, theta: f64) -> Result<Camera> {
        let c = self.ring_center();
        let eye = c + self.ring_radius * Vector3::new(-theta.sin(), 0.0, -theta.cos());
        Camera::look_at(self.focal, self.width, self.height, &eye, &c)
    }
}

fn sample(rng: &mut ChaCha8Rng, r: [f64; 2]) -> f64 {
    if r[0] == r[1] {
        r[0]
    } else {
        rng.random_range(r[0]..r[1])
    }
}

fn random_cloud(spec: &SynthSpec, rng: &mut ChaCha8Rng) -> Result<GaussianCloud> {
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let center = spec.ring_center();
    let n_coeffs = sh::coeff_count(spec.sh_degree);
    let primitives = (0..spec.primitives)
        .map(|_| {
            let position = center + Vector3::from_fn(|_, _| rng.random_range(-spec.scene_extent..spec.scene_extent));
            let rotation = Vector4::from_fn(|_, _| normal.sample(rng)).normalize();
            let log_scales = Vector3::from_fn(|_, _| {
                let (lo, hi) = (spec.scale_range[0].ln(), spec.scale_range[1].ln());
                if lo == hi {
                    lo
                } else {
                    rng.random_range(lo..hi)
                }
            });
            let opacity_logit = logit(sample(rng, spec.opacity_range));
            let rgb = Vector3::from_fn(|_, _| rng.random_range(0.1..0.9));
            let mut sh_coeffs = vec![sh::rgb_to_dc(&rgb)];
            sh_coeffs.extend((1..n_coeffs).map(|_| Vector3::from_fn(|_, _| 0.05 * normal.sample(rng))));
            GaussianPrimitive {
                position,
                rotation,
                log_scales,
                opacity_logit,
                sh_coeffs,
            }
        })
        .collect();
    GaussianCloud::new(primitives, spec.sh_degree)
}

fn f32_round(v: f64) -> f64 {
    f64::from(v as f32)
}

fn quantize_map(map: PointMap) -> PointMap {
    PointMap {
        points: map.points.iter().map(|p| p.map(f32_round)).collect(),
        confidence: map.confidence.iter().map(|&c| f32_round(c)).collect(),
        ..map
    }
}

struct RenderedView {
    image: crate::scene::ImageBuffer,
    depth: DepthMap,
    /// Camera-frame points from the alpha-normalized depth.
    points: Vec<Vector3<f64>>,
    confidence: Vec<f64>,
}

fn render_view(cloud: &GaussianCloud, camera: &Camera) -> Result<RenderedView> {
    let out = render(cloud, camera, &RenderSettings::default())?;
    let mut points = Vec::with_capacity(camera.pixel_count());
    let mut confidence = Vec::with_capacity(camera.pixel_count());
    for k in 0..camera.pixel_count() {
        let alpha = out.alpha[k];
        let (i, j) = (k % camera.width, k / camera.width);
        if alpha > 0.0 {
            points.push(camera.unproject(i as f64, j as f64, out.depth.data[k] / alpha));
            // Pixels covered by less than half an opaque layer fall below 1.
            confidence.push(2.0 * alpha);
        } else {
            points.push(Vector3::zeros());
            confidence.push(0.0);
        }
    }
    Ok(RenderedView {
        image: quantized(&out.color),
        depth: DepthMap {
            data: out.depth.data.iter().map(|&d| f32_round(d)).collect(),
            ..out.depth
        },
        points,
        confidence,
    })
}

/// Applies noise and dropout to a point map's coordinates and confidences.
fn perturb(
    points: &[Vector3<f64>],
    confidence: &[f64],
    spec: &SynthSpec,
    rng: &mut ChaCha8Rng,
) -> (Vec<Vector3<f64>>, Vec<f64>) {
    let noise = Normal::new(0.0, spec.point_noise.max(f64::MIN_POSITIVE)).expect("finite noise");
    points
        .iter()
        .zip(confidence)
        .map(|(p, &c)| {
            if spec.dropout > 0.0 && rng.random::<f64>() < spec.dropout {
                let junk = Vector3::from_fn(|_, _| rng.random_range(-10.0..10.0));
                return (junk, 0.0);
            }
            let p = if spec.point_noise > 0.0 {
                p + Vector3::from_fn(|_, _| noise.sample(rng))
            } else {
                *p
            };
            (p, c)
        })
        .unzip()
}

pub fn synth(spec: &SynthSpec, seed: u64) -> Result<SceneBundle> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cloud = random_cloud(spec, &mut rng)?;
    let step = 2.0 * PI / spec.cameras as f64;
    let cameras: Vec<Camera> = (0..spec.cameras)
        .map(|k| spec.ring_camera(k as f64 * step))
        .collect::<Result<_>>()?;
    let views: Vec<RenderedView> = cameras.iter().map(|c| render_view(&cloud, c)).collect::<Result<_>>()?;

    let point_maps = views
        .iter()
        .map(|v| {
            let (points, confidence) = perturb(&v.points, &v.confidence, spec, &mut rng);
            let colors = (0..v.image.width * v.image.height)
                .map(|k| v.image.pixel(k % v.image.width, k / v.image.width))
                .collect();
            PointMap::new(spec.width, spec.height, points, confidence)?
                .with_colors(colors)
                .map(quantize_map)
        })
        .collect::<Result<Vec<_>>>()?;

    let graph = ConnectivityGraph::complete(spec.cameras);
    let pairs = graph
        .edges
        .iter()
        .map(|&(a, b)| {
            let scale = sample(&mut rng, spec.pair_scale_range);
            let anchor = &cameras[a].pose;
            let maps = [a, b].map(|v| {
                let to_world = cameras[v].pose.inverse();
                let moved: Vec<Vector3<f64>> = views[v]
                    .points
                    .iter()
                    .map(|p| scale * anchor.apply(&to_world.apply(p)))
                    .collect();
                let (points, confidence) = perturb(&moved, &views[v].confidence, spec, &mut rng);
                PointMap::new(spec.width, spec.height, points, confidence).map(quantize_map)
            });
            let [m0, m1] = maps;
            Ok(EdgeObservation {
                views: (a, b),
                maps: [m0?, m1?],
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let holdout = if spec.holdout > 0 {
        let cams: Vec<Camera> = (0..spec.holdout)
            .map(|k| {
                let slot = (k * spec.cameras / spec.holdout) as f64 + 0.5;
                spec.ring_camera(slot * step)
            })
            .collect::<Result<_>>()?;
        let rendered: Vec<RenderedView> = cams.iter().map(|c| render_view(&cloud, c)).collect::<Result<_>>()?;
        let (images, depths) = rendered.into_iter().map(|v| (v.image, v.depth)).unzip();
        Some(ViewSet {
            cameras: cams,
            images,
            depths,
        })
    } else {
        None
    };

    let (images, depths) = views.into_iter().map(|v| (v.image, v.depth)).unzip();
    let bundle = SceneBundle {
        train: ViewSet {
            cameras,
            images,
            depths,
        },
        point_maps,
        graph,
        pairs,
        holdout,
        ground_truth: Some(cloud),
    };
    bundle.validate()?;
    Ok(bundle)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::RigidTransform;

    fn small() -> SynthSpec {
        SynthSpec {
            primitives: 20,
            cameras: 3,
            width: 24,
            height: 18,
            focal: 24.0,
            ..SynthSpec::default()
        }
    }

    #[test]
    fn first_camera_is_world_frame() {
        let spec = SynthSpec::default();
        let cam = spec.ring_camera(0.0).unwrap();
        assert_eq!(cam.pose, RigidTransform::identity());
    }

    #[test]
    fn counts_and_determinism() {
        let spec = SynthSpec {
            cameras: 4,
            ..small()
        };
        let a = synth(&spec, 5).unwrap();
        assert_eq!(a.train.len(), 4);
        assert_eq!(a.pairs.len(), 6);
        assert_eq!(a.holdout.as_ref().unwrap().len(), 1);
        let b = synth(&spec, 5).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, synth(&spec, 6).unwrap());
    }

    #[test]
    fn invalid_spec_is_config_error() {
        let spec = SynthSpec {
            cameras: 1,
            ..small()
        };
        assert!(matches!(synth(&spec, 0), Err(Error::Config(_))));
    }
}
