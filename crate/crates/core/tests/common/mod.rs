#![allow(dead_code)]

use nalgebra::{Vector3, Vector4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use sparse_splat::raster::{project_gaussian, render_backward, RenderSettings};
use sparse_splat::scene::{logit, sh, Camera, GaussianCloud, GaussianPrimitive};

/// Up to `max_primitives` random primitives around the origin, seen by a
/// random look-at camera. Opacities stay moderate so transmittance does not
/// reach the early-stop threshold.
pub fn random_scene(seed: u64, max_primitives: usize, size: usize) -> (GaussianCloud, Camera) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let n = rng.random_range(1..=max_primitives);
    let sh_degree = rng.random_range(0..=3);
    let primitives = (0..n)
        .map(|_| {
            let rgb = Vector3::from_fn(|_, _| rng.random_range(0.1..0.7));
            let mut sh_coeffs = vec![sh::rgb_to_dc(&rgb)];
            sh_coeffs.extend((1..sh::coeff_count(sh_degree)).map(|_| Vector3::from_fn(|_, _| 0.1 * normal.sample(&mut rng))));
            GaussianPrimitive {
                position: Vector3::from_fn(|_, _| rng.random_range(-0.6..0.6)),
                rotation: Vector4::from_fn(|_, _| normal.sample(&mut rng)).normalize(),
                log_scales: Vector3::from_fn(|_, _| rng.random_range(0.06f64..0.3).ln()),
                opacity_logit: logit(rng.random_range(0.05..0.7)),
                sh_coeffs,
            }
        })
        .collect();
    let dir = Vector3::from_fn(|_, _| normal.sample(&mut rng)).normalize();
    let mut eye = dir * rng.random_range(2.5..4.0);
    if (eye.normalize().dot(&Vector3::y())).abs() > 0.95 {
        eye.x += 1.0;
    }
    let focal = size as f64 * rng.random_range(0.9..1.4);
    let camera = Camera::look_at(focal, size, size, &eye, &Vector3::zeros()).unwrap();
    (GaussianCloud::new(primitives, sh_degree).unwrap(), camera)
}

pub struct NaiveRender {
    pub color: Vec<f64>,
    pub depth: Vec<f64>,
    pub alpha: Vec<f64>,
}

/// Direct per-pixel front-to-back compositing over every primitive, with no
/// tiling, binning or parallelism.
pub fn naive_render(cloud: &GaussianCloud, camera: &Camera, settings: &RenderSettings) -> NaiveRender {
    let mut projected: Vec<_> = cloud
        .primitives
        .iter()
        .enumerate()
        .filter_map(|(i, p)| project_gaussian(i, p, camera, settings))
        .collect();
    projected.sort_by(|a, b| a.view_depth.partial_cmp(&b.view_depth).unwrap());
    let (w, h) = (camera.width, camera.height);
    let cutoff = settings.cutoff_sigma * settings.cutoff_sigma;
    let floor = (-0.5 * cutoff).exp();
    let mut out = NaiveRender {
        color: vec![0.0; 3 * w * h],
        depth: vec![0.0; w * h],
        alpha: vec![0.0; w * h],
    };
    for y in 0..h {
        for x in 0..w {
            let mut t = 1.0;
            let mut c = Vector3::zeros();
            let (mut d, mut a) = (0.0, 0.0);
            for g in &projected {
                let q = g.mahalanobis_sq(x as f64, y as f64);
                if q > cutoff {
                    continue;
                }
                let s = g.opacity * ((-0.5 * q).exp() - floor);
                let weight = s * t;
                c += g.rgb * weight;
                d += g.view_depth * weight;
                a += weight;
                t *= 1.0 - s;
                if t < settings.min_transmittance {
                    break;
                }
            }
            let i = y * w + x;
            for k in 0..3 {
                out.color[3 * i + k] = c[k].clamp(0.0, 1.0);
            }
            out.depth[i] = d;
            out.alpha[i] = a;
        }
    }
    out
}

/// `Σ wc·C + Σ wd·D` for fixed random weights.
pub struct LinearProbe {
    pub color_weights: Vec<f64>,
    pub depth_weights: Vec<f64>,
}

impl LinearProbe {
    pub fn new(seed: u64, pixels: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self {
            color_weights: (0..3 * pixels).map(|_| rng.random_range(-1.0..1.0)).collect(),
            depth_weights: (0..pixels).map(|_| rng.random_range(-0.2..0.2)).collect(),
        }
    }

    pub fn value(&self, cloud: &GaussianCloud, camera: &Camera, settings: &RenderSettings) -> f64 {
        let out = sparse_splat::raster::render(cloud, camera, settings).unwrap();
        let c: f64 = out.color.data.iter().zip(&self.color_weights).map(|(a, b)| a * b).sum();
        let d: f64 = out.depth.data.iter().zip(&self.depth_weights).map(|(a, b)| a * b).sum();
        c + d
    }
}

#[derive(Debug, Clone, Copy)]
pub struct GradientMismatch {
    pub primitive: usize,
    pub param: usize,
    pub analytic: f64,
    pub numeric: f64,
}

/// Compares every analytic parameter gradient with central differences of
/// step `h`; returns the entries outside `rel` relative and `abs` absolute error.
pub fn gradient_mismatches(
    cloud: &GaussianCloud,
    camera: &Camera,
    settings: &RenderSettings,
    probe: &LinearProbe,
    h: f64,
    rel: f64,
    abs: f64,
) -> (usize, Vec<GradientMismatch>) {
    let grads = render_backward(cloud, camera, settings, &probe.color_weights, &probe.depth_weights).unwrap();
    let flat = grads.flat();
    let per = cloud.params_per_primitive();
    let mut bad = Vec::new();
    let mut work = cloud.clone();
    for i in 0..cloud.len() {
        for k in 0..per {
            let base = *work.param_mut(i, k);
            *work.param_mut(i, k) = base + h;
            let up = probe.value(&work, camera, settings);
            *work.param_mut(i, k) = base - h;
            let down = probe.value(&work, camera, settings);
            *work.param_mut(i, k) = base;
            let numeric = (up - down) / (2.0 * h);
            let analytic = flat[i * per + k];
            let err = (analytic - numeric).abs();
            if err > abs && err > rel * analytic.abs().max(numeric.abs()) {
                bad.push(GradientMismatch {
                    primitive: i,
                    param: k,
                    analytic,
                    numeric,
                });
            }
        }
    }
    (cloud.len() * per, bad)
}
