//! Joint registration of pairwise point maps.
//!
//! Every edge `e = (a, b)` carries the point maps of both views expressed in
//! the camera frame of its anchor view `a`. Alignment fits a rigid transform
//! `T_e`, a scale `σ_e` per edge and one free point grid `P̃_v` per view so that
//!
//! ```text
//! E = Σ_e Σ_{v∈e} Σ_i ω_{v,e}^i ‖P̃_v^i − σ_e·T_e(P_{v,e}^i)‖
//! ```
//!
//! is minimized. Scales are stored as logs and kept centered, so `Π σ_e = 1`.
//! The first edge touching view 0 has its transform pinned to identity.

use std::f64::consts::PI;

use nalgebra::{Matrix3, Vector3, Vector4};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::procrustes::{umeyama, Similarity};
use crate::error::{Error, Result};
use crate::optim::{Adam, AdamConfig};
use crate::scene::{rotation_matrix, rotation_matrix_backward, ConnectivityGraph, PointMap, RigidTransform};

const EDGE_PARAMS: usize = 8;

/// Pairwise point maps for one graph edge.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeObservation {
    pub views: (usize, usize),
    /// Maps of `views.0` and `views.1`, both in the camera frame of `views.0`.
    pub maps: [PointMap; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AlignConfig {
    pub iterations: usize,
    pub learning_rate: f64,
    pub adam: AdamConfig,
}

impl Default for AlignConfig {
    fn default() -> Self {
        Self {
            iterations: 300,
            learning_rate: 0.01,
            adam: AdamConfig::default(),
        }
    }
}

impl AlignConfig {
    pub fn validate(&self) -> Result<()> {
        self.adam.validate()?;
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(Error::Config(format!("invalid alignment learning rate {}", self.learning_rate)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EdgeAlignment {
    pub views: (usize, usize),
    /// Unit quaternion `(w, x, y, z)`.
    pub rotation: Vector4<f64>,
    pub translation: Vector3<f64>,
    pub log_scale: f64,
}

impl EdgeAlignment {
    pub fn scale(&self) -> f64 {
        self.log_scale.exp()
    }

    pub fn transform(&self) -> RigidTransform {
        RigidTransform::new(rotation_matrix(&self.rotation), self.translation)
    }

    /// `σ_e·T_e(p)`.
    pub fn apply(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.scale() * self.transform().apply(p)
    }
}

#[derive(Debug, Clone)]
pub struct AlignmentState {
    pub edges: Vec<EdgeAlignment>,
    /// Per-view aligned points `P̃_v` in the alignment frame.
    pub points: Vec<PointMap>,
    /// Alignment frame to the reference frame: camera 0 in view-0 map units.
    pub reference: Similarity,
    /// World-to-camera pose of every view in the reference frame; view 0 is identity.
    pub poses: Vec<RigidTransform>,
    /// Objective after initialization and after every accepted step.
    pub objective_trace: Vec<f64>,
    /// `Π σ_e` alongside each objective record.
    pub scale_product_trace: Vec<f64>,
    pub rejected_steps: usize,
}

impl AlignmentState {
    pub fn scale_product(&self) -> f64 {
        self.edges.iter().map(|e| e.log_scale).sum::<f64>().exp()
    }

    pub fn final_objective(&self) -> f64 {
        *self.objective_trace.last().expect("trace starts with the initial objective")
    }

    /// Aligned points mapped into the reference frame.
    pub fn reference_points(&self) -> Vec<PointMap> {
        self.points.iter().map(|m| m.transformed(|p| self.reference.apply(p))).collect()
    }
}

#[derive(Clone)]
struct Params {
    /// Per edge: quaternion, translation, uncentered log scale.
    edge: Vec<f64>,
    points: Vec<Vec<Vector3<f64>>>,
}

impl Params {
    fn quat(&self, e: usize) -> Vector4<f64> {
        let o = e * EDGE_PARAMS;
        Vector4::new(self.edge[o], self.edge[o + 1], self.edge[o + 2], self.edge[o + 3])
    }

    fn translation(&self, e: usize) -> Vector3<f64> {
        let o = e * EDGE_PARAMS + 4;
        Vector3::new(self.edge[o], self.edge[o + 1], self.edge[o + 2])
    }

    fn log_scales(&self) -> Vec<f64> {
        let n = self.edge.len() / EDGE_PARAMS;
        let raw: Vec<f64> = (0..n).map(|e| self.edge[e * EDGE_PARAMS + 7]).collect();
        let mean = raw.iter().sum::<f64>() / n as f64;
        raw.iter().map(|v| v - mean).collect()
    }

    /// Re-centers log scales in place and renormalizes quaternions.
    fn normalize(&mut self) {
        let centered = self.log_scales();
        for (e, s) in centered.into_iter().enumerate() {
            let o = e * EDGE_PARAMS;
            self.edge[o + 7] = s;
            let q = self.quat(e).normalize();
            self.edge[o..o + 4].copy_from_slice(q.as_slice());
        }
    }
}

struct Evaluation {
    value: f64,
    edge_grad: Vec<f64>,
    point_grad: Vec<Vec<Vector3<f64>>>,
}

fn weight(map: &PointMap, i: usize) -> f64 {
    let p = &map.points[i];
    if map.confidence[i] > 0.0 && p.iter().all(|v| v.is_finite()) {
        map.confidence[i]
    } else {
        0.0
    }
}

fn evaluate(edges: &[EdgeObservation], params: &Params, pinned: usize) -> Evaluation {
    let log_scales = params.log_scales();
    let per_edge: Vec<_> = edges
        .par_iter()
        .enumerate()
        .map(|(e, obs)| {
            let q = params.quat(e);
            let r = rotation_matrix(&q);
            let t = params.translation(e);
            let sigma = log_scales[e].exp();
            let mut value = 0.0;
            let mut g_r = Matrix3::zeros();
            let mut g_t = Vector3::zeros();
            let mut g_log = 0.0;
            let mut g_points = [vec![Vector3::zeros(); obs.maps[0].len()], vec![Vector3::zeros(); obs.maps[1].len()]];
            for (k, v) in [obs.views.0, obs.views.1].into_iter().enumerate() {
                let map = &obs.maps[k];
                let target = &params.points[v];
                for i in 0..map.len() {
                    let w = weight(map, i);
                    if w == 0.0 {
                        continue;
                    }
                    let y = r * map.points[i] + t;
                    let res = target[i] - sigma * y;
                    let n = res.norm();
                    value += w * n;
                    if n > 0.0 {
                        let u = (w / n) * res;
                        g_points[k][i] = u;
                        g_t -= sigma * u;
                        g_r -= sigma * u * map.points[i].transpose();
                        g_log -= sigma * u.dot(&y);
                    }
                }
            }
            let g_q = rotation_matrix_backward(&q, &g_r);
            (value, g_q, g_t, g_log, g_points)
        })
        .collect();

    let mut value = 0.0;
    let mut edge_grad = vec![0.0; params.edge.len()];
    let mut point_grad: Vec<Vec<Vector3<f64>>> = params.points.iter().map(|p| vec![Vector3::zeros(); p.len()]).collect();
    let mut log_grads = Vec::with_capacity(edges.len());
    for (e, (v, g_q, g_t, g_log, g_points)) in per_edge.into_iter().enumerate() {
        value += v;
        let o = e * EDGE_PARAMS;
        if e != pinned {
            edge_grad[o..o + 4].copy_from_slice(g_q.as_slice());
            edge_grad[o + 4..o + 7].copy_from_slice(g_t.as_slice());
        }
        log_grads.push(g_log);
        let (a, b) = edges[e].views;
        for (view, g) in [(a, &g_points[0]), (b, &g_points[1])] {
            for (acc, gi) in point_grad[view].iter_mut().zip(g) {
                *acc += gi;
            }
        }
    }
    // The centered log scale depends on every raw entry through the mean.
    let mean = log_grads.iter().sum::<f64>() / log_grads.len() as f64;
    for (e, g) in log_grads.into_iter().enumerate() {
        edge_grad[e * EDGE_PARAMS + 7] = g - mean;
    }
    Evaluation {
        value,
        edge_grad,
        point_grad,
    }
}

fn check_inputs(graph: &ConnectivityGraph, views: &[PointMap], edges: &[EdgeObservation]) -> Result<()> {
    graph.validate()?;
    if views.len() != graph.vertex_count {
        return Err(Error::invalid(format!(
            "graph has {} views but {} view maps were given",
            graph.vertex_count,
            views.len()
        )));
    }
    if edges.len() != graph.edges.len() || edges.iter().zip(&graph.edges).any(|(o, e)| o.views != *e) {
        return Err(Error::InvalidGraph("edge observations do not match the graph edges".into()));
    }
    for obs in edges {
        for (k, v) in [obs.views.0, obs.views.1].into_iter().enumerate() {
            let (m, s) = (&obs.maps[k], &views[v]);
            m.validate()?;
            if (m.width, m.height) != (s.width, s.height) {
                return Err(Error::invalid(format!(
                    "edge {:?} map of view {v} is {}x{}, view is {}x{}",
                    obs.views, m.width, m.height, s.width, s.height
                )));
            }
        }
    }
    Ok(())
}

fn correspondences(
    obs: &EdgeObservation,
    points: &[Option<Vec<Vector3<f64>>>],
) -> (Vec<Vector3<f64>>, Vec<Vector3<f64>>, Vec<f64>) {
    let (mut src, mut dst, mut w) = (Vec::new(), Vec::new(), Vec::new());
    for (k, v) in [obs.views.0, obs.views.1].into_iter().enumerate() {
        let Some(target) = &points[v] else { continue };
        let map = &obs.maps[k];
        for i in 0..map.len() {
            let wi = weight(map, i);
            if wi > 0.0 && target[i].iter().all(|c| c.is_finite()) {
                src.push(map.points[i]);
                dst.push(target[i]);
                w.push(wi);
            }
        }
    }
    (src, dst, w)
}

/// Closed-form start: similarities chained outward from the pinned edge.
fn initialize(graph: &ConnectivityGraph, edges: &[EdgeObservation], pinned: usize) -> Result<Params> {
    let mut sims: Vec<Option<Similarity>> = vec![None; edges.len()];
    let mut seeded: Vec<Option<Vec<Vector3<f64>>>> = vec![None; graph.vertex_count];
    sims[pinned] = Some(Similarity::identity());
    let (a, b) = edges[pinned].views;
    seeded[a] = Some(edges[pinned].maps[0].points.clone());
    seeded[b] = Some(edges[pinned].maps[1].points.clone());
    while sims.iter().any(Option::is_none) {
        let mut progress = false;
        for (e, obs) in edges.iter().enumerate() {
            if sims[e].is_some() || (seeded[obs.views.0].is_none() && seeded[obs.views.1].is_none()) {
                continue;
            }
            let (src, dst, w) = correspondences(obs, &seeded);
            let sim = umeyama(&src, &dst, &w)?;
            for (k, v) in [obs.views.0, obs.views.1].into_iter().enumerate() {
                if seeded[v].is_none() {
                    seeded[v] = Some(obs.maps[k].points.iter().map(|p| sim.apply(p)).collect());
                }
            }
            sims[e] = Some(sim);
            progress = true;
        }
        if !progress {
            return Err(Error::InvalidGraph("edges do not connect to the pinned edge".into()));
        }
    }
    let sims: Vec<Similarity> = sims.into_iter().map(|s| s.expect("all assigned")).collect();

    // Each view starts at the confidence-weighted mean of its edge predictions.
    let mut points: Vec<Vec<Vector3<f64>>> = seeded.into_iter().map(|p| p.expect("graph is connected")).collect();
    let mut sum: Vec<Vec<Vector3<f64>>> = points.iter().map(|p| vec![Vector3::zeros(); p.len()]).collect();
    let mut wsum: Vec<Vec<f64>> = points.iter().map(|p| vec![0.0; p.len()]).collect();
    for (obs, sim) in edges.iter().zip(&sims) {
        for (k, v) in [obs.views.0, obs.views.1].into_iter().enumerate() {
            let map = &obs.maps[k];
            for i in 0..map.len() {
                let w = weight(map, i);
                if w > 0.0 {
                    sum[v][i] += w * sim.apply(&map.points[i]);
                    wsum[v][i] += w;
                }
            }
        }
    }
    for v in 0..points.len() {
        for i in 0..points[v].len() {
            if wsum[v][i] > 0.0 {
                points[v][i] = sum[v][i] / wsum[v][i];
            }
        }
    }

    // Center the log scales; shrinking P̃ by the same factor keeps every
    // residual proportional, so the start stays exact on clean data.
    let logs: Vec<f64> = sims.iter().map(|s| s.scale.ln()).collect();
    let mean = logs.iter().sum::<f64>() / logs.len() as f64;
    let shrink = (-mean).exp();
    points.iter_mut().flatten().for_each(|p| *p *= shrink);
    let mut edge = Vec::with_capacity(edges.len() * EDGE_PARAMS);
    for (e, sim) in sims.iter().enumerate() {
        let rigid = sim.rigid();
        let q = if e == pinned {
            Vector4::new(1.0, 0.0, 0.0, 0.0)
        } else {
            let uq = nalgebra::UnitQuaternion::from_matrix(&rigid.rotation);
            Vector4::new(uq.w, uq.i, uq.j, uq.k)
        };
        edge.extend_from_slice(q.as_slice());
        edge.extend_from_slice(rigid.translation.as_slice());
        edge.push(logs[e] - mean);
    }
    Ok(Params { edge, points })
}

/// Per-view poses from each view's own camera-frame map, relative to view 0.
fn read_poses(views: &[PointMap], points: &[PointMap]) -> Result<(Similarity, Vec<RigidTransform>)> {
    let sims = views
        .iter()
        .zip(points)
        .map(|(own, aligned)| {
            let (mut src, mut dst, mut w) = (Vec::new(), Vec::new(), Vec::new());
            for i in 0..own.len() {
                let wi = weight(own, i).min(weight(aligned, i));
                if wi > 0.0 {
                    src.push(aligned.points[i]);
                    dst.push(own.points[i]);
                    w.push(wi);
                }
            }
            umeyama(&src, &dst, &w)
        })
        .collect::<Result<Vec<_>>>()?;
    let reference = sims[0];
    let r0t = reference.rotation.transpose();
    let poses = sims
        .iter()
        .enumerate()
        .map(|(v, s)| {
            if v == 0 {
                return RigidTransform::identity();
            }
            let rotation = s.rotation * r0t;
            let translation = reference.scale * s.translation / s.scale - rotation * reference.translation;
            RigidTransform::new(rotation, translation)
        })
        .collect();
    Ok((reference, poses))
}

/// Registers all pairwise maps into one frame.
///
/// `views[v]` is view `v`'s own point map in its camera frame; it supplies
/// per-view poses, colors and the unit of the reference frame.
pub fn global_align(
    graph: &ConnectivityGraph,
    views: &[PointMap],
    edges: &[EdgeObservation],
    config: &AlignConfig,
) -> Result<AlignmentState> {
    config.validate()?;
    check_inputs(graph, views, edges)?;
    let pinned = graph
        .edges
        .iter()
        .position(|&(a, b)| a == 0 || b == 0)
        .ok_or_else(|| Error::InvalidGraph("view 0 has no edges".into()))?;
    let mut params = initialize(graph, edges, pinned)?;
    let point_len: usize = params.points.iter().map(Vec::len).sum();
    let mut edge_adam = Adam::new(params.edge.len(), config.adam);
    let mut point_adam = Adam::new(point_len * 3, config.adam);

    let mut current = evaluate(edges, &params, pinned);
    if !current.value.is_finite() {
        return Err(Error::Diverged("alignment objective is not finite at initialization".into()));
    }
    let product = |p: &Params| p.log_scales().iter().sum::<f64>().exp();
    let mut objective_trace = vec![current.value];
    let mut scale_product_trace = vec![product(&params)];
    let mut step_scale = 1.0;
    let mut rejected_steps = 0;
    for k in 0..config.iterations {
        let cosine = 0.5 * (1.0 + (PI * k as f64 / config.iterations as f64).cos());
        let lr = config.learning_rate * cosine * step_scale;
        if lr == 0.0 || current.value == 0.0 {
            break;
        }
        let saved = (params.clone(), edge_adam.clone(), point_adam.clone());

        edge_adam.update(&mut params.edge, &current.edge_grad, lr)?;
        let mut flat: Vec<f64> = params.points.iter().flatten().flat_map(|p| [p.x, p.y, p.z]).collect();
        let flat_grad: Vec<f64> = current.point_grad.iter().flatten().flat_map(|p| [p.x, p.y, p.z]).collect();
        point_adam.update(&mut flat, &flat_grad, lr)?;
        for (p, c) in params.points.iter_mut().flatten().zip(flat.chunks_exact(3)) {
            *p = Vector3::new(c[0], c[1], c[2]);
        }
        params.normalize();

        let next = evaluate(edges, &params, pinned);
        if !next.value.is_finite() {
            return Err(Error::Diverged(format!("alignment objective became {} at step {k}", next.value)));
        }
        if next.value <= current.value {
            current = next;
            objective_trace.push(current.value);
            scale_product_trace.push(product(&params));
            step_scale = (step_scale * 2.0).min(1.0);
        } else {
            (params, edge_adam, point_adam) = saved;
            step_scale *= 0.5;
            rejected_steps += 1;
        }
    }
    log::debug!(
        "alignment: objective {:.6e} -> {:.6e}, {} rejected steps",
        objective_trace[0],
        current.value,
        rejected_steps
    );

    let log_scales = params.log_scales();
    let edge_states: Vec<EdgeAlignment> = (0..edges.len())
        .map(|e| EdgeAlignment {
            views: edges[e].views,
            rotation: params.quat(e),
            translation: params.translation(e),
            log_scale: log_scales[e],
        })
        .collect();
    let points = assemble_points(views, edges, params.points)?;
    let (reference, poses) = read_poses(views, &points)?;
    Ok(AlignmentState {
        edges: edge_states,
        points,
        reference,
        poses,
        objective_trace,
        scale_product_trace,
        rejected_steps,
    })
}

/// Wraps P̃ grids as point maps; confidence is the mean over the view's edges.
fn assemble_points(views: &[PointMap], edges: &[EdgeObservation], points: Vec<Vec<Vector3<f64>>>) -> Result<Vec<PointMap>> {
    let mut conf: Vec<Vec<f64>> = points.iter().map(|p| vec![0.0; p.len()]).collect();
    let mut count = vec![0usize; points.len()];
    for obs in edges {
        for (k, v) in [obs.views.0, obs.views.1].into_iter().enumerate() {
            count[v] += 1;
            for (i, c) in conf[v].iter_mut().enumerate() {
                *c += weight(&obs.maps[k], i);
            }
        }
    }
    points
        .into_iter()
        .enumerate()
        .map(|(v, pts)| {
            let n = count[v].max(1) as f64;
            let c = conf[v].iter().map(|c| c / n).collect();
            let map = PointMap::new(views[v].width, views[v].height, pts, c)?;
            match &views[v].colors {
                Some(colors) => map.with_colors(colors.clone()),
                None => Ok(map),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(w: usize, h: usize, f: impl Fn(usize) -> Vector3<f64>) -> PointMap {
        PointMap::new(w, h, (0..w * h).map(f).collect(), vec![1.0; w * h]).unwrap()
    }

    #[test]
    fn exact_single_edge_starts_at_zero() {
        let a = grid(4, 3, |i| Vector3::new(i as f64 * 0.1, (i % 3) as f64, 2.0 + (i % 5) as f64));
        let b = grid(4, 3, |i| Vector3::new(1.0 - i as f64 * 0.05, (i % 4) as f64 * 0.3, 3.0 + (i % 2) as f64));
        let graph = ConnectivityGraph::new(2, vec![(0, 1)]).unwrap();
        let edges = [EdgeObservation {
            views: (0, 1),
            maps: [a.clone(), b.clone()],
        }];
        let state = global_align(&graph, &[a, b], &edges, &AlignConfig::default()).unwrap();
        assert_eq!(state.objective_trace[0], 0.0);
        assert_eq!(state.edges[0].log_scale, 0.0);
        assert_eq!(state.poses[0], RigidTransform::identity());
    }

    #[test]
    fn mismatched_edges_rejected() {
        let a = grid(4, 3, |i| Vector3::new(i as f64, 0.0, 1.0));
        let graph = ConnectivityGraph::new(3, vec![(0, 1), (1, 2)]).unwrap();
        let edges = [EdgeObservation {
            views: (0, 1),
            maps: [a.clone(), a.clone()],
        }];
        let err = global_align(&graph, &[a.clone(), a.clone(), a], &edges, &AlignConfig::default()).unwrap_err();
        assert!(matches!(err, Error::InvalidGraph(_)));
    }
}
