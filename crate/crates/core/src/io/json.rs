//! JSON documents: cameras, connectivity graphs and configuration files.

use std::fs;
use std::path::Path;

use nalgebra::{Matrix3, Vector2, Vector3};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scene::{Camera, ConnectivityGraph, RigidTransform};

/// Pinhole camera with a world-to-camera pose: `x_cam = R·x_world + t`.
/// Camera axes are x right, y down, z forward.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraJson {
    pub focal: f64,
    pub width: usize,
    pub height: usize,
    pub principal_point: [f64; 2],
    /// Row-major rotation.
    pub rotation: [[f64; 3]; 3],
    pub translation: [f64; 3],
}

impl From<&Camera> for CameraJson {
    fn from(c: &Camera) -> Self {
        let r = &c.pose.rotation;
        Self {
            focal: c.focal,
            width: c.width,
            height: c.height,
            principal_point: [c.principal_point.x, c.principal_point.y],
            rotation: [0, 1, 2].map(|i| [r[(i, 0)], r[(i, 1)], r[(i, 2)]]),
            translation: [c.pose.translation.x, c.pose.translation.y, c.pose.translation.z],
        }
    }
}

impl CameraJson {
    pub fn to_camera(&self) -> Result<Camera> {
        let r = &self.rotation;
        let camera = Camera {
            focal: self.focal,
            principal_point: Vector2::new(self.principal_point[0], self.principal_point[1]),
            width: self.width,
            height: self.height,
            pose: RigidTransform::new(
                Matrix3::new(r[0][0], r[0][1], r[0][2], r[1][0], r[1][1], r[1][2], r[2][0], r[2][1], r[2][2]),
                Vector3::from(self.translation),
            ),
        };
        camera.validate()?;
        Ok(camera)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphJson {
    pub vertices: usize,
    pub edges: Vec<[usize; 2]>,
}

impl From<&ConnectivityGraph> for GraphJson {
    fn from(g: &ConnectivityGraph) -> Self {
        Self {
            vertices: g.vertex_count,
            edges: g.edges.iter().map(|&(a, b)| [a, b]).collect(),
        }
    }
}

impl GraphJson {
    pub fn to_graph(&self) -> Result<ConnectivityGraph> {
        ConnectivityGraph::new(self.vertices, self.edges.iter().map(|e| (e[0], e[1])).collect())
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::format("JSON", path, e.to_string()))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Reads a data document; parse failures are data errors.
pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::format("JSON", path, e.to_string()))
}

/// Reads a configuration document; missing files and parse failures are config errors.
pub fn read_config<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

pub fn write_camera(path: &Path, camera: &Camera) -> Result<()> {
    write_json(path, &CameraJson::from(camera))
}

pub fn read_camera(path: &Path) -> Result<Camera> {
    read_json::<CameraJson>(path)?.to_camera()
}

pub fn write_cameras(path: &Path, cameras: &[Camera]) -> Result<()> {
    write_json(path, &cameras.iter().map(CameraJson::from).collect::<Vec<_>>())
}

pub fn read_cameras(path: &Path) -> Result<Vec<Camera>> {
    read_json::<Vec<CameraJson>>(path)?.iter().map(CameraJson::to_camera).collect()
}

pub fn write_graph(path: &Path, graph: &ConnectivityGraph) -> Result<()> {
    write_json(path, &GraphJson::from(graph))
}

pub fn read_graph(path: &Path) -> Result<ConnectivityGraph> {
    read_json::<GraphJson>(path)?.to_graph()
}
