//! On-disk scene bundle.
//!
//! ```text
//! cameras.json            training cameras
//! graph.json              view connectivity
//! images/NNN.png          reference colors
//! depths/NNN.pfm          reference depths
//! points/NNN.pfm          per-view point map in its own camera frame (+ NNN_conf.pfm)
//! pairs/EEE_0.pfm         edge maps of both views in the first view's frame (+ _conf)
//! pairs/EEE_1.pfm
//! holdout/                optional: cameras.json, images/, depths/
//! ground_truth.ply        optional
//! ```

use std::fs;
use std::path::Path;

use crate::align::EdgeObservation;
use crate::error::{Error, Result};
use crate::scene::{Camera, ConnectivityGraph, DepthMap, GaussianCloud, ImageBuffer, PointMap};

use super::json::{read_cameras, read_graph, write_cameras, write_graph};
use super::pfm::{read_depth, read_point_map, write_depth, write_point_map};
use super::ply::{read_ply, write_ply, PlyFormat};
use super::png::{read_png, write_png};

#[derive(Debug, Clone, PartialEq)]
pub struct ViewSet {
    pub cameras: Vec<Camera>,
    pub images: Vec<ImageBuffer>,
    pub depths: Vec<DepthMap>,
}

impl ViewSet {
    pub fn len(&self) -> usize {
        self.cameras.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cameras.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.images.len() != self.cameras.len() || self.depths.len() != self.cameras.len() {
            return Err(Error::invalid(format!(
                "{} cameras, {} images, {} depths",
                self.cameras.len(),
                self.images.len(),
                self.depths.len()
            )));
        }
        for (v, ((c, i), d)) in self.cameras.iter().zip(&self.images).zip(&self.depths).enumerate() {
            if (i.width, i.height) != (c.width, c.height) || (d.width, d.height) != (c.width, c.height) {
                return Err(Error::invalid(format!("view {v} buffers do not match its camera resolution")));
            }
        }
        Ok(())
    }

    fn write(&self, dir: &Path) -> Result<()> {
        mkdir(&dir.join("images"))?;
        mkdir(&dir.join("depths"))?;
        write_cameras(&dir.join("cameras.json"), &self.cameras)?;
        for (v, (img, depth)) in self.images.iter().zip(&self.depths).enumerate() {
            write_png(&dir.join(format!("images/{v:03}.png")), img)?;
            write_depth(&dir.join(format!("depths/{v:03}.pfm")), depth)?;
        }
        Ok(())
    }

    fn read(dir: &Path) -> Result<Self> {
        let cameras = read_cameras(&dir.join("cameras.json"))?;
        let images = (0..cameras.len())
            .map(|v| read_png(&dir.join(format!("images/{v:03}.png"))))
            .collect::<Result<_>>()?;
        let depths = (0..cameras.len())
            .map(|v| read_depth(&dir.join(format!("depths/{v:03}.pfm"))))
            .collect::<Result<_>>()?;
        let set = Self {
            cameras,
            images,
            depths,
        };
        set.validate()?;
        Ok(set)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneBundle {
    pub train: ViewSet,
    /// Own-frame point map per training view; colors come from its image.
    pub point_maps: Vec<PointMap>,
    pub graph: ConnectivityGraph,
    pub pairs: Vec<EdgeObservation>,
    pub holdout: Option<ViewSet>,
    pub ground_truth: Option<GaussianCloud>,
}

fn mkdir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn pixel_colors(image: &ImageBuffer) -> Vec<nalgebra::Vector3<f64>> {
    (0..image.width * image.height).map(|k| image.pixel(k % image.width, k / image.width)).collect()
}

impl SceneBundle {
    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        if let Some(h) = &self.holdout {
            h.validate()?;
        }
        self.graph.validate()?;
        let n = self.train.len();
        if self.graph.vertex_count != n || self.point_maps.len() != n {
            return Err(Error::invalid(format!(
                "{n} training views, graph over {} views, {} point maps",
                self.graph.vertex_count,
                self.point_maps.len()
            )));
        }
        if self.pairs.len() != self.graph.edges.len()
            || self.pairs.iter().zip(&self.graph.edges).any(|(p, e)| p.views != *e)
        {
            return Err(Error::InvalidGraph("pair maps do not match the graph edges".into()));
        }
        for (v, (m, c)) in self.point_maps.iter().zip(&self.train.cameras).enumerate() {
            if (m.width, m.height) != (c.width, c.height) {
                return Err(Error::invalid(format!("point map {v} does not match its camera resolution")));
            }
        }
        Ok(())
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        self.validate()?;
        mkdir(dir)?;
        self.train.write(dir)?;
        write_graph(&dir.join("graph.json"), &self.graph)?;
        mkdir(&dir.join("points"))?;
        for (v, m) in self.point_maps.iter().enumerate() {
            write_point_map(
                &dir.join(format!("points/{v:03}.pfm")),
                &dir.join(format!("points/{v:03}_conf.pfm")),
                m,
            )?;
        }
        mkdir(&dir.join("pairs"))?;
        for (e, obs) in self.pairs.iter().enumerate() {
            for (k, m) in obs.maps.iter().enumerate() {
                write_point_map(
                    &dir.join(format!("pairs/{e:03}_{k}.pfm")),
                    &dir.join(format!("pairs/{e:03}_{k}_conf.pfm")),
                    m,
                )?;
            }
        }
        if let Some(h) = &self.holdout {
            h.write(&dir.join("holdout"))?;
        }
        if let Some(gt) = &self.ground_truth {
            write_ply(&dir.join("ground_truth.ply"), gt, PlyFormat::BinaryLittleEndian)?;
        }
        Ok(())
    }

    pub fn read(dir: &Path) -> Result<Self> {
        if !dir.is_dir() {
            return Err(Error::io(
                dir,
                std::io::Error::new(std::io::ErrorKind::NotFound, "bundle directory not found"),
            ));
        }
        let train = ViewSet::read(dir)?;
        let graph = read_graph(&dir.join("graph.json"))?;
        let point_maps = train
            .images
            .iter()
            .enumerate()
            .map(|(v, img)| {
                read_point_map(
                    &dir.join(format!("points/{v:03}.pfm")),
                    &dir.join(format!("points/{v:03}_conf.pfm")),
                )?
                .with_colors(pixel_colors(img))
            })
            .collect::<Result<_>>()?;
        let pairs = graph
            .edges
            .iter()
            .enumerate()
            .map(|(e, &views)| {
                let map = |k: usize| {
                    read_point_map(
                        &dir.join(format!("pairs/{e:03}_{k}.pfm")),
                        &dir.join(format!("pairs/{e:03}_{k}_conf.pfm")),
                    )
                };
                Ok(EdgeObservation {
                    views,
                    maps: [map(0)?, map(1)?],
                })
            })
            .collect::<Result<_>>()?;
        let holdout_dir = dir.join("holdout");
        let holdout = if holdout_dir.is_dir() {
            Some(ViewSet::read(&holdout_dir)?)
        } else {
            None
        };
        let gt_path = dir.join("ground_truth.ply");
        let ground_truth = if gt_path.is_file() { Some(read_ply(&gt_path)?) } else { None };
        let bundle = Self {
            train,
            point_maps,
            graph,
            pairs,
            holdout,
            ground_truth,
        };
        bundle.validate()?;
        Ok(bundle)
    }
}
