//! Fixed-budget optimization of a cloud against posed reference views.

use std::path::Path;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::loss::{rgb_loss, total_loss, LossConfig, TotalLoss};
use crate::optim::{AdamConfig, CloudOptimizer, GroupRates};
use crate::raster::{render, render_backward, RenderSettings};
use crate::scene::{Camera, DepthMap, GaussianCloud, ImageBuffer};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LearningRates {
    /// Position rate at the first iteration, decayed exponentially to `position_final`.
    pub position: f64,
    pub position_final: f64,
    pub rotation: f64,
    pub log_scales: f64,
    pub opacity: f64,
    pub sh: f64,
}

impl Default for LearningRates {
    fn default() -> Self {
        Self {
            position: 1.6e-4,
            position_final: 1.6e-6,
            rotation: 1e-3,
            log_scales: 5e-3,
            opacity: 5e-2,
            sh: 2.5e-3,
        }
    }
}

impl LearningRates {
    /// Rates for iteration `k` of `n`.
    pub fn at(&self, k: usize, n: usize) -> GroupRates {
        let t = if n > 1 { k as f64 / (n - 1) as f64 } else { 0.0 };
        let position = if self.position > 0.0 && self.position_final > 0.0 {
            (self.position.ln() * (1.0 - t) + self.position_final.ln() * t).exp()
        } else {
            self.position * (1.0 - t) + self.position_final * t
        };
        GroupRates {
            position,
            rotation: self.rotation,
            log_scales: self.log_scales,
            opacity: self.opacity,
            sh: self.sh,
        }
    }

    fn all(&self) -> [f64; 6] {
        [
            self.position,
            self.position_final,
            self.rotation,
            self.log_scales,
            self.opacity,
            self.sh,
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViewSchedule {
    #[default]
    RoundRobin,
    /// Uniform random view per iteration, drawn from the seeded generator.
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub iterations: usize,
    pub learning_rates: LearningRates,
    pub adam: AdamConfig,
    pub seed: u64,
    pub schedule: ViewSchedule,
    pub loss: LossConfig,
    pub render: RenderSettings,
    /// Write a checkpoint every this many iterations; 0 disables checkpoints.
    pub checkpoint_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            iterations: 1000,
            learning_rates: LearningRates::default(),
            adam: AdamConfig::default(),
            seed: 0,
            schedule: ViewSchedule::RoundRobin,
            loss: LossConfig::default(),
            render: RenderSettings::default(),
            checkpoint_every: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::Config("iterations must be at least 1".into()));
        }
        // Zero rates are allowed: they freeze a parameter group.
        if self.learning_rates.all().iter().any(|r| !(r.is_finite() && *r >= 0.0)) {
            return Err(Error::Config(format!("invalid learning rates: {:?}", self.learning_rates)));
        }
        self.adam.validate()?;
        self.loss.validate()?;
        self.render.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainRecord {
    pub iteration: usize,
    pub view: usize,
    pub total: f64,
    pub rgb: f64,
    pub depth: f64,
    pub gpp: f64,
    pub mask_level: f64,
    pub elapsed_s: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainLog {
    pub records: Vec<TrainRecord>,
    /// Mean RGB loss over all training views before the first step.
    pub initial_rgb: Option<f64>,
    /// Mean RGB loss over all training views after the last step.
    pub final_rgb: Option<f64>,
}

impl TrainLog {
    pub fn totals(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.total).collect()
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
        for r in &self.records {
            w.serialize(r).map_err(|e| csv_error(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn read_csv(path: &Path) -> Result<Vec<TrainRecord>> {
        let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
        r.deserialize().map(|row| row.map_err(|e| csv_error(path, e))).collect()
    }
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    if e.is_io_error() {
        match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            _ => unreachable!("checked for an io error"),
        }
    } else {
        Error::format("CSV", path, e.to_string())
    }
}

/// Training views, one reference image and depth per camera.
#[derive(Debug, Clone, Copy)]
pub struct TrainViews<'a> {
    pub cameras: &'a [Camera],
    pub images: &'a [ImageBuffer],
    pub depths: &'a [DepthMap],
}

impl TrainViews<'_> {
    fn validate(&self) -> Result<()> {
        let n = self.cameras.len();
        if n == 0 {
            return Err(Error::InsufficientData("no training views".into()));
        }
        if self.images.len() != n || self.depths.len() != n {
            return Err(Error::invalid("training views need one image and one depth per camera"));
        }
        for (c, (i, d)) in self.cameras.iter().zip(self.images.iter().zip(self.depths)) {
            if (i.width, i.height) != (c.width, c.height) || (d.width, d.height) != (c.width, c.height) {
                return Err(Error::invalid("reference buffers do not match camera resolution"));
            }
        }
        Ok(())
    }
}

/// A run stopped early; holds the last finite cloud and the records so far.
#[derive(Debug)]
pub struct TrainAbort {
    pub error: Error,
    pub cloud: GaussianCloud,
    pub log: TrainLog,
}

/// Loss for one view. A depth term with no usable patch is dropped for that
/// step rather than failing the run.
fn view_loss(
    cloud: &GaussianCloud,
    views: &TrainViews,
    v: usize,
    config: &TrainConfig,
) -> Result<TotalLoss> {
    let out = render(cloud, &views.cameras[v], &config.render)?;
    match total_loss(&out.color, &views.images[v], &out.depth, &views.depths[v], &config.loss) {
        Err(Error::UndefinedLoss(msg)) => {
            log::debug!("view {v}: depth correlation skipped ({msg})");
            let loss = LossConfig {
                lambda_depth: 0.0,
                ..config.loss.clone()
            };
            total_loss(&out.color, &views.images[v], &out.depth, &views.depths[v], &loss)
        }
        other => other,
    }
}

/// Mean RGB loss over every view.
pub fn mean_rgb_loss(
    cloud: &GaussianCloud,
    views: &TrainViews,
    render_settings: &RenderSettings,
    ssim_weight: f64,
) -> Result<f64> {
    let mut sum = 0.0;
    for (cam, img) in views.cameras.iter().zip(views.images) {
        let out = render(cloud, cam, render_settings)?;
        sum += rgb_loss(&out.color, img, ssim_weight)?;
    }
    Ok(sum / views.cameras.len() as f64)
}

pub fn train(cloud: GaussianCloud, views: &TrainViews, config: &TrainConfig) -> Result<(GaussianCloud, TrainLog), Box<TrainAbort>> {
    train_with_checkpoints(cloud, views, config, |_, _, _| Ok(()))
}

/// As [`train`], calling `checkpoint(iteration, cloud, log)` every
/// `checkpoint_every` completed iterations.
pub fn train_with_checkpoints(
    mut cloud: GaussianCloud,
    views: &TrainViews,
    config: &TrainConfig,
    mut checkpoint: impl FnMut(usize, &GaussianCloud, &TrainLog) -> Result<()>,
) -> Result<(GaussianCloud, TrainLog), Box<TrainAbort>> {
    let mut log = TrainLog::default();
    macro_rules! abort {
        ($err:expr, $cloud:expr) => {
            return Err(Box::new(TrainAbort {
                error: $err,
                cloud: $cloud,
                log,
            }))
        };
    }
    if let Err(e) = config.validate().and_then(|_| views.validate()).and_then(|_| cloud.validate()) {
        abort!(e, cloud);
    }
    match mean_rgb_loss(&cloud, views, &config.render, config.loss.ssim_weight) {
        Ok(v) => log.initial_rgb = Some(v),
        Err(e) => abort!(e, cloud),
    }
    let mut optimizer = CloudOptimizer::new(&cloud, config.adam);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let start = Instant::now();
    let n_views = views.cameras.len();
    for it in 0..config.iterations {
        let v = match config.schedule {
            ViewSchedule::RoundRobin => it % n_views,
            ViewSchedule::Random => rng.random_range(0..n_views),
        };
        let loss = match view_loss(&cloud, views, v, config) {
            Ok(l) if l.total.is_finite() => l,
            Ok(l) => abort!(Error::Diverged(format!("loss is {} at iteration {it}", l.total)), cloud),
            Err(e) => abort!(e, cloud),
        };
        let grads = match render_backward(&cloud, &views.cameras[v], &config.render, &loss.grad_color, &loss.grad_depth) {
            Ok(g) => g,
            Err(e) => abort!(e, cloud),
        };
        let previous = cloud.clone();
        if let Err(e) = optimizer.step(&mut cloud, &grads, &config.learning_rates.at(it, config.iterations)) {
            abort!(e, previous);
        }
        if !cloud.is_finite() {
            abort!(Error::Diverged(format!("non-finite parameter after iteration {it}")), previous);
        }
        log.records.push(TrainRecord {
            iteration: it,
            view: v,
            total: loss.total,
            rgb: loss.rgb,
            depth: loss.depth,
            gpp: loss.gpp,
            mask_level: loss.mask_level,
            elapsed_s: start.elapsed().as_secs_f64(),
        });
        if config.checkpoint_every > 0 && (it + 1) % config.checkpoint_every == 0 {
            if let Err(e) = checkpoint(it + 1, &cloud, &log) {
                abort!(e, cloud);
            }
        }
    }
    match mean_rgb_loss(&cloud, views, &config.render, config.loss.ssim_weight) {
        Ok(v) => log.final_rgb = Some(v),
        Err(e) => abort!(e, cloud),
    }
    Ok((cloud, log))
}
