//! First-order adaptive moment optimizer (Adam) with bias correction.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scene::{CloudGradients, GaussianCloud, ParamGroup};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-15,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        if !((0.0..1.0).contains(&self.beta1) && (0.0..1.0).contains(&self.beta2) && self.eps > 0.0) {
            return Err(Error::Config(format!("invalid Adam config: {self:?}")));
        }
        Ok(())
    }
}

/// Moment state for one flat parameter vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub config: AdamConfig,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
}

impl Adam {
    pub fn new(len: usize, config: AdamConfig) -> Self {
        Self {
            config,
            m: vec![0.0; len],
            v: vec![0.0; len],
            step: 0,
        }
    }

    /// One update in place. Nothing is modified if a gradient is non-finite.
    pub fn update(&mut self, params: &mut [f64], grads: &[f64], lr: f64) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::invalid(format!(
                "optimizer state has {} entries, got {} params and {} gradients",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
            return Err(Error::Diverged(format!("non-finite gradient at entry {i}")));
        }
        let AdamConfig { beta1, beta2, eps } = self.config;
        self.step += 1;
        let bc1 = 1.0 - beta1.powi(self.step as i32);
        let bc2 = 1.0 - beta2.powi(self.step as i32);
        for ((p, g), (m, v)) in params.iter_mut().zip(grads).zip(self.m.iter_mut().zip(self.v.iter_mut())) {
            *m = beta1 * *m + (1.0 - beta1) * g;
            *v = beta2 * *v + (1.0 - beta2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *p -= lr * m_hat / (v_hat.sqrt() + eps);
        }
        Ok(())
    }
}

/// Learning rate per parameter group.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupRates {
    pub position: f64,
    pub rotation: f64,
    pub log_scales: f64,
    pub opacity: f64,
    pub sh: f64,
}

impl GroupRates {
    pub fn get(&self, group: ParamGroup) -> f64 {
        match group {
            ParamGroup::Position => self.position,
            ParamGroup::Rotation => self.rotation,
            ParamGroup::LogScales => self.log_scales,
            ParamGroup::Opacity => self.opacity,
            ParamGroup::Sh => self.sh,
        }
    }
}

/// Adam state for every parameter group of a cloud.
#[derive(Debug, Clone)]
pub struct CloudOptimizer {
    groups: Vec<(ParamGroup, Adam)>,
}

impl CloudOptimizer {
    pub fn new(cloud: &GaussianCloud, config: AdamConfig) -> Self {
        let groups = ParamGroup::ALL
            .iter()
            .map(|&g| (g, Adam::new(cloud.len() * g.width(cloud.sh_degree), config)))
            .collect();
        Self { groups }
    }

    /// Applies one step to every group, then renormalizes quaternions if they
    /// moved. On a non-finite gradient the cloud and optimizer state are left
    /// untouched.
    pub fn step(&mut self, cloud: &mut GaussianCloud, grads: &CloudGradients, rates: &GroupRates) -> Result<()> {
        if grads.primitives.len() != cloud.len() || grads.sh_degree != cloud.sh_degree {
            return Err(Error::invalid("gradient shape does not match the cloud"));
        }
        if !grads.is_finite() {
            return Err(Error::Diverged("non-finite parameter gradient".into()));
        }
        for (group, adam) in &mut self.groups {
            let mut values = cloud.gather(*group);
            adam.update(&mut values, &grads.gather(*group), rates.get(*group))?;
            cloud.scatter(*group, &values);
        }
        if rates.rotation != 0.0 {
            cloud.primitives.iter_mut().for_each(|p| p.normalize_rotation());
        }
        Ok(())
    }

    pub fn state(&self, group: ParamGroup) -> &Adam {
        &self.groups.iter().find(|(g, _)| *g == group).expect("all groups present").1
    }
}
