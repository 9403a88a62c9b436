//! Experiment configuration with desk, full and smoke presets.

use std::path::Path;

use bowlnet_core::baselines::StateMlpConfig;
use bowlnet_core::model::{ModelConfig, Variant, WeightInit};
use bowlnet_core::render::RenderConfig;
use bowlnet_core::sim::{Scenario, SimulationConfig};
use serde::{Deserialize, Serialize};

use crate::error::{io_err, LabError, LabResult};

/// Sequence counts per split.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitCounts {
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

impl SplitCounts {
    pub fn total(&self) -> usize {
        self.train + self.val + self.test
    }
}

/// Weight initialization as written in config and checkpoint JSON:
/// `"he"` or `{"gaussian": {"std": 0.01}}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitSetting {
    He,
    Gaussian { std: f64 },
}

impl From<InitSetting> for WeightInit {
    fn from(s: InitSetting) -> Self {
        match s {
            InitSetting::He => WeightInit::He,
            InitSetting::Gaussian { std } => WeightInit::Gaussian(std),
        }
    }
}

impl From<WeightInit> for InitSetting {
    fn from(w: WeightInit) -> Self {
        match w {
            WeightInit::He => InitSetting::He,
            WeightInit::Gaussian(std) => InitSetting::Gaussian { std },
        }
    }
}

/// Architecture knobs shared by every image model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSettings {
    pub encoder_channels: Vec<usize>,
    pub transition_hidden: usize,
    pub init: InitSetting,
    pub eigen_scale: f64,
    pub eigen_offset: f64,
    pub det_weight: f64,
}

/// Everything that determines a dataset, a training run and an evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// `bowl`, `ellipse` or `ellipse-notexture`.
    pub scenario: String,
    pub seed: u64,
    pub resolution: usize,
    pub half_extent: f64,
    pub counts: SplitCounts,
    /// Emitted frames of each long simulation.
    pub simulation_frames: usize,
    /// Training sub-sequences extracted from one long simulation.
    pub train_per_simulation: usize,
    pub t0: usize,
    pub train_horizon: usize,
    pub eval_horizon: usize,
    /// Observed positions for the least-squares baselines.
    pub fit_window: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub lr_factor: f64,
    pub lr_patience: usize,
    pub stop_patience: usize,
    pub max_epochs: usize,
    /// Train image models on randomly mirrored and transposed sequences.
    pub augment: bool,
    pub network: NetworkSettings,
    pub state_mlp_hidden: [usize; 2],
    pub state_mlp_learning_rate: f64,
}

impl ExperimentConfig {
    /// Workstation-sized defaults.
    pub fn desk() -> Self {
        Self {
            scenario: "ellipse".into(),
            seed: 1,
            resolution: 48,
            half_extent: 1.1,
            counts: SplitCounts { train: 512, val: 110, test: 110 },
            simulation_frames: 160,
            train_per_simulation: 4,
            t0: 4,
            train_horizon: 20,
            eval_horizon: 40,
            fit_window: 10,
            batch_size: 16,
            learning_rate: 1e-3,
            lr_factor: 0.1,
            lr_patience: 25,
            stop_patience: 50,
            max_epochs: 400,
            augment: true,
            network: NetworkSettings {
                encoder_channels: vec![16, 32, 32, 16],
                transition_hidden: 32,
                init: InitSetting::He,
                eigen_scale: 99.99,
                eigen_offset: 0.01,
                det_weight: 0.01,
            },
            state_mlp_hidden: [128, 128],
            state_mlp_learning_rate: 1e-3,
        }
    }

    /// Full-scale setup: 128 px frames, 10 000 sequences, slow learning rate.
    pub fn full() -> Self {
        Self {
            resolution: 128,
            counts: SplitCounts { train: 7000, val: 1500, test: 1500 },
            batch_size: 50,
            learning_rate: 1e-5,
            lr_patience: 100,
            stop_patience: 200,
            max_epochs: 2000,
            augment: false,
            network: NetworkSettings { encoder_channels: vec![32, 64, 64, 64, 32], transition_hidden: 64, ..Self::desk().network },
            ..Self::desk()
        }
    }

    /// Seconds-scale configuration for tests.
    pub fn smoke() -> Self {
        Self {
            resolution: 16,
            counts: SplitCounts { train: 8, val: 4, test: 4 },
            simulation_frames: 60,
            train_per_simulation: 2,
            train_horizon: 6,
            eval_horizon: 10,
            batch_size: 4,
            lr_patience: 2,
            stop_patience: 4,
            max_epochs: 3,
            network: NetworkSettings { encoder_channels: vec![4, 4], transition_hidden: 4, ..Self::desk().network },
            state_mlp_hidden: [8, 8],
            ..Self::desk()
        }
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "desk" => Some(Self::desk()),
            "full" => Some(Self::full()),
            "smoke" => Some(Self::smoke()),
            _ => None,
        }
    }

    /// A preset name or a path to a JSON file.
    pub fn load(spec: &str) -> LabResult<Self> {
        if let Some(c) = Self::preset(spec) {
            return Ok(c);
        }
        let path = Path::new(spec);
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        let config: Self = serde_json::from_str(&text).map_err(|e| crate::error::format_err(path, e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn scenario(&self) -> LabResult<Scenario> {
        Scenario::from_name(&self.scenario).ok_or_else(|| LabError::Config(format!("unknown scenario {:?}", self.scenario)))
    }

    /// Frames stored per sequence: context plus the evaluation horizon.
    pub fn sequence_frames(&self) -> usize {
        self.t0 + self.eval_horizon
    }

    pub fn validate(&self) -> LabResult<()> {
        let fail = |m: &str| Err(LabError::Config(m.into()));
        self.scenario()?;
        if self.resolution < 4 || !(self.half_extent > 1.0) {
            return fail("resolution must be ≥ 4 and the viewport must contain the bowl (half_extent > 1)");
        }
        if self.counts.train == 0 || self.counts.val == 0 || self.counts.test == 0 {
            return fail("every split needs at least one sequence");
        }
        if self.t0 == 0 || self.train_horizon == 0 {
            return fail("t0 and train_horizon must be positive");
        }
        if self.eval_horizon < self.train_horizon {
            return fail("eval_horizon must be at least train_horizon");
        }
        if self.simulation_frames < self.sequence_frames() {
            return fail("simulation_frames must cover t0 + eval_horizon");
        }
        if self.train_per_simulation == 0 {
            return fail("train_per_simulation must be positive");
        }
        if self.fit_window < 3 || self.fit_window > self.sequence_frames() {
            return fail("fit_window must lie in [3, t0 + eval_horizon]");
        }
        if self.batch_size == 0 || !(self.learning_rate > 0.0) || !(self.state_mlp_learning_rate > 0.0) {
            return fail("batch size and learning rates must be positive");
        }
        if !(self.lr_factor > 0.0 && self.lr_factor < 1.0) || self.lr_patience == 0 || self.stop_patience == 0 {
            return fail("lr_factor must be in (0, 1) and patience values positive");
        }
        self.model_config(Variant::PhysNet).validate()?;
        Ok(())
    }

    pub fn model_config(&self, variant: Variant) -> ModelConfig {
        let n = &self.network;
        ModelConfig {
            variant,
            t0: self.t0,
            resolution: self.resolution,
            encoder_channels: n.encoder_channels.clone(),
            transition_hidden: n.transition_hidden,
            eigen_scale: n.eigen_scale,
            eigen_offset: n.eigen_offset,
            det_weight: n.det_weight,
            init: n.init.into(),
        }
    }

    pub fn state_mlp_config(&self, plus: bool) -> StateMlpConfig {
        let mut c = StateMlpConfig::new(plus, self.resolution, self.half_extent);
        c.hidden = self.state_mlp_hidden;
        c.frame_dt = SimulationConfig::default().frame_interval();
        c
    }

    pub fn render_config(&self) -> LabResult<RenderConfig> {
        Ok(RenderConfig {
            resolution: self.resolution,
            half_extent: self.half_extent,
            ball_textured: self.scenario()?.textured_ball(),
            ..RenderConfig::default()
        })
    }
}
