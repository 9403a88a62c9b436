use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::numerics::conv_output_size;

/// Architecture family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Variant {
    /// Position only, trained with the L2 sequence loss.
    PhysNet,
    /// PhysNet plus angular velocity.
    PhysNetPlus,
    /// Bivariate Gaussian belief, trained with the regularized NLL.
    ProbNet,
    /// ProbNet plus angular velocity.
    ProbNetPlus,
    /// PhysNet-shaped model that also sees the final frame.
    InterpNet,
}

impl Variant {
    pub const ALL: [Variant; 5] =
        [Variant::PhysNet, Variant::PhysNetPlus, Variant::ProbNet, Variant::ProbNetPlus, Variant::InterpNet];

    pub fn name(self) -> &'static str {
        match self {
            Variant::PhysNet => "physnet",
            Variant::PhysNetPlus => "physnet++",
            Variant::ProbNet => "probnet",
            Variant::ProbNetPlus => "probnet++",
            Variant::InterpNet => "interpnet",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|v| v.name().eq_ignore_ascii_case(s))
    }

    /// Length of the incremental vector `p`.
    pub fn state_len(self) -> usize {
        match self {
            Variant::PhysNet | Variant::InterpNet => 2,
            Variant::PhysNetPlus | Variant::ProbNet => 5,
            Variant::ProbNetPlus => 8,
        }
    }

    pub fn is_probabilistic(self) -> bool {
        matches!(self, Variant::ProbNet | Variant::ProbNetPlus)
    }

    pub fn predicts_angular(self) -> bool {
        matches!(self, Variant::PhysNetPlus | Variant::ProbNetPlus)
    }

    pub fn is_interpolating(self) -> bool {
        matches!(self, Variant::InterpNet)
    }

    /// Offset of `ω̂` inside `p`, when present.
    pub fn angular_offset(self) -> Option<usize> {
        match self {
            Variant::PhysNetPlus => Some(2),
            Variant::ProbNetPlus => Some(5),
            _ => None,
        }
    }

    pub fn input_frames(self, t0: usize) -> usize {
        t0 + usize::from(self.is_interpolating())
    }
}

/// Distribution of the initial weights; biases always start at zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WeightInit {
    /// `N(0, std²)` for every weight tensor.
    Gaussian(f64),
    /// `N(0, 2/fan_in)`, the fan-in being the product of all but the last axis.
    He,
}

impl WeightInit {
    /// Standard deviation for a weight of the given shape.
    pub fn std(self, shape: &[usize]) -> f64 {
        match self {
            WeightInit::Gaussian(std) => std,
            WeightInit::He => {
                let fan_in: usize = shape[..shape.len().saturating_sub(1)].iter().product();
                libm::sqrt(2.0 / fan_in.max(1) as f64)
            }
        }
    }
}

/// Shapes and fixed constants of one model.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub variant: Variant,
    /// Number of context frames.
    pub t0: usize,
    /// Input frame size (square).
    pub resolution: usize,
    /// Output channels of each stride-2 encoder stage; the last is the state depth `C`.
    pub encoder_channels: Vec<usize>,
    /// Hidden channels of the transition's first convolution.
    pub transition_hidden: usize,
    /// Eigenvalues are `scale·sigmoid(β) + offset`.
    pub eigen_scale: f64,
    pub eigen_offset: f64,
    /// Weight λ of the `Σ_t det Σ_t` regularizer.
    pub det_weight: f64,
    pub init: WeightInit,
}

impl ModelConfig {
    /// Desk-scale defaults for `variant` at `resolution`.
    pub fn desk(variant: Variant, resolution: usize) -> Self {
        Self {
            variant,
            t0: 4,
            resolution,
            encoder_channels: vec![16, 32, 32, 16],
            transition_hidden: 32,
            eigen_scale: 99.99,
            eigen_offset: 0.01,
            det_weight: 0.01,
            init: WeightInit::He,
        }
    }

    pub fn state_channels(&self) -> usize {
        *self.encoder_channels.last().expect("validated non-empty")
    }

    pub fn input_channels(&self) -> usize {
        3 * self.variant.input_frames(self.t0)
    }

    /// Spatial size of `s` after the stride-2 stages.
    pub fn state_size(&self) -> usize {
        self.encoder_channels.iter().fold(self.resolution, |s, _| conv_output_size(s, 3, 2, 1))
    }

    /// Number of scalars in `s`.
    pub fn state_numel(&self) -> usize {
        let s = self.state_size();
        s * s * self.state_channels()
    }

    pub fn validate(&self) -> Result<()> {
        if self.t0 == 0 {
            return Err(Error::Invalid("t0 must be at least 1".into()));
        }
        if self.encoder_channels.is_empty() || self.encoder_channels.contains(&0) || self.transition_hidden == 0 {
            return Err(Error::Invalid("encoder and transition channels must be positive".into()));
        }
        if self.resolution < 2 {
            return Err(Error::Invalid("resolution must be at least 2".into()));
        }
        if !(self.eigen_scale > 0.0 && self.eigen_offset > 0.0 && self.det_weight >= 0.0) {
            return Err(Error::Invalid("eigenvalue range and det weight must be positive".into()));
        }
        if let WeightInit::Gaussian(std) = self.init {
            if !(std >= 0.0 && std.is_finite()) {
                return Err(Error::Invalid("init std must be finite and nonnegative".into()));
            }
        }
        Ok(())
    }

    /// Ordered `(name, shape)` list of every parameter.
    pub fn parameter_shapes(&self) -> Vec<(alloc::string::String, Vec<usize>)> {
        use alloc::format;
        let mut out = Vec::new();
        let mut cin = self.input_channels();
        for (i, &c) in self.encoder_channels.iter().enumerate() {
            out.push((format!("enc.{i}.w"), vec![3, 3, cin, c]));
            out.push((format!("enc.{i}.b"), vec![c]));
            cin = c;
        }
        let n = self.state_numel();
        let p = self.variant.state_len();
        out.push(("head.p.w".into(), vec![n, p]));
        out.push(("head.p.b".into(), vec![p]));
        if self.variant.is_interpolating() {
            out.push(("head.final.w".into(), vec![n, 2]));
            out.push(("head.final.b".into(), vec![2]));
        }
        let c = self.state_channels();
        out.push(("trans.0.w".into(), vec![3, 3, c, self.transition_hidden]));
        out.push(("trans.0.b".into(), vec![self.transition_hidden]));
        out.push(("trans.1.w".into(), vec![3, 3, self.transition_hidden, c]));
        out.push(("trans.1.b".into(), vec![c]));
        out.push(("trans.p.w".into(), vec![n, p]));
        out.push(("trans.p.b".into(), vec![p]));
        out
    }
}
