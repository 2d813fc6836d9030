use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Generator hyperparameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SrModelConfig {
    pub base_channels: usize,
    pub num_rdb: usize,
    pub rdb_convs: usize,
    pub growth: usize,
    pub ca_reduction: usize,
    pub scale: usize,
    pub alpha_init: f64,
    /// Adds the shallow features to the output of the RDB chain.
    #[serde(default)]
    pub global_skip: bool,
}

impl SrModelConfig {
    /// The full-size configuration, calibrated to about 1.9M parameters.
    pub fn reference(scale: usize) -> Self {
        Self {
            base_channels: 64,
            num_rdb: 12,
            rdb_convs: 4,
            growth: 32,
            ca_reduction: 16,
            scale,
            alpha_init: 0.2,
            global_skip: false,
        }
    }

    /// A small configuration for tests and CPU-scale experiments.
    pub fn tiny(scale: usize) -> Self {
        Self {
            base_channels: 16,
            num_rdb: 2,
            rdb_convs: 3,
            growth: 16,
            ca_reduction: 4,
            scale,
            alpha_init: 0.2,
            global_skip: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("base_channels", self.base_channels),
            ("num_rdb", self.num_rdb),
            ("rdb_convs", self.rdb_convs),
            ("growth", self.growth),
            ("ca_reduction", self.ca_reduction),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(Error::Config(format!("model.{name} must be at least 1")));
            }
        }
        if self.base_channels % self.ca_reduction != 0 {
            return Err(Error::Config(format!(
                "model.ca_reduction {} does not divide base_channels {}",
                self.ca_reduction, self.base_channels
            )));
        }
        if !matches!(self.scale, 4 | 8) {
            return Err(Error::Config(format!("model.scale must be 4 or 8, got {}", self.scale)));
        }
        if !self.alpha_init.is_finite() {
            return Err(Error::Config("model.alpha_init must be finite".into()));
        }
        Ok(())
    }

    /// Number of x2 transposed-convolution stages, `log2(scale)`.
    pub fn upsample_stages(&self) -> usize {
        self.scale.trailing_zeros() as usize
    }
}

/// Parameter and arithmetic cost of a network for one input.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Complexity {
    pub params: u64,
    pub macs: u64,
    pub bias_adds: u64,
}

impl Complexity {
    /// Two operations per multiply-accumulate plus one per bias addition.
    pub fn flops(&self) -> u64 {
        2 * self.macs + self.bias_adds
    }

    pub fn gflops(&self) -> f64 {
        self.flops() as f64 / 1e9
    }

    pub fn gmacs(&self) -> f64 {
        self.macs as f64 / 1e9
    }

    pub fn add(&mut self, other: Complexity) {
        self.params += other.params;
        self.macs += other.macs;
        self.bias_adds += other.bias_adds;
    }

    /// Square `k x k` convolution with bias, stride 1 and same padding.
    pub fn conv_same(cin: usize, cout: usize, k: usize, h: usize, w: usize) -> Self {
        let positions = (h * w * cout) as u64;
        Self {
            params: (cout * (cin * k * k + 1)) as u64,
            macs: positions * (cin * k * k) as u64,
            bias_adds: positions,
        }
    }

    /// Transposed convolution with bias on an `h x w` input producing `oh x ow`.
    pub fn conv_transpose(cin: usize, cout: usize, k: usize, h: usize, w: usize, oh: usize, ow: usize) -> Self {
        Self {
            params: (cin * cout * k * k + cout) as u64,
            macs: (h * w * cin * cout * k * k) as u64,
            bias_adds: (oh * ow * cout) as u64,
        }
    }

    pub fn linear(cin: usize, cout: usize) -> Self {
        Self {
            params: (cout * (cin + 1)) as u64,
            macs: (cin * cout) as u64,
            bias_adds: cout as u64,
        }
    }
}

/// Closed-form parameter count and cost of the generator on an `input_hw` input.
pub fn count_params_flops(config: &SrModelConfig, input_hw: (usize, usize)) -> Complexity {
    let (h, w) = input_hw;
    let c = config.base_channels;
    let mut total = Complexity::conv_same(3, c, 3, h, w);
    for _ in 0..config.num_rdb {
        for j in 0..config.rdb_convs {
            total.add(Complexity::conv_same(c + j * config.growth, config.growth, 3, h, w));
        }
        total.add(Complexity::conv_same(c + config.rdb_convs * config.growth, c, 1, h, w));
        total.params += 1; // alpha
    }
    let hidden = c / config.ca_reduction.max(1);
    total.add(Complexity::linear(c, hidden));
    total.add(Complexity::linear(hidden, c));
    let (mut ch, mut cw) = (h, w);
    for _ in 0..config.upsample_stages() {
        total.add(Complexity::conv_transpose(c, c, 4, ch, cw, 2 * ch, 2 * cw));
        ch *= 2;
        cw *= 2;
    }
    total.add(Complexity::conv_same(c, 3, 3, ch, cw));
    total
}
