//! Tunable constants of every stage, with their default values.
//!
//! A config file (TOML) may override any subset; missing keys keep the
//! defaults below.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub coarse: CoarseConfig,
    pub refine: RefineConfig,
    pub select: SelectConfig,
    pub segment: SegmentConfig,
    pub eval: EvalConfig,
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CoarseConfig {
    /// Matches at or below this confidence are ignored.
    pub confidence_threshold: f64,
    /// Minimum usable static matches between consecutive frames.
    pub min_static_matches: usize,
    /// Pairs with fewer confident matches (any region) are skipped.
    pub min_pair_matches: usize,
    /// Largest selected-frame distance of a pair.
    pub pair_window: usize,
    pub ransac_iterations: usize,
    /// Meters.
    pub inlier_radius: f64,
    /// RANSAC iterations for each relative camera pose.
    pub camera_ransac_iterations: usize,
    /// Meters.
    pub camera_inlier_radius: f64,
    /// Moving-map value at which a pixel counts as dynamic.
    pub dynamic_threshold: f32,
    /// Label matches static/dynamic from the moving maps. Disabling uses
    /// every confident match for camera estimation.
    pub use_region_labels: bool,
}

impl Default for CoarseConfig {
    fn default() -> Self {
        Self {
            confidence_threshold: 0.95,
            min_static_matches: 3,
            min_pair_matches: 80,
            pair_window: 3,
            ransac_iterations: 50,
            inlier_radius: 0.01,
            camera_ransac_iterations: 100,
            camera_inlier_radius: 0.02,
            dynamic_threshold: 0.5,
            use_region_labels: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RefineConfig {
    pub iterations: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Fraction of each frame's points drawn per iteration; 1 disables.
    pub subsample_fraction: f64,
    /// Clamp applied to the initial moving probabilities.
    pub init_clamp: [f64; 2],
    /// Map value at which a pixel counts as moving when initializing.
    pub init_threshold: f32,
}

impl Default for RefineConfig {
    fn default() -> Self {
        Self {
            iterations: 400,
            learning_rate: 5e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            subsample_fraction: 0.5,
            init_clamp: [0.02, 0.98],
            init_threshold: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelectConfig {
    /// A revolute axis farther than this from every surface point means
    /// the joint is prismatic. Meters.
    pub prismatic_axis_distance: f64,
}

impl Default for SelectConfig {
    fn default() -> Self {
        Self {
            prismatic_axis_distance: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SegmentConfig {
    pub moving_threshold: f32,
    /// Meters.
    pub attach_radius: f64,
}

impl Default for SegmentConfig {
    fn default() -> Self {
        Self {
            moving_threshold: 0.7,
            attach_radius: 0.03,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// Points drawn per side for geometry Chamfer; 0 uses every point.
    pub geometry_samples: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            geometry_samples: 10_000,
        }
    }
}
