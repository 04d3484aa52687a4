//! Tunable parameters of every stage, addressable by dotted keys
//! such as `fine.voxel_edge_m`.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::str::FromStr;

use crate::error::{Error, Result};

/// How initial fragments are cut.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FragmentMode {
    /// Equal GPS-time intervals.
    Temporal,
    /// Equal trajectory-length sections.
    Spatial,
}

/// Which fragmentation the pipeline uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FragmentStrategy {
    /// Initial fragments validated and grown by the semi-sphere check.
    Ssc,
    /// Plain `fixed_interval_s` time slices, no validation.
    FixedTime,
    /// Plain `length_m` trajectory slices, no validation.
    FixedLength,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PreprocessConfig {
    /// Voxel edge for resampling; 0 disables the step.
    pub cell_size_m: f64,
    /// Neighbors for outlier removal; 0 disables the step.
    pub sor_k: usize,
    pub sor_stddev: f64,
    pub filter_static: bool,
    pub static_labels: Vec<u16>,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            cell_size_m: 0.02,
            sor_k: 16,
            sor_stddev: 1.0,
            filter_static: true,
            static_labels: alloc::vec![crate::synth::labels::GROUND, crate::synth::labels::BUILDING],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FragmentConfig {
    pub strategy: FragmentStrategy,
    pub mode: FragmentMode,
    pub interval_s: f64,
    pub length_m: f64,
    pub fixed_interval_s: f64,
    pub min_traj_m: f64,
    pub disp_threshold: f64,
    pub min_pop_fraction: f64,
    pub max_span_fragments: usize,
    pub normal_k: usize,
    pub max_normals: usize,
}

impl Default for FragmentConfig {
    fn default() -> Self {
        Self {
            strategy: FragmentStrategy::Ssc,
            mode: FragmentMode::Temporal,
            interval_s: 10.0,
            length_m: 10.0,
            fixed_interval_s: 30.0,
            min_traj_m: 10.0,
            disp_threshold: 0.15,
            min_pop_fraction: 0.02,
            max_span_fragments: 6,
            normal_k: 10,
            max_normals: 50_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoarseConfig {
    /// Point spacing used to scale ISS radii; 0 estimates it from the data.
    pub iss_resolution_m: f64,
    pub iss_salient_mult: f64,
    pub iss_nonmax_mult: f64,
    pub iss_gamma21: f64,
    pub iss_gamma32: f64,
    pub iss_min_neighbors: usize,
    /// Minimum λ3/λ1; rejects noise-induced keypoints on flat surfaces.
    pub iss_min_salience: f64,
    pub iss_max_keypoints: usize,
    pub normal_k: usize,
    pub fpfh_radius_m: f64,
    pub gror_tau_m: f64,
    pub gror_k: usize,
    pub gror_weighted: bool,
    pub ransac_inlier_m: f64,
    pub ransac_max_iterations: usize,
    pub ransac_confidence: f64,
    pub min_inliers: usize,
    pub crop_margin_m: f64,
}

impl Default for CoarseConfig {
    fn default() -> Self {
        Self {
            iss_resolution_m: 0.0,
            iss_salient_mult: 6.0,
            iss_nonmax_mult: 4.0,
            iss_gamma21: 0.975,
            iss_gamma32: 0.975,
            iss_min_neighbors: 5,
            iss_min_salience: 0.01,
            iss_max_keypoints: 5000,
            normal_k: 10,
            fpfh_radius_m: 1.0,
            gror_tau_m: 0.1,
            gror_k: 100,
            gror_weighted: false,
            ransac_inlier_m: 0.5,
            ransac_max_iterations: 10_000,
            ransac_confidence: 0.999,
            min_inliers: 10,
            crop_margin_m: 20.0,
        }
    }
}

/// Plane-to-plane GICP settings.
#[derive(Debug, Clone, PartialEq)]
pub struct GicpParams {
    pub covariance_k: usize,
    pub plane_epsilon: f64,
    pub max_corr_dist_m: f64,
    pub max_iterations: usize,
    pub translation_eps_m: f64,
    pub rotation_eps_rad: f64,
    /// Smallest accepted ratio between the weakest and strongest translation
    /// constraint; below it the problem is reported as degenerate.
    pub min_constraint_ratio: f64,
}

impl Default for GicpParams {
    fn default() -> Self {
        Self {
            covariance_k: 20,
            plane_epsilon: 1e-3,
            max_corr_dist_m: 1.0,
            max_iterations: 50,
            translation_eps_m: 1e-6,
            rotation_eps_rad: 1e-6,
            min_constraint_ratio: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FineConfig {
    /// Restrict GICP to planar voxels; `false` runs GICP on the full clouds.
    pub planar: bool,
    pub voxel_edge_m: f64,
    pub min_points: usize,
    pub angle_deg: f64,
    pub ratio: f64,
    pub normal_k: usize,
    pub crop_margin_m: f64,
    /// Planar selection + GICP rounds; each later round reselects the
    /// planar voxels at the previous round's pose.
    pub passes: usize,
    pub gicp: GicpParams,
}

impl Default for FineConfig {
    fn default() -> Self {
        Self {
            planar: true,
            voxel_edge_m: 1.0,
            min_points: 100,
            angle_deg: 10.0,
            ratio: 0.70,
            normal_k: 10,
            crop_margin_m: 2.0,
            passes: 2,
            gicp: GicpParams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalConfig {
    pub per_axis: usize,
    pub patch_radius_m: f64,
    pub patch_depth_m: f64,
    pub min_members: usize,
    pub signed: bool,
    /// Minimum |n̄·axis| for an automatically generated patch.
    pub axis_alignment: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            per_axis: 20,
            patch_radius_m: 0.5,
            patch_depth_m: 0.5,
            min_members: 10,
            signed: false,
            axis_alignment: 0.9,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DriftConfig {
    pub interpolate: bool,
}

impl Default for DriftConfig {
    fn default() -> Self {
        Self { interpolate: true }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub jobs: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self { seed: 0, jobs: 1 }
    }
}

/// Every tunable parameter of the pipeline.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PipelineConfig {
    pub pre: PreprocessConfig,
    pub frag: FragmentConfig,
    pub coarse: CoarseConfig,
    pub fine: FineConfig,
    pub eval: EvalConfig,
    pub drift: DriftConfig,
    pub run: RunConfig,
}

/// A value that can appear on the right-hand side of `key = value`.
pub trait ConfigValue: Sized {
    fn parse_value(key: &str, raw: &str) -> Result<Self>;
    fn render(&self) -> String;
}

fn bad(key: &str, reason: impl Into<String>) -> Error {
    Error::InvalidValue {
        key: key.into(),
        reason: reason.into(),
    }
}

fn parse_num<T: FromStr>(key: &str, raw: &str, what: &str) -> Result<T> {
    raw.trim()
        .parse()
        .map_err(|_| bad(key, format!("`{}` is not a valid {what}", raw.trim())))
}

impl ConfigValue for f64 {
    fn parse_value(key: &str, raw: &str) -> Result<Self> {
        let v: f64 = parse_num(key, raw, "number")?;
        if !v.is_finite() {
            return Err(bad(key, "must be finite"));
        }
        Ok(v)
    }
    fn render(&self) -> String {
        format!("{self:?}")
    }
}

impl ConfigValue for usize {
    fn parse_value(key: &str, raw: &str) -> Result<Self> {
        parse_num(key, raw, "nonnegative integer")
    }
    fn render(&self) -> String {
        self.to_string()
    }
}

impl ConfigValue for u64 {
    fn parse_value(key: &str, raw: &str) -> Result<Self> {
        parse_num(key, raw, "nonnegative integer")
    }
    fn render(&self) -> String {
        self.to_string()
    }
}

impl ConfigValue for bool {
    fn parse_value(key: &str, raw: &str) -> Result<Self> {
        match raw.trim() {
            "true" | "yes" | "on" | "1" => Ok(true),
            "false" | "no" | "off" | "0" => Ok(false),
            other => Err(bad(key, format!("`{other}` is not a boolean"))),
        }
    }
    fn render(&self) -> String {
        self.to_string()
    }
}

impl ConfigValue for Vec<u16> {
    fn parse_value(key: &str, raw: &str) -> Result<Self> {
        raw.split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| parse_num(key, s, "class label"))
            .collect()
    }
    fn render(&self) -> String {
        self.iter().map(u16::to_string).collect::<Vec<_>>().join(",")
    }
}

impl ConfigValue for FragmentMode {
    fn parse_value(key: &str, raw: &str) -> Result<Self> {
        match raw.trim() {
            "temporal" => Ok(Self::Temporal),
            "spatial" => Ok(Self::Spatial),
            other => Err(bad(key, format!("`{other}` is not one of temporal, spatial"))),
        }
    }
    fn render(&self) -> String {
        match self {
            Self::Temporal => "temporal",
            Self::Spatial => "spatial",
        }
        .into()
    }
}

impl ConfigValue for FragmentStrategy {
    fn parse_value(key: &str, raw: &str) -> Result<Self> {
        match raw.trim() {
            "ssc" => Ok(Self::Ssc),
            "fixed-time" => Ok(Self::FixedTime),
            "fixed-length" => Ok(Self::FixedLength),
            other => Err(bad(
                key,
                format!("`{other}` is not one of ssc, fixed-time, fixed-length"),
            )),
        }
    }
    fn render(&self) -> String {
        match self {
            Self::Ssc => "ssc",
            Self::FixedTime => "fixed-time",
            Self::FixedLength => "fixed-length",
        }
        .into()
    }
}

macro_rules! config_keys {
    ($( $key:literal => $($field:ident).+ ),* $(,)?) => {
        impl PipelineConfig {
            /// Every recognized key, in documentation order.
            pub const KEYS: &'static [&'static str] = &[$($key),*];

            /// Parses and assigns one value. Unknown keys are errors.
            pub fn set(&mut self, key: &str, raw: &str) -> Result<()> {
                match key {
                    $( $key => { self.$($field).+ = ConfigValue::parse_value(key, raw)?; } )*
                    _ => return Err(Error::UnknownKey(key.into())),
                }
                Ok(())
            }

            /// Current value rendered as it would be written to a file.
            pub fn get(&self, key: &str) -> Option<String> {
                match key {
                    $( $key => Some(self.$($field).+.render()), )*
                    _ => None,
                }
            }
        }
    };
}

config_keys! {
    "pre.cell_size_m" => pre.cell_size_m,
    "pre.sor_k" => pre.sor_k,
    "pre.sor_stddev" => pre.sor_stddev,
    "pre.filter_static" => pre.filter_static,
    "pre.static_labels" => pre.static_labels,
    "frag.strategy" => frag.strategy,
    "frag.mode" => frag.mode,
    "frag.interval_s" => frag.interval_s,
    "frag.length_m" => frag.length_m,
    "frag.fixed_interval_s" => frag.fixed_interval_s,
    "frag.min_traj_m" => frag.min_traj_m,
    "frag.disp_threshold" => frag.disp_threshold,
    "frag.min_pop_fraction" => frag.min_pop_fraction,
    "frag.max_span_fragments" => frag.max_span_fragments,
    "frag.normal_k" => frag.normal_k,
    "frag.max_normals" => frag.max_normals,
    "coarse.iss_resolution_m" => coarse.iss_resolution_m,
    "coarse.iss_salient_mult" => coarse.iss_salient_mult,
    "coarse.iss_nonmax_mult" => coarse.iss_nonmax_mult,
    "coarse.iss_gamma21" => coarse.iss_gamma21,
    "coarse.iss_gamma32" => coarse.iss_gamma32,
    "coarse.iss_min_neighbors" => coarse.iss_min_neighbors,
    "coarse.iss_min_salience" => coarse.iss_min_salience,
    "coarse.iss_max_keypoints" => coarse.iss_max_keypoints,
    "coarse.normal_k" => coarse.normal_k,
    "coarse.fpfh_radius_m" => coarse.fpfh_radius_m,
    "coarse.gror_tau_m" => coarse.gror_tau_m,
    "coarse.gror_k" => coarse.gror_k,
    "coarse.gror_weighted" => coarse.gror_weighted,
    "coarse.ransac_inlier_m" => coarse.ransac_inlier_m,
    "coarse.ransac_max_iterations" => coarse.ransac_max_iterations,
    "coarse.ransac_confidence" => coarse.ransac_confidence,
    "coarse.min_inliers" => coarse.min_inliers,
    "coarse.crop_margin_m" => coarse.crop_margin_m,
    "fine.planar" => fine.planar,
    "fine.voxel_edge_m" => fine.voxel_edge_m,
    "fine.min_points" => fine.min_points,
    "fine.angle_deg" => fine.angle_deg,
    "fine.ratio" => fine.ratio,
    "fine.normal_k" => fine.normal_k,
    "fine.crop_margin_m" => fine.crop_margin_m,
    "fine.passes" => fine.passes,
    "fine.gicp_covariance_k" => fine.gicp.covariance_k,
    "fine.gicp_plane_epsilon" => fine.gicp.plane_epsilon,
    "fine.gicp_max_corr_dist_m" => fine.gicp.max_corr_dist_m,
    "fine.gicp_max_iterations" => fine.gicp.max_iterations,
    "fine.gicp_translation_eps_m" => fine.gicp.translation_eps_m,
    "fine.gicp_rotation_eps_rad" => fine.gicp.rotation_eps_rad,
    "fine.gicp_min_constraint_ratio" => fine.gicp.min_constraint_ratio,
    "eval.per_axis" => eval.per_axis,
    "eval.patch_radius_m" => eval.patch_radius_m,
    "eval.patch_depth_m" => eval.patch_depth_m,
    "eval.min_members" => eval.min_members,
    "eval.signed" => eval.signed,
    "eval.axis_alignment" => eval.axis_alignment,
    "drift.interpolate" => drift.interpolate,
    "run.seed" => run.seed,
    "run.jobs" => run.jobs,
}

impl PipelineConfig {
    /// Checks every parameter against its legal range.
    pub fn validate(&self) -> Result<()> {
        let positive = |key: &str, v: f64| {
            if v > 0.0 {
                Ok(())
            } else {
                Err(bad(key, "must be > 0"))
            }
        };
        let nonneg = |key: &str, v: f64| {
            if v >= 0.0 {
                Ok(())
            } else {
                Err(bad(key, "must be >= 0"))
            }
        };
        let unit = |key: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(bad(key, "must be within [0, 1]"))
            }
        };
        let at_least = |key: &str, v: usize, min: usize| {
            if v >= min {
                Ok(())
            } else {
                Err(bad(key, format!("must be >= {min}")))
            }
        };

        nonneg("pre.cell_size_m", self.pre.cell_size_m)?;
        nonneg("pre.sor_stddev", self.pre.sor_stddev)?;

        positive("frag.interval_s", self.frag.interval_s)?;
        positive("frag.length_m", self.frag.length_m)?;
        positive("frag.fixed_interval_s", self.frag.fixed_interval_s)?;
        nonneg("frag.min_traj_m", self.frag.min_traj_m)?;
        if !(0.0..=2.0).contains(&self.frag.disp_threshold) {
            return Err(bad("frag.disp_threshold", "must be within [0, 2]"));
        }
        unit("frag.min_pop_fraction", self.frag.min_pop_fraction)?;
        at_least("frag.max_span_fragments", self.frag.max_span_fragments, 1)?;
        at_least("frag.normal_k", self.frag.normal_k, 3)?;
        at_least("frag.max_normals", self.frag.max_normals, 5)?;

        nonneg("coarse.iss_resolution_m", self.coarse.iss_resolution_m)?;
        positive("coarse.iss_salient_mult", self.coarse.iss_salient_mult)?;
        positive("coarse.iss_nonmax_mult", self.coarse.iss_nonmax_mult)?;
        unit("coarse.iss_gamma21", self.coarse.iss_gamma21)?;
        unit("coarse.iss_gamma32", self.coarse.iss_gamma32)?;
        unit("coarse.iss_min_salience", self.coarse.iss_min_salience)?;
        at_least("coarse.iss_max_keypoints", self.coarse.iss_max_keypoints, 3)?;
        at_least("coarse.normal_k", self.coarse.normal_k, 3)?;
        positive("coarse.fpfh_radius_m", self.coarse.fpfh_radius_m)?;
        positive("coarse.gror_tau_m", self.coarse.gror_tau_m)?;
        at_least("coarse.gror_k", self.coarse.gror_k, 3)?;
        positive("coarse.ransac_inlier_m", self.coarse.ransac_inlier_m)?;
        at_least("coarse.ransac_max_iterations", self.coarse.ransac_max_iterations, 1)?;
        if !(self.coarse.ransac_confidence > 0.0 && self.coarse.ransac_confidence < 1.0) {
            return Err(bad("coarse.ransac_confidence", "must be within (0, 1)"));
        }
        at_least("coarse.min_inliers", self.coarse.min_inliers, 3)?;
        nonneg("coarse.crop_margin_m", self.coarse.crop_margin_m)?;

        positive("fine.voxel_edge_m", self.fine.voxel_edge_m)?;
        at_least("fine.min_points", self.fine.min_points, 1)?;
        if !(self.fine.angle_deg > 0.0 && self.fine.angle_deg <= 90.0) {
            return Err(bad("fine.angle_deg", "must be within (0, 90]"));
        }
        unit("fine.ratio", self.fine.ratio)?;
        at_least("fine.normal_k", self.fine.normal_k, 3)?;
        nonneg("fine.crop_margin_m", self.fine.crop_margin_m)?;
        at_least("fine.passes", self.fine.passes, 1)?;
        let g = &self.fine.gicp;
        at_least("fine.gicp_covariance_k", g.covariance_k, 3)?;
        if !(g.plane_epsilon > 0.0 && g.plane_epsilon <= 1.0) {
            return Err(bad("fine.gicp_plane_epsilon", "must be within (0, 1]"));
        }
        positive("fine.gicp_max_corr_dist_m", g.max_corr_dist_m)?;
        at_least("fine.gicp_max_iterations", g.max_iterations, 1)?;
        positive("fine.gicp_translation_eps_m", g.translation_eps_m)?;
        positive("fine.gicp_rotation_eps_rad", g.rotation_eps_rad)?;
        unit("fine.gicp_min_constraint_ratio", g.min_constraint_ratio)?;

        positive("eval.patch_radius_m", self.eval.patch_radius_m)?;
        positive("eval.patch_depth_m", self.eval.patch_depth_m)?;
        at_least("eval.min_members", self.eval.min_members, 1)?;
        unit("eval.axis_alignment", self.eval.axis_alignment)?;

        at_least("run.jobs", self.run.jobs, 1)?;
        Ok(())
    }

    /// All keys as `key = value` lines; parsing them back yields `self`.
    pub fn to_kv_string(&self) -> String {
        let mut out = String::new();
        for key in Self::KEYS {
            out.push_str(key);
            out.push_str(" = ");
            out.push_str(&self.get(key).unwrap_or_default());
            out.push('\n');
        }
        out
    }
}
