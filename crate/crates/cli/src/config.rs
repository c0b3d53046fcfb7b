//! Declarative run configuration: one TOML file whose sections mirror the
//! library's config structs. Unknown keys are rejected, every value is
//! validated before any work starts, and sensor geometry is normalized
//! through the f32 precision of the on-disk scan headers so in-memory and
//! file-backed configs agree bit-exactly.

use std::path::Path;

use moves_core::metrics::lqi::LqiConfig;
use moves_core::model::ModelConfig;
use moves_core::odom::IcpConfig;
use moves_core::segment::SegmentConfig;
use moves_core::sensor::SensorConfig;
use moves_core::train::{AdaptConfig, TrainConfig};
use moves_core::world::{SequenceSpec, WorldGenSpec};
use serde::Deserialize;

use crate::error::{invalid, vfail, CliResult};

/// Metric-evaluation knobs.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSection {
    /// Cloud subsample size for the assignment-based transport metric.
    pub emd_points: usize,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self { emd_points: 128 }
    }
}

/// Navigation-evaluation knobs.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NavSection {
    /// Frame gap for relative-pose error.
    pub rpe_delta: usize,
}

impl Default for NavSection {
    fn default() -> Self {
        Self { rpe_delta: 1 }
    }
}

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub sensor: Option<SensorConfig>,
    pub world: Option<WorldGenSpec>,
    pub sequence: Option<SequenceSpec>,
    pub model: Option<ModelConfig>,
    pub train: TrainConfig,
    pub adapt: AdaptConfig,
    pub segment: SegmentConfig,
    pub icp: IcpConfig,
    pub lqi: LqiConfig,
    pub evaluate: EvalSection,
    pub nav: NavSection,
}

fn check_range_f(name: &str, lo: f64, hi: f64, min: f64) -> CliResult<()> {
    if !(lo.is_finite() && hi.is_finite()) || lo < min || hi < lo {
        return Err(invalid(format!(
            "{name} = [{lo}, {hi}] must satisfy {min} <= lo <= hi"
        )));
    }
    Ok(())
}

fn check_positive(name: &str, v: f64) -> CliResult<()> {
    if !v.is_finite() || v <= 0.0 {
        return Err(invalid(format!("{name} = {v} must be a positive number")));
    }
    Ok(())
}

impl RunConfig {
    /// Reads and fully validates a config file; `None` yields the defaults.
    pub fn load(path: Option<&Path>) -> CliResult<Self> {
        let mut cfg = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(vfail(&format!("reading config {}", p.display())))?;
                toml::from_str(&text)
                    .map_err(vfail(&format!("parsing config {}", p.display())))?
            }
            None => RunConfig::default(),
        };
        if let Some(s) = &cfg.sensor {
            cfg.sensor = Some(
                crate::io::quantize_sensor(s).map_err(|e| invalid(format!("sensor: {e}")))?,
            );
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> CliResult<()> {
        if let Some(s) = &self.sensor {
            s.validate().map_err(vfail("sensor"))?;
        }
        if let Some(m) = &self.model {
            m.validate().map_err(vfail("model"))?;
        }
        if let Some(w) = &self.world {
            check_range_f("world.room_half", w.room_half[0], w.room_half[1], 0.5)?;
            check_positive("world.floor_depth", w.floor_depth)?;
            check_positive("world.ceiling_height", w.ceiling_height)?;
            if w.n_static[0] > w.n_static[1] {
                return Err(invalid("world.n_static: lo exceeds hi"));
            }
            if w.n_actors[0] > w.n_actors[1] {
                return Err(invalid("world.n_actors: lo exceeds hi"));
            }
            check_range_f("world.static_half", w.static_half[0], w.static_half[1], 0.05)?;
            check_range_f("world.actor_half", w.actor_half[0], w.actor_half[1], 0.05)?;
            check_range_f("world.actor_speed", w.actor_speed[0], w.actor_speed[1], 0.0)?;
            if !(0.0..=1.0).contains(&w.movable_fraction) {
                return Err(invalid("world.movable_fraction must lie in [0, 1]"));
            }
            check_positive("world.clearance", w.clearance)?;
        }
        if let Some(q) = &self.sequence {
            if q.n_frames == 0 {
                return Err(invalid("sequence.n_frames must be at least 1"));
            }
            check_positive("sequence.interval", q.interval)?;
            if q.ego.waypoints.is_empty() || q.ego.waypoints.len() != q.ego.yaws.len() {
                return Err(invalid(
                    "sequence.ego needs equal, nonzero waypoint and yaw counts",
                ));
            }
            if q.yaw_jitter < 0.0 || !q.yaw_jitter.is_finite() {
                return Err(invalid("sequence.yaw_jitter must be finite and >= 0"));
            }
        }
        let t = &self.train;
        if t.epochs == 0 {
            return Err(invalid("train.epochs must be at least 1"));
        }
        if t.batch_size == 0 {
            return Err(invalid("train.batch_size must be at least 1"));
        }
        check_positive("train.lr", t.lr)?;
        for (name, v) in [
            ("train.weights.adv_g", t.weights.adv_g),
            ("train.weights.recon", t.weights.recon),
            ("train.weights.tri", t.weights.tri),
            ("train.weights.mmd", t.weights.mmd),
            ("train.weights.margin", t.weights.margin),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(invalid(format!("{name} = {v} must be finite and >= 0")));
            }
        }
        if t.eval_points == 0 {
            return Err(invalid("train.eval_points must be at least 1"));
        }
        let a = &self.adapt;
        if a.epochs == 0 {
            return Err(invalid("adapt.epochs must be at least 1"));
        }
        if a.batch_size == 0 {
            return Err(invalid("adapt.batch_size must be at least 1"));
        }
        check_positive("adapt.lr", a.lr)?;
        if !a.w_mmd.is_finite() || a.w_mmd < 0.0 {
            return Err(invalid("adapt.w_mmd must be finite and >= 0"));
        }
        if a.max_source_ref == 0 {
            return Err(invalid("adapt.max_source_ref must be at least 1"));
        }
        let s = &self.segment;
        check_positive("segment.tau", s.tau)?;
        check_positive("segment.cluster_radius", s.cluster_radius)?;
        if s.min_cluster == 0 {
            return Err(invalid("segment.min_cluster must be at least 1"));
        }
        check_positive("segment.gate", s.gate)?;
        if s.window < 2 {
            return Err(invalid("segment.window must be at least 2"));
        }
        check_positive("segment.move_eps", s.move_eps)?;
        self.icp.validate().map_err(vfail("icp"))?;
        let l = &self.lqi;
        if l.channels.is_empty() {
            return Err(invalid("lqi.channels must list at least one width"));
        }
        if l.epochs == 0 {
            return Err(invalid("lqi.epochs must be at least 1"));
        }
        check_positive("lqi.lr", l.lr)?;
        if self.evaluate.emd_points == 0 {
            return Err(invalid("evaluate.emd_points must be at least 1"));
        }
        if self.nav.rpe_delta == 0 {
            return Err(invalid("nav.rpe_delta must be at least 1"));
        }
        Ok(())
    }

    /// The configured sensor, or the desk-scale default, f32-normalized.
    pub fn sensor(&self) -> CliResult<SensorConfig> {
        match &self.sensor {
            Some(s) => Ok(*s),
            None => {
                let s = SensorConfig::new(32, 64, -0.45, 0.25, 20.0)
                    .expect("desk default is valid");
                crate::io::quantize_sensor(&s).map_err(invalid)
            }
        }
    }

    /// The configured model architecture, or the desk-scale default sized
    /// to the given sensor. Cross-checks grid shape and range scale.
    pub fn model_for(&self, sensor: &SensorConfig) -> CliResult<ModelConfig> {
        let cfg = match &self.model {
            Some(m) => m.clone(),
            None => ModelConfig {
                height: sensor.height,
                width: sensor.width,
                ..ModelConfig::desk(sensor.r_max)
            },
        };
        cfg.validate().map_err(vfail("model"))?;
        if (cfg.height, cfg.width) != (sensor.height, sensor.width) {
            return Err(invalid(format!(
                "model grid {}x{} does not match sensor grid {}x{}",
                cfg.height, cfg.width, sensor.height, sensor.width
            )));
        }
        if cfg.r_max != sensor.r_max {
            return Err(invalid(format!(
                "model r_max {} does not match sensor r_max {}",
                cfg.r_max, sensor.r_max
            )));
        }
        Ok(cfg)
    }

    /// World-generation parameters (library defaults when the section is
    /// absent).
    pub fn world(&self) -> WorldGenSpec {
        self.world.clone().unwrap_or_default()
    }

    /// Sequence capture parameters; the default is a short diagonal sweep
    /// that stays inside every room the default generator can produce.
    pub fn sequence_spec(&self) -> SequenceSpec {
        self.sequence.clone().unwrap_or_else(|| SequenceSpec {
            n_frames: 12,
            interval: 0.1,
            ego: moves_core::world::EgoPath {
                waypoints: vec![[-0.6, -0.4, 0.0], [0.6, 0.4, 0.0]],
                yaws: vec![0.0, 0.5],
            },
            yaw_jitter: 0.0,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use moves_core::train::TrainMode;

    #[test]
    fn defaults_validate_and_sections_overlay() {
        let cfg = RunConfig::default();
        cfg.validate().unwrap();
        let sensor = cfg.sensor().unwrap();
        assert_eq!((sensor.height, sensor.width), (32, 64));
        let model = cfg.model_for(&sensor).unwrap();
        assert_eq!((model.height, model.width), (32, 64));

        let parsed: RunConfig = toml::from_str(
            "[train]\nmode = \"cod\"\nepochs = 3\n\n[train.weights]\nrecon = 2.5\n\n[segment]\ntau = 0.3\n",
        )
        .unwrap();
        parsed.validate().unwrap();
        assert_eq!(parsed.train.mode, TrainMode::Cod);
        assert_eq!(parsed.train.epochs, 3);
        assert_eq!(parsed.train.weights.recon, 2.5);
        assert_eq!(parsed.train.weights.adv_g, 1.0);
        assert_eq!(parsed.segment.tau, 0.3);
        assert_eq!(parsed.segment.window, 5);
    }

    #[test]
    fn unknown_keys_and_bad_values_are_rejected() {
        assert!(toml::from_str::<RunConfig>("[train]\nlearning_rate = 0.1\n").is_err());
        assert!(toml::from_str::<RunConfig>("[typo]\n").is_err());

        let zero_tau: RunConfig = toml::from_str("[segment]\ntau = 0.0\n").unwrap();
        assert!(zero_tau.validate().is_err());

        let bad_world: RunConfig =
            toml::from_str("[world]\nroom_half = [3.0, 2.0]\nfloor_depth = 1.0\nceiling_height = 1.6\nn_static = [1, 2]\nstatic_half = [0.3, 0.9]\nn_actors = [1, 2]\nactor_half = [0.5, 1.0]\nactor_speed = [0.5, 1.0]\nmovable_fraction = 0.4\nclearance = 0.3\n")
                .unwrap();
        assert!(bad_world.validate().is_err());
    }

    #[test]
    fn sensor_geometry_is_normalized_to_file_precision() {
        let text = "[sensor]\nheight = 16\nwidth = 32\nvfov_min = -0.45\nvfov_max = 0.25\nr_max = 20.0\n";
        let mut cfg: RunConfig = toml::from_str(text).unwrap();
        cfg.sensor = Some(crate::io::quantize_sensor(cfg.sensor.as_ref().unwrap()).unwrap());
        let s = cfg.sensor().unwrap();
        assert_eq!(s.vfov_min, -0.45f32 as f64);
        assert_eq!(s.vfov_max, 0.25f32 as f64);
    }
}
