//! Text run configuration: `key = value` lines, `#` comments, unknown keys
//! rejected with line numbers. The canonical rendering (all keys, sorted,
//! effective values) feeds the config digest embedded in every output.

use crate::error::{CoreError, Result};
use crate::io::sha256_hex;
use crate::nn::{AdamConfig, NetworkConfig, TrainConfig, TrainMode, NUM_CLASSES};
use crate::synth::{BandCounts, SceneConfig, SensorRig};

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub scene: SceneConfig,
    pub rig_beams: usize,
    pub camera_width: u32,
    pub camera_height: u32,
    pub sweep_columns: usize,
    pub network: NetworkConfig,
    pub iterations: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub lr_decay: f64,
    pub lr_decay_every: usize,
    pub gamma: f64,
    pub lambda_box: f64,
    pub class_weights: [f64; NUM_CLASSES],
    pub conf_threshold: f64,
    pub nms_iou: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            scene: SceneConfig::default(),
            rig_beams: 64,
            camera_width: 512,
            camera_height: 160,
            sweep_columns: 2048,
            network: NetworkConfig::default(),
            iterations: 2000,
            batch_size: 4,
            lr: 0.002,
            lr_decay: 0.99,
            lr_decay_every: 150,
            gamma: 2.0,
            lambda_box: 1.0,
            class_weights: [1.0; NUM_CLASSES],
            conf_threshold: 0.5,
            nms_iou: 0.3,
        }
    }
}

fn parse_usize(line: usize, key: &str, v: &str) -> Result<usize> {
    v.parse().map_err(|_| CoreError::Config {
        line,
        msg: format!("{key}: expected a non-negative integer, got '{v}'"),
    })
}

fn parse_u64(line: usize, key: &str, v: &str) -> Result<u64> {
    v.parse().map_err(|_| CoreError::Config {
        line,
        msg: format!("{key}: expected an integer, got '{v}'"),
    })
}

fn parse_f64(line: usize, key: &str, v: &str) -> Result<f64> {
    v.parse().map_err(|_| CoreError::Config {
        line,
        msg: format!("{key}: expected a number, got '{v}'"),
    })
}

fn band_counts<'a>(cfg: &'a mut SceneConfig, which: &str) -> Option<&'a mut BandCounts> {
    match which {
        "near" => Some(&mut cfg.near),
        "mid" => Some(&mut cfg.mid),
        "far" => Some(&mut cfg.far),
        _ => None,
    }
}

fn parse_triple(line: usize, key: &str, v: &str) -> Result<[usize; 3]> {
    let parts: Vec<&str> = v.split(',').map(str::trim).collect();
    if parts.len() != 3 {
        return Err(CoreError::Config {
            line,
            msg: format!("{key}: expected three comma-separated integers, got '{v}'"),
        });
    }
    let mut out = [0usize; 3];
    for (o, p) in out.iter_mut().zip(parts) {
        *o = parse_usize(line, key, p)?;
    }
    Ok(out)
}

impl RunConfig {
    /// Parse from text, starting at the defaults. Unknown keys are rejected
    /// with their line number.
    pub fn parse(text: &str) -> Result<RunConfig> {
        let mut cfg = RunConfig::default();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let stripped = match raw.find('#') {
                Some(p) => &raw[..p],
                None => raw,
            }
            .trim();
            if stripped.is_empty() {
                continue;
            }
            let Some((key, value)) = stripped.split_once('=') else {
                return Err(CoreError::Config {
                    line,
                    msg: format!("expected 'key = value', got '{stripped}'"),
                });
            };
            let (key, v) = (key.trim(), value.trim());
            match key {
                "seed" => cfg.seed = parse_u64(line, key, v)?,
                "scene.background_objects" => {
                    cfg.scene.background_objects = parse_usize(line, key, v)?
                }
                "scene.road_half_width" => cfg.scene.road_half_width = parse_f64(line, key, v)?,
                "scene.range_noise_std" => cfg.scene.range_noise_std = parse_f64(line, key, v)?,
                "rig.beams" => cfg.rig_beams = parse_usize(line, key, v)?,
                "rig.camera_width" => cfg.camera_width = parse_u64(line, key, v)? as u32,
                "rig.camera_height" => cfg.camera_height = parse_u64(line, key, v)? as u32,
                "rig.sweep_columns" => cfg.sweep_columns = parse_usize(line, key, v)?,
                "net.aux_channels" => cfg.network.aux_channels = parse_triple(line, key, v)?,
                "net.primary_channels" => {
                    cfg.network.primary_channels = parse_triple(line, key, v)?
                }
                "train.iterations" => cfg.iterations = parse_usize(line, key, v)?,
                "train.batch_size" => {
                    cfg.batch_size = parse_usize(line, key, v)?;
                    if cfg.batch_size == 0 {
                        return Err(CoreError::Config {
                            line,
                            msg: "train.batch_size must be at least 1".into(),
                        });
                    }
                }
                "train.lr" => cfg.lr = parse_f64(line, key, v)?,
                "train.lr_decay" => cfg.lr_decay = parse_f64(line, key, v)?,
                "train.lr_decay_every" => cfg.lr_decay_every = parse_usize(line, key, v)?,
                "train.gamma" => cfg.gamma = parse_f64(line, key, v)?,
                "train.lambda_box" => cfg.lambda_box = parse_f64(line, key, v)?,
                "train.class_weights" => {
                    let parts: Vec<&str> = v.split(',').map(str::trim).collect();
                    if parts.len() != NUM_CLASSES {
                        return Err(CoreError::Config {
                            line,
                            msg: format!("{key}: expected {NUM_CLASSES} weights"),
                        });
                    }
                    for (w, p) in cfg.class_weights.iter_mut().zip(parts) {
                        *w = parse_f64(line, key, p)?;
                    }
                }
                "eval.conf_threshold" => cfg.conf_threshold = parse_f64(line, key, v)?,
                "eval.nms_iou" => cfg.nms_iou = parse_f64(line, key, v)?,
                other => {
                    if let Some((prefix, rest)) = other
                        .strip_prefix("scene.")
                        .and_then(|s| s.split_once('.'))
                    {
                        if let Some(counts) = band_counts(&mut cfg.scene, prefix) {
                            let n = parse_usize(line, key, v)?;
                            match rest {
                                "vehicles" => counts.vehicles = n,
                                "pedestrians" => counts.pedestrians = n,
                                "bicycles" => counts.bicycles = n,
                                "motorcycles" => counts.motorcycles = n,
                                _ => {
                                    return Err(CoreError::Config {
                                        line,
                                        msg: format!("unknown key '{other}'"),
                                    })
                                }
                            }
                            continue;
                        }
                    }
                    return Err(CoreError::Config {
                        line,
                        msg: format!("unknown key '{other}'"),
                    });
                }
            }
        }
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CoreError::io(path.display().to_string(), e))?;
        Self::parse(&text)
    }

    /// Canonical rendering of the effective configuration: every key, sorted,
    /// one per line. Also serves as a template of all available keys.
    pub fn canonical_text(&self) -> String {
        let mut lines = vec![
            format!("eval.conf_threshold = {}", self.conf_threshold),
            format!("eval.nms_iou = {}", self.nms_iou),
            format!("net.aux_channels = {},{},{}", self.network.aux_channels[0], self.network.aux_channels[1], self.network.aux_channels[2]),
            format!("net.primary_channels = {},{},{}", self.network.primary_channels[0], self.network.primary_channels[1], self.network.primary_channels[2]),
            format!("rig.beams = {}", self.rig_beams),
            format!("rig.camera_height = {}", self.camera_height),
            format!("rig.camera_width = {}", self.camera_width),
            format!("rig.sweep_columns = {}", self.sweep_columns),
            format!("scene.background_objects = {}", self.scene.background_objects),
            format!("scene.range_noise_std = {}", self.scene.range_noise_std),
            format!("scene.road_half_width = {}", self.scene.road_half_width),
            format!("seed = {}", self.seed),
            format!("train.batch_size = {}", self.batch_size),
            format!(
                "train.class_weights = {}",
                self.class_weights.map(|w| w.to_string()).join(",")
            ),
            format!("train.gamma = {}", self.gamma),
            format!("train.iterations = {}", self.iterations),
            format!("train.lambda_box = {}", self.lambda_box),
            format!("train.lr = {}", self.lr),
            format!("train.lr_decay = {}", self.lr_decay),
            format!("train.lr_decay_every = {}", self.lr_decay_every),
        ];
        for (name, c) in [
            ("near", &self.scene.near),
            ("mid", &self.scene.mid),
            ("far", &self.scene.far),
        ] {
            lines.push(format!("scene.{name}.vehicles = {}", c.vehicles));
            lines.push(format!("scene.{name}.pedestrians = {}", c.pedestrians));
            lines.push(format!("scene.{name}.bicycles = {}", c.bicycles));
            lines.push(format!("scene.{name}.motorcycles = {}", c.motorcycles));
        }
        lines.sort();
        lines.join("\n") + "\n"
    }

    /// SHA-256 over the canonical text.
    pub fn digest(&self) -> [u8; 32] {
        use sha2::{Digest, Sha256};
        let mut h = Sha256::new();
        h.update(self.canonical_text().as_bytes());
        h.finalize().into()
    }

    pub fn digest_hex(&self) -> String {
        sha256_hex(self.canonical_text().as_bytes())
    }

    pub fn rig(&self) -> SensorRig {
        SensorRig::with_beams(
            self.rig_beams,
            self.camera_width,
            self.camera_height,
            self.sweep_columns,
        )
    }

    pub fn train_config(&self, mode: TrainMode) -> TrainConfig {
        TrainConfig {
            network: self.network.clone(),
            adam: AdamConfig {
                lr0: self.lr,
                decay_factor: self.lr_decay,
                decay_every: self.lr_decay_every.max(1),
                ..AdamConfig::default()
            },
            gamma: self.gamma,
            class_weights: self.class_weights,
            lambda_box: self.lambda_box,
            batch_size: self.batch_size,
            iterations: self.iterations,
            seed: self.seed,
            mode,
        }
    }

    pub fn eval_config(&self, mode: TrainMode) -> crate::eval::EvalConfig {
        crate::eval::EvalConfig {
            conf_threshold: self.conf_threshold,
            nms_iou: self.nms_iou,
            mode,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_parse_from_empty_text() {
        let cfg = RunConfig::parse("").unwrap();
        assert_eq!(cfg, RunConfig::default());
    }

    #[test]
    fn canonical_text_round_trips() {
        let cfg = RunConfig::default();
        let text = cfg.canonical_text();
        let back = RunConfig::parse(&text).unwrap();
        assert_eq!(cfg, back);
        assert_eq!(cfg.digest_hex(), back.digest_hex());
    }

    #[test]
    fn unknown_keys_are_rejected_with_line_numbers() {
        let err = RunConfig::parse("seed = 3\n\nnot.a.key = 1\n").unwrap_err();
        match err {
            CoreError::Config { line, msg } => {
                assert_eq!(line, 3);
                assert!(msg.contains("not.a.key"));
            }
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn values_change_the_digest() {
        let a = RunConfig::default();
        let b = RunConfig::parse("scene.far.vehicles = 3").unwrap();
        assert_ne!(a.digest_hex(), b.digest_hex());
        assert_eq!(b.scene.far.vehicles, 3);
    }

    #[test]
    fn comments_and_blanks_are_ignored() {
        let cfg = RunConfig::parse("# full line comment\nseed = 5  # trailing\n\n").unwrap();
        assert_eq!(cfg.seed, 5);
    }
}
