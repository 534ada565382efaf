//! Flat key=value run configuration with documented defaults.
//!
//! Unknown keys are rejected so typos fail loudly. Per-class keys
//! (`scene.dims.<Class>`, `eval.iou3d.<Class>`, ...) are validated against
//! the configured class list.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use lift3d_core::evalkit::{ApMode, ClassEvalSpec, Difficulty};
use lift3d_core::geometry::CameraIntrinsics;
use lift3d_core::nettrain::LossWeights;
use lift3d_core::synthdata::{ClassSpec, SceneConfig};

/// Keys with fixed names: (key, default, documentation).
pub const CONFIG_KEYS: &[(&str, &str, &str)] = &[
    ("seed", "0", "master seed for generation, training, and augmentation"),
    ("classes", "Car,Pedestrian", "comma-separated class names; index = class id"),
    ("scene.width", "256", "rendered image width in pixels"),
    ("scene.height", "192", "rendered image height in pixels"),
    ("scene.fx", "210", "focal length x in pixels"),
    ("scene.fy", "210", "focal length y in pixels"),
    ("scene.cx", "128", "principal point x in pixels"),
    ("scene.cy", "96", "principal point y in pixels"),
    ("scene.baseline", "0.54", "stereo baseline in meters, recorded in calib.txt"),
    ("scene.min_objects", "1", "minimum objects per scene"),
    ("scene.max_objects", "3", "maximum objects per scene"),
    ("scene.depth_min", "5", "nearest object-center depth in meters"),
    ("scene.depth_max", "14", "farthest object-center depth in meters"),
    ("scene.lateral_extent", "6", "maximum |x| of object centers in meters"),
    ("scene.ground_y", "1.6", "ground plane y (camera height) in meters"),
    ("scene.yaw_min", "-1.5707963267948966", "lower yaw bound in radians"),
    ("scene.yaw_max", "1.5707963267948966", "upper yaw bound in radians"),
    ("scene.depth_noise_sigma", "0.03", "gaussian depth noise sigma in meters"),
    ("scene.label_flip_rate", "0.02", "probability a foreground semantic pixel flips to background"),
    ("net.stage_channels", "16,32,64", "channels of the residual stages"),
    ("net.blocks_per_stage", "2", "residual blocks per stage"),
    ("net.mlp_hidden", "256", "hidden width of the three head MLPs"),
    ("net.bins", "2", "orientation bin count B"),
    ("train.epochs", "10", "training epochs"),
    ("train.batch_size", "32", "samples per optimizer step"),
    ("train.learning_rate", "0.001", "Adam learning rate"),
    ("train.grad_clip", "10", "global gradient-norm clip (0 disables)"),
    ("train.augment", "true", "enable 2D-box jitter augmentation"),
    ("train.jitter_fraction", "0.25", "jitter range as a fraction of box extent"),
    ("loss.lambda1", "1", "weight of the location regression term"),
    ("loss.lambda2", "1", "weight of the dimension regression term"),
    ("loss.lambda3", "1", "weight of the orientation residual term"),
    ("loss.lambda4", "1", "weight of the bin classification term"),
    ("eval.mode", "r40", "AP interpolation: r11 or r40"),
    ("sweep.thresholds", "0.3,0.4,0.5,0.6,0.7", "IoU thresholds for the sweep"),
    ("sweep.metric", "3d", "sweep metric: 3d or bev"),
    ("sweep.difficulty", "moderate", "sweep difficulty: easy, moderate, or hard"),
    ("sweep.class", "Car", "class the sweep evaluates"),
];

/// Per-class key prefixes with defaults for the built-in classes.
const CLASS_KEY_PREFIXES: &[&str] = &["scene.dims", "scene.sigma", "eval.iou3d", "eval.iou2d"];

fn builtin_class_default(prefix: &str, class: &str) -> Option<&'static str> {
    match (prefix, class) {
        ("scene.dims", "Car") => Some("1.5,1.8,4.0"),
        ("scene.sigma", "Car") => Some("0.1,0.1,0.3"),
        ("scene.dims", "Pedestrian") => Some("1.75,0.6,0.8"),
        ("scene.sigma", "Pedestrian") => Some("0.1,0.05,0.05"),
        ("eval.iou3d", "Car") => Some("0.7"),
        ("eval.iou2d", "Car") => Some("0.7"),
        ("eval.iou3d", _) => Some("0.5"),
        ("eval.iou2d", _) => Some("0.5"),
        _ => None,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainSettings {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub grad_clip: f64,
    pub augment: bool,
    pub jitter_fraction: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetSettings {
    pub stage_channels: Vec<usize>,
    pub blocks_per_stage: usize,
    pub mlp_hidden: usize,
    pub bins: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSettings {
    pub thresholds: Vec<f64>,
    pub metric: String,
    pub difficulty: Difficulty,
    pub class: String,
}

/// The fully resolved run configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub classes: Vec<String>,
    pub scene: SceneConfig,
    pub net: NetSettings,
    pub train: TrainSettings,
    pub loss: LossWeights,
    pub eval_mode: ApMode,
    pub eval_specs: Vec<ClassEvalSpec>,
    pub sweep: SweepSettings,
}

fn parse_kv_text(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = match raw.find('#') {
            Some(p) => &raw[..p],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| anyhow!("config line {}: expected key=value, got {raw:?}", i + 1))?;
        let key = key.trim().to_string();
        let value = value.trim().to_string();
        if map.insert(key.clone(), value).is_some() {
            bail!("config line {}: duplicate key {key:?}", i + 1);
        }
    }
    Ok(map)
}

fn parse_list<T: std::str::FromStr>(value: &str, key: &str) -> Result<Vec<T>> {
    value
        .split(',')
        .map(|p| {
            p.trim()
                .parse::<T>()
                .map_err(|_| anyhow!("{key}: bad element {p:?}"))
        })
        .collect()
}

fn parse_triple(value: &str, key: &str) -> Result<[f64; 3]> {
    let v: Vec<f64> = parse_list(value, key)?;
    if v.len() != 3 {
        bail!("{key}: expected 3 comma-separated values, found {}", v.len());
    }
    Ok([v[0], v[1], v[2]])
}

impl RunConfig {
    /// The defaults with no config file.
    pub fn default_config() -> Self {
        Self::from_map(BTreeMap::new()).expect("defaults are valid")
    }

    /// Load from a key=value file, falling back to defaults per key.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        Self::from_text(&text)
    }

    pub fn from_text(text: &str) -> Result<Self> {
        Self::from_map(parse_kv_text(text)?)
    }

    fn from_map(map: BTreeMap<String, String>) -> Result<Self> {
        let defaults: BTreeMap<&str, &str> =
            CONFIG_KEYS.iter().map(|(k, d, _)| (*k, *d)).collect();
        let get = |key: &str| -> String {
            map.get(key)
                .cloned()
                .unwrap_or_else(|| defaults.get(key).expect("key in schema").to_string())
        };
        let classes: Vec<String> = get("classes")
            .split(',')
            .map(|c| c.trim().to_string())
            .filter(|c| !c.is_empty())
            .collect();
        if classes.is_empty() {
            bail!("classes: at least one class name required");
        }

        // reject unknown keys (including per-class keys of unknown classes)
        for key in map.keys() {
            if defaults.contains_key(key.as_str()) {
                continue;
            }
            let known_class_key = CLASS_KEY_PREFIXES.iter().any(|prefix| {
                key.strip_prefix(&format!("{prefix}."))
                    .is_some_and(|class| classes.iter().any(|c| c == class))
            });
            if !known_class_key {
                bail!("unknown config key {key:?}");
            }
        }

        let num = |key: &str| -> Result<f64> {
            get(key)
                .parse::<f64>()
                .map_err(|_| anyhow!("{key}: bad number {:?}", get(key)))
        };
        let int = |key: &str| -> Result<usize> {
            get(key)
                .parse::<usize>()
                .map_err(|_| anyhow!("{key}: bad integer {:?}", get(key)))
        };
        let boolean = |key: &str| -> Result<bool> {
            match get(key).as_str() {
                "true" | "1" | "yes" => Ok(true),
                "false" | "0" | "no" => Ok(false),
                other => bail!("{key}: bad boolean {other:?}"),
            }
        };
        let class_value = |prefix: &str, class: &str| -> Result<String> {
            let key = format!("{prefix}.{class}");
            if let Some(v) = map.get(&key) {
                return Ok(v.clone());
            }
            builtin_class_default(prefix, class)
                .map(str::to_string)
                .ok_or_else(|| anyhow!("missing required config key {key:?}"))
        };

        let intrinsics = CameraIntrinsics::new(
            num("scene.fx")?,
            num("scene.fy")?,
            num("scene.cx")?,
            num("scene.cy")?,
            int("scene.width")?,
            int("scene.height")?,
        )?;
        let mut class_specs = Vec::new();
        for class in &classes {
            class_specs.push(ClassSpec {
                name: class.clone(),
                dim_mean: parse_triple(&class_value("scene.dims", class)?, "scene.dims")?,
                dim_sigma: parse_triple(&class_value("scene.sigma", class)?, "scene.sigma")?,
            });
        }
        let seed = get("seed")
            .parse::<u64>()
            .map_err(|_| anyhow!("seed: bad integer {:?}", get("seed")))?;
        let scene = SceneConfig {
            intrinsics,
            baseline: num("scene.baseline")?,
            min_objects: int("scene.min_objects")?,
            max_objects: int("scene.max_objects")?,
            classes: class_specs,
            depth_range: (num("scene.depth_min")?, num("scene.depth_max")?),
            lateral_extent: num("scene.lateral_extent")?,
            ground_y: num("scene.ground_y")?,
            yaw_range: (num("scene.yaw_min")?, num("scene.yaw_max")?),
            depth_noise_sigma: num("scene.depth_noise_sigma")?,
            label_flip_rate: num("scene.label_flip_rate")?,
            seed,
        };
        scene.validate()?;

        let eval_specs = classes
            .iter()
            .map(|class| -> Result<ClassEvalSpec> {
                Ok(ClassEvalSpec {
                    name: class.clone(),
                    iou_3d: class_value("eval.iou3d", class)?
                        .parse()
                        .map_err(|_| anyhow!("eval.iou3d.{class}: bad number"))?,
                    iou_2d: class_value("eval.iou2d", class)?
                        .parse()
                        .map_err(|_| anyhow!("eval.iou2d.{class}: bad number"))?,
                })
            })
            .collect::<Result<Vec<_>>>()?;

        let sweep_difficulty = match get("sweep.difficulty").as_str() {
            "easy" => Difficulty::Easy,
            "moderate" => Difficulty::Moderate,
            "hard" => Difficulty::Hard,
            other => bail!("sweep.difficulty: unknown value {other:?}"),
        };
        let sweep_metric = get("sweep.metric");
        if sweep_metric != "3d" && sweep_metric != "bev" {
            bail!("sweep.metric: expected '3d' or 'bev', got {sweep_metric:?}");
        }

        Ok(RunConfig {
            seed,
            classes: classes.clone(),
            scene,
            net: NetSettings {
                stage_channels: parse_list(&get("net.stage_channels"), "net.stage_channels")?,
                blocks_per_stage: int("net.blocks_per_stage")?,
                mlp_hidden: int("net.mlp_hidden")?,
                bins: int("net.bins")?,
            },
            train: TrainSettings {
                epochs: int("train.epochs")?,
                batch_size: int("train.batch_size")?,
                learning_rate: num("train.learning_rate")?,
                grad_clip: num("train.grad_clip")?,
                augment: boolean("train.augment")?,
                jitter_fraction: num("train.jitter_fraction")?,
            },
            loss: LossWeights {
                lambda1: num("loss.lambda1")?,
                lambda2: num("loss.lambda2")?,
                lambda3: num("loss.lambda3")?,
                lambda4: num("loss.lambda4")?,
            },
            eval_mode: ApMode::parse(&get("eval.mode")).map_err(|e| anyhow!("{e}"))?,
            eval_specs,
            sweep: SweepSettings {
                thresholds: parse_list(&get("sweep.thresholds"), "sweep.thresholds")?,
                metric: sweep_metric,
                difficulty: sweep_difficulty,
                class: get("sweep.class"),
            },
        })
    }

    /// The full schema as a commented config file.
    pub fn documented_defaults() -> String {
        let mut out = String::from("# lift3d run configuration: key = value, '#' comments\n");
        for (key, default, doc) in CONFIG_KEYS {
            out.push_str(&format!("\n# {doc}\n{key} = {default}\n"));
        }
        out.push_str("\n# per-class keys (defaults shown for the built-in classes):\n");
        for prefix in CLASS_KEY_PREFIXES {
            for class in ["Car", "Pedestrian"] {
                if let Some(d) = builtin_class_default(prefix, class) {
                    out.push_str(&format!("{prefix}.{class} = {d}\n"));
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_parse_and_validate() {
        let cfg = RunConfig::default_config();
        assert_eq!(cfg.classes, vec!["Car", "Pedestrian"]);
        assert_eq!(cfg.net.stage_channels, vec![16, 32, 64]);
        assert_eq!(cfg.train.epochs, 10);
        assert_eq!(cfg.eval_mode, ApMode::R40);
        assert_eq!(cfg.eval_specs[0].iou_3d, 0.7);
        assert_eq!(cfg.eval_specs[1].iou_3d, 0.5);
    }

    #[test]
    fn overrides_apply() {
        let cfg = RunConfig::from_text(
            "seed = 7\ntrain.epochs = 3\nscene.max_objects = 5\nscene.dims.Car = 1.4,1.7,3.9\n",
        )
        .unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.train.epochs, 3);
        assert_eq!(cfg.scene.max_objects, 5);
        assert_eq!(cfg.scene.classes[0].dim_mean, [1.4, 1.7, 3.9]);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(RunConfig::from_text("train.epoch = 3\n").is_err());
        assert!(RunConfig::from_text("scene.dims.Bus = 1,2,3\n").is_err());
        // but per-class keys of declared classes are fine
        let cfg = RunConfig::from_text("classes = Car,Bus\nscene.dims.Bus = 3,2.5,10\nscene.sigma.Bus = 0.2,0.2,0.5\n")
            .unwrap();
        assert_eq!(cfg.scene.classes[1].dim_mean, [3.0, 2.5, 10.0]);
    }

    #[test]
    fn malformed_values_rejected() {
        assert!(RunConfig::from_text("train.epochs = many\n").is_err());
        assert!(RunConfig::from_text("scene.dims.Car = 1,2\n").is_err());
        assert!(RunConfig::from_text("eval.mode = r25\n").is_err());
        assert!(RunConfig::from_text("seed 7\n").is_err());
        assert!(RunConfig::from_text("seed = 1\nseed = 2\n").is_err());
    }

    #[test]
    fn comments_and_blanks_ignored() {
        let cfg = RunConfig::from_text("# a comment\n\nseed = 9 # trailing\n").unwrap();
        assert_eq!(cfg.seed, 9);
    }

    #[test]
    fn documented_defaults_cover_schema() {
        let text = RunConfig::documented_defaults();
        for (key, _, _) in CONFIG_KEYS {
            assert!(text.contains(key), "{key} missing from documentation");
        }
        // the documented file parses back to the defaults
        let parsed = RunConfig::from_text(&text).unwrap();
        assert_eq!(parsed, RunConfig::default_config());
    }
}
