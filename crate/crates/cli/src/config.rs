//! Flat `key=value` run configuration.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use forel_core::{DenominatorMode, Integrator, Interpolation, Regularizer, ScoreMode, TransformVariant};

/// A configuration problem, always tied to the key that caused it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError {
    pub key: String,
    pub message: String,
}

impl ConfigError {
    pub fn new(key: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            key: key.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.key, self.message)
    }
}

impl std::error::Error for ConfigError {}

macro_rules! config_keys {
    ($($key:ident),* $(,)?) => {
        /// Every recognised key, in documentation order.
        pub const KEYS: &[&str] = &[$(stringify!($key)),*];

        /// Command-line overrides; each flag is named after its key.
        #[derive(Debug, Clone, Default, clap::Args)]
        pub struct Overrides {
            $(
                #[arg(long = stringify!($key), value_name = "VALUE")]
                pub $key: Option<String>,
            )*
        }

        impl Overrides {
            pub fn pairs(&self) -> Vec<(&'static str, String)> {
                let mut out = Vec::new();
                $(
                    if let Some(v) = &self.$key {
                        out.push((stringify!($key), v.clone()));
                    }
                )*
                out
            }
        }
    };
}

config_keys!(
    game,
    transform,
    eta,
    eta_decay_target,
    eta_half_life,
    regularizer,
    dt,
    steps,
    mode,
    integrator,
    anchor_every,
    anchors,
    interpolation,
    denominator,
    early_exit,
    stride,
    anchor,
    reference,
    out,
    seed,
    snapshot_every,
);

/// Raw key/value pairs, sorted by key.
pub type RawConfig = BTreeMap<String, String>;

/// Parses config text: one `key=value` per line, `#` comments, blank lines ignored.
pub fn parse_config_text(text: &str) -> Result<RawConfig, ConfigError> {
    let mut raw = RawConfig::new();
    for (n, line) in text.lines().enumerate() {
        let body = line.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let (key, value) = body
            .split_once('=')
            .ok_or_else(|| ConfigError::new(format!("line {}", n + 1), format!("expected key=value, got '{body}'")))?;
        let key = key.trim();
        check_key(key)?;
        if raw.insert(key.to_string(), value.trim().to_string()).is_some() {
            return Err(ConfigError::new(key, "given more than once"));
        }
    }
    Ok(raw)
}

pub fn read_config_file(path: &Path) -> Result<RawConfig, ConfigError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ConfigError::new("config", format!("cannot read {}: {e}", path.display())))?;
    parse_config_text(&text)
}

/// Applies overrides on top of `raw`; later pairs win.
pub fn merge<I, K>(mut raw: RawConfig, overrides: I) -> Result<RawConfig, ConfigError>
where
    I: IntoIterator<Item = (K, String)>,
    K: AsRef<str>,
{
    for (k, v) in overrides {
        check_key(k.as_ref())?;
        raw.insert(k.as_ref().to_string(), v);
    }
    Ok(raw)
}

fn check_key(key: &str) -> Result<(), ConfigError> {
    if KEYS.contains(&key) {
        Ok(())
    } else {
        Err(ConfigError::new(key, "unknown key"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum GameSelector {
    Kuhn,
    Leduc,
    Matrix(String),
    Polymatrix(String),
}

impl FromStr for GameSelector {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.split_once(':') {
            None if s == "kuhn" => Ok(GameSelector::Kuhn),
            None if s == "leduc" => Ok(GameSelector::Leduc),
            Some(("matrix", p)) if !p.is_empty() => Ok(GameSelector::Matrix(p.to_string())),
            Some(("polymatrix", p)) if !p.is_empty() => Ok(GameSelector::Polymatrix(p.to_string())),
            _ => Err(format!(
                "expected kuhn, leduc, matrix:<path> or polymatrix:<path>, got '{s}'"
            )),
        }
    }
}

/// Anchoring periods: `anchors` periods of `every` steps each.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnchorPlan {
    pub every: usize,
    pub anchors: usize,
    pub interpolation: Interpolation,
    pub early_exit: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub game: GameSelector,
    pub transform: TransformVariant,
    pub eta: f64,
    /// `(target, half_life)` of the exponential decay from `eta`.
    pub eta_decay: Option<(f64, f64)>,
    pub regularizer: Regularizer,
    pub dt: f64,
    pub steps: usize,
    pub mode: ScoreMode,
    pub integrator: Integrator,
    pub anchoring: Option<AnchorPlan>,
    pub denominator: DenominatorMode,
    pub stride: usize,
    pub anchor: Option<PathBuf>,
    pub reference: Option<PathBuf>,
    pub out: PathBuf,
    pub seed: Option<u64>,
    pub snapshot_every: Option<usize>,
    /// The merged key/value pairs this config was built from.
    pub raw: RawConfig,
}

struct Fields<'a> {
    raw: &'a RawConfig,
}

impl<'a> Fields<'a> {
    fn get(&self, key: &str) -> Option<&'a str> {
        self.raw.get(key).map(String::as_str)
    }

    fn required(&self, key: &str) -> Result<&'a str, ConfigError> {
        self.get(key).ok_or_else(|| ConfigError::new(key, "missing required key"))
    }

    fn parse<T: FromStr>(&self, key: &str, what: &str) -> Result<Option<T>, ConfigError> {
        self.get(key)
            .map(|v| {
                v.parse::<T>()
                    .map_err(|_| ConfigError::new(key, format!("expected {what}, got '{v}'")))
            })
            .transpose()
    }

    fn positive(&self, key: &str) -> Result<Option<f64>, ConfigError> {
        match self.parse::<f64>(key, "a number")? {
            Some(v) if !(v > 0.0 && v.is_finite()) => Err(ConfigError::new(key, format!("must be positive, got {v}"))),
            other => Ok(other),
        }
    }

    fn count(&self, key: &str) -> Result<Option<usize>, ConfigError> {
        match self.parse::<usize>(key, "a non-negative integer")? {
            Some(0) => Err(ConfigError::new(key, "must be at least 1")),
            other => Ok(other),
        }
    }

    fn choice<T: Copy>(&self, key: &str, options: &[(&str, T)], default: T) -> Result<T, ConfigError> {
        let Some(v) = self.get(key) else {
            return Ok(default);
        };
        options.iter().find(|(name, _)| *name == v).map(|&(_, t)| t).ok_or_else(|| {
            let names: Vec<&str> = options.iter().map(|(n, _)| *n).collect();
            ConfigError::new(key, format!("expected one of {}, got '{v}'", names.join(", ")))
        })
    }
}

impl RunConfig {
    pub fn from_raw(raw: RawConfig) -> Result<Self, ConfigError> {
        for key in raw.keys() {
            check_key(key)?;
        }
        let f = Fields { raw: &raw };
        let game = f
            .required("game")?
            .parse::<GameSelector>()
            .map_err(|m| ConfigError::new("game", m))?;
        let transform = f.choice(
            "transform",
            &[
                ("none", TransformVariant::None),
                ("monotone", TransformVariant::Monotone),
                ("zerosum", TransformVariant::ZeroSum),
            ],
            TransformVariant::None,
        )?;
        let eta = f.positive("eta")?.unwrap_or(1.0);
        let eta_decay = match (f.positive("eta_decay_target")?, f.positive("eta_half_life")?) {
            (Some(t), Some(h)) => Some((t, h)),
            (None, None) => None,
            (Some(_), None) => return Err(ConfigError::new("eta_half_life", "required with eta_decay_target")),
            (None, Some(_)) => return Err(ConfigError::new("eta_decay_target", "required with eta_half_life")),
        };
        let regularizer = f.choice(
            "regularizer",
            &[("entropy", Regularizer::Entropy), ("l2", Regularizer::L2)],
            Regularizer::Entropy,
        )?;
        let dt = f.positive("dt")?.ok_or_else(|| ConfigError::new("dt", "missing required key"))?;
        let mode = f.choice(
            "mode",
            &[("plain_y", ScoreMode::PlainY), ("bounded_w", ScoreMode::BoundedW)],
            ScoreMode::PlainY,
        )?;
        let integrator = f.choice(
            "integrator",
            &[("euler", Integrator::Euler), ("heun", Integrator::Heun), ("rk4", Integrator::Rk4)],
            Integrator::Euler,
        )?;
        let interpolation = f.choice(
            "interpolation",
            &[("hard", Interpolation::Hard), ("linear_half", Interpolation::LinearHalf)],
            Interpolation::Hard,
        )?;
        let denominator = f.choice(
            "denominator",
            &[
                ("per_infostate", DenominatorMode::PerInfostate),
                ("per_history", DenominatorMode::PerHistory),
            ],
            DenominatorMode::PerInfostate,
        )?;
        let early_exit = f.positive("early_exit")?;
        let stride = f.count("stride")?.unwrap_or(100);
        let snapshot_every = f.count("snapshot_every")?;
        let seed = f.parse::<u64>("seed", "a non-negative integer")?;
        let out = PathBuf::from(f.required("out")?);
        let anchor = f.get("anchor").map(PathBuf::from);
        let reference = f.get("reference").map(PathBuf::from);
        let steps = f.parse::<usize>("steps", "a non-negative integer")?;

        let anchoring = match (f.count("anchor_every")?, f.count("anchors")?) {
            (Some(every), Some(anchors)) => Some(AnchorPlan {
                every,
                anchors,
                interpolation,
                early_exit,
            }),
            (None, None) => None,
            (Some(_), None) => return Err(ConfigError::new("anchors", "required with anchor_every")),
            (None, Some(_)) => return Err(ConfigError::new("anchor_every", "required with anchors")),
        };

        let steps = match anchoring {
            Some(plan) => {
                let total = plan.every.checked_mul(plan.anchors).ok_or_else(|| ConfigError::new("anchors", "too many steps"))?;
                if transform != TransformVariant::Monotone {
                    return Err(ConfigError::new("transform", "anchoring needs transform=monotone"));
                }
                if steps.is_some_and(|s| s != total) {
                    return Err(ConfigError::new("steps", format!("anchoring runs anchor_every * anchors = {total} steps")));
                }
                for key in ["eta_decay_target", "anchor", "seed"] {
                    if f.get(key).is_some() {
                        return Err(ConfigError::new(key, "not supported with anchoring"));
                    }
                }
                if mode != ScoreMode::PlainY {
                    return Err(ConfigError::new("mode", "anchoring runs in plain_y mode"));
                }
                total
            }
            None => {
                for key in ["interpolation", "early_exit"] {
                    if f.get(key).is_some() {
                        return Err(ConfigError::new(key, "only used with anchor_every and anchors"));
                    }
                }
                if snapshot_every.is_some_and(|every| every % stride != 0) {
                    return Err(ConfigError::new("snapshot_every", "must be a multiple of stride"));
                }
                steps.ok_or_else(|| ConfigError::new("steps", "missing required key"))?
            }
        };
        if transform == TransformVariant::None {
            for key in ["eta_decay_target", "anchor"] {
                if f.get(key).is_some() {
                    return Err(ConfigError::new(key, "needs a transform"));
                }
            }
        }

        Ok(Self {
            game,
            transform,
            eta,
            eta_decay,
            regularizer,
            dt,
            steps,
            mode,
            integrator,
            anchoring,
            denominator,
            stride,
            anchor,
            reference,
            out,
            seed,
            snapshot_every,
            raw,
        })
    }
}
