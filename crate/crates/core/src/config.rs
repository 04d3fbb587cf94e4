//! Flat `section.key = value` run configuration.
//!
//! Lines starting with `#` and blank lines are ignored. Every key has a
//! default; unknown keys are rejected. Environment variables of the form
//! `MRF_SECTION__KEY` (upper case) override file values.

use std::fmt::Write as _;
use std::path::Path;

use crate::acquisition::{
    AugmentParams, BrainPhantomParams, UndersamplingScheme, GOLDEN_ANGLE_DEG,
};
use crate::error::{Error, Result};
use crate::fingerprint::{ParameterGrid, SequenceSchedule};
use crate::matching::MatchOptions;
use crate::model::{ModelConfig, TrainConfig};
use crate::nn::AdamConfig;

trait ConfigValue: Sized {
    fn render(&self) -> String;
    fn parse(s: &str) -> std::result::Result<Self, String>;
}

impl ConfigValue for f64 {
    fn render(&self) -> String {
        // Display is the shortest exactly round-tripping form
        self.to_string()
    }
    fn parse(s: &str) -> std::result::Result<Self, String> {
        s.parse()
            .map_err(|_| format!("expected a number, found `{s}`"))
    }
}

impl ConfigValue for usize {
    fn render(&self) -> String {
        self.to_string()
    }
    fn parse(s: &str) -> std::result::Result<Self, String> {
        s.parse()
            .map_err(|_| format!("expected a non-negative integer, found `{s}`"))
    }
}

impl ConfigValue for bool {
    fn render(&self) -> String {
        self.to_string()
    }
    fn parse(s: &str) -> std::result::Result<Self, String> {
        s.parse()
            .map_err(|_| format!("expected true or false, found `{s}`"))
    }
}

impl ConfigValue for String {
    fn render(&self) -> String {
        self.clone()
    }
    fn parse(s: &str) -> std::result::Result<Self, String> {
        Ok(s.to_string())
    }
}

impl ConfigValue for Vec<usize> {
    fn render(&self) -> String {
        self.iter()
            .map(|v| v.to_string())
            .collect::<Vec<_>>()
            .join(",")
    }
    fn parse(s: &str) -> std::result::Result<Self, String> {
        s.split(',')
            .map(|p| {
                p.trim()
                    .parse()
                    .map_err(|_| format!("expected comma-separated integers, found `{s}`"))
            })
            .collect()
    }
}

impl ConfigValue for [usize; 2] {
    fn render(&self) -> String {
        format!("{},{}", self[0], self[1])
    }
    fn parse(s: &str) -> std::result::Result<Self, String> {
        let v = Vec::<usize>::parse(s)?;
        <[usize; 2]>::try_from(v).map_err(|_| format!("expected exactly two integers, found `{s}`"))
    }
}

macro_rules! section {
    ($(#[$meta:meta])* $name:ident { $($(#[$fmeta:meta])* $field:ident : $ty:ty = $default:expr),* $(,)? }) => {
        $(#[$meta])*
        #[derive(Clone, Debug, PartialEq)]
        pub struct $name { $($(#[$fmeta])* pub $field: $ty),* }

        impl Default for $name {
            fn default() -> Self {
                Self { $($field: $default),* }
            }
        }

        impl Section for $name {
            fn entries(&self) -> Vec<(&'static str, String)> {
                vec![$((stringify!($field), ConfigValue::render(&self.$field))),*]
            }
            fn set(&mut self, key: &str, value: &str) -> Option<std::result::Result<(), String>> {
                match key {
                    $(stringify!($field) => Some(ConfigValue::parse(value).map(|v| self.$field = v)),)*
                    _ => None,
                }
            }
        }
    };
}

trait Section {
    fn entries(&self) -> Vec<(&'static str, String)>;
    /// `None` for an unknown key.
    fn set(&mut self, key: &str, value: &str) -> Option<std::result::Result<(), String>>;
}

impl Section for ModelConfig {
    fn entries(&self) -> Vec<(&'static str, String)> {
        vec![
            ("input_channels", self.input_channels.render()),
            ("block_channels", self.block_channels.render()),
            ("head_channels", self.head_channels.render()),
            ("dropout", self.dropout.render()),
            ("t1_max_ms", self.t1_max_ms.render()),
            ("t2_max_ms", self.t2_max_ms.render()),
            ("pd_max", self.pd_max.render()),
        ]
    }
    fn set(&mut self, key: &str, value: &str) -> Option<std::result::Result<(), String>> {
        Some(match key {
            "input_channels" => ConfigValue::parse(value).map(|v| self.input_channels = v),
            "block_channels" => ConfigValue::parse(value).map(|v| self.block_channels = v),
            "head_channels" => ConfigValue::parse(value).map(|v| self.head_channels = v),
            "dropout" => ConfigValue::parse(value).map(|v| self.dropout = v),
            "t1_max_ms" => ConfigValue::parse(value).map(|v| self.t1_max_ms = v),
            "t2_max_ms" => ConfigValue::parse(value).map(|v| self.t2_max_ms = v),
            "pd_max" => ConfigValue::parse(value).map(|v| self.pd_max = v),
            _ => return None,
        })
    }
}

section!(
    /// Sinusoidal inversion-prepared FISP train.
    ScheduleSection {
        d0: usize = 200,
        flip_max_deg: f64 = 70.0,
        tr_ms: f64 = 12.0,
        te_ms: f64 = 2.0,
        inversion_delay_ms: f64 = 18.0,
    }
);

section!(GridSection {
    t1_min_ms: f64 = 100.0,
    t1_max_ms: f64 = 4000.0,
    t1_step_ms: f64 = 20.0,
    t2_min_ms: f64 = 20.0,
    t2_max_ms: f64 = 600.0,
    t2_step_ms: f64 = 4.0,
});

section!(SubspaceSection { d1: usize = 10 });

section!(PhantomSection {
    height: usize = 64,
    width: usize = 64,
    pd_min: f64 = 0.5,
    pd_max: f64 = 1.5,
    max_lesions: usize = 4,
    /// Snap tissue relaxation times onto the dictionary grid.
    snap_to_grid: bool = true,
});

section!(UndersamplingSection {
    /// `spiral` or `full`.
    scheme: String = "spiral".to_string(),
    fraction: f64 = 0.0625,
    noise_sigma: f64 = 0.005,
    rotation_deg: f64 = GOLDEN_ANGLE_DEG,
});

section!(TrainingSection {
    epochs: usize = 120,
    batch_size: usize = 4,
    learning_rate: f64 = 3e-3,
    beta1: f64 = 0.9,
    beta2: f64 = 0.999,
    epsilon: f64 = 1e-8,
    augment: bool = true,
    max_shift: usize = 4,
    max_rotation_deg: f64 = 15.0,
    scale_min: f64 = 0.9,
    scale_max: f64 = 1.1,
    augment_noise_sigma: f64 = 0.002,
    cosine_decay: bool = true,
});

section!(EvaluationSection {
    /// Relative coefficient-norm threshold for masking reconstructed voxels.
    mask_threshold: f64 = crate::model::DEFAULT_MASK_THRESHOLD,
});

section!(MatchingSection {
    /// Match in the subspace instead of the full time domain.
    compressed: bool = false,
    query_block: usize = 256,
    atom_block: usize = 2048,
});

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunConfig {
    pub schedule: ScheduleSection,
    pub grid: GridSection,
    pub subspace: SubspaceSection,
    pub phantom: PhantomSection,
    pub undersampling: UndersamplingSection,
    pub model: ModelConfig,
    pub training: TrainingSection,
    pub evaluation: EvaluationSection,
    pub matching: MatchingSection,
}

fn config_err(key: &str, line: usize, reason: impl Into<String>) -> Error {
    Error::Config {
        key: key.to_string(),
        line,
        reason: reason.into(),
    }
}

/// `(key, value, line)` for every assignment in `text`.
fn parse_lines(text: &str) -> Result<Vec<(String, String, usize)>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(config_err(line, i + 1, "expected `section.key = value`"));
        };
        out.push((k.trim().to_string(), v.trim().to_string(), i + 1));
    }
    Ok(out)
}

fn write_section(out: &mut String, name: &str, section: &dyn Section) {
    let _ = writeln!(out, "# {name}");
    for (k, v) in section.entries() {
        let _ = writeln!(out, "{name}.{k} = {v}");
    }
}

/// The model section alone, in config syntax.
pub fn model_section_text(model: &ModelConfig) -> String {
    let mut s = String::new();
    write_section(&mut s, "model", model);
    s
}

/// Parses text containing only `model.*` keys on top of the defaults.
pub fn parse_model_section(text: &str) -> Result<ModelConfig> {
    let mut m = ModelConfig::default();
    for (key, value, line) in parse_lines(text)? {
        let field = key
            .strip_prefix("model.")
            .ok_or_else(|| config_err(&key, line, "only model keys are allowed here"))?;
        match m.set(field, &value) {
            None => return Err(config_err(&key, line, "unknown key")),
            Some(Err(reason)) => return Err(config_err(&key, line, reason)),
            Some(Ok(())) => {}
        }
    }
    m.validate()
        .map_err(|e| config_err("model", 0, e.to_string()))?;
    Ok(m)
}

impl RunConfig {
    fn sections_mut(&mut self) -> [(&'static str, &mut dyn Section); 9] {
        [
            ("schedule", &mut self.schedule),
            ("grid", &mut self.grid),
            ("subspace", &mut self.subspace),
            ("phantom", &mut self.phantom),
            ("undersampling", &mut self.undersampling),
            ("model", &mut self.model),
            ("training", &mut self.training),
            ("evaluation", &mut self.evaluation),
            ("matching", &mut self.matching),
        ]
    }

    fn sections(&self) -> [(&'static str, &dyn Section); 9] {
        [
            ("schedule", &self.schedule),
            ("grid", &self.grid),
            ("subspace", &self.subspace),
            ("phantom", &self.phantom),
            ("undersampling", &self.undersampling),
            ("model", &self.model),
            ("training", &self.training),
            ("evaluation", &self.evaluation),
            ("matching", &self.matching),
        ]
    }

    /// Every dotted key, in serialization order.
    pub fn keys(&self) -> Vec<String> {
        self.sections()
            .iter()
            .flat_map(|(s, sec)| {
                sec.entries()
                    .into_iter()
                    .map(move |(k, _)| format!("{s}.{k}"))
            })
            .collect()
    }

    /// Sets one dotted key; `line` is reported in errors.
    pub fn set(&mut self, key: &str, value: &str, line: usize) -> Result<()> {
        let (section, field) = key
            .split_once('.')
            .ok_or_else(|| config_err(key, line, "keys have the form section.key"))?;
        for (name, sec) in self.sections_mut() {
            if name == section {
                return match sec.set(field, value) {
                    None => Err(config_err(key, line, "unknown key")),
                    Some(Err(reason)) => Err(config_err(key, line, reason)),
                    Some(Ok(())) => Ok(()),
                };
            }
        }
        Err(config_err(key, line, "unknown section"))
    }

    /// Parses text over the defaults without validating.
    pub fn parse_unvalidated(text: &str) -> Result<Self> {
        let mut c = Self::default();
        for (key, value, line) in parse_lines(text)? {
            c.set(&key, &value, line)?;
        }
        Ok(c)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let c = Self::parse_unvalidated(text)?;
        c.validate()?;
        Ok(c)
    }

    /// Applies `MRF_SECTION__KEY` overrides from `vars`.
    pub fn apply_env<I, K, V>(&mut self, vars: I) -> Result<()>
    where
        I: IntoIterator<Item = (K, V)>,
        K: AsRef<str>,
        V: AsRef<str>,
    {
        let keys = self.keys();
        for (k, v) in vars {
            let Some(rest) = k.as_ref().strip_prefix("MRF_") else {
                continue;
            };
            let Some((s, f)) = rest.split_once("__") else {
                continue;
            };
            let dotted = format!("{}.{}", s.to_lowercase(), f.to_lowercase());
            if !keys.contains(&dotted) {
                return Err(config_err(
                    k.as_ref(),
                    0,
                    "environment override names an unknown key",
                ));
            }
            self.set(&dotted, v.as_ref().trim(), 0)?;
        }
        Ok(())
    }

    /// Reads `path` (if given) over the defaults, applies process
    /// environment overrides and validates.
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let mut c = match path {
            Some(p) => {
                let bytes = std::fs::read(p)?;
                let text = String::from_utf8(bytes)
                    .map_err(|_| config_err(&p.display().to_string(), 0, "not UTF-8"))?;
                Self::parse_unvalidated(&text)?
            }
            None => Self::default(),
        };
        c.apply_env(std::env::vars())?;
        c.validate()?;
        Ok(c)
    }

    pub fn serialize(&self) -> String {
        let mut out = String::new();
        for (i, (name, sec)) in self.sections().into_iter().enumerate() {
            if i > 0 {
                out.push('\n');
            }
            write_section(&mut out, name, sec);
        }
        out
    }

    /// Cross-field constraints.
    pub fn validate(&self) -> Result<()> {
        let fail = |key: &str, reason: String| Err(config_err(key, 0, reason));
        let s = &self.schedule;
        if s.d0 == 0 {
            return fail("schedule.d0", "must be positive".into());
        }
        self.schedule()
            .map_err(|e| config_err("schedule", 0, e.to_string()))?;
        self.grid()
            .map_err(|e| config_err("grid", 0, e.to_string()))?;
        let d1 = self.subspace.d1;
        if d1 == 0 || d1 > s.d0 {
            return fail(
                "subspace.d1",
                format!("d1 = {d1} must lie in [1, d0 = {}]", s.d0),
            );
        }
        if self.model.input_channels != d1 {
            return fail(
                "model.input_channels",
                format!(
                    "{} differs from subspace.d1 = {d1}",
                    self.model.input_channels
                ),
            );
        }
        self.model
            .validate()
            .map_err(|e| config_err("model", 0, e.to_string()))?;
        let p = &self.phantom;
        if p.height == 0 || p.width == 0 {
            return fail(
                "phantom.height",
                "phantom dimensions must be positive".into(),
            );
        }
        if !(p.pd_min >= 0.0 && p.pd_min <= p.pd_max) {
            return fail(
                "phantom.pd_min",
                format!(
                    "need 0 <= pd_min <= pd_max, got {} and {}",
                    p.pd_min, p.pd_max
                ),
            );
        }
        let u = &self.undersampling;
        if u.scheme != "spiral" && u.scheme != "full" {
            return fail(
                "undersampling.scheme",
                format!("`{}` is not spiral or full", u.scheme),
            );
        }
        if !(u.fraction > 0.0 && u.fraction <= 1.0) {
            return fail(
                "undersampling.fraction",
                format!("{} outside (0, 1]", u.fraction),
            );
        }
        if !(u.noise_sigma >= 0.0) {
            return fail("undersampling.noise_sigma", "must be >= 0".into());
        }
        let t = &self.training;
        if t.batch_size == 0 {
            return fail("training.batch_size", "must be positive".into());
        }
        if !(t.learning_rate >= 0.0) {
            return fail("training.learning_rate", "must be >= 0".into());
        }
        if !((0.0..1.0).contains(&t.beta1) && (0.0..1.0).contains(&t.beta2)) {
            return fail("training.beta1", "betas must lie in [0, 1)".into());
        }
        if !(t.epsilon > 0.0) {
            return fail("training.epsilon", "must be positive".into());
        }
        if !(t.scale_min > 0.0 && t.scale_min <= t.scale_max) {
            return fail(
                "training.scale_min",
                "need 0 < scale_min <= scale_max".into(),
            );
        }
        if !(t.augment_noise_sigma >= 0.0 && t.max_rotation_deg >= 0.0) {
            return fail(
                "training.augment_noise_sigma",
                "augmentation ranges must be >= 0".into(),
            );
        }
        if !(self.evaluation.mask_threshold >= 0.0) {
            return fail("evaluation.mask_threshold", "must be >= 0".into());
        }
        if self.matching.query_block == 0 || self.matching.atom_block == 0 {
            return fail(
                "matching.query_block",
                "block sizes must be positive".into(),
            );
        }
        Ok(())
    }

    pub fn schedule(&self) -> Result<SequenceSchedule> {
        let s = &self.schedule;
        SequenceSchedule::sinusoidal(s.d0, s.flip_max_deg, s.tr_ms, s.te_ms, s.inversion_delay_ms)
    }

    pub fn grid(&self) -> Result<ParameterGrid> {
        let g = &self.grid;
        ParameterGrid::from_ranges(
            (g.t1_min_ms, g.t1_max_ms, g.t1_step_ms),
            (g.t2_min_ms, g.t2_max_ms, g.t2_step_ms),
        )
    }

    pub fn phantom_params(&self) -> Result<BrainPhantomParams> {
        let p = &self.phantom;
        let g = &self.grid;
        Ok(BrainPhantomParams {
            height: p.height,
            width: p.width,
            t1_range_ms: (g.t1_min_ms, g.t1_max_ms),
            t2_range_ms: (g.t2_min_ms, g.t2_max_ms),
            pd_range: (p.pd_min, p.pd_max),
            max_lesions: p.max_lesions,
            snap_grid: if p.snap_to_grid {
                Some(self.grid()?)
            } else {
                None
            },
        })
    }

    pub fn undersampling_scheme(&self, height: usize, width: usize) -> Result<UndersamplingScheme> {
        let u = &self.undersampling;
        if u.scheme == "full" {
            UndersamplingScheme::full(height, width, self.schedule.d0)
        } else {
            UndersamplingScheme::spiral(height, width, self.schedule.d0, u.fraction, u.rotation_deg)
        }
    }

    pub fn train_config(&self, seed: u64) -> TrainConfig {
        let t = &self.training;
        TrainConfig {
            epochs: t.epochs,
            batch_size: t.batch_size,
            adam: AdamConfig {
                learning_rate: t.learning_rate,
                beta1: t.beta1,
                beta2: t.beta2,
                epsilon: t.epsilon,
            },
            augment: t.augment.then_some(AugmentParams {
                max_shift: t.max_shift,
                max_rotation_deg: t.max_rotation_deg,
                scale_range: (t.scale_min, t.scale_max),
                noise_sigma: t.augment_noise_sigma,
            }),
            cosine_decay: t.cosine_decay,
            seed,
        }
    }

    pub fn match_options(&self) -> MatchOptions {
        MatchOptions {
            query_block: self.matching.query_block,
            atom_block: self.matching.atom_block,
        }
    }
}
