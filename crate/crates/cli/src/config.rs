//! Run configuration: defaults, a flat `key = value` file, then flag overrides.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use lipmap_core::decoder::DecodeConfig;
use lipmap_core::harness::ExperimentConfig;
use lipmap_core::hmm::{FlatStartConfig, TrainSchedule, MAX_MIXTURES};
use sha2::{Digest, Sha256};

use crate::error::CliError;

/// A phoneme of one speaker moved to within `distance` of another.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfusablePair {
    pub speaker: u32,
    pub keep: String,
    pub moved: String,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub folds: usize,
    pub states: usize,
    pub max_mix: usize,
    pub iterations: usize,
    pub align_at: usize,
    pub realign_every: bool,
    pub variance_floor: f64,
    pub threshold: u64,
    pub lm_scale: f64,
    pub word_insertion_penalty: f64,
    pub beam: Option<f64>,
    pub free_loop: bool,
    pub jobs: usize,
    pub speakers: u32,
    pub sentences: usize,
    pub separation: f64,
    pub confusable: Vec<ConfusablePair>,
    pub corpus: Option<PathBuf>,
    pub dictionary: Option<PathBuf>,
    pub out: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 2024,
            folds: 10,
            states: 3,
            max_mix: MAX_MIXTURES,
            iterations: 11,
            align_at: 7,
            realign_every: false,
            variance_floor: 0.01,
            threshold: 1,
            lm_scale: 1.0,
            word_insertion_penalty: 0.0,
            beam: None,
            free_loop: false,
            jobs: 0,
            speakers: 3,
            sentences: 60,
            separation: 6.0,
            confusable: Vec::new(),
            corpus: None,
            dictionary: None,
            out: PathBuf::from("lipmap-out"),
        }
    }
}

// Keys that change results. Paths and thread count are left out of the hash
// so the same experiment hashes the same wherever it runs.
const HASHED: &[&str] = &[
    "seed",
    "folds",
    "states",
    "max_mix",
    "iterations",
    "align_at",
    "realign_every",
    "variance_floor",
    "threshold",
    "lm_scale",
    "word_insertion_penalty",
    "beam",
    "free_loop",
    "speakers",
    "sentences",
    "separation",
    "confusable",
];
#[cfg(test)]
const UNHASHED: &[&str] = &["jobs", "corpus", "dictionary", "out"];

fn bad(field: &str, msg: impl Into<String>) -> CliError {
    CliError::Config {
        field: field.to_string(),
        msg: msg.into(),
    }
}

fn num<T: std::str::FromStr>(field: &str, value: &str) -> Result<T, CliError> {
    value
        .trim()
        .parse()
        .map_err(|_| bad(field, format!("cannot parse `{value}`")))
}

fn flag(field: &str, value: &str) -> Result<bool, CliError> {
    match value.trim() {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        other => Err(bad(field, format!("expected true or false, got `{other}`"))),
    }
}

fn parse_pairs(value: &str) -> Result<Vec<ConfusablePair>, CliError> {
    let mut out = Vec::new();
    for item in value.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let f: Vec<&str> = item.split(':').collect();
        let [speaker, keep, moved, distance] = f[..] else {
            return Err(bad(
                "confusable",
                format!("`{item}` is not speaker:keep:moved:distance"),
            ));
        };
        out.push(ConfusablePair {
            speaker: num("confusable", speaker)?,
            keep: keep.to_string(),
            moved: moved.to_string(),
            distance: num("confusable", distance)?,
        });
    }
    Ok(out)
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        let v = value.trim();
        match key {
            "seed" => self.seed = num(key, v)?,
            "folds" => self.folds = num(key, v)?,
            "states" => self.states = num(key, v)?,
            "max_mix" => self.max_mix = num(key, v)?,
            "iterations" => self.iterations = num(key, v)?,
            "align_at" => self.align_at = num(key, v)?,
            "realign_every" => self.realign_every = flag(key, v)?,
            "variance_floor" => self.variance_floor = num(key, v)?,
            "threshold" => self.threshold = num(key, v)?,
            "lm_scale" => self.lm_scale = num(key, v)?,
            "word_insertion_penalty" => self.word_insertion_penalty = num(key, v)?,
            "beam" => {
                self.beam = if v == "none" {
                    None
                } else {
                    Some(num(key, v)?)
                }
            }
            "free_loop" => self.free_loop = flag(key, v)?,
            "jobs" => self.jobs = num(key, v)?,
            "speakers" => self.speakers = num(key, v)?,
            "sentences" => self.sentences = num(key, v)?,
            "separation" => self.separation = num(key, v)?,
            "confusable" => self.confusable = parse_pairs(v)?,
            "corpus" => self.corpus = Some(PathBuf::from(v)),
            "dictionary" => self.dictionary = Some(PathBuf::from(v)),
            "out" => self.out = PathBuf::from(v),
            other => return Err(bad(other, "unknown configuration key")),
        }
        Ok(())
    }

    /// Applies a config file. Relative paths inside it resolve against the
    /// file's directory.
    pub fn apply_file(&mut self, path: &Path) -> Result<(), CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => CliError::Missing(path.to_path_buf()),
            _ => bad("config", format!("cannot read {}: {e}", path.display())),
        })?;
        let base = path.parent().unwrap_or(Path::new(""));
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                bad(
                    "config",
                    format!("{}:{}: expected key = value", path.display(), i + 1),
                )
            })?;
            let key = key.trim();
            self.set(key, value)?;
            match key {
                "corpus" => self.corpus = self.corpus.take().map(|p| base.join(p)),
                "dictionary" => self.dictionary = self.dictionary.take().map(|p| base.join(p)),
                "out" => self.out = base.join(&self.out),
                _ => {}
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.folds < 2 {
            return Err(bad("folds", "need at least two folds"));
        }
        if self.states == 0 {
            return Err(bad("states", "need at least one emitting state"));
        }
        if self.max_mix == 0 || self.max_mix > MAX_MIXTURES {
            return Err(bad("max_mix", format!("must lie in 1..={MAX_MIXTURES}")));
        }
        if self.iterations == 0 {
            return Err(bad("iterations", "need at least one iteration"));
        }
        if self.align_at > self.iterations {
            return Err(bad(
                "align_at",
                "realignment point lies after the last iteration",
            ));
        }
        if !(self.variance_floor > 0.0 && self.variance_floor < 1.0) {
            return Err(bad("variance_floor", "must lie strictly between 0 and 1"));
        }
        if self.threshold == 0 {
            return Err(bad("threshold", "must be at least 1"));
        }
        if !(self.separation.is_finite() && self.separation >= 0.0) {
            return Err(bad("separation", "must be finite and non-negative"));
        }
        if self.speakers == 0 {
            return Err(bad("speakers", "need at least one speaker"));
        }
        if self.sentences == 0 {
            return Err(bad("sentences", "need at least one sentence per speaker"));
        }
        if let Some(p) = self
            .confusable
            .iter()
            .find(|p| p.speaker == 0 || p.speaker > self.speakers)
        {
            return Err(bad(
                "confusable",
                format!("speaker {} is out of range", p.speaker),
            ));
        }
        let decode = self.decode();
        decode.validate().map_err(|e| {
            let field = match decode.beam {
                Some(b) if b.is_nan() || b <= 0.0 => "beam",
                _ if !(self.lm_scale.is_finite() && self.lm_scale >= 0.0) => "lm_scale",
                _ => "word_insertion_penalty",
            };
            bad(field, e.to_string())
        })
    }

    pub fn decode(&self) -> DecodeConfig {
        DecodeConfig {
            lm_scale: self.lm_scale,
            word_insertion_penalty: self.word_insertion_penalty,
            beam: self.beam,
            boundary: None,
        }
    }

    /// Mixture growth capped at `max_mix`.
    pub fn schedule(&self) -> TrainSchedule {
        let base = TrainSchedule::default();
        let mut steps: Vec<(usize, usize)> = Vec::new();
        for (after, target) in base.mixture_steps {
            let target = target.min(self.max_mix);
            if target > steps.last().map_or(1, |s| s.1) && after < self.iterations {
                steps.push((after, target));
            }
        }
        TrainSchedule {
            iterations: self.iterations,
            align_after: (self.align_at > 0).then_some(self.align_at),
            realign_every: self.realign_every,
            mixture_steps: steps,
        }
    }

    pub fn experiment(&self) -> ExperimentConfig {
        ExperimentConfig {
            flat_start: FlatStartConfig {
                n_states: self.states,
                floor_fraction: self.variance_floor,
                ..FlatStartConfig::default()
            },
            schedule: self.schedule(),
            decode: self.decode(),
            threshold: self.threshold,
            free_loop: self.free_loop,
            jobs: self.jobs,
        }
    }

    fn values(&self) -> BTreeMap<&'static str, String> {
        let opt = |p: &Option<PathBuf>| {
            p.as_ref()
                .map_or("none".to_string(), |p| p.display().to_string())
        };
        let pairs: Vec<String> = self
            .confusable
            .iter()
            .map(|p| format!("{}:{}:{}:{}", p.speaker, p.keep, p.moved, p.distance))
            .collect();
        BTreeMap::from([
            ("seed", self.seed.to_string()),
            ("folds", self.folds.to_string()),
            ("states", self.states.to_string()),
            ("max_mix", self.max_mix.to_string()),
            ("iterations", self.iterations.to_string()),
            ("align_at", self.align_at.to_string()),
            ("realign_every", self.realign_every.to_string()),
            ("variance_floor", self.variance_floor.to_string()),
            ("threshold", self.threshold.to_string()),
            ("lm_scale", self.lm_scale.to_string()),
            (
                "word_insertion_penalty",
                self.word_insertion_penalty.to_string(),
            ),
            (
                "beam",
                self.beam.map_or("none".to_string(), |b| b.to_string()),
            ),
            ("free_loop", self.free_loop.to_string()),
            ("jobs", self.jobs.to_string()),
            ("speakers", self.speakers.to_string()),
            ("sentences", self.sentences.to_string()),
            ("separation", self.separation.to_string()),
            ("confusable", pairs.join(",")),
            ("corpus", opt(&self.corpus)),
            ("dictionary", opt(&self.dictionary)),
            ("out", self.out.display().to_string()),
        ])
    }

    /// The result-affecting settings as sorted `key = value` lines.
    pub fn canonical(&self) -> String {
        let values = self.values();
        let mut out = String::new();
        for key in HASHED {
            let _ = writeln!(out, "{key} = {}", values[key]);
        }
        out
    }

    /// First 16 hex digits of the SHA-256 of [`RunConfig::canonical`].
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.canonical().as_bytes());
        hex::encode(digest)[..16].to_string()
    }

    /// `key=value` for every setting that differs from the default.
    pub fn overrides(&self) -> Vec<String> {
        let defaults = RunConfig::default().values();
        self.values()
            .into_iter()
            .filter(|(k, v)| defaults.get(k) != Some(v))
            .map(|(k, v)| format!("{k}={v}"))
            .collect()
    }
}
