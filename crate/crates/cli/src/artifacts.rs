//! Output layout, artifact headers, input hashing and the run manifest.

use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::error::CliError;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Where every command reads and writes, rooted at `--out`.
#[derive(Debug, Clone)]
pub struct Layout {
    pub out: PathBuf,
    manifest: Option<PathBuf>,
    dictionary: Option<PathBuf>,
}

/// Map ids carry `[`, `]` and `!`; file names get a plain form.
pub fn file_stem(map_id: &str) -> String {
    map_id.replace("[all]", "all").replace('!', "not")
}

impl Layout {
    pub fn new(cfg: &RunConfig) -> Self {
        Layout {
            out: cfg.out.clone(),
            manifest: cfg.corpus.clone(),
            dictionary: cfg.dictionary.clone(),
        }
    }

    pub fn corpus_dir(&self) -> PathBuf {
        self.out.join("corpus")
    }

    pub fn corpus_manifest(&self) -> PathBuf {
        self.manifest
            .clone()
            .unwrap_or_else(|| self.corpus_dir().join("manifest.tsv"))
    }

    pub fn dictionary(&self) -> PathBuf {
        self.dictionary.clone().unwrap_or_else(|| {
            self.corpus_manifest()
                .parent()
                .map_or_else(|| PathBuf::from("dict.txt"), |p| p.join("dict.txt"))
        })
    }

    pub fn folds(&self) -> PathBuf {
        self.out.join("folds.txt")
    }

    pub fn phoneme_models(&self, speaker: u32, fold: usize) -> PathBuf {
        self.out
            .join("phonemes")
            .join(format!("s{speaker}_f{fold}.hmm"))
    }

    pub fn phoneme_network(&self, speaker: u32, fold: usize) -> PathBuf {
        self.out
            .join("phonemes")
            .join(format!("s{speaker}_f{fold}.bigram"))
    }

    pub fn confusions(&self, speaker: u32) -> PathBuf {
        self.out.join("confusions").join(format!("s{speaker}.txt"))
    }

    pub fn map(&self, map_id: &str) -> PathBuf {
        self.out
            .join("maps")
            .join(format!("{}.map", file_stem(map_id)))
    }

    fn viseme_base(&self, map_id: &str, speaker: u32, fold: usize) -> PathBuf {
        self.out
            .join("visemes")
            .join(file_stem(map_id))
            .join(format!("s{speaker}_f{fold}"))
    }

    pub fn viseme_models(&self, map_id: &str, speaker: u32, fold: usize) -> PathBuf {
        self.viseme_base(map_id, speaker, fold)
            .with_extension("hmm")
    }

    pub fn word_network(&self, map_id: &str, speaker: u32, fold: usize) -> PathBuf {
        self.viseme_base(map_id, speaker, fold)
            .with_extension("bigram")
    }

    /// Training utterance ids, kept beside the models for the leakage check.
    pub fn training_ids(&self, map_id: &str, speaker: u32, fold: usize) -> PathBuf {
        self.viseme_base(map_id, speaker, fold)
            .with_extension("ids")
    }

    pub fn hypotheses(&self, label: &str) -> PathBuf {
        self.out
            .join("hyps")
            .join(format!("{}.hyp", file_stem(label)))
    }

    pub fn grid_manifest(&self) -> PathBuf {
        self.out.join("grid.csv")
    }

    pub fn results(&self) -> PathBuf {
        self.out.join("results.csv")
    }

    pub fn summary(&self) -> PathBuf {
        self.out.join("summary.csv")
    }

    pub fn failures(&self) -> PathBuf {
        self.out.join("failures.csv")
    }

    pub fn report(&self, name: &str) -> PathBuf {
        self.out.join("report").join(name)
    }

    pub fn run_manifest(&self) -> PathBuf {
        self.out.join("manifest.txt")
    }
}

/// Header lines carried by every artifact: tool version, config hash, seed.
pub fn header(cfg: &RunConfig) -> Vec<String> {
    vec![
        format!("lipmap {VERSION}"),
        format!("config {}", cfg.hash()),
        format!("seed {}", cfg.seed),
    ]
}

pub fn require(path: &Path) -> Result<(), CliError> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::Missing(path.to_path_buf()))
    }
}

pub fn read(path: &Path) -> Result<String, CliError> {
    require(path)?;
    fs::read_to_string(path)
        .map_err(|e| CliError::Runtime(format!("cannot read {}: {e}", path.display())))
}

pub fn write(path: &Path, contents: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)
            .map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", dir.display())))?;
    }
    fs::write(path, contents)
        .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))?;
    log::info!("wrote {}", path.display());
    Ok(())
}

/// Hashes the contents of `paths` in the given order. Missing files are
/// reported as missing inputs.
#[derive(Default)]
pub struct InputHash {
    hasher: Sha256,
    files: usize,
}

impl InputHash {
    pub fn add(&mut self, path: &Path) -> Result<(), CliError> {
        require(path)?;
        let bytes = fs::read(path)
            .map_err(|e| CliError::Runtime(format!("cannot read {}: {e}", path.display())))?;
        self.hasher.update((bytes.len() as u64).to_le_bytes());
        self.hasher.update(&bytes);
        self.files += 1;
        Ok(())
    }

    pub fn finish(self) -> String {
        if self.files == 0 {
            return "-".to_string();
        }
        hex::encode(self.hasher.finalize())[..16].to_string()
    }
}

/// Records one line per command in `manifest.txt`, replacing that command's
/// previous line so identical reruns leave the file unchanged.
pub fn record(
    layout: &Layout,
    cfg: &RunConfig,
    command: &str,
    inputs: String,
) -> Result<(), CliError> {
    let path = layout.run_manifest();
    let overrides = cfg.overrides();
    let line = format!(
        "{command}\tlipmap {VERSION}\tconfig {}\tinputs {inputs}\tseed {}\toverrides {}",
        cfg.hash(),
        cfg.seed,
        if overrides.is_empty() {
            "-".to_string()
        } else {
            overrides.join(";")
        }
    );
    let existing = if path.is_file() {
        read(&path)?
    } else {
        String::new()
    };
    let mut lines: Vec<String> = existing
        .lines()
        .filter(|l| !l.is_empty() && l.split('\t').next() != Some(command))
        .map(str::to_string)
        .collect();
    lines.push(line);
    write(&path, &(lines.join("\n") + "\n"))
}
