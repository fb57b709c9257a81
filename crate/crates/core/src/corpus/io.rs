use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array2;

use super::{write_dictionary, Corpus, PronunciationDict, Utterance};
use crate::{Error, Result};

/// Feature file: a `T d` line, then `T` rows of `d` whitespace-separated values.
pub fn write_features(features: &Array2<f64>) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{} {}", features.nrows(), features.ncols());
    for row in features.rows() {
        let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        let _ = writeln!(out, "{}", line.join(" "));
    }
    out
}

pub fn read_features(text: &str, source_name: &str) -> Result<Array2<f64>> {
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::parse(source_name, 1, "missing `T d` header"))?;
    let dims: Vec<usize> = header
        .split_whitespace()
        .map(str::parse)
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::parse(source_name, 1, "header must be `T d`"))?;
    let [t, d] = dims[..] else {
        return Err(Error::parse(source_name, 1, "header must be `T d`"));
    };
    if t == 0 || d == 0 {
        return Err(Error::parse(source_name, 1, "T and d must be positive"));
    }
    let mut data = Vec::with_capacity(t * d);
    let mut rows = 0;
    for (i, line) in lines {
        let before = data.len();
        for tok in line.split_whitespace() {
            let v: f64 = tok
                .parse()
                .map_err(|_| Error::parse(source_name, i + 1, format!("bad value `{tok}`")))?;
            data.push(v);
        }
        if data.len() - before != d {
            return Err(Error::parse(
                source_name,
                i + 1,
                format!("expected {d} values, found {}", data.len() - before),
            ));
        }
        rows += 1;
    }
    if rows != t {
        return Err(Error::parse(
            source_name,
            0,
            format!("header declares {t} frames, file has {rows}"),
        ));
    }
    Ok(Array2::from_shape_vec((t, d), data).expect("shape checked above"))
}

/// Reads a manifest of `speaker_id<TAB>utt_id<TAB>feature_path<TAB>words...`.
/// Relative feature paths resolve against the manifest's directory.
pub fn load_corpus(manifest: impl AsRef<Path>, dict: PronunciationDict) -> Result<Corpus> {
    let manifest = manifest.as_ref();
    let name = manifest.display().to_string();
    let text = fs::read_to_string(manifest).map_err(|e| Error::io(manifest, e))?;
    let base = manifest.parent().map(Path::to_path_buf).unwrap_or_default();
    let mut utts = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.splitn(4, '\t').collect();
        if fields.len() < 3 {
            return Err(Error::parse(
                &name,
                i + 1,
                "expected speaker<TAB>utt<TAB>features<TAB>words",
            ));
        }
        let speaker: u32 = fields[0]
            .trim()
            .parse()
            .map_err(|_| Error::parse(&name, i + 1, "bad speaker id"))?;
        let feat_path: PathBuf = base.join(fields[2]);
        let feat_text = fs::read_to_string(&feat_path).map_err(|e| Error::io(&feat_path, e))?;
        let features = read_features(&feat_text, &feat_path.display().to_string())?;
        let words = fields
            .get(3)
            .map(|w| w.split_whitespace().map(String::from).collect())
            .unwrap_or_default();
        let utt = Utterance::new(speaker, fields[1], words, features, &dict)
            .map_err(|e| Error::parse(&name, i + 1, e.to_string()))?;
        utts.push(utt);
    }
    Corpus::new(dict, utts)
}

/// Writes `dict.txt`, `manifest.tsv` and one feature file per utterance
/// under `features/`. Returns the manifest path.
pub fn write_corpus(corpus: &Corpus, dir: impl AsRef<Path>, header: &[String]) -> Result<PathBuf> {
    let dir = dir.as_ref();
    let feat_dir = dir.join("features");
    fs::create_dir_all(&feat_dir).map_err(|e| Error::io(&feat_dir, e))?;
    let dict_path = dir.join("dict.txt");
    fs::write(&dict_path, write_dictionary(corpus.dict(), header))
        .map_err(|e| Error::io(&dict_path, e))?;

    let mut manifest = String::new();
    for h in header {
        let _ = writeln!(manifest, "# {h}");
    }
    for u in corpus.utterances() {
        let rel = format!("features/{}.feat", u.id);
        let path = dir.join(&rel);
        fs::write(&path, write_features(&u.features)).map_err(|e| Error::io(&path, e))?;
        let _ = writeln!(
            manifest,
            "{}\t{}\t{}\t{}",
            u.speaker,
            u.id,
            rel,
            u.words.join(" ")
        );
    }
    let manifest_path = dir.join("manifest.tsv");
    fs::write(&manifest_path, manifest).map_err(|e| Error::io(&manifest_path, e))?;
    Ok(manifest_path)
}
