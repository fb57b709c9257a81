//! The experiment grid: phoneme pass, map derivation, viseme pass and the
//! reports built from cell summaries.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fmt::Write as _;
use std::str::FromStr;

use rayon::prelude::*;

use crate::align::{align, summarize, ConfusionMatrix, EditCosts, ScoreSummary, WordScore};
use crate::corpus::{Corpus, FoldSplit, Utterance, SILENCE};
use crate::decoder::{decode_units, decode_words, DecodeConfig, Hypothesis};
use crate::hmm::{flat_start, reestimate, FlatStartConfig, HmmSet, TrainSchedule, TrainUtterance};
use crate::lm::{build_bigram, Bigram};
use crate::p2v::{
    apply_map, derive_map, map_dictionary, ms_map_id, pool_confusions, sd_map_id, si_map_id,
    MapKind, P2VMap,
};
use crate::{Error, Result};

/// Reference per-speaker differences (percentage points) between speaker-dependent
/// and different-speaker tests on continuous speech, speakers 1 to 12.
pub const RMAV_DIFFERENCES: [f64; 12] = [
    5.78, 4.74, 6.49, 5.13, 5.57, 4.92, 6.60, 5.19, 5.64, 7.03, 7.49, 8.04,
];

/// The same differences on isolated words; only speakers 1 to 4 were recorded.
pub const AVL2_DIFFERENCES: [Option<f64>; 12] = [
    Some(14.06),
    Some(11.87),
    Some(42.08),
    Some(32.75),
    None,
    None,
    None,
    None,
    None,
    None,
    None,
    None,
];

fn mean(values: impl IntoIterator<Item = f64>) -> f64 {
    let (sum, n) = values
        .into_iter()
        .fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    sum / n as f64
}

/// Mean isolated-word difference over the speakers that have one, minus the
/// mean continuous-speech difference.
pub fn isolated_vs_continuous() -> f64 {
    mean(AVL2_DIFFERENCES.iter().flatten().copied()) - mean(RMAV_DIFFERENCES)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Protocol {
    SSD,
    MS,
    SI,
    DSD,
    DSDD,
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Protocol::SSD => "SSD",
            Protocol::MS => "MS",
            Protocol::SI => "SI",
            Protocol::DSD => "DSD",
            Protocol::DSDD => "DSDD",
        })
    }
}

impl FromStr for Protocol {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "SSD" => Ok(Protocol::SSD),
            "MS" => Ok(Protocol::MS),
            "SI" => Ok(Protocol::SI),
            "DSD" => Ok(Protocol::DSD),
            "DSDD" | "DSD&D" => Ok(Protocol::DSDD),
            _ => Err(Error::Invalid(format!("unknown protocol `{s}`"))),
        }
    }
}

/// What a map id refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MapRef {
    Speaker(u32),
    All,
    Without(u32),
}

pub fn parse_map_id(id: &str) -> Result<MapRef> {
    let bad = || Error::Invalid(format!("malformed map id `{id}`"));
    let rest = id.strip_prefix("M_").ok_or_else(bad)?;
    if rest == "[all]" {
        return Ok(MapRef::All);
    }
    match rest.strip_prefix('!') {
        Some(n) => n.parse().map(MapRef::Without).map_err(|_| bad()),
        None => rest.parse().map(MapRef::Speaker).map_err(|_| bad()),
    }
}

/// One grid cell: map `map_id`, trained on speaker `train`, tested on `test`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CellSpec {
    pub protocol: Protocol,
    pub map_id: String,
    pub train: u32,
    pub test: u32,
}

impl CellSpec {
    pub fn new(
        protocol: Protocol,
        map_id: impl Into<String>,
        train: u32,
        test: u32,
    ) -> Result<Self> {
        let c = CellSpec {
            protocol,
            map_id: map_id.into(),
            train,
            test,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        let (p, q) = (self.train, self.test);
        let ok = match (self.protocol, parse_map_id(&self.map_id)?) {
            (Protocol::SSD, MapRef::Speaker(n)) => n == p && p == q,
            (Protocol::MS, MapRef::All) => p == q,
            (Protocol::SI, MapRef::Without(n)) => n == q && p == q,
            (Protocol::DSD, MapRef::Speaker(n)) => n != q && p == q,
            (Protocol::DSDD, MapRef::Speaker(n)) => n == p && p != q,
            _ => false,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidCell(format!(
                "{} is not a {} cell",
                self.label(),
                self.protocol
            )))
        }
    }

    pub fn label(&self) -> String {
        format!("{}({},{})", self.map_id, self.train, self.test)
    }
}

/// Every cell of the grid for `speakers`: S SSD, S MS, S SI, S(S-1) DSD and S(S-1) DSDD.
pub fn grid_cells(speakers: &[u32]) -> Vec<CellSpec> {
    let cell = |protocol, map_id: String, train, test| CellSpec {
        protocol,
        map_id,
        train,
        test,
    };
    let mut cells = Vec::new();
    for &q in speakers {
        cells.push(cell(Protocol::SSD, sd_map_id(q), q, q));
        cells.push(cell(Protocol::MS, ms_map_id(), q, q));
        cells.push(cell(Protocol::SI, si_map_id(q), q, q));
        for &n in speakers.iter().filter(|&&n| n != q) {
            cells.push(cell(Protocol::DSD, sd_map_id(n), q, q));
            cells.push(cell(Protocol::DSDD, sd_map_id(n), n, q));
        }
    }
    cells.sort();
    cells
}

pub fn write_grid_manifest(cells: &[CellSpec], header: &[String]) -> String {
    let mut out = String::new();
    for h in header {
        let _ = writeln!(out, "# {h}");
    }
    let _ = writeln!(out, "protocol,map_id,train,test");
    for c in cells {
        let _ = writeln!(out, "{},{},{},{}", c.protocol, c.map_id, c.train, c.test);
    }
    out
}

pub fn read_grid_manifest(text: &str, source_name: &str) -> Result<Vec<CellSpec>> {
    let mut cells = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with("protocol,") {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        let [protocol, map_id, train, test] = f[..] else {
            return Err(Error::parse(
                source_name,
                i + 1,
                "expected `protocol,map_id,train,test`",
            ));
        };
        let speaker = |s: &str| {
            s.parse::<u32>()
                .map_err(|_| Error::parse(source_name, i + 1, format!("bad speaker `{s}`")))
        };
        cells.push(CellSpec::new(
            protocol.parse()?,
            map_id,
            speaker(train)?,
            speaker(test)?,
        )?);
    }
    Ok(cells)
}

/// Settings shared by both passes.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub flat_start: FlatStartConfig,
    pub schedule: TrainSchedule,
    /// The boundary unit is set per map from its silence viseme.
    pub decode: DecodeConfig,
    pub threshold: u64,
    /// Decode the phoneme pass against a free unit loop instead of a phoneme bigram.
    pub free_loop: bool,
    /// Worker threads; 0 uses every core.
    pub jobs: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            flat_start: FlatStartConfig::default(),
            schedule: TrainSchedule::default(),
            decode: DecodeConfig::default(),
            threshold: 1,
            free_loop: false,
            jobs: 0,
        }
    }
}

impl ExperimentConfig {
    /// Runs `f` on a pool sized by `jobs`.
    pub fn install<T: Send>(&self, f: impl FnOnce() -> T + Send) -> Result<T> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(self.jobs)
            .build()
            .map_err(|e| Error::Invalid(format!("cannot start worker pool: {e}")))?;
        Ok(pool.install(f))
    }
}

fn guard(train: &[&Utterance], test: &[&Utterance]) -> Result<()> {
    let ids: BTreeSet<&str> = train.iter().map(|u| u.id.as_str()).collect();
    match test.iter().find(|u| ids.contains(u.id.as_str())) {
        Some(u) => Err(Error::Leakage(u.id.clone())),
        None => Ok(()),
    }
}

/// A speaker's training folds and held-out fold.
pub fn split<'a>(
    corpus: &'a Corpus,
    folds: &FoldSplit,
    speaker: u32,
    fold: usize,
) -> Result<(Vec<&'a Utterance>, Vec<&'a Utterance>)> {
    let mut train = Vec::new();
    let mut test = Vec::new();
    for u in corpus.by_speaker(speaker) {
        let f = folds
            .fold_of(&u.id)
            .ok_or_else(|| Error::Invalid(format!("utterance {} has no fold", u.id)))?;
        if f == fold {
            test.push(u);
        } else {
            train.push(u);
        }
    }
    if train.is_empty() || test.is_empty() {
        return Err(Error::Invalid(format!(
            "speaker {speaker} fold {fold} leaves an empty training or test set"
        )));
    }
    Ok((train, test))
}

fn train_models(
    utts: &[&Utterance],
    labels: &[Vec<String>],
    units: Vec<String>,
    cfg: &ExperimentConfig,
) -> Result<HmmSet> {
    let train: Vec<TrainUtterance> = utts
        .iter()
        .zip(labels)
        .map(|(u, l)| TrainUtterance {
            id: &u.id,
            labels: l.clone(),
            obs: u.features.view(),
        })
        .collect();
    let (init, mut warnings) = flat_start(&train, units, &cfg.flat_start)?;
    let trained = reestimate(&init, &train, &cfg.schedule)?;
    warnings.extend(trained.warnings);
    for w in &warnings {
        log::debug!("training: {w:?}");
    }
    Ok(trained.models)
}

/// Held-out phoneme confusions for one speaker and fold.
#[derive(Debug, Clone)]
pub struct PhonemeFold {
    pub speaker: u32,
    pub fold: usize,
    pub confusions: ConfusionMatrix,
    pub train_ids: Vec<String>,
    pub test_ids: Vec<String>,
}

/// Phoneme recognition of every fold of every speaker against models trained
/// on that speaker's other folds.
pub fn phoneme_pass(
    corpus: &Corpus,
    folds: &FoldSplit,
    cfg: &ExperimentConfig,
) -> Result<Vec<PhonemeFold>> {
    folds.covers(corpus)?;
    let jobs: Vec<(u32, usize)> = corpus
        .speakers()
        .into_iter()
        .flat_map(|s| (0..folds.k()).map(move |f| (s, f)))
        .collect();
    jobs.par_iter()
        .map(|&(speaker, fold)| {
            let (models, net) = train_phoneme_models(corpus, folds, speaker, fold, cfg)?;
            let confusions = phoneme_confusions(corpus, folds, speaker, fold, &models, &net, cfg)?;
            let (train, test) = split(corpus, folds, speaker, fold)?;
            log::info!("phoneme pass: speaker {speaker} fold {fold} done");
            Ok(PhonemeFold {
                speaker,
                fold,
                confusions,
                train_ids: train.iter().map(|u| u.id.clone()).collect(),
                test_ids: test.iter().map(|u| u.id.clone()).collect(),
            })
        })
        .collect()
}

/// Phoneme models and the phoneme network for one speaker and fold.
pub fn train_phoneme_models(
    corpus: &Corpus,
    folds: &FoldSplit,
    speaker: u32,
    fold: usize,
    cfg: &ExperimentConfig,
) -> Result<(HmmSet, Bigram)> {
    let symbols: Vec<String> = corpus
        .dict()
        .phoneme_set()
        .symbols()
        .map(str::to_string)
        .collect();
    let (train, _) = split(corpus, folds, speaker, fold)?;
    let labels: Vec<Vec<String>> = train.iter().map(|u| u.phonemes.clone()).collect();
    let models = train_models(&train, &labels, symbols.clone(), cfg)?;
    let net = if cfg.free_loop {
        Bigram::uniform(symbols)?
    } else {
        build_bigram(&labels, symbols)?
    };
    Ok((models, net))
}

/// Decodes the held-out fold with phoneme models and counts confusions.
/// Models must come from the same speaker and fold.
pub fn phoneme_confusions(
    corpus: &Corpus,
    folds: &FoldSplit,
    speaker: u32,
    fold: usize,
    models: &HmmSet,
    net: &Bigram,
    cfg: &ExperimentConfig,
) -> Result<ConfusionMatrix> {
    let (train, test) = split(corpus, folds, speaker, fold)?;
    guard(&train, &test)?;
    let decode_cfg = DecodeConfig {
        boundary: None,
        ..cfg.decode.clone()
    };
    let mut confusions = ConfusionMatrix::new(corpus.dict().phoneme_set().clone());
    for u in &test {
        let hyp = match decode_units(models, net, u.features.view(), &decode_cfg) {
            Ok(r) => r.words,
            Err(Error::NoHypothesis) => Vec::new(),
            Err(e) => return Err(e),
        };
        confusions.accumulate(&align(&u.phonemes, &hyp, EditCosts::default()))?;
    }
    Ok(confusions)
}

/// Per-speaker confusions pooled over folds.
pub fn pool_by_speaker(folds: &[PhonemeFold]) -> Result<BTreeMap<u32, ConfusionMatrix>> {
    let mut ordered: Vec<&PhonemeFold> = folds.iter().collect();
    ordered.sort_by_key(|f| (f.speaker, f.fold));
    let mut out: BTreeMap<u32, ConfusionMatrix> = BTreeMap::new();
    for f in ordered {
        match out.get_mut(&f.speaker) {
            Some(m) => m.merge(&f.confusions)?,
            None => {
                out.insert(f.speaker, f.confusions.clone());
            }
        }
    }
    Ok(out)
}

/// One SD map per speaker, one MS map and one SI map per speaker.
pub fn derive_all_maps(
    confusions: &BTreeMap<u32, ConfusionMatrix>,
    threshold: u64,
) -> Result<Vec<P2VMap>> {
    let speakers: Vec<u32> = confusions.keys().copied().collect();
    let pooled = pool_confusions(confusions.values())?;
    let mut maps = Vec::with_capacity(2 * speakers.len() + 1);
    for (&s, m) in confusions {
        maps.push(derive_map(m, MapKind::SD, sd_map_id(s), [s], threshold)?);
    }
    maps.push(derive_map(
        &pooled,
        MapKind::MS,
        ms_map_id(),
        speakers.iter().copied(),
        threshold,
    )?);
    for (&s, m) in confusions {
        let mut others = pooled.clone();
        others.subtract(m)?;
        let sources = speakers.iter().copied().filter(|&o| o != s);
        maps.push(derive_map(
            &others,
            MapKind::SI,
            si_map_id(s),
            sources,
            threshold,
        )?);
    }
    Ok(maps)
}

/// Everything produced by one full run of both passes.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub phoneme_folds: Vec<PhonemeFold>,
    pub maps: Vec<P2VMap>,
    pub grid: GridResult,
}

/// Phoneme pass, map derivation and the complete grid on a pool sized by `cfg.jobs`.
pub fn run_experiment(
    corpus: &Corpus,
    folds: &FoldSplit,
    cfg: &ExperimentConfig,
) -> Result<Experiment> {
    cfg.install(|| {
        let phoneme_folds = phoneme_pass(corpus, folds, cfg)?;
        let maps = derive_all_maps(&pool_by_speaker(&phoneme_folds)?, cfg.threshold)?;
        let cells = grid_cells(&corpus.speakers());
        let grid = run_grid(corpus, folds, &maps, &cells, cfg)?;
        Ok(Experiment {
            phoneme_folds,
            maps,
            grid,
        })
    })?
}

#[derive(Debug, Clone, PartialEq)]
pub struct FoldResult {
    pub fold: usize,
    pub score: WordScore,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentCell {
    pub spec: CellSpec,
    pub folds: Vec<FoldResult>,
    pub summary: ScoreSummary,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridResult {
    pub cells: Vec<ExperimentCell>,
    /// Cells that could not be completed, with the reason.
    pub failures: Vec<(CellSpec, String)>,
}

type ModelKey = (String, u32, usize);

/// Viseme models, word network and the training utterance ids.
pub type VisemeModels = (HmmSet, Bigram, Vec<String>);

/// Runs `cells` over every fold. Models are trained once per map, training
/// speaker and fold and shared between cells.
pub fn run_grid(
    corpus: &Corpus,
    folds: &FoldSplit,
    maps: &[P2VMap],
    cells: &[CellSpec],
    cfg: &ExperimentConfig,
) -> Result<GridResult> {
    folds.covers(corpus)?;
    let maps: BTreeMap<&str, &P2VMap> = maps.iter().map(|m| (m.map_id.as_str(), m)).collect();
    let k = folds.k();

    let mut cell_errors: BTreeMap<CellSpec, String> = BTreeMap::new();
    let mut model_keys: BTreeSet<ModelKey> = BTreeSet::new();
    for c in cells {
        if let Err(e) = c.validate() {
            cell_errors.insert(c.clone(), e.to_string());
        } else if !maps.contains_key(c.map_id.as_str()) {
            cell_errors.insert(
                c.clone(),
                Error::MissingCell(format!("map {} not derived", c.map_id)).to_string(),
            );
        } else {
            model_keys.extend((0..k).map(|f| (c.map_id.clone(), c.train, f)));
        }
    }

    let trained: BTreeMap<ModelKey, std::result::Result<VisemeModels, String>> = model_keys
        .into_par_iter()
        .map(|key| {
            let (map_id, speaker, fold) = &key;
            let out =
                train_viseme_models(corpus, folds, maps[map_id.as_str()], *speaker, *fold, cfg);
            if out.is_ok() {
                log::info!("viseme pass: trained {map_id} on speaker {speaker} fold {fold}");
            }
            (key, out.map_err(|e| e.to_string()))
        })
        .collect();

    let decode_jobs: Vec<(&CellSpec, usize)> = cells
        .iter()
        .filter(|c| !cell_errors.contains_key(*c))
        .flat_map(|c| (0..k).map(move |f| (c, f)))
        .collect();
    let scored: Vec<Result<FoldResult>> = decode_jobs
        .par_iter()
        .map(|&(c, fold)| {
            let (models, net, train_ids) = trained[&(c.map_id.clone(), c.train, fold)]
                .as_ref()
                .map_err(|e| Error::Invalid(e.clone()))?;
            let map = maps[c.map_id.as_str()];
            decode_fold(
                corpus, folds, map, models, net, train_ids, c.test, fold, cfg,
            )
            .map(|(r, _)| r)
        })
        .collect();

    let mut per_cell: BTreeMap<&CellSpec, Vec<FoldResult>> = BTreeMap::new();
    for ((c, _), r) in decode_jobs.iter().zip(scored) {
        match r {
            Ok(fr) => per_cell.entry(c).or_default().push(fr),
            Err(e) => {
                cell_errors
                    .entry((*c).clone())
                    .or_insert_with(|| e.to_string());
            }
        }
    }
    let mut result = GridResult {
        cells: Vec::new(),
        failures: Vec::new(),
    };
    for c in cells {
        if let Some(e) = cell_errors.get(c) {
            log::warn!("cell {} {} failed: {e}", c.protocol, c.label());
            result.failures.push((c.clone(), e.clone()));
            continue;
        }
        let folds = per_cell.remove(c).unwrap_or_default();
        let cw: Vec<f64> = folds.iter().map(|f| f.score.correctness).collect();
        let summary = summarize(&cw)?;
        result.cells.push(ExperimentCell {
            spec: c.clone(),
            folds,
            summary,
        });
    }
    Ok(result)
}

/// A single cell, trained and decoded on its own.
pub fn run_cell(
    corpus: &Corpus,
    folds: &FoldSplit,
    maps: &[P2VMap],
    cell: &CellSpec,
    cfg: &ExperimentConfig,
) -> Result<ExperimentCell> {
    let mut grid = run_grid(corpus, folds, maps, std::slice::from_ref(cell), cfg)?;
    if let Some((_, e)) = grid.failures.pop() {
        return Err(Error::InvalidCell(format!("{}: {e}", cell.label())));
    }
    grid.cells
        .pop()
        .ok_or_else(|| Error::MissingCell(cell.label()))
}

/// Viseme models labelled by `map` and the word network for one training
/// speaker and fold, with the ids of the utterances they saw.
pub fn train_viseme_models(
    corpus: &Corpus,
    folds: &FoldSplit,
    map: &P2VMap,
    speaker: u32,
    fold: usize,
    cfg: &ExperimentConfig,
) -> Result<VisemeModels> {
    let (train, _) = split(corpus, folds, speaker, fold)?;
    let labels = train
        .iter()
        .map(|u| apply_map(&u.phonemes, map))
        .collect::<Result<Vec<_>>>()?;
    let units: Vec<String> = map.visemes().into_iter().map(str::to_string).collect();
    let models = train_models(&train, &labels, units, cfg)?;
    let words: Vec<&[String]> = train.iter().map(|u| u.words.as_slice()).collect();
    let net = build_bigram(&words, corpus.dict().words().map(str::to_string))?;
    Ok((models, net, train.iter().map(|u| u.id.clone()).collect()))
}

/// Decodes `test_speaker`'s held-out fold. `train_ids` are the utterances
/// the models were trained on; any overlap with the test fold is leakage.
#[allow(clippy::too_many_arguments)]
pub fn decode_fold(
    corpus: &Corpus,
    folds: &FoldSplit,
    map: &P2VMap,
    models: &HmmSet,
    net: &Bigram,
    train_ids: &[String],
    test_speaker: u32,
    fold: usize,
    cfg: &ExperimentConfig,
) -> Result<(FoldResult, Vec<Hypothesis>)> {
    let (_, test) = split(corpus, folds, test_speaker, fold)?;
    let seen: BTreeSet<&str> = train_ids.iter().map(String::as_str).collect();
    if let Some(u) = test.iter().find(|u| seen.contains(u.id.as_str())) {
        return Err(Error::Leakage(u.id.clone()));
    }
    let vdict = map_dictionary(corpus.dict(), map)?;
    let decode_cfg = DecodeConfig {
        boundary: map.viseme_of(SILENCE).map(str::to_string),
        ..cfg.decode.clone()
    };
    let mut scores = Vec::with_capacity(test.len());
    let mut hyps = Vec::with_capacity(test.len());
    for u in &test {
        let hyp = Hypothesis::from_result(
            &u.id,
            decode_words(models, net, &vdict, u.features.view(), &decode_cfg),
        )?;
        let a = align(&u.words, &hyp.words, EditCosts::default());
        scores.push(WordScore::from_counts(
            a.n,
            a.deletions,
            a.substitutions,
            a.insertions,
        )?);
        hyps.push(hyp);
    }
    let result = FoldResult {
        fold,
        score: WordScore::pooled(&scores)?,
    };
    Ok((result, hyps))
}

/// `map_id,train_speaker,test_speaker,fold,N,D,S,I,Cw`, one row per cell and fold.
pub fn results_csv(grid: &GridResult, header: &[String]) -> String {
    let mut out = String::new();
    for h in header {
        let _ = writeln!(out, "# {h}");
    }
    let _ = writeln!(out, "map_id,train_speaker,test_speaker,fold,N,D,S,I,Cw");
    for c in &grid.cells {
        for f in &c.folds {
            let s = &f.score;
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                c.spec.map_id,
                c.spec.train,
                c.spec.test,
                f.fold,
                s.n,
                s.deletions,
                s.substitutions,
                s.insertions,
                s.correctness
            );
        }
    }
    out
}

/// `protocol,map,train,test,mean_cw,se`, one row per completed cell.
pub fn summary_csv(cells: &[ExperimentCell], header: &[String]) -> String {
    let mut out = String::new();
    for h in header {
        let _ = writeln!(out, "# {h}");
    }
    let _ = writeln!(out, "protocol,map,train,test,mean_cw,se");
    for c in cells {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            c.spec.protocol,
            c.spec.map_id,
            c.spec.train,
            c.spec.test,
            c.summary.mean,
            c.summary.standard_error
        );
    }
    out
}

/// Reads a summary CSV back into cells carrying only mean and s.e.
pub fn read_summary_csv(text: &str, source_name: &str) -> Result<Vec<ExperimentCell>> {
    let mut cells = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with("protocol,") {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        let [protocol, map_id, train, test, mean, se] = f[..] else {
            return Err(Error::parse(source_name, i + 1, "expected six fields"));
        };
        let num = |s: &str| {
            s.parse::<f64>()
                .map_err(|_| Error::parse(source_name, i + 1, format!("bad number `{s}`")))
        };
        let speaker = |s: &str| {
            s.parse::<u32>()
                .map_err(|_| Error::parse(source_name, i + 1, format!("bad speaker `{s}`")))
        };
        let spec = CellSpec::new(protocol.parse()?, map_id, speaker(train)?, speaker(test)?)?;
        cells.push(fixture_cell(spec, num(mean)?, num(se)?));
    }
    Ok(cells)
}

/// A cell carrying only a mean and standard error, as read from a report.
pub fn fixture_cell(spec: CellSpec, mean: f64, standard_error: f64) -> ExperimentCell {
    ExperimentCell {
        spec,
        folds: Vec::new(),
        summary: ScoreSummary {
            per_fold: Vec::new(),
            mean,
            standard_error,
            single_fold: false,
        },
    }
}

/// ±1/±2 scores of each foreign speaker-dependent map against the test speaker's own.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WeightTable {
    pub speakers: Vec<u32>,
    /// `scores[row][col]`: row is the test speaker, col the speaker whose map was used.
    pub scores: Vec<Vec<i8>>,
    pub totals: Vec<i32>,
}

impl WeightTable {
    pub fn to_csv(&self, header: &[String]) -> String {
        let mut out = String::new();
        for h in header {
            let _ = writeln!(out, "# {h}");
        }
        let cols: Vec<String> = self.speakers.iter().map(|&s| sd_map_id(s)).collect();
        let _ = writeln!(out, "test_speaker,{}", cols.join(","));
        for (q, row) in self.speakers.iter().zip(&self.scores) {
            let r: Vec<String> = row.iter().map(|v| format!("{v:+}")).collect();
            let _ = writeln!(out, "{q},{}", r.join(","));
        }
        let t: Vec<String> = self.totals.iter().map(|v| format!("{v:+}")).collect();
        let _ = writeln!(out, "total,{}", t.join(","));
        out
    }
}

/// Score of a candidate mean against a baseline with standard error `se`.
pub fn weight(candidate: f64, baseline: f64, se: f64) -> i8 {
    let diff = candidate - baseline;
    if diff == 0.0 {
        0
    } else {
        let magnitude = if diff.abs() <= se { 1 } else { 2 };
        if diff > 0.0 {
            magnitude
        } else {
            -magnitude
        }
    }
}

/// Builds the weighting table from SSD and DSD cells; other protocols are ignored.
pub fn weighting_table(cells: &[ExperimentCell]) -> Result<WeightTable> {
    let mut ssd: BTreeMap<u32, &ScoreSummary> = BTreeMap::new();
    let mut dsd: BTreeMap<(u32, u32), &ScoreSummary> = BTreeMap::new();
    for c in cells {
        match (c.spec.protocol, parse_map_id(&c.spec.map_id)?) {
            (Protocol::SSD, _) => {
                ssd.insert(c.spec.test, &c.summary);
            }
            (Protocol::DSD, MapRef::Speaker(n)) => {
                dsd.insert((c.spec.test, n), &c.summary);
            }
            _ => {}
        }
    }
    let speakers: Vec<u32> = ssd.keys().copied().collect();
    let mut scores = Vec::with_capacity(speakers.len());
    for &q in &speakers {
        let base = ssd[&q];
        let mut row = Vec::with_capacity(speakers.len());
        for &n in &speakers {
            if n == q {
                row.push(0);
                continue;
            }
            let cand = dsd
                .get(&(q, n))
                .ok_or_else(|| Error::MissingCell(format!("DSD {}({q},{q})", sd_map_id(n))))?;
            row.push(weight(cand.mean, base.mean, base.standard_error));
        }
        scores.push(row);
    }
    let totals = (0..speakers.len())
        .map(|j| scores.iter().map(|row| row[j] as i32).sum())
        .collect();
    Ok(WeightTable {
        speakers,
        scores,
        totals,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DifferenceReport {
    /// Test speaker and SSD mean minus mean DSDD mean, in percentage points.
    pub rows: Vec<(u32, f64)>,
    pub grand_mean: f64,
}

impl DifferenceReport {
    pub fn to_csv(&self, header: &[String]) -> String {
        let mut out = String::new();
        for h in header {
            let _ = writeln!(out, "# {h}");
        }
        let _ = writeln!(out, "test_speaker,difference_pp,sign");
        for (q, d) in &self.rows {
            let sign = if *d > 0.0 {
                "+"
            } else if *d < 0.0 {
                "-"
            } else {
                "0"
            };
            let _ = writeln!(out, "{q},{d},{sign}");
        }
        let _ = writeln!(out, "mean,{},", self.grand_mean);
        out
    }
}

pub fn difference_report(cells: &[ExperimentCell]) -> Result<DifferenceReport> {
    let mut ssd: BTreeMap<u32, f64> = BTreeMap::new();
    let mut dsdd: BTreeMap<u32, Vec<f64>> = BTreeMap::new();
    for c in cells {
        match c.spec.protocol {
            Protocol::SSD => {
                ssd.insert(c.spec.test, c.summary.mean);
            }
            Protocol::DSDD => dsdd.entry(c.spec.test).or_default().push(c.summary.mean),
            _ => {}
        }
    }
    if ssd.is_empty() {
        return Err(Error::MissingCell("no SSD cells".into()));
    }
    let mut rows = Vec::with_capacity(ssd.len());
    for (&q, &base) in &ssd {
        let others = dsdd
            .get(&q)
            .ok_or_else(|| Error::MissingCell(format!("DSDD cells for test speaker {q}")))?;
        rows.push((q, 100.0 * (base - mean(others.iter().copied()))));
    }
    let grand_mean = mean(rows.iter().map(|r| r.1));
    Ok(DifferenceReport { rows, grand_mean })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Significance {
    BetterSignificant,
    Within1Se,
    WorseSignificant,
}

impl fmt::Display for Significance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Significance::BetterSignificant => "better_significant",
            Significance::Within1Se => "within_1se",
            Significance::WorseSignificant => "worse_significant",
        })
    }
}

/// Classifies candidate `a` against baseline `b` by one standard error of `b`.
pub fn significance_flag(a: &ScoreSummary, b: &ScoreSummary) -> Result<Significance> {
    let degenerate =
        |s: &ScoreSummary| s.single_fold || (!s.per_fold.is_empty() && s.per_fold.len() < 2);
    if degenerate(a) || degenerate(b) {
        return Err(Error::DegenerateSummary);
    }
    let diff = a.mean - b.mean;
    Ok(if diff.abs() <= b.standard_error {
        Significance::Within1Se
    } else if diff > 0.0 {
        Significance::BetterSignificant
    } else {
        Significance::WorseSignificant
    })
}

/// Plot rows `test_speaker,map,mean,se,baseline_mean,baseline_se` for one
/// protocol, each against the test speaker's SSD cell.
pub fn plot_csv(cells: &[ExperimentCell], protocol: Protocol, header: &[String]) -> Result<String> {
    let ssd: BTreeMap<u32, &ScoreSummary> = cells
        .iter()
        .filter(|c| c.spec.protocol == Protocol::SSD)
        .map(|c| (c.spec.test, &c.summary))
        .collect();
    let mut out = String::new();
    for h in header {
        let _ = writeln!(out, "# {h}");
    }
    let _ = writeln!(out, "test_speaker,map,mean,se,baseline_mean,baseline_se");
    let mut rows: Vec<&ExperimentCell> = cells
        .iter()
        .filter(|c| c.spec.protocol == protocol)
        .collect();
    rows.sort_by(|a, b| (a.spec.test, &a.spec.map_id).cmp(&(b.spec.test, &b.spec.map_id)));
    for c in rows {
        let base = ssd.get(&c.spec.test).ok_or_else(|| {
            Error::MissingCell(format!("SSD baseline for speaker {}", c.spec.test))
        })?;
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            c.spec.test,
            c.spec.map_id,
            c.summary.mean,
            c.summary.standard_error,
            base.mean,
            base.standard_error
        );
    }
    Ok(out)
}
