use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use lipmap_core::align::{summarize, ConfusionMatrix};
use lipmap_core::corpus::{
    generate_synthetic_corpus, load_corpus, load_dictionary, make_folds, read_folds, write_corpus,
    write_folds, Corpus, FoldSplit, SynthSpec,
};
use lipmap_core::decoder::write_hypotheses;
use lipmap_core::harness::{
    decode_fold, derive_all_maps, difference_report, grid_cells, phoneme_confusions, phoneme_pass,
    plot_csv, pool_by_speaker, read_grid_manifest, read_summary_csv, results_csv, run_grid,
    significance_flag, summary_csv, train_phoneme_models, train_viseme_models, weighting_table,
    write_grid_manifest, CellSpec, ExperimentCell, GridResult, Protocol,
};
use lipmap_core::hmm::{read_hmm_set, write_hmm_set};
use lipmap_core::lm::Bigram;
use lipmap_core::p2v::{ms_map_id, sd_map_id, si_map_id, P2VMap};
use rayon::prelude::*;

use crate::artifacts::{header, read, record, require, write, InputHash, Layout};
use crate::config::RunConfig;
use crate::error::CliError;

type CmdResult = Result<(), CliError>;

fn hash_corpus(layout: &Layout, h: &mut InputHash) -> CmdResult {
    let manifest = layout.corpus_manifest();
    h.add(&layout.dictionary())?;
    h.add(&manifest)?;
    let base = manifest.parent().unwrap_or(Path::new(""));
    for line in read(&manifest)?.lines() {
        if line.starts_with('#') || line.trim().is_empty() {
            continue;
        }
        if let Some(feat) = line.split('\t').nth(2) {
            h.add(&base.join(feat))?;
        }
    }
    Ok(())
}

fn load(layout: &Layout) -> Result<Corpus, CliError> {
    let dict_path = layout.dictionary();
    let manifest = layout.corpus_manifest();
    require(&dict_path)?;
    require(&manifest)?;
    Ok(load_corpus(&manifest, load_dictionary(&dict_path)?)?)
}

fn load_folds(layout: &Layout, cfg: &RunConfig, corpus: &Corpus) -> Result<FoldSplit, CliError> {
    let path = layout.folds();
    let folds = read_folds(&read(&path)?, &path.display().to_string())?;
    if folds.k() != cfg.folds {
        return Err(CliError::Config {
            field: "folds".into(),
            msg: format!(
                "{} holds {} folds but {} were requested",
                path.display(),
                folds.k(),
                cfg.folds
            ),
        });
    }
    folds.covers(corpus)?;
    Ok(folds)
}

fn jobs(corpus: &Corpus, folds: &FoldSplit) -> Vec<(u32, usize)> {
    corpus
        .speakers()
        .into_iter()
        .flat_map(|s| (0..folds.k()).map(move |f| (s, f)))
        .collect()
}

fn map_ids(speakers: &[u32]) -> Vec<String> {
    let mut ids: Vec<String> = speakers.iter().map(|&s| sd_map_id(s)).collect();
    ids.push(ms_map_id());
    ids.extend(speakers.iter().map(|&s| si_map_id(s)));
    ids
}

fn load_maps(layout: &Layout, corpus: &Corpus, h: &mut InputHash) -> Result<Vec<P2VMap>, CliError> {
    map_ids(&corpus.speakers())
        .iter()
        .map(|id| {
            let path = layout.map(id);
            h.add(&path)?;
            Ok(P2VMap::from_text(
                &read(&path)?,
                corpus.dict().phoneme_set(),
                &path.display().to_string(),
            )?)
        })
        .collect()
}

fn load_cells(
    corpus: &Corpus,
    cells: Option<&Path>,
    h: &mut InputHash,
) -> Result<Vec<CellSpec>, CliError> {
    match cells {
        Some(path) => {
            h.add(path)?;
            Ok(read_grid_manifest(
                &read(path)?,
                &path.display().to_string(),
            )?)
        }
        None => Ok(grid_cells(&corpus.speakers())),
    }
}

fn write_grid_outputs(
    layout: &Layout,
    cfg: &RunConfig,
    cells: &[CellSpec],
    grid: &GridResult,
) -> CmdResult {
    let hdr = header(cfg);
    write(&layout.grid_manifest(), &write_grid_manifest(cells, &hdr))?;
    write(&layout.results(), &results_csv(grid, &hdr))?;
    write(&layout.summary(), &summary_csv(&grid.cells, &hdr))?;
    let mut failures = String::new();
    for h in &hdr {
        let _ = writeln!(failures, "# {h}");
    }
    let _ = writeln!(failures, "protocol,map,train,test,reason");
    for (c, e) in &grid.failures {
        let _ = writeln!(
            failures,
            "{},{},{},{},{}",
            c.protocol,
            c.map_id,
            c.train,
            c.test,
            e.replace(',', ";")
        );
    }
    write(&layout.failures(), &failures)?;
    if grid.cells.is_empty() && !grid.failures.is_empty() {
        return Err(CliError::Runtime(format!(
            "all {} cells failed; see {}",
            grid.failures.len(),
            layout.failures().display()
        )));
    }
    Ok(())
}

pub fn synth(cfg: &RunConfig) -> CmdResult {
    let layout = Layout::new(cfg);
    let mut spec = SynthSpec::desk_scale(cfg.speakers, cfg.sentences, cfg.separation, cfg.seed);
    for p in &cfg.confusable {
        if !spec.emissions.contains_key(&(p.speaker, p.keep.clone()))
            || !spec.emissions.contains_key(&(p.speaker, p.moved.clone()))
        {
            return Err(CliError::Config {
                field: "confusable".into(),
                msg: format!("`{}` or `{}` is not a synthetic phoneme", p.keep, p.moved),
            });
        }
        spec = spec.with_confusable_pair(p.speaker, &p.keep, &p.moved, p.distance);
    }
    let synthetic = generate_synthetic_corpus(&spec)?;
    let dir = layout.corpus_dir();
    write_corpus(&synthetic.corpus, &dir, &header(cfg))?;
    log::info!(
        "synthesized {} utterances into {}",
        synthetic.corpus.utterances().len(),
        dir.display()
    );
    record(&layout, cfg, "synth", "-".into())
}

pub fn folds(cfg: &RunConfig) -> CmdResult {
    let layout = Layout::new(cfg);
    let mut h = InputHash::default();
    hash_corpus(&layout, &mut h)?;
    let corpus = load(&layout)?;
    let split = make_folds(&corpus, cfg.folds, cfg.seed)?;
    write(&layout.folds(), &write_folds(&split, &header(cfg)))?;
    record(&layout, cfg, "folds", h.finish())
}

pub fn train_phonemes(cfg: &RunConfig) -> CmdResult {
    let layout = Layout::new(cfg);
    let mut h = InputHash::default();
    hash_corpus(&layout, &mut h)?;
    h.add(&layout.folds())?;
    let corpus = load(&layout)?;
    let folds = load_folds(&layout, cfg, &corpus)?;
    let exp = cfg.experiment();
    let trained = exp.install(|| {
        jobs(&corpus, &folds)
            .par_iter()
            .map(|&(s, f)| train_phoneme_models(&corpus, &folds, s, f, &exp).map(|m| (s, f, m)))
            .collect::<lipmap_core::Result<Vec<_>>>()
    })??;
    let hdr = header(cfg);
    for (s, f, (models, net)) in &trained {
        write(&layout.phoneme_models(*s, *f), &write_hmm_set(models, &hdr))?;
        write(&layout.phoneme_network(*s, *f), &net.to_text(&hdr))?;
    }
    record(&layout, cfg, "train-phonemes", h.finish())
}

pub fn confuse(cfg: &RunConfig) -> CmdResult {
    let layout = Layout::new(cfg);
    let mut h = InputHash::default();
    hash_corpus(&layout, &mut h)?;
    h.add(&layout.folds())?;
    let corpus = load(&layout)?;
    let folds = load_folds(&layout, cfg, &corpus)?;
    let mut inputs = Vec::new();
    for (s, f) in jobs(&corpus, &folds) {
        let (mp, np) = (layout.phoneme_models(s, f), layout.phoneme_network(s, f));
        h.add(&mp)?;
        h.add(&np)?;
        let models = read_hmm_set(&read(&mp)?, &mp.display().to_string())?;
        let net = Bigram::from_text(&read(&np)?, &np.display().to_string())?;
        inputs.push((s, f, models, net));
    }
    let exp = cfg.experiment();
    let matrices = exp.install(|| {
        inputs
            .par_iter()
            .map(|(s, f, models, net)| {
                phoneme_confusions(&corpus, &folds, *s, *f, models, net, &exp).map(|m| (*s, m))
            })
            .collect::<lipmap_core::Result<Vec<_>>>()
    })??;
    let mut pooled: BTreeMap<u32, ConfusionMatrix> = BTreeMap::new();
    for (s, m) in matrices {
        match pooled.get_mut(&s) {
            Some(p) => p.merge(&m)?,
            None => {
                pooled.insert(s, m);
            }
        }
    }
    let hdr = header(cfg);
    for (s, m) in &pooled {
        write(&layout.confusions(*s), &m.to_text(&hdr))?;
    }
    record(&layout, cfg, "confuse", h.finish())
}

pub fn derive_maps(cfg: &RunConfig) -> CmdResult {
    let layout = Layout::new(cfg);
    let mut h = InputHash::default();
    let corpus = load(&layout)?;
    let mut confusions = BTreeMap::new();
    for s in corpus.speakers() {
        let path = layout.confusions(s);
        h.add(&path)?;
        confusions.insert(
            s,
            ConfusionMatrix::from_text(&read(&path)?, &path.display().to_string())?,
        );
    }
    let maps = derive_all_maps(&confusions, cfg.threshold)?;
    let hdr = header(cfg);
    for m in &maps {
        write(&layout.map(&m.map_id), &m.to_text(&hdr))?;
    }
    record(&layout, cfg, "derive-maps", h.finish())
}

pub fn train_visemes(cfg: &RunConfig, only: &[String]) -> CmdResult {
    let layout = Layout::new(cfg);
    let mut h = InputHash::default();
    hash_corpus(&layout, &mut h)?;
    h.add(&layout.folds())?;
    let corpus = load(&layout)?;
    let folds = load_folds(&layout, cfg, &corpus)?;
    let maps = load_maps(&layout, &corpus, &mut h)?;
    if let Some(id) = only
        .iter()
        .find(|id| !maps.iter().any(|m| &m.map_id == *id))
    {
        return Err(CliError::Config {
            field: "map".into(),
            msg: format!("no map `{id}` for this corpus"),
        });
    }
    let by_id: BTreeMap<&str, &P2VMap> = maps.iter().map(|m| (m.map_id.as_str(), m)).collect();
    let keys: BTreeSet<(String, u32, usize)> = grid_cells(&corpus.speakers())
        .into_iter()
        .filter(|c| only.is_empty() || only.contains(&c.map_id))
        .flat_map(|c| (0..folds.k()).map(move |f| (c.map_id.clone(), c.train, f)))
        .collect();
    let keys: Vec<_> = keys.into_iter().collect();
    let exp = cfg.experiment();
    let trained = exp.install(|| {
        keys.par_iter()
            .map(|(id, s, f)| {
                train_viseme_models(&corpus, &folds, by_id[id.as_str()], *s, *f, &exp)
            })
            .collect::<lipmap_core::Result<Vec<_>>>()
    })??;
    let hdr = header(cfg);
    for ((id, s, f), (models, net, ids)) in keys.iter().zip(&trained) {
        write(
            &layout.viseme_models(id, *s, *f),
            &write_hmm_set(models, &hdr),
        )?;
        write(&layout.word_network(id, *s, *f), &net.to_text(&hdr))?;
        let mut text: String = hdr.iter().map(|l| format!("# {l}\n")).collect();
        text.push_str(&ids.join("\n"));
        text.push('\n');
        write(&layout.training_ids(id, *s, *f), &text)?;
    }
    record(&layout, cfg, "train-visemes", h.finish())
}

pub fn decode(cfg: &RunConfig, cells_file: Option<&Path>) -> CmdResult {
    let layout = Layout::new(cfg);
    let mut h = InputHash::default();
    hash_corpus(&layout, &mut h)?;
    h.add(&layout.folds())?;
    let corpus = load(&layout)?;
    let folds = load_folds(&layout, cfg, &corpus)?;
    let maps = load_maps(&layout, &corpus, &mut h)?;
    let by_id: BTreeMap<&str, &P2VMap> = maps.iter().map(|m| (m.map_id.as_str(), m)).collect();
    let cells = load_cells(&corpus, cells_file, &mut h)?;

    let mut models = BTreeMap::new();
    for c in &cells {
        if !by_id.contains_key(c.map_id.as_str()) {
            return Err(CliError::Missing(layout.map(&c.map_id)));
        }
        for f in 0..folds.k() {
            let key = (c.map_id.clone(), c.train, f);
            if models.contains_key(&key) {
                continue;
            }
            let (mp, np, ip) = (
                layout.viseme_models(&c.map_id, c.train, f),
                layout.word_network(&c.map_id, c.train, f),
                layout.training_ids(&c.map_id, c.train, f),
            );
            for p in [&mp, &np, &ip] {
                h.add(p)?;
            }
            let set = read_hmm_set(&read(&mp)?, &mp.display().to_string())?;
            let net = Bigram::from_text(&read(&np)?, &np.display().to_string())?;
            let ids: Vec<String> = read(&ip)?
                .lines()
                .filter(|l| !l.starts_with('#') && !l.trim().is_empty())
                .map(str::to_string)
                .collect();
            models.insert(key, (set, net, ids));
        }
    }

    let exp = cfg.experiment();
    let work: Vec<(&CellSpec, usize)> = cells
        .iter()
        .flat_map(|c| (0..folds.k()).map(move |f| (c, f)))
        .collect();
    let decoded = exp.install(|| {
        work.par_iter()
            .map(|&(c, f)| {
                let (set, net, ids) = &models[&(c.map_id.clone(), c.train, f)];
                decode_fold(
                    &corpus,
                    &folds,
                    by_id[c.map_id.as_str()],
                    set,
                    net,
                    ids,
                    c.test,
                    f,
                    &exp,
                )
            })
            .collect::<Vec<_>>()
    })?;

    let hdr = header(cfg);
    let mut grid = GridResult {
        cells: Vec::new(),
        failures: Vec::new(),
    };
    let mut decoded = decoded.into_iter();
    for c in &cells {
        let mut fold_results = Vec::new();
        let mut hyps = Vec::new();
        let mut failure = None;
        for r in decoded.by_ref().take(folds.k()) {
            match r {
                Ok((fr, hs)) => {
                    fold_results.push(fr);
                    hyps.extend(hs);
                }
                Err(e) => failure = failure.or(Some(e.to_string())),
            }
        }
        if let Some(e) = failure {
            log::warn!("cell {} {} failed: {e}", c.protocol, c.label());
            grid.failures.push((c.clone(), e));
            continue;
        }
        let label = format!("{}_{}", c.protocol, c.label());
        write(&layout.hypotheses(&label), &write_hypotheses(&hyps, &hdr))?;
        let cw: Vec<f64> = fold_results.iter().map(|f| f.score.correctness).collect();
        grid.cells.push(ExperimentCell {
            spec: c.clone(),
            summary: summarize(&cw)?,
            folds: fold_results,
        });
    }
    write_grid_outputs(&layout, cfg, &cells, &grid)?;
    record(&layout, cfg, "decode", h.finish())
}

/// Both passes end to end from a corpus and fold split.
pub fn grid(cfg: &RunConfig, cells_file: Option<&Path>) -> CmdResult {
    let layout = Layout::new(cfg);
    let mut h = InputHash::default();
    hash_corpus(&layout, &mut h)?;
    h.add(&layout.folds())?;
    let corpus = load(&layout)?;
    let folds = load_folds(&layout, cfg, &corpus)?;
    let cells = load_cells(&corpus, cells_file, &mut h)?;
    let exp = cfg.experiment();
    let (confusions, maps, grid) = exp.install(|| -> lipmap_core::Result<_> {
        let passes = phoneme_pass(&corpus, &folds, &exp)?;
        let confusions = pool_by_speaker(&passes)?;
        let maps = derive_all_maps(&confusions, exp.threshold)?;
        let grid = run_grid(&corpus, &folds, &maps, &cells, &exp)?;
        Ok((confusions, maps, grid))
    })??;
    let hdr = header(cfg);
    for (s, m) in &confusions {
        write(&layout.confusions(*s), &m.to_text(&hdr))?;
    }
    for m in &maps {
        write(&layout.map(&m.map_id), &m.to_text(&hdr))?;
    }
    log::info!(
        "{} cells completed, {} failed",
        grid.cells.len(),
        grid.failures.len()
    );
    write_grid_outputs(&layout, cfg, &cells, &grid)?;
    record(&layout, cfg, "grid", h.finish())
}

pub fn report(cfg: &RunConfig, summary: Option<&Path>) -> CmdResult {
    let layout = Layout::new(cfg);
    let path = summary.map_or_else(|| layout.summary(), Path::to_path_buf);
    let mut h = InputHash::default();
    h.add(&path)?;
    let cells = read_summary_csv(&read(&path)?, &path.display().to_string())?;
    let hdr = header(cfg);
    // Tables whose protocols are absent altogether are skipped, so a partial
    // grid or a fixture still reports what it can.
    let has = |p: Protocol| cells.iter().any(|c| c.spec.protocol == p);
    if has(Protocol::DSD) {
        write(
            &layout.report("weights.csv"),
            &weighting_table(&cells)?.to_csv(&hdr),
        )?;
    } else {
        log::warn!("no DSD cells; skipping the weighting table");
    }
    if has(Protocol::DSDD) {
        write(
            &layout.report("differences.csv"),
            &difference_report(&cells)?.to_csv(&hdr),
        )?;
    } else {
        log::warn!("no DSDD cells; skipping the difference table");
    }
    for p in [Protocol::MS, Protocol::SI, Protocol::DSD, Protocol::DSDD] {
        if has(p) {
            write(
                &layout.report(&format!("plot_{p}.csv")),
                &plot_csv(&cells, p, &hdr)?,
            )?;
        }
    }
    write(
        &layout.report("significance.csv"),
        &significance(&cells, &hdr)?,
    )?;
    record(&layout, cfg, "report", h.finish())
}

/// Every non-SSD cell against the test speaker's own SSD cell.
fn significance(cells: &[ExperimentCell], hdr: &[String]) -> Result<String, CliError> {
    let ssd: BTreeMap<u32, &ExperimentCell> = cells
        .iter()
        .filter(|c| c.spec.protocol == Protocol::SSD)
        .map(|c| (c.spec.test, c))
        .collect();
    let mut out: String = hdr.iter().map(|l| format!("# {l}\n")).collect();
    out.push_str("protocol,map,train,test,flag\n");
    for c in cells.iter().filter(|c| c.spec.protocol != Protocol::SSD) {
        let Some(base) = ssd.get(&c.spec.test) else {
            continue;
        };
        let flag = significance_flag(&c.summary, &base.summary)?;
        let _ = writeln!(
            out,
            "{},{},{},{},{flag}",
            c.spec.protocol, c.spec.map_id, c.spec.train, c.spec.test
        );
    }
    Ok(out)
}

/// synth, folds, grid and report in one go.
pub fn pipeline(cfg: &RunConfig) -> CmdResult {
    synth(cfg)?;
    folds(cfg)?;
    grid(cfg, None)?;
    report(cfg, None)
}
