//! Token-passing Viterbi decoding over a bigram network of unit chains.

use std::collections::HashMap;
use std::fmt::Write as _;

use ndarray::ArrayView2;

use crate::hmm::{Gmm, HmmSet};
use crate::lm::Bigram;
use crate::p2v::VisemeDict;
use crate::{Error, Result, Span};

const NEG_INF: f64 = f64::NEG_INFINITY;
const NO_LINK: usize = usize::MAX;

#[derive(Debug, Clone, PartialEq)]
pub struct DecodeConfig {
    pub lm_scale: f64,
    pub word_insertion_penalty: f64,
    /// Log-space pruning width relative to the best token; `None` is exact search.
    pub beam: Option<f64>,
    /// Unit forced at the start and end of every utterance, outside the language model.
    pub boundary: Option<String>,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        DecodeConfig {
            lm_scale: 1.0,
            word_insertion_penalty: 0.0,
            beam: None,
            boundary: None,
        }
    }
}

impl DecodeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lm_scale.is_finite() && self.lm_scale >= 0.0) {
            return Err(Error::Invalid(format!(
                "lm_scale must be >= 0, got {}",
                self.lm_scale
            )));
        }
        if !self.word_insertion_penalty.is_finite() {
            return Err(Error::Invalid(
                "word insertion penalty must be finite".into(),
            ));
        }
        if let Some(b) = self.beam {
            if b.is_nan() || b <= 0.0 {
                return Err(Error::Invalid(format!("beam must be > 0, got {b}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecodeResult {
    pub words: Vec<String>,
    /// Acoustic log-likelihood plus scaled LM log probability plus insertion penalties.
    pub path_logprob: f64,
    /// One span per decoded word, plus boundary-unit spans when configured.
    pub spans: Vec<Span>,
}

#[derive(Clone, Copy, PartialEq)]
enum NodeKind {
    Word(usize),
    Start,
    End,
}

struct Node {
    kind: NodeKind,
    first: usize,
    last: usize,
}

struct Link {
    kind: NodeKind,
    prev: usize,
    start: usize,
    end: usize,
}

struct Graph<'a> {
    gmms: Vec<&'a Gmm>,
    emit: Vec<usize>,
    log_self: Vec<f64>,
    log_next: Vec<f64>,
    nodes: Vec<Node>,
    distinct: HashMap<(String, usize), usize>,
}

impl<'a> Graph<'a> {
    fn add(&mut self, models: &'a HmmSet, kind: NodeKind, units: &[String]) -> Result<()> {
        if units.is_empty() {
            return Err(Error::Invalid("empty pronunciation".into()));
        }
        let first = self.emit.len();
        for label in units {
            let unit = models.unit(label)?;
            for s in 0..unit.n_states() {
                let next = self.gmms.len();
                let d = *self.distinct.entry((label.clone(), s)).or_insert(next);
                if d == next {
                    self.gmms.push(&unit.states()[s]);
                }
                self.emit.push(d);
                self.log_self.push(unit.self_loop(s).ln());
                self.log_next.push(unit.advance(s).ln());
            }
        }
        self.nodes.push(Node {
            kind,
            first,
            last: self.emit.len() - 1,
        });
        Ok(())
    }
}

/// Best word sequence for `obs` under `net`, with words spelled by `vdict`.
pub fn decode_words(
    models: &HmmSet,
    net: &Bigram,
    vdict: &VisemeDict,
    obs: ArrayView2<f64>,
    cfg: &DecodeConfig,
) -> Result<DecodeResult> {
    let prons = net
        .vocab()
        .iter()
        .map(|w| {
            vdict
                .pronunciation(w)
                .map(<[String]>::to_vec)
                .ok_or_else(|| Error::OutOfVocabulary(w.clone()))
        })
        .collect::<Result<Vec<_>>>()?;
    search(models, net, &prons, obs, cfg)
}

/// Best unit sequence for `obs` under a unit-level bigram (a unit loop).
pub fn decode_units(
    models: &HmmSet,
    unit_bigram: &Bigram,
    obs: ArrayView2<f64>,
    cfg: &DecodeConfig,
) -> Result<DecodeResult> {
    let prons: Vec<Vec<String>> = unit_bigram
        .vocab()
        .iter()
        .map(|u| vec![u.clone()])
        .collect();
    search(models, unit_bigram, &prons, obs, cfg)
}

fn search(
    models: &HmmSet,
    net: &Bigram,
    prons: &[Vec<String>],
    obs: ArrayView2<f64>,
    cfg: &DecodeConfig,
) -> Result<DecodeResult> {
    cfg.validate()?;
    let frames = obs.nrows();
    if frames == 0 {
        return Err(Error::NoHypothesis);
    }
    if obs.ncols() != models.dim {
        return Err(Error::Invalid(format!(
            "observations have dimension {}, models expect {}",
            obs.ncols(),
            models.dim
        )));
    }
    let mut g = Graph {
        gmms: Vec::new(),
        emit: Vec::new(),
        log_self: Vec::new(),
        log_next: Vec::new(),
        nodes: Vec::new(),
        distinct: HashMap::new(),
    };
    for (w, pron) in prons.iter().enumerate() {
        g.add(models, NodeKind::Word(w), pron)?;
    }
    let n_words = prons.len();
    let boundary = cfg.boundary.as_ref().map(|b| vec![b.clone()]);
    if let Some(b) = &boundary {
        g.add(models, NodeKind::Start, b)?;
        g.add(models, NodeKind::End, b)?;
    }
    let (start_node, end_node) = if boundary.is_some() {
        (Some(n_words), Some(n_words + 1))
    } else {
        (None, None)
    };

    let lm = |x: f64| cfg.lm_scale * x;
    let wip = cfg.word_insertion_penalty;
    let n_states = g.emit.len();
    let mut score = vec![NEG_INF; n_states];
    let mut link = vec![NO_LINK; n_states];
    let mut entry = vec![0usize; n_states];
    let mut next_score = vec![NEG_INF; n_states];
    let mut next_link = vec![NO_LINK; n_states];
    let mut next_entry = vec![0usize; n_states];
    let mut em = vec![0.0; g.gmms.len()];
    let mut links: Vec<Link> = Vec::new();
    let mut scratch = Vec::new();

    let mut emissions = |t: usize, em: &mut [f64]| {
        let row = obs.row(t);
        let x: &[f64] = match row.as_slice() {
            Some(s) => s,
            None => {
                scratch.clear();
                scratch.extend(row.iter().copied());
                &scratch
            }
        };
        for (e, gmm) in em.iter_mut().zip(&g.gmms) {
            *e = gmm.log_density(x);
        }
    };

    emissions(0, &mut em);
    match start_node {
        Some(n) => {
            let s = g.nodes[n].first;
            score[s] = em[g.emit[s]];
        }
        None => {
            for w in 0..n_words {
                let s = g.nodes[w].first;
                score[s] = lm(net.start(w)) + wip + em[g.emit[s]];
            }
        }
    }
    prune(&mut score, cfg.beam);

    // best entry into each node at the current frame: (score, link)
    let mut entries = vec![(NEG_INF, NO_LINK); g.nodes.len()];
    let mut word_exit = vec![(NEG_INF, NO_LINK); n_words];
    for t in 1..frames {
        // tokens leaving nodes after frame t-1
        for (w, exit) in word_exit.iter_mut().enumerate() {
            *exit = exit_token(&g, &g.nodes[w], &score, &link, &entry, t, &mut links);
        }
        let start_exit =
            start_node.map(|n| exit_token(&g, &g.nodes[n], &score, &link, &entry, t, &mut links));

        for (v, slot) in entries.iter_mut().enumerate().take(n_words) {
            let mut best = (NEG_INF, NO_LINK);
            if let Some((s, l)) = start_exit {
                consider(&mut best, s + lm(net.start(v)) + wip, l);
            }
            for (w, &(s, l)) in word_exit.iter().enumerate() {
                consider(&mut best, s + lm(net.transition(w, v)) + wip, l);
            }
            *slot = best;
        }
        if let (Some(e), Some((s, l))) = (end_node, start_exit) {
            let mut best = (NEG_INF, NO_LINK);
            consider(&mut best, s + lm(net.empty_sentence()), l);
            for (w, &(s, l)) in word_exit.iter().enumerate() {
                consider(&mut best, s + lm(net.end(w)), l);
            }
            entries[e] = best;
        }

        emissions(t, &mut em);
        for (n, node) in g.nodes.iter().enumerate() {
            for s in node.first..=node.last {
                let stay = score[s] + g.log_self[s];
                let (adv, adv_link, adv_entry) = if s > node.first {
                    (score[s - 1] + g.log_next[s - 1], link[s - 1], entry[s - 1])
                } else {
                    (entries[n].0, entries[n].1, t)
                };
                let (best, l, e) = if adv > stay {
                    (adv, adv_link, adv_entry)
                } else {
                    (stay, link[s], entry[s])
                };
                next_score[s] = if best == NEG_INF {
                    NEG_INF
                } else {
                    best + em[g.emit[s]]
                };
                next_link[s] = l;
                next_entry[s] = e;
            }
        }
        std::mem::swap(&mut score, &mut next_score);
        std::mem::swap(&mut link, &mut next_link);
        std::mem::swap(&mut entry, &mut next_entry);
        prune(&mut score, cfg.beam);
    }

    let (final_score, final_link) = match end_node {
        Some(n) => exit_token(&g, &g.nodes[n], &score, &link, &entry, frames, &mut links),
        None => {
            let mut best = (NEG_INF, NO_LINK);
            for w in 0..n_words {
                let (s, l) = exit_token(&g, &g.nodes[w], &score, &link, &entry, frames, &mut links);
                consider(&mut best, s + lm(net.end(w)), l);
            }
            best
        }
    };
    if final_score == NEG_INF {
        return Err(Error::NoHypothesis);
    }

    let mut spans = Vec::new();
    let mut words = Vec::new();
    let mut cursor = final_link;
    while cursor != NO_LINK {
        let l = &links[cursor];
        let label = match l.kind {
            NodeKind::Word(w) => {
                words.push(net.vocab()[w].clone());
                net.vocab()[w].as_str()
            }
            NodeKind::Start | NodeKind::End => cfg.boundary.as_deref().unwrap_or_default(),
        };
        spans.push(Span::new(label, l.start, l.end));
        cursor = l.prev;
    }
    words.reverse();
    spans.reverse();
    Ok(DecodeResult {
        words,
        path_logprob: final_score,
        spans,
    })
}

/// Replaces `best` only on a strictly greater score, so earlier candidates win ties.
fn consider(best: &mut (f64, usize), score: f64, link: usize) {
    if score > best.0 {
        *best = (score, link);
    }
}

fn exit_token(
    g: &Graph,
    node: &Node,
    score: &[f64],
    link: &[usize],
    entry: &[usize],
    end: usize,
    links: &mut Vec<Link>,
) -> (f64, usize) {
    let s = node.last;
    if score[s] == NEG_INF {
        return (NEG_INF, NO_LINK);
    }
    links.push(Link {
        kind: node.kind,
        prev: link[s],
        start: entry[s],
        end,
    });
    (score[s] + g.log_next[s], links.len() - 1)
}

fn prune(score: &mut [f64], beam: Option<f64>) {
    let Some(beam) = beam else { return };
    let best = score.iter().copied().fold(NEG_INF, f64::max);
    if best == NEG_INF {
        return;
    }
    for s in score.iter_mut() {
        if *s < best - beam {
            *s = NEG_INF;
        }
    }
}

/// One decoded utterance; an empty `words` with `-inf` marks a failed decode.
#[derive(Debug, Clone, PartialEq)]
pub struct Hypothesis {
    pub utt_id: String,
    pub words: Vec<String>,
    pub path_logprob: f64,
}

impl Hypothesis {
    pub fn from_result(utt_id: impl Into<String>, result: Result<DecodeResult>) -> Result<Self> {
        let utt_id = utt_id.into();
        match result {
            Ok(r) => Ok(Hypothesis {
                utt_id,
                words: r.words,
                path_logprob: r.path_logprob,
            }),
            Err(Error::NoHypothesis) => Ok(Hypothesis {
                utt_id,
                words: Vec::new(),
                path_logprob: NEG_INF,
            }),
            Err(e) => Err(e),
        }
    }
}

/// `utt_id<TAB>word word ...<TAB>logprob` lines after `#` header lines.
pub fn write_hypotheses(hyps: &[Hypothesis], header: &[String]) -> String {
    let mut out = String::new();
    for h in header {
        let _ = writeln!(out, "# {h}");
    }
    for h in hyps {
        let _ = writeln!(
            out,
            "{}\t{}\t{:e}",
            h.utt_id,
            h.words.join(" "),
            h.path_logprob
        );
    }
    out
}

pub fn read_hypotheses(text: &str, source_name: &str) -> Result<Vec<Hypothesis>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let f: Vec<&str> = line.split('\t').collect();
        let [id, words, lp] = f[..] else {
            return Err(Error::parse(
                source_name,
                i + 1,
                "expected `utt_id<TAB>words<TAB>logprob`",
            ));
        };
        let path_logprob = lp
            .trim()
            .parse()
            .map_err(|_| Error::parse(source_name, i + 1, "bad log probability"))?;
        out.push(Hypothesis {
            utt_id: id.to_string(),
            words: words.split_whitespace().map(str::to_string).collect(),
            path_logprob,
        });
    }
    Ok(out)
}
