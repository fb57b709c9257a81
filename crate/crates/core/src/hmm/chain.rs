use std::collections::HashMap;

use ndarray::ArrayView2;

use super::{log_add, Gmm, HmmSet};
use crate::{Error, Result, Span};

const NEG_INF: f64 = f64::NEG_INFINITY;

/// Units of a transcript concatenated into one linear state chain.
pub(crate) struct Chain<'a> {
    pub gmms: Vec<&'a Gmm>,
    pub log_self: Vec<f64>,
    /// Log probability of advancing; for a unit's last state this is its exit.
    pub log_next: Vec<f64>,
    /// Transcript position of the unit each chain state belongs to.
    pub unit_pos: Vec<usize>,
    /// Emitting-state index within its unit.
    pub state: Vec<usize>,
    distinct: Vec<usize>,
    n_distinct: usize,
}

impl<'a> Chain<'a> {
    pub fn new<S: AsRef<str>>(models: &'a HmmSet, labels: &[S]) -> Result<Self> {
        let mut chain = Chain {
            gmms: Vec::new(),
            log_self: Vec::new(),
            log_next: Vec::new(),
            unit_pos: Vec::new(),
            state: Vec::new(),
            distinct: Vec::new(),
            n_distinct: 0,
        };
        let mut ids: HashMap<(&str, usize), usize> = HashMap::new();
        for (k, label) in labels.iter().enumerate() {
            let unit = models.unit(label.as_ref())?;
            for s in 0..unit.n_states() {
                chain.gmms.push(&unit.states()[s]);
                chain.log_self.push(unit.self_loop(s).ln());
                chain.log_next.push(unit.advance(s).ln());
                chain.unit_pos.push(k);
                chain.state.push(s);
                let next_id = ids.len();
                chain
                    .distinct
                    .push(*ids.entry((unit.label.as_str(), s)).or_insert(next_id));
            }
        }
        chain.n_distinct = ids.len();
        Ok(chain)
    }

    pub fn len(&self) -> usize {
        self.gmms.len()
    }

    pub fn check_fits(&self, frames: usize) -> Result<()> {
        if frames < self.len() || self.len() == 0 {
            return Err(Error::TooShort {
                frames,
                states: self.len(),
            });
        }
        Ok(())
    }

    /// Log emission densities for every frame and distinct chain state.
    pub fn emissions(&self, obs: ArrayView2<f64>) -> EmissionTable {
        let mut first_pos = vec![usize::MAX; self.n_distinct];
        for (pos, &d) in self.distinct.iter().enumerate() {
            if first_pos[d] == usize::MAX {
                first_pos[d] = pos;
            }
        }
        let t_len = obs.nrows();
        let mut data = Vec::with_capacity(t_len * self.n_distinct);
        let mut scratch = Vec::new();
        for row in obs.rows() {
            let x: &[f64] = match row.as_slice() {
                Some(s) => s,
                None => {
                    scratch.clear();
                    scratch.extend(row.iter().copied());
                    &scratch
                }
            };
            for &pos in &first_pos {
                data.push(self.gmms[pos].log_density(x));
            }
        }
        EmissionTable {
            width: self.n_distinct,
            distinct: self.distinct.clone(),
            data,
        }
    }

    /// Forward log probabilities, `T x L` row-major, and the total log-likelihood.
    pub fn forward(&self, em: &EmissionTable, frames: usize) -> (Vec<f64>, f64) {
        let l = self.len();
        let mut alpha = vec![NEG_INF; frames * l];
        alpha[0] = em.get(0, 0);
        for t in 1..frames {
            let (prev, cur) = alpha.split_at_mut(t * l);
            let prev = &prev[(t - 1) * l..];
            let cur = &mut cur[..l];
            // states beyond t cannot be reached in t+1 frames
            for j in 0..l.min(t + 1) {
                let stay = prev[j] + self.log_self[j];
                let adv = if j > 0 {
                    prev[j - 1] + self.log_next[j - 1]
                } else {
                    NEG_INF
                };
                let v = log_add(stay, adv);
                cur[j] = if v == NEG_INF {
                    NEG_INF
                } else {
                    v + em.get(t, j)
                };
            }
        }
        let ll = alpha[(frames - 1) * l + l - 1] + self.log_next[l - 1];
        (alpha, ll)
    }

    pub fn backward(&self, em: &EmissionTable, frames: usize) -> Vec<f64> {
        let l = self.len();
        let mut beta = vec![NEG_INF; frames * l];
        beta[(frames - 1) * l + l - 1] = self.log_next[l - 1];
        for t in (0..frames - 1).rev() {
            let (cur, next) = beta.split_at_mut((t + 1) * l);
            let cur = &mut cur[t * l..];
            let next = &next[..l];
            for j in 0..l {
                let stay = self.log_self[j] + em.get(t + 1, j) + next[j];
                let adv = if j + 1 < l {
                    self.log_next[j] + em.get(t + 1, j + 1) + next[j + 1]
                } else {
                    NEG_INF
                };
                cur[j] = log_add(stay, adv);
            }
        }
        beta
    }

    /// Best state path as chain positions per frame, with its log score.
    pub fn viterbi(&self, em: &EmissionTable, frames: usize) -> (Vec<usize>, f64) {
        let l = self.len();
        let mut delta = vec![NEG_INF; l];
        let mut next = vec![NEG_INF; l];
        let mut advanced = vec![false; frames * l];
        delta[0] = em.get(0, 0);
        for t in 1..frames {
            for j in 0..l {
                let stay = delta[j] + self.log_self[j];
                let adv = if j > 0 {
                    delta[j - 1] + self.log_next[j - 1]
                } else {
                    NEG_INF
                };
                let (best, from_prev) = if adv > stay {
                    (adv, true)
                } else {
                    (stay, false)
                };
                advanced[t * l + j] = from_prev;
                next[j] = if best == NEG_INF {
                    NEG_INF
                } else {
                    best + em.get(t, j)
                };
            }
            std::mem::swap(&mut delta, &mut next);
        }
        let score = delta[l - 1] + self.log_next[l - 1];
        let mut path = vec![0; frames];
        let mut j = l - 1;
        for t in (0..frames).rev() {
            path[t] = j;
            if t > 0 && advanced[t * l + j] {
                j -= 1;
            }
        }
        (path, score)
    }
}

pub(crate) struct EmissionTable {
    width: usize,
    distinct: Vec<usize>,
    data: Vec<f64>,
}

impl EmissionTable {
    #[inline]
    pub fn get(&self, t: usize, pos: usize) -> f64 {
        self.data[t * self.width + self.distinct[pos]]
    }
}

/// `ln p(obs | chain)` for the units in `labels`, summed over all state paths.
pub fn forward_loglik<S: AsRef<str>>(
    models: &HmmSet,
    labels: &[S],
    obs: ArrayView2<f64>,
) -> Result<f64> {
    let chain = Chain::new(models, labels)?;
    chain.check_fits(obs.nrows())?;
    let em = chain.emissions(obs);
    Ok(chain.forward(&em, obs.nrows()).1)
}

/// Unit boundaries from the best state path constrained to a transcript.
#[derive(Debug, Clone, PartialEq)]
pub struct ForcedAlignment {
    pub spans: Vec<Span>,
    pub log_score: f64,
}

pub fn viterbi_align<S: AsRef<str>>(
    models: &HmmSet,
    labels: &[S],
    obs: ArrayView2<f64>,
) -> Result<ForcedAlignment> {
    let chain = Chain::new(models, labels)?;
    let frames = obs.nrows();
    chain.check_fits(frames)?;
    let em = chain.emissions(obs);
    let (path, log_score) = chain.viterbi(&em, frames);
    if log_score == NEG_INF {
        return Err(Error::TooShort {
            frames,
            states: chain.len(),
        });
    }
    let mut spans: Vec<Span> = Vec::with_capacity(labels.len());
    for (t, &pos) in path.iter().enumerate() {
        let k = chain.unit_pos[pos];
        if spans.len() == k + 1 {
            spans[k].end = t + 1;
        } else {
            spans.push(Span::new(labels[k].as_ref(), t, t + 1));
        }
    }
    Ok(ForcedAlignment { spans, log_score })
}
