use std::collections::BTreeMap;

use ndarray::{s, ArrayView2};
use rayon::prelude::*;

use super::{Chain, Component, Gmm, HmmSet, HmmUnit, MAX_MIXTURES};
use crate::{Error, Result, Span};

/// Mixture weights below this are treated as defunct and dropped.
pub const MIN_MIX_WEIGHT: f64 = 1e-5;
/// Absolute variance used for dimensions with no spread at all.
pub const MIN_VARIANCE: f64 = 1e-6;
const MIN_OCCUPANCY: f64 = 1e-10;
const GAMMA_CUTOFF: f64 = 1e-12;

/// One training utterance labelled with unit symbols.
#[derive(Debug, Clone)]
pub struct TrainUtterance<'a> {
    pub id: &'a str,
    pub labels: Vec<String>,
    pub obs: ArrayView2<'a, f64>,
}

/// Flat-start topology and floor settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlatStartConfig {
    pub n_states: usize,
    /// Variance floor as a fraction of the global per-dimension variance.
    pub floor_fraction: f64,
    pub self_loop: f64,
}

impl Default for FlatStartConfig {
    fn default() -> Self {
        FlatStartConfig {
            n_states: 3,
            floor_fraction: 0.01,
            self_loop: 0.6,
        }
    }
}

/// Re-estimation schedule: iteration count, mixture growth points and the
/// forced-alignment pass.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrainSchedule {
    pub iterations: usize,
    /// Realign transcripts after this (1-based) iteration.
    pub align_after: Option<usize>,
    /// Realign after every iteration from `align_after` on, instead of once.
    pub realign_every: bool,
    /// `(after_iteration, component_target)` pairs.
    pub mixture_steps: Vec<(usize, usize)>,
}

impl Default for TrainSchedule {
    fn default() -> Self {
        TrainSchedule {
            iterations: 11,
            align_after: Some(7),
            realign_every: false,
            mixture_steps: vec![(2, 2), (4, 4), (6, 5)],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TrainWarning {
    ZeroVariance {
        dim: usize,
    },
    FrozenUnit {
        label: String,
        iteration: usize,
    },
    DroppedComponent {
        label: String,
        state: usize,
        iteration: usize,
    },
    SkippedUtterance {
        id: String,
        iteration: usize,
        reason: String,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationStats {
    /// 1-based.
    pub iteration: usize,
    /// Total training log-likelihood under the models entering this iteration.
    pub log_likelihood: f64,
    pub frames: usize,
    /// Increments on every mixture growth or realignment; EM only guarantees
    /// monotone likelihood within one phase.
    pub phase: usize,
    pub mixtures: usize,
    pub skipped: usize,
}

#[derive(Debug, Clone)]
pub struct Trained {
    pub models: HmmSet,
    pub log: Vec<IterationStats>,
    pub warnings: Vec<TrainWarning>,
}

/// Identical single-Gaussian units initialized from the pooled data mean and
/// variance. The variance floor is `floor_fraction` of the global variance.
pub fn flat_start<I, S>(
    train: &[TrainUtterance<'_>],
    labels: I,
    config: &FlatStartConfig,
) -> Result<(HmmSet, Vec<TrainWarning>)>
where
    I: IntoIterator<Item = S>,
    S: Into<String>,
{
    let dim = train
        .first()
        .map(|u| u.obs.ncols())
        .ok_or_else(|| Error::Invalid("flat start needs at least one training utterance".into()))?;
    let frames: usize = train.iter().map(|u| u.obs.nrows()).sum();
    if frames == 0 || dim == 0 {
        return Err(Error::Invalid("flat start needs at least one frame".into()));
    }
    if config.n_states == 0 {
        return Err(Error::Invalid(
            "units need at least one emitting state".into(),
        ));
    }
    let mut sorted: Vec<&TrainUtterance<'_>> = train.iter().collect();
    sorted.sort_by(|a, b| a.id.cmp(b.id));
    let mut mean = vec![0.0; dim];
    for u in &sorted {
        if u.obs.ncols() != dim {
            return Err(Error::Invalid(format!(
                "utterance {} has the wrong dimension",
                u.id
            )));
        }
        for row in u.obs.rows() {
            for (m, x) in mean.iter_mut().zip(row) {
                *m += x;
            }
        }
    }
    mean.iter_mut().for_each(|m| *m /= frames as f64);
    let mut var = vec![0.0; dim];
    for u in &sorted {
        for row in u.obs.rows() {
            for ((v, x), m) in var.iter_mut().zip(row).zip(&mean) {
                *v += (x - m) * (x - m);
            }
        }
    }
    var.iter_mut().for_each(|v| *v /= frames as f64);

    let mut warnings = Vec::new();
    let mut floor = Vec::with_capacity(dim);
    for (k, v) in var.iter_mut().enumerate() {
        if *v <= 0.0 {
            log::warn!("feature dimension {k} has zero variance; flooring at {MIN_VARIANCE}");
            warnings.push(TrainWarning::ZeroVariance { dim: k });
            floor.push(MIN_VARIANCE);
            *v = MIN_VARIANCE;
        } else {
            floor.push(config.floor_fraction * *v);
        }
    }

    let self_loops = vec![config.self_loop; config.n_states];
    let mut labels: Vec<String> = labels.into_iter().map(Into::into).collect();
    labels.sort();
    labels.dedup();
    let units = labels
        .into_iter()
        .map(|l| {
            let states = vec![Gmm::single(mean.clone(), var.clone()); config.n_states];
            HmmUnit::new(l, &self_loops, states)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((HmmSet::new(units, dim, floor)?, warnings))
}

/// Splits the heaviest component of every state until each has `target`
/// components. Each split halves the weight and offsets the mean by
/// +/-0.2 standard deviations.
pub fn grow_mixtures(unit: &HmmUnit, target: usize) -> Result<HmmUnit> {
    if target > MAX_MIXTURES {
        return Err(Error::MixtureCeiling(target));
    }
    let mut grown = unit.clone();
    for (s, gmm) in grown.states.iter_mut().enumerate() {
        let comps = &mut gmm.components;
        if comps.len() > target {
            return Err(Error::Invalid(format!(
                "{} state {s} already has {} components, more than {target}",
                unit.label,
                comps.len()
            )));
        }
        while comps.len() < target {
            let mut k = 0;
            for (i, c) in comps.iter().enumerate() {
                if c.weight > comps[k].weight {
                    k = i;
                }
            }
            let c = comps[k].clone();
            let half = c.weight / 2.0;
            let offset: Vec<f64> = c.var.iter().map(|v| 0.2 * v.sqrt()).collect();
            let up: Vec<f64> = c.mean.iter().zip(&offset).map(|(m, o)| m + o).collect();
            let down: Vec<f64> = c.mean.iter().zip(&offset).map(|(m, o)| m - o).collect();
            comps[k] = Component::new(half, up, c.var.clone());
            comps.push(Component::new(half, down, c.var));
        }
    }
    Ok(grown)
}

#[derive(Debug, Clone)]
struct CompAcc {
    occ: f64,
    sum: Vec<f64>,
    sumsq: Vec<f64>,
}

#[derive(Debug, Clone)]
struct StateAcc {
    occ: f64,
    comps: Vec<CompAcc>,
    stay: f64,
    leave: f64,
}

#[derive(Debug, Clone, Default)]
struct Accumulator {
    units: BTreeMap<String, Vec<StateAcc>>,
    log_likelihood: f64,
    frames: usize,
}

impl Accumulator {
    fn unit_slot(&mut self, unit: &HmmUnit, dim: usize) -> &mut Vec<StateAcc> {
        self.units.entry(unit.label.clone()).or_insert_with(|| {
            unit.states
                .iter()
                .map(|g| StateAcc {
                    occ: 0.0,
                    comps: vec![
                        CompAcc {
                            occ: 0.0,
                            sum: vec![0.0; dim],
                            sumsq: vec![0.0; dim],
                        };
                        g.components.len()
                    ],
                    stay: 0.0,
                    leave: 0.0,
                })
                .collect()
        })
    }

    fn merge(&mut self, other: Accumulator) {
        self.log_likelihood += other.log_likelihood;
        self.frames += other.frames;
        for (label, states) in other.units {
            match self.units.get_mut(&label) {
                None => {
                    self.units.insert(label, states);
                }
                Some(mine) => {
                    for (a, b) in mine.iter_mut().zip(states) {
                        a.occ += b.occ;
                        a.stay += b.stay;
                        a.leave += b.leave;
                        for (ca, cb) in a.comps.iter_mut().zip(b.comps) {
                            ca.occ += cb.occ;
                            ca.sum.iter_mut().zip(&cb.sum).for_each(|(x, y)| *x += y);
                            ca.sumsq
                                .iter_mut()
                                .zip(&cb.sumsq)
                                .for_each(|(x, y)| *x += y);
                        }
                    }
                }
            }
        }
    }

    /// Forward-backward statistics of one segment against its unit chain.
    fn add_segment(
        &mut self,
        models: &HmmSet,
        labels: &[String],
        obs: ArrayView2<f64>,
    ) -> Result<()> {
        let chain = Chain::new(models, labels)?;
        let frames = obs.nrows();
        chain.check_fits(frames)?;
        let em = chain.emissions(obs);
        let (alpha, ll) = chain.forward(&em, frames);
        if !ll.is_finite() {
            return Err(Error::TooShort {
                frames,
                states: chain.len(),
            });
        }
        let beta = chain.backward(&em, frames);
        let l = chain.len();
        let dim = models.dim;
        let mut terms = Vec::with_capacity(MAX_MIXTURES);
        for j in 0..l {
            let unit = models.unit(&labels[chain.unit_pos[j]])?;
            let acc = &mut self.unit_slot(unit, dim)[chain.state[j]];
            let gmm = chain.gmms[j];
            for t in 0..frames {
                let a = alpha[t * l + j];
                if a == f64::NEG_INFINITY {
                    continue;
                }
                if t + 1 < frames {
                    acc.stay += (a + chain.log_self[j] + em.get(t + 1, j) + beta[(t + 1) * l + j]
                        - ll)
                        .exp();
                    if j + 1 < l {
                        acc.leave += (a
                            + chain.log_next[j]
                            + em.get(t + 1, j + 1)
                            + beta[(t + 1) * l + j + 1]
                            - ll)
                            .exp();
                    }
                } else if j + 1 == l {
                    acc.leave += (a + beta[t * l + j] - ll).exp();
                }
                let gamma = (a + beta[t * l + j] - ll).exp();
                if gamma < GAMMA_CUTOFF {
                    continue;
                }
                acc.occ += gamma;
                let row = obs.row(t);
                let owned;
                let x: &[f64] = match row.as_slice() {
                    Some(x) => x,
                    None => {
                        owned = row.to_vec();
                        &owned
                    }
                };
                let comps = gmm.components();
                terms.clear();
                if comps.len() == 1 {
                    terms.push(gamma);
                } else {
                    let lb = em.get(t, j);
                    terms.extend(
                        comps
                            .iter()
                            .map(|c| gamma * (c.weighted_log_density(x) - lb).exp()),
                    );
                }
                for (ca, &post) in acc.comps.iter_mut().zip(&terms) {
                    ca.occ += post;
                    for ((s, sq), xi) in ca.sum.iter_mut().zip(ca.sumsq.iter_mut()).zip(x) {
                        *s += post * xi;
                        *sq += post * xi * xi;
                    }
                }
            }
        }
        self.log_likelihood += ll;
        self.frames += frames;
        Ok(())
    }
}

fn maximize(
    models: &HmmSet,
    acc: &Accumulator,
    iteration: usize,
    warnings: &mut Vec<TrainWarning>,
) -> HmmSet {
    let mut next = models.clone();
    for (label, unit) in next.units.iter_mut() {
        let stats = match acc.units.get(label) {
            Some(s) if s.iter().map(|st| st.occ).sum::<f64>() > MIN_OCCUPANCY => s,
            _ => {
                log::warn!(
                    "unit {label} has no occupancy in iteration {iteration}; parameters frozen"
                );
                warnings.push(TrainWarning::FrozenUnit {
                    label: label.clone(),
                    iteration,
                });
                continue;
            }
        };
        for (s, st) in stats.iter().enumerate() {
            if st.occ > MIN_OCCUPANCY {
                let mut comps = Vec::with_capacity(st.comps.len());
                for ca in &st.comps {
                    let w = ca.occ / st.occ;
                    if w < MIN_MIX_WEIGHT {
                        log::warn!(
                            "dropping defunct component of {label} state {s} (weight {w:e})"
                        );
                        warnings.push(TrainWarning::DroppedComponent {
                            label: label.clone(),
                            state: s,
                            iteration,
                        });
                        continue;
                    }
                    let mean: Vec<f64> = ca.sum.iter().map(|x| x / ca.occ).collect();
                    let var: Vec<f64> = ca
                        .sumsq
                        .iter()
                        .zip(&mean)
                        .zip(&models.variance_floor)
                        .map(|((sq, m), f)| (sq / ca.occ - m * m).max(*f))
                        .collect();
                    comps.push((w, mean, var));
                }
                let total: f64 = comps.iter().map(|c| c.0).sum();
                unit.states[s].components = comps
                    .into_iter()
                    .map(|(w, m, v)| Component::new(w / total, m, v))
                    .collect();
            }
            let out = st.stay + st.leave;
            if out > MIN_OCCUPANCY {
                let stay = st.stay / out;
                unit.transitions[s + 1][s + 1] = stay;
                unit.transitions[s + 1][s + 2] = 1.0 - stay;
            }
        }
    }
    next
}

enum Basis {
    Embedded,
    /// Per-utterance unit spans from forced alignment; `None` when alignment failed.
    Aligned(Vec<Option<Vec<Span>>>),
}

/// Embedded Baum-Welch re-estimation following `schedule`.
///
/// Utterances are processed in id order regardless of input order, so the
/// result does not depend on how `train` is arranged.
pub fn reestimate(
    models: &HmmSet,
    train: &[TrainUtterance<'_>],
    schedule: &TrainSchedule,
) -> Result<Trained> {
    let mut order: Vec<&TrainUtterance> = train.iter().collect();
    order.sort_by(|a, b| a.id.cmp(b.id));
    for u in &order {
        for l in &u.labels {
            models.unit(l)?;
        }
    }
    let mut models = models.clone();
    let mut log = Vec::with_capacity(schedule.iterations);
    let mut warnings = Vec::new();
    let mut basis = Basis::Embedded;
    let mut phase = 0;

    for iteration in 1..=schedule.iterations {
        let partials: Vec<std::result::Result<Accumulator, (usize, Error)>> = order
            .par_iter()
            .enumerate()
            .map(|(i, u)| {
                let mut acc = Accumulator::default();
                let outcome = match &basis {
                    Basis::Embedded => acc.add_segment(&models, &u.labels, u.obs),
                    Basis::Aligned(spans) => match &spans[i] {
                        None => Err(Error::Invalid("no forced alignment".into())),
                        Some(spans) => spans.iter().try_for_each(|sp| {
                            acc.add_segment(
                                &models,
                                std::slice::from_ref(&sp.label),
                                u.obs.slice(s![sp.start..sp.end, ..]),
                            )
                        }),
                    },
                };
                outcome.map(|_| acc).map_err(|e| (i, e))
            })
            .collect();
        let mut total = Accumulator::default();
        let mut skipped = 0;
        for p in partials {
            match p {
                Ok(acc) => total.merge(acc),
                Err((_, e @ Error::UnknownUnit(_))) => return Err(e),
                Err((i, e)) => {
                    skipped += 1;
                    warnings.push(TrainWarning::SkippedUtterance {
                        id: order[i].id.to_string(),
                        iteration,
                        reason: e.to_string(),
                    });
                }
            }
        }
        if total.frames == 0 {
            return Err(Error::Invalid(format!(
                "no usable training data in iteration {iteration}"
            )));
        }
        log.push(IterationStats {
            iteration,
            log_likelihood: total.log_likelihood,
            frames: total.frames,
            phase,
            mixtures: models
                .units
                .values()
                .map(HmmUnit::mixtures)
                .max()
                .unwrap_or(0),
            skipped,
        });
        models = maximize(&models, &total, iteration, &mut warnings);

        if iteration == schedule.iterations {
            break;
        }
        if let Some(&(_, target)) = schedule
            .mixture_steps
            .iter()
            .find(|(after, _)| *after == iteration)
        {
            for unit in models.units.values_mut() {
                *unit = grow_mixtures(unit, target)?;
            }
            phase += 1;
        }
        let realign = match schedule.align_after {
            Some(a) => iteration == a || (schedule.realign_every && iteration > a),
            None => false,
        };
        if realign {
            let spans: Vec<Option<Vec<Span>>> = order
                .par_iter()
                .map(|u| {
                    super::viterbi_align(&models, &u.labels, u.obs)
                        .ok()
                        .map(|fa| fa.spans)
                })
                .collect();
            basis = Basis::Aligned(spans);
            phase += 1;
        }
    }
    Ok(Trained {
        models,
        log,
        warnings,
    })
}
