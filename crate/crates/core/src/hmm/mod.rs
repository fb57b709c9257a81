//! Left-to-right HMMs with diagonal-covariance Gaussian mixture emissions.
//!
//! Every unit has `n` emitting states plus non-emitting entry and exit
//! states, stored as an `(n + 2) x (n + 2)` transition matrix. Emitting
//! states only loop on themselves or advance to the next state; the entry
//! state always moves to the first emitting state and the exit row is
//! absorbing. Units are concatenated into chains for embedded training,
//! forced alignment and decoding.

mod chain;
mod io;
mod train;

use std::collections::BTreeMap;

pub use chain::{forward_loglik, viterbi_align, ForcedAlignment};
pub use io::{read_hmm_set, write_hmm_set};
pub use train::{
    flat_start, grow_mixtures, reestimate, FlatStartConfig, IterationStats, TrainSchedule,
    TrainUtterance, TrainWarning, Trained,
};

pub(crate) use chain::Chain;

use crate::{Error, Result};

/// Mixture ceiling for emission GMMs.
pub const MAX_MIXTURES: usize = 5;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

pub(crate) fn log_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// One diagonal Gaussian mixture component.
#[derive(Debug, Clone, PartialEq)]
pub struct Component {
    weight: f64,
    mean: Vec<f64>,
    var: Vec<f64>,
    // log weight - (d ln 2pi + sum ln var) / 2
    log_norm: f64,
}

impl Component {
    pub fn new(weight: f64, mean: Vec<f64>, var: Vec<f64>) -> Self {
        debug_assert_eq!(mean.len(), var.len());
        let log_det: f64 = var.iter().map(|v| v.ln()).sum();
        let log_norm = weight.ln() - 0.5 * (mean.len() as f64 * LN_2PI + log_det);
        Component {
            weight,
            mean,
            var,
            log_norm,
        }
    }

    pub fn weight(&self) -> f64 {
        self.weight
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn var(&self) -> &[f64] {
        &self.var
    }

    /// `ln(weight) + ln N(x; mean, var)`.
    #[inline]
    pub fn weighted_log_density(&self, x: &[f64]) -> f64 {
        let mut q = 0.0;
        for ((xi, m), v) in x.iter().zip(&self.mean).zip(&self.var) {
            let d = xi - m;
            q += d * d / v;
        }
        self.log_norm - 0.5 * q
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gmm {
    components: Vec<Component>,
}

impl Gmm {
    pub fn new(components: Vec<Component>) -> Result<Self> {
        if components.is_empty() || components.len() > MAX_MIXTURES {
            return Err(Error::Invalid(format!(
                "a GMM needs 1..={MAX_MIXTURES} components, got {}",
                components.len()
            )));
        }
        Ok(Gmm { components })
    }

    pub fn single(mean: Vec<f64>, var: Vec<f64>) -> Self {
        Gmm {
            components: vec![Component::new(1.0, mean, var)],
        }
    }

    pub fn components(&self) -> &[Component] {
        &self.components
    }

    pub fn weight_sum(&self) -> f64 {
        self.components.iter().map(|c| c.weight).sum()
    }

    pub fn log_density(&self, x: &[f64]) -> f64 {
        match self.components.as_slice() {
            [only] => only.weighted_log_density(x),
            comps => comps.iter().fold(f64::NEG_INFINITY, |acc, c| {
                log_add(acc, c.weighted_log_density(x))
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HmmUnit {
    pub label: String,
    transitions: Vec<Vec<f64>>,
    states: Vec<Gmm>,
}

impl HmmUnit {
    /// Builds a unit from per-state self-loop probabilities; the remaining
    /// mass of each state advances to the next state (or exits).
    pub fn new(label: impl Into<String>, self_loops: &[f64], states: Vec<Gmm>) -> Result<Self> {
        let n = states.len();
        if n == 0 || self_loops.len() != n {
            return Err(Error::Invalid(
                "a unit needs one self-loop probability per state".into(),
            ));
        }
        let mut t = vec![vec![0.0; n + 2]; n + 2];
        t[0][1] = 1.0;
        for (i, &p) in self_loops.iter().enumerate() {
            if !(0.0..1.0).contains(&p) {
                return Err(Error::Invalid(format!(
                    "self-loop probability {p} outside [0, 1)"
                )));
            }
            t[i + 1][i + 1] = p;
            t[i + 1][i + 2] = 1.0 - p;
        }
        t[n + 1][n + 1] = 1.0;
        Ok(HmmUnit {
            label: label.into(),
            transitions: t,
            states,
        })
    }

    pub fn n_states(&self) -> usize {
        self.states.len()
    }

    pub fn states(&self) -> &[Gmm] {
        &self.states
    }

    pub fn transitions(&self) -> &[Vec<f64>] {
        &self.transitions
    }

    /// Self-loop probability of emitting state `s` (0-based).
    pub fn self_loop(&self, s: usize) -> f64 {
        self.transitions[s + 1][s + 1]
    }

    /// Probability of leaving emitting state `s` forward (or exiting, for the last).
    pub fn advance(&self, s: usize) -> f64 {
        self.transitions[s + 1][s + 2]
    }

    pub fn mixtures(&self) -> usize {
        self.states
            .iter()
            .map(|g| g.components.len())
            .max()
            .unwrap_or(0)
    }

    /// Row sums, left-to-right shape and mixture weight sums within `tol`.
    pub fn check_invariants(&self, tol: f64) -> Result<()> {
        let n = self.transitions.len();
        for (i, row) in self.transitions.iter().enumerate() {
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > tol {
                return Err(Error::Invalid(format!(
                    "{}: transition row {i} sums to {sum}",
                    self.label
                )));
            }
            for (j, &p) in row.iter().enumerate() {
                let allowed = if i == 0 {
                    j == 1
                } else if i == n - 1 {
                    j == n - 1
                } else {
                    j == i || j == i + 1
                };
                if p < 0.0 || (!allowed && p != 0.0) {
                    return Err(Error::Invalid(format!(
                        "{}: transition {i}->{j} breaks the left-to-right topology",
                        self.label
                    )));
                }
            }
        }
        for (s, g) in self.states.iter().enumerate() {
            let w = g.weight_sum();
            if (w - 1.0).abs() > tol {
                return Err(Error::Invalid(format!(
                    "{}: state {s} weights sum to {w}",
                    self.label
                )));
            }
        }
        Ok(())
    }
}

/// A set of units sharing feature dimension, topology and variance floor.
#[derive(Debug, Clone, PartialEq)]
pub struct HmmSet {
    pub units: BTreeMap<String, HmmUnit>,
    pub dim: usize,
    pub variance_floor: Vec<f64>,
}

impl HmmSet {
    pub fn new(units: Vec<HmmUnit>, dim: usize, variance_floor: Vec<f64>) -> Result<Self> {
        if variance_floor.len() != dim || variance_floor.iter().any(|v| v.is_nan() || *v <= 0.0) {
            return Err(Error::Invalid(
                "variance floor must be positive in every dimension".into(),
            ));
        }
        let n_states = units.first().map(HmmUnit::n_states);
        let mut map = BTreeMap::new();
        for u in units {
            if Some(u.n_states()) != n_states {
                return Err(Error::Invalid(format!(
                    "unit {} has a different state count",
                    u.label
                )));
            }
            for g in &u.states {
                for c in &g.components {
                    if c.mean.len() != dim || c.var.len() != dim {
                        return Err(Error::Invalid(format!(
                            "unit {} has the wrong dimension",
                            u.label
                        )));
                    }
                }
            }
            if let Some(prev) = map.insert(u.label.clone(), u) {
                return Err(Error::Invalid(format!("duplicate unit {}", prev.label)));
            }
        }
        Ok(HmmSet {
            units: map,
            dim,
            variance_floor,
        })
    }

    pub fn unit(&self, label: &str) -> Result<&HmmUnit> {
        self.units
            .get(label)
            .ok_or_else(|| Error::UnknownUnit(label.to_string()))
    }

    pub fn n_states(&self) -> usize {
        self.units.values().next().map_or(0, HmmUnit::n_states)
    }

    pub fn check_invariants(&self, tol: f64) -> Result<()> {
        for u in self.units.values() {
            u.check_invariants(tol)?;
            for g in &u.states {
                for c in &g.components {
                    if c.var.iter().zip(&self.variance_floor).any(|(v, f)| v < f) {
                        return Err(Error::Invalid(format!("{}: variance below floor", u.label)));
                    }
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_gaussian_at_mean() {
        let c = Component::new(1.0, vec![1.0, -2.0], vec![0.5, 2.0]);
        let expected = -0.5 * (2.0 * LN_2PI + 0.5f64.ln() + 2.0f64.ln());
        assert!((c.weighted_log_density(&[1.0, -2.0]) - expected).abs() < 1e-14);
    }

    #[test]
    fn mixture_density_is_weighted_sum() {
        let g = Gmm::new(vec![
            Component::new(0.3, vec![0.0], vec![1.0]),
            Component::new(0.7, vec![2.0], vec![0.5]),
        ])
        .unwrap();
        let x = 0.7;
        let n = |m: f64, v: f64| {
            (-(x - m) * (x - m) / (2.0 * v)).exp() / (2.0 * std::f64::consts::PI * v).sqrt()
        };
        let expected = (0.3 * n(0.0, 1.0) + 0.7 * n(2.0, 0.5)).ln();
        assert!((g.log_density(&[x]) - expected).abs() < 1e-13);
    }

    #[test]
    fn unit_topology_invariants() {
        let u = HmmUnit::new(
            "a",
            &[0.6, 0.5, 0.1],
            vec![Gmm::single(vec![0.0], vec![1.0]); 3],
        )
        .unwrap();
        u.check_invariants(1e-12).unwrap();
        assert_eq!(u.transitions().len(), 5);
        assert_eq!(u.advance(2), 0.9);
        assert!(HmmUnit::new("a", &[1.0], vec![Gmm::single(vec![0.0], vec![1.0])]).is_err());
    }

    #[test]
    fn log_add_handles_infinities() {
        assert_eq!(log_add(f64::NEG_INFINITY, 1.0), 1.0);
        assert!((log_add(0.0, 0.0) - 2f64.ln()).abs() < 1e-15);
    }
}
