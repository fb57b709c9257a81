use std::fmt::Write as _;

use super::{Component, Gmm, HmmSet, HmmUnit};
use crate::{Error, Result};

const MAGIC: &str = "#lipmap-hmm v1";

fn floats(values: &[f64]) -> String {
    values
        .iter()
        .map(|v| format!("{v:e}"))
        .collect::<Vec<_>>()
        .join(" ")
}

/// Plain-text model file. Floats use the shortest round-trip notation, so
/// write, read, write reproduces the file byte for byte.
pub fn write_hmm_set(models: &HmmSet, header: &[String]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{MAGIC}");
    for h in header {
        let _ = writeln!(out, "# {h}");
    }
    let _ = writeln!(out, "dim {}", models.dim);
    let _ = writeln!(out, "states {}", models.n_states());
    let _ = writeln!(out, "floor {}", floats(&models.variance_floor));
    for unit in models.units.values() {
        let _ = writeln!(out, "unit {}", unit.label);
        for row in &unit.transitions {
            let _ = writeln!(out, "trans {}", floats(row));
        }
        for (s, g) in unit.states.iter().enumerate() {
            let _ = writeln!(out, "state {} {}", s + 1, g.components.len());
            for c in &g.components {
                let _ = writeln!(out, "weight {:e}", c.weight);
                let _ = writeln!(out, "mean {}", floats(&c.mean));
                let _ = writeln!(out, "var {}", floats(&c.var));
            }
        }
        let _ = writeln!(out, "end");
    }
    out
}

type Numbered<'a> =
    std::iter::Filter<std::iter::Enumerate<std::str::Lines<'a>>, fn(&(usize, &str)) -> bool>;

struct Lines<'a> {
    inner: std::iter::Peekable<Numbered<'a>>,
    source: &'a str,
}

fn keep(line: &(usize, &str)) -> bool {
    let l = line.1.trim();
    !l.is_empty() && !l.starts_with('#')
}

impl<'a> Lines<'a> {
    fn expect(&mut self, key: &str) -> Result<(usize, Vec<&'a str>)> {
        let (i, line) = self.inner.next().ok_or_else(|| {
            Error::parse(
                self.source,
                0,
                format!("unexpected end of file, wanted `{key}`"),
            )
        })?;
        let mut toks = line.split_whitespace();
        match toks.next() {
            Some(k) if k == key => Ok((i + 1, toks.collect())),
            other => Err(Error::parse(
                self.source,
                i + 1,
                format!("expected `{key}`, found {other:?}"),
            )),
        }
    }

    fn numbers<T: std::str::FromStr>(
        &self,
        line: usize,
        toks: &[&str],
        n: usize,
    ) -> Result<Vec<T>> {
        if toks.len() != n {
            return Err(Error::parse(
                self.source,
                line,
                format!("expected {n} values, found {}", toks.len()),
            ));
        }
        toks.iter()
            .map(|t| {
                t.parse()
                    .map_err(|_| Error::parse(self.source, line, format!("bad number `{t}`")))
            })
            .collect()
    }
}

pub fn read_hmm_set(text: &str, source_name: &str) -> Result<HmmSet> {
    if text.lines().next().map(str::trim) != Some(MAGIC) {
        return Err(Error::parse(
            source_name,
            1,
            format!("missing `{MAGIC}` header"),
        ));
    }
    let filter: fn(&(usize, &str)) -> bool = keep;
    let mut lines = Lines {
        inner: text.lines().enumerate().filter(filter).peekable(),
        source: source_name,
    };
    let (l, t) = lines.expect("dim")?;
    let dim: usize = lines.numbers(l, &t, 1)?[0];
    let (l, t) = lines.expect("states")?;
    let n_states: usize = lines.numbers(l, &t, 1)?[0];
    let (l, t) = lines.expect("floor")?;
    let floor: Vec<f64> = lines.numbers(l, &t, dim)?;

    let mut units = Vec::new();
    while lines.inner.peek().is_some() {
        let (l, t) = lines.expect("unit")?;
        let [label] = t[..] else {
            return Err(Error::parse(source_name, l, "expected `unit <label>`"));
        };
        let mut transitions = Vec::with_capacity(n_states + 2);
        for _ in 0..n_states + 2 {
            let (l, t) = lines.expect("trans")?;
            transitions.push(lines.numbers(l, &t, n_states + 2)?);
        }
        let mut states = Vec::with_capacity(n_states);
        for s in 0..n_states {
            let (l, t) = lines.expect("state")?;
            let head: Vec<usize> = lines.numbers(l, &t, 2)?;
            if head[0] != s + 1 {
                return Err(Error::parse(
                    source_name,
                    l,
                    format!("expected state {}", s + 1),
                ));
            }
            let mut comps = Vec::with_capacity(head[1]);
            for _ in 0..head[1] {
                let (l, t) = lines.expect("weight")?;
                let w: f64 = lines.numbers(l, &t, 1)?[0];
                let (l, t) = lines.expect("mean")?;
                let mean = lines.numbers(l, &t, dim)?;
                let (l, t) = lines.expect("var")?;
                let var: Vec<f64> = lines.numbers(l, &t, dim)?;
                if var.iter().any(|v| v.is_nan() || *v <= 0.0) {
                    return Err(Error::parse(source_name, l, "variances must be positive"));
                }
                comps.push(Component::new(w, mean, var));
            }
            states.push(Gmm::new(comps)?);
        }
        lines.expect("end")?;
        let unit = HmmUnit {
            label: label.to_string(),
            transitions,
            states,
        };
        unit.check_invariants(1e-9)?;
        units.push(unit);
    }
    HmmSet::new(units, dim, floor)
}
