//! Add-one smoothed bigram networks over words (or units).

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use crate::{Error, Result};

pub const SENT_START: &str = "<s>";
pub const SENT_END: &str = "</s>";

/// Bigram log probabilities with sentence-start and sentence-end markers.
///
/// Contexts are `<s>` followed by the vocabulary; successors are the
/// vocabulary followed by `</s>`. Every context row is a proper distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct Bigram {
    vocab: Vec<String>,
    index: BTreeMap<String, usize>,
    // (V + 1) x (V + 1), row = context, col = successor
    logprob: Vec<f64>,
}

impl Bigram {
    fn empty(vocab: BTreeSet<String>) -> Result<Self> {
        if vocab.is_empty() {
            return Err(Error::Invalid("bigram vocabulary is empty".into()));
        }
        if vocab.contains(SENT_START) || vocab.contains(SENT_END) {
            return Err(Error::Invalid(
                "sentence markers cannot be vocabulary words".into(),
            ));
        }
        let vocab: Vec<String> = vocab.into_iter().collect();
        let index = vocab
            .iter()
            .enumerate()
            .map(|(i, w)| (w.clone(), i))
            .collect();
        let n = vocab.len() + 1;
        Ok(Bigram {
            vocab,
            index,
            logprob: vec![0.0; n * n],
        })
    }

    /// Every successor equally likely in every context (a free loop).
    pub fn uniform<I, S>(vocab: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut b = Bigram::empty(vocab.into_iter().map(Into::into).collect())?;
        let n = b.vocab.len() + 1;
        let lp = -(n as f64).ln();
        b.logprob.iter_mut().for_each(|x| *x = lp);
        Ok(b)
    }

    pub fn vocab(&self) -> &[String] {
        &self.vocab
    }

    pub fn index_of(&self, word: &str) -> Option<usize> {
        self.index.get(word).copied()
    }

    fn width(&self) -> usize {
        self.vocab.len() + 1
    }

    /// `ln p(word | <s>)` by word index.
    pub fn start(&self, word: usize) -> f64 {
        self.logprob[word]
    }

    /// `ln p(word | prev)` by word indices.
    pub fn transition(&self, prev: usize, word: usize) -> f64 {
        self.logprob[(prev + 1) * self.width() + word]
    }

    /// `ln p(</s> | prev)`.
    pub fn end(&self, prev: usize) -> f64 {
        self.logprob[(prev + 1) * self.width() + self.vocab.len()]
    }

    /// `ln p(</s> | <s>)`, the empty sentence.
    pub fn empty_sentence(&self) -> f64 {
        self.logprob[self.vocab.len()]
    }

    fn idx(&self, word: &str) -> Result<usize> {
        self.index_of(word)
            .ok_or_else(|| Error::OutOfVocabulary(word.to_string()))
    }

    /// Log probability of a token pair, where `pred` may be `<s>` and `succ` may be `</s>`.
    pub fn logprob(&self, pred: &str, succ: &str) -> Result<f64> {
        let row = if pred == SENT_START {
            0
        } else {
            self.idx(pred)? + 1
        };
        let col = if succ == SENT_END {
            self.vocab.len()
        } else {
            self.idx(succ)?
        };
        Ok(self.logprob[row * self.width() + col])
    }

    /// Row sums of probabilities, one per context (`<s>` first).
    pub fn row_sums(&self) -> Vec<f64> {
        self.logprob
            .chunks(self.width())
            .map(|row| row.iter().map(|lp| lp.exp()).sum())
            .collect()
    }

    /// `#bigram v=<size>` followed by `pred succ logprob` lines.
    pub fn to_text(&self, header: &[String]) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "#bigram v={}", self.vocab.len());
        for h in header {
            let _ = writeln!(out, "# {h}");
        }
        let contexts = std::iter::once(SENT_START).chain(self.vocab.iter().map(String::as_str));
        for (r, pred) in contexts.enumerate() {
            let succs = self
                .vocab
                .iter()
                .map(String::as_str)
                .chain(std::iter::once(SENT_END));
            for (c, succ) in succs.enumerate() {
                let _ = writeln!(
                    out,
                    "{pred} {succ} {:e}",
                    self.logprob[r * self.width() + c]
                );
            }
        }
        out
    }

    pub fn from_text(text: &str, source_name: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let size: usize = lines
            .next()
            .and_then(|(_, l)| l.trim().strip_prefix("#bigram v="))
            .and_then(|v| v.trim().parse().ok())
            .ok_or_else(|| Error::parse(source_name, 1, "missing `#bigram v=<size>` header"))?;
        let mut entries = Vec::new();
        let mut vocab = BTreeSet::new();
        for (i, line) in lines {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let f: Vec<&str> = line.split_whitespace().collect();
            let [pred, succ, lp] = f[..] else {
                return Err(Error::parse(
                    source_name,
                    i + 1,
                    "expected `pred succ logprob`",
                ));
            };
            let lp: f64 = lp
                .parse()
                .map_err(|_| Error::parse(source_name, i + 1, "bad log probability"))?;
            for w in [pred, succ] {
                if w != SENT_START && w != SENT_END {
                    vocab.insert(w.to_string());
                }
            }
            entries.push((pred.to_string(), succ.to_string(), lp, i + 1));
        }
        if vocab.len() != size {
            return Err(Error::parse(
                source_name,
                1,
                format!("header declares {size} words, file uses {}", vocab.len()),
            ));
        }
        let mut b = Bigram::empty(vocab)?;
        let mut seen = vec![false; b.logprob.len()];
        for (pred, succ, lp, line) in entries {
            let row = if pred == SENT_START {
                0
            } else if pred == SENT_END {
                return Err(Error::parse(
                    source_name,
                    line,
                    "`</s>` cannot be a context",
                ));
            } else {
                b.idx(&pred)? + 1
            };
            let col = if succ == SENT_END {
                b.vocab.len()
            } else if succ == SENT_START {
                return Err(Error::parse(
                    source_name,
                    line,
                    "`<s>` cannot be a successor",
                ));
            } else {
                b.idx(&succ)?
            };
            let k = row * b.width() + col;
            b.logprob[k] = lp;
            seen[k] = true;
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::parse(source_name, 0, "bigram table is incomplete"));
        }
        for (r, s) in b.row_sums().iter().enumerate() {
            if (s - 1.0).abs() > 1e-9 {
                return Err(Error::parse(
                    source_name,
                    0,
                    format!("context row {r} sums to {s}"),
                ));
            }
        }
        Ok(b)
    }
}

/// Maximum-likelihood bigram with add-one smoothing over `vocab` plus `</s>`.
pub fn build_bigram<T, S, V, W>(transcripts: &[T], vocab: V) -> Result<Bigram>
where
    T: AsRef<[S]>,
    S: AsRef<str>,
    V: IntoIterator<Item = W>,
    W: Into<String>,
{
    if transcripts.is_empty() {
        return Err(Error::Invalid(
            "cannot build a bigram from no transcripts".into(),
        ));
    }
    let mut b = Bigram::empty(vocab.into_iter().map(Into::into).collect())?;
    let n = b.width();
    let v = b.vocab.len();
    let mut counts = vec![0u64; n * n];
    for t in transcripts {
        let mut row = 0;
        for w in t.as_ref() {
            let col = b.idx(w.as_ref())?;
            counts[row * n + col] += 1;
            row = col + 1;
        }
        counts[row * n + v] += 1;
    }
    for r in 0..n {
        let total: u64 = counts[r * n..(r + 1) * n].iter().sum();
        let denom = (total + n as u64) as f64;
        for c in 0..n {
            b.logprob[r * n + c] = ((counts[r * n + c] + 1) as f64 / denom).ln();
        }
    }
    Ok(b)
}

/// Sum of bigram log probabilities from `<s>` through `</s>`.
pub fn sentence_logprob<S: AsRef<str>>(net: &Bigram, words: &[S]) -> Result<f64> {
    let mut prev = SENT_START;
    let mut total = 0.0;
    for w in words {
        total += net.logprob(prev, w.as_ref())?;
        prev = w.as_ref();
    }
    Ok(total + net.logprob(prev, SENT_END)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ab() -> Bigram {
        build_bigram(&[vec!["A", "B"], vec!["A", "B"]], ["A", "B"]).unwrap()
    }

    #[test]
    fn add_one_counts() {
        let b = ab();
        // counts after A: B twice; denominator 2 + |{A, B, </s>}|
        assert!((b.logprob("A", "B").unwrap() - (3.0f64 / 5.0).ln()).abs() < 1e-15);
        // unseen continuation of a context seen twice
        assert!((b.logprob("A", "A").unwrap() - (1.0f64 / 5.0).ln()).abs() < 1e-15);
        // unseen context: uniform over three successors
        assert!((b.logprob("B", "A").unwrap() - (1.0f64 / 5.0).ln()).abs() < 1e-15);
        assert!((b.logprob("B", SENT_END).unwrap() - (3.0f64 / 5.0).ln()).abs() < 1e-15);
    }

    #[test]
    fn rows_are_normalized() {
        for s in ab().row_sums() {
            assert!((s - 1.0).abs() < 1e-12);
        }
        for s in Bigram::uniform(["X", "Y", "Z"]).unwrap().row_sums() {
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn sentence_scores() {
        let b = ab();
        let empty: [&str; 0] = [];
        assert_eq!(sentence_logprob(&b, &empty).unwrap(), b.empty_sentence());
        assert!(sentence_logprob(&b, &["A", "B"]).unwrap() <= 0.0);
        assert!(matches!(
            sentence_logprob(&b, &["C"]),
            Err(Error::OutOfVocabulary(_))
        ));
    }

    /// Sentences of length <= 2 over {A, B}: length-0..2 sentences ending in
    /// `</s>`, plus the mass of every length-2 prefix continuing further,
    /// must account for all probability.
    #[test]
    fn bounded_sentence_space_sums_to_one() {
        let b = ab();
        let words = ["A", "B"];
        let mut total = sentence_logprob(&b, &[] as &[&str]).unwrap().exp();
        for w1 in words {
            total += sentence_logprob(&b, &[w1]).unwrap().exp();
            for w2 in words {
                total += sentence_logprob(&b, &[w1, w2]).unwrap().exp();
                // mass that continues past length 2
                let prefix = b.logprob(SENT_START, w1).unwrap() + b.logprob(w1, w2).unwrap();
                total += prefix.exp() * (1.0 - b.logprob(w2, SENT_END).unwrap().exp());
            }
        }
        assert!((total - 1.0).abs() < 1e-12, "{total}");
    }

    #[test]
    fn rejects_bad_input() {
        let none: [Vec<&str>; 0] = [];
        assert!(build_bigram(&none, ["A"]).is_err());
        assert!(build_bigram(&[vec!["C"]], ["A"]).is_err());
    }

    #[test]
    fn text_round_trip() {
        let b = build_bigram(&[vec!["A", "B", "C"], vec!["C"]], ["A", "B", "C"]).unwrap();
        let text = b.to_text(&["seed: 3".into()]);
        assert!(text.starts_with("#bigram v=3\n"));
        assert_eq!(Bigram::from_text(&text, "t").unwrap(), b);
        let broken = text.replace("<s> A ", "<s> A -9");
        assert!(Bigram::from_text(&broken, "t").is_err());
    }

    proptest! {
        #[test]
        fn deterministic_and_normalized(
            sents in proptest::collection::vec(proptest::collection::vec(0usize..4, 0..6), 1..8)
        ) {
            let words = ["W", "X", "Y", "Z"];
            let t: Vec<Vec<&str>> = sents.iter().map(|s| s.iter().map(|&i| words[i]).collect()).collect();
            let a = build_bigram(&t, words).unwrap();
            prop_assert_eq!(&a, &build_bigram(&t, words).unwrap());
            for s in a.row_sums() {
                prop_assert!((s - 1.0).abs() < 1e-9);
            }
        }
    }
}
