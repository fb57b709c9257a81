//! Reference/hypothesis alignment, phoneme confusion counting and word
//! correctness scoring.

use std::fmt::Write as _;

use crate::corpus::PhonemeSet;
use crate::{Error, Result};

/// Integer edit costs. A match always costs zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EditCosts {
    pub substitution: u32,
    pub deletion: u32,
    pub insertion: u32,
}

impl Default for EditCosts {
    /// The 4/3/3 weighting used by HTK-family scoring tools.
    fn default() -> Self {
        EditCosts {
            substitution: 4,
            deletion: 3,
            insertion: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EditOp<T> {
    Match(T),
    Substitution { reference: T, hypothesis: T },
    Deletion(T),
    Insertion(T),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Alignment<T> {
    pub ops: Vec<EditOp<T>>,
    /// Reference length.
    pub n: usize,
    pub deletions: usize,
    pub substitutions: usize,
    pub insertions: usize,
    pub cost: u64,
}

impl<T: Clone> Alignment<T> {
    pub fn matches(&self) -> usize {
        self.n - self.deletions - self.substitutions
    }

    /// The reference sequence recovered from the edit operations.
    pub fn reference(&self) -> Vec<T> {
        self.ops
            .iter()
            .filter_map(|op| match op {
                EditOp::Match(r) | EditOp::Deletion(r) => Some(r.clone()),
                EditOp::Substitution { reference, .. } => Some(reference.clone()),
                EditOp::Insertion(_) => None,
            })
            .collect()
    }

    /// The hypothesis sequence recovered from the edit operations.
    pub fn hypothesis(&self) -> Vec<T> {
        self.ops
            .iter()
            .filter_map(|op| match op {
                EditOp::Match(h) | EditOp::Insertion(h) => Some(h.clone()),
                EditOp::Substitution { hypothesis, .. } => Some(hypothesis.clone()),
                EditOp::Deletion(_) => None,
            })
            .collect()
    }
}

/// Minimum-cost alignment of `hypothesis` against `reference`.
///
/// Among equal-cost alignments the backtrace prefers, from the last
/// position backwards, match over substitution over deletion over insertion.
pub fn align<T: PartialEq + Clone>(
    reference: &[T],
    hypothesis: &[T],
    costs: EditCosts,
) -> Alignment<T> {
    let (n, m) = (reference.len(), hypothesis.len());
    let (sub, del, ins) = (
        u64::from(costs.substitution),
        u64::from(costs.deletion),
        u64::from(costs.insertion),
    );
    let width = m + 1;
    let mut dp = vec![0u64; (n + 1) * width];
    for j in 1..=m {
        dp[j] = dp[j - 1] + ins;
    }
    for i in 1..=n {
        dp[i * width] = dp[(i - 1) * width] + del;
        for j in 1..=m {
            let diag = dp[(i - 1) * width + j - 1]
                + if reference[i - 1] == hypothesis[j - 1] {
                    0
                } else {
                    sub
                };
            let up = dp[(i - 1) * width + j] + del;
            let left = dp[i * width + j - 1] + ins;
            dp[i * width + j] = diag.min(up).min(left);
        }
    }

    let mut ops = Vec::with_capacity(n.max(m));
    let (mut d, mut s, mut ins_count) = (0, 0, 0);
    let (mut i, mut j) = (n, m);
    while i > 0 || j > 0 {
        let here = dp[i * width + j];
        if i > 0 && j > 0 {
            let diag = dp[(i - 1) * width + j - 1];
            let same = reference[i - 1] == hypothesis[j - 1];
            if same && diag == here {
                ops.push(EditOp::Match(reference[i - 1].clone()));
                i -= 1;
                j -= 1;
                continue;
            }
            if !same && diag + sub == here {
                ops.push(EditOp::Substitution {
                    reference: reference[i - 1].clone(),
                    hypothesis: hypothesis[j - 1].clone(),
                });
                s += 1;
                i -= 1;
                j -= 1;
                continue;
            }
        }
        if i > 0 && dp[(i - 1) * width + j] + del == here {
            ops.push(EditOp::Deletion(reference[i - 1].clone()));
            d += 1;
            i -= 1;
        } else {
            ops.push(EditOp::Insertion(hypothesis[j - 1].clone()));
            ins_count += 1;
            j -= 1;
        }
    }
    ops.reverse();
    Alignment {
        ops,
        n,
        deletions: d,
        substitutions: s,
        insertions: ins_count,
        cost: dp[n * width + m],
    }
}

/// Word-level counts and the correctness statistic `(N - D - S) / N`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WordScore {
    pub n: usize,
    pub deletions: usize,
    pub substitutions: usize,
    pub insertions: usize,
    pub correctness: f64,
    /// `(N - D - S - I) / N`; logged, not used for ranking.
    pub accuracy: f64,
}

impl WordScore {
    pub fn from_counts(
        n: usize,
        deletions: usize,
        substitutions: usize,
        insertions: usize,
    ) -> Result<Self> {
        if n == 0 {
            return Err(Error::EmptyReference);
        }
        if deletions + substitutions > n {
            return Err(Error::Invalid(format!(
                "D + S = {} exceeds N = {n}",
                deletions + substitutions
            )));
        }
        let nf = n as f64;
        Ok(WordScore {
            n,
            deletions,
            substitutions,
            insertions,
            correctness: (n - deletions - substitutions) as f64 / nf,
            accuracy: (n as f64 - (deletions + substitutions + insertions) as f64) / nf,
        })
    }

    /// Sums the counts of several scores, e.g. every utterance in a fold.
    pub fn pooled<'a>(scores: impl IntoIterator<Item = &'a WordScore>) -> Result<Self> {
        let (mut n, mut d, mut s, mut i) = (0, 0, 0, 0);
        for w in scores {
            n += w.n;
            d += w.deletions;
            s += w.substitutions;
            i += w.insertions;
        }
        WordScore::from_counts(n, d, s, i)
    }
}

pub fn word_correctness<S: AsRef<str>>(reference: &[S], hypothesis: &[S]) -> Result<WordScore> {
    if reference.is_empty() {
        return Err(Error::EmptyReference);
    }
    let r: Vec<&str> = reference.iter().map(AsRef::as_ref).collect();
    let h: Vec<&str> = hypothesis.iter().map(AsRef::as_ref).collect();
    let a = align(&r, &h, EditCosts::default());
    WordScore::from_counts(a.n, a.deletions, a.substitutions, a.insertions)
}

/// Reference-by-decoded phoneme counts with deletion and insertion margins.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    phonemes: PhonemeSet,
    counts: Vec<u64>,
    deletions: Vec<u64>,
    insertions: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(phonemes: PhonemeSet) -> Self {
        let n = phonemes.len();
        ConfusionMatrix {
            phonemes,
            counts: vec![0; n * n],
            deletions: vec![0; n],
            insertions: vec![0; n],
        }
    }

    pub fn phonemes(&self) -> &PhonemeSet {
        &self.phonemes
    }

    fn idx(&self, symbol: &str) -> Result<usize> {
        self.phonemes
            .index_of(symbol)
            .ok_or_else(|| Error::UnknownPhoneme(symbol.to_string()))
    }

    /// Count of `reference` decoded as `decoded` (by index).
    pub fn get(&self, reference: usize, decoded: usize) -> u64 {
        self.counts[reference * self.phonemes.len() + decoded]
    }

    pub fn count(&self, reference: &str, decoded: &str) -> Result<u64> {
        Ok(self.get(self.idx(reference)?, self.idx(decoded)?))
    }

    pub fn deletions(&self, reference: usize) -> u64 {
        self.deletions[reference]
    }

    pub fn insertions(&self, decoded: usize) -> u64 {
        self.insertions[decoded]
    }

    pub fn add(&mut self, reference: &str, decoded: &str, n: u64) -> Result<()> {
        let (r, d) = (self.idx(reference)?, self.idx(decoded)?);
        let len = self.phonemes.len();
        self.counts[r * len + d] += n;
        Ok(())
    }

    pub fn add_deletion(&mut self, reference: &str, n: u64) -> Result<()> {
        let r = self.idx(reference)?;
        self.deletions[r] += n;
        Ok(())
    }

    pub fn add_insertion(&mut self, decoded: &str, n: u64) -> Result<()> {
        let d = self.idx(decoded)?;
        self.insertions[d] += n;
        Ok(())
    }

    pub fn accumulate<S: AsRef<str>>(&mut self, alignment: &Alignment<S>) -> Result<()> {
        for op in &alignment.ops {
            match op {
                EditOp::Match(r) => self.add(r.as_ref(), r.as_ref(), 1)?,
                EditOp::Substitution {
                    reference,
                    hypothesis,
                } => self.add(reference.as_ref(), hypothesis.as_ref(), 1)?,
                EditOp::Deletion(r) => self.add_deletion(r.as_ref(), 1)?,
                EditOp::Insertion(h) => self.add_insertion(h.as_ref(), 1)?,
            }
        }
        Ok(())
    }

    /// Element-wise sum; associative and commutative.
    pub fn merge(&mut self, other: &ConfusionMatrix) -> Result<()> {
        if self.phonemes != other.phonemes {
            return Err(Error::PhonemeSetMismatch);
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        for (a, b) in self.deletions.iter_mut().zip(&other.deletions) {
            *a += b;
        }
        for (a, b) in self.insertions.iter_mut().zip(&other.insertions) {
            *a += b;
        }
        Ok(())
    }

    /// Element-wise difference; fails if any count would go negative.
    pub fn subtract(&mut self, other: &ConfusionMatrix) -> Result<()> {
        if self.phonemes != other.phonemes {
            return Err(Error::PhonemeSetMismatch);
        }
        let pairs = self
            .counts
            .iter_mut()
            .zip(&other.counts)
            .chain(self.deletions.iter_mut().zip(&other.deletions))
            .chain(self.insertions.iter_mut().zip(&other.insertions));
        for (a, b) in pairs {
            *a = a
                .checked_sub(*b)
                .ok_or_else(|| Error::Invalid("confusion subtraction went negative".into()))?;
        }
        Ok(())
    }

    /// Aligned occurrences (diagonal and off-diagonal) plus deletions.
    pub fn reference_total(&self) -> u64 {
        self.counts.iter().sum::<u64>() + self.deletions.iter().sum::<u64>()
    }

    pub fn is_empty(&self) -> bool {
        self.reference_total() == 0 && self.insertions.iter().all(|&c| c == 0)
    }

    pub fn is_diagonal(&self) -> bool {
        let n = self.phonemes.len();
        (0..n).all(|r| (0..n).all(|d| r == d || self.get(r, d) == 0))
    }

    /// Sparse text form: `ref<TAB>hyp<TAB>count`, with `*` standing for the
    /// empty side of deletions and insertions.
    pub fn to_text(&self, header: &[String]) -> String {
        let mut out = String::new();
        for h in header {
            let _ = writeln!(out, "# {h}");
        }
        let classes: Vec<String> = self
            .phonemes
            .iter()
            .map(|p| format!("{}:{}", p.symbol, p.class))
            .collect();
        let _ = writeln!(out, "# phonemes: {}", classes.join(" "));
        let n = self.phonemes.len();
        for r in 0..n {
            let rs = &self.phonemes.get(r).symbol;
            for d in 0..n {
                let c = self.get(r, d);
                if c > 0 {
                    let _ = writeln!(out, "{rs}\t{}\t{c}", self.phonemes.get(d).symbol);
                }
            }
            if self.deletions[r] > 0 {
                let _ = writeln!(out, "{rs}\t*\t{}", self.deletions[r]);
            }
        }
        for d in 0..n {
            if self.insertions[d] > 0 {
                let _ = writeln!(
                    out,
                    "*\t{}\t{}",
                    self.phonemes.get(d).symbol,
                    self.insertions[d]
                );
            }
        }
        out
    }

    pub fn from_text(text: &str, source_name: &str) -> Result<Self> {
        use crate::corpus::PhonemeClass;
        let mut matrix: Option<ConfusionMatrix> = None;
        for (i, line) in text.lines().enumerate() {
            let line = line.trim_end();
            if line.is_empty() {
                continue;
            }
            if let Some(c) = line.strip_prefix('#') {
                if let Some(list) = c.trim().strip_prefix("phonemes:") {
                    let mut members = Vec::new();
                    for tok in list.split_whitespace() {
                        let (sym, class) = tok.split_once(':').ok_or_else(|| {
                            Error::parse(source_name, i + 1, "expected symbol:class")
                        })?;
                        let class = match class {
                            "vowel" => PhonemeClass::Vowel,
                            "consonant" => PhonemeClass::Consonant,
                            "silence" => PhonemeClass::Silence,
                            other => {
                                return Err(Error::parse(
                                    source_name,
                                    i + 1,
                                    format!("unknown class {other}"),
                                ))
                            }
                        };
                        members.push((sym.to_string(), class));
                    }
                    matrix = Some(ConfusionMatrix::new(PhonemeSet::new(members)?));
                }
                continue;
            }
            let m = matrix.as_mut().ok_or_else(|| {
                Error::parse(source_name, i + 1, "counts before `# phonemes:` header")
            })?;
            let f: Vec<&str> = line.split('\t').collect();
            let [r, d, c] = f[..] else {
                return Err(Error::parse(
                    source_name,
                    i + 1,
                    "expected ref<TAB>hyp<TAB>count",
                ));
            };
            let c: u64 = c
                .parse()
                .map_err(|_| Error::parse(source_name, i + 1, "bad count"))?;
            match (r, d) {
                ("*", "*") => return Err(Error::parse(source_name, i + 1, "`*` on both sides")),
                (r, "*") => m.add_deletion(r, c)?,
                ("*", d) => m.add_insertion(d, c)?,
                (r, d) => m.add(r, d, c)?,
            }
        }
        matrix.ok_or_else(|| Error::parse(source_name, 0, "missing `# phonemes:` header"))
    }
}

pub fn accumulate_confusions<S: AsRef<str>>(
    phonemes: &PhonemeSet,
    alignments: &[Alignment<S>],
) -> Result<ConfusionMatrix> {
    let mut m = ConfusionMatrix::new(phonemes.clone());
    for a in alignments {
        m.accumulate(a)?;
    }
    Ok(m)
}

/// Mean and standard error of per-fold correctness.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreSummary {
    pub per_fold: Vec<f64>,
    pub mean: f64,
    /// Sample standard deviation over `sqrt(folds)`; zero for a single fold.
    pub standard_error: f64,
    /// Set when only one fold was available.
    pub single_fold: bool,
}

pub fn summarize(per_fold: &[f64]) -> Result<ScoreSummary> {
    if per_fold.is_empty() {
        return Err(Error::EmptyScores);
    }
    let n = per_fold.len() as f64;
    let mean = per_fold.iter().sum::<f64>() / n;
    let single_fold = per_fold.len() == 1;
    let standard_error = if single_fold {
        log::warn!("standard error over a single fold reported as 0");
        0.0
    } else {
        let ss: f64 = per_fold.iter().map(|x| (x - mean).powi(2)).sum();
        (ss / (n - 1.0)).sqrt() / n.sqrt()
    };
    Ok(ScoreSummary {
        per_fold: per_fold.to_vec(),
        mean,
        standard_error,
        single_fold,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn counts(a: &Alignment<&str>) -> (usize, usize, usize) {
        (a.deletions, a.substitutions, a.insertions)
    }

    #[test]
    fn identity_alignment_has_no_errors() {
        let a = align(&["a", "b", "c"], &["a", "b", "c"], EditCosts::default());
        assert_eq!(counts(&a), (0, 0, 0));
        assert_eq!(a.cost, 0);
    }

    #[test]
    fn single_substitution() {
        let a = align(&["a", "b", "c"], &["a", "x", "c"], EditCosts::default());
        assert_eq!(counts(&a), (0, 1, 0));
    }

    #[test]
    fn empty_hypothesis_is_all_deletions() {
        let a = align(&["a", "b"], &[], EditCosts::default());
        assert_eq!(counts(&a), (2, 0, 0));
        let a = align::<&str>(&[], &[], EditCosts::default());
        assert_eq!(counts(&a), (0, 0, 0));
    }

    #[test]
    fn correctness_examples() {
        let s = WordScore::from_counts(10, 2, 3, 0).unwrap();
        assert_eq!(s.correctness, 0.5);
        let s = word_correctness(&["BIN", "BLUE", "AT"], &["BIN", "BLUE", "AT"]).unwrap();
        assert_eq!(s.correctness, 1.0);
        let s = word_correctness(&["BIN", "BLUE", "AT"], &["BIN", "AT"]).unwrap();
        assert_eq!((s.n, s.deletions, s.substitutions), (3, 1, 0));
        assert_eq!(s.correctness, 2.0 / 3.0);
    }

    #[test]
    fn insertions_do_not_lower_correctness() {
        let s = word_correctness(&["A"], &["A", "B", "C"]).unwrap();
        assert_eq!(s.correctness, 1.0);
        assert_eq!(s.insertions, 2);
        assert_eq!(s.accuracy, -1.0);
    }

    #[test]
    fn empty_reference_is_an_error() {
        assert!(matches!(
            word_correctness::<&str>(&[], &["A"]),
            Err(Error::EmptyReference)
        ));
    }

    fn set() -> PhonemeSet {
        PhonemeSet::from_symbols(["b", "p", "ih"]).unwrap()
    }

    #[test]
    fn confusion_accumulation() {
        let a = align(&["b", "ih"], &["b", "ih"], EditCosts::default());
        let m = accumulate_confusions(&set(), &[a]).unwrap();
        assert!(m.is_diagonal());
        assert_eq!(m.count("b", "b").unwrap(), 1);

        let a = align(&["b", "ih"], &["p", "ih"], EditCosts::default());
        let m = accumulate_confusions(&set(), &[a]).unwrap();
        assert_eq!(m.count("b", "p").unwrap(), 1);

        let bad = align(&["zz"], &["b"], EditCosts::default());
        assert!(matches!(
            accumulate_confusions(&set(), &[bad]),
            Err(Error::UnknownPhoneme(_))
        ));
    }

    #[test]
    fn confusion_text_round_trip() {
        let a = align(&["b", "ih", "sil"], &["p", "p", "ih"], EditCosts::default());
        let m = accumulate_confusions(&set(), &[a]).unwrap();
        let back = ConfusionMatrix::from_text(&m.to_text(&["x".into()]), "t").unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn summaries() {
        let s = summarize(&[0.5, 0.5, 0.5]).unwrap();
        assert_eq!((s.mean, s.standard_error), (0.5, 0.0));
        // sample sd of [0.4, 0.6] is sqrt(0.02) = 0.141421...; over sqrt(2) gives 0.1
        let s = summarize(&[0.4, 0.6]).unwrap();
        assert!((s.mean - 0.5).abs() < 1e-15);
        assert!((s.standard_error - 0.1).abs() < 1e-12);
        let s = summarize(&[0.7]).unwrap();
        assert!(s.single_fold && s.standard_error == 0.0 && s.mean == 0.7);
        assert!(matches!(summarize(&[]), Err(Error::EmptyScores)));
    }

    fn seq() -> impl Strategy<Value = Vec<u8>> {
        proptest::collection::vec(0u8..4, 0..8)
    }

    proptest! {
        #[test]
        fn ops_replay_both_sequences(r in seq(), h in seq()) {
            let a = align(&r, &h, EditCosts::default());
            prop_assert_eq!(a.reference(), r.clone());
            prop_assert_eq!(a.hypothesis(), h.clone());
            prop_assert_eq!(a.n, a.matches() + a.substitutions + a.deletions);
            prop_assert_eq!(a.cost, 4 * a.substitutions as u64 + 3 * (a.deletions + a.insertions) as u64);
        }

        #[test]
        fn self_correctness_is_one(r in proptest::collection::vec(0u8..5, 1..10)) {
            let words: Vec<String> = r.iter().map(|x| format!("W{x}")).collect();
            prop_assert_eq!(word_correctness(&words, &words).unwrap().correctness, 1.0);
        }

        #[test]
        fn appended_substitution_never_raises_correctness(
            r in proptest::collection::vec(0u8..3, 1..8),
            h in proptest::collection::vec(0u8..3, 0..8),
        ) {
            let rw: Vec<String> = r.iter().map(|x| format!("W{x}")).collect();
            let hw: Vec<String> = h.iter().map(|x| format!("W{x}")).collect();
            let before = word_correctness(&rw, &hw).unwrap().correctness;
            let (mut r2, mut h2) = (rw.clone(), hw.clone());
            r2.push("REF_ONLY".into());
            h2.push("HYP_ONLY".into());
            let after = word_correctness(&r2, &h2).unwrap().correctness;
            prop_assert!(after <= before + 1e-12);
        }

        #[test]
        fn confusion_total_equals_reference_symbols(
            pairs in proptest::collection::vec((proptest::collection::vec(0usize..3, 0..6), proptest::collection::vec(0usize..3, 0..6)), 1..5)
        ) {
            let symbols = ["b", "p", "ih"];
            let alignments: Vec<_> = pairs.iter().map(|(r, h)| {
                let r: Vec<&str> = r.iter().map(|&i| symbols[i]).collect();
                let h: Vec<&str> = h.iter().map(|&i| symbols[i]).collect();
                align(&r, &h, EditCosts::default())
            }).collect();
            let m = accumulate_confusions(&set(), &alignments).unwrap();
            let total: usize = pairs.iter().map(|(r, _)| r.len()).sum();
            prop_assert_eq!(m.reference_total(), total as u64);
            let mut rev = alignments.clone();
            rev.reverse();
            prop_assert_eq!(accumulate_confusions(&set(), &rev).unwrap(), m);
        }
    }
}
