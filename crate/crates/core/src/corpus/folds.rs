use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::Corpus;
use crate::{Error, Result};

/// Per-speaker assignment of utterances to `k` cross-validation folds.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldSplit {
    k: usize,
    assignment: BTreeMap<String, usize>,
}

impl FoldSplit {
    pub fn from_assignment(k: usize, assignment: BTreeMap<String, usize>) -> Result<Self> {
        if k == 0 {
            return Err(Error::Invalid("fold count must be positive".into()));
        }
        if let Some((id, f)) = assignment.iter().find(|(_, f)| **f >= k) {
            return Err(Error::Invalid(format!(
                "utterance {id} in fold {f}, but k = {k}"
            )));
        }
        Ok(FoldSplit { k, assignment })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn fold_of(&self, utt_id: &str) -> Option<usize> {
        self.assignment.get(utt_id).copied()
    }

    pub fn assignment(&self) -> &BTreeMap<String, usize> {
        &self.assignment
    }

    /// Checks that every corpus utterance has a fold.
    pub fn covers(&self, corpus: &Corpus) -> Result<()> {
        for u in corpus.utterances() {
            if !self.assignment.contains_key(&u.id) {
                return Err(Error::Invalid(format!("utterance {} has no fold", u.id)));
            }
        }
        Ok(())
    }
}

fn speaker_stream(seed: u64, speaker: u32) -> u64 {
    seed ^ (u64::from(speaker)).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Seeded per-speaker shuffle followed by round-robin assignment.
pub fn make_folds(corpus: &Corpus, k: usize, seed: u64) -> Result<FoldSplit> {
    if k == 0 {
        return Err(Error::Invalid("fold count must be positive".into()));
    }
    let mut assignment = BTreeMap::new();
    for speaker in corpus.speakers() {
        let mut ids: Vec<&str> = corpus.by_speaker(speaker).map(|u| u.id.as_str()).collect();
        if ids.len() < k {
            return Err(Error::TooFewUtterances {
                speaker,
                count: ids.len(),
                folds: k,
            });
        }
        ids.sort_unstable();
        let mut rng = ChaCha8Rng::seed_from_u64(speaker_stream(seed, speaker));
        ids.shuffle(&mut rng);
        for (i, id) in ids.into_iter().enumerate() {
            assignment.insert(id.to_string(), i % k);
        }
    }
    FoldSplit::from_assignment(k, assignment)
}

/// `utt_id<TAB>fold_index` lines. `#` lines are comments.
pub fn write_folds(split: &FoldSplit, header: &[String]) -> String {
    let mut out = String::new();
    for h in header {
        let _ = writeln!(out, "# {h}");
    }
    let _ = writeln!(out, "# k: {}", split.k);
    for (id, f) in &split.assignment {
        let _ = writeln!(out, "{id}\t{f}");
    }
    out
}

pub fn read_folds(text: &str, source_name: &str) -> Result<FoldSplit> {
    let mut k = None;
    let mut assignment = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim_end();
        if line.is_empty() {
            continue;
        }
        if let Some(c) = line.strip_prefix('#') {
            if let Some(v) = c.trim().strip_prefix("k:") {
                k = Some(
                    v.trim()
                        .parse()
                        .map_err(|_| Error::parse(source_name, i + 1, "bad fold count"))?,
                );
            }
            continue;
        }
        let (id, fold) = line
            .split_once('\t')
            .ok_or_else(|| Error::parse(source_name, i + 1, "expected utt_id<TAB>fold"))?;
        let fold: usize = fold
            .trim()
            .parse()
            .map_err(|_| Error::parse(source_name, i + 1, "bad fold index"))?;
        if assignment.insert(id.to_string(), fold).is_some() {
            return Err(Error::parse(
                source_name,
                i + 1,
                format!("duplicate utterance {id}"),
            ));
        }
    }
    let k = k.unwrap_or_else(|| assignment.values().max().map_or(0, |m| m + 1));
    FoldSplit::from_assignment(k, assignment)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{parse_dictionary, Utterance};
    use ndarray::Array2;
    use proptest::prelude::*;

    fn corpus(per_speaker: &[usize]) -> Corpus {
        let dict = parse_dictionary("A ah\n", "t").unwrap();
        let mut utts = Vec::new();
        for (s, &n) in per_speaker.iter().enumerate() {
            for i in 0..n {
                utts.push(
                    Utterance::new(
                        s as u32 + 1,
                        format!("s{}_{i:03}", s + 1),
                        vec!["A".into()],
                        Array2::zeros((1, 1)),
                        &dict,
                    )
                    .unwrap(),
                );
            }
        }
        Corpus::new(dict, utts).unwrap()
    }

    fn fold_sizes(split: &FoldSplit, corpus: &Corpus, speaker: u32) -> Vec<usize> {
        let mut sizes = vec![0; split.k()];
        for u in corpus.by_speaker(speaker) {
            sizes[split.fold_of(&u.id).unwrap()] += 1;
        }
        sizes
    }

    #[test]
    fn two_hundred_utterances_give_folds_of_twenty() {
        let c = corpus(&[200]);
        let split = make_folds(&c, 10, 1).unwrap();
        assert_eq!(fold_sizes(&split, &c, 1), vec![20; 10]);
    }

    #[test]
    fn ten_utterances_give_singleton_folds() {
        let c = corpus(&[10]);
        let split = make_folds(&c, 10, 1).unwrap();
        assert_eq!(fold_sizes(&split, &c, 1), vec![1; 10]);
    }

    #[test]
    fn nine_utterances_are_rejected() {
        let c = corpus(&[9]);
        assert!(matches!(
            make_folds(&c, 10, 1),
            Err(Error::TooFewUtterances {
                speaker: 1,
                count: 9,
                folds: 10
            })
        ));
    }

    #[test]
    fn fold_file_round_trips() {
        let c = corpus(&[12, 11]);
        let split = make_folds(&c, 10, 3).unwrap();
        let text = write_folds(&split, &[]);
        assert_eq!(read_folds(&text, "t").unwrap(), split);
    }

    proptest! {
        #[test]
        fn folds_partition_each_speaker(
            sizes in proptest::collection::vec(5usize..40, 1..4),
            k in 2usize..6,
            seed in any::<u64>(),
        ) {
            let c = corpus(&sizes);
            let split = make_folds(&c, k, seed).unwrap();
            split.covers(&c).unwrap();
            prop_assert_eq!(split.assignment().len(), c.utterances().len());
            for s in c.speakers() {
                let sizes = fold_sizes(&split, &c, s);
                let (lo, hi) = (sizes.iter().min().unwrap(), sizes.iter().max().unwrap());
                prop_assert!(hi - lo <= 1);
            }
            prop_assert_eq!(make_folds(&c, k, seed).unwrap(), split);
        }
    }
}
