//! Speaker corpus: pronunciation dictionary, utterances, fold splits, file
//! formats and the synthetic generator.

mod dict;
mod folds;
mod io;
mod synth;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use ndarray::Array2;

use crate::{Error, Result};

pub use dict::{load_dictionary, parse_dictionary, write_dictionary, PronunciationDict};
pub use folds::{make_folds, read_folds, write_folds, FoldSplit};
pub use io::{load_corpus, read_features, write_corpus, write_features};
pub use synth::{generate_synthetic_corpus, Gaussian, SynthSpec, SyntheticCorpus};

/// Token used for utterance-boundary silence.
pub const SILENCE: &str = "sil";

/// Vowel symbols of the BEEP British English phone set. Used to classify
/// phonemes when a dictionary declares no inventory of its own.
pub const BEEP_VOWELS: &[&str] = &[
    "aa", "ae", "ah", "ao", "aw", "ax", "ay", "ea", "eh", "er", "ey", "ia", "ih", "iy", "oh", "ow",
    "oy", "ua", "uh", "uw",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum PhonemeClass {
    Vowel,
    Consonant,
    Silence,
}

impl PhonemeClass {
    /// Default class of a symbol under the BEEP phone set.
    pub fn of_symbol(symbol: &str) -> PhonemeClass {
        if symbol == SILENCE {
            PhonemeClass::Silence
        } else if BEEP_VOWELS.contains(&symbol) {
            PhonemeClass::Vowel
        } else {
            PhonemeClass::Consonant
        }
    }
}

impl fmt::Display for PhonemeClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PhonemeClass::Vowel => "vowel",
            PhonemeClass::Consonant => "consonant",
            PhonemeClass::Silence => "silence",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Phoneme {
    pub symbol: String,
    pub class: PhonemeClass,
}

/// A closed, symbol-ordered phoneme inventory. Always contains [`SILENCE`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PhonemeSet {
    phonemes: Vec<Phoneme>,
    index: BTreeMap<String, usize>,
}

impl PhonemeSet {
    /// Builds a set from `(symbol, class)` pairs; silence is added if absent.
    pub fn new<I, S>(members: I) -> Result<Self>
    where
        I: IntoIterator<Item = (S, PhonemeClass)>,
        S: Into<String>,
    {
        let mut by_symbol: BTreeMap<String, PhonemeClass> = BTreeMap::new();
        by_symbol.insert(SILENCE.to_string(), PhonemeClass::Silence);
        for (symbol, class) in members {
            let symbol: String = symbol.into();
            if symbol.is_empty() {
                return Err(Error::Invalid("empty phoneme symbol".into()));
            }
            if (symbol == SILENCE) != (class == PhonemeClass::Silence) {
                return Err(Error::Invalid(format!(
                    "the silence class is reserved for `{SILENCE}`, got `{symbol}` as {class}"
                )));
            }
            match by_symbol.get(&symbol) {
                Some(prev) if *prev != class => {
                    return Err(Error::Invalid(format!(
                        "phoneme `{symbol}` declared as both {prev} and {class}"
                    )))
                }
                _ => {
                    by_symbol.insert(symbol, class);
                }
            }
        }
        let phonemes: Vec<Phoneme> = by_symbol
            .into_iter()
            .map(|(symbol, class)| Phoneme { symbol, class })
            .collect();
        let index = phonemes
            .iter()
            .enumerate()
            .map(|(i, p)| (p.symbol.clone(), i))
            .collect();
        Ok(PhonemeSet { phonemes, index })
    }

    /// Classifies every symbol with [`PhonemeClass::of_symbol`].
    pub fn from_symbols<I, S>(symbols: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        PhonemeSet::new(symbols.into_iter().map(|s| {
            let s: String = s.into();
            let class = PhonemeClass::of_symbol(&s);
            (s, class)
        }))
    }

    pub fn len(&self) -> usize {
        self.phonemes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phonemes.is_empty()
    }

    pub fn index_of(&self, symbol: &str) -> Option<usize> {
        self.index.get(symbol).copied()
    }

    pub fn contains(&self, symbol: &str) -> bool {
        self.index.contains_key(symbol)
    }

    pub fn get(&self, i: usize) -> &Phoneme {
        &self.phonemes[i]
    }

    pub fn class_of(&self, symbol: &str) -> Option<PhonemeClass> {
        self.index_of(symbol).map(|i| self.phonemes[i].class)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Phoneme> {
        self.phonemes.iter()
    }

    pub fn symbols(&self) -> impl Iterator<Item = &str> {
        self.phonemes.iter().map(|p| p.symbol.as_str())
    }
}

/// Phoneme transcript of a word sequence: dictionary pronunciations
/// concatenated and padded with silence on both ends.
pub fn transcribe<S: AsRef<str>>(words: &[S], dict: &PronunciationDict) -> Result<Vec<String>> {
    let mut out = vec![SILENCE.to_string()];
    for w in words {
        let w = w.as_ref();
        let pron = dict
            .pronunciation(w)
            .ok_or_else(|| Error::OutOfVocabulary(w.to_string()))?;
        out.extend(pron.iter().cloned());
    }
    out.push(SILENCE.to_string());
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Utterance {
    pub speaker: u32,
    pub id: String,
    pub words: Vec<String>,
    pub phonemes: Vec<String>,
    /// Frames by feature dimension.
    pub features: Array2<f64>,
}

impl Utterance {
    /// Normalizes word case and derives the phoneme transcript from `dict`.
    pub fn new(
        speaker: u32,
        id: impl Into<String>,
        words: Vec<String>,
        features: Array2<f64>,
        dict: &PronunciationDict,
    ) -> Result<Self> {
        let id = id.into();
        if id.is_empty() || id.chars().any(char::is_whitespace) {
            return Err(Error::Invalid(format!("bad utterance id `{id}`")));
        }
        if speaker == 0 {
            return Err(Error::Invalid(format!(
                "utterance {id}: speaker ids start at 1"
            )));
        }
        if features.nrows() == 0 || features.ncols() == 0 {
            return Err(Error::Invalid(format!(
                "utterance {id}: empty feature matrix"
            )));
        }
        let words: Vec<String> = words.into_iter().map(|w| w.to_uppercase()).collect();
        let phonemes = transcribe(&words, dict)?;
        Ok(Utterance {
            speaker,
            id,
            words,
            phonemes,
            features,
        })
    }

    pub fn frames(&self) -> usize {
        self.features.nrows()
    }
}

/// Immutable collection of utterances sharing one dictionary and feature dimension.
#[derive(Debug, Clone)]
pub struct Corpus {
    dict: PronunciationDict,
    utterances: Vec<Utterance>,
    dim: usize,
}

impl Corpus {
    pub fn new(dict: PronunciationDict, mut utterances: Vec<Utterance>) -> Result<Self> {
        let dim = utterances
            .first()
            .map(|u| u.features.ncols())
            .ok_or_else(|| Error::Invalid("corpus has no utterances".into()))?;
        let mut seen = BTreeSet::new();
        for u in &utterances {
            if u.features.ncols() != dim {
                return Err(Error::Invalid(format!(
                    "utterance {} has feature dimension {}, expected {dim}",
                    u.id,
                    u.features.ncols()
                )));
            }
            if !seen.insert(u.id.as_str()) {
                return Err(Error::Invalid(format!("duplicate utterance id `{}`", u.id)));
            }
            let expected = transcribe(&u.words, &dict)?;
            if expected != u.phonemes {
                return Err(Error::Invalid(format!(
                    "utterance {} transcript disagrees with the dictionary",
                    u.id
                )));
            }
        }
        utterances.sort_by(|a, b| (a.speaker, &a.id).cmp(&(b.speaker, &b.id)));
        Ok(Corpus {
            dict,
            utterances,
            dim,
        })
    }

    pub fn dict(&self) -> &PronunciationDict {
        &self.dict
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// All utterances, ordered by speaker then id.
    pub fn utterances(&self) -> &[Utterance] {
        &self.utterances
    }

    pub fn speakers(&self) -> Vec<u32> {
        let set: BTreeSet<u32> = self.utterances.iter().map(|u| u.speaker).collect();
        set.into_iter().collect()
    }

    pub fn by_speaker(&self, speaker: u32) -> impl Iterator<Item = &Utterance> {
        self.utterances.iter().filter(move |u| u.speaker == speaker)
    }

    pub fn get(&self, id: &str) -> Option<&Utterance> {
        self.utterances.iter().find(|u| u.id == id)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dict() -> PronunciationDict {
        parse_dictionary("BIN b ih n\nBLUE b l uw\n", "test").unwrap()
    }

    #[test]
    fn transcribe_pads_with_silence() {
        let d = dict();
        assert_eq!(
            transcribe(&["BIN"], &d).unwrap(),
            ["sil", "b", "ih", "n", "sil"]
        );
        assert_eq!(transcribe::<&str>(&[], &d).unwrap(), ["sil", "sil"]);
        assert_eq!(
            transcribe(&["BIN", "BLUE"], &d).unwrap(),
            ["sil", "b", "ih", "n", "b", "l", "uw", "sil"]
        );
    }

    #[test]
    fn transcribe_names_oov_word() {
        let err = transcribe(&["BIN", "RED"], &dict()).unwrap_err();
        assert!(matches!(err, Error::OutOfVocabulary(w) if w == "RED"));
    }

    #[test]
    fn silence_class_is_reserved() {
        assert!(PhonemeSet::new([("sil", PhonemeClass::Consonant)]).is_err());
        assert!(PhonemeSet::new([("x", PhonemeClass::Silence)]).is_err());
        let set = PhonemeSet::from_symbols(["b", "ih"]).unwrap();
        assert_eq!(set.class_of("sil"), Some(PhonemeClass::Silence));
        assert_eq!(set.class_of("ih"), Some(PhonemeClass::Vowel));
        assert_eq!(set.class_of("b"), Some(PhonemeClass::Consonant));
    }

    #[test]
    fn utterance_uppercases_words() {
        let u =
            Utterance::new(1, "u1", vec!["bin".into()], Array2::zeros((3, 2)), &dict()).unwrap();
        assert_eq!(u.words, ["BIN"]);
        assert_eq!(u.phonemes.len(), 5);
    }

    #[test]
    fn corpus_rejects_mixed_dimensions() {
        let d = dict();
        let a = Utterance::new(1, "a", vec!["BIN".into()], Array2::zeros((3, 2)), &d).unwrap();
        let b = Utterance::new(1, "b", vec!["BIN".into()], Array2::zeros((3, 3)), &d).unwrap();
        assert!(Corpus::new(d.clone(), vec![a.clone(), b]).is_err());
        assert!(Corpus::new(d, vec![a.clone(), a]).is_err());
    }
}
