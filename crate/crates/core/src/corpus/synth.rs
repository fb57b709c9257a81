use std::collections::BTreeMap;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{Corpus, PhonemeClass, PhonemeSet, PronunciationDict, Utterance};
use crate::{Error, Result, Span};

/// Diagonal-covariance Gaussian used as a generating distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct Gaussian {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

impl Gaussian {
    pub fn log_density(&self, x: &[f64]) -> f64 {
        let mut acc = 0.0;
        for ((&xi, &m), &v) in x.iter().zip(&self.mean).zip(&self.var) {
            let d = xi - m;
            acc += (2.0 * std::f64::consts::PI * v).ln() + d * d / v;
        }
        -0.5 * acc
    }
}

/// Parameters of a synthetic speaker corpus.
#[derive(Debug, Clone)]
pub struct SynthSpec {
    pub seed: u64,
    pub speakers: u32,
    /// Word and pronunciation pairs.
    pub vocabulary: Vec<(String, Vec<String>)>,
    pub vowels: Vec<String>,
    pub consonants: Vec<String>,
    pub sentences_per_speaker: usize,
    /// Inclusive range of words per sentence.
    pub words_per_sentence: (usize, usize),
    /// Inclusive range of frames generated per phoneme occurrence.
    pub frames_per_phoneme: (usize, usize),
    /// Generating distribution per `(speaker, phoneme)`.
    pub emissions: BTreeMap<(u32, String), Gaussian>,
}

const DESK_VOWELS: &[&str] = &["ae", "ih", "uw"];
const DESK_CONSONANTS: &[&str] = &["b", "d", "g", "k", "m", "n", "p", "s", "t", "z"];
const DESK_VOCABULARY: &[(&str, &[&str])] = &[
    ("BAT", &["b", "ae", "t"]),
    ("BID", &["b", "ih", "d"]),
    ("BOOT", &["b", "uw", "t"]),
    ("DIM", &["d", "ih", "m"]),
    ("DUNE", &["d", "uw", "n"]),
    ("GAS", &["g", "ae", "s"]),
    ("KIT", &["k", "ih", "t"]),
    ("MAT", &["m", "ae", "t"]),
    ("MOOD", &["m", "uw", "d"]),
    ("NIB", &["n", "ih", "b"]),
    ("PAT", &["p", "ae", "t"]),
    ("PIN", &["p", "ih", "n"]),
    ("SIT", &["s", "ih", "t"]),
    ("TIN", &["t", "ih", "n"]),
    ("TOMB", &["t", "uw", "m"]),
    ("ZIP", &["z", "ih", "p"]),
];

impl SynthSpec {
    /// A small corpus over a 14-phoneme inventory (silence included). Each
    /// phoneme's mean sits `separation` standard deviations along its own
    /// feature axis, so the feature dimension equals the inventory size and
    /// every speaker starts with identical distributions.
    pub fn desk_scale(
        speakers: u32,
        sentences_per_speaker: usize,
        separation: f64,
        seed: u64,
    ) -> Self {
        let vowels: Vec<String> = DESK_VOWELS.iter().map(|s| s.to_string()).collect();
        let consonants: Vec<String> = DESK_CONSONANTS.iter().map(|s| s.to_string()).collect();
        let vocabulary = DESK_VOCABULARY
            .iter()
            .map(|(w, p)| (w.to_string(), p.iter().map(|s| s.to_string()).collect()))
            .collect();
        let mut spec = SynthSpec {
            seed,
            speakers,
            vocabulary,
            vowels,
            consonants,
            sentences_per_speaker,
            words_per_sentence: (2, 4),
            frames_per_phoneme: (4, 7),
            emissions: BTreeMap::new(),
        };
        let inventory = spec.phoneme_set().expect("desk inventory is valid");
        let dim = inventory.len();
        for speaker in 1..=speakers {
            for (axis, p) in inventory.iter().enumerate() {
                let mut mean = vec![0.0; dim];
                mean[axis] = separation;
                spec.emissions.insert(
                    (speaker, p.symbol.clone()),
                    Gaussian {
                        mean,
                        var: vec![1.0; dim],
                    },
                );
            }
        }
        spec
    }

    /// Moves `moved` towards `keep` for one speaker so their means end up
    /// `distance` apart. Distance 0 makes the two phonemes identical for that
    /// speaker.
    pub fn with_confusable_pair(
        mut self,
        speaker: u32,
        keep: &str,
        moved: &str,
        distance: f64,
    ) -> Self {
        let anchor = self.emissions.get(&(speaker, keep.to_string())).cloned();
        if let (Some(anchor), Some(target)) = (
            anchor,
            self.emissions.get_mut(&(speaker, moved.to_string())),
        ) {
            let diff: Vec<f64> = target
                .mean
                .iter()
                .zip(&anchor.mean)
                .map(|(t, a)| t - a)
                .collect();
            let norm = diff.iter().map(|d| d * d).sum::<f64>().sqrt();
            target.mean = anchor
                .mean
                .iter()
                .zip(&diff)
                .map(|(a, d)| {
                    if norm > 0.0 {
                        a + distance * d / norm
                    } else {
                        *a
                    }
                })
                .collect();
        }
        self
    }

    pub fn phoneme_set(&self) -> Result<PhonemeSet> {
        PhonemeSet::new(
            self.vowels
                .iter()
                .map(|v| (v.clone(), PhonemeClass::Vowel))
                .chain(
                    self.consonants
                        .iter()
                        .map(|c| (c.clone(), PhonemeClass::Consonant)),
                ),
        )
    }

    pub fn dictionary(&self) -> Result<PronunciationDict> {
        PronunciationDict::new(self.vocabulary.iter().cloned(), self.phoneme_set()?)
    }

    pub fn dim(&self) -> usize {
        self.emissions.values().next().map_or(0, |g| g.mean.len())
    }

    fn validate(&self, phonemes: &PhonemeSet) -> Result<()> {
        if self.vocabulary.is_empty() {
            return Err(Error::Invalid("synthetic vocabulary is empty".into()));
        }
        let (lo, hi) = self.frames_per_phoneme;
        if lo == 0 || hi < lo {
            return Err(Error::Invalid(format!(
                "frames per phoneme range {lo}..={hi} is not positive"
            )));
        }
        let (wlo, whi) = self.words_per_sentence;
        if whi < wlo {
            return Err(Error::Invalid(format!(
                "words per sentence range {wlo}..={whi} is empty"
            )));
        }
        if self.speakers == 0 || self.sentences_per_speaker == 0 {
            return Err(Error::Invalid(
                "need at least one speaker and one sentence".into(),
            ));
        }
        let dim = self.dim();
        if dim == 0 {
            return Err(Error::Invalid("no emission distributions given".into()));
        }
        for speaker in 1..=self.speakers {
            for p in phonemes.symbols() {
                let g = self
                    .emissions
                    .get(&(speaker, p.to_string()))
                    .ok_or_else(|| {
                        Error::Invalid(format!("no emission for speaker {speaker}, phoneme {p}"))
                    })?;
                if g.mean.len() != dim
                    || g.var.len() != dim
                    || g.var.iter().any(|v| v.is_nan() || *v <= 0.0)
                {
                    return Err(Error::Invalid(format!(
                        "emission for speaker {speaker}, phoneme {p} is malformed"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Generated corpus with its ground truth.
#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    pub corpus: Corpus,
    /// Phoneme spans each utterance was generated from, keyed by utterance id.
    pub alignments: BTreeMap<String, Vec<Span>>,
    pub emissions: BTreeMap<(u32, String), Gaussian>,
}

pub fn generate_synthetic_corpus(spec: &SynthSpec) -> Result<SyntheticCorpus> {
    let dict = spec.dictionary()?;
    spec.validate(dict.phoneme_set())?;
    let words: Vec<&str> = dict.words().collect();
    let dim = spec.dim();
    let std_normal = Normal::new(0.0, 1.0).expect("unit normal");

    let mut utterances = Vec::new();
    let mut alignments = BTreeMap::new();
    for speaker in 1..=spec.speakers {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        rng.set_stream(u64::from(speaker));
        for i in 0..spec.sentences_per_speaker {
            let n_words = rng.random_range(spec.words_per_sentence.0..=spec.words_per_sentence.1);
            let sentence: Vec<String> = (0..n_words)
                .map(|_| words[rng.random_range(0..words.len())].to_string())
                .collect();
            let phonemes = super::transcribe(&sentence, &dict)?;
            let mut data = Vec::new();
            let mut spans = Vec::with_capacity(phonemes.len());
            let mut t = 0;
            for p in &phonemes {
                let g = &spec.emissions[&(speaker, p.clone())];
                let frames =
                    rng.random_range(spec.frames_per_phoneme.0..=spec.frames_per_phoneme.1);
                for _ in 0..frames {
                    for k in 0..dim {
                        let z: f64 = std_normal.sample(&mut rng);
                        data.push(g.mean[k] + z * g.var[k].sqrt());
                    }
                }
                spans.push(Span::new(p.clone(), t, t + frames));
                t += frames;
            }
            let features = Array2::from_shape_vec((t, dim), data).expect("rows of dim values");
            let id = format!("s{speaker:02}_{i:03}");
            alignments.insert(id.clone(), spans);
            utterances.push(Utterance::new(speaker, id, sentence, features, &dict)?);
        }
    }
    Ok(SyntheticCorpus {
        corpus: Corpus::new(dict, utterances)?,
        alignments,
        emissions: spec.emissions.clone(),
    })
}
