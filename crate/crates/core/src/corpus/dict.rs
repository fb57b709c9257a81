use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use super::{PhonemeClass, PhonemeSet, SILENCE};
use crate::{Error, Result};

/// Word to pronunciation map, keeping only the first variant of each word.
///
/// Dictionary files hold one `WORD ph1 ph2 ...` entry per line. Lines that
/// start with `#` are comments, except the inventory declarations
/// `#! vowels ...` and `#! consonants ...`: when either is present, every
/// pronunciation must use declared phonemes only. Without a declaration the
/// phoneme set is the set of phonemes used, classified by the BEEP vowel list.
#[derive(Debug, Clone, PartialEq)]
pub struct PronunciationDict {
    entries: BTreeMap<String, Vec<String>>,
    phonemes: PhonemeSet,
}

impl PronunciationDict {
    /// Builds a dictionary from `(word, pronunciation)` pairs over a known set.
    pub fn new(
        entries: impl IntoIterator<Item = (String, Vec<String>)>,
        phonemes: PhonemeSet,
    ) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (word, pron) in entries {
            let word = word.to_uppercase();
            if word.is_empty() {
                return Err(Error::Invalid("empty dictionary word".into()));
            }
            if pron.is_empty() {
                return Err(Error::Invalid(format!("word `{word}` has no phonemes")));
            }
            let pron: Vec<String> = pron.into_iter().map(|p| p.to_lowercase()).collect();
            if let Some(p) = pron.iter().find(|p| !phonemes.contains(p)) {
                return Err(Error::UnknownPhoneme(p.clone()));
            }
            map.entry(word).or_insert(pron);
        }
        Ok(PronunciationDict {
            entries: map,
            phonemes,
        })
    }

    pub fn pronunciation(&self, word: &str) -> Option<&[String]> {
        self.entries.get(word).map(Vec::as_slice)
    }

    pub fn contains(&self, word: &str) -> bool {
        self.entries.contains_key(word)
    }

    /// Entries in word order.
    pub fn entries(&self) -> impl Iterator<Item = (&str, &[String])> {
        self.entries.iter().map(|(w, p)| (w.as_str(), p.as_slice()))
    }

    pub fn words(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn phoneme_set(&self) -> &PhonemeSet {
        &self.phonemes
    }
}

pub fn parse_dictionary(text: &str, source_name: &str) -> Result<PronunciationDict> {
    let mut declared: Vec<(String, PhonemeClass)> = Vec::new();
    let mut entries: Vec<(String, Vec<String>)> = Vec::new();
    let mut seen = std::collections::BTreeSet::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(decl) = line.strip_prefix("#!") {
            let mut toks = decl.split_whitespace();
            let class = match toks.next() {
                Some("vowels") => PhonemeClass::Vowel,
                Some("consonants") => PhonemeClass::Consonant,
                other => {
                    return Err(Error::parse(
                        source_name,
                        i + 1,
                        format!("unknown inventory declaration {other:?}"),
                    ))
                }
            };
            declared.extend(toks.map(|t| (t.to_lowercase(), class)));
            continue;
        }
        if line.starts_with('#') {
            continue;
        }
        let mut toks = line.split_whitespace();
        let word = toks.next().unwrap_or_default().to_uppercase();
        let pron: Vec<String> = toks.map(str::to_lowercase).collect();
        if pron.is_empty() {
            return Err(Error::parse(
                source_name,
                i + 1,
                format!("word `{word}` has no phonemes"),
            ));
        }
        if seen.insert(word.clone()) {
            entries.push((word, pron));
        }
    }

    let phonemes = if declared.is_empty() {
        PhonemeSet::from_symbols(entries.iter().flat_map(|(_, p)| p.iter().cloned()))?
    } else {
        let set = PhonemeSet::new(declared)?;
        for (word, pron) in &entries {
            if let Some(p) = pron.iter().find(|p| !set.contains(p)) {
                return Err(Error::parse(
                    source_name,
                    0,
                    format!("word `{word}` uses `{p}`, which is not in the declared inventory"),
                ));
            }
        }
        set
    };
    PronunciationDict::new(entries, phonemes)
}

pub fn load_dictionary(path: impl AsRef<Path>) -> Result<PronunciationDict> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_dictionary(&text, &path.display().to_string())
}

/// Serializes with an inventory declaration so classes survive a round trip.
pub fn write_dictionary(dict: &PronunciationDict, header: &[String]) -> String {
    let mut out = String::new();
    for h in header {
        let _ = writeln!(out, "# {h}");
    }
    for (class, name) in [
        (PhonemeClass::Vowel, "vowels"),
        (PhonemeClass::Consonant, "consonants"),
    ] {
        let members: Vec<&str> = dict
            .phonemes
            .iter()
            .filter(|p| p.class == class && p.symbol != SILENCE)
            .map(|p| p.symbol.as_str())
            .collect();
        if !members.is_empty() {
            let _ = writeln!(out, "#! {name} {}", members.join(" "));
        }
    }
    for (word, pron) in &dict.entries {
        let _ = writeln!(out, "{word} {}", pron.join(" "));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_single_entry() {
        let d = parse_dictionary("BIN b ih n\n", "t").unwrap();
        assert_eq!(d.pronunciation("BIN").unwrap(), ["b", "ih", "n"]);
    }

    #[test]
    fn keeps_first_variant() {
        let d = parse_dictionary("A ah\nA ey\n", "t").unwrap();
        assert_eq!(d.pronunciation("A").unwrap(), ["ah"]);
        assert_eq!(d.len(), 1);
    }

    #[test]
    fn rejects_word_without_phonemes() {
        let err = parse_dictionary("BIN b ih n\nWORD\n", "t").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
    }

    #[test]
    fn skips_comments_and_normalizes_case() {
        let d = parse_dictionary("# comment\nbin B IH N\n", "t").unwrap();
        assert_eq!(d.pronunciation("BIN").unwrap(), ["b", "ih", "n"]);
    }

    #[test]
    fn declared_inventory_is_enforced() {
        let text = "#! vowels ih\n#! consonants b n\nBIN b ih n\nBIG b ih g\n";
        assert!(parse_dictionary(text, "t").is_err());
        let ok = parse_dictionary("#! vowels ih uw\n#! consonants b n\nBIN b ih n\n", "t").unwrap();
        // declared but unused phonemes are still members
        assert!(ok.phoneme_set().contains("uw"));
    }

    #[test]
    fn declaration_overrides_default_classes() {
        let d = parse_dictionary("#! vowels x\n#! consonants b\nBX b x\n", "t").unwrap();
        assert_eq!(d.phoneme_set().class_of("x"), Some(PhonemeClass::Vowel));
    }

    #[test]
    fn write_then_parse_is_identity() {
        let d = parse_dictionary(
            "#! vowels ih uw\n#! consonants b l n\nBIN b ih n\nBLUE b l uw\n",
            "t",
        )
        .unwrap();
        let text = write_dictionary(&d, &["generated".into()]);
        assert_eq!(parse_dictionary(&text, "t").unwrap(), d);
    }
}
