//! Phoneme-to-viseme maps derived from phoneme confusions.
//!
//! Two phonemes share a viseme when they are mutually confused at least
//! `threshold` times in each direction, transitively. Vowels and consonants
//! are clustered separately and silence always stays alone.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::{self, Write as _};
use std::str::FromStr;

use crate::align::ConfusionMatrix;
use crate::corpus::{PhonemeClass, PhonemeSet, PronunciationDict};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum MapKind {
    /// Speaker-dependent: one speaker's confusions.
    SD,
    /// Multi-speaker: every speaker's confusions pooled.
    MS,
    /// Speaker-independent: every speaker except one.
    SI,
}

impl fmt::Display for MapKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MapKind::SD => "SD",
            MapKind::MS => "MS",
            MapKind::SI => "SI",
        })
    }
}

impl FromStr for MapKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "SD" => Ok(MapKind::SD),
            "MS" => Ok(MapKind::MS),
            "SI" => Ok(MapKind::SI),
            other => Err(Error::Invalid(format!("unknown map kind `{other}`"))),
        }
    }
}

/// `M_5`
pub fn sd_map_id(speaker: u32) -> String {
    format!("M_{speaker}")
}

/// `M_[all]`
pub fn ms_map_id() -> String {
    "M_[all]".to_string()
}

/// `M_!3`: every speaker except 3.
pub fn si_map_id(excluded: u32) -> String {
    format!("M_!{excluded}")
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct P2VMap {
    pub map_id: String,
    pub kind: MapKind,
    pub sources: BTreeSet<u32>,
    phonemes: PhonemeSet,
    assignment: BTreeMap<String, String>,
}

impl P2VMap {
    /// Builds a map from explicit phoneme groups and canonicalizes labels.
    /// Every phoneme not listed in a group becomes a singleton.
    pub fn from_groups(
        map_id: impl Into<String>,
        kind: MapKind,
        sources: impl IntoIterator<Item = u32>,
        phonemes: &PhonemeSet,
        groups: &[Vec<&str>],
    ) -> Result<Self> {
        let mut group_of: BTreeMap<&str, usize> = BTreeMap::new();
        for (g, members) in groups.iter().enumerate() {
            for &m in members {
                if !phonemes.contains(m) {
                    return Err(Error::UnknownPhoneme(m.to_string()));
                }
                if group_of.insert(m, g).is_some() {
                    return Err(Error::Invalid(format!(
                        "phoneme `{m}` listed in two groups"
                    )));
                }
            }
        }
        let mut next = groups.len();
        let mut components: Vec<usize> = Vec::with_capacity(phonemes.len());
        for p in phonemes.symbols() {
            components.push(match group_of.get(p) {
                Some(&g) => g,
                None => {
                    next += 1;
                    next - 1
                }
            });
        }
        let map = P2VMap {
            map_id: map_id.into(),
            kind,
            sources: sources.into_iter().collect(),
            phonemes: phonemes.clone(),
            assignment: canonical_labels(phonemes, &components),
        };
        map.validate()?;
        Ok(map)
    }

    /// Every phoneme its own viseme.
    pub fn identity(map_id: impl Into<String>, kind: MapKind, phonemes: &PhonemeSet) -> Self {
        P2VMap::from_groups(map_id, kind, [], phonemes, &[]).expect("singletons form a valid map")
    }

    pub fn phonemes(&self) -> &PhonemeSet {
        &self.phonemes
    }

    pub fn viseme_of(&self, phoneme: &str) -> Option<&str> {
        self.assignment.get(phoneme).map(String::as_str)
    }

    pub fn viseme_count(&self) -> usize {
        self.assignment.values().collect::<BTreeSet<_>>().len()
    }

    /// Viseme labels in label order.
    pub fn visemes(&self) -> Vec<&str> {
        let set: BTreeSet<&str> = self.assignment.values().map(String::as_str).collect();
        let mut v: Vec<&str> = set.into_iter().collect();
        v.sort_by_key(|l| (l.len(), *l));
        v
    }

    /// Viseme label to its member phonemes.
    pub fn groups(&self) -> BTreeMap<&str, Vec<&str>> {
        let mut g: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
        for (p, v) in &self.assignment {
            g.entry(v.as_str()).or_default().push(p.as_str());
        }
        g
    }

    fn validate(&self) -> Result<()> {
        for p in self.phonemes.symbols() {
            if !self.assignment.contains_key(p) {
                return Err(Error::Unhoused {
                    phoneme: p.to_string(),
                    map_id: self.map_id.clone(),
                });
            }
        }
        for (viseme, members) in self.groups() {
            let classes: BTreeSet<PhonemeClass> = members
                .iter()
                .filter_map(|m| self.phonemes.class_of(m))
                .collect();
            if classes.len() > 1 {
                return Err(Error::Invalid(format!(
                    "viseme {viseme} mixes phoneme classes"
                )));
            }
            if classes.contains(&PhonemeClass::Silence) && members.len() > 1 {
                return Err(Error::Invalid(format!("viseme {viseme} merges silence")));
            }
        }
        Ok(())
    }

    /// `phoneme<TAB>viseme` lines after `# id`, `# kind`, `# sources` headers.
    pub fn to_text(&self, header: &[String]) -> String {
        let mut out = String::new();
        for h in header {
            let _ = writeln!(out, "# {h}");
        }
        let _ = writeln!(out, "# id: {}", self.map_id);
        let _ = writeln!(out, "# kind: {}", self.kind);
        let sources: Vec<String> = self.sources.iter().map(u32::to_string).collect();
        let _ = writeln!(out, "# sources: {}", sources.join(","));
        for (p, v) in &self.assignment {
            let _ = writeln!(out, "{p}\t{v}");
        }
        out
    }

    /// Parses a map file. `phonemes` supplies the classes needed to validate it.
    pub fn from_text(text: &str, phonemes: &PhonemeSet, source_name: &str) -> Result<Self> {
        let (mut id, mut kind, mut sources) = (None, None, BTreeSet::new());
        let mut assignment = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim_end();
            if line.is_empty() {
                continue;
            }
            if let Some(c) = line.strip_prefix('#') {
                let c = c.trim();
                if let Some(v) = c.strip_prefix("id:") {
                    id = Some(v.trim().to_string());
                } else if let Some(v) = c.strip_prefix("kind:") {
                    kind = Some(v.trim().parse()?);
                } else if let Some(v) = c.strip_prefix("sources:") {
                    for s in v.split(',').map(str::trim).filter(|s| !s.is_empty()) {
                        sources.insert(s.parse().map_err(|_| {
                            Error::parse(source_name, i + 1, format!("bad speaker `{s}`"))
                        })?);
                    }
                }
                continue;
            }
            let (p, v) = line
                .split_once('\t')
                .ok_or_else(|| Error::parse(source_name, i + 1, "expected phoneme<TAB>viseme"))?;
            if !phonemes.contains(p) {
                return Err(Error::UnknownPhoneme(p.to_string()));
            }
            if assignment.insert(p.to_string(), v.to_string()).is_some() {
                return Err(Error::parse(
                    source_name,
                    i + 1,
                    format!("phoneme `{p}` mapped twice"),
                ));
            }
        }
        let map = P2VMap {
            map_id: id.ok_or_else(|| Error::parse(source_name, 0, "missing `# id:` header"))?,
            kind: kind.ok_or_else(|| Error::parse(source_name, 0, "missing `# kind:` header"))?,
            sources,
            phonemes: phonemes.clone(),
            assignment,
        };
        map.validate()?;
        Ok(map)
    }
}

/// Labels components `V1..Vk`, ordered by each component's smallest symbol.
fn canonical_labels(phonemes: &PhonemeSet, component: &[usize]) -> BTreeMap<String, String> {
    // symbols iterate in sorted order, so first sight of a component is its smallest member
    let mut label_of: BTreeMap<usize, String> = BTreeMap::new();
    for &c in component {
        let next = label_of.len() + 1;
        label_of.entry(c).or_insert_with(|| format!("V{next}"));
    }
    phonemes
        .symbols()
        .zip(component)
        .map(|(p, c)| (p.to_string(), label_of[c].clone()))
        .collect()
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

/// Clusters mutually confused phonemes into visemes.
pub fn derive_map(
    confusions: &ConfusionMatrix,
    kind: MapKind,
    map_id: impl Into<String>,
    sources: impl IntoIterator<Item = u32>,
    threshold: u64,
) -> Result<P2VMap> {
    if confusions.is_empty() {
        return Err(Error::EmptyConfusions);
    }
    if threshold == 0 {
        return Err(Error::Invalid(
            "clustering threshold must be at least 1".into(),
        ));
    }
    let set = confusions.phonemes();
    let n = set.len();
    let mut parent: Vec<usize> = (0..n).collect();
    for a in 0..n {
        let ca = set.get(a).class;
        if ca == PhonemeClass::Silence {
            continue;
        }
        for b in (a + 1)..n {
            if set.get(b).class != ca {
                continue;
            }
            if confusions.get(a, b) >= threshold && confusions.get(b, a) >= threshold {
                let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
                if ra != rb {
                    parent[ra.max(rb)] = ra.min(rb);
                }
            }
        }
    }
    let components: Vec<usize> = (0..n).map(|i| find(&mut parent, i)).collect();
    let map = P2VMap {
        map_id: map_id.into(),
        kind,
        sources: sources.into_iter().collect(),
        phonemes: set.clone(),
        assignment: canonical_labels(set, &components),
    };
    map.validate()?;
    Ok(map)
}

/// Element-wise sum of confusion matrices over one phoneme set.
pub fn pool_confusions<'a>(
    matrices: impl IntoIterator<Item = &'a ConfusionMatrix>,
) -> Result<ConfusionMatrix> {
    let mut iter = matrices.into_iter();
    let mut pooled = iter
        .next()
        .cloned()
        .ok_or_else(|| Error::Invalid("nothing to pool".into()))?;
    for m in iter {
        pooled.merge(m)?;
    }
    Ok(pooled)
}

pub fn apply_map<S: AsRef<str>>(phonemes: &[S], map: &P2VMap) -> Result<Vec<String>> {
    phonemes
        .iter()
        .map(|p| {
            map.viseme_of(p.as_ref())
                .map(str::to_string)
                .ok_or_else(|| Error::Unhoused {
                    phoneme: p.as_ref().to_string(),
                    map_id: map.map_id.clone(),
                })
        })
        .collect()
}

/// Word pronunciations relabelled into visemes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VisemeDict {
    pub map_id: String,
    entries: BTreeMap<String, Vec<String>>,
}

impl VisemeDict {
    pub fn from_entries(map_id: impl Into<String>, entries: BTreeMap<String, Vec<String>>) -> Self {
        VisemeDict {
            map_id: map_id.into(),
            entries,
        }
    }

    pub fn pronunciation(&self, word: &str) -> Option<&[String]> {
        self.entries.get(word).map(Vec::as_slice)
    }

    pub fn entries(&self) -> impl Iterator<Item = (&str, &[String])> {
        self.entries.iter().map(|(w, p)| (w.as_str(), p.as_slice()))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Groups of two or more words sharing one viseme string.
    pub fn homophemes(&self) -> Vec<Vec<&str>> {
        let mut by_pron: BTreeMap<&[String], Vec<&str>> = BTreeMap::new();
        for (w, p) in &self.entries {
            by_pron.entry(p.as_slice()).or_default().push(w.as_str());
        }
        by_pron.into_values().filter(|g| g.len() > 1).collect()
    }
}

pub fn map_dictionary(dict: &PronunciationDict, map: &P2VMap) -> Result<VisemeDict> {
    let mut entries = BTreeMap::new();
    for (word, pron) in dict.entries() {
        entries.insert(word.to_string(), apply_map(pron, map)?);
    }
    let vd = VisemeDict {
        map_id: map.map_id.clone(),
        entries,
    };
    let collisions = vd.homophemes();
    if !collisions.is_empty() {
        log::info!(
            "{}: {} homopheme groups, e.g. {:?}",
            map.map_id,
            collisions.len(),
            collisions[0]
        );
    }
    Ok(vd)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KindRange {
    pub min: usize,
    pub max: usize,
}

impl KindRange {
    pub fn range(&self) -> usize {
        self.max - self.min
    }
}

/// Viseme counts per map and their spread per map kind.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GranularityReport {
    pub counts: Vec<(String, MapKind, usize)>,
    pub by_kind: BTreeMap<MapKind, KindRange>,
}

pub fn map_stats(maps: &[P2VMap]) -> GranularityReport {
    let counts: Vec<(String, MapKind, usize)> = maps
        .iter()
        .map(|m| (m.map_id.clone(), m.kind, m.viseme_count()))
        .collect();
    let mut by_kind: BTreeMap<MapKind, KindRange> = BTreeMap::new();
    for (_, kind, c) in &counts {
        by_kind
            .entry(*kind)
            .and_modify(|r| {
                r.min = r.min.min(*c);
                r.max = r.max.max(*c);
            })
            .or_insert(KindRange { min: *c, max: *c });
    }
    GranularityReport { counts, by_kind }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::parse_dictionary;
    use proptest::prelude::*;

    fn set() -> PhonemeSet {
        PhonemeSet::from_symbols(["b", "p", "m", "n", "ih", "ae"]).unwrap()
    }

    fn diagonal() -> ConfusionMatrix {
        let mut m = ConfusionMatrix::new(set());
        for p in ["b", "p", "m", "n", "ih", "ae", "sil"] {
            m.add(p, p, 10).unwrap();
        }
        m
    }

    #[test]
    fn diagonal_gives_identity() {
        let map = derive_map(&diagonal(), MapKind::SD, "M_1", [1], 1).unwrap();
        assert_eq!(map.viseme_count(), 7);
        let id = P2VMap::identity("M_1", MapKind::SD, &set());
        assert_eq!(map.groups(), id.groups());
    }

    #[test]
    fn mutual_confusion_merges() {
        let mut m = diagonal();
        m.add("b", "p", 5).unwrap();
        m.add("p", "b", 3).unwrap();
        let map = derive_map(&m, MapKind::SD, "M_1", [1], 1).unwrap();
        assert_eq!(map.viseme_of("b"), map.viseme_of("p"));
        assert_eq!(map.viseme_count(), 6);
        // one-directional confusion does not merge
        let mut m = diagonal();
        m.add("b", "p", 5).unwrap();
        let map = derive_map(&m, MapKind::SD, "M_1", [1], 1).unwrap();
        assert_ne!(map.viseme_of("b"), map.viseme_of("p"));
    }

    #[test]
    fn chains_merge_transitively() {
        let mut m = diagonal();
        for (a, b) in [("b", "p"), ("p", "b"), ("p", "m"), ("m", "p")] {
            m.add(a, b, 2).unwrap();
        }
        let map = derive_map(&m, MapKind::SD, "M_1", [1], 1).unwrap();
        let v = map.viseme_of("b").unwrap();
        assert_eq!(map.viseme_of("p").unwrap(), v);
        assert_eq!(map.viseme_of("m").unwrap(), v);
        assert_ne!(map.viseme_of("n").unwrap(), v);
    }

    #[test]
    fn classes_never_mix_and_silence_stays_alone() {
        let mut m = diagonal();
        for (a, b) in [("b", "ih"), ("ih", "b"), ("sil", "n"), ("n", "sil")] {
            m.add(a, b, 9).unwrap();
        }
        let map = derive_map(&m, MapKind::SD, "M_1", [1], 1).unwrap();
        assert_eq!(map.viseme_count(), 7);
    }

    #[test]
    fn labels_follow_smallest_member() {
        let mut m = diagonal();
        m.add("p", "m", 1).unwrap();
        m.add("m", "p", 1).unwrap();
        let map = derive_map(&m, MapKind::SD, "M_1", [1], 1).unwrap();
        // sorted symbols: ae b ih m n p sil
        assert_eq!(map.viseme_of("ae"), Some("V1"));
        assert_eq!(map.viseme_of("b"), Some("V2"));
        assert_eq!(map.viseme_of("ih"), Some("V3"));
        assert_eq!(map.viseme_of("m"), Some("V4"));
        assert_eq!(map.viseme_of("p"), Some("V4"));
        assert_eq!(map.viseme_of("n"), Some("V5"));
        assert_eq!(map.viseme_of("sil"), Some("V6"));
    }

    #[test]
    fn empty_matrix_is_rejected() {
        let m = ConfusionMatrix::new(set());
        assert!(matches!(
            derive_map(&m, MapKind::MS, "M_[all]", [], 1),
            Err(Error::EmptyConfusions)
        ));
    }

    #[test]
    fn pooling() {
        let a = diagonal();
        let mut b = diagonal();
        b.add("b", "p", 2).unwrap();
        assert_eq!(pool_confusions([&a]).unwrap(), a);
        assert_eq!(
            pool_confusions([&a, &b]).unwrap(),
            pool_confusions([&b, &a]).unwrap()
        );
        let other = ConfusionMatrix::new(PhonemeSet::from_symbols(["b"]).unwrap());
        assert!(matches!(
            pool_confusions([&a, &other]),
            Err(Error::PhonemeSetMismatch)
        ));
    }

    #[test]
    fn pooled_minus_one_speaker_is_the_rest() {
        let mats: Vec<ConfusionMatrix> = (0..4)
            .map(|i| {
                let mut m = diagonal();
                m.add("b", "p", i).unwrap();
                m.add("ih", "ae", 2 * i + 1).unwrap();
                m
            })
            .collect();
        let mut all = pool_confusions(&mats).unwrap();
        all.subtract(&mats[2]).unwrap();
        let rest = pool_confusions([&mats[0], &mats[1], &mats[3]]).unwrap();
        assert_eq!(all, rest);
    }

    #[test]
    fn applying_maps() {
        let map = P2VMap::from_groups("M_1", MapKind::SD, [1], &set(), &[vec!["b", "p"]]).unwrap();
        let v = apply_map(&["b", "ih", "n"], &map).unwrap();
        assert_eq!(v.len(), 3);
        assert_eq!(v[0], map.viseme_of("p").unwrap());
        assert!(matches!(
            apply_map(&["zz"], &map),
            Err(Error::Unhoused { .. })
        ));
        let id = P2VMap::identity("M_1", MapKind::SD, &set());
        let v = apply_map(&["b", "p"], &id).unwrap();
        assert_ne!(v[0], v[1]);
    }

    #[test]
    fn homophemes_are_kept() {
        let dict = parse_dictionary("BIN b ih n\nPIN p ih n\nMAN m ae n\n", "t").unwrap();
        let map = P2VMap::from_groups(
            "M_1",
            MapKind::SD,
            [1],
            dict.phoneme_set(),
            &[vec!["b", "p"]],
        )
        .unwrap();
        let vd = map_dictionary(&dict, &map).unwrap();
        assert_eq!(vd.len(), 3);
        assert_eq!(vd.pronunciation("BIN"), vd.pronunciation("PIN"));
        assert_eq!(vd.homophemes(), vec![vec!["BIN", "PIN"]]);
        let id = P2VMap::identity("M_1", MapKind::SD, dict.phoneme_set());
        let vd = map_dictionary(&dict, &id).unwrap();
        assert!(vd.homophemes().is_empty());
        assert_eq!(vd.pronunciation("BIN").unwrap().len(), 3);
    }

    #[test]
    fn map_file_round_trip() {
        let map = P2VMap::from_groups(
            "M_!3",
            MapKind::SI,
            [1, 2, 4],
            &set(),
            &[vec!["b", "p", "m"], vec!["ae", "ih"]],
        )
        .unwrap();
        let text = map.to_text(&["tool: test".into()]);
        assert!(text.contains("# id: M_!3\n# kind: SI\n# sources: 1,2,4\n"));
        assert_eq!(P2VMap::from_text(&text, &set(), "t").unwrap(), map);
        let mixed = text
            .replace("ih\tV", "ih\tV9\n#")
            .replace("b\tV", "b\tV9\n#");
        assert!(P2VMap::from_text(&mixed, &set(), "t").is_err());
    }

    #[test]
    fn stats() {
        let big = PhonemeSet::from_symbols((0..43).map(|i| format!("c{i}"))).unwrap();
        let r = map_stats(&[P2VMap::identity("M_1", MapKind::SD, &big)]);
        assert_eq!(r.counts[0].2, 44);
        let a = P2VMap::from_groups("M_1", MapKind::SD, [1], &set(), &[vec!["b", "p", "m", "n"]])
            .unwrap();
        let b = P2VMap::from_groups("M_2", MapKind::SD, [2], &set(), &[vec!["b", "p"]]).unwrap();
        let r = map_stats(&[a, b]);
        assert_eq!(r.by_kind[&MapKind::SD], KindRange { min: 4, max: 6 });
        assert_eq!(r.by_kind[&MapKind::SD].range(), 2);
    }

    fn random_matrix(
        n_cons: usize,
        n_vow: usize,
        cells: &[(usize, usize, u64)],
    ) -> ConfusionMatrix {
        let syms: Vec<String> = (0..n_cons)
            .map(|i| format!("c{i}"))
            .chain((0..n_vow).map(|i| format!("v{i}")))
            .collect();
        let set = PhonemeSet::new(syms.iter().map(|s| {
            let class = if s.starts_with('v') {
                PhonemeClass::Vowel
            } else {
                PhonemeClass::Consonant
            };
            (s.clone(), class)
        }))
        .unwrap();
        let mut m = ConfusionMatrix::new(set.clone());
        m.add("sil", "sil", 1).unwrap();
        for &(a, b, c) in cells {
            let (a, b) = (
                set.get(a % set.len()).symbol.clone(),
                set.get(b % set.len()).symbol.clone(),
            );
            m.add(&a, &b, c).unwrap();
        }
        m
    }

    proptest! {
        #[test]
        fn raising_threshold_never_merges_more(
            cells in proptest::collection::vec((0usize..10, 0usize..10, 0u64..6), 0..40),
            t in 1u64..5,
        ) {
            let m = random_matrix(6, 3, &cells);
            let lo = derive_map(&m, MapKind::SD, "M_1", [1], t).unwrap();
            let hi = derive_map(&m, MapKind::SD, "M_1", [1], t + 1).unwrap();
            prop_assert!(hi.viseme_count() >= lo.viseme_count());
            // every higher-threshold viseme lies inside one lower-threshold viseme
            for members in hi.groups().values() {
                let outer: BTreeSet<_> = members.iter().map(|p| lo.viseme_of(p)).collect();
                prop_assert_eq!(outer.len(), 1);
            }
        }

        #[test]
        fn derived_maps_are_partitions(cells in proptest::collection::vec((0usize..10, 0usize..10, 0u64..6), 0..40)) {
            let m = random_matrix(6, 3, &cells);
            let map = derive_map(&m, MapKind::SD, "M_1", [1], 1).unwrap();
            prop_assert!(map.validate().is_ok());
            let total: usize = map.groups().values().map(Vec::len).sum();
            prop_assert_eq!(total, m.phonemes().len());
        }

        #[test]
        fn pooled_derivation_matches_summed_matrix(
            a in proptest::collection::vec((0usize..10, 0usize..10, 0u64..4), 0..20),
            b in proptest::collection::vec((0usize..10, 0usize..10, 0u64..4), 0..20),
        ) {
            let (ma, mb) = (random_matrix(6, 3, &a), random_matrix(6, 3, &b));
            let mut cells = a.clone();
            cells.extend(b.iter().cloned());
            let mut summed = random_matrix(6, 3, &cells);
            summed.add("sil", "sil", 1).unwrap();
            let pooled = pool_confusions([&ma, &mb]).unwrap();
            prop_assert_eq!(&pooled, &summed);
            prop_assert_eq!(
                derive_map(&pooled, MapKind::MS, "M_[all]", [1, 2], 1).unwrap(),
                derive_map(&summed, MapKind::MS, "M_[all]", [1, 2], 1).unwrap()
            );
        }
    }
}
