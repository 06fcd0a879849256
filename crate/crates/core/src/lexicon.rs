//! A small weather-report lexicon: gloss symbols, their phrase realizations
//! and phrase-level synonyms. It drives both the synthetic corpus generator
//! and the offline mock paraphraser.

use std::collections::HashSet;

use crate::text::Sentence;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SlotKind {
    Time,
    Place,
    Weather,
    Intensity,
}

pub const SLOT_ORDER: [SlotKind; 4] = [SlotKind::Time, SlotKind::Place, SlotKind::Weather, SlotKind::Intensity];

#[derive(Debug)]
pub struct Entry {
    pub gloss: &'static str,
    pub kind: SlotKind,
    /// Equivalent phrases; index 0 is the canonical realization.
    pub phrases: &'static [&'static str],
}

macro_rules! entry {
    ($gloss:literal, $kind:ident, [$($p:literal),+ $(,)?]) => {
        Entry { gloss: $gloss, kind: SlotKind::$kind, phrases: &[$($p),+] }
    };
}

pub static LEXICON: &[Entry] = &[
    entry!("TODAY", Time, ["today", "during the day", "over the course of today"]),
    entry!("TOMORROW", Time, ["tomorrow", "on the next day", "the following day"]),
    entry!("TONIGHT", Time, ["tonight", "this evening", "during the night"]),
    entry!(
        "WEEKEND",
        Time,
        ["at the weekend", "on saturday and sunday", "over the weekend"]
    ),
    entry!(
        "MONDAY",
        Time,
        ["on monday", "at the start of the week", "when the week begins"]
    ),
    entry!(
        "FRIDAY",
        Time,
        ["on friday", "at the end of the week", "before the weekend"]
    ),
    entry!("MORNING", Time, ["in the morning", "early in the day", "before noon"]),
    entry!("LATER", Time, ["later", "afterwards", "subsequently"]),
    entry!("NORTH", Place, ["in the north", "in northern regions", "up north"]),
    entry!("SOUTH", Place, ["in the south", "in southern regions", "down south"]),
    entry!("EAST", Place, ["in the east", "in eastern regions", "out east"]),
    entry!("WEST", Place, ["in the west", "in western regions", "out west"]),
    entry!("COAST", Place, ["on the coast", "along the coast", "near the sea"]),
    entry!(
        "MOUNTAIN",
        Place,
        ["in the mountains", "in the alps", "at higher altitudes"]
    ),
    entry!("VALLEY", Place, ["in the valleys", "in low areas", "in the lowlands"]),
    entry!("CITY", Place, ["in the cities", "in urban areas", "around the towns"]),
    entry!("RAIN", Weather, ["it rains", "there is rain", "rain falls"]),
    entry!("SUN", Weather, ["the sun shines", "it is sunny", "there is sunshine"]),
    entry!("SNOW", Weather, ["it snows", "there is snow", "snow falls"]),
    entry!("WIND", Weather, ["it is windy", "there is wind", "the wind blows"]),
    entry!("FOG", Weather, ["it is foggy", "there is fog", "fog forms"]),
    entry!("STORM", Weather, ["storms occur", "there are storms", "it is stormy"]),
    entry!(
        "CLOUD",
        Weather,
        ["it is cloudy", "there are clouds", "clouds dominate"]
    ),
    entry!(
        "THUNDER",
        Weather,
        ["thunderstorms develop", "there is thunder", "thunder rolls"]
    ),
    entry!("STRONG", Intensity, ["strongly", "heavily", "intensely"]),
    entry!("WEAK", Intensity, ["slightly", "lightly", "a little"]),
    entry!("LOCAL", Intensity, ["locally", "in places", "here and there"]),
    entry!("OFTEN", Intensity, ["often", "frequently", "repeatedly"]),
    entry!("BRIEF", Intensity, ["briefly", "for a short time", "only shortly"]),
    entry!("STEADY", Intensity, ["steadily", "without a break", "continuously"]),
    entry!("SUDDEN", Intensity, ["suddenly", "all of a sudden", "without warning"]),
    entry!("MODERATE", Intensity, ["moderately", "to some extent", "somewhat"]),
];

/// Words the mock keyword extractor treats as function words.
pub static STOPWORDS: &[&str] = &[
    "a", "an", "and", "are", "at", "before", "during", "in", "is", "it", "near", "of", "on", "out", "over", "the",
    "there", "this", "to", "up", "when", "down", "along", "around", "for", "all", "only", "without", "some",
];

pub fn entries_of(kind: SlotKind) -> impl Iterator<Item = (usize, &'static Entry)> {
    LEXICON.iter().enumerate().filter(move |(_, e)| e.kind == kind)
}

pub fn entry_by_gloss(gloss: &str) -> Option<(usize, &'static Entry)> {
    LEXICON.iter().enumerate().find(|(_, e)| e.gloss == gloss)
}

/// A sentence segmented into lexicon phrases and free words.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Segment {
    Slot { entry: usize, alt: usize },
    Word(String),
}

/// One way of re-realizing a segmented sentence: a phrase alternative per
/// slot, plus whether the leading/trailing time phrase is moved.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
struct Realization {
    alts: Vec<usize>,
    swapped: bool,
}

/// Rule-based paraphraser over [`LEXICON`]: synonym substitution at phrase
/// level plus moving a time adverbial between the front and the back.
#[derive(Debug)]
pub struct Paraphraser {
    // (phrase tokens, entry, alt), longest phrases first
    phrases: Vec<(Vec<&'static str>, usize, usize)>,
}

impl Default for Paraphraser {
    fn default() -> Self {
        Self::new()
    }
}

impl Paraphraser {
    pub fn new() -> Self {
        let mut phrases = Vec::new();
        for (entry_idx, entry) in LEXICON.iter().enumerate() {
            for (alt, phrase) in entry.phrases.iter().enumerate() {
                phrases.push((phrase.split(' ').collect::<Vec<_>>(), entry_idx, alt));
            }
        }
        phrases.sort_by(|a, b| b.0.len().cmp(&a.0.len()).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        Paraphraser { phrases }
    }

    /// Greedy longest-match segmentation, left to right.
    pub fn segment(&self, tokens: &[String]) -> Vec<Segment> {
        let mut out = Vec::new();
        let mut i = 0;
        'outer: while i < tokens.len() {
            for (words, entry, alt) in &self.phrases {
                let end = i + words.len();
                if end <= tokens.len() && tokens[i..end].iter().zip(words).all(|(a, b)| a == b) {
                    out.push(Segment::Slot {
                        entry: *entry,
                        alt: *alt,
                    });
                    i = end;
                    continue 'outer;
                }
            }
            out.push(Segment::Word(tokens[i].clone()));
            i += 1;
        }
        out
    }

    fn can_swap(segments: &[Segment]) -> bool {
        let is_time = |s: Option<&Segment>| matches!(s, Some(Segment::Slot { entry, .. }) if LEXICON[*entry].kind == SlotKind::Time);
        segments.len() > 1 && (is_time(segments.first()) || is_time(segments.last()))
    }

    fn realize(segments: &[Segment], r: &Realization) -> Sentence {
        let mut slot = 0;
        let mut parts: Vec<&str> = Vec::with_capacity(segments.len());
        for seg in segments {
            match seg {
                Segment::Slot { entry, .. } => {
                    parts.push(LEXICON[*entry].phrases[r.alts[slot]]);
                    slot += 1;
                }
                Segment::Word(w) => parts.push(w),
            }
        }
        if r.swapped {
            let first_is_time = matches!(
                segments.first(),
                Some(Segment::Slot { entry, .. }) if LEXICON[*entry].kind == SlotKind::Time
            );
            if first_is_time {
                parts.rotate_left(1);
            } else {
                parts.rotate_right(1);
            }
        }
        Sentence::new(&parts.join(" "))
    }

    fn realizations(segments: &[Segment]) -> Vec<Realization> {
        let sizes: Vec<usize> = segments
            .iter()
            .filter_map(|s| match s {
                Segment::Slot { entry, .. } => Some(LEXICON[*entry].phrases.len()),
                Segment::Word(_) => None,
            })
            .collect();
        let swaps: &[bool] = if Self::can_swap(segments) {
            &[false, true]
        } else {
            &[false]
        };
        let mut out = Vec::new();
        let total: usize = sizes.iter().product();
        for &swapped in swaps {
            for mut code in 0..total {
                let mut alts = vec![0; sizes.len()];
                for (slot, size) in sizes.iter().enumerate().rev() {
                    alts[slot] = code % size;
                    code /= size;
                }
                out.push(Realization { alts, swapped });
            }
        }
        out
    }

    /// Every distinct re-realization of `sentence` other than itself, in
    /// enumeration order.
    pub fn all_variants(&self, sentence: &Sentence) -> Vec<Sentence> {
        let segments = self.segment(sentence.tokens());
        let mut seen: HashSet<Vec<String>> = HashSet::new();
        seen.insert(sentence.tokens().to_vec());
        Self::realizations(&segments)
            .iter()
            .map(|r| Self::realize(&segments, r))
            .filter(|s| seen.insert(s.tokens().to_vec()))
            .collect()
    }

    /// Up to `k` distinct paraphrases, chosen greedily so each new one is as
    /// far as possible (in phrase choices) from the input and from the ones
    /// already chosen. Deterministic.
    pub fn diverse_variants(&self, sentence: &Sentence, k: usize) -> Vec<Sentence> {
        let segments = self.segment(sentence.tokens());
        let original = Realization {
            alts: segments
                .iter()
                .filter_map(|s| match s {
                    Segment::Slot { alt, .. } => Some(*alt),
                    Segment::Word(_) => None,
                })
                .collect(),
            swapped: false,
        };
        let mut seen: HashSet<Vec<String>> = HashSet::new();
        seen.insert(sentence.tokens().to_vec());
        let mut pool: Vec<(Realization, Sentence)> = Vec::new();
        for r in Self::realizations(&segments) {
            let s = Self::realize(&segments, &r);
            if seen.insert(s.tokens().to_vec()) {
                pool.push((r, s));
            }
        }
        let distance = |a: &Realization, b: &Realization| {
            a.alts.iter().zip(&b.alts).filter(|(x, y)| x != y).count() + usize::from(a.swapped != b.swapped)
        };
        let mut chosen = vec![original];
        let mut out = Vec::new();
        while out.len() < k && !pool.is_empty() {
            let (best, _) = pool
                .iter()
                .enumerate()
                .map(|(i, (r, _))| (i, chosen.iter().map(|c| distance(r, c)).min().unwrap_or(0)))
                .fold((0, 0), |acc, (i, d)| if d > acc.1 { (i, d) } else { acc });
            let (r, s) = pool.remove(best);
            chosen.push(r);
            out.push(s);
        }
        out
    }
}

/// Canonical sentence for a list of glosses in slot order.
pub fn realize_glosses(entries: &[usize], alts: &[usize], swapped: bool) -> Sentence {
    let mut parts: Vec<&str> = entries.iter().zip(alts).map(|(&e, &a)| LEXICON[e].phrases[a]).collect();
    if swapped && parts.len() > 1 {
        parts.rotate_left(1);
    }
    Sentence::new(&parts.join(" "))
}
