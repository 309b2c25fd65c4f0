//! Seeded synthetic long-document QA records for offline runs and tests.
//!
//! A document is a run of paragraphs of filler sentences with one fact
//! sentence ("The <entity> was founded in <city>.") planted in a random
//! paragraph. The query asks for the city, so the only sentence sharing
//! query vocabulary is the fact itself.

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::eval::QARecord;

const ENTITIES: &[&str] = &[
    "Amber Guild",
    "Cobalt Society",
    "Harbor League",
    "Juniper Order",
    "Lantern Company",
    "Marble Institute",
    "Nimbus Club",
    "Orchid Council",
    "Quartz Union",
    "Saffron Academy",
    "Tundra Circle",
    "Willow Trust",
];

const CITIES: &[&str] = &[
    "Lisbon",
    "Oslo",
    "Quito",
    "Nairobi",
    "Hanoi",
    "Perth",
    "Tbilisi",
    "Valparaiso",
    "Bergen",
    "Cusco",
    "Dakar",
    "Tallinn",
];

const SUBJECTS: &[&str] = &[
    "river",
    "market",
    "garden",
    "railway",
    "archive",
    "festival",
    "harvest",
    "bridge",
    "orchestra",
    "forest",
    "harbor",
    "library",
    "mountain",
    "workshop",
    "theater",
    "quarry",
];

const VERBS: &[&str] = &[
    "shaped",
    "crossed",
    "followed",
    "restored",
    "surrounded",
    "supplied",
    "recorded",
    "delayed",
    "outlived",
];

const MODIFIERS: &[&str] = &[
    "quiet", "northern", "old", "seasonal", "narrow", "crowded", "distant", "painted", "stone",
    "early", "western",
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SynthSpec {
    pub paragraphs: usize,
    /// Filler sentences per paragraph, drawn uniformly from this range.
    pub sentences: (usize, usize),
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            paragraphs: 6,
            sentences: (3, 6),
        }
    }
}

fn filler(rng: &mut ChaCha8Rng) -> String {
    let pick =
        |rng: &mut ChaCha8Rng, xs: &[&'static str]| *xs.choose(rng).expect("non-empty word list");
    format!(
        "The {} {} {} the {} {}.",
        pick(rng, MODIFIERS),
        pick(rng, SUBJECTS),
        pick(rng, VERBS),
        pick(rng, MODIFIERS),
        pick(rng, SUBJECTS)
    )
}

/// One record; identical `(seed, spec)` always gives the identical record.
pub fn synthetic_record(seed: u64, spec: &SynthSpec) -> QARecord {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let entity = *ENTITIES.choose(&mut rng).expect("entities");
    let city = *CITIES.choose(&mut rng).expect("cities");
    let paragraphs = spec.paragraphs.max(1);
    let planted = rng.random_range(0..paragraphs);
    let (lo, hi) = (
        spec.sentences.0.max(1),
        spec.sentences.1.max(spec.sentences.0.max(1)),
    );
    let mut parts = Vec::with_capacity(paragraphs);
    for p in 0..paragraphs {
        let n = rng.random_range(lo..=hi);
        let mut sentences: Vec<String> = (0..n).map(|_| filler(&mut rng)).collect();
        if p == planted {
            let at = rng.random_range(0..=sentences.len());
            sentences.insert(at, format!("The {entity} was founded in {city}."));
        }
        parts.push(sentences.join(" "));
    }
    QARecord {
        record_id: format!("synth-{seed}"),
        dataset: "synthetic".into(),
        context: parts.join("\n\n"),
        input: format!("In which city was the {entity} founded?"),
        answers: vec![city.to_string()],
    }
}

/// `count` records with seeds `base_seed..base_seed + count`.
pub fn synthetic_corpus(base_seed: u64, count: usize, spec: &SynthSpec) -> Vec<QARecord> {
    (0..count as u64)
        .map(|i| synthetic_record(base_seed + i, spec))
        .collect()
}
