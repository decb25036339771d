//! Randomised metric cases built from a fixed vocabulary whose tokens,
//! entity mentions and dates are known by construction, plus brute-force
//! reference implementations of every metric.

use std::collections::{BTreeMap, BTreeSet};

use storyrag::eval::{
    coverage, global_cohesion, local_cohesion, sub_signals, support_ratio, EntityMatcher, MetricConfig, SubSignals,
    SupportMode,
};
use storyrag::kg::{Term, Triple};
use storyrag::retrieve::{EvidencePack, Factlet, ItemRef};
use storyrag::rng::SplitMix64;

pub const TOLERANCE: f64 = 1e-9;

struct Item {
    surface: &'static str,
    tokens: &'static [&'static str],
    stop: bool,
    date: Option<(i32, u32, u32)>,
}

const fn word(w: &'static str, tokens: &'static [&'static str]) -> Item {
    Item { surface: w, tokens, stop: false, date: None }
}

const fn stop(w: &'static str, tokens: &'static [&'static str]) -> Item {
    Item { surface: w, tokens, stop: true, date: None }
}

const fn date(w: &'static str, tokens: &'static [&'static str], d: (i32, u32, u32)) -> Item {
    Item { surface: w, tokens, stop: false, date: Some(d) }
}

const VOCAB: &[Item] = &[
    word("crowd", &["crowd"]),
    word("anthem", &["anthem"]),
    word("guitar", &["guitar"]),
    word("famine", &["famine"]),
    word("stage", &["stage"]),
    word("encore", &["encore"]),
    word("relief", &["relief"]),
    word("broadcast", &["broadcast"]),
    word("piano", &["piano"]),
    word("summer", &["summer"]),
    stop("the", &["the"]),
    stop("and", &["and"]),
    stop("of", &["of"]),
    stop("was", &["was"]),
    word("Queen", &["queen"]),
    word("Wembley Stadium", &["wembley", "stadium"]),
    word("Freddie Mercury", &["freddie", "mercury"]),
    word("Freddie", &["freddie"]),
    word("Bob Geldof", &["bob", "geldof"]),
    date("13 July 1985", &["13", "july", "1985"], (1985, 7, 13)),
    date("1985-07-12", &["1985", "07", "12"], (1985, 7, 12)),
    date("July 14, 1985", &["july", "14", "1985"], (1985, 7, 14)),
];

const E: &str = "http://wembrewind.live/ex#";

/// (local name, label, surface forms as token runs)
const ENTITIES: &[(&str, &str, &[&[&str]])] = &[
    ("Queen", "Queen", &[&["queen"]]),
    ("WembleyStadium", "Wembley Stadium", &[&["wembley", "stadium"]]),
    ("Freddie", "Freddie Mercury", &[&["freddie", "mercury"], &["freddie"]]),
    ("BobGeldof", "Bob Geldof", &[&["bob", "geldof"]]),
];

#[derive(Debug, Clone)]
pub struct Sentence {
    pub text: String,
    pub tokens: Vec<String>,
    pub content: BTreeSet<String>,
    pub dates: Vec<(i32, u32, u32)>,
}

fn sentence(rng: &mut SplitMix64) -> Sentence {
    let n = 2 + rng.below(6);
    let items: Vec<&Item> = (0..n).map(|_| &VOCAB[rng.below(VOCAB.len())]).collect();
    let mut text = items.iter().map(|i| i.surface).collect::<Vec<_>>().join(" ");
    if let Some(first) = text.get(..1) {
        text = first.to_uppercase() + &text[1..];
    }
    text.push('.');
    let tokens: Vec<String> = items.iter().flat_map(|i| i.tokens.iter().map(|t| t.to_string())).collect();
    let content = items.iter().filter(|i| !i.stop).flat_map(|i| i.tokens.iter().map(|t| t.to_string())).collect();
    let dates = items.iter().filter_map(|i| i.date).collect();
    Sentence { text, tokens, content, dates }
}

pub struct Case {
    pub sections: Vec<Vec<Sentence>>,
    pub factlets: Vec<Sentence>,
    pub triples: Vec<Triple>,
    pub top_n: usize,
}

impl Case {
    pub fn generate(rng: &mut SplitMix64) -> Case {
        let n_sections = 1 + rng.below(4);
        let mut budget = 10;
        let mut sections = Vec::new();
        for _ in 0..n_sections {
            if budget == 0 {
                break;
            }
            let n = 1 + rng.below(budget.min(4));
            budget -= n;
            sections.push((0..n).map(|_| sentence(rng)).collect());
        }
        let factlets: Vec<Sentence> = (0..1 + rng.below(10)).map(|_| sentence(rng)).collect();
        let entity = |rng: &mut SplitMix64| Term::iri(format!("{E}{}", ENTITIES[rng.below(ENTITIES.len())].0));
        let triples = (0..1 + rng.below(6))
            .map(|_| {
                let s = entity(rng);
                if rng.below(4) == 0 {
                    Triple::new(s, Term::iri("http://schema.org/startDate"), Term::literal("13 July 1985"))
                } else {
                    Triple::new(s, Term::iri(format!("{E}rel")), entity(rng))
                }
            })
            .collect();
        Case { sections, factlets, triples, top_n: 1 + rng.below(5) }
    }

    pub fn sentences(&self) -> Vec<&Sentence> {
        self.sections.iter().flatten().collect()
    }

    pub fn entities(&self) -> BTreeMap<String, String> {
        ENTITIES.iter().map(|(l, label, _)| (format!("{E}{l}"), label.to_string())).collect()
    }

    pub fn pack(&self) -> EvidencePack {
        let mut p: EvidencePack = serde_json::from_value(serde_json::json!({
            "beat_index": 0, "cq_id": "CQ-X", "strategy": "kg", "question": "q",
            "bound_entities": [], "triples": [], "result_rows": {"columns": [], "rows": []},
            "snippets": [], "factlets": [], "provenance": [], "entities": {}, "sparse": false
        }))
        .unwrap();
        p.factlets = self
            .factlets
            .iter()
            .enumerate()
            .map(|(i, f)| Factlet {
                id: format!("F{}", i + 1),
                text: f.text.clone(),
                supporting_items: vec![ItemRef::Triple(0)],
            })
            .collect();
        p.triples = self.triples.clone();
        p.entities = self.entities();
        p
    }
}

fn contains_run(hay: &[String], needle: &[&str]) -> bool {
    hay.windows(needle.len()).any(|w| w.iter().zip(needle).all(|(a, b)| a == b))
}

fn count_run(hay: &[String], needle: &[&str]) -> usize {
    hay.windows(needle.len()).filter(|w| w.iter().zip(needle).all(|(a, b)| a == b)).count()
}

fn overlap(a: &BTreeSet<String>, b: &BTreeSet<String>) -> (usize, usize) {
    (a.iter().filter(|t| b.contains(*t)).count(), a.iter().chain(b.iter()).collect::<BTreeSet<_>>().len())
}

fn label_tokens(term: &Term) -> Vec<String> {
    match term {
        Term::Literal(l) => {
            l.value.split(|c: char| !c.is_alphanumeric()).filter(|s| !s.is_empty()).map(|s| s.to_lowercase()).collect()
        }
        other => {
            let local = other.value().rsplit('#').next().unwrap();
            let (_, label, _) = ENTITIES.iter().find(|(l, ..)| *l == local).unwrap();
            label.split(' ').map(str::to_lowercase).collect()
        }
    }
}

fn phrase_in(hay: &[String], phrase: &[String]) -> bool {
    let refs: Vec<&str> = phrase.iter().map(String::as_str).collect();
    contains_run(hay, &refs)
}

pub fn oracle_support(case: &Case, mode: SupportMode) -> f64 {
    let sentences = case.sentences();
    let hits = sentences
        .iter()
        .filter(|s| match mode {
            SupportMode::Factlet => case.factlets.iter().any(|f| {
                let (shared, union) = overlap(&s.content, &f.content);
                shared >= 2 && shared as f64 / union as f64 >= 0.22
            }),
            SupportMode::Triple => case.triples.iter().any(|t| {
                phrase_in(&s.tokens, &label_tokens(&t.subject)) && phrase_in(&s.tokens, &label_tokens(&t.object))
            }),
            SupportMode::Fallback => oracle_mentions(&s.tokens).len() >= 2,
        })
        .count();
    hits as f64 / sentences.len() as f64
}

pub fn oracle_factlet_coverage(case: &Case) -> f64 {
    let all: BTreeSet<String> = case.sentences().iter().flat_map(|s| s.content.iter().cloned()).collect();
    let hit = case.factlets.iter().filter(|f| overlap(&f.content, &all).0 >= 2).count();
    hit as f64 / case.factlets.len() as f64
}

pub fn oracle_triple_coverage(case: &Case) -> f64 {
    let mut degree: BTreeMap<String, usize> = BTreeMap::new();
    for t in &case.triples {
        for term in [&t.subject, &t.object] {
            if !term.is_literal() {
                *degree.entry(term.value().to_string()).or_default() += 1;
            }
        }
    }
    let mut ranked: Vec<(String, usize)> = degree.into_iter().collect();
    // selection by repeated maximum: highest degree, then smallest IRI
    let mut top = Vec::new();
    while top.len() < case.top_n && !ranked.is_empty() {
        let best = (0..ranked.len())
            .max_by(|&a, &b| ranked[a].1.cmp(&ranked[b].1).then(ranked[b].0.cmp(&ranked[a].0)))
            .unwrap();
        top.push(ranked.remove(best).0);
    }
    let tokens: Vec<String> = case.sentences().iter().flat_map(|s| s.tokens.iter().cloned()).collect();
    let hit = top.iter().filter(|iri| phrase_in(&tokens, &label_tokens(&Term::iri(iri.as_str())))).count();
    hit as f64 / top.len() as f64
}

fn oracle_local(sentences: &[Sentence]) -> f64 {
    if sentences.len() < 2 {
        return 0.0;
    }
    let inside = (1..sentences.len())
        .filter(|&i| {
            let (shared, union) = overlap(&sentences[i - 1].content, &sentences[i].content);
            let j = if union == 0 { 0.0 } else { shared as f64 / union as f64 };
            (0.15..=0.65).contains(&j)
        })
        .count();
    inside as f64 / (sentences.len() - 1) as f64
}

fn oracle_mentions(tokens: &[String]) -> BTreeSet<&'static str> {
    ENTITIES.iter().filter(|(_, _, forms)| forms.iter().any(|f| contains_run(tokens, f))).map(|(l, ..)| *l).collect()
}

fn share(flags: &[bool]) -> f64 {
    if flags.is_empty() {
        1.0
    } else {
        flags.iter().filter(|f| **f).count() as f64 / flags.len() as f64
    }
}

pub fn oracle_sub_signals(case: &Case) -> [f64; 5] {
    let sections = &case.sections;
    let local = sections.iter().map(|s| oracle_local(s)).sum::<f64>() / sections.len() as f64;
    let mentions: Vec<BTreeSet<&str>> = sections
        .iter()
        .map(|s| oracle_mentions(&s.iter().flat_map(|x| x.tokens.iter().cloned()).collect::<Vec<_>>()))
        .collect();
    let flow: Vec<bool> =
        (1..sections.len()).map(|i| mentions[i - 1].iter().any(|e| mentions[i].contains(e))).collect();
    let bridge: Vec<bool> = (1..sections.len())
        .map(|j| {
            let opening = oracle_mentions(&sections[j][0].tokens);
            opening.iter().any(|e| mentions[..j].iter().any(|m| m.contains(e)))
        })
        .collect();
    let dates: Vec<(i32, u32, u32)> = case.sentences().iter().flat_map(|s| s.dates.iter().copied()).collect();
    let temporal: Vec<bool> = (1..dates.len()).map(|i| dates[i - 1] <= dates[i]).collect();
    let mut scores = Vec::new();
    for (_, _, forms) in ENTITIES {
        let counts: Vec<usize> =
            forms.iter().map(|f| case.sentences().iter().map(|s| count_run(&s.tokens, f)).sum()).collect();
        let mentions: usize = counts.iter().sum();
        let used = counts.iter().filter(|c| **c > 0).count();
        if mentions >= 2 {
            scores.push(1.0 - (used as f64 - 1.0) / (mentions as f64 - 1.0));
        }
    }
    let reference = if scores.is_empty() { 1.0 } else { scores.iter().sum::<f64>() / scores.len() as f64 };
    [local, share(&flow), share(&bridge), share(&temporal), reference]
}

pub fn oracle_global(case: &Case) -> f64 {
    let s = oracle_sub_signals(case);
    0.35 * s[0] + 0.25 * s[1] + 0.15 * s[2] + 0.15 * s[3] + 0.10 * s[4]
}

fn close(label: &str, got: f64, want: f64) -> Result<(), String> {
    if (got - want).abs() <= TOLERANCE {
        Ok(())
    } else {
        Err(format!("{label}: got {got}, oracle {want}"))
    }
}

/// Checks one case against every metric; the error names the first mismatch.
pub fn check_case(case: &Case) -> Result<(), String> {
    let cfg = MetricConfig { top_degree_entity_count: case.top_n, ..MetricConfig::default() };
    let pack = case.pack();
    let texts: Vec<String> = case.sentences().iter().map(|s| s.text.clone()).collect();
    let story = texts.join(" ");
    for mode in [SupportMode::Factlet, SupportMode::Triple, SupportMode::Fallback] {
        let got = support_ratio(&texts, &pack, mode, &cfg).map_err(|e| e.to_string())?;
        close(&format!("support {mode:?}"), got, oracle_support(case, mode))?;
    }
    let got = coverage(&story, &pack, SupportMode::Factlet, &cfg).map_err(|e| e.to_string())?;
    close("factlet coverage", got, oracle_factlet_coverage(case))?;
    let got = coverage(&story, &pack, SupportMode::Triple, &cfg).map_err(|e| e.to_string())?;
    close("triple coverage", got, oracle_triple_coverage(case))?;
    for (i, section) in case.sections.iter().enumerate() {
        let t: Vec<String> = section.iter().map(|s| s.text.clone()).collect();
        close(&format!("local cohesion section {i}"), local_cohesion(&t, &cfg), oracle_local(section))?;
    }
    let sections: Vec<Vec<String>> = case.sections.iter().map(|s| s.iter().map(|x| x.text.clone()).collect()).collect();
    let matcher = EntityMatcher::new(&case.entities());
    let SubSignals { local_cohesion, entity_flow, bridge_rate, temporal_consistency, reference_stability } =
        sub_signals(&sections, &matcher, &cfg);
    let want = oracle_sub_signals(case);
    let names = ["local", "entity_flow", "bridge_rate", "temporal", "reference"];
    for ((name, got), want) in names
        .iter()
        .zip([local_cohesion, entity_flow, bridge_rate, temporal_consistency, reference_stability])
        .zip(want)
    {
        close(name, got, want)?;
    }
    close("global cohesion", global_cohesion(&sections, &matcher, &cfg), oracle_global(case))
}

/// Runs `n` seeded cases; returns the number checked.
pub fn run_cases(seed: u64, n: usize) -> Result<usize, String> {
    let mut rng = SplitMix64::new(seed);
    for i in 0..n {
        let case = Case::generate(&mut rng);
        check_case(&case).map_err(|e| {
            let texts: Vec<&str> = case.sentences().iter().map(|s| s.text.as_str()).collect();
            format!("case {i}: {e}\n  sentences: {texts:?}")
        })?;
    }
    Ok(n)
}

/// Hand-computed Flesch Reading Ease values under the frozen syllable rule.
pub const FRE_CASES: &[(&str, f64)] = &[
    // 3 words, 1 sentence, 3 syllables
    ("The cat sat.", 119.19),
    // Queen 1, played 1, Wembley 2, Stadium 2
    ("Queen played Wembley Stadium.", 75.875),
    // Live 1, Aid 1, raised 2, money 2, It 1, was 1, huge 1
    ("Live Aid raised money. It was huge.", 94.511_071_428_571),
    // The 1, little 2, table 2, was 1, simple 2
    ("The little table was simple.", 66.4),
    // Freddie 1, Mercury 3, sang 1, The 1, crowd 1, of 1, seventy 3, two 1, thousand 2, people 2, answered 3
    ("Freddie Mercury sang. The crowd of seventy-two thousand people answered!", 55.125_227_272_727),
];

pub const FRE_TOLERANCE: f64 = 0.01;

/// The constructed token lists agree with the shipped tokenizer and stopword list.
pub fn vocabulary_matches_tokenizer() -> Result<(), String> {
    for item in VOCAB {
        let raw = storyrag::text::raw_tokens(item.surface);
        if raw != item.tokens {
            return Err(format!("{}: tokens {raw:?}", item.surface));
        }
        let content = storyrag::text::token_set(item.surface);
        if content.is_empty() != item.stop {
            return Err(format!("{}: stopword status", item.surface));
        }
    }
    Ok(())
}
