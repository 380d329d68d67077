//! A small generated world: people, cities, countries, companies and
//! universities tied together by ten relations, each fact told by a few
//! templated sentences.
//!
//! The schema is fixed: a person's citizenship is the country of their
//! birth city, nobody lives where they were born, and no company employs its
//! own founder, so every linked entity pair carries exactly one relation.

use std::fs;
use std::io;
use std::path::Path;

use rand::seq::{index, SliceRandom};
use rand::Rng as _;

use crate::corpus::Corpus;
use crate::kg::{KgError, TripletStore, Vocab};
use crate::rng::{self, Stream};

pub const RELATIONS: [&str; 10] = [
    "born_in",
    "lives_in",
    "citizen_of",
    "works_for",
    "educated_at",
    "spouse",
    "located_in",
    "headquartered_in",
    "founded_by",
    "campus_in",
];

const TEMPLATES: [[&str; 3]; 10] = [
    ["{h} was born in {t} .", "{h} is a native of {t} .", "the birthplace of {h} is {t} ."],
    ["{h} lives in {t} .", "{h} currently resides in {t} .", "{h} has a home in {t} ."],
    ["{h} is a citizen of {t} .", "{h} holds a passport from {t} .", "{h} has the nationality of {t} ."],
    ["{h} works for {t} .", "{h} is employed by {t} .", "{h} has a job at {t} ."],
    ["{h} studied at {t} .", "{h} graduated from {t} .", "{h} was educated at {t} ."],
    ["{h} is married to {t} .", "{h} is the spouse of {t} .", "{h} wed {t} ."],
    ["{h} is a city in {t} .", "{h} lies within {t} .", "{h} is located in {t} ."],
    ["{h} is headquartered in {t} .", "{h} has its head office in {t} .", "the main office of {h} is in {t} ."],
    ["{h} was founded by {t} .", "{h} was started by {t} .", "{t} is the founder of {h} ."],
    ["{h} has a campus in {t} .", "{h} is situated in {t} .", "students of {h} attend classes in {t} ."],
];

const FILLER: [&str; 5] = [
    "the weather was mild that year .",
    "nothing of note happened on that day .",
    "the report was published in the spring .",
    "many people attended the meeting .",
    "the results were announced later .",
];

const FIRST: [&str; 20] = [
    "alan", "beth", "carl", "dina", "emil", "fern", "gus", "hana", "ivor", "jade", "karl", "lena", "milo", "nora",
    "otto", "pia", "quin", "rosa", "saul", "tess",
];
const LAST: [&str; 20] = [
    "abbott", "barlow", "crane", "dalton", "ellis", "fisher", "garner", "hughes", "irving", "jensen", "keller",
    "lowell", "mercer", "norton", "osborne", "porter", "quincy", "rhodes", "sutton", "turner",
];
const CITY_PREFIX: [&str; 10] = ["port", "north", "south", "east", "west", "new", "old", "lake", "fort", "mount"];
const CITY_ROOT: [&str; 12] = [
    "aldmere", "brannock", "corvel", "dunhale", "eskar", "farrow", "glenmoor", "harwick", "istria", "jorvale",
    "kestrel", "lindor",
];
const COUNTRIES: [&str; 10] = [
    "valdoria", "ostrela", "kestania", "mirovia", "tarsland", "belmora", "quessia", "norvane", "castilla", "duvenor",
];
const COMPANY_ROOT: [&str; 10] =
    ["zentro", "quorix", "lumina", "vantix", "orbis", "kaldor", "nexa", "pyxis", "solvane", "trivex"];
const COMPANY_SUFFIX: [&str; 2] = ["systems", "labs"];
const UNI_ROOT: [&str; 10] =
    ["ashford", "bellamy", "carrow", "delmont", "everly", "fairholt", "greystone", "hollis", "ivywood", "juniper"];
const UNI_SUFFIX: [&str; 2] = ["institute", "college"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SyntheticConfig {
    pub persons: usize,
    pub cities: usize,
    pub countries: usize,
    pub companies: usize,
    pub universities: usize,
    pub spouse_pairs: usize,
    /// Sentences per fact, at most one per template.
    pub sentences_per_fact: usize,
    /// Extra sentences that mention no entity.
    pub filler_sentences: usize,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            persons: 110,
            cities: 40,
            countries: 10,
            companies: 20,
            universities: 20,
            spouse_pairs: 30,
            sentences_per_fact: 3,
            filler_sentences: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SyntheticEntity {
    /// Identifier used in the triples file.
    pub name: String,
    /// Multi-word surface form used in sentences.
    pub surface: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticData {
    pub entities: Vec<SyntheticEntity>,
    pub triplets: Vec<(u32, u32, u32)>,
    pub sentences: Vec<String>,
}

fn pick_names<F: Fn(usize) -> String>(n: usize, space: usize, make: F, rng: &mut crate::rng::Rng) -> Vec<String> {
    assert!(n <= space, "asked for {n} names from a space of {space}");
    index::sample(rng, space, n).into_iter().map(make).collect()
}

pub fn generate(cfg: &SyntheticConfig, seed: u64) -> SyntheticData {
    let mut rng = rng::derive(seed, Stream::Synthetic, &[]);
    let persons = pick_names(cfg.persons, FIRST.len() * LAST.len(), |i| format!("{} {}", FIRST[i % FIRST.len()], LAST[i / FIRST.len()]), &mut rng);
    let cities = pick_names(
        cfg.cities,
        CITY_PREFIX.len() * CITY_ROOT.len(),
        |i| format!("{} {}", CITY_PREFIX[i % CITY_PREFIX.len()], CITY_ROOT[i / CITY_PREFIX.len()]),
        &mut rng,
    );
    let countries = pick_names(cfg.countries, COUNTRIES.len(), |i| COUNTRIES[i].to_string(), &mut rng);
    let companies = pick_names(
        cfg.companies,
        COMPANY_ROOT.len() * COMPANY_SUFFIX.len(),
        |i| format!("{} {}", COMPANY_ROOT[i % COMPANY_ROOT.len()], COMPANY_SUFFIX[i / COMPANY_ROOT.len()]),
        &mut rng,
    );
    let universities = pick_names(
        cfg.universities,
        UNI_ROOT.len() * UNI_SUFFIX.len(),
        |i| format!("{} {}", UNI_ROOT[i % UNI_ROOT.len()], UNI_SUFFIX[i / UNI_ROOT.len()]),
        &mut rng,
    );

    let mut entities = Vec::new();
    let mut add = |prefix: &str, surfaces: &[String]| -> u32 {
        let base = entities.len() as u32;
        for (i, s) in surfaces.iter().enumerate() {
            entities.push(SyntheticEntity { name: format!("{prefix}_{i:03}"), surface: s.clone() });
        }
        base
    };
    let p0 = add("person", &persons);
    let ci0 = add("city", &cities);
    let co0 = add("country", &countries);
    let cm0 = add("company", &companies);
    let u0 = add("university", &universities);
    let (np, nci, nco, ncm, nu) = (cfg.persons, cfg.cities, cfg.countries, cfg.companies, cfg.universities);
    let rel = |name: &str| RELATIONS.iter().position(|r| *r == name).unwrap() as u32;

    let mut t = Vec::new();
    let city_country: Vec<usize> = (0..nci).map(|_| rng.random_range(0..nco)).collect();
    for (c, &k) in city_country.iter().enumerate() {
        t.push((ci0 + c as u32, rel("located_in"), co0 + k as u32));
    }
    assert!(ncm <= np, "every company needs its own founder");
    let founders = index::sample(&mut rng, np, ncm).into_vec();
    for c in 0..ncm {
        t.push((cm0 + c as u32, rel("headquartered_in"), ci0 + rng.random_range(0..nci) as u32));
        t.push((cm0 + c as u32, rel("founded_by"), p0 + founders[c] as u32));
    }
    for u in 0..nu {
        t.push((u0 + u as u32, rel("campus_in"), ci0 + rng.random_range(0..nci) as u32));
    }
    for p in 0..np {
        let born = rng.random_range(0..nci);
        let mut lives = rng.random_range(0..nci - 1);
        if lives >= born {
            lives += 1;
        }
        let mut employer = rng.random_range(0..ncm);
        while founders[employer] == p && ncm > 1 {
            employer = rng.random_range(0..ncm);
        }
        let h = p0 + p as u32;
        t.push((h, rel("born_in"), ci0 + born as u32));
        t.push((h, rel("lives_in"), ci0 + lives as u32));
        t.push((h, rel("citizen_of"), co0 + city_country[born] as u32));
        t.push((h, rel("works_for"), cm0 + employer as u32));
        t.push((h, rel("educated_at"), u0 + rng.random_range(0..nu) as u32));
    }
    let mut order: Vec<usize> = (0..np).collect();
    order.shuffle(&mut rng);
    for pair in order.chunks_exact(2).take(cfg.spouse_pairs) {
        t.push((p0 + pair[0] as u32, rel("spouse"), p0 + pair[1] as u32));
    }

    let mut sentences = Vec::new();
    for &(h, r, tl) in &t {
        let mut templates = TEMPLATES[r as usize].to_vec();
        templates.shuffle(&mut rng);
        for tpl in templates.into_iter().take(cfg.sentences_per_fact) {
            sentences.push(
                tpl.replace("{h}", &entities[h as usize].surface)
                    .replace("{t}", &entities[tl as usize].surface),
            );
        }
    }
    for i in 0..cfg.filler_sentences {
        sentences.push(FILLER[i % FILLER.len()].to_string());
    }
    sentences.shuffle(&mut rng);
    SyntheticData { entities, triplets: t, sentences }
}

impl SyntheticData {
    pub fn store(&self) -> Result<TripletStore, KgError> {
        let entities = Vocab::from_names(self.entities.iter().map(|e| e.name.clone()));
        let relations = Vocab::from_names(RELATIONS);
        TripletStore::from_triplets(entities, relations, self.triplets.iter().copied())
    }

    pub fn aliases(&self) -> Vec<(String, String)> {
        self.entities.iter().map(|e| (e.surface.clone(), e.name.clone())).collect()
    }

    pub fn corpus(&self) -> Result<Corpus, KgError> {
        Corpus::from_parts(&self.sentences, self.store()?, &self.aliases())
    }

    /// Writes `corpus.txt`, `triples.tsv` and `aliases.tsv`.
    pub fn write(&self, dir: &Path) -> io::Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("corpus.txt"), self.sentences.join("\n") + "\n")?;
        let triples: String = self
            .triplets
            .iter()
            .map(|&(h, r, t)| {
                format!("{}\t{}\t{}\n", self.entities[h as usize].name, RELATIONS[r as usize], self.entities[t as usize].name)
            })
            .collect();
        fs::write(dir.join("triples.tsv"), triples)?;
        let aliases: String = self.aliases().iter().map(|(s, n)| format!("{s}\t{n}\n")).collect();
        fs::write(dir.join("aliases.tsv"), aliases)
    }
}
