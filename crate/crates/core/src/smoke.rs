//! Synthetic code-mixed complaint corpora for smoke runs and tests.
//!
//! `Separable` gives every class its own keyword pool, so bag-of-words
//! models can solve it. `OrderOverlap` pairs classes up: both members of a
//! pair draw from the same keyword pool and differ only in which of two
//! events is narrated first, so unigram features cannot tell them apart.
//! `SpellingOverlap` also pairs classes on a shared pool; the members differ
//! only in one romanized keyword that is written with ad-hoc spelling
//! variation, so most held-out spellings never occur in training.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::anonymizer::recognizer::default_factory;
use crate::anonymizer::{anonymize_corpus, AnonymizerConfig};
use crate::corpus::{split, Complaint, CorpusError, DatasetSplit};
use crate::labels::{CategoryLabel, LABEL_MAP, NUM_LABELS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SmokeKind {
    #[default]
    Separable,
    OrderOverlap,
    SpellingOverlap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SmokeConfig {
    pub kind: SmokeKind,
    pub classes: usize,
    pub per_class: usize,
    pub seed: u64,
    /// Probability that a text carries an email, phone or URL.
    pub pii_rate: f64,
}

impl Default for SmokeConfig {
    fn default() -> Self {
        Self {
            kind: SmokeKind::Separable,
            classes: 5,
            per_class: 80,
            seed: 7,
            pii_rate: 0.3,
        }
    }
}

const KEYWORDS: [[&str; 6]; NUM_LABELS] = [
    [
        "complaint",
        "unknown",
        "misuse",
        "fake",
        "profile",
        "harass",
    ],
    ["child", "minor", "school", "csam", "underage", "student"],
    ["bitcoin", "crypto", "wallet", "token", "exchange", "mining"],
    ["ddos", "server", "malware", "virus", "network", "attack"],
    [
        "terror",
        "threat",
        "bomb",
        "extremist",
        "propaganda",
        "attack-plan",
    ],
    ["hack", "password", "otp-chori", "login", "deface", "breach"],
    [
        "trafficking",
        "job-offer",
        "abroad",
        "visa",
        "agent",
        "kidnap",
    ],
    ["upi", "bank", "paise", "khata", "loan", "refund"],
    ["betting", "satta", "casino", "lottery", "jackpot", "gamble"],
    [
        "instagram",
        "facebook",
        "whatsapp",
        "post",
        "troll",
        "followers",
    ],
    [
        "ransom",
        "encrypt",
        "locked",
        "files",
        "decrypt",
        "payment-demand",
    ],
    ["rape", "assault", "abuse", "victim", "forced", "molest"],
    [
        "nude",
        "explicit",
        "porn",
        "video-leak",
        "private-pics",
        "sextortion",
    ],
    [
        "obscene",
        "vulgar",
        "gaali",
        "indecent",
        "lewd",
        "abusive-msg",
    ],
];

const FILLERS: [&str; 16] = [
    "mere", "saath", "kal", "raat", "ko", "hua", "please", "help", "karo", "sir", "maine", "dekha",
    "jaldi", "problem", "bahut", "pareshan",
];

const OPENERS: [&str; 5] = [
    "sir mera complaint hai",
    "namaste mujhe report karna hai",
    "kripya madad kare",
    "mere saath ye hua",
    "dear team",
];

const CLOSERS: [&str; 4] = [
    "please action lo",
    "jaldi help karo",
    "thank you",
    "kuch karo sir",
];

/// Shared pool and two ordered events per class pair.
const PAIRS: [([&str; 4], &str, &str); 7] = [
    (
        ["call", "message", "number", "link"],
        "paise kat gaye",
        "otp maanga",
    ),
    (
        ["photo", "account", "profile", "dost"],
        "photo viral hui",
        "account band hua",
    ),
    (
        ["wallet", "app", "site", "scheme"],
        "invest kiya",
        "site gayab hui",
    ),
    (
        ["email", "file", "laptop", "office"],
        "file khuli",
        "system ruk gaya",
    ),
    (
        ["group", "channel", "video", "chat"],
        "video bheja",
        "dhamki di",
    ),
    (
        ["job", "agent", "offer", "fees"],
        "fees jama ki",
        "agent bhaag gaya",
    ),
    (
        ["game", "tip", "team", "bet"],
        "jeet gaya",
        "khata block hua",
    ),
];

/// Keyword stem per class; members of a pair use disjoint-looking stems.
const STEMS: [&str; NUM_LABELS] = [
    "thagi",
    "dhamki",
    "badnaami",
    "chhedkhani",
    "nivesh",
    "ghotala",
    "jasoosi",
    "virus",
    "bhadkaau",
    "kattarpanthi",
    "naukri",
    "apharan",
    "juaakhor",
    "lottery",
];

const VARIATION_RATE: f64 = 0.35;

/// Respell a romanized word the way informal writing does: long and short
/// vowels swap, aspiration gets dropped, consonants double.
pub fn respell(rng: &mut impl Rng, word: &str) -> String {
    let chars: Vec<char> = word.chars().collect();
    let mut out = String::with_capacity(word.len() + 4);
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let next = chars.get(i + 1).copied();
        let vary = rng.gen_bool(VARIATION_RATE);
        match (c, next) {
            (v, Some(w)) if v == w && "aeiou".contains(v) => {
                out.push(v);
                if !vary {
                    out.push(v);
                }
                i += 2;
                continue;
            }
            ('k' | 'g' | 'c' | 'j' | 't' | 'd' | 'b' | 'p', Some('h')) => {
                out.push(c);
                if !vary {
                    out.push('h');
                }
                i += 2;
                continue;
            }
            ('a' | 'o' | 'u', _) if vary => {
                out.push(c);
                out.push(if c == 'a' { 'a' } else { 'o' });
            }
            ('i', _) if vary => out.push_str(if next.is_none() { "y" } else { "ee" }),
            ('e', _) if vary => out.push_str("ai"),
            (c, _) if vary && c.is_ascii_lowercase() && !"aeiouhy".contains(c) => {
                out.push(c);
                out.push(c);
            }
            _ => out.push(c),
        }
        i += 1;
    }
    out
}

fn pii(rng: &mut ChaCha8Rng) -> String {
    let user: String = (0..6).map(|_| rng.gen_range(b'a'..=b'z') as char).collect();
    match rng.gen_range(0..3) {
        0 => format!("{user}@gmail.com"),
        1 => format!("98{:08}", rng.gen_range(0..100_000_000u32)),
        _ => format!("https://{user}.in/pay"),
    }
}

fn source_label(label: CategoryLabel) -> &'static str {
    LABEL_MAP
        .iter()
        .find(|(_, l)| *l == label)
        .map(|(s, _)| *s)
        .expect("every label has a source name")
}

fn separable_text(rng: &mut ChaCha8Rng, class: usize) -> String {
    let k = rng.gen_range(2..=3);
    let mut words: Vec<&str> = KEYWORDS[class].choose_multiple(rng, k).copied().collect();
    let f = rng.gen_range(2..=5);
    words.extend(FILLERS.choose_multiple(rng, f));
    words.shuffle(rng);
    format!(
        "{} {} {}",
        OPENERS.choose(rng).expect("nonempty"),
        words.join(" "),
        CLOSERS.choose(rng).expect("nonempty")
    )
}

fn overlap_text(rng: &mut ChaCha8Rng, class: usize) -> String {
    let (pool, first, second) = PAIRS[(class / 2) % PAIRS.len()];
    let (a, b) = if class % 2 == 0 {
        (first, second)
    } else {
        (second, first)
    };
    let mut context: Vec<&str> = pool.choose_multiple(rng, 2).copied().collect();
    let f = rng.gen_range(1..=3);
    context.extend(FILLERS.choose_multiple(rng, f));
    context.shuffle(rng);
    format!(
        "{} {} pehle {} phir {} {}",
        OPENERS.choose(rng).expect("nonempty"),
        context.join(" "),
        a,
        b,
        CLOSERS.choose(rng).expect("nonempty")
    )
}

fn spelling_text(rng: &mut ChaCha8Rng, class: usize) -> String {
    let (pool, first, second) = PAIRS[(class / 2) % PAIRS.len()];
    let mut words: Vec<String> = pool
        .choose_multiple(rng, 2)
        .map(|w| w.to_string())
        .collect();
    let f = rng.gen_range(1..=3);
    words.extend(FILLERS.choose_multiple(rng, f).map(|w| w.to_string()));
    words.push(respell(rng, STEMS[class]));
    words.shuffle(rng);
    format!(
        "{} {} {} {} {}",
        OPENERS.choose(rng).expect("nonempty"),
        if rng.gen_bool(0.5) { first } else { second },
        words.join(" "),
        if rng.gen_bool(0.5) { first } else { second },
        CLOSERS.choose(rng).expect("nonempty")
    )
}

/// Generate `classes * per_class` labeled complaints. Raw categories carry
/// the verbose source names so the output exercises standardization.
pub fn generate(cfg: &SmokeConfig) -> Result<Vec<Complaint>, CorpusError> {
    if !(2..=NUM_LABELS).contains(&cfg.classes) {
        return Err(CorpusError::Config(format!(
            "classes must be in 2..={NUM_LABELS}, got {}",
            cfg.classes
        )));
    }
    if cfg.per_class == 0 {
        return Err(CorpusError::Config("per_class must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut seen = std::collections::HashSet::new();
    let mut out = Vec::with_capacity(cfg.classes * cfg.per_class);
    for class in 0..cfg.classes {
        let label = CategoryLabel::ALL[class];
        let mut made = 0;
        let mut tries = 0;
        while made < cfg.per_class {
            tries += 1;
            if tries > cfg.per_class * 1000 {
                return Err(CorpusError::Config(
                    "cannot generate enough distinct texts".into(),
                ));
            }
            let mut text = match cfg.kind {
                SmokeKind::Separable => separable_text(&mut rng, class),
                SmokeKind::OrderOverlap => overlap_text(&mut rng, class),
                SmokeKind::SpellingOverlap => spelling_text(&mut rng, class),
            };
            if rng.gen_bool(cfg.pii_rate.clamp(0.0, 1.0)) {
                text = format!("{text} contact {}", pii(&mut rng));
            }
            if !seen.insert(crate::corpus::dedup_key(&text)) {
                continue;
            }
            let mut c = Complaint::labeled(format!("smoke-{class:02}-{made:04}"), text, label);
            c.raw_category = Some(source_label(label).to_string());
            out.push(c);
            made += 1;
        }
    }
    Ok(out)
}

/// Generate, anonymize and split into train / validation / test, holding
/// out `held_out` of each class and dividing it evenly between validation
/// and test.
pub fn prepare(cfg: &SmokeConfig, held_out: f64) -> Result<DatasetSplit, CorpusError> {
    let raw = generate(cfg)?;
    let anonymized = anonymize_corpus(raw, &AnonymizerConfig::default(), &default_factory())
        .map_err(|e| CorpusError::Config(format!("anonymization failed: {e}")))?;
    let outer = split(&anonymized.complaints, held_out, cfg.seed)?;
    let inner = split(&outer.validation, 0.5, cfg.seed.wrapping_add(1))?;
    let out = DatasetSplit {
        train: outer.train,
        validation: inner.train,
        test: Vec::new(),
        seed: cfg.seed,
    }
    .with_test(inner.validation);
    out.check()?;
    Ok(out)
}
