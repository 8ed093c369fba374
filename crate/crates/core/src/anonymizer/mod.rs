//! PII replacement with placeholder tokens, followed by stopword removal
//! and lemmatization.

pub mod normalize;
pub mod patterns;
pub mod recognizer;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::corpus::Complaint;
pub use normalize::{normalize, NormalizationConfig, UnknownStopwordList};
use patterns::Match;
pub use recognizer::{
    default_factory, HeuristicRecognizer, Recognizer, RecognizerError, RecognizerFactory,
    UnavailableRecognizer,
};

/// The six entity kinds replaced by placeholders.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum EntityKind {
    Person,
    Phone,
    Email,
    Address,
    Website,
    Money,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Detector {
    Pattern,
    Recognizer,
}

impl EntityKind {
    pub const ALL: [EntityKind; 6] = [
        EntityKind::Person,
        EntityKind::Phone,
        EntityKind::Email,
        EntityKind::Address,
        EntityKind::Website,
        EntityKind::Money,
    ];

    pub fn placeholder(self) -> &'static str {
        match self {
            EntityKind::Person => "<PERSON>",
            EntityKind::Phone => "<PHONE>",
            EntityKind::Email => "<EMAIL>",
            EntityKind::Address => "<ADDRESS>",
            EntityKind::Website => "<WEBSITE>",
            EntityKind::Money => "<MONEY>",
        }
    }

    pub fn detector(self) -> Detector {
        match self {
            EntityKind::Phone | EntityKind::Email | EntityKind::Website => Detector::Pattern,
            EntityKind::Person | EntityKind::Address | EntityKind::Money => Detector::Recognizer,
        }
    }
}

impl fmt::Display for EntityKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let p = self.placeholder();
        f.write_str(&p[1..p.len() - 1])
    }
}

/// One replaced entity. Offsets are byte offsets into the original text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RedactionSpan {
    pub start: usize,
    pub end: usize,
    pub kind: EntityKind,
    /// Original surface form; only retained in audit mode.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub surface: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RedactionResult {
    pub text: String,
    /// Sorted by start, non-overlapping.
    pub spans: Vec<RedactionSpan>,
    pub audit_mode: bool,
    /// Set when the recognizer was unavailable and only pattern kinds
    /// were detected.
    #[serde(default)]
    pub degraded: bool,
}

impl RedactionResult {
    /// Rebuild the redacted text from the original and the spans.
    pub fn reconstruct(original: &str, spans: &[RedactionSpan]) -> String {
        let mut out = String::with_capacity(original.len());
        let mut cursor = 0;
        for s in spans {
            out.push_str(&original[cursor..s.start]);
            out.push_str(s.kind.placeholder());
            cursor = s.end;
        }
        out.push_str(&original[cursor..]);
        out
    }
}

/// Behaviour when the recognizer backend cannot be reached.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum RecognizerFallback {
    /// Fail the item.
    #[default]
    Fail,
    /// Continue with pattern detectors only and flag the result.
    PatternsOnly,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnonymizerConfig {
    pub normalization: NormalizationConfig,
    pub audit_mode: bool,
    pub fallback: RecognizerFallback,
    pub fail_fast: bool,
    /// Worker threads for batch anonymization.
    pub workers: usize,
}

impl Default for AnonymizerConfig {
    fn default() -> Self {
        Self {
            normalization: NormalizationConfig::default(),
            audit_mode: false,
            fallback: RecognizerFallback::Fail,
            fail_fast: false,
            workers: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AnonymizeError {
    #[error("empty text")]
    EmptyText,
    #[error(transparent)]
    Recognizer(#[from] RecognizerError),
    #[error("configuration error: {0}")]
    Config(#[from] UnknownStopwordList),
    #[error("complaint {id}: {source}")]
    Item {
        id: String,
        #[source]
        source: Box<AnonymizeError>,
    },
}

/// Redacts entities using the pattern detectors and one recognizer
/// instance. Not shared across threads; create one per worker.
pub struct Anonymizer {
    recognizer: Box<dyn Recognizer>,
    fallback: RecognizerFallback,
}

impl fmt::Debug for Anonymizer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Anonymizer")
            .field("recognizer", &self.recognizer.name())
            .field("fallback", &self.fallback)
            .finish()
    }
}

impl Default for Anonymizer {
    fn default() -> Self {
        Self::new(Box::new(HeuristicRecognizer), RecognizerFallback::Fail)
    }
}

fn overlaps(taken: &[(usize, usize)], start: usize, end: usize) -> bool {
    taken.iter().any(|&(s, e)| start < e && s < end)
}

impl Anonymizer {
    pub fn new(recognizer: Box<dyn Recognizer>, fallback: RecognizerFallback) -> Self {
        Self {
            recognizer,
            fallback,
        }
    }

    /// Replace detected entities with placeholders. Pattern detectors run
    /// first (email, website, phone), then the recognizer kinds; every
    /// accepted match masks its range from later detectors. Existing
    /// placeholder tokens are masked up front and left as-is.
    pub fn redact(
        &mut self,
        text: &str,
        audit_mode: bool,
    ) -> Result<RedactionResult, AnonymizeError> {
        if text.trim().is_empty() {
            return Err(AnonymizeError::EmptyText);
        }
        let mut taken: Vec<(usize, usize)> = patterns::placeholder_regex()
            .find_iter(text)
            .map(|m| (m.start(), m.end()))
            .collect();
        let mut accepted: Vec<Match> = Vec::new();
        let mut admit = |found: Vec<Match>, taken: &mut Vec<(usize, usize)>| {
            for m in found {
                if !overlaps(taken, m.start, m.end) {
                    taken.push((m.start, m.end));
                    accepted.push(m);
                }
            }
        };
        admit(patterns::find_emails(text), &mut taken);
        admit(patterns::find_websites(text), &mut taken);
        admit(patterns::find_phones(text), &mut taken);

        let mut degraded = false;
        match self.recognizer.recognize(text) {
            Ok(mut found) => {
                // longest first so an address wins over a name inside it
                found.sort_by_key(|m| (m.start, std::cmp::Reverse(m.end)));
                for kind in [EntityKind::Person, EntityKind::Address, EntityKind::Money] {
                    admit(
                        found.iter().copied().filter(|m| m.kind == kind).collect(),
                        &mut taken,
                    );
                }
            }
            Err(RecognizerError::Unavailable(_))
                if self.fallback == RecognizerFallback::PatternsOnly =>
            {
                degraded = true;
            }
            Err(e) => return Err(e.into()),
        }
        admit(recognizer::find_money(text), &mut taken);

        accepted.sort_by_key(|m| m.start);
        let spans: Vec<RedactionSpan> = accepted
            .into_iter()
            .map(|m| RedactionSpan {
                start: m.start,
                end: m.end,
                kind: m.kind,
                surface: audit_mode.then(|| text[m.start..m.end].to_string()),
            })
            .collect();
        Ok(RedactionResult {
            text: RedactionResult::reconstruct(text, &spans),
            spans,
            audit_mode,
            degraded,
        })
    }

    /// Redact, then normalize.
    pub fn anonymize(
        &mut self,
        text: &str,
        config: &AnonymizerConfig,
    ) -> Result<(String, RedactionResult), AnonymizeError> {
        let redacted = self.redact(text, config.audit_mode)?;
        let normalized = normalize(&redacted.text, &config.normalization)?;
        Ok((normalized, redacted))
    }
}

/// Per-kind redaction counts for a batch.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RedactionStats {
    pub per_kind: BTreeMap<EntityKind, usize>,
    pub processed: usize,
    pub failed: usize,
    pub degraded: usize,
    /// Items whose text became empty after normalization.
    pub emptied: usize,
}

/// Audit record for one complaint (one JSON line in the span report).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditRecord {
    pub id: String,
    pub spans: Vec<RedactionSpan>,
    pub degraded: bool,
}

#[derive(Debug, Default)]
pub struct BatchOutput {
    pub complaints: Vec<Complaint>,
    pub stats: RedactionStats,
    pub errors: Vec<AnonymizeError>,
    pub audit: Vec<AuditRecord>,
}

type ItemResult = Result<(String, RedactionResult), AnonymizeError>;

/// Anonymize every complaint. Failed items are reported with their id and
/// skipped unless `fail_fast` is set, in which case the first error is
/// returned. Items whose text normalizes to empty are dropped and counted.
pub fn anonymize_corpus(
    complaints: Vec<Complaint>,
    config: &AnonymizerConfig,
    factory: &RecognizerFactory,
) -> Result<BatchOutput, AnonymizeError> {
    // validate configuration once, before touching any item
    normalize::stopword_list(&config.normalization.stopword_list_id)?;
    let workers = config.workers.max(1).min(complaints.len().max(1));
    let chunk = complaints.len().div_ceil(workers).max(1);
    let results: Vec<ItemResult> = std::thread::scope(|scope| {
        let handles: Vec<_> = complaints
            .chunks(chunk)
            .map(|part| {
                scope.spawn(move || {
                    let mut anonymizer = Anonymizer::new(factory(), config.fallback);
                    part.iter()
                        .map(|c| anonymizer.anonymize(&c.text, config))
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("anonymizer worker panicked"))
            .collect()
    });

    let mut out = BatchOutput::default();
    for (c, result) in complaints.into_iter().zip(results) {
        match result {
            Ok((text, redaction)) => {
                out.stats.processed += 1;
                for span in &redaction.spans {
                    *out.stats.per_kind.entry(span.kind).or_insert(0) += 1;
                }
                if redaction.degraded {
                    out.stats.degraded += 1;
                }
                out.audit.push(AuditRecord {
                    id: c.id.clone(),
                    spans: redaction.spans,
                    degraded: redaction.degraded,
                });
                if text.is_empty() {
                    out.stats.emptied += 1;
                    continue;
                }
                out.complaints.push(Complaint { text, ..c });
            }
            Err(e) => {
                let err = AnonymizeError::Item {
                    id: c.id.clone(),
                    source: Box::new(e),
                };
                if config.fail_fast {
                    return Err(err);
                }
                log::warn!("{err}");
                out.stats.failed += 1;
                out.errors.push(err);
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn redact(text: &str) -> String {
        Anonymizer::default().redact(text, false).unwrap().text
    }

    #[test]
    fn placeholders_are_verbatim() {
        let got: Vec<_> = EntityKind::ALL.iter().map(|k| k.placeholder()).collect();
        assert_eq!(
            got,
            [
                "<PERSON>",
                "<PHONE>",
                "<EMAIL>",
                "<ADDRESS>",
                "<WEBSITE>",
                "<MONEY>"
            ]
        );
        assert_eq!(EntityKind::Phone.detector(), Detector::Pattern);
        assert_eq!(EntityKind::Money.detector(), Detector::Recognizer);
    }

    #[test]
    fn spec_examples() {
        assert_eq!(redact("call me at 9876543210"), "call me at <PHONE>");
        assert_eq!(
            redact("mail bheja tha abc@xyz.com par"),
            "mail bheja tha <EMAIL> par"
        );
        assert_eq!(redact("<PHONE>"), "<PHONE>");
    }

    #[test]
    fn email_domain_is_not_a_website() {
        let r = Anonymizer::default()
            .redact("abc@xyz.com aur xyz.com", false)
            .unwrap();
        assert_eq!(r.text, "<EMAIL> aur <WEBSITE>");
        assert_eq!(r.spans.len(), 2);
    }

    #[test]
    fn mixed_entities_and_audit() {
        let text = "Mr. Ramesh Kumar ne Rs. 5000 maange, call 9876543210 ya visit fraud-pay.in";
        let r = Anonymizer::default().redact(text, true).unwrap();
        assert_eq!(
            r.text,
            "<PERSON> ne <MONEY> maange, call <PHONE> ya visit <WEBSITE>"
        );
        assert!(r.spans.iter().all(|s| s.surface.is_some()));
        assert_eq!(RedactionResult::reconstruct(text, &r.spans), r.text);
        let private = Anonymizer::default().redact(text, false).unwrap();
        assert!(private.spans.iter().all(|s| s.surface.is_none()));
    }

    #[test]
    fn empty_text_is_error() {
        assert_eq!(
            Anonymizer::default().redact("  ", false).unwrap_err(),
            AnonymizeError::EmptyText
        );
    }

    #[test]
    fn unavailable_recognizer_degrades_or_fails() {
        let mut hard = Anonymizer::new(Box::new(UnavailableRecognizer), RecognizerFallback::Fail);
        assert!(matches!(
            hard.redact("call 9876543210", false),
            Err(AnonymizeError::Recognizer(RecognizerError::Unavailable(_)))
        ));
        let mut soft = Anonymizer::new(
            Box::new(UnavailableRecognizer),
            RecognizerFallback::PatternsOnly,
        );
        let r = soft.redact("call 9876543210", false).unwrap();
        assert!(r.degraded);
        assert_eq!(r.text, "call <PHONE>");
    }

    #[test]
    fn batch_stats() {
        let factory = default_factory();
        let cfg = AnonymizerConfig::default();
        let out = anonymize_corpus(
            vec![
                Complaint::original("a", "account hack ho gaya"),
                Complaint::original("b", "otp maanga gaya bank se"),
            ],
            &cfg,
            &factory,
        )
        .unwrap();
        assert_eq!(out.complaints.len(), 2);
        assert!(out.stats.per_kind.is_empty());

        let out = anonymize_corpus(
            vec![
                Complaint::original("a", "call 9876543210 now"),
                Complaint::original("b", "mail abc@xyz.com"),
            ],
            &cfg,
            &factory,
        )
        .unwrap();
        let expected: BTreeMap<_, _> = [(EntityKind::Phone, 1), (EntityKind::Email, 1)].into();
        assert_eq!(out.stats.per_kind, expected);

        let out = anonymize_corpus(Vec::new(), &cfg, &factory).unwrap();
        assert!(out.complaints.is_empty());
        assert_eq!(out.stats, RedactionStats::default());
    }

    #[test]
    fn batch_errors_carry_ids() {
        let factory: RecognizerFactory = std::sync::Arc::new(|| Box::new(UnavailableRecognizer));
        let input = vec![
            Complaint::original("a", "x y z"),
            Complaint::original("b", "p q r"),
        ];
        let out = anonymize_corpus(input.clone(), &AnonymizerConfig::default(), &factory).unwrap();
        assert_eq!(out.stats.failed, 2);
        assert!(matches!(&out.errors[0], AnonymizeError::Item { id, .. } if id == "a"));
        let fail_fast = AnonymizerConfig {
            fail_fast: true,
            ..Default::default()
        };
        assert!(anonymize_corpus(input, &fail_fast, &factory).is_err());
    }

    #[test]
    fn batch_workers_preserve_order() {
        let input: Vec<_> = (0..25)
            .map(|i| {
                Complaint::original(i.to_string(), format!("complaint {i} call 98765432{i:02}"))
            })
            .collect();
        let cfg = AnonymizerConfig {
            workers: 4,
            ..Default::default()
        };
        let out = anonymize_corpus(input, &cfg, &default_factory()).unwrap();
        let ids: Vec<_> = out.complaints.iter().map(|c| c.id.clone()).collect();
        assert_eq!(ids, (0..25).map(|i| i.to_string()).collect::<Vec<_>>());
        assert_eq!(out.stats.per_kind[&EntityKind::Phone], 25);
    }

    proptest! {
        #[test]
        fn redaction_is_idempotent(text in "[a-zA-Z0-9@.+ :/<>-]{1,60}") {
            prop_assume!(!text.trim().is_empty());
            let mut a = Anonymizer::default();
            let once = a.redact(&text, true).unwrap();
            let twice = a.redact(&once.text, false).unwrap();
            prop_assert_eq!(&twice.text, &once.text);
            prop_assert_eq!(RedactionResult::reconstruct(&text, &once.spans), once.text.clone());
            for w in once.spans.windows(2) {
                prop_assert!(w[0].end <= w[1].start);
            }
        }
    }
}
