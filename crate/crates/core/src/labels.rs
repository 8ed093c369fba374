//! The closed set of crime categories and the mapping from verbose source
//! labels onto it.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// One of the fourteen standardized crime categories.
///
/// The discriminant order is the canonical `label_order` used by every model
/// and report in the workspace; ties in argmax resolve to the lower index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CategoryLabel {
    OtherCyberCrime,
    ChildAbuseMaterial,
    CryptocurrencyCrime,
    CyberAttackDependentCrimes,
    CyberTerrorism,
    HackingDamage,
    CyberTrafficking,
    FinancialFraud,
    GamblingBetting,
    SocialMediaCrime,
    Ransomware,
    RapeOrSexualAbuseContent,
    SexuallyExplicitContent,
    SexuallyObsceneContent,
}

/// Number of categories in the closed label set.
pub const NUM_LABELS: usize = 14;

/// Source-label → standardized-label dictionary, in canonical order.
pub const LABEL_MAP: [(&str, CategoryLabel); NUM_LABELS] = [
    ("Any Other Cyber Crime", CategoryLabel::OtherCyberCrime),
    (
        "Child Pornography CPChild Sexual Abuse Material CSAM",
        CategoryLabel::ChildAbuseMaterial,
    ),
    ("Cryptocurrency Crime", CategoryLabel::CryptocurrencyCrime),
    (
        "Cyber Attack/ Dependent Crimes",
        CategoryLabel::CyberAttackDependentCrimes,
    ),
    ("Cyber Terrorism", CategoryLabel::CyberTerrorism),
    (
        "Hacking Damage to computer computer system etc",
        CategoryLabel::HackingDamage,
    ),
    ("Online Cyber Trafficking", CategoryLabel::CyberTrafficking),
    ("Online Financial Fraud", CategoryLabel::FinancialFraud),
    ("Online Gambling Betting", CategoryLabel::GamblingBetting),
    (
        "Online and Social Media Related Crime",
        CategoryLabel::SocialMediaCrime,
    ),
    ("Ransomware", CategoryLabel::Ransomware),
    (
        "RapeGang Rape RGRSexually Abusive Content",
        CategoryLabel::RapeOrSexualAbuseContent,
    ),
    (
        "Sexually Explicit Act",
        CategoryLabel::SexuallyExplicitContent,
    ),
    (
        "Sexually Obscene material",
        CategoryLabel::SexuallyObsceneContent,
    ),
];

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown label {0:?}")]
pub struct UnknownLabel(pub String);

impl CategoryLabel {
    pub const ALL: [CategoryLabel; NUM_LABELS] = [
        CategoryLabel::OtherCyberCrime,
        CategoryLabel::ChildAbuseMaterial,
        CategoryLabel::CryptocurrencyCrime,
        CategoryLabel::CyberAttackDependentCrimes,
        CategoryLabel::CyberTerrorism,
        CategoryLabel::HackingDamage,
        CategoryLabel::CyberTrafficking,
        CategoryLabel::FinancialFraud,
        CategoryLabel::GamblingBetting,
        CategoryLabel::SocialMediaCrime,
        CategoryLabel::Ransomware,
        CategoryLabel::RapeOrSexualAbuseContent,
        CategoryLabel::SexuallyExplicitContent,
        CategoryLabel::SexuallyObsceneContent,
    ];

    /// Position in the canonical label order.
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<Self> {
        Self::ALL.get(index).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            CategoryLabel::OtherCyberCrime => "Other Cyber Crime",
            CategoryLabel::ChildAbuseMaterial => "Child Abuse Material",
            CategoryLabel::CryptocurrencyCrime => "Cryptocurrency Crime",
            CategoryLabel::CyberAttackDependentCrimes => "Cyber Attack/Dependent Crimes",
            CategoryLabel::CyberTerrorism => "Cyber Terrorism",
            CategoryLabel::HackingDamage => "Hacking/Damage",
            CategoryLabel::CyberTrafficking => "Cyber Trafficking",
            CategoryLabel::FinancialFraud => "Financial Fraud",
            CategoryLabel::GamblingBetting => "Gambling/Betting",
            CategoryLabel::SocialMediaCrime => "Social Media Crime",
            CategoryLabel::Ransomware => "Ransomware",
            CategoryLabel::RapeOrSexualAbuseContent => "Rape or Sexual Abuse Content",
            CategoryLabel::SexuallyExplicitContent => "Sexually Explicit Content",
            CategoryLabel::SexuallyObsceneContent => "Sexually Obscene Content",
        }
    }

    /// Resolve a raw source label. Accepts both the verbose source names and
    /// the standardized names; surrounding and repeated whitespace is ignored.
    pub fn standardize(raw: &str) -> Result<Self, UnknownLabel> {
        let key = collapse_whitespace(raw);
        LABEL_MAP
            .iter()
            .find(|(source, _)| *source == key)
            .map(|(_, label)| *label)
            .or_else(|| Self::ALL.iter().copied().find(|l| l.name() == key))
            .ok_or_else(|| UnknownLabel(raw.to_string()))
    }
}

pub(crate) fn collapse_whitespace(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

impl fmt::Display for CategoryLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CategoryLabel {
    type Err = UnknownLabel;

    /// Strict parse of a standardized name.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .iter()
            .copied()
            .find(|l| l.name() == s)
            .ok_or_else(|| UnknownLabel(s.to_string()))
    }
}

impl Serialize for CategoryLabel {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for CategoryLabel {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}
