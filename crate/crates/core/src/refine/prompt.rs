use std::sync::LazyLock;

use regex::Regex;

use super::RefineError;
use crate::corpus::VariantTag;

const GREETING: &str = "Hi ChatGPT, there is a bank loan borrower whose details are below.";

const INSTRUCTION: &str = "The bank plans to lend to this borrower. Based on the above information, please carefully \
summarise and analyse the factors that support the borrower's ability to repay the loan on time and the factors that \
could lead to the borrower's default. The expected answer template consists of two parts: 1. Factors supporting the \
borrower's repayment: [Insert answer here]; 2. Factors that could potentially lead to the borrower's default: [Insert \
answer here].";

/// Bumped whenever the accepted header spellings change.
pub const HEADER_RULES_VERSION: u32 = 1;

const POSITIVE_HEADER: &str = "1. Factors supporting the borrower's repayment:";
const NEGATIVE_HEADER: &str = "2. Factors that could potentially lead to the borrower's default:";

// Accepted: either apostrophe form, optional "potentially", optional colon.
static POSITIVE_RE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)1\.\s*factors\s+supporting\s+the\s+borrower['’]s\s+repayment\s*:?").unwrap());
static NEGATIVE_RE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)2\.\s*factors\s+that\s+could\s+(?:potentially\s+)?lead\s+to\s+the\s+borrower['’]s\s+default\s*:?")
        .unwrap()
});

/// Renders the refinement prompt around the human-written assessment.
pub fn build_prompt(human_text: &str) -> Result<String, RefineError> {
    let text = human_text.trim();
    if text.is_empty() {
        return Err(RefineError::EmptyText);
    }
    Ok(format!("{GREETING} {text} {INSTRUCTION}"))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sections {
    pub positive: String,
    pub negative: String,
}

fn clean(section: &str) -> String {
    let t = section.trim();
    t.strip_prefix(['*', '-', '•']).map_or(t, str::trim_start).to_string()
}

/// Splits a response into its repayment-supporting and default-risk parts.
/// The positive header must come first; a single leading bullet marker is
/// dropped from each section.
pub fn parse_sections(raw: &str) -> Result<Sections, RefineError> {
    let mismatch = || RefineError::FormatMismatch { raw: raw.to_string() };
    let pos = POSITIVE_RE.find(raw).ok_or_else(mismatch)?;
    let neg = NEGATIVE_RE.find_at(raw, pos.end()).ok_or_else(mismatch)?;
    Ok(Sections { positive: clean(&raw[pos.end()..neg.start()]), negative: clean(&raw[neg.end()..]) })
}

/// The canonical two-header rendering that [`parse_sections`] accepts.
pub fn render_sections(s: &Sections) -> String {
    format!("{POSITIVE_HEADER} {}\n{NEGATIVE_HEADER} {}", s.positive, s.negative)
}

/// Builds the text for one factor-combination variant.
pub fn compose_variant(s: &Sections, variant: VariantTag) -> Result<String, RefineError> {
    let need = |text: &str, name: &'static str| {
        if text.trim().is_empty() {
            Err(RefineError::MissingSection(name))
        } else {
            Ok(())
        }
    };
    match variant {
        VariantTag::Positive => {
            need(&s.positive, "positive")?;
            Ok(s.positive.clone())
        }
        VariantTag::Negative => {
            need(&s.negative, "negative")?;
            Ok(s.negative.clone())
        }
        VariantTag::PosNeg | VariantTag::NegPos => {
            need(&s.positive, "positive")?;
            need(&s.negative, "negative")?;
            Ok(if variant == VariantTag::PosNeg {
                format!("{}\n\n{}", s.positive, s.negative)
            } else {
                format!("{}\n\n{}", s.negative, s.positive)
            })
        }
        VariantTag::Full => Err(RefineError::UnsupportedVariant(variant.as_str().into())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sections(p: &str, n: &str) -> Sections {
        Sections { positive: p.into(), negative: n.into() }
    }

    #[test]
    fn prompt_is_verbatim_and_deterministic() {
        let p = build_prompt("X").unwrap();
        assert!(p.starts_with("Hi ChatGPT, there is a bank loan borrower whose details are below. X The bank plans"));
        assert!(p.contains(
            "carefully summarise and analyse the factors that support the borrower's ability to repay"
        ));
        assert!(p.ends_with("2. Factors that could potentially lead to the borrower's default: [Insert answer here]."));
        assert_eq!(p, build_prompt("X").unwrap());
        assert_ne!(p, build_prompt("Y").unwrap());
        assert!(matches!(build_prompt("  "), Err(RefineError::EmptyText)));
    }

    #[test]
    fn header_tolerance_and_order() {
        let s = parse_sections("1. factors supporting the borrower’s repayment: good\n2. Factors that could lead to the borrower's default: bad").unwrap();
        assert_eq!(s, sections("good", "bad"));
        assert!(matches!(parse_sections("1. Factors supporting the borrower's repayment: only"), Err(RefineError::FormatMismatch { .. })));
        let reversed = "2. Factors that could lead to the borrower's default: bad 1. Factors supporting the borrower's repayment: good";
        assert!(matches!(parse_sections(reversed), Err(RefineError::FormatMismatch { .. })));
    }

    #[test]
    fn render_parse_round_trip() {
        let s = sections("Stable salary. Owns a flat.", "Two overdue card payments.");
        assert_eq!(parse_sections(&render_sections(&s)).unwrap(), s);
    }

    #[test]
    fn variants() {
        let s = sections("P", "N");
        assert_eq!(compose_variant(&s, VariantTag::NegPos).unwrap(), "N\n\nP");
        assert_eq!(compose_variant(&s, VariantTag::PosNeg).unwrap(), "P\n\nN");
        assert_eq!(compose_variant(&s, VariantTag::Positive).unwrap(), "P");
        let same = sections("Q", "Q");
        assert_eq!(compose_variant(&same, VariantTag::PosNeg).unwrap(), compose_variant(&same, VariantTag::NegPos).unwrap());
        assert!(matches!(compose_variant(&sections("", "N"), VariantTag::PosNeg), Err(RefineError::MissingSection("positive"))));
        assert!(compose_variant(&s, VariantTag::Negative).is_ok());
    }
}
