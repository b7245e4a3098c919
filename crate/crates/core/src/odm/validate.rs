use std::collections::{BTreeSet, HashSet};
use std::fmt;

use super::{
    infer_question_type, DataType, QuestionType, QuestionTypeAttr, StudyDef, Translations,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Severity {
    Warning,
    Error,
}

impl fmt::Display for Severity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Severity::Warning => "warning",
            Severity::Error => "error",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DiagnosticKind {
    DanglingReference {
        kind: &'static str,
        target: String,
    },
    MissingQuestionText,
    IncompleteTranslation {
        lang: String,
        missing: Vec<String>,
    },
    UnknownQuestionType(String),
    QuestionTypeMismatch {
        question_type: QuestionType,
        reason: &'static str,
    },
    OrderNumberNotIncreasing,
    EmptyCodeList,
    DuplicateCodedValue(String),
    DuplicateTranslation(String),
    EmptyLanguageTag,
    ZeroLength,
}

impl DiagnosticKind {
    pub fn severity(&self) -> Severity {
        match self {
            DiagnosticKind::DanglingReference { .. }
            | DiagnosticKind::MissingQuestionText
            | DiagnosticKind::EmptyCodeList
            | DiagnosticKind::DuplicateCodedValue(_)
            | DiagnosticKind::ZeroLength => Severity::Error,
            _ => Severity::Warning,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    pub severity: Severity,
    /// OID of the definition the finding is about.
    pub location: String,
    pub kind: DiagnosticKind,
}

impl Diagnostic {
    fn new(location: &str, kind: DiagnosticKind) -> Self {
        Self {
            severity: kind.severity(),
            location: location.to_owned(),
            kind,
        }
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}: ", self.severity, self.location)?;
        match &self.kind {
            DiagnosticKind::DanglingReference { kind, target } => {
                write!(f, "dangling reference to {kind} {target}")
            }
            DiagnosticKind::MissingQuestionText => f.write_str("item has no question text"),
            DiagnosticKind::IncompleteTranslation { lang, missing } => {
                write!(
                    f,
                    "incomplete translation: {lang} (missing on {})",
                    missing.join(", ")
                )
            }
            DiagnosticKind::UnknownQuestionType(raw) => write!(f, "unknown QuestionType {raw:?}"),
            DiagnosticKind::QuestionTypeMismatch {
                question_type,
                reason,
            } => write!(f, "QuestionType {question_type} {reason}"),
            DiagnosticKind::OrderNumberNotIncreasing => {
                f.write_str("ItemRef OrderNumbers are not strictly increasing")
            }
            DiagnosticKind::EmptyCodeList => f.write_str("code list has no items"),
            DiagnosticKind::DuplicateCodedValue(v) => write!(f, "duplicate coded value {v:?}"),
            DiagnosticKind::DuplicateTranslation(l) => {
                write!(f, "more than one text for language {l}")
            }
            DiagnosticKind::EmptyLanguageTag => f.write_str("translation with empty language tag"),
            DiagnosticKind::ZeroLength => f.write_str("Length must be positive"),
        }
    }
}

fn check_translations(out: &mut Vec<Diagnostic>, location: &str, texts: &Translations) {
    let mut seen = HashSet::new();
    for t in texts.iter() {
        if t.lang.trim().is_empty() {
            out.push(Diagnostic::new(location, DiagnosticKind::EmptyLanguageTag));
        } else if !seen.insert(t.lang.to_ascii_lowercase()) {
            out.push(Diagnostic::new(
                location,
                DiagnosticKind::DuplicateTranslation(t.lang.clone()),
            ));
        }
    }
}

/// Check a study for problems that do not prevent parsing but would make
/// the rendered questionnaire wrong or incomplete.
pub fn validate_study(study: &StudyDef) -> Vec<Diagnostic> {
    let mut out = Vec::new();

    for form in study.forms.values() {
        for g in &form.group_refs {
            if study.group(g).is_none() {
                out.push(Diagnostic::new(
                    &form.oid,
                    DiagnosticKind::DanglingReference {
                        kind: "ItemGroupDef",
                        target: g.clone(),
                    },
                ));
            }
        }
    }

    for group in study.groups.values() {
        check_translations(&mut out, &group.oid, &group.header);
        for r in &group.item_refs {
            if study.item(&r.item_oid).is_none() {
                out.push(Diagnostic::new(
                    &group.oid,
                    DiagnosticKind::DanglingReference {
                        kind: "ItemDef",
                        target: r.item_oid.clone(),
                    },
                ));
            }
        }
        let numbers: Vec<u32> = group
            .item_refs
            .iter()
            .filter_map(|r| r.order_number)
            .collect();
        if numbers.windows(2).any(|w| w[0] >= w[1]) {
            out.push(Diagnostic::new(
                &group.oid,
                DiagnosticKind::OrderNumberNotIncreasing,
            ));
        }
    }

    for item in study.items.values() {
        let loc = item.oid.as_str();
        if item.question.is_empty() {
            out.push(Diagnostic::new(loc, DiagnosticKind::MissingQuestionText));
        }
        check_translations(&mut out, loc, &item.question);
        if item.length == Some(0) {
            out.push(Diagnostic::new(loc, DiagnosticKind::ZeroLength));
        }
        let code_list = match &item.code_list_ref {
            Some(cl) => match study.code_list(cl) {
                Some(found) => Some(found),
                None => {
                    out.push(Diagnostic::new(
                        loc,
                        DiagnosticKind::DanglingReference {
                            kind: "CodeList",
                            target: cl.clone(),
                        },
                    ));
                    None
                }
            },
            None => None,
        };
        if let Some(QuestionTypeAttr::Unknown(raw)) = &item.question_type {
            out.push(Diagnostic::new(
                loc,
                DiagnosticKind::UnknownQuestionType(raw.clone()),
            ));
        }
        let qt = infer_question_type(item);
        let mismatch = match qt {
            QuestionType::DatePicker if item.data_type != DataType::Date => {
                Some("used on a non-date item")
            }
            _ if qt.is_choice() && item.code_list_ref.is_none() => {
                Some("needs a CodeListRef to offer answers")
            }
            _ if qt.is_choice() && item.data_type == DataType::Date => Some("used on a date item"),
            QuestionType::YesNo if code_list.is_some_and(|cl| cl.items.len() != 2) => {
                Some("needs a code list with exactly two answers")
            }
            _ => None,
        };
        if let Some(reason) = mismatch {
            out.push(Diagnostic::new(
                loc,
                DiagnosticKind::QuestionTypeMismatch {
                    question_type: qt,
                    reason,
                },
            ));
        }
    }

    for cl in study.code_lists.values() {
        if cl.items.is_empty() {
            out.push(Diagnostic::new(&cl.oid, DiagnosticKind::EmptyCodeList));
        }
        let mut seen = HashSet::new();
        for item in &cl.items {
            if !seen.insert(item.coded_value.as_str()) {
                out.push(Diagnostic::new(
                    &cl.oid,
                    DiagnosticKind::DuplicateCodedValue(item.coded_value.clone()),
                ));
            }
            check_translations(&mut out, &cl.oid, &item.decode);
        }
    }

    // A language is incomplete for a form when some of its items carry it
    // and others do not.
    for form in study.forms.values() {
        let items: Vec<_> = study.form_items(form).map(|(_, i)| i).collect();
        let langs: BTreeSet<String> = items
            .iter()
            .flat_map(|i| i.question.langs().map(str::to_owned))
            .collect();
        for lang in langs {
            let missing: Vec<String> = items
                .iter()
                .filter(|i| !i.question.langs().any(|l| l == lang))
                .map(|i| i.oid.clone())
                .collect();
            if !missing.is_empty() {
                out.push(Diagnostic::new(
                    &form.oid,
                    DiagnosticKind::IncompleteTranslation { lang, missing },
                ));
            }
        }
    }

    out
}
