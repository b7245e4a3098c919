//! Form rendering and response handling.
//!
//! A form becomes a [`RenderPlan`]: one screen per item group, one question
//! per item reference, each question carrying the control it should be shown
//! with. Answers collected against a plan are checked for completeness and
//! type, then serialized as an ODM `ClinicalData` document.

use std::fmt::{self, Write as _};

use chrono::{DateTime, NaiveDate, Utc};
use indexmap::IndexMap;
use thiserror::Error;

use crate::odm::{infer_question_type, CodeList, DataType, ItemDef, QuestionType, StudyDef};
use crate::xml::{self, escape, XmlError};

/// Platform-neutral answer widget.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ControlKind {
    TextEntry,
    NumericEntry,
    DateSelector,
    InlineSingleChoice,
    BinaryToggle,
    ListSingleChoice,
}

impl ControlKind {
    pub fn is_choice(self) -> bool {
        matches!(
            self,
            ControlKind::InlineSingleChoice
                | ControlKind::BinaryToggle
                | ControlKind::ListSingleChoice
        )
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ControlKind::TextEntry => "TextEntry",
            ControlKind::NumericEntry => "NumericEntry",
            ControlKind::DateSelector => "DateSelector",
            ControlKind::InlineSingleChoice => "InlineSingleChoice",
            ControlKind::BinaryToggle => "BinaryToggle",
            ControlKind::ListSingleChoice => "ListSingleChoice",
        }
    }
}

impl fmt::Display for ControlKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

pub fn map_control(qt: QuestionType, data_type: DataType) -> ControlKind {
    match qt {
        QuestionType::InputField if data_type.is_numeric() => ControlKind::NumericEntry,
        QuestionType::InputField => ControlKind::TextEntry,
        QuestionType::DatePicker => ControlKind::DateSelector,
        QuestionType::RadioButton => ControlKind::InlineSingleChoice,
        QuestionType::YesNo => ControlKind::BinaryToggle,
        QuestionType::DropDown => ControlKind::ListSingleChoice,
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChoiceOption {
    pub value: String,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QuestionView {
    pub item_oid: String,
    pub text: String,
    pub control: ControlKind,
    /// Non-empty exactly when `control` is a choice control.
    pub options: Vec<ChoiceOption>,
    pub mandatory: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Screen {
    pub group_oid: String,
    pub header: String,
    pub questions: Vec<QuestionView>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RenderPlan {
    pub study_oid: String,
    pub metadata_version_oid: String,
    pub form_oid: String,
    pub lang: String,
    pub screens: Vec<Screen>,
}

impl RenderPlan {
    pub fn questions(&self) -> impl Iterator<Item = &QuestionView> {
        self.screens.iter().flat_map(|s| s.questions.iter())
    }

    /// Text preview, one line per question preceded by a line per screen:
    ///
    /// ```text
    /// # 1 PROM Demographics
    /// [1/1] How many persons ... (NumericEntry)
    /// [1/2] How would you describe ... (ListSingleChoice): 1=Employed; 2=Retired
    /// ```
    pub fn preview(&self) -> String {
        let mut out = String::new();
        for (s, screen) in self.screens.iter().enumerate() {
            let _ = writeln!(out, "# {} {}", s + 1, screen.header);
            for (q, view) in screen.questions.iter().enumerate() {
                let _ = write!(
                    out,
                    "[{}/{}] {} ({})",
                    s + 1,
                    q + 1,
                    view.text,
                    view.control
                );
                if !view.options.is_empty() {
                    let opts: Vec<String> = view
                        .options
                        .iter()
                        .map(|o| format!("{}={}", o.value, o.label))
                        .collect();
                    let _ = write!(out, ": {}", opts.join("; "));
                }
                out.push('\n');
            }
        }
        out
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum FormError {
    #[error("unknown form {0:?}")]
    UnknownForm(String),
}

fn options_for(code_list: &CodeList, lang: &str) -> Vec<ChoiceOption> {
    code_list
        .items
        .iter()
        .map(|i| ChoiceOption {
            value: i.coded_value.clone(),
            label: i.decode.resolve(lang).unwrap_or(&i.coded_value).to_owned(),
        })
        .collect()
}

fn question_view(study: &StudyDef, item: &ItemDef, mandatory: bool, lang: &str) -> QuestionView {
    let qt = infer_question_type(item);
    let code_list = study.code_list_of(item);
    // a choice type with nothing to choose from degrades to free entry
    let control = match code_list {
        Some(_) => map_control(qt, item.data_type),
        None if qt.is_choice() => map_control(QuestionType::InputField, item.data_type),
        None => map_control(qt, item.data_type),
    };
    let options = match code_list {
        Some(cl) if control.is_choice() => options_for(cl, lang),
        _ => Vec::new(),
    };
    QuestionView {
        item_oid: item.oid.clone(),
        text: item.question.resolve(lang).unwrap_or(&item.name).to_owned(),
        control,
        options,
        mandatory,
    }
}

pub fn build_render_plan(
    study: &StudyDef,
    form_oid: &str,
    lang: &str,
) -> Result<RenderPlan, FormError> {
    let form = study
        .form(form_oid)
        .ok_or_else(|| FormError::UnknownForm(form_oid.to_owned()))?;
    let screens = form
        .group_refs
        .iter()
        .filter_map(|g| study.group(g))
        .map(|group| Screen {
            group_oid: group.oid.clone(),
            header: group.header.resolve(lang).unwrap_or(&group.name).to_owned(),
            questions: group
                .item_refs
                .iter()
                .filter_map(|r| study.item(&r.item_oid).map(|i| (r, i)))
                .map(|(r, item)| question_view(study, item, r.mandatory, lang))
                .collect(),
        })
        .collect();
    Ok(RenderPlan {
        study_oid: study.oid.clone(),
        metadata_version_oid: study.metadata_version_oid.clone(),
        form_oid: form.oid.clone(),
        lang: lang.to_owned(),
        screens,
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Answer {
    pub value: String,
    pub committed_at: DateTime<Utc>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AnswerError {
    #[error("commit at {at} precedes the previous commit at {last}")]
    OutOfOrder {
        at: DateTime<Utc>,
        last: DateTime<Utc>,
    },
}

/// Answers held in memory for one questionnaire session, in commit order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AnswerSet {
    answers: IndexMap<String, Answer>,
}

impl AnswerSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Record `value` for `item_oid`, replacing any earlier answer.
    pub fn commit(
        &mut self,
        item_oid: impl Into<String>,
        value: impl Into<String>,
        at: DateTime<Utc>,
    ) -> Result<(), AnswerError> {
        if let Some(last) = self.answers.values().last().map(|a| a.committed_at) {
            if at < last {
                return Err(AnswerError::OutOfOrder { at, last });
            }
        }
        let item_oid = item_oid.into();
        self.answers.shift_remove(&item_oid);
        self.answers.insert(
            item_oid,
            Answer {
                value: value.into(),
                committed_at: at,
            },
        );
        Ok(())
    }

    pub fn get(&self, item_oid: &str) -> Option<&Answer> {
        self.answers.get(item_oid)
    }

    /// True when the item has a non-blank answer.
    pub fn is_answered(&self, item_oid: &str) -> bool {
        self.get(item_oid)
            .is_some_and(|a| !a.value.trim().is_empty())
    }

    pub fn len(&self) -> usize {
        self.answers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.answers.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Answer)> {
        self.answers.iter().map(|(k, v)| (k.as_str(), v))
    }
}

/// Mandatory questions on `screen` still lacking an answer, in screen order.
pub fn validate_screen(screen: &Screen, answers: &AnswerSet) -> Vec<String> {
    screen
        .questions
        .iter()
        .filter(|q| q.mandatory && !answers.is_answered(&q.item_oid))
        .map(|q| q.item_oid.clone())
        .collect()
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("item {item_oid}: {reason}")]
pub struct TypeError {
    pub item_oid: String,
    pub reason: String,
}

fn is_iso_date(raw: &str) -> bool {
    let b = raw.as_bytes();
    b.len() == 10
        && b[4] == b'-'
        && b[7] == b'-'
        && b.iter()
            .enumerate()
            .all(|(i, c)| i == 4 || i == 7 || c.is_ascii_digit())
        && NaiveDate::parse_from_str(raw, "%Y-%m-%d").is_ok()
}

/// Check one raw answer against its item definition.
pub fn validate_value(
    item: &ItemDef,
    code_list: Option<&CodeList>,
    raw: &str,
) -> Result<(), TypeError> {
    let fail = |reason: String| {
        Err(TypeError {
            item_oid: item.oid.clone(),
            reason,
        })
    };
    match item.data_type {
        DataType::Integer if raw.parse::<i64>().is_err() => {
            return fail(format!("{raw:?} is not an integer"));
        }
        DataType::Float if !raw.parse::<f64>().is_ok_and(f64::is_finite) => {
            return fail(format!("{raw:?} is not a number"));
        }
        DataType::Date if !is_iso_date(raw) => {
            return fail(format!("{raw:?} is not a YYYY-MM-DD date"));
        }
        DataType::Text => {
            if let Some(max) = item.length {
                let n = raw.chars().count();
                if n > max as usize {
                    return fail(format!("{n} characters exceed Length {max}"));
                }
            }
        }
        _ => {}
    }
    if let Some(cl) = code_list {
        if !cl.contains(raw) {
            return fail(format!("{raw:?} is not a coded value of {}", cl.oid));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ItemDatum {
    pub item_oid: String,
    pub value: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ItemGroupData {
    pub group_oid: String,
    pub items: Vec<ItemDatum>,
}

/// Completed responses for one form, shaped like ODM `ClinicalData`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClinicalDataDoc {
    pub study_oid: String,
    pub metadata_version_oid: String,
    pub subject_key: String,
    pub form_oid: String,
    pub groups: Vec<ItemGroupData>,
}

impl ClinicalDataDoc {
    pub fn item_data(&self) -> impl Iterator<Item = &ItemDatum> {
        self.groups.iter().flat_map(|g| g.items.iter())
    }

    pub fn to_xml(&self) -> Vec<u8> {
        let mut out = String::new();
        out.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
        let _ = writeln!(
            out,
            "<ODM xmlns=\"{}\" ODMVersion=\"1.3.2\" FileType=\"Transactional\">",
            crate::odm::ODM_NAMESPACE
        );
        let _ = writeln!(
            out,
            "  <ClinicalData StudyOID=\"{}\" MetaDataVersionOID=\"{}\">",
            escape(&self.study_oid),
            escape(&self.metadata_version_oid)
        );
        let _ = writeln!(
            out,
            "    <SubjectData SubjectKey=\"{}\">",
            escape(&self.subject_key)
        );
        let _ = writeln!(
            out,
            "      <FormData FormOID=\"{}\">",
            escape(&self.form_oid)
        );
        for g in &self.groups {
            let _ = writeln!(
                out,
                "        <ItemGroupData ItemGroupOID=\"{}\">",
                escape(&g.group_oid)
            );
            for d in &g.items {
                let _ = writeln!(
                    out,
                    "          <ItemData ItemOID=\"{}\" Value=\"{}\"/>",
                    escape(&d.item_oid),
                    escape(&d.value)
                );
            }
            out.push_str("        </ItemGroupData>\n");
        }
        out.push_str("      </FormData>\n    </SubjectData>\n  </ClinicalData>\n</ODM>\n");
        out.into_bytes()
    }
}

#[derive(Debug, Error)]
pub enum ClinicalDataError {
    #[error(transparent)]
    Xml(#[from] XmlError),
    #[error("expected {0}")]
    Shape(&'static str),
}

/// Read a `ClinicalData` document holding exactly one subject and form.
pub fn parse_clinical_data(bytes: &[u8]) -> Result<ClinicalDataDoc, ClinicalDataError> {
    use ClinicalDataError::Shape;
    let root = xml::parse(bytes)?;
    if root.name != "ODM" {
        return Err(Shape("<ODM> root"));
    }
    let cd = root.child("ClinicalData").ok_or(Shape("<ClinicalData>"))?;
    let subject = cd.child("SubjectData").ok_or(Shape("<SubjectData>"))?;
    let form = subject.child("FormData").ok_or(Shape("<FormData>"))?;
    let mut groups = Vec::new();
    for g in form.children_named("ItemGroupData") {
        let mut items = Vec::new();
        for d in g.children_named("ItemData") {
            items.push(ItemDatum {
                item_oid: d
                    .attr("ItemOID")
                    .ok_or(Shape("ItemData/@ItemOID"))?
                    .to_owned(),
                value: d.attr("Value").ok_or(Shape("ItemData/@Value"))?.to_owned(),
            });
        }
        groups.push(ItemGroupData {
            group_oid: g
                .attr("ItemGroupOID")
                .ok_or(Shape("ItemGroupData/@ItemGroupOID"))?
                .to_owned(),
            items,
        });
    }
    Ok(ClinicalDataDoc {
        study_oid: cd
            .attr("StudyOID")
            .ok_or(Shape("ClinicalData/@StudyOID"))?
            .to_owned(),
        metadata_version_oid: cd.attr("MetaDataVersionOID").unwrap_or_default().to_owned(),
        subject_key: subject
            .attr("SubjectKey")
            .ok_or(Shape("SubjectData/@SubjectKey"))?
            .to_owned(),
        form_oid: form
            .attr("FormOID")
            .ok_or(Shape("FormData/@FormOID"))?
            .to_owned(),
        groups,
    })
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SubmissionError {
    #[error("unanswered mandatory questions: {}", .0.join(", "))]
    IncompleteAnswers(Vec<String>),
    #[error(transparent)]
    Type(#[from] TypeError),
    #[error("answer for item {0} which is not on the form")]
    UnknownItem(String),
}

/// Build the response document for a filled-in plan.
///
/// Fails when a mandatory question on any screen is unanswered, when an
/// answer does not type-check, or when an answer names an item the plan does
/// not show. Output is byte-identical for identical inputs.
pub fn build_clinical_data(
    study: &StudyDef,
    plan: &RenderPlan,
    answers: &AnswerSet,
    subject_key: &str,
) -> Result<ClinicalDataDoc, SubmissionError> {
    let missing: Vec<String> = plan
        .screens
        .iter()
        .flat_map(|s| validate_screen(s, answers))
        .collect();
    if !missing.is_empty() {
        return Err(SubmissionError::IncompleteAnswers(missing));
    }
    if let Some((oid, _)) = answers
        .iter()
        .find(|(oid, _)| !plan.questions().any(|q| q.item_oid == *oid))
    {
        return Err(SubmissionError::UnknownItem(oid.to_owned()));
    }

    let mut groups = Vec::with_capacity(plan.screens.len());
    for screen in &plan.screens {
        let mut items = Vec::new();
        for q in &screen.questions {
            let Some(answer) = answers.get(&q.item_oid) else {
                continue;
            };
            if answer.value.trim().is_empty() {
                continue;
            }
            let item = study
                .item(&q.item_oid)
                .ok_or_else(|| SubmissionError::UnknownItem(q.item_oid.clone()))?;
            validate_value(item, study.code_list_of(item), &answer.value)?;
            items.push(ItemDatum {
                item_oid: q.item_oid.clone(),
                value: answer.value.clone(),
            });
        }
        groups.push(ItemGroupData {
            group_oid: screen.group_oid.clone(),
            items,
        });
    }
    Ok(ClinicalDataDoc {
        study_oid: plan.study_oid.clone(),
        metadata_version_oid: plan.metadata_version_oid.clone(),
        subject_key: subject_key.to_owned(),
        form_oid: plan.form_oid.clone(),
        groups,
    })
}

/// [`build_clinical_data`] rendered as XML bytes.
pub fn serialize_responses(
    study: &StudyDef,
    plan: &RenderPlan,
    answers: &AnswerSet,
    subject_key: &str,
) -> Result<Vec<u8>, SubmissionError> {
    build_clinical_data(study, plan, answers, subject_key).map(|doc| doc.to_xml())
}
