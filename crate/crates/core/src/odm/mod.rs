//! ODM study metadata: forms, item groups, items, code lists and their
//! translations, plus the `QuestionType` rendering hint on `ItemDef`.

mod parse;
mod validate;
mod write;

use std::fmt;
use std::str::FromStr;

use indexmap::IndexMap;

pub use parse::{parse_odm, parse_odm_with_warnings, ParseError, ParseWarning};
pub use validate::{validate_study, Diagnostic, DiagnosticKind, Severity};
pub use write::{write_odm, ODM_NAMESPACE};

/// One language variant of a piece of display text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TranslatedText {
    pub lang: String,
    pub text: String,
}

impl TranslatedText {
    pub fn new(lang: impl Into<String>, text: impl Into<String>) -> Self {
        Self {
            lang: lang.into(),
            text: text.into(),
        }
    }
}

/// The translations of one question, header or decode, in document order.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Translations(pub Vec<TranslatedText>);

impl Translations {
    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, TranslatedText> {
        self.0.iter()
    }

    pub fn langs(&self) -> impl Iterator<Item = &str> {
        self.0.iter().map(|t| t.lang.as_str())
    }

    pub fn resolve(&self, lang: &str) -> Option<&str> {
        resolve_text(&self.0, lang)
    }
}

impl<S: Into<String>, T: Into<String>> FromIterator<(S, T)> for Translations {
    fn from_iter<I: IntoIterator<Item = (S, T)>>(iter: I) -> Self {
        Translations(
            iter.into_iter()
                .map(|(l, t)| TranslatedText::new(l, t))
                .collect(),
        )
    }
}

fn primary_subtag(tag: &str) -> &str {
    tag.split(['-', '_']).next().unwrap_or(tag)
}

/// Pick the text for `requested` out of a translation set.
///
/// Lookup order: exact tag, then primary subtag (`pl-PL` matches `pl`), then
/// English, then the first entry. Only an empty set yields `None`.
pub fn resolve_text<'a>(texts: &'a [TranslatedText], requested: &str) -> Option<&'a str> {
    let by = |pred: &dyn Fn(&TranslatedText) -> bool| texts.iter().find(|t| pred(t));
    let wanted = primary_subtag(requested);
    by(&|t| t.lang.eq_ignore_ascii_case(requested))
        .or_else(|| by(&|t| primary_subtag(&t.lang).eq_ignore_ascii_case(wanted)))
        .or_else(|| by(&|t| primary_subtag(&t.lang).eq_ignore_ascii_case("en")))
        .or_else(|| texts.first())
        .map(|t| t.text.as_str())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DataType {
    Text,
    Integer,
    Float,
    Date,
}

impl DataType {
    pub const ALL: [DataType; 4] = [
        DataType::Text,
        DataType::Integer,
        DataType::Float,
        DataType::Date,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            DataType::Text => "text",
            DataType::Integer => "integer",
            DataType::Float => "float",
            DataType::Date => "date",
        }
    }

    pub fn is_numeric(self) -> bool {
        matches!(self, DataType::Integer | DataType::Float)
    }
}

impl FromStr for DataType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "text" | "string" => Ok(DataType::Text),
            "integer" => Ok(DataType::Integer),
            "float" | "double" => Ok(DataType::Float),
            "date" => Ok(DataType::Date),
            other => Err(format!("unsupported DataType {other:?}")),
        }
    }
}

impl fmt::Display for DataType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Rendering hint carried by the `QuestionType` attribute on `ItemDef`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum QuestionType {
    InputField,
    DatePicker,
    RadioButton,
    YesNo,
    DropDown,
}

impl QuestionType {
    pub const ALL: [QuestionType; 5] = [
        QuestionType::InputField,
        QuestionType::DatePicker,
        QuestionType::RadioButton,
        QuestionType::YesNo,
        QuestionType::DropDown,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            QuestionType::InputField => "InputField",
            QuestionType::DatePicker => "DatePicker",
            QuestionType::RadioButton => "RadioButton",
            QuestionType::YesNo => "YesNo",
            QuestionType::DropDown => "DropDown",
        }
    }

    /// Whether the type presents a fixed set of answers.
    pub fn is_choice(self) -> bool {
        matches!(
            self,
            QuestionType::RadioButton | QuestionType::YesNo | QuestionType::DropDown
        )
    }
}

impl FromStr for QuestionType {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        QuestionType::ALL
            .into_iter()
            .find(|qt| qt.as_str() == s)
            .ok_or(())
    }
}

impl fmt::Display for QuestionType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Raw value of a `QuestionType` attribute. Unrecognised values are kept so
/// validation can report them.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum QuestionTypeAttr {
    Known(QuestionType),
    Unknown(String),
}

impl QuestionTypeAttr {
    pub fn parse(raw: &str) -> Self {
        match raw.parse() {
            Ok(qt) => QuestionTypeAttr::Known(qt),
            Err(()) => QuestionTypeAttr::Unknown(raw.to_owned()),
        }
    }

    pub fn as_str(&self) -> &str {
        match self {
            QuestionTypeAttr::Known(qt) => qt.as_str(),
            QuestionTypeAttr::Unknown(raw) => raw,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CodeListItem {
    pub coded_value: String,
    pub decode: Translations,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CodeList {
    pub oid: String,
    pub name: String,
    pub data_type: DataType,
    pub items: Vec<CodeListItem>,
}

impl CodeList {
    pub fn contains(&self, value: &str) -> bool {
        self.items.iter().any(|i| i.coded_value == value)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ItemDef {
    pub oid: String,
    pub name: String,
    pub data_type: DataType,
    pub length: Option<u32>,
    pub question: Translations,
    pub code_list_ref: Option<String>,
    pub question_type: Option<QuestionTypeAttr>,
}

impl ItemDef {
    pub fn new(oid: impl Into<String>, data_type: DataType) -> Self {
        let oid = oid.into();
        Self {
            name: oid.clone(),
            oid,
            data_type,
            length: None,
            question: Translations::default(),
            code_list_ref: None,
            question_type: None,
        }
    }
}

/// Resolve the rendering type of an item.
///
/// An explicit, recognised attribute wins. Otherwise: date items get a date
/// picker, code-listed items a drop-down, everything else an input field.
pub fn infer_question_type(item: &ItemDef) -> QuestionType {
    if let Some(QuestionTypeAttr::Known(qt)) = item.question_type {
        return qt;
    }
    if item.data_type == DataType::Date {
        QuestionType::DatePicker
    } else if item.code_list_ref.is_some() {
        QuestionType::DropDown
    } else {
        QuestionType::InputField
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ItemRef {
    pub item_oid: String,
    pub mandatory: bool,
    pub order_number: Option<u32>,
}

impl ItemRef {
    pub fn mandatory(item_oid: impl Into<String>) -> Self {
        Self {
            item_oid: item_oid.into(),
            mandatory: true,
            order_number: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ItemGroupDef {
    pub oid: String,
    pub name: String,
    /// Section title, e.g. "Smoking". Empty when the document gives none.
    pub header: Translations,
    pub item_refs: Vec<ItemRef>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FormDef {
    pub oid: String,
    pub name: String,
    pub group_refs: Vec<String>,
}

/// A parsed study. Immutable once built; all collections keep document order.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct StudyDef {
    pub oid: String,
    pub study_name: String,
    pub metadata_version_oid: String,
    pub forms: IndexMap<String, FormDef>,
    pub groups: IndexMap<String, ItemGroupDef>,
    pub items: IndexMap<String, ItemDef>,
    pub code_lists: IndexMap<String, CodeList>,
}

impl StudyDef {
    pub fn form(&self, oid: &str) -> Option<&FormDef> {
        self.forms.get(oid)
    }

    pub fn group(&self, oid: &str) -> Option<&ItemGroupDef> {
        self.groups.get(oid)
    }

    pub fn item(&self, oid: &str) -> Option<&ItemDef> {
        self.items.get(oid)
    }

    pub fn code_list(&self, oid: &str) -> Option<&CodeList> {
        self.code_lists.get(oid)
    }

    /// The code list an item refers to, if it has one and it resolves.
    pub fn code_list_of(&self, item: &ItemDef) -> Option<&CodeList> {
        item.code_list_ref
            .as_deref()
            .and_then(|oid| self.code_list(oid))
    }

    /// Items reachable from a form, in screen order. Dangling refs are skipped.
    pub fn form_items<'a>(
        &'a self,
        form: &'a FormDef,
    ) -> impl Iterator<Item = (&'a ItemRef, &'a ItemDef)> + 'a {
        form.group_refs
            .iter()
            .filter_map(|g| self.group(g))
            .flat_map(|g| g.item_refs.iter())
            .filter_map(|r| self.item(&r.item_oid).map(|i| (r, i)))
    }

    /// A study holding only `form_oid` and the definitions it references.
    pub fn subset_for_form(&self, form_oid: &str) -> Option<StudyDef> {
        let form = self.form(form_oid)?;
        let mut out = StudyDef {
            oid: self.oid.clone(),
            study_name: self.study_name.clone(),
            metadata_version_oid: self.metadata_version_oid.clone(),
            ..Default::default()
        };
        out.forms.insert(form.oid.clone(), form.clone());
        for g in &form.group_refs {
            if let Some(group) = self.group(g) {
                out.groups.insert(group.oid.clone(), group.clone());
            }
        }
        // keep document order of the original collections
        for item in self.items.values() {
            let used = out
                .groups
                .values()
                .any(|g| g.item_refs.iter().any(|r| r.item_oid == item.oid));
            if used {
                out.items.insert(item.oid.clone(), item.clone());
            }
        }
        for cl in self.code_lists.values() {
            if out
                .items
                .values()
                .any(|i| i.code_list_ref.as_deref() == Some(cl.oid.as_str()))
            {
                out.code_lists.insert(cl.oid.clone(), cl.clone());
            }
        }
        Some(out)
    }
}
