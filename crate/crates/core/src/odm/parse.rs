use std::collections::HashSet;
use std::fmt;

use thiserror::Error;

use super::{
    CodeList, CodeListItem, DataType, FormDef, ItemDef, ItemGroupDef, ItemRef, QuestionTypeAttr,
    StudyDef, TranslatedText, Translations,
};
use crate::xml::{self, Element, XmlError};

#[derive(Debug, Error)]
pub enum ParseError {
    #[error(transparent)]
    Xml(#[from] XmlError),
    #[error("root element is <{0}>, expected <ODM>")]
    NotOdm(String),
    #[error("document contains no <Study>")]
    NoStudy,
    #[error("<{element}> is missing mandatory attribute {attribute}")]
    MissingAttribute {
        element: String,
        attribute: &'static str,
    },
    #[error("<{element}> attribute {attribute}={value:?}: {reason}")]
    InvalidAttribute {
        element: String,
        attribute: &'static str,
        value: String,
        reason: String,
    },
    #[error("duplicate OID {0:?}")]
    DuplicateOid(String),
    #[error("{from} references unknown {kind} {to:?}")]
    DanglingReference {
        from: String,
        kind: &'static str,
        to: String,
    },
}

/// Something in the document that was skipped because it lies outside the
/// supported subset.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseWarning {
    pub path: String,
    pub message: String,
}

impl fmt::Display for ParseWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

/// Standard ODM attributes that carry nothing the model needs.
const IGNORED_ATTRS: &[&str] = &[
    "ODMVersion",
    "FileOID",
    "FileType",
    "CreationDateTime",
    "Granularity",
    "AsOfDateTime",
    "Originator",
    "SourceSystem",
    "SourceSystemVersion",
    "Archival",
    "PriorFileOID",
    "Description",
    "Repeating",
    "IsReferenceData",
    "SASName",
    "SASDatasetName",
    "SASFieldName",
    "SDSVarName",
    "Domain",
    "Origin",
    "Purpose",
    "Role",
    "RoleCodeListOID",
    "Comment",
    "SignificantDigits",
    "MethodOID",
    "KeySequence",
    "CollectionExceptionConditionOID",
];

struct Ctx {
    warnings: Vec<ParseWarning>,
    seen: HashSet<String>,
}

impl Ctx {
    fn warn(&mut self, path: &str, message: impl Into<String>) {
        let w = ParseWarning {
            path: path.to_owned(),
            message: message.into(),
        };
        log::warn!("{w}");
        self.warnings.push(w);
    }

    fn check_attrs(&mut self, el: &Element, path: &str, known: &[&str]) {
        for (k, _) in &el.attrs {
            if !known.contains(&k.as_str()) && !IGNORED_ATTRS.contains(&k.as_str()) {
                self.warn(path, format!("unsupported attribute {k} ignored"));
            }
        }
    }

    fn unknown_child(&mut self, path: &str, child: &Element) {
        self.warn(
            path,
            format!("unsupported element <{}> ignored", child.name),
        );
    }

    fn claim_oid(&mut self, oid: &str) -> Result<(), ParseError> {
        if !self.seen.insert(oid.to_owned()) {
            return Err(ParseError::DuplicateOid(oid.to_owned()));
        }
        Ok(())
    }
}

fn required<'a>(el: &'a Element, attribute: &'static str) -> Result<&'a str, ParseError> {
    match el.attr(attribute) {
        Some(v) if !v.trim().is_empty() => Ok(v),
        _ => Err(ParseError::MissingAttribute {
            element: el.name.clone(),
            attribute,
        }),
    }
}

fn invalid(
    el: &Element,
    attribute: &'static str,
    value: &str,
    reason: impl Into<String>,
) -> ParseError {
    ParseError::InvalidAttribute {
        element: el.name.clone(),
        attribute,
        value: value.to_owned(),
        reason: reason.into(),
    }
}

fn parse_yes_no(el: &Element, attribute: &'static str, default: bool) -> Result<bool, ParseError> {
    match el.attr(attribute) {
        None => Ok(default),
        Some("Yes") => Ok(true),
        Some("No") => Ok(false),
        Some(v) => Err(invalid(el, attribute, v, "expected Yes or No")),
    }
}

fn parse_u32(el: &Element, attribute: &'static str) -> Result<Option<u32>, ParseError> {
    el.attr(attribute)
        .map(|v| {
            v.trim()
                .parse::<u32>()
                .map_err(|_| invalid(el, attribute, v, "expected a non-negative integer"))
        })
        .transpose()
}

fn parse_data_type(el: &Element) -> Result<DataType, ParseError> {
    let raw = required(el, "DataType")?;
    raw.parse()
        .map_err(|reason: String| invalid(el, "DataType", raw, reason))
}

/// Collect `TranslatedText` children of `el`.
fn translations(ctx: &mut Ctx, el: &Element, path: &str) -> Translations {
    let mut out = Vec::new();
    for child in &el.children {
        if child.name != "TranslatedText" {
            ctx.unknown_child(path, child);
            continue;
        }
        ctx.check_attrs(child, path, &["xml:lang"]);
        let lang = match child.attr("xml:lang") {
            Some(l) if !l.trim().is_empty() => l.trim().to_owned(),
            _ => {
                ctx.warn(path, "TranslatedText without xml:lang treated as \"en\"");
                "en".to_owned()
            }
        };
        out.push(TranslatedText {
            lang,
            text: child.text.clone(),
        });
    }
    Translations(out)
}

fn parse_form(ctx: &mut Ctx, el: &Element) -> Result<FormDef, ParseError> {
    let oid = required(el, "OID")?.to_owned();
    let path = format!("FormDef[{oid}]");
    ctx.check_attrs(el, &path, &["OID", "Name"]);
    let mut group_refs = Vec::new();
    for child in &el.children {
        match child.name.as_str() {
            "ItemGroupRef" => {
                ctx.check_attrs(child, &path, &["ItemGroupOID", "Mandatory", "OrderNumber"]);
                group_refs.push(required(child, "ItemGroupOID")?.to_owned());
            }
            _ => ctx.unknown_child(&path, child),
        }
    }
    Ok(FormDef {
        name: el.attr("Name").unwrap_or(&oid).to_owned(),
        oid,
        group_refs,
    })
}

fn parse_group(ctx: &mut Ctx, el: &Element) -> Result<ItemGroupDef, ParseError> {
    let oid = required(el, "OID")?.to_owned();
    let path = format!("ItemGroupDef[{oid}]");
    ctx.check_attrs(el, &path, &["OID", "Name"]);
    let mut header = Translations::default();
    let mut item_refs = Vec::new();
    for child in &el.children {
        match child.name.as_str() {
            "ItemRef" => {
                ctx.check_attrs(child, &path, &["ItemOID", "Mandatory", "OrderNumber"]);
                item_refs.push(ItemRef {
                    item_oid: required(child, "ItemOID")?.to_owned(),
                    mandatory: parse_yes_no(child, "Mandatory", true)?,
                    order_number: parse_u32(child, "OrderNumber")?,
                });
            }
            "Description" => header = translations(ctx, child, &path),
            _ => ctx.unknown_child(&path, child),
        }
    }
    Ok(ItemGroupDef {
        name: el.attr("Name").unwrap_or(&oid).to_owned(),
        oid,
        header,
        item_refs,
    })
}

fn parse_item(ctx: &mut Ctx, el: &Element) -> Result<ItemDef, ParseError> {
    let oid = required(el, "OID")?.to_owned();
    let path = format!("ItemDef[{oid}]");
    ctx.check_attrs(
        el,
        &path,
        &["OID", "Name", "DataType", "Length", "QuestionType"],
    );
    let mut item = ItemDef::new(oid.clone(), parse_data_type(el)?);
    item.name = el.attr("Name").unwrap_or(&oid).to_owned();
    item.length = parse_u32(el, "Length")?;
    item.question_type = el.attr("QuestionType").map(QuestionTypeAttr::parse);
    for child in &el.children {
        match child.name.as_str() {
            "Question" => item.question = translations(ctx, child, &path),
            "CodeListRef" => {
                ctx.check_attrs(child, &path, &["CodeListOID"]);
                item.code_list_ref = Some(required(child, "CodeListOID")?.to_owned());
            }
            _ => ctx.unknown_child(&path, child),
        }
    }
    Ok(item)
}

fn parse_code_list(ctx: &mut Ctx, el: &Element) -> Result<CodeList, ParseError> {
    let oid = required(el, "OID")?.to_owned();
    let path = format!("CodeList[{oid}]");
    ctx.check_attrs(el, &path, &["OID", "Name", "DataType"]);
    let mut items = Vec::new();
    for child in &el.children {
        match child.name.as_str() {
            "CodeListItem" => {
                ctx.check_attrs(child, &path, &["CodedValue", "Rank", "OrderNumber"]);
                let coded_value = required(child, "CodedValue")?.to_owned();
                let mut decode = Translations::default();
                for sub in &child.children {
                    if sub.name == "Decode" {
                        decode = translations(ctx, sub, &path);
                    } else {
                        ctx.unknown_child(&path, sub);
                    }
                }
                items.push(CodeListItem {
                    coded_value,
                    decode,
                });
            }
            _ => ctx.unknown_child(&path, child),
        }
    }
    Ok(CodeList {
        name: el.attr("Name").unwrap_or(&oid).to_owned(),
        data_type: parse_data_type(el)?,
        oid,
        items,
    })
}

fn check_references(study: &StudyDef) -> Result<(), ParseError> {
    for form in study.forms.values() {
        for g in &form.group_refs {
            if study.group(g).is_none() {
                return Err(ParseError::DanglingReference {
                    from: format!("FormDef {}", form.oid),
                    kind: "ItemGroupDef",
                    to: g.clone(),
                });
            }
        }
    }
    for group in study.groups.values() {
        for r in &group.item_refs {
            if study.item(&r.item_oid).is_none() {
                return Err(ParseError::DanglingReference {
                    from: format!("ItemGroupDef {}", group.oid),
                    kind: "ItemDef",
                    to: r.item_oid.clone(),
                });
            }
        }
    }
    for item in study.items.values() {
        if let Some(cl) = &item.code_list_ref {
            if study.code_list(cl).is_none() {
                return Err(ParseError::DanglingReference {
                    from: format!("ItemDef {}", item.oid),
                    kind: "CodeList",
                    to: cl.clone(),
                });
            }
        }
    }
    Ok(())
}

/// Parse an ODM document, returning the study and any skipped content.
pub fn parse_odm_with_warnings(
    xml_bytes: &[u8],
) -> Result<(StudyDef, Vec<ParseWarning>), ParseError> {
    let root = xml::parse(xml_bytes)?;
    if root.name != "ODM" {
        return Err(ParseError::NotOdm(root.name));
    }
    let mut ctx = Ctx {
        warnings: Vec::new(),
        seen: HashSet::new(),
    };
    ctx.check_attrs(&root, "ODM", &[]);

    let mut studies = root.children_named("Study");
    let study_el = studies.next().ok_or(ParseError::NoStudy)?;
    if studies.next().is_some() {
        ctx.warn("ODM", "only the first <Study> is read");
    }
    for child in root.children.iter().filter(|c| c.name != "Study") {
        ctx.unknown_child("ODM", child);
    }

    let mut study = StudyDef {
        oid: required(study_el, "OID")?.to_owned(),
        ..Default::default()
    };
    ctx.check_attrs(study_el, "Study", &["OID"]);
    study.study_name = study.oid.clone();
    study.metadata_version_oid = "MDV.1".to_owned();

    let mut mdv_seen = false;
    for child in &study_el.children {
        match child.name.as_str() {
            "GlobalVariables" => {
                for gv in &child.children {
                    match gv.name.as_str() {
                        "StudyName" if !gv.text.is_empty() => study.study_name = gv.text.clone(),
                        "StudyName" | "StudyDescription" | "ProtocolName" => {}
                        _ => ctx.unknown_child("GlobalVariables", gv),
                    }
                }
            }
            "MetaDataVersion" if mdv_seen => {
                ctx.warn("Study", "only the first <MetaDataVersion> is read");
            }
            "MetaDataVersion" => {
                mdv_seen = true;
                ctx.check_attrs(child, "MetaDataVersion", &["OID", "Name"]);
                if let Some(oid) = child.attr("OID") {
                    study.metadata_version_oid = oid.to_owned();
                }
                for def in &child.children {
                    match def.name.as_str() {
                        "FormDef" => {
                            let form = parse_form(&mut ctx, def)?;
                            ctx.claim_oid(&form.oid)?;
                            study.forms.insert(form.oid.clone(), form);
                        }
                        "ItemGroupDef" => {
                            let group = parse_group(&mut ctx, def)?;
                            ctx.claim_oid(&group.oid)?;
                            study.groups.insert(group.oid.clone(), group);
                        }
                        "ItemDef" => {
                            let item = parse_item(&mut ctx, def)?;
                            ctx.claim_oid(&item.oid)?;
                            study.items.insert(item.oid.clone(), item);
                        }
                        "CodeList" => {
                            let cl = parse_code_list(&mut ctx, def)?;
                            ctx.claim_oid(&cl.oid)?;
                            study.code_lists.insert(cl.oid.clone(), cl);
                        }
                        _ => ctx.unknown_child("MetaDataVersion", def),
                    }
                }
            }
            _ => ctx.unknown_child("Study", child),
        }
    }

    check_references(&study)?;
    Ok((study, ctx.warnings))
}

/// Parse an ODM document. Skipped content is logged but not returned; use
/// [`parse_odm_with_warnings`] to inspect it.
pub fn parse_odm(xml_bytes: &[u8]) -> Result<StudyDef, ParseError> {
    parse_odm_with_warnings(xml_bytes).map(|(s, _)| s)
}
