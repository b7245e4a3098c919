#![allow(dead_code)]

use std::path::PathBuf;

use promtrial_core::odm::{
    CodeList, CodeListItem, DataType, FormDef, ItemDef, ItemGroupDef, ItemRef, QuestionType,
    QuestionTypeAttr, StudyDef, Translations,
};
use proptest::prelude::*;

pub fn fixture(name: &str) -> Vec<u8> {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../fixtures")
        .join(name);
    std::fs::read(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

pub fn data_type() -> impl Strategy<Value = DataType> {
    prop_oneof![
        Just(DataType::Text),
        Just(DataType::Integer),
        Just(DataType::Float),
        Just(DataType::Date)
    ]
}

pub fn text() -> impl Strategy<Value = String> {
    "[A-Za-złęż&<>][A-Za-z0-9 łęż&<>\"'.,?]{0,14}[A-Za-z0-9?]"
}

pub fn translations() -> impl Strategy<Value = Translations> {
    proptest::sample::subsequence(vec!["en", "pl", "nl", "el", "pt-BR"], 0..=5)
        .prop_flat_map(|langs| {
            let n = langs.len();
            (Just(langs), proptest::collection::vec(text(), n))
        })
        .prop_map(|(langs, texts)| langs.into_iter().zip(texts).collect())
}

pub fn question_type() -> impl Strategy<Value = Option<QuestionTypeAttr>> {
    prop_oneof![
        2 => Just(None),
        2 => proptest::sample::select(QuestionType::ALL.to_vec())
            .prop_map(|q| Some(QuestionTypeAttr::Known(q))),
        1 => proptest::sample::select(vec!["Slider", "Matrix"])
            .prop_map(|s| Some(QuestionTypeAttr::Unknown(s.to_owned()))),
    ]
}

/// Random study whose references all resolve.
pub fn study() -> impl Strategy<Value = StudyDef> {
    let code_lists = proptest::collection::vec(
        (
            text(),
            data_type(),
            proptest::collection::vec(translations(), 1..4),
        ),
        0..3,
    );
    let items = proptest::collection::vec(
        (
            text(),
            data_type(),
            proptest::option::of(1u32..200),
            translations(),
            any::<prop::sample::Index>(),
            any::<bool>(),
            question_type(),
        ),
        0..8,
    );
    let groups = proptest::collection::vec(
        (
            text(),
            translations(),
            proptest::collection::vec(
                (any::<prop::sample::Index>(), any::<bool>(), any::<bool>()),
                0..5,
            ),
        ),
        0..4,
    );
    let forms = proptest::collection::vec(
        (
            text(),
            proptest::collection::vec(any::<prop::sample::Index>(), 0..4),
        ),
        1..3,
    );
    (text(), code_lists, items, groups, forms).prop_map(|(name, cls, items, groups, forms)| {
        let mut s = StudyDef {
            oid: "S.1".into(),
            study_name: name,
            metadata_version_oid: "MDV.1".into(),
            ..Default::default()
        };
        for (i, (name, dt, decodes)) in cls.into_iter().enumerate() {
            let oid = format!("CL.{i}");
            s.code_lists.insert(
                oid.clone(),
                CodeList {
                    oid,
                    name,
                    data_type: dt,
                    items: decodes
                        .into_iter()
                        .enumerate()
                        .map(|(k, decode)| CodeListItem {
                            coded_value: format!("v{k}"),
                            decode,
                        })
                        .collect(),
                },
            );
        }
        let cl_oids: Vec<String> = s.code_lists.keys().cloned().collect();
        for (i, (name, dt, length, question, cl, use_cl, qt)) in items.into_iter().enumerate() {
            let oid = format!("ID.{i}");
            let mut item = ItemDef::new(oid.clone(), dt);
            item.name = name;
            item.length = length;
            item.question = question;
            item.question_type = qt;
            if use_cl && !cl_oids.is_empty() {
                item.code_list_ref = Some(cl.get(&cl_oids).clone());
            }
            s.items.insert(oid, item);
        }
        let item_oids: Vec<String> = s.items.keys().cloned().collect();
        for (i, (name, header, refs)) in groups.into_iter().enumerate() {
            let oid = format!("IG.{i}");
            let item_refs = if item_oids.is_empty() {
                Vec::new()
            } else {
                refs.into_iter()
                    .enumerate()
                    .map(|(n, (idx, mandatory, numbered))| ItemRef {
                        item_oid: idx.get(&item_oids).clone(),
                        mandatory,
                        order_number: numbered.then_some(n as u32 + 1),
                    })
                    .collect()
            };
            s.groups.insert(
                oid.clone(),
                ItemGroupDef {
                    oid,
                    name,
                    header,
                    item_refs,
                },
            );
        }
        let group_oids: Vec<String> = s.groups.keys().cloned().collect();
        for (i, (name, refs)) in forms.into_iter().enumerate() {
            let oid = format!("F.{i}");
            let group_refs = if group_oids.is_empty() {
                Vec::new()
            } else {
                refs.into_iter()
                    .map(|idx| idx.get(&group_oids).clone())
                    .collect()
            };
            s.forms.insert(
                oid.clone(),
                FormDef {
                    oid,
                    name,
                    group_refs,
                },
            );
        }
        s
    })
}

pub mod oracles;
