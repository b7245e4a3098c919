use std::fmt::Write;

use super::{StudyDef, Translations};
use crate::xml::escape;

pub const ODM_NAMESPACE: &str = "http://www.cdisc.org/ns/odm/v1.3";

fn write_translations(out: &mut String, indent: &str, wrapper: &str, texts: &Translations) {
    if texts.is_empty() {
        return;
    }
    let _ = writeln!(out, "{indent}<{wrapper}>");
    for t in texts.iter() {
        let _ = writeln!(
            out,
            "{indent}  <TranslatedText xml:lang=\"{}\">{}</TranslatedText>",
            escape(&t.lang),
            escape(&t.text)
        );
    }
    let _ = writeln!(out, "{indent}</{wrapper}>");
}

/// Serialize the supported subset of a study as an ODM metadata document.
/// Output is deterministic and parses back to an equal [`StudyDef`].
pub fn write_odm(study: &StudyDef) -> String {
    let mut out = String::new();
    out.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
    let _ = writeln!(
        out,
        "<ODM xmlns=\"{ODM_NAMESPACE}\" ODMVersion=\"1.3.2\" FileType=\"Snapshot\">"
    );
    let _ = writeln!(out, "  <Study OID=\"{}\">", escape(&study.oid));
    let _ = writeln!(
        out,
        "    <GlobalVariables>\n      <StudyName>{}</StudyName>\n    </GlobalVariables>",
        escape(&study.study_name)
    );
    let _ = writeln!(
        out,
        "    <MetaDataVersion OID=\"{}\">",
        escape(&study.metadata_version_oid)
    );

    for form in study.forms.values() {
        let _ = writeln!(
            out,
            "      <FormDef OID=\"{}\" Name=\"{}\">",
            escape(&form.oid),
            escape(&form.name)
        );
        for g in &form.group_refs {
            let _ = writeln!(
                out,
                "        <ItemGroupRef ItemGroupOID=\"{}\" Mandatory=\"Yes\"/>",
                escape(g)
            );
        }
        out.push_str("      </FormDef>\n");
    }

    for group in study.groups.values() {
        let _ = writeln!(
            out,
            "      <ItemGroupDef OID=\"{}\" Name=\"{}\">",
            escape(&group.oid),
            escape(&group.name)
        );
        write_translations(&mut out, "        ", "Description", &group.header);
        for r in &group.item_refs {
            let _ = write!(
                out,
                "        <ItemRef ItemOID=\"{}\" Mandatory=\"{}\"",
                escape(&r.item_oid),
                if r.mandatory { "Yes" } else { "No" }
            );
            if let Some(n) = r.order_number {
                let _ = write!(out, " OrderNumber=\"{n}\"");
            }
            out.push_str("/>\n");
        }
        out.push_str("      </ItemGroupDef>\n");
    }

    for item in study.items.values() {
        let _ = write!(
            out,
            "      <ItemDef OID=\"{}\" Name=\"{}\" DataType=\"{}\"",
            escape(&item.oid),
            escape(&item.name),
            item.data_type
        );
        if let Some(len) = item.length {
            let _ = write!(out, " Length=\"{len}\"");
        }
        if let Some(qt) = &item.question_type {
            let _ = write!(out, " QuestionType=\"{}\"", escape(qt.as_str()));
        }
        out.push_str(">\n");
        write_translations(&mut out, "        ", "Question", &item.question);
        if let Some(cl) = &item.code_list_ref {
            let _ = writeln!(out, "        <CodeListRef CodeListOID=\"{}\"/>", escape(cl));
        }
        out.push_str("      </ItemDef>\n");
    }

    for cl in study.code_lists.values() {
        let _ = writeln!(
            out,
            "      <CodeList OID=\"{}\" Name=\"{}\" DataType=\"{}\">",
            escape(&cl.oid),
            escape(&cl.name),
            cl.data_type
        );
        for item in &cl.items {
            let _ = writeln!(
                out,
                "        <CodeListItem CodedValue=\"{}\">",
                escape(&item.coded_value)
            );
            write_translations(&mut out, "          ", "Decode", &item.decode);
            out.push_str("        </CodeListItem>\n");
        }
        out.push_str("      </CodeList>\n");
    }

    out.push_str("    </MetaDataVersion>\n  </Study>\n</ODM>\n");
    out
}
