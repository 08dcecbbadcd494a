//! Shared fixtures for the CLI and acceptance suites.

use std::fmt::Write as _;

/// One Wikidata-shaped entity document on a single line.
///
/// `claims` are (property, target) pairs; targets starting with `Q` or
/// `P` become entity references, anything else a string literal. Passing
/// an empty label or description omits the field entirely.
pub fn entity_doc(id: &str, label: &str, description: &str, claims: &[(&str, &str)]) -> String {
    let mut doc = String::from("{");
    let type_name = if id.starts_with('P') { "property" } else { "item" };
    write!(doc, "\"type\":\"{type_name}\",\"id\":\"{id}\"").unwrap();
    if !label.is_empty() {
        write!(
            doc,
            ",\"labels\":{{\"en\":{{\"language\":\"en\",\"value\":\"{label}\"}}}}"
        )
        .unwrap();
    }
    if !description.is_empty() {
        write!(
            doc,
            ",\"descriptions\":{{\"en\":{{\"language\":\"en\",\"value\":\"{description}\"}}}}"
        )
        .unwrap();
    }
    if !claims.is_empty() {
        doc.push_str(",\"claims\":{");
        let mut grouped: Vec<(&str, Vec<&str>)> = Vec::new();
        for (property, target) in claims {
            match grouped.iter_mut().find(|(p, _)| p == property) {
                Some((_, targets)) => targets.push(target),
                None => grouped.push((property, vec![target])),
            }
        }
        for (gi, (property, targets)) in grouped.iter().enumerate() {
            if gi > 0 {
                doc.push(',');
            }
            write!(doc, "\"{property}\":[").unwrap();
            for (ti, target) in targets.iter().enumerate() {
                if ti > 0 {
                    doc.push(',');
                }
                let is_entity = (target.starts_with('Q') || target.starts_with('P'))
                    && target[1..].chars().all(|c| c.is_ascii_digit());
                if is_entity {
                    write!(
                        doc,
                        "{{\"mainsnak\":{{\"snaktype\":\"value\",\"property\":\"{property}\",\
                         \"datavalue\":{{\"value\":{{\"entity-type\":\"item\",\"id\":\"{target}\"}},\
                         \"type\":\"wikibase-entityid\"}},\"datatype\":\"wikibase-item\"}},\
                         \"type\":\"statement\",\"rank\":\"normal\"}}"
                    )
                    .unwrap();
                } else {
                    write!(
                        doc,
                        "{{\"mainsnak\":{{\"snaktype\":\"value\",\"property\":\"{property}\",\
                         \"datavalue\":{{\"value\":\"{target}\",\"type\":\"string\"}},\
                         \"datatype\":\"string\"}},\"type\":\"statement\",\"rank\":\"normal\"}}"
                    )
                    .unwrap();
                }
            }
            doc.push(']');
        }
        doc.push('}');
    }
    doc.push('}');
    doc
}

/// The 8 instance-of parents every synthetic dump entity points at.
pub const PARENTS: [(&str, &str, &str); 8] = [
    ("Q6256", "country", "distinct territorial body"),
    ("Q82794", "region", "area of land"),
    ("Q5", "human", "any member of Homo sapiens"),
    ("Q515", "city", "large permanent human settlement"),
    ("Q3918", "university", "institution of higher education"),
    ("Q571", "book", "written medium"),
    ("Q11424", "film", "sequence of images on screen"),
    ("Q7889", "video game", "electronic game with a visual interface"),
];

/// A 100-document synthetic dump: exactly 83 complete entities (Belgium
/// with id Q31 among them) and 17 incomplete documents, wrapped in JSON
/// array syntax with trailing commas. Deterministic text, no randomness.
pub fn synthetic_dump() -> String {
    let mut docs: Vec<String> = Vec::new();

    // Belgium, the worked extraction example.
    docs.push(entity_doc(
        "Q31",
        "Belgium",
        "country in Western Europe",
        &[
            ("P361", "Q27496"),
            ("P31", "Q6256"),
            ("P1082", "+11584008"),
        ],
    ));
    docs.push(entity_doc(
        "Q27496",
        "Western Europe",
        "region of Europe",
        &[("P31", "Q82794")],
    ));

    // The parent entities themselves, complete so they become nodes.
    for (id, label, description) in PARENTS {
        docs.push(entity_doc(id, label, description, &[("P31", "Q35120")]));
    }

    // 72 generated complete entities; claims follow a fixed pattern so
    // the graph and label structure are deterministic.
    for i in 0..72 {
        let id = format!("Q{}", 1000 + i);
        let parent = PARENTS[i % PARENTS.len()].0;
        let mut claims: Vec<(String, String)> = vec![("P31".into(), parent.into())];
        if i % 3 == 0 {
            claims.push(("P131".into(), format!("Q{}", 1000 + (i + 7) % 72)));
        }
        if i % 4 == 1 {
            claims.push(("P361".into(), format!("Q{}", 1000 + (i + 13) % 72)));
            // Same pair again under another property: multi-typed edge.
            claims.push(("P131".into(), format!("Q{}", 1000 + (i + 13) % 72)));
        }
        if i % 5 == 2 {
            claims.push(("P50".into(), "Q31".into()));
        }
        if i % 6 == 3 {
            claims.push(("P999".into(), format!("ext-{i}")));
        }
        if i % 7 == 4 {
            claims.push(("P1082".into(), format!("+{}", 1000 * i)));
        }
        let claim_refs: Vec<(&str, &str)> = claims
            .iter()
            .map(|(p, t)| (p.as_str(), t.as_str()))
            .collect();
        docs.push(entity_doc(
            &id,
            &format!("entity {i}"),
            &format!("synthetic thing number {i}"),
            &claim_refs,
        ));
    }

    // One complete entity whose only claim is screened: kept, but with an
    // empty claim list after filtering.
    docs.push(entity_doc(
        "Q2000",
        "screened only",
        "entity with only screened claims",
        &[("P999", "ext-all")],
    ));

    assert_eq!(docs.len(), 83, "complete documents");

    // 17 incomplete documents: 5 property docs carrying labels for text
    // rendering, plus 12 broken entities.
    docs.push(entity_doc("P361", "part of", "", &[]));
    docs.push(entity_doc("P31", "instance of", "", &[]));
    docs.push(entity_doc("P50", "author", "", &[]));
    docs.push(entity_doc("P131", "located in", "", &[]));
    docs.push(entity_doc("P999", "external ref", "", &[]));
    for i in 0..12 {
        let id = format!("Q{}", 3000 + i);
        let doc = match i % 3 {
            0 => entity_doc(&id, "", &format!("description only {i}"), &[("P31", "Q5")]),
            1 => entity_doc(&id, &format!("label only {i}"), "", &[("P31", "Q5")]),
            _ => entity_doc(&id, &format!("no claims {i}"), &format!("d {i}"), &[]),
        };
        docs.push(doc);
    }
    assert_eq!(docs.len(), 100, "total documents");

    // Array wrapper with trailing commas, as dumps ship them.
    let mut dump = String::from("[\n");
    for doc in &docs {
        dump.push_str(doc);
        dump.push_str(",\n");
    }
    dump.push_str("]\n");
    dump
}

/// Screen set matching the synthetic dump.
pub fn screen_file_contents() -> &'static str {
    "# identifiers without semantics\nP999\n"
}

/// Writes the dump and screen fixtures into a directory, returning their
/// paths.
pub fn write_fixtures(dir: &std::path::Path) -> (std::path::PathBuf, std::path::PathBuf) {
    let dump = dir.join("dump.json");
    let screen = dir.join("screen.txt");
    std::fs::write(&dump, synthetic_dump()).unwrap();
    std::fs::write(&screen, screen_file_contents()).unwrap();
    (dump, screen)
}

/// Path of the compiled CLI binary.
pub fn hgd_bin() -> &'static str {
    env!("CARGO_BIN_EXE_hgd")
}
