//! Streaming extraction of entities from Wikidata-style JSON dumps.
//!
//! A dump is one entity document per line, optionally wrapped in a JSON
//! array (`[` / `]` lines, trailing commas). Documents are parsed one at a
//! time; nothing beyond the current line is buffered. An entity is kept
//! only if it carries an id, an English label, an English description and
//! a non-empty claims object. Claims under screened property ids are
//! dropped, which may legitimately leave a kept record with zero claims.

use std::collections::HashSet;
use std::io::BufRead;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum ClaimTarget {
    /// Claim pointing at another entity; these become directed edges.
    Entity(String),
    /// Literal value rendered verbatim in the feature description.
    Literal(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Claim {
    pub property: String,
    pub target: ClaimTarget,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntityRecord {
    pub id: String,
    pub label: String,
    pub description: String,
    pub claims: Vec<Claim>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParseStats {
    pub lines: usize,
    /// Lines that were not valid JSON documents (skipped, never fatal).
    pub malformed: usize,
    /// Documents missing id, English label/description or claims.
    pub incomplete: usize,
    pub complete: usize,
    /// Individual claims dropped by the screen set.
    pub screened_claims: usize,
}

/// Streaming parser; iterate it for records, then read [`ParseStats`].
pub struct DumpParser<R> {
    reader: R,
    screen: HashSet<String>,
    line_buf: String,
    stats: ParseStats,
}

impl<R: BufRead> DumpParser<R> {
    pub fn new(reader: R, screen: HashSet<String>) -> Self {
        DumpParser {
            reader,
            screen,
            line_buf: String::new(),
            stats: ParseStats::default(),
        }
    }

    pub fn stats(&self) -> ParseStats {
        self.stats
    }
}

impl<R: BufRead> Iterator for DumpParser<R> {
    type Item = EntityRecord;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            self.line_buf.clear();
            match self.reader.read_line(&mut self.line_buf) {
                Ok(0) => return None,
                Ok(_) => {}
                Err(_) => {
                    self.stats.malformed += 1;
                    return None;
                }
            }
            self.stats.lines += 1;
            let line = trim_document(&self.line_buf);
            if line.is_empty() {
                continue;
            }
            let doc: serde_json::Value = match serde_json::from_str(line) {
                Ok(v) => v,
                Err(_) => {
                    self.stats.malformed += 1;
                    continue;
                }
            };
            match extract_record(&doc, &self.screen) {
                Some((record, screened)) => {
                    self.stats.complete += 1;
                    self.stats.screened_claims += screened;
                    return Some(record);
                }
                None => {
                    self.stats.incomplete += 1;
                }
            }
        }
    }
}

/// Strips array wrapper syntax: bare `[` / `]` lines and trailing commas.
fn trim_document(line: &str) -> &str {
    let trimmed = line.trim();
    if trimmed == "[" || trimmed == "]" || trimmed == "," {
        return "";
    }
    trimmed.strip_suffix(',').unwrap_or(trimmed).trim_end()
}

fn english_value<'a>(doc: &'a serde_json::Value, field: &str) -> Option<&'a str> {
    doc.get(field)?.get("en")?.get("value")?.as_str()
}

/// Pulls a complete record out of one entity document, or None if any
/// required attribute is missing. Returns the number of screened claims.
fn extract_record(
    doc: &serde_json::Value,
    screen: &HashSet<String>,
) -> Option<(EntityRecord, usize)> {
    let id = doc.get("id")?.as_str()?;
    if id.is_empty() {
        return None;
    }
    let label = english_value(doc, "labels")?;
    let description = english_value(doc, "descriptions")?;
    let claims_obj = doc.get("claims")?.as_object()?;
    if claims_obj.is_empty() {
        return None;
    }

    let mut claims = Vec::new();
    let mut screened = 0usize;
    // serde_json preserves document order, which fixes claim order in the
    // reorganized text downstream.
    for (property, statements) in claims_obj {
        if screen.contains(property) {
            screened += statements.as_array().map(|a| a.len()).unwrap_or(1);
            continue;
        }
        let Some(statements) = statements.as_array() else {
            continue;
        };
        for statement in statements {
            if let Some(target) = extract_target(statement) {
                claims.push(Claim {
                    property: property.clone(),
                    target,
                });
            }
        }
    }

    Some((
        EntityRecord {
            id: id.to_string(),
            label: label.to_string(),
            description: description.to_string(),
            claims,
        },
        screened,
    ))
}

fn extract_target(statement: &serde_json::Value) -> Option<ClaimTarget> {
    let mainsnak = statement.get("mainsnak")?;
    if mainsnak.get("snaktype").and_then(|s| s.as_str()) != Some("value") {
        return None; // somevalue / novalue snaks carry no target
    }
    let datavalue = mainsnak.get("datavalue")?;
    let value = datavalue.get("value")?;
    match datavalue.get("type").and_then(|t| t.as_str()) {
        Some("wikibase-entityid") => {
            let id = value.get("id")?.as_str()?;
            Some(ClaimTarget::Entity(id.to_string()))
        }
        Some("string") => Some(ClaimTarget::Literal(value.as_str()?.to_string())),
        Some("monolingualtext") => {
            Some(ClaimTarget::Literal(value.get("text")?.as_str()?.to_string()))
        }
        Some("quantity") => {
            Some(ClaimTarget::Literal(value.get("amount")?.as_str()?.to_string()))
        }
        Some("time") => Some(ClaimTarget::Literal(value.get("time")?.as_str()?.to_string())),
        _ => Some(ClaimTarget::Literal(compact(value))),
    }
}

fn compact(value: &serde_json::Value) -> String {
    match value.as_str() {
        Some(s) => s.to_string(),
        None => value.to_string(),
    }
}

/// Single pass over a dump collecting `id -> English label` for every
/// document that has one, complete or not. Feeds label lookup when
/// reorganizing claim text.
pub fn scan_labels<R: BufRead>(reader: R) -> std::collections::HashMap<String, String> {
    let mut labels = std::collections::HashMap::new();
    for line in reader.lines() {
        let Ok(line) = line else { break };
        let doc_str = trim_document(&line);
        if doc_str.is_empty() {
            continue;
        }
        let Ok(doc) = serde_json::from_str::<serde_json::Value>(doc_str) else {
            continue;
        };
        let Some(id) = doc.get("id").and_then(|i| i.as_str()) else {
            continue;
        };
        if let Some(label) = english_value(&doc, "labels") {
            labels.insert(id.to_string(), label.to_string());
        }
    }
    labels
}

#[cfg(test)]
pub(crate) mod fixtures {
    /// Minimal Wikidata-shaped entity document.
    pub fn entity_doc(
        id: &str,
        label: Option<&str>,
        description: Option<&str>,
        claims: &[(&str, &str)], // (property, entity target)
    ) -> String {
        let mut doc = String::from("{");
        doc.push_str(&format!("\"type\":\"item\",\"id\":\"{id}\""));
        if let Some(l) = label {
            doc.push_str(&format!(
                ",\"labels\":{{\"en\":{{\"language\":\"en\",\"value\":\"{l}\"}}}}"
            ));
        }
        if let Some(d) = description {
            doc.push_str(&format!(
                ",\"descriptions\":{{\"en\":{{\"language\":\"en\",\"value\":\"{d}\"}}}}"
            ));
        }
        doc.push_str(",\"claims\":{");
        let mut by_prop: Vec<(&str, Vec<&str>)> = Vec::new();
        for (p, t) in claims {
            match by_prop.iter_mut().find(|(prop, _)| prop == p) {
                Some((_, targets)) => targets.push(t),
                None => by_prop.push((p, vec![t])),
            }
        }
        for (i, (prop, targets)) in by_prop.iter().enumerate() {
            if i > 0 {
                doc.push(',');
            }
            doc.push_str(&format!("\"{prop}\":["));
            for (j, t) in targets.iter().enumerate() {
                if j > 0 {
                    doc.push(',');
                }
                doc.push_str(&format!(
                    "{{\"mainsnak\":{{\"snaktype\":\"value\",\"property\":\"{prop}\",\
                     \"datavalue\":{{\"value\":{{\"entity-type\":\"item\",\"id\":\"{t}\"}},\
                     \"type\":\"wikibase-entityid\"}},\"datatype\":\"wikibase-item\"}},\
                     \"type\":\"statement\",\"rank\":\"normal\"}}"
                ));
            }
            doc.push(']');
        }
        doc.push_str("}}");
        doc
    }

    pub fn belgium_doc() -> String {
        let mut doc = entity_doc(
            "Q31",
            Some("Belgium"),
            Some("country in Western Europe"),
            &[("P361", "Q27496")],
        );
        // Tack on a literal population claim for the mixed-target path.
        doc.truncate(doc.len() - 2);
        doc.push_str(
            ",\"P1082\":[{\"mainsnak\":{\"snaktype\":\"value\",\"property\":\"P1082\",\
             \"datavalue\":{\"value\":{\"amount\":\"+11584008\",\"unit\":\"1\"},\
             \"type\":\"quantity\"},\"datatype\":\"quantity\"}}]}}",
        );
        doc
    }
}
