//! Line-oriented JSON dataset files.
//!
//! The first line is a schema header `{"schema": [...]}`; every following
//! line is one annotated scene:
//!
//! ```text
//! {"world":[{"color":"green","shape":"cube"}],"target":[0],"forms":["(color green)"]}
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{AnnotatedScene, AttributeSchema, Object, Result, Scene, SceneError, World};
use crate::logic;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    schema: AttributeSchema,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Record {
    world: Vec<BTreeMap<String, String>>,
    target: Vec<usize>,
    forms: Vec<String>,
}

fn line_err(line: usize, message: impl Into<String>) -> SceneError {
    SceneError::Dataset {
        line,
        message: message.into(),
    }
}

fn is_header(text: &str) -> bool {
    serde_json::from_str::<serde_json::Value>(text)
        .map(|v| v.get("schema").is_some())
        .unwrap_or(false)
}

fn decode_record(text: &str, line: usize, schema: &AttributeSchema) -> Result<AnnotatedScene> {
    let rec: Record =
        serde_json::from_str(text).map_err(|e| line_err(line, format!("malformed record: {e}")))?;
    let mut objects = Vec::with_capacity(rec.world.len());
    for map in &rec.world {
        if map.len() != schema.attributes().len() {
            return Err(line_err(
                line,
                format!("object has {} attributes, schema has {}", map.len(), schema.attributes().len()),
            ));
        }
        let mut values = Vec::with_capacity(map.len());
        for (i, attr) in schema.attributes().iter().enumerate() {
            let value = map
                .get(&attr.name)
                .ok_or_else(|| line_err(line, format!("object lacks attribute {:?}", attr.name)))?;
            let idx = schema.value_index(i, value).ok_or_else(|| {
                line_err(
                    line,
                    format!("schema error: unknown value {value:?} for attribute {:?}", attr.name),
                )
            })?;
            values.push(idx);
        }
        objects.push(Object { values });
    }
    let world = World { objects };
    if world.is_empty() || world.len() > super::MAX_WORLD_SIZE {
        return Err(line_err(line, format!("world has {} objects", world.len())));
    }
    let mut target = vec![false; world.len()];
    for &i in &rec.target {
        if i >= world.len() {
            return Err(line_err(line, format!("target index {i} out of range")));
        }
        if target[i] {
            return Err(line_err(line, format!("duplicate target index {i}")));
        }
        target[i] = true;
    }
    let scene = Scene::new(world, target).map_err(|e| line_err(line, e.to_string()))?;
    let forms = rec
        .forms
        .iter()
        .map(|f| logic::parse(f, schema).map_err(|e| line_err(line, e.to_string())))
        .collect::<Result<Vec<_>>>()?;
    AnnotatedScene::new(scene, forms, schema).map_err(|e| line_err(line, e.to_string()))
}

fn decode(
    content: &str,
    schema: Option<&AttributeSchema>,
) -> Result<(Option<AttributeSchema>, Vec<AnnotatedScene>)> {
    let mut header: Option<AttributeSchema> = None;
    let mut out = Vec::new();
    for (i, text) in content.lines().enumerate() {
        let line = i + 1;
        if text.trim().is_empty() {
            continue;
        }
        if header.is_none() && out.is_empty() && is_header(text) {
            let h: Header = serde_json::from_str(text)
                .map_err(|e| line_err(line, format!("malformed schema header: {e}")))?;
            if let Some(expected) = schema {
                if *expected != h.schema {
                    return Err(line_err(line, "schema error: header does not match schema"));
                }
            }
            header = Some(h.schema);
            continue;
        }
        let active = schema
            .or(header.as_ref())
            .ok_or_else(|| line_err(line, "data line before schema header"))?;
        out.push(decode_record(text, line, active)?);
    }
    Ok((header, out))
}

/// Reads a dataset against a known schema. A header, when present, has to
/// match `schema`.
pub fn ingest_dataset(path: &Path, schema: &AttributeSchema) -> Result<Vec<AnnotatedScene>> {
    let content = fs::read_to_string(path)?;
    Ok(decode(&content, Some(schema))?.1)
}

/// Reads a dataset and the schema from its header.
pub fn read_dataset(path: &Path) -> Result<(AttributeSchema, Vec<AnnotatedScene>)> {
    let content = fs::read_to_string(path)?;
    match decode(&content, None)? {
        (Some(schema), data) => Ok((schema, data)),
        (None, data) if data.is_empty() => Err(line_err(1, "missing schema header")),
        (None, _) => unreachable!("data lines require a header"),
    }
}

pub(crate) fn encode(data: &[AnnotatedScene], schema: &AttributeSchema) -> Result<String> {
    if data.is_empty() {
        return Ok(String::new());
    }
    let mut out = serde_json::to_string(&Header {
        schema: schema.clone(),
    })
    .expect("header serializes");
    out.push('\n');
    for item in data {
        let world = item
            .scene
            .world
            .objects
            .iter()
            .map(|o| {
                schema.check_object(o)?;
                Ok(schema
                    .attributes()
                    .iter()
                    .zip(&o.values)
                    .map(|(a, &v)| (a.name.clone(), a.values[v].clone()))
                    .collect())
            })
            .collect::<Result<Vec<_>>>()?;
        let rec = Record {
            world,
            target: item
                .scene
                .target
                .iter()
                .enumerate()
                .filter_map(|(i, &t)| t.then_some(i))
                .collect(),
            forms: item.forms.iter().map(|f| f.to_string()).collect(),
        };
        out.push_str(&serde_json::to_string(&rec).expect("record serializes"));
        out.push('\n');
    }
    Ok(out)
}

/// Writes `data` with a schema header. An empty dataset produces an empty file.
pub fn serialize_dataset(data: &[AnnotatedScene], schema: &AttributeSchema, path: &Path) -> Result<()> {
    let text = encode(data, schema)?;
    let mut file = fs::File::create(path)?;
    file.write_all(text.as_bytes())?;
    Ok(())
}
