use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::domain::{AnnotatedNucleus, AnnotationSet, CellType};
use crate::error::{Error, Result};

pub const ANNOTATION_SCHEMA: &str = "nuclei-annotations/1";

#[derive(Deserialize)]
struct RawNucleus {
    x: f64,
    y: f64,
    types: Vec<String>,
    #[serde(default)]
    contour: Option<Vec<(f64, f64)>>,
    #[serde(flatten)]
    extra: BTreeMap<String, Value>,
}

#[derive(Deserialize)]
struct RawDoc {
    schema: String,
    rater: String,
    tile_id: String,
    magnification: u32,
    width: usize,
    height: usize,
    nuclei: Vec<RawNucleus>,
    #[serde(flatten)]
    extra: BTreeMap<String, Value>,
}

#[derive(Serialize)]
struct OutNucleus<'a> {
    x: f64,
    y: f64,
    types: &'a [CellType],
    #[serde(skip_serializing_if = "Option::is_none")]
    contour: Option<&'a Vec<(f64, f64)>>,
}

#[derive(Serialize)]
struct OutDoc<'a> {
    schema: &'static str,
    rater: &'a str,
    tile_id: &'a str,
    magnification: u32,
    width: usize,
    height: usize,
    nuclei: Vec<OutNucleus<'a>>,
}

/// Parsed annotation document and the number of unrecognized fields skipped.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedAnnotations {
    pub set: AnnotationSet,
    pub unknown_fields: usize,
}

pub fn parse_annotations(text: &str) -> Result<ParsedAnnotations> {
    let raw: RawDoc = serde_json::from_str(text)?;
    if raw.schema != ANNOTATION_SCHEMA {
        return Err(Error::invalid(format!(
            "schema {:?}, expected {ANNOTATION_SCHEMA:?}",
            raw.schema
        )));
    }
    let mut unknown = raw.extra.len();
    let mut nuclei = Vec::with_capacity(raw.nuclei.len());
    for (i, n) in raw.nuclei.into_iter().enumerate() {
        unknown += n.extra.len();
        let types = n
            .types
            .iter()
            .enumerate()
            .map(|(j, s)| {
                s.parse::<CellType>().map_err(|_| {
                    Error::invalid(format!("nuclei[{i}].types[{j}]: unknown cell type {s:?}"))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        nuclei.push(AnnotatedNucleus {
            x: n.x,
            y: n.y,
            types,
            contour: n.contour,
        });
    }
    let set = AnnotationSet {
        rater_id: raw.rater,
        tile_id: raw.tile_id,
        width: raw.width,
        height: raw.height,
        magnification: raw.magnification,
        nuclei,
    };
    set.validate()?;
    Ok(ParsedAnnotations {
        set,
        unknown_fields: unknown,
    })
}

pub fn annotations_to_string(set: &AnnotationSet) -> Result<String> {
    let doc = OutDoc {
        schema: ANNOTATION_SCHEMA,
        rater: &set.rater_id,
        tile_id: &set.tile_id,
        magnification: set.magnification,
        width: set.width,
        height: set.height,
        nuclei: set
            .nuclei
            .iter()
            .map(|n| OutNucleus {
                x: n.x,
                y: n.y,
                types: &n.types,
                contour: n.contour.as_ref(),
            })
            .collect(),
    };
    let mut s = serde_json::to_string_pretty(&doc)?;
    s.push('\n');
    Ok(s)
}

pub fn read_annotations(path: &Path) -> Result<AnnotationSet> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let parsed = parse_annotations(&text).map_err(|e| Error::Schema {
        path: path.into(),
        message: e.to_string(),
    })?;
    if parsed.unknown_fields > 0 {
        log::warn!(
            "{}: ignored {} unknown field(s)",
            path.display(),
            parsed.unknown_fields
        );
    }
    Ok(parsed.set)
}

pub fn write_annotations(set: &AnnotationSet, path: &Path) -> Result<()> {
    fs::write(path, annotations_to_string(set)?).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{"schema":"nuclei-annotations/1","rater":"r1","tile_id":"t1",
        "magnification":40,"width":448,"height":448,
        "nuclei":[{"x":10.5,"y":20.0,"types":["Lymphocyte"]}]}"#;

    #[test]
    fn minimal_document() {
        let p = parse_annotations(MINIMAL).unwrap();
        assert_eq!(p.set.nuclei.len(), 1);
        assert_eq!(p.set.nuclei[0].types, vec![CellType::Lymphocyte]);
        assert_eq!(p.unknown_fields, 0);
    }

    #[test]
    fn multilabel_and_unknown_fields() {
        let doc = MINIMAL
            .replace(
                r#"["Lymphocyte"]"#,
                r#"["Lymphocyte","Plasmocyte"],"conf":0.3"#,
            )
            .replace(r#""width""#, r#""scanner":"x","width""#);
        let p = parse_annotations(&doc).unwrap();
        assert_eq!(
            p.set.nuclei[0].types,
            vec![CellType::Lymphocyte, CellType::Plasmocyte]
        );
        assert_eq!(p.unknown_fields, 2);
    }

    #[test]
    fn misspelled_type_names_entry() {
        let doc = MINIMAL.replace("Lymphocyte", "Lymphocite");
        let e = parse_annotations(&doc).unwrap_err().to_string();
        assert!(
            e.contains("nuclei[0].types[0]") && e.contains("Lymphocite"),
            "{e}"
        );
    }

    #[test]
    fn missing_field_and_bad_schema() {
        assert!(parse_annotations(&MINIMAL.replace(r#""rater":"r1","#, "")).is_err());
        assert!(parse_annotations(
            &MINIMAL.replace("nuclei-annotations/1", "nuclei-annotations/2")
        )
        .is_err());
    }

    #[test]
    fn reserialization_is_stable() {
        let p = parse_annotations(MINIMAL).unwrap();
        let s = annotations_to_string(&p.set).unwrap();
        let again = annotations_to_string(&parse_annotations(&s).unwrap().set).unwrap();
        assert_eq!(s, again);
    }
}
