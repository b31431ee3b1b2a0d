//! Ground-truth and prediction JSON files.
//!
//! Ground truth uses the ActivityNet-Captions layout
//! `{id: {"duration", "timestamps": [[s, e], ...], "sentences": [...]}}`;
//! predictions are `{id: [{"timestamp": [s, e], "sentence": ...}, ...]}`.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use densecap_core::eval::{GroundTruth, Predictions, Segment, VideoAnnotations};
use densecap_core::temporal::Interval;
use serde::Serialize;
use serde_json::{Map, Value};

use crate::error::{Error, Result};

/// Writes `bytes` to a temporary file next to `path` and renames it over
/// `path`, so readers never see a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    tmp.as_file().sync_all().map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

pub(crate) fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub(crate) fn parse_json(path: &Path, text: &str) -> Result<Value> {
    serde_json::from_str(text).map_err(|e| Error::json(path, &e))
}

pub(crate) fn to_json_bytes<T: Serialize>(value: &T) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(value).expect("in-memory JSON serialization");
    out.push(b'\n');
    out
}

fn object<'a>(path: &Path, field: &str, v: &'a Value) -> Result<&'a Map<String, Value>> {
    v.as_object().ok_or_else(|| Error::field(path, field, "expected an object"))
}

fn array<'a>(path: &Path, field: &str, v: &'a Value) -> Result<&'a Vec<Value>> {
    v.as_array().ok_or_else(|| Error::field(path, field, "expected an array"))
}

fn number(path: &Path, field: &str, v: &Value) -> Result<f64> {
    v.as_f64()
        .filter(|x| x.is_finite())
        .ok_or_else(|| Error::field(path, field, "expected a finite number"))
}

fn string(path: &Path, field: &str, v: &Value) -> Result<String> {
    v.as_str()
        .map(str::to_string)
        .ok_or_else(|| Error::field(path, field, "expected a string"))
}

fn interval(path: &Path, field: &str, v: &Value) -> Result<Interval> {
    let pair = array(path, field, v)?;
    if pair.len() != 2 {
        return Err(Error::field(path, field, format!("expected [start, end], found {} values", pair.len())));
    }
    let start = number(path, &format!("{field}[0]"), &pair[0])?;
    let end = number(path, &format!("{field}[1]"), &pair[1])?;
    if start < 0.0 || start > end {
        return Err(Error::field(path, field, format!("invalid interval [{start}, {end}]")));
    }
    Ok(Interval { start, end })
}

/// Parses ground truth from JSON text; `origin` names the source in errors.
pub fn parse_ground_truth(origin: &Path, text: &str) -> Result<GroundTruth> {
    let root = parse_json(origin, text)?;
    let mut out = GroundTruth::new();
    for (id, entry) in object(origin, "<root>", &root)? {
        let obj = object(origin, id, entry)?;
        let get = |key: &str| {
            obj.get(key)
                .ok_or_else(|| Error::field(origin, format!("{id}.{key}"), "missing"))
        };
        let duration = number(origin, &format!("{id}.duration"), get("duration")?)?;
        let stamps = array(origin, &format!("{id}.timestamps"), get("timestamps")?)?;
        let sentences = array(origin, &format!("{id}.sentences"), get("sentences")?)?;
        if stamps.len() != sentences.len() {
            return Err(Error::field(
                origin,
                format!("{id}.sentences"),
                format!("{} sentences for {} timestamps", sentences.len(), stamps.len()),
            ));
        }
        let mut segments = Vec::with_capacity(stamps.len());
        for (k, (ts, s)) in stamps.iter().zip(sentences).enumerate() {
            let timestamp = interval(origin, &format!("{id}.timestamps[{k}]"), ts)?;
            if timestamp.end > duration {
                return Err(Error::field(
                    origin,
                    format!("{id}.timestamps[{k}]"),
                    format!("end {} exceeds duration {duration}", timestamp.end),
                ));
            }
            segments.push(Segment {
                timestamp,
                sentence: string(origin, &format!("{id}.sentences[{k}]"), s)?,
            });
        }
        let video = VideoAnnotations { duration, segments };
        video.validate(id).map_err(|e| Error::field(origin, id.as_str(), e.to_string()))?;
        out.insert(id.clone(), video);
    }
    Ok(out)
}

pub fn load_ground_truth(path: &Path) -> Result<GroundTruth> {
    parse_ground_truth(path, &read_text(path)?)
}

#[derive(Serialize)]
struct GroundTruthEntry<'a> {
    duration: f64,
    timestamps: Vec<[f64; 2]>,
    sentences: Vec<&'a str>,
}

pub fn ground_truth_to_json(gt: &GroundTruth) -> Vec<u8> {
    let map: BTreeMap<&str, GroundTruthEntry<'_>> = gt
        .iter()
        .map(|(id, v)| {
            let entry = GroundTruthEntry {
                duration: v.duration,
                timestamps: v.segments.iter().map(|s| [s.timestamp.start, s.timestamp.end]).collect(),
                sentences: v.segments.iter().map(|s| s.sentence.as_str()).collect(),
            };
            (id.as_str(), entry)
        })
        .collect();
    to_json_bytes(&map)
}

pub fn write_ground_truth(path: &Path, gt: &GroundTruth) -> Result<()> {
    write_atomic(path, &ground_truth_to_json(gt))
}

/// Parses a predictions file; `origin` names the source in errors.
pub fn parse_predictions(origin: &Path, text: &str) -> Result<Predictions> {
    let root = parse_json(origin, text)?;
    let mut out = Predictions::new();
    for (id, entry) in object(origin, "<root>", &root)? {
        let items = array(origin, id, entry)?;
        let mut segments = Vec::with_capacity(items.len());
        for (k, item) in items.iter().enumerate() {
            let field = format!("{id}[{k}]");
            let obj = object(origin, &field, item)?;
            let ts = obj
                .get("timestamp")
                .ok_or_else(|| Error::field(origin, format!("{field}.timestamp"), "missing"))?;
            let sentence = obj
                .get("sentence")
                .ok_or_else(|| Error::field(origin, format!("{field}.sentence"), "missing"))?;
            segments.push(Segment {
                timestamp: interval(origin, &format!("{field}.timestamp"), ts)?,
                sentence: string(origin, &format!("{field}.sentence"), sentence)?,
            });
        }
        out.insert(id.clone(), segments);
    }
    Ok(out)
}

pub fn load_predictions(path: &Path) -> Result<Predictions> {
    parse_predictions(path, &read_text(path)?)
}

#[derive(Serialize)]
struct PredictionEntry<'a> {
    timestamp: [f64; 2],
    sentence: &'a str,
}

pub fn predictions_to_json(preds: &Predictions) -> Vec<u8> {
    let map: BTreeMap<&str, Vec<PredictionEntry<'_>>> = preds
        .iter()
        .map(|(id, segs)| {
            let entries = segs
                .iter()
                .map(|s| PredictionEntry {
                    timestamp: [s.timestamp.start, s.timestamp.end],
                    sentence: &s.sentence,
                })
                .collect();
            (id.as_str(), entries)
        })
        .collect();
    to_json_bytes(&map)
}

pub fn write_predictions(path: &Path, preds: &Predictions) -> Result<()> {
    write_atomic(path, &predictions_to_json(preds))
}

/// Loads predictions produced by a pipeline outside this crate (shot
/// detection plus an image captioner, for example). An empty file is an
/// empty prediction set.
pub fn ingest_external_predictions(path: &Path) -> Result<Predictions> {
    let text = read_text(path)?;
    if text.trim().is_empty() {
        return Ok(Predictions::new());
    }
    parse_predictions(path, &text)
}

/// Externally produced captions per video, `{id: [sentence, ...]}`, as
/// consumed by the caption-then-match baseline.
pub fn load_captions(path: &Path) -> Result<BTreeMap<String, Vec<String>>> {
    let root = parse_json(path, &read_text(path)?)?;
    let mut out = BTreeMap::new();
    for (id, entry) in object(path, "<root>", &root)? {
        let list = array(path, id, entry)?
            .iter()
            .enumerate()
            .map(|(k, s)| string(path, &format!("{id}[{k}]"), s))
            .collect::<Result<Vec<_>>>()?;
        out.insert(id.clone(), list);
    }
    Ok(out)
}
