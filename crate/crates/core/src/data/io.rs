//! Dataset directory layout:
//!
//! ```text
//! samples/NNNN.{stt|txt|csv}   one payload per example
//! labels.csv                   file,label
//! slots.csv                    file,time_slot (graph only)
//! manifest.json                modality, task, spec, sha256 per file
//! ```
//!
//! Labels are a class index, `;`-separated reals, or raw text. Tables are a
//! one-row CSV with a `colN` header; trajectories are `agent_id,t,x,y`.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Dataset, SyntheticTaskSpec, TaskKind};
use crate::error::{Error, Result};
use crate::fsio;
use crate::model::{Example, Target};
use crate::modality::{Modality, ModalitySample};
use crate::tensor::{stt, Tensor};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub modality: Modality,
    pub task: TaskKind,
    pub spec: Option<SyntheticTaskSpec>,
    /// Relative path to lowercase hex sha256.
    pub files: BTreeMap<String, String>,
}

fn csv_writer() -> csv::Writer<Vec<u8>> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new())
}

fn finish(w: csv::Writer<Vec<u8>>) -> Result<Vec<u8>> {
    w.into_inner().map_err(|e| Error::contract(e.to_string()))
}

fn extension(m: Modality) -> &'static str {
    match m {
        Modality::Text | Modality::Code => "txt",
        Modality::Table | Modality::Trajectory => "csv",
        _ => "stt",
    }
}

fn encode_sample(s: &ModalitySample) -> Result<Vec<u8>> {
    match s {
        ModalitySample::Text(x) | ModalitySample::Code(x) => Ok(x.as_bytes().to_vec()),
        ModalitySample::Table(x) => {
            let mut w = csv_writer();
            w.write_record((0..x.numel()).map(|i| format!("col{i}")))?;
            w.write_record(x.data().iter().map(|v| v.to_string()))?;
            finish(w)
        }
        ModalitySample::Trajectory(x) => {
            let mut w = csv_writer();
            w.write_record(["agent_id", "t", "x", "y"])?;
            for (i, p) in x.data().chunks(2).enumerate() {
                w.write_record(["0".to_string(), i.to_string(), p[0].to_string(), p[1].to_string()])?;
            }
            finish(w)
        }
        ModalitySample::Graph { features: x, .. }
        | ModalitySample::Rgb(x)
        | ModalitySample::Msi(x)
        | ModalitySample::Hsi(x)
        | ModalitySample::Sar(x)
        | ModalitySample::Infrared(x)
        | ModalitySample::Oblique(x)
        | ModalitySample::Video(x)
        | ModalitySample::PointCloud(x) => stt::encode(x),
    }
}

fn label_text(t: &Target) -> String {
    match t {
        Target::Class(c) => c.to_string(),
        Target::Values(v) => v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(";"),
        Target::Text(s) => s.clone(),
    }
}

/// Writes the dataset; the manifest goes last so a complete manifest implies
/// complete payloads.
pub fn write_dataset(dir: &Path, data: &Dataset) -> Result<DatasetManifest> {
    data.validate()?;
    let mut files = BTreeMap::new();
    let mut labels = csv_writer();
    labels.write_record(["file", "label"])?;
    let mut slots = csv_writer();
    slots.write_record(["file", "time_slot"])?;
    let ext = extension(data.modality);
    for (i, ex) in data.examples.iter().enumerate() {
        let rel = format!("samples/{i:04}.{ext}");
        let bytes = encode_sample(&ex.sample)?;
        fsio::write_atomic(&dir.join(&rel), &bytes)?;
        files.insert(rel.clone(), fsio::sha256_hex(&bytes));
        labels.write_record([rel.as_str(), &label_text(&ex.target)])?;
        if let ModalitySample::Graph { time_slot, .. } = ex.sample {
            slots.write_record([rel.as_str(), &time_slot.to_string()])?;
        }
    }
    let mut side = vec![("labels.csv", finish(labels)?)];
    if data.modality == Modality::Graph {
        side.push(("slots.csv", finish(slots)?));
    }
    for (name, bytes) in side {
        fsio::write_atomic(&dir.join(name), &bytes)?;
        files.insert(name.to_string(), fsio::sha256_hex(&bytes));
    }
    let manifest = DatasetManifest {
        modality: data.modality,
        task: data.task,
        spec: data.spec.clone(),
        files,
    };
    let mut json = serde_json::to_vec_pretty(&manifest)?;
    json.push(b'\n');
    fsio::write_atomic(&dir.join("manifest.json"), &json)?;
    Ok(manifest)
}

/// Reads the manifest and checks every listed file against its hash.
pub fn verify_manifest(dir: &Path) -> Result<DatasetManifest> {
    let path = dir.join("manifest.json");
    let manifest: DatasetManifest =
        serde_json::from_slice(&fsio::read(&path)?).map_err(|e| Error::format(&path, e.to_string()))?;
    for (rel, want) in &manifest.files {
        let p = dir.join(rel);
        let got = fsio::sha256_hex(&fsio::read(&p)?);
        if &got != want {
            return Err(Error::format(p, format!("sha256 {got} does not match manifest {want}")));
        }
    }
    Ok(manifest)
}

fn read_records(path: &Path, header: &[&str]) -> Result<Vec<csv::StringRecord>> {
    let bytes = fsio::read(path)?;
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(bytes.as_slice());
    let got = r.headers().map_err(|e| Error::format(path, e.to_string()))?.clone();
    if !header.is_empty() && got.iter().ne(header.iter().copied()) {
        return Err(Error::format(path, format!("expected header {header:?}, got {got:?}")));
    }
    r.records().map(|x| x.map_err(|e| Error::format(path, e.to_string()))).collect()
}

fn parse_f32(path: &Path, s: &str) -> Result<f32> {
    s.trim()
        .parse()
        .map_err(|_| Error::format(path, format!("`{s}` is not a number")))
}

fn decode_sample(m: Modality, path: &Path, slot: Option<usize>) -> Result<ModalitySample> {
    let tensor = || stt::read::<f32>(path);
    Ok(match m {
        Modality::Text => ModalitySample::Text(fsio::read_string(path)?),
        Modality::Code => ModalitySample::Code(fsio::read_string(path)?),
        Modality::Table => {
            let recs = read_records(path, &[])?;
            if recs.len() != 1 {
                return Err(Error::format(path, "table sample must hold exactly one row"));
            }
            let row = recs[0].iter().map(|s| parse_f32(path, s)).collect::<Result<Vec<_>>>()?;
            ModalitySample::Table(Tensor::new([row.len()], row)?)
        }
        Modality::Trajectory => {
            let recs = read_records(path, &["agent_id", "t", "x", "y"])?;
            let mut pts = Vec::with_capacity(recs.len() * 2);
            for (i, r) in recs.iter().enumerate() {
                if r.get(1).map(str::trim) != Some(i.to_string().as_str()) {
                    return Err(Error::format(path, format!("row {i} must have t = {i}")));
                }
                pts.push(parse_f32(path, &r[2])?);
                pts.push(parse_f32(path, &r[3])?);
            }
            ModalitySample::Trajectory(Tensor::new([recs.len(), 2], pts)?)
        }
        Modality::Graph => ModalitySample::Graph {
            features: tensor()?,
            time_slot: slot.ok_or_else(|| Error::format(path, "no time slot in slots.csv"))?,
        },
        Modality::Rgb => ModalitySample::Rgb(tensor()?),
        Modality::Msi => ModalitySample::Msi(tensor()?),
        Modality::Hsi => ModalitySample::Hsi(tensor()?),
        Modality::Sar => ModalitySample::Sar(tensor()?),
        Modality::Infrared => ModalitySample::Infrared(tensor()?),
        Modality::Oblique => ModalitySample::Oblique(tensor()?),
        Modality::Video => ModalitySample::Video(tensor()?),
        Modality::PointCloud => ModalitySample::PointCloud(tensor()?),
    })
}

fn parse_label(task: TaskKind, path: &Path, s: &str) -> Result<Target> {
    let bad = || Error::format(path, format!("bad label `{s}`"));
    Ok(match task {
        TaskKind::Classify { .. } => Target::Class(s.trim().parse().map_err(|_| bad())?),
        TaskKind::TextGenerate => Target::Text(s.to_string()),
        _ => Target::Values(
            s.split(';')
                .map(|x| x.trim().parse::<f64>().map_err(|_| bad()))
                .collect::<Result<_>>()?,
        ),
    })
}

/// Loads a dataset after verifying the manifest hashes.
pub fn read_dataset(dir: &Path) -> Result<Dataset> {
    let manifest = verify_manifest(dir)?;
    let labels_path = dir.join("labels.csv");
    let labels = read_records(&labels_path, &["file", "label"])?;
    let mut slots = BTreeMap::new();
    if manifest.modality == Modality::Graph {
        let p = dir.join("slots.csv");
        for r in read_records(&p, &["file", "time_slot"])? {
            let slot: usize = r[1].trim().parse().map_err(|_| Error::format(&p, "bad time slot"))?;
            slots.insert(r[0].to_string(), slot);
        }
    }
    let mut examples = Vec::with_capacity(labels.len());
    for r in &labels {
        let rel = &r[0];
        if !manifest.files.contains_key(rel) {
            return Err(Error::format(&labels_path, format!("`{rel}` is not in the manifest")));
        }
        let sample = decode_sample(manifest.modality, &dir.join(rel), slots.get(rel).copied())?;
        examples.push(Example {
            sample,
            target: parse_label(manifest.task, &labels_path, &r[1])?,
        });
    }
    let data = Dataset {
        modality: manifest.modality,
        task: manifest.task,
        spec: manifest.spec,
        examples,
    };
    data.validate()?;
    Ok(data)
}
