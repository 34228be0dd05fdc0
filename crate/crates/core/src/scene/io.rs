//! Dataset manifests and the on-disk map/feature formats.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{pgm, ClassCatalog, ClassId, Dataset, FeatureTable, LabelMap, Scene, SuperpixelPartition, BACKGROUND_NAMES};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub name: String,
    pub classes: Vec<String>,
    pub background: Vec<String>,
    pub scenes: Vec<ManifestScene>,
    #[serde(default)]
    pub splits: BTreeMap<String, Vec<usize>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestScene {
    pub id: String,
    pub category: String,
    pub labelmap: String,
    pub superpixels: String,
    pub features: String,
}

/// Writes through a sibling temp file and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let file_name = path
        .file_name()
        .ok_or_else(|| Error::Invalid(format!("{} has no file name", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp{}", file_name.to_string_lossy(), std::process::id()));
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    result.map_err(|e| {
        let _ = fs::remove_file(&tmp);
        Error::io(path, e)
    })
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_slice(&bytes).map_err(|e| {
        let offset = byte_offset(&bytes, e.line(), e.column());
        Error::parse(path, offset, e.to_string())
    })
}

fn byte_offset(bytes: &[u8], line: usize, column: usize) -> usize {
    if line == 0 {
        return 0;
    }
    let start: usize = bytes
        .split(|&b| b == b'\n')
        .take(line - 1)
        .map(|l| l.len() + 1)
        .sum();
    start + column.saturating_sub(1)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

fn resolve(base: &Path, rel: &str) -> PathBuf {
    let p = Path::new(rel);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

/// Reads a 16-bit PGM of class ids, rejecting ids outside `catalog`.
pub fn read_label_map(path: &Path, catalog: &ClassCatalog) -> Result<LabelMap> {
    read_labels(path, catalog)
}

/// Class catalog of a manifest without loading its scenes.
pub fn load_catalog(manifest_path: &Path) -> Result<ClassCatalog> {
    let manifest: Manifest = read_json(manifest_path)?;
    ClassCatalog::new(manifest.classes).map_err(|e| Error::parse(manifest_path, 0, e.to_string()))
}

fn read_labels(path: &Path, catalog: &ClassCatalog) -> Result<LabelMap> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let raster = pgm::decode(&bytes, path)?;
    let header = bytes.len() - raster.samples.len() * 2;
    if let Some(i) = raster.samples.iter().position(|&s| s as usize >= catalog.len()) {
        return Err(Error::LabelOutOfRange {
            path: path.to_path_buf(),
            offset: header + 2 * i,
            id: raster.samples[i],
            size: catalog.len(),
        });
    }
    LabelMap::new(
        raster.width,
        raster.height,
        raster.samples.into_iter().map(ClassId).collect(),
    )
}

fn read_superpixels(path: &Path) -> Result<SuperpixelPartition> {
    let raster = pgm::read(path)?;
    SuperpixelPartition::new(
        raster.width,
        raster.height,
        raster.samples.into_iter().map(u32::from).collect(),
    )
    .map_err(|e| Error::parse(path, 0, e.to_string()))
}

pub(crate) fn encode_features(features: &FeatureTable) -> Vec<u8> {
    let mut out = String::from("spid");
    for k in 0..features.dim() {
        out.push_str(&format!(",f{k}"));
    }
    out.push('\n');
    for i in 0..features.rows() {
        out.push_str(&i.to_string());
        for v in features.row(i) {
            out.push(',');
            out.push_str(&v.to_string());
        }
        out.push('\n');
    }
    out.into_bytes()
}

pub(crate) fn decode_features(bytes: &[u8], path: &Path) -> Result<FeatureTable> {
    let text = std::str::from_utf8(bytes).map_err(|e| Error::parse(path, e.valid_up_to(), "not UTF-8"))?;
    let mut offset = 0usize;
    let mut lines = text.split_inclusive('\n');
    let header = lines
        .next()
        .ok_or_else(|| Error::parse(path, 0, "malformed header: empty file"))?;
    let cols: Vec<&str> = header.trim_end().split(',').collect();
    if cols.first() != Some(&"spid") || cols.len() < 2 {
        return Err(Error::parse(path, 0, "malformed header: expected spid,f0,..."));
    }
    for (k, c) in cols[1..].iter().enumerate() {
        if *c != format!("f{k}") {
            return Err(Error::parse(path, 0, format!("malformed header: column {c:?}, expected f{k}")));
        }
    }
    let dim = cols.len() - 1;
    offset += header.len();
    let mut values = Vec::new();
    let mut row = 0usize;
    for line in lines {
        let trimmed = line.trim_end();
        if trimmed.is_empty() {
            offset += line.len();
            continue;
        }
        let mut fields = trimmed.split(',');
        let spid: usize = fields
            .next()
            .and_then(|f| f.parse().ok())
            .ok_or_else(|| Error::parse(path, offset, "bad superpixel id"))?;
        if spid != row {
            return Err(Error::parse(path, offset, format!("expected superpixel id {row}, found {spid}")));
        }
        let before = values.len();
        for f in fields {
            let v: f64 = f
                .parse()
                .map_err(|_| Error::parse(path, offset, format!("bad feature value {f:?}")))?;
            values.push(v);
        }
        if values.len() - before != dim {
            return Err(Error::parse(
                path,
                offset,
                format!("dimension mismatch: {} values, expected {dim}", values.len() - before),
            ));
        }
        row += 1;
        offset += line.len();
    }
    FeatureTable::new(dim, values).map_err(|e| Error::parse(path, 0, e.to_string()))
}

fn read_features(path: &Path) -> Result<FeatureTable> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_features(&bytes, path)
}

/// Loads a manifest and every map and feature file it references.
pub fn load_dataset(manifest_path: &Path) -> Result<Dataset> {
    let manifest: Manifest = read_json(manifest_path)?;
    if manifest.background != BACKGROUND_NAMES {
        return Err(Error::parse(
            manifest_path,
            0,
            format!("background must be {BACKGROUND_NAMES:?}, found {:?}", manifest.background),
        ));
    }
    let catalog = ClassCatalog::new(manifest.classes.clone())
        .map_err(|e| Error::parse(manifest_path, 0, e.to_string()))?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let scenes = manifest
        .scenes
        .par_iter()
        .map(|ms| {
            let labels = read_labels(&resolve(base, &ms.labelmap), &catalog)?;
            let sp_path = resolve(base, &ms.superpixels);
            let superpixels = read_superpixels(&sp_path)?;
            let feat_path = resolve(base, &ms.features);
            let features = read_features(&feat_path)?;
            if features.rows() != superpixels.count() {
                return Err(Error::parse(
                    &feat_path,
                    0,
                    format!(
                        "dimension mismatch: {} rows for {} superpixels",
                        features.rows(),
                        superpixels.count()
                    ),
                ));
            }
            Scene::new(ms.id.clone(), ms.category.clone(), labels, superpixels, features)
                .map_err(|e| Error::parse(&sp_path, 0, e.to_string()))
        })
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(manifest.name, catalog, scenes, manifest.splits)
        .map_err(|e| Error::parse(manifest_path, 0, e.to_string()))
}

/// Writes `dataset` under `dir` as `manifest.json` plus `labels/`,
/// `superpixels/` and `features/` files named after scene ids.
pub fn save_dataset(dataset: &Dataset, dir: &Path) -> Result<PathBuf> {
    let scenes = dataset
        .scenes
        .par_iter()
        .map(|s| {
            let entry = ManifestScene {
                id: s.id.clone(),
                category: s.category.clone(),
                labelmap: format!("labels/{}.pgm", s.id),
                superpixels: format!("superpixels/{}.pgm", s.id),
                features: format!("features/{}.csv", s.id),
            };
            let labels: Vec<u16> = s.labels.labels().iter().map(|c| c.0).collect();
            pgm::write(&dir.join(&entry.labelmap), s.width(), s.height(), &labels)?;
            let sp: Vec<u16> = s
                .superpixels
                .assignment()
                .iter()
                .map(|&v| {
                    u16::try_from(v).map_err(|_| Error::Invalid(format!("scene {}: too many superpixels", s.id)))
                })
                .collect::<Result<_>>()?;
            pgm::write(&dir.join(&entry.superpixels), s.width(), s.height(), &sp)?;
            write_atomic(&dir.join(&entry.features), &encode_features(&s.features))?;
            Ok(entry)
        })
        .collect::<Result<Vec<_>>>()?;
    let manifest = Manifest {
        name: dataset.name.clone(),
        classes: dataset.catalog.names().to_vec(),
        background: BACKGROUND_NAMES.iter().map(|s| s.to_string()).collect(),
        scenes,
        splits: dataset.splits.clone(),
    };
    let path = dir.join("manifest.json");
    write_json(&path, &manifest)?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn features_roundtrip_exactly() {
        let t = FeatureTable::new(4, vec![0.1, -2.5e-7, 1.0 / 3.0, 7.0, 0.0, 1e300, -0.0, 0.25]).unwrap();
        let bytes = encode_features(&t);
        assert!(bytes.starts_with(b"spid,f0,f1,f2,f3\n"));
        let back = decode_features(&bytes, Path::new("f.csv")).unwrap();
        assert_eq!(back.values().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                   t.values().iter().map(|v| v.to_bits()).collect::<Vec<_>>());
    }

    #[test]
    fn feature_errors_carry_offsets() {
        let err = decode_features(b"spid,f0,f1,f2,f3\n0,1,2,3,4\n1,1,2,3\n", Path::new("f.csv")).unwrap_err();
        assert!(err.to_string().contains("f.csv: offset 27"), "{err}");
        let err = decode_features(b"id,f0\n", Path::new("g.csv")).unwrap_err();
        assert!(err.to_string().contains("malformed header"), "{err}");
    }

    #[test]
    fn empty_manifest_loads() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("manifest.json");
        let manifest = Manifest {
            name: "empty".into(),
            classes: ["void", "wall", "floor", "ceiling", "bed"].map(String::from).to_vec(),
            background: BACKGROUND_NAMES.map(String::from).to_vec(),
            scenes: vec![],
            splits: BTreeMap::new(),
        };
        write_json(&path, &manifest).unwrap();
        let ds = load_dataset(&path).unwrap();
        assert!(ds.scenes.is_empty());
        assert_eq!(ds.catalog.len(), 5);
    }

    #[test]
    fn missing_manifest_is_io_error() {
        let err = load_dataset(Path::new("/nonexistent/manifest.json")).unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
    }
}
