//! On-disk scene container: a TOML manifest next to three raw little-endian
//! payloads.
//!
//! ```text
//! <dir>/manifest.toml
//! <dir>/spectral.f32   band-sequential, row-major
//! <dir>/active.f32     same layout
//! <dir>/labels.u16     row-major, `nodata` marks unlabeled pixels
//! ```

use std::fs;
use std::path::Path;

use s2fin_core::data::Scene;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.toml";
pub const SPECTRAL_FILE: &str = "spectral.f32";
pub const ACTIVE_FILE: &str = "active.f32";
pub const LABELS_FILE: &str = "labels.u16";

const KNOWN_KEYS: [&str; 7] = [
    "height",
    "width",
    "spectral_bands",
    "active_channels",
    "class_count",
    "class_names",
    "nodata",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub height: usize,
    pub width: usize,
    pub spectral_bands: usize,
    pub active_channels: usize,
    pub class_count: usize,
    #[serde(default)]
    pub class_names: Vec<String>,
    #[serde(default)]
    pub nodata: u16,
}

/// A scene plus the metadata that only matters on disk.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneContainer {
    /// In memory, unlabeled pixels always carry label 0.
    pub scene: Scene,
    pub class_names: Vec<String>,
    pub nodata: u16,
}

impl SceneContainer {
    pub fn new(scene: Scene) -> Self {
        let class_names = (1..=scene.class_count).map(|k| format!("class{k}")).collect();
        Self { scene, class_names, nodata: 0 }
    }

    pub fn manifest(&self) -> Manifest {
        let s = &self.scene;
        Manifest {
            height: s.height,
            width: s.width,
            spectral_bands: s.spectral_bands,
            active_channels: s.active_channels,
            class_count: s.class_count,
            class_names: self.class_names.clone(),
            nodata: self.nodata,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.scene
            .validate()
            .map_err(|e| Error::format("scene", e.to_string()))?;
        check_names(&self.class_names, self.scene.class_count)?;
        check_nodata(self.nodata, self.scene.class_count)
    }
}

fn check_names(names: &[String], classes: usize) -> Result<()> {
    if !names.is_empty() && names.len() != classes {
        return Err(Error::format(
            MANIFEST_FILE,
            format!("{} class names for {classes} classes", names.len()),
        ));
    }
    Ok(())
}

fn check_nodata(nodata: u16, classes: usize) -> Result<()> {
    if nodata != 0 && (nodata as usize) <= classes {
        return Err(Error::format(
            MANIFEST_FILE,
            format!("nodata code {nodata} collides with a class label"),
        ));
    }
    Ok(())
}

/// Parses a manifest, returning it with the list of unrecognized keys.
pub fn parse_manifest(text: &str) -> Result<(Manifest, Vec<String>)> {
    let table: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::format(MANIFEST_FILE, e.message()))?;
    let unknown = table
        .keys()
        .filter(|k| !KNOWN_KEYS.contains(&k.as_str()))
        .cloned()
        .collect();
    let manifest = Manifest::deserialize(table).map_err(|e| Error::format(MANIFEST_FILE, e.message()))?;
    Ok((manifest, unknown))
}

fn read_payload(dir: &Path, name: &str, expected: u64) -> Result<Vec<u8>> {
    let path = dir.join(name);
    let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
    if bytes.len() as u64 != expected {
        return Err(Error::PayloadSize {
            file: name.into(),
            expected,
            actual: bytes.len() as u64,
        });
    }
    Ok(bytes)
}

fn f32s(bytes: &[u8]) -> Vec<f32> {
    bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect()
}

/// Reads a container, returning warnings (unknown manifest keys) separately.
/// Nothing is returned unless every payload is complete and consistent.
pub fn read_scene_with_warnings(dir: &Path) -> Result<(SceneContainer, Vec<String>)> {
    let manifest_path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
    let (m, unknown) = parse_manifest(&text)?;
    let warnings = unknown
        .into_iter()
        .map(|k| format!("{MANIFEST_FILE}: ignoring unknown key `{k}`"))
        .collect();
    check_names(&m.class_names, m.class_count)?;
    check_nodata(m.nodata, m.class_count)?;

    let px = (m.height as u64) * (m.width as u64);
    let spectral = read_payload(dir, SPECTRAL_FILE, 4 * m.spectral_bands as u64 * px)?;
    let active = read_payload(dir, ACTIVE_FILE, 4 * m.active_channels as u64 * px)?;
    let labels = read_payload(dir, LABELS_FILE, 2 * px)?;
    let labels: Vec<u16> = labels
        .chunks_exact(2)
        .map(|c| {
            let l = u16::from_le_bytes([c[0], c[1]]);
            if l == m.nodata {
                0
            } else {
                l
            }
        })
        .collect();

    let scene = Scene {
        height: m.height,
        width: m.width,
        spectral_bands: m.spectral_bands,
        active_channels: m.active_channels,
        class_count: m.class_count,
        spectral: f32s(&spectral),
        active: f32s(&active),
        labels,
    };
    scene.validate().map_err(|e| Error::format("scene", e.to_string()))?;
    let class_names = if m.class_names.is_empty() {
        SceneContainer::new(scene.clone()).class_names
    } else {
        m.class_names
    };
    Ok((
        SceneContainer {
            scene,
            class_names,
            nodata: m.nodata,
        },
        warnings,
    ))
}

/// Reads a container and logs any warnings.
pub fn read_scene(dir: &Path) -> Result<SceneContainer> {
    let (container, warnings) = read_scene_with_warnings(dir)?;
    for w in warnings {
        log::warn!("{w}");
    }
    Ok(container)
}

pub fn write_scene(container: &SceneContainer, dir: &Path) -> Result<()> {
    container.validate()?;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let manifest = toml::to_string(&container.manifest()).map_err(|e| Error::format(MANIFEST_FILE, e.to_string()))?;
    let write = |name: &str, bytes: &[u8]| {
        let path = dir.join(name);
        fs::write(&path, bytes).map_err(|e| Error::io(&path, e))
    };
    let s = &container.scene;
    write(MANIFEST_FILE, manifest.as_bytes())?;
    write(SPECTRAL_FILE, &s.spectral.iter().flat_map(|v| v.to_le_bytes()).collect::<Vec<_>>())?;
    write(ACTIVE_FILE, &s.active.iter().flat_map(|v| v.to_le_bytes()).collect::<Vec<_>>())?;
    let labels: Vec<u8> = s
        .labels
        .iter()
        .flat_map(|&l| if l == 0 { container.nodata } else { l }.to_le_bytes())
        .collect();
    write(LABELS_FILE, &labels)
}
