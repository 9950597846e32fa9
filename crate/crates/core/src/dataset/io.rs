//! `<root>/images/*.ppm` plus `<root>/manifest.jsonl`.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{BBox, ImageSample, Label};
use crate::error::{Error, Result};
use crate::image::Image;

pub const MANIFEST_FILE: &str = "manifest.jsonl";
const IMAGE_DIR: &str = "images";

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestEntry {
    file: String,
    label: Label,
    domain: String,
    bbox: Option<BBox>,
}

/// Binary PPM (P6, maxval 255).
pub fn write_ppm(path: &Path, image: &Image) -> Result<()> {
    if image.channels() != 3 {
        return Err(Error::Image {
            path: path.to_path_buf(),
            message: format!("PPM needs 3 channels, image has {}", image.channels()),
        });
    }
    let mut bytes = format!("P6\n{} {}\n255\n", image.width(), image.height()).into_bytes();
    bytes.extend(image.to_bytes());
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_ppm(path: &Path) -> Result<Image> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let bad = |message: &str| Error::Image {
        path: path.to_path_buf(),
        message: message.to_string(),
    };
    let mut pos = 0;
    let mut token = || -> Option<String> {
        loop {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
                continue;
            }
            break;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        (pos > start).then(|| String::from_utf8_lossy(&bytes[start..pos]).into_owned())
    };
    if token().as_deref() != Some("P6") {
        return Err(bad("not a binary PPM (missing P6 magic)"));
    }
    let mut number = |what: &str| -> Result<usize> {
        token()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| bad(&format!("bad {what}")))
    };
    let width = number("width")?;
    let height = number("height")?;
    let maxval = number("maxval")?;
    if maxval != 255 {
        return Err(bad(&format!("unsupported maxval {maxval}")));
    }
    if width == 0 || height == 0 {
        return Err(bad("zero-sized image"));
    }
    // exactly one whitespace byte separates the header from the raster
    let data = bytes
        .get(pos + 1..)
        .ok_or_else(|| bad("truncated header"))?;
    if data.len() != width * height * 3 {
        return Err(bad(&format!(
            "expected {} raster bytes, found {}",
            width * height * 3,
            data.len()
        )));
    }
    Image::from_bytes(3, height, width, data)
}

/// Writes every sample as `images/<source_id>.ppm` and one manifest line per
/// sample, in order.
pub fn save_dataset(dir: &Path, samples: &[ImageSample]) -> Result<()> {
    let images = dir.join(IMAGE_DIR);
    fs::create_dir_all(&images).map_err(|e| Error::io(&images, e))?;
    let manifest_path = dir.join(MANIFEST_FILE);
    let file = fs::File::create(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
    let mut manifest = BufWriter::new(file);
    for s in samples {
        if s.source_id.is_empty()
            || !s
                .source_id
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.'))
        {
            return Err(Error::invalid(format!(
                "source id `{}` is not a valid file stem",
                s.source_id
            )));
        }
        let file = format!("{IMAGE_DIR}/{}.ppm", s.source_id);
        write_ppm(&dir.join(&file), &s.image)?;
        let entry = ManifestEntry {
            file,
            label: s.label,
            domain: s.domain.clone(),
            bbox: s.bbox,
        };
        let line = serde_json::to_string(&entry).expect("manifest entries serialize");
        writeln!(manifest, "{line}").map_err(|e| Error::io(&manifest_path, e))?;
    }
    manifest.flush().map_err(|e| Error::io(&manifest_path, e))
}

/// Loads the samples listed in the manifest. A directory without a manifest
/// is an empty dataset.
pub fn load_dataset(dir: &Path) -> Result<Vec<ImageSample>> {
    if !dir.is_dir() {
        return Err(Error::io(
            dir,
            std::io::Error::new(std::io::ErrorKind::NotFound, "dataset directory not found"),
        ));
    }
    let manifest_path = dir.join(MANIFEST_FILE);
    if !manifest_path.exists() {
        return Ok(Vec::new());
    }
    let text = fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
    let mut samples = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let manifest_error = |message: String| Error::Manifest {
            path: manifest_path.clone(),
            line: i + 1,
            message,
        };
        let entry: ManifestEntry =
            serde_json::from_str(line).map_err(|e| manifest_error(e.to_string()))?;
        let path = dir.join(&entry.file);
        if !path.is_file() {
            return Err(manifest_error(format!(
                "image file `{}` does not exist",
                entry.file
            )));
        }
        let source_id = Path::new(&entry.file)
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        samples.push(ImageSample {
            image: read_ppm(&path)?,
            label: entry.label,
            domain: entry.domain,
            source_id,
            bbox: entry.bbox,
        });
    }
    Ok(samples)
}
