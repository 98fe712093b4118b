use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::maskops::BinaryMask;
use crate::segmenters::Image;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub image: PathBuf,
    pub mask: PathBuf,
    pub id: String,
}

/// A dataset manifest. Entries are decoded on demand; relative paths are
/// resolved against the manifest's directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub name: String,
    pub entries: Vec<ManifestEntry>,
    #[serde(skip)]
    pub root: PathBuf,
}

/// One decoded image / ground-truth pair.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub id: String,
    pub image: Image,
    pub gt: BinaryMask,
}

pub fn load_dataset(path: &Path) -> Result<DatasetManifest> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut manifest: DatasetManifest = serde_json::from_str(&text)?;
    manifest.root = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let mut seen = std::collections::HashSet::new();
    for e in &manifest.entries {
        if !seen.insert(e.id.as_str()) {
            return Err(Error::Config(format!("duplicate entry id {:?}", e.id)));
        }
    }
    Ok(manifest)
}

impl DatasetManifest {
    fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.root.join(p)
        }
    }

    pub fn find(&self, id: &str) -> Option<usize> {
        self.entries.iter().position(|e| e.id == id)
    }

    pub fn load_entry(&self, index: usize) -> Result<Sample> {
        let entry = &self.entries[index];
        let image = load_image_png(&self.resolve(&entry.image))?;
        let gt = load_mask_png(&self.resolve(&entry.mask))?;
        if image.dims() != gt.dims() {
            return Err(Error::DimensionMismatch {
                expected: image.dims(),
                found: gt.dims(),
            });
        }
        Ok(Sample {
            id: entry.id.clone(),
            image,
            gt,
        })
    }

    /// Decodes every entry, collecting per-entry errors instead of failing.
    pub fn load_all(&self) -> (Vec<Sample>, Vec<(String, Error)>) {
        let mut ok = Vec::new();
        let mut failed = Vec::new();
        for (i, e) in self.entries.iter().enumerate() {
            match self.load_entry(i) {
                Ok(s) => ok.push(s),
                Err(err) => failed.push((e.id.clone(), err)),
            }
        }
        (ok, failed)
    }
}

fn image_error(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Image {
        path: path.into(),
        message: e.to_string(),
    }
}

pub fn load_image_png(path: &Path) -> Result<Image> {
    let img = image::open(path).map_err(|e| image_error(path, e))?.to_rgb8();
    let (w, h) = img.dimensions();
    Image::new(
        w as usize,
        h as usize,
        img.into_raw().into_iter().map(|v| v as f64 / 255.0).collect(),
    )
}

/// Grayscale mask; pixels `>= 128` are foreground.
pub fn load_mask_png(path: &Path) -> Result<BinaryMask> {
    let img = image::open(path).map_err(|e| image_error(path, e))?.to_luma8();
    let (w, h) = img.dimensions();
    BinaryMask::from_vec(
        w as usize,
        h as usize,
        img.into_raw().into_iter().map(|v| v >= 128).collect(),
    )
}

pub fn save_image_png(image: &Image, path: &Path) -> Result<()> {
    let bytes: Vec<u8> = image
        .data()
        .iter()
        .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect();
    let buf = image::RgbImage::from_raw(image.width() as u32, image.height() as u32, bytes)
        .expect("buffer length matches dimensions");
    buf.save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| image_error(path, e))
}

pub fn save_mask_png(mask: &BinaryMask, path: &Path) -> Result<()> {
    let bytes: Vec<u8> = mask.data().iter().map(|&b| if b { 255 } else { 0 }).collect();
    let buf = image::GrayImage::from_raw(mask.width() as u32, mask.height() as u32, bytes)
        .expect("buffer length matches dimensions");
    buf.save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| image_error(path, e))
}
