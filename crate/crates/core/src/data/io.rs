use std::path::{Path, PathBuf};

use image::imageops::{self, FilterType};
use image::{DynamicImage, GrayImage, RgbImage};
use serde::{Deserialize, Serialize};

use super::{ImageTensor, LabeledImage, SaliencyMap, MASK_THRESHOLD};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

const IMAGE_EXTENSIONS: [&str; 4] = ["png", "jpg", "jpeg", "bmp"];

fn open(path: &Path) -> Result<DynamicImage> {
    if !path.exists() {
        return Err(Error::io(path, std::io::Error::new(std::io::ErrorKind::NotFound, "file not found")));
    }
    image::open(path).map_err(|source| Error::Image { path: path.to_path_buf(), source })
}

pub fn image_from_dynamic(img: &DynamicImage) -> ImageTensor {
    let rgb = img.to_rgb32f();
    let (w, h) = (rgb.width() as usize, rgb.height() as usize);
    let t = Tensor::from_fn(3, h, w, |c, y, x| rgb.get_pixel(x as u32, y as u32)[c]);
    ImageTensor::from_clamped(t).expect("3-channel clamped image")
}

fn resized(img: DynamicImage, size: Option<(usize, usize)>) -> DynamicImage {
    match size {
        Some((h, w)) if (img.height() as usize, img.width() as usize) != (h, w) => {
            img.resize_exact(w as u32, h as u32, FilterType::Triangle)
        }
        _ => img,
    }
}

/// Loads an RGB image at its native size.
pub fn load_image(path: &Path) -> Result<ImageTensor> {
    Ok(image_from_dynamic(&open(path)?))
}

/// Loads a mask, converting to grayscale, optionally resizing, and
/// binarizing at 0.5.
pub fn load_mask(path: &Path, size: Option<(usize, usize)>) -> Result<SaliencyMap> {
    let gray = resized(open(path)?, size).to_luma32f();
    let (w, h) = (gray.width() as usize, gray.height() as usize);
    let t = Tensor::from_fn(1, h, w, |_, y, x| gray.get_pixel(x as u32, y as u32)[0]);
    SaliencyMap::binarize(&t, MASK_THRESHOLD)
}

fn check_target(target_size: usize) -> Result<()> {
    if target_size == 0 || target_size % 16 != 0 {
        return Err(Error::Validation(format!("target size {target_size} is not a positive multiple of 16")));
    }
    Ok(())
}

/// Loads an image and its mask, both resized to `target_size` square.
pub fn load_pair(image_path: &Path, mask_path: &Path, target_size: usize) -> Result<LabeledImage> {
    check_target(target_size)?;
    let size = Some((target_size, target_size));
    let clean = image_from_dynamic(&resized(open(image_path)?, size));
    let mask = load_mask(mask_path, size)?;
    LabeledImage::new(clean, mask)
}

fn to_u8(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

pub fn image_to_rgb(img: &ImageTensor) -> RgbImage {
    let t = img.tensor();
    RgbImage::from_fn(t.width() as u32, t.height() as u32, |x, y| {
        let px = |c: usize| to_u8(t.get(c.min(t.channels() - 1), y as usize, x as usize));
        image::Rgb([px(0), px(1), px(2)])
    })
}

pub fn map_to_gray(map: &SaliencyMap) -> GrayImage {
    let t = map.tensor();
    GrayImage::from_fn(t.width() as u32, t.height() as u32, |x, y| image::Luma([to_u8(t.get(0, y as usize, x as usize))]))
}

fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    Ok(())
}

pub fn save_image(path: &Path, img: &ImageTensor) -> Result<()> {
    ensure_parent(path)?;
    image_to_rgb(img).save(path).map_err(|source| Error::Image { path: path.to_path_buf(), source })
}

pub fn save_mask(path: &Path, map: &SaliencyMap) -> Result<()> {
    ensure_parent(path)?;
    map_to_gray(map).save(path).map_err(|source| Error::Image { path: path.to_path_buf(), source })
}

/// Places `panels` side by side with `gap` white pixels between them.
pub fn side_by_side(panels: &[RgbImage], gap: u32) -> RgbImage {
    let h = panels.iter().map(|p| p.height()).max().unwrap_or(0);
    let w = panels.iter().map(|p| p.width()).sum::<u32>() + gap * panels.len().saturating_sub(1) as u32;
    let mut out = RgbImage::from_pixel(w, h, image::Rgb([255, 255, 255]));
    let mut x = 0;
    for p in panels {
        imageops::replace(&mut out, p, x as i64, 0);
        x += p.width() + gap;
    }
    out
}

/// Named collection of labelled images in a fixed (path-sorted) order.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub name: String,
    pub ids: Vec<String>,
    pub items: Vec<LabeledImage>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }
}

fn is_image(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| IMAGE_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
}

fn sorted_images(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && is_image(p))
        .collect();
    files.sort();
    Ok(files)
}

/// Pairs `dir/images/*` with `dir/masks/*` by file stem, sorted by path.
pub fn list_dataset(dir: &Path) -> Result<Vec<(PathBuf, PathBuf)>> {
    let images = sorted_images(&dir.join("images"))?;
    let masks = sorted_images(&dir.join("masks"))?;
    let stem = |p: &Path| p.file_stem().map(|s| s.to_os_string());
    let pairs: Vec<_> = images
        .into_iter()
        .filter_map(|img| {
            let m = masks.iter().find(|m| stem(m) == stem(&img))?.clone();
            Some((img, m))
        })
        .collect();
    if pairs.is_empty() {
        return Err(Error::Validation(format!(
            "{} has no images/ entries with matching masks/",
            dir.display()
        )));
    }
    Ok(pairs)
}

pub fn load_dataset_dir(dir: &Path, target_size: usize) -> Result<Dataset> {
    let pairs = list_dataset(dir)?;
    let mut ids = Vec::with_capacity(pairs.len());
    let mut items = Vec::with_capacity(pairs.len());
    for (img, mask) in pairs {
        ids.push(img.file_stem().unwrap_or_default().to_string_lossy().into_owned());
        items.push(load_pair(&img, &mask, target_size)?);
    }
    let name = dir.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_else(|| "dataset".into());
    Ok(Dataset { name, ids, items })
}

/// One row of the corruption manifest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestRow {
    pub clean_path: String,
    pub noisy_path: String,
    pub mask_path: String,
    pub sigma: f64,
}

pub fn write_manifest(path: &Path, rows: &[ManifestRow]) -> Result<()> {
    ensure_parent(path)?;
    let mut w = csv::Writer::from_path(path)?;
    if rows.is_empty() {
        w.write_record(["clean_path", "noisy_path", "mask_path", "sigma"])?;
    }
    for row in rows {
        w.serialize(row)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestRow>> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<std::result::Result<_, _>>()?)
}
