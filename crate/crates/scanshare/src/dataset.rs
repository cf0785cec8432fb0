//! Fixation records as JSON Lines, images as binary PPM, segmentation as
//! binary PGM sidecars (`<id>.seg.pgm`).

use std::collections::BTreeSet;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
use image::{ExtendedColorType, ImageEncoder, ImageFormat};
use serde::{Deserialize, Serialize};

use scanshare_core::data::{pixel_from_u8, pixel_to_u8, Fixation, ImageSample, LabelMap, Scanpath, TaskSpec};
use scanshare_core::{Error, Tensor};

use crate::error::{CliError, Result};

pub const FIXATION_FILE: &str = "fixations.jsonl";
pub const IMAGE_DIR: &str = "images";

/// One line of the fixation file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Record {
    pub image_id: String,
    pub task: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<u8>,
    pub fixations: Vec<[f64; 2]>,
    pub terminated: bool,
}

impl Record {
    pub fn from_scanpath(sp: &Scanpath) -> Self {
        Record {
            image_id: sp.image_id.clone(),
            task: match sp.task {
                TaskSpec::FreeViewing => "fv".into(),
                TaskSpec::VisualSearch { .. } => "vs".into(),
            },
            target: sp.task.target(),
            fixations: sp.fixations.iter().map(|f| [f.x, f.y]).collect(),
            terminated: sp.terminated,
        }
    }

    /// Validates and converts; `index` names the record in errors.
    pub fn to_scanpath(&self, index: usize) -> Result<Scanpath> {
        let err = |m: String| CliError::Core(Error::Input(format!("record {index}: {m}")));
        let task = match (self.task.as_str(), self.target) {
            ("fv", None) => TaskSpec::FreeViewing,
            ("fv", Some(_)) => return Err(err("free-viewing records carry no target".into())),
            ("vs", Some(t)) => TaskSpec::search(t).map_err(|e| err(e.to_string()))?,
            ("vs", None) => return Err(err("visual-search records need a target".into())),
            (other, _) => return Err(err(format!("unknown task '{other}'"))),
        };
        let mut fixations = Vec::with_capacity(self.fixations.len());
        for (j, &[x, y]) in self.fixations.iter().enumerate() {
            fixations.push(Fixation::new(x, y).map_err(|_| err(format!("fixation {j} ({x}, {y}) is outside [0,1]^2")))?);
        }
        let sp = Scanpath {
            image_id: self.image_id.clone(),
            task,
            fixations,
            terminated: self.terminated,
        };
        sp.validate(usize::MAX).map_err(|e| err(e.to_string()))?;
        Ok(sp)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    pub images: Vec<ImageSample>,
    pub scanpaths: Vec<Scanpath>,
}

impl Dataset {
    pub fn image(&self, id: &str) -> Option<&ImageSample> {
        self.images.iter().find(|i| i.id == id)
    }
}

pub fn read_records(path: &Path) -> Result<Vec<Scanpath>> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: Record = serde_json::from_str(line)
            .map_err(|e| CliError::format(path, format!("line {}: {e}", i + 1)))?;
        out.push(rec.to_scanpath(out.len())?);
    }
    Ok(out)
}

pub fn write_records(path: &Path, scanpaths: &[Scanpath]) -> Result<()> {
    let mut text = String::new();
    for sp in scanpaths {
        text += &serde_json::to_string(&Record::from_scanpath(sp)).expect("record serializes");
        text.push('\n');
    }
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

/// Loads every scanpath in `fixation_file` and each image it references from
/// `image_dir`.
pub fn load_dataset(fixation_file: &Path, image_dir: &Path) -> Result<Dataset> {
    let scanpaths = read_records(fixation_file)?;
    let ids: BTreeSet<&str> = scanpaths.iter().map(|s| s.image_id.as_str()).collect();
    let mut images = Vec::with_capacity(ids.len());
    for id in ids {
        let path = image_path(image_dir, id);
        if !path.exists() {
            return Err(CliError::Core(Error::Load(format!(
                "image '{id}' not found at {}",
                path.display()
            ))));
        }
        images.push(read_image(&path, id)?);
    }
    Ok(Dataset { images, scanpaths })
}

/// Loads `<dir>/fixations.jsonl` with images from `<dir>/images`.
pub fn load_dir(dir: &Path) -> Result<Dataset> {
    load_dataset(&dir.join(FIXATION_FILE), &dir.join(IMAGE_DIR))
}

/// Writes the dataset under `dir`, returning every file written.
pub fn save_dir(dir: &Path, data: &Dataset) -> Result<Vec<PathBuf>> {
    let images = dir.join(IMAGE_DIR);
    fs::create_dir_all(&images).map_err(|e| CliError::io(&images, e))?;
    let mut written = Vec::new();
    for img in &data.images {
        let p = image_path(&images, &img.id);
        write_ppm(&p, img)?;
        written.push(p);
        if let Some(seg) = &img.segmentation {
            let p = segmentation_path(&images, &img.id);
            write_pgm(&p, seg)?;
            written.push(p);
        }
    }
    let f = dir.join(FIXATION_FILE);
    write_records(&f, &data.scanpaths)?;
    written.push(f);
    Ok(written)
}

pub fn image_path(dir: &Path, id: &str) -> PathBuf {
    dir.join(format!("{id}.ppm"))
}

pub fn segmentation_path(dir: &Path, id: &str) -> PathBuf {
    dir.join(format!("{id}.seg.pgm"))
}

/// Reads an image and its optional segmentation sidecar.
pub fn read_image(path: &Path, id: &str) -> Result<ImageSample> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    let img = image::load_from_memory_with_format(&bytes, ImageFormat::Pnm)
        .map_err(|e| CliError::format(path, e.to_string()))?
        .to_rgb8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let mut data = vec![0f32; 3 * h * w];
    for (x, y, px) in img.enumerate_pixels() {
        for c in 0..3 {
            data[(c * h + y as usize) * w + x as usize] = pixel_from_u8(px[c]);
        }
    }
    let pixels = Tensor::new(&[3, h, w], data).map_err(CliError::Core)?;
    let seg_path = segmentation_path(path.parent().unwrap_or(Path::new(".")), id);
    let segmentation = if seg_path.exists() {
        Some(read_pgm(&seg_path)?)
    } else {
        None
    };
    let mut sample = ImageSample::new(id.to_string(), pixels, segmentation)?;
    if let Some(seg) = &sample.segmentation {
        sample.present_targets = seg.categories();
    }
    Ok(sample)
}

fn encode_pnm(path: &Path, data: &[u8], w: usize, h: usize, subtype: PnmSubtype, color: ExtendedColorType) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| CliError::io(path, e))?;
    let mut out = BufWriter::new(file);
    PnmEncoder::new(&mut out)
        .with_subtype(subtype)
        .write_image(data, w as u32, h as u32, color)
        .map_err(|e| CliError::format(path, e.to_string()))?;
    out.flush().map_err(|e| CliError::io(path, e))
}

pub fn write_ppm(path: &Path, img: &ImageSample) -> Result<()> {
    let (h, w) = (img.height(), img.width());
    let src = img.pixels.data();
    let mut data = Vec::with_capacity(3 * h * w);
    for i in 0..h * w {
        for c in 0..3 {
            data.push(pixel_to_u8(src[c * h * w + i]));
        }
    }
    encode_pnm(path, &data, w, h, PnmSubtype::Pixmap(SampleEncoding::Binary), ExtendedColorType::Rgb8)
}

pub fn write_pgm(path: &Path, seg: &LabelMap) -> Result<()> {
    encode_pnm(
        path,
        &seg.labels,
        seg.width,
        seg.height,
        PnmSubtype::Graymap(SampleEncoding::Binary),
        ExtendedColorType::L8,
    )
}

pub fn read_pgm(path: &Path) -> Result<LabelMap> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    let img = image::load_from_memory_with_format(&bytes, ImageFormat::Pnm)
        .map_err(|e| CliError::format(path, e.to_string()))?
        .to_luma8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    Ok(LabelMap::new(h, w, img.into_raw())?)
}
