//! Dataset layout, loading, synthetic generation and class/plane tallies.
//!
//! On disk a dataset looks like
//!
//! ```text
//! root/<split>/<class>/images/<plane>_<name>.png
//! root/<split>/<class>/masks/<plane>_<name>.png
//! ```
//!
//! where `<split>` is `train` or `test`, `<class>` one of `glioma`,
//! `meningioma`, `pituitary`, `no_tumor`, and the plane prefix `ax_`, `co_` or
//! `sa_`. Masks pair with images by file stem; `no_tumor` has no masks.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use image::imageops::FilterType;
use image::{GrayImage, Luma};
use ndarray::{Array2, Array4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{BinaryMask, FeatureMap};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Glioma,
    Meningioma,
    Pituitary,
    NoTumor,
}

impl Label {
    pub const ALL: [Label; 4] = [Label::Glioma, Label::Meningioma, Label::Pituitary, Label::NoTumor];
    pub const TUMORS: [Label; 3] = [Label::Glioma, Label::Meningioma, Label::Pituitary];

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Glioma => "glioma",
            Label::Meningioma => "meningioma",
            Label::Pituitary => "pituitary",
            Label::NoTumor => "no_tumor",
        }
    }

    pub fn is_tumor(self) -> bool {
        self != Label::NoTumor
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Label::ALL
            .into_iter()
            .find(|l| l.as_str() == s)
            .ok_or_else(|| Error::config(format!("unknown class {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Plane {
    Axial,
    Coronal,
    Sagittal,
}

impl Plane {
    pub const ALL: [Plane; 3] = [Plane::Axial, Plane::Coronal, Plane::Sagittal];

    pub fn prefix(self) -> &'static str {
        match self {
            Plane::Axial => "ax_",
            Plane::Coronal => "co_",
            Plane::Sagittal => "sa_",
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Plane::Axial => "axial",
            Plane::Coronal => "coronal",
            Plane::Sagittal => "sagittal",
        }
    }

    /// Plane encoded in a file name, if any.
    pub fn from_file_name(name: &str) -> Option<Plane> {
        Plane::ALL.into_iter().find(|p| name.starts_with(p.prefix()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            other => Err(Error::config(format!("unknown split {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleEntry {
    pub image_path: PathBuf,
    pub mask_path: Option<PathBuf>,
    pub label: Label,
    pub plane: Plane,
    pub split: Split,
}

impl SampleEntry {
    pub fn stem(&self) -> String {
        self.image_path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetIndex {
    pub root: PathBuf,
    pub entries: Vec<SampleEntry>,
    pub counts: BTreeMap<(Split, Label, Plane), usize>,
}

impl DatasetIndex {
    fn new(root: PathBuf, mut entries: Vec<SampleEntry>) -> Self {
        entries.sort_by(|a, b| a.image_path.cmp(&b.image_path));
        let mut counts = BTreeMap::new();
        for e in &entries {
            *counts.entry((e.split, e.label, e.plane)).or_insert(0) += 1;
        }
        Self { root, entries, counts }
    }

    pub fn count(&self, split: Split, label: Label, plane: Plane) -> usize {
        self.counts.get(&(split, label, plane)).copied().unwrap_or(0)
    }

    pub fn class_total(&self, split: Split, label: Label) -> usize {
        Plane::ALL.iter().map(|&p| self.count(split, label, p)).sum()
    }

    pub fn split_total(&self, split: Split) -> usize {
        Label::ALL.iter().map(|&l| self.class_total(split, l)).sum()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

fn png_files(dir: &Path) -> Result<Vec<PathBuf>> {
    if !dir.is_dir() {
        return Ok(Vec::new());
    }
    let mut files = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let is_png = path.extension().is_some_and(|ext| ext.eq_ignore_ascii_case("png"));
        if path.is_file() && is_png {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

fn check_readable(path: &Path) -> Result<(u32, u32)> {
    image::image_dimensions(path).map_err(|e| Error::UnreadableImage { path: path.to_path_buf(), message: e.to_string() })
}

/// Indexes one split of a dataset root.
pub fn load_dataset(root: &Path, split: Split) -> Result<DatasetIndex> {
    if !root.is_dir() {
        return Err(Error::Layout(format!("dataset root {} does not exist", root.display())));
    }
    let split_dir = root.join(split.as_str());
    if !split_dir.is_dir() {
        return Err(Error::Layout(format!("missing split directory {}", split_dir.display())));
    }
    let mut class_dirs = Vec::new();
    for entry in fs::read_dir(&split_dir).map_err(|e| Error::io(&split_dir, e))? {
        let path = entry.map_err(|e| Error::io(&split_dir, e))?.path();
        if path.is_dir() {
            class_dirs.push(path);
        }
    }
    class_dirs.sort();
    let mut entries = Vec::new();
    for dir in class_dirs {
        let name = dir.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        let label: Label = name.parse().map_err(|_| Error::UnknownClass(dir.clone()))?;
        for image_path in png_files(&dir.join("images"))? {
            let file_name = image_path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
            let plane = Plane::from_file_name(&file_name).unwrap_or_else(|| {
                log::warn!("{} has no plane prefix; assuming axial", image_path.display());
                Plane::Axial
            });
            check_readable(&image_path)?;
            let mask_path = if label.is_tumor() {
                let expected = dir.join("masks").join(&file_name);
                if !expected.is_file() {
                    return Err(Error::MissingMask { image: image_path, expected });
                }
                check_readable(&expected)?;
                Some(expected)
            } else {
                None
            };
            entries.push(SampleEntry { image_path, mask_path, label, plane, split });
        }
    }
    Ok(DatasetIndex::new(root.to_path_buf(), entries))
}

#[derive(Debug, Clone)]
pub struct Sample {
    /// `(1, 1, H, W)`, values in `[0, 1]`
    pub image: FeatureMap,
    pub mask: BinaryMask,
    pub label: Label,
    pub plane: Plane,
}

/// Mask pixels strictly above this value are foreground.
pub const MASK_THRESHOLD: u8 = 127;

/// Reads any supported image as 8-bit grayscale.
pub fn read_gray(path: &Path) -> Result<GrayImage> {
    let img = image::open(path).map_err(|e| Error::UnreadableImage { path: path.to_path_buf(), message: e.to_string() })?;
    Ok(img.to_luma8())
}

/// Reads a mask image, binarized at [`MASK_THRESHOLD`].
pub fn read_mask(path: &Path) -> Result<BinaryMask> {
    Ok(BinaryMask::binarize(&gray_to_array(&read_gray(path)?), MASK_THRESHOLD))
}

fn gray_to_array(img: &GrayImage) -> Array2<u8> {
    let (w, h) = img.dimensions();
    Array2::from_shape_vec((h as usize, w as usize), img.as_raw().clone()).expect("buffer matches dimensions")
}

pub fn gray_to_feature_map(img: &GrayImage) -> FeatureMap {
    let (w, h) = img.dimensions();
    let data = img.as_raw().iter().map(|&v| f64::from(v) / 255.0).collect();
    FeatureMap::from_nhwc(Array4::from_shape_vec((1, h as usize, w as usize, 1), data).expect("dims"))
}

fn load_pair(entry: &SampleEntry) -> Result<(GrayImage, Option<GrayImage>)> {
    let image = read_gray(&entry.image_path)?;
    let mask = match &entry.mask_path {
        Some(p) => {
            let m = read_gray(p)?;
            if m.dimensions() != image.dimensions() {
                return Err(Error::shape(format!(
                    "image {} is {:?} but mask {} is {:?}",
                    entry.image_path.display(),
                    image.dimensions(),
                    p.display(),
                    m.dimensions()
                )));
            }
            Some(m)
        }
        None => None,
    };
    Ok((image, mask))
}

pub fn load_sample(entry: &SampleEntry) -> Result<Sample> {
    let (image, mask) = load_pair(entry)?;
    let (w, h) = image.dimensions();
    let mask = match mask {
        Some(m) => BinaryMask::binarize(&gray_to_array(&m), MASK_THRESHOLD),
        None => BinaryMask::zeros(h as usize, w as usize),
    };
    Ok(Sample { image: gray_to_feature_map(&image), mask, label: entry.label, plane: entry.plane })
}

/// Loads a sample resized to `size × size`: bilinear for the image, nearest
/// neighbour for the mask.
pub fn load_sample_resized(entry: &SampleEntry, size: usize) -> Result<Sample> {
    let (image, mask) = load_pair(entry)?;
    let s = size as u32;
    let resize = |img: GrayImage, filter| if img.dimensions() == (s, s) { img } else { image::imageops::resize(&img, s, s, filter) };
    let image = resize(image, FilterType::Triangle);
    let mask = match mask {
        Some(m) => BinaryMask::binarize(&gray_to_array(&resize(m, FilterType::Nearest)), MASK_THRESHOLD),
        None => BinaryMask::zeros(size, size),
    };
    Ok(Sample { image: gray_to_feature_map(&image), mask, label: entry.label, plane: entry.plane })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub n_per_class: usize,
    pub image_size: usize,
    pub seed: u64,
    pub noise_level: f64,
    pub split: Split,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self { n_per_class: 2, image_size: 64, seed: 0, noise_level: 0.3, split: Split::Train }
    }
}

/// Default side multiple enforced when no model config is supplied.
pub const DEFAULT_SIZE_MULTIPLE: usize = 32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub image: String,
    pub mask: Option<String>,
    pub label: Label,
    pub plane: Plane,
    pub mask_pixels: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthManifest {
    pub spec: SynthSpec,
    pub entries: Vec<ManifestEntry>,
}

pub const MANIFEST_FILE: &str = "manifest.json";

impl SynthManifest {
    /// Reads the manifest written into `root/<split>/`.
    pub fn load(root: &Path, split: Split) -> Result<Self> {
        let path = root.join(split.as_str()).join(MANIFEST_FILE);
        let raw = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        serde_json::from_str(&raw).map_err(|e| Error::Layout(format!("{}: {e}", path.display())))
    }
}

fn write_png(img: &GrayImage, path: &Path) -> Result<()> {
    img.save(path).map_err(|e| match e {
        image::ImageError::IoError(io) => Error::io(path, io),
        other => Error::Layout(format!("cannot encode {}: {other}", path.display())),
    })
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

/// Draws one synthetic slice. Returns the image and, for tumor classes, the
/// ground-truth mask.
fn draw_sample(label: Label, size: usize, noise_level: f64, rng: &mut ChaCha8Rng) -> (GrayImage, Option<BinaryMask>) {
    let s = size as f64;
    let c = (s - 1.0) / 2.0;
    let (head_a, head_b) = (0.42 * s * rng.gen_range(0.9..1.0), 0.46 * s * rng.gen_range(0.9..1.0));
    let noise = Normal::new(0.0, 0.2 * noise_level.max(0.0)).expect("finite std");
    let unit = |x: f64, y: f64, cx: f64, cy: f64, a: f64, b: f64, theta: f64| {
        let (dx, dy) = (x - cx, y - cy);
        let (ct, st) = (theta.cos(), theta.sin());
        let u = (dx * ct + dy * st) / a;
        let v = (-dx * st + dy * ct) / b;
        u * u + v * v
    };
    // tumor geometry
    let (tcx, tcy) = (c + rng.gen_range(-0.15..0.15) * s, c + rng.gen_range(-0.15..0.15) * s);
    let theta = rng.gen_range(0.0..std::f64::consts::PI);
    let tumor = |x: f64, y: f64| -> bool {
        match label {
            Label::Glioma => unit(x, y, tcx, tcy, 0.2 * s, 0.12 * s, theta) <= 1.0,
            Label::Meningioma => {
                let r = unit(x, y, tcx, tcy, 0.16 * s, 0.16 * s, 0.0);
                (0.45..=1.0).contains(&r)
            }
            Label::Pituitary => unit(x, y, c, c + 0.18 * s, 0.07 * s, 0.06 * s, 0.0) <= 1.0,
            Label::NoTumor => false,
        }
    };
    let mut img = GrayImage::new(size as u32, size as u32);
    let mut mask = BinaryMask::zeros(size, size);
    for y in 0..size {
        for x in 0..size {
            let (fx, fy) = (x as f64, y as f64);
            let r = unit(fx, fy, c, c, head_a, head_b, 0.0);
            let mut v = if r <= 0.82 {
                0.38
            } else if r <= 1.0 {
                0.75
            } else {
                0.04
            };
            if tumor(fx, fy) {
                v = 0.92;
                mask.set(y, x, true);
            }
            v += noise.sample(rng);
            img.put_pixel(x as u32, y as u32, Luma([(v.clamp(0.0, 1.0) * 255.0).round() as u8]));
        }
    }
    (img, label.is_tumor().then_some(mask))
}

fn mask_to_gray(mask: &BinaryMask) -> GrayImage {
    let (h, w) = mask.dims();
    let mut img = GrayImage::new(w as u32, h as u32);
    for (i, on) in mask.iter().enumerate() {
        img.put_pixel((i % w) as u32, (i / w) as u32, Luma([if on { 255 } else { 0 }]));
    }
    img
}

/// Writes a deterministic synthetic dataset in the canonical layout plus a
/// manifest with true mask pixel counts, then indexes it.
///
/// `size_multiple` is the side multiple required by the consuming model
/// (`patch_size · 2³`); [`DEFAULT_SIZE_MULTIPLE`] when `None`.
pub fn generate_synthetic_dataset(spec: &SynthSpec, out_root: &Path, size_multiple: Option<usize>) -> Result<DatasetIndex> {
    if spec.n_per_class == 0 {
        return Err(Error::config("n_per_class must be positive"));
    }
    let m = size_multiple.unwrap_or(DEFAULT_SIZE_MULTIPLE);
    if spec.image_size == 0 || !spec.image_size.is_multiple_of(m) {
        return Err(Error::config(format!("image_size {} must be a positive multiple of {m}", spec.image_size)));
    }
    if !(0.0..=1.0).contains(&spec.noise_level) {
        return Err(Error::config(format!("noise_level {} outside [0, 1]", spec.noise_level)));
    }
    let split_dir = out_root.join(spec.split.as_str());
    let mut manifest = Vec::new();
    for (ci, label) in Label::ALL.into_iter().enumerate() {
        let class_dir = split_dir.join(label.as_str());
        let images = class_dir.join("images");
        create_dir(&images)?;
        let masks = class_dir.join("masks");
        if label.is_tumor() {
            create_dir(&masks)?;
        }
        for i in 0..spec.n_per_class {
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
            rng.set_stream((ci * 1_000_003 + i) as u64);
            let plane = Plane::ALL[i % 3];
            let name = format!("{}{}_{i:04}.png", plane.prefix(), label.as_str());
            let (img, mask) = draw_sample(label, spec.image_size, spec.noise_level, &mut rng);
            write_png(&img, &images.join(&name))?;
            let rel = |p: PathBuf| p.strip_prefix(out_root).unwrap_or(&p).to_string_lossy().into_owned();
            let (mask_rel, pixels) = match &mask {
                Some(mk) => {
                    let path = masks.join(&name);
                    write_png(&mask_to_gray(mk), &path)?;
                    (Some(rel(path)), mk.count())
                }
                None => (None, 0),
            };
            manifest.push(ManifestEntry { image: rel(images.join(&name)), mask: mask_rel, label, plane, mask_pixels: pixels });
        }
    }
    let doc = SynthManifest { spec: spec.clone(), entries: manifest };
    let path = split_dir.join(MANIFEST_FILE);
    let text = serde_json::to_string_pretty(&doc).map_err(|e| Error::Layout(e.to_string()))?;
    fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    load_dataset(out_root, spec.split)
}

/// Class × plane counts for one split.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DistributionTable {
    pub split: Split,
    /// Per class: axial, coronal, sagittal.
    pub rows: BTreeMap<Label, [usize; 3]>,
}

impl DistributionTable {
    pub fn class_total(&self, label: Label) -> usize {
        self.rows.get(&label).map(|r| r.iter().sum()).unwrap_or(0)
    }

    pub fn plane_totals(&self) -> [usize; 3] {
        let mut t = [0; 3];
        for r in self.rows.values() {
            for (a, b) in t.iter_mut().zip(r) {
                *a += b;
            }
        }
        t
    }

    pub fn total(&self) -> usize {
        self.plane_totals().iter().sum()
    }

    pub const CSV_HEADER: &'static str = "class,axial,coronal,sagittal,total";

    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for label in Label::ALL {
            let r = self.rows.get(&label).copied().unwrap_or([0; 3]);
            out.push_str(&format!("{},{},{},{},{}\n", label, r[0], r[1], r[2], r.iter().sum::<usize>()));
        }
        let t = self.plane_totals();
        out.push_str(&format!("total,{},{},{},{}\n", t[0], t[1], t[2], self.total()));
        out
    }
}

/// Tallies an index into a class × plane table.
///
/// Panics if the index mixes splits (indices built by [`load_dataset`] never do).
pub fn summarize_distribution(index: &DatasetIndex) -> DistributionTable {
    let split = index.entries.first().map(|e| e.split).unwrap_or(Split::Train);
    let mut rows: BTreeMap<Label, [usize; 3]> = Label::ALL.iter().map(|&l| (l, [0; 3])).collect();
    for (&(s, label, plane), &n) in &index.counts {
        assert_eq!(s, split, "index mixes splits");
        let col = Plane::ALL.iter().position(|&p| p == plane).expect("known plane");
        rows.get_mut(&label).expect("all labels present")[col] += n;
    }
    DistributionTable { split, rows }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for l in Label::ALL {
            assert_eq!(l.as_str().parse::<Label>().unwrap(), l);
        }
        assert!("astrocytoma".parse::<Label>().is_err());
        assert_eq!(Plane::from_file_name("co_x.png"), Some(Plane::Coronal));
        assert_eq!(Plane::from_file_name("scan.png"), None);
        assert_eq!("test".parse::<Split>().unwrap(), Split::Test);
    }

    #[test]
    fn empty_skeleton_gives_zero_counts() {
        let dir = tempfile::tempdir().unwrap();
        for l in Label::ALL {
            fs::create_dir_all(dir.path().join("train").join(l.as_str()).join("images")).unwrap();
        }
        let idx = load_dataset(dir.path(), Split::Train).unwrap();
        assert!(idx.is_empty());
        let table = summarize_distribution(&idx);
        assert_eq!(table.total(), 0);
        assert!(table.to_csv().ends_with("total,0,0,0,0\n"));
    }

    #[test]
    fn missing_split_is_layout_error() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(load_dataset(dir.path(), Split::Test), Err(Error::Layout(_))));
    }

    #[test]
    fn unknown_class_directory() {
        let dir = tempfile::tempdir().unwrap();
        fs::create_dir_all(dir.path().join("train/astrocytoma/images")).unwrap();
        assert!(matches!(load_dataset(dir.path(), Split::Train), Err(Error::UnknownClass(_))));
    }

    #[test]
    fn unreadable_image_names_path() {
        let dir = tempfile::tempdir().unwrap();
        let images = dir.path().join("train/no_tumor/images");
        fs::create_dir_all(&images).unwrap();
        fs::write(images.join("ax_broken.png"), b"not a png").unwrap();
        match load_dataset(dir.path(), Split::Train) {
            Err(Error::UnreadableImage { path, .. }) => assert!(path.ends_with("ax_broken.png")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_prefix_defaults_to_axial() {
        let dir = tempfile::tempdir().unwrap();
        let images = dir.path().join("train/no_tumor/images");
        fs::create_dir_all(&images).unwrap();
        GrayImage::new(4, 4).save(images.join("scan.png")).unwrap();
        let idx = load_dataset(dir.path(), Split::Train).unwrap();
        assert_eq!(idx.entries[0].plane, Plane::Axial);
        assert_eq!(idx.entries[0].mask_path, None);
    }

    #[test]
    fn mask_binarization_and_dims() {
        let dir = tempfile::tempdir().unwrap();
        let class = dir.path().join("train/glioma");
        fs::create_dir_all(class.join("images")).unwrap();
        fs::create_dir_all(class.join("masks")).unwrap();
        GrayImage::from_fn(4, 2, |x, _| Luma([(x * 60) as u8])).save(class.join("images/sa_a.png")).unwrap();
        GrayImage::from_fn(4, 2, |x, y| Luma([if (x + y) % 2 == 0 { 255 } else { 0 }])).save(class.join("masks/sa_a.png")).unwrap();
        let idx = load_dataset(dir.path(), Split::Train).unwrap();
        let s = load_sample(&idx.entries[0]).unwrap();
        assert_eq!(s.image.shape(), [1, 1, 2, 4]);
        assert!((s.image.get(0, 0, 0, 3) - 180.0 / 255.0).abs() < 1e-12);
        assert_eq!(s.mask.count(), 4);
        assert!(s.mask.values().iter().all(|&v| v <= 1));
        assert_eq!(s.plane, Plane::Sagittal);

        GrayImage::new(2, 2).save(class.join("masks/sa_a.png")).unwrap();
        assert!(matches!(load_sample(&idx.entries[0]), Err(Error::Shape(_))));
    }

    #[test]
    fn synth_rejects_bad_size() {
        let dir = tempfile::tempdir().unwrap();
        let spec = SynthSpec { image_size: 48, ..SynthSpec::default() };
        assert!(generate_synthetic_dataset(&spec, dir.path(), None).is_err());
        assert!(generate_synthetic_dataset(&spec, dir.path(), Some(16)).is_ok());
    }
}
