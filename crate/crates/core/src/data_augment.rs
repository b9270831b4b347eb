//! Synthetic labelled vector data, augmentation policies for vectors and
//! small RGB images, and CIFAR-10 binary ingestion.

use std::f64::consts::SQRT_2;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{Mat64, Rng};

const DATASET_TAG: u64 = 0x6461_7461;
const VIEW_TAG: u64 = 0x7669_6577;

/// Feature rows with one class label each.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledVectors {
    pub features: Mat64,
    pub labels: Vec<usize>,
}

impl LabeledVectors {
    pub fn new(features: Mat64, labels: Vec<usize>) -> Result<Self> {
        crate::error::ensure_dim("label count", features.rows(), labels.len())?;
        Ok(Self { features, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    pub fn num_classes(&self) -> usize {
        self.labels.iter().max().map_or(0, |m| m + 1)
    }

    pub fn select(&self, indices: &[usize]) -> Self {
        Self {
            features: self.features.select_rows(indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VectorDatasetSpec {
    pub num_classes: usize,
    pub samples_per_class: usize,
    pub ambient_dim: usize,
    /// Distance between any two class means.
    pub class_separation: f64,
    pub within_class_sigma: f64,
    pub seed: u64,
}

impl VectorDatasetSpec {
    pub fn validate(&self) -> Result<()> {
        if self.num_classes == 0 || self.samples_per_class == 0 || self.ambient_dim == 0 {
            return Err(Error::domain(
                "num_classes, samples_per_class and ambient_dim must be positive",
            ));
        }
        if self.ambient_dim + 1 < self.num_classes {
            return Err(Error::domain(format!(
                "{} equidistant class means need ambient_dim >= {}, got {}",
                self.num_classes,
                self.num_classes - 1,
                self.ambient_dim
            )));
        }
        if !self.class_separation.is_finite() || self.class_separation < 0.0 {
            return Err(Error::domain("class_separation must be finite and >= 0"));
        }
        if !self.within_class_sigma.is_finite() || self.within_class_sigma < 0.0 {
            return Err(Error::domain("within_class_sigma must be finite and >= 0"));
        }
        Ok(())
    }

    /// Class means at the vertices of a regular simplex with edge
    /// `class_separation`, centred on the origin.
    pub fn class_means(&self) -> Result<Mat64> {
        self.validate()?;
        let c = self.num_classes;
        let scale = self.class_separation / SQRT_2;
        // Coordinate k is the (k+1)-th Helmert contrast, orthonormal and
        // orthogonal to the all-ones direction.
        Ok(Mat64::from_fn(c, self.ambient_dim, |class, k| {
            if k + 1 >= c {
                return 0.0;
            }
            let m = (k + 1) as f64;
            let norm = (m * (m + 1.0)).sqrt();
            let entry = if class <= k {
                1.0
            } else if class == k + 1 {
                -m
            } else {
                0.0
            };
            scale * entry / norm
        }))
    }
}

/// Draws `samples_per_class` Gaussian samples around every class mean,
/// class by class.
pub fn make_vector_dataset(spec: &VectorDatasetSpec) -> Result<LabeledVectors> {
    let means = spec.class_means()?;
    let mut rng = Rng::derive(spec.seed, &[DATASET_TAG]);
    let total = spec.num_classes * spec.samples_per_class;
    let mut data = Vec::with_capacity(total * spec.ambient_dim);
    let mut labels = Vec::with_capacity(total);
    for class in 0..spec.num_classes {
        for _ in 0..spec.samples_per_class {
            for &m in means.row(class) {
                data.push(rng.gaussian(m, spec.within_class_sigma)?);
            }
            labels.push(class);
        }
    }
    LabeledVectors::new(Mat64::new(total, spec.ambient_dim, data)?, labels)
}

/// Anything that turns one flat input into a randomly transformed copy.
pub trait Augmenter: Sync {
    fn augment(&self, x: &[f64], rng: &mut Rng) -> Result<Vec<f64>>;
}

/// Noise, scaling and dropout for plain feature vectors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VectorAugment {
    pub noise_sigma: f64,
    /// Scale factors are drawn from `U[1 − s, 1 + s]`.
    pub scale_jitter: f64,
    pub dropout_p: f64,
}

impl Default for VectorAugment {
    fn default() -> Self {
        Self {
            noise_sigma: 1.0,
            scale_jitter: 0.2,
            dropout_p: 0.1,
        }
    }
}

impl VectorAugment {
    pub fn validate(&self) -> Result<()> {
        if !self.noise_sigma.is_finite() || self.noise_sigma < 0.0 {
            return Err(Error::domain("noise_sigma must be finite and >= 0"));
        }
        if !(0.0..=1.0).contains(&self.scale_jitter) {
            return Err(Error::domain("scale_jitter must lie in [0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.dropout_p) {
            return Err(Error::domain("dropout_p must lie in [0, 1]"));
        }
        Ok(())
    }
}

/// Adds `N(0, noise_sigma²)` noise, rescales by a uniform factor, then
/// zeroes each coordinate with probability `dropout_p`. Knobs set to zero
/// consume no randomness.
pub fn augment_vector(x: &[f64], rng: &mut Rng, params: &VectorAugment) -> Result<Vec<f64>> {
    params.validate()?;
    let mut out = x.to_vec();
    if params.noise_sigma > 0.0 {
        for v in &mut out {
            *v += rng.gaussian(0.0, params.noise_sigma)?;
        }
    }
    if params.scale_jitter > 0.0 {
        let factor = rng.uniform_range(1.0 - params.scale_jitter, 1.0 + params.scale_jitter);
        for v in &mut out {
            *v *= factor;
        }
    }
    if params.dropout_p > 0.0 {
        for v in &mut out {
            if rng.bernoulli(params.dropout_p) {
                *v = 0.0;
            }
        }
    }
    Ok(out)
}

impl Augmenter for VectorAugment {
    fn augment(&self, x: &[f64], rng: &mut Rng) -> Result<Vec<f64>> {
        augment_vector(x, rng, self)
    }
}

/// Two independent augmentations of sample `index` in `epoch`. The
/// substreams depend only on `(seed, epoch, index, view)`.
pub fn two_views<A: Augmenter + ?Sized>(
    aug: &A,
    x: &[f64],
    seed: u64,
    epoch: u64,
    index: u64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut a = Rng::derive(seed, &[VIEW_TAG, epoch, index, 0]);
    let mut b = Rng::derive(seed, &[VIEW_TAG, epoch, index, 1]);
    Ok((aug.augment(x, &mut a)?, aug.augment(x, &mut b)?))
}

/// A square RGB image stored channel-major (all red, then green, then
/// blue), each plane row-major, values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageSample {
    side: usize,
    pixels: Vec<f64>,
    pub label: usize,
}

impl ImageSample {
    pub fn new(side: usize, pixels: Vec<f64>, label: usize) -> Result<Self> {
        if side == 0 {
            return Err(Error::domain("image side must be positive"));
        }
        crate::error::ensure_dim("image pixels", 3 * side * side, pixels.len())?;
        if pixels.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::domain("pixel values must lie in [0, 1]"));
        }
        Ok(Self {
            side,
            pixels,
            label,
        })
    }

    pub fn uniform(side: usize, value: f64, label: usize) -> Result<Self> {
        Self::new(side, vec![value; 3 * side * side], label)
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn get(&self, channel: usize, y: usize, x: usize) -> f64 {
        self.pixels[(channel * self.side + y) * self.side + x]
    }
}

/// Converts images to flat feature rows.
pub fn images_to_vectors(images: &[ImageSample]) -> Result<LabeledVectors> {
    let Some(first) = images.first() else {
        return LabeledVectors::new(Mat64::zeros(0, 0), Vec::new());
    };
    let width = first.pixels.len();
    let mut data = Vec::with_capacity(images.len() * width);
    for img in images {
        crate::error::ensure_dim("image size", width, img.pixels.len())?;
        data.extend_from_slice(&img.pixels);
    }
    LabeledVectors::new(
        Mat64::new(images.len(), width, data)?,
        images.iter().map(|i| i.label).collect(),
    )
}

/// The image augmentation recipe, applied in a fixed order: flip, resized
/// crop, color jitter, grayscale, blur, solarize.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AugmentPolicy {
    pub flip_p: f64,
    pub crop_p: f64,
    pub crop_area: (f64, f64),
    pub crop_aspect: (f64, f64),
    /// Jitter strength `s`.
    pub jitter_strength: f64,
    pub grayscale_p: f64,
    pub blur_sigma: (f64, f64),
    pub solarize_p: f64,
    pub solarize_threshold: f64,
}

impl Default for AugmentPolicy {
    fn default() -> Self {
        Self {
            flip_p: 0.5,
            crop_p: 0.5,
            crop_area: (0.08, 1.0),
            crop_aspect: (3.0 / 4.0, 4.0 / 3.0),
            jitter_strength: 0.5,
            grayscale_p: 0.2,
            blur_sigma: (0.1, 2.0),
            solarize_p: 0.2,
            solarize_threshold: 0.5,
        }
    }
}

/// Which steps of [`AugmentPolicy`] fired for one image.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct AppliedOps {
    pub flip: bool,
    pub crop: bool,
    pub jitter: bool,
    pub grayscale: bool,
    pub blur: bool,
    pub solarize: bool,
}

/// Blur kernel width for side `l`, or `None` when blur is off (`l ≤ 32`).
pub fn blur_kernel_size(side: usize) -> Option<usize> {
    if side <= 32 {
        return None;
    }
    let mut k = side / 10 + side % 2;
    if k % 2 == 0 {
        k += 1;
    }
    Some(k)
}

impl AugmentPolicy {
    pub fn validate(&self) -> Result<()> {
        for (name, p) in [
            ("flip_p", self.flip_p),
            ("crop_p", self.crop_p),
            ("grayscale_p", self.grayscale_p),
            ("solarize_p", self.solarize_p),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::domain(format!("{name} must lie in [0, 1], got {p}")));
            }
        }
        let (a0, a1) = self.crop_area;
        if !(0.0 < a0 && a0 <= a1 && a1 <= 1.0) {
            return Err(Error::domain("crop_area must satisfy 0 < lo <= hi <= 1"));
        }
        let (r0, r1) = self.crop_aspect;
        if !(0.0 < r0 && r0 <= r1) {
            return Err(Error::domain("crop_aspect must satisfy 0 < lo <= hi"));
        }
        if !(0.0..=1.25).contains(&self.jitter_strength) {
            return Err(Error::domain("jitter_strength must lie in [0, 1.25]"));
        }
        let (s0, s1) = self.blur_sigma;
        if !(0.0 < s0 && s0 <= s1) {
            return Err(Error::domain("blur_sigma must satisfy 0 < lo <= hi"));
        }
        Ok(())
    }

    /// A policy that never changes its input.
    pub fn identity() -> Self {
        Self {
            flip_p: 0.0,
            crop_p: 0.0,
            jitter_strength: 0.0,
            grayscale_p: 0.0,
            solarize_p: 0.0,
            ..Self::default()
        }
    }
}

fn luma(r: f64, g: f64, b: f64) -> f64 {
    0.299 * r + 0.587 * g + 0.114 * b
}

/// Planes `[R, G, B]`, each `side × side`, row-major.
struct Planes {
    side: usize,
    data: Vec<f64>,
}

impl Planes {
    fn at(&self, c: usize, y: usize, x: usize) -> f64 {
        self.data[(c * self.side + y) * self.side + x]
    }

    fn set(&mut self, c: usize, y: usize, x: usize, v: f64) {
        self.data[(c * self.side + y) * self.side + x] = v;
    }

    fn pixel_count(&self) -> usize {
        self.side * self.side
    }

    fn rgb(&self, p: usize) -> (f64, f64, f64) {
        let n = self.pixel_count();
        (self.data[p], self.data[n + p], self.data[2 * n + p])
    }

    fn set_rgb(&mut self, p: usize, (r, g, b): (f64, f64, f64)) {
        let n = self.pixel_count();
        self.data[p] = r;
        self.data[n + p] = g;
        self.data[2 * n + p] = b;
    }

    fn clamp(&mut self) {
        for v in &mut self.data {
            *v = v.clamp(0.0, 1.0);
        }
    }

    fn flip_horizontal(&mut self) {
        let l = self.side;
        for c in 0..3 {
            for y in 0..l {
                let start = (c * l + y) * l;
                self.data[start..start + l].reverse();
            }
        }
    }

    fn bilinear(&self, c: usize, y: f64, x: f64) -> f64 {
        let max = (self.side - 1) as f64;
        let (y, x) = (y.clamp(0.0, max), x.clamp(0.0, max));
        let (y0, x0) = (y.floor() as usize, x.floor() as usize);
        let (y1, x1) = ((y0 + 1).min(self.side - 1), (x0 + 1).min(self.side - 1));
        let (fy, fx) = (y - y0 as f64, x - x0 as f64);
        let top = self.at(c, y0, x0) * (1.0 - fx) + self.at(c, y0, x1) * fx;
        let bottom = self.at(c, y1, x0) * (1.0 - fx) + self.at(c, y1, x1) * fx;
        top * (1.0 - fy) + bottom * fy
    }

    fn resized_crop(&self, top: f64, left: f64, h: f64, w: f64) -> Planes {
        let l = self.side;
        let mut out = Planes {
            side: l,
            data: vec![0.0; self.data.len()],
        };
        for c in 0..3 {
            for i in 0..l {
                let sy = top + (i as f64 + 0.5) * h / l as f64 - 0.5;
                for j in 0..l {
                    let sx = left + (j as f64 + 0.5) * w / l as f64 - 0.5;
                    out.set(c, i, j, self.bilinear(c, sy, sx));
                }
            }
        }
        out
    }

    fn gaussian_blur(&mut self, kernel: usize, sigma: f64) {
        let half = (kernel / 2) as isize;
        let weights: Vec<f64> = (-half..=half)
            .map(|d| (-(d * d) as f64 / (2.0 * sigma * sigma)).exp())
            .collect();
        let total: f64 = weights.iter().sum();
        let weights: Vec<f64> = weights.iter().map(|w| w / total).collect();
        let l = self.side as isize;
        let idx = |v: isize| v.clamp(0, l - 1) as usize;
        for c in 0..3 {
            let mut tmp = vec![0.0; self.pixel_count()];
            for y in 0..l {
                for x in 0..l {
                    tmp[(y * l + x) as usize] = (-half..=half)
                        .map(|d| weights[(d + half) as usize] * self.at(c, y as usize, idx(x + d)))
                        .sum();
                }
            }
            for y in 0..l {
                for x in 0..l {
                    let v = (-half..=half)
                        .map(|d| {
                            weights[(d + half) as usize] * tmp[idx(y + d) * l as usize + x as usize]
                        })
                        .sum();
                    self.set(c, y as usize, x as usize, v);
                }
            }
        }
    }
}

fn rgb_to_hsv((r, g, b): (f64, f64, f64)) -> (f64, f64, f64) {
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let delta = max - min;
    let h = if delta == 0.0 {
        0.0
    } else if max == r {
        ((g - b) / delta).rem_euclid(6.0) / 6.0
    } else if max == g {
        ((b - r) / delta + 2.0) / 6.0
    } else {
        ((r - g) / delta + 4.0) / 6.0
    };
    let s = if max == 0.0 { 0.0 } else { delta / max };
    (h, s, max)
}

fn hsv_to_rgb((h, s, v): (f64, f64, f64)) -> (f64, f64, f64) {
    let h6 = h.rem_euclid(1.0) * 6.0;
    let sector = (h6.floor() as usize).min(5);
    let f = h6 - sector as f64;
    let p = v * (1.0 - s);
    let q = v * (1.0 - s * f);
    let t = v * (1.0 - s * (1.0 - f));
    match sector {
        0 => (v, t, p),
        1 => (q, v, p),
        2 => (p, v, t),
        3 => (p, q, v),
        4 => (t, p, v),
        _ => (v, p, q),
    }
}

fn color_jitter(planes: &mut Planes, rng: &mut Rng, s: f64) -> bool {
    let brightness = 1.0 + rng.uniform_range(-0.8 * s, 0.8 * s);
    let contrast = 1.0 + rng.uniform_range(-0.8 * s, 0.8 * s);
    let saturation = 1.0 + rng.uniform_range(-0.8 * s, 0.8 * s);
    let hue = rng.uniform_range(-0.2 * s, 0.2 * s);
    let mut changed = false;
    let n = planes.pixel_count();

    if brightness != 1.0 {
        for v in &mut planes.data {
            *v *= brightness;
        }
        planes.clamp();
        changed = true;
    }
    if contrast != 1.0 {
        let mean = (0..n)
            .map(|p| {
                let (r, g, b) = planes.rgb(p);
                luma(r, g, b)
            })
            .sum::<f64>()
            / n as f64;
        for v in &mut planes.data {
            *v = (*v - mean) * contrast + mean;
        }
        planes.clamp();
        changed = true;
    }
    if saturation != 1.0 {
        for p in 0..n {
            let (r, g, b) = planes.rgb(p);
            let y = luma(r, g, b);
            planes.set_rgb(
                p,
                (
                    (r - y) * saturation + y,
                    (g - y) * saturation + y,
                    (b - y) * saturation + y,
                ),
            );
        }
        planes.clamp();
        changed = true;
    }
    if hue != 0.0 {
        for p in 0..n {
            let (h, sat, v) = rgb_to_hsv(planes.rgb(p));
            planes.set_rgb(p, hsv_to_rgb((h + hue, sat, v)));
        }
        planes.clamp();
        changed = true;
    }
    changed
}

/// Applies `policy` and reports which steps fired.
pub fn augment_image_traced(
    img: &ImageSample,
    policy: &AugmentPolicy,
    rng: &mut Rng,
) -> Result<(ImageSample, AppliedOps)> {
    policy.validate()?;
    let l = img.side;
    let mut planes = Planes {
        side: l,
        data: img.pixels.clone(),
    };
    let mut ops = AppliedOps::default();

    if rng.bernoulli(policy.flip_p) {
        planes.flip_horizontal();
        ops.flip = true;
    }
    if rng.bernoulli(policy.crop_p) {
        let full = (l * l) as f64;
        let (a0, a1) = policy.crop_area;
        let (r0, r1) = policy.crop_aspect;
        let mut window = (0.0, 0.0, l as f64, l as f64);
        for _ in 0..10 {
            let area = full * rng.uniform_range(a0, a1);
            let aspect = rng.uniform_range(r0, r1);
            let w = (area * aspect).sqrt();
            let h = (area / aspect).sqrt();
            if w <= l as f64 && h <= l as f64 {
                let top = rng.uniform_range(0.0, l as f64 - h);
                let left = rng.uniform_range(0.0, l as f64 - w);
                window = (top, left, h, w);
                break;
            }
        }
        planes = planes.resized_crop(window.0, window.1, window.2, window.3);
        ops.crop = true;
    }
    ops.jitter = color_jitter(&mut planes, rng, policy.jitter_strength);
    if rng.bernoulli(policy.grayscale_p) {
        for p in 0..planes.pixel_count() {
            let (r, g, b) = planes.rgb(p);
            let y = luma(r, g, b);
            planes.set_rgb(p, (y, y, y));
        }
        ops.grayscale = true;
    }
    if let Some(kernel) = blur_kernel_size(l) {
        let sigma = rng.uniform_range(policy.blur_sigma.0, policy.blur_sigma.1);
        planes.gaussian_blur(kernel, sigma);
        ops.blur = true;
    }
    if rng.bernoulli(policy.solarize_p) {
        for v in &mut planes.data {
            if *v >= policy.solarize_threshold {
                *v = 1.0 - *v;
            }
        }
        ops.solarize = true;
    }
    planes.clamp();
    Ok((
        ImageSample {
            side: l,
            pixels: planes.data,
            label: img.label,
        },
        ops,
    ))
}

pub fn augment_image(
    img: &ImageSample,
    policy: &AugmentPolicy,
    rng: &mut Rng,
) -> Result<ImageSample> {
    augment_image_traced(img, policy, rng).map(|(out, _)| out)
}

impl Augmenter for AugmentPolicy {
    fn augment(&self, x: &[f64], rng: &mut Rng) -> Result<Vec<f64>> {
        let side = ((x.len() / 3) as f64).sqrt().round() as usize;
        if 3 * side * side != x.len() {
            return Err(Error::Dimension {
                context: "flattened RGB image",
                expected: 3 * side * side,
                actual: x.len(),
            });
        }
        let img = ImageSample::new(side, x.to_vec(), 0)?;
        augment_image(&img, self, rng).map(|i| i.pixels)
    }
}

pub const CIFAR_SIDE: usize = 32;
pub const CIFAR_RECORD_BYTES: usize = 1 + 3 * CIFAR_SIDE * CIFAR_SIDE;

/// Parses CIFAR-10 binary records, at most `max_records` of them.
pub fn parse_cifar10(bytes: &[u8], max_records: Option<usize>) -> Result<Vec<ImageSample>> {
    let limit = max_records.unwrap_or(usize::MAX);
    let mut out = Vec::new();
    let mut offset = 0usize;
    while offset < bytes.len() && out.len() < limit {
        let Some(record) = bytes.get(offset..offset + CIFAR_RECORD_BYTES) else {
            return Err(Error::Format {
                offset: offset as u64,
                message: format!(
                    "truncated record: {} of {CIFAR_RECORD_BYTES} bytes",
                    bytes.len() - offset
                ),
            });
        };
        let label = record[0] as usize;
        if label > 9 {
            return Err(Error::Format {
                offset: offset as u64,
                message: format!("label {label} is outside 0..=9"),
            });
        }
        let pixels = record[1..].iter().map(|&b| b as f64 / 255.0).collect();
        out.push(ImageSample {
            side: CIFAR_SIDE,
            pixels,
            label,
        });
        offset += CIFAR_RECORD_BYTES;
    }
    Ok(out)
}

pub fn load_cifar10_binary(path: &Path, max_records: Option<usize>) -> Result<Vec<ImageSample>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_cifar10(&bytes, max_records)
}

/// Encodes 32×32 images as CIFAR-10 records, rounding pixels to bytes.
pub fn encode_cifar10(images: &[ImageSample]) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(images.len() * CIFAR_RECORD_BYTES);
    for img in images {
        if img.side != CIFAR_SIDE || img.label > 9 {
            return Err(Error::domain(
                "CIFAR-10 records need 32x32 images with labels 0..=9",
            ));
        }
        out.push(img.label as u8);
        out.extend(img.pixels.iter().map(|&v| (v * 255.0).round() as u8));
    }
    Ok(out)
}

pub fn write_cifar10_binary(path: &Path, images: &[ImageSample]) -> Result<()> {
    std::fs::write(path, encode_cifar10(images)?).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(sigma: f64) -> VectorDatasetSpec {
        VectorDatasetSpec {
            num_classes: 4,
            samples_per_class: 8,
            ambient_dim: 6,
            class_separation: 5.0,
            within_class_sigma: sigma,
            seed: 11,
        }
    }

    fn checker(side: usize) -> ImageSample {
        let pixels = (0..3 * side * side)
            .map(|i| ((i * 37) % 101) as f64 / 100.0)
            .collect();
        ImageSample::new(side, pixels, 3).unwrap()
    }

    #[test]
    fn simplex_means_are_equidistant() {
        for c in 1..=6 {
            let s = VectorDatasetSpec {
                num_classes: c,
                ambient_dim: 8,
                class_separation: 3.0,
                ..spec(1.0)
            };
            let means = s.class_means().unwrap();
            for i in 0..c {
                for j in 0..i {
                    let d: f64 = means
                        .row(i)
                        .iter()
                        .zip(means.row(j))
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum::<f64>()
                        .sqrt();
                    assert!((d - 3.0).abs() < 1e-12, "{c} {i} {j} {d}");
                }
            }
        }
        let tight = VectorDatasetSpec {
            num_classes: 4,
            ambient_dim: 3,
            ..spec(1.0)
        };
        assert!(tight.class_means().is_ok());
        let too_small = VectorDatasetSpec {
            num_classes: 5,
            ambient_dim: 3,
            ..spec(1.0)
        };
        assert!(make_vector_dataset(&too_small).is_err());
    }

    #[test]
    fn zero_sigma_samples_sit_on_means() {
        let s = spec(0.0);
        let data = make_vector_dataset(&s).unwrap();
        let means = s.class_means().unwrap();
        for (row, &label) in data.features.iter_rows().zip(&data.labels) {
            assert_eq!(row, means.row(label));
        }
        assert_eq!(data.len(), 32);
    }

    #[test]
    fn dataset_is_deterministic() {
        assert_eq!(
            make_vector_dataset(&spec(1.0)).unwrap(),
            make_vector_dataset(&spec(1.0)).unwrap()
        );
    }

    #[test]
    fn vector_augment_edge_cases() {
        let x = vec![1.0, -2.0, 3.5];
        let mut rng = Rng::new(1, 0);
        let none = VectorAugment {
            noise_sigma: 0.0,
            scale_jitter: 0.0,
            dropout_p: 0.0,
        };
        assert_eq!(augment_vector(&x, &mut rng, &none).unwrap(), x);
        let drop_all = VectorAugment {
            dropout_p: 1.0,
            ..VectorAugment::default()
        };
        assert!(augment_vector(&x, &mut rng, &drop_all)
            .unwrap()
            .iter()
            .all(|&v| v == 0.0));
        let bad = VectorAugment {
            dropout_p: 1.5,
            ..none
        };
        assert!(augment_vector(&x, &mut rng, &bad).is_err());
    }

    #[test]
    fn blur_kernel_rule() {
        assert_eq!(blur_kernel_size(32), None);
        assert_eq!(blur_kernel_size(16), None);
        assert_eq!(blur_kernel_size(96), Some(9));
        assert_eq!(blur_kernel_size(64), Some(7));
        assert_eq!(blur_kernel_size(33), Some(5));
        assert_eq!(blur_kernel_size(40), Some(5));
    }

    #[test]
    fn blur_never_fires_at_32() {
        let img = checker(32);
        let policy = AugmentPolicy::default();
        for seed in 0..200 {
            let (_, ops) = augment_image_traced(&img, &policy, &mut Rng::new(seed, 0)).unwrap();
            assert!(!ops.blur);
        }
        let big = checker(40);
        let (_, ops) = augment_image_traced(&big, &policy, &mut Rng::new(0, 0)).unwrap();
        assert!(ops.blur);
    }

    #[test]
    fn zero_strength_jitter_is_identity() {
        let img = checker(16);
        let policy = AugmentPolicy::identity();
        for seed in 0..20 {
            let (out, ops) = augment_image_traced(&img, &policy, &mut Rng::new(seed, 0)).unwrap();
            assert_eq!(out, img);
            assert_eq!(ops, AppliedOps::default());
        }
    }

    #[test]
    fn forced_solarize_inverts_bright_pixels() {
        let img = ImageSample::uniform(8, 0.75, 0).unwrap();
        let policy = AugmentPolicy {
            solarize_p: 1.0,
            ..AugmentPolicy::identity()
        };
        let out = augment_image(&img, &policy, &mut Rng::new(0, 0)).unwrap();
        assert!(out.pixels().iter().all(|&v| v == 0.25));
    }

    #[test]
    fn forced_grayscale_equalizes_channels() {
        let img = checker(8);
        let policy = AugmentPolicy {
            grayscale_p: 1.0,
            ..AugmentPolicy::default()
        };
        for seed in 0..10 {
            let out = augment_image(&img, &policy, &mut Rng::new(seed, 0)).unwrap();
            for y in 0..8 {
                for x in 0..8 {
                    assert_eq!(out.get(0, y, x), out.get(1, y, x));
                    assert_eq!(out.get(1, y, x), out.get(2, y, x));
                }
            }
        }
    }

    #[test]
    fn forced_flip_mirrors_rows() {
        let img = checker(4);
        let policy = AugmentPolicy {
            flip_p: 1.0,
            ..AugmentPolicy::identity()
        };
        let out = augment_image(&img, &policy, &mut Rng::new(0, 0)).unwrap();
        for c in 0..3 {
            for y in 0..4 {
                for x in 0..4 {
                    assert_eq!(out.get(c, y, x), img.get(c, y, 3 - x));
                }
            }
        }
    }

    #[test]
    fn full_window_crop_is_identity() {
        let img = checker(8);
        let policy = AugmentPolicy {
            crop_p: 1.0,
            crop_area: (1.0, 1.0),
            crop_aspect: (1.0, 1.0),
            ..AugmentPolicy::identity()
        };
        let out = augment_image(&img, &policy, &mut Rng::new(3, 0)).unwrap();
        for (a, b) in out.pixels().iter().zip(img.pixels()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn hsv_round_trip() {
        let mut rng = Rng::new(8, 0);
        for _ in 0..1000 {
            let rgb = (rng.uniform(), rng.uniform(), rng.uniform());
            let back = hsv_to_rgb(rgb_to_hsv(rgb));
            assert!((back.0 - rgb.0).abs() < 1e-12);
            assert!((back.1 - rgb.1).abs() < 1e-12);
            assert!((back.2 - rgb.2).abs() < 1e-12);
        }
    }

    #[test]
    fn cifar_parse_edge_cases() {
        assert!(parse_cifar10(&[], None).unwrap().is_empty());
        let mut record = vec![255u8; CIFAR_RECORD_BYTES];
        record[0] = 7;
        let one = parse_cifar10(&record, None).unwrap();
        assert_eq!(one.len(), 1);
        assert_eq!(one[0].label, 7);
        assert!(one[0].pixels().iter().all(|&v| v == 1.0));

        let err = parse_cifar10(&record[..3072], None).unwrap_err();
        assert!(matches!(err, Error::Format { offset: 0, .. }));

        let mut two = record.clone();
        two.extend_from_slice(&record[..100]);
        assert!(matches!(
            parse_cifar10(&two, None).unwrap_err(),
            Error::Format { offset: 3073, .. }
        ));
        assert_eq!(parse_cifar10(&two, Some(1)).unwrap().len(), 1);

        record[0] = 10;
        assert!(parse_cifar10(&record, None).is_err());
    }
}
