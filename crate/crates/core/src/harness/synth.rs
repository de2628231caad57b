//! Synthetic texture corpora for desk-scale experiments.
//!
//! Each class is a texture family (an oriented sinusoidal grating or a
//! rotated checkerboard). Every image draws its own phase, small
//! orientation and frequency jitter, contrast, brightness and additive
//! Gaussian noise from a seeded generator.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::{HarnessError, Result};
use crate::corpus::{save_image, DatasetManifest, Image, ManifestEntry};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Texture {
    /// Sinusoid varying along `angle_deg` with the given period in pixels.
    Grating { angle_deg: f64, period: f64 },
    /// Checkerboard with square cells of `cell` pixels rotated by `angle_deg`.
    Checker { angle_deg: f64, cell: f64 },
}

impl Texture {
    fn jittered(&self, angle_jitter: f64, scale: f64) -> Texture {
        match *self {
            Texture::Grating { angle_deg, period } => Texture::Grating {
                angle_deg: angle_deg + angle_jitter,
                period: period * scale,
            },
            Texture::Checker { angle_deg, cell } => Texture::Checker {
                angle_deg: angle_deg + angle_jitter,
                cell: cell * scale,
            },
        }
    }

    /// Pattern value in [-1, 1] at pixel (x, y) with offsets `(ou, ov)`.
    fn value(&self, x: f64, y: f64, ou: f64, ov: f64) -> f64 {
        match *self {
            Texture::Grating { angle_deg, period } => {
                let (s, c) = angle_deg.to_radians().sin_cos();
                (2.0 * PI * (x * c + y * s) / period + ou).sin()
            }
            Texture::Checker { angle_deg, cell } => {
                let (s, c) = angle_deg.to_radians().sin_cos();
                let u = x * c + y * s + ou;
                let v = -x * s + y * c + ov;
                let p = (PI * u / cell).sin() * (PI * v / cell).sin();
                if p >= 0.0 {
                    1.0
                } else {
                    -1.0
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TextureClass {
    pub name: String,
    pub texture: Texture,
}

impl TextureClass {
    pub fn new(name: impl Into<String>, texture: Texture) -> Self {
        TextureClass {
            name: name.into(),
            texture,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub classes: Vec<TextureClass>,
    pub images_per_class: usize,
    pub width: usize,
    pub height: usize,
    /// Uniform orientation jitter range in degrees (±).
    pub angle_jitter_deg: f64,
    /// Uniform relative period/cell-size jitter (±).
    pub scale_jitter: f64,
    pub contrast: (f64, f64),
    pub brightness: (f64, f64),
    pub noise_sd: f64,
    pub seed: u64,
}

impl SynthConfig {
    fn with_classes(classes: Vec<TextureClass>, seed: u64) -> Self {
        SynthConfig {
            classes,
            images_per_class: 60,
            width: 64,
            height: 64,
            angle_jitter_deg: 10.0,
            scale_jitter: 0.15,
            contrast: (25.0, 70.0),
            brightness: (90.0, 165.0),
            noise_sd: 60.0,
            seed,
        }
    }
}

fn grating(name: &str, angle_deg: f64, period: f64) -> TextureClass {
    TextureClass::new(name, Texture::Grating { angle_deg, period })
}

fn checker(name: &str, angle_deg: f64, cell: f64) -> TextureClass {
    TextureClass::new(name, Texture::Checker { angle_deg, cell })
}

/// Eight texture families spanning several orientations and scales.
pub fn diverse_families() -> Vec<TextureClass> {
    vec![
        grating("grating_a000_p6", 0.0, 6.0),
        grating("grating_a060_p6", 60.0, 6.0),
        grating("grating_a120_p6", 120.0, 6.0),
        grating("grating_a030_p12", 30.0, 12.0),
        grating("grating_a090_p12", 90.0, 12.0),
        grating("grating_a150_p12", 150.0, 12.0),
        checker("checker_a000_c4", 0.0, 4.0),
        checker("checker_a045_c8", 45.0, 8.0),
    ]
}

/// Three of the [`diverse_families`] with shifted orientation and scale.
pub fn narrow_families() -> Vec<TextureClass> {
    vec![
        grating("grating_a010_p7", 10.0, 7.0),
        grating("grating_a100_p10", 100.0, 10.0),
        checker("checker_a015_c5", 15.0, 5.0),
    ]
}

/// Corpus A: eight diverse families, 60 images each.
pub fn diverse_config(seed: u64) -> SynthConfig {
    SynthConfig::with_classes(diverse_families(), seed)
}

/// Corpus B: three re-parameterized families, 60 images each.
pub fn narrow_config(seed: u64) -> SynthConfig {
    SynthConfig::with_classes(narrow_families(), seed)
}

fn uniform(rng: &mut impl Rng, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.random_range(lo..hi)
    } else {
        lo
    }
}

/// Renders one image of `texture` with per-image randomness from `rng`.
pub fn render(texture: &Texture, cfg: &SynthConfig, rng: &mut impl Rng) -> Result<Image> {
    let jitter = uniform(rng, (-cfg.angle_jitter_deg, cfg.angle_jitter_deg));
    let scale = 1.0 + uniform(rng, (-cfg.scale_jitter, cfg.scale_jitter));
    let tex = texture.jittered(jitter, scale);
    let ou = uniform(rng, (0.0, 100.0));
    let ov = uniform(rng, (0.0, 100.0));
    let contrast = uniform(rng, cfg.contrast);
    let brightness = uniform(rng, cfg.brightness);
    let noise = Normal::new(0.0, cfg.noise_sd.max(0.0))
        .map_err(|e| HarnessError::InvalidArgument(format!("noise: {e}")))?;
    let mut pixels = Vec::with_capacity(cfg.width * cfg.height);
    for y in 0..cfg.height {
        for x in 0..cfg.width {
            let v =
                brightness + contrast * tex.value(x as f64, y as f64, ou, ov) + noise.sample(rng);
            pixels.push(v.round().clamp(0.0, 255.0) as u8);
        }
    }
    Ok(Image::new(cfg.width, cfg.height, pixels)?)
}

/// Writes the corpus under `dir` (one subdirectory per class) together
/// with `<dir>/<name>.tsv`, and returns the manifest.
pub fn generate_corpus(cfg: &SynthConfig, dir: &Path, name: &str) -> Result<DatasetManifest> {
    if cfg.classes.is_empty() || cfg.images_per_class == 0 {
        return Err(HarnessError::InvalidArgument(
            "synthetic corpus needs at least one class and one image per class".into(),
        ));
    }
    let mut rng = rng::seeded(cfg.seed);
    let mut entries = Vec::new();
    for class in &cfg.classes {
        let class_dir = dir.join(&class.name);
        fs::create_dir_all(&class_dir).map_err(|e| HarnessError::io(&class_dir, e))?;
        for i in 0..cfg.images_per_class {
            let img = render(&class.texture, cfg, &mut rng)?;
            let rel = format!("{}/{}_{:03}.pgm", class.name, class.name, i);
            save_image(&img, &dir.join(&rel))?;
            entries.push(ManifestEntry {
                path: rel,
                label: class.name.clone(),
            });
        }
    }
    let manifest = DatasetManifest::new(name, dir, entries)?;
    manifest.write(&dir.join(format!("{name}.tsv")))?;
    Ok(manifest)
}
