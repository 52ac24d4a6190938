use std::f64::consts::PI;

use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use super::raster::{rasterize, star_polygon, Figure, ShapeKind};
use super::ShapeImage;
use crate::error::{EitError, Result};
use crate::rng::{self, Rng};

/// Generator parameters. Locations and sizes are in pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetConfig {
    pub total: usize,
    /// Upper bound on objects per image; each image draws its count from
    /// `U{1, ..., objects_per_image}` (0 gives empty images).
    pub objects_per_image: usize,
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
    pub l_min: f64,
    pub l_max: f64,
    pub scale: f64,
    pub mu_high: f64,
    pub mu_low: f64,
    pub mu_bkg: f64,
    pub s_high: f64,
    pub s_low: f64,
    pub s_bkg: f64,
    pub image_size: usize,
    pub seed: u64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self::for_size(64)
    }
}

impl DatasetConfig {
    /// Defaults with location and size limits proportional to `side`.
    pub fn for_size(side: usize) -> Self {
        let s = side as f64;
        Self {
            total: 2000,
            objects_per_image: 4,
            x_min: 0.15 * s,
            x_max: 0.85 * s,
            y_min: 0.15 * s,
            y_max: 0.85 * s,
            l_min: 0.12 * s,
            l_max: 0.4 * s,
            scale: 4.0,
            mu_high: 3.0,
            mu_low: 0.5,
            mu_bkg: 2.0,
            s_high: 0.3,
            s_low: 0.3,
            s_bkg: 0.3,
            image_size: side,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(EitError::Validation(msg));
        if self.image_size < 16 {
            return bad(format!("image size {} is below 16", self.image_size));
        }
        if !(self.x_min <= self.x_max && self.y_min <= self.y_max) {
            return bad("location limits are not ordered".into());
        }
        if !(0.0 <= self.l_min && self.l_min <= self.l_max) {
            return bad(format!("size limits ({}, {}) are not ordered", self.l_min, self.l_max));
        }
        if !(self.scale > 0.0) {
            return bad(format!("scale factor must be positive, got {}", self.scale));
        }
        for (name, s) in [("s_high", self.s_high), ("s_low", self.s_low), ("s_bkg", self.s_bkg)] {
            if !(s >= 0.0) || !s.is_finite() {
                return bad(format!("{name} must be a non-negative finite number, got {s}"));
            }
        }
        Ok(())
    }

    /// Sets one field from its [`echo`](Self::echo) spelling.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn parse<V: std::str::FromStr>(key: &str, value: &str) -> Result<V> {
            value
                .trim()
                .parse()
                .map_err(|_| EitError::Domain(format!("invalid value {value:?} for {key}")))
        }
        match key {
            "total" => self.total = parse(key, value)?,
            "objects_per_image" => self.objects_per_image = parse(key, value)?,
            "x_min" => self.x_min = parse(key, value)?,
            "x_max" => self.x_max = parse(key, value)?,
            "y_min" => self.y_min = parse(key, value)?,
            "y_max" => self.y_max = parse(key, value)?,
            "l_min" => self.l_min = parse(key, value)?,
            "l_max" => self.l_max = parse(key, value)?,
            "scale" => self.scale = parse(key, value)?,
            "mu_high" => self.mu_high = parse(key, value)?,
            "mu_low" => self.mu_low = parse(key, value)?,
            "mu_bkg" => self.mu_bkg = parse(key, value)?,
            "s_high" => self.s_high = parse(key, value)?,
            "s_low" => self.s_low = parse(key, value)?,
            "s_bkg" => self.s_bkg = parse(key, value)?,
            "image_size" => self.image_size = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            _ => return Err(EitError::Domain(format!("unknown dataset key {key:?}"))),
        }
        Ok(())
    }

    /// `key=value` lines describing every field.
    pub fn echo(&self) -> String {
        format!(
            "total={}\nobjects_per_image={}\nx_min={}\nx_max={}\ny_min={}\ny_max={}\nl_min={}\nl_max={}\n\
             scale={}\nmu_high={}\nmu_low={}\nmu_bkg={}\ns_high={}\ns_low={}\ns_bkg={}\nimage_size={}\nseed={}\n",
            self.total,
            self.objects_per_image,
            self.x_min,
            self.x_max,
            self.y_min,
            self.y_max,
            self.l_min,
            self.l_max,
            self.scale,
            self.mu_high,
            self.mu_low,
            self.mu_bkg,
            self.s_high,
            self.s_low,
            self.s_bkg,
            self.image_size,
            self.seed
        )
    }
}

fn abs_normal(rng: &mut Rng, mean: f64, sd: f64) -> f64 {
    if sd == 0.0 {
        return mean.abs();
    }
    Normal::new(mean, sd).expect("validated sd").sample(rng).abs()
}

fn uniform(rng: &mut Rng, lo: f64, hi: f64) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.gen_range(lo..hi)
    }
}

/// `n` angles around a circle, each displaced by up to `jitter` of the spacing.
fn jittered_angles(rng: &mut Rng, n: usize, jitter: f64) -> Vec<f64> {
    let step = 2.0 * PI / n as f64;
    let phase = rng.gen_range(0.0..step);
    (0..n).map(|k| phase + step * (k as f64 + rng.gen_range(-jitter..jitter))).collect()
}

fn random_figure(rng: &mut Rng, kind: ShapeKind, center: [f64; 2], size: f64) -> Figure {
    let half = 0.5 * size;
    match kind {
        ShapeKind::Circle => Figure::Circle { center, radius: half },
        ShapeKind::Rectangle => Figure::Rectangle {
            center,
            width: size,
            height: size * rng.gen_range(0.4..1.0),
            angle: rng.gen_range(0.0..PI),
        },
        ShapeKind::Triangle => {
            let mut angles = jittered_angles(rng, 3, 0.35);
            let radii: Vec<f64> = (0..3).map(|_| half * rng.gen_range(0.6..1.0)).collect();
            let v = star_polygon(center, &mut angles, &radii);
            Figure::Triangle([v[0], v[1], v[2]])
        }
        ShapeKind::Polygon => {
            let n = rng.gen_range(4..=8);
            let mut angles = jittered_angles(rng, n, 0.4);
            let radii: Vec<f64> = (0..n).map(|_| half * rng.gen_range(0.5..1.0)).collect();
            Figure::Polygon(star_polygon(center, &mut angles, &radii))
        }
        ShapeKind::Bezier => {
            let n = rng.gen_range(5..=8);
            let mut angles = jittered_angles(rng, n, 0.3);
            let radii: Vec<f64> = (0..n).map(|_| half * rng.gen_range(0.5..1.0)).collect();
            Figure::Bezier(star_polygon(center, &mut angles, &radii))
        }
    }
}

/// One image following the generator algorithm, normalized by
/// `(img / A) * 2 - 1` and clamped to `[-1, 1]`.
pub fn generate_sample(config: &DatasetConfig, rng: &mut Rng) -> ShapeImage {
    let bkg = abs_normal(rng, config.mu_bkg, config.s_bkg);
    let mut img = ShapeImage::filled(config.image_size, bkg as f32);
    let count = if config.objects_per_image == 0 { 0 } else { rng.gen_range(1..=config.objects_per_image) };
    for _ in 0..count {
        let kind = ShapeKind::ALL[rng.gen_range(0..ShapeKind::ALL.len())];
        let high = rng.gen_bool(0.5);
        let center = [uniform(rng, config.x_min, config.x_max), uniform(rng, config.y_min, config.y_max)];
        let size = uniform(rng, config.l_min, config.l_max);
        let value = if high {
            abs_normal(rng, config.mu_high, config.s_high)
        } else {
            abs_normal(rng, config.mu_low, config.s_low)
        };
        let figure = random_figure(rng, kind, center, size);
        rasterize(&figure, value as f32, &mut img);
    }
    let a = config.scale as f32;
    for v in &mut img.data {
        *v = ((*v / a) * 2.0 - 1.0).clamp(-1.0, 1.0);
    }
    img
}

/// Image `index` of the corpus described by `config`; independent of any
/// other index.
pub fn sample_for_index(config: &DatasetConfig, index: u64) -> ShapeImage {
    let mut rng = rng::derive(config.seed, rng::stream::SHAPES, index);
    generate_sample(config, &mut rng)
}

/// Images `0..total` in memory.
pub fn generate_images(config: &DatasetConfig) -> Result<Vec<ShapeImage>> {
    config.validate()?;
    Ok((0..config.total as u64).into_par_iter().map(|i| sample_for_index(config, i)).collect())
}
