//! Textured ground plane used as simulation ground truth.

use image::RgbImage;
use thiserror::Error;

use crate::utm::UtmPoint;

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("meters_per_texel must be positive, got {0}")]
    BadTexelSize(f64),
    #[error("texture must be non-empty")]
    EmptyTexture,
}

/// Flat textured ground plane. Texel (0, 0) sits at the scene origin (its
/// north-west corner); texture columns run east, rows run south. The plane
/// lies at `origin.altitude_m`.
#[derive(Debug, Clone)]
pub struct ScenePlane {
    pub texture: RgbImage,
    pub meters_per_texel: f64,
    /// UTM position of texel (0, 0) center; altitude is the ground altitude.
    pub origin: UtmPoint,
}

impl ScenePlane {
    pub fn new(
        texture: RgbImage,
        meters_per_texel: f64,
        origin: UtmPoint,
    ) -> Result<Self, SceneError> {
        if !(meters_per_texel > 0.0) {
            return Err(SceneError::BadTexelSize(meters_per_texel));
        }
        if texture.width() == 0 || texture.height() == 0 {
            return Err(SceneError::EmptyTexture);
        }
        Ok(Self {
            texture,
            meters_per_texel,
            origin,
        })
    }

    pub fn ground_alt_m(&self) -> f64 {
        self.origin.altitude_m
    }

    pub fn width_m(&self) -> f64 {
        self.texture.width() as f64 * self.meters_per_texel
    }

    pub fn height_m(&self) -> f64 {
        self.texture.height() as f64 * self.meters_per_texel
    }

    /// Bilinear texture sample at a ground position, clamped to the edge.
    pub fn sample(&self, easting_m: f64, northing_m: f64) -> [f64; 3] {
        let tx = (easting_m - self.origin.easting_m) / self.meters_per_texel;
        let ty = (self.origin.northing_m - northing_m) / self.meters_per_texel;
        let w = self.texture.width();
        let h = self.texture.height();
        let tx = tx.clamp(0.0, (w - 1) as f64);
        let ty = ty.clamp(0.0, (h - 1) as f64);
        let x0 = tx.floor() as u32;
        let y0 = ty.floor() as u32;
        let x1 = (x0 + 1).min(w - 1);
        let y1 = (y0 + 1).min(h - 1);
        let fx = tx - x0 as f64;
        let fy = ty - y0 as f64;
        let p00 = self.texture.get_pixel(x0, y0).0;
        let p10 = self.texture.get_pixel(x1, y0).0;
        let p01 = self.texture.get_pixel(x0, y1).0;
        let p11 = self.texture.get_pixel(x1, y1).0;
        let mut out = [0.0; 3];
        for c in 0..3 {
            let top = p00[c] as f64 * (1.0 - fx) + p10[c] as f64 * fx;
            let bot = p01[c] as f64 * (1.0 - fx) + p11[c] as f64 * fx;
            out[c] = top * (1.0 - fy) + bot * fy;
        }
        out
    }

    /// BT.601 luma of a ground sample.
    pub fn luminance(&self, easting_m: f64, northing_m: f64) -> f64 {
        let [r, g, b] = self.sample(easting_m, northing_m);
        0.299 * r + 0.587 * g + 0.114 * b
    }
}

/// Default synthetic texture: checkerboard plus a low-frequency gradient,
/// giving both sharp edges (event sources) and smooth regions.
pub fn builtin_texture(size: u32, square_px: u32) -> RgbImage {
    let mut img = RgbImage::new(size, size);
    for (x, y, p) in img.enumerate_pixels_mut() {
        let check = ((x / square_px) + (y / square_px)) % 2 == 0;
        let base: [f64; 3] = if check {
            [190.0, 170.0, 140.0]
        } else {
            [70.0, 90.0, 110.0]
        };
        // low-frequency diagonal gradient, +-30 around the base
        let g = 30.0
            * ((x as f64 / size as f64) * std::f64::consts::PI).sin()
            * ((y as f64 / size as f64) * std::f64::consts::PI).sin();
        for c in 0..3 {
            p.0[c] = (base[c] + g).round().clamp(0.0, 255.0) as u8;
        }
    }
    img
}
