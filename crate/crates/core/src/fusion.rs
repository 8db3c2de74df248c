//! RGB-to-event-geometry remapping and pansharpening fusion.

use image::RgbImage;
use nalgebra::Vector3;
use thiserror::Error;

use crate::recording::CameraCalibration;

#[derive(Debug, Error)]
pub enum FusionError {
    #[error("image dimensions {got_w}x{got_h} do not match expected {want_w}x{want_h}")]
    DimensionMismatch {
        got_w: u32,
        got_h: u32,
        want_w: u32,
        want_h: u32,
    },
    #[error("non-invertible intrinsics (fx or fy is zero)")]
    SingularIntrinsics,
    #[error("unknown fusion method {0:?}")]
    UnknownMethod(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FusionMethod {
    Mean,
    Brovey,
    Esri,
    /// Reconstruction only, replicated to three channels.
    EventsOnly,
    /// Remapped RGB passed through untouched.
    RgbCropped,
}

impl FusionMethod {
    pub fn parse(s: &str) -> Result<Self, FusionError> {
        match s {
            "mean" => Ok(FusionMethod::Mean),
            "brovey" => Ok(FusionMethod::Brovey),
            "esri" => Ok(FusionMethod::Esri),
            "events_only" => Ok(FusionMethod::EventsOnly),
            "rgb_cropped" => Ok(FusionMethod::RgbCropped),
            other => Err(FusionError::UnknownMethod(other.to_string())),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            FusionMethod::Mean => "mean",
            FusionMethod::Brovey => "brovey",
            FusionMethod::Esri => "esri",
            FusionMethod::EventsOnly => "events_only",
            FusionMethod::RgbCropped => "rgb_cropped",
        }
    }
}

/// Per-target-pixel sub-pixel source coordinates in the RGB image, or NaN for
/// rays leaving the source field of view. Target geometry is the event camera.
#[derive(Debug, Clone)]
pub struct RemapTable {
    pub width: u32,
    pub height: u32,
    /// (source x, source y) per target pixel, row-major; invalid = (NaN, NaN).
    pub coords: Vec<(f32, f32)>,
}

impl RemapTable {
    pub fn is_valid(&self, idx: usize) -> bool {
        !self.coords[idx].0.is_nan()
    }
}

/// Rotation-only remap from event-camera pixels to RGB pixels.
///
/// For each undistorted event ray the relative rotation between the rigidly
/// mounted cameras is applied, then RGB distortion and intrinsics. Translation
/// between the cameras is ignored: at tens of meters of scene depth with a
/// centimeter baseline the parallax is sub-pixel.
pub fn compute_remap(
    event_calib: &CameraCalibration,
    rgb_calib: &CameraCalibration,
) -> Result<RemapTable, FusionError> {
    if event_calib.fx == 0.0 || event_calib.fy == 0.0 || rgb_calib.fx == 0.0 || rgb_calib.fy == 0.0
    {
        return Err(FusionError::SingularIntrinsics);
    }
    // camera-to-rig on both sides: rgb <- rig <- event
    let rel = rgb_calib.extrinsic_rotation.inverse() * event_calib.extrinsic_rotation;
    let (w, h) = (event_calib.width, event_calib.height);
    let mut coords = Vec::with_capacity((w * h) as usize);
    for y in 0..h {
        for x in 0..w {
            let ray = event_calib.unproject(x as f64, y as f64);
            let rotated: Vector3<f64> = rel * ray;
            // Tolerate numerical noise at the RGB border before rejecting.
            const EDGE_EPS: f64 = 1e-6;
            let max_u = (rgb_calib.width - 1) as f64;
            let max_v = (rgb_calib.height - 1) as f64;
            let entry = match rgb_calib.project(&rotated) {
                Some((u, v))
                    if u >= -EDGE_EPS
                        && v >= -EDGE_EPS
                        && u <= max_u + EDGE_EPS
                        && v <= max_v + EDGE_EPS =>
                {
                    (u.clamp(0.0, max_u) as f32, v.clamp(0.0, max_v) as f32)
                }
                _ => (f32::NAN, f32::NAN),
            };
            coords.push(entry);
        }
    }
    Ok(RemapTable {
        width: w,
        height: h,
        coords,
    })
}

#[inline]
fn bilinear_rgb(img: &RgbImage, u: f32, v: f32) -> [f64; 3] {
    let (w, h) = (img.width() as i64, img.height() as i64);
    let x0 = (u.floor() as i64).clamp(0, w - 1);
    let y0 = (v.floor() as i64).clamp(0, h - 1);
    let x1 = (x0 + 1).min(w - 1);
    let y1 = (y0 + 1).min(h - 1);
    let fx = (u as f64 - x0 as f64).clamp(0.0, 1.0);
    let fy = (v as f64 - y0 as f64).clamp(0.0, 1.0);
    let mut out = [0.0; 3];
    let p00 = img.get_pixel(x0 as u32, y0 as u32).0;
    let p10 = img.get_pixel(x1 as u32, y0 as u32).0;
    let p01 = img.get_pixel(x0 as u32, y1 as u32).0;
    let p11 = img.get_pixel(x1 as u32, y1 as u32).0;
    for c in 0..3 {
        let top = p00[c] as f64 * (1.0 - fx) + p10[c] as f64 * fx;
        let bot = p01[c] as f64 * (1.0 - fx) + p11[c] as f64 * fx;
        out[c] = top * (1.0 - fy) + bot * fy;
    }
    out
}

/// Bilinear resampling of `img` at the table coordinates. Invalid entries
/// produce black.
pub fn remap_image(img: &RgbImage, table: &RemapTable, rgb_calib: &CameraCalibration) -> Result<RgbImage, FusionError> {
    if img.width() != rgb_calib.width || img.height() != rgb_calib.height {
        return Err(FusionError::DimensionMismatch {
            got_w: img.width(),
            got_h: img.height(),
            want_w: rgb_calib.width,
            want_h: rgb_calib.height,
        });
    }
    let mut out = RgbImage::new(table.width, table.height);
    for (idx, &(u, v)) in table.coords.iter().enumerate() {
        let x = (idx as u32) % table.width;
        let y = (idx as u32) / table.width;
        if u.is_nan() {
            continue; // stays black
        }
        let rgb = bilinear_rgb(img, u, v);
        out.put_pixel(
            x,
            y,
            image::Rgb([
                rgb[0].round().clamp(0.0, 255.0) as u8,
                rgb[1].round().clamp(0.0, 255.0) as u8,
                rgb[2].round().clamp(0.0, 255.0) as u8,
            ]),
        );
    }
    Ok(out)
}

/// Pre-quantization fusion of one pixel in normalized [0,1] space.
/// `rgb` is the multispectral triple, `pan` the panchromatic value.
#[inline]
pub fn fuse_pixel(rgb: [f64; 3], pan: f64, method: FusionMethod) -> [f64; 3] {
    let intensity = (rgb[0] + rgb[1] + rgb[2]) / 3.0;
    let mut out = [0.0; 3];
    for c in 0..3 {
        out[c] = match method {
            FusionMethod::Mean => (rgb[c] + pan) / 2.0,
            FusionMethod::Brovey => {
                if intensity == 0.0 {
                    0.0
                } else {
                    // The ratio is computed first so pan == intensity is an
                    // exact identity.
                    rgb[c] * (pan / intensity)
                }
            }
            FusionMethod::Esri => rgb[c] + (pan - intensity),
            FusionMethod::EventsOnly => pan,
            FusionMethod::RgbCropped => rgb[c],
        };
    }
    out
}

/// Round half away from zero, the quantization rule used after fusion.
#[inline]
fn quantize(v: f64) -> u8 {
    let clamped = v.clamp(0.0, 1.0);
    (clamped * 255.0).round() as u8
}

/// Fuses a remapped RGB image with a panchromatic (event reconstruction)
/// image of identical geometry.
pub fn pansharpen(
    rgb: &RgbImage,
    pan: &[u8],
    pan_width: u32,
    pan_height: u32,
    method: FusionMethod,
) -> Result<RgbImage, FusionError> {
    if rgb.width() != pan_width || rgb.height() != pan_height {
        return Err(FusionError::DimensionMismatch {
            got_w: rgb.width(),
            got_h: rgb.height(),
            want_w: pan_width,
            want_h: pan_height,
        });
    }
    let mut out = RgbImage::new(pan_width, pan_height);
    for (idx, pixel) in rgb.pixels().enumerate() {
        let x = (idx as u32) % pan_width;
        let y = (idx as u32) / pan_width;
        let rgb_n = [
            pixel.0[0] as f64 / 255.0,
            pixel.0[1] as f64 / 255.0,
            pixel.0[2] as f64 / 255.0,
        ];
        let pan_n = pan[idx] as f64 / 255.0;
        let fused = fuse_pixel(rgb_n, pan_n, method);
        out.put_pixel(
            x,
            y,
            image::Rgb([quantize(fused[0]), quantize(fused[1]), quantize(fused[2])]),
        );
    }
    Ok(out)
}
