//! Geotagged export for external orthomosaic tools and a built-in flat-ground
//! orthoprojection compositor.

use std::io::Write;
use std::path::{Path, PathBuf};

use image::RgbImage;
use nalgebra::{Matrix3, UnitQuaternion, Vector3};
use thiserror::Error;

use crate::recording::{CameraCalibration, GnssFix, RangeSample};
use crate::utm::{UtmError, UtmPoint};

#[derive(Debug, Error)]
pub enum OrthoError {
    #[error("keyframe at t={0} ns outside GNSS time span [{1}, {2}]")]
    OutsideGnssSpan(u64, u64, u64),
    #[error("need at least 2 GNSS fixes for interpolation, got {0}")]
    TooFewFixes(usize),
    #[error("no valid range samples for ground altitude")]
    NoRangeSamples,
    #[error("no image intersects the requested extent")]
    EmptyExtent,
    #[error("image {0}: dimensions {1}x{2} do not match calibration {3}x{4}")]
    DimensionMismatch(String, u32, u32, u32, u32),
    #[error("inconsistent UTM zone/hemisphere across poses")]
    MixedZones,
    #[error("resolution must be positive, got {0}")]
    BadResolution(f64),
    #[error(transparent)]
    Utm(#[from] UtmError),
    #[error("image {0}: {1}")]
    Image(String, image::ImageError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One exported keyframe image with its interpolated position.
#[derive(Debug, Clone)]
pub struct GeotaggedImage {
    pub image_path: PathBuf,
    pub latitude_deg: f64,
    pub longitude_deg: f64,
    pub altitude_m: f64,
    pub t_ns: u64,
    pub keyframe_index: usize,
}

/// Linear interpolation of a GNSS track at `t_ns`. Fixes must be sorted.
pub fn interpolate_gnss(gnss: &[GnssFix], t_ns: u64) -> Result<(f64, f64, f64), OrthoError> {
    if gnss.len() < 2 {
        return Err(OrthoError::TooFewFixes(gnss.len()));
    }
    let first = gnss.first().unwrap().t_ns;
    let last = gnss.last().unwrap().t_ns;
    if t_ns < first || t_ns > last {
        return Err(OrthoError::OutsideGnssSpan(t_ns, first, last));
    }
    let i = match gnss.binary_search_by_key(&t_ns, |f| f.t_ns) {
        Ok(i) => return Ok((gnss[i].latitude_deg, gnss[i].longitude_deg, gnss[i].altitude_msl_m)),
        Err(i) => i,
    };
    let (a, b) = (&gnss[i - 1], &gnss[i]);
    let f = (t_ns - a.t_ns) as f64 / (b.t_ns - a.t_ns) as f64;
    Ok((
        a.latitude_deg + f * (b.latitude_deg - a.latitude_deg),
        a.longitude_deg + f * (b.longitude_deg - a.longitude_deg),
        a.altitude_msl_m + f * (b.altitude_msl_m - a.altitude_msl_m),
    ))
}

/// Copies keyframe images into `out_dir` and writes `geo.csv`
/// (`filename,lat_deg,lon_deg,alt_m`) with one row per keyframe,
/// positions linearly interpolated from the GNSS track.
pub fn export_geotagged(
    keyframes: &[(u64, PathBuf)],
    gnss: &[GnssFix],
    out_dir: &Path,
) -> Result<Vec<GeotaggedImage>, OrthoError> {
    std::fs::create_dir_all(out_dir)?;
    let mut rows = Vec::with_capacity(keyframes.len());
    let mut csv = std::fs::File::create(out_dir.join("geo.csv"))?;
    writeln!(csv, "filename,lat_deg,lon_deg,alt_m")?;
    for (index, (t_ns, src)) in keyframes.iter().enumerate() {
        let (lat, lon, alt) = interpolate_gnss(gnss, *t_ns)?;
        let filename = src
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| format!("keyframe_{index:05}.png"));
        let dst = out_dir.join(&filename);
        std::fs::copy(src, &dst)?;
        writeln!(csv, "{},{:.9},{:.9},{:.4}", filename, lat, lon, alt)?;
        rows.push(GeotaggedImage {
            image_path: dst,
            latitude_deg: lat,
            longitude_deg: lon,
            altitude_m: alt,
            t_ns: *t_ns,
            keyframe_index: index,
        });
    }
    Ok(rows)
}

/// Flat-ground altitude estimate: median of (interpolated GNSS altitude −
/// range) over valid range samples inside the GNSS span.
pub fn ground_altitude(gnss: &[GnssFix], range: &[RangeSample]) -> Result<f64, OrthoError> {
    let mut diffs: Vec<f64> = Vec::new();
    for s in range {
        if !s.is_valid() {
            continue;
        }
        if let Ok((_, _, alt)) = interpolate_gnss(gnss, s.t_host_ns) {
            diffs.push(alt - s.range_m);
        }
    }
    if diffs.is_empty() {
        return Err(OrthoError::NoRangeSamples);
    }
    diffs.sort_by(|a, b| a.total_cmp(b));
    let n = diffs.len();
    Ok(if n % 2 == 1 {
        diffs[n / 2]
    } else {
        0.5 * (diffs[n / 2 - 1] + diffs[n / 2])
    })
}

/// Camera pose for orthoprojection: UTM position of the optical center plus a
/// camera-to-world rotation (world axes: x east, y north, z up; camera axes:
/// x image-right, y image-down, z optical axis).
#[derive(Debug, Clone)]
pub struct CameraPose {
    pub position: UtmPoint,
    pub orientation: UnitQuaternion<f64>,
}

/// Camera-to-world rotation for a nadir view with image "up" pointing north.
pub fn nadir_orientation() -> UnitQuaternion<f64> {
    UnitQuaternion::from_matrix(&Matrix3::new(
        1.0, 0.0, 0.0, //
        0.0, -1.0, 0.0, //
        0.0, 0.0, -1.0,
    ))
}

/// One input to the compositor.
#[derive(Debug, Clone)]
pub struct OrthoInput {
    pub image: RgbImage,
    pub calib: CameraCalibration,
    pub pose: CameraPose,
    pub t_ns: u64,
    /// Stable tie-break label for deterministic ordering (e.g. file name).
    pub label: String,
}

/// Weighted-average orthoprojection raster. `accum` holds weight-multiplied
/// color sums in double precision; `to_image` normalizes.
#[derive(Debug, Clone)]
pub struct OrthoRaster {
    pub width: u32,
    pub height: u32,
    /// Row-major RGB accumulation, 3 entries per pixel.
    pub accum: Vec<f64>,
    pub weight: Vec<f64>,
    /// UTM coordinates of the top-left pixel center.
    pub origin: UtmPoint,
    pub resolution_m_per_px: f64,
}

impl OrthoRaster {
    /// Normalized 8-bit output; zero-weight pixels are exactly (0,0,0).
    pub fn to_image(&self) -> RgbImage {
        let mut out = RgbImage::new(self.width, self.height);
        for (i, px) in out.pixels_mut().enumerate() {
            let w = self.weight[i];
            if w > 0.0 {
                for c in 0..3 {
                    px.0[c] = (self.accum[3 * i + c] / w).round().clamp(0.0, 255.0) as u8;
                }
            }
        }
        out
    }
}

/// Binary coverage mask (weight > 0) and its pixel count.
pub fn coverage_mask(raster: &OrthoRaster) -> (Vec<bool>, u64) {
    let mask: Vec<bool> = raster.weight.iter().map(|&w| w > 0.0).collect();
    let count = mask.iter().filter(|&&m| m).count() as u64;
    (mask, count)
}

/// Ground-plane intersection of the ray through pixel (u, v); `None` when the
/// ray does not point below the horizon.
fn pixel_to_ground(
    calib: &CameraCalibration,
    pose: &CameraPose,
    ground_alt_m: f64,
    u: f64,
    v: f64,
) -> Option<(f64, f64)> {
    let ray_world: Vector3<f64> = pose.orientation * calib.unproject(u, v);
    if ray_world.z >= -1e-12 {
        return None;
    }
    let s = (ground_alt_m - pose.position.altitude_m) / ray_world.z;
    Some((
        pose.position.easting_m + s * ray_world.x,
        pose.position.northing_m + s * ray_world.y,
    ))
}

/// Projects each image to the plane z = `ground_alt_m` and composes a
/// weighted-average raster: for every raster cell inside an image's footprint
/// the image is sampled bilinearly through the calibrated camera model, with
/// weight cos⁴ of the view angle from nadir. Input order does not matter —
/// images are sorted internally and accumulated in double precision, so
/// permutations yield bit-identical rasters.
pub fn planar_orthoproject(
    inputs: &[OrthoInput],
    ground_alt_m: f64,
    resolution_m_per_px: f64,
) -> Result<OrthoRaster, OrthoError> {
    if !(resolution_m_per_px > 0.0) {
        return Err(OrthoError::BadResolution(resolution_m_per_px));
    }
    if inputs.is_empty() {
        return Err(OrthoError::EmptyExtent);
    }
    for inp in inputs {
        if inp.image.dimensions() != (inp.calib.width, inp.calib.height) {
            return Err(OrthoError::DimensionMismatch(
                inp.label.clone(),
                inp.image.width(),
                inp.image.height(),
                inp.calib.width,
                inp.calib.height,
            ));
        }
        if inp.pose.position.zone != inputs[0].pose.position.zone
            || inp.pose.position.hemisphere != inputs[0].pose.position.hemisphere
        {
            return Err(OrthoError::MixedZones);
        }
    }

    let mut order: Vec<usize> = (0..inputs.len()).collect();
    order.sort_by(|&a, &b| {
        (inputs[a].t_ns, inputs[a].label.as_str()).cmp(&(inputs[b].t_ns, inputs[b].label.as_str()))
    });

    // Ground-plane bounding box per image from its border pixels.
    let mut boxes: Vec<Option<(f64, f64, f64, f64)>> = Vec::with_capacity(inputs.len());
    let (mut min_e, mut max_e) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut min_n, mut max_n) = (f64::INFINITY, f64::NEG_INFINITY);
    for inp in inputs {
        let (w, h) = (inp.calib.width, inp.calib.height);
        let mut bb = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        let mut any = false;
        let mut visit = |u: u32, v: u32| {
            if let Some((e, n)) =
                pixel_to_ground(&inp.calib, &inp.pose, ground_alt_m, u as f64, v as f64)
            {
                bb.0 = bb.0.min(e);
                bb.1 = bb.1.max(e);
                bb.2 = bb.2.min(n);
                bb.3 = bb.3.max(n);
                any = true;
            }
        };
        for u in 0..w {
            visit(u, 0);
            visit(u, h - 1);
        }
        for v in 0..h {
            visit(0, v);
            visit(w - 1, v);
        }
        if any {
            min_e = min_e.min(bb.0);
            max_e = max_e.max(bb.1);
            min_n = min_n.min(bb.2);
            max_n = max_n.max(bb.3);
            boxes.push(Some(bb));
        } else {
            boxes.push(None);
        }
    }
    if !min_e.is_finite() {
        return Err(OrthoError::EmptyExtent);
    }

    let res = resolution_m_per_px;
    let width = (((max_e - min_e) / res).ceil() as u32 + 1).max(1);
    let height = (((max_n - min_n) / res).ceil() as u32 + 1).max(1);
    let origin = UtmPoint {
        easting_m: min_e,
        northing_m: max_n,
        zone: inputs[0].pose.position.zone,
        hemisphere: inputs[0].pose.position.hemisphere,
        altitude_m: ground_alt_m,
    };

    let mut accum = vec![0.0f64; (width as usize) * (height as usize) * 3];
    let mut weight = vec![0.0f64; (width as usize) * (height as usize)];

    for &idx in &order {
        let inp = &inputs[idx];
        let Some((bmin_e, bmax_e, bmin_n, bmax_n)) = boxes[idx] else {
            continue;
        };
        // Raster rows run north→south; pad by one cell for border rounding.
        let x0 = (((bmin_e - origin.easting_m) / res).floor() as i64 - 1).max(0) as u32;
        let x1 = ((((bmax_e - origin.easting_m) / res).ceil() as i64 + 1).max(0) as u32)
            .min(width - 1);
        let y0 = (((origin.northing_m - bmax_n) / res).floor() as i64 - 1).max(0) as u32;
        let y1 = ((((origin.northing_m - bmin_n) / res).ceil() as i64 + 1).max(0) as u32)
            .min(height - 1);
        let cam_from_world = inp.pose.orientation.inverse();
        let (iw, ih) = inp.image.dimensions();
        for py in y0..=y1 {
            let n = origin.northing_m - py as f64 * res;
            for px in x0..=x1 {
                let e = origin.easting_m + px as f64 * res;
                let to_ground = Vector3::new(
                    e - inp.pose.position.easting_m,
                    n - inp.pose.position.northing_m,
                    ground_alt_m - inp.pose.position.altitude_m,
                );
                let cam = cam_from_world * to_ground;
                let Some((u, v)) = inp.calib.project(&cam) else {
                    continue;
                };
                if u < 0.0 || v < 0.0 || u > (iw - 1) as f64 || v > (ih - 1) as f64 {
                    continue;
                }
                let cos_view = -to_ground.z / to_ground.norm();
                if cos_view <= 0.0 {
                    continue;
                }
                let w = cos_view.powi(4);
                let ix0 = u.floor() as u32;
                let iy0 = v.floor() as u32;
                let ix1 = (ix0 + 1).min(iw - 1);
                let iy1 = (iy0 + 1).min(ih - 1);
                let fx = u - ix0 as f64;
                let fy = v - iy0 as f64;
                let p00 = inp.image.get_pixel(ix0, iy0).0;
                let p10 = inp.image.get_pixel(ix1, iy0).0;
                let p01 = inp.image.get_pixel(ix0, iy1).0;
                let p11 = inp.image.get_pixel(ix1, iy1).0;
                let i = (py as usize * width as usize + px as usize) * 3;
                for c in 0..3 {
                    let top = p00[c] as f64 * (1.0 - fx) + p10[c] as f64 * fx;
                    let bot = p01[c] as f64 * (1.0 - fx) + p11[c] as f64 * fx;
                    accum[i + c] += w * (top * (1.0 - fy) + bot * fy);
                }
                weight[py as usize * width as usize + px as usize] += w;
            }
        }
    }

    Ok(OrthoRaster {
        width,
        height,
        accum,
        weight,
        origin,
        resolution_m_per_px: res,
    })
}

/// Writes the orthomosaic as a lossless PNG plus a 6-line ESRI world file
/// (pixel sizes, zero rotation terms, top-left pixel-center coordinates).
pub fn save_orthomosaic(raster: &OrthoRaster, path: &Path) -> Result<(), OrthoError> {
    raster
        .to_image()
        .save(path)
        .map_err(|e| OrthoError::Image(path.display().to_string(), e))?;
    let wld_path = path.with_extension("wld");
    let mut f = std::fs::File::create(&wld_path)?;
    writeln!(f, "{}", raster.resolution_m_per_px)?;
    writeln!(f, "0")?;
    writeln!(f, "0")?;
    writeln!(f, "-{}", raster.resolution_m_per_px)?;
    writeln!(f, "{}", raster.origin.easting_m)?;
    writeln!(f, "{}", raster.origin.northing_m)?;
    Ok(())
}

/// Records the parameters for users composing with external orthomosaic
/// software instead of the built-in compositor.
pub fn write_odm_params(path: &Path) -> Result<(), OrthoError> {
    let mut f = std::fs::File::create(path)?;
    writeln!(f, "orthophoto-resolution = 1")?;
    writeln!(f, "mesh-octree-depth = 13")?;
    writeln!(f, "min-num-features = 12000")?;
    Ok(())
}
