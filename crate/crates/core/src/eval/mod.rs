//! Orthomosaic evaluation: correspondence-based alignment followed by
//! PSNR/SSIM metrics in the report format used by the rest of the pipeline.

mod homography;
mod metrics;

pub use homography::{
    apply_homography, estimate_homography, warp_to_reference, CorrespondenceSet, HomographyError,
};
pub use metrics::{luma, psnr, ssim, to_gray, MetricsError, PsnrMode};

use std::fmt;
use std::io::Write;
use std::path::Path;

use image::RgbImage;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("failed to read image {0}: {1}")]
    Image(String, image::ImageError),
    #[error(transparent)]
    Homography(#[from] HomographyError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("correspondence file {0}: {1}")]
    Correspondences(String, String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One evaluated orthomosaic, formatted as a report row
/// `sequence,type,psnr_color,psnr_gray,ssim,nonzero_Mpx`.
#[derive(Debug, Clone)]
pub struct OrthoReport {
    pub sequence: String,
    pub kind: String,
    pub psnr_color_db: f64,
    pub psnr_gray_db: f64,
    pub ssim: f64,
    pub nonzero_pixels: u64,
    /// Aligned extent in pixels (reference dimensions).
    pub extent: (u32, u32),
}

pub const REPORT_HEADER: &str = "sequence,type,psnr_color,psnr_gray,ssim,nonzero_Mpx";

fn fmt_db(v: f64) -> String {
    if v.is_infinite() {
        "inf".to_string()
    } else {
        format!("{v:.2}")
    }
}

impl OrthoReport {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{:.2},{:.2}",
            self.sequence,
            self.kind,
            fmt_db(self.psnr_color_db),
            fmt_db(self.psnr_gray_db),
            self.ssim,
            self.nonzero_pixels as f64 / 1e6
        )
    }
}

impl fmt::Display for OrthoReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.csv_row())
    }
}

/// Counts pixels that are not exactly (0,0,0).
pub fn nonzero_pixels(img: &RgbImage) -> u64 {
    img.pixels().filter(|p| p.0 != [0, 0, 0]).count() as u64
}

/// Reads a `x_test,y_test,x_ref,y_ref` CSV with one header line.
pub fn read_correspondences(path: &Path) -> Result<CorrespondenceSet, EvalError> {
    let name = path.display().to_string();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| EvalError::Correspondences(name.clone(), e.to_string()))?;
    let mut pairs = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| EvalError::Correspondences(name.clone(), e.to_string()))?;
        if record.len() != 4 {
            return Err(EvalError::Correspondences(
                name,
                format!("row {} has {} fields, expected 4", i + 2, record.len()),
            ));
        }
        let mut vals = [0.0f64; 4];
        for (j, v) in vals.iter_mut().enumerate() {
            *v = record[j].trim().parse().map_err(|_| {
                EvalError::Correspondences(
                    name.clone(),
                    format!("row {} field {:?} is not a number", i + 2, &record[j]),
                )
            })?;
        }
        pairs.push((vals[0], vals[1], vals[2], vals[3]));
    }
    Ok(CorrespondenceSet { pairs })
}

/// Writes a correspondence CSV in the format `read_correspondences` accepts.
pub fn write_correspondences(path: &Path, c: &CorrespondenceSet) -> Result<(), EvalError> {
    let mut f = std::fs::File::create(path)?;
    writeln!(f, "x_test,y_test,x_ref,y_ref")?;
    for (xt, yt, xr, yr) in &c.pairs {
        writeln!(f, "{xt},{yt},{xr},{yr}")?;
    }
    Ok(())
}

fn load_rgb(path: &Path) -> Result<RgbImage, EvalError> {
    image::open(path)
        .map(|i| i.to_rgb8())
        .map_err(|e| EvalError::Image(path.display().to_string(), e))
}

/// Metrics between an already-aligned test image and the reference.
/// With `masked`, PSNR is restricted to pixels where both images are nonzero;
/// otherwise the full aligned extent is used.
pub fn evaluate_aligned(
    test: &RgbImage,
    reference: &RgbImage,
    sequence: &str,
    kind: &str,
    masked: bool,
) -> Result<OrthoReport, EvalError> {
    let (psnr_color_db, psnr_gray_db) = if masked {
        masked_psnr(test, reference)?
    } else {
        (
            psnr(test, reference, PsnrMode::Color)?,
            psnr(test, reference, PsnrMode::Gray)?,
        )
    };
    let ssim_val = ssim(&to_gray(test), &to_gray(reference))?;
    Ok(OrthoReport {
        sequence: sequence.to_string(),
        kind: kind.to_string(),
        psnr_color_db,
        psnr_gray_db,
        ssim: ssim_val,
        nonzero_pixels: nonzero_pixels(test),
        extent: reference.dimensions(),
    })
}

fn masked_psnr(test: &RgbImage, reference: &RgbImage) -> Result<(f64, f64), EvalError> {
    if test.dimensions() != reference.dimensions() {
        let (tw, th) = test.dimensions();
        let (rw, rh) = reference.dimensions();
        return Err(MetricsError::DimensionMismatch(tw, th, rw, rh).into());
    }
    let mut sum_color = 0.0f64;
    let mut sum_gray = 0.0f64;
    let mut count = 0u64;
    for (t, r) in test.pixels().zip(reference.pixels()) {
        if t.0 == [0, 0, 0] || r.0 == [0, 0, 0] {
            continue;
        }
        for c in 0..3 {
            let d = t.0[c] as f64 - r.0[c] as f64;
            sum_color += d * d;
        }
        let d = luma(t.0) - luma(r.0);
        sum_gray += d * d;
        count += 1;
    }
    let db = |sum: f64, n: f64| {
        let mse = sum / n;
        if mse == 0.0 {
            f64::INFINITY
        } else {
            10.0 * (255.0f64 * 255.0 / mse).log10()
        }
    };
    if count == 0 {
        return Ok((f64::INFINITY, f64::INFINITY));
    }
    Ok((db(sum_color, 3.0 * count as f64), db(sum_gray, count as f64)))
}

/// Full evaluation flow: estimate a homography from manual correspondences,
/// warp the test orthomosaic onto the reference, and compute metrics.
pub fn evaluate_orthomap(
    test_path: &Path,
    ref_path: &Path,
    correspondences_path: &Path,
    sequence: &str,
    kind: &str,
    masked: bool,
) -> Result<OrthoReport, EvalError> {
    let test = load_rgb(test_path)?;
    let reference = load_rgb(ref_path)?;
    let correspondences = read_correspondences(correspondences_path)?;
    let h = estimate_homography(&correspondences)?;
    let aligned = warp_to_reference(&test, &h, reference.dimensions())?;
    evaluate_aligned(&aligned, &reference, sequence, kind, masked)
}

/// Writes report rows with the standard header.
pub fn write_report(path: &Path, rows: &[OrthoReport]) -> Result<(), EvalError> {
    let mut f = std::fs::File::create(path)?;
    writeln!(f, "{REPORT_HEADER}")?;
    for row in rows {
        writeln!(f, "{}", row.csv_row())?;
    }
    Ok(())
}
