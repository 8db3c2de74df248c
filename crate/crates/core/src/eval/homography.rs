//! Normalized DLT homography estimation and inverse-mapped warping.

use image::RgbImage;
use nalgebra::{DMatrix, Matrix3, Vector3};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HomographyError {
    #[error("need at least 4 correspondences, got {0}")]
    TooFewPoints(usize),
    #[error("degenerate point configuration (rank deficiency)")]
    Degenerate,
    #[error("singular homography")]
    Singular,
    #[error("duplicate test point at index {0}")]
    DuplicatePoint(usize),
}

/// Manual point pairs `(x_test, y_test, x_ref, y_ref)` in pixels.
#[derive(Debug, Clone, Default)]
pub struct CorrespondenceSet {
    pub pairs: Vec<(f64, f64, f64, f64)>,
}

impl CorrespondenceSet {
    pub fn validate(&self) -> Result<(), HomographyError> {
        if self.pairs.len() < 4 {
            return Err(HomographyError::TooFewPoints(self.pairs.len()));
        }
        for (i, a) in self.pairs.iter().enumerate() {
            for b in &self.pairs[i + 1..] {
                if a.0 == b.0 && a.1 == b.1 {
                    return Err(HomographyError::DuplicatePoint(i));
                }
            }
        }
        Ok(())
    }
}

/// Hartley normalization: translate to zero mean, scale mean distance to sqrt(2).
fn normalize(points: &[(f64, f64)]) -> Option<(Vec<(f64, f64)>, Matrix3<f64>)> {
    let n = points.len() as f64;
    let cx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let cy = points.iter().map(|p| p.1).sum::<f64>() / n;
    let mean_dist = points
        .iter()
        .map(|p| ((p.0 - cx).powi(2) + (p.1 - cy).powi(2)).sqrt())
        .sum::<f64>()
        / n;
    if mean_dist == 0.0 {
        return None;
    }
    let s = std::f64::consts::SQRT_2 / mean_dist;
    let t = Matrix3::new(s, 0.0, -s * cx, 0.0, s, -s * cy, 0.0, 0.0, 1.0);
    let normed = points.iter().map(|p| (s * (p.0 - cx), s * (p.1 - cy))).collect();
    Some((normed, t))
}

/// Estimates H mapping test points to reference points (`x_ref ~ H x_test`)
/// by the normalized direct linear transform, least squares over all pairs.
/// The result is scaled so H[2][2] = 1 when that entry is nonzero.
pub fn estimate_homography(c: &CorrespondenceSet) -> Result<Matrix3<f64>, HomographyError> {
    c.validate()?;
    let test: Vec<(f64, f64)> = c.pairs.iter().map(|p| (p.0, p.1)).collect();
    let refp: Vec<(f64, f64)> = c.pairs.iter().map(|p| (p.2, p.3)).collect();
    let (test_n, t_test) = normalize(&test).ok_or(HomographyError::Degenerate)?;
    let (ref_n, t_ref) = normalize(&refp).ok_or(HomographyError::Degenerate)?;

    let n = test_n.len();
    let mut a = DMatrix::<f64>::zeros(2 * n, 9);
    for i in 0..n {
        let (x, y) = test_n[i];
        let (u, v) = ref_n[i];
        a.row_mut(2 * i).copy_from_slice(&[
            -x, -y, -1.0, 0.0, 0.0, 0.0, u * x, u * y, u,
        ]);
        a.row_mut(2 * i + 1).copy_from_slice(&[
            0.0, 0.0, 0.0, -x, -y, -1.0, v * x, v * y, v,
        ]);
    }
    let svd = a.svd(false, true);
    let v_t = svd.v_t.as_ref().ok_or(HomographyError::Degenerate)?;
    // Rank must be 8 for a unique solution (up to scale).
    let smallest_kept = svd.singular_values[7];
    let largest = svd.singular_values[0];
    if smallest_kept <= 1e-10 * largest {
        return Err(HomographyError::Degenerate);
    }
    let h_vec = v_t.row(8);
    let h_n = Matrix3::new(
        h_vec[0], h_vec[1], h_vec[2], h_vec[3], h_vec[4], h_vec[5], h_vec[6], h_vec[7], h_vec[8],
    );

    let t_ref_inv = t_ref.try_inverse().ok_or(HomographyError::Degenerate)?;
    let mut h = t_ref_inv * h_n * t_test;
    if h[(2, 2)].abs() > 1e-12 {
        h /= h[(2, 2)];
    }
    Ok(h)
}

/// Applies H to a point.
pub fn apply_homography(h: &Matrix3<f64>, x: f64, y: f64) -> Option<(f64, f64)> {
    let p = h * Vector3::new(x, y, 1.0);
    if p.z.abs() < 1e-15 {
        return None;
    }
    Some((p.x / p.z, p.y / p.z))
}

/// Inverse-mapped bilinear warp of `img` into an image of `ref_dims`,
/// zero outside the source.
pub fn warp_to_reference(
    img: &RgbImage,
    h: &Matrix3<f64>,
    ref_dims: (u32, u32),
) -> Result<RgbImage, HomographyError> {
    let h_inv = h.try_inverse().ok_or(HomographyError::Singular)?;
    let (rw, rh) = ref_dims;
    let mut out = RgbImage::new(rw, rh);
    let (sw, sh) = (img.width() as f64, img.height() as f64);
    for y in 0..rh {
        for x in 0..rw {
            let Some((u, v)) = apply_homography(&h_inv, x as f64, y as f64) else {
                continue;
            };
            // Tolerate numerical noise at the source border before rejecting.
            const EDGE_EPS: f64 = 1e-6;
            if u < -EDGE_EPS || v < -EDGE_EPS || u > sw - 1.0 + EDGE_EPS || v > sh - 1.0 + EDGE_EPS
            {
                continue;
            }
            let u = u.clamp(0.0, sw - 1.0);
            let v = v.clamp(0.0, sh - 1.0);
            let x0 = u.floor() as u32;
            let y0 = v.floor() as u32;
            let x1 = (x0 + 1).min(img.width() - 1);
            let y1 = (y0 + 1).min(img.height() - 1);
            let fx = u - x0 as f64;
            let fy = v - y0 as f64;
            let mut px = [0u8; 3];
            for c in 0..3 {
                let p00 = img.get_pixel(x0, y0).0[c] as f64;
                let p10 = img.get_pixel(x1, y0).0[c] as f64;
                let p01 = img.get_pixel(x0, y1).0[c] as f64;
                let p11 = img.get_pixel(x1, y1).0[c] as f64;
                let top = p00 * (1.0 - fx) + p10 * fx;
                let bot = p01 * (1.0 - fx) + p11 * fx;
                px[c] = (top * (1.0 - fy) + bot * fy).round().clamp(0.0, 255.0) as u8;
            }
            out.put_pixel(x, y, image::Rgb(px));
        }
    }
    Ok(out)
}
