//! Grayscale PNG export, one pixel per node with `y` increasing upwards.

use std::path::Path;

use image::{GrayImage, Luma};

use crate::error::{CdiiError, Result};
use crate::grid::ScalarField;

/// Maps `[lo, hi]` linearly to `0..=255`, defaulting to the field range.
pub fn to_image(field: &ScalarField, range: Option<(f64, f64)>) -> Result<GrayImage> {
    if field.values().iter().any(|v| !v.is_finite()) {
        return Err(CdiiError::InvalidInput("cannot render a field with non-finite values".into()));
    }
    let (lo, hi) = range.unwrap_or((field.min(), field.max()));
    if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
        return Err(CdiiError::InvalidInput(format!("invalid render range [{lo}, {hi}]")));
    }
    let side = field.grid().side();
    let n = side as u32;
    Ok(GrayImage::from_fn(n, n, |px, py| {
        let v = field.at(px as usize, side - 1 - py as usize);
        let t = if hi > lo { ((v - lo) / (hi - lo)).clamp(0.0, 1.0) } else { 0.0 };
        Luma([(t * 255.0).round() as u8])
    }))
}

pub fn render_png(field: &ScalarField, path: impl AsRef<Path>, range: Option<(f64, f64)>) -> Result<()> {
    to_image(field, range)?.save_with_format(path, image::ImageFormat::Png)?;
    Ok(())
}
