//! Image quality scores: PSNR, SSIM and the relative size coverage ratio.

mod rcr;
mod similarity;

pub use rcr::{
    boundary_background, inclusion_scores, rcr, segment, InclusionScore, Polarity, RcrResult, Segmentation,
    SegmentationRule, TrueInclusion,
};
pub use similarity::{psnr, ssim, Psnr, SSIM_K1, SSIM_K2, SSIM_SIGMA, SSIM_WINDOW};

use crate::error::{EitError, Result};

pub(crate) fn square_side(len: usize) -> Result<usize> {
    let side = (len as f64).sqrt().round() as usize;
    if side * side != len || side == 0 {
        return Err(EitError::Shape(format!("{len} pixels do not form a square image")));
    }
    Ok(side)
}
