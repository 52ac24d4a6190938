use super::square_side;
use crate::error::{EitError, Result};
use crate::grid::pixel_centers;

/// Which deviation from the background counts as inclusion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Polarity {
    /// Whichever side deviates more.
    Auto,
    /// Below background.
    Negative,
    /// Above background.
    Positive,
}

/// Half-maximum thresholding relative to a background level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegmentationRule {
    pub polarity: Polarity,
    /// Fixed background; `None` uses the median of boundary-adjacent pixels.
    pub background: Option<f64>,
    /// Fraction of the peak deviation used as threshold.
    pub fraction: f64,
}

impl Default for SegmentationRule {
    fn default() -> Self {
        Self { polarity: Polarity::Auto, background: None, fraction: 0.5 }
    }
}

impl SegmentationRule {
    pub fn with_polarity(polarity: Polarity) -> Self {
        Self { polarity, ..Self::default() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Segmentation {
    pub mask: Vec<bool>,
    pub background: f64,
    pub threshold: f64,
    /// Resolved polarity (never `Auto`).
    pub polarity: Polarity,
}

impl Segmentation {
    pub fn count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RcrResult {
    pub ratio: f64,
    pub coverage: f64,
    /// Set when nothing was segmented; `ratio` is then 0.
    pub empty: bool,
}

fn check_domain(image: &[f64], domain: &[bool]) -> Result<usize> {
    if image.len() != domain.len() {
        return Err(EitError::Shape(format!("image has {} pixels, domain mask {}", image.len(), domain.len())));
    }
    let side = square_side(image.len())?;
    if !domain.iter().any(|&d| d) {
        return Err(EitError::Domain("domain mask is empty".into()));
    }
    Ok(side)
}

/// Median of in-domain pixels that touch the image edge or an out-of-domain
/// pixel (4-neighbourhood).
pub fn boundary_background(image: &[f64], domain: &[bool]) -> Result<f64> {
    let side = check_domain(image, domain)?;
    let inside = |r: isize, c: isize| {
        r >= 0 && c >= 0 && r < side as isize && c < side as isize && domain[r as usize * side + c as usize]
    };
    let mut values: Vec<f64> = (0..side * side)
        .filter(|&k| domain[k])
        .filter(|&k| {
            let (r, c) = ((k / side) as isize, (k % side) as isize);
            !(inside(r - 1, c) && inside(r + 1, c) && inside(r, c - 1) && inside(r, c + 1))
        })
        .map(|k| image[k])
        .collect();
    values.sort_by(f64::total_cmp);
    let n = values.len();
    Ok(if n % 2 == 1 { values[n / 2] } else { 0.5 * (values[n / 2 - 1] + values[n / 2]) })
}

pub fn segment(image: &[f64], domain: &[bool], rule: &SegmentationRule) -> Result<Segmentation> {
    check_domain(image, domain)?;
    if !(rule.fraction > 0.0 && rule.fraction < 1.0) {
        return Err(EitError::Domain(format!("threshold fraction must lie in (0, 1), got {}", rule.fraction)));
    }
    let background = match rule.background {
        Some(b) => b,
        None => boundary_background(image, domain)?,
    };
    let inside = || image.iter().zip(domain).filter(|(_, &d)| d).map(|(&v, _)| v);
    let low = background - inside().fold(f64::INFINITY, f64::min);
    let high = inside().fold(f64::NEG_INFINITY, f64::max) - background;
    let polarity = match rule.polarity {
        Polarity::Auto if low >= high => Polarity::Negative,
        Polarity::Auto => Polarity::Positive,
        p => p,
    };
    let (threshold, mask) = match polarity {
        Polarity::Negative => {
            let th = background - rule.fraction * low.max(0.0);
            (th, image.iter().zip(domain).map(|(&v, &d)| d && low > 0.0 && v < th).collect())
        }
        _ => {
            let th = background + rule.fraction * high.max(0.0);
            (th, image.iter().zip(domain).map(|(&v, &d)| d && high > 0.0 && v > th).collect())
        }
    };
    Ok(Segmentation { mask, background, threshold, polarity })
}

/// `CR / true_cr`, where `CR` is the segmented fraction of the domain.
pub fn rcr(image: &[f64], domain: &[bool], true_cr: f64, rule: &SegmentationRule) -> Result<RcrResult> {
    if !(true_cr > 0.0 && true_cr < 1.0) {
        return Err(EitError::Domain(format!("true coverage must lie in (0, 1), got {true_cr}")));
    }
    let seg = segment(image, domain, rule)?;
    let area = domain.iter().filter(|&&d| d).count() as f64;
    let count = seg.count();
    let coverage = count as f64 / area;
    Ok(RcrResult { ratio: coverage / true_cr, coverage, empty: count == 0 })
}

/// A true inclusion in normalized `[-1, 1]^2` image coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrueInclusion {
    pub centroid: [f64; 2],
    /// Area as a fraction of the domain.
    pub coverage: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InclusionScore {
    pub rcr: f64,
    /// Centroid of the matched pixels; `None` when nothing matched.
    pub centroid: Option<[f64; 2]>,
    /// Distance between matched and true centroids in normalized units.
    pub centroid_error: Option<f64>,
}

/// 4-connected components of `mask`, labelled from 0.
fn components(mask: &[bool], side: usize) -> (Vec<Option<usize>>, usize) {
    let mut label = vec![None; mask.len()];
    let mut next = 0;
    let mut stack = Vec::new();
    for start in 0..mask.len() {
        if !mask[start] || label[start].is_some() {
            continue;
        }
        label[start] = Some(next);
        stack.push(start);
        while let Some(k) = stack.pop() {
            let (r, c) = (k / side, k % side);
            let mut visit = |j: usize| {
                if mask[j] && label[j].is_none() {
                    label[j] = Some(next);
                    stack.push(j);
                }
            };
            if r > 0 {
                visit(k - side);
            }
            if r + 1 < side {
                visit(k + side);
            }
            if c > 0 {
                visit(k - 1);
            }
            if c + 1 < side {
                visit(k + 1);
            }
        }
        next += 1;
    }
    (label, next)
}

/// Per-inclusion RCR: each connected component of the segmentation is
/// assigned to the true inclusion with the nearest centroid.
pub fn inclusion_scores(
    image: &[f64],
    domain: &[bool],
    truths: &[TrueInclusion],
    rule: &SegmentationRule,
) -> Result<Vec<InclusionScore>> {
    let side = check_domain(image, domain)?;
    if truths.iter().any(|t| !(t.coverage > 0.0 && t.coverage < 1.0)) {
        return Err(EitError::Domain("true coverages must lie in (0, 1)".into()));
    }
    let seg = segment(image, domain, rule)?;
    let centers = pixel_centers(side);
    let (labels, count) = components(&seg.mask, side);
    let mut sums = vec![(0usize, 0.0, 0.0); count];
    for (k, l) in labels.iter().enumerate() {
        if let Some(l) = l {
            sums[*l].0 += 1;
            sums[*l].1 += centers[k][0];
            sums[*l].2 += centers[k][1];
        }
    }
    let mut assigned = vec![(0usize, 0.0, 0.0); truths.len()];
    for (n, sx, sy) in sums {
        let c = [sx / n as f64, sy / n as f64];
        let nearest = (0..truths.len()).min_by(|&a, &b| {
            let da = (truths[a].centroid[0] - c[0]).hypot(truths[a].centroid[1] - c[1]);
            let db = (truths[b].centroid[0] - c[0]).hypot(truths[b].centroid[1] - c[1]);
            da.total_cmp(&db)
        });
        if let Some(i) = nearest {
            assigned[i].0 += n;
            assigned[i].1 += sx;
            assigned[i].2 += sy;
        }
    }
    let area = domain.iter().filter(|&&d| d).count() as f64;
    Ok(truths
        .iter()
        .zip(assigned)
        .map(|(t, (n, sx, sy))| {
            let centroid = (n > 0).then(|| [sx / n as f64, sy / n as f64]);
            InclusionScore {
                rcr: n as f64 / area / t.coverage,
                centroid,
                centroid_error: centroid.map(|c| (c[0] - t.centroid[0]).hypot(c[1] - t.centroid[1])),
            }
        })
        .collect())
}
