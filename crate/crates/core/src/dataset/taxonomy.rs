use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::imaging::BinaryMask;

/// Position of the nearest calcification relative to a patch center.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PatchClass {
    /// The central pixel is a calcification pixel.
    C1,
    /// A calcification pixel lies within Chebyshev distance 1..=3 of the center.
    C2,
    /// A calcification pixel lies elsewhere inside the patch.
    C3,
    /// No calcification pixel inside the patch.
    C4,
}

/// Largest Chebyshev distance still counted as near-center.
pub const NEAR_CENTER_RADIUS: usize = 3;

impl PatchClass {
    pub const ALL: [PatchClass; 4] = [PatchClass::C1, PatchClass::C2, PatchClass::C3, PatchClass::C4];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        ["C1", "C2", "C3", "C4"][self.index()]
    }

    /// Class of a center whose nearest calcification pixel is `distance`
    /// away (Chebyshev), for an `n x n` patch.
    pub fn from_distance(distance: Option<usize>, n: usize) -> Self {
        match distance {
            Some(0) => PatchClass::C1,
            Some(d) if d <= NEAR_CENTER_RADIUS => PatchClass::C2,
            Some(d) if d <= n / 2 => PatchClass::C3,
            _ => PatchClass::C4,
        }
    }
}

impl fmt::Display for PatchClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PatchClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PatchClass::ALL
            .into_iter()
            .find(|c| c.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::invalid(format!("unknown patch class {s:?}")))
    }
}

/// Which network a label is meant for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Target {
    /// Positive when the patch contains any calcification.
    Detector,
    /// Positive when the central pixel is a calcification.
    Segmentator,
}

impl Target {
    pub fn name(self) -> &'static str {
        match self {
            Target::Detector => "detector",
            Target::Segmentator => "segmentator",
        }
    }

    pub fn is_positive(self, class: PatchClass) -> bool {
        let (det, seg) = derive_labels(class);
        match self {
            Target::Detector => det,
            Target::Segmentator => seg,
        }
    }

    /// Class index for the network output: 1 is positive.
    pub fn label(self, class: PatchClass) -> usize {
        self.is_positive(class) as usize
    }

    pub fn positive_classes(self) -> Vec<PatchClass> {
        PatchClass::ALL.into_iter().filter(|&c| self.is_positive(c)).collect()
    }

    pub fn negative_classes(self) -> Vec<PatchClass> {
        PatchClass::ALL.into_iter().filter(|&c| !self.is_positive(c)).collect()
    }
}

impl fmt::Display for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Target {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "detector" => Ok(Target::Detector),
            "segmentator" => Ok(Target::Segmentator),
            other => Err(Error::invalid(format!(
                "unknown target {other:?} (detector|segmentator)"
            ))),
        }
    }
}

/// `(detector_positive, segmentator_positive)`.
pub fn derive_labels(class: PatchClass) -> (bool, bool) {
    (class != PatchClass::C4, class == PatchClass::C1)
}

/// Classifies the `n x n` patch centered on `(cx, cy)` by scanning its window.
pub fn assign_patch_class(mask: &BinaryMask, cx: usize, cy: usize, n: usize) -> PatchClass {
    let half = n / 2;
    let (x0, x1) = (cx.saturating_sub(half), (cx + half).min(mask.width() - 1));
    let (y0, y1) = (cy.saturating_sub(half), (cy + half).min(mask.height() - 1));
    let mut nearest: Option<usize> = None;
    for y in y0..=y1 {
        for x in x0..=x1 {
            if mask.get(x, y) {
                let d = x.abs_diff(cx).max(y.abs_diff(cy));
                nearest = Some(nearest.map_or(d, |m| m.min(d)));
            }
        }
    }
    PatchClass::from_distance(nearest, n)
}

/// Chebyshev distance from every pixel to the nearest mask pixel, `None`
/// when the mask is empty. Two raster sweeps over the 8-neighbourhood are
/// exact for this metric.
pub fn chessboard_distance(mask: &BinaryMask) -> Option<Vec<u32>> {
    let (w, h) = (mask.width(), mask.height());
    if mask.count() == 0 {
        return None;
    }
    let far = (w + h) as u32;
    let mut d: Vec<u32> = mask.bits().iter().map(|&b| if b { 0 } else { far }).collect();
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let mut v = d[i];
            if x > 0 {
                v = v.min(d[i - 1] + 1);
            }
            if y > 0 {
                v = v.min(d[i - w] + 1);
                if x > 0 {
                    v = v.min(d[i - w - 1] + 1);
                }
                if x + 1 < w {
                    v = v.min(d[i - w + 1] + 1);
                }
            }
            d[i] = v;
        }
    }
    for y in (0..h).rev() {
        for x in (0..w).rev() {
            let i = y * w + x;
            let mut v = d[i];
            if x + 1 < w {
                v = v.min(d[i + 1] + 1);
            }
            if y + 1 < h {
                v = v.min(d[i + w] + 1);
                if x + 1 < w {
                    v = v.min(d[i + w + 1] + 1);
                }
                if x > 0 {
                    v = v.min(d[i + w - 1] + 1);
                }
            }
            d[i] = v;
        }
    }
    Some(d)
}
