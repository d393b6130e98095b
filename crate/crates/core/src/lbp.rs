//! Multi-scale uniform local binary patterns reduced to histogram
//! statistics.

use crate::error::{Error, Result};
use crate::fusion::{Family, FeatureVector};
use crate::imaging::{split_channels, GrayPlane, RgbImage};

pub const MLBP_VERSION: &str = "1.0.0";
pub const MLBP_DIM: usize = 36;
pub const RADII: [usize; 3] = [1, 2, 3];
pub const ENTROPY_EPS: f64 = 1e-12;

/// Marker for pixels in the border band where no code is defined.
pub const NO_CODE: u32 = u32::MAX;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LbpCodeMap {
    pub width: usize,
    pub height: usize,
    pub points: usize,
    pub radius: usize,
    pub codes: Vec<u32>,
}

impl LbpCodeMap {
    pub fn get(&self, x: usize, y: usize) -> Option<u32> {
        match self.codes[y * self.width + x] {
            NO_CODE => None,
            c => Some(c),
        }
    }

    pub fn interior_codes(&self) -> impl Iterator<Item = u32> + '_ {
        self.codes.iter().copied().filter(|&c| c != NO_CODE)
    }
}

#[derive(Debug, Clone, Copy)]
struct Sample {
    x0: isize,
    y0: isize,
    fx: f64,
    fy: f64,
}

// Offsets closer than this to an integer are snapped, so cardinal points
// read the pixel exactly instead of through cos/sin round-off.
const SNAP: f64 = 1e-9;

fn snap(v: f64) -> f64 {
    let r = v.round();
    if (v - r).abs() < SNAP {
        r
    } else {
        v
    }
}

fn sample_offsets(points: usize, radius: f64) -> Vec<Sample> {
    (0..points)
        .map(|p| {
            let theta = 2.0 * std::f64::consts::PI * p as f64 / points as f64;
            let dx = snap(radius * theta.cos());
            let dy = snap(-radius * theta.sin());
            let (x0, y0) = (dx.floor(), dy.floor());
            Sample {
                x0: x0 as isize,
                y0: y0 as isize,
                fx: dx - x0,
                fy: dy - y0,
            }
        })
        .collect()
}

/// Per-pixel LBP codes `sum_p s(g_p - g_c) 2^p` with `s(x) = 1` iff `x >= 0`.
/// Neighbours lie on a circle of `radius` at angles `2 pi p / points`,
/// bilinearly interpolated; the border band of width `radius` gets
/// [`NO_CODE`].
pub fn lbp_code_map(plane: &GrayPlane, points: usize, radius: usize) -> Result<LbpCodeMap> {
    assert!((1..=31).contains(&points), "points must be in 1..=31");
    let (w, h) = (plane.width(), plane.height());
    let min = 2 * radius + 2;
    if w < min || h < min {
        return Err(Error::TooSmall {
            width: w,
            height: h,
            min,
        });
    }
    let offsets = sample_offsets(points, radius as f64);
    let data = plane.data();
    let mut codes = vec![NO_CODE; w * h];
    for yc in radius..h - radius {
        for xc in radius..w - radius {
            let gc = data[yc * w + xc];
            let mut code = 0u32;
            for (p, s) in offsets.iter().enumerate() {
                let x0 = (xc as isize + s.x0) as usize;
                let y0 = (yc as isize + s.y0) as usize;
                let gp = if s.fx == 0.0 && s.fy == 0.0 {
                    data[y0 * w + x0]
                } else {
                    let x1 = (x0 + 1).min(w - 1);
                    let y1 = (y0 + 1).min(h - 1);
                    let top = data[y0 * w + x0] * (1.0 - s.fx) + data[y0 * w + x1] * s.fx;
                    let bot = data[y1 * w + x0] * (1.0 - s.fx) + data[y1 * w + x1] * s.fx;
                    top * (1.0 - s.fy) + bot * s.fy
                };
                if gp - gc >= 0.0 {
                    code |= 1 << p;
                }
            }
            codes[yc * w + xc] = code;
        }
    }
    Ok(LbpCodeMap {
        width: w,
        height: h,
        points,
        radius,
        codes,
    })
}

/// Number of circular 0/1 transitions in a `points`-bit code.
pub fn transitions(code: u32, points: usize) -> u32 {
    let mask = if points == 32 {
        u32::MAX
    } else {
        (1u32 << points) - 1
    };
    let rotated = ((code >> 1) | ((code & 1) << (points - 1))) & mask;
    ((code ^ rotated) & mask).count_ones()
}

/// Uniform patterns (at most two transitions) in ascending code order.
#[derive(Debug, Clone)]
pub struct UniformLabels {
    points: usize,
    codes: Vec<u32>,
}

impl UniformLabels {
    pub fn new(points: usize) -> Self {
        assert!((1..=31).contains(&points));
        let full = (1u32 << points) - 1;
        let mut codes = vec![0, full];
        for run in 1..points {
            let base = (1u32 << run) - 1;
            for shift in 0..points {
                let rot = ((base << shift) | (base >> ((points - shift) % points))) & full;
                codes.push(rot);
            }
        }
        codes.sort_unstable();
        codes.dedup();
        Self { points, codes }
    }

    /// Distinct uniform labels; the non-uniform label comes after these.
    pub fn uniform_count(&self) -> usize {
        self.codes.len()
    }

    pub fn bin_count(&self) -> usize {
        self.codes.len() + 1
    }

    pub fn label(&self, code: u32) -> usize {
        self.codes.binary_search(&code).unwrap_or(self.codes.len())
    }

    pub fn points(&self) -> usize {
        self.points
    }
}

/// Uniform-pattern label for `code`; all non-uniform codes share the last
/// label `P(P-1) + 2`.
pub fn uniform_label(code: u32, points: usize) -> usize {
    UniformLabels::new(points).label(code)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UniformHistogram {
    pub bins: Vec<u64>,
    pub total: u64,
    pub radius: usize,
}

pub fn uniform_histogram(map: &LbpCodeMap) -> UniformHistogram {
    let labels = UniformLabels::new(map.points);
    let mut bins = vec![0u64; labels.bin_count()];
    for c in map.interior_codes() {
        bins[labels.label(c)] += 1;
    }
    UniformHistogram {
        total: bins.iter().sum(),
        bins,
        radius: map.radius,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HistogramStats {
    pub mean: f64,
    pub variance: f64,
    pub entropy: f64,
    pub energy: f64,
}

impl HistogramStats {
    pub fn to_array(&self) -> [f64; 4] {
        [self.mean, self.variance, self.entropy, self.energy]
    }
}

/// Mean and variance of the bin index weighted by counts, plus entropy
/// (natural log, `+1e-12` inside) and energy of the normalized histogram.
pub fn histogram_stats(bins: &[u64]) -> Result<HistogramStats> {
    let total: u64 = bins.iter().sum();
    if total == 0 {
        return Err(Error::EmptyHistogram);
    }
    let n = total as f64;
    let mean = bins
        .iter()
        .enumerate()
        .map(|(i, &c)| i as f64 * c as f64)
        .sum::<f64>()
        / n;
    let variance = bins
        .iter()
        .enumerate()
        .map(|(i, &c)| (i as f64 - mean).powi(2) * c as f64)
        .sum::<f64>()
        / n;
    let (mut entropy, mut energy) = (0.0, 0.0);
    for &c in bins {
        let p = c as f64 / n;
        entropy -= p * (p + ENTROPY_EPS).ln();
        energy += p * p;
    }
    Ok(HistogramStats {
        mean,
        variance,
        // The stabilizer makes a point mass come out at about -1e-12.
        entropy: entropy.max(0.0),
        energy,
    })
}

/// The 12 descriptors (3 radii x 4 statistics) of one plane.
pub fn plane_descriptors(plane: &GrayPlane) -> Result<[f64; 12]> {
    let mut out = [0.0; 12];
    for (k, &r) in RADII.iter().enumerate() {
        let map = lbp_code_map(plane, 8 * r, r)?;
        let stats = histogram_stats(&uniform_histogram(&map).bins)?;
        out[k * 4..(k + 1) * 4].copy_from_slice(&stats.to_array());
    }
    Ok(out)
}

/// 36-d texture descriptor: 3 channels x radii {1,2,3} (P = 8R) x
/// (mean, variance, entropy, energy).
pub fn extract_mlbp_features(img: &RgbImage) -> Result<FeatureVector> {
    let mut values = Vec::with_capacity(MLBP_DIM);
    for plane in split_channels(img) {
        values.extend_from_slice(&plane_descriptors(&plane)?);
    }
    FeatureVector::new(Family::Mlbp, MLBP_VERSION, values)
}
