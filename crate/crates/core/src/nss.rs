//! Natural-scene-statistics features: MSCN coefficient maps, gray-level
//! co-occurrence matrices built over them, and Haralick descriptors.
//!
//! The 72-d vector is laid out channel-major (R, G, B), then by orientation
//! (0°, 45°, 90°, 135°), then by descriptor in [`HaralickSet::to_array`]
//! order.

use crate::error::{Error, Result};
use crate::fusion::{Family, FeatureVector};
use crate::imaging::{split_channels, GrayPlane, RgbImage};

pub const MSCN_VERSION: &str = "1.0.0";
pub const MSCN_DIM: usize = 72;

pub const WINDOW: usize = 7;
pub const WINDOW_SIGMA: f64 = 7.0 / 6.0;
pub const QUANT_LEVELS: usize = 16;
pub const QUANT_CLIP: f64 = 3.0;
pub const GLCM_DISTANCE: usize = 1;

/// Row-major map of MSCN coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct MscnMap {
    pub width: usize,
    pub height: usize,
    pub coeffs: Vec<f64>,
}

impl MscnMap {
    pub fn mean(&self) -> f64 {
        self.coeffs.iter().sum::<f64>() / self.coeffs.len() as f64
    }
}

/// Gray-level plane of quantization bins.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QuantizedPlane {
    pub width: usize,
    pub height: usize,
    pub levels: usize,
    pub bins: Vec<u16>,
}

impl QuantizedPlane {
    #[inline]
    pub fn get(&self, x: usize, y: usize) -> usize {
        usize::from(self.bins[y * self.width + x])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Orientation {
    Deg0,
    Deg45,
    Deg90,
    Deg135,
}

impl Orientation {
    pub const ALL: [Orientation; 4] = [
        Orientation::Deg0,
        Orientation::Deg45,
        Orientation::Deg90,
        Orientation::Deg135,
    ];

    /// Unit displacement `(dx, dy)` with y growing downwards; 45° points
    /// up-right.
    pub fn unit_offset(self) -> (isize, isize) {
        match self {
            Orientation::Deg0 => (1, 0),
            Orientation::Deg45 => (1, -1),
            Orientation::Deg90 => (0, -1),
            Orientation::Deg135 => (-1, -1),
        }
    }
}

/// Normalized symmetric co-occurrence matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Glcm {
    pub levels: usize,
    pub orientation: Orientation,
    pub distance: usize,
    /// `levels x levels`, row-major.
    pub matrix: Vec<f64>,
}

impl Glcm {
    #[inline]
    pub fn p(&self, i: usize, j: usize) -> f64 {
        self.matrix[i * self.levels + j]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HaralickSet {
    pub contrast: f64,
    pub dissimilarity: f64,
    pub homogeneity: f64,
    pub asm: f64,
    pub energy: f64,
    pub correlation: f64,
}

impl HaralickSet {
    pub fn to_array(&self) -> [f64; 6] {
        [
            self.contrast,
            self.dissimilarity,
            self.homogeneity,
            self.asm,
            self.energy,
            self.correlation,
        ]
    }
}

/// Unit-sum 1-D Gaussian taps; the 2-D window is their outer product.
pub fn gaussian_taps(size: usize, sigma: f64) -> Vec<f64> {
    let c = (size / 2) as f64;
    let mut taps: Vec<f64> = (0..size)
        .map(|i| {
            let d = i as f64 - c;
            (-d * d / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let s: f64 = taps.iter().sum();
    taps.iter_mut().for_each(|t| *t /= s);
    taps
}

/// Symmetric reflection of an out-of-range index (edge sample repeated).
#[inline]
pub(crate) fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    let period = 2 * n;
    let mut m = i.rem_euclid(period);
    if m >= n {
        m = period - 1 - m;
    }
    m as usize
}

pub(crate) fn separable_blur(data: &[f64], width: usize, height: usize, taps: &[f64]) -> Vec<f64> {
    let r = (taps.len() / 2) as isize;
    let mut tmp = vec![0.0; data.len()];
    for y in 0..height {
        let row = &data[y * width..(y + 1) * width];
        for x in 0..width {
            let mut acc = 0.0;
            for (k, t) in taps.iter().enumerate() {
                acc += t * row[reflect(x as isize + k as isize - r, width)];
            }
            tmp[y * width + x] = acc;
        }
    }
    let mut out = vec![0.0; data.len()];
    for y in 0..height {
        for x in 0..width {
            let mut acc = 0.0;
            for (k, t) in taps.iter().enumerate() {
                acc += t * tmp[reflect(y as isize + k as isize - r, height) * width + x];
            }
            out[y * width + x] = acc;
        }
    }
    out
}

/// `C = (I - mu) / (sigma + 1)` with local moments from a 7x7 Gaussian
/// window and reflected borders.
pub fn mscn_transform(plane: &GrayPlane) -> Result<MscnMap> {
    let (w, h) = (plane.width(), plane.height());
    if w < WINDOW || h < WINDOW {
        return Err(Error::TooSmall {
            width: w,
            height: h,
            min: WINDOW,
        });
    }
    let taps = gaussian_taps(WINDOW, WINDOW_SIGMA);
    let data = plane.data();
    let mu = separable_blur(data, w, h, &taps);
    let sq: Vec<f64> = data.iter().map(|v| v * v).collect();
    let mu_sq = separable_blur(&sq, w, h, &taps);
    let coeffs = data
        .iter()
        .zip(mu.iter().zip(&mu_sq))
        .map(|(&v, (&m, &m2))| {
            let sigma = (m2 - m * m).max(0.0).sqrt();
            (v - m) / (sigma + 1.0)
        })
        .collect();
    Ok(MscnMap {
        width: w,
        height: h,
        coeffs,
    })
}

/// Maps a coefficient to `floor((clip(v) + clip) / (2 clip) * levels)`,
/// with `+clip` landing in the last bin.
#[inline]
pub fn quantize_value(v: f64, levels: usize, clip: f64) -> usize {
    let c = v.clamp(-clip, clip);
    let b = ((c + clip) / (2.0 * clip) * levels as f64).floor() as usize;
    b.min(levels - 1)
}

pub fn quantize_mscn(map: &MscnMap, levels: usize, clip: f64) -> QuantizedPlane {
    assert!(
        levels >= 2 && levels <= usize::from(u16::MAX),
        "levels out of range"
    );
    assert!(clip > 0.0, "clip must be positive");
    QuantizedPlane {
        width: map.width,
        height: map.height,
        levels,
        bins: map
            .coeffs
            .iter()
            .map(|&v| quantize_value(v, levels, clip) as u16)
            .collect(),
    }
}

/// Symmetric co-occurrence counts at the displacement implied by
/// `(orientation, distance)`, normalized to unit mass. Pairs never wrap
/// around the border.
pub fn glcm_compute(
    bins: &QuantizedPlane,
    orientation: Orientation,
    distance: usize,
) -> Result<Glcm> {
    let levels = bins.levels;
    let (ux, uy) = orientation.unit_offset();
    let (dx, dy) = (ux * distance as isize, uy * distance as isize);
    let (w, h) = (bins.width as isize, bins.height as isize);

    let x_range = dx.min(0).unsigned_abs() as isize..(w - dx.max(0));
    let y_range = dy.min(0).unsigned_abs() as isize..(h - dy.max(0));
    if x_range.is_empty() || y_range.is_empty() {
        return Err(Error::DegenerateGlcm);
    }

    let mut counts = vec![0u64; levels * levels];
    for y in y_range {
        for x in x_range.clone() {
            let a = bins.get(x as usize, y as usize);
            let b = bins.get((x + dx) as usize, (y + dy) as usize);
            counts[a * levels + b] += 1;
            counts[b * levels + a] += 1;
        }
    }
    let total: u64 = counts.iter().sum();
    let total = total as f64;
    Ok(Glcm {
        levels,
        orientation,
        distance,
        matrix: counts.iter().map(|&c| c as f64 / total).collect(),
    })
}

pub fn haralick_features(g: &Glcm) -> HaralickSet {
    let l = g.levels;
    let (mut contrast, mut dissimilarity, mut homogeneity, mut asm) = (0.0, 0.0, 0.0, 0.0);
    let (mut mu_i, mut mu_j) = (0.0, 0.0);
    for i in 0..l {
        for j in 0..l {
            let p = g.p(i, j);
            let d = i as f64 - j as f64;
            contrast += p * d * d;
            dissimilarity += p * d.abs();
            homogeneity += p / (1.0 + d * d);
            asm += p * p;
            mu_i += i as f64 * p;
            mu_j += j as f64 * p;
        }
    }
    let (mut var_i, mut var_j, mut cov) = (0.0, 0.0, 0.0);
    for i in 0..l {
        for j in 0..l {
            let p = g.p(i, j);
            let (di, dj) = (i as f64 - mu_i, j as f64 - mu_j);
            var_i += di * di * p;
            var_j += dj * dj * p;
            cov += di * dj * p;
        }
    }
    let denom = (var_i * var_j).sqrt();
    // A single-level matrix is perfectly self-correlated.
    let correlation = if denom <= 1e-12 {
        1.0
    } else {
        (cov / denom).clamp(-1.0, 1.0)
    };
    HaralickSet {
        contrast,
        dissimilarity,
        homogeneity,
        asm,
        energy: asm.sqrt(),
        correlation,
    }
}

/// The 24 descriptors (4 orientations x 6) of one plane.
pub fn plane_descriptors(plane: &GrayPlane) -> Result<[f64; 24]> {
    let map = mscn_transform(plane)?;
    let q = quantize_mscn(&map, QUANT_LEVELS, QUANT_CLIP);
    let mut out = [0.0; 24];
    for (o, orientation) in Orientation::ALL.into_iter().enumerate() {
        let g = glcm_compute(&q, orientation, GLCM_DISTANCE)?;
        out[o * 6..(o + 1) * 6].copy_from_slice(&haralick_features(&g).to_array());
    }
    Ok(out)
}

/// 72-d statistical descriptor: 3 channels x 4 orientations x 6 Haralick
/// features.
pub fn extract_mscn_features(img: &RgbImage) -> Result<FeatureVector> {
    let mut values = Vec::with_capacity(MSCN_DIM);
    for plane in split_channels(img) {
        values.extend_from_slice(&plane_descriptors(&plane)?);
    }
    FeatureVector::new(Family::Mscn, MSCN_VERSION, values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn plane(w: usize, h: usize, f: impl FnMut(usize, usize) -> f64) -> GrayPlane {
        GrayPlane::from_fn(w, h, f).unwrap()
    }

    // Direct 2-D convolution with an explicitly built 7x7 window.
    fn naive_mscn(p: &GrayPlane) -> Vec<f64> {
        let s2 = 2.0 * WINDOW_SIGMA * WINDOW_SIGMA;
        let mut k = [[0.0; 7]; 7];
        let mut ksum = 0.0;
        for (dy, row) in k.iter_mut().enumerate() {
            for (dx, v) in row.iter_mut().enumerate() {
                let (a, b) = (dx as f64 - 3.0, dy as f64 - 3.0);
                *v = (-(a * a + b * b) / s2).exp();
                ksum += *v;
            }
        }
        let mirror = |i: isize, n: isize| -> usize {
            let mut i = i;
            loop {
                if i < 0 {
                    i = -i - 1;
                } else if i >= n {
                    i = 2 * n - i - 1;
                } else {
                    return i as usize;
                }
            }
        };
        let (w, h) = (p.width() as isize, p.height() as isize);
        let mut out = Vec::new();
        for y in 0..h {
            for x in 0..w {
                let (mut m, mut m2) = (0.0, 0.0);
                for dy in 0..7isize {
                    for dx in 0..7isize {
                        let wgt = k[dy as usize][dx as usize] / ksum;
                        let v = p.get(mirror(x + dx - 3, w), mirror(y + dy - 3, h));
                        m += wgt * v;
                        m2 += wgt * v * v;
                    }
                }
                let sd = (m2 - m * m).max(0.0).sqrt();
                out.push((p.get(x as usize, y as usize) - m) / (sd + 1.0));
            }
        }
        out
    }

    fn brute_glcm(q: &QuantizedPlane, o: Orientation, d: usize) -> Vec<f64> {
        let (ux, uy) = o.unit_offset();
        let l = q.levels;
        let mut c = vec![0u64; l * l];
        for y in 0..q.height as isize {
            for x in 0..q.width as isize {
                let (nx, ny) = (x + ux * d as isize, y + uy * d as isize);
                if nx < 0 || ny < 0 || nx >= q.width as isize || ny >= q.height as isize {
                    continue;
                }
                let a = q.get(x as usize, y as usize);
                let b = q.get(nx as usize, ny as usize);
                c[a * l + b] += 1;
                c[b * l + a] += 1;
            }
        }
        let t = c.iter().sum::<u64>() as f64;
        c.iter().map(|&v| v as f64 / t).collect()
    }

    #[test]
    fn constant_plane_has_zero_mscn() {
        let m = mscn_transform(&plane(12, 9, |_, _| 73.0)).unwrap();
        assert!(m.coeffs.iter().all(|&c| c.abs() < 1e-9));
    }

    #[test]
    fn bright_impulse_matches_oracle() {
        let p = plane(15, 15, |x, y| if (x, y) == (7, 7) { 255.0 } else { 0.0 });
        let m = mscn_transform(&p).unwrap();
        assert!(m.coeffs[7 * 15 + 7] > 0.0);
        let oracle = naive_mscn(&p);
        for (a, b) in m.coeffs.iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-9);
        }
        // Mirror symmetry of the response around the impulse.
        for d in 1..4 {
            let l = m.coeffs[7 * 15 + 7 - d];
            let r = m.coeffs[7 * 15 + 7 + d];
            assert!((l - r).abs() < 1e-9);
        }
    }

    #[test]
    fn random_plane_matches_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let p = plane(64, 64, |_, _| rng.random_range(0.0..255.0));
        let m = mscn_transform(&p).unwrap();
        let oracle = naive_mscn(&p);
        let worst = m
            .coeffs
            .iter()
            .zip(&oracle)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(worst < 1e-9, "max deviation {worst}");
    }

    #[test]
    fn mscn_rejects_small_plane() {
        assert!(matches!(
            mscn_transform(&plane(6, 10, |_, _| 0.0)),
            Err(Error::TooSmall { .. })
        ));
    }

    #[test]
    fn quantization_boundaries() {
        assert_eq!(quantize_value(0.0, 16, 3.0), 8);
        assert_eq!(quantize_value(-5.0, 16, 3.0), 0);
        assert_eq!(quantize_value(-3.0, 16, 3.0), 0);
        assert_eq!(quantize_value(3.0, 16, 3.0), 15);
        assert_eq!(quantize_value(1e9, 16, 3.0), 15);
    }

    fn qplane(
        w: usize,
        h: usize,
        levels: usize,
        f: impl Fn(usize, usize) -> u16,
    ) -> QuantizedPlane {
        let mut bins = Vec::new();
        for y in 0..h {
            for x in 0..w {
                bins.push(f(x, y));
            }
        }
        QuantizedPlane {
            width: w,
            height: h,
            levels,
            bins,
        }
    }

    #[test]
    fn constant_glcm_is_single_cell() {
        let q = qplane(10, 10, 16, |_, _| 5);
        for o in Orientation::ALL {
            let g = glcm_compute(&q, o, 1).unwrap();
            assert_eq!(g.p(5, 5), 1.0);
            assert_eq!(g.matrix.iter().filter(|&&p| p != 0.0).count(), 1);
        }
    }

    #[test]
    fn checkerboard_horizontal_glcm() {
        let q = qplane(8, 8, 2, |x, y| ((x + y) % 2) as u16);
        let g = glcm_compute(&q, Orientation::Deg0, 1).unwrap();
        assert_eq!(g.p(0, 1), 0.5);
        assert_eq!(g.p(1, 0), 0.5);
        assert_eq!(g.p(0, 0), 0.0);
    }

    #[test]
    fn degenerate_geometry() {
        let q = qplane(1, 5, 2, |_, _| 0);
        assert!(matches!(
            glcm_compute(&q, Orientation::Deg0, 1),
            Err(Error::DegenerateGlcm)
        ));
    }

    #[test]
    fn random_glcm_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let q = qplane(16, 16, 16, |_, _| 0);
            let q = QuantizedPlane {
                bins: q.bins.iter().map(|_| rng.random_range(0..16)).collect(),
                ..q
            };
            for o in Orientation::ALL {
                for d in 1..3 {
                    let g = glcm_compute(&q, o, d).unwrap();
                    assert_eq!(g.matrix, brute_glcm(&q, o, d));
                    for i in 0..16 {
                        for j in 0..16 {
                            assert_eq!(g.p(i, j), g.p(j, i));
                        }
                    }
                    assert!((g.matrix.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn haralick_constant_convention() {
        let q = qplane(10, 10, 16, |_, _| 3);
        let h = haralick_features(&glcm_compute(&q, Orientation::Deg45, 1).unwrap());
        assert_eq!(h.to_array(), [0.0, 0.0, 1.0, 1.0, 1.0, 1.0]);
    }

    #[test]
    fn haralick_checkerboard() {
        let g = Glcm {
            levels: 2,
            orientation: Orientation::Deg0,
            distance: 1,
            matrix: vec![0.0, 0.5, 0.5, 0.0],
        };
        let h = haralick_features(&g);
        assert!((h.contrast - 1.0).abs() < 1e-12);
        assert!((h.dissimilarity - 1.0).abs() < 1e-12);
        assert!((h.homogeneity - 0.5).abs() < 1e-12);
        assert!((h.asm - 0.5).abs() < 1e-12);
        assert!((h.energy - 0.5f64.sqrt()).abs() < 1e-12);
        assert!((h.correlation + 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_image_tiles_constant_pattern() {
        let img = RgbImage::from_fn(20, 16, |_, _| [40, 90, 200]).unwrap();
        let f = extract_mscn_features(&img).unwrap();
        assert_eq!(f.values.len(), 72);
        for chunk in f.values.chunks(6) {
            assert_eq!(chunk, &[0.0, 0.0, 1.0, 1.0, 1.0, 1.0]);
        }
    }

    #[test]
    fn natural_like_image_has_centred_mscn() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let raw: Vec<f64> = (0..64 * 64).map(|_| rng.random_range(0.0..255.0)).collect();
        // Box-smoothed noise: locally correlated like a photograph.
        let p = plane(64, 64, |x, y| {
            let mut s = 0.0;
            for dy in 0..3 {
                for dx in 0..3 {
                    s += raw[((y + dy) % 64) * 64 + (x + dx) % 64];
                }
            }
            s / 9.0
        });
        let m = mscn_transform(&p).unwrap();
        assert!(m.mean().abs() <= 0.5);
        assert!(m.coeffs.iter().all(|c| c.is_finite()));
    }
}
