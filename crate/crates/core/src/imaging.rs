//! Image decoding, colour conversion and the resize/crop step used before
//! semantic encoding.

use std::path::Path;

use image::imageops::FilterType;

use crate::error::{Error, Result};

/// Smallest accepted side: a 7x7 filter window plus the radius-3 LBP ring.
pub const MIN_SIDE: usize = 8;

/// 8-bit interleaved RGB raster, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbImage {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl RgbImage {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        if data.len() != width * height * 3 {
            return Err(Error::DimMismatch {
                expected: width * height * 3,
                actual: data.len(),
                context: Some("rgb sample buffer".into()),
            });
        }
        if width < MIN_SIDE || height < MIN_SIDE {
            return Err(Error::TooSmall {
                width,
                height,
                min: MIN_SIDE,
            });
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    /// Builds an image by evaluating `f(x, y)` for every pixel.
    pub fn from_fn(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> [u8; 3],
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height * 3);
        for y in 0..height {
            for x in 0..width {
                data.extend_from_slice(&f(x, y));
            }
        }
        Self::new(width, height, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    fn to_image_buffer(&self) -> image::RgbImage {
        image::RgbImage::from_raw(self.width as u32, self.height as u32, self.data.clone())
            .expect("buffer length checked at construction")
    }

    // Intermediate images produced while resizing may be smaller than
    // MIN_SIDE, so this bypasses the size check.
    fn from_image_buffer(buf: image::RgbImage) -> Self {
        Self {
            width: buf.width() as usize,
            height: buf.height() as usize,
            data: buf.into_raw(),
        }
    }

    /// Encodes the image as PNG at `path`.
    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        self.to_image_buffer()
            .save_with_format(path, image::ImageFormat::Png)
            .map_err(|e| match e {
                image::ImageError::IoError(source) => Error::io(path, source),
                other => Error::Decode {
                    path: path.to_path_buf(),
                    message: other.to_string(),
                },
            })
    }
}

/// Single-channel floating point plane with values in `[0, 255]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayPlane {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl GrayPlane {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::DimMismatch {
                expected: width * height,
                actual: data.len(),
                context: Some("gray plane buffer".into()),
            });
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidFeature(format!(
                "non-finite sample at index {i}"
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> f64,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self::new(width, height, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }
}

/// Reads a PNG, JPEG or BMP file into an sRGB raster.
pub fn decode_image(path: impl AsRef<Path>) -> Result<RgbImage> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_bytes(&bytes).map_err(|e| match e {
        Error::Decode { message, .. } => Error::Decode {
            path: path.to_path_buf(),
            message,
        },
        other => other,
    })
}

/// Decodes an in-memory PNG, JPEG or BMP stream.
pub fn decode_bytes(bytes: &[u8]) -> Result<RgbImage> {
    let decode_err = |message: String| Error::Decode {
        path: Default::default(),
        message,
    };
    let format = image::guess_format(bytes).map_err(|e| decode_err(e.to_string()))?;
    if !matches!(
        format,
        image::ImageFormat::Png | image::ImageFormat::Jpeg | image::ImageFormat::Bmp
    ) {
        return Err(decode_err(format!("unsupported format {format:?}")));
    }
    let img = image::load_from_memory_with_format(bytes, format)
        .map_err(|e| decode_err(e.to_string()))?
        .to_rgb8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    RgbImage::new(w, h, img.into_raw())
}

/// BT.601 luma: `0.299 R + 0.587 G + 0.114 B`.
pub fn to_gray(img: &RgbImage) -> GrayPlane {
    let data = img
        .data
        .chunks_exact(3)
        .map(|p| 0.299 * f64::from(p[0]) + 0.587 * f64::from(p[1]) + 0.114 * f64::from(p[2]))
        .collect();
    GrayPlane {
        width: img.width,
        height: img.height,
        data,
    }
}

/// Splits the image into its R, G and B planes.
pub fn split_channels(img: &RgbImage) -> [GrayPlane; 3] {
    let n = img.width * img.height;
    let mut planes = [
        Vec::with_capacity(n),
        Vec::with_capacity(n),
        Vec::with_capacity(n),
    ];
    for p in img.data.chunks_exact(3) {
        for (plane, &v) in planes.iter_mut().zip(p) {
            plane.push(f64::from(v));
        }
    }
    planes.map(|data| GrayPlane {
        width: img.width,
        height: img.height,
        data,
    })
}

/// Inverse of [`split_channels`]; values are rounded and clamped to `0..=255`.
pub fn merge_channels(planes: &[GrayPlane; 3]) -> Result<RgbImage> {
    let (w, h) = (planes[0].width, planes[0].height);
    if planes.iter().any(|p| p.width != w || p.height != h) {
        return Err(Error::InvalidFeature(
            "channel planes differ in size".into(),
        ));
    }
    let mut data = Vec::with_capacity(w * h * 3);
    for i in 0..w * h {
        for p in planes {
            data.push(p.data[i].round().clamp(0.0, 255.0) as u8);
        }
    }
    RgbImage::new(w, h, data)
}

/// Resizes the shorter edge to `side` (bicubic), then crops the centre
/// `side x side` window.
pub fn resize_center_crop(img: &RgbImage, side: usize) -> RgbImage {
    assert!(side >= 1, "side must be positive");
    let (nw, nh, x0, y0) = resize_crop_geometry(img.width, img.height, side);
    let resized = if (nw, nh) == (img.width, img.height) {
        img.clone()
    } else {
        let buf = image::imageops::resize(
            &img.to_image_buffer(),
            nw as u32,
            nh as u32,
            FilterType::CatmullRom,
        );
        RgbImage::from_image_buffer(buf)
    };
    crop(&resized, x0, y0, side, side)
}

/// Returns the crop offsets `(x0, y0)` and intermediate size used by
/// [`resize_center_crop`] for an input of the given size.
pub fn resize_crop_geometry(
    width: usize,
    height: usize,
    side: usize,
) -> (usize, usize, usize, usize) {
    let short = width.min(height);
    let (nw, nh) = if short == side {
        (width, height)
    } else {
        let scale = side as f64 / short as f64;
        if width <= height {
            (side, ((height as f64 * scale).round() as usize).max(side))
        } else {
            (((width as f64 * scale).round() as usize).max(side), side)
        }
    };
    (nw, nh, (nw - side) / 2, (nh - side) / 2)
}

fn crop(img: &RgbImage, x0: usize, y0: usize, w: usize, h: usize) -> RgbImage {
    if x0 == 0 && y0 == 0 && w == img.width && h == img.height {
        return img.clone();
    }
    let mut data = Vec::with_capacity(w * h * 3);
    for y in y0..y0 + h {
        let start = (y * img.width + x0) * 3;
        data.extend_from_slice(&img.data[start..start + w * 3]);
    }
    RgbImage {
        width: w,
        height: h,
        data,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn uniform(rgb: [u8; 3], w: usize, h: usize) -> RgbImage {
        RgbImage::from_fn(w, h, |_, _| rgb).unwrap()
    }

    #[test]
    fn gray_of_uniform_gray_is_fixed_point() {
        let g = to_gray(&uniform([100, 100, 100], 9, 9));
        assert!(g.data().iter().all(|&v| (v - 100.0).abs() < 1e-12));
    }

    #[test]
    fn gray_of_pure_red_and_white() {
        let red = to_gray(&uniform([255, 0, 0], 8, 8));
        assert!(red.data().iter().all(|&v| (v - 76.245).abs() < 1e-9));
        let white = to_gray(&uniform([255, 255, 255], 8, 8));
        assert!(white.data().iter().all(|&v| (v - 255.0).abs() < 1e-9));
    }

    #[test]
    fn split_uniform_image() {
        let [r, g, b] = split_channels(&uniform([10, 20, 30], 8, 8));
        assert!(r.data().iter().all(|&v| v == 10.0));
        assert!(g.data().iter().all(|&v| v == 20.0));
        assert!(b.data().iter().all(|&v| v == 30.0));
    }

    #[test]
    fn too_small_is_rejected() {
        assert!(matches!(
            RgbImage::new(4, 4, vec![0; 48]),
            Err(Error::TooSmall { .. })
        ));
    }

    #[test]
    fn crop_geometry() {
        assert_eq!(resize_crop_geometry(300, 500, 224), (224, 373, 0, 74));
        assert_eq!(resize_crop_geometry(448, 224, 224), (448, 224, 112, 0));
        assert_eq!(resize_crop_geometry(224, 224, 224), (224, 224, 0, 0));
    }

    #[test]
    fn center_crop_of_wide_image_keeps_middle_columns() {
        let img = RgbImage::from_fn(448, 224, |x, y| {
            [(x % 256) as u8, (x / 256) as u8, (y % 256) as u8]
        })
        .unwrap();
        let out = resize_center_crop(&img, 224);
        assert_eq!((out.width(), out.height()), (224, 224));
        for y in [0, 100, 223] {
            for x in [0, 50, 223] {
                assert_eq!(out.pixel(x, y), img.pixel(x + 112, y));
            }
        }
    }

    #[test]
    fn resize_of_exact_size_is_identity() {
        let img = RgbImage::from_fn(224, 224, |x, y| {
            [(x * 7 % 256) as u8, (y * 3 % 256) as u8, 9]
        })
        .unwrap();
        assert_eq!(resize_center_crop(&img, 224), img);
    }

    #[test]
    fn resize_tall_image() {
        let img =
            RgbImage::from_fn(300, 500, |x, y| [(x % 256) as u8, (y % 256) as u8, 0]).unwrap();
        let out = resize_center_crop(&img, 224);
        assert_eq!((out.width(), out.height()), (224, 224));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn split_then_merge_is_identity(w in 8usize..20, h in 8usize..20, seed in any::<u64>()) {
            let mut s = seed;
            let img = RgbImage::from_fn(w, h, |_, _| {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                let b = s.to_le_bytes();
                [b[5], b[6], b[7]]
            }).unwrap();
            let merged = merge_channels(&split_channels(&img)).unwrap();
            prop_assert_eq!(merged, img);
        }

        #[test]
        fn gray_is_idempotent_on_gray_input(v in any::<u8>()) {
            let g = to_gray(&uniform([v, v, v], 8, 8));
            prop_assert!(g.data().iter().all(|&x| (x - f64::from(v)).abs() < 1e-9));
        }

        #[test]
        fn resize_output_is_square(w in 8usize..120, h in 8usize..120, side in 1usize..40) {
            let img = uniform([1, 2, 3], w, h);
            let out = resize_center_crop(&img, side);
            prop_assert_eq!((out.width(), out.height()), (side, side));
        }
    }
}
