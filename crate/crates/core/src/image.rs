//! 8-bit grayscale rasters and the preprocessing chain applied to every frame:
//! 2×2 downsampling, min/max range normalization, 5×5 Gaussian smoothing and a
//! 3×3 median filter. Every neighbourhood operation replicates edge pixels at
//! the border.

use std::path::Path;

use image::{DynamicImage, ImageFormat};

use crate::error::{Error, Result};

/// Owned single-channel 8-bit raster, row-major.
#[derive(Clone, PartialEq, Eq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl std::fmt::Debug for GrayImage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("GrayImage")
            .field("width", &self.width)
            .field("height", &self.height)
            .finish_non_exhaustive()
    }
}

impl GrayImage {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidImage(format!(
                "dimensions must be positive, got {width}x{height}"
            )));
        }
        if data.len() != width * height {
            return Err(Error::InvalidImage(format!(
                "buffer holds {} values, {width}x{height} needs {}",
                data.len(),
                width * height
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    /// Image filled with one intensity.
    pub fn filled(width: usize, height: usize, value: u8) -> Self {
        assert!(width > 0 && height > 0, "image dimensions must be positive");
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> u8) -> Self {
        assert!(width > 0 && height > 0, "image dimensions must be positive");
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn area(&self) -> usize {
        self.width * self.height
    }

    #[inline]
    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn into_data(self) -> Vec<u8> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: u8) {
        self.data[y * self.width + x] = value;
    }

    /// Pixel lookup with edge replication for out-of-range coordinates.
    #[inline]
    pub fn get_clamped(&self, x: isize, y: isize) -> u8 {
        let xc = x.clamp(0, self.width as isize - 1) as usize;
        let yc = y.clamp(0, self.height as isize - 1) as usize;
        self.data[yc * self.width + xc]
    }

    /// Pixel lookup that returns `None` outside the raster.
    #[inline]
    pub fn get_checked(&self, x: isize, y: isize) -> Option<u8> {
        if x < 0 || y < 0 || x as usize >= self.width || y as usize >= self.height {
            None
        } else {
            Some(self.data[y as usize * self.width + x as usize])
        }
    }

    pub fn full_rect(&self) -> Rect {
        Rect {
            x0: 0,
            y0: 0,
            w: self.width,
            h: self.height,
        }
    }
}

/// Axis-aligned pixel rectangle, `[x0, x0 + w) × [y0, y0 + h)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Rect {
    pub x0: usize,
    pub y0: usize,
    pub w: usize,
    pub h: usize,
}

impl Rect {
    pub fn new(x0: usize, y0: usize, w: usize, h: usize) -> Self {
        Self { x0, y0, w, h }
    }

    pub fn fits_within(&self, width: usize, height: usize) -> bool {
        self.w > 0 && self.h > 0 && self.x0 + self.w <= width && self.y0 + self.h <= height
    }

    /// Square of half-side `half` around `(cx, cy)`, clipped to the image.
    /// Returns `None` when the clipped rectangle is empty.
    pub fn around(cx: f64, cy: f64, half: f64, width: usize, height: usize) -> Option<Rect> {
        if !(cx.is_finite() && cy.is_finite() && half.is_finite()) {
            return None;
        }
        let x0 = (cx - half).floor().max(0.0);
        let y0 = (cy - half).floor().max(0.0);
        let x1 = (cx + half).ceil().min(width as f64 - 1.0);
        let y1 = (cy + half).ceil().min(height as f64 - 1.0);
        if x1 < x0 || y1 < y0 {
            return None;
        }
        let (x0, y0) = (x0 as usize, y0 as usize);
        Some(Rect {
            x0,
            y0,
            w: x1 as usize - x0 + 1,
            h: y1 as usize - y0 + 1,
        })
    }

    pub fn is_full(&self, width: usize, height: usize) -> bool {
        self.x0 == 0 && self.y0 == 0 && self.w == width && self.h == height
    }
}

#[inline]
fn round_half_up(v: f64) -> u8 {
    (v + 0.5).floor().clamp(0.0, 255.0) as u8
}

/// Halves both dimensions, each output pixel being the rounded mean of its
/// 2×2 source block. An odd trailing row/column is dropped.
pub fn downsample_half(img: &GrayImage) -> Result<GrayImage> {
    if img.width < 2 || img.height < 2 {
        return Err(Error::DimensionTooSmall {
            width: img.width,
            height: img.height,
            min: 2,
        });
    }
    let (w, h) = (img.width / 2, img.height / 2);
    let src = &img.data;
    let sw = img.width;
    let mut data = Vec::with_capacity(w * h);
    for y in 0..h {
        let r0 = &src[2 * y * sw..2 * y * sw + sw];
        let r1 = &src[(2 * y + 1) * sw..(2 * y + 1) * sw + sw];
        for x in 0..w {
            let sum = r0[2 * x] as u32 + r0[2 * x + 1] as u32 + r1[2 * x] as u32 + r1[2 * x + 1] as u32;
            data.push(((sum + 2) / 4) as u8);
        }
    }
    Ok(GrayImage {
        width: w,
        height: h,
        data,
    })
}

/// Linear stretch mapping the darkest pixel to 0 and the brightest to 255.
/// A constant image maps to all zeros.
pub fn normalize_range(img: &GrayImage) -> GrayImage {
    let (lo, hi) = img
        .data
        .iter()
        .fold((u8::MAX, u8::MIN), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if lo == hi {
        return GrayImage::filled(img.width, img.height, 0);
    }
    let range = (hi - lo) as u32;
    let mut lut = [0u8; 256];
    for (v, slot) in lut.iter_mut().enumerate().skip(lo as usize).take(range as usize + 1) {
        // floor(255 * (v - lo) / range + 1/2) in integers
        let num = 2 * 255 * (v as u32 - lo as u32) + range;
        *slot = (num / (2 * range)) as u8;
    }
    GrayImage {
        width: img.width,
        height: img.height,
        data: img.data.iter().map(|&v| lut[v as usize]).collect(),
    }
}

/// Normalized 1-D Gaussian weights for offsets -2..=2.
pub fn gaussian_kernel_5(sigma: f64) -> [f64; 5] {
    let mut k = [0.0; 5];
    for (i, w) in k.iter_mut().enumerate() {
        let d = i as f64 - 2.0;
        *w = (-d * d / (2.0 * sigma * sigma)).exp();
    }
    let sum: f64 = k.iter().sum();
    k.iter_mut().for_each(|w| *w /= sum);
    k
}

/// Separable 5×5 Gaussian blur. Intermediate values stay in floating point and
/// are rounded once at the end.
pub fn gaussian_blur_5x5(img: &GrayImage, sigma: f64) -> Result<GrayImage> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "gaussian sigma must be positive, got {sigma}"
        )));
    }
    let k = gaussian_kernel_5(sigma);
    let (w, h) = (img.width, img.height);
    let clamp_x = |x: isize| x.clamp(0, w as isize - 1) as usize;
    let clamp_y = |y: isize| y.clamp(0, h as isize - 1) as usize;

    let mut tmp = vec![0.0f64; w * h];
    for y in 0..h {
        let row = &img.data[y * w..(y + 1) * w];
        let out = &mut tmp[y * w..(y + 1) * w];
        for (x, o) in out.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (i, kw) in k.iter().enumerate() {
                acc += kw * row[clamp_x(x as isize + i as isize - 2)] as f64;
            }
            *o = acc;
        }
    }
    let mut data = vec![0u8; w * h];
    for y in 0..h {
        let rows: [usize; 5] = std::array::from_fn(|i| clamp_y(y as isize + i as isize - 2) * w);
        for x in 0..w {
            let mut acc = 0.0;
            for (kw, r) in k.iter().zip(rows.iter()) {
                acc += kw * tmp[r + x];
            }
            data[y * w + x] = round_half_up(acc);
        }
    }
    Ok(GrayImage {
        width: w,
        height: h,
        data,
    })
}

/// Median of nine values with the classic 19-exchange network.
#[inline]
fn median9(mut p: [u8; 9]) -> u8 {
    macro_rules! s {
        ($i:expr, $j:expr) => {{
            let (a, b) = (p[$i], p[$j]);
            p[$i] = a.min(b);
            p[$j] = a.max(b);
        }};
    }
    s!(1, 2); s!(4, 5); s!(7, 8); s!(0, 1); s!(3, 4); s!(6, 7);
    s!(1, 2); s!(4, 5); s!(7, 8); s!(0, 3); s!(5, 8); s!(4, 7);
    s!(3, 6); s!(1, 4); s!(2, 5); s!(4, 7); s!(4, 2); s!(6, 4);
    s!(4, 2);
    p[4]
}

/// 3×3 median filter.
pub fn median_filter_3x3(img: &GrayImage) -> GrayImage {
    let (w, h) = (img.width, img.height);
    let mut data = vec![0u8; w * h];
    for y in 0..h {
        let ys = [y.saturating_sub(1), y, (y + 1).min(h - 1)];
        for x in 0..w {
            let xs = [x.saturating_sub(1), x, (x + 1).min(w - 1)];
            let mut win = [0u8; 9];
            for (j, &yy) in ys.iter().enumerate() {
                for (i, &xx) in xs.iter().enumerate() {
                    win[j * 3 + i] = img.data[yy * w + xx];
                }
            }
            data[y * w + x] = median9(win);
        }
    }
    GrayImage {
        width: w,
        height: h,
        data,
    }
}

/// Exact copy of the pixels inside `roi`.
pub fn crop(img: &GrayImage, roi: Rect) -> Result<GrayImage> {
    if !roi.fits_within(img.width, img.height) {
        return Err(Error::OutOfBounds {
            x0: roi.x0,
            y0: roi.y0,
            w: roi.w,
            h: roi.h,
            width: img.width,
            height: img.height,
        });
    }
    let mut data = Vec::with_capacity(roi.w * roi.h);
    for y in roi.y0..roi.y0 + roi.h {
        let start = y * img.width + roi.x0;
        data.extend_from_slice(&img.data[start..start + roi.w]);
    }
    Ok(GrayImage {
        width: roi.w,
        height: roi.h,
        data,
    })
}

/// Luminance of an RGB triple, `0.299 R + 0.587 G + 0.114 B`, rounded.
#[inline]
pub fn luminance(r: u8, g: u8, b: u8) -> u8 {
    round_half_up(0.299 * r as f64 + 0.587 * g as f64 + 0.114 * b as f64)
}

fn from_dynamic(img: DynamicImage) -> Result<GrayImage> {
    let (w, h) = (img.width() as usize, img.height() as usize);
    let data = match img {
        DynamicImage::ImageLuma8(buf) => buf.into_raw(),
        DynamicImage::ImageLumaA8(_) | DynamicImage::ImageLuma16(_) | DynamicImage::ImageLumaA16(_) => {
            img.to_luma8().into_raw()
        }
        other => other
            .to_rgb8()
            .pixels()
            .map(|p| luminance(p[0], p[1], p[2]))
            .collect(),
    };
    GrayImage::new(w, h, data)
}

/// Loads a PGM or PNG file. Colour inputs are reduced to luminance.
pub fn load_image(path: impl AsRef<Path>) -> Result<GrayImage> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let format = image::guess_format(&bytes).map_err(|e| Error::Decode {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let img = image::load_from_memory_with_format(&bytes, format).map_err(|e| Error::Decode {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    from_dynamic(img).map_err(|e| Error::Decode {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

/// Writes binary (P5) PGM bytes.
pub fn encode_pgm(img: &GrayImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend_from_slice(&img.data);
    out
}

/// Saves as PGM when the extension is `.pgm`, otherwise as 8-bit gray PNG.
pub fn save_image(img: &GrayImage, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let is_pgm = path
        .extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("pgm"));
    if is_pgm {
        return std::fs::write(path, encode_pgm(img)).map_err(|e| Error::io(path, e));
    }
    image::save_buffer_with_format(
        path,
        &img.data,
        img.width as u32,
        img.height as u32,
        image::ExtendedColorType::L8,
        ImageFormat::Png,
    )
    .map_err(|e| match e {
        image::ImageError::IoError(io) => Error::io(path, io),
        other => Error::Decode {
            path: path.to_path_buf(),
            message: other.to_string(),
        },
    })
}

/// Full per-frame preprocessing: downsample, normalize, blur, median.
pub fn preprocess(img: &GrayImage, sigma: f64) -> Result<GrayImage> {
    let half = downsample_half(img)?;
    let norm = normalize_range(&half);
    let blurred = gaussian_blur_5x5(&norm, sigma)?;
    Ok(median_filter_3x3(&blurred))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn img(w: usize, h: usize, data: &[u8]) -> GrayImage {
        GrayImage::new(w, h, data.to_vec()).unwrap()
    }

    #[test]
    fn downsample_block_mean() {
        let out = downsample_half(&img(2, 2, &[10, 20, 30, 40])).unwrap();
        assert_eq!((out.width(), out.height()), (1, 1));
        assert_eq!(out.data(), &[25]);
    }

    #[test]
    fn downsample_constant() {
        let out = downsample_half(&GrayImage::filled(640, 480, 100)).unwrap();
        assert_eq!((out.width(), out.height()), (320, 240));
        assert!(out.data().iter().all(|&v| v == 100));
    }

    #[test]
    fn downsample_checkerboard_rounds_half_up() {
        let src = GrayImage::from_fn(4, 4, |x, y| if (x + y) % 2 == 0 { 0 } else { 255 });
        let out = downsample_half(&src).unwrap();
        // block-mean oracle: (0 + 255 + 255 + 0) / 4 = 127.5 -> 128
        let expect: Vec<u8> = (0..4)
            .map(|i| {
                let (bx, by) = (i % 2, i / 2);
                let s: u32 = (0..4)
                    .map(|k| src.get(2 * bx + k % 2, 2 * by + k / 2) as u32)
                    .sum();
                (s as f64 / 4.0 + 0.5).floor() as u8
            })
            .collect();
        assert_eq!(out.data(), expect.as_slice());
        assert!(out.data().iter().all(|&v| v == 128));
    }

    #[test]
    fn downsample_rejects_tiny() {
        assert!(matches!(
            downsample_half(&GrayImage::filled(1, 5, 0)),
            Err(Error::DimensionTooSmall { .. })
        ));
    }

    #[test]
    fn downsample_pyramid_of_constant() {
        let big = GrayImage::filled(4096, 4096, 77);
        let q = downsample_half(&downsample_half(&big).unwrap()).unwrap();
        assert_eq!((q.width(), q.height()), (1024, 1024));
        assert!(q.data().iter().all(|&v| v == 77));
    }

    #[test]
    fn normalize_examples() {
        assert_eq!(normalize_range(&img(3, 1, &[50, 100, 150])).data(), &[0, 128, 255]);
        assert!(normalize_range(&GrayImage::filled(4, 4, 77)).data().iter().all(|&v| v == 0));
        let full = img(4, 1, &[0, 17, 200, 255]);
        assert_eq!(normalize_range(&full), full);
    }

    #[test]
    fn blur_constant_is_identity() {
        let c = GrayImage::filled(17, 9, 143);
        assert_eq!(gaussian_blur_5x5(&c, 1.0).unwrap(), c);
        assert_eq!(gaussian_blur_5x5(&c, 2.7).unwrap(), c);
    }

    #[test]
    fn blur_impulse_matches_direct_convolution() {
        let mut src = GrayImage::filled(11, 11, 0);
        src.set(5, 5, 255);
        let out = gaussian_blur_5x5(&src, 1.0).unwrap();
        // direct 2-D oracle: separable weights from the closed-form Gaussian
        let g = |d: f64| (-d * d / 2.0).exp();
        let norm: f64 = (-2..=2).map(|d| g(d as f64)).sum();
        for dy in -2i32..=2 {
            for dx in -2i32..=2 {
                let w = g(dx as f64) * g(dy as f64) / (norm * norm);
                let expect = (255.0 * w + 0.5).floor() as u8;
                assert_eq!(out.get((5 + dx) as usize, (5 + dy) as usize), expect, "at {dx},{dy}");
            }
        }
        assert_eq!(out.get(5, 2), 0);
        assert_eq!(out.get(8, 5), 0);
        assert_eq!(out.get(5, 5), 41);
    }

    #[test]
    fn blur_rejects_bad_sigma() {
        assert!(gaussian_blur_5x5(&GrayImage::filled(3, 3, 0), 0.0).is_err());
    }

    #[test]
    fn blur_preserves_mirror_symmetry() {
        let src = GrayImage::from_fn(12, 7, |x, y| ((x.min(11 - x) * 37 + y * 11) % 256) as u8);
        let out = gaussian_blur_5x5(&src, 1.3).unwrap();
        for y in 0..7 {
            for x in 0..12 {
                assert_eq!(out.get(x, y), out.get(11 - x, y));
            }
        }
    }

    #[test]
    fn median_removes_impulse() {
        let mut src = GrayImage::filled(7, 7, 60);
        src.set(3, 3, 250);
        assert_eq!(median_filter_3x3(&src), GrayImage::filled(7, 7, 60));
    }

    #[test]
    fn median_matches_sort_oracle() {
        let pattern = [
            0, 255, 10, 255, 0, //
            255, 30, 0, 40, 255, //
            12, 0, 255, 0, 90, //
            255, 50, 0, 255, 0, //
            0, 255, 60, 0, 255,
        ];
        let src = img(5, 5, &pattern);
        let out = median_filter_3x3(&src);
        for y in 0..5isize {
            for x in 0..5isize {
                let mut win: Vec<u8> = (-1..=1)
                    .flat_map(|dy| (-1..=1).map(move |dx| (dx, dy)))
                    .map(|(dx, dy)| src.get_clamped(x + dx, y + dy))
                    .collect();
                win.sort_unstable();
                assert_eq!(out.get(x as usize, y as usize), win[4]);
            }
        }
    }

    #[test]
    fn crop_examples() {
        let grad = GrayImage::from_fn(20, 16, |x, y| (x * 10 + y) as u8);
        assert_eq!(crop(&grad, grad.full_rect()).unwrap(), grad);
        assert_eq!(crop(&grad, Rect::new(3, 4, 1, 1)).unwrap().data(), &[grad.get(3, 4)]);
        let c = crop(&grad, Rect::new(5, 2, 10, 10)).unwrap();
        for y in 0..10 {
            for x in 0..10 {
                assert_eq!(c.get(x, y), ((x + 5) * 10 + y + 2) as u8);
            }
        }
        assert!(matches!(crop(&grad, Rect::new(15, 0, 6, 2)), Err(Error::OutOfBounds { .. })));
        assert!(crop(&grad, Rect::new(0, 0, 0, 2)).is_err());
    }

    #[test]
    fn rect_around_clips() {
        let r = Rect::around(2.0, 3.0, 10.0, 50, 40).unwrap();
        assert_eq!((r.x0, r.y0), (0, 0));
        assert_eq!((r.w, r.h), (13, 14));
        assert!(r.fits_within(50, 40));
        let r = Rect::around(45.0, 35.0, 10.0, 50, 40).unwrap();
        assert!(r.fits_within(50, 40));
        assert_eq!(r.x0 + r.w, 50);
    }

    #[test]
    fn luminance_weights() {
        assert_eq!(luminance(255, 255, 255), 255);
        assert_eq!(luminance(255, 0, 0), 76);
        assert_eq!(luminance(0, 255, 0), 150);
        assert_eq!(luminance(0, 0, 255), 29);
    }

    #[test]
    fn pgm_and_png_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let src = GrayImage::from_fn(13, 7, |x, y| (x * 19 + y * 7) as u8);
        for name in ["a.pgm", "a.png"] {
            let p = dir.path().join(name);
            save_image(&src, &p).unwrap();
            assert_eq!(load_image(&p).unwrap(), src);
        }
        let pgm = encode_pgm(&src);
        assert!(pgm.starts_with(b"P5\n13 7\n255\n"));
    }

    #[test]
    fn color_png_uses_luminance() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.png");
        let rgb: Vec<u8> = [[200u8, 100, 50], [0, 0, 0], [10, 20, 30], [255, 255, 0]].concat();
        image::save_buffer(&p, &rgb, 2, 2, image::ExtendedColorType::Rgb8).unwrap();
        let g = load_image(&p).unwrap();
        assert_eq!(
            g.data(),
            &[luminance(200, 100, 50), 0, luminance(10, 20, 30), luminance(255, 255, 0)]
        );
    }

    proptest! {
        #[test]
        fn ops_preserve_length(w in 2usize..24, h in 2usize..24, seed in any::<u64>()) {
            let src = GrayImage::from_fn(w, h, |x, y| {
                (seed.wrapping_mul(6364136223846793005).wrapping_add((x * 31 + y * 17) as u64) >> 33) as u8
            });
            let n = normalize_range(&src);
            prop_assert_eq!(n.data().len(), w * h);
            let lo = src.data().iter().min().unwrap();
            let hi = src.data().iter().max().unwrap();
            if lo != hi {
                prop_assert!(n.data().contains(&0) && n.data().contains(&255));
            }
            prop_assert_eq!(gaussian_blur_5x5(&src, 1.0).unwrap().data().len(), w * h);
            prop_assert_eq!(median_filter_3x3(&src).data().len(), w * h);
            let d = downsample_half(&src).unwrap();
            prop_assert_eq!(d.data().len(), (w / 2) * (h / 2));
        }
    }
}
