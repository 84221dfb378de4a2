//! In-place operations on planar RGB images (`[R plane | G plane | B plane]`,
//! each plane row-major).

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

pub const IMAGE_SIDE: usize = 32;
pub const IMAGE_CHANNELS: usize = 3;
pub(crate) const PLANE: usize = IMAGE_SIDE * IMAGE_SIDE;
pub const IMAGE_LEN: usize = IMAGE_CHANNELS * PLANE;

const LUMA: [f64; 3] = [0.299, 0.587, 0.114];

/// Crop a window covering `area` of the image with width/height ratio
/// `aspect`, at a uniform random position, and resize it back to full size
/// bilinearly.
pub(crate) fn random_resized_crop<R: Rng + ?Sized>(x: &mut [f64], area: f64, aspect: f64, rng: &mut R) {
    let side = IMAGE_SIDE as f64;
    let target = area * side * side;
    let w = libm::round(libm::sqrt(target * aspect)).clamp(1.0, side) as usize;
    let h = libm::round(libm::sqrt(target / aspect)).clamp(1.0, side) as usize;
    let top = rng.gen_range(0..=IMAGE_SIDE - h);
    let left = rng.gen_range(0..=IMAGE_SIDE - w);
    let src = x.to_vec();
    for c in 0..IMAGE_CHANNELS {
        let plane = &src[c * PLANE..(c + 1) * PLANE];
        let out = &mut x[c * PLANE..(c + 1) * PLANE];
        resize_window(plane, top, left, h, w, out);
    }
}

/// Bilinear resize of the `h x w` window at (`top`, `left`) to the full
/// plane, sampling at pixel centers (half-pixel alignment).
fn resize_window(plane: &[f64], top: usize, left: usize, h: usize, w: usize, out: &mut [f64]) {
    let n = IMAGE_SIDE as f64;
    let sy = h as f64 / n;
    let sx = w as f64 / n;
    for oy in 0..IMAGE_SIDE {
        let fy = ((oy as f64 + 0.5) * sy - 0.5).clamp(0.0, (h - 1) as f64);
        let y0 = fy as usize;
        let y1 = (y0 + 1).min(h - 1);
        let ty = fy - y0 as f64;
        for ox in 0..IMAGE_SIDE {
            let fx = ((ox as f64 + 0.5) * sx - 0.5).clamp(0.0, (w - 1) as f64);
            let x0 = fx as usize;
            let x1 = (x0 + 1).min(w - 1);
            let tx = fx - x0 as f64;
            let at = |yy: usize, xx: usize| plane[(top + yy) * IMAGE_SIDE + left + xx];
            let upper = at(y0, x0) * (1.0 - tx) + at(y0, x1) * tx;
            let lower = at(y1, x0) * (1.0 - tx) + at(y1, x1) * tx;
            out[oy * IMAGE_SIDE + ox] = upper * (1.0 - ty) + lower * ty;
        }
    }
}

pub(crate) fn flip_horizontal(x: &mut [f64]) {
    for row in x.chunks_exact_mut(IMAGE_SIDE) {
        row.reverse();
    }
}

pub(crate) fn channel_affine(x: &mut [f64], gains: &[f64; 3], offsets: &[f64; 3]) {
    for (c, plane) in x.chunks_exact_mut(PLANE).enumerate() {
        for v in plane {
            *v = gains[c] * *v + offsets[c];
        }
    }
}

/// Replace every channel with the ITU-R BT.601 luma.
pub(crate) fn grayscale(x: &mut [f64]) {
    for p in 0..PLANE {
        let y = LUMA[0] * x[p] + LUMA[1] * x[PLANE + p] + LUMA[2] * x[2 * PLANE + p];
        for c in 0..IMAGE_CHANNELS {
            x[c * PLANE + p] = y;
        }
    }
}

/// Separable Gaussian blur with radius `ceil(3 sigma)` and clamped borders.
pub(crate) fn gaussian_blur(x: &mut [f64], sigma: f64) {
    let radius = (libm::ceil(3.0 * sigma) as usize).max(1);
    let mut kernel: Vec<f64> = (0..=2 * radius)
        .map(|i| {
            let d = i as f64 - radius as f64;
            libm::exp(-0.5 * d * d / (sigma * sigma))
        })
        .collect();
    let total: f64 = kernel.iter().sum();
    kernel.iter_mut().for_each(|k| *k /= total);

    let n = IMAGE_SIDE as isize;
    let clamp = |i: isize| i.clamp(0, n - 1) as usize;
    let mut tmp = vec![0.0; PLANE];
    for plane in x.chunks_exact_mut(PLANE) {
        for y in 0..IMAGE_SIDE {
            for xx in 0..IMAGE_SIDE {
                let mut s = 0.0;
                for (k, w) in kernel.iter().enumerate() {
                    let sx = clamp(xx as isize + k as isize - radius as isize);
                    s += w * plane[y * IMAGE_SIDE + sx];
                }
                tmp[y * IMAGE_SIDE + xx] = s;
            }
        }
        for y in 0..IMAGE_SIDE {
            for xx in 0..IMAGE_SIDE {
                let mut s = 0.0;
                for (k, w) in kernel.iter().enumerate() {
                    let sy = clamp(y as isize + k as isize - radius as isize);
                    s += w * tmp[sy * IMAGE_SIDE + xx];
                }
                plane[y * IMAGE_SIDE + xx] = s;
            }
        }
    }
}
