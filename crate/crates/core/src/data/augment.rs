use alloc::format;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::image::{self, IMAGE_LEN};
use crate::error::{Error, Result};

/// Stochastic transform for generic feature vectors: a random global gain,
/// additive Gaussian noise, then coordinate dropout.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VectorAugment {
    /// Gain drawn uniformly from `[lo, hi]`.
    pub scale_range: (f64, f64),
    pub noise_std: f64,
    /// Probability of zeroing each coordinate.
    pub dropout: f64,
}

impl Default for VectorAugment {
    fn default() -> Self {
        VectorAugment {
            scale_range: (0.8, 1.2),
            noise_std: 0.5,
            dropout: 0.1,
        }
    }
}

impl VectorAugment {
    pub fn identity() -> Self {
        VectorAugment {
            scale_range: (1.0, 1.0),
            noise_std: 0.0,
            dropout: 0.0,
        }
    }

    fn apply<R: Rng + ?Sized>(&self, x: &mut [f64], rng: &mut R) {
        let (lo, hi) = self.scale_range;
        let gain = if lo < hi { rng.gen_range(lo..=hi) } else { lo };
        for v in x.iter_mut() {
            *v *= gain;
            if self.noise_std > 0.0 {
                *v += self.noise_std * rng.sample::<f64, _>(StandardNormal);
            }
            if self.dropout > 0.0 && rng.gen_bool(self.dropout) {
                *v = 0.0;
            }
        }
    }
}

/// Stochastic transform for 3x32x32 images stored as planar RGB.
///
/// Colour distortion is a per-channel affine jitter: with probability
/// `color_p` each channel is mapped to `gain * x + offset`, gain uniform in
/// `1 +- color_gain` and offset uniform in `+- color_offset`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ImageAugment {
    /// Fraction of the image area kept by the random resized crop.
    pub crop_scale: (f64, f64),
    pub flip_p: f64,
    pub color_p: f64,
    pub color_gain: f64,
    pub color_offset: f64,
    pub grayscale_p: f64,
    pub blur_p: f64,
    /// Blur standard deviation in pixels, drawn uniformly from this range.
    pub blur_sigma: (f64, f64),
}

impl Default for ImageAugment {
    fn default() -> Self {
        ImageAugment {
            crop_scale: (0.2, 1.0),
            flip_p: 0.5,
            color_p: 0.8,
            color_gain: 0.4,
            color_offset: 0.2,
            grayscale_p: 0.2,
            blur_p: 0.0,
            blur_sigma: (0.1, 2.0),
        }
    }
}

impl ImageAugment {
    fn apply<R: Rng + ?Sized>(&self, x: &mut [f64], rng: &mut R) {
        let (lo, hi) = self.crop_scale;
        if lo < 1.0 {
            let area = if lo < hi { rng.gen_range(lo..=hi) } else { lo };
            let log_ratio = rng.gen_range(libm::log(3.0 / 4.0)..=libm::log(4.0 / 3.0));
            image::random_resized_crop(x, area, libm::exp(log_ratio), rng);
        }
        if rng.gen_bool(self.flip_p) {
            image::flip_horizontal(x);
        }
        if rng.gen_bool(self.color_p) {
            let mut gains = [1.0; 3];
            let mut offsets = [0.0; 3];
            for c in 0..3 {
                if self.color_gain > 0.0 {
                    gains[c] = 1.0 + rng.gen_range(-self.color_gain..=self.color_gain);
                }
                if self.color_offset > 0.0 {
                    offsets[c] = rng.gen_range(-self.color_offset..=self.color_offset);
                }
            }
            image::channel_affine(x, &gains, &offsets);
        }
        if rng.gen_bool(self.grayscale_p) {
            image::grayscale(x);
        }
        if rng.gen_bool(self.blur_p) {
            let (a, b) = self.blur_sigma;
            let sigma = if a < b { rng.gen_range(a..=b) } else { a };
            image::gaussian_blur(x, sigma);
        }
    }
}

/// The augmentation distribution that maps one sample to one view.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AugmentationPolicy {
    Vector(VectorAugment),
    Image(ImageAugment),
}

impl Default for AugmentationPolicy {
    fn default() -> Self {
        AugmentationPolicy::Vector(VectorAugment::default())
    }
}

fn check_probability(name: &str, p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::Config(format!("{name} = {p} is not a probability")))
    }
}

fn check_range(name: &str, (lo, hi): (f64, f64)) -> Result<()> {
    if lo > 0.0 && lo <= hi && hi.is_finite() {
        Ok(())
    } else {
        Err(Error::Config(format!("{name} = ({lo}, {hi}) must be ordered and positive")))
    }
}

impl AugmentationPolicy {
    /// Every transform disabled: both views equal the source sample.
    pub fn identity() -> Self {
        AugmentationPolicy::Vector(VectorAugment::identity())
    }

    pub fn validate(&self, input_dim: usize) -> Result<()> {
        match self {
            AugmentationPolicy::Vector(v) => {
                check_range("scale_range", v.scale_range)?;
                check_probability("dropout", v.dropout)?;
                if !(v.noise_std >= 0.0 && v.noise_std.is_finite()) {
                    return Err(Error::Config(format!("noise_std = {} must be >= 0", v.noise_std)));
                }
            }
            AugmentationPolicy::Image(a) => {
                if input_dim != IMAGE_LEN {
                    return Err(Error::Config(format!(
                        "image augmentation needs {IMAGE_LEN} inputs, got {input_dim}"
                    )));
                }
                check_range("crop_scale", a.crop_scale)?;
                if a.crop_scale.1 > 1.0 {
                    return Err(Error::Config("crop_scale must not exceed 1".into()));
                }
                for (name, p) in [
                    ("flip_p", a.flip_p),
                    ("color_p", a.color_p),
                    ("grayscale_p", a.grayscale_p),
                    ("blur_p", a.blur_p),
                ] {
                    check_probability(name, p)?;
                }
                if !(0.0..1.0).contains(&a.color_gain) || !(a.color_offset >= 0.0) {
                    return Err(Error::Config("color jitter strengths out of range".into()));
                }
                check_range("blur_sigma", a.blur_sigma)?;
            }
        }
        Ok(())
    }

    /// Transform `x` in place with one draw from the distribution.
    pub fn apply<R: Rng + ?Sized>(&self, x: &mut [f64], rng: &mut R) {
        match self {
            AugmentationPolicy::Vector(v) => v.apply(x, rng),
            AugmentationPolicy::Image(a) => a.apply(x, rng),
        }
    }
}
