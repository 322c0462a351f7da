//! Classical single-channel image operators.

use crate::error::{Error, Result};

/// Row-major grid of reals.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageTensor {
    height: usize,
    width: usize,
    values: Vec<f64>,
}

/// Convolution weights share the image layout.
pub type Kernel = ImageTensor;

impl ImageTensor {
    pub fn new(height: usize, width: usize, values: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::Size(format!("empty image {height}x{width}")));
        }
        if height * width != values.len() {
            return Err(Error::Size(format!(
                "{height}x{width} image needs {} values, got {}",
                height * width,
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::Argument(format!("non-finite pixel value {v}")));
        }
        Ok(Self { height, width, values })
    }

    pub fn filled(height: usize, width: usize, value: f64) -> Result<Self> {
        Self::new(height, width, vec![value; height * width])
    }

    pub fn from_fn(
        height: usize,
        width: usize,
        mut f: impl FnMut(usize, usize) -> f64,
    ) -> Result<Self> {
        let mut values = Vec::with_capacity(height * width);
        for r in 0..height {
            for c in 0..width {
                values.push(f(r, c));
            }
        }
        Self::new(height, width, values)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.width + col]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(self.height, self.width, self.values.iter().map(|&v| f(v)).collect())
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Valid (unpadded) cross-correlation: `out[i][j] = Σ X(i+m, j+n) K(m, n)`.
pub fn conv2d_valid(image: &ImageTensor, kernel: &Kernel) -> Result<ImageTensor> {
    let (h, w) = image.dims();
    let (kh, kw) = kernel.dims();
    if kh > h || kw > w {
        return Err(Error::Size(format!("{kh}x{kw} kernel does not fit {h}x{w} image")));
    }
    ImageTensor::from_fn(h - kh + 1, w - kw + 1, |i, j| {
        let mut acc = 0.0;
        for m in 0..kh {
            let row = &image.values[(i + m) * w + j..(i + m) * w + j + kw];
            let krow = &kernel.values[m * kw..(m + 1) * kw];
            acc += row.iter().zip(krow).map(|(x, k)| x * k).sum::<f64>();
        }
        acc
    })
}

/// Output size of a strided window sweep; trailing partial windows are dropped.
fn pooled_dims(image: &ImageTensor, window: usize, stride: usize) -> Result<(usize, usize)> {
    if window == 0 || stride == 0 {
        return Err(Error::Argument(format!(
            "window ({window}) and stride ({stride}) must be positive"
        )));
    }
    let (h, w) = image.dims();
    if window > h || window > w {
        return Err(Error::Size(format!("{window}x{window} window exceeds {h}x{w} image")));
    }
    Ok(((h - window) / stride + 1, (w - window) / stride + 1))
}

fn pool_with(
    image: &ImageTensor,
    window: usize,
    stride: usize,
    reduce: impl Fn(&mut dyn Iterator<Item = f64>) -> f64,
) -> Result<ImageTensor> {
    let (oh, ow) = pooled_dims(image, window, stride)?;
    ImageTensor::from_fn(oh, ow, |i, j| {
        let mut cells = (0..window).flat_map(|m| {
            (0..window).map(move |n| image.get(i * stride + m, j * stride + n))
        });
        reduce(&mut cells)
    })
}

pub fn max_pool(image: &ImageTensor, window: usize, stride: usize) -> Result<ImageTensor> {
    pool_with(image, window, stride, |cells| cells.fold(f64::NEG_INFINITY, f64::max))
}

pub fn avg_pool(image: &ImageTensor, window: usize, stride: usize) -> Result<ImageTensor> {
    let k = (window * window) as f64;
    pool_with(image, window, stride, |cells| cells.sum::<f64>() / k)
}

/// Mean of squares over each window, `(1/k) Σ X²` with `k = window²`. No
/// square root is taken.
pub fn l2_pool(image: &ImageTensor, window: usize, stride: usize) -> Result<ImageTensor> {
    let k = (window * window) as f64;
    pool_with(image, window, stride, |cells| cells.map(|x| x * x).sum::<f64>() / k)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GlobalPool {
    Max,
    Avg,
}

pub fn global_pool(image: &ImageTensor, mode: GlobalPool) -> Result<f64> {
    if image.values.is_empty() {
        return Err(Error::Size("global pooling of an empty image".into()));
    }
    Ok(match mode {
        GlobalPool::Max => image.max_value(),
        GlobalPool::Avg => image.values.iter().sum::<f64>() / image.values.len() as f64,
    })
}

/// Surrounds the image with `margin` cells of `fill` on every side.
pub fn pad(image: &ImageTensor, margin: usize, fill: f64) -> Result<ImageTensor> {
    let (h, w) = image.dims();
    ImageTensor::from_fn(h + 2 * margin, w + 2 * margin, |r, c| {
        let inside = (margin..margin + h).contains(&r) && (margin..margin + w).contains(&c);
        if inside {
            image.get(r - margin, c - margin)
        } else {
            fill
        }
    })
}

/// Bilinear resize with corner-aligned sampling, so the four corners map onto
/// each other and a same-size resize is the identity.
pub fn resize_bilinear(image: &ImageTensor, out_h: usize, out_w: usize) -> Result<ImageTensor> {
    if out_h == 0 || out_w == 0 {
        return Err(Error::Size(format!("cannot resize to {out_h}x{out_w}")));
    }
    let (h, w) = image.dims();
    let coord = |out: usize, src: usize, idx: usize| -> (usize, usize, f64) {
        if out == 1 || src == 1 {
            return (0, 0, 0.0);
        }
        let pos = idx as f64 * (src - 1) as f64 / (out - 1) as f64;
        let lo = (pos.floor() as usize).min(src - 1);
        let hi = (lo + 1).min(src - 1);
        (lo, hi, pos - lo as f64)
    };
    ImageTensor::from_fn(out_h, out_w, |i, j| {
        let (r0, r1, fr) = coord(out_h, h, i);
        let (c0, c1, fc) = coord(out_w, w, j);
        let top = image.get(r0, c0) * (1.0 - fc) + image.get(r0, c1) * fc;
        let bottom = image.get(r1, c0) * (1.0 - fc) + image.get(r1, c1) * fc;
        let v = top * (1.0 - fr) + bottom * fr;
        // interpolation weights are convex; clamp away last-ulp excursions
        v.clamp(image.min_value(), image.max_value())
    })
}

/// Divides raw intensities by `max_raw`, mapping `[0, max_raw]` onto `[0, 1]`.
pub fn normalize01(image: &ImageTensor, max_raw: f64) -> Result<ImageTensor> {
    if !(max_raw.is_finite() && max_raw > 0.0) {
        return Err(Error::Argument(format!("max_raw must be positive, got {max_raw}")));
    }
    if let Some(v) = image.values.iter().find(|&&v| !(0.0..=max_raw).contains(&v)) {
        return Err(Error::Range(format!("raw value {v} outside [0, {max_raw}]")));
    }
    image.map(|v| v / max_raw)
}
