//! Reconstruction quality: MSE, PSNR (peak 1), SSIM and SI-SNR.
//!
//! Perfect reconstructions report `+inf` for PSNR and SI-SNR; CSV output
//! spells that as `inf`.

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricRecord<T> {
    pub mse: T,
    pub psnr: T,
    /// Images of at least 11x11 only.
    pub ssim: Option<T>,
    /// Audio only.
    pub si_snr: Option<T>,
}

impl<T: Scalar> MetricRecord<T> {
    pub fn to_f64(&self) -> MetricRecord<f64> {
        MetricRecord {
            mse: self.mse.to_f64_lossy(),
            psnr: self.psnr.to_f64_lossy(),
            ssim: self.ssim.map(Scalar::to_f64_lossy),
            si_snr: self.si_snr.map(Scalar::to_f64_lossy),
        }
    }
}

fn same_shape<T>(a: &ArrayView2<'_, T>, b: &ArrayView2<'_, T>) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::shape(format!("{:?}", b.dim()), format!("{:?}", a.dim())));
    }
    Ok(())
}

pub fn mse<T: Scalar>(pred: ArrayView2<'_, T>, target: ArrayView2<'_, T>) -> Result<T> {
    same_shape(&pred, &target)?;
    if pred.is_empty() {
        return Err(Error::EmptySignal);
    }
    let sum: T = pred.iter().zip(target.iter()).map(|(&p, &t)| (p - t) * (p - t)).sum();
    Ok(sum / T::from_usize_lossy(pred.len()))
}

/// `10 log10(1 / mse)`, `+inf` when `mse == 0`.
pub fn psnr_from_mse<T: Scalar>(mse: T) -> T {
    if mse == T::zero() {
        T::infinity()
    } else {
        T::lit(10.0) * (T::one() / mse).log10()
    }
}

pub fn psnr<T: Scalar>(pred: ArrayView2<'_, T>, target: ArrayView2<'_, T>) -> Result<T> {
    mse(pred, target).map(psnr_from_mse)
}

/// Normalized 1D Gaussian taps for the SSIM window.
pub fn gaussian_window<T: Scalar>() -> Vec<T> {
    let half = (SSIM_WINDOW / 2) as f64;
    let raw: Vec<f64> = (0..SSIM_WINDOW)
        .map(|k| {
            let d = k as f64 - half;
            (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp()
        })
        .collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|w| T::lit(w / total)).collect()
}

/// Valid-mode separable filtering with the Gaussian window.
fn blur<T: Scalar>(img: &Array2<T>, taps: &[T]) -> Array2<T> {
    let (h, w) = img.dim();
    let k = taps.len();
    let rows = Array2::from_shape_fn((h, w - k + 1), |(r, c)| {
        taps.iter().enumerate().map(|(j, &t)| t * img[[r, c + j]]).sum()
    });
    Array2::from_shape_fn((h - k + 1, w - k + 1), |(r, c)| {
        taps.iter().enumerate().map(|(i, &t)| t * rows[[r + i, c]]).sum()
    })
}

/// Mean SSIM over all fully contained 11x11 Gaussian windows
/// (sigma 1.5, K1 = 0.01, K2 = 0.03, dynamic range 1).
pub fn ssim<T: Scalar>(pred: ArrayView2<'_, T>, target: ArrayView2<'_, T>) -> Result<T> {
    same_shape(&pred, &target)?;
    let (height, width) = pred.dim();
    if height < SSIM_WINDOW || width < SSIM_WINDOW {
        return Err(Error::ImageTooSmall {
            height,
            width,
            window: SSIM_WINDOW,
        });
    }
    let taps = gaussian_window::<T>();
    let c1 = T::lit(SSIM_K1 * SSIM_K1);
    let c2 = T::lit(SSIM_K2 * SSIM_K2);
    let two = T::lit(2.0);
    let x = pred.to_owned();
    let y = target.to_owned();
    let mu_x = blur(&x, &taps);
    let mu_y = blur(&y, &taps);
    let xx = blur(&(&x * &x), &taps);
    let yy = blur(&(&y * &y), &taps);
    let xy = blur(&(&x * &y), &taps);
    let map = ndarray::Zip::from(&mu_x)
        .and(&mu_y)
        .and(&xx)
        .and(&yy)
        .and(&xy)
        .map_collect(|&mx, &my, &sxx, &syy, &sxy| {
            let var_x = sxx - mx * mx;
            let var_y = syy - my * my;
            let cov = sxy - mx * my;
            ((two * mx * my + c1) * (two * cov + c2)) / ((mx * mx + my * my + c1) * (var_x + var_y + c2))
        });
    let mean = map.sum() / T::from_usize_lossy(map.len());
    Ok(mean.max(-T::one()).min(T::one()))
}

/// Mean of per-channel SSIM for interleaved `N x channels` data of an
/// `height x width` image.
pub fn ssim_channels<T: Scalar>(
    pred: ArrayView2<'_, T>,
    target: ArrayView2<'_, T>,
    height: usize,
    width: usize,
) -> Result<T> {
    same_shape(&pred, &target)?;
    if pred.nrows() != height * width {
        return Err(Error::shape(format!("{} rows", height * width), pred.nrows()));
    }
    let channels = pred.ncols();
    let mut total = T::zero();
    for c in 0..channels {
        let p = pred
            .column(c)
            .to_owned()
            .into_shape_with_order((height, width))
            .expect("row count checked");
        let t = target
            .column(c)
            .to_owned()
            .into_shape_with_order((height, width))
            .expect("row count checked");
        total += ssim(p.view(), t.view())?;
    }
    Ok(total / T::from_usize_lossy(channels))
}

/// Scale-invariant SNR in dB after removing the mean of both signals.
///
/// `+inf` when the prediction is an exact rescaling of the target and
/// `-inf` when it has no component along the target.
pub fn si_snr<T: Scalar>(pred: ArrayView1<'_, T>, target: ArrayView1<'_, T>) -> Result<T> {
    if pred.len() != target.len() {
        return Err(Error::shape(target.len(), pred.len()));
    }
    if target.len() < 2 {
        return Err(Error::shape("at least 2 samples", target.len()));
    }
    let p = &pred - pred.mean().expect("nonempty");
    let t = &target - target.mean().expect("nonempty");
    let t_energy = t.dot(&t);
    if t_energy == T::zero() {
        return Err(Error::ConstantTarget);
    }
    let s_target = &t * (p.dot(&t) / t_energy);
    let e = &p - &s_target;
    let signal = s_target.dot(&s_target);
    let noise = e.dot(&e);
    if signal == T::zero() {
        return Ok(T::neg_infinity());
    }
    // residual at rounding level means an exact rescaling
    let floor = T::lit(16.0) * T::epsilon();
    if noise <= signal * floor * floor {
        return Ok(T::infinity());
    }
    Ok(T::lit(10.0) * (signal / noise).log10())
}

/// Mean over the columns of [`si_snr`]; audio datasets have one column.
pub fn si_snr_columns<T: Scalar>(pred: ArrayView2<'_, T>, target: ArrayView2<'_, T>) -> Result<T> {
    same_shape(&pred, &target)?;
    let mut total = T::zero();
    for (p, t) in pred.axis_iter(Axis(1)).zip(target.axis_iter(Axis(1))) {
        total += si_snr(p, t)?;
    }
    Ok(total / T::from_usize_lossy(pred.ncols()))
}

/// `inf`/`-inf`/`nan` spelled out, otherwise the shortest round-tripping form.
pub fn format_value(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v == f64::INFINITY {
        "inf".into()
    } else if v == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        format!("{v:?}")
    }
}
