//! Float intrinsics routed through `libm` so the crate stays `no_std`.

#[inline]
pub fn sin(x: f64) -> f64 {
    libm::sin(x)
}

#[inline]
pub fn cos(x: f64) -> f64 {
    libm::cos(x)
}

#[inline]
pub fn sqrt(x: f64) -> f64 {
    libm::sqrt(x)
}

#[inline]
pub fn exp(x: f64) -> f64 {
    libm::exp(x)
}

#[inline]
pub fn powf(x: f64, y: f64) -> f64 {
    libm::pow(x, y)
}

#[inline]
pub fn powi(x: f64, n: i32) -> f64 {
    libm::pow(x, n as f64)
}

#[inline]
pub fn log10(x: f64) -> f64 {
    libm::log10(x)
}

#[inline]
pub fn round(x: f64) -> f64 {
    libm::round(x)
}

/// `sqrt(x^2 + eps^2) - eps`: a smooth surrogate of `|x|` that is exactly 0 at 0.
#[inline]
pub fn charbonnier(x: f64, eps: f64) -> f64 {
    sqrt(x * x + eps * eps) - eps
}

/// Derivative of [`charbonnier`] with respect to `x`.
#[inline]
pub fn charbonnier_grad(x: f64, eps: f64) -> f64 {
    x / sqrt(x * x + eps * eps)
}
