//! Band constants and the bracket `<x> = sqrt(1 + x^2)`.

/// Lower threshold `e^{1/2} + e^{-1/2} - 2` (for `m2 = 1`).
pub fn alpha() -> f64 {
    0.5f64.exp() + (-0.5f64).exp() - 2.0
}

/// Upper threshold `alpha + 4`.
pub fn beta() -> f64 {
    alpha() + 4.0
}

/// Interior degree of both rays, `e^{1/2} + e^{-1/2}`.
pub fn ray_degree() -> f64 {
    0.5f64.exp() + (-0.5f64).exp()
}

pub fn bracket(x: f64) -> f64 {
    (1.0 + x * x).sqrt()
}

/// Essential band `[alpha/m2, beta/m2]`.
pub fn band(m2: f64) -> (f64, f64) {
    (alpha() / m2, beta() / m2)
}
