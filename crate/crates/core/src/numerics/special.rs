//! Gamma-family special functions.
//!
//! Gamma and log-gamma use the Lanczos approximation with the coefficient set
//! from Pugh (2004), accurate to ~15 significant digits. Digamma and trigamma
//! shift the argument above 10 by recurrence and finish with the asymptotic
//! Bernoulli series. All call sites in this crate need only x > 0.

use super::NumericsError;

/// Euler-Mascheroni constant.
pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

#[allow(clippy::excessive_precision)]
const LN_PI: f64 = 1.14472988584940017414;
#[allow(clippy::excessive_precision)]
const TWO_SQRT_E_OVER_PI: f64 = 1.860382734205265717;
#[allow(clippy::excessive_precision)]
const LN_2_SQRT_E_OVER_PI: f64 = 0.62078223763524522234;
const LANCZOS_R: f64 = 10.900511;

#[allow(clippy::excessive_precision)]
const LANCZOS_DK: [f64; 11] = [
    2.48574089138753565546e-5,
    1.05142378581721974210,
    -3.45687097222016235469,
    4.51227709466894823700,
    -2.98285225323576655721,
    1.05639711577126713077,
    -1.95428773191645869583e-1,
    1.70970543404441224307e-2,
    -5.71926117404305781283e-4,
    4.63399473359905636708e-6,
    -2.71994908488607703910e-9,
];

fn lanczos_series(x: f64) -> f64 {
    let mut s = LANCZOS_DK[0];
    for (k, dk) in LANCZOS_DK.iter().enumerate().skip(1) {
        s += dk / (x + k as f64 - 1.0);
    }
    s
}

/// Gamma function for x > 0. Overflows to +inf above x ~ 171.6.
pub fn gamma(x: f64) -> Result<f64, NumericsError> {
    if !(x > 0.0) {
        return Err(NumericsError::Domain { arg: x });
    }
    if x < 0.5 {
        // Reflection through Gamma(x)Gamma(1-x) = pi / sin(pi x).
        let s = {
            let mut acc = LANCZOS_DK[0];
            for (k, dk) in LANCZOS_DK.iter().enumerate().skip(1) {
                acc += dk / (k as f64 - x);
            }
            acc
        };
        Ok(std::f64::consts::PI
            / ((std::f64::consts::PI * x).sin()
                * s
                * TWO_SQRT_E_OVER_PI
                * ((0.5 - x + LANCZOS_R) / std::f64::consts::E).powf(0.5 - x)))
    } else {
        let s = lanczos_series(x);
        Ok(s * TWO_SQRT_E_OVER_PI * ((x - 0.5 + LANCZOS_R) / std::f64::consts::E).powf(x - 0.5))
    }
}

/// Natural log of the gamma function for x > 0.
pub fn log_gamma(x: f64) -> Result<f64, NumericsError> {
    if !(x > 0.0) {
        return Err(NumericsError::Domain { arg: x });
    }
    if x < 0.5 {
        let s = {
            let mut acc = LANCZOS_DK[0];
            for (k, dk) in LANCZOS_DK.iter().enumerate().skip(1) {
                acc += dk / (k as f64 - x);
            }
            acc
        };
        Ok(LN_PI
            - (std::f64::consts::PI * x).sin().ln()
            - s.ln()
            - LN_2_SQRT_E_OVER_PI
            - (0.5 - x) * ((0.5 - x + LANCZOS_R) / std::f64::consts::E).ln())
    } else {
        let s = lanczos_series(x);
        Ok(s.ln()
            + LN_2_SQRT_E_OVER_PI
            + (x - 0.5) * ((x - 0.5 + LANCZOS_R) / std::f64::consts::E).ln())
    }
}

/// Digamma (psi) function for x > 0.
pub fn digamma(x: f64) -> Result<f64, NumericsError> {
    if !(x > 0.0) {
        return Err(NumericsError::Domain { arg: x });
    }
    let mut x = x;
    let mut acc = 0.0;
    while x < 10.0 {
        acc -= 1.0 / x;
        x += 1.0;
    }
    // Asymptotic series with Bernoulli coefficients through x^-14.
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    let series = inv2
        * (1.0 / 12.0
            + inv2
                * (-1.0 / 120.0
                    + inv2
                        * (1.0 / 252.0
                            + inv2
                                * (-1.0 / 240.0
                                    + inv2
                                        * (1.0 / 132.0
                                            + inv2
                                                * (-691.0 / 32760.0
                                                    + inv2 * (1.0 / 12.0)))))));
    Ok(acc + x.ln() - 0.5 * inv - series)
}

/// Trigamma (psi') function for x > 0.
pub fn trigamma(x: f64) -> Result<f64, NumericsError> {
    if !(x > 0.0) {
        return Err(NumericsError::Domain { arg: x });
    }
    let mut x = x;
    let mut acc = 0.0;
    while x < 10.0 {
        acc += 1.0 / (x * x);
        x += 1.0;
    }
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    let series = inv
        * (1.0
            + inv * 0.5
            + inv2
                * (1.0 / 6.0
                    + inv2
                        * (-1.0 / 30.0
                            + inv2
                                * (1.0 / 42.0
                                    + inv2
                                        * (-1.0 / 30.0
                                            + inv2
                                                * (5.0 / 66.0
                                                    + inv2
                                                        * (-691.0 / 2730.0
                                                            + inv2 * (7.0 / 6.0))))))));
    Ok(acc + series)
}
