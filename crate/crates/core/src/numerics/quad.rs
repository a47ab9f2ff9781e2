//! Adaptive quadrature against the unit-exponential measure.

use super::NumericsError;
use nalgebra::DVector;

const MAX_DEPTH: usize = 60;

/// Computes `∫_0^∞ g(t) e^{-t} dt` for a vector-valued integrand.
///
/// The integral is mapped through `t = e^u`, which is flat under the
/// exponential measure and turns the `log t` singularities of score-type
/// integrands into linear terms. Each seed panel is refined by adaptive
/// Simpson quadrature until the Richardson error estimate drops below its
/// share of `abs_tol`.
pub fn exp_weighted_integral<G>(
    g: G,
    dim: usize,
    abs_tol: f64,
) -> Result<DVector<f64>, NumericsError>
where
    G: Fn(f64) -> DVector<f64>,
{
    // Integrand in u: g(e^u) * exp(u - e^u). Outside [-40, 5.5] the weight
    // exp(u - e^u) is below 5e-18, negligible against the 1e-10 tolerances
    // used by callers.
    let f = |u: f64| -> Result<DVector<f64>, NumericsError> {
        let t = u.exp();
        let w = (u - t).exp();
        let v = g(t) * w;
        if v.iter().any(|z| !z.is_finite()) {
            return Err(NumericsError::NonFinite);
        }
        Ok(v)
    };

    let knots = [-40.0, -20.0, -10.0, -5.0, -2.0, -0.5, 0.5, 1.5, 2.5, 3.5, 5.5];
    let panel_tol = abs_tol / (knots.len() - 1) as f64;
    let mut total = DVector::zeros(dim);
    for w in knots.windows(2) {
        let (a, b) = (w[0], w[1]);
        let fa = f(a)?;
        let fm = f(0.5 * (a + b))?;
        let fb = f(b)?;
        total += adaptive_simpson(&f, a, b, fa, fm, fb, panel_tol, MAX_DEPTH)?;
    }
    Ok(total)
}

fn simpson(a: f64, b: f64, fa: &DVector<f64>, fm: &DVector<f64>, fb: &DVector<f64>) -> DVector<f64> {
    (fa + fm * 4.0 + fb) * ((b - a) / 6.0)
}

#[allow(clippy::too_many_arguments)]
fn adaptive_simpson<F>(
    f: &F,
    a: f64,
    b: f64,
    fa: DVector<f64>,
    fm: DVector<f64>,
    fb: DVector<f64>,
    tol: f64,
    depth: usize,
) -> Result<DVector<f64>, NumericsError>
where
    F: Fn(f64) -> Result<DVector<f64>, NumericsError>,
{
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm)?;
    let frm = f(rm)?;
    let whole = simpson(a, b, &fa, &fm, &fb);
    let left = simpson(a, m, &fa, &flm, &fm);
    let right = simpson(m, b, &fm, &frm, &fb);
    let refined = &left + &right;
    let err = (&refined - &whole).abs().max();
    if err <= 15.0 * tol {
        return Ok(&refined + (refined.clone() - whole) / 15.0);
    }
    if depth == 0 {
        return Err(NumericsError::QuadratureDidNotConverge { levels: MAX_DEPTH });
    }
    let l = adaptive_simpson(f, a, m, fa, flm, fm.clone(), tol * 0.5, depth - 1)?;
    let r = adaptive_simpson(f, m, b, fm, frm, fb, tol * 0.5, depth - 1)?;
    Ok(l + r)
}
