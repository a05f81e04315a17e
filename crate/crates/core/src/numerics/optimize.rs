use super::NumericsError;

/// (3 − √5)/2
const GOLDEN: f64 = 0.381_966_011_250_105_1;
const MAX_ITER: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptResult {
    pub argmax: f64,
    pub value: f64,
    pub iterations: usize,
    /// The reported maximizer lies within `tol` of `lo` or `hi`.
    pub at_boundary: bool,
}

fn checked<F: FnMut(f64) -> f64>(f: &mut F, x: f64) -> Result<f64, NumericsError> {
    let v = f(x);
    if v.is_finite() {
        Ok(v)
    } else {
        Err(NumericsError::NonFinite { at: x, value: v })
    }
}

/// Maximizes `f` on `[lo, hi]` with Brent's golden-section/parabolic hybrid.
///
/// Stops once the bracket is at most `tol` wide. Both bounds are evaluated
/// as well, so a maximum at an end of the interval is reported exactly at
/// that end. `f` is never evaluated outside `[lo, hi]`.
pub fn maximize_scalar<F>(mut f: F, lo: f64, hi: f64, tol: f64) -> Result<OptResult, NumericsError>
where
    F: FnMut(f64) -> f64,
{
    if !(lo < hi) || !lo.is_finite() || !hi.is_finite() || !(tol > 0.0) {
        return Err(NumericsError::InvalidInterval { lo, hi });
    }
    // Brent minimizes; work with g = -f.
    let mut g = |x: f64| checked(&mut f, x.clamp(lo, hi)).map(|v| -v);

    let (mut a, mut b) = (lo, hi);
    let mut x = a + GOLDEN * (b - a);
    let (mut w, mut v) = (x, x);
    let mut fx = g(x)?;
    let (mut fw, mut fv) = (fx, fx);
    let (mut d, mut e) = (0.0f64, 0.0f64);
    let tol1 = 0.25 * tol;
    let tol2 = 2.0 * tol1;
    let mut iterations = 0;

    while iterations < MAX_ITER {
        let xm = 0.5 * (a + b);
        if (x - xm).abs() <= tol2 - 0.5 * (b - a) {
            break;
        }
        iterations += 1;
        let mut golden = true;
        if e.abs() > tol1 {
            let r = (x - w) * (fx - fv);
            let mut q = (x - v) * (fx - fw);
            let mut p = (x - v) * q - (x - w) * r;
            q = 2.0 * (q - r);
            if q > 0.0 {
                p = -p;
            }
            q = q.abs();
            let e_prev = e;
            e = d;
            if p.abs() < (0.5 * q * e_prev).abs() && p > q * (a - x) && p < q * (b - x) {
                d = p / q;
                let u = x + d;
                if u - a < tol2 || b - u < tol2 {
                    d = if xm >= x { tol1 } else { -tol1 };
                }
                golden = false;
            }
        }
        if golden {
            e = if x >= xm { a - x } else { b - x };
            d = GOLDEN * e;
        }
        let u = if d.abs() >= tol1 {
            x + d
        } else if d > 0.0 {
            x + tol1
        } else {
            x - tol1
        };
        let u = u.clamp(lo, hi);
        let fu = g(u)?;
        if fu <= fx {
            if u >= x {
                a = x;
            } else {
                b = x;
            }
            v = w;
            fv = fw;
            w = x;
            fw = fx;
            x = u;
            fx = fu;
        } else {
            if u < x {
                a = u;
            } else {
                b = u;
            }
            if fu <= fw || w == x {
                v = w;
                fv = fw;
                w = u;
                fw = fu;
            } else if fu <= fv || v == x || v == w {
                v = u;
                fv = fu;
            }
        }
    }

    let mut best = (x, -fx);
    for bound in [lo, hi] {
        let fb = -g(bound)?;
        if fb >= best.1 {
            best = (bound, fb);
        }
    }
    Ok(OptResult {
        argmax: best.0,
        value: best.1,
        iterations,
        at_boundary: best.0 - lo <= tol || hi - best.0 <= tol,
    })
}

/// Locates a sign change of `g` on `[lo, hi]` by bisection, to within `tol`.
pub fn bisect_crossing<G>(mut g: G, lo: f64, hi: f64, tol: f64) -> Result<f64, NumericsError>
where
    G: FnMut(f64) -> f64,
{
    if !(lo <= hi) || !(tol > 0.0) {
        return Err(NumericsError::InvalidInterval { lo, hi });
    }
    let mut g_lo = checked(&mut g, lo)?;
    let g_hi = checked(&mut g, hi)?;
    if g_lo == 0.0 {
        return Ok(lo);
    }
    if g_hi == 0.0 {
        return Ok(hi);
    }
    if g_lo * g_hi > 0.0 {
        return Err(NumericsError::NoBracket { lo, hi, g_lo, g_hi });
    }
    let (mut a, mut b) = (lo, hi);
    for _ in 0..MAX_ITER {
        if b - a <= tol {
            break;
        }
        let mid = 0.5 * (a + b);
        if mid <= a || mid >= b {
            break;
        }
        let g_mid = checked(&mut g, mid)?;
        if g_mid == 0.0 {
            return Ok(mid);
        }
        if (g_mid < 0.0) == (g_lo < 0.0) {
            a = mid;
            g_lo = g_mid;
        } else {
            b = mid;
        }
    }
    Ok(0.5 * (a + b))
}
