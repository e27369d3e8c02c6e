//! 1-d numerical integration helpers: adaptive Simpson and Gauss-Legendre.

/// Error raised when the adaptive routine cannot reach the tolerance.
#[derive(Debug, Clone, thiserror::Error)]
#[error("adaptive quadrature failed to converge on [{a}, {b}] (tol {tol})")]
pub struct QuadratureFail {
    pub a: f64,
    pub b: f64,
    pub tol: f64,
}

fn simpson_slice(f: &mut impl FnMut(f64) -> f64, a: f64, fa: f64, b: f64, fb: f64) -> (f64, f64) {
    let m = 0.5 * (a + b);
    let fm = f(m);
    ((b - a) / 6.0 * (fa + 4.0 * fm + fb), fm)
}

fn adapt(
    f: &mut impl FnMut(f64) -> f64,
    a: f64,
    fa: f64,
    b: f64,
    fb: f64,
    whole: f64,
    fm: f64,
    tol: f64,
    depth: u32,
) -> Result<f64, QuadratureFail> {
    let m = 0.5 * (a + b);
    let (left, flm) = simpson_slice(f, a, fa, m, fm);
    let (right, frm) = simpson_slice(f, m, fm, b, fb);
    let delta = left + right - whole;
    if delta.abs() <= 15.0 * tol || (b - a) < 1e-14 {
        return Ok(left + right + delta / 15.0);
    }
    if depth == 0 {
        return Err(QuadratureFail { a, b, tol });
    }
    let l = adapt(f, a, fa, m, fm, left, flm, 0.5 * tol, depth - 1)?;
    let r = adapt(f, m, fm, b, fb, right, frm, 0.5 * tol, depth - 1)?;
    Ok(l + r)
}

/// Adaptive Simpson integration of `f` over `[a, b]` to absolute tolerance `tol`.
pub fn adaptive_simpson(
    mut f: impl FnMut(f64) -> f64,
    a: f64,
    b: f64,
    tol: f64,
) -> Result<f64, QuadratureFail> {
    if a == b {
        return Ok(0.0);
    }
    let fa = f(a);
    let fb = f(b);
    let (whole, fm) = simpson_slice(&mut f, a, fa, b, fb);
    adapt(&mut f, a, fa, b, fb, whole, fm, tol, 48)
}

/// Integrate over a union of intervals, splitting additionally at `breaks`.
///
/// Discontinuities of the integrand must be listed in `breaks` (or be
/// interval endpoints); each smooth piece is integrated adaptively. Piece
/// endpoints are nudged inward by a relative 1e-12 so that a jump sitting
/// exactly on a break is never sampled (the nudge changes the integral by
/// at most 1e-12 of the piece).
pub fn integrate_piecewise(
    mut f: impl FnMut(f64) -> f64,
    intervals: &[(f64, f64)],
    breaks: &[f64],
    tol: f64,
) -> Result<f64, QuadratureFail> {
    let mut total = 0.0;
    for &(a, b) in intervals {
        if b <= a {
            continue;
        }
        let mut cuts: Vec<f64> = breaks.iter().copied().filter(|&c| c > a && c < b).collect();
        cuts.sort_by(|x, y| x.partial_cmp(y).unwrap());
        cuts.dedup();
        let mut lo = a;
        for &c in cuts.iter().chain(std::iter::once(&b)) {
            let eps = (c - lo) * 1e-12;
            total += adaptive_simpson(&mut f, lo + eps, c - eps, tol)?;
            lo = c;
        }
    }
    Ok(total)
}

// 20-point Gauss-Legendre nodes/weights on [-1, 1] (positive half; mirrored).
const GL20_X: [f64; 10] = [
    0.076526521133497333755,
    0.227785851141645078080,
    0.373706088715419560673,
    0.510867001950827098004,
    0.636053680726515025453,
    0.746331906460150792614,
    0.839116971822218823395,
    0.912234428251325905868,
    0.963971927277913791268,
    0.993128599185094924786,
];
const GL20_W: [f64; 10] = [
    0.152753387130725850698,
    0.149172986472603746788,
    0.142096109318382051329,
    0.131688638449176626898,
    0.118194531961518417312,
    0.101930119817240435037,
    0.083276741576704748725,
    0.062672048334109063570,
    0.040601429800386941331,
    0.017614007139152118312,
];

/// Fixed 20-point Gauss-Legendre rule on `[a, b]` (exact for smooth integrands
/// of low polynomial degree; used where the integrand is known smooth).
pub fn gauss_legendre_20(f: &mut impl FnMut(f64) -> f64, a: f64, b: f64) -> f64 {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let mut sum = 0.0;
    for i in 0..10 {
        sum += GL20_W[i] * (f(c + h * GL20_X[i]) + f(c - h * GL20_X[i]));
    }
    sum * h
}
