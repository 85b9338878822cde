//! Adaptive Simpson quadrature on finite intervals.

const MAX_DEPTH: u32 = 50;

/// `∫_a^b f` to absolute tolerance `tol`.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = simpson(a, b, fa, fm, fb);
    recurse(f, a, b, fa, fm, fb, whole, tol, MAX_DEPTH)
}

/// Integrate over a union of disjoint intervals, pre-splitting each into
/// `pieces` panels so narrow features are not missed by the first Simpson
/// estimate.
pub fn integrate_intervals<F: Fn(f64) -> f64>(f: &F, intervals: &[(f64, f64)], pieces: usize, tol: f64) -> f64 {
    let pieces = pieces.max(1);
    let panels = (intervals.len() * pieces) as f64;
    intervals
        .iter()
        .flat_map(|&(a, b)| {
            let w = (b - a) / pieces as f64;
            (0..pieces).map(move |i| {
                (
                    a + i as f64 * w,
                    if i + 1 == pieces { b } else { a + (i + 1) as f64 * w },
                )
            })
        })
        .map(|(a, b)| adaptive_simpson(f, a, b, tol / panels))
        .sum()
}

fn simpson(a: f64, b: f64, fa: f64, fm: f64, fb: f64) -> f64 {
    (b - a) / 6.0 * (fa + 4.0 * fm + fb)
}

#[allow(clippy::too_many_arguments)]
fn recurse<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = simpson(a, m, fa, flm, fm);
    let right = simpson(m, b, fm, frm, fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    recurse(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
        + recurse(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
}
