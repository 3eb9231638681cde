//! Adaptive Gauss–Kronrod (7/15) quadrature on finite and half-infinite
//! intervals. Intervals are bisected largest-error-first until the summed
//! error estimate falls under the absolute tolerance.

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
// Gauss weights for the odd-indexed Kronrod nodes 1, 3, 5, 7.
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

const MAX_INTERVALS: usize = 4000;

#[derive(Debug, Clone, Copy)]
struct Piece {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

fn gk15(f: &mut impl FnMut(f64) -> f64, a: f64, b: f64) -> Piece {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for (j, (&x, &w)) in XGK.iter().zip(WGK.iter()).take(7).enumerate() {
        let dx = half * x;
        let pair = f(center - dx) + f(center + dx);
        kronrod += w * pair;
        if j % 2 == 1 {
            gauss += WG[j / 2] * pair;
        }
    }
    Piece {
        a,
        b,
        value: kronrod * half,
        error: ((kronrod - gauss) * half).abs(),
    }
}

/// Integral of `f` over the finite interval `[a, b]` to absolute tolerance
/// `tol`. Returns the estimate and its error bound.
pub fn integrate(mut f: impl FnMut(f64) -> f64, a: f64, b: f64, tol: f64) -> (f64, f64) {
    if a == b {
        return (0.0, 0.0);
    }
    let mut pieces = vec![gk15(&mut f, a, b)];
    loop {
        let total_err: f64 = pieces.iter().map(|p| p.error).sum();
        if total_err <= tol || pieces.len() >= MAX_INTERVALS {
            break;
        }
        let (worst, _) = pieces
            .iter()
            .enumerate()
            .max_by(|x, y| x.1.error.total_cmp(&y.1.error))
            .expect("at least one piece");
        let p = pieces.swap_remove(worst);
        let mid = 0.5 * (p.a + p.b);
        if mid <= p.a || mid >= p.b {
            // Interval can no longer be split in floating point.
            pieces.push(Piece { error: 0.0, ..p });
            continue;
        }
        pieces.push(gk15(&mut f, p.a, mid));
        pieces.push(gk15(&mut f, mid, p.b));
    }
    pieces.sort_by(|x, y| x.a.total_cmp(&y.a));
    let value = crate::numeric::sum(pieces.iter().map(|p| p.value));
    let error = pieces.iter().map(|p| p.error).sum();
    (value, error)
}

/// Integral over `[a, ∞)` through `x = a + scale · t / (1 − t)`.
pub fn integrate_upper_tail(mut f: impl FnMut(f64) -> f64, a: f64, scale: f64, tol: f64) -> (f64, f64) {
    integrate(
        |t| {
            let r = 1.0 - t;
            let x = a + scale * t / r;
            if x.is_finite() {
                f(x) * scale / (r * r)
            } else {
                0.0
            }
        },
        0.0,
        1.0,
        tol,
    )
}

/// Integral over `(-∞, b]` through `x = b − scale · t / (1 − t)`.
pub fn integrate_lower_tail(mut f: impl FnMut(f64) -> f64, b: f64, scale: f64, tol: f64) -> (f64, f64) {
    integrate_upper_tail(|x| f(2.0 * b - x), b, scale, tol)
}

/// Integral over `[a, b]` where either end may be infinite, split at the
/// given interior points.
pub fn integrate_split(
    mut f: impl FnMut(f64) -> f64,
    a: f64,
    b: f64,
    breaks: &[f64],
    scale: f64,
    tol: f64,
) -> (f64, f64) {
    if a >= b {
        return (0.0, 0.0);
    }
    let mut nodes: Vec<f64> = breaks
        .iter()
        .copied()
        .filter(|x| x.is_finite() && *x > a && *x < b)
        .collect();
    nodes.sort_by(f64::total_cmp);
    nodes.dedup();
    if nodes.is_empty() && !(a.is_finite() && b.is_finite()) {
        // Need a finite anchor to split an infinite range.
        nodes.push(if a.is_finite() {
            a + scale
        } else if b.is_finite() {
            b - scale
        } else {
            0.0
        });
    }
    let mut ends = Vec::with_capacity(nodes.len() + 2);
    ends.push(a);
    ends.extend(nodes);
    ends.push(b);
    let share = tol / (ends.len() - 1) as f64;
    let mut value = crate::numeric::NeumaierSum::new();
    let mut error = 0.0;
    for w in ends.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        let (v, e) = if lo == f64::NEG_INFINITY {
            integrate_lower_tail(&mut f, hi, scale, share)
        } else if hi == f64::INFINITY {
            integrate_upper_tail(&mut f, lo, scale, share)
        } else {
            integrate(&mut f, lo, hi, share)
        };
        value.add(v);
        error += e;
    }
    (value.value(), error)
}
