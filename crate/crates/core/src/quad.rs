//! Adaptive Gauss–Kronrod (7, 15) quadrature.

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
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn kronrod<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut gauss = fc * WG[3];
    let mut kron = fc * WGK[7];
    for j in 0..7 {
        let x = h * XGK[j];
        let s = f(c - x) + f(c + x);
        kron += WGK[j] * s;
        if j % 2 == 1 {
            gauss += WG[j / 2] * s;
        }
    }
    (kron * h, ((kron - gauss) * h).abs())
}

/// Integral of `f` over `[a, b]` to the requested relative tolerance.
pub(crate) fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, rtol: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    let (whole, err) = kronrod(&f, a, b);
    if err <= rtol * whole.abs() || err < f64::MIN_POSITIVE {
        return whole;
    }
    refine(&f, a, b, rtol * whole.abs().max(f64::MIN_POSITIVE), 40)
}

fn refine<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64, depth: u32) -> f64 {
    let m = 0.5 * (a + b);
    let (left, el) = kronrod(f, a, m);
    let (right, er) = kronrod(f, m, b);
    if depth == 0 || el + er <= tol {
        return left + right;
    }
    let l = if el <= 0.5 * tol {
        left
    } else {
        refine(f, a, m, 0.5 * tol, depth - 1)
    };
    let r = if er <= 0.5 * tol {
        right
    } else {
        refine(f, m, b, 0.5 * tol, depth - 1)
    };
    l + r
}
