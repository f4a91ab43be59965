//! Fixed Gauss–Legendre rules.

/// 8-point Gauss–Legendre abscissae on `[-1, 1]` (positive half).
const GL8_X: [f64; 4] = [
    0.183_434_642_495_649_8,
    0.525_532_409_916_329_0,
    0.796_666_477_413_626_7,
    0.960_289_856_497_536_3,
];
const GL8_W: [f64; 4] = [
    0.362_683_783_378_362_0,
    0.313_706_645_877_887_3,
    0.222_381_034_453_374_5,
    0.101_228_536_290_376_3,
];

/// The eight nodes mapped to `[0, 1]` with weights summing to one.
pub const GL8_UNIT: [(f64, f64); 8] = [
    (0.5 - 0.5 * GL8_X[3], 0.5 * GL8_W[3]),
    (0.5 - 0.5 * GL8_X[2], 0.5 * GL8_W[2]),
    (0.5 - 0.5 * GL8_X[1], 0.5 * GL8_W[1]),
    (0.5 - 0.5 * GL8_X[0], 0.5 * GL8_W[0]),
    (0.5 + 0.5 * GL8_X[0], 0.5 * GL8_W[0]),
    (0.5 + 0.5 * GL8_X[1], 0.5 * GL8_W[1]),
    (0.5 + 0.5 * GL8_X[2], 0.5 * GL8_W[2]),
    (0.5 + 0.5 * GL8_X[3], 0.5 * GL8_W[3]),
];

/// `∫_a^b f` by the 8-point rule on `panels` equal panels.
pub fn gauss_legendre<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, panels: usize) -> f64 {
    let w = (b - a) / panels as f64;
    let mut total = 0.0;
    for k in 0..panels {
        let lo = a + k as f64 * w;
        let mut s = 0.0;
        for (x, wt) in GL8_UNIT {
            s += wt * f(lo + x * w);
        }
        total += s * w;
    }
    total
}
