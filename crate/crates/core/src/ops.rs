//! Operation codes shared by update graphs and decay graphs, with their
//! elementwise semantics.
//!
//! Every operation is total: domain problems are resolved by the fixed
//! conventions below (epsilon offsets, arctanh clamping, power through
//! `exp(ln)`), so a degenerate expression yields a finite or non-finite
//! number rather than a panic.

use std::fmt;

/// Offset used wherever a formula adds epsilon (`ln(|x|+eps)`, `x1/(x2+eps)`,
/// `|x1|^x2`, `norm`).
pub const EPS: f64 = 1e-8;

const ARCTANH_LIMIT: f64 = 1.0 - 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Unary {
    Identity,
    Neg,
    LnAbs,
    SqrtAbs,
    Exp,
    Abs,
    Sigmoid,
    SigmoidGrad,
    Softsign,
    SoftsignGrad,
    Softplus,
    Erf,
    Tanh,
    Arctanh,
    BesselI1e,
    Arcsinh,
    MaxZero,
    MinZero,
    Drop50,
    Drop30,
    Drop10,
    Norm,
    Erfc,
    // Only in the reduced decay table.
    Arctan,
    Square,
    Sqrt,
    TanhGrad,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Binary {
    Add,
    Mul,
    Sub,
    Div,
    DivSqrt1p,
    Max,
    Min,
    Mix95,
    Clip,
    PowAbs,
}

/// Unary operations that own one persistent register per tensor element.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum StateUnary {
    /// `z' = 0.95 x + 0.05 z`
    Ema95,
    /// `z' = x - z`
    Diff,
    /// `z' = max(x, z)`
    RunMax,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Op {
    Unary(Unary),
    Binary(Binary),
    State(StateUnary),
}

/// The 23 scalar unary operations available to update graphs.
pub const SCALAR_UNARY: [Unary; 23] = [
    Unary::Identity,
    Unary::Neg,
    Unary::LnAbs,
    Unary::SqrtAbs,
    Unary::Exp,
    Unary::Abs,
    Unary::Sigmoid,
    Unary::SigmoidGrad,
    Unary::Softsign,
    Unary::SoftsignGrad,
    Unary::Softplus,
    Unary::Erf,
    Unary::Tanh,
    Unary::Arctanh,
    Unary::BesselI1e,
    Unary::Arcsinh,
    Unary::MaxZero,
    Unary::MinZero,
    Unary::Drop50,
    Unary::Drop30,
    Unary::Drop10,
    Unary::Norm,
    Unary::Erfc,
];

/// The reduced unary set for decay graphs: each maps `[0, 1]` into `[0, 1]`.
pub const DECAY_UNARY: [Unary; 13] = [
    Unary::Identity,
    Unary::Sigmoid,
    Unary::SigmoidGrad,
    Unary::Erf,
    Unary::Erfc,
    Unary::Tanh,
    Unary::Arctan,
    Unary::BesselI1e,
    Unary::Square,
    Unary::Sqrt,
    Unary::Softsign,
    Unary::SoftsignGrad,
    Unary::TanhGrad,
];

pub const BINARY: [Binary; 10] = [
    Binary::Add,
    Binary::Mul,
    Binary::Sub,
    Binary::Div,
    Binary::DivSqrt1p,
    Binary::Max,
    Binary::Min,
    Binary::Mix95,
    Binary::Clip,
    Binary::PowAbs,
];

pub const STATE_UNARY: [StateUnary; 3] = [StateUnary::Ema95, StateUnary::Diff, StateUnary::RunMax];

impl Unary {
    pub fn name(self) -> &'static str {
        match self {
            Unary::Identity => "identity",
            Unary::Neg => "neg",
            Unary::LnAbs => "ln_abs",
            Unary::SqrtAbs => "sqrt_abs",
            Unary::Exp => "exp",
            Unary::Abs => "abs",
            Unary::Sigmoid => "sigmoid",
            Unary::SigmoidGrad => "sigmoid_grad",
            Unary::Softsign => "softsign",
            Unary::SoftsignGrad => "softsign_grad",
            Unary::Softplus => "softplus",
            Unary::Erf => "erf",
            Unary::Tanh => "tanh",
            Unary::Arctanh => "arctanh",
            Unary::BesselI1e => "bessel_i1e",
            Unary::Arcsinh => "arcsinh",
            Unary::MaxZero => "max0",
            Unary::MinZero => "min0",
            Unary::Drop50 => "drop50",
            Unary::Drop30 => "drop30",
            Unary::Drop10 => "drop10",
            Unary::Norm => "norm",
            Unary::Erfc => "erfc",
            Unary::Arctan => "arctan",
            Unary::Square => "square",
            Unary::Sqrt => "sqrt",
            Unary::TanhGrad => "tanh_grad",
        }
    }

    /// Drop probability for the three dropout variants.
    pub fn drop_probability(self) -> Option<f64> {
        match self {
            Unary::Drop50 => Some(0.5),
            Unary::Drop30 => Some(0.3),
            Unary::Drop10 => Some(0.1),
            _ => None,
        }
    }

    /// True for operations that look at the whole tensor or draw random
    /// numbers and therefore cannot be applied one element at a time.
    pub fn is_tensor_level(self) -> bool {
        matches!(self, Unary::Drop50 | Unary::Drop30 | Unary::Drop10 | Unary::Norm)
    }

    /// Elementwise semantics. `drop*` and `norm` are tensor-level and are
    /// treated as identity here; see [`norm_in_place`] and the engine.
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Unary::Identity => x,
            Unary::Neg => -x,
            Unary::LnAbs => (x.abs() + EPS).ln(),
            Unary::SqrtAbs => x.abs().sqrt(),
            Unary::Exp => x.exp(),
            Unary::Abs => x.abs(),
            Unary::Sigmoid => sigmoid(x),
            Unary::SigmoidGrad => {
                let s = sigmoid(x);
                s * (1.0 - s)
            }
            Unary::Softsign => x / (1.0 + x.abs()),
            Unary::SoftsignGrad => {
                let d = 1.0 + x.abs();
                1.0 / (d * d)
            }
            Unary::Softplus => softplus(x),
            Unary::Erf => libm::erf(x),
            Unary::Tanh => x.tanh(),
            Unary::Arctanh => x.clamp(-ARCTANH_LIMIT, ARCTANH_LIMIT).atanh(),
            Unary::BesselI1e => bessel_i1e(x),
            Unary::Arcsinh => x.asinh(),
            Unary::MaxZero => x.max(0.0),
            Unary::MinZero => x.min(0.0),
            Unary::Drop50 | Unary::Drop30 | Unary::Drop10 | Unary::Norm => x,
            Unary::Erfc => libm::erfc(x),
            Unary::Arctan => x.atan(),
            Unary::Square => x * x,
            Unary::Sqrt => x.sqrt(),
            Unary::TanhGrad => {
                let t = x.tanh();
                1.0 - t * t
            }
        }
    }
}

impl Binary {
    pub fn name(self) -> &'static str {
        match self {
            Binary::Add => "add",
            Binary::Mul => "mul",
            Binary::Sub => "sub",
            Binary::Div => "div",
            Binary::DivSqrt1p => "div_sqrt1p",
            Binary::Max => "max",
            Binary::Min => "min",
            Binary::Mix95 => "mix95",
            Binary::Clip => "clip",
            Binary::PowAbs => "pow_abs",
        }
    }

    pub fn apply(self, a: f64, b: f64) -> f64 {
        match self {
            Binary::Add => a + b,
            Binary::Mul => a * b,
            Binary::Sub => a - b,
            Binary::Div => a / (b + EPS),
            Binary::DivSqrt1p => a / (1.0 + b * b).sqrt(),
            Binary::Max => a.max(b),
            Binary::Min => a.min(b),
            Binary::Mix95 => 0.95 * a + 0.05 * b,
            Binary::Clip => {
                let bound = b.abs();
                // f64::clamp panics on NaN bounds; keep NaN flowing instead.
                if a > bound {
                    bound
                } else if a < -bound {
                    -bound
                } else {
                    a
                }
            }
            Binary::PowAbs => (b * (a.abs() + EPS).ln()).exp(),
        }
    }
}

impl StateUnary {
    pub fn name(self) -> &'static str {
        match self {
            StateUnary::Ema95 => "ema95",
            StateUnary::Diff => "diff",
            StateUnary::RunMax => "run_max",
        }
    }

    /// Returns the new register value, which is also the node output.
    pub fn advance(self, x: f64, z: f64) -> f64 {
        match self {
            StateUnary::Ema95 => 0.95 * x + 0.05 * z,
            StateUnary::Diff => x - z,
            StateUnary::RunMax => x.max(z),
        }
    }
}

impl Op {
    pub fn arity(self) -> usize {
        match self {
            Op::Binary(_) => 2,
            Op::Unary(_) | Op::State(_) => 1,
        }
    }

    pub fn is_stateful(self) -> bool {
        matches!(self, Op::State(_))
    }

    pub fn name(self) -> &'static str {
        match self {
            Op::Unary(u) => u.name(),
            Op::Binary(b) => b.name(),
            Op::State(s) => s.name(),
        }
    }

    pub fn from_name(name: &str) -> Option<Op> {
        all_ops().into_iter().find(|op| op.name() == name)
    }
}

impl fmt::Display for Op {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Every operation code known to the interpreter.
pub fn all_ops() -> Vec<Op> {
    let mut ops: Vec<Op> = SCALAR_UNARY.iter().map(|&u| Op::Unary(u)).collect();
    ops.extend(
        [Unary::Arctan, Unary::Square, Unary::Sqrt, Unary::TanhGrad]
            .iter()
            .map(|&u| Op::Unary(u)),
    );
    ops.extend(BINARY.iter().map(|&b| Op::Binary(b)));
    ops.extend(STATE_UNARY.iter().map(|&s| Op::State(s)));
    ops
}

/// The 36 operations sampled when building or mutating update graphs.
pub fn update_search_ops() -> Vec<Op> {
    let mut ops: Vec<Op> = SCALAR_UNARY.iter().map(|&u| Op::Unary(u)).collect();
    ops.extend(BINARY.iter().map(|&b| Op::Binary(b)));
    ops.extend(STATE_UNARY.iter().map(|&s| Op::State(s)));
    ops
}

/// The 23 operations available to decay graphs.
pub fn decay_search_ops() -> Vec<Op> {
    let mut ops: Vec<Op> = DECAY_UNARY.iter().map(|&u| Op::Unary(u)).collect();
    ops.extend(BINARY.iter().map(|&b| Op::Binary(b)));
    ops
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.max(0.0) + (-x.abs()).exp().ln_1p()
    }
}

/// `x / (||x||_2 + eps)` over the whole tensor.
pub fn norm_in_place(xs: &mut [f64]) {
    let n = xs.iter().map(|x| x * x).sum::<f64>().sqrt();
    let d = n + EPS;
    for x in xs.iter_mut() {
        *x /= d;
    }
}

// Chebyshev coefficients for exp(-|x|) I1(x), Cephes `i1e`.
const I1E_A: [f64; 29] = [
    2.777_914_112_761_046_4e-18,
    -2.111_421_214_358_166e-17,
    1.553_631_957_736_200_5e-16,
    -1.105_596_947_735_386_3e-15,
    7.600_684_294_735_407e-15,
    -5.042_185_504_727_912e-14,
    3.223_793_365_945_574_7e-13,
    -1.983_974_397_764_943_7e-12,
    1.173_618_629_889_090_2e-11,
    -6.663_489_723_502_028e-11,
    3.625_590_281_552_117e-10,
    -1.887_249_751_722_829_3e-9,
    9.381_537_386_495_772e-9,
    -4.445_059_128_796_328e-8,
    2.003_294_753_552_135_3e-7,
    -8.568_720_264_695_455e-7,
    3.470_251_308_137_678_5e-6,
    -1.327_316_365_603_943_6e-5,
    4.781_565_107_550_054e-5,
    -1.617_608_158_258_967_5e-4,
    5.122_859_561_685_758e-4,
    -1.513_572_450_631_253_2e-3,
    4.156_422_944_312_888e-3,
    -1.056_408_489_462_619_8e-2,
    2.472_644_903_062_651_7e-2,
    -5.294_598_120_809_499e-2,
    1.026_436_586_898_471e-1,
    -1.764_165_183_578_340_6e-1,
    2.525_871_864_436_336_5e-1,
];

const I1E_B: [f64; 25] = [
    7.517_296_310_842_105e-18,
    4.414_348_323_071_708e-18,
    -4.650_305_368_489_358e-17,
    -3.209_525_921_993_424e-17,
    2.962_628_997_645_950_3e-16,
    3.308_202_310_920_928e-16,
    -1.880_354_775_510_782_4e-15,
    -3.814_403_072_437_007_6e-15,
    1.042_027_698_412_880_3e-14,
    4.272_440_016_711_951e-14,
    -2.101_541_842_772_664_3e-14,
    -4.083_551_111_092_197e-13,
    -7.198_551_776_245_908e-13,
    2.035_628_544_147_089_5e-12,
    1.412_580_743_661_378_1e-11,
    3.252_603_583_015_488e-11,
    -1.897_495_812_350_541_2e-11,
    -5.589_743_462_196_584e-10,
    -3.835_380_385_964_237e-9,
    -2.631_468_846_889_519_5e-8,
    -2.512_236_237_870_209e-7,
    -3.882_564_808_877_690_4e-6,
    -1.105_889_387_626_237_2e-4,
    -9.761_097_491_361_469e-3,
    7.785_762_350_182_801e-1,
];

fn chebyshev(x: f64, coeffs: &[f64]) -> f64 {
    let mut b0 = coeffs[0];
    let mut b1 = 0.0;
    let mut b2 = 0.0;
    for &c in &coeffs[1..] {
        b2 = b1;
        b1 = b0;
        b0 = x * b1 - b2 + c;
    }
    0.5 * (b0 - b2)
}

/// Exponentially scaled modified Bessel function of the first kind, order 1:
/// `exp(-|x|) * I1(x)`.
pub fn bessel_i1e(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    let z = x.abs();
    let r = if z <= 8.0 {
        chebyshev(z / 2.0 - 2.0, &I1E_A) * z
    } else {
        chebyshev(32.0 / z - 2.0, &I1E_B) / z.sqrt()
    };
    if x < 0.0 {
        -r
    } else {
        r
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Power series for I1 scaled by exp(-|x|); independent of the
    /// Chebyshev path.
    fn i1e_series(x: f64) -> f64 {
        let h = x / 2.0;
        let mut term = h;
        let mut sum = term;
        for k in 1..200 {
            let kf = k as f64;
            term *= h * h / (kf * (kf + 1.0));
            sum += term;
            if term.abs() < 1e-18 * sum.abs() {
                break;
            }
        }
        sum * (-x.abs()).exp()
    }

    #[test]
    fn bessel_matches_series() {
        for i in -300..=300 {
            let x = i as f64 * 0.05;
            let a = bessel_i1e(x);
            let b = i1e_series(x);
            assert!((a - b).abs() <= 1e-13 + 1e-12 * b.abs(), "x={x}: {a} vs {b}");
        }
        // asymptotic branch, |x| > 8
        for &x in &[9.0, 12.5, 20.0, 30.0] {
            let a = bessel_i1e(x);
            let b = i1e_series(x);
            assert!((a - b).abs() <= 1e-12 * b.abs(), "x={x}: {a} vs {b}");
        }
    }

    #[test]
    fn clip_bounds_by_magnitude() {
        assert_eq!(Binary::Clip.apply(5.0, 2.0), 2.0);
        assert_eq!(Binary::Clip.apply(5.0, -2.0), 2.0);
        assert_eq!(Binary::Clip.apply(-5.0, 2.0), -2.0);
        assert_eq!(Binary::Clip.apply(0.5, 2.0), 0.5);
    }

    #[test]
    fn scalar_spot_values() {
        assert_eq!(Unary::Softsign.apply(1.0), 0.5);
        assert_eq!(Unary::MinZero.apply(-2.0), -2.0);
        assert_eq!(Unary::MaxZero.apply(-2.0), 0.0);
        assert!((Unary::SigmoidGrad.apply(0.0) - 0.25).abs() < 1e-15);
        assert!((Unary::TanhGrad.apply(0.0) - 1.0).abs() < 1e-15);
        assert!((Unary::SoftsignGrad.apply(1.0) - 0.25).abs() < 1e-15);
        assert!((Unary::Softplus.apply(0.0) - 2f64.ln()).abs() < 1e-15);
        assert!((Unary::Erfc.apply(1.0) - 0.157_299_207_050_285_13).abs() < 1e-15);
    }

    #[test]
    fn domain_conventions_are_total() {
        assert!(Unary::Arctanh.apply(1.0).is_finite());
        assert!(Unary::Arctanh.apply(-7.0).is_finite());
        assert!(Unary::LnAbs.apply(0.0).is_finite());
        assert!(Binary::Div.apply(1.0, 0.0).is_finite());
        assert!(Binary::PowAbs.apply(0.0, 0.0).is_finite());
        assert!((Binary::PowAbs.apply(-2.0, 3.0) - 8.0).abs() < 1e-6);
    }

    #[test]
    fn state_ops_trace() {
        let mut z = 0.0;
        let mut out = vec![];
        for x in [3.0, 1.0] {
            z = StateUnary::RunMax.advance(x, z);
            out.push(z);
        }
        assert_eq!(out, vec![3.0, 3.0]);
        assert_eq!(StateUnary::Diff.advance(2.0, 0.5), 1.5);
        assert!((StateUnary::Ema95.advance(1.0, 1.0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn op_tables_have_expected_sizes() {
        assert_eq!(update_search_ops().len(), 36);
        assert_eq!(decay_search_ops().len(), 23);
        let names: std::collections::HashSet<_> = all_ops().iter().map(|o| o.name()).collect();
        assert_eq!(names.len(), all_ops().len());
        for op in all_ops() {
            assert_eq!(Op::from_name(op.name()), Some(op));
        }
    }

    #[test]
    fn decay_unary_ops_keep_unit_interval() {
        for u in DECAY_UNARY {
            for i in 0..=100 {
                let y = u.apply(i as f64 / 100.0);
                assert!((0.0..=1.0).contains(&y), "{} maps into {y}", u.name());
            }
        }
    }
}
