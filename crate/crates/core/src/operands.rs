//! Leaf inputs of the update graph.

use std::fmt;

/// The 20 operands an update graph may read.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum OperandId {
    G,
    G2,
    G3,
    VHat,
    SHat,
    LambdaHat,
    SignG,
    SignVHat,
    One,
    Two,
    W1e6,
    W1e5,
    W1e4,
    W1e3,
    /// `0.3 g + 0.7 v̂`
    QhmV,
    /// `0.05 g² + 0.95 ŝ`
    QhmS,
    /// `0.01 g³ + 0.99 λ̂`
    QhmLambda,
    /// `(1/3) Σ βʲ vʲ - g`
    AggV,
    /// `(1/3) Σ βʲ sʲ - g²`
    AggS,
    /// `(1/3) Σ βʲ λʲ - g³`
    AggLambda,
}

pub const OPERANDS: [OperandId; 20] = [
    OperandId::G,
    OperandId::G2,
    OperandId::G3,
    OperandId::VHat,
    OperandId::SHat,
    OperandId::LambdaHat,
    OperandId::SignG,
    OperandId::SignVHat,
    OperandId::One,
    OperandId::Two,
    OperandId::W1e6,
    OperandId::W1e5,
    OperandId::W1e4,
    OperandId::W1e3,
    OperandId::QhmV,
    OperandId::QhmS,
    OperandId::QhmLambda,
    OperandId::AggV,
    OperandId::AggS,
    OperandId::AggLambda,
];

/// EMA coefficients of `v̂`, `ŝ`, `λ̂`.
pub const BETA_V: f64 = 0.9;
pub const BETA_S: f64 = 0.99;
pub const BETA_LAMBDA: f64 = 0.999;

/// Bank coefficients for the three multi-beta operands.
pub const BANK_BETAS_V: [f64; 3] = [0.0, 0.9, 0.999];
pub const BANK_BETAS_S: [f64; 3] = [0.0, 0.99, 0.999];
pub const BANK_BETAS_LAMBDA: [f64; 3] = [0.0, 0.999, 0.9999];

/// Per-element inputs from which every operand is computed.
#[derive(Debug, Clone, Copy, Default)]
pub struct OperandInputs {
    pub g: f64,
    pub w: f64,
    pub v_hat: f64,
    pub s_hat: f64,
    pub lambda_hat: f64,
    pub v_bank: [f64; 3],
    pub s_bank: [f64; 3],
    pub lambda_bank: [f64; 3],
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn aggregate(betas: &[f64; 3], bank: &[f64; 3]) -> f64 {
    betas.iter().zip(bank).map(|(b, v)| b * v).sum::<f64>() / 3.0
}

impl OperandId {
    pub fn name(self) -> &'static str {
        match self {
            OperandId::G => "g",
            OperandId::G2 => "g2",
            OperandId::G3 => "g3",
            OperandId::VHat => "v_hat",
            OperandId::SHat => "s_hat",
            OperandId::LambdaHat => "lambda_hat",
            OperandId::SignG => "sign_g",
            OperandId::SignVHat => "sign_v_hat",
            OperandId::One => "one",
            OperandId::Two => "two",
            OperandId::W1e6 => "w_1e-6",
            OperandId::W1e5 => "w_1e-5",
            OperandId::W1e4 => "w_1e-4",
            OperandId::W1e3 => "w_1e-3",
            OperandId::QhmV => "qhm_v",
            OperandId::QhmS => "qhm_s",
            OperandId::QhmLambda => "qhm_lambda",
            OperandId::AggV => "agg_v",
            OperandId::AggS => "agg_s",
            OperandId::AggLambda => "agg_lambda",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        OPERANDS.iter().copied().find(|o| o.name() == name)
    }

    /// Mathematical rendering used by the formula printer.
    pub fn symbol(self) -> &'static str {
        match self {
            OperandId::G => "g",
            OperandId::G2 => "g²",
            OperandId::G3 => "g³",
            OperandId::VHat => "v̂",
            OperandId::SHat => "ŝ",
            OperandId::LambdaHat => "λ̂",
            OperandId::SignG => "sign(g)",
            OperandId::SignVHat => "sign(v̂)",
            OperandId::One => "1",
            OperandId::Two => "2",
            OperandId::W1e6 => "1e-6w",
            OperandId::W1e5 => "1e-5w",
            OperandId::W1e4 => "1e-4w",
            OperandId::W1e3 => "1e-3w",
            OperandId::QhmV => "(0.3g+0.7v̂)",
            OperandId::QhmS => "(0.05g²+0.95ŝ)",
            OperandId::QhmLambda => "(0.01g³+0.99λ̂)",
            OperandId::AggV => "(mean_j βʲvʲ-g)",
            OperandId::AggS => "(mean_j βʲsʲ-g²)",
            OperandId::AggLambda => "(mean_j βʲλʲ-g³)",
        }
    }

    pub fn value(self, x: &OperandInputs) -> f64 {
        let g = x.g;
        match self {
            OperandId::G => g,
            OperandId::G2 => g * g,
            OperandId::G3 => g * g * g,
            OperandId::VHat => x.v_hat,
            OperandId::SHat => x.s_hat,
            OperandId::LambdaHat => x.lambda_hat,
            OperandId::SignG => sign(g),
            OperandId::SignVHat => sign(x.v_hat),
            OperandId::One => 1.0,
            OperandId::Two => 2.0,
            OperandId::W1e6 => 1e-6 * x.w,
            OperandId::W1e5 => 1e-5 * x.w,
            OperandId::W1e4 => 1e-4 * x.w,
            OperandId::W1e3 => 1e-3 * x.w,
            OperandId::QhmV => 0.3 * g + 0.7 * x.v_hat,
            OperandId::QhmS => 0.05 * g * g + 0.95 * x.s_hat,
            OperandId::QhmLambda => 0.01 * g * g * g + 0.99 * x.lambda_hat,
            OperandId::AggV => aggregate(&BANK_BETAS_V, &x.v_bank) - g,
            OperandId::AggS => aggregate(&BANK_BETAS_S, &x.s_bank) - g * g,
            OperandId::AggLambda => aggregate(&BANK_BETAS_LAMBDA, &x.lambda_bank) - g * g * g,
        }
    }
}

impl fmt::Display for OperandId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}
