//! Decay schedules, decay-graph evaluation, the one-cycle base learning-rate
//! multiplier and the discovered learning-rate schedules.

use std::f64::consts::PI;
use std::fmt;

use crate::graph::{DecayGraph, Source};
use crate::ops::{Op, Unary};

/// Overshoot tolerated (and clamped away) when a schedule leaves `[0, 1]`
/// through rounding.
pub const CLAMP_GUARD: f64 = 1e-12;

/// Position in training: step `t` of a horizon of `total` steps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Clock {
    pub t: u64,
    pub total: u64,
}

impl Clock {
    /// Panics unless `total > 0` and `t <= total`.
    pub fn new(t: u64, total: u64) -> Self {
        assert!(total > 0, "clock horizon must be positive");
        assert!(t <= total, "clock step {t} beyond horizon {total}");
        Clock { t, total }
    }

    pub fn try_new(t: u64, total: u64) -> Option<Self> {
        (total > 0 && t <= total).then_some(Clock { t, total })
    }

    /// `t / T`
    pub fn frac(&self) -> f64 {
        self.t as f64 / self.total as f64
    }

    /// `mod(2t, T) / T`; wraps to 0 at `t = T/2` and `t = T`.
    pub fn restart_frac(&self) -> f64 {
        ((2 * self.t) % self.total) as f64 / self.total as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ScheduleId {
    Ld,
    Li,
    Ldr,
    Lir,
    Cd,
    Ci,
    Cdr,
    Cir,
    Ccd,
    Cci,
    Ed,
    Ei,
    Dd,
    Di,
}

pub const SCHEDULES: [ScheduleId; 14] = [
    ScheduleId::Ld,
    ScheduleId::Li,
    ScheduleId::Ldr,
    ScheduleId::Lir,
    ScheduleId::Cd,
    ScheduleId::Ci,
    ScheduleId::Cdr,
    ScheduleId::Cir,
    ScheduleId::Ccd,
    ScheduleId::Cci,
    ScheduleId::Ed,
    ScheduleId::Ei,
    ScheduleId::Dd,
    ScheduleId::Di,
];

fn demon(frac: f64) -> f64 {
    let r = 1.0 - frac;
    0.95 * r / (0.05 + 0.95 * r)
}

fn guard(x: f64) -> f64 {
    if (-CLAMP_GUARD..0.0).contains(&x) {
        0.0
    } else if x > 1.0 && x <= 1.0 + CLAMP_GUARD {
        1.0
    } else {
        x
    }
}

impl ScheduleId {
    pub fn name(self) -> &'static str {
        match self {
            ScheduleId::Ld => "ld",
            ScheduleId::Li => "li",
            ScheduleId::Ldr => "ldr",
            ScheduleId::Lir => "lir",
            ScheduleId::Cd => "cd",
            ScheduleId::Ci => "ci",
            ScheduleId::Cdr => "cdr",
            ScheduleId::Cir => "cir",
            ScheduleId::Ccd => "ccd",
            ScheduleId::Cci => "cci",
            ScheduleId::Ed => "ed",
            ScheduleId::Ei => "ei",
            ScheduleId::Dd => "dd",
            ScheduleId::Di => "di",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        SCHEDULES.iter().copied().find(|s| s.name() == name)
    }

    pub fn eval(self, clock: Clock) -> f64 {
        let f = clock.frac();
        let r = clock.restart_frac();
        let v = match self {
            ScheduleId::Ld => 1.0 - f,
            ScheduleId::Li => f,
            ScheduleId::Ldr => 1.0 - r,
            ScheduleId::Lir => r,
            ScheduleId::Cd => 0.5 * (1.0 + (f * PI).cos()),
            ScheduleId::Ci => 0.5 * (1.0 - (f * PI).cos()),
            ScheduleId::Cdr => 0.5 * (1.0 + (PI * r).cos()),
            ScheduleId::Cir => 0.5 * (1.0 - (PI * r).cos()),
            ScheduleId::Ccd => 0.5 * (1.0 + (2.0 * f * PI).cos()),
            ScheduleId::Cci => 0.5 * (1.0 - (2.0 * f * PI).cos()),
            ScheduleId::Ed => 0.01f64.powf(f),
            ScheduleId::Ei => 1.0 - 0.01f64.powf(f),
            ScheduleId::Dd => demon(f),
            ScheduleId::Di => 0.95 - demon(f),
        };
        guard(v)
    }
}

impl fmt::Display for ScheduleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

pub fn eval_schedule(id: ScheduleId, clock: Clock) -> f64 {
    id.eval(clock)
}

/// Evaluates a decay graph at `clock`: schedules first, then the active
/// nodes in index order, output last.
pub fn eval_decay_graph(dg: &DecayGraph, clock: Clock) -> f64 {
    let active = dg.active_hidden();
    let mut values = vec![f64::NAN; dg.hidden.len()];
    let read = |values: &[f64], src: &Source<ScheduleId>| match *src {
        Source::Leaf(s) => s.eval(clock),
        Source::Node(i) => values[i],
    };
    let apply = |values: &[f64], node: &crate::graph::Node<ScheduleId>| -> f64 {
        match node.op {
            Op::Unary(u) => u.apply(read(values, &node.inputs[0].source)),
            Op::Binary(b) => b.apply(
                read(values, &node.inputs[0].source),
                read(values, &node.inputs[1].source),
            ),
            // Decay graphs never hold registers; validation rejects this.
            Op::State(_) => f64::NAN,
        }
    };
    for (i, node) in dg.hidden.iter().enumerate() {
        if active[i] {
            values[i] = apply(&values, node);
        }
    }
    apply(&values, &dg.output)
}

/// One-cycle base multiplier: linear warm-up, hold, then cosine decay to 0.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct OneCycle {
    pub warm_frac: f64,
    pub hold_frac: f64,
}

impl Default for OneCycle {
    fn default() -> Self {
        OneCycle {
            warm_frac: 6400.0 / 96000.0,
            hold_frac: 12800.0 / 96000.0,
        }
    }
}

impl OneCycle {
    pub fn new(warm_frac: f64, hold_frac: f64) -> Option<Self> {
        (warm_frac >= 0.0 && hold_frac >= 0.0 && warm_frac + hold_frac <= 1.0)
            .then_some(OneCycle { warm_frac, hold_frac })
    }

    pub fn eval(&self, clock: Clock) -> f64 {
        let x = clock.frac();
        let warm_end = self.warm_frac;
        let hold_end = self.warm_frac + self.hold_frac;
        if x < warm_end {
            x / warm_end
        } else if x <= hold_end {
            1.0
        } else {
            let span = 1.0 - hold_end;
            let p = (x - hold_end) / span;
            guard(0.5 * (1.0 + (PI * p).cos()))
        }
    }
}

pub fn one_cycle(clock: Clock, warm_frac: f64, hold_frac: f64) -> f64 {
    OneCycle { warm_frac, hold_frac }.eval(clock)
}

/// The nine discovered learning-rate schedules. Each is applied on top of
/// the one-cycle base multiplier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LrSchedule {
    Lr1,
    Lr2,
    Lr3,
    Lr4,
    Lr5,
    Lr6,
    Lr7,
    Lr8,
    Lr9,
}

pub const LR_SCHEDULES: [LrSchedule; 9] = [
    LrSchedule::Lr1,
    LrSchedule::Lr2,
    LrSchedule::Lr3,
    LrSchedule::Lr4,
    LrSchedule::Lr5,
    LrSchedule::Lr6,
    LrSchedule::Lr7,
    LrSchedule::Lr8,
    LrSchedule::Lr9,
];

impl LrSchedule {
    pub fn name(self) -> &'static str {
        match self {
            LrSchedule::Lr1 => "LR1",
            LrSchedule::Lr2 => "LR2",
            LrSchedule::Lr3 => "LR3",
            LrSchedule::Lr4 => "LR4",
            LrSchedule::Lr5 => "LR5",
            LrSchedule::Lr6 => "LR6",
            LrSchedule::Lr7 => "LR7",
            LrSchedule::Lr8 => "LR8",
            LrSchedule::Lr9 => "LR9",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        LR_SCHEDULES
            .iter()
            .copied()
            .find(|s| s.name().eq_ignore_ascii_case(name))
    }

    /// The schedule's own factor, without the one-cycle base.
    pub fn raw(self, clock: Clock) -> f64 {
        use ScheduleId::*;
        let s = |id: ScheduleId| id.eval(clock);
        let u = |op: Unary, x: f64| op.apply(x);
        match self {
            LrSchedule::Lr1 => {
                u(Unary::Erfc, u(Unary::Erfc, s(Ci))) / u(Unary::TanhGrad, s(Cir))
            }
            LrSchedule::Lr2 => {
                u(Unary::Erfc, u(Unary::Erfc, s(Ci)))
                    / (u(Unary::TanhGrad, s(Cir)) * u(Unary::TanhGrad, s(Ci)))
            }
            LrSchedule::Lr3 => {
                u(Unary::Arctan, s(Li))
                    / (u(Unary::TanhGrad, s(Lir)) * u(Unary::SoftsignGrad, s(Di)).sqrt())
            }
            LrSchedule::Lr4 => {
                let a = u(Unary::Sigmoid, s(Li));
                a * a / u(Unary::Sigmoid, 2.0 * u(Unary::Softsign, s(Ld)))
            }
            LrSchedule::Lr5 => 1.0 / u(Unary::Erf, s(Ed)).sqrt(),
            LrSchedule::Lr6 => {
                u(Unary::Arctan, s(Li)) * u(Unary::Erfc, s(Cci))
                    / u(Unary::SoftsignGrad, s(Cci)).sqrt()
            }
            LrSchedule::Lr7 => 1.0 / u(Unary::SoftsignGrad, s(Lir)).sqrt(),
            LrSchedule::Lr8 => 1.0 / u(Unary::Softsign, u(Unary::Arctan, s(Ei))).sqrt(),
            LrSchedule::Lr9 => u(Unary::Tanh, s(Cci).max(s(Lir))),
        }
    }

    /// Full multiplier: `raw(t) * one_cycle(t)`. Where the base is exactly
    /// zero the product is zero, which is also its limit for LR8 at `t = 0`
    /// where the raw factor diverges.
    pub fn eval(self, clock: Clock, base: &OneCycle) -> f64 {
        let b = base.eval(clock);
        if b == 0.0 {
            0.0
        } else {
            self.raw(clock) * b
        }
    }
}

pub fn catalog_lr(name: LrSchedule, clock: Clock) -> f64 {
    name.eval(clock, &OneCycle::default())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spot_values() {
        let t = 1000;
        assert_eq!(ScheduleId::Ld.eval(Clock::new(0, t)), 1.0);
        assert!((ScheduleId::Cd.eval(Clock::new(500, t)) - 0.5).abs() < 1e-12);
        // 0.95 / (0.05 + 0.95)
        assert!((ScheduleId::Dd.eval(Clock::new(0, t)) - 0.95).abs() < 1e-12);
        // 1 - 0.01^1
        assert!((ScheduleId::Ei.eval(Clock::new(t, t)) - 0.99).abs() < 1e-12);
    }

    #[test]
    fn restart_wraps_at_horizon() {
        let c = Clock::new(10, 10);
        assert_eq!(c.restart_frac(), 0.0);
        assert_eq!(ScheduleId::Ldr.eval(c), 1.0);
        assert_eq!(Clock::new(5, 10).restart_frac(), 0.0);
        assert_eq!(Clock::new(3, 10).restart_frac(), 0.6);
    }

    #[test]
    fn one_cycle_phases() {
        let oc = OneCycle::default();
        let total = 96000;
        assert_eq!(oc.eval(Clock::new(0, total)), 0.0);
        assert!((oc.eval(Clock::new(6400, total)) - 1.0).abs() < 1e-12);
        assert_eq!(oc.eval(Clock::new(19200, total)), 1.0);
        assert!(oc.eval(Clock::new(total, total)).abs() < 1e-12);
        assert!((oc.eval(Clock::new(3200, total)) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn one_cycle_without_warmup_starts_at_peak() {
        let oc = OneCycle::new(0.0, 0.0).unwrap();
        assert_eq!(oc.eval(Clock::new(0, 10)), 1.0);
        assert!(OneCycle::new(0.7, 0.5).is_none());
    }

    #[test]
    fn lr_schedules_vanish_at_both_ends() {
        for lr in LR_SCHEDULES {
            assert_eq!(catalog_lr(lr, Clock::new(0, 1000)), 0.0, "{}", lr.name());
            assert!(catalog_lr(lr, Clock::new(1000, 1000)).abs() < 1e-12, "{}", lr.name());
        }
    }

    #[test]
    fn lr7_at_half_horizon() {
        // lir wraps to 0 at T/2, softsign'(0) = 1, so the raw factor is 1.
        let c = Clock::new(500, 1000);
        assert_eq!(ScheduleId::Lir.eval(c), 0.0);
        let expected = 1.0 / (1.0f64 / (1.0 + 0.0f64).powi(2)).sqrt() * OneCycle::default().eval(c);
        assert!((catalog_lr(LrSchedule::Lr7, c) - expected).abs() < 1e-15);
    }
}
