//! Numeric tables behind the schedule, learning-rate, decay and update
//! surface plots. Every table renders to CSV with a header row.

use crate::engine::{compute_update, init_state};
use crate::graph::OptimizerGenome;
use crate::schedules::{eval_decay_graph, Clock, OneCycle, LR_SCHEDULES, SCHEDULES};
use crate::Error;

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let j = self.header.iter().position(|h| h == name)?;
        Some(self.rows.iter().map(|r| r[j]).collect())
    }

    pub fn to_csv(&self) -> Result<String, Error> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let csv_err = |e: csv::Error| Error::Csv { line: 0, msg: e.to_string() };
        w.write_record(&self.header).map_err(csv_err)?;
        for r in &self.rows {
            w.write_record(r.iter().map(|v| v.to_string())).map_err(csv_err)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Parse(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

fn check_total(total: u64) -> Result<(), Error> {
    if total == 0 {
        return Err(Error::Config("horizon T must be positive".into()));
    }
    Ok(())
}

/// `t` plus every primitive schedule, for `t = 0..=T`.
pub fn schedules_table(total: u64) -> Result<Table, Error> {
    check_total(total)?;
    let mut header = vec!["t".to_string()];
    header.extend(SCHEDULES.iter().map(|s| s.name().to_string()));
    let rows = (0..=total)
        .map(|t| {
            let c = Clock::new(t, total);
            std::iter::once(t as f64).chain(SCHEDULES.iter().map(|s| s.eval(c))).collect()
        })
        .collect();
    Ok(Table { header, rows })
}

/// `t`, the one-cycle base and the nine catalog learning-rate schedules.
/// With `normalize`, each schedule column is divided by its maximum.
pub fn lr_table(total: u64, base: &OneCycle, normalize: bool) -> Result<Table, Error> {
    check_total(total)?;
    let mut header = vec!["t".to_string(), "one_cycle".to_string()];
    header.extend(LR_SCHEDULES.iter().map(|s| s.name().to_string()));
    let mut rows: Vec<Vec<f64>> = (0..=total)
        .map(|t| {
            let c = Clock::new(t, total);
            let mut r = vec![t as f64, base.eval(c)];
            r.extend(LR_SCHEDULES.iter().map(|s| s.eval(c, base)));
            r
        })
        .collect();
    if normalize {
        for j in 1..header.len() {
            let max = rows.iter().map(|r| r[j].abs()).fold(0.0, f64::max);
            if max > 0.0 {
                rows.iter_mut().for_each(|r| r[j] /= max);
            }
        }
    }
    Ok(Table { header, rows })
}

/// `t` plus one column per decayed connection, labelled `<node>.<slot>`.
pub fn decay_table(genome: &OptimizerGenome, total: u64) -> Result<Table, Error> {
    check_total(total)?;
    let decays = genome.graph.decays();
    let mut header = vec!["t".to_string()];
    header.extend(decays.iter().map(|(r, slot, _)| format!("{}.{slot}", r.label())));
    let rows = (0..=total)
        .map(|t| {
            let c = Clock::new(t, total);
            std::iter::once(t as f64).chain(decays.iter().map(|(_, _, dg)| eval_decay_graph(dg, c))).collect()
        })
        .collect();
    Ok(Table { header, rows })
}

/// State quantities a surface axis can sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    G,
    W,
    VHat,
    SHat,
    LambdaHat,
}

impl Axis {
    pub fn name(self) -> &'static str {
        match self {
            Axis::G => "g",
            Axis::W => "w",
            Axis::VHat => "v_hat",
            Axis::SHat => "s_hat",
            Axis::LambdaHat => "lambda_hat",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        [Axis::G, Axis::W, Axis::VHat, Axis::SHat, Axis::LambdaHat].into_iter().find(|a| a.name() == s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceSpec {
    pub x: Axis,
    pub y: Axis,
    pub lo: f64,
    pub hi: f64,
    /// Grid points per axis.
    pub points: usize,
    pub clock: Clock,
}

/// Update `U` over a 2-D grid of two state quantities, every other quantity
/// held at zero. One row per grid point: `x, y, u`.
pub fn surface(genome: &OptimizerGenome, spec: &SurfaceSpec) -> Result<Table, Error> {
    if spec.points < 2 || !(spec.hi > spec.lo) || spec.x == spec.y {
        return Err(Error::Config("surface needs two distinct axes, at least 2 points and hi > lo".into()));
    }
    let n = spec.points;
    let len = n * n;
    let coord = |i: usize| spec.lo + (spec.hi - spec.lo) * i as f64 / (n - 1) as f64;
    let mut g = vec![0.0; len];
    let mut w = vec![0.0; len];
    let mut state = init_state(genome, len, 0);
    let mut xs = Vec::with_capacity(len);
    let mut ys = Vec::with_capacity(len);
    for i in 0..n {
        for j in 0..n {
            let idx = i * n + j;
            let (xv, yv) = (coord(i), coord(j));
            xs.push(xv);
            ys.push(yv);
            for (axis, v) in [(spec.x, xv), (spec.y, yv)] {
                match axis {
                    Axis::G => g[idx] = v,
                    Axis::W => w[idx] = v,
                    Axis::VHat => state.v_hat[idx] = v,
                    Axis::SHat => state.s_hat[idx] = v,
                    Axis::LambdaHat => state.lambda_hat[idx] = v,
                }
            }
        }
    }
    let (u, _) = compute_update(genome, &mut state, &g, &w, spec.clock);
    let rows = (0..len).map(|k| vec![xs[k], ys[k], u[k]]).collect();
    Ok(Table { header: vec![spec.x.name().into(), spec.y.name().into(), "u".into()], rows })
}
