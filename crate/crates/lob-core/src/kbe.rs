//! Backward-equation solver: conditional expectations of terminal
//! functionals by explicit Euler stepping of the book-process generator.
//!
//! One Euler step evaluates the generator through the order-flow/clearing
//! split (perturb every event, clear, difference the values); for the
//! explicit first-order step this coincides with stepping the book generator
//! directly. The state space is realized lazily: a forward influence sweep
//! from the origin indexes every state whose Euler-chain mass reaches
//! `pruning_eps`, and the backward iteration runs on that set with the
//! terminal's default value standing in for anything outside. The induced
//! error at the origin is bounded by the influence that ever leaves the set,
//! which the solve report tracks.

use crate::book::BookState;
use crate::flow::{Frame, IntensityModel};
use crate::generator::{transition_distribution, AbsoluteDynamics, GeneratorError, StateFunction};
use std::collections::HashMap;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum KbeError {
    #[error("explicit Euler step unstable: dt {dt} times max total rate {max_rate} is not below 1")]
    StabilityViolated { dt: f64, max_rate: f64 },
    #[error("state exploration exceeded the budget of {0} states")]
    BudgetExceeded(usize),
    #[error("bad problem: {0}")]
    BadProblem(String),
    #[error(transparent)]
    Generator(#[from] GeneratorError),
}

/// Terminal condition at the horizon.
#[derive(Debug, Clone)]
pub enum Terminal {
    /// Explicit values with a default outside the listed states.
    Values(StateFunction<BookState>),
    /// Indicator of the ask price exceeding `level` (default 0).
    AskAbove(u32),
}

impl Terminal {
    pub fn eval(&self, state: &BookState) -> f64 {
        match self {
            Terminal::Values(f) => f.get(state),
            Terminal::AskAbove(level) => {
                if state.ask() > *level {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// The value assumed outside the explored set.
    pub fn default_value(&self) -> f64 {
        match self {
            Terminal::Values(f) => f.default_value(),
            Terminal::AskAbove(_) => 0.0,
        }
    }
}

/// What to do when exploration hits the state budget.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BudgetPolicy {
    /// Fail the solve.
    Error,
    /// Stop indexing new states; flows to unindexed states fall back to the
    /// terminal default (documented truncation).
    Freeze,
}

/// Whether per-step maps run on the rayon pool or a plain loop. Results are
/// identical either way; without the `parallel` feature both run the loop.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Parallelism {
    Sequential,
    Rayon,
}

/// A backward-equation problem: expectation of `terminal` at `horizon`
/// conditioned on starting from `origin`, stepped with `dt`.
#[derive(Debug, Clone)]
pub struct KbeProblem {
    pub model: IntensityModel,
    pub terminal: Terminal,
    pub origin: BookState,
    pub horizon: f64,
    pub dt: f64,
    pub pruning_eps: f64,
    pub max_states: usize,
    pub on_budget: BudgetPolicy,
}

impl KbeProblem {
    pub fn new(model: IntensityModel, terminal: Terminal, origin: BookState, horizon: f64, dt: f64) -> Self {
        Self {
            model,
            terminal,
            origin,
            horizon,
            dt,
            pruning_eps: 1e-8,
            max_states: 400_000,
            on_budget: BudgetPolicy::Freeze,
        }
    }

    /// Steps per solve: the horizon over `dt`, rounded to nearest.
    pub fn n_steps(&self) -> u32 {
        (self.horizon / self.dt).round() as u32
    }
}

/// Diagnostics of one solve.
#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub explored_states: usize,
    pub steps: u32,
    /// `steps * dt`; differs from the requested horizon by at most `dt/2`.
    pub effective_horizon: f64,
    pub max_total_rate: f64,
    /// Influence mass discarded during exploration (pruning plus any budget
    /// freeze).
    pub dropped_mass: f64,
    /// A priori bound on what per-step pruning can feed through per unit of
    /// terminal value: `pruning_eps * steps * dt * max_total_rate`.
    pub pruning_influence_bound: f64,
    pub budget_hit: bool,
}

/// Solution: values at time zero over the explored set.
#[derive(Debug, Clone)]
pub struct KbeSolution {
    pub values: StateFunction<BookState>,
    pub origin_value: f64,
    pub report: SolveReport,
}

// transitions in compressed rows; OUTSIDE marks flows leaving the explored
// set, which the backward step values at the terminal default
const OUTSIDE: u32 = u32::MAX;
const UNBUILT: u32 = u32::MAX;

struct Rows {
    span: Vec<(usize, u32)>, // (start, len) per state; len == UNBUILT until built
    targets: Vec<u32>,
    rates: Vec<f32>,
    totals: Vec<f64>,
}

/// Explored state set with its transition structure; dt-independent, so one
/// exploration can serve several step sizes.
pub struct PreparedKbe {
    pub states: Vec<BookState>,
    pub index: HashMap<BookState, u32>,
    rows: Rows,
    default_value: f64,
    terminal_values: Vec<f64>,
    report_base: SolveReport,
}

fn build_row(
    model: &IntensityModel,
    states: &mut Vec<BookState>,
    index: &mut HashMap<BookState, u32>,
    state_idx: usize,
    max_states: usize,
    on_budget: BudgetPolicy,
    allow_new: bool,
) -> Result<(Vec<u32>, Vec<f32>, f64, bool), KbeError> {
    let dynamics = AbsoluteDynamics::new(model)?;
    let state = states[state_idx].clone();
    let td = transition_distribution(&dynamics, &state)?;
    let mut targets = Vec::with_capacity(td.transitions.len());
    let mut rates = Vec::with_capacity(td.transitions.len());
    let mut budget_hit = false;
    for t in &td.transitions {
        let tgt = match index.get(&t.successor) {
            Some(&j) => j,
            None if allow_new => {
                if states.len() >= max_states {
                    match on_budget {
                        BudgetPolicy::Error => return Err(KbeError::BudgetExceeded(max_states)),
                        BudgetPolicy::Freeze => {
                            budget_hit = true;
                            OUTSIDE
                        }
                    }
                } else {
                    let j = states.len() as u32;
                    index.insert(t.successor.clone(), j);
                    states.push(t.successor.clone());
                    j
                }
            }
            None => OUTSIDE,
        };
        targets.push(tgt);
        rates.push(t.rate as f32);
    }
    Ok((targets, rates, td.total_rate, budget_hit))
}

/// Explore the influence set from the origin and build the transition rows.
pub fn prepare(problem: &KbeProblem) -> Result<PreparedKbe, KbeError> {
    if problem.model.frame() != Frame::Absolute {
        return Err(KbeError::BadProblem("backward solves run in the fixed coordinate frame".into()));
    }
    if !problem.origin.is_admissible() {
        return Err(KbeError::BadProblem("origin must be admissible".into()));
    }
    if !(problem.horizon >= 0.0) || !(problem.dt > 0.0) {
        return Err(KbeError::BadProblem("need horizon >= 0 and dt > 0".into()));
    }
    let n_steps = problem.n_steps();
    let mut states = vec![problem.origin.clone()];
    let mut index = HashMap::from([(problem.origin.clone(), 0u32)]);
    let mut rows = Rows { span: vec![(0, UNBUILT)], targets: Vec::new(), rates: Vec::new(), totals: vec![0.0] };
    let mut dropped = 0.0;
    let mut budget_hit = false;

    if n_steps > 0 {
        // influence sweep: the Euler chain itself on a coarsened clock (the
        // reachable support saturates long before the fine clock does)
        let explore_steps = n_steps.min(256);
        let dt_exp = (n_steps as f64 * problem.dt) / explore_steps as f64;
        let mut mass = vec![1.0f64];
        for _ in 0..explore_steps {
            let active = mass.len();
            let mut next = vec![0.0f64; states.len()];
            for i in 0..active {
                let m = mass[i];
                if m == 0.0 {
                    continue;
                }
                if m < problem.pruning_eps {
                    dropped += m;
                    continue;
                }
                if rows.span[i].1 == UNBUILT {
                    let (targets, rates, total, hit) = build_row(
                        &problem.model,
                        &mut states,
                        &mut index,
                        i,
                        problem.max_states,
                        problem.on_budget,
                        true,
                    )?;
                    budget_hit |= hit;
                    rows.span[i] = (rows.targets.len(), targets.len() as u32);
                    rows.targets.extend_from_slice(&targets);
                    rows.rates.extend_from_slice(&rates);
                    rows.totals[i] = total;
                    rows.span.resize(states.len(), (0, UNBUILT));
                    rows.totals.resize(states.len(), 0.0);
                    next.resize(states.len(), 0.0);
                }
                let (start, len) = rows.span[i];
                let total = rows.totals[i];
                if dt_exp * total <= 1.0 {
                    next[i] += m * (1.0 - dt_exp * total);
                    for k in 0..len as usize {
                        let tgt = rows.targets[start + k];
                        let flow = m * dt_exp * rows.rates[start + k] as f64;
                        if tgt == OUTSIDE {
                            dropped += flow;
                        } else {
                            next[tgt as usize] += flow;
                        }
                    }
                } else {
                    // over-coarse exploration clock at a hot state: spread
                    // all mass proportionally instead of going negative
                    for k in 0..len as usize {
                        let tgt = rows.targets[start + k];
                        let flow = m * rows.rates[start + k] as f64 / total;
                        if tgt == OUTSIDE {
                            dropped += flow;
                        } else {
                            next[tgt as usize] += flow;
                        }
                    }
                }
            }
            mass = next;
        }
    }

    // complete rows for boundary states discovered but never expanded;
    // their successors outside the set keep the OUTSIDE sentinel
    for i in 0..states.len() {
        if rows.span[i].1 == UNBUILT {
            let (targets, rates, total, _) = build_row(
                &problem.model,
                &mut states,
                &mut index,
                i,
                problem.max_states,
                problem.on_budget,
                false,
            )?;
            rows.span[i] = (rows.targets.len(), targets.len() as u32);
            rows.targets.extend_from_slice(&targets);
            rows.rates.extend_from_slice(&rates);
            rows.totals[i] = total;
        }
    }

    let max_total_rate = rows.totals.iter().copied().fold(0.0, f64::max);
    let terminal_values: Vec<f64> = states.iter().map(|s| problem.terminal.eval(s)).collect();
    let report_base = SolveReport {
        explored_states: states.len(),
        steps: n_steps,
        effective_horizon: n_steps as f64 * problem.dt,
        max_total_rate,
        dropped_mass: dropped,
        pruning_influence_bound: problem.pruning_eps * n_steps as f64 * problem.dt * max_total_rate,
        budget_hit,
    };
    Ok(PreparedKbe {
        states,
        index,
        rows,
        default_value: problem.terminal.default_value(),
        terminal_values,
        report_base,
    })
}

impl PreparedKbe {
    fn step_one(&self, i: usize, w: &[f64], dt: f64) -> f64 {
        let (start, len) = self.rows.span[i];
        let wi = w[i];
        let mut acc = 0.0;
        for k in 0..len as usize {
            let tgt = self.rows.targets[start + k];
            let wj = if tgt == OUTSIDE { self.default_value } else { w[tgt as usize] };
            acc += self.rows.rates[start + k] as f64 * (wj - wi);
        }
        wi + dt * acc
    }

    /// Iterate the backward Euler step `n_steps` times from the terminal
    /// values. Fails if the step is unstable anywhere on the explored set.
    pub fn run(&self, dt: f64, n_steps: u32, parallelism: Parallelism) -> Result<Vec<f64>, KbeError> {
        if n_steps > 0 && dt * self.report_base.max_total_rate >= 1.0 {
            return Err(KbeError::StabilityViolated { dt, max_rate: self.report_base.max_total_rate });
        }
        let mut w = self.terminal_values.clone();
        let mut w2 = vec![0.0f64; w.len()];
        for _ in 0..n_steps {
            match parallelism {
                Parallelism::Sequential => {
                    for (i, out) in w2.iter_mut().enumerate() {
                        *out = self.step_one(i, &w, dt);
                    }
                }
                Parallelism::Rayon => step_parallel(self, &w, &mut w2, dt),
            }
            std::mem::swap(&mut w, &mut w2);
        }
        Ok(w)
    }

    /// Index of the origin in `states` (always 0 by construction).
    pub fn origin_index(&self) -> usize {
        0
    }

    pub fn report(&self) -> &SolveReport {
        &self.report_base
    }
}

#[cfg(feature = "parallel")]
fn step_parallel(prep: &PreparedKbe, w: &[f64], w2: &mut [f64], dt: f64) {
    use rayon::prelude::*;
    w2.par_iter_mut().enumerate().for_each(|(i, out)| *out = prep.step_one(i, w, dt));
}

#[cfg(not(feature = "parallel"))]
fn step_parallel(prep: &PreparedKbe, w: &[f64], w2: &mut [f64], dt: f64) {
    for (i, out) in w2.iter_mut().enumerate() {
        *out = prep.step_one(i, w, dt);
    }
}

/// Solve the backward problem and return time-zero values on the explored
/// set.
pub fn solve(problem: &KbeProblem) -> Result<KbeSolution, KbeError> {
    solve_with(problem, Parallelism::Rayon)
}

pub fn solve_with(problem: &KbeProblem, parallelism: Parallelism) -> Result<KbeSolution, KbeError> {
    let prep = prepare(problem)?;
    let w = prep.run(problem.dt, problem.n_steps(), parallelism)?;
    let mut values = StateFunction::constant(problem.terminal.default_value());
    for (s, v) in prep.states.iter().zip(&w) {
        values.set(s.clone(), *v);
    }
    Ok(KbeSolution { origin_value: w[prep.origin_index()], values, report: prep.report_base.clone() })
}

/// Probability that the ask at the horizon exceeds its initial value,
/// conditioned on the problem's origin.
pub fn ask_increase_probability(problem: &KbeProblem) -> Result<KbeSolution, KbeError> {
    let mut p = problem.clone();
    p.terminal = Terminal::AskAbove(p.origin.ask());
    solve(&p)
}

/// Self-convergence study: solve at each `dt` against the `dt_min`
/// reference on one shared explored set, reporting `(dt, |u_dt - u_ref|)`
/// at the origin.
pub fn convergence_study(problem: &KbeProblem, dts: &[f64], dt_min: f64) -> Result<Vec<(f64, f64)>, KbeError> {
    if dts.iter().any(|&dt| dt < dt_min) {
        return Err(KbeError::BadProblem("dt_min must be the smallest step".into()));
    }
    let mut shared = problem.clone();
    shared.dt = dt_min;
    let prep = prepare(&shared)?;
    let steps_of = |dt: f64| (problem.horizon / dt).round().max(0.0) as u32;
    let reference = prep.run(dt_min, steps_of(dt_min), Parallelism::Rayon)?[prep.origin_index()];
    let mut out = Vec::with_capacity(dts.len());
    for &dt in dts {
        let u = prep.run(dt, steps_of(dt), Parallelism::Rayon)?[prep.origin_index()];
        out.push((dt, (u - reference).abs()));
    }
    Ok(out)
}

/// Least-squares slope of `log err` against `log dt`, ignoring zero errors.
pub fn log_log_slope(points: &[(f64, f64)]) -> f64 {
    let pts: Vec<(f64, f64)> =
        points.iter().filter(|(_, e)| *e > 0.0).map(|&(dt, e)| (dt.ln(), e.ln())).collect();
    let n = pts.len() as f64;
    assert!(n >= 2.0, "need at least two nonzero errors for a slope");
    let (sx, sy): (f64, f64) = pts.iter().fold((0.0, 0.0), |(a, b), (x, y)| (a + x, b + y));
    let (mx, my) = (sx / n, sy / n);
    let num: f64 = pts.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    let den: f64 = pts.iter().map(|(x, _)| (x - mx) * (x - mx)).sum();
    num / den
}
