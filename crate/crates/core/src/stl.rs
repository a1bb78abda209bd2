//! Signal temporal logic over vehicle position signals.
//!
//! Distances are measured in the inf-norm. Exact robustness uses min/max;
//! the smooth variant replaces every min/max node with log-sum-exp at a
//! given temperature while keeping predicates exact.

use std::collections::HashMap;
use std::fmt;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::trajectory::Trajectory;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StlError {
    #[error("signal has {have} samples, formula needs {need}")]
    HorizonExceeded { need: usize, have: usize },
    #[error("robustness {0} is not positive")]
    NonPositiveRobustness(f64),
    #[error("formula refers to vehicle {0}, only {1} signals given")]
    MissingSignal(usize, usize),
    #[error("parse error: {0}")]
    Parse(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Polarity {
    Goal,
    Unsafe,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxRegion {
    #[serde(default)]
    pub name: String,
    pub center: Vector3<f64>,
    pub half_widths: Vector3<f64>,
    pub polarity: Polarity,
}

impl BoxRegion {
    pub fn new(name: &str, center: Vector3<f64>, half_widths: Vector3<f64>, polarity: Polarity) -> Self {
        assert!(half_widths.iter().all(|&h| h > 0.0), "half widths must be positive");
        Self { name: name.to_string(), center, half_widths, polarity }
    }

    /// Signed inf-norm depth: positive inside, minus the distance outside.
    pub fn signed_depth(&self, p: &Vector3<f64>) -> f64 {
        (0..3)
            .map(|i| self.half_widths[i] - (p[i] - self.center[i]).abs())
            .fold(f64::INFINITY, f64::min)
    }

    pub fn contains(&self, p: &Vector3<f64>) -> bool {
        (0..3).all(|i| (p[i] - self.center[i]).abs() <= self.half_widths[i])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Predicate {
    InBox { vehicle: usize, region: BoxRegion },
    /// ‖p_a − p_b‖∞ ≥ delta
    Separation { a: usize, b: usize, delta: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum StlFormula {
    Pred(Predicate),
    Not(Box<StlFormula>),
    And(Vec<StlFormula>),
    Or(Vec<StlFormula>),
    /// Interval bounds in seconds.
    Always(f64, f64, Box<StlFormula>),
    Eventually(f64, f64, Box<StlFormula>),
}

impl StlFormula {
    pub fn in_box(vehicle: usize, region: BoxRegion) -> Self {
        Self::Pred(Predicate::InBox { vehicle, region })
    }

    pub fn separation(a: usize, b: usize, delta: f64) -> Self {
        Self::Pred(Predicate::Separation { a, b, delta })
    }

    #[allow(clippy::should_implement_trait)]
    pub fn not(f: StlFormula) -> Self {
        Self::Not(Box::new(f))
    }

    pub fn always(a: f64, b: f64, f: StlFormula) -> Self {
        assert!(0.0 <= a && a <= b, "interval must satisfy 0 <= a <= b");
        Self::Always(a, b, Box::new(f))
    }

    pub fn eventually(a: f64, b: f64, f: StlFormula) -> Self {
        assert!(0.0 <= a && a <= b, "interval must satisfy 0 <= a <= b");
        Self::Eventually(a, b, Box::new(f))
    }

    /// Number of steps past the evaluation time the formula looks at.
    pub fn horizon_steps(&self, dt: f64) -> usize {
        match self {
            Self::Pred(_) => 0,
            Self::Not(f) => f.horizon_steps(dt),
            Self::And(fs) | Self::Or(fs) => fs.iter().map(|f| f.horizon_steps(dt)).max().unwrap_or(0),
            Self::Always(a, b, f) | Self::Eventually(a, b, f) => {
                window(*a, *b, dt).1 + f.horizon_steps(dt)
            }
        }
    }

    pub fn horizon(&self, dt: f64) -> f64 {
        self.horizon_steps(dt) as f64 * dt
    }

    /// Nesting depth counted in min/max nodes.
    pub fn depth(&self) -> usize {
        match self {
            Self::Pred(_) => 0,
            Self::Not(f) => f.depth(),
            Self::And(fs) | Self::Or(fs) => 1 + fs.iter().map(Self::depth).max().unwrap_or(0),
            Self::Always(_, _, f) | Self::Eventually(_, _, f) => 1 + f.depth(),
        }
    }

    /// Largest operand count at any min/max node.
    pub fn max_arity(&self, dt: f64) -> usize {
        match self {
            Self::Pred(_) => 1,
            Self::Not(f) => f.max_arity(dt),
            Self::And(fs) | Self::Or(fs) => {
                fs.iter().map(|f| f.max_arity(dt)).max().unwrap_or(1).max(fs.len())
            }
            Self::Always(a, b, f) | Self::Eventually(a, b, f) => {
                let (lo, hi) = window(*a, *b, dt);
                f.max_arity(dt).max(hi - lo + 1)
            }
        }
    }

    /// Highest vehicle index referenced.
    pub fn max_vehicle(&self) -> usize {
        match self {
            Self::Pred(Predicate::InBox { vehicle, .. }) => *vehicle,
            Self::Pred(Predicate::Separation { a, b, .. }) => *a.max(b),
            Self::Not(f) | Self::Always(_, _, f) | Self::Eventually(_, _, f) => f.max_vehicle(),
            Self::And(fs) | Self::Or(fs) => fs.iter().map(Self::max_vehicle).max().unwrap_or(0),
        }
    }

    /// Worst-case gap between smooth and exact robustness at `temperature`.
    pub fn smooth_error_bound(&self, dt: f64, temperature: f64) -> f64 {
        self.depth() as f64 * (self.max_arity(dt) as f64).ln() / temperature
    }
}

/// Interval in seconds to inclusive step offsets.
pub fn window(a: f64, b: f64, dt: f64) -> (usize, usize) {
    let lo = (a / dt + 1e-9).floor() as usize;
    let hi = (b / dt - 1e-9).ceil().max(0.0) as usize;
    (lo, hi.max(lo))
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Mode {
    Exact,
    Smooth(f64),
}

/// Position samples per vehicle.
pub type Signals = [Vec<Vector3<f64>>];

struct Trace {
    values: Vec<f64>,
    children: Vec<Trace>,
}

fn check_signals(f: &StlFormula, signals: &Signals, dt: f64) -> Result<usize, StlError> {
    let need_vehicle = f.max_vehicle();
    if need_vehicle >= signals.len() {
        return Err(StlError::MissingSignal(need_vehicle, signals.len()));
    }
    let len = signals.iter().map(Vec::len).min().unwrap_or(0);
    let need = f.horizon_steps(dt) + 1;
    if len < need {
        return Err(StlError::HorizonExceeded { need, have: len });
    }
    Ok(len)
}

fn predicate_value(p: &Predicate, signals: &Signals, k: usize) -> f64 {
    match p {
        Predicate::InBox { vehicle, region } => region.signed_depth(&signals[*vehicle][k]),
        Predicate::Separation { a, b, delta } => (signals[*a][k] - signals[*b][k]).amax() - delta,
    }
}

fn aggregate(values: &[f64], mode: Mode, is_min: bool) -> f64 {
    match mode {
        Mode::Exact => {
            if is_min {
                values.iter().copied().fold(f64::INFINITY, f64::min)
            } else {
                values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
            }
        }
        Mode::Smooth(t) => {
            let s = if is_min { -1.0 } else { 1.0 };
            let m = values.iter().map(|v| s * v).fold(f64::NEG_INFINITY, f64::max);
            let sum: f64 = values.iter().map(|v| (t * (s * v - m)).exp()).sum();
            s * (m + sum.ln() / t)
        }
    }
}

/// d aggregate / d value_i, written into `out`.
fn aggregate_weights(values: &[f64], mode: Mode, is_min: bool, out: &mut Vec<f64>) {
    out.clear();
    out.resize(values.len(), 0.0);
    match mode {
        Mode::Exact => {
            let mut best = 0;
            for i in 1..values.len() {
                let better = if is_min { values[i] < values[best] } else { values[i] > values[best] };
                if better {
                    best = i;
                }
            }
            out[best] = 1.0;
        }
        Mode::Smooth(t) => {
            let s = if is_min { -1.0 } else { 1.0 };
            let m = values.iter().map(|v| s * v).fold(f64::NEG_INFINITY, f64::max);
            let mut total = 0.0;
            for (o, v) in out.iter_mut().zip(values) {
                *o = (t * (s * v - m)).exp();
                total += *o;
            }
            for o in out.iter_mut() {
                *o /= total;
            }
        }
    }
}

fn evaluate(f: &StlFormula, signals: &Signals, len: usize, dt: f64, mode: Mode) -> Trace {
    match f {
        StlFormula::Pred(p) => Trace {
            values: (0..len).map(|k| predicate_value(p, signals, k)).collect(),
            children: vec![],
        },
        StlFormula::Not(g) => {
            let c = evaluate(g, signals, len, dt, mode);
            Trace { values: c.values.iter().map(|v| -v).collect(), children: vec![c] }
        }
        StlFormula::And(gs) | StlFormula::Or(gs) => {
            let is_min = matches!(f, StlFormula::And(_));
            let children: Vec<Trace> = gs.iter().map(|g| evaluate(g, signals, len, dt, mode)).collect();
            let n = children.iter().map(|c| c.values.len()).min().unwrap_or(len);
            let mut buf = Vec::with_capacity(children.len());
            let values = (0..n)
                .map(|k| {
                    buf.clear();
                    buf.extend(children.iter().map(|c| c.values[k]));
                    aggregate(&buf, mode, is_min)
                })
                .collect();
            Trace { values, children }
        }
        StlFormula::Always(a, b, g) | StlFormula::Eventually(a, b, g) => {
            let is_min = matches!(f, StlFormula::Always(..));
            let (lo, hi) = window(*a, *b, dt);
            let c = evaluate(g, signals, len, dt, mode);
            let n = c.values.len().saturating_sub(hi);
            let values = (0..n).map(|k| aggregate(&c.values[k + lo..=k + hi], mode, is_min)).collect();
            Trace { values, children: vec![c] }
        }
    }
}

/// Accumulate d(root)/d(position) given adjoints on this node's values.
fn backward(
    f: &StlFormula,
    trace: &Trace,
    adjoint: &[f64],
    signals: &Signals,
    dt: f64,
    mode: Mode,
    grad: &mut [Vec<Vector3<f64>>],
) {
    match f {
        StlFormula::Pred(p) => {
            for (k, &g) in adjoint.iter().enumerate() {
                if g == 0.0 {
                    continue;
                }
                match p {
                    Predicate::InBox { vehicle, region } => {
                        let p = signals[*vehicle][k];
                        let mut best = 0;
                        let mut best_v = f64::INFINITY;
                        for i in 0..3 {
                            let v = region.half_widths[i] - (p[i] - region.center[i]).abs();
                            if v < best_v {
                                best_v = v;
                                best = i;
                            }
                        }
                        let d = p[best] - region.center[best];
                        let s = if d >= 0.0 { -1.0 } else { 1.0 };
                        grad[*vehicle][k][best] += g * s;
                    }
                    Predicate::Separation { a, b, .. } => {
                        let z = signals[*a][k] - signals[*b][k];
                        let i = z.iamax();
                        let s = if z[i] >= 0.0 { 1.0 } else { -1.0 };
                        grad[*a][k][i] += g * s;
                        grad[*b][k][i] -= g * s;
                    }
                }
            }
        }
        StlFormula::Not(g) => {
            let adj: Vec<f64> = adjoint.iter().map(|v| -v).collect();
            backward(g, &trace.children[0], &adj, signals, dt, mode, grad);
        }
        StlFormula::And(gs) | StlFormula::Or(gs) => {
            let is_min = matches!(f, StlFormula::And(_));
            let mut adjs: Vec<Vec<f64>> = trace.children.iter().map(|c| vec![0.0; c.values.len()]).collect();
            let mut buf = Vec::new();
            let mut w = Vec::new();
            for (k, &g) in adjoint.iter().enumerate() {
                if g == 0.0 {
                    continue;
                }
                buf.clear();
                buf.extend(trace.children.iter().map(|c| c.values[k]));
                aggregate_weights(&buf, mode, is_min, &mut w);
                for (adj, wi) in adjs.iter_mut().zip(&w) {
                    adj[k] += g * wi;
                }
            }
            for ((child_f, child_t), adj) in gs.iter().zip(&trace.children).zip(&adjs) {
                backward(child_f, child_t, adj, signals, dt, mode, grad);
            }
        }
        StlFormula::Always(a, b, g) | StlFormula::Eventually(a, b, g) => {
            let is_min = matches!(f, StlFormula::Always(..));
            let (lo, hi) = window(*a, *b, dt);
            let child = &trace.children[0];
            let mut adj = vec![0.0; child.values.len()];
            let mut w = Vec::new();
            for (k, &gk) in adjoint.iter().enumerate() {
                if gk == 0.0 {
                    continue;
                }
                aggregate_weights(&child.values[k + lo..=k + hi], mode, is_min, &mut w);
                for (j, wj) in w.iter().enumerate() {
                    adj[k + lo + j] += gk * wj;
                }
            }
            backward(g, child, &adj, signals, dt, mode, grad);
        }
    }
}

fn value_at_zero(f: &StlFormula, signals: &Signals, dt: f64, mode: Mode) -> Result<f64, StlError> {
    let len = check_signals(f, signals, dt)?;
    Ok(evaluate(f, signals, len, dt, mode).values[0])
}

fn value_and_gradient(
    f: &StlFormula,
    signals: &Signals,
    dt: f64,
    mode: Mode,
) -> Result<(f64, Vec<Vec<Vector3<f64>>>), StlError> {
    let len = check_signals(f, signals, dt)?;
    let trace = evaluate(f, signals, len, dt, mode);
    let mut adjoint = vec![0.0; trace.values.len()];
    adjoint[0] = 1.0;
    let mut grad: Vec<Vec<Vector3<f64>>> = signals.iter().map(|s| vec![Vector3::zeros(); s.len()]).collect();
    backward(f, &trace, &adjoint, signals, dt, mode, &mut grad);
    Ok((trace.values[0], grad))
}

/// Exact robustness at time zero over multi-vehicle position signals.
pub fn robustness_signals(f: &StlFormula, signals: &Signals, dt: f64) -> Result<f64, StlError> {
    value_at_zero(f, signals, dt, Mode::Exact)
}

pub fn robustness(f: &StlFormula, traj: &Trajectory) -> Result<f64, StlError> {
    robustness_signals(f, &[traj.positions()], traj.dt)
}

pub fn robustness_joint(f: &StlFormula, trajs: &[&Trajectory]) -> Result<f64, StlError> {
    let signals: Vec<_> = trajs.iter().map(|t| t.positions()).collect();
    robustness_signals(f, &signals, trajs.first().map_or(0.1, |t| t.dt))
}

pub fn smooth_robustness_signals(
    f: &StlFormula,
    signals: &Signals,
    dt: f64,
    temperature: f64,
) -> Result<f64, StlError> {
    assert!(temperature > 0.0, "temperature must be positive");
    value_at_zero(f, signals, dt, Mode::Smooth(temperature))
}

pub fn smooth_robustness(f: &StlFormula, traj: &Trajectory, temperature: f64) -> Result<f64, StlError> {
    smooth_robustness_signals(f, &[traj.positions()], traj.dt, temperature)
}

/// Smooth robustness and its gradient with respect to every position sample.
pub fn smooth_robustness_gradient(
    f: &StlFormula,
    signals: &Signals,
    dt: f64,
    temperature: f64,
) -> Result<(f64, Vec<Vec<Vector3<f64>>>), StlError> {
    assert!(temperature > 0.0, "temperature must be positive");
    value_and_gradient(f, signals, dt, Mode::Smooth(temperature))
}

/// Exact robustness with a subgradient selecting one binding coordinate per
/// min/max node (lowest index on ties).
pub fn robustness_subgradient(
    f: &StlFormula,
    signals: &Signals,
    dt: f64,
) -> Result<(f64, Vec<Vec<Vector3<f64>>>), StlError> {
    value_and_gradient(f, signals, dt, Mode::Exact)
}

/// The (vehicle, step, axis, sign) whose coordinate the exact robustness
/// moves with, and the sign of that dependence.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CriticalPoint {
    pub vehicle: usize,
    pub step: usize,
    pub axis: usize,
    pub slope: f64,
}

pub fn critical_point(f: &StlFormula, signals: &Signals, dt: f64) -> Result<Option<CriticalPoint>, StlError> {
    let (_, grad) = robustness_subgradient(f, signals, dt)?;
    let mut found = None;
    for (vehicle, g) in grad.iter().enumerate() {
        for (step, v) in g.iter().enumerate() {
            for axis in 0..3 {
                if v[axis] != 0.0 && found.is_none() {
                    found = Some(CriticalPoint { vehicle, step, axis, slope: v[axis] });
                }
            }
        }
    }
    Ok(found)
}

/// Boolean semantics, evaluated independently of the robustness code.
pub fn satisfies(f: &StlFormula, signals: &Signals, dt: f64) -> Result<bool, StlError> {
    check_signals(f, signals, dt)?;
    Ok(holds_at(f, signals, dt, 0))
}

fn holds_at(f: &StlFormula, signals: &Signals, dt: f64, k: usize) -> bool {
    match f {
        StlFormula::Pred(Predicate::InBox { vehicle, region }) => region.contains(&signals[*vehicle][k]),
        StlFormula::Pred(Predicate::Separation { a, b, delta }) => {
            let z = signals[*a][k] - signals[*b][k];
            z.iter().any(|c| c.abs() >= *delta)
        }
        StlFormula::Not(g) => !holds_at(g, signals, dt, k),
        StlFormula::And(gs) => gs.iter().all(|g| holds_at(g, signals, dt, k)),
        StlFormula::Or(gs) => gs.iter().any(|g| holds_at(g, signals, dt, k)),
        StlFormula::Always(a, b, g) => {
            let (lo, hi) = window(*a, *b, dt);
            (k + lo..=k + hi).all(|j| holds_at(g, signals, dt, j))
        }
        StlFormula::Eventually(a, b, g) => {
            let (lo, hi) = window(*a, *b, dt);
            (k + lo..=k + hi).any(|j| holds_at(g, signals, dt, j))
        }
    }
}

/// Per-step inf-norm box around a position sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustnessTube {
    pub centerline: Vec<Vector3<f64>>,
    pub radius: f64,
}

impl RobustnessTube {
    pub fn new(centerline: Vec<Vector3<f64>>, radius: f64) -> Self {
        Self { centerline, radius }
    }

    pub fn bounds(&self, k: usize) -> (Vector3<f64>, Vector3<f64>) {
        let r = Vector3::repeat(self.radius);
        (self.centerline[k] - r, self.centerline[k] + r)
    }

    /// Largest inf-norm excursion of `traj` from the centerline.
    pub fn max_excursion(&self, traj: &Trajectory) -> f64 {
        traj.states
            .iter()
            .zip(&self.centerline)
            .map(|(s, c)| (s.position - c).amax())
            .fold(0.0, f64::max)
    }

    pub fn contains(&self, traj: &Trajectory, tol: f64) -> bool {
        traj.len() == self.centerline.len() && self.max_excursion(traj) <= self.radius + tol
    }
}

pub fn tube(f: &StlFormula, traj: &Trajectory) -> Result<RobustnessTube, StlError> {
    let r = robustness(f, traj)?;
    if r <= 0.0 {
        return Err(StlError::NonPositiveRobustness(r));
    }
    Ok(RobustnessTube::new(traj.positions(), r))
}

impl fmt::Display for StlFormula {
    fn fmt(&self, out: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Pred(Predicate::InBox { vehicle, region }) => {
                if *vehicle == 0 {
                    write!(out, "(in {})", region.name)
                } else {
                    write!(out, "(in {} {})", region.name, vehicle)
                }
            }
            Self::Pred(Predicate::Separation { a, b, delta }) => write!(out, "(sep {a} {b} {delta})"),
            Self::Not(g) => write!(out, "(not {g})"),
            Self::And(gs) | Self::Or(gs) => {
                write!(out, "({}", if matches!(self, Self::And(_)) { "and" } else { "or" })?;
                for g in gs {
                    write!(out, " {g}")?;
                }
                write!(out, ")")
            }
            Self::Always(a, b, g) => write!(out, "(alw {a} {b} {g})"),
            Self::Eventually(a, b, g) => write!(out, "(ev {a} {b} {g})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Sexp {
    Atom(String),
    List(Vec<Sexp>),
}

fn tokenize(text: &str) -> Vec<String> {
    text.replace('(', " ( ").replace(')', " ) ").split_whitespace().map(str::to_string).collect()
}

fn read_sexp(tokens: &[String], pos: &mut usize) -> Result<Sexp, StlError> {
    let tok = tokens.get(*pos).ok_or_else(|| StlError::Parse("unexpected end of input".into()))?;
    *pos += 1;
    match tok.as_str() {
        "(" => {
            let mut items = Vec::new();
            loop {
                match tokens.get(*pos).map(String::as_str) {
                    Some(")") => {
                        *pos += 1;
                        return Ok(Sexp::List(items));
                    }
                    Some(_) => items.push(read_sexp(tokens, pos)?),
                    None => return Err(StlError::Parse("missing ')'".into())),
                }
            }
        }
        ")" => Err(StlError::Parse("unexpected ')'".into())),
        atom => Ok(Sexp::Atom(atom.to_string())),
    }
}

fn atom(s: &Sexp) -> Result<&str, StlError> {
    match s {
        Sexp::Atom(a) => Ok(a),
        Sexp::List(_) => Err(StlError::Parse("expected an atom".into())),
    }
}

fn number<T: std::str::FromStr>(s: &Sexp) -> Result<T, StlError> {
    let a = atom(s)?;
    a.parse().map_err(|_| StlError::Parse(format!("bad number '{a}'")))
}

fn to_formula(s: &Sexp, regions: &HashMap<String, BoxRegion>) -> Result<StlFormula, StlError> {
    let Sexp::List(items) = s else {
        return Err(StlError::Parse(format!("expected a form, got {s:?}")));
    };
    let head = items.first().ok_or_else(|| StlError::Parse("empty form".into()))?;
    let args = &items[1..];
    let arity = |n: usize| {
        if args.len() == n {
            Ok(())
        } else {
            Err(StlError::Parse(format!("'{}' takes {n} arguments", atom(head).unwrap_or("?"))))
        }
    };
    match atom(head)? {
        "in" => {
            if args.is_empty() || args.len() > 2 {
                return Err(StlError::Parse("'in' takes a region and an optional vehicle".into()));
            }
            let name = atom(&args[0])?;
            let region = regions
                .get(name)
                .cloned()
                .ok_or_else(|| StlError::Parse(format!("unknown region '{name}'")))?;
            let vehicle = if args.len() == 2 { number(&args[1])? } else { 0 };
            Ok(StlFormula::in_box(vehicle, region))
        }
        "sep" => {
            arity(3)?;
            Ok(StlFormula::separation(number(&args[0])?, number(&args[1])?, number(&args[2])?))
        }
        "not" => {
            arity(1)?;
            Ok(StlFormula::not(to_formula(&args[0], regions)?))
        }
        "and" | "or" => {
            if args.is_empty() {
                return Err(StlError::Parse("'and'/'or' need operands".into()));
            }
            let fs = args.iter().map(|a| to_formula(a, regions)).collect::<Result<Vec<_>, _>>()?;
            Ok(if atom(head)? == "and" { StlFormula::And(fs) } else { StlFormula::Or(fs) })
        }
        op @ ("alw" | "ev") => {
            arity(3)?;
            let a: f64 = number(&args[0])?;
            let b: f64 = number(&args[1])?;
            if !(0.0 <= a && a <= b) {
                return Err(StlError::Parse(format!("bad interval [{a}, {b}]")));
            }
            let inner = Box::new(to_formula(&args[2], regions)?);
            Ok(if op == "alw" { StlFormula::Always(a, b, inner) } else { StlFormula::Eventually(a, b, inner) })
        }
        other => Err(StlError::Parse(format!("unknown operator '{other}'"))),
    }
}

/// Parse the prefix text form, e.g. `(and (ev 0 6 (in goal)) (alw 0 6 (not (in wall))))`.
pub fn parse_formula(text: &str, regions: &HashMap<String, BoxRegion>) -> Result<StlFormula, StlError> {
    let tokens = tokenize(text);
    let mut pos = 0;
    let s = read_sexp(&tokens, &mut pos)?;
    if pos != tokens.len() {
        return Err(StlError::Parse("trailing input".into()));
    }
    to_formula(&s, regions)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::VehicleState;

    fn v(x: f64, y: f64, z: f64) -> Vector3<f64> {
        Vector3::new(x, y, z)
    }

    fn constant(p: Vector3<f64>, n: usize) -> Trajectory {
        Trajectory::constant(VehicleState::at_rest(p), n, 0.1)
    }

    fn unit_box() -> BoxRegion {
        BoxRegion::new("box", Vector3::zeros(), v(1.0, 1.0, 1.0), Polarity::Goal)
    }

    #[test]
    fn always_inside_box() {
        let f = StlFormula::always(0.0, 1.0, StlFormula::in_box(0, unit_box()));
        let r = robustness(&f, &constant(v(0.5, 0.0, 0.0), 11)).unwrap();
        assert!((r - 0.5).abs() < 1e-12);
        assert!(matches!(
            robustness(&f, &constant(v(0.5, 0.0, 0.0), 10)),
            Err(StlError::HorizonExceeded { need: 11, have: 10 })
        ));
    }

    #[test]
    fn eventually_missing_goal() {
        let goal = BoxRegion::new("goal", v(2.0, 0.0, 0.0), v(0.5, 0.5, 0.5), Polarity::Goal);
        let f = StlFormula::eventually(0.0, 1.0, StlFormula::in_box(0, goal));
        // Closest approach along x is 0.3 outside the face at x = 1.5.
        let traj = Trajectory::new(
            (0..11).map(|k| VehicleState::at_rest(v(0.2 + 0.1 * k as f64, 0.0, 0.0))).collect(),
            0.1,
        );
        let r = robustness(&f, &traj).unwrap();
        assert!((r + 0.3).abs() < 1e-12, "{r}");
    }

    #[test]
    fn single_predicate_smooth_is_exact() {
        let f = StlFormula::in_box(0, unit_box());
        let t = constant(v(0.3, -0.2, 0.9), 3);
        for temp in [0.1, 1.0, 25.0, 1e4] {
            assert_eq!(smooth_robustness(&f, &t, temp).unwrap(), robustness(&f, &t).unwrap());
        }
    }

    #[test]
    fn two_operand_and() {
        let a = BoxRegion::new("a", Vector3::zeros(), v(0.5, 5.0, 5.0), Polarity::Goal);
        let b = BoxRegion::new("b", Vector3::zeros(), v(0.7, 5.0, 5.0), Polarity::Goal);
        let f = StlFormula::And(vec![StlFormula::in_box(0, a), StlFormula::in_box(0, b)]);
        let t = constant(Vector3::zeros(), 1);
        let s = smooth_robustness(&f, &t, 100.0).unwrap();
        assert!((s - 0.5).abs() <= 2f64.ln() / 100.0);
        assert!(s <= 0.5);
    }

    #[test]
    fn interval_to_steps() {
        assert_eq!(window(0.0, 1.0, 0.1), (0, 10));
        assert_eq!(window(0.25, 0.35, 0.1), (2, 4));
        assert_eq!(window(0.3, 0.3, 0.1), (3, 3));
        let f = StlFormula::always(0.0, 1.0, StlFormula::eventually(0.5, 2.0, StlFormula::in_box(0, unit_box())));
        assert_eq!(f.horizon_steps(0.1), 30);
        assert_eq!(f.depth(), 2);
        assert_eq!(f.max_arity(0.1), 16);
    }

    #[test]
    fn tube_has_robustness_radius() {
        let f = StlFormula::always(0.0, 0.5, StlFormula::in_box(0, unit_box()));
        let t = constant(v(0.8, 0.0, 0.0), 6);
        let tb = tube(&f, &t).unwrap();
        assert!((tb.radius - 0.2).abs() < 1e-12);
        assert_eq!(tb.centerline.len(), 6);
        let bad = constant(v(1.5, 0.0, 0.0), 6);
        assert!(matches!(tube(&f, &bad), Err(StlError::NonPositiveRobustness(_))));
    }

    #[test]
    fn separation_predicate() {
        let f = StlFormula::always(0.0, 0.2, StlFormula::separation(0, 1, 0.1));
        let a = constant(Vector3::zeros(), 3);
        let b = constant(v(0.05, -0.25, 0.0), 3);
        let r = robustness_joint(&f, &[&a, &b]).unwrap();
        assert!((r - 0.15).abs() < 1e-12);
        assert!(matches!(robustness(&f, &a), Err(StlError::MissingSignal(1, 1))));
    }

    #[test]
    fn parse_and_print() {
        let mut regions = HashMap::new();
        regions.insert("goal1".to_string(), BoxRegion::new("goal1", v(1.0, 0.0, 0.0), v(0.2, 0.2, 0.2), Polarity::Goal));
        regions.insert("wall".to_string(), BoxRegion::new("wall", v(0.5, 0.0, 0.0), v(0.05, 1.0, 1.0), Polarity::Unsafe));
        let text = "(and (ev 0 6 (in goal1)) (alw 0 6 (not (in wall))))";
        let f = parse_formula(text, &regions).unwrap();
        assert_eq!(f.to_string(), text);
        assert_eq!(parse_formula(&f.to_string(), &regions).unwrap(), f);
        assert!(matches!(f, StlFormula::And(ref fs) if fs.len() == 2));
        assert!(parse_formula("(in nowhere)", &regions).is_err());
        assert!(parse_formula("(ev 2 1 (in wall))", &regions).is_err());
        assert!(parse_formula("(and (in wall)", &regions).is_err());
        assert!(parse_formula("(in wall) extra", &regions).is_err());
        let g = parse_formula("(alw 0 1 (sep 0 1 0.1))", &regions).unwrap();
        assert_eq!(g, StlFormula::always(0.0, 1.0, StlFormula::separation(0, 1, 0.1)));
    }
}
