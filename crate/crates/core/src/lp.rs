//! Dense two-phase primal simplex.
//!
//! Problems are stated as
//!
//! ```text
//! minimize    c·x
//! subject to  A_le x <= b_le
//!             A_eq x  = b_eq
//!             lower <= x <= upper
//! ```
//!
//! Variable bounds are handled implicitly (bounded simplex with column
//! complementing), so box constraints never become tableau rows. Infinite
//! bounds may be given either as `f64::INFINITY` or as the `±1e30` sentinel.

use std::fmt::Write as _;

use thiserror::Error;

/// Bound sentinel; any magnitude at or above this is treated as infinite.
pub const INF: f64 = 1e30;
/// Primal feasibility tolerance.
pub const FEAS_TOL: f64 = 1e-7;
/// Objective accuracy the solver is expected to deliver.
pub const OPT_TOL: f64 = 1e-6;
/// Smallest pivot element accepted by the ratio test.
pub const PIVOT_TOL: f64 = 1e-9;
/// Reduced-cost tolerance used for pricing.
const DUAL_TOL: f64 = 1e-9;
/// Bland's rule engages after this many consecutive degenerate pivots.
const BLAND_AFTER: usize = 200;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LpError {
    #[error("malformed problem: {0}")]
    MalformedProblem(String),
    #[error("iteration limit of {0} exceeded")]
    IterationLimit(usize),
}

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    /// An empty matrix with `cols` columns, to be grown with [`push_row`](Self::push_row).
    pub fn with_cols(cols: usize) -> Self {
        Self { rows: 0, cols, data: Vec::new() }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        let mut m = Self::with_cols(cols);
        for r in rows {
            m.rows += 1;
            m.data.extend_from_slice(r);
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn push_row(&mut self, row: &[f64]) {
        assert_eq!(row.len(), self.cols, "row length must equal column count");
        self.data.extend_from_slice(row);
        self.rows += 1;
    }

    fn data_len_ok(&self) -> bool {
        self.data.len() == self.rows * self.cols
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpProblem {
    pub objective: Vec<f64>,
    pub inequality_lhs: DenseMatrix,
    pub inequality_rhs: Vec<f64>,
    pub equality_lhs: DenseMatrix,
    pub equality_rhs: Vec<f64>,
    pub variable_bounds: Vec<(f64, f64)>,
}

impl LpProblem {
    /// A problem with the given costs, no rows, and every variable in `[0, inf)`.
    pub fn new(objective: Vec<f64>) -> Self {
        let n = objective.len();
        Self {
            objective,
            inequality_lhs: DenseMatrix::with_cols(n),
            inequality_rhs: Vec::new(),
            equality_lhs: DenseMatrix::with_cols(n),
            equality_rhs: Vec::new(),
            variable_bounds: vec![(0.0, INF); n],
        }
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn set_bounds(&mut self, var: usize, lower: f64, upper: f64) {
        self.variable_bounds[var] = (lower, upper);
    }

    /// `row · x <= rhs`
    pub fn add_le(&mut self, row: &[f64], rhs: f64) {
        self.inequality_lhs.push_row(row);
        self.inequality_rhs.push(rhs);
    }

    /// `row · x >= rhs`, stored as a negated `<=` row.
    pub fn add_ge(&mut self, row: &[f64], rhs: f64) {
        let neg: Vec<f64> = row.iter().map(|v| -v).collect();
        self.add_le(&neg, -rhs);
    }

    pub fn add_eq(&mut self, row: &[f64], rhs: f64) {
        self.equality_lhs.push_row(row);
        self.equality_rhs.push(rhs);
    }

    pub fn add_le_sparse(&mut self, terms: &[(usize, f64)], rhs: f64) {
        let row = self.densify(terms);
        self.add_le(&row, rhs);
    }

    pub fn add_eq_sparse(&mut self, terms: &[(usize, f64)], rhs: f64) {
        let row = self.densify(terms);
        self.add_eq(&row, rhs);
    }

    fn densify(&self, terms: &[(usize, f64)]) -> Vec<f64> {
        let mut row = vec![0.0; self.num_vars()];
        for &(j, v) in terms {
            row[j] += v;
        }
        row
    }

    pub fn validate(&self) -> Result<(), LpError> {
        let n = self.num_vars();
        let bad = |msg: String| Err(LpError::MalformedProblem(msg));
        if self.inequality_lhs.cols() != n || !self.inequality_lhs.data_len_ok() {
            return bad(format!(
                "inequality matrix has {} columns, objective has {n}",
                self.inequality_lhs.cols()
            ));
        }
        if self.equality_lhs.cols() != n || !self.equality_lhs.data_len_ok() {
            return bad(format!(
                "equality matrix has {} columns, objective has {n}",
                self.equality_lhs.cols()
            ));
        }
        if self.inequality_rhs.len() != self.inequality_lhs.rows() {
            return bad("inequality rhs length differs from row count".into());
        }
        if self.equality_rhs.len() != self.equality_lhs.rows() {
            return bad("equality rhs length differs from row count".into());
        }
        if self.variable_bounds.len() != n {
            return bad("bounds length differs from variable count".into());
        }
        let finite = self
            .objective
            .iter()
            .chain(&self.inequality_rhs)
            .chain(&self.equality_rhs)
            .chain(&self.inequality_lhs.data)
            .chain(&self.equality_lhs.data)
            .all(|v| v.is_finite());
        if !finite {
            return bad("non-finite coefficient".into());
        }
        if self.variable_bounds.iter().any(|(l, u)| l.is_nan() || u.is_nan()) {
            return bad("NaN bound".into());
        }
        Ok(())
    }

    pub fn objective_at(&self, x: &[f64]) -> f64 {
        dot(&self.objective, x)
    }

    /// Largest violation of any row or bound at `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.inequality_lhs.rows() {
            let lhs = dot(self.inequality_lhs.row(i), x);
            worst = worst.max(lhs - self.inequality_rhs[i]);
        }
        for i in 0..self.equality_lhs.rows() {
            let lhs = dot(self.equality_lhs.row(i), x);
            worst = worst.max((lhs - self.equality_rhs[i]).abs());
        }
        for (j, &(l, u)) in self.variable_bounds.iter().enumerate() {
            if !is_inf(l) {
                worst = worst.max(l - x[j]);
            }
            if !is_inf(u) {
                worst = worst.max(x[j] - u);
            }
        }
        worst
    }

    /// Plain-text dump for debugging.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let fmt_row = |row: &[f64]| {
            row.iter().map(|v| format!("{v:e}")).collect::<Vec<_>>().join(" ")
        };
        let fmt_bound = |v: f64| {
            if is_inf(v) {
                if v > 0.0 { "inf".to_string() } else { "-inf".to_string() }
            } else {
                format!("{v:e}")
            }
        };
        let _ = writeln!(out, "vars {}", self.num_vars());
        let _ = writeln!(out, "minimize {}", fmt_row(&self.objective));
        for i in 0..self.inequality_lhs.rows() {
            let _ = writeln!(
                out,
                "le {} <= {:e}",
                fmt_row(self.inequality_lhs.row(i)),
                self.inequality_rhs[i]
            );
        }
        for i in 0..self.equality_lhs.rows() {
            let _ = writeln!(
                out,
                "eq {} = {:e}",
                fmt_row(self.equality_lhs.row(i)),
                self.equality_rhs[i]
            );
        }
        for (j, &(l, u)) in self.variable_bounds.iter().enumerate() {
            let _ = writeln!(out, "bound {j} {} {}", fmt_bound(l), fmt_bound(u));
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub status: LpStatus,
    pub primal: Option<Vec<f64>>,
    pub objective_value: Option<f64>,
    /// Phase-1 residual when the problem was found infeasible.
    pub infeasibility: Option<f64>,
    pub iterations: usize,
}

impl LpSolution {
    fn without_point(status: LpStatus, iterations: usize) -> Self {
        Self { status, primal: None, objective_value: None, infeasibility: None, iterations }
    }

    pub fn is_optimal(&self) -> bool {
        self.status == LpStatus::Optimal
    }
}

pub fn solve_lp(problem: &LpProblem) -> Result<LpSolution, LpError> {
    solve_impl(problem, None)
}

/// Minimizes `problem.objective`, then minimizes `secondary` over the set of
/// primal optima. The reported objective value is the primary one.
pub fn solve_lp_lexicographic(problem: &LpProblem, secondary: &[f64]) -> Result<LpSolution, LpError> {
    if secondary.len() != problem.num_vars() {
        return Err(LpError::MalformedProblem(
            "secondary objective length differs from variable count".into(),
        ));
    }
    solve_impl(problem, Some(secondary))
}

fn is_inf(v: f64) -> bool {
    v.abs() >= INF
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// How an original variable is expressed through nonnegative tableau columns.
#[derive(Debug, Clone, Copy)]
enum VarMap {
    /// x = lo + y
    Shift { col: usize, lo: f64 },
    /// x = hi - y
    Mirror { col: usize, hi: f64 },
    /// x = y+ - y-
    Split { pos: usize, neg: usize },
}

struct Tableau {
    m: usize,
    width: usize,
    ncols: usize,
    /// Constraint rows followed by objective rows; last entry of each row is the rhs.
    a: Vec<f64>,
    basis: Vec<usize>,
    in_basis: Vec<bool>,
    upper: Vec<f64>,
    flipped: Vec<bool>,
    artificial: Vec<bool>,
    iterations: usize,
    max_iterations: usize,
}

enum Step {
    Optimal,
    Unbounded,
}

impl Tableau {
    fn rhs(&self, i: usize) -> f64 {
        self.a[i * self.width + self.width - 1]
    }

    fn at(&self, i: usize, j: usize) -> f64 {
        self.a[i * self.width + j]
    }

    fn pivot(&mut self, r: usize, q: usize) {
        let w = self.width;
        let rows = self.a.len() / w;
        let p = self.a[r * w + q];
        {
            let row_r = &mut self.a[r * w..(r + 1) * w];
            let inv = 1.0 / p;
            for v in row_r.iter_mut() {
                *v *= inv;
            }
            row_r[q] = 1.0;
        }
        let (before, rest) = self.a.split_at_mut(r * w);
        let (row_r, after) = rest.split_at_mut(w);
        let eliminate = |row: &mut [f64]| {
            let f = row[q];
            if f != 0.0 {
                for (x, y) in row.iter_mut().zip(row_r.iter()) {
                    *x -= f * y;
                }
                row[q] = 0.0;
            }
        };
        before.chunks_exact_mut(w).for_each(eliminate);
        after.chunks_exact_mut(w).for_each(eliminate);
        debug_assert_eq!(rows * w, self.a.len());
        let leaving = self.basis[r];
        self.in_basis[leaving] = false;
        self.in_basis[q] = true;
        self.basis[r] = q;
    }

    /// Replace nonbasic column `j` by `upper - y_j` in every row.
    fn complement_column(&mut self, j: usize) {
        let w = self.width;
        let u = self.upper[j];
        for row in self.a.chunks_exact_mut(w) {
            let v = row[j];
            if v != 0.0 {
                row[w - 1] -= v * u;
                row[j] = -v;
            }
        }
        self.flipped[j] = !self.flipped[j];
    }

    /// Replace the basic variable of row `r` by `upper - y`.
    fn complement_basic(&mut self, r: usize) {
        let w = self.width;
        let b = self.basis[r];
        let u = self.upper[b];
        let row = &mut self.a[r * w..(r + 1) * w];
        for (j, v) in row.iter_mut().enumerate().take(w - 1) {
            if j != b {
                *v = -*v;
            }
        }
        row[w - 1] = u - row[w - 1];
        self.flipped[b] = !self.flipped[b];
    }

    /// Run primal simplex iterations on objective row `obj`. When `restrict`
    /// is given, only columns whose reduced cost in that row is ~0 may enter.
    fn optimize(&mut self, obj: usize, restrict: Option<usize>) -> Result<Step, LpError> {
        let mut degenerate_run = 0usize;
        let mut bland = false;
        loop {
            if self.iterations >= self.max_iterations {
                return Err(LpError::IterationLimit(self.max_iterations));
            }
            let obj_row = (self.m + obj) * self.width;
            let mut entering = None;
            let mut best = -DUAL_TOL;
            for j in 0..self.ncols {
                if self.in_basis[j] || self.upper[j] <= 0.0 {
                    continue;
                }
                if let Some(p) = restrict {
                    if self.at(self.m + p, j) > DUAL_TOL {
                        continue;
                    }
                }
                let d = self.a[obj_row + j];
                if bland {
                    if d < -DUAL_TOL {
                        entering = Some(j);
                        break;
                    }
                } else if d < best {
                    best = d;
                    entering = Some(j);
                }
            }
            let Some(q) = entering else {
                return Ok(Step::Optimal);
            };

            // Ratio test.
            let mut theta = self.upper[q];
            let mut leave: Option<(usize, bool)> = None;
            let mut leave_alpha = 0.0f64;
            for i in 0..self.m {
                let alpha = self.at(i, q);
                let beta = self.rhs(i);
                let (t, at_upper) = if alpha > PIVOT_TOL {
                    (beta.max(0.0) / alpha, false)
                } else if alpha < -PIVOT_TOL {
                    let ub = self.upper[self.basis[i]];
                    if is_inf(ub) {
                        continue;
                    }
                    ((ub - beta).max(0.0) / -alpha, true)
                } else {
                    continue;
                };
                let better = match leave {
                    None => t < theta || (is_inf(theta) && t < INF),
                    Some((r, _)) => {
                        if t < theta - 1e-12 {
                            true
                        } else if t <= theta + 1e-12 {
                            if bland {
                                self.basis[i] < self.basis[r]
                            } else {
                                alpha.abs() > leave_alpha
                            }
                        } else {
                            false
                        }
                    }
                };
                if better {
                    theta = t;
                    leave = Some((i, at_upper));
                    leave_alpha = alpha.abs();
                }
            }

            self.iterations += 1;
            match leave {
                None if is_inf(theta) => return Ok(Step::Unbounded),
                None => {
                    // Entering variable reaches its own upper bound first.
                    self.complement_column(q);
                }
                Some((r, at_upper)) => {
                    if at_upper {
                        self.complement_basic(r);
                    }
                    self.pivot(r, q);
                }
            }
            if theta <= 1e-12 {
                degenerate_run += 1;
                if degenerate_run > BLAND_AFTER {
                    bland = true;
                }
            } else {
                degenerate_run = 0;
                bland = false;
            }
        }
    }

    /// Write `costs` (per column, unflipped orientation) as objective row `obj`
    /// expressed in the current basis.
    fn install_objective(&mut self, obj: usize, costs: &[f64]) {
        let w = self.width;
        let oriented: Vec<f64> = costs
            .iter()
            .zip(&self.flipped)
            .map(|(&c, &f)| if f { -c } else { c })
            .collect();
        let mut row = vec![0.0; w];
        row[..self.ncols].copy_from_slice(&oriented);
        for i in 0..self.m {
            let cb = oriented[self.basis[i]];
            if cb != 0.0 {
                let src = &self.a[i * w..(i + 1) * w];
                for (x, y) in row.iter_mut().zip(src) {
                    *x -= cb * y;
                }
            }
        }
        for i in 0..self.m {
            row[self.basis[i]] = 0.0;
        }
        let start = (self.m + obj) * w;
        self.a[start..start + w].copy_from_slice(&row);
    }

    fn column_values(&self) -> Vec<f64> {
        let mut y = vec![0.0; self.ncols];
        for i in 0..self.m {
            y[self.basis[i]] = self.rhs(i);
        }
        for (j, v) in y.iter_mut().enumerate() {
            if self.flipped[j] {
                *v = self.upper[j] - *v;
            }
        }
        y
    }
}

fn solve_impl(problem: &LpProblem, secondary: Option<&[f64]>) -> Result<LpSolution, LpError> {
    problem.validate()?;
    let n = problem.num_vars();

    for &(l, u) in &problem.variable_bounds {
        if l > u && !(is_inf(l) && is_inf(u) && l.signum() == u.signum()) {
            return Ok(LpSolution::without_point(LpStatus::Infeasible, 0));
        }
        if (is_inf(l) && l > 0.0) || (is_inf(u) && u < 0.0) {
            return Ok(LpSolution::without_point(LpStatus::Infeasible, 0));
        }
    }

    // Map original variables to nonnegative columns.
    let mut maps = Vec::with_capacity(n);
    let mut col_upper: Vec<f64> = Vec::new();
    for &(l, u) in &problem.variable_bounds {
        if !is_inf(l) {
            let col = col_upper.len();
            col_upper.push(if is_inf(u) { INF } else { u - l });
            maps.push(VarMap::Shift { col, lo: l });
        } else if !is_inf(u) {
            let col = col_upper.len();
            col_upper.push(INF);
            maps.push(VarMap::Mirror { col, hi: u });
        } else {
            let pos = col_upper.len();
            col_upper.push(INF);
            col_upper.push(INF);
            maps.push(VarMap::Split { pos, neg: pos + 1 });
        }
    }
    let n_struct = col_upper.len();

    let transform_row = |row: &[f64], rhs: f64| -> (Vec<f64>, f64) {
        let mut out = vec![0.0; n_struct];
        let mut b = rhs;
        for (j, &a) in row.iter().enumerate() {
            if a == 0.0 {
                continue;
            }
            match maps[j] {
                VarMap::Shift { col, lo } => {
                    out[col] = a;
                    b -= a * lo;
                }
                VarMap::Mirror { col, hi } => {
                    out[col] = -a;
                    b -= a * hi;
                }
                VarMap::Split { pos, neg } => {
                    out[pos] = a;
                    out[neg] = -a;
                }
            }
        }
        (out, b)
    };

    let mut costs = vec![0.0; n_struct];
    let mut secondary_costs = secondary.map(|_| vec![0.0; n_struct]);
    for (j, map) in maps.iter().enumerate() {
        let c = problem.objective[j];
        let c2 = secondary.map_or(0.0, |s| s[j]);
        match *map {
            VarMap::Shift { col, .. } => {
                costs[col] = c;
                if let Some(s) = secondary_costs.as_mut() {
                    s[col] = c2;
                }
            }
            VarMap::Mirror { col, .. } => {
                costs[col] = -c;
                if let Some(s) = secondary_costs.as_mut() {
                    s[col] = -c2;
                }
            }
            VarMap::Split { pos, neg } => {
                costs[pos] = c;
                costs[neg] = -c;
                if let Some(s) = secondary_costs.as_mut() {
                    s[pos] = c2;
                    s[neg] = -c2;
                }
            }
        }
    }

    // Gather rows in y-space: (coefficients, rhs, is_inequality).
    let m_le = problem.inequality_lhs.rows();
    let m_eq = problem.equality_lhs.rows();
    let m = m_le + m_eq;
    let mut rows: Vec<(Vec<f64>, f64, bool)> = Vec::with_capacity(m);
    for i in 0..m_le {
        let (r, b) = transform_row(problem.inequality_lhs.row(i), problem.inequality_rhs[i]);
        rows.push((r, b, true));
    }
    for i in 0..m_eq {
        let (r, b) = transform_row(problem.equality_lhs.row(i), problem.equality_rhs[i]);
        rows.push((r, b, false));
    }

    let needs_artificial: Vec<bool> = rows.iter().map(|(_, b, ineq)| !*ineq || *b < 0.0).collect();
    let n_art = needs_artificial.iter().filter(|&&x| x).count();
    let ncols = n_struct + m_le + n_art;
    let n_obj = if secondary.is_some() { 3 } else { 2 };
    let width = ncols + 1;
    let mut a = vec![0.0; (m + n_obj) * width];
    let mut basis = vec![0usize; m];
    let mut upper = col_upper.clone();
    upper.extend(std::iter::repeat(INF).take(m_le + n_art));
    let mut artificial = vec![false; ncols];
    let mut next_art = n_struct + m_le;
    let mut b_scale: f64 = 1.0;
    for (i, (coeffs, b, ineq)) in rows.iter().enumerate() {
        let row = &mut a[i * width..(i + 1) * width];
        let sign = if *b < 0.0 { -1.0 } else { 1.0 };
        for (dst, &c) in row.iter_mut().zip(coeffs.iter()) {
            *dst = sign * c;
        }
        if *ineq {
            row[n_struct + i] = sign;
        }
        row[width - 1] = sign * b;
        b_scale = b_scale.max(b.abs());
        if needs_artificial[i] {
            row[next_art] = 1.0;
            artificial[next_art] = true;
            basis[i] = next_art;
            next_art += 1;
        } else {
            basis[i] = n_struct + i;
        }
    }
    let mut in_basis = vec![false; ncols];
    for &b in &basis {
        in_basis[b] = true;
    }

    let mut t = Tableau {
        m,
        width,
        ncols,
        a,
        basis,
        in_basis,
        upper,
        flipped: vec![false; ncols],
        artificial,
        iterations: 0,
        max_iterations: 50_000 + 50 * (m + ncols),
    };

    // Phase 1: minimize the sum of artificials (objective row 0).
    if n_art > 0 {
        let phase1: Vec<f64> = (0..ncols).map(|j| if t.artificial[j] { 1.0 } else { 0.0 }).collect();
        t.install_objective(0, &phase1);
        t.optimize(0, None)?;
        let residual: f64 = (0..m)
            .filter(|&i| t.artificial[t.basis[i]])
            .map(|i| t.rhs(i).max(0.0))
            .sum();
        if residual > FEAS_TOL * b_scale {
            let mut sol = LpSolution::without_point(LpStatus::Infeasible, t.iterations);
            sol.infeasibility = Some(residual);
            return Ok(sol);
        }
        // Artificials are pinned to zero for the rest of the solve.
        for j in 0..ncols {
            if t.artificial[j] {
                t.upper[j] = 0.0;
            }
        }
    }

    // Phase 2.
    let mut full_costs = costs.clone();
    full_costs.resize(ncols, 0.0);
    t.install_objective(1, &full_costs);
    if let Step::Unbounded = t.optimize(1, None)? {
        return Ok(LpSolution::without_point(LpStatus::Unbounded, t.iterations));
    }
    if let Some(sec) = secondary_costs {
        let mut full = sec;
        full.resize(ncols, 0.0);
        t.install_objective(2, &full);
        // The secondary objective is bounded on the optimal face whenever the
        // caller supplies one bounded below there; an unbounded ray keeps the
        // primary optimum, so the current point is still a valid answer.
        let _ = t.optimize(2, Some(1))?;
    }

    let y = t.column_values();
    let x: Vec<f64> = maps
        .iter()
        .map(|map| match *map {
            VarMap::Shift { col, lo } => lo + y[col],
            VarMap::Mirror { col, hi } => hi - y[col],
            VarMap::Split { pos, neg } => y[pos] - y[neg],
        })
        .collect();
    let objective_value = problem.objective_at(&x);
    Ok(LpSolution {
        status: LpStatus::Optimal,
        primal: Some(x),
        objective_value: Some(objective_value),
        infeasibility: None,
        iterations: t.iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn corner_forced_by_bounds() {
        let mut p = LpProblem::new(vec![1.0, 1.0]);
        p.set_bounds(0, 1.0, INF);
        p.set_bounds(1, 2.0, f64::INFINITY);
        let s = solve_lp(&p).unwrap();
        assert_eq!(s.status, LpStatus::Optimal);
        let x = s.primal.unwrap();
        assert!((x[0] - 1.0).abs() < 1e-12 && (x[1] - 2.0).abs() < 1e-12);
        assert!((s.objective_value.unwrap() - 3.0).abs() < 1e-12);
    }

    #[test]
    fn contradictory_rows_are_infeasible() {
        let mut p = LpProblem::new(vec![1.0]);
        p.set_bounds(0, -INF, INF);
        p.add_le(&[1.0], 0.0);
        p.add_ge(&[1.0], 1.0);
        let s = solve_lp(&p).unwrap();
        assert_eq!(s.status, LpStatus::Infeasible);
        assert!(s.infeasibility.unwrap() > 0.0);
        assert!(s.primal.is_none());
    }

    #[test]
    fn contradictory_bounds_are_infeasible() {
        let mut p = LpProblem::new(vec![1.0]);
        p.set_bounds(0, 1.0, 0.0);
        assert_eq!(solve_lp(&p).unwrap().status, LpStatus::Infeasible);
    }

    #[test]
    fn decreasing_cost_without_upper_bound_is_unbounded() {
        let p = LpProblem::new(vec![-1.0]);
        let s = solve_lp(&p).unwrap();
        assert_eq!(s.status, LpStatus::Unbounded);
        assert!(s.objective_value.is_none());
    }

    #[test]
    fn dimension_mismatch_is_malformed() {
        let mut p = LpProblem::new(vec![1.0, 2.0]);
        p.inequality_rhs.push(1.0);
        assert!(matches!(solve_lp(&p), Err(LpError::MalformedProblem(_))));
        let p = LpProblem::new(vec![1.0]);
        assert!(matches!(
            solve_lp_lexicographic(&p, &[1.0, 2.0]),
            Err(LpError::MalformedProblem(_))
        ));
    }

    #[test]
    fn equality_and_free_variables() {
        // On x + y = 3 the cost is 3 + y, so y drops until x - y <= 1 binds.
        let mut p = LpProblem::new(vec![1.0, 2.0]);
        p.set_bounds(0, -INF, INF);
        p.set_bounds(1, -INF, INF);
        p.add_eq(&[1.0, 1.0], 3.0);
        p.add_le(&[1.0, -1.0], 1.0);
        let s = solve_lp(&p).unwrap();
        let x = s.primal.unwrap();
        assert!((x[0] - 2.0).abs() < 1e-9 && (x[1] - 1.0).abs() < 1e-9, "{x:?}");
    }

    #[test]
    fn upper_bounds_are_respected() {
        // max x + y with x <= 2, y <= 3 (bounds only), x + y <= 4.
        let mut p = LpProblem::new(vec![-1.0, -1.5]);
        p.set_bounds(0, 0.0, 2.0);
        p.set_bounds(1, 0.0, 3.0);
        p.add_le(&[1.0, 1.0], 4.0);
        let s = solve_lp(&p).unwrap();
        let x = s.primal.unwrap();
        assert!((x[0] - 1.0).abs() < 1e-9 && (x[1] - 3.0).abs() < 1e-9, "{x:?}");
        assert!(p.max_violation(&x) < 1e-9);
    }

    #[test]
    fn lexicographic_breaks_ties_on_the_optimal_face() {
        // Primary: min x + y subject to x + y >= 1 (a whole face is optimal).
        // Secondary: min -x  -> prefer x = 1, y = 0.
        let mut p = LpProblem::new(vec![1.0, 1.0]);
        p.add_ge(&[1.0, 1.0], 1.0);
        let s = solve_lp_lexicographic(&p, &[-1.0, 0.0]).unwrap();
        let x = s.primal.unwrap();
        assert!((x[0] - 1.0).abs() < 1e-9 && x[1].abs() < 1e-9, "{x:?}");
        assert!((s.objective_value.unwrap() - 1.0).abs() < 1e-9);
        let s = solve_lp_lexicographic(&p, &[0.0, -1.0]).unwrap();
        let x = s.primal.unwrap();
        assert!(x[0].abs() < 1e-9 && (x[1] - 1.0).abs() < 1e-9, "{x:?}");
    }

    #[test]
    fn text_dump_lists_rows_and_bounds() {
        let mut p = LpProblem::new(vec![1.0, -1.0]);
        p.add_le(&[1.0, 1.0], 2.0);
        p.add_eq(&[1.0, -1.0], 0.0);
        p.set_bounds(1, -INF, 5.0);
        let txt = p.to_text();
        assert!(txt.contains("vars 2"));
        assert!(txt.contains("le 1e0 1e0 <= 2e0"));
        assert!(txt.contains("bound 1 -inf 5e0"));
    }

    #[test]
    fn identical_inputs_give_identical_results() {
        let mut p = LpProblem::new(vec![-3.0, -2.0, -4.0]);
        p.add_le(&[1.0, 1.0, 2.0], 4.0);
        p.add_le(&[2.0, 0.0, 3.0], 5.0);
        p.add_le(&[2.0, 1.0, 3.0], 7.0);
        let a = solve_lp(&p).unwrap();
        let b = solve_lp(&p).unwrap();
        assert_eq!(a.objective_value.unwrap().to_bits(), b.objective_value.unwrap().to_bits());
        assert_eq!(a.primal, b.primal);
    }
}
