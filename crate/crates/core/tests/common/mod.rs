//! Shared generators and oracles for integration tests.
#![allow(dead_code)]

use l2f::dynamics::VehicleState;
use l2f::stl::{BoxRegion, Polarity, Predicate, StlFormula};
use l2f::trajectory::Trajectory;
use nalgebra::Vector3;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub const DT: f64 = 0.1;

pub fn random_box(rng: &mut ChaCha8Rng, name: &str) -> BoxRegion {
    let c = Vector3::from_fn(|_, _| rng.gen_range(-1.0..1.0));
    let h = Vector3::from_fn(|_, _| rng.gen_range(0.2..1.0));
    let pol = if rng.gen_bool(0.5) { Polarity::Goal } else { Polarity::Unsafe };
    BoxRegion::new(name, c, h, pol)
}

/// Random single-vehicle formula with at most `depth` operator levels.
pub fn random_formula(rng: &mut ChaCha8Rng, depth: usize) -> StlFormula {
    if depth == 0 || rng.gen_bool(0.25) {
        let b = random_box(rng, "r");
        return StlFormula::in_box(0, b);
    }
    match rng.gen_range(0..5) {
        0 => StlFormula::not(random_formula(rng, depth - 1)),
        1 => StlFormula::And((0..rng.gen_range(2..4)).map(|_| random_formula(rng, depth - 1)).collect()),
        2 => StlFormula::Or((0..rng.gen_range(2..4)).map(|_| random_formula(rng, depth - 1)).collect()),
        k => {
            let a = rng.gen_range(0..4) as f64 * DT;
            let b = a + rng.gen_range(0..6) as f64 * DT;
            let inner = random_formula(rng, depth - 1);
            if k == 3 {
                StlFormula::always(a, b, inner)
            } else {
                StlFormula::eventually(a, b, inner)
            }
        }
    }
}

/// Smooth-ish random walk in roughly [-1.5, 1.5]^3.
pub fn random_trajectory(rng: &mut ChaCha8Rng, len: usize) -> Trajectory {
    let mut p = Vector3::from_fn(|_, _| rng.gen_range(-1.0..1.0));
    let mut v = Vector3::from_fn(|_, _| rng.gen_range(-0.1..0.1));
    let mut states = Vec::with_capacity(len);
    for _ in 0..len {
        states.push(VehicleState::at_rest(p));
        v += Vector3::from_fn(|_, _| rng.gen_range(-0.05..0.05));
        v = v.map(|c: f64| c.clamp(-0.15, 0.15));
        p += v;
        p = p.map(|c: f64| c.clamp(-1.5, 1.5));
    }
    Trajectory::new(states, DT)
}

pub fn signals_of(t: &Trajectory) -> Vec<Vec<Vector3<f64>>> {
    vec![t.positions()]
}

/// True when every predicate's value is at least `gap` away from the kinks
/// of its inf-norm expression along the whole signal.
pub fn away_from_kinks(f: &StlFormula, signals: &[Vec<Vector3<f64>>], gap: f64) -> bool {
    match f {
        StlFormula::Pred(Predicate::InBox { vehicle, region }) => signals[*vehicle].iter().all(|p| {
            let mut vals: Vec<f64> = (0..3).map(|i| region.half_widths[i] - (p[i] - region.center[i]).abs()).collect();
            let offs_ok = (0..3).all(|i| (p[i] - region.center[i]).abs() > gap);
            vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
            offs_ok && vals[1] - vals[0] > gap
        }),
        StlFormula::Pred(Predicate::Separation { a, b, .. }) => signals[*a].iter().zip(&signals[*b]).all(|(p, q)| {
            let z = p - q;
            let mut vals: Vec<f64> = z.iter().map(|c| c.abs()).collect();
            vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
            vals[2] - vals[1] > gap && vals[2] > gap
        }),
        StlFormula::Not(g) | StlFormula::Always(_, _, g) | StlFormula::Eventually(_, _, g) => away_from_kinks(g, signals, gap),
        StlFormula::And(gs) | StlFormula::Or(gs) => gs.iter().all(|g| away_from_kinks(g, signals, gap)),
    }
}

/// Small two-vehicle scenarios with `steps` steps that usually start apart
/// and close in, with random tube radii around the separation.
pub fn mini_scenario(rng: &mut ChaCha8Rng, steps: usize, seed: u64) -> l2f::trajectory::ConflictScenario {
    use l2f::dynamics::LinearModel;
    use l2f::stl::RobustnessTube;
    let m = LinearModel::default();
    let delta = 0.1;
    let pa = Vector3::from_fn(|_, _| rng.gen_range(-0.05..0.05));
    let gap = Vector3::new(rng.gen_range(0.08..0.25), rng.gen_range(-0.08..0.08), rng.gen_range(-0.08..0.08));
    let pb = pa + gap;
    let va = Vector3::new(rng.gen_range(0.0..0.4), rng.gen_range(-0.2..0.2), rng.gen_range(-0.2..0.2));
    let vb = Vector3::new(-rng.gen_range(0.0..0.4), rng.gen_range(-0.2..0.2), rng.gen_range(-0.2..0.2));
    let mut controls = |_| -> Vec<Vector3<f64>> {
        (0..steps).map(|_| Vector3::from_fn(|_, _| rng.gen_range(-1.0..1.0))).collect()
    };
    let ua = controls(0);
    let ub = controls(1);
    let a = m.rollout_unchecked(&VehicleState::new(pa, va), &ua);
    let b = m.rollout_unchecked(&VehicleState::new(pb, vb), &ub);
    let rho = rng.gen_range(0.005..0.12);
    l2f::trajectory::ConflictScenario {
        tube_a: RobustnessTube::new(a.positions(), rho),
        tube_b: RobustnessTube::new(b.positions(), rho),
        traj_a: a,
        traj_b: b,
        delta,
        seed,
    }
}

/// Best objective over every side sequence, each solved as one joint
/// full-state program for both vehicles. None when no sequence is feasible.
pub fn enumerate_milp(s: &l2f::trajectory::ConflictScenario, m: &l2f::dynamics::LinearModel) -> Option<f64> {
    use l2f::lp::{solve_lp, LpProblem, LpStatus};
    use nalgebra::{Matrix6, Vector6};

    const SIDE: f64 = 1e-6;
    const TUBE: f64 = 1e-7;
    const CONTROL: f64 = 0.01;
    let n = s.traj_a.len() - 1;
    let trajs = [&s.traj_a, &s.traj_b];
    let tubes = [&s.tube_a, &s.tube_b];
    // plan controls straight from the velocity increments
    let plan_u: Vec<Vec<Vector3<f64>>> = trajs
        .iter()
        .map(|t| (0..n).map(|i| (t.states[i + 1].velocity - t.states[i].velocity) / m.dt).collect())
        .collect();
    // powers of the state matrix
    let mut pow = vec![Matrix6::<f64>::identity()];
    for k in 1..=n {
        pow.push(m.a * pow[k - 1]);
    }
    // variables: u[v][i][axis] at v*3n + 3i + axis, then t (position
    // deviation bounds) and w (control deviation bounds), same layout
    let nu = 6 * n;
    let nv = 3 * nu;
    let u_idx = |v: usize, i: usize, ax: usize| v * 3 * n + 3 * i + ax;
    // state of vehicle v at step k as (constant, coefficients)
    let state = |v: usize, k: usize| -> (Vector6<f64>, Vec<(usize, Vector6<f64>)>) {
        let x0 = trajs[v].states[0].to_vector();
        let c = pow[k] * x0;
        let mut terms = Vec::new();
        for i in 0..k {
            let g = pow[k - 1 - i] * m.b;
            for ax in 0..3 {
                terms.push((u_idx(v, i, ax), g.column(ax).into_owned()));
            }
        }
        (c, terms)
    };

    let mut base = LpProblem::new((0..nv).map(|j| if j < nu { 0.0 } else if j < 2 * nu { 1.0 } else { CONTROL }).collect());
    for j in 0..nu {
        base.set_bounds(j, -m.a_max, m.a_max);
        base.set_bounds(nu + j, 0.0, f64::INFINITY);
        base.set_bounds(2 * nu + j, 0.0, f64::INFINITY);
    }
    let row_of = |terms: &[(usize, Vector6<f64>)], comp: usize, scale: f64| -> Vec<f64> {
        let mut r = vec![0.0; nv];
        for (j, g) in terms {
            r[*j] += scale * g[comp];
        }
        r
    };
    for v in 0..2 {
        for i in 0..n {
            for ax in 0..3 {
                let (uj, wj) = (u_idx(v, i, ax), 2 * nu + u_idx(v, i, ax));
                let mut r = vec![0.0; nv];
                r[uj] = 1.0;
                r[wj] = -1.0;
                base.add_le(&r, plan_u[v][i][ax]);
                r[uj] = -1.0;
                base.add_le(&r, -plan_u[v][i][ax]);
            }
        }
        for k in 1..=n {
            let (c, terms) = state(v, k);
            for ax in 0..3 {
                let p_plan = trajs[v].states[k].position[ax];
                let tj = nu + u_idx(v, k - 1, ax);
                for sgn in [1.0, -1.0] {
                    // sgn·(p' − p) ≤ t
                    let mut r = row_of(&terms, ax, sgn);
                    r[tj] = -1.0;
                    base.add_le(&r, sgn * (p_plan - c[ax]));
                    // tube
                    let r = row_of(&terms, ax, sgn);
                    let centre = tubes[v].centerline[k][ax];
                    base.add_le(&r, (tubes[v].radius - TUBE) + sgn * (centre - c[ax]));
                    // speed
                    let r = row_of(&terms, ax + 3, sgn);
                    base.add_le(&r, m.v_max - sgn * c[ax + 3]);
                }
            }
        }
    }

    let z0 = s.traj_a.states[0].position - s.traj_b.states[0].position;
    let holds0 = |d: u8| {
        let (ax, sg) = (((d - 1) / 2) as usize, if d % 2 == 1 { 1.0 } else { -1.0 });
        sg * z0[ax] >= s.delta + SIDE
    };
    let mut best: Option<f64> = None;
    let total = 6usize.pow(n as u32 + 1);
    for code in 0..total {
        let seq: Vec<u8> = (0..=n).map(|k| (code / 6usize.pow(k as u32) % 6) as u8 + 1).collect();
        if !holds0(seq[0]) {
            continue;
        }
        let mut lp = base.clone();
        for k in 1..=n {
            let d = seq[k];
            let (ax, sg) = (((d - 1) / 2) as usize, if d % 2 == 1 { 1.0 } else { -1.0 });
            let (ca, ta) = state(0, k);
            let (cb, tb) = state(1, k);
            // sg·(p'_a − p'_b) ≥ δ + margin
            let mut r = row_of(&ta, ax, -sg);
            for (j, g) in &tb {
                r[*j] += sg * g[ax];
            }
            lp.add_le(&r, sg * (ca[ax] - cb[ax]) - s.delta - SIDE);
        }
        let sol = solve_lp(&lp).expect("well formed");
        if sol.status == LpStatus::Optimal {
            let v = sol.objective_value.unwrap();
            best = Some(best.map_or(v, |b: f64| b.min(v)));
        }
    }
    best
}

/// Push the critical sample just past the tube, ρ + `excess` in inf-norm,
/// trying every axis-aligned and diagonal direction, and report whether any
/// of them makes the formula fail.
pub fn beyond_tube_flips(f: &StlFormula, t: &Trajectory, rho: f64, step: usize, excess: f64) -> bool {
    let r = rho + excess;
    (0..27).filter(|&c| c != 13).any(|c| {
        let d = Vector3::new((c % 3) as f64 - 1.0, (c / 3 % 3) as f64 - 1.0, (c / 9) as f64 - 1.0);
        let mut p = t.clone();
        p.states[step].position += d * r;
        l2f::stl::robustness(f, &p).unwrap() < 0.0
    })
}
