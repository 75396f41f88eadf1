//! Time integration of the semi-discrete system y' = A·y + b(t).
//!
//! The biharmonic term makes the system stiff (spectral radius grows like
//! dx⁻⁴), so the default method is the implicit trapezoidal rule
//!
//!   (I − dt/2·A)·y⁺ = (I + dt/2·A)·y + dt/2·(b(t) + b(t+dt)),
//!
//! which is A-stable and nearly energy-neutral on the undamped problem. The
//! 2N×2N solve is reduced exactly to an N×N banded solve by block
//! elimination: with c = dt/2 and A = [[0, I], [−S, G]], G = −k0·I + k1·L,
//! eliminating w⁺ = (w + c·v) + c·v⁺ leaves
//!
//!   [(1 + c·k0)·I − c·k1·L + c²·S]·v⁺ = v + c·G·v − c·S·(2w + c·v) + c·(b_v(t) + b_v(t+dt)).
//!
//! Step control uses step doubling: one full step against two half steps,
//! accepted when the weighted difference passes the tolerance test, with the
//! two-half-step result propagated unmodified. Step sizes live on a dyadic
//! ladder dt = max_step / 2^k so that each distinct dt is factored once and
//! cached. An explicit RK4 path serves as a cross-check on unstiff cases.
//! Output samples are produced by cubic Hermite interpolation from step
//! endpoints and their slopes.

use std::collections::HashMap;

use serde::Serialize;
use thiserror::Error;

use crate::band::{BandedLu, BandedMatrix, BandError};
use crate::mesh::GridSpec;
use crate::operator::SemiDiscreteSystem;

#[derive(Debug, Error)]
pub enum IntegratorError {
    #[error("time grid must satisfy tf > t0 and ns ≥ 2, got t0 = {t0}, tf = {tf}, ns = {ns}")]
    InvalidTimeGrid { t0: f64, tf: f64, ns: usize },
    #[error("tolerances and step limits must be positive, got {what} = {value}")]
    InvalidConfig { what: &'static str, value: f64 },
    #[error("step size must be positive and finite, got {0}")]
    NonPositiveStep(f64),
    #[error("initial state has length {got}, expected {expected}")]
    BadInitialState { got: usize, expected: usize },
    #[error("initial data non-finite at node ({i}, {j})")]
    NonFiniteInitial { i: isize, j: isize },
    #[error("step size underflow at t = {t}: error control cannot meet the tolerances")]
    StepUnderflow { t: f64 },
    #[error("state became non-finite at t = {t}")]
    NonFiniteState { t: f64 },
    #[error("trapezoidal factor is singular at dt = {dt}; retry with a perturbed step")]
    SingularFactor { dt: f64 },
}

/// Uniform output sampling of the integration window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TimeGrid {
    pub t0: f64,
    pub tf: f64,
    pub ns: usize,
}

impl TimeGrid {
    pub fn new(t0: f64, tf: f64, ns: usize) -> Result<Self, IntegratorError> {
        if !(tf > t0) || ns < 2 || !t0.is_finite() || !tf.is_finite() {
            return Err(IntegratorError::InvalidTimeGrid { t0, tf, ns });
        }
        Ok(Self { t0, tf, ns })
    }

    /// The k-th output time, k ∈ [0, ns).
    pub fn time(&self, k: usize) -> f64 {
        self.t0 + k as f64 * (self.tf - self.t0) / (self.ns - 1) as f64
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.ns).map(|k| self.time(k)).collect()
    }

    /// Spacing between output samples.
    pub fn dt_out(&self) -> f64 {
        (self.tf - self.t0) / (self.ns - 1) as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Method {
    #[serde(rename = "trapezoid")]
    ImplicitTrapezoid,
    #[serde(rename = "rk4")]
    ExplicitRk4,
}

impl Method {
    /// Classical order of the method.
    fn order(self) -> i32 {
        match self {
            Method::ImplicitTrapezoid => 2,
            Method::ExplicitRk4 => 4,
        }
    }

    /// Step-doubling error divisor 2^p − 1.
    fn error_divisor(self) -> f64 {
        match self {
            Method::ImplicitTrapezoid => 3.0,
            Method::ExplicitRk4 => 15.0,
        }
    }

    /// Accepted-error level below which the step may double: doubling dt
    /// scales the local error by about 2^(p+1), kept with a 2× margin.
    fn step_up_threshold(self) -> f64 {
        0.5 / f64::powi(2.0, self.order() + 1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IntegratorConfig {
    pub method: Method,
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// Largest internal step; defaults to the output spacing.
    pub max_step: Option<f64>,
    /// First attempted step; defaults to max_step / 64.
    pub initial_step: Option<f64>,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            method: Method::ImplicitTrapezoid,
            rel_tol: 1e-6,
            abs_tol: 1e-9,
            max_step: None,
            initial_step: None,
        }
    }
}

impl IntegratorConfig {
    pub fn validate(&self) -> Result<(), IntegratorError> {
        if !(self.rel_tol > 0.0) {
            return Err(IntegratorError::InvalidConfig { what: "rel_tol", value: self.rel_tol });
        }
        if !(self.abs_tol > 0.0) {
            return Err(IntegratorError::InvalidConfig { what: "abs_tol", value: self.abs_tol });
        }
        for (name, v) in [("max_step", self.max_step), ("initial_step", self.initial_step)] {
            if let Some(v) = v {
                if !(v > 0.0 && v.is_finite()) {
                    return Err(IntegratorError::InvalidConfig { what: name, value: v });
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct SolverStats {
    pub steps: usize,
    pub rejections: usize,
    pub linear_solves: usize,
    pub factorizations: usize,
}

/// Integration result: states at exactly the requested output times.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub stats: SolverStats,
}

/// Sample initial displacement and velocity functions at the unknown nodes.
/// Clamped nodes are excluded by construction (their value is zero).
pub fn initial_state(
    grid: &GridSpec,
    winit: impl Fn(f64, f64) -> f64,
    vinit: impl Fn(f64, f64) -> f64,
) -> Result<Vec<f64>, IntegratorError> {
    let n = grid.n_unknowns();
    let mut y = vec![0.0; 2 * n];
    for (k, (i, j)) in grid.unknowns().enumerate() {
        let (x, yy) = (grid.x(i), grid.y(j));
        let w = winit(x, yy);
        let v = vinit(x, yy);
        if !w.is_finite() || !v.is_finite() {
            return Err(IntegratorError::NonFiniteInitial { i, j });
        }
        y[k] = w;
        y[n + k] = v;
    }
    Ok(y)
}

/// The affine part b(t), classified once so the zero and static cases skip
/// per-step evaluation.
enum AffinePart {
    Zero,
    Static(Vec<f64>),
    Dynamic,
}

impl AffinePart {
    fn classify(sys: &SemiDiscreteSystem, t0: f64) -> Self {
        if sys.b_is_static() {
            let b = sys.b(t0);
            if b.iter().all(|v| *v == 0.0) {
                AffinePart::Zero
            } else {
                AffinePart::Static(b)
            }
        } else {
            AffinePart::Dynamic
        }
    }
}

/// One-step engines sharing the factorization cache and statistics.
struct Stepper<'a> {
    sys: &'a SemiDiscreteSystem,
    affine: AffinePart,
    cache: HashMap<u64, BandedLu>,
    stats: SolverStats,
}

impl<'a> Stepper<'a> {
    fn new(sys: &'a SemiDiscreteSystem, t0: f64) -> Self {
        Self {
            sys,
            affine: AffinePart::classify(sys, t0),
            cache: HashMap::new(),
            stats: SolverStats::default(),
        }
    }

    /// Add scale·b_v(t) (the lower block of b) into out.
    fn add_b_lower(&self, t: f64, scale: f64, out: &mut [f64]) {
        let n = self.sys.n_unknowns();
        match &self.affine {
            AffinePart::Zero => {}
            AffinePart::Static(b) => {
                for (o, bv) in out.iter_mut().zip(&b[n..]) {
                    *o += scale * bv;
                }
            }
            AffinePart::Dynamic => {
                let b = self.sys.b(t);
                for (o, bv) in out.iter_mut().zip(&b[n..]) {
                    *o += scale * bv;
                }
            }
        }
    }

    /// Full slope f(y, t) = A·y + b(t).
    fn slope(&self, y: &[f64], t: f64) -> Vec<f64> {
        let mut f = self.sys.apply_a(y);
        match &self.affine {
            AffinePart::Zero => {}
            AffinePart::Static(b) => {
                for (o, bv) in f.iter_mut().zip(b) {
                    *o += bv;
                }
            }
            AffinePart::Dynamic => {
                let b = self.sys.b(t);
                for (o, bv) in f.iter_mut().zip(&b) {
                    *o += bv;
                }
            }
        }
        f
    }

    fn factor(&mut self, dt: f64) -> Result<&BandedLu, IntegratorError> {
        let key = dt.to_bits();
        if !self.cache.contains_key(&key) {
            let sys = self.sys;
            let n = sys.n_unknowns();
            let c = 0.5 * dt;
            let p = &sys.params;
            let mut triplets: Vec<(usize, usize, f64)> =
                Vec::with_capacity(n + sys.s_triplets().len() + sys.l_triplets().len());
            for i in 0..n {
                triplets.push((i, i, 1.0 + c * p.k0));
            }
            if p.k1 != 0.0 {
                for &(r, col, v) in sys.l_triplets() {
                    triplets.push((r, col, -c * p.k1 * v));
                }
            }
            for &(r, col, v) in sys.s_triplets() {
                triplets.push((r, col, c * c * v));
            }
            let lu = BandedMatrix::from_triplets(n, &triplets)
                .factor()
                .map_err(|e| match e {
                    BandError::SingularPivot { .. } => IntegratorError::SingularFactor { dt },
                    other => panic!("band assembly bug: {other}"),
                })?;
            self.stats.factorizations += 1;
            self.cache.insert(key, lu);
        }
        Ok(&self.cache[&key])
    }

    /// One trapezoidal step via the block elimination described above.
    fn step_trapezoid(&mut self, y: &[f64], t: f64, dt: f64) -> Result<Vec<f64>, IntegratorError> {
        let sys = self.sys;
        let n = sys.n_unknowns();
        let c = 0.5 * dt;
        let p = sys.params;
        let (w, v) = y.split_at(n);

        // r2 = v + c·(−k0·v + k1·L·v) − c·S·(2w + c·v) + c·(b_v(t) + b_v(t+dt))
        let mut r2 = v.to_vec();
        if p.k0 != 0.0 {
            for (r, vv) in r2.iter_mut().zip(v) {
                *r -= c * p.k0 * vv;
            }
        }
        if p.k1 != 0.0 {
            for &(r, col, lv) in sys.l_triplets() {
                r2[r] += c * p.k1 * lv * v[col];
            }
        }
        let u: Vec<f64> = w.iter().zip(v).map(|(wk, vk)| 2.0 * wk + c * vk).collect();
        for &(r, col, sv) in sys.s_triplets() {
            r2[r] -= c * sv * u[col];
        }
        self.add_b_lower(t, c, &mut r2);
        self.add_b_lower(t + dt, c, &mut r2);

        let lu = self.factor(dt)?;
        let v_new = lu.solve(&r2);
        self.stats.linear_solves += 1;

        let mut out = vec![0.0; 2 * n];
        for k in 0..n {
            out[k] = w[k] + c * (v[k] + v_new[k]);
            out[n + k] = v_new[k];
        }
        Ok(out)
    }

    /// One classical RK4 step.
    fn step_rk4(&mut self, y: &[f64], t: f64, dt: f64) -> Vec<f64> {
        let half = 0.5 * dt;
        let k1 = self.slope(y, t);
        let y2: Vec<f64> = y.iter().zip(&k1).map(|(a, k)| a + half * k).collect();
        let k2 = self.slope(&y2, t + half);
        let y3: Vec<f64> = y.iter().zip(&k2).map(|(a, k)| a + half * k).collect();
        let k3 = self.slope(&y3, t + half);
        let y4: Vec<f64> = y.iter().zip(&k3).map(|(a, k)| a + dt * k).collect();
        let k4 = self.slope(&y4, t + dt);
        y.iter()
            .enumerate()
            .map(|(i, a)| a + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
            .collect()
    }

    fn step(&mut self, method: Method, y: &[f64], t: f64, dt: f64) -> Result<Vec<f64>, IntegratorError> {
        match method {
            Method::ImplicitTrapezoid => self.step_trapezoid(y, t, dt),
            Method::ExplicitRk4 => Ok(self.step_rk4(y, t, dt)),
        }
    }
}

/// Single implicit trapezoidal step with a freshly factored system matrix.
/// `integrate` uses the same elimination with cached factors.
pub fn step_implicit(
    system: &SemiDiscreteSystem,
    y: &[f64],
    t: f64,
    dt: f64,
) -> Result<Vec<f64>, IntegratorError> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(IntegratorError::NonPositiveStep(dt));
    }
    if y.len() != system.dim() {
        return Err(IntegratorError::BadInitialState { got: y.len(), expected: system.dim() });
    }
    let mut stepper = Stepper::new(system, t);
    stepper.step_trapezoid(y, t, dt)
}

/// Weighted max-norm of the step-doubling error estimate; ≤ 1 accepts.
fn error_norm(big: &[f64], half: &[f64], y_old: &[f64], cfg: &IntegratorConfig, div: f64) -> f64 {
    let mut worst = 0.0f64;
    for k in 0..big.len() {
        let e = (half[k] - big[k]).abs() / div;
        let w = cfg.abs_tol + cfg.rel_tol * half[k].abs().max(y_old[k].abs());
        let r = e / w;
        if !r.is_finite() {
            return f64::INFINITY;
        }
        worst = worst.max(r);
    }
    worst
}

/// Cubic Hermite value at parameter θ ∈ [0, 1] on an interval of width dt.
fn hermite(y0: &[f64], f0: &[f64], y1: &[f64], f1: &[f64], dt: f64, theta: f64) -> Vec<f64> {
    let t2 = theta * theta;
    let t3 = t2 * theta;
    let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
    let h10 = t3 - 2.0 * t2 + theta;
    let h01 = -2.0 * t3 + 3.0 * t2;
    let h11 = t3 - t2;
    (0..y0.len())
        .map(|k| h00 * y0[k] + dt * h10 * f0[k] + h01 * y1[k] + dt * h11 * f1[k])
        .collect()
}

/// Integrate from y0 over the time grid, returning states at exactly the
/// requested sample times.
pub fn integrate(
    system: &SemiDiscreteSystem,
    y0: &[f64],
    tgrid: &TimeGrid,
    cfg: &IntegratorConfig,
) -> Result<Trajectory, IntegratorError> {
    cfg.validate()?;
    TimeGrid::new(tgrid.t0, tgrid.tf, tgrid.ns)?;
    if y0.len() != system.dim() {
        return Err(IntegratorError::BadInitialState { got: y0.len(), expected: system.dim() });
    }
    if let Some(k) = y0.iter().position(|v| !v.is_finite()) {
        let _ = k;
        return Err(IntegratorError::NonFiniteState { t: tgrid.t0 });
    }

    let max_step = cfg.max_step.unwrap_or_else(|| tgrid.dt_out());
    let init_step = cfg.initial_step.unwrap_or(max_step / 64.0).min(max_step);
    // Ladder level: dt = max_step / 2^level.
    let mut level: i32 = (max_step / init_step).log2().ceil().max(0.0) as i32;
    const MAX_LEVEL: i32 = 60;

    let div = cfg.method.error_divisor();
    let up_threshold = cfg.method.step_up_threshold();

    let outputs = tgrid.times();
    let mut states: Vec<Vec<f64>> = Vec::with_capacity(tgrid.ns);
    states.push(y0.to_vec());
    let mut out_idx = 1usize;

    let mut stepper = Stepper::new(system, tgrid.t0);
    let mut t = tgrid.t0;
    let mut y = y0.to_vec();
    let t_slack = 1e-12 * (tgrid.tf - tgrid.t0);

    while out_idx < tgrid.ns {
        if level > MAX_LEVEL {
            return Err(IntegratorError::StepUnderflow { t });
        }
        let dt = max_step / f64::powi(2.0, level);

        // Full step and two half steps; a singular factor is treated like a
        // rejected step (the halved dt perturbs it off the bad value).
        let attempt = (|| -> Result<(Vec<f64>, Vec<f64>), IntegratorError> {
            let big = stepper.step(cfg.method, &y, t, dt)?;
            let mid = stepper.step(cfg.method, &y, t, 0.5 * dt)?;
            let half = stepper.step(cfg.method, &mid, t + 0.5 * dt, 0.5 * dt)?;
            Ok((big, half))
        })();
        let (big, half) = match attempt {
            Ok(pair) => pair,
            Err(IntegratorError::SingularFactor { .. }) => {
                stepper.stats.rejections += 1;
                level += 1;
                continue;
            }
            Err(e) => return Err(e),
        };

        let err = error_norm(&big, &half, &y, cfg, div);
        if err > 1.0 {
            stepper.stats.rejections += 1;
            level += 1;
            continue;
        }

        let t_new = t + dt;
        let y_new = half;
        if y_new.iter().any(|v| !v.is_finite()) {
            return Err(IntegratorError::NonFiniteState { t: t_new });
        }
        stepper.stats.steps += 1;

        // Emit every output sample inside (t, t_new].
        if out_idx < tgrid.ns && outputs[out_idx] <= t_new + t_slack {
            let f0 = stepper.slope(&y, t);
            let f1 = stepper.slope(&y_new, t_new);
            while out_idx < tgrid.ns && outputs[out_idx] <= t_new + t_slack {
                let theta = ((outputs[out_idx] - t) / dt).clamp(0.0, 1.0);
                states.push(hermite(&y, &f0, &y_new, &f1, dt, theta));
                out_idx += 1;
            }
        }

        t = t_new;
        y = y_new;
        if err < up_threshold && level > 0 {
            level -= 1;
        }
    }

    Ok(Trajectory { times: outputs, states, stats: stepper.stats })
}
