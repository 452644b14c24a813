//! Picard and Newton iterations with optional nudging and Anderson
//! acceleration, trace recording and reference generation.

use std::fmt::Write as _;
use std::sync::Arc;
use std::time::Instant;

use crate::anderson::{choose_inner_product, AndersonConfig, AndersonHistory};
use crate::cda::{
    apply_direct_enforcement, build_coarse_mass, build_sampling_operator, nudging_contribution, NudgingConfig,
    NudgingMode, ObservationData,
};
use crate::error::{Error, Result};
use crate::fem::assembly::{assemble_linear_blocks, convection_values, newton_values, LinearBlocks};
use crate::fem::bc::{normalize_pressure, ConstrainedSystem, Constraints};
use crate::fem::norms::{gradient_sampler, h1_seminorm, l2_norm, nonlinear_residual};
use crate::fem::space::{MixedSpace, State};
use crate::fem::system::SaddleSystem;
use crate::linsolve::{DirectSolver, Elimination};
use crate::mesh::build_uniform_triangulation;
use crate::metrics::star_from_parts;

pub use crate::linsolve::linear_solve;

pub const DEFAULT_TOL: f64 = 1e-8;
pub const DEFAULT_DIVERGENCE_THRESHOLD: f64 = 1e6;
pub const REFERENCE_TOL: f64 = 1e-11;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Method {
    Picard,
    Newton,
}

impl std::str::FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "picard" => Ok(Self::Picard),
            "newton" => Ok(Self::Newton),
            _ => Err(Error::Parse(format!("unknown method '{s}'"))),
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Picard => "picard",
            Self::Newton => "newton",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolverConfig {
    pub method: Method,
    pub nudging: NudgingConfig,
    pub nu: f64,
    pub lid_speed: f64,
    pub tol: f64,
    pub max_iters: usize,
    pub divergence_threshold: f64,
    pub anderson: Option<AndersonConfig>,
}

impl SolverConfig {
    /// Cavity defaults at Reynolds number `re`: unit lid, no nudging, no
    /// acceleration.
    pub fn new(method: Method, re: f64) -> Self {
        Self {
            method,
            nudging: NudgingConfig::off(),
            nu: 1.0 / re,
            lid_speed: 1.0,
            tol: DEFAULT_TOL,
            max_iters: 200,
            divergence_threshold: DEFAULT_DIVERGENCE_THRESHOLD,
            anderson: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.nu > 0.0 && self.nu.is_finite()) {
            return Err(Error::InvalidArgument(format!("viscosity must be positive, got {}", self.nu)));
        }
        if !(self.tol > 0.0) || !(self.tol < self.divergence_threshold) {
            return Err(Error::InvalidArgument(format!(
                "need 0 < tol < divergence threshold, got tol = {} and threshold = {}",
                self.tol, self.divergence_threshold
            )));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidArgument("max_iters must be at least 1".into()));
        }
        if !self.lid_speed.is_finite() {
            return Err(Error::NonFinite("lid speed"));
        }
        if let Some(aa) = &self.anderson {
            aa.validate()?;
        }
        Ok(())
    }
}

/// A discretized problem: space, Stokes blocks and load vector.
#[derive(Clone, Debug)]
pub struct Problem {
    space: Arc<MixedSpace>,
    blocks: LinearBlocks,
    forcing: Vec<f64>,
}

impl Problem {
    pub fn new(space: Arc<MixedSpace>, nu: f64) -> Result<Self> {
        let blocks = assemble_linear_blocks(&space, nu)?;
        let forcing = vec![0.0; space.velocity_dof_count()];
        Ok(Self { space, blocks, forcing })
    }

    /// Unforced cavity on the uniform `n x n` mesh.
    pub fn cavity(n: usize, nu: f64) -> Result<Self> {
        let mesh = Arc::new(build_uniform_triangulation(n)?);
        Self::new(Arc::new(MixedSpace::new(mesh)), nu)
    }

    /// Replaces the load vector `(f, phi_i)`.
    pub fn with_forcing(mut self, load: Vec<f64>) -> Result<Self> {
        self.space.check_velocity(&load)?;
        self.forcing = load;
        Ok(self)
    }

    pub fn space(&self) -> &Arc<MixedSpace> {
        &self.space
    }

    pub fn blocks(&self) -> &LinearBlocks {
        &self.blocks
    }

    pub fn forcing(&self) -> &[f64] {
        &self.forcing
    }

    pub fn nu(&self) -> f64 {
        self.blocks.nu
    }

    pub fn residual(&self, s: &State, lid_speed: f64) -> Result<f64> {
        nonlinear_residual(&self.space, &self.blocks, s, lid_speed, Some(&self.forcing))
    }
}

/// One linearized solve per call, reusing the system pattern, the
/// constraint elimination and the symbolic factorization.
pub struct Stepper<'a> {
    problem: &'a Problem,
    method: Method,
    system: SaddleSystem,
    base_values: Vec<f64>,
    base_rhs: Vec<f64>,
    constraints: Constraints,
    elimination: Arc<Elimination>,
    solver: DirectSolver,
}

impl<'a> Stepper<'a> {
    pub fn new(problem: &'a Problem, config: &SolverConfig, data: Option<&ObservationData>) -> Result<Self> {
        let space = problem.space();
        let mut constraints = Constraints::dirichlet(space, config.lid_speed);
        let mut penalty = None;
        match (config.nudging.mode, data) {
            (NudgingMode::Off, _) => {}
            (_, None) => return Err(Error::InvalidArgument("nudging requires observation data".into())),
            (NudgingMode::Penalty, Some(d)) => {
                let s = build_sampling_operator(space, d.nodes());
                let m = build_coarse_mass(d.nodes());
                penalty = Some(nudging_contribution(&s, &m, config.nudging.mu, d)?);
            }
            (NudgingMode::Direct, Some(d)) => {
                apply_direct_enforcement(&mut constraints, space, config.lid_speed, d, config.nudging.include_boundary)?;
            }
        }
        let system = SaddleSystem::new(space, config.method == Method::Newton, penalty.as_ref().map(|p| &p.0));
        let mut base_values = system.stokes_values(problem.blocks());
        let mut base_rhs = problem.forcing().to_vec();
        base_rhs.resize(space.system_size(), 0.0);
        if let Some((mat, rhs)) = &penalty {
            system.add_extra(&mut base_values, mat, 1.0);
            for (b, r) in base_rhs.iter_mut().zip(rhs) {
                *b += r;
            }
        }
        let elimination = Arc::new(Elimination::new(system.pattern(), constraints.mask()));
        Ok(Self {
            problem,
            method: config.method,
            system,
            base_values,
            base_rhs,
            constraints,
            elimination,
            solver: DirectSolver::new(),
        })
    }

    pub fn constraints(&self) -> &Constraints {
        &self.constraints
    }

    pub fn method(&self) -> Method {
        self.method
    }

    /// Solves the linearization about `u` and returns the new state with
    /// zero-mean pressure.
    pub fn step(&mut self, u: &State) -> Result<State> {
        let space = self.problem.space();
        space.check_velocity(&u.velocity)?;
        let ns = space.scalar_dof_count();
        let conv = convection_values(space, &u.velocity);
        let mut values = self.base_values.clone();
        let mut rhs = self.base_rhs.clone();
        for c in 0..2 {
            self.system.add_velocity_block(&mut values, c, c, &conv, 1.0);
        }
        if self.method == Method::Newton {
            let extra = newton_values(space, &u.velocity);
            for d in 0..2 {
                for c in 0..2 {
                    self.system.add_velocity_block(&mut values, d, c, &extra[2 * d + c], 1.0);
                }
            }
            // right-hand side gains N(u) u
            let pat = space.scalar_pattern();
            for c in 0..2 {
                let uc = &u.velocity[c * ns..(c + 1) * ns];
                for r in 0..ns {
                    let mut acc = 0.0;
                    for k in pat.row_ptr()[r]..pat.row_ptr()[r + 1] {
                        acc += conv[k] * uc[pat.col_idx()[k]];
                    }
                    rhs[c * ns + r] += acc;
                }
            }
        }
        let cs = ConstrainedSystem::with_elimination(self.elimination.clone(), &values, &rhs, &self.constraints);
        let x = cs.solve(&mut self.solver)?;
        let nv = space.velocity_dof_count();
        let mut pressure = x[nv..].to_vec();
        normalize_pressure(&mut pressure, &self.problem.blocks().mp);
        State::new(space, x[..nv].to_vec(), pressure)
    }
}

/// One Picard (or CDA-Picard) step from `u_k`.
pub fn picard_step(problem: &Problem, u_k: &State, config: &SolverConfig, data: Option<&ObservationData>) -> Result<State> {
    let cfg = SolverConfig {
        method: Method::Picard,
        ..config.clone()
    };
    Stepper::new(problem, &cfg, data)?.step(u_k)
}

/// One Newton (or CDA-Newton) step from `u_k`.
pub fn newton_step(problem: &Problem, u_k: &State, config: &SolverConfig, data: Option<&ObservationData>) -> Result<State> {
    let cfg = SolverConfig {
        method: Method::Newton,
        ..config.clone()
    };
    Stepper::new(problem, &cfg, data)?.step(u_k)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Status {
    Converged,
    MaxIters,
    Diverged,
}

impl std::fmt::Display for Status {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Converged => "converged",
            Self::MaxIters => "max_iters",
            Self::Diverged => "diverged",
        })
    }
}

impl std::str::FromStr for Status {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "converged" => Ok(Self::Converged),
            "max_iters" => Ok(Self::MaxIters),
            "diverged" => Ok(Self::Diverged),
            _ => Err(Error::Parse(format!("unknown status '{s}'"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct IterationRecord {
    pub k: usize,
    pub update_h1: f64,
    pub residual: f64,
    pub err_l2: Option<f64>,
    pub err_h1: Option<f64>,
    pub err_star: Option<f64>,
    pub aa_gain: Option<f64>,
    pub wall_ms: f64,
}

pub const TRACE_HEADER: &str = "k,update_h1,residual,err_l2,err_h1,err_star,aa_gain,wall_ms";

#[derive(Clone, Debug, PartialEq)]
pub struct IterationTrace {
    pub records: Vec<IterationRecord>,
    pub status: Status,
    pub reason: Option<String>,
    /// Penalty parameter accepted below `mu_min`.
    pub mu_below_min: bool,
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| format!("{x:e}"))
}

fn parse_opt(s: &str) -> Result<Option<f64>> {
    if s.is_empty() {
        Ok(None)
    } else {
        s.parse().map(Some).map_err(|e| Error::Parse(format!("bad number '{s}': {e}")))
    }
}

impl IterationTrace {
    pub fn iterations(&self) -> usize {
        self.records.len()
    }

    pub fn converged(&self) -> bool {
        self.status == Status::Converged
    }

    pub fn updates(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.update_h1).collect()
    }

    pub fn residuals(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.residual).collect()
    }

    pub fn errors_h1(&self) -> Option<Vec<f64>> {
        self.records.iter().map(|r| r.err_h1).collect()
    }

    pub fn errors_l2(&self) -> Option<Vec<f64>> {
        self.records.iter().map(|r| r.err_l2).collect()
    }

    pub fn errors_star(&self) -> Option<Vec<f64>> {
        self.records.iter().map(|r| r.err_star).collect()
    }

    pub fn gains(&self) -> Vec<f64> {
        self.records.iter().filter_map(|r| r.aa_gain).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut s = format!("{TRACE_HEADER}\n");
        for r in &self.records {
            writeln!(
                s,
                "{},{:e},{:e},{},{},{},{},{:.3}",
                r.k,
                r.update_h1,
                r.residual,
                fmt_opt(r.err_l2),
                fmt_opt(r.err_h1),
                fmt_opt(r.err_star),
                fmt_opt(r.aa_gain),
                r.wall_ms
            )
            .unwrap();
        }
        s
    }

    /// Parses records written by `to_csv`; status comes from the metadata.
    pub fn records_from_csv(text: &str) -> Result<Vec<IterationRecord>> {
        let mut lines = text.lines();
        match lines.next() {
            Some(h) if h.trim() == TRACE_HEADER => {}
            other => return Err(Error::Parse(format!("unexpected trace header {other:?}"))),
        }
        let mut out = Vec::new();
        for line in lines.filter(|l| !l.trim().is_empty()) {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 8 {
                return Err(Error::Parse(format!("expected 8 columns, got '{line}'")));
            }
            let num = |s: &str| -> Result<f64> { s.parse().map_err(|e| Error::Parse(format!("bad number '{s}': {e}"))) };
            out.push(IterationRecord {
                k: f[0].parse().map_err(|e| Error::Parse(format!("bad k: {e}")))?,
                update_h1: num(f[1])?,
                residual: num(f[2])?,
                err_l2: parse_opt(f[3])?,
                err_h1: parse_opt(f[4])?,
                err_star: parse_opt(f[5])?,
                aa_gain: parse_opt(f[6])?,
                wall_ms: num(f[7])?,
            });
        }
        Ok(out)
    }
}

#[derive(Clone, Debug)]
pub struct SolveResult {
    pub trace: IterationTrace,
    /// Last iterate (the previous one when the final step broke down).
    pub state: State,
}

fn finite(v: &[f64]) -> bool {
    v.iter().all(|x| x.is_finite())
}

/// Runs the configured iteration from `initial` (zero when `None`).
///
/// `reference` enables the error columns; the star norm uses the
/// observation spacing and is only reported when data is present.
pub fn solve_nonlinear(
    problem: &Problem,
    config: &SolverConfig,
    data: Option<&ObservationData>,
    reference: Option<&State>,
    initial: Option<&State>,
) -> Result<SolveResult> {
    solve_nonlinear_observed(problem, config, data, reference, initial, &mut |_, _| {})
}

/// As `solve_nonlinear`, calling `observe(k, u_k)` for every accepted iterate.
pub fn solve_nonlinear_observed(
    problem: &Problem,
    config: &SolverConfig,
    data: Option<&ObservationData>,
    reference: Option<&State>,
    initial: Option<&State>,
    observe: &mut dyn FnMut(usize, &State),
) -> Result<SolveResult> {
    config.validate()?;
    if (problem.nu() - config.nu).abs() > 1e-15 * config.nu {
        return Err(Error::InvalidArgument(format!(
            "problem assembled for nu = {} but config has nu = {}",
            problem.nu(),
            config.nu
        )));
    }
    if config.nudging.mode == NudgingMode::Off && data.is_some() {
        return Err(Error::InvalidArgument("observation data given but nudging is off".into()));
    }
    let space = problem.space().clone();
    let blocks = problem.blocks();
    let mu_below_min = match data {
        Some(d) => config.nudging.validate(config.nu, d.spacing())?,
        None => false,
    };
    if let Some(r) = reference {
        space.check_velocity(&r.velocity)?;
    }
    let mut stepper = Stepper::new(problem, config, data)?;

    let free = space.free_velocity_dofs();
    let mut history = match &config.anderson {
        Some(aa) => {
            let factor = match aa.inner_product {
                crate::anderson::InnerProduct::H1 => {
                    let g = gradient_sampler(&space);
                    let rows: Vec<usize> = (0..g.nrows()).collect();
                    Some(g.restrict(&rows, &free))
                }
                crate::anderson::InnerProduct::Euclidean => None,
            };
            Some(AndersonHistory::new(aa.depth, choose_inner_product(aa.inner_product, factor)?))
        }
        None => None,
    };

    let mut u = match initial {
        Some(s) => {
            space.check_velocity(&s.velocity)?;
            s.clone()
        }
        None => State::zero(&space),
    };
    let star_h = data.map(|d| d.spacing());
    let mut records = Vec::new();
    let mut status = Status::MaxIters;
    let mut reason = None;

    for k in 1..=config.max_iters {
        let t0 = Instant::now();
        let g = match stepper.step(&u) {
            Ok(s) => s,
            Err(e) => {
                status = Status::Diverged;
                reason = Some(format!("linear solve breakdown at iteration {k}: {e}"));
                break;
            }
        };
        let mut gain = None;
        let next = match (&mut history, &config.anderson) {
            (Some(h), Some(aa)) => {
                let x: Vec<f64> = free.iter().map(|&i| u.velocity[i]).collect();
                let gx: Vec<f64> = free.iter().map(|&i| g.velocity[i]).collect();
                let st = h.update(&x, &gx, aa.beta);
                gain = st.gain;
                let mut vel = g.velocity.clone();
                for (&i, v) in free.iter().zip(&st.x_next) {
                    vel[i] = *v;
                }
                State {
                    velocity: vel,
                    pressure: g.pressure,
                }
            }
            _ => g,
        };
        let diff: Vec<f64> = next.velocity.iter().zip(&u.velocity).map(|(a, b)| a - b).collect();
        let update = h1_seminorm(blocks, &diff);
        let size = h1_seminorm(blocks, &next.velocity);
        let ok = finite(&next.velocity) && update.is_finite() && size <= config.divergence_threshold;
        let residual = if ok {
            problem.residual(&next, config.lid_speed)?
        } else {
            f64::NAN
        };
        let (mut err_l2, mut err_h1, mut err_star) = (None, None, None);
        if let Some(r) = reference {
            let e: Vec<f64> = next.velocity.iter().zip(&r.velocity).map(|(a, b)| a - b).collect();
            let (h1, l2) = (h1_seminorm(blocks, &e), l2_norm(blocks, &e));
            err_h1 = Some(h1);
            err_l2 = Some(l2);
            err_star = star_h.map(|h| star_from_parts(h1, l2, h));
        }
        records.push(IterationRecord {
            k,
            update_h1: update,
            residual,
            err_l2,
            err_h1,
            err_star,
            aa_gain: gain,
            wall_ms: t0.elapsed().as_secs_f64() * 1e3,
        });
        if !ok {
            status = Status::Diverged;
            reason = Some(format!("|u_{k}|_H1 = {size:e} exceeds the divergence threshold"));
            break;
        }
        u = next;
        observe(k, &u);
        if update <= config.tol {
            status = Status::Converged;
            break;
        }
    }
    if status == Status::MaxIters {
        reason = Some(format!("no convergence within {} iterations", config.max_iters));
    }
    Ok(SolveResult {
        trace: IterationTrace {
            records,
            status,
            reason,
            mu_below_min,
        },
        state: u,
    })
}

/// Continuation schedule ending at `re`: a single stage up to Re = 400,
/// otherwise stages growing by a factor of at most 1.5 from 400.
pub fn default_schedule(re: f64) -> Vec<f64> {
    let mut out = Vec::new();
    let mut r = 400.0;
    while r < re {
        out.push(r);
        r *= 1.5;
    }
    out.push(re);
    out
}

/// Newton with Reynolds continuation; each stage starts from the previous
/// solution and is converged to `REFERENCE_TOL`.
pub fn reference_solution(space: Arc<MixedSpace>, schedule: &[f64], lid_speed: f64) -> Result<State> {
    if schedule.is_empty() {
        return Err(Error::InvalidArgument("empty continuation schedule".into()));
    }
    let mut prev: Option<State> = None;
    for &re in schedule {
        let problem = Problem::new(space.clone(), 1.0 / re)?;
        let config = SolverConfig {
            tol: REFERENCE_TOL,
            max_iters: 50,
            lid_speed,
            ..SolverConfig::new(Method::Newton, re)
        };
        let res = solve_nonlinear(&problem, &config, None, None, prev.as_ref())?;
        if !res.trace.converged() {
            return Err(Error::Continuation {
                reynolds: re,
                reason: res.trace.reason.unwrap_or_else(|| res.trace.status.to_string()),
            });
        }
        log::info!("reference stage Re = {re}: {} Newton iterations", res.trace.iterations());
        prev = Some(res.state);
    }
    Ok(prev.unwrap())
}
