//! Online stage: backward-Euler integration of the reduced velocity-pressure
//! system with Newton, followed by a linear reduced heat step.

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};

use crate::error::{Result, RomError};
use crate::fv::{Field, Mesh};
use crate::galerkin::{project_snapshots, ReducedOperators};
use crate::lifting::{lift_combination, LiftingFunction};
use crate::pod::dof_weights;
use crate::rbf::RbfInterpolant;

/// Turbulent heat-diffusion closure in the reduced temperature equation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ThermalClosure {
    /// (1/Pr_t) Σ_m l_m N_T[m]
    Tensor,
    /// α_t N with a fixed scalar diffusivity.
    Scalar(f64),
}

#[derive(Clone, Debug)]
pub struct RomOptions {
    pub newton_tol: f64,
    pub max_newton: usize,
    pub closure: ThermalClosure,
}

impl Default for RomOptions {
    fn default() -> Self {
        RomOptions {
            newton_tol: 1e-10,
            max_newton: 50,
            closure: ThermalClosure::Tensor,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReducedState {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub c: Vec<f64>,
    pub l: Vec<f64>,
    pub t: f64,
}

#[derive(Clone, Debug)]
pub struct ReducedTrajectory {
    pub mu: Vec<f64>,
    pub states: Vec<ReducedState>,
    pub step_seconds: Vec<f64>,
    pub wall_seconds: f64,
    /// Largest ‖R ā‖ over all steps.
    pub max_constraint: f64,
    pub extrapolation: bool,
}

impl ReducedTrajectory {
    pub fn times(&self) -> Vec<f64> {
        self.states.iter().map(|s| s.t).collect()
    }

    /// State closest to time `t`.
    pub fn at(&self, t: f64) -> &ReducedState {
        self.states
            .iter()
            .min_by(|x, y| (x.t - t).abs().total_cmp(&(y.t - t).abs()))
            .expect("trajectory is never empty")
    }

    /// One row per state: t, a…, b…, c…, l….
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = Vec::new();
        let s0 = &self.states[0];
        let mut header = vec!["t".to_string()];
        for (p, n) in [("a", s0.a.len()), ("b", s0.b.len()), ("c", s0.c.len()), ("l", s0.l.len())] {
            header.extend((0..n).map(|i| format!("{p}{i}")));
        }
        writeln!(out, "{}", header.join(","))?;
        for s in &self.states {
            let row: Vec<String> = std::iter::once(s.t)
                .chain(s.a.iter().chain(&s.b).chain(&s.c).chain(&s.l).copied())
                .map(|v| format!("{v:.17e}"))
                .collect();
            writeln!(out, "{}", row.join(","))?;
        }
        crate::io::write_atomic(path, &out)
    }
}

/// Error from `solve` with the states computed before the failure.
#[derive(Debug)]
pub struct PartialSolve {
    pub error: RomError,
    pub trajectory: ReducedTrajectory,
}

impl From<PartialSolve> for RomError {
    fn from(p: PartialSolve) -> RomError {
        p.error
    }
}

/// Operators, closure interpolant and the boundary data of one query.
#[derive(Clone, Debug)]
pub struct ReducedModel {
    pub ops: ReducedOperators,
    pub rbf: Option<RbfInterpolant>,
    pub options: RomOptions,
    fixed: StepConstants,
}

/// Operator combinations that do not change between steps.
#[derive(Clone, Debug)]
struct StepConstants {
    /// ν (B + B_T), n̄ × n_u
    viscous: DMatrix<f64>,
    /// Q_T1 + Q_T2 per eddy-viscosity mode
    turbulent: Vec<DMatrix<f64>>,
    /// Q_ijk + Q_jik, same layout as Q
    q_sym: Vec<f64>,
    /// N_T / Pr_t per eddy-viscosity mode
    thermal_turbulent: Vec<DMatrix<f64>>,
}

impl StepConstants {
    fn new(ops: &ReducedOperators) -> StepConstants {
        let v = &ops.velocity;
        let (nbar, nu) = (v.n_trial(), v.n_modes());
        let mut q_sym = vec![0.0; v.q.data.len()];
        for i in 0..nbar {
            for j in 0..nbar {
                let (ij, ji) = ((i * nbar + j) * nu, (j * nbar + i) * nu);
                for k in 0..nu {
                    q_sym[ij + k] = v.q.data[ij + k] + v.q.data[ji + k];
                }
            }
        }
        StepConstants {
            viscous: (&v.b + &v.bt) * ops.nu,
            turbulent: (0..v.n_nut()).map(|m| v.qt1.slab(m) + v.qt2.slab(m)).collect(),
            q_sym,
            thermal_turbulent: (0..v.n_nut()).map(|m| ops.thermal.nt.slab(m) / ops.pr_t).collect(),
        }
    }
}

/// Spatial bases and lifts used to move between full and reduced states.
#[derive(Clone, Debug)]
pub struct Bases {
    /// Homogeneous velocity modes followed by supremizers.
    pub velocity: DMatrix<f64>,
    pub pressure: DMatrix<f64>,
    pub temperature: DMatrix<f64>,
    pub nut: DMatrix<f64>,
    pub velocity_lifts: Vec<LiftingFunction>,
    pub temperature_lifts: Vec<LiftingFunction>,
}

impl ReducedModel {
    pub fn new(ops: ReducedOperators, rbf: Option<RbfInterpolant>, options: RomOptions) -> Result<ReducedModel> {
        ops.check()?;
        if let Some(r) = &rbf {
            if r.n_outputs() != ops.velocity.n_nut() {
                return Err(RomError::dim(format!(
                    "interpolant gives {} coefficients, operators expect {}",
                    r.n_outputs(),
                    ops.velocity.n_nut()
                )));
            }
        }
        let fixed = StepConstants::new(&ops);
        Ok(ReducedModel { ops, rbf, options, fixed })
    }

    fn closure_coefficients(&self, mu: &[f64], t: f64, out: &mut [f64]) {
        match &self.rbf {
            Some(r) => r.evaluate_into(mu, t, out),
            None => out.iter_mut().for_each(|v| *v = 0.0),
        }
    }

    /// One backward-Euler step. `u_d` and `g` are the velocity and
    /// temperature lift amplitudes; `l_next` the closure coefficients at
    /// the new time. Returns the new state and ‖R ā‖.
    pub fn step(&self, state: &ReducedState, u_d: &[f64], g: &[f64], l_next: &[f64], dt: f64) -> Result<(ReducedState, f64)> {
        if !(dt > 0.0) {
            return Err(RomError::config(format!("time step {dt} must be positive")));
        }
        let v = &self.ops.velocity;
        let (nl, nu, np, nbar) = (v.n_lifts, v.n_modes(), v.n_pressure(), v.n_trial());
        if u_d.len() != nl || state.a.len() != nu || state.b.len() != np || l_next.len() != v.n_nut() {
            return Err(RomError::dim("reduced state does not match the operators"));
        }
        let t_next = state.t + dt;

        // linear momentum operator for this step, n̄ × n_u
        let mut lin = self.fixed.viscous.clone();
        for (s, &lm) in self.fixed.turbulent.iter().zip(l_next) {
            if lm != 0.0 {
                lin.zip_apply(s, |x, y| *x += lm * y);
            }
        }

        let n = nu + np;
        let mut abar = vec![0.0; nbar];
        abar[..nl].copy_from_slice(u_d);
        abar[nl..].copy_from_slice(&state.a);
        let mut b = state.b.clone();
        let mut history = Vec::new();
        let mut qa = DMatrix::zeros(nbar, nu);
        let mut converged = false;
        for iter in 0..=self.options.max_newton {
            // qa[i,k] = Σ_j ā_j (Q_ijk + Q_jik)
            qa.fill(0.0);
            for i in 0..nbar {
                for j in 0..nbar {
                    let x_j = abar[j];
                    if x_j == 0.0 {
                        continue;
                    }
                    let row = &self.fixed.q_sym[(i * nbar + j) * nu..][..nu];
                    for k in 0..nu {
                        qa[(i, k)] += x_j * row[k];
                    }
                }
            }
            let mut res = DVector::zeros(n);
            for k in 0..nu {
                let mut r = 0.0;
                for p in 0..nu {
                    r += v.m[(p, k)] * (abar[nl + p] - state.a[p]) / dt;
                }
                for i in 0..nbar {
                    r += abar[i] * (0.5 * qa[(i, k)] - lin[(i, k)]);
                }
                for j in 0..np {
                    r += v.p[(j, k)] * b[j];
                }
                res[k] = dt * r;
            }
            for j in 0..np {
                res[nu + j] = (0..nbar).map(|i| v.r[(j, i)] * abar[i]).sum();
            }
            let rn = res.norm();
            history.push(rn);
            if !rn.is_finite() {
                break;
            }
            if rn < self.options.newton_tol {
                converged = true;
                break;
            }
            if iter == self.options.max_newton {
                break;
            }
            let mut jac = DMatrix::zeros(n, n);
            for k in 0..nu {
                for p in 0..nu {
                    let i = nl + p;
                    jac[(k, p)] = v.m[(p, k)] + dt * (qa[(i, k)] - lin[(i, k)]);
                }
                for j in 0..np {
                    jac[(k, nu + j)] = dt * v.p[(j, k)];
                }
            }
            for j in 0..np {
                for p in 0..nu {
                    jac[(nu + j, p)] = v.r[(j, nl + p)];
                }
            }
            let dx = jac.lu().solve(&(-res)).ok_or_else(|| RomError::Newton {
                time: t_next,
                iterations: iter + 1,
                history: history.clone(),
            })?;
            for p in 0..nu {
                abar[nl + p] += dx[p];
            }
            for j in 0..np {
                b[j] += dx[nu + j];
            }
        }
        if !converged {
            return Err(RomError::Newton {
                time: t_next,
                iterations: history.len(),
                history,
            });
        }
        let constraint = (0..np)
            .map(|j| (0..nbar).map(|i| v.r[(j, i)] * abar[i]).sum::<f64>().powi(2))
            .sum::<f64>()
            .sqrt();

        let c = self.thermal_step(&abar, &state.c, g, l_next, dt)?;
        Ok((
            ReducedState {
                a: abar[nl..].to_vec(),
                b,
                c,
                l: l_next.to_vec(),
                t: t_next,
            },
            constraint,
        ))
    }

    fn thermal_step(&self, abar: &[f64], c_prev: &[f64], g: &[f64], l: &[f64], dt: f64) -> Result<Vec<f64>> {
        let th = &self.ops.thermal;
        let (nlt, nt) = (th.n_lifts, th.n_modes());
        if g.len() != nlt || c_prev.len() != nt {
            return Err(RomError::dim("temperature state does not match the operators"));
        }
        // operator on c̄: L[j,k] = Σ_i ā_i G_ijk − α N_jk − turbulent part
        let mut op = th.g.contract_first(abar);
        op -= &th.n * self.ops.alpha;
        match self.options.closure {
            ThermalClosure::Tensor => {
                for (s, &lm) in self.fixed.thermal_turbulent.iter().zip(l) {
                    if lm != 0.0 {
                        op.zip_apply(s, |x, y| *x -= lm * y);
                    }
                }
            }
            ThermalClosure::Scalar(alpha_t) => op -= &th.n * alpha_t,
        }
        let mut a = DMatrix::zeros(nt, nt);
        let mut rhs = DVector::zeros(nt);
        for k in 0..nt {
            for p in 0..nt {
                a[(k, p)] = th.k[(p, k)] / dt + op[(nlt + p, k)];
                rhs[k] += th.k[(p, k)] * c_prev[p] / dt;
            }
            for j in 0..nlt {
                rhs[k] -= g[j] * op[(j, k)];
            }
        }
        let c = a.lu().solve(&rhs).ok_or_else(|| RomError::data("reduced heat system is singular"))?;
        if !c.iter().all(|x| x.is_finite()) {
            return Err(RomError::data("reduced temperature became non-finite"));
        }
        Ok(c.iter().copied().collect())
    }

    /// Integrates from `initial` over `n_steps` steps of size `dt`.
    pub fn solve(&self, mu: &[f64], g: &[f64], initial: ReducedState, dt: f64, n_steps: usize) -> std::result::Result<ReducedTrajectory, PartialSolve> {
        let start = Instant::now();
        let mut traj = ReducedTrajectory {
            mu: mu.to_vec(),
            states: Vec::with_capacity(n_steps + 1),
            step_seconds: Vec::with_capacity(n_steps),
            wall_seconds: 0.0,
            max_constraint: 0.0,
            extrapolation: false,
        };
        let t0 = initial.t;
        if let Some(r) = &self.rbf {
            traj.extrapolation = r.is_parameter_extrapolation(mu);
        }
        traj.states.push(initial);
        let mut l = vec![0.0; self.ops.velocity.n_nut()];
        for n in 1..=n_steps {
            let s = Instant::now();
            let t_next = t0 + n as f64 * dt;
            self.closure_coefficients(mu, t_next, &mut l);
            let prev = traj.states.last().expect("nonempty");
            match self.step(prev, mu, g, &l, dt) {
                Ok((mut next, constraint)) => {
                    // avoid drift from repeated addition
                    next.t = t_next;
                    traj.max_constraint = traj.max_constraint.max(constraint);
                    traj.states.push(next);
                    traj.step_seconds.push(s.elapsed().as_secs_f64());
                }
                Err(error) => {
                    traj.wall_seconds = start.elapsed().as_secs_f64();
                    return Err(PartialSolve { error, trajectory: traj });
                }
            }
        }
        traj.wall_seconds = start.elapsed().as_secs_f64();
        Ok(traj)
    }
}

/// Reduced initial state from full-order initial fields.
pub fn initial_conditions(
    mesh: &Mesh,
    bases: &Bases,
    model: &ReducedModel,
    mu: &[f64],
    g: &[f64],
    u0: &Field,
    p0: &Field,
    theta0: &Field,
) -> Result<ReducedState> {
    for f in [u0, p0, theta0] {
        f.check_mesh(mesh)?;
    }
    let mut hu = u0.clone();
    hu.axpy(-1.0, &lift_combination(mesh, &bases.velocity_lifts, mu)?)?;
    let mut ht = theta0.clone();
    ht.axpy(-1.0, &lift_combination(mesh, &bases.temperature_lifts, g)?)?;
    let col = |f: &Field| DMatrix::from_column_slice(f.values().len(), 1, f.values());
    let a = project_snapshots(&col(&hu), &bases.velocity, &dof_weights(mesh, 2))?;
    let b = project_snapshots(&col(p0), &bases.pressure, &dof_weights(mesh, 1))?;
    let c = project_snapshots(&col(&ht), &bases.temperature, &dof_weights(mesh, 1))?;
    let mut l = vec![0.0; model.ops.velocity.n_nut()];
    model.closure_coefficients(mu, 0.0, &mut l);
    Ok(ReducedState {
        a: a.iter().copied().collect(),
        b: b.iter().copied().collect(),
        c: c.iter().copied().collect(),
        l,
        t: 0.0,
    })
}

/// Full-order fields of one reduced state.
#[derive(Clone, Debug)]
pub struct Reconstruction {
    pub t: f64,
    pub u: Field,
    pub p: Field,
    pub theta: Field,
    pub nut: Field,
}

fn combine(mesh: &Mesh, comps: usize, modes: &DMatrix<f64>, coeffs: &[f64]) -> Result<Field> {
    if modes.ncols() != coeffs.len() {
        return Err(RomError::dim(format!("{} modes but {} coefficients", modes.ncols(), coeffs.len())));
    }
    let v = modes * DVector::from_column_slice(coeffs);
    Field::from_values(mesh, comps, v.iter().copied().collect())
}

pub fn reconstruct_state(mesh: &Mesh, bases: &Bases, mu: &[f64], g: &[f64], s: &ReducedState) -> Result<Reconstruction> {
    let mut u = lift_combination(mesh, &bases.velocity_lifts, mu)?;
    u.axpy(1.0, &combine(mesh, 2, &bases.velocity, &s.a)?)?;
    let mut theta = lift_combination(mesh, &bases.temperature_lifts, g)?;
    theta.axpy(1.0, &combine(mesh, 1, &bases.temperature, &s.c)?)?;
    Ok(Reconstruction {
        t: s.t,
        u,
        p: combine(mesh, 1, &bases.pressure, &s.b)?,
        theta,
        nut: combine(mesh, 1, &bases.nut, &s.l)?,
    })
}

/// Reconstructs the states nearest to each requested time.
pub fn reconstruct(mesh: &Mesh, bases: &Bases, traj: &ReducedTrajectory, g: &[f64], times: &[f64]) -> Result<Vec<Reconstruction>> {
    times
        .iter()
        .map(|&t| reconstruct_state(mesh, bases, &traj.mu, g, traj.at(t)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::galerkin::{Tensor3, ThermalOperators, VelocityOperators};
    use crate::lifting::compute_control_function;
    use crate::fv::{BcKind, BoundaryConditions};
    use crate::pod::orthonormalize;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_ops(nl: usize, nu: usize, np: usize, nn: usize, nt: usize, seed: u64) -> ReducedOperators {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut rnd = |r: usize, c: usize, s: f64| DMatrix::from_fn(r, c, |_, _| s * rng.gen_range(-1.0..1.0));
        let nbar = nl + nu;
        // dissipative diffusion block on the modes
        let mut b = rnd(nbar, nu, 0.1);
        for k in 0..nu {
            b[(nl + k, k)] -= 2.0;
        }
        let t3 = |d: [usize; 3], s: f64, seed: u64| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            Tensor3 { dims: d, data: (0..d[0] * d[1] * d[2]).map(|_| s * rng.gen_range(-1.0..1.0)).collect() }
        };
        let p = rnd(np, nu, 1.0);
        let mut r = rnd(np, nbar, 0.3);
        r.columns_mut(nl, nu).copy_from(&(-p.clone()));
        let mut n = rnd(1 + nt, nt, 0.1);
        for k in 0..nt {
            n[(1 + k, k)] -= 2.0;
        }
        ReducedOperators {
            velocity: VelocityOperators {
                n_lifts: nl,
                m: DMatrix::identity(nu, nu),
                b,
                bt: rnd(nbar, nu, 0.05),
                q: t3([nbar, nbar, nu], 0.2, seed + 1),
                qt1: t3([nn, nbar, nu], 0.1, seed + 2),
                qt2: t3([nn, nbar, nu], 0.1, seed + 3),
                p,
                r,
            },
            thermal: ThermalOperators {
                n_lifts: 1,
                k: DMatrix::identity(nt, nt),
                g: t3([nbar, 1 + nt, nt], 0.2, seed + 4),
                n,
                nt: t3([nn, 1 + nt, nt], 0.1, seed + 5),
            },
            nu: 0.5,
            alpha: 0.3,
            pr_t: 0.85,
        }
    }

    fn zero_state(ops: &ReducedOperators) -> ReducedState {
        ReducedState {
            a: vec![0.0; ops.velocity.n_modes()],
            b: vec![0.0; ops.velocity.n_pressure()],
            c: vec![0.0; ops.thermal.n_modes()],
            l: vec![0.0; ops.velocity.n_nut()],
            t: 0.0,
        }
    }

    #[test]
    fn zero_state_is_a_fixed_point() {
        let mut ops = random_ops(0, 4, 2, 2, 3, 1);
        ops.thermal.n_lifts = 0;
        ops.thermal.g = Tensor3::zeros([4, 3, 3]);
        ops.thermal.n = ops.thermal.n.rows(1, 3).into_owned();
        ops.thermal.nt = Tensor3::zeros([2, 3, 3]);
        let model = ReducedModel::new(ops, None, RomOptions::default()).unwrap();
        let s0 = zero_state(&model.ops);
        let traj = model.solve(&[], &[], s0, 0.01, 20).unwrap();
        assert_eq!(traj.states.len(), 21);
        for s in &traj.states {
            assert!(s.a.iter().chain(&s.b).chain(&s.c).all(|v| *v == 0.0));
        }
    }

    #[test]
    fn constraint_holds_every_step() {
        let ops = random_ops(2, 5, 2, 2, 2, 7);
        let model = ReducedModel::new(ops, None, RomOptions::default()).unwrap();
        let mut s0 = zero_state(&model.ops);
        s0.a = vec![0.1, -0.2, 0.05, 0.0, 0.1];
        let traj = model.solve(&[0.5, 0.7], &[1.0], s0, 0.01, 50).unwrap();
        assert!(traj.max_constraint < 1e-9, "{}", traj.max_constraint);
        assert!(traj.states.iter().all(|s| s.a.iter().chain(&s.c).all(|v| v.is_finite())));
        let times = traj.times();
        assert!(times.windows(2).all(|w| w[1] > w[0]));
        // bitwise determinism
        let again = model.solve(&[0.5, 0.7], &[1.0], traj.states[0].clone(), 0.01, 50).unwrap();
        assert_eq!(again.states, traj.states);
    }

    #[test]
    fn linear_diffusion_converges_first_order() {
        let nu_m = 3;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let sym = DMatrix::from_fn(nu_m, nu_m, |_, _| rng.gen_range(-0.3..0.3));
        let b = -(DMatrix::identity(nu_m, nu_m) * 2.0 + &sym * sym.transpose());
        let ops = ReducedOperators {
            velocity: VelocityOperators {
                n_lifts: 0,
                m: DMatrix::identity(nu_m, nu_m),
                b: b.clone(),
                bt: DMatrix::zeros(nu_m, nu_m),
                q: Tensor3::zeros([nu_m, nu_m, nu_m]),
                qt1: Tensor3::zeros([0, nu_m, nu_m]),
                qt2: Tensor3::zeros([0, nu_m, nu_m]),
                p: DMatrix::zeros(0, nu_m),
                r: DMatrix::zeros(0, nu_m),
            },
            thermal: ThermalOperators {
                n_lifts: 0,
                k: DMatrix::identity(1, 1),
                g: Tensor3::zeros([nu_m, 1, 1]),
                n: DMatrix::from_element(1, 1, -1.0),
                nt: Tensor3::zeros([0, 1, 1]),
            },
            nu: 0.7,
            alpha: 0.2,
            pr_t: 1.0,
        };
        let model = ReducedModel::new(ops, None, RomOptions::default()).unwrap();
        let a0 = DVector::from_vec(vec![1.0, -0.5, 0.25]);
        // ȧ = ν Bᵀ a
        let exact = (b.transpose() * 0.7).exp() * &a0;
        let theta_exact = (-0.2f64).exp();
        let run = |steps: usize| {
            let s0 = ReducedState { a: a0.iter().copied().collect(), b: vec![], c: vec![1.0], l: vec![], t: 0.0 };
            let tr = model.solve(&[], &[], s0, 1.0 / steps as f64, steps).unwrap();
            let last = tr.states.last().unwrap().clone();
            ((DVector::from_vec(last.a) - &exact).norm(), (last.c[0] - theta_exact).abs())
        };
        let (e1, t1) = run(50);
        let (e2, t2) = run(100);
        let ratio = e1 / e2;
        assert!(ratio > 1.8 && ratio < 2.2, "ratio {ratio}");
        assert!((t1 / t2) > 1.8 && (t1 / t2) < 2.2);
    }

    #[test]
    fn newton_failure_reports_history() {
        let ops = random_ops(2, 4, 1, 1, 1, 2);
        let opts = RomOptions { max_newton: 0, ..RomOptions::default() };
        let model = ReducedModel::new(ops, None, opts).unwrap();
        let mut s0 = zero_state(&model.ops);
        s0.a[0] = 1.0;
        let err = model.solve(&[1.0, 1.0], &[1.0], s0, 0.1, 5).unwrap_err();
        assert_eq!(err.trajectory.states.len(), 1);
        match err.error {
            RomError::Newton { history, .. } => assert_eq!(history.len(), 1),
            e => panic!("{e}"),
        }
    }

    fn mesh_bases() -> (Mesh, Bases) {
        let mesh = Mesh::rectangle(8, 6, 2.0, 1.0).unwrap();
        let vb = BoundaryConditions::new(&mesh, 2, &[("west", BcKind::Dirichlet(vec![0.0, 0.0])), ("east", BcKind::Outlet), ("south", BcKind::Dirichlet(vec![0.0, 0.0])), ("north", BcKind::Dirichlet(vec![0.0, 0.0]))]).unwrap();
        let tb = BoundaryConditions::new(&mesh, 1, &[("west", BcKind::Dirichlet(vec![0.0])), ("east", BcKind::Outlet), ("south", BcKind::NeumannZero), ("north", BcKind::NeumannZero)]).unwrap();
        let lift = compute_control_function(&mesh, &vb, "west", &[1.0, 0.0]).unwrap();
        let tlift = compute_control_function(&mesh, &tb, "west", &[1.0]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut mk = |rows: usize, cols: usize, comps: usize| {
            let mut m = DMatrix::from_fn(rows, cols, |_, _| rng.gen_range(-1.0..1.0));
            orthonormalize(&mut m, &dof_weights(&mesh, comps)).unwrap();
            m
        };
        let n = mesh.n_cells();
        let bases = Bases {
            velocity: mk(2 * n, 3, 2),
            pressure: mk(n, 2, 1),
            temperature: mk(n, 2, 1),
            nut: mk(n, 2, 1),
            velocity_lifts: vec![lift],
            temperature_lifts: vec![tlift],
        };
        (mesh, bases)
    }

    fn dummy_model() -> ReducedModel {
        let mut ops = random_ops(1, 3, 2, 2, 2, 11);
        ops.velocity.n_lifts = 1;
        ops.check().unwrap();
        ReducedModel::new(ops, None, RomOptions::default()).unwrap()
    }

    #[test]
    fn initial_conditions_of_lift_and_mode() {
        let (mesh, bases) = mesh_bases();
        let model = dummy_model();
        let mu = [0.6];
        let g = [2.0];
        let u_lift = lift_combination(&mesh, &bases.velocity_lifts, &mu).unwrap();
        let t_lift = lift_combination(&mesh, &bases.temperature_lifts, &g).unwrap();
        let p0 = Field::zeros(&mesh, 1);
        let s = initial_conditions(&mesh, &bases, &model, &mu, &g, &u_lift, &p0, &t_lift).unwrap();
        assert!(s.a.iter().chain(&s.b).chain(&s.c).all(|v| v.abs() < 1e-14));

        let mut u = u_lift.clone();
        let m1 = Field::from_values(&mesh, 2, bases.velocity.column(0).iter().copied().collect()).unwrap();
        u.axpy(1.0, &m1).unwrap();
        let s = initial_conditions(&mesh, &bases, &model, &mu, &g, &u, &p0, &t_lift).unwrap();
        assert!((s.a[0] - 1.0).abs() < 1e-12 && s.a[1].abs() < 1e-12 && s.a[2].abs() < 1e-12);

        let other = Mesh::rectangle(4, 4, 1.0, 1.0).unwrap();
        assert!(initial_conditions(&mesh, &bases, &model, &mu, &g, &Field::zeros(&other, 2), &p0, &t_lift).is_err());
    }

    #[test]
    fn reconstruction_identities() {
        let (mesh, bases) = mesh_bases();
        let mu = [0.6];
        let g = [2.0];
        let zero = ReducedState { a: vec![0.0; 3], b: vec![0.0; 2], c: vec![0.0; 2], l: vec![0.0; 2], t: 0.0 };
        let r = reconstruct_state(&mesh, &bases, &mu, &g, &zero).unwrap();
        let lift = lift_combination(&mesh, &bases.velocity_lifts, &mu).unwrap();
        assert_eq!(r.u.values(), lift.values());
        assert_eq!(r.p.max_abs(), 0.0);
        assert_eq!(r.nut.max_abs(), 0.0);

        let mut e1 = zero.clone();
        e1.a[0] = 1.0;
        let r = reconstruct_state(&mesh, &bases, &mu, &g, &e1).unwrap();
        for (i, v) in r.u.values().iter().enumerate() {
            assert!((v - lift.values()[i] - bases.velocity[(i, 0)]).abs() < 1e-15);
        }

        // projection then reconstruction leaves exactly the projection residual
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let snap = Field::from_values(&mesh, 1, (0..mesh.n_cells()).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
        let w = dof_weights(&mesh, 1);
        let col = DMatrix::from_column_slice(mesh.n_cells(), 1, snap.values());
        let c = project_snapshots(&col, &bases.pressure, &w).unwrap();
        let mut st = zero.clone();
        st.b = c.iter().copied().collect();
        let rec = reconstruct_state(&mesh, &bases, &mu, &g, &st).unwrap();
        let resid = &col - &bases.pressure * &c;
        let direct: f64 = resid.iter().zip(&w).map(|(x, w)| w * x * x).sum::<f64>().sqrt();
        let via: f64 = snap.values().iter().zip(rec.p.values()).zip(&w).map(|((a, b), w)| w * (a - b).powi(2)).sum::<f64>().sqrt();
        assert!((direct - via).abs() < 1e-12);
    }

    #[test]
    fn coefficient_csv_layout() {
        let ops = random_ops(2, 2, 1, 1, 1, 5);
        let model = ReducedModel::new(ops, None, RomOptions::default()).unwrap();
        let traj = model.solve(&[0.5, 0.5], &[1.0], zero_state(&model.ops), 0.1, 3).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("coeffs.csv");
        traj.write_csv(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "t,a0,a1,b0,c0,l0");
        assert_eq!(lines.len(), 5);
        assert!(lines[4].starts_with("3.0000"));
    }
}
