//! Primal-dual interior-point method with Nesterov–Todd scaling and a
//! Mehrotra predictor-corrector step, over dense matrices.
//!
//! Works on the standard form
//!
//! ```text
//! minimize ½xᵀPx + qᵀx   s.t.   Gx + s = h,  s ∈ K,   Ax = b
//! ```
//!
//! where linear inequalities map to the orthant and each SOC block
//! `‖Fx + f‖ ≤ cᵀx + d` maps to `s = (cᵀx + d, Fx + f) ∈ Q`, i.e. rows
//! `−[cᵀ; F]` of `G` and `[d; f]` of `h`.

use nalgebra::{DMatrix, DVector};

use super::cones::{ConeLayout, Scaling};
use super::{ConicProgram, Solution, SolveStatus, SolverTolerances};
use crate::error::{Error, Result};

const STEP_FRACTION: f64 = 0.99;
const KKT_REGULARIZATION: f64 = 1e-11;
const REFINEMENT_STEPS: usize = 3;
/// After the tolerances are met, keep iterating towards this fraction of the
/// gap target while every step still halves the gap; the last accepted
/// iterate is returned if the extra steps stall or break down. Near
/// weakly active cone constraints the primal converges like the square root
/// of the gap, so the extra digits matter.
const POLISH_GAP_FACTOR: f64 = 1e-9;

/// `(x, y, z, s)` or a direction in the same variables.
type Iterate = (DVector<f64>, DVector<f64>, DVector<f64>, DVector<f64>);

struct StandardForm {
    p: DMatrix<f64>,
    q: DVector<f64>,
    g: DMatrix<f64>,
    h: DVector<f64>,
    a: DMatrix<f64>,
    b: DVector<f64>,
    cones: ConeLayout,
    num_linear: usize,
}

impl StandardForm {
    fn from_program(program: &ConicProgram) -> Self {
        let n = program.num_variables();
        let num_linear = program.inequalities.len();
        let soc_dims: Vec<usize> = program.soc_blocks.iter().map(|b| b.dim()).collect();
        let m = num_linear + soc_dims.iter().sum::<usize>();

        let mut g = DMatrix::zeros(m, n);
        let mut h = DVector::zeros(m);
        g.rows_mut(0, num_linear)
            .copy_from(&program.inequalities.matrix);
        h.rows_mut(0, num_linear)
            .copy_from(&program.inequalities.rhs);
        let mut row = num_linear;
        for block in &program.soc_blocks {
            g.row_mut(row).copy_from(&(-block.c.transpose()));
            h[row] = block.d;
            let k = block.f_mat.nrows();
            g.rows_mut(row + 1, k).copy_from(&(-&block.f_mat));
            h.rows_mut(row + 1, k).copy_from(&block.f_vec);
            row += k + 1;
        }

        StandardForm {
            p: program.objective_quadratic.clone(),
            q: program.objective_linear.clone(),
            g,
            h,
            a: program.equalities.matrix.clone(),
            b: program.equalities.rhs.clone(),
            cones: ConeLayout {
                orthant: num_linear,
                socs: soc_dims,
            },
            num_linear,
        }
    }

    fn n(&self) -> usize {
        self.q.len()
    }

    fn p_eq(&self) -> usize {
        self.b.len()
    }
}

/// Factorized quasidefinite KKT system
///
/// ```text
/// [ P  Aᵀ  (W⁻¹G)ᵀ ]
/// [ A     0   0  ]
/// [ W⁻¹G  0  −I ]
/// ```
///
/// in the scaled dual variable `WΔz`, for one scaling (`W = I` when none is
/// given). Keeping the system unreduced avoids forming `GᵀW⁻²G`, whose
/// conditioning collapses near the optimum.
struct Kkt<'a> {
    form: &'a StandardForm,
    scaling: Option<&'a Scaling>,
    matrix: DMatrix<f64>,
    lu: nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
}

impl<'a> Kkt<'a> {
    fn factor(form: &'a StandardForm, scaling: Option<&'a Scaling>) -> Result<Self> {
        let n = form.n();
        let p = form.p_eq();
        let m = form.cones.dim();
        let wg = match scaling {
            Some(w) => w.apply_inverse_to_columns(&form.g),
            None => form.g.clone(),
        };
        let mut matrix = DMatrix::zeros(n + p + m, n + p + m);
        matrix.view_mut((0, 0), (n, n)).copy_from(&form.p);
        matrix.view_mut((n, 0), (p, n)).copy_from(&form.a);
        matrix
            .view_mut((0, n), (n, p))
            .copy_from(&form.a.transpose());
        matrix.view_mut((n + p, 0), (m, n)).copy_from(&wg);
        matrix
            .view_mut((0, n + p), (n, m))
            .copy_from(&wg.transpose());
        for i in n + p..n + p + m {
            matrix[(i, i)] = -1.0;
        }

        let scale = matrix.amax().max(1.0);
        let mut regularized = matrix.clone();
        for i in 0..n {
            regularized[(i, i)] += KKT_REGULARIZATION * scale;
        }
        for i in n..n + p {
            regularized[(i, i)] -= KKT_REGULARIZATION * scale;
        }
        let lu = regularized.lu();
        if !lu.is_invertible() {
            return Err(Error::NumericalBreakdown("singular KKT matrix".into()));
        }
        Ok(Kkt {
            form,
            scaling,
            matrix,
            lu,
        })
    }

    /// Solves the system for stacked right-hand side `(rx, ry, rz)` with
    /// iterative refinement against the unregularized matrix.
    fn solve_stacked(
        &self,
        rx: &DVector<f64>,
        ry: &DVector<f64>,
        rz: &DVector<f64>,
    ) -> Result<(DVector<f64>, DVector<f64>, DVector<f64>)> {
        let n = rx.len();
        let p = ry.len();
        let m = rz.len();
        let mut rhs = DVector::zeros(n + p + m);
        rhs.rows_mut(0, n).copy_from(rx);
        rhs.rows_mut(n, p).copy_from(ry);
        rhs.rows_mut(n + p, m).copy_from(rz);
        let mut sol = self
            .lu
            .solve(&rhs)
            .ok_or_else(|| Error::NumericalBreakdown("KKT back-substitution failed".into()))?;
        for _ in 0..REFINEMENT_STEPS {
            let resid = &rhs - &self.matrix * &sol;
            if resid.amax() <= 1e-15 * rhs.amax().max(1.0) {
                break;
            }
            if let Some(corr) = self.lu.solve(&resid) {
                sol += corr;
            }
        }
        if sol.iter().any(|v| !v.is_finite()) {
            return Err(Error::NumericalBreakdown("non-finite KKT solution".into()));
        }
        Ok((
            sol.rows(0, n).into_owned(),
            sol.rows(n, p).into_owned(),
            sol.rows(n + p, m).into_owned(),
        ))
    }

    /// Newton direction for residuals `(rx, ry, rz)` and complementarity
    /// right-hand side `ds` (in the scaled space, `λ ∘ (WΔz + W⁻¹Δs) = ds`).
    fn direction(
        &self,
        rx: &DVector<f64>,
        ry: &DVector<f64>,
        rz: &DVector<f64>,
        lambda: &DVector<f64>,
        ds: &DVector<f64>,
    ) -> Result<Iterate> {
        let w = self.scaling.expect("direction needs a scaling");
        // Δs = W(λ⧵ds) − W²Δz  and  GΔx + Δs = −rz, scaled by W⁻¹
        let lds = self.form.cones.divide(lambda, ds);
        let rhs_z = -w.apply(rz, true) - lds;
        let (dx, dy, wdz) = self.solve_stacked(&(-rx), &(-ry), &rhs_z)?;
        let dz = w.apply(&wdz, true);
        let dsl = -rz - &self.form.g * &dx;
        Ok((dx, dy, dz, dsl))
    }
}

/// Solves `program` to the given tolerances.
pub fn solve(program: &ConicProgram, tol: &SolverTolerances) -> Result<Solution> {
    program.validate()?;
    let form = StandardForm::from_program(program);
    let m = form.cones.dim();

    if m == 0 {
        return solve_equality_qp(program, &form, tol);
    }

    // Initial point from the W = I system.
    let (mut x, mut y, mut s, mut z) = {
        let kkt = Kkt::factor(&form, None)?;
        let (x, y, z) = kkt.solve_stacked(&(-&form.q), &form.b, &form.h)?;
        let s = -&z;
        (x, y, s, z)
    };
    let e = form.cones.identity();
    let shift = |v: &mut DVector<f64>| {
        let margin = form.cones.interior_margin(v);
        if margin >= -1e-8 {
            *v += &e * (1.0 + margin.max(0.0));
        }
    };
    shift(&mut s);
    shift(&mut z);

    let degree = form.cones.degree() as f64;
    let q_scale = 1.0 + form.q.amax();
    let hb_scale = 1.0 + form.h.amax().max(form.b.amax());

    let mut last_status = SolveStatus::MaxIterations;
    let mut iterations = 0;
    // (x, y, z, s, gap) of the best iterate meeting the tolerances
    let mut accepted: Option<(Iterate, f64)> = None;
    for iter in 0..=tol.max_iterations {
        iterations = iter;
        let px = &form.p * &x;
        let rx = &px + &form.q + form.a.transpose() * &y + form.g.transpose() * &z;
        let ry = &form.a * &x - &form.b;
        let rz = &form.g * &x + &s - &form.h;
        let gap = s.dot(&z);
        let mu = gap / degree;

        let pres = ry.amax().max(rz.amax());
        let dres = rx.amax() / q_scale;
        let pobj = 0.5 * x.dot(&px) + form.q.dot(&x);
        let gap_target = tol.gap_tol * pobj.abs().max(1.0);
        let finite = pres.is_finite() && dres.is_finite() && gap.is_finite();
        if finite && pres <= tol.feas_tol && dres <= tol.feas_tol && gap <= gap_target {
            last_status = SolveStatus::Optimal;
            let improving = accepted.as_ref().is_none_or(|a| gap < 0.5 * a.1);
            if !improving {
                break;
            }
            accepted = Some(((x.clone(), y.clone(), z.clone(), s.clone()), gap));
            if gap <= POLISH_GAP_FACTOR * gap_target {
                break;
            }
        } else if accepted.is_some() {
            break;
        } else if !finite {
            return Err(Error::NumericalBreakdown("non-finite iterate".into()));
        }

        // Infeasibility certificates.
        let dual_cert = -(form.h.dot(&z) + form.b.dot(&y));
        if dual_cert > 0.0 {
            let r = (form.a.transpose() * &y + form.g.transpose() * &z).amax() / dual_cert;
            if r <= tol.feas_tol * hb_scale && pres > tol.feas_tol {
                last_status = SolveStatus::Infeasible;
                break;
            }
        }
        let primal_cert = -form.q.dot(&x);
        if primal_cert > 0.0 {
            let gx = &form.g * &x;
            let r = px
                .amax()
                .max((&form.a * &x).amax())
                .max(form.cones.violation(&(-gx)))
                / primal_cert;
            if r <= tol.feas_tol && dres > tol.feas_tol {
                last_status = SolveStatus::Unbounded;
                break;
            }
        }
        if iter == tol.max_iterations {
            break;
        }

        let step = newton_step(&form, &s, &z, &rx, &ry, &rz, &e, mu);
        let (dx, dy, dz, dsl, alpha) = match step {
            Ok(step) => step,
            Err(_) if accepted.is_some() => break,
            Err(err) => return Err(err),
        };
        x += &dx * alpha;
        y += &dy * alpha;
        z += &dz * alpha;
        s += &dsl * alpha;
    }
    if let Some(((ax, ay, az, as_), _)) = accepted {
        (x, y, z, s) = (ax, ay, az, as_);
        last_status = SolveStatus::Optimal;
    }

    let px = &form.p * &x;
    let rx = &px + &form.q + form.a.transpose() * &y + form.g.transpose() * &z;
    let ry = &form.a * &x - &form.b;
    let rz = &form.g * &x + &s - &form.h;
    Ok(Solution {
        status: last_status,
        objective_value: program.objective(&x),
        primal_residual: ry.amax().max(rz.amax()),
        dual_residual: rx.amax() / q_scale,
        dual_inequalities: z.rows(0, form.num_linear).into_owned(),
        dual_equalities: y,
        primal: x,
        iterations,
    })
}

/// Directions `(Δx, Δy, Δz, Δs)` and the damped step length.
type Step = (DVector<f64>, DVector<f64>, DVector<f64>, DVector<f64>, f64);

/// One Mehrotra predictor-corrector step; returns the direction and the
/// damped step length.
#[allow(clippy::too_many_arguments)]
fn newton_step(
    form: &StandardForm,
    s: &DVector<f64>,
    z: &DVector<f64>,
    rx: &DVector<f64>,
    ry: &DVector<f64>,
    rz: &DVector<f64>,
    e: &DVector<f64>,
    mu: f64,
) -> Result<Step> {
    let scaling = form.cones.nt_scaling(s, z);
    let lambda = scaling.apply(z, false);
    let kkt = Kkt::factor(form, Some(&scaling))?;

    // Predictor.
    let lsq = form.cones.product(&lambda, &lambda);
    let (_, _, dza, dsa) = kkt.direction(rx, ry, rz, &lambda, &(-&lsq))?;
    let alpha_aff = form
        .cones
        .max_step(s, &dsa)
        .min(form.cones.max_step(z, &dza))
        .min(1.0);
    let sigma = (1.0 - alpha_aff).clamp(0.0, 1.0).powi(3);

    // Corrector.
    let ws = scaling.apply(&dsa, true);
    let wz = scaling.apply(&dza, false);
    let ds = -&lsq - form.cones.product(&ws, &wz) + e * (sigma * mu);
    let (dx, dy, dz, dsl) = kkt.direction(rx, ry, rz, &lambda, &ds)?;
    let alpha_max = form
        .cones
        .max_step(s, &dsl)
        .min(form.cones.max_step(z, &dz));
    let mut alpha = (STEP_FRACTION * alpha_max).min(1.0);
    // The closed-form step can overshoot when an iterate hugs a cone
    // boundary; backtrack until both iterates stay strictly interior.
    let inside = |alpha: f64| {
        form.cones.interior_margin(&(s + &dsl * alpha)) < 0.0
            && form.cones.interior_margin(&(z + &dz * alpha)) < 0.0
    };
    let mut tries = 0;
    while alpha > 0.0 && !inside(alpha) && tries < 60 {
        alpha *= 0.5;
        tries += 1;
    }
    if !(alpha > 0.0) || !inside(alpha) {
        return Err(Error::NumericalBreakdown("zero step length".into()));
    }
    Ok((dx, dy, dz, dsl, alpha))
}

/// Programs without cone constraints reduce to one KKT solve.
fn solve_equality_qp(
    program: &ConicProgram,
    form: &StandardForm,
    tol: &SolverTolerances,
) -> Result<Solution> {
    let q_scale = 1.0 + form.q.amax();
    let kkt = Kkt::factor(form, None)?;
    let (x, y, _) = kkt.solve_stacked(&(-&form.q), &form.b, &DVector::zeros(0))?;
    let rx = &form.p * &x + &form.q + form.a.transpose() * &y;
    let ry = &form.a * &x - &form.b;
    let pres = ry.amax();
    let dres = rx.amax() / q_scale;

    let status = if pres > tol.feas_tol.sqrt() {
        SolveStatus::Infeasible
    } else if dres > tol.feas_tol.sqrt() {
        SolveStatus::Unbounded
    } else {
        SolveStatus::Optimal
    };
    Ok(Solution {
        status,
        objective_value: program.objective(&x),
        primal_residual: pres,
        dual_residual: dres,
        dual_inequalities: DVector::zeros(0),
        dual_equalities: y,
        primal: x,
        iterations: 1,
    })
}
