//! Safety-filter QP: minimally modify the agent's action subject to the
//! active barrier constraints and the control box.
//!
//! At desk scale (m = 2, a handful of constraints) the exact minimizer is
//! found by enumerating active subsets of size up to m, solving each KKT
//! system, and keeping the feasible candidate with the least objective.
//! No iterative solver, no external dependency, fully deterministic.

use crate::cbf::BarrierConstraint;
use nalgebra::{DMatrix, DVector};
use thiserror::Error;

/// Feasibility tolerance on affine constraint residuals.
const FEAS_TOL: f64 = 1e-9;
/// A candidate must beat the incumbent by this margin; ties therefore go to
/// the earliest (lowest-index) active set in enumeration order.
const TIE_TOL: f64 = 1e-12;
/// Residual magnitude below which a barrier constraint counts as active.
const ACTIVE_TOL: f64 = 1e-7;

#[derive(Debug, Error)]
pub enum QpError {
    #[error("weight matrix is not symmetric positive-definite")]
    NotPositiveDefinite,
    #[error("invalid box bounds (need lo < hi per component)")]
    BadBox,
    #[error("non-finite problem data")]
    NonFinite,
    #[error("unsupported control dimension {0} (max 4)")]
    Dimension(usize),
}

/// One safety-filter instance.
#[derive(Debug, Clone)]
pub struct FilterProblem {
    p: DMatrix<f64>,
    u_rl: Vec<f64>,
    constraints: Vec<BarrierConstraint>,
    lo: Vec<f64>,
    hi: Vec<f64>,
    /// Quadratic penalty weight on the shared slack in the relaxed problem.
    pub slack_penalty: f64,
}

/// Solver output.
#[derive(Debug, Clone)]
pub struct FilterResult {
    pub u_safe: Vec<f64>,
    /// True when the filter changed the action.
    pub intervened: bool,
    pub intervention_norm: f64,
    /// Zero whenever the original problem was feasible.
    pub slack_used: f64,
    /// Indices of barrier constraints active at the solution.
    pub active_constraints: Vec<usize>,
}

impl FilterProblem {
    pub fn new(
        p: DMatrix<f64>,
        u_rl: Vec<f64>,
        constraints: Vec<BarrierConstraint>,
        lo: Vec<f64>,
        hi: Vec<f64>,
    ) -> Result<Self, QpError> {
        let m = u_rl.len();
        if m == 0 || m > 4 {
            return Err(QpError::Dimension(m));
        }
        if p.nrows() != m || p.ncols() != m || lo.len() != m || hi.len() != m {
            return Err(QpError::Dimension(m));
        }
        if !u_rl.iter().all(|v| v.is_finite())
            || !p.iter().all(|v| v.is_finite())
            || !constraints
                .iter()
                .all(|c| c.rhs.is_finite() && c.coeff.iter().all(|v| v.is_finite()))
        {
            return Err(QpError::NonFinite);
        }
        let scale = p.iter().map(|v| v.abs()).fold(0.0f64, f64::max).max(1.0);
        for i in 0..m {
            for j in 0..m {
                if (p[(i, j)] - p[(j, i)]).abs() > 1e-10 * scale {
                    return Err(QpError::NotPositiveDefinite);
                }
            }
        }
        if p.clone().cholesky().is_none() {
            return Err(QpError::NotPositiveDefinite);
        }
        if !(0..m).all(|j| lo[j] < hi[j] && lo[j].is_finite() && hi[j].is_finite()) {
            return Err(QpError::BadBox);
        }
        Ok(Self { p, u_rl, constraints, lo, hi, slack_penalty: 1e6 })
    }

    /// Identity weight matrix constructor, the common case.
    pub fn with_identity_weight(
        u_rl: Vec<f64>,
        constraints: Vec<BarrierConstraint>,
        lo: Vec<f64>,
        hi: Vec<f64>,
    ) -> Result<Self, QpError> {
        let m = u_rl.len();
        Self::new(DMatrix::identity(m, m), u_rl, constraints, lo, hi)
    }

    pub fn dim(&self) -> usize {
        self.u_rl.len()
    }

    /// Exact minimizer via active-set enumeration; falls back to a shared
    /// quadratically-penalized slack when the barrier set is infeasible
    /// inside the box.
    pub fn solve(&self) -> FilterResult {
        let m = self.dim();

        // All constraints as rows (a, b) meaning a.z + b >= 0.
        let mut rows: Vec<(Vec<f64>, f64)> = Vec::new();
        for c in &self.constraints {
            rows.push((c.coeff.clone(), c.rhs));
        }
        for j in 0..m {
            let mut a = vec![0.0; m];
            a[j] = 1.0;
            rows.push((a, -self.lo[j]));
            let mut a = vec![0.0; m];
            a[j] = -1.0;
            rows.push((a, self.hi[j]));
        }

        let q_vec = {
            let r = DVector::from_column_slice(&self.u_rl);
            -(&self.p * r)
        };

        if let Some(z) = enumerate_best(&self.p, &q_vec, &rows, m) {
            return self.finish(&z, 0.0);
        }

        // Relaxed problem over (u, s): shared slack on every barrier row,
        // hard box, s >= 0, quadratic penalty on s.
        let dim = m + 1;
        let mut q2 = DMatrix::zeros(dim, dim);
        q2.view_mut((0, 0), (m, m)).copy_from(&self.p);
        q2[(m, m)] = 2.0 * self.slack_penalty;
        let mut qv2 = DVector::zeros(dim);
        let r = DVector::from_column_slice(&self.u_rl);
        let pr = &self.p * r;
        for j in 0..m {
            qv2[j] = -pr[j];
        }
        let mut rows2: Vec<(Vec<f64>, f64)> = Vec::new();
        for c in &self.constraints {
            let mut a = c.coeff.clone();
            a.push(1.0);
            rows2.push((a, c.rhs));
        }
        for j in 0..m {
            let mut a = vec![0.0; dim];
            a[j] = 1.0;
            rows2.push((a, -self.lo[j]));
            let mut a = vec![0.0; dim];
            a[j] = -1.0;
            rows2.push((a, self.hi[j]));
        }
        let mut a = vec![0.0; dim];
        a[m] = 1.0;
        rows2.push((a, 0.0));

        let z = enumerate_best(&q2, &qv2, &rows2, dim)
            .expect("relaxed problem is always feasible");
        let slack = z[m].max(0.0);
        self.finish(&z.rows(0, m).into_owned(), slack)
    }

    fn finish(&self, u: &DVector<f64>, slack: f64) -> FilterResult {
        let m = self.dim();
        let mut u_safe = vec![0.0; m];
        for j in 0..m {
            u_safe[j] = u[j].clamp(self.lo[j], self.hi[j]);
        }
        let norm: f64 = u_safe
            .iter()
            .zip(&self.u_rl)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        let active = self
            .constraints
            .iter()
            .enumerate()
            .filter(|(_, c)| {
                let v: f64 = c.coeff.iter().zip(&u_safe).map(|(a, u)| a * u).sum::<f64>() + c.rhs + slack;
                v.abs() <= ACTIVE_TOL * (1.0 + c.rhs.abs())
            })
            .map(|(i, _)| i)
            .collect();
        FilterResult {
            u_safe,
            intervened: norm > 1e-9,
            intervention_norm: norm,
            slack_used: slack,
            active_constraints: active,
        }
    }
}

/// Enumerate all active subsets up to size `dim` in lexicographic order,
/// solve each equality-constrained KKT system, and return the feasible
/// candidate with the least objective value.
fn enumerate_best(
    q_mat: &DMatrix<f64>,
    q_vec: &DVector<f64>,
    rows: &[(Vec<f64>, f64)],
    dim: usize,
) -> Option<DVector<f64>> {
    let n = rows.len();
    let feasible = |z: &DVector<f64>| {
        rows.iter().all(|(a, b)| {
            let v: f64 = a.iter().zip(z.iter()).map(|(ai, zi)| ai * zi).sum::<f64>() + b;
            v >= -FEAS_TOL * (1.0 + b.abs())
        })
    };
    let objective = |z: &DVector<f64>| 0.5 * (z.transpose() * q_mat * z)[(0, 0)] + q_vec.dot(z);

    let mut best: Option<(f64, DVector<f64>)> = None;
    let mut consider = |z: DVector<f64>| {
        if !z.iter().all(|v| v.is_finite()) || !feasible(&z) {
            return;
        }
        let obj = objective(&z);
        match &best {
            Some((b, _)) if obj >= b - TIE_TOL => {}
            _ => best = Some((obj, z)),
        }
    };

    // Unconstrained minimizer (empty active set).
    if let Some(z) = q_mat.clone().lu().solve(&(-q_vec)) {
        consider(z);
    }

    let mut subset = Vec::new();
    enumerate_subsets(n, dim, 0, &mut subset, &mut |s: &[usize]| {
        if let Some(z) = solve_kkt(q_mat, q_vec, rows, s) {
            consider(z);
        }
    });

    best.map(|(_, z)| z)
}

fn enumerate_subsets(
    n: usize,
    max_size: usize,
    start: usize,
    current: &mut Vec<usize>,
    visit: &mut impl FnMut(&[usize]),
) {
    for i in start..n {
        current.push(i);
        visit(current);
        if current.len() < max_size {
            enumerate_subsets(n, max_size, i + 1, current, visit);
        }
        current.pop();
    }
}

/// Solve the KKT system of `min 1/2 z'Qz + q'z  s.t.  a_i.z = -b_i` for the
/// given active subset. Returns `None` when the system is singular.
fn solve_kkt(
    q_mat: &DMatrix<f64>,
    q_vec: &DVector<f64>,
    rows: &[(Vec<f64>, f64)],
    subset: &[usize],
) -> Option<DVector<f64>> {
    let dim = q_mat.nrows();
    let k = subset.len();
    let total = dim + k;
    let mut m = DMatrix::zeros(total, total);
    let mut rhs = DVector::zeros(total);
    m.view_mut((0, 0), (dim, dim)).copy_from(q_mat);
    for (row_idx, &ci) in subset.iter().enumerate() {
        let (a, b) = &rows[ci];
        for j in 0..dim {
            m[(dim + row_idx, j)] = a[j];
            m[(j, dim + row_idx)] = -a[j];
        }
        rhs[dim + row_idx] = -b;
    }
    for j in 0..dim {
        rhs[j] = -q_vec[j];
    }
    let sol = m.lu().solve(&rhs)?;
    Some(sol.rows(0, dim).into_owned())
}

/// Dense grid search over the box: the best objective among grid points
/// satisfying every barrier constraint. Independent route used by the
/// `qp-check` verification command; intentionally shares nothing with
/// [`FilterProblem::solve`].
pub fn grid_oracle(
    p: &DMatrix<f64>,
    u_rl: &[f64],
    constraints: &[BarrierConstraint],
    lo: &[f64],
    hi: &[f64],
    points_per_axis: usize,
) -> Option<(Vec<f64>, f64)> {
    let m = u_rl.len();
    assert_eq!(m, 2, "grid oracle is written for m = 2");
    let mut best: Option<(Vec<f64>, f64)> = None;
    for i in 0..points_per_axis {
        let x = lo[0] + (hi[0] - lo[0]) * i as f64 / (points_per_axis - 1) as f64;
        for j in 0..points_per_axis {
            let y = lo[1] + (hi[1] - lo[1]) * j as f64 / (points_per_axis - 1) as f64;
            let ok = constraints
                .iter()
                .all(|c| c.coeff[0] * x + c.coeff[1] * y + c.rhs >= 0.0);
            if !ok {
                continue;
            }
            let d = DVector::from_column_slice(&[x - u_rl[0], y - u_rl[1]]);
            let obj = 0.5 * (d.transpose() * p * &d)[(0, 0)];
            if best.as_ref().map_or(true, |(_, b)| obj < *b) {
                best = Some((vec![x, y], obj));
            }
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn unit_box(m: usize) -> (Vec<f64>, Vec<f64>) {
        (vec![-1.0; m], vec![1.0; m])
    }

    fn objective(p: &DMatrix<f64>, u: &[f64], r: &[f64]) -> f64 {
        let d = DVector::from_column_slice(&[u[0] - r[0], u[1] - r[1]]);
        0.5 * (d.transpose() * p * &d)[(0, 0)]
    }

    #[test]
    fn feasible_action_passes_through() {
        let (lo, hi) = unit_box(2);
        let c = BarrierConstraint { coeff: vec![1.0, 0.0], rhs: 5.0 };
        let prob = FilterProblem::with_identity_weight(vec![0.3, -0.4], vec![c], lo, hi).unwrap();
        let res = prob.solve();
        assert!(!res.intervened);
        assert_eq!(res.u_safe, vec![0.3, -0.4]);
        assert_eq!(res.slack_used, 0.0);
    }

    #[test]
    fn violated_halfplane_projects_closed_form() {
        // P = I, one violated constraint, no box binding: Euclidean
        // projection onto the half-plane.
        let (lo, hi) = unit_box(2);
        let a = [0.6, -0.8];
        let b = -0.3;
        let u_rl = [0.9, 0.5];
        let c = BarrierConstraint { coeff: a.to_vec(), rhs: b };
        let viol = a[0] * u_rl[0] + a[1] * u_rl[1] + b;
        assert!(viol < 0.0);
        let norm2 = a[0] * a[0] + a[1] * a[1];
        let expect = [u_rl[0] - viol / norm2 * a[0], u_rl[1] - viol / norm2 * a[1]];

        let prob =
            FilterProblem::with_identity_weight(u_rl.to_vec(), vec![c], lo, hi).unwrap();
        let res = prob.solve();
        assert!(res.intervened);
        assert_relative_eq!(res.u_safe[0], expect[0], epsilon = 1e-10);
        assert_relative_eq!(res.u_safe[1], expect[1], epsilon = 1e-10);
        assert_eq!(res.active_constraints, vec![0]);
        assert_eq!(res.slack_used, 0.0);
    }

    fn random_instance(r: &mut ChaCha8Rng) -> (DMatrix<f64>, Vec<f64>, Vec<BarrierConstraint>, Vec<f64>, Vec<f64>) {
        // random SPD weight: A'A + eps I
        let a = DMatrix::from_fn(2, 2, |_, _| r.gen_range(-1.0..1.0));
        let p = &a.transpose() * &a + DMatrix::identity(2, 2) * 0.2;
        let u_rl = vec![r.gen_range(-1.5..1.5), r.gen_range(-1.5..1.5)];
        let nc = r.gen_range(0..=6);
        let cons = (0..nc)
            .map(|_| BarrierConstraint {
                coeff: vec![r.gen_range(-2.0..2.0), r.gen_range(-2.0..2.0)],
                rhs: r.gen_range(-1.0..2.0),
            })
            .collect();
        let (lo, hi) = unit_box(2);
        (p, u_rl, cons, lo, hi)
    }

    #[test]
    fn matches_grid_oracle_on_random_instances() {
        let mut r = ChaCha8Rng::seed_from_u64(7);
        for trial in 0..100 {
            let (p, u_rl, cons, lo, hi) = random_instance(&mut r);
            let prob = FilterProblem::new(p.clone(), u_rl.clone(), cons.clone(), lo.clone(), hi.clone()).unwrap();
            let res = prob.solve();
            if res.slack_used > 0.0 {
                // grid oracle only covers the feasible case
                continue;
            }
            let solver_obj = objective(&p, &res.u_safe, &u_rl);
            if let Some((_, grid_obj)) = grid_oracle(&p, &u_rl, &cons, &lo, &hi, 401) {
                assert!(
                    solver_obj <= grid_obj + 1e-9,
                    "trial {trial}: solver {solver_obj} > grid {grid_obj}"
                );
            }
            for c in &cons {
                let v = c.coeff[0] * res.u_safe[0] + c.coeff[1] * res.u_safe[1] + c.rhs;
                assert!(v >= -1e-8, "trial {trial}: residual {v}");
            }
        }
    }

    #[test]
    fn infeasible_problem_uses_shared_slack() {
        let (lo, hi) = unit_box(2);
        // u_1 >= 2 is impossible inside the box
        let c = BarrierConstraint { coeff: vec![1.0, 0.0], rhs: -2.0 };
        let prob = FilterProblem::with_identity_weight(vec![0.0, 0.0], vec![c], lo, hi).unwrap();
        let res = prob.solve();
        assert!(res.slack_used > 0.0);
        assert!(res.u_safe[0] <= 1.0 + 1e-12 && res.u_safe[0] >= -1.0 - 1e-12);
        // with the slack the relaxed constraint holds
        let v = res.u_safe[0] - 2.0 + res.slack_used;
        assert!(v >= -1e-6, "relaxed residual {v}");
        // the penalty pushes u to the box face nearest feasibility
        assert_relative_eq!(res.u_safe[0], 1.0, epsilon = 1e-6);
    }

    #[test]
    fn sentinel_constraint_forces_slack_and_box_respected() {
        let (lo, hi) = unit_box(2);
        let c = BarrierConstraint { coeff: vec![0.0, 0.0], rhs: -1e30 };
        let prob = FilterProblem::with_identity_weight(vec![0.4, 0.2], vec![c], lo, hi).unwrap();
        let res = prob.solve();
        assert!(res.slack_used > 0.0);
        for j in 0..2 {
            assert!(res.u_safe[j] >= -1.0 && res.u_safe[j] <= 1.0);
        }
    }

    #[test]
    fn rejects_non_spd_weight() {
        let (lo, hi) = unit_box(2);
        let p = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert!(matches!(
            FilterProblem::new(p, vec![0.0, 0.0], vec![], lo, hi),
            Err(QpError::NotPositiveDefinite)
        ));
        let p2 = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, -0.5, 1.0]);
        assert!(FilterProblem::new(p2, vec![0.0, 0.0], vec![], vec![-1.0, -1.0], vec![1.0, 1.0]).is_err());
    }

    #[test]
    fn rejects_bad_box() {
        assert!(matches!(
            FilterProblem::with_identity_weight(vec![0.0, 0.0], vec![], vec![1.0, -1.0], vec![-1.0, 1.0]),
            Err(QpError::BadBox)
        ));
    }

    #[test]
    fn u_rl_outside_box_gets_clamped_to_box() {
        let (lo, hi) = unit_box(2);
        let prob = FilterProblem::with_identity_weight(vec![3.0, -4.0], vec![], lo, hi).unwrap();
        let res = prob.solve();
        assert_relative_eq!(res.u_safe[0], 1.0, epsilon = 1e-10);
        assert_relative_eq!(res.u_safe[1], -1.0, epsilon = 1e-10);
        assert!(res.intervened);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn solution_always_inside_box(seed in 0u64..5000) {
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            let (p, u_rl, cons, lo, hi) = random_instance(&mut r);
            let prob = FilterProblem::new(p, u_rl, cons, lo.clone(), hi.clone()).unwrap();
            let res = prob.solve();
            for j in 0..2 {
                prop_assert!(res.u_safe[j] >= lo[j] - 1e-12 && res.u_safe[j] <= hi[j] + 1e-12);
            }
            if res.slack_used == 0.0 {
                prop_assert!(res.u_safe.iter().all(|v| v.is_finite()));
            }
        }

        #[test]
        fn solve_is_idempotent(seed in 0u64..2000) {
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            let (p, u_rl, cons, lo, hi) = random_instance(&mut r);
            let prob = FilterProblem::new(p.clone(), u_rl, cons.clone(), lo.clone(), hi.clone()).unwrap();
            let res = prob.solve();
            if res.slack_used > 0.0 {
                return Ok(());
            }
            let prob2 = FilterProblem::new(p, res.u_safe.clone(), cons, lo, hi).unwrap();
            let res2 = prob2.solve();
            for j in 0..2 {
                prop_assert!((res2.u_safe[j] - res.u_safe[j]).abs() < 1e-10);
            }
        }

        #[test]
        fn scaling_weight_matrix_does_not_change_minimizer(seed in 0u64..2000, scale in 0.1f64..50.0) {
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            let (p, u_rl, cons, lo, hi) = random_instance(&mut r);
            let prob = FilterProblem::new(p.clone(), u_rl.clone(), cons.clone(), lo.clone(), hi.clone()).unwrap();
            let scaled = FilterProblem::new(p * scale, u_rl, cons, lo, hi).unwrap();
            let a = prob.solve();
            let b = scaled.solve();
            if a.slack_used == 0.0 && b.slack_used == 0.0 {
                for j in 0..2 {
                    prop_assert!((a.u_safe[j] - b.u_safe[j]).abs() < 1e-8);
                }
            }
        }
    }
}
