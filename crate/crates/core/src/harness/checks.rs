//! Self-verification protocols exposed as CLI commands: the analytic
//! gradients against finite differences, and the QP solver against a dense
//! grid oracle plus the closed-form projection case.

use crate::cbf::BarrierConstraint;
use crate::nn::{gradient_check, Mlp};
use crate::qpfilter::{grid_oracle, FilterProblem};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Outcome of the gradient-verification protocol.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GradCheckOutcome {
    pub nets: u32,
    pub params_checked: usize,
    pub max_param_rel_err: f64,
    pub max_input_rel_err: f64,
    pub tolerance: f64,
    pub pass: bool,
}

/// Check analytic parameter and input gradients of random networks (up to
/// three hidden layers, width up to 32) against central finite differences.
pub fn run_gradcheck(nets: u32, seed: u64) -> GradCheckOutcome {
    let tolerance = 1e-5;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut max_param = 0.0f64;
    let mut max_input = 0.0f64;
    let mut params_checked = 0usize;
    for _ in 0..nets {
        let depth = rng.gen_range(1..=3usize);
        let mut sizes = vec![rng.gen_range(1..=8usize)];
        for _ in 0..depth {
            sizes.push(rng.gen_range(2..=32usize));
        }
        sizes.push(rng.gen_range(1..=8usize));
        let net = Mlp::new(&sizes, &mut rng);
        let input: Vec<f64> = (0..sizes[0]).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let og: Vec<f64> = (0..*sizes.last().unwrap())
            .map(|_| rng.gen_range(-1.0..1.0))
            .collect();
        let rep = gradient_check(&net, &input, &og, 1e-5);
        max_param = max_param.max(rep.max_param_rel_err);
        max_input = max_input.max(rep.max_input_rel_err);
        params_checked += rep.params_checked;
    }
    GradCheckOutcome {
        nets,
        params_checked,
        max_param_rel_err: max_param,
        max_input_rel_err: max_input,
        tolerance,
        pass: max_param < tolerance && max_input < tolerance,
    }
}

/// Outcome of the solver-vs-grid-oracle protocol.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QpCheckOutcome {
    pub instances: u32,
    /// Worst solver-minus-grid objective gap (negative means the solver
    /// beat every feasible grid point, as it should).
    pub max_objective_gap: f64,
    /// Most negative barrier residual at any returned solution.
    pub min_residual: f64,
    /// Error of the analytic half-plane projection case.
    pub projection_error: f64,
    pub pass: bool,
}

/// Compare the active-set solver against a dense 401x401 grid over the box
/// on random two-dimensional instances, and against the closed-form
/// half-plane projection.
pub fn run_qp_check(instances: u32, seed: u64) -> QpCheckOutcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut max_gap = f64::NEG_INFINITY;
    let mut min_residual = f64::INFINITY;

    for _ in 0..instances {
        let a = DMatrix::from_fn(2, 2, |_, _| rng.gen_range(-1.0..1.0));
        let p = &a.transpose() * &a + DMatrix::identity(2, 2) * 0.2;
        let u_rl = vec![rng.gen_range(-1.5..1.5), rng.gen_range(-1.5..1.5)];
        let nc = rng.gen_range(0..=6usize);
        let cons: Vec<BarrierConstraint> = (0..nc)
            .map(|_| BarrierConstraint {
                coeff: vec![rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)],
                rhs: rng.gen_range(-1.0..2.0),
            })
            .collect();
        let lo = vec![-1.0, -1.0];
        let hi = vec![1.0, 1.0];

        let prob = FilterProblem::new(p.clone(), u_rl.clone(), cons.clone(), lo.clone(), hi.clone())
            .expect("valid instance");
        let res = prob.solve();
        if res.slack_used > 0.0 {
            continue; // grid oracle covers the feasible case only
        }
        for c in &cons {
            let v = c.coeff[0] * res.u_safe[0] + c.coeff[1] * res.u_safe[1] + c.rhs;
            min_residual = min_residual.min(v);
        }
        if let Some((_, grid_obj)) = grid_oracle(&p, &u_rl, &cons, &lo, &hi, 401) {
            let d = DVector::from_column_slice(&[res.u_safe[0] - u_rl[0], res.u_safe[1] - u_rl[1]]);
            let solver_obj = 0.5 * (d.transpose() * &p * &d)[(0, 0)];
            max_gap = max_gap.max(solver_obj - grid_obj);
        }
    }

    // closed-form projection: P = I, a single violated half-plane
    let a = [0.6, -0.8];
    let b = -0.3;
    let u_rl = [0.9, 0.5];
    let viol = a[0] * u_rl[0] + a[1] * u_rl[1] + b;
    let norm2 = a[0] * a[0] + a[1] * a[1];
    let expect = [u_rl[0] - viol / norm2 * a[0], u_rl[1] - viol / norm2 * a[1]];
    let prob = FilterProblem::with_identity_weight(
        u_rl.to_vec(),
        vec![BarrierConstraint { coeff: a.to_vec(), rhs: b }],
        vec![-2.0, -2.0],
        vec![2.0, 2.0],
    )
    .expect("projection instance");
    let res = prob.solve();
    let projection_error = ((res.u_safe[0] - expect[0]).powi(2)
        + (res.u_safe[1] - expect[1]).powi(2))
    .sqrt();

    let pass = max_gap <= 1e-9 && min_residual >= -1e-8 && projection_error < 1e-10;
    QpCheckOutcome {
        instances,
        max_objective_gap: max_gap,
        min_residual: if min_residual.is_finite() { min_residual } else { 0.0 },
        projection_error,
        pass,
    }
}
