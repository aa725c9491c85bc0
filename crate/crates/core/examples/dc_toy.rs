//! DC iteration on the scalar problem min u² − |u|.
use std::convert::Infallible;

use l0dc::dc::{dc_solve, ConvexSolve, DcOptions, DcProblem};

struct Scalar;

impl DcProblem for Scalar {
    type Error = Infallible;

    fn subgradient(&mut self, u: &[f64]) -> Result<Vec<f64>, Infallible> {
        Ok(vec![if u[0] == 0.0 { 0.0 } else { u[0].signum() }])
    }

    fn solve_convex(&mut self, s: &[f64], _warm: &[f64], _allowance: Option<f64>) -> Result<ConvexSolve, Infallible> {
        Ok(ConvexSolve {
            u: vec![s[0] / 2.0],
            residual: 0.0,
            inner_iterations: 1,
        })
    }

    fn objective(&self, u: &[f64]) -> f64 {
        u[0] * u[0] - u[0].abs()
    }

    fn stationarity_residual(&self, u: &[f64], s: &[f64]) -> f64 {
        (2.0 * u[0] - s[0]).abs()
    }
}

fn main() {
    for start in [3.0, -0.1, 0.0] {
        let state = dc_solve(&mut Scalar, &[start], &DcOptions::default()).unwrap();
        println!(
            "u0 = {start:5}: u = {:5} after {} iterations, status {:?}",
            state.u[0], state.k, state.status
        );
    }
}
