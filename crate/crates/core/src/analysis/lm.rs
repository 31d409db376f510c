//! Damped least squares (Levenberg-Marquardt with Marquardt's diagonal scaling).

use nalgebra::{DMatrix, DVector};

/// A nonlinear least-squares problem `min Σ r_i(p)²`.
pub trait Problem {
    fn residual_count(&self) -> usize;

    fn residuals(&self, p: &[f64], out: &mut [f64]);

    /// Jacobian `∂r_i/∂p_j`. Defaults to central differences.
    fn jacobian(&self, p: &[f64], jac: &mut DMatrix<f64>) {
        let n = self.residual_count();
        let mut plus = vec![0.0; n];
        let mut minus = vec![0.0; n];
        let mut q = p.to_vec();
        for j in 0..p.len() {
            let h = 1e-7 * p[j].abs().max(1.0);
            q[j] = p[j] + h;
            self.residuals(&q, &mut plus);
            q[j] = p[j] - h;
            self.residuals(&q, &mut minus);
            q[j] = p[j];
            for i in 0..n {
                jac[(i, j)] = (plus[i] - minus[i]) / (2.0 * h);
            }
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct LmOptions {
    pub max_iterations: usize,
    /// Relative reduction of the sum of squares below which the fit stops.
    pub ftol: f64,
    /// Relative parameter step below which the fit stops.
    pub xtol: f64,
    pub initial_damping: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        Self {
            max_iterations: 500,
            ftol: 1e-15,
            xtol: 1e-14,
            initial_damping: 1e-3,
        }
    }
}

#[derive(Clone, Debug)]
pub struct LmOutcome {
    pub params: Vec<f64>,
    /// Parameter covariance scaled by the reduced sum of squares.
    pub covariance: Option<DMatrix<f64>>,
    pub ssr: f64,
    pub residual_count: usize,
    pub iterations: usize,
    pub converged: bool,
}

impl LmOutcome {
    pub fn sigmas(&self) -> Vec<f64> {
        match &self.covariance {
            Some(c) => (0..self.params.len()).map(|i| c[(i, i)].max(0.0).sqrt()).collect(),
            None => vec![f64::NAN; self.params.len()],
        }
    }

    pub fn residual_rms(&self) -> f64 {
        (self.ssr / self.residual_count.max(1) as f64).sqrt()
    }
}

fn sum_sq(r: &[f64]) -> f64 {
    r.iter().map(|x| x * x).sum()
}

pub fn minimize<P: Problem + ?Sized>(problem: &P, p0: &[f64], opts: LmOptions) -> LmOutcome {
    let n = problem.residual_count();
    let m = p0.len();
    let mut p = p0.to_vec();
    let mut r = vec![0.0; n];
    problem.residuals(&p, &mut r);
    let mut ssr = sum_sq(&r);
    let mut jac = DMatrix::<f64>::zeros(n, m);
    let mut lambda = opts.initial_damping;
    let mut converged = ssr == 0.0;
    let mut iterations = 0;
    let mut trial = vec![0.0; n];

    while !converged && iterations < opts.max_iterations && ssr.is_finite() {
        iterations += 1;
        problem.jacobian(&p, &mut jac);
        let jt = jac.transpose();
        let a = &jt * &jac;
        let g = &jt * DVector::from_column_slice(&r);
        let diag_floor = a.diagonal().max() * 1e-15 + f64::MIN_POSITIVE;

        let mut improved = false;
        while lambda < 1e20 {
            let mut damped = a.clone();
            for j in 0..m {
                damped[(j, j)] += lambda * a[(j, j)].max(diag_floor);
            }
            let step = match damped.cholesky() {
                Some(ch) => ch.solve(&(-&g)),
                None => {
                    lambda *= 10.0;
                    continue;
                }
            };
            let candidate: Vec<f64> = p.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
            problem.residuals(&candidate, &mut trial);
            let new_ssr = sum_sq(&trial);
            if new_ssr.is_finite() && new_ssr <= ssr {
                let small_step = step
                    .iter()
                    .zip(&p)
                    .all(|(d, x)| d.abs() <= opts.xtol * (x.abs() + opts.xtol));
                let small_gain = ssr - new_ssr <= opts.ftol * ssr;
                p = candidate;
                std::mem::swap(&mut r, &mut trial);
                ssr = new_ssr;
                lambda = (lambda / 3.0).max(1e-15);
                improved = true;
                if small_step || small_gain || ssr == 0.0 {
                    converged = true;
                }
                break;
            }
            lambda *= 4.0;
        }
        if !improved {
            // No downhill step exists at any damping: the gradient vanishes to
            // working precision, which is a stationary point.
            converged = g.amax() <= 1e-8 * (1.0 + ssr.sqrt()) || lambda >= 1e20;
            break;
        }
    }

    problem.jacobian(&p, &mut jac);
    let a = jac.transpose() * &jac;
    let dof = n.saturating_sub(m).max(1) as f64;
    let covariance = a.try_inverse().map(|inv| inv * (ssr / dof));
    LmOutcome {
        params: p,
        covariance,
        ssr,
        residual_count: n,
        iterations,
        converged,
    }
}
