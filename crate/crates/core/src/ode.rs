//! Patient-specific linear latent dynamics `mu'(t) = A mu(t) + c`.
//!
//! Each encoded visit seeds one analytic solution; the solutions are pooled
//! into a single trajectory by an inverse-variance weighted average whose
//! weights depend on the evaluation time.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::linalg::{determinant, expm_series, solve};
use crate::numerics::{Mat, Real};

/// Below this `|det A|` the solution avoids `A^{-1}`.
pub const SINGULAR_DET_THRESHOLD: f64 = 1e-8;
/// Variance used when fewer than two intermediate solutions exist.
pub const FALLBACK_VARIANCE: f64 = 1.0;
/// Lower bound on a per-dimension variance before inversion.
pub const VARIANCE_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Instrument {
    R,
    S,
}

impl Instrument {
    pub fn label(self) -> &'static str {
        match self {
            Instrument::R => "R",
            Instrument::S => "S",
        }
    }
}

/// `eta = {A, c}`. `A` is a per-month rate matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct OdeParams<T> {
    pub a: Mat<T>,
    pub c: Vec<T>,
    pub homogeneous: bool,
}

impl<T: Real> OdeParams<T> {
    pub fn new(a: Mat<T>, c: Vec<T>, homogeneous: bool) -> Result<Self> {
        if !a.is_square() || a.rows() == 0 || a.rows() != c.len() {
            return Err(Error::config(format!(
                "ODE system needs a square A matching c, got {}x{} and {}",
                a.rows(),
                a.cols(),
                c.len()
            )));
        }
        if homogeneous && c.iter().any(|v| v.value() != 0.0) {
            return Err(Error::config("homogeneous ODE system with nonzero offset"));
        }
        Ok(Self { a, c, homogeneous })
    }

    /// `mu' = A mu` with `c` fixed at zero.
    pub fn homogeneous(a: Mat<T>) -> Result<Self> {
        let zero = a.as_slice().first().map(|x| x.lift(0.0)).ok_or_else(|| {
            Error::config("empty ODE system matrix")
        })?;
        let c = vec![zero; a.rows()];
        Self::new(a, c, true)
    }

    pub fn dim(&self) -> usize {
        self.a.rows()
    }

    pub fn values(&self) -> OdeParams<f64> {
        OdeParams {
            a: self.a.values(),
            c: self.c.iter().map(Real::value).collect(),
            homogeneous: self.homogeneous,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InitialCondition<T> {
    /// Months.
    pub time: f64,
    pub value: Vec<T>,
    pub source: Instrument,
}

/// Pooled trajectory at a set of evaluation times.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryEstimate<T> {
    pub times: Vec<f64>,
    /// `values[t][dim]`.
    pub values: Vec<Vec<T>>,
    /// `weights[t][k][dim]`: weight of the solution started at initial
    /// condition `k`.
    pub weights: Vec<Vec<Vec<f64>>>,
}

impl<T: Real> TrajectoryEstimate<T> {
    /// Value at an evaluation time (exact match).
    pub fn at(&self, t: f64) -> Option<&[T]> {
        self.times
            .iter()
            .position(|&s| s == t)
            .map(|i| self.values[i].as_slice())
    }
}

/// Closed-form exponential of a 2x2 matrix from the eigenvalue structure of
/// its characteristic polynomial.
pub fn expm_2x2(m: &Mat<f64>) -> Mat<f64> {
    assert!(m.rows() == 2 && m.cols() == 2);
    let (a, b, c, d) = (m.get(0, 0), m.get(0, 1), m.get(1, 0), m.get(1, 1));
    let mean = 0.5 * (a + d);
    let half_diff = 0.5 * (a - d);
    // Eigenvalues are mean ± sqrt(disc).
    let disc = half_diff * half_diff + b * c;
    let (even, odd) = if disc.abs() < 1e-14 {
        // Repeated eigenvalue: series of cosh/sinh(x)/x about 0.
        (1.0 + 0.5 * disc, 1.0 + disc / 6.0)
    } else if disc > 0.0 {
        let s = disc.sqrt();
        (s.cosh(), s.sinh() / s)
    } else {
        let s = (-disc).sqrt();
        (s.cos(), s.sin() / s)
    };
    let scale = mean.exp();
    // exp(M) = e^mean * (even * I + odd * (M - mean I))
    Mat::from_vec(
        2,
        2,
        vec![
            scale * (even + odd * half_diff),
            scale * odd * b,
            scale * odd * c,
            scale * (even - odd * half_diff),
        ],
    )
}

/// Matrix exponential. Forward-only 2x2 evaluation uses the closed form;
/// everything else (including all gradient paths) uses the series.
pub fn matrix_exp<T: Real>(m: &Mat<T>) -> Result<Mat<T>> {
    if !m.is_square() || m.rows() == 0 {
        return Err(Error::config("matrix exponential needs a nonempty square matrix"));
    }
    if m.as_slice().iter().any(|x| !x.value().is_finite()) {
        return Err(Error::numeric("matrix_exp"));
    }
    let out = if T::FORWARD_ONLY && m.rows() == 2 {
        let like = m.as_slice()[0];
        expm_2x2(&m.values()).map(|&v| like.lift(v))
    } else {
        expm_series(m)
    };
    if out.as_slice().iter().any(|x| !x.value().is_finite()) {
        return Err(Error::numeric("matrix_exp"));
    }
    Ok(out)
}

/// Flow of the system over one time step `dt`.
#[derive(Debug, Clone)]
struct Flow<T> {
    expm: Mat<T>,
    /// Offset `dt * phi1(A dt) * c` (singular branch only).
    offset: Option<Vec<T>>,
}

/// Evaluates solutions of one ODE system for many `(initial value, dt)`
/// pairs, caching the flow per distinct step.
pub struct Propagator<'a, T> {
    params: &'a OdeParams<T>,
    /// `A^{-1} c` when the system is inhomogeneous and `A` is invertible.
    equilibrium: Option<Vec<T>>,
    singular: bool,
    cache: Vec<(u64, Flow<T>)>,
}

impl<'a, T: Real> Propagator<'a, T> {
    pub fn new(params: &'a OdeParams<T>) -> Self {
        let (equilibrium, singular) = if params.homogeneous {
            (None, false)
        } else {
            let det = determinant(&params.a.values());
            if det.abs() < SINGULAR_DET_THRESHOLD {
                (None, true)
            } else {
                (Some(solve(&params.a, &params.c).0), false)
            }
        };
        Self {
            params,
            equilibrium,
            singular,
            cache: Vec::new(),
        }
    }

    /// Force the singularity-free branch regardless of `det A`.
    pub fn singular_form(params: &'a OdeParams<T>) -> Self {
        Self {
            params,
            equilibrium: None,
            singular: !params.homogeneous,
            cache: Vec::new(),
        }
    }

    fn flow(&mut self, dt: f64) -> Result<&Flow<T>> {
        let key = dt.to_bits();
        if let Some(pos) = self.cache.iter().position(|(k, _)| *k == key) {
            return Ok(&self.cache[pos].1);
        }
        let d = self.params.dim();
        let flow = if self.singular {
            // exp([[A dt, c dt], [0, 0]]) = [[exp(A dt), dt phi1(A dt) c], [0, 1]]
            let like = self.params.a.as_slice()[0];
            let zero = like.lift(0.0);
            let mut aug = Mat::from_vec(d + 1, d + 1, vec![zero; (d + 1) * (d + 1)]);
            for i in 0..d {
                for j in 0..d {
                    aug.set(i, j, self.params.a.get(i, j) * dt);
                }
                aug.set(i, d, self.params.c[i] * dt);
            }
            let e = matrix_exp(&aug)?;
            let mut expm = Vec::with_capacity(d * d);
            for i in 0..d {
                expm.extend_from_slice(&e.row(i)[..d]);
            }
            Flow {
                expm: Mat::from_vec(d, d, expm),
                offset: Some((0..d).map(|i| e.get(i, d)).collect()),
            }
        } else {
            Flow {
                expm: matrix_exp(&self.params.a.scale(dt))?,
                offset: None,
            }
        };
        self.cache.push((key, flow));
        Ok(&self.cache.last().expect("just pushed").1)
    }

    /// Solution at `t` of the system started from `value` at time `k`.
    pub fn solve(&mut self, value: &[T], k: f64, t: f64) -> Result<Vec<T>> {
        if value.len() != self.params.dim() {
            return Err(Error::config(format!(
                "initial value has dimension {}, system has {}",
                value.len(),
                self.params.dim()
            )));
        }
        if !(k.is_finite() && t.is_finite()) {
            return Err(Error::Precondition("non-finite time".into()));
        }
        let equilibrium = self.equilibrium.clone();
        let flow = self.flow(t - k)?;
        Ok(match (&equilibrium, &flow.offset) {
            // exp(A dt)(A^{-1}c + mu_k) - A^{-1}c
            (Some(eq), _) => {
                let shifted: Vec<T> = value.iter().zip(eq).map(|(&v, &e)| v + e).collect();
                flow.expm
                    .matvec(&shifted)
                    .into_iter()
                    .zip(eq)
                    .map(|(v, &e)| v - e)
                    .collect()
            }
            (None, Some(offset)) => flow
                .expm
                .matvec(value)
                .into_iter()
                .zip(offset)
                .map(|(v, &o)| v + o)
                .collect(),
            (None, None) => flow.expm.matvec(value),
        })
    }
}

/// `mu(t)` for the initial value problem `mu(k) = init.value`.
pub fn solve_ivp<T: Real>(params: &OdeParams<T>, init: &InitialCondition<T>, t: f64) -> Result<Vec<T>> {
    Propagator::new(params).solve(&init.value, init.time, t)
}

/// Per-dimension unbiased sample variance; [`FALLBACK_VARIANCE`] with fewer
/// than two solutions.
pub fn estimate_solution_variance(solutions: &[Vec<f64>], dim: usize) -> Vec<f64> {
    if solutions.len() < 2 {
        return vec![FALLBACK_VARIANCE; dim];
    }
    let n = solutions.len() as f64;
    (0..dim)
        .map(|j| {
            let mean = solutions.iter().map(|s| s[j]).sum::<f64>() / n;
            solutions.iter().map(|s| (s[j] - mean).powi(2)).sum::<f64>() / (n - 1.0)
        })
        .collect()
}

/// Normalized inverse-variance weights `[k][dim]` at evaluation time `t`.
///
/// The variance of the solution started at `k` is estimated from the
/// solutions, evaluated at `t`, of all initial conditions strictly between
/// `k` and `t`.
pub fn inverse_variance_weights(init_times: &[f64], solutions_at_t: &[Vec<f64>], t: f64, dim: usize) -> Vec<Vec<f64>> {
    let inverse: Vec<Vec<f64>> = init_times
        .iter()
        .map(|&k| {
            let (lo, hi) = if k <= t { (k, t) } else { (t, k) };
            let between: Vec<Vec<f64>> = init_times
                .iter()
                .zip(solutions_at_t)
                .filter(|(&j, _)| lo < j && j < hi)
                .map(|(_, s)| s.clone())
                .collect();
            estimate_solution_variance(&between, dim)
                .into_iter()
                .map(|v| 1.0 / v.max(VARIANCE_FLOOR))
                .collect()
        })
        .collect();
    let totals: Vec<f64> = (0..dim)
        .map(|j| inverse.iter().map(|w| w[j]).sum())
        .collect();
    inverse
        .into_iter()
        .map(|w| w.iter().zip(&totals).map(|(x, total)| x / total).collect())
        .collect()
}

/// Inverse-variance weighted combination of the solutions started at every
/// initial condition.
pub fn combined_trajectory<T: Real>(
    params: &OdeParams<T>,
    inits: &[InitialCondition<T>],
    eval_times: &[f64],
) -> Result<TrajectoryEstimate<T>> {
    combined_trajectory_with_weights(params, inits, eval_times, None)
}

/// As [`combined_trajectory`], optionally reusing weights computed earlier
/// (`weights[t][k][dim]`) instead of estimating them.
pub fn combined_trajectory_with_weights<T: Real>(
    params: &OdeParams<T>,
    inits: &[InitialCondition<T>],
    eval_times: &[f64],
    fixed_weights: Option<&[Vec<Vec<f64>>]>,
) -> Result<TrajectoryEstimate<T>> {
    if inits.is_empty() {
        return Err(Error::Precondition(
            "combined trajectory needs at least one initial condition".into(),
        ));
    }
    if eval_times.iter().any(|t| !t.is_finite()) {
        return Err(Error::Precondition("non-finite evaluation time".into()));
    }
    if let Some(w) = fixed_weights {
        if w.len() != eval_times.len() || w.iter().any(|wt| wt.len() != inits.len()) {
            return Err(Error::config("fixed weights do not match trajectory shape"));
        }
    }
    let dim = params.dim();
    let init_times: Vec<f64> = inits.iter().map(|i| i.time).collect();
    let mut prop = Propagator::new(params);

    let mut values = Vec::with_capacity(eval_times.len());
    let mut weights = Vec::with_capacity(eval_times.len());
    for (ti, &t) in eval_times.iter().enumerate() {
        let solutions = inits
            .iter()
            .map(|init| prop.solve(&init.value, init.time, t))
            .collect::<Result<Vec<_>>>()?;
        let w = match fixed_weights {
            Some(fixed) => fixed[ti].clone(),
            None => {
                let plain: Vec<Vec<f64>> = solutions
                    .iter()
                    .map(|s| s.iter().map(Real::value).collect())
                    .collect();
                inverse_variance_weights(&init_times, &plain, t, dim)
            }
        };
        let pooled = (0..dim)
            .map(|j| {
                let coeffs: Vec<f64> = w.iter().map(|wk| wk[j]).collect();
                let column: Vec<T> = solutions.iter().map(|s| s[j]).collect();
                T::linear_combination(&coeffs, &column)
            })
            .collect();
        values.push(pooled);
        weights.push(w);
    }
    Ok(TrajectoryEstimate {
        times: eval_times.to_vec(),
        values,
        weights,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m2(a: f64, b: f64, c: f64, d: f64) -> Mat<f64> {
        Mat::from_vec(2, 2, vec![a, b, c, d])
    }

    fn init(time: f64, value: Vec<f64>) -> InitialCondition<f64> {
        InitialCondition {
            time,
            value,
            source: Instrument::R,
        }
    }

    #[test]
    fn expm_trivial_cases() {
        assert_eq!(matrix_exp(&m2(0.0, 0.0, 0.0, 0.0)).unwrap(), m2(1.0, 0.0, 0.0, 1.0));
        let e = matrix_exp(&m2(1.0, 0.0, 0.0, 2.0)).unwrap();
        assert!((e.get(0, 0) - 1f64.exp()).abs() < 1e-15);
        assert!((e.get(1, 1) - 2f64.exp()).abs() < 1e-14);
        assert_eq!(matrix_exp(&m2(0.0, 1.0, 0.0, 0.0)).unwrap(), m2(1.0, 1.0, 0.0, 1.0));
        assert_eq!(expm_series(&m2(0.0, 1.0, 0.0, 0.0)), m2(1.0, 1.0, 0.0, 1.0));
    }

    #[test]
    fn expm_overflow_is_numeric_error() {
        assert!(matches!(
            matrix_exp(&m2(800.0, 0.0, 0.0, 0.0)),
            Err(Error::Numeric { .. })
        ));
    }

    #[test]
    fn closed_form_covers_all_eigenvalue_cases() {
        for m in [
            m2(0.3, 0.8, 0.5, -0.2),  // distinct real
            m2(0.1, -0.9, 0.7, 0.05), // complex pair
            m2(0.4, 1.0, 0.0, 0.4),   // repeated
        ] {
            let closed = expm_2x2(&m);
            let series = expm_series(&m);
            for (a, b) in closed.as_slice().iter().zip(series.as_slice()) {
                assert!((a - b).abs() < 1e-13, "{m:?}");
            }
        }
    }

    #[test]
    fn constant_solution_for_zero_system() {
        let p = OdeParams::new(m2(0.0, 0.0, 0.0, 0.0), vec![0.0, 0.0], false).unwrap();
        let got = solve_ivp(&p, &init(2.0, vec![0.4, -1.0]), 9.5).unwrap();
        assert_eq!(got, vec![0.4, -1.0]);
    }

    #[test]
    fn scalar_exponential() {
        let p = OdeParams::homogeneous(Mat::from_vec(1, 1, vec![1.0])).unwrap();
        let got = solve_ivp(&p, &init(0.0, vec![1.0]), 1.0).unwrap();
        assert!((got[0] - std::f64::consts::E).abs() < 1e-12);
    }

    #[test]
    fn zero_matrix_with_offset_is_linear_in_elapsed_time() {
        let p = OdeParams::new(m2(0.0, 0.0, 0.0, 0.0), vec![0.5, -1.0], false).unwrap();
        let got = solve_ivp(&p, &init(3.0, vec![1.0, 2.0]), 7.0).unwrap();
        assert!((got[0] - 3.0).abs() < 1e-12);
        assert!((got[1] - -2.0).abs() < 1e-12);
        let at_k = solve_ivp(&p, &init(3.0, vec![1.0, 2.0]), 3.0).unwrap();
        assert_eq!(at_k, vec![1.0, 2.0]);
    }

    #[test]
    fn homogeneous_rejects_offset() {
        assert!(OdeParams::new(m2(0.1, 0.0, 0.0, 0.1), vec![1.0, 0.0], true).is_err());
    }

    #[test]
    fn sample_variance_examples() {
        assert_eq!(estimate_solution_variance(&[], 2), vec![1.0, 1.0]);
        assert_eq!(estimate_solution_variance(&[vec![3.0, 3.0]], 2), vec![1.0, 1.0]);
        assert_eq!(
            estimate_solution_variance(&[vec![1.0, 1.0], vec![1.0, 1.0]], 2),
            vec![0.0, 0.0]
        );
        assert_eq!(
            estimate_solution_variance(&[vec![0.0, 0.0], vec![2.0, 4.0], vec![4.0, 8.0]], 2),
            vec![4.0, 16.0]
        );
    }

    #[test]
    fn empty_inits_rejected() {
        let p = OdeParams::homogeneous(m2(0.0, 0.0, 0.0, 0.0)).unwrap();
        assert!(matches!(
            combined_trajectory(&p, &[], &[0.0]),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn single_initial_condition_reduces_to_solve() {
        let p = OdeParams::new(m2(-0.1, 0.05, 0.02, -0.2), vec![0.3, 0.1], false).unwrap();
        let i = init(1.0, vec![0.5, -0.5]);
        let traj = combined_trajectory(&p, std::slice::from_ref(&i), &[0.0, 1.0, 4.0]).unwrap();
        for (t, v) in traj.times.iter().zip(&traj.values) {
            assert_eq!(v, &solve_ivp(&p, &i, *t).unwrap());
        }
        assert!(traj.weights.iter().all(|w| w[0] == vec![1.0, 1.0]));
    }

    /// Plain 40-term Taylor series; accurate for the small norms used here.
    fn taylor40(m: &Mat<f64>) -> Mat<f64> {
        let n = m.rows();
        let mut sum = Mat::from_vec(n, n, (0..n * n).map(|i| f64::from(u8::from(i % (n + 1) == 0))).collect());
        let mut term = sum.clone();
        for k in 1..=40 {
            let mut next = Mat::from_vec(n, n, vec![0.0; n * n]);
            for i in 0..n {
                for j in 0..n {
                    let v: f64 = (0..n).map(|l| term.get(i, l) * m.get(l, j)).sum();
                    next.set(i, j, v / k as f64);
                }
            }
            term = next;
            for i in 0..n {
                for j in 0..n {
                    sum.set(i, j, sum.get(i, j) + term.get(i, j));
                }
            }
        }
        sum
    }

    #[test]
    fn expm_matches_long_taylor_series() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(40);
        for _ in 0..200 {
            let m = Mat::from_vec(2, 2, (0..4).map(|_| rng.random_range(-1.0..=1.0)).collect());
            let oracle = taylor40(&m);
            for got in [expm_2x2(&m), expm_series(&m)] {
                for (a, b) in got.as_slice().iter().zip(oracle.as_slice()) {
                    assert!((a - b).abs() < 1e-10, "{m:?}");
                }
            }
        }
    }

    fn constant_system() -> OdeParams<f64> {
        OdeParams::homogeneous(m2(0.0, 0.0, 0.0, 0.0)).unwrap()
    }

    #[test]
    fn hand_weighted_average_of_three_solutions() {
        // At t = 10 start 0 has intermediates {1, 2} with values (0, 2), so
        // variance 2; starts 1 and 2 fall back to variance 1.
        // (4 * 1/2 + 0 * 1 + 2 * 1) / 2.5 = 1.6
        let p = OdeParams::homogeneous(Mat::from_vec(1, 1, vec![0.0])).unwrap();
        let inits = [init(0.0, vec![4.0]), init(1.0, vec![0.0]), init(2.0, vec![2.0])];
        let traj = combined_trajectory(&p, &inits, &[10.0]).unwrap();
        assert!((traj.values[0][0] - 1.6).abs() < 1e-12);
        assert_eq!(traj.weights[0], vec![vec![0.2], vec![0.4], vec![0.4]]);
    }

    #[test]
    fn hand_weighted_average_in_two_dimensions() {
        // t = 3.5; variances: start 0 from {1,2,3}: (4, 4/3); start 1 from
        // {2,3}: (2, 2); starts 2 and 3: fallback 1.
        // dim 0: (0/4 + 2/2 + 4 + 6) / (1/4 + 1/2 + 2) = 4
        // dim 1: (0 * 3/4 + 1/2 + 1 + 3) / (3/4 + 1/2 + 2) = 18/13
        let inits = [
            init(0.0, vec![0.0, 0.0]),
            init(1.0, vec![2.0, 1.0]),
            init(2.0, vec![4.0, 1.0]),
            init(3.0, vec![6.0, 3.0]),
        ];
        let traj = combined_trajectory(&constant_system(), &inits, &[3.5]).unwrap();
        assert!((traj.values[0][0] - 4.0).abs() < 1e-12);
        assert!((traj.values[0][1] - 18.0 / 13.0).abs() < 1e-12);
    }

    #[test]
    fn equal_variances_give_the_arithmetic_mean() {
        // Every start has at most one intermediate, so all use the fallback.
        let inits = [init(0.0, vec![1.0, -1.0]), init(5.0, vec![2.0, 0.0]), init(6.0, vec![6.0, 4.0])];
        let traj = combined_trajectory(&constant_system(), &inits, &[5.5]).unwrap();
        assert_eq!(traj.values[0], vec![3.0, 1.0]);
    }

    #[test]
    fn branches_agree_near_the_singularity_threshold() {
        // det = 0.1 * 1e-7 + tiny, just above the threshold.
        let a = m2(0.1, 0.0, 0.0, 1.0000001e-7);
        assert!(determinant(&a) > SINGULAR_DET_THRESHOLD);
        let p = OdeParams::new(a, vec![0.3, -0.2], false).unwrap();
        for t in [0.5, 3.0, -2.0] {
            let direct = Propagator::new(&p).solve(&[0.4, 0.1], 0.0, t).unwrap();
            let singular = Propagator::singular_form(&p).solve(&[0.4, 0.1], 0.0, t).unwrap();
            for (x, y) in direct.iter().zip(&singular) {
                assert!((x - y).abs() < 1e-6, "t = {t}: {direct:?} vs {singular:?}");
            }
        }
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        fn stable_matrix() -> impl Strategy<Value = Mat<f64>> {
            (-0.3..-0.01f64, -0.3..-0.01f64, -0.2..0.2f64, -0.2..0.2f64)
                .prop_map(|(a, d, b, c)| m2(a, b, c, d))
        }

        fn any_params() -> impl Strategy<Value = OdeParams<f64>> {
            prop_oneof![
                (stable_matrix(), -1.0..1.0f64, -1.0..1.0f64)
                    .prop_map(|(a, c0, c1)| OdeParams::new(a, vec![c0, c1], false).unwrap()),
                stable_matrix().prop_map(|a| OdeParams::homogeneous(a).unwrap()),
                (-1.0..1.0f64, -1.0..1.0f64)
                    .prop_map(|(c0, c1)| OdeParams::new(m2(0.0, 0.0, 0.0, 0.0), vec![c0, c1], false).unwrap()),
                // Singular with eigenvalues 0 and 2x.
                (-0.3..=0.0f64, -1.0..1.0f64).prop_map(|(x, c0)| {
                    OdeParams::new(m2(x, 2.0 * x, 0.5 * x, x), vec![c0, 0.5], false).unwrap()
                }),
            ]
        }

        proptest! {
            #[test]
            fn initial_condition_is_exact(p in any_params(), k in -10.0..10.0f64, v0 in -3.0..3.0f64, v1 in -3.0..3.0f64) {
                let got = solve_ivp(&p, &init(k, vec![v0, v1]), k).unwrap();
                prop_assert!((got[0] - v0).abs() < 1e-10 && (got[1] - v1).abs() < 1e-10);
            }

            #[test]
            fn solutions_compose(p in any_params(), k in 0.0..5.0f64, s in 0.0..10.0f64, t in 0.0..10.0f64,
                                 v0 in -3.0..3.0f64, v1 in -3.0..3.0f64) {
                let mid = solve_ivp(&p, &init(k, vec![v0, v1]), s).unwrap();
                let two_step = solve_ivp(&p, &init(s, mid), t).unwrap();
                let direct = solve_ivp(&p, &init(k, vec![v0, v1]), t).unwrap();
                for (a, b) in two_step.iter().zip(&direct) {
                    prop_assert!((a - b).abs() < 1e-8);
                }
            }

            #[test]
            fn weights_are_normalized(times in prop::collection::btree_set(0u32..40, 1..7),
                                      vals in prop::collection::vec(-3.0..3.0f64, 14),
                                      t in 0.0..40.0f64) {
                let inits: Vec<_> = times.iter().enumerate()
                    .map(|(i, &k)| init(f64::from(k), vec![vals[2 * i], vals[2 * i + 1]]))
                    .collect();
                let p = OdeParams::homogeneous(m2(-0.05, 0.02, -0.02, -0.1)).unwrap();
                let traj = combined_trajectory(&p, &inits, &[t]).unwrap();
                for j in 0..2 {
                    let total: f64 = traj.weights[0].iter().map(|w| w[j]).sum();
                    prop_assert!((total - 1.0).abs() < 1e-12);
                    prop_assert!(traj.weights[0].iter().all(|w| w[j] >= 0.0));
                }
            }

            #[test]
            fn inits_on_one_trajectory_are_reproduced(p in any_params(), v0 in -3.0..3.0f64, v1 in -3.0..3.0f64,
                                                      times in prop::collection::btree_set(0u32..20, 1..6)) {
                // Reaching back across the window integrates decaying modes
                // backwards, so the window bounds the amplification of rounding.
                let start = init(0.0, vec![v0, v1]);
                let inits: Vec<_> = times.iter()
                    .map(|&k| init(f64::from(k), solve_ivp(&p, &start, f64::from(k)).unwrap()))
                    .collect();
                let eval = [0.0, 5.0, 10.0, 19.5];
                let traj = combined_trajectory(&p, &inits, &eval).unwrap();
                for (t, v) in eval.iter().zip(&traj.values) {
                    let truth = solve_ivp(&p, &start, *t).unwrap();
                    prop_assert!((v[0] - truth[0]).abs() < 1e-8 && (v[1] - truth[1]).abs() < 1e-8);
                }
            }
        }
    }
}
