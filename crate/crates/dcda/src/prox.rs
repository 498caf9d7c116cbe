//! Norms, proximal projections, and the step-size schedule.
//!
//! The dual-to-primal map is
//!
//! ```text
//!   prox_project(z, alpha) = argmin_x  <x, z> + psi(x) / alpha
//! ```
//!
//! over the configured feasible set, with psi 1-strongly convex with
//! respect to the paired norm. Two pairings are supported in closed form:
//!
//! * squared psi, l2 norm, unconstrained or l2-ball feasible set;
//! * entropic psi, l1 norm, probability simplex.

use ndarray::Array1;

use crate::error::{Error, Result};

// ---------- Norms ----------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormKind {
    /// Euclidean norm; self-dual.
    L2,
    /// l1 norm; its dual is the max norm.
    L1,
}

impl NormKind {
    /// Primal norm of `v`. NaN inputs propagate; use [`dual_norm`] /
    /// [`primal_norm`] for checked evaluation.
    pub fn norm(&self, v: &Array1<f64>) -> f64 {
        match self {
            NormKind::L2 => v.iter().map(|a| a * a).sum::<f64>().sqrt(),
            NormKind::L1 => v.iter().map(|a| a.abs()).sum(),
        }
    }

    /// Dual norm of `v`: l2 for `L2`, max-abs for `L1`.
    pub fn dual(&self, v: &Array1<f64>) -> f64 {
        match self {
            NormKind::L2 => self.norm(v),
            NormKind::L1 => v.iter().fold(0.0_f64, |m, a| m.max(a.abs())),
        }
    }
}

fn ensure_finite(v: &Array1<f64>, what: &str) -> Result<()> {
    if v.iter().all(|a| a.is_finite()) {
        Ok(())
    } else {
        Err(Error::numerical(format!("non-finite component in {what}")))
    }
}

/// Checked dual norm.
pub fn dual_norm(v: &Array1<f64>, norm: NormKind) -> Result<f64> {
    ensure_finite(v, "dual_norm input")?;
    Ok(norm.dual(v))
}

/// Checked primal norm.
pub fn primal_norm(v: &Array1<f64>, norm: NormKind) -> Result<f64> {
    ensure_finite(v, "primal_norm input")?;
    Ok(norm.norm(v))
}

// ---------- Prox functions and feasible sets ----------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProxFunction {
    /// psi(x) = ||x||_2^2 / 2.
    Squared,
    /// psi(x) = sum_k x_k ln x_k - x_k, with 0 ln 0 = 0.
    Entropic,
}

impl ProxFunction {
    pub fn psi(&self, x: &Array1<f64>) -> f64 {
        match self {
            ProxFunction::Squared => 0.5 * x.iter().map(|a| a * a).sum::<f64>(),
            ProxFunction::Entropic => x
                .iter()
                .map(|&a| if a > 0.0 { a * a.ln() - a } else { 0.0 })
                .sum(),
        }
    }

    /// psi shifted by a constant so its minimum over the natural domain is
    /// zero: unchanged for `Squared`, `+ (1 + ln d)` for `Entropic` on the
    /// simplex (minimized at the uniform point). The shift does not affect
    /// the projection; bound evaluators expect this normalization.
    pub fn psi_nonneg(&self, x: &Array1<f64>) -> f64 {
        match self {
            ProxFunction::Squared => self.psi(x),
            ProxFunction::Entropic => self.psi(x) + 1.0 + (x.len() as f64).ln(),
        }
    }

    /// Norm this psi is 1-strongly convex against.
    pub fn paired_norm(&self) -> NormKind {
        match self {
            ProxFunction::Squared => NormKind::L2,
            ProxFunction::Entropic => NormKind::L1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FeasibleSet {
    Unconstrained,
    L2Ball { radius: f64 },
    Simplex,
}

impl FeasibleSet {
    pub fn contains(&self, x: &Array1<f64>, tol: f64) -> bool {
        match self {
            FeasibleSet::Unconstrained => x.iter().all(|a| a.is_finite()),
            FeasibleSet::L2Ball { radius } => {
                NormKind::L2.norm(x) <= radius + tol
            }
            FeasibleSet::Simplex => {
                x.iter().all(|&a| a >= -tol)
                    && (x.sum() - 1.0).abs() <= tol
            }
        }
    }

    /// Diameter sup ||x - y|| in the given norm; `None` when unbounded.
    pub fn diameter(&self, norm: NormKind) -> Option<f64> {
        match (self, norm) {
            (FeasibleSet::Unconstrained, _) => None,
            (FeasibleSet::L2Ball { radius }, NormKind::L2) => Some(2.0 * radius),
            // l1 diameter of an l2 ball of radius r in d dims depends on d;
            // callers needing it should bound via norm equivalence instead.
            (FeasibleSet::L2Ball { .. }, NormKind::L1) => None,
            (FeasibleSet::Simplex, NormKind::L1) => Some(2.0),
            (FeasibleSet::Simplex, NormKind::L2) => Some(2.0_f64.sqrt()),
        }
    }

    pub fn validate_pairing(&self, psi: ProxFunction) -> Result<()> {
        match (psi, self) {
            (ProxFunction::Squared, FeasibleSet::Unconstrained)
            | (ProxFunction::Squared, FeasibleSet::L2Ball { .. })
            | (ProxFunction::Entropic, FeasibleSet::Simplex) => Ok(()),
            _ => Err(Error::config(format!(
                "unsupported prox/set pairing: {psi:?} with {self:?}"
            ))),
        }
    }
}

// ---------- Projection ----------

/// Solve `argmin_x <x, z> + psi(x)/alpha` over `set` in closed form.
pub fn prox_project(
    z: &Array1<f64>,
    alpha: f64,
    psi: ProxFunction,
    set: &FeasibleSet,
) -> Result<Array1<f64>> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::config(format!("prox step alpha must be positive, got {alpha}")));
    }
    ensure_finite(z, "prox_project input")?;
    set.validate_pairing(psi)?;
    match (psi, set) {
        (ProxFunction::Squared, FeasibleSet::Unconstrained) => Ok(z.mapv(|a| -alpha * a)),
        (ProxFunction::Squared, FeasibleSet::L2Ball { radius }) => {
            let mut x = z.mapv(|a| -alpha * a);
            let nrm = NormKind::L2.norm(&x);
            if nrm > *radius {
                x.mapv_inplace(|a| a * radius / nrm);
            }
            Ok(x)
        }
        (ProxFunction::Entropic, FeasibleSet::Simplex) => {
            // Softmax of -alpha z, with the max subtracted before exp.
            let a = z.mapv(|v| -alpha * v);
            let m = a.iter().fold(f64::NEG_INFINITY, |acc, &v| acc.max(v));
            let w = a.mapv(|v| (v - m).exp());
            let s = w.sum();
            Ok(w.mapv(|v| v / s))
        }
        _ => unreachable!("pairing validated above"),
    }
}

// ---------- Step-size schedule ----------

/// alpha(t) = C / sqrt(t) for t >= 1, with alpha(0) = C.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepSchedule {
    c: f64,
}

impl StepSchedule {
    pub fn new(c: f64) -> Result<Self> {
        if c > 0.0 && c.is_finite() {
            Ok(StepSchedule { c })
        } else {
            Err(Error::config(format!("step constant C must be positive, got {c}")))
        }
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn alpha(&self, t: usize) -> f64 {
        if t == 0 {
            self.c
        } else {
            self.c / (t as f64).sqrt()
        }
    }
}

/// Free-function form of [`StepSchedule::alpha`].
pub fn step_size(t: usize, schedule: &StepSchedule) -> f64 {
    schedule.alpha(t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use proptest::prelude::*;

    #[test]
    fn dual_norm_zero_vector_is_zero() {
        let z = Array1::zeros(4);
        assert_eq!(dual_norm(&z, NormKind::L2).unwrap(), 0.0);
        assert_eq!(dual_norm(&z, NormKind::L1).unwrap(), 0.0);
    }

    #[test]
    fn l2_dual_is_euclidean() {
        assert_abs_diff_eq!(dual_norm(&array![3.0, 4.0], NormKind::L2).unwrap(), 5.0);
    }

    #[test]
    fn l1_dual_is_max_abs() {
        assert_abs_diff_eq!(dual_norm(&array![-7.0, 2.0], NormKind::L1).unwrap(), 7.0);
    }

    #[test]
    fn dual_norm_rejects_non_finite() {
        assert!(dual_norm(&array![1.0, f64::NAN], NormKind::L2).is_err());
        assert!(dual_norm(&array![f64::INFINITY], NormKind::L1).is_err());
    }

    #[test]
    fn squared_unconstrained_prox_is_neg_alpha_z() {
        let x = prox_project(
            &array![2.0, -4.0],
            0.5,
            ProxFunction::Squared,
            &FeasibleSet::Unconstrained,
        )
        .unwrap();
        assert_abs_diff_eq!(x[0], -1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(x[1], 2.0, epsilon = 1e-15);
    }

    #[test]
    fn ball_prox_rescales_radially() {
        let x = prox_project(
            &array![-3.0, 0.0],
            1.0,
            ProxFunction::Squared,
            &FeasibleSet::L2Ball { radius: 1.0 },
        )
        .unwrap();
        assert_abs_diff_eq!(x[0], 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(x[1], 0.0);
    }

    #[test]
    fn entropic_prox_of_zero_is_uniform() {
        let x = prox_project(
            &Array1::zeros(3),
            1.0,
            ProxFunction::Entropic,
            &FeasibleSet::Simplex,
        )
        .unwrap();
        for v in x.iter() {
            assert_abs_diff_eq!(*v, 1.0 / 3.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn entropic_prox_matches_softmax_by_hand() {
        // z = (0, ln 2), alpha = 1: softmax(0, -ln 2) = (2/3, 1/3).
        let x = prox_project(
            &array![0.0, 2.0_f64.ln()],
            1.0,
            ProxFunction::Entropic,
            &FeasibleSet::Simplex,
        )
        .unwrap();
        assert_abs_diff_eq!(x[0], 2.0 / 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(x[1], 1.0 / 3.0, epsilon = 1e-12);
    }

    #[test]
    fn prox_rejects_bad_alpha_and_pairing() {
        let z = array![1.0, 1.0];
        assert!(prox_project(&z, 0.0, ProxFunction::Squared, &FeasibleSet::Unconstrained).is_err());
        assert!(prox_project(&z, -1.0, ProxFunction::Squared, &FeasibleSet::Unconstrained).is_err());
        assert!(prox_project(&z, 1.0, ProxFunction::Entropic, &FeasibleSet::Unconstrained).is_err());
        assert!(prox_project(&z, 1.0, ProxFunction::Squared, &FeasibleSet::Simplex).is_err());
    }

    #[test]
    fn step_schedule_values() {
        let s = StepSchedule::new(2.0).unwrap();
        assert_eq!(step_size(0, &s), 2.0);
        assert_eq!(step_size(1, &s), 2.0);
        assert_abs_diff_eq!(step_size(4, &s), 1.0);
        assert!(StepSchedule::new(0.0).is_err());
        assert!(StepSchedule::new(f64::NAN).is_err());
    }

    #[test]
    fn psi_nonneg_entropic_zero_at_uniform() {
        let u = Array1::from_elem(5, 0.2);
        assert_abs_diff_eq!(ProxFunction::Entropic.psi_nonneg(&u), 0.0, epsilon = 1e-12);
        // Strictly positive away from uniform.
        let v = array![0.7, 0.1, 0.1, 0.05, 0.05];
        assert!(ProxFunction::Entropic.psi_nonneg(&v) > 1e-3);
    }

    fn vec_strategy(d: usize, scale: f64) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-scale..scale, d)
    }

    proptest! {
        // The projection is alpha-Lipschitz from the dual norm to the primal
        // norm, for both supported pairings.
        #[test]
        fn squared_prox_is_alpha_lipschitz(
            a in vec_strategy(6, 10.0),
            b in vec_strategy(6, 10.0),
            alpha in 0.01f64..5.0,
        ) {
            let (za, zb) = (Array1::from(a), Array1::from(b));
            let set = FeasibleSet::L2Ball { radius: 2.0 };
            let xa = prox_project(&za, alpha, ProxFunction::Squared, &set).unwrap();
            let xb = prox_project(&zb, alpha, ProxFunction::Squared, &set).unwrap();
            let lhs = NormKind::L2.norm(&(&xa - &xb));
            let rhs = alpha * NormKind::L2.dual(&(&za - &zb));
            prop_assert!(lhs <= rhs + 1e-9, "lhs {lhs} rhs {rhs}");
        }

        #[test]
        fn entropic_prox_is_alpha_lipschitz(
            a in vec_strategy(6, 10.0),
            b in vec_strategy(6, 10.0),
            alpha in 0.01f64..5.0,
        ) {
            let (za, zb) = (Array1::from(a), Array1::from(b));
            let xa = prox_project(&za, alpha, ProxFunction::Entropic, &FeasibleSet::Simplex).unwrap();
            let xb = prox_project(&zb, alpha, ProxFunction::Entropic, &FeasibleSet::Simplex).unwrap();
            let lhs = NormKind::L1.norm(&(&xa - &xb));
            let rhs = alpha * NormKind::L1.dual(&(&za - &zb));
            prop_assert!(lhs <= rhs + 1e-9, "lhs {lhs} rhs {rhs}");
        }

        #[test]
        fn entropic_prox_lands_on_simplex(
            a in vec_strategy(8, 50.0),
            alpha in 0.01f64..5.0,
        ) {
            let x = prox_project(&Array1::from(a), alpha, ProxFunction::Entropic, &FeasibleSet::Simplex).unwrap();
            prop_assert!(FeasibleSet::Simplex.contains(&x, 1e-12));
        }

        #[test]
        fn ball_prox_stays_in_ball(
            a in vec_strategy(8, 50.0),
            alpha in 0.01f64..5.0,
            radius in 0.1f64..5.0,
        ) {
            let set = FeasibleSet::L2Ball { radius };
            let x = prox_project(&Array1::from(a), alpha, ProxFunction::Squared, &set).unwrap();
            prop_assert!(set.contains(&x, 1e-12));
        }

        // Adding a constant to every dual coordinate does not move the
        // entropic projection.
        #[test]
        fn entropic_prox_shift_invariant(
            a in vec_strategy(5, 10.0),
            shift in -20.0f64..20.0,
            alpha in 0.05f64..2.0,
        ) {
            let z = Array1::from(a);
            let zs = z.mapv(|v| v + shift);
            let x = prox_project(&z, alpha, ProxFunction::Entropic, &FeasibleSet::Simplex).unwrap();
            let xs = prox_project(&zs, alpha, ProxFunction::Entropic, &FeasibleSet::Simplex).unwrap();
            for (u, v) in x.iter().zip(xs.iter()) {
                prop_assert!((u - v).abs() <= 1e-12);
            }
        }

        // 1-strong convexity of psi against its paired norm, on sampled
        // triples: psi(tx + (1-t)y) <= t psi(x) + (1-t) psi(y)
        //                                 - t(1-t)/2 ||x-y||^2.
        #[test]
        fn squared_psi_strongly_convex(
            a in vec_strategy(5, 10.0),
            b in vec_strategy(5, 10.0),
            theta in 0.0f64..1.0,
        ) {
            let (x, y) = (Array1::from(a), Array1::from(b));
            let mid = &x * theta + &y * (1.0 - theta);
            let psi = ProxFunction::Squared;
            let lhs = psi.psi(&mid);
            let gap = theta * (1.0 - theta) / 2.0 * NormKind::L2.norm(&(&x - &y)).powi(2);
            let rhs = theta * psi.psi(&x) + (1.0 - theta) * psi.psi(&y) - gap;
            prop_assert!(lhs <= rhs + 1e-9 * (1.0 + rhs.abs()));
        }

        #[test]
        fn entropic_psi_strongly_convex_on_simplex(
            wa in prop::collection::vec(0.01f64..1.0, 5),
            wb in prop::collection::vec(0.01f64..1.0, 5),
            theta in 0.0f64..1.0,
        ) {
            let norm = |w: Vec<f64>| {
                let s: f64 = w.iter().sum();
                Array1::from(w.into_iter().map(|v| v / s).collect::<Vec<_>>())
            };
            let (x, y) = (norm(wa), norm(wb));
            let mid = &x * theta + &y * (1.0 - theta);
            let psi = ProxFunction::Entropic;
            let gap = theta * (1.0 - theta) / 2.0 * NormKind::L1.norm(&(&x - &y)).powi(2);
            let rhs = theta * psi.psi(&x) + (1.0 - theta) * psi.psi(&y) - gap;
            prop_assert!(psi.psi(&mid) <= rhs + 1e-9);
        }

        #[test]
        fn step_size_positive_and_nonincreasing(c in 0.01f64..100.0) {
            let s = StepSchedule::new(c).unwrap();
            let mut prev = f64::INFINITY;
            for t in 0..200 {
                let a = step_size(t, &s);
                prop_assert!(a > 0.0);
                prop_assert!(a <= prev);
                prev = a;
            }
        }
    }
}
