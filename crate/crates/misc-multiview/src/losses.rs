//! Pure evaluation of every term of the training objective.
//!
//! The reported classification term is the true hinge `max(0, 1 - y<w,z>)`,
//! not the indicator-frozen surrogate used by the gradient updates: the
//! indicator is an optimization device, while the objective trace should
//! measure the quantity actually being minimized.

use ndarray::{ArrayView1, ArrayView2};

use crate::error::{Error, Result};
use crate::exec;
use crate::model::{Hyperparams, ModelState, MultiviewDataset, ObjectiveRecord};

/// Robust reconstruction error `log(1 + ||x - W z||^2 / c^2)`.
///
/// Zero exactly when `x = W z`; bounded influence for large residuals.
pub fn cauchy_error(x: ArrayView1<f64>, w: ArrayView2<f64>, z: ArrayView1<f64>, c: f64) -> Result<f64> {
    if w.nrows() != x.len() {
        return Err(Error::shape(
            "cauchy_error: x vs W rows",
            format!("{}", w.nrows()),
            format!("{}", x.len()),
        ));
    }
    if w.ncols() != z.len() {
        return Err(Error::shape(
            "cauchy_error: z vs W columns",
            format!("{}", w.ncols()),
            format!("{}", z.len()),
        ));
    }
    if !(c > 0.0) {
        return Err(Error::InvalidHyperparams(format!("c must be > 0, got {c}")));
    }
    let r = &x - &w.dot(&z);
    Ok((r.dot(&r) / (c * c)).ln_1p())
}

/// Hinge loss `max(0, 1 - y <omega, z>)` for `y` in `{+1, -1}`.
pub fn hinge_loss(y: f64, omega: ArrayView1<f64>, z: ArrayView1<f64>) -> Result<f64> {
    if omega.len() != z.len() {
        return Err(Error::shape(
            "hinge_loss: omega vs z",
            format!("{}", omega.len()),
            format!("{}", z.len()),
        ));
    }
    Ok((1.0 - y * omega.dot(&z)).max(0.0))
}

/// The indicator that freezes the active hinge branch for one iteration:
/// `1` iff `1 - y <omega, z> > 0`, strictly, so the boundary maps to `0`.
pub fn hinge_indicator(y: f64, omega: ArrayView1<f64>, z: ArrayView1<f64>) -> Result<u8> {
    if omega.len() != z.len() {
        return Err(Error::shape(
            "hinge_indicator: omega vs z",
            format!("{}", omega.len()),
            format!("{}", z.len()),
        ));
    }
    Ok(u8::from(1.0 - y * omega.dot(&z) > 0.0))
}

/// Sum of squared l2 norms of every variable block:
/// `sum_i ||z_i||^2 + sum_j ||W_j||_F^2 + ||omega||^2`.
pub fn regularizer(state: &ModelState) -> f64 {
    let z_sq: f64 = state.z.iter().map(|v| v * v).sum();
    let w_sq: f64 = state
        .w
        .iter()
        .map(|w| w.iter().map(|v| v * v).sum::<f64>())
        .sum();
    let omega_sq: f64 = state.omega.iter().map(|v| v * v).sum();
    z_sq + w_sq + omega_sq
}

/// Full objective, decomposed: Cauchy reconstruction over all `(i, j)`,
/// `alpha` times the total hinge loss, and `gamma` times the regularizer.
///
/// Per-point terms are evaluated in parallel; the final sums run in index
/// order so the result does not depend on scheduling.
pub fn objective(
    dataset: &MultiviewDataset,
    state: &ModelState,
    hp: &Hyperparams,
) -> Result<ObjectiveRecord> {
    check_state_shapes(dataset, state, hp)?;
    let y = dataset.binary_labels()?;

    let per_point: Vec<Result<(f64, f64)>> = exec::map_indexed(dataset.n, |i| {
        let z_i = state.z.row(i);
        let mut recon = 0.0;
        for j in 0..dataset.m {
            recon += cauchy_error(dataset.views[j].row(i), state.w[j].view(), z_i, hp.c)?;
        }
        let hinge = hinge_loss(y[i], state.omega.view(), z_i)?;
        Ok((recon, hinge))
    });

    let mut reconstruction = 0.0;
    let mut hinge_sum = 0.0;
    for item in per_point {
        let (recon, hinge) = item?;
        reconstruction += recon;
        hinge_sum += hinge;
    }
    let classification = hp.alpha * hinge_sum;
    let regularization = hp.gamma * regularizer(state);
    Ok(ObjectiveRecord {
        reconstruction_term: reconstruction,
        classification_term: classification,
        regularization_term: regularization,
        total: reconstruction + classification + regularization,
    })
}

/// Shape consistency between a dataset, a state, and the intact dimension.
pub(crate) fn check_state_shapes(
    dataset: &MultiviewDataset,
    state: &ModelState,
    hp: &Hyperparams,
) -> Result<()> {
    if state.z.nrows() != dataset.n || state.z.ncols() != hp.d {
        return Err(Error::shape(
            "state: Z",
            format!("{}x{}", dataset.n, hp.d),
            format!("{}x{}", state.z.nrows(), state.z.ncols()),
        ));
    }
    if state.w.len() != dataset.m {
        return Err(Error::shape(
            "state: W count",
            format!("{}", dataset.m),
            format!("{}", state.w.len()),
        ));
    }
    for (j, w) in state.w.iter().enumerate() {
        if w.nrows() != dataset.view_dims[j] || w.ncols() != hp.d {
            return Err(Error::shape(
                format!("state: W[{j}]"),
                format!("{}x{}", dataset.view_dims[j], hp.d),
                format!("{}x{}", w.nrows(), w.ncols()),
            ));
        }
    }
    if state.omega.len() != hp.d {
        return Err(Error::shape(
            "state: omega",
            format!("{}", hp.d),
            format!("{}", state.omega.len()),
        ));
    }
    if state.beta.len() != dataset.n {
        return Err(Error::shape(
            "state: beta",
            format!("{}", dataset.n),
            format!("{}", state.beta.len()),
        ));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::{array, Array1, Array2};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn cauchy_zero_residual_is_zero() {
        let w = array![[1.0, 0.0], [0.0, 1.0], [2.0, -1.0]];
        let z = array![0.3, -0.7];
        let x = w.dot(&z);
        let e = cauchy_error(x.view(), w.view(), z.view(), 3.7).unwrap();
        assert_eq!(e, 0.0);
    }

    #[test]
    fn cauchy_residual_equal_to_scale_gives_log_two() {
        // ||x - W z|| = c  =>  log(1 + 1) = log 2
        let w = array![[1.0], [0.0]];
        let z = array![0.0];
        let x = array![1.5, 0.0];
        let e = cauchy_error(x.view(), w.view(), z.view(), 1.5).unwrap();
        assert_abs_diff_eq!(e, 2.0_f64.ln(), epsilon = 1e-15);
        assert_abs_diff_eq!(e, 0.693147, epsilon = 1e-6);
    }

    #[test]
    fn cauchy_analytic_log_five() {
        // residual norm^2 = 4 with c = 1 => log 5
        let w = array![[1.0, 0.0], [0.0, 1.0]];
        let z = array![0.0, 0.0];
        let x = array![2.0, 0.0];
        let e = cauchy_error(x.view(), w.view(), z.view(), 1.0).unwrap();
        assert_abs_diff_eq!(e, 5.0_f64.ln(), epsilon = 1e-15);
        assert_abs_diff_eq!(e, 1.609438, epsilon = 1e-6);
    }

    #[test]
    fn cauchy_rejects_shape_mismatch() {
        let w = array![[1.0, 0.0], [0.0, 1.0]];
        let z = array![0.0, 0.0];
        let x = array![2.0, 0.0, 1.0];
        let err = cauchy_error(x.view(), w.view(), z.view(), 1.0).unwrap_err();
        assert!(err.to_string().contains("x vs W rows"));
        let z_bad = array![0.0];
        let err = cauchy_error(x.slice(ndarray::s![..2]), w.view(), z_bad.view(), 1.0).unwrap_err();
        assert!(err.to_string().contains("z vs W columns"));
    }

    #[test]
    fn hinge_cases() {
        let omega = array![1.0, 1.0];
        // <omega, z> = 2
        assert_eq!(hinge_loss(1.0, omega.view(), array![1.0, 1.0].view()).unwrap(), 0.0);
        // <omega, z> = 0
        assert_eq!(hinge_loss(1.0, omega.view(), array![0.0, 0.0].view()).unwrap(), 1.0);
        // y = -1, <omega, z> = 0.5
        assert_eq!(
            hinge_loss(-1.0, omega.view(), array![0.25, 0.25].view()).unwrap(),
            1.5
        );
    }

    #[test]
    fn indicator_cases_including_strict_boundary() {
        let omega = array![1.0];
        assert_eq!(hinge_indicator(1.0, omega.view(), array![2.0].view()).unwrap(), 0);
        // margin exactly 1: strict inequality fails, indicator is 0
        assert_eq!(hinge_indicator(1.0, omega.view(), array![1.0].view()).unwrap(), 0);
        assert_eq!(hinge_indicator(-1.0, omega.view(), array![0.5].view()).unwrap(), 1);
    }

    fn zero_state(n: usize, dims: &[usize], d: usize) -> ModelState {
        ModelState {
            z: Array2::zeros((n, d)),
            w: dims.iter().map(|&dj| Array2::zeros((dj, d))).collect(),
            omega: Array1::zeros(d),
            beta: vec![0; n],
        }
    }

    #[test]
    fn regularizer_zero_state() {
        assert_eq!(regularizer(&zero_state(3, &[2, 4], 2)), 0.0);
    }

    #[test]
    fn regularizer_single_row() {
        let mut state = zero_state(1, &[2], 2);
        state.z = array![[3.0, 4.0]];
        assert_eq!(regularizer(&state), 25.0);
    }

    #[test]
    fn regularizer_matches_elementwise_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let n = 4;
        let dims = [3usize, 5];
        let d = 2;
        let mut state = zero_state(n, &dims, d);
        state.z.mapv_inplace(|_| rng.gen_range(-1.0..1.0));
        for w in &mut state.w {
            w.mapv_inplace(|_| rng.gen_range(-1.0..1.0));
        }
        state.omega.mapv_inplace(|_| rng.gen_range(-1.0..1.0));

        // brute-force elementwise oracle
        let mut expected = 0.0;
        for v in state.z.iter() {
            expected += v * v;
        }
        for w in &state.w {
            for v in w.iter() {
                expected += v * v;
            }
        }
        for v in state.omega.iter() {
            expected += v * v;
        }
        assert_abs_diff_eq!(regularizer(&state), expected, epsilon = 1e-12);
    }

    fn random_instance(
        seed: u64,
        n: usize,
        dims: &[usize],
        d: usize,
    ) -> (MultiviewDataset, ModelState, Hyperparams) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let views = dims
            .iter()
            .map(|&dj| Array2::from_shape_fn((n, dj), |_| rng.gen_range(-1.0..1.0)))
            .collect();
        let labels = (0..n).map(|i| if i % 2 == 0 { 1 } else { -1 }).collect();
        let dataset = MultiviewDataset::new(views, Some(labels)).unwrap();
        let state = ModelState {
            z: Array2::from_shape_fn((n, d), |_| rng.gen_range(-1.0..1.0)),
            w: dims
                .iter()
                .map(|&dj| Array2::from_shape_fn((dj, d), |_| rng.gen_range(-1.0..1.0)))
                .collect(),
            omega: Array1::from_shape_fn(d, |_| rng.gen_range(-1.0..1.0)),
            beta: (0..n).map(|i| (i % 2) as u8).collect(),
        };
        let mut hp = Hyperparams::for_view_dims(dims);
        hp.d = d;
        hp.alpha = 0.7;
        hp.gamma = 0.3;
        hp.c = 1.3;
        (dataset, state, hp)
    }

    #[test]
    fn objective_zero_state_zero_data() {
        let n = 5;
        let dims = [2usize, 3];
        let views = dims.iter().map(|&dj| Array2::zeros((n, dj))).collect();
        let labels = (0..n).map(|i| if i % 2 == 0 { 1 } else { -1 }).collect();
        let dataset = MultiviewDataset::new(views, Some(labels)).unwrap();
        let mut hp = Hyperparams::for_view_dims(&dims);
        hp.alpha = 2.5;
        let state = zero_state(n, &dims, hp.d);
        let rec = objective(&dataset, &state, &hp).unwrap();
        assert_eq!(rec.reconstruction_term, 0.0);
        // every hinge is exactly 1 at the zero state
        assert_eq!(rec.classification_term, hp.alpha * n as f64);
        assert_eq!(rec.regularization_term, 0.0);
        assert_eq!(rec.total, hp.alpha * n as f64);
    }

    #[test]
    fn objective_exact_reconstruction_and_margins_zero_total() {
        // state reconstructs exactly and every margin is >= 1, gamma = 0
        let z = array![[1.0, 0.0], [-1.0, 0.0]];
        let w = array![[2.0, 0.0], [0.0, 1.0], [1.0, 1.0]];
        let x = z.dot(&w.t());
        let dataset = MultiviewDataset::new(vec![x], Some(vec![1, -1])).unwrap();
        let mut hp = Hyperparams::for_view_dims(&[3]);
        hp.d = 2;
        hp.gamma = 0.0;
        let state = ModelState {
            z,
            w: vec![w],
            omega: array![1.5, 0.0],
            beta: vec![0, 0],
        };
        let rec = objective(&dataset, &state, &hp).unwrap();
        assert_eq!(rec.total, 0.0);
    }

    #[test]
    fn objective_matches_naive_triple_loop() {
        let (dataset, state, hp) = random_instance(7, 4, &[2, 3], 3);
        let rec = objective(&dataset, &state, &hp).unwrap();

        // independent naive scalar-loop re-implementation
        let mut recon = 0.0;
        for i in 0..dataset.n {
            for j in 0..dataset.m {
                let mut r_sq = 0.0;
                for a in 0..dataset.view_dims[j] {
                    let mut wz = 0.0;
                    for b in 0..hp.d {
                        wz += state.w[j][[a, b]] * state.z[[i, b]];
                    }
                    let r = dataset.views[j][[i, a]] - wz;
                    r_sq += r * r;
                }
                recon += (1.0 + r_sq / (hp.c * hp.c)).ln();
            }
        }
        let mut hinge = 0.0;
        let labels = dataset.labels.as_ref().unwrap();
        for i in 0..dataset.n {
            let mut dot = 0.0;
            for b in 0..hp.d {
                dot += state.omega[b] * state.z[[i, b]];
            }
            hinge += (1.0 - labels[i] as f64 * dot).max(0.0);
        }
        let mut reg = 0.0;
        for v in state.z.iter() {
            reg += v * v;
        }
        for w in &state.w {
            for v in w.iter() {
                reg += v * v;
            }
        }
        for v in state.omega.iter() {
            reg += v * v;
        }

        assert_abs_diff_eq!(rec.reconstruction_term, recon, epsilon = 1e-10);
        assert_abs_diff_eq!(rec.classification_term, hp.alpha * hinge, epsilon = 1e-10);
        assert_abs_diff_eq!(rec.regularization_term, hp.gamma * reg, epsilon = 1e-10);
        assert_abs_diff_eq!(rec.total, recon + hp.alpha * hinge + hp.gamma * reg, epsilon = 1e-10);
    }

    #[test]
    fn objective_invariant_under_consistent_permutation() {
        let (dataset, state, hp) = random_instance(19, 5, &[3, 2], 2);
        let rec = objective(&dataset, &state, &hp).unwrap();

        let perm = [3usize, 0, 4, 1, 2];
        let permuted_ds = dataset.subset(&perm).unwrap();
        let mut pz = state.z.clone();
        let mut pbeta = state.beta.clone();
        for (new_i, &old_i) in perm.iter().enumerate() {
            pz.row_mut(new_i).assign(&state.z.row(old_i));
            pbeta[new_i] = state.beta[old_i];
        }
        let permuted_state = ModelState {
            z: pz,
            beta: pbeta,
            ..state.clone()
        };
        let rec_p = objective(&permuted_ds, &permuted_state, &hp).unwrap();
        assert_abs_diff_eq!(rec.total, rec_p.total, epsilon = 1e-12);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            // monotone nondecreasing in the residual norm for fixed c
            #[test]
            fn cauchy_monotone_in_residual(r1 in 0.0..10.0f64, r2 in 0.0..10.0f64, c in 0.1..5.0f64) {
                let w = array![[1.0]];
                let z = array![0.0];
                let (lo, hi) = if r1 <= r2 { (r1, r2) } else { (r2, r1) };
                let e_lo = cauchy_error(array![lo].view(), w.view(), z.view(), c).unwrap();
                let e_hi = cauchy_error(array![hi].view(), w.view(), z.view(), c).unwrap();
                prop_assert!(e_lo <= e_hi);
            }

            // monotone nonincreasing in c for fixed residual
            #[test]
            fn cauchy_monotone_in_scale(r in 0.0..10.0f64, c1 in 0.1..5.0f64, c2 in 0.1..5.0f64) {
                let w = array![[1.0]];
                let z = array![0.0];
                let (lo, hi) = if c1 <= c2 { (c1, c2) } else { (c2, c1) };
                let e_lo = cauchy_error(array![r].view(), w.view(), z.view(), lo).unwrap();
                let e_hi = cauchy_error(array![r].view(), w.view(), z.view(), hi).unwrap();
                prop_assert!(e_hi <= e_lo);
            }

            // hinge agrees with the indicator-linearized form away from the boundary
            #[test]
            fn hinge_consistent_with_indicator(y in prop::bool::ANY, dot in -3.0..3.0f64) {
                let y = if y { 1.0 } else { -1.0 };
                let omega = array![1.0];
                let z = array![dot];
                let loss = hinge_loss(y, omega.view(), z.view()).unwrap();
                let ind = hinge_indicator(y, omega.view(), z.view()).unwrap();
                let margin_slack = 1.0 - y * dot;
                if ind == 1 {
                    prop_assert!((loss - margin_slack).abs() < 1e-12);
                } else if margin_slack != 0.0 {
                    prop_assert_eq!(loss, 0.0);
                }
            }
        }
    }
}
