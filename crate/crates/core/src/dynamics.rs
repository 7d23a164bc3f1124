//! Constant-velocity dynamics and detector projections.

use crate::error::Result;
use crate::types::{DetectorModel, GaussianBelief, Mat6, Vec4, Vec6};

/// Constant-velocity transition: position advances by velocity, size and
/// velocity are carried over.
pub fn transition_matrix() -> Mat6 {
    let mut d = Mat6::identity();
    d[(0, 4)] = 1.0;
    d[(1, 5)] = 1.0;
    d
}

pub fn apply_dynamics(state: &Vec6) -> Vec6 {
    let mut out = *state;
    out[0] += state[4];
    out[1] += state[5];
    out
}

/// Maps a kinematic state into the detector's observation space.
pub fn project(detector: &DetectorModel, state: &Vec6) -> Vec4 {
    detector.projection() * state + detector.offset()
}

/// One-step predictive distribution: `N(D mu, D Gamma D^T + Lambda)`.
pub fn predict_belief(prev: &GaussianBelief, dynamics_cov: &Mat6) -> Result<GaussianBelief> {
    let d = transition_matrix();
    let cov = d * prev.covariance * d.transpose() + dynamics_cov;
    let belief = GaussianBelief::new(apply_dynamics(&prev.mean), cov)?;
    if !crate::linalg::is_spd(&belief.covariance) {
        return Err(crate::Error::Numeric(
            "predicted covariance is not SPD after jitter".into(),
        ));
    }
    Ok(belief)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg;
    use crate::types::{Mat4, Mat46};
    use proptest::prelude::*;

    fn v6(a: [f64; 6]) -> Vec6 {
        Vec6::from_row_slice(&a)
    }

    #[test]
    fn dynamics_examples() {
        assert_eq!(apply_dynamics(&v6([1., 2., 3., 4., 5., 6.])), v6([6., 8., 3., 4., 5., 6.]));
        assert_eq!(apply_dynamics(&Vec6::zeros()), Vec6::zeros());
        assert_eq!(
            apply_dynamics(&v6([10., 10., 2., 2., -1., 0.])),
            v6([9., 10., 2., 2., -1., 0.])
        );
    }

    #[test]
    fn matrix_and_function_agree() {
        let x = v6([1.5, -2.0, 3.0, 4.0, 0.25, -7.0]);
        assert_eq!(transition_matrix() * x, apply_dynamics(&x));
    }

    #[test]
    fn projection_examples() {
        let body = DetectorModel::identity(Mat4::identity(), 1e-6, 1.0).unwrap();
        let x = v6([1., 2., 3., 4., 5., 6.]);
        assert_eq!(project(&body, &x), Vec4::new(1., 2., 3., 4.));

        let scale = Mat4::from_diagonal(&Vec4::new(1.0, 1.0, 0.5, 0.5));
        let face = DetectorModel::affine(scale, Vec4::zeros(), Mat4::identity(), 1e-6, 1.0).unwrap();
        assert_eq!(project(&face, &x), Vec4::new(1., 2., 1.5, 2.));

        let still = v6([3., 4., 5., 6., 0., 0.]);
        assert_eq!(project(&face, &apply_dynamics(&still)), project(&face, &still));
        assert_eq!(project(&body, &apply_dynamics(&still)), project(&body, &still));
    }

    #[test]
    fn affine_projection_matches_explicit_matrix() {
        let a = Mat4::new(1., 0., 0.25, 0., 0., 1., 0., 0., 0., 0., 0.5, 0., 0., 0., 0., 0.4);
        let face = DetectorModel::affine(a, Vec4::new(1., 2., 0., 0.), Mat4::identity(), 1e-6, 1.0).unwrap();
        let mut expected = Mat46::zeros();
        expected.fixed_view_mut::<4, 4>(0, 0).copy_from(&a);
        assert_eq!(face.projection(), &expected);
        let x = v6([10., 20., 40., 50., 1., 1.]);
        assert_eq!(project(&face, &x), Vec4::new(21., 22., 20., 20.));
    }

    #[test]
    fn predict_examples() {
        let d = transition_matrix();
        let prior = GaussianBelief::new(Vec6::zeros(), Mat6::identity()).unwrap();
        let pred = predict_belief(&prior, &Mat6::zeros()).unwrap();
        assert_eq!(pred.mean, Vec6::zeros());
        assert!((pred.covariance - d * d.transpose()).abs().max() < 1e-15);

        let prior = GaussianBelief {
            mean: v6([1., 2., 3., 4., 5., 6.]),
            covariance: Mat6::zeros(),
        };
        let pred = predict_belief(&prior, &Mat6::identity()).unwrap();
        assert_eq!(pred.mean, v6([6., 8., 3., 4., 5., 6.]));
        assert_eq!(pred.covariance, Mat6::identity());
    }

    fn spd_strategy() -> impl Strategy<Value = Mat6> {
        prop::collection::vec(-2.0f64..2.0, 36).prop_map(|v| {
            let a = Mat6::from_row_slice(&v);
            a * a.transpose() + Mat6::identity() * 0.01
        })
    }

    proptest! {
        #[test]
        fn dynamics_is_linear(
            a in -5.0f64..5.0, b in -5.0f64..5.0,
            x in prop::collection::vec(-100.0f64..100.0, 6),
            y in prop::collection::vec(-100.0f64..100.0, 6),
        ) {
            let x = Vec6::from_row_slice(&x);
            let y = Vec6::from_row_slice(&y);
            let lhs = apply_dynamics(&(x * a + y * b));
            let rhs = apply_dynamics(&x) * a + apply_dynamics(&y) * b;
            prop_assert!((lhs - rhs).abs().max() < 1e-9);
        }

        #[test]
        fn prediction_is_spd_and_grows_trace(gamma in spd_strategy(), lambda in spd_strategy()) {
            let prior = GaussianBelief::new(Vec6::zeros(), gamma).unwrap();
            let pred = predict_belief(&prior, &lambda).unwrap();
            prop_assert!((pred.covariance - pred.covariance.transpose()).abs().max() == 0.0);
            prop_assert!(linalg::min_eigenvalue(&pred.covariance) > 0.0);
            prop_assert!(pred.covariance.trace() >= lambda.trace() - 1e-9);
        }
    }
}
