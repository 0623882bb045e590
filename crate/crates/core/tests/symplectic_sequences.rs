use proptest::prelude::*;
use tmsi_core::gaussian::{phase_shift_matrix, symplectic_defect, two_mode_squeeze_matrix};
use tmsi_core::GaussianState;

#[derive(Debug, Clone)]
enum Op {
    Squeeze { i: usize, j: usize, r: f64, phi: f64 },
    Phase { i: usize, theta: f64 },
}

fn op(n: usize) -> impl Strategy<Value = Op> {
    prop_oneof![
        (0..n, 1..n, 0.0f64..1.5, -3.2f64..3.2).prop_map(move |(i, d, r, phi)| Op::Squeeze {
            i,
            j: (i + d) % n,
            r,
            phi
        }),
        (0..n, -3.2f64..3.2).prop_map(|(i, theta)| Op::Phase { i, theta }),
    ]
}

proptest! {
    #[test]
    fn random_sequences_stay_symplectic_and_pure(n in 2usize..4, ops in prop::collection::vec(op(3), 1..8)) {
        let mut state = GaussianState::vacuum(n).unwrap();
        let mut total = nalgebra::DMatrix::<f64>::identity(2 * n, 2 * n);
        for o in ops {
            let s = match o {
                Op::Squeeze { i, j, r, phi } if i < n && j < n && i != j => two_mode_squeeze_matrix(n, i, j, r, phi).unwrap(),
                Op::Phase { i, theta } if i < n => phase_shift_matrix(n, i, theta).unwrap(),
                _ => continue,
            };
            state = state.apply_symplectic(&s).unwrap();
            total = &s * &total;
        }
        let scale = total.norm().powi(2).max(1.0);
        prop_assert!(symplectic_defect(&total) <= 1e-9 * scale);
        prop_assert!(state.check_physical());
        // Pure n-mode state: det(cov) = (1/2)^(2n).
        let det = state.cov().determinant();
        prop_assert!((det / 0.5f64.powi(2 * n as i32) - 1.0).abs() < 1e-6, "det ratio {}", det / 0.5f64.powi(2 * n as i32));
    }

    #[test]
    fn squeeze_then_inverse_restores_vacuum(r in 0.0f64..2.0, phi in -3.2f64..3.2) {
        let s = GaussianState::vacuum(2).unwrap()
            .two_mode_squeeze(0, 1, r, phi).unwrap()
            .two_mode_squeeze(0, 1, r, phi + std::f64::consts::PI).unwrap();
        for a in 0..4 {
            for b in 0..4 {
                let expected = if a == b { 0.5 } else { 0.0 };
                prop_assert!((s.cov()[(a, b)] - expected).abs() < 1e-9);
            }
        }
    }
}
