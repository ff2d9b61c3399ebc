use std::sync::{Arc, OnceLock};

use bubblelab::diagnostics::{difference_functional, localized_mass, mass, MorawetzWeight};
use bubblelab::evolution::Propagator;
use bubblelab::ground_state::{DirectionFields, GroundState, RadialMesh};
use bubblelab::io::{encode_checkpoint, read_checkpoint, write_checkpoint};
use bubblelab::modulation::{scal, Localizers};
use bubblelab::profiles::{Anchor, BubbleParams, BubbleSet};
use bubblelab::spectral::{l2_norm, make_grid, Field, Grid};
use bubblelab::Complex64;
use proptest::prelude::*;

fn gs1() -> Arc<GroundState> {
    static GS: OnceLock<Arc<GroundState>> = OnceLock::new();
    GS.get_or_init(|| GroundState::solve(1, &RadialMesh::default()).unwrap()).clone()
}

fn grid1() -> Arc<Grid> {
    make_grid(1, 16.0, 256).unwrap()
}

/// Smooth field from a few Gaussian bumps with the given coefficients.
fn bumps(grid: &Arc<Grid>, coeffs: &[(f64, f64, f64)]) -> Field {
    Field::from_fn(grid, |x| {
        coeffs
            .iter()
            .enumerate()
            .map(|(k, &(c, re, im))| {
                let w = 0.7 + 0.3 * k as f64;
                Complex64::new(re, im) * (-((x[0] - c) / w).powi(2)).exp()
            })
            .sum()
    })
}

fn coeffs() -> impl Strategy<Value = Vec<(f64, f64, f64)>> {
    prop::collection::vec((-5.0..5.0f64, -1.0..1.0f64, -1.0..1.0f64), 1..4)
}

fn two_bubbles(gap: f64) -> BubbleSet {
    BubbleSet::new(
        1,
        vec![
            Anchor { omega: 1.0, center: [-gap, 0.0], phase: 0.0 },
            Anchor { omega: 1.3, center: [gap, 0.0], phase: 0.5 },
        ],
    )
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn split_steps_preserve_mass(c in coeffs(), dt in -0.01..0.01f64) {
        let grid = grid1();
        let u = bumps(&grid, &c);
        let mut p = Propagator::new(&grid, None).unwrap();
        let m0 = mass(&u);
        let mut v = u.clone();
        p.nonlinear_step(&mut v, dt);
        prop_assert!((mass(&v) - m0).abs() <= 1e-12 * m0.max(1.0));
        p.linear_step(&mut v, 0.0, dt).unwrap();
        prop_assert!((mass(&v) - m0).abs() <= 1e-12 * m0.max(1.0));
    }

    #[test]
    fn step_then_reverse_returns(c in coeffs(), dt in 1e-4..5e-3f64) {
        let grid = grid1();
        let u = bumps(&grid, &c);
        let mut p = Propagator::new(&grid, None).unwrap();
        let v = p.step(&u, 0.0, dt).unwrap();
        let back = p.step(&v, dt, -dt).unwrap();
        prop_assert!(l2_norm(&(&back - &u)) <= 1e-11 * l2_norm(&u).max(1.0));
    }

    #[test]
    fn difference_functional_is_quadratic(c in coeffs(), s in -3.0..3.0f64, lam in 0.2..2.0f64) {
        let grid = grid1();
        let loc = Localizers::new(&two_bubbles(4.0), &grid).unwrap();
        let w = bumps(&grid, &c);
        let d = difference_functional(&w, &loc, &[lam, 1.3 * lam]).unwrap();
        let ds = difference_functional(&(&w * s), &loc, &[lam, 1.3 * lam]).unwrap();
        prop_assert!((ds - s * s * d).abs() <= 1e-12 * d.max(1e-300) * s.abs().max(1.0).powi(2));
    }

    #[test]
    fn localized_masses_partition_total(c in coeffs(), gap in 2.0..6.0f64) {
        let grid = grid1();
        let loc = Localizers::new(&two_bubbles(gap), &grid).unwrap();
        let u = bumps(&grid, &c);
        let parts = localized_mass(&u, &loc).unwrap();
        prop_assert!((parts.iter().sum::<f64>() - mass(&u)).abs() <= 1e-12 * mass(&u).max(1e-300));
        prop_assert!(loc.partition_error() <= 1e-14);
    }

    /// Scal vanishes at zero and is locally Lipschitz: on the ball of radius
    /// `r`, `|Scal(a) − Scal(b)| ≤ 2 r ‖g‖² ‖a − b‖`, `g` the stacked directions.
    #[test]
    fn scal_is_locally_lipschitz(a in coeffs(), b in coeffs()) {
        let grid = grid1();
        let dirs = DirectionFields::new(&grid, &gs1()).unwrap();
        prop_assert_eq!(scal(&Field::zeros(&grid), &dirs).unwrap().value, 0.0);
        let fa = bumps(&grid, &a);
        let fb = bumps(&grid, &b);
        let sa = scal(&fa, &dirs).unwrap().value;
        let sb = scal(&fb, &dirs).unwrap().value;
        let r = l2_norm(&fa).max(l2_norm(&fb));
        let g2: f64 = [&dirs.q, &dirs.r2q, &dirs.lambda_q, &dirs.rho]
            .iter()
            .chain(dirs.yq.iter().collect::<Vec<_>>().iter())
            .chain(dirs.grad_q.iter().collect::<Vec<_>>().iter())
            .map(|v| v.iter().map(|x| x * x).sum::<f64>() * grid.cell_volume())
            .sum();
        prop_assert!((sa - sb).abs() <= 2.0 * r * g2 * l2_norm(&(&fa - &fb)) + 1e-14);
    }

    #[test]
    fn parameter_vectors_round_trip(lambda in 0.1..3.0f64, a in -5.0..5.0f64, b in -2.0..2.0f64, g in -2.0..2.0f64, th in -7.0..7.0f64) {
        for dim in [1usize, 2] {
            let p = BubbleParams {
                lambda,
                alpha: [a, if dim == 2 { -a } else { 0.0 }],
                beta: [b, if dim == 2 { 0.5 * b } else { 0.0 }],
                gamma: g,
                theta: th,
            };
            let v = p.to_vec(dim);
            prop_assert_eq!(v.len(), BubbleParams::count(dim));
            prop_assert_eq!(BubbleParams::from_slice(dim, &v), p);
        }
    }

    #[test]
    fn checkpoints_round_trip_bitwise(c in coeffs(), t in -1.0..1.0f64) {
        let grid = grid1();
        let u = bumps(&grid, &c);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.bin");
        write_checkpoint(&path, t, &u).unwrap();
        let (t2, v) = read_checkpoint(&path, Some(&grid)).unwrap();
        prop_assert_eq!(t2.to_bits(), t.to_bits());
        prop_assert_eq!(encode_checkpoint(t2, &v), encode_checkpoint(t, &u));
    }

    #[test]
    fn morawetz_gradient_is_radial(x in -30.0..30.0f64, y in -30.0..30.0f64, a in 1.0..20.0f64) {
        let w = MorawetzWeight::new(a).unwrap();
        let g = w.grad_chi_a([x, y]);
        // Parallel to x and no longer than |x| (ψ'(r) ≤ r).
        prop_assert!((g[0] * y - g[1] * x).abs() <= 1e-9 * (x.abs() + y.abs()).max(1.0).powi(2));
        prop_assert!(g[0].hypot(g[1]) <= x.hypot(y) * (1.0 + 1e-12));
    }
}
