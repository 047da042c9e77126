use defc::series::{grid, AnalyticLoop, Resolution, C64};
use proptest::prelude::*;

fn coeffs(max_deg: i64) -> impl Strategy<Value = Vec<(i64, C64)>> {
    prop::collection::vec((-max_deg..=max_deg, -1.0f64..1.0, -1.0f64..1.0), 1..12)
        .prop_map(|v| v.into_iter().map(|(n, a, b)| (n, C64::new(a, b))).collect())
}

proptest! {
    #[test]
    fn round_trip_through_samples(modes in 1usize..=128, raw in coeffs(128)) {
        let res = Resolution::new(modes);
        let terms: Vec<_> = raw.into_iter().map(|(n, c)| (n.clamp(-(modes as i64), modes as i64), c)).collect();
        let lp = AnalyticLoop::from_coeffs(&terms, res).unwrap();
        let back = AnalyticLoop::from_samples(lp.samples(), res).unwrap();
        let scale = lp.scale().max(1e-300);
        prop_assert!(lp.coeff_distance(&back) <= 1e-13 * scale);
    }

    #[test]
    fn evaluation_on_grid_matches_samples(raw in coeffs(32)) {
        let res = Resolution::default();
        let lp = AnalyticLoop::from_coeffs(&raw, res).unwrap();
        for (k, z) in grid(res.samples).into_iter().enumerate().step_by(7) {
            let e = lp.evaluate(z).unwrap();
            prop_assert!((e.value - lp.samples()[k]).norm() <= 1e-12 * lp.scale().max(1.0));
        }
    }

    #[test]
    fn winding_is_refinement_invariant(a in -0.4f64..0.4, b in -0.4f64..0.4, k in 1i64..4, p in -0.5f64..0.5, q in -0.5f64..0.5) {
        let terms = [(1, C64::new(1.0, 0.0)), (k + 1, C64::new(a, b))];
        let coarse = AnalyticLoop::from_coeffs(&terms, Resolution::new(16)).unwrap();
        let fine = AnalyticLoop::from_coeffs(&terms, Resolution::with_samples(16, 128).unwrap()).unwrap();
        let about = C64::new(p, q);
        match (coarse.winding_number(about), fine.winding_number(about)) {
            (Ok(x), Ok(y)) => prop_assert_eq!(x, y),
            (Err(_), _) | (_, Err(_)) => {}
        }
    }

    #[test]
    fn derivative_then_antiderivative(raw in coeffs(40)) {
        let res = Resolution::default();
        let terms: Vec<_> = raw.into_iter().filter(|(n, _)| *n != -64).collect();
        let lp = AnalyticLoop::from_coeffs(&terms, res).unwrap();
        let d = lp.derivative();
        for n in -63i64..=64 {
            if n == 0 {
                continue;
            }
            // the antiderivative of z^(n-1) is z^n / n; degree -1 never appears in a derivative
            let rebuilt = d.coeff(n - 1) / n as f64;
            prop_assert!((rebuilt - lp.coeff(n)).norm() <= 1e-15 * lp.coeff(n).norm().max(1.0));
        }
        prop_assert_eq!(d.coeff(-1), C64::new(0.0, 0.0));
    }
}
