use defc::deformation::random_near_identity;
use defc::series::{AnalyticLoop, Resolution, C64};
use defc::witt::{self, exact_flow, flow_ode, TimeField, VectorField};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn res() -> Resolution {
    Resolution::default()
}

fn field() -> impl Strategy<Value = VectorField> {
    prop::collection::vec((-4i64..=4, -1.0f64..1.0, -1.0f64..1.0), 1..6).prop_map(|t| {
        let terms: Vec<(i64, C64)> = t.into_iter().map(|(n, a, b)| (n, C64::new(a, b))).collect();
        VectorField::new(AnalyticLoop::from_coeffs(&terms, res()).unwrap())
    })
}

fn gen(n: i64) -> VectorField {
    VectorField::generator(n, res()).unwrap()
}

proptest! {
    #[test]
    fn jacobi(u in field(), v in field(), w in field()) {
        let b = |a: &VectorField, c: &VectorField| a.bracket(c).unwrap();
        let total = b(&u, &b(&v, &w)).add(&b(&v, &b(&w, &u))).add(&b(&w, &b(&u, &v)));
        prop_assert!(total.as_loop().scale() < 1e-11);
    }

    #[test]
    fn bracket_is_antisymmetric(u in field(), v in field()) {
        let s = u.bracket(&v).unwrap().add(&v.bracket(&u).unwrap());
        prop_assert!(s.as_loop().scale() < 1e-13);
    }

    #[test]
    fn witt_relations(n in -16i64..=16, m in -16i64..=16) {
        let lhs = gen(n).bracket(&gen(m)).unwrap();
        let rhs = gen(n + m).scale(C64::new((n - m) as f64, 0.0));
        prop_assert_eq!(lhs.distance(&rhs), 0.0);
    }

    #[test]
    fn pullback_is_functorial(seed in 0u64..1000, v in field()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let phi = random_near_identity(&mut rng, 0.05, res());
        let psi = random_near_identity(&mut rng, 0.05, res());
        let both = phi.compose(&psi).unwrap();
        let lhs = v.pullback(both.as_loop()).unwrap();
        let rhs = v.pullback(phi.as_loop()).unwrap().pullback(psi.as_loop()).unwrap();
        prop_assert!(lhs.distance(&rhs) < 1e-10 * v.as_loop().scale().max(1.0));
    }

    #[test]
    fn one_parameter_law(n in -2i64..=2, s in -0.1f64..0.1, t in -0.1f64..0.1) {
        let a = exact_flow(n, s, res()).unwrap();
        let b = exact_flow(n, t, res()).unwrap();
        let ab = a.compose(&b).unwrap();
        prop_assert!(ab.distance(&exact_flow(n, s + t, res()).unwrap()) < 1e-12);
    }
}

#[test]
fn inversion_pullback() {
    for n in -16..=16 {
        let lhs = gen(n).pullback(&AnalyticLoop::inversion(res())).unwrap();
        assert!(lhs.distance(&gen(-n).scale(C64::new(-1.0, 0.0))) < 1e-12, "n = {n}");
    }
}

#[test]
fn ode_matches_exact_flows() {
    for n in -2..=2 {
        for t in [-0.2, 0.2] {
            let ode = flow_ode(&TimeField::constant(gen(n)), t, 1000).unwrap();
            assert!(ode.map.distance(&exact_flow(n, t, res()).unwrap()) < 1e-8, "n = {n}, t = {t}");
        }
    }
}

#[test]
fn curve_recovers_generator() {
    let v = gen(2);
    let (left, _) = witt::curve_to_field(|t| witt::flow(&v, t), 0.0, 1e-4).unwrap();
    assert!(left.distance(&v) < 1e-7);
}
