use defc::deformation::{random_near_identity, Deformation};
use defc::series::Resolution;
use defc::suite::random_triples;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn res() -> Resolution {
    Resolution::default()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn inverse_composes_to_identity(seed in 0u64..10_000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let phi = random_near_identity(&mut rng, 0.05, res());
        let inv = phi.invert().unwrap();
        let id = Deformation::identity(res());
        prop_assert!(phi.compose(&inv).unwrap().distance(&id) < 1e-9);
        prop_assert!(inv.compose(&phi).unwrap().distance(&id) < 1e-9);
    }

    #[test]
    fn identity_is_neutral(seed in 0u64..10_000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let phi = random_near_identity(&mut rng, 0.05, res());
        let id = Deformation::identity(res());
        prop_assert!(phi.compose(&id).unwrap().distance(&phi) < 1e-13);
        prop_assert!(id.compose(&phi).unwrap().distance(&phi) < 1e-13);
    }

    #[test]
    fn rotations_compose_additively(a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let ab = Deformation::rotation(a, res()).compose(&Deformation::rotation(b, res())).unwrap();
        prop_assert!(ab.distance(&Deformation::rotation(a + b, res())) < 1e-13);
    }
}

#[test]
fn associativity_on_random_triples() {
    let mut worst: f64 = 0.0;
    for [a, b, c] in random_triples(11, 100, 0.05, res()) {
        let l = a.compose(&b).unwrap().compose(&c).unwrap();
        let r = a.compose(&b.compose(&c).unwrap()).unwrap();
        worst = worst.max(l.distance(&r));
    }
    assert!(worst <= 1e-9, "{worst}");
}
