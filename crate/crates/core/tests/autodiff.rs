mod common;

use common::gradcheck::all_ops;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]
    #[test]
    fn every_op_matches_finite_differences(seed in any::<u64>()) {
        for (op, err) in all_ops(seed) {
            prop_assert!(err <= 1e-4, "{} relative error {}", op, err);
        }
    }
}

#[test]
fn checker_flags_a_wrong_backward() {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
    let x = mixq::tensor::Tensor::vector(vec![0.5, -1.0, 2.0]);
    let err = common::gradcheck::check(&mut rng, &[x], |tape, v| {
        tape.custom(
            &[v[0]],
            |t| Ok(t[0].map(|a| a * a)),
            |g, t| vec![Some(g.zip_map(&t[0], |g, a| g * a))],
        )
        .unwrap()
    });
    assert!(err > 0.4, "{err}");
}
