use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use spel_testkit::cases;

#[test]
fn loss_matches_scalar_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..300 {
        cases::check_loss(&mut rng).unwrap();
    }
}

#[test]
fn head_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for i in 0..100 {
        let err = cases::gradient_relative_error(&mut rng).unwrap();
        assert!(err < 1e-4, "instance {i}: relative error {err}");
    }
}

#[test]
fn aggregation_matches_full_table_reference() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for i in 0..1000 {
        if let Err(e) = cases::check_aggregation(&mut rng) {
            panic!("instance {i}: {e}");
        }
    }
}

#[test]
fn mining_invariants() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    for _ in 0..50 {
        cases::check_mining(&mut rng, 40, 20, 6).unwrap();
        cases::check_mining(&mut rng, 12, 11, 1).unwrap();
    }
}

#[test]
fn md_never_below_el() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    for _ in 0..300 {
        cases::check_md_dominates_el(&mut rng).unwrap();
    }
}

#[test]
fn redirect_normalization_is_idempotent() {
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    for _ in 0..200 {
        cases::check_redirects(&mut rng).unwrap();
    }
}
