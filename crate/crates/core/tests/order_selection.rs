use psiroot_core::basis::ContinuousBasis;
use psiroot_core::estimator::{select_order, EstimationConfig};
use psiroot_core::sampling::{rng_from_seed, sample_continuous_with};
use psiroot_core::state::{BasisTag, StateVector};

#[test]
fn ground_state_data_selects_a_small_order() {
    let basis = ContinuousBasis::new(1).unwrap();
    let truth = StateVector::basis_state(1, 0, BasisTag::of_continuous(&basis)).unwrap();
    let sizes: Vec<usize> = (1..=8).collect();
    let trials = 20;
    let mut small = 0;
    for trial in 0..trials {
        let mut rng = rng_from_seed(900 + trial);
        let obs = sample_continuous_with(&truth, &basis, 2000, 0, &mut rng).unwrap();
        let config = EstimationConfig {
            seed: trial,
            ..EstimationConfig::default()
        };
        let selection = select_order(&obs, &basis, &sizes, &config).unwrap();
        assert_eq!(selection.candidates.len(), 8);
        if selection.chosen <= 3 {
            small += 1;
        }
    }
    assert!(small * 10 >= trials * 9, "{small} of {trials}");
}
