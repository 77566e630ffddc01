use s2fin::synth::*;
use s2fin::Error;

#[test]
fn zero_noise_pixels_equal_prototypes() {
    let spec = SyntheticSceneSpec::with_random_prototypes(20, 24, 6, 2, 3, 0.0, 4);
    let c = synth_scene(&spec, 4).unwrap();
    let s = &c.scene;
    let px = s.height * s.width;
    for i in 0..px {
        let p = &spec.prototypes[s.labels[i] as usize - 1];
        for b in 0..6 {
            assert_eq!(s.spectral[b * px + i], p.spectral[b]);
        }
        for a in 0..2 {
            assert_eq!(s.active[a * px + i], p.active[a]);
        }
    }
}

#[test]
fn same_seed_same_scene() {
    let spec = SyntheticSceneSpec::with_random_prototypes(32, 32, 8, 2, 4, 0.1, 9);
    assert_eq!(synth_scene(&spec, 9).unwrap(), synth_scene(&spec, 9).unwrap());
    assert_ne!(synth_scene(&spec, 9).unwrap(), synth_scene(&spec, 10).unwrap());
}

#[test]
fn every_class_covers_one_percent() {
    for seed in 0..100 {
        let spec = SyntheticSceneSpec::with_random_prototypes(48, 40, 4, 1, 5, 0.1, seed);
        let c = synth_scene(&spec, seed).unwrap();
        let mut counts = [0usize; 6];
        for &l in &c.scene.labels {
            counts[l as usize] += 1;
        }
        assert_eq!(counts[0], 0);
        for k in 1..=5 {
            assert!(counts[k] as f64 >= 0.01 * (48 * 40) as f64, "seed {seed} class {k}: {}", counts[k]);
        }
    }
}

#[test]
fn noise_has_requested_spread() {
    let spec = SyntheticSceneSpec::with_random_prototypes(64, 64, 3, 1, 2, 0.1, 1);
    let c = synth_scene(&spec, 1).unwrap();
    let px = 64 * 64;
    let resid: Vec<f64> = (0..px)
        .map(|i| (c.scene.spectral[i] - spec.prototypes[c.scene.labels[i] as usize - 1].spectral[0]) as f64)
        .collect();
    let mean = resid.iter().sum::<f64>() / px as f64;
    let sd = (resid.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / px as f64).sqrt();
    assert!(mean.abs() < 0.01 && (sd - 0.1).abs() < 0.01, "{mean} {sd}");
}

#[test]
fn prototypes_are_distinct() {
    let spec = SyntheticSceneSpec::with_random_prototypes(8, 8, 8, 2, 15, 0.1, 3);
    spec.validate().unwrap();
    let mut dup = spec.clone();
    dup.prototypes[3] = dup.prototypes[1].clone();
    assert!(matches!(synth_scene(&dup, 0), Err(Error::Usage(_))));
}

#[test]
fn invalid_specs_are_rejected() {
    let one = SyntheticSceneSpec::with_random_prototypes(8, 8, 4, 1, 1, 0.1, 0);
    assert!(synth_scene(&one, 0).is_err());
    let noisy = SyntheticSceneSpec::with_random_prototypes(8, 8, 4, 1, 2, -1.0, 0);
    assert!(synth_scene(&noisy, 0).is_err());
}

#[test]
fn infeasible_layout_is_an_error() {
    let spec = SyntheticSceneSpec::with_random_prototypes(3, 3, 2, 1, 12, 0.0, 0);
    assert!(matches!(synth_scene(&spec, 0), Err(Error::Infeasible(_))));
}
