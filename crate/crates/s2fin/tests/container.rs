use std::fs;

use proptest::prelude::*;
use s2fin::container::*;
use s2fin::Error;
use s2fin_core::data::Scene;

fn scene(h: usize, w: usize, bands: usize, active: usize, classes: usize, seed: u32) -> Scene {
    let px = h * w;
    let f = |i: usize, salt: u32| f32::from_bits(((i as u32).wrapping_mul(2654435761) ^ seed ^ salt) & 0x7f7f_ffff);
    Scene {
        height: h,
        width: w,
        spectral_bands: bands,
        active_channels: active,
        class_count: classes,
        spectral: (0..bands * px).map(|i| f(i, 1)).collect(),
        active: (0..active * px).map(|i| f(i, 2)).collect(),
        labels: (0..px).map(|i| ((i as u32 + seed) % (classes as u32 + 1)) as u16).collect(),
    }
}

#[test]
fn two_by_two_single_band_payload_is_sixteen_bytes() {
    let dir = tempfile::tempdir().unwrap();
    write_scene(&SceneContainer::new(scene(2, 2, 1, 1, 2, 0)), dir.path()).unwrap();
    assert_eq!(fs::metadata(dir.path().join(SPECTRAL_FILE)).unwrap().len(), 16);
    assert_eq!(fs::metadata(dir.path().join(ACTIVE_FILE)).unwrap().len(), 16);
    assert_eq!(fs::metadata(dir.path().join(LABELS_FILE)).unwrap().len(), 8);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]
    #[test]
    fn round_trip_is_bit_exact(h in 1usize..9, w in 1usize..9, bands in 1usize..5, active in 1usize..3, classes in 1usize..6, seed in any::<u32>()) {
        let dir = tempfile::tempdir().unwrap();
        let original = SceneContainer::new(scene(h, w, bands, active, classes, seed));
        write_scene(&original, dir.path()).unwrap();
        let back = read_scene(dir.path()).unwrap();
        prop_assert_eq!(&back.class_names, &original.class_names);
        let bits = |v: &[f32]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        prop_assert_eq!(bits(&back.scene.spectral), bits(&original.scene.spectral));
        prop_assert_eq!(bits(&back.scene.active), bits(&original.scene.active));
        prop_assert_eq!(&back.scene.labels, &original.scene.labels);
        prop_assert_eq!((back.scene.height, back.scene.width), (h, w));
    }
}

#[test]
fn truncated_payload_names_byte_counts() {
    let dir = tempfile::tempdir().unwrap();
    write_scene(&SceneContainer::new(scene(3, 4, 2, 1, 3, 5)), dir.path()).unwrap();
    let path = dir.path().join(SPECTRAL_FILE);
    let bytes = fs::read(&path).unwrap();
    fs::write(&path, &bytes[..bytes.len() - 3]).unwrap();
    match read_scene(dir.path()) {
        Err(e @ Error::PayloadSize { .. }) => {
            let msg = e.to_string();
            assert!(msg.contains("96") && msg.contains("93"), "{msg}");
            assert_eq!(e.exit_code(), 6);
        }
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn oversized_label_payload_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    write_scene(&SceneContainer::new(scene(2, 2, 1, 1, 2, 0)), dir.path()).unwrap();
    let path = dir.path().join(LABELS_FILE);
    let mut bytes = fs::read(&path).unwrap();
    bytes.extend_from_slice(&[0, 0]);
    fs::write(&path, bytes).unwrap();
    assert!(matches!(read_scene(dir.path()), Err(Error::PayloadSize { expected: 8, actual: 10, .. })));
}

#[test]
fn unknown_keys_warn_but_load() {
    let dir = tempfile::tempdir().unwrap();
    write_scene(&SceneContainer::new(scene(2, 3, 1, 1, 2, 1)), dir.path()).unwrap();
    let path = dir.path().join(MANIFEST_FILE);
    let text = fs::read_to_string(&path).unwrap() + "sensor = \"lidar\"\n";
    fs::write(&path, text).unwrap();
    let (c, warnings) = read_scene_with_warnings(dir.path()).unwrap();
    assert_eq!(c.scene.width, 3);
    assert_eq!(warnings.len(), 1);
    assert!(warnings[0].contains("sensor"));
}

#[test]
fn label_above_class_count_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    write_scene(&SceneContainer::new(scene(2, 2, 1, 1, 2, 0)), dir.path()).unwrap();
    fs::write(dir.path().join(LABELS_FILE), [1, 0, 3, 0, 0, 0, 2, 0]).unwrap();
    assert!(matches!(read_scene(dir.path()), Err(Error::Format { .. })));
}

#[test]
fn missing_payload_and_bad_manifest() {
    let dir = tempfile::tempdir().unwrap();
    assert!(matches!(read_scene(dir.path()), Err(Error::MissingFile { .. })));
    write_scene(&SceneContainer::new(scene(2, 2, 1, 1, 2, 0)), dir.path()).unwrap();
    fs::remove_file(dir.path().join(ACTIVE_FILE)).unwrap();
    assert!(matches!(read_scene(dir.path()), Err(Error::MissingFile { .. })));
    fs::write(dir.path().join(MANIFEST_FILE), "height = \"tall\"").unwrap();
    assert!(matches!(read_scene(dir.path()), Err(Error::Format { .. })));
}

#[test]
fn nodata_code_maps_to_unlabeled() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = SceneContainer::new(scene(2, 2, 1, 1, 2, 0));
    c.scene.labels = vec![0, 1, 2, 0];
    c.nodata = 65535;
    write_scene(&c, dir.path()).unwrap();
    let raw = fs::read(dir.path().join(LABELS_FILE)).unwrap();
    assert_eq!(&raw[..2], &[255, 255]);
    assert_eq!(read_scene(dir.path()).unwrap(), c);
}
