mod common;

use std::fs;

use common::{idx_images, idx_labels};
use normgen::io::{load_cifar_binary, load_idx, CifarVariant, CIFAR_IMAGE_BYTES};
use normgen::LabError;

#[test]
fn two_image_idx_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let (img, lab) = (dir.path().join("img"), dir.path().join("lab"));
    let pixels = [0u8, 51, 102, 255, 10, 20, 30, 40];
    fs::write(&img, idx_images(2, 2, 2, &pixels)).unwrap();
    fs::write(&lab, idx_labels(&[3, 9])).unwrap();
    let ds = load_idx(&img, &lab, 10).unwrap();
    assert_eq!(ds.images().shape(), &[2, 1, 2, 2]);
    assert_eq!(ds.labels(), &[3, 9]);
    let expect: Vec<f32> = pixels.iter().map(|&p| p as f32 / 255.0).collect();
    assert_eq!(ds.images().data(), &expect[..]);
    assert_eq!(ds.provenance().source_digest.len(), 64);
}

#[test]
fn idx_errors_name_the_file() {
    let dir = tempfile::tempdir().unwrap();
    let (img, lab) = (dir.path().join("img"), dir.path().join("lab"));
    let mut bad = idx_images(1, 2, 2, &[0; 4]);
    bad[3] = 9;
    fs::write(&img, &bad).unwrap();
    fs::write(&lab, idx_labels(&[1])).unwrap();
    let err = load_idx(&img, &lab, 10).unwrap_err();
    assert!(matches!(&err, LabError::Format { path, .. } if *path == img), "{err}");
    assert!(err.to_string().contains("magic"));

    fs::write(&img, idx_images(1, 2, 2, &[0; 4])).unwrap();
    fs::write(&lab, idx_labels(&[12])).unwrap();
    let err = load_idx(&img, &lab, 10).unwrap_err();
    assert!(err.to_string().contains("label 12"), "{err}");

    fs::write(&lab, idx_labels(&[1, 2])).unwrap();
    assert!(load_idx(&img, &lab, 10).is_err());

    fs::write(&img, idx_images(1, 2, 2, &[0; 3])).unwrap();
    fs::write(&lab, idx_labels(&[1])).unwrap();
    assert!(load_idx(&img, &lab, 10).is_err());

    let missing = dir.path().join("nope");
    let err = load_idx(&missing, &lab, 10).unwrap_err();
    assert!(matches!(err, LabError::Io { path, .. } if path == missing));
}

fn cifar_record(labels: &[u8], fill: impl Fn(usize) -> u8) -> Vec<u8> {
    let mut r = labels.to_vec();
    r.extend((0..CIFAR_IMAGE_BYTES).map(fill));
    r
}

#[test]
fn cifar10_record_is_channel_major() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("batch.bin");
    // value encodes the channel: 0, 1 or 2
    let mut bytes = cifar_record(&[7], |i| (i / 1024) as u8);
    bytes.extend(cifar_record(&[2], |i| (i % 256) as u8));
    fs::write(&p, &bytes).unwrap();
    let ds = load_cifar_binary(&[p], CifarVariant::Cifar10).unwrap();
    assert_eq!(ds.images().shape(), &[2, 3, 32, 32]);
    assert_eq!(ds.labels(), &[7, 2]);
    let first = &ds.images().data()[..CIFAR_IMAGE_BYTES];
    assert_eq!(first[0], 0.0);
    assert_eq!(first[1024], 1.0 / 255.0);
    assert_eq!(first[2048 + 1023], 2.0 / 255.0);
}

#[test]
fn cifar100_uses_the_fine_label() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("train.bin");
    fs::write(&p, cifar_record(&[4, 87], |_| 0)).unwrap();
    let ds = load_cifar_binary(&[p], CifarVariant::Cifar100).unwrap();
    assert_eq!(ds.labels(), &[87]);
    assert_eq!(ds.class_count(), 100);
}

#[test]
fn cifar_misalignment_and_range() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("b.bin");
    let mut bytes = cifar_record(&[1], |_| 0);
    bytes.pop();
    fs::write(&p, &bytes).unwrap();
    assert!(load_cifar_binary(&[p.clone()], CifarVariant::Cifar10).unwrap_err().to_string().contains("multiple"));
    fs::write(&p, cifar_record(&[10], |_| 0)).unwrap();
    assert!(load_cifar_binary(&[p], CifarVariant::Cifar10).is_err());
    assert!(load_cifar_binary(&[], CifarVariant::Cifar10).is_err());
}
