use tumorscope::harness::{blob_iou, finite_diff, relative_error, OracleReport};

#[test]
fn finite_diff_of_sum_is_ones() {
    let x = [0.3, -1.2, 4.0, 7.5];
    let g = finite_diff(|v| v.iter().sum(), &x, 1e-5).unwrap();
    assert!(g.iter().all(|v| (v - 1.0).abs() < 1e-10));
}

#[test]
fn finite_diff_of_half_norm_is_identity() {
    let x = [0.3, -1.2, 4.0, 7.5];
    let g = finite_diff(|v| 0.5 * v.iter().map(|a| a * a).sum::<f64>(), &x, 1e-5).unwrap();
    for (a, b) in g.iter().zip(&x) {
        assert!((a - b).abs() < 1e-8);
    }
}

#[test]
fn finite_diff_rejects_non_finite() {
    assert!(finite_diff(|v| if v[0] > 1.0 { f64::NAN } else { v[0] }, &[1.0], 1e-5).is_err());
    assert!(finite_diff(|v| v[0], &[1.0], 0.0).is_err());
}

#[test]
fn relative_error_is_normwise() {
    assert_eq!(relative_error(&[3.0, 4.0], &[3.0, 4.0]), 0.0);
    assert!((relative_error(&[3.0, 4.0], &[0.0, 0.0]) - 1.0).abs() < 1e-15);
}

#[test]
fn iou_of_mask_against_itself() {
    let mask: Vec<bool> = (0..100).map(|i| i % 10 < 3 && i / 10 < 4).collect();
    let heat: Vec<f32> = mask.iter().enumerate().map(|(i, &m)| if m { 1.0 + i as f32 } else { 0.1 }).collect();
    let area = mask.iter().filter(|&&m| m).count() as f64 / 100.0;
    assert_eq!(blob_iou(&heat, &mask, area).unwrap(), 1.0);
    assert!(blob_iou(&heat, &mask, area / 2.0).unwrap() < 1.0);
}

#[test]
fn iou_of_disjoint_regions_is_zero() {
    let mask: Vec<bool> = (0..100).map(|i| i < 20).collect();
    let heat: Vec<f32> = (0..100).map(|i| if i >= 80 { 1.0 } else { 0.0 }).collect();
    assert_eq!(blob_iou(&heat, &mask, 0.2).unwrap(), 0.0);
}

#[test]
fn iou_rejects_bad_arguments() {
    assert!(blob_iou(&[0.0; 4], &[false; 3], 0.2).is_err());
    assert!(blob_iou(&[0.0; 4], &[false; 4], 1.0).is_err());
}

#[test]
fn oracle_report_pass_iff_within_tolerance() {
    assert!(OracleReport::new("op", 1e-5, 1e-4, 0).passed);
    assert!(!OracleReport::new("op", 2e-4, 1e-4, 0).passed);
    let worst = OracleReport::worst(&[OracleReport::new("a", 1e-6, 1e-4, 1), OracleReport::new("b", 1e-5, 1e-4, 2)]).unwrap();
    assert_eq!(worst.op, "b");
}
