#[path = "suites/oracle.rs"]
mod oracle;

#[test]
fn core_formulas_match_references() {
    let checks = oracle::run().unwrap();
    assert!(checks >= 20 * 10, "only {checks} comparisons ran");
}

#[test]
fn jacobi_reference_diagonalises() {
    let a = nalgebra::DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 0.5, 1.0, 3.0, 0.2, 0.5, 0.2, 1.0]);
    let (values, vectors) = oracle::jacobi_eigen(&a);
    let recon = &vectors * nalgebra::DMatrix::from_diagonal(&nalgebra::DVector::from_vec(values.clone())) * vectors.transpose();
    assert!((recon - &a).norm() < 1e-12);
    assert!(values.windows(2).all(|w| w[0] >= w[1]));
}

#[test]
fn pair_reference_examples() {
    assert_eq!(oracle::reference_pair_indices(&[1, 1, 2, 2], &[1, 1, 2, 2]), (1.0, Some(1.0)));
    let (ri, _) = oracle::reference_pair_indices(&[1, 1, 2, 2], &[1, 2, 1, 2]);
    assert!((ri - 1.0 / 3.0).abs() < 1e-15);
}
