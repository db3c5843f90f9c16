use crbm_core::complex::C64;
use crbm_web::{cpca_errors, density_grid, mixture_run};

#[test]
fn density_grid_integrates_to_one() {
    let (extent, size) = (6.0, 121);
    let grid = density_grid(C64::new(0.5, -0.5), 1.0, C64::from_polar(0.6, 1.0), extent, size).unwrap();
    let cell = (2.0 * extent / (size - 1) as f64).powi(2);
    let mass: f64 = grid.iter().sum::<f64>() * cell;
    assert!((mass - 1.0).abs() < 1e-3, "mass {mass}");
}

#[test]
fn mixture_run_reports_consistent_shapes() {
    let run = mixture_run(0.8, 400, 2, 20, 0.01, 3).unwrap();
    assert_eq!(run.mse().len(), 20);
    assert_eq!(run.data().len(), 800);
    assert_eq!(run.samples().len(), 800);
    assert!((run.data_corr() - 0.8).abs() < 0.05);
    assert!(run.mse().last().unwrap() < &run.mse()[0]);
}

#[test]
fn cpca_curve_is_non_increasing() {
    let errors = cpca_errors(1.0, 1, &[1, 4, 16, 64, 129]);
    let errors = errors.unwrap();
    assert!(errors.windows(2).all(|w| w[1] <= w[0]));
    assert!(errors[4] < 1e-8);
}
