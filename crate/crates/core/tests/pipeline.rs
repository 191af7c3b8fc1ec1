use sdl_core::{
    gaussian_kernel, inversion_complexity, linear_schedule, reconstruction_error, reverse_distribution,
    swiss_roll_distribution, total_variation, Distribution, DistributionF32, ForwardProcess, ForwardProcessF32,
    GridSpec, GridSpecF32, MetricOptions, NoiseFamily, ReverseSampler, ScheduleFamily, StepKernels, SwissRoll,
    TransitionKernelF32,
};

fn forward<S: sdl_core::Scalar>(n: usize, steps: usize) -> ForwardProcess<S> {
    let grid = GridSpec::<S>::unit_square(n).unwrap();
    let data = swiss_roll_distribution(&grid, &SwissRoll::default()).unwrap();
    let schedule = linear_schedule(ScheduleFamily::Gaussian, S::lit(0.03), S::lit(0.04), steps).unwrap();
    ForwardProcess::new(data, StepKernels::scheduled(grid, NoiseFamily::Gaussian, schedule).unwrap()).unwrap()
}

#[test]
fn reverse_process_recovers_the_data_on_a_small_grid() {
    let f: ForwardProcess = forward(11, 20);
    let p_s = reverse_distribution(&ReverseSampler::new(&f)).unwrap();
    let opts = MetricOptions::default();
    let err = reconstruction_error(&f, &p_s, &opts).unwrap();
    assert!(err < 0.1, "reconstruction error {err}");
    assert!(total_variation(&p_s, f.data()).unwrap() < total_variation(f.noise(), f.data()).unwrap());
    assert!(inversion_complexity(&f, &opts).unwrap() > 0.0);
}

#[test]
fn lazy_and_materialized_samplers_agree() {
    let f: ForwardProcess = forward(7, 6);
    let lazy = ReverseSampler::new(&f).reverse_path().unwrap();
    let kept = ReverseSampler::materialized(&f).unwrap().reverse_path().unwrap();
    assert_eq!(lazy.distributions, kept.distributions);
}

#[test]
fn single_precision_tracks_double_precision() {
    let f64_run: ForwardProcess = forward(9, 8);
    let f32_run: ForwardProcessF32 = forward(9, 8);
    let a = reverse_distribution(&ReverseSampler::new(&f64_run)).unwrap();
    let b: DistributionF32 = reverse_distribution(&ReverseSampler::new(&f32_run)).unwrap();
    let gap = a.mass().iter().zip(b.mass()).map(|(x, &y)| (x - y as f64).abs()).fold(0.0, f64::max);
    assert!(gap < 1e-4, "f32 deviates by {gap}");
}

#[test]
fn f32_aliases_build_and_apply() {
    let grid = GridSpecF32::unit_square(5).unwrap();
    let k: TransitionKernelF32 = gaussian_kernel(&grid, 0.1).unwrap();
    let d = k.apply(&Distribution::uniform(grid)).unwrap();
    assert!((d.total() - 1.0).abs() < 1e-5);
}

#[test]
fn csv_round_trip_preserves_every_bit() {
    let f: ForwardProcess = forward(6, 3);
    let mut buf = Vec::new();
    f.marginal(2).write_csv(&mut buf).unwrap();
    let back = Distribution::read_csv(buf.as_slice(), None).unwrap();
    assert_eq!(&back, f.marginal(2));
}
