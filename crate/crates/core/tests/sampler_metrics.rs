use difflab::lab::{catalog, CatalogName};
use difflab::metrics::{endpoint_bounds, tv_binned, tv_quadrature_1d, w2_empirical_1d, w2_gaussian_exact};
use difflab::rng::substream;
use difflab::sampler::{
    ddpm_step, run_sampler, terminal_unsmoothing_scale, AnalyticScore, CorruptedScore, Init, Perturbation,
    SamplerOptions,
};
use difflab::{IsotropicGaussianMixture, Schedule};
use proptest::prelude::*;
use rand::Rng;
use rand_distr::StandardNormal;

fn two_gaussian() -> IsotropicGaussianMixture {
    IsotropicGaussianMixture::new(1, vec![(0.5, vec![-0.5], 1e-4), (0.5, vec![0.5], 1e-4)]).unwrap()
}

fn first_coords(samples: &[Vec<f64>]) -> Vec<f64> {
    samples.iter().map(|x| x[0]).collect()
}

fn mean_var(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    (m, v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0))
}

#[test]
fn exact_step_matches_euler_maruyama() {
    let (x0, s, h) = (0.7, -1.3, 0.05);
    let substeps = 1000;
    let dt = h / substeps as f64;
    let paths = 20_000;
    let mut rng = substream(21, &[0]);
    let ends: Vec<f64> = (0..paths)
        .map(|_| {
            let mut x = x0;
            for _ in 0..substeps {
                x += (x + 2.0 * s) * dt + (2.0 * dt).sqrt() * rng.sample::<f64, _>(StandardNormal);
            }
            x
        })
        .collect();
    let (m, v) = mean_var(&ends);
    let (mean, std) = ddpm_step(&[x0], &[s], h).unwrap();
    let n = paths as f64;
    assert!((m - mean[0]).abs() < 4.0 * (v / n).sqrt());
    assert!((v - std * std).abs() < 4.0 * v * (2.0 / (n - 1.0)).sqrt());
}

#[test]
fn single_gaussian_terminal_variance_and_unsmoothing() {
    let rho: f64 = 0.5;
    let q0 = IsotropicGaussianMixture::gaussian(vec![0.0], rho * rho).unwrap();
    let sched = Schedule::adaptive(3.0, 0.01, 400).unwrap();
    let out = run_sampler(
        &sched,
        &AnalyticScore::new(q0),
        100_000,
        1,
        5,
        None,
        SamplerOptions::default(),
    )
    .unwrap();
    let t_n = sched.terminal_time();
    let want = 1.0 - (-2.0 * t_n).exp() * (1.0 - rho * rho);
    let (_, v) = mean_var(&first_coords(&out.samples));
    assert!((v / want - 1.0).abs() < 0.05, "{v} vs {want}");

    let scaled = terminal_unsmoothing_scale(&out);
    let (_, vs) = mean_var(&first_coords(&scaled));
    let target = rho * rho + (2.0 * t_n).exp_m1();
    assert!((vs / target - 1.0).abs() < 0.05, "{vs} vs {target}");
}

#[test]
fn score_bias_degrades_terminal_w2() {
    let q0 = two_gaussian();
    let sched = Schedule::adaptive(3.0, 0.01, 100).unwrap();
    let target = q0.smooth(sched.terminal_time()).unwrap();
    let reference: Vec<f64> = (0..20_000)
        .map(|i| target.quantile((i as f64 + 0.5) / 20_000.0).unwrap())
        .collect();
    let mut monotone_seeds = 0;
    for seed in 0..3 {
        let w2: Vec<f64> = [0.0, 0.1, 0.3, 1.0]
            .iter()
            .map(|&b| {
                let m = CorruptedScore::new(AnalyticScore::new(q0.clone()), Perturbation::Bias { bias: b });
                let out = run_sampler(&sched, &m, 20_000, 1, seed, None, SamplerOptions::default()).unwrap();
                w2_empirical_1d(&first_coords(&out.samples), &reference).unwrap().value
            })
            .collect();
        if w2.windows(2).all(|w| w[1] >= w[0]) {
            monotone_seeds += 1;
        }
    }
    assert!(monotone_seeds >= 2);
}

#[test]
fn sampler_output_independent_of_thread_count() {
    let q0 = two_gaussian();
    let sched = Schedule::adaptive(2.0, 0.01, 50).unwrap();
    let m = AnalyticScore::new(q0.clone());
    let opts = SamplerOptions {
        init: Init::ExactQt,
        trace: true,
    };
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| run_sampler(&sched, &m, 3000, 1, 17, Some(&q0), opts).unwrap())
    };
    assert_eq!(run(1), run(4));
}

#[test]
fn persisted_samples_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let q0 = IsotropicGaussianMixture::standard_normal(3);
    let sched = Schedule::constant(1.0, 0.1, 5).unwrap();
    let out = run_sampler(
        &sched,
        &AnalyticScore::new(q0),
        20,
        3,
        2,
        None,
        SamplerOptions::default(),
    )
    .unwrap();
    out.persist(dir.path(), "draws").unwrap();
    let mut rdr = csv::Reader::from_path(dir.path().join("draws.csv")).unwrap();
    assert_eq!(rdr.headers().unwrap(), vec!["x_0", "x_1", "x_2"]);
    let back: Vec<Vec<f64>> = rdr.deserialize().map(|r| r.unwrap()).collect();
    assert_eq!(back, out.samples);
}

#[test]
fn empirical_w2_of_gaussians() {
    let mut rng = substream(22, &[0]);
    let a: Vec<f64> = (0..100_000).map(|_| rng.sample(StandardNormal)).collect();
    let b: Vec<f64> = (0..100_000)
        .map(|_| 2.0 * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let w = w2_empirical_1d(&a, &b).unwrap().value;
    assert!((w / w2_gaussian_exact(1.0, 4.0, 0.0, 0.0) - 1.0).abs() < 0.05);
}

#[test]
fn binned_tv_never_far_above_quadrature() {
    let p = IsotropicGaussianMixture::new(1, vec![(0.4, vec![-1.0], 0.3), (0.6, vec![1.0], 0.2)]).unwrap();
    let q = IsotropicGaussianMixture::new(1, vec![(0.5, vec![-0.8], 0.3), (0.5, vec![1.2], 0.25)]).unwrap();
    let xs = first_coords(&q.sample(&mut substream(23, &[0]), 100_000));
    let binned = tv_binned(&xs, &p, 64).unwrap().value;
    let exact = tv_quadrature_1d(&p, &q).unwrap().value;
    assert!(binned <= exact + 0.03, "{binned} vs {exact}");
}

#[test]
fn binned_tv_sqrt_scaling() {
    let p = IsotropicGaussianMixture::standard_normal(1);
    let avg = |n: usize| {
        (0..3)
            .map(|s| {
                tv_binned(&first_coords(&p.sample(&mut substream(24, &[s, n as u64]), n)), &p, 64)
                    .unwrap()
                    .value
            })
            .sum::<f64>()
            / 3.0
    };
    // four times the samples halves the fluctuation
    let ratio = avg(10_000) / avg(40_000);
    assert!((1.5..2.7).contains(&ratio), "{ratio}");
}

#[test]
fn tv_to_stationary_law_decays() {
    // m₂ = 2: components at ±√3.5 with variance 0.5
    let a = 3.5f64.sqrt();
    let q0 = IsotropicGaussianMixture::new(1, vec![(0.5, vec![-a], 0.5), (0.5, vec![a], 0.5)]).unwrap();
    assert!((q0.second_moment().sqrt() - 2.0).abs() < 1e-12);
    let tv = tv_quadrature_1d(&q0.smooth(5.0).unwrap(), &IsotropicGaussianMixture::standard_normal(1))
        .unwrap()
        .value;
    assert!(tv <= 10.0 * (-5f64).exp() * 2.0);
}

#[test]
fn endpoint_w2_bound_holds_on_catalog() {
    let gamma = 0.02;
    for entry in catalog(CatalogName::Full).into_iter().filter(|e| e.law.dim() == 1) {
        let (bound, _) = endpoint_bounds(&entry.law, gamma, 1.0).unwrap();
        let smoothed = entry.law.smooth(gamma).unwrap();
        let a = first_coords(&entry.law.sample(&mut substream(25, &[0]), 100_000));
        let b = first_coords(&smoothed.sample(&mut substream(25, &[1]), 100_000));
        let w = w2_empirical_1d(&a, &b).unwrap().value;
        assert!(w <= bound, "{}: {w} > {bound}", entry.name);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(20))]

    #[test]
    fn w2_triangle_inequality(seed in 0u64..10_000, n in 5usize..200) {
        let mut rng = substream(seed, &[0]);
        let mut draw = |shift: f64| (0..n).map(|_| shift + rng.sample::<f64, _>(StandardNormal)).collect::<Vec<_>>();
        let (a, b, c) = (draw(0.0), draw(0.5), draw(-1.0));
        let ab = w2_empirical_1d(&a, &b).unwrap().value;
        let bc = w2_empirical_1d(&b, &c).unwrap().value;
        let ac = w2_empirical_1d(&a, &c).unwrap().value;
        prop_assert!(ac <= ab + bc + 1e-9);
    }

    #[test]
    fn tv_quadrature_symmetric(m1 in -2.0f64..2.0, m2 in -2.0f64..2.0, v1 in 0.05f64..2.0, v2 in 0.05f64..2.0) {
        let p = IsotropicGaussianMixture::gaussian(vec![m1], v1).unwrap();
        let q = IsotropicGaussianMixture::gaussian(vec![m2], v2).unwrap();
        let a = tv_quadrature_1d(&p, &q).unwrap().value;
        let b = tv_quadrature_1d(&q, &p).unwrap().value;
        prop_assert!((a - b).abs() < 1e-10);
        prop_assert!((0.0..=1.0 + 1e-9).contains(&a));
    }
}
