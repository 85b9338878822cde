use difflab::diffusion::{forward_marginal_sample, simulate_forward_path};
use difflab::estimation::{draw_paired_batch, NoiseChannel};
use difflab::lab::{catalog, CatalogName};
use difflab::rng::substream;
use difflab::IsotropicGaussianMixture;
use nalgebra::SymmetricEigen;
use proptest::prelude::*;
use rand::Rng;

fn fd_gradient(p: &IsotropicGaussianMixture, x: &[f64], h: f64) -> Vec<f64> {
    (0..x.len())
        .map(|i| {
            let mut a = x.to_vec();
            let mut b = x.to_vec();
            a[i] += h;
            b[i] -= h;
            (p.log_density(&a).unwrap() - p.log_density(&b).unwrap()) / (2.0 * h)
        })
        .collect()
}

fn probe<R: Rng>(p: &IsotropicGaussianMixture, rng: &mut R) -> Vec<f64> {
    // half the probes on the law, half spread around it
    let mut x = p.sample_one(rng);
    if rng.gen::<bool>() {
        x.iter_mut().for_each(|v| *v += rng.gen_range(-1.0..1.0));
    }
    x
}

#[test]
fn score_matches_finite_differences_across_catalog() {
    let mut rng = substream(11, &[0]);
    for entry in catalog(CatalogName::Full) {
        let p = entry.law.smooth(0.05).unwrap();
        let h = 1e-5 * p.min_variance().sqrt();
        for _ in 0..200 {
            let x = probe(&p, &mut rng);
            let s = p.score(&x).unwrap();
            let fd = fd_gradient(&p, &x, h);
            let scale = s.iter().map(|v| v.abs()).fold(1.0 / p.min_variance().sqrt(), f64::max);
            for (a, b) in s.iter().zip(&fd) {
                assert!((a - b).abs() < 1e-4 * scale, "{}: {a} vs {b} at {x:?}", entry.name);
            }
        }
    }
}

#[test]
fn jacobian_spectrum_floor() {
    let mut rng = substream(12, &[0]);
    for entry in catalog(CatalogName::Full) {
        let p = &entry.law;
        let floor = -1.0 / p.min_variance() - 1e-8;
        for _ in 0..100 {
            let x = probe(p, &mut rng);
            let j = p.score_jacobian(&x).unwrap();
            let eig = SymmetricEigen::new(j).eigenvalues;
            assert!(
                eig.iter().all(|&l| l >= floor * (1.0 + 1e-12)),
                "{}: {eig:?}",
                entry.name
            );
        }
    }
}

#[test]
fn tweedie_binning_recovers_score() {
    // E[-z/σ² | x] is the score of q_t; average the target within narrow bins
    let q0 = IsotropicGaussianMixture::new(1, vec![(0.3, vec![-1.0], 0.2), (0.7, vec![1.5], 0.1)]).unwrap();
    let t = 0.4;
    let qt = q0.smooth(t).unwrap();
    let mut rng = substream(13, &[0]);
    let batch = draw_paired_batch(&q0, NoiseChannel::Ou { t }, 400_000, &mut rng).unwrap();
    let width = 0.05;
    for center in [-1.0, -0.3, 0.4, 1.0, 1.6] {
        let targets: Vec<f64> = batch
            .iter()
            .filter(|s| (s.x[0] - center).abs() < 0.5 * width)
            .map(|s| s.target()[0])
            .collect();
        let n = targets.len() as f64;
        let mean = targets.iter().sum::<f64>() / n;
        let var = targets.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        // bin-averaged score by midpoint rule over five sub-points
        let want = (-2..=2)
            .map(|k| qt.score(&[center + 0.2 * width * k as f64 / 2.0]).unwrap()[0])
            .sum::<f64>()
            / 5.0;
        assert!(
            (mean - want).abs() < 4.0 * (var / n).sqrt() + 0.02,
            "x = {center}: {mean} vs {want}"
        );
    }
}

#[test]
fn single_gaussian_forward_variance() {
    for rho in [0.1f64, 0.5] {
        let q0 = IsotropicGaussianMixture::gaussian(vec![0.0], rho * rho).unwrap();
        for t in [0.05, 0.5, 2.0] {
            let xs = forward_marginal_sample(&q0, t, 3, 100_000).unwrap();
            let v = xs.iter().map(|x| x[0] * x[0]).sum::<f64>() / xs.len() as f64;
            let want = 1.0 - (-2.0 * t).exp() * (1.0 - rho * rho);
            assert!((v / want - 1.0).abs() < 0.05, "rho {rho}, t {t}: {v} vs {want}");
        }
    }
}

fn ks_statistic(mut a: Vec<f64>, mut b: Vec<f64>) -> f64 {
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / a.len() as f64 - j as f64 / b.len() as f64).abs());
    }
    d
}

#[test]
fn one_cell_path_matches_direct_marginal() {
    let q0 = IsotropicGaussianMixture::new(1, vec![(0.5, vec![-0.5], 1e-4), (0.5, vec![0.5], 1e-4)]).unwrap();
    let n = 4000;
    let via_path: Vec<f64> = (0..n)
        .map(|i| {
            *simulate_forward_path(&q0, 0.2, 0.7, 1, 1000 + i).unwrap().states[1]
                .first()
                .unwrap()
        })
        .collect();
    let direct: Vec<f64> = forward_marginal_sample(&q0, 0.7, 5, n as usize)
        .unwrap()
        .into_iter()
        .map(|x| x[0])
        .collect();
    // two-sample critical value at α = 0.001
    let crit = 1.95 * (2.0 / n as f64).sqrt();
    assert!(ks_statistic(via_path, direct) < crit);
}

#[test]
fn smoothed_mixture_matches_simulation() {
    let q0 = IsotropicGaussianMixture::new(1, vec![(0.2, vec![-2.0], 0.25), (0.8, vec![1.0], 0.04)]).unwrap();
    let t = 0.3;
    let xs: Vec<f64> = forward_marginal_sample(&q0, t, 8, 4000)
        .unwrap()
        .into_iter()
        .map(|x| x[0])
        .collect();
    let reference: Vec<f64> = q0
        .smooth(t)
        .unwrap()
        .sample(&mut substream(9, &[0]), 4000)
        .into_iter()
        .map(|x| x[0])
        .collect();
    assert!(ks_statistic(xs, reference) < 1.95 * (2.0f64 / 4000.0).sqrt());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn smoothing_composes(t1 in 0.0f64..2.0, t2 in 0.0f64..2.0, seed in 0u64..1000) {
        let mut rng = substream(seed, &[0]);
        let k = rng.gen_range(1..4);
        let comps = (0..k)
            .map(|_| (rng.gen_range(0.1..1.0), vec![rng.gen_range(-3.0..3.0)], rng.gen_range(0.01..1.0)))
            .collect::<Vec<_>>();
        let total: f64 = comps.iter().map(|c| c.0).sum();
        let comps = comps.into_iter().map(|(w, m, v)| (w / total, m, v)).collect();
        let q0 = IsotropicGaussianMixture::new(1, comps).unwrap();
        let a = q0.smooth(t1).unwrap().smooth(t2).unwrap();
        let b = q0.smooth(t1 + t2).unwrap();
        for (ca, cb) in a.components().iter().zip(b.components()) {
            prop_assert!((ca.mean()[0] - cb.mean()[0]).abs() < 1e-12);
            prop_assert!((ca.var() - cb.var()).abs() < 1e-12);
        }
    }

    #[test]
    fn score_is_minus_x_for_standard_normal_at_any_time(t in 0.0f64..5.0, x in -10.0f64..10.0) {
        let q = IsotropicGaussianMixture::standard_normal(1).smooth(t).unwrap();
        prop_assert!((q.score(&[x]).unwrap()[0] + x).abs() < 1e-12 * (1.0 + x.abs()));
    }
}
