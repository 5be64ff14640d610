//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero when any criterion fails.
//!
//! `cargo test -p diffusim --test acceptance -- 3 7` runs a subset.
//! `DIFFUSIM_ACCEPT_FULL=1` adds the Lorenz-96 N = 1000 crossover check.

use std::sync::OnceLock;
use std::time::Instant;

use diffusim::diffusion::ScoreField;
use diffusim::experiment::{
    median, run_experiment, run_filter, simulate, Evaluation, Experiment, ExperimentConfig,
    FilterKind, FilterParams, MetricKind, RunRecord,
};
use diffusim::filters::{effective_sample_size, multinomial_resample, normalize_log_weights};
use diffusim::kernels::{convolved_sigma, IsotropicGaussian};
use diffusim::metrics::fit_two_component;
use diffusim::rng::{gaussian_vector, RngStream};
use diffusim::ssm::{
    propagate_ensemble, AdditiveNoiseProcess, GaussianObservation, LinearMap, ObservationModel,
    ObservationOperator, ProcessModel,
};
use diffusim::{
    diffusion_update, enkf_update, sir_update, wasserstein2, DiffusionConfig, EmpiricalMeasure,
    EnkfConfig, Ensemble, PairedEnsemble, SirConfig, StateEnsemble,
};
use rand::Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

struct Outcome {
    pass: bool,
    detail: String,
}

type Criterion = (usize, &'static str, Option<f64>, fn() -> Outcome);

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn normal_ensemble(n: usize, d: usize, mean: &[f64], seed: u64) -> Ensemble {
    let mut rng = RngStream::new(seed, 0).rng();
    let z = gaussian_vector(&mut rng, n * d, 1.0).unwrap();
    let data = z
        .chunks_exact(d)
        .flat_map(|row| row.iter().zip(mean).map(|(v, m)| v + m))
        .collect();
    Ensemble::from_vec(n, d, data).unwrap()
}

fn mean_var(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let m = values.iter().sum::<f64>() / n;
    (
        m,
        values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0),
    )
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

// 1. Kernel convolution and gradient laws.
fn kernel_identities() -> Outcome {
    let mut rng = RngStream::new(1, 0).rng();
    let (mut conv, mut grad) = (0.0f64, 0.0f64);
    for _ in 0..100 {
        let (sf, sh) = (rng.random_range(0.2..2.0), rng.random_range(0.2..2.0));
        let (mf, mh) = (rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
        let s = convolved_sigma(sf, sh).unwrap();
        let x = mf + mh + rng.random_range(-3.0..3.0) * s;
        let (gf, gh) = (
            IsotropicGaussian::new(sf, 1).unwrap(),
            IsotropicGaussian::new(sh, 1).unwrap(),
        );
        // (f * h)(x) = int f(x - x') h(x') dx' by composite Simpson.
        let lo = (mh - 12.0 * sh).min(x - mf - 12.0 * sf);
        let hi = (mh + 12.0 * sh).max(x - mf + 12.0 * sf);
        let m = 20_000;
        let step = (hi - lo) / m as f64;
        let f = |xp: f64| gf.eval(&[x - xp - mf]).unwrap() * gh.eval(&[xp - mh]).unwrap();
        let mut acc = f(lo) + f(hi);
        for i in 1..m {
            acc += if i % 2 == 1 { 4.0 } else { 2.0 } * f(lo + i as f64 * step);
        }
        let quad = acc * step / 3.0;
        let closed = IsotropicGaussian::new(s, 1)
            .unwrap()
            .eval(&[x - mf - mh])
            .unwrap();
        conv = conv.max((quad - closed).abs());

        let d = rng.random_range(1..=4);
        let sigma = rng.random_range(0.3..2.0);
        let g = IsotropicGaussian::new(sigma, d).unwrap();
        let mut point: Vec<f64> = (0..d)
            .map(|_| rng.random_range(-2.0..2.0) * sigma)
            .collect();
        if norm(&point) < 0.1 * sigma {
            point[0] += sigma;
        }
        let analytic = g.grad(&point).unwrap();
        let h = 1e-4 * sigma;
        let fd: Vec<f64> = (0..d)
            .map(|a| {
                let (mut p, mut q) = (point.clone(), point.clone());
                p[a] += h;
                q[a] -= h;
                (g.eval(&p).unwrap() - g.eval(&q).unwrap()) / (2.0 * h)
            })
            .collect();
        let diff: Vec<f64> = fd.iter().zip(&analytic).map(|(a, b)| a - b).collect();
        grad = grad.max(norm(&diff) / norm(&analytic));
    }
    outcome(
        conv <= 1e-6 && grad <= 1e-6,
        format!("max |quadrature - closed form| = {conv:.2e} (<= 1e-6), max gradient rel. error = {grad:.2e} (<= 1e-6)"),
    )
}

// 2. Closed-form score against finite differences of the summed mixture.
fn score_oracle() -> Outcome {
    let mut rng = RngStream::new(2, 0).rng();
    let mut worst = 0.0f64;
    for case in 0..50 {
        let n = rng.random_range(1..=30);
        let d = rng.random_range(1..=4);
        let dy = rng.random_range(1..=2);
        let states = normal_ensemble(n, d, &vec![0.0; d], 100 + case);
        let obs = normal_ensemble(n, dy, &vec![0.0; dy], 200 + case);
        let y_hat: Vec<f64> = (0..dy).map(|_| rng.random_range(-1.0..1.0)).collect();
        let config = DiffusionConfig {
            sigma_x: rng.random_range(0.2..1.0),
            sigma_y: rng.random_range(0.3..1.0),
            ..DiffusionConfig::default()
        };
        let t: f64 = rng.random_range(0.0..1.0);
        let field = ScoreField::new(
            &PairedEnsemble::new(states.clone(), obs.clone()).unwrap(),
            &y_hat,
            &config,
        )
        .unwrap();
        let x: Vec<f64> = (0..d).map(|_| rng.random_range(-1.5..1.5)).collect();
        let score = field.score(&x, t).unwrap();

        let sbar = ((t * config.sigma_max).powi(2) + config.sigma_x.powi(2)).sqrt();
        let gx = IsotropicGaussian::new(sbar, d).unwrap();
        let gy = IsotropicGaussian::new(config.sigma_y, dy).unwrap();
        let log_density = |p: &[f64]| -> f64 {
            (0..n)
                .map(|i| {
                    let dyv: Vec<f64> = y_hat.iter().zip(obs.row(i)).map(|(a, b)| a - b).collect();
                    let dxv: Vec<f64> = p.iter().zip(states.row(i)).map(|(a, b)| a - b).collect();
                    gy.eval(&dyv).unwrap() * gx.eval(&dxv).unwrap()
                })
                .sum::<f64>()
                .ln()
        };
        let h = 1e-5;
        let fd: Vec<f64> = (0..d)
            .map(|a| {
                let (mut p, mut q) = (x.clone(), x.clone());
                p[a] += h;
                q[a] -= h;
                (log_density(&p) - log_density(&q)) / (2.0 * h)
            })
            .collect();
        let diff: Vec<f64> = fd.iter().zip(&score).map(|(a, b)| a - b).collect();
        worst = worst.max(norm(&diff) / norm(&score).max(1e-300));
    }
    outcome(
        worst <= 1e-5,
        format!("50 instances, max relative error {worst:.2e} (<= 1e-5)"),
    )
}

// 3. Conjugate Gaussian posterior N(0.4, 0.2).
fn conjugate_gaussian() -> Outcome {
    let prior = StateEnsemble::new(normal_ensemble(5000, 1, &[0.0], 3), 1).unwrap();
    let model = GaussianObservation::new(ObservationOperator::Identity, 0.25).unwrap();
    let config = DiffusionConfig::with_bandwidths(0.05, 0.05);
    let update = diffusion_update(&prior, &model, &[0.5], &config, &RngStream::new(3, 1)).unwrap();
    let (m, v) = mean_var(&update.posterior.members.column(0));
    let pass = (m - 0.4).abs() <= 0.03 && (v / 0.2 - 1.0).abs() <= 0.15;
    outcome(
        pass,
        format!(
            "posterior mean {m:.4} (0.4 +/- 0.03), variance {v:.4} (0.2 +/- 15%, off by {:+.1}%)",
            100.0 * (v / 0.2 - 1.0)
        ),
    )
}

// 4. EnKF against the exact Kalman filter.
fn enkf_kalman() -> Outcome {
    let a = [0.9, 0.2, -0.2, 0.9];
    let (q, r) = (0.1, 0.2);
    let hrow = [1.0, 0.5];
    let process = AdditiveNoiseProcess::new(LinearMap::new(2, a.to_vec()).unwrap(), q).unwrap();
    let obs = GaussianObservation::new(
        ObservationOperator::Linear {
            rows: 1,
            cols: 2,
            matrix: hrow.to_vec(),
        },
        r,
    )
    .unwrap();
    let m0 = [1.0, -1.0];

    let stream = RngStream::new(4, 0);
    let mut truth = vec![m0[0] + 0.5, m0[1] - 0.3];
    let mut ens = StateEnsemble::new(normal_ensemble(10_000, 2, &m0, 40), 0).unwrap();
    let mut m = m0.to_vec();
    let mut p = [1.0, 0.0, 0.0, 1.0];
    let (mut worst_m, mut worst_p) = (0.0f64, 0.0f64);
    for k in 1..=20 {
        let step = stream.step(k);
        truth = process.sample(&truth, &mut step.derive(1).rng()).unwrap();
        let y = obs.sample(&truth, &mut step.derive(2).rng());
        ens = propagate_ensemble(&process, &ens, &step.derive(3)).unwrap();
        ens = enkf_update(&ens, &obs, &y, &EnkfConfig::default(), &step.derive(4)).unwrap();

        // Kalman recursion.
        let mp = [a[0] * m[0] + a[1] * m[1], a[2] * m[0] + a[3] * m[1]];
        let ap = [
            a[0] * p[0] + a[1] * p[2],
            a[0] * p[1] + a[1] * p[3],
            a[2] * p[0] + a[3] * p[2],
            a[2] * p[1] + a[3] * p[3],
        ];
        let pp = [
            ap[0] * a[0] + ap[1] * a[1] + q,
            ap[0] * a[2] + ap[1] * a[3],
            ap[2] * a[0] + ap[3] * a[1],
            ap[2] * a[2] + ap[3] * a[3] + q,
        ];
        let ph = [
            pp[0] * hrow[0] + pp[1] * hrow[1],
            pp[2] * hrow[0] + pp[3] * hrow[1],
        ];
        let s = hrow[0] * ph[0] + hrow[1] * ph[1] + r;
        let gain = [ph[0] / s, ph[1] / s];
        let innov = y[0] - (hrow[0] * mp[0] + hrow[1] * mp[1]);
        m = vec![mp[0] + gain[0] * innov, mp[1] + gain[1] * innov];
        p = [
            pp[0] - gain[0] * ph[0],
            pp[1] - gain[0] * ph[1],
            pp[2] - gain[1] * ph[0],
            pp[3] - gain[1] * ph[1],
        ];

        let me = ens.members.mean();
        let pe = ens.members.covariance();
        let dm: Vec<f64> = me.iter().zip(&m).map(|(x, y)| x - y).collect();
        let scale = norm(&m).max((p[0] + p[3]).sqrt());
        worst_m = worst_m.max(norm(&dm) / scale);
        let dp: Vec<f64> = pe.iter().zip(&p).map(|(x, y)| x - y).collect();
        worst_p = worst_p.max(norm(&dp) / norm(&p));
    }
    outcome(
        worst_m <= 0.03 && worst_p <= 0.03,
        format!(
            "20 steps, N = 10^4: max mean error {:.2}%, max covariance error {:.2}% (<= 3%)",
            100.0 * worst_m,
            100.0 * worst_p
        ),
    )
}

// 5. Multinomial resampling and self-normalized importance sampling.
fn sir_correctness() -> Outcome {
    let weights = [0.1, 0.2, 0.3, 0.4];
    let mut rng = RngStream::new(5, 0).rng();
    let reps = 100_000;
    let mut counts = [0usize; 4];
    for _ in 0..reps {
        for i in multinomial_resample(&weights, 4, &mut rng) {
            counts[i] += 1;
        }
    }
    let total = (4 * reps) as f64;
    let chi2: f64 = counts
        .iter()
        .zip(&weights)
        .map(|(&c, &w)| (c as f64 - w * total).powi(2) / (w * total))
        .sum();
    let p_value = 1.0 - ChiSquared::new(3.0).unwrap().cdf(chi2);

    let n = 10_000;
    let prior = StateEnsemble::new(normal_ensemble(n, 1, &[0.0], 50), 1).unwrap();
    let model = GaussianObservation::new(ObservationOperator::Identity, 0.25).unwrap();
    let y = [0.5];
    let log_w: Vec<f64> = prior
        .members
        .rows()
        .map(|x| model.log_likelihood(&y, x).unwrap())
        .collect();
    let w = normalize_log_weights(&log_w).unwrap();
    let ess = effective_sample_size(&log_w).unwrap();
    let snis: f64 = w
        .iter()
        .zip(prior.members.rows())
        .map(|(wi, x)| wi * x[0])
        .sum();
    let se_snis = (0.2 / ess).sqrt();
    let post = sir_update(
        &prior,
        &model,
        &y,
        &SirConfig::default(),
        &RngStream::new(5, 1),
    )
    .unwrap();
    let (resampled, _) = mean_var(&post.members.column(0));
    let se_resampled = (0.2 * (1.0 / ess + 1.0 / n as f64)).sqrt();
    let (z1, z2) = ((snis - 0.4) / se_snis, (resampled - 0.4) / se_resampled);
    outcome(
        p_value > 0.001 && z1.abs() <= 3.0 && z2.abs() <= 3.0,
        format!("chi2 = {chi2:.2}, p = {p_value:.3} (> 0.001); SNIS mean {snis:.4} ({z1:+.2} SE), resampled mean {resampled:.4} ({z2:+.2} SE)"),
    )
}

/// Optimal transport cost by enumerating every spanning-tree basis of the
/// transport polytope.
fn brute_force_w2_sq(a: &[f64], b: &[f64], cost: &[f64]) -> f64 {
    let (n, m) = (a.len(), b.len());
    let cells = n * m;
    let size = n + m - 1;
    let mut best = f64::INFINITY;
    for mask in 0u32..(1u32 << cells) {
        if mask.count_ones() as usize != size {
            continue;
        }
        let mut active: Vec<usize> = (0..cells).filter(|c| mask & (1 << c) != 0).collect();
        let (mut supply, mut demand) = (a.to_vec(), b.to_vec());
        let mut total = 0.0;
        let mut feasible = true;
        while !active.is_empty() {
            let leaf = (0..n)
                .find_map(|i| {
                    let hits: Vec<usize> = active.iter().copied().filter(|c| c / m == i).collect();
                    (hits.len() == 1).then(|| (hits[0], true))
                })
                .or_else(|| {
                    (0..m).find_map(|j| {
                        let hits: Vec<usize> =
                            active.iter().copied().filter(|c| c % m == j).collect();
                        (hits.len() == 1).then(|| (hits[0], false))
                    })
                });
            let Some((c, row_leaf)) = leaf else {
                feasible = false;
                break;
            };
            let (i, j) = (c / m, c % m);
            let flow = if row_leaf { supply[i] } else { demand[j] };
            if flow < -1e-12 {
                feasible = false;
                break;
            }
            supply[i] -= flow;
            demand[j] -= flow;
            total += flow * cost[c];
            active.retain(|&x| x != c);
        }
        if feasible && supply.iter().chain(&demand).all(|r| r.abs() < 1e-9) {
            best = best.min(total);
        }
    }
    best
}

fn quantile_w2_sq(a: &[(f64, f64)], b: &[(f64, f64)]) -> f64 {
    let (mut a, mut b) = (a.to_vec(), b.to_vec());
    a.sort_by(|x, y| x.0.total_cmp(&y.0));
    b.sort_by(|x, y| x.0.total_cmp(&y.0));
    let (mut i, mut j) = (0, 0);
    let (mut ra, mut rb) = (a[0].1, b[0].1);
    let mut total = 0.0;
    while i < a.len() && j < b.len() {
        let w = ra.min(rb);
        total += w * (a[i].0 - b[j].0).powi(2);
        ra -= w;
        rb -= w;
        if ra <= 1e-15 {
            i += 1;
            if i < a.len() {
                ra = a[i].1;
            }
        }
        if rb <= 1e-15 {
            j += 1;
            if j < b.len() {
                rb = b[j].1;
            }
        }
    }
    total
}

fn random_measure(rng: &mut impl Rng, n: usize, d: usize) -> (Ensemble, Vec<f64>) {
    let pts: Vec<f64> = (0..n * d).map(|_| rng.random_range(-2.0..2.0)).collect();
    let raw: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..1.0)).collect();
    let s: f64 = raw.iter().sum();
    let mut w: Vec<f64> = raw.iter().map(|v| v / s).collect();
    let head: f64 = w[..n - 1].iter().sum();
    w[n - 1] = 1.0 - head;
    (Ensemble::from_vec(n, d, pts).unwrap(), w)
}

// 6. Exact optimal transport.
fn w2_correctness() -> Outcome {
    let mut rng = RngStream::new(6, 0).rng();
    let mut enum_err = 0.0f64;
    for _ in 0..200 {
        let (n, m, d) = (
            rng.random_range(1..=4),
            rng.random_range(1..=4),
            rng.random_range(1..=3),
        );
        let (xa, wa) = random_measure(&mut rng, n, d);
        let (xb, wb) = random_measure(&mut rng, m, d);
        let cost: Vec<f64> = (0..n * m)
            .map(|c| {
                xa.row(c / m)
                    .iter()
                    .zip(xb.row(c % m))
                    .map(|(p, q)| (p - q).powi(2))
                    .sum()
            })
            .collect();
        let oracle = brute_force_w2_sq(&wa, &wb, &cost).sqrt();
        let w = wasserstein2(
            &EmpiricalMeasure::new(xa, wa).unwrap(),
            &EmpiricalMeasure::new(xb, wb).unwrap(),
        )
        .unwrap();
        enum_err = enum_err.max((w - oracle).abs());
    }
    let mut quant_err = 0.0f64;
    for _ in 0..100 {
        let (n, m) = (rng.random_range(1..=40), rng.random_range(1..=40));
        let (xa, wa) = random_measure(&mut rng, n, 1);
        let (xb, wb) = random_measure(&mut rng, m, 1);
        let pa: Vec<(f64, f64)> = xa
            .as_slice()
            .iter()
            .copied()
            .zip(wa.iter().copied())
            .collect();
        let pb: Vec<(f64, f64)> = xb
            .as_slice()
            .iter()
            .copied()
            .zip(wb.iter().copied())
            .collect();
        let oracle = quantile_w2_sq(&pa, &pb).sqrt();
        let w = wasserstein2(
            &EmpiricalMeasure::new(xa, wa).unwrap(),
            &EmpiricalMeasure::new(xb, wb).unwrap(),
        )
        .unwrap();
        quant_err = quant_err.max((w - oracle).abs());
    }
    let a = EmpiricalMeasure::uniform(normal_ensemble(4000, 2, &[0.0, 0.0], 60)).unwrap();
    let b = EmpiricalMeasure::uniform(normal_ensemble(4000, 2, &[3.0, 0.0], 61)).unwrap();
    let gauss = wasserstein2(&a, &b).unwrap();
    outcome(
        enum_err <= 1e-9 && quant_err <= 1e-9 && (gauss / 3.0 - 1.0).abs() <= 0.05,
        format!(
            "enumeration max error {enum_err:.1e}, 1-D quantile max error {quant_err:.1e} (<= 1e-9); two Gaussians W2 = {gauss:.4} (3.0 +/- 5%)"
        ),
    )
}

fn per_sim(records: &[RunRecord], filter: FilterKind, n: usize, sims: usize) -> Vec<Option<f64>> {
    (0..sims)
        .map(|s| {
            records
                .iter()
                .find(|r| r.filter == filter && r.n == n && r.simulation == s)
                .and_then(|r| r.metric)
        })
        .collect()
}

fn wins(a: &[Option<f64>], b: &[Option<f64>]) -> usize {
    a.iter()
        .zip(b)
        .filter(|(x, y)| matches!((x, y), (Some(x), Some(y)) if x < y))
        .count()
}

fn seed_median(v: &[Option<f64>]) -> f64 {
    // A failed run counts as an infinitely bad one.
    let vals: Vec<f64> = v.iter().map(|x| x.unwrap_or(f64::INFINITY)).collect();
    median(&vals).unwrap_or(f64::NAN)
}

fn l63_config() -> ExperimentConfig {
    ExperimentConfig {
        ensemble_sizes: vec![100],
        sims: 10,
        ..ExperimentConfig::lorenz63()
    }
}

fn l63_experiment() -> &'static Experiment {
    static CELL: OnceLock<Experiment> = OnceLock::new();
    CELL.get_or_init(|| run_experiment(&l63_config(), None).expect("Lorenz-63 experiment"))
}

fn l96_config(n: usize) -> ExperimentConfig {
    ExperimentConfig {
        ensemble_sizes: vec![n],
        sims: 10,
        ..ExperimentConfig::lorenz96(10)
    }
}

fn l96_experiment() -> &'static Experiment {
    static CELL: OnceLock<Experiment> = OnceLock::new();
    CELL.get_or_init(|| run_experiment(&l96_config(100), None).expect("Lorenz-96 experiment"))
}

// 7. Lorenz-63 ordering at N = 100.
fn l63_ordering() -> Outcome {
    let config = l63_config();
    assert_eq!(config.metric_kind(), MetricKind::W2);
    let d = config.diffusion_for(100);
    let e = l63_experiment();
    let diff = per_sim(&e.records, FilterKind::Diffusion, 100, 10);
    let enkf = per_sim(&e.records, FilterKind::Enkf, 100, 10);
    let sir = per_sim(&e.records, FilterKind::Sir, 100, 10);
    let (md, me, ms) = (seed_median(&diff), seed_median(&enkf), seed_median(&sir));
    let (we, ws) = (wins(&diff, &enkf), wins(&diff, &sir));
    let pass = md < me && md < ms && we >= 7 && ws >= 7 && (4.0..=14.0).contains(&md);
    outcome(
        pass,
        format!(
            "bandwidths ({}, {}), seed-median E_W2 diffusion {md:.3} (in [4, 14]), EnKF {me:.3}, SIR {ms:.3}; diffusion beats EnKF in {we}/10, SIR in {ws}/10 (>= 7)",
            d.sigma_x, d.sigma_y
        ),
    )
}

// 8. Bimodal posterior in the (x1, x3) plane at N = 500.
fn l63_bimodality() -> Outcome {
    let config = ExperimentConfig {
        steps: 70,
        ensemble_sizes: vec![500],
        sims: 10,
        ..ExperimentConfig::lorenz63()
    };
    let model = config.model().unwrap();
    let params = FilterParams {
        diffusion: config.diffusion_for(500),
        enkf: config.enkf,
        sir: config.sir,
    };
    let results: Vec<(bool, bool, usize)> = (0..config.sims)
        .map(|s| {
            let sim = simulate(&config, &model, s).unwrap();
            let run = |kind| {
                run_filter(
                    kind,
                    &params,
                    &model,
                    &sim.truth,
                    &sim.observations,
                    500,
                    &sim.stream,
                    s,
                    Evaluation::None,
                    true,
                )
                .unwrap()
            };
            let (diff, sir) = (run(FilterKind::Diffusion), run(FilterKind::Sir));
            let plane = |r: &RunRecord, k: usize| -> Option<Vec<[f64; 2]>> {
                let e = r.posteriors.as_ref()?.get(k)?;
                Some(e.rows().map(|x| [x[0], x[2]]).collect())
            };
            let fit = |r: &RunRecord, k| plane(r, k).and_then(|p| fit_two_component(&p).ok());
            let best = (50..=70)
                .filter_map(|k| fit(&diff, k).map(|f| (k, f)))
                .max_by(|a, b| a.1.bimodality().total_cmp(&b.1.bimodality()));
            match best {
                Some((k, f)) => {
                    let sir_bimodal = fit(&sir, k).is_some_and(|g| g.is_bimodal(0.2, 4.0));
                    (f.is_bimodal(0.2, 4.0), !sir_bimodal, k)
                }
                None => (false, false, 0),
            }
        })
        .collect();
    let diff_ok = results.iter().filter(|r| r.0).count();
    let sir_collapsed = results.iter().filter(|r| r.1).count();
    let steps: Vec<String> = results.iter().map(|r| r.2.to_string()).collect();
    outcome(
        diff_ok >= 6 && sir_collapsed >= 6,
        format!(
            "diffusion two-mode in {diff_ok}/10 (>= 6), SIR single-mode in {sir_collapsed}/10 (>= 6); selected steps [{}]",
            steps.join(" ")
        ),
    )
}

// 9. Lorenz-96 d = 10 ordering at N = 100 and, optionally, the N = 1000 crossover.
fn l96_ordering() -> Outcome {
    let e = l96_experiment();
    let diff = per_sim(&e.records, FilterKind::Diffusion, 100, 10);
    let enkf = per_sim(&e.records, FilterKind::Enkf, 100, 10);
    let sir = per_sim(&e.records, FilterKind::Sir, 100, 10);
    let (md, me, ms) = (seed_median(&diff), seed_median(&enkf), seed_median(&sir));
    let mut pass = md < me.min(ms) && (1.0..=2.6).contains(&md);
    let mut detail = format!(
        "N = 100 seed-median E_RMSE diffusion {md:.3} (in [1.0, 2.6]), EnKF {me:.3}, SIR {ms:.3}"
    );
    if std::env::var("DIFFUSIM_ACCEPT_FULL").is_ok_and(|v| v == "1") {
        let config = ExperimentConfig {
            filters: vec![FilterKind::Diffusion, FilterKind::Enkf],
            ..l96_config(1000)
        };
        let big = run_experiment(&config, None).unwrap();
        let d = seed_median(&per_sim(&big.records, FilterKind::Diffusion, 1000, 10));
        let k = seed_median(&per_sim(&big.records, FilterKind::Enkf, 1000, 10));
        pass &= k < d;
        detail.push_str(&format!(
            "; N = 1000 EnKF {k:.3} < diffusion {d:.3}: {}",
            k < d
        ));
    } else {
        detail.push_str("; N = 1000 crossover skipped (set DIFFUSIM_ACCEPT_FULL=1)");
    }
    outcome(pass, detail)
}

fn step_counts(records: &[RunRecord]) -> Vec<(usize, usize)> {
    records
        .iter()
        .filter(|r| r.filter == FilterKind::Diffusion)
        .flat_map(|r| {
            r.steps
                .iter()
                .filter_map(|s| s.solver_steps)
                .map(|c| (c.min, c.max))
        })
        .collect()
}

fn mean_steps(counts: &[(usize, usize)]) -> f64 {
    counts
        .iter()
        .map(|&(a, b)| 0.5 * (a + b) as f64)
        .sum::<f64>()
        / counts.len() as f64
}

// 10. Solver step envelope and dimension independence.
fn step_envelope() -> Outcome {
    let l63 = step_counts(&l63_experiment().records);
    let l96 = step_counts(&l96_experiment().records);
    let all: Vec<(usize, usize)> = l63.iter().chain(&l96).copied().collect();
    let lo = all.iter().map(|c| c.0).min().unwrap_or(0);
    let hi = all.iter().map(|c| c.1).max().unwrap_or(usize::MAX);

    let steps = 100;
    let c20 = ExperimentConfig {
        filters: vec![FilterKind::Diffusion],
        ensemble_sizes: vec![100],
        sims: 3,
        steps,
        ..ExperimentConfig::lorenz96(20)
    };
    let e20 = run_experiment(&c20, None).unwrap();
    let d20 = step_counts(&e20.records);
    let d10: Vec<(usize, usize)> = l96_experiment()
        .records
        .iter()
        .filter(|r| r.filter == FilterKind::Diffusion && r.simulation < 3)
        .flat_map(|r| {
            r.steps
                .iter()
                .take(steps)
                .filter_map(|s| s.solver_steps)
                .map(|c| (c.min, c.max))
        })
        .collect();
    let (m10, m20) = (mean_steps(&d10), mean_steps(&d20));
    let range = |c: &[(usize, usize)]| {
        format!(
            "{}-{}",
            c.iter().map(|x| x.0).min().unwrap_or(0),
            c.iter().map(|x| x.1).max().unwrap_or(0)
        )
    };
    outcome(
        lo >= 6 && hi <= 25 && m20 <= 1.15 * m10,
        format!(
            "accepted steps L63 {}, L96-10 {} (within [6, 25]); mean steps d=10 {m10:.2}, d=20 {m20:.2} (ratio {:.3} <= 1.15)",
            range(&l63),
            range(&l96),
            m20 / m10
        ),
    )
}

// 11. Bit-identical metrics at other thread counts.
fn determinism() -> Outcome {
    let reference = l63_experiment();
    let config = ExperimentConfig {
        sims: 2,
        ..l63_config()
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(3)
        .build()
        .unwrap();
    let rerun = pool.install(|| run_experiment(&config, None)).unwrap();
    let mut compared = 0;
    let mut identical = true;
    for r in &rerun.records {
        let original = reference
            .records
            .iter()
            .find(|o| o.filter == r.filter && o.n == r.n && o.simulation == r.simulation)
            .unwrap();
        identical &= r.metric.map(f64::to_bits) == original.metric.map(f64::to_bits);
        identical &= r
            .steps
            .iter()
            .zip(&original.steps)
            .all(|(a, b)| a.mean == b.mean && a.std == b.std);
        compared += 1;
    }

    let prior = StateEnsemble::new(normal_ensemble(300, 3, &[0.0; 3], 11), 1).unwrap();
    let model =
        GaussianObservation::new(ObservationOperator::Component { index: 2 }, 0.25).unwrap();
    let update = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| {
                diffusion_update(
                    &prior,
                    &model,
                    &[0.3],
                    &DiffusionConfig::default(),
                    &RngStream::new(11, 1),
                )
                .unwrap()
            })
    };
    let (u1, u4) = (update(1), update(4));
    identical &= u1.posterior.members == u4.posterior.members;
    outcome(
        identical,
        format!(
            "{compared} Lorenz-63 runs re-executed on 3 threads match the original metrics and per-step moments bit for bit; diffusion update on 1 vs 4 threads identical: {}",
            u1.posterior.members == u4.posterior.members
        ),
    )
}

fn main() {
    let selected: Vec<usize> = std::env::args()
        .skip(1)
        .filter_map(|a| a.parse().ok())
        .collect();
    let criteria: [Criterion; 11] = [
        (1, "kernel identities", Some(10.0), kernel_identities),
        (2, "score-field oracle", Some(30.0), score_oracle),
        (
            3,
            "conjugate Gaussian posterior",
            Some(120.0),
            conjugate_gaussian,
        ),
        (4, "EnKF vs Kalman", Some(60.0), enkf_kalman),
        (5, "SIR correctness", None, sir_correctness),
        (6, "W2 correctness", None, w2_correctness),
        (7, "Lorenz-63 ordering", None, l63_ordering),
        (8, "Lorenz-63 bimodality", None, l63_bimodality),
        (9, "Lorenz-96 d=10 ordering", None, l96_ordering),
        (10, "solver step envelope", None, step_envelope),
        (11, "determinism", None, determinism),
    ];
    println!(
        "acceptance suite on {} worker thread(s)",
        rayon::current_num_threads()
    );
    let mut failed = Vec::new();
    let mut ran = 0;
    for (id, title, limit, check) in criteria {
        if !selected.is_empty() && !selected.contains(&id) {
            continue;
        }
        ran += 1;
        let start = Instant::now();
        let mut result = check();
        let secs = start.elapsed().as_secs_f64();
        if let Some(limit) = limit {
            if secs >= limit {
                result.pass = false;
                result.detail.push_str(&format!("; runtime over {limit} s"));
            }
        }
        let status = if result.pass { "PASS" } else { "FAIL" };
        println!(
            "criterion {id:>2} {status} [{secs:7.1} s] {title}: {}",
            result.detail
        );
        if !result.pass {
            failed.push(id);
        }
    }
    println!("acceptance: {}/{ran} passed", ran - failed.len());
    if !failed.is_empty() {
        println!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
