#![allow(dead_code)]

use std::borrow::Cow;
use std::sync::atomic::{AtomicUsize, Ordering};

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use pasa::{
    combine, partition, run_pasa, simulate_all, BatchData, BlockSummary, DataSource, GlmFamily, Result, RunConfig,
    SimSpec, StreamConfig, StreamState,
};
use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};

pub fn design(data: &BatchData) -> (DMatrix<f64>, DVector<f64>) {
    (DMatrix::from_row_slice(data.len(), data.p(), data.x()), DVector::from_column_slice(data.y()))
}

/// Least squares by Householder QR, independent of the normal equations.
pub struct Ols {
    pub beta: DVector<f64>,
    pub cov_unscaled: DMatrix<f64>,
    pub rss: f64,
    pub sigma2: f64,
}

pub fn ols(data: &BatchData) -> Ols {
    let (x, y) = design(data);
    let qr = x.clone().qr();
    let r = qr.r();
    let qty = qr.q().transpose() * &y;
    let beta = r.solve_upper_triangular(&qty).expect("full rank");
    let r_inv = r.solve_upper_triangular(&DMatrix::identity(data.p(), data.p())).unwrap();
    let cov_unscaled = &r_inv * r_inv.transpose();
    let resid = &y - &x * &beta;
    let rss = resid.dot(&resid);
    let sigma2 = rss / (data.len() - data.p()) as f64;
    Ols { beta, cov_unscaled, rss, sigma2 }
}

/// Logistic MLE by iteratively reweighted least squares, each step solved as a
/// weighted QR problem.
pub fn irls_logistic(data: &BatchData, tol: f64) -> DVector<f64> {
    let (x, y) = design(data);
    let (n, p) = (data.len(), data.p());
    let mut beta = DVector::zeros(p);
    for _ in 0..100 {
        let eta = &x * &beta;
        let mut xw = x.clone();
        let mut z = DVector::zeros(n);
        for i in 0..n {
            let mu = 1.0 / (1.0 + (-eta[i]).exp());
            let w = (mu * (1.0 - mu)).max(1e-300);
            let sw = w.sqrt();
            z[i] = sw * (eta[i] + (y[i] - mu) / w);
            for j in 0..p {
                xw[(i, j)] *= sw;
            }
        }
        let qr = xw.qr();
        let next = qr.r().solve_upper_triangular(&(qr.q().transpose() * z)).unwrap();
        let step = (&next - &beta).amax();
        beta = next;
        if step < tol {
            break;
        }
    }
    beta
}

pub fn brute_auc(scores: &[f64], labels: &[f64]) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for (i, &si) in scores.iter().enumerate() {
        if labels[i] <= 0.5 {
            continue;
        }
        for (j, &sj) in scores.iter().enumerate() {
            if labels[j] > 0.5 {
                continue;
            }
            den += 1.0;
            if si > sj {
                num += 1.0;
            } else if si == sj {
                num += 0.5;
            }
        }
    }
    num / den
}

/// Wraps a data set and counts how often each row is read.
pub struct CountingSource<'a> {
    pub inner: &'a BatchData,
    pub reads: Vec<AtomicUsize>,
}

impl<'a> CountingSource<'a> {
    pub fn new(inner: &'a BatchData) -> Self {
        CountingSource { inner, reads: (0..inner.len()).map(|_| AtomicUsize::new(0)).collect() }
    }

    pub fn counts(&self) -> Vec<usize> {
        self.reads.iter().map(|c| c.load(Ordering::Relaxed)).collect()
    }
}

impl DataSource for CountingSource<'_> {
    fn n_rows(&self) -> usize {
        self.inner.len()
    }

    fn p(&self) -> usize {
        self.inner.p()
    }

    fn gather(&self, rows: &[usize]) -> Result<BatchData> {
        for &r in rows {
            self.reads[r].fetch_add(1, Ordering::Relaxed);
        }
        self.inner.gather(rows)
    }

    fn full(&self) -> Result<Cow<'_, BatchData>> {
        for c in &self.reads {
            c.fetch_add(1, Ordering::Relaxed);
        }
        Ok(Cow::Borrowed(self.inner))
    }
}

pub fn sim(family: GlmFamily, n: usize, seed: u64) -> BatchData {
    simulate_all(&SimSpec { family, n, seed, ..SimSpec::default() }).unwrap()
}

pub fn family_strategy() -> impl Strategy<Value = GlmFamily> {
    prop_oneof![Just(GlmFamily::GaussianIdentity), Just(GlmFamily::BernoulliLogit)]
}

fn runner(cases: u32) -> TestRunner {
    TestRunner::new(Config { cases, failure_persistence: None, ..Config::default() })
}

fn report(name: &str, outcome: std::result::Result<(), proptest::test_runner::TestError<impl std::fmt::Debug>>) -> std::result::Result<(), String> {
    outcome.map_err(|e| format!("{name}: {e}"))
}

/// Analytic negative Hessian against central differences of the score.
pub fn check_fd_hessian(cases: u32) -> std::result::Result<(), String> {
    let strategy = (family_strategy(), 20usize..200, any::<u64>(), prop::collection::vec(-1.0f64..1.0, 5));
    report(
        "finite-difference Hessian",
        runner(cases).run(&strategy, |(family, n, seed, beta)| {
            let data = sim(family, n, seed);
            let beta = DVector::from_vec(beta);
            let j = family.neg_hessian(&data, &beta).unwrap();
            let h = 1e-5;
            for c in 0..beta.len() {
                let mut up = beta.clone();
                let mut down = beta.clone();
                up[c] += h;
                down[c] -= h;
                let du = (family.score(&data, &up).unwrap() - family.score(&data, &down).unwrap()) / (2.0 * h);
                for r in 0..beta.len() {
                    let fd = -du[r];
                    let tol = 1e-6 * (1.0 + j[(r, c)].abs());
                    prop_assert!((fd - j[(r, c)]).abs() <= tol, "J[{r},{c}] = {} vs fd {fd}", j[(r, c)]);
                }
            }
            Ok(())
        }),
    )
}

/// Every row is read exactly once by a PASA run.
pub fn check_single_pass(cases: u32) -> std::result::Result<(), String> {
    let strategy = (family_strategy(), 1usize..6, 1usize..6, any::<u64>());
    report(
        "single pass",
        runner(cases).run(&strategy, |(family, k, q, seed)| {
            let data = sim(family, 3000, seed);
            let source = CountingSource::new(&data);
            let cfg = RunConfig { k, q, seed, threads: 2, ..RunConfig::default() };
            let plan = partition(data.len(), k, q, data.p(), seed).unwrap();
            run_pasa(family, &source, &plan, &cfg).unwrap();
            prop_assert!(source.counts().iter().all(|&c| c == 1));
            Ok(())
        }),
    )
}

pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(m.clone()).eigenvalues.min()
}

/// The accumulated information only grows: each increment is PSD.
pub fn check_monotone_information(cases: u32) -> std::result::Result<(), String> {
    let strategy = (family_strategy(), 2usize..12, any::<u64>());
    report(
        "monotone information",
        runner(cases).run(&strategy, |(family, batches, seed)| {
            let data = sim(family, 200 * batches, seed);
            let cfg = StreamConfig::default();
            let rows = |b: usize| (200 * b..200 * (b + 1)).collect::<Vec<_>>();
            let mut state = StreamState::init_block(family, &data.gather(&rows(0)).unwrap(), &cfg).unwrap();
            for b in 1..batches {
                let next = state.renew_update(&data.gather(&rows(b)).unwrap(), &cfg).unwrap();
                let delta = &next.j_acc - &state.j_acc;
                let scale = next.j_acc.amax();
                prop_assert!(min_eigenvalue(&delta) >= -1e-10 * scale, "batch {b}: {}", min_eigenvalue(&delta));
                prop_assert!(min_eigenvalue(&next.j_acc) > 0.0);
                state = next;
            }
            Ok(())
        }),
    )
}

pub fn random_summaries(k: usize, seed: u64) -> Vec<BlockSummary> {
    let family = if seed % 2 == 0 { GlmFamily::GaussianIdentity } else { GlmFamily::BernoulliLogit };
    let data = sim(family, 400 * k, seed);
    (0..k)
        .map(|b| {
            let rows: Vec<usize> = (400 * b..400 * (b + 1)).collect();
            let fit = family.fit_mle(&data.gather(&rows).unwrap(), &Default::default()).unwrap();
            BlockSummary { block_id: b, n_k: fit.n, j_k: &fit.j / fit.n as f64, beta_k: fit.beta, phi_k: fit.phi }
        })
        .collect()
}

/// Combining is bitwise independent of input order.
pub fn check_permutation_invariance(cases: u32) -> std::result::Result<(), String> {
    let strategy = (1usize..9, any::<u64>()).prop_flat_map(|(k, seed)| {
        (Just(k), Just(seed), Just((0..k).collect::<Vec<usize>>()).prop_shuffle())
    });
    report(
        "combiner permutation invariance",
        runner(cases).run(&strategy, |(k, seed, order)| {
            let blocks = random_summaries(k, seed);
            let shuffled: Vec<BlockSummary> = order.iter().map(|&i| blocks[i].clone()).collect();
            let a = combine(&blocks).unwrap();
            let b = combine(&shuffled).unwrap();
            prop_assert_eq!(a.beta, b.beta);
            prop_assert_eq!(a.cov, b.cov);
            Ok(())
        }),
    )
}

pub fn check_auc_brute_force(cases: u32) -> std::result::Result<(), String> {
    // Scores on a coarse grid so ties are common.
    let strategy = (2usize..=200).prop_flat_map(|n| {
        (prop::collection::vec(0u8..20, n), prop::collection::vec(any::<bool>(), n))
    });
    report(
        "AUC brute force",
        runner(cases).run(&strategy, |(raw, flags)| {
            let scores: Vec<f64> = raw.iter().map(|&s| f64::from(s) / 20.0).collect();
            let labels: Vec<f64> = flags.iter().map(|&f| f64::from(u8::from(f))).collect();
            let has_both = flags.iter().any(|&f| f) && flags.iter().any(|&f| !f);
            match pasa::report::auc(&scores, &labels) {
                Ok(a) => {
                    prop_assert!(has_both);
                    let want = brute_auc(&scores, &labels);
                    prop_assert!((a - want).abs() <= 1e-12, "{a} vs {want}");
                }
                Err(_) => prop_assert!(!has_both),
            }
            Ok(())
        }),
    )
}

/// Results do not depend on the worker count.
pub fn check_thread_determinism(cases: u32) -> std::result::Result<(), String> {
    let strategy = (family_strategy(), 2usize..8, 1usize..5, any::<u64>());
    report(
        "determinism across thread counts",
        runner(cases).run(&strategy, |(family, k, q, seed)| {
            let data = sim(family, 4000, seed);
            let plan = partition(data.len(), k, q, data.p(), seed).unwrap();
            let base = RunConfig { k, q, seed, ..RunConfig::default() };
            let one = run_pasa(family, &data, &plan, &RunConfig { threads: 1, ..base.clone() }).unwrap();
            for threads in [2, 3, 8] {
                let many = run_pasa(family, &data, &plan, &RunConfig { threads, ..base.clone() }).unwrap();
                prop_assert_eq!(&one.beta, &many.beta);
                prop_assert_eq!(&one.cov, &many.cov);
                prop_assert_eq!(&one.per_block, &many.per_block);
            }
            let reps = pasa::report::ReplicationConfig {
                sim: SimSpec { family, n: 2000, ..SimSpec::default() },
                run: RunConfig { k: 2, q: 2, ..RunConfig::default() },
                reps: 4,
                base_seed: seed % 1000,
                keep_per_rep: true,
                ..Default::default()
            };
            let r1 = pasa::report::run_replications(&pasa::report::ReplicationConfig { threads: 1, ..reps.clone() }).unwrap();
            let r4 = pasa::report::run_replications(&pasa::report::ReplicationConfig { threads: 4, ..reps }).unwrap();
            let stats = |r: &pasa::report::ReplicationReport| {
                r.per_rep.as_ref().unwrap().iter().map(|x| (x.beta.clone(), x.se.clone(), x.covered.clone())).collect::<Vec<_>>()
            };
            prop_assert_eq!(stats(&r1), stats(&r4));
            prop_assert_eq!((r1.a_bias, r1.ase, r1.ese, r1.cp), (r4.a_bias, r4.ase, r4.ese, r4.cp));
            Ok(())
        }),
    )
}
