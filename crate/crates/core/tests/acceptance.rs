//! End-to-end acceptance checks. Each test prints one `criterion N: PASS|FAIL`
//! line before asserting.

use lowrank::kyfan::{skf_bounds, skf_marchenko_pastur, skf_monte_carlo, SkfOptions};
use lowrank::linalg::{norm2, numerical_rank};
use lowrank::reduced_rank::{fit_path, projector, RankTol};
use lowrank::selection::{
    pen_known, pen_log, pen_prime, pen_prime_sub_minimal, select_known_variance,
    select_unknown_variance, sigma_hat2, Selector,
};
use lowrank::simulation::{gen_coef, gen_design, gen_response, parse_config, run_experiment};
use lowrank::{rng, DMatrix};
use nalgebra::SymmetricEigen;

fn verdict(n: usize, ok: bool, detail: &str) {
    println!(
        "criterion {n}: {} ({detail})",
        if ok { "PASS" } else { "FAIL" }
    );
    assert!(ok, "criterion {n} failed: {detail}");
}

#[test]
fn criterion_01_envelope() {
    let mut worst = f64::INFINITY;
    for (i, &(q, n)) in [(5, 5), (10, 20), (20, 50), (50, 50)].iter().enumerate() {
        let t = skf_monte_carlo(q, n, 1000, 100 + i as u64).unwrap();
        let lo_dim = q.min(n);
        let q_small = lo_dim as f64;
        let n_big = q.max(n) as f64;
        for r in 1..=lo_dim {
            let s2 = t.s2(r);
            let se = t.s2_std_error(r);
            let lower = r as f64 * (n_big - 1.0 / q_small);
            let (_, upper) = skf_bounds(q, n, r).unwrap();
            let slack = ((s2 + 5.0 * se - lower).min(upper + 5.0 * se - s2)) / s2;
            worst = worst.min(slack);
        }
    }
    verdict(
        1,
        worst >= 0.0,
        &format!("smallest relative slack {worst:.3e}"),
    );
}

#[test]
fn criterion_02_full_rank_anchor() {
    let t = skf_marchenko_pastur(200, 200, 1e-9).unwrap();
    let rel = (t.s2(200) - 40000.0).abs() / 40000.0;
    verdict(
        2,
        rel <= 1e-4,
        &format!("S(200)² = {:.6}, relative error {rel:.2e}", t.s2(200)),
    );
}

#[test]
fn criterion_03_mc_mp_agreement() {
    let mc = skf_monte_carlo(200, 1000, 200, 3).unwrap();
    let mp = skf_marchenko_pastur(200, 1000, 1e-9).unwrap();
    let worst = (1..=200)
        .map(|r| (mc.s(r) - mp.s(r)).abs() / mc.s(r))
        .fold(0.0, f64::max);
    verdict(
        3,
        worst <= 0.02,
        &format!("max relative error of S {worst:.4}"),
    );
}

/// `P` from a symmetric eigendecomposition of `XXᵀ`, and `(PY)_r` from the
/// eigenvectors of `(PY)(PY)ᵀ`.
fn eigen_truncation(x: &DMatrix<f64>, y: &DMatrix<f64>, r: usize) -> DMatrix<f64> {
    let m = x.nrows();
    let top = |g: DMatrix<f64>, k: usize| -> DMatrix<f64> {
        let e = SymmetricEigen::new(g);
        let mut idx: Vec<usize> = (0..e.eigenvalues.len()).collect();
        idx.sort_by(|&a, &b| e.eigenvalues[b].total_cmp(&e.eigenvalues[a]));
        DMatrix::from_fn(m, k, |i, j| e.eigenvectors[(i, idx[j])])
    };
    let gram = x * x.transpose();
    let ev = SymmetricEigen::new(gram.clone()).eigenvalues;
    let big = ev.iter().cloned().fold(0.0, f64::max);
    let rank = ev.iter().filter(|&&l| l > big * 1e-12).count();
    let basis = top(gram, rank);
    let py = &basis * (basis.transpose() * y);
    let ur = top(&py * py.transpose(), r);
    &ur * (ur.transpose() * py)
}

#[test]
fn criterion_04_projection_identities() {
    let mut g = rng::stream(44, &[]);
    let mut worst_rss: f64 = 0.0;
    let mut worst_fit: f64 = 0.0;
    let mut deficient = 0;
    for case in 0..100u64 {
        let dims: Vec<usize> = (0..3)
            .map(|_| 1 + (rng::gaussian_matrix(&mut g, 1, 1)[(0, 0)].abs() * 12.0) as usize % 30)
            .collect();
        let (m, p, n) = (dims[0].max(2), dims[1], dims[2]);
        let x = if case % 3 == 0 && p > 1 {
            let k = 1 + case as usize % (p.min(m) - 1).max(1);
            rng::gaussian_matrix(&mut g, m, k) * rng::gaussian_matrix(&mut g, k, p)
        } else {
            rng::gaussian_matrix(&mut g, m, p)
        };
        if numerical_rank(&x) < p.min(m) {
            deficient += 1;
        }
        let y = rng::gaussian_matrix(&mut g, m, n);
        let ny = norm2(&y);
        let path = fit_path(&x, &y, RankTol::Auto).unwrap();
        for r in 0..=path.max_rank() {
            let a = path.coefficients(r).unwrap();
            let direct = norm2(&(&y - &x * &a));
            worst_rss = worst_rss.max((path.rss()[r] - direct).abs() / ny);
            let oracle = eigen_truncation(&x, &y, r);
            worst_fit = worst_fit.max(norm2(&(&x * &a - oracle)).sqrt() / ny.sqrt());
        }
    }
    let ok = worst_rss <= 1e-8 && worst_fit <= 1e-8 && deficient > 0;
    verdict(
        4,
        ok,
        &format!("max rss gap {worst_rss:.2e}·‖Y‖², max fit gap {worst_fit:.2e}·‖Y‖, {deficient} rank-deficient designs"),
    );
}

#[test]
fn criterion_05_penalty_identity() {
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for (q, n, m) in [(50, 50, 50), (100, 100, 400)] {
        let t = skf_marchenko_pastur(q, n, 1e-9).unwrap();
        let nm = (n * m) as f64;
        for k in [1.1, 2.0, 3.0] {
            let r_max = (1..=q.min(n))
                .take_while(|&r| k * t.s2(r) + 1.0 < nm)
                .last()
                .unwrap();
            let prime = pen_prime(&t, k, m, r_max).unwrap();
            let log = pen_log(&t, k, m, r_max).unwrap();
            for r in 1..=r_max {
                let via_log = nm * log.values[r].exp_m1();
                worst = worst.max((prime.values[r] - via_log).abs() / prime.values[r]);
                checked += 1;
            }
        }
    }
    verdict(
        5,
        worst <= 1e-10,
        &format!("{checked} values, max relative gap {worst:.2e}"),
    );
}

#[test]
fn criterion_06_scaling_invariance() {
    let skf = SkfOptions::default();
    let sel = Selector::Kf {
        k: 2.0,
        alpha: 0.9,
        r_max: None,
    };
    let mut same = 0;
    for i in 0..50u64 {
        let x = gen_design(60, 12, 0.3, i).unwrap();
        let a = gen_coef(12, 10, 1 + (i as usize % 5), 0.3, i).unwrap();
        let y = gen_response(&x, &a, 1.0, i).unwrap();
        let r1 = sel
            .select(&fit_path(&x, &y, RankTol::Auto).unwrap(), &skf)
            .unwrap()
            .r_hat;
        let r2 = sel
            .select(&fit_path(&x, &(&y * 1000.0), RankTol::Auto).unwrap(), &skf)
            .unwrap()
            .r_hat;
        same += usize::from(r1 == r2);
    }
    verdict(6, same == 50, &format!("{same}/50 instances agree"));
}

fn null_paths(tag: u64) -> impl Iterator<Item = lowrank::reduced_rank::FitPath> {
    (0..200u64).map(move |i| {
        let x = gen_design(100, 100, 0.0, rng::stream_id(&[tag, i])).unwrap();
        let y = gen_response(
            &x,
            &DMatrix::zeros(100, 100),
            1.0,
            rng::stream_id(&[tag, i]),
        )
        .unwrap();
        fit_path(&x, &y, RankTol::Auto).unwrap()
    })
}

#[test]
fn criterion_07_sub_minimal_known_variance() {
    let t = skf_marchenko_pastur(100, 100, 1e-9).unwrap();
    let pen = pen_known(&t, 0.5, true).unwrap();
    let hits = null_paths(7)
        .filter(|path| {
            assert_eq!(path.rank_x(), 100);
            select_known_variance(path.rss(), &pen, 1.0, 100)
                .unwrap()
                .r_hat
                >= 4
        })
        .count();
    verdict(7, hits >= 180, &format!("r̂ ≥ 4 in {hits}/200 replicates"));
}

#[test]
fn criterion_08_sub_minimal_unknown_variance() {
    let t = skf_marchenko_pastur(100, 100, 1e-9).unwrap();
    let pen = pen_prime_sub_minimal(&t, 0.5, 100, 99).unwrap();
    let hits = null_paths(8)
        .filter(|path| select_unknown_variance(path.rss(), &pen).unwrap().r_hat >= 2)
        .count();
    verdict(8, hits >= 180, &format!("r̂ ≥ 2 in {hits}/200 replicates"));
}

#[test]
fn criterion_09_desk_experiment_one() {
    let cfg = parse_config(
        r#"{"m": 100, "p": 25, "n": 25, "r_true": 10, "rho": [0.1, 0.5, 0.9], "b": 0.4,
            "replicates": 100, "seed": 2011,
            "estimators": [{"method": "kf", "K": 2}, {"method": "rsci", "K": 2}]}"#,
    )
    .unwrap();
    let res = run_experiment(&cfg).unwrap();
    let mut ok = true;
    let mut detail = Vec::new();
    for cell in &res.cells {
        for e in &cell.estimators {
            let med = e.median.unwrap_or(f64::NAN);
            let mean = e.mean_r_hat.unwrap_or(f64::NAN);
            ok &= med <= 1.1 && (mean - 10.0).abs() <= 1.0;
            detail.push(format!(
                "ρ={} {} median {med:.3} mean r̂ {mean:.2}",
                cell.rho, e.estimator
            ));
        }
    }
    verdict(9, ok, &detail.join("; "));
}

#[test]
fn criterion_10_desk_experiment_two() {
    let cfg = parse_config(
        r#"{"m": 25, "p": 125, "n": 125, "r_true": 5, "rho": [0.1, 0.5, 0.9], "b": 0.08,
            "replicates": 30, "seed": 2012,
            "estimators": [{"method": "kf", "K": 2}, {"method": "rsci", "K": 2}]}"#,
    )
    .unwrap();
    let res = run_experiment(&cfg).unwrap();
    let mut ok = true;
    for cell in &res.cells {
        let kf = &cell.estimators[0];
        let rsci = &cell.estimators[1];
        ok &= kf.available && kf.records == 30 && kf.mean_r_hat.is_some_and(f64::is_finite);
        ok &= !rsci.available && rsci.records == 0;
    }
    let kf_records = res
        .records
        .iter()
        .filter(|r| r.estimator == "KF[K=2]")
        .count();
    verdict(
        10,
        ok && kf_records == 90,
        &format!("KF ran on {kf_records}/90 replicates, RSCI unavailable in every cell"),
    );
}

#[test]
fn criterion_11_variance_estimate() {
    let draws: Vec<f64> = (0..500u64)
        .map(|i| {
            let x = gen_design(20, 5, 0.0, i).unwrap();
            let a = gen_coef(5, 10, 2, 1.0, i).unwrap();
            let y = gen_response(&x, &a, 1.0, i).unwrap();
            sigma_hat2(&y, &projector(&x, RankTol::Auto).unwrap()).unwrap()
        })
        .collect();
    let mean = draws.iter().sum::<f64>() / 500.0;
    let sd = (draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / 499.0).sqrt();
    let se = sd / 500f64.sqrt();
    verdict(
        11,
        (mean - 1.0).abs() <= 3.0 * se,
        &format!("mean σ̂² {mean:.4}, se {se:.4}"),
    );
}

#[test]
fn criterion_12_pca() {
    let (m, n) = (30, 20);
    let x = DMatrix::<f64>::identity(m, m);
    let mut worst: f64 = 0.0;
    let mut ranks = Vec::new();
    for i in 0..20u64 {
        let a = gen_coef(m, n, 4, 1.0, i).unwrap();
        let y = gen_response(&x, &a, 1.0, i).unwrap();
        let path = fit_path(&x, &y, RankTol::Auto).unwrap();
        let r = Selector::Kf {
            k: 2.0,
            alpha: 0.9,
            r_max: None,
        }
        .select(&path, &SkfOptions::default())
        .unwrap()
        .r_hat;
        ranks.push(r);
        let e = SymmetricEigen::new(y.transpose() * &y);
        let mut idx: Vec<usize> = (0..n).collect();
        idx.sort_by(|&a, &b| e.eigenvalues[b].total_cmp(&e.eigenvalues[a]));
        let v = DMatrix::from_fn(n, r, |row, c| e.eigenvectors[(row, idx[c])]);
        let pca = &y * &v * v.transpose();
        worst = worst.max((path.fitted(r).unwrap() - pca).amax());
    }
    verdict(
        12,
        worst <= 1e-8,
        &format!("max entry gap {worst:.2e}, ranks {ranks:?}"),
    );
}
