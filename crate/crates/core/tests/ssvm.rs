use ndarray::Array2;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rfkernel::ssvm::{dual_objective, kkt_violation, solve_ssvm, solve_ssvm_traced, SsvmSolver};
use rfkernel::{KernelKind, KernelMatrix, SsvmModel, SsvmOptions, SurvivalData};

fn random_psd(n: usize, rng: &mut ChaCha8Rng) -> KernelMatrix {
    let a = Array2::from_shape_fn((n, n), |_| rng.random::<f64>() * 2.0 - 1.0);
    let mut k = a.dot(&a.t()) / n as f64;
    for i in 0..n {
        k[[i, i]] += 0.01;
    }
    KernelMatrix::new(k, KernelKind::Custom)
}

fn random_survival(n: usize, rng: &mut ChaCha8Rng) -> SurvivalData {
    let time: Vec<f64> = (0..n).map(|_| 0.1 + rng.random::<f64>() * 2.0).collect();
    let mut event: Vec<bool> = (0..n).map(|_| rng.random::<f64>() < 0.7).collect();
    event[0] = true;
    SurvivalData::new(time, event).unwrap()
}

fn options(cost: f64, solver: SsvmSolver) -> SsvmOptions {
    SsvmOptions {
        cost,
        solver,
        ..SsvmOptions::default()
    }
}

fn model_at(alpha: Vec<f64>, alpha_star: Vec<f64>, cost: f64) -> SsvmModel {
    SsvmModel {
        train_ids: (0..alpha.len()).collect(),
        alpha,
        alpha_star,
        bias: 0.0,
        cost,
        converged: false,
        iterations: 0,
        kkt: 0.0,
        objective: 0.0,
        jitter: 0.0,
    }
}

/// Minimum of the dual over a 1e-3 grid. The objective depends on the
/// multipliers only through `alpha_i - delta_i * alpha*_i`, so the grid runs
/// over that combined coordinate and the last one is minimized exactly.
fn grid_oracle(k: &KernelMatrix, data: &SurvivalData, cost: f64) -> f64 {
    let n = data.len();
    let steps = (cost / 1e-3).floor() as i64;
    let lo: Vec<i64> = (0..n).map(|i| if data.event[i] { -steps } else { 0 }).collect();
    let kv = &k.values;
    let y = &data.time;
    let last = n - 1;
    let mut best = f64::INFINITY;
    let mut b = vec![0.0; n];
    let mut idx: Vec<i64> = lo[..last].to_vec();
    loop {
        for i in 0..last {
            b[i] = idx[i] as f64 * 1e-3;
        }
        // exact minimization over b[last] in its interval
        let lin: f64 = (0..last).map(|i| kv[[last, i]] * b[i]).sum();
        let lower = if data.event[last] { -cost } else { 0.0 };
        let cand = if kv[[last, last]] > 0.0 {
            ((y[last] - lin) / kv[[last, last]]).clamp(lower, cost)
        } else {
            0.0
        };
        for candidate in [cand, lower, cost] {
            b[last] = candidate;
            let mut f = 0.0;
            for i in 0..n {
                let kb: f64 = (0..n).map(|j| kv[[i, j]] * b[j]).sum();
                f += b[i] * (0.5 * kb - y[i]);
            }
            best = best.min(f);
        }
        let mut d = 0;
        loop {
            if d == last {
                return best;
            }
            idx[d] += 1;
            if idx[d] <= steps {
                break;
            }
            idx[d] = lo[d];
            d += 1;
        }
    }
}

#[test]
fn beats_grid_oracle_on_small_problems() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for case in 0..40 {
        let n = 1 + case % 3;
        let k = random_psd(n, &mut rng);
        let data = random_survival(n, &mut rng);
        let cost = 0.5 + rng.random::<f64>();
        let oracle = grid_oracle(&k, &data, cost);
        for solver in [SsvmSolver::CoordinateDescent, SsvmSolver::ProjectedGradient] {
            let m = solve_ssvm(&k, &data, &options(cost, solver)).unwrap();
            let f = dual_objective(&k, &data, &m.alpha, &m.alpha_star).unwrap();
            assert!(f <= oracle + 1e-6, "case {case} {solver:?}: {f} > {oracle}");
        }
    }
}

#[test]
fn converges_with_monotone_trace() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for solver in [SsvmSolver::CoordinateDescent, SsvmSolver::ProjectedGradient] {
        for _ in 0..5 {
            let k = random_psd(50, &mut rng);
            let data = random_survival(50, &mut rng);
            let mut trace = Vec::new();
            let m = solve_ssvm_traced(&k, &data, &options(1.0, solver), Some(&mut trace)).unwrap();
            assert!(m.converged, "{solver:?}");
            assert!(kkt_violation(&k, &data, &m).unwrap() <= 1e-6);
            assert!(!trace.is_empty());
            let mut prev = 0.0;
            for &f in &trace {
                assert!(f <= prev + 1e-12, "{solver:?}: {f} after {prev}");
                prev = f;
            }
            assert!(m.alpha.iter().chain(&m.alpha_star).all(|&a| (0.0..=1.0).contains(&a)));
        }
    }
}

#[test]
fn solvers_agree() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let k = random_psd(30, &mut rng);
    let data = random_survival(30, &mut rng);
    let a = solve_ssvm(&k, &data, &options(2.0, SsvmSolver::CoordinateDescent)).unwrap();
    let b = solve_ssvm(&k, &data, &options(2.0, SsvmSolver::ProjectedGradient)).unwrap();
    assert!((a.objective - b.objective).abs() < 1e-6);
}

#[test]
fn projected_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let h = 1e-6;
    for _ in 0..20 {
        let n = 6;
        let k = random_psd(n, &mut rng);
        let data = random_survival(n, &mut rng);
        let cost = 1.0;
        // keep a few coordinates on the bounds
        let pick = |rng: &mut ChaCha8Rng| match rng.random_range(0..4) {
            0 => 0.0,
            1 => cost,
            _ => 0.05 + 0.9 * rng.random::<f64>(),
        };
        let alpha: Vec<f64> = (0..n).map(|_| pick(&mut rng)).collect();
        let star: Vec<f64> = (0..n).map(|_| pick(&mut rng)).collect();
        let mut worst = 0.0f64;
        for which in 0..2 {
            for i in 0..n {
                let (mut up_a, mut up_s) = (alpha.clone(), star.clone());
                let (mut dn_a, mut dn_s) = (alpha.clone(), star.clone());
                let (v, up, dn) = if which == 0 {
                    (alpha[i], &mut up_a[i], &mut dn_a[i])
                } else {
                    (star[i], &mut up_s[i], &mut dn_s[i])
                };
                *up += h;
                *dn -= h;
                let g = (dual_objective(&k, &data, &up_a, &up_s).unwrap() - dual_objective(&k, &data, &dn_a, &dn_s).unwrap())
                    / (2.0 * h);
                let pg = if v <= 0.0 {
                    g.min(0.0)
                } else if v >= cost {
                    g.max(0.0)
                } else {
                    g
                };
                worst = worst.max(pg.abs());
            }
        }
        let kkt = kkt_violation(&k, &data, &model_at(alpha, star, cost)).unwrap();
        assert!((kkt - worst).abs() < 1e-4, "{kkt} vs {worst}");
    }
}

#[test]
fn dual_objective_examples() {
    let k = KernelMatrix::new(ndarray::array![[1.0]], KernelKind::Custom);
    let data = SurvivalData::new(vec![1.7], vec![true]).unwrap();
    let (a, s, y) = (0.3, 0.8, 1.7);
    let expected = 0.5 * (a * a + s * s) - s * a - a * y + s * y;
    assert!((dual_objective(&k, &data, &[a], &[s]).unwrap() - expected).abs() < 1e-15);
    assert_eq!(dual_objective(&k, &data, &[0.0], &[0.0]).unwrap(), 0.0);
    assert!(dual_objective(&k, &data, &[0.0, 1.0], &[0.0]).is_err());
}

#[test]
fn all_censored_problem_is_solved() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let k = random_psd(10, &mut rng);
    let data = SurvivalData::new(vec![1.0; 10], vec![false; 10]).unwrap();
    let m = solve_ssvm(&k, &data, &SsvmOptions::default()).unwrap();
    assert!(m.converged);
    assert!(m.objective <= 0.0);
    let perturbed = model_at(m.alpha.clone(), vec![0.9; 10], m.cost);
    assert_eq!(
        perturbed.prognostic_index(&k, &data).unwrap(),
        model_at(m.alpha.clone(), m.alpha_star.clone(), m.cost).prognostic_index(&k, &data).unwrap()
    );
}

#[test]
fn prognostic_index_examples() {
    let mut m = model_at(vec![0.0, 0.0], vec![0.0, 0.0], 1.0);
    m.bias = 0.7;
    let data = SurvivalData::new(vec![1.0, 2.0], vec![true, false]).unwrap();
    let cross = KernelMatrix::new(ndarray::array![[0.3, 0.9], [1.0, 0.0]], KernelKind::Custom);
    assert_eq!(m.prognostic_index(&cross, &data).unwrap(), vec![0.7, 0.7]);

    let single = model_at(vec![0.5], vec![0.0], 1.0);
    let d1 = SurvivalData::new(vec![3.0], vec![false]).unwrap();
    let k1 = KernelMatrix::new(ndarray::array![[1.0]], KernelKind::Custom);
    assert_eq!(single.prognostic_index(&k1, &d1).unwrap(), vec![0.5]);

    // weights alpha - delta * alpha*: (0.2 - 0.5, 0.4)
    let m2 = model_at(vec![0.2, 0.4], vec![0.5, 0.6], 1.0);
    let h = m2.prognostic_index(&cross, &data).unwrap();
    assert!((h[0] - (0.3 * -0.3 + 0.9 * 0.4)).abs() < 1e-15);
    assert!((h[1] - -0.3).abs() < 1e-15);
}

#[test]
fn censored_alpha_star_leaves_index_unchanged() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let k = random_psd(12, &mut rng);
    let data = random_survival(12, &mut rng);
    let m = solve_ssvm(&k, &data, &SsvmOptions::default()).unwrap();
    let base = m.prognostic_index(&k, &data).unwrap();
    for j in (0..12).filter(|&j| !data.event[j]) {
        let mut bumped = m.clone();
        bumped.alpha_star[j] = (bumped.alpha_star[j] + 0.5).min(1.0);
        assert_eq!(bumped.prognostic_index(&k, &data).unwrap(), base);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn permuting_training_rows_permutes_weights(seed in 0u64..10_000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = 15;
        let k = random_psd(n, &mut rng);
        let data = random_survival(n, &mut rng);
        let cross = KernelMatrix::new(Array2::from_shape_fn((4, n), |_| rng.random::<f64>()), KernelKind::Custom);
        let mut perm: Vec<usize> = (0..n).collect();
        rand::seq::SliceRandom::shuffle(perm.as_mut_slice(), &mut rng);
        let kp = KernelMatrix::new(k.select(&perm, &perm).values, KernelKind::Custom);
        let dp = SurvivalData::new(
            perm.iter().map(|&i| data.time[i]).collect(),
            perm.iter().map(|&i| data.event[i]).collect(),
        ).unwrap();
        let crossp = KernelMatrix::new(cross.select(&[0, 1, 2, 3], &perm).values, KernelKind::Custom);
        let opts = SsvmOptions { tol: Some(1e-10), ..SsvmOptions::default() };
        let m = solve_ssvm(&k, &data, &opts).unwrap();
        let mp = solve_ssvm(&kp, &dp, &opts).unwrap();
        // only alpha - delta * alpha* is identified for event rows
        for (pos, &i) in perm.iter().enumerate() {
            let d = if data.event[i] { 1.0 } else { 0.0 };
            let b = m.alpha[i] - d * m.alpha_star[i];
            let bp = mp.alpha[pos] - d * mp.alpha_star[pos];
            prop_assert!((b - bp).abs() < 1e-6);
            if !data.event[i] {
                prop_assert!((m.alpha[i] - mp.alpha[pos]).abs() < 1e-6);
            }
        }
        let h = m.prognostic_index(&cross, &data).unwrap();
        let hp = mp.prognostic_index(&crossp, &dp).unwrap();
        for (a, b) in h.iter().zip(&hp) {
            prop_assert!((a - b).abs() < 1e-6);
        }
    }
}
