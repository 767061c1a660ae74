//! Property and oracle checks behind the `verify` subcommand and the
//! acceptance suite. Each criterion is a self-contained function returning
//! a pass/fail detail string; budgets are asserted along with the math.

use crate::error::{AmuseError, Result};
use crate::exp::{run_quadratic, QuadMode};
use crate::linalg::{
    dot, newton_schulz, norm, polar_factor_oracle, symmetric_eigen, vectorize, DenseMatrix,
    NsCoeffs,
};
use crate::net::{
    finite_diff_grad_at, finite_diff_hvp, Activation, Batch, MlpModel, QuadraticModel,
};
use crate::optim::oracles::{closed_form_x, delta_x_weighted, omega_form_x};
use crate::optim::schedule::{beta_eq4, beta_exact_c, c_history_simple, effective_weights};
use crate::optim::{AveragingMode, Optimizer, OptimizerConfig, OptimizerKind};
use crate::rng::AmuseRng;
use crate::spectral::{dominant_ratio, lanczos_topk, lanczos_topk_dense, EigenBasis};
use std::time::Instant;

#[derive(Debug, Clone)]
pub struct CriterionResult {
    pub id: usize,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

fn run_criterion(
    id: usize,
    name: &'static str,
    budget_secs: f64,
    body: impl FnOnce() -> Result<String>,
) -> CriterionResult {
    let start = Instant::now();
    let outcome = body();
    let seconds = start.elapsed().as_secs_f64();
    match outcome {
        Ok(detail) if seconds <= budget_secs => CriterionResult {
            id,
            name,
            passed: true,
            detail,
            seconds,
        },
        Ok(detail) => CriterionResult {
            id,
            name,
            passed: false,
            detail: format!("{detail}; over budget ({seconds:.1}s > {budget_secs}s)"),
            seconds,
        },
        Err(e) => CriterionResult {
            id,
            name,
            passed: false,
            detail: e.to_string(),
            seconds,
        },
    }
}

fn ensure(cond: bool, msg: impl Into<String>) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(AmuseError::InvalidArgument(msg.into()))
    }
}

/// Criterion 1: Newton-Schulz vs the exact polar oracle on 100 random
/// well-conditioned matrices, and oracle orthogonality.
pub fn criterion_orthogonalization() -> Result<String> {
    let mut rng = AmuseRng::seed_from_u64(101);
    let mut worst_ns = 0.0f64;
    let mut worst_orth = 0.0f64;
    for _ in 0..100 {
        let c = 2 + rng.below(63);
        let r = c + rng.below(64 - c + 1);
        debug_assert!(r >= c && r <= 64);
        let u = polar_factor_oracle(&DenseMatrix::from_fn(r, r, |_, _| rng.normal()))?;
        let v = polar_factor_oracle(&DenseMatrix::from_fn(c, c, |_, _| rng.normal()))?;
        // Singular values in [0.5, 1]: condition number at most 2, and the
        // Frobenius pre-normalization keeps the spectrum above 0.05.
        let sig: Vec<f64> = (0..c).map(|_| rng.uniform(0.5, 1.0)).collect();
        let mut rect = DenseMatrix::zeros(r, c);
        for (i, &s) in sig.iter().enumerate() {
            rect.set(i, i, s);
        }
        let m = u.matmul(&rect).matmul_t(&v);
        let oracle = polar_factor_oracle(&m)?;
        let orth_err = oracle
            .t_matmul(&oracle)
            .frobenius_distance(&DenseMatrix::identity(c));
        worst_orth = worst_orth.max(orth_err);
        let ns = newton_schulz(&m, 20, NsCoeffs::CubicExact)?;
        worst_ns = worst_ns.max(ns.frobenius_distance(&oracle));
    }
    ensure(
        worst_orth < 1e-9,
        format!("oracle orthogonality {worst_orth:.3e} >= 1e-9"),
    )?;
    ensure(
        worst_ns < 1e-5,
        format!("newton_schulz distance {worst_ns:.3e} >= 1e-5"),
    )?;
    Ok(format!(
        "worst NS-oracle distance {worst_ns:.2e}, worst orthogonality {worst_orth:.2e}"
    ))
}

/// Criterion 2: backward vs central differences, HVP vs its
/// finite-difference oracle, and HVP symmetry, on 20 random model/batch
/// pairs.
pub fn criterion_gradients() -> Result<String> {
    let mut worst_grad = 0.0f64;
    let mut worst_hvp = 0.0f64;
    let mut worst_sym = 0.0f64;
    for pair in 0..20u64 {
        let mut rng = AmuseRng::for_stream(202, pair);
        let dims = [
            3 + rng.below(4),
            4 + rng.below(6),
            4 + rng.below(6),
            2 + rng.below(3),
        ];
        let model = MlpModel::new(&dims, Activation::Tanh, 1000 + pair)?;
        let n = 4 + rng.below(5);
        let inputs = DenseMatrix::from_fn(n, dims[0], |_, _| rng.uniform(0.0, 1.0));
        let labels = (0..n).map(|i| i % dims[3]).collect();
        let batch = Batch::new(inputs, labels)?;

        let exact = model.backward(&batch)?.to_flat();
        // Up to 200 sampled coordinates.
        let total = model.num_params();
        let coords: Vec<usize> = if total <= 200 {
            (0..total).collect()
        } else {
            (0..200).map(|_| rng.below(total)).collect()
        };
        let fd = finite_diff_grad_at(&model, &batch, 1e-5, &coords)?;
        for (c, f) in coords.iter().zip(&fd) {
            let e = exact[*c];
            let rel = (e - f).abs() / e.abs().max(1e-6);
            worst_grad = worst_grad.max(rel);
        }

        let v = rng.unit_vector(total);
        let hv = model.hvp(&batch, &v)?;
        let fd_hv = finite_diff_hvp(&model, &batch, &v, 1e-4)?;
        let scale = norm(&hv).max(1e-8);
        for (a, b) in hv.iter().zip(&fd_hv) {
            worst_hvp = worst_hvp.max((a - b).abs() / scale);
        }

        let u = rng.unit_vector(total);
        let hu = model.hvp(&batch, &u)?;
        let sym =
            (dot(&u, &hv) - dot(&v, &hu)).abs() / (norm(&u) * norm(&v) * norm(&hv)).max(1e-12);
        worst_sym = worst_sym.max(sym);
    }
    ensure(
        worst_grad < 1e-5,
        format!("gradient relative error {worst_grad:.3e} >= 1e-5"),
    )?;
    ensure(
        worst_hvp < 1e-4,
        format!("hvp relative error {worst_hvp:.3e} >= 1e-4"),
    )?;
    ensure(
        worst_sym < 1e-8,
        format!("hvp symmetry defect {worst_sym:.3e} >= 1e-8"),
    )?;
    Ok(format!(
        "grad {worst_grad:.2e}, hvp {worst_hvp:.2e}, symmetry {worst_sym:.2e}"
    ))
}

/// Criterion 3: quadratic-dynamics exactness over a 5x5 grid, with the
/// sign dynamics produced by the real polar oracle.
pub fn criterion_quadratic_dynamics() -> Result<String> {
    let lambdas = [1.5, 2.0, 3.0, 5.0, 8.0];
    let fracs = [0.1, 0.3, 0.5, 0.7, 0.9];
    let mut worst = 0.0f64;
    for &lambda in &lambdas {
        for &frac in &fracs {
            let eta = frac / lambda;
            let a0 = 0.8;
            let traj = run_quadratic(lambda, eta, a0, 1.0, 25, QuadMode::Gd)?;
            for s in 1..traj.a.len() {
                ensure(
                    traj.a[s].abs() < traj.a[s - 1].abs(),
                    format!("GD contraction failed at lambda={lambda}, eta={eta}"),
                )?;
                ensure(
                    traj.a[s].signum() == traj.a[s - 1].signum(),
                    format!("GD sign flip at lambda={lambda}, eta={eta}"),
                )?;
                let expect = traj.a[s - 1] * (1.0 - eta * lambda);
                worst = worst.max((traj.a[s] - expect).abs());
            }

            // Two-cycle: 0 < a_0 < eta. b_0 stays off the eta lattice so the
            // second coordinate never lands exactly on zero.
            let eta_mn = 0.5;
            let a0_mn = eta_mn * frac;
            let traj =
                run_quadratic(lambda, eta_mn, a0_mn, 4.3, 10, QuadMode::MatrixNormalized)?;
            for s in 2..traj.a.len() {
                let err = (traj.a[s] - traj.a[s - 2]).abs();
                worst = worst.max(err);
                ensure(
                    err < 1e-12,
                    format!(
                        "two-cycle broke at lambda={lambda}, a0={a0_mn}: |a_t+2 - a_t| = {err:.3e}"
                    ),
                )?;
            }
        }
    }
    ensure(worst < 1e-12, format!("worst deviation {worst:.3e}"))?;
    Ok(format!("worst deviation {worst:.2e} across the 5x5 grid"))
}

/// Criterion 4: averaging identities over 500 steps with random updates
/// and three interpolation schedules.
pub fn criterion_averaging_identities() -> Result<String> {
    let t_max = 500usize;
    let dim = 5usize;
    let eta = 0.1;
    let warmup = 20u64;
    let mut worst = 0.0f64;
    for (case, rho) in [0.0, 0.5, 1.0].into_iter().enumerate() {
        let mut rng = AmuseRng::for_stream(404, case as u64);
        let betas: Vec<f64> = (1..=t_max as u64)
            .map(|t| beta_eq4(t, warmup, 0.8, rho))
            .collect();
        let c: Vec<f64> = (1..=t_max).map(|t| 1.0 / t as f64).collect();

        let mut z: Vec<f64> = (0..dim).map(|_| rng.normal()).collect();
        let mut x = z.clone();
        let mut z_hist = vec![z.clone()];
        let mut x_hist = vec![x.clone()];
        let mut y_hist: Vec<Vec<f64>> = Vec::new();
        let mut orth_hist: Vec<Vec<f64>> = Vec::new();

        for t in 1..=t_max {
            let beta = betas[t - 1];
            let y: Vec<f64> = z
                .iter()
                .zip(&x)
                .map(|(ze, xe)| ze + beta * (xe - ze))
                .collect();
            y_hist.push(y);
            let o: Vec<f64> = (0..dim).map(|_| rng.normal()).collect();
            orth_hist.push(o.clone());
            for (ze, oe) in z.iter_mut().zip(&o) {
                *ze -= eta * oe;
            }
            z_hist.push(z.clone());
            // c_{t+1} = 1/(t+1)
            let c_next = 1.0 / (t as f64 + 1.0);
            let x_prev = x.clone();
            for (xe, ze) in x.iter_mut().zip(&z) {
                *xe = (1.0 - c_next) * *xe + c_next * ze;
            }
            x_hist.push(x.clone());

            // (ii) The weighted-sum form of the increment.
            let delta = delta_x_weighted(&orth_hist, eta, t);
            for ((xn, xp), de) in x.iter().zip(&x_prev).zip(&delta) {
                worst = worst.max(((xn - xp) - de).abs());
            }
        }

        // (i) Closed form at the end of the run.
        let c_for_closed: Vec<f64> = (1..=t_max + 1).map(|t| 1.0 / t as f64).collect();
        let closed = closed_form_x(&z_hist, &c_for_closed);
        for (a, b) in closed.iter().zip(&x) {
            worst = worst.max((a - b).abs());
        }

        // (iii) The omega-form reconstruction of the x trajectory.
        let omega_x = omega_form_x(&y_hist, &betas);
        for (t, xo) in omega_x.iter().enumerate() {
            for (a, b) in xo.iter().zip(&x_hist[t]) {
                worst = worst.max((a - b).abs());
            }
        }

        // (iv) The unrolled weights form an affine combination.
        let w = effective_weights(&betas, &c);
        let sum: f64 = w.alpha.iter().sum();
        worst = worst.max((sum - 1.0).abs());
    }
    ensure(worst < 1e-10, format!("worst identity defect {worst:.3e}"))?;
    Ok(format!("worst identity defect {worst:.2e}"))
}

/// Criterion 5: interpolation-schedule properties.
pub fn criterion_schedule_properties() -> Result<String> {
    // Constant for rho = 0.
    for t in 1..=5000u64 {
        ensure(
            beta_eq4(t, 2000, 0.8, 0.0) == 0.8,
            "beta not constant at rho = 0",
        )?;
    }
    // Non-decreasing and below 1 for rho in (0, 1]; omega non-increasing.
    for rho in [0.25, 0.5, 0.75, 1.0] {
        let t0 = 100u64;
        let betas: Vec<f64> = (1..=4000).map(|t| beta_eq4(t, t0, 0.7, rho)).collect();
        for t in 1..betas.len() {
            ensure(betas[t] < 1.0, "beta reached 1")?;
            if t as u64 >= t0 {
                ensure(betas[t] >= betas[t - 1] - 1e-15, "beta decreased")?;
            }
        }
        let w = effective_weights(&betas, &c_history_simple(betas.len()));
        for t in (t0 as usize)..w.omega.len() {
            ensure(
                w.omega[t] <= w.omega[t - 1] * (1.0 + 1e-12),
                format!("omega increased at t={t} (rho={rho})"),
            )?;
        }
    }
    // Exact-c form reduces to the ratio form for c_t = 1/t.
    let mut worst = 0.0f64;
    for i in 0..1000u64 {
        let t0 = 50 + 3 * i;
        let t = t0 + 1 + 7 * i;
        let a = beta_eq4(t, t0, 0.8, 0.6);
        let b = beta_exact_c(1.0 / t as f64, 1.0 / t0 as f64, 0.8, 0.6);
        worst = worst.max((a - b).abs());
    }
    ensure(worst < 1e-12, format!("form disagreement {worst:.3e}"))?;
    // The pinned value.
    let pinned = beta_eq4(3999, 2000, 0.8, 1.0);
    ensure(pinned == 0.9, format!("pinned beta {pinned} != 0.9"))?;
    Ok(format!(
        "pinned beta(3999) = {pinned}, form agreement {worst:.2e}"
    ))
}

/// Criterion 6: wrapper degeneracies and the eval-swap contract.
pub fn criterion_wrapper_degeneracies() -> Result<String> {
    let dims = [12, 24, 16, 6];
    let mut rng = AmuseRng::seed_from_u64(606);
    let inputs = DenseMatrix::from_fn(40, dims[0], |_, _| rng.uniform(0.0, 1.0));
    let labels: Vec<usize> = (0..40).map(|i| i % dims[3]).collect();
    let batch = Batch::new(inputs, labels)?;

    // SF-Muon with beta == 0 and frozen averaging vs vanilla Muon, bitwise.
    let muon_cfg = OptimizerConfig {
        kind: OptimizerKind::Muon,
        lr: 0.02,
        muon_momentum: 0.9,
        ..Default::default()
    };
    let sf_cfg = OptimizerConfig {
        kind: OptimizerKind::SfMuon,
        lr: 0.02,
        muon_momentum: 0.9,
        amuse_beta1: 0.0,
        averaging: AveragingMode::Frozen,
        ..Default::default()
    };
    let mut m1 = MlpModel::new(&dims, Activation::Tanh, 11)?;
    let mut m2 = m1.clone();
    let mut o1 = Optimizer::new(&m1, muon_cfg)?;
    let mut o2 = Optimizer::new(&m2, sf_cfg)?;
    for step in 0..100 {
        o1.step(&mut m1, &batch)?;
        o2.step(&mut m2, &batch)?;
        ensure(
            m1.params_flat() == vectorize(&o2.state.z),
            format!("z diverged from the Muon trajectory at step {step}"),
        )?;
    }

    // AMUSE with rho == 0 vs fixed-beta SF-Muon, bitwise.
    let mk = |kind| OptimizerConfig {
        kind,
        lr: 0.01,
        muon_momentum: 0.95,
        amuse_beta1: 0.8,
        amuse_rho: 0.0,
        warmup_steps: 10,
        ..Default::default()
    };
    let mut m3 = MlpModel::new(&dims, Activation::Tanh, 12)?;
    let mut m4 = m3.clone();
    let mut o3 = Optimizer::new(&m3, mk(OptimizerKind::SfMuon))?;
    let mut o4 = Optimizer::new(&m4, mk(OptimizerKind::Amuse))?;
    for step in 0..100 {
        o3.step(&mut m3, &batch)?;
        o4.step(&mut m4, &batch)?;
        ensure(
            m3.params_flat() == m4.params_flat()
                && vectorize(&o3.state.x) == vectorize(&o4.state.x),
            format!("AMUSE(rho=0) diverged from SF-Muon at step {step}"),
        )?;
    }

    // Eval swap: bitwise-neutral round trip, derived x within 1e-10 of the
    // explicit bookkeeping, over 1000 steps.
    let cfg = OptimizerConfig {
        kind: OptimizerKind::Amuse,
        lr: 0.02,
        muon_momentum: 0.95,
        amuse_beta1: 0.8,
        amuse_rho: 0.6,
        warmup_steps: 50,
        ..Default::default()
    };
    let mut model = MlpModel::new(&dims, Activation::Tanh, 13)?;
    let mut opt = Optimizer::new(&model, cfg)?;
    let mut worst_swap = 0.0f64;
    for step in 0..1000 {
        opt.step(&mut model, &batch)?;
        let before = model.params_flat();
        let explicit = vectorize(&opt.state.x);
        {
            let guard = opt.eval_swap(&mut model);
            let derived = guard.model().params_flat();
            let scale = explicit.iter().map(|x| x.abs()).fold(1e-12f64, f64::max);
            for (a, b) in derived.iter().zip(&explicit) {
                worst_swap = worst_swap.max((a - b).abs() / scale);
            }
        }
        ensure(
            model.params_flat() == before,
            format!("eval swap failed to restore bitwise at step {step}"),
        )?;
    }
    ensure(
        worst_swap < 1e-10,
        format!("swap-derived x off by {worst_swap:.3e}"),
    )?;
    Ok(format!(
        "degeneracies bitwise over 100 steps; swap x error {worst_swap:.2e} over 1000 steps"
    ))
}

/// Criterion 7: subspace identities and Lanczos agreement with the dense
/// eigensolver.
pub fn criterion_subspace() -> Result<String> {
    let mut rng = AmuseRng::seed_from_u64(707);

    // Pythagoras on 1000 random vectors against a random orthonormal basis.
    let dim = 40;
    let q = polar_factor_oracle(&DenseMatrix::from_fn(dim, dim, |_, _| rng.normal()))?;
    let basis = EigenBasis {
        eigenvalues: (0..8).map(|i| (8 - i) as f64).collect(),
        eigenvectors: (0..8)
            .map(|j| (0..dim).map(|i| q.get(i, j)).collect())
            .collect(),
        anchor: vec![0.0; dim],
        residuals: vec![0.0; 8],
    };
    let mut worst_pyth = 0.0f64;
    for _ in 0..1000 {
        let v: Vec<f64> = (0..dim).map(|_| rng.normal()).collect();
        let (rd, rb) = dominant_ratio(&v, &basis)?;
        worst_pyth = worst_pyth.max((rd * rd + rb * rb - 1.0).abs());
    }
    ensure(
        worst_pyth < 1e-10,
        format!("projection identity defect {worst_pyth:.3e}"),
    )?;

    // Lanczos vs dense Jacobi on random symmetric problems up to dim 200.
    let mut worst_eig = 0.0f64;
    for &n in &[50usize, 120, 200] {
        let b = DenseMatrix::from_fn(n, n, |_, _| rng.normal());
        let a = b.add(&b.transpose()).scale(0.5);
        let (dense, _) = symmetric_eigen(&a)?;
        let k = 10.min(n);
        let lan = lanczos_topk_dense(&a, k, n, 7070 + n as u64)?;
        for (got, want) in lan.eigenvalues.iter().zip(&dense) {
            worst_eig = worst_eig.max((got - want).abs());
        }
    }
    // An actual network Hessian, assembled densely column by column.
    let model = MlpModel::new(&[6, 8, 6, 3], Activation::Tanh, 71)?;
    let inputs = DenseMatrix::from_fn(30, 6, |_, _| rng.uniform(0.0, 1.0));
    let labels: Vec<usize> = (0..30).map(|i| i % 3).collect();
    let batch = Batch::new(inputs, labels)?;
    let p = model.num_params();
    let mut h = DenseMatrix::zeros(p, p);
    for j in 0..p {
        let mut e = vec![0.0; p];
        e[j] = 1.0;
        let col = model.hvp(&batch, &e)?;
        for i in 0..p {
            h.set(i, j, col[i]);
        }
    }
    let sym = h.add(&h.transpose()).scale(0.5);
    let (dense, _) = symmetric_eigen(&sym)?;
    let mut hvp = |v: &[f64]| model.hvp(&batch, v);
    let lan = lanczos_topk(&mut hvp, p, 6, p, 717, model.params_flat())?;
    for (got, want) in lan.eigenvalues.iter().zip(&dense) {
        worst_eig = worst_eig.max((got - want).abs());
    }
    ensure(
        worst_eig < 1e-8,
        format!("lanczos vs dense disagreement {worst_eig:.3e}"),
    )?;

    // Quadratic-model top eigenvalue.
    let lambda = 4.0;
    let quad = QuadraticModel::new(DenseMatrix::diag(&[lambda, 1.0]), DenseMatrix::zeros(2, 2));
    let mut hvp = |v: &[f64]| quad.hvp(v);
    let lan = lanczos_topk(&mut hvp, 4, 1, 3, 77, vec![0.0; 4])?;
    let top_err = (lan.eigenvalues[0] - lambda).abs();
    ensure(
        top_err < 1e-6,
        format!("quadratic top eigenvalue off by {top_err:.3e}"),
    )?;

    Ok(format!(
        "projection {worst_pyth:.2e}, lanczos-dense {worst_eig:.2e}, quadratic top {top_err:.2e}"
    ))
}

/// Criteria 1-7 (the fast, fully self-contained part of the acceptance
/// gate). The three scripted directional experiments and the training
/// smoke live in the acceptance test suite and the CLI experiments.
pub fn run_fast_criteria() -> Vec<CriterionResult> {
    vec![
        run_criterion(1, "orthogonalization", 10.0, criterion_orthogonalization),
        run_criterion(2, "gradients and hvp", 30.0, criterion_gradients),
        run_criterion(3, "quadratic dynamics", 5.0, criterion_quadratic_dynamics),
        run_criterion(
            4,
            "averaging identities",
            10.0,
            criterion_averaging_identities,
        ),
        run_criterion(5, "schedule properties", 1.0, criterion_schedule_properties),
        run_criterion(
            6,
            "wrapper degeneracies",
            60.0,
            criterion_wrapper_degeneracies,
        ),
        run_criterion(7, "subspace identities", 60.0, criterion_subspace),
    ]
}

/// Renders results as an aligned pass/fail table.
pub fn format_table(results: &[CriterionResult]) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{:>3}  {:<24} {:>7} {:>9}  detail\n",
        "#", "criterion", "status", "time"
    ));
    for r in results {
        out.push_str(&format!(
            "{:>3}  {:<24} {:>7} {:>8.1}s  {}\n",
            r.id,
            r.name,
            if r.passed { "pass" } else { "FAIL" },
            r.seconds,
            r.detail
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fast_criteria_all_pass() {
        let results = run_fast_criteria();
        let table = format_table(&results);
        assert!(
            results.iter().all(|r| r.passed),
            "verification failures:\n{table}"
        );
    }
}
