//! Closed-form identities of the averaged sequence, kept as independent
//! routes against the step-by-step recursion.
//!
//! These run in "oracle mode": they need full histories, which the real
//! optimizer never stores. Tests drive both routes and compare.

/// x_T implied by a c schedule, computed from the unrolled weights rather
/// than the recursion: `x_T = sum_i w_i z_i` with
/// `w_i = c_i * prod_{s>i} (1 - c_s)` and `c_1 = 1`.
///
/// `z_history[i]` is z_{i+1}; `c_schedule[i]` is c_{i+1} (so `c_schedule[0]`,
/// the conventional c_1 = 1, is forced regardless of its value). For
/// `c_t = 1/t` the weights collapse to the plain mean of z_1..z_T.
pub fn closed_form_x(z_history: &[Vec<f64>], c_schedule: &[f64]) -> Vec<f64> {
    assert!(!z_history.is_empty(), "need at least one z");
    assert_eq!(z_history.len(), c_schedule.len(), "aligned histories");
    let t_max = z_history.len();
    let dim = z_history[0].len();

    let mut weights = vec![0.0; t_max];
    let mut tail = 1.0;
    for i in (0..t_max).rev() {
        let c_i = if i == 0 { 1.0 } else { c_schedule[i] };
        weights[i] = c_i * tail;
        tail *= 1.0 - c_i;
    }

    let mut x = vec![0.0; dim];
    for (w, z) in weights.iter().zip(z_history) {
        for (xe, ze) in x.iter_mut().zip(z) {
            *xe += w * ze;
        }
    }
    x
}

/// The averaged-sequence increment under `c_{t+1} = 1/(t+1)` and
/// z-updates `z_{j+1} = z_j - eta O_j`:
/// `delta_x_t = -(eta / (t (t+1))) sum_{j=1}^t j O_j`.
///
/// `orth_history[j-1]` is O_j; requires `t <= orth_history.len()`.
pub fn delta_x_weighted(orth_history: &[Vec<f64>], eta: f64, t: usize) -> Vec<f64> {
    assert!(t >= 1 && t <= orth_history.len(), "t out of history range");
    let dim = orth_history[0].len();
    let mut acc = vec![0.0; dim];
    for (j, o) in orth_history.iter().take(t).enumerate() {
        let w = (j + 1) as f64;
        for (a, oe) in acc.iter_mut().zip(o) {
            *a += w * oe;
        }
    }
    let scale = -eta / (t as f64 * (t as f64 + 1.0));
    acc.iter_mut().for_each(|a| *a *= scale);
    acc
}

/// Reconstructs the x trajectory from the y history through the two-term
/// effective-weight recursion `x_t = (1 - omega_t) x_{t-1} + omega_t y_t`
/// with `omega_t = 1 / ((t-1)(1-beta_t) + 1)` (the c_t = 1/t convention).
///
/// Returns x_1..x_T. An independent bookkeeping route for the same
/// trajectory the three-sequence recursion produces.
pub fn omega_form_x(y_history: &[Vec<f64>], beta_history: &[f64]) -> Vec<Vec<f64>> {
    assert_eq!(y_history.len(), beta_history.len(), "aligned histories");
    assert!(!y_history.is_empty());
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(y_history.len());
    let mut x = y_history[0].clone(); // omega_1 = 1
    out.push(x.clone());
    for (t, (y, beta)) in y_history.iter().zip(beta_history).enumerate().skip(1) {
        let t1 = (t + 1) as f64; // 1-based step
        let omega = 1.0 / ((t1 - 1.0) * (1.0 - beta) + 1.0);
        for (xe, ye) in x.iter_mut().zip(y) {
            *xe = (1.0 - omega) * *xe + omega * ye;
        }
        out.push(x.clone());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_for_harmonic_c() {
        // z = 1, 2, 3 with c_t = 1/t: x_3 is the mean, 2.
        let z = vec![vec![1.0], vec![2.0], vec![3.0]];
        let c = vec![1.0, 0.5, 1.0 / 3.0];
        let x = closed_form_x(&z, &c);
        assert!((x[0] - 2.0).abs() < 1e-15);
    }

    #[test]
    fn constant_lr_c_shifts_the_mean_window() {
        // For c_{t+1} = 1/t (the lr-weighted form under constant lr),
        // unrolling gives x_{t+1} = mean(z_2..z_{t+1}): c_2 = 1 wipes x_1.
        let z: Vec<Vec<f64>> = (1..=5).map(|i| vec![i as f64]).collect();
        // c_1 (ignored), c_2 = 1/1, c_3 = 1/2, c_4 = 1/3, c_5 = 1/4.
        let c = vec![1.0, 1.0, 0.5, 1.0 / 3.0, 0.25];
        let x = closed_form_x(&z, &c);
        let expected = (2.0 + 3.0 + 4.0 + 5.0) / 4.0;
        assert!((x[0] - expected).abs() < 1e-15, "{} vs {expected}", x[0]);
    }

    #[test]
    fn matches_recursion_on_random_sequences() {
        use crate::rng::AmuseRng;
        let mut rng = AmuseRng::seed_from_u64(4);
        let t_max = 200;
        let dim = 3;
        let mut z_hist: Vec<Vec<f64>> = Vec::new();
        let mut z: Vec<f64> = (0..dim).map(|_| rng.normal()).collect();
        z_hist.push(z.clone());
        for _ in 1..t_max {
            for e in z.iter_mut() {
                *e += 0.1 * rng.normal();
            }
            z_hist.push(z.clone());
        }
        let c: Vec<f64> = (1..=t_max).map(|t| 1.0 / t as f64).collect();
        // Recursion route.
        let mut x = z_hist[0].clone();
        for t in 1..t_max {
            let ct = c[t];
            for (xe, ze) in x.iter_mut().zip(&z_hist[t]) {
                *xe = (1.0 - ct) * *xe + ct * ze;
            }
        }
        let closed = closed_form_x(&z_hist, &c);
        for (a, b) in x.iter().zip(&closed) {
            assert!((a - b).abs() < 1e-10, "{a} vs {b}");
        }
    }

    #[test]
    fn single_term_delta() {
        let o = vec![vec![2.0, -4.0]];
        let d = delta_x_weighted(&o, 0.5, 1);
        // -(eta/2) O_1
        assert_eq!(d, vec![-0.5, 1.0]);
    }

    #[test]
    fn constant_orth_gives_constant_delta() {
        // O == U: delta_x_t = -eta U / 2 for every t.
        let u = vec![1.0, -2.0, 0.5];
        let hist: Vec<Vec<f64>> = (0..50).map(|_| u.clone()).collect();
        for t in 1..=50 {
            let d = delta_x_weighted(&hist, 0.2, t);
            for (de, ue) in d.iter().zip(&u) {
                assert!((de + 0.2 * ue / 2.0).abs() < 1e-12);
            }
        }
    }
}
