//! Reference implementations that share no code with the library.

/// Solves `m·x = b` by Gaussian elimination with partial pivoting.
pub fn gauss_solve(mut m: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))?;
        if m[piv][col].abs() < 1e-12 {
            return None;
        }
        m.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..n {
            let f = m[row][col] / m[col][col];
            if f != 0.0 {
                for k in col..n {
                    m[row][k] -= f * m[col][k];
                }
                b[row] -= f * b[col];
            }
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|k| m[i][k] * x[k]).sum();
        x[i] = (b[i] - s) / m[i][i];
    }
    Some(x)
}

/// Minimizer of `(1/2n)Σ(θ·[x,1] − y)² + (η/2)‖θ − θ⁰‖²` from the normal
/// equations `(X̃ᵀX̃/n + ηI)θ = X̃ᵀy/n + ηθ⁰`.
pub fn ridge_normal_equations(xs: &[Vec<f64>], ys: &[f64], eta: f64, prior: &[f64]) -> Vec<f64> {
    let d = xs[0].len() + 1;
    let n = xs.len() as f64;
    let mut m = vec![vec![0.0; d]; d];
    let mut b = vec![0.0; d];
    for (x, y) in xs.iter().zip(ys) {
        let xt: Vec<f64> = x.iter().copied().chain(std::iter::once(1.0)).collect();
        for i in 0..d {
            b[i] += xt[i] * y / n;
            for j in 0..d {
                m[i][j] += xt[i] * xt[j] / n;
            }
        }
    }
    for i in 0..d {
        m[i][i] += eta;
        b[i] += eta * prior[i];
    }
    gauss_solve(m, b).expect("ridge system is nonsingular")
}

/// Maximum of `ΣΣ o·r` over the round-wise polytope by enumerating every
/// basic solution. `None` when the polytope is empty.
pub fn lp_vertex_enumeration(
    rewards: &[Vec<f64>],
    costs: &[Vec<Vec<f64>>],
    rhs: &[f64],
    allow_skip: bool,
) -> Option<f64> {
    let t_rows = rewards.len();
    let a = rewards[0].len();
    let n = t_rows * a;
    // Each constraint as (coefficients, rhs, is_equality).
    let mut rows: Vec<(Vec<f64>, f64, bool)> = Vec::new();
    for (k, cap) in rhs.iter().enumerate() {
        let coeffs = costs
            .iter()
            .flat_map(|r| r.iter().map(move |phi| phi[k]))
            .collect();
        rows.push((coeffs, *cap, false));
    }
    for t in 0..t_rows {
        let mut coeffs = vec![0.0; n];
        coeffs[t * a..(t + 1) * a].fill(1.0);
        rows.push((coeffs, 1.0, !allow_skip));
    }
    for i in 0..n {
        let mut coeffs = vec![0.0; n];
        coeffs[i] = -1.0;
        rows.push((coeffs, 0.0, false));
    }
    let equalities: Vec<usize> = (0..rows.len()).filter(|&i| rows[i].2).collect();
    let inequalities: Vec<usize> = (0..rows.len()).filter(|&i| !rows[i].2).collect();
    let need = n - equalities.len();
    let objective: Vec<f64> = rewards.iter().flatten().copied().collect();

    let mut best: Option<f64> = None;
    let mut chosen = Vec::with_capacity(need);
    subsets(&inequalities, need, 0, &mut chosen, &mut |active| {
        let idx: Vec<usize> = equalities.iter().chain(active).copied().collect();
        let m: Vec<Vec<f64>> = idx.iter().map(|&i| rows[i].0.clone()).collect();
        let b: Vec<f64> = idx.iter().map(|&i| rows[i].1).collect();
        let Some(x) = gauss_solve(m, b) else { return };
        let feasible = rows.iter().all(|(c, r, eq)| {
            let lhs: f64 = c.iter().zip(&x).map(|(u, v)| u * v).sum();
            if *eq {
                (lhs - r).abs() <= 1e-9
            } else {
                lhs <= r + 1e-9
            }
        });
        if feasible {
            let v: f64 = objective.iter().zip(&x).map(|(u, v)| u * v).sum();
            best = Some(best.map_or(v, |b: f64| b.max(v)));
        }
    });
    best
}

fn subsets(
    items: &[usize],
    k: usize,
    start: usize,
    chosen: &mut Vec<usize>,
    f: &mut impl FnMut(&[usize]),
) {
    if chosen.len() == k {
        f(chosen);
        return;
    }
    for i in start..items.len() {
        if items.len() - i < k - chosen.len() {
            break;
        }
        chosen.push(items[i]);
        subsets(items, k, i + 1, chosen, f);
        chosen.pop();
    }
}

/// Exponentiated gradient on the lifted simplex after a whole gradient
/// sequence: `λ_c ∝ λ⁰_c·exp(−Σ_j ϱ_j g_c^j)`, slack `∝ slack⁰`, total `Λ`.
pub fn eg_closed_form(
    lambda0: &[f64],
    slack0: f64,
    radius: f64,
    steps: &[f64],
    grads: &[Vec<f64>],
) -> (Vec<f64>, f64) {
    let weights: Vec<f64> = lambda0
        .iter()
        .enumerate()
        .map(|(c, l)| {
            let s: f64 = steps.iter().zip(grads).map(|(eta, g)| eta * g[c]).sum();
            l * (-s).exp()
        })
        .collect();
    let total = weights.iter().sum::<f64>() + slack0;
    (
        weights.iter().map(|w| radius * w / total).collect(),
        radius * slack0 / total,
    )
}
