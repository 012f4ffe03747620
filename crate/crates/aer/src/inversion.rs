//! Source reconstruction from one noisy time slice: noise model, layer
//! window detection and exclusion, one-sided smoothing splines with a
//! discrepancy-principle parameter choice, the pointwise target
//! `g = k u u_x`, shape-constrained least-squares fits, and the pipeline
//! orchestrator tying them to the error-bound machinery.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::asymptotics::{layer_width_at, FrontPath, PhysicalSetup};
use crate::bounds::{
    aposteriori_delta1, convex_envelope, coordinate_extremes, monotone_envelope, pointwise_delta2,
    unconstrained_envelope, AdmissibleSet, BoundsError, Delta1Mode, Envelope, ShapeClass,
};

#[derive(Debug, Error)]
pub enum InversionError {
    #[error("no transition layer detected (max jump {max_jump:.3e} < 3x median {median:.3e})")]
    NoLayerDetected { max_jump: f64, median: f64 },
    #[error("side has {n} valid points, at least 4 are required for smoothing")]
    DegenerateSide { n: usize },
    #[error("gradient data missing at node {index} and no smoothed field available")]
    MissingGradient { index: usize },
    #[error("valid nodes are not uniformly spaced (convex fit requires a uniform grid)")]
    NonUniformGrid,
    #[error("all valid data lies on one side of the layer window")]
    OneSidedData,
    #[error("need at least {need} valid points, got {got}")]
    TooFewPoints { need: usize, got: usize },
    #[error(transparent)]
    Bounds(#[from] BoundsError),
    #[error(transparent)]
    Asymptotics(#[from] crate::asymptotics::AsymptoticsError),
}

/// One time slice of (possibly noisy) field samples, with optional
/// gradient samples and a validity mask for data gaps.
#[derive(Debug, Clone)]
pub struct Observations {
    pub t0: f64,
    pub xs: Vec<f64>,
    pub u_noisy: Vec<f64>,
    pub w_noisy: Option<Vec<f64>>,
    pub delta: f64,
    pub mask: Vec<bool>,
    pub seed: u64,
}

impl Observations {
    pub fn valid_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }
}

/// Multiplicative uniform noise `u_i^d = (1 + delta (2 r - 1)) u_i`, with
/// fresh draws for the gradient samples. Deterministic for a fixed seed.
pub fn add_noise(
    t0: f64,
    xs: &[f64],
    u_exact: &[f64],
    w_exact: Option<&[f64]>,
    delta: f64,
    seed: u64,
) -> Observations {
    assert!(delta >= 0.0);
    assert_eq!(xs.len(), u_exact.len());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut perturb = |v: &[f64]| -> Vec<f64> {
        v.iter()
            .map(|&x| (1.0 + delta * (2.0 * rng.gen::<f64>() - 1.0)) * x)
            .collect()
    };
    let u_noisy = perturb(u_exact);
    let w_noisy = w_exact.map(|w| {
        assert_eq!(w.len(), xs.len());
        perturb(w)
    });
    Observations {
        t0,
        xs: xs.to_vec(),
        u_noisy,
        w_noisy,
        delta,
        mask: vec![true; xs.len()],
        seed,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WindowSource {
    Oracle,
    DataDriven,
}

/// Interval around the front excluded from the reconstruction.
#[derive(Debug, Clone, Copy)]
pub struct LayerWindow {
    pub x_lo: f64,
    pub x_hi: f64,
    pub source: WindowSource,
}

impl LayerWindow {
    pub fn contains(&self, x: f64) -> bool {
        x > self.x_lo && x < self.x_hi
    }
}

/// Locates the transition layer at `obs.t0`. With a front path the window
/// is `x0(t0) +- dx/2` from the asymptotic layer width (oracle mode).
/// Without one, the window centers on the largest first difference of the
/// valid samples and the width formula is evaluated with the jump
/// amplitude estimated from the outermost samples (data mode).
pub fn detect_layer_window(
    obs: &Observations,
    front: Option<&FrontPath>,
    setup: &PhysicalSetup,
) -> Result<LayerWindow, InversionError> {
    let valid: Vec<usize> = (0..obs.xs.len()).filter(|&i| obs.mask[i]).collect();
    if valid.len() < 5 {
        return Err(InversionError::TooFewPoints {
            need: 5,
            got: valid.len(),
        });
    }

    if let Some(path) = front {
        let x0 = path
            .x0_at(obs.t0)
            .ok_or(crate::asymptotics::AsymptoticsError::OutOfDomain {
                x: f64::NAN,
                t: obs.t0,
            })?;
        let p_abs = ((setup.u_right - setup.u_left) / 2.0).abs();
        let lw = layer_width_at(setup, p_abs, x0, obs.t0)?;
        let half = (lw.dx / 2.0).max(gradient_tail_halfwidth(setup, p_abs));
        return Ok(LayerWindow {
            x_lo: x0 - half,
            x_hi: x0 + half,
            source: WindowSource::Oracle,
        });
    }

    // Data mode: jump location from the largest adjacent difference.
    let mut jumps: Vec<(f64, f64)> = Vec::with_capacity(valid.len() - 1);
    for w in valid.windows(2) {
        let (i, j) = (w[0], w[1]);
        let mid = 0.5 * (obs.xs[i] + obs.xs[j]);
        jumps.push((mid, (obs.u_noisy[j] - obs.u_noisy[i]).abs()));
    }
    let mut mags: Vec<f64> = jumps.iter().map(|&(_, m)| m).collect();
    mags.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median = mags[mags.len() / 2];
    let (center, max_jump) = jumps
        .iter()
        .cloned()
        .fold((0.0, f64::NEG_INFINITY), |acc, j| {
            if j.1 > acc.1 {
                j
            } else {
                acc
            }
        });
    if max_jump < 3.0 * median {
        return Err(InversionError::NoLayerDetected { max_jump, median });
    }
    let first = valid[0];
    let last = valid[valid.len() - 1];
    let p_est = ((obs.u_noisy[last] - obs.u_noisy[first]) / 2.0).abs();
    let lw = layer_width_at(setup, p_est, center, obs.t0)?;
    let half = (lw.dx / 2.0).max(gradient_tail_halfwidth(setup, p_est));
    Ok(LayerWindow {
        x_lo: center - half,
        x_hi: center + half,
        source: WindowSource::DataDriven,
    })
}

/// Half-width beyond which the layer corrector's x-derivative contribution
/// `|Q0'|/mu` drops below `mu^2`. Gradient samples taken closer than this
/// to the front are layer-contaminated even where `|Q0|` itself is already
/// below `mu^2`, so the exclusion window is the larger of the two radii.
fn gradient_tail_halfwidth(setup: &PhysicalSetup, p_abs: f64) -> f64 {
    if p_abs <= 0.0 {
        return 0.0;
    }
    // |Q0'(xi)| = (k p^2 / 2) sech^2(xi k p / 2); solve sech^2 = s exactly.
    let s = 2.0 * setup.mu.powi(3) / (setup.k * p_abs * p_abs);
    if s >= 1.0 {
        return 0.0;
    }
    let y = (1.0 / s.sqrt()).acosh();
    setup.mu * 2.0 * y / (setup.k * p_abs)
}

/// Natural cubic smoothing spline on one side of the layer, with the
/// penalty weight chosen by the discrepancy principle.
#[derive(Debug, Clone)]
pub struct SmoothedField {
    pub xs: Vec<f64>,
    /// Smoothed values at the data sites.
    pub values: Vec<f64>,
    /// Second derivatives at all sites (natural: zero at the ends).
    second: Vec<f64>,
    pub epsilon: f64,
    /// Attained mean-square misfit.
    pub residual: f64,
    /// False when even the interpolating limit leaves the misfit above
    /// the discrepancy target.
    pub discrepancy_met: bool,
}

/// Solves the penalized least-squares problem
/// `min sum (g_i - y_i)^2 + eps * int (g'')^2` over natural cubic splines
/// for a fixed `eps`, returning fitted values and interior second
/// derivatives (Reinsch's algorithm, banded Cholesky).
fn reinsch_fit(xs: &[f64], ys: &[f64], eps: f64) -> (Vec<f64>, Vec<f64>) {
    let n = xs.len();
    let m = n - 2;
    let h: Vec<f64> = xs.windows(2).map(|w| w[1] - w[0]).collect();
    if m == 0 {
        return (ys.to_vec(), vec![0.0; n]);
    }

    // Pentadiagonal system (R + eps Q'Q) gamma = Q'y; R tridiagonal of the
    // spline inner products, Q the second-difference map. Stored by bands.
    let mut diag = vec![0.0f64; m];
    let mut off1 = vec![0.0f64; m.saturating_sub(1)];
    let mut off2 = vec![0.0f64; m.saturating_sub(2)];
    let q_col = |j: usize| -> (f64, f64, f64) {
        // Column j (0-based, interior node j+1): entries at rows j, j+1, j+2.
        (1.0 / h[j], -1.0 / h[j] - 1.0 / h[j + 1], 1.0 / h[j + 1])
    };
    for j in 0..m {
        let (a, b, c) = q_col(j);
        diag[j] = (h[j] + h[j + 1]) / 3.0 + eps * (a * a + b * b + c * c);
        if j + 1 < m {
            let (a2, b2, _) = q_col(j + 1);
            off1[j] = h[j + 1] / 6.0 + eps * (b * a2 + c * b2);
        }
        if j + 2 < m {
            let (a3, _, _) = q_col(j + 2);
            off2[j] = eps * c * a3;
        }
    }
    let rhs: Vec<f64> = (0..m)
        .map(|j| {
            let (a, b, c) = q_col(j);
            a * ys[j] + b * ys[j + 1] + c * ys[j + 2]
        })
        .collect();

    // Banded Cholesky (bandwidth 2), forward/back substitution.
    let mut l0 = vec![0.0f64; m];
    let mut l1 = vec![0.0f64; m.saturating_sub(1)];
    let mut l2 = vec![0.0f64; m.saturating_sub(2)];
    for j in 0..m {
        let mut d = diag[j];
        if j >= 1 {
            d -= l1[j - 1] * l1[j - 1];
        }
        if j >= 2 {
            d -= l2[j - 2] * l2[j - 2];
        }
        l0[j] = d.max(1e-300).sqrt();
        if j + 1 < m {
            let mut v = off1[j];
            if j >= 1 {
                v -= l1[j - 1] * l2[j - 1];
            }
            l1[j] = v / l0[j];
        }
        if j + 2 < m {
            l2[j] = off2[j] / l0[j];
        }
    }
    let mut z = vec![0.0f64; m];
    for j in 0..m {
        let mut v = rhs[j];
        if j >= 1 {
            v -= l1[j - 1] * z[j - 1];
        }
        if j >= 2 {
            v -= l2[j - 2] * z[j - 2];
        }
        z[j] = v / l0[j];
    }
    let mut gamma = vec![0.0f64; m];
    for j in (0..m).rev() {
        let mut v = z[j];
        if j + 1 < m {
            v -= l1[j] * gamma[j + 1];
        }
        if j + 2 < m {
            v -= l2[j] * gamma[j + 2];
        }
        gamma[j] = v / l0[j];
    }

    // Fitted values g = y - eps Q gamma.
    let mut g = ys.to_vec();
    for j in 0..m {
        let (a, b, c) = q_col(j);
        g[j] -= eps * a * gamma[j];
        g[j + 1] -= eps * b * gamma[j];
        g[j + 2] -= eps * c * gamma[j];
    }
    let mut second = vec![0.0f64; n];
    second[1..1 + m].copy_from_slice(&gamma);
    (g, second)
}

/// Smoothing-spline fit at a fixed penalty weight (no parameter search).
pub fn smooth_field_fixed(xs: &[f64], ys: &[f64], eps: f64) -> SmoothedField {
    let (values, second) = reinsch_fit(xs, ys, eps);
    let residual = values
        .iter()
        .zip(ys)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / xs.len() as f64;
    SmoothedField {
        xs: xs.to_vec(),
        values,
        second,
        epsilon: eps,
        residual,
        discrepancy_met: true,
    }
}

/// Fits a natural cubic smoothing spline to the valid samples of one side.
/// The penalty weight is found by bisection on `log10 eps` so the attained
/// mean-square misfit matches the discrepancy target
/// `(delta * rms(y))^2`. When even the interpolating limit overshoots the
/// target, the limit is returned with `discrepancy_met = false`.
pub fn smooth_field(xs: &[f64], ys: &[f64], delta: f64) -> Result<SmoothedField, InversionError> {
    let n = xs.len();
    if n < 4 {
        return Err(InversionError::DegenerateSide { n });
    }
    assert!(delta > 0.0, "smoothing needs a positive noise level");
    let rms = (ys.iter().map(|y| y * y).sum::<f64>() / n as f64).sqrt();
    // Variance of multiplicative uniform noise on [-delta, delta] is
    // (delta u)^2 / 3; matching the attained misfit to it avoids
    // over-smoothing by the same factor.
    let target = (delta * rms) * (delta * rms) / 3.0;
    let misfit = |g: &[f64]| -> f64 {
        g.iter()
            .zip(ys)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            / n as f64
    };

    let (mut lo, mut hi) = (-16.0f64, 4.0f64);
    let (g_lo, _) = reinsch_fit(xs, ys, 10f64.powf(lo));
    if misfit(&g_lo) > target {
        let (values, second) = reinsch_fit(xs, ys, 10f64.powf(lo));
        let residual = misfit(&values);
        return Ok(SmoothedField {
            xs: xs.to_vec(),
            values,
            second,
            epsilon: 10f64.powf(lo),
            residual,
            discrepancy_met: false,
        });
    }
    // Grow the upper bracket until it overshoots the target; the misfit
    // is bounded by the straight-line limit, so this can fail for very
    // noisy data, in which case the stiffest fit is returned as-is.
    loop {
        let (g_hi, _) = reinsch_fit(xs, ys, 10f64.powf(hi));
        if misfit(&g_hi) > target {
            break;
        }
        hi += 2.0;
        if hi > 16.0 {
            let (values, second) = reinsch_fit(xs, ys, 10f64.powf(16.0));
            let residual = misfit(&values);
            return Ok(SmoothedField {
                xs: xs.to_vec(),
                values,
                second,
                epsilon: 1e16,
                residual,
                discrepancy_met: false,
            });
        }
    }
    // Misfit is nondecreasing in eps; bisect the bracket.
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        let (g, _) = reinsch_fit(xs, ys, 10f64.powf(mid));
        if misfit(&g) > target {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let eps = 10f64.powf(lo);
    let (values, second) = reinsch_fit(xs, ys, eps);
    let residual = misfit(&values);
    Ok(SmoothedField {
        xs: xs.to_vec(),
        values,
        second,
        epsilon: eps,
        residual,
        discrepancy_met: true,
    })
}

impl SmoothedField {
    fn interval_of(&self, x: f64) -> usize {
        let n = self.xs.len() - 1;
        if x <= self.xs[0] {
            return 0;
        }
        if x >= self.xs[n] {
            return n - 1;
        }
        match self.xs.binary_search_by(|v| v.partial_cmp(&x).unwrap()) {
            Ok(j) => j.min(n - 1),
            Err(j) => j - 1,
        }
    }

    /// Spline value (clamped linear continuation outside the data range).
    pub fn eval(&self, x: f64) -> f64 {
        let i = self.interval_of(x);
        let h = self.xs[i + 1] - self.xs[i];
        let a = (self.xs[i + 1] - x) / h;
        let b = (x - self.xs[i]) / h;
        a * self.values[i]
            + b * self.values[i + 1]
            + ((a * a * a - a) * self.second[i] + (b * b * b - b) * self.second[i + 1]) * h * h
                / 6.0
    }

    /// Spline first derivative.
    pub fn eval_dx(&self, x: f64) -> f64 {
        let i = self.interval_of(x);
        let h = self.xs[i + 1] - self.xs[i];
        let a = (self.xs[i + 1] - x) / h;
        let b = (x - self.xs[i]) / h;
        (self.values[i + 1] - self.values[i]) / h
            + ((3.0 * b * b - 1.0) * self.second[i + 1] - (3.0 * a * a - 1.0) * self.second[i]) * h
                / 6.0
    }
}

/// Pointwise reconstruction target `g_i = k u_i w_i` over valid nodes.
pub fn pointwise_target(
    k: f64,
    u: &[f64],
    w: &[f64],
    mask: &[bool],
) -> Result<Vec<Option<f64>>, InversionError> {
    assert_eq!(u.len(), w.len());
    assert_eq!(u.len(), mask.len());
    let mut out = Vec::with_capacity(u.len());
    for i in 0..u.len() {
        if !mask[i] {
            out.push(None);
            continue;
        }
        if !w[i].is_finite() {
            return Err(InversionError::MissingGradient { index: i });
        }
        out.push(Some(k * u[i] * w[i]));
    }
    Ok(out)
}

/// How the source estimate was completed across the layer window.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FillMethod {
    None,
    LinearBridge,
}

/// Reconstructed source on a grid, with the shape class it satisfies.
#[derive(Debug, Clone)]
pub struct SourceEstimate {
    pub xs: Vec<f64>,
    pub values: Vec<f64>,
    pub class: ShapeClass,
    pub fill: FillMethod,
}

/// Pool-adjacent-violators: exact Euclidean projection onto the
/// nondecreasing cone.
pub fn fit_monotone(g: &[f64]) -> Vec<f64> {
    assert!(g.len() >= 2);
    // Blocks of (sum, count); merge backwards while means decrease.
    let mut blocks: Vec<(f64, usize)> = Vec::with_capacity(g.len());
    for &v in g {
        blocks.push((v, 1));
        while blocks.len() >= 2 {
            let (s2, c2) = blocks[blocks.len() - 1];
            let (s1, c1) = blocks[blocks.len() - 2];
            if s1 / c1 as f64 <= s2 / c2 as f64 {
                break;
            }
            blocks.pop();
            blocks.pop();
            blocks.push((s1 + s2, c1 + c2));
        }
    }
    let mut out = Vec::with_capacity(g.len());
    for (s, c) in blocks {
        let mean = s / c as f64;
        out.extend(std::iter::repeat(mean).take(c));
    }
    out
}

/// Euclidean projection onto `{f : C f >= 0}` (nonnegative second
/// differences on a uniform grid) via the dual nonnegative least-squares
/// problem `min_{l >= 0} ||C' l + g||^2`, solved by active-set iteration.
/// KKT residual is checked to 1e-8 on exit.
pub fn fit_convex(g: &[f64], xs: &[f64]) -> Result<Vec<f64>, InversionError> {
    let n = g.len();
    assert!(n >= 3);
    assert_eq!(xs.len(), n);
    let h = xs[1] - xs[0];
    for w in xs.windows(2) {
        if ((w[1] - w[0]) - h).abs() > 1e-9 * h.abs() {
            return Err(InversionError::NonUniformGrid);
        }
    }
    let m = n - 2;
    // Row i of C: f_i - 2 f_{i+1} + f_{i+2}.
    let c_dot = |i: usize, f: &[f64]| f[i] - 2.0 * f[i + 1] + f[i + 2];
    let add_ct = |f: &mut [f64], i: usize, scale: f64| {
        f[i] += scale;
        f[i + 1] -= 2.0 * scale;
        f[i + 2] += scale;
    };

    let mut lambda = vec![0.0f64; m];
    let mut active: Vec<usize> = Vec::new();
    let mut f: Vec<f64> = g.to_vec();
    for _outer in 0..10 * m + 10 {
        // Most-violated inactive constraint enters the active set.
        let mut worst = (usize::MAX, -1e-12);
        for i in 0..m {
            if active.contains(&i) {
                continue;
            }
            let v = c_dot(i, &f);
            if v < worst.1 {
                worst = (i, v);
            }
        }
        if worst.0 == usize::MAX {
            break;
        }
        active.push(worst.0);
        // Inner loop: equality solve on the active set, dropping negative
        // multipliers until the subproblem is feasible.
        loop {
            let s = active.len();
            // Gram matrix (C_A C_A') and RHS -C_A g.
            let mut gram = vec![vec![0.0f64; s]; s];
            let mut rhs = vec![0.0f64; s];
            for (p, &i) in active.iter().enumerate() {
                let mut ei = vec![0.0; n];
                add_ct(&mut ei, i, 1.0);
                for (q, &j) in active.iter().enumerate() {
                    let mut ej = vec![0.0; n];
                    add_ct(&mut ej, j, 1.0);
                    gram[p][q] = ei.iter().zip(&ej).map(|(a, b)| a * b).sum();
                }
                rhs[p] = -c_dot(i, g);
            }
            let lam_a = solve_dense(&mut gram, &mut rhs);
            if let Some((drop_pos, _)) = lam_a
                .iter()
                .enumerate()
                .filter(|(_, &v)| v < -1e-12)
                .min_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            {
                active.remove(drop_pos);
                continue;
            }
            lambda.iter_mut().for_each(|v| *v = 0.0);
            for (p, &i) in active.iter().enumerate() {
                lambda[i] = lam_a[p];
            }
            break;
        }
        f = g.to_vec();
        for i in 0..m {
            if lambda[i] != 0.0 {
                add_ct(&mut f, i, lambda[i]);
            }
        }
    }
    // KKT certificate: primal feasibility and stationarity.
    for i in 0..m {
        let v = c_dot(i, &f);
        debug_assert!(v >= -1e-10, "constraint {i} violated by {v:.3e}");
        debug_assert!(
            lambda[i] * v.abs() <= 1e-8 || v.abs() <= 1e-8,
            "complementary slackness"
        );
    }
    let mut resid = f.clone();
    for (r, gv) in resid.iter_mut().zip(g) {
        *r -= gv;
    }
    let mut recon = vec![0.0f64; n];
    for i in 0..m {
        add_ct(&mut recon, i, lambda[i]);
    }
    let kkt: f64 = resid
        .iter()
        .zip(&recon)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    debug_assert!(kkt <= 1e-8, "stationarity residual {kkt:.3e}");
    Ok(f)
}

/// Projection onto nonpositive second differences by mirroring the convex
/// fit.
pub fn fit_concave(g: &[f64], xs: &[f64]) -> Result<Vec<f64>, InversionError> {
    let neg: Vec<f64> = g.iter().map(|v| -v).collect();
    let f = fit_convex(&neg, xs)?;
    Ok(f.into_iter().map(|v| -v).collect())
}

/// Gaussian elimination with partial pivoting for the tiny active-set
/// systems.
fn solve_dense(a: &mut [Vec<f64>], b: &mut [f64]) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| a[i][col].abs().partial_cmp(&a[j][col].abs()).unwrap())
            .unwrap();
        a.swap(col, piv);
        b.swap(col, piv);
        let d = a[col][col];
        for i in 0..n {
            if i != col && a[i][col] != 0.0 {
                let factor = a[i][col] / d;
                for j in col..n {
                    a[i][j] -= factor * a[col][j];
                }
                b[i] -= factor * b[col];
            }
        }
    }
    (0..n).map(|i| b[i] / a[i][i]).collect()
}

/// Fills `None` gaps by the line between the nearest valid neighbors
/// (constant continuation past the ends). Fails when every valid node
/// lies on one side of the gap span.
pub fn interpolate_gaps(
    xs: &[f64],
    values: &[Option<f64>],
) -> Result<Vec<f64>, InversionError> {
    let n = xs.len();
    assert_eq!(values.len(), n);
    let valid: Vec<usize> = (0..n).filter(|&i| values[i].is_some()).collect();
    if valid.is_empty() {
        return Err(InversionError::OneSidedData);
    }
    let mut out = vec![0.0f64; n];
    for i in 0..n {
        if let Some(v) = values[i] {
            out[i] = v;
            continue;
        }
        let left = valid.iter().rev().find(|&&j| j < i).copied();
        let right = valid.iter().find(|&&j| j > i).copied();
        out[i] = match (left, right) {
            (Some(l), Some(r)) => {
                let w = (xs[i] - xs[l]) / (xs[r] - xs[l]);
                values[l].unwrap() * (1.0 - w) + values[r].unwrap() * w
            }
            (Some(l), None) => values[l].unwrap(),
            (None, Some(r)) => values[r].unwrap(),
            (None, None) => unreachable!("valid is nonempty"),
        };
    }
    Ok(out)
}

/// How the gradient samples are obtained when not observed directly.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GradientMode {
    /// Backward difference of the smoothed values along each side.
    BackwardDifference,
    /// Analytic derivative of the smoothing spline.
    SplineDerivative,
}

#[derive(Debug, Clone)]
pub struct AerOptions {
    pub class: ShapeClass,
    pub gradient: GradientMode,
    /// Calibration constant for the asymptotic part of the set radius.
    pub c1: f64,
    /// Lower bound override; default derives from the anchors.
    pub c_lo: Option<f64>,
    /// Upper bound override.
    pub c_hi: Option<f64>,
    pub delta1_mode: Delta1Mode,
    /// Refinement factor of the dense grid used for the pointwise gap.
    pub dense_factor: usize,
}

impl Default for AerOptions {
    fn default() -> Self {
        AerOptions {
            class: ShapeClass::Monotone,
            gradient: GradientMode::BackwardDifference,
            c1: 1.0,
            c_lo: None,
            c_hi: None,
            delta1_mode: Delta1Mode::Relaxed,
            dense_factor: 10,
        }
    }
}

/// Scalar bounds plus the pointwise gap produced by the error machinery.
#[derive(Debug, Clone)]
pub struct ErrorReport {
    pub delta1: f64,
    pub delta1_bar: f64,
    pub xs_dense: Vec<f64>,
    pub delta2: Vec<f64>,
    pub envelope: Envelope,
    pub feasible: bool,
}

/// Full reconstruction pipeline for one observation slice: layer window,
/// gradients (observed or smoothed), pointwise target, shape-constrained
/// fit, gap fill, and the a posteriori error report.
pub fn run_aer(
    setup: &PhysicalSetup,
    obs: &Observations,
    front: Option<&FrontPath>,
    options: &AerOptions,
) -> Result<(SourceEstimate, ErrorReport), InversionError> {
    let window = detect_layer_window(obs, front, setup)?;
    let n = obs.xs.len();
    let in_window: Vec<bool> = obs.xs.iter().map(|&x| window.contains(x)).collect();
    let usable: Vec<bool> = (0..n).map(|i| obs.mask[i] && !in_window[i]).collect();
    let left_ok = (0..n).any(|i| usable[i] && obs.xs[i] <= window.x_lo);
    let right_ok = (0..n).any(|i| usable[i] && obs.xs[i] >= window.x_hi);
    if !left_ok || !right_ok {
        return Err(InversionError::OneSidedData);
    }

    // Gradient samples: observed directly or differentiated from one-sided
    // smoothing splines.
    let w = match &obs.w_noisy {
        Some(w) => w.clone(),
        None => gradients_from_smoothing(obs, &usable, &window, options)?,
    };

    let g = pointwise_target(setup.k, &obs.u_noisy, &w, &usable)?;
    let filled = interpolate_gaps(&obs.xs, &g)?;

    let (values, fill) = match options.class {
        ShapeClass::Monotone => {
            // Fit on the valid nodes, then bridge the window linearly
            // (the bridge between nondecreasing endpoints stays in class).
            let valid_g: Vec<f64> = g.iter().flatten().copied().collect();
            let fitted = fit_monotone(&valid_g);
            let mut slots: Vec<Option<f64>> = vec![None; n];
            let mut it = fitted.into_iter();
            for (slot, gv) in slots.iter_mut().zip(&g) {
                if gv.is_some() {
                    *slot = Some(it.next().unwrap());
                }
            }
            (interpolate_gaps(&obs.xs, &slots)?, FillMethod::LinearBridge)
        }
        ShapeClass::Convex => {
            // Fill first so the fit sees the uniform grid; a linear bridge
            // through a convex fit could break the class at the seams.
            (fit_convex(&filled, &obs.xs)?, FillMethod::LinearBridge)
        }
        ShapeClass::Concave => (fit_concave(&filled, &obs.xs)?, FillMethod::LinearBridge),
        ShapeClass::Unconstrained => (filled.clone(), FillMethod::LinearBridge),
    };

    let estimate = SourceEstimate {
        xs: obs.xs.clone(),
        values: values.clone(),
        class: options.class,
        fill,
    };

    // Admissible set around the filled pointwise targets.
    let anchors = filled;
    let max_anchor = anchors.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
    let radius =
        2.0 * max_anchor * obs.delta + options.c1 * setup.mu * setup.mu.ln().abs();
    let max_u = obs.u_noisy.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
    let max_w = w.iter().zip(&usable).fold(
        0.0f64,
        |a, (&v, &ok)| if ok { a.max(v.abs()) } else { a },
    );
    let min_anchor = anchors.iter().cloned().fold(f64::INFINITY, f64::min);
    let max_anchor_signed = anchors.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let c_lo = options.c_lo.unwrap_or(min_anchor - 3.0 * radius);
    let c_hi = options
        .c_hi
        .unwrap_or((2.0 * (max_u + max_w)).max(max_anchor_signed + 3.0 * radius));
    let set = AdmissibleSet::new(
        options.class,
        obs.xs.clone(),
        anchors,
        radius,
        c_lo,
        c_hi,
    )?;

    let (delta1_bar, delta1) = aposteriori_delta1(&set, &estimate.values, options.delta1_mode)?;
    let (lows, ups) = coordinate_extremes(&set)?;
    let envelope = match options.class {
        ShapeClass::Monotone => monotone_envelope(&lows, &ups, &set.xs),
        // The chord-below / support-line-above construction brackets
        // members of the curvature-constrained classes.
        ShapeClass::Convex | ShapeClass::Concave => convex_envelope(&lows, &ups, &set.xs),
        ShapeClass::Unconstrained => unconstrained_envelope(&lows, &ups, &set.xs),
    };
    let factor = options.dense_factor.max(1);
    let nd = (n - 1) * factor;
    let (x_first, x_last) = (obs.xs[0], obs.xs[n - 1]);
    let xs_dense: Vec<f64> = (0..=nd)
        .map(|j| x_first + (x_last - x_first) * j as f64 / nd as f64)
        .collect();
    let delta2 = pointwise_delta2(&envelope, &xs_dense);

    Ok((
        estimate,
        ErrorReport {
            delta1,
            delta1_bar,
            xs_dense,
            delta2,
            envelope,
            feasible: true,
        },
    ))
}

/// Smooths each side of the window separately and differentiates to get
/// gradient samples at the usable nodes.
fn gradients_from_smoothing(
    obs: &Observations,
    usable: &[bool],
    window: &LayerWindow,
    options: &AerOptions,
) -> Result<Vec<f64>, InversionError> {
    let n = obs.xs.len();
    let mut w = vec![f64::NAN; n];
    for side in 0..2 {
        let pick = |i: usize| {
            usable[i]
                && if side == 0 {
                    obs.xs[i] <= window.x_lo
                } else {
                    obs.xs[i] >= window.x_hi
                }
        };
        let idx: Vec<usize> = (0..n).filter(|&i| pick(i)).collect();
        if idx.len() < 4 {
            return Err(InversionError::DegenerateSide { n: idx.len() });
        }
        let xs: Vec<f64> = idx.iter().map(|&i| obs.xs[i]).collect();
        let ys: Vec<f64> = idx.iter().map(|&i| obs.u_noisy[i]).collect();
        let sf = smooth_field(&xs, &ys, obs.delta.max(1e-12))?;
        match options.gradient {
            GradientMode::BackwardDifference => {
                for (j, &i) in idx.iter().enumerate() {
                    if j == 0 {
                        w[i] = (sf.values[1] - sf.values[0]) / (xs[1] - xs[0]);
                    } else {
                        w[i] = (sf.values[j] - sf.values[j - 1]) / (xs[j] - xs[j - 1]);
                    }
                }
            }
            GradientMode::SplineDerivative => {
                for (j, &i) in idx.iter().enumerate() {
                    w[i] = sf.eval_dx(xs[j]);
                }
            }
        }
    }
    Ok(w)
}

/// Discrete relative L2 distance `||a - b|| / ||b||`.
pub fn relative_l2(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let num: f64 = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt();
    let den: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    num / den
}
