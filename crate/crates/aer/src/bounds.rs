//! A posteriori error machinery for reconstructed sources: admissible
//! polytopes of source vectors, nodewise extremes via linear programs,
//! lower/upper envelope functions, the relative worst-case error `delta1`
//! and the pointwise error gap `delta2`.

use thiserror::Error;

use crate::lp::{self, LpError};

#[derive(Debug, Error)]
pub enum BoundsError {
    #[error("admissible set is empty: {0}")]
    InfeasibleSet(String),
    #[error("estimate violates the admissible set by {violation:.3e} at node {index}")]
    InfeasibleEstimate { index: usize, violation: f64 },
    #[error("convex envelope breakpoint degenerate on interval {interval} (parallel support lines)")]
    DegenerateBreakpoint { interval: usize },
    #[error("vertex enumeration supports at most {max} nodes, got {n}")]
    TooLargeForEnumeration { n: usize, max: usize },
    #[error("linear program failed: {0}")]
    Lp(#[from] LpError),
    #[error("grid must be uniform for the convex constraint class")]
    NonUniformGrid,
}

/// Shape prior imposed on the source vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShapeClass {
    Monotone,
    /// Nonnegative second differences.
    Convex,
    /// Nonpositive second differences (the mirror class; several sources
    /// with curved profiles fall here).
    Concave,
    Unconstrained,
}

/// Polytope of source vectors consistent with the data: shape constraints,
/// per-node radius around the anchors `a_i = k u_i w_i`, and global bounds.
#[derive(Debug, Clone)]
pub struct AdmissibleSet {
    pub class: ShapeClass,
    pub xs: Vec<f64>,
    pub anchors: Vec<f64>,
    pub radius: f64,
    pub c_lo: f64,
    pub c_hi: f64,
}

impl AdmissibleSet {
    pub fn new(
        class: ShapeClass,
        xs: Vec<f64>,
        anchors: Vec<f64>,
        radius: f64,
        c_lo: f64,
        c_hi: f64,
    ) -> Result<Self, BoundsError> {
        assert_eq!(xs.len(), anchors.len());
        assert!(!xs.is_empty());
        assert!(radius >= 0.0 && c_lo < c_hi);
        if matches!(class, ShapeClass::Convex | ShapeClass::Concave) {
            let h = xs[1] - xs[0];
            for w in xs.windows(2) {
                if ((w[1] - w[0]) - h).abs() > 1e-9 * h.abs() {
                    return Err(BoundsError::NonUniformGrid);
                }
            }
        }
        let set = AdmissibleSet {
            class,
            xs,
            anchors,
            radius,
            c_lo,
            c_hi,
        };
        // Nodewise boxes must intersect; shape feasibility is certified
        // later against the concrete estimate.
        for (i, &a) in set.anchors.iter().enumerate() {
            let (lo, hi) = set.node_box(i);
            if lo > hi + 1e-12 {
                return Err(BoundsError::InfeasibleSet(format!(
                    "node {i}: box [{lo}, {hi}] around anchor {a} is empty"
                )));
            }
        }
        Ok(set)
    }

    pub fn len(&self) -> usize {
        self.xs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xs.is_empty()
    }

    /// Per-node interval `[max(c_lo, a_i - r), min(c_hi, a_i + r)]`.
    pub fn node_box(&self, i: usize) -> (f64, f64) {
        (
            self.c_lo.max(self.anchors[i] - self.radius),
            self.c_hi.min(self.anchors[i] + self.radius),
        )
    }

    /// Largest constraint violation of `f` over every defining inequality.
    pub fn violation(&self, f: &[f64]) -> f64 {
        assert_eq!(f.len(), self.len());
        let mut worst = 0.0f64;
        for (i, &v) in f.iter().enumerate() {
            let (lo, hi) = self.node_box(i);
            worst = worst.max(lo - v).max(v - hi);
        }
        match self.class {
            ShapeClass::Monotone => {
                for w in f.windows(2) {
                    worst = worst.max(w[0] - w[1]);
                }
            }
            ShapeClass::Convex => {
                for w in f.windows(3) {
                    worst = worst.max(-(w[0] - 2.0 * w[1] + w[2]));
                }
            }
            ShapeClass::Concave => {
                for w in f.windows(3) {
                    worst = worst.max(w[0] - 2.0 * w[1] + w[2]);
                }
            }
            ShapeClass::Unconstrained => {}
        }
        worst
    }

    pub fn contains(&self, f: &[f64], tol: f64) -> bool {
        self.violation(f) <= tol
    }

    /// Inequality rows `A f <= b` of the polytope (shape rows first, then
    /// upper and lower boxes).
    pub fn constraint_rows(&self) -> (Vec<Vec<f64>>, Vec<f64>) {
        let n = self.len();
        let mut a = Vec::new();
        let mut b = Vec::new();
        match self.class {
            ShapeClass::Monotone => {
                for i in 0..n - 1 {
                    let mut row = vec![0.0; n];
                    row[i] = 1.0;
                    row[i + 1] = -1.0;
                    a.push(row);
                    b.push(0.0);
                }
            }
            ShapeClass::Convex | ShapeClass::Concave => {
                let sign = if self.class == ShapeClass::Convex {
                    -1.0
                } else {
                    1.0
                };
                for i in 1..n.saturating_sub(1) {
                    let mut row = vec![0.0; n];
                    row[i - 1] = sign;
                    row[i] = -2.0 * sign;
                    row[i + 1] = sign;
                    a.push(row);
                    b.push(0.0);
                }
            }
            ShapeClass::Unconstrained => {}
        }
        for i in 0..n {
            let (lo, hi) = self.node_box(i);
            let mut up = vec![0.0; n];
            up[i] = 1.0;
            a.push(up);
            b.push(hi);
            let mut dn = vec![0.0; n];
            dn[i] = -1.0;
            a.push(dn);
            b.push(-lo);
        }
        (a, b)
    }
}

/// Nodewise extremes `f_i^low = min f_i`, `f_i^up = max f_i` over the set.
/// Shape classes go through the simplex solver; the unconstrained class
/// decouples per node and is clamped directly. Each LP's duality gap is
/// checked as an optimality certificate.
pub fn coordinate_extremes(set: &AdmissibleSet) -> Result<(Vec<f64>, Vec<f64>), BoundsError> {
    let n = set.len();
    if set.class == ShapeClass::Unconstrained {
        let mut lows = Vec::with_capacity(n);
        let mut ups = Vec::with_capacity(n);
        for i in 0..n {
            let (lo, hi) = set.node_box(i);
            lows.push(lo);
            ups.push(hi);
        }
        return Ok((lows, ups));
    }
    let (a, b) = set.constraint_rows();
    let mut lows = Vec::with_capacity(n);
    let mut ups = Vec::with_capacity(n);
    for i in 0..n {
        let mut c = vec![0.0; n];
        c[i] = 1.0;
        let min = lp::solve_min(&c, &a, &b).map_err(|e| match e {
            LpError::Infeasible(_) => {
                BoundsError::InfeasibleSet(format!("LP for node {i} infeasible"))
            }
            other => BoundsError::Lp(other),
        })?;
        let max = lp::solve_max(&c, &a, &b)?;
        let gap_min: f64 =
            (min.objective - b.iter().zip(&min.duals).map(|(bi, yi)| bi * yi).sum::<f64>()).abs();
        let gap_max: f64 =
            (max.objective - b.iter().zip(&max.duals).map(|(bi, yi)| bi * yi).sum::<f64>()).abs();
        debug_assert!(gap_min <= 1e-8 && gap_max <= 1e-8, "duality gap");
        lows.push(min.objective);
        ups.push(max.objective);
    }
    Ok((lows, ups))
}

/// Piecewise envelope pair bracketing every member of an admissible set
/// (and hence both the reconstruction and the exact source).
#[derive(Debug, Clone)]
pub struct Envelope {
    pub class: ShapeClass,
    pub xs: Vec<f64>,
    pub node_low: Vec<f64>,
    pub node_up: Vec<f64>,
    /// Per-interval upper pieces for the convex class:
    /// `(breakpoint, left line (slope, intercept), right line)`.
    convex_up_pieces: Vec<(f64, (f64, f64), (f64, f64))>,
    /// Intervals where the breakpoint construction degenerated to a chord.
    pub degenerate_intervals: Vec<usize>,
}

fn line_through(x0: f64, y0: f64, x1: f64, y1: f64) -> (f64, f64) {
    let slope = (y1 - y0) / (x1 - x0);
    (slope, y0 - slope * x0)
}

/// Step-function envelopes for the monotone class: the lower envelope is
/// the left-aligned step of `f_i^low`, the upper the right-aligned step of
/// `f_i^up`.
pub fn monotone_envelope(lows: &[f64], ups: &[f64], xs: &[f64]) -> Envelope {
    assert_eq!(lows.len(), xs.len());
    assert_eq!(ups.len(), xs.len());
    Envelope {
        class: ShapeClass::Monotone,
        xs: xs.to_vec(),
        node_low: lows.to_vec(),
        node_up: ups.to_vec(),
        convex_up_pieces: Vec::new(),
        degenerate_intervals: Vec::new(),
    }
}

/// Piecewise-linear envelopes for the convex class. The lower envelope
/// chords the `f_i^low`; the upper envelope on each interior interval is
/// the pair of support lines through `(x_{i-1}, low_{i-1}) - (x_i, up_i)`
/// and `(x_{i+1}, up_{i+1}) - (x_{i+2}, low_{i+2})`, meeting at an interior
/// breakpoint. Parallel support lines fall back to the chord and are
/// flagged.
pub fn convex_envelope(lows: &[f64], ups: &[f64], xs: &[f64]) -> Envelope {
    let n = xs.len() - 1;
    let mut pieces = Vec::with_capacity(n);
    let mut degenerate = Vec::new();
    for i in 0..n {
        // First and last intervals take the plain chord of the uppers.
        if i == 0 || i == n - 1 || i + 2 > n {
            let line = line_through(xs[i], ups[i], xs[i + 1], ups[i + 1]);
            pieces.push((xs[i + 1], line, line));
            continue;
        }
        let left = line_through(xs[i - 1], lows[i - 1], xs[i], ups[i]);
        let right = line_through(xs[i + 1], ups[i + 1], xs[i + 2], lows[i + 2]);
        let denom = left.0 - right.0;
        if denom.abs() < 1e-12 {
            let chord = line_through(xs[i], ups[i], xs[i + 1], ups[i + 1]);
            pieces.push((xs[i + 1], chord, chord));
            degenerate.push(i);
            continue;
        }
        let cross = (right.1 - left.1) / denom;
        let cross = cross.clamp(xs[i], xs[i + 1]);
        pieces.push((cross, left, right));
    }
    Envelope {
        class: ShapeClass::Convex,
        xs: xs.to_vec(),
        node_low: lows.to_vec(),
        node_up: ups.to_vec(),
        convex_up_pieces: pieces,
        degenerate_intervals: degenerate,
    }
}

/// Interval-interpolated envelopes for the unconstrained class (nodewise
/// boxes joined linearly).
pub fn unconstrained_envelope(lows: &[f64], ups: &[f64], xs: &[f64]) -> Envelope {
    Envelope {
        class: ShapeClass::Unconstrained,
        xs: xs.to_vec(),
        node_low: lows.to_vec(),
        node_up: ups.to_vec(),
        convex_up_pieces: Vec::new(),
        degenerate_intervals: Vec::new(),
    }
}

impl Envelope {
    fn interval_of(&self, x: f64) -> usize {
        let n = self.xs.len() - 1;
        if x <= self.xs[0] {
            return 0;
        }
        if x >= self.xs[n] {
            return n - 1;
        }
        match self
            .xs
            .binary_search_by(|v| v.partial_cmp(&x).unwrap())
        {
            Ok(j) => j.min(n - 1),
            Err(j) => j - 1,
        }
    }

    pub fn eval_low(&self, x: f64) -> f64 {
        let i = self.interval_of(x);
        match self.class {
            // Left-aligned step: value f_i^low on (x_i, x_{i+1}].
            ShapeClass::Monotone => {
                if i == 0 || x > self.xs[i] {
                    self.node_low[i]
                } else {
                    // x lands exactly on a node: closed on the left
                    // interval, so take the previous step value.
                    self.node_low[i - 1]
                }
            }
            _ => {
                let (s, b) = line_through(
                    self.xs[i],
                    self.node_low[i],
                    self.xs[i + 1],
                    self.node_low[i + 1],
                );
                s * x + b
            }
        }
    }

    pub fn eval_up(&self, x: f64) -> f64 {
        let i = self.interval_of(x);
        match self.class {
            // Right-aligned step: value f_{i+1}^up on [x_i, x_{i+1}).
            ShapeClass::Monotone => self.node_up[i + 1],
            ShapeClass::Convex | ShapeClass::Concave => {
                let (cross, left, right) = self.convex_up_pieces[i];
                if x <= cross {
                    left.0 * x + left.1
                } else {
                    right.0 * x + right.1
                }
            }
            ShapeClass::Unconstrained => {
                let (s, b) = line_through(
                    self.xs[i],
                    self.node_up[i],
                    self.xs[i + 1],
                    self.node_up[i + 1],
                );
                s * x + b
            }
        }
    }

    /// Breakpoint of the upper convex piece on interval `i`, when distinct
    /// support lines exist there.
    pub fn convex_breakpoint(&self, i: usize) -> Option<f64> {
        self.convex_up_pieces.get(i).map(|p| p.0)
    }
}

/// `delta2(x) = f_up(x) - f_low(x)` on a sampling grid.
pub fn pointwise_delta2(env: &Envelope, xs_dense: &[f64]) -> Vec<f64> {
    xs_dense
        .iter()
        .map(|&x| env.eval_up(x) - env.eval_low(x))
        .collect()
}

/// How the worst-case distance `max ||f - f_delta||^2` is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Delta1Mode {
    /// Nodewise relaxation: a guaranteed upper bound using the coordinate
    /// extremes only.
    Relaxed,
    /// True maximum by vertex enumeration (small sets only).
    Exact,
}

pub const MAX_ENUM_NODES: usize = 12;

/// Worst-case squared distance from `f_delta` to the admissible set and
/// its normalized square root. The relaxed bound dominates the exact
/// value; the exact mode enumerates polytope vertices (convex maximization
/// attains its maximum at one of them).
pub fn aposteriori_delta1(
    set: &AdmissibleSet,
    f_delta: &[f64],
    mode: Delta1Mode,
) -> Result<(f64, f64), BoundsError> {
    assert_eq!(f_delta.len(), set.len());
    let viol = set.violation(f_delta);
    if viol > 1e-8 {
        let idx = worst_node(set, f_delta);
        return Err(BoundsError::InfeasibleEstimate {
            index: idx,
            violation: viol,
        });
    }
    let bar = match mode {
        Delta1Mode::Relaxed => {
            let (lows, ups) = coordinate_extremes(set)?;
            lows.iter()
                .zip(&ups)
                .zip(f_delta)
                .map(|((&lo, &up), &fd)| {
                    let a = (up - fd) * (up - fd);
                    let b = (lo - fd) * (lo - fd);
                    a.max(b)
                })
                .sum()
        }
        Delta1Mode::Exact => {
            if set.class == ShapeClass::Unconstrained {
                // Coordinates decouple, the relaxation is already exact.
                return aposteriori_delta1(set, f_delta, Delta1Mode::Relaxed);
            }
            let verts = enumerate_vertices(set)?;
            if verts.is_empty() {
                return Err(BoundsError::InfeasibleSet(
                    "no vertices found during enumeration".into(),
                ));
            }
            verts
                .iter()
                .map(|v| {
                    v.iter()
                        .zip(f_delta)
                        .map(|(&a, &b)| (a - b) * (a - b))
                        .sum::<f64>()
                })
                .fold(0.0f64, f64::max)
        }
    };
    let norm = f_delta.iter().map(|v| v * v).sum::<f64>().sqrt();
    let delta1 = if norm > 0.0 { bar.sqrt() / norm } else { f64::INFINITY };
    Ok((bar, delta1))
}

fn worst_node(set: &AdmissibleSet, f: &[f64]) -> usize {
    let mut idx = 0;
    let mut worst = f64::NEG_INFINITY;
    for (i, &v) in f.iter().enumerate() {
        let (lo, hi) = set.node_box(i);
        let w = (lo - v).max(v - hi);
        if w > worst {
            worst = w;
            idx = i;
        }
    }
    idx
}

/// All vertices of the admissible polytope by incremental cutting: start
/// from the node-box vertices and intersect one shape halfspace at a time.
/// New vertices arise on edges crossing the cut; adjacency is certified by
/// an active-constraint rank test via shared-constraint counting plus a
/// full feasibility check of each candidate.
pub fn enumerate_vertices(set: &AdmissibleSet) -> Result<Vec<Vec<f64>>, BoundsError> {
    let n = set.len();
    if n > MAX_ENUM_NODES {
        return Err(BoundsError::TooLargeForEnumeration {
            n,
            max: MAX_ENUM_NODES,
        });
    }
    let (a, b) = set.constraint_rows();
    let n_shape = match set.class {
        ShapeClass::Monotone => n - 1,
        ShapeClass::Convex | ShapeClass::Concave => n.saturating_sub(2),
        ShapeClass::Unconstrained => 0,
    };

    // Box vertices, each tagged with its active-constraint bitmask over
    // the full row list (shape rows first).
    let mut verts: Vec<(Vec<f64>, u64)> = Vec::new();
    for code in 0u64..(1u64 << n) {
        let mut v = Vec::with_capacity(n);
        let mut mask = 0u64;
        for i in 0..n {
            let (lo, hi) = set.node_box(i);
            if code >> i & 1 == 1 {
                v.push(hi);
                mask |= 1 << (n_shape + 2 * i); // upper row
            } else {
                v.push(lo);
                mask |= 1 << (n_shape + 2 * i + 1); // lower row
            }
        }
        verts.push((v, mask));
    }
    // Collapsed boxes make upper and lower rows coincide; keep both bits.
    for (v, mask) in verts.iter_mut() {
        for i in 0..n {
            let (lo, hi) = set.node_box(i);
            if (hi - lo).abs() < 1e-14 {
                *mask |= 1 << (n_shape + 2 * i);
                *mask |= 1 << (n_shape + 2 * i + 1);
            }
            let _ = v;
        }
    }
    dedup_vertices(&mut verts);

    let dot = |row: &[f64], v: &[f64]| row.iter().zip(v).map(|(a, b)| a * b).sum::<f64>();

    for cut in 0..n_shape {
        let row = &a[cut];
        let rhs = b[cut];
        let mut keep: Vec<(Vec<f64>, u64)> = Vec::new();
        let mut inside_idx: Vec<usize> = Vec::new();
        let mut outside_idx: Vec<usize> = Vec::new();
        let vals: Vec<f64> = verts.iter().map(|(v, _)| dot(row, v) - rhs).collect();
        for (j, (v, mask)) in verts.iter().enumerate() {
            if vals[j] <= 1e-10 {
                let mut m = *mask;
                if vals[j].abs() <= 1e-10 {
                    m |= 1 << cut;
                }
                keep.push((v.clone(), m));
                if vals[j] < -1e-10 {
                    inside_idx.push(j);
                }
            } else {
                outside_idx.push(j);
            }
        }
        // Candidate new vertices on edges between strictly-inside and
        // outside vertices sharing >= n-1 active constraints.
        for &ji in &inside_idx {
            for &jo in &outside_idx {
                let shared = (verts[ji].1 & verts[jo].1).count_ones() as usize;
                if shared + 1 < n {
                    continue;
                }
                let (vi, vo) = (&verts[ji].0, &verts[jo].0);
                let t = -vals[ji] / (vals[jo] - vals[ji]);
                let cand: Vec<f64> = vi
                    .iter()
                    .zip(vo)
                    .map(|(&p, &q)| p + t * (q - p))
                    .collect();
                // Certify: must satisfy all previously applied rows.
                let mut mask = (verts[ji].1 & verts[jo].1) | (1 << cut);
                let mut ok = true;
                for prev in 0..=cut {
                    let r = dot(&a[prev], &cand) - b[prev];
                    if r > 1e-9 {
                        ok = false;
                        break;
                    }
                }
                if !ok {
                    continue;
                }
                // Refresh the box-activity bits of the interpolate.
                for i in 0..n {
                    let (lo, hi) = set.node_box(i);
                    if (cand[i] - hi).abs() <= 1e-10 {
                        mask |= 1 << (n_shape + 2 * i);
                    }
                    if (cand[i] - lo).abs() <= 1e-10 {
                        mask |= 1 << (n_shape + 2 * i + 1);
                    }
                }
                keep.push((cand, mask));
            }
        }
        dedup_vertices(&mut keep);
        verts = keep;
    }

    Ok(verts.into_iter().map(|(v, _)| v).collect())
}

fn dedup_vertices(verts: &mut Vec<(Vec<f64>, u64)>) {
    let mut out: Vec<(Vec<f64>, u64)> = Vec::with_capacity(verts.len());
    'outer: for (v, m) in verts.drain(..) {
        for (w, wm) in out.iter_mut() {
            if v.iter().zip(w.iter()).all(|(a, b)| (a - b).abs() <= 1e-9) {
                *wm |= m;
                continue 'outer;
            }
        }
        out.push((v, m));
    }
    *verts = out;
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn mono_set(anchors: Vec<f64>, r: f64) -> AdmissibleSet {
        let n = anchors.len();
        let xs: Vec<f64> = (0..n).map(|i| i as f64 / (n - 1).max(1) as f64).collect();
        AdmissibleSet::new(ShapeClass::Monotone, xs, anchors, r, -100.0, 100.0).unwrap()
    }

    #[test]
    fn single_node_extremes_are_the_box() {
        let set = AdmissibleSet::new(
            ShapeClass::Monotone,
            vec![0.0],
            vec![2.0],
            0.5,
            1.8,
            100.0,
        )
        .unwrap();
        let (lows, ups) = coordinate_extremes(&set).unwrap();
        assert_abs_diff_eq!(lows[0], 1.8, epsilon = 1e-9); // clipped by c_lo
        assert_abs_diff_eq!(ups[0], 2.5, epsilon = 1e-9);
    }

    #[test]
    fn monotone_extremes_running_max_min() {
        // Independent closed form: low_i = max_{j<=i} l_j, up_i = min_{j>=i} u_j.
        let anchors = vec![0.5, 0.1, 0.8, 0.6];
        let set = mono_set(anchors.clone(), 0.2);
        let (lows, ups) = coordinate_extremes(&set).unwrap();
        let l: Vec<f64> = anchors.iter().map(|a| a - 0.2).collect();
        let u: Vec<f64> = anchors.iter().map(|a| a + 0.2).collect();
        for i in 0..4 {
            let lo = l[..=i].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let up = u[i..].iter().cloned().fold(f64::INFINITY, f64::min);
            assert_abs_diff_eq!(lows[i], lo, epsilon = 1e-8);
            assert_abs_diff_eq!(ups[i], up, epsilon = 1e-8);
        }
    }

    #[test]
    fn lp_extremes_match_vertex_enumeration_n4() {
        for trial in 0..20 {
            let mut state = 0x12345u64.wrapping_add(trial);
            let mut next = || {
                state = state
                    .wrapping_mul(6364136223846793005)
                    .wrapping_add(1442695040888963407);
                (state >> 11) as f64 / (1u64 << 53) as f64
            };
            let anchors: Vec<f64> = (0..4).map(|_| next() * 2.0 - 1.0).collect();
            let set = mono_set(anchors, 0.3 + next());
            let verts = enumerate_vertices(&set).unwrap();
            let extremes = coordinate_extremes(&set);
            // Both methods must agree on emptiness.
            let (lows, ups) = match extremes {
                Ok(pair) => {
                    assert!(!verts.is_empty());
                    pair
                }
                Err(BoundsError::InfeasibleSet(_)) => {
                    assert!(verts.is_empty());
                    continue;
                }
                Err(e) => panic!("unexpected error {e}"),
            };
            for i in 0..4 {
                let vlo = verts.iter().map(|v| v[i]).fold(f64::INFINITY, f64::min);
                let vup = verts.iter().map(|v| v[i]).fold(f64::NEG_INFINITY, f64::max);
                assert_abs_diff_eq!(lows[i], vlo, epsilon = 1e-7);
                assert_abs_diff_eq!(ups[i], vup, epsilon = 1e-7);
            }
        }
    }

    #[test]
    fn collapsed_set_gives_zero_errors() {
        // r = 0 with constant anchors: the set is a single point and the
        // step envelopes coincide everywhere.
        let anchors = vec![0.2, 0.2, 0.2];
        let set = mono_set(anchors.clone(), 0.0);
        let (bar, d1) = aposteriori_delta1(&set, &anchors, Delta1Mode::Relaxed).unwrap();
        assert_abs_diff_eq!(bar, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(d1, 0.0, epsilon = 1e-12);
        let (lows, ups) = coordinate_extremes(&set).unwrap();
        let env = monotone_envelope(&lows, &ups, &set.xs);
        let d2 = pointwise_delta2(&env, &[0.0, 0.25, 0.5, 0.75, 1.0]);
        assert!(d2.iter().all(|&v| v.abs() < 1e-9));
    }

    #[test]
    fn relaxation_dominates_exact() {
        for trial in 0..20 {
            let mut state = 0xabcdefu64.wrapping_add(trial * 7919);
            let mut next = || {
                state = state
                    .wrapping_mul(6364136223846793005)
                    .wrapping_add(1442695040888963407);
                (state >> 11) as f64 / (1u64 << 53) as f64
            };
            let anchors: Vec<f64> = (0..3).map(|_| next()).collect();
            let set = mono_set(anchors.clone(), 0.4);
            // Feasible estimate: sorted anchors.
            let mut fd = anchors.clone();
            fd.sort_by(|a, b| a.partial_cmp(b).unwrap());
            if !set.contains(&fd, 1e-8) {
                continue;
            }
            let (relaxed, _) = aposteriori_delta1(&set, &fd, Delta1Mode::Relaxed).unwrap();
            let (exact, _) = aposteriori_delta1(&set, &fd, Delta1Mode::Exact).unwrap();
            assert!(relaxed >= exact - 1e-9);
            assert!(relaxed <= exact * 3.0 + 1e-9, "ratio beyond sqrt(n) bound");
        }
    }

    #[test]
    fn infeasible_estimate_rejected() {
        let set = mono_set(vec![0.0, 1.0], 0.1);
        let err = aposteriori_delta1(&set, &[5.0, 6.0], Delta1Mode::Relaxed);
        assert!(matches!(err, Err(BoundsError::InfeasibleEstimate { .. })));
    }

    #[test]
    fn monotone_envelope_hand_instance() {
        // Step placement per construction: low on (x_i, x_{i+1}] from the
        // left node, up on [x_i, x_{i+1}) from the right node.
        let xs = vec![0.0, 1.0, 2.0];
        let lows = vec![1.0, 2.0, 3.0];
        let ups = vec![4.0, 5.0, 6.0];
        let env = monotone_envelope(&lows, &ups, &xs);
        assert_abs_diff_eq!(env.eval_low(0.5), 1.0);
        assert_abs_diff_eq!(env.eval_low(1.0), 1.0);
        assert_abs_diff_eq!(env.eval_low(1.5), 2.0);
        assert_abs_diff_eq!(env.eval_up(0.5), 5.0);
        assert_abs_diff_eq!(env.eval_up(1.5), 6.0);
        assert_abs_diff_eq!(env.eval_up(2.0), 6.0);
    }

    #[test]
    fn monotone_envelope_brackets_random_members() {
        let anchors = vec![0.0, 0.2, 0.1, 0.5, 0.4];
        let set = mono_set(anchors, 0.35);
        let (lows, ups) = coordinate_extremes(&set).unwrap();
        let env = monotone_envelope(&lows, &ups, &set.xs);
        let mut state = 99u64;
        let mut next = move || {
            state = state
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        let mut accepted = 0;
        while accepted < 100 {
            // Rejection-sample a nondecreasing member of the set.
            let mut f: Vec<f64> = (0..5)
                .map(|i| {
                    let (lo, hi) = set.node_box(i);
                    lo + next() * (hi - lo)
                })
                .collect();
            for i in 1..5 {
                if f[i] < f[i - 1] {
                    f[i] = f[i - 1];
                }
            }
            if !set.contains(&f, 1e-12) {
                continue;
            }
            accepted += 1;
            for (i, &x) in set.xs.iter().enumerate() {
                assert!(f[i] >= env.node_low[i] - 1e-9);
                assert!(f[i] <= env.node_up[i] + 1e-9);
                let _ = x;
            }
        }
    }

    fn convex_set(anchors: Vec<f64>, r: f64) -> AdmissibleSet {
        let n = anchors.len();
        let xs: Vec<f64> = (0..n).map(|i| i as f64 / (n - 1) as f64).collect();
        AdmissibleSet::new(ShapeClass::Convex, xs, anchors, r, -100.0, 100.0).unwrap()
    }

    #[test]
    fn collinear_extremes_collapse_envelopes() {
        let xs = vec![0.0, 0.5, 1.0];
        let vals = vec![1.0, 2.0, 3.0];
        let env = convex_envelope(&vals, &vals, &xs);
        for &x in &[0.0, 0.2, 0.5, 0.8, 1.0] {
            assert_abs_diff_eq!(env.eval_low(x), 1.0 + 2.0 * x, epsilon = 1e-10);
            assert_abs_diff_eq!(env.eval_up(x), 1.0 + 2.0 * x, epsilon = 1e-10);
        }
    }

    #[test]
    fn convex_envelope_hand_instance() {
        // Four intervals; check node values and the interior breakpoint
        // geometry by manual line evaluation.
        let xs = vec![0.0, 1.0, 2.0, 3.0, 4.0];
        let lows = vec![0.0, 0.1, 0.0, 0.1, 0.0];
        let ups = vec![0.5, 0.7, 0.6, 0.7, 0.5];
        let env = convex_envelope(&lows, &ups, &xs);
        // First interval: chord of ups.
        assert_abs_diff_eq!(env.eval_up(0.5), 0.6, epsilon = 1e-10);
        // Interval [x1, x2]: left line through (x0, low0)-(x1, up1),
        // right line through (x2, up2)-(x3, low3).
        let left = ((0.7 - 0.0) / 1.0, 0.0);
        let right = ((0.1 - 0.6) / 1.0, 0.6 + 0.5 * 2.0);
        let cross = (right.1 - left.1) / (left.0 - right.0);
        assert_abs_diff_eq!(env.convex_breakpoint(1).unwrap(), cross, epsilon = 1e-10);
        let probe = cross - 0.05;
        assert_abs_diff_eq!(env.eval_up(probe), left.0 * probe + left.1, epsilon = 1e-10);
        let probe = cross + 0.05;
        assert_abs_diff_eq!(env.eval_up(probe), right.0 * probe + right.1, epsilon = 1e-10);
        // Node values are preserved.
        assert_abs_diff_eq!(env.eval_up(1.0), 0.7, epsilon = 1e-10);
        assert_abs_diff_eq!(env.eval_low(2.0), 0.0, epsilon = 1e-10);
    }

    #[test]
    fn convex_members_stay_inside_envelope() {
        let anchors = vec![0.4, 0.15, 0.05, 0.12, 0.35];
        let set = convex_set(anchors, 0.3);
        let (lows, ups) = coordinate_extremes(&set).unwrap();
        let env = convex_envelope(&lows, &ups, &set.xs);
        // The convex lower hand-off: node values bracket every vertex.
        let verts = enumerate_vertices(&set).unwrap();
        for v in &verts {
            for i in 0..5 {
                assert!(v[i] >= lows[i] - 1e-7 && v[i] <= ups[i] + 1e-7);
            }
        }
        // Envelope ordering on a dense probe.
        for j in 0..=100 {
            let x = j as f64 / 100.0;
            assert!(env.eval_low(x) <= env.eval_up(x) + 1e-9);
        }
    }

    #[test]
    fn shrinking_radius_nests_intervals() {
        let anchors = vec![0.1, 0.3, 0.2, 0.6];
        let wide = mono_set(anchors.clone(), 0.5);
        let narrow = mono_set(anchors, 0.25);
        let (wl, wu) = coordinate_extremes(&wide).unwrap();
        let (nl, nu) = coordinate_extremes(&narrow).unwrap();
        for i in 0..4 {
            assert!(nl[i] >= wl[i] - 1e-9);
            assert!(nu[i] <= wu[i] + 1e-9);
        }
    }

    #[test]
    fn nonuniform_convex_grid_rejected() {
        let err = AdmissibleSet::new(
            ShapeClass::Convex,
            vec![0.0, 0.5, 0.6],
            vec![0.0, 0.0, 0.0],
            0.1,
            -1.0,
            1.0,
        );
        assert!(matches!(err, Err(BoundsError::NonUniformGrid)));
    }

    #[test]
    fn delta2_nonnegative_and_node_consistent() {
        let anchors = vec![0.0, 0.25, 0.2, 0.7];
        let set = mono_set(anchors, 0.3);
        let (lows, ups) = coordinate_extremes(&set).unwrap();
        let env = monotone_envelope(&lows, &ups, &set.xs);
        let dense: Vec<f64> = (0..=200).map(|j| j as f64 / 200.0).collect();
        let d2 = pointwise_delta2(&env, &dense);
        assert!(d2.iter().all(|&v| v >= -1e-12));
        for (i, &x) in set.xs.iter().enumerate() {
            let gap = env.eval_up(x) - env.eval_low(x);
            assert!(gap >= ups[i] - lows[i] - 1e-9, "node {i} at {x}");
        }
    }
}
