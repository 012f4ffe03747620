//! Source term `f(x)` on `[0, 1]` together with its antiderivative
//! `F(x) = int_0^x f(s) ds`, precomputed on a dense quadrature grid.
//!
//! The regular branches and the front ODE only ever touch `f` through `F`,
//! so `F` is tabulated once (composite Simpson on the even nodes, a
//! third-order closed correction on the odd ones) and evaluated between
//! nodes by cubic Hermite interpolation with `F' = f`.

use std::sync::Arc;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum SourceError {
    #[error("source function evaluated to a non-finite value at x = {x}")]
    NonFiniteSource { x: f64 },
}

/// A description of `f` that can be sampled anywhere on `[0, 1]`.
#[derive(Clone)]
pub enum SourceSpec {
    /// Closed-form source.
    Analytic(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
    /// Tabulated source; evaluated by linear interpolation between samples.
    Sampled { xs: Vec<f64>, values: Vec<f64> },
}

impl SourceSpec {
    pub fn analytic<F>(f: F) -> Self
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        SourceSpec::Analytic(Arc::new(f))
    }

    pub fn zero() -> Self {
        SourceSpec::analytic(|_| 0.0)
    }

    pub fn eval(&self, x: f64) -> f64 {
        match self {
            SourceSpec::Analytic(f) => f(x),
            SourceSpec::Sampled { xs, values } => {
                if xs.is_empty() {
                    return 0.0;
                }
                if x <= xs[0] {
                    return values[0];
                }
                if x >= xs[xs.len() - 1] {
                    return values[values.len() - 1];
                }
                let j = match xs.binary_search_by(|v| v.partial_cmp(&x).unwrap()) {
                    Ok(j) => return values[j],
                    Err(j) => j,
                };
                let w = (x - xs[j - 1]) / (xs[j] - xs[j - 1]);
                values[j - 1] * (1.0 - w) + values[j] * w
            }
        }
    }
}

impl std::fmt::Debug for SourceSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SourceSpec::Analytic(_) => f.write_str("SourceSpec::Analytic(..)"),
            SourceSpec::Sampled { xs, .. } => {
                write!(f, "SourceSpec::Sampled {{ n: {} }}", xs.len())
            }
        }
    }
}

/// `f` together with its tabulated antiderivative and signed masses.
#[derive(Debug, Clone)]
pub struct SourceFunction {
    spec: SourceSpec,
    /// Uniform grid spacing of the quadrature table.
    h: f64,
    /// `f` at the quadrature nodes.
    f_nodes: Vec<f64>,
    /// `F(x_i) = int_0^{x_i} f`.
    cumulative: Vec<f64>,
    /// `int_0^1 max(0, f)`.
    pos_mass: f64,
    /// `-int_0^1 min(0, f)`.
    neg_mass: f64,
}

/// Tabulates `F`, `pos_mass` and `neg_mass` for `f` on `n_quad + 1` uniform
/// nodes. `n_quad` is rounded up to the next even number and must be >= 64.
pub fn build_cumulative(spec: SourceSpec, n_quad: usize) -> Result<SourceFunction, SourceError> {
    assert!(n_quad >= 64, "n_quad must be at least 64");
    let n = n_quad + n_quad % 2;
    let h = 1.0 / n as f64;

    let mut f_nodes = Vec::with_capacity(n + 1);
    for i in 0..=n {
        let x = i as f64 * h;
        let v = spec.eval(x);
        if !v.is_finite() {
            return Err(SourceError::NonFiniteSource { x });
        }
        f_nodes.push(v);
    }

    // Even nodes by composite Simpson; odd nodes by the three-point
    // Adams-Moulton correction over a single panel (both O(h^4) cumulative).
    let mut cumulative = vec![0.0; n + 1];
    for i in (2..=n).step_by(2) {
        cumulative[i] =
            cumulative[i - 2] + h / 3.0 * (f_nodes[i - 2] + 4.0 * f_nodes[i - 1] + f_nodes[i]);
    }
    for i in (1..n).step_by(2) {
        cumulative[i] = cumulative[i - 1]
            + h / 12.0 * (5.0 * f_nodes[i - 1] + 8.0 * f_nodes[i] - f_nodes[i + 1]);
    }

    let clipped_pos: Vec<f64> = f_nodes.iter().map(|v| v.max(0.0)).collect();
    let clipped_neg: Vec<f64> = f_nodes.iter().map(|v| (-v).max(0.0)).collect();
    let pos_mass = simpson(&clipped_pos, h);
    let neg_mass = simpson(&clipped_neg, h);

    Ok(SourceFunction {
        spec,
        h,
        f_nodes,
        cumulative,
        pos_mass,
        neg_mass,
    })
}

fn simpson(values: &[f64], h: f64) -> f64 {
    let n = values.len() - 1;
    debug_assert!(n % 2 == 0);
    let mut acc = values[0] + values[n];
    for (i, v) in values.iter().enumerate().take(n).skip(1) {
        acc += if i % 2 == 1 { 4.0 * v } else { 2.0 * v };
    }
    acc * h / 3.0
}

impl SourceFunction {
    pub fn zero() -> Self {
        build_cumulative(SourceSpec::zero(), 64).expect("zero source is finite")
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.spec.eval(x)
    }

    /// `F(x)` by cubic Hermite interpolation of the table, using `F' = f`
    /// as the nodal derivative.
    pub fn cumulative(&self, x: f64) -> f64 {
        let n = self.cumulative.len() - 1;
        if x <= 0.0 {
            return self.cumulative[0] + x * self.f_nodes[0];
        }
        if x >= 1.0 {
            return self.cumulative[n] + (x - 1.0) * self.f_nodes[n];
        }
        let j = ((x / self.h) as usize).min(n - 1);
        let t = (x - j as f64 * self.h) / self.h;
        let (f0, f1) = (self.cumulative[j], self.cumulative[j + 1]);
        let (d0, d1) = (self.f_nodes[j] * self.h, self.f_nodes[j + 1] * self.h);
        let t2 = t * t;
        let t3 = t2 * t;
        (2.0 * t3 - 3.0 * t2 + 1.0) * f0
            + (t3 - 2.0 * t2 + t) * d0
            + (-2.0 * t3 + 3.0 * t2) * f1
            + (t3 - t2) * d1
    }

    /// `int_0^1 f`.
    pub fn total(&self) -> f64 {
        *self.cumulative.last().unwrap()
    }

    pub fn pos_mass(&self) -> f64 {
        self.pos_mass
    }

    pub fn neg_mass(&self) -> f64 {
        self.neg_mass
    }

    pub fn quad_nodes(&self) -> usize {
        self.cumulative.len() - 1
    }

    pub fn spec(&self) -> &SourceSpec {
        &self.spec
    }
}
