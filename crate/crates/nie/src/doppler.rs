//! Maxwell-velocity weighting: turns a per-velocity evaluator into a
//! velocity-averaged quantity,
//!
//!   <f>_v = ∫ f(v) exp{-(v/v̄)²} / (√π v̄) dv.
//!
//! Two quadratures are provided: Gauss-Hermite (weight applied through the
//! node transform) and a plain trapezoid rule on a symmetric cutoff interval,
//! used as a mutual cross-check because strong fields can burn narrow
//! velocity-selective structures into the integrand.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{NieError, Result};
use crate::model::Level;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QuadratureMethod {
    GaussHermite,
    Trapezoid,
}

impl QuadratureMethod {
    pub fn name(self) -> &'static str {
        match self {
            QuadratureMethod::GaussHermite => "gauss_hermite",
            QuadratureMethod::Trapezoid => "trapezoid",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        match s {
            "gauss_hermite" | "gh" => Some(QuadratureMethod::GaussHermite),
            "trapezoid" | "trap" => Some(QuadratureMethod::Trapezoid),
            _ => None,
        }
    }
}

/// Velocity quadrature: nodes in reduced velocity z = v/v̄.
#[derive(Debug, Clone, PartialEq)]
pub struct VelocityGrid {
    method: QuadratureMethod,
    /// Reduced-velocity nodes z_i, ascending.
    nodes: Vec<f64>,
    /// Weights including the normalized Maxwell factor; sum to 1.
    weights: Vec<f64>,
    vbar: f64,
}

impl VelocityGrid {
    /// Gauss-Hermite rule with `n` nodes (n >= 8).
    pub fn gauss_hermite(n: usize, vbar: f64) -> Result<Self> {
        if n < 8 {
            return Err(NieError::InvalidScheme(
                "velocity grid needs at least 8 nodes".into(),
            ));
        }
        if !(vbar > 0.0) {
            return Err(NieError::InvalidScheme("vbar must be positive".into()));
        }
        let (nodes, mut weights) = hermite_rule(n);
        let norm = PI.sqrt();
        for w in &mut weights {
            *w /= norm;
        }
        Ok(VelocityGrid {
            method: QuadratureMethod::GaussHermite,
            nodes,
            weights,
            vbar,
        })
    }

    /// Trapezoid rule on z in [-cutoff, cutoff] with `n` nodes
    /// (n >= 8, cutoff >= 3).
    pub fn trapezoid(n: usize, cutoff: f64, vbar: f64) -> Result<Self> {
        if n < 8 {
            return Err(NieError::InvalidScheme(
                "velocity grid needs at least 8 nodes".into(),
            ));
        }
        if cutoff < 3.0 {
            return Err(NieError::InvalidScheme(
                "trapezoid cutoff must be at least 3 thermal velocities".into(),
            ));
        }
        if !(vbar > 0.0) {
            return Err(NieError::InvalidScheme("vbar must be positive".into()));
        }
        let h = 2.0 * cutoff / (n as f64 - 1.0);
        let norm = PI.sqrt();
        let mut nodes = Vec::with_capacity(n);
        let mut weights = Vec::with_capacity(n);
        for i in 0..n {
            let z = -cutoff + h * i as f64;
            let end = i == 0 || i == n - 1;
            let w = h * (-z * z).exp() / norm * if end { 0.5 } else { 1.0 };
            nodes.push(z);
            weights.push(w);
        }
        // Rescale so a constant averages to itself exactly despite the cutoff.
        let total: f64 = weights.iter().sum();
        for w in &mut weights {
            *w /= total;
        }
        Ok(VelocityGrid {
            method: QuadratureMethod::Trapezoid,
            nodes,
            weights,
            vbar,
        })
    }

    /// Default grid used by scans: 96-node Gauss-Hermite.
    pub fn default_for(vbar: f64) -> Self {
        VelocityGrid::gauss_hermite(96, vbar).expect("static parameters are valid")
    }

    /// Reference grid pinned by the acceptance suite.
    pub fn reference_for(vbar: f64) -> Self {
        VelocityGrid::trapezoid(4001, 5.0, vbar).expect("static parameters are valid")
    }

    pub fn method(&self) -> QuadratureMethod {
        self.method
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn vbar(&self) -> f64 {
        self.vbar
    }

    /// Velocities v = z v̄ at the nodes.
    pub fn velocities(&self) -> impl Iterator<Item = f64> + '_ {
        self.nodes.iter().map(move |z| z * self.vbar)
    }

    /// Maxwell average of a complex-valued function of velocity.
    /// Summation runs in fixed node order, so the result is deterministic.
    pub fn maxwell_average<E>(&self, mut f: E) -> Result<Complex64>
    where
        E: FnMut(f64) -> Complex64,
    {
        let mut acc = Complex64::new(0.0, 0.0);
        for (z, w) in self.nodes.iter().zip(&self.weights) {
            let value = f(z * self.vbar);
            if !value.is_finite() {
                return Err(NieError::NonFinite(*z));
            }
            acc += value * *w;
        }
        Ok(acc)
    }

    /// Maxwell average of a vector of quantities evaluated in one pass.
    pub fn maxwell_average_many<E>(&self, mut f: E) -> Result<Vec<Complex64>>
    where
        E: FnMut(f64) -> Result<Vec<Complex64>>,
    {
        let mut acc: Vec<Complex64> = Vec::new();
        for (z, w) in self.nodes.iter().zip(&self.weights) {
            let values = f(z * self.vbar)?;
            if acc.is_empty() {
                acc = vec![Complex64::new(0.0, 0.0); values.len()];
            }
            for (a, value) in acc.iter_mut().zip(&values) {
                if !value.is_finite() {
                    return Err(NieError::NonFinite(*z));
                }
                *a += value * *w;
            }
        }
        Ok(acc)
    }
}

/// One velocity-averaged output point of a spectrum scan.
#[derive(Debug, Clone, Default)]
pub struct AveragedResponse {
    /// Scan-variable value this point belongs to.
    pub scan_value: f64,
    /// Velocity-averaged normalized susceptibilities per field index.
    pub chi_norm: BTreeMap<usize, Complex64>,
    /// Velocity-averaged FWM susceptibility (K = 1), when the regime has one.
    pub chi_tilde: Option<Complex64>,
    /// Velocity-averaged population differences on transitions 4 and i.
    pub dr4: f64,
    pub dri: f64,
    /// Population slices r_j(z) at requested reduced velocities.
    pub population_slices: Vec<(f64, BTreeMap<Level, f64>)>,
}

impl AveragedResponse {
    pub fn chi_tilde_sq(&self) -> Option<f64> {
        self.chi_tilde.map(|c| c.norm_sqr())
    }
}

/// Per-velocity output of a response evaluator, before averaging.
#[derive(Debug, Clone, Default)]
pub struct PointResponse {
    pub chi_norm: BTreeMap<usize, Complex64>,
    pub chi_tilde: Option<Complex64>,
    pub dr4: f64,
    pub dri: f64,
    pub populations: BTreeMap<Level, f64>,
}

/// Averages a per-velocity evaluator at one parameter point; population
/// slices are evaluated at the requested reduced velocities z = v/v̄.
pub fn averaged_point<E>(
    evaluator: E,
    grid: &VelocityGrid,
    slices: &[f64],
) -> Result<AveragedResponse>
where
    E: Fn(f64) -> Result<PointResponse>,
{
    let probe = evaluator(0.0)?;
    let field_ids: Vec<usize> = probe.chi_norm.keys().copied().collect();
    let has_tilde = probe.chi_tilde.is_some();
    let n_fields = field_ids.len();
    let averaged = grid.maxwell_average_many(|v| {
        let point = evaluator(v)?;
        let mut row = Vec::with_capacity(n_fields + 3);
        for id in &field_ids {
            row.push(point.chi_norm.get(id).copied().unwrap_or_default());
        }
        row.push(point.chi_tilde.unwrap_or_default());
        row.push(Complex64::new(point.dr4, 0.0));
        row.push(Complex64::new(point.dri, 0.0));
        Ok(row)
    })?;
    let mut out = AveragedResponse::default();
    for (k, id) in field_ids.iter().enumerate() {
        out.chi_norm.insert(*id, averaged[k]);
    }
    if has_tilde {
        out.chi_tilde = Some(averaged[n_fields]);
    }
    out.dr4 = averaged[n_fields + 1].re;
    out.dri = averaged[n_fields + 2].re;
    for &z in slices {
        let point = evaluator(z * grid.vbar())?;
        out.population_slices.push((z, point.populations));
    }
    Ok(out)
}

/// Gauss-Hermite nodes/weights for ∫ e^{-x²} f(x) dx via the Golub-Welsch
/// eigendecomposition of the Jacobi matrix.
fn hermite_rule(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut jacobi = DMatrix::<f64>::zeros(n, n);
    for k in 1..n {
        let b = (k as f64 / 2.0).sqrt();
        jacobi[(k - 1, k)] = b;
        jacobi[(k, k - 1)] = b;
    }
    let eig = jacobi.symmetric_eigen();
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|i| {
            let x = eig.eigenvalues[i];
            let v0 = eig.eigenvectors[(0, i)];
            (x, PI.sqrt() * v0 * v0)
        })
        .collect();
    pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    pairs.into_iter().unzip()
}
