//! Independent ground-truth solver: builds the full density-matrix evolution
//! superoperator for a scheme and solves for the steady state, either by a
//! direct linear solve or by relaxing the equations in time. Every closed-form
//! response in this crate is verified against this module.
//!
//! The rotating/interaction frame is fixed by walking the driven transitions
//! from the ground label and assigning each level the accumulated
//! velocity-shifted detuning. For the four-level mixing loop this requires
//! the frequency-closure condition Ω₄ = Ω₁ − Ω₂ + Ω₃ (after Doppler shifts),
//! which holds automatically when k₄ = k₁ − k₂ + k₃.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{NieError, Result};
use crate::model::{FieldRole, FieldSet, Level, LevelScheme, Topology};

/// A steady-state density matrix over the scheme's levels.
#[derive(Debug, Clone)]
pub struct SteadyState {
    levels: Vec<Level>,
    rho: DMatrix<Complex64>,
}

impl SteadyState {
    fn index(&self, lv: Level) -> usize {
        self.levels
            .iter()
            .position(|&x| x == lv)
            .expect("level belongs to the scheme")
    }

    /// Matrix element ρ_ab.
    pub fn coherence(&self, a: Level, b: Level) -> Complex64 {
        self.rho[(self.index(a), self.index(b))]
    }

    pub fn population(&self, a: Level) -> f64 {
        let i = self.index(a);
        self.rho[(i, i)].re
    }

    pub fn populations(&self) -> BTreeMap<Level, f64> {
        self.levels
            .iter()
            .map(|&lv| (lv, self.population(lv)))
            .collect()
    }

    pub fn trace(&self) -> f64 {
        (0..self.levels.len()).map(|i| self.rho[(i, i)].re).sum()
    }

    /// Largest |ρ_ab − ρ_ba*| over all element pairs.
    pub fn hermiticity_defect(&self) -> f64 {
        let n = self.levels.len();
        let mut worst = 0.0f64;
        for a in 0..n {
            for b in 0..n {
                worst = worst.max((self.rho[(a, b)] - self.rho[(b, a)].conj()).norm());
            }
        }
        worst
    }
}

/// Evolution pieces: dx/dt = M x + c with x the row-major flattened ρ.
struct Liouvillian {
    levels: Vec<Level>,
    m: DMatrix<Complex64>,
    c: DVector<Complex64>,
}

fn frame_energies(
    scheme: &LevelScheme,
    fields: &FieldSet,
    v: f64,
) -> Result<BTreeMap<Level, f64>> {
    let trans = scheme.kind.transitions();
    let mut eps: BTreeMap<Level, f64> = BTreeMap::new();
    eps.insert(scheme.ground(), 0.0);
    loop {
        let mut changed = false;
        for &(j, lo, up) in trans {
            let shift = fields.shifted(j, v);
            match (eps.contains_key(&lo), eps.contains_key(&up)) {
                (true, false) => {
                    let base = eps[&lo];
                    eps.insert(up, base + shift);
                    changed = true;
                }
                (false, true) => {
                    let base = eps[&up];
                    eps.insert(lo, base - shift);
                    changed = true;
                }
                _ => {}
            }
        }
        if !changed {
            // Seed a component disconnected from the ground level, if any.
            if let Some(&(_, lo, _)) = trans
                .iter()
                .find(|&&(_, lo, up)| !eps.contains_key(&lo) && !eps.contains_key(&up))
            {
                eps.insert(lo, 0.0);
                continue;
            }
            break;
        }
    }
    for &lv in scheme.levels() {
        eps.entry(lv).or_insert(0.0);
    }
    // Closure check: every driven transition must be consistent with the frame.
    for &(j, lo, up) in trans {
        let shift = fields.shifted(j, v);
        let defect = (eps[&up] - eps[&lo] - shift).abs();
        if defect > 1e-6 * shift.abs().max(1.0) {
            return Err(NieError::InvalidScheme(
                "frequency loop not closed; the detunings must satisfy \
                 omega4 = omega1 - omega2 + omega3"
                    .into(),
            ));
        }
    }
    Ok(eps)
}

fn build_liouvillian(scheme: &LevelScheme, fields: &FieldSet, v: f64) -> Result<Liouvillian> {
    let levels: Vec<Level> = scheme.levels().to_vec();
    let nlev = levels.len();
    let idx = |lv: Level| levels.iter().position(|&x| x == lv).unwrap();
    let eps = frame_energies(scheme, fields, v)?;

    let mut h = DMatrix::<Complex64>::zeros(nlev, nlev);
    for &lv in &levels {
        h[(idx(lv), idx(lv))] = Complex64::new(eps[&lv], 0.0);
    }
    for &(j, lo, up) in scheme.kind.transitions() {
        if fields.field(j).role == FieldRole::Off {
            continue;
        }
        let g = fields.field(j).rabi;
        h[(idx(up), idx(lo))] += g;
        h[(idx(lo), idx(up))] += g.conj();
    }

    let dim = nlev * nlev;
    let lin = |a: usize, b: usize| a * nlev + b;
    let mut m = DMatrix::<Complex64>::zeros(dim, dim);
    let mut c = DVector::<Complex64>::zeros(dim);
    let i = Complex64::new(0.0, 1.0);
    // Coherent part -i[H, ρ].
    for a in 0..nlev {
        for b in 0..nlev {
            for k in 0..nlev {
                m[(lin(a, b), lin(k, b))] -= i * h[(a, k)];
                m[(lin(a, b), lin(a, k))] += i * h[(k, b)];
            }
        }
    }
    // Relaxation: population decay with partial feeding, coherence dephasing.
    for (a, &la) in levels.iter().enumerate() {
        for (b, &lb) in levels.iter().enumerate() {
            if a == b {
                m[(lin(a, a), lin(a, a))] -= Complex64::new(scheme.decay(la), 0.0);
                for (k, &lk) in levels.iter().enumerate() {
                    if k != a {
                        m[(lin(a, a), lin(k, k))] += Complex64::new(scheme.partial(lk, la), 0.0);
                    }
                }
            } else {
                m[(lin(a, b), lin(a, b))] -= Complex64::new(scheme.coherence_width(la, lb), 0.0);
            }
        }
    }
    // Incoherent excitation.
    match scheme.topology {
        Topology::Open => {
            for (a, &la) in levels.iter().enumerate() {
                c[lin(a, a)] += Complex64::new(scheme.pump_rate(la), 0.0);
            }
        }
        Topology::Closed => {
            let il = idx(scheme.ground());
            let wtot: f64 = levels.iter().map(|&lv| scheme.pump_rate(lv)).sum();
            m[(lin(il, il), lin(il, il))] -= Complex64::new(wtot, 0.0);
            for (a, &la) in levels.iter().enumerate() {
                if la != scheme.ground() {
                    m[(lin(a, a), lin(il, il))] += Complex64::new(scheme.pump_rate(la), 0.0);
                }
            }
        }
    }
    Ok(Liouvillian { levels, m, c })
}

/// Direct steady-state solve of the density-matrix equations.
///
/// Open topology solves M x = −c. Closed topology replaces the redundant
/// ground-population row with the trace condition Σρ_jj = 1.
pub fn steady_state_linear(scheme: &LevelScheme, fields: &FieldSet, v: f64) -> Result<SteadyState> {
    let lv = build_liouvillian(scheme, fields, v)?;
    let nlev = lv.levels.len();
    let dim = nlev * nlev;
    let lin = |a: usize, b: usize| a * nlev + b;
    let mut m = lv.m.clone();
    let mut rhs = DVector::<Complex64>::zeros(dim);
    match scheme.topology {
        Topology::Open => {
            for k in 0..dim {
                rhs[k] = -lv.c[k];
            }
        }
        Topology::Closed => {
            let il = lv
                .levels
                .iter()
                .position(|&x| x == scheme.ground())
                .unwrap();
            for k in 0..dim {
                m[(lin(il, il), k)] = Complex64::new(0.0, 0.0);
            }
            for a in 0..nlev {
                m[(lin(il, il), lin(a, a))] = Complex64::new(1.0, 0.0);
            }
            rhs[lin(il, il)] = Complex64::new(1.0, 0.0);
        }
    }
    let x = m
        .lu()
        .solve(&rhs)
        .ok_or_else(|| NieError::InvalidScheme("singular evolution matrix".into()))?;
    let mut rho = DMatrix::<Complex64>::zeros(nlev, nlev);
    for a in 0..nlev {
        for b in 0..nlev {
            rho[(a, b)] = x[lin(a, b)];
        }
    }
    Ok(SteadyState {
        levels: lv.levels,
        rho,
    })
}

/// Integrates the density-matrix equations in time (classic fourth-order
/// Runge-Kutta) from the field-free state until the scaled residual
/// ‖dρ/dt‖_∞ / rate-scale drops below `tol`.
pub fn relax_to_steady_state(
    scheme: &LevelScheme,
    fields: &FieldSet,
    v: f64,
    tol: f64,
) -> Result<SteadyState> {
    let lv = build_liouvillian(scheme, fields, v)?;
    let nlev = lv.levels.len();
    let dim = nlev * nlev;
    let lin = |a: usize, b: usize| a * nlev + b;

    // Scale of the fastest dynamics bounds the stable step.
    let mut rate_scale = 0.0f64;
    for a in 0..dim {
        let row: f64 = (0..dim).map(|b| lv.m[(a, b)].norm()).sum();
        rate_scale = rate_scale.max(row);
    }
    if rate_scale <= 0.0 {
        return Err(NieError::InvalidScheme("empty evolution matrix".into()));
    }
    let dt = 1.0 / rate_scale;

    let pops = scheme.zero_field_populations()?;
    let mut x = DVector::<Complex64>::zeros(dim);
    for (a, &la) in lv.levels.iter().enumerate() {
        x[lin(a, a)] = Complex64::new(pops.n_of(la), 0.0);
    }

    let deriv = |x: &DVector<Complex64>| &lv.m * x + &lv.c;
    let max_steps = 50_000_000usize;
    let mut steps = 0usize;
    loop {
        let k1 = deriv(&x);
        let resid = k1.iter().map(|z| z.norm()).fold(0.0f64, f64::max);
        let amp = x
            .iter()
            .map(|z| z.norm())
            .fold(0.0f64, f64::max)
            .max(1e-30);
        if resid <= tol * rate_scale * amp {
            break;
        }
        if steps >= max_steps {
            return Err(NieError::NoConvergence(steps));
        }
        let k2 = deriv(&(&x + &k1 * Complex64::new(dt / 2.0, 0.0)));
        let k3 = deriv(&(&x + &k2 * Complex64::new(dt / 2.0, 0.0)));
        let k4 = deriv(&(&x + &k3 * Complex64::new(dt, 0.0)));
        x += (k1 + k2 * Complex64::new(2.0, 0.0) + k3 * Complex64::new(2.0, 0.0) + k4)
            * Complex64::new(dt / 6.0, 0.0);
        steps += 1;
    }
    let mut rho = DMatrix::<Complex64>::zeros(nlev, nlev);
    for a in 0..nlev {
        for b in 0..nlev {
            rho[(a, b)] = x[lin(a, b)];
        }
    }
    Ok(SteadyState {
        levels: lv.levels,
        rho,
    })
}

/// First-order response of the off-diagonal elements to a weak probe field.
///
/// The probe field `probe` is switched on with a small real amplitude ε
/// (relative to `scale`), the steady state is solved, and the coherences that
/// vanish without the probe are divided by ε. A Richardson consistency check
/// at ε/2 is returned as the relative defect of the extracted derivative.
pub struct ProbeResponse {
    pub derivative: SteadyState,
    pub richardson_defect: f64,
}

pub fn weak_probe_derivative(
    scheme: &LevelScheme,
    fields: &FieldSet,
    probe: usize,
    scale: f64,
    v: f64,
) -> Result<ProbeResponse> {
    let eps = 1e-6 * scale;
    let solve_at = |amp: f64| -> Result<SteadyState> {
        let mut f = fields.clone();
        f.field_mut(probe).rabi = Complex64::new(amp, 0.0);
        f.field_mut(probe).role = FieldRole::Weak;
        steady_state_linear(scheme, &f, v)
    };
    let base = solve_at(0.0)?;
    let full = solve_at(eps)?;
    let half = solve_at(eps / 2.0)?;
    let nlev = full.levels.len();
    let mut d_full = (full.rho.clone() - base.rho.clone()) / Complex64::new(eps, 0.0);
    let d_half = (half.rho.clone() - base.rho) / Complex64::new(eps / 2.0, 0.0);
    let mut defect = 0.0f64;
    let mut scale_norm = 0.0f64;
    for a in 0..nlev {
        for b in 0..nlev {
            if a == b {
                continue;
            }
            defect = defect.max((d_full[(a, b)] - d_half[(a, b)]).norm());
            scale_norm = scale_norm.max(d_half[(a, b)].norm());
        }
    }
    // Keep the finer-step estimate as the reported derivative.
    d_full = d_half;
    Ok(ProbeResponse {
        derivative: SteadyState {
            levels: full.levels,
            rho: d_full,
        },
        richardson_defect: if scale_norm > 0.0 {
            defect / scale_norm
        } else {
            0.0
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{DriveField, SchemeKind};

    fn v_open() -> LevelScheme {
        let mut s = LevelScheme::new(SchemeKind::V, Topology::Open);
        s.gamma_total.insert(Level::L, 5.0);
        s.gamma_total.insert(Level::M, 3.0);
        s.gamma_total.insert(Level::G, 1.0);
        s.gamma.insert((Level::M, Level::L), 0.8);
        s.gamma.insert((Level::G, Level::L), 0.3);
        s.pump.insert(Level::L, 1.0);
        s.pump.insert(Level::M, 0.85);
        s.pump.insert(Level::G, 0.5);
        s
    }

    fn drive(g: f64, det: f64) -> DriveField {
        DriveField {
            rabi: Complex64::new(g, 0.0),
            detuning: det,
            wavevector: 0.0,
            role: FieldRole::Strong,
        }
    }

    #[test]
    fn fields_off_reproduces_zero_field_populations() {
        let s = v_open();
        let fields = FieldSet::default();
        let st = steady_state_linear(&s, &fields, 0.0).unwrap();
        let pops = s.zero_field_populations().unwrap();
        for lv in [Level::L, Level::M, Level::G] {
            assert!((st.population(lv) - pops.n_of(lv)).abs() < 1e-10);
        }
        assert!(st.hermiticity_defect() < 1e-12);
    }

    #[test]
    fn two_level_saturation_halves_with_doubled_denominator() {
        // Only E4 on, exact resonance: |ρ_ml| ∝ G/(1 + ϰ) with the standard
        // two-level saturation denominator; pick G so ϰ = 1 and check that
        // the coherence relative to G drops by half vs the weak-field value.
        let mut s = v_open();
        s.gamma.clear(); // no feeding: pure two-level behaviour on l-m
        let kappa = |g: f64| {
            let gam4 = s.coherence_width(Level::L, Level::M);
            2.0 * g * g * (s.decay(Level::L) + s.decay(Level::M)) / (s.decay(Level::L) * s.decay(Level::M) * gam4)
        };
        let chi_at = |g: f64| {
            let mut fields = FieldSet::default();
            fields.set(4, drive(g, 0.0));
            let st = steady_state_linear(&s, &fields, 0.0).unwrap();
            st.coherence(Level::M, Level::L).norm() / g
        };
        let weak = chi_at(1e-6);
        let g1 = (1.0f64 / (2.0 * (s.decay(Level::L) + s.decay(Level::M))
            / (s.decay(Level::L) * s.decay(Level::M) * s.coherence_width(Level::L, Level::M))))
            .sqrt();
        assert!((kappa(g1) - 1.0).abs() < 1e-12);
        let saturated = chi_at(g1);
        assert!(
            (saturated / weak - 0.5).abs() < 1e-6,
            "saturation ratio {}",
            saturated / weak
        );
    }

    #[test]
    fn linear_and_time_routes_agree() {
        let s = v_open();
        let mut fields = FieldSet::default();
        fields.set(4, drive(2.0, 1.3));
        fields.set(1, drive(3.0, -0.7));
        let a = steady_state_linear(&s, &fields, 0.4).unwrap();
        let b = relax_to_steady_state(&s, &fields, 0.4, 1e-13).unwrap();
        for lv in [Level::L, Level::M, Level::G] {
            let rel = (a.population(lv) - b.population(lv)).abs() / a.population(lv).abs();
            assert!(rel < 1e-8, "population {lv} differs by {rel}");
        }
        let ca = a.coherence(Level::M, Level::L);
        let cb = b.coherence(Level::M, Level::L);
        assert!((ca - cb).norm() < 1e-8 * ca.norm());
    }

    #[test]
    fn closed_trace_is_preserved() {
        let mut s = LevelScheme::new(SchemeKind::Lambda, Topology::Closed);
        s.gamma_total.insert(Level::N, 2.0);
        s.gamma_total.insert(Level::M, 4.0);
        s.gamma.insert((Level::N, Level::L), 2.0);
        s.gamma.insert((Level::M, Level::L), 1.5);
        s.gamma.insert((Level::M, Level::N), 2.5);
        s.pump.insert(Level::N, 0.7);
        s.pump.insert(Level::M, 0.2);
        let mut fields = FieldSet::default();
        fields.set(4, drive(3.0, 0.5));
        fields.set(3, drive(1.5, -2.0));
        let st = steady_state_linear(&s, &fields, 0.0).unwrap();
        assert!((st.trace() - 1.0).abs() < 1e-12);
        let td = relax_to_steady_state(&s, &fields, 0.0, 1e-12).unwrap();
        assert!((td.trace() - 1.0).abs() < 1e-10);
        assert!(td.hermiticity_defect() < 1e-10);
    }

    #[test]
    fn raman_loop_closure_is_enforced() {
        let mut s = LevelScheme::new(SchemeKind::RamanFwm, Topology::Open);
        for lv in [Level::L, Level::N, Level::M, Level::G] {
            s.gamma_total.insert(lv, 1.0);
            s.pump.insert(lv, 0.1);
        }
        let mut fields = FieldSet::default();
        fields.set(1, drive(1.0, 1.0));
        fields.set(2, drive(1.0, 2.0));
        fields.set(3, drive(1.0, 3.0));
        fields.set(4, drive(1.0, 0.0)); // should be 1 - 2 + 3 = 2
        assert!(matches!(
            steady_state_linear(&s, &fields, 0.0),
            Err(NieError::InvalidScheme(_))
        ));
        fields.field_mut(4).detuning = 2.0;
        assert!(steady_state_linear(&s, &fields, 0.0).is_ok());
    }

    #[test]
    fn weak_probe_richardson_check_passes() {
        let s = v_open();
        let mut fields = FieldSet::default();
        fields.set(1, drive(2.0, 0.3));
        let probe = weak_probe_derivative(&s, &fields, 4, 1.0, 0.0).unwrap();
        assert!(probe.richardson_defect < 1e-4);
        // Weak-probe response must match the analytic single-field limit
        // direction: a nonzero ρ_ml derivative.
        assert!(probe.derivative.coherence(Level::M, Level::L).norm() > 0.0);
    }
}
