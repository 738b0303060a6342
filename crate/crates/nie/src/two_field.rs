//! Closed-form responses of a probe transition coupled to one auxiliary
//! strong field: normalized susceptibilities, power-dependent populations,
//! gain-without-inversion classification and the lasing operating point.
//!
//! Works for the three-level V, Lambda and cascade (H) schemes in both open
//! and closed configurations. Everything is evaluated per velocity class;
//! Doppler averaging is layered on top via the `doppler` module.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::doppler::VelocityGrid;
use crate::error::{NieError, Result};
use crate::model::{FieldSet, Level, LevelScheme, PopulationSet, SchemeKind, Topology};

/// Interference (two-photon coherence) factors of the uniform susceptibility
/// form, plus the resonance denominators they are built from.
#[derive(Debug, Clone, Copy)]
pub struct CouplingFactors {
    pub g1: Complex64,
    pub g2: Complex64,
    pub u1: Complex64,
    pub u2: Complex64,
    /// One-photon denominator of the probe transition, P4 = Γ4 + iΩ4'.
    pub p4: Complex64,
    /// One-photon denominator of the auxiliary transition. For the cascade
    /// scheme this already carries the conjugation swap required by the
    /// counter-rotating ordering of the two-photon resonance.
    pub pi: Complex64,
    /// Two-photon denominator P_{4i}.
    pub p4i: Complex64,
    pub width4: f64,
    pub widthi: f64,
    /// Field index of the auxiliary transition (1, 3 or 2).
    pub aux: usize,
}

fn aux_field(kind: SchemeKind) -> Result<usize> {
    kind.auxiliary_field().ok_or(NieError::UnsupportedScheme)
}

/// Evaluates the dimensionless interference factors at velocity `v`.
pub fn coupling_factors(
    scheme: &LevelScheme,
    fields: &FieldSet,
    v: f64,
) -> Result<CouplingFactors> {
    let kind = scheme.kind;
    let aux = aux_field(kind)?;
    let (lo4, up4) = kind.transition(4).expect("field 4 in scheme");
    let (loi, upi) = kind.transition(aux).expect("aux field in scheme");
    let o4 = fields.shifted(4, v);
    let oi = fields.shifted(aux, v);
    let width4 = scheme.coherence_width(lo4, up4);
    let widthi = scheme.coherence_width(loi, upi);
    let p4 = Complex64::new(width4, o4);
    let pi = Complex64::new(widthi, oi);
    let p4i = match kind {
        SchemeKind::V => Complex64::new(scheme.coherence_width(Level::M, Level::G), o4 - oi),
        SchemeKind::Lambda => Complex64::new(scheme.coherence_width(Level::L, Level::N), o4 - oi),
        SchemeKind::H => Complex64::new(scheme.coherence_width(Level::L, Level::F), o4 + oi),
        SchemeKind::RamanFwm => unreachable!("aux_field rejects the four-level scheme"),
    };
    // Cascade ordering swaps the auxiliary denominator with its conjugate.
    let pi_eff = if kind == SchemeKind::H { pi.conj() } else { pi };
    let gi2 = fields.intensity(aux);
    let g42 = fields.intensity(4);
    Ok(CouplingFactors {
        g1: gi2 / (p4 * p4i),
        g2: gi2 / (pi_eff.conj() * p4i),
        u1: g42 / (p4 * p4i),
        u2: g42 / (pi_eff.conj() * p4i),
        p4,
        pi: pi_eff,
        p4i,
        width4,
        widthi,
        aux,
    })
}

/// Saturation parameters and the population-coupling coefficient table of a
/// (kind, topology) pair.
#[derive(Debug, Clone, Copy)]
pub struct SchemeCoefficients {
    pub kappa4: f64,
    pub kappa_i: f64,
    pub a14: f64,
    pub a24: f64,
    pub a34: f64,
    pub a44: f64,
    pub a1i: f64,
    pub a2i: f64,
    pub a3i: f64,
    pub a4i: f64,
    /// Sign selector of the cross terms: -1 for V and Lambda, +1 for H.
    pub sign: f64,
}

/// Builds the per-configuration saturation parameters and coefficients.
pub fn scheme_coefficients(scheme: &LevelScheme, fields: &FieldSet) -> Result<SchemeCoefficients> {
    let kind = scheme.kind;
    let aux = aux_field(kind)?;
    let g4sq = fields.intensity(4);
    let gisq = fields.intensity(aux);
    let gl = scheme.decay(Level::L);
    let gm = scheme.decay(Level::M);
    let width4 = scheme.coherence_width(Level::L, Level::M);
    let n = scheme.zero_field_populations()?;
    let sign = if kind == SchemeKind::H { 1.0 } else { -1.0 };

    let (kappa4, kappa_i, a14, a2i, a3i, a44) = match (kind, scheme.topology) {
        (SchemeKind::V, Topology::Open) => {
            let gg = scheme.decay(Level::G);
            let gam4 = scheme.partial(Level::M, Level::L);
            let gam1 = scheme.partial(Level::G, Level::L);
            let widthi = scheme.coherence_width(Level::L, Level::G);
            (
                2.0 * g4sq * (gl + gm - gam4) / (gl * gm * width4),
                2.0 * gisq * (gg + gl - gam1) / (gg * gl * widthi),
                1.0,
                1.0,
                (gg - gam1) / (gg + gl - gam1),
                (gm - gam4) / (gl + gm - gam4),
            )
        }
        (SchemeKind::V, Topology::Closed) => {
            let gg = scheme.decay(Level::G);
            let widthi = scheme.coherence_width(Level::L, Level::G);
            let dn4 = n.n_of(Level::L) - n.n_of(Level::M);
            let dni = n.n_of(Level::L) - n.n_of(Level::G);
            (
                4.0 * g4sq / (gm * width4),
                4.0 * gisq / (gg * widthi),
                0.5 * (1.0 + dn4),
                0.5 * (1.0 + dni),
                0.5 * dn4,
                0.5 * dni,
            )
        }
        (SchemeKind::Lambda, Topology::Open) => {
            let gn = scheme.decay(Level::N);
            let gam4 = scheme.partial(Level::M, Level::L);
            let gam3 = scheme.partial(Level::M, Level::N);
            let widthi = scheme.coherence_width(Level::N, Level::M);
            (
                2.0 * g4sq * (gl + gm - gam4) / (gl * gm * width4),
                2.0 * gisq * (gm + gn - gam3) / (gm * gn * widthi),
                1.0,
                1.0,
                gn * (gl - gam4) / (gl * (gm + gn - gam3)),
                gl * (gn - gam3) / (gn * (gm + gl - gam4)),
            )
        }
        (SchemeKind::Lambda, Topology::Closed) => {
            let gn = scheme.decay(Level::N);
            let gam3 = scheme.partial(Level::M, Level::N);
            let widthi = scheme.coherence_width(Level::N, Level::M);
            let dn4 = n.n_of(Level::L) - n.n_of(Level::M);
            let dn3 = n.n_of(Level::N) - n.n_of(Level::M);
            (
                4.0 * g4sq / (gm * width4),
                2.0 * gisq * (gm + gn - gam3) / (gm * gn * widthi),
                0.5 * (1.0 + dn4 * (1.0 + gam3 / gn)),
                1.0 + dn3 * (gn - gm + gam3) / (gn + gm - gam3),
                1.0 + dn4 - (1.0 + 2.0 * dn4) * (gm - gam3) / (gm + gn - gam3),
                0.5 * (1.0 - gam3 / gn + dn3 * (1.0 + gam3 / gn)),
            )
        }
        (SchemeKind::H, Topology::Open) => {
            let gf = scheme.decay(Level::F);
            let gam4 = scheme.partial(Level::M, Level::L);
            let gam2 = scheme.partial(Level::F, Level::M);
            let widthi = scheme.coherence_width(Level::M, Level::F);
            (
                2.0 * g4sq * (gl + gm - gam4) / (gl * gm * width4),
                2.0 * gisq * (gf + gm - gam2) / (gf * gm * widthi),
                1.0,
                1.0,
                ((gl - gam4) / gl) * ((gf - gam2) / (gm + gf - gam2)),
                gl / (gl + gm - gam4),
            )
        }
        (SchemeKind::H, Topology::Closed) => {
            let gf = scheme.decay(Level::F);
            let gam2 = scheme.partial(Level::F, Level::M);
            let widthi = scheme.coherence_width(Level::M, Level::F);
            let dn4 = n.n_of(Level::L) - n.n_of(Level::M);
            let dn2 = n.n_of(Level::M) - n.n_of(Level::F);
            (
                4.0 * g4sq / (gm * width4),
                2.0 * gisq * (gf + gm - gam2) / (gf * gm * widthi),
                0.5 * (1.0 + dn4),
                1.0 + dn2 * (gm - gf + gam2) / (gm + gf - gam2),
                (1.0 + 2.0 * dn4) * (gf - gam2) / (gm + gf - gam2) - dn4,
                0.5 * (1.0 - dn2),
            )
        }
        (SchemeKind::RamanFwm, _) => return Err(NieError::UnsupportedScheme),
    };
    Ok(SchemeCoefficients {
        kappa4,
        kappa_i,
        a14,
        a24: -a44,
        a34: -a14,
        a44,
        a1i: -a3i,
        a2i,
        a3i,
        a4i: -a2i,
        sign,
    })
}

/// Full two-field response at one velocity.
#[derive(Debug, Clone)]
pub struct TwoFieldResponse {
    /// χ4/χ4⁰ (or the unnormalized numerator over P4·D when `normalized` is
    /// false).
    pub chi4: Complex64,
    /// χi/χi⁰ for the auxiliary transition, same normalization convention.
    pub chii: Complex64,
    pub dr4: f64,
    pub dri: f64,
    /// The auxiliary population-system entries X1..X4.
    pub x: [f64; 4],
    pub populations: PopulationSet,
    pub normalized: bool,
}

impl TwoFieldResponse {
    pub fn dn4(&self, scheme: &LevelScheme) -> f64 {
        scheme.transition_difference_n(4, &self.populations)
    }

    pub fn dni(&self, scheme: &LevelScheme) -> f64 {
        let aux = scheme.kind.auxiliary_field().expect("three-level scheme");
        scheme.transition_difference_n(aux, &self.populations)
    }
}

struct Differences {
    dr4: f64,
    dri: f64,
    x: [f64; 4],
    dn4: f64,
    dni: f64,
}

fn differences(
    coeffs: &SchemeCoefficients,
    factors: &CouplingFactors,
    n: &PopulationSet,
    scheme: &LevelScheme,
) -> Result<Differences> {
    let (lo4, up4) = scheme.kind.transition(4).unwrap();
    let (loi, upi) = scheme.kind.transition(factors.aux).unwrap();
    let dn4 = n.n_of(lo4) - n.n_of(up4);
    let dni = n.n_of(loi) - n.n_of(upi);
    let d4 = Complex64::new(1.0, 0.0) + factors.g1 + factors.u2;
    let di = Complex64::new(1.0, 0.0) + factors.g1.conj() + factors.u2.conj();
    let s4 = (factors.width4 / factors.p4) * factors.g2 / d4;
    let si = (factors.widthi / factors.pi) * (1.0 + factors.g1.conj()) / di;
    let t4 = (factors.width4 / factors.p4) * (1.0 + factors.u2) / d4;
    let ti = (factors.widthi / factors.pi) * factors.u1.conj() / di;
    let x2 = 1.0 + (coeffs.a24 * coeffs.kappa4 * s4 + coeffs.a2i * coeffs.kappa_i * si).re;
    let x3 = (coeffs.a34 * coeffs.kappa4 * s4 + coeffs.a3i * coeffs.kappa_i * si).re;
    let x1 = 1.0 + (coeffs.a14 * coeffs.kappa4 * t4 + coeffs.a1i * coeffs.kappa_i * ti).re;
    let x4 = (coeffs.a44 * coeffs.kappa4 * t4 + coeffs.a4i * coeffs.kappa_i * ti).re;
    let det = x1 * x2 - x3 * x4;
    if det.abs() < 1e-14 * (x1 * x2).abs().max((x3 * x4).abs()) {
        return Err(NieError::DegenerateSystem);
    }
    let sign = coeffs.sign;
    let dr4 = (dn4 * x2 + sign * dni * x3) / det;
    let dri = (dni * x1 + sign * dn4 * x4) / det;
    Ok(Differences {
        dr4,
        dri,
        x: [x1, x2, x3, x4],
        dn4,
        dni,
    })
}

fn chi_pair(
    coeffs: &SchemeCoefficients,
    factors: &CouplingFactors,
    d: &Differences,
    normalized: bool,
) -> Result<(Complex64, Complex64)> {
    let sign = coeffs.sign;
    let d4 = Complex64::new(1.0, 0.0) + factors.g1 + factors.u2;
    let di = Complex64::new(1.0, 0.0) + factors.g1.conj() + factors.u2.conj();
    let num4 = d.dr4 * (1.0 + factors.u2) + sign * d.dri * factors.g2;
    let numi = d.dri * (1.0 + factors.g1.conj()) + sign * d.dr4 * factors.u1.conj();
    if normalized {
        if d.dn4 == 0.0 || d.dni == 0.0 {
            return Err(NieError::NormalizationUndefined);
        }
        Ok((
            factors.width4 * num4 / (factors.p4 * d.dn4 * d4),
            factors.widthi * numi / (factors.pi * d.dni * di),
        ))
    } else {
        Ok((num4 / (factors.p4 * d4), numi / (factors.pi * di)))
    }
}

/// Reconstructs per-level populations from the steady-state rate balance with
/// the coherent transfer rates implied by the driven coherences.
fn reconstruct_populations(
    scheme: &LevelScheme,
    fields: &FieldSet,
    factors: &CouplingFactors,
    d: &Differences,
    n: &PopulationSet,
) -> Result<PopulationSet> {
    let sign = {
        if scheme.kind == SchemeKind::H {
            1.0
        } else {
            -1.0
        }
    };
    let den4 = Complex64::new(1.0, 0.0) + factors.g1 + factors.u2;
    let deni = den4.conj();
    // Driven coherences ρ_{up,lo} in the physical (unconjugated) convention.
    let minus_i = Complex64::new(0.0, -1.0);
    let num4 = d.dr4 * (1.0 + factors.u2) + sign * d.dri * factors.g2;
    let rho4 = minus_i * fields.field(4).rabi * num4 / (factors.p4 * den4);
    let numi = d.dri * (1.0 + factors.g1.conj()) + sign * d.dr4 * factors.u1.conj();
    // The cascade closed form is expressed through conjugated denominators;
    // the physical coherence is the conjugate of the printed ratio.
    let ratio_i = numi / (factors.pi * deni);
    let rhoi = minus_i
        * fields.field(factors.aux).rabi
        * if scheme.kind == SchemeKind::H {
            ratio_i.conj()
        } else {
            ratio_i
        };
    // Coherent transfer rate into the upper level of transition j.
    let transfer = |g: Complex64, rho_up_lo: Complex64| 2.0 * (g * rho_up_lo.conj()).im;
    let w4 = transfer(fields.field(4).rabi, rho4);
    let wi = transfer(fields.field(factors.aux).rabi, rhoi);

    let levels = scheme.levels();
    let dim = levels.len();
    let idx = |lv: Level| levels.iter().position(|&x| x == lv).unwrap();
    let mut a = DMatrix::<f64>::zeros(dim, dim);
    let mut b = DVector::<f64>::zeros(dim);
    let mut source = vec![0.0f64; dim];
    let (lo4, up4) = scheme.kind.transition(4).unwrap();
    let (loi, upi) = scheme.kind.transition(factors.aux).unwrap();
    source[idx(up4)] += w4;
    source[idx(lo4)] -= w4;
    source[idx(upi)] += wi;
    source[idx(loi)] -= wi;
    match scheme.topology {
        Topology::Open => {
            for &lv in levels {
                let i = idx(lv);
                a[(i, i)] = scheme.decay(lv);
                for &from in levels {
                    if from != lv {
                        a[(i, idx(from))] -= scheme.partial(from, lv);
                    }
                }
                b[i] = scheme.pump_rate(lv) + source[i];
            }
        }
        Topology::Closed => {
            let ground = scheme.ground();
            for &lv in levels {
                let i = idx(lv);
                if lv == ground {
                    for k in 0..dim {
                        a[(i, k)] = 1.0;
                    }
                    b[i] = 1.0;
                } else {
                    a[(i, i)] = scheme.decay(lv);
                    for &from in levels {
                        if from != lv {
                            a[(i, idx(from))] -= scheme.partial(from, lv);
                        }
                    }
                    a[(i, idx(ground))] -= scheme.pump_rate(lv);
                    b[i] = source[i];
                }
            }
        }
    }
    let r = a
        .lu()
        .solve(&b)
        .ok_or_else(|| NieError::InvalidScheme("singular rate matrix".into()))?;
    let mut pops = PopulationSet::default();
    for &lv in levels {
        pops.n.insert(lv, n.n_of(lv));
        pops.r.insert(lv, r[idx(lv)]);
    }
    Ok(pops)
}

/// Power-dependent population differences and the per-level populations.
pub fn population_differences(
    coeffs: &SchemeCoefficients,
    factors: &CouplingFactors,
    scheme: &LevelScheme,
    fields: &FieldSet,
    _v: f64,
) -> Result<(f64, f64, [f64; 4], PopulationSet)> {
    let n = scheme.zero_field_populations()?;
    let d = differences(coeffs, factors, &n, scheme)?;
    let pops = reconstruct_populations(scheme, fields, factors, &d, &n)?;
    Ok((d.dr4, d.dri, d.x, pops))
}

fn response(
    scheme: &LevelScheme,
    fields: &FieldSet,
    v: f64,
    normalized: bool,
) -> Result<TwoFieldResponse> {
    let factors = coupling_factors(scheme, fields, v)?;
    let coeffs = scheme_coefficients(scheme, fields)?;
    let n = scheme.zero_field_populations()?;
    let d = differences(&coeffs, &factors, &n, scheme)?;
    let (chi4, chii) = chi_pair(&coeffs, &factors, &d, normalized)?;
    let pops = reconstruct_populations(scheme, fields, &factors, &d, &n)?;
    Ok(TwoFieldResponse {
        chi4,
        chii,
        dr4: d.dr4,
        dri: d.dri,
        x: d.x,
        populations: pops,
        normalized,
    })
}

/// Normalized susceptibilities χ/χ⁰ on both transitions at velocity `v`.
pub fn susceptibilities(scheme: &LevelScheme, fields: &FieldSet, v: f64) -> Result<TwoFieldResponse> {
    response(scheme, fields, v, true)
}

/// Same as [`susceptibilities`] but without dividing by the zero-field
/// population differences; usable when a Δn vanishes.
pub fn susceptibilities_unnormalized(
    scheme: &LevelScheme,
    fields: &FieldSet,
    v: f64,
) -> Result<TwoFieldResponse> {
    response(scheme, fields, v, false)
}

/// Gain / amplification-without-inversion flags of a response sample (or of
/// velocity-averaged quantities fed through the same structure).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AwiClassification {
    pub gain4: bool,
    pub gain_i: bool,
    pub awi4: bool,
    pub awi_i: bool,
}

/// Classifies gain and inversionless gain on both transitions.
///
/// Gain means a negative real part of the normalized absorption index.
/// "Without inversion" means the saturated population difference keeps the
/// sign of the absorbing zero-field difference, together with the resonant
/// interference inequality Δr4/Δri < g2/(1+u2) (and its mirrored form for
/// the auxiliary transition).
pub fn awi_classify(
    response: &TwoFieldResponse,
    factors: &CouplingFactors,
    scheme: &LevelScheme,
) -> Result<AwiClassification> {
    if scheme.kind == SchemeKind::H {
        return Err(NieError::NotApplicable);
    }
    let dn4 = response.dn4(scheme);
    let dni = response.dni(scheme);
    let gain4 = response.chi4.re < 0.0;
    let gain_i = response.chii.re < 0.0;
    let no_inv4 = response.dr4 * dn4 >= 0.0;
    let no_inv_i = response.dri * dni >= 0.0;
    let bound4 = (factors.g2 / (1.0 + factors.u2)).re;
    let bound_i = (factors.u1 / (1.0 + factors.g1)).re;
    let cond4 = response.dri != 0.0 && response.dr4 / response.dri < bound4;
    let cond_i = response.dr4 != 0.0 && response.dri / response.dr4 < bound_i;
    Ok(AwiClassification {
        gain4,
        gain_i,
        awi4: gain4 && no_inv4 && cond4,
        awi_i: gain_i && no_inv_i && cond_i,
    })
}

/// Velocity-averaged gain on the probe transition, −Re⟨χ4/χ4⁰⟩_v, as a
/// function of the probe intensity parameter S4 (|G4|² = S4 · `s4_unit`).
fn averaged_gain(
    scheme: &LevelScheme,
    fields: &FieldSet,
    grid: &VelocityGrid,
    s4: f64,
    s4_unit: f64,
) -> Result<f64> {
    let mut f = fields.clone();
    f.field_mut(4).rabi = Complex64::new((s4 * s4_unit).sqrt(), 0.0);
    let avg = grid.maxwell_average(|v| {
        susceptibilities(scheme, &f, v)
            .map(|r| r.chi4)
            .unwrap_or(Complex64::new(f64::NAN, 0.0))
    })?;
    Ok(-avg.re)
}

/// Finds the lasing operating point: the largest S4 in `s4_range` where the
/// velocity-averaged gain equals the normalized cavity loss per pass
/// (`loss` in units of the resonant zero-field absorption index).
///
/// Bracketing over a coarse scan followed by bisection to a relative width
/// of 1e-6. Fails with `NoBracket` when the gain never reaches the loss.
pub fn lasing_operating_point(
    scheme: &LevelScheme,
    fields: &FieldSet,
    grid: &VelocityGrid,
    loss: f64,
    s4_range: (f64, f64),
    s4_unit: f64,
) -> Result<f64> {
    let (lo, hi) = s4_range;
    let samples = 64usize;
    let f = |s4: f64| averaged_gain(scheme, fields, grid, s4, s4_unit).map(|g| g - loss);
    let mut prev_s = lo;
    let mut prev_f = f(lo)?;
    let mut bracket: Option<(f64, f64, f64, f64)> = None;
    for k in 1..=samples {
        let s = lo + (hi - lo) * k as f64 / samples as f64;
        let val = f(s)?;
        if prev_f == 0.0 {
            bracket = Some((prev_s, prev_s, prev_f, prev_f));
        }
        if prev_f * val < 0.0 {
            bracket = Some((prev_s, s, prev_f, val));
        }
        prev_s = s;
        prev_f = val;
    }
    if prev_f == 0.0 {
        return Ok(prev_s);
    }
    let (mut a, mut b, mut fa, _fb) = bracket.ok_or(NieError::NoBracket)?;
    if a == b {
        return Ok(a);
    }
    while (b - a).abs() > 1e-6 * b.abs().max(a.abs()).max(1e-300) {
        let mid = 0.5 * (a + b);
        let fm = f(mid)?;
        if fm == 0.0 {
            return Ok(mid);
        }
        if fa * fm < 0.0 {
            b = mid;
        } else {
            a = mid;
            fa = fm;
        }
    }
    Ok(0.5 * (a + b))
}
