//! Four-wave mixing at the Raman-type four-level loop: fields 1 (l-g),
//! 2 (n-g), 3 (n-m) and 4 (l-m) with the frequency relation
//! ω₄ = ω₁ − ω₂ + ω₃.
//!
//! Three regimes are implemented:
//! - [`perturbative_chi3`]: lowest order in all fields;
//! - [`fwm_cpt`]: strong E₁, E₂ (population trapping regime), weak E₃, E₄;
//! - [`fwm_two_strong`]: strong E₁, E₃ (one strong field per level),
//!   weak E₂, E₄.
//!
//! All third-order susceptibilities are reported with the overall dipole
//! factor set to one; only ratios are physically comparable.

use std::collections::BTreeMap;

use num_complex::Complex64;

use crate::error::{NieError, Result};
use crate::model::{FieldSet, Level, LevelScheme, PopulationSet, SchemeKind};

/// One-, two- and three-photon resonance denominators of the mixing loop.
#[derive(Debug, Clone, Copy)]
pub struct FwmDenominators {
    pub p1: Complex64,
    pub p2: Complex64,
    pub p3: Complex64,
    pub p4: Complex64,
    /// Two-photon (Raman) denominators: P12 on l-n, P32/P41 on g-m,
    /// P43 on l-n.
    pub p12: Complex64,
    pub p32: Complex64,
    pub p41: Complex64,
    pub p43: Complex64,
    /// Three-photon denominators of the generated coherences.
    pub d2: Complex64,
    pub d3: Complex64,
    pub d4: Complex64,
    pub width1: f64,
    pub width2: f64,
    pub width3: f64,
    pub width4: f64,
}

fn check_raman(scheme: &LevelScheme) -> Result<()> {
    if scheme.kind != SchemeKind::RamanFwm {
        return Err(NieError::UnsupportedScheme);
    }
    Ok(())
}

/// Builds all resonance denominators at velocity `v`.
pub fn denominators(scheme: &LevelScheme, fields: &FieldSet, v: f64) -> Result<FwmDenominators> {
    check_raman(scheme)?;
    let o: [f64; 4] = [
        fields.shifted(1, v),
        fields.shifted(2, v),
        fields.shifted(3, v),
        fields.shifted(4, v),
    ];
    let width1 = scheme.coherence_width(Level::L, Level::G);
    let width2 = scheme.coherence_width(Level::N, Level::G);
    let width3 = scheme.coherence_width(Level::N, Level::M);
    let width4 = scheme.coherence_width(Level::L, Level::M);
    let wln = scheme.coherence_width(Level::L, Level::N);
    let wgm = scheme.coherence_width(Level::G, Level::M);
    Ok(FwmDenominators {
        p1: Complex64::new(width1, o[0]),
        p2: Complex64::new(width2, o[1]),
        p3: Complex64::new(width3, o[2]),
        p4: Complex64::new(width4, o[3]),
        p12: Complex64::new(wln, o[0] - o[1]),
        p32: Complex64::new(wgm, o[2] - o[1]),
        p41: Complex64::new(wgm, o[3] - o[0]),
        p43: Complex64::new(wln, o[3] - o[2]),
        d2: Complex64::new(width2, o[0] + o[2] - o[3]),
        d3: Complex64::new(width3, o[3] - o[0] + o[1]),
        d4: Complex64::new(width4, o[0] - o[1] + o[2]),
        width1,
        width2,
        width3,
        width4,
    })
}

/// Lowest-order mixing susceptibilities (χ̃₄ for ω₄ = ω₁ − ω₂ + ω₃ and the
/// symmetric χ̃₃ for the reverse conversion).
#[derive(Debug, Clone, Copy)]
pub struct PerturbativeChi {
    pub chi3_t: Complex64,
    pub chi4_t: Complex64,
}

/// Evaluates the perturbative susceptibilities at velocity `v`.
pub fn perturbative_chi3(
    scheme: &LevelScheme,
    fields: &FieldSet,
    v: f64,
) -> Result<PerturbativeChi> {
    let n = scheme.zero_field_populations()?;
    perturbative_with(scheme, fields, &n, v)
}

fn perturbative_with(
    scheme: &LevelScheme,
    fields: &FieldSet,
    n: &PopulationSet,
    v: f64,
) -> Result<PerturbativeChi> {
    let p = denominators(scheme, fields, v)?;
    let dn1 = n.n_of(Level::L) - n.n_of(Level::G);
    let dn2 = n.n_of(Level::N) - n.n_of(Level::G);
    let dn3 = n.n_of(Level::N) - n.n_of(Level::M);
    let dn4 = n.n_of(Level::L) - n.n_of(Level::M);
    let minus_i = Complex64::new(0.0, -1.0);
    let chi4_t = (minus_i / p.d4)
        * (dn1 / (p.p1 * p.p12)
            + (dn2 / p.p2.conj()) * (1.0 / p.p32 + 1.0 / p.p12)
            + dn3 / (p.p3 * p.p32));
    let chi3_t = (minus_i / p.d3)
        * ((dn1 / p.p1.conj()) * (1.0 / p.p41 + 1.0 / p.p12.conj())
            + dn2 / (p.p2 * p.p12.conj())
            + dn4 / (p.p4 * p.p41));
    Ok(PerturbativeChi { chi3_t, chi4_t })
}

/// Analytic Maxwell average of the perturbative χ̃₄ in the Doppler limit
/// Γ ≪ k v̄, using effective two-photon widths
/// Γ̃₁ = Γ_nl + (k₁/k₂ − 1)Γ_ng and Γ̃₃ = Γ_gm + (k₃/k₂ − 1)Γ_ng.
#[derive(Debug, Clone, Copy)]
pub struct AnalyticAverage {
    pub value: Complex64,
    /// True when some Γ/(k v̄) exceeds 0.1 or the coherence-width sum rule
    /// Γ_ln + Γ_gm = Γ_lm + Γ_ng is broken by more than 10%; either puts the
    /// closed form outside its validity regime.
    pub validity_warning: bool,
}

pub fn analytic_averaged_chi3(
    scheme: &LevelScheme,
    fields: &FieldSet,
    vbar: f64,
    n_g: f64,
    n_n: f64,
) -> Result<AnalyticAverage> {
    check_raman(scheme)?;
    let k1 = fields.field(1).wavevector;
    let k2 = fields.field(2).wavevector;
    let k3 = fields.field(3).wavevector;
    let o1 = fields.field(1).detuning;
    let o2 = fields.field(2).detuning;
    let o3 = fields.field(3).detuning;
    let wln = scheme.coherence_width(Level::L, Level::N);
    let wng = scheme.coherence_width(Level::N, Level::G);
    let wgm = scheme.coherence_width(Level::G, Level::M);
    let g1_eff = wln + (k1 / k2 - 1.0) * wng;
    let g3_eff = wgm + (k3 / k2 - 1.0) * wng;
    let widths = [
        scheme.coherence_width(Level::L, Level::G),
        wng,
        scheme.coherence_width(Level::N, Level::M),
        scheme.coherence_width(Level::L, Level::M),
    ];
    let ks = [k1, k2, k3, fields.field(4).wavevector];
    // The residue reduction also needs the coherence-width sum rule
    // Γ_ln + Γ_gm = Γ_lm + Γ_ng (exact for purely radiative widths); strong
    // collisional overrides break it and leave an O(1) defect in the average.
    let sum_lhs = wln + wgm;
    let sum_rhs = scheme.coherence_width(Level::L, Level::M) + wng;
    let identity_defect = (sum_lhs - sum_rhs).abs() / sum_rhs.max(sum_lhs);
    let validity_warning = identity_defect > 0.1
        || widths
            .iter()
            .zip(&ks)
            .any(|(w, k)| w / (k.abs() * vbar) > 0.1);
    let i = Complex64::new(0.0, 1.0);
    let value = 2.0 * i * std::f64::consts::PI.sqrt() * (-(o2 / (k2 * vbar)).powi(2)).exp()
        * (n_g - n_n)
        / (k2
            * vbar
            * Complex64::new(g1_eff, o1 - k1 * o2 / k2)
            * Complex64::new(g3_eff, o3 - k3 * o2 / k2));
    Ok(AnalyticAverage {
        value,
        validity_warning,
    })
}

/// Response of one strong-field mixing regime at a single velocity.
#[derive(Debug, Clone)]
pub struct FwmResponse {
    /// Mixing susceptibility for generation at ω₄ (always present).
    pub chi4_t: Complex64,
    /// Mixing susceptibility at ω₃ (population-trapping regime).
    pub chi3_t: Option<Complex64>,
    /// Mixing susceptibility at ω₂ (two-strong-field regime).
    pub chi2_t: Option<Complex64>,
    /// Normalized absorption susceptibilities χ_i/χ_i⁰ per field.
    pub chi_abs: BTreeMap<usize, Complex64>,
    pub populations: PopulationSet,
    /// Population differences Δr₁..Δr₄ on the four transitions.
    pub dr: [f64; 4],
    pub normalized: bool,
}

fn zero_field_differences(n: &PopulationSet) -> [f64; 4] {
    [
        n.n_of(Level::L) - n.n_of(Level::G),
        n.n_of(Level::N) - n.n_of(Level::G),
        n.n_of(Level::N) - n.n_of(Level::M),
        n.n_of(Level::L) - n.n_of(Level::M),
    ]
}

fn pack_populations(n: &PopulationSet, r: &BTreeMap<Level, f64>) -> PopulationSet {
    let mut pops = PopulationSet::default();
    for &lv in &[Level::L, Level::N, Level::M, Level::G] {
        pops.n.insert(lv, n.n_of(lv));
        pops.r.insert(lv, r.get(&lv).copied().unwrap_or(0.0));
    }
    pops
}

/// Strong E₁ and E₂ (coherent population trapping regime); E₃ and E₄ enter
/// only to first order.
pub fn fwm_cpt(scheme: &LevelScheme, fields: &FieldSet, v: f64) -> Result<FwmResponse> {
    fwm_cpt_mode(scheme, fields, v, true)
}

pub fn fwm_cpt_mode(
    scheme: &LevelScheme,
    fields: &FieldSet,
    v: f64,
    normalized: bool,
) -> Result<FwmResponse> {
    check_raman(scheme)?;
    let p = denominators(scheme, fields, v)?;
    let n = scheme.zero_field_populations()?;
    let dn = zero_field_differences(&n);
    let a1s = fields.intensity(1);
    let a2s = fields.intensity(2);

    let g1 = a1s / (p.p41 * p.p1.conj());
    let g2 = a1s / (p.p12.conj() * p.p2);
    let g3 = a1s / (p.p12.conj() * p.p1.conj());
    let g4 = a1s / (p.p41 * p.p4);
    let u1 = a2s / (p.p12.conj() * p.p2);
    let u2 = a2s / (p.p12 * p.p1);
    let u3 = a2s / (p.p32 * p.p2.conj());
    let u4 = a2s / (p.p32 * p.p3);
    let q1 = a1s / (p.p32 * p.d4);
    let q2 = a2s / (p.p41 * p.d3);
    let q3 = a1s / (p.p12 * p.d4);
    let q4 = a2s / (p.p12.conj() * p.d3);
    let den = 1.0 + g2.conj() + u2;
    let f1 = (p.width1 / p.p1 * (1.0 + g2.conj()) / den).re;
    let f2 = (p.width1 / p.p1 * u1.conj() / den).re;
    let f3 = (p.width2 / p.p2.conj() * (1.0 + u2) / den).re;
    let f4 = (p.width2 / p.p2.conj() * g3.conj() / den).re;

    let gl = scheme.decay(Level::L);
    let gn = scheme.decay(Level::N);
    let gg = scheme.decay(Level::G);
    let gam1 = scheme.partial(Level::G, Level::L);
    let gam2 = scheme.partial(Level::G, Level::N);

    // Saturation parameters and population-coupling coefficients.
    let (fa1, fa2, a1, a2, a3, a4, b1, b2): (
        f64,
        f64,
        f64,
        f64,
        f64,
        f64,
        BTreeMap<Level, f64>,
        BTreeMap<Level, f64>,
    );
    match scheme.topology {
        crate::model::Topology::Open => {
            fa1 = 2.0 * a1s * (gg + gl - gam1) / (gg * gl * p.width1);
            fa2 = 2.0 * a2s * (gg + gn - gam2) / (gg * gn * p.width2);
            a1 = 1.0;
            a3 = 1.0;
            a2 = (gn / gl) * (gl - gam1) / (gg + gn - gam2);
            a4 = (gl / gn) * (gn - gam2) / (gl + gg - gam1);
            let b1g = -gl / (gl + gg - gam1);
            let b2g = gn / (gg + gn - gam2);
            let mut bb1 = BTreeMap::new();
            let mut bb2 = BTreeMap::new();
            bb1.insert(Level::G, b1g);
            bb2.insert(Level::G, b2g);
            bb1.insert(Level::N, (gam2 / gn) * b1g);
            bb2.insert(Level::N, -(gg - gam2) / (gg + gn - gam2));
            bb1.insert(Level::L, (gg - gam1) / (gl + gg - gam1));
            bb2.insert(Level::L, (gam1 / gl) * b2g);
            bb1.insert(Level::M, 0.0);
            bb2.insert(Level::M, 0.0);
            b1 = bb1;
            b2 = bb2;
        }
        crate::model::Topology::Closed => {
            fa1 = 4.0 * a1s / (gg * p.width1);
            fa2 = 2.0 * a2s * (gg + gn - gam2) / (gg * gn * p.width2);
            a1 = 0.5 * (1.0 + dn[0] * (1.0 + gam2 / gn));
            a2 = 1.0 + dn[0] - (1.0 + 2.0 * dn[0]) * (gg - gam2) / (gg + gn - gam2);
            a3 = 1.0 + dn[1] * (1.0 - 2.0 * (gg - gam2) / (gg + gn - gam2));
            a4 = 0.5 * (1.0 - gam2 / gn + dn[1] * (1.0 + gam2 / gn));
            let mut bb1 = BTreeMap::new();
            let mut bb2 = BTreeMap::new();
            bb1.insert(Level::L, n.n_of(Level::L) * (gn + gam2) / (2.0 * gn));
            bb1.insert(Level::M, n.n_of(Level::M) * (gn + gam2) / (2.0 * gn));
            bb1.insert(
                Level::N,
                0.5 * n.n_of(Level::N) - (1.0 - n.n_of(Level::N)) * gam2 / (2.0 * gn),
            );
            bb1.insert(
                Level::G,
                n.n_of(Level::G) * (gn + gam2) / (2.0 * gn) - 0.5,
            );
            bb2.insert(
                Level::L,
                -n.n_of(Level::L) * (gn - gg + gam2) / (gg + gn - gam2),
            );
            bb2.insert(
                Level::M,
                -n.n_of(Level::M) * (gn - gg + gam2) / (gg + gn - gam2),
            );
            bb2.insert(
                Level::N,
                (2.0 * n.n_of(Level::N) - 1.0) * (gg - gam2) / (gg + gn - gam2)
                    - n.n_of(Level::N),
            );
            bb2.insert(
                Level::G,
                1.0 - n.n_of(Level::G)
                    - (1.0 - 2.0 * n.n_of(Level::G)) * (gg - gam2) / (gg + gn - gam2),
            );
            b1 = bb1;
            b2 = bb2;
        }
    }
    let x1 = 1.0 + a1 * fa1 * f1 - a2 * fa2 * f4;
    let x2 = 1.0 + a3 * fa2 * f3 - a4 * fa1 * f2;
    let x3 = a2 * fa2 * f3 - a1 * fa1 * f2;
    let x4 = a4 * fa1 * f1 - a3 * fa2 * f4;
    let det = x1 * x2 - x3 * x4;
    if det.abs() < 1e-14 * (x1 * x2).abs().max((x3 * x4).abs()) {
        return Err(NieError::DegenerateSystem);
    }
    let dr1 = (dn[0] * x2 - dn[1] * x3) / det;
    let dr2 = (dn[1] * x1 - dn[0] * x4) / det;
    let mut r = BTreeMap::new();
    for &lv in &[Level::L, Level::N, Level::M, Level::G] {
        let b1j = b1[&lv];
        let b2j = b2[&lv];
        r.insert(
            lv,
            n.n_of(lv) + dr2 * (b1j * fa1 * f2 + b2j * fa2 * f3)
                - dr1 * (b1j * fa1 * f1 + b2j * fa2 * f4),
        );
    }
    let dr3 = r[&Level::N] - r[&Level::M];
    let dr4 = r[&Level::L] - r[&Level::M];

    let r1 = ((1.0 + g2.conj()) * dr1 - u1.conj() * dr2) / (1.0 + g2.conj() + u2);
    let r2 = ((1.0 + u2.conj()) * dr2 - g3 * dr1) / (1.0 + g2 + u2.conj());
    let r3 = (dr3 * (1.0 + q1) - u3 * r2.conj() * (1.0 - q3) + q1 * u2 * r1) / (1.0 + q1 + u4);
    let r4 = (dr4 * (1.0 + q2) - g1 * r1.conj() * (1.0 - q4) + q2 * g2 * r2) / (1.0 + q2 + g4);

    let minus_i = Complex64::new(0.0, -1.0);
    let chi3_t = (minus_i / (p.d3 * (1.0 + q2)))
        * ((r1.conj() / p.p1.conj()) * (1.0 / p.p41 + 1.0 / p.p12.conj())
            + r2 / (p.p2 * p.p12.conj())
            + r4 / (p.p4 * p.p41));
    let chi4_t = (minus_i / (p.d4 * (1.0 + q1)))
        * (r1 / (p.p1 * p.p12)
            + (r2.conj() / p.p2.conj()) * (1.0 / p.p32 + 1.0 / p.p12)
            + r3 / (p.p3 * p.p32));

    let mut chi_abs = BTreeMap::new();
    for (j, (width, rr, pj)) in [
        (1usize, (p.width1, r1, p.p1)),
        (2, (p.width2, r2, p.p2)),
        (3, (p.width3, r3, p.p3)),
        (4, (p.width4, r4, p.p4)),
    ] {
        let dn_j = dn[j - 1];
        if normalized {
            if dn_j == 0.0 {
                return Err(NieError::NormalizationUndefined);
            }
            chi_abs.insert(j, width * rr / (pj * dn_j));
        } else {
            chi_abs.insert(j, width * rr / pj);
        }
    }
    Ok(FwmResponse {
        chi4_t,
        chi3_t: Some(chi3_t),
        chi2_t: None,
        chi_abs,
        populations: pack_populations(&n, &r),
        dr: [dr1, dr2, dr3, dr4],
        normalized,
    })
}

/// Strong E₁ and E₃ (each level coupled to exactly one strong field); E₂ and
/// E₄ enter only to first order.
pub fn fwm_two_strong(scheme: &LevelScheme, fields: &FieldSet, v: f64) -> Result<FwmResponse> {
    fwm_two_strong_mode(scheme, fields, v, true)
}

pub fn fwm_two_strong_mode(
    scheme: &LevelScheme,
    fields: &FieldSet,
    v: f64,
    normalized: bool,
) -> Result<FwmResponse> {
    check_raman(scheme)?;
    let p = denominators(scheme, fields, v)?;
    let n = scheme.zero_field_populations()?;
    let dn = zero_field_differences(&n);
    let a1s = fields.intensity(1);
    let a3s = fields.intensity(3);
    let gl = scheme.decay(Level::L);
    let gn = scheme.decay(Level::N);
    let gm = scheme.decay(Level::M);
    let gg = scheme.decay(Level::G);
    let gam_gl = scheme.partial(Level::G, Level::L);
    let gam_gn = scheme.partial(Level::G, Level::N);
    let gam_ml = scheme.partial(Level::M, Level::L);
    let gam_mn = scheme.partial(Level::M, Level::N);

    let k3 = (2.0 * a3s * (gm + gn - gam_mn) / (gm * gn * p.width3)) * p.width3 * p.width3
        / p.p3.norm_sqr();
    let (r, dr1, dr2, dr3, dr4);
    match scheme.topology {
        crate::model::Topology::Open => {
            let k1 = (2.0 * a1s * (gl + gg - gam_gl) / (gl * gg * p.width1)) * p.width1
                * p.width1
                / p.p1.norm_sqr();
            let a1 = gam_gn * gl / (gn * (gl + gg - gam_gl));
            let a2 = gl * (gn - gam_gn) / (gn * (gl + gg - gam_gl));
            let a3 = (gg - gam_gl) / (gl + gg - gam_gl);
            let b1 = gam_ml * gn / (gl * (gm + gn - gam_mn));
            let b2 = (gm - gam_mn) / (gm + gn - gam_mn);
            let b3 = gn * (gl - gam_ml) / (gl * (gm + gn - gam_mn));
            let det = (1.0 + k1) * (1.0 + k3) - a1 * k1 * b1 * k3;
            if det.abs() < 1e-14 {
                return Err(NieError::DegenerateSystem);
            }
            dr1 = ((1.0 + k3) * dn[0] + b1 * k3 * dn[2]) / det;
            dr3 = ((1.0 + k1) * dn[2] + a1 * k1 * dn[0]) / det;
            dr2 = dn[1] - b2 * k3 * dr3 - a2 * k1 * dr1;
            dr4 = dn[3] - a3 * k1 * dr1 - b3 * k3 * dr3;
            let mut rr = BTreeMap::new();
            rr.insert(Level::M, n.n_of(Level::M) + (1.0 - b2) * k3 * dr3);
            rr.insert(Level::G, n.n_of(Level::G) + (1.0 - a3) * k1 * dr1);
            rr.insert(
                Level::N,
                n.n_of(Level::N) - b2 * k3 * dr3 + a1 * k1 * dr1,
            );
            rr.insert(
                Level::L,
                n.n_of(Level::L) + b1 * k3 * dr3 - a3 * k1 * dr1,
            );
            r = rr;
        }
        crate::model::Topology::Closed => {
            // The ground level does not decay; its saturation parameter uses
            // the coherence width of the driven transition instead.
            let k1 = (2.0 * a1s / (p.width1 * gg)) * p.width1 * p.width1 / p.p1.norm_sqr();
            let b = gn / (gm + gn - gam_mn);
            let num3 = dn[2] * (1.0 + k1) + dn[0] * gam_gn * k1 / gn;
            let beta = (1.0 + k3)
                * (1.0 - dn[2] + 2.0 * (n.n_of(Level::L) + n.n_of(Level::M)) * k1)
                + (1.0 + 2.0 * b * k3) * num3;
            if beta.abs() < 1e-14 {
                return Err(NieError::DegenerateSystem);
            }
            let rl = n.n_of(Level::L) * (1.0 + k3) * (1.0 + k1) / beta;
            let rg = (1.0 + k3) * (n.n_of(Level::L) * (1.0 + k1) - dn[0]) / beta;
            let rn =
                (n.n_of(Level::M) * (1.0 + k3) * (1.0 + k1) + num3 * (1.0 + b * k3)) / beta;
            let rm = (n.n_of(Level::M) * (1.0 + k3) * (1.0 + k1) + num3 * b * k3) / beta;
            let mut rr = BTreeMap::new();
            rr.insert(Level::L, rl);
            rr.insert(Level::G, rg);
            rr.insert(Level::N, rn);
            rr.insert(Level::M, rm);
            dr1 = rl - rg;
            dr3 = rn - rm;
            dr2 = rn - rg;
            dr4 = rl - rm;
            r = rr;
        }
    }

    let v1 = a3s / (p.p43 * p.p3.conj());
    let v2 = a3s / (p.p32.conj() * p.p2);
    let v3 = a3s / (p.p32.conj() * p.p3.conj());
    let v4 = a3s / (p.p43 * p.p4);
    let v5 = a3s / (p.p41 * p.d2.conj());
    let v6 = a3s / (p.p43 * p.d2.conj());
    let v7 = a3s / (p.p12.conj() * p.d4.conj());
    let v8 = a3s / (p.p32.conj() * p.d4.conj());
    let g1 = a1s / (p.p41 * p.p1.conj());
    let g2 = a1s / (p.p12.conj() * p.p2);
    let g3 = a1s / (p.p12.conj() * p.p1.conj());
    let g4 = a1s / (p.p41 * p.p4);
    let g5 = a1s / (p.p43 * p.d2.conj());
    let g6 = a1s / (p.p41 * p.d2.conj());
    let g7 = a1s / (p.p32.conj() * p.d4.conj());
    let g8 = a1s / (p.p12.conj() * p.d4.conj());

    let r2 = (dr2 * (1.0 + g7 + v7) - v3 * (1.0 + v7 - g8) * dr3 - g3 * (1.0 + g7 - v8) * dr1)
        / ((1.0 + g2 + v2) + g7 + g2 * (g7 - v8) + v7 + v2 * (v7 - g8));
    let r4 = (dr4 * (1.0 + v5 + g5) - g1 * (1.0 + g5 - v6) * dr1 - v1 * (1.0 + v5 - g6) * dr3)
        / ((1.0 + g4 + v4) + v5 + v4 * (v5 - g6) + g5 + g4 * (g5 - v6));

    let minus_i = Complex64::new(0.0, -1.0);
    let chi2_t = (minus_i / (p.d2 * (1.0 + v5.conj() + g5.conj())))
        * (dr1 / (p.p1 * p.p41.conj())
            + dr3 / (p.p3 * p.p43.conj())
            + (r4.conj() / p.p4.conj()) * (1.0 / p.p41.conj() + 1.0 / p.p43.conj()));
    let chi4_t = (minus_i / (p.d4 * (1.0 + v7.conj() + g7.conj())))
        * (dr1 / (p.p1 * p.p12)
            + dr3 / (p.p3 * p.p32)
            + (r2.conj() / p.p2.conj()) * (1.0 / p.p12 + 1.0 / p.p32));

    let mut chi_abs = BTreeMap::new();
    let entries: [(usize, f64, Complex64, Complex64, f64); 4] = [
        (1, p.width1, Complex64::new(dr1, 0.0), p.p1, dn[0]),
        (2, p.width2, r2, p.p2, dn[1]),
        (3, p.width3, Complex64::new(dr3, 0.0), p.p3, dn[2]),
        (4, p.width4, r4, p.p4, dn[3]),
    ];
    for (j, width, rr, pj, dn_j) in entries {
        if normalized {
            if dn_j == 0.0 {
                return Err(NieError::NormalizationUndefined);
            }
            chi_abs.insert(j, width * rr / (pj * dn_j));
        } else {
            chi_abs.insert(j, width * rr / pj);
        }
    }
    Ok(FwmResponse {
        chi4_t,
        chi3_t: None,
        chi2_t: Some(chi2_t),
        chi_abs,
        populations: pack_populations(&n, &r),
        dr: [dr1, dr2, dr3, dr4],
        normalized,
    })
}

/// Small-signal quantum conversion efficiency of the mixing output over a
/// medium of length `z` at exact phase matching.
///
/// `delta_alpha` is α₃ − α₄ in the printed approximation (the caller may pass
/// the full α₁ + α₂ + α₃ − α₄ instead); the Δα → 0 limit reduces smoothly to
/// the z² law.
pub fn conversion_efficiency(
    chi: Complex64,
    alpha4: f64,
    delta_alpha: f64,
    number_density: f64,
    e1: Complex64,
    e2: Complex64,
    k3: f64,
    k4: f64,
    z: f64,
) -> f64 {
    let amp = 2.0 * std::f64::consts::PI * number_density * (chi * e1 * e2.conj()).norm();
    let half = 0.5 * delta_alpha;
    // f = (exp(-Δα z/2) - 1)/(Δα/2), stable for small arguments.
    let f = if (half * z).abs() < 1e-8 {
        -z * (1.0 - 0.5 * half * z)
    } else {
        ((-half * z).exp() - 1.0) / half
    };
    k3 * k4 * amp * amp * f * f * (-alpha4 * z).exp()
}
