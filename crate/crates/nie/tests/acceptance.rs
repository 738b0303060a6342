//! Acceptance gate: nine numbered criteria, one pass/fail line each.
//!
//! Velocity-averaged quantities are evaluated on the trapezoid reference
//! grid (cutoff 5 v-bar, 4001 nodes); criterion 8 probes how far the
//! 96-node Gauss-Hermite default can be trusted against it.

use std::time::Instant;

use nie::doppler::VelocityGrid;
use nie::fwm;
use nie::model::{
    DriveField, FieldRole, FieldSet, Level, LevelScheme, SchemeKind, Topology,
};
use nie::oracle;
use nie::scenarios::{load_preset, run_scan, run_scan_with_workers, DetuningLock, Preset, Regime, ScanSpec, ScanVariable};
use nie::two_field;
use num_complex::Complex64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const I: Complex64 = Complex64::new(0.0, 1.0);

fn rel_c(a: Complex64, b: Complex64) -> f64 {
    (a - b).norm() / a.norm().max(b.norm()).max(1e-12)
}

fn rel_f(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-12)
}

/// Relative error without an absolute floor, for quantities whose natural
/// magnitude is far below 1 (the chi values carry inverse rate-cubed units).
fn rel_scale_free(a: Complex64, b: Complex64) -> f64 {
    (a - b).norm() / a.norm().max(b.norm())
}

struct Outcome {
    pass: bool,
    detail: String,
}

fn ok(detail: String) -> Outcome {
    Outcome { pass: true, detail }
}

fn fail(detail: String) -> Outcome {
    Outcome { pass: false, detail }
}

/// The four weak-field ratio cases: preset constructor and published value
/// pairs (homogeneous, velocity-averaged).
fn ratio_cases() -> Vec<(Preset, f64, f64)> {
    let down = load_preset("na2_down").unwrap();
    let up = load_preset("na2_up").unwrap();
    vec![
        (down.clone(), 2.5, 231.0),
        (down.inverse_populations().unwrap(), 0.4, 0.13),
        (up.clone(), 2.7, 1450.0),
        (up.inverse_populations().unwrap(), 0.37, 0.24),
    ]
}

fn homogeneous_ratio(preset: &Preset) -> f64 {
    let chi = fwm::perturbative_chi3(&preset.scheme, &preset.fields, 0.0).unwrap();
    (chi.chi3_t / chi.chi4_t).norm_sqr()
}

fn averaged_ratio(preset: &Preset, grid: &VelocityGrid) -> f64 {
    let avg = grid
        .maxwell_average_many(|v| {
            let chi = fwm::perturbative_chi3(&preset.scheme, &preset.fields, v)?;
            Ok(vec![chi.chi3_t, chi.chi4_t])
        })
        .unwrap();
    (avg[0] / avg[1]).norm_sqr()
}

fn criterion1() -> Outcome {
    let t0 = Instant::now();
    let mut details = Vec::new();
    let mut pass = true;
    for (preset, expected, _) in ratio_cases() {
        let r = homogeneous_ratio(&preset);
        let err = rel_f(r, expected);
        pass &= err <= 0.02;
        details.push(format!("{}={:.4} (want {expected}, err {:.2}%)", preset.name, r, 100.0 * err));
    }
    let dt = t0.elapsed().as_secs_f64();
    pass &= dt < 1.0;
    let msg = format!("{}; {:.2}s", details.join(", "), dt);
    if pass { ok(msg) } else { fail(msg) }
}

fn criterion2() -> Outcome {
    let t0 = Instant::now();
    let grid = VelocityGrid::reference_for(1.0);
    let mut details = Vec::new();
    let mut pass = true;
    for (preset, _, expected) in ratio_cases() {
        let r = averaged_ratio(&preset, &grid);
        let err = rel_f(r, expected);
        pass &= err <= 0.10;
        details.push(format!("{}={:.4} (want {expected}, err {:.2}%)", preset.name, r, 100.0 * err));
    }
    let dt = t0.elapsed().as_secs_f64();
    pass &= dt < 10.0;
    let msg = format!("{}; {:.2}s", details.join(", "), dt);
    if pass { ok(msg) } else { fail(msg) }
}

/// The analytic Doppler average holds in the regime it is derived for:
/// purely radiative coherence widths (its width-sum reduction is an identity
/// there) and every width well below the Doppler scale. Scale all rates by
/// 0.3 so max Gamma/(k v-bar) < 0.01 and drop the collisional overrides;
/// pump rates scale along, so the field-free populations are unchanged.
fn doppler_limit_variant(preset: &Preset) -> LevelScheme {
    let mut s = preset.scheme.clone();
    s.coherence_override.clear();
    for v in s.gamma_total.values_mut() {
        *v *= 0.3;
    }
    for v in s.gamma.values_mut() {
        *v *= 0.3;
    }
    for v in s.pump.values_mut() {
        *v *= 0.3;
    }
    s
}

fn direct_average(scheme: &LevelScheme, fields: &FieldSet, grid: &VelocityGrid) -> Complex64 {
    grid.maxwell_average(|v| {
        fwm::perturbative_chi3(scheme, fields, v)
            .map(|c| c.chi4_t)
            .unwrap_or(Complex64::new(f64::NAN, 0.0))
    })
    .unwrap()
}

fn criterion3() -> Outcome {
    let grid = VelocityGrid::reference_for(1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let mut worst = 0.0f64;
    let mut worst_cancel = f64::INFINITY;
    let mut pass = true;
    let mut notes = Vec::new();
    for name in ["na2_down", "na2_up"] {
        let preset = load_preset(name).unwrap();
        let scheme = doppler_limit_variant(&preset);
        let mut fields = preset.fields.clone();
        let k1 = fields.field(1).wavevector;
        let k2 = fields.field(2).wavevector;
        let k3 = fields.field(3).wavevector;
        let wng = scheme.coherence_width(Level::N, Level::G);
        let g1_eff = scheme.coherence_width(Level::L, Level::N) + (k1 / k2 - 1.0) * wng;
        let g3_eff = scheme.coherence_width(Level::G, Level::M) + (k3 / k2 - 1.0) * wng;
        let pops = scheme.zero_field_populations().unwrap();
        let (n_g, n_n) = (pops.n_of(Level::G), pops.n_of(Level::N));
        // The resonance point plus 20 random Raman-band triples within half
        // a Doppler width.
        let mut triples = vec![(0.0, 0.0, 0.0)];
        for _ in 0..20 {
            let o2 = rng.gen_range(-0.5..0.5) * k2;
            let o1 = k1 / k2 * o2 + rng.gen_range(-2.0..2.0) * g1_eff;
            let o3 = k3 / k2 * o2 + rng.gen_range(-2.0..2.0) * g3_eff;
            triples.push((o1, o2, o3));
        }
        for (o1, o2, o3) in triples {
            fields.field_mut(1).detuning = o1;
            fields.field_mut(2).detuning = o2;
            fields.field_mut(3).detuning = o3;
            fields.field_mut(4).detuning = o1 - o2 + o3;
            let direct = direct_average(&scheme, &fields, &grid);
            let analytic = fwm::analytic_averaged_chi3(&scheme, &fields, 1.0, n_g, n_n).unwrap();
            assert!(!analytic.validity_warning, "variant must sit inside the validity regime");
            worst = worst.max(rel_scale_free(analytic.value, direct));
        }
        // Interference cancellation: re-pump so both excited lower states sit
        // at the baseline's N_n (the g -> n feed is compensated, keeping the
        // residual population scale fixed).
        let mut equal = scheme.clone();
        let x = pops.n_of(Level::N);
        equal.pump.insert(Level::N, x * (equal.decay(Level::N) - equal.partial(Level::G, Level::N)));
        equal.pump.insert(Level::G, equal.decay(Level::G) * x);
        let pe = equal.zero_field_populations().unwrap();
        assert!((pe.n_of(Level::G) - pe.n_of(Level::N)).abs() < 1e-12);
        for f in 1..=4 {
            fields.field_mut(f).detuning = 0.0;
        }
        let base = direct_average(&scheme, &fields, &grid).norm();
        let cancelled = direct_average(&equal, &fields, &grid).norm();
        worst_cancel = worst_cancel.min(base / cancelled);
        notes.push(format!("{name}: cancel x{:.0}", base / cancelled));
    }
    pass &= worst <= 0.05 && worst_cancel >= 20.0;
    let msg = format!(
        "worst analytic-vs-direct err {:.2}% (tol 5%), {}",
        100.0 * worst,
        notes.join(", ")
    );
    if pass { ok(msg) } else { fail(msg) }
}

// ---------------------------------------------------------------------------
// Criterion 4: random-draw equivalence against the density-matrix oracle.
// ---------------------------------------------------------------------------

fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    rng.gen_range(lo..hi)
}

fn rand_amp(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> Complex64 {
    Complex64::from_polar(uniform(rng, lo, hi), uniform(rng, 0.0, 6.28))
}

fn draw_three_level(kind: SchemeKind, topo: Topology, rng: &mut ChaCha8Rng, weak_probe: bool) -> (LevelScheme, FieldSet) {
    let mut s = LevelScheme::new(kind, topo);
    let g = |rng: &mut ChaCha8Rng| uniform(rng, 1.0, 10.0);
    let (up4, aux) = (Level::M, kind.auxiliary_field().unwrap());
    let (_, upi) = kind.transition(aux).unwrap();
    let gm = g(rng);
    let gi_total = g(rng);
    let gl = g(rng);
    match (kind, topo) {
        (SchemeKind::V, Topology::Open) => {
            s.gamma_total.insert(Level::L, gl);
            s.gamma_total.insert(Level::M, gm);
            s.gamma_total.insert(Level::G, gi_total);
            s.gamma.insert((Level::M, Level::L), uniform(rng, 0.0, 1.0) * gm);
            s.gamma.insert((Level::G, Level::L), uniform(rng, 0.0, 1.0) * gi_total);
        }
        (SchemeKind::V, Topology::Closed) => {
            s.gamma_total.insert(Level::M, gm);
            s.gamma_total.insert(Level::G, gi_total);
            s.gamma.insert((Level::M, Level::L), gm);
            s.gamma.insert((Level::G, Level::L), gi_total);
        }
        (SchemeKind::Lambda, Topology::Open) => {
            s.gamma_total.insert(Level::L, gl);
            s.gamma_total.insert(Level::N, g(rng));
            s.gamma_total.insert(Level::M, gm);
            s.gamma.insert((Level::M, Level::L), uniform(rng, 0.0, 0.5) * gm);
            s.gamma.insert((Level::M, Level::N), uniform(rng, 0.0, 0.5) * gm);
        }
        (SchemeKind::Lambda, Topology::Closed) => {
            let gn = g(rng);
            let g3 = uniform(rng, 0.0, 0.5) * gm;
            s.gamma_total.insert(Level::N, gn);
            s.gamma_total.insert(Level::M, gm);
            s.gamma.insert((Level::M, Level::N), g3);
            s.gamma.insert((Level::M, Level::L), gm - g3);
            s.gamma.insert((Level::N, Level::L), gn);
        }
        (SchemeKind::H, Topology::Open) => {
            s.gamma_total.insert(Level::L, gl);
            s.gamma_total.insert(Level::M, gm);
            s.gamma_total.insert(Level::F, gi_total);
            s.gamma.insert((Level::M, Level::L), uniform(rng, 0.0, 1.0) * gm);
            s.gamma.insert((Level::F, Level::M), uniform(rng, 0.0, 1.0) * gi_total);
        }
        (SchemeKind::H, Topology::Closed) => {
            let g2 = uniform(rng, 0.0, 1.0) * gi_total;
            s.gamma_total.insert(Level::M, gm);
            s.gamma_total.insert(Level::F, gi_total);
            s.gamma.insert((Level::M, Level::L), gm);
            s.gamma.insert((Level::F, Level::M), g2);
            s.gamma.insert((Level::F, Level::L), gi_total - g2);
        }
        _ => unreachable!(),
    }
    match topo {
        Topology::Open => {
            for &lv in kind.levels() {
                s.pump.insert(lv, uniform(rng, 0.1, 2.0));
            }
        }
        Topology::Closed => {
            s.pump.insert(up4, uniform(rng, 0.0, 2.0));
            s.pump.insert(upi, uniform(rng, 0.0, 2.0));
        }
    }
    let mut fields = FieldSet::default();
    let amp4 = if weak_probe {
        Complex64::from_polar(1e-4, uniform(rng, 0.0, 6.28))
    } else {
        rand_amp(rng, 0.5, 5.0)
    };
    fields.set(4, DriveField { rabi: amp4, detuning: uniform(rng, -10.0, 10.0), wavevector: 0.0, role: FieldRole::Strong });
    fields.set(aux, DriveField { rabi: rand_amp(rng, 0.5, 5.0), detuning: uniform(rng, -10.0, 10.0), wavevector: 0.0, role: FieldRole::Strong });
    (s, fields)
}

fn draw_raman(topo: Topology, rng: &mut ChaCha8Rng) -> LevelScheme {
    let mut s = LevelScheme::new(SchemeKind::RamanFwm, topo);
    let g = |rng: &mut ChaCha8Rng| uniform(rng, 1.0, 10.0);
    match topo {
        Topology::Open => {
            let (gl, gn, gm, gg) = (g(rng), g(rng), g(rng), g(rng));
            s.gamma_total.insert(Level::L, gl);
            s.gamma_total.insert(Level::N, gn);
            s.gamma_total.insert(Level::M, gm);
            s.gamma_total.insert(Level::G, gg);
            s.gamma.insert((Level::G, Level::L), uniform(rng, 0.0, 0.45) * gg);
            s.gamma.insert((Level::G, Level::N), uniform(rng, 0.0, 0.45) * gg);
            s.gamma.insert((Level::M, Level::L), uniform(rng, 0.0, 0.45) * gm);
            s.gamma.insert((Level::M, Level::N), uniform(rng, 0.0, 0.45) * gm);
            for &lv in SchemeKind::RamanFwm.levels() {
                s.pump.insert(lv, uniform(rng, 0.1, 2.0));
            }
        }
        Topology::Closed => {
            let (gn, gm, gg) = (g(rng), g(rng), g(rng));
            let xg = uniform(rng, 0.1, 0.9);
            let xm = uniform(rng, 0.1, 0.9);
            s.gamma_total.insert(Level::N, gn);
            s.gamma_total.insert(Level::M, gm);
            s.gamma_total.insert(Level::G, gg);
            s.gamma.insert((Level::G, Level::N), xg * gg);
            s.gamma.insert((Level::G, Level::L), (1.0 - xg) * gg);
            s.gamma.insert((Level::M, Level::N), xm * gm);
            s.gamma.insert((Level::M, Level::L), (1.0 - xm) * gm);
            s.gamma.insert((Level::N, Level::L), gn);
            for lv in [Level::N, Level::M, Level::G] {
                s.pump.insert(lv, uniform(rng, 0.05, 1.5));
            }
        }
    }
    s
}

/// Random field set on the mixing loop: detunings obey the frequency-loop
/// closure, the listed fields carry a strong amplitude, all others are off.
fn raman_fields(rng: &mut ChaCha8Rng, strong: &[usize], amp: f64) -> FieldSet {
    let o1 = uniform(rng, -8.0, 8.0);
    let o2 = uniform(rng, -8.0, 8.0);
    let o3 = uniform(rng, -8.0, 8.0);
    let dets = [o1, o2, o3, o1 - o2 + o3];
    let mut fields = FieldSet::default();
    for j in 1..=4 {
        let rabi = if strong.contains(&j) {
            rand_amp(rng, 0.5, 1.0) * amp
        } else {
            Complex64::new(0.0, 0.0)
        };
        let role = if strong.contains(&j) { FieldRole::Strong } else { FieldRole::Weak };
        fields.set(j, DriveField { rabi, detuning: dets[j - 1], wavevector: 0.0, role });
    }
    fields
}

const EPS: f64 = 1e-7;

fn raman_transition(j: usize) -> (Level, Level) {
    SchemeKind::RamanFwm.transition(j).unwrap()
}

/// Absorption-index extraction from an oracle solve:
/// chi_j / chi_j0 = rho_(up,lo) * Gamma_j / (-i G_j dn_j).
fn oracle_chi_abs(scheme: &LevelScheme, ss: &oracle::SteadyState, j: usize, g: Complex64) -> Complex64 {
    let (lo, up) = scheme.kind.transition(j).unwrap();
    let n = scheme.zero_field_populations().unwrap();
    let dn = n.n_of(lo) - n.n_of(up);
    ss.coherence(up, lo) * scheme.coherence_width(lo, up) / (-I * g * dn)
}

fn check_two_field_draws(kind: SchemeKind, topo: Topology, rng: &mut ChaCha8Rng, draws: usize) -> Result<f64, String> {
    let aux = kind.auxiliary_field().unwrap();
    let (lo4, up4) = kind.transition(4).unwrap();
    let (loi, upi) = kind.transition(aux).unwrap();
    let mut worst = 0.0f64;
    for t in 0..draws {
        let weak = t % 2 == 0;
        let (scheme, fields) = draw_three_level(kind, topo, rng, weak);
        let c = two_field::susceptibilities(&scheme, &fields, 0.0).map_err(|e| e.to_string())?;
        let ss = oracle::steady_state_linear(&scheme, &fields, 0.0).map_err(|e| e.to_string())?;
        let chi4_o = oracle_chi_abs(&scheme, &ss, 4, fields.field(4).rabi);
        let mut chii_o = oracle_chi_abs(&scheme, &ss, aux, fields.field(aux).rabi);
        if kind == SchemeKind::H {
            chii_o = chii_o.conj();
        }
        let dr4_o = ss.population(lo4) - ss.population(up4);
        let dri_o = ss.population(loi) - ss.population(upi);
        worst = worst
            .max(rel_c(chi4_o, c.chi4))
            .max(rel_c(chii_o, c.chii))
            .max(rel_f(dr4_o, c.dr4))
            .max(rel_f(dri_o, c.dri));
    }
    Ok(worst)
}

fn with_probe(fields: &FieldSet, j: usize) -> FieldSet {
    let mut f = fields.clone();
    f.field_mut(j).rabi = Complex64::new(EPS, 0.0);
    f
}

fn check_cpt_draws(topo: Topology, rng: &mut ChaCha8Rng, draws: usize) -> Result<f64, String> {
    let mut worst = 0.0f64;
    for _ in 0..draws {
        let scheme = draw_raman(topo, rng);
        let fields = raman_fields(rng, &[1, 2], 3.0);
        let c = fwm::fwm_cpt(&scheme, &fields, 0.0).map_err(|e| e.to_string())?;
        let (g1, g2) = (fields.field(1).rabi, fields.field(2).rabi);
        let ss = oracle::steady_state_linear(&scheme, &fields, 0.0).map_err(|e| e.to_string())?;
        for &lv in scheme.levels() {
            worst = worst.max((ss.population(lv) - c.populations.r_of(lv)).abs());
        }
        for j in [1usize, 2] {
            let g = if j == 1 { g1 } else { g2 };
            worst = worst.max(rel_c(oracle_chi_abs(&scheme, &ss, j, g), c.chi_abs[&j]));
        }
        let s3 = oracle::steady_state_linear(&scheme, &with_probe(&fields, 3), 0.0).map_err(|e| e.to_string())?;
        worst = worst.max(rel_c(oracle_chi_abs(&scheme, &s3, 3, EPS.into()), c.chi_abs[&3]));
        let (lo4, up4) = raman_transition(4);
        let (lo3, up3) = raman_transition(3);
        let chi4t_o = -s3.coherence(up4, lo4) / (g1 * g2.conj() * EPS);
        worst = worst.max(rel_c(chi4t_o, c.chi4_t));
        let s4 = oracle::steady_state_linear(&scheme, &with_probe(&fields, 4), 0.0).map_err(|e| e.to_string())?;
        worst = worst.max(rel_c(oracle_chi_abs(&scheme, &s4, 4, EPS.into()), c.chi_abs[&4]));
        let chi3t_o = -s4.coherence(up3, lo3) / (g1.conj() * g2 * EPS);
        worst = worst.max(rel_c(chi3t_o, c.chi3_t.unwrap()));
    }
    Ok(worst)
}

fn check_two_strong_draws(topo: Topology, rng: &mut ChaCha8Rng, draws: usize) -> Result<f64, String> {
    let mut worst = 0.0f64;
    for _ in 0..draws {
        let scheme = draw_raman(topo, rng);
        let fields = raman_fields(rng, &[1, 3], 3.0);
        let c = fwm::fwm_two_strong(&scheme, &fields, 0.0).map_err(|e| e.to_string())?;
        let (g1, g3) = (fields.field(1).rabi, fields.field(3).rabi);
        let ss = oracle::steady_state_linear(&scheme, &fields, 0.0).map_err(|e| e.to_string())?;
        for &lv in scheme.levels() {
            worst = worst.max((ss.population(lv) - c.populations.r_of(lv)).abs());
        }
        worst = worst.max(rel_c(oracle_chi_abs(&scheme, &ss, 1, g1), c.chi_abs[&1]));
        worst = worst.max(rel_c(oracle_chi_abs(&scheme, &ss, 3, g3), c.chi_abs[&3]));
        let (lo4, up4) = raman_transition(4);
        let (lo2, up2) = raman_transition(2);
        let s2 = oracle::steady_state_linear(&scheme, &with_probe(&fields, 2), 0.0).map_err(|e| e.to_string())?;
        worst = worst.max(rel_c(oracle_chi_abs(&scheme, &s2, 2, EPS.into()), c.chi_abs[&2]));
        let chi4t_o = -s2.coherence(up4, lo4) / (g1 * EPS * g3);
        worst = worst.max(rel_c(chi4t_o, c.chi4_t));
        let s4 = oracle::steady_state_linear(&scheme, &with_probe(&fields, 4), 0.0).map_err(|e| e.to_string())?;
        worst = worst.max(rel_c(oracle_chi_abs(&scheme, &s4, 4, EPS.into()), c.chi_abs[&4]));
        let chi2t_o = -s4.coherence(up2, lo2) / (g1 * g3 * EPS);
        worst = worst.max(rel_c(chi2t_o, c.chi2_t.unwrap()));
    }
    Ok(worst)
}

fn check_perturbative_draws(topo: Topology, rng: &mut ChaCha8Rng, draws: usize) -> Result<f64, String> {
    let mut worst = 0.0f64;
    for _ in 0..draws {
        let scheme = draw_raman(topo, rng);
        let mut fields = raman_fields(rng, &[], 0.0);
        for j in 1..=4 {
            fields.field_mut(j).rabi = Complex64::from_polar(3e-4, uniform(rng, 0.0, 6.28));
        }
        let pert = fwm::perturbative_chi3(&scheme, &fields, 0.0).map_err(|e| e.to_string())?;
        let (g1, g2) = (fields.field(1).rabi, fields.field(2).rabi);
        let (g3, g4) = (fields.field(3).rabi, fields.field(4).rabi);
        let (lo4, up4) = raman_transition(4);
        let (lo3, up3) = raman_transition(3);
        let mut f = fields.clone();
        f.field_mut(4).rabi = Complex64::new(0.0, 0.0);
        let ss = oracle::steady_state_linear(&scheme, &f, 0.0).map_err(|e| e.to_string())?;
        worst = worst.max(rel_c(-ss.coherence(up4, lo4) / (g1 * g2.conj() * g3), pert.chi4_t));
        let mut f = fields.clone();
        f.field_mut(3).rabi = Complex64::new(0.0, 0.0);
        let ss = oracle::steady_state_linear(&scheme, &f, 0.0).map_err(|e| e.to_string())?;
        worst = worst.max(rel_c(-ss.coherence(up3, lo3) / (g1.conj() * g2 * g4), pert.chi3_t));
    }
    Ok(worst)
}

fn criterion4() -> Outcome {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst = 0.0f64;
    let mut notes = Vec::new();
    for kind in [SchemeKind::V, SchemeKind::Lambda, SchemeKind::H] {
        for topo in [Topology::Open, Topology::Closed] {
            match check_two_field_draws(kind, topo, &mut rng, 200) {
                Ok(w) => {
                    notes.push(format!("{}/{} {:.1e}", kind.name(), topo.name(), w));
                    worst = worst.max(w);
                }
                Err(e) => return fail(format!("two-field {}/{} draw failed: {e}", kind.name(), topo.name())),
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for topo in [Topology::Open, Topology::Closed] {
        match check_cpt_draws(topo, &mut rng, 60) {
            Ok(w) => {
                notes.push(format!("cpt/{} {:.1e}", topo.name(), w));
                worst = worst.max(w);
            }
            Err(e) => return fail(format!("cpt {} draw failed: {e}", topo.name())),
        }
        match check_two_strong_draws(topo, &mut rng, 60) {
            Ok(w) => {
                notes.push(format!("two_strong/{} {:.1e}", topo.name(), w));
                worst = worst.max(w);
            }
            Err(e) => return fail(format!("two-strong {} draw failed: {e}", topo.name())),
        }
        match check_perturbative_draws(topo, &mut rng, 60) {
            Ok(w) => {
                notes.push(format!("perturbative/{} {:.1e}", topo.name(), w));
                worst = worst.max(w);
            }
            Err(e) => return fail(format!("perturbative {} draw failed: {e}", topo.name())),
        }
    }
    let dt = t0.elapsed().as_secs_f64();
    let pass = worst <= 1e-5 && dt < 300.0;
    let msg = format!("worst rel err {:.2e} (tol 1e-5) [{}]; {:.1}s", worst, notes.join(", "), dt);
    if pass { ok(msg) } else { fail(msg) }
}

fn criterion5() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut worst_sum = 0.0f64;
    let mut worst_herm = 0.0f64;
    let mut worst_trace = 0.0f64;
    for kind in [SchemeKind::V, SchemeKind::Lambda, SchemeKind::H] {
        for topo in [Topology::Open, Topology::Closed] {
            for t in 0..40 {
                let (scheme, fields) = draw_three_level(kind, topo, &mut rng, t % 2 == 0);
                let c = two_field::susceptibilities_unnormalized(&scheme, &fields, 0.0).unwrap();
                let ss = oracle::steady_state_linear(&scheme, &fields, 0.0).unwrap();
                worst_herm = worst_herm.max(ss.hermiticity_defect());
                if topo == Topology::Closed {
                    worst_sum = worst_sum.max((c.populations.r_sum() - 1.0).abs());
                    worst_trace = worst_trace.max((ss.trace() - 1.0).abs());
                }
            }
        }
    }
    for t in 0..40 {
        let scheme = draw_raman(Topology::Closed, &mut rng);
        let fields = raman_fields(&mut rng, if t % 2 == 0 { &[1, 2] } else { &[1, 3] }, 3.0);
        let c = if t % 2 == 0 {
            fwm::fwm_cpt(&scheme, &fields, 0.0).unwrap()
        } else {
            fwm::fwm_two_strong(&scheme, &fields, 0.0).unwrap()
        };
        worst_sum = worst_sum.max((c.populations.r_sum() - 1.0).abs());
        let ss = oracle::steady_state_linear(&scheme, &fields, 0.0).unwrap();
        worst_herm = worst_herm.max(ss.hermiticity_defect());
        worst_trace = worst_trace.max((ss.trace() - 1.0).abs());
    }
    let pass = worst_sum <= 1e-12 && worst_herm <= 1e-10 && worst_trace <= 1e-10;
    let msg = format!(
        "closed sum-rule defect {:.1e} (tol 1e-12), oracle hermiticity {:.1e} / trace {:.1e} (tol 1e-10)",
        worst_sum, worst_herm, worst_trace
    );
    if pass { ok(msg) } else { fail(msg) }
}

/// Velocity-averaged gain scan of a driven-plus-probe preset: returns
/// (y4 at the alpha4 minimum, min alpha4, averaged dr4 there).
fn gain_scan(preset: &Preset, grid: &VelocityGrid) -> (f64, f64, f64) {
    let table = run_scan(preset, &preset.scan, grid, Regime::TwoField).unwrap();
    let alpha = table.column_values("alpha4").unwrap();
    let dr4 = table.column_values("dr4").unwrap();
    let ys = table.column_values(&preset.scan.variable.column()).unwrap();
    let (imin, amin) = alpha
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .map(|(i, &a)| (i, a))
        .unwrap();
    (ys[imin], amin, dr4[imin])
}

fn criterion6() -> Outcome {
    let grid = VelocityGrid::reference_for(1.0);
    let ne = load_preset("ne_v_open_fig2").unwrap();
    let (y_ne, a_ne, dr_ne) = gain_scan(&ne, &grid);
    // No saturated inversion at the minimum: the averaged lower-level excess
    // r_l - r_m must stay non-negative.
    let ne_pass = a_ne < -0.01 && dr_ne >= 0.0;
    let na = load_preset("na_closed_fig3").unwrap();
    let (y_na, a_na, dr_na) = gain_scan(&na, &grid);
    let na_pass = (-1.0..=-0.25).contains(&a_na) && dr_na >= 0.0;
    let msg = format!(
        "ne_v_open_fig2: min alpha4 = {a_ne:+.3} at y4 = {y_ne:.0} (need < -0.01, dr4 = {dr_ne:+.3}); \
         na_closed_fig3: min alpha4 = {a_na:+.3} at y4 = {y_na:.0} (need in [-1.0, -0.25], dr4 = {dr_na:+.3})"
    );
    if ne_pass && na_pass {
        ok(msg)
    } else {
        fail(format!(
            "{msg} -- the neon-like open preset has no velocity-averaged gain window: with \
             field-free populations 100:50:85 the pair-saturated average of the driven pair \
             (~0.406 of the total) stays above the probe's upper level (0.362) for every \
             velocity class, so the averaged ratio stays above +0.27 at any drive \
             strength; only the homogeneous (single-velocity) response shows \
             inversionless gain there"
        ))
    }
}

// ---------------------------------------------------------------------------
// Criterion 7: tuning-curve properties of the mixing output.
// ---------------------------------------------------------------------------

fn refine_peak(ys: &[f64], vals: &[f64]) -> f64 {
    let imax = vals
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .map(|(i, _)| i)
        .unwrap();
    if imax == 0 || imax == vals.len() - 1 {
        return ys[imax];
    }
    let (a, b, c) = (vals[imax - 1], vals[imax], vals[imax + 1]);
    let denom = a - 2.0 * b + c;
    if denom.abs() < 1e-300 {
        return ys[imax];
    }
    ys[imax] + 0.5 * (a - c) / denom * (ys[1] - ys[0])
}

/// Peak position (in y3 units) of the averaged |chi4~|^2 tuning curve at a
/// fixed driving detuning y1, with the second driving field locked to the
/// first by the wavevector ratio.
fn mixing_peak(
    preset: &Preset,
    regime: Regime,
    grid: &VelocityGrid,
    y1: f64,
    y3_range: (f64, f64),
    points: usize,
) -> f64 {
    let mut fields = preset.fields.clone();
    let w1 = preset.scheme.transition_width(1);
    let w3 = preset.scheme.transition_width(3);
    let k1 = fields.field(1).wavevector;
    let k2 = fields.field(2).wavevector;
    let o1 = y1 * w1;
    let o2 = k2 / k1 * o1;
    fields.field_mut(1).detuning = o1;
    fields.field_mut(2).detuning = o2;
    let ys: Vec<f64> = (0..points)
        .map(|i| y3_range.0 + (y3_range.1 - y3_range.0) * i as f64 / (points as f64 - 1.0))
        .collect();
    let vals: Vec<f64> = ys
        .iter()
        .map(|&y3| {
            fields.field_mut(3).detuning = y3 * w3;
            fields.field_mut(4).detuning = o1 - o2 + y3 * w3;
            let f = fields.clone();
            grid.maxwell_average(|v| {
                let r = match regime {
                    Regime::FwmCpt => fwm::fwm_cpt_mode(&preset.scheme, &f, v, false),
                    Regime::FwmTwoStrong => fwm::fwm_two_strong_mode(&preset.scheme, &f, v, false),
                    _ => unreachable!(),
                };
                r.map(|r| r.chi4_t).unwrap_or(Complex64::new(f64::NAN, 0.0))
            })
            .unwrap()
            .norm_sqr()
        })
        .collect();
    refine_peak(&ys, &vals)
}

/// 7a: two-strong-field slope of the peak over the Doppler interior,
/// in the scaled figure units (y3 per y1).
fn slope_two_strong(grid: &VelocityGrid) -> f64 {
    let mut p = load_preset("na2_up").unwrap();
    p.set_s(1, 2000.0);
    p.set_s(3, 2100.0);
    let pk20 = mixing_peak(&p, Regime::FwmTwoStrong, grid, 20.0, (0.0, 60.0), 121);
    let pk40 = mixing_peak(&p, Regime::FwmTwoStrong, grid, 40.0, (0.0, 60.0), 121);
    (pk40 - pk20) / 20.0
}

fn criterion7() -> Outcome {
    let grid = VelocityGrid::reference_for(1.0);
    // (a) up-conversion, two strong fields: the peak follows the driving
    // detuning with slope about 0.75 across the Doppler interior.
    let slope_a = slope_two_strong(&grid);
    let pass_a = (slope_a - 0.75).abs() <= 0.15;
    // (b) down-conversion, trapping regime: the peak stays locked near the
    // line center; its displacement is a small fraction of the applied
    // two-photon shift.
    let mut p = load_preset("na2_down").unwrap();
    p.set_s(1, 1000.0);
    p.set_s(2, 2000.0);
    let pk0 = mixing_peak(&p, Regime::FwmCpt, &grid, 0.0, (-30.0, 30.0), 121);
    let pk50 = mixing_peak(&p, Regime::FwmCpt, &grid, 50.0, (-30.0, 30.0), 121);
    let w1 = p.scheme.transition_width(1);
    let w3 = p.scheme.transition_width(3);
    let k1 = p.fields.field(1).wavevector;
    let k3 = p.fields.field(3).wavevector;
    let applied_shift = k3 / k1 * 50.0 * w1 / w3;
    let lock_ratio = (pk50 - pk0).abs() / applied_shift;
    let pass_b = lock_ratio < 0.20;
    // (c) up-conversion, trapping regime at moderate drive: near half a
    // Doppler width the peak detaches and tracks with a slope approaching
    // half the wavevector ratio.
    let mut p = load_preset("na2_up").unwrap();
    p.set_s(1, 150.0);
    p.set_s(2, 350.0);
    let k1 = p.fields.field(1).wavevector;
    let k3 = p.fields.field(3).wavevector;
    let w1 = p.scheme.transition_width(1);
    let w3 = p.scheme.transition_width(3);
    let y1s: Vec<f64> = (0..8).map(|i| 40.0 + 5.0 * i as f64).collect();
    let peaks: Vec<f64> = y1s
        .iter()
        .map(|&y1| mixing_peak(&p, Regime::FwmCpt, &grid, y1, (0.0, 80.0), 161))
        .collect();
    let max_slope = peaks
        .windows(2)
        .map(|w| ((w[1] - w[0]) / 5.0 * w3 / w1).abs())
        .fold(0.0f64, f64::max);
    let target_c = 0.5 * k3 / k1;
    let pass_c = (max_slope - target_c).abs() <= 0.2;
    let msg = format!(
        "two-strong slope {slope_a:.3} (want 0.75 +/- 0.15); trapping-peak lock ratio {lock_ratio:.3} \
         (want < 0.20); variable slope max {max_slope:.3} (want 0.5 k3/k1 = {target_c:.3} +/- 0.2)"
    );
    if pass_a && pass_b && pass_c { ok(msg) } else { fail(msg) }
}

fn criterion8() -> Outcome {
    let gh = VelocityGrid::gauss_hermite(96, 1.0).unwrap();
    let gh2 = VelocityGrid::gauss_hermite(192, 1.0).unwrap();
    let tr = VelocityGrid::reference_for(1.0);
    let tr2 = VelocityGrid::trapezoid(8001, 5.0, 1.0).unwrap();
    let mut failures = Vec::new();
    let mut notes = Vec::new();
    // Criterion 1 involves no quadrature; criteria 2, 3, 6, 7 are re-read on
    // the 96-node Gauss-Hermite default and compared within their own
    // tolerances against the trapezoid reference.
    for (preset, _, _) in ratio_cases() {
        let r_gh = averaged_ratio(&preset, &gh);
        let r_tr = averaged_ratio(&preset, &tr);
        let r_tr2 = averaged_ratio(&preset, &tr2);
        let r_gh2 = averaged_ratio(&preset, &gh2);
        if rel_f(r_gh, r_tr) > 0.10 {
            failures.push(format!(
                "c2 {}: GH-96 {:.3} vs trapezoid {:.3}",
                preset.name, r_gh, r_tr
            ));
        }
        if rel_f(r_tr, r_tr2) > 1e-6 {
            failures.push(format!("c2 {}: trapezoid doubling shift {:.1e}", preset.name, rel_f(r_tr, r_tr2)));
        } else {
            notes.push(format!("trap doubling {} {:.1e}", preset.name, rel_f(r_tr, r_tr2)));
        }
        if rel_f(r_gh, r_gh2) > 1e-6 {
            failures.push(format!("c2 {}: GH doubling shift {:.1e}", preset.name, rel_f(r_gh, r_gh2)));
        }
    }
    // Criterion 3 representative point on the default grid.
    let preset = load_preset("na2_down").unwrap();
    let scheme = doppler_limit_variant(&preset);
    let pops = scheme.zero_field_populations().unwrap();
    let direct_gh = direct_average(&scheme, &preset.fields, &gh);
    let analytic = fwm::analytic_averaged_chi3(&scheme, &preset.fields, 1.0, pops.n_of(Level::G), pops.n_of(Level::N))
        .unwrap()
        .value;
    if rel_scale_free(analytic, direct_gh) > 0.05 {
        failures.push(format!("c3 na2_down: GH-96 direct-average err {:.0}%", 100.0 * rel_scale_free(analytic, direct_gh)));
    }
    // Criterion 6 sodium leg on the default grid.
    let na = load_preset("na_closed_fig3").unwrap();
    let (_, a_gh, _) = gain_scan(&na, &gh);
    if !(-1.0..=-0.25).contains(&a_gh) {
        failures.push(format!("c6 na_closed_fig3: GH-96 min alpha4 = {a_gh:+.3}"));
    }
    // Criterion 7a on the default grid.
    let slope_gh = slope_two_strong(&gh);
    if (slope_gh - 0.75).abs() > 0.15 {
        failures.push(format!("c7a: GH-96 slope {slope_gh:.3}"));
    }
    if failures.is_empty() {
        ok(format!("all grid cross-checks within tolerance; {}", notes.join(", ")))
    } else {
        fail(format!(
            "{} -- the 96-node Gauss-Hermite rule cannot resolve the resonant velocity \
             structures (width Gamma/(k v-bar) ~ 0.02 against a central node spacing of \
             ~0.23 v-bar), so every narrow-structure average disagrees with the trapezoid \
             reference; the reference grid is the one the rest of the suite runs on \
             [{}]",
            failures.join("; "),
            notes.join(", ")
        ))
    }
}

fn criterion9() -> Outcome {
    let grid = VelocityGrid::default_for(1.0);
    let mut p = load_preset("na2_down").unwrap();
    p.set_s(1, 1000.0);
    p.set_s(2, 2000.0);
    let scan = ScanSpec {
        variable: ScanVariable::Omega(3),
        from: -40.0,
        to: 40.0,
        points: 81,
        locks: vec![DetuningLock { target: 2, source: 1, scale: None }],
    };
    let mut all_equal = true;
    let mut details = Vec::new();
    for (preset, scan, regime) in [
        (p, scan, Regime::FwmCpt),
        (
            load_preset("ne_v_open_fig2").unwrap(),
            ScanSpec { variable: ScanVariable::Omega(4), from: 300.0, to: 700.0, points: 101, locks: vec![] },
            Regime::TwoField,
        ),
    ] {
        let base = run_scan_with_workers(&preset, &scan, &grid, regime, 1)
            .unwrap()
            .to_delimited(',');
        for workers in [4usize, 16] {
            let out = run_scan_with_workers(&preset, &scan, &grid, regime, workers)
                .unwrap()
                .to_delimited(',');
            let same = out == base;
            all_equal &= same;
            if !same {
                details.push(format!("{} with {workers} workers diverged", preset.name));
            }
        }
    }
    let msg = if details.is_empty() {
        "byte-identical output for 1, 4 and 16 workers on both scan regimes".to_string()
    } else {
        details.join("; ")
    };
    if all_equal { ok(msg) } else { fail(msg) }
}

#[test]
fn acceptance() {
    let criteria: Vec<(usize, &str, fn() -> Outcome)> = vec![
        (1, "homogeneous weak-field ratios", criterion1),
        (2, "velocity-averaged weak-field ratios", criterion2),
        (3, "analytic Doppler average vs direct quadrature", criterion3),
        (4, "oracle equivalence on random draws", criterion4),
        (5, "conservation laws", criterion5),
        (6, "inversionless-gain reproduction", criterion6),
        (7, "mixing tuning-curve properties", criterion7),
        (8, "quadrature robustness", criterion8),
        (9, "worker-count determinism", criterion9),
    ];
    let mut all_pass = true;
    let mut lines = Vec::new();
    for (idx, name, run) in criteria {
        let outcome = run();
        let verdict = if outcome.pass { "PASS" } else { "FAIL" };
        let line = format!("criterion {idx} ({name}): {verdict} -- {}", outcome.detail);
        eprintln!("{line}");
        lines.push(line);
        all_pass &= outcome.pass;
    }
    assert!(
        all_pass,
        "acceptance criteria failed:\n{}",
        lines.join("\n")
    );
}
