//! Named parameter presets and scan recipes.
//!
//! A [`Preset`] bundles a level scheme, default fields (wavevectors stored as
//! k·v̄ products with v̄ = 1, i.e. detunings and Doppler widths share the same
//! s⁻¹ scale), per-field intensity units for the dimensionless saturation
//! parameters S_j, and a default scan. Presets serialize to a key = value
//! text format and round-trip exactly.
//!
//! [`run_scan`] evaluates one of the closed-form regimes over a scan with
//! detuning locks applied and Maxwell averaging per point; scan points are
//! independent work items assembled in scan order, so the output is
//! deterministic for any worker count.

use std::collections::BTreeMap;

use num_complex::Complex64;

use crate::doppler::VelocityGrid;
use crate::error::{NieError, Result};
use crate::fwm;
use crate::model::{
    DriveField, FieldRole, FieldSet, Level, LevelScheme, SchemeKind, Topology,
};
use crate::two_field;

/// Scan variable: a detuning (in units of its transition width), a saturation
/// parameter, or the reduced velocity for population-slice output.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScanVariable {
    Omega(usize),
    S(usize),
    VelocitySlice,
}

impl ScanVariable {
    pub fn name(self) -> String {
        match self {
            ScanVariable::Omega(j) => format!("omega{j}"),
            ScanVariable::S(j) => format!("s{j}"),
            ScanVariable::VelocitySlice => "velocity_slice".into(),
        }
    }

    /// Output column header: detunings scan in the scaled units y_j.
    pub fn column(self) -> String {
        match self {
            ScanVariable::Omega(j) => format!("y{j}"),
            ScanVariable::S(j) => format!("s{j}"),
            ScanVariable::VelocitySlice => "z".into(),
        }
    }

    pub fn from_name(s: &str) -> Option<ScanVariable> {
        match s {
            "omega1" | "y1" => Some(ScanVariable::Omega(1)),
            "omega2" | "y2" => Some(ScanVariable::Omega(2)),
            "omega3" | "y3" => Some(ScanVariable::Omega(3)),
            "omega4" | "y4" => Some(ScanVariable::Omega(4)),
            "s1" => Some(ScanVariable::S(1)),
            "s2" => Some(ScanVariable::S(2)),
            "s3" => Some(ScanVariable::S(3)),
            "s4" => Some(ScanVariable::S(4)),
            "velocity_slice" | "z" => Some(ScanVariable::VelocitySlice),
            _ => None,
        }
    }
}

/// Detuning lock rule: Ω_target = scale · Ω_source, with the wavevector ratio
/// k_target/k_source as the default scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetuningLock {
    pub target: usize,
    pub source: usize,
    pub scale: Option<f64>,
}

impl DetuningLock {
    pub fn effective_scale(&self, fields: &FieldSet) -> f64 {
        self.scale.unwrap_or_else(|| {
            fields.field(self.target).wavevector / fields.field(self.source).wavevector
        })
    }
}

/// A parameter sweep definition.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanSpec {
    pub variable: ScanVariable,
    pub from: f64,
    pub to: f64,
    pub points: usize,
    pub locks: Vec<DetuningLock>,
}

impl ScanSpec {
    pub fn validate(&self) -> Result<()> {
        if self.points < 2 {
            return Err(NieError::InvalidScheme("scan needs at least 2 points".into()));
        }
        if !self.from.is_finite() || !self.to.is_finite() {
            return Err(NieError::InvalidScheme("scan range must be finite".into()));
        }
        for lock in &self.locks {
            if !(1..=4).contains(&lock.target) || !(1..=4).contains(&lock.source) {
                return Err(NieError::InvalidScheme(
                    "detuning lock references a field outside 1..=4".into(),
                ));
            }
        }
        Ok(())
    }

    pub fn values(&self) -> Vec<f64> {
        let n = self.points;
        (0..n)
            .map(|i| self.from + (self.to - self.from) * i as f64 / (n as f64 - 1.0))
            .collect()
    }
}

/// Evaluation regime of a scan.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    TwoField,
    FwmCpt,
    FwmTwoStrong,
    Perturbative,
}

impl Regime {
    pub fn name(self) -> &'static str {
        match self {
            Regime::TwoField => "two_field",
            Regime::FwmCpt => "fwm_cpt",
            Regime::FwmTwoStrong => "fwm_two_strong",
            Regime::Perturbative => "perturbative",
        }
    }

    pub fn from_name(s: &str) -> Option<Regime> {
        match s {
            "two_field" => Some(Regime::TwoField),
            "fwm_cpt" => Some(Regime::FwmCpt),
            "fwm_two_strong" => Some(Regime::FwmTwoStrong),
            "perturbative" => Some(Regime::Perturbative),
            _ => None,
        }
    }

    pub fn compatible_with(self, kind: SchemeKind) -> bool {
        match self {
            Regime::TwoField => kind != SchemeKind::RamanFwm,
            _ => kind == SchemeKind::RamanFwm,
        }
    }
}

/// Tabular scan output: rectangular, finite on success.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanTable {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl ScanTable {
    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub fn column_values(&self, name: &str) -> Option<Vec<f64>> {
        let k = self.column_index(name)?;
        Some(self.rows.iter().map(|r| r[k]).collect())
    }

    /// Renders the table with a header row; numbers use full-precision
    /// scientific notation independent of locale.
    pub fn to_delimited(&self, sep: char) -> String {
        let mut out = String::new();
        out.push_str(&self.columns.join(&sep.to_string()));
        out.push('\n');
        for row in &self.rows {
            let line: Vec<String> = row.iter().map(|x| format!("{x:.12e}")).collect();
            out.push_str(&line.join(&sep.to_string()));
            out.push('\n');
        }
        out
    }
}

/// A named parameter set: scheme, default fields (k·v̄ stored as wavevector
/// with v̄ = 1), intensity units of the S parameters, and the default scan.
#[derive(Debug, Clone, PartialEq)]
pub struct Preset {
    pub name: String,
    pub description: String,
    pub scheme: LevelScheme,
    pub fields: FieldSet,
    /// Thermal velocity in the reduced convention (1.0: wavevectors carry
    /// the k·v̄ product directly).
    pub vbar: f64,
    /// |G_j|² = S_j · s_unit[j-1]; the product of relaxation widths that the
    /// figure's S convention divides the squared coupling by.
    pub s_unit: [f64; 4],
    pub scan: ScanSpec,
}

impl Preset {
    /// Sets the coupling of field `j` from a saturation parameter.
    pub fn set_s(&mut self, j: usize, s: f64) {
        let g2 = s.max(0.0) * self.s_unit[j - 1];
        self.fields.field_mut(j).rabi = Complex64::new(g2.sqrt(), 0.0);
    }

    /// Detuning of field `j` given in the scaled units y_j = Ω_j/Γ_j.
    pub fn set_y(&mut self, j: usize, y: f64) {
        self.fields.field_mut(j).detuning = y * self.axis_unit(j);
    }

    /// Width of the transition of field `j`, the unit of its y axis.
    pub fn axis_unit(&self, j: usize) -> f64 {
        if self.scheme.kind.transition(j).is_some() {
            self.scheme.transition_width(j)
        } else {
            1.0
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.scheme.check(&self.fields)
    }

    /// The same preset with the field-free populations of levels `a` and `b`
    /// exchanged (pump rates recomputed). Open topology only.
    pub fn swapped_populations(&self, a: Level, b: Level) -> Result<Preset> {
        if self.scheme.topology != Topology::Open {
            return Err(NieError::UnsupportedScheme);
        }
        let mut n = self.scheme.zero_field_populations()?;
        let na = n.n_of(a);
        let nb = n.n_of(b);
        n.n.insert(a, nb);
        n.n.insert(b, na);
        let mut out = self.clone();
        for &lv in self.scheme.levels() {
            let mut q = self.scheme.decay(lv) * n.n_of(lv);
            for &from in self.scheme.levels() {
                if from != lv {
                    q -= self.scheme.partial(from, lv) * n.n_of(from);
                }
            }
            if q < -1e-9 * self.scheme.decay(lv).max(1.0) {
                return Err(NieError::InvalidScheme(
                    "swapped populations need a negative pump rate".into(),
                ));
            }
            out.scheme.pump.insert(lv, q.max(0.0));
        }
        out.name = format!("{}_inverse", self.name);
        Ok(out)
    }

    /// For the mixing presets: the documented inverse population ordering
    /// (lower-level ratio reversed).
    pub fn inverse_populations(&self) -> Result<Preset> {
        self.swapped_populations(Level::L, Level::N)
    }

    /// Serializes to the key = value section format.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str("[preset]\n");
        out.push_str(&format!("name = {}\n", self.name));
        out.push_str(&format!("description = {}\n", self.description));
        out.push_str(&format!("kind = {}\n", self.scheme.kind.name()));
        out.push_str(&format!("topology = {}\n", self.scheme.topology.name()));
        out.push_str(&format!("vbar = {}\n", self.vbar));
        out.push_str("\n[rates]\n");
        for (lv, g) in &self.scheme.gamma_total {
            out.push_str(&format!("gamma_{lv} = {g}\n"));
        }
        for (lv, q) in &self.scheme.pump {
            out.push_str(&format!("pump_{lv} = {q}\n"));
        }
        out.push_str("\n[partial]\n");
        for ((from, to), g) in &self.scheme.gamma {
            out.push_str(&format!("{from}_{to} = {g}\n"));
        }
        out.push_str("\n[coherence]\n");
        for ((a, b), w) in &self.scheme.coherence_override {
            out.push_str(&format!("{a}_{b} = {w}\n"));
        }
        for j in 1..=4usize {
            let f = self.fields.field(j);
            out.push_str(&format!("\n[field{j}]\n"));
            out.push_str(&format!("rabi_re = {}\n", f.rabi.re));
            out.push_str(&format!("rabi_im = {}\n", f.rabi.im));
            out.push_str(&format!("detuning = {}\n", f.detuning));
            out.push_str(&format!("wavevector = {}\n", f.wavevector));
            out.push_str(&format!("role = {}\n", f.role.name()));
            out.push_str(&format!("s_unit = {}\n", self.s_unit[j - 1]));
        }
        out.push_str("\n[scan]\n");
        out.push_str(&format!("variable = {}\n", self.scan.variable.name()));
        out.push_str(&format!("from = {}\n", self.scan.from));
        out.push_str(&format!("to = {}\n", self.scan.to));
        out.push_str(&format!("points = {}\n", self.scan.points));
        for lock in &self.scan.locks {
            match lock.scale {
                Some(s) => out.push_str(&format!("lock = {} {} {s}\n", lock.target, lock.source)),
                None => out.push_str(&format!("lock = {} {}\n", lock.target, lock.source)),
            }
        }
        out
    }

    /// Parses the key = value section format produced by [`Preset::to_text`].
    pub fn from_text(text: &str) -> Result<Preset> {
        let parse_f64 = |k: &str, v: &str| -> Result<f64> {
            v.parse::<f64>()
                .map_err(|_| NieError::Parse(format!("`{k}`: not a number: `{v}`")))
        };
        let level = |k: &str, s: &str| -> Result<Level> {
            Level::from_label(s).ok_or_else(|| NieError::Parse(format!("`{k}`: unknown level `{s}`")))
        };

        let mut name = String::new();
        let mut description = String::new();
        let mut kind: Option<SchemeKind> = None;
        let mut topology: Option<Topology> = None;
        let mut vbar = 1.0;
        let mut gamma_total = BTreeMap::new();
        let mut pump = BTreeMap::new();
        let mut partial = BTreeMap::new();
        let mut coherence = BTreeMap::new();
        let mut fields = FieldSet::default();
        let mut s_unit = [1.0f64; 4];
        let mut scan_variable = ScanVariable::Omega(4);
        let mut scan_from = 0.0;
        let mut scan_to = 1.0;
        let mut scan_points = 2usize;
        let mut locks = Vec::new();

        let mut section = String::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if line.starts_with('[') && line.ends_with(']') {
                section = line[1..line.len() - 1].trim().to_string();
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                NieError::Parse(format!("line {}: expected `key = value`", lineno + 1))
            })?;
            let key = key.trim();
            let value = value.trim();
            match section.as_str() {
                "preset" => match key {
                    "name" => name = value.to_string(),
                    "description" => description = value.to_string(),
                    "kind" => {
                        kind = Some(SchemeKind::from_name(value).ok_or_else(|| {
                            NieError::Parse(format!("unknown scheme kind `{value}`"))
                        })?)
                    }
                    "topology" => {
                        topology = Some(Topology::from_name(value).ok_or_else(|| {
                            NieError::Parse(format!("unknown topology `{value}`"))
                        })?)
                    }
                    "vbar" => vbar = parse_f64(key, value)?,
                    _ => return Err(NieError::Parse(format!("unknown key `{key}` in [preset]"))),
                },
                "rates" => {
                    if let Some(lv) = key.strip_prefix("gamma_") {
                        gamma_total.insert(level(key, lv)?, parse_f64(key, value)?);
                    } else if let Some(lv) = key.strip_prefix("pump_") {
                        pump.insert(level(key, lv)?, parse_f64(key, value)?);
                    } else {
                        return Err(NieError::Parse(format!("unknown key `{key}` in [rates]")));
                    }
                }
                "partial" => {
                    let (a, b) = key
                        .split_once('_')
                        .ok_or_else(|| NieError::Parse(format!("bad partial key `{key}`")))?;
                    partial.insert((level(key, a)?, level(key, b)?), parse_f64(key, value)?);
                }
                "coherence" => {
                    let (a, b) = key
                        .split_once('_')
                        .ok_or_else(|| NieError::Parse(format!("bad coherence key `{key}`")))?;
                    coherence.insert((level(key, a)?, level(key, b)?), parse_f64(key, value)?);
                }
                _ if section.starts_with("field") => {
                    let j: usize = section[5..]
                        .parse()
                        .map_err(|_| NieError::Parse(format!("bad section [{section}]")))?;
                    if !(1..=4).contains(&j) {
                        return Err(NieError::Parse(format!("field index {j} out of range")));
                    }
                    let f = fields.field_mut(j);
                    match key {
                        "rabi_re" => f.rabi.re = parse_f64(key, value)?,
                        "rabi_im" => f.rabi.im = parse_f64(key, value)?,
                        "detuning" => f.detuning = parse_f64(key, value)?,
                        "wavevector" => f.wavevector = parse_f64(key, value)?,
                        "role" => {
                            f.role = FieldRole::from_name(value).ok_or_else(|| {
                                NieError::Parse(format!("unknown role `{value}`"))
                            })?
                        }
                        "s_unit" => s_unit[j - 1] = parse_f64(key, value)?,
                        _ => {
                            return Err(NieError::Parse(format!(
                                "unknown key `{key}` in [field{j}]"
                            )))
                        }
                    }
                }
                "scan" => match key {
                    "variable" => {
                        scan_variable = ScanVariable::from_name(value).ok_or_else(|| {
                            NieError::Parse(format!("unknown scan variable `{value}`"))
                        })?
                    }
                    "from" => scan_from = parse_f64(key, value)?,
                    "to" => scan_to = parse_f64(key, value)?,
                    "points" => {
                        scan_points = value.parse().map_err(|_| {
                            NieError::Parse(format!("`points`: not an integer: `{value}`"))
                        })?
                    }
                    "lock" => {
                        let parts: Vec<&str> = value.split_whitespace().collect();
                        if parts.len() != 2 && parts.len() != 3 {
                            return Err(NieError::Parse(
                                "lock expects `target source [scale]`".into(),
                            ));
                        }
                        let target = parts[0]
                            .parse()
                            .map_err(|_| NieError::Parse("bad lock target".into()))?;
                        let source = parts[1]
                            .parse()
                            .map_err(|_| NieError::Parse("bad lock source".into()))?;
                        let scale = match parts.get(2) {
                            Some(s) => Some(parse_f64("lock scale", s)?),
                            None => None,
                        };
                        locks.push(DetuningLock {
                            target,
                            source,
                            scale,
                        });
                    }
                    _ => return Err(NieError::Parse(format!("unknown key `{key}` in [scan]"))),
                },
                _ => {
                    return Err(NieError::Parse(format!(
                        "key `{key}` outside a known section"
                    )))
                }
            }
        }
        let kind = kind.ok_or_else(|| NieError::Parse("missing `kind`".into()))?;
        let topology = topology.ok_or_else(|| NieError::Parse("missing `topology`".into()))?;
        let mut scheme = LevelScheme::new(kind, topology);
        scheme.gamma_total = gamma_total;
        scheme.pump = pump;
        scheme.gamma = partial;
        scheme.coherence_override = coherence;
        let scan = ScanSpec {
            variable: scan_variable,
            from: scan_from,
            to: scan_to,
            points: scan_points,
            locks,
        };
        scan.validate()?;
        let preset = Preset {
            name,
            description,
            scheme,
            fields,
            vbar,
            s_unit,
            scan,
        };
        preset.validate()?;
        Ok(preset)
    }
}

pub const PRESET_NAMES: [&str; 5] = [
    "ne_v_open_fig2",
    "na_closed_fig3",
    "na_closed_fig4",
    "na2_down",
    "na2_up",
];

/// Documented intensity ratio S1/S2 of the mixing experiments (chosen from
/// the ratio of field intensities and Franck-Condon factors).
pub const NA2_S1_OVER_S2: f64 = 2.33;

fn drive(wavevector: f64, role: FieldRole) -> DriveField {
    DriveField {
        rabi: Complex64::new(0.0, 0.0),
        detuning: 0.0,
        wavevector,
        role,
    }
}

/// Open-topology pump rates reproducing the target field-free populations.
fn open_pumps(scheme: &mut LevelScheme, targets: &[(Level, f64)]) {
    let n: BTreeMap<Level, f64> = targets.iter().copied().collect();
    let get = |lv: Level| n.get(&lv).copied().unwrap_or(0.0);
    let levels: Vec<Level> = scheme.levels().to_vec();
    for &lv in &levels {
        let mut q = scheme.decay(lv) * get(lv);
        for &from in &levels {
            if from != lv {
                q -= scheme.partial(from, lv) * get(from);
            }
        }
        scheme.pump.insert(lv, q.max(0.0));
    }
}

fn ne_v_open_fig2() -> Preset {
    let mut scheme = LevelScheme::new(SchemeKind::V, Topology::Open);
    scheme.gamma_total.insert(Level::L, 5e7);
    scheme.gamma_total.insert(Level::M, 3e7);
    scheme.gamma_total.insert(Level::G, 1e7);
    scheme.gamma.insert((Level::M, Level::L), 0.5e7);
    scheme.gamma.insert((Level::G, Level::L), 0.5e7);
    let total = 235.0;
    open_pumps(
        &mut scheme,
        &[
            (Level::L, 100.0 / total),
            (Level::G, 50.0 / total),
            (Level::M, 85.0 / total),
        ],
    );
    // 1.15 um driving and 0.63 um probe transitions; k v̄ chosen so the
    // driving detuning of the reference curve sits just inside one Doppler
    // width (the published curves do not print v̄).
    let k1v = 1.0e10;
    let k4v = k1v * 1150.0 / 630.0;
    let mut fields = FieldSet::default();
    fields.set(1, drive(k1v, FieldRole::Strong));
    fields.set(4, drive(k4v, FieldRole::Weak));
    let width_lg = scheme.coherence_width(Level::L, Level::G);
    let width_lm = scheme.coherence_width(Level::L, Level::M);
    let width_gm = scheme.coherence_width(Level::G, Level::M);
    let mut preset = Preset {
        name: "ne_v_open_fig2".into(),
        description: "Ne V scheme, open, populations 100:50:85, driving at 1.15 um".into(),
        scheme,
        fields,
        vbar: 1.0,
        s_unit: [width_lg * width_gm, 1.0, 1.0, width_lm * width_gm],
        scan: ScanSpec {
            variable: ScanVariable::Omega(4),
            from: 300.0,
            to: 700.0,
            points: 201,
            locks: Vec::new(),
        },
    };
    preset.set_y(1, 350.0);
    preset.set_s(1, 5.0);
    preset
}

fn na_closed(name: &str, n_m: f64, description: &str) -> Preset {
    let mut scheme = LevelScheme::new(SchemeKind::V, Topology::Closed);
    scheme.gamma_total.insert(Level::M, 9e7);
    scheme.gamma_total.insert(Level::G, 63e7);
    scheme.gamma.insert((Level::M, Level::L), 9e7);
    scheme.gamma.insert((Level::G, Level::L), 63e7);
    scheme.pump.insert(Level::M, 9e7 * n_m / (1.0 - n_m));
    // 590 nm driving, 330 nm probe; thermal velocity of the sodium cell.
    let k1v = 6.9e9;
    let k4v = k1v * 590.0 / 330.0;
    let mut fields = FieldSet::default();
    fields.set(1, drive(k1v, FieldRole::Strong));
    fields.set(4, drive(k4v, FieldRole::Weak));
    let width_lg = scheme.coherence_width(Level::L, Level::G);
    let width_lm = scheme.coherence_width(Level::L, Level::M);
    let width_gm = scheme.coherence_width(Level::G, Level::M);
    let mut preset = Preset {
        name: name.into(),
        description: description.into(),
        scheme,
        fields,
        vbar: 1.0,
        s_unit: [width_lg * width_gm, 1.0, 1.0, width_lm * width_gm],
        scan: ScanSpec {
            variable: ScanVariable::Omega(4),
            from: -500.0,
            to: 500.0,
            points: 201,
            locks: Vec::new(),
        },
    };
    preset.set_s(1, 10.0);
    preset
}

fn na2_scheme() -> LevelScheme {
    let mut scheme = LevelScheme::new(SchemeKind::RamanFwm, Topology::Open);
    // The lower working level's own decay rate is not printed; it is set to
    // the same magnitude as the other slow lower level (it only enters the
    // population bookkeeping, every coherence width is overridden below).
    scheme.gamma_total.insert(Level::L, 30e6);
    scheme.gamma_total.insert(Level::N, 30e6);
    scheme.gamma_total.insert(Level::M, 200e6);
    scheme.gamma_total.insert(Level::G, 260e6);
    scheme.gamma.insert((Level::M, Level::N), 2e6);
    scheme.gamma.insert((Level::M, Level::L), 4e6);
    scheme.gamma.insert((Level::G, Level::N), 20e6);
    scheme.gamma.insert((Level::G, Level::L), 10e6);
    scheme.set_coherence_width(Level::L, Level::N, 40e6);
    scheme.set_coherence_width(Level::N, Level::M, 110e6);
    scheme.set_coherence_width(Level::L, Level::M, 110e6);
    scheme.set_coherence_width(Level::G, Level::M, 130e6);
    scheme.set_coherence_width(Level::N, Level::G, 140e6);
    scheme.set_coherence_width(Level::L, Level::G, 140e6);
    scheme
}

fn na2(name: &str, kv: [f64; 4], n_l: f64, n_n: f64, description: &str) -> Preset {
    let mut scheme = na2_scheme();
    let total = n_l + n_n;
    open_pumps(
        &mut scheme,
        &[(Level::L, n_l / total), (Level::N, n_n / total)],
    );
    let mut fields = FieldSet::default();
    fields.set(1, drive(kv[0], FieldRole::Strong));
    fields.set(2, drive(kv[1], FieldRole::Strong));
    fields.set(3, drive(kv[2], FieldRole::Weak));
    fields.set(4, drive(kv[3], FieldRole::Weak));
    let w_ln = scheme.coherence_width(Level::L, Level::N);
    let w_lg = scheme.coherence_width(Level::L, Level::G);
    let w_ng = scheme.coherence_width(Level::N, Level::G);
    let w_nm = scheme.coherence_width(Level::N, Level::M);
    let w_lm = scheme.coherence_width(Level::L, Level::M);
    let w_gm = scheme.coherence_width(Level::G, Level::M);
    Preset {
        name: name.into(),
        description: description.into(),
        scheme,
        fields,
        vbar: 1.0,
        s_unit: [w_lg * w_ln, w_ng * w_ln, w_nm * w_ln, w_lm * w_gm],
        scan: ScanSpec {
            variable: ScanVariable::Omega(3),
            from: -80.0,
            to: 80.0,
            points: 161,
            // The second driving field tracks the first with the wavevector
            // ratio so the two-photon resonance stays velocity-selective.
            locks: vec![DetuningLock {
                target: 2,
                source: 1,
                scale: None,
            }],
        },
    }
}

pub fn load_preset(name: &str) -> Result<Preset> {
    match name {
        "ne_v_open_fig2" => Ok(ne_v_open_fig2()),
        "na_closed_fig3" => Ok(na_closed(
            "na_closed_fig3",
            0.36,
            "Na V scheme, closed, populations 64:0:36, probe at 330 nm",
        )),
        "na_closed_fig4" => Ok(na_closed(
            "na_closed_fig4",
            0.40,
            "Na V scheme, closed, populations 60:0:40, probe at 330 nm",
        )),
        "na2_down" => Ok(na2(
            "na2_down",
            [6.94e9, 6.45e9, 5.17e9, 5.66e9],
            30.0,
            2.0,
            "Na2 mixing loop, down-conversion, lower-level populations 30:2",
        )),
        "na2_up" => Ok(na2(
            "na2_up",
            [5.12e9, 4.54e9, 6.59e9, 7.16e9],
            110.0,
            3.2,
            "Na2 mixing loop, up-conversion, lower-level populations 110:3.2",
        )),
        other => Err(NieError::UnknownPreset(other.to_string())),
    }
}

fn apply_point(preset: &Preset, scan: &ScanSpec, value: f64) -> FieldSet {
    let mut fields = preset.fields.clone();
    match scan.variable {
        ScanVariable::Omega(j) => {
            fields.field_mut(j).detuning = value * preset.axis_unit(j);
        }
        ScanVariable::S(j) => {
            let g2 = value.max(0.0) * preset.s_unit[j - 1];
            fields.field_mut(j).rabi = Complex64::new(g2.sqrt(), 0.0);
        }
        ScanVariable::VelocitySlice => {}
    }
    for lock in &scan.locks {
        let scale = lock.effective_scale(&fields);
        fields.field_mut(lock.target).detuning = scale * fields.field(lock.source).detuning;
    }
    fields
}

fn two_field_columns(var: &ScanVariable) -> Vec<String> {
    vec![
        var.column(),
        "re_chi4".into(),
        "im_chi4".into(),
        "abs2_chi4".into(),
        "re_chii".into(),
        "im_chii".into(),
        "alpha4".into(),
        "alphai".into(),
        "dr4".into(),
        "dri".into(),
    ]
}

fn two_field_row(
    preset: &Preset,
    fields: &FieldSet,
    grid: &VelocityGrid,
    value: f64,
) -> Result<Vec<f64>> {
    let scheme = &preset.scheme;
    let mut off = fields.clone();
    let aux = scheme
        .kind
        .auxiliary_field()
        .ok_or(NieError::UnsupportedScheme)?;
    off.field_mut(4).rabi = Complex64::new(0.0, 0.0);
    off.field_mut(aux).rabi = Complex64::new(0.0, 0.0);
    let avg = grid.maxwell_average_many(|v| {
        let r = two_field::susceptibilities_unnormalized(scheme, fields, v)?;
        let r0 = two_field::susceptibilities_unnormalized(scheme, &off, v)?;
        Ok(vec![
            r.chi4,
            r.chii,
            r0.chi4,
            r0.chii,
            Complex64::new(r.dr4, 0.0),
            Complex64::new(r.dri, 0.0),
        ])
    })?;
    let chi4 = avg[0];
    let chii = avg[1];
    let alpha4 = chi4.re / avg[2].re;
    let alphai = chii.re / avg[3].re;
    Ok(vec![
        value,
        chi4.re,
        chi4.im,
        chi4.norm_sqr(),
        chii.re,
        chii.im,
        alpha4,
        alphai,
        avg[4].re,
        avg[5].re,
    ])
}

fn fwm_columns(var: &ScanVariable, regime: Regime) -> Vec<String> {
    let other = match regime {
        Regime::FwmCpt | Regime::Perturbative => "chi3t",
        Regime::FwmTwoStrong => "chi2t",
        Regime::TwoField => unreachable!(),
    };
    let mut cols = vec![
        var.column(),
        "re_chi4t".into(),
        "im_chi4t".into(),
        "abs2_chi4t".into(),
        format!("re_{other}"),
        format!("im_{other}"),
        format!("abs2_{other}"),
        "ratio_abs2".into(),
    ];
    if regime != Regime::Perturbative {
        for j in 1..=4 {
            cols.push(format!("alpha{j}"));
        }
    }
    cols
}

fn fwm_row(
    preset: &Preset,
    fields: &FieldSet,
    grid: &VelocityGrid,
    regime: Regime,
    value: f64,
) -> Result<Vec<f64>> {
    let scheme = &preset.scheme;
    let n = scheme.zero_field_populations()?;
    let dn = [
        n.n_of(Level::L) - n.n_of(Level::G),
        n.n_of(Level::N) - n.n_of(Level::G),
        n.n_of(Level::N) - n.n_of(Level::M),
        n.n_of(Level::L) - n.n_of(Level::M),
    ];
    let avg = grid.maxwell_average_many(|v| {
        let mut row = Vec::with_capacity(10);
        match regime {
            Regime::Perturbative => {
                let chi = fwm::perturbative_chi3(scheme, fields, v)?;
                row.push(chi.chi4_t);
                row.push(chi.chi3_t);
            }
            Regime::FwmCpt | Regime::FwmTwoStrong => {
                let r = if regime == Regime::FwmCpt {
                    fwm::fwm_cpt_mode(scheme, fields, v, false)?
                } else {
                    fwm::fwm_two_strong_mode(scheme, fields, v, false)?
                };
                row.push(r.chi4_t);
                row.push(r.chi3_t.or(r.chi2_t).unwrap_or_default());
                let p = fwm::denominators(scheme, fields, v)?;
                let widths = [p.width1, p.width2, p.width3, p.width4];
                let ps = [p.p1, p.p2, p.p3, p.p4];
                for j in 0..4 {
                    row.push(*r.chi_abs.get(&(j + 1)).unwrap_or(&Complex64::default()));
                    row.push(widths[j] * dn[j] / ps[j]);
                }
            }
            Regime::TwoField => return Err(NieError::IncompatibleRegime),
        }
        Ok(row)
    })?;
    let chi4 = avg[0];
    let other = avg[1];
    let mut row = vec![
        value,
        chi4.re,
        chi4.im,
        chi4.norm_sqr(),
        other.re,
        other.im,
        other.norm_sqr(),
        other.norm_sqr() / chi4.norm_sqr(),
    ];
    if regime != Regime::Perturbative {
        for j in 0..4 {
            row.push(avg[2 + 2 * j].re / avg[3 + 2 * j].re);
        }
    }
    Ok(row)
}

fn slice_columns(preset: &Preset) -> Vec<String> {
    let mut cols = vec!["z".to_string()];
    for lv in preset.scheme.levels() {
        cols.push(format!("r_{lv}"));
    }
    cols
}

fn slice_row(preset: &Preset, fields: &FieldSet, regime: Regime, z: f64) -> Result<Vec<f64>> {
    let v = z * preset.vbar;
    let scheme = &preset.scheme;
    let pops = match regime {
        Regime::TwoField => two_field::susceptibilities_unnormalized(scheme, fields, v)?.populations,
        Regime::FwmCpt => fwm::fwm_cpt_mode(scheme, fields, v, false)?.populations,
        Regime::FwmTwoStrong => fwm::fwm_two_strong_mode(scheme, fields, v, false)?.populations,
        Regime::Perturbative => scheme.zero_field_populations()?,
    };
    let mut row = vec![z];
    for &lv in scheme.levels() {
        row.push(pops.r_of(lv));
    }
    Ok(row)
}

/// Runs a scan sequentially; see [`run_scan_with_workers`].
pub fn run_scan(
    preset: &Preset,
    scan: &ScanSpec,
    grid: &VelocityGrid,
    regime: Regime,
) -> Result<ScanTable> {
    run_scan_with_workers(preset, scan, grid, regime, 1)
}

/// Runs a scan on `workers` threads. Points are independent and assembled in
/// scan order, so the result is identical for any worker count.
pub fn run_scan_with_workers(
    preset: &Preset,
    scan: &ScanSpec,
    grid: &VelocityGrid,
    regime: Regime,
    workers: usize,
) -> Result<ScanTable> {
    scan.validate()?;
    if !regime.compatible_with(preset.scheme.kind) {
        return Err(NieError::IncompatibleRegime);
    }
    preset.validate()?;
    let values = scan.values();
    let columns = match (regime, scan.variable) {
        (_, ScanVariable::VelocitySlice) => slice_columns(preset),
        (Regime::TwoField, _) => two_field_columns(&scan.variable),
        (_, _) => fwm_columns(&scan.variable, regime),
    };
    let compute = |value: f64| -> Result<Vec<f64>> {
        let fields = apply_point(preset, scan, value);
        match (regime, scan.variable) {
            (_, ScanVariable::VelocitySlice) => slice_row(preset, &fields, regime, value),
            (Regime::TwoField, _) => two_field_row(preset, &fields, grid, value),
            (_, _) => fwm_row(preset, &fields, grid, regime, value),
        }
    };
    let workers = workers.max(1).min(values.len().max(1));
    let mut results: Vec<Option<Result<Vec<f64>>>> = Vec::new();
    results.resize_with(values.len(), || None);
    if workers == 1 {
        for (i, &v) in values.iter().enumerate() {
            results[i] = Some(compute(v));
        }
    } else {
        let collected: Vec<Vec<(usize, Result<Vec<f64>>)>> = std::thread::scope(|s| {
            let values = &values;
            let compute = &compute;
            let handles: Vec<_> = (0..workers)
                .map(|w| {
                    s.spawn(move || {
                        let mut out = Vec::new();
                        let mut i = w;
                        while i < values.len() {
                            out.push((i, compute(values[i])));
                            i += workers;
                        }
                        out
                    })
                })
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("scan worker panicked"))
                .collect()
        });
        for chunk in collected {
            for (i, r) in chunk {
                results[i] = Some(r);
            }
        }
    }
    let mut rows = Vec::with_capacity(values.len());
    for (i, res) in results.into_iter().enumerate() {
        let row = res
            .expect("every scan point computed")
            .map_err(|e| NieError::AtScanPoint {
                index: i,
                variable: scan.variable.name(),
                value: values[i],
                source: Box::new(e),
            })?;
        if row.iter().any(|x| !x.is_finite()) {
            return Err(NieError::AtScanPoint {
                index: i,
                variable: scan.variable.name(),
                value: values[i],
                source: Box::new(NieError::NonFinite(values[i])),
            });
        }
        rows.push(row);
    }
    Ok(ScanTable { columns, rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_presets_load_and_validate() {
        for name in PRESET_NAMES {
            let p = load_preset(name).unwrap();
            assert_eq!(p.name, name);
            p.validate().unwrap();
        }
    }

    #[test]
    fn unknown_preset_is_an_error() {
        assert!(matches!(
            load_preset("nope"),
            Err(NieError::UnknownPreset(_))
        ));
    }

    #[test]
    fn presets_round_trip_through_text() {
        for name in PRESET_NAMES {
            let p = load_preset(name).unwrap();
            let text = p.to_text();
            let back = Preset::from_text(&text).unwrap();
            assert_eq!(p, back, "round trip failed for {name}");
        }
    }

    #[test]
    fn na2_population_targets() {
        let p = load_preset("na2_down").unwrap();
        let n = p.scheme.zero_field_populations().unwrap();
        assert!((n.n_of(Level::L) - 30.0 / 32.0).abs() < 1e-12);
        assert!((n.n_of(Level::N) - 2.0 / 32.0).abs() < 1e-12);
        let inv = p.inverse_populations().unwrap();
        let ni = inv.scheme.zero_field_populations().unwrap();
        assert!((ni.n_of(Level::L) - 2.0 / 32.0).abs() < 1e-12);
        assert!((ni.n_of(Level::N) - 30.0 / 32.0).abs() < 1e-12);
    }

    #[test]
    fn detuning_lock_is_exact() {
        let mut p = load_preset("na2_down").unwrap();
        p.set_y(1, 50.0);
        let scan = p.scan.clone();
        let fields = apply_point(&p, &scan, 12.5);
        let k1 = fields.field(1).wavevector;
        let k2 = fields.field(2).wavevector;
        assert_eq!(
            fields.field(2).detuning,
            (k2 / k1) * fields.field(1).detuning
        );
    }

    #[test]
    fn incompatible_regime_is_rejected() {
        let p = load_preset("na2_down").unwrap();
        let grid = VelocityGrid::default_for(p.vbar);
        let scan = ScanSpec {
            variable: ScanVariable::Omega(4),
            from: -1.0,
            to: 1.0,
            points: 3,
            locks: Vec::new(),
        };
        assert!(matches!(
            run_scan(&p, &scan, &grid, Regime::TwoField),
            Err(NieError::IncompatibleRegime)
        ));
        let ne = load_preset("ne_v_open_fig2").unwrap();
        assert!(matches!(
            run_scan(&ne, &scan, &grid, Regime::FwmCpt),
            Err(NieError::IncompatibleRegime)
        ));
    }

    #[test]
    fn perturbative_scan_is_rectangular_and_deterministic() {
        let mut p = load_preset("na2_down").unwrap();
        p.set_s(1, 0.0);
        let grid = VelocityGrid::gauss_hermite(32, p.vbar).unwrap();
        let scan = ScanSpec {
            variable: ScanVariable::Omega(3),
            from: -20.0,
            to: 20.0,
            points: 11,
            locks: p.scan.locks.clone(),
        };
        let t1 = run_scan_with_workers(&p, &scan, &grid, Regime::Perturbative, 1).unwrap();
        let t4 = run_scan_with_workers(&p, &scan, &grid, Regime::Perturbative, 4).unwrap();
        assert_eq!(t1, t4);
        assert_eq!(t1.rows.len(), 11);
        for row in &t1.rows {
            assert_eq!(row.len(), t1.columns.len());
        }
        assert_eq!(t1.to_delimited(','), t4.to_delimited(','));
    }

    #[test]
    fn scan_spec_rejects_single_point() {
        let scan = ScanSpec {
            variable: ScanVariable::Omega(1),
            from: 0.0,
            to: 1.0,
            points: 1,
            locks: Vec::new(),
        };
        assert!(scan.validate().is_err());
    }
}
