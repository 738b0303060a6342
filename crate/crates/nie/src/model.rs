//! Physical data model: level schemes, relaxation constants, driving fields,
//! and the field-free population solution shared by every solver.

use std::collections::BTreeMap;
use std::fmt;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{NieError, Result};

/// Level labels used across all schemes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Level {
    L,
    M,
    G,
    N,
    F,
}

impl Level {
    pub const ALL: [Level; 5] = [Level::L, Level::M, Level::G, Level::N, Level::F];

    pub fn label(self) -> &'static str {
        match self {
            Level::L => "l",
            Level::M => "m",
            Level::G => "g",
            Level::N => "n",
            Level::F => "f",
        }
    }

    pub fn from_label(s: &str) -> Option<Level> {
        Level::ALL.iter().copied().find(|l| l.label() == s)
    }
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Transition topology of the scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SchemeKind {
    /// Folded scheme sharing the lower level l: fields 4 (l-m) and 1 (l-g).
    V,
    /// Folded scheme sharing the upper level m: fields 4 (l-m) and 3 (n-m).
    Lambda,
    /// Cascade: fields 4 (l-m) and 2 (m-f).
    H,
    /// Four-level Raman mixing loop: 1 (l-g), 2 (n-g), 3 (n-m), 4 (l-m).
    RamanFwm,
}

impl SchemeKind {
    pub fn name(self) -> &'static str {
        match self {
            SchemeKind::V => "V",
            SchemeKind::Lambda => "Lambda",
            SchemeKind::H => "H",
            SchemeKind::RamanFwm => "RamanFWM",
        }
    }

    pub fn from_name(s: &str) -> Option<SchemeKind> {
        match s {
            "V" | "v" => Some(SchemeKind::V),
            "Lambda" | "lambda" => Some(SchemeKind::Lambda),
            "H" | "h" => Some(SchemeKind::H),
            "RamanFWM" | "raman_fwm" | "ramanfwm" => Some(SchemeKind::RamanFwm),
            _ => None,
        }
    }

    /// Levels of the scheme, ground/lowest first.
    pub fn levels(self) -> &'static [Level] {
        match self {
            SchemeKind::V => &[Level::L, Level::M, Level::G],
            SchemeKind::Lambda => &[Level::L, Level::N, Level::M],
            SchemeKind::H => &[Level::L, Level::M, Level::F],
            SchemeKind::RamanFwm => &[Level::L, Level::N, Level::M, Level::G],
        }
    }

    /// Driven transitions as (field index, lower level, upper level).
    pub fn transitions(self) -> &'static [(usize, Level, Level)] {
        match self {
            SchemeKind::V => &[(4, Level::L, Level::M), (1, Level::L, Level::G)],
            SchemeKind::Lambda => &[(4, Level::L, Level::M), (3, Level::N, Level::M)],
            SchemeKind::H => &[(4, Level::L, Level::M), (2, Level::M, Level::F)],
            SchemeKind::RamanFwm => &[
                (1, Level::L, Level::G),
                (2, Level::N, Level::G),
                (3, Level::N, Level::M),
                (4, Level::L, Level::M),
            ],
        }
    }

    /// Field index of the auxiliary transition in the three-level schemes.
    pub fn auxiliary_field(self) -> Option<usize> {
        match self {
            SchemeKind::V => Some(1),
            SchemeKind::Lambda => Some(3),
            SchemeKind::H => Some(2),
            SchemeKind::RamanFwm => None,
        }
    }

    pub fn transition(self, field: usize) -> Option<(Level, Level)> {
        self.transitions()
            .iter()
            .find(|(j, _, _)| *j == field)
            .map(|&(_, lo, up)| (lo, up))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Topology {
    Open,
    Closed,
}

impl Topology {
    pub fn name(self) -> &'static str {
        match self {
            Topology::Open => "open",
            Topology::Closed => "closed",
        }
    }

    pub fn from_name(s: &str) -> Option<Topology> {
        match s {
            "open" => Some(Topology::Open),
            "closed" => Some(Topology::Closed),
            _ => None,
        }
    }
}

/// Role of a field in the interaction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FieldRole {
    Strong,
    Weak,
    Off,
}

impl FieldRole {
    pub fn name(self) -> &'static str {
        match self {
            FieldRole::Strong => "strong",
            FieldRole::Weak => "weak",
            FieldRole::Off => "off",
        }
    }

    pub fn from_name(s: &str) -> Option<FieldRole> {
        match s {
            "strong" => Some(FieldRole::Strong),
            "weak" => Some(FieldRole::Weak),
            "off" => Some(FieldRole::Off),
            _ => None,
        }
    }
}

/// A single driving field: Rabi coupling G = -E d / 2ħ, detuning from its
/// transition, and signed wavevector (sign encodes propagation direction).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriveField {
    pub rabi: Complex64,
    pub detuning: f64,
    pub wavevector: f64,
    pub role: FieldRole,
}

impl DriveField {
    pub fn off() -> Self {
        DriveField {
            rabi: Complex64::new(0.0, 0.0),
            detuning: 0.0,
            wavevector: 0.0,
            role: FieldRole::Off,
        }
    }

    pub fn intensity(&self) -> f64 {
        self.rabi.norm_sqr()
    }
}

/// The four fields of the model, indexed 1..=4.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldSet {
    fields: [DriveField; 4],
}

impl Default for FieldSet {
    fn default() -> Self {
        FieldSet {
            fields: [DriveField::off(); 4],
        }
    }
}

impl FieldSet {
    pub fn field(&self, j: usize) -> &DriveField {
        &self.fields[j - 1]
    }

    pub fn field_mut(&mut self, j: usize) -> &mut DriveField {
        &mut self.fields[j - 1]
    }

    pub fn set(&mut self, j: usize, f: DriveField) {
        self.fields[j - 1] = f;
    }

    /// Velocity-shifted detuning of field j at atomic velocity v.
    pub fn shifted(&self, j: usize, v: f64) -> f64 {
        shifted_detuning(self.fields[j - 1].detuning, self.fields[j - 1].wavevector, v)
    }

    pub fn intensity(&self, j: usize) -> f64 {
        self.fields[j - 1].intensity()
    }
}

/// Doppler-shifted detuning Ω' = Ω - k v.
pub fn shifted_detuning(detuning: f64, wavevector: f64, v: f64) -> f64 {
    detuning - wavevector * v
}

/// Resonance denominator P = Γ + iΩ'. Γ > 0 keeps it away from zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComplexDenominator(Complex64);

impl ComplexDenominator {
    pub fn new(width: f64, shifted_detuning: f64) -> Self {
        debug_assert!(width > 0.0, "resonance width must be positive");
        ComplexDenominator(Complex64::new(width, shifted_detuning))
    }

    pub fn value(self) -> Complex64 {
        self.0
    }
}

/// Populations per level; `n` is the field-free solution, `r` the
/// power-dependent one (equal until a solver fills `r`).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PopulationSet {
    pub r: BTreeMap<Level, f64>,
    pub n: BTreeMap<Level, f64>,
}

impl PopulationSet {
    pub fn n_of(&self, level: Level) -> f64 {
        self.n.get(&level).copied().unwrap_or(0.0)
    }

    pub fn r_of(&self, level: Level) -> f64 {
        self.r.get(&level).copied().unwrap_or(0.0)
    }

    pub fn r_sum(&self) -> f64 {
        self.r.values().sum()
    }
}

/// A validation failure; violations are data, not errors.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    ZeroDecayRate(Level),
    NegativePartialRate(Level, Level),
    PartialExceedsTotal(Level),
    /// Closed topology: decay of an excited level does not stay inside the scheme.
    OpenBranchingInClosed(Level),
    NegativePump(Level),
    ClosedPumpNotFromGround(Level),
    NonPositiveCoherenceWidth(Level, Level),
    WrongFieldForScheme(usize),
    OffFieldHasCoupling(usize),
    NonFiniteParameter(&'static str),
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::ZeroDecayRate(l) => write!(f, "level {l}: total decay rate must be > 0"),
            Violation::NegativePartialRate(a, b) => {
                write!(f, "partial rate gamma_{a}{b} is negative")
            }
            Violation::PartialExceedsTotal(l) => {
                write!(f, "level {l}: sum of partial rates exceeds the total decay rate")
            }
            Violation::OpenBranchingInClosed(l) => write!(
                f,
                "level {l}: closed topology requires all decay to stay inside the scheme"
            ),
            Violation::NegativePump(l) => write!(f, "level {l}: pump rate is negative"),
            Violation::ClosedPumpNotFromGround(l) => {
                write!(f, "closed topology pumps only from the ground level, found pump at {l}")
            }
            Violation::NonPositiveCoherenceWidth(a, b) => {
                write!(f, "coherence width Gamma_{a}{b} must be > 0")
            }
            Violation::WrongFieldForScheme(j) => {
                write!(f, "field {j} is active but not part of this scheme")
            }
            Violation::OffFieldHasCoupling(j) => {
                write!(f, "field {j} has role `off` but a nonzero Rabi coupling")
            }
            Violation::NonFiniteParameter(what) => write!(f, "non-finite parameter: {what}"),
        }
    }
}

/// A level scheme: decay totals, partial relaxation channels, incoherent
/// pumping and coherence half-widths.
///
/// For open topology `pump` holds the external excitation rates q per level;
/// for closed topology it holds the rates w of excitation out of the ground
/// level l into each excited level.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelScheme {
    pub kind: SchemeKind,
    pub topology: Topology,
    /// Total decay rate Γ per level. The ground level of a closed scheme
    /// carries no entry (it does not decay).
    pub gamma_total: BTreeMap<Level, f64>,
    /// Partial relaxation rates γ_(from,to).
    pub gamma: BTreeMap<(Level, Level), f64>,
    /// Incoherent excitation rates (see type docs).
    pub pump: BTreeMap<Level, f64>,
    /// Collisional overrides of the coherence half-widths Γ_ij
    /// (unordered pair, stored with the smaller label first).
    pub coherence_override: BTreeMap<(Level, Level), f64>,
}

fn pair_key(a: Level, b: Level) -> (Level, Level) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

impl LevelScheme {
    pub fn new(kind: SchemeKind, topology: Topology) -> Self {
        LevelScheme {
            kind,
            topology,
            gamma_total: BTreeMap::new(),
            gamma: BTreeMap::new(),
            pump: BTreeMap::new(),
            coherence_override: BTreeMap::new(),
        }
    }

    pub fn levels(&self) -> &'static [Level] {
        self.kind.levels()
    }

    pub fn ground(&self) -> Level {
        Level::L
    }

    /// Total decay rate of a level; 0 for the closed-scheme ground level.
    pub fn decay(&self, level: Level) -> f64 {
        self.gamma_total.get(&level).copied().unwrap_or(0.0)
    }

    pub fn partial(&self, from: Level, to: Level) -> f64 {
        self.gamma.get(&(from, to)).copied().unwrap_or(0.0)
    }

    pub fn pump_rate(&self, level: Level) -> f64 {
        self.pump.get(&level).copied().unwrap_or(0.0)
    }

    /// Coherence half-width Γ_ij: collisional override if present, otherwise
    /// (Γ_i + Γ_j)/2.
    pub fn coherence_width(&self, a: Level, b: Level) -> f64 {
        if let Some(&w) = self.coherence_override.get(&pair_key(a, b)) {
            w
        } else {
            0.5 * (self.decay(a) + self.decay(b))
        }
    }

    pub fn set_coherence_width(&mut self, a: Level, b: Level, width: f64) {
        self.coherence_override.insert(pair_key(a, b), width);
    }

    /// Coherence half-width of the transition driven by field j.
    pub fn transition_width(&self, field: usize) -> f64 {
        let (lo, up) = self
            .kind
            .transition(field)
            .expect("field must belong to the scheme");
        self.coherence_width(lo, up)
    }

    pub fn transition_difference_n(&self, field: usize, pops: &PopulationSet) -> f64 {
        let (lo, up) = self.kind.transition(field).expect("field in scheme");
        pops.n_of(lo) - pops.n_of(up)
    }

    /// Validates the scheme invariants together with the supplied fields.
    pub fn validate(&self, fields: &FieldSet) -> Vec<Violation> {
        let mut out = Vec::new();
        let levels = self.levels();
        for &lv in levels {
            let total = self.decay(lv);
            if !total.is_finite() {
                out.push(Violation::NonFiniteParameter("gamma_total"));
            }
            let is_closed_ground = self.topology == Topology::Closed && lv == self.ground();
            if total <= 0.0 && !is_closed_ground {
                out.push(Violation::ZeroDecayRate(lv));
            }
            let mut partial_sum = 0.0;
            for &to in levels {
                if to == lv {
                    continue;
                }
                let g = self.partial(lv, to);
                if g < 0.0 {
                    out.push(Violation::NegativePartialRate(lv, to));
                }
                partial_sum += g;
            }
            if partial_sum > total * (1.0 + 1e-12) && !is_closed_ground {
                out.push(Violation::PartialExceedsTotal(lv));
            }
            if self.topology == Topology::Closed
                && !is_closed_ground
                && (partial_sum - total).abs() > 1e-9 * total.max(1.0)
            {
                out.push(Violation::OpenBranchingInClosed(lv));
            }
        }
        for (&lv, &p) in &self.pump {
            if p < 0.0 {
                out.push(Violation::NegativePump(lv));
            }
            if self.topology == Topology::Closed && lv == self.ground() && p != 0.0 {
                out.push(Violation::ClosedPumpNotFromGround(lv));
            }
        }
        for (&(a, b), &w) in &self.coherence_override {
            if w <= 0.0 {
                out.push(Violation::NonPositiveCoherenceWidth(a, b));
            }
        }
        let scheme_fields: Vec<usize> = self.kind.transitions().iter().map(|t| t.0).collect();
        for j in 1..=4 {
            let f = fields.field(j);
            match f.role {
                FieldRole::Off => {
                    if f.rabi.norm_sqr() != 0.0 {
                        out.push(Violation::OffFieldHasCoupling(j));
                    }
                }
                _ => {
                    if !scheme_fields.contains(&j) {
                        out.push(Violation::WrongFieldForScheme(j));
                    }
                }
            }
            if !f.rabi.is_finite() || !f.detuning.is_finite() || !f.wavevector.is_finite() {
                out.push(Violation::NonFiniteParameter("field"));
            }
        }
        out
    }

    pub fn check(&self, fields: &FieldSet) -> Result<()> {
        let violations = self.validate(fields);
        if violations.is_empty() {
            Ok(())
        } else {
            let msg = violations
                .iter()
                .map(|v| v.to_string())
                .collect::<Vec<_>>()
                .join("; ");
            Err(NieError::InvalidScheme(msg))
        }
    }

    /// Field-free steady-state populations.
    ///
    /// Open topology: solves Γ_i n_i = q_i + Σ_k γ_ki n_k (cascade feeding).
    /// Closed topology: solves the rate balance with pumping out of the ground
    /// level and normalizes the total population to one.
    pub fn zero_field_populations(&self) -> Result<PopulationSet> {
        let levels = self.levels();
        let dim = levels.len();
        let idx = |lv: Level| levels.iter().position(|&x| x == lv).unwrap();
        for &lv in levels {
            if self.decay(lv) <= 0.0 && !(self.topology == Topology::Closed && lv == self.ground())
            {
                return Err(NieError::ZeroDecayRate(lv));
            }
        }
        let mut a = DMatrix::<f64>::zeros(dim, dim);
        let mut b = DVector::<f64>::zeros(dim);
        match self.topology {
            Topology::Open => {
                for &lv in levels {
                    let i = idx(lv);
                    a[(i, i)] = self.decay(lv);
                    for &from in levels {
                        if from != lv {
                            a[(i, idx(from))] -= self.partial(from, lv);
                        }
                    }
                    b[i] = self.pump_rate(lv);
                }
            }
            Topology::Closed => {
                let ground = self.ground();
                for &lv in levels {
                    let i = idx(lv);
                    if lv == ground {
                        // Trace condition replaces the redundant ground row.
                        for k in 0..dim {
                            a[(i, k)] = 1.0;
                        }
                        b[i] = 1.0;
                    } else {
                        a[(i, i)] = self.decay(lv);
                        for &from in levels {
                            if from != lv {
                                a[(i, idx(from))] -= self.partial(from, lv);
                            }
                        }
                        a[(i, idx(ground))] -= self.pump_rate(lv);
                        b[i] = 0.0;
                    }
                }
            }
        }
        let lu = a.lu();
        let n = lu
            .solve(&b)
            .ok_or(NieError::InvalidScheme("singular rate matrix".into()))?;
        let mut pops = PopulationSet::default();
        for &lv in levels {
            let value = n[idx(lv)];
            pops.n.insert(lv, value);
            pops.r.insert(lv, value);
        }
        Ok(pops)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn na_closed_v() -> LevelScheme {
        let mut s = LevelScheme::new(SchemeKind::V, Topology::Closed);
        s.gamma_total.insert(Level::M, 9e7);
        s.gamma_total.insert(Level::G, 63e7);
        s.gamma.insert((Level::M, Level::L), 9e7);
        s.gamma.insert((Level::G, Level::L), 63e7);
        s.pump.insert(Level::M, 9e7 * 0.36 / 0.64);
        s
    }

    #[test]
    fn shifted_detuning_examples() {
        assert_eq!(shifted_detuning(5.0, 2.0, 0.0), 5.0);
        assert_eq!(shifted_detuning(5.0, 2.0, 2.5), 0.0);
        assert_eq!(shifted_detuning(0.0, -3.0, 1.0), 3.0);
    }

    #[test]
    fn default_coherence_width_is_arithmetic_mean() {
        let s = na_closed_v();
        assert_abs_diff_eq!(s.coherence_width(Level::M, Level::G), 0.5 * (9e7 + 63e7));
        assert_abs_diff_eq!(s.coherence_width(Level::L, Level::M), 4.5e7);
    }

    #[test]
    fn open_unpumped_gives_zero_populations() {
        let mut s = LevelScheme::new(SchemeKind::V, Topology::Open);
        for lv in [Level::L, Level::M, Level::G] {
            s.gamma_total.insert(lv, 1e7);
        }
        let pops = s.zero_field_populations().unwrap();
        for lv in [Level::L, Level::M, Level::G] {
            assert_eq!(pops.n_of(lv), 0.0);
        }
    }

    #[test]
    fn closed_unpumped_is_ground_only() {
        let mut s = na_closed_v();
        s.pump.clear();
        let pops = s.zero_field_populations().unwrap();
        assert_abs_diff_eq!(pops.n_of(Level::L), 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(pops.n_of(Level::M), 0.0, epsilon = 1e-14);
        assert_abs_diff_eq!(pops.n_of(Level::G), 0.0, epsilon = 1e-14);
    }

    #[test]
    fn closed_populations_match_figure_ratio() {
        let s = na_closed_v();
        let pops = s.zero_field_populations().unwrap();
        assert_abs_diff_eq!(pops.n_of(Level::L), 0.64, epsilon = 1e-12);
        assert_abs_diff_eq!(pops.n_of(Level::M), 0.36, epsilon = 1e-12);
    }

    #[test]
    fn zero_decay_is_reported() {
        let mut s = na_closed_v();
        s.gamma_total.insert(Level::M, 0.0);
        let v = s.validate(&FieldSet::default());
        assert!(v.contains(&Violation::ZeroDecayRate(Level::M)));
        assert!(s.zero_field_populations().is_err());
    }

    #[test]
    fn wrong_field_for_scheme() {
        let s = na_closed_v();
        let mut fields = FieldSet::default();
        fields.set(
            3,
            DriveField {
                rabi: Complex64::new(1e7, 0.0),
                detuning: 0.0,
                wavevector: 0.0,
                role: FieldRole::Strong,
            },
        );
        let v = s.validate(&fields);
        assert!(v.contains(&Violation::WrongFieldForScheme(3)));
    }

    #[test]
    fn open_cascade_feeding() {
        // n_l = q_l/Γ_l + (γ_ml/Γ_l) q_m/Γ_m, printed cascade form.
        let mut s = LevelScheme::new(SchemeKind::V, Topology::Open);
        s.gamma_total.insert(Level::L, 5e7);
        s.gamma_total.insert(Level::M, 3e7);
        s.gamma_total.insert(Level::G, 1e7);
        s.gamma.insert((Level::M, Level::L), 0.5e7);
        s.gamma.insert((Level::G, Level::L), 0.5e7);
        s.pump.insert(Level::L, 1e6);
        s.pump.insert(Level::M, 2e6);
        s.pump.insert(Level::G, 3e6);
        let pops = s.zero_field_populations().unwrap();
        let nm = 2e6 / 3e7;
        let ng = 3e6 / 1e7;
        let nl = 1e6 / 5e7 + 0.5e7 / 5e7 * nm + 0.5e7 / 5e7 * ng;
        assert_abs_diff_eq!(pops.n_of(Level::M), nm, epsilon = 1e-15);
        assert_abs_diff_eq!(pops.n_of(Level::G), ng, epsilon = 1e-15);
        assert_abs_diff_eq!(pops.n_of(Level::L), nl, epsilon = 1e-15);
    }
}
