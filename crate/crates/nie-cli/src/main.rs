//! Command-line front end: preset scans with velocity averaging, preset
//! listing, and a built-in verification suite.
//!
//! Exit codes: 0 success, 1 configuration/validation error (the message
//! names the offending key), 2 numeric failure (the message names the scan
//! point).

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use num_complex::Complex64;

use nie::doppler::{QuadratureMethod, VelocityGrid};
use nie::model::{DriveField, FieldRole, FieldSet, Level, LevelScheme, SchemeKind, Topology};
use nie::scenarios::{
    load_preset, run_scan_with_workers, DetuningLock, Preset, Regime, ScanVariable,
    PRESET_NAMES,
};
use nie::{fwm, oracle, two_field, NieError};

#[derive(Parser)]
#[command(name = "nie", version, about = "Steady-state responses of driven multilevel gases: interference gain and four-wave mixing spectra at Doppler-broadened transitions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute a parameter scan and write the result table.
    Run(RunArgs),
    /// List the built-in presets (or print one in the preset file format).
    Presets {
        /// Print the full definition of this preset.
        name: Option<String>,
    },
    /// Run the self-verification suite and print a pass/fail report.
    Verify {
        /// Which suite: `ratios`, `oracle` or `all`.
        #[arg(long, default_value = "all")]
        suite: String,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Built-in preset name (see `nie presets`).
    #[arg(long, conflicts_with = "preset_file")]
    preset: Option<String>,
    /// Preset definition file (same format as `nie presets <name>` prints).
    #[arg(long)]
    preset_file: Option<PathBuf>,
    /// Evaluation regime: two_field, fwm_cpt, fwm_two_strong, perturbative.
    #[arg(long)]
    regime: Option<String>,
    /// Scan variable: y1..y4 (detunings), s1..s4 (intensities), z (velocity slice).
    #[arg(long)]
    scan: Option<String>,
    #[arg(long, allow_negative_numbers = true)]
    from: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    to: Option<f64>,
    #[arg(long)]
    points: Option<usize>,
    /// Detuning lock TARGET:SOURCE[:SCALE]; replaces the preset locks.
    /// Without SCALE the wavevector ratio is used.
    #[arg(long = "lock")]
    locks: Vec<String>,
    /// Saturation parameter of field 1 (|G1|^2 in preset units).
    #[arg(long)]
    s1: Option<f64>,
    #[arg(long)]
    s2: Option<f64>,
    #[arg(long)]
    s3: Option<f64>,
    #[arg(long)]
    s4: Option<f64>,
    /// Fixed detuning of field 1 in scaled units y1 = Omega_1/Gamma_1.
    #[arg(long, allow_negative_numbers = true)]
    y1: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    y2: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    y3: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    y4: Option<f64>,
    /// Velocity quadrature: gauss_hermite or trapezoid.
    #[arg(long, default_value = "gauss_hermite")]
    grid: String,
    /// Quadrature nodes (default 96 for gauss_hermite, 4001 for trapezoid).
    #[arg(long)]
    nodes: Option<usize>,
    /// Trapezoid cutoff in units of the thermal velocity.
    #[arg(long, default_value_t = 5.0)]
    cutoff: f64,
    /// Output file path.
    #[arg(long)]
    out: PathBuf,
    /// Output format: csv or tsv (default inferred from the extension).
    #[arg(long)]
    format: Option<String>,
    /// Worker threads (the NIE_THREADS environment variable overrides this).
    #[arg(long, default_value_t = 1)]
    workers: usize,
    /// Also write a gnuplot script next to the output file.
    #[arg(long)]
    emit_plotscript: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (code, message) = match cli.command {
        Command::Run(args) => match run(&args) {
            Ok(()) => (0, None),
            Err(e) => (e.code, Some(e.message)),
        },
        Command::Presets { name } => match presets(name.as_deref()) {
            Ok(()) => (0, None),
            Err(e) => (e.code, Some(e.message)),
        },
        Command::Verify { suite } => match verify(&suite) {
            Ok(true) => (0, None),
            Ok(false) => (1, Some("verification failed".into())),
            Err(e) => (e.code, Some(e.message)),
        },
    };
    if let Some(msg) = message {
        eprintln!("error: {msg}");
    }
    ExitCode::from(code)
}

struct CliError {
    code: u8,
    message: String,
}

fn invalid(key: &str, message: impl std::fmt::Display) -> CliError {
    CliError { code: 1, message: format!("{key}: {message}") }
}

fn from_nie(e: NieError) -> CliError {
    // Numeric failures at evaluation time exit with 2; anything that a
    // config change fixes exits with 1.
    let code = match e {
        NieError::AtScanPoint { .. }
        | NieError::NonFinite(_)
        | NieError::DegenerateSystem
        | NieError::NoConvergence(_)
        | NieError::NoBracket => 2,
        _ => 1,
    };
    CliError { code, message: e.to_string() }
}

fn parse_lock(text: &str) -> Result<DetuningLock, CliError> {
    let parts: Vec<&str> = text.split(':').collect();
    if parts.len() < 2 || parts.len() > 3 {
        return Err(invalid("lock", format!("`{text}` is not TARGET:SOURCE[:SCALE]")));
    }
    let target: usize = parts[0].parse().map_err(|_| invalid("lock", "target must be a field index 1..=4"))?;
    let source: usize = parts[1].parse().map_err(|_| invalid("lock", "source must be a field index 1..=4"))?;
    let scale = match parts.get(2) {
        Some(s) => Some(s.parse::<f64>().map_err(|_| invalid("lock", "scale must be a number"))?),
        None => None,
    };
    Ok(DetuningLock { target, source, scale })
}

fn load_run_preset(args: &RunArgs) -> Result<Preset, CliError> {
    match (&args.preset, &args.preset_file) {
        (Some(name), None) => load_preset(name).map_err(from_nie),
        (None, Some(path)) => {
            let text = fs::read_to_string(path)
                .map_err(|e| invalid("preset-file", format!("{}: {e}", path.display())))?;
            Preset::from_text(&text).map_err(from_nie)
        }
        (None, None) => Err(invalid("preset", "one of --preset or --preset-file is required")),
        (Some(_), Some(_)) => unreachable!("clap conflict"),
    }
}

fn run(args: &RunArgs) -> Result<(), CliError> {
    let mut preset = load_run_preset(args)?;

    // CLI flags override the preset defaults.
    for (j, s) in [args.s1, args.s2, args.s3, args.s4].iter().enumerate() {
        if let Some(s) = s {
            preset.set_s(j + 1, *s);
        }
    }
    for (j, y) in [args.y1, args.y2, args.y3, args.y4].iter().enumerate() {
        if let Some(y) = y {
            preset.set_y(j + 1, *y);
        }
    }

    let mut scan = preset.scan.clone();
    if let Some(var) = &args.scan {
        scan.variable = ScanVariable::from_name(var)
            .ok_or_else(|| invalid("scan", format!("unknown scan variable `{var}`")))?;
    }
    if let Some(v) = args.from {
        scan.from = v;
    }
    if let Some(v) = args.to {
        scan.to = v;
    }
    if let Some(v) = args.points {
        scan.points = v;
    }
    if !args.locks.is_empty() {
        scan.locks = args.locks.iter().map(|l| parse_lock(l)).collect::<Result<_, _>>()?;
    }

    let regime = match &args.regime {
        Some(name) => Regime::from_name(name)
            .ok_or_else(|| invalid("regime", format!("unknown regime `{name}`")))?,
        None => {
            if preset.scheme.kind == SchemeKind::RamanFwm {
                Regime::FwmCpt
            } else {
                Regime::TwoField
            }
        }
    };

    let grid = match QuadratureMethod::from_name(&args.grid) {
        Some(QuadratureMethod::GaussHermite) => {
            VelocityGrid::gauss_hermite(args.nodes.unwrap_or(96), preset.vbar)
        }
        Some(QuadratureMethod::Trapezoid) => {
            VelocityGrid::trapezoid(args.nodes.unwrap_or(4001), args.cutoff, preset.vbar)
        }
        None => return Err(invalid("grid", format!("unknown quadrature `{}`", args.grid))),
    }
    .map_err(from_nie)?;

    let workers = match std::env::var("NIE_THREADS") {
        Ok(v) => v
            .parse::<usize>()
            .map_err(|_| invalid("NIE_THREADS", format!("`{v}` is not a worker count")))?,
        Err(_) => args.workers,
    };
    if workers == 0 {
        return Err(invalid("workers", "worker count must be at least 1"));
    }

    let sep = match args.format.as_deref() {
        Some("csv") => ',',
        Some("tsv") => '\t',
        Some(other) => return Err(invalid("format", format!("unknown format `{other}`"))),
        None => match args.out.extension().and_then(|e| e.to_str()) {
            Some("tsv") => '\t',
            _ => ',',
        },
    };

    // Fail on an unwritable output location before spending compute.
    fs::write(&args.out, "")
        .map_err(|e| invalid("out", format!("{}: {e}", args.out.display())))?;

    let table = run_scan_with_workers(&preset, &scan, &grid, regime, workers).map_err(from_nie)?;
    fs::write(&args.out, table.to_delimited(sep))
        .map_err(|e| invalid("out", format!("{}: {e}", args.out.display())))?;

    if args.emit_plotscript {
        let script_path = args.out.with_extension("gp");
        fs::write(&script_path, plotscript(&args.out, sep, &table.columns))
            .map_err(|e| invalid("out", format!("{}: {e}", script_path.display())))?;
    }
    Ok(())
}

fn plotscript(data: &Path, sep: char, columns: &[String]) -> String {
    let mut s = String::new();
    s.push_str("# gnuplot script; plots the scan table written next to it\n");
    if sep == ',' {
        s.push_str("set datafile separator ','\n");
    }
    s.push_str("set key autotitle columnhead\n");
    s.push_str(&format!("set xlabel '{}'\n", columns[0]));
    let curves: Vec<String> = columns
        .iter()
        .enumerate()
        .skip(1)
        .filter(|(_, c)| c.starts_with("abs2_") || c.starts_with("alpha") || c.starts_with("r_"))
        .map(|(i, _)| format!("'{}' using 1:{} with lines", data.display(), i + 1))
        .collect();
    let curves = if curves.is_empty() {
        vec![format!("'{}' using 1:2 with lines", data.display())]
    } else {
        curves
    };
    s.push_str(&format!("plot {}\n", curves.join(", \\\n     ")));
    s.push_str("pause -1\n");
    s
}

fn presets(name: Option<&str>) -> Result<(), CliError> {
    match name {
        None => {
            for n in PRESET_NAMES {
                let p = load_preset(n).map_err(from_nie)?;
                println!("{n:18} {}", p.description);
            }
        }
        Some(n) => {
            let p = load_preset(n).map_err(from_nie)?;
            print!("{}", p.to_text());
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// verify: ratio suite and oracle-equivalence suite
// ---------------------------------------------------------------------------

fn verify(suite: &str) -> Result<bool, CliError> {
    let (do_ratios, do_oracle) = match suite {
        "ratios" => (true, false),
        "oracle" => (false, true),
        "all" => (true, true),
        other => return Err(invalid("suite", format!("unknown suite `{other}`"))),
    };
    let mut pass = true;
    if do_ratios {
        pass &= verify_ratios().map_err(from_nie)?;
    }
    if do_oracle {
        pass &= verify_oracle().map_err(from_nie)?;
    }
    println!("verify: {}", if pass { "PASS" } else { "FAIL" });
    Ok(pass)
}

fn verify_ratios() -> nie::Result<bool> {
    let grid = VelocityGrid::reference_for(1.0);
    let mut pass = true;
    let cases = [
        ("na2_down", false, 2.5, 231.0),
        ("na2_down", true, 0.4, 0.13),
        ("na2_up", false, 2.7, 1450.0),
        ("na2_up", true, 0.37, 0.24),
    ];
    for (name, inverse, hom_target, avg_target) in cases {
        let mut preset = load_preset(name)?;
        if inverse {
            preset = preset.inverse_populations()?;
        }
        let hom = fwm::perturbative_chi3(&preset.scheme, &preset.fields, 0.0)?;
        let hom_ratio = (hom.chi3_t / hom.chi4_t).norm_sqr();
        let avg = grid.maxwell_average_many(|v| {
            let c = fwm::perturbative_chi3(&preset.scheme, &preset.fields, v)?;
            Ok(vec![c.chi3_t, c.chi4_t])
        })?;
        let avg_ratio = (avg[0] / avg[1]).norm_sqr();
        let hom_err = (hom_ratio - hom_target).abs() / hom_target;
        let avg_err = (avg_ratio - avg_target).abs() / avg_target;
        let ok = hom_err <= 0.02 && avg_err <= 0.10;
        pass &= ok;
        println!(
            "ratios {:18} homogeneous {:9.4} vs {:7} ({:4.1}%)   averaged {:9.4} vs {:7} ({:4.1}%)   {}",
            preset.name,
            hom_ratio,
            hom_target,
            100.0 * hom_err,
            avg_ratio,
            avg_target,
            100.0 * avg_err,
            if ok { "ok" } else { "FAIL" }
        );
    }
    Ok(pass)
}

/// Small deterministic generator for the verification draws (no external
/// RNG dependency needed for the CLI).
struct SplitMix(u64);

impl SplitMix {
    fn next_u64(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(0x9e3779b97f4a7c15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
        z ^ (z >> 31)
    }

    fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        let u = (self.next_u64() >> 11) as f64 / (1u64 << 53) as f64;
        lo + (hi - lo) * u
    }

    fn amp(&mut self, lo: f64, hi: f64) -> Complex64 {
        Complex64::from_polar(self.uniform(lo, hi), self.uniform(0.0, 6.28))
    }
}

fn rel(a: Complex64, b: Complex64) -> f64 {
    (a - b).norm() / a.norm().max(b.norm()).max(1e-12)
}

fn draw_three_level(kind: SchemeKind, topo: Topology, rng: &mut SplitMix) -> (LevelScheme, FieldSet) {
    let mut s = LevelScheme::new(kind, topo);
    let aux = kind.auxiliary_field().unwrap();
    let (_, upi) = kind.transition(aux).unwrap();
    let gm = rng.uniform(1.0, 10.0);
    let gi = rng.uniform(1.0, 10.0);
    let gl = rng.uniform(1.0, 10.0);
    s.gamma_total.insert(Level::M, gm);
    s.gamma_total.insert(upi.max(Level::M).max(Level::N), gi);
    match kind {
        SchemeKind::V => {
            s.gamma_total.insert(Level::G, gi);
            s.gamma.insert((Level::M, Level::L), rng.uniform(0.0, 1.0) * gm);
            s.gamma.insert((Level::G, Level::L), rng.uniform(0.0, 1.0) * gi);
        }
        SchemeKind::Lambda => {
            let gn = rng.uniform(1.0, 10.0);
            s.gamma_total.insert(Level::N, gn);
            let g3 = rng.uniform(0.0, 0.5) * gm;
            s.gamma.insert((Level::M, Level::N), g3);
            s.gamma.insert((Level::M, Level::L), rng.uniform(0.0, 0.5) * gm);
            if topo == Topology::Closed {
                s.gamma.insert((Level::M, Level::L), gm - g3);
                s.gamma.insert((Level::N, Level::L), gn);
            }
        }
        SchemeKind::H => {
            s.gamma_total.insert(Level::F, gi);
            let g2 = rng.uniform(0.0, 1.0) * gi;
            s.gamma.insert((Level::M, Level::L), rng.uniform(0.0, 1.0) * gm);
            s.gamma.insert((Level::F, Level::M), g2);
            if topo == Topology::Closed {
                s.gamma.insert((Level::M, Level::L), gm);
                s.gamma.insert((Level::F, Level::L), gi - g2);
            }
        }
        SchemeKind::RamanFwm => unreachable!(),
    }
    match topo {
        Topology::Open => {
            s.gamma_total.insert(Level::L, gl);
            for &lv in kind.levels() {
                s.pump.insert(lv, rng.uniform(0.1, 2.0));
            }
        }
        Topology::Closed => {
            s.gamma_total.remove(&Level::L);
            if kind == SchemeKind::V {
                s.gamma.insert((Level::M, Level::L), gm);
                s.gamma.insert((Level::G, Level::L), gi);
            }
            s.pump.insert(Level::M, rng.uniform(0.0, 2.0));
            s.pump.insert(upi, rng.uniform(0.0, 2.0));
        }
    }
    let mut fields = FieldSet::default();
    fields.set(4, DriveField {
        rabi: rng.amp(0.5, 5.0),
        detuning: rng.uniform(-10.0, 10.0),
        wavevector: 0.0,
        role: FieldRole::Strong,
    });
    fields.set(aux, DriveField {
        rabi: rng.amp(0.5, 5.0),
        detuning: rng.uniform(-10.0, 10.0),
        wavevector: 0.0,
        role: FieldRole::Strong,
    });
    (s, fields)
}

fn draw_raman(topo: Topology, rng: &mut SplitMix) -> LevelScheme {
    let mut s = LevelScheme::new(SchemeKind::RamanFwm, topo);
    match topo {
        Topology::Open => {
            for &lv in SchemeKind::RamanFwm.levels() {
                s.gamma_total.insert(lv, rng.uniform(1.0, 10.0));
                s.pump.insert(lv, rng.uniform(0.1, 2.0));
            }
            let gg = s.decay(Level::G);
            let gm = s.decay(Level::M);
            s.gamma.insert((Level::G, Level::L), rng.uniform(0.0, 0.45) * gg);
            s.gamma.insert((Level::G, Level::N), rng.uniform(0.0, 0.45) * gg);
            s.gamma.insert((Level::M, Level::L), rng.uniform(0.0, 0.45) * gm);
            s.gamma.insert((Level::M, Level::N), rng.uniform(0.0, 0.45) * gm);
        }
        Topology::Closed => {
            for lv in [Level::N, Level::M, Level::G] {
                s.gamma_total.insert(lv, rng.uniform(1.0, 10.0));
                s.pump.insert(lv, rng.uniform(0.05, 1.5));
            }
            let (gn, gm, gg) = (s.decay(Level::N), s.decay(Level::M), s.decay(Level::G));
            let xg = rng.uniform(0.1, 0.9);
            let xm = rng.uniform(0.1, 0.9);
            s.gamma.insert((Level::G, Level::N), xg * gg);
            s.gamma.insert((Level::G, Level::L), (1.0 - xg) * gg);
            s.gamma.insert((Level::M, Level::N), xm * gm);
            s.gamma.insert((Level::M, Level::L), (1.0 - xm) * gm);
            s.gamma.insert((Level::N, Level::L), gn);
        }
    }
    s
}

fn raman_fields(rng: &mut SplitMix, strong: &[usize]) -> FieldSet {
    let o1 = rng.uniform(-8.0, 8.0);
    let o2 = rng.uniform(-8.0, 8.0);
    let o3 = rng.uniform(-8.0, 8.0);
    let dets = [o1, o2, o3, o1 - o2 + o3];
    let mut fields = FieldSet::default();
    for j in 1..=4 {
        let rabi = if strong.contains(&j) { rng.amp(1.5, 3.0) } else { Complex64::new(0.0, 0.0) };
        fields.set(j, DriveField { rabi, detuning: dets[j - 1], wavevector: 0.0, role: FieldRole::Strong });
    }
    fields
}

const EPS: f64 = 1e-7;

fn oracle_chi_abs(scheme: &LevelScheme, ss: &oracle::SteadyState, j: usize, g: Complex64) -> nie::Result<Complex64> {
    let (lo, up) = scheme.kind.transition(j).unwrap();
    let n = scheme.zero_field_populations()?;
    let dn = n.n_of(lo) - n.n_of(up);
    Ok(ss.coherence(up, lo) * scheme.coherence_width(lo, up) / (Complex64::new(0.0, -1.0) * g * dn))
}

fn verify_oracle() -> nie::Result<bool> {
    let mut pass = true;
    let mut rng = SplitMix(0x5eed);
    for kind in [SchemeKind::V, SchemeKind::Lambda, SchemeKind::H] {
        for topo in [Topology::Open, Topology::Closed] {
            let mut worst = 0.0f64;
            for _ in 0..50 {
                let (scheme, fields) = draw_three_level(kind, topo, &mut rng);
                let c = two_field::susceptibilities(&scheme, &fields, 0.0)?;
                let ss = oracle::steady_state_linear(&scheme, &fields, 0.0)?;
                let aux = kind.auxiliary_field().unwrap();
                let chi4_o = oracle_chi_abs(&scheme, &ss, 4, fields.field(4).rabi)?;
                let mut chii_o = oracle_chi_abs(&scheme, &ss, aux, fields.field(aux).rabi)?;
                if kind == SchemeKind::H {
                    chii_o = chii_o.conj();
                }
                worst = worst.max(rel(chi4_o, c.chi4)).max(rel(chii_o, c.chii));
            }
            let ok = worst <= 1e-5;
            pass &= ok;
            println!(
                "oracle two_field {:7}/{:6}  worst rel err {:.2e}   {}",
                kind.name(),
                topo.name(),
                worst,
                if ok { "ok" } else { "FAIL" }
            );
        }
    }
    for topo in [Topology::Open, Topology::Closed] {
        let mut worst_cpt = 0.0f64;
        let mut worst_ts = 0.0f64;
        for _ in 0..25 {
            let scheme = draw_raman(topo, &mut rng);
            let fields = raman_fields(&mut rng, &[1, 2]);
            let c = fwm::fwm_cpt(&scheme, &fields, 0.0)?;
            let mut probe = fields.clone();
            probe.field_mut(3).rabi = Complex64::new(EPS, 0.0);
            let ss = oracle::steady_state_linear(&scheme, &probe, 0.0)?;
            let (g1, g2) = (fields.field(1).rabi, fields.field(2).rabi);
            let chi4t_o = -ss.coherence(Level::M, Level::L) / (g1 * g2.conj() * EPS);
            worst_cpt = worst_cpt.max(rel(chi4t_o, c.chi4_t));

            let scheme = draw_raman(topo, &mut rng);
            let fields = raman_fields(&mut rng, &[1, 3]);
            let c = fwm::fwm_two_strong(&scheme, &fields, 0.0)?;
            let mut probe = fields.clone();
            probe.field_mut(2).rabi = Complex64::new(EPS, 0.0);
            let ss = oracle::steady_state_linear(&scheme, &probe, 0.0)?;
            let (g1, g3) = (fields.field(1).rabi, fields.field(3).rabi);
            let chi4t_o = -ss.coherence(Level::M, Level::L) / (g1 * EPS * g3);
            worst_ts = worst_ts.max(rel(chi4t_o, c.chi4_t));
        }
        for (label, worst) in [("fwm_cpt", worst_cpt), ("fwm_two_strong", worst_ts)] {
            let ok = worst <= 1e-5;
            pass &= ok;
            println!(
                "oracle {:15}/{:6}  worst rel err {:.2e}   {}",
                label,
                topo.name(),
                worst,
                if ok { "ok" } else { "FAIL" }
            );
        }
    }
    Ok(pass)
}
