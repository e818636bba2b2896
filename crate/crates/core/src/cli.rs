//! `gaugekit` command line.
//!
//! Exit codes: 0 success, 1 negative verdict (`identify` found no gauge
//! transform, or `verify` exceeded the tolerance), 2 malformed input or
//! arguments, 3 numeric failure, 4 `identify` could not decide.

use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::error::{Error, Result};
use crate::gauge::gauge_transform;
use crate::identify::{
    self, find_idempotents, GaugeCertificate, IdempotentSet, NonAutoSystem, Status,
};
use crate::io;
use crate::linalg::RealMatrix;
use crate::odeint::{
    integrate, verify_correspondence, CorrespondenceReport, OdeOptions, Trajectory, DEFAULT_SAMPLES,
};
use crate::polyfield::fmt_num;

pub const EXIT_OK: u8 = 0;
pub const EXIT_NEGATIVE: u8 = 1;
pub const EXIT_INPUT: u8 = 2;
pub const EXIT_NUMERIC: u8 = 3;
pub const EXIT_UNDETERMINED: u8 = 4;

#[derive(Parser, Debug)]
#[command(
    name = "gaugekit",
    version,
    about = "Gauge transforms of polynomial ODEs and their identification"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Gauge-transform an autonomous field by a matrix curve.
    Transform {
        #[arg(long)]
        field: PathBuf,
        #[arg(long)]
        curve: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Decide whether a nonautonomous system is a gauge transform.
    Identify {
        #[arg(long)]
        system: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Integrate a system, or a field optionally transformed by a curve.
    Integrate {
        #[arg(long, conflicts_with_all = ["field", "curve"], required_unless_present = "field")]
        system: Option<PathBuf>,
        #[arg(long)]
        field: Option<PathBuf>,
        #[arg(long, requires = "field")]
        curve: Option<PathBuf>,
        #[arg(
            long,
            value_delimiter = ',',
            allow_hyphen_values = true,
            required = true
        )]
        x0: Vec<f64>,
        /// Number of output samples.
        #[arg(long, default_value_t = DEFAULT_SAMPLES)]
        samples: usize,
        /// Integrator tolerance (relative and absolute).
        #[arg(long, default_value_t = 1e-10)]
        ode_tol: f64,
        #[command(flatten)]
        common: Common,
    },
    /// Check that `A(t) z(t)` solves the gauge transform.
    Verify {
        #[arg(long)]
        field: PathBuf,
        #[arg(long)]
        curve: PathBuf,
        #[arg(
            long,
            value_delimiter = ',',
            allow_hyphen_values = true,
            required = true
        )]
        x0: Vec<f64>,
        /// Integrator tolerance; the deviation is compared against --tol.
        #[arg(long, default_value_t = 1e-10)]
        ode_tol: f64,
        #[command(flatten)]
        common: Common,
    },
    /// Nonzero solutions of `p(c) = c` for a homogeneous field.
    Idempotents {
        #[arg(long)]
        field: PathBuf,
        #[arg(long, default_value_t = 200)]
        starts: usize,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// Output file; without it the report goes to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    t0: f64,
    #[arg(long, default_value_t = 1.0, allow_hyphen_values = true)]
    t1: f64,
    /// Number of grid points on [t0, t1].
    #[arg(long, default_value_t = identify::DEFAULT_GRID_POINTS)]
    grid: usize,
    #[arg(long, default_value_t = identify::DEFAULT_TOL)]
    tol: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Defaults to json for --out and text for stdout.
    #[arg(long, value_enum)]
    format: Option<Format>,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Text,
}

/// Validated settings shared by all subcommands.
#[derive(Clone, Debug)]
pub struct RunConfig {
    pub t0: f64,
    pub t1: f64,
    pub grid_points: usize,
    pub tol: f64,
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub format: Format,
}

impl RunConfig {
    fn from_common(c: &Common) -> Result<Self> {
        if !(c.t0.is_finite() && c.t1.is_finite() && c.t1 > c.t0) {
            return Err(Error::invalid(format!(
                "--t1 ({}) must exceed --t0 ({})",
                c.t1, c.t0
            )));
        }
        if c.grid < 2 {
            return Err(Error::invalid("--grid must be at least 2"));
        }
        if !(c.tol > 0.0 && c.tol.is_finite()) {
            return Err(Error::invalid("--tol must be positive"));
        }
        let format = c.format.unwrap_or(if c.out.is_some() {
            Format::Json
        } else {
            Format::Text
        });
        Ok(RunConfig {
            t0: c.t0,
            t1: c.t1,
            grid_points: c.grid,
            tol: c.tol,
            seed: c.seed,
            out: c.out.clone(),
            format,
        })
    }

    pub fn grid(&self) -> Result<Vec<f64>> {
        identify::grid(self.t0, self.t1, self.grid_points)
    }
}

/// What a subcommand produced: the report in both renderings plus the exit code.
struct Outcome {
    json: String,
    text: String,
    summary: String,
    code: u8,
}

fn emit(cfg: &RunConfig, o: Outcome, stdout: &mut dyn Write) -> Result<u8> {
    let body = match cfg.format {
        Format::Json => &o.json,
        Format::Text => &o.text,
    };
    match &cfg.out {
        Some(path) => {
            std::fs::write(path, body).map_err(|e| Error::File {
                file: path.display().to_string(),
                location: String::new(),
                message: e.to_string(),
            })?;
            let _ = writeln!(stdout, "{}", o.summary);
        }
        None => {
            let _ = stdout.write_all(body.as_bytes());
        }
    }
    Ok(o.code)
}

fn fmt_matrix(m: &RealMatrix) -> String {
    let cells: Vec<Vec<String>> = (0..m.nrows())
        .map(|i| m.row(i).iter().map(|v| fmt_num(*v)).collect())
        .collect();
    let width = cells.iter().flatten().map(String::len).max().unwrap_or(1);
    let mut s = String::new();
    for row in cells {
        let padded: Vec<String> = row.iter().map(|c| format!("{c:>width$}")).collect();
        let _ = writeln!(s, "  [ {} ]", padded.join("  "));
    }
    s
}

fn system_text(q: &NonAutoSystem) -> String {
    let mut s = String::new();
    for comp in 0..q.dim() {
        let parts: Vec<String> = q
            .terms()
            .into_iter()
            .filter(|(i, _, _)| *i == comp)
            .map(|(_, alpha, c)| {
                let mono: Vec<String> = alpha
                    .iter()
                    .enumerate()
                    .filter(|(_, k)| **k > 0)
                    .map(|(j, k)| {
                        if *k == 1 {
                            format!("x{}", j + 1)
                        } else {
                            format!("x{}^{k}", j + 1)
                        }
                    })
                    .collect();
                if mono.is_empty() {
                    format!("({c})")
                } else {
                    format!("({c})*{}", mono.join("*"))
                }
            })
            .collect();
        let rhs = if parts.is_empty() {
            "0".to_string()
        } else {
            parts.join(" + ")
        };
        let _ = writeln!(s, "dx{}/dt = {rhs}", comp + 1);
    }
    s
}

fn certificate_text(cert: &GaugeCertificate) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "status: {}", cert.status.as_str());
    let _ = writeln!(s, "B =\n{}", fmt_matrix(&cert.b_matrix).trim_end());
    let _ = writeln!(s, "kernel_dim: {}", cert.kernel_dim());
    for (k, m) in cert.kernel_basis.iter().enumerate() {
        let _ = writeln!(s, "kernel[{k}] =\n{}", fmt_matrix(m).trim_end());
    }
    let b: Vec<String> = cert.b.iter().map(|v| fmt_num(*v)).collect();
    let _ = writeln!(s, "b = ({})", b.join(", "));
    let _ = write!(s, "residuals: constant {:.3e}", cert.residuals.constant);
    for (j, r) in &cert.residuals.per_degree {
        let _ = write!(s, ", degree {j} {r:.3e}");
    }
    let _ = writeln!(s);
    if let (Some(a), Some(b)) = (cert.grid.first(), cert.grid.last()) {
        let _ = writeln!(s, "grid: {} points on [{a}, {b}]", cert.grid.len());
    }
    let _ = writeln!(s, "f:");
    for line in cert.f.to_string().lines() {
        let _ = writeln!(s, "  {line}");
    }
    for d in &cert.diagnostics {
        let _ = writeln!(s, "note: {d}");
    }
    s
}

fn idempotents_text(set: &IdempotentSet) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{} idempotents ({} converged starts)",
        set.points.len(),
        set.converged
    );
    for p in &set.points {
        let coords: Vec<String> = p
            .iter()
            .map(|z| {
                // Newton leaves roundoff-level parts; show them as zero
                let snap = |v: f64| if v.abs() < 1e-12 { 0.0 } else { v };
                let (re, im) = (fmt_num(snap(z.re)), fmt_num(snap(z.im)));
                let sign = if im.starts_with('-') { "" } else { "+" };
                format!("{re}{sign}{im}i")
            })
            .collect();
        let _ = writeln!(s, "  ({})", coords.join(", "));
    }
    let _ = writeln!(
        s,
        "spanning={} reliable={} verdict: {}",
        set.spanning,
        set.reliable,
        set.verdict()
    );
    s
}

fn verify_text(r: &CorrespondenceReport, tol: f64) -> String {
    let mut s = format!(
        "max deviation {:.6e} (tol {tol:e}) on [.., {}]: {}\n",
        r.max_deviation,
        r.t_end,
        if r.max_deviation <= tol {
            "ok"
        } else {
            "FAILED"
        }
    );
    if r.truncated {
        s.push_str("note: compared interval truncated by blow-up\n");
    }
    s
}

fn trajectory_text(z: &Trajectory) -> String {
    let mut s = String::new();
    for (t, x) in z.t.iter().zip(&z.x) {
        let xs: Vec<String> = x.iter().map(|v| format!("{v:.17e}")).collect();
        let _ = writeln!(s, "{t:.17e} {}", xs.join(" "));
    }
    s
}

fn run_transform(field: &Path, curve: &Path, cfg: &RunConfig) -> Result<Outcome> {
    let f = io::read_field(field)?;
    let a = io::read_curve(curve)?;
    if a.dim() != f.dim() {
        return Err(Error::File {
            file: curve.display().to_string(),
            location: "dim".into(),
            message: format!(
                "curve dimension {} differs from field dimension {}",
                a.dim(),
                f.dim()
            ),
        });
    }
    let ev = gauge_transform(&f, &a)?;
    if let Some(q) = ev.closed_form() {
        return Ok(Outcome {
            json: io::to_json(&io::system_to_doc(q)),
            text: system_text(q),
            summary: "closed-form system written".into(),
            code: EXIT_OK,
        });
    }
    let times = cfg.grid()?;
    a.prepare(cfg.t0, cfg.t1)?;
    let sampled = ev.sample(&times)?;
    let mut text = format!(
        "no closed form; coefficients sampled at {} times\n",
        times.len()
    );
    for (t, fld) in sampled.t.iter().zip(&sampled.fields) {
        let _ = writeln!(text, "t = {t}");
        for line in fld.to_string().lines() {
            let _ = writeln!(text, "  {line}");
        }
    }
    Ok(Outcome {
        json: io::to_json(&io::sampled_to_doc(&sampled)),
        text,
        summary: format!("sampled system written ({} times)", times.len()),
        code: EXIT_OK,
    })
}

fn run_identify(system: &Path, cfg: &RunConfig) -> Result<Outcome> {
    let q = io::read_system(system)?;
    let cert = identify::identify(
        &q,
        &cfg.grid()?,
        &identify::IdentifyOptions { tol: cfg.tol },
    );
    let code = match cert.status {
        Status::Gauge | Status::LinearFamily => EXIT_OK,
        Status::NotGauge => EXIT_NEGATIVE,
        Status::Undetermined => EXIT_UNDETERMINED,
    };
    Ok(Outcome {
        json: io::to_json(&io::certificate_to_doc(&cert)),
        text: certificate_text(&cert),
        summary: format!("status: {}", cert.status.as_str()),
        code,
    })
}

fn check_x0(x0: &[f64], dim: usize) -> Result<()> {
    if x0.len() != dim {
        return Err(Error::invalid(format!(
            "--x0 has {} entries, the system has dimension {dim}",
            x0.len()
        )));
    }
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("--x0 entries must be finite"));
    }
    Ok(())
}

struct IntegrateArgs<'a> {
    system: Option<&'a Path>,
    field: Option<&'a Path>,
    curve: Option<&'a Path>,
    x0: &'a [f64],
    samples: usize,
    ode_tol: f64,
}

fn run_integrate(
    args: IntegrateArgs<'_>,
    cfg: &RunConfig,
    stderr: &mut dyn Write,
) -> Result<Outcome> {
    if !(args.ode_tol > 0.0) {
        return Err(Error::invalid("--ode-tol must be positive"));
    }
    if args.samples < 2 {
        return Err(Error::invalid("--samples must be at least 2"));
    }
    let opts = OdeOptions::with_tol(args.ode_tol);
    let span = (cfg.t0, cfg.t1);
    let z = match (args.system, args.field) {
        (Some(path), _) => {
            let q = io::read_system(path)?;
            check_x0(args.x0, q.dim())?;
            integrate(&q, args.x0, span, &opts, args.samples)?
        }
        (None, Some(path)) => {
            let f = io::read_field(path)?;
            check_x0(args.x0, f.dim())?;
            match args.curve {
                Some(c) => {
                    let a = io::read_curve(c)?;
                    if a.dim() != f.dim() {
                        return Err(Error::invalid("curve and field dimensions differ"));
                    }
                    a.prepare(cfg.t0, cfg.t1)?;
                    integrate(
                        &gauge_transform(&f, &a)?,
                        args.x0,
                        span,
                        &opts,
                        args.samples,
                    )?
                }
                None => integrate(&f, args.x0, span, &opts, args.samples)?,
            }
        }
        (None, None) => return Err(Error::invalid("one of --system or --field is required")),
    };
    if let Some(t) = z.blow_up {
        let _ = writeln!(
            stderr,
            "warning: solution escaped at t = {t}; trajectory truncated"
        );
    }
    Ok(Outcome {
        json: io::to_json(&io::trajectory_to_doc(&z)),
        text: trajectory_text(&z),
        summary: format!("trajectory written ({} samples)", z.len()),
        code: EXIT_OK,
    })
}

fn run_verify(
    field: &Path,
    curve: &Path,
    x0: &[f64],
    ode_tol: f64,
    cfg: &RunConfig,
) -> Result<Outcome> {
    if !(ode_tol > 0.0) {
        return Err(Error::invalid("--ode-tol must be positive"));
    }
    let f = io::read_field(field)?;
    let a = io::read_curve(curve)?;
    if a.dim() != f.dim() {
        return Err(Error::invalid("curve and field dimensions differ"));
    }
    check_x0(x0, f.dim())?;
    let r = verify_correspondence(&f, &a, x0, (cfg.t0, cfg.t1), ode_tol)?;
    let passed = r.max_deviation <= cfg.tol;
    Ok(Outcome {
        json: io::to_json(&io::verify_to_doc(&r, cfg.tol)),
        text: verify_text(&r, cfg.tol),
        summary: format!("max deviation {:.6e}", r.max_deviation),
        code: if passed { EXIT_OK } else { EXIT_NEGATIVE },
    })
}

fn run_idempotents(field: &Path, starts: usize, cfg: &RunConfig) -> Result<Outcome> {
    let p = io::read_field(field)?;
    let set = find_idempotents(&p, starts, cfg.seed)?;
    Ok(Outcome {
        json: io::to_json(&io::idempotents_to_doc(&set)),
        text: idempotents_text(&set),
        summary: format!(
            "{} idempotents, spanning={}",
            set.points.len(),
            set.spanning
        ),
        code: EXIT_OK,
    })
}

fn dispatch(cli: Cli, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<u8> {
    match cli.command {
        Command::Transform {
            field,
            curve,
            common,
        } => {
            let cfg = RunConfig::from_common(&common)?;
            emit(&cfg, run_transform(&field, &curve, &cfg)?, stdout)
        }
        Command::Identify { system, common } => {
            let cfg = RunConfig::from_common(&common)?;
            emit(&cfg, run_identify(&system, &cfg)?, stdout)
        }
        Command::Integrate {
            system,
            field,
            curve,
            x0,
            samples,
            ode_tol,
            common,
        } => {
            let cfg = RunConfig::from_common(&common)?;
            let args = IntegrateArgs {
                system: system.as_deref(),
                field: field.as_deref(),
                curve: curve.as_deref(),
                x0: &x0,
                samples,
                ode_tol,
            };
            emit(&cfg, run_integrate(args, &cfg, stderr)?, stdout)
        }
        Command::Verify {
            field,
            curve,
            x0,
            ode_tol,
            common,
        } => {
            let cfg = RunConfig::from_common(&common)?;
            emit(
                &cfg,
                run_verify(&field, &curve, &x0, ode_tol, &cfg)?,
                stdout,
            )
        }
        Command::Idempotents {
            field,
            starts,
            common,
        } => {
            let cfg = RunConfig::from_common(&common)?;
            emit(&cfg, run_idempotents(&field, starts, &cfg)?, stdout)
        }
    }
}

/// Runs one command line and returns the process exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
            let rendered = e.render().to_string();
            let _ = if e.use_stderr() {
                stderr.write_all(rendered.as_bytes())
            } else {
                stdout.write_all(rendered.as_bytes())
            };
            return code;
        }
    };
    match dispatch(cli, stdout, stderr) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            if e.is_numeric() {
                EXIT_NUMERIC
            } else {
                EXIT_INPUT
            }
        }
    }
}

pub fn main() -> ExitCode {
    let code = run(
        std::env::args_os(),
        &mut std::io::stdout(),
        &mut std::io::stderr(),
    );
    ExitCode::from(code)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_args(args: &[&str]) -> (u8, String, String) {
        let mut out = Vec::new();
        let mut err = Vec::new();
        let code = run(
            std::iter::once("gaugekit").chain(args.iter().copied()),
            &mut out,
            &mut err,
        );
        (
            code,
            String::from_utf8(out).unwrap(),
            String::from_utf8(err).unwrap(),
        )
    }

    #[test]
    fn bad_flags_exit_2() {
        assert_eq!(run_args(&["frobnicate"]).0, EXIT_INPUT);
        assert_eq!(run_args(&["identify"]).0, EXIT_INPUT);
        let (code, _, err) =
            run_args(&["identify", "--system", "x.json", "--t0", "1", "--t1", "0"]);
        assert_eq!(code, EXIT_INPUT);
        assert!(err.contains("--t1"));
        assert_eq!(
            run_args(&["identify", "--system", "x.json", "--grid", "1"]).0,
            EXIT_INPUT
        );
    }

    #[test]
    fn help_exits_0() {
        let (code, out, _) = run_args(&["--help"]);
        assert_eq!(code, EXIT_OK);
        assert!(out.contains("identify"));
    }

    #[test]
    fn missing_file_exit_2() {
        let (code, _, err) = run_args(&["idempotents", "--field", "/nonexistent/p.json"]);
        assert_eq!(code, EXIT_INPUT);
        assert!(err.contains("/nonexistent/p.json"));
    }

    #[test]
    fn format_defaults() {
        let c = Common {
            out: None,
            t0: 0.0,
            t1: 1.0,
            grid: 33,
            tol: 1e-6,
            seed: 0,
            format: None,
        };
        assert_eq!(RunConfig::from_common(&c).unwrap().format, Format::Text);
        let c = Common {
            out: Some("r.json".into()),
            ..c
        };
        assert_eq!(RunConfig::from_common(&c).unwrap().format, Format::Json);
    }

    #[test]
    fn negative_x0_accepted() {
        let cli = Cli::try_parse_from([
            "gaugekit", "verify", "--field", "f", "--curve", "c", "--x0", "-0.3,0.4",
        ])
        .unwrap();
        let Command::Verify { x0, .. } = cli.command else {
            panic!()
        };
        assert_eq!(x0, vec![-0.3, 0.4]);
    }
}
