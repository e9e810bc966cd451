//! `ewlattice` command-line driver: every pipeline as a subcommand, with a
//! JSON run configuration and a manifest next to every set of outputs.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};
use ewlattice::bifurcation::{alpha_eta, newton_branch, s_squared_of_omega, BranchOptions};
use ewlattice::config::RunConfig;
use ewlattice::fields::Spectral;
use ewlattice::lattice::{make_grid, reduce_to_fundamental};
use ewlattice::lll::build_chi;
use ewlattice::shapeopt::{modular_distance, refine_max, scan_eta_window};
use ewlattice::spectrum::{magnetic_laplacian_spectrum, magnetic_laplacian_spectrum_extrapolated, EigenOptions};
use ewlattice::verify::{run_suite, Fault, VerifyOptions};
use num_complex::Complex64;
use serde::Serialize;
use sha2::{Digest, Sha256};

/// Environment variable overriding the worker-thread count.
const WORKERS_ENV: &str = "EWLATTICE_WORKERS";

#[derive(Parser)]
#[command(
    name = "ewlattice",
    version,
    about = "Vortex lattices of the electroweak vacuum near the critical field"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Debug)]
struct Common {
    /// JSON run configuration (defaults are used for missing keys).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (overrides `output_dir`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Grid points per lattice direction.
    #[arg(long = "grid-n")]
    grid_n: Option<usize>,
    /// Comma-separated list of omega values.
    #[arg(long, allow_hyphen_values = true)]
    omega: Option<String>,
    /// Shape parameter as `re,im`.
    #[arg(long, allow_hyphen_values = true)]
    tau: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Low-lying spectrum of the magnetic Laplacian.
    Spectrum {
        #[command(flatten)]
        common: Common,
        /// Also solve on the doubled grid and Richardson-extrapolate.
        #[arg(long)]
        extrapolate: bool,
    },
    /// Raster of eta over the fundamental domain and the refined maximiser.
    EtaMap {
        #[command(flatten)]
        common: Common,
    },
    /// Newton solution of the bifurcating branch at each omega.
    Branch {
        #[command(flatten)]
        common: Common,
    },
    /// Invariant suite; exit status 0 iff every check passes.
    Verify {
        #[command(flatten)]
        common: Common,
        /// Inject a deliberate fault to exercise the failure path.
        #[arg(long = "inject-fault", value_enum)]
        inject_fault: Option<FaultArg>,
        /// Skip the Newton-branch checks.
        #[arg(long = "no-branch")]
        no_branch: bool,
    },
    /// Reduce a shape parameter to the SL(2,Z) fundamental domain.
    ReduceTau {
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum FaultArg {
    /// Use G_{m_h} - G_{m_z} in place of G_{m_z} - G_{m_h}.
    FlipGreen,
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    /// Bad invocation or configuration: exit status 2.
    #[error("{0}")]
    Usage(String),
    /// A pipeline failed: exit status 1.
    #[error("{0}")]
    Run(String),
}

impl From<ewlattice::Error> for CliError {
    fn from(e: ewlattice::Error) -> Self {
        CliError::Run(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Run(format!("i/o error: {e}"))
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn parse_pair(s: &str) -> CliResult<[f64; 2]> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    if parts.len() != 2 {
        return Err(CliError::Usage(format!("expected `re,im`, got `{s}`")));
    }
    let p = |t: &str| {
        t.parse::<f64>()
            .map_err(|e| CliError::Usage(format!("bad number `{t}`: {e}")))
    };
    Ok([p(parts[0])?, p(parts[1])?])
}

fn parse_list(s: &str) -> CliResult<Vec<f64>> {
    s.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|e| CliError::Usage(format!("bad omega `{t}`: {e}")))
        })
        .collect()
}

/// Load the configuration, apply command-line overrides and validate.
fn load_config(c: &Common) -> CliResult<RunConfig> {
    let mut cfg = match &c.config {
        None => RunConfig::default(),
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| {
                CliError::Usage(format!(
                    "cannot read config {}: {e}\n\n{}",
                    path.display(),
                    Cli::command().render_usage()
                ))
            })?;
            serde_json::from_str(&text)
                .map_err(|e| CliError::Usage(format!("malformed config {}: {e}", path.display())))?
        }
    };
    if let Some(out) = &c.out {
        cfg.output_dir = out.display().to_string();
    }
    if let Some(n) = c.grid_n {
        cfg.grid_n = n;
    }
    if let Some(w) = &c.omega {
        cfg.omegas = parse_list(w)?;
    }
    if let Some(t) = &c.tau {
        cfg.tau = parse_pair(t)?;
    }
    cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(cfg)
}

fn configure_workers(cfg: &RunConfig) -> CliResult<()> {
    let env = match std::env::var(WORKERS_ENV) {
        Ok(v) => Some(
            v.trim()
                .parse::<usize>()
                .ok()
                .filter(|&k| k > 0)
                .ok_or_else(|| CliError::Usage(format!("{WORKERS_ENV} must be a positive integer, got `{v}`")))?,
        ),
        Err(_) => None,
    };
    if let Some(k) = env.or(cfg.workers) {
        // a second initialisation (e.g. in-process reuse) is harmless
        let _ = rayon::ThreadPoolBuilder::new().num_threads(k).build_global();
    }
    Ok(())
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Serialize)]
struct FileEntry {
    name: String,
    sha256: String,
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    code_version: &'a str,
    config_sha256: String,
    tolerances: ewlattice::config::Tolerances,
    files: Vec<FileEntry>,
    reproducibility: &'a str,
}

/// Output files of one command plus their manifest.
struct Artifacts {
    dir: PathBuf,
    files: Vec<FileEntry>,
}

impl Artifacts {
    fn new(dir: &Path) -> CliResult<Self> {
        fs::create_dir_all(dir)?;
        Ok(Artifacts {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        })
    }

    fn write(&mut self, name: &str, contents: &str) -> CliResult<()> {
        fs::write(self.dir.join(name), contents)?;
        self.files.push(FileEntry {
            name: name.into(),
            sha256: sha256_hex(contents.as_bytes()),
        });
        Ok(())
    }

    fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> CliResult<()> {
        let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Run(e.to_string()))?;
        self.write(name, &(text + "\n"))
    }

    /// Emit the effective configuration and the manifest.
    fn finish(mut self, command: &str, cfg: &RunConfig) -> CliResult<()> {
        let cfg_text = cfg.to_json() + "\n";
        self.write("config.json", &cfg_text)?;
        let manifest = Manifest {
            command,
            code_version: env!("CARGO_PKG_VERSION"),
            config_sha256: sha256_hex(cfg_text.as_bytes()),
            tolerances: cfg.tolerances,
            files: self.files,
            reproducibility: "re-running with config.json reproduces every file; parallel reductions may \
                              change the last few bits (relative differences below 1e-12)",
        };
        let text = serde_json::to_string_pretty(&manifest).map_err(|e| CliError::Run(e.to_string()))?;
        fs::write(self.dir.join("manifest.json"), text + "\n")?;
        Ok(())
    }
}

fn eigen_options(cfg: &RunConfig) -> EigenOptions {
    EigenOptions {
        tol: cfg.tolerances.eigen,
        seed: cfg.seed,
        ..EigenOptions::default()
    }
}

fn cmd_spectrum(c: &Common, extrapolate: bool) -> CliResult<ExitCode> {
    let cfg = load_config(c)?;
    configure_workers(&cfg)?;
    let params = cfg.physical()?;
    let shape = cfg.shape()?;
    let opts = eigen_options(&cfg);
    let n = params.n as i32;
    let report = if extrapolate {
        magnetic_laplacian_spectrum_extrapolated(&shape, n, cfg.grid_n, cfg.eigen_count, &opts)?
    } else {
        magnetic_laplacian_spectrum(&shape, n, cfg.grid_n, cfg.eigen_count, &opts)?
    };
    let mut csv = String::from("index,eigenvalue,residual,extrapolated\n");
    for (k, v) in report.eigenvalues.iter().enumerate() {
        let ext = report
            .extrapolated
            .as_ref()
            .map(|e| format!("{:.16e}", e[k]))
            .unwrap_or_default();
        csv.push_str(&format!("{k},{v:.16e},{:.16e},{ext}\n", report.residuals[k]));
    }
    let mut art = Artifacts::new(Path::new(&cfg.output_dir))?;
    art.write_json("spectrum.json", &report)?;
    art.write("eigenvalues.csv", &csv)?;
    art.finish("spectrum", &cfg)?;
    println!(
        "lowest eigenvalues of -Delta_a (n = {}, N = {}): {:?}",
        params.n,
        cfg.grid_n,
        &report.eigenvalues[..report.eigenvalues.len().min(4)]
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_eta_map(c: &Common) -> CliResult<ExitCode> {
    let cfg = load_config(c)?;
    configure_workers(&cfg)?;
    let params = cfg.physical()?;
    let scan = scan_eta_window(&params, &cfg.window, cfg.scan_resolution, cfg.grid_n)?;
    let refinement = refine_max(&scan, cfg.tolerances.refine)?;
    for w in &refinement.warnings {
        eprintln!("warning: {w}");
    }
    let hex = Complex64::from_polar(1.0, std::f64::consts::FRAC_PI_3);
    #[derive(Serialize)]
    struct Summary<'a> {
        tau_star: [f64; 2],
        eta_star: f64,
        distance_to_hexagonal: f64,
        raster_argmax: [f64; 2],
        raster_argmin_beta: [f64; 2],
        cell: [f64; 2],
        samples: usize,
        refinement: &'a ewlattice::shapeopt::Refinement,
    }
    let am = scan.argmax_sample().tau;
    let ab = scan.argmin_beta_sample().tau;
    let summary = Summary {
        tau_star: [refinement.tau_star.re, refinement.tau_star.im],
        eta_star: refinement.eta_star,
        distance_to_hexagonal: modular_distance(refinement.tau_star, hex)?,
        raster_argmax: [am.re, am.im],
        raster_argmin_beta: [ab.re, ab.im],
        cell: scan.cell,
        samples: scan.samples.len(),
        refinement: &refinement,
    };
    let mut art = Artifacts::new(Path::new(&cfg.output_dir))?;
    art.write("eta_scan.csv", &scan.to_csv())?;
    art.write("eta_heatmap.dat", &scan.to_heatmap())?;
    art.write_json("tau_star.json", &summary)?;
    art.finish("eta-map", &cfg)?;
    println!(
        "tau_star = {:.10} + {:.10} i, eta_star = {:.12}, |tau_star - e^(i pi/3)| = {:.3e}",
        refinement.tau_star.re, refinement.tau_star.im, refinement.eta_star, summary.distance_to_hexagonal
    );
    Ok(ExitCode::SUCCESS)
}

fn scalar_csv(n: usize, values: &[f64]) -> String {
    let mut out = String::from("t1,t2,value\n");
    for (idx, v) in values.iter().enumerate() {
        out.push_str(&format!(
            "{:.16e},{:.16e},{v:.16e}\n",
            (idx / n) as f64 / n as f64,
            (idx % n) as f64 / n as f64
        ));
    }
    out
}

fn cmd_branch(c: &Common) -> CliResult<ExitCode> {
    let cfg = load_config(c)?;
    configure_workers(&cfg)?;
    let params = cfg.physical()?;
    let shape = cfg.shape()?;
    let grid = make_grid(shape, cfg.grid_n)?;
    let chi = build_chi(&shape, params.n, &grid, None, cfg.theta_truncation)?;
    let eta = alpha_eta(&chi, &params)?.eta;
    let opts = BranchOptions {
        galerkin_levels: cfg.galerkin_levels,
        tol: cfg.tolerances.newton,
        ..BranchOptions::default()
    };
    let spectral = Spectral::new(&grid);
    let mut art = Artifacts::new(Path::new(&cfg.output_dir))?;
    let mut csv = String::from(
        "omega,s,s2,s2_leading,b,energy_per_area,energy_formula,deficit,deficit_formula,residual,div_current\n",
    );
    let s2t = params.sin2_theta();
    for &omega in &cfg.omegas {
        let tag = format!("{omega:.6e}");
        if omega < 0.0 {
            println!("omega = {omega}: b < b_*, the homogeneous vacuum is stable; no branch");
            continue;
        }
        let b = params.b_of_omega(omega);
        let vac = 0.5 * b * b;
        if omega == 0.0 {
            #[derive(Serialize)]
            struct Echo {
                omega: f64,
                s: f64,
                b: f64,
                energy_per_area: f64,
                note: &'static str,
            }
            art.write_json(
                &format!("branch_omega_{tag}.json"),
                &Echo {
                    omega,
                    s: 0.0,
                    b,
                    energy_per_area: vac,
                    note: "threshold: the branch meets the homogeneous vacuum",
                },
            )?;
            csv.push_str(&format!(
                "{omega:.16e},{:.16e},{:.16e},{:.16e},{b:.16e},{vac:.16e},{vac:.16e},{:.16e},{:.16e},{:.16e},{:.16e}\n",
                0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0
            ));
            println!("omega = 0: vacuum, s = 0");
            continue;
        }
        let bp = newton_branch(omega, &chi, &params, &opts)?;
        let s2_lead = s_squared_of_omega(omega, &chi, &params)?;
        let formula = vac - 0.5 * b * b * s2t * eta * omega * omega;
        csv.push_str(&format!(
            "{omega:.16e},{:.16e},{:.16e},{s2_lead:.16e},{b:.16e},{:.16e},{formula:.16e},{:.16e},{:.16e},{:.16e},{:.16e}\n",
            bp.s,
            bp.s * bp.s,
            bp.energy_per_area,
            bp.energy_deficit,
            vac - formula,
            bp.residual_norm,
            bp.div_current
        ));
        art.write_json(&format!("branch_omega_{tag}.json"), &bp)?;
        let w2: Vec<f64> = bp.state.w.abs2().comps[0].iter().map(|v| v.re).collect();
        let a = &bp.state.a.comps;
        let curl_a: Vec<f64> = spectral.curl(&a[0], &a[1]).iter().map(|v| v.re).collect();
        art.write(&format!("w_abs2_omega_{tag}.csv"), &scalar_csv(cfg.grid_n, &w2))?;
        art.write(&format!("curl_a_omega_{tag}.csv"), &scalar_csv(cfg.grid_n, &curl_a))?;
        println!(
            "omega = {omega}: s = {:.10e}, deficit = {:.10e} (formula {:.10e}), residual {:.2e}",
            bp.s,
            bp.energy_deficit,
            vac - formula,
            bp.residual_norm
        );
    }
    art.write("energy_vs_omega.csv", &csv)?;
    art.finish("branch", &cfg)?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_verify(c: &Common, fault: Option<FaultArg>, no_branch: bool) -> CliResult<ExitCode> {
    let cfg = load_config(c)?;
    configure_workers(&cfg)?;
    let params = cfg.physical()?;
    let opts = VerifyOptions {
        branch_grid_n: cfg.grid_n,
        galerkin_levels: cfg.galerkin_levels,
        branch: !no_branch,
        seed: cfg.seed,
        fault: fault.map(|FaultArg::FlipGreen| Fault::FlipGreenDifference),
        ..VerifyOptions::default()
    };
    let report = run_suite(&params, &opts);
    print!("{}", report.table());
    let mut art = Artifacts::new(Path::new(&cfg.output_dir))?;
    art.write_json("verify.json", &report)?;
    art.finish("verify", &cfg)?;
    Ok(if report.all_passed {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}

fn cmd_reduce_tau(c: &Common) -> CliResult<ExitCode> {
    if c.tau.is_none() {
        return Err(CliError::Usage(format!(
            "reduce-tau needs --tau re,im\n\n{}",
            Cli::command().render_usage()
        )));
    }
    let cfg = load_config(c)?;
    let tau = Complex64::new(cfg.tau[0], cfg.tau[1]);
    let (r, m) = reduce_to_fundamental(tau)?;
    #[derive(Serialize)]
    struct Reduced {
        input: [f64; 2],
        reduced: [f64; 2],
        matrix: [[i64; 2]; 2],
    }
    let out = Reduced {
        input: [tau.re, tau.im],
        reduced: [r.re, r.im],
        matrix: m,
    };
    let text = serde_json::to_string_pretty(&out).map_err(|e| CliError::Run(e.to_string()))?;
    println!("{text}");
    let mut art = Artifacts::new(Path::new(&cfg.output_dir))?;
    art.write("reduce_tau.json", &(text + "\n"))?;
    art.finish("reduce-tau", &cfg)?;
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Spectrum { common, extrapolate } => cmd_spectrum(common, *extrapolate),
        Command::EtaMap { common } => cmd_eta_map(common),
        Command::Branch { common } => cmd_branch(common),
        Command::Verify {
            common,
            inject_fault,
            no_branch,
        } => cmd_verify(common, *inject_fault, *no_branch),
        Command::ReduceTau { common } => cmd_reduce_tau(common),
    };
    match result {
        Ok(code) => code,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Run(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
