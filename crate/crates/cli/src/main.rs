use clap::{Args, Parser, Subcommand, ValueEnum};
use rabmod_cli::config::{ConfigError, FamilyChoice, RunConfig, Side, Thickness};
use rabmod_cli::run::{cmd_build, cmd_clp, cmd_confdim, cmd_modulus, cmd_presets, CliError, Output};
use std::path::PathBuf;
use std::process::ExitCode;

/// Moduli of curve families on boundaries of right-angled buildings.
///
/// Exit codes: 0 success, 1 malformed configuration, 2 some solve hit its
/// iteration cap, 3 any other failure (budget, io).
#[derive(Parser)]
#[command(name = "rabmod", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build chamber balls and level files into the cache.
    Build(Overrides),
    /// Modulus of one family for every k and p in the configured ranges.
    Modulus(Overrides),
    /// Crossing exponents Q_A, Q and Q_W per scale.
    Confdim(Overrides),
    /// Condenser moduli over a grid of shadow-ball radii.
    Clp(Overrides),
    /// List the built-in presets.
    Presets,
}

#[derive(Copy, Clone, ValueEnum)]
enum FamilyArg {
    Far,
    RetractedFar,
    Condenser,
}

#[derive(Copy, Clone, ValueEnum)]
enum SideArg {
    Building,
    Apartment,
}

/// Flags override the corresponding fields of the `--config` file.
#[derive(Args)]
struct Overrides {
    /// JSON run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    preset: Option<String>,
    /// Uniform generator order.
    #[arg(long)]
    thickness: Option<u32>,
    #[arg(long)]
    k_min: Option<usize>,
    #[arg(long)]
    k_max: Option<usize>,
    /// Sets both k_min and k_max.
    #[arg(long, conflicts_with_all = ["k_min", "k_max"])]
    k: Option<usize>,
    #[arg(long)]
    apartment_k_max: Option<usize>,
    #[arg(long)]
    m_probe: Option<usize>,
    #[arg(long)]
    t0: Option<usize>,
    /// Comma-separated exponents.
    #[arg(long, value_delimiter = ',')]
    p: Option<Vec<f64>>,
    /// Comma-separated subset of Q_A,Q,Q_W.
    #[arg(long, value_delimiter = ',')]
    exponents: Option<Vec<String>>,
    #[arg(long)]
    tol_sep: Option<f64>,
    #[arg(long)]
    tol_obj: Option<f64>,
    #[arg(long)]
    max_rounds: Option<usize>,
    /// Chamber budget per ball.
    #[arg(long)]
    budget: Option<usize>,
    #[arg(long, value_enum)]
    family: Option<FamilyArg>,
    #[arg(long)]
    center: Option<usize>,
    #[arg(long)]
    inner: Option<usize>,
    #[arg(long)]
    outer: Option<usize>,
    #[arg(long, value_enum)]
    side: Option<SideArg>,
    /// Weight apartment members by retraction fiber counts.
    #[arg(long)]
    weighted: bool,
    #[arg(long)]
    seed: Option<u64>,
    /// Cache root; defaults to $RABMOD_CACHE, then ./.rabmod-cache.
    #[arg(long)]
    cache_dir: Option<PathBuf>,
    /// Directory receiving `<command>.csv`.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Output file; takes precedence over --out-dir. Default is stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Overrides {
    fn resolve(&self) -> Result<RunConfig, ConfigError> {
        let mut c = match &self.config {
            Some(path) => RunConfig::from_file(path)?,
            None => RunConfig::default(),
        };
        if let Some(v) = &self.preset {
            c.preset = Some(v.clone());
            c.graph = None;
        }
        if let Some(q) = self.thickness {
            c.thickness = Some(Thickness::Uniform(q));
        }
        if let Some(k) = self.k {
            c.k_min = k;
            c.k_max = k;
        }
        macro_rules! set {
            ($($flag:ident => $($field:ident).+),* $(,)?) => {
                $(if let Some(v) = &self.$flag { c.$($field).+ = v.clone(); })*
            };
        }
        set!(
            k_min => k_min, k_max => k_max, m_probe => m_probe, t0 => t0, p => p_grid,
            exponents => exponents, tol_sep => solver.tol_sep, tol_obj => solver.tol_obj,
            max_rounds => solver.max_rounds, budget => budget, seed => seed,
        );
        if let Some(v) = self.apartment_k_max {
            c.apartment_k_max = Some(v);
        }
        if let Some(d) = &self.cache_dir {
            c.cache_dir = Some(d.clone());
        }
        if let Some(d) = &self.out_dir {
            c.out_dir = Some(d.clone());
        }
        if let Some(s) = self.side {
            c.side = match s {
                SideArg::Building => Side::Building,
                SideArg::Apartment => Side::Apartment,
            };
        }
        if self.weighted {
            c.weighted = true;
        }
        let (mut center, mut inner, mut outer) = match c.family {
            FamilyChoice::Condenser { center, inner, outer } => (center, inner, outer),
            _ => (0, 1, 2),
        };
        center = self.center.unwrap_or(center);
        inner = self.inner.unwrap_or(inner);
        outer = self.outer.unwrap_or(outer);
        match self.family {
            Some(FamilyArg::Far) => c.family = FamilyChoice::Far,
            Some(FamilyArg::RetractedFar) => c.family = FamilyChoice::RetractedFar,
            Some(FamilyArg::Condenser) => c.family = FamilyChoice::Condenser { center, inner, outer },
            None => {
                if let FamilyChoice::Condenser { .. } = c.family {
                    c.family = FamilyChoice::Condenser { center, inner, outer };
                } else if self.center.is_some() || self.inner.is_some() || self.outer.is_some() {
                    return Err(ConfigError::new("family", "--center, --inner and --outer need a condenser family"));
                }
            }
        }
        c.validate()?;
        Ok(c)
    }
}

fn emit(out: &Output, name: &str, file: Option<&PathBuf>, cfg: Option<&RunConfig>) -> Result<(), CliError> {
    let Some(csv) = &out.csv else { return Ok(()) };
    let target = file.cloned().or_else(|| cfg.and_then(|c| c.out_dir.as_ref()).map(|d| d.join(format!("{name}.csv"))));
    match target {
        Some(path) => {
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir)?;
            }
            std::fs::write(&path, csv)?;
            eprintln!("rabmod: wrote {}", path.display());
        }
        None => print!("{csv}"),
    }
    Ok(())
}

fn run(cli: Cli) -> Result<Output, CliError> {
    let (name, o) = match &cli.command {
        Command::Presets => {
            let out = cmd_presets();
            emit(&out, "presets", None, None)?;
            return Ok(out);
        }
        Command::Build(o) => ("build", o),
        Command::Modulus(o) => ("modulus", o),
        Command::Confdim(o) => ("confdim", o),
        Command::Clp(o) => ("clp", o),
    };
    let cfg = o.resolve()?;
    eprintln!("rabmod: config {}", &cfg.hash_hex()[..16]);
    let out = match cli.command {
        Command::Build(_) => cmd_build(&cfg)?,
        Command::Modulus(_) => cmd_modulus(&cfg)?,
        Command::Confdim(_) => cmd_confdim(&cfg)?,
        Command::Clp(_) => cmd_clp(&cfg)?,
        Command::Presets => unreachable!(),
    };
    emit(&out, name, o.out.as_ref(), Some(&cfg))?;
    Ok(out)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(out) if out.capped => {
            eprintln!("rabmod: some solves stopped at the iteration cap");
            ExitCode::from(2)
        }
        Ok(_) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("rabmod: error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
