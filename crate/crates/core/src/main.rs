use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use lyapdim::cli;
use lyapdim::config::{KeyValues, OutputConfig};
use lyapdim::output::{emit, render_all};
use lyapdim::Result;

#[derive(Parser)]
#[command(name = "lyapdim", version, about = "Lyapunov dimension bounds and spectra for delay equations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Analytic dimension bound for a model.
    Bound {
        #[command(flatten)]
        model: ModelArgs,
        /// Optimize over the spatio-temporal rescaling.
        #[arg(long)]
        scaled: bool,
        /// Bound on |F'|: rough or tight.
        #[arg(long)]
        lambda: Option<String>,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Characteristic roots at an equilibrium.
    Roots {
        #[command(flatten)]
        model: ModelArgs,
        /// plus (symmetric equilibria) or zero.
        #[arg(long)]
        equilibrium: Option<String>,
        #[arg(long)]
        count: Option<usize>,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Integrate from a constant history and export the trajectory.
    Simulate {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        num: Numerics,
        #[arg(long)]
        t_end: Option<f64>,
        /// Write every n-th node.
        #[arg(long)]
        stride: Option<usize>,
        /// Report a step-halving error estimate.
        #[arg(long)]
        estimate: bool,
        /// Write the monodromy matrix of one delay window to this file.
        #[arg(long)]
        dump_monodromy: Option<PathBuf>,
        #[arg(long)]
        monodromy_at: Option<f64>,
        /// Tangent grid cells per delay for the dump.
        #[arg(long)]
        nodes: Option<usize>,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Numerical Lyapunov spectrum and Kaplan-Yorke dimension.
    Lyap {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        num: Numerics,
        #[arg(long)]
        horizon: Option<f64>,
        /// Number of exponents.
        #[arg(long)]
        m: Option<usize>,
        /// Discarded transient in delays.
        #[arg(long)]
        burn_in: Option<f64>,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Run property suites; exits 1 on any failure.
    Verify {
        /// tensor, cocycle, delayop, bounds, dde, charroots or all.
        #[arg(long, default_value = "all")]
        suite: String,
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Evaluate a quantity over one parameter given as lo:hi[:count][:log].
    Sweep {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        num: Numerics,
        /// local_dim, unstable, bound, bound_scaled or ky.
        #[arg(long)]
        quantity: Option<String>,
        #[arg(long)]
        equilibrium: Option<String>,
        #[arg(long)]
        lambda: Option<String>,
        #[arg(long)]
        horizon: Option<f64>,
        #[arg(long)]
        m: Option<usize>,
        #[arg(long, env = "LYAPDIM_JOBS")]
        jobs: Option<usize>,
        #[command(flatten)]
        out: OutArgs,
    },
}

#[derive(Args)]
struct ModelArgs {
    /// Flat key = value file; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    /// mackey_glass, suarez_schopf or custom.
    #[arg(long)]
    model: Option<String>,
    /// Delay, or a range when sweeping.
    #[arg(long, allow_hyphen_values = true)]
    tau: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    beta: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    gamma: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    k: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    alpha: Option<String>,
    /// Forcing amplitude A.
    #[arg(long, visible_alias = "A", allow_hyphen_values = true)]
    amplitude: Option<String>,
    /// Custom model: ẋ = a x + b x(t−τ).
    #[arg(long, allow_hyphen_values = true)]
    a: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    b: Option<String>,
}

#[derive(Args)]
struct Numerics {
    /// Step; must divide τ.
    #[arg(long)]
    dt: Option<f64>,
    /// Constant initial history value.
    #[arg(long, allow_hyphen_values = true)]
    history: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct OutArgs {
    #[arg(long, short = 'o')]
    output: Option<PathBuf>,
    /// csv or json.
    #[arg(long)]
    format: Option<String>,
}

impl ModelArgs {
    fn into_kv(self) -> Result<KeyValues> {
        let mut kv = match &self.config {
            Some(p) => KeyValues::load(p)?,
            None => KeyValues::default(),
        };
        let mut flags = KeyValues::default();
        flags.set_opt("model", self.model);
        for (key, val) in [
            ("tau", self.tau),
            ("beta", self.beta),
            ("gamma", self.gamma),
            ("k", self.k),
            ("alpha", self.alpha),
            ("amplitude", self.amplitude),
            ("a", self.a),
            ("b", self.b),
        ] {
            flags.set_opt(key, val);
        }
        kv.overlay(&flags);
        Ok(kv)
    }
}

impl Numerics {
    fn apply(&self, kv: &mut KeyValues) {
        kv.set_opt("dt", self.dt);
        kv.set_opt("history", self.history);
        kv.set_opt("seed", self.seed);
    }
}

impl OutArgs {
    fn apply(&self, kv: &mut KeyValues) {
        kv.set_opt("output", self.output.as_ref().map(|p| p.display().to_string()));
        kv.set_opt("format", self.format.clone());
    }
}

fn set_flag(kv: &mut KeyValues, key: &str, on: bool) {
    if on {
        kv.set(key, true);
    }
}

fn run(cli: Cli) -> Result<bool> {
    let (tables, ok, kv) = match cli.command {
        Command::Bound { model, scaled, lambda, out } => {
            let mut kv = model.into_kv()?;
            set_flag(&mut kv, "scaled", scaled);
            kv.set_opt("lambda", lambda);
            out.apply(&mut kv);
            (cli::cmd_bound(&kv)?, true, kv)
        }
        Command::Roots { model, equilibrium, count, out } => {
            let mut kv = model.into_kv()?;
            kv.set_opt("equilibrium", equilibrium);
            kv.set_opt("count", count);
            out.apply(&mut kv);
            (cli::cmd_roots(&kv)?, true, kv)
        }
        Command::Simulate { model, num, t_end, stride, estimate, dump_monodromy, monodromy_at, nodes, out } => {
            let mut kv = model.into_kv()?;
            num.apply(&mut kv);
            kv.set_opt("t_end", t_end);
            kv.set_opt("stride", stride);
            set_flag(&mut kv, "estimate", estimate);
            kv.set_opt("dump_monodromy", dump_monodromy.map(|p| p.display().to_string()));
            kv.set_opt("monodromy_at", monodromy_at);
            kv.set_opt("nodes", nodes);
            out.apply(&mut kv);
            (cli::cmd_simulate(&kv)?, true, kv)
        }
        Command::Lyap { model, num, horizon, m, burn_in, out } => {
            let mut kv = model.into_kv()?;
            num.apply(&mut kv);
            kv.set_opt("horizon", horizon);
            kv.set_opt("m", m);
            kv.set_opt("burn_in", burn_in);
            out.apply(&mut kv);
            (cli::cmd_lyap(&kv)?, true, kv)
        }
        Command::Verify { suite, seed, out } => {
            let mut kv = KeyValues::default();
            kv.set("suite", suite);
            kv.set_opt("seed", seed);
            out.apply(&mut kv);
            let (t, ok) = cli::cmd_verify(&kv)?;
            (t, ok, kv)
        }
        Command::Sweep { model, num, quantity, equilibrium, lambda, horizon, m, jobs, out } => {
            let mut kv = model.into_kv()?;
            num.apply(&mut kv);
            kv.set_opt("quantity", quantity);
            kv.set_opt("equilibrium", equilibrium);
            kv.set_opt("lambda", lambda);
            kv.set_opt("horizon", horizon);
            kv.set_opt("m", m);
            out.apply(&mut kv);
            let jobs = jobs.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
            (cli::cmd_sweep(&kv, jobs)?, true, kv)
        }
    };
    let out = OutputConfig::from_kv(&kv)?;
    emit(&render_all(&tables, out.format), out.path.as_deref())?;
    Ok(ok)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("lyapdim: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
