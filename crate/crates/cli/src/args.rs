use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "melnikov", version, about = "Zero-count certificates and numerics for first-order Melnikov functions")]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

/// Flags shared by every command. Each can also be set through an
/// environment variable with the `MELNIKOV_` prefix.
#[derive(Clone, Debug, Args)]
pub struct Common {
    /// Base seed; per-instance seeds are derived from it.
    #[arg(long, global = true, env = "MELNIKOV_SEED", default_value_t = 0)]
    pub seed: u64,
    /// Distance kept from finite interval endpoints when counting zeros.
    #[arg(long, global = true, env = "MELNIKOV_EPS", default_value_t = 1e-6)]
    pub eps: f64,
    /// Bisection tolerance for zeros, or relative quadrature tolerance for
    /// `melnikov` (defaults 1e-12 and 1e-10).
    #[arg(long, global = true, env = "MELNIKOV_TOL")]
    pub tol: Option<f64>,
    /// Worker threads; 0 uses every core.
    #[arg(long, global = true, env = "MELNIKOV_JOBS", default_value_t = 0)]
    pub jobs: usize,
    /// Output file (JSON or CSV depending on the command).
    #[arg(long, global = true, env = "MELNIKOV_OUT")]
    pub out: Option<PathBuf>,
    /// Leave out the timestamp comment at the top of CSV files.
    #[arg(long, global = true, env = "MELNIKOV_NO_HEADER_TIMESTAMP")]
    pub no_header_timestamp: bool,
}

#[derive(Clone, Debug, Args)]
pub struct FamilyArgs {
    /// Family name: WHs-case-1..4, ruh2 (both branches), ruh2-pos, ruh2-neg,
    /// yruh2, yruh2-high, yruh2-low.
    #[arg(long, env = "MELNIKOV_FAMILY")]
    pub family: String,
    /// Perturbation degree.
    #[arg(long, env = "MELNIKOV_N")]
    pub n: u32,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Certify a zero bound for every instance of a family and print its ledger.
    Bound {
        #[command(flatten)]
        family: FamilyArgs,
    },
    /// Count zeros of seeded random instances and compare with the certificate.
    Verify {
        #[command(flatten)]
        family: FamilyArgs,
        /// Number of random instances per family.
        #[arg(long, env = "MELNIKOV_SAMPLES", default_value_t = 100, value_parser = clap::value_parser!(u64).range(1..))]
        samples: u64,
        /// Use the bound stored in this certificate file instead of computing one.
        #[arg(long)]
        certificate: Option<PathBuf>,
    },
    /// Build one seeded instance and write its spec and expression.
    Build {
        #[command(flatten)]
        family: FamilyArgs,
    },
    /// Numeric zero report for an instance (seeded or from a spec file).
    Zeros {
        /// Family name, as for `bound`.
        #[arg(long, env = "MELNIKOV_FAMILY", requires = "n", required_unless_present = "instance")]
        family: Option<String>,
        #[arg(long, env = "MELNIKOV_N")]
        n: Option<u32>,
        /// Instance spec file written by `build`.
        #[arg(long, conflicts_with_all = ["family", "n"])]
        instance: Option<PathBuf>,
        /// Grid points.
        #[arg(long, default_value_t = 20_000)]
        grid: usize,
    },
    /// Sample the Melnikov function of a perturbed system by quadrature.
    Melnikov {
        /// System: WHs-case-1..4, ruh2 or yruh2.
        #[arg(long, env = "MELNIKOV_SYSTEM", required_unless_present = "spec")]
        system: Option<String>,
        /// Degree of the random perturbation.
        #[arg(long, env = "MELNIKOV_N", default_value_t = 1)]
        n: u32,
        /// System spec file (overrides --system, --n and --seed).
        #[arg(long)]
        spec: Option<PathBuf>,
        /// Unperturbed system: every sample is zero.
        #[arg(long, conflicts_with = "spec")]
        zero: bool,
        #[arg(long, allow_hyphen_values = true)]
        h_min: Option<f64>,
        #[arg(long, allow_hyphen_values = true)]
        h_max: Option<f64>,
        /// Number of levels.
        #[arg(long, env = "MELNIKOV_SAMPLES", default_value_t = 64, value_parser = clap::value_parser!(u64).range(1..))]
        samples: u64,
        #[arg(long, value_enum)]
        spacing: Option<Spacing>,
        /// Traverse arcs against the unperturbed flow.
        #[arg(long)]
        reversed: bool,
    },
    /// Least-squares fit of Melnikov samples against a family basis.
    Fit {
        #[command(flatten)]
        family: FamilyArgs,
        /// CSV written by `melnikov` (h, M, error, status).
        #[arg(long)]
        input: PathBuf,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Spacing {
    Linear,
    /// Geometric in |h|.
    Log,
}
