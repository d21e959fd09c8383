//! Command-line front end. Exit codes: 0 success, 1 usage error, 2 oracle
//! mismatch, 3 I/O error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};

use rfidlab::experiment::{
    run_experiment, write_report, AttackName, ExperimentConfig, Protocol, ReportDestination,
};
use rfidlab::oracle;
use rfidlab::yu::IdsUpdateParse;
use rfidlab::Variant;

const EXIT_USAGE: u8 = 1;
const EXIT_ORACLE_MISMATCH: u8 = 2;
const EXIT_IO: u8 = 3;

#[derive(Parser)]
#[command(
    name = "rfidlab",
    version,
    about = "Protocol cryptanalysis workbench for two lightweight RFID schemes"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ProtocolArg {
    Zhuo,
    Yu,
}

#[derive(Clone, Copy, ValueEnum)]
enum VariantArg {
    Original,
    Hardened,
}

#[derive(Clone, Copy, ValueEnum)]
enum AttackArg {
    ZhuoReplay,
    YuMsbflipA,
    YuMsbflipB,
    YuTracking,
}

#[derive(Clone, Copy, ValueEnum)]
enum IdsParseArg {
    Left,
    Right,
}

#[derive(Args)]
struct CommonArgs {
    /// Write the summary JSON here instead of stdout.
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
    /// Write a JSON-lines transcript log (one entry per wire edge).
    #[arg(long, value_name = "FILE")]
    transcripts: Option<PathBuf>,
    /// Grouping of the pseudonym-update expression in the key-update step.
    #[arg(long, value_enum, default_value_t = IdsParseArg::Left)]
    ids_update_parse: IdsParseArg,
    /// Use the small xor-rotate-add hash instead of truncated SHA-256.
    #[arg(long)]
    toy_hash: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Run honest sessions and report acceptance and synchronization.
    Run {
        #[arg(long, value_enum)]
        protocol: ProtocolArg,
        #[arg(long, value_enum)]
        variant: VariantArg,
        /// Word width in bits (even, 8..=128).
        #[arg(long, default_value_t = 64)]
        k: u16,
        /// Consecutive sessions over one credential set.
        #[arg(long, default_value_t = 1000)]
        sessions: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Run attack trials (honest warm-up, attack session, honest probe).
    Attack {
        #[arg(long, value_enum)]
        name: AttackArg,
        #[arg(long, value_enum)]
        variant: VariantArg,
        #[arg(long, default_value_t = 64)]
        k: u16,
        #[arg(long, default_value_t = 500)]
        trials: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Low bits of the fingerprint the tracking distinguisher compares.
        #[arg(long, value_name = "B")]
        bit_budget: Option<u16>,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Cross-check both protocols against the independent reference
    /// evaluator at a small word width.
    Oracle {
        #[arg(long, default_value_t = 8)]
        k: u16,
        /// Sessions per protocol/variant combination.
        #[arg(long, default_value_t = 1000)]
        trials: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write the cross-check report here instead of stdout.
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
    },
}

impl From<ProtocolArg> for Protocol {
    fn from(value: ProtocolArg) -> Self {
        match value {
            ProtocolArg::Zhuo => Protocol::Zhuo,
            ProtocolArg::Yu => Protocol::Yu,
        }
    }
}

impl From<VariantArg> for Variant {
    fn from(value: VariantArg) -> Self {
        match value {
            VariantArg::Original => Variant::Original,
            VariantArg::Hardened => Variant::Hardened,
        }
    }
}

impl From<AttackArg> for AttackName {
    fn from(value: AttackArg) -> Self {
        match value {
            AttackArg::ZhuoReplay => AttackName::ZhuoReplay,
            AttackArg::YuMsbflipA => AttackName::YuMsbflipA,
            AttackArg::YuMsbflipB => AttackName::YuMsbflipB,
            AttackArg::YuTracking => AttackName::YuTracking,
        }
    }
}

impl From<IdsParseArg> for IdsUpdateParse {
    fn from(value: IdsParseArg) -> Self {
        match value {
            IdsParseArg::Left => IdsUpdateParse::Left,
            IdsParseArg::Right => IdsUpdateParse::Right,
        }
    }
}

fn run_configured(cfg: ExperimentConfig, common: &CommonArgs) -> ExitCode {
    let want_transcripts = common.transcripts.is_some();
    let (report, transcripts) = match run_experiment(&cfg, want_transcripts) {
        Ok(result) => result,
        Err(err) => {
            eprintln!("error: {err}");
            return ExitCode::from(EXIT_USAGE);
        }
    };
    eprintln!(
        "{} sessions in {} ms ({} accepted)",
        report.total_sessions, report.wall_time_ms, report.counts.accepted
    );
    if let (Some(path), Some(body)) = (&common.transcripts, transcripts) {
        if let Err(err) = std::fs::write(path, body) {
            eprintln!(
                "error: cannot write transcripts to {}: {err}",
                path.display()
            );
            return ExitCode::from(EXIT_IO);
        }
    }
    let destination = match &common.out {
        Some(path) => ReportDestination::File(path),
        None => ReportDestination::Stdout,
    };
    if let Err(err) = write_report(&report, destination) {
        eprintln!("error: cannot write report: {err}");
        return ExitCode::from(EXIT_IO);
    }
    ExitCode::SUCCESS
}

fn run_oracle(k: u16, trials: u64, seed: u64, out: Option<PathBuf>) -> ExitCode {
    let report = match oracle::crosscheck(k, trials, seed) {
        Ok(report) => report,
        Err(err) => {
            eprintln!("error: {err}");
            return ExitCode::from(EXIT_USAGE);
        }
    };
    let mut body = serde_json::to_string_pretty(&report).expect("report serializes");
    body.push('\n');
    let write_result = match &out {
        Some(path) => std::fs::write(path, &body),
        None => {
            print!("{body}");
            Ok(())
        }
    };
    if let Err(err) = write_result {
        eprintln!("error: cannot write report: {err}");
        return ExitCode::from(EXIT_IO);
    }
    if report.mismatches > 0 {
        eprintln!(
            "oracle mismatch: {} of {} comparisons disagreed",
            report.mismatches, report.comparisons
        );
        return ExitCode::from(EXIT_ORACLE_MISMATCH);
    }
    ExitCode::SUCCESS
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => EXIT_USAGE,
            };
            let _ = err.print();
            return ExitCode::from(code);
        }
    };

    match cli.command {
        Command::Run {
            protocol,
            variant,
            k,
            sessions,
            seed,
            common,
        } => {
            let mut cfg =
                ExperimentConfig::honest(protocol.into(), variant.into(), k, sessions, seed);
            cfg.ids_update_parse = common.ids_update_parse.into();
            cfg.toy_hash = common.toy_hash;
            run_configured(cfg, &common)
        }
        Command::Attack {
            name,
            variant,
            k,
            trials,
            seed,
            bit_budget,
            common,
        } => {
            let mut cfg = ExperimentConfig::attack(name.into(), variant.into(), k, trials, seed);
            if bit_budget.is_some() {
                cfg.bit_budget = bit_budget;
            }
            cfg.ids_update_parse = common.ids_update_parse.into();
            cfg.toy_hash = common.toy_hash;
            run_configured(cfg, &common)
        }
        Command::Oracle {
            k,
            trials,
            seed,
            out,
        } => run_oracle(k, trials, seed, out),
    }
}
