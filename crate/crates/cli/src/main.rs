use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod analyze;
mod report;

type Result<T> = std::result::Result<T, Box<dyn std::error::Error>>;

#[derive(Parser)]
#[command(
    name = "promtrial",
    version,
    about = "ODM questionnaires, study server and usage analytics"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse and check an ODM file; exits 1 on any error-level finding.
    Validate { odm: PathBuf },
    /// Print the screen-by-screen render plan of one form.
    Preview {
        odm: PathBuf,
        #[arg(long)]
        form: String,
        #[arg(long, default_value = "en")]
        lang: String,
    },
    /// Run the study server.
    Serve {
        #[arg(long)]
        config: PathBuf,
    },
    /// Print the salted SHA-256 hash used for `password_sha256` in the config.
    HashPassword {
        #[arg(long, default_value = "")]
        salt: String,
        password: String,
    },
    #[command(subcommand)]
    Analyze(AnalyzeCommand),
    #[command(subcommand)]
    Report(ReportCommand),
}

#[derive(Clone, Copy, Default, ValueEnum)]
enum Format {
    #[default]
    Text,
    Csv,
}

#[derive(Subcommand)]
enum AnalyzeCommand {
    /// Split an event log into per-session stage timings (CSV on stdout).
    Stages(analyze::StagesArgs),
    /// Mann-Whitney U test between two samples.
    Mwu(MwuArgs),
    /// Fixations, saccades, AOI metrics and a heatmap from a gaze trace.
    Gaze(analyze::GazeArgs),
}

#[derive(Args)]
struct MwuArgs {
    /// CSV whose `seconds` column (or last column) is group 1.
    #[arg(long)]
    group_a: PathBuf,
    /// CSV holding group 2.
    #[arg(long)]
    group_b: PathBuf,
    #[arg(long)]
    tie_correction: bool,
    #[arg(long)]
    no_continuity: bool,
    #[arg(long, value_enum, default_value_t)]
    format: Format,
}

#[derive(Subcommand)]
enum ReportCommand {
    /// Group means and ratios from per-user timings.
    Table(report::TableArgs),
    /// The same table from already-averaged group means.
    Means(report::MeansArgs),
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Validate { odm } => validate(&odm),
        Command::Preview { odm, form, lang } => {
            let study = promtrial_core::odm::parse_odm(&read(&odm)?)?;
            let plan = promtrial_core::form::build_render_plan(&study, &form, &lang)?;
            print!("{}", plan.preview());
            Ok(ExitCode::SUCCESS)
        }
        Command::Serve { config } => {
            let cfg = promtrial_server::ServerConfig::load(&config)?;
            promtrial_server::serve(&cfg)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::HashPassword { salt, password } => {
            println!(
                "{}",
                promtrial_server::config::hash_password(&salt, &password)
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Analyze(AnalyzeCommand::Stages(a)) => analyze::stages(a),
        Command::Analyze(AnalyzeCommand::Mwu(a)) => analyze::mwu(a),
        Command::Analyze(AnalyzeCommand::Gaze(a)) => analyze::gaze(a),
        Command::Report(ReportCommand::Table(a)) => report::table(a),
        Command::Report(ReportCommand::Means(a)) => report::means(a),
    }
}

fn read(path: &std::path::Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| format!("{}: {e}", path.display()).into())
}

fn validate(path: &std::path::Path) -> Result<ExitCode> {
    use promtrial_core::odm::{parse_odm_with_warnings, validate_study, Severity};
    let (study, warnings) = parse_odm_with_warnings(&read(path)?)?;
    for w in &warnings {
        eprintln!("skipped: {w}");
    }
    let diags = validate_study(&study);
    for d in &diags {
        println!("{d}");
    }
    let errors = diags
        .iter()
        .filter(|d| d.severity == Severity::Error)
        .count();
    println!("{errors} errors, {} warnings", diags.len() - errors);
    Ok(if errors > 0 {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp_millis()
        .init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
