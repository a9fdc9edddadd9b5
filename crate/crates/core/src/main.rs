use clap::{Parser, Subcommand};

use almlab::commands::{cmd_diagnose, cmd_example, cmd_ocp, cmd_solve, DiagnoseArgs, ExampleArgs, Exit, OcpArgs, SolveArgs};

/// Augmented Lagrangian solver and Lagrange multiplier diagnostics.
#[derive(Parser, Debug)]
#[command(name = "almlab", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve a problem file and write summary.json and trace.csv
    Solve(SolveArgs),
    /// Run a built-in example and check its known answers
    Example(ExampleArgs),
    /// Mesh-refinement study for the 1-D optimal control problem
    Ocp(OcpArgs),
    /// Multiplier diagnostics for a previous solve
    Diagnose(DiagnoseArgs),
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { Exit::Input.code() } else { 0 };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    let exit = match &cli.command {
        Command::Solve(a) => cmd_solve(a),
        Command::Example(a) => cmd_example(a),
        Command::Ocp(a) => cmd_ocp(a),
        Command::Diagnose(a) => cmd_diagnose(a),
    };
    std::process::exit(exit.code());
}
