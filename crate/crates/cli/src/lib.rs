//! Command-line front end for `graphmogp`: synthetic data generation,
//! train/predict/eval on files, and the experiment suites.

pub mod commands;
pub mod error;
pub mod experiment;
pub mod generators;
pub mod io;
pub mod methods;

use clap::{Parser, Subcommand};

pub use error::CliError;

#[derive(Parser, Debug)]
#[command(name = "graphmogp", version, about = "Multi-output Gaussian processes on graph vertices")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Write a synthetic graph, training set and test set.
    Gen(commands::GenArgs),
    /// Fit a kernel to a dataset and write the model.
    Train(commands::TrainArgs),
    /// Predict at query points with a trained model.
    Predict(commands::PredictArgs),
    /// Score a prediction against true targets.
    Eval(commands::EvalArgs),
    /// Run an experiment suite and write a report.
    Experiment(commands::ExperimentArgs),
}

/// Runs one command; returns text for stdout.
pub fn run(cli: &Cli) -> Result<Option<String>, CliError> {
    match &cli.command {
        Command::Gen(a) => commands::gen(a).map(|_| None),
        Command::Train(a) => commands::train(a).map(|_| None),
        Command::Predict(a) => commands::predict(a).map(|_| None),
        Command::Eval(a) => commands::eval(a).map(Some),
        Command::Experiment(a) => commands::experiment(a).map(|_| None),
    }
}
