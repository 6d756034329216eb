//! Drive the command-line layer from code: a shortened run of one figure protocol.

use clap::Parser;
use rercefed::cli::{self, preset, Cli, FigureId};

fn main() {
    let plan = preset(FigureId::Fig10);
    println!("{}: {}", plan.figure, plan.description);
    for a in &plan.assumed {
        println!("  assumed: {a}");
    }

    let dir = std::env::temp_dir().join("rercefed_fig10");
    let patch = dir.with_extension("json");
    std::fs::write(&patch, r#"{"harness": {"num_rounds": 300, "num_trials": 5}}"#).unwrap();
    let args = ["rercefed", "reproduce", "fig10", "--config", patch.to_str().unwrap(), "--out", dir.to_str().unwrap()];
    match cli::run(&Cli::parse_from(args)) {
        Ok(summary) => println!("{summary}\noutputs under {}", dir.display()),
        Err(e) => {
            eprintln!("{}", e.to_line());
            std::process::exit(e.exit_code());
        }
    }
}
