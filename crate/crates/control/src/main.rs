use std::net::SocketAddr;
use std::process::ExitCode;

use clap::Parser;
use stgen_control::api::{self, DEFAULT_HTTP_ADDR, HTTP_ADDR_ENV};
use stgen_control::cli::{Cli, Command};
use stgen_control::logbuf::{install_tracing, LogRouter};
use stgen_control::params::ParamError;
use stgen_control::runs::{execute, Limits, RunTable};
use stgen_control::stats;
use stgen_core::clock::Shutdown;

/// Exit status for invalid parameters, matching clap's usage errors.
const USAGE: u8 = 2;

fn main() -> ExitCode {
    let cli = Cli::parse();
    install_tracing();

    if let Command::Stats(args) = &cli.command {
        return match stats::run(args) {
            Ok(text) => {
                print!("{text}");
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::FAILURE
            }
        };
    }

    let rt = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .expect("tokio runtime");
    rt.block_on(async_main(cli.command))
}

fn invalid(e: ParamError) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(USAGE)
}

fn ctrl_c() -> Shutdown {
    let (trigger, shutdown) = Shutdown::new();
    tokio::spawn(async move {
        if tokio::signal::ctrl_c().await.is_ok() {
            trigger.trigger();
        }
    });
    shutdown
}

async fn async_main(command: Command) -> ExitCode {
    let plan = match &command {
        Command::Server(p) => p.plan().map(stgen_control::params::RunPlan::Core),
        Command::Launcher(p) => p.plan().map(stgen_control::params::RunPlan::Fleet),
        Command::Client(p) => p.plan().map(stgen_control::params::RunPlan::Client),
        Command::Serve(args) => return serve(args.addr).await,
        Command::Stats(_) => unreachable!("handled before the runtime starts"),
    };
    let plan = match plan {
        Ok(p) => p,
        Err(e) => return invalid(e),
    };
    match execute(plan, ctrl_c(), || {}).await {
        Ok(summary) => {
            println!(
                "{}",
                serde_json::to_string(&summary).expect("summary serializes")
            );
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

async fn serve(addr: Option<SocketAddr>) -> ExitCode {
    let addr = match addr {
        Some(a) => a,
        None => {
            let raw = std::env::var(HTTP_ADDR_ENV).unwrap_or_else(|_| DEFAULT_HTTP_ADDR.to_owned());
            match raw.parse() {
                Ok(a) => a,
                Err(e) => {
                    eprintln!("error: {HTTP_ADDR_ENV}={raw:?}: {e}");
                    return ExitCode::from(USAGE);
                }
            }
        }
    };
    let listener = match tokio::net::TcpListener::bind(addr).await {
        Ok(l) => l,
        Err(e) => {
            eprintln!("error: cannot listen on {addr}: {e}");
            return ExitCode::FAILURE;
        }
    };
    tracing::info!(%addr, "control API listening; viewer at /swagger-ui/index.html");
    let runs = RunTable::new(Limits::from_rlimit(), LogRouter::global().clone());
    let mut stop = ctrl_c();
    match api::serve(listener, runs, async move { stop.wait().await }).await {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
