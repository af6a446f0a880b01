use std::net::SocketAddr;

use clap::{Args, Parser, Subcommand};

use crate::params::{ClientParams, CoreParams, FleetParams};
use crate::stats::StatsArgs;

#[derive(Debug, Parser)]
#[command(
    name = "stgen",
    version,
    about = "IoT sensor traffic generator testbed"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the core node: server <host> <sensor_port> <client_port> <sim_time_s>
    Server(CoreParams),
    /// Run a sensor fleet: launcher <core_host> <core_sensor_port> <sim_time_s> <spec>...
    Launcher(FleetParams),
    /// Subscribe to one sensor: client -l<log_dir> -s<host> -r<sensor_id> -p<client_port>
    Client(ClientParams),
    /// Summarize a capture file
    Stats(StatsArgs),
    /// Serve the REST API (address from STGEN_HTTP_ADDR, default 127.0.0.1:8080)
    Serve(ServeArgs),
}

#[derive(Debug, Clone, Args)]
pub struct ServeArgs {
    /// Listen address; overrides STGEN_HTTP_ADDR
    #[arg(long)]
    pub addr: Option<SocketAddr>,
}
