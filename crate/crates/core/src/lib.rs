//! Core library of the sensor traffic generator testbed.

pub mod analytics;
pub mod client;
pub mod clock;
pub mod impairment;
pub mod node;
pub mod sensor;
pub mod wire;

use std::io;
use std::net::{SocketAddr, ToSocketAddrs};

/// Resolves `host:port`, preferring IPv4 so `localhost` matches sockets
/// bound to 127.0.0.1.
pub fn resolve_addr(host: &str, port: u16) -> io::Result<SocketAddr> {
    let addrs: Vec<SocketAddr> = (host, port).to_socket_addrs()?.collect();
    addrs
        .iter()
        .find(|a| a.is_ipv4())
        .or_else(|| addrs.first())
        .copied()
        .ok_or_else(|| io::Error::new(io::ErrorKind::NotFound, format!("no address for {host}")))
}
