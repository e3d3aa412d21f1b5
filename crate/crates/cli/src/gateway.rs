use std::path::PathBuf;
use std::time::Duration;

use vestbed_gateway::{server, GatewayStore, SharedStore};

use crate::CliError;

pub const DEFAULT_PORT: u16 = 8080;

/// Port from `VESTBED_PORT`, falling back to 8080.
pub fn port_from_env() -> Result<u16, CliError> {
    match std::env::var("VESTBED_PORT") {
        Ok(v) => v
            .parse()
            .map_err(|_| CliError::Usage(format!("VESTBED_PORT is not a port: {v:?}"))),
        Err(_) => Ok(DEFAULT_PORT),
    }
}

/// Serve the REST gateway until interrupted. Prints the bound address on
/// stdout once listening.
pub fn cmd_gateway(port: u16, delay: Duration, journal: Option<PathBuf>) -> Result<(), CliError> {
    let store = match journal {
        Some(dir) => GatewayStore::with_journal(&dir)
            .map_err(|e| CliError::Runtime(format!("{}: {e}", dir.display())))?,
        None => GatewayStore::new(),
    };
    let rt = tokio::runtime::Runtime::new().map_err(CliError::runtime)?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(("0.0.0.0", port))
            .await
            .map_err(|e| CliError::Runtime(format!("cannot bind port {port}: {e}")))?;
        let addr = listener.local_addr().map_err(CliError::runtime)?;
        println!("gateway listening on {addr}");
        let shutdown = async {
            let _ = tokio::signal::ctrl_c().await;
            log::info!("shutting down");
        };
        server::serve(listener, SharedStore::new(store), delay, shutdown)
            .await
            .map_err(CliError::runtime)
    })
}
