//! HTTP facade, stand-in model server and CLI wiring for the diary engine.

pub mod api;
pub mod stub;

use std::net::SocketAddr;

use axum::Router;
use mempal_core::providers::{Providers, ScriptBook};
use mempal_core::{Engine, MempalConfig, SharedClock, SystemClock};
use tokio::net::TcpListener;
use tokio::sync::oneshot;

pub use api::{router, ApiError, AppState, QueryRequest};
pub use stub::StubModels;

/// Engine and the script book its mock hand detector and VLM read.
pub fn build_engine(config: &MempalConfig, clock: SharedClock) -> anyhow::Result<(Engine, ScriptBook)> {
    let script = ScriptBook::new();
    let providers = Providers::from_config(&config.providers, config.mock.settings(), script.clone(), clock.clone())?;
    let engine = Engine::new(config.engine.clone(), providers, clock)?;
    Ok((engine, script))
}

/// Engine on the wall clock, as `serve` and the CLI use it.
pub fn build_live_engine(config: &MempalConfig) -> anyhow::Result<(Engine, ScriptBook)> {
    build_engine(config, SystemClock::shared())
}

/// A router served on its own thread and runtime. Dropping the handle
/// shuts the server down.
pub struct ServerHandle {
    pub addr: SocketAddr,
    shutdown: Option<oneshot::Sender<()>>,
    thread: Option<std::thread::JoinHandle<()>>,
}

impl ServerHandle {
    pub fn url(&self, path: &str) -> String {
        format!("http://{}{}", self.addr, path)
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        if let Some(thread) = self.thread.take() {
            let _ = thread.join();
        }
    }
}

/// Bind `addr` (port 0 picks a free port) and serve `app` in the background.
pub fn spawn_server(app: Router, addr: &str) -> anyhow::Result<ServerHandle> {
    let std_listener = std::net::TcpListener::bind(addr)?;
    std_listener.set_nonblocking(true)?;
    let bound = std_listener.local_addr()?;
    let (tx, rx) = oneshot::channel::<()>();
    let thread = std::thread::spawn(move || {
        let runtime = tokio::runtime::Builder::new_multi_thread()
            .worker_threads(2)
            .enable_all()
            .build()
            .expect("tokio runtime builds");
        runtime.block_on(async move {
            let listener = TcpListener::from_std(std_listener).expect("listener registers");
            axum::serve(listener, app)
                .with_graceful_shutdown(async {
                    let _ = rx.await;
                })
                .await
                .expect("server runs");
        });
    });
    Ok(ServerHandle {
        addr: bound,
        shutdown: Some(tx),
        thread: Some(thread),
    })
}
