//! Standalone reference plugin server. Binds `SERVO_PLUGIN_HOST`:`SERVO_PLUGIN_PORT`
//! (default `127.0.0.1:8000`) and keeps its model in the working directory.

use tracing_subscriber::EnvFilter;

#[tokio::main]
async fn main() -> std::io::Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("info")))
        .init();
    let (addr, state) = servo_plugin::reference::from_env();
    servo_plugin::reference::serve(addr, state).await
}
