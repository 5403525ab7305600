//! Run the HTTP service.
//!
//! ```text
//! cargo run --example session_service -- 127.0.0.1:8080 ./sessions
//! curl -s localhost:8080/sessions -d '{"config":{"design":"bcd","x1":80,"d":0.2,"p":0.1}}' -H 'content-type: application/json'
//! ```

use sensitest::service::{serve, ServiceConfig};

#[tokio::main]
async fn main() -> sensitest::error::Result<()> {
    let mut cfg = ServiceConfig::from_env()?;
    let mut args = std::env::args().skip(1);
    if let Some(bind) = args.next() {
        cfg.bind = bind.parse().expect("socket address");
    }
    if let Some(dir) = args.next() {
        cfg.data_dir = dir.into();
    }
    serve(cfg).await
}
