//! The `appnet` command line.
//!
//! Machine-readable output goes to stdout as JSON, diagnostics to stderr.
//! Exit codes: 0 success, 1 domain error, 2 usage error.

use std::ffi::OsString;
use std::net::SocketAddr;
use std::sync::Arc;
use std::time::Duration;

use appnet_core::{ConnectionId, Participant, RegisterOutcome, UserId};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use tracing_subscriber::EnvFilter;

use crate::broker::{Broker, BrokerConfig};
use crate::clock::SystemClock;
use crate::error::Error;
use crate::http::{market_router, runtime_router};
use crate::market::Market;
use crate::runtime::Runtime;
use crate::scenario::{self, ScenarioConfig};
use crate::store::StoreSpec;

#[derive(Debug, Parser)]
#[command(
    name = "appnet",
    version,
    about = "AppNet broker: market, runtime and scenario driver"
)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

fn duration(s: &str) -> Result<Duration, String> {
    let d = humantime::parse_duration(s).map_err(|e| e.to_string())?;
    if d.is_zero() {
        return Err("must be greater than zero".into());
    }
    Ok(d)
}

#[derive(Debug, Clone, Args)]
pub struct GlobalArgs {
    /// `memory` or `file:<path>`.
    #[arg(long, global = true, env = "APPNET_STORE", default_value = "memory")]
    pub store: StoreSpec,
    #[arg(
        long,
        global = true,
        env = "APPNET_LISTEN_MARKET",
        default_value = "127.0.0.1:8461"
    )]
    pub listen_market: SocketAddr,
    #[arg(
        long,
        global = true,
        env = "APPNET_LISTEN_RUNTIME",
        default_value = "127.0.0.1:8462"
    )]
    pub listen_runtime: SocketAddr,
    #[arg(long, global = true, env = "APPNET_MAX_CHAIN_LEN", default_value_t = appnet_core::DEFAULT_MAX_CHAIN_LEN)]
    pub max_chain_len: usize,
    #[arg(long, global = true, env = "APPNET_GRANT_TTL", default_value = "300s", value_parser = duration)]
    pub grant_ttl: Duration,
    #[arg(long, global = true, env = "APPNET_TOKEN_TTL", default_value = "86400s", value_parser = duration)]
    pub token_ttl: Duration,
    #[arg(long, global = true, env = "APPNET_COMM_TTL", default_value = "600s", value_parser = duration)]
    pub comm_ttl: Duration,
    /// Register the scenario's messages and adapter on startup.
    #[arg(long, global = true, env = "APPNET_SEED")]
    pub seed: bool,
    /// Serve `GET /audit` on the runtime.
    #[arg(long, global = true, env = "APPNET_EXPOSE_AUDIT")]
    pub expose_audit: bool,
    /// Tracing filter, e.g. `info` or `appnet=debug`.
    #[arg(long, global = true, env = "APPNET_LOG", default_value = "warn")]
    pub log_level: String,
}

impl GlobalArgs {
    pub fn broker_config(&self) -> BrokerConfig {
        BrokerConfig {
            max_chain_len: self.max_chain_len,
            grant_ttl: self.grant_ttl,
            token_ttl: self.token_ttl,
            comm_ttl: self.comm_ttl,
            expose_audit: self.expose_audit,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    ServeMarket,
    ServeRuntime,
    /// Both services over one store.
    ServeAll,
    RunScenario(ScenarioArgs),
    Inspect {
        #[command(subcommand)]
        what: Inspect,
    },
    Recommendations {
        user: String,
    },
    Confirm {
        user: String,
        connection: String,
    },
    Audit,
}

#[derive(Debug, Subcommand)]
pub enum Inspect {
    Userspace { user: String },
}

#[derive(Debug, Clone, Args)]
pub struct ScenarioArgs {
    #[arg(long)]
    pub skip_confirmation: bool,
    #[arg(long)]
    pub no_adapter: bool,
    #[arg(long)]
    pub manual_connection: bool,
    /// `intermediary` or `provider:<app-id>`.
    #[arg(long, default_value = "intermediary")]
    pub adapter_owner: Participant,
    /// Print the human-readable summary to stderr as well.
    #[arg(long)]
    pub summary: bool,
}

#[derive(Debug, thiserror::Error)]
enum Failure {
    #[error(transparent)]
    Domain(#[from] Error),
    #[error(transparent)]
    Scenario(#[from] scenario::ScenarioError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("scenario assertions failed")]
    ScenarioFailed,
}

impl Failure {
    fn body(&self) -> crate::error::ErrorBody {
        match self {
            Failure::Domain(e) => e.body(),
            Failure::Scenario(e) => crate::error::ErrorBody {
                error: "scenario-step-failed".into(),
                detail: e.to_string(),
            },
            Failure::Io(e) => crate::error::ErrorBody {
                error: "io".into(),
                detail: e.to_string(),
            },
            Failure::ScenarioFailed => crate::error::ErrorBody {
                error: "scenario-failed".into(),
                detail: self.to_string(),
            },
        }
    }
}

fn print_json(v: &impl Serialize) {
    println!(
        "{}",
        serde_json::to_string_pretty(v).expect("output serializes")
    );
}

fn open_broker(g: &GlobalArgs) -> Result<Arc<Broker>, Failure> {
    let store = g.store.open().map_err(Error::from)?;
    Ok(Broker::open(
        store,
        Arc::new(SystemClock),
        g.broker_config(),
    )?)
}

/// Registers the scenario's messages and adapter if absent.
pub fn seed_fixtures(market: &Market) -> crate::Result<()> {
    let stay = "stayfinder".into();
    let shop = "shopmart".into();
    for m in [
        scenario::booking_message(&stay),
        scenario::location_message(&shop),
        scenario::order_message(&shop),
    ] {
        if market.register_message(m)? == RegisterOutcome::Registered {
            tracing::info!("seeded a message");
        }
    }
    market.register_adapter(scenario::booking2location())?;
    Ok(())
}

async fn shutdown_signal() {
    if let Err(e) = tokio::signal::ctrl_c().await {
        tracing::error!(error = %e, "cannot listen for interrupts");
        std::future::pending::<()>().await;
    }
    eprintln!("shutting down");
}

async fn serve(g: &GlobalArgs, market: bool, runtime: bool) -> Result<(), Failure> {
    let broker = open_broker(g)?;
    let m = Market::new(broker.clone());
    if g.seed {
        seed_fixtures(&m)?;
    }
    let (stop_tx, _) = tokio::sync::broadcast::channel::<()>(1);
    let mut tasks = Vec::new();
    let mut spawn = |addr: SocketAddr, router: axum::Router, name: &'static str| {
        let mut stop = stop_tx.subscribe();
        tasks.push(tokio::spawn(async move {
            crate::http::serve(
                addr,
                router,
                move |bound| eprintln!("{name} listening on http://{bound}"),
                async move {
                    let _ = stop.recv().await;
                },
            )
            .await
        }));
    };
    if market {
        spawn(g.listen_market, market_router(m), "market");
    }
    if runtime {
        spawn(
            g.listen_runtime,
            runtime_router(Runtime::new(broker)),
            "runtime",
        );
    }
    let all = futures::future::try_join_all(
        tasks
            .into_iter()
            .map(|t| async move { t.await.map_err(std::io::Error::other)? }),
    );
    tokio::pin!(all);
    tokio::select! {
        r = &mut all => { r?; }
        _ = shutdown_signal() => {
            let _ = stop_tx.send(());
            all.await?;
        }
    }
    Ok(())
}

async fn run(cli: Cli) -> Result<(), Failure> {
    let g = &cli.global;
    match &cli.command {
        Command::ServeMarket => serve(g, true, false).await,
        Command::ServeRuntime => serve(g, false, true).await,
        Command::ServeAll => serve(g, true, true).await,
        Command::RunScenario(a) => {
            let config = ScenarioConfig {
                skip_confirmation: a.skip_confirmation,
                register_adapter: !a.no_adapter,
                manual_connection: a.manual_connection,
                adapter_owner: a.adapter_owner.clone(),
                broker: g.broker_config(),
            };
            let store = g.store.open().map_err(Error::from)?;
            let result = scenario::run_scenario(&config, store).await?;
            if a.summary || !result.success {
                eprint!("{}", result.summary());
            }
            print_json(&result);
            if result.success {
                Ok(())
            } else {
                Err(Failure::ScenarioFailed)
            }
        }
        Command::Inspect {
            what: Inspect::Userspace { user },
        } => {
            let market = Market::new(open_broker(g)?);
            print_json(&market.userspace(&UserId::new(user.as_str()))?);
            Ok(())
        }
        Command::Recommendations { user } => {
            let market = Market::new(open_broker(g)?);
            print_json(&market.recommend_connections(&UserId::new(user.as_str()))?);
            Ok(())
        }
        Command::Confirm { user, connection } => {
            let market = Market::new(open_broker(g)?);
            print_json(&market.confirm_connection(
                &UserId::new(user.as_str()),
                &ConnectionId::new(connection.as_str()),
            )?);
            Ok(())
        }
        Command::Audit => {
            print_json(&open_broker(g)?.audit_log()?);
            Ok(())
        }
    }
}

/// Parses `args` and runs the command, returning the process exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let filter =
        EnvFilter::try_new(&cli.global.log_level).unwrap_or_else(|_| EnvFilter::new("warn"));
    let _ = tracing_subscriber::fmt()
        .with_env_filter(filter)
        .with_writer(std::io::stderr)
        .try_init();

    let rt = match tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
    {
        Ok(rt) => rt,
        Err(e) => {
            eprintln!("cannot start async runtime: {e}");
            return 1;
        }
    };
    match rt.block_on(run(cli)) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            print_json(&e.body());
            1
        }
    }
}

pub fn main() -> i32 {
    main_with(std::env::args_os())
}
