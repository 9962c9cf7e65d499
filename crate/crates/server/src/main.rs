use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};
use iotlens_core::filter::ListInput;
use iotlens_core::packet::capture::{CaptureSource, Paced, PcapSource, PlaybackControl};
use iotlens_core::pipeline::Pipeline;
use iotlens_core::sinkhole::serve_udp;
use iotlens_core::synth::{demo_feed, generate_frames, ScenarioSpec};
use iotlens_server::api;
use iotlens_server::capture::LiveCapture;
use iotlens_server::config::{bundled_catalog, Config};
use iotlens_server::refresh::refresh;
use iotlens_server::services::Services;
use tokio::sync::watch;

#[derive(Parser)]
#[command(name = "iotlens", version, about = "Per-device tracker monitoring and DNS blocking for home networks")]
struct Cli {
    /// TOML configuration file.
    #[arg(short, long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Capture live traffic and serve the API and sinkhole.
    Run {
        #[arg(short, long)]
        interface: Option<String>,
    },
    /// Ingest a pcap file, then keep serving.
    Replay {
        pcap: PathBuf,
        /// Playback rate relative to capture time; 0 replays as fast as possible.
        #[arg(long, default_value_t = 0.0)]
        speed: f64,
        /// Exit once the file is ingested.
        #[arg(long)]
        exit: bool,
    },
    /// Serve synthetic household traffic.
    Demo {
        /// Scenario JSON; the bundled household when absent.
        #[arg(long)]
        scenario: Option<PathBuf>,
        #[arg(long, default_value_t = 10.0)]
        speed: f64,
        /// Play the scenario once instead of looping.
        #[arg(long)]
        once: bool,
    },
    /// Filter-list maintenance.
    Lists {
        #[command(subcommand)]
        command: ListsCommand,
    },
    /// Print the store as canonical JSON.
    Export {
        /// Ingest this pcap into an empty store instead of reading the database.
        #[arg(long)]
        pcap: Option<PathBuf>,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Write a scenario's pcap and manifest.
    Synth {
        #[arg(long)]
        scenario: Option<PathBuf>,
        #[arg(long)]
        pcap: PathBuf,
        #[arg(long)]
        manifest: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum ListsCommand {
    /// Download every list in the catalog.
    Refresh {
        #[arg(long)]
        catalog: Option<PathBuf>,
    },
}

fn load_scenario(path: Option<&Path>) -> anyhow::Result<ScenarioSpec> {
    match path {
        Some(p) => Ok(ScenarioSpec::from_json(&std::fs::read_to_string(p)?)?),
        None => Ok(ScenarioSpec::demo()),
    }
}

fn main() -> anyhow::Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
        )
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    let mut config = match &cli.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    let rt = tokio::runtime::Runtime::new()?;
    match cli.command {
        Command::Run { interface } => {
            let iface = interface.unwrap_or_else(|| config.capture.interface.clone());
            let cap = LiveCapture::open(&iface).with_context(|| format!("opening {iface} (needs CAP_NET_RAW)"))?;
            let services = Services::build(config, Vec::new())?;
            rt.block_on(serve(services, Box::new(cap), false))
        }
        Command::Replay { pcap, speed, exit } => {
            let src = PcapSource::open(&pcap).with_context(|| format!("opening {}", pcap.display()))?;
            let services = Services::build(config, Vec::new())?;
            let paced = Paced::new(src, speed, Arc::new(PlaybackControl::default()));
            rt.block_on(serve(services, Box::new(paced), exit))
        }
        Command::Demo { scenario, speed, once } => {
            let spec = load_scenario(scenario.as_deref())?;
            let generated = generate_frames(&spec)?;
            config.devices.extend(spec.device_configs());
            let fixture = ListInput::new("scenario-fixture", spec.fixture_filter_list());
            let services = Services::build(config, vec![fixture])?;
            let feed = demo_feed(generated.frames, spec.duration, !once, speed, Arc::new(PlaybackControl::default()));
            rt.block_on(serve(services, Box::new(feed), false))
        }
        Command::Lists { command: ListsCommand::Refresh { catalog } } => {
            let catalog = catalog.or(config.lists.catalog.clone()).unwrap_or_else(bundled_catalog);
            let mut failed = 0;
            for o in refresh(&catalog)? {
                match o.result {
                    Ok(n) => println!("{:<28} ok      {n} domains", o.name),
                    Err(e) => {
                        failed += 1;
                        println!("{:<28} failed  {e}", o.name);
                    }
                }
            }
            if failed > 0 {
                bail!("{failed} list(s) could not be fetched");
            }
            Ok(())
        }
        Command::Export { pcap, out } => {
            if pcap.is_some() {
                config.store.state_dir = None;
            }
            let services = Services::build(config, Vec::new())?;
            if let Some(p) = pcap {
                let mut src = PcapSource::open(&p)?;
                services.pipeline().run(&mut src)?;
            }
            let json = services.store.export_json()? + "\n";
            match out {
                Some(path) => std::fs::write(path, json)?,
                None => print!("{json}"),
            }
            Ok(())
        }
        Command::Synth { scenario, pcap, manifest } => {
            let spec = load_scenario(scenario.as_deref())?;
            let g = generate_frames(&spec)?;
            std::fs::write(&pcap, g.pcap_bytes())?;
            if let Some(m) = manifest {
                std::fs::write(m, serde_json::to_string_pretty(&g.manifest)? + "\n")?;
            }
            eprintln!("{} packets written to {}", g.manifest.packets, pcap.display());
            Ok(())
        }
    }
}

fn ingest(pipeline: Pipeline, mut source: Box<dyn CaptureSource>) {
    let name = source.name().to_owned();
    match pipeline.run(source.as_mut()) {
        Ok(n) => {
            let stats = pipeline.engine().stats();
            tracing::info!(
                source = %name,
                frames = n,
                dns = stats.dns_events,
                flows = stats.flow_events,
                dropped = stats.total_drops(),
                "capture finished"
            );
        }
        Err(e) => tracing::error!(source = %name, "capture failed: {e}"),
    }
}

async fn serve(services: Services, source: Box<dyn CaptureSource>, exit_after_ingest: bool) -> anyhow::Result<()> {
    let services = Arc::new(services);
    let (stop_tx, stop_rx) = watch::channel(false);

    if services.config.sinkhole.enabled {
        let bind = services.config.sinkhole.bind;
        let socket = Arc::new(tokio::net::UdpSocket::bind(bind).await.with_context(|| format!("binding sinkhole to {bind}"))?);
        tracing::info!(%bind, upstream = %services.config.sinkhole.upstream, "DNS sinkhole listening");
        let sinkhole = Arc::new(services.sinkhole());
        let observer: iotlens_core::sinkhole::DecisionObserver = Arc::new(|peer, d| {
            tracing::debug!(%peer, qname = ?d.qname, action = ?d.action, latency_us = d.latency_us, "dns query");
        });
        tokio::spawn(serve_udp(socket, sinkhole, Some(observer), stop_rx.clone()));
    }

    let pipeline = services.pipeline();
    let (done_tx, done_rx) = tokio::sync::oneshot::channel();
    // a plain thread: a live capture never ends on its own and must not hold up exit
    std::thread::Builder::new().name("ingest".into()).spawn(move || {
        ingest(pipeline, source);
        let _ = done_tx.send(());
    })?;

    let period = Duration::from_secs(services.config.store.checkpoint_secs.max(1));
    let ck = services.clone();
    let mut ck_stop = stop_rx.clone();
    tokio::spawn(async move {
        loop {
            tokio::select! {
                _ = tokio::time::sleep(period) => {}
                _ = ck_stop.changed() => break,
            }
            let s = ck.clone();
            if let Ok(Err(e)) = tokio::task::spawn_blocking(move || s.checkpoint()).await {
                tracing::error!("checkpoint failed: {e}");
            }
        }
    });

    let bind = services.config.api.bind;
    let listener = tokio::net::TcpListener::bind(bind).await.with_context(|| format!("binding API to {bind}"))?;
    tracing::info!("API on http://{}", listener.local_addr()?);
    let app = api::router(services.app_state());
    let mut shutdown = stop_rx.clone();
    let server = tokio::spawn(async move {
        axum::serve(listener, app)
            .with_graceful_shutdown(async move {
                let _ = shutdown.changed().await;
            })
            .await
    });

    if exit_after_ingest {
        let _ = done_rx.await;
    } else {
        tokio::signal::ctrl_c().await?;
    }
    tracing::info!("shutting down");
    let _ = stop_tx.send(true);
    let _ = tokio::time::timeout(Duration::from_secs(5), server).await;
    let s = services.clone();
    tokio::task::spawn_blocking(move || s.checkpoint()).await??;
    Ok(())
}
