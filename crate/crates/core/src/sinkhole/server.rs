use std::net::SocketAddr;
use std::sync::Arc;

use tokio::net::UdpSocket;
use tokio::sync::watch;

use super::handler::{Sinkhole, SinkholeDecision};

/// Receives decisions as queries are answered (logging, metrics).
pub type DecisionObserver = Arc<dyn Fn(SocketAddr, &SinkholeDecision) + Send + Sync>;

/// Serves DNS over UDP until `shutdown` flips to true. Each query is handled on its
/// own task, so a slow upstream never stalls blocked answers.
pub async fn serve_udp(
    socket: Arc<UdpSocket>,
    sinkhole: Arc<Sinkhole>,
    observer: Option<DecisionObserver>,
    mut shutdown: watch::Receiver<bool>,
) -> std::io::Result<()> {
    let mut buf = vec![0u8; 4096];
    loop {
        let (n, peer) = tokio::select! {
            r = socket.recv_from(&mut buf) => match r {
                Ok(v) => v,
                // ICMP port-unreachable from a previous send_to surfaces here on some platforms
                Err(e) if e.kind() == std::io::ErrorKind::ConnectionReset => continue,
                Err(e) => return Err(e),
            },
            _ = shutdown.changed() => {
                if *shutdown.borrow() { return Ok(()); }
                continue;
            }
        };
        let query = buf[..n].to_vec();
        let (socket, sinkhole, observer) = (socket.clone(), sinkhole.clone(), observer.clone());
        tokio::spawn(async move {
            let (response, decision) = sinkhole.handle_query(&query).await;
            if let Err(e) = socket.send_to(&response, peer).await {
                tracing::debug!(%peer, error = %e, "failed to send DNS response");
            }
            if let Some(obs) = observer {
                obs(peer, &decision);
            }
        });
    }
}
