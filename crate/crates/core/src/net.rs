//! Socket setup and the stop/join handle shared by the long-running loops.

use std::io;
use std::net::{SocketAddr, UdpSocket};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::Duration;

use socket2::{Domain, Protocol, Socket, Type};

/// Socket buffer size requested for every relay socket; the kernel may clamp it.
pub const SOCKET_BUFFER: usize = 4 << 20;

/// Poll interval for loops that watch a stop flag.
pub const POLL: Duration = Duration::from_millis(20);

/// Largest datagram any loop will accept.
pub const MAX_DATAGRAM: usize = 65_535;

/// Bind a UDP socket with enlarged buffers and the default poll timeout.
pub fn bind_udp(addr: SocketAddr) -> io::Result<UdpSocket> {
    let socket = Socket::new(Domain::for_address(addr), Type::DGRAM, Some(Protocol::UDP))?;
    // best effort: undersized buffers only cost burst tolerance
    let _ = socket.set_recv_buffer_size(SOCKET_BUFFER);
    let _ = socket.set_send_buffer_size(SOCKET_BUFFER);
    socket.bind(&addr.into())?;
    let socket: UdpSocket = socket.into();
    socket.set_read_timeout(Some(POLL))?;
    Ok(socket)
}

/// Unbound-port socket suitable for sending towards `peer`.
pub fn sender_for(peer: SocketAddr) -> io::Result<UdpSocket> {
    let any: SocketAddr = if peer.is_ipv4() {
        "0.0.0.0:0".parse().unwrap()
    } else {
        "[::]:0".parse().unwrap()
    };
    bind_udp(any)
}

pub fn is_timeout(e: &io::Error) -> bool {
    matches!(
        e.kind(),
        io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut
    )
}

/// A background loop bound to a local address.
#[derive(Debug)]
pub struct ServiceHandle<T> {
    local_addr: SocketAddr,
    stop: Arc<AtomicBool>,
    join: Option<JoinHandle<T>>,
}

impl<T> ServiceHandle<T> {
    pub(crate) fn new(local_addr: SocketAddr, stop: Arc<AtomicBool>, join: JoinHandle<T>) -> Self {
        Self {
            local_addr,
            stop,
            join: Some(join),
        }
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.local_addr
    }

    pub fn request_stop(&self) {
        self.stop.store(true, Ordering::SeqCst);
    }

    pub fn is_finished(&self) -> bool {
        self.join.as_ref().is_none_or(|j| j.is_finished())
    }

    /// Wait for the loop to end on its own.
    pub fn join(mut self) -> T {
        self.join
            .take()
            .expect("joined once")
            .join()
            .expect("service thread panicked")
    }

    /// Ask the loop to drain and stop, then wait for it.
    pub fn stop(self) -> T {
        self.request_stop();
        self.join()
    }
}

impl<T> Drop for ServiceHandle<T> {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
    }
}
