//! Live capture from a network interface through an AF_PACKET socket (Linux).

use std::ffi::CString;
use std::io;

use iotlens_core::packet::capture::{CaptureSource, Frame};
use iotlens_core::time::Timestamp;

const ETH_P_ALL: u16 = 0x0003;
const SNAPLEN: usize = 65_536;

pub struct LiveCapture {
    name: String,
    fd: libc::c_int,
    buf: Vec<u8>,
    stop: std::sync::Arc<std::sync::atomic::AtomicBool>,
}

impl LiveCapture {
    /// Opens a raw socket bound to `interface`. Needs CAP_NET_RAW.
    pub fn open(interface: &str) -> io::Result<Self> {
        let cname = CString::new(interface).map_err(|_| io::Error::new(io::ErrorKind::InvalidInput, "bad interface name"))?;
        // SAFETY: plain libc calls on a descriptor we own; arguments are valid for their sizes.
        unsafe {
            let ifindex = libc::if_nametoindex(cname.as_ptr());
            if ifindex == 0 {
                return Err(io::Error::last_os_error());
            }
            let fd = libc::socket(libc::AF_PACKET, libc::SOCK_RAW | libc::SOCK_CLOEXEC, i32::from(ETH_P_ALL.to_be()));
            if fd < 0 {
                return Err(io::Error::last_os_error());
            }
            let mut addr: libc::sockaddr_ll = std::mem::zeroed();
            addr.sll_family = libc::AF_PACKET as u16;
            addr.sll_protocol = ETH_P_ALL.to_be();
            addr.sll_ifindex = ifindex as i32;
            let rc = libc::bind(
                fd,
                &addr as *const libc::sockaddr_ll as *const libc::sockaddr,
                std::mem::size_of::<libc::sockaddr_ll>() as libc::socklen_t,
            );
            if rc < 0 {
                let e = io::Error::last_os_error();
                libc::close(fd);
                return Err(e);
            }
            // wake up periodically so a stop request is noticed
            let tv = libc::timeval { tv_sec: 0, tv_usec: 200_000 };
            libc::setsockopt(
                fd,
                libc::SOL_SOCKET,
                libc::SO_RCVTIMEO,
                &tv as *const libc::timeval as *const libc::c_void,
                std::mem::size_of::<libc::timeval>() as libc::socklen_t,
            );
            Ok(LiveCapture { name: interface.to_owned(), fd, buf: vec![0; SNAPLEN], stop: Default::default() })
        }
    }

    pub fn stop_handle(&self) -> std::sync::Arc<std::sync::atomic::AtomicBool> {
        self.stop.clone()
    }
}

impl Drop for LiveCapture {
    fn drop(&mut self) {
        // SAFETY: fd was opened by us and is closed once.
        unsafe {
            libc::close(self.fd);
        }
    }
}

impl CaptureSource for LiveCapture {
    fn name(&self) -> &str {
        &self.name
    }

    fn next_frame(&mut self) -> io::Result<Option<Frame>> {
        loop {
            if self.stop.load(std::sync::atomic::Ordering::SeqCst) {
                return Ok(None);
            }
            // SAFETY: buf is valid for buf.len() bytes.
            let n = unsafe { libc::recv(self.fd, self.buf.as_mut_ptr() as *mut libc::c_void, self.buf.len(), 0) };
            if n < 0 {
                let e = io::Error::last_os_error();
                match e.kind() {
                    io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut | io::ErrorKind::Interrupted => continue,
                    _ => return Err(e),
                }
            }
            return Ok(Some(Frame { timestamp: Timestamp::now(), data: self.buf[..n as usize].to_vec() }));
        }
    }
}
