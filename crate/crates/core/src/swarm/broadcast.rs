//! UDP broadcast of the active density, as a physical swarm would receive it.
//!
//! Packet layout, little-endian:
//!
//! | offset | size | field                                   |
//! |--------|------|-----------------------------------------|
//! | 0      | 4    | magic `SWGM`                            |
//! | 4      | 1    | version (1)                             |
//! | 5      | 1    | reserved (0)                            |
//! | 6      | 2    | component count `m` (u16)               |
//! | 8      | 4    | sequence number (u32)                   |
//! | 12     | 24·m | per component six f32: mean x, mean y, cov xx, cov xy, cov yy, weight |

use std::net::{SocketAddr, UdpSocket};

use serde::{Deserialize, Serialize};

use super::{Gaussian, Gmm};

pub const MAGIC: [u8; 4] = *b"SWGM";
pub const VERSION: u8 = 1;
const HEADER: usize = 12;
const COMPONENT: usize = 24;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BroadcastConfig {
    pub enabled: bool,
    pub target: Option<SocketAddr>,
}

pub fn encode_packet(gmm: &Gmm, seq: u32) -> Vec<u8> {
    let m = gmm.0.len().min(u16::MAX as usize);
    let mut buf = Vec::with_capacity(HEADER + COMPONENT * m);
    buf.extend_from_slice(&MAGIC);
    buf.push(VERSION);
    buf.push(0);
    buf.extend_from_slice(&(m as u16).to_le_bytes());
    buf.extend_from_slice(&seq.to_le_bytes());
    for g in &gmm.0[..m] {
        for v in [
            g.mean[0],
            g.mean[1],
            g.cov[0][0],
            g.cov[0][1],
            g.cov[1][1],
            g.weight,
        ] {
            buf.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    buf
}

/// Inverse of [`encode_packet`], at f32 precision. `None` on a malformed packet.
pub fn decode_packet(buf: &[u8]) -> Option<(u32, Gmm)> {
    if buf.len() < HEADER || buf[..4] != MAGIC || buf[4] != VERSION {
        return None;
    }
    let m = u16::from_le_bytes([buf[6], buf[7]]) as usize;
    let seq = u32::from_le_bytes(buf[8..12].try_into().ok()?);
    if buf.len() != HEADER + COMPONENT * m {
        return None;
    }
    let comps = buf[HEADER..]
        .chunks_exact(COMPONENT)
        .map(|c| {
            let f = |i: usize| f32::from_le_bytes(c[4 * i..4 * i + 4].try_into().unwrap()) as f64;
            Gaussian {
                mean: [f(0), f(1)],
                cov: [[f(2), f(3)], [f(3), f(4)]],
                weight: f(5),
            }
        })
        .collect();
    Some((seq, Gmm(comps)))
}

/// Sends each new density once; a no-op unless enabled with a target.
#[derive(Debug)]
pub struct Broadcaster {
    socket: Option<(UdpSocket, SocketAddr)>,
    seq: u32,
}

impl Broadcaster {
    pub fn new(config: &BroadcastConfig) -> std::io::Result<Self> {
        let socket = match (config.enabled, config.target) {
            (true, Some(target)) => {
                let bind: SocketAddr = if target.is_ipv4() {
                    "0.0.0.0:0".parse().unwrap()
                } else {
                    "[::]:0".parse().unwrap()
                };
                let s = UdpSocket::bind(bind)?;
                s.set_broadcast(true)?;
                Some((s, target))
            }
            _ => None,
        };
        Ok(Self { socket, seq: 0 })
    }

    pub fn disabled() -> Self {
        Self {
            socket: None,
            seq: 0,
        }
    }

    pub fn is_enabled(&self) -> bool {
        self.socket.is_some()
    }

    pub fn send(&mut self, gmm: &Gmm) -> std::io::Result<()> {
        if let Some((sock, target)) = &self.socket {
            sock.send_to(&encode_packet(gmm, self.seq), target)?;
            self.seq = self.seq.wrapping_add(1);
        }
        Ok(())
    }
}
