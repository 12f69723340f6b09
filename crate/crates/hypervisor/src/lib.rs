//! Multi-tenant hypervisor: registers tenant programs over TCP, coalesces
//! them into one device image, routes engine traffic, and multiplexes the
//! device in time (I/O grants) and space (clock tiers).

pub mod client;
pub mod device;
pub mod image;
pub mod log;
pub mod proto;
pub mod sched;
pub mod scenario;
pub mod server;

pub use client::{Client, RemoteConnector, RemoteEngine};
pub use device::{DeviceModel, Tier};
pub use server::{Config, Hypervisor, Status};
