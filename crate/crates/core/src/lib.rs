// SPDX-License-Identifier: Apache-2.0

//! Tenant-level bandwidth allocation at end hosts, plus a deterministic
//! packet-level datacenter simulator to evaluate it.

pub mod bf;
pub mod coordinator;
pub mod harness;
pub mod host;
pub mod ids;
pub mod scenario;
pub mod sim;
pub mod switch;
