// SPDX-License-Identifier: Apache-2.0

use std::sync::Arc;

use crate::ids::{FlowId, FlowKey, NodeId, PortId, TenantId};
use crate::sim::time::SimTime;
use crate::switch::Queued;

pub const MTU: u64 = 1500;
pub const CONTROL_BYTES: u64 = 64;

#[derive(Debug, Clone, PartialEq)]
pub enum PacketKind {
    Data { seq: u64 },
    Ack { seq: u64, ecn_echo: bool },
    Signal { key: FlowKey, inter_tenant: bool },
}

#[derive(Debug, Clone)]
pub struct Packet {
    pub flow: FlowId,
    pub tenant: TenantId,
    pub src: NodeId,
    pub dst: NodeId,
    pub bytes: u64,
    pub kind: PacketKind,
    pub ecn: bool,
    pub inter_tenant: bool,
    pub route: Arc<[PortId]>,
    pub hop: usize,
    pub sent_at: SimTime,
}

impl Packet {
    pub fn is_data(&self) -> bool {
        matches!(self.kind, PacketKind::Data { .. })
    }
}

impl Queued for Packet {
    fn bytes(&self) -> u64 {
        self.bytes
    }

    fn tenant(&self) -> TenantId {
        self.tenant
    }

    fn is_priority(&self) -> bool {
        !self.is_data()
    }

    fn mark_ecn(&mut self) {
        self.ecn = true;
    }

    fn set_inter_tenant(&mut self) {
        self.inter_tenant = true;
    }
}
