// SPDX-License-Identifier: Apache-2.0

use std::fmt;

use serde::{Deserialize, Serialize};

macro_rules! id_type {
    ($(#[$meta:meta])* $name:ident, $prefix:literal) => {
        $(#[$meta])*
        #[derive(
            Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
        )]
        #[serde(transparent)]
        pub struct $name(pub u32);

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, concat!($prefix, "{}"), self.0)
            }
        }
    };
}

id_type!(TenantId, "");
id_type!(
    /// Index of a node (host or switch) in a topology.
    NodeId,
    "n"
);
id_type!(
    /// Index of a transport flow (traffic source) in a scenario.
    FlowId,
    ""
);
id_type!(
    /// Index of a unit-flow inside one host's flow table.
    UnitFlowId,
    "u"
);
id_type!(
    /// Index of an egress port in the simulator.
    PortId,
    "p"
);

/// Identity of a unit-flow: packets of one tenant between one host pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FlowKey {
    pub tenant: TenantId,
    pub src: NodeId,
    pub dst: NodeId,
}
