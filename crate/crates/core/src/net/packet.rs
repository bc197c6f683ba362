use crate::sim::SimTime;

/// Preamble, start-of-frame delimiter and inter-packet gap.
pub const PREAMBLE_IPG: u32 = 20;
/// Ethernet header plus FCS.
pub const ETH_HEADER_FCS: u32 = 18;
pub const MIN_FRAME: u32 = 64;
/// Largest payload carried by one data frame.
pub const MTU_PAYLOAD: u32 = 1500;
/// Minimum frame on the wire: 64 + 20.
pub const CREDIT_WIRE: u32 = 84;
/// Full-size data frame on the wire: 1500 + 18 + 20.
pub const MAX_DATA_WIRE: u32 = 1538;
/// Wire time reserved per credit: one credit plus the data frame it pays for.
pub const CREDIT_SLOT: u32 = CREDIT_WIRE + MAX_DATA_WIRE;

/// Bytes a frame with `payload` bytes occupies on the wire, including preamble and IPG.
pub fn wire_size(payload: u32) -> u32 {
    (payload + ETH_HEADER_FCS).max(MIN_FRAME) + PREAMBLE_IPG
}

pub type FlowId = u32;
pub type LinkId = u32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PacketKind {
    Credit,
    Data,
    CreditRequest,
    CreditStop,
    Ack,
}

/// Travel direction relative to the flow: `Forward` is sender to receiver.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    Forward,
    Reverse,
}

#[derive(Debug, Clone)]
pub struct Packet {
    pub kind: PacketKind,
    pub flow: FlowId,
    pub dir: Direction,
    /// Index into the flow's route for the port this packet is queued at or heading to.
    pub hop: u16,
    /// Credit sequence number. Set on credits, echoed on ExpressPass data.
    pub credit_seq: u64,
    /// DCTCP segment number on data, cumulative ack on acks.
    pub seq: u64,
    pub wire_size: u32,
    pub payload: u32,
    pub is_last: bool,
    pub ecn_capable: bool,
    pub ecn_ce: bool,
    pub ecn_echo: bool,
    pub created: SimTime,
    pub enqueued: SimTime,
    /// For data: the time the echoed credit left the receiver.
    pub credit_sent: SimTime,
    /// Links traversed so far, recorded only when path checking is on.
    pub path: Option<Vec<LinkId>>,
    /// For data: the links its credit traversed.
    pub credit_path: Option<Vec<LinkId>>,
}

impl Packet {
    fn base(kind: PacketKind, flow: FlowId, dir: Direction, payload: u32, now: SimTime) -> Self {
        Packet {
            kind,
            flow,
            dir,
            hop: 0,
            credit_seq: 0,
            seq: 0,
            wire_size: wire_size(payload),
            payload,
            is_last: false,
            ecn_capable: false,
            ecn_ce: false,
            ecn_echo: false,
            created: now,
            enqueued: now,
            credit_sent: now,
            path: None,
            credit_path: None,
        }
    }

    pub fn credit(flow: FlowId, seq: u64, now: SimTime) -> Self {
        let mut p = Packet::base(PacketKind::Credit, flow, Direction::Reverse, 0, now);
        p.credit_seq = seq;
        p
    }

    pub fn data(flow: FlowId, payload: u32, now: SimTime) -> Self {
        assert!(payload > 0 && payload <= MTU_PAYLOAD, "data payload {payload}");
        Packet::base(PacketKind::Data, flow, Direction::Forward, payload, now)
    }

    /// Minimum-size control frame in the given direction.
    pub fn control(kind: PacketKind, flow: FlowId, dir: Direction, now: SimTime) -> Self {
        Packet::base(kind, flow, dir, 0, now)
    }

    /// Bytes the sender could have used on this credit but did not.
    pub fn fragmentation_bytes(&self) -> u32 {
        MAX_DATA_WIRE - self.wire_size
    }
}
