use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Endpoint {
    Server,
    Vehicle(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Channel {
    Cellular,
    Dsrc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MessageKind {
    GlobalModel,
    /// Full participant state for server-side selection.
    State,
    /// A participant's fuzzy score.
    Evaluation,
    LocalModel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditEvent {
    pub round: usize,
    pub from: Endpoint,
    pub to: Endpoint,
    pub channel: Channel,
    pub kind: MessageKind,
}

/// Every message the simulation delivers, in delivery order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AuditLog {
    pub events: Vec<AuditEvent>,
}

impl AuditLog {
    pub fn record(&mut self, round: usize, from: Endpoint, to: Endpoint, channel: Channel, kind: MessageKind) {
        self.events.push(AuditEvent {
            round,
            from,
            to,
            channel,
            kind,
        });
    }

    /// Kinds of message the server received, each listed once.
    pub fn server_inbound_kinds(&self) -> Vec<MessageKind> {
        let mut kinds = Vec::new();
        for e in &self.events {
            if e.to == Endpoint::Server && !kinds.contains(&e.kind) {
                kinds.push(e.kind);
            }
        }
        kinds
    }

    pub fn count(&self, kind: MessageKind, channel: Channel) -> usize {
        self.events
            .iter()
            .filter(|e| e.kind == kind && e.channel == channel)
            .count()
    }
}
