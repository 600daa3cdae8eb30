//! Measurement-triggered belief exchange between agents.
//!
//! Agents publish a snapshot of their propagated belief and bias book at the
//! start of each step. An observer that ranges to another agent requests that
//! snapshot; every reply is logged with its payload size.

use std::collections::BTreeMap;
use std::io::Write;

use nalgebra::{DMatrix, DVector};

use uwb_coloc_core::{Belief, BiasBook, NodeId};

const ID_BYTES: usize = 4;
const STAMP_BYTES: usize = 8;
const F64_BYTES: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct BeliefMessage {
    pub sender: NodeId,
    pub stamp: u64,
    pub x_hat: DVector<f64>,
    pub p: DMatrix<f64>,
}

impl BeliefMessage {
    /// Id, stamp, mean, and the upper triangle of `P`.
    pub fn payload_bytes(&self) -> usize {
        let n = self.x_hat.len();
        ID_BYTES + STAMP_BYTES + F64_BYTES * (n + n * (n + 1) / 2)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BiasCorrelationMessage {
    pub sender: NodeId,
    pub stamp: u64,
    pub entries: BTreeMap<NodeId, DVector<f64>>,
}

impl BiasCorrelationMessage {
    /// Id, stamp, and one `(agent id, vector)` pair per entry.
    pub fn payload_bytes(&self) -> usize {
        ID_BYTES
            + STAMP_BYTES
            + self
                .entries
                .values()
                .map(|c| ID_BYTES + F64_BYTES * c.len())
                .sum::<usize>()
    }

    pub fn to_book(&self, dim: usize) -> BiasBook {
        let mut book = BiasBook::zeros(self.sender, self.entries.keys().copied(), dim);
        for (l, c) in &self.entries {
            book.set(*l, c.clone()).expect("entries share the state dimension");
        }
        book
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum MessageKind {
    Belief,
    BiasCorrelation,
}

impl MessageKind {
    pub fn as_str(self) -> &'static str {
        match self {
            MessageKind::Belief => "belief",
            MessageKind::BiasCorrelation => "bias_correlation",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MessageRecord {
    pub step: u64,
    pub sender: NodeId,
    pub receiver: NodeId,
    pub kind: MessageKind,
    pub payload_bytes: usize,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ExchangeError {
    #[error("node {0:?} has no published snapshot")]
    UnknownTarget(NodeId),
    #[error("node {target:?} is {distance:.3} m away, beyond the {range} m comm range")]
    Unreachable { target: NodeId, distance: f64, range: f64 },
    #[error("snapshot of node {target:?} has stamp {stamp}, expected {step}")]
    Stale { target: NodeId, stamp: u64, step: u64 },
}

#[derive(Debug, Clone)]
struct Snapshot {
    belief: Belief,
    book: BiasBook,
    position: [f64; 2],
}

/// Reply to an exchange request.
#[derive(Debug, Clone, PartialEq)]
pub struct Exchange {
    pub belief: BeliefMessage,
    pub bias: Option<BiasCorrelationMessage>,
}

impl Exchange {
    pub fn to_belief(&self) -> Belief {
        let x = uwb_coloc_core::StateVector::with_heading(self.belief.x_hat.clone(), Some(2))
            .expect("snapshot state is finite");
        let p = uwb_coloc_core::Covariance::new(self.belief.p.clone()).expect("snapshot covariance is PSD");
        Belief::new(x, p, self.belief.stamp).expect("dimensions agree")
    }
}

/// Per-run mailbox with a message log.
#[derive(Debug, Clone)]
pub struct Network {
    comm_range: f64,
    step: u64,
    snapshots: BTreeMap<NodeId, Snapshot>,
    log: Vec<MessageRecord>,
}

impl Network {
    pub fn new(comm_range: f64) -> Self {
        Self {
            comm_range,
            step: 0,
            snapshots: BTreeMap::new(),
            log: Vec::new(),
        }
    }

    /// Clear the mailbox for step `step`.
    pub fn begin_step(&mut self, step: u64) {
        self.step = step;
        self.snapshots.clear();
    }

    /// Publish an agent's propagated belief. `position` is its true position,
    /// which decides reachability.
    pub fn publish(&mut self, id: NodeId, belief: &Belief, book: &BiasBook, position: [f64; 2]) {
        self.snapshots.insert(
            id,
            Snapshot {
                belief: belief.clone(),
                book: book.clone(),
                position,
            },
        );
    }

    /// Fetch `target`'s snapshot for `observer`, with its bias book when
    /// `needs_bias_book`. Failed requests send nothing.
    pub fn request_exchange(
        &mut self,
        observer: NodeId,
        target: NodeId,
        needs_bias_book: bool,
    ) -> Result<Exchange, ExchangeError> {
        let snap = self.snapshots.get(&target).ok_or(ExchangeError::UnknownTarget(target))?;
        if let Some(obs) = self.snapshots.get(&observer) {
            let distance = (obs.position[0] - snap.position[0]).hypot(obs.position[1] - snap.position[1]);
            if distance > self.comm_range {
                return Err(ExchangeError::Unreachable {
                    target,
                    distance,
                    range: self.comm_range,
                });
            }
        }
        if snap.belief.stamp != self.step {
            return Err(ExchangeError::Stale {
                target,
                stamp: snap.belief.stamp,
                step: self.step,
            });
        }
        let belief = BeliefMessage {
            sender: target,
            stamp: snap.belief.stamp,
            x_hat: snap.belief.x_hat.as_vector().clone(),
            p: snap.belief.p.matrix().clone(),
        };
        let bias = needs_bias_book.then(|| BiasCorrelationMessage {
            sender: target,
            stamp: snap.belief.stamp,
            entries: snap.book.iter().map(|(l, c)| (*l, c.clone())).collect(),
        });
        let step = self.step;
        self.log.push(MessageRecord {
            step,
            sender: target,
            receiver: observer,
            kind: MessageKind::Belief,
            payload_bytes: belief.payload_bytes(),
        });
        if let Some(b) = &bias {
            self.log.push(MessageRecord {
                step,
                sender: target,
                receiver: observer,
                kind: MessageKind::BiasCorrelation,
                payload_bytes: b.payload_bytes(),
            });
        }
        Ok(Exchange { belief, bias })
    }

    pub fn log(&self) -> &[MessageRecord] {
        &self.log
    }

    pub fn into_log(self) -> Vec<MessageRecord> {
        self.log
    }
}

pub const MESSAGES_HEADER: [&str; 5] = ["step", "sender", "receiver", "type", "payload_bytes"];

pub fn write_messages_csv<W: Write>(out: W, log: &[MessageRecord]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(MESSAGES_HEADER)?;
    for m in log {
        w.write_record([
            m.step.to_string(),
            m.sender.0.to_string(),
            m.receiver.0.to_string(),
            m.kind.as_str().to_string(),
            m.payload_bytes.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
