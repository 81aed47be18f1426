//! Comparison methods sharing the learner and world: a FedAvg central
//! server, Gossip Learning, opportunistic collaborative learning, and
//! local-only training.
//!
//! Peer exchanges mirror the mule cycle's transactional transfers: each
//! leg costs `transfer_steps` ticks, breaking the encounter mid-flight
//! discards the whole exchange, and all effects commit at completion.

use std::fmt;
use std::str::FromStr;

use crate::dataset::LabeledDataset;
use crate::error::{Error, Result};
use crate::learner::{aggregate_weighted, train, Hyperparams, ModelParams, ModelSnapshot};
use crate::protocol::MuleState;
use crate::rng::SimRng;
use crate::worldsim::TimeStep;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    MlMule,
    MlMuleGossip,
    FedAvg,
    Gossip,
    OppCl,
    LocalOnly,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::MlMule,
        Method::MlMuleGossip,
        Method::FedAvg,
        Method::Gossip,
        Method::OppCl,
        Method::LocalOnly,
    ];

    /// Methods whose rounds are counted in completed peer exchanges;
    /// the rest advance one round per time step.
    pub fn counts_exchanges(&self) -> bool {
        matches!(
            self,
            Method::MlMule | Method::MlMuleGossip | Method::Gossip | Method::OppCl
        )
    }

    pub fn uses_mule_cycles(&self) -> bool {
        matches!(self, Method::MlMule | Method::MlMuleGossip)
    }

    pub fn peer_exchange_kind(&self) -> Option<ExchangeKind> {
        match self {
            Method::Gossip | Method::MlMuleGossip => Some(ExchangeKind::Gossip),
            Method::OppCl => Some(ExchangeKind::OppCl),
            _ => None,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Method::MlMule => "mlmule",
            Method::MlMuleGossip => "mlmule+gossip",
            Method::FedAvg => "fedavg",
            Method::Gossip => "gossip",
            Method::OppCl => "oppcl",
            Method::LocalOnly => "local",
        };
        write!(f, "{s}")
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mlmule" => Ok(Method::MlMule),
            "mlmule+gossip" => Ok(Method::MlMuleGossip),
            "fedavg" => Ok(Method::FedAvg),
            "gossip" => Ok(Method::Gossip),
            "oppcl" => Ok(Method::OppCl),
            "local" => Ok(Method::LocalOnly),
            other => Err(Error::config(format!(
                "unknown method `{other}` (expected mlmule, mlmule+gossip, fedavg, gossip, oppcl, local)"
            ))),
        }
    }
}

/// Central aggregation server for the FedAvg baseline.
#[derive(Debug, Clone)]
pub struct CentralServer {
    pub global: ModelSnapshot,
    pub round_counter: u64,
}

impl CentralServer {
    pub fn new(global: ModelSnapshot) -> Self {
        CentralServer {
            global,
            round_counter: 0,
        }
    }
}

/// One synchronous round: aggregate all client params weighted by their
/// sample counts into the global model. Broadcast is the caller copying
/// the returned params back to every client; sharing completes within
/// the round's single time step. An empty client list skips the round.
pub fn fedavg_round(
    server: &mut CentralServer,
    clients: &[(&ModelParams, u64)],
    now: TimeStep,
) -> Result<Option<ModelParams>> {
    if clients.is_empty() {
        return Ok(None);
    }
    let snaps: Vec<ModelSnapshot> = clients
        .iter()
        .map(|(p, n)| ModelSnapshot {
            params: (*p).clone(),
            last_update: now,
            n_train_samples: *n,
        })
        .collect();
    let refs: Vec<&ModelSnapshot> = snaps.iter().collect();
    let global = aggregate_weighted(&refs)?;
    server.global = ModelSnapshot {
        params: global.clone(),
        last_update: now,
        n_train_samples: clients.iter().map(|(_, n)| *n).sum(),
    };
    server.round_counter += 1;
    Ok(Some(global))
}

/// One epoch of purely local training; no communication ever.
pub fn local_only_step(
    snapshot: &mut ModelSnapshot,
    ds: &LabeledDataset,
    hyper: &Hyperparams,
    now: TimeStep,
    rng: &mut SimRng,
) -> Result<()> {
    if ds.is_empty() {
        return Ok(());
    }
    let params = train(&snapshot.params, ds, &hyper.with_epochs(1), rng)?;
    *snapshot = ModelSnapshot {
        params,
        last_update: now,
        n_train_samples: snapshot.n_train_samples.max(ds.len() as u64),
    };
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExchangeKind {
    /// exchange-aggregate-train on every encounter
    Gossip,
    /// exchange-train-exchange-aggregate on every encounter
    OppCl,
}

#[derive(Debug, Clone)]
enum ExchangeStage {
    /// Both snapshots in flight toward the peer.
    FirstLeg { remaining: u32 },
    /// OppCL only: peer-trained copies on their way back.
    ReturnLeg {
        remaining: u32,
        trained_for_a: ModelSnapshot,
        trained_for_b: ModelSnapshot,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ExchangeProgress {
    InTransit,
    Aborted,
    Committed,
}

/// A pairwise exchange between two mobile devices, driven tick by tick.
/// Payloads are snapshotted at start; devices separating mid-flight
/// abort the exchange with no effect on either side.
#[derive(Debug, Clone)]
pub struct PeerExchange {
    pub a: usize,
    pub b: usize,
    pub kind: ExchangeKind,
    payload_a: ModelSnapshot,
    payload_b: ModelSnapshot,
    stage: ExchangeStage,
    transfer_steps: u32,
}

impl PeerExchange {
    pub fn start(
        a: usize,
        b: usize,
        kind: ExchangeKind,
        state_a: &MuleState,
        state_b: &MuleState,
        transfer_steps: u32,
    ) -> Self {
        PeerExchange {
            a,
            b,
            kind,
            payload_a: state_a.snapshot.clone(),
            payload_b: state_b.snapshot.clone(),
            stage: ExchangeStage::FirstLeg {
                remaining: transfer_steps.max(1),
            },
            transfer_steps: transfer_steps.max(1),
        }
    }

    /// Advances one tick. Party-specific RNGs keep the cycle symmetric:
    /// swapping the parties and their RNG streams swaps the outputs.
    #[allow(clippy::too_many_arguments)]
    pub fn tick(
        &mut self,
        in_range: bool,
        state_a: &mut MuleState,
        state_b: &mut MuleState,
        now: TimeStep,
        hyper: &Hyperparams,
        rng_a: &mut SimRng,
        rng_b: &mut SimRng,
    ) -> Result<ExchangeProgress> {
        if !in_range {
            return Ok(ExchangeProgress::Aborted);
        }
        match &mut self.stage {
            ExchangeStage::FirstLeg { remaining } => {
                *remaining -= 1;
                if *remaining > 0 {
                    return Ok(ExchangeProgress::InTransit);
                }
                match self.kind {
                    ExchangeKind::Gossip => {
                        // aggregate the peer's payload, then train
                        commit_gossip(state_a, &self.payload_b, now, hyper, rng_a)?;
                        commit_gossip(state_b, &self.payload_a, now, hyper, rng_b)?;
                        Ok(ExchangeProgress::Committed)
                    }
                    ExchangeKind::OppCl => {
                        // each side trains the *received copy* on its own
                        // data and sends it back
                        let trained_for_a =
                            train_received_copy(&self.payload_a, state_b, now, hyper, rng_b)?;
                        let trained_for_b =
                            train_received_copy(&self.payload_b, state_a, now, hyper, rng_a)?;
                        self.stage = ExchangeStage::ReturnLeg {
                            remaining: self.transfer_steps,
                            trained_for_a,
                            trained_for_b,
                        };
                        Ok(ExchangeProgress::InTransit)
                    }
                }
            }
            ExchangeStage::ReturnLeg {
                remaining,
                trained_for_a,
                trained_for_b,
            } => {
                *remaining -= 1;
                if *remaining > 0 {
                    return Ok(ExchangeProgress::InTransit);
                }
                state_a.snapshot = merge(&state_a.snapshot, trained_for_a)?;
                state_b.snapshot = merge(&state_b.snapshot, trained_for_b)?;
                Ok(ExchangeProgress::Committed)
            }
        }
    }
}

fn merge(a: &ModelSnapshot, b: &ModelSnapshot) -> Result<ModelSnapshot> {
    Ok(ModelSnapshot {
        params: aggregate_weighted(&[a, b])?,
        last_update: a.last_update.max(b.last_update),
        n_train_samples: a.n_train_samples.max(b.n_train_samples),
    })
}

fn commit_gossip(
    state: &mut MuleState,
    peer_payload: &ModelSnapshot,
    now: TimeStep,
    hyper: &Hyperparams,
    rng: &mut SimRng,
) -> Result<()> {
    state.snapshot = merge(&state.snapshot, peer_payload)?;
    if let Some(ds) = state.local_train.as_ref().filter(|d| !d.is_empty()) {
        let params = train(&state.snapshot.params, ds, &hyper.with_epochs(1), rng)?;
        state.snapshot = ModelSnapshot {
            params,
            last_update: now,
            n_train_samples: state.snapshot.n_train_samples.max(ds.len() as u64),
        };
    }
    Ok(())
}

fn train_received_copy(
    copy: &ModelSnapshot,
    trainer: &MuleState,
    now: TimeStep,
    hyper: &Hyperparams,
    rng: &mut SimRng,
) -> Result<ModelSnapshot> {
    match trainer.local_train.as_ref().filter(|d| !d.is_empty()) {
        Some(ds) => {
            let params = train(&copy.params, ds, &hyper.with_epochs(1), rng)?;
            Ok(ModelSnapshot {
                params,
                last_update: now,
                n_train_samples: copy.n_train_samples.max(ds.len() as u64),
            })
        }
        None => Ok(copy.clone()),
    }
}

/// One uninterrupted gossip encounter: each party receives the peer's
/// params, aggregates pairwise, then trains one epoch on its own data.
pub fn gossip_encounter(
    a: &MuleState,
    b: &MuleState,
    now: TimeStep,
    transfer_steps: u32,
    hyper: &Hyperparams,
    rng_a: &mut SimRng,
    rng_b: &mut SimRng,
) -> Result<(MuleState, MuleState)> {
    run_exchange(a, b, ExchangeKind::Gossip, now, transfer_steps, hyper, rng_a, rng_b)
}

/// One uninterrupted opportunistic encounter: params cross over, each
/// party trains the received copy on its own data, copies cross back,
/// and each party aggregates its own params with the returned copy.
pub fn oppcl_encounter(
    a: &MuleState,
    b: &MuleState,
    now: TimeStep,
    transfer_steps: u32,
    hyper: &Hyperparams,
    rng_a: &mut SimRng,
    rng_b: &mut SimRng,
) -> Result<(MuleState, MuleState)> {
    run_exchange(a, b, ExchangeKind::OppCl, now, transfer_steps, hyper, rng_a, rng_b)
}

#[allow(clippy::too_many_arguments)]
fn run_exchange(
    a: &MuleState,
    b: &MuleState,
    kind: ExchangeKind,
    now: TimeStep,
    transfer_steps: u32,
    hyper: &Hyperparams,
    rng_a: &mut SimRng,
    rng_b: &mut SimRng,
) -> Result<(MuleState, MuleState)> {
    let mut exchange = PeerExchange::start(0, 1, kind, a, b, transfer_steps);
    let mut sa = a.clone();
    let mut sb = b.clone();
    let mut t = now;
    loop {
        t += 1;
        match exchange.tick(true, &mut sa, &mut sb, t, hyper, rng_a, rng_b)? {
            ExchangeProgress::Committed => return Ok((sa, sb)),
            ExchangeProgress::InTransit => {}
            ExchangeProgress::Aborted => unreachable!("always in range"),
        }
    }
}
