//! The mule protocol proper: model-freshness filtering, the two
//! in-house training cycles, mule-phase holding, and multi-step
//! transfer accounting.
//!
//! A cycle between a mule and a fixed device is transactional. The
//! outbound and reply transfers each take `transfer_steps` ticks, and
//! all state commits at reply completion; losing co-location at any
//! tick in between discards the whole cycle, leaving both endpoints
//! bit-identical to their pre-cycle values.

use std::collections::VecDeque;

use crate::dataset::LabeledDataset;
use crate::error::{Error, Result};
use crate::learner::{
    aggregate_weighted, train, Hyperparams, ModelSnapshot,
};
use crate::rng::SimRng;
use crate::worldsim::{DeviceId, TimeStep};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrainingMode {
    /// Data lives on fixed devices; they aggregate, train, and reply
    /// (share-aggregate-train-share).
    FixedTraining,
    /// Data lives on mules; fixed devices only aggregate and reply, and
    /// the mule trains after aggregating (share-aggregate-share-train).
    MobileTraining,
}

impl std::fmt::Display for TrainingMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            TrainingMode::FixedTraining => write!(f, "fixed_training"),
            TrainingMode::MobileTraining => write!(f, "mobile_training"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FreshnessParams {
    pub alpha: f64,
    pub beta: f64,
    pub window: usize,
}

impl Default for FreshnessParams {
    fn default() -> Self {
        FreshnessParams {
            alpha: 0.5,
            beta: 1.0,
            window: 20,
        }
    }
}

/// Moving-threshold update over the recent accepted-model update times:
/// `(1 - alpha) * T_prev + alpha * (median(L) + beta * MAD(L))` where
/// MAD is the median absolute deviation from the median. Even-length
/// medians average the two central elements.
pub fn update_freshness_threshold(
    t_prev: f64,
    update_times: &[TimeStep],
    alpha: f64,
    beta: f64,
) -> Result<f64> {
    if update_times.is_empty() {
        return Err(Error::contract(
            "freshness update needs at least one recorded update time",
        ));
    }
    let mut values: Vec<f64> = update_times.iter().map(|&t| t as f64).collect();
    let med = median_in_place(&mut values);
    let mut deviations: Vec<f64> = update_times
        .iter()
        .map(|&t| (t as f64 - med).abs())
        .collect();
    let mad = median_in_place(&mut deviations);
    Ok((1.0 - alpha) * t_prev + alpha * (med + beta * mad))
}

fn median_in_place(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.partial_cmp(b).expect("finite update times"));
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    }
}

/// A snapshot passes the filter iff its last update is no older than
/// the threshold (closed bound, so a cold-start threshold of 0 accepts
/// everything).
pub fn freshness_accept(snapshot: &ModelSnapshot, threshold: f64) -> bool {
    snapshot.last_update as f64 >= threshold
}

#[derive(Debug, Clone, PartialEq)]
pub struct FixedDeviceState {
    pub snapshot: ModelSnapshot,
    pub threshold: f64,
    /// Recent accepted-model update times, newest at the back, bounded
    /// by the freshness window.
    pub update_times: VecDeque<TimeStep>,
    pub local_train: Option<LabeledDataset>,
    pub local_test: Option<LabeledDataset>,
}

impl FixedDeviceState {
    pub fn new(snapshot: ModelSnapshot) -> Self {
        FixedDeviceState {
            snapshot,
            threshold: 0.0,
            update_times: VecDeque::new(),
            local_train: None,
            local_test: None,
        }
    }

    /// Runs the filter against an incoming snapshot and, on accept,
    /// records its update time and refreshes the threshold.
    fn filter_incoming(&mut self, incoming: &ModelSnapshot, fresh: &FreshnessParams) -> bool {
        if !freshness_accept(incoming, self.threshold) {
            return false;
        }
        self.update_times.push_back(incoming.last_update);
        while self.update_times.len() > fresh.window {
            self.update_times.pop_front();
        }
        let times: Vec<TimeStep> = self.update_times.iter().copied().collect();
        self.threshold =
            update_freshness_threshold(self.threshold, &times, fresh.alpha, fresh.beta)
                .expect("update_times is non-empty after push");
        true
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    InHouse(DeviceId),
    MulePhase,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MuleState {
    pub snapshot: ModelSnapshot,
    pub local_train: Option<LabeledDataset>,
    pub local_test: Option<LabeledDataset>,
    pub phase: Phase,
    /// Ticks until the next cycle may start while co-located.
    pub cycle_timer: u64,
}

impl MuleState {
    pub fn new(snapshot: ModelSnapshot) -> Self {
        MuleState {
            snapshot,
            local_train: None,
            local_test: None,
            phase: Phase::MulePhase,
            cycle_timer: 0,
        }
    }
}

/// While not co-located a mule just holds its snapshot.
pub fn mule_phase_tick(mule: &mut MuleState) {
    mule.phase = Phase::MulePhase;
}

/// Merged snapshot: sample-weighted parameter average; the update time
/// and weight carry the freshest / largest contribution so a model
/// that absorbed recent training keeps passing downstream filters.
fn merge_snapshots(a: &ModelSnapshot, b: &ModelSnapshot) -> Result<ModelSnapshot> {
    Ok(ModelSnapshot {
        params: aggregate_weighted(&[a, b])?,
        last_update: a.last_update.max(b.last_update),
        n_train_samples: a.n_train_samples.max(b.n_train_samples),
    })
}

fn has_data(ds: &Option<LabeledDataset>) -> bool {
    ds.as_ref().is_some_and(|d| !d.is_empty())
}

/// Record of one completed (or decided) cycle.
#[derive(Debug, Clone, PartialEq)]
pub struct CycleReport {
    pub t: TimeStep,
    pub mule: DeviceId,
    pub fixed: DeviceId,
    pub mode: TrainingMode,
    pub accepted: bool,
    pub threshold_before: f64,
    pub threshold_after: f64,
}

impl CycleReport {
    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.t,
            self.mule,
            self.fixed,
            self.mode,
            self.accepted,
            self.threshold_before,
            self.threshold_after
        )
    }
}

/// One in-flight model send.
#[derive(Debug, Clone)]
pub struct Transfer {
    pub src: DeviceId,
    pub dst: DeviceId,
    pub payload: ModelSnapshot,
    pub remaining: u32,
}

#[derive(Debug, Clone)]
enum CycleStage {
    /// Mule's snapshot headed to the fixed device.
    Outbound(Transfer),
    /// Fixed device's reply headed back; `pending_fixed` holds the
    /// fixed device's post-cycle state, committed on arrival.
    Inbound {
        transfer: Transfer,
        pending_fixed: Box<FixedDeviceState>,
        accepted: bool,
        threshold_before: f64,
        threshold_after: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CycleProgress {
    InTransit,
    Aborted,
    Committed,
}

/// The per-pair cycle state machine, driven one tick at a time.
#[derive(Debug, Clone)]
pub struct InFlightCycle {
    pub mule: DeviceId,
    pub fixed: DeviceId,
    pub mode: TrainingMode,
    pub started: TimeStep,
    stage: CycleStage,
    transfer_steps: u32,
}

impl InFlightCycle {
    /// Starts a cycle at tick `now`: the mule's current snapshot is
    /// serialized into the outbound transfer.
    pub fn start(
        mule_id: DeviceId,
        fixed_id: DeviceId,
        mode: TrainingMode,
        mule: &MuleState,
        transfer_steps: u32,
        now: TimeStep,
    ) -> Self {
        InFlightCycle {
            mule: mule_id,
            fixed: fixed_id,
            mode,
            started: now,
            stage: CycleStage::Outbound(Transfer {
                src: mule_id,
                dst: fixed_id,
                payload: mule.snapshot.clone(),
                remaining: transfer_steps.max(1),
            }),
            transfer_steps: transfer_steps.max(1),
        }
    }

    /// Advances one tick. `co_located` must reflect the pair's state at
    /// this tick; when it is false the cycle aborts with no effect on
    /// either endpoint. On commit both endpoint states are written and
    /// a report is produced.
    #[allow(clippy::too_many_arguments)]
    pub fn tick(
        &mut self,
        co_located: bool,
        mule: &mut MuleState,
        fixed: &mut FixedDeviceState,
        now: TimeStep,
        hyper: &Hyperparams,
        fresh: &FreshnessParams,
        rng: &mut SimRng,
    ) -> Result<(CycleProgress, Option<CycleReport>)> {
        if !co_located {
            return Ok((CycleProgress::Aborted, None));
        }
        match &mut self.stage {
            CycleStage::Outbound(transfer) => {
                transfer.remaining -= 1;
                if transfer.remaining > 0 {
                    return Ok((CycleProgress::InTransit, None));
                }
                let threshold_before = fixed.threshold;
                let (pending, reply, accepted) =
                    fixed_side(fixed, &transfer.payload, self.mode, now, hyper, fresh, rng)?;
                let threshold_after = pending.threshold;
                self.stage = CycleStage::Inbound {
                    transfer: Transfer {
                        src: self.fixed,
                        dst: self.mule,
                        payload: reply,
                        remaining: self.transfer_steps,
                    },
                    pending_fixed: Box::new(pending),
                    accepted,
                    threshold_before,
                    threshold_after,
                };
                Ok((CycleProgress::InTransit, None))
            }
            CycleStage::Inbound {
                transfer,
                pending_fixed,
                accepted,
                threshold_before,
                threshold_after,
            } => {
                transfer.remaining -= 1;
                if transfer.remaining > 0 {
                    return Ok((CycleProgress::InTransit, None));
                }
                mule_side(mule, &transfer.payload, self.mode, now, hyper, rng)?;
                *fixed = (**pending_fixed).clone();
                let report = CycleReport {
                    t: now,
                    mule: self.mule,
                    fixed: self.fixed,
                    mode: self.mode,
                    accepted: *accepted,
                    threshold_before: *threshold_before,
                    threshold_after: *threshold_after,
                };
                Ok((CycleProgress::Committed, Some(report)))
            }
        }
    }
}

/// The fixed device's half of a cycle, computed when the outbound
/// transfer lands: filter, aggregate on accept, and (fixed-training
/// mode only) train one epoch stamping the completion time. Returns the
/// pending state, the reply payload, and the filter decision. A
/// rejected snapshot skips aggregation but the device still trains and
/// replies.
fn fixed_side(
    fixed: &FixedDeviceState,
    incoming: &ModelSnapshot,
    mode: TrainingMode,
    now: TimeStep,
    hyper: &Hyperparams,
    fresh: &FreshnessParams,
    rng: &mut SimRng,
) -> Result<(FixedDeviceState, ModelSnapshot, bool)> {
    let mut pending = fixed.clone();
    let accepted = pending.filter_incoming(incoming, fresh);
    if accepted {
        pending.snapshot = merge_snapshots(&pending.snapshot, incoming)?;
    }
    if mode == TrainingMode::FixedTraining && has_data(&pending.local_train) {
        let ds = pending.local_train.as_ref().expect("checked above");
        let params = train(&pending.snapshot.params, ds, &hyper.with_epochs(1), rng)?;
        pending.snapshot = ModelSnapshot {
            params,
            last_update: now,
            n_train_samples: pending.snapshot.n_train_samples.max(ds.len() as u64),
        };
    }
    let reply = pending.snapshot.clone();
    Ok((pending, reply, accepted))
}

/// The mule's half, applied when the reply lands: aggregate, and in
/// mobile-training mode train one epoch on local data, stamping the
/// completion time.
fn mule_side(
    mule: &mut MuleState,
    reply: &ModelSnapshot,
    mode: TrainingMode,
    now: TimeStep,
    hyper: &Hyperparams,
    rng: &mut SimRng,
) -> Result<()> {
    mule.snapshot = merge_snapshots(&mule.snapshot, reply)?;
    if mode == TrainingMode::MobileTraining && has_data(&mule.local_train) {
        let ds = mule.local_train.as_ref().expect("checked above");
        let params = train(&mule.snapshot.params, ds, &hyper.with_epochs(1), rng)?;
        mule.snapshot = ModelSnapshot {
            params,
            last_update: now,
            n_train_samples: mule.snapshot.n_train_samples.max(ds.len() as u64),
        };
    }
    Ok(())
}

/// Runs one uninterrupted share-aggregate-train-share cycle and returns
/// the post-cycle states. Timestamps fall where the engine-driven state
/// machine would put them: training at `now + transfer_steps`, commit
/// at `now + 2 * transfer_steps`.
pub fn fixed_training_cycle(
    mule: &MuleState,
    fixed: &FixedDeviceState,
    now: TimeStep,
    transfer_steps: u32,
    hyper: &Hyperparams,
    fresh: &FreshnessParams,
    rng: &mut SimRng,
) -> Result<(MuleState, FixedDeviceState, CycleReport)> {
    run_cycle(
        mule,
        fixed,
        TrainingMode::FixedTraining,
        now,
        transfer_steps,
        hyper,
        fresh,
        rng,
    )
}

/// Runs one uninterrupted share-aggregate-share-train cycle; the fixed
/// device only aggregates (the record the mule leaves behind) and the
/// mule trains after the reply.
pub fn mobile_training_cycle(
    mule: &MuleState,
    fixed: &FixedDeviceState,
    now: TimeStep,
    transfer_steps: u32,
    hyper: &Hyperparams,
    fresh: &FreshnessParams,
    rng: &mut SimRng,
) -> Result<(MuleState, FixedDeviceState, CycleReport)> {
    run_cycle(
        mule,
        fixed,
        TrainingMode::MobileTraining,
        now,
        transfer_steps,
        hyper,
        fresh,
        rng,
    )
}

#[allow(clippy::too_many_arguments)]
fn run_cycle(
    mule: &MuleState,
    fixed: &FixedDeviceState,
    mode: TrainingMode,
    now: TimeStep,
    transfer_steps: u32,
    hyper: &Hyperparams,
    fresh: &FreshnessParams,
    rng: &mut SimRng,
) -> Result<(MuleState, FixedDeviceState, CycleReport)> {
    let mule_id = DeviceId(usize::MAX);
    let fixed_id = DeviceId(usize::MAX - 1);
    let mut cycle = InFlightCycle::start(mule_id, fixed_id, mode, mule, transfer_steps, now);
    let mut m = mule.clone();
    let mut f = fixed.clone();
    let mut t = now;
    loop {
        t += 1;
        let (progress, report) = cycle.tick(true, &mut m, &mut f, t, hyper, fresh, rng)?;
        if progress == CycleProgress::Committed {
            return Ok((m, f, report.expect("committed cycles report")));
        }
    }
}
