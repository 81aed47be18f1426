//! The discrete-time simulation loop: advances mobility, detects
//! co-locations and encounters, drives the protocol and baseline state
//! machines, counts rounds, and runs the evaluation protocol.
//!
//! One run is strictly single-threaded and deterministic per seed.
//! Independent runs (seed sweeps) parallelize with no shared state.

mod metrics;

pub use metrics::{moving_average, MetricRow, MetricsLog};

use rand::Rng;
use rand::SeedableRng;

use crate::baselines::{fedavg_round, local_only_step, CentralServer, ExchangeProgress, Method, PeerExchange};
use crate::config::{MobilityModel, PartitionScheme, SimConfig};
use crate::dataset::LabeledDataset;
use crate::error::Result;
use crate::learner::{evaluate, init_model, train, Hyperparams, ModelSnapshot};
use crate::partition::{
    partition_dirichlet, partition_iid, partition_shards, seed_mobile_data, synth_dataset,
};
use crate::protocol::{
    CycleProgress, FixedDeviceState, InFlightCycle, MuleState, Phase, TrainingMode,
};
use crate::rng::{self, SimRng};
use crate::worldsim::{
    detect_mobile_encounters, load_trace, MobilityTrace, Position, SpaceId, TimeStep, World,
};

pub const PRETRAIN_MAX_EPOCHS: usize = 200;
pub const PRETRAIN_PATIENCE: usize = 3;

/// Devices whose test split is smaller than this are left out of the
/// metrics (a one-sample accuracy is noise, and concentrated Dirichlet
/// draws routinely produce near-empty owners).
pub const MIN_TEST_SAMPLES: usize = 5;

/// Local training until the held-out accuracy stops improving for
/// `PRETRAIN_PATIENCE` consecutive epochs (capped). Stamps the snapshot
/// as updated at step 0. Devices without data are untouched.
pub fn pretrain(
    snapshot: &mut ModelSnapshot,
    train_ds: Option<&LabeledDataset>,
    test_ds: Option<&LabeledDataset>,
    hyper: &Hyperparams,
    rng: &mut SimRng,
) -> Result<usize> {
    let Some(train_ds) = train_ds.filter(|d| !d.is_empty()) else {
        return Ok(0);
    };
    // the stop metric falls back to training accuracy if no test split
    let probe = test_ds.filter(|d| !d.is_empty()).unwrap_or(train_ds);
    let mut best = f64::NEG_INFINITY;
    let mut stall = 0;
    let mut epochs = 0;
    for _ in 0..PRETRAIN_MAX_EPOCHS {
        snapshot.params = train(&snapshot.params, train_ds, &hyper.with_epochs(1), rng)?;
        epochs += 1;
        let acc = evaluate(&snapshot.params, probe)?.accuracy;
        if acc > best {
            best = acc;
            stall = 0;
        } else {
            stall += 1;
            if stall >= PRETRAIN_PATIENCE {
                break;
            }
        }
    }
    snapshot.last_update = 0;
    snapshot.n_train_samples = snapshot.n_train_samples.max(train_ds.len() as u64);
    Ok(epochs)
}

struct MuleRuntime {
    state: MuleState,
    pos: Position,
    home: Option<SpaceId>,
}

struct RunningExchange {
    exchange: PeerExchange,
    seed_a: u64,
    seed_b: u64,
}

pub struct Simulation {
    cfg: SimConfig,
    world: World,
    mules: Vec<MuleRuntime>,
    fixed: Vec<FixedDeviceState>,
    server: Option<CentralServer>,
    trace: Option<MobilityTrace>,
    dataset: LabeledDataset,
    /// Per-space held-out test split (mobile-training evaluation).
    space_tests: Vec<Option<LabeledDataset>>,
    /// Per-space sample pool feeding per-step data arrival.
    arrival_pools: Vec<Vec<usize>>,
    arrival_warned: Vec<bool>,

    mule_cycles: Vec<InFlightCycle>,
    peer_exchanges: Vec<RunningExchange>,

    mobility_rng: SimRng,
    learn_rng: SimRng,
    arrival_rng: SimRng,

    exchanges: u64,
    round: u64,
    best_post: f64,
    stall_rounds: u64,
    last_eval_t: Option<TimeStep>,
    log: MetricsLog,
}

impl Simulation {
    pub fn new(cfg: &SimConfig) -> Result<Simulation> {
        cfg.validate()?;
        let world = World::build(&cfg.world)?;
        let n_spaces = world.n_spaces();

        let mut learn_rng = rng::derive(cfg.seed, rng::STREAM_LEARNING);
        let mobility_rng = rng::derive(cfg.seed, rng::STREAM_MOBILITY);
        let arrival_rng = rng::derive(cfg.seed, rng::STREAM_ARRIVAL);
        let mut place_rng = rng::derive(cfg.seed, rng::STREAM_PLACEMENT);

        let trace = match cfg.mobility {
            MobilityModel::Trace => {
                let path = cfg.trace_path.as_ref().expect("validated");
                Some(load_trace(path, n_spaces)?)
            }
            MobilityModel::RandomWalk => None,
        };
        let n_mules = trace.as_ref().map_or(cfg.n_mules, |t| t.n_users);

        let dataset = synth_dataset(&cfg.data, &mut learn_rng)?;
        let shape = cfg.shape_tag();
        let init = init_model(shape, &mut learn_rng);

        let mut fixed: Vec<FixedDeviceState> = (0..n_spaces)
            .map(|_| FixedDeviceState::new(ModelSnapshot::new(init.clone())))
            .collect();
        let mut mules: Vec<MuleRuntime> = (0..n_mules)
            .map(|_| MuleRuntime {
                state: MuleState::new(ModelSnapshot::new(init.clone())),
                pos: Position::new(0.0, 0.0),
                home: None,
            })
            .collect();
        let mut space_tests: Vec<Option<LabeledDataset>> = vec![None; n_spaces];
        let mut arrival_pools: Vec<Vec<usize>> = vec![Vec::new(); n_spaces];

        match cfg.mode {
            TrainingMode::FixedTraining => {
                let owner_indices: Vec<Vec<usize>> = match cfg.partition {
                    PartitionScheme::Iid => {
                        let pa = partition_iid(&dataset, n_spaces, &mut learn_rng)?;
                        (0..n_spaces).map(|o| pa.samples(o).to_vec()).collect()
                    }
                    PartitionScheme::Dirichlet => {
                        let pa = partition_dirichlet(&dataset, n_spaces, cfg.alpha, &mut learn_rng)?;
                        (0..n_spaces).map(|o| pa.samples(o).to_vec()).collect()
                    }
                    PartitionScheme::Shards => {
                        partition_shards(&dataset, &world)?.space_samples
                    }
                };
                for (s, indices) in owner_indices.iter().enumerate() {
                    let (train_idx, test_idx) =
                        split_lenient(&dataset, indices, cfg.test_frac, &mut learn_rng);
                    fixed[s].local_train = Some(dataset.subset(&train_idx));
                    fixed[s].local_test = Some(dataset.subset(&test_idx));
                }
            }
            TrainingMode::MobileTraining => {
                let mut shards = partition_shards(&dataset, &world)?;
                // hold out each space's test split before any seeding
                for (s, slot) in space_tests.iter_mut().enumerate() {
                    let all = std::mem::take(&mut shards.space_samples[s]);
                    let (rest, test_idx) =
                        split_lenient(&dataset, &all, cfg.test_frac, &mut learn_rng);
                    *slot = Some(dataset.subset(&test_idx));
                    shards.space_samples[s] = rest;
                }
                for (k, mule) in mules.iter_mut().enumerate() {
                    // area-major round robin keeps mule counts (and so
                    // general-pool draws) balanced across areas
                    let n_areas = world.areas.len();
                    let area = k % n_areas;
                    let local = (k / n_areas) % crate::worldsim::SPACES_PER_AREA;
                    let home = SpaceId(area * crate::worldsim::SPACES_PER_AREA + local);
                    mule.home = Some(home);
                    let seeded = seed_mobile_data(
                        &mut shards,
                        &dataset,
                        home,
                        cfg.n_local,
                        cfg.n_general,
                        &mut learn_rng,
                    )?;
                    let (train_idx, test_idx) =
                        split_lenient(&dataset, &seeded, cfg.test_frac, &mut learn_rng);
                    mule.state.local_train = Some(dataset.subset(&train_idx));
                    mule.state.local_test = Some(dataset.subset(&test_idx));
                }
                // whatever remains in each space generates arrivals
                arrival_pools = shards.space_samples;
            }
        }

        // pretraining, identical across methods for a given seed
        let hyper = cfg.hyper.clone();
        for f in fixed.iter_mut() {
            pretrain(
                &mut f.snapshot,
                f.local_train.as_ref(),
                f.local_test.as_ref(),
                &hyper,
                &mut learn_rng,
            )?;
        }
        for m in mules.iter_mut() {
            pretrain(
                &mut m.state.snapshot,
                m.state.local_train.as_ref(),
                m.state.local_test.as_ref(),
                &hyper,
                &mut learn_rng,
            )?;
        }

        // initial placement
        if cfg.mobility == MobilityModel::RandomWalk {
            for (k, mule) in mules.iter_mut().enumerate() {
                mule.pos = match cfg.mode {
                    TrainingMode::FixedTraining => {
                        let area = &world.areas[k % world.areas.len()].bounds;
                        Position::new(
                            place_rng.gen_range(area.min_x..=area.max_x()),
                            place_rng.gen_range(area.min_y..=area.max_y()),
                        )
                    }
                    TrainingMode::MobileTraining => {
                        // anywhere in the home area: seed data is tied
                        // to the home space, the walk is not
                        let home = mule.home.expect("assigned above");
                        let area = &world.areas[world.area_of_space(home).0].bounds;
                        Position::new(
                            place_rng.gen_range(area.min_x..=area.max_x()),
                            place_rng.gen_range(area.min_y..=area.max_y()),
                        )
                    }
                };
            }
        }

        let server = (cfg.method == Method::FedAvg)
            .then(|| CentralServer::new(ModelSnapshot::new(init.clone())));

        Ok(Simulation {
            cfg: cfg.clone(),
            world,
            mules,
            fixed,
            server,
            trace,
            dataset,
            space_tests,
            arrival_pools,
            arrival_warned: vec![false; n_spaces],
            mule_cycles: Vec::new(),
            peer_exchanges: Vec::new(),
            mobility_rng,
            learn_rng,
            arrival_rng,
            exchanges: 0,
            round: 0,
            best_post: f64::NEG_INFINITY,
            stall_rounds: 0,
            last_eval_t: None,
            log: MetricsLog::default(),
        })
    }

    pub fn run(&mut self) -> Result<()> {
        let total = self.cfg.total_steps;
        let mut last_t = 0;
        for t in 0..total {
            last_t = t;
            if !self.tick(t)? {
                return Ok(());
            }
        }
        if self.last_eval_t != Some(last_t) {
            let rows = self.evaluate_devices(last_t)?;
            self.log.rows.extend(rows);
        }
        Ok(())
    }

    pub fn into_log(self) -> MetricsLog {
        self.log
    }

    pub fn log(&self) -> &MetricsLog {
        &self.log
    }

    /// Returns false once the run should stop (early stop).
    fn tick(&mut self, t: TimeStep) -> Result<bool> {
        // 1. mobility
        if self.cfg.mobility == MobilityModel::RandomWalk {
            for mule in self.mules.iter_mut() {
                mule.pos =
                    crate::worldsim::step_random_walk(&self.world, mule.pos, self.cfg.p_cross, &mut self.mobility_rng);
            }
        }

        // 2. co-locations
        let coloc_space = self.current_colocations(t);

        // 3. phases, first-contact timers, data arrival
        for (k, mule) in self.mules.iter_mut().enumerate() {
            match coloc_space[k] {
                Some(s) => {
                    let fid = self.world.fixed_device_id(s);
                    if mule.state.phase != Phase::InHouse(fid) {
                        mule.state.phase = Phase::InHouse(fid);
                        mule.state.cycle_timer = 0;
                    }
                }
                None => crate::protocol::mule_phase_tick(&mut mule.state),
            }
        }
        if self.cfg.mode == TrainingMode::MobileTraining {
            self.data_arrival_tick(&coloc_space);
        }

        // 4. method machinery
        if self.cfg.method.uses_mule_cycles() {
            self.drive_mule_cycles(t, &coloc_space)?;
        }
        if self.cfg.method.peer_exchange_kind().is_some() {
            self.drive_peer_exchanges(t)?;
        }
        match self.cfg.method {
            Method::FedAvg => self.fedavg_tick(t)?,
            Method::LocalOnly => self.local_tick(t)?,
            _ => {}
        }

        // 5. rounds, evaluation, early stop
        let mut boundary = false;
        if self.cfg.method.counts_exchanges() {
            let new_round = self.exchanges / self.cfg.exchanges_per_round;
            if new_round > self.round {
                self.round = new_round;
                boundary = true;
            }
        } else {
            self.round = t + 1;
            boundary = true;
        }
        let scheduled = t.is_multiple_of(self.cfg.eval_every);
        if boundary || scheduled {
            let rows = self.evaluate_devices(t)?;
            self.last_eval_t = Some(t);
            // the run's performance metric: mean post-local accuracy
            let mean_post = if rows.is_empty() {
                f64::NEG_INFINITY
            } else {
                rows.iter().map(|r| r.post_acc).sum::<f64>() / rows.len() as f64
            };
            self.log.rows.extend(rows);
            if boundary {
                if mean_post > self.best_post {
                    self.best_post = mean_post;
                    self.stall_rounds = 0;
                } else {
                    self.stall_rounds += 1;
                    if self.stall_rounds >= self.cfg.patience_rounds {
                        return Ok(false);
                    }
                }
            }
        }
        #[cfg(debug_assertions)]
        self.audit_single_writer();
        Ok(true)
    }

    /// Each device may be driven by at most one state machine per tick.
    #[cfg(debug_assertions)]
    fn audit_single_writer(&self) {
        let mut mule_seen = vec![false; self.mules.len()];
        let mut fixed_seen = vec![false; self.fixed.len()];
        for c in &self.mule_cycles {
            let k = c.mule.0 - self.world.n_spaces();
            assert!(!mule_seen[k], "mule {k} driven by two cycles");
            mule_seen[k] = true;
            assert!(!fixed_seen[c.fixed.0], "fixed {} in two cycles", c.fixed.0);
            fixed_seen[c.fixed.0] = true;
        }
        for ex in &self.peer_exchanges {
            for m in [ex.exchange.a, ex.exchange.b] {
                assert!(!mule_seen[m], "mule {m} in cycle and exchange");
                mule_seen[m] = true;
            }
        }
    }

    /// Which space each mule occupies at `t`, by ordinal.
    fn current_colocations(&self, t: TimeStep) -> Vec<Option<SpaceId>> {
        match &self.trace {
            Some(trace) => {
                let mut spaces = vec![None; self.mules.len()];
                for r in &trace.records {
                    if r.covers(t) {
                        spaces[r.user] = Some(r.space);
                    }
                }
                spaces
            }
            None => self
                .mules
                .iter()
                .map(|m| self.world.locate(m.pos))
                .collect(),
        }
    }

    fn drive_mule_cycles(&mut self, t: TimeStep, coloc_space: &[Option<SpaceId>]) -> Result<()> {
        let n_spaces = self.world.n_spaces();
        let hyper = self.cfg.hyper.clone();
        let fresh = self.cfg.freshness.clone();
        let delay = self.cfg.delay_d;

        // advance in-flight cycles
        let mut still = Vec::with_capacity(self.mule_cycles.len());
        for mut cycle in std::mem::take(&mut self.mule_cycles) {
            let k = cycle.mule.0 - n_spaces;
            let sid = SpaceId(cycle.fixed.0);
            let co_located = coloc_space[k] == Some(sid);
            let (progress, report) = cycle.tick(
                co_located,
                &mut self.mules[k].state,
                &mut self.fixed[sid.0],
                t,
                &hyper,
                &fresh,
                &mut self.learn_rng,
            )?;
            match progress {
                CycleProgress::InTransit => still.push(cycle),
                CycleProgress::Aborted => {}
                CycleProgress::Committed => {
                    self.exchanges += 1;
                    self.mules[k].state.cycle_timer = delay;
                    self.log
                        .cycle_reports
                        .push(report.expect("committed cycle reports"));
                }
            }
        }
        self.mule_cycles = still;

        // start new cycles where the pair is free and the timer expired
        let mut busy_mule = vec![false; self.mules.len()];
        let mut busy_fixed = vec![false; n_spaces];
        for c in &self.mule_cycles {
            busy_mule[c.mule.0 - n_spaces] = true;
            busy_fixed[c.fixed.0] = true;
        }
        for ex in &self.peer_exchanges {
            busy_mule[ex.exchange.a] = true;
            busy_mule[ex.exchange.b] = true;
        }
        for k in 0..self.mules.len() {
            let Some(s) = coloc_space[k] else { continue };
            if busy_mule[k] || busy_fixed[s.0] {
                continue;
            }
            if self.mules[k].state.cycle_timer == 0 {
                let cycle = InFlightCycle::start(
                    self.world.mule_device_id(k),
                    self.world.fixed_device_id(s),
                    self.cfg.mode,
                    &self.mules[k].state,
                    self.cfg.transfer_steps,
                    t,
                );
                self.mule_cycles.push(cycle);
                busy_mule[k] = true;
                busy_fixed[s.0] = true;
            } else {
                self.mules[k].state.cycle_timer -= 1;
            }
        }
        Ok(())
    }

    fn drive_peer_exchanges(&mut self, t: TimeStep) -> Result<()> {
        let kind = self.cfg.method.peer_exchange_kind().expect("checked");
        let radius = self.world.comm_radius_mobile;
        let hyper = self.cfg.hyper.clone();

        let positions: Vec<Position> = self.mules.iter().map(|m| m.pos).collect();

        let mut still = Vec::with_capacity(self.peer_exchanges.len());
        for mut running in std::mem::take(&mut self.peer_exchanges) {
            let (a, b) = (running.exchange.a, running.exchange.b);
            let in_range = positions[a].euclidean(&positions[b]) <= radius;
            // each exchange consumes randomness at exactly one tick, so
            // rebuilding the party streams from stored seeds is stable
            let mut rng_a = SimRng::seed_from_u64(running.seed_a);
            let mut rng_b = SimRng::seed_from_u64(running.seed_b);
            let (sa, sb) = split_two(&mut self.mules, a, b);
            let progress = running.exchange.tick(
                in_range,
                &mut sa.state,
                &mut sb.state,
                t,
                &hyper,
                &mut rng_a,
                &mut rng_b,
            )?;
            match progress {
                ExchangeProgress::InTransit => still.push(running),
                ExchangeProgress::Aborted => {}
                ExchangeProgress::Committed => self.exchanges += 1,
            }
        }
        self.peer_exchanges = still;

        // pair free devices: each picks its lowest-id free in-range peer
        let mut busy = vec![false; self.mules.len()];
        for c in &self.mule_cycles {
            busy[c.mule.0 - self.world.n_spaces()] = true;
        }
        for ex in &self.peer_exchanges {
            busy[ex.exchange.a] = true;
            busy[ex.exchange.b] = true;
        }
        let in_range_pairs = detect_mobile_encounters(&self.world, &positions);
        for a in 0..self.mules.len() {
            if busy[a] {
                continue;
            }
            let partner = in_range_pairs
                .iter()
                .filter_map(|&(x, y)| match (x == a, y == a) {
                    (true, _) => Some(y),
                    (_, true) => Some(x),
                    _ => None,
                })
                .find(|&p| !busy[p]);
            let Some(b) = partner else { continue };
            let seed_a = self.learn_rng.gen::<u64>();
            let seed_b = self.learn_rng.gen::<u64>();
            let (sa, sb) = split_two(&mut self.mules, a, b);
            self.peer_exchanges.push(RunningExchange {
                exchange: PeerExchange::start(
                    a,
                    b,
                    kind,
                    &sa.state,
                    &sb.state,
                    self.cfg.transfer_steps,
                ),
                seed_a,
                seed_b,
            });
            busy[a] = true;
            busy[b] = true;
        }
        Ok(())
    }

    fn fedavg_tick(&mut self, t: TimeStep) -> Result<()> {
        // clients: every data-holding fixed device, trained this round
        let mut clients: Vec<(usize, u64)> = Vec::new();
        for s in 0..self.fixed.len() {
            let Some(ds) = self.fixed[s].local_train.clone().filter(|d| !d.is_empty()) else {
                continue;
            };
            local_only_step(
                &mut self.fixed[s].snapshot,
                &ds,
                &self.cfg.hyper,
                t,
                &mut self.learn_rng,
            )?;
            clients.push((s, ds.len() as u64));
        }
        let server = self.server.as_mut().expect("fedavg has a server");
        let params: Vec<(&crate::learner::ModelParams, u64)> = clients
            .iter()
            .map(|&(s, n)| (&self.fixed[s].snapshot.params, n))
            .collect();
        if let Some(global) = fedavg_round(server, &params, t)? {
            for &(s, _) in &clients {
                self.fixed[s].snapshot.params = global.clone();
                self.fixed[s].snapshot.last_update = t;
            }
        }
        Ok(())
    }

    fn local_tick(&mut self, t: TimeStep) -> Result<()> {
        match self.cfg.mode {
            TrainingMode::FixedTraining => {
                for f in self.fixed.iter_mut() {
                    if let Some(ds) = f.local_train.clone().filter(|d| !d.is_empty()) {
                        local_only_step(&mut f.snapshot, &ds, &self.cfg.hyper, t, &mut self.learn_rng)?;
                    }
                }
            }
            TrainingMode::MobileTraining => {
                for m in self.mules.iter_mut() {
                    if let Some(ds) = m.state.local_train.clone().filter(|d| !d.is_empty()) {
                        local_only_step(
                            &mut m.state.snapshot,
                            &ds,
                            &self.cfg.hyper,
                            t,
                            &mut self.learn_rng,
                        )?;
                    }
                }
            }
        }
        Ok(())
    }

    /// Inside a space, a mule picks up one fresh sample per step from
    /// that space's generation pool until the pool runs dry.
    fn data_arrival_tick(&mut self, coloc_space: &[Option<SpaceId>]) {
        for (k, &space) in coloc_space.iter().enumerate() {
            let Some(s) = space else { continue };
            let pool = &mut self.arrival_pools[s.0];
            if pool.is_empty() {
                if !self.arrival_warned[s.0] {
                    eprintln!(
                        "warning: space {} generation pool exhausted; data arrival stops",
                        s.0
                    );
                    self.arrival_warned[s.0] = true;
                }
                continue;
            }
            let at = self.arrival_rng.gen_range(0..pool.len());
            let idx = pool.swap_remove(at);
            let row = self.dataset.feature_row(idx).to_vec();
            let label = self.dataset.label(idx);
            if let Some(train_ds) = self.mules[k].state.local_train.as_mut() {
                train_ds.push_row(&row, label);
            }
        }
    }

    /// Side-effect free: fine-tuned copies are discarded and all
    /// randomness comes from RNGs keyed on (seed, t, entity), so calling
    /// this twice at the same tick yields identical rows.
    pub fn evaluate_devices(&self, t: TimeStep) -> Result<Vec<MetricRow>> {
        let mut rows = Vec::new();
        let method = self.cfg.method.to_string();
        match self.cfg.mode {
            TrainingMode::FixedTraining => {
                for (s, f) in self.fixed.iter().enumerate() {
                    let Some(test) = f
                        .local_test
                        .as_ref()
                        .filter(|d| d.len() >= MIN_TEST_SAMPLES)
                    else {
                        if t == 0 {
                            eprintln!(
                                "warning: fixed device {s} test split below {MIN_TEST_SAMPLES} samples; rows omitted"
                            );
                        }
                        continue;
                    };
                    let pre = evaluate(&f.snapshot.params, test)?;
                    let post_acc = match f.local_train.as_ref().filter(|d| !d.is_empty()) {
                        Some(train_ds) => {
                            let mut ev_rng =
                                rng::derive_keyed(self.cfg.seed, rng::STREAM_EVAL, t, s as u64);
                            let tuned = train(
                                &f.snapshot.params,
                                train_ds,
                                &self.cfg.hyper.with_epochs(1),
                                &mut ev_rng,
                            )?;
                            evaluate(&tuned, test)?.accuracy
                        }
                        None => pre.accuracy,
                    };
                    rows.push(MetricRow {
                        t,
                        round: self.round,
                        entity: format!("f{s}"),
                        pre_acc: pre.accuracy,
                        post_acc,
                        loss: pre.loss,
                        exchanges: self.exchanges,
                        method: method.clone(),
                        seed: self.cfg.seed,
                    });
                }
            }
            TrainingMode::MobileTraining => {
                for (k, mule) in self.mules.iter().enumerate() {
                    let here = self.world.locate(mule.pos).or(mule.home);
                    let Some(s) = here else { continue };
                    let Some(test) = self.space_tests[s.0]
                        .as_ref()
                        .filter(|d| d.len() >= MIN_TEST_SAMPLES)
                    else {
                        if t == 0 {
                            eprintln!("warning: space {} test split below {MIN_TEST_SAMPLES} samples; rows omitted", s.0);
                        }
                        continue;
                    };
                    let m = evaluate(&mule.state.snapshot.params, test)?;
                    rows.push(MetricRow {
                        t,
                        round: self.round,
                        entity: format!("m{k}"),
                        pre_acc: m.accuracy,
                        post_acc: m.accuracy,
                        loss: m.loss,
                        exchanges: self.exchanges,
                        method: method.clone(),
                        seed: self.cfg.seed,
                    });
                }
            }
        }
        Ok(rows)
    }
}

/// Disjoint mutable borrows of two mule slots.
fn split_two(mules: &mut [MuleRuntime], a: usize, b: usize) -> (&mut MuleRuntime, &mut MuleRuntime) {
    debug_assert_ne!(a, b);
    if a < b {
        let (lo, hi) = mules.split_at_mut(b);
        (&mut lo[a], &mut hi[0])
    } else {
        let (lo, hi) = mules.split_at_mut(a);
        (&mut hi[0], &mut lo[b])
    }
}

/// Stratified split that tolerates singleton classes by keeping them in
/// the training side (a strict split would reject them; partitions like
/// a concentrated Dirichlet produce such owners routinely).
fn split_lenient(
    ds: &LabeledDataset,
    indices: &[usize],
    test_frac: f64,
    rng: &mut SimRng,
) -> (Vec<usize>, Vec<usize>) {
    use rand::seq::SliceRandom;
    let mut by_class: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
    for &i in indices {
        by_class.entry(ds.label(i)).or_default().push(i);
    }
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (_, mut members) in by_class {
        if members.len() < 2 {
            train.extend(members);
            continue;
        }
        members.shuffle(rng);
        let n_test = ((test_frac * members.len() as f64).round() as usize).min(members.len() - 1);
        test.extend_from_slice(&members[..n_test]);
        train.extend_from_slice(&members[n_test..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    (train, test)
}

/// Runs one full simulation and returns its metrics log.
pub fn run_simulation(cfg: &SimConfig) -> Result<MetricsLog> {
    let mut sim = Simulation::new(cfg)?;
    sim.run()?;
    Ok(sim.into_log())
}

#[cfg(test)]
#[allow(clippy::field_reassign_with_default)]
mod tests {
    use super::*;
    use crate::config::SimConfig;
    use crate::learner::ShapeTag;

    fn small_cfg(method: Method) -> SimConfig {
        let mut cfg = SimConfig::default();
        cfg.method = method;
        cfg.data.samples_per_subclass = 60;
        cfg.data.superclasses = 2;
        cfg.data.subclasses_per_super = 5;
        cfg.total_steps = 120;
        cfg.eval_every = 20;
        cfg.n_mules = 8;
        cfg.seed = 7;
        cfg.world.seed = 7;
        cfg
    }

    #[test]
    fn moving_average_examples() {
        assert_eq!(moving_average(&[3.0, 1.0, 4.0], 1), vec![3.0, 1.0, 4.0]);
        assert_eq!(moving_average(&[2.0, 2.0, 2.0], 5), vec![2.0, 2.0, 2.0]);
        assert_eq!(moving_average(&[0.0, 1.0], 2), vec![0.0, 0.5]);
    }

    #[test]
    fn pretrain_reaches_separable_ceiling_before_cap() {
        let spec = crate::partition::SynthSpec {
            superclasses: 2,
            subclasses_per_super: 2,
            samples_per_subclass: 40,
            feature_dim: 2,
            sigma: 1e-6,
        };
        let mut r = rng::derive(0, rng::STREAM_LEARNING);
        let ds = synth_dataset(&spec, &mut r).unwrap();
        let (train_ds, test_ds) = crate::partition::train_test_split(&ds, 0.2, &mut r).unwrap();
        let mut snap = ModelSnapshot::new(init_model(ShapeTag::logistic(2, 4), &mut r));
        let hyper = Hyperparams {
            batch_size: 8,
            ..Hyperparams::default()
        };
        let epochs = pretrain(&mut snap, Some(&train_ds), Some(&test_ds), &hyper, &mut r).unwrap();
        assert!(epochs < PRETRAIN_MAX_EPOCHS);
        let acc = evaluate(&snap.params, &test_ds).unwrap().accuracy;
        assert!(acc >= 0.99, "test accuracy {acc}");
        assert_eq!(snap.last_update, 0);
        assert_eq!(snap.n_train_samples, train_ds.len() as u64);
    }

    #[test]
    fn pretrain_skips_empty_devices() {
        let mut r = rng::derive(0, rng::STREAM_LEARNING);
        let mut snap = ModelSnapshot::new(init_model(ShapeTag::logistic(2, 4), &mut r));
        let before = snap.clone();
        let epochs = pretrain(&mut snap, None, None, &Hyperparams::default(), &mut r).unwrap();
        assert_eq!(epochs, 0);
        assert_eq!(snap, before);
    }

    #[test]
    fn identical_config_and_seed_reproduce_byte_identical_csv() {
        let cfg = small_cfg(Method::MlMule);
        let a = run_simulation(&cfg).unwrap().to_csv();
        let b = run_simulation(&cfg).unwrap().to_csv();
        assert_eq!(a, b);
        assert!(!a.is_empty());
    }

    #[test]
    fn local_only_ignores_mobility() {
        let mut cfg = small_cfg(Method::LocalOnly);
        cfg.total_steps = 60;
        let mut csvs = Vec::new();
        for p in [0.0, 0.1, 0.5] {
            cfg.p_cross = p;
            csvs.push(run_simulation(&cfg).unwrap().to_csv());
        }
        assert_eq!(csvs[0], csvs[1]);
        assert_eq!(csvs[1], csvs[2]);
    }

    #[test]
    fn rounds_track_completed_exchanges() {
        let cfg = small_cfg(Method::MlMule);
        let log = run_simulation(&cfg).unwrap();
        assert!(!log.rows.is_empty());
        let mut prev_round = 0;
        for row in &log.rows {
            assert_eq!(row.round, row.exchanges / cfg.exchanges_per_round);
            assert!(row.round >= prev_round, "round counter regressed");
            prev_round = row.round;
            assert!((0.0..=1.0).contains(&row.pre_acc));
            assert!((0.0..=1.0).contains(&row.post_acc));
        }
        // cycles actually completed in this config
        assert!(log.rows.last().unwrap().exchanges > 0);
        assert!(!log.cycle_reports.is_empty());
    }

    #[test]
    fn evaluation_is_side_effect_free() {
        let cfg = small_cfg(Method::MlMule);
        let mut sim = Simulation::new(&cfg).unwrap();
        for t in 0..40 {
            sim.tick(t).unwrap();
        }
        let a = sim.evaluate_devices(40).unwrap();
        let b = sim.evaluate_devices(40).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn early_stop_never_fires_before_patience() {
        let mut cfg = small_cfg(Method::LocalOnly);
        cfg.patience_rounds = 10;
        cfg.total_steps = 2000;
        let log = run_simulation(&cfg).unwrap();
        let last = log.rows.last().unwrap();
        assert!(last.round >= cfg.patience_rounds);
    }

    #[test]
    fn mobile_mode_runs_with_shards() {
        let mut cfg = small_cfg(Method::MlMule);
        cfg.mode = TrainingMode::MobileTraining;
        cfg.partition = PartitionScheme::Shards;
        cfg.data.samples_per_subclass = 120;
        cfg.n_local = 20;
        cfg.n_general = 10;
        cfg.total_steps = 100;
        let log = run_simulation(&cfg).unwrap();
        assert!(!log.rows.is_empty());
        // entities are mules in mobile mode
        assert!(log.rows.iter().all(|r| r.entity.starts_with('m')));
    }

    /// Dwell arithmetic: a full cycle needs co-location from its start
    /// tick through commit at start + 2 * transfer_steps.
    #[test]
    fn exchange_counts_track_dwell_time() {
        let run_with_dwell = |dwell: u64| -> u64 {
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("trace.txt");
            std::fs::write(&path, format!("u1,p1,0,{dwell}\n")).unwrap();
            let mut cfg = small_cfg(Method::MlMule);
            cfg.mobility = MobilityModel::Trace;
            cfg.trace_path = Some(path);
            cfg.total_steps = 60;
            let log = run_simulation(&cfg).unwrap();
            log.rows.last().unwrap().exchanges
        };
        assert_eq!(run_with_dwell(1), 0, "one-step dwell cannot complete a transfer");
        assert_eq!(run_with_dwell(6), 0, "dwell must cover the commit tick");
        assert_eq!(run_with_dwell(7), 1, "2 * transfer_steps + 1 ticks completes one cycle");
        assert_eq!(run_with_dwell(13), 2, "with delay 0 cycles run back to back");
        assert!(run_with_dwell(26) >= run_with_dwell(13), "doubling dwell never loses cycles");
    }

    #[test]
    fn cycle_delay_spaces_out_cycles() {
        let run_with_delay = |delay: u64| -> u64 {
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("trace.txt");
            std::fs::write(&path, "u1,p1,0,25\n").unwrap();
            let mut cfg = small_cfg(Method::MlMule);
            cfg.mobility = MobilityModel::Trace;
            cfg.trace_path = Some(path);
            cfg.delay_d = delay;
            cfg.total_steps = 40;
            let log = run_simulation(&cfg).unwrap();
            log.rows.last().unwrap().exchanges
        };
        // 25 co-located ticks: cycles cost 6 ticks plus the delay gap
        assert_eq!(run_with_delay(0), 4);
        assert!(run_with_delay(6) < run_with_delay(0));
    }

    #[test]
    fn data_arrival_grows_mule_datasets_with_space_labels() {
        let mut cfg = small_cfg(Method::LocalOnly);
        cfg.mode = TrainingMode::MobileTraining;
        cfg.partition = PartitionScheme::Shards;
        cfg.data.samples_per_subclass = 120;
        cfg.n_local = 20;
        cfg.n_general = 10;
        cfg.p_cross = 0.0; // stay put: arrivals only from the home space
        let mut sim = Simulation::new(&cfg).unwrap();

        let before: Vec<usize> = sim
            .mules
            .iter()
            .map(|m| m.state.local_train.as_ref().unwrap().len())
            .collect();
        let ticks = 12u64;
        for t in 0..ticks {
            sim.tick(t).unwrap();
        }
        // shards assignment is a pure function of dataset and world, so
        // recompute the per-space subclass map for the label check
        let shards = partition_shards(&sim.dataset, &sim.world).unwrap();
        let mut total_grown = 0;
        for (k, mule) in sim.mules.iter().enumerate() {
            let ds = mule.state.local_train.as_ref().unwrap();
            let grown = ds.len() - before[k];
            total_grown += grown;
            assert!(grown <= ticks as usize, "mule {k} grew {grown} in {ticks} ticks");
            // with p_cross = 0 a mule occupies at most one space, so
            // every arrival carries that space's subclass
            match sim.world.locate(mule.pos) {
                Some(s) => {
                    for i in before[k]..ds.len() {
                        assert_eq!(ds.label(i), shards.space_subclass[s.0]);
                    }
                }
                None => assert_eq!(grown, 0, "mule {k} in the open must not collect data"),
            }
        }
        assert!(total_grown > 0, "someone must be standing in a space");
    }

    /// On a concentrated split an aggregating method's global-ish model
    /// scores below its locally fine-tuned version: post-local beats
    /// pre-local on average across seeds.
    #[test]
    fn post_local_exceeds_pre_local_on_concentrated_splits() {
        let mut pre_sum = 0.0;
        let mut post_sum = 0.0;
        for seed in 0..3 {
            let mut cfg = small_cfg(Method::FedAvg);
            cfg.alpha = 0.01;
            cfg.seed = seed;
            cfg.world.seed = seed;
            let log = run_simulation(&cfg).unwrap();
            let (pre, post) = log.final_mean_accuracy().unwrap();
            pre_sum += pre;
            post_sum += post;
        }
        assert!(
            post_sum > pre_sum,
            "post-local {post_sum} should exceed pre-local {pre_sum} on concentrated data"
        );
    }

    #[test]
    fn trace_mobility_drives_fixed_training() {
        use std::io::Write;
        let mut cfg = small_cfg(Method::MlMule);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trace.txt");
        let mut fh = std::fs::File::create(&path).unwrap();
        // two users shuttling between a few spaces with long dwells
        for (u, s, start) in [
            ("u1", "pa", 0),
            ("u1", "pb", 30),
            ("u2", "pb", 10),
            ("u2", "pc", 60),
        ] {
            writeln!(fh, "{u},{s},{start},20").unwrap();
        }
        drop(fh);
        cfg.mobility = MobilityModel::Trace;
        cfg.trace_path = Some(path);
        cfg.total_steps = 100;
        let log = run_simulation(&cfg).unwrap();
        assert!(!log.rows.is_empty());
        assert!(log.rows.last().unwrap().exchanges > 0, "trace produced no cycles");
    }
}
