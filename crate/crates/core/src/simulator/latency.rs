use alloc::boxed::Box;
use alloc::collections::BinaryHeap;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

use crate::data::{streams, Rng};
use crate::experiment::{Environment, ExperimentConfig, StalenessMode};
use crate::metrics::{eval_due, RunOutput, UpdateRecord};
use crate::server::{Scheduler, ServerState};
use crate::worker::{local_train, LocalUpdate};
use crate::{Error, ParamVector, Result};

enum EventKind {
    TaskTriggered { worker: usize, tau: u64, model: ParamVector },
    UpdateArrived { update: LocalUpdate },
}

struct Event {
    time: f64,
    seq: u64,
    kind: EventKind,
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Event {}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

// BinaryHeap is a max-heap; reverse so the earliest (time, seq) pops first.
impl Ord for Event {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .time
            .total_cmp(&self.time)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

struct Queue {
    heap: BinaryHeap<Event>,
    next_seq: u64,
}

impl Queue {
    fn push(&mut self, time: f64, kind: EventKind) {
        self.heap.push(Event {
            time,
            seq: self.next_seq,
            kind,
        });
        self.next_seq += 1;
    }
}

/// Discrete-event FedAsync.
///
/// The scheduler starts tasks on idle workers whenever that cannot push any
/// task past the staleness bound. A started task snapshots `(x_t, t)`,
/// trains, and delivers its update after a delay drawn from its worker's
/// profile. Updates apply in arrival order; ties in time break by event
/// sequence number.
pub fn run_fedasync_latency(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let profiles = match &cfg.mode {
        StalenessMode::Latency { profiles } => profiles.clone(),
        StalenessMode::Sampled { .. } => {
            return Err(Error::InvalidConfig("latency runner needs latency staleness mode".into()))
        }
    };
    let env = Environment::build(cfg)?;
    let eval = env.evaluator();
    let obj = env.objective.as_ref();
    let n = cfg.devices;
    let total = cfg.server.total_epochs;

    let mut state = ServerState::new(env.x0.clone(), cfg.server.max_staleness);
    let mut scheduler = Scheduler::new(n, cfg.server.max_staleness);
    let mut sim_rng = Rng::for_stream(cfg.seed, streams::SIMULATOR);
    let mut rngs = super::worker_rngs(cfg);
    let mut in_flight: Vec<Option<u64>> = vec![None; n];
    let mut queue = Queue {
        heap: BinaryHeap::new(),
        next_seq: 0,
    };
    let mut records = vec![eval.record(0, 0, state.model(), None, Some(0.0))];
    let mut updates = Vec::new();
    let mut failure = None;

    let tick = |now: f64, state: &ServerState, scheduler: &mut Scheduler, in_flight: &mut [Option<u64>], queue: &mut Queue| {
        let taus: Vec<u64> = in_flight.iter().flatten().copied().collect();
        let idle: Vec<bool> = in_flight.iter().map(Option::is_none).collect();
        for trig in scheduler.tick(state.epoch(), &taus, &idle) {
            in_flight[trig.worker] = Some(trig.epoch);
            queue.push(
                now,
                EventKind::TaskTriggered {
                    worker: trig.worker,
                    tau: trig.epoch,
                    model: state.model().clone(),
                },
            );
        }
    };
    tick(0.0, &state, &mut scheduler, &mut in_flight, &mut queue);

    while let Some(ev) = queue.heap.pop() {
        let now = ev.time;
        let outcome: Result<bool> = match ev.kind {
            EventKind::TaskTriggered { worker, tau, model } => {
                local_train(&model, tau, worker, &env.shards[worker], obj, &cfg.worker, &mut rngs[worker]).map(|update| {
                    let delay = profiles[worker].sample(&mut sim_rng);
                    queue.push(now + delay, EventKind::UpdateArrived { update });
                    false
                })
            }
            EventKind::UpdateArrived { update } => state.apply_update(&update, &cfg.server).map(|applied| {
                in_flight[update.worker_id] = None;
                updates.push(UpdateRecord {
                    epoch: applied.epoch,
                    worker: update.worker_id,
                    tau: update.tau,
                    staleness: applied.staleness,
                    alpha_t: applied.alpha_t,
                    local_iters: update.local_iters,
                    sim_time: Some(now),
                });
                if eval_due(applied.epoch, cfg.eval_every, total) {
                    records.push(eval.record(
                        applied.epoch,
                        state.gradients_applied(),
                        state.model(),
                        Some(&applied),
                        Some(now),
                    ));
                }
                applied.epoch == total
            }),
        };
        match outcome {
            Ok(true) => break,
            Ok(false) => {}
            Err(e) => {
                failure = Some(Error::Simulation {
                    time: now,
                    source: Box::new(e),
                });
                break;
            }
        }
        tick(now, &state, &mut scheduler, &mut in_flight, &mut queue);
    }

    Ok(RunOutput {
        records,
        updates,
        rejected: state.rejected(),
        final_model: state.model().clone(),
        failure,
    })
}
