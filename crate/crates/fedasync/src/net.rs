//! FedAsync over TCP: one server process, any number of worker processes.
//!
//! A worker registers by sending its first `PullRequest`; the reply carries
//! the current model, which fixes the session's model dimension. Once all
//! `devices` workers have registered, the server's scheduler sends
//! `Trigger`s. A triggered worker pulls the latest model, trains, pushes,
//! and gets a `PushAck`. Every push goes through one channel into a single
//! updater that owns the server state; pulls read an `(epoch, model)`
//! snapshot that the updater replaces atomically after each commit. After
//! `total_epochs` commits the server broadcasts `Shutdown`.

use std::io::{self, ErrorKind, Read, Write};
use std::net::{Shutdown, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::{self, RecvTimeoutError, Sender};
use std::sync::{Arc, Mutex, RwLock};
use std::thread;
use std::time::{Duration, Instant};

use anyhow::{anyhow, bail, Context, Result};
use fedasync_core::data::Rng;
use fedasync_core::experiment::{Environment, ExperimentConfig};
use fedasync_core::metrics::{eval_due, RunOutput, UpdateRecord};
use fedasync_core::server::{Scheduler, ServerState};
use fedasync_core::transport::{decode, encode, Message, DEFAULT_MAX_FRAME};
use fedasync_core::worker::{local_train, LocalUpdate};
use fedasync_core::ParamVector;
use log::{debug, info, warn};

#[derive(Debug, Clone)]
pub struct NetOptions {
    pub max_frame: usize,
    /// How long the server waits for any event before giving up.
    pub idle_timeout: Duration,
    /// How long a worker keeps retrying its initial connect.
    pub connect_timeout: Duration,
}

impl Default for NetOptions {
    fn default() -> Self {
        Self {
            max_frame: DEFAULT_MAX_FRAME,
            idle_timeout: Duration::from_secs(60),
            connect_timeout: Duration::from_secs(10),
        }
    }
}

/// Reads whole frames from a byte stream.
pub struct FrameReader<R> {
    inner: R,
    buf: Vec<u8>,
    max_frame: usize,
}

impl<R: Read> FrameReader<R> {
    pub fn new(inner: R, max_frame: usize) -> Self {
        Self {
            inner,
            buf: Vec::new(),
            max_frame,
        }
    }

    /// The next message, or `None` on a clean end of stream between frames.
    pub fn next_message(&mut self) -> Result<Option<Message>> {
        let mut chunk = [0u8; 64 * 1024];
        loop {
            if let Some((msg, used)) = decode(&self.buf, self.max_frame)? {
                self.buf.drain(..used);
                return Ok(Some(msg));
            }
            let n = match self.inner.read(&mut chunk) {
                Ok(n) => n,
                Err(e) if e.kind() == ErrorKind::Interrupted => continue,
                Err(e) => return Err(e.into()),
            };
            if n == 0 {
                if self.buf.is_empty() {
                    return Ok(None);
                }
                bail!("connection closed inside a frame ({} bytes pending)", self.buf.len());
            }
            self.buf.extend_from_slice(&chunk[..n]);
        }
    }
}

fn send(stream: &Mutex<TcpStream>, msg: &Message) -> io::Result<()> {
    let bytes = encode(msg);
    let mut s = stream.lock().expect("writer lock");
    s.write_all(&bytes)
}

type Writer = Arc<Mutex<TcpStream>>;
type Snapshot = Arc<RwLock<(u64, ParamVector)>>;

enum Event {
    Registered { worker: usize, writer: Writer },
    Push { worker: usize, tau: u64, local_iters: u64, params: ParamVector },
    Gone { worker: usize },
}

fn pull_response(snapshot: &Snapshot) -> Message {
    let (epoch, params) = snapshot.read().expect("snapshot lock").clone();
    Message::PullResponse { epoch, params }
}

/// Per-connection reader: answers pulls from the snapshot and forwards
/// pushes to the updater.
fn handle_connection(
    stream: TcpStream,
    devices: usize,
    snapshot: Snapshot,
    events: Sender<Event>,
    max_frame: usize,
) -> Result<()> {
    stream.set_nodelay(true)?;
    let writer: Writer = Arc::new(Mutex::new(stream.try_clone()?));
    let mut reader = FrameReader::new(stream, max_frame);
    let worker = match reader.next_message()? {
        Some(Message::PullRequest { worker_id }) if (worker_id as usize) < devices => worker_id as usize,
        Some(Message::PullRequest { worker_id }) => bail!("worker id {worker_id} out of range 0..{devices}"),
        Some(other) => bail!("expected a registering PullRequest, got tag {}", other.tag()),
        None => return Ok(()),
    };
    send(&writer, &pull_response(&snapshot))?;
    if events.send(Event::Registered { worker, writer: writer.clone() }).is_err() {
        return Ok(());
    }
    let result = (|| -> Result<()> {
        while let Some(msg) = reader.next_message()? {
            match msg {
                Message::PullRequest { worker_id } if worker_id as usize == worker => {
                    send(&writer, &pull_response(&snapshot))?;
                }
                Message::Push { worker_id, tau, local_iters, params } if worker_id as usize == worker => {
                    let ev = Event::Push { worker, tau, local_iters, params };
                    if events.send(ev).is_err() {
                        return Ok(());
                    }
                }
                other => bail!("worker {worker} sent unexpected tag {}", other.tag()),
            }
        }
        Ok(())
    })();
    let _ = events.send(Event::Gone { worker });
    result
}

fn accept_loop(listener: TcpListener, stop: Arc<AtomicBool>, ctx: (usize, Snapshot, Sender<Event>, usize)) {
    let (devices, snapshot, events, max_frame) = ctx;
    while !stop.load(Ordering::Relaxed) {
        match listener.accept() {
            Ok((stream, peer)) => {
                debug!("connection from {peer}");
                if let Err(e) = stream.set_nonblocking(false) {
                    warn!("dropping {peer}: {e}");
                    continue;
                }
                let (snapshot, events) = (snapshot.clone(), events.clone());
                thread::spawn(move || {
                    if let Err(e) = handle_connection(stream, devices, snapshot, events, max_frame) {
                        warn!("connection {peer}: {e:#}");
                    }
                });
            }
            Err(e) if e.kind() == ErrorKind::WouldBlock => thread::sleep(Duration::from_millis(2)),
            Err(e) => {
                warn!("accept failed: {e}");
                thread::sleep(Duration::from_millis(20));
            }
        }
    }
}

/// Runs the server until `total_epochs` updates are committed and returns
/// the run, evaluated exactly as the in-process simulators evaluate theirs.
pub fn serve(listener: TcpListener, cfg: &ExperimentConfig, opts: &NetOptions) -> Result<RunOutput> {
    let env = Environment::build(cfg)?;
    let eval = env.evaluator();
    let n = cfg.devices;
    let k = cfg.server.max_staleness;
    let total = cfg.server.total_epochs;

    let mut state = ServerState::new(env.x0.clone(), k);
    let snapshot: Snapshot = Arc::new(RwLock::new(state.snapshot()));
    let (tx, rx) = mpsc::channel();
    let stop = Arc::new(AtomicBool::new(false));
    listener.set_nonblocking(true)?;
    let acceptor = {
        let ctx = (n, snapshot.clone(), tx.clone(), opts.max_frame);
        let stop = stop.clone();
        thread::spawn(move || accept_loop(listener, stop, ctx))
    };
    drop(tx);

    let mut writers: Vec<Option<Writer>> = vec![None; n];
    let mut in_flight: Vec<Option<u64>> = vec![None; n];
    let mut registered = vec![false; n];
    let mut scheduler = Scheduler::new(n, k);
    let mut records = vec![eval.record(0, 0, state.model(), None, None)];
    let mut updates = Vec::new();

    let result = (|| -> Result<()> {
        while state.epoch() < total {
            let ev = match rx.recv_timeout(opts.idle_timeout) {
                Ok(ev) => ev,
                Err(RecvTimeoutError::Timeout) => bail!(
                    "no worker activity for {:?} at epoch {}",
                    opts.idle_timeout,
                    state.epoch()
                ),
                Err(RecvTimeoutError::Disconnected) => bail!("listener stopped"),
            };
            match ev {
                Event::Registered { worker, writer } => {
                    if writers[worker].is_some() {
                        warn!("worker {worker} registered twice; closing the newer connection");
                        let _ = send(&writer, &Message::Shutdown);
                        let _ = writer.lock().expect("writer lock").shutdown(Shutdown::Write);
                        continue;
                    }
                    info!("worker {worker} registered");
                    writers[worker] = Some(writer);
                    registered[worker] = true;
                }
                Event::Gone { worker } => {
                    if writers[worker].take().is_some() {
                        warn!("worker {worker} disconnected at epoch {}", state.epoch());
                    }
                    in_flight[worker] = None;
                    if registered.iter().all(|&r| r) && writers.iter().all(Option::is_none) {
                        bail!("all workers disconnected at epoch {}", state.epoch());
                    }
                }
                Event::Push { worker, tau, local_iters, params } => {
                    let Some(writer) = writers[worker].clone() else { continue };
                    let accepted = if in_flight[worker].take().is_none() {
                        warn!("worker {worker} pushed without a task");
                        false
                    } else {
                        let upd = LocalUpdate {
                            params,
                            tau,
                            worker_id: worker,
                            local_iters,
                            gradients_computed: local_iters,
                        };
                        match state.apply_update(&upd, &cfg.server) {
                            Ok(applied) => {
                                *snapshot.write().expect("snapshot lock") = state.snapshot();
                                updates.push(UpdateRecord {
                                    epoch: applied.epoch,
                                    worker,
                                    tau,
                                    staleness: applied.staleness,
                                    alpha_t: applied.alpha_t,
                                    local_iters,
                                    sim_time: None,
                                });
                                if eval_due(applied.epoch, cfg.eval_every, total) {
                                    records.push(eval.record(
                                        applied.epoch,
                                        state.gradients_applied(),
                                        state.model(),
                                        Some(&applied),
                                        None,
                                    ));
                                }
                                true
                            }
                            Err(e) => {
                                warn!("rejected push from worker {worker}: {e}");
                                false
                            }
                        }
                    };
                    let ack = Message::PushAck {
                        accepted,
                        current_epoch: state.epoch(),
                    };
                    if send(&writer, &ack).is_err() {
                        writers[worker] = None;
                    }
                }
            }
            if state.epoch() < total && registered.iter().all(|&r| r) {
                let taus: Vec<u64> = in_flight.iter().flatten().copied().collect();
                let idle: Vec<bool> = (0..n).map(|w| writers[w].is_some() && in_flight[w].is_none()).collect();
                for trig in scheduler.tick(state.epoch(), &taus, &idle) {
                    let writer = writers[trig.worker].clone().expect("idle worker has a writer");
                    match send(&writer, &Message::Trigger { epoch: trig.epoch }) {
                        Ok(()) => in_flight[trig.worker] = Some(trig.epoch),
                        Err(e) => {
                            warn!("trigger to worker {} failed: {e}", trig.worker);
                            writers[trig.worker] = None;
                        }
                    }
                }
            }
        }
        Ok(())
    })();

    for w in writers.iter().flatten() {
        let _ = send(w, &Message::Shutdown);
        let _ = w.lock().expect("writer lock").shutdown(Shutdown::Write);
    }
    stop.store(true, Ordering::Relaxed);
    let _ = acceptor.join();
    result?;
    info!("committed {total} epochs, {} rejected", state.rejected());
    Ok(RunOutput {
        records,
        updates,
        rejected: state.rejected(),
        final_model: state.model().clone(),
        failure: None,
    })
}

/// What one worker did before the server shut it down.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WorkerReport {
    pub tasks: u64,
    pub rejected: u64,
}

fn connect(addr: &str, timeout: Duration) -> Result<TcpStream> {
    let deadline = Instant::now() + timeout;
    loop {
        let attempt = addr
            .to_socket_addrs()
            .with_context(|| format!("resolving {addr}"))
            .and_then(|mut a| a.next().ok_or_else(|| anyhow!("{addr} resolves to nothing")))
            .and_then(|a| TcpStream::connect(a).map_err(Into::into));
        match attempt {
            Ok(s) => return Ok(s),
            Err(e) if Instant::now() >= deadline => return Err(e.context(format!("connecting to {addr}"))),
            Err(_) => thread::sleep(Duration::from_millis(20)),
        }
    }
}

/// Serves as worker `id`: Trigger, Pull, train, Push, until Shutdown.
pub fn worker_loop(addr: &str, id: usize, cfg: &ExperimentConfig, opts: &NetOptions) -> Result<WorkerReport> {
    let env = Environment::build(cfg)?;
    let shard = env.shards.get(id).ok_or_else(|| anyhow!("worker id {id} out of range 0..{}", cfg.devices))?;
    let obj = env.objective.as_ref();
    let mut rng = Rng::for_worker(cfg.seed, id);

    let stream = connect(addr, opts.connect_timeout)?;
    stream.set_nodelay(true)?;
    let writer = Mutex::new(stream.try_clone()?);
    let mut reader = FrameReader::new(stream, opts.max_frame);
    let pull = Message::PullRequest { worker_id: id as u64 };

    send(&writer, &pull)?;
    match reader.next_message()? {
        Some(Message::PullResponse { params, .. }) if params.dim() == obj.dim() => {}
        Some(Message::PullResponse { params, .. }) => {
            bail!("server model has dimension {}, local objective has {}", params.dim(), obj.dim())
        }
        Some(Message::Shutdown) | None => bail!("server refused registration"),
        Some(other) => bail!("expected PullResponse, got tag {}", other.tag()),
    }

    let mut report = WorkerReport { tasks: 0, rejected: 0 };
    loop {
        match reader.next_message()? {
            Some(Message::Trigger { epoch }) => {
                debug!("worker {id} triggered at epoch {epoch}");
                send(&writer, &pull)?;
                let (tau, base) = match reader.next_message()? {
                    Some(Message::PullResponse { epoch, params }) => (epoch, params),
                    Some(Message::Shutdown) => break,
                    Some(other) => bail!("expected PullResponse, got tag {}", other.tag()),
                    None => bail!("server closed the connection mid-task"),
                };
                let upd = local_train(&base, tau, id, shard, obj, &cfg.worker, &mut rng)?;
                send(
                    &writer,
                    &Message::Push {
                        worker_id: id as u64,
                        tau,
                        local_iters: upd.local_iters,
                        params: upd.params,
                    },
                )?;
                report.tasks += 1;
            }
            Some(Message::PushAck { accepted, current_epoch }) => {
                if !accepted {
                    warn!("worker {id}: push rejected at epoch {current_epoch}");
                    report.rejected += 1;
                }
            }
            Some(Message::Shutdown) => break,
            Some(other) => bail!("unexpected tag {} from server", other.tag()),
            None => bail!("server closed the connection without Shutdown"),
        }
    }
    info!("worker {id} done after {} tasks", report.tasks);
    Ok(report)
}
