//! The split-learning loop.
//!
//! Clients and the server only talk through [`Endpoint`]s, one link per
//! client. A single thread drives both sides in a fixed order, so a run is
//! fully determined by its config whichever transport carries the frames.
//!
//! Per round:
//!
//! 1. From round 1 on, every client uploads its half; the server scores
//!    each one on the validation split and samples this round's clients.
//!    Round 0 takes everyone.
//! 2. Selected clients get their importance report and a round-start
//!    control message.
//! 3. Selected clients train over their local batches, interleaved
//!    round-robin in client-id order (client 0 batch 0, client 1 batch 0,
//!    ...). Each batch is one activation/gradient exchange.
//! 4. Selected clients upload their halves; the server averages them with
//!    their importance weights renormalized over the selection, and, when
//!    broadcasting, sends the result to every client.
//! 5. The composed global model is scored on the validation split.

use std::time::{Duration, Instant};

use log::{debug, info};

use super::{
    derive_seed, evaluate, init_halves, mean, prepare_data, stream_rng, ExperimentConfig,
    PreparedData, RoundReport, Stream, TransportKind,
};
use crate::data::{batch_iter, hash_partition, Batch, Dataset, PartitionDigest};
use crate::error::{Error, Result};
use crate::nn::{LayerSpec, LossKind, Model, ParamSet};
use crate::selection::{select_all, select_round, SelectionOutcome};
use crate::split::{compose_halves, global_average, ClientNode, GradientBatch, ServerNode};
use crate::transport::{
    inproc_pair, Control, ControlKind, Endpoint, ImportanceReport, Message, ParamsMessage,
    TcpEndpoint, TcpHub,
};

const RECV_TIMEOUT: Duration = Duration::from_secs(30);

/// Everything a split-learning run leaves behind.
#[derive(Debug, Clone)]
pub struct WsslRun {
    pub reports: Vec<RoundReport>,
    /// Final client halves, by client id.
    pub client_params: Vec<ParamSet>,
    /// Averaged client half from the last round.
    pub global_params: ParamSet,
    pub server_params: ParamSet,
    /// Partition digests registered with the server at join time.
    pub digests: Vec<PartitionDigest>,
    /// Largest elementwise difference between any two client halves at the
    /// end of each round.
    pub client_spread: Vec<f64>,
}

pub fn run_wssl(cfg: &ExperimentConfig) -> Result<Vec<RoundReport>> {
    Ok(run_wssl_detailed(cfg)?.reports)
}

pub fn run_wssl_detailed(cfg: &ExperimentConfig) -> Result<WsslRun> {
    cfg.validate()?;
    let data = prepare_data(cfg)?;
    let links = open_links(cfg.transport, cfg.n_clients)?;
    Driver::new(cfg, data, links)?.run()
}

type Link = Box<dyn Endpoint>;

/// (client side, server side) link pairs. Server-side links are in accept
/// order; the join handshake maps them to client ids.
fn open_links(kind: TransportKind, n: usize) -> Result<Vec<(Link, Link)>> {
    match kind {
        TransportKind::InProc => Ok((0..n)
            .map(|_| {
                let (c, s) = inproc_pair();
                (Box::new(c) as Link, Box::new(s) as Link)
            })
            .collect()),
        TransportKind::Tcp { port } => {
            let hub = TcpHub::bind(port)?;
            let addr = hub.local_addr()?;
            info!("server listening on {addr}");
            let mut out = Vec::with_capacity(n);
            for _ in 0..n {
                let client = TcpEndpoint::connect(addr)?;
                let server = hub.accept()?;
                out.push((Box::new(client) as Link, Box::new(server) as Link));
            }
            Ok(out)
        }
    }
}

fn unexpected(side: &str, got: &Message, wanted: &str) -> Error {
    Error::Protocol(format!("{side} expected {wanted}, got {:?}", got.message_type()))
}

struct ClientSide {
    node: ClientNode,
    link: Link,
}

impl ClientSide {
    fn id(&self) -> u32 {
        self.node.client_id()
    }

    fn recv(&mut self) -> Result<Message> {
        self.link.recv(RECV_TIMEOUT)
    }

    fn expect_control(&mut self, kind: ControlKind) -> Result<Control> {
        match self.recv()? {
            Message::Control(c) if c.kind == kind && c.client_id == self.id() => Ok(c),
            other => Err(unexpected("client", &other, &format!("{kind:?}"))),
        }
    }

    fn upload_params(&mut self, round: u32) -> Result<()> {
        self.link.send(&Message::Params(ParamsMessage {
            client_id: self.id(),
            round,
            params: self.node.params().clone(),
        }))
    }
}

struct ServerSide {
    node: ServerNode,
    /// Indexed by client id.
    links: Vec<Link>,
    client_specs: Vec<LayerSpec>,
    digests: Vec<PartitionDigest>,
}

impl ServerSide {
    fn send(&mut self, id: u32, msg: &Message) -> Result<()> {
        self.links[id as usize].send(msg)
    }

    fn recv(&mut self, id: u32) -> Result<Message> {
        self.links[id as usize].recv(RECV_TIMEOUT)
    }

    fn control(&mut self, id: u32, kind: ControlKind, round: u32) -> Result<()> {
        self.send(id, &Message::Control(Control { kind, client_id: id, round }))
    }

    fn recv_params(&mut self, id: u32, round: u32) -> Result<ParamSet> {
        match self.recv(id)? {
            Message::Params(p) if p.client_id == id && p.round == round => Ok(p.params),
            other => Err(unexpected("server", &other, "Params")),
        }
    }

    /// Receives one activation batch from `id`, trains on it and returns the
    /// cut-layer gradient over the same link.
    fn serve_activation(&mut self, id: u32) -> Result<()> {
        let ab = match self.recv(id)? {
            Message::Activation(ab) if ab.client_id == id => ab,
            other => return Err(unexpected("server", &other, "Activation")),
        };
        let gb = self.node.server_train_step(&ab)?;
        self.send(id, &Message::Gradient(gb))
    }

    fn client_model(&self, params: ParamSet) -> Model {
        Model {
            specs: self.client_specs.clone(),
            params,
        }
    }
}

struct Driver<'a> {
    cfg: &'a ExperimentConfig,
    data: PreparedData,
    clients: Vec<ClientSide>,
    server: ServerSide,
}

impl<'a> Driver<'a> {
    fn new(cfg: &'a ExperimentConfig, data: PreparedData, links: Vec<(Link, Link)>) -> Result<Self> {
        let (client_half, server_half) = init_halves(cfg, data.dim(), data.class_count())?;
        let mut clients = Vec::with_capacity(cfg.n_clients);
        let mut accepted = Vec::with_capacity(cfg.n_clients);
        for (id, ((client_link, server_link), part)) in links.into_iter().zip(&data.partitions).enumerate() {
            let node = ClientNode::new(id as u32, client_half.clone(), part.clone(), cfg.client_lr)?;
            clients.push(ClientSide { node, link: client_link });
            accepted.push(Some(server_link));
        }
        let mut server = ServerSide {
            node: ServerNode::new(server_half, data.loss_kind, cfg.server_lr)?,
            links: Vec::new(),
            client_specs: client_half.specs.clone(),
            digests: Vec::new(),
        };

        // join: every client announces its id and its partition digest
        for c in &mut clients {
            let id = c.id();
            c.link.send(&Message::Control(Control { kind: ControlKind::Join, client_id: id, round: 0 }))?;
            c.link.send(&Message::Digest(hash_partition(id, &c.node.data)))?;
        }
        let mut by_id: Vec<Option<Link>> = (0..cfg.n_clients).map(|_| None).collect();
        let mut digests: Vec<Option<PartitionDigest>> = vec![None; cfg.n_clients];
        for slot in accepted.iter_mut() {
            let mut link = slot.take().expect("each link joins once");
            let id = match link.recv(RECV_TIMEOUT)? {
                Message::Control(Control { kind: ControlKind::Join, client_id, .. })
                    if (client_id as usize) < cfg.n_clients && by_id[client_id as usize].is_none() =>
                {
                    client_id
                }
                other => return Err(unexpected("server", &other, "Join")),
            };
            match link.recv(RECV_TIMEOUT)? {
                Message::Digest(d) if d.client_id == id => digests[id as usize] = Some(d),
                other => return Err(unexpected("server", &other, "Digest")),
            }
            by_id[id as usize] = Some(link);
        }
        server.links = by_id.into_iter().map(|l| l.expect("all joined")).collect();
        server.digests = digests.into_iter().map(|d| d.expect("all joined")).collect();

        Ok(Driver { cfg, data, clients, server })
    }

    fn run(mut self) -> Result<WsslRun> {
        let mut rng = stream_rng(self.cfg.seed, Stream::Select);
        let mut reports = Vec::with_capacity(self.cfg.rounds);
        let mut client_spread = Vec::with_capacity(self.cfg.rounds);
        let mut global = self.clients[0].node.params().clone();

        for round in 0..self.cfg.rounds {
            let started = Instant::now();
            let selection = self.select(round, &mut rng)?;
            let mut selected = selection.selected_ids.clone();
            selected.sort_unstable();
            debug!("round {round}: selected {:?}", selection.selected_ids);

            self.announce(round, &selection, &selected)?;
            let losses = self.train_selected(round, &selected)?;
            global = self.aggregate(round, &selection, &selected)?;

            let composed = compose_halves(&self.server.client_model(global.clone()), &self.server.node.half())?;
            let val_accuracy = evaluate(&composed, self.data.loss_kind, &self.data.validation)?;
            let train_loss = mean(&losses);
            client_spread.push(self.spread());
            info!(
                "round {round}: {} client(s), loss {train_loss:.6}, accuracy {val_accuracy:.4}",
                selected.len()
            );
            reports.push(RoundReport {
                round_index: round,
                selected_ids: selection.selected_ids.clone(),
                gammas: selection.gammas(),
                train_loss,
                val_accuracy,
                wall_ms: if self.cfg.record_wall_clock { started.elapsed().as_millis() as u64 } else { 0 },
            });
        }

        for c in &self.clients {
            self.server.links[c.id() as usize].send(&Message::Control(Control {
                kind: ControlKind::Shutdown,
                client_id: c.id(),
                round: self.cfg.rounds as u32,
            }))?;
        }
        for c in &mut self.clients {
            c.expect_control(ControlKind::Shutdown)?;
        }

        Ok(WsslRun {
            reports,
            client_params: self.clients.iter().map(|c| c.node.params().clone()).collect(),
            global_params: global,
            server_params: self.server.node.params().clone(),
            digests: self.server.digests.clone(),
            client_spread,
        })
    }

    fn select(&mut self, round: usize, rng: &mut rand_chacha::ChaCha8Rng) -> Result<SelectionOutcome> {
        if round == 0 {
            return Ok(select_all(self.clients.len()));
        }
        for c in &mut self.clients {
            c.upload_params(round as u32)?;
        }
        let mut halves = Vec::with_capacity(self.clients.len());
        for id in 0..self.clients.len() as u32 {
            let params = self.server.recv_params(id, round as u32)?;
            halves.push(self.server.client_model(params));
        }
        select_round(
            round,
            &halves,
            &self.server.node,
            &self.data.validation,
            self.cfg.importance,
            self.cfg.clients_per_round,
            rng,
        )
    }

    fn announce(&mut self, round: usize, selection: &SelectionOutcome, selected: &[u32]) -> Result<()> {
        let r = round as u32;
        for &id in selected {
            let rec = &selection.records[id as usize];
            self.server.send(
                id,
                &Message::ImportanceReport(ImportanceReport { client_id: id, round: r, beta: rec.beta, gamma: rec.gamma }),
            )?;
            self.server.control(id, ControlKind::RoundStart, r)?;
        }
        for &id in selected {
            let c = &mut self.clients[id as usize];
            match c.recv()? {
                Message::ImportanceReport(rep) if rep.client_id == id && rep.round == r => {}
                other => return Err(unexpected("client", &other, "ImportanceReport")),
            }
            c.expect_control(ControlKind::RoundStart)?;
        }
        Ok(())
    }

    fn local_batches(&self, round: usize, id: u32) -> Vec<Batch> {
        let seed = derive_seed(self.cfg.seed, Stream::Batch, round as u64, id as u64);
        batch_iter(&self.clients[id as usize].node.data, self.cfg.batch_size, self.cfg.shuffle, seed).collect()
    }

    fn train_selected(&mut self, round: usize, selected: &[u32]) -> Result<Vec<f64>> {
        let batches: Vec<Vec<Batch>> = selected.iter().map(|&id| self.local_batches(round, id)).collect();
        let longest = batches.iter().map(Vec::len).max().unwrap_or(0);
        let kind: LossKind = self.data.loss_kind;
        let classes = self.data.class_count();
        let mut losses = Vec::new();
        for b in 0..longest {
            for (slot, &id) in selected.iter().enumerate() {
                let Some(batch) = batches[slot].get(b) else { continue };
                let y = batch.targets(kind, classes)?;
                let client = &mut self.clients[id as usize];
                let ab = client.node.client_forward(&batch.features, &y, b as u32)?;
                client.link.send(&Message::Activation(ab))?;
                self.server.serve_activation(id)?;
                let client = &mut self.clients[id as usize];
                let gb: GradientBatch = match client.recv()? {
                    Message::Gradient(gb) => gb,
                    other => return Err(unexpected("client", &other, "Gradient")),
                };
                client.node.client_apply_gradient(&gb)?;
                losses.push(gb.loss);
            }
        }
        Ok(losses)
    }

    fn aggregate(&mut self, round: usize, selection: &SelectionOutcome, selected: &[u32]) -> Result<ParamSet> {
        let r = round as u32;
        for &id in selected {
            self.clients[id as usize].upload_params(r)?;
        }
        let mut params = Vec::with_capacity(selected.len());
        let mut weights = Vec::with_capacity(selected.len());
        for &id in selected {
            params.push(self.server.recv_params(id, r)?);
            weights.push(selection.gamma_of(id).unwrap_or(0.0));
        }
        if weights.iter().all(|&w| w == 0.0) {
            weights.iter_mut().for_each(|w| *w = 1.0);
        }
        let global = global_average(&params, &weights)?;

        let ids: Vec<u32> = (0..self.clients.len() as u32).collect();
        if self.cfg.broadcast_global {
            for &id in &ids {
                let msg = Message::Params(ParamsMessage { client_id: id, round: r, params: global.clone() });
                self.server.send(id, &msg)?;
            }
        }
        for &id in &ids {
            self.server.control(id, ControlKind::RoundEnd, r)?;
        }
        for c in &mut self.clients {
            if self.cfg.broadcast_global {
                match c.recv()? {
                    Message::Params(p) if p.client_id == c.id() && p.round == r => c.node.set_params(p.params)?,
                    other => return Err(unexpected("client", &other, "Params")),
                }
            }
            c.expect_control(ControlKind::RoundEnd)?;
        }
        Ok(global)
    }

    fn spread(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for (i, a) in self.clients.iter().enumerate() {
            for b in &self.clients[i + 1..] {
                worst = worst.max(a.node.params().max_abs_diff(b.node.params()));
            }
        }
        worst
    }
}

/// Digests of the partitions `cfg` produces, by client id.
pub fn partition_digests(cfg: &ExperimentConfig) -> Result<Vec<PartitionDigest>> {
    let data = prepare_data(cfg)?;
    Ok(data
        .partitions
        .iter()
        .enumerate()
        .map(|(id, p): (usize, &Dataset)| hash_partition(id as u32, p))
        .collect())
}
