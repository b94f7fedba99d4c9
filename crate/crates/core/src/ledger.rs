//! Tamper-evident replication of state-map observations.
//!
//! Each asset authors its own hash-chained block log; peers exchange heads
//! and pull missing ranges (anti-entropy) over a lossy simulated network.
//! Blocks carry an HMAC-SHA-256 tag under the author's pre-shared key, so a
//! peer accepts only contiguous, correctly linked, correctly authenticated
//! extensions. There is no global consensus: merging applies every verified
//! observation in `(tick, author, seq)` order, and last-writer-wins upserts
//! make the result independent of arrival order.
//!
//! The canonical byte layouts (block, chain dump, wire messages) are
//! documented in `docs/ledger-format.md`.

use crate::statemap::{Entity, EntityKind, StateMap};
use crate::geom::Vec2;
use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use thiserror::Error;

pub type Hash32 = [u8; 32];
pub type Key = [u8; 32];

pub const GENESIS_PREV: Hash32 = [0u8; 32];

#[derive(Debug, Error)]
pub enum LedgerError {
    #[error("block tick {tick} is below the chain head tick {head}")]
    DecreasingTick { tick: u64, head: u64 },
    #[error("chain for author `{author}` invalid at seq {seq}: {reason:?}")]
    Invalid {
        author: String,
        seq: u64,
        reason: ChainFaultReason,
    },
    #[error("dump decode failed at byte {0}")]
    Decode(usize),
    #[error("no key for author `{0}`")]
    UnknownAuthor(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ChainFaultReason {
    Gap,
    BadLink,
    BadMac,
}

/// Earliest verification failure in a chain.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChainFault {
    pub seq: u64,
    pub reason: ChainFaultReason,
}

/// One signed log entry of state-map observations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Block {
    pub author: String,
    pub seq: u64,
    pub tick: u64,
    pub prev_hash: Hash32,
    pub payload: Vec<Entity>,
    pub mac: Hash32,
}

// --- canonical encoding -------------------------------------------------
//
// All integers little-endian fixed width; strings and lists length-prefixed
// with u32 counts.

fn put_str(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u32).to_le_bytes());
    out.extend_from_slice(s.as_bytes());
}

fn put_f64(out: &mut Vec<u8>, v: f64) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn kind_code(kind: EntityKind) -> u8 {
    kind.index() as u8
}

fn kind_from_code(code: u8) -> Option<EntityKind> {
    EntityKind::ALL.get(code as usize).copied()
}

fn encode_entity(out: &mut Vec<u8>, e: &Entity) {
    put_str(out, &e.id);
    out.push(kind_code(e.kind));
    put_f64(out, e.position.x);
    put_f64(out, e.position.y);
    put_f64(out, e.velocity.x);
    put_f64(out, e.velocity.y);
    put_f64(out, e.heading);
    put_str(out, &e.classification);
    put_f64(out, e.priority);
    out.push(e.neutralized as u8);
    put_f64(out, e.radius);
    out.extend_from_slice(&e.last_update_tick.to_le_bytes());
    put_str(out, &e.author);
}

/// Canonical bytes covered by the MAC: author, seq, tick, prev_hash, payload.
pub fn signed_bytes(block: &Block) -> Vec<u8> {
    let mut out = Vec::new();
    put_str(&mut out, &block.author);
    out.extend_from_slice(&block.seq.to_le_bytes());
    out.extend_from_slice(&block.tick.to_le_bytes());
    out.extend_from_slice(&block.prev_hash);
    out.extend_from_slice(&(block.payload.len() as u32).to_le_bytes());
    for e in &block.payload {
        encode_entity(&mut out, e);
    }
    out
}

/// SHA-256 over the signed bytes plus the MAC; this is what the successor's
/// `prev_hash` must equal.
pub fn block_hash(block: &Block) -> Hash32 {
    let mut h = Sha256::new();
    h.update(signed_bytes(block));
    h.update(block.mac);
    h.finalize().into()
}

/// HMAC-SHA-256 per RFC 2104 with a 64-byte block size.
pub fn hmac_sha256(key: &Key, message: &[u8]) -> Hash32 {
    const BLOCK: usize = 64;
    let mut k = [0u8; BLOCK];
    k[..key.len()].copy_from_slice(key);
    let mut ipad = [0x36u8; BLOCK];
    let mut opad = [0x5cu8; BLOCK];
    for i in 0..BLOCK {
        ipad[i] ^= k[i];
        opad[i] ^= k[i];
    }
    let mut inner = Sha256::new();
    inner.update(ipad);
    inner.update(message);
    let inner_digest = inner.finalize();
    let mut outer = Sha256::new();
    outer.update(opad);
    outer.update(inner_digest);
    outer.finalize().into()
}

/// Derives an author's pre-shared key from the scenario key seed.
pub fn derive_key(key_seed: u64, author: &str) -> Key {
    let mut h = Sha256::new();
    h.update(key_seed.to_le_bytes());
    h.update(author.as_bytes());
    h.finalize().into()
}

pub type KeyRing = BTreeMap<String, Key>;

/// Verifies seq contiguity, hash linkage and MACs, returning the earliest
/// failure.
pub fn verify_chain(blocks: &[Block], key: &Key) -> Result<(), ChainFault> {
    let mut prev: Option<Hash32> = None;
    for (i, block) in blocks.iter().enumerate() {
        if block.seq != i as u64 {
            return Err(ChainFault {
                seq: block.seq,
                reason: ChainFaultReason::Gap,
            });
        }
        let expected_prev = prev.unwrap_or(GENESIS_PREV);
        if block.prev_hash != expected_prev {
            return Err(ChainFault {
                seq: block.seq,
                reason: ChainFaultReason::BadLink,
            });
        }
        if hmac_sha256(key, &signed_bytes(block)) != block.mac {
            return Err(ChainFault {
                seq: block.seq,
                reason: ChainFaultReason::BadMac,
            });
        }
        prev = Some(block_hash(block));
    }
    Ok(())
}

/// Per-author append-only block lists.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ChainSet {
    chains: BTreeMap<String, Vec<Block>>,
}

impl ChainSet {
    pub fn new() -> Self {
        ChainSet::default()
    }

    pub fn authors(&self) -> impl Iterator<Item = &String> {
        self.chains.keys()
    }

    pub fn chain(&self, author: &str) -> &[Block] {
        self.chains.get(author).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Next sequence number per author (0 for unknown authors).
    pub fn head_seq(&self, author: &str) -> u64 {
        self.chain(author).len() as u64
    }

    pub fn heads(&self) -> BTreeMap<String, u64> {
        self.chains
            .iter()
            .map(|(a, c)| (a.clone(), c.len() as u64))
            .collect()
    }

    pub fn total_blocks(&self) -> usize {
        self.chains.values().map(Vec::len).sum()
    }

    /// Authors and signs a new block at the head of `author`'s chain.
    pub fn append_block(
        &mut self,
        author: &str,
        payload: Vec<Entity>,
        tick: u64,
        key: &Key,
    ) -> Result<&Block, LedgerError> {
        let chain = self.chains.entry(author.to_string()).or_default();
        let prev_hash = match chain.last() {
            Some(prev) => {
                if tick < prev.tick {
                    return Err(LedgerError::DecreasingTick {
                        tick,
                        head: prev.tick,
                    });
                }
                block_hash(prev)
            }
            None => GENESIS_PREV,
        };
        let mut block = Block {
            author: author.to_string(),
            seq: chain.len() as u64,
            tick,
            prev_hash,
            payload,
            mac: [0u8; 32],
        };
        block.mac = hmac_sha256(key, &signed_bytes(&block));
        chain.push(block);
        Ok(chain.last().unwrap())
    }

    /// Verifies and appends received blocks as a contiguous extension of the
    /// local chain for their author. On any fault nothing is applied and the
    /// batch is reported invalid (the existing verified chain is untouched).
    pub fn try_extend(
        &mut self,
        author: &str,
        blocks: &[Block],
        key: &Key,
    ) -> Result<usize, LedgerError> {
        let local = self.chain(author);
        let mut expected_seq = local.len() as u64;
        let mut expected_prev = local.last().map(block_hash).unwrap_or(GENESIS_PREV);
        let mut accepted = Vec::new();
        for block in blocks {
            if block.seq < expected_seq {
                continue; // already have it
            }
            let fault = if block.seq != expected_seq {
                Some(ChainFaultReason::Gap)
            } else if block.prev_hash != expected_prev {
                Some(ChainFaultReason::BadLink)
            } else if hmac_sha256(key, &signed_bytes(block)) != block.mac {
                Some(ChainFaultReason::BadMac)
            } else {
                None
            };
            if let Some(reason) = fault {
                return Err(LedgerError::Invalid {
                    author: author.to_string(),
                    seq: block.seq,
                    reason,
                });
            }
            expected_prev = block_hash(block);
            expected_seq += 1;
            accepted.push(block.clone());
        }
        let n = accepted.len();
        self.chains
            .entry(author.to_string())
            .or_default()
            .extend(accepted);
        Ok(n)
    }
}

/// Applies every payload observation to `base` in globally sorted
/// `(tick, author, seq)` order. Entities with invalid positions are
/// skipped. Because upserts are last-writer-wins with a total tie-break,
/// the result is independent of chain arrival order.
pub fn merge_into_statemap(chains: &ChainSet, base: &StateMap) -> StateMap {
    let mut map = base.clone();
    let mut blocks: Vec<&Block> = chains
        .chains
        .values()
        .flat_map(|c| c.iter())
        .collect();
    blocks.sort_by(|a, b| {
        (a.tick, &a.author, a.seq).cmp(&(b.tick, &b.author, b.seq))
    });
    for block in blocks {
        for entity in &block.payload {
            let _ = map.upsert_entity(entity.clone());
        }
    }
    map
}

// --- simulated network ---------------------------------------------------

/// A window during which the swarm is split into isolated groups.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionWindow {
    pub from_tick: u64,
    pub to_tick: u64,
    pub groups: Vec<Vec<String>>,
}

/// Lossy network model: i.i.d. drops plus scheduled partitions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetSim {
    pub drop_prob: f64,
    pub partitions: Vec<PartitionWindow>,
}

impl Default for NetSim {
    fn default() -> Self {
        NetSim {
            drop_prob: 0.0,
            partitions: Vec::new(),
        }
    }
}

impl NetSim {
    fn same_side(&self, a: &str, b: &str, tick: u64) -> bool {
        for window in &self.partitions {
            if tick >= window.from_tick && tick <= window.to_tick {
                let group_of = |id: &str| {
                    window
                        .groups
                        .iter()
                        .position(|g| g.iter().any(|m| m == id))
                };
                match (group_of(a), group_of(b)) {
                    (Some(ga), Some(gb)) if ga != gb => return false,
                    _ => {}
                }
            }
        }
        true
    }

    /// Whether a message from `a` to `b` gets through at `tick`.
    pub fn delivered<R: Rng>(&self, a: &str, b: &str, tick: u64, rng: &mut R) -> bool {
        if !self.same_side(a, b, tick) {
            return false;
        }
        if self.drop_prob <= 0.0 {
            return true;
        }
        !rng.gen_bool(self.drop_prob.min(1.0))
    }
}

/// Wire messages exchanged during a sync round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum SyncMessage {
    Heads {
        heads: BTreeMap<String, u64>,
    },
    Request {
        author: String,
        from_seq: u64,
        to_seq: u64,
    },
    Blocks {
        author: String,
        blocks: Vec<Block>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    pub sender: String,
    pub tick: u64,
    pub message: SyncMessage,
}

/// One asset's replica plus its view of the pre-shared keys.
#[derive(Debug, Clone)]
pub struct LedgerNode {
    pub asset_id: String,
    pub chains: ChainSet,
    pub keyring: KeyRing,
    /// Transfers dropped because verification failed.
    pub quarantined: u64,
}

impl LedgerNode {
    pub fn new(asset_id: &str, keyring: KeyRing) -> Self {
        LedgerNode {
            asset_id: asset_id.to_string(),
            chains: ChainSet::new(),
            keyring,
            quarantined: 0,
        }
    }

    fn requests_for(&self, remote: &BTreeMap<String, u64>) -> Vec<SyncMessage> {
        let mut out = Vec::new();
        for (author, remote_head) in remote {
            let local = self.chains.head_seq(author);
            if *remote_head > local {
                out.push(SyncMessage::Request {
                    author: author.clone(),
                    from_seq: local,
                    to_seq: *remote_head - 1,
                });
            }
        }
        out
    }

    fn serve(&self, request: &SyncMessage) -> Option<SyncMessage> {
        let SyncMessage::Request {
            author,
            from_seq,
            to_seq,
        } = request
        else {
            return None;
        };
        let chain = self.chains.chain(author);
        let from = *from_seq as usize;
        let to = ((*to_seq as usize) + 1).min(chain.len());
        if from >= to {
            return None;
        }
        Some(SyncMessage::Blocks {
            author: author.clone(),
            blocks: chain[from..to].to_vec(),
        })
    }

    fn accept(&mut self, author: &str, blocks: &[Block]) {
        let Some(key) = self.keyring.get(author).copied() else {
            self.quarantined += 1;
            return;
        };
        if self.chains.try_extend(author, blocks, &key).is_err() {
            self.quarantined += 1;
        }
    }

    /// Blocks received since the given per-author watermarks, in global
    /// `(tick, author, seq)` order; used for incremental map merges.
    pub fn blocks_since(&self, watermarks: &BTreeMap<String, u64>) -> Vec<&Block> {
        let mut out: Vec<&Block> = Vec::new();
        for author in self.chains.authors() {
            let from = watermarks.get(author).copied().unwrap_or(0) as usize;
            out.extend(self.chains.chain(author)[from.min(self.chains.chain(author).len())..].iter());
        }
        out.sort_by(|a, b| (a.tick, &a.author, a.seq).cmp(&(b.tick, &b.author, b.seq)));
        out
    }
}

/// One anti-entropy round: every node announces heads to every peer, peers
/// request missing ranges, owners answer with block batches, and receivers
/// verify-then-append. Each leg is subject to the network model. Message
/// processing order is fixed by (sender, receiver) id order, so rounds are
/// deterministic given the rng stream.
pub fn run_sync_round<R: Rng>(
    nodes: &mut BTreeMap<String, LedgerNode>,
    net: &NetSim,
    tick: u64,
    rng: &mut R,
) {
    let ids: Vec<String> = nodes.keys().cloned().collect();

    // Phase 1: heads exchange.
    let mut head_mail: Vec<(String, Envelope)> = Vec::new();
    for from in &ids {
        let heads = nodes[from].chains.heads();
        for to in &ids {
            if from == to {
                continue;
            }
            if net.delivered(from, to, tick, rng) {
                head_mail.push((
                    to.clone(),
                    Envelope {
                        sender: from.clone(),
                        tick,
                        message: SyncMessage::Heads {
                            heads: heads.clone(),
                        },
                    },
                ));
            }
        }
    }

    // Phase 2: requests back to the head announcers.
    let mut request_mail: Vec<(String, Envelope)> = Vec::new();
    for (to, envelope) in &head_mail {
        let SyncMessage::Heads { heads } = &envelope.message else {
            continue;
        };
        for request in nodes[to].requests_for(heads) {
            if net.delivered(to, &envelope.sender, tick, rng) {
                request_mail.push((
                    envelope.sender.clone(),
                    Envelope {
                        sender: to.clone(),
                        tick,
                        message: request,
                    },
                ));
            }
        }
    }

    // Phase 3: block transfers to the requesters.
    let mut block_mail: Vec<(String, Envelope)> = Vec::new();
    for (owner, envelope) in &request_mail {
        if let Some(reply) = nodes[owner].serve(&envelope.message) {
            if net.delivered(owner, &envelope.sender, tick, rng) {
                block_mail.push((
                    envelope.sender.clone(),
                    Envelope {
                        sender: owner.clone(),
                        tick,
                        message: reply,
                    },
                ));
            }
        }
    }
    for (to, envelope) in block_mail {
        if let SyncMessage::Blocks { author, blocks } = envelope.message {
            nodes.get_mut(&to).unwrap().accept(&author, &blocks);
        }
    }
}

// --- dump format -----------------------------------------------------------

const DUMP_MAGIC: &[u8; 8] = b"ASLEDGER";
const DUMP_VERSION: u32 = 1;

fn encode_block(out: &mut Vec<u8>, block: &Block) {
    let body = signed_bytes(block);
    out.extend_from_slice(&(body.len() as u32).to_le_bytes());
    out.extend_from_slice(&body);
    out.extend_from_slice(&block.mac);
}

struct Cursor<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], LedgerError> {
        if self.at + n > self.bytes.len() {
            return Err(LedgerError::Decode(self.at));
        }
        let s = &self.bytes[self.at..self.at + n];
        self.at += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, LedgerError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, LedgerError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64, LedgerError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn string(&mut self) -> Result<String, LedgerError> {
        let n = self.u32()? as usize;
        let pos = self.at;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| LedgerError::Decode(pos))
    }

    fn hash(&mut self) -> Result<Hash32, LedgerError> {
        Ok(self.take(32)?.try_into().unwrap())
    }
}

fn decode_entity(cur: &mut Cursor) -> Result<Entity, LedgerError> {
    let id = cur.string()?;
    let pos = cur.at;
    let kind = kind_from_code(cur.take(1)?[0]).ok_or(LedgerError::Decode(pos))?;
    let mut e = Entity::new(id, kind, Vec2::new(cur.f64()?, cur.f64()?));
    e.velocity = Vec2::new(cur.f64()?, cur.f64()?);
    e.heading = cur.f64()?;
    e.classification = cur.string()?;
    e.priority = cur.f64()?;
    e.neutralized = cur.take(1)?[0] != 0;
    e.radius = cur.f64()?;
    e.last_update_tick = cur.u64()?;
    e.author = cur.string()?;
    Ok(e)
}

fn decode_block(cur: &mut Cursor) -> Result<Block, LedgerError> {
    let start = cur.at;
    let body_len = cur.u32()? as usize;
    let body_start = cur.at;
    let author = cur.string()?;
    let seq = cur.u64()?;
    let tick = cur.u64()?;
    let prev_hash = cur.hash()?;
    let n = cur.u32()? as usize;
    let mut payload = Vec::with_capacity(n);
    for _ in 0..n {
        payload.push(decode_entity(cur)?);
    }
    if cur.at - body_start != body_len {
        return Err(LedgerError::Decode(start));
    }
    let mac = cur.hash()?;
    Ok(Block {
        author,
        seq,
        tick,
        prev_hash,
        payload,
        mac,
    })
}

/// Serializes chains with their verification keys into a self-contained
/// dump, so `verify-ledger` can re-check every block offline.
pub fn encode_dump(chains: &ChainSet, keyring: &KeyRing) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(DUMP_MAGIC);
    out.extend_from_slice(&DUMP_VERSION.to_le_bytes());
    out.extend_from_slice(&(chains.chains.len() as u32).to_le_bytes());
    for (author, blocks) in &chains.chains {
        put_str(&mut out, author);
        out.extend_from_slice(keyring.get(author).unwrap_or(&[0u8; 32]));
        out.extend_from_slice(&(blocks.len() as u32).to_le_bytes());
        for block in blocks {
            encode_block(&mut out, block);
        }
    }
    out
}

pub fn decode_dump(bytes: &[u8]) -> Result<(ChainSet, KeyRing), LedgerError> {
    let mut cur = Cursor { bytes, at: 0 };
    if cur.take(8)? != DUMP_MAGIC {
        return Err(LedgerError::Decode(0));
    }
    let version = cur.u32()?;
    if version != DUMP_VERSION {
        return Err(LedgerError::Decode(8));
    }
    let n_authors = cur.u32()? as usize;
    let mut chains = ChainSet::new();
    let mut keyring = KeyRing::new();
    for _ in 0..n_authors {
        let author = cur.string()?;
        let key: Key = cur.take(32)?.try_into().unwrap();
        keyring.insert(author.clone(), key);
        let n_blocks = cur.u32()? as usize;
        let mut blocks = Vec::with_capacity(n_blocks);
        for _ in 0..n_blocks {
            let at = cur.at;
            let block = decode_block(&mut cur)?;
            // The chain label must agree with the signed author field.
            if block.author != author {
                return Err(LedgerError::Decode(at));
            }
            blocks.push(block);
        }
        chains.chains.insert(author, blocks);
    }
    if cur.at != bytes.len() {
        return Err(LedgerError::Decode(cur.at));
    }
    Ok((chains, keyring))
}
