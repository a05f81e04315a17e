//! Mutation and recombination events on a clonal frame.
//!
//! Events are placed per branch, locus and kind: a Poisson count with mean
//! rate × branch length, at uniform positions along the branch. All events and
//! tree splits are then processed from the root forward in time, so that a
//! recombination can copy from any lineage alive at its time.

use alloc::vec;
use alloc::vec::Vec;
use rand::seq::index;
use rand::Rng;
use rand_distr::weighted::WeightedIndex;
use rand_distr::{Binomial, Distribution, Poisson};

use super::tree::CoalescentTree;
use super::{DiversitySource, EventKind, ImportModel, SimConfig, SimEvent, SimStats};
use crate::import::PairwiseDiffTable;

const BASES: [u8; 4] = *b"ACGT";

/// Redraws allowed for a recombination event that would introduce no change.
const MAX_TRIES: usize = 32;

pub(crate) struct Overlay {
    pub root: Vec<u8>,
    pub leaves: Vec<Vec<u8>>,
    pub events: Option<Vec<SimEvent>>,
    pub stats: SimStats,
}

#[derive(Clone, Copy)]
enum Item {
    Split(usize),
    Event { node: usize, locus: usize, kind: EventKind },
}

fn base_index(b: u8) -> usize {
    BASES.iter().position(|&x| x == b).expect("simulated bases are ACGT")
}

fn other_base<R: Rng + ?Sized>(b: u8, rng: &mut R) -> u8 {
    BASES[(base_index(b) + rng.random_range(1..4)) % 4]
}

/// Per-locus samplers for the number of sites an import changes.
enum Sizer {
    Geometric { p: f64 },
    Empirical(WeightedIndex<f64>),
    Table { p_a: f64, table: PairwiseDiffTable },
    Donor { p_a: f64 },
}

impl Sizer {
    fn build(model: &ImportModel, locus: usize) -> Self {
        match model {
            ImportModel::Geometric { mean } => Sizer::Geometric { p: 1.0 / mean },
            ImportModel::Empirical { pmfs } => Sizer::Empirical(WeightedIndex::new(&pmfs[locus]).expect("validated pmf")),
            ImportModel::Complete { p_a, source: DiversitySource::Tables(tables) } => {
                Sizer::Table { p_a: *p_a, table: tables[locus].clone() }
            }
            ImportModel::Complete { p_a, source: DiversitySource::Lineages } => Sizer::Donor { p_a: *p_a },
        }
    }

    /// Number of sites to change, in 1..=m, or None when the event is void.
    fn draw<R: Rng + ?Sized>(&self, m: usize, rng: &mut R) -> Option<usize> {
        match self {
            Sizer::Geometric { p } => {
                if *p >= 1.0 {
                    return Some(1);
                }
                // Inverse CDF of the geometric distribution on 1.. conditioned on ≤ m.
                let q = 1.0 - p;
                let mass = 1.0 - libm::pow(q, m as f64);
                let u: f64 = rng.random();
                let d = 1.0 + libm::floor(libm::log1p(-u * mass) / libm::log(q));
                Some((d as usize).clamp(1, m))
            }
            Sizer::Empirical(w) => Some((w.sample(rng) + 1).min(m)),
            Sizer::Table { p_a, table } => {
                let k = table.len();
                for _ in 0..MAX_TRIES {
                    let x_ij = table.get(rng.random_range(0..k), rng.random_range(0..k));
                    let x = if rng.random::<f64>() < *p_a {
                        x_ij as u64
                    } else {
                        let u: f64 = rng.random();
                        Binomial::new(x_ij as u64, u).expect("u in [0, 1)").sample(rng)
                    };
                    if x >= 1 {
                        return Some((x as usize).min(m));
                    }
                }
                None
            }
            Sizer::Donor { .. } => unreachable!("donor imports are sized by the donor"),
        }
    }
}

struct Lineages {
    seqs: Vec<Option<Vec<u8>>>,
    alive: Vec<usize>,
    slot: Vec<usize>,
}

impl Lineages {
    fn remove(&mut self, node: usize) {
        let i = self.slot[node];
        self.alive.swap_remove(i);
        if i < self.alive.len() {
            self.slot[self.alive[i]] = i;
        }
    }

    fn add(&mut self, node: usize, seq: Vec<u8>) {
        self.slot[node] = self.alive.len();
        self.alive.push(node);
        self.seqs[node] = Some(seq);
    }
}

pub(crate) fn overlay<R: Rng + ?Sized>(tree: &CoalescentTree, config: &SimConfig, rng: &mut R) -> Overlay {
    let offsets: Vec<usize> = config
        .loci
        .iter()
        .scan(0, |acc, l| {
            let o = *acc;
            *acc += l.length;
            Some(o)
        })
        .collect();
    let total_len: usize = config.loci.iter().map(|l| l.length).sum();
    let root: Vec<u8> = (0..total_len).map(|_| BASES[rng.random_range(0..4)]).collect();

    let mut items: Vec<(f64, Item)> = Vec::new();
    for v in 0..tree.n_nodes() {
        if tree.children(v).is_some() {
            items.push((tree.time(v), Item::Split(v)));
        }
        let Some(p) = tree.parent(v) else { continue };
        let (young, old) = (tree.time(v), tree.time(p));
        let len = old - young;
        for (li, l) in config.loci.iter().enumerate() {
            for (kind, rate) in [(EventKind::Mutation, l.theta / 2.0), (EventKind::Recombination, l.lambda * l.theta / 2.0)] {
                let mean = rate * len;
                if !(mean > 0.0) {
                    continue;
                }
                let count = Poisson::new(mean).expect("positive mean").sample(rng) as usize;
                for _ in 0..count {
                    let age = young + rng.random::<f64>() * len;
                    items.push((age, Item::Event { node: v, locus: li, kind }));
                }
            }
        }
    }
    // Oldest first; at equal ages splits precede events.
    items.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| matches!(b.1, Item::Split(_)).cmp(&matches!(a.1, Item::Split(_)))));

    let sizers: Vec<Sizer> = (0..config.loci.len()).map(|l| Sizer::build(&config.import, l)).collect();
    let n_nodes = tree.n_nodes();
    let mut lin = Lineages { seqs: vec![None; n_nodes], alive: Vec::new(), slot: vec![usize::MAX; n_nodes] };
    lin.add(tree.root(), root.clone());
    let mut stats = SimStats { height: tree.height(), total_length: tree.total_length(), ..SimStats::default() };
    let mut log = config.record_events.then(Vec::new);

    for (age, item) in items {
        match item {
            Item::Split(v) => {
                let seq = lin.seqs[v].take().expect("split of a live lineage");
                lin.remove(v);
                let (a, b) = tree.children(v).expect("internal node");
                lin.add(a, seq.clone());
                lin.add(b, seq);
            }
            Item::Event { node, locus, kind } => {
                let o = offsets[locus];
                let m = config.loci[locus].length;
                let changes = match kind {
                    EventKind::Mutation => {
                        let seq = lin.seqs[node].as_mut().expect("live lineage");
                        let site = rng.random_range(0..m);
                        let b = other_base(seq[o + site], rng);
                        seq[o + site] = b;
                        stats.mutations += 1;
                        Some(vec![(site as u32, b)])
                    }
                    EventKind::Recombination => {
                        let changes = match &sizers[locus] {
                            Sizer::Donor { p_a } => donor_import(&mut lin, node, o, m, *p_a, rng),
                            sizer => sizer.draw(m, rng).map(|d| {
                                let seq = lin.seqs[node].as_mut().expect("live lineage");
                                let mut sites: Vec<usize> = index::sample(rng, m, d).into_vec();
                                sites.sort_unstable();
                                sites
                                    .into_iter()
                                    .map(|s| {
                                        let b = other_base(seq[o + s], rng);
                                        seq[o + s] = b;
                                        (s as u32, b)
                                    })
                                    .collect()
                            }),
                        };
                        match changes {
                            Some(c) => {
                                stats.recombinations += 1;
                                Some(c)
                            }
                            None => {
                                stats.void_recombinations += 1;
                                None
                            }
                        }
                    }
                };
                if let (Some(log), Some(changes)) = (log.as_mut(), changes) {
                    log.push(SimEvent { branch: node, age, locus, kind, changes });
                }
            }
        }
    }

    let leaves = (0..tree.n_leaves()).map(|v| lin.seqs[v].take().expect("leaf sequence")).collect();
    Overlay { root, leaves, events: log, stats }
}

/// Copies the whole locus (probability `p_a`) or a uniform-fraction prefix or
/// suffix of it from a random other live lineage. Donor and segment are redrawn
/// until at least one site changes.
fn donor_import<R: Rng + ?Sized>(lin: &mut Lineages, node: usize, o: usize, m: usize, p_a: f64, rng: &mut R) -> Option<Vec<(u32, u8)>> {
    let n = lin.alive.len();
    if n < 2 {
        return None;
    }
    for _ in 0..MAX_TRIES {
        let mut j = rng.random_range(0..n - 1);
        if j >= lin.slot[node] {
            j += 1;
        }
        let donor = lin.alive[j];
        let (start, end) = if rng.random::<f64>() < p_a {
            (0, m)
        } else {
            let u: f64 = rng.random();
            let len = (libm::ceil(u * m as f64) as usize).clamp(1, m);
            if rng.random::<bool>() {
                (0, len)
            } else {
                (m - len, m)
            }
        };
        let src = lin.seqs[donor].as_ref().expect("live donor");
        let changes: Vec<(u32, u8)> = {
            let dst = lin.seqs[node].as_ref().expect("live lineage");
            (start..end).filter(|&s| src[o + s] != dst[o + s]).map(|s| (s as u32, src[o + s])).collect()
        };
        if !changes.is_empty() {
            let dst = lin.seqs[node].as_mut().expect("live lineage");
            for &(s, b) in &changes {
                dst[o + s as usize] = b;
            }
            return Some(changes);
        }
    }
    None
}
