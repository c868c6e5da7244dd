//! Seeded fixture generators whose aggregates are fixed by construction:
//! a ticket corpus with known means, a usage log with a known total, queue
//! samples with known sums, a storage-growth series and a misconfigured
//! 108-SE fabric.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::accounting::{QueueSample, UsageRecord};
use crate::fabric::{
    CatalogueEntry, ComputeSpec, EventAction, FabricSpec, FaultKind, FaultSpec, InfoRecord,
    InfoSnapshot, InventoryFile, NodeSpec, PreloadFile, Replica, ScenarioEvent, ServiceKind,
    ServiceSpec, StorageSpec,
};
use crate::incidents::{add_step, open_ticket, transition, NewTicket, StepAction, Ticket, TicketKind, TicketStatus, TicketStep};
use crate::topology::{Presence, VoMember, VoResourceSet};
use crate::types::{Bytes, ResourceId, ResourceKind, Timestamp, Window, MINUTES_PER_DAY};

const GB: Bytes = 1_000_000_000;
const PB: Bytes = 1_000_000_000_000_000;

/// Splits `total` into `n` parts of at least `min`, with random proportions.
pub fn partition(rng: &mut impl Rng, total: u64, n: usize, min: u64) -> Vec<u64> {
    assert!(n > 0 && min * n as u64 <= total, "cannot split {total} into {n} parts of at least {min}");
    let spare = total - min * n as u64;
    let weights: Vec<u64> = (0..n).map(|_| rng.gen_range(1..=1000)).collect();
    let wsum: u64 = weights.iter().sum();
    let mut parts: Vec<u64> = weights
        .iter()
        .map(|w| min + (spare as u128 * *w as u128 / wsum as u128) as u64)
        .collect();
    let short = total - parts.iter().sum::<u64>();
    for i in 0..short as usize {
        parts[i % n] += 1;
    }
    parts
}

/// Per-ticket shape of the support corpus: (days to solve, steps, people).
/// Tickets come in pairs symmetric around the targets, so the means are
/// exactly 14 days, 10 steps and 3.5 people.
pub const SUPPORT_PAIR: [(u64, usize, usize); 2] = [(12, 9, 3), (16, 11, 4)];

pub struct SupportCorpus {
    pub tickets: Vec<Ticket>,
    /// Covers every opening and solving time of the corpus.
    pub window: Window,
}

/// `pairs` ticket pairs opened during the first `opening_days` of the window.
pub fn support_corpus(seed: u64, pairs: usize, opening_days: u64) -> SupportCorpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let people: Vec<String> = (1..=20).map(|i| format!("shifter-{i:02}")).collect();
    let mut tickets = Vec::with_capacity(pairs * 2);
    for p in 0..pairs {
        for (half, &(days, steps, persons)) in SUPPORT_PAIR.iter().enumerate() {
            let opened_at = rng.gen_range(0..opening_days * MINUTES_PER_DAY);
            let kind = *TicketKind::ALL.choose(&mut rng).expect("non-empty");
            let mut authors: Vec<String> = people.choose_multiple(&mut rng, persons).cloned().collect();
            authors.sort();
            let resource = match kind {
                TicketKind::SE => Some(ResourceId::from(format!("SE-{:03}", rng.gen_range(1..=108)))),
                TicketKind::CE => Some(ResourceId::from(format!("CE-{:03}", rng.gen_range(1..=186)))),
                TicketKind::WMS => Some(ResourceId::from(format!("WMS-{:02}", rng.gen_range(1..=36)))),
                TicketKind::User | TicketKind::Other => None,
            };
            let id = format!("T-{:06}", p * 2 + half + 1);
            let mut t = open_ticket(
                id,
                &NewTicket {
                    kind,
                    resource_id: resource,
                    opened_at,
                    author: authors[0].clone(),
                    payload: format!("{kind} incident"),
                },
            )
            .expect("valid fixture ticket");
            let solved_at = opened_at + days * MINUTES_PER_DAY;
            t = transition(&t, TicketStatus::InProgress, opened_at + 30, &authors[0]).expect("legal");
            // Creation, InProgress and Solved account for three steps.
            let comments = steps - 3;
            let mut times: Vec<Timestamp> = (0..comments)
                .map(|_| rng.gen_range(opened_at + 30..solved_at))
                .collect();
            times.sort();
            for (i, at) in times.into_iter().enumerate() {
                let author = &authors[(i + 1) % persons];
                t = add_step(
                    &t,
                    TicketStep {
                        at,
                        author: author.clone(),
                        action: StepAction::Comment,
                        payload: format!("update {}", i + 1),
                    },
                )
                .expect("ordered");
            }
            t = transition(&t, TicketStatus::Solved, solved_at, &authors[0]).expect("legal");
            debug_assert_eq!(t.steps.len(), steps);
            debug_assert_eq!(t.participants.len(), persons);
            tickets.push(t);
        }
    }
    let end = (opening_days + SUPPORT_PAIR[1].0 + 1) * MINUTES_PER_DAY;
    SupportCorpus {
        tickets,
        window: Window::new(0, end).expect("non-empty"),
    }
}

pub const YEAR_CPU_HOURS: u64 = 19_000_000;
pub const YEAR_MINUTES: u64 = 365 * MINUTES_PER_DAY;

/// `n` records inside `[0, YEAR_MINUTES)` whose integer cpu_hours sum to
/// [`YEAR_CPU_HOURS`]. About one record in eight withholds the user.
pub fn usage_year(seed: u64, n: usize) -> Vec<UsageRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let hours = partition(&mut rng, YEAR_CPU_HOURS, n, 1);
    let sites = ["FR-CNRS", "IT-INFN", "ES-IFCA", "NL-NIKHEF", "GR-HELLASGRID", "UK-IC"];
    let subgroups = ["imaging", "genomics", "drug-discovery"];
    hours
        .into_iter()
        .map(|h| {
            let t0 = rng.gen_range(0..YEAR_MINUTES - 60);
            let t1 = rng.gen_range(t0 + 1..=YEAR_MINUTES);
            UsageRecord {
                user: (!rng.gen_ratio(1, 8)).then(|| format!("user-{:03}", rng.gen_range(1..=150))),
                site: sites.choose(&mut rng).expect("non-empty").to_string(),
                subgroup: rng.gen_bool(0.7).then(|| subgroups.choose(&mut rng).expect("non-empty").to_string()),
                t0,
                t1,
                cpu_hours: h as f64,
                jobs: rng.gen_range(1..5000),
            }
        })
        .collect()
}

/// `n` samples inside `[0, n * 30)` summing to 39,000 waiting and 10,000
/// running jobs.
pub fn queue_fixture(seed: u64, n: usize) -> Vec<QueueSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let waiting = partition(&mut rng, 39_000, n, 0);
    let running = partition(&mut rng, 10_000, n, 0);
    waiting
        .into_iter()
        .zip(running)
        .enumerate()
        .map(|(i, (w, r))| QueueSample {
            at: i as u64 * 30,
            compute_id: format!("CE-{:03}", i % 186 + 1).into(),
            waiting: w,
            running: r,
        })
        .collect()
}

/// Monthly snapshots of 108 SEs with 3.7 PB of published capacity, used
/// space growing linearly from 1.2 PB to 2.0 PB. Every SE is a registered
/// and published member of the paired VO set.
pub fn storage_growth(seed: u64, months: usize) -> Vec<(InfoSnapshot, VoResourceSet)> {
    assert!(months >= 2);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = 108;
    let capacities = partition(&mut rng, 37 * PB / 10, n, 10 * GB);
    let ids: Vec<ResourceId> = (1..=n).map(|i| format!("SE-{i:03}").into()).collect();
    let vo = |at| VoResourceSet {
        computed_at: at,
        members: ids
            .iter()
            .map(|id| VoMember {
                resource_id: id.clone(),
                kind: ResourceKind::SE,
                presence: Presence::RegisteredAndPublished,
            })
            .collect(),
    };
    (0..months)
        .map(|m| {
            let at = m as u64 * 30 * MINUTES_PER_DAY;
            let total_used = 12 * PB / 10 + (8 * PB / 10) * m as u64 / (months as u64 - 1);
            // Used space proportional to capacity, remainder on the first SEs.
            let cap_total: u64 = capacities.iter().sum();
            let mut used: Vec<u64> = capacities
                .iter()
                .map(|c| (total_used as u128 * *c as u128 / cap_total as u128) as u64)
                .collect();
            let short = total_used - used.iter().sum::<u64>();
            for u in used.iter_mut().take(short as usize) {
                *u += 1;
            }
            let records = ids
                .iter()
                .zip(capacities.iter().zip(used))
                .map(|(id, (cap, u))| InfoRecord {
                    resource_id: id.clone(),
                    kind: ResourceKind::SE,
                    heartbeat: at,
                    used_bytes: Some(u as i64),
                    free_bytes: Some((cap - u) as i64),
                    waiting: None,
                    running: None,
                })
                .collect();
            (
                InfoSnapshot {
                    taken_at: at,
                    records,
                },
                vo(at),
            )
        })
        .collect()
}

pub struct MisconfiguredFabric {
    pub spec: FabricSpec,
    /// Storage elements given a publication fault, active from `onset`.
    pub faulted: BTreeSet<ResourceId>,
    pub onset: Timestamp,
}

/// 108 SEs, 186 CEs, 36 WMS, a catalogue and a VOMS server. Seventeen SEs
/// get a publication fault at `onset` whose effect exceeds the default
/// detection tolerances; every other resource publishes the truth.
pub fn misconfigured_fabric(seed: u64, onset: Timestamp) -> MisconfiguredFabric {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ids: Vec<ResourceId> = (1..=108).map(|i| format!("SE-{i:03}").into()).collect();
    let mut chosen: Vec<usize> = rand::seq::index::sample(&mut rng, ids.len(), 17).into_vec();
    chosen.sort();
    let kinds = [
        FaultKind::FullReportsFree,
        FaultKind::OverstateFreeSpace,
        FaultKind::UnderreportUsed,
        FaultKind::Unpublished,
    ];
    let mut storage = Vec::new();
    let mut events = Vec::new();
    for (i, id) in ids.iter().enumerate() {
        let capacity = rng.gen_range(50..=400) * 10 * GB;
        let fault = chosen.iter().position(|&c| c == i).map(|k| kinds[k % kinds.len()]);
        let used = match fault {
            Some(FaultKind::FullReportsFree) => capacity,
            _ => capacity * rng.gen_range(20..=90) / 100,
        };
        let files_n = rng.gen_range(2..=6);
        let sizes = partition(&mut rng, used, files_n, 1);
        let files = sizes
            .into_iter()
            .enumerate()
            .map(|(j, size)| PreloadFile {
                lfn: format!("/grid/vo/{id}/file-{j:02}"),
                owner: format!("user-{:03}", rng.gen_range(1..=150)),
                size,
            })
            .collect();
        storage.push(StorageSpec {
            id: id.clone(),
            site: format!("site-{:02}", i % 40),
            capacity,
            files,
        });
        if let Some(kind) = fault {
            let magnitude = match kind {
                FaultKind::FullReportsFree => (rng.gen_range(100..=900) * GB) as f64,
                FaultKind::OverstateFreeSpace => rng.gen_range(0.2..1.0),
                FaultKind::UnderreportUsed => rng.gen_range(0.2..0.6),
                _ => 0.0,
            };
            events.push(ScenarioEvent {
                at: onset,
                action: EventAction::InjectFault {
                    resource: id.clone(),
                    fault: FaultSpec::new(kind, magnitude, onset),
                },
            });
        }
    }
    let compute = (1..=186)
        .map(|i| ComputeSpec {
            id: format!("CE-{i:03}").into(),
            site: format!("site-{:02}", i % 40),
            waiting: rng.gen_range(0..400),
            running: rng.gen_range(1..200),
        })
        .collect();
    let workload = (1..=36)
        .map(|i| NodeSpec {
            id: format!("WMS-{i:02}").into(),
            site: format!("site-{:02}", i % 40),
        })
        .collect();
    let services = vec![
        ServiceSpec {
            id: "LFC-1".into(),
            kind: ServiceKind::Catalogue,
            site: "site-00".into(),
        },
        ServiceSpec {
            id: "VOMS-1".into(),
            kind: ServiceKind::VOMS,
            site: "site-00".into(),
        },
    ];
    MisconfiguredFabric {
        spec: FabricSpec {
            seed: Some(seed),
            storage,
            compute,
            workload,
            services,
            events,
        },
        faulted: chosen.into_iter().map(|i| ids[i].clone()).collect(),
        onset,
    }
}

/// A random catalogue and set of inventories, drawn from small name pools so
/// that registered and physical names collide often. Not necessarily
/// reachable through fabric operations.
pub fn reconcile_instance(
    rng: &mut impl Rng,
    max_files: usize,
    max_storage: usize,
) -> (Vec<CatalogueEntry>, BTreeMap<ResourceId, BTreeSet<InventoryFile>>) {
    let n_storage = rng.gen_range(1..=max_storage);
    let storages: Vec<ResourceId> = (0..n_storage).map(|i| format!("SE-{i}").into()).collect();
    let pool = (max_files / 2).max(1);
    let pfn = |rng: &mut dyn rand::RngCore| format!("pfn-{:03}", rng.gen_range(0..pool));
    let owners = ["u1", "u2", "u3"];

    let n_entries = rng.gen_range(0..=max_files / 2);
    let catalogue = (0..n_entries)
        .map(|i| {
            let n_rep = rng.gen_range(1..=n_storage.min(3));
            let replicas = (0..n_rep)
                .map(|_| Replica {
                    storage: storages[rng.gen_range(0..n_storage)].clone(),
                    pfn: pfn(rng),
                })
                .collect();
            CatalogueEntry {
                lfn: format!("/f{i:03}"),
                owner: owners[rng.gen_range(0..owners.len())].to_owned(),
                size: rng.gen_range(1..100),
                replicas,
            }
        })
        .collect();

    let mut inventories: BTreeMap<ResourceId, BTreeSet<InventoryFile>> = BTreeMap::new();
    // Some storage elements may have no listing at all.
    for s in storages.iter().filter(|_| rng.gen_bool(0.9)) {
        inventories.insert(s.clone(), BTreeSet::new());
    }
    let listed: Vec<ResourceId> = inventories.keys().cloned().collect();
    if !listed.is_empty() {
        for _ in 0..rng.gen_range(0..=max_files / 2) {
            let s = &listed[rng.gen_range(0..listed.len())];
            let file = InventoryFile {
                pfn: pfn(rng),
                size: rng.gen_range(1..100),
                owner: owners[rng.gen_range(0..owners.len())].to_owned(),
            };
            inventories.get_mut(s).expect("listed").insert(file);
        }
    }
    (catalogue, inventories)
}

/// A small consistent fabric for decommissioning runs: 2 to 5 SEs holding up
/// to 30 files, some replicated. The source candidate is `SE-0`.
pub fn decommission_fabric(rng: &mut impl Rng) -> FabricSpec {
    let n = rng.gen_range(2..=5);
    let mut storage: Vec<StorageSpec> = (0..n)
        .map(|i| StorageSpec {
            id: format!("SE-{i}").into(),
            site: format!("site-{i}"),
            capacity: rng.gen_range(200..=1000) * GB,
            files: Vec::new(),
        })
        .collect();
    let mut used = vec![0u64; n];
    for f in 0..rng.gen_range(0..=30) {
        let size = rng.gen_range(1..=60) * GB;
        let owner = format!("user-{}", rng.gen_range(1..=4));
        let copies = if rng.gen_bool(0.25) { 2.min(n) } else { 1 };
        let mut homes: Vec<usize> = if rng.gen_bool(0.7) { vec![0] } else { vec![] };
        while homes.len() < copies {
            let h = rng.gen_range(0..n);
            if !homes.contains(&h) {
                homes.push(h);
            }
        }
        for h in homes {
            if used[h] + size <= storage[h].capacity {
                used[h] += size;
                storage[h].files.push(PreloadFile {
                    lfn: format!("/data/file-{f:03}"),
                    owner: owner.clone(),
                    size,
                });
            }
        }
    }
    FabricSpec {
        storage,
        ..Default::default()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partition_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for n in [1, 2, 7, 100] {
            let p = partition(&mut rng, 1_000_003, n, 3);
            assert_eq!(p.len(), n);
            assert_eq!(p.iter().sum::<u64>(), 1_000_003);
            assert!(p.iter().all(|x| *x >= 3));
        }
    }

    #[test]
    fn corpus_shapes() {
        let c = support_corpus(3, 5, 60);
        assert_eq!(c.tickets.len(), 10);
        let steps: usize = c.tickets.iter().map(|t| t.steps.len()).sum();
        assert_eq!(steps, 100);
        assert!(c.tickets.iter().all(|t| t.closed_at.is_some_and(|x| c.window.contains(x))));
    }

    #[test]
    fn storage_growth_endpoints() {
        let s = storage_growth(1, 13);
        let totals = |i: usize| {
            s[i].0.records.iter().fold((0u64, 0u64), |(u, c), r| {
                let used = r.used_bytes.unwrap() as u64;
                (u + used, c + used + r.free_bytes.unwrap() as u64)
            })
        };
        assert_eq!(totals(0), (12 * PB / 10, 37 * PB / 10));
        assert_eq!(totals(12), (2 * PB, 37 * PB / 10));
    }
}
