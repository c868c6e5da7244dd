use std::collections::BTreeSet;

use chrono::NaiveDate;
use gridops_core::accounting::{aggregate, waiting_running_ratio, GroupBy, QueueRatio, QueueSample, RatioMode, UsageLedger, UsageRecord};
use gridops_core::fabric::{CatalogueEntry, Fabric, FabricSpec, InfoRecord, InfoSnapshot, Replica, StorageSpec};
use gridops_core::incidents::{
    add_step, compute_support_metrics, on_duty, open_ticket, transition, NewTicket, ShiftSchedule, StepAction, Ticket,
    TicketKind, TicketStatus, TicketStep,
};
use gridops_core::probes::{availability_report, Alarm, Check, Outcome, ProbeResult};
use gridops_core::storage_ops::{compute_filling_rates, owner_totals, reconcile, scan_heavy_users};
use gridops_core::topology::{compute_whitelist, DowntimeWindow, active_downtimes, Presence, VoMember, VoResourceSet, WhitelistPolicy};
use gridops_core::{ResourceId, ResourceKind, Window};
use proptest::prelude::*;

// ---------------------------------------------------------------------------
// whitelist

fn kind_of(i: usize) -> ResourceKind {
    [ResourceKind::SE, ResourceKind::CE, ResourceKind::WMS, ResourceKind::VOMS][i % 4]
}

fn presence_of(i: u8) -> Presence {
    [Presence::RegisteredAndPublished, Presence::RegisteredOnly, Presence::PublishedOnly][i as usize % 3]
}

/// (kind index, presence byte, optional (used, total) in GB).
type Member = (usize, u8, Option<(i64, i64)>);

#[derive(Debug, Clone)]
struct WhitelistCase {
    members: Vec<Member>,
    downtimes: Vec<usize>,
    extra_downtimes: Vec<usize>,
    alarms: Vec<(usize, u64, Option<u64>)>,
    max_filling: f64,
    lower_by: f64,
}

fn whitelist_case() -> impl Strategy<Value = WhitelistCase> {
    (
        prop::collection::vec((0usize..4, any::<u8>(), prop::option::weighted(0.9, (-5i64..100, -5i64..100))), 1..30),
        prop::collection::vec(0usize..30, 0..5),
        prop::collection::vec(0usize..30, 1..5),
        prop::collection::vec((0usize..30, 0u64..3000, prop::option::of(0u64..3000)), 0..6),
        0.0f64..=1.0,
        0.0f64..=1.0,
    )
        .prop_map(|(members, downtimes, extra_downtimes, alarms, max_filling, lower_by)| WhitelistCase {
            members,
            downtimes,
            extra_downtimes,
            alarms,
            max_filling,
            lower_by,
        })
}

fn id(i: usize) -> ResourceId {
    format!("R-{i:02}").into()
}

fn whitelist_inputs(c: &WhitelistCase) -> (VoResourceSet, InfoSnapshot, Vec<Alarm>) {
    let at = 2000;
    let mut members = Vec::new();
    let mut records = Vec::new();
    for (i, (k, p, figures)) in c.members.iter().enumerate() {
        let kind = kind_of(*k);
        members.push(VoMember {
            resource_id: id(i),
            kind,
            presence: presence_of(*p),
        });
        if kind == ResourceKind::SE {
            if let Some((u, f)) = figures {
                records.push(InfoRecord {
                    resource_id: id(i),
                    kind,
                    heartbeat: at,
                    used_bytes: Some(*u),
                    free_bytes: Some(*f),
                    waiting: None,
                    running: None,
                });
            }
        }
    }
    let alarms = c
        .alarms
        .iter()
        .map(|(r, raised, cleared)| Alarm {
            alarm_id: format!("ALM-{r}-{raised}"),
            resource_id: id(*r),
            check: Check::SEReadWrite,
            raised_at: *raised,
            cleared_at: cleared.map(|x| raised + x),
            consecutive_failures: 3,
            linked_ticket: None,
        })
        .collect();
    (
        VoResourceSet { computed_at: at, members },
        InfoSnapshot { taken_at: at, records },
        alarms,
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn whitelist_never_grows(c in whitelist_case()) {
        let (vo, snapshot, alarms) = whitelist_inputs(&c);
        let filling = compute_filling_rates(&snapshot);
        let policy = WhitelistPolicy { max_filling: c.max_filling, ..Default::default() };
        let down: BTreeSet<ResourceId> = c.downtimes.iter().map(|i| id(*i)).collect();
        let base = compute_whitelist(&vo, &down, &filling, &alarms, &policy).unwrap();

        let more_down: BTreeSet<ResourceId> = down.iter().cloned().chain(c.extra_downtimes.iter().map(|i| id(*i))).collect();
        let with_downtimes = compute_whitelist(&vo, &more_down, &filling, &alarms, &policy).unwrap();
        prop_assert!(with_downtimes.members.is_subset(&base.members));

        let lower = WhitelistPolicy { max_filling: c.max_filling * c.lower_by, ..policy.clone() };
        let stricter = compute_whitelist(&vo, &down, &filling, &alarms, &lower).unwrap();
        prop_assert!(stricter.members.is_subset(&base.members));

        for m in &base.members {
            let member = vo.member(m.as_str()).unwrap();
            prop_assert_eq!(member.presence, Presence::RegisteredAndPublished);
            prop_assert!(policy.kinds.contains(&member.kind));
        }
    }

    #[test]
    fn downtime_windows_only_remove(starts in prop::collection::vec((0usize..30, 0u64..4000, 1u64..500), 0..8)) {
        let c = WhitelistCase {
            members: (0..30).map(|i| (i % 3, 0u8, Some((10, 90)))).collect(),
            downtimes: vec![],
            extra_downtimes: vec![],
            alarms: vec![],
            max_filling: 0.8,
            lower_by: 1.0,
        };
        let (vo, snapshot, alarms) = whitelist_inputs(&c);
        let filling = compute_filling_rates(&snapshot);
        let windows: Vec<DowntimeWindow> = starts
            .iter()
            .map(|(r, s, len)| DowntimeWindow::new(id(*r), *s, s + len, "maintenance").unwrap())
            .collect();
        let policy = WhitelistPolicy::default();
        let mut previous = compute_whitelist(&vo, &BTreeSet::new(), &filling, &alarms, &policy).unwrap().members;
        for k in 1..=windows.len() {
            let active = active_downtimes(&windows[..k], vo.computed_at);
            let now = compute_whitelist(&vo, &active, &filling, &alarms, &policy).unwrap().members;
            prop_assert!(now.is_subset(&previous));
            previous = now;
        }
    }
}

// ---------------------------------------------------------------------------
// availability and reliability

fn results_strategy(resources: usize) -> impl Strategy<Value = Vec<(usize, u64, bool)>> {
    prop::collection::vec((0..resources, 0u64..1000, any::<bool>()), 0..200)
}

fn probe_results(raw: &[(usize, u64, bool)], prefix: &str) -> Vec<ProbeResult> {
    raw.iter()
        .map(|(r, at, ok)| ProbeResult {
            resource_id: format!("{prefix}-{r:02}").into(),
            check: Check::SEReadWrite,
            at: *at,
            outcome: if *ok { Outcome::Ok } else { Outcome::Fail },
            detail: String::new(),
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn out_of_scope_results_change_nothing(
        scoped in results_strategy(10),
        foreign in results_strategy(50),
        downs in prop::collection::vec((0usize..10, 0u64..1000, 1u64..200), 0..5),
    ) {
        let scope: BTreeSet<ResourceId> = (0..10).map(|i| format!("SE-{i:02}").into()).collect();
        let window = Window::new(0, 1000).unwrap();
        let downtimes: Vec<DowntimeWindow> = downs
            .iter()
            .map(|(r, s, l)| DowntimeWindow::new(format!("SE-{r:02}"), *s, s + l, "").unwrap())
            .collect();
        let mine = probe_results(&scoped, "SE");
        let base = availability_report(&mine, &scope, window, &downtimes).unwrap();
        let mut mixed = mine.clone();
        mixed.extend(probe_results(&foreign, "XX"));
        let noisy = availability_report(&mixed, &scope, window, &downtimes).unwrap();
        prop_assert_eq!(&base, &noisy);

        for r in &base.resources {
            if let (Some(a), Some(rel)) = (r.availability, r.reliability) {
                prop_assert!(rel >= a);
                prop_assert!(rel <= 1.0);
            }
        }
        if let (Some(a), Some(rel)) = (base.aggregate_availability, base.aggregate_reliability) {
            prop_assert!(rel >= a);
        }
    }
}

// ---------------------------------------------------------------------------
// accounting

fn usage_strategy() -> impl Strategy<Value = Vec<UsageRecord>> {
    prop::collection::vec(
        (
            prop::option::of(0u8..5),
            0u8..3,
            prop::option::of(0u8..2),
            0u64..1000,
            1u64..300,
            0.0f64..1e6,
            0u64..1000,
        )
            .prop_map(|(u, s, g, t0, len, cpu, jobs)| UsageRecord {
                user: u.map(|u| format!("u{u}")),
                site: format!("site-{s}"),
                subgroup: g.map(|g| format!("g{g}")),
                t0,
                t1: t0 + len,
                cpu_hours: cpu,
                jobs,
            }),
        0..60,
    )
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0)
}

const GROUPINGS: [GroupBy; 4] = [GroupBy::User, GroupBy::Site, GroupBy::Subgroup, GroupBy::WholeVO];

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn aggregation_is_additive(records in usage_strategy(), split in any::<prop::sample::Index>(), w0 in 0u64..800, wl in 1u64..800) {
        let window = Window::new(w0, w0 + wl).unwrap();
        let cut = if records.is_empty() { 0 } else { split.index(records.len() + 1) };
        let (a, b) = records.split_at(cut);
        for g in GROUPINGS {
            let whole = aggregate(&records, &window, g);
            let ra = aggregate(a, &window, g);
            let rb = aggregate(b, &window, g);
            let keys: BTreeSet<&str> = whole.rows.iter().chain(&ra.rows).chain(&rb.rows).map(|r| r.key.as_str()).collect();
            for k in keys {
                let get = |rep: &gridops_core::accounting::AccountingReport| rep.row(k).map_or((0.0, 0.0), |r| (r.cpu_hours, r.jobs));
                let (wc, wj) = get(&whole);
                let (ac, aj) = get(&ra);
                let (bc, bj) = get(&rb);
                prop_assert!(close(wc, ac + bc), "{g:?} {k}: {wc} vs {ac} + {bc}");
                prop_assert!(close(wj, aj + bj));
            }
            prop_assert!((0.0..=1.0).contains(&whole.completeness));
        }
    }

    #[test]
    fn pro_rata_conserves_totals(records in usage_strategy(), cuts in prop::collection::btree_set(1u64..1300, 0..6)) {
        let mut bounds: Vec<u64> = vec![0];
        bounds.extend(cuts);
        bounds.push(1300);
        let whole = aggregate(&records, &Window::new(0, 1300).unwrap(), GroupBy::WholeVO).total_cpu_hours();
        let parts: f64 = bounds
            .windows(2)
            .map(|w| aggregate(&records, &Window::new(w[0], w[1]).unwrap(), GroupBy::WholeVO).total_cpu_hours())
            .sum();
        prop_assert!(close(whole, parts), "{whole} vs {parts}");
        let direct: f64 = records.iter().map(|r| r.cpu_hours).sum();
        prop_assert!(close(whole, direct));
    }

    #[test]
    fn completeness_matches_ledger(records in usage_strategy()) {
        let mut ledger = UsageLedger::new();
        ledger.ingest_usage(records.clone());
        let report = aggregate(ledger.records(), &Window::new(0, 1300).unwrap(), GroupBy::User);
        let expected = if ledger.records().is_empty() { 1.0 } else { ledger.attributed() as f64 / ledger.records().len() as f64 };
        prop_assert_eq!(report.completeness, expected);
    }

    #[test]
    fn ratio_is_scale_invariant(counts in prop::collection::vec((0u64..10_000, 0u64..10_000), 1..30), k in 1u64..1000) {
        let samples = |scale: u64| -> Vec<QueueSample> {
            counts.iter().enumerate().map(|(i, (w, r))| QueueSample {
                at: i as u64, compute_id: "CE".into(), waiting: w * scale, running: r * scale,
            }).collect()
        };
        let w = Window::new(0, 100).unwrap();
        for mode in [RatioMode::SumOfCounts, RatioMode::MeanOfRatios] {
            let base = waiting_running_ratio(&samples(1), &w, mode);
            let scaled = waiting_running_ratio(&samples(k), &w, mode);
            match (base, scaled) {
                (QueueRatio::Defined(a), QueueRatio::Defined(b)) => prop_assert!(close(a, b)),
                (QueueRatio::Undefined, QueueRatio::Undefined) => {}
                other => prop_assert!(false, "{other:?}"),
            }
        }
        let running: u64 = counts.iter().map(|c| c.1).sum();
        prop_assert_eq!(waiting_running_ratio(&samples(1), &w, RatioMode::SumOfCounts) == QueueRatio::Undefined, running == 0);
    }
}

// ---------------------------------------------------------------------------
// incidents

#[derive(Debug, Clone)]
enum Op {
    Comment(u8, u64),
    Move(u8, u64, u8),
}

fn op_strategy() -> impl Strategy<Value = Op> {
    prop_oneof![
        (0u8..6, 0u64..5000).prop_map(|(a, dt)| Op::Comment(a, dt)),
        (0u8..6, 0u64..5000, 0u8..5).prop_map(|(a, dt, s)| Op::Move(a, dt, s)),
    ]
}

fn build_ticket(n: usize, opened_at: u64, kind: usize, ops: &[Op]) -> Ticket {
    let mut t = open_ticket(
        format!("T-{n}"),
        &NewTicket {
            kind: TicketKind::ALL[kind % 5],
            resource_id: Some("R-1".into()),
            opened_at,
            author: "p0".into(),
            payload: String::new(),
        },
    )
    .unwrap();
    let statuses = [TicketStatus::Open, TicketStatus::InProgress, TicketStatus::OnHold, TicketStatus::Solved, TicketStatus::Closed];
    for op in ops {
        let last = t.last_step_at();
        let next = match op {
            Op::Comment(a, dt) => add_step(&t, TicketStep { at: last + dt, author: format!("p{a}"), action: StepAction::Comment, payload: String::new() }),
            Op::Move(a, dt, s) => transition(&t, statuses[*s as usize], last + dt, &format!("p{a}")),
        };
        if let Ok(n) = next {
            t = n;
        }
    }
    t
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn participants_are_step_authors(ops in prop::collection::vec(op_strategy(), 0..30)) {
        let t = build_ticket(1, 0, 0, &ops);
        let authors: BTreeSet<String> = t.steps.iter().map(|s| s.author.clone()).collect();
        prop_assert_eq!(&t.participants, &authors);
        prop_assert!(t.steps.windows(2).all(|w| w[0].at <= w[1].at));
        if let Some(c) = t.closed_at {
            prop_assert!(c >= t.opened_at);
        }
    }

    #[test]
    fn histogram_conserves_and_metrics_are_pure(
        tickets in prop::collection::vec((0u64..200_000, 0usize..5, prop::collection::vec(op_strategy(), 0..10)), 0..40),
        w0 in 0u64..100_000,
        wl in 1u64..200_000,
    ) {
        let tickets: Vec<Ticket> = tickets.iter().enumerate().map(|(i, (at, k, ops))| build_ticket(i, *at, *k, ops)).collect();
        let window = Window::new(w0, w0 + wl).unwrap();
        let m = compute_support_metrics(&tickets, &window);
        let opened = tickets.iter().filter(|t| window.contains(t.opened_at)).count();
        prop_assert_eq!(m.histogram.iter().map(|b| b.count).sum::<usize>(), opened);
        prop_assert_eq!(m.opened, opened);
        prop_assert_eq!(m.mean_steps.is_none(), m.solved == 0);
        let again = compute_support_metrics(&tickets, &window);
        prop_assert_eq!(serde_json::to_string(&m).unwrap(), serde_json::to_string(&again).unwrap());
    }

    #[test]
    fn rotation_is_periodic(teams in 1usize..15, len in 1u32..15, day in 0i64..5000) {
        let epoch = NaiveDate::from_ymd_opt(2010, 3, 1).unwrap();
        let names: Vec<String> = (0..teams).map(|i| format!("team-{i}")).collect();
        let s = ShiftSchedule::new(names, len, epoch).unwrap();
        let d = epoch + chrono::Duration::days(day);
        let later = d + chrono::Duration::days(s.period_days() as i64);
        prop_assert_eq!(on_duty(&s, d).unwrap(), on_duty(&s, later).unwrap());
    }
}

// ---------------------------------------------------------------------------
// storage

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn heavy_users_account_for_registered_bytes(files in prop::collection::vec((0u8..5, 1u64..1000, 0u8..3), 0..40)) {
        let se: ResourceId = "SE-1".into();
        let catalogue: Vec<CatalogueEntry> = files.iter().enumerate().map(|(i, (o, size, elsewhere))| {
            let mut replicas = vec![Replica { storage: se.clone(), pfn: format!("p{i}") }];
            if *elsewhere == 0 {
                replicas.push(Replica { storage: "SE-2".into(), pfn: format!("q{i}") });
            }
            if *elsewhere == 1 {
                replicas.remove(0);
            }
            CatalogueEntry { lfn: format!("/f{i}"), owner: format!("u{o}"), size: *size, replicas }
        }).collect();
        let registered: u64 = catalogue.iter().flat_map(|e| e.replicas.iter().filter(|r| r.storage == se).map(move |_| e.size)).sum();
        let totals = owner_totals(&catalogue, &se);
        prop_assert_eq!(totals.values().sum::<u64>(), registered);

        let snapshot = InfoSnapshot { taken_at: 0, records: vec![InfoRecord {
            resource_id: se.clone(), kind: ResourceKind::SE, heartbeat: 0,
            used_bytes: Some(95), free_bytes: Some(5), waiting: None, running: None,
        }]};
        let scan = scan_heavy_users(&snapshot, &catalogue, 0.8, usize::MAX).unwrap();
        prop_assert_eq!(scan.len(), 1);
        prop_assert_eq!(scan[0].entries.iter().map(|e| e.bytes_owned).sum::<u64>(), registered);
        prop_assert!(scan[0].entries.windows(2).all(|w| w[0].bytes_owned >= w[1].bytes_owned));
        prop_assert!(scan[0].entries.iter().enumerate().all(|(i, e)| e.rank == i + 1));
    }

    #[test]
    fn threshold_strictness(used in 0i64..1_000_000, free in 0i64..1_000_000) {
        prop_assume!(used + free > 0);
        let snapshot = InfoSnapshot { taken_at: 0, records: vec![InfoRecord {
            resource_id: "SE-1".into(), kind: ResourceKind::SE, heartbeat: 0,
            used_bytes: Some(used), free_bytes: Some(free), waiting: None, running: None,
        }]};
        let rate = compute_filling_rates(&snapshot).entries[0].rate.unwrap();
        prop_assert!(scan_heavy_users(&snapshot, &[], rate, 1).unwrap().is_empty());
        let below = rate - 1e-9;
        if below >= 0.0 {
            prop_assert_eq!(scan_heavy_users(&snapshot, &[], below, 1).unwrap().len(), 1);
        }
    }

    #[test]
    fn consistent_operations_stay_consistent(ops in prop::collection::vec((any::<bool>(), 0usize..3, 0usize..12, 1u64..50), 0..60)) {
        let mut fabric = Fabric::new(&FabricSpec {
            storage: (0..3).map(|i| StorageSpec { id: format!("SE-{i}").into(), site: String::new(), capacity: 400, files: vec![] }).collect(),
            ..Default::default()
        }).unwrap();
        for (write, se, f, size) in ops {
            let lfn = format!("/f{f}");
            if write {
                let size = fabric.entry(&lfn).map_or(size, |e| e.size);
                let _ = fabric.write_file(&format!("SE-{se}").into(), "u", &lfn, size);
            } else {
                let _ = fabric.delete_entry(&lfn);
            }
        }
        let r = reconcile(&fabric.catalogue_entries(), &fabric.inventories(), fabric.now());
        prop_assert!(r.is_consistent());
    }
}
