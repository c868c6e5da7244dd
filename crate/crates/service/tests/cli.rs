mod common;

use std::path::Path;
use std::process::{Command, Output};

use axum::body::Body;
use axum::http::{Request, StatusCode};
use gridops::api::{router, AppState};
use gridops::Engine;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

fn gridops(data_dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gridops"))
        .args(args)
        .env("GRIDOPS_DATA_DIR", data_dir)
        .env_remove("GRIDOPS_API_TOKEN")
        .env("RUST_LOG", "off")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn ok(o: Output) -> String {
    assert!(o.status.success(), "exit {:?}\nstderr: {}", o.status.code(), stderr(&o));
    stdout(&o)
}

/// Four SEs at distinct filling levels.
fn filling_scenario() -> Value {
    let gb = common::GB;
    let se = |id: &str, used: u64| {
        json!({"id": id, "site": "s", "capacity": 100 * gb,
               "files": [{"lfn": format!("/vo/{id}"), "owner": "bob", "size": used * gb}]})
    };
    json!({
        "fabric": {"storage": [se("SE-a", 30), se("SE-b", 90), se("SE-c", 55), se("SE-d", 5)]},
        "duration": 30
    })
}

#[test]
fn missing_scenario_file_fails_with_message() {
    let dir = tempfile::tempdir().unwrap();
    let o = gridops(dir.path(), &["run", "missing.json"]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("file not found"), "{}", stderr(&o));
}

#[test]
fn unknown_subcommand_prints_usage() {
    let dir = tempfile::tempdir().unwrap();
    let o = gridops(dir.path(), &["frobnicate"]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("Usage"), "{}", stderr(&o));
}

#[test]
fn metrics_on_empty_store_are_undefined() {
    let dir = tempfile::tempdir().unwrap();
    let json: Value = serde_json::from_str(&ok(gridops(dir.path(), &["report", "metrics"]))).unwrap();
    assert_eq!(json["mean_days_to_solve"], "undefined");
    assert_eq!(json["mean_steps"], "undefined");
    assert_eq!(json["mean_people"], "undefined");
    let csv = ok(gridops(dir.path(), &["report", "metrics", "--format", "csv"]));
    assert!(csv.contains("mean_days_to_solve,undefined"), "{csv}");
}

#[test]
fn filling_sorted_by_rate_descending() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = common::write_scenario(dir.path(), "s.json", &filling_scenario());
    let data = dir.path().join("data");
    ok(gridops(&data, &["run", scenario.to_str().unwrap()]));
    let csv = ok(gridops(&data, &["report", "filling", "--sort", "rate", "--format", "csv"]));
    let mut rows = csv::Reader::from_reader(csv.as_bytes());
    let ids: Vec<String> = rows.records().map(|r| r.unwrap()[0].to_owned()).collect();
    assert_eq!(ids, ["SE-b", "SE-c", "SE-a", "SE-d"]);
    let rates: Vec<f64> = csv::Reader::from_reader(csv.as_bytes())
        .records()
        .map(|r| r.unwrap()[3].parse().unwrap())
        .collect();
    assert!(rates.windows(2).all(|w| w[0] >= w[1]), "{rates:?}");
}

#[test]
fn run_resumes_and_rejects_a_different_scenario() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let a = common::write_scenario(dir.path(), "a.json", &common::small_scenario(60));
    let summary: Value = serde_json::from_str(&ok(gridops(&data, &["run", a.to_str().unwrap()]))).unwrap();
    assert_eq!(summary["cycles"], 2);
    let again: Value = serde_json::from_str(&ok(gridops(&data, &["run", a.to_str().unwrap()]))).unwrap();
    assert_eq!(again, summary);

    let b = common::write_scenario(dir.path(), "b.json", &common::small_scenario(90));
    let o = gridops(&data, &["run", b.to_str().unwrap()]);
    assert!(!o.status.success());

    let zero = common::write_scenario(dir.path(), "z.json", &common::small_scenario(0));
    let s: Value = serde_json::from_str(&ok(gridops(&dir.path().join("z"), &["run", zero.to_str().unwrap()]))).unwrap();
    assert_eq!(s["cycles"], 0);
}

#[test]
fn ticket_and_decommission_commands() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let s = common::write_scenario(dir.path(), "s.json", &common::small_scenario(30));
    ok(gridops(&data, &["run", s.to_str().unwrap()]));

    let o = gridops(&data, &["ticket", "open", "--kind", "CE", "--author", "ops"]);
    assert!(!o.status.success());
    assert!(stderr(&o).starts_with("error: "), "{}", stderr(&o));

    let t: Value = serde_json::from_str(&ok(gridops(
        &data,
        &["ticket", "open", "--kind", "SE", "--resource", "SE-1", "--author", "ops", "--payload", "full"],
    )))
    .unwrap();
    let id = t["ticket_id"].as_str().unwrap();
    ok(gridops(&data, &["ticket", "step", id, "--author", "dev", "--payload", "on it"]));
    let o = gridops(&data, &["ticket", "step", id, "--author", "dev", "--expected-version", "1"]);
    assert!(stderr(&o).contains("version"), "{}", stderr(&o));
    let closed: Value = serde_json::from_str(&ok(gridops(&data, &["ticket", "close", id, "--author", "dev"]))).unwrap();
    assert_eq!(closed["status"], "Closed");
    assert!(!gridops(&data, &["ticket", "close", id, "--author", "dev"]).status.success());

    let plan: Value = serde_json::from_str(&ok(gridops(&data, &["decommission", "plan", "SE-1"]))).unwrap();
    assert_eq!(plan["steps"].as_array().unwrap().len(), 1);
    let done: Value =
        serde_json::from_str(&ok(gridops(&data, &["decommission", "execute", plan["plan_id"].as_str().unwrap()]))).unwrap();
    assert_eq!(done["status"], "Done");
    let recon: Value = serde_json::from_str(&ok(gridops(&data, &["report", "reconcile"]))).unwrap();
    assert_eq!((recon["zombies"].clone(), recon["ghosts"].clone()), (json!([]), json!([])));
}

const PAIRS: &[(&str, &str)] = &[
    ("filling", "/filling"),
    ("reconcile", "/reports/reconciliation"),
    ("metrics", "/metrics/support"),
    ("whitelist", "/whitelist"),
    ("topology", "/topology"),
    ("findings", "/reports/findings"),
    ("heavy-users", "/heavy-users"),
    ("alarms", "/alarms"),
    ("availability", "/metrics/availability"),
    ("tickets", "/tickets"),
    ("takeover", "/takeover"),
    ("accounting", "/metrics/accounting"),
    ("trend", "/metrics/trend"),
    ("plans", "/decommission"),
    ("summary", "/status"),
];

#[tokio::test(flavor = "multi_thread")]
async fn api_and_cli_reports_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let s = common::write_scenario(dir.path(), "s.json", &common::small_scenario(120));
    ok(gridops(&data, &["run", s.to_str().unwrap()]));
    ok(gridops(&data, &["ticket", "open", "--kind", "SE", "--resource", "SE-2", "--author", "ops", "--at", "100"]));
    ok(gridops(&data, &["decommission", "plan", "SE-1"]));

    let app = router(AppState::spawn(Engine::open(&data).unwrap(), None));
    let extra: &[(&[&str], &str)] = &[
        (&["--sort", "id"], "sort=id"),
        (&["--group-by", "site", "--mode", "mean"], "group_by=site&mode=mean"),
        (&["--start", "0", "--end", "60"], "start=0&end=60"),
    ];
    for (cli_name, path) in PAIRS {
        for format in ["json", "csv"] {
            let mut queries = vec![(vec![], String::new())];
            for (flags, q) in extra {
                let applies = match *cli_name {
                    "filling" => q.starts_with("sort"),
                    "accounting" => !q.starts_with("sort"),
                    "metrics" | "availability" => q.starts_with("start"),
                    _ => false,
                };
                if applies {
                    queries.push((flags.to_vec(), format!("{q}&")));
                }
            }
            for (flags, q) in queries {
                let mut args = vec!["report", cli_name, "--format", format];
                args.extend(flags);
                let cli_out = ok(gridops(&data, &args));
                let uri = format!("{path}?{q}format={format}");
                let resp = app.clone().oneshot(Request::get(&uri).body(Body::empty()).unwrap()).await.unwrap();
                assert_eq!(resp.status(), StatusCode::OK, "{uri}");
                let api_out = resp.into_body().collect().await.unwrap().to_bytes();
                assert_eq!(cli_out.as_bytes(), &api_out[..], "{uri} vs {args:?}");
            }
        }
    }
}
