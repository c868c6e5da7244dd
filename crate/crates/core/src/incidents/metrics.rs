use std::collections::BTreeMap;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::{Ticket, TicketKind};
use crate::types::{Timestamp, Window, MINUTES_PER_DAY, MINUTES_PER_WEEK};

/// Calendar month of a timestamp, counting minutes from 1970-01-01T00:00Z.
pub fn month_of(at: Timestamp) -> String {
    let secs = i64::try_from(at.saturating_mul(60)).unwrap_or(i64::MAX);
    DateTime::<Utc>::from_timestamp(secs, 0)
        .map(|d| d.format("%Y-%m").to_string())
        .unwrap_or_else(|| "out-of-range".to_owned())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub month: String,
    pub kind: TicketKind,
    pub count: usize,
}

/// Means cover tickets solved inside the window and are `None` when there
/// are none; the histogram counts tickets opened inside it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupportMetrics {
    pub window: Window,
    pub opened: usize,
    pub solved: usize,
    pub tickets_per_week: f64,
    #[serde(with = "undefined_mean")]
    pub mean_days_to_solve: Option<f64>,
    #[serde(with = "undefined_mean")]
    pub mean_steps: Option<f64>,
    #[serde(with = "undefined_mean")]
    pub mean_people: Option<f64>,
    /// Sorted by month, then kind.
    pub histogram: Vec<HistogramBin>,
}

/// An empty mean serializes as the string `"undefined"`, never as a number or null.
mod undefined_mean {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
        match v {
            Some(x) => s.serialize_f64(*x),
            None => s.serialize_str("undefined"),
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Number(f64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<f64>, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Number(x) => Ok(Some(x)),
            Repr::Text(t) if t == "undefined" => Ok(None),
            Repr::Text(t) => Err(serde::de::Error::custom(format!("expected a number or \"undefined\", got {t:?}"))),
        }
    }
}

fn undefined_or(v: Option<f64>) -> String {
    v.map_or_else(|| "undefined".to_owned(), |x| x.to_string())
}

impl SupportMetrics {
    pub fn to_csv(&self) -> String {
        format!(
            "metric,value\n\
             window_start,{}\n\
             window_end,{}\n\
             opened,{}\n\
             solved,{}\n\
             tickets_per_week,{}\n\
             mean_days_to_solve,{}\n\
             mean_steps,{}\n\
             mean_people,{}\n",
            self.window.start,
            self.window.end,
            self.opened,
            self.solved,
            self.tickets_per_week,
            undefined_or(self.mean_days_to_solve),
            undefined_or(self.mean_steps),
            undefined_or(self.mean_people),
        )
    }

    /// Month rows by ticket-kind columns.
    pub fn histogram_csv(&self) -> String {
        let mut rows: BTreeMap<&str, [usize; 5]> = BTreeMap::new();
        for b in &self.histogram {
            let col = TicketKind::ALL.iter().position(|k| *k == b.kind).expect("known kind");
            rows.entry(b.month.as_str()).or_default()[col] += b.count;
        }
        let mut out = String::from("month,SE,CE,WMS,User,Other\n");
        for (month, counts) in rows {
            let cells: Vec<String> = counts.iter().map(|c| c.to_string()).collect();
            out.push_str(&format!("{month},{}\n", cells.join(",")));
        }
        out
    }
}

pub fn compute_support_metrics(tickets: &[Ticket], window: &Window) -> SupportMetrics {
    let opened: Vec<&Ticket> = tickets.iter().filter(|t| window.contains(t.opened_at)).collect();
    let solved: Vec<(&Ticket, Timestamp)> = tickets
        .iter()
        .filter_map(|t| t.closed_at.filter(|c| window.contains(*c)).map(|c| (t, c)))
        .collect();

    let mean = |f: &dyn Fn(&Ticket, Timestamp) -> f64| {
        (!solved.is_empty())
            .then(|| solved.iter().map(|(t, c)| f(t, *c)).sum::<f64>() / solved.len() as f64)
    };

    let mut bins: BTreeMap<(String, TicketKind), usize> = BTreeMap::new();
    for t in &opened {
        *bins.entry((month_of(t.opened_at), t.kind)).or_default() += 1;
    }

    SupportMetrics {
        window: *window,
        opened: opened.len(),
        solved: solved.len(),
        tickets_per_week: opened.len() as f64 * MINUTES_PER_WEEK as f64 / window.len() as f64,
        mean_days_to_solve: mean(&|t, c| (c - t.opened_at) as f64 / MINUTES_PER_DAY as f64),
        mean_steps: mean(&|t, _| t.steps.len() as f64),
        mean_people: mean(&|t, _| t.participants.len() as f64),
        histogram: bins
            .into_iter()
            .map(|((month, kind), count)| HistogramBin { month, kind, count })
            .collect(),
    }
}
