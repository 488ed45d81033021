//! Reception-interval statistics over fixed message windows, frame outcome
//! accounting, and CSV output.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

use thiserror::Error;

use crate::codec::RobotId;
use crate::sim::SimTime;

pub const DEFAULT_WINDOW: usize = 500;
pub const DEFAULT_WARMUP: usize = 20;

pub const CSV_HEADER: &str =
    "experiment,param,robot_id,n_intervals,mean_us,stddev_us,min_us,max_us,\
lost,corrupt_dropped,corrupt_delivered,bs_drops,seed";

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("window unsatisfied: {got} arrivals, need at least {needed}")]
    WindowUnsatisfied { got: usize, needed: usize },
    #[error("no statistics to write")]
    Empty,
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Terminal outcome counts for control frames addressed to one robot.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct FrameCounters {
    pub sent: u64,
    pub delivered: u64,
    pub lost: u64,
    pub corrupt_dropped: u64,
    pub corrupt_delivered: u64,
    pub bs_drops: u64,
}

impl FrameCounters {
    pub fn accounted(&self) -> u64 {
        self.delivered + self.lost + self.corrupt_dropped + self.corrupt_delivered + self.bs_drops
    }

    pub fn is_conserved(&self) -> bool {
        self.accounted() == self.sent
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeliveryStats {
    pub robot_id: RobotId,
    pub n_intervals: usize,
    pub mean: f64,
    /// Population standard deviation.
    pub stddev: f64,
    pub min: f64,
    pub max: f64,
    pub lost: u64,
    pub corrupt_dropped: u64,
    pub corrupt_delivered: u64,
    pub base_station_drops: u64,
}

impl DeliveryStats {
    pub fn with_counters(mut self, c: &FrameCounters) -> Self {
        self.lost = c.lost;
        self.corrupt_dropped = c.corrupt_dropped;
        self.corrupt_delivered = c.corrupt_delivered;
        self.base_station_drops = c.bs_drops;
        self
    }
}

/// Interval statistics over `arrivals[warmup ..= warmup + window]`.
///
/// If fewer arrivals remain after the warmup, all of them are used and
/// `n_intervals` reports how many intervals were actually measured.
pub fn compute_stats(
    robot_id: RobotId,
    arrivals: &[SimTime],
    window: usize,
    warmup: usize,
) -> Result<DeliveryStats, MetricsError> {
    let needed = warmup + 2;
    if arrivals.len() < needed {
        return Err(MetricsError::WindowUnsatisfied {
            got: arrivals.len(),
            needed,
        });
    }
    let end = arrivals.len().min(warmup + window + 1);
    let span = &arrivals[warmup..end];
    let intervals: Vec<f64> = span.windows(2).map(|w| (w[1] - w[0]) as f64).collect();
    let n = intervals.len() as f64;
    let mean = (span[span.len() - 1] - span[0]) as f64 / n;
    let var = intervals.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    let (min, max) = intervals
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| {
            (lo.min(x), hi.max(x))
        });
    Ok(DeliveryStats {
        robot_id,
        n_intervals: intervals.len(),
        mean,
        stddev: var.sqrt(),
        min,
        max,
        lost: 0,
        corrupt_dropped: 0,
        corrupt_delivered: 0,
        base_station_drops: 0,
    })
}

/// One CSV data row: a robot's stats within a labelled run.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvRow {
    pub experiment: String,
    pub param: f64,
    pub seed: u64,
    pub stats: DeliveryStats,
}

/// Renders header plus rows, ordered by `(param, robot_id, seed)`.
pub fn render_csv(rows: &[CsvRow]) -> Result<String, MetricsError> {
    if rows.is_empty() {
        return Err(MetricsError::Empty);
    }
    let mut sorted: Vec<&CsvRow> = rows.iter().collect();
    sorted.sort_by(|a, b| {
        a.param
            .total_cmp(&b.param)
            .then(a.stats.robot_id.cmp(&b.stats.robot_id))
            .then(a.seed.cmp(&b.seed))
    });
    let mut out = String::with_capacity(64 * (rows.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in sorted {
        let s = &r.stats;
        writeln!(
            out,
            "{},{:.2},{},{},{:.2},{:.2},{:.2},{:.2},{},{},{},{},{}",
            r.experiment,
            r.param,
            s.robot_id,
            s.n_intervals,
            s.mean,
            s.stddev,
            s.min,
            s.max,
            s.lost,
            s.corrupt_dropped,
            s.corrupt_delivered,
            s.base_station_drops,
            r.seed
        )
        .expect("writing to a String cannot fail");
    }
    Ok(out)
}

pub fn write_csv(path: &Path, rows: &[CsvRow]) -> Result<(), MetricsError> {
    write_csv_with_preamble(path, &[], rows)
}

/// Writes `#`-prefixed comment lines, then the CSV.
pub fn write_csv_with_preamble(
    path: &Path,
    preamble: &[String],
    rows: &[CsvRow],
) -> Result<(), MetricsError> {
    let body = render_csv(rows)?;
    let mut text = String::new();
    for line in preamble {
        text.push_str("# ");
        text.push_str(line);
        text.push('\n');
    }
    text.push_str(&body);
    fs::write(path, text)?;
    Ok(())
}

/// Fixed-width table for terminals.
pub fn summary_table(rows: &[CsvRow]) -> String {
    let mut out = format!(
        "{:<16} {:>10} {:>5} {:>6} {:>10} {:>10} {:>6} {:>6} {:>6} {:>6}\n",
        "experiment",
        "param",
        "robot",
        "n",
        "mean_us",
        "stddev_us",
        "lost",
        "crcdrp",
        "corrup",
        "bsdrop"
    );
    for r in rows {
        let s = &r.stats;
        let _ = writeln!(
            out,
            "{:<16} {:>10.2} {:>5} {:>6} {:>10.2} {:>10.2} {:>6} {:>6} {:>6} {:>6}",
            r.experiment,
            r.param,
            s.robot_id,
            s.n_intervals,
            s.mean,
            s.stddev,
            s.lost,
            s.corrupt_dropped,
            s.corrupt_delivered,
            s.base_station_drops
        );
    }
    out
}
