//! Post-hoc metrics over campaign logs.
//!
//! Four families of numbers, computed from the JSONL records a validator
//! wrote:
//!
//! * validity: overall percentage and a time-bucketed cumulative series;
//! * throughput: records per second over the log's time span;
//! * diversity: mean pairwise edit distance and mean normalized longest
//!   common subsequence (NLCS) under a sample-and-repeat protocol;
//! * cross-campaign aggregation: mean and population standard deviation per
//!   metric.
//!
//! Diversity comparisons operate on the lowercase hex strings as logged
//! (two characters per byte); that representation is normative for the
//! metric values. Edit distance is averaged over unordered sample pairs
//! (it is symmetric); NLCS is averaged over ordered pairs with the first
//! element as the reference, since it is not.

use crate::validator::{read_records, InputRecord, LogError};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use std::collections::{BTreeMap, HashMap};
use std::io::Write;
use std::num::NonZeroU64;
use std::path::Path;
use thiserror::Error;

/// Default series resolution: ten-minute buckets.
pub const DEFAULT_BUCKET_SECONDS: NonZeroU64 = match NonZeroU64::new(600) {
    Some(v) => v,
    None => unreachable!(),
};

/// Default diversity protocol: sample 100, repeat 10 times.
pub const DEFAULT_SAMPLE_SIZE: usize = 100;
pub const DEFAULT_REPETITIONS: usize = 10;

#[derive(Debug, Error)]
pub enum AnalyzerError {
    #[error("nlcs reference sequence is empty")]
    EmptyReference,
    #[error("diversity needs at least 2 usable records, found {0}")]
    TooFewRecords(usize),
    #[error("diversity sampling needs sample_size >= 2 and repetitions >= 1")]
    InvalidSampling,
    #[error(transparent)]
    Log(#[from] LogError),
}

/// Levenshtein distance between two sequences: the minimum number of
/// single-element insertions, deletions, and substitutions turning `a`
/// into `b`. Distance to the empty sequence is the other's length.
pub fn edit_distance(a: &[u8], b: &[u8]) -> usize {
    if a.is_empty() {
        return b.len();
    }
    if b.is_empty() {
        return a.len();
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut curr: Vec<usize> = vec![0; b.len() + 1];
    for (i, &ca) in a.iter().enumerate() {
        curr[0] = i + 1;
        for (j, &cb) in b.iter().enumerate() {
            let substitute = prev[j] + usize::from(ca != cb);
            curr[j + 1] = substitute.min(prev[j + 1] + 1).min(curr[j] + 1);
        }
        std::mem::swap(&mut prev, &mut curr);
    }
    prev[b.len()]
}

/// Length of the longest common subsequence of `a` and `b`.
pub fn lcs_len(a: &[u8], b: &[u8]) -> usize {
    if a.is_empty() || b.is_empty() {
        return 0;
    }
    let mut prev: Vec<usize> = vec![0; b.len() + 1];
    let mut curr: Vec<usize> = vec![0; b.len() + 1];
    for &ca in a {
        for (j, &cb) in b.iter().enumerate() {
            curr[j + 1] = if ca == cb {
                prev[j] + 1
            } else {
                prev[j + 1].max(curr[j])
            };
        }
        std::mem::swap(&mut prev, &mut curr);
    }
    prev[b.len()]
}

/// Normalized LCS with `a` as the reference: `|lcs(a, b)| / |a|`.
///
/// Asymmetric by design; 1.0 exactly when all of `a` appears in `b` in
/// order. The empty reference has no defined value.
pub fn nlcs(a: &[u8], b: &[u8]) -> Result<f64, AnalyzerError> {
    if a.is_empty() {
        return Err(AnalyzerError::EmptyReference);
    }
    Ok(lcs_len(a, b) as f64 / a.len() as f64)
}

/// Mean pairwise dissimilarity of one population under the sampling
/// protocol.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairwiseMeans {
    pub edit_dist_mean: f64,
    pub nlcs_mean: f64,
    /// Ordered pairs dropped because one side was empty (NLCS needs a
    /// non-empty reference); summed across repetitions.
    pub skipped_nlcs_pairs: u64,
}

/// Diversity of a campaign's inputs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiversityStats {
    pub edit_dist_mean: f64,
    pub nlcs_mean: f64,
    pub sample_size: usize,
    pub repetitions: usize,
    pub skipped_nlcs_pairs: u64,
    /// The same means over valid records only; present when at least two
    /// exist and the main population was not already valid-only.
    pub valid_only: Option<PairwiseMeans>,
}

/// Sample-and-repeat pairwise diversity.
///
/// Per repetition: draw `min(sample_size, population)` records uniformly
/// without replacement, average `edit_distance` over the unordered sample
/// pairs and `nlcs` over the ordered ones, then average the repetition
/// means. `valid_only` restricts the population to valid records; when it
/// is off, the valid-only restriction is additionally reported as a
/// variant. Fixed `rng_seed` gives bit-identical results.
pub fn diversity(
    records: &[InputRecord],
    sample_size: usize,
    repetitions: usize,
    rng_seed: u64,
    valid_only: bool,
) -> Result<DiversityStats, AnalyzerError> {
    let pool: Vec<&str> = records
        .iter()
        .filter(|r| !valid_only || r.valid)
        .map(|r| r.hex.as_str())
        .collect();
    let main = pairwise_means(&pool, sample_size, repetitions, rng_seed)?;

    let valid_variant = if valid_only {
        None
    } else {
        let valid_pool: Vec<&str> = records
            .iter()
            .filter(|r| r.valid)
            .map(|r| r.hex.as_str())
            .collect();
        if valid_pool.len() >= 2 {
            Some(pairwise_means(
                &valid_pool,
                sample_size,
                repetitions,
                rng_seed,
            )?)
        } else {
            None
        }
    };

    Ok(DiversityStats {
        edit_dist_mean: main.edit_dist_mean,
        nlcs_mean: main.nlcs_mean,
        sample_size,
        repetitions,
        skipped_nlcs_pairs: main.skipped_nlcs_pairs,
        valid_only: valid_variant,
    })
}

fn pairwise_means(
    pool: &[&str],
    sample_size: usize,
    repetitions: usize,
    rng_seed: u64,
) -> Result<PairwiseMeans, AnalyzerError> {
    if sample_size < 2 || repetitions == 0 {
        return Err(AnalyzerError::InvalidSampling);
    }
    if pool.len() < 2 {
        return Err(AnalyzerError::TooFewRecords(pool.len()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    // Pair values keyed by canonical population indices; repetitions of a
    // small population revisit pairs, so computed distances are kept.
    let mut cache: HashMap<(usize, usize), (usize, usize)> = HashMap::new();

    let mut edit_rep_means = Vec::with_capacity(repetitions);
    let mut nlcs_rep_means = Vec::with_capacity(repetitions);
    let mut skipped_total = 0u64;

    for _ in 0..repetitions {
        let k = sample_size.min(pool.len());
        let sample = rand::seq::index::sample(&mut rng, pool.len(), k).into_vec();

        let canon = |x: usize, y: usize| (x.min(y), x.max(y));
        let mut missing: Vec<(usize, usize)> = Vec::new();
        for i in 0..k {
            for j in i + 1..k {
                let key = canon(sample[i], sample[j]);
                if !cache.contains_key(&key) {
                    missing.push(key);
                }
            }
        }
        // Deterministic despite the parallelism: values land back in the
        // order of `missing`, and means are accumulated sequentially below.
        let computed: Vec<((usize, usize), (usize, usize))> = missing
            .par_iter()
            .map(|&(x, y)| {
                let a = pool[x].as_bytes();
                let b = pool[y].as_bytes();
                ((x, y), (edit_distance(a, b), lcs_len(a, b)))
            })
            .collect();
        cache.extend(computed);

        let mut edit_sum = 0.0;
        let mut edit_pairs = 0u64;
        for i in 0..k {
            for j in i + 1..k {
                edit_sum += cache[&canon(sample[i], sample[j])].0 as f64;
                edit_pairs += 1;
            }
        }
        edit_rep_means.push(edit_sum / edit_pairs as f64);

        let mut nlcs_sum = 0.0;
        let mut nlcs_pairs = 0u64;
        let mut skipped = 0u64;
        for i in 0..k {
            for j in 0..k {
                if i == j {
                    continue;
                }
                let reference = pool[sample[i]];
                let other = pool[sample[j]];
                if reference.is_empty() || other.is_empty() {
                    skipped += 1;
                    continue;
                }
                let lcs = cache[&canon(sample[i], sample[j])].1;
                nlcs_sum += lcs as f64 / reference.len() as f64;
                nlcs_pairs += 1;
            }
        }
        nlcs_rep_means.push(if nlcs_pairs > 0 {
            nlcs_sum / nlcs_pairs as f64
        } else {
            0.0
        });
        skipped_total += skipped;
    }

    Ok(PairwiseMeans {
        edit_dist_mean: mean(&edit_rep_means),
        nlcs_mean: mean(&nlcs_rep_means),
        skipped_nlcs_pairs: skipped_total,
    })
}

/// One bucket of the validity-over-time series.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeriesPoint {
    pub bucket_index: u64,
    pub inputs_in_bucket: u64,
    pub valid_in_bucket: u64,
    /// 100 x (valid so far) / (inputs so far), through this bucket.
    pub cumulative_valid_percent: f64,
}

/// Cumulative validity percentage over time.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValiditySeries {
    pub bucket_seconds: NonZeroU64,
    pub points: Vec<SeriesPoint>,
}

/// Bucket records by `floor((timestamp - first) / bucket_seconds)` and
/// report cumulative validity at each bucket, including empty buckets
/// between occupied ones. Empty input yields an empty series.
pub fn validity_series(records: &[InputRecord], bucket_seconds: NonZeroU64) -> ValiditySeries {
    let mut sorted: Vec<&InputRecord> = records.iter().collect();
    sorted.sort_by_key(|r| r.timestamp);

    let mut points = Vec::new();
    if let Some(first) = sorted.first() {
        let start_ms = first.timestamp.timestamp_millis();
        let bucket_ms = bucket_seconds.get() as i64 * 1000;
        let bucket_of =
            |r: &InputRecord| ((r.timestamp.timestamp_millis() - start_ms) / bucket_ms) as u64;

        let last_bucket = bucket_of(sorted.last().expect("non-empty"));
        let mut iter = sorted.iter().peekable();
        let mut seen = 0u64;
        let mut seen_valid = 0u64;
        for bucket_index in 0..=last_bucket {
            let mut inputs_in_bucket = 0u64;
            let mut valid_in_bucket = 0u64;
            while let Some(r) = iter.peek() {
                if bucket_of(r) != bucket_index {
                    break;
                }
                inputs_in_bucket += 1;
                valid_in_bucket += u64::from(r.valid);
                iter.next();
            }
            seen += inputs_in_bucket;
            seen_valid += valid_in_bucket;
            points.push(SeriesPoint {
                bucket_index,
                inputs_in_bucket,
                valid_in_bucket,
                cumulative_valid_percent: percent(seen_valid, seen),
            });
        }
    }
    ValiditySeries {
        bucket_seconds,
        points,
    }
}

fn percent(part: u64, whole: u64) -> f64 {
    if whole == 0 {
        0.0
    } else {
        100.0 * part as f64 / whole as f64
    }
}

fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        0.0
    } else {
        values.iter().sum::<f64>() / values.len() as f64
    }
}

/// Mean and population standard deviation of one metric across runs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AggregateStat {
    pub mean: f64,
    pub stddev: f64,
}

/// Population statistics: the denominator is the run count, not `n - 1`,
/// since the runs are the whole set being described.
pub fn mean_and_stddev(values: &[f64]) -> AggregateStat {
    let m = mean(values);
    let variance = mean(&values.iter().map(|v| (v - m) * (v - m)).collect::<Vec<_>>());
    AggregateStat {
        mean: m,
        stddev: variance.sqrt(),
    }
}

/// Everything measured about one campaign log.
#[derive(Debug, Clone, Serialize)]
pub struct CampaignMetrics {
    pub campaign_id: String,
    pub records: u64,
    pub valid: u64,
    pub crashes: u64,
    pub valid_percent: f64,
    /// Records per second over the log's own time span (first to last
    /// timestamp); zero when the span is empty.
    pub throughput: f64,
    pub series: ValiditySeries,
    /// Absent when fewer than two records exist to compare.
    pub diversity: Option<DiversityStats>,
}

/// Full analysis output: per-campaign metrics plus cross-campaign mean and
/// population standard deviation for each scalar metric.
#[derive(Debug, Clone, Serialize)]
pub struct MetricsReport {
    pub campaigns: Vec<CampaignMetrics>,
    pub aggregate: BTreeMap<String, AggregateStat>,
}

/// Analysis tuning.
#[derive(Debug, Clone, Copy)]
pub struct AnalyzeOptions {
    pub bucket_seconds: NonZeroU64,
    pub sample_size: usize,
    pub repetitions: usize,
    pub rng_seed: u64,
}

impl Default for AnalyzeOptions {
    fn default() -> Self {
        AnalyzeOptions {
            bucket_seconds: DEFAULT_BUCKET_SECONDS,
            sample_size: DEFAULT_SAMPLE_SIZE,
            repetitions: DEFAULT_REPETITIONS,
            rng_seed: 0,
        }
    }
}

/// Metrics for one campaign's records. `fallback_id` names campaigns whose
/// logs are empty.
pub fn campaign_metrics(
    records: &[InputRecord],
    fallback_id: &str,
    options: &AnalyzeOptions,
) -> Result<CampaignMetrics, AnalyzerError> {
    let campaign_id = records
        .first()
        .map(|r| r.campaign_id.clone())
        .unwrap_or_else(|| fallback_id.to_string());
    let valid = records.iter().filter(|r| r.valid).count() as u64;
    let crashes = records.iter().filter(|r| r.crashed).count() as u64;
    let total = records.len() as u64;

    let throughput = match (
        records.iter().map(|r| r.timestamp).min(),
        records.iter().map(|r| r.timestamp).max(),
    ) {
        (Some(first), Some(last)) if last > first => {
            let span = (last - first).num_milliseconds() as f64 / 1000.0;
            total as f64 / span
        }
        _ => 0.0,
    };

    let diversity = match diversity(
        records,
        options.sample_size,
        options.repetitions,
        options.rng_seed,
        false,
    ) {
        Ok(stats) => Some(stats),
        Err(AnalyzerError::TooFewRecords(_)) => None,
        Err(e) => return Err(e),
    };

    Ok(CampaignMetrics {
        campaign_id,
        records: total,
        valid,
        crashes,
        valid_percent: percent(valid, total),
        throughput,
        series: validity_series(records, options.bucket_seconds),
        diversity,
    })
}

/// Build the cross-campaign aggregate table.
pub fn aggregate(campaigns: &[CampaignMetrics]) -> BTreeMap<String, AggregateStat> {
    let mut table = BTreeMap::new();
    let mut put = |name: &str, values: Vec<f64>| {
        if !values.is_empty() {
            table.insert(name.to_string(), mean_and_stddev(&values));
        }
    };
    put(
        "valid_percent",
        campaigns.iter().map(|c| c.valid_percent).collect(),
    );
    put(
        "throughput",
        campaigns.iter().map(|c| c.throughput).collect(),
    );
    put(
        "edit_dist_mean",
        campaigns
            .iter()
            .filter_map(|c| c.diversity.as_ref().map(|d| d.edit_dist_mean))
            .collect(),
    );
    put(
        "nlcs_mean",
        campaigns
            .iter()
            .filter_map(|c| c.diversity.as_ref().map(|d| d.nlcs_mean))
            .collect(),
    );
    table
}

/// Analyze one log file per campaign.
pub fn analyze_logs(paths: &[impl AsRef<Path>], options: &AnalyzeOptions) -> Result<MetricsReport, AnalyzerError> {
    let mut campaigns = Vec::with_capacity(paths.len());
    for path in paths {
        let path = path.as_ref();
        let records = read_records(path)?;
        let fallback = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| path.display().to_string());
        campaigns.push(campaign_metrics(&records, &fallback, options)?);
    }
    let aggregate = aggregate(&campaigns);
    Ok(MetricsReport {
        campaigns,
        aggregate,
    })
}

/// Full report as pretty-printed JSON.
pub fn write_json<W: Write>(report: &MetricsReport, mut w: W) -> std::io::Result<()> {
    serde_json::to_writer_pretty(&mut w, report)?;
    writeln!(w)
}

/// Report as `campaign,metric,value` rows; aggregate rows use the campaign
/// name `(aggregate)` with `_mean`/`_stddev` metric suffixes.
pub fn write_csv<W: Write>(report: &MetricsReport, w: W) -> Result<(), csv::Error> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["campaign", "metric", "value"])?;
    for c in &report.campaigns {
        let mut row = |metric: &str, value: String| -> Result<(), csv::Error> {
            out.write_record([c.campaign_id.as_str(), metric, value.as_str()])
        };
        row("records", c.records.to_string())?;
        row("valid", c.valid.to_string())?;
        row("crashes", c.crashes.to_string())?;
        row("valid_percent", c.valid_percent.to_string())?;
        row("throughput", c.throughput.to_string())?;
        if let Some(d) = &c.diversity {
            row("edit_dist_mean", d.edit_dist_mean.to_string())?;
            row("nlcs_mean", d.nlcs_mean.to_string())?;
            if let Some(v) = &d.valid_only {
                row("valid_edit_dist_mean", v.edit_dist_mean.to_string())?;
                row("valid_nlcs_mean", v.nlcs_mean.to_string())?;
            }
        }
    }
    for (metric, stat) in &report.aggregate {
        out.write_record(["(aggregate)", &format!("{metric}_mean"), &stat.mean.to_string()])?;
        out.write_record([
            "(aggregate)",
            &format!("{metric}_stddev"),
            &stat.stddev.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// Validity series in gnuplot-friendly TSV: one block per campaign,
/// blocks separated by blank lines (usable with `index`).
pub fn write_series_tsv<W: Write>(report: &MetricsReport, mut w: W) -> std::io::Result<()> {
    writeln!(
        w,
        "# campaign\tbucket_index\tbucket_start_s\tinputs\tvalid\tcumulative_valid_percent"
    )?;
    for (i, c) in report.campaigns.iter().enumerate() {
        if i > 0 {
            writeln!(w)?;
        }
        for p in &c.series.points {
            writeln!(
                w,
                "{}\t{}\t{}\t{}\t{}\t{}",
                c.campaign_id,
                p.bucket_index,
                p.bucket_index * c.series.bucket_seconds.get(),
                p.inputs_in_bucket,
                p.valid_in_bucket,
                p.cumulative_valid_percent
            )?;
        }
    }
    Ok(())
}
