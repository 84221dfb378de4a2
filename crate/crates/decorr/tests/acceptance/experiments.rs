//! Criteria that train networks on the synthetic cluster benchmark.

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use decorr::config::ExperimentConfig;
use decorr::runner::{load_splits, run_experiment, train_with, RunStatus, Splits, METRICS_FILE};
use decorr_core::diagnostics::CollapseReport;

use crate::oracle::median;
use crate::Verdict;

/// 10 Gaussian clusters in 32 dimensions, 500 per class for training and 100
/// held out; views differ by additive noise only.
const BENCHMARK: &[&str] = &[
    "dataset.kind=synthetic",
    "dataset.classes=10",
    "dataset.per_class=500",
    "dataset.test_per_class=100",
    "dataset.dim=32",
    "dataset.separation=4",
    "augment.kind=vector",
    "augment.noise_std=0.3",
    "augment.dropout=0.0",
    "augment.scale_range=[1.0,1.0]",
    "train.epochs=50",
    "train.base_lr=0.5",
    "diagnostics.cadence=0",
];

const SEEDS: [u64; 3] = [0, 1, 2];

const VANILLA: &[&str] = &["norm.kind=none"];
const BN: &[&str] = &["norm.kind=bn"];
const BN_AFFINE: &[&str] = &["norm.kind=bn", "norm.affine=true"];
const BN_EPS: &[&str] = &["norm.kind=bn", "norm.epsilon=0.1"];
const DBN2: &[&str] = &["norm.kind=dbn", "norm.group_size=2"];
const DBN4: &[&str] = &["norm.kind=dbn", "norm.group_size=4"];
const DBN8: &[&str] = &["norm.kind=dbn", "norm.group_size=8"];
const SDBN4: &[&str] = &["norm.kind=shuffled_dbn", "norm.group_size=4"];
const SDBN8: &[&str] = &["norm.kind=shuffled_dbn", "norm.group_size=8"];
const SDBN8_COS: &[&str] = &["norm.kind=shuffled_dbn", "norm.group_size=8", "objective=cosine_similarity"];

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub status: RunStatus,
    pub report: Option<CollapseReport>,
    pub elapsed: Duration,
}

impl RunSummary {
    fn collapsed(&self) -> bool {
        self.status == RunStatus::Collapsed
    }

    /// A collapsed run has lost all spread.
    fn mean_std(&self) -> f64 {
        match (&self.report, self.collapsed()) {
            (_, true) => 0.0,
            (Some(r), false) => r.mean_std,
            (None, false) => f64::NAN,
        }
    }

    fn avg_corr(&self) -> f64 {
        self.report.as_ref().and_then(|r| r.avg_corr).unwrap_or(f64::NAN)
    }

    fn rank(&self) -> f64 {
        self.report.as_ref().map_or(f64::NAN, |r| r.effective_rank as f64)
    }

    /// A collapsed run classifies at chance.
    fn knn(&self, classes: usize) -> f64 {
        match (&self.report, self.collapsed()) {
            (Some(r), false) => r.knn_acc.unwrap_or(f64::NAN),
            _ => 1.0 / classes as f64,
        }
    }
}

pub fn config(dim: usize, variant: &[&str], seed: u64) -> ExperimentConfig {
    let mut overrides: Vec<String> = BENCHMARK.iter().map(|s| s.to_string()).collect();
    overrides.push(format!("encoder.output_dim={dim}"));
    overrides.extend(variant.iter().map(|s| s.to_string()));
    overrides.push(format!("train.seed={seed}"));
    ExperimentConfig::from_toml_str("", &overrides).expect("benchmark config")
}

/// Runs each configuration once and remembers the outcome.
pub struct Lab {
    splits: Splits,
    classes: usize,
    runs: BTreeMap<String, RunSummary>,
}

impl Lab {
    pub fn new() -> Self {
        let cfg = config(2, BN, 0);
        let splits = load_splits(&cfg.dataset).expect("benchmark data");
        Lab {
            splits,
            classes: 10,
            runs: BTreeMap::new(),
        }
    }

    pub fn run(&mut self, dim: usize, variant: &[&str], seed: u64) -> RunSummary {
        let key = format!("D={dim} {} seed={seed}", variant.join(" "));
        if let Some(r) = self.runs.get(&key) {
            return r.clone();
        }
        let cfg = config(dim, variant, seed);
        let start = Instant::now();
        let outcome = train_with(&cfg, &self.splits, |_| Ok(())).expect("training run");
        let summary = RunSummary {
            status: outcome.status,
            report: outcome.final_report,
            elapsed: start.elapsed(),
        };
        self.runs.insert(key, summary.clone());
        summary
    }

    fn seeds(&mut self, dim: usize, variant: &[&str]) -> Vec<RunSummary> {
        SEEDS.iter().map(|&s| self.run(dim, variant, s)).collect()
    }

    fn median_of(&mut self, dim: usize, variant: &[&str], f: impl Fn(&RunSummary) -> f64) -> f64 {
        median(self.seeds(dim, variant).iter().map(f).collect())
    }

    fn median_knn(&mut self, dim: usize, variant: &[&str]) -> f64 {
        let classes = self.classes;
        self.median_of(dim, variant, |r| r.knn(classes))
    }

    pub fn slowest(&self) -> Duration {
        self.runs.values().map(|r| r.elapsed).max().unwrap_or_default()
    }

    pub fn total(&self) -> (usize, Duration) {
        (self.runs.len(), self.runs.values().map(|r| r.elapsed).sum())
    }
}

pub fn collapse_trichotomy(lab: &mut Lab) -> Verdict {
    let vanilla = lab.run(2, VANILLA, 0);
    let bn = lab.run(2, BN, 0);
    let dbn = lab.run(2, DBN2, 0);
    let slowest = [&vanilla, &bn, &dbn].iter().map(|r| r.elapsed).max().unwrap();
    let vanilla_ok = vanilla.collapsed() || vanilla.mean_std() < 0.05;
    let bn_ok = (0.9..=1.1).contains(&bn.mean_std()) && bn.avg_corr() > 0.9;
    let dbn_ok = dbn.avg_corr() < 0.05;
    Verdict::new(
        vanilla_ok && bn_ok && dbn_ok && slowest.as_secs_f64() <= 120.0,
        format!(
            "vanilla {:?} mean_std {:.1e}; bn mean_std {:.3} avg_corr {:.4}; dbn(G=2) avg_corr {:.1e}; slowest run {:.1}s",
            vanilla.status,
            vanilla.mean_std(),
            bn.mean_std(),
            bn.avg_corr(),
            dbn.avg_corr(),
            slowest.as_secs_f64()
        ),
    )
}

pub fn rank_separation(lab: &mut Lab) -> Verdict {
    let start = Instant::now();
    let bn = lab.run(32, BN, 0);
    let sdbn = lab.run(32, SDBN8, 0);
    let elapsed = start.elapsed().max(bn.elapsed + sdbn.elapsed);
    Verdict::new(
        bn.rank() <= 8.0 && sdbn.rank() >= 29.0 && elapsed.as_secs_f64() < 300.0,
        format!(
            "effective rank bn {} (<= 8), shuffled dbn(G=8) {} (>= 29); {:.1}s",
            bn.rank(),
            sdbn.rank(),
            elapsed.as_secs_f64()
        ),
    )
}

pub fn further_decorrelation(lab: &mut Lab) -> Verdict {
    let dbn_corr = lab.median_of(32, DBN4, RunSummary::avg_corr);
    let sdbn_corr = lab.median_of(32, SDBN4, RunSummary::avg_corr);
    let dbn_knn = lab.median_knn(32, DBN4);
    let sdbn_knn = lab.median_knn(32, SDBN4);
    Verdict::new(
        sdbn_corr < dbn_corr && sdbn_knn >= dbn_knn - 0.01,
        format!(
            "G=4, D=32 medians: avg_corr shuffled {sdbn_corr:.4} vs dbn {dbn_corr:.4}; \
             knn shuffled {sdbn_knn:.3} vs dbn {dbn_knn:.3}"
        ),
    )
}

pub fn utility_ordering(lab: &mut Lab) -> Verdict {
    let dbn = lab.median_knn(32, DBN8);
    let bn = lab.median_knn(32, BN);
    let vanilla = lab.median_knn(32, VANILLA);
    Verdict::new(
        dbn - bn >= 0.02 && bn - vanilla >= 0.02,
        format!("median knn dbn(G=8) {dbn:.3} > bn {bn:.3} > vanilla {vanilla:.3} (gaps >= 0.02)"),
    )
}

pub fn bn_setup_ablation(lab: &mut Lab) -> Verdict {
    let base_knn = lab.median_knn(32, BN);
    let mut parts = Vec::new();
    let mut ok = true;
    for (name, variant) in [("affine", BN_AFFINE), ("eps=0.1", BN_EPS)] {
        let std = lab.median_of(32, variant, RunSummary::mean_std);
        let knn = lab.median_knn(32, variant);
        ok &= std < 0.5 || knn <= base_knn - 0.10;
        parts.push(format!("{name}: mean_std {std:.1e}, knn {knn:.3}"));
    }
    Verdict::new(ok, format!("{}; baseline knn {base_knn:.3}", parts.join("; ")))
}

pub fn objective_contrast(lab: &mut Lab) -> Verdict {
    let se = lab.median_of(32, SDBN8, RunSummary::avg_corr);
    let cos = lab.median_of(32, SDBN8_COS, RunSummary::avg_corr);
    let ratio = cos / se;
    Verdict::new(
        ratio >= 2.0,
        format!("shuffled dbn(G=8) median avg_corr cosine {cos:.4} vs squared error {se:.4}, ratio {ratio:.2} (>= 2)"),
    )
}

pub fn determinism() -> Verdict {
    let dir = tempfile::tempdir().expect("tempdir");
    let mut identical = Vec::new();
    for (name, variant) in [("shuffled_dbn", SDBN8), ("vanilla", VANILLA)] {
        let mut cfg = config(32, variant, 11);
        cfg.train.epochs = 10;
        cfg.diagnostics.cadence = 2;
        let a = dir.path().join(format!("{name}-a"));
        let b = dir.path().join(format!("{name}-b"));
        run_experiment(&cfg, &a).expect("first run");
        run_experiment(&cfg, &b).expect("second run");
        let ma = std::fs::read(a.join(METRICS_FILE)).unwrap();
        let mb = std::fs::read(b.join(METRICS_FILE)).unwrap();
        identical.push((name, !ma.is_empty() && ma == mb));
    }
    Verdict::new(
        identical.iter().all(|(_, same)| *same),
        format!("metrics.csv byte-identical on re-run: {identical:?}"),
    )
}
