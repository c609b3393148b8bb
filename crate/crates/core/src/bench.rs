//! Per-epoch time and peak memory of full-batch training on Erdős–Rényi graphs.

use std::alloc::{GlobalAlloc, Layout, System};
use std::fmt::Write as _;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::diffmath::Matrix;
use crate::error::{invalid, Result};
use crate::graphstore::gen_er;
use crate::model::{init_model, GraphInput, ModelConfig, Stage};
use crate::training::{train_step, AdamConfig, AdamState, Batch};

/// System allocator wrapper that tracks live bytes and their high-water mark.
///
/// Install with `#[global_allocator] static ALLOC: PeakAlloc = PeakAlloc::new();`.
pub struct PeakAlloc {
    current: AtomicUsize,
    peak: AtomicUsize,
}

impl PeakAlloc {
    pub const fn new() -> Self {
        Self {
            current: AtomicUsize::new(0),
            peak: AtomicUsize::new(0),
        }
    }

    pub fn current(&self) -> usize {
        self.current.load(Ordering::Relaxed)
    }

    pub fn peak(&self) -> usize {
        self.peak.load(Ordering::Relaxed)
    }

    /// Lowers the high-water mark to the bytes live right now.
    pub fn reset_peak(&self) {
        self.peak.store(self.current(), Ordering::Relaxed);
    }

    fn grew(&self, bytes: usize) {
        let now = self.current.fetch_add(bytes, Ordering::Relaxed) + bytes;
        self.peak.fetch_max(now, Ordering::Relaxed);
    }
}

impl Default for PeakAlloc {
    fn default() -> Self {
        Self::new()
    }
}

unsafe impl GlobalAlloc for PeakAlloc {
    unsafe fn alloc(&self, layout: Layout) -> *mut u8 {
        let p = System.alloc(layout);
        if !p.is_null() {
            self.grew(layout.size());
        }
        p
    }

    unsafe fn alloc_zeroed(&self, layout: Layout) -> *mut u8 {
        let p = System.alloc_zeroed(layout);
        if !p.is_null() {
            self.grew(layout.size());
        }
        p
    }

    unsafe fn dealloc(&self, ptr: *mut u8, layout: Layout) {
        System.dealloc(ptr, layout);
        self.current.fetch_sub(layout.size(), Ordering::Relaxed);
    }

    unsafe fn realloc(&self, ptr: *mut u8, layout: Layout, new_size: usize) -> *mut u8 {
        let p = System.realloc(ptr, layout, new_size);
        if !p.is_null() {
            if new_size >= layout.size() {
                self.grew(new_size - layout.size());
            } else {
                self.current.fetch_sub(layout.size() - new_size, Ordering::Relaxed);
            }
        }
        p
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchConfig {
    pub n_list: Vec<usize>,
    /// Expected average degree; the edge probability is `degree / (n − 1)`.
    pub avg_degree: f64,
    /// Input feature width and hidden width.
    pub dim: usize,
    /// Timed epochs per size, after one untimed epoch.
    pub epochs: usize,
    pub heads: usize,
    pub local_layers: usize,
    pub global_layers: usize,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            n_list: vec![1000, 2000, 4000, 8000],
            avg_degree: 5.0,
            dim: 100,
            epochs: 3,
            heads: 4,
            local_layers: 1,
            global_layers: 1,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchRow {
    pub n: usize,
    pub m: usize,
    pub seconds_per_epoch: f64,
    /// Allocator high-water mark during the timed epochs, above the bytes
    /// live before them; zero when no tracker is supplied.
    pub peak_bytes: usize,
}

/// Full-batch training epochs on one ER graph per size in `cfg.n_list`.
pub fn run_bench(cfg: &BenchConfig, tracker: Option<&PeakAlloc>) -> Result<Vec<BenchRow>> {
    if cfg.epochs == 0 || cfg.dim == 0 || cfg.avg_degree < 0.0 {
        return Err(invalid("bench needs epochs >= 1, dim >= 1 and a non-negative degree"));
    }
    let mut rows = Vec::with_capacity(cfg.n_list.len());
    for &n in &cfg.n_list {
        if n < 2 {
            return Err(invalid(format!("bench sizes must be at least 2, got {n}")));
        }
        let p = (cfg.avg_degree / (n - 1) as f64).min(1.0);
        let graph = gen_er(n, p, cfg.seed ^ n as u64)?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let features = Matrix::random_uniform(n, cfg.dim, -1.0, 1.0, &mut rng);
        let labels: Vec<i64> = (0..n as i64).map(|i| i % 2).collect();
        let mask: Vec<usize> = (0..n).collect();
        let config = ModelConfig::new(cfg.dim, cfg.dim, cfg.local_layers, cfg.global_layers, cfg.heads, 2);
        let mut model = init_model(&config, cfg.seed)?;
        let input = GraphInput::new(&graph, &config)?;
        let batch = Batch {
            input: &input,
            features: &features,
            labels: &labels,
            mask: &mask,
        };
        let adam = AdamConfig::default();
        let mut state = AdamState::default();
        train_step(&mut model, &batch, Stage::Full, None, &mut state, &adam)?;

        let base = tracker.map_or(0, |t| {
            t.reset_peak();
            t.current()
        });
        let start = Instant::now();
        for _ in 0..cfg.epochs {
            train_step(&mut model, &batch, Stage::Full, None, &mut state, &adam)?;
        }
        let seconds_per_epoch = start.elapsed().as_secs_f64() / cfg.epochs as f64;
        let peak_bytes = tracker.map_or(0, |t| t.peak().saturating_sub(base));
        rows.push(BenchRow {
            n,
            m: graph.num_edges(),
            seconds_per_epoch,
            peak_bytes,
        });
    }
    Ok(rows)
}

/// CSV with header `n,m,seconds_per_epoch,peak_bytes`.
pub fn bench_csv(rows: &[BenchRow]) -> String {
    let mut s = String::from("n,m,seconds_per_epoch,peak_bytes\n");
    for r in rows {
        writeln!(s, "{},{},{},{}", r.n, r.m, r.seconds_per_epoch, r.peak_bytes).unwrap();
    }
    s
}

/// Least-squares line `y ≈ a + b·x`.
pub fn linear_fit(points: &[(f64, f64)]) -> Result<(f64, f64)> {
    let k = points.len() as f64;
    if points.len() < 2 {
        return Err(invalid("linear fit needs at least two points"));
    }
    let mx = points.iter().map(|p| p.0).sum::<f64>() / k;
    let my = points.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(invalid("linear fit needs two distinct x values"));
    }
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let b = sxy / sxx;
    Ok((my - b * mx, b))
}

/// Largest `max(y / ŷ, ŷ / y)` of the points against their own linear fit.
pub fn linear_fit_ratio(points: &[(f64, f64)]) -> Result<f64> {
    let (a, b) = linear_fit(points)?;
    let mut worst: f64 = 1.0;
    for &(x, y) in points {
        let fit = a + b * x;
        if fit <= 0.0 || y <= 0.0 {
            return Ok(f64::INFINITY);
        }
        worst = worst.max(y / fit).max(fit / y);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fit_recovers_line() {
        let pts = [(1.0, 3.0), (2.0, 5.0), (4.0, 9.0)];
        let (a, b) = linear_fit(&pts).unwrap();
        assert!((a - 1.0).abs() < 1e-12 && (b - 2.0).abs() < 1e-12);
        assert!((linear_fit_ratio(&pts).unwrap() - 1.0).abs() < 1e-12);
        let quad = [(1.0, 1.0), (2.0, 4.0), (4.0, 16.0), (8.0, 64.0)];
        assert!(linear_fit_ratio(&quad).unwrap() > 1.5);
    }

    #[test]
    fn small_bench_runs() {
        let cfg = BenchConfig {
            n_list: vec![50, 100],
            dim: 8,
            epochs: 1,
            heads: 2,
            ..BenchConfig::default()
        };
        let rows = run_bench(&cfg, None).unwrap();
        assert_eq!(rows.len(), 2);
        assert!(rows.iter().all(|r| r.seconds_per_epoch > 0.0 && r.peak_bytes == 0));
        assert!(bench_csv(&rows).starts_with("n,m,seconds_per_epoch,peak_bytes\n50,"));
    }
}
