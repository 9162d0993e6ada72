//! Grid-MRF image denoising: synthetic data generation by Gibbs sampling
//! from a known smoothness prior, residual-BP inference, and the combined
//! learning-plus-inference pipeline over the shared smoothing parameters.

use std::sync::Arc;
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::bp::{build_grid, BpEdgeData, BpUpdate, BpVertexData, LAMBDA_KEY};
use super::gibbs::{laplace_coupling, GibbsEdgeData, GibbsUpdate, GibbsVertexData};
use super::param_learn::{
    empirical_stats_sync, lambda_learning_sync, smoothing_sync, EMPIRICAL_KEY, SMOOTHING_KEY,
};
use crate::consistency::ConsistencyModel;
use crate::engine::{Engine, EngineConfig, RunError, RunStats};
use crate::graph::{DataGraph, SharedDataTable, VertexId};
use crate::scalar::{real, Real};
use crate::scheduling::{FunctionId, SchedulerKind, SchedulerSpec, Task};

pub const BP_FN: FunctionId = FunctionId(0);
const GIBBS_FN: FunctionId = FunctionId(0);

#[derive(Debug, Clone)]
pub struct SyntheticGrid<F> {
    pub width: usize,
    pub height: usize,
    pub labels: usize,
    /// Ground-truth label per pixel, sampled from the prior MRF.
    pub truth: Vec<usize>,
    /// Noisy observation per pixel, in label units, clamped to [0, K-1].
    pub noisy: Vec<F>,
}

/// Samples a ground-truth labeling from the smoothness prior with the
/// given per-axis parameters (chromatic Gibbs on the two-colorable grid),
/// then adds Gaussian observation noise.
pub fn synthetic_grid<F: Real>(
    width: usize,
    height: usize,
    labels: usize,
    true_lambda: [F; 2],
    sigma: F,
    seed: u64,
) -> SyntheticGrid<F> {
    let mut g: DataGraph<GibbsVertexData<F>, GibbsEdgeData<F>> = DataGraph::new();
    for y in 0..height {
        for x in 0..width {
            let v = VertexId((y * width + x) as u32);
            let mut data = GibbsVertexData::new(vec![F::one(); labels], seed, v);
            // Grids are two-colorable by parity; assign directly.
            data.color = ((x + y) % 2) as u32;
            // Scatter the initial samples so mixing starts from noise.
            data.current_sample = ((x * 7 + y * 13 + seed as usize) % labels).min(labels - 1);
            g.add_vertex(data).unwrap();
        }
    }
    let id = |x: usize, y: usize| VertexId((y * width + x) as u32);
    let horizontal = laplace_coupling(labels, true_lambda[0]);
    let vertical = laplace_coupling(labels, true_lambda[1]);
    for y in 0..height {
        for x in 0..width {
            if x + 1 < width {
                g.add_edge(
                    id(x, y),
                    id(x + 1, y),
                    GibbsEdgeData {
                        coupling: horizontal.clone(),
                    },
                )
                .unwrap();
            }
            if y + 1 < height {
                g.add_edge(
                    id(x, y),
                    id(x, y + 1),
                    GibbsEdgeData {
                        coupling: vertical.clone(),
                    },
                )
                .unwrap();
            }
        }
    }
    g.freeze();

    let graph = Arc::new(g);
    let mut eng = Engine::new(
        Arc::clone(&graph),
        Arc::new(SharedDataTable::new()),
        EngineConfig::new(
            std::thread::available_parallelism().map(|p| p.get().min(4)).unwrap_or(1),
            ConsistencyModel::Vertex,
        ),
    );
    eng.register_update(GIBBS_FN, Arc::new(GibbsUpdate));
    let sets: Vec<(Vec<VertexId>, FunctionId)> = (0..2)
        .map(|color| {
            (
                graph
                    .vertex_ids()
                    .filter(|&v| graph.vertex_data(v).color == color)
                    .collect(),
                GIBBS_FN,
            )
        })
        .collect();
    // One engine invocation per sweep keeps plans small; samples and RNG
    // streams persist across invocations.
    for _ in 0..40 {
        eng.run(
            &SchedulerSpec::Set {
                sequence: sets.clone(),
                compile_model: ConsistencyModel::Edge,
            },
            &[],
        )
        .expect("prior sampling run");
    }
    drop(eng);

    let truth: Vec<usize> = graph
        .vertex_ids()
        .map(|v| graph.vertex_data(v).current_sample)
        .collect();
    let mut noise_rng = ChaCha8Rng::seed_from_u64(seed ^ 0xD00D_F00D);
    let gauss = |rng: &mut ChaCha8Rng| {
        let u1: f64 = rng.random::<f64>().max(1e-12);
        let u2: f64 = rng.random();
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    };
    let max_label = labels as f64 - 1.0;
    let noisy = truth
        .iter()
        .map(|&t| {
            let x = t as f64 + gauss(&mut noise_rng) * sigma.to_f64().unwrap_or(0.0);
            real::<F>(x.clamp(0.0, max_label))
        })
        .collect();
    SyntheticGrid {
        width,
        height,
        labels,
        truth,
        noisy,
    }
}

pub type BpEngine<F> = Engine<BpVertexData<F>, BpEdgeData<F>>;

/// Assembles a BP engine over a grid of observations.
pub fn make_engine<F: Real>(
    observations: &[F],
    width: usize,
    height: usize,
    labels: usize,
    sigma: F,
    lambda0: Vec<F>,
    workers: usize,
    model: ConsistencyModel,
    residual_bound: F,
) -> BpEngine<F> {
    let graph = Arc::new(build_grid(observations, width, height, labels, sigma));
    let table = Arc::new(SharedDataTable::new());
    table.set(LAMBDA_KEY, lambda0);
    let mut eng = Engine::new(graph, table, EngineConfig::new(workers, model));
    eng.register_update(BP_FN, Arc::new(BpUpdate::new(BP_FN, residual_bound)));
    eng
}

pub fn seed_all<F: Real>(engine: &BpEngine<F>) -> Vec<Task> {
    engine
        .graph()
        .vertex_ids()
        .map(|v| Task::with_priority(v, BP_FN, f64::INFINITY))
        .collect()
}

/// One inference run under the chosen scheduler kind. Dynamic kinds are
/// seeded with every vertex; generated kinds sweep `sweeps` times; the set
/// kind runs parity color sets compiled under edge exclusion.
pub fn infer<F: Real>(
    engine: &BpEngine<F>,
    kind: SchedulerKind,
    sweeps: usize,
    width: usize,
) -> Result<RunStats, RunError> {
    let spec = scheduler_spec_for(engine, kind, sweeps, width);
    match kind {
        SchedulerKind::Synchronous
        | SchedulerKind::RoundRobin
        | SchedulerKind::Set => engine.run(&spec, &[]),
        _ => engine.run(&spec, &seed_all(engine)),
    }
}

fn scheduler_spec_for<F: Real>(
    engine: &BpEngine<F>,
    kind: SchedulerKind,
    sweeps: usize,
    width: usize,
) -> SchedulerSpec {
    match kind {
        SchedulerKind::Synchronous => SchedulerSpec::Synchronous {
            function: BP_FN,
            sweeps,
        },
        SchedulerKind::RoundRobin => SchedulerSpec::RoundRobin {
            function: BP_FN,
            sweeps,
        },
        SchedulerKind::FifoSingle => SchedulerSpec::FifoSingle,
        SchedulerKind::FifoMultiQueue => SchedulerSpec::FifoMultiQueue,
        SchedulerKind::FifoPartitioned => SchedulerSpec::FifoPartitioned,
        SchedulerKind::Priority => SchedulerSpec::Priority,
        SchedulerKind::ApproxPriority => SchedulerSpec::ApproxPriority,
        SchedulerKind::Set => {
            // Parity sets, one barrier-free sweep per invocation.
            let graph = engine.graph();
            let parity = |v: VertexId| {
                let (x, y) = ((v.0 as usize) % width, (v.0 as usize) / width);
                (x + y) % 2
            };
            let sequence: Vec<(Vec<VertexId>, FunctionId)> = (0..2)
                .map(|c| {
                    (
                        graph.vertex_ids().filter(|&v| parity(v) == c).collect(),
                        BP_FN,
                    )
                })
                .collect();
            let repeated: Vec<(Vec<VertexId>, FunctionId)> = std::iter::repeat(sequence)
                .take(sweeps)
                .flatten()
                .collect();
            SchedulerSpec::Set {
                sequence: repeated,
                compile_model: ConsistencyModel::Edge,
            }
        }
    }
}

/// Per-pixel expectation of the label under the current beliefs.
pub fn expectation_pixels<F: Real>(engine: &BpEngine<F>) -> Vec<F> {
    let g = engine.graph();
    g.vertex_ids().map(|v| g.vertex_data(v).expectation()).collect()
}

pub fn argmax_pixels<F: Real>(engine: &BpEngine<F>) -> Vec<usize> {
    let g = engine.graph();
    g.vertex_ids().map(|v| g.vertex_data(v).argmax()).collect()
}

pub fn mean_abs_error<F: Real>(a: &[F], b: &[F]) -> f64 {
    assert_eq!(a.len(), b.len());
    let total: f64 = a
        .iter()
        .zip(b)
        .map(|(&x, &y)| (x - y).abs().to_f64().unwrap_or(f64::NAN))
        .sum();
    total / a.len() as f64
}

#[derive(Debug, Clone, Copy)]
pub enum LearnMode {
    /// Background periodic sync steps the parameters while inference runs.
    Concurrent { sync_period: Duration },
    /// Classic alternation: run inference to quiescence, then take one
    /// gradient step.
    Sequential,
}

#[derive(Debug, Clone)]
pub struct LearnOptions<F> {
    pub mode: LearnMode,
    pub eta: F,
    pub lambda_min: F,
    pub lambda0: Vec<F>,
    pub max_rounds: usize,
    pub tolerance: F,
    pub workers: usize,
    pub residual_bound: F,
}

impl<F: Real> LearnOptions<F> {
    pub fn concurrent(workers: usize) -> Self {
        LearnOptions {
            mode: LearnMode::Concurrent {
                sync_period: Duration::from_millis(3),
            },
            eta: real(2.0),
            lambda_min: real(1e-3),
            lambda0: vec![F::one(), F::one()],
            max_rounds: 60,
            tolerance: real(2e-3),
            workers,
        residual_bound: real(1e-4),
        }
    }

    pub fn sequential(workers: usize) -> Self {
        LearnOptions {
            mode: LearnMode::Sequential,
            ..Self::concurrent(workers)
        }
    }
}

pub struct LearnOutcome<F: Real> {
    pub lambda: Vec<F>,
    pub rounds: usize,
    pub total_updates: u64,
    pub engine: BpEngine<F>,
}

/// Learns the per-axis smoothing parameters on a noisy grid, either
/// concurrently (background sync during inference) or by alternating
/// inference and gradient steps.
pub fn learn_lambda<F: Real>(
    observations: &[F],
    width: usize,
    height: usize,
    labels: usize,
    sigma: F,
    opts: LearnOptions<F>,
) -> Result<LearnOutcome<F>, RunError> {
    let engine = make_engine(
        observations,
        width,
        height,
        labels,
        sigma,
        opts.lambda0.clone(),
        opts.workers,
        ConsistencyModel::Edge,
        opts.residual_bound,
    );
    // Build the ground-truth proxy once.
    engine.table().register_sync(smoothing_sync::<F>(2)).unwrap();
    engine
        .table()
        .register_sync(empirical_stats_sync::<F>(2, labels))
        .unwrap();
    engine.sync_now(SMOOTHING_KEY)?;
    engine.sync_now(EMPIRICAL_KEY)?;
    let empirical: Vec<F> = engine.table().get_as(EMPIRICAL_KEY).unwrap();

    let period = match opts.mode {
        LearnMode::Concurrent { sync_period } => Some(sync_period),
        LearnMode::Sequential => None,
    };
    engine
        .table()
        .register_sync(lambda_learning_sync::<F>(
            2,
            empirical,
            opts.eta,
            opts.lambda_min,
            period,
        ))
        .unwrap();

    let mut lambda: Vec<F> = engine.table().get_as(LAMBDA_KEY).unwrap();
    let mut total_updates = 0;
    let mut rounds = 0;
    for round in 0..opts.max_rounds {
        rounds = round + 1;
        let stats = engine.run(&SchedulerSpec::Priority, &seed_all(&engine))?;
        total_updates += stats.updates_applied;
        // One on-demand step with quiesced beliefs closes each round.
        engine.sync_now(LAMBDA_KEY)?;
        let next: Vec<F> = engine.table().get_as(LAMBDA_KEY).unwrap();
        let moved = lambda
            .iter()
            .zip(&next)
            .map(|(&a, &b)| (a - b).abs())
            .fold(F::zero(), F::max);
        lambda = next;
        if moved < opts.tolerance && round > 0 {
            break;
        }
    }
    Ok(LearnOutcome {
        lambda,
        rounds,
        total_updates,
        engine,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn synthetic_grid_is_reproducible_and_plausible() {
        let a = synthetic_grid::<f64>(8, 8, 3, [1.0, 1.0], 0.3, 7);
        let b = synthetic_grid::<f64>(8, 8, 3, [1.0, 1.0], 0.3, 7);
        assert_eq!(a.truth, b.truth);
        assert_eq!(a.noisy, b.noisy);
        assert!(a.truth.iter().all(|&t| t < 3));
        // Smoothness prior: neighbors agree more often than not.
        let mut agree = 0usize;
        let mut total = 0usize;
        for y in 0..8 {
            for x in 0..7 {
                total += 1;
                if a.truth[y * 8 + x] == a.truth[y * 8 + x + 1] {
                    agree += 1;
                }
            }
        }
        assert!(agree * 2 > total, "sampled field looks unsmoothed");
    }

    #[test]
    fn denoising_beats_noisy_input() {
        let data = synthetic_grid::<f64>(12, 12, 4, [1.2, 1.2], 0.6, 11);
        let engine = make_engine(
            &data.noisy,
            12,
            12,
            4,
            0.6,
            vec![1.2, 1.2],
            2,
            ConsistencyModel::Edge,
            1e-5,
        );
        infer(&engine, SchedulerKind::Priority, 0, 12).unwrap();
        let truth: Vec<f64> = data.truth.iter().map(|&t| t as f64).collect();
        let denoised = expectation_pixels(&engine);
        let mae_noisy = mean_abs_error(&data.noisy, &truth);
        let mae_denoised = mean_abs_error(&denoised, &truth);
        assert!(
            mae_denoised < mae_noisy,
            "denoised {mae_denoised} not better than noisy {mae_noisy}"
        );
    }

    #[test]
    fn noiseless_input_is_a_fixed_point() {
        let truth: Vec<f64> = (0..16).map(|i| f64::from(i % 3)).collect();
        let engine = make_engine(
            &truth,
            4,
            4,
            3,
            0.0,
            vec![1.0, 1.0],
            1,
            ConsistencyModel::Edge,
            1e-6,
        );
        infer(&engine, SchedulerKind::Priority, 0, 4).unwrap();
        let out = argmax_pixels(&engine);
        let expect: Vec<usize> = truth.iter().map(|&t| t as usize).collect();
        assert_eq!(out, expect);
        // Rounded expectations reproduce the input exactly.
        for (e, t) in expectation_pixels(&engine).iter().zip(&truth) {
            assert!((e - t).abs() < 1e-6);
        }
    }
}
