//! Interior-point solver for l1-regularized least squares (the compressed
//! sensing inner kernel): a sequential Newton outer loop whose step
//! systems are solved by the GaBP engine.
//!
//! The graph is built once from the sparsity of A^T A. Each outer
//! iteration refreshes vertex and edge data for the current Newton system,
//! reuses the converged messages of the previous invocation as a warm
//! start, computes the duality gap through a registered sync, and takes a
//! damped Newton step with backtracking line search.

use std::sync::Arc;

use super::gabp::{self, GabpEdgeData, GabpUpdate, GabpVertexData};
use crate::consistency::ConsistencyModel;
use crate::engine::{Engine, EngineConfig, RunError};
use crate::graph::{DataGraph, ScopeView, SharedDataTable, SyncRegistration, VertexId};
use crate::io::CooMatrix;
use crate::scalar::{real, Real};
use crate::scheduling::{FunctionId, SchedulerSpec};

pub const GAP_KEY: &str = "duality_gap";
const GABP_FN: FunctionId = FunctionId(0);

#[derive(Debug, Clone)]
pub struct InteriorPointConfig<F> {
    /// l1 penalty weight.
    pub lambda: F,
    /// Elastic-net smoothing on the quadratic term; kept tiny, it
    /// regularizes the Newton systems without visibly moving the optimum.
    pub delta: F,
    pub gap_tolerance: F,
    pub max_iterations: usize,
    pub workers: usize,
    /// Residual bound for the inner GaBP runs.
    pub inner_bound: F,
    /// Initial barrier weight and its growth factor per outer iteration.
    pub t0: F,
    pub mu: F,
}

impl<F: Real> InteriorPointConfig<F> {
    pub fn new(lambda: F) -> Self {
        InteriorPointConfig {
            lambda,
            delta: real(1e-8),
            gap_tolerance: real(1e-4),
            max_iterations: 100,
            workers: 2,
            inner_bound: real(1e-9),
            t0: real(1.0),
            mu: real(4.0),
        }
    }
}

#[derive(Debug)]
pub struct InteriorPointResult<F> {
    pub x: Vec<F>,
    pub duality_gap: F,
    pub iterations: usize,
    /// GaBP updates applied by each inner solve, in order.
    pub inner_updates: Vec<u64>,
    pub converged: bool,
}

struct Problem<F> {
    n: usize,
    a: CooMatrix<F>,
    y: Vec<F>,
    /// Dense A^T A (desk scale) and A^T y.
    ata: Vec<Vec<F>>,
    aty: Vec<F>,
}

impl<F: Real> Problem<F> {
    fn new(a: &CooMatrix<F>, y: &[F]) -> Self {
        assert_eq!(a.rows, y.len(), "one target per row of A");
        let n = a.cols;
        let mut by_row: Vec<Vec<(usize, F)>> = vec![Vec::new(); a.rows];
        for &(r, c, v) in &a.entries {
            by_row[r].push((c, v));
        }
        let mut ata = vec![vec![F::zero(); n]; n];
        let mut aty = vec![F::zero(); n];
        for (r, row) in by_row.iter().enumerate() {
            for &(i, vi) in row {
                aty[i] = aty[i] + vi * y[r];
                for &(j, vj) in row {
                    ata[i][j] = ata[i][j] + vi * vj;
                }
            }
        }
        Problem {
            n,
            a: a.clone(),
            y: y.to_vec(),
            ata,
            aty,
        }
    }

    fn residual(&self, x: &[F]) -> Vec<F> {
        let mut z: Vec<F> = self.y.iter().map(|&v| -v).collect();
        for &(r, c, v) in &self.a.entries {
            z[r] = z[r] + v * x[c];
        }
        z
    }

    /// Primal objective of the pure l1 problem.
    fn primal(&self, x: &[F], lambda: F) -> F {
        let rss: F = self.residual(x).iter().map(|&z| z * z).sum();
        let l1: F = x.iter().map(|v| v.abs()).sum();
        rss + lambda * l1
    }

    /// Standard dual feasible point: scale 2(Ax - y) into the box
    /// |A^T nu|_inf <= lambda, then gap = primal - dual.
    fn duality_gap(&self, x: &[F], lambda: F) -> F {
        let z = self.residual(x);
        let mut atz = vec![F::zero(); self.n];
        for &(r, c, v) in &self.a.entries {
            atz[c] = atz[c] + v * z[r];
        }
        let two = real::<F>(2.0);
        let inf_norm = atz
            .iter()
            .map(|&g| (two * g).abs())
            .fold(F::zero(), F::max);
        let scale = if inf_norm > lambda && inf_norm > F::zero() {
            lambda / inf_norm
        } else {
            F::one()
        };
        let nu: Vec<F> = z.iter().map(|&zi| two * zi * scale).collect();
        let quarter = real::<F>(0.25);
        let dual: F = nu
            .iter()
            .zip(&self.y)
            .map(|(&v, &yi)| -quarter * v * v - v * yi)
            .sum();
        self.primal(x, lambda) - dual
    }

    /// Barrier objective phi_t(x, u); infinity outside the feasible box.
    fn barrier(&self, x: &[F], u: &[F], t: F, lambda: F, delta: F) -> F {
        let mut log_terms = F::zero();
        for (&xi, &ui) in x.iter().zip(u) {
            let (lo, hi) = (ui + xi, ui - xi);
            if !(lo > F::zero()) || !(hi > F::zero()) {
                return F::infinity();
            }
            log_terms = log_terms + lo.ln() + hi.ln();
        }
        let rss: F = self.residual(x).iter().map(|&z| z * z).sum();
        let sq: F = x.iter().map(|&v| v * v).sum();
        let half = real::<F>(0.5);
        let usum: F = u.iter().copied().sum();
        t * (rss + half * delta * sq + lambda * usum) - log_terms
    }
}

fn with_exclusive_graph<F: Real>(
    graph: &mut Arc<DataGraph<GabpVertexData<F>, GabpEdgeData<F>>>,
    f: impl FnOnce(&mut DataGraph<GabpVertexData<F>, GabpEdgeData<F>>),
) {
    let g = Arc::get_mut(graph).expect("no engine may hold the graph during a refresh");
    f(g);
}

/// Solves `min |Ax-y|^2 + lambda |x|_1` (with a vanishing elastic-net
/// term) via the barrier method, using the GaBP engine for every Newton
/// system.
pub fn solve_l1ls<F: Real>(
    a: &CooMatrix<F>,
    y: &[F],
    cfg: &InteriorPointConfig<F>,
) -> Result<InteriorPointResult<F>, RunError> {
    let problem = Problem::new(a, y);
    let n = problem.n;
    let lambda = cfg.lambda;

    // Graph built once from the A^T A sparsity; values refreshed in place
    // each iteration.
    let mut graph: Arc<DataGraph<GabpVertexData<F>, GabpEdgeData<F>>> = {
        let mut g = DataGraph::new();
        for i in 0..n {
            g.add_vertex(GabpVertexData::new(F::one(), F::zero())).unwrap();
            let _ = i;
        }
        for i in 0..n {
            for j in 0..n {
                if i != j && problem.ata[i][j] != F::zero() {
                    g.add_edge(
                        VertexId(i as u32),
                        VertexId(j as u32),
                        GabpEdgeData {
                            coeff: problem.ata[i][j],
                            precision: F::zero(),
                            mean: F::zero(),
                        },
                    )
                    .unwrap();
                }
            }
        }
        g.freeze();
        Arc::new(g)
    };
    let table = Arc::new(SharedDataTable::new());
    {
        // The gap sync gathers the outer iterate stored in each vertex's
        // aux slot; apply closes over the problem data.
        let gap_problem = Problem::new(a, y);
        table
            .register_sync(SyncRegistration::new(
                GAP_KEY,
                vec![F::zero(); n],
                |view: &mut ScopeView<'_, GabpVertexData<F>, GabpEdgeData<F>>,
                 mut acc: Vec<F>| {
                    acc[view.center().index()] = view.center_data().aux;
                    acc
                },
                move |_prev: Option<&F>, acc: Vec<F>| gap_problem.duality_gap(&acc, lambda),
            ))
            .unwrap();
    }

    let mk_engine = |graph: &Arc<DataGraph<GabpVertexData<F>, GabpEdgeData<F>>>| {
        let mut eng = Engine::new(
            Arc::clone(graph),
            Arc::clone(&table),
            EngineConfig::new(cfg.workers, ConsistencyModel::Edge),
        );
        eng.register_update(
            GABP_FN,
            Arc::new(GabpUpdate {
                function: GABP_FN,
                residual_bound: cfg.inner_bound,
            }),
        );
        eng
    };

    let mut x = vec![F::zero(); n];
    let mut u = vec![F::one(); n];
    let mut t = cfg.t0;
    let mut inner_updates = Vec::new();
    let mut iterations = 0;
    let two = real::<F>(2.0);
    let two_n = real::<F>(2.0 * n as f64);
    let mut gap;

    loop {
        with_exclusive_graph(&mut graph, |g| {
            for (i, &xi) in x.iter().enumerate() {
                g.vertex_data_mut(VertexId(i as u32)).aux = xi;
            }
        });
        let engine = mk_engine(&graph);
        gap = engine
            .sync_now(GAP_KEY)?
            .downcast_ref::<F>()
            .copied()
            .expect("gap sync yields a scalar");
        drop(engine);
        if gap <= cfg.gap_tolerance {
            return Ok(InteriorPointResult {
                x,
                duality_gap: gap,
                iterations,
                inner_updates,
                converged: true,
            });
        }
        if iterations >= cfg.max_iterations {
            return Ok(InteriorPointResult {
                x,
                duality_gap: gap,
                iterations,
                inner_updates,
                converged: false,
            });
        }

        // Barrier curvature and gradient at (x, u).
        let mut d1 = vec![F::zero(); n];
        let mut d2 = vec![F::zero(); n];
        let mut g_x = vec![F::zero(); n];
        let mut g_u = vec![F::zero(); n];
        for i in 0..n {
            let q1 = F::one() / (u[i] + x[i]);
            let q2 = F::one() / (u[i] - x[i]);
            d1[i] = q1 * q1 + q2 * q2;
            d2[i] = q1 * q1 - q2 * q2;
            let mut grad = F::zero();
            for j in 0..n {
                grad = grad + problem.ata[i][j] * x[j];
            }
            g_x[i] = two * t * (grad - problem.aty[i]) + t * cfg.delta * x[i] + (q2 - q1);
            g_u[i] = t * lambda - q1 - q2;
        }
        // Schur elimination of the u block.
        let d_eff: Vec<F> = (0..n).map(|i| d1[i] - d2[i] * d2[i] / d1[i]).collect();
        let rhs: Vec<F> = (0..n)
            .map(|i| -(g_x[i] - d2[i] / d1[i] * g_u[i]))
            .collect();

        // Diagonal damping: keep every row of the Newton system weakly
        // dominant so the GaBP inner solver stays walk-summable. This
        // turns the step into a damped Newton direction when needed.
        let mut beta = F::zero();
        for i in 0..n {
            let off: F = (0..n)
                .filter(|&j| j != i)
                .map(|j| (two * t * problem.ata[i][j]).abs())
                .sum();
            let diag = two * t * problem.ata[i][i] + t * cfg.delta + d_eff[i];
            beta = beta.max((off - diag) * real::<F>(1.05));
        }
        beta = beta.max(F::zero());

        with_exclusive_graph(&mut graph, |g| {
            for i in 0..n {
                let v = g.vertex_data_mut(VertexId(i as u32));
                v.prior_precision =
                    two * t * problem.ata[i][i] + t * cfg.delta + d_eff[i] + beta;
                v.prior_mean_field = rhs[i];
            }
            for e in g.edge_ids() {
                let (s, tgt) = g.endpoints(e);
                let value = two * t * problem.ata[s.index()][tgt.index()];
                g.edge_data_mut(e).coeff = value;
            }
        });

        let engine = mk_engine(&graph);
        let stats = engine.run(&SchedulerSpec::Priority, &gabp::seed_tasks(engine.graph(), GABP_FN))?;
        inner_updates.push(stats.updates_applied);
        let dx = gabp::solution(engine.graph());
        drop(engine);

        let du: Vec<F> = (0..n)
            .map(|i| -(g_u[i] + d2[i] * dx[i]) / d1[i])
            .collect();

        // Backtracking line search on the barrier objective.
        let phi0 = problem.barrier(&x, &u, t, lambda, cfg.delta);
        let slope: F = g_x
            .iter()
            .zip(&dx)
            .map(|(&g, &d)| g * d)
            .chain(g_u.iter().zip(&du).map(|(&g, &d)| g * d))
            .sum();
        let mut alpha = F::one();
        let c1 = real::<F>(0.01);
        let backoff = real::<F>(0.5);
        let mut stepped = false;
        for _ in 0..60 {
            let xt: Vec<F> = x.iter().zip(&dx).map(|(&a, &d)| a + alpha * d).collect();
            let ut: Vec<F> = u.iter().zip(&du).map(|(&a, &d)| a + alpha * d).collect();
            let phi = problem.barrier(&xt, &ut, t, lambda, cfg.delta);
            if phi <= phi0 + c1 * alpha * slope {
                x = xt;
                u = ut;
                stepped = true;
                break;
            }
            alpha = alpha * backoff;
        }

        // Barrier weight follows the measured gap rather than growing
        // unconditionally, so damped steps get more iterations at the same
        // t. Only advance after a substantial step.
        if stepped && alpha >= real::<F>(0.5) {
            t = (cfg.mu * (two_n / gap).min(t)).max(t);
        }
        iterations += 1;
        log::debug!(
            "interior point: iter {iterations} gap {gap:?} t {t:?} alpha {alpha:?}"
        );
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_problem(a0: f64, y0: f64) -> (CooMatrix<f64>, Vec<f64>) {
        (
            CooMatrix {
                rows: 1,
                cols: 1,
                entries: vec![(0, 0, a0)],
            },
            vec![y0],
        )
    }

    /// min (a w - y)^2 + lambda |w| -> w = soft(2 a y, lambda) / (2 a^2).
    #[test]
    fn one_dimensional_matches_soft_threshold() {
        let (a, y) = scalar_problem(1.0, 1.0);
        let lambda = 1.0;
        let cfg = InteriorPointConfig::new(lambda);
        let result = solve_l1ls(&a, &y, &cfg).unwrap();
        assert!(result.converged);
        let oracle = crate::algorithms::lasso::soft_threshold(2.0, lambda) / 2.0;
        assert!(
            (result.x[0] - oracle).abs() < 1e-4,
            "{} vs {oracle}",
            result.x[0]
        );
    }

    #[test]
    fn loose_tolerance_means_zero_iterations() {
        let (a, y) = scalar_problem(1.0, 1.0);
        let mut cfg = InteriorPointConfig::new(1.0);
        // Initial gap at x = 0 is finite; ask for less.
        cfg.gap_tolerance = 1e6;
        let result = solve_l1ls(&a, &y, &cfg).unwrap();
        assert!(result.converged);
        assert_eq!(result.iterations, 0);
        assert_eq!(result.x, vec![0.0]);
    }

    #[test]
    fn agrees_with_shooting_on_small_instance() {
        use crate::algorithms::lasso;
        use crate::engine::{Engine, EngineConfig};
        use crate::scheduling::SchedulerSpec;

        let (a, y) = lasso::synthetic_instance::<f64>(8, 24, 0.5, 3);
        let lambda = 0.8;
        let cfg = InteriorPointConfig::new(lambda);
        let ip = solve_l1ls(&a, &y, &cfg).unwrap();
        assert!(ip.converged);

        let graph = lasso::build_graph(&a, &y);
        let mut eng = Engine::new(
            Arc::new(graph),
            Arc::new(SharedDataTable::new()),
            EngineConfig::new(1, ConsistencyModel::Full),
        );
        let shoot = FunctionId(0);
        eng.register_update(
            shoot,
            Arc::new(lasso::ShootingUpdate {
                function: shoot,
                lambda,
                epsilon: 1e-10,
            }),
        );
        let tasks = lasso::seed_tasks(eng.graph(), shoot);
        eng.run(&SchedulerSpec::Priority, &tasks).unwrap();
        let reference = lasso::weights(eng.graph());

        let p = Problem::new(&a, &y);
        let obj_ip = p.primal(&ip.x, lambda);
        let obj_ref = p.primal(&reference, lambda);
        assert!(
            (obj_ip - obj_ref).abs() <= 1e-3 * obj_ref.abs().max(1.0),
            "interior point {obj_ip} vs shooting {obj_ref}"
        );
    }
}
