//! Multi-run pattern search over products of unit spheres.
//!
//! Every iteration probes all `2M` coordinate moves of the current point
//! (one positive and one negative movement per coordinate), keeps the best
//! candidate if it strictly improves the objective, and shrinks the global
//! step once progress falls below `tau1`. A run ends when the step drops to
//! `phi`; the next run restarts from the previous solution with the initial
//! step again. The search stops once two consecutive runs return points
//! closer than `tau2`.

use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sphere::{propose_move, validate_point, Direction, MoveSpec, MultiSpherePoint};

/// A deterministic function to minimize over a product of spheres.
///
/// Objectives may be called concurrently on distinct points. Objectives that
/// split into a sum of terms, each depending on a subset of blocks, can
/// override the `terms` family so that a move in one block only re-evaluates
/// the term that owns it. The value of a point is always the in-order sum of
/// its terms.
pub trait Objective: Sync {
    fn evaluate(&self, point: &MultiSpherePoint) -> f64;

    fn terms(&self, point: &MultiSpherePoint) -> Vec<f64> {
        vec![self.evaluate(point)]
    }

    /// Index of the term that depends on `block`.
    fn term_of_block(&self, _block: usize) -> usize {
        0
    }

    /// Term `term_of_block(block)` evaluated at `point` with `block`
    /// replaced by `replacement`.
    fn term_with_block(&self, point: &MultiSpherePoint, block: usize, replacement: &[f64]) -> f64 {
        let mut moved = point.clone();
        moved.set_block(block, replacement.to_vec());
        self.evaluate(&moved)
    }
}

impl<F> Objective for F
where
    F: Fn(&MultiSpherePoint) -> f64 + Sync,
{
    fn evaluate(&self, point: &MultiSpherePoint) -> f64 {
        self(point)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MscorConfig {
    pub s_initial: f64,
    pub rho: f64,
    pub phi: f64,
    pub lambda: f64,
    pub tau1: f64,
    pub tau2: f64,
    pub max_iter: usize,
    pub max_runs: usize,
    pub time_budget_seconds: Option<f64>,
    pub threads: usize,
    pub seed: u64,
}

impl Default for MscorConfig {
    fn default() -> Self {
        Self {
            s_initial: 1.0,
            rho: 2.0,
            phi: 1e-6,
            lambda: 0.0,
            tau1: 1e-8,
            tau2: 1e-4,
            max_iter: 10_000,
            max_runs: 100,
            time_budget_seconds: None,
            threads: 1,
            seed: 0,
        }
    }
}

impl MscorConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(msg.to_string()));
        if !(self.s_initial > 0.0 && self.s_initial.is_finite()) {
            return bad("s_initial must be positive");
        }
        if !(self.rho > 1.0 && self.rho.is_finite()) {
            return bad("rho must exceed 1");
        }
        if !(self.phi > 0.0 && self.phi < self.s_initial) {
            return bad("phi must lie in (0, s_initial)");
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad("lambda must be non-negative");
        }
        if !(self.tau1 > 0.0) || !(self.tau2 > 0.0) {
            return bad("tau1 and tau2 must be positive");
        }
        if self.max_iter == 0 || self.max_runs == 0 {
            return bad("max_iter and max_runs must be positive");
        }
        if let Some(t) = self.time_budget_seconds {
            if !(t > 0.0) {
                return bad("time_budget_seconds must be positive");
            }
        }
        if self.threads == 0 {
            return bad("threads must be positive");
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let config: Self = serde_json::from_str(text)?;
        config.validate()?;
        Ok(config)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    RunConvergence,
    MaxRuns,
    TimeBudget,
}

impl std::fmt::Display for Termination {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Termination::RunConvergence => "run_convergence",
            Termination::MaxRuns => "max_runs",
            Termination::TimeBudget => "time_budget",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptResult {
    pub solution: MultiSpherePoint,
    pub objective_value: f64,
    pub runs_completed: usize,
    pub iterations_per_run: Vec<usize>,
    pub objective_evaluations: u64,
    pub run_best_values: Vec<f64>,
    pub terminated_by: Termination,
}

/// Mutable state of a single run.
#[derive(Debug, Clone)]
pub struct SearchState {
    pub point: MultiSpherePoint,
    /// Objective terms at `point`.
    pub terms: Vec<f64>,
    pub value: f64,
    /// Global step size.
    pub step: f64,
    /// 1-based index of the next iteration.
    pub iteration: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationOutcome {
    pub improved: bool,
    pub evaluations: u64,
}

/// Outcome of one run.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub point: MultiSpherePoint,
    pub value: f64,
    pub iterations: usize,
    pub evaluations: u64,
    pub timed_out: bool,
}

#[derive(Debug, Clone, Copy)]
struct Slot {
    block: usize,
    coord: usize,
    direction: Direction,
}

fn checked(value: f64) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::ObjectiveNonFinite { value })
    }
}

fn sum_replacing(terms: &[f64], index: usize, replacement: f64) -> f64 {
    terms
        .iter()
        .enumerate()
        .map(|(k, &v)| if k == index { replacement } else { v })
        .sum()
}

pub struct Mscor<'a, O: Objective + ?Sized> {
    objective: &'a O,
    config: MscorConfig,
    pool: Option<rayon::ThreadPool>,
}

impl<'a, O: Objective + ?Sized> Mscor<'a, O> {
    pub fn new(objective: &'a O, config: MscorConfig) -> Result<Self> {
        config.validate()?;
        let pool = if config.threads > 1 {
            Some(
                rayon::ThreadPoolBuilder::new()
                    .num_threads(config.threads)
                    .build()
                    .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?,
            )
        } else {
            None
        };
        Ok(Self {
            objective,
            config,
            pool,
        })
    }

    pub fn config(&self) -> &MscorConfig {
        &self.config
    }

    /// Fresh run state at `point` with the initial step size.
    pub fn start(&self, point: MultiSpherePoint) -> Result<SearchState> {
        validate_point(&point)?;
        let terms = self.objective.terms(&point);
        let value = checked(terms.iter().sum())?;
        Ok(SearchState {
            point,
            terms,
            value,
            step: self.config.s_initial,
            iteration: 1,
        })
    }

    fn evaluate_slot(&self, state: &SearchState, slot: &Slot) -> Option<(Vec<f64>, f64, f64)> {
        let mv = MoveSpec {
            block: slot.block,
            coord: slot.coord,
            direction: slot.direction,
            step: state.step,
            sparsity_threshold: self.config.lambda,
        };
        let candidate = propose_move(state.point.block(slot.block), &mv, self.config.rho, self.config.phi)?;
        let term = self.objective.term_with_block(&state.point, slot.block, &candidate);
        let total = sum_replacing(&state.terms, self.objective.term_of_block(slot.block), term);
        Some((candidate, term, total))
    }

    /// One pattern-search iteration: probe all `2M` moves, accept the best on
    /// strict improvement, and shrink the step when progress stalls.
    pub fn iterate(&self, state: &mut SearchState) -> Result<IterationOutcome> {
        let slots: Vec<Slot> = state
            .point
            .shape()
            .block_lengths()
            .iter()
            .enumerate()
            .flat_map(|(block, &n)| {
                (0..n).flat_map(move |coord| {
                    [Direction::Negative, Direction::Positive].map(|direction| Slot {
                        block,
                        coord,
                        direction,
                    })
                })
            })
            .collect();

        let state_ref = &*state;
        let results: Vec<Option<(Vec<f64>, f64, f64)>> = match &self.pool {
            Some(pool) => pool.install(|| {
                slots
                    .par_iter()
                    .map(|slot| self.evaluate_slot(state_ref, slot))
                    .collect()
            }),
            None => slots.iter().map(|slot| self.evaluate_slot(state_ref, slot)).collect(),
        };

        let f1 = state.value;
        let mut evaluations = 0u64;
        let mut best: Option<usize> = None;
        let mut f2 = f1;
        for (k, r) in results.iter().enumerate() {
            let value = match r {
                Some((_, _, total)) => {
                    evaluations += 1;
                    checked(*total)?
                }
                None => f1,
            };
            if best.is_none() || value < f2 {
                best = Some(k);
                f2 = value;
            }
        }

        let improved = f2 < f1;
        if improved {
            let k = best.expect("at least one slot");
            let block = slots[k].block;
            let (candidate, term, total) = results[k].clone().expect("improving slot has a candidate");
            state.point.set_block(block, candidate);
            state.terms[self.objective.term_of_block(block)] = term;
            state.value = total;
        }
        if state.iteration > 1 && (f1 - f1.min(f2)).abs() < self.config.tau1 && state.step > self.config.phi {
            state.step /= self.config.rho;
        }
        state.iteration += 1;
        Ok(IterationOutcome {
            improved,
            evaluations,
        })
    }

    fn run_until(&self, start: MultiSpherePoint, deadline: Option<Instant>) -> Result<RunOutcome> {
        let mut state = self.start(start)?;
        let mut evaluations = 1;
        let mut timed_out = false;
        while state.iteration <= self.config.max_iter && state.step > self.config.phi {
            if deadline.is_some_and(|d| Instant::now() >= d) {
                timed_out = true;
                break;
            }
            evaluations += self.iterate(&mut state)?.evaluations;
        }
        Ok(RunOutcome {
            iterations: state.iteration - 1,
            point: state.point,
            value: state.value,
            evaluations,
            timed_out,
        })
    }

    /// A single run from `start`, sweeping the step from `s_initial` down to
    /// `phi`.
    pub fn run(&self, start: MultiSpherePoint) -> Result<RunOutcome> {
        self.run_until(start, None)
    }

    /// Chains runs until consecutive run solutions agree within `tau2`, the
    /// run limit is hit, or the time budget is spent.
    pub fn optimize(&self, init: MultiSpherePoint) -> Result<OptResult> {
        validate_point(&init)?;
        let deadline = self
            .config
            .time_budget_seconds
            .map(|s| Instant::now() + Duration::from_secs_f64(s));
        let mut previous = init;
        let mut iterations_per_run = Vec::new();
        let mut run_best_values = Vec::new();
        let mut evaluations = 0;
        let mut best_value = f64::NAN;
        let mut terminated_by = Termination::MaxRuns;

        for r in 1..=self.config.max_runs {
            let outcome = self.run_until(previous.clone(), deadline)?;
            iterations_per_run.push(outcome.iterations);
            run_best_values.push(outcome.value);
            evaluations += outcome.evaluations;
            best_value = outcome.value;
            let moved = outcome.point.distance(&previous);
            previous = outcome.point;
            if outcome.timed_out {
                terminated_by = Termination::TimeBudget;
                break;
            }
            if r >= 2 && moved < self.config.tau2 {
                terminated_by = Termination::RunConvergence;
                break;
            }
        }

        Ok(OptResult {
            solution: previous,
            objective_value: best_value,
            runs_completed: run_best_values.len(),
            iterations_per_run,
            objective_evaluations: evaluations,
            run_best_values,
            terminated_by,
        })
    }
}

/// Convenience wrapper around [`Mscor::optimize`].
pub fn optimize<O: Objective + ?Sized>(objective: &O, init: MultiSpherePoint, config: &MscorConfig) -> Result<OptResult> {
    Mscor::new(objective, config.clone())?.optimize(init)
}

/// A converged search that needed more than two runs escaped at least one
/// local optimum, so the objective is not convex.
pub fn detect_nonconvexity(result: &OptResult) -> Result<bool> {
    if result.terminated_by != Termination::RunConvergence {
        return Err(Error::NotConverged(result.terminated_by.to_string()));
    }
    Ok(result.runs_completed > 2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sphere::{random_point, SphereShape};

    fn sq_dist_to(target: Vec<f64>) -> impl Fn(&MultiSpherePoint) -> f64 + Sync {
        move |p: &MultiSpherePoint| p.block(0).iter().zip(&target).map(|(a, b)| (a - b) * (a - b)).sum()
    }

    fn pt(v: Vec<f64>) -> MultiSpherePoint {
        MultiSpherePoint::from_blocks(vec![v]).unwrap()
    }

    #[test]
    fn first_iteration_takes_best_move() {
        // Candidates from (1, 0) at s = 1, by hand:
        //   (i=0,-): (0, 1)  f = 0
        //   (i=0,+): infeasible at every step, reuses f = 2
        //   (i=1,-): (0, -1) f = 4
        //   (i=1,+): (0, 1)  f = 0 (ties go to the earlier slot)
        let f = sq_dist_to(vec![0.0, 1.0]);
        let opt = Mscor::new(&f, MscorConfig::default()).unwrap();
        let mut state = opt.start(pt(vec![1.0, 0.0])).unwrap();
        assert_eq!(state.value, 2.0);
        let out = opt.iterate(&mut state).unwrap();
        assert!(out.improved);
        assert!(state.point.block(0)[0].abs() < 1e-15);
        assert!((state.point.block(0)[1] - 1.0).abs() < 1e-15);
        assert!(state.value.abs() < 1e-15);
        // first iteration never shrinks the step
        assert_eq!(state.step, 1.0);
    }

    #[test]
    fn constant_objective_shrinks_step() {
        let f = |_: &MultiSpherePoint| 3.0;
        let opt = Mscor::new(&f, MscorConfig::default()).unwrap();
        let start = random_point(&SphereShape::uniform(2, 3).unwrap(), 5).unwrap();
        let mut state = opt.start(start.clone()).unwrap();
        state.iteration = 2;
        let out = opt.iterate(&mut state).unwrap();
        assert!(!out.improved);
        assert_eq!(state.point, start);
        assert_eq!(state.step, 0.5);
    }

    #[test]
    fn minimizer_is_a_fixed_point() {
        let f = sq_dist_to(vec![0.6, 0.8]);
        let opt = Mscor::new(&f, MscorConfig::default()).unwrap();
        let mut state = opt.start(pt(vec![0.6, 0.8])).unwrap();
        state.iteration = 2;
        assert!(!opt.iterate(&mut state).unwrap().improved);
        assert_eq!(state.step, 0.5);

        let out = opt.run(pt(vec![0.6, 0.8])).unwrap();
        assert_eq!(out.point, pt(vec![0.6, 0.8]));
    }

    #[test]
    fn run_reaches_target_on_circle() {
        let f = sq_dist_to(vec![-0.28, 0.96]);
        let opt = Mscor::new(&f, MscorConfig::default()).unwrap();
        for seed in 0..10 {
            let start = random_point(&SphereShape::new(vec![2]).unwrap(), seed).unwrap();
            let f0 = f(&start);
            let out = opt.run(start).unwrap();
            assert!(out.value <= f0);
            assert!(out.value <= 1e-8, "seed {seed}: {}", out.value);
        }
    }

    #[test]
    fn max_iter_bounds_a_run() {
        let f = sq_dist_to(vec![0.0, 0.0, 1.0]);
        let config = MscorConfig {
            max_iter: 1,
            ..Default::default()
        };
        let out = Mscor::new(&f, config).unwrap().run(pt(vec![1.0, 0.0, 0.0])).unwrap();
        assert_eq!(out.iterations, 1);
    }

    #[test]
    fn unique_minimizer_stops_after_second_run() {
        let f = sq_dist_to(vec![0.0, 0.6, 0.8]);
        let start = random_point(&SphereShape::new(vec![3]).unwrap(), 3).unwrap();
        let res = optimize(&f, start, &MscorConfig::default()).unwrap();
        assert_eq!(res.terminated_by, Termination::RunConvergence);
        assert_eq!(res.runs_completed, 2);
        assert!(!detect_nonconvexity(&res).unwrap());
    }

    #[test]
    fn max_runs_limits_search() {
        let f = sq_dist_to(vec![0.0, 0.6, 0.8]);
        let config = MscorConfig {
            max_runs: 1,
            ..Default::default()
        };
        let res = optimize(&f, pt(vec![1.0, 0.0, 0.0]), &config).unwrap();
        assert_eq!(res.runs_completed, 1);
        assert_eq!(res.terminated_by, Termination::MaxRuns);
        assert!(matches!(detect_nonconvexity(&res), Err(Error::NotConverged(_))));
    }

    #[test]
    fn nonconvexity_flag_follows_run_count() {
        let mut res = optimize(&sq_dist_to(vec![1.0, 0.0]), pt(vec![0.0, 1.0]), &MscorConfig::default()).unwrap();
        res.runs_completed = 7;
        assert!(detect_nonconvexity(&res).unwrap());
        res.runs_completed = 2;
        assert!(!detect_nonconvexity(&res).unwrap());
    }

    #[test]
    fn nan_objective_aborts() {
        let f = |p: &MultiSpherePoint| if p.block(0)[0] < 0.9 { f64::NAN } else { 1.0 - p.block(0)[0] };
        let err = optimize(&f, pt(vec![1.0, 0.0]), &MscorConfig::default()).unwrap_err();
        assert!(matches!(err, Error::ObjectiveNonFinite { .. }));
    }

    #[test]
    fn config_json_round_trip_and_validation() {
        let json = r#"{"s_initial":1.0,"rho":2.0,"phi":1e-6,"lambda":0.0,"tau1":1e-8,"tau2":1e-4,
            "max_iter":500,"max_runs":10,"time_budget_seconds":null,"threads":4,"seed":9}"#;
        let c = MscorConfig::from_json(json).unwrap();
        assert_eq!(c.max_iter, 500);
        assert_eq!(c.threads, 4);
        assert_eq!(MscorConfig::from_json(&serde_json::to_string(&c).unwrap()).unwrap(), c);
        assert!(MscorConfig::from_json(r#"{"rho":1.0}"#).is_err());
        assert!(MscorConfig::from_json(r#"{"phi":2.0}"#).is_err());
        assert!(MscorConfig::from_json(r#"{"unknown":1}"#).is_err());
    }

    #[test]
    fn thread_count_does_not_change_result() {
        let f = |p: &MultiSpherePoint| -> f64 {
            p.blocks()
                .iter()
                .flatten()
                .enumerate()
                .map(|(k, x)| (x - 0.1 * k as f64).powi(2) + (3.0 * x).sin())
                .sum()
        };
        let start = random_point(&SphereShape::new(vec![3, 4]).unwrap(), 11).unwrap();
        let serial = optimize(&f, start.clone(), &MscorConfig::default()).unwrap();
        let parallel = optimize(
            &f,
            start,
            &MscorConfig {
                threads: 4,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(serial, parallel);
    }
}
