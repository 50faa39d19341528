//! Best-bound branch and bound over binary variables.
//!
//! Nodes are ordered by LP bound, ties by creation order. Each node keeps
//! only the basis status and the binary fixings of its LP; children are
//! evaluated eagerly from the parent's optimal basis with dual simplex.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use super::model::LinearModel;
use super::simplex::{LpOutcome, Simplex, StandardForm, Tolerances, VarState};
use super::{SolveResult, SolveStatus, SolverOptions};

const FREE: u8 = 0;
const AT_ZERO: u8 = 1;
const AT_ONE: u8 = 2;

struct Node {
    bound: f64,
    id: u64,
    state: Box<[VarState]>,
    fix: Box<[u8]>,
    /// Position in the binary list of the variable to branch on.
    branch: usize,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Node {}

impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Node {
    // Max-heap order: smallest bound first, then smallest id.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .bound
            .total_cmp(&self.bound)
            .then_with(|| other.id.cmp(&self.id))
    }
}

struct Search<'a> {
    opts: &'a SolverOptions,
    bins: Vec<usize>,
    heap: BinaryHeap<Node>,
    next_id: u64,
    incumbent: Option<(f64, Vec<f64>)>,
    nodes: usize,
    pivots: usize,
}

impl Search<'_> {
    fn prunable(&self, bound: f64) -> bool {
        match &self.incumbent {
            Some((inc, _)) => bound >= inc - self.opts.mip_gap * inc.abs().max(1.0),
            None => false,
        }
    }

    /// Most fractional binary, ties to the lowest index.
    fn branching_candidate(&self, x: &[f64]) -> Option<usize> {
        let mut best = None;
        let mut best_frac = self.opts.int_tol;
        for (k, &j) in self.bins.iter().enumerate() {
            let f = x[j] - x[j].floor();
            let frac = f.min(1.0 - f);
            if frac > best_frac {
                best_frac = frac;
                best = Some(k);
            }
        }
        best
    }

    /// Files an optimal LP: new incumbent, pruned, or queued.
    fn record(&mut self, sx: &Simplex, fix: &[u8]) {
        let bound = sx.objective();
        if self.prunable(bound) {
            return;
        }
        match self.branching_candidate(&sx.x) {
            None => {
                let mut x = sx.x[..sx.n()].to_vec();
                for &j in &self.bins {
                    x[j] = x[j].round();
                }
                self.incumbent = Some((bound, x));
            }
            Some(branch) => {
                self.heap.push(Node {
                    bound,
                    id: self.next_id,
                    state: sx.state.clone().into_boxed_slice(),
                    fix: fix.into(),
                    branch,
                });
                self.next_id += 1;
            }
        }
    }

    fn run_lp(&mut self, sx: &mut Simplex) -> LpOutcome {
        sx.pivots = 0;
        let out = sx.reoptimize();
        self.pivots += sx.pivots;
        out
    }
}

pub(crate) fn branch_and_bound(model: &LinearModel, opts: &SolverOptions) -> SolveResult {
    let sf = StandardForm::from_model(model);
    let bins: Vec<usize> = model
        .variables()
        .iter()
        .enumerate()
        .filter(|(_, v)| v.is_binary)
        .map(|(j, _)| j)
        .collect();
    let mut sx = Simplex::new(&sf, Tolerances::from(opts));
    let mut search = Search {
        opts,
        bins,
        heap: BinaryHeap::new(),
        next_id: 0,
        incumbent: None,
        nodes: 1,
        pivots: 0,
    };

    let root = search.run_lp(&mut sx);
    let fail = |status, s: &Search| SolveResult::without_point(status, s.pivots, s.nodes);
    match root {
        LpOutcome::Optimal => {}
        LpOutcome::Infeasible => return fail(SolveStatus::Infeasible, &search),
        LpOutcome::Unbounded => return fail(SolveStatus::Unbounded, &search),
        LpOutcome::IterationLimit => return fail(SolveStatus::IterationLimit, &search),
    }
    let root_fix = vec![FREE; search.bins.len()];
    search.record(&sx, &root_fix);

    let mut status = SolveStatus::Optimal;
    let mut frontier_bound = None;
    while let Some(node) = search.heap.pop() {
        if search.prunable(node.bound) {
            search.heap.clear();
            break;
        }
        if search.nodes >= opts.max_nodes {
            status = SolveStatus::NodeLimit;
            frontier_bound = Some(node.bound);
            break;
        }
        for (k, &j) in search.bins.iter().enumerate() {
            let (lo, hi) = match node.fix[k] {
                AT_ZERO => (0.0, 0.0),
                AT_ONE => (1.0, 1.0),
                _ => (sf.lower[j], sf.upper[j]),
            };
            sx.set_bounds(j, lo, hi);
        }
        sx.restore(&node.state);
        let parent = sx.snapshot();
        let var = search.bins[node.branch];
        let (plo, phi) = (sx.lower[var], sx.upper[var]);
        let mut fix = node.fix.to_vec();
        for (side, value) in [(AT_ZERO, 0.0), (AT_ONE, 1.0)] {
            if side == AT_ONE {
                sx.load(&parent);
            }
            sx.set_bounds(var, value, value);
            sx.compute_xb();
            fix[node.branch] = side;
            search.nodes += 1;
            match search.run_lp(&mut sx) {
                LpOutcome::Optimal => search.record(&sx, &fix),
                LpOutcome::Infeasible => {}
                LpOutcome::Unbounded => {
                    return fail(SolveStatus::Unbounded, &search);
                }
                LpOutcome::IterationLimit => {
                    status = SolveStatus::IterationLimit;
                }
            }
            sx.set_bounds(var, plo, phi);
        }
        if status == SolveStatus::IterationLimit {
            frontier_bound = Some(node.bound);
            break;
        }
    }

    let open_bound = search
        .heap
        .iter()
        .map(|n| n.bound)
        .chain(frontier_bound)
        .fold(f64::INFINITY, f64::min);
    let sign = sf.obj_sign;
    match search.incumbent.take() {
        Some((inc, x)) => {
            let objective = model.objective_value(&x);
            let bound = if status == SolveStatus::Optimal {
                objective
            } else {
                sign * open_bound.min(inc) + model.objective().constant
            };
            SolveResult {
                status,
                objective: Some(objective),
                primal: x,
                dual: Vec::new(),
                pivots: search.pivots,
                nodes: search.nodes,
                best_bound: Some(bound),
            }
        }
        None => {
            let status = if status == SolveStatus::Optimal {
                SolveStatus::Infeasible
            } else {
                status
            };
            let mut r = SolveResult::without_point(status, search.pivots, search.nodes);
            if open_bound.is_finite() {
                r.best_bound = Some(sign * open_bound + model.objective().constant);
            }
            r
        }
    }
}
