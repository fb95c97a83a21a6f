//! Exact discrete optimal transport by the primal network simplex method on
//! the complete bipartite graph, with integer supplies.

use crate::error::{Error, Result};
use crate::matrix::Matrix;

const NONE: usize = usize::MAX;
const DIR_UP: i64 = 1;
const DIR_DOWN: i64 = -1;

/// Optimal coupling, stored sparsely as its basic cells.
#[derive(Clone, Debug)]
pub struct TransportPlan {
    pub n_source: usize,
    pub n_target: usize,
    /// `(i, j, mass)` with positive mass.
    pub flows: Vec<(usize, usize, f64)>,
    pub objective: f64,
    /// Dual potentials with `f_i + g_j <= c_ij`.
    pub f: Vec<f64>,
    pub g: Vec<f64>,
}

impl TransportPlan {
    pub fn to_dense(&self) -> Matrix {
        let mut m = Matrix::zeros(self.n_source, self.n_target);
        for &(i, j, w) in &self.flows {
            m[(i, j)] += w;
        }
        m
    }

    /// Checks marginals, dual feasibility, complementary slackness and the
    /// duality gap, all to `tol`.
    pub fn certify(&self, cost: &Matrix, a: &[f64], b: &[f64], tol: f64) -> Result<()> {
        let mut row = vec![0.0; self.n_source];
        let mut col = vec![0.0; self.n_target];
        for &(i, j, w) in &self.flows {
            if w < -tol {
                return Err(Error::Numerical(format!("negative mass {w} at ({i}, {j})")));
            }
            row[i] += w;
            col[j] += w;
            let slack = cost[(i, j)] - self.f[i] - self.g[j];
            if slack.abs() > tol * (1.0 + cost[(i, j)].abs()) {
                return Err(Error::Numerical(format!(
                    "slackness violated at ({i}, {j}) by {slack}"
                )));
            }
        }
        for (i, (r, ai)) in row.iter().zip(a).enumerate() {
            if (r - ai).abs() > tol {
                return Err(Error::Numerical(format!("row {i} marginal {r} != {ai}")));
            }
        }
        for (j, (c, bj)) in col.iter().zip(b).enumerate() {
            if (c - bj).abs() > tol {
                return Err(Error::Numerical(format!("column {j} marginal {c} != {bj}")));
            }
        }
        for i in 0..self.n_source {
            for j in 0..self.n_target {
                let slack = cost[(i, j)] - self.f[i] - self.g[j];
                if slack < -tol * (1.0 + cost[(i, j)].abs()) {
                    return Err(Error::Numerical(format!(
                        "dual infeasible at ({i}, {j}) by {slack}"
                    )));
                }
            }
        }
        let dual: f64 = self.f.iter().zip(a).map(|(f, a)| f * a).sum::<f64>()
            + self.g.iter().zip(b).map(|(g, b)| g * b).sum::<f64>();
        if (dual - self.objective).abs() > tol * (1.0 + self.objective.abs()) {
            return Err(Error::Numerical(format!(
                "duality gap {}",
                self.objective - dual
            )));
        }
        Ok(())
    }
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Integer supplies summing to the same total. Weights that are exact
/// multiples of `1/lcm(n, m)` (uniform weights in particular) convert
/// exactly; anything else is rounded on a 2^40 grid by largest remainder.
fn integer_masses(a: &[f64], b: &[f64]) -> (Vec<i64>, Vec<i64>, f64) {
    let (n, m) = (a.len() as u64, b.len() as u64);
    let lcm = n / gcd(n, m) * m;
    let exact = |w: &[f64]| {
        w.iter()
            .all(|x| (x * lcm as f64 - (x * lcm as f64).round()).abs() < 1e-6)
    };
    if lcm < (1 << 40) && exact(a) && exact(b) {
        let conv = |w: &[f64]| {
            w.iter()
                .map(|x| (x * lcm as f64).round() as i64)
                .collect::<Vec<_>>()
        };
        let (sa, sb) = (conv(a), conv(b));
        if sa.iter().sum::<i64>() == lcm as i64 && sb.iter().sum::<i64>() == lcm as i64 {
            return (sa, sb, lcm as f64);
        }
    }
    let scale = (1u64 << 40) as f64;
    let round = |w: &[f64]| {
        let mut out: Vec<i64> = w.iter().map(|x| (x * scale).floor() as i64).collect();
        let short = scale as i64 - out.iter().sum::<i64>();
        let mut order: Vec<usize> = (0..w.len()).collect();
        order.sort_by(|&p, &q| {
            let rp = w[p] * scale - out[p] as f64;
            let rq = w[q] * scale - out[q] as f64;
            rq.total_cmp(&rp)
        });
        for &k in order.iter().cycle().take(short.unsigned_abs() as usize) {
            out[k] += short.signum();
        }
        out
    };
    (round(a), round(b), scale)
}

struct Simplex<'a> {
    cost: &'a Matrix,
    ns: usize,
    nt: usize,
    m: usize,
    root: usize,
    art_source: Vec<usize>,
    art_target: Vec<usize>,
    art_cost: Vec<f64>,
    in_tree: Vec<bool>,
    parent: Vec<usize>,
    pred: Vec<usize>,
    pred_dir: Vec<i64>,
    pred_flow: Vec<i64>,
    thread: Vec<usize>,
    rev_thread: Vec<usize>,
    succ_num: Vec<usize>,
    last_succ: Vec<usize>,
    pi: Vec<f64>,
    dirty_revs: Vec<usize>,
    next_arc: usize,
    block: usize,
    eps: f64,
    in_arc: usize,
    join: usize,
    u_in: usize,
    v_in: usize,
    u_out: usize,
    delta: i64,
}

impl<'a> Simplex<'a> {
    fn new(cost: &'a Matrix, sa: &[i64], sb: &[i64]) -> Self {
        let (ns, nt) = cost.shape();
        let n = ns + nt;
        let m = ns * nt;
        let max_cost = cost
            .as_slice()
            .iter()
            .fold(0.0f64, |acc, c| acc.max(c.abs()));
        let art = (max_cost + 1.0) * n as f64;
        let mut s = Simplex {
            cost,
            ns,
            nt,
            m,
            root: n,
            art_source: vec![0; n],
            art_target: vec![0; n],
            art_cost: vec![0.0; n],
            in_tree: vec![false; m],
            parent: vec![n; n + 1],
            pred: vec![0; n + 1],
            pred_dir: vec![0; n + 1],
            pred_flow: vec![0; n + 1],
            thread: vec![0; n + 1],
            rev_thread: vec![0; n + 1],
            succ_num: vec![1; n + 1],
            last_succ: vec![0; n + 1],
            pi: vec![0.0; n + 1],
            dirty_revs: Vec::new(),
            next_arc: 0,
            block: ((m as f64).sqrt().ceil() as usize).max(10),
            eps: 1e-12 * max_cost.max(1.0),
            in_arc: 0,
            join: 0,
            u_in: 0,
            v_in: 0,
            u_out: 0,
            delta: 0,
        };
        let root = n;
        s.parent[root] = NONE;
        s.pred[root] = NONE;
        s.thread[root] = 0;
        s.rev_thread[0] = root;
        s.succ_num[root] = n + 1;
        s.last_succ[root] = root - 1;
        for u in 0..n {
            let supply = if u < ns { sa[u] } else { -sb[u - ns] };
            s.pred[u] = m + u;
            s.thread[u] = u + 1;
            s.rev_thread[u + 1] = u;
            s.last_succ[u] = u;
            if supply >= 0 {
                s.pred_dir[u] = DIR_UP;
                s.art_source[u] = u;
                s.art_target[u] = root;
                s.pred_flow[u] = supply;
            } else {
                s.pred_dir[u] = DIR_DOWN;
                s.pi[u] = art;
                s.art_source[u] = root;
                s.art_target[u] = u;
                s.art_cost[u] = art;
                s.pred_flow[u] = -supply;
            }
        }
        s
    }

    fn source(&self, e: usize) -> usize {
        if e < self.m {
            e / self.nt
        } else {
            self.art_source[e - self.m]
        }
    }

    fn target(&self, e: usize) -> usize {
        if e < self.m {
            self.ns + e % self.nt
        } else {
            self.art_target[e - self.m]
        }
    }

    fn arc_cost(&self, e: usize) -> f64 {
        if e < self.m {
            self.cost.as_slice()[e]
        } else {
            self.art_cost[e - self.m]
        }
    }

    fn reduced(&self, e: usize) -> f64 {
        let (i, j) = (e / self.nt, self.ns + e % self.nt);
        self.cost.as_slice()[e] + self.pi[i] - self.pi[j]
    }

    fn find_entering_arc(&mut self) -> bool {
        let mut min = -self.eps;
        let mut found = false;
        let mut cnt = self.block;
        let start = self.next_arc;
        for step in 0..self.m {
            let e = (start + step) % self.m;
            if !self.in_tree[e] {
                let c = self.reduced(e);
                if c < min {
                    min = c;
                    self.in_arc = e;
                    found = true;
                }
            }
            cnt -= 1;
            if cnt == 0 {
                if found {
                    self.next_arc = (e + 1) % self.m;
                    return true;
                }
                cnt = self.block;
            }
        }
        found
    }

    fn find_join_node(&mut self) {
        let (mut u, mut v) = (self.source(self.in_arc), self.target(self.in_arc));
        while u != v {
            if self.succ_num[u] < self.succ_num[v] {
                u = self.parent[u];
            } else {
                v = self.parent[v];
            }
        }
        self.join = u;
    }

    fn find_leaving_arc(&mut self) -> bool {
        let first = self.source(self.in_arc);
        let second = self.target(self.in_arc);
        let mut delta = i64::MAX;
        let mut result = 0;
        let mut u = first;
        while u != self.join {
            if self.pred_dir[u] == DIR_UP && self.pred_flow[u] < delta {
                delta = self.pred_flow[u];
                self.u_out = u;
                result = 1;
            }
            u = self.parent[u];
        }
        u = second;
        while u != self.join {
            if self.pred_dir[u] == DIR_DOWN && self.pred_flow[u] <= delta {
                delta = self.pred_flow[u];
                self.u_out = u;
                result = 2;
            }
            u = self.parent[u];
        }
        if result == 1 {
            self.u_in = first;
            self.v_in = second;
        } else {
            self.u_in = second;
            self.v_in = first;
        }
        self.delta = delta;
        result != 0
    }

    fn change_flow(&mut self) {
        let val = self.delta;
        if val > 0 {
            let mut u = self.source(self.in_arc);
            while u != self.join {
                self.pred_flow[u] -= self.pred_dir[u] * val;
                u = self.parent[u];
            }
            u = self.target(self.in_arc);
            while u != self.join {
                self.pred_flow[u] += self.pred_dir[u] * val;
                u = self.parent[u];
            }
        }
        self.in_tree[self.in_arc] = true;
        let out = self.pred[self.u_out];
        if out < self.m {
            self.in_tree[out] = false;
        }
    }

    fn update_tree_structure(&mut self) {
        let (u_in, v_in, u_out, join, in_arc) =
            (self.u_in, self.v_in, self.u_out, self.join, self.in_arc);
        let old_rev_thread = self.rev_thread[u_out];
        let old_succ_num = self.succ_num[u_out];
        let old_last_succ = self.last_succ[u_out];
        let v_out = self.parent[u_out];
        let in_dir = if u_in == self.source(in_arc) {
            DIR_UP
        } else {
            DIR_DOWN
        };

        if u_in == u_out {
            self.parent[u_in] = v_in;
            self.pred[u_in] = in_arc;
            self.pred_dir[u_in] = in_dir;
            self.pred_flow[u_in] = self.delta;
            if self.thread[v_in] != u_out {
                let mut after = self.thread[old_last_succ];
                self.thread[old_rev_thread] = after;
                self.rev_thread[after] = old_rev_thread;
                after = self.thread[v_in];
                self.thread[v_in] = u_out;
                self.rev_thread[u_out] = v_in;
                self.thread[old_last_succ] = after;
                self.rev_thread[after] = old_last_succ;
            }
        } else {
            let thread_continue = if old_rev_thread == v_in {
                self.thread[old_last_succ]
            } else {
                self.thread[v_in]
            };
            let mut stem = u_in;
            let mut par_stem = v_in;
            let mut last = self.last_succ[u_in];
            let mut after = self.thread[last];
            self.thread[v_in] = u_in;
            self.dirty_revs.clear();
            self.dirty_revs.push(v_in);
            while stem != u_out {
                let next_stem = self.parent[stem];
                self.thread[last] = next_stem;
                self.dirty_revs.push(last);
                let before = self.rev_thread[stem];
                self.thread[before] = after;
                self.rev_thread[after] = before;
                self.parent[stem] = par_stem;
                par_stem = stem;
                stem = next_stem;
                last = if self.last_succ[stem] == self.last_succ[par_stem] {
                    self.rev_thread[par_stem]
                } else {
                    self.last_succ[stem]
                };
                after = self.thread[last];
            }
            self.parent[u_out] = par_stem;
            self.thread[last] = thread_continue;
            self.rev_thread[thread_continue] = last;
            self.last_succ[u_out] = last;
            if old_rev_thread != v_in {
                self.thread[old_rev_thread] = after;
                self.rev_thread[after] = old_rev_thread;
            }
            for k in 0..self.dirty_revs.len() {
                let u = self.dirty_revs[k];
                let t = self.thread[u];
                self.rev_thread[t] = u;
            }
            let mut tmp_sc = 0usize;
            let tmp_ls = self.last_succ[u_out];
            let mut u = u_out;
            while u != u_in {
                let p = self.parent[u];
                self.pred[u] = self.pred[p];
                self.pred_dir[u] = -self.pred_dir[p];
                self.pred_flow[u] = self.pred_flow[p];
                tmp_sc = tmp_sc + self.succ_num[u] - self.succ_num[p];
                self.succ_num[u] = tmp_sc;
                self.last_succ[p] = tmp_ls;
                u = p;
            }
            self.pred[u_in] = in_arc;
            self.pred_dir[u_in] = in_dir;
            self.pred_flow[u_in] = self.delta;
            self.succ_num[u_in] = old_succ_num;
        }

        let up_limit_out = if self.last_succ[join] == v_in {
            join
        } else {
            NONE
        };
        let last_succ_out = self.last_succ[u_out];
        let mut u = v_in;
        while u != NONE && self.last_succ[u] == v_in {
            self.last_succ[u] = last_succ_out;
            u = self.parent[u];
        }
        if join != old_rev_thread && v_in != old_rev_thread {
            let mut u = v_out;
            while u != up_limit_out && self.last_succ[u] == old_last_succ {
                self.last_succ[u] = old_rev_thread;
                u = self.parent[u];
            }
        } else if last_succ_out != old_last_succ {
            let mut u = v_out;
            while u != up_limit_out && self.last_succ[u] == old_last_succ {
                self.last_succ[u] = last_succ_out;
                u = self.parent[u];
            }
        }
        let mut u = v_in;
        while u != join {
            self.succ_num[u] += old_succ_num;
            u = self.parent[u];
        }
        let mut u = v_out;
        while u != join {
            self.succ_num[u] -= old_succ_num;
            u = self.parent[u];
        }
    }

    fn update_potential(&mut self) {
        let (u_in, v_in) = (self.u_in, self.v_in);
        let sigma =
            self.pi[v_in] - self.pi[u_in] - self.pred_dir[u_in] as f64 * self.arc_cost(self.in_arc);
        let end = self.thread[self.last_succ[u_in]];
        let mut u = u_in;
        while u != end {
            self.pi[u] += sigma;
            u = self.thread[u];
        }
    }

    fn run(&mut self) -> Result<()> {
        let limit = 50 * (self.m + self.root) + 10_000;
        let mut iterations = 0;
        while self.find_entering_arc() {
            iterations += 1;
            if iterations > limit {
                return Err(Error::Numerical("network simplex did not converge".into()));
            }
            self.find_join_node();
            if !self.find_leaving_arc() {
                return Err(Error::Numerical("unbounded transport problem".into()));
            }
            self.change_flow();
            self.update_tree_structure();
            self.update_potential();
        }
        for u in 0..self.root {
            if self.pred[u] >= self.m && self.pred_flow[u] != 0 {
                return Err(Error::Numerical("transport problem infeasible".into()));
            }
        }
        Ok(())
    }
}

/// Solves `min <pi, cost>` over couplings of `a` (rows) and `b` (columns).
pub fn ot_solve(cost: &Matrix, a: &[f64], b: &[f64]) -> Result<TransportPlan> {
    let (ns, nt) = cost.shape();
    if a.len() != ns || b.len() != nt {
        return Err(Error::Shape {
            op: "ot_solve",
            lhs: (a.len(), b.len()),
            rhs: (ns, nt),
        });
    }
    if ns == 0 || nt == 0 {
        return Err(Error::domain("transport between empty samples"));
    }
    for (name, w) in [("source", a), ("target", b)] {
        if w.iter().any(|x| !x.is_finite() || *x < 0.0) {
            return Err(Error::domain(format!(
                "{name} weights must be finite and non-negative"
            )));
        }
        let s: f64 = w.iter().sum();
        if (s - 1.0).abs() > 1e-9 {
            return Err(Error::domain(format!(
                "{name} weights sum to {s}, expected 1"
            )));
        }
    }
    if !cost.is_finite() {
        return Err(Error::domain("cost matrix has non-finite entries"));
    }
    let (sa, sb, scale) = integer_masses(a, b);
    let mut s = Simplex::new(cost, &sa, &sb);
    s.run()?;
    let mut flows = Vec::new();
    let mut objective = 0.0;
    for u in 0..s.root {
        let e = s.pred[u];
        if e < s.m && s.pred_flow[u] > 0 {
            let mass = s.pred_flow[u] as f64 / scale;
            let (i, j) = (e / nt, e % nt);
            objective += mass * cost[(i, j)];
            flows.push((i, j, mass));
        }
    }
    flows.sort_by_key(|p| (p.0, p.1));
    let f = s.pi[..ns].iter().map(|p| -p).collect();
    let g = s.pi[ns..s.root].to_vec();
    Ok(TransportPlan {
        n_source: ns,
        n_target: nt,
        flows,
        objective,
        f,
        g,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use itertools::Itertools;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn brute_force_assignment(cost: &Matrix) -> f64 {
        let n = cost.rows();
        (0..n)
            .permutations(n)
            .map(|p| {
                p.iter()
                    .enumerate()
                    .map(|(i, &j)| cost[(i, j)])
                    .sum::<f64>()
                    / n as f64
            })
            .fold(f64::INFINITY, f64::min)
    }

    fn random_cost(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Matrix {
        Matrix::from_vec(
            r,
            c,
            (0..r * c).map(|_| rng.random_range(0.0..10.0)).collect(),
        )
        .unwrap()
    }

    #[test]
    fn hand_example() {
        let cost = Matrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        let plan = ot_solve(&cost, &[0.5, 0.5], &[0.5, 0.5]).unwrap();
        assert_abs_diff_eq!(plan.objective, 0.0);
        let plan = ot_solve(&cost, &[1.0, 0.0], &[0.5, 0.5]).unwrap();
        assert_abs_diff_eq!(plan.objective, 0.5);
        plan.certify(&cost, &[1.0, 0.0], &[0.5, 0.5], 1e-9).unwrap();
    }

    #[test]
    fn matches_permutation_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for n in 1..=7 {
            for _ in 0..20 {
                let cost = random_cost(&mut rng, n, n);
                let w = vec![1.0 / n as f64; n];
                let plan = ot_solve(&cost, &w, &w).unwrap();
                assert_abs_diff_eq!(
                    plan.objective,
                    brute_force_assignment(&cost),
                    epsilon = 1e-9
                );
                plan.certify(&cost, &w, &w, 1e-7).unwrap();
            }
        }
    }

    #[test]
    fn unequal_sizes_are_certified() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for (r, c) in [(3, 5), (7, 2), (40, 25), (120, 90)] {
            let cost = random_cost(&mut rng, r, c);
            let (a, b) = (vec![1.0 / r as f64; r], vec![1.0 / c as f64; c]);
            let plan = ot_solve(&cost, &a, &b).unwrap();
            plan.certify(&cost, &a, &b, 1e-7).unwrap();
            let dense = plan.to_dense();
            assert_abs_diff_eq!(dense.sum(), 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn non_uniform_weights() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let cost = random_cost(&mut rng, 6, 4);
        let mut a: Vec<f64> = (0..6).map(|_| rng.random_range(0.1..1.0)).collect();
        let s: f64 = a.iter().sum();
        a.iter_mut().for_each(|x| *x /= s);
        let b = vec![0.25; 4];
        ot_solve(&cost, &a, &b)
            .unwrap()
            .certify(&cost, &a, &b, 1e-7)
            .unwrap();
    }

    #[test]
    fn rejects_bad_weights() {
        let cost = Matrix::zeros(2, 2);
        assert!(ot_solve(&cost, &[0.5, 0.6], &[0.5, 0.5]).is_err());
        assert!(ot_solve(&cost, &[1.5, -0.5], &[0.5, 0.5]).is_err());
        assert!(ot_solve(&cost, &[1.0], &[0.5, 0.5]).is_err());
    }

    proptest! {
        #[test]
        fn prop_transposed_problem_same_cost(seed in 0u64..1000, r in 1usize..9, c in 1usize..9) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let cost = random_cost(&mut rng, r, c);
            let (a, b) = (vec![1.0 / r as f64; r], vec![1.0 / c as f64; c]);
            let p = ot_solve(&cost, &a, &b).unwrap();
            let q = ot_solve(&cost.transpose(), &b, &a).unwrap();
            prop_assert!((p.objective - q.objective).abs() < 1e-9);
            p.certify(&cost, &a, &b, 1e-7).unwrap();
        }
    }
}
