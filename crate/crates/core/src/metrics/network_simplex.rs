//! Primal network simplex for the balanced, uncapacitated transportation
//! problem.
//!
//! Sources `0..n`, sinks `n..n+m` and an artificial root `n+m`. The starting
//! basis routes everything through big-M artificial arcs to the root, which
//! gives a strongly feasible tree; the leaving-arc rule (strict on the
//! entering arc's source side of the cycle, non-strict on its target side)
//! keeps it strongly feasible so degenerate pivots cannot cycle.
//!
//! Non-basic arcs always sit at zero flow, so flow is stored per node for the
//! tree arc to its parent and costs are evaluated on demand. Memory is
//! O(n + m) regardless of the number of arcs.

use crate::error::{Error, Result};

struct Simplex<C> {
    n: usize,
    m: usize,
    cost: C,
    /// Orientation of artificial arc `u`: `u -> root` when true.
    art_up: Vec<bool>,
    parent: Vec<usize>,
    pred: Vec<usize>,
    /// Whether `pred[u]` points from `u` to its parent.
    up: Vec<bool>,
    /// Flow on `pred[u]`.
    flow: Vec<f64>,
    pi: Vec<f64>,
    adj: Vec<Vec<usize>>,
    stamp: Vec<u32>,
    epoch: u32,
    stack: Vec<(usize, usize)>,
}

impl<C: Fn(usize, usize) -> f64> Simplex<C> {
    fn nm(&self) -> usize {
        self.n * self.m
    }

    fn root(&self) -> usize {
        self.n + self.m
    }

    fn ends(&self, e: usize) -> (usize, usize) {
        let nm = self.nm();
        if e < nm {
            (e / self.m, self.n + e % self.m)
        } else {
            let u = e - nm;
            if self.art_up[u] {
                (u, self.root())
            } else {
                (self.root(), u)
            }
        }
    }

    fn find_join(&mut self, a: usize, b: usize) -> usize {
        self.epoch = self.epoch.wrapping_add(1);
        if self.epoch == 0 {
            self.stamp.fill(0);
            self.epoch = 1;
        }
        let root = self.root();
        let mut u = a;
        loop {
            self.stamp[u] = self.epoch;
            if u == root {
                break;
            }
            u = self.parent[u];
        }
        let mut v = b;
        while self.stamp[v] != self.epoch {
            v = self.parent[v];
        }
        v
    }

    fn pivot(&mut self, in_arc: usize, rc: f64) {
        let (first, second) = self.ends(in_arc);
        let join = self.find_join(first, second);

        let mut delta = f64::INFINITY;
        let mut u_out = usize::MAX;
        let mut on_first_side = true;
        let mut u = first;
        while u != join {
            if self.up[u] && self.flow[u] < delta {
                delta = self.flow[u];
                u_out = u;
            }
            u = self.parent[u];
        }
        let mut u = second;
        while u != join {
            if !self.up[u] && self.flow[u] <= delta {
                delta = self.flow[u];
                u_out = u;
                on_first_side = false;
            }
            u = self.parent[u];
        }
        debug_assert!(u_out != usize::MAX, "unbounded cycle");

        if delta > 0.0 {
            let mut u = first;
            while u != join {
                if self.up[u] {
                    self.flow[u] -= delta
                } else {
                    self.flow[u] += delta
                }
                u = self.parent[u];
            }
            let mut u = second;
            while u != join {
                if self.up[u] {
                    self.flow[u] += delta
                } else {
                    self.flow[u] -= delta
                }
                u = self.parent[u];
            }
        }

        let (u_in, v_in) = if on_first_side {
            (first, second)
        } else {
            (second, first)
        };
        let out_arc = self.pred[u_out];
        let out_parent = self.parent[u_out];

        // The detached subtree contains u_in; shift it so in_arc gets zero
        // reduced cost.
        let shift = if u_in == first { -rc } else { rc };
        self.stack.clear();
        self.stack.push((u_out, out_arc));
        while let Some((v, via)) = self.stack.pop() {
            self.pi[v] += shift;
            for k in 0..self.adj[v].len() {
                let e = self.adj[v][k];
                if e != via {
                    let (s, t) = self.ends(e);
                    self.stack.push((if s == v { t } else { s }, e));
                }
            }
        }

        // Re-hang the path u_in .. u_out beneath v_in.
        let mut u = u_in;
        let mut new_parent = v_in;
        let mut new_pred = in_arc;
        let mut new_up = first == u_in;
        let mut new_flow = delta;
        loop {
            let old = (self.parent[u], self.pred[u], self.up[u], self.flow[u]);
            self.parent[u] = new_parent;
            self.pred[u] = new_pred;
            self.up[u] = new_up;
            self.flow[u] = new_flow;
            if u == u_out {
                break;
            }
            new_parent = u;
            new_pred = old.1;
            new_up = !old.2;
            new_flow = old.3;
            u = old.0;
        }

        for node in [u_out, out_parent] {
            let list = &mut self.adj[node];
            let pos = list
                .iter()
                .position(|&e| e == out_arc)
                .expect("leaving arc is a tree arc");
            list.swap_remove(pos);
        }
        self.adj[u_in].push(in_arc);
        self.adj[v_in].push(in_arc);
    }
}

/// Basic flows `(i, j, mass)` of an optimal plan for non-negative supplies
/// and demands with equal totals. `cost(i, j)` is evaluated on demand.
pub(crate) fn solve_transport<C>(
    supply: &[f64],
    demand: &[f64],
    cost: C,
) -> Result<Vec<(usize, usize, f64)>>
where
    C: Fn(usize, usize) -> f64,
{
    let (n, m) = (supply.len(), demand.len());
    if n == 0 || m == 0 {
        return Err(Error::Argument(
            "transport problem needs non-empty supports".into(),
        ));
    }
    let nodes = n + m;
    let nm = n * m;
    let mut max_cost = 0.0f64;
    for i in 0..n {
        for j in 0..m {
            let c = cost(i, j);
            if !c.is_finite() {
                return Err(Error::Argument(format!(
                    "non-finite transport cost at ({i}, {j})"
                )));
            }
            max_cost = max_cost.max(c.abs());
        }
    }
    let art_cost = (max_cost + 1.0) * nodes as f64;
    let tol = 1e-12 * art_cost;

    let mut s = Simplex {
        n,
        m,
        cost,
        art_up: vec![false; nodes],
        parent: vec![nodes; nodes + 1],
        pred: vec![usize::MAX; nodes + 1],
        up: vec![false; nodes + 1],
        flow: vec![0.0; nodes + 1],
        pi: vec![0.0; nodes + 1],
        adj: vec![Vec::new(); nodes + 1],
        stamp: vec![0; nodes + 1],
        epoch: 0,
        stack: Vec::new(),
    };
    for u in 0..nodes {
        let b = if u < n { supply[u] } else { -demand[u - n] };
        let e = nm + u;
        s.art_up[u] = b > 0.0;
        s.up[u] = b > 0.0;
        s.pred[u] = e;
        s.flow[u] = b.abs();
        s.pi[u] = if b > 0.0 { 0.0 } else { art_cost };
        s.adj[u].push(e);
        s.adj[nodes].push(e);
    }

    // Block search for an entering arc over the real arcs, resuming where the
    // previous search stopped.
    let block = ((nm as f64).sqrt().ceil() as usize).max(10);
    let (mut ci, mut cj) = (0usize, 0usize);
    loop {
        let mut best = -tol;
        let mut entering = None;
        let mut count = 0usize;
        for _ in 0..nm {
            let c = (s.cost)(ci, cj) + s.pi[ci] - s.pi[n + cj];
            if c < best {
                best = c;
                entering = Some(ci * m + cj);
            }
            cj += 1;
            if cj == m {
                cj = 0;
                ci += 1;
                if ci == n {
                    ci = 0;
                }
            }
            count += 1;
            if count == block {
                if entering.is_some() {
                    break;
                }
                count = 0;
            }
        }
        match entering {
            Some(e) => s.pivot(e, best),
            None => break,
        }
    }

    let total: f64 = supply.iter().sum();
    let mut plan = Vec::with_capacity(nodes);
    let mut residual = 0.0;
    for u in 0..nodes {
        let e = s.pred[u];
        if e >= nm {
            residual += s.flow[u];
        } else if s.flow[u] > 0.0 {
            plan.push((e / m, e % m, s.flow[u]));
        }
    }
    if residual > 1e-9 * total.max(1.0) {
        return Err(Error::Argument(format!(
            "unbalanced transport problem (artificial flow {residual})"
        )));
    }
    plan.sort_by_key(|a| (a.0, a.1));
    Ok(plan)
}
