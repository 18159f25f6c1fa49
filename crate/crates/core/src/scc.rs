//! Iterative Tarjan strongly connected components.

/// Strongly connected components of the subgraph induced by `active`.
///
/// Components come out in reverse topological order of the condensation:
/// every component is emitted after all components reachable from it.
pub fn tarjan(adj: &[Vec<usize>], active: &[bool]) -> Vec<Vec<usize>> {
    const UNSEEN: usize = usize::MAX;
    let n = adj.len();
    let mut index = vec![UNSEEN; n];
    let mut low = vec![0usize; n];
    let mut on_stack = vec![false; n];
    let mut stack = Vec::new();
    let mut comps = Vec::new();
    let mut next = 0usize;
    // (node, position in its successor list)
    let mut call: Vec<(usize, usize)> = Vec::new();

    for root in 0..n {
        if !active[root] || index[root] != UNSEEN {
            continue;
        }
        call.push((root, 0));
        index[root] = next;
        low[root] = next;
        next += 1;
        stack.push(root);
        on_stack[root] = true;

        while let Some(&mut (v, ref mut pos)) = call.last_mut() {
            if *pos < adj[v].len() {
                let w = adj[v][*pos];
                *pos += 1;
                if !active[w] {
                    continue;
                }
                if index[w] == UNSEEN {
                    index[w] = next;
                    low[w] = next;
                    next += 1;
                    stack.push(w);
                    on_stack[w] = true;
                    call.push((w, 0));
                } else if on_stack[w] {
                    low[v] = low[v].min(index[w]);
                }
            } else {
                call.pop();
                if let Some(&(parent, _)) = call.last() {
                    low[parent] = low[parent].min(low[v]);
                }
                if low[v] == index[v] {
                    let mut comp = Vec::new();
                    loop {
                        let w = stack.pop().unwrap();
                        on_stack[w] = false;
                        comp.push(w);
                        if w == v {
                            break;
                        }
                    }
                    comp.sort_unstable();
                    comps.push(comp);
                }
            }
        }
    }
    comps
}

/// A component is nontrivial when it has two or more nodes or a self-loop.
pub fn is_nontrivial(adj: &[Vec<usize>], comp: &[usize]) -> bool {
    comp.len() > 1 || adj[comp[0]].contains(&comp[0])
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Brute force: u ~ v iff mutually reachable.
    fn brute(adj: &[Vec<usize>]) -> Vec<Vec<usize>> {
        let n = adj.len();
        let mut reach = vec![vec![false; n]; n];
        for s in 0..n {
            let mut st = vec![s];
            reach[s][s] = true;
            while let Some(v) = st.pop() {
                for w in &adj[v] {
                    if !reach[s][*w] {
                        reach[s][*w] = true;
                        st.push(*w);
                    }
                }
            }
        }
        let mut seen = vec![false; n];
        let mut out = Vec::new();
        for s in 0..n {
            if seen[s] {
                continue;
            }
            let c: Vec<usize> = (0..n).filter(|t| reach[s][*t] && reach[*t][s]).collect();
            for t in &c {
                seen[*t] = true;
            }
            out.push(c);
        }
        out.sort();
        out
    }

    #[test]
    fn matches_brute_force_and_order() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let n = rng.gen_range(1..25);
            let adj: Vec<Vec<usize>> = (0..n)
                .map(|_| (0..n).filter(|_| rng.gen_bool(0.12)).collect())
                .collect();
            let comps = tarjan(&adj, &vec![true; n]);
            let mut sorted = comps.clone();
            sorted.sort();
            assert_eq!(sorted, brute(&adj));
            // edges only point to components emitted earlier (or the same one)
            let mut pos = vec![0; n];
            for (i, c) in comps.iter().enumerate() {
                for v in c {
                    pos[*v] = i;
                }
            }
            for v in 0..n {
                for w in &adj[v] {
                    assert!(pos[*w] <= pos[v]);
                }
            }
        }
    }

    #[test]
    fn respects_mask() {
        let adj = vec![vec![1], vec![2], vec![0]];
        let comps = tarjan(&adj, &[true, true, false]);
        assert_eq!(comps.len(), 2);
        assert!(comps.iter().all(|c| !is_nontrivial(&adj, c) || c.len() > 1));
    }

    #[test]
    fn long_path_does_not_recurse() {
        let n = 200_000;
        let adj: Vec<Vec<usize>> = (0..n).map(|i| if i + 1 < n { vec![i + 1] } else { vec![0] }).collect();
        let comps = tarjan(&adj, &vec![true; n]);
        assert_eq!(comps.len(), 1);
    }
}
