use crate::mesh::bfs_hops;

fn hops(adj: &[Vec<usize>], source: usize) -> Vec<usize> {
    bfs_hops(adj, source).into_iter().map(|h| h.unwrap_or(usize::MAX)).collect()
}

/// Farthest-point sampling over graph hop distance. The first anchor is the
/// vertex farthest from vertex 0; ties go to the lower index. Returned in
/// selection order.
pub fn farthest_point_anchors(adj: &[Vec<usize>], count: usize) -> Vec<usize> {
    let n = adj.len();
    let count = count.min(n);
    if count == 0 {
        return Vec::new();
    }
    let argmax = |d: &[usize], taken: &[bool]| {
        let mut best: Option<usize> = None;
        for v in 0..n {
            if !taken[v] && best.map_or(true, |b| d[v] > d[b]) {
                best = Some(v);
            }
        }
        best
    };
    let mut taken = vec![false; n];
    let first = argmax(&hops(adj, 0), &taken).unwrap();
    let mut chosen = vec![first];
    taken[first] = true;
    let mut dist = hops(adj, first);
    while chosen.len() < count {
        let Some(next) = argmax(&dist, &taken) else { break };
        chosen.push(next);
        taken[next] = true;
        for (d, h) in dist.iter_mut().zip(hops(adj, next)) {
            *d = (*d).min(h);
        }
    }
    chosen
}

/// Splits anchors (in selection order) into `groups` groups of at most
/// `group_size`: the first `groups` anchors seed the groups, every later
/// anchor joins the nearest seed with room left.
pub fn partition_anchors(adj: &[Vec<usize>], anchors: &[usize], groups: usize, group_size: usize) -> Vec<Vec<usize>> {
    let groups = groups.min(anchors.len());
    let seeds = &anchors[..groups];
    let dists: Vec<Vec<usize>> = seeds.iter().map(|&s| hops(adj, s)).collect();
    let mut out: Vec<Vec<usize>> = seeds.iter().map(|&s| vec![s]).collect();
    for &a in &anchors[groups..] {
        let target = (0..groups).filter(|&g| out[g].len() < group_size).min_by_key(|&g| (dists[g][a], g));
        match target {
            Some(g) => out[g].push(a),
            None => break,
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path(n: usize) -> Vec<Vec<usize>> {
        (0..n)
            .map(|i| {
                let mut v = Vec::new();
                if i > 0 {
                    v.push(i - 1);
                }
                if i + 1 < n {
                    v.push(i + 1);
                }
                v
            })
            .collect()
    }

    #[test]
    fn fps_on_a_path_spreads_out() {
        let adj = path(9);
        assert_eq!(farthest_point_anchors(&adj, 3), vec![8, 0, 4]);
        assert_eq!(farthest_point_anchors(&adj, 20).len(), 9);
    }

    #[test]
    fn partition_is_a_partition() {
        let adj = path(16);
        let anchors = farthest_point_anchors(&adj, 8);
        let groups = partition_anchors(&adj, &anchors, 2, 4);
        assert_eq!(groups.len(), 2);
        let mut all: Vec<usize> = groups.iter().flatten().copied().collect();
        all.sort_unstable();
        let mut want = anchors.clone();
        want.sort_unstable();
        assert_eq!(all, want);
        assert!(groups.iter().all(|g| g.len() == 4));
        // Seeds sit at opposite ends; each group keeps its own end.
        assert!(groups[0].iter().all(|&v| v >= 8) && groups[1].iter().all(|&v| v < 8));
    }
}
