use crate::error::{Error, Result};

/// Reply-to links for one channel. `parent[i] == i` marks a conversation
/// start.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ReplyGraph {
    parent: Vec<usize>,
}

impl ReplyGraph {
    pub fn new(parent: Vec<usize>) -> Result<Self> {
        for (i, &p) in parent.iter().enumerate() {
            if p > i {
                return Err(Error::Shape(format!("message {i} has later parent {p}")));
            }
        }
        Ok(ReplyGraph { parent })
    }

    /// Every message starts its own conversation.
    pub fn singletons(n: usize) -> Self {
        ReplyGraph {
            parent: (0..n).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.parent.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parent.is_empty()
    }

    pub fn parent(&self, i: usize) -> usize {
        self.parent[i]
    }

    pub fn parents(&self) -> &[usize] {
        &self.parent
    }

    pub fn num_self_links(&self) -> usize {
        self.parent.iter().enumerate().filter(|&(i, &p)| i == p).count()
    }
}

/// Disjoint-set forest with path compression and union by size.
#[derive(Clone, Debug)]
pub struct UnionFind {
    parent: Vec<usize>,
    size: Vec<usize>,
}

impl UnionFind {
    pub fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n).collect(),
            size: vec![1; n],
        }
    }

    pub fn find(&mut self, x: usize) -> usize {
        let mut root = x;
        while self.parent[root] != root {
            root = self.parent[root];
        }
        let mut node = x;
        while self.parent[node] != root {
            let next = self.parent[node];
            self.parent[node] = root;
            node = next;
        }
        root
    }

    pub fn union(&mut self, a: usize, b: usize) -> bool {
        let (mut ra, mut rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        if self.size[ra] < self.size[rb] {
            std::mem::swap(&mut ra, &mut rb);
        }
        self.parent[rb] = ra;
        self.size[ra] += self.size[rb];
        true
    }
}

/// A partition of message indices into conversations.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Clustering {
    assignment: Vec<usize>,
    num_clusters: usize,
}

impl Clustering {
    /// Relabels arbitrary labels to contiguous ids in order of first
    /// appearance.
    pub fn from_labels<L: Copy + Eq + std::hash::Hash>(labels: &[L]) -> Self {
        let mut ids = std::collections::HashMap::new();
        let assignment = labels
            .iter()
            .map(|l| {
                let next = ids.len();
                *ids.entry(*l).or_insert(next)
            })
            .collect();
        Clustering {
            assignment,
            num_clusters: ids.len(),
        }
    }

    pub fn len(&self) -> usize {
        self.assignment.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignment.is_empty()
    }

    pub fn num_clusters(&self) -> usize {
        self.num_clusters
    }

    pub fn cluster_of(&self, i: usize) -> usize {
        self.assignment[i]
    }

    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    /// Member lists per cluster, each sorted ascending.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.num_clusters];
        for (i, &c) in self.assignment.iter().enumerate() {
            out[c].push(i);
        }
        out
    }
}

/// Connected components of the undirected reply graph.
pub fn build_clusters(graph: &ReplyGraph) -> Clustering {
    let mut uf = UnionFind::new(graph.len());
    for (i, &p) in graph.parents().iter().enumerate() {
        uf.union(i, p);
    }
    let roots: Vec<usize> = (0..graph.len()).map(|i| uf.find(i)).collect();
    Clustering::from_labels(&roots)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn singletons_and_chain() {
        let c = build_clusters(&ReplyGraph::singletons(4));
        assert_eq!(c.num_clusters(), 4);
        let chain = build_clusters(&ReplyGraph::new(vec![0, 0, 1]).unwrap());
        assert_eq!(chain.num_clusters(), 1);
        assert_eq!(chain.members(), vec![vec![0, 1, 2]]);
    }

    #[test]
    fn rejects_forward_parent() {
        assert!(ReplyGraph::new(vec![1, 1]).is_err());
    }

    #[test]
    fn labels_are_contiguous() {
        let c = Clustering::from_labels(&[7, 3, 7, 9]);
        assert_eq!(c.assignment(), &[0, 1, 0, 2]);
        assert_eq!(c.num_clusters(), 3);
    }

    fn bfs_components(parent: &[usize]) -> Vec<usize> {
        let n = parent.len();
        let mut adj = vec![Vec::new(); n];
        for (i, &p) in parent.iter().enumerate() {
            adj[i].push(p);
            adj[p].push(i);
        }
        let mut label = vec![usize::MAX; n];
        let mut next = 0;
        for start in 0..n {
            if label[start] != usize::MAX {
                continue;
            }
            let mut queue = std::collections::VecDeque::from([start]);
            label[start] = next;
            while let Some(u) = queue.pop_front() {
                for &v in &adj[u] {
                    if label[v] == usize::MAX {
                        label[v] = next;
                        queue.push_back(v);
                    }
                }
            }
            next += 1;
        }
        label
    }

    fn graph_strategy() -> impl Strategy<Value = Vec<usize>> {
        (1usize..=200).prop_flat_map(|n| {
            (0..n)
                .map(|i| prop_oneof![1 => Just(i), 3 => 0..=i].boxed())
                .collect::<Vec<_>>()
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn matches_bfs_components(parent in graph_strategy()) {
            let g = ReplyGraph::new(parent.clone()).unwrap();
            let c = build_clusters(&g);
            let oracle = bfs_components(&parent);
            prop_assert_eq!(c.assignment(), oracle.as_slice());
            prop_assert_eq!(c.num_clusters(), g.num_self_links());
        }
    }
}
