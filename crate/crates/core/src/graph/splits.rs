use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::graph::{Graph, SplitSpec};

/// Stratified labeled set of `per_class_train` nodes per class, then a
/// random validation set of `val_size` nodes. The test set is the next
/// `test_size` nodes of the same shuffle, or the whole remainder when
/// `test_size` is `None`. All sets are returned sorted.
pub fn make_transductive_splits(
    g: &Graph,
    per_class_train: usize,
    val_size: usize,
    test_size: Option<usize>,
    seed: u64,
) -> Result<SplitSpec> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut by_class = vec![Vec::new(); g.num_classes()];
    for (v, &y) in g.labels().iter().enumerate() {
        by_class[y].push(v);
    }
    let mut train = Vec::with_capacity(per_class_train * g.num_classes());
    for (c, nodes) in by_class.iter_mut().enumerate() {
        if nodes.len() < per_class_train {
            return Err(Error::invalid(format!(
                "class {c} has {} nodes, fewer than the {per_class_train} requested for training",
                nodes.len()
            )));
        }
        nodes.shuffle(&mut rng);
        train.extend_from_slice(&nodes[..per_class_train]);
    }
    let taken: HashSet<usize> = train.iter().copied().collect();
    let mut rest: Vec<usize> = (0..g.num_nodes()).filter(|v| !taken.contains(v)).collect();
    let needed = val_size + test_size.unwrap_or(0);
    if rest.len() < needed {
        return Err(Error::invalid(format!(
            "only {} unlabeled nodes for {needed} validation/test nodes",
            rest.len()
        )));
    }
    rest.shuffle(&mut rng);
    let mut val = rest[..val_size].to_vec();
    let end = test_size.map_or(rest.len(), |t| val_size + t);
    let mut test = rest[val_size..end].to_vec();
    train.sort_unstable();
    val.sort_unstable();
    test.sort_unstable();
    Ok(SplitSpec {
        train,
        val,
        test,
        inductive: None,
        observed: None,
    })
}

/// Nodes outside the labeled and validation sets, ascending.
pub fn unlabeled_pool(num_nodes: usize, s: &SplitSpec) -> Vec<usize> {
    let labeled: HashSet<usize> = s.train.iter().chain(&s.val).copied().collect();
    (0..num_nodes).filter(|v| !labeled.contains(v)).collect()
}

/// Samples `round(fraction * |pool|)` unlabeled nodes as test-only
/// inductive nodes and returns the split together with the observed graph,
/// in which every edge touching an inductive node has been removed.
pub fn make_inductive_split(
    g: &Graph,
    s: &SplitSpec,
    inductive_fraction: f64,
    seed: u64,
) -> Result<(SplitSpec, Graph)> {
    if !(inductive_fraction > 0.0 && inductive_fraction < 1.0) {
        return Err(Error::invalid(format!(
            "inductive fraction {inductive_fraction} must lie in (0, 1)"
        )));
    }
    if s.is_inductive() {
        return Err(Error::invalid("split already has an inductive partition"));
    }
    let mut pool = unlabeled_pool(g.num_nodes(), s);
    let k = (inductive_fraction * pool.len() as f64).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    pool.shuffle(&mut rng);
    let mut inductive = pool[..k].to_vec();
    let mut observed = pool[k..].to_vec();
    inductive.sort_unstable();
    observed.sort_unstable();

    let hidden: HashSet<usize> = inductive.iter().copied().collect();
    let kept: Vec<_> = g
        .edges()
        .into_iter()
        .filter(|(u, v)| !hidden.contains(u) && !hidden.contains(v))
        .collect();
    let observed_graph = g.with_edges(&kept)?;
    let split = SplitSpec {
        inductive: Some(inductive),
        observed: Some(observed),
        ..s.clone()
    };
    split.validate(g.num_nodes())?;
    Ok((split, observed_graph))
}
