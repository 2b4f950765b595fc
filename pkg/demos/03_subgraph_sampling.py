"""
The sub-graph around one query
==============================

Seeds are the target user plus everyone who shared the queried item to
them last step. A BFS over the union of earlier steps collects the rest.
"""

import numpy as np

from infnet.events import ItemCatalog, PurchaseIndex, build_dynamic_network, materialize_queries
from infnet.sampler import FeatureConfig, SubgraphSampler, dump_subgraph
from infnet.synth import SynthConfig, generate

logs = generate(SynthConfig(n_users=2000, n_items=100, n_categories=5, base_share_rate=0.06, history_steps=3, share_history_steps=1, seed=3))
catalog = ItemCatalog(logs.catalog)
net = build_dynamic_network(logs.diffusion, logs.grid)
purchases = PurchaseIndex(logs.purchase)
features = FeatureConfig.from_catalog(catalog, n_bins=4)
sampler = SubgraphSampler(net, catalog, purchases, features, depth=2)

queries = materialize_queries(net, purchases, net.n_steps - 1)
q = max(queries, key=lambda q: len(sampler.sample(q).users))
sg = sampler.sample(q)
print(q)
print(f"{sg.n_nodes} nodes, seeds {sg.seeds}, {sg.n_steps} steps")

# node features: price-bin purchase histogram then a one-hot role (target, seed, other)
print("node feature width", features.node_dim)
print("target row", sg.node_feat[0])

# depth controls how far the BFS reaches
print("sizes by depth", [len(sampler.sample(q, d).users) for d in range(4)])
print(dump_subgraph(sg)[:600])

# every edge stays inside the sampled node set
for src, dst, feat in sg.edges:
    assert np.all(src < sg.n_nodes) and np.all(dst < sg.n_nodes)
