"""
Ablations on one split
======================

Each variant switches off one piece: the sequence encoder, a feature
group, edge attention or the structural block. All share the seed and
split of the base model.
"""

from infnet.eval import VARIANTS, QueryDataset, TrainConfig, ablate, ablation_table, split_queries
from infnet.events import ItemCatalog, PurchaseIndex, build_dynamic_network, materialize_queries
from infnet.model import ModelConfig
from infnet.sampler import FeatureConfig, SubgraphSampler
from infnet.synth import SynthConfig, generate

logs = generate(SynthConfig(n_users=5000, n_items=200, base_share_rate=0.04, seed=4))
catalog = ItemCatalog(logs.catalog)
net = build_dynamic_network(logs.diffusion, logs.grid)
purchases = PurchaseIndex(logs.purchase)
queries = [q for step in range(1, net.n_steps) for q in materialize_queries(net, purchases, step)]
data = QueryDataset.build(queries, SubgraphSampler(net, catalog, purchases, FeatureConfig.from_catalog(catalog, 10)))
split = split_queries(queries, seed=0)

print("variants:", ", ".join(VARIANTS))
rows = ablate(ModelConfig(hidden=16), list(VARIANTS), data, split, TrainConfig(max_epochs=8))
print(ablation_table(rows))
