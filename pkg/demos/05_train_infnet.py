"""
Training InfNet against a logistic-regression baseline
======================================================

Queries from the last step form the test set; earlier ones split 70/30
into train and validation. Training stops early on validation AUC-PR.
"""

import logging

from infnet.eval import LRFeatures, QueryDataset, TrainConfig, lr_baseline, split_queries, train
from infnet.events import ItemCatalog, PurchaseIndex, build_dynamic_network, materialize_queries
from infnet.model import ModelConfig
from infnet.sampler import FeatureConfig, SubgraphSampler
from infnet.synth import SynthConfig, generate

logging.basicConfig(level=logging.INFO, format="%(message)s")

logs = generate(SynthConfig(n_users=8000, n_items=300, base_share_rate=0.03, seed=7))
catalog = ItemCatalog(logs.catalog)
net = build_dynamic_network(logs.diffusion, logs.grid)
purchases = PurchaseIndex(logs.purchase)
queries = [q for step in range(1, net.n_steps) for q in materialize_queries(net, purchases, step)]
features = FeatureConfig.from_catalog(catalog, 10)
data = QueryDataset.build(queries, SubgraphSampler(net, catalog, purchases, features))
split = split_queries(queries, seed=0)
print(f"{len(queries)} queries: train {len(split.train)}, validation {len(split.validation)}, test {len(split.test)}")

_, lr, _ = lr_baseline(queries, split, LRFeatures(net, catalog, purchases, features))
res = train(ModelConfig(hidden=16), data, split, TrainConfig(max_epochs=15))

print(f"LR      roc {lr.auc_roc:.4f}  pr {lr.auc_pr:.4f}")
print(f"InfNet  roc {res.test.auc_roc:.4f}  pr {res.test.auc_pr:.4f}  (best epoch {res.best_epoch})")
for name, sub in res.test.strata.items():
    if sub is not None:
        print(f"  {name:4s} n={sub.n:5d} roc {sub.auc_roc:.4f} pr {sub.auc_pr:.4f}")
