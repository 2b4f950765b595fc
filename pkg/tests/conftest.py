import numpy as np
import pytest

from infnet import numerics as nx
from infnet.eval import QueryDataset, split_queries
from infnet.events import ItemCatalog, PurchaseIndex, build_dynamic_network, materialize_queries
from infnet.sampler import FeatureConfig, SubgraphSampler
from infnet.synth import SynthConfig, generate

SMALL = SynthConfig(n_users=3000, n_items=200, n_categories=8, base_share_rate=0.06, history_steps=4, share_history_steps=2, seed=11)


@pytest.fixture(autouse=True)
def _float64():
    nx.set_default_dtype(np.float64)
    yield
    nx.set_default_dtype(np.float64)


class World:
    def __init__(self, cfg: SynthConfig, n_bins: int = 5, split_seed: int = 0):
        self.cfg = cfg
        self.logs = generate(cfg)
        self.catalog = ItemCatalog(self.logs.catalog)
        self.network = build_dynamic_network(self.logs.diffusion, self.logs.grid)
        self.purchases = PurchaseIndex(self.logs.purchase)
        self.queries = [q for s in range(1, self.network.n_steps) for q in materialize_queries(self.network, self.purchases, s)]
        self.features = FeatureConfig.from_catalog(self.catalog, n_bins)
        self.sampler = SubgraphSampler(self.network, self.catalog, self.purchases, self.features)
        self.data = QueryDataset.build(self.queries, self.sampler)
        self.split = split_queries(self.queries, split_seed)


@pytest.fixture(scope="session")
def small_world() -> World:
    return World(SMALL)
