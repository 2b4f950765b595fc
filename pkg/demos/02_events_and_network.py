"""
From share logs to a dynamic diffusion network
==============================================

Each share (sender, receiver, item, timestamp) lands in one weekly step.
A query asks whether a receiver of last week's share buys the item this week.
"""

from infnet.events import (
    DiffusionRecord,
    PurchaseRecord,
    build_dynamic_network,
    build_time_grid,
    materialize_queries,
)

DAY = 86_400
WEEK = 7 * DAY

grid = build_time_grid(start=0, step_length=WEEK, n=3)
shares = [
    DiffusionRecord("ann", "bob", "kettle", 1 * DAY),
    DiffusionRecord("ann", "cid", "kettle", 2 * DAY),
    DiffusionRecord("bob", "cid", "kettle", 3 * DAY),
    DiffusionRecord("cid", "dee", "lamp", 9 * DAY),
    DiffusionRecord("dee", "ann", "lamp", 30 * DAY),  # after the grid: dropped
]
purchases = [PurchaseRecord("cid", "kettle", 8 * DAY), PurchaseRecord("dee", "lamp", 20 * DAY)]

net = build_dynamic_network(shares, grid)
print("steps", net.n_steps, "users", net.users, "items", net.items)
print("kept", net.event_count(), "dropped", net.dropped)
for t in range(net.n_steps):
    edges = {(net.users[u], net.users[v]): [net.items[p] for p, _ in evs] for (u, v), evs in net.edges[t].items()}
    print(f"step {t}:", edges)

# queries for step 1 come from shares in step 0; labels look at purchases in step 1
for q in materialize_queries(net, purchases, 1):
    print(q)
for q in materialize_queries(net, purchases, 2):
    print(q)
