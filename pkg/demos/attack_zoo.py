"""Every shipped attack on the same network, one run each.

Same seed and draws throughout, so the rows differ only in what the
hostile agents transmit. The clipping radius is the balanced oracle with
a manual fallback for agents without hostile neighbors.
"""

from gossipshield import (
    ATTACK_KINDS,
    AttackSpec,
    DecayingSchedule,
    TauSpec,
    benchmark_problem,
    build_network,
    run,
)

net = build_network("random", 40, byz_fraction=0.2, seed=4, edge_p=0.5)
prob = benchmark_problem(net.byzantine, 40)
sched = DecayingSchedule(scale=10.1886, k0=10)
tau = TauSpec("corollary1", 1000.0)

specs = {
    "none": AttackSpec("none"),
    "sign_flip": AttackSpec("sign_flip", s_b=1.0),
    "dissensus": AttackSpec("dissensus", d_r=1.0),
    "perturbed_dup": AttackSpec("perturbed_dup", p_mult=1.01, p_add=0.05),
    "alie": AttackSpec("alie"),
    "silent": AttackSpec("silent"),
}
assert set(specs) == set(ATTACK_KINDS)

print(f"{'attack':>14} | {'final D':>10} | {'final gap':>10} | status")
for name, spec in specs.items():
    log = run(net, prob, sched, 1000, seed=7, noise=1e-6, attack=spec,
              agg="scc", tau=tau)
    print(f"{name:>14} | {log.consensus[-1]:10.3e} | {log.gap[-1]:10.3e} | "
          f"{log.status}")
