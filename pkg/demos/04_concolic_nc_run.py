"""A full concolic neuron-coverage run against random testing.

The fixture network hides two neurons that only activate in a small corner of
the input box: uniform sampling essentially never finds them, while the
concolic loop reaches them through LP synthesis. A third pair of neurons is
dead by construction and must end up in the failure set.
"""

import tempfile

import numpy as np

from concolic_dnn import Dense, Network, ReferenceSet, coverage, forward
from concolic_dnn.engine import RunConfig, run, save_run

rng = np.random.default_rng(42)
w1 = rng.normal(size=(4, 12)) * 0.8
b1 = rng.normal(size=12) * 0.1
for i in (0, 1):  # dead: unreachable on [0,1]^4
    b1[i] = -(np.abs(w1[:, i]).sum() + 1.0)
for i in (2, 3):  # hard: active only near one corner of the box
    b1[i] = -0.97 * np.maximum(w1[:, i], 0.0).sum()
for i in range(4, 12):  # everything else stays comfortably reachable
    b1[i] = max(b1[i], 0.3 - np.maximum(w1[:, i], 0.0).sum())
w2 = rng.normal(size=(12, 8)) * 0.5
b2 = rng.normal(size=8) * 0.1
probe = np.maximum(rng.uniform(0, 1, (4000, 4)) @ w1 + b1, 0.0) @ w2 + b2
b2 += np.maximum(0.05 - probe.max(axis=0), 0.0)
net = Network(
    (4,),
    [
        Dense(w1, b1, relu=True),
        Dense(w2, b2, relu=True),
        Dense(rng.normal(size=(8, 3)), np.zeros(3), relu=False),
    ],
)

ref_inputs = rng.uniform(0, 1, (500, 4))
refs = ReferenceSet(ref_inputs, np.array([forward(net, x).label for x in ref_inputs]))
seed = rng.uniform(0, 1, 4)

cfg = RunConfig(criterion="nc", bound=0.3, rng_seed=7, sample_count=200, timeout=120)
result = run(net, refs, [seed], cfg)

print(f"requirements: {len(result.requirements)} (one per hidden ReLU neuron)")
print(f"suite grew from 1 seed to {len(result.suite)} tests")
print(f"concolic coverage: {result.report.coverage:.2%}")
print(f"failed (unsatisfiable within budget): "
      f"{[r.tag.label() for r in result.requirements if r.status == 'failed']}")

random_suite = list(rng.uniform(0, 1, (1000, 4)))
rand_cov = coverage(random_suite, result.requirements, net)
print(f"\n1000 random inputs reach: {rand_cov:.2%}")
print(f"concolic beats random by {result.report.coverage - rand_cov:+.2%} "
      f"with {len(result.suite)} tests instead of 1000")

print(f"\nadversarial examples found along the way: {len(result.report.adversarial)}")
if result.report.adversarial:
    print(f"smallest distance to a reference: {result.report.distance_min:.4f}")

with tempfile.TemporaryDirectory() as outdir:
    save_run(result, cfg, outdir)
    print(f"\nartifacts written to {outdir}: suite/, report.json, adversarial/")

for case in result.suite.cases[:6]:
    print(f"  test from {case.provenance!r}"
          + (f" (parent test {case.parent})" if case.parent is not None else ""))
