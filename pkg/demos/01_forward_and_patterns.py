"""Forward evaluation and activation patterns.

Builds a small dense ReLU network, runs a few inputs through it, and shows the
pre-/post-ReLU values, the label, and the activation pattern that makes the
network piecewise-linear. Ends with a bit-exact model file round trip.
"""

import tempfile

import numpy as np

from concolic_dnn import Dense, Network, forward, load_model, pattern_of, save_model

rng = np.random.default_rng(0)
net = Network(
    (3,),
    [
        Dense(rng.normal(size=(3, 5)), rng.normal(size=5) * 0.2, relu=True),
        Dense(rng.normal(size=(5, 4)), rng.normal(size=4) * 0.2, relu=True),
        Dense(rng.normal(size=(4, 2)), np.zeros(2), relu=False),
    ],
)

print(f"network: {net.num_layers} layers, widths",
      [net.width(k) for k in range(1, net.num_layers + 1)])

x = np.array([0.2, 0.7, 0.4])
acts = forward(net, x)
print(f"\ninput {x}")
for k in range(2, net.num_layers + 1):
    print(f"  layer {k}: u = {np.round(acts.u[k], 3)}")
    print(f"           v = {np.round(acts.v[k], 3)}")
print(f"  label = {acts.label}")

pattern = pattern_of(acts)
on = sorted(pos for pos, bit in pattern.bits.items() if bit)
print(f"\nactivation pattern: {len(pattern)} ReLU bits, {len(on)} activated")
print("  activated neurons:", on)

# nudging the input can flip bits: that is what the LP synthesis exploits
x2 = x + np.array([0.0, -0.3, 0.0])
flips = [
    pos
    for pos, bit in pattern.bits.items()
    if pattern_of(forward(net, x2)).bits[pos] != bit
]
print(f"\nperturbing the input to {x2} flips bits at: {flips}")

with tempfile.NamedTemporaryFile(suffix=".json") as fh:
    save_model(net, fh.name)
    back = load_model(fh.name)
    identical = all(
        np.array_equal(a.weights, b.weights) and np.array_equal(a.bias, b.bias)
        for a, b in zip(net.layers, back.layers)
    )
    print(f"\nmodel file round trip bit-exact: {identical}")
