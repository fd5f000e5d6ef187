#!/usr/bin/env python3
"""Hand enumeration of learnable scalars, layer by layer, for the frozen counts."""
import json
import sys


def conv(cin, cout, k, bias=True):
    return cin * cout * k * k + (cout if bias else 0)


def count(scale=2, in_ch=3, units=8, layers=8, growth=16, feat=128, bottleneck=256, ratio=16):
    layers_list = [("feature", conv(in_ch, feat, 3))]
    unit_out = growth * layers
    for j in range(units):
        unit_in = feat + j * unit_out
        for i in range(layers):
            layers_list.append((f"unit{j}.conv{i}", conv(unit_in + i * growth, growth, 3)))
        reduced = max(unit_out // ratio, 1)
        layers_list.append((f"unit{j}.reduce", conv(unit_out, reduced, 1, bias=False)))
        layers_list.append((f"unit{j}.expand", conv(reduced, unit_out, 1)))
    layers_list.append(("bottleneck", conv(feat + units * unit_out, bottleneck, 1)))
    stages = {2: [(2, 4)], 3: [(3, 5)], 4: [(2, 4), (2, 4)]}[scale]
    for s, (_, k) in enumerate(stages):
        layers_list.append((f"deconv{s}", conv(bottleneck, bottleneck, k)))
        layers_list.append((f"deconv{s}.prelu", bottleneck))
    layers_list.append(("recon", conv(bottleneck, in_ch, 3)))
    return sum(n for _, n in layers_list)


if __name__ == "__main__":
    result = {
        "default_x2": count(2),
        "default_x3": count(3),
        "default_x4": count(4),
        "toy_x2": count(2, units=2, layers=2, growth=8, feat=16, bottleneck=32),
    }
    json.dump(result, sys.stdout, indent=1)
    print()
