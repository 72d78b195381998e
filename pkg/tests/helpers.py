"""Random small networks and independent brute-force oracles used across the suite."""
import itertools

import numpy as np

from ajpq.controllers import LayerRule, decide_layer, greedy_budget_enforce
from ajpq.importance import ImportanceTable
from ajpq.ir import FLOAT_BITS, LayerKind, LayerSpec, NetworkIR, layer_size_bits, total_cost


def random_net(rng, max_layers=4, max_channels=8, max_width=7, with_fc=None, bias=None):
    """A random shape-valid network mixing conv, depthwise and FC layers."""
    n = int(rng.integers(1, max_layers + 1))
    n_fc = int(rng.integers(0, n + 1)) if with_fc is None else (int(rng.integers(1, n + 1)) if with_fc else 0)
    n_conv = n - n_fc
    c = int(rng.integers(1, max_channels + 1))
    w = h = int(rng.integers(3, max_width + 1))
    layers = []
    for idx in range(n):
        has_bias = bool(rng.integers(0, 2)) if bias is None else bias
        if idx < n_conv:
            k = int(rng.integers(1, min(3, w, h) + 1))
            stride = int(rng.integers(1, 3))
            if idx > 0 and rng.random() < 0.35:
                spec = LayerSpec(idx, LayerKind.DEPTHWISE, c, c, k, stride, w, h, has_bias)
            else:
                c_out = int(rng.integers(1, max_channels + 1))
                spec = LayerSpec(idx, LayerKind.CONV, c, c_out, k, stride, w, h, has_bias)
            w, h = spec.out_width, spec.out_height
        else:
            c_out = int(rng.integers(1, max_channels + 1))
            spec = LayerSpec(idx, LayerKind.FC, c, c_out, has_bias=has_bias)
        layers.append(spec)
        c = spec.out_channels
    weights = [rng.normal(size=s.weight_shape).astype(np.float32) for s in layers]
    biases = [rng.normal(size=s.out_channels).astype(np.float32) if s.has_bias else None
              for s in layers]
    return NetworkIR(tuple(layers), tuple(weights), tuple(biases))


def random_plan_bits(rng, net, bit_max=8, p_zero=0.3):
    rows = []
    for c in net.channel_counts:
        row = rng.integers(1, bit_max + 1, size=c)
        row[rng.random(c) < p_zero] = 0
        rows.append(row)
    return rows


def brute_force_size(net, bits):
    """Enumerate every stored weight and add its channel's bitwidth."""
    total = 0
    for spec, w, row in zip(net.layers, net.weights, bits):
        for idx in np.ndindex(*w.shape):
            total += int(row[idx[0]])
        for b in row:
            if 0 < b < FLOAT_BITS:
                total += 64 + (32 if spec.has_bias else 0)
    return total


def brute_force_flops(net, bits):
    """Count multiply-adds by walking every output position and live channel pair."""
    total = 0
    prev_alive = [True] * net.layers[0].in_channels
    for spec, row in zip(net.layers, bits):
        alive = [b > 0 for b in row]
        k2 = spec.kernel_size ** 2
        if spec.kind is LayerKind.FC:
            for o, c in itertools.product(range(spec.out_channels), range(spec.in_channels)):
                total += 2 * (alive[o] and prev_alive[c])
        else:
            positions = spec.out_width * spec.out_height
            for _ in range(positions):
                if spec.kind is LayerKind.DEPTHWISE:
                    for c in range(spec.in_channels):
                        total += 2 * k2 * (alive[c] and prev_alive[c])
                else:
                    for o, c in itertools.product(range(spec.out_channels), range(spec.in_channels)):
                        total += 2 * k2 * (alive[o] and prev_alive[c])
        prev_alive = alive
    return total


def naive_forward(net, x):
    """Nested-loop reference inference for a single (C, H, W) sample."""
    x = np.asarray(x, dtype=np.float64)
    last = net.n - 1
    for l, (spec, w, b) in enumerate(zip(net.layers, net.weights, net.biases)):
        w = np.asarray(w, dtype=np.float64)
        if spec.kind is LayerKind.FC:
            if x.ndim == 3:
                x = np.array([x[c].sum() / x[c].size for c in range(x.shape[0])])
            out = np.zeros(spec.out_channels)
            for o in range(spec.out_channels):
                acc = 0.0
                for c in range(spec.in_channels):
                    acc += w[o, c] * x[c]
                out[o] = acc + (b[o] if b is not None else 0.0)
        else:
            k, s = spec.kernel_size, spec.stride
            ho, wo = spec.out_height, spec.out_width
            out = np.zeros((spec.out_channels, ho, wo))
            for o in range(spec.out_channels):
                for i in range(ho):
                    for j in range(wo):
                        acc = 0.0
                        ins = [o] if spec.kind is LayerKind.DEPTHWISE else range(spec.in_channels)
                        for c in ins:
                            wc = 0 if spec.kind is LayerKind.DEPTHWISE else c
                            for di in range(k):
                                for dj in range(k):
                                    acc += w[o, wc, di, dj] * x[c, i * s + di, j * s + dj]
                        out[o, i, j] = acc + (b[o] if b is not None else 0.0)
        x = out if l == last else np.maximum(out, 0.0)
    if x.ndim == 3:
        x = np.array([x[c].mean() for c in range(x.shape[0])])
    return x


def random_decisions(rng, net, bit_max=8):
    table = ImportanceTable.from_network(net)
    return [decide_layer(s, float(rng.uniform(0.05, 1.0)), bit_max) for s in table.scores]


def check_greedy_run(net, decisions, budget, rule):
    out = greedy_budget_enforce(net, decisions, budget, rule)
    # strictly decreasing while the loop runs
    assert all(b < a for a, b in zip(out.sizes, out.sizes[1:]))
    bound = sum(int((d.bits - d.minbit)[d.keep].sum()) for d in decisions)
    assert out.iterations <= bound
    for after in out.decisions:
        outside = np.setdiff1d(np.arange(len(after.bits)), after.keep)
        assert np.all(after.bits[outside] == 0)
        assert np.all(after.minbit[after.keep] <= after.bits[after.keep])
        assert np.all(after.bits <= 8)
    final = total_cost(net, [d.bits for d in out.decisions]).rest_size
    assert final == out.sizes[-1]
    assert out.feasible == (final <= budget)
    floor = total_cost(net, [d.minbit for d in decisions]).rest_size
    if floor <= budget:
        assert out.feasible
    # replay: every step picks the layer an independent size table says it should
    bits = [d.bits.copy() for d in decisions]
    for l, c in out.steps:
        live = [j for j in range(net.n) if np.any(bits[j][decisions[j].keep] > decisions[j].minbit[decisions[j].keep])]
        if rule is LayerRule.LARGE:
            table = [layer_size_bits(net.layers[j], bits[j]) for j in range(net.n)]
            expect = max(live, key=lambda j: (table[j], -j))
        else:
            expect = max(live)
        assert l == expect
        reducible = [i for i in decisions[l].keep if bits[l][i] > decisions[l].minbit[i]]
        assert c == min(reducible, key=lambda i: (decisions[l].scores[i], -i))
        bits[l][c] -= 1
    return out


def rel_err(g, fd):
    return np.linalg.norm(g - fd) / max(np.linalg.norm(g), np.linalg.norm(fd), 1e-12)


def finite_diff(f, params, eps=1e-6):
    """Central differences of scalar ``f()`` w.r.t. every entry of ``params`` (perturbed in place)."""
    out = []
    for p in params:
        g = np.zeros(p.size)
        flat = p.reshape(-1)
        for i in range(flat.size):
            old = flat[i]
            flat[i] = old + eps
            up = f()
            flat[i] = old - eps
            down = f()
            flat[i] = old
            g[i] = (up - down) / (2 * eps)
        out.append(g)
    return np.concatenate(out)


def critic_grad_error(agent, s, a, y):
    _, grads = agent.critic_loss_and_grad(s, a, y)
    analytic = np.concatenate([g.ravel() for g in grads])
    sa = np.hstack([s, a])
    # the loss written out directly, without the agent's backward pass
    numeric = finite_diff(lambda: float(np.mean((agent.critic(sa) - y) ** 2)), agent.critic.params)
    return rel_err(analytic, numeric)


def actor_grad_error(agent, s):
    _, grads = agent.actor_loss_and_grad(s)
    analytic = np.concatenate([g.ravel() for g in grads])
    numeric = finite_diff(lambda: -float(np.mean(agent.critic(np.hstack([s, agent.actor(s)])))),
                          agent.actor.params)
    return rel_err(analytic, numeric)
