import itertools
from fractions import Fraction

import numpy as np
import pytest

from kgacc.graph import Triple, build_graph
from kgacc.labels import LabelSource


def make_graph(spec):
    """Build a graph from {entity: [label, ...]} preserving insertion order.

    Returns (graph, label_source); labels are the given bits.
    """
    groups = []
    values = []
    for entity, bits in spec.items():
        triples = tuple(Triple(entity, "p", f"{entity}_o{i}")
                        for i in range(len(bits)))
        groups.append((entity, triples))
        values.extend(bits)
    g = build_graph(groups)
    ls = LabelSource(np.array(values, dtype=np.uint8), g.checksum(), "gold")
    return g, ls


@pytest.fixture
def toy_abc():
    """Sizes {2, 3, 1}, labels 1,1 / 0,1,1 / 0; accuracy 4/6."""
    return make_graph({"A": [1, 1], "B": [0, 1, 1], "C": [0]})


@pytest.fixture
def toy_123():
    """Sizes {1, 2, 3}, labels 1 / 1,0 / 1,1,0; accuracy 4/6."""
    return make_graph({"A": [1], "B": [1, 0], "C": [1, 1, 0]})


# ---------------------------------------------------------------------------
# Exact enumeration oracles (rational arithmetic throughout)


def cluster_bits(g, ls):
    out = []
    for i in range(g.cluster_count):
        start = int(g.offsets[i])
        out.append([int(v) for v in ls.values[start:start + g.clusters[i].size]])
    return out


def true_mu(g, ls):
    return Fraction(int(ls.values.sum()), g.triple_count)


def enum_srs_mean(g, ls, n):
    """E[sample mean] over all without-replacement subsets of size n."""
    values = [int(v) for v in ls.values]
    total = Fraction(0)
    count = 0
    for subset in itertools.combinations(range(len(values)), n):
        total += Fraction(sum(values[i] for i in subset), n)
        count += 1
    return total / count


def enum_rcs_mean(g, ls, n):
    """E[(N / (M n)) * sum tau] over all uniform cluster sequences."""
    bits = cluster_bits(g, ls)
    taus = [sum(b) for b in bits]
    scale = Fraction(g.cluster_count, g.triple_count * n)
    total = Fraction(0)
    count = 0
    for seq in itertools.product(range(g.cluster_count), repeat=n):
        total += scale * sum(taus[i] for i in seq)
        count += 1
    return total / count


def enum_wcs_mean(g, ls, n):
    """E[mean of cluster accuracies] over size-weighted sequences."""
    bits = cluster_bits(g, ls)
    sizes = [len(b) for b in bits]
    mean_i = [Fraction(sum(b), len(b)) for b in bits]
    w = [Fraction(s, g.triple_count) for s in sizes]
    total = Fraction(0)
    for seq in itertools.product(range(g.cluster_count), repeat=n):
        prob = Fraction(1)
        for i in seq:
            prob *= w[i]
        total += prob * Fraction(sum(mean_i[i] for i in seq), n)
    return total


def enum_twcs_mean(g, ls, n, m):
    """E[mean of second-stage means]: weighted first stage, all
    without-replacement subsets of size min(M_i, m) in the second."""
    bits = cluster_bits(g, ls)
    w = [Fraction(len(b), g.triple_count) for b in bits]

    # Per cluster: expected subsample mean (as a distribution summary we
    # only need, since the estimator is linear over draws).
    exp_sub = []
    for b in bits:
        take = min(len(b), m)
        subs = list(itertools.combinations(b, take))
        exp_sub.append(Fraction(sum(sum(s) for s in subs),
                                take * len(subs)))
    total = Fraction(0)
    for seq in itertools.product(range(g.cluster_count), repeat=n):
        prob = Fraction(1)
        for i in seq:
            prob *= w[i]
        total += prob * Fraction(sum(exp_sub[i] for i in seq), n)
    return total


def ares_inclusion_probs(weights, k):
    """Exact P(cluster in the size-k reservoir) for integer weights.

    The reservoir keeps the k largest keys u**(1/w). Taking
    T = -ln(u) / w turns that into the k smallest of independent
    exponentials with rates w, whose order distribution is the successive
    sampling race: P(ordering) = prod_j w_j / (w_j + following weights).
    """
    n = len(weights)
    probs = [Fraction(0)] * n
    for perm in itertools.permutations(range(n)):
        p = Fraction(1)
        remaining = sum(weights)
        for idx in perm:
            p *= Fraction(weights[idx], remaining)
            remaining -= weights[idx]
        for idx in perm[:k]:
            probs[idx] += p
    return probs
