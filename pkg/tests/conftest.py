"""Shared fixtures and independent oracles for the test suite."""

from __future__ import annotations

import numpy as np
import pytest

from ebisg import GeneratorConfig, generate_population
from ebisg.races import N_RACES


# --- independent oracles ------------------------------------------------------


def pr_curve_bruteforce(probs, labels):
    """O(n^2) confusion-count enumeration; the reference for PR curves.

    Returns a list of (threshold, precision, recall, tp, fp, fn) over the
    distinct predicted probabilities, descending, classifying p >= t as
    positive.
    """
    probs = list(map(float, probs))
    labels = list(map(int, labels))
    n_pos = sum(labels)
    points = []
    for t in sorted(set(probs), reverse=True):
        tp = fp = fn = 0
        for p, y in zip(probs, labels):
            if p >= t:
                if y:
                    tp += 1
                else:
                    fp += 1
            elif y:
                fn += 1
        points.append((t, tp / (tp + fp), tp / n_pos, tp, fp, fn))
    return points


def central_difference_gradients(loss_fn, model, step=1e-5):
    """Finite-difference gradients of a scalar loss over every parameter."""
    grads_w, grads_b = [], []
    for arr_list, grads in ((model.weights, grads_w), (model.biases, grads_b)):
        for arr in arr_list:
            g = np.zeros_like(arr)
            it = np.nditer(arr, flags=["multi_index"])
            while not it.finished:
                idx = it.multi_index
                orig = arr[idx]
                arr[idx] = orig + step
                up = loss_fn()
                arr[idx] = orig - step
                down = loss_fn()
                arr[idx] = orig
                g[idx] = (up - down) / (2 * step)
                it.iternext()
            grads.append(g)
    return grads_w, grads_b


def random_distributions(rng, n, zeros=False):
    """Random race distributions; optionally with some zero categories."""
    out = rng.dirichlet(np.ones(N_RACES), size=n)
    if zeros:
        mask = rng.random((n, N_RACES)) < 0.2
        mask[np.arange(n), rng.integers(0, N_RACES, n)] = False  # keep one positive
        out = np.where(mask, 0.0, out)
        out /= out.sum(axis=1, keepdims=True)
    return out


# --- shared populations --------------------------------------------------------


@pytest.fixture(scope="session")
def small_pop():
    """20k-voter population, no interaction; shared read-only by many tests."""
    return generate_population(GeneratorConfig(seed=3), 20_000)


@pytest.fixture(scope="session")
def coupled_pop():
    """12k-voter population with interaction, for dispatch/preservation tests."""
    return generate_population(GeneratorConfig(seed=7, interaction_strength=0.6), 12_000)
