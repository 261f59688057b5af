"""Independent reference computations used to freeze expected values.

Nothing here shares code with the inference paths under test.
"""

import itertools
import math

import numpy as np


def joint_path_weights(cpds, events, background, symptom):
    """Map every hidden path (h_1..h_T) to its joint probability with the observations.

    ``background``/``symptom`` entries equal to -1 are summed over.
    """
    K = cpds.initial_h.shape[0]
    nB = cpds.background_emit.shape[1]
    nS = cpds.symptom_emit.shape[1]
    T = len(events)
    b_opts = [range(nB) if b < 0 else [b] for b in background]
    s_opts = [range(nS) if s < 0 else [s] for s in symptom]
    weights = {}
    for path in itertools.product(range(K), repeat=T):
        total = 0.0
        for bs in itertools.product(*b_opts):
            for ss in itertools.product(*s_opts):
                p = cpds.initial_h[path[0]]
                for t in range(T):
                    h, e, b, s = path[t], events[t], bs[t], ss[t]
                    p *= cpds.background_emit[h, b] * cpds.event_emit[h, b, e] * cpds.symptom_emit[e, s]
                    if t + 1 < T:
                        p *= cpds.transition[h, e, b, s, path[t + 1]]
                total += p
        weights[path] = total
    return weights


def brute_force_posteriors(cpds, events, background, symptom):
    """(log_likelihood, gamma (T,K), xi (T-1,K,K)) by enumerating all K^T hidden paths."""
    K = cpds.initial_h.shape[0]
    T = len(events)
    weights = joint_path_weights(cpds, events, background, symptom)
    z = sum(weights.values())
    gamma = np.zeros((T, K))
    xi = np.zeros((max(T - 1, 0), K, K))
    for path, w in weights.items():
        for t in range(T):
            gamma[t, path[t]] += w / z
        for t in range(T - 1):
            xi[t, path[t], path[t + 1]] += w / z
    return math.log(z), gamma, xi


def brute_force_next_event(cpds, events, background, symptom, next_background):
    """P(E_{T+1} = e | observations 1..T, B_{T+1}) by enumerating extended joints."""
    nE = cpds.event_emit.shape[2]
    probs = np.zeros(nE)
    for e in range(nE):
        ext_e = list(events) + [e]
        ext_b = list(background) + [next_background]
        # the symptom of the predicted slice is unobserved
        ext_s = list(symptom) + [-1]
        probs[e] = sum(joint_path_weights(cpds, ext_e, ext_b, ext_s).values())
    return probs / probs.sum()


def smoothed_bigram(traces, n_symbols, epsilon):
    """P(next | previous) from direct counts with epsilon added to every cell."""
    counts = np.zeros((n_symbols, n_symbols))
    for seq in traces:
        for a, b in zip(seq[:-1], seq[1:]):
            counts[a, b] += 1
    counts += epsilon
    return counts / counts.sum(axis=1, keepdims=True)


def smoothed_unigram(traces, n_symbols, epsilon):
    counts = np.zeros(n_symbols)
    for seq in traces:
        for a in seq:
            counts[a] += 1
    counts += epsilon
    return counts / counts.sum()
