"""Compiled inner loops shared by the simulation modules.

Everything here works on plain numpy arrays so the callers keep control of
random number generation (all randomness is drawn outside, from counter-based
streams, and passed in).
"""
import numpy as np
from numba import njit


@njit(cache=True)
def apply_swaps(states, offsets, us, vs):
    """Swap ``states[b, us[e]]`` and ``states[b, vs[e]]`` for the events of replica b.

    Events of replica ``b`` are ``offsets[b]:offsets[b + 1]``, in time order.
    """
    for b in range(states.shape[0]):
        row = states[b]
        for e in range(offsets[b], offsets[b + 1]):
            u = us[e]
            v = vs[e]
            tmp = row[u]
            row[u] = row[v]
            row[v] = tmp


@njit(cache=True)
def compose_permutation(n, us, vs):
    """Return pi with pi[x] = final position of the particle that started at x."""
    occupant = np.arange(n)
    for e in range(us.shape[0]):
        u = us[e]
        v = vs[e]
        tmp = occupant[u]
        occupant[u] = occupant[v]
        occupant[v] = tmp
    pi = np.empty(n, dtype=np.int64)
    for pos in range(n):
        pi[occupant[pos]] = pos
    return pi


@njit(cache=True)
def effective_trajectory(state, us, vs):
    """Replay swaps on one state, recording only the swaps that change it.

    Returns ``(event_index, snapshots)`` where ``snapshots[j]`` is the state
    right after event ``event_index[j]``.
    """
    n = state.shape[0]
    cur = state.copy()
    count = 0
    for e in range(us.shape[0]):
        if cur[us[e]] != cur[vs[e]]:
            count += 1
    idx = np.empty(count, dtype=np.int64)
    snaps = np.empty((count, n), dtype=np.uint8)
    j = 0
    for e in range(us.shape[0]):
        u = us[e]
        v = vs[e]
        if cur[u] != cur[v]:
            tmp = cur[u]
            cur[u] = cur[v]
            cur[v] = tmp
            idx[j] = e
            snaps[j] = cur
            j += 1
    return idx, snaps


@njit(cache=True)
def mask_trajectory(mask, us, vs):
    """Integer-mask version of :func:`effective_trajectory` (n <= 62)."""
    count = 0
    cur = mask
    for e in range(us.shape[0]):
        bu = (cur >> us[e]) & 1
        bv = (cur >> vs[e]) & 1
        if bu != bv:
            count += 1
            cur ^= (1 << us[e]) | (1 << vs[e])
    idx = np.empty(count, dtype=np.int64)
    masks = np.empty(count, dtype=np.int64)
    cur = mask
    j = 0
    for e in range(us.shape[0]):
        bu = (cur >> us[e]) & 1
        bv = (cur >> vs[e]) & 1
        if bu != bv:
            cur ^= (1 << us[e]) | (1 << vs[e])
            idx[j] = e
            masks[j] = cur
            j += 1
    return idx, masks


@njit(cache=True)
def build_alias(weights):
    """Vose alias table for sampling index i with probability weights[i] / sum."""
    m = weights.shape[0]
    total = weights.sum()
    prob = np.empty(m, dtype=np.float64)
    alias = np.zeros(m, dtype=np.int64)
    scaled = weights * (m / total)
    small = np.empty(m, dtype=np.int64)
    large = np.empty(m, dtype=np.int64)
    ns = 0
    nl = 0
    for i in range(m):
        if scaled[i] < 1.0:
            small[ns] = i
            ns += 1
        else:
            large[nl] = i
            nl += 1
    while ns > 0 and nl > 0:
        ns -= 1
        s = small[ns]
        nl -= 1
        g = large[nl]
        prob[s] = scaled[s]
        alias[s] = g
        scaled[g] = scaled[g] + scaled[s] - 1.0
        if scaled[g] < 1.0:
            small[ns] = g
            ns += 1
        else:
            large[nl] = g
            nl += 1
    for i in range(nl):
        prob[large[i]] = 1.0
    for i in range(ns):
        prob[small[i]] = 1.0
    return prob, alias


@njit(cache=True)
def _find(parent, x):
    while parent[x] != x:
        parent[x] = parent[parent[x]]
        x = parent[x]
    return x


@njit(cache=True)
def crossing_batch(states, nbr_ptr, nbr_idx, is_left, is_right):
    """Left-right open crossing for each row of ``states`` via union-find.

    Sites ``0..N-1``; two virtual roots ``N`` (left side) and ``N + 1`` (right side).
    """
    n_states, n = states.shape
    out = np.zeros(n_states, dtype=np.bool_)
    parent = np.empty(n + 2, dtype=np.int64)
    for b in range(n_states):
        row = states[b]
        for i in range(n + 2):
            parent[i] = i
        for x in range(n):
            if row[x] == 0:
                continue
            rx = _find(parent, x)
            if is_left[x]:
                rl = _find(parent, n)
                if rl != rx:
                    parent[rl] = rx
            if is_right[x]:
                rr = _find(parent, n + 1)
                rx = _find(parent, x)
                if rr != rx:
                    parent[rr] = rx
            for k in range(nbr_ptr[x], nbr_ptr[x + 1]):
                y = nbr_idx[k]
                if y < x and row[y] == 1:
                    ra = _find(parent, x)
                    rb = _find(parent, y)
                    if ra != rb:
                        parent[rb] = ra
        out[b] = _find(parent, n) == _find(parent, n + 1)
    return out


@njit(cache=True)
def crossing_trajectory_switches(state, us, vs, nbr_ptr, nbr_idx, is_left, is_right, window):
    """Crossing value after every state-changing swap.

    ``window`` maps crossing-patch sites to positions of ``state``; swaps touching
    no window site cannot change the crossing and are skipped.
    Returns ``(initial_value, event_index, values)``.
    """
    n = state.shape[0]
    in_window = np.zeros(n, dtype=np.bool_)
    for j in range(window.shape[0]):
        in_window[window[j]] = True
    cur = state.copy()
    w = np.empty((1, window.shape[0]), dtype=np.uint8)
    for j in range(window.shape[0]):
        w[0, j] = cur[window[j]]
    init = crossing_batch(w, nbr_ptr, nbr_idx, is_left, is_right)[0]
    idx = np.empty(us.shape[0], dtype=np.int64)
    vals = np.empty(us.shape[0], dtype=np.bool_)
    count = 0
    for e in range(us.shape[0]):
        u = us[e]
        v = vs[e]
        if cur[u] == cur[v]:
            continue
        tmp = cur[u]
        cur[u] = cur[v]
        cur[v] = tmp
        if not (in_window[u] or in_window[v]):
            continue
        for j in range(window.shape[0]):
            w[0, j] = cur[window[j]]
        idx[count] = e
        vals[count] = crossing_batch(w, nbr_ptr, nbr_idx, is_left, is_right)[0]
        count += 1
    return init, idx[:count], vals[:count]
