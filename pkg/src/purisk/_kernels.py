"""Numba kernels for the graph metrics and learner hot loops.

All kernels are deterministic: no threading, no fastmath, fixed iteration
order. Graphs arrive as CSR (indptr, indices) over 0..n-1 with optional
parallel arrays aligned to the adjacency entries.
"""

from __future__ import annotations

import numpy as np
from numba import njit

__all__ = [
    "brandes_accumulate",
    "closeness_within_components",
    "core_peeling",
]


@njit(cache=True)
def brandes_accumulate(indptr, indices, edge_ids, n_edges, sources):
    """Shortest-path dependency accumulation from the given source nodes.

    Returns raw directed sums (node_acc, edge_acc); the caller halves them to
    count unordered pairs once and applies normalization.
    """
    n = len(indptr) - 1
    node_acc = np.zeros(n)
    edge_acc = np.zeros(n_edges)
    dist = np.empty(n, dtype=np.int64)
    sigma = np.empty(n)
    delta = np.empty(n)
    order = np.empty(n, dtype=np.int64)
    for si in range(len(sources)):
        s = sources[si]
        for i in range(n):
            dist[i] = -1
            sigma[i] = 0.0
            delta[i] = 0.0
        dist[s] = 0
        sigma[s] = 1.0
        head = 0
        tail = 0
        order[tail] = s
        tail += 1
        while head < tail:
            v = order[head]
            head += 1
            for p in range(indptr[v], indptr[v + 1]):
                w = indices[p]
                if dist[w] < 0:
                    dist[w] = dist[v] + 1
                    order[tail] = w
                    tail += 1
                if dist[w] == dist[v] + 1:
                    sigma[w] += sigma[v]
        # dependency accumulation in reverse BFS order
        for qi in range(tail - 1, 0, -1):
            w = order[qi]
            coeff = (1.0 + delta[w]) / sigma[w]
            for p in range(indptr[w], indptr[w + 1]):
                v = indices[p]
                if dist[v] == dist[w] - 1:
                    c = sigma[v] * coeff
                    delta[v] += c
                    edge_acc[edge_ids[p]] += c
            if w != s:
                node_acc[w] += delta[w]
    return node_acc, edge_acc


@njit(cache=True)
def closeness_within_components(indptr, indices):
    """Per-node closeness: (reached - 1) / sum of hop distances inside the
    node's connected component; isolated nodes get 0."""
    n = len(indptr) - 1
    out = np.zeros(n)
    dist = np.empty(n, dtype=np.int64)
    queue = np.empty(n, dtype=np.int64)
    for s in range(n):
        for i in range(n):
            dist[i] = -1
        dist[s] = 0
        head = 0
        tail = 0
        queue[tail] = s
        tail += 1
        total = 0
        reached = 1
        while head < tail:
            v = queue[head]
            head += 1
            for p in range(indptr[v], indptr[v + 1]):
                w = indices[p]
                if dist[w] < 0:
                    dist[w] = dist[v] + 1
                    total += dist[w]
                    reached += 1
                    queue[tail] = w
                    tail += 1
        if total > 0:
            out[s] = (reached - 1.0) / total
    return out


@njit(cache=True)
def core_peeling(indptr, indices, entry_weights):
    """Generalized core decomposition by min-strength peeling.

    With unit entry weights this is the classic k-core; with integer edge
    weights it is the s-core on strength. Uses a lazy-deletion binary heap;
    core(v) = running max of the strength at removal time.
    """
    n = len(indptr) - 1
    strength = np.zeros(n, dtype=np.int64)
    for v in range(n):
        for p in range(indptr[v], indptr[v + 1]):
            strength[v] += entry_weights[p]
    removed = np.zeros(n, dtype=np.uint8)
    cores = np.zeros(n, dtype=np.int64)

    cap = n + len(indices) + 1
    heap_key = np.empty(cap, dtype=np.int64)
    heap_node = np.empty(cap, dtype=np.int64)
    size = 0

    def push(key, node, heap_key, heap_node, size):
        i = size
        heap_key[i] = key
        heap_node[i] = node
        while i > 0:
            parent = (i - 1) >> 1
            if heap_key[parent] <= heap_key[i]:
                break
            heap_key[parent], heap_key[i] = heap_key[i], heap_key[parent]
            heap_node[parent], heap_node[i] = heap_node[i], heap_node[parent]
            i = parent
        return size + 1

    def pop(heap_key, heap_node, size):
        key = heap_key[0]
        node = heap_node[0]
        size -= 1
        heap_key[0] = heap_key[size]
        heap_node[0] = heap_node[size]
        i = 0
        while True:
            left = 2 * i + 1
            right = left + 1
            smallest = i
            if left < size and heap_key[left] < heap_key[smallest]:
                smallest = left
            if right < size and heap_key[right] < heap_key[smallest]:
                smallest = right
            if smallest == i:
                break
            heap_key[smallest], heap_key[i] = heap_key[i], heap_key[smallest]
            heap_node[smallest], heap_node[i] = heap_node[i], heap_node[smallest]
            i = smallest
        return key, node, size

    for v in range(n):
        size = push(strength[v], v, heap_key, heap_node, size)

    current = 0
    n_removed = 0
    while n_removed < n:
        key, v, size = pop(heap_key, heap_node, size)
        if removed[v] or key != strength[v]:
            continue  # stale entry
        if key > current:
            current = key
        cores[v] = current
        removed[v] = 1
        n_removed += 1
        for p in range(indptr[v], indptr[v + 1]):
            w = indices[p]
            if not removed[w]:
                strength[w] -= entry_weights[p]
                size = push(strength[w], w, heap_key, heap_node, size)
    return cores
