"""Slow reference implementations that share no code with the package."""

import itertools

import numpy as np


def dense_product(n, events, q):
    """P_m ... P_1 for rings (time-ordered), P = I + c e_x e_{x+1}^T."""
    P = np.eye(n, dtype=np.int64)
    for _, x, c in events:
        E = np.eye(n, dtype=np.int64)
        E[x - 1, x] = c
        P = (E @ P) % q
    return P


def gf2_rank(rows):
    """Rank over F_2 by textbook elimination on a 0/1 matrix."""
    A = np.array(rows, dtype=np.uint8) % 2
    if A.size == 0:
        return 0
    A = A.copy()
    r = 0
    for c in range(A.shape[1]):
        piv = [i for i in range(r, A.shape[0]) if A[i, c]]
        if not piv:
            continue
        A[[r, piv[0]]] = A[[piv[0], r]]
        for i in range(A.shape[0]):
            if i != r and A[i, c]:
                A[i] ^= A[r]
        r += 1
    return r


def east_step_path(values, boundary, events, q=2):
    """Plain-python East run; returns the configuration after each ring."""
    v = list(values)
    out = []
    for _, y, c in events:
        left = boundary if y == 1 else v[y - 2]
        if left:
            v[y - 1] = (v[y - 1] + c * left) % q
        out.append(tuple(v))
    return out


def walk_generator_dense(n, cols):
    """Generator of the block chain by enumerating matrices explicitly."""
    free = [(x, i) for i in cols for x in range(1, i)]
    states = list(itertools.product((0, 1), repeat=len(free)))
    index = {s: k for k, s in enumerate(states)}
    G = np.zeros((len(states), len(states)))
    for s in states:
        M = np.eye(n, dtype=np.int64)
        for (x, i), b in zip(free, s):
            M[x - 1, i - 1] = b
        for x in range(1, n):
            for a in (0, 1):
                N = M.copy()
                N[x - 1] = (N[x - 1] + a * N[x]) % 2
                t = tuple(int(N[x_ - 1, i_ - 1]) for x_, i_ in free)
                G[index[s], index[t]] += 0.5
    G -= np.diag(G.sum(axis=1))
    return G, free


def east_generator_dense(m):
    states = list(itertools.product((0, 1), repeat=m))
    index = {s: k for k, s in enumerate(states)}
    G = np.zeros((len(states), len(states)))
    for s in states:
        for y in range(1, m + 1):
            if y == 1 or s[y - 2] == 1:
                t = list(s)
                t[y - 1] ^= 1
                G[index[s], index[tuple(t)]] += 0.5
    G -= np.diag(G.sum(axis=1))
    return G
