"""Compiled inner loops for the PIBT step.

The stack machine below is the iterative form of the priority-inheritance
recursion: a frame per displaced agent, success unwinding the whole chain,
failure resting the agent in place (which revokes the displacer's claim)
and resuming the parent at its next candidate. Semantics are pinned by the
exhaustive one-step oracle tests.
"""
from __future__ import annotations

import numpy as np
from numba import njit


@njit(cache=True)
def sort_candidates(targets, keys, tie, order_out, ranked, counts):
    """Per agent, stable-sort the 5 action slots by (keys, tie) ascending;
    write the action permutation to order_out and the feasible targets
    (>= 0), preference first, into ranked (padded with -1).

    Matches np.lexsort((tie, keys)) exactly, including stability on full
    ties.
    """
    n = targets.shape[0]
    for i in range(n):
        # insertion sort on 5 elements
        order = order_out[i]
        for a in range(5):
            order[a] = a
        for a in range(1, 5):
            j = a
            while j > 0:
                x, y = order[j], order[j - 1]
                if keys[i, x] < keys[i, y] or (
                    keys[i, x] == keys[i, y] and tie[i, x] < tie[i, y]
                ):
                    order[j], order[j - 1] = y, x
                    j -= 1
                else:
                    break
        k = 0
        for a in range(5):
            t = targets[i, order[a]]
            if t >= 0:
                ranked[i, k] = t
                k += 1
        counts[i] = k
        for a in range(k, 5):
            ranked[i, a] = -1


@njit(cache=True)
def pibt_step_kernel(cur, ranked, counts, order, occ_now, occ_nxt, nxt,
                     stack_agent, stack_k, require_roots):
    """One PIBT step over flat cell ids; returns True when the step is usable.

    cur: (N,) current cells. ranked/counts: per-agent candidate targets.
    order: agent planning order (descending priority). occ_now/occ_nxt are
    n_cells scratch arrays holding -1; they are restored before returning.
    nxt holds the result; pinned agents enter with nxt set (their cells
    already claimed in occ_nxt), everyone else with -1.
    """
    n = cur.shape[0]
    for i in range(n):
        occ_now[cur[i]] = i

    ok = True
    for oi in range(n):
        root = order[oi]
        if nxt[root] != -1:
            continue
        # run the backtracking machine rooted at `root`
        depth = 1
        stack_agent[0] = root
        stack_k[0] = 0
        root_ok = True
        while depth > 0:
            a = stack_agent[depth - 1]
            k = stack_k[depth - 1]
            outcome = 0  # 0 exhausted, 1 success, 2 descend
            while k < counts[a]:
                t = ranked[a, k]
                k += 1
                if occ_nxt[t] != -1:
                    continue
                j = occ_now[t]
                if j != -1 and j != a and nxt[j] == cur[a]:
                    continue  # swap with a committed agent
                nxt[a] = t
                occ_nxt[t] = a
                if j != -1 and j != a and nxt[j] == -1:
                    stack_k[depth - 1] = k
                    stack_agent[depth] = j
                    stack_k[depth] = 0
                    depth += 1
                    outcome = 2
                else:
                    outcome = 1
                break
            if outcome == 2:
                continue
            if outcome == 1:
                depth = 0  # the whole displacement chain succeeds
            else:
                # exhausted: rest in place, revoking any claim on this cell
                nxt[a] = cur[a]
                occ_nxt[cur[a]] = a
                depth -= 1
                if depth == 0:
                    root_ok = False
        if not root_ok and require_roots:
            ok = False
            break

    if ok:
        for i in range(n):
            t = nxt[i]
            if t == -1 or occ_nxt[t] != i:
                ok = False
                break
            j = occ_now[t]
            if j != -1 and j != i and nxt[j] == cur[i]:
                ok = False
                break

    for i in range(n):
        occ_now[cur[i]] = -1
        t = nxt[i]
        if t != -1:
            occ_nxt[t] = -1
    return ok
