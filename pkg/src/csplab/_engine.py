"""Compiled search kernel: GAC propagation + backtracking over bitmask domains.

Domains are int64 bitmasks (bit ``x - 1`` <=> value ``x``).  Each constraint
is given by its list of allowed tuples, stored as per-position value masks so
a support check is one AND per position.
"""

import numpy as np
from numba import njit

SAT = 0
UNSAT = 1
BUDGET = 2


@njit(cache=True)
def _popcount(x):
    c = 0
    while x:
        x &= x - 1
        c += 1
    return c


@njit(cache=True)
def _lowest_value(x):
    v = 1
    while not x & 1:
        x >>= 1
        v += 1
    return v


@njit(cache=True)
def _highest_bit(x):
    h = x
    while h & (h - 1):
        h &= h - 1
    return h


@njit(cache=True)
def _revise(e, dom, e_off, e_vars, e_cid, at_off, at_cnt, at_masks, sup):
    base = e_off[e]
    a = e_off[e + 1] - base
    cid = e_cid[e]
    for j in range(a):
        sup[j] = 0
    off = at_off[cid]
    for t in range(at_cnt[cid]):
        mb = off + t * a
        ok = True
        for j in range(a):
            if dom[e_vars[base + j]] & at_masks[mb + j] == 0:
                ok = False
                break
        if ok:
            for j in range(a):
                sup[j] |= at_masks[mb + j]


@njit(cache=True)
def _propagate(dom, queue, inq, qh, qt, trail_v, trail_d, tp,
               e_off, e_vars, e_cid, at_off, at_cnt, at_masks, v_off, v_edges, sup):
    """Run the edge queue to a GAC fixpoint.  Returns (ok, new trail pointer)."""
    cap = len(queue)
    while qh != qt:
        e = queue[qh]
        qh = (qh + 1) % cap
        inq[e] = 0
        _revise(e, dom, e_off, e_vars, e_cid, at_off, at_cnt, at_masks, sup)
        base = e_off[e]
        for j in range(e_off[e + 1] - base):
            v = e_vars[base + j]
            nd = dom[v] & sup[j]
            if nd != dom[v]:
                trail_v[tp] = v
                trail_d[tp] = dom[v]
                tp += 1
                dom[v] = nd
                if nd == 0:
                    while qh != qt:
                        inq[queue[qh]] = 0
                        qh = (qh + 1) % cap
                    return False, tp
                for i in range(v_off[v], v_off[v + 1]):
                    f = v_edges[i]
                    if f != e and not inq[f]:
                        inq[f] = 1
                        queue[qt] = f
                        qt = (qt + 1) % cap
    return True, tp


@njit(cache=True)
def _score(v, dom, e_off, e_vars, e_cid, at_off, at_cnt, at_masks, v_off, v_edges):
    """Sum over incident constraints of the fraction of domain-compatible tuples
    that are forbidden (0 for entailed constraints)."""
    s = 0.0
    for i in range(v_off[v], v_off[v + 1]):
        e = v_edges[i]
        base = e_off[e]
        a = e_off[e + 1] - base
        prod = 1
        for j in range(a):
            prod *= _popcount(dom[e_vars[base + j]])
        cid = e_cid[e]
        off = at_off[cid]
        good = 0
        for t in range(at_cnt[cid]):
            mb = off + t * a
            ok = True
            for j in range(a):
                if dom[e_vars[base + j]] & at_masks[mb + j] == 0:
                    ok = False
                    break
            if ok:
                good += 1
        if prod > good:
            s += (prod - good) / prod
    return s


@njit(cache=True)
def _lookahead(lo, hi, order, dom, queue, inq, trail_v, trail_d, tp,
               e_off, e_vars, e_cid, at_off, at_cnt, at_masks, v_off, v_edges, sup,
               width, cand, cscore, red):
    """Failed-value pruning plus branching choice for one component.

    The ``width`` free variables with the highest tightness score are probed:
    each remaining value is tried, propagated and retracted.  Values whose
    propagation fails are removed for good (this is sound: no solution below
    the current node uses them).  Returns (ok, tp, var) where var is the
    branching variable, or -1 when every variable of the component is fixed.
    """
    while True:
        nc = 0
        minsz = 1 << 30
        for ii in range(lo, hi):
            v = order[ii]
            sz = _popcount(dom[v])
            if sz <= 1:
                continue
            if sz < minsz:
                minsz = sz
            cand[nc] = v
            cscore[nc] = _score(v, dom, e_off, e_vars, e_cid, at_off, at_cnt, at_masks, v_off, v_edges)
            nc += 1
        if nc == 0:
            return True, tp, -1
        idx = np.argsort(-cscore[:nc], kind="mergesort")
        take = min(nc, width)
        pruned = False
        best = -1
        bsize = 1 << 30
        bscore = -1.0
        for r in range(take):
            v = cand[idx[r]]
            vals = dom[v]
            if _popcount(vals) <= 1:
                continue
            failed = 0
            rest = vals
            while rest:
                low = rest & -rest
                rest ^= low
                mark = tp
                trail_v[tp] = v
                trail_d[tp] = dom[v]
                tp += 1
                dom[v] = low
                qt = 0
                for i in range(v_off[v], v_off[v + 1]):
                    f = v_edges[i]
                    inq[f] = 1
                    queue[qt] = f
                    qt += 1
                ok, tp = _propagate(dom, queue, inq, 0, qt, trail_v, trail_d, tp,
                                    e_off, e_vars, e_cid, at_off, at_cnt, at_masks,
                                    v_off, v_edges, sup)
                red[_lowest_value(low) - 1] = tp - mark
                while tp > mark:
                    tp -= 1
                    dom[trail_v[tp]] = trail_d[tp]
                if not ok:
                    failed |= low
            if failed:
                pruned = True
                trail_v[tp] = v
                trail_d[tp] = dom[v]
                tp += 1
                dom[v] = vals & ~failed
                if dom[v] == 0:
                    return False, tp, -1
                qt = 0
                for i in range(v_off[v], v_off[v + 1]):
                    f = v_edges[i]
                    inq[f] = 1
                    queue[qt] = f
                    qt += 1
                ok, tp = _propagate(dom, queue, inq, 0, qt, trail_v, trail_d, tp,
                                    e_off, e_vars, e_cid, at_off, at_cnt, at_masks,
                                    v_off, v_edges, sup)
                if not ok:
                    return False, tp, -1
                continue
            # branching score: product of the reductions, balanced branches first
            sz = _popcount(vals)
            sc = 1.0
            tot = 0.0
            rest = vals
            while rest:
                low = rest & -rest
                rest ^= low
                w = red[_lowest_value(low) - 1]
                sc *= w
                tot += w
            sc = sc * 1024.0 + tot
            if sz < bsize or (sz == bsize and (sc > bscore or (sc == bscore and v < best))):
                best = v
                bsize = sz
                bscore = sc
        if pruned:
            continue
        if bsize > minsz:
            # a smaller candidate set exists outside the probed set
            best = -1
            for ii in range(lo, hi):
                v = order[ii]
                if _popcount(dom[v]) == minsz and (best < 0 or v < best):
                    best = v
        return True, tp, best


@njit(cache=True)
def _entailed(e, dom, e_off, e_vars, e_cid, at_off, at_cnt, at_masks):
    """True when every tuple of the current candidate sets satisfies edge e."""
    base = e_off[e]
    a = e_off[e + 1] - base
    prod = 1
    for j in range(a):
        prod *= _popcount(dom[e_vars[base + j]])
    cid = e_cid[e]
    off = at_off[cid]
    good = 0
    for t in range(at_cnt[cid]):
        mb = off + t * a
        ok = True
        for j in range(a):
            if dom[e_vars[base + j]] & at_masks[mb + j] == 0:
                ok = False
                break
        if ok:
            good += 1
    return good == prod


@njit(cache=True)
def _split(lo, hi, buf, bt, sbuf, st, dom, e_off, e_vars, e_cid, at_off, at_cnt, at_masks,
           v_off, v_edges, seen, eseen, stamp):
    """Group the free variables of buf[lo:hi] into connected pieces of the
    residual hypergraph (two free variables are linked by a non-entailed edge
    containing both).  Pieces of one variable are dropped: after GAC every remaining value
    of such a variable is consistent.  Pieces are written to buf from ``bt``
    with boundaries appended to sbuf from ``st``.  Returns (buf, bt, sbuf, st).
    """
    if bt + (hi - lo) > len(buf):
        nb = np.empty(2 * len(buf) + (hi - lo), np.int64)
        nb[:bt] = buf[:bt]
        buf = nb
    if st + (hi - lo) + 2 > len(sbuf):
        ns = np.empty(2 * len(sbuf) + (hi - lo) + 2, np.int64)
        ns[:st] = sbuf[:st]
        sbuf = ns
    s0 = st
    sbuf[st] = bt
    st += 1
    for ii in range(lo, hi):
        s = buf[ii]
        if seen[s] == stamp or dom[s] & (dom[s] - 1) == 0:
            continue
        seen[s] = stamp
        head = bt
        buf[bt] = s
        bt += 1
        while head < bt:
            v = buf[head]
            head += 1
            for i in range(v_off[v], v_off[v + 1]):
                e = v_edges[i]
                if eseen[e] == stamp:
                    continue
                eseen[e] = stamp
                if _entailed(e, dom, e_off, e_vars, e_cid, at_off, at_cnt, at_masks):
                    continue
                for j in range(e_off[e], e_off[e + 1]):
                    u = e_vars[j]
                    if seen[u] != stamp and dom[u] & (dom[u] - 1) != 0:
                        seen[u] = stamp
                        buf[bt] = u
                        bt += 1
        if bt - sbuf[st - 1] == 1:
            bt -= 1  # lone variable
        else:
            sbuf[st] = bt
            st += 1
    npieces = st - s0 - 1
    if npieces > 1:
        # smallest piece first: failures in small pieces are found cheaply
        sizes = np.empty(npieces, np.int64)
        for i in range(npieces):
            sizes[i] = sbuf[s0 + i + 1] - sbuf[s0 + i]
        perm = np.argsort(sizes, kind="mergesort")
        b0 = sbuf[s0]
        tmp = buf[b0:bt].copy()
        w = b0
        for r in range(npieces):
            i = perm[r]
            a = sbuf[s0 + i] - b0
            for j in range(sizes[i]):
                buf[w] = tmp[a + j]
                w += 1
        w = b0
        for r in range(npieces):
            w += sizes[perm[r]]
            sbuf[s0 + r + 1] = w
    return buf, bt, sbuf, st


@njit(cache=True)
def search(n, d, dom, e_off, e_vars, e_cid, at_off, at_cnt, at_masks, v_off, v_edges, budget, width, flip):
    """Decide satisfiability.  ``dom`` is modified in place and holds a witness on SAT.

    After every successful propagation the free variables are split into
    independent pieces, each solved on its own; a failed piece fails its
    parent choice without retrying the other pieces.  Inside a piece,
    ``width == 0`` branches on the smallest candidate set, ties by lowest
    index.  ``width > 0`` adds failed-value lookahead on up to that many
    variables per node (all variables at the root of each top-level piece),
    which also picks the branching variable among the smallest candidate sets.
    Values are tried in ascending order, descending where ``flip[v]`` is set.
    Returns (status, nodes).
    """
    m = len(e_cid)
    cap = m + 1
    queue = np.empty(cap, np.int64)
    inq = np.zeros(max(m, 1), np.uint8)
    maxa = 1
    for e in range(m):
        maxa = max(maxa, e_off[e + 1] - e_off[e])
    sup = np.zeros(maxa, np.int64)
    tsize = n * (d + 1) + 16
    trail_v = np.empty(tsize, np.int64)
    trail_d = np.empty(tsize, np.int64)
    cand = np.empty(max(n, 1), np.int64)
    cscore = np.empty(max(n, 1), np.float64)
    red = np.zeros(max(d, 1), np.int64)
    seen = np.zeros(max(n, 1), np.int64)
    eseen = np.zeros(max(m, 1), np.int64)
    stamp = 0
    tp = 0
    qt = 0
    for e in range(m):
        queue[qt] = e
        inq[e] = 1
        qt += 1
    ok, tp = _propagate(dom, queue, inq, 0, qt, trail_v, trail_d, tp,
                        e_off, e_vars, e_cid, at_off, at_cnt, at_masks, v_off, v_edges, sup)
    if not ok:
        return UNSAT, 0
    buf = np.empty(4 * n + 16, np.int64)
    sbuf = np.empty(2 * n + 16, np.int64)
    for v in range(n):
        buf[v] = v
    stamp += 1
    buf, bt, sbuf, st = _split(0, n, buf, n, sbuf, 0, dom, e_off, e_vars, e_cid, at_off, at_cnt,
                                at_masks, v_off, v_edges, seen, eseen, stamp)

    # frames: kind 0 = piece (choice point), kind 1 = list of pieces to solve in turn
    fcap = 2 * n + 8
    f_kind = np.empty(fcap, np.int64)
    f_a = np.empty(fcap, np.int64)  # piece: lo in buf;       list: first boundary in sbuf
    f_b = np.empty(fcap, np.int64)  # piece: hi in buf;       list: last boundary in sbuf
    f_c = np.empty(fcap, np.int64)  # piece: branch variable; list: index of current piece
    f_vals = np.empty(fcap, np.int64)  # piece: values still to try
    f_m0 = np.empty(fcap, np.int64)  # trail mark on entry
    f_m1 = np.empty(fcap, np.int64)  # piece: trail mark after lookahead pruning
    f_bt = np.empty(fcap, np.int64)  # list: buffer tops to restore on exit
    f_st = np.empty(fcap, np.int64)
    f_bt[0] = n
    f_st[0] = 0
    f_kind[0] = 1
    f_a[0] = 0
    f_b[0] = st - 1
    f_c[0] = 0
    f_m0[0] = tp
    top = 0
    ret = -1  # result handed up by the frame just popped: 1 solved, 0 failed
    nodes = 0
    while top >= 0:
        if f_kind[top] == 1:
            if ret == 0:
                bt = f_bt[top]
                st = f_st[top]
                top -= 1
                continue
            if ret == 1:
                f_c[top] += 1
            ret = -1
            idx = f_c[top]
            if f_a[top] + idx >= f_b[top]:
                bt = f_bt[top]
                st = f_st[top]
                top -= 1
                ret = 1
                continue
            top += 1
            f_kind[top] = 0
            f_a[top] = sbuf[f_a[top - 1] + idx]
            f_b[top] = sbuf[f_a[top - 1] + idx + 1]
            f_c[top] = -1
            f_m0[top] = tp
            continue
        # piece frame
        if ret == 1:
            top -= 1
            continue
        lo = f_a[top]
        hi = f_b[top]
        if f_c[top] < 0:
            best = -1
            if width > 0:
                # top-level pieces get every variable probed once
                wd = hi - lo if top == 1 else width
                ok, tp, best = _lookahead(lo, hi, buf, dom, queue, inq, trail_v, trail_d, tp,
                                          e_off, e_vars, e_cid, at_off, at_cnt, at_masks,
                                          v_off, v_edges, sup, max(wd, width), cand, cscore, red)
                if not ok:
                    mark = f_m0[top]
                    while tp > mark:
                        tp -= 1
                        dom[trail_v[tp]] = trail_d[tp]
                    top -= 1
                    ret = 0
                    continue
            else:
                bsize = 1 << 30
                for ii in range(lo, hi):
                    v = buf[ii]
                    sz = _popcount(dom[v])
                    if sz <= 1 or sz > bsize:
                        continue
                    if sz < bsize or v < best:
                        best = v
                        bsize = sz
            if best < 0:
                top -= 1
                ret = 1
                continue
            f_c[top] = best
            f_vals[top] = dom[best]
            f_m1[top] = tp
        ret = -1
        mark = f_m1[top]
        while tp > mark:
            tp -= 1
            dom[trail_v[tp]] = trail_d[tp]
        vals = f_vals[top]
        if vals == 0:
            mark = f_m0[top]
            while tp > mark:
                tp -= 1
                dom[trail_v[tp]] = trail_d[tp]
            top -= 1
            ret = 0
            continue
        v = f_c[top]
        low = _highest_bit(vals) if flip[v] else vals & -vals
        f_vals[top] = vals ^ low
        nodes += 1
        if nodes > budget:
            return BUDGET, nodes
        trail_v[tp] = v
        trail_d[tp] = dom[v]
        tp += 1
        dom[v] = low
        qt = 0
        for i in range(v_off[v], v_off[v + 1]):
            f = v_edges[i]
            inq[f] = 1
            queue[qt] = f
            qt += 1
        ok, tp = _propagate(dom, queue, inq, 0, qt, trail_v, trail_d, tp,
                            e_off, e_vars, e_cid, at_off, at_cnt, at_masks,
                            v_off, v_edges, sup)
        if not ok:
            continue
        stamp += 1
        b0 = bt
        s0 = st
        buf, bt, sbuf, st = _split(lo, hi, buf, bt, sbuf, st, dom, e_off, e_vars, e_cid, at_off, at_cnt,
                                    at_masks, v_off, v_edges, seen, eseen, stamp)
        if st - s0 == 1:
            bt = b0
            st = s0
            top -= 1
            ret = 1
            continue
        if top + 1 >= fcap:
            fcap2 = 2 * fcap
            f_kind = _grow(f_kind, fcap2)
            f_a = _grow(f_a, fcap2)
            f_b = _grow(f_b, fcap2)
            f_c = _grow(f_c, fcap2)
            f_vals = _grow(f_vals, fcap2)
            f_m0 = _grow(f_m0, fcap2)
            f_m1 = _grow(f_m1, fcap2)
            f_bt = _grow(f_bt, fcap2)
            f_st = _grow(f_st, fcap2)
            fcap = fcap2
        top += 1
        f_kind[top] = 1
        f_a[top] = s0
        f_b[top] = st - 1
        f_c[top] = 0
        f_m0[top] = tp
        f_bt[top] = b0
        f_st[top] = s0
    if ret == 0:
        return UNSAT, nodes
    return SAT, nodes


@njit(cache=True)
def _grow(a, size):
    out = np.empty(size, a.dtype)
    out[:len(a)] = a
    return out


@njit(cache=True)
def witness(dom):
    out = np.empty(len(dom), np.int64)
    for v in range(len(dom)):
        out[v] = _lowest_value(dom[v])
    return out
