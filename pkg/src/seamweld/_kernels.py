"""Hot inner loops.

Every kernel exists as a loop version decorated with :func:`accel.njit`; the
belief-propagation, data-cost and bilinear kernels also have vectorised numpy
twins used when numba is switched off.  Both flavours perform the same
floating point operations in the same order where that is practical, so
results agree to the last bit for BP and bilinear sampling.
"""
import numpy as np

from .accel import USE_NUMBA, njit

# grid directions: right, down, left, up
DY = np.array([0, 1, 0, -1], dtype=np.int64)
DX = np.array([1, 0, -1, 0], dtype=np.int64)

FREE, SRC, SNK = 0, 1, 2
TERMINAL = 4
ORPHAN = -1


# ---------------------------------------------------------------------------
# max-flow (Boykov-Kolmogorov search trees on a 4-connected grid)
# ---------------------------------------------------------------------------

@njit
def grid_maxflow(tr, rc, nbr):
    """Run max-flow in place.

    tr[n] > 0 is residual source->n capacity, tr[n] < 0 is residual n->sink
    capacity.  rc[n, k] is the residual capacity of n -> nbr[n, k].  nbr holds
    -1 for missing or inactive neighbours.  Returns (flow, tree) where tree
    marks nodes still connected to the source with SRC.
    """
    n_nodes = tr.shape[0]
    tree = np.zeros(n_nodes, dtype=np.int8)
    parent = np.full(n_nodes, -1, dtype=np.int64)
    dist = np.zeros(n_nodes, dtype=np.int64)
    ts = np.zeros(n_nodes, dtype=np.int64)

    queue = np.empty(n_nodes, dtype=np.int64)
    inq = np.zeros(n_nodes, dtype=np.int8)
    qhead = 0
    qlen = 0

    orph = np.empty(n_nodes, dtype=np.int64)
    ohead = 0
    olen = 0

    for n in range(n_nodes):
        if tr[n] > 0.0:
            tree[n] = SRC
        elif tr[n] < 0.0:
            tree[n] = SNK
        else:
            continue
        parent[n] = TERMINAL
        dist[n] = 1
        queue[(qhead + qlen) % n_nodes] = n
        qlen += 1
        inq[n] = 1

    flow = 0.0
    time = 0
    while True:
        # growth
        found = False
        a = -1
        kab = -1
        while qlen > 0:
            p = queue[qhead]
            tp = tree[p]
            if tp == FREE:
                qhead = (qhead + 1) % n_nodes
                qlen -= 1
                inq[p] = 0
                continue
            for k in range(4):
                q = nbr[p, k]
                if q < 0:
                    continue
                rk = (k + 2) % 4
                if tp == SRC:
                    cap = rc[p, k]
                else:
                    cap = rc[q, rk]
                if cap <= 0.0:
                    continue
                tq = tree[q]
                if tq == FREE:
                    tree[q] = tp
                    parent[q] = rk
                    dist[q] = dist[p] + 1
                    ts[q] = ts[p]
                    if inq[q] == 0:
                        queue[(qhead + qlen) % n_nodes] = q
                        qlen += 1
                        inq[q] = 1
                elif tq != tp:
                    found = True
                    if tp == SRC:
                        a = p
                        kab = k
                    else:
                        a = q
                        kab = rk
                    break
                elif ts[q] <= ts[p] and dist[q] > dist[p]:
                    parent[q] = rk
                    ts[q] = ts[p]
                    dist[q] = dist[p] + 1
            if found:
                break
            qhead = (qhead + 1) % n_nodes
            qlen -= 1
            inq[p] = 0
        if not found:
            break

        time += 1
        b = nbr[a, kab]

        # bottleneck
        bn = rc[a, kab]
        x = a
        while parent[x] != TERMINAL:
            k2 = parent[x]
            y = nbr[x, k2]
            c = rc[y, (k2 + 2) % 4]
            if c < bn:
                bn = c
            x = y
        if tr[x] < bn:
            bn = tr[x]
        x = b
        while parent[x] != TERMINAL:
            k2 = parent[x]
            c = rc[x, k2]
            if c < bn:
                bn = c
            x = nbr[x, k2]
        if -tr[x] < bn:
            bn = -tr[x]

        # push
        rc[a, kab] -= bn
        rc[b, (kab + 2) % 4] += bn
        x = a
        while parent[x] != TERMINAL:
            k2 = parent[x]
            y = nbr[x, k2]
            rk2 = (k2 + 2) % 4
            rc[y, rk2] -= bn
            rc[x, k2] += bn
            if rc[y, rk2] <= 0.0:
                parent[x] = ORPHAN
                orph[(ohead + olen) % n_nodes] = x
                olen += 1
            x = y
        tr[x] -= bn
        if tr[x] <= 0.0:
            parent[x] = ORPHAN
            orph[(ohead + olen) % n_nodes] = x
            olen += 1
        x = b
        while parent[x] != TERMINAL:
            k2 = parent[x]
            y = nbr[x, k2]
            rc[x, k2] -= bn
            rc[y, (k2 + 2) % 4] += bn
            if rc[x, k2] <= 0.0:
                parent[x] = ORPHAN
                orph[(ohead + olen) % n_nodes] = x
                olen += 1
            x = y
        tr[x] += bn
        if tr[x] >= 0.0:
            parent[x] = ORPHAN
            orph[(ohead + olen) % n_nodes] = x
            olen += 1
        flow += bn

        # adoption
        while olen > 0:
            x = orph[ohead]
            ohead = (ohead + 1) % n_nodes
            olen -= 1
            tx = tree[x]
            best_k = -1
            best_d = 1 << 60
            for k2 in range(4):
                y = nbr[x, k2]
                if y < 0 or tree[y] != tx:
                    continue
                if tx == SRC:
                    cap = rc[y, (k2 + 2) % 4]
                else:
                    cap = rc[x, k2]
                if cap <= 0.0:
                    continue
                # does y still reach its terminal?
                d = 0
                z = y
                ok = False
                while True:
                    if ts[z] == time:
                        d += dist[z]
                        ok = True
                        break
                    d += 1
                    pz = parent[z]
                    if pz == TERMINAL:
                        ts[z] = time
                        dist[z] = 1
                        ok = True
                        break
                    if pz == ORPHAN:
                        break
                    z = nbr[z, pz]
                if ok:
                    if d < best_d:
                        best_d = d
                        best_k = k2
                    z = y
                    while ts[z] != time:
                        ts[z] = time
                        dist[z] = d
                        d -= 1
                        z = nbr[z, parent[z]]
            if best_k >= 0:
                parent[x] = best_k
                ts[x] = time
                dist[x] = best_d + 1
            else:
                for k2 in range(4):
                    y = nbr[x, k2]
                    if y < 0 or tree[y] != tx:
                        continue
                    if tx == SRC:
                        cap = rc[y, (k2 + 2) % 4]
                    else:
                        cap = rc[x, k2]
                    if cap > 0.0 and inq[y] == 0:
                        queue[(qhead + qlen) % n_nodes] = y
                        qlen += 1
                        inq[y] = 1
                    py = parent[y]
                    if py >= 0 and py < 4 and nbr[y, py] == x:
                        parent[y] = ORPHAN
                        orph[(ohead + olen) % n_nodes] = y
                        olen += 1
                tree[x] = FREE
                parent[x] = ORPHAN
    return flow, tree


# ---------------------------------------------------------------------------
# bilinear sampling with validity propagation
# ---------------------------------------------------------------------------

@njit
def bilinear_loop(image, mask, xs, ys):
    h, w, c = image.shape
    n = xs.shape[0]
    out = np.zeros((n, c))
    ok = np.ones(n, dtype=np.bool_)
    for i in range(n):
        x = min(max(xs[i], 0.0), w - 1.0)
        y = min(max(ys[i], 0.0), h - 1.0)
        x0 = int(np.floor(x))
        y0 = int(np.floor(y))
        x1 = min(x0 + 1, w - 1)
        y1 = min(y0 + 1, h - 1)
        fx = x - x0
        fy = y - y0
        w00 = (1.0 - fx) * (1.0 - fy)
        w01 = fx * (1.0 - fy)
        w10 = (1.0 - fx) * fy
        w11 = fx * fy
        if ((w00 > 0.0 and not mask[y0, x0]) or (w01 > 0.0 and not mask[y0, x1])
                or (w10 > 0.0 and not mask[y1, x0]) or (w11 > 0.0 and not mask[y1, x1])):
            ok[i] = False
            continue
        for ch in range(c):
            out[i, ch] = (w00 * image[y0, x0, ch] + w01 * image[y0, x1, ch]
                          + w10 * image[y1, x0, ch] + w11 * image[y1, x1, ch])
    return out, ok


def bilinear_vec(image, mask, xs, ys):
    h, w, c = image.shape
    x = np.clip(xs, 0.0, w - 1.0)
    y = np.clip(ys, 0.0, h - 1.0)
    x0 = np.floor(x).astype(np.int64)
    y0 = np.floor(y).astype(np.int64)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = x - x0
    fy = y - y0
    w00 = (1.0 - fx) * (1.0 - fy)
    w01 = fx * (1.0 - fy)
    w10 = (1.0 - fx) * fy
    w11 = fx * fy
    bad = (((w00 > 0) & ~mask[y0, x0]) | ((w01 > 0) & ~mask[y0, x1])
           | ((w10 > 0) & ~mask[y1, x0]) | ((w11 > 0) & ~mask[y1, x1]))
    out = (w00[:, None] * image[y0, x0] + w01[:, None] * image[y0, x1]
           + w10[:, None] * image[y1, x0] + w11[:, None] * image[y1, x1])
    out[bad] = 0.0
    return out, ~bad


def bilinear(image, mask, xs, ys):
    xs = np.ascontiguousarray(xs, dtype=np.float64).ravel()
    ys = np.ascontiguousarray(ys, dtype=np.float64).ravel()
    if USE_NUMBA:
        return bilinear_loop(image, mask, xs, ys)
    return bilinear_vec(image, mask, xs, ys)


# ---------------------------------------------------------------------------
# discrete flow: data cost over a (2R+1)^2 label window per pixel
# ---------------------------------------------------------------------------

@njit
def data_cost_loop(d0, d1, cu, cv, radius, trunc, eta):
    h, w, nd = d1.shape
    nl = 2 * radius + 1
    out = np.empty((h, w, nl, nl))
    for y in range(h):
        for x in range(w):
            for iu in range(nl):
                u = cu[y, x] + iu - radius
                xx = min(max(x + u, 0), w - 1)
                for iv in range(nl):
                    v = cv[y, x] + iv - radius
                    yy = min(max(y + v, 0), h - 1)
                    s = 0.0
                    for k in range(nd):
                        s += abs(d0[yy, xx, k] - d1[y, x, k])
                    if s > trunc:
                        s = trunc
                    out[y, x, iu, iv] = s + eta * (abs(u) + abs(v))
    return out


def data_cost_vec(d0, d1, cu, cv, radius, trunc, eta):
    h, w, _ = d1.shape
    nl = 2 * radius + 1
    out = np.empty((h, w, nl, nl))
    yy0, xx0 = np.mgrid[0:h, 0:w]
    for iu in range(nl):
        u = cu + iu - radius
        xx = np.clip(xx0 + u, 0, w - 1)
        for iv in range(nl):
            v = cv + iv - radius
            yy = np.clip(yy0 + v, 0, h - 1)
            s = np.abs(d0[yy, xx] - d1).sum(axis=2)
            out[:, :, iu, iv] = np.minimum(s, trunc) + eta * (np.abs(u) + np.abs(v))
    return out


def data_cost(d0, d1, cu, cv, radius, trunc, eta):
    args = (np.ascontiguousarray(d0, dtype=np.float64), np.ascontiguousarray(d1, dtype=np.float64),
            np.ascontiguousarray(cu, dtype=np.int64), np.ascontiguousarray(cv, dtype=np.int64),
            int(radius), float(trunc), float(eta))
    if USE_NUMBA:
        return data_cost_loop(*args)
    return data_cost_vec(*args)


# ---------------------------------------------------------------------------
# min-sum belief propagation with separable truncated-L1 smoothness
# ---------------------------------------------------------------------------
# msgs[k] holds what each pixel receives from its neighbour in direction k
# (right, down, left, up).  Labels are offsets from a per-pixel centre, so a
# message from p to q evaluates the distance transform at j + (c_q - c_p).

@njit
def _dt_shifted(h, shift, alpha, trunc_d, out):
    # out[j] = min_i h[i] + min(alpha*|i - (j + shift)|, trunc_d)
    nl = h.shape[0]
    f = h.copy()
    hmin = f[0]
    for i in range(1, nl):
        if f[i] < hmin:
            hmin = f[i]
        if f[i - 1] + alpha < f[i]:
            f[i] = f[i - 1] + alpha
    for i in range(nl - 2, -1, -1):
        if f[i + 1] + alpha < f[i]:
            f[i] = f[i + 1] + alpha
    cap = hmin + trunc_d
    for j in range(nl):
        x = j + shift
        if x < 0:
            val = f[0] + alpha * (-x)
        elif x > nl - 1:
            val = f[nl - 1] + alpha * (x - (nl - 1))
        else:
            val = f[x]
        out[j] = val if val < cap else cap


@njit
def bp_loop(cost, cu, cv, alpha, trunc_d, n_iter):
    h, w, nl, _ = cost.shape
    msgs = np.zeros((4, h, w, nl, nl))
    hbuf = np.empty((nl, nl))
    tmp = np.empty((nl, nl))
    col = np.empty(nl)
    res = np.empty(nl)
    for it in range(n_iter):
        parity = it % 2
        for y in range(h):
            for x in range((y + parity) % 2, w, 2):
                for k in range(4):
                    qy = y + DY[k]
                    qx = x + DX[k]
                    if qy < 0 or qy >= h or qx < 0 or qx >= w:
                        continue
                    # h = cost + incoming messages except the one from q
                    for a in range(nl):
                        for b in range(nl):
                            s = cost[y, x, a, b]
                            for kk in range(4):
                                if kk != k:
                                    s += msgs[kk, y, x, a, b]
                            hbuf[a, b] = s
                    su = cu[qy, qx] - cu[y, x]
                    sv = cv[qy, qx] - cv[y, x]
                    for a in range(nl):
                        _dt_shifted(hbuf[a], sv, alpha, trunc_d, tmp[a])
                    rk = (k + 2) % 4
                    mn = np.inf
                    for b in range(nl):
                        for a in range(nl):
                            col[a] = tmp[a, b]
                        _dt_shifted(col, su, alpha, trunc_d, res)
                        for a in range(nl):
                            msgs[rk, qy, qx, a, b] = res[a]
                            if res[a] < mn:
                                mn = res[a]
                    for a in range(nl):
                        for b in range(nl):
                            msgs[rk, qy, qx, a, b] -= mn
    return _beliefs_argmin(cost, msgs)


@njit
def _beliefs_argmin(cost, msgs):
    h, w, nl, _ = cost.shape
    iu = np.empty((h, w), dtype=np.int64)
    iv = np.empty((h, w), dtype=np.int64)
    for y in range(h):
        for x in range(w):
            best = np.inf
            ba = 0
            bb = 0
            for a in range(nl):
                for b in range(nl):
                    s = cost[y, x, a, b]
                    for kk in range(4):
                        s += msgs[kk, y, x, a, b]
                    if s < best:
                        best = s
                        ba = a
                        bb = b
            iu[y, x] = ba
            iv[y, x] = bb
    return iu, iv


def _dt_shifted_vec(hv, shift, alpha, trunc_d):
    # hv: (..., nl) with distance transform along the last axis; shift broadcasts over (...)
    nl = hv.shape[-1]
    f = hv.copy()
    hmin = f[..., 0].copy()
    for i in range(1, nl):
        hmin = np.minimum(hmin, f[..., i])
        f[..., i] = np.minimum(f[..., i], f[..., i - 1] + alpha)
    for i in range(nl - 2, -1, -1):
        f[..., i] = np.minimum(f[..., i], f[..., i + 1] + alpha)
    x = np.arange(nl) + shift[..., None]
    xc = np.clip(x, 0, nl - 1)
    val = np.take_along_axis(f, xc, axis=-1) + alpha * np.abs(x - xc)
    return np.minimum(val, (hmin + trunc_d)[..., None])


def bp_vec(cost, cu, cv, alpha, trunc_d, n_iter):
    h, w, nl, _ = cost.shape
    msgs = np.zeros((4, h, w, nl, nl))
    parity_of = (np.add.outer(np.arange(h), np.arange(w)) % 2)
    for it in range(n_iter):
        senders = parity_of == (it % 2)
        new = []
        for k in range(4):
            hsum = cost.copy()
            for kk in range(4):
                if kk != k:
                    hsum += msgs[kk]
            dy, dx = int(DY[k]), int(DX[k])
            # shift of neighbour centres, zero where the neighbour is off-grid
            su = np.zeros((h, w), dtype=np.int64)
            sv = np.zeros((h, w), dtype=np.int64)
            ys = slice(max(0, -dy), h - max(0, dy))
            xs = slice(max(0, -dx), w - max(0, dx))
            yq = slice(max(0, dy), h - max(0, -dy))
            xq = slice(max(0, dx), w - max(0, -dx))
            su[ys, xs] = cu[yq, xq] - cu[ys, xs]
            sv[ys, xs] = cv[yq, xq] - cv[ys, xs]
            tmp = _dt_shifted_vec(hsum, sv[:, :, None], alpha, trunc_d)
            tmp = np.swapaxes(tmp, 2, 3)
            res = _dt_shifted_vec(tmp, su[:, :, None], alpha, trunc_d)
            res = np.swapaxes(res, 2, 3)
            res = res - res.min(axis=(2, 3), keepdims=True)
            new.append((k, ys, xs, yq, xq, res))
        for k, ys, xs, yq, xq, res in new:
            rk = (k + 2) % 4
            send = senders[ys, xs]
            target = msgs[rk][yq, xq]
            target[send] = res[ys, xs][send]
    belief = cost + msgs[0] + msgs[1] + msgs[2] + msgs[3]
    flat = belief.reshape(h, w, nl * nl).argmin(axis=2)
    return flat // nl, flat % nl


def run_bp(cost, cu, cv, alpha, trunc_d, n_iter):
    args = (np.ascontiguousarray(cost, dtype=np.float64), np.ascontiguousarray(cu, dtype=np.int64),
            np.ascontiguousarray(cv, dtype=np.int64), float(alpha), float(trunc_d), int(n_iter))
    if USE_NUMBA:
        return bp_loop(*args)
    return bp_vec(*args)
