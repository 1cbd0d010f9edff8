"""Numba kernels for the hot loops: fast sweeping and band stencil evaluation.

Sweep order is fixed, so results are deterministic for any thread count.
All kernels are compiled with ``cache=True`` and without fastmath so the
arithmetic is plain IEEE double.
"""

import numpy as np
from numba import njit

INF = 1.0e30


@njit(cache=True, nogil=True)
def _eik2(a, b, h):
    # Solution of max(d-a,0)^2 + max(d-b,0)^2 = h^2 with a, b the smaller
    # upwind neighbor values per axis (Zhao's fast sweeping update).
    if a > b:
        a, b = b, a
    if b - a >= h:
        return a + h
    return 0.5 * (a + b + np.sqrt(2.0 * h * h - (a - b) * (a - b)))


@njit(cache=True, nogil=True)
def _eik3(a, b, c, h):
    if a > b:
        a, b = b, a
    if b > c:
        b, c = c, b
    if a > b:
        a, b = b, a
    d = a + h
    if d <= b:
        return d
    d = 0.5 * (a + b + np.sqrt(2.0 * h * h - (a - b) * (a - b)))
    if d <= c:
        return d
    s = a + b + c
    q = s * s - 3.0 * (a * a + b * b + c * c - h * h)
    if q < 0.0:
        q = 0.0
    return (s + np.sqrt(q)) / 3.0


@njit(cache=True, nogil=True)
def _sweep_dir_2d(dist, frozen, h, slack, cutoff, i0, i1, j0, j1, istep, jstep):
    change = 0.0
    irange = range(i0, i1) if istep > 0 else range(i1 - 1, i0 - 1, -1)
    for i in irange:
        jrange = range(j0, j1) if jstep > 0 else range(j1 - 1, j0 - 1, -1)
        for j in jrange:
            a = INF
            if i > i0 and dist[i - 1, j] < a:
                a = dist[i - 1, j]
            if i < i1 - 1 and dist[i + 1, j] < a:
                a = dist[i + 1, j]
            b = INF
            if j > j0 and dist[i, j - 1] < b:
                b = dist[i, j - 1]
            if j < j1 - 1 and dist[i, j + 1] < b:
                b = dist[i, j + 1]
            if a >= INF and b >= INF:
                continue
            d = _eik2(a, b, h) if (a < INF and b < INF) else min(a, b) + h
            if d > cutoff:
                continue
            if d < dist[i, j]:
                # seeded cells act as upper bounds: only a grossly
                # inconsistent seed (medial-axis overshoot) is lowered
                if (not frozen[i, j]) or (dist[i, j] - d > slack):
                    if dist[i, j] - d > change:
                        change = dist[i, j] - d
                    dist[i, j] = d
    return change


@njit(cache=True, nogil=True)
def fsm_round_2d(dist, frozen, h, slack, cutoff, i0, i1, j0, j1):
    """One round of the four directional Gauss-Seidel sweeps; returns max update."""
    c = 0.0
    for istep in (1, -1):
        for jstep in (1, -1):
            ci = _sweep_dir_2d(dist, frozen, h, slack, cutoff, i0, i1, j0, j1, istep, jstep)
            if ci > c:
                c = ci
    return c


@njit(cache=True, nogil=True)
def _sweep_dir_3d(dist, frozen, h, slack, cutoff, i0, i1, j0, j1, k0, k1, istep, jstep, kstep):
    change = 0.0
    irange = range(i0, i1) if istep > 0 else range(i1 - 1, i0 - 1, -1)
    for i in irange:
        jrange = range(j0, j1) if jstep > 0 else range(j1 - 1, j0 - 1, -1)
        for j in jrange:
            krange = range(k0, k1) if kstep > 0 else range(k1 - 1, k0 - 1, -1)
            for k in krange:
                a = INF
                if i > i0 and dist[i - 1, j, k] < a:
                    a = dist[i - 1, j, k]
                if i < i1 - 1 and dist[i + 1, j, k] < a:
                    a = dist[i + 1, j, k]
                b = INF
                if j > j0 and dist[i, j - 1, k] < b:
                    b = dist[i, j - 1, k]
                if j < j1 - 1 and dist[i, j + 1, k] < b:
                    b = dist[i, j + 1, k]
                c = INF
                if k > k0 and dist[i, j, k - 1] < c:
                    c = dist[i, j, k - 1]
                if k < k1 - 1 and dist[i, j, k + 1] < c:
                    c = dist[i, j, k + 1]
                nfin = 0
                if a < INF:
                    nfin += 1
                if b < INF:
                    nfin += 1
                if c < INF:
                    nfin += 1
                if nfin == 0:
                    continue
                if nfin == 3:
                    d = _eik3(a, b, c, h)
                elif nfin == 2:
                    if a >= INF:
                        d = _eik2(b, c, h)
                    elif b >= INF:
                        d = _eik2(a, c, h)
                    else:
                        d = _eik2(a, b, h)
                else:
                    d = min(min(a, b), c) + h
                if d > cutoff:
                    continue
                if d < dist[i, j, k]:
                    if (not frozen[i, j, k]) or (dist[i, j, k] - d > slack):
                        if dist[i, j, k] - d > change:
                            change = dist[i, j, k] - d
                        dist[i, j, k] = d
    return change


@njit(cache=True, nogil=True)
def fsm_round_3d(dist, frozen, h, slack, cutoff, i0, i1, j0, j1, k0, k1):
    c = 0.0
    for istep in (1, -1):
        for jstep in (1, -1):
            for kstep in (1, -1):
                ci = _sweep_dir_3d(dist, frozen, h, slack, cutoff, i0, i1, j0, j1, k0, k1, istep, jstep, kstep)
                if ci > c:
                    c = ci
    return c


@njit(cache=True, nogil=True)
def curvature_cells_2d(v, ii, jj, h, eps_reg, floor2, clip):
    """Curvature motion term |grad u| div(grad u/|grad u|) at listed cells.

    Degenerate-gradient cells get motion 0.  Values beyond +-clip are
    clamped; the second return value counts clamped cells.
    """
    n = ii.shape[0]
    out = np.zeros(n, dtype=np.float64)
    clipped = 0
    inv2h = 0.5 / h
    invh2 = 1.0 / (h * h)
    for m in range(n):
        i = ii[m]
        j = jj[m]
        ux = (v[i + 1, j] - v[i - 1, j]) * inv2h
        uy = (v[i, j + 1] - v[i, j - 1]) * inv2h
        g2 = ux * ux + uy * uy
        if g2 < floor2:
            continue
        uxx = (v[i + 1, j] - 2.0 * v[i, j] + v[i - 1, j]) * invh2
        uyy = (v[i, j + 1] - 2.0 * v[i, j] + v[i, j - 1]) * invh2
        uxy = (v[i + 1, j + 1] - v[i + 1, j - 1] - v[i - 1, j + 1] + v[i - 1, j - 1]) * (0.25 * invh2)
        val = (uxx + uyy) - (ux * ux * uxx + 2.0 * ux * uy * uxy + uy * uy * uyy) / (g2 + eps_reg)
        if val > clip:
            val = clip
            clipped += 1
        elif val < -clip:
            val = -clip
            clipped += 1
        out[m] = val
    return out, clipped


@njit(cache=True, nogil=True)
def curvature_cells_3d(v, ii, jj, kk, h, eps_reg, floor2, clip):
    n = ii.shape[0]
    out = np.zeros(n, dtype=np.float64)
    clipped = 0
    inv2h = 0.5 / h
    invh2 = 1.0 / (h * h)
    for m in range(n):
        i = ii[m]
        j = jj[m]
        k = kk[m]
        ux = (v[i + 1, j, k] - v[i - 1, j, k]) * inv2h
        uy = (v[i, j + 1, k] - v[i, j - 1, k]) * inv2h
        uz = (v[i, j, k + 1] - v[i, j, k - 1]) * inv2h
        g2 = ux * ux + uy * uy + uz * uz
        if g2 < floor2:
            continue
        uxx = (v[i + 1, j, k] - 2.0 * v[i, j, k] + v[i - 1, j, k]) * invh2
        uyy = (v[i, j + 1, k] - 2.0 * v[i, j, k] + v[i, j - 1, k]) * invh2
        uzz = (v[i, j, k + 1] - 2.0 * v[i, j, k] + v[i, j, k - 1]) * invh2
        uxy = (v[i + 1, j + 1, k] - v[i + 1, j - 1, k] - v[i - 1, j + 1, k] + v[i - 1, j - 1, k]) * (0.25 * invh2)
        uxz = (v[i + 1, j, k + 1] - v[i + 1, j, k - 1] - v[i - 1, j, k + 1] + v[i - 1, j, k - 1]) * (0.25 * invh2)
        uyz = (v[i, j + 1, k + 1] - v[i, j + 1, k - 1] - v[i, j - 1, k + 1] + v[i, j - 1, k - 1]) * (0.25 * invh2)
        lap = uxx + uyy + uzz
        quad = (
            ux * ux * uxx + uy * uy * uyy + uz * uz * uzz
            + 2.0 * (ux * uy * uxy + ux * uz * uxz + uy * uz * uyz)
        )
        val = lap - quad / (g2 + eps_reg)
        if val > clip:
            val = clip
            clipped += 1
        elif val < -clip:
            val = -clip
            clipped += 1
        out[m] = val
    return out, clipped


@njit(cache=True, nogil=True)
def abs_A_cells_2d(v, ii, jj, h, floor2):
    """Norm of the level-set second fundamental form at listed cells (0 if degenerate)."""
    n = ii.shape[0]
    out = np.zeros(n, dtype=np.float64)
    inv2h = 0.5 / h
    invh2 = 1.0 / (h * h)
    for m in range(n):
        i = ii[m]
        j = jj[m]
        ux = (v[i + 1, j] - v[i - 1, j]) * inv2h
        uy = (v[i, j + 1] - v[i, j - 1]) * inv2h
        g2 = ux * ux + uy * uy
        if g2 < floor2:
            continue
        g = np.sqrt(g2)
        nx = ux / g
        ny = uy / g
        uxx = (v[i + 1, j] - 2.0 * v[i, j] + v[i - 1, j]) * invh2
        uyy = (v[i, j + 1] - 2.0 * v[i, j] + v[i, j - 1]) * invh2
        uxy = (v[i + 1, j + 1] - v[i + 1, j - 1] - v[i - 1, j + 1] + v[i - 1, j - 1]) * (0.25 * invh2)
        # B = P H P / |grad u|,  P = I - n n^T
        p00 = 1.0 - nx * nx
        p01 = -nx * ny
        p11 = 1.0 - ny * ny
        # T = H P
        t00 = uxx * p00 + uxy * p01
        t01 = uxx * p01 + uxy * p11
        t10 = uxy * p00 + uyy * p01
        t11 = uxy * p01 + uyy * p11
        b00 = (p00 * t00 + p01 * t10) / g
        b01 = (p00 * t01 + p01 * t11) / g
        b10 = (p01 * t00 + p11 * t10) / g
        b11 = (p01 * t01 + p11 * t11) / g
        out[m] = np.sqrt(b00 * b00 + b01 * b01 + b10 * b10 + b11 * b11)
    return out


@njit(cache=True, nogil=True)
def abs_A_cells_3d(v, ii, jj, kk, h, floor2):
    n = ii.shape[0]
    out = np.zeros(n, dtype=np.float64)
    inv2h = 0.5 / h
    invh2 = 1.0 / (h * h)
    hess = np.empty((3, 3), dtype=np.float64)
    p = np.empty((3, 3), dtype=np.float64)
    for m in range(n):
        i = ii[m]
        j = jj[m]
        k = kk[m]
        ux = (v[i + 1, j, k] - v[i - 1, j, k]) * inv2h
        uy = (v[i, j + 1, k] - v[i, j - 1, k]) * inv2h
        uz = (v[i, j, k + 1] - v[i, j, k - 1]) * inv2h
        g2 = ux * ux + uy * uy + uz * uz
        if g2 < floor2:
            continue
        g = np.sqrt(g2)
        hess[0, 0] = (v[i + 1, j, k] - 2.0 * v[i, j, k] + v[i - 1, j, k]) * invh2
        hess[1, 1] = (v[i, j + 1, k] - 2.0 * v[i, j, k] + v[i, j - 1, k]) * invh2
        hess[2, 2] = (v[i, j, k + 1] - 2.0 * v[i, j, k] + v[i, j, k - 1]) * invh2
        hess[0, 1] = (v[i + 1, j + 1, k] - v[i + 1, j - 1, k] - v[i - 1, j + 1, k] + v[i - 1, j - 1, k]) * (0.25 * invh2)
        hess[0, 2] = (v[i + 1, j, k + 1] - v[i + 1, j, k - 1] - v[i - 1, j, k + 1] + v[i - 1, j, k - 1]) * (0.25 * invh2)
        hess[1, 2] = (v[i, j + 1, k + 1] - v[i, j + 1, k - 1] - v[i, j - 1, k + 1] + v[i, j - 1, k - 1]) * (0.25 * invh2)
        hess[1, 0] = hess[0, 1]
        hess[2, 0] = hess[0, 2]
        hess[2, 1] = hess[1, 2]
        nv0 = ux / g
        nv1 = uy / g
        nv2 = uz / g
        p[0, 0] = 1.0 - nv0 * nv0
        p[0, 1] = -nv0 * nv1
        p[0, 2] = -nv0 * nv2
        p[1, 0] = p[0, 1]
        p[1, 1] = 1.0 - nv1 * nv1
        p[1, 2] = -nv1 * nv2
        p[2, 0] = p[0, 2]
        p[2, 1] = p[1, 2]
        p[2, 2] = 1.0 - nv2 * nv2
        acc = 0.0
        for r in range(3):
            for c in range(3):
                brc = 0.0
                for a in range(3):
                    ta = 0.0
                    for b in range(3):
                        ta += hess[a, b] * p[b, c]
                    brc += p[r, a] * ta
                brc /= g
                acc += brc * brc
        out[m] = np.sqrt(acc)
    return out


@njit(cache=True, nogil=True)
def seed_estimates_2d(v, ii, jj, h, taper):
    """Corrected distance estimate |u|/g * (1 + sign(u)*beta*|u|/(2g)) per cell."""
    n = ii.shape[0]
    d = np.empty(n, dtype=np.float64)
    inv2h = 0.5 / h
    invh2 = 1.0 / (h * h)
    for m in range(n):
        i = ii[m]
        j = jj[m]
        ux = (v[i + 1, j] - v[i - 1, j]) * inv2h
        uy = (v[i, j + 1] - v[i, j - 1]) * inv2h
        g2 = ux * ux + uy * uy
        g = np.sqrt(g2)
        if g < 1e-12:
            d[m] = np.abs(v[i, j])
            continue
        uxx = (v[i + 1, j] - 2.0 * v[i, j] + v[i - 1, j]) * invh2
        uyy = (v[i, j + 1] - 2.0 * v[i, j] + v[i, j - 1]) * invh2
        uxy = (v[i + 1, j + 1] - v[i + 1, j - 1] - v[i - 1, j + 1] + v[i - 1, j - 1]) * (0.25 * invh2)
        quad = ux * ux * uxx + 2.0 * ux * uy * uxy + uy * uy * uyy
        beta = quad / (g2 * g)
        raw = np.abs(v[i, j]) / g
        corr = np.sign(v[i, j]) * beta * raw * 0.5
        if corr > 0.2:
            corr = 0.2
        elif corr < -0.2:
            corr = -0.2
        # the slope-drift correction matters within stencil reach of the
        # interface; farther out it amplifies sweeping texture, so cyclic
        # reinitialization tapers it (taper = 1); construction does not
        w = (5.0 - raw / h) / 2.0
        if w > 1.0:
            w = 1.0
        elif w < 0.0:
            w = 0.0
        w = taper * w + (1.0 - taper)
        d[m] = raw * (1.0 + corr * w)
    return d


@njit(cache=True, nogil=True)
def seed_estimates_3d(v, ii, jj, kk, h, taper):
    n = ii.shape[0]
    d = np.empty(n, dtype=np.float64)
    inv2h = 0.5 / h
    invh2 = 1.0 / (h * h)
    for m in range(n):
        i = ii[m]
        j = jj[m]
        k = kk[m]
        ux = (v[i + 1, j, k] - v[i - 1, j, k]) * inv2h
        uy = (v[i, j + 1, k] - v[i, j - 1, k]) * inv2h
        uz = (v[i, j, k + 1] - v[i, j, k - 1]) * inv2h
        g2 = ux * ux + uy * uy + uz * uz
        g = np.sqrt(g2)
        if g < 1e-12:
            d[m] = np.abs(v[i, j, k])
            continue
        uxx = (v[i + 1, j, k] - 2.0 * v[i, j, k] + v[i - 1, j, k]) * invh2
        uyy = (v[i, j + 1, k] - 2.0 * v[i, j, k] + v[i, j - 1, k]) * invh2
        uzz = (v[i, j, k + 1] - 2.0 * v[i, j, k] + v[i, j, k - 1]) * invh2
        uxy = (v[i + 1, j + 1, k] - v[i + 1, j - 1, k] - v[i - 1, j + 1, k] + v[i - 1, j - 1, k]) * (0.25 * invh2)
        uxz = (v[i + 1, j, k + 1] - v[i + 1, j, k - 1] - v[i - 1, j, k + 1] + v[i - 1, j, k - 1]) * (0.25 * invh2)
        uyz = (v[i, j + 1, k + 1] - v[i, j + 1, k - 1] - v[i, j - 1, k + 1] + v[i, j - 1, k - 1]) * (0.25 * invh2)
        quad = (
            ux * ux * uxx + uy * uy * uyy + uz * uz * uzz
            + 2.0 * (ux * uy * uxy + ux * uz * uxz + uy * uz * uyz)
        )
        beta = quad / (g2 * g)
        raw = np.abs(v[i, j, k]) / g
        corr = np.sign(v[i, j, k]) * beta * raw * 0.5
        if corr > 0.2:
            corr = 0.2
        elif corr < -0.2:
            corr = -0.2
        w = (5.0 - raw / h) / 2.0
        if w > 1.0:
            w = 1.0
        elif w < 0.0:
            w = 0.0
        w = taper * w + (1.0 - taper)
        d[m] = raw * (1.0 + corr * w)
    return d
