"""Compiled inner loops.

Generators are lowered to a flat program: ``codes[j]`` selects a primitive,
``params[j]`` holds its parameters and generator ``g`` owns the primitives
``starts[g]:starts[g + 1]`` applied in order. Frames are lowered to a kind
code plus a parameter vector. Every kernel here is pure (no global state) and
releases the GIL so several can run from a thread pool.
"""

import math

import numpy as np
from numba import njit

# primitive codes
OP_MATRIX = 0      # base point unchanged, derivative = M
OP_LINEAR = 1      # x -> M x mod 1
OP_TRANSLATE = 2   # x -> x + v mod 1
OP_STANDARD = 3    # Chirikov standard map with parameter K
OP_SHEAR_H = 4     # (x, y) -> (x + g(y), y)
OP_SHEAR_V = 5     # (x, y) -> (x, y + g(x))

# frame codes
FRAME_IDENTITY = 0
FRAME_CONSTANT = 1
FRAME_ROTATION = 2

N_PARAMS = 6
TWO_PI = 2.0 * math.pi
OVERFLOW = 1e300

_jit = dict(cache=True, nogil=True)


@njit(**_jit)
def wrap1(u):
    r = u - math.floor(u)
    if r >= 1.0:
        r = 0.0
    return r


@njit(**_jit)
def wrap_pi(t):
    r = t - math.pi * math.floor(t / math.pi)
    if r >= math.pi or r < 0.0:
        r = 0.0
    return r


@njit(**_jit)
def bump_g(y, center, radius, strength):
    """Return (g(y), g'(y)) for g(y) = s*d*(1-u^2)^3, d = y - center (periodic), u = d/r."""
    d = y - center
    d -= math.floor(d + 0.5)
    u = d / radius
    if abs(u) >= 1.0:
        return 0.0, 0.0
    w = 1.0 - u * u
    return strength * d * w * w * w, strength * w * w * (1.0 - 7.0 * u * u)


@njit(**_jit)
def prim_step(code, p, x, y):
    if code == OP_MATRIX:
        return x, y, p[0], p[1], p[2], p[3]
    if code == OP_LINEAR:
        return (wrap1(p[0] * x + p[1] * y), wrap1(p[2] * x + p[3] * y),
                p[0], p[1], p[2], p[3])
    if code == OP_TRANSLATE:
        return wrap1(x + p[0]), wrap1(y + p[1]), 1.0, 0.0, 0.0, 1.0
    if code == OP_STANDARD:
        k = p[0]
        kick = k / TWO_PI * math.sin(TWO_PI * x)
        kc = k * math.cos(TWO_PI * x)
        y2 = y + kick
        return wrap1(x + y2), wrap1(y2), 1.0 + kc, 1.0, kc, 1.0
    if code == OP_SHEAR_H:
        g, dg = bump_g(y, p[0], p[1], p[2])
        return wrap1(x + g), y, 1.0, dg, 0.0, 1.0
    # OP_SHEAR_V
    g, dg = bump_g(x, p[0], p[1], p[2])
    return x, wrap1(y + g), 1.0, 0.0, dg, 1.0


@njit(**_jit)
def gen_step(codes, params, starts, g, x, y):
    """Apply generator g at (x, y); return the image and the chained Jacobian."""
    a, b, c, d = 1.0, 0.0, 0.0, 1.0
    for j in range(starts[g], starts[g + 1]):
        x, y, e, f, h, k = prim_step(codes[j], params[j], x, y)
        a, b, c, d = e * a + f * c, e * b + f * d, h * a + k * c, h * b + k * d
    return x, y, a, b, c, d


@njit(**_jit)
def frame_matrix(fkind, fp, x, y):
    if fkind == FRAME_IDENTITY:
        return 1.0, 0.0, 0.0, 1.0
    if fkind == FRAME_CONSTANT:
        return fp[0], fp[1], fp[2], fp[3]
    phi = TWO_PI * (fp[0] * x + fp[1] * y) + fp[2]
    c = math.cos(phi)
    s = math.sin(phi)
    return c, -s, s, c


@njit(**_jit)
def frame_conj(fkind, fp, x, y, x2, y2, a, b, c, d):
    """J = P(x2) Df P(x)^-1."""
    if fkind == FRAME_IDENTITY:
        return a, b, c, d
    p0, p1, p2, p3 = frame_matrix(fkind, fp, x, y)
    det = p0 * p3 - p1 * p2
    i0, i1, i2, i3 = p3 / det, -p1 / det, -p2 / det, p0 / det
    # Df P(x)^-1
    m0, m1 = a * i0 + b * i2, a * i1 + b * i3
    m2, m3 = c * i0 + d * i2, c * i1 + d * i3
    q0, q1, q2, q3 = frame_matrix(fkind, fp, x2, y2)
    return q0 * m0 + q1 * m2, q0 * m1 + q1 * m3, q2 * m0 + q3 * m2, q2 * m1 + q3 * m3


@njit(**_jit)
def cocycle(codes, params, starts, fkind, fp, g, x, y):
    x2, y2, a, b, c, d = gen_step(codes, params, starts, g, x, y)
    a, b, c, d = frame_conj(fkind, fp, x, y, x2, y2, a, b, c, d)
    return x2, y2, a, b, c, d


@njit(**_jit)
def proj_act_k(a, b, c, d, t):
    u = math.cos(t)
    v = math.sin(t)
    return wrap_pi(math.atan2(c * u + d * v, a * u + b * v))


@njit(**_jit)
def _renorm(m0, m1, m2, m3, detm, q0, q1, q2, q3):
    """QR step for V = M Q with the second diagonal entry from |det V|.

    Returns (new Q entries, r11, r12, r22).
    """
    v0 = m0 * q0 + m1 * q2
    v1 = m0 * q1 + m1 * q3
    v2 = m2 * q0 + m3 * q2
    v3 = m2 * q1 + m3 * q3
    r11 = math.hypot(v0, v2)
    e0 = v0 / r11
    e1 = v2 / r11
    r12 = e0 * v1 + e1 * v3
    detv = detm * (q0 * q3 - q1 * q2)
    r22 = abs(detv) / r11
    sg = 1.0 if detv >= 0.0 else -1.0
    return e0, -sg * e1, e1, sg * e0, r11, r12, r22


@njit(**_jit)
def qr_trajectory(codes, params, starts, fkind, fp, word, x, y, stride, burn, out):
    """Run the cocycle along ``word`` with QR renormalization every ``stride`` steps.

    ``out`` receives [x, y, q00, q01, q10, q11, log_r1, log_r2, offdiag_ratio, steps].
    Log sums restart after the first ``burn`` steps. Returns 0, or 1 when an
    intermediate product exceeded OVERFLOW.
    """
    n = word.shape[0]
    q0, q1, q2, q3 = 1.0, 0.0, 0.0, 1.0
    l1 = 0.0
    l2 = 0.0
    u = 0.0
    m0, m1, m2, m3 = 1.0, 0.0, 0.0, 1.0
    detm = 1.0
    cnt = 0
    for j in range(n):
        x, y, a, b, c, d = cocycle(codes, params, starts, fkind, fp, word[j], x, y)
        m0, m1, m2, m3 = a * m0 + b * m2, a * m1 + b * m3, c * m0 + d * m2, c * m1 + d * m3
        detm *= a * d - b * c
        cnt += 1
        big = max(max(abs(m0), abs(m1)), max(abs(m2), abs(m3)))
        if not big < OVERFLOW:
            return 1
        if cnt == stride or j == n - 1 or j == burn - 1:
            q0, q1, q2, q3, r11, r12, r22 = _renorm(m0, m1, m2, m3, detm, q0, q1, q2, q3)
            dl = l2 - l1
            if dl > 700.0:
                dl = 700.0
            u = u + (r12 / r11) * math.exp(dl)
            l1 += math.log(r11)
            l2 += math.log(r22)
            m0, m1, m2, m3 = 1.0, 0.0, 0.0, 1.0
            detm = 1.0
            cnt = 0
            if j == burn - 1:
                l1 = 0.0
                l2 = 0.0
                u = 0.0
    out[0] = x
    out[1] = y
    out[2] = q0
    out[3] = q1
    out[4] = q2
    out[5] = q3
    out[6] = l1
    out[7] = l2
    out[8] = u
    out[9] = n - burn if 0 < burn < n else n
    return 0


@njit(**_jit)
def _logaddexp_signed(la, sa, lb, sb):
    """log|sa e^la + sb e^lb| and its sign; -inf encodes zero."""
    if la == -np.inf:
        return lb, sb
    if lb == -np.inf:
        return la, sa
    if la >= lb:
        hi, shi, lo, slo = la, sa, lb, sb
    else:
        hi, shi, lo, slo = lb, sb, la, sa
    t = 1.0 + shi * slo * math.exp(lo - hi)
    if t == 0.0:
        return -np.inf, 1.0
    return hi + math.log(abs(t)), shi * (1.0 if t > 0.0 else -1.0)


@njit(**_jit)
def _log_norm_upper(l1, l12, l2):
    """log of the operator norm of [[e^l1, +-e^l12], [0, e^l2]]."""
    top = max(l1, max(l12, l2))
    a = math.exp(l1 - top)
    b = math.exp(l12 - top) if l12 > -np.inf else 0.0
    c = math.exp(l2 - top)
    fro = a * a + b * b + c * c
    det = a * c
    disc = fro * fro - 4.0 * det * det
    if disc < 0.0:
        disc = 0.0
    return top + 0.5 * math.log(0.5 * (fro + math.sqrt(disc)))


@njit(**_jit)
def lognorm_trajectory(codes, params, starts, fkind, fp, word, x, y, out):
    """out[j] = log ||A^j|| for j = 0..len(word) (A^0 = Id), in overflow-free log form."""
    q0, q1, q2, q3 = 1.0, 0.0, 0.0, 1.0
    l1 = 0.0
    l2 = 0.0
    l12 = -np.inf
    s12 = 1.0
    out[0] = 0.0
    for j in range(word.shape[0]):
        x, y, a, b, c, d = cocycle(codes, params, starts, fkind, fp, word[j], x, y)
        q0, q1, q2, q3, r11, r12, r22 = _renorm(a, b, c, d, a * d - b * c, q0, q1, q2, q3)
        lr11 = math.log(r11)
        # new r12 = r'11 r12 + r'12 r22
        if r12 == 0.0:
            l12, s12 = _logaddexp_signed(lr11 + l12, s12, -np.inf, 1.0)
        else:
            l12, s12 = _logaddexp_signed(lr11 + l12, s12, math.log(abs(r12)) + l2,
                                         1.0 if r12 > 0.0 else -1.0)
        l1 += lr11
        l2 += math.log(r22)
        out[j + 1] = _log_norm_upper(l1, l12, l2)


@njit(**_jit)
def record_orbit(codes, params, starts, fkind, fp, word, x, y, xs, js):
    """xs[j] = x_j for j = 0..n, js[j] = J_{word[j]}(x_j)."""
    xs[0, 0] = x
    xs[0, 1] = y
    for j in range(word.shape[0]):
        x, y, a, b, c, d = cocycle(codes, params, starts, fkind, fp, word[j], x, y)
        xs[j + 1, 0] = x
        xs[j + 1, 1] = y
        js[j, 0] = a
        js[j, 1] = b
        js[j, 2] = c
        js[j, 3] = d


@njit(**_jit)
def push_forward_angles(js, theta, out):
    """out[j] = angle after applying js[0..j-1] to theta (out has len(js)+1 entries)."""
    out[0] = theta
    for j in range(js.shape[0]):
        theta = proj_act_k(js[j, 0], js[j, 1], js[j, 2], js[j, 3], theta)
        out[j + 1] = theta


@njit(**_jit)
def pull_back_angles(js, theta, out):
    """Backward iteration with inverse matrices: out[n] = theta, out[j] = J_j^-1 out[j+1]."""
    n = js.shape[0]
    out[n] = theta
    for j in range(n - 1, -1, -1):
        a, b, c, d = js[j, 0], js[j, 1], js[j, 2], js[j, 3]
        theta = proj_act_k(d, -b, -c, a, theta)
        out[j] = theta


@njit(**_jit)
def window_directions(js, lo, hi, m, theta, U, V):
    """Per-point directions from finite windows.

    U[j - lo] pushes theta through js[j-m:j]; V[j - lo] pulls theta back
    through js[j:j+m]. Needs m <= lo and hi + m <= len(js).
    """
    for j in range(lo, hi + 1):
        t = theta
        for i in range(j - m, j):
            t = proj_act_k(js[i, 0], js[i, 1], js[i, 2], js[i, 3], t)
        U[j - lo] = t
        t = theta
        for i in range(j + m - 1, j - 1, -1):
            a, b, c, d = js[i, 0], js[i, 1], js[i, 2], js[i, 3]
            t = proj_act_k(d, -b, -c, a, t)
        V[j - lo] = t


@njit(**_jit)
def cell_index(x, y, nx, ny):
    ix = int(x * nx)
    iy = int(y * ny)
    if ix >= nx:
        ix = nx - 1
    if iy >= ny:
        iy = ny - 1
    return ix * ny + iy


@njit(**_jit)
def bin_index(t, nb):
    # bins are centred on multiples of pi/nb
    b = int(math.floor(t * nb / math.pi + 0.5))
    return b % nb


@njit(**_jit)
def cesaro_particle(codes, params, starts, fkind, fp, word, x, y, theta, nx, ny, nb, counts):
    """Deposit the time-averaged occupation of the projective skew product into counts."""
    for j in range(word.shape[0]):
        counts[cell_index(x, y, nx, ny), bin_index(theta, nb)] += 1
        x2, y2, a, b, c, d = cocycle(codes, params, starts, fkind, fp, word[j], x, y)
        theta = proj_act_k(a, b, c, d, theta)
        x = x2
        y = y2


@njit(**_jit)
def _deposit_arc(out, c2, lo, length, mass):
    """Spread ``mass`` uniformly over [lo, lo + length) (bin units, circular)."""
    nb = out.shape[1]
    pos = lo
    left = length
    for _ in range(nb + 2):
        if left <= 0.0:
            break
        k = math.floor(pos)
        seg = min(k + 1.0 - pos, left)
        if seg <= 0.0:
            seg = min(1.0, left)
        out[c2, int(k) % nb] += mass * seg / length
        pos += seg
        left -= seg


@njit(**_jit)
def push_measure(codes, params, starts, fkind, fp, g, weights, nx, ny, sub, out):
    """Transport gridded mass through (f_g, J_g).

    Each cell is represented by sub x sub interior nodes; the mass of a bin is
    taken uniform on the bin and re-deposited by overlap of its image arc, so
    an image narrower than one bin splits between the two nearest bins.
    """
    ncell, nb = weights.shape
    w = math.pi / nb
    share = 1.0 / (sub * sub)
    img = np.empty(nb + 1)
    for cell in range(ncell):
        ix = cell // ny
        iy = cell % ny
        for sx in range(sub):
            for sy in range(sub):
                x = (ix + (sx + 0.5) / sub) / nx
                y = (iy + (sy + 0.5) / sub) / ny
                x2, y2, a, b, c, d = cocycle(codes, params, starts, fkind, fp, g, x, y)
                c2 = cell_index(x2, y2, nx, ny)
                flip = a * d - b * c < 0.0
                for k in range(nb + 1):
                    img[k] = proj_act_k(a, b, c, d, (k - 0.5) * w) / w + 0.5
                for k in range(nb):
                    m = weights[cell, k]
                    if m == 0.0:
                        continue
                    lo, hi = (img[k + 1], img[k]) if flip else (img[k], img[k + 1])
                    length = hi - lo
                    if length <= 0.0:
                        length += nb
                    _deposit_arc(out, c2, lo, length, m * share)


@njit(**_jit)
def pair_cesaro_hist(mats, word, theta, nb, h, ha, hb):
    """Cesaro samples of the random walk on two matrices, binned with their images."""
    for j in range(word.shape[0]):
        h[bin_index(theta, nb)] += 1
        ha[bin_index(proj_act_k(mats[0, 0], mats[0, 1], mats[0, 2], mats[0, 3], theta), nb)] += 1
        hb[bin_index(proj_act_k(mats[1, 0], mats[1, 1], mats[1, 2], mats[1, 3], theta), nb)] += 1
        s = word[j]
        theta = proj_act_k(mats[s, 0], mats[s, 1], mats[s, 2], mats[s, 3], theta)


@njit(**_jit)
def window_scan(cond, wb, min_atom, best, loc, pair, loc2):
    """Circular sliding windows of ``wb`` bins over each row of ``cond``.

    best[c] / loc[c]: heaviest window and its start. pair[c] / loc2[c]: heaviest
    total of two disjoint windows each holding >= min_atom, with loc2[c] the
    start of the lighter one (pair[c] = 0 when no such pair exists).
    """
    ncell, nb = cond.shape
    w = np.empty(nb)
    for c in range(ncell):
        s = 0.0
        for k in range(wb):
            s += cond[c, k % nb]
        for i in range(nb):
            w[i] = s
            s += cond[c, (i + wb) % nb] - cond[c, i]
        bi = 0
        for i in range(1, nb):
            if w[i] > w[bi]:
                bi = i
        best[c] = w[bi]
        loc[c] = bi
        top = -1.0
        ti = bi
        tj = bi
        if nb >= 2 * wb:
            for i in range(nb):
                for j in range(i + wb, nb):
                    if j + wb - nb > i or w[i] < min_atom or w[j] < min_atom:
                        continue
                    v = w[i] + w[j]
                    if v > top:
                        top = v
                        ti = i
                        tj = j
        pair[c] = top if top >= 0.0 else 0.0
        light = tj if w[tj] <= w[ti] else ti
        loc2[c] = light
