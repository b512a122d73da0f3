# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled versions of the hot kernels; see ref.py for the contract."""

import numpy as np

cimport numpy as cnp
from libc.math cimport cos, sin, exp, sqrt, erf, fabs, floor, hypot

cnp.import_array()

cdef double INV_SQRT2 = 0.7071067811865476
cdef double INV_SQRT2PI = 0.3989422804014327


def sdpa_forward(double[:, :, :] q, double[:, :, :] k, double[:, :, :] v, double scale):
    cdef Py_ssize_t H = q.shape[0], Nq = q.shape[1], dh = q.shape[2], Nk = k.shape[1]
    out_arr = np.zeros((H, Nq, dh), dtype=np.float64)
    attn_arr = np.empty((H, Nq, Nk), dtype=np.float64)
    cdef double[:, :, ::1] out = out_arr
    cdef double[:, :, ::1] attn = attn_arr
    cdef Py_ssize_t h, i, j, d
    cdef double s, m, z
    for h in range(H):
        for i in range(Nq):
            m = -1e300
            for j in range(Nk):
                s = 0.0
                for d in range(dh):
                    s += q[h, i, d] * k[h, j, d]
                s *= scale
                attn[h, i, j] = s
                if s > m:
                    m = s
            z = 0.0
            for j in range(Nk):
                s = exp(attn[h, i, j] - m)
                attn[h, i, j] = s
                z += s
            for j in range(Nk):
                attn[h, i, j] /= z
            for j in range(Nk):
                s = attn[h, i, j]
                for d in range(dh):
                    out[h, i, d] += s * v[h, j, d]
    return out_arr, attn_arr


def sdpa_backward(double[:, :, :] q, double[:, :, :] k, double[:, :, :] v,
                  double[:, :, ::1] attn, double scale, double[:, :, :] d_out):
    cdef Py_ssize_t H = q.shape[0], Nq = q.shape[1], dh = q.shape[2], Nk = k.shape[1]
    dq_arr = np.zeros((H, Nq, dh), dtype=np.float64)
    dk_arr = np.zeros((H, Nk, dh), dtype=np.float64)
    dv_arr = np.zeros((H, Nk, dh), dtype=np.float64)
    da_arr = np.empty(Nk, dtype=np.float64)
    cdef double[:, :, ::1] dq = dq_arr
    cdef double[:, :, ::1] dk = dk_arr
    cdef double[:, :, ::1] dv = dv_arr
    cdef double[::1] da = da_arr
    cdef Py_ssize_t h, i, j, d
    cdef double acc, row_dot, ds
    for h in range(H):
        for i in range(Nq):
            row_dot = 0.0
            for j in range(Nk):
                acc = 0.0
                for d in range(dh):
                    acc += d_out[h, i, d] * v[h, j, d]
                da[j] = acc
                row_dot += acc * attn[h, i, j]
            for j in range(Nk):
                ds = scale * attn[h, i, j] * (da[j] - row_dot)
                for d in range(dh):
                    dq[h, i, d] += ds * k[h, j, d]
                    dk[h, j, d] += ds * q[h, i, d]
            for j in range(Nk):
                acc = attn[h, i, j]
                for d in range(dh):
                    dv[h, j, d] += acc * d_out[h, i, d]
    return dq_arr, dk_arr, dv_arr


def layer_norm_forward(double[:, ::1] x, double eps):
    cdef Py_ssize_t N = x.shape[0], D = x.shape[1]
    y_arr = np.empty((N, D), dtype=np.float64)
    rstd_arr = np.empty((N, 1), dtype=np.float64)
    cdef double[:, ::1] y = y_arr
    cdef double[:, ::1] rstd = rstd_arr
    cdef Py_ssize_t i, j
    cdef double mu, var, r, c
    for i in range(N):
        mu = 0.0
        for j in range(D):
            mu += x[i, j]
        mu /= D
        var = 0.0
        for j in range(D):
            c = x[i, j] - mu
            var += c * c
        var /= D
        r = 1.0 / sqrt(var + eps)
        rstd[i, 0] = r
        for j in range(D):
            y[i, j] = (x[i, j] - mu) * r
    return y_arr, rstd_arr


def layer_norm_backward(double[:, ::1] y, double[:, ::1] rstd, double[:, ::1] dy):
    cdef Py_ssize_t N = y.shape[0], D = y.shape[1]
    dx_arr = np.empty((N, D), dtype=np.float64)
    cdef double[:, ::1] dx = dx_arr
    cdef Py_ssize_t i, j
    cdef double m1, m2
    for i in range(N):
        m1 = 0.0
        m2 = 0.0
        for j in range(D):
            m1 += dy[i, j]
            m2 += dy[i, j] * y[i, j]
        m1 /= D
        m2 /= D
        for j in range(D):
            dx[i, j] = rstd[i, 0] * (dy[i, j] - m1 - y[i, j] * m2)
    return dx_arr


def gelu_forward(x):
    flat_arr = np.ascontiguousarray(x, dtype=np.float64).ravel()
    out_arr = np.empty_like(flat_arr)
    cdef double[::1] xv = flat_arr
    cdef double[::1] ov = out_arr
    cdef Py_ssize_t i, n = xv.shape[0]
    for i in range(n):
        ov[i] = 0.5 * xv[i] * (1.0 + erf(xv[i] * INV_SQRT2))
    return out_arr.reshape(np.shape(x))


def gelu_backward(x, dy):
    xf = np.ascontiguousarray(x, dtype=np.float64).ravel()
    df = np.ascontiguousarray(dy, dtype=np.float64).ravel()
    out_arr = np.empty_like(xf)
    cdef double[::1] xv = xf
    cdef double[::1] dv = df
    cdef double[::1] ov = out_arr
    cdef Py_ssize_t i, n = xv.shape[0]
    cdef double cdf, pdf
    for i in range(n):
        cdf = 0.5 * (1.0 + erf(xv[i] * INV_SQRT2))
        pdf = INV_SQRT2PI * exp(-0.5 * xv[i] * xv[i])
        ov[i] = dv[i] * (cdf + xv[i] * pdf)
    return out_arr.reshape(np.shape(x))


def obb_overlap_pairs(double[:, ::1] a, double[:, ::1] b):
    cdef Py_ssize_t n = a.shape[0]
    flags_arr = np.empty(n, dtype=np.uint8)
    margin_arr = np.empty(n, dtype=np.float64)
    cdef unsigned char[::1] flags = flags_arr
    cdef double[::1] margin = margin_arr
    cdef Py_ssize_t i, t
    cdef double dx, dy, uax, uay, vax, vay, ubx, uby, vbx, vby
    cdef double hal, haw, hbl, hbw, ax, ay, dist, ra, rb, gap, best
    for i in range(n):
        dx = b[i, 0] - a[i, 0]
        dy = b[i, 1] - a[i, 1]
        uax = cos(a[i, 2]); uay = sin(a[i, 2])
        vax = -uay; vay = uax
        ubx = cos(b[i, 2]); uby = sin(b[i, 2])
        vbx = -uby; vby = ubx
        hal = 0.5 * a[i, 3]; haw = 0.5 * a[i, 4]
        hbl = 0.5 * b[i, 3]; hbw = 0.5 * b[i, 4]
        best = -1e300
        for t in range(4):
            if t == 0:
                ax = uax; ay = uay
            elif t == 1:
                ax = vax; ay = vay
            elif t == 2:
                ax = ubx; ay = uby
            else:
                ax = vbx; ay = vby
            dist = fabs(dx * ax + dy * ay)
            ra = hal * fabs(uax * ax + uay * ay) + haw * fabs(vax * ax + vay * ay)
            rb = hbl * fabs(ubx * ax + uby * ay) + hbw * fabs(vbx * ax + vby * ay)
            gap = dist - ra - rb
            if gap > best:
                best = gap
        margin[i] = best
        flags[i] = 1 if best <= 0.0 else 0
    return flags_arr, margin_arr


def fill_oriented_boxes(double[:, ::1] grid, double[:, ::1] boxes, double[::1] values,
                        double x0, double y0, double cell_x, double cell_y, int accumulate):
    cdef Py_ssize_t h = grid.shape[0], w = grid.shape[1], n = boxes.shape[0]
    cdef Py_ssize_t bi, i, j, i0, i1, j0, j1
    cdef double cx, cy, heading, length, width, ch, sh, reach, px, py, lon, lat, val
    for bi in range(n):
        cx = boxes[bi, 0]; cy = boxes[bi, 1]; heading = boxes[bi, 2]
        length = boxes[bi, 3]; width = boxes[bi, 4]
        val = values[bi]
        ch = cos(heading); sh = sin(heading)
        reach = 0.5 * hypot(length, width)
        i0 = <Py_ssize_t>floor((cx - reach - x0) / cell_x)
        i1 = <Py_ssize_t>floor((cx + reach - x0) / cell_x)
        j0 = <Py_ssize_t>floor((cy - reach - y0) / cell_y)
        j1 = <Py_ssize_t>floor((cy + reach - y0) / cell_y)
        if i0 < 0: i0 = 0
        if j0 < 0: j0 = 0
        if i1 > h - 1: i1 = h - 1
        if j1 > w - 1: j1 = w - 1
        for i in range(i0, i1 + 1):
            px = x0 + (i + 0.5) * cell_x - cx
            for j in range(j0, j1 + 1):
                py = y0 + (j + 0.5) * cell_y - cy
                lon = px * ch + py * sh
                lat = -px * sh + py * ch
                if fabs(lon) <= 0.5 * length and fabs(lat) <= 0.5 * width:
                    if accumulate:
                        grid[i, j] += val
                    elif val > grid[i, j]:
                        grid[i, j] = val
    return np.asarray(grid)
