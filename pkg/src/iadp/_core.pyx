# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels. Signatures mirror ``_pykernels``."""
from libc.math cimport sin, cos, sqrt, fabs, NAN

NAME = "cython"

cdef enum:
    MAXD = 16

cdef double COND_LIMIT = 1e12


cdef void _mass_bias(const double[::1] q, const double[::1] qd, const double[::1] lengths,
                     const long long[::1] blink, const double[::1] bmass, const double[::1] bcom,
                     const double[::1] binertia, const double[::1] armature, double gravity,
                     double* M, double* N, Py_ssize_t n) noexcept nogil:
    cdef double c[MAXD]
    cdef double s[MAXD]
    cdef double w2[MAXD]
    cdef double lever[MAXD]
    cdef double Jx[MAXD]
    cdef double Jy[MAXD]
    cdef double th = 0.0, thd = 0.0, m, abx, aby, accx, accy
    cdef Py_ssize_t i, k, b, j
    for i in range(n):
        th += q[i]
        thd += qd[i]
        c[i] = cos(th)
        s[i] = sin(th)
        w2[i] = thd * thd
        N[i] = 0.0
        for k in range(n):
            M[i * n + k] = 0.0
        M[i * n + i] = armature[i]
    for b in range(blink.shape[0]):
        j = <Py_ssize_t> blink[b]
        m = bmass[b]
        for k in range(n):
            if k < j:
                lever[k] = lengths[k]
            elif k == j:
                lever[k] = bcom[b]
            else:
                lever[k] = 0.0
        accx = 0.0
        accy = 0.0
        abx = 0.0
        aby = gravity
        for k in range(n - 1, -1, -1):
            accx -= lever[k] * s[k]
            accy += lever[k] * c[k]
            Jx[k] = accx
            Jy[k] = accy
            abx -= lever[k] * c[k] * w2[k]
            aby -= lever[k] * s[k] * w2[k]
        for i in range(j + 1):
            N[i] += m * (Jx[i] * abx + Jy[i] * aby)
            for k in range(j + 1):
                M[i * n + k] += m * (Jx[i] * Jx[k] + Jy[i] * Jy[k]) + binertia[b]


cdef int _jacobi_eigvals(double* a, Py_ssize_t d, double* ev) noexcept nogil:
    """Cyclic Jacobi on a symmetric d x d matrix (destroyed). Eigenvalues ascending."""
    cdef Py_ssize_t p, r, k, sweep
    cdef double off, theta, t, cs, sn, tau, apr, akp, akr, tmp, scale
    for sweep in range(60):
        off = 0.0
        scale = 0.0
        for p in range(d):
            scale += a[p * d + p] * a[p * d + p]
            for r in range(p + 1, d):
                off += a[p * d + r] * a[p * d + r]
        if off <= 1e-32 * scale or off == 0.0:
            break
        for p in range(d):
            for r in range(p + 1, d):
                apr = a[p * d + r]
                if apr == 0.0:
                    continue
                theta = (a[r * d + r] - a[p * d + p]) / (2.0 * apr)
                t = 1.0 / (fabs(theta) + sqrt(theta * theta + 1.0))
                if theta < 0.0:
                    t = -t
                cs = 1.0 / sqrt(t * t + 1.0)
                sn = t * cs
                tau = sn / (1.0 + cs)
                a[p * d + p] -= t * apr
                a[r * d + r] += t * apr
                a[p * d + r] = 0.0
                a[r * d + p] = 0.0
                for k in range(d):
                    if k == p or k == r:
                        continue
                    akp = a[k * d + p]
                    akr = a[k * d + r]
                    a[k * d + p] = akp - sn * (akr + tau * akp)
                    a[p * d + k] = a[k * d + p]
                    a[k * d + r] = akr + sn * (akp - tau * akr)
                    a[r * d + k] = a[k * d + r]
    for p in range(d):
        ev[p] = a[p * d + p]
    # insertion sort, d is tiny
    for p in range(1, d):
        tmp = ev[p]
        k = p - 1
        while k >= 0 and ev[k] > tmp:
            ev[k + 1] = ev[k]
            k -= 1
        ev[k + 1] = tmp
    return 0


def sym_eigvals(double[:, ::1] A):
    cdef Py_ssize_t d = A.shape[0], i, k
    cdef double a[MAXD * MAXD]
    cdef double ev[MAXD]
    if d > MAXD:
        raise ValueError("matrix too large for compiled kernel")
    for i in range(d):
        for k in range(d):
            a[i * d + k] = A[i, k]
    _jacobi_eigvals(a, d, ev)
    return [ev[i] for i in range(d)]


def chain_mass_bias(const double[::1] q, const double[::1] qd, const double[::1] lengths,
                    const long long[::1] blink, const double[::1] bmass, const double[::1] bcom,
                    const double[::1] binertia, const double[::1] armature, double gravity,
                    double[:, ::1] M, double[::1] N):
    cdef Py_ssize_t n = q.shape[0]
    if n > MAXD:
        raise ValueError("chain too long for compiled kernel")
    _mass_bias(q, qd, lengths, blink, bmass, bcom, binertia, armature, gravity, &M[0, 0], &N[0], n)


cdef int _solve_spd(double* M, double* rhs, double* out, Py_ssize_t n) noexcept nogil:
    cdef double a[MAXD * MAXD]
    cdef double ev[MAXD]
    cdef double L[MAXD * MAXD]
    cdef double y[MAXD]
    cdef double acc
    cdef Py_ssize_t i, k, p
    for i in range(n * n):
        a[i] = M[i]
    _jacobi_eigvals(a, n, ev)
    if not (ev[0] > 0.0) or ev[n - 1] / ev[0] > COND_LIMIT:
        for i in range(n):
            out[i] = NAN
        return 1
    for i in range(n):
        for k in range(i + 1):
            acc = M[i * n + k]
            for p in range(k):
                acc -= L[i * n + p] * L[k * n + p]
            if i == k:
                if acc <= 0.0:
                    for p in range(n):
                        out[p] = NAN
                    return 1
                L[i * n + i] = sqrt(acc)
            else:
                L[i * n + k] = acc / L[k * n + k]
    for i in range(n):
        acc = rhs[i]
        for p in range(i):
            acc -= L[i * n + p] * y[p]
        y[i] = acc / L[i * n + i]
    for i in range(n - 1, -1, -1):
        acc = y[i]
        for p in range(i + 1, n):
            acc -= L[p * n + i] * out[p]
        out[i] = acc / L[i * n + i]
    return 0


def solve_spd(double[:, ::1] M, const double[::1] rhs, double[::1] out):
    cdef Py_ssize_t n = M.shape[0]
    cdef double r[MAXD]
    cdef Py_ssize_t i
    if n > MAXD:
        raise ValueError("matrix too large for compiled kernel")
    for i in range(n):
        r[i] = rhs[i]
    return _solve_spd(&M[0, 0], r, &out[0], n)


def chain_accel(const double[::1] q, const double[::1] qd, const double[::1] tau,
                const double[::1] lengths, const long long[::1] blink, const double[::1] bmass,
                const double[::1] bcom, const double[::1] binertia, const double[::1] armature,
                double gravity, const double[::1] viscous, double[::1] out):
    cdef Py_ssize_t n = q.shape[0], i
    cdef double M[MAXD * MAXD]
    cdef double N[MAXD]
    cdef double rhs[MAXD]
    if n > MAXD:
        raise ValueError("chain too long for compiled kernel")
    _mass_bias(q, qd, lengths, blink, bmass, bcom, binertia, armature, gravity, M, N, n)
    for i in range(n):
        rhs[i] = tau[i] - N[i] - viscous[i] * qd[i]
    return _solve_spd(M, rhs, &out[0], n)


def critic_update(const double[::1] W, const double[:, ::1] Gamma, double kt, double ke,
                  const double[::1] Y, double theta, const double[:, ::1] bufY,
                  const double[::1] bufTheta, Py_ssize_t count, double dt, double[::1] out):
    cdef Py_ssize_t n = W.shape[0], i, k, l
    cdef double g[MAXD]
    cdef double res, acc
    if n > MAXD:
        raise ValueError("feature vector too long for compiled kernel")
    res = theta
    for i in range(n):
        res += W[i] * Y[i]
    for i in range(n):
        g[i] = kt * Y[i] * res
    for l in range(count):
        res = bufTheta[l]
        for i in range(n):
            res += bufY[l, i] * W[i]
        for i in range(n):
            g[i] += ke * bufY[l, i] * res
    for i in range(n):
        acc = 0.0
        for k in range(n):
            acc += Gamma[i, k] * g[k]
        out[i] = W[i] - dt * acc


cdef double _gram_min(const double[:, ::1] B, Py_ssize_t count, Py_ssize_t skip,
                      const double[::1] y) noexcept nogil:
    # smallest eigenvalue of the smaller Gram matrix of B[:count] with row `skip` replaced by y
    cdef Py_ssize_t n = B.shape[1], i, k, l
    cdef double a[MAXD * MAXD]
    cdef double ev[MAXD]
    cdef double vi, vk, acc
    cdef Py_ssize_t d
    if count >= n:
        d = n
        for i in range(n * n):
            a[i] = 0.0
        for l in range(count):
            for i in range(n):
                vi = y[i] if l == skip else B[l, i]
                for k in range(i, n):
                    vk = y[k] if l == skip else B[l, k]
                    a[i * n + k] += vi * vk
        for i in range(n):
            for k in range(i):
                a[i * n + k] = a[k * n + i]
    else:
        d = count
        for i in range(count):
            for k in range(i, count):
                acc = 0.0
                for l in range(n):
                    vi = y[l] if i == skip else B[i, l]
                    vk = y[l] if k == skip else B[k, l]
                    acc += vi * vk
                a[i * d + k] = acc
                a[k * d + i] = acc
    _jacobi_eigvals(a, d, ev)
    return ev[0] if ev[0] > 0.0 else 0.0


def best_replacement(const double[:, ::1] bufY, Py_ssize_t count, const double[::1] y):
    cdef Py_ssize_t l, best = 0
    cdef double score, top = -1.0, current
    if bufY.shape[1] > MAXD:
        raise ValueError("buffer too large for compiled kernel")
    current = _gram_min(bufY, count, -1, y)
    for l in range(count):
        score = _gram_min(bufY, count, l, y)
        if score > top:
            top = score
            best = l
    return best, top, current
