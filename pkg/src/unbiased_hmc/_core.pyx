# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels for diagonal Gaussian and Rosenbrock targets.

Every floating-point operation is written in the same order as the reference
implementation, sums use numpy's pairwise summation scheme and random draws
come from the same numpy bit generators, so results match bitwise.
"""

import numpy as np
cimport numpy as cnp
from cpython.pycapsule cimport PyCapsule_GetPointer
from libc.math cimport exp, log, sqrt, isfinite, INFINITY
from libc.stdlib cimport malloc, realloc, free
from libc.string cimport memcpy, memcmp
from numpy.random cimport bitgen_t
from numpy.random.c_distributions cimport random_standard_normal, random_standard_uniform

cnp.import_array()

cdef enum:
    GAUSSIAN_DIAG = 0
    ROSENBROCK = 1
    BLOCK = 8192
    MAX_COUPLING_TRIALS = 1000000


cdef struct Model:
    int kind
    Py_ssize_t d
    double *a   # mean for the Gaussian
    double *b   # precision diagonal for the Gaussian


cdef struct Work:
    double *tmp
    double *g
    double *p
    double *p1
    double *p2
    double *q1
    double *prop_x
    double *prop_y
    double *z


cdef struct Kernel:
    double eps
    Py_ssize_t L
    double sigma
    double gamma
    double kappa


# ---------------------------------------------------------------------------
# arithmetic helpers


cdef double _pairwise(const double *a, Py_ssize_t n) noexcept nogil:
    cdef double res, r0, r1, r2, r3, r4, r5, r6, r7
    cdef Py_ssize_t i, n2
    if n < 8:
        res = -0.0
        for i in range(n):
            res += a[i]
        return res
    if n <= 128:
        r0 = a[0]; r1 = a[1]; r2 = a[2]; r3 = a[3]
        r4 = a[4]; r5 = a[5]; r6 = a[6]; r7 = a[7]
        i = 8
        while i < n - (n % 8):
            r0 += a[i]; r1 += a[i + 1]; r2 += a[i + 2]; r3 += a[i + 3]
            r4 += a[i + 4]; r5 += a[i + 5]; r6 += a[i + 6]; r7 += a[i + 7]
            i += 8
        res = ((r0 + r1) + (r2 + r3)) + ((r4 + r5) + (r6 + r7))
        while i < n:
            res += a[i]
            i += 1
        return res
    n2 = n // 2
    n2 -= n2 % 8
    return _pairwise(a, n2) + _pairwise(a + n2, n - n2)


cdef double vec_sum(const double *a, Py_ssize_t n) noexcept nogil:
    # numpy reduces contiguous data in buffers of BLOCK elements
    cdef double res = -0.0
    cdef Py_ssize_t lo = 0, c
    while lo < n:
        c = n - lo
        if c > BLOCK:
            c = BLOCK
        res += _pairwise(a + lo, c)
        lo += c
    return res


cdef bint all_finite(const double *v, Py_ssize_t n) noexcept nogil:
    cdef Py_ssize_t i
    for i in range(n):
        if not isfinite(v[i]):
            return False
    return True


cdef double accept_prob(double lr) noexcept nogil:
    if not isfinite(lr):
        return 1.0 if lr == INFINITY else 0.0
    if lr < 0.0:
        return exp(lr)
    return exp(0.0)


# ---------------------------------------------------------------------------
# targets


cdef double potential(const Model *M, const double *q, double *tmp) noexcept nogil:
    cdef Py_ssize_t i
    cdef double r, a, b
    if M.kind == GAUSSIAN_DIAG:
        for i in range(M.d):
            r = q[i] - M.a[i]
            tmp[i] = r * r * M.b[i]
        return 0.5 * vec_sum(tmp, M.d)
    a = 1.0 - q[0]
    b = q[1] - q[0] * q[0]
    return a * a + 10.0 * b * b


cdef void gradient(const Model *M, const double *q, double *out) noexcept nogil:
    cdef Py_ssize_t i
    cdef double a, b
    if M.kind == GAUSSIAN_DIAG:
        for i in range(M.d):
            out[i] = (q[i] - M.a[i]) * M.b[i]
        return
    a = 1.0 - q[0]
    b = q[1] - q[0] * q[0]
    out[0] = -2.0 * a - 40.0 * q[0] * b
    out[1] = 20.0 * b


cdef double kinetic(const double *p, double *tmp, Py_ssize_t d) noexcept nogil:
    cdef Py_ssize_t i
    for i in range(d):
        tmp[i] = p[i] * p[i]
    return 0.5 * vec_sum(tmp, d)


cdef bint integrate(const Model *M, double *q, double *p, double eps, Py_ssize_t L,
                    Work *W) noexcept nogil:
    """In-place leap-frog; returns True when the trajectory diverged."""
    cdef Py_ssize_t i, step, d = M.d
    cdef double half = 0.5 * eps
    cdef double *g = W.g
    gradient(M, q, g)
    if not all_finite(g, d):
        return True
    for step in range(L):
        for i in range(d):
            p[i] = p[i] - half * g[i]
        for i in range(d):
            q[i] = q[i] + eps * p[i]
        gradient(M, q, g)
        if not (all_finite(q, d) and all_finite(g, d)):
            return True
        for i in range(d):
            p[i] = p[i] - half * g[i]
    return not all_finite(p, d)


cdef double hmc_proposal(const Model *M, const double *q, const double *p0, double eps,
                         Py_ssize_t L, double *prop, Work *W) noexcept nogil:
    cdef Py_ssize_t d = M.d
    cdef double e0, e1
    e0 = potential(M, q, W.tmp) + kinetic(p0, W.tmp, d)
    memcpy(prop, q, d * sizeof(double))
    memcpy(W.p, p0, d * sizeof(double))
    if integrate(M, prop, W.p, eps, L, W):
        return -INFINITY
    e1 = potential(M, prop, W.tmp) + kinetic(W.p, W.tmp, d)
    if not isfinite(e1):
        return -INFINITY
    return e0 - e1


cdef inline void fill_normals(bitgen_t *bg, double *out, Py_ssize_t d) noexcept nogil:
    cdef Py_ssize_t i
    for i in range(d):
        out[i] = random_standard_normal(bg)


# ---------------------------------------------------------------------------
# marginal kernels


cdef void rwmh_step(bitgen_t *bg, const Model *M, double *q, double sigma, Work *W) noexcept nogil:
    cdef Py_ssize_t i, d = M.d
    cdef double uq, up, lr, u
    fill_normals(bg, W.z, d)
    for i in range(d):
        W.prop_x[i] = q[i] + sigma * W.z[i]
    uq = potential(M, q, W.tmp)
    up = potential(M, W.prop_x, W.tmp)
    lr = uq - up if isfinite(up) else -INFINITY
    u = random_standard_uniform(bg)
    if u < accept_prob(lr):
        memcpy(q, W.prop_x, d * sizeof(double))


cdef void hmc_step(bitgen_t *bg, const Model *M, double *q, const Kernel *K, Work *W) noexcept nogil:
    cdef double lr, u
    fill_normals(bg, W.p1, M.d)
    lr = hmc_proposal(M, q, W.p1, K.eps, K.L, W.prop_x, W)
    u = random_standard_uniform(bg)
    if u < accept_prob(lr):
        memcpy(q, W.prop_x, M.d * sizeof(double))


cdef void mixture_step(bitgen_t *bg, const Model *M, double *q, const Kernel *K, Work *W) noexcept nogil:
    if random_standard_uniform(bg) < K.gamma:
        rwmh_step(bg, M, q, K.sigma, W)
    else:
        hmc_step(bg, M, q, K, W)


# ---------------------------------------------------------------------------
# coupled kernels


cdef double gauss_log_density(const double *v, const double *mean, double s2, Py_ssize_t d,
                              double *tmp) noexcept nogil:
    cdef Py_ssize_t i
    cdef double r
    for i in range(d):
        r = v[i] - mean[i]
        tmp[i] = r * r
    return -0.5 * vec_sum(tmp, d) / s2


cdef int max_coupling(bitgen_t *aux, const double *x_star, const double *mean_x,
                      const double *mean_y, double sigma, double *y_star, Py_ssize_t d,
                      double *tmp) noexcept nogil:
    """Fill ``y_star``; returns 1 when it equals ``x_star``, 0 otherwise, -1 on overflow."""
    cdef double s2 = sigma * sigma
    cdef double w, lx, ly
    cdef Py_ssize_t i, trial
    w = random_standard_uniform(aux)
    lx = gauss_log_density(x_star, mean_x, s2, d, tmp)
    ly = gauss_log_density(x_star, mean_y, s2, d, tmp)
    if w == 0.0 or log(w) + lx <= ly:
        memcpy(y_star, x_star, d * sizeof(double))
        return 1
    for trial in range(MAX_COUPLING_TRIALS):
        for i in range(d):
            y_star[i] = mean_y[i] + sigma * random_standard_normal(aux)
        w = random_standard_uniform(aux)
        if w > 0.0 and (log(w) + gauss_log_density(y_star, mean_y, s2, d, tmp)
                        > gauss_log_density(y_star, mean_x, s2, d, tmp)):
            return 0
    return -1


cdef int coupled_rwmh(bitgen_t *bg, bitgen_t *aux, const Model *M, double *x, double *y,
                      double sigma, Work *W) noexcept nogil:
    cdef Py_ssize_t i, d = M.d
    cdef double u, lr_x, lr_y, up
    cdef int rc
    fill_normals(bg, W.z, d)
    for i in range(d):
        W.prop_x[i] = x[i] + sigma * W.z[i]
    rc = max_coupling(aux, W.prop_x, x, y, sigma, W.prop_y, d, W.tmp)
    if rc < 0:
        return rc
    u = random_standard_uniform(bg)
    up = potential(M, W.prop_x, W.tmp)
    lr_x = potential(M, x, W.tmp) - up if isfinite(up) else -INFINITY
    up = potential(M, W.prop_y, W.tmp)
    lr_y = potential(M, y, W.tmp) - up if isfinite(up) else -INFINITY
    if u < accept_prob(lr_x):
        memcpy(x, W.prop_x, d * sizeof(double))
    if u < accept_prob(lr_y):
        memcpy(y, W.prop_y, d * sizeof(double))
    return 0


cdef void coupled_momentum(bitgen_t *aux, const double *p1, const double *x, const double *y,
                           double kappa, double *p2, Py_ssize_t d, Work *W) noexcept nogil:
    cdef Py_ssize_t i
    cdef double norm, s, t, lr
    cdef double *delta = W.q1
    cdef double *dbar = W.prop_y   # free until the second proposal is built
    memcpy(p2, p1, d * sizeof(double))
    if kappa == 0.0:
        return
    for i in range(d):
        delta[i] = x[i] - y[i]
    for i in range(d):
        W.tmp[i] = delta[i] * delta[i]
    norm = sqrt(vec_sum(W.tmp, d))
    if norm == 0.0:
        return
    for i in range(d):
        dbar[i] = delta[i] / norm
    for i in range(d):
        W.tmp[i] = dbar[i] * p1[i]
    s = vec_sum(W.tmp, d)
    t = s + kappa * norm
    lr = 0.5 * s * s - 0.5 * t * t
    if random_standard_uniform(aux) < accept_prob(lr):
        for i in range(d):
            p2[i] = p1[i] + kappa * delta[i]
    else:
        for i in range(d):
            p2[i] = p1[i] - (2.0 * s) * dbar[i]


cdef void coupled_hmc(bitgen_t *bg, bitgen_t *aux, const Model *M, double *x, double *y,
                      const Kernel *K, Work *W) noexcept nogil:
    cdef Py_ssize_t d = M.d
    cdef double u, lr_x, lr_y
    fill_normals(bg, W.p1, d)
    coupled_momentum(aux, W.p1, x, y, K.kappa, W.p2, d, W)
    u = random_standard_uniform(bg)
    lr_x = hmc_proposal(M, x, W.p1, K.eps, K.L, W.prop_x, W)
    lr_y = hmc_proposal(M, y, W.p2, K.eps, K.L, W.prop_y, W)
    if u < accept_prob(lr_x):
        memcpy(x, W.prop_x, d * sizeof(double))
    if u < accept_prob(lr_y):
        memcpy(y, W.prop_y, d * sizeof(double))


cdef int coupled_mixture(bitgen_t *bg, bitgen_t *aux, const Model *M, double *x, double *y,
                         const Kernel *K, Work *W) noexcept nogil:
    """Returns 1 when the pair met, 0 otherwise, -1 on a coupling overflow."""
    cdef int rc = 0
    if random_standard_uniform(bg) < K.gamma:
        rc = coupled_rwmh(bg, aux, M, x, y, K.sigma, W)
    else:
        coupled_hmc(bg, aux, M, x, y, K, W)
    if rc < 0:
        return rc
    return 1 if memcmp(x, y, M.d * sizeof(double)) == 0 else 0


# ---------------------------------------------------------------------------
# growable row buffers


cdef struct Rows:
    double *data
    Py_ssize_t n
    Py_ssize_t cap
    Py_ssize_t width


cdef int rows_push_moments(Rows *R, const double *x, Py_ssize_t d) noexcept nogil:
    cdef Py_ssize_t i, newcap
    cdef double *nd
    cdef double *row
    if R.n == R.cap:
        newcap = R.cap * 2 if R.cap > 0 else 64
        nd = <double *> realloc(R.data, newcap * R.width * sizeof(double))
        if nd == NULL:
            return -1
        R.data = nd
        R.cap = newcap
    row = R.data + R.n * R.width
    for i in range(d):
        row[i] = x[i]
        row[d + i] = x[i] * x[i]
    R.n += 1
    return 0


cdef object rows_to_array(Rows *R):
    cdef cnp.ndarray[cnp.float64_t, ndim=2] out = np.empty((R.n, R.width), dtype=np.float64)
    if R.n:
        memcpy(<void *> out.data, R.data, R.n * R.width * sizeof(double))
    return out


# ---------------------------------------------------------------------------
# Python entry points


cdef bitgen_t *_bitgen(object gen) except NULL:
    capsule = gen.bit_generator.capsule
    return <bitgen_t *> PyCapsule_GetPointer(capsule, "BitGenerator")


cdef double *_alloc(Py_ssize_t n) except NULL:
    cdef double *p = <double *> malloc((n if n > 0 else 1) * sizeof(double))
    if p == NULL:
        raise MemoryError()
    return p


cdef class _Scratch:
    cdef Work w
    cdef Py_ssize_t d

    def __cinit__(self, Py_ssize_t d):
        self.d = d
        self.w.tmp = _alloc(d)
        self.w.g = _alloc(d)
        self.w.p = _alloc(d)
        self.w.p1 = _alloc(d)
        self.w.p2 = _alloc(d)
        self.w.q1 = _alloc(d)
        self.w.prop_x = _alloc(d)
        self.w.prop_y = _alloc(d)
        self.w.z = _alloc(d)

    def __dealloc__(self):
        free(self.w.tmp); free(self.w.g); free(self.w.p); free(self.w.p1)
        free(self.w.p2); free(self.w.q1); free(self.w.prop_x); free(self.w.prop_y)
        free(self.w.z)


cdef Model _model(int kind, double[::1] a, double[::1] b, Py_ssize_t d) except *:
    cdef Model M
    if kind == GAUSSIAN_DIAG:
        if a.shape[0] != d or b.shape[0] != d:
            raise ValueError("Gaussian parameters must match the state dimension")
    elif kind == ROSENBROCK:
        if d != 2:
            raise ValueError("Rosenbrock target is two-dimensional")
    else:
        raise ValueError(f"unknown native target kind {kind}")
    M.kind = kind
    M.d = d
    M.a = &a[0]
    M.b = &b[0]
    return M


def leapfrog(int kind, double[::1] a, double[::1] b, double[::1] q, double[::1] p,
             double eps, Py_ssize_t L):
    """Leap-frog integration; returns ``(q, p, divergent)`` as new arrays."""
    cdef Py_ssize_t d = q.shape[0]
    cdef Model M = _model(kind, a, b, d)
    cdef _Scratch S = _Scratch(d)
    qo = np.array(q, dtype=np.float64)
    po = np.array(p, dtype=np.float64)
    cdef double[::1] qv = qo
    cdef double[::1] pv = po
    cdef bint div
    with nogil:
        div = integrate(&M, &qv[0], &pv[0], eps, L, &S.w)
    return qo, po, bool(div)


def potential_value(int kind, double[::1] a, double[::1] b, double[::1] q):
    """Potential energy at ``q``, using the same summation as the kernels."""
    cdef Py_ssize_t d = q.shape[0]
    cdef Model M = _model(kind, a, b, d)
    cdef _Scratch S = _Scratch(d)
    return potential(&M, &q[0], S.w.tmp)


def run_chain(gen, int kind, double[::1] a, double[::1] b, double[::1] x0,
              double eps, Py_ssize_t L, double sigma, double gamma, Py_ssize_t n):
    """Marginal mixture chain from ``x0``; returns the ``(n + 1, d)`` states."""
    cdef Py_ssize_t d = x0.shape[0], it
    cdef Model M = _model(kind, a, b, d)
    cdef _Scratch S = _Scratch(d)
    cdef Kernel K
    K.eps = eps; K.L = L; K.sigma = sigma; K.gamma = gamma; K.kappa = 0.0
    out = np.empty((n + 1, d), dtype=np.float64)
    cdef double[:, ::1] ov = out
    cdef bitgen_t *bg = _bitgen(gen)
    ov[0, :] = x0
    with gen.bit_generator.lock:
        with nogil:
            for it in range(n):
                memcpy(&ov[it + 1, 0], &ov[it, 0], d * sizeof(double))
                mixture_step(bg, &M, &ov[it + 1, 0], &K, &S.w)
    return out


def run_coupled(main, aux, int kind, double[::1] a, double[::1] b,
                double[::1] x0, double[::1] y0, double eps, Py_ssize_t L, double sigma,
                double gamma, double kappa, Py_ssize_t m, Py_ssize_t cap):
    """Coupled run returning ``(hx, hy, tau, iterations, cost_coupled, cost_single)``.

    ``hx``/``hy`` hold first and second moments per stored state; ``tau`` is
    -1 when the cap was reached before meeting.
    """
    cdef Py_ssize_t d = x0.shape[0]
    cdef Model M = _model(kind, a, b, d)
    cdef _Scratch S = _Scratch(d)
    cdef Kernel K
    K.eps = eps; K.L = L; K.sigma = sigma; K.gamma = gamma; K.kappa = kappa
    cdef bitgen_t *bg = _bitgen(main)
    cdef bitgen_t *ag = _bitgen(aux)
    cdef double *x = _alloc(d)
    cdef double *y = _alloc(d)
    cdef Rows RX, RY
    RX.data = NULL; RX.n = 0; RX.cap = 0; RX.width = 2 * d
    RY.data = NULL; RY.n = 0; RY.cap = 0; RY.width = 2 * d
    cdef Py_ssize_t n = 1, tau = -1, c_coupled = 0, c_single = 1
    cdef int rc = 0, err = 0
    memcpy(x, &x0[0], d * sizeof(double))
    memcpy(y, &y0[0], d * sizeof(double))
    same = main is aux
    lock_main = main.bit_generator.lock
    lock_aux = aux.bit_generator.lock
    try:
        lock_main.acquire()
        if not same:
            lock_aux.acquire()
        try:
            with nogil:
                err = rows_push_moments(&RX, x, d)
                mixture_step(bg, &M, x, &K, &S.w)
                err |= rows_push_moments(&RX, x, d)
                if memcmp(x, y, d * sizeof(double)) == 0:
                    tau = 1
                else:
                    err |= rows_push_moments(&RY, y, d)
                while err == 0 and (tau < 0 or n < m):
                    if tau < 0 and n >= cap:
                        break
                    if tau < 0:
                        rc = coupled_mixture(bg, ag, &M, x, y, &K, &S.w)
                        if rc < 0:
                            break
                        c_coupled += 1
                        if rc == 1:
                            tau = n + 1
                        else:
                            err |= rows_push_moments(&RY, y, d)
                    else:
                        mixture_step(bg, &M, x, &K, &S.w)
                        c_single += 1
                    n += 1
                    err |= rows_push_moments(&RX, x, d)
        finally:
            if not same:
                lock_aux.release()
            lock_main.release()
        if rc < 0:
            raise RuntimeError(
                f"maximal coupling rejection loop exceeded {MAX_COUPLING_TRIALS} trials")
        if err:
            raise MemoryError()
        hx = rows_to_array(&RX)
        hy = rows_to_array(&RY)
    finally:
        free(RX.data); free(RY.data); free(x); free(y)
    return hx, hy, tau, n, c_coupled, c_single
