# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled single-pass versions of the solver kernels in ``_kernels_py``."""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, log, log1p, tanh, fabs, sqrt

cnp.import_array()

cdef double ETA_CLIP = 700.0


cdef inline double _clip(double x) noexcept nogil:
    if x > ETA_CLIP:
        return ETA_CLIP
    if x < -ETA_CLIP:
        return -ETA_CLIP
    return x


cdef inline void _accumulate(const double[:, ::1] X, Py_ssize_t i, double g, double h,
                             double[::1] grad, double[:, ::1] hess) noexcept nogil:
    cdef Py_ssize_t j, k, p = X.shape[1]
    cdef double xj
    for j in range(p):
        xj = X[i, j]
        grad[j] += g * xj
        if h != 0.0:
            for k in range(j + 1):
                hess[j, k] += h * xj * X[i, k]


cdef inline void _symmetrize(double[:, ::1] hess) noexcept nogil:
    cdef Py_ssize_t j, k, p = hess.shape[0]
    for j in range(p):
        for k in range(j):
            hess[k, j] = hess[j, k]


cdef inline double _dot_row(const double[:, ::1] X, Py_ssize_t i, const double[::1] beta) noexcept nogil:
    cdef Py_ssize_t j
    cdef double s = 0.0
    for j in range(X.shape[1]):
        s += X[i, j] * beta[j]
    return s


def logistic_terms(const double[:, ::1] X, const double[::1] z, const double[::1] beta):
    cdef Py_ssize_t n = X.shape[0], p = X.shape[1], i
    grad_arr = np.zeros(p)
    hess_arr = np.zeros((p, p))
    cdef double[::1] grad = grad_arr
    cdef double[:, ::1] hess = hess_arr
    cdef double eta, pr, ll = 0.0
    with nogil:
        for i in range(n):
            eta = _clip(_dot_row(X, i, beta))
            if eta > 0:
                ll += z[i] * eta - eta - log1p(exp(-eta))
            else:
                ll += z[i] * eta - log1p(exp(eta))
            pr = 0.5 * (1.0 + tanh(0.5 * eta))
            _accumulate(X, i, z[i] - pr, -pr * (1.0 - pr), grad, hess)
        _symmetrize(hess)
    return ll, grad_arr, hess_arr


def mixed_logistic_terms(const double[:, ::1] X, const double[::1] z, const double[::1] beta,
                         double delta, double c):
    cdef Py_ssize_t n = X.shape[0], p = X.shape[1], i
    grad_arr = np.zeros(p)
    hess_arr = np.zeros((p, p))
    cdef double[::1] grad = grad_arr
    cdef double[:, ::1] hess = hess_arr
    cdef double v, os, r1, r2, ll = 0.0
    with nogil:
        for i in range(n):
            v = (1.0 - delta) * exp(_clip(_dot_row(X, i, beta)))
            os = v + c
            r1 = v / os
            r2 = v / (1.0 + os)
            ll -= log1p(os)
            if z[i] != 0.0:
                ll += z[i] * log(os)
            _accumulate(X, i, z[i] * r1 - r2,
                        z[i] * (r1 - r1 * r1) - (r2 - r2 * r2), grad, hess)
        _symmetrize(hess)
    return ll, grad_arr, hess_arr


def mipw_objective_terms(const double[:, ::1] X, const double[::1] z, const double[::1] beta,
                         double delta, double c):
    cdef Py_ssize_t n = X.shape[0], p = X.shape[1], i
    grad_arr = np.zeros(p)
    hess_arr = np.zeros((p, p))
    cdef double[::1] grad = grad_arr
    cdef double[:, ::1] hess = hess_arr
    cdef double v, os, r1, r2, d1, d2, log_e, log_1me, g, h, q = 0.0
    with nogil:
        for i in range(n):
            v = (1.0 - delta) * exp(_clip(_dot_row(X, i, beta)))
            os = v + c
            r1 = v / os
            r2 = v / (1.0 + os)
            log_1me = -log1p(os)
            log_e = log(os) + log_1me
            d1 = r1 - r2
            d2 = r1 - r1 * r1 - r2 + r2 * r2
            if z[i] != 0.0:
                q += (1.0 - delta) * log_e
                g = (1.0 - delta) * d1
                h = (1.0 - delta) * d2
            else:
                q += c * log_e + log_1me
                g = c * d1 - r2
                h = c * d2 - (r2 - r2 * r2)
            _accumulate(X, i, g, h, grad, hess)
        _symmetrize(hess)
    return q, grad_arr, hess_arr


def eb_dual_terms(const double[:, ::1] D, const double[::1] lam):
    cdef Py_ssize_t n = D.shape[0], d = D.shape[1], i, j, k
    q_arr = np.empty(n)
    grad_arr = np.zeros(d)
    hess_arr = np.zeros((d, d))
    cdef double[::1] q = q_arr
    cdef double[::1] grad = grad_arr
    cdef double[:, ::1] hess = hess_arr
    cdef double m = -1e308, s, total = 0.0, qi, dj
    with nogil:
        for i in range(n):
            s = _dot_row(D, i, lam)
            q[i] = s
            if s > m:
                m = s
        for i in range(n):
            q[i] = exp(q[i] - m)
            total += q[i]
        for i in range(n):
            qi = q[i] / total
            q[i] = qi
            for j in range(d):
                dj = D[i, j]
                grad[j] += qi * dj
                for k in range(j + 1):
                    hess[j, k] += qi * dj * D[i, k]
        for j in range(d):
            for k in range(j + 1):
                hess[j, k] -= grad[j] * grad[k]
        _symmetrize(hess)
    return m + log(total), grad_arr, hess_arr, q_arr


cdef int _chol_solve(double[:, ::1] A, double[::1] b, double ridge, double[:, ::1] L,
                     double[::1] out) noexcept nogil:
    # Solve (A + ridge I) out = b by Cholesky; returns 0 on success.
    cdef Py_ssize_t n = A.shape[0], i, j, k
    cdef double s
    for i in range(n):
        for j in range(i + 1):
            s = A[i, j] + (ridge if i == j else 0.0)
            for k in range(j):
                s -= L[i, k] * L[j, k]
            if i == j:
                if not s > 0.0:
                    return 1
                L[i, i] = sqrt(s)
            else:
                L[i, j] = s / L[j, j]
    for i in range(n):
        s = b[i]
        for k in range(i):
            s -= L[i, k] * out[k]
        out[i] = s / L[i, i]
    for i in range(n - 1, -1, -1):
        s = out[i]
        for k in range(i + 1, n):
            s -= L[k, i] * out[k]
        out[i] = s / L[i, i]
    return 0


def eb_dual_solve(const double[:, ::1] D, const double[::1] lam0, double tol, int max_iter,
                  double max_norm):
    """Damped Newton minimization of the entropy-balancing dual.

    Returns ``(lam, q, iterations, status, values)``; status 0 means
    converged, 1 stalled or hit ``max_iter``, 2 exceeded ``max_norm``.
    """
    cdef Py_ssize_t d = D.shape[1], j, it, ls, tries
    lam_arr = np.array(lam0, dtype=float)
    trial_arr = np.empty(d)
    step_arr = np.empty(d)
    L_arr = np.empty((d, d))
    cdef double[::1] lam = lam_arr, trial = trial_arr, step = step_arr
    cdef double[:, ::1] L = L_arr
    cdef double f, fn, gnorm, t, ridge, scale, nrm
    cdef int status = 1, iterations = 0
    f, g_arr, H_arr, q_arr = eb_dual_terms(D, lam)
    values = [f]
    cdef double[::1] g
    cdef double[:, ::1] H
    for it in range(max_iter + 1):
        g = g_arr
        H = H_arr
        gnorm = 0.0
        for j in range(d):
            gnorm += g[j] * g[j]
        if sqrt(gnorm) < tol:
            status = 0
            iterations = it
            break
        if it == max_iter:
            iterations = it
            break
        scale = 1e-12
        for j in range(d):
            if fabs(H[j, j]) > scale:
                scale = fabs(H[j, j])
        ridge = 0.0
        tries = 0
        while _chol_solve(H, g, ridge, L, step) != 0 and tries < 60:
            ridge = scale * 1e-8 if ridge == 0.0 else ridge * 10.0
            tries += 1
        if tries == 60:
            for j in range(d):
                step[j] = g[j] / scale
        t = 1.0
        accepted = False
        for ls in range(60):
            for j in range(d):
                trial[j] = lam[j] - t * step[j]
            fn, gn, Hn, qn = eb_dual_terms(D, trial)
            if fn == fn and fn <= f + 1e-13 * max(1.0, fabs(f)):
                accepted = True
                break
            t *= 0.5
        if not accepted:
            iterations = it
            break
        lam_arr[:] = trial_arr
        f, g_arr, H_arr, q_arr = fn, gn, Hn, qn
        values.append(f)
        nrm = 0.0
        for j in range(d):
            nrm += lam[j] * lam[j]
        if sqrt(nrm) > max_norm:
            status = 2
            iterations = it + 1
            break
    return lam_arr, q_arr, iterations, status, values
