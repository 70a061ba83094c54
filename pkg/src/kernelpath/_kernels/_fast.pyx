# cython: language_level=3
"""Compiled core for the spectral recursion; see _ref.py for the contract.

Scalar loops over the modes, no Python objects inside the step loop, so
the whole horizon runs under nogil and multiple runs thread in parallel.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport INFINITY, NAN, cos, pow, sqrt

cnp.import_array()

cdef double PI = 3.14159265358979323846
cdef double SQRT2 = 1.41421356237309504880
cdef double B2_SLACK = 1e-12  # matches online_learner.ITERATE_BOUND_SLACK


cdef void _record(double[:, ::1] out, Py_ssize_t row,
                  double[::1] w, const double[::1] mu, const double[::1] c,
                  double[::1] Q, double[::1] S, double[::1] Cacc,
                  double[::1] r0, double gamma, double lam,
                  bint track) noexcept nogil:
    cdef Py_ssize_t k, N = w.shape[0]
    cdef double err2 = 0, errk2 = 0, rem2 = 0, remk2 = 0, fn2 = 0
    cdef double ei2 = 0, ea2 = 0, ed2 = 0, es2 = 0, eid2 = 0
    cdef double eik2 = 0, eak2 = 0, edk2 = 0, esk2 = 0, eidk2 = 0
    cdef double flam, d, rm, qi, idk
    for k in range(N):
        flam = c[k] * mu[k] / (mu[k] + lam)
        d = w[k] - c[k]
        rm = w[k] - flam
        err2 += d * d
        errk2 += d * d / mu[k]
        rem2 += rm * rm
        remk2 += rm * rm / mu[k]
        fn2 += w[k] * w[k] / mu[k]
        if track:
            qi = Q[k] * r0[k]
            ei2 += qi * qi
            eik2 += qi * qi / mu[k]
            d = c[k] - flam
            ea2 += d * d
            eak2 += d * d / mu[k]
            ed2 += S[k] * S[k]
            edk2 += S[k] * S[k] / mu[k]
            es2 += Cacc[k] * Cacc[k]
            esk2 += Cacc[k] * Cacc[k] / mu[k]
            idk = rm - qi + S[k]
            eid2 += idk * idk
            eidk2 += idk * idk / mu[k]
    out[row, 0] = sqrt(err2)
    out[row, 1] = sqrt(errk2)
    out[row, 2] = sqrt(rem2)
    out[row, 3] = sqrt(remk2)
    out[row, 4] = sqrt(fn2)
    out[row, 5] = gamma
    out[row, 6] = lam
    if track:
        out[row, 7] = sqrt(ei2)
        out[row, 8] = sqrt(ea2)
        out[row, 9] = sqrt(ed2)
        out[row, 10] = sqrt(es2)
        out[row, 11] = sqrt(eid2)
        out[row, 12] = sqrt(eik2)
        out[row, 13] = sqrt(eak2)
        out[row, 14] = sqrt(edk2)
        out[row, 15] = sqrt(esk2)
        out[row, 16] = sqrt(eidk2)


def run_spectral(const double[::1] mu, const double[::1] c,
                 const double[::1] xs, const double[::1] noise,
                 double a, double b, double theta, double t0,
                 const cnp.int64_t[::1] checkpoints,
                 double kappa, double m_rho,
                 bint track_decomp, bint check_b2):
    cdef Py_ssize_t N = mu.shape[0]
    cdef Py_ssize_t T = xs.shape[0]
    cdef Py_ssize_t n_cp = checkpoints.shape[0]

    out_arr = np.full((n_cp, 17), np.nan)
    w_arr = np.zeros(N)
    q_arr = np.ones(N)
    s_arr = np.zeros(N)
    cacc_arr = np.zeros(N)
    r0_arr = np.empty(N)
    phi_arr = np.empty(N)

    cdef double[:, ::1] out = out_arr
    cdef double[::1] w = w_arr, Q = q_arr, S = s_arr, Cacc = cacc_arr
    cdef double[::1] r0 = r0_arr, phi = phi_arr

    cdef double lam0 = b * pow(t0, theta - 1.0)
    cdef double lam_prev = lam0
    cdef Py_ssize_t k, cp_idx = 0
    cdef cnp.int64_t t
    cdef double tbar, gamma, lam, x, fx, frho, resid
    cdef double fac, delta, chi, fk2, bound, margin
    cdef double b2_min_margin = INFINITY
    cdef long b2_violations = 0

    for k in range(N):
        r0[k] = -c[k] * mu[k] / (mu[k] + lam0)

    with nogil:
        if n_cp > 0 and checkpoints[0] == 0:
            _record(out, 0, w, mu, c, Q, S, Cacc, r0,
                    a * pow(t0, -theta), lam0, track_decomp)
            cp_idx = 1
        for t in range(1, T + 1):
            tbar = t + t0
            gamma = a * pow(tbar, -theta)
            lam = b * pow(tbar, theta - 1.0)
            x = xs[t - 1]
            phi[0] = 1.0
            for k in range(1, N):
                phi[k] = SQRT2 * cos(PI * k * x)
            fx = 0.0
            frho = 0.0
            for k in range(N):
                fx += w[k] * phi[k]
                frho += c[k] * phi[k]
            resid = fx - (frho + noise[t - 1])
            if track_decomp:
                # accumulators use the pre-update iterate and this step's factors
                for k in range(N):
                    fac = 1.0 - gamma * (mu[k] + lam)
                    delta = c[k] * mu[k] * (lam_prev - lam) / ((mu[k] + lam) * (mu[k] + lam_prev))
                    chi = mu[k] * ((w[k] - c[k]) - resid * phi[k])
                    Q[k] *= fac
                    S[k] = fac * (S[k] + delta)
                    Cacc[k] = fac * Cacc[k] + gamma * chi
            for k in range(N):
                w[k] = (1.0 - gamma * lam) * w[k] - (gamma * resid) * mu[k] * phi[k]
            if check_b2:
                fk2 = 0.0
                for k in range(N):
                    fk2 += w[k] * w[k] / mu[k]
                bound = kappa * m_rho / lam
                margin = bound - sqrt(fk2)
                if margin < b2_min_margin:
                    b2_min_margin = margin
                if margin < -B2_SLACK * bound:
                    b2_violations += 1
            lam_prev = lam
            if cp_idx < n_cp and t == checkpoints[cp_idx]:
                _record(out, cp_idx, w, mu, c, Q, S, Cacc, r0,
                        gamma, lam, track_decomp)
                cp_idx += 1

    if not check_b2:
        b2_min_margin = NAN
    return out_arr, w_arr, int(b2_violations), float(b2_min_margin)
