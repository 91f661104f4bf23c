# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled per-triangle kernels: energy sum and gradient scatter.

Same contract as ``_kernels_np``; these loops dominate the runtime of the
line searches, so they are written as straight C loops over the triangles.
"""

from libc.math cimport pow, sqrt


def energy_sum(const int[:, ::1] tri, const double[:, :, ::1] grads,
               const double[::1] area, const double[::1] u,
               double p, double g, double gamma, bint casson):
    cdef Py_ssize_t t, nt = tri.shape[0]
    cdef Py_ssize_t a0, a1, a2
    cdef double gx, gy, ng, dens
    cdef double total = 0.0
    cdef double pinv = 1.0 / p
    cdef double huber_off = 0.0
    cdef double cas = 0.0
    if g > 0.0:
        huber_off = g * g / (2.0 * gamma)
    if casson:
        cas = (4.0 / 3.0) * sqrt(g)
    for t in range(nt):
        a0 = tri[t, 0]
        a1 = tri[t, 1]
        a2 = tri[t, 2]
        gx = u[a0] * grads[t, 0, 0] + u[a1] * grads[t, 1, 0] + u[a2] * grads[t, 2, 0]
        gy = u[a0] * grads[t, 0, 1] + u[a1] * grads[t, 1, 1] + u[a2] * grads[t, 2, 1]
        ng = sqrt(gx * gx + gy * gy)
        dens = pinv * pow(ng, p)
        if casson:
            dens += cas * pow(ng, 1.5)
        if g > 0.0:
            if gamma * ng > g:
                dens += g * ng - huber_off
            else:
                dens += 0.5 * gamma * ng * ng
        total += dens * area[t]
    return total


def gradient_scatter(const int[:, ::1] tri, const double[:, :, ::1] grads,
                     const double[::1] area, const double[::1] u,
                     double p, double g, double gamma, bint casson,
                     double[::1] out):
    cdef Py_ssize_t t, nt = tri.shape[0]
    cdef Py_ssize_t a0, a1, a2
    cdef double gx, gy, ng, c, w, m
    cdef double cas = 0.0
    if casson:
        cas = 2.0 * sqrt(g)
    for t in range(nt):
        a0 = tri[t, 0]
        a1 = tri[t, 1]
        a2 = tri[t, 2]
        gx = u[a0] * grads[t, 0, 0] + u[a1] * grads[t, 1, 0] + u[a2] * grads[t, 2, 0]
        gy = u[a0] * grads[t, 0, 1] + u[a1] * grads[t, 1, 1] + u[a2] * grads[t, 2, 1]
        ng = sqrt(gx * gx + gy * gy)
        if ng == 0.0:
            # every term has limit zero along grad u -> 0
            continue
        c = pow(ng, p - 2.0)
        if casson:
            c += cas / sqrt(ng)
        if g > 0.0:
            m = gamma * ng
            if m < g:
                m = g
            c += g * gamma / m
        w = area[t] * c
        out[a0] += w * (gx * grads[t, 0, 0] + gy * grads[t, 0, 1])
        out[a1] += w * (gx * grads[t, 1, 0] + gy * grads[t, 1, 1])
        out[a2] += w * (gx * grads[t, 2, 0] + gy * grads[t, 2, 1])
