# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels: photon-pair loop hafnian, chain-rule weights, permanents.

Contracts match ``gbsval._fallback``. Power traces are accumulated by
repeated multiplication of C_n X_z, which is exact in exact arithmetic and
avoids an eigensolver inside the z-sum.
"""
import numpy as np
cimport numpy as cnp
from libc.stdlib cimport malloc, free

cnp.import_array()

ctypedef double complex cplx

BACKEND = "cython"


cdef double _binom(long n, long k) noexcept nogil:
    cdef double r = 1.0
    cdef long i
    if k < 0 or k > n:
        return 0.0
    if k > n - k:
        k = n - k
    for i in range(k):
        r = r * (n - i) / (i + 1)
    return r


cdef cplx _lhafmix_core(const cplx* C, const cplx* mu, const long* n, int L) noexcept nogil:
    """C is 2L x 2L row-major, mu has length 2L, n[k] >= 0."""
    cdef int h = 0
    cdef int k, j, r, c, t, pos, N
    for k in range(L):
        h += n[k]
    if h == 0:
        return 1.0
    N = 2 * h

    cdef int* rows = <int*> malloc(N * sizeof(int))
    cdef int* plus = <int*> malloc(L * sizeof(int))
    cdef double* lam = <double*> malloc(h * sizeof(double))
    cdef cplx* Cs = <cplx*> malloc(N * N * sizeof(cplx))
    cdef cplx* ms = <cplx*> malloc(N * sizeof(cplx))
    cdef cplx* mun = <cplx*> malloc(N * sizeof(cplx))
    cdef cplx* CX = <cplx*> malloc(N * N * sizeof(cplx))
    cdef cplx* P = <cplx*> malloc(N * N * sizeof(cplx))
    cdef cplx* P2 = <cplx*> malloc(N * N * sizeof(cplx))
    cdef cplx* w = <cplx*> malloc(N * sizeof(cplx))
    cdef cplx* w2 = <cplx*> malloc(N * sizeof(cplx))
    cdef cplx* a = <cplx*> malloc((h + 1) * sizeof(cplx))
    cdef cplx* e = <cplx*> malloc((h + 1) * sizeof(cplx))
    cdef cplx total = 0.0
    cdef cplx acc, tr, coeff
    cdef double sign, weight, xd
    cdef int minus, done, L2 = 2 * L

    pos = 0
    for k in range(L):
        for j in range(n[k]):
            rows[pos] = k
            rows[pos + h] = k + L
            pos += 1
    # columns pre-swapped: Cs[:, c] = Cn[:, c +/- h]
    for r in range(N):
        mun[r] = mu[rows[r]]
        for c in range(N):
            Cs[r * N + c] = C[rows[r] * L2 + rows[(c + h) % N]]
    for c in range(N):
        ms[c] = mun[(c + h) % N]

    for k in range(L):
        plus[k] = 0
    done = 0
    while not done:
        pos = 0
        minus = 0
        weight = 1.0
        for k in range(L):
            weight *= _binom(n[k], plus[k])
            minus += n[k] - plus[k]
            for j in range(n[k]):
                lam[pos] = 1.0 if j < plus[k] else -1.0
                pos += 1
        sign = -1.0 if (minus & 1) else 1.0

        for r in range(N):
            for c in range(N):
                CX[r * N + c] = Cs[r * N + c] * lam[c % h]
        for c in range(N):
            w[c] = ms[c] * lam[c % h]
        for r in range(N * N):
            P[r] = CX[r]

        for t in range(1, h + 1):
            # trace of (CX)^t, held in P
            tr = 0.0
            for r in range(N):
                tr = tr + P[r * N + r]
            acc = 0.0
            for r in range(N):
                acc = acc + w[r] * mun[r]
            a[t] = tr / (2.0 * t) + acc / 2.0
            if t == h:
                break
            # P <- P CX, w <- w CX
            for r in range(N):
                for c in range(N):
                    P2[r * N + c] = 0.0
                for j in range(N):
                    coeff = P[r * N + j]
                    if coeff != 0:
                        for c in range(N):
                            P2[r * N + c] = P2[r * N + c] + coeff * CX[j * N + c]
            for r in range(N * N):
                P[r] = P2[r]
            for c in range(N):
                acc = 0.0
                for j in range(N):
                    acc = acc + w[j] * CX[j * N + c]
                w2[c] = acc
            for c in range(N):
                w[c] = w2[c]

        e[0] = 1.0
        for t in range(1, h + 1):
            acc = 0.0
            for j in range(1, t + 1):
                acc = acc + j * a[j] * e[t - j]
            e[t] = acc / t
        total = total + sign * weight * e[h]

        # odometer over plus[k] in 0..n[k]
        k = 0
        while k < L:
            if plus[k] < n[k]:
                plus[k] += 1
                break
            plus[k] = 0
            k += 1
        if k == L:
            done = 1

    free(rows); free(plus); free(lam); free(Cs); free(ms); free(mun)
    free(CX); free(P); free(P2); free(w); free(w2); free(a); free(e)
    for k in range(h):
        total = total / 2.0
    return total


def lhafmix(C, mu, n):
    cdef cnp.ndarray[cplx, ndim=2, mode="c"] Ca = np.ascontiguousarray(C, dtype=np.complex128)
    cdef cnp.ndarray[cplx, ndim=1, mode="c"] ma = np.ascontiguousarray(mu, dtype=np.complex128)
    cdef cnp.ndarray[long, ndim=1, mode="c"] na = np.ascontiguousarray(n, dtype=np.int64)
    cdef int L = na.shape[0]
    if Ca.shape[0] != 2 * L or Ca.shape[1] != 2 * L or ma.shape[0] != 2 * L:
        raise ValueError("C must be 2L x 2L and mu of length 2L")
    cdef cplx res
    with nogil:
        res = _lhafmix_core(&Ca[0, 0] if L else NULL, &ma[0] if L else NULL, &na[0] if L else NULL, L)
    return complex(res)


cdef double _fact(int k) noexcept nogil:
    cdef double f = 1.0
    cdef int i
    for i in range(2, k + 1):
        f *= i
    return f


def chain_weights_pure(B, beta, prefix, int cutoff):
    """|lhaf(filldiag(B_s, beta_s))|^2 / k! for s = prefix + [k], k = 0..cutoff."""
    cdef cnp.ndarray[cplx, ndim=2, mode="c"] Ba = np.ascontiguousarray(B, dtype=np.complex128)
    cdef cnp.ndarray[cplx, ndim=1, mode="c"] ba = np.ascontiguousarray(beta, dtype=np.complex128)
    cdef cnp.ndarray[long, ndim=1, mode="c"] pre = np.ascontiguousarray(prefix, dtype=np.int64)
    cdef int m = Ba.shape[0]
    cdef int npre = pre.shape[0]
    if npre != m - 1 or ba.shape[0] != m:
        raise ValueError("prefix must cover all but the last mode of B")
    cdef cnp.ndarray[double, ndim=1] out = np.empty(cutoff + 1)
    # at most m same-mode pairs + m/2 cross pairs + 1 virtual pair
    cdef int maxL = m + m // 2 + 2
    cdef long* s = <long*> malloc(m * sizeof(long))
    cdef int* first = <int*> malloc(maxL * sizeof(int))
    cdef int* second = <int*> malloc(maxL * sizeof(int))
    cdef long* mult = <long*> malloc(maxL * sizeof(long))
    cdef int* odd = <int*> malloc(m * sizeof(int))
    cdef cplx* C = <cplx*> malloc(4 * maxL * maxL * sizeof(cplx))
    cdef cplx* mu = <cplx*> malloc(2 * maxL * sizeof(cplx))
    cdef int i, k, L, nodd, q, r, c, L2, ir, ic
    cdef cplx val
    try:
        with nogil:
            for i in range(m - 1):
                s[i] = pre[i]
            for k in range(cutoff + 1):
                s[m - 1] = k
                L = 0
                nodd = 0
                for i in range(m):
                    if s[i] >= 2:
                        first[L] = i
                        second[L] = i
                        mult[L] = s[i] // 2
                        L += 1
                    if s[i] & 1:
                        odd[nodd] = i
                        nodd += 1
                q = 0
                while q + 1 < nodd:
                    first[L] = odd[q]
                    second[L] = odd[q + 1]
                    mult[L] = 1
                    L += 1
                    q += 2
                if nodd & 1:
                    first[L] = odd[nodd - 1]
                    second[L] = m
                    mult[L] = 1
                    L += 1
                L2 = 2 * L
                for r in range(L2):
                    ir = first[r] if r < L else second[r - L]
                    mu[r] = ba[ir] if ir < m else 1.0
                    for c in range(L2):
                        ic = first[c] if c < L else second[c - L]
                        C[r * L2 + c] = Ba[ir, ic] if (ir < m and ic < m) else 0.0
                val = _lhafmix_core(C, mu, mult, L)
                out[k] = (val.real * val.real + val.imag * val.imag) / _fact(k)
    finally:
        free(s); free(first); free(second); free(mult); free(odd); free(C); free(mu)
    return out


def chain_weights_mixed(A, gamma, prefix, int cutoff):
    """Re lhaf(filldiag(A_s, gamma_s)) / k! for s = prefix + [k], k = 0..cutoff."""
    cdef cnp.ndarray[cplx, ndim=2, mode="c"] Aa = np.ascontiguousarray(A, dtype=np.complex128)
    cdef cnp.ndarray[cplx, ndim=1, mode="c"] ga = np.ascontiguousarray(gamma, dtype=np.complex128)
    cdef cnp.ndarray[long, ndim=1, mode="c"] pre = np.ascontiguousarray(prefix, dtype=np.int64)
    cdef int m = Aa.shape[0] // 2
    if pre.shape[0] != m - 1 or ga.shape[0] != 2 * m:
        raise ValueError("prefix must cover all but the last mode of A")
    cdef cnp.ndarray[double, ndim=1] out = np.empty(cutoff + 1)
    cdef long* s = <long*> malloc(m * sizeof(long))
    cdef int* occ = <int*> malloc(m * sizeof(int))
    cdef long* mult = <long*> malloc(m * sizeof(long))
    cdef cplx* C = <cplx*> malloc(4 * m * m * sizeof(cplx))
    cdef cplx* mu = <cplx*> malloc(2 * m * sizeof(cplx))
    cdef int i, k, L, r, c, L2, ir, ic
    cdef cplx val
    try:
        with nogil:
            for i in range(m - 1):
                s[i] = pre[i]
            for k in range(cutoff + 1):
                s[m - 1] = k
                L = 0
                for i in range(m):
                    if s[i] > 0:
                        occ[L] = i
                        mult[L] = s[i]
                        L += 1
                L2 = 2 * L
                for r in range(L2):
                    ir = occ[r] if r < L else occ[r - L] + m
                    mu[r] = ga[ir]
                    for c in range(L2):
                        ic = occ[c] if c < L else occ[c - L] + m
                        C[r * L2 + c] = Aa[ir, ic]
                val = _lhafmix_core(C, mu, mult, L)
                out[k] = val.real / _fact(k)
    finally:
        free(s); free(occ); free(mult); free(C); free(mu)
    return out


def permanent(M):
    """Ryser formula with Gray-code column updates, O(2^n n)."""
    cdef cnp.ndarray[cplx, ndim=2, mode="c"] Ma = np.ascontiguousarray(M, dtype=np.complex128)
    cdef int n = Ma.shape[0]
    if Ma.shape[1] != n:
        raise ValueError("matrix must be square")
    if n == 0:
        return 1.0 + 0j
    cdef cplx* rs = <cplx*> malloc(n * sizeof(cplx))
    cdef unsigned long long g, prev, diff, kk, total_sets = 1ULL << n
    cdef int i, j, bit, size = 0
    cdef cplx prod, total = 0.0
    cdef double sgn
    try:
        with nogil:
            for i in range(n):
                rs[i] = 0.0
            prev = 0
            for kk in range(1, total_sets):
                g = kk ^ (kk >> 1)
                diff = g ^ prev
                bit = 0
                while not (diff >> bit) & 1:
                    bit += 1
                if g & diff:
                    for i in range(n):
                        rs[i] = rs[i] + Ma[i, bit]
                    size += 1
                else:
                    for i in range(n):
                        rs[i] = rs[i] - Ma[i, bit]
                    size -= 1
                prev = g
                prod = 1.0
                for i in range(n):
                    prod = prod * rs[i]
                sgn = -1.0 if ((n - size) & 1) else 1.0
                total = total + sgn * prod
    finally:
        free(rs)
    return complex(total)


def permanent_repeated(M, rows, cols):
    """Permanent of M with row i repeated rows[i] and column j cols[j] times."""
    cdef cnp.ndarray[cplx, ndim=2, mode="c"] Ma = np.ascontiguousarray(M, dtype=np.complex128)
    cdef cnp.ndarray[long, ndim=1, mode="c"] ra = np.ascontiguousarray(rows, dtype=np.int64)
    cdef cnp.ndarray[long, ndim=1, mode="c"] ca = np.ascontiguousarray(cols, dtype=np.int64)
    cdef int nr = ra.shape[0], nc = ca.shape[0]
    cdef long N = 0, Nc = 0
    cdef int i, j, k
    for i in range(nr):
        N += ra[i]
    for j in range(nc):
        Nc += ca[j]
    if N != Nc:
        raise ValueError("row and column multiplicities must have equal totals")
    if N == 0:
        return 1.0 + 0j
    cdef long* v = <long*> malloc(nc * sizeof(long))
    cdef cplx total = 0.0, prod, acc, base
    cdef double weight, sgn
    cdef long vs, e
    cdef int done = 0
    try:
        with nogil:
            for j in range(nc):
                v[j] = 0
            while not done:
                weight = 1.0
                vs = 0
                for j in range(nc):
                    weight *= _binom(ca[j], v[j])
                    vs += v[j]
                sgn = -1.0 if ((N - vs) & 1) else 1.0
                prod = 1.0
                for i in range(nr):
                    if ra[i] == 0:
                        continue
                    acc = 0.0
                    for j in range(nc):
                        if v[j]:
                            acc = acc + v[j] * Ma[i, j]
                    base = acc
                    for e in range(ra[i]):
                        prod = prod * base
                total = total + sgn * weight * prod
                k = 0
                while k < nc:
                    if v[k] < ca[k]:
                        v[k] += 1
                        break
                    v[k] = 0
                    k += 1
                if k == nc:
                    done = 1
    finally:
        free(v)
    return complex(total)
