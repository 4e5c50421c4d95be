# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled tape interpreter. Semantics mirror ``_pykernel.run_tape``.

Amplitudes are handled as interleaved (re, im) doubles so the inner loops
never go through the C99 complex runtime.
"""

from libc.math cimport sqrt, fabs, cos, sin
from libc.stdlib cimport malloc, free

cdef enum:
    OP_UNITARY = 0
    OP_UNITARY_STEP = 1
    OP_MEASURE = 2
    OP_CONTROLLED = 3
    OP_RESET = 4
    OP_PERMUTE = 5
    OP_PROBE = 6

cdef enum:
    MAXD = 8

cdef double DEGENERATE = 1e-15


cdef struct Gate:
    int k
    int dim
    long stride
    long tmask
    long offs[MAXD]
    int nnz
    int rows[MAXD * MAXD]
    int cols[MAXD * MAXD]
    double re[MAXD * MAXD]
    double im[MAXD * MAXD]
    # step-dependent gates: matrix = after . Rz(rate * step) . before
    int rz_bit
    double after_re[MAXD * MAXD]
    double after_im[MAXD * MAXD]
    double before_re[MAXD * MAXD]
    double before_im[MAXD * MAXD]


cdef void _prepare(Gate* gate, int n, long[:] row, double complex[:] mats) noexcept:
    cdef int k = <int>row[1]
    cdef int j, m, r, c, d
    cdef long off = row[5]
    cdef double complex v
    d = 1 << k
    gate.k = k
    gate.dim = d
    gate.stride = 1L << (n - 1 - row[2])
    gate.tmask = 0
    for m in range(k):
        gate.tmask |= 1L << (n - 1 - row[2 + m])
    for j in range(d):
        gate.offs[j] = 0
        for m in range(k):
            if (j >> (k - 1 - m)) & 1:
                gate.offs[j] |= 1L << (n - 1 - row[2 + m])
    gate.nnz = 0
    if row[0] == OP_UNITARY_STEP:
        # dense; entries are refreshed every step
        gate.rz_bit = k - 1 - <int>row[7]
        for r in range(d):
            for c in range(d):
                gate.rows[gate.nnz] = r
                gate.cols[gate.nnz] = c
                v = mats[off + r * d + c]
                gate.after_re[r * d + c] = v.real
                gate.after_im[r * d + c] = v.imag
                v = mats[off + d * d + r * d + c]
                gate.before_re[r * d + c] = v.real
                gate.before_im[r * d + c] = v.imag
                gate.nnz += 1
        return
    for r in range(d):
        for c in range(d):
            v = mats[off + r * d + c]
            if k == 1 or v.real != 0.0 or v.imag != 0.0:
                gate.rows[gate.nnz] = r
                gate.cols[gate.nnz] = c
                gate.re[gate.nnz] = v.real
                gate.im[gate.nnz] = v.imag
                gate.nnz += 1


cdef void _refresh(Gate* gate, double theta) noexcept nogil:
    # re/im <- after . diag(phase) . before, phase = Rz(theta) on rz_bit
    cdef double ar[MAXD * MAXD]
    cdef double ai[MAXD * MAXD]
    cdef int d = gate.dim, r, c, m
    cdef double c0 = cos(0.5 * theta), s0 = sin(0.5 * theta)
    cdef double pi, x, y, accr, acci
    for m in range(d):
        pi = s0 if (m >> gate.rz_bit) & 1 else -s0
        for r in range(d):
            x = gate.after_re[r * d + m]
            y = gate.after_im[r * d + m]
            ar[r * d + m] = x * c0 - y * pi
            ai[r * d + m] = x * pi + y * c0
    for r in range(d):
        for c in range(d):
            accr = 0.0
            acci = 0.0
            for m in range(d):
                accr += ar[r * d + m] * gate.before_re[m * d + c] - ai[r * d + m] * gate.before_im[m * d + c]
                acci += ar[r * d + m] * gate.before_im[m * d + c] + ai[r * d + m] * gate.before_re[m * d + c]
            gate.re[r * d + c] = accr
            gate.im[r * d + c] = acci


cdef void _apply1(double* a, long dim, Gate* gate) noexcept nogil:
    # single-qubit gate: dense 2x2 over all amplitude pairs
    cdef long step = gate.stride
    cdef double m00r = gate.re[0], m00i = gate.im[0]
    cdef double m01r = gate.re[1], m01i = gate.im[1]
    cdef double m10r = gate.re[2], m10i = gate.im[2]
    cdef double m11r = gate.re[3], m11i = gate.im[3]
    cdef long hi, lo, i, j
    cdef double xr, xi, yr, yi
    hi = 0
    while hi < dim:
        for lo in range(step):
            i = 2 * (hi + lo)
            j = i + 2 * step
            xr = a[i]
            xi = a[i + 1]
            yr = a[j]
            yi = a[j + 1]
            a[i] = m00r * xr - m00i * xi + m01r * yr - m01i * yi
            a[i + 1] = m00r * xi + m00i * xr + m01r * yi + m01i * yr
            a[j] = m10r * xr - m10i * xi + m11r * yr - m11i * yi
            a[j + 1] = m10r * xi + m10i * xr + m11r * yi + m11i * yr
        hi += 2 * step


cdef void _applyk(double* a, long dim, Gate* gate) noexcept nogil:
    # multi-qubit gate: gather, sparse multiply, scatter
    cdef double vr[MAXD]
    cdef double vi[MAXD]
    cdef double wr[MAXD]
    cdef double wi[MAXD]
    cdef long offs[MAXD]
    cdef int rows[MAXD * MAXD]
    cdef int cols[MAXD * MAXD]
    cdef double mre[MAXD * MAXD]
    cdef double mim[MAXD * MAXD]
    cdef int d = gate.dim, nnz = gate.nnz
    cdef long tmask = gate.tmask
    cdef long base, p
    cdef int j, e, r, c
    for j in range(d):
        offs[j] = gate.offs[j]
    for e in range(nnz):
        rows[e] = gate.rows[e]
        cols[e] = gate.cols[e]
        mre[e] = gate.re[e]
        mim[e] = gate.im[e]
    for base in range(dim):
        if base & tmask:
            continue
        for j in range(d):
            p = 2 * (base + offs[j])
            vr[j] = a[p]
            vi[j] = a[p + 1]
            wr[j] = 0.0
            wi[j] = 0.0
        for e in range(nnz):
            r = rows[e]
            c = cols[e]
            wr[r] += mre[e] * vr[c] - mim[e] * vi[c]
            wi[r] += mre[e] * vi[c] + mim[e] * vr[c]
        for j in range(d):
            p = 2 * (base + offs[j])
            a[p] = wr[j]
            a[p + 1] = wi[j]


cdef inline void _apply(double* a, long dim, Gate* gate) noexcept nogil:
    if gate.k == 1:
        _apply1(a, dim, gate)
    else:
        _applyk(a, dim, gate)


cdef double _upper(double* a, long dim, long mask) noexcept nogil:
    cdef double s1 = 0.0
    cdef long i
    for i in range(dim):
        if i & mask:
            s1 += a[2 * i] * a[2 * i] + a[2 * i + 1] * a[2 * i + 1]
    return s1


cdef double _lower(double* a, long dim, long mask) noexcept nogil:
    cdef double s0 = 0.0
    cdef long i
    for i in range(dim):
        if not (i & mask):
            s0 += a[2 * i] * a[2 * i] + a[2 * i + 1] * a[2 * i + 1]
    return s0


cdef int _collapse(double* a, long dim, long mask, double u, int to_zero,
                   int* outcome) noexcept nogil:
    """Measure the qubit behind ``mask``; with ``to_zero`` also flip it back to 0."""
    cdef double p1, p, scale
    cdef long i, j
    p1 = _upper(a, dim, mask)
    outcome[0] = 1 if u < p1 else 0
    p = p1 if outcome[0] else _lower(a, dim, mask)
    if p < DEGENERATE:
        return 1
    scale = 1.0 / sqrt(p)
    for i in range(dim):
        if i & mask:
            continue
        j = i | mask
        if outcome[0]:
            if to_zero:
                a[2 * i] = a[2 * j] * scale
                a[2 * i + 1] = a[2 * j + 1] * scale
                a[2 * j] = 0.0
                a[2 * j + 1] = 0.0
            else:
                a[2 * j] *= scale
                a[2 * j + 1] *= scale
                a[2 * i] = 0.0
                a[2 * i + 1] = 0.0
        else:
            a[2 * i] *= scale
            a[2 * i + 1] *= scale
            a[2 * j] = 0.0
            a[2 * j + 1] = 0.0
    return 0


def run_tape(double complex[:] amps, int n, long[:, :] ops, double[:] rates,
             double complex[:] mats, long[:] perms, double[:] uniforms, long step0,
             long steps, double[:] pops, unsigned char[:] bits, long[:] creg):
    """Run ``steps`` repetitions of the op tape in place.

    Returns ``(status, steps_done, uniforms_used, max_norm_error)``; status 1
    flags a degenerate measurement at step ``steps_done``.
    """
    cdef long dim = 1L << n
    cdef int nops = ops.shape[0]
    cdef Gate* table = <Gate*>malloc(nops * sizeof(Gate))
    cdef double* tmp = <double*>malloc(2 * dim * sizeof(double))
    cdef double* a = <double*>&amps[0]
    cdef long s = 0, i, mask, pbase, src
    cdef int o, kind, outcome, status = 0
    cdef long used = 0
    cdef double norm, err, max_err = 0.0
    if table == NULL or tmp == NULL:
        free(table)
        free(tmp)
        raise MemoryError()
    try:
        for o in range(nops):
            if ops[o, 0] in (OP_UNITARY, OP_UNITARY_STEP, OP_CONTROLLED):
                _prepare(&table[o], n, ops[o], mats)
        with nogil:
            while s < steps:
                for o in range(nops):
                    kind = <int>ops[o, 0]
                    if kind == OP_UNITARY:
                        _apply(a, dim, &table[o])
                    elif kind == OP_UNITARY_STEP:
                        _refresh(&table[o], rates[o] * (step0 + s))
                        _apply(a, dim, &table[o])
                    elif kind == OP_CONTROLLED:
                        if creg[ops[o, 6]]:
                            _apply(a, dim, &table[o])
                    elif kind == OP_MEASURE or kind == OP_RESET:
                        mask = 1L << (n - 1 - ops[o, 2])
                        status = _collapse(a, dim, mask, uniforms[used],
                                           kind == OP_RESET or ops[o, 7] != 0, &outcome)
                        used += 1
                        if status:
                            break
                        if kind == OP_MEASURE:
                            creg[ops[o, 6]] = outcome
                    elif kind == OP_PERMUTE:
                        pbase = ops[o, 5]
                        for i in range(dim):
                            src = perms[pbase + i]
                            tmp[2 * i] = a[2 * src]
                            tmp[2 * i + 1] = a[2 * src + 1]
                        for i in range(2 * dim):
                            a[i] = tmp[i]
                    elif kind == OP_PROBE:
                        pops[s] = _upper(a, dim, 1L << (n - 1 - ops[o, 2]))
                if status:
                    break
                bits[s] = <unsigned char>creg[0]
                norm = 0.0
                for i in range(2 * dim):
                    norm += a[i] * a[i]
                err = fabs(sqrt(norm) - 1.0)
                if err > max_err:
                    max_err = err
                s += 1
    finally:
        free(table)
        free(tmp)
    return status, s, used, max_err
